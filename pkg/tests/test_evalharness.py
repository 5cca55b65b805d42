import math

import numpy as np
import pytest

from ocebench.core import Sample, derive_sample_seed
from ocebench.errors import BadCounts, UndefinedCorrelation
from ocebench.evalharness import (
    MODEL_ORDER,
    PreparedSample,
    ProtocolConfig,
    acc,
    dataset_sigma,
    fig3_csv,
    mae,
    make_sixfold_plan,
    render_report,
    report_from_csv,
    report_from_json,
    report_to_csv,
    report_to_json,
    rmae,
    run_protocol,
)

CONCENTRATIONS = (11.1, 8.3, 6.7, 5.6, 4.8, 4.2)


def fake_samples(concentrations=CONCENTRATIONS, per_distance=16):
    samples = []
    for c in concentrations:
        i = 0
        for d_mm in (5.0, 10.0, 15.0, 20.0):
            for k in range(per_distance):
                sid = f"c{c:05.2f}_d{int(d_mm):02d}_n{k}"
                samples.append(
                    Sample(
                        id=sid,
                        concentration_pct=c,
                        needle_distance_m=d_mm * 1e-3,
                        orientation_id=k % 2,
                        repetition_id=k % 4,
                        instance_id=k % 2,
                        seed=derive_sample_seed(0, sid),
                        tensor_path=f"t/{sid}.oct",
                        intensity_path=f"t/{sid}_i.oct",
                        velocity_mps=2.5 * (c / 8.3) ** 1.25,
                        surface_index=25,
                        delay_s=0.0,
                    )
                )
                i += 1
    return samples


class TestFoldPlan:
    def test_six_folds_each_held_out_once(self):
        folds = make_sixfold_plan(fake_samples(), seed=0)
        assert len(folds) == 6
        assert sorted(f.held_out_concentration for f in folds) == sorted(CONCENTRATIONS)

    def test_split_sizes(self):
        for f in make_sixfold_plan(fake_samples(), seed=0):
            assert len(f.test_ids) == 32
            assert len(f.validation_ids) == 32
            assert len(f.optimization_ids) == 320

    def test_test_val_partition(self):
        samples = fake_samples()
        by_id = {s.id: s for s in samples}
        for f in make_sixfold_plan(samples, seed=0):
            held = {s.id for s in samples if s.concentration_pct == f.held_out_concentration}
            assert set(f.test_ids) | set(f.validation_ids) == held
            assert not set(f.test_ids) & set(f.validation_ids)
            for sid in f.optimization_ids:
                assert by_id[sid].concentration_pct != f.held_out_concentration

    def test_stratified_over_distance(self):
        samples = fake_samples()
        by_id = {s.id: s for s in samples}
        for f in make_sixfold_plan(samples, seed=3):
            for subset in (f.test_ids, f.validation_ids):
                counts = {}
                for sid in subset:
                    counts[by_id[sid].needle_distance_m] = counts.get(by_id[sid].needle_distance_m, 0) + 1
                assert sorted(counts.values()) == [8, 8, 8, 8]

    def test_no_leakage(self):
        for f in make_sixfold_plan(fake_samples(), seed=1):
            assert not set(f.optimization_ids) & (set(f.test_ids) | set(f.validation_ids))

    def test_deterministic(self):
        a = make_sixfold_plan(fake_samples(), seed=5)
        b = make_sixfold_plan(fake_samples(), seed=5)
        assert a == b

    def test_seed_changes_split(self):
        a = make_sixfold_plan(fake_samples(), seed=5)
        b = make_sixfold_plan(fake_samples(), seed=6)
        assert any(fa.test_ids != fb.test_ids for fa, fb in zip(a, b))

    def test_bad_counts(self):
        with pytest.raises(BadCounts):
            make_sixfold_plan(fake_samples()[:-1], seed=0)


class TestMetrics:
    def test_sigma_matches_reference(self):
        assert dataset_sigma(CONCENTRATIONS) == pytest.approx(2.3434, abs=1e-4)

    def test_sigma_ignores_repetition(self):
        assert dataset_sigma([11.1] * 64 + [4.2] * 64) == dataset_sigma([11.1, 4.2])

    def test_perfect_predictions(self):
        t = np.array([1.0, 2.0, 3.0])
        assert mae(t, t) == 0.0
        assert acc(t, t) == pytest.approx(1.0)

    def test_constant_offset(self):
        t = np.array([1.0, 2.0, 3.0])
        assert mae(t + 1, t) == pytest.approx(1.0)
        assert acc(t + 1, t) == pytest.approx(1.0)

    def test_rmae_relation(self):
        assert rmae(1.57, 2.3434) == pytest.approx(1.57 / 2.3434, rel=1e-15)

    def test_acc_constant_raises(self):
        with pytest.raises(UndefinedCorrelation):
            acc(np.ones(5), np.arange(5.0))


def velocity_only_prepared(samples, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for s in samples:
        v = s.velocity_mps * (1.0 + noise * rng.standard_normal())
        out[s.id] = PreparedSample(sample=s, velocity_mps=v, map_path="", volume_path="")
    return out


class TestProtocol:
    def test_shallow_models_report(self):
        samples = fake_samples()
        prepared = velocity_only_prepared(samples)
        folds = make_sixfold_plan(samples, seed=0)
        cfg = ProtocolConfig()
        report, predictions, imputed = run_protocol(
            prepared, folds, ["LR", "SVR-lin", "MLP-50"], cfg, seed=0
        )
        assert [r.model for r in report.rows] == ["LR", "SVR-lin", "MLP-50"]
        for r in report.rows:
            assert r.error == ""
            assert r.n_predictions == 192
            assert r.rmae * report.sigma_pp == pytest.approx(r.mae_pp, abs=1e-12)
            assert r.mae_pp < 1.5  # clean synthetic features are easy
        assert len(predictions) == 3 * 192
        assert imputed == 0

    def test_failed_extraction_imputed(self):
        samples = fake_samples()
        prepared = velocity_only_prepared(samples)
        dead = list(prepared)[::10]
        for sid in dead:
            prepared[sid].velocity_mps = float("nan")
        folds = make_sixfold_plan(samples, seed=0)
        report, _, imputed = run_protocol(prepared, folds, ["LR"], ProtocolConfig(), seed=0)
        assert imputed > 0
        assert report.rows[0].error == ""
        assert math.isfinite(report.rows[0].mae_pp)

    def test_model_isolation(self):
        samples = fake_samples()
        prepared = velocity_only_prepared(samples)
        for sid in prepared:
            prepared[sid].velocity_mps = float("nan")  # all features dead: LR still works via imputation
        folds = make_sixfold_plan(samples, seed=0)
        report, _, _ = run_protocol(prepared, folds, ["SVR-RBF", "LR"], ProtocolConfig(), seed=0)
        assert len(report.rows) == 2

    def test_determinism(self):
        samples = fake_samples()
        folds = make_sixfold_plan(samples, seed=2)
        r1, p1, _ = run_protocol(velocity_only_prepared(samples), folds, ["MLP-50"], ProtocolConfig(), seed=2)
        r2, p2, _ = run_protocol(velocity_only_prepared(samples), folds, ["MLP-50"], ProtocolConfig(), seed=2)
        assert report_to_json(r1) == report_to_json(r2)
        assert p1 == p2

    def test_model_order_constant(self):
        assert MODEL_ORDER == ["LR", "SVR-lin", "SVR-RBF", "MLP-50", "MLP-100", "CNN-1Dt", "CNN-2Dt"]

    def test_dropping_a_model_leaves_others_unchanged(self):
        samples = fake_samples()
        folds = make_sixfold_plan(samples, seed=1)
        both, _, _ = run_protocol(velocity_only_prepared(samples), folds, ["LR", "MLP-50"], ProtocolConfig(), seed=1)
        alone, _, _ = run_protocol(velocity_only_prepared(samples), folds, ["MLP-50"], ProtocolConfig(), seed=1)
        assert report_to_json(
            type(both)(sigma_pp=both.sigma_pp, rows=[both.row("MLP-50")])
        ) == report_to_json(alone)


class TestRendering:
    def make_report(self):
        samples = fake_samples()
        prepared = velocity_only_prepared(samples)
        folds = make_sixfold_plan(samples, seed=0)
        report, _, _ = run_protocol(prepared, folds, ["LR", "SVR-lin"], ProtocolConfig(), seed=0)
        return report

    def test_json_csv_json_roundtrip(self):
        report = self.make_report()
        once = report_from_csv(report_to_csv(report))
        assert report_to_json(once) == report_to_json(report)
        twice = report_from_json(report_to_json(once))
        assert report_to_csv(twice) == report_to_csv(report)

    def test_table_lines(self):
        table = render_report(self.make_report(), "table")
        assert "LR" in table and "SVR (Linear)" in table

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_report(self.make_report(), "yaml")

    def test_fig3_rows(self):
        samples = fake_samples()
        velocities = {s.id: s.velocity_mps for s in samples}
        text = fig3_csv(samples, velocities)
        lines = text.strip().split("\n")
        assert len(lines) == 1 + 6
        concs = [float(ln.split(",")[0]) for ln in lines[1:]]
        assert concs == sorted(concs)
        means = [float(ln.split(",")[1]) for ln in lines[1:]]
        assert all(a < b for a, b in zip(means, means[1:]))
