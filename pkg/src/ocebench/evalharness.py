"""Leave-one-concentration-out protocol, metrics and report rendering.

Six folds, one per gelatin concentration; the held-out concentration's 64
samples split 32/32 into test and validation (stratified over needle
distance, 8 per distance per subset); the other five concentrations form
the optimization set. Hyperparameters are tuned on the validation subset
only: grid search for SVR, best-epoch selection for MLPs and CNNs.

MAE and rMAE are reported as mean and std of the per-sample absolute
errors pooled over all test folds; rMAE divides by the population std of
the distinct concentration values; ACC is the Pearson correlation of the
pooled predictions (per-fold targets are constant, so pooling is the only
well-defined reading).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import MetricsReport, MetricsRow, Sample, derive_sample_seed
from .errors import BadCounts, NoConvergence, UndefinedCorrelation
from .nn import ArrayDataset, TrainConfig, build_cnn, build_mlp, train_model
from .nn.models import CnnArch
from .nn.training import LazyTensorDataset, predict_dataset
from .shallow import FeatureScaler, fit_linreg, fit_svr

MODEL_ORDER = ["LR", "SVR-lin", "SVR-RBF", "MLP-50", "MLP-100", "CNN-1Dt", "CNN-2Dt"]
DISPLAY_NAMES = {
    "LR": "LR",
    "SVR-lin": "SVR (Linear)",
    "SVR-RBF": "SVR (RBF)",
    "MLP-50": "MLP (50,50)",
    "MLP-100": "MLP (100,100)",
    "CNN-1Dt": "1D+t CNN",
    "CNN-2Dt": "2D+t CNN",
}

SVR_C_GRID = (1.0, 10.0, 100.0)
SVR_EPS_GRID = (0.05, 0.1, 0.5)
SVR_GAMMA_GRID = (0.1, 1.0, 10.0)


@dataclass
class Fold:
    held_out_concentration: float
    test_ids: list
    validation_ids: list
    optimization_ids: list


def make_sixfold_plan(samples: list[Sample], seed: int) -> list[Fold]:
    """One fold per concentration, 32/32 test/validation split stratified
    over needle distance (8 per distance per subset)."""
    by_conc: dict = {}
    for s in samples:
        by_conc.setdefault(s.concentration_pct, []).append(s)
    folds = []
    for c in sorted(by_conc, reverse=True):
        group = by_conc[c]
        if len(group) != 64:
            raise BadCounts(f"concentration {c}: {len(group)} samples, need 64")
        by_dist: dict = {}
        for s in group:
            by_dist.setdefault(s.needle_distance_m, []).append(s)
        if any(len(g) != 16 for g in by_dist.values()):
            raise BadCounts(f"concentration {c}: need 16 samples per needle distance")
        rng = np.random.default_rng(derive_sample_seed(seed, f"fold:{c:.4f}"))
        test_ids, val_ids = [], []
        for d in sorted(by_dist):
            ids = sorted(s.id for s in by_dist[d])
            perm = rng.permutation(len(ids))
            test_ids += [ids[k] for k in perm[:8]]
            val_ids += [ids[k] for k in perm[8:]]
        opt_ids = sorted(s.id for s in samples if s.concentration_pct != c)
        folds.append(
            Fold(
                held_out_concentration=c,
                test_ids=sorted(test_ids),
                validation_ids=sorted(val_ids),
                optimization_ids=opt_ids,
            )
        )
    return folds


def mae(pred, true) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.size == 0 or pred.shape != true.shape:
        raise ValueError("pred and true must be equal-length, non-empty")
    return float(np.mean(np.abs(pred - true)))


def rmae(mae_value: float, sigma: float) -> float:
    return mae_value / sigma


def acc(pred, true) -> float:
    """Pearson correlation coefficient."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.std() == 0.0 or true.std() == 0.0:
        raise UndefinedCorrelation("constant series")
    return float(np.corrcoef(pred, true)[0, 1])


def dataset_sigma(concentrations) -> float:
    """Population std of the distinct concentration values, equal weights."""
    vals = np.unique(np.asarray(concentrations, dtype=np.float64))
    return float(vals.std())


@dataclass
class PreparedSample:
    """Per-sample evaluation inputs produced by the preprocessing stages."""

    sample: Sample
    velocity_mps: float  # estimated; NaN when extraction failed
    map_path: str
    volume_path: str


@dataclass
class ProtocolConfig:
    k0: int = 8
    input_scale: float = 10.0  # phase-difference values span ~0.1 rad/frame
    cnn_train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=12, patience=6))
    mlp_train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=60, patience=30))


@dataclass
class Prediction:
    model: str
    fold: float
    sample_id: str
    true_pct: float
    pred_pct: float


def _velocity_features(prepared: dict, fold: Fold):
    """Imputed velocity features for one fold; failures get the mean of the
    successful optimization-set extractions."""
    opt_v = [prepared[i].velocity_mps for i in fold.optimization_ids]
    ok = [v for v in opt_v if math.isfinite(v)]
    fill = float(np.mean(ok)) if ok else 0.0

    def feat(ids):
        return np.array(
            [prepared[i].velocity_mps if math.isfinite(prepared[i].velocity_mps) else fill for i in ids]
        )

    n_imputed = sum(
        0 if math.isfinite(prepared[i].velocity_mps) else 1
        for i in fold.optimization_ids + fold.validation_ids + fold.test_ids
    )
    return feat(fold.optimization_ids), feat(fold.validation_ids), feat(fold.test_ids), n_imputed


def _targets(prepared: dict, ids) -> np.ndarray:
    return np.array([prepared[i].sample.concentration_pct for i in ids])


def _fit_predict_lr(xo, yo, xv, yv, xt):
    model = fit_linreg(xo, yo)
    return model.predict(xt)


def _fit_predict_svr(xo, yo, xv, yv, xt, kernel: str):
    scaler = FeatureScaler.fit(xo)
    so, sv, st = scaler.transform(xo), scaler.transform(xv), scaler.transform(xt)
    gammas = SVR_GAMMA_GRID if kernel == "rbf" else (1.0,)
    best = None
    for c in SVR_C_GRID:
        for eps in SVR_EPS_GRID:
            for g in gammas:
                try:
                    model = fit_svr(so, yo, kernel=kernel, C=c, epsilon=eps, gamma=g)
                except NoConvergence:
                    continue  # ill-conditioned grid point; tuning skips it
                val_mae = mae(model.predict(sv), yv)
                if best is None or val_mae < best[0]:
                    best = (val_mae, model)
    if best is None:
        raise NoConvergence("no SVR hyperparameter candidate converged")
    return best[1].predict(st)


def _fit_predict_mlp(xo, yo, xv, yv, xt, hidden: int, cfg: TrainConfig, seed: int):
    scaler = FeatureScaler.fit(xo)
    model = build_mlp(hidden, seed=seed)
    ds = ArrayDataset(scaler.transform(xo).reshape(-1, 1).astype(np.float32))
    vs = ArrayDataset(scaler.transform(xv).reshape(-1, 1).astype(np.float32))
    train_model(model, ds, yo, vs, yv, cfg)
    return model.predict(scaler.transform(xt).reshape(-1, 1).astype(np.float32))


def _fit_predict_cnn(prepared, fold, rank, cfg_train, k0, input_scale, seed):
    scale = np.float32(input_scale)

    def transform(arr):
        return (arr * scale)[None, ...]  # add channel axis

    key = "map_path" if rank == 1 else "volume_path"
    paths = {i: getattr(prepared[i], key) for i in prepared}
    ds = LazyTensorDataset([paths[i] for i in fold.optimization_ids], transform)
    vs = LazyTensorDataset([paths[i] for i in fold.validation_ids], transform)
    ts = LazyTensorDataset([paths[i] for i in fold.test_ids], transform)
    yo = _targets(prepared, fold.optimization_ids)
    yv = _targets(prepared, fold.validation_ids)
    model = build_cnn(CnnArch(rank=rank, k0=k0), seed=seed)
    train_model(model, ds, yo, vs, yv, cfg_train)
    return predict_dataset(model, ts, cfg_train.batch_size)


def run_protocol(
    prepared: dict,
    folds: list[Fold],
    models: list[str],
    cfg: ProtocolConfig,
    seed: int,
):
    """Run every requested model over every fold.

    Returns (MetricsReport, predictions, imputed_count). Model failures are
    isolated: a failing model gets an error row, the others still report.
    """
    sigma = dataset_sigma([p.sample.concentration_pct for p in prepared.values()])
    report = MetricsReport(sigma_pp=sigma)
    predictions: list[Prediction] = []
    imputed_total = 0

    for f in folds:
        _, _, _, n_imp = _velocity_features(prepared, f)
        imputed_total += n_imp

    for key in models:
        preds_all, true_all = [], []
        try:
            for fi, fold in enumerate(folds):
                mseed = derive_sample_seed(seed, f"{key}:fold{fi}")
                tseed = derive_sample_seed(seed, f"{key}:fold{fi}:shuffle")
                yo = _targets(prepared, fold.optimization_ids)
                yv = _targets(prepared, fold.validation_ids)
                yt = _targets(prepared, fold.test_ids)
                if key in ("LR", "SVR-lin", "SVR-RBF", "MLP-50", "MLP-100"):
                    xo, xv, xt, _ = _velocity_features(prepared, fold)
                if key == "LR":
                    pred = _fit_predict_lr(xo, yo, xv, yv, xt)
                elif key == "SVR-lin":
                    pred = _fit_predict_svr(xo, yo, xv, yv, xt, "linear")
                elif key == "SVR-RBF":
                    pred = _fit_predict_svr(xo, yo, xv, yv, xt, "rbf")
                elif key in ("MLP-50", "MLP-100"):
                    hidden = 50 if key == "MLP-50" else 100
                    tcfg = TrainConfig(**{**vars(cfg.mlp_train), "seed": tseed})
                    pred = _fit_predict_mlp(xo, yo, xv, yv, xt, hidden, tcfg, mseed)
                elif key in ("CNN-1Dt", "CNN-2Dt"):
                    rank = 1 if key == "CNN-1Dt" else 2
                    tcfg = TrainConfig(**{**vars(cfg.cnn_train), "seed": tseed})
                    pred = _fit_predict_cnn(
                        prepared, fold, rank, tcfg, cfg.k0, cfg.input_scale, mseed
                    )
                else:
                    raise ValueError(f"unknown model {key!r}")
                pred = np.asarray(pred, dtype=np.float64)
                preds_all.append(pred)
                true_all.append(yt)
                for sid, t, p in zip(fold.test_ids, yt, pred):
                    predictions.append(Prediction(key, fold.held_out_concentration, sid, float(t), float(p)))
        except Exception as exc:  # noqa: BLE001 - isolation is the contract
            report.rows.append(
                MetricsRow(
                    model=key, mae_pp=float("nan"), mae_std_pp=float("nan"), rmae=float("nan"),
                    rmae_std=float("nan"), acc=float("nan"), n_predictions=0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
            continue
        pred = np.concatenate(preds_all)
        true = np.concatenate(true_all)
        abs_err = np.abs(pred - true)
        m = float(abs_err.mean())
        s = float(abs_err.std())
        report.rows.append(
            MetricsRow(
                model=key,
                mae_pp=m,
                mae_std_pp=s,
                rmae=m / sigma,
                rmae_std=s / sigma,
                acc=acc(pred, true),
                n_predictions=int(pred.size),
            )
        )
    return report, predictions, imputed_total


def predictions_to_csv(predictions: list[Prediction]) -> str:
    lines = ["model,held_out_concentration,sample_id,true_pct,pred_pct"]
    for p in predictions:
        lines.append(f"{p.model},{p.fold!r},{p.sample_id},{p.true_pct!r},{p.pred_pct!r}")
    return "\n".join(lines) + "\n"


def fig3_csv(samples: list[Sample], velocities: dict) -> str:
    """Velocity-vs-concentration summary over successful extractions."""
    by_conc: dict = {}
    for s in samples:
        v = velocities.get(s.id, float("nan"))
        if math.isfinite(v):
            by_conc.setdefault(s.concentration_pct, []).append(v)
    lines = ["concentration_pct,velocity_mean_mps,velocity_std_mps,n"]
    for c in sorted(by_conc):
        vals = np.asarray(by_conc[c])
        lines.append(f"{c!r},{float(vals.mean())!r},{float(vals.std())!r},{vals.size}")
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricsReport, extra: dict | None = None) -> str:
    d = report.to_json_dict()
    if extra:
        d.update(extra)
    return json.dumps(d, indent=1, sort_keys=True) + "\n"


def report_from_json(text: str) -> MetricsReport:
    return MetricsReport.from_json_dict(json.loads(text))


def report_to_csv(report: MetricsReport) -> str:
    lines = ["model,mae_pp,mae_std_pp,rmae,rmae_std,acc,n_predictions,error"]
    for r in report.rows:
        lines.append(
            f"{r.model},{r.mae_pp!r},{r.mae_std_pp!r},{r.rmae!r},{r.rmae_std!r},"
            f"{r.acc!r},{r.n_predictions},{r.error}"
        )
    lines.append(f"_sigma,{report.sigma_pp!r},,,,,,")
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> MetricsReport:
    rows = []
    sigma = float("nan")
    lines = [ln for ln in text.strip().split("\n")[1:] if ln]
    for ln in lines:
        parts = ln.split(",")
        if parts[0] == "_sigma":
            sigma = float(parts[1])
            continue
        rows.append(
            MetricsRow(
                model=parts[0],
                mae_pp=float(parts[1]),
                mae_std_pp=float(parts[2]),
                rmae=float(parts[3]),
                rmae_std=float(parts[4]),
                acc=float(parts[5]),
                n_predictions=int(parts[6]),
                error=parts[7] if len(parts) > 7 else "",
            )
        )
    return MetricsReport(sigma_pp=sigma, rows=rows)


def report_to_table(report: MetricsReport) -> str:
    out = io.StringIO()
    out.write(f"{'model':<16}{'MAE (p.p.)':>16}{'rMAE':>16}{'ACC':>8}\n")
    for r in report.rows:
        name = DISPLAY_NAMES.get(r.model, r.model)
        if r.error:
            out.write(f"{name:<16}{'failed: ' + r.error}\n")
            continue
        out.write(
            f"{name:<16}{r.mae_pp:>8.2f} ± {r.mae_std_pp:<5.2f}"
            f"{r.rmae:>8.2f} ± {r.rmae_std:<5.2f}{r.acc:>8.2f}\n"
        )
    out.write(f"(rMAE relative to sigma = {report.sigma_pp:.4f} p.p.)\n")
    return out.getvalue()


def render_report(report: MetricsReport, fmt: str) -> str:
    if fmt == "table":
        return report_to_table(report)
    if fmt == "csv":
        return report_to_csv(report)
    if fmt == "json":
        return report_to_json(report)
    raise ValueError(f"unknown format {fmt!r}")


def save_report(report: MetricsReport, path: str, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report, extra))


def load_report(path: str) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_json(fh.read())
