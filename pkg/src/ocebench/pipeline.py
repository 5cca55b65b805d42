"""Stage orchestration shared by the CLI and the evaluation entry point:
preprocessing raw measurements into map/volume files, velocity extraction,
and assembling the prepared per-sample inputs for the protocol.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import Sample, read_manifest
from .errors import OcebenchError
from .evalharness import PreparedSample
from .phasepipe import SpatioTemporalMap, preprocess
from .presets import Preset
from .tensorio import Tensor, read_tensor, write_tensor
from .velocity import estimate_velocity

# estimates below this fit quality behave like extraction failures downstream
MIN_FIT_R2 = 0.5
MIN_FIT_POINTS = 8


def pool_volume(values: np.ndarray, z_out: int | None, t_pool: int) -> np.ndarray:
    """Average-pool a (y, z, t) volume to the preset's CNN input size."""
    out = values
    if z_out is not None and out.shape[1] > z_out:
        chunks = np.array_split(np.arange(out.shape[1]), z_out)
        out = np.stack([out[:, c, :].mean(axis=1) for c in chunks], axis=1)
    if t_pool > 1:
        t_keep = (out.shape[2] // t_pool) * t_pool
        out = out[:, :, :t_keep].reshape(out.shape[0], out.shape[1], -1, t_pool).mean(axis=3)
    return out


def preprocess_sample(sample: Sample, base_dir: str, out_dir: str, preset: Preset) -> dict:
    phase = read_tensor(os.path.join(base_dir, sample.tensor_path))
    inten = read_tensor(os.path.join(base_dir, sample.intensity_path))
    meta = phase.meta
    vol, st_map = preprocess(
        phase.data,
        inten.data,
        surface_index=int(sample.surface_index),
        frames_kept=int(meta.get("frames_kept", 400)),
        frame_interval_s=float(meta["frame_interval_s"]),
        pixel_pitch_m=float(meta["pixel_pitch_m"]),
    )
    map_rel = os.path.join("maps", f"{sample.id}.oct")
    vol_rel = os.path.join("vols", f"{sample.id}.oct")
    write_tensor(st_map.to_tensor(), os.path.join(out_dir, map_rel))
    pooled = pool_volume(vol.values, preset.volume_z_out, preset.volume_t_pool)
    write_tensor(
        Tensor(pooled.astype(np.float32), ("y", "z", "t"), meta=dict(st_map.to_tensor().meta)),
        os.path.join(out_dir, vol_rel),
    )
    return {"id": sample.id, "map": map_rel, "volume": vol_rel}


def run_preprocess(manifest_path: str, out_dir: str, preset: Preset, threads: int = 1) -> dict:
    samples = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(os.path.join(out_dir, "maps"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "vols"), exist_ok=True)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda s: preprocess_sample(s, base, out_dir, preset), samples))
    else:
        rows = [preprocess_sample(s, base, out_dir, preset) for s in samples]
    rows.sort(key=lambda r: r["id"])
    pm = {"preset": preset.name, "samples": rows}
    with open(os.path.join(out_dir, "preproc_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(pm, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return pm


def run_velocity(manifest_path: str, preproc_dir: str, out_csv: str) -> dict:
    """Wavefront velocity per sample; NaN columns when extraction fails.

    The CSV keeps every estimate; the returned feature dict additionally
    treats poor fits (low r^2 or too few track points) as failures.
    """
    samples = {s.id: s for s in read_manifest(manifest_path)}
    with open(os.path.join(preproc_dir, "preproc_manifest.json"), "r", encoding="utf-8") as fh:
        pm = json.load(fh)
    lines = ["sample_id,concentration_pct,v_px_per_frame,v_mps,r_squared"]
    velocities = {}
    for row in pm["samples"]:
        sid = row["id"]
        st_map = SpatioTemporalMap.from_tensor(read_tensor(os.path.join(preproc_dir, row["map"])))
        conc = samples[sid].concentration_pct
        try:
            est = estimate_velocity(st_map)
            if est.r_squared < MIN_FIT_R2 or est.n_points < MIN_FIT_POINTS:
                raise OcebenchError("low-quality track counts as failed extraction")
            velocities[sid] = est.v_mps
            lines.append(f"{sid},{conc!r},{est.v_px_per_frame!r},{est.v_mps!r},{est.r_squared!r}")
        except OcebenchError:
            velocities[sid] = float("nan")
            lines.append(f"{sid},{conc!r},nan,nan,nan")
    with open(out_csv, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return velocities


def read_velocities_csv(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for ln in fh:
            parts = ln.strip().split(",")
            if len(parts) >= 4 and parts[0]:
                out[parts[0]] = float(parts[3])
    return out


def prepare_samples(manifest_path: str, preproc_dir: str, velocities: dict) -> dict:
    """id -> PreparedSample with absolute artifact paths."""
    samples = read_manifest(manifest_path)
    with open(os.path.join(preproc_dir, "preproc_manifest.json"), "r", encoding="utf-8") as fh:
        pm = json.load(fh)
    paths = {r["id"]: r for r in pm["samples"]}
    prepared = {}
    for s in samples:
        row = paths[s.id]
        prepared[s.id] = PreparedSample(
            sample=s,
            velocity_mps=velocities.get(s.id, float("nan")),
            map_path=os.path.join(preproc_dir, row["map"]),
            volume_path=os.path.join(preproc_dir, row["volume"]),
        )
    return prepared


def ensure_stages(manifest_path: str, work_dir: str, preset: Preset, threads: int = 1):
    """Run preprocess and velocity stages unless their outputs already exist."""
    pm_path = os.path.join(work_dir, "preproc_manifest.json")
    if not os.path.exists(pm_path):
        run_preprocess(manifest_path, work_dir, preset, threads)
    else:
        with open(pm_path, "r", encoding="utf-8") as fh:
            if json.load(fh).get("preset") != preset.name:
                run_preprocess(manifest_path, work_dir, preset, threads)
    vel_csv = os.path.join(work_dir, "velocities.csv")
    if not os.path.exists(vel_csv):
        velocities = run_velocity(manifest_path, work_dir, vel_csv)
    else:
        velocities = read_velocities_csv(vel_csv)
    return prepare_samples(manifest_path, work_dir, velocities), velocities
