"""Deterministic synthetic generator of wrapped-phase shear-wave measurements.

A needle burst excites a cylindrical shear wave left of the field of view;
axial displacement below the phantom surface follows the burst retarded by
travel time r/v and scaled by (r_ref/r)^decay. Cumulative phase is
(4 pi / lambda) times displacement, plus Gaussian noise, with a configured
fraction of depth rows replaced by decorrelated speckle noise. Everything
is drawn from a single per-measurement generator in a fixed order, so a
seed fully determines the output.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import AcquisitionConfig, Sample, derive_sample_seed, write_manifest
from .errors import ConfigInvalid, NonPositiveConcentration
from .phasepipe import wrap_phase
from .tensorio import Tensor, write_tensor

DEFAULT_CONCENTRATIONS = (11.1, 8.3, 6.7, 5.6, 4.8, 4.2)
DEFAULT_DISTANCES_MM = (5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class VelocityModel:
    """Power-law calibration map from gelatin concentration to shear wave speed."""

    v_ref_mps: float = 2.5
    c_ref_pct: float = 8.3
    gamma: float = 1.25


@dataclass(frozen=True)
class PhantomSpec:
    concentration_pct: float
    velocity_model: VelocityModel = VelocityModel()
    surface_index: int = 25
    amplitude_at_fov_m: float = 300e-9
    decay_exponent: float = 0.5
    r_ref_m: float = 5e-3  # distance at which amplitude_at_fov_m applies

    def __post_init__(self):
        if self.concentration_pct <= 0:
            raise NonPositiveConcentration(str(self.concentration_pct))
        if self.surface_index < 0:
            raise ConfigInvalid("surface_index must be >= 0")
        if self.amplitude_at_fov_m < 0:
            raise ConfigInvalid("amplitude_at_fov_m must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement corruption defaults.

    jitter is the B-scan trigger timing error; the emulated setup records
    trigger signals for synchronization, so its default is small.
    """

    phase_noise_sigma_rad: float = 0.025
    dead_row_fraction: float = 0.1
    dead_row_noise_sigma_rad: float = 1.5
    jitter_sigma_frames: float = 0.01

    def __post_init__(self):
        vals = (
            self.phase_noise_sigma_rad,
            self.dead_row_fraction,
            self.dead_row_noise_sigma_rad,
            self.jitter_sigma_frames,
        )
        if any(v < 0 for v in vals):
            raise ConfigInvalid("noise parameters must be >= 0")
        if self.dead_row_fraction > 1:
            raise ConfigInvalid("dead_row_fraction must be <= 1")


@dataclass
class RawMeasurement:
    phase: Tensor  # (y, z, t), wrapped to (-pi, pi]
    intensity: Tensor  # (y, z)
    acquisition_delay_s: float
    velocity_mps: float
    surface_index: int


def concentration_to_velocity(c_pct: float, model: VelocityModel) -> float:
    """v = v_ref * (c / c_ref)^gamma; strictly increasing in c for gamma > 0."""
    if c_pct <= 0:
        raise NonPositiveConcentration(str(c_pct))
    return model.v_ref_mps * (c_pct / model.c_ref_pct) ** model.gamma


def burst_waveform(t, freq_hz: float, cycles: int = 1, amplitude: float = 1.0):
    """Hann-windowed sinusoid of `cycles` periods starting at t = 0.

    Zero outside [0, cycles/freq]; peak magnitude stays below `amplitude`.
    Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=np.float64)
    duration = cycles / freq_hz
    x = t / duration
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * x))
    carrier = np.sin(2.0 * np.pi * freq_hz * t)
    out = np.where((t >= 0.0) & (t <= duration), amplitude * window * carrier, 0.0)
    return out if out.ndim else float(out)


def simulate_measurement(
    phantom: PhantomSpec,
    acq: AcquisitionConfig,
    noise: NoiseSpec,
    needle_distance_m: float,
    seed: int,
    cycles: int = 1,
    delay_range_s: tuple | None = None,
) -> RawMeasurement:
    """One synthetic acquisition, fully determined by `seed`.

    Draw order from the per-measurement generator: acquisition delay,
    frame jitter, phase noise, dead-row choice, dead-row phase, intensity.
    The acquisition delay is uniform in [0, 1/excitation_freq) by default;
    `delay_range_s` narrows it for trigger-synchronized setups.
    """
    if needle_distance_m <= 0:
        raise ConfigInvalid("needle_distance_m must be > 0")
    if phantom.surface_index >= acq.depth_pixels:
        raise ConfigInvalid("surface_index must be < depth_pixels")
    rng = np.random.default_rng(seed)

    ny, nz, nt = acq.lateral_pixels, acq.depth_pixels, acq.simulated_frames
    dt = acq.frame_interval_s
    v = concentration_to_velocity(phantom.concentration_pct, phantom.velocity_model)

    lo, hi = delay_range_s if delay_range_s is not None else (0.0, 1.0 / acq.excitation_freq_hz)
    delay_s = float(rng.uniform(lo, hi))
    if noise.jitter_sigma_frames > 0:
        jitter = rng.normal(0.0, noise.jitter_sigma_frames, nt)
    else:
        jitter = np.zeros(nt)
    t_frames = (np.arange(nt) + jitter) * dt  # (t,)

    r = needle_distance_m + np.arange(ny) * acq.pixel_pitch_m  # (y,)
    amp = phantom.amplitude_at_fov_m * (phantom.r_ref_m / r) ** phantom.decay_exponent
    # wave already launched `delay_s` before acquisition start
    arg = t_frames[None, :] + delay_s - (r / v)[:, None]  # (y, t)
    u = amp[:, None] * burst_waveform(arg, acq.excitation_freq_hz, cycles=cycles)

    phase = np.zeros((ny, nz, nt), dtype=np.float32)
    phase[:, phantom.surface_index :, :] = (
        (4.0 * np.pi / acq.wavelength_m) * u[:, None, :]
    ).astype(np.float32)
    if noise.phase_noise_sigma_rad > 0:
        phase += noise.phase_noise_sigma_rad * rng.standard_normal((ny, nz, nt), dtype=np.float32)

    n_dead = int(round(noise.dead_row_fraction * nz))
    dead = np.sort(rng.choice(nz, size=n_dead, replace=False)) if n_dead else np.empty(0, int)
    if n_dead:
        phase[:, dead, :] = noise.dead_row_noise_sigma_rad * rng.standard_normal(
            (ny, n_dead, nt), dtype=np.float32
        )

    intensity = np.clip(rng.normal(1.0, 0.15, (ny, nz)), 0.05, None)
    if n_dead:
        intensity[:, dead] = rng.uniform(0.0, 0.02, (ny, n_dead))

    wrapped = wrap_phase(phase).astype(np.float32)
    # float32 rounding may land exactly on -pi; fold it onto +pi
    pi32 = np.float32(np.pi)
    wrapped[wrapped <= -pi32] += np.float32(2.0) * pi32

    meta = {
        "frame_interval_s": dt,
        "pixel_pitch_m": acq.pixel_pitch_m,
        "surface_index": phantom.surface_index,
        "delay_s": delay_s,
        "frames_kept": acq.frames_kept,
    }
    return RawMeasurement(
        phase=Tensor(wrapped, ("y", "z", "t"), meta=dict(meta)),
        intensity=Tensor(intensity.astype(np.float32), ("y", "z"), meta=dict(meta)),
        acquisition_delay_s=delay_s,
        velocity_mps=v,
        surface_index=phantom.surface_index,
    )


@dataclass
class DatasetConfig:
    """Everything `generate_dataset` needs; JSON-loadable with defaults."""

    concentrations_pct: tuple = DEFAULT_CONCENTRATIONS
    needle_distances_mm: tuple = DEFAULT_DISTANCES_MM
    instances: int = 2
    orientations: int = 2
    repetitions: int = 4
    instance_velocity_sigma: float = 0.03
    burst_cycles: int = 1
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    velocity_model: VelocityModel = field(default_factory=VelocityModel)
    surface_index: int = 25
    amplitude_at_fov_m: float = 300e-9
    decay_exponent: float = 0.5

    def __post_init__(self):
        if len(self.concentrations_pct) < 1:
            raise ConfigInvalid("need at least one concentration")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown dataset config keys: {sorted(unknown)}")
        if "acquisition" in d:
            d["acquisition"] = AcquisitionConfig(**d["acquisition"])
        if "noise" in d:
            d["noise"] = NoiseSpec(**d["noise"])
        if "velocity_model" in d:
            d["velocity_model"] = VelocityModel(**d["velocity_model"])
        for key in ("concentrations_pct", "needle_distances_mm"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def sample_id(c_pct: float, instance: int, orientation: int, distance_mm: float, rep: int) -> str:
    return f"c{c_pct:05.2f}_i{instance}_o{orientation}_d{int(round(distance_mm)):02d}_r{rep}"


def generate_dataset(cfg: DatasetConfig, master_seed: int, out_dir: str, threads: int = 1):
    """Write tensor files plus the JSON manifest; returns the sample list.

    Per (concentration, instance) a velocity multiplier ~ Normal(1, sigma)
    models phantom-to-phantom variability; per-sample seeds make generation
    order independent, so thread count cannot change the output.
    """
    os.makedirs(os.path.join(out_dir, "tensors"), exist_ok=True)
    r_ref = min(cfg.needle_distances_mm) * 1e-3

    multipliers = {}
    for c in cfg.concentrations_pct:
        for inst in range(cfg.instances):
            mrng = np.random.default_rng(derive_sample_seed(master_seed, f"instance:{c:.4f}:{inst}"))
            multipliers[(c, inst)] = (
                1.0 + cfg.instance_velocity_sigma * mrng.standard_normal()
                if cfg.instance_velocity_sigma > 0
                else 1.0
            )

    jobs = []
    for c in cfg.concentrations_pct:
        for inst in range(cfg.instances):
            for orient in range(cfg.orientations):
                for dist_mm in cfg.needle_distances_mm:
                    for rep in range(cfg.repetitions):
                        jobs.append((c, inst, orient, dist_mm, rep))

    def run(job):
        c, inst, orient, dist_mm, rep = job
        sid = sample_id(c, inst, orient, dist_mm, rep)
        seed = derive_sample_seed(master_seed, sid)
        mult = multipliers[(c, inst)]
        model = VelocityModel(
            v_ref_mps=cfg.velocity_model.v_ref_mps * mult,
            c_ref_pct=cfg.velocity_model.c_ref_pct,
            gamma=cfg.velocity_model.gamma,
        )
        phantom = PhantomSpec(
            concentration_pct=c,
            velocity_model=model,
            surface_index=cfg.surface_index,
            amplitude_at_fov_m=cfg.amplitude_at_fov_m,
            decay_exponent=cfg.decay_exponent,
            r_ref_m=r_ref,
        )
        meas = simulate_measurement(
            phantom, cfg.acquisition, cfg.noise, dist_mm * 1e-3, seed, cycles=cfg.burst_cycles
        )
        phase_rel = os.path.join("tensors", f"{sid}_phase.oct")
        inten_rel = os.path.join("tensors", f"{sid}_intensity.oct")
        write_tensor(meas.phase, os.path.join(out_dir, phase_rel))
        write_tensor(meas.intensity, os.path.join(out_dir, inten_rel))
        return Sample(
            id=sid,
            concentration_pct=c,
            needle_distance_m=dist_mm * 1e-3,
            orientation_id=orient,
            repetition_id=rep,
            instance_id=inst,
            seed=seed,
            tensor_path=phase_rel,
            intensity_path=inten_rel,
            velocity_mps=meas.velocity_mps,
            surface_index=meas.surface_index,
            delay_s=meas.acquisition_delay_s,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(run, jobs))
    else:
        samples = [run(j) for j in jobs]

    samples.sort(key=lambda s: s.id)
    write_manifest(samples, os.path.join(out_dir, "manifest.json"))
    with open(os.path.join(out_dir, "dataset_config.json"), "w", encoding="utf-8") as fh:
        json.dump(_config_to_dict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return samples


def _config_to_dict(cfg: DatasetConfig) -> dict:
    from dataclasses import asdict

    d = asdict(cfg)
    d["concentrations_pct"] = list(cfg.concentrations_pct)
    d["needle_distances_mm"] = list(cfg.needle_distances_mm)
    return d
