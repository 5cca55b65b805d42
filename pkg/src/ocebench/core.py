"""Domain types shared by all stages: acquisition geometry, sample records,
deterministic seed derivation and the dataset manifest format.

The manifest is a JSON array of sample records; tensor paths inside it are
relative to the manifest's directory. All records are plain dicts on disk so
the format stays language neutral.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigInvalid

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_sample_seed(master_seed: int, sample_id: str) -> int:
    """64-bit FNV-1a over master_seed (8 bytes little-endian) then the id bytes.

    Deterministic and trivially portable; distinct ids collide only with
    probability ~2**-64.
    """
    h = FNV_OFFSET
    for b in (master_seed & _MASK64).to_bytes(8, "little") + sample_id.encode("utf-8"):
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class AcquisitionConfig:
    """OCT acquisition geometry and timing.

    Defaults mirror the measurement setup this dataset emulates: 30 kHz
    B-scan rate, 32 x 250 pixel B-scans over a 3 x 2 mm field of view,
    100 Hz needle excitation, 400 frames kept after cropping.
    """

    frame_rate_hz: float = 30000.0
    ascan_rate_hz: float = 1.59e6
    wavelength_m: float = 1315e-9
    lateral_pixels: int = 32
    depth_pixels: int = 250
    fov_lateral_m: float = 3e-3
    fov_depth_m: float = 2e-3
    frames_kept: int = 400
    excitation_freq_hz: float = 100.0
    needle_amplitude_m: float = 50e-6
    # Extra frames simulated before the downstream crop back to frames_kept.
    extra_frames: int = 112

    def __post_init__(self):
        numeric = (
            self.frame_rate_hz,
            self.ascan_rate_hz,
            self.wavelength_m,
            self.lateral_pixels,
            self.depth_pixels,
            self.fov_lateral_m,
            self.fov_depth_m,
            self.frames_kept,
            self.excitation_freq_hz,
            self.needle_amplitude_m,
        )
        if any(v <= 0 for v in numeric):
            raise ConfigInvalid("all acquisition parameters must be strictly positive")
        if self.extra_frames < 0:
            raise ConfigInvalid("extra_frames must be >= 0")

    @property
    def pixel_pitch_m(self) -> float:
        return self.fov_lateral_m / self.lateral_pixels

    @property
    def frame_interval_s(self) -> float:
        return 1.0 / self.frame_rate_hz

    @property
    def simulated_frames(self) -> int:
        return self.frames_kept + self.extra_frames


@dataclass
class Sample:
    """One acquisition in the dataset manifest.

    velocity_mps is the simulation ground truth; it is used only by
    evaluation and tests, never as a model input.
    """

    id: str
    concentration_pct: float
    needle_distance_m: float
    orientation_id: int
    repetition_id: int
    instance_id: int
    seed: int
    tensor_path: str
    intensity_path: str
    velocity_mps: float
    surface_index: int
    delay_s: float

    def __post_init__(self):
        if not 0.0 < self.concentration_pct < 100.0:
            raise ConfigInvalid(f"concentration_pct out of range: {self.concentration_pct}")
        if self.needle_distance_m <= 0:
            raise ConfigInvalid("needle_distance_m must be > 0")


def write_manifest(samples: list[Sample], path: str) -> None:
    rows = [asdict(s) for s in samples]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> list[Sample]:
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    return [Sample(**row) for row in rows]


def manifest_dir(path: str) -> str:
    return os.path.dirname(os.path.abspath(path))


@dataclass
class MetricsRow:
    """Per-model metrics: MAE in percentage points, rMAE = MAE / sigma, ACC."""

    model: str
    mae_pp: float
    mae_std_pp: float
    rmae: float
    rmae_std: float
    acc: float
    n_predictions: int
    error: str = ""


@dataclass
class MetricsReport:
    sigma_pp: float
    rows: list[MetricsRow] = field(default_factory=list)

    def row(self, model: str) -> MetricsRow:
        for r in self.rows:
            if r.model == model:
                return r
        raise KeyError(model)

    def to_json_dict(self) -> dict:
        return {"sigma_pp": self.sigma_pp, "rows": [asdict(r) for r in self.rows]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        return cls(sigma_pp=d["sigma_pp"], rows=[MetricsRow(**r) for r in d["rows"]])
