"""Preprocessing chain from raw wrapped phase to the cropped phase-difference
volume and the lateral-position x time map.

Order: temporal unwrap -> frame-to-frame difference -> crop to the kept
frame count -> crop above the phantom surface -> row quality mask ->
3x3x3 median filter -> masked mean over depth. The crops run right after
the difference so the map keeps the full kept-frame count.

All functions are pure; row vectors/volumes are numpy arrays with axes
(y, z, t) unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AllRowsMasked, IndexOutOfRange, TooFewFrames
from .tensorio import Tensor

TWO_PI = 2.0 * np.pi


def wrap_phase(values: np.ndarray) -> np.ndarray:
    """Map values into (-pi, pi]."""
    v = np.asarray(values)
    return v - TWO_PI * np.ceil((v - np.pi) / TWO_PI)


def unwrap_temporal(series: np.ndarray, axis: int = -1) -> np.ndarray:
    """Undo 2-pi wrapping along `axis`, anchored at the first element.

    Successive differences are mapped into (-pi, pi] and re-integrated, so
    any true step magnitude below pi is recovered exactly.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.shape[axis] == 0:
        raise TooFewFrames("cannot unwrap an empty series")
    d = np.diff(s, axis=axis)
    out = np.cumsum(wrap_phase(d), axis=axis)
    first = np.take(s, [0], axis=axis)
    return np.concatenate([first, first + out], axis=axis)


def temporal_phase_difference(vol: np.ndarray) -> np.ndarray:
    """out[..., k] = vol[..., k+1] - vol[..., k]."""
    v = np.asarray(vol)
    if v.shape[-1] < 2:
        raise TooFewFrames("need at least 2 frames for a difference")
    return np.diff(v, axis=-1)


def crop_frames(vol: np.ndarray, frames_kept: int = 400) -> np.ndarray:
    if vol.shape[-1] < frames_kept:
        raise TooFewFrames(f"have {vol.shape[-1]} frames, need {frames_kept}")
    return vol[..., :frames_kept]


def crop_above_surface(vol: np.ndarray, surface_index: int) -> np.ndarray:
    """Drop depth rows above the phantom surface; z=0 of the output is the surface."""
    if not 0 <= surface_index < vol.shape[1]:
        raise IndexOutOfRange(f"surface_index {surface_index} outside depth {vol.shape[1]}")
    return vol[:, surface_index:, :]


def row_quality_mask(intensity: np.ndarray, threshold_quantile: float = 0.1) -> np.ndarray:
    """Keep flags per depth row: row mean over y >= the given quantile of row means.

    With a degenerate quantile that would mask everything, the single best
    row is kept instead; AllRowsMasked is reserved for zero rows supplied.
    """
    if not 0.0 <= threshold_quantile < 1.0:
        raise ValueError(f"threshold_quantile must be in [0, 1): {threshold_quantile}")
    inten = np.asarray(intensity, dtype=np.float64)
    if inten.ndim != 2 or inten.shape[1] == 0:
        raise AllRowsMasked("no depth rows supplied")
    row_means = inten.mean(axis=0)
    thr = np.quantile(row_means, threshold_quantile)
    keep = row_means >= thr
    if not keep.any():
        keep[int(np.argmax(row_means))] = True
    return keep


def median_filter_3(vol: np.ndarray) -> np.ndarray:
    """Exact 27-sample median over each 3x3x3 neighborhood, edge replicated."""
    v = np.asarray(vol)
    if v.ndim != 3:
        raise ValueError("median_filter_3 expects a (y, z, t) volume")
    padded = np.ascontiguousarray(np.pad(v, 1, mode="edge"))
    return kernels.median27(padded)


def axial_mean(vol: np.ndarray, row_mask: np.ndarray) -> np.ndarray:
    """Mean over kept depth rows -> (y, t) map."""
    mask = np.asarray(row_mask, dtype=bool)
    if mask.shape[0] != vol.shape[1]:
        raise IndexOutOfRange(f"mask length {mask.shape[0]} != depth {vol.shape[1]}")
    if not mask.any():
        raise AllRowsMasked("mask keeps no rows")
    return vol[:, mask, :].mean(axis=1)


@dataclass
class PhaseDiffVolume:
    """Per-pixel frame-to-frame phase change with row keep flags."""

    values: np.ndarray  # (y, z, t-1) after cropping
    row_mask: np.ndarray  # per-z keep flags
    surface_index: int


@dataclass
class SpatioTemporalMap:
    values: np.ndarray  # (y, t)
    frame_interval_s: float
    pixel_pitch_m: float

    def to_tensor(self) -> Tensor:
        return Tensor(
            data=self.values.astype(np.float32),
            axes=("y", "t"),
            meta={
                "frame_interval_s": self.frame_interval_s,
                "pixel_pitch_m": self.pixel_pitch_m,
            },
        )

    @classmethod
    def from_tensor(cls, t: Tensor) -> "SpatioTemporalMap":
        return cls(
            values=np.asarray(t.data, dtype=np.float64),
            frame_interval_s=float(t.meta["frame_interval_s"]),
            pixel_pitch_m=float(t.meta["pixel_pitch_m"]),
        )


def preprocess(
    phase: np.ndarray,
    intensity: np.ndarray,
    surface_index: int,
    frames_kept: int = 400,
    frame_interval_s: float = 1.0 / 30000.0,
    pixel_pitch_m: float = 3e-3 / 32,
    threshold_quantile: float = 0.1,
) -> tuple[PhaseDiffVolume, SpatioTemporalMap]:
    """Full chain on one measurement.

    phase: wrapped (y, z, t) tensor data; intensity: (y, z) quality proxy.
    Returns the filtered difference volume (CNN input) and the depth-averaged
    map (velocity and 1D+t CNN input).
    """
    phase = np.asarray(phase)
    if phase.shape[-1] < 2:
        raise TooFewFrames("need at least 2 frames")
    # diff(unwrap(x)) == wrap(diff(x)) exactly, so the unwrap/difference pair
    # collapses to one pass (property-tested against the two-step form)
    diff = wrap_phase(np.diff(phase.astype(np.float32), axis=-1))
    diff = crop_frames(diff, frames_kept)
    diff = crop_above_surface(diff, surface_index)
    inten = np.asarray(intensity)[:, surface_index:]
    mask = row_quality_mask(inten, threshold_quantile)
    filtered = median_filter_3(np.ascontiguousarray(diff, dtype=np.float32))
    map_values = axial_mean(filtered.astype(np.float64), mask)
    vol = PhaseDiffVolume(values=filtered, row_mask=mask, surface_index=surface_index)
    st_map = SpatioTemporalMap(
        values=map_values, frame_interval_s=frame_interval_s, pixel_pitch_m=pixel_pitch_m
    )
    return vol, st_map
