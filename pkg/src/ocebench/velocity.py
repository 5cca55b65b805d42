"""Wavefront tracking on the lateral-position x time map and the slope fit
v = dy/dt.

Arrival per lateral pixel = first local maximum of |map| above a noise
threshold, refined to sub-frame precision with a parabola through the peak
and its neighbors. The fit regresses arrival time on position (time is the
noisy quantity) and inverts the slope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTrack, NoWavefront, TooFewPoints
from .phasepipe import SpatioTemporalMap


@dataclass
class WavefrontTrack:
    arrival_frame: np.ndarray  # per lateral pixel, sub-frame resolution
    confidence: np.ndarray  # peak prominence above threshold
    valid: np.ndarray  # bool per lateral pixel


@dataclass
class VelocityEstimate:
    v_px_per_frame: float
    v_mps: float
    r_squared: float
    n_points: int


def detect_arrival_times(
    st_map: SpatioTemporalMap,
    threshold_k: float = 4.0,
    noise_floor: float = 1e-4,
    pre_frames: int = 10,
    peak_halfwidth: int = 25,
    rel_threshold: float = 0.4,
) -> WavefrontTrack:
    """Per-pixel first-peak arrival on the (y, t) map.

    The per-pixel noise level is the standard deviation of the first
    `pre_frames` samples, floored by the median level across pixels. A
    sample qualifies as the arrival when it is the maximum of |map[y]|
    within +- peak_halfwidth frames and exceeds both threshold_k * sigma +
    noise_floor and rel_threshold times the pixel's global maximum; the
    relative term rejects ripple on the wavefront's onset ramp and keeps
    detection invariant to rescaling the map. Sub-frame refinement fits a
    parabola through the peak and its two neighbors.
    """
    values = np.asarray(st_map.values, dtype=np.float64)
    ny, nt = values.shape
    arrival = np.full(ny, np.nan)
    confidence = np.zeros(ny)
    valid = np.zeros(ny, dtype=bool)
    if nt < 3:
        raise NoWavefront("map too short to contain a peak")
    sigmas = values[:, : min(pre_frames, nt)].std(axis=1)
    pooled = float(np.median(sigmas))
    for y in range(ny):
        s = np.abs(values[y])
        thr = max(threshold_k * max(float(sigmas[y]), pooled) + noise_floor,
                  rel_threshold * float(s.max()))
        for k in range(1, nt - 1):
            if s[k] < thr:
                continue
            lo = max(0, k - peak_halfwidth)
            hi = min(nt, k + peak_halfwidth + 1)
            if s[k] <= s[lo:k].max(initial=-np.inf) or s[k] < s[k + 1 : hi].max(initial=-np.inf):
                continue
            denom = s[k - 1] - 2.0 * s[k] + s[k + 1]
            offset = 0.0 if denom == 0.0 else 0.5 * (s[k - 1] - s[k + 1]) / denom
            offset = float(np.clip(offset, -0.5, 0.5))
            arrival[y] = np.clip(k + offset, 0.0, nt - 1.0)
            confidence[y] = s[k] - thr
            valid[y] = True
            break
    if valid.sum() < 2:
        raise NoWavefront(f"only {int(valid.sum())} pixels produced a qualifying peak")
    return WavefrontTrack(arrival_frame=arrival, confidence=confidence, valid=valid)


def fit_velocity(track: WavefrontTrack, pixel_pitch_m: float, frame_interval_s: float) -> VelocityEstimate:
    """Least squares t(y) = a + b*y over valid pixels; v = 1/b, converted
    to m/s via pitch / frame interval."""
    ys = np.nonzero(track.valid)[0].astype(np.float64)
    ts = track.arrival_frame[track.valid]
    if ys.size < 2:
        raise TooFewPoints(f"{ys.size} valid points")
    if np.ptp(ts) == 0.0:
        raise DegenerateTrack("all arrival times equal")
    ym, tm = ys.mean(), ts.mean()
    syy = float(((ys - ym) ** 2).sum())
    b = float(((ys - ym) * (ts - tm)).sum()) / syy
    if b <= 0.0:
        raise DegenerateTrack(f"non-positive slope {b}")
    a = tm - b * ym
    resid = ts - (a + b * ys)
    sst = float(((ts - tm) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sst
    v_px = 1.0 / b
    return VelocityEstimate(
        v_px_per_frame=v_px,
        v_mps=v_px * pixel_pitch_m / frame_interval_s,
        r_squared=float(np.clip(r2, 0.0, 1.0)),
        n_points=int(ys.size),
    )


def estimate_velocity(st_map: SpatioTemporalMap, threshold_k: float = 4.0) -> VelocityEstimate:
    track = detect_arrival_times(st_map, threshold_k=threshold_k)
    return fit_velocity(track, st_map.pixel_pitch_m, st_map.frame_interval_s)
