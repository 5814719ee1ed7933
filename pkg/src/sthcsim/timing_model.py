"""Operational-speed arithmetic: frame loading, throughput, database segmentation.

Pure functions; all durations in seconds, rates in frames per second,
bandwidths in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleOverlapError, ParameterError


@dataclass(frozen=True)
class SegmentationPlan:
    """Overlapped segmentation of a database of duration t3 into t2-long clips.

    Consecutive segments overlap by at least the query duration t1 so a query
    window can never straddle a boundary uncovered.
    """

    t1: float
    t2: float
    t3: float
    segment_starts: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.segment_starts)


@dataclass(frozen=True)
class ThroughputReport:
    device_fps: float
    digital_fps: float
    speedup: float
    exceeds_two_orders: bool
    frame_load_time: float | None = None


def frame_load_time(ihb_bandwidth: float) -> float:
    """Minimum frame loading time, the reciprocal of the frequency spread."""
    if not ihb_bandwidth > 0:
        raise ParameterError("ihb_bandwidth must be positive")
    return 1.0 / ihb_bandwidth


def segmentation_plan(t1: float, t2: float, t3: float) -> SegmentationPlan:
    """Minimal uniform schedule of t2-long segments covering every t1 window.

    Segments start at multiples of (t2 - t1) with the last one clamped to
    t3 - t2, giving count 1 + ceil((t3 - t2) / (t2 - t1)) when t2 < t3.
    """
    if not (t1 > 0 and t2 > 0 and t3 > 0):
        raise ParameterError("durations must be positive")
    if t1 >= t2:
        raise InfeasibleOverlapError(
            f"overlap t1={t1} must be smaller than segment duration t2={t2}"
        )
    if t2 > t3:
        raise ParameterError(f"segment duration t2={t2} exceeds database duration t3={t3}")
    if t2 >= t3:
        return SegmentationPlan(t1, t2, t3, (0.0,))
    stride = t2 - t1
    n = 1 + math.ceil((t3 - t2) / stride)
    if n > 10_000_000:
        raise ParameterError(
            f"plan needs {n} segments; overlap t1={t1} leaves stride {stride:.3g} "
            f"over a {t3:.3g} s database"
        )
    starts = tuple(min(i * stride, t3 - t2) for i in range(n))
    return SegmentationPlan(t1, t2, t3, starts)


def verify_coverage(plan: SegmentationPlan, step: float | None = None) -> bool:
    """Exhaustive sweep: every query window [q, q+t1] fits inside some segment.

    Sweeps q over [0, t3 - t1] on a grid no coarser than t1/100, with a small
    absolute slack so exact-boundary plans are not rejected by float noise.
    """
    if step is None:
        step = plan.t1 / 100.0
    atol = 1e-9 * max(1.0, plan.t3)
    hi = plan.t3 - plan.t1
    queries = np.append(np.arange(0.0, hi, step), hi)
    starts = np.asarray(plan.segment_starts)
    lo_ok = starts[np.newaxis, :] <= queries[:, np.newaxis] + atol
    hi_ok = queries[:, np.newaxis] + plan.t1 <= starts[np.newaxis, :] + plan.t2 + atol
    return bool(np.all(np.any(lo_ok & hi_ok, axis=1)))


def throughput_report(device_fps: float, digital_fps: float,
                      frame_load_time: float | None = None) -> ThroughputReport:
    """Device-vs-digital speed ratio, flagged when it tops two orders of magnitude."""
    if not (device_fps > 0 and digital_fps > 0):
        raise ParameterError("frame rates must be positive")
    speedup = device_fps / digital_fps
    return ThroughputReport(
        device_fps=float(device_fps),
        digital_fps=float(digital_fps),
        speedup=speedup,
        exceeds_two_orders=speedup > 100.0,
        frame_load_time=frame_load_time,
    )
