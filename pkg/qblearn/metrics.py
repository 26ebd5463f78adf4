"""
Derived statistics over path results and traces: welfare, action-profile
frequencies, exit times and durations, and the conditional frequency curve
Pr(delta_2 > 0 | delta_1 in bin).

Everything here is a pure function of immutable results.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from config import config
from core import greedy_action
from errors import UsageError
from models import HistogramSpec
from records import TO_COOPERATION, TO_DEFECTION, BatchResult, PathResult, Trace

logger = logging.getLogger(__name__)

Results = Union[BatchResult, Sequence[PathResult]]
DeltaSource = Union[Trace, np.ndarray, Sequence[Sequence[float]]]


def _paths(results: Results) -> List[PathResult]:
    paths = results.paths if isinstance(results, BatchResult) else list(results)
    if not paths:
        raise UsageError("no path results given")
    return paths


def _deltas(source: DeltaSource) -> np.ndarray:
    deltas = source.delta if isinstance(source, Trace) else np.asarray(source, float)
    if deltas.ndim == 1:
        deltas = deltas[:, None]
    return deltas


def _check_direction(direction: str) -> None:
    if direction not in (TO_COOPERATION, TO_DEFECTION):
        raise UsageError(f"unknown exit direction '{direction}'")


def _on_side(value: float, direction: str) -> bool:
    return value > 0.0 if direction == TO_COOPERATION else value < 0.0


class ExitDetector:
    """
    Online exit detection: the exit date is the first period t such that every
    agent's delta is on the target side of 0 at both t and t+1.
    """

    def __init__(self, direction: str):
        _check_direction(direction)
        self.direction = direction
        self.run = 0
        self.time: Optional[int] = None

    def feed(self, t: int, deltas: Sequence[float]) -> Optional[int]:
        if self.time is not None:
            return self.time
        if all(_on_side(d, self.direction) for d in deltas):
            self.run += 1
            if self.run == 2:
                self.time = t - 1
        else:
            self.run = 0
        return self.time


class CrossingDetector:
    """First period each single agent's delta is on the target side of 0"""

    def __init__(self, direction: str, num_agents: int):
        _check_direction(direction)
        self.direction = direction
        self.times: List[Optional[int]] = [None] * num_agents

    def feed(self, t: int, deltas: Sequence[float]) -> None:
        for i, d in enumerate(deltas):
            if self.times[i] is None and _on_side(d, self.direction):
                self.times[i] = t


def mean_welfare(
    results: Union[Results, Sequence[Trace]], window: Optional[int] = None
) -> Tuple[float, ...]:
    """
    Per-agent mean reward over the trailing `window` periods, pooled over paths.

    Path results carry their configured window and the full horizon; any other
    window needs traces.
    """
    items = results.paths if isinstance(results, BatchResult) else list(results)
    if not items:
        raise UsageError("no results given")
    if window is not None and window < 1:
        raise UsageError("welfare window is empty")

    per_path = []
    for item in items:
        if isinstance(item, Trace):
            span = len(item) if window is None else window
            if span > len(item):
                raise UsageError(f"window {span} exceeds horizon {len(item)}")
            per_path.append(item.rewards[len(item) - span :].mean(axis=0))
        elif window is None or window == item.window:
            per_path.append(np.asarray(item.mean_reward))
        elif window == item.horizon:
            per_path.append(np.asarray(item.mean_reward_full))
        elif window > item.horizon:
            raise UsageError(f"window {window} exceeds horizon {item.horizon}")
        else:
            raise UsageError(
                f"path results hold windows {item.window} and {item.horizon}; "
                f"window {window} needs traces"
            )
    return tuple(np.mean(per_path, axis=0).tolist())


def profile_frequencies(results: Results) -> Tuple[float, ...]:
    """Pooled joint-action frequencies, ordered CC, CD, DC, DD for the dilemma"""
    paths = _paths(results)
    if paths[0].num_agents != 2:
        raise UsageError("profile frequencies need two-agent runs")
    counts = np.sum([p.profile_counts for p in paths], axis=0)
    return tuple((counts / counts.sum()).tolist())


def exit_time(source: DeltaSource, direction: str = TO_COOPERATION) -> Optional[int]:
    """First date with every delta on the target side for two consecutive periods"""
    detector = ExitDetector(direction)
    for t, row in enumerate(_deltas(source).tolist()):
        if detector.feed(t, row) is not None:
            return detector.time
    return None


def first_crossing_time(
    source: DeltaSource, agent: int, direction: str = TO_COOPERATION
) -> Optional[int]:
    """First period agent's delta is > 0 (to-cooperation) or < 0 (to-defection)"""
    _check_direction(direction)
    column = _deltas(source)[:, agent]
    hits = np.flatnonzero(column > 0.0 if direction == TO_COOPERATION else column < 0.0)
    return int(hits[0]) if len(hits) else None


def exit_fraction(results: Results, direction: str = TO_COOPERATION) -> float:
    """Fraction of paths with a finite exit time; censored paths count as no exit"""
    _check_direction(direction)
    paths = _paths(results)
    return sum(p.exit_time(direction) is not None for p in paths) / len(paths)


@dataclass
class FrequencyBin:
    k: int
    lower: float
    upper: float
    count: int
    frequency: float


def conditional_frequency_curve(
    traces: Sequence[DeltaSource], spec: Optional[HistogramSpec] = None
) -> List[FrequencyBin]:
    """
    f_k = #{t: delta_1 in I_k and delta_2 > 0} / #{t: delta_1 in I_k}
    over open bins I_k = (k*w, k*w + w), keeping bins with at least
    spec.min_count observations.
    """
    if spec is None:
        spec = HistogramSpec(
            width=config.HISTOGRAM_WIDTH,
            bins=config.HISTOGRAM_BINS,
            min_count=config.HISTOGRAM_MIN_COUNT,
        )
    deltas = [_deltas(t) for t in traces]
    if not deltas or any(d.shape[1] != 2 for d in deltas):
        raise UsageError("conditional frequencies need two-agent delta series")
    d1 = np.concatenate([d[:, 0] for d in deltas])
    d2 = np.concatenate([d[:, 1] for d in deltas])

    w = spec.width
    # Bin and open-interval membership both come from the same quotient
    q = d1 / w
    inside = np.isfinite(q) & (q > -spec.bins) & (q < spec.bins + 1)
    q, d2 = q[inside], d2[inside]
    floor = np.floor(q)
    interior = q > floor
    k = floor[interior].astype(np.int64)
    positive = d2[interior] > 0.0

    offset = spec.bins
    size = 2 * spec.bins + 1
    counts = np.bincount(k + offset, minlength=size)
    hits = np.bincount(k + offset, weights=positive.astype(float), minlength=size)

    curve = []
    for index in range(size):
        if counts[index] < spec.min_count:
            continue
        kk = index - offset
        curve.append(
            FrequencyBin(
                k=kk,
                lower=kk * w,
                upper=kk * w + w,
                count=int(counts[index]),
                frequency=float(hits[index] / counts[index]),
            )
        )
    if not curve:
        logger.warning(
            "No bin reached %d observations; the curve is empty", spec.min_count
        )
    return curve


def _as_times(times: Sequence[Optional[float]]) -> np.ndarray:
    if len(times) == 0:
        raise UsageError("no exit times given")
    return np.array([math.inf if t is None else float(t) for t in times])


def median_duration(
    times: Sequence[Optional[float]], horizon: Optional[int] = None
) -> float:
    """
    Median of per-path exit times, paths without exit counting as +inf.

    When every path is censored the result is the horizon (or +inf when the
    horizon is unknown).
    """
    arr = np.sort(_as_times(times))
    if not np.isfinite(arr).any():
        logger.warning("All %d paths are censored; reporting the horizon", len(arr))
        return float(horizon) if horizon is not None else math.inf
    n = len(arr)
    if n % 2:
        return float(arr[n // 2])
    return float((arr[n // 2 - 1] + arr[n // 2]) / 2.0)


def mean_duration(
    times: Sequence[Optional[float]], horizon: Optional[int] = None
) -> float:
    """Mean exit time; censored paths count at the horizon, or are dropped"""
    arr = _as_times(times)
    if horizon is not None:
        arr = np.where(np.isfinite(arr), arr, float(horizon))
    else:
        arr = arr[np.isfinite(arr)]
    if len(arr) == 0:
        logger.warning("All paths are censored; mean duration is unbounded")
        return math.inf
    return float(arr.mean())


def welfare_identity_gap(results: Results, x: float, y: float) -> float:
    """
    |welfare - (1 + f_CC + (f_CD + f_DC) * ((x+y)/2 - 1))|

    For x+y = 2 the prediction is 1 + f_CC. Uses the full horizon, the span the
    profile counts cover.
    """
    paths = _paths(results)
    f_cc, f_cd, f_dc, _ = profile_frequencies(paths)
    predicted = 1.0 + f_cc + (f_cd + f_dc) * ((x + y) / 2.0 - 1.0)
    welfare = float(np.mean([p.welfare_full for p in paths]))
    return abs(welfare - predicted)


def sign_comovement_check(trace: Trace) -> Tuple[int, int]:
    """
    Count (qualifying periods, violations) of the co-movement of delta changes
    in a deterministic dilemma trace with x > 2 and y < 1.

    A period t >= 1 qualifies when both agents played their greedy action and
    both max-Q values were inside (1, 2) before the update. CC and DD must then
    raise both deltas, CD and DC must lower both.
    """
    if trace.num_agents != 2:
        raise UsageError("sign co-movement needs a two-agent trace")
    qualifying = violations = 0
    actions = trace.actions.tolist()
    deltas = trace.delta.tolist()
    snapshots = trace.q.tolist()
    for t in range(1, len(trace)):
        before = snapshots[t - 1]
        if not all(1.0 < max(q) < 2.0 for q in before):
            continue
        if any(
            actions[t][i] != greedy_action(before[i], spec)
            for i, spec in enumerate(trace.specs)
        ):
            continue
        qualifying += 1
        rho = [deltas[t][i] - deltas[t - 1][i] for i in range(2)]
        matched = actions[t][0] == actions[t][1]
        if matched and not (rho[0] > 0.0 and rho[1] > 0.0):
            violations += 1
        elif not matched and not (rho[0] < 0.0 and rho[1] < 0.0):
            violations += 1
    return qualifying, violations
