import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from core import QTable, q_update
from models import AgentSpec

TO_COOPERATION = "to-cooperation"
TO_DEFECTION = "to-defection"


@dataclass
class Trace:
    """
    Per-period record of one path.

    Arrays are indexed [t, agent] (and [t, agent, action] for Q snapshots,
    which are taken after the period's update).
    """

    actions: np.ndarray  # (T, n) int
    rewards: np.ndarray  # (T, n) float
    q: np.ndarray  # (T, n, |A|) float
    delta: np.ndarray  # (T, n) float
    initial_q: Tuple[QTable, ...]
    specs: Tuple[AgentSpec, ...]

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def num_agents(self) -> int:
        return self.actions.shape[1]

    def replay(self) -> np.ndarray:
        """Recompute the Q snapshots from the recorded actions and rewards"""
        out = np.empty_like(self.q)
        tables = list(self.initial_q)
        actions = self.actions.tolist()
        rewards = self.rewards.tolist()
        for t in range(len(self)):
            for i, spec in enumerate(self.specs):
                tables[i] = q_update(
                    tables[i], actions[t][i], rewards[t][i], spec.alpha, spec.delta
                )
                out[t, i] = tables[i]
        return out

    def replays_exactly(self) -> bool:
        return bool(np.array_equal(self.replay(), self.q))

    def records(self, stride: int = 1) -> Iterator[Dict[str, Any]]:
        """JSON-ready per-period records, one every `stride` periods"""
        for t in range(0, len(self), stride):
            yield {
                "t": t,
                "actions": self.actions[t].tolist(),
                "rewards": self.rewards[t].tolist(),
                "q": self.q[t].tolist(),
                "delta": self.delta[t].tolist(),
            }


@dataclass
class PathResult:
    """Aggregates of one simulated path"""

    path_index: int
    master_seed: int
    horizon: int
    window: int  # trailing periods behind mean_reward
    mean_reward: Tuple[float, ...]  # per agent, over the window
    mean_reward_full: Tuple[float, ...]  # per agent, over the whole horizon
    profile_counts: Tuple[int, ...]  # joint-action counts over the whole horizon
    final_q: Tuple[QTable, ...]
    exit_times: Dict[str, Optional[int]] = field(default_factory=dict)
    # per direction, first period each single agent's delta crosses 0
    first_crossing: Dict[str, Tuple[Optional[int], ...]] = field(default_factory=dict)

    @property
    def num_agents(self) -> int:
        return len(self.mean_reward)

    @property
    def welfare(self) -> float:
        """Mean reward over agents, window-averaged"""
        return sum(self.mean_reward) / len(self.mean_reward)

    @property
    def welfare_full(self) -> float:
        return sum(self.mean_reward_full) / len(self.mean_reward_full)

    def profile_frequencies(self) -> Tuple[float, ...]:
        return tuple(c / self.horizon for c in self.profile_counts)

    def exit_time(self, direction: str) -> Optional[int]:
        return self.exit_times.get(direction)

    def to_row(self) -> Dict[str, Any]:
        """Flat CSV row"""
        row: Dict[str, Any] = {
            "path_index": self.path_index,
            "master_seed": self.master_seed,
            "horizon": self.horizon,
            "window": self.window,
            "welfare": self.welfare,
            "welfare_full": self.welfare_full,
        }
        for i, (m, f) in enumerate(zip(self.mean_reward, self.mean_reward_full)):
            row[f"mean_reward_{i + 1}"] = m
            row[f"mean_reward_full_{i + 1}"] = f
        for i, c in enumerate(self.profile_counts):
            row[f"count_{i}"] = c
        for direction in (TO_COOPERATION, TO_DEFECTION):
            if direction in self.exit_times:
                t = self.exit_times[direction]
                row[f"exit_{direction.replace('-', '_')}"] = "" if t is None else t
        return row


def _mean_and_se(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(len(arr)))


@dataclass
class BatchResult:
    """Results of n paths, ordered by path_index, with pooled aggregates"""

    paths: List[PathResult]
    traces: List[Optional[Trace]] = field(default_factory=list)

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def num_agents(self) -> int:
        return self.paths[0].num_agents

    def pooled_mean(self, full: bool = False) -> Tuple[float, ...]:
        """Per-agent arithmetic mean of the per-path means"""
        attr = "mean_reward_full" if full else "mean_reward"
        return tuple(
            _mean_and_se([getattr(p, attr)[i] for p in self.paths])[0]
            for i in range(self.num_agents)
        )

    def pooled_se(self, full: bool = False) -> Tuple[float, ...]:
        """Per-agent standard error of the per-path means"""
        attr = "mean_reward_full" if full else "mean_reward"
        return tuple(
            _mean_and_se([getattr(p, attr)[i] for p in self.paths])[1]
            for i in range(self.num_agents)
        )

    def welfare(self, full: bool = False) -> Tuple[float, float]:
        """Pooled welfare (mean over agents) and its standard error"""
        attr = "welfare_full" if full else "welfare"
        return _mean_and_se([getattr(p, attr) for p in self.paths])

    def profile_frequencies(self) -> Tuple[float, ...]:
        counts = np.sum([p.profile_counts for p in self.paths], axis=0)
        return tuple((counts / counts.sum()).tolist())

    def exit_fraction(self, direction: str) -> float:
        hits = [p.exit_time(direction) is not None for p in self.paths]
        return sum(hits) / len(hits)
