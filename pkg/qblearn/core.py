"""
Learning kernel shared by every environment: Q-tables, the asynchronous
Q-update, the biased score and the epsilon-greedy policy.

A Q-table is an immutable tuple of floats, one entry per action index.
"""

import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from config import config
from errors import UsageError
from models import AgentSpec

QTable = Tuple[float, ...]

# Exact biased-score ties go to the lowest action index
TIE_BREAK = "lowest-index"


def initial_table(values: Iterable[float]) -> QTable:
    """Build a Q-table from raw values, rejecting empty or non-finite input"""
    table = tuple(float(v) for v in values)
    if not table:
        raise UsageError("a Q-table needs at least one action")
    for v in table:
        if not math.isfinite(v):
            raise UsageError(f"Q-values must be finite, got {v!r}")
    return table


def q_update(
    q: QTable, action: int, reward: float, alpha: float, delta: float
) -> QTable:
    """
    Asynchronous Q-update of the played action only.

    The target (1-delta)*reward + delta*max(q) uses the table as it was
    before the update; unplayed entries are returned untouched.

    Args:
        q: Current Q-table
        action: Index of the action played this period
        reward: Realized reward of that action
        alpha: Adjustment speed
        delta: Discount factor

    Returns:
        The updated Q-table
    """
    if not 0 <= action < len(q):
        raise UsageError(f"action {action} out of range for {len(q)} actions")
    target = (1.0 - delta) * reward + delta * max(q)
    updated = (1.0 - alpha) * q[action] + alpha * target
    return q[:action] + (updated,) + q[action + 1 :]


def biased_score(q: QTable, spec: AgentSpec) -> QTable:
    """Score of each action: Q(a) + b * G(a)"""
    if len(spec.distortion) != len(q):
        raise UsageError(
            f"distortion has {len(spec.distortion)} entries, table has {len(q)}"
        )
    if spec.bias == 0.0:
        return q
    b = spec.bias
    return tuple(v + b * g for v, g in zip(q, spec.distortion))


def greedy_action(q: QTable, spec: AgentSpec) -> int:
    """Argmax of the biased score; ties follow TIE_BREAK"""
    scores = biased_score(q, spec)
    best = 0
    best_score = scores[0]
    for a in range(1, len(scores)):
        if scores[a] > best_score:
            best = a
            best_score = scores[a]
    return best


class RngStream:
    """
    Deterministic uniform stream owned by one agent (or environment) on one path.

    Draws come from a numpy Generator seeded by SeedSequence(master_seed,
    spawn_key=cell + (path_index, stream_index)) and are served from
    pre-drawn blocks.
    """

    def __init__(
        self,
        master_seed: int,
        path_index: int,
        stream_index: int = 0,
        cell: Sequence[int] = (),
        block: int = config.RNG_BLOCK,
    ):
        self.master_seed = master_seed
        self.path_index = path_index
        self.stream_index = stream_index
        self.cell = tuple(cell)
        seq = np.random.SeedSequence(
            entropy=master_seed, spawn_key=self.cell + (path_index, stream_index)
        )
        self._generator = np.random.Generator(np.random.PCG64(seq))
        self._block = block
        self._buffer: List[float] = []
        self._pos = 0

    @classmethod
    def for_agent(cls, master_seed: int, path_index: int, agent_index: int, cell=()):
        return cls(master_seed, path_index, agent_index, cell)

    @classmethod
    def for_environment(cls, master_seed: int, path_index: int, arity: int, cell=()):
        """The environment's stream sits right after the agents' streams"""
        return cls(master_seed, path_index, arity, cell)

    def _refill(self) -> None:
        self._buffer = self._generator.random(self._block).tolist()
        self._pos = 0

    def uniform(self) -> float:
        """One draw from U[0, 1)"""
        if self._pos >= len(self._buffer):
            self._refill()
        u = self._buffer[self._pos]
        self._pos += 1
        return u

    def choice(self, n: int) -> int:
        """Uniform index in {0..n-1}"""
        return min(int(self.uniform() * n), n - 1)


def select_action(q: QTable, spec: AgentSpec, rng: RngStream) -> int:
    """
    Epsilon-greedy choice on the biased score.

    With probability epsilon the action is drawn uniformly over ALL actions,
    the greedy one included; otherwise the greedy action is played.
    """
    if spec.epsilon > 0.0 and rng.uniform() < spec.epsilon:
        return rng.choice(len(q))
    return greedy_action(q, spec)
