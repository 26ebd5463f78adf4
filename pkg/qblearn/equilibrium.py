"""
Bias-grid sweeps, empirical gain matrices and pure Nash detection over bias
profiles.

Matrices are indexed by kappa, the bias in grid increments: b = kappa * increment.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from config import config
from engine import collect_batch, run_tasks
from environments import Environment
from errors import UsageError
from models import AgentSpec, BiasGrid, SimConfig
from records import BatchResult

logger = logging.getLogger(__name__)

Profile = Tuple[int, int]


@dataclass
class GainMatrix:
    """v[i][j]: payoff of the row-bias player against the column-bias player"""

    kappas: List[int]
    values: np.ndarray
    se: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        k = len(self.kappas)
        if self.values.shape != (k, k):
            raise UsageError(
                f"gain matrix must be {k}x{k} over its kappas, got {self.values.shape}"
            )
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)
            if self.se.shape != self.values.shape:
                raise UsageError("standard errors do not match the matrix shape")

    @classmethod
    def from_rows(
        cls, rows: Sequence[Sequence[float]], kappas: Optional[Sequence[int]] = None
    ) -> "GainMatrix":
        kappas = list(range(len(rows))) if kappas is None else list(kappas)
        return cls(kappas=kappas, values=np.asarray(rows, dtype=float))

    def index(self, kappa: int) -> int:
        try:
            return self.kappas.index(kappa)
        except ValueError:
            raise UsageError(f"kappa {kappa} is not on the grid {self.kappas}")

    def value(self, row: int, col: int) -> float:
        return float(self.values[self.index(row), self.index(col)])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, index=self.kappas, columns=self.kappas)
        frame.index.name = "kappa"
        return frame


def anonymize(row_seat: GainMatrix, col_seat: GainMatrix) -> GainMatrix:
    """
    Seat-averaged payoffs of a bias-kappa player against a bias-kappa' opponent.

    row_seat[k1][k2] is player 1's payoff and col_seat[k1][k2] player 2's payoff
    at profile (k1, k2), so v_bar(k, k') = (row_seat[k][k'] + col_seat[k'][k]) / 2.
    """
    if row_seat.kappas != col_seat.kappas:
        raise UsageError(
            f"seat matrices differ in dimension: {row_seat.kappas} vs {col_seat.kappas}"
        )
    values = (row_seat.values + col_seat.values.T) / 2.0
    se = None
    if row_seat.se is not None and col_seat.se is not None:
        se = np.sqrt(row_seat.se**2 + col_seat.se.T**2) / 2.0
    return GainMatrix(
        kappas=list(row_seat.kappas),
        values=values,
        se=se,
        metadata={**row_seat.metadata, "anonymized": True},
    )


def default_tolerance(matrix: GainMatrix) -> float:
    """config.NASH_TOLERANCE_SE times the root-mean-square cell standard error"""
    if matrix.se is None:
        logger.warning("Gain matrix has no standard errors; Nash tolerance is 0")
        return 0.0
    pooled = float(np.sqrt(np.mean(matrix.se**2)))
    if pooled == 0.0:
        logger.warning("Gain matrix standard errors are all 0; Nash tolerance is 0")
    return config.NASH_TOLERANCE_SE * pooled


def _tolerance(matrix: GainMatrix, tolerance: Optional[float]) -> float:
    if tolerance is None:
        return default_tolerance(matrix)
    if tolerance < 0.0:
        raise UsageError(f"tolerance must be >= 0, got {tolerance}")
    return tolerance


def best_response_pressure(matrix: GainMatrix, at: Profile) -> Tuple[float, float]:
    """
    Largest payoff gain each player gets from a unilateral bias change at `at`.

    Uses the symmetric reading of an anonymized matrix: player 1 with kappa_1
    faces kappa_2, player 2 with kappa_2 faces kappa_1.
    """
    v = matrix.values
    i, j = matrix.index(at[0]), matrix.index(at[1])
    first = float(v[:, j].max() - v[i, j])
    second = float(v[:, i].max() - v[j, i])
    return first, second


def pure_nash(matrix: GainMatrix, tolerance: Optional[float] = None) -> List[Profile]:
    """
    Bias profiles where neither player gains more than `tolerance` by deviating,
    on an anonymized (symmetric-game) matrix. Defaults to default_tolerance.
    """
    tol = _tolerance(matrix, tolerance)
    equilibria = []
    for k1, k2 in itertools.product(matrix.kappas, repeat=2):
        p1, p2 = best_response_pressure(matrix, (k1, k2))
        if p1 <= tol and p2 <= tol:
            equilibria.append((k1, k2))
    return equilibria


def two_seat_pressure(
    row: GainMatrix, col: GainMatrix, at: Profile
) -> Tuple[float, float]:
    """Deviation gains in a general bimatrix game: row[i][j] and col[i][j] at (i, j)"""
    if row.kappas != col.kappas:
        raise UsageError("payoff matrices differ in dimension")
    i, j = row.index(at[0]), row.index(at[1])
    first = float(row.values[:, j].max() - row.values[i, j])
    second = float(col.values[i, :].max() - col.values[i, j])
    return first, second


def pure_nash_two_seat(
    row: GainMatrix, col: GainMatrix, tolerance: float = 0.0
) -> List[Profile]:
    """Pure Nash profiles of the bimatrix game (row payoffs, column payoffs)"""
    if tolerance < 0.0:
        raise UsageError(f"tolerance must be >= 0, got {tolerance}")
    return [
        (k1, k2)
        for k1, k2 in itertools.product(row.kappas, repeat=2)
        if max(two_seat_pressure(row, col, (k1, k2))) <= tolerance
    ]


def best_response_map(
    matrix: GainMatrix, tolerance: float = 0.0
) -> Dict[int, List[int]]:
    """For every opponent kappa, the own kappas within `tolerance` of the best payoff"""
    v = matrix.values
    responses = {}
    for j, opponent in enumerate(matrix.kappas):
        best = v[:, j].max()
        responses[opponent] = [
            k for i, k in enumerate(matrix.kappas) if v[i, j] >= best - tolerance
        ]
    return responses


def nash_report(
    matrix: GainMatrix, tolerance: Optional[float] = None
) -> Dict[str, Any]:
    """JSON-ready report of the equilibria and every profile's pressures"""
    tol = _tolerance(matrix, tolerance)
    pressures = {}
    for k1, k2 in itertools.product(matrix.kappas, repeat=2):
        pressures[f"{k1},{k2}"] = list(best_response_pressure(matrix, (k1, k2)))
    equilibria = []
    for k1, k2 in pure_nash(matrix, tol):
        equilibria.append(
            {
                "profile": [k1, k2],
                "value": matrix.value(k1, k2),
                "pressures": pressures[f"{k1},{k2}"],
            }
        )
    return {
        "kappas": list(matrix.kappas),
        "tolerance": tol,
        "equilibria": equilibria,
        "pressures": pressures,
    }


def encode_kappa(kappa: int) -> int:
    """Non-negative seed key for a possibly negative kappa"""
    return 2 * kappa if kappa >= 0 else -2 * kappa - 1


@dataclass
class BiasSweep:
    """Everything a bias-grid sweep produces"""

    seat1: GainMatrix
    seat2: GainMatrix
    anonymized: GainMatrix
    cc_frequency: GainMatrix
    batches: Dict[Profile, BatchResult]
    seat1_full: Optional[GainMatrix] = None
    seat2_full: Optional[GainMatrix] = None
    anonymized_full: Optional[GainMatrix] = None


def _seat_matrices(
    kappas: List[int],
    batches: Dict[Profile, BatchResult],
    full: bool,
    metadata: Dict[str, Any],
) -> Tuple[GainMatrix, GainMatrix]:
    k = len(kappas)
    values = np.zeros((2, k, k))
    se = np.zeros((2, k, k))
    for (i, k1), (j, k2) in itertools.product(enumerate(kappas), repeat=2):
        batch = batches[(k1, k2)]
        values[:, i, j] = batch.pooled_mean(full=full)
        se[:, i, j] = batch.pooled_se(full=full)
    seat1 = GainMatrix(list(kappas), values[0], se[0], {**metadata, "seat": 1})
    seat2 = GainMatrix(list(kappas), values[1], se[1], {**metadata, "seat": 2})
    return seat1, seat2


def sweep_bias_grid(
    env: Environment,
    base_spec: AgentSpec,
    grid: BiasGrid,
    sim: SimConfig,
    common_random_numbers: bool = False,
    threads: Optional[int] = None,
    backend: Optional[str] = None,
) -> BiasSweep:
    """
    Run a batch for every ordered bias profile (kappa_1, kappa_2) on the grid.

    Path seeds depend on (master_seed, kappa_1, kappa_2, path_index); with
    common_random_numbers every cell reuses the same path seeds.

    Args:
        env: Two-player environment template
        base_spec: Agent parameters shared by both players; bias is overridden
        grid: Kappa range and bias increment
        sim: Simulation settings of every cell
        common_random_numbers: Reuse path seeds across cells
        threads: Worker count (None = config.THREADS)
        backend: joblib backend (None = config.BACKEND)

    Returns:
        Seat matrices, their anonymization, CC frequencies and the batches
    """
    if env.arity != 2:
        raise UsageError("bias sweeps need a two-player environment")
    kappas = grid.kappas
    cell_sim = sim.model_copy(update={"trace_level": "none"})
    specs = {k: base_spec.model_copy(update={"bias": grid.bias(k)}) for k in kappas}
    profiles = list(itertools.product(kappas, repeat=2))
    logger.info(
        "Sweeping %d bias profiles x %d paths x %d periods",
        len(profiles),
        sim.num_paths,
        sim.horizon,
    )

    tasks = []
    for k1, k2 in profiles:
        cell = () if common_random_numbers else (encode_kappa(k1), encode_kappa(k2))
        for path in range(sim.num_paths):
            tasks.append((env, (specs[k1], specs[k2]), cell_sim, path, cell))
    outputs = run_tasks(tasks, threads=threads, backend=backend)

    n = sim.num_paths
    batches = {
        profile: collect_batch(outputs[c * n : (c + 1) * n])
        for c, profile in enumerate(profiles)
    }

    metadata = {
        "paths": sim.num_paths,
        "horizon": sim.horizon,
        "window": sim.horizon - sim.window_start,
        "master_seed": sim.master_seed,
        "increment": grid.increment,
        "environment": type(env).__name__,
        "common_random_numbers": common_random_numbers,
    }
    seat1, seat2 = _seat_matrices(kappas, batches, False, metadata)
    cc = np.array(
        [[batches[(k1, k2)].profile_frequencies()[0] for k2 in kappas] for k1 in kappas]
    )
    sweep = BiasSweep(
        seat1=seat1,
        seat2=seat2,
        anonymized=anonymize(seat1, seat2),
        cc_frequency=GainMatrix(list(kappas), cc, metadata={**metadata, "cc": True}),
        batches=batches,
    )
    if sim.window is not None and sim.window < sim.horizon:
        full_meta = {**metadata, "window": sim.horizon}
        sweep.seat1_full, sweep.seat2_full = _seat_matrices(
            kappas, batches, True, full_meta
        )
        sweep.anonymized_full = anonymize(sweep.seat1_full, sweep.seat2_full)
    logger.info("Sweep done: %s", _diagonal_summary(sweep.anonymized))
    return sweep


def _diagonal_summary(matrix: GainMatrix) -> str:
    parts = []
    for k in matrix.kappas:
        parts.append(f"({k},{k})={matrix.value(k, k):.2f}")
    return " ".join(parts)
