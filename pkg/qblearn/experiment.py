import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from config import config
from engine import run_batch
from environments import (
    Environment,
    LogitDuopolyEnv,
    PrisonersDilemmaEnv,
    build_environment,
    duopoly_distortion,
)
from equilibrium import (
    BiasSweep,
    GainMatrix,
    nash_report,
    pure_nash_two_seat,
    sweep_bias_grid,
    two_seat_pressure,
)
from errors import ConfigError, Diagnostic, UsageError
from metrics import (
    conditional_frequency_curve,
    exit_fraction,
    mean_duration,
    median_duration,
)
from models import (
    AgentSpec,
    DurationsBlock,
    HistogramSpec,
    RunConfig,
    SimConfig,
)
from presets import grid_points
from pydantic import ValidationError
from records import TO_COOPERATION, TO_DEFECTION, BatchResult, Trace

logger = logging.getLogger(__name__)


# Config paths of the fields built from a run configuration
AGENT_FIELDS = {
    "alpha": "agents.alpha",
    "epsilon": "agents.epsilon",
    "delta": "agents.delta",
    "bias": "agents.bias",
    "distortion": "agents.distortion",
}
SIM_FIELDS = {
    "horizon": "simulation.horizon",
    "num_paths": "simulation.paths",
    "initial_q": "agents.initial_q",
    "master_seed": "simulation.seed",
    "trace_level": "simulation.trace",
    "window": "simulation.window",
    "stride": "output.stride",
}


def _config_error(run_config: RunConfig, field: str, message: str) -> ConfigError:
    return ConfigError(run_config.name, [Diagnostic(message, field=field)])


def _translate(
    error: ValidationError, run_config: RunConfig, fields: Dict[str, str]
) -> ConfigError:
    diagnostics = []
    for item in error.errors():
        head = str(item["loc"][0]) if item["loc"] else ""
        diagnostics.append(Diagnostic(item["msg"], field=fields.get(head) or None))
    return ConfigError(run_config.name, diagnostics)


def resolve_distortion(selector, env: Environment) -> Tuple[float, ...]:
    """Turn a config distortion selector into one weight per action"""
    if isinstance(selector, list):
        return tuple(float(g) for g in selector)
    if selector == "auto":
        return env.default_distortion()
    if selector == "none":
        return (0.0,) * env.num_actions
    if selector == "cooperate":
        return (1.0,) + (0.0,) * (env.num_actions - 1)
    if selector == "diagonal-profit":
        if not isinstance(env, LogitDuopolyEnv):
            raise UsageError("distortion 'diagonal-profit' needs a duopoly")
        return duopoly_distortion(env)
    raise UsageError(f"unknown distortion selector '{selector}'")


def _per_agent_bias(run_config: RunConfig, arity: int) -> List[float]:
    bias = run_config.agents.bias
    if not isinstance(bias, list):
        return [bias] * arity
    if len(bias) != arity:
        raise _config_error(
            run_config,
            "agents.bias",
            f"bias lists {len(bias)} agents, environment has {arity}",
        )
    return list(bias)


def _per_agent_tables(
    run_config: RunConfig, initial_q, env: Environment, field: str
) -> List[List[float]]:
    """One shared table, or one table per agent, each sized to the action set"""
    if initial_q and isinstance(initial_q[0], list):
        if len(initial_q) != env.arity:
            raise _config_error(
                run_config,
                field,
                f"initial_q lists {len(initial_q)} agents, "
                f"environment has {env.arity}",
            )
        tables = list(initial_q)
    else:
        tables = [list(initial_q)] * env.arity
    for table in tables:
        if len(table) != env.num_actions:
            raise _config_error(
                run_config,
                field,
                f"Q-table has {len(table)} entries, "
                f"environment has {env.num_actions} actions",
            )
    return tables


def build_agent_specs(
    run_config: RunConfig, env: Environment
) -> Tuple[AgentSpec, ...]:
    agents = run_config.agents
    try:
        distortion = resolve_distortion(agents.distortion, env)
    except UsageError as e:
        raise _config_error(run_config, "agents.distortion", str(e)) from e
    if len(distortion) != env.num_actions:
        raise _config_error(
            run_config,
            "agents.distortion",
            f"{len(distortion)} weights given, "
            f"environment has {env.num_actions} actions",
        )
    biases = _per_agent_bias(run_config, env.arity)
    try:
        return tuple(
            AgentSpec(
                alpha=agents.alpha,
                epsilon=agents.epsilon,
                delta=agents.delta,
                bias=float(b),
                distortion=distortion,
            )
            for b in biases
        )
    except ValidationError as e:
        raise _translate(e, run_config, AGENT_FIELDS) from e


def resolve_seed(seed: Optional[int]) -> int:
    return config.DEFAULT_SEED if seed is None else seed


def build_sim_config(
    run_config: RunConfig,
    env: Environment,
    initial_q: Optional[List[float]] = None,
    trace_level: Optional[str] = None,
    initial_q_field: str = "agents.initial_q",
) -> SimConfig:
    simulation = run_config.simulation
    tables = _per_agent_tables(
        run_config,
        run_config.agents.initial_q if initial_q is None else initial_q,
        env,
        initial_q_field,
    )
    try:
        return SimConfig(
            horizon=simulation.horizon,
            num_paths=simulation.paths,
            initial_q=tuple(tuple(t) for t in tables),
            master_seed=resolve_seed(simulation.seed),
            trace_level=trace_level or simulation.trace,
            window=simulation.window,
            stride=run_config.output.stride,
        )
    except ValidationError as e:
        raise _translate(
            e, run_config, {**SIM_FIELDS, "initial_q": initial_q_field}
        ) from e


def parameter_columns(run_config: RunConfig) -> Dict[str, Any]:
    """Flat run parameters prepended to every CSV row"""
    columns: Dict[str, Any] = {}
    for key, value in run_config.environment.model_dump().items():
        columns[f"env_{key}"] = value
    if run_config.agents is not None:
        agents = run_config.agents
        columns.update(alpha=agents.alpha, epsilon=agents.epsilon, delta=agents.delta)
        bias = agents.bias
        columns["bias"] = str(bias) if isinstance(bias, list) else bias
    if run_config.simulation is not None:
        simulation = run_config.simulation
        columns.update(
            horizon=simulation.horizon,
            paths=simulation.paths,
            seed=resolve_seed(simulation.seed),
            window=simulation.window or simulation.horizon,
        )
    return columns


@dataclass
class ExperimentOutcome:
    """Everything a run produces, ready to be written by the exporters"""

    run_config: RunConfig
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)
    traces: Dict[str, Trace] = field(default_factory=dict)
    summaries: List[Tuple[str, pd.DataFrame]] = field(default_factory=list)
    wall_time: float = 0.0

    def append_rows(self, name: str, rows: List[Dict[str, Any]]) -> None:
        frame = pd.DataFrame(rows)
        if name in self.tables:
            frame = pd.concat([self.tables[name], frame], ignore_index=True)
        self.tables[name] = frame


class ExperimentRunner:
    """Runs one RunConfig, once per grid point, and collects its outputs"""

    def __init__(
        self,
        run_config: RunConfig,
        threads: Optional[int] = None,
        backend: Optional[str] = None,
    ):
        self.run_config = run_config
        self.threads = threads
        self.backend = backend
        self.handlers = {
            "batch": self._run_batch,
            "welfare-grid": self._run_batch,
            "trace": self._run_trace,
            "bias-sweep": self._run_bias_sweep,
            "exit-durations": self._run_exit_durations,
            "conditional-frequency": self._run_conditional_frequency,
            "static-payoffs": self._run_static_payoffs,
        }

    def run(self) -> ExperimentOutcome:
        run_config = self.run_config
        outcome = ExperimentOutcome(run_config=run_config)
        handler = self.handlers[run_config.experiment]
        points = grid_points(run_config)
        logger.info(
            "Running '%s' (%s, %d grid point(s))",
            run_config.name,
            run_config.experiment,
            len(points),
        )
        start = time.perf_counter()
        for n, (overrides, point_config) in enumerate(points):
            if overrides:
                logger.info("Grid point %d/%d: %s", n + 1, len(points), overrides)
            suffix = f"_g{n}" if len(points) > 1 else ""
            handler(point_config, overrides, suffix, outcome)
        if run_config.experiment in ("batch", "welfare-grid"):
            self._summarize_batches(outcome)
        outcome.wall_time = time.perf_counter() - start
        logger.info("Finished '%s' in %.1fs", run_config.name, outcome.wall_time)
        return outcome

    def _batch(
        self, point: RunConfig, env: Environment, sim: SimConfig
    ) -> BatchResult:
        return run_batch(
            env,
            build_agent_specs(point, env),
            sim,
            threads=self.threads,
            backend=self.backend,
        )

    def _batch_row(
        self,
        point: RunConfig,
        overrides: Dict[str, Any],
        env: Environment,
        batch: BatchResult,
    ) -> Dict[str, Any]:
        welfare, se = batch.welfare()
        welfare_full, se_full = batch.welfare(full=True)
        row = {**overrides, **parameter_columns(point)}
        row.update(welfare=welfare, welfare_se=se)
        row.update(welfare_full=welfare_full, welfare_full_se=se_full)
        for i, (m, s) in enumerate(zip(batch.pooled_mean(), batch.pooled_se())):
            row[f"mean_reward_{i + 1}"] = m
            row[f"mean_reward_{i + 1}_se"] = s
        for label, f in zip(env.profile_labels(), batch.profile_frequencies()):
            row[f"freq_{label}"] = f
        if env.arity == 2:
            row["exit_to_cooperation"] = exit_fraction(batch, TO_COOPERATION)
            row["exit_to_defection"] = exit_fraction(batch, TO_DEFECTION)
        return row

    def _run_batch(self, point, overrides, suffix, outcome: ExperimentOutcome):
        env = build_environment(point.environment)
        batch = self._batch(point, env, build_sim_config(point, env))
        row = self._batch_row(point, overrides, env, batch)
        outcome.append_rows("summary", [row])
        outcome.append_rows(
            "paths", [{**overrides, **p.to_row()} for p in batch.paths]
        )
        for n, trace in enumerate(batch.traces):
            if trace is not None:
                outcome.traces[f"trace{suffix}_p{n}"] = trace

    def _run_trace(self, point, overrides, suffix, outcome: ExperimentOutcome):
        env = build_environment(point.environment)
        sim = build_sim_config(point, env, trace_level="full")
        batch = self._batch(point, env, sim)
        row = self._batch_row(point, overrides, env, batch)
        outcome.append_rows("summary", [row])
        for n, trace in enumerate(batch.traces):
            outcome.traces[f"trace{suffix}_p{n}"] = trace
        outcome.summaries.append(
            (f"{point.name}{suffix}", _summary_frame([row], overrides))
        )

    def _run_bias_sweep(self, point, overrides, suffix, outcome: ExperimentOutcome):
        env = build_environment(point.environment)
        sweep_block = point.bias_grid
        kappas = sweep_block.grid.kappas
        for k1, k2 in sweep_block.profiles:
            if k1 not in kappas or k2 not in kappas:
                raise _config_error(
                    point,
                    "bias_grid.profiles",
                    f"profile ({k1},{k2}) is outside the bias grid",
                )
        base = build_agent_specs(point, env)[0]
        sim = build_sim_config(point, env)
        sweep = sweep_bias_grid(
            env,
            base,
            sweep_block.grid,
            sim,
            common_random_numbers=sweep_block.common_random_numbers,
            threads=self.threads,
            backend=self.backend,
        )
        self._store_matrices(sweep, suffix, outcome)
        outcome.documents[f"nash{suffix}"] = {
            **nash_report(sweep.anonymized, sweep_block.tolerance),
            "parameters": {**overrides, **parameter_columns(point)},
        }
        if sweep.anonymized_full is not None:
            outcome.documents[f"nash_full{suffix}"] = nash_report(
                sweep.anonymized_full, sweep_block.tolerance
            )

        labels = env.profile_labels()
        rows = []
        for k1, k2 in sweep_block.profiles:
            batch = sweep.batches[(k1, k2)]
            row = {**overrides, "kappa_1": k1, "kappa_2": k2}
            for label, f in zip(labels, batch.profile_frequencies()):
                row[f"freq_{label}"] = f
            rows.append(row)
        if rows:
            outcome.append_rows("profiles", rows)
            outcome.summaries.append(
                (f"profile frequencies{suffix}", pd.DataFrame(rows))
            )
        outcome.summaries.append(
            (f"anonymized gains{suffix}", sweep.anonymized.to_frame())
        )

    def _store_matrices(
        self, sweep: BiasSweep, suffix: str, outcome: ExperimentOutcome
    ):
        matrices = {
            "gains": sweep.anonymized,
            "gains_seat1": sweep.seat1,
            "gains_seat2": sweep.seat2,
            "cc_frequency": sweep.cc_frequency,
            "gains_full": sweep.anonymized_full,
            "gains_full_seat1": sweep.seat1_full,
            "gains_full_seat2": sweep.seat2_full,
        }
        for name, matrix in matrices.items():
            if matrix is None:
                continue
            outcome.tables[f"{name}{suffix}"] = matrix.to_frame()
            outcome.documents[f"{name}{suffix}.meta"] = _matrix_metadata(matrix)

    def _run_exit_durations(
        self, point, overrides, suffix, outcome: ExperimentOutcome
    ):
        env = build_environment(point.environment)
        durations = point.durations or DurationsBlock()
        phases = [
            # (phase, initial table, exit that ends the phase)
            ("cooperative", "favorable_q", TO_DEFECTION),
            ("defective", "unfavorable_q", TO_COOPERATION),
        ]
        rows = []
        for phase, table, direction in phases:
            sim = build_sim_config(
                point,
                env,
                initial_q=getattr(durations, table),
                initial_q_field=f"durations.{table}",
            )
            batch = self._batch(point, env, sim)
            times = [p.exit_time(direction) for p in batch.paths]
            either = [_earliest(p.first_crossing[direction]) for p in batch.paths]
            rows.append(
                {
                    **overrides,
                    **parameter_columns(point),
                    "phase": phase,
                    "direction": direction,
                    "median_duration": median_duration(times, sim.horizon),
                    "mean_duration": mean_duration(times, sim.horizon),
                    "censored": sum(t is None for t in times),
                    "median_single_crossing": median_duration(either, sim.horizon),
                }
            )
        outcome.append_rows("durations", rows)
        outcome.summaries.append(
            (f"phase durations{suffix}", _summary_frame(rows, overrides))
        )

    def _run_conditional_frequency(
        self, point, overrides, suffix, outcome: ExperimentOutcome
    ):
        env = build_environment(point.environment)
        sim = build_sim_config(point, env, trace_level="full")
        batch = self._batch(point, env, sim)
        spec = point.histogram or HistogramSpec(
            width=config.HISTOGRAM_WIDTH,
            bins=config.HISTOGRAM_BINS,
            min_count=config.HISTOGRAM_MIN_COUNT,
        )
        curve = conditional_frequency_curve(batch.traces, spec)
        rows = [
            {
                **overrides,
                "k": b.k,
                "lower": b.lower,
                "upper": b.upper,
                "count": b.count,
                "frequency": b.frequency,
            }
            for b in curve
        ]
        outcome.append_rows("conditional_frequency", rows)
        outcome.append_rows("summary", [self._batch_row(point, overrides, env, batch)])
        if rows:
            outcome.summaries.append(
                (f"conditional frequency{suffix}", pd.DataFrame(rows))
            )

    def _run_static_payoffs(self, point, overrides, suffix, outcome: ExperimentOutcome):
        env = build_environment(point.environment)
        table = stage_payoffs(env)
        labels = env.action_labels()
        indices = list(range(len(labels)))
        row = GainMatrix(indices, table)
        col = GainMatrix(indices, np.asarray(table).T)
        equilibria = pure_nash_two_seat(row, col)
        frame = pd.DataFrame(table, index=labels, columns=labels)
        frame.index.name = "own"
        outcome.tables[f"payoffs{suffix}"] = frame
        outcome.documents[f"nash{suffix}"] = {
            "equilibria": [
                {
                    "profile": [labels[i], labels[j]],
                    "value": float(table[i][j]),
                    "pressures": list(two_seat_pressure(row, col, (i, j))),
                }
                for i, j in equilibria
            ],
            "joint_max": _joint_max(table, labels),
            "tolerance": 0.0,
        }
        outcome.summaries.append((f"stage payoffs{suffix}", frame))

    def _summarize_batches(self, outcome: ExperimentOutcome):
        axes = list(self.run_config.grid.keys())
        summary = outcome.tables["summary"]
        outcome.summaries.append(
            (self.run_config.name, _summary_frame(summary.to_dict("records"), axes))
        )
        if len(axes) != 2:
            return
        for value in ("welfare", "exit_to_cooperation"):
            if value not in summary:
                continue
            pivot = summary.pivot(index=axes[0], columns=axes[1], values=value)
            outcome.tables[f"{value}_pivot"] = pivot
            outcome.summaries.append((f"{value} ({axes[0]} x {axes[1]})", pivot))


def stage_payoffs(env: Environment) -> List[List[float]]:
    """Row player's one-shot (expected) payoff for every pure action profile"""
    if isinstance(env, LogitDuopolyEnv):
        return [list(row) for row in env.profit_matrix()]
    if isinstance(env, PrisonersDilemmaEnv):
        return [list(row) for row in env.expected_payoffs()]
    raise UsageError(f"{type(env).__name__} has no stage game")


def _joint_max(table: List[List[float]], labels: List[str]) -> Dict[str, Any]:
    best = max(range(len(labels)), key=lambda k: table[k][k])
    return {
        "profile": [labels[best], labels[best]],
        "value": float(table[best][best]),
    }


def _earliest(times) -> Optional[int]:
    finite = [t for t in times if t is not None]
    return min(finite) if finite else None


def _matrix_metadata(matrix: GainMatrix) -> Dict[str, Any]:
    meta = dict(matrix.metadata)
    meta["kappas"] = list(matrix.kappas)
    if matrix.se is not None:
        meta["se"] = matrix.se.tolist()
    return meta


SUMMARY_COLUMNS = [
    "welfare",
    "welfare_se",
    "welfare_full",
    "exit_to_cooperation",
    "phase",
    "median_duration",
    "mean_duration",
    "median_single_crossing",
    "censored",
]


def _summary_frame(rows: List[Dict[str, Any]], leading) -> pd.DataFrame:
    """Compact console view: leading columns, headline statistics, frequencies"""
    frame = pd.DataFrame(rows)
    keep = [c for c in list(leading) + SUMMARY_COLUMNS if c in frame]
    keep += [c for c in frame.columns if c.startswith("freq_")]
    return frame[keep]
