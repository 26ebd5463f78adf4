import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from config import config
from core import RngStream, initial_table, q_update, select_action
from environments import Environment
from errors import UsageError
from joblib import Parallel, delayed
from metrics import CrossingDetector, ExitDetector
from models import AgentSpec, SimConfig
from records import TO_COOPERATION, TO_DEFECTION, BatchResult, PathResult, Trace

logger = logging.getLogger(__name__)

DIRECTIONS = (TO_COOPERATION, TO_DEFECTION)

# (environment template, agent specs, simulation config, path index, seed cell)
PathTask = Tuple[Environment, Sequence[AgentSpec], SimConfig, int, Tuple[int, ...]]


def _check_arity(env: Environment, specs: Sequence[AgentSpec], sim: SimConfig):
    if len(specs) != env.arity:
        raise UsageError(
            f"{type(env).__name__} needs {env.arity} agent(s), got {len(specs)}"
        )
    if len(sim.initial_q) != env.arity:
        raise UsageError(
            f"{len(sim.initial_q)} initial Q-tables given for {env.arity} agent(s)"
        )
    for i, (table, spec) in enumerate(zip(sim.initial_q, specs)):
        if len(table) != env.num_actions:
            raise UsageError(
                f"agent {i + 1}: initial Q-table has {len(table)} entries, "
                f"environment has {env.num_actions} actions"
            )
        if len(spec.distortion) != env.num_actions:
            raise UsageError(
                f"agent {i + 1}: distortion has {len(spec.distortion)} entries, "
                f"environment has {env.num_actions} actions"
            )


def run_path(
    env: Environment,
    specs: Sequence[AgentSpec],
    sim: SimConfig,
    path_index: int,
    cell: Tuple[int, ...] = (),
) -> Tuple[PathResult, Optional[Trace]]:
    """
    Simulate one path of sim.horizon periods.

    Each period every agent picks an action from its pre-period table, the
    environment pays the rewards, then every agent updates the entry of the
    action it played. The outcome depends only on (master_seed, cell,
    path_index).

    Args:
        env: Environment template; a fresh instance is spawned for the path
        specs: One AgentSpec per agent
        sim: Horizon, initial tables, seed, window and trace level
        path_index: Index of the path inside its batch
        cell: Extra seed key, used by grid sweeps

    Returns:
        The path aggregates, and the full trace when sim.trace_level == "full"
    """
    _check_arity(env, specs, sim)
    env = env.spawn()
    n = env.arity
    horizon = sim.horizon
    window_start = sim.window_start

    agent_rngs = [
        RngStream.for_agent(sim.master_seed, path_index, i, cell) for i in range(n)
    ]
    env_rng = RngStream.for_environment(sim.master_seed, path_index, n, cell)
    tables = [initial_table(q) for q in sim.initial_q]

    sums_full = [0.0] * n
    sums_window = [0.0] * n
    counts = [0] * env.num_profiles
    exits = {d: ExitDetector(d) for d in DIRECTIONS}
    crossings = {d: CrossingDetector(d, n) for d in DIRECTIONS}

    full = sim.trace_level == "full"
    if full:
        trace_actions = np.empty((horizon, n), dtype=np.int64)
        trace_rewards = np.empty((horizon, n), dtype=float)
        trace_q = np.empty((horizon, n, env.num_actions), dtype=float)
        trace_delta = np.empty((horizon, n), dtype=float)

    for t in range(horizon):
        actions = [select_action(tables[i], specs[i], agent_rngs[i]) for i in range(n)]
        rewards = env.step(actions, env_rng)
        deltas = []
        for i in range(n):
            tables[i] = q_update(
                tables[i], actions[i], rewards[i], specs[i].alpha, specs[i].delta
            )
            deltas.append(env.delta(tables[i], specs[i]))
            sums_full[i] += rewards[i]
            if t >= window_start:
                sums_window[i] += rewards[i]
        counts[env.profile_index(actions)] += 1
        for d in DIRECTIONS:
            exits[d].feed(t, deltas)
            crossings[d].feed(t, deltas)
        if full:
            trace_actions[t] = actions
            trace_rewards[t] = rewards
            trace_q[t] = tables
            trace_delta[t] = deltas

    window = horizon - window_start
    result = PathResult(
        path_index=path_index,
        master_seed=sim.master_seed,
        horizon=horizon,
        window=window,
        mean_reward=tuple(s / window for s in sums_window),
        mean_reward_full=tuple(s / horizon for s in sums_full),
        profile_counts=tuple(counts),
        final_q=tuple(tables),
        exit_times={d: exits[d].time for d in DIRECTIONS},
        first_crossing={d: tuple(crossings[d].times) for d in DIRECTIONS},
    )
    trace = None
    if full:
        trace = Trace(
            actions=trace_actions,
            rewards=trace_rewards,
            q=trace_q,
            delta=trace_delta,
            initial_q=tuple(tuple(q) for q in sim.initial_q),
            specs=tuple(specs),
        )
    return result, trace


def resolve_jobs(threads: Optional[int] = None) -> int:
    """Worker count for joblib; 0 means all available cores"""
    threads = config.THREADS if threads is None else threads
    if threads < 0:
        raise UsageError(f"thread count must be >= 0, got {threads}")
    return -1 if threads == 0 else threads


def run_tasks(
    tasks: Iterable[PathTask],
    threads: Optional[int] = None,
    backend: Optional[str] = None,
) -> List[Tuple[PathResult, Optional[Trace]]]:
    """Run path tasks on a joblib pool; outputs come back in task order"""
    tasks = list(tasks)
    n_jobs = resolve_jobs(threads)
    if n_jobs == 1 or len(tasks) == 1:
        return [run_path(*task) for task in tasks]
    return Parallel(n_jobs=n_jobs, backend=backend or config.BACKEND)(
        delayed(run_path)(*task) for task in tasks
    )


def run_batch(
    env: Environment,
    specs: Sequence[AgentSpec],
    sim: SimConfig,
    threads: Optional[int] = None,
    backend: Optional[str] = None,
    cell: Tuple[int, ...] = (),
) -> BatchResult:
    """
    Run sim.num_paths independent paths with path_index = 0..n-1.

    Results are merged in path_index order, so pooled aggregates do not depend
    on the worker count or backend.
    """
    _check_arity(env, specs, sim)
    logger.debug(
        "Batch of %d paths x %d periods (seed=%d, cell=%s)",
        sim.num_paths,
        sim.horizon,
        sim.master_seed,
        cell,
    )
    tasks = [(env, specs, sim, k, cell) for k in range(sim.num_paths)]
    outputs = run_tasks(tasks, threads=threads, backend=backend)
    return collect_batch(outputs)


def collect_batch(outputs: Sequence[Tuple[PathResult, Optional[Trace]]]) -> BatchResult:
    """Order path outputs by path_index and wrap them in a BatchResult"""
    ordered = sorted(outputs, key=lambda item: item[0].path_index)
    return BatchResult(
        paths=[result for result, _ in ordered],
        traces=[trace for _, trace in ordered],
    )
