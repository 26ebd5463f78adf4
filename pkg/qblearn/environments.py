import copy
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from core import QTable, RngStream, biased_score
from errors import InvalidParameterError, UsageError
from models import AgentSpec

COOPERATE = 0
DEFECT = 1


class Environment(ABC):
    """Abstract base class for all environments"""

    arity: int = 1

    @property
    @abstractmethod
    def num_actions(self) -> int:
        """Number of actions available to each agent"""

    @abstractmethod
    def step(self, actions: Sequence[int], rng: RngStream) -> Tuple[float, ...]:
        """Play one period and return one reward per agent"""

    @abstractmethod
    def reward_bounds(self) -> Tuple[float, float]:
        """Smallest and largest achievable per-period reward"""

    @abstractmethod
    def delta(self, q: QTable, spec: AgentSpec) -> float:
        """Score difference whose sign gives the greedy choice class"""

    @abstractmethod
    def action_labels(self) -> List[str]:
        """Human-readable action names, by index"""

    @abstractmethod
    def default_distortion(self) -> Tuple[float, ...]:
        """Distortion G used when a config does not set one"""

    def reset(self) -> None:
        """Restore the initial state; stateless environments have none"""

    def spawn(self) -> "Environment":
        """Fresh per-path instance; stateless environments can be shared"""
        return self

    @property
    def num_profiles(self) -> int:
        return self.num_actions**self.arity

    def profile_index(self, actions: Sequence[int]) -> int:
        index = 0
        for a in actions:
            index = index * self.num_actions + a
        return index

    def profile_labels(self) -> List[str]:
        labels = self.action_labels()
        if self.arity == 1:
            return list(labels)
        return [a + b for a in labels for b in labels]


# Two-state decision automaton


class DecisionAutomatonEnv(Environment):
    """
    Single agent against an automaton that moves between a favorable state 1
    and an unfavorable state 2 depending on the agent's action.

    Actions and states are 1-based in the literature; internally action index
    0 is action 1. The state is never exposed through the step interface.
    """

    arity = 1

    def __init__(
        self,
        x: float = 1.0,
        y: float = -0.5,
        pi1_12: float = 0.01,
        pi1_21: float = 0.05,
        pi2_12: float = 0.05,
        pi2_21: float = 0.0,
        initial_state: int = 2,
    ):
        if initial_state not in (1, 2):
            raise InvalidParameterError(f"state must be 1 or 2, got {initial_state}")
        # transition[a][theta][theta'], 0-based
        self.transition = (
            ((1.0 - pi1_12, pi1_12), (pi1_21, 1.0 - pi1_21)),
            ((1.0 - pi2_12, pi2_12), (pi2_21, 1.0 - pi2_21)),
        )
        for matrix in self.transition:
            for row in matrix:
                if any(not 0.0 <= p <= 1.0 for p in row) or not math.isclose(
                    sum(row), 1.0
                ):
                    raise InvalidParameterError(f"invalid transition row {row}")
        # payoff[a][theta]
        self.payoff = ((2.0, y), (x, 1.0))
        self.x = x
        self.y = y
        self.initial_state = initial_state
        self._state = initial_state - 1

    @property
    def num_actions(self) -> int:
        return 2

    def reset(self) -> None:
        self._state = self.initial_state - 1

    def spawn(self) -> "DecisionAutomatonEnv":
        env = copy.copy(self)
        env.reset()
        return env

    def step(self, actions: Sequence[int], rng: RngStream) -> Tuple[float, ...]:
        return (decision_step(self, actions[0], rng),)

    def reward_bounds(self) -> Tuple[float, float]:
        values = [v for row in self.payoff for v in row]
        return min(values), max(values)

    def delta(self, q: QTable, spec: AgentSpec) -> float:
        scores = biased_score(q, spec)
        return scores[0] - scores[1]

    def action_labels(self) -> List[str]:
        return ["1", "2"]

    def default_distortion(self) -> Tuple[float, ...]:
        return (1.0, 0.0)

    def stationary_occupancy(self, action: int) -> Tuple[float, float]:
        """Long-run (state 1, state 2) weights when `action` is always played"""
        leave_good = self.transition[action][0][1]
        leave_bad = self.transition[action][1][0]
        if leave_good + leave_bad == 0.0:
            return (1.0, 0.0) if self.initial_state == 1 else (0.0, 1.0)
        q = leave_bad / (leave_good + leave_bad)
        return q, 1.0 - q

    def always_cooperate_welfare(self) -> float:
        """Long-run payoff 2q + (1-q)y of playing action 1 forever"""
        q, _ = self.stationary_occupancy(0)
        return 2.0 * q + (1.0 - q) * self.y


def decision_step(env: DecisionAutomatonEnv, action: int, rng: RngStream) -> float:
    """Reward of `action` in the current hidden state, then a state transition"""
    if action not in (0, 1):
        raise UsageError(f"action {action} out of range for 2 actions")
    theta = env._state
    reward = env.payoff[action][theta]
    if rng.uniform() < env.transition[action][theta][1 - theta]:
        env._state = 1 - theta
    return reward


# Prisoner's dilemma


@dataclass(frozen=True)
class PDGame:
    """Stage game with CC=2, CD=y, DC=x, DD=1 for the row player"""

    x: float = 2.5
    y: float = -0.5
    channel: str = "deterministic"  # deterministic | stochastic

    def __post_init__(self):
        if self.channel not in ("deterministic", "stochastic"):
            raise InvalidParameterError(f"unknown channel '{self.channel}'")

    def payoff(self, own: int, other: int) -> float:
        return ((2.0, self.y), (self.x, 1.0))[own][other]


@dataclass(frozen=True)
class StochasticChannel:
    """Binary payoffs z in {0, V}; cooperating costs L"""

    V: float
    L: float
    p0: float
    p1: float
    p2: float
    mode: str = "correlated"  # correlated | independent

    def __post_init__(self):
        if self.V <= 0.0:
            raise InvalidParameterError(f"V must be positive, got {self.V}")
        if not 0.0 <= self.p0 <= self.p1 <= self.p2 <= 1.0:
            raise InvalidParameterError(
                f"need 0 <= p0 <= p1 <= p2 <= 1, got {self.p0}, {self.p1}, {self.p2}"
            )
        if self.mode not in ("correlated", "independent"):
            raise InvalidParameterError(f"unknown channel mode '{self.mode}'")

    @property
    def p(self) -> Tuple[float, float, float]:
        return (self.p0, self.p1, self.p2)

    def expected_gain(self, own: int, other: int) -> float:
        cooperators = (own == COOPERATE) + (other == COOPERATE)
        cost = self.L if own == COOPERATE else 0.0
        return self.p[cooperators] * self.V - cost


def stochastic_params_from_xy(
    x: float, y: float, V: float, mode: str = "correlated"
) -> StochasticChannel:
    """
    Channel whose expected payoffs equal the deterministic (x, y) game:
    p0 = 1/V, p1 = x/V, p2 = (2+x-y)/V and L = x-y. Requires V > 2+x-y.
    """
    if not V > 2.0 + x - y:
        raise InvalidParameterError(f"need V > 2+x-y = {2.0 + x - y}, got V={V}")
    return StochasticChannel(
        V=V, L=x - y, p0=1.0 / V, p1=x / V, p2=(2.0 + x - y) / V, mode=mode
    )


def pd_step(
    game: PDGame,
    channel: Optional[StochasticChannel],
    actions: Sequence[int],
    rng: RngStream,
) -> Tuple[float, float]:
    """Rewards of both players for one period of the prisoner's dilemma"""
    a1, a2 = actions
    if a1 not in (0, 1) or a2 not in (0, 1):
        raise UsageError(f"actions {tuple(actions)} are not in {{C, D}}")
    if game.channel == "deterministic":
        return game.payoff(a1, a2), game.payoff(a2, a1)
    if channel is None:
        raise UsageError("a stochastic game needs a StochasticChannel")

    p = channel.p[(a1 == COOPERATE) + (a2 == COOPERATE)]
    if channel.mode == "correlated":
        z1 = z2 = channel.V if rng.uniform() < p else 0.0
    else:
        z1 = channel.V if rng.uniform() < p else 0.0
        z2 = channel.V if rng.uniform() < p else 0.0
    if a1 == COOPERATE:
        z1 -= channel.L
    if a2 == COOPERATE:
        z2 -= channel.L
    return z1, z2


class PrisonersDilemmaEnv(Environment):
    """Two players, actions C (index 0) and D (index 1)"""

    arity = 2

    def __init__(self, game: PDGame, channel: Optional[StochasticChannel] = None):
        if game.channel == "stochastic" and channel is None:
            raise UsageError("a stochastic game needs a StochasticChannel")
        self.game = game
        self.channel = channel

    @property
    def num_actions(self) -> int:
        return 2

    def step(self, actions: Sequence[int], rng: RngStream) -> Tuple[float, ...]:
        return pd_step(self.game, self.channel, actions, rng)

    def expected_payoffs(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """Row player's expected gains, indexed [own][other]"""
        if self.channel is None or self.game.channel == "deterministic":
            return tuple(
                tuple(self.game.payoff(a, b) for b in (0, 1)) for a in (0, 1)
            )
        return tuple(
            tuple(self.channel.expected_gain(a, b) for b in (0, 1)) for a in (0, 1)
        )

    def reward_bounds(self) -> Tuple[float, float]:
        if self.game.channel == "deterministic":
            values = [self.game.payoff(a, b) for a in (0, 1) for b in (0, 1)]
            return min(values), max(values)
        V, L = self.channel.V, self.channel.L
        return min(-L, 0.0), max(V, V - L)

    def delta(self, q: QTable, spec: AgentSpec) -> float:
        scores = biased_score(q, spec)
        return scores[COOPERATE] - scores[DEFECT]

    def action_labels(self) -> List[str]:
        return ["C", "D"]

    def default_distortion(self) -> Tuple[float, ...]:
        return (1.0, 0.0)


# Logit duopoly


class LogitDuopolyEnv(Environment):
    """
    Price duopoly with logit demand and an outside good.

    Prices live on the grid p^k = price_min + k * price_step. Profits are
    multiplied by `scale`; scale=10 gives the reference static payoff table.
    """

    arity = 2

    def __init__(
        self,
        d: float = 2.0,
        mu: float = 1.0 / 6.0,
        c: float = 1.0,
        price_min: float = 1.4,
        price_step: float = 0.1,
        num_prices: int = 7,
        scale: float = 10.0,
        collusive_threshold: int = 3,
    ):
        if mu <= 0.0:
            raise InvalidParameterError(f"mu must be positive, got {mu}")
        if not 1 <= collusive_threshold < num_prices:
            raise InvalidParameterError("collusive_threshold must be a price index")
        self.d = d
        self.mu = mu
        self.c = c
        self.scale = scale
        self.collusive_threshold = collusive_threshold
        self.prices = tuple(
            round(price_min + k * price_step, 10) for k in range(num_prices)
        )
        self._profits = self.profit_matrix()

    @property
    def num_actions(self) -> int:
        return len(self.prices)

    def market_shares(self, p_i: float, p_j: float) -> Tuple[float, float, float]:
        """Shares of firm i, firm j and the outside good"""
        e_i = math.exp((self.d - p_i) / self.mu)
        e_j = math.exp((self.d - p_j) / self.mu)
        total = 1.0 + e_i + e_j
        return e_i / total, e_j / total, 1.0 / total

    def profit_matrix(self) -> Tuple[Tuple[float, ...], ...]:
        """Row firm's profit for every pair of grid prices"""
        return tuple(
            tuple(logit_profit(self, p_i, p_j) for p_j in self.prices)
            for p_i in self.prices
        )

    def step(self, actions: Sequence[int], rng: RngStream) -> Tuple[float, ...]:
        k1, k2 = actions
        return self._profits[k1][k2], self._profits[k2][k1]

    def reward_bounds(self) -> Tuple[float, float]:
        values = [v for row in self._profits for v in row]
        return min(values), max(values)

    def delta(self, q: QTable, spec: AgentSpec) -> float:
        if spec.is_naive:
            return q[0] - max(q[1:])
        scores = biased_score(q, spec)
        k = self.collusive_threshold
        return max(scores[k:]) - max(scores[:k])

    def action_labels(self) -> List[str]:
        return [f"p{k}" for k in range(len(self.prices))]

    def default_distortion(self) -> Tuple[float, ...]:
        return duopoly_distortion(self)


def logit_profit(env: LogitDuopolyEnv, p_i: float, p_j: float) -> float:
    """scale * (p_i - c) * exp((d-p_i)/mu) / (1 + exp((d-p_i)/mu) + exp((d-p_j)/mu))"""
    share_i, _, _ = env.market_shares(p_i, p_j)
    return env.scale * (p_i - env.c) * share_i


def duopoly_distortion(env: LogitDuopolyEnv) -> Tuple[float, ...]:
    """G(p) = profit when the rival charges the same price"""
    return tuple(logit_profit(env, p, p) for p in env.prices)


# Registry


class EnvironmentRegistry:
    """Maps the config `kind` of an environment block to its builder"""

    def __init__(self):
        self.builders: Dict[str, Callable[..., Environment]] = {}

    def register(self, kind: str, builder: Callable[..., Environment]):
        if not kind:
            raise ValueError("Environment builder must have a kind")
        self.builders[kind] = builder

    def kinds(self) -> List[str]:
        return sorted(self.builders)

    def build(self, block) -> Environment:
        if block.kind not in self.builders:
            raise UsageError(f"Environment kind '{block.kind}' not found")
        return self.builders[block.kind](block)


def _build_decision(block) -> Environment:
    return DecisionAutomatonEnv(
        x=block.x,
        y=block.y,
        pi1_12=block.pi1_12,
        pi1_21=block.pi1_21,
        pi2_12=block.pi2_12,
        pi2_21=block.pi2_21,
        initial_state=block.initial_state,
    )


def _build_prisoners_dilemma(block) -> Environment:
    if block.channel == "deterministic":
        return PrisonersDilemmaEnv(PDGame(block.x, block.y))
    channel = stochastic_params_from_xy(block.x, block.y, block.V, mode=block.channel)
    return PrisonersDilemmaEnv(PDGame(block.x, block.y, "stochastic"), channel)


def _build_duopoly(block) -> Environment:
    return LogitDuopolyEnv(
        d=block.d,
        mu=block.mu,
        c=block.c,
        price_min=block.price_min,
        price_step=block.price_step,
        num_prices=block.num_prices,
        scale=block.scale,
        collusive_threshold=block.collusive_threshold,
    )


registry = EnvironmentRegistry()
registry.register("decision", _build_decision)
registry.register("prisoners-dilemma", _build_prisoners_dilemma)
registry.register("duopoly", _build_duopoly)


def build_environment(block) -> Environment:
    """Build the environment described by a config environment block"""
    return registry.build(block)
