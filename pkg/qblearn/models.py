import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TraceLevel = Literal["none", "aggregates", "full"]
ChannelKind = Literal["deterministic", "correlated", "independent"]
ExperimentKind = Literal[
    "batch",
    "welfare-grid",
    "bias-sweep",
    "exit-durations",
    "conditional-frequency",
    "trace",
    "static-payoffs",
]


class FrozenModel(BaseModel):
    """Immutable model that rejects unknown keys"""

    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_finite(values) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")


def _check_table(table) -> None:
    if not table:
        raise ValueError("initial Q-table is empty")
    _check_finite(table)


class AgentSpec(FrozenModel):
    """Learning parameters and policy bias of one agent"""

    alpha: float = Field(gt=0.0, le=1.0)  # adjustment speed
    epsilon: float = Field(ge=0.0, le=1.0)  # experimentation probability
    delta: float = Field(ge=0.0, lt=1.0)  # discount
    bias: float = 0.0  # b_i, payoff units
    distortion: Tuple[float, ...]  # G_i(a), one weight per action

    @field_validator("distortion")
    @classmethod
    def _finite_distortion(cls, v):
        if not v:
            raise ValueError("distortion must have one entry per action")
        _check_finite(v)
        return v

    @property
    def is_naive(self) -> bool:
        return self.bias == 0.0 or not any(self.distortion)


class SimConfig(FrozenModel):
    """Horizon, path count, initial conditions and seeding of a batch"""

    horizon: int = Field(ge=1)
    num_paths: int = Field(ge=1)
    initial_q: Tuple[Tuple[float, ...], ...]  # one table per agent
    master_seed: int = Field(ge=0, lt=2**64)
    trace_level: TraceLevel = "aggregates"
    window: Optional[int] = None  # trailing periods averaged; None = whole horizon
    stride: int = Field(default=1, ge=1)

    @field_validator("initial_q")
    @classmethod
    def _finite_tables(cls, v):
        for table in v:
            _check_table(table)
        return v

    @model_validator(mode="after")
    def _window_within_horizon(self):
        if self.window is not None and not 1 <= self.window <= self.horizon:
            raise ValueError(
                f"window {self.window} must lie in [1, horizon={self.horizon}]"
            )
        return self

    @property
    def window_start(self) -> int:
        """First period (0-based) inside the averaging window"""
        return 0 if self.window is None else self.horizon - self.window


class HistogramSpec(FrozenModel):
    """Bins I_k = (k*width, k*width + width) for k in {-bins..bins}"""

    width: float = Field(default=0.005, gt=0.0)
    bins: int = Field(default=60, ge=1)
    min_count: int = Field(default=500, ge=1)


class BiasGrid(FrozenModel):
    """Biases b = kappa * increment for a contiguous kappa range"""

    increment: float = Field(gt=0.0)
    kappa_min: int = 0
    kappa_max: int

    @model_validator(mode="after")
    def _nonempty(self):
        if self.kappa_max < self.kappa_min:
            raise ValueError("kappa range is empty")
        return self

    @property
    def kappas(self) -> List[int]:
        return list(range(self.kappa_min, self.kappa_max + 1))

    def bias(self, kappa: int) -> float:
        return kappa * self.increment


# Run-configuration blocks, as written in YAML config files


class DecisionBlock(FrozenModel):
    """Single agent facing the two-state stochastic TIT-for-TAT automaton"""

    kind: Literal["decision"]
    x: float = 1.0
    y: float = -0.5
    pi1_12: float = Field(default=0.01, ge=0.0, le=1.0)
    pi1_21: float = Field(default=0.05, ge=0.0, le=1.0)
    pi2_12: float = Field(default=0.05, ge=0.0, le=1.0)
    pi2_21: float = Field(default=0.0, ge=0.0, le=1.0)
    initial_state: Literal[1, 2] = 2


class PrisonersDilemmaBlock(FrozenModel):
    """Repeated prisoner's dilemma with deterministic or stochastic payoffs"""

    kind: Literal["prisoners-dilemma"]
    x: float = 2.5
    y: float = -0.5
    channel: ChannelKind = "deterministic"
    V: Optional[float] = None  # good-outcome payoff of the stochastic channel

    @model_validator(mode="after")
    def _stochastic_needs_v(self):
        if self.channel != "deterministic" and self.V is None:
            raise ValueError(f"channel '{self.channel}' requires V")
        return self


class DuopolyBlock(FrozenModel):
    """Logit price duopoly on a finite price grid"""

    kind: Literal["duopoly"]
    d: float = 2.0
    mu: float = Field(default=1.0 / 6.0, gt=0.0)
    c: float = 1.0
    price_min: float = 1.4
    price_step: float = Field(default=0.1, gt=0.0)
    num_prices: int = Field(default=7, ge=2)
    scale: float = Field(default=10.0, gt=0.0)
    collusive_threshold: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def _threshold_inside_grid(self):
        if self.collusive_threshold >= self.num_prices:
            raise ValueError("collusive_threshold must be a price index")
        return self


EnvironmentBlock = Annotated[
    Union[DecisionBlock, PrisonersDilemmaBlock, DuopolyBlock],
    Field(discriminator="kind"),
]

DistortionSelector = Literal["auto", "cooperate", "none", "diagonal-profit"]


class AgentsBlock(FrozenModel):
    """Learning parameters shared by all agents; bias and init may be per agent"""

    alpha: float = Field(gt=0.0, le=1.0)
    epsilon: float = Field(ge=0.0, le=1.0)
    delta: float = Field(default=0.95, ge=0.0, lt=1.0)
    bias: Union[float, List[float]] = 0.0
    distortion: Union[DistortionSelector, List[float]] = "auto"
    initial_q: Union[List[float], List[List[float]]]

    @field_validator("bias")
    @classmethod
    def _finite_bias(cls, v):
        _check_finite(v if isinstance(v, list) else [v])
        return v

    @field_validator("distortion")
    @classmethod
    def _finite_weights(cls, v):
        if isinstance(v, list):
            if not v:
                raise ValueError("distortion list is empty")
            _check_finite(v)
        return v

    @field_validator("initial_q")
    @classmethod
    def _finite_tables(cls, v):
        tables = v if v and isinstance(v[0], list) else [v]
        for table in tables:
            _check_table(table)
        return v


class BiasSweepBlock(FrozenModel):
    """Bias grid swept by a bias-sweep experiment"""

    increment: float = Field(gt=0.0)
    kappa_min: int = 0
    kappa_max: int
    common_random_numbers: bool = False
    tolerance: Optional[float] = Field(default=None, ge=0.0)  # None = 2 std errors
    profiles: List[Tuple[int, int]] = []  # profiles whose frequencies are reported

    @property
    def grid(self) -> BiasGrid:
        return BiasGrid(
            increment=self.increment,
            kappa_min=self.kappa_min,
            kappa_max=self.kappa_max,
        )


class DurationsBlock(FrozenModel):
    """Initial tables for the exit-duration experiment"""

    favorable_q: List[float] = [1.5, 1.4]
    unfavorable_q: List[float] = [1.2, 1.25]

    @field_validator("favorable_q", "unfavorable_q")
    @classmethod
    def _finite_tables(cls, v):
        _check_table(v)
        return v


class SimulationBlock(FrozenModel):
    horizon: int = Field(ge=1)
    paths: int = Field(default=1, ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    window: Optional[int] = Field(default=None, ge=1)
    trace: TraceLevel = "aggregates"


class OutputBlock(FrozenModel):
    directory: Optional[str] = None
    formats: List[Literal["csv", "jsonl", "json"]] = ["csv", "jsonl", "json"]
    stride: int = Field(default=1, ge=1)
    decimals: Optional[int] = Field(default=None, ge=0)  # console rounding


class RunConfig(FrozenModel):
    """Complete description of one experiment, as stored in a config file"""

    name: str
    description: str = ""
    experiment: ExperimentKind = "batch"
    environment: EnvironmentBlock
    agents: Optional[AgentsBlock] = None
    simulation: Optional[SimulationBlock] = None
    output: OutputBlock = OutputBlock()
    grid: Dict[str, List[Any]] = {}
    bias_grid: Optional[BiasSweepBlock] = None
    durations: Optional[DurationsBlock] = None
    histogram: Optional[HistogramSpec] = None

    @model_validator(mode="after")
    def _experiment_blocks(self):
        two_player = self.environment.kind != "decision"
        if self.experiment == "bias-sweep" and self.bias_grid is None:
            raise ValueError("bias-sweep experiments need a bias_grid block")
        needs_two = {
            "bias-sweep",
            "exit-durations",
            "conditional-frequency",
            "static-payoffs",
        }
        if self.experiment in needs_two and not two_player:
            raise ValueError(f"{self.experiment} needs a two-player environment")
        if self.experiment != "static-payoffs":
            if self.agents is None or self.simulation is None:
                raise ValueError(
                    f"{self.experiment} needs agents and simulation blocks"
                )
        if self.simulation is not None and self.simulation.window is not None:
            if self.simulation.window > self.simulation.horizon:
                raise ValueError("simulation.window exceeds simulation.horizon")
        for key, values in self.grid.items():
            if not values:
                raise ValueError(f"grid axis '{key}' has no values")
        return self
