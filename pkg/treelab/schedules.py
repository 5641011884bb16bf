import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

from config import DP_SUBPROBLEM_CAP, LOOKAHEAD_MAX, POLYLOG_EXPONENT, SAMPLE_CAP
from treelab.errors import ConfigError
from treelab.oracle import AccessMode
from utils.checks import check_choice, check_open_unit, check_positive

SCHEDULE_KINDS = ("constant", "polylog", "two_phase")


def polylog_k(s: int, exponent: float) -> int:
    if s < 2:
        return 1
    return max(1, math.ceil(math.log2(s) ** exponent))


def default_phase_split(s: int) -> int:
    """ceil(log s / log log s), falling back to ceil(log s) while log log s <= 0."""
    log_s = math.log2(s) if s > 1 else 0.0
    log_log_s = math.log2(log_s) if log_s > 1 else 0.0
    if log_log_s <= 0:
        return math.ceil(log_s)
    return math.ceil(log_s / log_log_s)


@dataclass(frozen=True)
class GreedSchedule:
    """Candidate count k(t) per tree level t."""
    kind: str = "polylog"
    k1: int = 1
    k2: int = 1
    phase_split: Optional[int] = None
    exponent: float = POLYLOG_EXPONENT

    def __post_init__(self):
        check_choice("schedule kind", self.kind, SCHEDULE_KINDS)
        check_positive("k1", self.k1)
        check_positive("k2", self.k2)
        if self.phase_split is not None and self.phase_split < 0:
            raise ConfigError(f"phase split must be >= 0, got {self.phase_split}")
        if self.exponent <= 0:
            raise ConfigError(f"polylog exponent must be > 0, got {self.exponent}")

    @classmethod
    def constant(cls, k: int) -> "GreedSchedule":
        return cls(kind="constant", k1=k, k2=k)

    @classmethod
    def polylog(cls, exponent: float = POLYLOG_EXPONENT) -> "GreedSchedule":
        return cls(kind="polylog", exponent=exponent)

    @classmethod
    def two_phase(cls, k1: int, k2: int, phase_split: Optional[int] = None) -> "GreedSchedule":
        return cls(kind="two_phase", k1=k1, k2=k2, phase_split=phase_split)

    def resolved_phase_split(self, s: int) -> int:
        return default_phase_split(s) if self.phase_split is None else self.phase_split

    def k_at(self, level: int, s: int) -> int:
        if self.kind == "constant":
            return self.k1
        if self.kind == "polylog":
            return polylog_k(s, self.exponent)
        return self.k1 if level < self.resolved_phase_split(s) else self.k2

    def levels(self, depth: int, s: int) -> List[int]:
        return [self.k_at(t, s) for t in range(depth)]

    def csv_fields(self, s: int) -> dict:
        if self.kind == "two_phase":
            return {"k1": self.k1, "k2": self.k2, "phase_split": self.resolved_phase_split(s)}
        k = self.k_at(0, s)
        return {"k1": k, "k2": k, "phase_split": 0}


@dataclass(frozen=True)
class LearnerConfig:
    s: int
    eps: float = 0.05
    delta: float = 0.05
    depth: Optional[int] = None
    schedule: GreedSchedule = field(default_factory=GreedSchedule.polylog)
    lookahead: int = 0
    mode: Union[AccessMode, str] = AccessMode.MQ
    seed: int = 0
    exact: bool = False
    proper: str = "strict"
    sample_cap: Optional[int] = SAMPLE_CAP
    dp_candidates: str = "all"
    dp_cap: int = DP_SUBPROBLEM_CAP

    def __post_init__(self):
        check_positive("s", self.s)
        check_open_unit("eps", self.eps)
        check_open_unit("delta", self.delta)
        check_positive("seed", self.seed, minimum=0)
        if self.depth is not None and self.depth < 0:
            raise ConfigError(f"depth cap must be >= 0, got {self.depth}")
        if not 0 <= self.lookahead <= LOOKAHEAD_MAX:
            raise ConfigError(f"lookahead must lie in [0, {LOOKAHEAD_MAX}], got {self.lookahead}")
        check_choice("proper", self.proper, ("strict", "weak"))
        check_choice("dp_candidates", self.dp_candidates, ("all", "topk"))
        if self.sample_cap is not None:
            check_positive("sample_cap", self.sample_cap)
        object.__setattr__(self, "mode", AccessMode(self.mode))

    @property
    def depth_cap(self) -> int:
        """Explicit depth, else ceil(log2(s / eps))."""
        if self.depth is not None:
            return self.depth
        return max(0, math.ceil(math.log2(self.s / self.eps)))

    @property
    def tau(self) -> float:
        """Per-level influence floor eps / (4d)."""
        return self.eps / (4 * max(1, self.depth_cap))

    def k_at(self, level: int) -> int:
        return self.schedule.k_at(level, self.s)


@dataclass
class SearchStats:
    algorithm: str = ""
    subproblems_explored: int = 0
    subproblem_visits: int = 0
    level_expansions: List[int] = field(default_factory=list)
    mq_count: int = 0
    ex_count: int = 0
    wall_ms: float = 0.0
    estimate_calls: int = 0
    capped_estimates: int = 0
    error_estimate: Optional[float] = None

    def record_level(self, level: int):
        while len(self.level_expansions) <= level:
            self.level_expansions.append(0)
        self.level_expansions[level] += 1
        self.subproblems_explored += 1


def subproblem_bound(cfg: LearnerConfig) -> int:
    """Product over levels t < d of 2 k(t); memoization can only lower the count."""
    bound = 1
    for k in cfg.schedule.levels(cfg.depth_cap, cfg.s):
        bound *= 2 * k
    return bound
