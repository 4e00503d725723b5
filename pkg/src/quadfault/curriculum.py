"""Failure-coefficient schedulers: adaptive, linear, uniform, fixed, none.

Every scheduler produces the interval [L, U] that the per-episode failure
coefficient k is drawn from:

  * acdr_e2h / acdr_h2e - adaptive curriculum: a buffer of episode returns
    is averaged every `m` episodes; when the average beats a ratcheting
    threshold the interval steps down (easy2hard, from [1.5, 1.5]) or up
    (hard2easy, from [0.0, 0.0]) by (delta_L, delta_U).
  * lcdr_e2h / lcdr_h2e - linear curriculum: N equal time stages over the
    training budget, interval moves k_max/(N-1) per stage.
  * udr   - uniform randomization over [0, k_max], no curriculum.
  * fixed - constant k (non-curriculum comparison trainings).
  * baseline - no randomization, k pinned at 1.0.

Intervals are clamped to [0, k_max]; an optional global interval clamp
restricts training to a sub-range (e.g. [0.5, 1.5]) in any mode.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .failure import K_MAX

MODES = ("acdr_e2h", "acdr_h2e", "lcdr_e2h", "lcdr_h2e", "udr", "fixed", "baseline")
ADAPTIVE_MODES = ("acdr_e2h", "acdr_h2e")
LINEAR_MODES = ("lcdr_e2h", "lcdr_h2e")


def lcdr_interval(elapsed_steps: int, total_steps: int, n_stages: int,
                  mode: str, k_max: float = K_MAX) -> tuple[float, float]:
    """Degenerate interval [L, U] of the linear schedule at a point in time.

    Stage i = min(N-1, elapsed // floor(T/N)) and step size k_max/(N-1);
    easy2hard walks k_max -> 0, hard2easy walks 0 -> k_max. Pure function:
    replaying it yields the exact training schedule.
    """
    if mode not in LINEAR_MODES:
        raise ValueError(f"mode must be one of {LINEAR_MODES}, got {mode!r}")
    if n_stages < 2:
        raise ValueError("n_stages must be >= 2")
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= elapsed_steps <= total_steps:
        raise ValueError("elapsed_steps must be in [0, total_steps]")
    stage_len = total_steps // n_stages
    stage = min(n_stages - 1, elapsed_steps // stage_len)
    delta = k_max / (n_stages - 1)
    value = k_max - stage * delta if mode == "lcdr_e2h" else stage * delta
    return (value, value)


@dataclass
class CurriculumState:
    """Scheduler state owned by the training orchestrator."""

    mode: str
    L: float = 0.0
    U: float = 0.0
    g_threshold: float = 0.0
    buffer: list[float] = field(default_factory=list)
    m: int = 10
    delta_L: float = 0.01
    delta_U: float = 0.01
    k_max: float = K_MAX
    fixed_k: float = 1.0
    lcdr_N: int = 11
    total_steps_T: int = 0
    elapsed_steps: int = 0
    interval_clamp: tuple[float, float] | None = None
    update_count: int = 0
    trace: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown curriculum mode {self.mode!r}; choose from {MODES}")
        if self.mode in LINEAR_MODES and self.total_steps_T <= 0:
            raise ValueError("linear curricula need total_steps_T > 0")
        if self.m < 1:
            raise ValueError("buffer trigger size m must be >= 1")
        if not self.trace:
            self.trace.append(self._trace_row())

    def _trace_row(self) -> tuple:
        L, U = self.current_interval()
        return (self.update_count, self.elapsed_steps, L, U, self.g_threshold)

    # ------------------------------------------------------------------

    def current_interval(self) -> tuple[float, float]:
        """Active [L, U] for episode sampling, after the optional global clamp."""
        if self.mode == "udr":
            interval = (0.0, self.k_max)
        elif self.mode == "baseline":
            interval = (1.0, 1.0)
        elif self.mode == "fixed":
            interval = (self.fixed_k, self.fixed_k)
        elif self.mode in LINEAR_MODES:
            elapsed = min(self.elapsed_steps, self.total_steps_T)
            interval = lcdr_interval(elapsed, self.total_steps_T, self.lcdr_N,
                                     self.mode, self.k_max)
        else:
            interval = (self.L, self.U)
        if self.interval_clamp is not None:
            lo, hi = self.interval_clamp
            interval = (min(max(interval[0], lo), hi), min(max(interval[1], lo), hi))
        return interval

    def record_return(self, g: float) -> "CurriculumState":
        """Feed one finished episode's (undiscounted) return.

        Every time the buffer reaches m entries its mean is compared to the
        threshold; on success the mode's interval update fires and the
        threshold ratchets to the new mean. The buffer clears after every
        size-m check, pass or fail.
        """
        if not isinstance(g, (int, float)) or not math.isfinite(g):
            raise ValueError(f"episode return must be finite, got {g!r}")
        self.buffer.append(float(g))
        if len(self.buffer) >= self.m:
            g_bar = sum(self.buffer) / len(self.buffer)
            if g_bar >= self.g_threshold:
                if self.mode == "acdr_e2h":
                    update_easy2hard(self)
                elif self.mode == "acdr_h2e":
                    update_hard2easy(self)
                self.g_threshold = g_bar
                if self.mode in ADAPTIVE_MODES:
                    self.update_count += 1
                    self.trace.append(self._trace_row())
            self.buffer = []
        return self

    def advance_steps(self, n: int) -> None:
        """Account n environment steps (drives the linear schedules)."""
        before = self.current_interval()
        self.elapsed_steps += n
        if self.mode in LINEAR_MODES and self.current_interval() != before:
            self.update_count += 1
            self.trace.append(self._trace_row())

    # ------------------------------------------------------------------

    def write_trace_csv(self, path) -> None:
        """Interval history: (update_index, elapsed_steps, L, U, g_threshold)."""
        write_trace_csv(path, self.trace)

    def state_dict(self) -> dict:
        return {
            "mode": self.mode, "L": self.L, "U": self.U,
            "g_threshold": self.g_threshold, "buffer": list(self.buffer),
            "m": self.m, "delta_L": self.delta_L, "delta_U": self.delta_U,
            "k_max": self.k_max, "fixed_k": self.fixed_k, "lcdr_N": self.lcdr_N,
            "total_steps_T": self.total_steps_T, "elapsed_steps": self.elapsed_steps,
            "interval_clamp": list(self.interval_clamp) if self.interval_clamp else None,
            "update_count": self.update_count,
            "trace": [list(row) for row in self.trace],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "CurriculumState":
        clamp = state.get("interval_clamp")
        return cls(
            mode=state["mode"], L=state["L"], U=state["U"],
            g_threshold=state["g_threshold"], buffer=list(state["buffer"]),
            m=state["m"], delta_L=state["delta_L"], delta_U=state["delta_U"],
            k_max=state["k_max"], fixed_k=state["fixed_k"], lcdr_N=state["lcdr_N"],
            total_steps_T=state["total_steps_T"], elapsed_steps=state["elapsed_steps"],
            interval_clamp=tuple(clamp) if clamp else None,
            update_count=state["update_count"],
            trace=[tuple(row) for row in state["trace"]],
        )


def make_curriculum(mode: str, *, m: int = 10, delta: float = 0.01,
                    g_threshold: float = 0.0, k_max: float = K_MAX,
                    fixed_k: float = 1.0, lcdr_N: int = 11,
                    total_steps_T: int = 0,
                    interval_clamp: tuple[float, float] | None = None) -> CurriculumState:
    """CurriculumState with the mode's canonical initial interval."""
    if mode == "acdr_e2h":
        L = U = k_max
    elif mode == "acdr_h2e":
        L = U = 0.0
    elif mode == "fixed":
        L = U = fixed_k
    elif mode == "udr":
        L, U = 0.0, k_max
    elif mode == "baseline":
        L = U = 1.0
    elif mode in LINEAR_MODES:
        L = U = 0.0  # unused; interval comes from the schedule
    else:
        raise ValueError(f"unknown curriculum mode {mode!r}; choose from {MODES}")
    return CurriculumState(mode=mode, L=L, U=U, g_threshold=g_threshold, m=m,
                           delta_L=delta, delta_U=delta, k_max=k_max,
                           fixed_k=fixed_k, lcdr_N=lcdr_N,
                           total_steps_T=total_steps_T,
                           interval_clamp=interval_clamp)


def update_easy2hard(state: CurriculumState) -> CurriculumState:
    """One adaptive step toward harder conditions: interval moves down."""
    state.U = max(0.0, state.U - state.delta_U)
    state.L = max(0.0, state.L - state.delta_L)
    state.L = min(state.L, state.U)
    return state


def update_hard2easy(state: CurriculumState) -> CurriculumState:
    """One adaptive step toward easier conditions: interval moves up."""
    state.U = min(state.k_max, state.U + state.delta_U)
    state.L = min(state.k_max, state.L + state.delta_L)
    state.L = min(state.L, state.U)
    return state


def record_return(state: CurriculumState, g: float) -> CurriculumState:
    return state.record_return(g)


def current_interval(state: CurriculumState) -> tuple[float, float]:
    return state.current_interval()


def write_trace_csv(path, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update_index", "elapsed_steps", "L", "U", "g_threshold"])
        for row in rows:
            writer.writerow(row)


def stateless_schedule(mode: str, total_steps: int, *, lcdr_N: int = 11,
                       k_max: float = K_MAX, fixed_k: float = 1.0) -> list[tuple]:
    """Precomputable trace rows for the non-adaptive modes.

    Linear curricula emit one row per stage; udr/fixed/baseline are a
    single constant row. Adaptive modes depend on observed returns and
    cannot be traced ahead of time.
    """
    if mode in ADAPTIVE_MODES:
        raise ValueError(f"{mode} depends on training returns; its trace is "
                         "recorded during a run, not precomputed")
    if mode in LINEAR_MODES:
        stage_len = total_steps // lcdr_N
        rows = []
        for stage in range(lcdr_N):
            elapsed = stage * stage_len
            L, U = lcdr_interval(elapsed, total_steps, lcdr_N, mode, k_max)
            rows.append((stage, elapsed, L, U, 0.0))
        return rows
    state = make_curriculum(mode, fixed_k=fixed_k, k_max=k_max)
    L, U = state.current_interval()
    return [(0, 0, L, U, 0.0)]
