"""Noise-level schedule, timestep plan, and the multi-phase fusion weight.

Time runs from t=1 (pure noise) down to t=0 (clean).  The fusion weight
lambda(t) gates how much of the relit appearance enters the hybrid flow
target: zero during the geometric isolation phase (t > tau_g), a
root-squared ramp up to lambda_max on [tau_r, tau_g], a plateau on
[tau_s, tau_r), and a linear decay to lambda_end near t=0.  A two-phase
preset (zero for the first 60% of the trajectory, then a linear ramp to
0.5) is available as ``appendix_two_phase``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MODES = ("four_phase", "appendix_two_phase")

# two-phase preset: weight stays 0 while t > 0.4, then ramps linearly to 0.5 at t=0
TWO_PHASE_SPLIT = 0.4
TWO_PHASE_MAX = 0.5

SIGMA_FORMS = ("linear", "cosine")


@dataclass(frozen=True)
class FusionSchedule:
    tau_g: float = 0.7
    tau_r: float = 0.5
    tau_s: float = 0.2
    lambda_max: float = 0.5
    lambda_end: float = 0.25
    mode: str = "four_phase"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "four_phase":
            if not (0.0 < self.tau_s < self.tau_r < self.tau_g <= 1.0):
                raise ValueError(
                    f"need 0 < tau_s < tau_r < tau_g <= 1, got "
                    f"tau_s={self.tau_s}, tau_r={self.tau_r}, tau_g={self.tau_g}"
                )
        if not 0.0 <= self.lambda_max <= 1.0:
            raise ValueError(f"lambda_max must lie in [0, 1], got {self.lambda_max}")
        if not 0.0 <= self.lambda_end <= self.lambda_max:
            raise ValueError(
                f"lambda_end must lie in [0, lambda_max], got {self.lambda_end} vs {self.lambda_max}"
            )


def lambda_at(schedule: FusionSchedule, t: float) -> float:
    """Fusion weight at time t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if schedule.mode == "appendix_two_phase":
        if t > TWO_PHASE_SPLIT:
            return 0.0
        return TWO_PHASE_MAX * (TWO_PHASE_SPLIT - t) / TWO_PHASE_SPLIT
    if t > schedule.tau_g:
        return 0.0
    if t >= schedule.tau_r:
        frac = (schedule.tau_g - t) / (schedule.tau_g - schedule.tau_r)
        return schedule.lambda_max * math.sqrt(frac)
    if t >= schedule.tau_s:
        return schedule.lambda_max
    return (schedule.lambda_max - schedule.lambda_end) / schedule.tau_s * t + schedule.lambda_end


def check_continuity(schedule: FusionSchedule, grid: int = 1000) -> float:
    """Max jump of lambda across the phase boundaries, probed at +/- 1e-9.

    ``grid`` additionally samples lambda over [0, 1] to confirm the range
    invariant; it must be >= 1000 so the sweep is dense enough to matter.
    """
    if grid < 1000:
        raise ValueError(f"grid must be >= 1000, got {grid}")
    eps = 1e-9
    if schedule.mode == "appendix_two_phase":
        boundaries = [TWO_PHASE_SPLIT]
    else:
        boundaries = [schedule.tau_g, schedule.tau_r, schedule.tau_s]
    max_jump = 0.0
    for b in boundaries:
        lo = max(0.0, b - eps)
        hi = min(1.0, b + eps)
        max_jump = max(max_jump, abs(lambda_at(schedule, hi) - lambda_at(schedule, lo)))
    for t in np.linspace(0.0, 1.0, grid):
        v = lambda_at(schedule, float(t))
        if not 0.0 <= v <= max(schedule.lambda_max, TWO_PHASE_MAX) + 1e-15:
            raise AssertionError(f"lambda({t}) = {v} escapes its range")
    return max_jump


def sigma_of(t: float, form: str = "linear") -> float:
    """Noise level at time t; both forms hit sigma(0)=0 and sigma(1)=1."""
    if form == "linear":
        return t
    if form == "cosine":
        return 1.0 - math.cos(math.pi * t / 2.0)
    raise ValueError(f"sigma_form must be one of {SIGMA_FORMS}, got {form!r}")


@dataclass(frozen=True)
class StepPlan:
    """Descending times t_k with their noise levels and successor levels.

    times[k] = 1 - k/K (0-indexed k), successor times 1 - (k+1)/K; the final
    successor sigma is exactly 0 so the last update lands on its target.
    """

    times: np.ndarray
    sigmas: np.ndarray
    sigmas_next: np.ndarray
    delta: float

    def __post_init__(self):
        for name in ("times", "sigmas", "sigmas_next"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.times.shape == self.sigmas.shape == self.sigmas_next.shape):
            raise ValueError("times / sigmas / sigmas_next must share a shape")
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if np.any(np.diff(self.sigmas) >= 0):
            raise ValueError("sigmas must be strictly decreasing")
        if self.sigmas_next[-1] != 0.0:
            raise ValueError("terminal successor sigma must be exactly 0")
        if np.any(self.sigmas_next >= self.sigmas):
            raise ValueError("each successor sigma must be below its step sigma")

    @property
    def steps(self) -> int:
        return self.times.shape[0]


def make_step_plan(steps: int, sigma_form: str = "linear", delta: float = 1e-8) -> StepPlan:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if sigma_form not in SIGMA_FORMS:
        raise ValueError(f"sigma_form must be one of {SIGMA_FORMS}, got {sigma_form!r}")
    k = np.arange(steps, dtype=np.float64)
    times = 1.0 - k / steps
    times_next = 1.0 - (k + 1.0) / steps
    times_next[-1] = 0.0
    sigmas = np.array([sigma_of(float(t), sigma_form) for t in times])
    sigmas_next = np.array([sigma_of(float(t), sigma_form) for t in times_next])
    return StepPlan(times=times, sigmas=sigmas, sigmas_next=sigmas_next, delta=delta)


def schedule_csv_rows(schedule: FusionSchedule, grid: int = 200) -> list[tuple[float, float]]:
    """(t, lambda(t)) samples for plotting / the dump-schedule command."""
    return [(float(t), lambda_at(schedule, float(t))) for t in np.linspace(0.0, 1.0, grid)]
