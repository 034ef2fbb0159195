"""Lumped-mass explicit generalized-alpha predictor-multicorrector.

Both the background unknowns (Y, Y_t) and the foreground kinematics
(v, a) are treated as first-order pairs: each corrector pass evaluates the
residuals at the alpha levels and the physics turns them into rate
increments with a diagonal (lumped) left-hand side, typically
``alpha_m * M`` plus ``alpha_f * gamma * dt`` times any lumped damping.
The update is ``rate += inc`` and ``value += gamma * dt * inc``.
Foreground positions follow a Newmark-type update driven by the velocity
and acceleration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class InstabilityError(FloatingPointError):
    """Non-finite values appeared during a step."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    rho_inf: float = 0.5
    n_corrector_passes: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.rho_inf <= 1.0:
            raise ValueError("rho_inf must lie in [0, 1]")
        if self.n_corrector_passes < 1:
            raise ValueError("at least one corrector pass is required")

    @property
    def alpha_m(self) -> float:
        return 0.5 * (3.0 - self.rho_inf) / (1.0 + self.rho_inf)

    @property
    def alpha_f(self) -> float:
        return 1.0 / (1.0 + self.rho_inf)

    @property
    def gamma(self) -> float:
        return 0.5 + self.alpha_m - self.alpha_f

    @property
    def beta(self) -> float:
        return 0.25 * (1.0 + self.alpha_m - self.alpha_f) ** 2


@dataclass
class CoupledState:
    """Background and foreground unknowns at one time level (any may be None)."""

    t: float = 0.0
    Y: np.ndarray | None = None
    Yt: np.ndarray | None = None
    x: np.ndarray | None = None
    v: np.ndarray | None = None
    a: np.ndarray | None = None
    step: int = 0
    extra: dict = field(default_factory=dict)

    def copy(self) -> "CoupledState":
        c = lambda z: None if z is None else z.copy()
        return CoupledState(self.t, c(self.Y), c(self.Yt), c(self.x), c(self.v), c(self.a),
                            self.step, dict(self.extra))


@dataclass
class Levels:
    """Intermediate (alpha-level) quantities handed to the physics."""

    t: float
    dt: float
    Y: np.ndarray | None
    Yt: np.ndarray | None
    x: np.ndarray | None
    v: np.ndarray | None
    a: np.ndarray | None
    pass_index: int
    alpha_m: float = 1.0
    alpha_f: float = 1.0
    gamma: float = 1.0

    @property
    def damping_factor(self) -> float:
        """Weight of a damping term in the lumped left-hand side."""
        return self.alpha_f * self.gamma * self.dt


class Physics(Protocol):
    def increments(self, lv: Levels):
        """Return rate increments (background, solid); either may be None."""

    def constrain(self, new: CoupledState, old: CoupledState, cfg: IntegratorConfig) -> None:
        """Impose kinematic constraints on the trial state after each pass."""

    def finish_step(self, new: CoupledState, cfg: IntegratorConfig) -> None:
        """History and damage commit after the final pass."""


def _lerp(a, b, w):
    return None if a is None else a + w * (b - a)


def newmark_positions(x, v, a_old, a_new, dt, beta):
    return x + dt * v + dt * dt * ((0.5 - beta) * a_old + beta * a_new)


def step(state: CoupledState, cfg: IntegratorConfig, physics) -> CoupledState:
    """Advance ``state`` by one step of size ``cfg.dt``."""
    dt, am, af, g = cfg.dt, cfg.alpha_m, cfg.alpha_f, cfg.gamma
    new = state.copy()
    new.t = state.t + dt
    new.step = state.step + 1
    pred = (g - 1.0) / g
    if state.Y is not None:
        new.Yt = pred * state.Yt
    if state.v is not None:
        new.a = pred * state.a
        new.x = newmark_positions(state.x, state.v, state.a, new.a, dt, cfg.beta)
    for k in range(cfg.n_corrector_passes):
        lv = Levels(
            t=state.t + af * dt, dt=dt,
            Y=_lerp(state.Y, new.Y, af), Yt=_lerp(state.Yt, new.Yt, am),
            x=_lerp(state.x, new.x, af), v=_lerp(state.v, new.v, af),
            a=_lerp(state.a, new.a, am), pass_index=k, alpha_m=am, alpha_f=af, gamma=g)
        dY, dv = physics.increments(lv)
        if dY is not None:
            new.Yt = new.Yt + dY
            new.Y = new.Y + (g * dt) * dY
        if dv is not None:
            new.a = new.a + dv
            new.v = new.v + (g * dt) * dv
        if new.v is not None:
            new.x = newmark_positions(state.x, state.v, state.a, new.a, dt, cfg.beta)
        physics.constrain(new, state, cfg)
        _check_finite(new)
    physics.finish_step(new, cfg)
    _check_finite(new)
    return new


def _check_finite(s: CoupledState) -> None:
    for name in ("Y", "Yt", "x", "v", "a"):
        arr = getattr(s, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            raise InstabilityError(f"non-finite {name} at step {s.step}, t={s.t:.6e} s")


SAFETY = 0.8


def stable_dt_estimate(h_fluid: float, fluid_speed, h_solid=None, c_solid=None,
                       mass=None, c_pen=None, volume=None, safety: float = SAFETY) -> float:
    """Minimum of the fluid CFL, solid CFL and penalty limits, times ``safety``.

    ``fluid_speed`` is the max of |v| + c over the background; the penalty
    limit is sqrt(2 m_P / (C_pen V_P)) per node.
    """
    limits = [h_fluid / np.max(fluid_speed)]
    if h_solid is not None and c_solid is not None:
        limits.append(float(np.min(np.asarray(h_solid) / c_solid)))
    if mass is not None and c_pen is not None:
        k = np.asarray(c_pen) * np.asarray(volume)
        pos = k > 0
        if np.any(pos):
            limits.append(float(np.min(np.sqrt(2 * np.asarray(mass)[pos] / k[pos]))))
    return safety * min(limits)
