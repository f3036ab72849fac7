"""Closed-form oracles and solvers for the three built-in problems.

The oscillator and discounted-integrator bundles hold exact transition
matrices, adjoint families and payoff gradients against which the numerical
machinery is tested.  The Ramsey helpers provide the Euler phase-plane field,
its steady states, orbit classification and saddle-path shooting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ode_engine import (
    Box,
    ControlSignal,
    IntegratorSettings,
    Trajectory,
    integrate,
    solve_state,
)
from .problem_model import ControlProblem, make_builtin_problem

__all__ = [
    "IntegratorReference",
    "OscillatorReference",
    "RamseyParams",
    "SteadyState",
    "integrator_reference",
    "oscillator_reference",
    "ramsey_classify",
    "ramsey_control_from_orbit",
    "ramsey_euler_orbit",
    "ramsey_feasible_candidate",
    "ramsey_field",
    "ramsey_saddle_candidate",
    "ramsey_shoot",
    "ramsey_steady_state",
]


# ---------------------------------------------------------------------------
# Ramsey capital accumulation


@dataclass(frozen=True)
class RamseyParams:
    alpha: float   # output elasticity, in (0, 1)
    delta: float   # depreciation, > 0
    theta: float   # relative risk aversion, > 0 and != 1
    k0: float      # initial capital, > 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("need alpha in (0, 1)")
        if self.delta <= 0:
            raise ValueError("need delta > 0")
        if self.theta <= 0 or self.theta == 1.0:
            raise ValueError("need theta > 0 and theta != 1")
        if self.k0 <= 0:
            raise ValueError("need k0 > 0")

    def problem(self, c_max: Optional[float] = None) -> ControlProblem:
        params = {"alpha": self.alpha, "delta": self.delta, "theta": self.theta, "k0": self.k0}
        if c_max is not None:
            params["c_max"] = c_max
        return make_builtin_problem("ramsey", params)


@dataclass(frozen=True)
class SteadyState:
    k_star: float
    c_star: float
    kind: str  # "interior_saddle" | "zero_consumption"


def ramsey_steady_state(params: RamseyParams):
    """Interior saddle point and the zero-consumption limit point.

    k* = (delta/alpha)**(1/(alpha-1)),
    c* = (1-alpha) * (delta/alpha)**(alpha/(alpha-1)),
    and the zero-consumption capital level delta**(1/(alpha-1)) > k*.
    """
    a, d = params.alpha, params.delta
    k_star = (d / a) ** (1.0 / (a - 1.0))
    c_star = (1.0 - a) * (d / a) ** (a / (a - 1.0))
    k_limit = d ** (1.0 / (a - 1.0))
    return (SteadyState(k_star, c_star, "interior_saddle"),
            SteadyState(k_limit, 0.0, "zero_consumption"))


def ramsey_field(params: RamseyParams, k: float, c: float) -> np.ndarray:
    """Phase-plane field (dk/dt, dc/dt) of the state plus consumption-growth
    equations: dk/dt = k**a - d*k - c, dc/dt = c*(a*k**(a-1) - d)/theta."""
    if k <= 0 or c <= 0:
        raise ValueError("ramsey_field requires k > 0 and c > 0")
    a, d, th = params.alpha, params.delta, params.theta
    return np.array([k ** a - d * k - c, c * (a * k ** (a - 1.0) - d) / th])


_CLASSIFY_SETTINGS = IntegratorSettings(rel_tol=1e-9, abs_tol=1e-11, max_step=1.0)


def _joint_domain() -> Box:
    return Box.from_bounds([0.0, 0.0], [np.inf, 1e12])


def ramsey_euler_orbit(params: RamseyParams, k0: float, c0: float, t_end: float,
                       settings: Optional[IntegratorSettings] = None,
                       stop=None) -> Trajectory:
    """Integrate the joint (k, c) phase-plane system from (k0, c0)."""
    field = lambda t, y: ramsey_field(params, y[0], y[1]) if (y[0] > 0 and y[1] > 0) \
        else np.array([np.nan, np.nan])
    return integrate(field, 0.0, np.array([k0, c0]), t_end,
                     settings or _CLASSIFY_SETTINGS, domain=_joint_domain(), stop=stop)


def _ball_stop(k_star, c_star, radius):
    r2 = radius * radius
    def stop(t, y):
        if (y[0] - k_star) ** 2 + (y[1] - c_star) ** 2 <= r2:
            return "saddle_ball"
        return None
    return stop


def _to_zero_stop(params, k_star, c_star):
    # region membership plus outward radial velocity from (k*, c*); the region
    # k > k* + margin, c < c* - margin lies strictly below the right branch of
    # the stable manifold, so only orbits heading to zero consumption enter it
    # while moving away from the saddle.
    def stop(t, y):
        k, c = y
        if k <= k_star + 0.5 or c >= c_star - 0.25:
            return None
        vel = ramsey_field(params, k, c)
        if (k - k_star) * vel[0] + (c - c_star) * vel[1] > 0:
            return "to_zero_consumption"
        return None
    return stop


def ramsey_classify(params: RamseyParams, k0: float, c0: float,
                    t_max: float = 2000.0, ball_radius: float = 1e-3,
                    settings: Optional[IntegratorSettings] = None) -> str:
    """Classify the Euler orbit through (k0, c0).

    Returns one of ``saddle`` (enters the ball around the interior steady
    state), ``hits_zero_capital`` (capital reaches its lower bound),
    ``to_zero_consumption`` (heads to the zero-consumption rest point), or
    ``inconclusive`` when t_max is exhausted first.
    """
    if k0 <= 0 or c0 <= 0:
        raise ValueError("need k0 > 0 and c0 > 0")
    interior, _ = ramsey_steady_state(params)
    ball = _ball_stop(interior.k_star, interior.c_star, ball_radius)
    region = _to_zero_stop(params, interior.k_star, interior.c_star)
    stop = lambda t, y: ball(t, y) or region(t, y)
    traj = ramsey_euler_orbit(params, k0, c0, t_max, settings, stop=stop)
    if traj.exit_event is None:
        return "inconclusive"
    desc = traj.exit_event.description
    if desc == "saddle_ball":
        return "saddle"
    if desc == "to_zero_consumption":
        return "to_zero_consumption"
    return "hits_zero_capital"


def _classify_side(params: RamseyParams, k0: float, c0: float, t_max: float,
                   settings: Optional[IntegratorSettings]) -> str:
    """Bracket side for shooting: 'hi' (hits zero capital) or 'lo' (falls to
    zero consumption).  The saddle ball is not used as a stop here so that
    near-saddle orbits resolve their side after hovering."""
    interior, _ = ramsey_steady_state(params)
    region = _to_zero_stop(params, interior.k_star, interior.c_star)
    traj = ramsey_euler_orbit(params, k0, c0, t_max, settings, stop=region)
    if traj.exit_event is None:
        # t_max exhausted while hovering; decide by final position
        k_fin = traj.states[-1, 0]
        return "lo" if k_fin > interior.k_star else "hi"
    if traj.exit_event.description == "to_zero_consumption":
        return "lo"
    return "hi"


def ramsey_shoot(params: RamseyParams, t_max: float = 2000.0,
                 c0_tol: float = 1e-10, max_iter: int = 60,
                 ball_radius: float = 1e-3,
                 settings: Optional[IntegratorSettings] = None,
                 history: Optional[list] = None):
    """Bisect the initial consumption separating the two orbit families.

    Above the saddle value orbits crash into k = 0; below they drift to the
    zero-consumption point.  Returns (c0_saddle, orbit) where the orbit is the
    joint (k, c) trajectory integrated until it enters the ball of radius
    ``ball_radius`` around the interior steady state.
    """
    settings = settings or _CLASSIFY_SETTINGS
    interior, _ = ramsey_steady_state(params)
    k0 = params.k0

    hi = k0 ** params.alpha  # consumption at least equal to gross output
    for _ in range(60):
        if _classify_side(params, k0, hi, t_max, settings) == "hi":
            break
        hi *= 1.6
    else:
        raise RuntimeError("ramsey_shoot: no upper bracket found")
    lo = min(0.05 * interior.c_star, 0.5 * hi)
    for _ in range(80):
        if _classify_side(params, k0, lo, t_max, settings) == "lo":
            break
        lo *= 0.5
    else:
        raise RuntimeError("ramsey_shoot: no lower bracket found")

    for _ in range(max_iter):
        if hi - lo <= c0_tol:
            break
        mid = 0.5 * (lo + hi)
        if _classify_side(params, k0, mid, t_max, settings) == "hi":
            hi = mid
        else:
            lo = mid
        if history is not None:
            history.append((lo, hi))

    c0 = 0.5 * (lo + hi)
    ball = _ball_stop(interior.k_star, interior.c_star, ball_radius)
    orbit = ramsey_euler_orbit(params, k0, c0, t_max, settings, stop=ball)
    if orbit.exit_event is None or orbit.exit_event.description != "saddle_ball":
        raise RuntimeError("ramsey_shoot: bisected orbit failed to reach the steady-state ball")
    return c0, orbit


def ramsey_control_from_orbit(orbit: Trajectory, c_tail: Optional[float] = None) -> ControlSignal:
    """Consumption path of a (k, c) orbit as a control signal.

    Beyond the orbit's last node the signal holds ``c_tail`` (default: the
    final consumption value), which for a shot saddle orbit is the steady
    state consumption.
    """
    t_last = orbit.t_end
    tail = float(orbit.states[-1, 1]) if c_tail is None else float(c_tail)

    def c_of_t(t):
        if t >= t_last:
            return np.array([tail])
        return np.array([orbit(max(t, orbit.t0))[1]])

    return ControlSignal.closed_form(c_of_t, dim=1)


def ramsey_feasible_candidate(params: RamseyParams, c0: float, t_end: float,
                              settings: Optional[IntegratorSettings] = None):
    """A feasible Euler-family candidate: (state trajectory, control signal).

    The joint orbit must stay in the domain through ``t_end``; an infeasible
    c0 (orbit hits k = 0) raises ValueError.
    """
    orbit = ramsey_euler_orbit(params, params.k0, c0, t_end, settings)
    if orbit.exit_event is not None:
        raise ValueError(f"candidate c0={c0:g} infeasible: {orbit.exit_event.description}")
    control = ramsey_control_from_orbit(orbit)
    problem = params.problem()
    k_traj = solve_state(problem, control, t_end, settings or _CLASSIFY_SETTINGS)
    return k_traj, control


def ramsey_saddle_candidate(params: RamseyParams, t_end: float,
                            settings: Optional[IntegratorSettings] = None,
                            t_max_shoot: float = 2000.0):
    """The shot saddle-path candidate, with consumption clamped to c* after
    the orbit enters the steady-state ball."""
    interior, _ = ramsey_steady_state(params)
    c0, orbit = ramsey_shoot(params, t_max=t_max_shoot, settings=settings)
    control = ramsey_control_from_orbit(orbit, c_tail=interior.c_star)
    problem = params.problem()
    k_traj = solve_state(problem, control, t_end, settings or _CLASSIFY_SETTINGS)
    return c0, k_traj, control


# ---------------------------------------------------------------------------
# linear oscillator


@dataclass(frozen=True)
class OscillatorReference:
    """Closed forms for the rotation-driven problem with payoff x2 + b*u.

    The candidate optimal control is u = 1; admissible maximizing adjoints
    form the family psi1 = -r*cos(t + phi) - 1, psi2 = r*sin(t + phi) with
    |r| <= b, and the payoff gradient over [tau, T] is
    (cos(T - tau) - 1, sin(T - tau)).
    """

    b: float

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("need b > 0")

    @property
    def optimal_control(self) -> float:
        return 1.0

    def transition(self, t: float, tau: float) -> np.ndarray:
        dt = t - tau
        c, s = math.cos(dt), math.sin(dt)
        return np.array([[c, s], [-s, c]])

    def state(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([1.0 - np.cos(t), np.sin(t)], axis=-1)

    def _check_rphi(self, r: float):
        if abs(r) > self.b + 1e-12:
            raise ValueError(f"adjoint family requires |r| <= b = {self.b:g}")

    def costate(self, r: float, phi: float, t) -> np.ndarray:
        self._check_rphi(r)
        t = np.asarray(t, dtype=float)
        return np.stack([-r * np.cos(t + phi) - 1.0, r * np.sin(t + phi)], axis=-1)

    def jx(self, tau: float, T) -> np.ndarray:
        dt = np.asarray(T, dtype=float) - tau
        return np.stack([np.cos(dt) - 1.0, np.sin(dt)], axis=-1)

    def delta_hamiltonian(self, u: float, tau: float, T: float) -> float:
        return (u - 1.0) * (math.sin(T - tau) + self.b)

    def woo_bound(self, u: float) -> float:
        """Tail lower estimate of the Hamiltonian difference: (u-1)(1+b)."""
        return (u - 1.0) * (1.0 + self.b)

    def oo_bound(self, u: float) -> float:
        """Tail upper estimate of the Hamiltonian difference: (u-1)(b-1)."""
        return (u - 1.0) * (self.b - 1.0)

    def hamiltonian_along(self, r: float, phi: float) -> float:
        """H along the candidate solution with the (r, phi) adjoint, constant
        in time: r*sin(phi) + b."""
        self._check_rphi(r)
        return r * math.sin(phi) + self.b

    def challenger_gap(self, s: float, T) -> np.ndarray:
        """Payoff gap of 'u = 0 until s, then 1' relative to u = 1, for T >= s:
        cos(T) - cos(T - s) - b*s."""
        T = np.asarray(T, dtype=float)
        return np.cos(T) - np.cos(T - s) - self.b * s


def oscillator_reference(b: float) -> OscillatorReference:
    return OscillatorReference(b)


# ---------------------------------------------------------------------------
# discounted integrator


@dataclass(frozen=True)
class IntegratorReference:
    """Closed forms for dx/dt = u with payoff exp(-rho*t)*x and u in [0, 1].

    Adjoint solutions under the candidate u = 1:
      rho > 0:  psi(t) = a0 + lam * exp(-rho*t)/rho
      rho = 0:  psi(t) = a0 - lam * t
    The normal-case limit costate exp(-rho*t)/rho exists only when rho > 0.
    """

    rho: float
    a0: float
    lam: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("need rho >= 0")
        if self.lam not in (0.0, 1.0):
            raise ValueError("lam must be 0 or 1")
        if self.lam == 0.0 and self.a0 == 0.0:
            raise ValueError("(lam, a0) must not both vanish")

    @property
    def psi_hat_diverges(self) -> bool:
        return self.rho == 0.0

    def psi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.rho == 0.0:
            return self.a0 - self.lam * t
        return self.a0 + self.lam * np.exp(-self.rho * t) / self.rho

    def psi_hat(self, t) -> np.ndarray:
        if self.psi_hat_diverges:
            raise ValueError("limit costate diverges at rho = 0")
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rho * t) / self.rho

    def jx(self, tau: float, T) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        if self.rho == 0.0:
            return T - tau
        return (np.exp(-self.rho * tau) - np.exp(-self.rho * T)) / self.rho

    @property
    def max_principle_statement(self) -> str:
        if self.rho > 0:
            return "holds in the normal case iff a0 >= 0"
        return "holds only in the abnormal form psi = a0 > 0"

    def max_principle_holds(self) -> bool:
        if self.rho > 0:
            return self.a0 >= 0 or self.lam == 0.0 and self.a0 > 0
        return self.lam == 0.0 and self.a0 > 0


def integrator_reference(rho: float, a0: float, lam: float) -> IntegratorReference:
    return IntegratorReference(rho, a0, lam)
