"""Control problems, their derivatives, and the Hamiltonian.

A :class:`ControlProblem` bundles the dynamics f(x, u, t), the payoff rate
g(x, u, t), the admissible control set, and the open state domain.  Three
built-in problems are provided:

* ``ramsey``      -- undiscounted capital accumulation with CRRA utility,
                     dk/dt = k**alpha - delta*k - c,  g = c**(1-theta)/(1-theta)
* ``integrator``  -- dx/dt = u, g = exp(-rho*t)*x, u in [0, 1]
* ``oscillator``  -- rotation dynamics driven by a bounded input,
                     g = x2 + b*u, u in [-1, 1]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .ode_engine import Box

__all__ = [
    "ControlProblem",
    "ControlSet",
    "MultiplierPair",
    "hamiltonian",
    "jacobians",
    "make_builtin_problem",
]

Array = np.ndarray
DynamicsFn = Callable[[Array, Array, float], Array]
PayoffFn = Callable[[Array, Array, float], float]

FD_STEP_DEFAULT = 1e-6  # central-difference sweet spot at double precision


@dataclass(frozen=True)
class ControlSet:
    """Admissible control values: an axis-aligned box or a finite list.

    Open box faces (``lower_open`` / ``upper_open``) are sampled with a small
    inward offset so grid maximization never evaluates at an excluded
    endpoint.
    """

    kind: str  # "box" | "finite"
    lower: Optional[Array] = None
    upper: Optional[Array] = None
    lower_open: Optional[Array] = None
    upper_open: Optional[Array] = None
    members: Optional[Array] = None

    @staticmethod
    def box(lower, upper, lower_open=False, upper_open=False) -> "ControlSet":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have equal shape")
        if np.any(lo > hi):
            raise ValueError("box bounds must satisfy lower <= upper componentwise")
        lo_open = np.broadcast_to(np.asarray(lower_open, dtype=bool), lo.shape).copy()
        hi_open = np.broadcast_to(np.asarray(upper_open, dtype=bool), hi.shape).copy()
        return ControlSet("box", lower=lo, upper=hi, lower_open=lo_open, upper_open=hi_open)

    @staticmethod
    def finite(members) -> "ControlSet":
        pts = np.atleast_2d(np.asarray(members, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("finite control set must be non-empty")
        return ControlSet("finite", members=pts)

    @property
    def dim(self) -> int:
        return self.members.shape[1] if self.kind == "finite" else self.lower.size

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "finite":
            return bool(np.any(np.all(np.abs(self.members - u) <= tol, axis=1)))
        scale = np.maximum(1.0, np.abs(u))
        lo_ok = np.where(self.lower_open, u > self.lower, u >= self.lower - tol * scale)
        hi_ok = np.where(self.upper_open, u < self.upper, u <= self.upper + tol * scale)
        return bool(np.all(lo_ok) and np.all(hi_ok))

    def sample_grid(self, resolution: int = 33) -> Array:
        """Grid of control vectors; always contains the (effective) box
        vertices, or every member of a finite set."""
        if self.kind == "finite":
            return self.members.copy()
        if resolution < 2:
            resolution = 2
        axes = []
        for i in range(self.dim):
            lo, hi = self.lower[i], self.upper[i]
            width = hi - lo
            if not np.isfinite(width):
                raise ValueError("cannot sample an unbounded control box")
            nudge = 1e-6 * max(width, 1.0)
            lo_eff = lo + nudge if self.lower_open[i] else lo
            hi_eff = hi - nudge if self.upper_open[i] else hi
            axes.append(np.linspace(lo_eff, hi_eff, resolution))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class MultiplierPair:
    """Abnormality multiplier lambda >= 0 and initial adjoint vector."""

    lam: float
    psi0: Array

    def __post_init__(self):
        object.__setattr__(self, "psi0", np.atleast_1d(np.asarray(self.psi0, dtype=float)))
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.lam == 0 and np.all(self.psi0 == 0):
            raise ValueError("(lambda, psi0) must not both vanish")


@dataclass(frozen=True)
class ControlProblem:
    """Immutable problem definition; all operations are pure functions."""

    state_dim: int
    control_dim: int
    dynamics: DynamicsFn
    payoff: PayoffFn
    control_set: ControlSet
    state_domain: Box
    initial_state: Array
    initial_time: float = 0.0
    dynamics_jac_x: Optional[Callable[[Array, Array, float], Array]] = None
    payoff_grad_x: Optional[Callable[[Array, Array, float], Array]] = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "initial_state",
                           np.atleast_1d(np.asarray(self.initial_state, dtype=float)))
        if self.state_dim <= 0 or self.control_dim <= 0:
            raise ValueError("state and control dimensions must be positive")
        if self.initial_state.size != self.state_dim:
            raise ValueError("initial state has wrong dimension")
        if not self.state_domain.contains(self.initial_state):
            raise ValueError("initial state outside the open state domain")


def hamiltonian(problem: ControlProblem, x, u, t: float, psi, lam: float) -> float:
    """lam * g(x, u, t) + <psi, f(x, u, t)>.

    Raises ValueError when the result is non-finite, which signals payoff or
    dynamics blow-up at the evaluation point (e.g. CRRA utility as c -> 0
    with theta > 1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    with np.errstate(all="ignore"):
        value = lam * float(problem.payoff(x, u, t)) + float(psi @ problem.dynamics(x, u, t))
    if not np.isfinite(value):
        raise ValueError(f"non-finite Hamiltonian at x={x}, u={u}, t={t:g}")
    return value


def jacobians(problem: ControlProblem, x, u, t: float, h: float = FD_STEP_DEFAULT):
    """State Jacobian of f and state gradient of g at (x, u, t).

    Analytic derivatives are used when the problem supplies them; otherwise
    central differences with a per-component step max(h, h*|x_i|), shrinking
    the step when a probe point would leave the state domain.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = problem.state_dim
    if problem.dynamics_jac_x is not None:
        fx = np.atleast_2d(np.asarray(problem.dynamics_jac_x(x, u, t), dtype=float))
    else:
        fx = np.empty((n, n))
        for i in range(n):
            plus, minus, hi = _probe_pair(problem, x, i, h)
            fx[:, i] = (np.atleast_1d(problem.dynamics(plus, u, t))
                        - np.atleast_1d(problem.dynamics(minus, u, t))) / (2 * hi)
    if problem.payoff_grad_x is not None:
        gx = np.atleast_1d(np.asarray(problem.payoff_grad_x(x, u, t), dtype=float))
    else:
        gx = np.empty(n)
        for i in range(n):
            plus, minus, hi = _probe_pair(problem, x, i, h)
            gx[i] = (problem.payoff(plus, u, t) - problem.payoff(minus, u, t)) / (2 * hi)
    return fx, gx


def _probe_pair(problem: ControlProblem, x, i: int, h: float, floor: float = 1e-12):
    hi = max(h, h * abs(x[i]))
    while hi >= floor:
        plus, minus = x.copy(), x.copy()
        plus[i] += hi
        minus[i] -= hi
        if problem.state_domain.contains(plus) and problem.state_domain.contains(minus):
            return plus, minus, hi
        hi *= 0.5
    raise ValueError(f"cannot probe component {i}: domain too thin around x={x}")


# ---------------------------------------------------------------------------
# built-in problems


def make_builtin_problem(name: str, params: Mapping[str, float]) -> ControlProblem:
    """Construct one of the built-in problems with analytic derivatives.

    ``ramsey``     requires alpha in (0,1), delta > 0, theta > 0 with
                   theta != 1, k0 > 0; optional c_max (default 10 * c_star).
    ``integrator`` requires rho >= 0.
    ``oscillator`` requires b > 0.
    """
    builders = {"ramsey": _build_ramsey, "integrator": _build_integrator,
                "oscillator": _build_oscillator}
    if name not in builders:
        raise ValueError(f"unknown builtin problem {name!r}; choose from {sorted(builders)}")
    return builders[name](dict(params))


def _require(params: dict, name: str, key: str, check, message: str) -> float:
    if key not in params:
        raise ValueError(f"{name}: missing parameter {key!r}")
    value = float(params.pop(key))
    if not check(value):
        raise ValueError(f"{name}: parameter {key}={value:g} out of range ({message})")
    return value


def _reject_extras(params: dict, name: str):
    if params:
        raise ValueError(f"{name}: unknown parameters {sorted(params)}")


def _build_ramsey(params: dict) -> ControlProblem:
    alpha = _require(params, "ramsey", "alpha", lambda v: 0 < v < 1, "need alpha in (0,1)")
    delta = _require(params, "ramsey", "delta", lambda v: v > 0, "need delta > 0")
    theta = _require(params, "ramsey", "theta", lambda v: v > 0 and v != 1.0,
                     "need theta > 0 and theta != 1")
    k0 = _require(params, "ramsey", "k0", lambda v: v > 0, "need k0 > 0")
    k_star = (delta / alpha) ** (1.0 / (alpha - 1.0))
    c_star = (1.0 - alpha) * (delta / alpha) ** (alpha / (alpha - 1.0))
    c_max = float(params.pop("c_max", 10.0 * c_star))
    if c_max <= 0:
        raise ValueError("ramsey: need c_max > 0")
    _reject_extras(params, "ramsey")

    def f(x, u, t):
        k = x[0]
        return np.array([k ** alpha - delta * k - u[0]])

    def g(x, u, t):
        c = u[0]
        return c ** (1.0 - theta) / (1.0 - theta)

    def fx(x, u, t):
        k = x[0]
        return np.array([[alpha * k ** (alpha - 1.0) - delta]])

    def gx(x, u, t):
        return np.zeros(1)

    return ControlProblem(
        state_dim=1, control_dim=1, dynamics=f, payoff=g,
        dynamics_jac_x=fx, payoff_grad_x=gx,
        control_set=ControlSet.box([0.0], [c_max], lower_open=True),
        state_domain=Box.from_bounds([0.0], [np.inf]),
        initial_state=[k0], initial_time=0.0, name="ramsey")


def _build_integrator(params: dict) -> ControlProblem:
    rho = _require(params, "integrator", "rho", lambda v: v >= 0, "need rho >= 0")
    _reject_extras(params, "integrator")

    def f(x, u, t):
        return np.array([u[0]])

    def g(x, u, t):
        return float(np.exp(-rho * t) * x[0])

    def fx(x, u, t):
        return np.zeros((1, 1))

    def gx(x, u, t):
        return np.array([np.exp(-rho * t)])

    return ControlProblem(
        state_dim=1, control_dim=1, dynamics=f, payoff=g,
        dynamics_jac_x=fx, payoff_grad_x=gx,
        control_set=ControlSet.box([0.0], [1.0]),
        state_domain=Box.unbounded(1),
        initial_state=[0.0], initial_time=0.0, name="integrator")


def _build_oscillator(params: dict) -> ControlProblem:
    b = _require(params, "oscillator", "b", lambda v: v > 0, "need b > 0")
    _reject_extras(params, "oscillator")
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def f(x, u, t):
        return np.array([x[1], u[0] - x[0]])

    def g(x, u, t):
        return float(x[1] + b * u[0])

    def fx(x, u, t):
        return A

    def gx(x, u, t):
        return np.array([0.0, 1.0])

    return ControlProblem(
        state_dim=2, control_dim=1, dynamics=f, payoff=g,
        dynamics_jac_x=fx, payoff_grad_x=gx,
        control_set=ControlSet.box([-1.0], [1.0]),
        state_domain=Box.unbounded(2),
        initial_state=[0.0, 0.0], initial_time=0.0, name="oscillator")
