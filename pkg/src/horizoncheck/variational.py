"""Linearized propagators, payoff gradients, and adjoint paths.

Everything here lives along a fixed base trajectory x(.) under a fixed
control u(.).  The central objects are

* the state-transition operator K(t, tau) of the linearized dynamics, held
  through the fundamental matrix Y with K(t, tau) = Y(t) Y(tau)^-1;
* the finite-horizon payoff gradient with respect to the state at time tau,
  grad(tau, T) = integral_tau^T K(t, tau)* g_x(t) dt, computed in a single
  forward pass by carrying Y and the running integral
  S(t) = integral_{t0}^t Y(s)* g_x(s) ds, so that
  grad(tau, T) = Y(tau)^-* (S(T) - S(tau));
* backward adjoint integration, which reproduces the same gradients when
  started from a zero terminal condition (an identity the test-suite checks
  both ways);
* tail analysis of grad(tau, T) as the horizon grows: convergence to a limit
  costate, bounded oscillation, or unbounded growth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .ode_engine import (
    Box,
    ControlSignal,
    IntegratorSettings,
    NonExtendibleError,
    Trajectory,
    integrate_controlled,
)
from .problem_model import ControlProblem, jacobians
from .verdicts import ConditionVerdict, Verdict

__all__ = [
    "CostatePath",
    "JxRecord",
    "TailPolicy",
    "TransitionOperator",
    "accumulate_jx",
    "check_assumption_uniform",
    "fd_gradient",
    "integrate_adjoint",
    "jx_scan",
    "lemma1_residual",
    "limit_costate",
    "payoff_value",
    "transition_matrix",
]


@dataclass(frozen=True)
class TailPolicy:
    """How horizon tails are sampled and judged.

    The horizon grid is geometric from tau + 1 to t_max (with tau prepended),
    and the tail window consists of the grid points in the last
    ``window_fraction`` of the time range.  A component series counts as
    converged when its oscillation (max - min) over the window stays below
    ``tol``; clearly divergent oscillation is called at ``fail_threshold``.
    Unbounded growth is flagged when the running max grows by more than
    ``growth_factor`` between t_max/4 and t_max.
    """

    t_max: float = 200.0
    n_points: int = 200
    window_fraction: float = 0.25
    tol: float = 1e-4
    fail_threshold: float = 1e-2
    growth_factor: float = 2.0

    def horizon_grid(self, tau: float) -> np.ndarray:
        if self.t_max <= tau + 1.0:
            raise ValueError("TailPolicy.t_max must exceed tau + 1")
        grid = np.geomspace(tau + 1.0, self.t_max, self.n_points)
        return np.concatenate([[tau], grid])

    def window_mask(self, t_grid: np.ndarray) -> np.ndarray:
        first, last = float(t_grid[0]), float(t_grid[-1])
        threshold = last - self.window_fraction * (last - first)
        return t_grid >= threshold


DEFAULT_TAIL = TailPolicy()

_VARIATIONAL_SETTINGS = IntegratorSettings(rel_tol=1e-10, abs_tol=1e-12)


def _linearization(problem: ControlProblem):
    def parts(x, u, t):
        fx, gx = jacobians(problem, x, u, t)
        return fx, gx
    return parts


# ---------------------------------------------------------------------------
# transition operator and payoff-gradient scans


class TransitionOperator:
    """Propagator samples K(t, tau) of the dynamics linearized along a
    trajectory, together with the running gradient integral S(t)."""

    def __init__(self, problem: ControlProblem, base_trajectory: Trajectory,
                 base_control: ControlSignal, aug: Trajectory):
        self.problem = problem
        self.base_trajectory = base_trajectory
        self.base_control = base_control
        self._aug = aug
        self._n = problem.state_dim

    @property
    def span(self):
        return self._aug.t0, self._aug.t_end

    def _blocks(self, t):
        n = self._n
        z = self._aug(t)
        if z.ndim == 1:
            return z[n:n + n * n].reshape(n, n), z[n + n * n:]
        return (z[:, n:n + n * n].reshape(-1, n, n), z[:, n + n * n:])

    def fundamental(self, t: float) -> np.ndarray:
        """Y(t) = K(t, t0)."""
        Y, _ = self._blocks(float(t))
        return Y

    def gradient_integral(self, t: float) -> np.ndarray:
        _, S = self._blocks(float(t))
        return S

    def evaluate(self, t: float, tau: float) -> np.ndarray:
        """K(t, tau) = Y(t) Y(tau)^-1."""
        if t == tau:
            return np.eye(self._n)
        Yt = self.fundamental(t)
        Ytau = self.fundamental(tau)
        return np.linalg.solve(Ytau.T, Yt.T).T

    __call__ = evaluate

    def gradient(self, tau: float, T) -> np.ndarray:
        """Payoff gradient over [tau, T]: Y(tau)^-* (S(T) - S(tau))."""
        Ytau = self.fundamental(tau)
        S_tau = self.gradient_integral(tau)
        T_arr = np.asarray(T, dtype=float)
        if T_arr.ndim == 0:
            diff = self.gradient_integral(float(T)) - S_tau
            return np.linalg.solve(Ytau.T, diff)
        _, S_many = self._blocks(T_arr)
        return np.linalg.solve(Ytau.T, (S_many - S_tau).T).T


def transition_matrix(problem: ControlProblem, trajectory: Trajectory,
                      control: ControlSignal, tau: Optional[float] = None,
                      t_grid=None, settings: Optional[IntegratorSettings] = None
                      ) -> TransitionOperator:
    """Build the transition operator along a trajectory.

    Integrates the augmented system (x, Y, S) forward once over the span of
    the trajectory (or up to max(t_grid) when given); ``tau`` is accepted for
    interface symmetry, evaluation at arbitrary (t, tau) pairs is exact via
    the fundamental matrix.
    """
    settings = settings or _VARIATIONAL_SETTINGS
    n = problem.state_dim
    t0 = trajectory.t0
    t_hi = trajectory.t_end if t_grid is None else float(np.max(t_grid))
    if not trajectory.covers(t_hi):
        raise ValueError("requested horizon grid exceeds the trajectory span")

    def rhs(z, u, t):
        x = z[:n]
        Y = z[n:n + n * n].reshape(n, n)
        fx, gx = jacobians(problem, x, u, t)
        dx = problem.dynamics(x, u, t)
        dY = fx @ Y
        dS = Y.T @ gx
        return np.concatenate([np.atleast_1d(dx), dY.ravel(), dS])

    z0 = np.concatenate([trajectory(t0), np.eye(n).ravel(), np.zeros(n)])
    aug = integrate_controlled(rhs, control, t0, z0, t_hi, settings,
                               domain=problem.state_domain.extended(n * n + n))
    if aug.exit_event is not None:
        raise NonExtendibleError(aug.exit_event)
    return TransitionOperator(problem, trajectory, control, aug)


@dataclass
class JxRecord:
    """Finite-horizon payoff gradients at anchor time tau over a horizon grid.

    ``values[i]`` is the gradient over [tau, T_grid[i]]; ``bound_running`` is
    the running max of its max-norm, the empirical bound candidate M(tau).
    ``truncated`` marks a grid cut short by a domain exit of the base
    trajectory.
    """

    tau: float
    T_grid: np.ndarray
    values: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        self.T_grid = np.asarray(self.T_grid, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        norms = np.max(np.abs(self.values), axis=1)
        self.bound_running = np.maximum.accumulate(norms)

    @property
    def bound_estimate(self) -> float:
        return float(self.bound_running[-1])

    def value_at(self, T: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.T_grid - T)))
        if abs(self.T_grid[idx] - T) > 1e-9 * max(1.0, abs(T)):
            raise ValueError(f"horizon {T:g} not on the record grid")
        return self.values[idx]


def accumulate_jx(problem: ControlProblem, trajectory: Trajectory,
                  control: ControlSignal, tau: float, T_grid,
                  settings: Optional[IntegratorSettings] = None) -> JxRecord:
    """Payoff gradient over [tau, T] for every horizon T on the grid.

    One forward pass of the augmented system anchored at tau (propagator from
    identity at tau plus the running integral).  When the base trajectory
    exits the domain before the last horizon the grid is truncated and the
    record flagged.
    """
    settings = settings or _VARIATIONAL_SETTINGS
    T_grid = np.sort(np.atleast_1d(np.asarray(T_grid, dtype=float)))
    if T_grid[0] < tau - 1e-12:
        raise ValueError("all horizons must satisfy T >= tau")
    if not (trajectory.covers(tau)):
        raise ValueError("anchor time outside the trajectory span")
    truncated = False
    t_hi = float(T_grid[-1])
    if not trajectory.covers(t_hi):
        if trajectory.exit_event is None:
            raise ValueError("horizon grid exceeds the trajectory span")
        truncated = True
        t_hi = trajectory.t_end
        T_grid = np.concatenate([T_grid[T_grid <= t_hi], [t_hi]]) \
            if np.any(T_grid <= t_hi) else np.array([tau, t_hi])

    n = problem.state_dim

    def rhs(z, u, t):
        x = z[:n]
        Y = z[n:n + n * n].reshape(n, n)
        fx, gx = jacobians(problem, x, u, t)
        dx = problem.dynamics(x, u, t)
        return np.concatenate([np.atleast_1d(dx), (fx @ Y).ravel(), Y.T @ gx])

    z0 = np.concatenate([trajectory(tau), np.eye(n).ravel(), np.zeros(n)])
    if t_hi > tau:
        aug = integrate_controlled(rhs, control, tau, z0, t_hi, settings,
                                   domain=problem.state_domain.extended(n * n + n))
        if aug.exit_event is not None:
            truncated = True
            T_grid = np.concatenate([T_grid[T_grid <= aug.t_end], [aug.t_end]])
        values = aug(np.asarray(T_grid))[:, n + n * n:]
    else:
        values = np.zeros((T_grid.size, n))
    # the empty integral is exactly zero
    values[np.isclose(T_grid, tau, rtol=0, atol=1e-15 * max(1.0, abs(tau)))] = 0.0
    return JxRecord(tau=tau, T_grid=T_grid, values=values, truncated=truncated)


def jx_scan(transition: TransitionOperator, tau_grid, T_grid) -> list[JxRecord]:
    """Gradient records for many anchors from one transition-operator pass."""
    records = []
    T_grid = np.sort(np.atleast_1d(np.asarray(T_grid, dtype=float)))
    for tau in np.atleast_1d(np.asarray(tau_grid, dtype=float)):
        Ts = np.concatenate([[tau], T_grid[T_grid > tau]])
        vals = transition.gradient(float(tau), Ts)
        vals[0] = 0.0
        records.append(JxRecord(tau=float(tau), T_grid=Ts, values=vals))
    return records


# ---------------------------------------------------------------------------
# adjoint paths


@dataclass
class CostatePath:
    """Adjoint path psi(.) integrated backward from a terminal condition."""

    trajectory: Trajectory
    lam: float
    terminal_condition: tuple

    @property
    def time_grid(self) -> np.ndarray:
        return self.trajectory.time_grid

    @property
    def psi_values(self) -> np.ndarray:
        return self.trajectory.states

    def psi(self, t):
        return self.trajectory(t)

    @property
    def span(self):
        return self.trajectory.t0, self.trajectory.t_end


def integrate_adjoint(problem: ControlProblem, trajectory: Trajectory,
                      control: ControlSignal, terminal, lam: float,
                      tau_grid=None, settings: Optional[IntegratorSettings] = None
                      ) -> CostatePath:
    """Integrate -dpsi/dt = f_x(t)* psi + lam * g_x(t) backward from psi(T).

    ``terminal`` is the pair (T, psi_T).  The path extends down to the base
    trajectory's initial time (or min(tau_grid) when given).
    """
    settings = settings or _VARIATIONAL_SETTINGS
    T, psi_T = terminal
    T = float(T)
    psi_T = np.atleast_1d(np.asarray(psi_T, dtype=float))
    t_lo = trajectory.t0 if tau_grid is None else float(np.min(tau_grid))
    if not (trajectory.covers(T) and trajectory.covers(t_lo)):
        raise ValueError("terminal time or tau grid outside the trajectory span")

    def rhs(psi, u, t):
        x = trajectory(t)
        fx, gx = jacobians(problem, x, u, t)
        return -(fx.T @ psi + lam * gx)

    traj = integrate_controlled(rhs, control, T, psi_T, t_lo, settings)
    return CostatePath(trajectory=traj, lam=lam, terminal_condition=(T, psi_T))


def lemma1_residual(problem: ControlProblem, trajectory: Trajectory,
                    control: ControlSignal, costate: CostatePath,
                    jx_by_tau: Sequence[JxRecord], T: float,
                    transition: Optional[TransitionOperator] = None,
                    settings: Optional[IntegratorSettings] = None) -> float:
    """Max-norm defect of psi(tau) = K(T, tau)* psi(T) + lam * grad(tau, T)
    over the anchors of ``jx_by_tau``.  This is an exact identity for any
    adjoint solution, so the residual measures integration error only.
    """
    if transition is None:
        transition = transition_matrix(problem, trajectory, control,
                                       t_grid=[T], settings=settings)
    psi_T = costate.psi(T)
    worst = 0.0
    for rec in jx_by_tau:
        tau = rec.tau
        K = transition.evaluate(T, tau)
        reconstructed = K.T @ psi_T + costate.lam * rec.value_at(T)
        defect = float(np.max(np.abs(costate.psi(tau) - reconstructed)))
        worst = max(worst, defect)
    return worst


# ---------------------------------------------------------------------------
# tail limits


def limit_costate(jx: JxRecord, tail: TailPolicy = DEFAULT_TAIL):
    """Tail limit of the payoff gradient as the horizon grows.

    Holds (limit exists) when every component's oscillation over the tail
    window is below ``tail.tol``; the limit estimate is the window average.
    Fails on unbounded growth or clear persistent oscillation; inconclusive
    when the trend is unresolved at the available horizon.
    """
    mask = tail.window_mask(jx.T_grid)
    if np.count_nonzero(mask) < 3:
        return None, ConditionVerdict(Verdict.INCONCLUSIVE, [], tail.tol,
                                      note="tail window too short")
    window = jx.values[mask]
    osc = float(np.max(np.max(window, axis=0) - np.min(window, axis=0)))
    series = list(zip(jx.T_grid[mask].tolist(),
                      np.max(np.abs(window), axis=1).tolist()))

    growth = _growth_ratio(jx)
    if osc < tail.tol:
        psi_hat = window.mean(axis=0)
        return psi_hat, ConditionVerdict(Verdict.HOLDS, series, tail.tol,
                                         note=f"tail oscillation {osc:.3g}")
    if growth > tail.growth_factor:
        return None, ConditionVerdict(Verdict.FAILS, series, tail.tol,
                                      note=f"unbounded: growth x{growth:.3g} per two doublings")
    if osc >= tail.fail_threshold:
        return None, ConditionVerdict(Verdict.FAILS, series, tail.tol,
                                      note=f"bounded, non-convergent: tail oscillation {osc:.3g}")
    return None, ConditionVerdict(Verdict.INCONCLUSIVE, series, tail.tol,
                                  note=f"tail oscillation {osc:.3g} unresolved")


def _growth_ratio(jx: JxRecord) -> float:
    """Running-max growth across the last two horizon doublings."""
    t = jx.T_grid
    tau, t_max = float(t[0]), float(t[-1])
    quarter = tau + 0.25 * (t_max - tau)
    idx_q = int(np.searchsorted(t, quarter))
    m_quarter = jx.bound_running[min(idx_q, t.size - 1)]
    m_full = jx.bound_running[-1]
    if m_quarter <= 0:
        return math.inf if m_full > 0 else 1.0
    return float(m_full / m_quarter)


# ---------------------------------------------------------------------------
# payoff values and finite-difference oracles


def payoff_value(problem: ControlProblem, control: ControlSignal, x_start,
                 t_start: float, T: float,
                 settings: Optional[IntegratorSettings] = None,
                 return_trajectory: bool = False):
    """Finite-horizon payoff integral from state x_start at time t_start.

    The payoff is accumulated as an extra quadrature component of the state
    integration.  Raises NonExtendibleError when the state leaves the domain
    before T.
    """
    settings = settings or _VARIATIONAL_SETTINGS
    n = problem.state_dim
    x_start = np.atleast_1d(np.asarray(x_start, dtype=float))

    def rhs(z, u, t):
        x = z[:n]
        return np.concatenate([np.atleast_1d(problem.dynamics(x, u, t)),
                               [problem.payoff(x, u, t)]])

    z0 = np.concatenate([x_start, [0.0]])
    aug = integrate_controlled(rhs, control, t_start, z0, T, settings,
                               domain=problem.state_domain.extended(1))
    if aug.exit_event is not None:
        raise NonExtendibleError(aug.exit_event)
    value = float(aug.states[-1, n]) if T >= t_start else float(aug.states[0, n])
    if return_trajectory:
        return value, aug
    return value


def fd_gradient(problem: ControlProblem, control: ControlSignal, tau: float,
                x_tau, T: float, step: float = 1e-3,
                settings: Optional[IntegratorSettings] = None) -> np.ndarray:
    """Central-difference gradient of the frozen-control payoff over [tau, T]
    with respect to the state at tau; the independent oracle for the
    propagator-based gradient.

    The step shrinks per component when a probe leaves the state domain; a
    perturbed trajectory that exits the domain mid-horizon raises
    NonExtendibleError naming the offending direction.
    """
    settings = settings or _VARIATIONAL_SETTINGS
    x_tau = np.atleast_1d(np.asarray(x_tau, dtype=float))
    n = problem.state_dim
    grad = np.empty(n)
    for i in range(n):
        hi = max(step, step * abs(x_tau[i]))
        for _ in range(60):
            plus, minus = x_tau.copy(), x_tau.copy()
            plus[i] += hi
            minus[i] -= hi
            if problem.state_domain.contains(plus) and problem.state_domain.contains(minus):
                break
            hi *= 0.5
        else:
            raise ValueError(f"cannot perturb component {i} inside the state domain")
        try:
            j_plus = payoff_value(problem, control, plus, tau, T, settings)
            j_minus = payoff_value(problem, control, minus, tau, T, settings)
        except NonExtendibleError as exc:
            raise NonExtendibleError(exc.event) from exc
        grad[i] = (j_plus - j_minus) / (2 * hi)
    return grad


def check_assumption_uniform(problem: ControlProblem, control: ControlSignal,
                             trajectory: Trajectory, tau: float,
                             directions: Sequence, alphas: Sequence[float],
                             T_grid, settings: Optional[IntegratorSettings] = None,
                             tol: float = 1e-4) -> ConditionVerdict:
    """Uniform-in-horizon lower bound of the payoff perturbation by its
    linearization.

    For each direction zeta and scale alpha computes
      q(alpha, zeta, T) = (J(x + alpha*zeta) - J(x))/alpha - <grad(tau,T), zeta>
    and takes the infimum over the horizon grid; the check holds when the
    infimum stays >= -tol as alpha decreases.  For dynamics and payoff linear
    in the state the quantity vanishes identically up to integration error.
    """
    settings = settings or _VARIATIONAL_SETTINGS
    T_grid = np.sort(np.atleast_1d(np.asarray(T_grid, dtype=float)))
    alphas = sorted((float(a) for a in alphas), reverse=True)
    jx = accumulate_jx(problem, trajectory, control, tau, T_grid, settings)
    x_tau = trajectory(tau)
    _, base_aug = payoff_value(problem, control, x_tau, tau, float(T_grid[-1]),
                               settings, return_trajectory=True)
    n = problem.state_dim
    base_vals = base_aug(T_grid)[:, n]

    series = []
    worst_last = np.inf
    trend_ok = True
    for zeta in directions:
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        infs = []
        for alpha in alphas:
            x_pert = x_tau + alpha * zeta
            if not problem.state_domain.contains(x_pert):
                raise ValueError(f"perturbation alpha={alpha:g}, zeta={zeta} leaves the domain")
            try:
                _, aug = payoff_value(problem, control, x_pert, tau, float(T_grid[-1]),
                                      settings, return_trajectory=True)
            except NonExtendibleError as exc:
                raise ValueError(
                    f"perturbed trajectory (alpha={alpha:g}, zeta={zeta}) not extendible: "
                    f"{exc.event.description}") from exc
            pert_vals = aug(T_grid)[:, n]
            quotients = (pert_vals - base_vals) / alpha
            linear = jx.values @ zeta
            q = quotients - linear
            inf_T = float(np.min(q))
            infs.append(inf_T)
            series.append((alpha, inf_T))
        worst_last = min(worst_last, infs[-1])
        if len(infs) >= 2 and infs[-1] < infs[0] - tol:
            trend_ok = trend_ok and infs[-1] >= -tol
    if worst_last >= -tol:
        status = Verdict.HOLDS
        note = f"inf over horizons at smallest alpha: {worst_last:.3g}"
    elif worst_last < -10 * tol and not trend_ok:
        status = Verdict.FAILS
        note = f"lower bound violated: {worst_last:.3g}"
    else:
        status = Verdict.INCONCLUSIVE
        note = f"unresolved trend, inf {worst_last:.3g}"
    return ConditionVerdict(status, series, tol, note=note)
