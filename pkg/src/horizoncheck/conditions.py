"""Necessary-condition checks along a candidate trajectory.

Four families of checks:

* the classical limit conditions on an adjoint path: psi(t) -> 0,
  <x(t), psi(t)> -> 0, H(t) -> 0, and K(t, t0)* psi(t) -> 0;
* the pointwise maximum principle on a sampled control grid;
* the liminf/limsup tail conditions on the Hamiltonian difference built from
  finite-horizon payoff gradients (no adjoint needed), in a weak form (liminf,
  for weakly overtaking candidates) and a strong form (limsup, for overtaking
  candidates);
* the costate decomposition psi(tau) = K(t0, tau)* a0 + lam * psi_hat(tau)
  and, for state-independent payoffs under state constraints, the pointwise
  payoff-rate maximization rule over a family of feasible candidates.

Verdicts are three-way (holds / fails / inconclusive); a verdict is only
committed when the declared tail criterion is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ode_engine import ControlSignal, IntegratorSettings, Trajectory
from .problem_model import ControlProblem, hamiltonian, jacobians
from .variational import (
    CostatePath,
    JxRecord,
    TailPolicy,
    TransitionOperator,
    DEFAULT_TAIL,
    limit_costate,
)
from .verdicts import ConditionVerdict, Verdict, tail_limit_verdict

__all__ = [
    "GeneralConditionReport",
    "ConditionVerdict",
    "Verdict",
    "check_classical",
    "check_general",
    "check_gmax",
    "check_jx_bounded",
    "check_max_principle",
    "decompose_costate",
    "delta_hamiltonian",
    "dense_horizon_grid",
    "CLASSICAL_CONDITIONS",
]

CLASSICAL_CONDITIONS = ("tcPSI", "tcXPSI", "tcM", "tcKAV")

VERDICT_SLACK = 1e-6       # absolute slack for "<= 0" verdicts
WINDOW_CONVERGE_TOL = 1e-3  # window-doubling agreement for liminf/limsup estimates


def dense_horizon_grid(tau: float, t_max: float, spacing: float = 0.02,
                       max_points: int = 400_000) -> np.ndarray:
    """Uniform horizon grid dense enough to resolve almost-periodic tails."""
    if t_max <= tau:
        raise ValueError("need t_max > tau")
    n = int(min(max_points, max(64, math.ceil((t_max - tau) / spacing))))
    return np.linspace(tau, t_max, n + 1)


def delta_hamiltonian(problem: ControlProblem, trajectory: Trajectory,
                      control: ControlSignal, jx: JxRecord, u, tau: float,
                      T: float) -> float:
    """H(x(tau), u, tau, grad(tau,T), 1) - H(x(tau), u_hat(tau), tau, grad(tau,T), 1).

    Exactly zero when u equals the candidate control value at tau.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not problem.control_set.contains(u):
        raise ValueError(f"control {u} outside the admissible set")
    if abs(jx.tau - tau) > 1e-9 * max(1.0, abs(tau)):
        raise ValueError("gradient record anchored at a different tau")
    x_tau = trajectory(tau)
    u_hat = control.evaluate(tau)
    psi = jx.value_at(T)
    return (hamiltonian(problem, x_tau, u, tau, psi, 1.0)
            - hamiltonian(problem, x_tau, u_hat, tau, psi, 1.0))


# ---------------------------------------------------------------------------
# liminf / limsup tail conditions


@dataclass
class GeneralConditionReport:
    """Per-(tau, u) tail estimates of the Hamiltonian difference and the
    aggregate verdict of the battery."""

    tau_grid: np.ndarray
    control_grid: np.ndarray
    mode: str  # "WOO" | "OO"
    estimates: np.ndarray        # (n_tau, n_u) tail liminf or limsup estimates
    statuses: np.ndarray         # (n_tau, n_u) of Verdict
    window_estimates: np.ndarray  # (n_tau, n_u, 3) early/mid/late window values
    verdict: ConditionVerdict = None

    def cell(self, i_tau: int, i_u: int):
        return self.estimates[i_tau, i_u], self.statuses[i_tau, i_u]


def _window_verdict(m_early: float, m_mid: float, m_late: float, mode: str,
                    hold_tol: float, converge_tol: float):
    """Three-way verdict for '<= 0' from three dyadic-window estimates.

    Converged windows decide directly.  A monotone trend in the favorable
    direction (estimates sinking below zero) also decides: the tail estimate
    then bounds the limit from above (liminf case) or tracks a divergence to
    -inf (limsup case).  Everything else stays inconclusive.
    """
    converged = (abs(m_late - m_mid) < converge_tol
                 and abs(m_mid - m_early) < converge_tol)
    if converged:
        return (Verdict.HOLDS if m_late <= hold_tol else Verdict.FAILS)
    decreasing = m_late <= m_mid + converge_tol and m_mid <= m_early + converge_tol
    increasing = m_late >= m_mid - converge_tol and m_mid >= m_early - converge_tol
    if decreasing and m_late <= hold_tol:
        return Verdict.HOLDS
    if increasing and m_late > hold_tol:
        return Verdict.FAILS
    return Verdict.INCONCLUSIVE


def check_general(problem: ControlProblem, trajectory: Trajectory,
                  control: ControlSignal, tau_grid, control_resolution: int = 33,
                  T_grid=None, mode: str = "WOO",
                  transition: Optional[TransitionOperator] = None,
                  settings: Optional[IntegratorSettings] = None,
                  hold_tol: float = VERDICT_SLACK,
                  converge_tol: float = WINDOW_CONVERGE_TOL) -> GeneralConditionReport:
    """Tail test of the Hamiltonian-difference condition over a (tau, u) grid.

    For each anchor tau and control value u the liminf (mode WOO) or limsup
    (mode OO) of the Hamiltonian difference over growing horizons is estimated
    by the min/max over the last half of the horizon grid; the estimate is
    trusted when two successive window doublings agree to ``converge_tol`` or
    the windows trend monotonically.  Each cell must satisfy estimate <= 0
    (within ``hold_tol``); the battery verdict aggregates all cells.
    """
    if mode not in ("WOO", "OO"):
        raise ValueError("mode must be 'WOO' or 'OO'")
    from .variational import transition_matrix  # local import to avoid cycle at module load

    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if T_grid is None:
        T_grid = dense_horizon_grid(float(tau_grid.min()), trajectory.t_end)
    T_grid = np.sort(np.asarray(T_grid, dtype=float))
    if not trajectory.covers(float(T_grid[-1])):
        raise ValueError("horizon grid exceeds the trajectory span "
                         f"(exit event: {trajectory.exit_event})")
    if transition is None:
        transition = transition_matrix(problem, trajectory, control,
                                       t_grid=T_grid, settings=settings)
    control_grid = problem.control_set.sample_grid(control_resolution)

    n_tau, n_u = tau_grid.size, control_grid.shape[0]
    estimates = np.empty((n_tau, n_u))
    windows = np.empty((n_tau, n_u, 3))
    statuses = np.empty((n_tau, n_u), dtype=object)

    for i, tau in enumerate(tau_grid):
        Ts = T_grid[T_grid >= tau + 1e-12]
        grads = transition.gradient(float(tau), Ts)  # (n_T, n)
        x_tau = trajectory(float(tau))
        u_hat = control.evaluate(float(tau))
        f_hat = np.atleast_1d(problem.dynamics(x_tau, u_hat, float(tau)))
        g_hat = float(problem.payoff(x_tau, u_hat, float(tau)))
        span = float(Ts[-1] - tau)
        masks = [(Ts > tau + span / 8) & (Ts <= tau + span / 4),
                 (Ts > tau + span / 4) & (Ts <= tau + span / 2),
                 (Ts > tau + span / 2)]
        for j in range(n_u):
            u = control_grid[j]
            delta_f = np.atleast_1d(problem.dynamics(x_tau, u, float(tau))) - f_hat
            delta_g = float(problem.payoff(x_tau, u, float(tau))) - g_hat
            dH = delta_g + grads @ delta_f
            extremum = np.min if mode == "WOO" else np.max
            m = [float(extremum(dH[mask])) if np.any(mask) else math.nan
                 for mask in masks]
            windows[i, j] = m
            estimates[i, j] = m[2]
            statuses[i, j] = _window_verdict(m[0], m[1], m[2], mode,
                                             hold_tol, converge_tol)

    flat = statuses.ravel()
    if any(s is Verdict.FAILS for s in flat):
        agg, note = Verdict.FAILS, "some (tau, u) cells violate the tail condition"
    elif any(s is Verdict.INCONCLUSIVE for s in flat):
        agg, note = Verdict.INCONCLUSIVE, "some cells unresolved at this horizon"
    else:
        agg, note = Verdict.HOLDS, "all (tau, u) cells satisfy the tail condition"
    worst = float(np.nanmax(estimates))
    verdict = ConditionVerdict(agg, [(float(t), float(e))
                                     for t, e in zip(np.repeat(tau_grid, n_u),
                                                     estimates.ravel())],
                               hold_tol, note=f"{note}; worst estimate {worst:.3g}")
    return GeneralConditionReport(tau_grid=tau_grid, control_grid=control_grid,
                                  mode=mode, estimates=estimates, statuses=statuses,
                                  window_estimates=windows, verdict=verdict)


def check_jx_bounded(jx: JxRecord, growth_factor: float = 2.0,
                     hold_factor: float = 1.1):
    """Empirical horizon-uniform bound on the payoff gradient.

    Compares the running max across the last two horizon doublings: flat
    (ratio <= ``hold_factor``) holds with the observed max as the bound
    estimate; growth beyond ``growth_factor`` fails as unbounded; in between
    is inconclusive.
    """
    from .variational import _growth_ratio

    ratio = _growth_ratio(jx)
    m = jx.bound_estimate
    series = list(zip(jx.T_grid.tolist(), jx.bound_running.tolist()))
    if ratio > growth_factor:
        v = ConditionVerdict(Verdict.FAILS, series, growth_factor,
                             note=f"unbounded: running max grew x{ratio:.3g}")
    elif ratio <= hold_factor:
        v = ConditionVerdict(Verdict.HOLDS, series, growth_factor,
                             note=f"bounded, observed max {m:.6g}")
    else:
        v = ConditionVerdict(Verdict.INCONCLUSIVE, series, growth_factor,
                             note=f"growth ratio {ratio:.3g} unresolved")
    return v, m


# ---------------------------------------------------------------------------
# classical limit conditions


def _tail_times(costate: CostatePath, tail: TailPolicy, n_dense: int = 4000):
    lo, hi = costate.span
    t_hi = min(hi, tail.t_max) if tail.t_max > lo else hi
    times = np.linspace(lo, t_hi, n_dense)
    return times[tail.window_mask(times)]


def check_classical(problem: ControlProblem, trajectory: Trajectory,
                    control: ControlSignal, costate: CostatePath, lam: float,
                    transition: TransitionOperator,
                    tail: TailPolicy = DEFAULT_TAIL) -> dict:
    """The four classical limit conditions on an adjoint path.

    tcPSI:  |psi(t)| -> 0
    tcXPSI: <x(t), psi(t)> -> 0
    tcM:    H(x(t), u(t), t, psi(t), lam) -> 0
    tcKAV:  |K(t, t0)* psi(t)| -> 0

    Each is judged on the tail window by the shared oscillation-plus-mean
    criterion; returns a dict keyed by condition id.
    """
    times = _tail_times(costate, tail)
    psi = costate.psi(times)
    xs = trajectory(times)
    Ys, _ = transition._blocks(times)

    s_psi = np.max(np.abs(psi), axis=1)
    s_xpsi = np.einsum("ij,ij->i", xs, psi)
    s_h = np.array([hamiltonian(problem, xs[i], control.evaluate(float(t)),
                                float(t), psi[i], lam)
                    for i, t in enumerate(times)])
    yk = np.einsum("ikj,ik->ij", Ys, psi)  # K(t, t0)* psi = Y(t)^T psi
    s_kav = np.linalg.norm(yk, axis=1)

    return {
        "tcPSI": tail_limit_verdict(times, s_psi, tail.tol, tail.fail_threshold,
                                    note="|psi(t)|"),
        "tcXPSI": tail_limit_verdict(times, s_xpsi, tail.tol, tail.fail_threshold,
                                     note="<x(t), psi(t)>"),
        "tcM": tail_limit_verdict(times, s_h, tail.tol, tail.fail_threshold,
                                  note="H along the candidate"),
        "tcKAV": tail_limit_verdict(times, s_kav, tail.tol, tail.fail_threshold,
                                    note="|K(t,t0)* psi(t)|"),
    }


def check_max_principle(problem: ControlProblem, trajectory: Trajectory,
                        control: ControlSignal, costate: CostatePath, lam: float,
                        control_resolution: int = 33, time_grid=None,
                        tol: float = VERDICT_SLACK) -> ConditionVerdict:
    """Pointwise Hamiltonian maximization over a sampled control grid.

    Holds iff at every sampled time the candidate control's Hamiltonian is
    within ``tol`` of the maximum over the sampled control values.
    """
    if time_grid is None:
        lo, hi = costate.span
        time_grid = np.linspace(lo, hi, 201)
    time_grid = np.atleast_1d(np.asarray(time_grid, dtype=float))
    grid = problem.control_set.sample_grid(control_resolution)
    worst = -math.inf
    series = []
    for t in time_grid:
        x = trajectory(float(t))
        psi = costate.psi(float(t))
        h_hat = hamiltonian(problem, x, control.evaluate(float(t)), float(t), psi, lam)
        h_best = max(hamiltonian(problem, x, u, float(t), psi, lam) for u in grid)
        gap = h_best - h_hat
        series.append((float(t), gap))
        worst = max(worst, gap)
    status = Verdict.HOLDS if worst <= tol else Verdict.FAILS
    return ConditionVerdict(status, series, tol,
                            note=f"max Hamiltonian shortfall {worst:.3g}")


def decompose_costate(costate: CostatePath, transition: TransitionOperator,
                      jx_by_tau: Sequence[JxRecord], lam: float,
                      tail: TailPolicy = DEFAULT_TAIL):
    """Split an adjoint path into homogeneous and payoff-driven parts.

    Estimates a0 as the tail limit of K(T, t0)* psi(T); when that limit exists
    the defect of psi(tau) = K(t0, tau)* a0 + lam * psi_hat(tau) is evaluated
    at the anchors of ``jx_by_tau`` (psi_hat taken as each record's tail
    limit).  Returns (a0 or None, residual or nan, verdict).
    """
    times = _tail_times(costate, tail)
    psi = costate.psi(times)
    Ys, _ = transition._blocks(times)
    v = np.einsum("ikj,ik->ij", Ys, psi)  # K(t, t0)* psi(t)
    osc = float(np.max(np.max(v, axis=0) - np.min(v, axis=0)))
    series = list(zip(times.tolist(), np.max(np.abs(v), axis=1).tolist()))
    if osc >= tail.tol:
        status = Verdict.FAILS if osc >= tail.fail_threshold else Verdict.INCONCLUSIVE
        return None, math.nan, ConditionVerdict(
            status, series, tail.tol,
            note=f"K(T,t0)*psi(T) does not settle (tail oscillation {osc:.3g})")

    a0 = v.mean(axis=0)
    residual = 0.0
    for rec in jx_by_tau:
        tau = rec.tau
        if lam != 0.0:
            psi_hat, verdict_hat = limit_costate(rec, tail)
            if psi_hat is None:
                return a0, math.nan, ConditionVerdict(
                    Verdict.INCONCLUSIVE, series, tail.tol,
                    note="a0 exists but the limit costate does not converge")
        else:
            psi_hat = np.zeros_like(a0)
        Ytau = transition.fundamental(tau)
        # K(t0, tau)* a0 = Y(tau)^-* a0
        k_part = np.linalg.solve(Ytau.T, a0)
        defect = float(np.max(np.abs(costate.psi(tau) - k_part - lam * psi_hat)))
        residual = max(residual, defect)
    return a0, residual, ConditionVerdict(
        Verdict.HOLDS, series, tail.tol,
        note=f"a0 = {np.array2string(a0, precision=6)}, residual {residual:.3g}")


# ---------------------------------------------------------------------------
# payoff-rate maximization under state constraints


def check_gmax(problem: ControlProblem, feasible_pairs: Sequence,
               time_grid, control_resolution: Optional[int] = None,
               tol: float = 1e-9) -> list:
    """Pointwise payoff-rate maximization over a family of feasible candidates.

    Applicable only when the payoff rate does not depend on the state (probed
    before running; otherwise ValueError).  For each candidate and each
    sampled time t, the fiber of competing control values consists of every
    family member's control evaluated where its own trajectory passes through
    the same state; the candidate holds iff its payoff rate is maximal on
    every fiber.  ``control_resolution`` is accepted for interface symmetry
    (fibers come from the family, not from a grid).
    """
    time_grid = np.atleast_1d(np.asarray(time_grid, dtype=float))
    pairs = list(feasible_pairs)
    if not pairs:
        raise ValueError("need at least one feasible candidate")
    _require_state_free_payoff(problem, pairs)

    verdicts = []
    for i, (traj_i, ctrl_i) in enumerate(pairs):
        worst = -math.inf
        series = []
        for t in time_grid:
            t = float(t)
            x_i = traj_i(t)
            u_i = ctrl_i.evaluate(t)
            g_i = float(problem.payoff(x_i, u_i, t))
            g_best = g_i
            for j, (traj_j, ctrl_j) in enumerate(pairs):
                if j == i:
                    continue
                for s in _state_crossings(traj_j, x_i):
                    u_j = ctrl_j.evaluate(s)
                    g_best = max(g_best, float(problem.payoff(x_i, u_j, t)))
            shortfall = g_best - g_i
            series.append((t, shortfall))
            worst = max(worst, shortfall)
        status = Verdict.HOLDS if worst <= tol else Verdict.FAILS
        verdicts.append(ConditionVerdict(
            status, series, tol,
            note=f"candidate {i}: max payoff-rate shortfall {worst:.3g}"))
    return verdicts


def _require_state_free_payoff(problem: ControlProblem, pairs):
    probes = []
    for traj, ctrl in pairs[:3]:
        ts = np.linspace(traj.t0, traj.t_end, 5)
        probes.extend((traj(float(t)), ctrl.evaluate(float(t)), float(t)) for t in ts)
    for x, u, t in probes:
        _, gx = jacobians(problem, x, u, t)
        if np.max(np.abs(gx)) > 1e-10:
            raise ValueError("payoff depends on the state; the payoff-rate "
                             "maximization rule does not apply")


def _state_crossings(traj: Trajectory, x_target, max_hits: int = 8):
    """Times where a (scalar-state) trajectory passes through x_target."""
    if traj.dim != 1:
        raise ValueError("fiber matching implemented for scalar states")
    target = float(np.atleast_1d(x_target)[0])
    vals = traj.states[:, 0] - target
    hits = []
    grid = traj.time_grid
    sign_change = np.where(vals[:-1] * vals[1:] <= 0)[0]
    for idx in sign_change:
        if len(hits) >= max_hits:
            break
        a, b = grid[idx], grid[idx + 1]
        if b <= a:
            continue
        fa = vals[idx]
        lo, hi = a, b
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = float(traj(mid)[0]) - target
            if fa * fm <= 0:
                hi = mid
            else:
                lo, fa = mid, fm
        hits.append(0.5 * (lo + hi))
    return hits
