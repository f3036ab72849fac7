"""Explicit Runge-Kutta integration with dense output and domain-exit detection.

One engine serves every ODE in the package: state equations under a control
signal, variational (transition-matrix) systems, backward adjoint equations,
and payoff/gradient quadratures folded into the state vector.  Trajectories
carry a cubic-Hermite interpolant built from node states and node derivatives,
so dense evaluation costs nothing extra and is exact at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Box",
    "ControlSignal",
    "ExitEvent",
    "IntegrationError",
    "IntegratorSettings",
    "NonExtendibleError",
    "Trajectory",
    "integrate",
    "integrate_controlled",
    "solve_state",
]


class IntegrationError(RuntimeError):
    """Step-size underflow, field blow-up, or other numerical failure."""


class NonExtendibleError(RuntimeError):
    """A trajectory left the state domain before the requested horizon.

    Distinct from :class:`IntegrationError`: the integration itself succeeded
    but terminated at the domain boundary.  Carries the exit event.
    """

    def __init__(self, event: "ExitEvent"):
        super().__init__(f"trajectory not extendible past t={event.time:.6g}: {event.description}")
        self.event = event


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box; +-inf bounds mean unbounded in that direction."""

    lower: np.ndarray
    upper: np.ndarray

    @staticmethod
    def unbounded(dim: int) -> "Box":
        return Box(np.full(dim, -np.inf), np.full(dim, np.inf))

    @staticmethod
    def from_bounds(lower, upper) -> "Box":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lower <= upper componentwise")
        return Box(lo, hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, y: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(y)) and np.all(y > self.lower) and np.all(y < self.upper))

    def margins(self, y: np.ndarray) -> np.ndarray:
        """Per-component distance to the nearest face (negative once outside)."""
        return np.minimum(y - self.lower, self.upper - y)

    def describe_exit(self, y: np.ndarray) -> str:
        parts = []
        for i in range(self.dim):
            if y[i] <= self.lower[i]:
                parts.append(f"y[{i}] reached lower bound {self.lower[i]:g}")
            elif y[i] >= self.upper[i]:
                parts.append(f"y[{i}] reached upper bound {self.upper[i]:g}")
            elif not np.isfinite(y[i]):
                parts.append(f"y[{i}] non-finite")
        return "; ".join(parts) if parts else "left domain"

    def extended(self, extra_dims: int) -> "Box":
        """Same box with unbounded trailing components appended."""
        lo = np.concatenate([self.lower, np.full(extra_dims, -np.inf)])
        hi = np.concatenate([self.upper, np.full(extra_dims, np.inf)])
        return Box(lo, hi)


@dataclass(frozen=True)
class ExitEvent:
    time: float
    state: np.ndarray
    description: str


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    method: str = "rk45_adaptive"  # or "rk4_fixed"
    max_steps: int = 4_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ValueError("tolerances and max_step must be positive")
        if self.method not in ("rk45_adaptive", "rk4_fixed"):
            raise ValueError(f"unknown method {self.method!r}")


DEFAULT_SETTINGS = IntegratorSettings()

# Dormand-Prince 5(4) tableau; row 7 equals the 5th-order weights (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
)
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class Trajectory:
    """Dense solution of an ODE on an increasing time grid.

    ``time_grid`` is nondecreasing; a repeated node marks a derivative jump
    (control switching time).  Evaluation uses piecewise cubic Hermite in the
    node states and node derivatives, which reproduces the node states exactly
    and matches the accuracy of the 4th/5th-order steps between them.
    """

    def __init__(self, time_grid, states, derivs, exit_event: Optional[ExitEvent] = None,
                 requested_t0: Optional[float] = None, requested_t_end: Optional[float] = None):
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        self.exit_event = exit_event
        self.requested_t0 = self.time_grid[0] if requested_t0 is None else requested_t0
        self.requested_t_end = self.time_grid[-1] if requested_t_end is None else requested_t_end
        if np.any(np.diff(self.time_grid) < 0):
            raise ValueError("time grid must be nondecreasing")

    @property
    def t0(self) -> float:
        return float(self.time_grid[0])

    @property
    def t_end(self) -> float:
        return float(self.time_grid[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def covers(self, t: float, slack: float = 1e-9) -> bool:
        pad = slack * max(1.0, abs(self.t_end - self.t0))
        return self.t0 - pad <= t <= self.t_end + pad

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tq = np.atleast_1d(t_arr)
        span = max(abs(self.t_end - self.t0), 1.0)
        if np.any(tq < self.t0 - 1e-9 * span) or np.any(tq > self.t_end + 1e-9 * span):
            raise ValueError(
                f"evaluation time outside trajectory span [{self.t0:.6g}, {self.t_end:.6g}]"
            )
        tq = np.clip(tq, self.t0, self.t_end)
        grid = self.time_grid
        idx = np.clip(np.searchsorted(grid, tq, side="right") - 1, 0, len(grid) - 2)
        ta, tb = grid[idx], grid[idx + 1]
        h = tb - ta
        safe_h = np.where(h > 0, h, 1.0)
        s = np.where(h > 0, (tq - ta) / safe_h, 0.0)[:, None]
        ya, yb = self.states[idx], self.states[idx + 1]
        fa, fb = self.derivs[idx], self.derivs[idx + 1]
        hh = np.where(h > 0, h, 0.0)[:, None]
        s2, s3 = s * s, s * s * s
        out = ((2 * s3 - 3 * s2 + 1) * ya + (s3 - 2 * s2 + s) * hh * fa
               + (-2 * s3 + 3 * s2) * yb + (s3 - s2) * hh * fb)
        return out[0] if scalar else out

    def derivative(self, t):
        """Hermite-interpolant time derivative (used for residual checks)."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tq = np.atleast_1d(np.clip(t_arr, self.t0, self.t_end))
        grid = self.time_grid
        idx = np.clip(np.searchsorted(grid, tq, side="right") - 1, 0, len(grid) - 2)
        ta, tb = grid[idx], grid[idx + 1]
        h = tb - ta
        safe_h = np.where(h > 0, h, 1.0)
        s = np.where(h > 0, (tq - ta) / safe_h, 0.0)[:, None]
        ya, yb = self.states[idx], self.states[idx + 1]
        fa, fb = self.derivs[idx], self.derivs[idx + 1]
        s2 = s * s
        inv_h = (1.0 / safe_h)[:, None]
        out = ((6 * s2 - 6 * s) * ya * inv_h + (3 * s2 - 4 * s + 1) * fa
               + (-6 * s2 + 6 * s) * yb * inv_h + (3 * s2 - 2 * s) * fb)
        return out[0] if scalar else out


def _hermite_on_step(t, y, f0, h, y_new, f_new, theta):
    s = theta
    s2, s3 = s * s, s ** 3
    return ((2 * s3 - 3 * s2 + 1) * y + (s3 - 2 * s2 + s) * h * f0
            + (-2 * s3 + 3 * s2) * y_new + (s3 - s2) * h * f_new)


def _initial_step(field, t0, y0, f0, direction, settings, span):
    scale = settings.abs_tol + settings.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2))) if y0.size else 0.0
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2))) if y0.size else 0.0
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6 * max(span, 1.0)
    else:
        h = 0.01 * d0 / d1
    return min(h, span, settings.max_step)


def _error_norm(err, y, y_new, settings):
    scale = settings.abs_tol + settings.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(field: Callable[[float, np.ndarray], np.ndarray], t0: float, y0,
              t_end: float, settings: Optional[IntegratorSettings] = None,
              domain: Optional[Box] = None,
              stop: Optional[Callable[[float, np.ndarray], Optional[str]]] = None) -> Trajectory:
    """Integrate ``dy/dt = field(t, y)`` from t0 to t_end (either direction).

    Stops early with an ``exit_event`` when the solution reaches the boundary
    of the open ``domain`` box (crossing time localized by bisection on the
    step interpolant to 1e-9 of the span) or when ``stop(t, y)`` returns a
    label.  Backward integration is performed by time reversal of the field;
    the returned grid is always increasing.

    Raises ``IntegrationError`` on step-size underflow away from the domain
    boundary or on a non-finite field value that cannot be attributed to a
    boundary crossing.
    """
    settings = settings or DEFAULT_SETTINGS
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    if t_end == t0:
        f0 = np.atleast_1d(np.asarray(field(t0, y0), dtype=float))
        return Trajectory([t0], [y0], [f0])
    if t_end < t0:
        rev = lambda s, y: -np.asarray(field(-s, y), dtype=float)
        rstop = (lambda s, y: stop(-s, y)) if stop else None
        traj = integrate(rev, -t0, y0, -t_end, settings, domain, rstop)
        ev = traj.exit_event
        if ev is not None:
            ev = ExitEvent(-ev.time, ev.state, ev.description)
        return Trajectory(-traj.time_grid[::-1], traj.states[::-1], -traj.derivs[::-1],
                          exit_event=ev, requested_t0=t_end, requested_t_end=t0)

    span = t_end - t0
    h_floor = 1e-9 * span
    with np.errstate(all="ignore"):
        return _forward_loop(field, t0, y0, t_end, settings, domain, stop, span, h_floor)


def _forward_loop(field, t0, y0, t_end, settings, domain, stop, span, h_floor):
    def f_eval(t, y):
        return np.atleast_1d(np.asarray(field(t, y), dtype=float))

    f0 = f_eval(t0, y0)
    if not np.all(np.isfinite(f0)):
        raise IntegrationError(f"field non-finite at initial point t={t0:g}")
    if domain is not None and not domain.contains(y0):
        raise ValueError("initial state outside the open domain")
    if stop is not None and stop(t0, y0):
        return Trajectory([t0], [y0], [f0],
                          exit_event=ExitEvent(t0, y0.copy(), str(stop(t0, y0))))

    fixed = settings.method == "rk4_fixed"
    if fixed:
        h_fix = settings.max_step if math.isfinite(settings.max_step) else span / 100.0
        n_steps = max(1, int(math.ceil(span / h_fix - 1e-12)))
        h = span / n_steps
    else:
        h = _initial_step(field, t0, y0, f0, 1.0, settings, span)

    ts, ys, fs = [t0], [y0.copy()], [f0.copy()]
    t, y, fy = t0, y0.copy(), f0
    exit_event = None
    n_taken = 0

    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        n_taken += 1
        if n_taken > settings.max_steps:
            raise IntegrationError("maximum number of steps exceeded")
        h = min(h, t_end - t, settings.max_step)

        # ---- take one step (with retries for the adaptive method) ----
        while True:
            if fixed:
                k1 = fy
                k2 = f_eval(t + h / 2, y + (h / 2) * k1)
                k3 = f_eval(t + h / 2, y + (h / 2) * k2)
                k4 = f_eval(t + h, y + h * k3)
                y_new = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(y_new)):
                    raise IntegrationError(f"non-finite field value near t={t:g} (rk4_fixed)")
                f_new = f_eval(t + h, y_new)
                if not np.all(np.isfinite(f_new)):
                    raise IntegrationError(f"non-finite field value near t={t + h:g} (rk4_fixed)")
                err_norm = 0.0
                break

            K = np.empty((7, y.size))
            K[0] = fy
            bad = False
            for i in range(1, 7):
                yi = y + h * (_DP_A[i] @ K[:i])
                K[i] = f_eval(t + _DP_C[i] * h, yi)
                if not np.all(np.isfinite(K[i])):
                    bad = True
                    break
            if bad:
                h *= 0.5
                if h < h_floor:
                    ev = _boundary_stall(t, y, fy, domain, h_floor)
                    if ev is None:
                        raise IntegrationError(f"step size underflow near t={t:g} (field blow-up)")
                    exit_event = ev
                    break
                continue
            y_new = y + h * (_DP_A[6] @ K[:6])
            f_new = K[6]
            err_norm = _error_norm(h * (_DP_E @ K), y, y_new, settings)
            if not math.isfinite(err_norm):
                h *= 0.5
                if h < h_floor:
                    raise IntegrationError(f"step size underflow near t={t:g} (error estimate failed)")
                continue
            if err_norm > 1.0:
                h *= min(1.0, max(0.2, 0.9 * err_norm ** -0.2))
                if h < h_floor:
                    ev = _boundary_stall(t, y, fy, domain, h_floor)
                    if ev is None:
                        raise IntegrationError(f"step size underflow near t={t:g} (stiffness or blow-up)")
                    exit_event = ev
                    break
                continue
            break

        if exit_event is not None:
            ts.append(exit_event.time)
            ys.append(exit_event.state.copy())
            fs.append(fs[-1].copy())
            break

        t_new = t + h

        # ---- domain exit on the accepted step ----
        if domain is not None and not domain.contains(y_new):
            theta = _bisect_predicate(
                lambda th: not domain.contains(
                    _hermite_on_step(t, y, fy, h, y_new, f_new, th)),
                h, h_floor)
            t_ev = t + theta * h
            y_ev = _hermite_on_step(t, y, fy, h, y_new, f_new, theta)
            y_ev = _snap_to_faces(y_ev, domain)
            exit_event = ExitEvent(t_ev, y_ev, domain.describe_exit(y_ev))
            ts.append(t_ev)
            ys.append(y_ev)
            fs.append(_step_slope(t, y, fy, h, y_new, f_new, theta))
            break

        # ---- user stop condition ----
        if stop is not None:
            label = stop(t_new, y_new)
            if label:
                theta = _bisect_predicate(
                    lambda th: bool(stop(t + th * h,
                                         _hermite_on_step(t, y, fy, h, y_new, f_new, th))),
                    h, h_floor)
                t_ev = t + theta * h
                y_ev = _hermite_on_step(t, y, fy, h, y_new, f_new, theta)
                lbl = stop(t_ev, y_ev) or label
                exit_event = ExitEvent(t_ev, y_ev, str(lbl))
                ts.append(t_ev)
                ys.append(y_ev)
                fs.append(_step_slope(t, y, fy, h, y_new, f_new, theta))
                break

        ts.append(t_new)
        ys.append(y_new.copy())
        fs.append(f_new.copy())
        t, y, fy = t_new, y_new, f_new
        if not fixed:
            grow = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h = max(h * grow, h_floor)

    return Trajectory(np.array(ts), np.array(ys), np.array(fs), exit_event=exit_event,
                      requested_t0=t0, requested_t_end=t_end)


def _step_slope(t, y, f0, h, y_new, f_new, theta):
    eps = 1e-7
    a = _hermite_on_step(t, y, f0, h, y_new, f_new, max(0.0, theta - eps))
    b = _hermite_on_step(t, y, f0, h, y_new, f_new, max(eps, theta))
    return (b - a) / (eps * h)


def _bisect_predicate(outside, h, h_floor, max_iter=80):
    """Smallest theta in (0, 1] with outside(theta) true, to within h_floor/h."""
    lo, hi = 0.0, 1.0
    tol = max(h_floor / h, 1e-15)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if outside(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _boundary_stall(t, y, fy, domain, h_floor):
    """Resolve a step-size stall against a domain face as an exit event.

    Returns None when the stall is not attributable to a nearby face, in
    which case the caller reports a genuine integration failure.
    """
    if domain is None:
        return None
    margins = domain.margins(y)
    best = None
    for i in range(y.size):
        speed = abs(fy[i])
        if speed <= 0 or not math.isfinite(margins[i]):
            continue
        outward = (fy[i] < 0 and np.isfinite(domain.lower[i]) and
                   abs(y[i] - domain.lower[i]) == margins[i]) or \
                  (fy[i] > 0 and np.isfinite(domain.upper[i]) and
                   abs(domain.upper[i] - y[i]) == margins[i])
        if not outward:
            continue
        t_hit = margins[i] / speed
        if best is None or t_hit < best[0]:
            best = (t_hit, i)
    if best is None or best[0] > 1e4 * h_floor:
        return None
    t_hit, i = best
    y_ev = y + t_hit * fy
    y_ev = _snap_to_faces(y_ev, domain)
    return ExitEvent(t + t_hit, y_ev, domain.describe_exit(y_ev))


def _snap_to_faces(y, domain, slack_frac=1e-7):
    y = y.copy()
    scale = np.maximum(1.0, np.abs(y))
    for i in range(y.size):
        if np.isfinite(domain.lower[i]) and y[i] - domain.lower[i] <= slack_frac * scale[i]:
            y[i] = domain.lower[i]
        if np.isfinite(domain.upper[i]) and domain.upper[i] - y[i] <= slack_frac * scale[i]:
            y[i] = domain.upper[i]
    return y


# ---------------------------------------------------------------------------
# control signals


class ControlSignal:
    """A control as a function of time.

    Kinds: ``constant``, ``piecewise_constant`` and ``closed_form``.
    Piecewise signals follow the (a, b] convention: the value stored for a
    switching time applies on the interval ending at that time, matching the
    half-open pulse interval used by needle variations.  Integration never
    evaluates a piecewise signal across a switch: ``integrate_controlled``
    cuts the time span at every breakpoint and freezes the segment value.
    """

    def __init__(self, kind, dim, const=None, times=None, values=None, fn=None, overrides=()):
        self.kind = kind
        self.dim = int(dim)
        self._const = const
        self._times = np.asarray(times, dtype=float) if times is not None else np.empty(0)
        self._values = values
        self._fn = fn
        self._overrides = tuple(overrides)  # (a, b, u) with value u on (a, b]

    # -- constructors -------------------------------------------------
    @staticmethod
    def constant(u) -> "ControlSignal":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return ControlSignal("constant", u.size, const=u)

    @staticmethod
    def piecewise_constant(times, values) -> "ControlSignal":
        times = np.asarray(times, dtype=float)
        vals = np.atleast_2d(np.asarray(values, dtype=float))
        if vals.shape[0] == 1 and vals.shape[1] == times.size + 1:
            vals = vals.T  # accept 1-d control given as a flat list
        if vals.shape[0] != times.size + 1:
            raise ValueError("need len(times) + 1 control values")
        if np.any(np.diff(times) <= 0):
            raise ValueError("switching times must be strictly increasing")
        return ControlSignal("piecewise_constant", vals.shape[1], times=times, values=vals)

    @staticmethod
    def closed_form(fn: Callable[[float], np.ndarray], dim: int) -> "ControlSignal":
        return ControlSignal("closed_form", dim, fn=fn)

    # -- evaluation ----------------------------------------------------
    def evaluate(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self._const
        if self.kind == "piecewise_constant":
            idx = int(np.searchsorted(self._times, t, side="left"))
            return self._values[idx]
        for a, b, u in self._overrides:
            if a < t <= b:
                return u
        return np.atleast_1d(np.asarray(self._fn(t), dtype=float))

    __call__ = evaluate

    def breakpoints(self) -> np.ndarray:
        pts = list(self._times)
        for a, b, _ in self._overrides:
            pts.extend((a, b))
        return np.unique(np.asarray(pts, dtype=float))

    def segment_value(self, a: float, b: float) -> Optional[np.ndarray]:
        """Constant value on (a, b] if the signal is constant there, else None."""
        if self.kind == "constant":
            return self._const
        if self.kind == "piecewise_constant":
            ia = int(np.searchsorted(self._times, a, side="right"))
            ib = int(np.searchsorted(self._times, b, side="left"))
            if ia == ib:
                return self._values[ib]
            return None
        for oa, ob, u in self._overrides:
            if oa <= a and b <= ob:
                return u
        return None

    def with_needle(self, tau: float, alpha: float, u) -> "ControlSignal":
        """Replace the value by constant ``u`` on the pulse interval (tau - alpha, tau]."""
        if alpha <= 0:
            raise ValueError("needle width must be positive")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a, b = tau - alpha, tau
        if self.kind in ("constant", "piecewise_constant"):
            # a pulse matching the signal on its whole interval is a no-op
            probes = np.unique(np.concatenate(
                [[b], self._times[(self._times > a) & (self._times <= b)]]))
            if all(np.array_equal(self.evaluate(float(p)), u) for p in probes):
                return self
        if self.kind == "closed_form":
            return ControlSignal("closed_form", self.dim, fn=self._fn,
                                 overrides=self._overrides + ((a, b, u),))
        times = np.unique(np.concatenate([self.breakpoints(), [a, b]]))
        vals = []
        for i in range(times.size + 1):
            right = times[i] if i < times.size else times[-1] + 1.0
            left = times[i - 1] if i > 0 else times[0] - 1.0
            if a <= left and right <= b:
                vals.append(u)
            else:
                vals.append(self.evaluate(right))
        return ControlSignal.piecewise_constant(times, np.array(vals))


def integrate_controlled(rhs: Callable[[np.ndarray, np.ndarray, float], np.ndarray],
                         control: ControlSignal, t0: float, y0, t_end: float,
                         settings: Optional[IntegratorSettings] = None,
                         domain: Optional[Box] = None,
                         stop: Optional[Callable[[float, np.ndarray], Optional[str]]] = None
                         ) -> Trajectory:
    """Integrate ``dy/dt = rhs(y, u(t), t)`` segment-by-segment between control
    breakpoints, so discontinuous controls are handled exactly (a node is
    placed at every switch and the segment value is frozen on each piece)."""
    settings = settings or DEFAULT_SETTINGS
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if t_end == t0:
        u0 = control.evaluate(t0)
        return Trajectory([t0], [y0], [np.atleast_1d(rhs(y0, u0, t0))])

    forward = t_end > t0
    lo, hi = (t0, t_end) if forward else (t_end, t0)
    cuts = [c for c in control.breakpoints() if lo < c < hi]
    nodes = [t0] + (sorted(cuts) if forward else sorted(cuts, reverse=True)) + [t_end]

    pieces = []
    y = y0
    for a, b in zip(nodes[:-1], nodes[1:]):
        seg_lo, seg_hi = (a, b) if a < b else (b, a)
        u_const = control.segment_value(seg_lo, seg_hi)
        if u_const is not None:
            fld = lambda t, yy, u=u_const: rhs(yy, u, t)
        else:
            fld = lambda t, yy: rhs(yy, control.evaluate(t), t)
        piece = integrate(fld, a, y, b, settings, domain, stop)
        pieces.append(piece)
        if piece.exit_event is not None:
            break
        y = piece.states[-1] if forward else piece.states[0]

    if not forward:
        pieces.reverse()
    grids = [pieces[0].time_grid]
    states = [pieces[0].states]
    derivs = [pieces[0].derivs]
    for p in pieces[1:]:
        grids.append(p.time_grid)
        states.append(p.states)
        derivs.append(p.derivs)
    event = next((p.exit_event for p in pieces if p.exit_event is not None), None)
    return Trajectory(np.concatenate(grids), np.vstack(states), np.vstack(derivs),
                      exit_event=event, requested_t0=t0, requested_t_end=t_end)


def solve_state(problem, control: ControlSignal, t_end: float,
                settings: Optional[IntegratorSettings] = None,
                x0=None, t0: Optional[float] = None,
                stop: Optional[Callable[[float, np.ndarray], Optional[str]]] = None) -> Trajectory:
    """State response of a control problem under a control signal.

    Integrates dx/dt = f(x, u(t), t) on [t0, t_end] with the problem's open
    state domain; a domain exit marks the trajectory non-extendible and is
    recorded as ``exit_event`` rather than raised.
    """
    x0 = problem.initial_state if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    t0 = problem.initial_time if t0 is None else float(t0)
    if t_end < t0:
        raise ValueError("solve_state integrates forward: need t_end >= t0")
    if not problem.state_domain.contains(x0):
        raise ValueError("initial state outside the problem's state domain")
    return integrate_controlled(problem.dynamics, control, t0, x0, t_end,
                                settings, problem.state_domain, stop)
