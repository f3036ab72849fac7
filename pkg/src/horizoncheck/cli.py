"""Command-line frontend.

Subcommands:

* ``check``          run the full condition battery for a built-in example
* ``phase-diagram``  classify a (k0, c0) grid of the capital-accumulation
                     phase plane, with nullclines and the shot saddle path
* ``overtake``       empirical overtaking comparison against built-in
                     challenger families
* ``needle``         first-order needle-variation check
* ``list-examples``  names and parameters of the built-in problems

Reports are CSV (versioned header, 9-significant-digit fields, LF line
endings) or JSON mirroring the same columns.  Exit status reflects only
operational success; condition verdicts never change it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conditions import (
    check_classical,
    check_general,
    check_gmax,
    check_jx_bounded,
    check_max_principle,
    decompose_costate,
    dense_horizon_grid,
)
from .ode_engine import ControlSignal, IntegrationError, IntegratorSettings, solve_state
from .problem_model import make_builtin_problem
from .reference_examples import (
    RamseyParams,
    integrator_reference,
    oscillator_reference,
    ramsey_classify,
    ramsey_feasible_candidate,
    ramsey_saddle_candidate,
    ramsey_shoot,
    ramsey_steady_state,
)
from .overtaking import empirical_overtaking_test, needle_limit_check
from .variational import TailPolicy, integrate_adjoint, jx_scan, limit_costate, transition_matrix

__all__ = [
    "RunConfig",
    "ReportData",
    "build_check_report",
    "build_needle_report",
    "build_overtake_report",
    "build_phase_diagram_report",
    "cmd_check",
    "cmd_overtake",
    "cmd_phase_diagram",
    "main",
]

EXAMPLES = ("ramsey", "integrator", "oscillator")

_EXAMPLE_PARAMS = {
    "ramsey": "alpha delta theta k0 [c_max]",
    "integrator": "rho [a0] [lambda]",
    "oscillator": "b [r] [phi]",
}


@dataclass
class RunConfig:
    example: str
    params: dict = field(default_factory=dict)
    t_max: Optional[float] = None
    grid: tuple = (100, 100)
    tol: float = 1e-6
    out: Optional[str] = None
    fmt: str = "csv"
    eps: float = 1e-6
    k_max: Optional[float] = None
    c_max: Optional[float] = None

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example!r}")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError("t-max must be positive")

    def resolved_t_max(self) -> float:
        if self.t_max is not None:
            return self.t_max
        return 2000.0 if self.example == "ramsey" else 400.0


@dataclass
class ReportData:
    schema: str
    columns: list
    rows: list  # list of lists, already formatted as strings

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.schema, *self.columns])
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {"schema": self.schema,
                   "columns": ["kind", *self.columns],
                   "rows": [list(r) for r in self.rows]}
        return json.dumps(payload, indent=1) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.9g}"


_CHECK_SETTINGS = IntegratorSettings(rel_tol=1e-10, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# check


def _integrator_candidates(rho: float, a0: Optional[float], lam: Optional[float]):
    """Adjoint candidates (label, lam, a0) for the integrator battery."""
    if lam is not None:
        base_a0 = a0 if a0 is not None else (0.0 if lam == 1.0 else 1.0)
        return [(f"psi(lam={lam:g},a0={base_a0:g})", lam, base_a0)]
    if a0 is None:
        a0 = 0.0 if rho > 0 else 0.5
    abnormal_a0 = a0 if a0 > 0 else 1.0
    return [(f"psi(lam=1,a0={a0:g})", 1.0, a0),
            (f"psi(lam=0,a0={abnormal_a0:g})", 0.0, abnormal_a0)]


def _oscillator_candidates(b: float, r: Optional[float], phi: Optional[float]):
    if r is not None or phi is not None:
        r = 0.0 if r is None else r
        phi = 0.0 if phi is None else phi
        return [(f"psi(r={r:g},phi={phi:g})", r, phi)]
    battery = [("psi(r=0,phi=0)", 0.0, 0.0),
               (f"psi(r={b / 2:g},phi=0.7)", b / 2, 0.7)]
    if b >= 1.0:
        battery.append(("psi(r=1,phi=0)", 1.0, 0.0))
    battery.append((f"psi(r={b:g},phi=-pi/2)", b, -math.pi / 2))
    return battery


def build_check_report(config: RunConfig) -> ReportData:
    if config.example == "ramsey":
        return _build_ramsey_check(config)
    return _build_linear_check(config)


def _build_linear_check(config: RunConfig) -> ReportData:
    t_max = config.resolved_t_max()
    params = dict(config.params)
    rows = []

    if config.example == "integrator":
        rho = float(params.get("rho", 0.1))
        problem = make_builtin_problem("integrator", {"rho": rho})
        control = ControlSignal.constant([1.0])
        candidates = _integrator_candidates(rho, params.get("a0"), params.get("lambda"))
        def terminal_psi(lam, a0):
            return integrator_reference(rho, a0, lam).psi(t_max)
    else:
        b = float(params.get("b", 0.5))
        problem = make_builtin_problem("oscillator", {"b": b})
        control = ControlSignal.constant([1.0])
        ref = oscillator_reference(b)
        candidates = [(label, 1.0, (r, phi))
                      for label, r, phi in _oscillator_candidates(
                          b, params.get("r"), params.get("phi"))]
        def terminal_psi(lam, rphi):
            return ref.costate(rphi[0], rphi[1], t_max)

    trajectory = solve_state(problem, control, t_max, _CHECK_SETTINGS)
    transition = transition_matrix(problem, trajectory, control, settings=_CHECK_SETTINGS)
    tail = TailPolicy(t_max=t_max)

    # gradient-route rows: tail conditions, boundedness, limit costate
    tau_grid = [problem.initial_time]
    T_dense = dense_horizon_grid(problem.initial_time, t_max)
    for mode in ("WOO", "OO"):
        report = check_general(problem, trajectory, control, tau_grid,
                               T_grid=T_dense, mode=mode, transition=transition,
                               settings=_CHECK_SETTINGS)
        rows.append(["general", "(gradient route)", f"prop_general_{mode}",
                     report.verdict.status.value,
                     _fmt(float(np.nanmax(report.estimates))), report.verdict.note])

    records = jx_scan(transition, tau_grid, tail.horizon_grid(problem.initial_time)[1:])
    jx0 = records[0]
    psi_hat, lc_verdict = limit_costate(jx0, tail)
    rows.append(["limit", "(gradient route)", "limit_costate", lc_verdict.status.value,
                 _fmt(float(np.max(np.abs(psi_hat))) if psi_hat is not None else None),
                 lc_verdict.note])
    bound_verdict, m_est = check_jx_bounded(jx0)
    rows.append(["limit", "(gradient route)", "jx_bounded", bound_verdict.status.value,
                 _fmt(m_est), bound_verdict.note])

    # adjoint-candidate rows
    for label, lam, extra in [(c[0], c[1], c[2]) for c in _normalize_candidates(candidates)]:
        psi_T = np.atleast_1d(terminal_psi(lam, extra))
        costate = integrate_adjoint(problem, trajectory, control, (t_max, psi_T),
                                    lam, settings=_CHECK_SETTINGS)
        classical = check_classical(problem, trajectory, control, costate, lam,
                                    transition, tail)
        for cond_id, verdict in classical.items():
            rows.append(["classical", label, cond_id, verdict.status.value,
                         _fmt(verdict.diagnostic_series[-1][1]
                              if verdict.diagnostic_series else None),
                         verdict.note])
        mp = check_max_principle(problem, trajectory, control, costate, lam,
                                 time_grid=np.linspace(problem.initial_time, t_max, 201))
        rows.append(["max_principle", label, "maxH", mp.status.value,
                     _fmt(max(v for _, v in mp.diagnostic_series)), mp.note])
        a0_est, residual, dec = decompose_costate(costate, transition, records, lam, tail)
        rows.append(["decomposition", label, "a0_limit", dec.status.value,
                     _fmt(residual), dec.note])

    return ReportData("horizon_check_report_v1",
                      ["candidate", "condition", "status", "estimate", "note"],
                      [[r[0], r[1], r[2], r[3], r[4], r[5]] for r in rows])


def _normalize_candidates(candidates):
    # integrator tuples are (label, lam, a0); oscillator (label, lam, (r, phi))
    return [(c[0], c[1], c[2]) for c in candidates]


def _build_ramsey_check(config: RunConfig) -> ReportData:
    p = config.params
    params = RamseyParams(alpha=float(p.get("alpha", 0.4)),
                          delta=float(p.get("delta", 0.05)),
                          theta=float(p.get("theta", 0.5)),
                          k0=float(p.get("k0", 10.0)))
    interior, limit = ramsey_steady_state(params)
    rows = [
        ["value", "(steady state)", "k_star", "holds", _fmt(interior.k_star), ""],
        ["value", "(steady state)", "c_star", "holds", _fmt(interior.c_star), ""],
        ["value", "(steady state)", "k_zero_consumption", "holds", _fmt(limit.k_star), ""],
    ]
    t_family = min(200.0, config.resolved_t_max())
    c0_saddle, k_traj, saddle_control = ramsey_saddle_candidate(
        params, t_family, t_max_shoot=config.resolved_t_max())
    rows.append(["value", "(saddle)", "c0_saddle", "holds", _fmt(c0_saddle), ""])

    problem = params.problem()
    family = [(k_traj, saddle_control)]
    labels = [f"c0={c0_saddle:.6g} (saddle)"]
    for frac in (0.9, 0.75, 0.55, 0.35):
        c0 = frac * c0_saddle
        traj, ctrl = ramsey_feasible_candidate(params, c0, t_family)
        family.append((traj, ctrl))
        labels.append(f"c0={c0:.6g}")
    sample_times = [1.0, 2.0, 4.0, 6.0, 9.0]
    verdicts = check_gmax(problem, family, sample_times)
    for label, verdict in zip(labels, verdicts):
        worst = max(v for _, v in verdict.diagnostic_series)
        rows.append(["gmax", label, "payoff_rate_max", verdict.status.value,
                     _fmt(worst), verdict.note])
    return ReportData("horizon_check_report_v1",
                      ["candidate", "condition", "status", "estimate", "note"],
                      rows)


def cmd_check(config: RunConfig) -> int:
    report = build_check_report(config)
    _emit(report, config)
    return 0


# ---------------------------------------------------------------------------
# phase diagram


def build_phase_diagram_report(config: RunConfig) -> ReportData:
    if config.example != "ramsey":
        raise ValueError("phase-diagram requires --example ramsey")
    p = config.params
    params = RamseyParams(alpha=float(p.get("alpha", 0.4)),
                          delta=float(p.get("delta", 0.05)),
                          theta=float(p.get("theta", 0.5)),
                          k0=float(p.get("k0", 10.0)))
    interior, limit = ramsey_steady_state(params)
    k_hi = config.k_max if config.k_max is not None else 1.1 * limit.k_star
    c_hi = config.c_max if config.c_max is not None else 3.3 * interior.c_star
    nk, nc = config.grid
    t_sweep = min(600.0, config.resolved_t_max())

    rows = []
    k_vals = [k_hi * (i + 1) / nk for i in range(nk)]
    c_vals = [c_hi * (j + 1) / nc for j in range(nc)]
    for k0 in k_vals:
        for c0 in c_vals:
            label = ramsey_classify(params, k0, c0, t_max=t_sweep)
            rows.append(["grid", _fmt(k0), _fmt(c0), label])

    n_line = 60
    c_line = np.unique(np.append(np.linspace(c_hi / n_line, c_hi, n_line),
                                 interior.c_star))
    for c in c_line:
        rows.append(["nullcline_cdot", _fmt(interior.k_star), _fmt(float(c)), ""])
    k_line = np.unique(np.append(np.linspace(k_hi / n_line, k_hi, n_line),
                                 interior.k_star))
    for k in k_line:
        c_null = k ** params.alpha - params.delta * k
        if c_null > 0:
            rows.append(["nullcline_kdot", _fmt(float(k)), _fmt(float(c_null)), ""])

    _, orbit = ramsey_shoot(params, t_max=config.resolved_t_max())
    stride = max(1, orbit.time_grid.size // 200)
    for state in orbit.states[::stride]:
        rows.append(["saddle_path", _fmt(float(state[0])), _fmt(float(state[1])), ""])
    rows.append(["saddle_path", _fmt(float(orbit.states[-1, 0])),
                 _fmt(float(orbit.states[-1, 1])), ""])

    return ReportData("phase_diagram_report_v1", ["k", "c", "label"], rows)


def cmd_phase_diagram(config: RunConfig) -> int:
    report = build_phase_diagram_report(config)
    _emit(report, config)
    return 0


# ---------------------------------------------------------------------------
# overtaking


def _delayed_start_signal(s: float) -> ControlSignal:
    return ControlSignal.piecewise_constant([s], [[0.0], [1.0]])


def build_overtake_report(config: RunConfig) -> ReportData:
    t_max = config.resolved_t_max()
    rows = []
    if config.example == "oscillator":
        b = float(config.params.get("b", 0.5))
        problem = make_builtin_problem("oscillator", {"b": b})
        candidate = ControlSignal.constant([1.0])
        challengers = [(f"delayed_start(s={s:g})", _delayed_start_signal(s))
                       for s in (math.pi / 2, math.pi, 2 * math.pi)]
    elif config.example == "integrator":
        rho = float(config.params.get("rho", 0.1))
        problem = make_builtin_problem("integrator", {"rho": rho})
        candidate = ControlSignal.constant([1.0])
        challengers = [("u=0", ControlSignal.constant([0.0])),
                       ("delayed_start(s=1)", _delayed_start_signal(1.0)),
                       ("u=0.5", ControlSignal.constant([0.5]))]
    else:
        p = config.params
        params = RamseyParams(alpha=float(p.get("alpha", 0.4)),
                              delta=float(p.get("delta", 0.05)),
                              theta=float(p.get("theta", 0.5)),
                              k0=float(p.get("k0", 10.0)))
        problem = params.problem()
        c0_saddle, _, candidate = ramsey_saddle_candidate(params, t_max,
                                                          t_max_shoot=t_max)
        challengers = []
        for dc in (0.5, -0.5):
            c0 = c0_saddle + dc
            orbit_ctrl = _ramsey_challenger_control(params, c0, t_max)
            challengers.append((f"euler(c0={c0:.6g})", orbit_ctrl))

    sample_spacing = 0.02 if config.example != "ramsey" else 0.25
    for label, challenger in challengers:
        report = empirical_overtaking_test(problem, candidate, challenger,
                                           eps=config.eps, T_max=t_max,
                                           sample_spacing=sample_spacing)
        rows.append(["challenger", label, report.verdict, _fmt(report.max_gap),
                     _fmt(report.argmax_T), report.evidence])
    return ReportData("overtake_report_v1",
                      ["challenger", "verdict", "max_gap", "argmax_T", "evidence"],
                      rows)


def _ramsey_challenger_control(params: RamseyParams, c0: float, t_max: float):
    from .reference_examples import ramsey_control_from_orbit, ramsey_euler_orbit

    orbit = ramsey_euler_orbit(params, params.k0, c0, t_max)
    return ramsey_control_from_orbit(orbit)


def cmd_overtake(config: RunConfig) -> int:
    report = build_overtake_report(config)
    _emit(report, config)
    return 0


# ---------------------------------------------------------------------------
# needle


def build_needle_report(config: RunConfig, tau: float, u: float, T: float,
                        alphas) -> ReportData:
    problem = make_builtin_problem(
        config.example,
        {k: v for k, v in config.params.items()
         if k in ("alpha", "delta", "theta", "k0", "c_max", "rho", "b")})
    if config.example == "ramsey":
        raise ValueError("needle supports the integrator and oscillator examples")
    base = ControlSignal.constant([1.0])
    report = needle_limit_check(problem, base, tau, [u], T, alphas)
    rows = [["sample", _fmt(a), _fmt(s), _fmt(report.prediction), _fmt(e)]
            for a, s, e in report.rows()]
    rows.append(["order", "", "", "", _fmt(report.fitted_order)])
    return ReportData("needle_report_v1",
                      ["alpha", "dj_over_alpha", "prediction", "abs_error"],
                      rows)


# ---------------------------------------------------------------------------
# driver


def _emit(report: ReportData, config: RunConfig):
    text = report.render(config.fmt)
    if config.out:
        with open(config.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(parser):
    parser.add_argument("--example", required=True, choices=EXAMPLES)
    parser.add_argument("--t-max", type=float, default=None)
    parser.add_argument("--grid", type=str, default="100x100",
                        help="grid size as NKxNC (phase diagram)")
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument("--eps", type=float, default=1e-6)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    for name in ("alpha", "delta", "theta", "k0", "c-max", "b", "rho", "a0",
                 "r", "phi", "k-max"):
        parser.add_argument(f"--{name}", type=float, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)


def _config_from_args(args) -> RunConfig:
    params = {}
    for key in ("alpha", "delta", "theta", "k0", "b", "rho", "a0", "r", "phi"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.lam is not None:
        params["lambda"] = args.lam
    try:
        nk, nc = (int(part) for part in args.grid.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"bad --grid {args.grid!r}, expected e.g. 100x100") from exc
    return RunConfig(example=args.example, params=params, t_max=args.t_max,
                     grid=(nk, nc), tol=args.tol, out=args.out, fmt=args.fmt,
                     eps=args.eps, k_max=getattr(args, "k_max", None),
                     c_max=getattr(args, "c_max", None))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="horizoncheck",
        description="Numerical checks of necessary optimality conditions "
                    "for infinite-horizon control problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("check", "phase-diagram", "overtake"):
        p = sub.add_parser(name)
        _add_common(p)

    p_needle = sub.add_parser("needle")
    _add_common(p_needle)
    p_needle.add_argument("--tau", type=float, default=1.0)
    p_needle.add_argument("--u", type=float, default=0.0)
    p_needle.add_argument("--t-horizon", type=float, default=20.0)
    p_needle.add_argument("--alphas", type=str, default="1e-1,1e-2,1e-3")

    sub.add_parser("list-examples")

    args = parser.parse_args(argv)
    if args.command == "list-examples":
        for name in EXAMPLES:
            print(f"{name}: parameters {_EXAMPLE_PARAMS[name]}")
        return 0

    try:
        config = _config_from_args(args)
        if args.command == "check":
            return cmd_check(config)
        if args.command == "phase-diagram":
            return cmd_phase_diagram(config)
        if args.command == "overtake":
            return cmd_overtake(config)
        if args.command == "needle":
            alphas = [float(a) for a in args.alphas.split(",") if a]
            report = build_needle_report(config, args.tau, args.u,
                                         args.t_horizon, alphas)
            _emit(report, config)
            return 0
    except (ValueError, IntegrationError, RuntimeError) as exc:
        print(f"horizoncheck: error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
