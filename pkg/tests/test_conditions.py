import math

import numpy as np
import pytest

from horizoncheck import (
    ControlSignal,
    TailPolicy,
    Verdict,
    accumulate_jx,
    check_classical,
    check_general,
    check_gmax,
    check_jx_bounded,
    check_max_principle,
    decompose_costate,
    delta_hamiltonian,
    dense_horizon_grid,
    integrate_adjoint,
    integrator_reference,
    jx_scan,
    limit_costate,
    oscillator_reference,
    solve_state,
    transition_matrix,
)

from conftest import STANDARD, TIGHT


def test_delta_hamiltonian_oracles(oscillator, osc_traj_30, u_one,
                                   integrator_undiscounted):
    rec = accumulate_jx(oscillator, osc_traj_30, u_one, 0.0,
                        [0.0, math.pi / 2], TIGHT)
    value = delta_hamiltonian(oscillator, osc_traj_30, u_one, rec, [-1.0],
                              0.0, math.pi / 2)
    assert value == pytest.approx(-3.0, abs=1e-8)
    assert delta_hamiltonian(oscillator, osc_traj_30, u_one, rec, [1.0],
                             0.0, math.pi / 2) == 0.0

    traj = solve_state(integrator_undiscounted, u_one, 10.0, TIGHT)
    rec0 = accumulate_jx(integrator_undiscounted, traj, u_one, 1.0,
                         [1.0, 5.0], TIGHT)
    assert delta_hamiltonian(integrator_undiscounted, traj, u_one, rec0,
                             [0.0], 1.0, 5.0) == pytest.approx(-4.0, abs=1e-9)
    with pytest.raises(ValueError):
        delta_hamiltonian(integrator_undiscounted, traj, u_one, rec0,
                          [3.0], 1.0, 5.0)


def test_check_general_oscillator_verdicts(oscillator, osc_traj_400, osc_op_400,
                                           u_one):
    T_grid = dense_horizon_grid(0.0, 400.0, spacing=0.02)
    woo = check_general(oscillator, osc_traj_400, u_one, [0.0], T_grid=T_grid,
                        mode="WOO", transition=osc_op_400)
    oo = check_general(oscillator, osc_traj_400, u_one, [0.0], T_grid=T_grid,
                       mode="OO", transition=osc_op_400)
    assert woo.verdict.status is Verdict.HOLDS
    assert oo.verdict.status is Verdict.FAILS
    ref = oscillator_reference(0.5)
    ugrid = woo.control_grid[:, 0]
    for u in (-1.0, 0.0, 0.5):
        j = int(np.argmin(np.abs(ugrid - u)))
        assert woo.estimates[0, j] == pytest.approx(ref.woo_bound(u), abs=5e-3)
        assert oo.estimates[0, j] == pytest.approx(ref.oo_bound(u), abs=5e-3)


def test_check_general_diagonal_identity(oscillator, osc_traj_400, osc_op_400,
                                         u_one):
    report = check_general(oscillator, osc_traj_400, u_one, [0.0, 3.0],
                           T_grid=dense_horizon_grid(0.0, 400.0, spacing=0.05),
                           mode="WOO", transition=osc_op_400)
    j_one = int(np.argmin(np.abs(report.control_grid[:, 0] - 1.0)))
    assert report.estimates[0, j_one] == 0.0
    assert report.estimates[1, j_one] == 0.0


def test_check_general_integrator_both_modes(integrator, integrator_undiscounted,
                                             u_one):
    for problem in (integrator, integrator_undiscounted):
        traj = solve_state(problem, u_one, 400.0, STANDARD)
        op = transition_matrix(problem, traj, u_one, settings=STANDARD)
        grid = dense_horizon_grid(0.0, 400.0, spacing=0.1)
        for mode in ("WOO", "OO"):
            report = check_general(problem, traj, u_one, [0.0], T_grid=grid,
                                   mode=mode, transition=op)
            assert report.verdict.status is Verdict.HOLDS, (problem.name, mode)


def test_check_general_refinement_stability(oscillator, osc_traj_400,
                                            osc_op_400, u_one):
    coarse = check_general(oscillator, osc_traj_400, u_one, [0.0],
                           T_grid=dense_horizon_grid(0.0, 400.0, spacing=0.04),
                           mode="OO", transition=osc_op_400,
                           control_resolution=9)
    fine = check_general(oscillator, osc_traj_400, u_one, [0.0],
                         T_grid=dense_horizon_grid(0.0, 400.0, spacing=0.02),
                         mode="OO", transition=osc_op_400,
                         control_resolution=9)
    for a, b in zip(coarse.statuses.ravel(), fine.statuses.ravel()):
        if a is not Verdict.INCONCLUSIVE:
            assert a is b


def test_check_jx_bounded_three_regimes(oscillator, integrator,
                                        integrator_undiscounted, u_one):
    tail = TailPolicy(t_max=250.0)
    outcomes = {}
    for problem in (oscillator, integrator, integrator_undiscounted):
        traj = solve_state(problem, u_one, 250.0, STANDARD)
        rec = accumulate_jx(problem, traj, u_one, 0.0, tail.horizon_grid(0.0),
                            STANDARD)
        verdict, m = check_jx_bounded(rec)
        outcomes[problem.name + f"_{id(problem) % 7}"] = (verdict.status, m)
    (s_osc, m_osc), (s_int, m_int), (s_und, _) = outcomes.values()
    assert s_osc is Verdict.HOLDS and m_osc == pytest.approx(2.0, abs=1e-3)
    assert s_int is Verdict.HOLDS and m_int == pytest.approx(10.0, abs=1e-3)
    assert s_und is Verdict.FAILS


def _oscillator_battery(b, t_max, settings=STANDARD):
    from horizoncheck import make_builtin_problem

    problem = make_builtin_problem("oscillator", {"b": b})
    ref = oscillator_reference(b)
    u_one = ControlSignal.constant([1.0])
    traj = solve_state(problem, u_one, t_max, settings)
    op = transition_matrix(problem, traj, u_one, settings=settings)
    return problem, ref, u_one, traj, op


def test_classical_conditions_oscillator_battery():
    t_max = 400.0
    tail = TailPolicy(t_max=t_max)
    problem, ref, u_one, traj, op = _oscillator_battery(0.5, t_max)
    table = {}
    for r, phi in [(0.0, 0.0), (0.25, 0.7), (0.5, -math.pi / 2)]:
        costate = integrate_adjoint(problem, traj, u_one,
                                    (t_max, ref.costate(r, phi, t_max)), 1.0,
                                    settings=STANDARD)
        table[(r, phi)] = check_classical(problem, traj, u_one, costate, 1.0,
                                          op, tail)
    for key, verdicts in table.items():
        assert verdicts["tcPSI"].status is Verdict.FAILS
        assert verdicts["tcXPSI"].status is Verdict.FAILS
        assert verdicts["tcKAV"].status is Verdict.FAILS
        expect_m = Verdict.HOLDS if key == (0.5, -math.pi / 2) else Verdict.FAILS
        assert verdicts["tcM"].status is expect_m, key


def test_classical_xpsi_branch_needs_b_at_least_one():
    t_max = 400.0
    tail = TailPolicy(t_max=t_max)
    problem, ref, u_one, traj, op = _oscillator_battery(1.5, t_max)
    costate = integrate_adjoint(problem, traj, u_one,
                                (t_max, ref.costate(1.0, 0.0, t_max)), 1.0,
                                settings=STANDARD)
    verdicts = check_classical(problem, traj, u_one, costate, 1.0, op, tail)
    assert verdicts["tcXPSI"].status is Verdict.HOLDS
    assert verdicts["tcPSI"].status is Verdict.FAILS
    assert verdicts["tcKAV"].status is Verdict.FAILS
    # inadmissible for b = 0.5: |r| = 1 > b
    with pytest.raises(ValueError):
        oscillator_reference(0.5).costate(1.0, 0.0, 0.0)


def test_classical_conditions_integrator(integrator, int_traj_400, int_op_400,
                                         integrator_undiscounted, u_one):
    t_max = 400.0
    tail = TailPolicy(t_max=t_max)
    ref = integrator_reference(0.1, 0.0, 1.0)
    costate = integrate_adjoint(integrator, int_traj_400, u_one,
                                (t_max, [float(ref.psi(t_max))]), 1.0,
                                settings=STANDARD)
    verdicts = check_classical(integrator, int_traj_400, u_one, costate, 1.0,
                               int_op_400, tail)
    assert all(v.status is Verdict.HOLDS for v in verdicts.values())

    traj0 = solve_state(integrator_undiscounted, u_one, t_max, STANDARD)
    op0 = transition_matrix(integrator_undiscounted, traj0, u_one,
                            settings=STANDARD)
    abnormal = integrate_adjoint(integrator_undiscounted, traj0, u_one,
                                 (t_max, [1.0]), 0.0, settings=STANDARD)
    verdicts0 = check_classical(integrator_undiscounted, traj0, u_one, abnormal,
                                0.0, op0, tail)
    assert all(v.status is Verdict.FAILS for v in verdicts0.values())


def test_max_principle_cases(integrator, int_traj_400, integrator_undiscounted,
                             oscillator, osc_traj_400, u_one):
    grid = np.linspace(0.0, 400.0, 201)
    ref = integrator_reference(0.1, 0.0, 1.0)
    cp = integrate_adjoint(integrator, int_traj_400, u_one,
                           (400.0, [float(ref.psi(400.0))]), 1.0, settings=STANDARD)
    assert check_max_principle(integrator, int_traj_400, u_one, cp, 1.0,
                               time_grid=grid).status is Verdict.HOLDS

    traj0 = solve_state(integrator_undiscounted, u_one, 400.0, STANDARD)
    doomed = integrate_adjoint(integrator_undiscounted, traj0, u_one,
                               (400.0, [0.5 - 400.0]), 1.0, settings=STANDARD)
    assert check_max_principle(integrator_undiscounted, traj0, u_one, doomed,
                               1.0, time_grid=grid).status is Verdict.FAILS

    osc_ref = oscillator_reference(0.5)
    cp_osc = integrate_adjoint(oscillator, osc_traj_400, u_one,
                               (400.0, osc_ref.costate(0.5, 1.1, 400.0)), 1.0,
                               settings=STANDARD)
    assert check_max_principle(oscillator, osc_traj_400, u_one, cp_osc, 1.0,
                               time_grid=grid).status is Verdict.HOLDS


def test_decompose_costate_integrator(integrator, int_traj_400, int_op_400, u_one):
    tail = TailPolicy(t_max=400.0)
    records = jx_scan(int_op_400, [0.0, 5.0], tail.horizon_grid(0.0)[1:])
    ref = integrator_reference(0.1, 0.7, 1.0)
    cp = integrate_adjoint(integrator, int_traj_400, u_one,
                           (400.0, [float(ref.psi(400.0))]), 1.0, settings=STANDARD)
    a0, residual, verdict = decompose_costate(cp, int_op_400, records, 1.0, tail)
    assert verdict.status is Verdict.HOLDS
    assert a0[0] == pytest.approx(0.7, abs=1e-6)
    assert residual <= 1e-4

    homon = integrate_adjoint(integrator, int_traj_400, u_one, (400.0, [0.7]),
                              0.0, settings=STANDARD)
    a0h, resh, verdicth = decompose_costate(homon, int_op_400, records, 0.0, tail)
    assert verdicth.status is Verdict.HOLDS
    assert a0h[0] == pytest.approx(0.7, abs=1e-9)
    assert resh <= 1e-6


def test_decompose_costate_oscillator_never_settles(oscillator, osc_traj_400,
                                                    osc_op_400, u_one):
    tail = TailPolicy(t_max=400.0)
    ref = oscillator_reference(0.5)
    records = jx_scan(osc_op_400, [0.0], tail.horizon_grid(0.0)[1:])
    for r in (0.0, 0.3):
        cp = integrate_adjoint(oscillator, osc_traj_400, u_one,
                               (400.0, ref.costate(r, 0.0, 400.0)), 1.0,
                               settings=STANDARD)
        a0, residual, verdict = decompose_costate(cp, osc_op_400, records, 1.0, tail)
        assert a0 is None
        assert verdict.status is Verdict.FAILS


def test_corollary_equivalence_limit_vs_kav(integrator, integrator_undiscounted,
                                            oscillator, u_one):
    # the limit costate exists iff the homogeneous-part condition holds for
    # the zero-terminal adjoint surrogate, across all scenarios
    tail = TailPolicy(t_max=250.0)
    for problem in (integrator, integrator_undiscounted, oscillator):
        traj = solve_state(problem, u_one, 250.0, STANDARD)
        op = transition_matrix(problem, traj, u_one, settings=STANDARD)
        rec = accumulate_jx(problem, traj, u_one, 0.0, tail.horizon_grid(0.0),
                            STANDARD)
        _, lc = limit_costate(rec, tail)
        surrogate = integrate_adjoint(problem, traj, u_one, (250.0, np.zeros(problem.state_dim)),
                                      1.0, settings=STANDARD)
        kav = check_classical(problem, traj, u_one, surrogate, 1.0, op, tail)["tcKAV"]
        assert (lc.status is Verdict.HOLDS) == (kav.status is Verdict.HOLDS), problem.name


def test_gmax_selects_saddle(ramsey_params, ramsey_family):
    _, family = ramsey_family
    problem = ramsey_params.problem()
    verdicts = check_gmax(problem, family, [1.0, 2.0, 4.0, 6.0, 9.0])
    assert verdicts[0].status is Verdict.HOLDS
    for v in verdicts[1:]:
        assert v.status is Verdict.FAILS


def test_gmax_single_candidate_vacuous(ramsey_params, ramsey_family):
    _, family = ramsey_family
    verdicts = check_gmax(ramsey_params.problem(), family[:1], [1.0, 5.0])
    assert verdicts[0].status is Verdict.HOLDS


def test_gmax_rejects_state_dependent_payoff(oscillator, osc_traj_30, u_one):
    with pytest.raises(ValueError):
        check_gmax(oscillator, [(osc_traj_30, u_one)], [1.0])
