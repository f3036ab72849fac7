import numpy as np
import pytest

from horizoncheck import (
    ControlSignal,
    IntegratorSettings,
    RamseyParams,
    make_builtin_problem,
    solve_state,
    transition_matrix,
)
from horizoncheck.reference_examples import (
    ramsey_feasible_candidate,
    ramsey_saddle_candidate,
)

# tight enough for the 1e-6 oracle comparisons, still fast on the built-ins
TIGHT = IntegratorSettings(rel_tol=1e-11, abs_tol=1e-13)
STANDARD = IntegratorSettings(rel_tol=1e-10, abs_tol=1e-12)

FIG1 = dict(alpha=0.4, delta=0.05, theta=0.5, k0=10.0)


@pytest.fixture(scope="session")
def u_one():
    return ControlSignal.constant([1.0])


@pytest.fixture(scope="session")
def oscillator():
    return make_builtin_problem("oscillator", {"b": 0.5})


@pytest.fixture(scope="session")
def integrator():
    return make_builtin_problem("integrator", {"rho": 0.1})


@pytest.fixture(scope="session")
def integrator_undiscounted():
    return make_builtin_problem("integrator", {"rho": 0.0})


@pytest.fixture(scope="session")
def osc_traj_30(oscillator, u_one):
    return solve_state(oscillator, u_one, 30.0, TIGHT)


@pytest.fixture(scope="session")
def osc_op_30(oscillator, osc_traj_30, u_one):
    return transition_matrix(oscillator, osc_traj_30, u_one, settings=TIGHT)


@pytest.fixture(scope="session")
def osc_traj_400(oscillator, u_one):
    return solve_state(oscillator, u_one, 400.0, STANDARD)


@pytest.fixture(scope="session")
def osc_op_400(oscillator, osc_traj_400, u_one):
    return transition_matrix(oscillator, osc_traj_400, u_one, settings=STANDARD)


@pytest.fixture(scope="session")
def int_traj_400(integrator, u_one):
    return solve_state(integrator, u_one, 400.0, STANDARD)


@pytest.fixture(scope="session")
def int_op_400(integrator, int_traj_400, u_one):
    return transition_matrix(integrator, int_traj_400, u_one, settings=STANDARD)


@pytest.fixture(scope="session")
def ramsey_params():
    return RamseyParams(**FIG1)


@pytest.fixture(scope="session")
def ramsey_saddle(ramsey_params):
    """(c0_saddle, k trajectory to t=150, consumption signal)."""
    return ramsey_saddle_candidate(ramsey_params, 150.0)


@pytest.fixture(scope="session")
def ramsey_family(ramsey_params, ramsey_saddle):
    """Saddle plus four feasible sub-saddle candidates on [0, 150]."""
    c0_saddle, k_traj, control = ramsey_saddle
    family = [(k_traj, control)]
    for frac in (0.9, 0.75, 0.55, 0.35):
        family.append(ramsey_feasible_candidate(ramsey_params, frac * c0_saddle, 150.0))
    return c0_saddle, family
