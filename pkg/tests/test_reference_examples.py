import math

import numpy as np
import pytest

from horizoncheck import (
    RamseyParams,
    integrator_reference,
    oscillator_reference,
    ramsey_classify,
    ramsey_field,
    ramsey_shoot,
    ramsey_steady_state,
)
from horizoncheck.reference_examples import ramsey_euler_orbit

from conftest import FIG1


def test_steady_state_closed_form_exact():
    params = RamseyParams(**FIG1)
    interior, limit = ramsey_steady_state(params)
    assert interior.k_star == pytest.approx(32.0, rel=1e-13)
    assert interior.c_star == pytest.approx(2.4, rel=1e-13)
    assert limit.k_star == pytest.approx(0.05 ** (-5.0 / 3.0), rel=1e-13)
    assert limit.c_star == 0.0
    assert interior.k_star < limit.k_star


def test_steady_state_field_residual_random_params():
    rng = np.random.default_rng(11)
    for _ in range(50):
        params = RamseyParams(alpha=rng.uniform(0.2, 0.6),
                              delta=rng.uniform(0.02, 0.12),
                              theta=rng.uniform(0.3, 3.0) + 0.01,
                              k0=1.0)
        interior, _ = ramsey_steady_state(params)
        residual = ramsey_field(params, interior.k_star, interior.c_star)
        assert np.max(np.abs(residual)) <= 1e-12


def test_field_values():
    params = RamseyParams(**FIG1)
    assert np.allclose(ramsey_field(params, 32.0, 2.4), [0.0, 0.0], atol=1e-13)
    assert np.allclose(ramsey_field(params, 32.0, 3.0), [-0.6, 0.0], atol=1e-13)
    assert np.allclose(ramsey_field(params, 1.0, 1.0), [-0.05, 0.7], atol=1e-13)
    with pytest.raises(ValueError):
        ramsey_field(params, -1.0, 1.0)


def test_classify_examples():
    params = RamseyParams(**FIG1)
    assert ramsey_classify(params, 32.0, 2.4) == "saddle"
    assert ramsey_classify(params, 10.0, 5.0) == "hits_zero_capital"
    assert ramsey_classify(params, 10.0, 0.5) == "to_zero_consumption"


def test_shoot_from_steady_state_recovers_c_star():
    params = RamseyParams(alpha=0.4, delta=0.05, theta=0.5, k0=32.0)
    c0, orbit = ramsey_shoot(params)
    assert c0 == pytest.approx(2.4, abs=1e-6)
    assert orbit.exit_event.description == "saddle_ball"


def test_shoot_from_k0_10(ramsey_params, ramsey_saddle):
    c0, _, _ = ramsey_saddle
    history = []
    c0_again, orbit = ramsey_shoot(ramsey_params, history=history)
    assert c0_again == pytest.approx(c0, abs=1e-8)
    # enters the 1e-3 ball around (32, 2.4)
    k_T, c_T = orbit.states[-1]
    assert math.hypot(k_T - 32.0, c_T - 2.4) <= 1e-3 + 1e-9
    # saddle consumption increases with capital along the stable manifold
    assert c0 < 2.4
    # bracket invariant: lower side falls to zero consumption, upper hits k=0
    for lo, hi in history[::7]:
        assert ramsey_classify(ramsey_params, 10.0, hi * 1.000001, t_max=3000) \
            in ("hits_zero_capital",)
        assert ramsey_classify(ramsey_params, 10.0, lo * 0.999999, t_max=3000) \
            in ("to_zero_consumption",)


def test_sub_saddle_orbit_stays_feasible(ramsey_params):
    orbit = ramsey_euler_orbit(ramsey_params, 10.0, 0.5, 300.0)
    assert orbit.exit_event is None
    assert np.all(orbit.states[:, 0] > 0)


def test_oscillator_reference_values():
    ref = oscillator_reference(0.5)
    assert np.allclose(ref.transition(math.pi / 2, 0.0), [[0.0, 1.0], [-1.0, 0.0]],
                       atol=1e-15)
    assert np.allclose(ref.jx(0.0, math.pi), [-2.0, 0.0], atol=1e-15)
    assert np.allclose(ref.state(2 * math.pi), [0.0, 0.0], atol=1e-12)
    # H along the candidate is constant in t: r sin(phi) + b
    for r, phi in [(0.3, 0.9), (0.5, -math.pi / 2), (0.0, 0.0)]:
        assert ref.hamiltonian_along(r, phi) == pytest.approx(r * math.sin(phi) + 0.5)
    with pytest.raises(ValueError):
        ref.costate(0.6, 0.0, 0.0)  # |r| > b not an admissible family member
    assert ref.delta_hamiltonian(-1.0, 0.0, math.pi / 2) == pytest.approx(-3.0)


def test_oscillator_costate_solves_adjoint_identities():
    ref = oscillator_reference(1.0)
    ts = np.linspace(0, 10, 101)
    psi = ref.costate(0.7, 0.3, ts)
    dpsi1 = np.gradient(psi[:, 0], ts)[1:-1]
    dpsi2 = np.gradient(psi[:, 1], ts)[1:-1]
    # dpsi1/dt = psi2 and dpsi2/dt = -psi1 - 1 (normal case)
    assert np.max(np.abs(dpsi1 - psi[1:-1, 1])) < 5e-3
    assert np.max(np.abs(dpsi2 - (-psi[1:-1, 0] - 1.0))) < 5e-3


def test_integrator_reference():
    ref = integrator_reference(0.1, 0.0, 1.0)
    assert ref.psi_hat(0.0) == pytest.approx(10.0)
    assert ref.psi(0.0) == pytest.approx(10.0)
    assert not ref.psi_hat_diverges
    assert ref.max_principle_holds()

    abnormal = integrator_reference(0.0, 1.0, 0.0)
    assert abnormal.psi(123.0) == 1.0
    assert abnormal.psi_hat_diverges
    assert abnormal.max_principle_holds()
    with pytest.raises(ValueError):
        abnormal.psi_hat(0.0)

    doomed = integrator_reference(0.0, 5.0, 1.0)
    assert doomed.psi(7.0) == pytest.approx(-2.0)
    assert not doomed.max_principle_holds()
    with pytest.raises(ValueError):
        integrator_reference(0.0, 0.0, 0.0)
