"""Numerical verification of necessary optimality conditions for
infinite-horizon optimal control problems.

The library checks candidate optimal controls against classical limit
(transversality) conditions, tail conditions on the Hamiltonian difference
built from finite-horizon payoff gradients, and empirical overtaking
comparisons, validated on three built-in problems with closed-form solutions.
"""

from .ode_engine import (
    Box,
    ControlSignal,
    ExitEvent,
    IntegrationError,
    IntegratorSettings,
    NonExtendibleError,
    Trajectory,
    integrate,
    integrate_controlled,
    solve_state,
)
from .problem_model import (
    ControlProblem,
    ControlSet,
    MultiplierPair,
    hamiltonian,
    jacobians,
    make_builtin_problem,
)
from .variational import (
    CostatePath,
    JxRecord,
    TailPolicy,
    TransitionOperator,
    accumulate_jx,
    check_assumption_uniform,
    fd_gradient,
    integrate_adjoint,
    jx_scan,
    lemma1_residual,
    limit_costate,
    payoff_value,
    transition_matrix,
)
from .conditions import (
    ConditionVerdict,
    GeneralConditionReport,
    Verdict,
    check_classical,
    check_general,
    check_gmax,
    check_jx_bounded,
    check_max_principle,
    decompose_costate,
    delta_hamiltonian,
    dense_horizon_grid,
)
from .overtaking import (
    NeedleCheckReport,
    NeedleSpec,
    OvertakingReport,
    appendix_identity_residual,
    empirical_overtaking_test,
    finite_horizon_value,
    needle_gap,
    needle_limit_check,
    oscillator_delta_x1,
)
from .reference_examples import (
    IntegratorReference,
    OscillatorReference,
    RamseyParams,
    SteadyState,
    integrator_reference,
    oscillator_reference,
    ramsey_classify,
    ramsey_field,
    ramsey_shoot,
    ramsey_steady_state,
)

__version__ = "0.1.0"
