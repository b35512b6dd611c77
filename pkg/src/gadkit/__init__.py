"""gadkit: saddle-point searches for non-gradient dynamical systems.

The simplified gentlest ascent dynamics couples a position to a single
direction variable so that its stable fixed points are the index-1
saddles of the underlying flow; this package provides that dynamics (in
forward- and adjoint-direction forms), the original two-direction
variant, the momentum-normalized Hamilton flow it mirrors, a multiscale
version for slow-fast stochastic systems, and an Allen-Cahn-under-shear
application on a periodic grid.
"""

from ._backend import BACKEND
from .acshear import (
    Field2D,
    PdeSaddleResult,
    ShearConfig,
    ac_jvp,
    ac_rhs,
    ac_vjp,
    continuation_in_gamma,
    default_pde_options,
    droplet_seed,
    energy,
    l2_inner,
    l2_norm,
    laplacian_periodic,
    pde_find_saddle,
    stripe_seed,
    symmetry_residual,
    x_variation,
)
from .dynamics import (
    DYNAMICS,
    GadOptions,
    GadState,
    SaddleResult,
    find_saddle,
    reconstruct_hamiltonian,
    rhs_hamilton_normalized,
    rhs_original,
    rhs_simplified_v,
    rhs_simplified_w,
    step_rk4,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateProjectorError,
    GadkitError,
    NotAFixedPointError,
    NumericalBlowupError,
    SingularJacobianError,
    SpectrumHypothesisError,
    UnsupportedOperationError,
)
from .multiscale import (
    DriftEstimate,
    HmmParams,
    SlowFastModel,
    default_msgad_options,
    get_slowfast_model,
    hmm_estimate_F,
    hmm_estimate_effjac_action,
    micro_step_em,
    model_example2_slowfast,
    msgad_find_saddle,
)
from .stability import (
    FixedPointReport,
    SpectrumVerification,
    classify_fixed_point,
    gad_extended_jacobian,
    predicted_extended_spectrum,
    refine_fixed_point,
    verify_predicted_spectrum,
)
from .vectorfield import (
    Direction,
    VectorFieldModel,
    dense_jacobian,
    eval_b,
    get_model,
    jvp,
    linear_model,
    model_example1,
    model_example2_effective,
    model_from_gradient,
    vjp,
)

__version__ = "0.1.0"
