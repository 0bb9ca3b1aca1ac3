"""Landweber and iteratively regularized Landweber reconstruction with a learned damping operator."""
from .core import (
    DimensionError,
    DivergenceError,
    IdentityOperator,
    LinearOperator,
    MatrixOperator,
    ParameterError,
    check_adjoint,
    estimate_operator_norm,
    frobenius_norm,
    inner,
    spectral_norm,
    unvec,
    vec,
)
from .learned import (
    LearnedOperator,
    TrainingSet,
    assemble_training_matrices,
    load_operator,
    save_operator,
    train_pseudoinverse,
)
from .radon import BACKEND, RadonGeometry, RadonTransform, desk_geometry, paper_geometry, radon_adjoint, radon_forward
from .schlieren import SchlierenOperator, schlieren_forward, schlieren_inf_norm
from .solver import (
    ConfigError,
    IterationTrace,
    LambdaSchedule,
    SolverConfig,
    StoppingRule,
    run,
    run_irl,
    run_landweber,
    run_perturbed,
    theory_constants,
    verify_monotonicity,
)

__version__ = "0.1.0"
