"""Tubal tensor algebra with a regularized total least squares solver and
an image/video deblurring pipeline built on it."""

from .algebra import (
    SpectralTensor3,
    TSvdFactors,
    from_spectral,
    identity_tensor,
    spectral_conds,
    to_spectral,
    tinv,
    tpinv,
    tprod,
    truncate_tsvd,
    tsvd,
    tsvd_reconstruct,
    ttranspose,
    tube_inv,
    tube_kron_identity,
)
from .baseline import TruncationSpec, ttsvd_solve, ttsvd_sweep
from .errors import (
    BoundsError,
    CapacityError,
    ConvergenceError,
    DegenerateIterateError,
    DivergenceError,
    FormatError,
    NumericalConsistencyError,
    ShapeError,
    SingularSliceError,
    SingularTubeError,
    TrtlsError,
)
from .imgio import load_tensor, read_image, save_tensor, write_image
from .pipeline import (
    ExperimentConfig,
    ExperimentResult,
    add_noise,
    gaussian_blur_tensor,
    reg_operator,
    run_experiment,
    run_experiment_full,
)
from .solver import (
    RtlsState,
    SolveReport,
    SolverConfig,
    build_gamma_lambda,
    build_psi,
    derive_state,
    equation_residual,
    iterate_matrix,
    iterate_tensor,
    residual_slice,
    solve,
    solve_multi,
    update_lambdas,
    update_multiplier,
)
from .tensor import (
    DenseTensor3,
    bcirc,
    fnorm,
    fold,
    mse,
    squeeze,
    tensor,
    twist,
    unfold,
    vec,
    zeros,
)

__version__ = "0.1.0"
