"""Bures-Wasserstein geometry of SPD matrices with Riemannian batch normalization.

The package is organized as:

* :mod:`spdbw.linalg` -- matrix types, eigendecompositions, matrix functions,
  Lyapunov solvers, conditioning utilities;
* :mod:`spdbw.metrics` -- the BW operator set, affine-invariant and
  generalized BW metrics, power deformation;
* :mod:`spdbw.frechet` -- weighted Frechet means and variance;
* :mod:`spdbw.batchnorm` -- the BWBN and GBWBN normalization layers;
* :mod:`spdbw.autodiff` -- reverse-mode differentiation over the structured
  op set, plus manifold optimizer steps;
* :mod:`spdbw.network` -- a minimal SPD network (BiMap/ReEig/LogEig) hosting
  the normalization layer;
* :mod:`spdbw.synthetic`, :mod:`spdbw.matrix_io`, :mod:`spdbw.verification`,
  :mod:`spdbw.cli` -- data generation, file formats, check suites, and the
  command-line front end.
"""

from .errors import (
    CommutationError,
    DimensionMismatchError,
    DomainError,
    NumericalError,
    OptimizerError,
    PositivityError,
    TrainingDivergenceError,
)
from .linalg import (
    EXP,
    EigDecomposition,
    INV_SQRT,
    LOG,
    SQRT,
    ScalarFunction,
    SpdMatrix,
    SymmetricMatrix,
    condition_number,
    eigh_arrays,
    function_differential,
    generalized_lyapunov_solve,
    lyapunov_solve,
    matrix_function,
    matrix_function_spd,
    power,
    product_sqrt,
    regularize,
    relu_floor,
)
from .metrics import (
    MetricTag,
    ai_inner,
    bw_distance,
    bw_exp,
    bw_geodesic,
    bw_inner,
    bw_log,
    bw_manifold_transport,
    bw_norm,
    bw_parallel_transport,
    gbw_inner,
    power_ai_inner,
    power_differential,
    power_gbw_inner,
    transport_from_identity,
    transport_to_identity,
)
from .frechet import (
    WeightVector,
    fixed_point_step,
    frechet_mean,
    frechet_variance,
    two_point_mean,
    update_running_stats,
)
from .batchnorm import (
    GbwbnState,
    bwbn_forward,
    gbwbn_forward,
    scale_from_identity,
    set_mode,
)
from .autodiff import (
    Gradient,
    Tape,
    backward_eigen_function,
    backward_lyapunov,
    grad,
    rsgd_step,
    stiefel_step,
)
from .network import (
    BiMapSpec,
    ClassifierSpec,
    GbwbnSpec,
    LogEigSpec,
    ReEigSpec,
    SpdNetwork,
    TrainConfig,
    bimap_forward,
    logeig_vectorize,
    make_classification_model,
    reeig_forward,
    train,
)
from .synthetic import SyntheticSpec, make_dataset, random_spd, random_symmetric

__version__ = "0.1.0"
