"""Streaming low-rank subspace tracking and imputation toolkit.

Trackers consume partially observed vectors or tensor slices one time step
at a time, maintain a low-dimensional factor model, and impute the missing
entries on the fly.  Desk-scale batch solvers and optimality certificates
provide the ground truth the online estimators are verified against, and a
lasso pipeline turns per-link imputation residuals into sparse traffic
anomaly estimates.
"""

from .data import (
    MaskedSlice,
    MaskedVector,
    SynthMatrixConfig,
    SynthTensorConfig,
    gen_matrix_stream,
    gen_tensor_stream,
)
from .exceptions import (
    ConfigError,
    NonconvergenceError,
    SingularSystemError,
    StreamFormatError,
    UnsupportedModeError,
)
from .matrix_tracker import (
    MatrixTracker,
    average_cost,
    average_cost_gradient,
    lambda_heuristic,
    project_coefficients,
    surrogate_cost,
)
from .metrics import RunningRelativeError, slice_relative_error
from .sgd_tracker import SgdTracker, grad_f, loss_f, majorizer_value, momentum_next
from .tensor_tracker import (
    TensorTracker,
    completion_dof_ok,
    finalize_C,
    gamma_solve,
    grad_A,
    grad_B,
    impute,
    tensor_loss,
)
from .batch import (
    BatchProblem,
    certify_global,
    kkt_check_p1,
    nuclear_norm,
    p1_objective,
    p2_objective,
    solve_p1,
    solve_p2,
    svd_split,
    svt,
)
from .anomaly import (
    AnomalyDetector,
    AnomalyEstimate,
    RoutingMatrix,
    detection_rates,
    internet2_like_network,
    lasso_solve,
    residual_vector,
)
from .stream_io import read_triplet_stream, write_triplet_stream

__version__ = "0.1.0"
