"""Numerical toolkit for gluing manifolds with corners along isometric faces.

Rotationally symmetric block metrics ``u^2 dt^2 + h_t`` are deformed near a
face, bridged across it and conformally corrected so that scalar curvature
stays positive and the cylindrical boundary stays mean-convex or minimal.
Every step reports machine-checkable verdicts.
"""

from .deform import (
    CNORMAL,
    PRESCRIBE,
    DeformParams,
    TaylorData,
    c_normal_deform,
    calibrate_constants,
    prescribe_II,
    taylor_split,
)
from .errors import (
    ConvergenceError,
    CornerGlueError,
    DegenerateFoliationError,
    FlowExitError,
    FormatError,
    ParameterError,
    PreconditionError,
    SmallnessError,
    VerificationError,
)
from .geometry import (
    ANNULUS,
    INTERVAL,
    CrossSectionMetric,
    CylGrid,
    RadialSymTensor,
    WarpedMetric,
    ambient_scalar_curvature,
    boundary_mean_curvature,
    build_grid,
    c_of_n,
    conformal_metric,
    slice_boundary_curvature,
)
from .glue import (
    MEANCONVEX,
    MINIMAL,
    EigenResult,
    GlueConfig,
    PreparedSide,
    bridge_step1,
    conformal_step2,
    glue_pipeline,
    prepare_side,
    robin_eigensolve,
)
from .normalform import CollarMetric, block_normal_form
from .profiles import (
    PropertyCertificate,
    build_bump,
    build_chi,
    build_lambda,
    build_phi,
    build_profile,
    build_tau,
    certify_profile,
)
from .report import Report, Verdict

__version__ = "0.1.0"

__all__ = sorted(n for n, v in dict(globals()).items() if not n.startswith("_") and not hasattr(v, "__path__") and type(v).__name__ != "module")
