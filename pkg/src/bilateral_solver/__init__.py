"""Fast edge-aware smoothing and optimization in a simplified bilateral grid."""

from .backprop import GradientBundle, solve_backward
from .domain_transform import DTParams, dt_filter, dt_variance
from .errors import (AssemblyError, BilateralSolverError, InternalError, NumericalError,
                     ParameterError, ShapeError)
from .grid import (BilateralGrid, Bistochastization, GridParams, ReferenceImage, bistochastize,
                   build_grid)
from .imaging import (DepthInterval, SuperresParams, bicubic_resize, interval_to_target_confidence,
                      rgb_to_yuv, superres_confidence, superres_lambda, yuv_to_rgb)
from .multichannel import ReducedRHS, reduce_rhs, solve_multi
from .problem import Problem
from .pyramid import GridPyramid, build_pyramid, hier_init, hier_precond, lift, project, push_pull
from .robust import (ConfidenceInitParams, RobustParams, RobustResult, gm_rho, gm_weight,
                     robust_solve, variance_confidence)
from .solver import (BilateralSolver, BilateralSystem, SolveResult, SolverConfig, apply_A, assemble,
                     flat_init, jacobi_precond, pcg, quadratic_loss, solve)

__all__ = [name for name in dir() if not name.startswith("_")]
