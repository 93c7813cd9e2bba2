"""Parallel-in-time integration of quasilinear index-2 DAEs."""

from .dae_core import (
    DaeModel,
    ProjectorChain,
    classify_index,
    default_samples,
    differential_projector,
    eval_residual,
    kernel_projector,
    projector_chain,
)
from .errors import (
    ContractViolation,
    DaeError,
    EvaluationError,
    IndexMismatchError,
    LinearSolveError,
    NetlistError,
    NewtonError,
    NonUniformIndexError,
    PararealError,
    StepError,
    StructuralError,
    UnsupportedStructureError,
)
from .init import project_consistentialize, warmup_consistentialize
from .integrator import NewtonConfig, Trajectory, euler_step, integrate, newton_solve
from .parareal import (
    PararealConfig,
    PararealResult,
    WindowGrid,
    finalize_trajectory,
    jump_norm,
    make_grid,
    run,
    sequential_fine,
)

__version__ = "0.1.0"
