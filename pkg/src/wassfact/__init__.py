"""Non-negative matrix/tensor factorisation under a smoothed Wasserstein loss."""

from wassfact.entropy import Constraint, entropy_conjugate, primal_recover
from wassfact.kernels import HAVE_COMPILED_KERNEL, logmatmulexp
from wassfact.ot import (
    DomainViolation,
    GibbsKernel,
    LossSpec,
    build_grid_cost,
    gibbs_kernel,
    kernel_apply_log,
    loss_conjugate,
    ot_conjugate_balanced,
    ot_conjugate_semiunbalanced,
    sinkhorn_balanced,
    sinkhorn_semiunbalanced,
)
from wassfact.solver import (
    InnerConfig,
    SolverConfig,
    TuckerModel,
    block_coordinate_descent,
    nnsvd_init,
    project_onto_basis,
)
from wassfact.tensor import (
    cp_reconstruct,
    inner_product,
    matricize,
    mode_product,
    multi_mode_product,
    tensorize,
    tucker_reconstruct,
)

__version__ = "0.1.0"
