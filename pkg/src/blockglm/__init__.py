"""Distributed block coordinate descent for elastic-net regularized GLMs.

Features are partitioned across M workers; each worker runs cyclic coordinate
descent on its block of a block-diagonal quadratic model, blocks are merged by
an allreduce and a shared line search, and a trust-region multiplier adapts to
keep full steps (and therefore exact zeros) frequent. An asynchronous load
balancing mode cuts block passes short once most workers finish a cycle.
"""

from .blocksolver import block_quadratic_form, coordinate_delta, soft_threshold, solve_block
from .driver import (
    IterationStats,
    ModelState,
    SolverConfig,
    adapt_mu,
    directional_D,
    fit,
    gather_dense_weights,
    line_search,
    outer_step,
    write_history_csv,
)
from .kernels import HAVE_EXTENSION, KERNEL_BACKEND
from .losses import (
    ElasticNetPenalty,
    LOGISTIC,
    LossFunction,
    PROBIT,
    SQUARED,
    WorkingSet,
    compute_working_set,
    get_loss,
    loss_eval,
    penalty_value,
    total_loss,
)
from .metrics import auprc, relative_suboptimality
from .reference import ReferenceSolution, reference_fit
from .runtime import (
    InProcessTransport,
    ProgressMonitor,
    StopSignal,
    alb_report_complete,
    alb_should_stop,
    make_inprocess_world,
    spawn_spmd,
)
from .shards import BlockCursor, BlockDelta, FeatureShard, shard_from_columns
from .wire import TcpTransport

__version__ = "0.1.0"
