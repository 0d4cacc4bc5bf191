"""2D sparse parallelism simulator: embedding-table sharding topology,
collective traffic accounting and the moment-scaled row-wise AdaGrad
optimizer, backed by the C++ core."""

import os
import sys

_ext_dir = os.environ.get("SPARSE2D_EXT_DIR")
if _ext_dir and _ext_dir not in sys.path:
    sys.path.insert(0, _ext_dir)

try:
    from ._core import (  # noqa: F401  (installed wheel layout)
        Topology,
        adagrad_row_step,
        closed_form_ratio,
        effective_lr,
        estimate_increment_ratio,
        evaluate_ne,
        imbalance_ratio,
        memory_overhead,
        plan_greedy,
        qps_scaling_factor,
        recommend_c,
        sync_latency,
        train_toy,
    )
except ImportError:
    from _core import (  # noqa: F401  (build-tree layout, SPARSE2D_EXT_DIR)
        Topology,
        adagrad_row_step,
        closed_form_ratio,
        effective_lr,
        estimate_increment_ratio,
        evaluate_ne,
        imbalance_ratio,
        memory_overhead,
        plan_greedy,
        qps_scaling_factor,
        recommend_c,
        sync_latency,
        train_toy,
    )

__all__ = [
    "Topology",
    "adagrad_row_step",
    "closed_form_ratio",
    "effective_lr",
    "estimate_increment_ratio",
    "evaluate_ne",
    "imbalance_ratio",
    "memory_overhead",
    "plan_greedy",
    "qps_scaling_factor",
    "recommend_c",
    "sync_latency",
    "train_toy",
]

__version__ = "0.1.0"
