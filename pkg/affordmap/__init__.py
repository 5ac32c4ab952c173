from affordmap.densemap import DenseMap, normalize_to_distribution, minmax_normalize, resize_bilinear
from affordmap.metrics import kld, sim, nss, evaluate_batch, MetricReport
from affordmap.splits import SplitSpec, split_difficulty


__version__ = "0.1.0"

__all__ = [
    "DenseMap",
    "normalize_to_distribution",
    "minmax_normalize",
    "resize_bilinear",
    "kld",
    "sim",
    "nss",
    "evaluate_batch",
    "MetricReport",
    "SplitSpec",
    "split_difficulty",
]
