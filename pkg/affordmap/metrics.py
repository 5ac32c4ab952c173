"""KLD, SIM and NSS between predicted and ground-truth affordance maps."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from affordmap.basic import (
    DegenerateMapError, ValidationError, check_distribution, check_positive, check_same_shape,
)
from affordmap.densemap import (
    DenseMap, minmax_normalize, normalize_to_distribution, resize_bilinear, uniform_map,
)


__all__ = [
    "kld", "sim", "nss", "evaluate_batch", "MetricReport", "SampleScore",
    "format_comparison_table", "DEFAULT_EPS", "SIGMA_FLOOR",
]


logger = logging.getLogger("affordmap.metrics")


DEFAULT_EPS = 1e-12
SIGMA_FLOOR = 1e-12


def kld(pred: DenseMap, gt: DenseMap, eps: float = DEFAULT_EPS) -> float:
    check_same_shape(pred.shape, gt.shape, "prediction and ground truth")
    check_distribution(pred.values, "prediction")
    check_distribution(gt.values, "ground truth")
    p = pred.values
    g = gt.values
    return float(np.sum(g * np.log(eps + g / (eps + p))))


def sim(pred: DenseMap, gt: DenseMap) -> float:
    check_same_shape(pred.shape, gt.shape, "prediction and ground truth")
    check_distribution(pred.values, "prediction")
    check_distribution(gt.values, "ground truth")
    return float(np.sum(np.minimum(pred.values, gt.values)))


def _nss(
    pred: DenseMap, gt: DenseMap, binarize_gt: bool, threshold: float
) -> Tuple[float, bool]:
    check_same_shape(pred.shape, gt.shape, "prediction and ground truth")
    weights = gt.values
    if binarize_gt:
        weights = (weights > threshold).astype(np.float64)
    total = weights.sum()
    if not total > 0:
        raise DegenerateMapError("NSS needs a ground truth map with positive mass.")
    p = pred.values
    sigma = p.std()
    if sigma < SIGMA_FLOOR:
        return 0.0, True
    standardized = (p - p.mean()) / sigma
    return float(np.sum(standardized * weights) / total), False


def nss(
    pred: DenseMap,
    gt: DenseMap,
    binarize_gt: bool = False,
    threshold: float = 0.0,
) -> float:
    """Normalized scanpath saliency.

    The prediction is standardized with its population standard deviation and
    the ground truth acts as continuous weights, ``sum(M_hat * gt) / sum(gt)``.
    With ``binarize_gt`` the weights become ``gt > threshold`` instead.
    Constant predictions score 0.
    """
    value, _ = _nss(pred, gt, binarize_gt, threshold)
    return value


class SampleScore(NamedTuple):
    sample_id: str
    kld: float
    sim: float
    nss: float


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


@dataclass
class MetricReport:
    per_sample: List[SampleScore]
    degenerate_ids: List[str] = field(default_factory=list)
    skipped_ids: List[str] = field(default_factory=list)
    eps: float = DEFAULT_EPS
    binarize_gt: bool = False
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if not self.per_sample:
            raise ValidationError("A MetricReport needs at least one sample.")

    @property
    def num_samples(self) -> int:
        return len(self.per_sample)

    @property
    def num_degenerate(self) -> int:
        return len(self.degenerate_ids)

    @property
    def num_skipped(self) -> int:
        return len(self.skipped_ids)

    @property
    def mean_kld(self) -> float:
        return _mean(s.kld for s in self.per_sample)

    @property
    def mean_sim(self) -> float:
        return _mean(s.sim for s in self.per_sample)

    @property
    def mean_nss(self) -> float:
        return _mean(s.nss for s in self.per_sample)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_sample": [s._asdict() for s in self.per_sample],
            "degenerate_ids": list(self.degenerate_ids),
            "mean_kld": self.mean_kld,
            "mean_sim": self.mean_sim,
            "mean_nss": self.mean_nss,
            "num_samples": self.num_samples,
            "num_degenerate": self.num_degenerate,
            "skipped_ids": list(self.skipped_ids),
            "num_skipped": self.num_skipped,
            "eps": self.eps,
            "binarize_gt": self.binarize_gt,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricReport":
        try:
            scores = [
                SampleScore(str(s["sample_id"]), float(s["kld"]), float(s["sim"]), float(s["nss"]))
                for s in data["per_sample"]
            ]
        except (KeyError, TypeError) as err:
            raise ValidationError(f"Malformed metric report: {err}") from err
        return cls(
            scores,
            degenerate_ids=list(data.get("degenerate_ids", [])),
            skipped_ids=list(data.get("skipped_ids", [])),
            eps=float(data.get("eps", DEFAULT_EPS)),
            binarize_gt=bool(data.get("binarize_gt", False)),
            threshold=float(data.get("threshold", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([s._asdict() for s in self.per_sample])
        return frame.set_index("sample_id")

    def summary(self) -> Tuple[float, float, float]:
        return (self.mean_kld, self.mean_sim, self.mean_nss)

    def format_table(self, method: str = "affordmap") -> str:
        return format_comparison_table({method: self})


def format_comparison_table(reports: Mapping[str, MetricReport]) -> str:
    """Fixed-column text table, one row per run, three decimals."""
    if not reports:
        raise ValidationError("Nothing to tabulate.")
    frame = pd.DataFrame(
        [
            {"Method": name, "KLD": r.mean_kld, "SIM": r.mean_sim, "NSS": r.mean_nss}
            for name, r in reports.items()
        ]
    )
    frame = frame.rename(columns={"KLD": "KLD (lower)", "SIM": "SIM (higher)", "NSS": "NSS (higher)"})
    return frame.to_string(index=False, float_format=lambda v: f"{v:.3f}", justify="right")


def _score_pair(
    pred: DenseMap, gt: DenseMap, sample_id: str, eps: float, binarize_gt: bool, threshold: float
) -> Tuple[SampleScore, bool]:
    gt_dist = normalize_to_distribution(gt)
    pred = resize_bilinear(pred, gt.height, gt.width)
    degenerate = False
    if pred.total > 0:
        pred_dist = normalize_to_distribution(pred)
    else:
        degenerate = True
        pred_dist = uniform_map(gt.height, gt.width)
    nss_value, flat = _nss(minmax_normalize(pred), gt, binarize_gt, threshold)
    degenerate = degenerate or flat
    score = SampleScore(
        sample_id,
        kld(pred_dist, gt_dist, eps),
        sim(pred_dist, gt_dist),
        nss_value,
    )
    return score, degenerate


def evaluate_batch(
    pairs: Sequence[Tuple[DenseMap, DenseMap, str]],
    eps: float = DEFAULT_EPS,
    workers: int = 1,
    binarize_gt: bool = False,
    threshold: float = 0.0,
) -> MetricReport:
    """Score (prediction, ground truth, sample_id) triples.

    Predictions are resized to the ground-truth resolution. Degenerate
    predictions (all zero or constant) are recorded rather than raised.
    Pairs whose ground truth carries no mass cannot be scored; they are left
    out of the means and listed in ``skipped_ids``.
    Results are ordered by sample id, so the report does not depend on
    ``workers``.
    """
    if len(pairs) == 0:
        raise ValidationError("evaluate_batch needs at least one pair.")
    check_positive(eps, "eps")
    ids = [sample_id for _, _, sample_id in pairs]
    if len(set(ids)) != len(ids):
        raise ValidationError("Duplicate sample ids in evaluation batch.")

    def run(item: Tuple[DenseMap, DenseMap, str]) -> Tuple[str, Optional[Tuple[SampleScore, bool]]]:
        pred, gt, sample_id = item
        try:
            return sample_id, _score_pair(pred, gt, sample_id, eps, binarize_gt, threshold)
        except DegenerateMapError as err:
            logger.warning("Skipping %s: %s", sample_id, err)
            return sample_id, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, pairs))
    else:
        outcomes = [run(item) for item in pairs]

    skipped_ids = sorted(sample_id for sample_id, result in outcomes if result is None)
    results = sorted(
        (result for _, result in outcomes if result is not None),
        key=lambda item: item[0].sample_id,
    )
    if not results:
        raise DegenerateMapError(
            f"None of the {len(pairs)} ground truth maps carries mass; nothing to score."
        )
    degenerate_ids = [score.sample_id for score, flag in results if flag]
    if degenerate_ids:
        logger.info("%s of %s predictions were degenerate", len(degenerate_ids), len(results))
    return MetricReport(
        [score for score, _ in results],
        degenerate_ids=degenerate_ids,
        skipped_ids=skipped_ids,
        eps=eps,
        binarize_gt=binarize_gt,
        threshold=threshold,
    )
