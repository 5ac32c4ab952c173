"""Static report for a finished run directory.

A run directory holds ``manifest.json``, ``report.json``, ``train_log.csv``
and ``panels.npz``. :func:`write_report` renders loss curves, one heatmap
panel per stored sample and a markdown summary next to them.
"""
from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from affordmap.basic import ValidationError  # noqa: E402
from affordmap.metrics import MetricReport, format_comparison_table  # noqa: E402


__all__ = [
    "RUN_ARTIFACTS", "check_run_dir", "load_run_report", "run_label",
    "plot_losses", "plot_panels", "write_report", "save_panels",
]


logger = logging.getLogger("affordmap.report")

PathLike = Union[str, "os.PathLike[str]"]

RUN_ARTIFACTS = ("manifest.json", "report.json", "train_log.csv", "panels.npz")


def check_run_dir(run_dir: PathLike, required: Sequence[str] = RUN_ARTIFACTS) -> None:
    run_dir = os.fspath(run_dir)
    if not os.path.isdir(run_dir):
        raise ValidationError(f"Run directory {run_dir} does not exist.")
    missing = [name for name in required if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        raise ValidationError(f"Run directory {run_dir} is incomplete; missing: {', '.join(missing)}.")


def _read_json(path: str) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def load_run_report(run_dir: PathLike) -> MetricReport:
    check_run_dir(run_dir, ("report.json",))
    return MetricReport.from_dict(_read_json(os.path.join(os.fspath(run_dir), "report.json")))


def run_label(run_dir: PathLike) -> str:
    """``with depth`` / ``w/o depth`` when the manifest says, else the directory name."""
    path = os.path.join(os.fspath(run_dir), "manifest.json")
    if os.path.exists(path):
        use_depth = _read_json(path).get("config", {}).get("model", {}).get("use_depth")
        if use_depth is not None:
            return "with depth" if use_depth else "w/o depth"
    return os.path.basename(os.path.normpath(os.fspath(run_dir)))


def save_panels(
    path: PathLike, ids: Sequence[str], images: np.ndarray, gts: np.ndarray, preds: np.ndarray
) -> None:
    if not (len(ids) == len(images) == len(gts) == len(preds)):
        raise ValidationError("Panel arrays disagree in length.")
    np.savez_compressed(
        os.fspath(path), ids=np.array(list(ids)), images=images, gts=gts, preds=preds,
    )


def plot_losses(log: pd.DataFrame, path: PathLike) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    for ax, column in zip(axes, ["l_aff", "l_text", "total"]):
        ax.plot(log["step"], log[column], lw=1)
        ax.set_title(column)
        ax.set_xlabel("step")
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(os.fspath(path), dpi=100)
    plt.close(fig)


def plot_panels(panels: Mapping[str, np.ndarray], out_dir: PathLike) -> List[str]:
    """One image / ground truth / prediction figure per stored sample."""
    paths = []
    for i, sample_id in enumerate(panels["ids"]):
        fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
        axes[0].imshow(panels["images"][i])
        axes[0].set_title("image")
        axes[1].imshow(panels["gts"][i], cmap="jet", vmin=0)
        axes[1].set_title("ground truth")
        axes[2].imshow(panels["preds"][i], cmap="jet", vmin=0)
        axes[2].set_title("prediction")
        for ax in axes:
            ax.axis("off")
        fig.suptitle(str(sample_id))
        fig.tight_layout()
        path = os.path.join(os.fspath(out_dir), f"panel_{i:02d}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def write_report(
    run_dir: PathLike, out_dir: Optional[PathLike] = None, compare: Sequence[PathLike] = ()
) -> Dict[str, Any]:
    """Render the report; returns the paths written."""
    run_dir = os.fspath(run_dir)
    check_run_dir(run_dir)
    for other in compare:
        check_run_dir(other, ("report.json",))
    out_dir = os.fspath(out_dir) if out_dir is not None else run_dir
    os.makedirs(out_dir, exist_ok=True)

    manifest = _read_json(os.path.join(run_dir, "manifest.json"))
    report = load_run_report(run_dir)
    log = pd.read_csv(os.path.join(run_dir, "train_log.csv"))
    with np.load(os.path.join(run_dir, "panels.npz")) as data:
        panels = {key: data[key] for key in data.files}

    curves = os.path.join(out_dir, "loss_curves.png")
    plot_losses(log, curves)
    panel_paths = plot_panels(panels, out_dir)

    table = report.format_table(run_label(run_dir))
    comparison = None
    if compare:
        rows = {run_label(run_dir): report}
        for other in compare:
            label = run_label(other)
            if label in rows:
                label = f"{label} ({os.path.basename(os.path.normpath(os.fspath(other)))})"
            rows[label] = load_run_report(other)
        comparison = format_comparison_table(rows)

    lines = [
        "# Run report",
        "",
        f"- config hash: `{manifest.get('config_hash')}`",
        f"- seed: {manifest.get('seed')}",
        f"- split: {manifest.get('split', {}).get('name')} (`{manifest.get('split', {}).get('hash')}`)",
        f"- samples scored: {report.num_samples} ({report.num_degenerate} degenerate)",
    ]
    for name, stats in sorted(manifest.get("generation", {}).items()):
        lines.append(f"- forced <mask_token> ({name}): {stats['forced']}/{stats['calls']}")
    for item in manifest.get("deviations", []):
        lines.append(f"- {item['field']} = {item['value']} (reference {item['reference']})")
    lines += ["", "## Metrics", "", "```", table, "```"]
    if comparison is not None:
        lines += ["", "## Comparison", "", "```", comparison, "```"]
    lines += ["", "## Losses", "", "![loss curves](loss_curves.png)", "", "## Samples", ""]
    lines += [f"![{os.path.basename(p)}]({os.path.basename(p)})" for p in panel_paths]

    markdown = os.path.join(out_dir, "report.md")
    with open(markdown, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    if comparison is not None:
        with open(os.path.join(out_dir, "comparison.txt"), "w", encoding="utf-8") as f:
            f.write(comparison + "\n")
    logger.info("Wrote report with %s panels to %s", len(panel_paths), markdown)
    return {"markdown": markdown, "curves": curves, "panels": panel_paths, "comparison": comparison}
