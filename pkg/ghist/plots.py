"""
SVG views of results: stacked histogram, ECDF polyline, per-bin DESS bars and
the treatment heatmap with its tree. Plots carry no data beyond results.json.
"""
import os
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.cluster.hierarchy import dendrogram  # noqa: E402

from .builder import ecdf_polyline  # noqa: E402
from .core import GappedHistogram, SortedSample, TreatmentMatrix  # noqa: E402

PathLike = Union[str, os.PathLike]

# Reproducible SVG output: fixed element ids, no timestamp.
matplotlib.rcParams["svg.hashsalt"] = "ghist"
SVG_METADATA = {"Date": None}


def _save(fig, path: PathLike) -> None:
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def plot_histogram(histogram: GappedHistogram, path: PathLike, T: Optional[TreatmentMatrix] = None,
                   title: str = "") -> None:
    """Bars of density count/(n*width); stacked by treatment when T is given."""
    fig, ax = plt.subplots(figsize=(7, 4))
    lefts = np.array([b.a for b in histogram.bins])
    widths = np.array([max(b.width, 1e-12) for b in histogram.bins])
    masses = histogram.masses
    if T is not None:
        total = T.total
        bottom = np.zeros(histogram.k)
        for j, name in enumerate(T.treatment_names):
            heights = np.asarray(T.counts[j], dtype=float) / (total * widths)
            ax.bar(lefts, heights, width=widths, bottom=bottom, align="edge", edgecolor="black",
                   linewidth=0.4, label=name)
            bottom += heights
        ax.legend(fontsize="small")
    else:
        weights = masses if masses is not None else np.array([b.count for b in histogram.bins]) / histogram.n
        ax.bar(lefts, weights / widths, width=widths, align="edge", edgecolor="black", linewidth=0.4)
    ax.set_xlabel("value")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_ecdf(sample: SortedSample, histogram: GappedHistogram, path: PathLike) -> None:
    """Empirical CDF steps, the piecewise-linear histogram CDF and bin separators."""
    fig, ax = plt.subplots(figsize=(7, 4))
    x = sample.values
    ax.step(x, np.arange(1, x.size + 1) / x.size, where="post", color="grey", linewidth=0.8, label="ECDF")
    xs, ys = ecdf_polyline(sample, histogram)
    ax.plot(xs, ys, color="tab:red", linewidth=1.2, label="histogram CDF")
    for edge in histogram.edges:
        ax.axvline(edge, color="black", linestyle=":", linewidth=0.5)
    ax.set_xlabel("value")
    ax.set_ylabel("cumulative proportion")
    ax.legend(fontsize="small")
    _save(fig, path)


def plot_dess(histogram: GappedHistogram, path: PathLike) -> None:
    """Per-bin DESS against the uniform reference (b-a)^2/3."""
    fig, ax = plt.subplots(figsize=(7, 4))
    idx = np.arange(histogram.k)
    ax.bar(idx, [b.dess for b in histogram.bins], color="tab:blue", label="DESS")
    ax.plot(idx, [b.reference_dess for b in histogram.bins], color="tab:orange", marker="o",
            linewidth=1.0, label="(b-a)^2/3")
    ax.set_xticks(idx)
    ax.set_xlabel("bin")
    ax.set_ylabel("DESS")
    ax.legend(fontsize="small")
    _save(fig, path)


def plot_heatmap(P: np.ndarray, names: Sequence[str], linkage_matrix: np.ndarray, path: PathLike,
                 indices: Optional[Sequence[float]] = None) -> None:
    """Row-normalized frequencies with the treatment tree; internal nodes labelled with their index."""
    fig, (ax_tree, ax_map) = plt.subplots(1, 2, figsize=(9, max(3, 0.5 * len(names) + 1)),
                                          gridspec_kw={"width_ratios": [1, 3]})
    tree = dendrogram(linkage_matrix, orientation="left", labels=list(names), ax=ax_tree,
                      color_threshold=0, above_threshold_color="black")
    if indices is not None:
        heights = linkage_matrix[:, 2]
        for icoord, dcoord in zip(tree["icoord"], tree["dcoord"]):
            h = dcoord[1]
            matches = np.flatnonzero(np.isclose(heights, h))
            if matches.size:
                ax_tree.text(h, (icoord[1] + icoord[2]) / 2, f"{indices[matches[0]]:.2f}",
                             fontsize="x-small", va="center", ha="right")
    order = tree["leaves"]
    image = ax_map.imshow(np.asarray(P)[order[::-1]], aspect="auto", cmap="viridis")
    ax_map.set_yticks(range(len(order)))
    ax_map.set_yticklabels([names[i] for i in order[::-1]])
    ax_map.set_xlabel("bin")
    fig.colorbar(image, ax=ax_map)
    _save(fig, path)
