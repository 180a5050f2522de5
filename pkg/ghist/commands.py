"""
Command-line surface: `hist`, `anoht1`, `anoht2` and `survival`, registered on
the Flask app's command group.

Every command reads one CSV, runs the library pipeline and writes results.json
(canonical), summary.tsv and, with --svg, the matching plots into --out-dir.
Failures write error.json and exit with status 1.
"""
import csv
import functools
import io
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import click
import numpy as np
from flask import Config

from . import plots
from .anoht_local import bin_compositions, compare_bins, global_test
from .anoht_tree import authenticity, row_normalize
from .builder import L0Spec, build_histogram, hamiltonian, refine
from .config import DEFAULTS, ENV_PREFIX, RunConfig
from .core import GappedHistogram, SortedSample, TreatmentMatrix, dumps, standardize
from .errors import DomainError, GhistError
from .hc1d import cluster, tree_height
from .ingest import ingest_csv, summarize
from .survival import (
    censored_authenticity,
    censored_compositions,
    censored_histogram,
    kaplan_meier,
    nelson_aalen,
    uncensored,
)
from .uniformity import band_table

log = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "ghist-out"

# Flag name -> config key, for flags that override the config file.
FLAG_KEYS = {
    "l0_fraction": "L0_FRACTION",
    "l0_abs": "L0_ABS",
    "linkage": "LINKAGE",
    "alpha": "ALPHA",
    "band_replicates": "BAND_REPLICATES",
    "perm": "PERMUTATIONS",
    "mimics": "MIMICS",
    "seed": "SEED",
    "gap_method": "GAP_METHOD",
    "basis": "BASIS",
    "weighting": "WEIGHTING",
    "workers": "WORKERS",
}

# Independent random streams per pipeline stage.
STAGE_BINS = 1
STAGE_GLOBAL = 2
STAGE_MIMIC = 3


def _stage_seed(seed: int, stage: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(stage,))


def shared_options(fn):
    options = [
        click.argument("csv_path", type=click.Path(dir_okay=False)),
        click.option("--value-col", required=True, help="Numeric column to bin."),
        click.option("--label-col", default=None, help="Treatment label column."),
        click.option("--status-col", default=None, help="Event (1) / censored (0) column."),
        click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
                     help="JSON file with upper-case config keys."),
        click.option("--l0-fraction", type=float, default=None, help="L0 as a fraction of tree height."),
        click.option("--l0-abs", type=float, default=None, help="Absolute L0 (wins over --l0-fraction)."),
        click.option("--linkage", type=click.Choice(["complete", "average", "ward"]), default=None),
        click.option("--alpha", type=float, default=None, help="DESS band level."),
        click.option("--band-replicates", type=int, default=None),
        click.option("--perm", type=int, default=None, help="Label permutations for p-values."),
        click.option("--mimics", type=int, default=None, help="Mimicked matrices for authenticity."),
        click.option("--seed", type=int, default=None),
        click.option("--gap-method", type=click.Choice(["boundary-extension", "midpoint-dess"]), default=None),
        click.option("--basis", type=click.Choice(["km", "na"]), default=None),
        click.option("--weighting", type=click.Choice(["km", "raw"]), default=None,
                     help="Censored bin counts: Kaplan-Meier weighted or raw event counts."),
        click.option("--no-standardize", is_flag=True, default=False),
        click.option("--out-dir", default=DEFAULT_OUT_DIR, type=click.Path(file_okay=False)),
        click.option("--svg", is_flag=True, default=False, help="Also write SVG plots."),
        click.option("--workers", type=int, default=None),
        click.option("--refine", "refine_bins", is_flag=True, default=False),
        click.option("--verbose", is_flag=True, default=False),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("ghist")
    if verbose and not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(logging.INFO if verbose else logging.WARNING)


def load_run_config(root_path: str, base: Dict[str, Any], opts: Dict[str, Any]) -> RunConfig:
    """DEFAULTS < config file < explicit flags < GH_* environment."""
    cfg = Config(root_path, DEFAULTS)
    cfg.update({k: v for k, v in base.items() if k in DEFAULTS})
    if opts.get("config_path"):
        try:
            cfg.from_file(os.path.abspath(opts["config_path"]), load=json.load)
        except (OSError, ValueError) as e:
            raise DomainError(f"cannot load config file: {e}")
    for flag, key in FLAG_KEYS.items():
        if opts.get(flag) is not None:
            cfg[key] = opts[flag]
    if opts.get("l0_abs") is None and opts.get("l0_fraction") is not None:
        cfg["L0_ABS"] = None
    if opts.get("no_standardize"):
        cfg["STANDARDIZE"] = False
    if opts.get("svg"):
        cfg["SVG"] = True
    if opts.get("refine_bins"):
        cfg["REFINE"] = True
    cfg.from_prefixed_env(ENV_PREFIX)
    return RunConfig.from_mapping(cfg)


# -----------------------------
# Output helpers
# -----------------------------
def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _tsv(rows: List[List[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _bin_table(histogram: GappedHistogram) -> List[Dict[str, Any]]:
    rows = []
    for k, b in enumerate(histogram.bins):
        rows.append({
            "bin": k,
            "a": b.a,
            "b": b.b,
            "count": b.count,
            "dess": b.dess,
            "reference_dess": b.reference_dess,
            "ratio": b.dess / b.reference_dess if b.reference_dess > 0 else None,
        })
    return rows


def _summary_rows(histogram: GappedHistogram, T: Optional[TreatmentMatrix] = None,
                  pvalues: Optional[List[float]] = None) -> List[List[Any]]:
    header = ["bin", "a", "b", "count", "dess", "reference_dess", "left_gap", "right_gap"]
    if histogram.masses is not None:
        header.append("mass")
    if T is not None:
        header.extend(T.treatment_names)
    if pvalues is not None:
        header.append("p_value")
    rows = [header]
    for k, b in enumerate(histogram.bins):
        row = [k, f"{b.a:.6g}", f"{b.b:.6g}", b.count, f"{b.dess:.6g}", f"{b.reference_dess:.6g}",
               b.left_gap.value, b.right_gap.value]
        if histogram.masses is not None:
            row.append(f"{b.mass:.6g}")
        if T is not None:
            row.extend(f"{c:.6g}" for c in T.counts[:, k])
        if pvalues is not None:
            row.append(f"{pvalues[k]:.6g}")
        rows.append(row)
    return rows


def _config_record(run: RunConfig) -> Dict[str, Any]:
    record = run.to_dict()
    record.pop("workers")
    return record


# -----------------------------
# Pipeline stages
# -----------------------------
def _prepare(run: RunConfig, opts: Dict[str, Any], need_labels: bool = False,
             need_status: bool = False) -> SortedSample:
    if need_labels and not opts.get("label_col"):
        raise DomainError("this command needs --label-col")
    if need_status and not opts.get("status_col"):
        raise DomainError("this command needs --status-col")
    sample = ingest_csv(opts["csv_path"], opts["value_col"], opts.get("label_col"), opts.get("status_col"))
    if run.standardize:
        sample = standardize(sample)
    return sample


def _l0_spec(run: RunConfig) -> L0Spec:
    return L0Spec(absolute=run.l0_abs) if run.l0_abs is not None else L0Spec(fraction=run.l0_fraction)


def _histogram(run: RunConfig, sample: SortedSample):
    bands = band_table(run.alpha, run.band_replicates, run.seed)
    tree = cluster(sample, run.linkage)
    histogram = build_histogram(sample, _l0_spec(run), run.linkage, bands, run.gap_method, tree)
    if run.refine:
        histogram = refine(histogram, tree, sample, bands=bands, gap_method=run.gap_method)
    return histogram, tree


def _histogram_record(histogram: GappedHistogram, tree) -> Dict[str, Any]:
    return {
        "histogram": histogram.to_dict(),
        "dess_table": _bin_table(histogram),
        "hamiltonian": hamiltonian(histogram).to_dict(),
        "tree_height": tree_height(tree),
        "n_bins": histogram.k,
        "n_gaps": histogram.n_gaps,
    }


def _phase_one(run: RunConfig, T: TreatmentMatrix) -> Dict[str, Any]:
    comparisons = compare_bins(T, run.permutations, _stage_seed(run.seed, STAGE_BINS), run.workers)
    overall = global_test(T, run.permutations, _stage_seed(run.seed, STAGE_GLOBAL), run.workers)
    return {
        "T": T.to_dict(),
        "bins": [c.to_dict() for c in comparisons],
        "global": {"weighted_entropy": overall.weighted_entropy, "p_value": overall.p_value},
    }


def run_hist(run: RunConfig, opts: Dict[str, Any]) -> Dict[str, Any]:
    sample = _prepare(run, opts)
    histogram, tree = _histogram(run, sample)
    results = {"command": "hist", "config": _config_record(run), "input": summarize(sample)}
    results.update(_histogram_record(histogram, tree))
    T = bin_compositions(histogram, sample) if sample.labels is not None else None
    if T is not None:
        results["T"] = T.to_dict()
    out = opts["out_dir"]
    _write_text(os.path.join(out, "summary.tsv"), _tsv(_summary_rows(histogram, T)))
    if run.svg:
        plots.plot_histogram(histogram, os.path.join(out, "histogram.svg"), T)
        plots.plot_ecdf(sample, histogram, os.path.join(out, "ecdf.svg"))
        plots.plot_dess(histogram, os.path.join(out, "dess.svg"))
    return results


def run_anoht(run: RunConfig, opts: Dict[str, Any], phase_two: bool) -> Dict[str, Any]:
    sample = _prepare(run, opts, need_labels=True)
    histogram, tree = _histogram(run, sample)
    T = bin_compositions(histogram, sample)
    results = {"command": "anoht2" if phase_two else "anoht1", "config": _config_record(run),
               "input": summarize(sample)}
    results.update(_histogram_record(histogram, tree))
    results["phase1"] = _phase_one(run, T)
    pvalues = [b["p_value"] for b in results["phase1"]["bins"]]
    out = opts["out_dir"]
    report = None
    if phase_two:
        P = row_normalize(T)
        report = authenticity(T, run.mimics, _stage_seed(run.seed, STAGE_MIMIC), run.workers)
        results["phase2"] = {"P": P.tolist(), "authenticity": report.to_dict()}
    _write_text(os.path.join(out, "summary.tsv"), _tsv(_summary_rows(histogram, T, pvalues)))
    if run.svg:
        plots.plot_histogram(histogram, os.path.join(out, "histogram.svg"), T)
        plots.plot_ecdf(sample, histogram, os.path.join(out, "ecdf.svg"))
        plots.plot_dess(histogram, os.path.join(out, "dess.svg"))
        if report is not None:
            plots.plot_heatmap(row_normalize(T), T.treatment_names, report.tree.to_linkage(),
                               os.path.join(out, "heatmap.svg"), [n.index for n in report.nodes])
    return results


def run_survival(run: RunConfig, opts: Dict[str, Any]) -> Dict[str, Any]:
    sample = _prepare(run, opts, need_status=True)
    bands = band_table(run.alpha, run.band_replicates, run.seed)
    events = uncensored(sample)
    tree = cluster(events, run.linkage)
    histogram = censored_histogram(sample, _l0_spec(run), run.linkage, bands, run.gap_method, tree)
    results = {"command": "survival", "config": _config_record(run), "input": summarize(sample)}
    results.update(_histogram_record(histogram, tree))
    results["kaplan_meier"] = kaplan_meier(sample).to_dict()
    results["nelson_aalen"] = nelson_aalen(sample).to_dict()
    T = None
    report = None
    if sample.labels is not None:
        T = censored_compositions(sample, histogram, run.weighting)
        results["phase1"] = _phase_one(run, T)
        results["phase1"]["weighting"] = run.weighting
        report = censored_authenticity(sample, histogram, run.mimics, _stage_seed(run.seed, STAGE_MIMIC),
                                       run.basis, run.workers)
        results["phase2"] = {"basis": run.basis, "authenticity": report.to_dict()}
    out = opts["out_dir"]
    _write_text(os.path.join(out, "summary.tsv"), _tsv(_summary_rows(histogram, T)))
    if run.svg:
        plots.plot_histogram(histogram, os.path.join(out, "histogram.svg"), T)
        plots.plot_ecdf(events, histogram, os.path.join(out, "ecdf.svg"))
        plots.plot_dess(histogram, os.path.join(out, "dess.svg"))
        if report is not None:
            included = list(report.nodes[-1].names)
            counts = np.asarray(T.counts, dtype=float)[[T.treatment_names.index(name) for name in included]]
            plots.plot_heatmap(counts / counts.sum(axis=1)[:, None], included,
                               report.tree.to_linkage(), os.path.join(out, "heatmap.svg"),
                               [n.index for n in report.nodes])
    return results


def _fail(name: str, out: str, error: Dict[str, Any]) -> None:
    payload = dumps({"error": error, "command": name})
    try:
        _write_text(os.path.join(out, "error.json"), payload + "\n")
    except OSError as e:
        log.warning("cannot write error.json under %s: %s", out, e.strerror or e)
    click.echo(payload)
    click.get_current_context().exit(1)


def _execute(app, name: str, runner, opts: Dict[str, Any]) -> None:
    _configure_logging(opts.get("verbose", False))
    out = opts["out_dir"]
    try:
        os.makedirs(out, exist_ok=True)
        run = load_run_config(app.root_path, app.config, opts)
        results = runner(run, opts)
        _write_text(os.path.join(out, "results.json"), dumps(results) + "\n")
    except GhistError as e:
        _fail(name, out, e.to_dict())
    except (OSError, np.linalg.LinAlgError, ArithmeticError) as e:
        log.debug("%s failed", name, exc_info=True)
        message = getattr(e, "strerror", None) or str(e)
        if getattr(e, "filename", None):
            message = f"{message}: {e.filename}"
        _fail(name, out, {"type": type(e).__name__, "message": message})
    click.echo(f"[OK] {name}: {results['n_bins']} bins, {results['n_gaps']} gaps -> "
               f"{os.path.join(out, 'results.json')}")
    shaky = sum(1 for g in results["histogram"]["gaps"] if g["is_gap"] and g["low_confidence"])
    if shaky:
        click.echo(f"[WARN] {shaky} gap decision(s) rest on a single-value bin")
    if "phase1" in results:
        click.echo(f"[OK] global weighted entropy {results['phase1']['global']['weighted_entropy']:.4f}, "
                   f"p={results['phase1']['global']['p_value']:.4g}")
    if "phase2" in results:
        for node in results["phase2"]["authenticity"]["nodes"]:
            click.echo(f"[OK] branch {'+'.join(node['names'])}: authenticity {node['index']:.3f}")


def register_commands(app):
    """Register hist, anoht1, anoht2 and survival on app.cli."""

    @app.cli.command("hist")
    @shared_options
    def hist_command(**opts):
        """Possibly-gapped histogram of one numeric column."""
        _execute(app, "hist", run_hist, opts)

    @app.cli.command("anoht1")
    @shared_options
    def anoht1_command(**opts):
        """Bin compositions, entropy ratios and permutation p-values."""
        _execute(app, "anoht1", functools.partial(run_anoht, phase_two=False), opts)

    @app.cli.command("anoht2")
    @shared_options
    def anoht2_command(**opts):
        """Phase one plus the treatment tree and its authenticity indices."""
        _execute(app, "anoht2", functools.partial(run_anoht, phase_two=True), opts)

    @app.cli.command("survival")
    @shared_options
    def survival_command(**opts):
        """Censored histogram, Kaplan-Meier / Nelson-Aalen, and censored authenticity."""
        _execute(app, "survival", run_survival, opts)
