"""Experiment orchestration: the similarity battery, layer x time grids,
topographies, category splits, benchmark regression, and report export.

Every report embeds the exact configuration (seeds, alpha grid, fold count,
fit scope), so re-running from the snapshot reproduces all numbers bitwise
in serial mode.  Aggregates are always recomputable from the per-subject
values they summarize.
"""

import csv
import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_model, metrics, stats
from .data_model import CategoryLabels, Dataset, Montage
from .encoder import (
    CVConfig,
    PreprocessPlan,
    channel_window_encode,
    cv_encode,
    layer_time_grid,
    tile_windows,
)
from .errors import (
    AlignmentError,
    ConfigurationError,
    EegAlignError,
    ParameterError,
    UndefinedStatError,
)
from .metrics import compute_rdm, linear_cka, midranks, rsa_score
from .preprocess import average_repetitions, baseline_correct, window_flatten
from .rng import child_seed

logger = logging.getLogger(__name__)

METRIC_NAMES = ("pearson", "spearman", "cka", "rsa", "kendall")

_STREAM_SUBJECT_NULL = 500


@dataclass(frozen=True)
class BatteryConfig:
    """Everything run_alignment needs beyond the CV protocol itself."""

    pca_dim: int | None = 256
    pca_features: int | None = None
    n_perm: int = 200
    score_mode: str = "mean_columns"
    metric_mode: str = "pooled"           # or "per_fold"
    baseline_window: tuple | None = None  # (start_ms, end_ms) or None
    jobs: int = 1

    def __post_init__(self):
        if self.metric_mode not in ("pooled", "per_fold"):
            raise ParameterError("metric_mode must be 'pooled' or 'per_fold'")
        if self.n_perm < 0:
            raise ParameterError("n_perm must be >= 0")
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")


def _config_snapshot(cfg: CVConfig, battery: BatteryConfig, **extra) -> dict:
    doc = {
        "k_folds": cfg.k_folds,
        "alpha_grid": list(cfg.alpha_grid),
        "rng_seed": cfg.rng_seed,
        "fit_scope": cfg.fit_scope,
    }
    doc.update(dataclasses.asdict(battery))
    if doc.get("baseline_window") is not None:
        doc["baseline_window"] = list(doc["baseline_window"])
    doc.update(extra)
    return doc


def _prepared_epochs(epochs, battery: BatteryConfig):
    if battery.baseline_window is not None:
        epochs = baseline_correct(epochs, *battery.baseline_window)
    return average_repetitions(epochs)


def _table_plan(battery: BatteryConfig) -> PreprocessPlan:
    return PreprocessPlan(standardize_x=True, standardize_y=True,
                          pca_x=battery.pca_features, pca_y=battery.pca_dim)


def _column_spearman_mean(pred, true):
    """Mean per-column Spearman; zero-variance columns contribute 0."""
    rp = np.apply_along_axis(midranks, 0, pred)
    rt = np.apply_along_axis(midranks, 0, true)
    from .encoder import _column_pearson

    r, undefined = _column_pearson(rp, rt)
    return float(r.mean()), int(undefined.sum())


def _battery_metrics(pred, true, ids):
    """The five similarity values between predicted and observed responses."""
    from .encoder import _column_pearson

    out = {}
    r, undef = _column_pearson(pred, true)
    out["pearson"] = float(r.mean())
    out["spearman"], _ = _column_spearman_mean(pred, true)
    try:
        out["cka"] = linear_cka(pred, true)
    except UndefinedStatError:
        out["cka"] = None
    try:
        rdm_pred = compute_rdm(pred, ids)
        rdm_true = compute_rdm(true, ids)
        out["rsa"] = rsa_score(rdm_pred, rdm_true, rank="spearman")
        out["kendall"] = rsa_score(rdm_pred, rdm_true, rank="kendall")
    except (UndefinedStatError, ParameterError):
        out["rsa"] = None
        out["kendall"] = None
    out["undefined_columns"] = int(undef.sum())
    return out


@dataclass(frozen=True)
class SubjectAlignment:
    subject_id: str
    rho: float
    fold_scores: list
    alphas: list
    values: dict                          # metric name -> float or None
    t: float | None
    p: float | None
    empirical_p: float | None
    undefined_columns: int


@dataclass(frozen=True)
class AlignmentReport:
    model_id: str
    layer: str
    subjects: list                        # of SubjectAlignment
    aggregate: dict                       # metric -> {"mean": .., "std": ..}
    config: dict

    def to_dict(self) -> dict:
        return {
            "kind": "alignment",
            "model_id": self.model_id,
            "layer": self.layer,
            "subjects": [dataclasses.asdict(s) for s in self.subjects],
            "aggregate": self.aggregate,
            "config": self.config,
        }


def _align_one_subject(subject_id, epochs, features, layer_idx, cfg, battery):
    prepared = _prepared_epochs(epochs, battery)
    rows = features.rows_for(prepared.stimulus_ids)
    x = features.data[rows, layer_idx, :]
    y = window_flatten(prepared, prepared.t_start_ms, prepared.t_end_ms)
    plan = _table_plan(battery)
    res = cv_encode(x, y, cfg, plan=plan, score_mode=battery.score_mode)

    if battery.metric_mode == "pooled":
        values = _battery_metrics(res.oof_pred, res.oof_true, prepared.stimulus_ids)
    else:
        per_fold = []
        for f in range(cfg.k_folds):
            te = res.fold_of == f
            ids = tuple(np.array(prepared.stimulus_ids, dtype=object)[te])
            per_fold.append(_battery_metrics(res.oof_pred[te], res.oof_true[te], ids))
        values = {}
        for name in METRIC_NAMES:
            vals = [m[name] for m in per_fold]
            values[name] = None if any(v is None for v in vals) else float(np.mean(vals))
        values["undefined_columns"] = int(sum(m["undefined_columns"] for m in per_fold))

    t = p = emp = None
    if battery.n_perm > 0:
        null = stats.permutation_null(
            x, y, cfg, n_perm=battery.n_perm,
            seed=child_seed(cfg.rng_seed, _STREAM_SUBJECT_NULL + _stable_index(subject_id)),
            plan=plan, folds=res.fold_of, score_mode=battery.score_mode)
        sig = stats.significance_test(res.fold_scores, null)
        t, p, emp = sig.t, sig.p, sig.empirical_p

    undef = values.pop("undefined_columns")
    return SubjectAlignment(
        subject_id=subject_id,
        rho=res.rho,
        fold_scores=[float(v) for v in res.fold_scores],
        alphas=[float(a) for a in res.alphas],
        values=values,
        t=t, p=p, empirical_p=emp,
        undefined_columns=undef,
    )


def _stable_index(subject_id: str) -> int:
    """Deterministic small integer from a subject id (independent of dict order)."""
    return sum(ord(c) * (31 ** i % 65521) for i, c in enumerate(subject_id)) % 100_000


def _parallel_map(fn, items, jobs, context=""):
    """Map over (subject_id, epochs) items; failures name the subject."""

    def wrapped(kv):
        try:
            return fn(kv)
        except EegAlignError as exc:
            raise type(exc)(f"{context} subject {kv[0]}: {exc}") from exc

    if jobs <= 1 or len(items) <= 1:
        return [wrapped(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(wrapped, items))


def aggregate_metrics(subjects) -> dict:
    """mean +- std per metric over subjects; None values are marked undefined."""
    agg = {}
    rhos = [s.rho for s in subjects]
    mean, std = stats.aggregate_subjects(rhos)
    agg["rho"] = {"mean": mean, "std": std}
    for name in METRIC_NAMES:
        vals = [s.values[name] for s in subjects]
        if any(v is None for v in vals):
            agg[name] = {"mean": None, "std": None, "undefined": True}
        else:
            mean, std = stats.aggregate_subjects(vals)
            agg[name] = {"mean": mean, "std": std}
    return agg


def run_alignment(dataset: Dataset, model_id: str, layer_selector="final",
                  cfg: CVConfig = CVConfig(),
                  battery: BatteryConfig = BatteryConfig()):
    """The full battery for one model: encode, score, test significance.

    layer_selector is 'final', a layer index/name, or 'all'; 'all' returns a
    dict keyed by layer name, otherwise a single AlignmentReport.
    """
    if model_id not in dataset.features:
        raise ParameterError(f"model {model_id!r} not in dataset "
                             f"(have {list(dataset.features)})")
    features = dataset.features[model_id]
    if layer_selector == "all":
        return {
            name: run_alignment(dataset, model_id, name, cfg, battery)
            for name in features.layer_names
        }
    layer_idx = features.layer_index(layer_selector)
    layer_name = features.layer_names[layer_idx]

    items = sorted(dataset.subjects.items())
    subjects = _parallel_map(
        lambda kv: _align_one_subject(kv[0], kv[1], features, layer_idx, cfg, battery),
        items, battery.jobs, context=f"alignment of {model_id}:")
    return AlignmentReport(
        model_id=model_id,
        layer=layer_name,
        subjects=subjects,
        aggregate=aggregate_metrics(subjects),
        config=_config_snapshot(cfg, battery, layer=layer_name, model_id=model_id),
    )


# ---------------------------------------------------------------------------
# layer x time
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerTimeResult:
    model_id: str
    layer_names: tuple
    windows: list                         # of (start_ms, end_ms)
    per_subject: dict                     # subject_id -> grid (L x W)
    mean_grid: np.ndarray
    argmax: tuple                         # (layer_index, window_index)
    config: dict

    def to_dict(self) -> dict:
        return {
            "kind": "layer_time",
            "model_id": self.model_id,
            "layer_names": list(self.layer_names),
            "windows": [list(w) for w in self.windows],
            "per_subject": {k: v.tolist() for k, v in self.per_subject.items()},
            "mean_grid": self.mean_grid.tolist(),
            "argmax": {"layer_index": self.argmax[0], "window_index": self.argmax[1],
                       "layer": self.layer_names[self.argmax[0]],
                       "window": list(self.windows[self.argmax[1]])},
            "config": self.config,
        }


def run_layer_time(dataset: Dataset, model_id: str, cfg: CVConfig = CVConfig(),
                   battery: BatteryConfig = BatteryConfig(),
                   window_ms: float = 100.0) -> LayerTimeResult:
    """Per-subject layer x window grids plus the subject-mean grid argmax."""
    features = dataset.features[model_id]
    if features.n_layers < 2:
        raise ParameterError("layer-time analysis needs multi-layer features")
    plan = _table_plan(battery)

    def one(kv):
        sid, epochs = kv
        prepared = _prepared_epochs(epochs, battery)
        grid, windows = layer_time_grid(features, prepared, cfg,
                                        window_ms=window_ms, plan=plan)
        return sid, grid, windows

    items = sorted(dataset.subjects.items())
    results = _parallel_map(one, items, battery.jobs,
                            context=f"layer-time of {model_id}:")
    windows = results[0][2]
    per_subject = {sid: grid for sid, grid, _ in results}
    mean_grid = np.mean([g for _, g, _ in results], axis=0)
    flat = int(np.argmax(mean_grid))
    argmax = (flat // mean_grid.shape[1], flat % mean_grid.shape[1])
    return LayerTimeResult(
        model_id=model_id, layer_names=features.layer_names, windows=windows,
        per_subject=per_subject, mean_grid=mean_grid, argmax=argmax,
        config=_config_snapshot(cfg, battery, window_ms=window_ms, model_id=model_id),
    )


# ---------------------------------------------------------------------------
# topographies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopoResult:
    model_id: str
    channel_names: tuple
    windows: list
    channel_window_r: np.ndarray          # channels x windows, subject-averaged
    region_stats: dict                    # region -> {mean: [W], std: [W], overall_mean, n_channels}
    region_of: dict                       # channel -> region
    config: dict

    def to_dict(self) -> dict:
        return {
            "kind": "topo",
            "model_id": self.model_id,
            "channel_names": list(self.channel_names),
            "windows": [list(w) for w in self.windows],
            "channel_window_r": self.channel_window_r.tolist(),
            "region_stats": self.region_stats,
            "region_of": self.region_of,
            "config": self.config,
        }

    def region_ranking(self):
        """Regions sorted by overall mean r, strongest first."""
        items = [(reg, st["overall_mean"]) for reg, st in self.region_stats.items()
                 if reg != "Other"]
        return [reg for reg, _ in sorted(items, key=lambda kv: -kv[1])]


def run_topo(dataset: Dataset, model_id: str, cfg: CVConfig = CVConfig(),
             battery: BatteryConfig = BatteryConfig(), windows=None,
             window_ms: float = 100.0, montage: Montage | None = None,
             target_mode: str = "window_mean",
             layer_selector="final") -> TopoResult:
    """Channel x window encoding accuracy with per-region summaries."""
    montage = montage or dataset.montage
    if montage is None:
        raise ConfigurationError("topographic analysis needs a montage "
                                 "(manifest montage_path or explicit montage)")
    features = dataset.features[model_id]
    layer_idx = features.layer_index(layer_selector)

    def one(kv):
        sid, epochs = kv
        prepared = _prepared_epochs(epochs, battery)
        win = windows or tile_windows(prepared.t_end_ms, window_ms)
        rows = features.rows_for(prepared.stimulus_ids)
        x = features.data[rows, layer_idx, :]
        r = channel_window_encode(x, prepared, win, cfg, target_mode=target_mode)
        return prepared.channel_names, win, r

    items = sorted(dataset.subjects.items())
    results = _parallel_map(one, items, battery.jobs,
                            context=f"topography of {model_id}:")
    channel_names, win, _ = results[0]
    chan_win = np.mean([r for _, _, r in results], axis=0)

    region_of = {}
    for name in channel_names:
        region = montage.region_of(name)
        if name not in montage.entries:
            logger.warning("channel %s not in montage; assigned region Other", name)
        region_of[name] = region

    region_stats = {}
    for region in data_model.REGIONS:
        sel = [i for i, name in enumerate(channel_names) if region_of[name] == region]
        if not sel:
            continue
        block = chan_win[sel]
        region_stats[region] = {
            "mean": block.mean(axis=0).tolist(),
            "std": block.std(axis=0, ddof=1).tolist() if len(sel) > 1
                   else [None] * block.shape[1],
            "overall_mean": float(block.mean()),
            "n_channels": len(sel),
        }

    return TopoResult(
        model_id=model_id, channel_names=channel_names, windows=[tuple(w) for w in win],
        channel_window_r=chan_win, region_stats=region_stats, region_of=region_of,
        config=_config_snapshot(cfg, battery, target_mode=target_mode, model_id=model_id),
    )


# ---------------------------------------------------------------------------
# categories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryResult:
    model_id: str
    categories: dict                      # name -> {n, mean, std or None, flagged}
    n_scored: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "kind": "category",
            "model_id": self.model_id,
            "categories": self.categories,
            "n_scored": self.n_scored,
            "config": self.config,
        }


def run_category(dataset: Dataset, model_id: str,
                 labels: CategoryLabels | None = None,
                 cfg: CVConfig = CVConfig(),
                 battery: BatteryConfig = BatteryConfig(),
                 min_n: int = 5, refit: bool = False) -> CategoryResult:
    """Per-category encoding scores.

    By default the encoder is fit once on all stimuli and each category is
    scored on its own out-of-fold predictions; refit=True instead reruns
    the whole CV inside each category (unstable for small categories).
    """
    labels = labels or dataset.categories
    if labels is None:
        raise ConfigurationError("category analysis needs labels "
                                 "(manifest categories_path or explicit labels)")
    features = dataset.features[model_id]
    plan = _table_plan(battery)

    def one(kv):
        sid, epochs = kv
        prepared = _prepared_epochs(epochs, battery)
        ids = prepared.stimulus_ids
        labeled = [i for i, s in enumerate(ids) if s in labels.labels]
        if not labeled:
            raise AlignmentError(f"subject {sid}: no stimulus ids overlap the labels")
        rows = features.rows_for(ids)
        x = features.data[rows, features.layer_index("final"), :]
        y = window_flatten(prepared, prepared.t_start_ms, prepared.t_end_ms)
        per_cat = {}
        if refit:
            for cat in labels.categories:
                members = [i for i in labeled if labels.labels[ids[i]] == cat]
                if len(members) < max(min_n, cfg.k_folds * 3):
                    per_cat[cat] = (len(members), None)
                    continue
                sub = cv_encode(x[members], y[members], cfg, plan=plan,
                                score_mode=battery.score_mode)
                per_cat[cat] = (len(members), sub.rho)
            return per_cat, len(labeled)
        res = cv_encode(x, y, cfg, plan=plan, score_mode=battery.score_mode)
        from .encoder import _column_pearson

        for cat in labels.categories:
            members = [i for i in labeled if labels.labels[ids[i]] == cat]
            if len(members) < max(min_n, 3):
                per_cat[cat] = (len(members), None)
                continue
            r, _ = _column_pearson(res.oof_pred[members], res.oof_true[members])
            per_cat[cat] = (len(members), float(r.mean()))
        return per_cat, len(labeled)

    items = sorted(dataset.subjects.items())
    results = _parallel_map(one, items, battery.jobs,
                            context=f"category analysis of {model_id}:")
    n_scored = results[0][1]

    categories = {}
    for cat in labels.categories:
        n = results[0][0][cat][0]
        scores = [per_cat[cat][1] for per_cat, _ in results]
        if any(s is None for s in scores):
            categories[cat] = {"n": n, "mean": None, "std": None, "flagged": True}
        else:
            mean, std = stats.aggregate_subjects(scores)
            categories[cat] = {"n": n, "mean": mean, "std": std, "flagged": False}
    return CategoryResult(
        model_id=model_id, categories=categories, n_scored=n_scored,
        config=_config_snapshot(cfg, battery, min_n=min_n, refit=refit,
                                model_id=model_id),
    )


# ---------------------------------------------------------------------------
# benchmark correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkCorrResult:
    metric: str
    tasks: dict                           # task -> {regression fields, points, band}

    def to_dict(self) -> dict:
        return {"kind": "benchmark_corr", "metric": self.metric, "tasks": self.tasks}


def load_benchmark_scores(path) -> dict:
    """Read `model_id,task,score` CSV into {task: {model_id: score}}."""
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["model_id", "task", "score"]:
            from .errors import FormatError

            raise FormatError(f"{path}: expected header 'model_id,task,score'")
        for row in reader:
            if not row:
                continue
            model_id, task, score = row[0], row[1], float(row[2])
            out.setdefault(task, {})[model_id] = score
    return out


def run_benchmark_corr(reports, scores_csv, metric: str = "pearson",
                       band_points: int = 50) -> BenchmarkCorrResult:
    """OLS of task score on model-brain similarity, one fit per task."""
    if metric not in METRIC_NAMES and metric != "rho":
        raise ParameterError(f"unknown similarity metric {metric!r}")
    similarity = {}
    for rep in reports:
        agg = rep.aggregate["rho" if metric == "rho" else metric]
        if agg["mean"] is not None:
            similarity[rep.model_id] = agg["mean"]

    tasks_scores = load_benchmark_scores(scores_csv)
    tasks = {}
    for task in sorted(tasks_scores):
        pairs = [(similarity[m], s, m) for m, s in sorted(tasks_scores[task].items())
                 if m in similarity]
        if len(pairs) < 3:
            raise ParameterError(
                f"task {task!r} has {len(pairs)} paired points; need >= 3")
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        fit = stats.ols_fit(x, y)
        grid = np.linspace(float(x.min()), float(x.max()), band_points)
        half = fit.ci_halfwidth(grid)
        pred = fit.predict(grid)
        tasks[task] = {
            "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "p_value": fit.p_value, "n": fit.n,
            "points": [{"model_id": m, "similarity": float(xv), "score": float(yv)}
                       for xv, yv, m in pairs],
            "band": {"x": grid.tolist(), "mean": pred.tolist(),
                     "lo": (pred - half).tolist(), "hi": (pred + half).tolist()},
        }
    return BenchmarkCorrResult(metric=metric, tasks=tasks)


# ---------------------------------------------------------------------------
# RDM export
# ---------------------------------------------------------------------------

def run_rdm_export(dataset: Dataset, model_id: str, out_dir,
                   cfg: CVConfig = CVConfig(),
                   battery: BatteryConfig = BatteryConfig()) -> list:
    """Predicted and observed EEG RDMs per subject, written as NPY + ids JSON."""
    features = dataset.features[model_id]
    layer_idx = features.layer_index("final")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for sid, epochs in sorted(dataset.subjects.items()):
        prepared = _prepared_epochs(epochs, battery)
        rows = features.rows_for(prepared.stimulus_ids)
        x = features.data[rows, layer_idx, :]
        y = window_flatten(prepared, prepared.t_start_ms, prepared.t_end_ms)
        res = cv_encode(x, y, cfg, plan=_table_plan(battery),
                        score_mode=battery.score_mode)
        rdm_pred = compute_rdm(res.oof_pred, prepared.stimulus_ids)
        rdm_true = compute_rdm(res.oof_true, prepared.stimulus_ids)
        for tag, rdm in (("pred", rdm_pred), ("true", rdm_true)):
            path = out / f"rdm_{tag}_{model_id}_{sid}.npy"
            data_model.save_npy(rdm.matrix, path)
            written.append(path)
        meta = out / f"rdm_ids_{model_id}_{sid}.json"
        with open(meta, "w", encoding="utf-8") as fh:
            json.dump({"model_id": model_id, "subject_id": sid,
                       "stimulus_ids": list(prepared.stimulus_ids),
                       "rsa_spearman": rsa_score(rdm_pred, rdm_true, "spearman"),
                       "config": _config_snapshot(cfg, battery, model_id=model_id)},
                      fh, indent=1, sort_keys=True)
        written.append(meta)
    return written


def load_alignment_report(path) -> AlignmentReport:
    """Rebuild an AlignmentReport from its JSON export."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "alignment":
        raise ParameterError(f"{path} is not an alignment report")
    subjects = [SubjectAlignment(**s) for s in doc["subjects"]]
    return AlignmentReport(model_id=doc["model_id"], layer=doc["layer"],
                           subjects=subjects, aggregate=doc["aggregate"],
                           config=doc["config"])


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _write_json(doc: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _csv_rows(result):
    if isinstance(result, AlignmentReport):
        header = ["subject_id", "rho", *METRIC_NAMES, "t", "p", "empirical_p"]
        rows = []
        for s in result.subjects:
            rows.append([s.subject_id, s.rho, *[s.values[m] for m in METRIC_NAMES],
                         s.t, s.p, s.empirical_p])
        rows.append(["mean", result.aggregate["rho"]["mean"],
                     *[result.aggregate[m]["mean"] for m in METRIC_NAMES], "", "", ""])
        rows.append(["std", result.aggregate["rho"]["std"],
                     *[result.aggregate[m]["std"] for m in METRIC_NAMES], "", "", ""])
        return header, rows
    if isinstance(result, TopoResult):
        header = ["channel", "region", "window_start_ms", "window_end_ms", "r"]
        rows = []
        for ci, name in enumerate(result.channel_names):
            for wi, (ws, we) in enumerate(result.windows):
                rows.append([name, result.region_of[name], ws, we,
                             result.channel_window_r[ci, wi]])
        return header, rows
    if isinstance(result, LayerTimeResult):
        header = ["layer", "window_start_ms", "window_end_ms", "rho"]
        rows = []
        for li, lname in enumerate(result.layer_names):
            for wi, (ws, we) in enumerate(result.windows):
                rows.append([lname, ws, we, result.mean_grid[li, wi]])
        return header, rows
    if isinstance(result, CategoryResult):
        header = ["category", "n", "mean", "std", "flagged"]
        rows = [[cat, st["n"], st["mean"], st["std"], st["flagged"]]
                for cat, st in result.categories.items()]
        return header, rows
    if isinstance(result, BenchmarkCorrResult):
        header = ["task", "slope", "intercept", "r_squared", "p_value", "n"]
        rows = [[task, st["slope"], st["intercept"], st["r_squared"],
                 st["p_value"], st["n"]] for task, st in result.tasks.items()]
        return header, rows
    raise ParameterError(f"no CSV export for {type(result).__name__}")


def _value_color(v, vmin, vmax):
    span = vmax - vmin
    z = 0.5 if span == 0 else (v - vmin) / span
    red = int(round(255 * z))
    blue = int(round(255 * (1 - z)))
    return f"rgb({red},{80},{blue})"


def _svg_topo(result: TopoResult, montage: Montage) -> str:
    """Scatter of per-channel mean r at montage positions, one circle per channel."""
    values = result.channel_window_r.mean(axis=1)
    vmin, vmax = float(values.min()), float(values.max())
    size = 400
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<circle class="head" cx="{size/2}" cy="{size/2}" r="{size*0.48}" '
        f'fill="none" stroke="black"/>',
    ]
    for ci, name in enumerate(result.channel_names):
        ent = montage.entries.get(name)
        x, y = (ent.x, ent.y) if ent is not None else (0.0, 0.0)
        px = size / 2 + x * size * 0.45
        py = size / 2 - y * size * 0.45
        parts.append(
            f'<circle class="channel" cx="{px:.2f}" cy="{py:.2f}" r="9" '
            f'fill="{_value_color(values[ci], vmin, vmax)}">'
            f'<title>{name} r={values[ci]:.4f}</title></circle>'
        )
        parts.append(f'<text x="{px:.2f}" y="{py - 11:.2f}" font-size="8" '
                     f'text-anchor="middle">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _svg_grid(result: LayerTimeResult) -> str:
    """Heat grid: one rect per (layer, window) cell."""
    grid = result.mean_grid
    vmin, vmax = float(grid.min()), float(grid.max())
    cell, pad = 40, 60
    width = pad + grid.shape[1] * cell + 10
    height = pad + grid.shape[0] * cell + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for li in range(grid.shape[0]):
        for wi in range(grid.shape[1]):
            v = grid[li, wi]
            parts.append(
                f'<rect class="cell" x="{pad + wi * cell}" y="{pad + li * cell}" '
                f'width="{cell - 2}" height="{cell - 2}" '
                f'fill="{_value_color(v, vmin, vmax)}">'
                f'<title>{result.layer_names[li]} '
                f'{result.windows[wi][0]:g}-{result.windows[wi][1]:g}ms '
                f'rho={v:.4f}</title></rect>'
            )
    for li, name in enumerate(result.layer_names):
        parts.append(f'<text x="4" y="{pad + li * cell + cell / 2:.0f}" '
                     f'font-size="10">{name}</text>')
    for wi, (ws, we) in enumerate(result.windows):
        parts.append(f'<text x="{pad + wi * cell}" y="{pad - 8}" '
                     f'font-size="10">{ws:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_report(result, path, format: str = "json",
                  montage: Montage | None = None) -> Path:
    """Serialize a result; JSON keeps the full nested structure bitwise."""
    path = Path(path)
    if format == "json":
        if not hasattr(result, "to_dict"):
            raise ParameterError(f"no JSON export for {type(result).__name__}")
        _write_json(result.to_dict(), path)
        return path
    if format == "csv":
        header, rows = _csv_rows(result)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow(["" if v is None else v for v in row])
        return path
    if format == "svg":
        if isinstance(result, TopoResult):
            if montage is None:
                montage = data_model.default_montage()
            svg = _svg_topo(result, montage)
        elif isinstance(result, LayerTimeResult):
            svg = _svg_grid(result)
        else:
            raise ParameterError(f"no SVG export for {type(result).__name__}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        return path
    raise ParameterError(f"unknown export format {format!r}")
