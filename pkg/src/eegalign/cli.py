"""Batch command-line frontend.

Exit codes: 0 success, 1 validation/usage error, 2 runtime or numerical
error.  Diagnostics go to stderr; results go to files and stdout.  The
default output directory can be set with the EEGALIGN_OUT environment
variable.  Serial runs (--jobs 1) are bitwise reproducible.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analyses, data_model, synth
from .encoder import CVConfig
from .errors import EegAlignError, NumericalError

logger = logging.getLogger("eegalign")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--out", default=os.environ.get("EEGALIGN_OUT", "."),
                   help="output directory (default: $EEGALIGN_OUT or .)")
    p.add_argument("--json-errors", action="store_true",
                   help="emit errors as JSON on stderr")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_analysis(p):
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default=None, help="model_id filter (default: all)")
    p.add_argument("--subjects", default=None,
                   help="comma-separated subject_id filter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--alpha-min", type=float, default=1e-2)
    p.add_argument("--alpha-max", type=float, default=1e3)
    p.add_argument("--alpha-points", type=int, default=20)
    p.add_argument("--fit-scope", choices=["train_fold", "global"],
                   default="train_fold")
    p.add_argument("--pca", type=int, default=256,
                   help="EEG PCA dimensionality (0 disables)")
    p.add_argument("--pca-features", type=int, default=0,
                   help="feature PCA dimensionality (0 disables)")
    p.add_argument("--n-perm", type=int, default=200,
                   help="label permutations for significance (0 disables)")
    p.add_argument("--score-mode", choices=["mean_columns", "flattened"],
                   default="mean_columns")
    p.add_argument("--metric-mode", choices=["pooled", "per_fold"], default="pooled")
    p.add_argument("--baseline", type=float, nargs=2, metavar=("START_MS", "END_MS"),
                   default=None, help="baseline-correct epochs before averaging")
    p.add_argument("--window-ms", type=float, default=100.0)
    p.add_argument("--format", action="append", choices=["json", "csv", "svg"],
                   default=None, help="output formats (repeatable; default json)")
    p.add_argument("--jobs", type=int, default=1)


def _cv_config(args) -> CVConfig:
    grid = tuple(float(a) for a in np.logspace(np.log10(args.alpha_min),
                                               np.log10(args.alpha_max),
                                               args.alpha_points))
    return CVConfig(k_folds=args.k_folds, alpha_grid=grid, rng_seed=args.seed,
                    fit_scope=args.fit_scope)


def _battery(args) -> analyses.BatteryConfig:
    return analyses.BatteryConfig(
        pca_dim=args.pca or None,
        pca_features=args.pca_features or None,
        n_perm=args.n_perm,
        score_mode=args.score_mode,
        metric_mode=args.metric_mode,
        baseline_window=tuple(args.baseline) if args.baseline else None,
        jobs=args.jobs,
    )


def _load_filtered(args) -> data_model.Dataset:
    dataset = data_model.load_dataset(args.manifest)
    if args.subjects:
        keep = set(args.subjects.split(","))
        missing = keep - set(dataset.subjects)
        if missing:
            raise EegAlignError(f"unknown subjects: {sorted(missing)}")
        dataset = data_model.Dataset(
            manifest=dataset.manifest,
            subjects={k: v for k, v in dataset.subjects.items() if k in keep},
            features=dataset.features,
            montage=dataset.montage,
            categories=dataset.categories,
        )
    return dataset


def _models(args, dataset) -> list:
    if args.model is None:
        return list(dataset.features)
    if args.model not in dataset.features:
        raise EegAlignError(f"model {args.model!r} not in manifest "
                            f"(have {list(dataset.features)})")
    return [args.model]


def _emit(path):
    print(path)


def _export(result, out_dir: Path, stem: str, formats, montage=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt in formats:
        _emit(analyses.export_report(result, out_dir / f"{stem}.{fmt}", fmt,
                                     montage=montage))


def _layer_arg(value):
    """Layer selectors arrive as strings; bare integers become indices."""
    if isinstance(value, str) and value.lstrip("-").isdigit():
        return int(value)
    return value


def _cmd_validate(args) -> int:
    issues = data_model.validate_manifest(args.manifest)
    for issue in issues:
        print(str(issue))
    return 1 if issues else 0


def _cmd_synth(args) -> int:
    spec = synth.SynthSpec.from_json(args.spec) if args.spec else synth.SynthSpec()
    manifest = synth.write_synth_dataset(spec, args.out, dtype=args.dtype)
    _emit(manifest)
    return 0


def _cmd_align(args) -> int:
    dataset = _load_filtered(args)
    cfg, battery = _cv_config(args), _battery(args)
    formats = args.format or ["json"]
    out = Path(args.out)
    for model_id in _models(args, dataset):
        result = analyses.run_alignment(dataset, model_id, _layer_arg(args.layer),
                                        cfg, battery)
        if isinstance(result, dict):
            for layer_name, rep in result.items():
                _export(rep, out, f"alignment_{model_id}_{layer_name}", formats)
        else:
            _export(result, out, f"alignment_{model_id}", formats)
    return 0


def _cmd_layer_time(args) -> int:
    dataset = _load_filtered(args)
    cfg, battery = _cv_config(args), _battery(args)
    formats = args.format or ["json"]
    out = Path(args.out)
    for model_id in _models(args, dataset):
        result = analyses.run_layer_time(dataset, model_id, cfg, battery,
                                         window_ms=args.window_ms)
        _export(result, out, f"layer_time_{model_id}", formats)
    return 0


def _cmd_topo(args) -> int:
    dataset = _load_filtered(args)
    cfg, battery = _cv_config(args), _battery(args)
    montage = data_model.default_montage() if args.default_montage else dataset.montage
    formats = args.format or ["json"]
    out = Path(args.out)
    for model_id in _models(args, dataset):
        result = analyses.run_topo(dataset, model_id, cfg, battery,
                                   window_ms=args.window_ms, montage=montage,
                                   target_mode=args.target_mode,
                                   layer_selector=_layer_arg(args.layer))
        _export(result, out, f"topo_{model_id}", formats, montage=montage)
    return 0


def _cmd_category(args) -> int:
    dataset = _load_filtered(args)
    cfg, battery = _cv_config(args), _battery(args)
    labels = (data_model.CategoryLabels.from_csv(args.categories)
              if args.categories else dataset.categories)
    formats = args.format or ["json"]
    out = Path(args.out)
    for model_id in _models(args, dataset):
        result = analyses.run_category(dataset, model_id, labels, cfg, battery,
                                       min_n=args.min_n, refit=args.refit)
        _export(result, out, f"category_{model_id}", formats)
    return 0


def _cmd_benchmark_corr(args) -> int:
    reports = [analyses.load_alignment_report(p) for p in args.reports]
    result = analyses.run_benchmark_corr(reports, args.scores, metric=args.metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = args.format or ["json"]
    for fmt in formats:
        _emit(analyses.export_report(result, out / f"benchmark_corr.{fmt}", fmt))
    return 0


def _cmd_rdm(args) -> int:
    dataset = _load_filtered(args)
    cfg, battery = _cv_config(args), _battery(args)
    for model_id in _models(args, dataset):
        for path in analyses.run_rdm_export(dataset, model_id, args.out, cfg, battery):
            _emit(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eegalign",
                     description="Model-brain EEG alignment engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest dataset",
                       parents=[], add_help=True)
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("synth", help="write a synthetic ground-truth dataset")
    _add_common(p)
    p.add_argument("--spec", default=None, help="SynthSpec JSON (default: built-in)")
    p.add_argument("--dtype", choices=["<f8", "<f4"], default="<f8")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("align", help="similarity battery (per subject + aggregate)")
    _add_analysis(p)
    p.add_argument("--layer", default="final",
                   help="'final', a layer name/index, or 'all'")
    p.set_defaults(fn=_cmd_align)

    p = sub.add_parser("layer-time", help="layer x time-window encoding grid")
    _add_analysis(p)
    p.set_defaults(fn=_cmd_layer_time)

    p = sub.add_parser("topo", help="channel x window encoding topography")
    _add_analysis(p)
    p.add_argument("--default-montage", action="store_true",
                   help="use the packaged 10-20 montage instead of the manifest's")
    p.add_argument("--target-mode", choices=["window_mean", "flattened"],
                   default="window_mean")
    p.add_argument("--layer", default="final")
    p.set_defaults(fn=_cmd_topo)

    p = sub.add_parser("category", help="per-category encoding scores")
    _add_analysis(p)
    p.add_argument("--categories", default=None,
                   help="stimulus_id,category CSV (default: manifest's)")
    p.add_argument("--min-n", type=int, default=5)
    p.add_argument("--refit", action="store_true",
                   help="refit the encoder inside each category")
    p.set_defaults(fn=_cmd_category)

    p = sub.add_parser("benchmark-corr",
                       help="regress task scores on model-brain similarity")
    _add_common(p)
    p.add_argument("--reports", nargs="+", required=True,
                   help="alignment report JSON files")
    p.add_argument("--scores", required=True, help="model_id,task,score CSV")
    p.add_argument("--metric", default="pearson")
    p.add_argument("--format", action="append", choices=["json", "csv"], default=None)
    p.set_defaults(fn=_cmd_benchmark_corr)

    p = sub.add_parser("rdm", help="export predicted/observed EEG RDMs")
    _add_analysis(p)
    p.set_defaults(fn=_cmd_rdm)

    return parser


def _report_error(exc, json_errors: bool) -> None:
    if json_errors:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    else:
        print(f"eegalign: error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    # Small-matrix workloads thrash on BLAS threading, and bitwise
    # reproducibility wants a fixed thread count; EEGALIGN_BLAS_THREADS
    # overrides for large-scale runs.
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=int(os.environ.get("EEGALIGN_BLAS_THREADS", "1")))
    except (ImportError, ValueError):
        pass

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"eegalign: error: {exc}", file=sys.stderr)
        return 1

    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")

    json_errors = getattr(args, "json_errors", False)
    try:
        return args.fn(args)
    except NumericalError as exc:
        _report_error(exc, json_errors)
        return 2
    except EegAlignError as exc:
        _report_error(exc, json_errors)
        return 1
    except OSError as exc:
        _report_error(exc, json_errors)
        return 2
    except Exception as exc:  # inner failures are runtime errors, not crashes
        logger.debug("unexpected failure", exc_info=True)
        _report_error(exc, json_errors)
        return 2


if __name__ == "__main__":
    sys.exit(main())
