"""Command-line entry point for the whole pipeline.

Subcommands: synth, train, fingerprint, baseline, evaluate
(similarity | classify | attribute | interpret), report. Every run writes a
run.json record with the resolved configuration; re-running a record's
command and config reproduces all numeric artifacts byte-for-byte (run.json
itself carries wall-clock timing and is the one file excluded from that
guarantee). Floats are printed with repr, which round-trips exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BASELINE_KINDS, baseline_pipeline, out_of_fold_matrix
from .data import (
    DataValidationError,
    SyntheticConfig,
    atomic_write_bytes,
    load_dataset,
    load_labels,
    load_model,
    save_model,
    synthesize_to_disk,
)
from .evaluation import (
    cross_validated_bacc,
    interpret_components,
    shapley_attribution,
    similarity_analysis,
    train_mlp,
)
from .pipeline import (
    NonFiniteLossError,
    TrainConfig,
    cross_validate,
    make_subject_folds,
    out_of_fold_fingerprints,
)

__all__ = ["main", "entry_point", "build_parser", "full_help_text", "rebuild_argv"]

_EXIT_DOC = """\
exit codes:
  0  success
  1  unexpected error
  2  usage error (bad flags or arguments)
  3  missing input file or directory
  4  validation error in inputs or configuration
  5  non-finite numeric result during optimization

environment:
  COGRACA_SEED  integer; overrides --seed for any subcommand that accepts one
"""

_CLI_KIND_MAP = {
    "pca-cca": "pca-cca",
    "ica-cca": "ica-cca",
    "fmri-ica": "fmri-only-ica",
    "cognition": "cognition-only",
}


class _Formatter(argparse.RawDescriptionHelpFormatter):
    """Fixed width so --help output is independent of the terminal."""

    def __init__(self, prog: str):
        super().__init__(prog, width=96, max_help_position=30)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing input file: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise DataValidationError(f"{path}: empty file")
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def _write_json(path: Path, payload: dict) -> None:
    atomic_write_bytes(path, (json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n").encode())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _write_run_record(out_dir: Path, command: str, config: dict, seed, outputs: list[str],
                      t0: float, extra: dict | None = None) -> None:
    record = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
        "duration_seconds": time.monotonic() - t0,
    }
    if extra:
        record.update(extra)
    _write_json(out_dir / "run.json", record)


def _load_run_record(run_dir: Path) -> dict:
    path = Path(run_dir) / "run.json"
    if not path.is_file():
        raise FileNotFoundError(f"missing run record: {path}")
    return json.loads(path.read_text())


def rebuild_argv(record: dict, out: str) -> list[str]:
    """Reconstruct the command line that reproduces a run record into a new
    output directory."""
    argv = record["command"].split()
    positional: list[str] = []
    for key, value in sorted(record["config"].items()):
        if value is None:
            continue
        if isinstance(value, list):
            positional.extend(str(v) for v in value)
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
            continue
        argv.extend([flag, _fmt(value)])
    argv.extend(["--out", out])
    argv.extend(positional)
    return argv


def _fingerprint_header(d: int) -> list[str]:
    return ["subject_id", "visit", "fold", "tag"] + [f"f_{i + 1}" for i in range(d)]


def _write_representations(path: Path, keys, fold_of, tags, values: np.ndarray) -> None:
    rows = [
        [s, v, int(f), t] + [x for x in vec]
        for (s, v), f, t, vec in zip(keys, fold_of, tags, values)
    ]
    _write_csv(path, _fingerprint_header(values.shape[1]), rows)


def _read_representations(path: Path):
    header, raw = _read_csv(path)
    if header[:4] != ["subject_id", "visit", "fold", "tag"]:
        raise DataValidationError(
            f"{path}: header must start with subject_id,visit,fold,tag"
        )
    keys, folds, values = [], [], []
    for row in raw:
        keys.append((row[0], int(row[1])))
        folds.append(int(row[2]))
        values.append([float(v) for v in row[4:]])
    return keys, np.array(folds, dtype=np.int64), np.array(values, dtype=np.float64)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cograca",
        formatter_class=_Formatter,
        description=(
            "Brain-cognition fingerprints from connectivity graphs: a graph-attention "
            "encoder trained jointly with generalized CCA and contrastive losses, plus "
            "baselines and evaluation statistics."
        ),
        epilog=_EXIT_DOC,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    parser.set_defaults(_parser=parser)

    p_synth = sub.add_parser(
        "synth", formatter_class=_Formatter,
        help="generate a synthetic longitudinal dataset",
        description="Generate a synthetic cohort: manifest.csv, one connectivity CSV per "
                    "visit, labels.csv (binary attribute), latents.csv (ground truth).",
    )
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--seed", type=int, default=7, help="generator seed (default 7)")
    p_synth.add_argument("--subjects", type=int, default=30, help="number of subjects (default 30)")
    p_synth.add_argument("--rois", type=int, default=24, help="nodes per graph (default 24)")
    p_synth.add_argument("--d-cog", type=int, default=16, help="cognitive score count (default 16)")
    p_synth.add_argument("--two-visit-fraction", type=float, default=0.5,
                         help="fraction of subjects with two visits (default 0.5)")
    p_synth.add_argument("--latent-dim", type=int, default=6, help="latent dimension (default 6)")
    p_synth.add_argument("--signal", type=float, default=1.0,
                         help="subject-signal strength in connectivity (default 1.0)")
    p_synth.add_argument("--coupling", type=float, default=0.9,
                         help="brain-cognition coupling in [0,1] (default 0.9)")
    p_synth.add_argument("--noise", type=float, default=0.25,
                         help="visit noise level (default 0.25)")
    p_synth.add_argument("--planted-strength", type=float, default=0.0,
                         help="strength of one label-linked edge, 0 disables (default 0)")

    p_train = sub.add_parser(
        "train", formatter_class=_Formatter,
        help="train one model per cross-validation fold",
        description="Subject-level k-fold training. Writes fold_K.cgmodel and "
                    "loss_trace_fold_K.csv per fold. lambda1/lambda2 = 0 trains the "
                    "correlation-only ablation (recorded as GraCa).",
    )
    p_train.add_argument("--data", required=True, help="dataset directory (manifest.csv)")
    p_train.add_argument("--out", required=True, help="output run directory")
    p_train.add_argument("--epochs", type=int, default=1000, help="training epochs (default 1000)")
    p_train.add_argument("--learning-rate", type=float, default=0.001,
                         help="Adam learning rate (default 0.001)")
    p_train.add_argument("--hidden-dim", type=int, default=32,
                         help="encoder hidden width (default 32)")
    p_train.add_argument("--r", type=int, default=16, help="embedding dimension (default 16)")
    p_train.add_argument("--d-r", type=int, default=16, help="shared dimension (default 16)")
    p_train.add_argument("--temperature", type=float, default=0.9,
                         help="contrastive temperature (default 0.9)")
    p_train.add_argument("--lambda1", type=float, default=1.5,
                         help="individualized loss weight (default 1.5)")
    p_train.add_argument("--lambda2", type=float, default=0.5,
                         help="multimodal loss weight (default 0.5)")
    p_train.add_argument("--ridge", default="scaled",
                         help="covariance ridge: 'scaled' or a float (default scaled)")
    p_train.add_argument("--seed", type=int, default=0, help="training seed (default 0)")
    p_train.add_argument("--folds", type=int, default=5, help="cross-validation folds (default 5)")
    p_train.add_argument("--jobs", type=int, default=1,
                         help="train folds concurrently with N workers (default 1)")

    p_fp = sub.add_parser(
        "fingerprint", formatter_class=_Formatter,
        help="compute held-out fingerprints from a training run",
        description="Project every visit through the model that held it out. Writes one "
                    "CSV row per visit: subject_id, visit, fold, tag, f_1..f_d.",
    )
    p_fp.add_argument("--data", required=True, help="dataset directory")
    p_fp.add_argument("--run", required=True, help="training run directory")
    p_fp.add_argument("--mode", default="fused", choices=["fused", "brain", "cognition"],
                      help="projection mode (default fused)")
    p_fp.add_argument("--out", required=True, help="output directory for fingerprints.csv")

    p_base = sub.add_parser(
        "baseline", formatter_class=_Formatter,
        help="compute baseline representations",
        description="Reference methods over vectorized connectivity and cognitive scores, "
                    "fit per fold on training visits only. Output schema matches "
                    "fingerprint CSVs.",
    )
    p_base.add_argument("--kind", required=True, choices=sorted(_CLI_KIND_MAP),
                        help="which baseline to run")
    p_base.add_argument("--data", required=True, help="dataset directory")
    p_base.add_argument("--out", required=True, help="output run directory")
    p_base.add_argument("--n-components", type=int, default=20,
                        help="ICA component count (default 20)")
    p_base.add_argument("--variance-threshold", type=float, default=0.95,
                        help="PCA explained-variance threshold (default 0.95)")
    p_base.add_argument("--seed", type=int, default=0, help="fold/ICA seed (default 0)")
    p_base.add_argument("--folds", type=int, default=5, help="cross-validation folds (default 5)")

    p_eval = sub.add_parser(
        "evaluate", formatter_class=_Formatter,
        help="similarity, classification, attribution, or interpretation",
        description="Downstream analyses over fingerprint or baseline representation CSVs.",
    )
    esub = p_eval.add_subparsers(dest="evaluate_command", metavar="ANALYSIS")

    p_sim = esub.add_parser(
        "similarity", formatter_class=_Formatter,
        help="intra- vs inter-subject similarity statistics",
        description="Pairwise Pearson similarity of representations; same-subject vs "
                    "different-subject separation via Wasserstein-1 and Mann-Whitney U. "
                    "Writes similarity_matrix.csv, histogram.csv, metrics.json.",
    )
    p_sim.add_argument("--representations", required=True,
                       help="fingerprint or baseline CSV to analyze")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_cls = esub.add_parser(
        "classify", formatter_class=_Formatter,
        help="MLP classification with balanced accuracy",
        description="Train the fixed 64/32 ELU MLP per fold on the representation CSV's "
                    "own fold split, pool held-out predictions, and report balanced "
                    "accuracy over repeated seeds. Writes metrics.json.",
    )
    p_cls.add_argument("--representations", required=True, help="representation CSV")
    p_cls.add_argument("--data", required=True, help="dataset directory with labels.csv")
    p_cls.add_argument("--task", default="attribute",
                       help="label column in labels.csv (default attribute)")
    p_cls.add_argument("--repeats", type=int, default=10, help="MLP seed repeats (default 10)")
    p_cls.add_argument("--epochs", type=int, default=200, help="MLP epochs (default 200)")
    p_cls.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p_cls.add_argument("--out", required=True, help="output directory")

    p_att = esub.add_parser(
        "attribute", formatter_class=_Formatter,
        help="exact Shapley attribution of MLP predictions",
        description="Train one MLP per fold, then compute exact Shapley values for every "
                    "held-out visit against the training-fold mean representation. Writes "
                    "attribution.csv and attribution_summary.csv (features ranked by mean "
                    "absolute value).",
    )
    p_att.add_argument("--representations", required=True, help="representation CSV")
    p_att.add_argument("--data", required=True, help="dataset directory with labels.csv")
    p_att.add_argument("--task", default="attribute",
                       help="label column in labels.csv (default attribute)")
    p_att.add_argument("--epochs", type=int, default=200, help="MLP epochs (default 200)")
    p_att.add_argument("--seed", type=int, default=0, help="MLP seed (default 0)")
    p_att.add_argument("--out", required=True, help="output directory")

    p_int = esub.add_parser(
        "interpret", formatter_class=_Formatter,
        help="cognitive loadings and attention edge importance",
        description="For selected shared components, rank cognitive loadings and emit the "
                    "attention-weighted edge-importance table from one fold's model. "
                    "Writes cognitive_loadings.csv and edge_importance.csv.",
    )
    p_int.add_argument("--data", required=True, help="dataset directory")
    p_int.add_argument("--run", required=True, help="training run directory")
    p_int.add_argument("--components", default="0",
                       help="comma-separated component indices (default 0)")
    p_int.add_argument("--fold", type=int, default=0, help="which fold's model (default 0)")
    p_int.add_argument("--out", required=True, help="output directory")

    p_rep = sub.add_parser(
        "report", formatter_class=_Formatter,
        help="aggregate metrics.json files into one report",
        description="Collect every metrics.json under the given directories into a single "
                    "report.json keyed by relative path.",
    )
    p_rep.add_argument("dirs", nargs="+", help="directories to scan for metrics.json")
    p_rep.add_argument("--out", required=True, help="output directory")

    parser._cograca_subparsers = {  # kept for full_help_text
        "synth": p_synth, "train": p_train, "fingerprint": p_fp, "baseline": p_base,
        "evaluate": p_eval, "evaluate similarity": p_sim, "evaluate classify": p_cls,
        "evaluate attribute": p_att, "evaluate interpret": p_int, "report": p_rep,
    }
    return parser


def full_help_text() -> str:
    """Help for the main parser and every subcommand, concatenated; the
    golden-file test pins this so flags and exit codes stay documented."""
    parser = build_parser()
    parts = [parser.format_help()]
    for name, sub in parser._cograca_subparsers.items():
        parts.append(f"\n{'=' * 24} {name} {'=' * 24}\n")
        parts.append(sub.format_help())
    return "".join(parts)


def _cmd_synth(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    cfg = SyntheticConfig(
        subjects=args.subjects,
        two_visit_fraction=args.two_visit_fraction,
        rois=args.rois,
        d_cog=args.d_cog,
        latent_dim=args.latent_dim,
        signal=args.signal,
        coupling=args.coupling,
        noise=args.noise,
        planted_strength=args.planted_strength,
        seed=args.seed,
    )
    records, _ = synthesize_to_disk(cfg, out)
    outputs = ["manifest.csv", "labels.csv", "latents.csv"] + [
        f"connectivity_{r.subject_id}_v{r.visit}.csv" for r in records
    ]
    config = {
        "seed": args.seed, "subjects": args.subjects, "rois": args.rois,
        "d_cog": args.d_cog, "two_visit_fraction": args.two_visit_fraction,
        "latent_dim": args.latent_dim, "signal": args.signal, "coupling": args.coupling,
        "noise": args.noise, "planted_strength": args.planted_strength,
    }
    _write_run_record(out, "synth", config, args.seed, outputs, t0)
    print(f"wrote {len(records)} visits to {out}")
    return 0


def _train_config(args) -> TrainConfig:
    if args.ridge == "scaled":
        ridge = None
    else:
        try:
            ridge = float(args.ridge)
        except ValueError:
            raise DataValidationError(
                f"--ridge must be 'scaled' or a float, got {args.ridge!r}"
            ) from None
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        hidden_dim=args.hidden_dim,
        r=args.r,
        d_r=args.d_r,
        temperature=args.temperature,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        ridge=ridge,
        seed=args.seed,
        folds=args.folds,
    )


def _cmd_train(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _train_config(args)
    records = load_dataset(Path(args.data))
    folds, models = cross_validate(records, cfg, jobs=args.jobs)
    outputs = []
    for fold_idx, model in enumerate(models):
        model_name = f"fold_{fold_idx}.cgmodel"
        save_model(model, out / model_name)
        trace_name = f"loss_trace_fold_{fold_idx}.csv"
        rows = [
            [epoch] + [v for v in model.loss_trace[epoch]]
            for epoch in range(model.loss_trace.shape[0])
        ]
        _write_csv(out / trace_name, ["epoch", "corr", "ind", "mul", "total"], rows)
        outputs.extend([model_name, trace_name])
    config = {
        "data": os.path.abspath(args.data), "epochs": args.epochs,
        "learning_rate": args.learning_rate, "hidden_dim": args.hidden_dim,
        "r": args.r, "d_r": args.d_r, "temperature": args.temperature,
        "lambda1": args.lambda1, "lambda2": args.lambda2, "ridge": args.ridge,
        "seed": args.seed, "folds": args.folds,
    }
    _write_run_record(out, "train", config, args.seed, outputs, t0,
                      extra={"model_kind": cfg.model_kind})
    print(f"trained {len(models)} fold models ({cfg.model_kind}) into {out}")
    return 0


def _cmd_fingerprint(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_record = _load_run_record(Path(args.run))
    train_cfg = run_record["config"]
    records = load_dataset(Path(args.data))
    folds = make_subject_folds(
        [r.subject_id for r in records], int(train_cfg["folds"]), int(train_cfg["seed"])
    )
    models = [
        load_model(Path(args.run) / f"fold_{k}.cgmodel") for k in range(len(folds))
    ]
    fps, fold_of = out_of_fold_fingerprints(folds, models, records, mode=args.mode)
    values = np.stack([fp.values for fp in fps])
    _write_representations(
        out / "fingerprints.csv",
        [(r.subject_id, r.visit) for r in records],
        fold_of,
        [fp.tag for fp in fps],
        values,
    )
    config = {
        "data": os.path.abspath(args.data), "run": os.path.abspath(args.run),
        "mode": args.mode,
    }
    _write_run_record(out, "fingerprint", config, run_record.get("seed"), ["fingerprints.csv"], t0)
    print(f"wrote fingerprints for {len(records)} visits to {out / 'fingerprints.csv'}")
    return 0


def _cmd_baseline(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = _CLI_KIND_MAP[args.kind]
    records = load_dataset(Path(args.data))
    folds = make_subject_folds([r.subject_id for r in records], args.folds, args.seed)
    results = baseline_pipeline(
        records, kind, folds,
        n_components=args.n_components,
        variance_threshold=args.variance_threshold,
        seed=args.seed,
    )
    reps, fold_of = out_of_fold_matrix(results, len(records))
    _write_representations(
        out / "representations.csv",
        [(r.subject_id, r.visit) for r in records],
        fold_of,
        [kind] * len(records),
        reps,
    )
    config = {
        "kind": args.kind, "data": os.path.abspath(args.data),
        "n_components": args.n_components, "variance_threshold": args.variance_threshold,
        "seed": args.seed, "folds": args.folds,
    }
    _write_run_record(out, "baseline", config, args.seed, ["representations.csv"], t0)
    print(f"wrote {kind} representations to {out / 'representations.csv'}")
    return 0


def _cmd_evaluate_similarity(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys, _, values = _read_representations(Path(args.representations))
    report = similarity_analysis(values, [s for s, _ in keys])
    _write_csv(
        out / "similarity_matrix.csv",
        [f"v{i + 1}" for i in range(values.shape[0])],
        report.matrix,
    )
    hist_rows = [
        [report.bin_edges[i], report.bin_edges[i + 1], int(report.intra_counts[i]),
         int(report.inter_counts[i])]
        for i in range(len(report.intra_counts))
    ]
    _write_csv(out / "histogram.csv", ["bin_left", "bin_right", "intra_count", "inter_count"], hist_rows)
    metrics = {
        "n_intra_pairs": int(report.intra.size),
        "n_inter_pairs": int(report.inter.size),
        "wasserstein": report.wasserstein,
        "mwu_u": None if report.mwu is None else report.mwu.u,
        "mwu_p": None if report.mwu is None else report.mwu.p_value,
        "mwu_degenerate": None if report.mwu is None else report.mwu.degenerate,
        "intra_mean": None if report.intra.size == 0 else float(report.intra.mean()),
        "inter_mean": float(report.inter.mean()),
    }
    _write_json(out / "metrics.json", metrics)
    config = {"representations": os.path.abspath(args.representations)}
    _write_run_record(
        out, "evaluate similarity", config, None,
        ["similarity_matrix.csv", "histogram.csv", "metrics.json"], t0,
    )
    print(f"similarity metrics written to {out / 'metrics.json'}")
    return 0


def _join_labels(keys, data_dir: Path, task: str) -> np.ndarray:
    labels = load_labels(data_dir, task=task)
    missing = [k for k in keys if k not in labels]
    if missing:
        raise DataValidationError(
            f"labels.csv has no {task!r} entry for (subject, visit) {missing[0]}"
        )
    return np.array([labels[k] for k in keys], dtype=np.int64)


def _folds_from_column(fold_of: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(fold_of == f) for f in np.unique(fold_of)]


def _cmd_evaluate_classify(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys, fold_of, values = _read_representations(Path(args.representations))
    y = _join_labels(keys, Path(args.data), args.task)
    baccs = cross_validated_bacc(
        values, y, _folds_from_column(fold_of),
        seed=args.seed, repeats=args.repeats, epochs=args.epochs,
    )
    metrics = {
        "task": args.task,
        "repeats": args.repeats,
        "bacc_mean": float(baccs.mean()),
        "bacc_sd": float(baccs.std(ddof=1)) if args.repeats > 1 else 0.0,
        "bacc_per_seed": [float(b) for b in baccs],
    }
    _write_json(out / "metrics.json", metrics)
    config = {
        "representations": os.path.abspath(args.representations),
        "data": os.path.abspath(args.data), "task": args.task,
        "repeats": args.repeats, "epochs": args.epochs, "seed": args.seed,
    }
    _write_run_record(out, "evaluate classify", config, args.seed, ["metrics.json"], t0)
    print(f"balanced accuracy {metrics['bacc_mean']:.4f} +/- {metrics['bacc_sd']:.4f} "
          f"({args.repeats} seeds) written to {out / 'metrics.json'}")
    return 0


def _cmd_evaluate_attribute(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys, fold_of, values = _read_representations(Path(args.representations))
    y = _join_labels(keys, Path(args.data), args.task)
    d = values.shape[1]
    all_idx = np.arange(values.shape[0])
    rows = []
    abs_sum = np.zeros(d)
    for fold_idx, test in enumerate(_folds_from_column(fold_of)):
        train = np.setdiff1d(all_idx, test)
        clf = train_mlp(values[train], y[train], seed=args.seed, epochs=args.epochs)
        baseline = values[train].mean(axis=0)
        for i in test:
            report = shapley_attribution(clf, values[i], baseline)
            rows.append([keys[i][0], keys[i][1], fold_idx] + [v for v in report.values])
            abs_sum += np.abs(report.values)
    _write_csv(
        out / "attribution.csv",
        ["subject_id", "visit", "fold"] + [f"shap_{i + 1}" for i in range(d)],
        rows,
    )
    mean_abs = abs_sum / len(rows)
    order = np.argsort(-mean_abs, kind="stable")
    _write_csv(
        out / "attribution_summary.csv",
        ["rank", "feature", "mean_abs_shapley"],
        [[rank + 1, int(idx) + 1, mean_abs[idx]] for rank, idx in enumerate(order)],
    )
    metrics = {"top_features": [int(i) + 1 for i in order[:5]],
               "mean_abs_shapley": [float(v) for v in mean_abs]}
    _write_json(out / "metrics.json", metrics)
    config = {
        "representations": os.path.abspath(args.representations),
        "data": os.path.abspath(args.data), "task": args.task,
        "epochs": args.epochs, "seed": args.seed,
    }
    _write_run_record(
        out, "evaluate attribute", config, args.seed,
        ["attribution.csv", "attribution_summary.csv", "metrics.json"], t0,
    )
    print(f"attribution tables written to {out}")
    return 0


def _cmd_evaluate_interpret(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        components = [int(c) for c in args.components.split(",") if c != ""]
    except ValueError:
        raise DataValidationError(
            f"--components must be comma-separated integers, got {args.components!r}"
        ) from None
    run_record = _load_run_record(Path(args.run))
    train_cfg = run_record["config"]
    records = load_dataset(Path(args.data))
    folds = make_subject_folds(
        [r.subject_id for r in records], int(train_cfg["folds"]), int(train_cfg["seed"])
    )
    if not 0 <= args.fold < len(folds):
        raise DataValidationError(f"--fold must lie in [0, {len(folds)})")
    model = load_model(Path(args.run) / f"fold_{args.fold}.cgmodel")
    held_out = set(folds[args.fold].tolist())
    train_records = [r for i, r in enumerate(records) if i not in held_out]
    tables = interpret_components(model, train_records, components)
    _write_csv(
        out / "cognitive_loadings.csv",
        ["component", "rank", "cognitive_index", "abs_loading", "loading"],
        tables.cognitive_loadings,
    )
    _write_csv(
        out / "edge_importance.csv",
        ["component", "rank", "node_p", "node_q", "importance"],
        tables.edge_importance,
    )
    config = {
        "data": os.path.abspath(args.data), "run": os.path.abspath(args.run),
        "components": args.components, "fold": args.fold,
    }
    _write_run_record(
        out, "evaluate interpret", config, None,
        ["cognitive_loadings.csv", "edge_importance.csv"], t0,
    )
    print(f"interpretation tables written to {out}")
    return 0


def _cmd_report(args) -> int:
    t0 = time.monotonic()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    collected = {}
    for root in args.dirs:
        root_path = Path(root)
        if not root_path.is_dir():
            raise FileNotFoundError(f"not a directory: {root_path}")
        for metrics in sorted(root_path.rglob("metrics.json")):
            collected[str(metrics.parent)] = json.loads(metrics.read_text())
    _write_json(out / "report.json", collected)
    config = {"dirs": [os.path.abspath(d) for d in args.dirs]}
    _write_run_record(out, "report", config, None, ["report.json"], t0)
    print(f"aggregated {len(collected)} metrics files into {out / 'report.json'}")
    return 0


_DISPATCH = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "fingerprint": _cmd_fingerprint,
    "baseline": _cmd_baseline,
    "report": _cmd_report,
}

_EVALUATE_DISPATCH = {
    "similarity": _cmd_evaluate_similarity,
    "classify": _cmd_evaluate_classify,
    "attribute": _cmd_evaluate_attribute,
    "interpret": _cmd_evaluate_interpret,
}


def _error(code: int, message) -> None:
    text = " ".join(str(message).split())
    print(f"cograca: error[{code}]: {text}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.command is None:
        parser.print_help()
        return 2
    if args.command == "evaluate" and args.evaluate_command is None:
        parser._cograca_subparsers["evaluate"].print_help()
        return 2
    env_seed = os.environ.get("COGRACA_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            _error(2, f"COGRACA_SEED must be an integer, got {env_seed!r}")
            return 2
    try:
        if args.command == "evaluate":
            return _EVALUATE_DISPATCH[args.evaluate_command](args)
        return _DISPATCH[args.command](args)
    except FileNotFoundError as exc:
        _error(3, exc)
        return 3
    except NonFiniteLossError as exc:
        _error(5, exc)
        return 5
    except (DataValidationError, ValueError) as exc:
        _error(4, exc)
        return 4
    except Exception as exc:  # keep the contract: one line, nonzero exit
        _error(1, f"{type(exc).__name__}: {exc}")
        return 1


def entry_point() -> None:
    sys.exit(main())
