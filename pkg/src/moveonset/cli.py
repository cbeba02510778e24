"""Command-line entry point for dataset generation, runs, stats and reports."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .data import (Dataset, DatasetError, SynthConfig, generate_synthetic,
                   load_dataset, write_dataset)
from .ensemble import METHOD_MEMBERS
from .evaluation import RunResult, evaluate_fold, make_folds
from .nets import TrainingError
from .pipeline import FoldModels
from .serialize import save_model
from .stats import bonferroni, friedman_test, wilcoxon_signed_rank

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

RESULT_FIELDS = ("subject", "fold", "method", "n_windows", "metric", "value")
OUTCOME_FIELDS = ("subject", "fold", "method", "n_windows", "trial_id",
                  "outcome", "detection_time")


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_CONFIG):
        super().__init__(message)
        self.exit_code = exit_code


def fingerprint_config(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _load_data(args) -> Dataset:
    if args.data is not None:
        try:
            dataset = load_dataset(args.data)
        except (DatasetError, OSError) as exc:
            raise CliError(f"failed to load dataset: {exc}", EXIT_DATA)
    elif args.synth is not None:
        dataset = generate_synthetic(SynthConfig(n_trials=args.synth,
                                                 seed=args.seed))
    else:
        raise CliError("one of --data or --synth is required")
    if args.subjects:
        wanted = set(args.subjects.split(","))
        subjects = [s for s in dataset.subjects if s.subject_id in wanted]
        if not subjects:
            raise CliError(f"no subjects match {sorted(wanted)}", EXIT_DATA)
        dataset = Dataset(subjects=subjects, channel_set=dataset.channel_set,
                          fs=dataset.fs)
    return dataset


def _parse_methods(spec: str) -> list[str]:
    methods = [m.strip() for m in spec.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_MEMBERS:
            raise CliError(f"unknown method {m!r}; choose from "
                           f"{sorted(METHOD_MEMBERS)}")
    return methods


def _prepare_out(args, config: dict) -> tuple[Path, str]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fp = fingerprint_config(config)
    manifest_path = out / "run-manifest.json"
    if manifest_path.exists() and not args.overwrite:
        raise CliError(f"{manifest_path} exists; pass --overwrite to replace it")
    manifest_path.write_text(json.dumps(
        {"tool": "moveonset", "version": __version__,
         "fingerprint": fp, "config": config}, indent=2, sort_keys=True) + "\n")
    return out, fp


def _write_csv(path: Path, fields, rows, fingerprint: str) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# fingerprint={fingerprint}\n")
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _run_folds(dataset: Dataset, methods, n_windows_list, seed: int,
               jobs: int, save_models_to: Path | None = None) -> RunResult:
    tasks = []
    for subject in dataset.subjects:
        for fold in make_folds(subject, seed=seed):
            tasks.append((subject.subject_id, fold))

    def work(task):
        subject_id, fold = task
        try:
            models = FoldModels.train(list(fold.train_trials),
                                      list(fold.val_trials), seed=seed)
        except TrainingError as exc:
            raise CliError(f"training failed for subject {subject_id} "
                           f"fold {fold.fold_id}: {exc}", EXIT_TRAINING)
        partial = RunResult()
        evaluate_fold(models, fold, subject_id, methods, n_windows_list, partial)
        if save_models_to is not None:
            mdir = save_models_to / f"{subject_id}_fold{fold.fold_id}"
            mdir.mkdir(parents=True, exist_ok=True)
            meta = {"subject": subject_id, "fold": fold.fold_id, "seed": seed}
            save_model(mdir / "svm.bin", models.svm, meta)
            save_model(mdir / "mlp.bin", models.mlp, meta)
            save_model(mdir / "eegnet.bin", models.eegnet, meta)
            save_model(mdir / "dummy.bin", models.dummy, meta)
        return subject_id, fold.fold_id, partial

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            partials = list(pool.map(work, tasks))
    else:
        partials = [work(t) for t in tasks]

    result = RunResult()
    for _, _, partial in sorted(partials, key=lambda p: (p[0], p[1])):
        result.results.extend(partial.results)
        result.outcomes.extend(partial.outcomes)
        result.fingerprints.update(partial.fingerprints)
    return result


def cmd_synth(args) -> int:
    config = {"mode": "synth", "trials": args.trials, "seed": args.seed}
    out, fp = _prepare_out(args, config)
    dataset = generate_synthetic(SynthConfig(n_trials=args.trials,
                                             seed=args.seed))
    write_dataset(dataset, out / "dataset")
    print(f"wrote synthetic dataset ({args.trials} trials, seed {args.seed}) "
          f"to {out / 'dataset'} [fingerprint {fp}]")
    return 0


def _matrix_like(args, mode: str, offline_only=False, pseudo_only=False,
                 save_models=False) -> int:
    methods = _parse_methods(args.methods)
    n_windows_list = [] if offline_only else \
        [int(w) for w in str(args.windows).split(",")]
    for n in n_windows_list:
        if n not in (1, 2, 3):
            raise CliError(f"n_windows must be in 1..3, got {n}")
    config = {"mode": mode, "data": args.data, "synth": args.synth,
              "subjects": args.subjects, "methods": methods,
              "windows": n_windows_list, "seed": args.seed}
    out, fp = _prepare_out(args, config)
    dataset = _load_data(args)
    models_dir = out / "models" if save_models else None
    result = _run_folds(dataset, methods, n_windows_list, args.seed,
                        args.jobs, models_dir)
    rows = result.results
    if pseudo_only:
        rows = [r for r in rows if r["metric"] != "accuracy"]
    _write_csv(out / "results.csv", RESULT_FIELDS, rows, fp)
    _write_csv(out / "outcomes.csv", OUTCOME_FIELDS, result.outcomes, fp)
    print(f"wrote {len(rows)} result rows to {out / 'results.csv'} "
          f"[fingerprint {fp}]")
    return 0


def cmd_stats(args) -> int:
    results_path = Path(args.out) / "results.csv"
    if args.results:
        results_path = Path(args.results)
    if not results_path.is_file():
        raise CliError(f"missing results file {results_path}", EXIT_DATA)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    if len(conditions) < 2:
        raise CliError("need at least 2 conditions")

    with results_path.open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))

    def condition_values(cond: str) -> dict[tuple, float]:
        method = cond.rstrip("0123456789")
        n = cond[len(method):]
        values = {}
        for r in rows:
            if r["method"] != method or r["metric"] != args.metric:
                continue
            if args.metric != "accuracy" and r["n_windows"] != n:
                continue
            values[(r["subject"], r["fold"])] = float(r["value"])
        if not values:
            raise CliError(f"no rows for condition {cond!r} "
                           f"(metric {args.metric})", EXIT_DATA)
        return values

    per_cond = {c: condition_values(c) for c in conditions}
    keys = sorted(set.intersection(*(set(v) for v in per_cond.values())))
    if len(keys) < 2:
        raise CliError("fewer than 2 shared (subject, fold) rows", EXIT_DATA)
    matrix = np.array([[per_cond[c][k] for c in conditions] for k in keys])

    out = {"metric": args.metric, "conditions": conditions, "n_rows": len(keys)}
    if len(conditions) >= 3:
        fr = friedman_test(matrix)
        out["friedman"] = {"statistic": fr.statistic, "p_value": fr.p_value}
    pairs = []
    raw_ps = []
    for i in range(len(conditions)):
        for j in range(i + 1, len(conditions)):
            res = wilcoxon_signed_rank(matrix[:, i], matrix[:, j])
            pairs.append({"a": conditions[i], "b": conditions[j],
                          "statistic": res.statistic, "p_value": res.p_value,
                          "n": res.n})
            raw_ps.append(res.p_value)
    adjusted = bonferroni(raw_ps, len(raw_ps))
    for pair, adj in zip(pairs, adjusted):
        pair["p_bonferroni"] = adj
    out["pairwise_wilcoxon"] = pairs
    out["bonferroni_m"] = len(pairs)

    stats_path = Path(args.out) / "stats.json"
    Path(args.out).mkdir(parents=True, exist_ok=True)
    stats_path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {stats_path}")
    return 0


def cmd_report(args) -> int:
    results_path = Path(args.out) / "results.csv"
    if args.results:
        results_path = Path(args.results)
    if not results_path.is_file():
        raise CliError(f"missing results file {results_path}", EXIT_DATA)
    with results_path.open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))

    groups: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["metric"], r["method"], r["n_windows"])
        groups.setdefault(key, []).append(float(r["value"]))

    report_lines = ["# Run summary", "",
                    "| metric | method | n_windows | median | mean | n |",
                    "|---|---|---|---|---|---|"]
    for key in sorted(groups):
        vals = groups[key]
        report_lines.append(
            f"| {key[0]} | {key[1]} | {key[2] or '-'} | "
            f"{float(np.median(vals)):.4f} | {float(np.mean(vals)):.4f} | "
            f"{len(vals)} |")
    report_path = Path(args.out) / "summary.md"
    report_path.write_text("\n".join(report_lines) + "\n")
    print(f"wrote {report_path}")

    if args.svg:
        try:
            import matplotlib
            matplotlib.use("svg")
            import matplotlib.pyplot as plt
        except ImportError:
            raise CliError("matplotlib is required for --svg output")
        twp_keys = [k for k in sorted(groups) if k[0] == "twp"]
        if twp_keys:
            fig, ax = plt.subplots(figsize=(8, 4))
            labels = [f"{k[1]}{k[2]}" for k in twp_keys]
            ax.boxplot([groups[k] for k in twp_keys], tick_labels=labels)
            ax.set_ylabel("TWP")
            fig.tight_layout()
            fig.savefig(Path(args.out) / "twp.svg")
            print(f"wrote {Path(args.out) / 'twp.svg'}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="dataset root with manifest.json")
    parser.add_argument("--synth", type=int, metavar="N",
                        help="use an N-trial synthetic subject instead of --data")
    parser.add_argument("--subjects", default="",
                        help="comma-separated subject id filter")
    parser.add_argument("--methods", default=",".join(METHOD_MEMBERS),
                        help="comma-separated method names (D,S,M,E,SM,SE,ME,SME)")
    parser.add_argument("--windows", default="1,2,3",
                        help="comma-separated postprocessing window counts")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out")
    parser.add_argument("--overwrite", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moveonset",
        description="Asynchronous EEG movement-onset detection pipeline")
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--trials", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth)

    for mode, kwargs in (
            ("full-matrix", {}),
            ("train", {"save_models": True}),
            ("eval-offline", {"offline_only": True}),
            ("eval-pseudo-online", {"pseudo_only": True})):
        p = sub.add_parser(mode)
        _add_common(p)
        p.set_defaults(func=lambda a, m=mode, kw=kwargs: _matrix_like(a, m, **kw))

    p = sub.add_parser("stats", help="Friedman + pairwise Wilcoxon/Bonferroni")
    p.add_argument("--results", help="results.csv path (default: OUT/results.csv)")
    p.add_argument("--metric", default="twp",
                   choices=("twp", "edr", "ndr", "accuracy"))
    p.add_argument("--conditions", required=True,
                   help="e.g. E3,SE2,ME2,SME2 (method + n_windows)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="summarize results.csv")
    p.add_argument("--results")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(parser, argv):
    # flags win over config-file values: config only replaces parser defaults
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    config_path = Path(argv[idx + 1])
    try:
        overrides = json.loads(config_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"bad config file: {exc}")
    for action in parser._subparsers._group_actions[0].choices.values():
        valid = {a.dest for a in action._actions}
        action.set_defaults(**{k: v for k, v in overrides.items() if k in valid})
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
