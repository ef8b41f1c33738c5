"""Command-line pipeline: synth/ingest -> impute -> calibrate -> train/sweep -> eval -> compare.

Every command records its inputs and outputs (with sha256 hashes) in
``<out-dir>/manifest.json``. Exit status is 0 on success, 2 for bad input and
1 for internal failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, data, impute, metrics, privacy, train
from .model import predict_logits, save_checkpoint

log = logging.getLogger("fusiondp")

SPLITS = ("support", "train", "val", "test")
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad arguments or inputs; maps to exit status 2."""


# ---------------------------------------------------------------- manifest


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path: Path, root: Path) -> str:
    try:
        return str(path.resolve().relative_to(root.resolve()))
    except ValueError:
        return str(path.resolve())


def record_stage(out_dir: Path, stage: str, args: dict, inputs: list[Path], outputs: list[Path],
                 extra: dict | None = None) -> None:
    """Append one stage entry to the manifest, replacing an earlier entry of the same stage and outputs."""
    path = out_dir / MANIFEST
    doc = json.loads(path.read_text()) if path.exists() else {"tool": "fusiondp", "version": __version__, "stages": []}
    entry = {
        "stage": stage,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "args": args,
        "inputs": {_rel(p, out_dir): sha256(p) for p in inputs},
        "outputs": {_rel(p, out_dir): sha256(p) for p in outputs},
    }
    if extra:
        entry.update(extra)
    doc["stages"] = [
        s for s in doc["stages"] if not (s["stage"] == stage and set(s["outputs"]) == set(entry["outputs"]))
    ]
    doc["stages"].append(entry)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def verify_manifest(out_dir: Path) -> list[str]:
    """Paths whose current hash differs from the manifest (missing files included)."""
    doc = json.loads((out_dir / MANIFEST).read_text())
    bad = []
    for stage in doc["stages"]:
        for rel, digest in {**stage["inputs"], **stage["outputs"]}.items():
            p = Path(rel) if Path(rel).is_absolute() else out_dir / rel
            if not p.exists() or sha256(p) != digest:
                bad.append(rel)
    return sorted(set(bad))


def _jsonable_args(ns: argparse.Namespace) -> dict:
    return {k: str(v) if isinstance(v, Path) else v for k, v in sorted(vars(ns).items()) if k != "func"}


# ---------------------------------------------------------------- data stages


def _split_path(d: Path, name: str) -> Path:
    return d / f"{name}.ds"


def _hybrid_path(d: Path, name: str) -> Path:
    return d / f"hybrid_{name}.ds"


def _write_splits(out: Path, ds: data.Dataset, args) -> list[Path]:
    spec = data.SplitSpec(*args.split)
    parts = data.split(ds, spec, args.seed)
    st = data.fit_standardization(parts[0])
    paths = []
    for name, part in zip(SPLITS, parts):
        p = _split_path(out, name)
        data.save_dataset(data.standardize(part, st), p)
        paths.append(p)
    schema_path = out / "schema.json"
    ds.schema.save(schema_path)
    return paths + [schema_path]


def cmd_synth(args) -> int:
    out = args.out_dir
    schema = data.FeatureSchema.load(args.schema) if args.schema else data.default_schema()
    ds = data.generate_synthetic(args.n, schema, coupling=args.coupling, rng_seed=args.seed,
                                 prevalence=args.prevalence)
    outputs = _write_splits(out, ds, args)
    record_stage(out, "synth", _jsonable_args(args), [args.schema] if args.schema else [], outputs,
                 {"rows": ds.n, "prevalence": ds.prevalence()})
    print(f"wrote {len(SPLITS)} splits ({ds.n} rows, prevalence {ds.prevalence():.4f}) to {out}")
    return 0


def cmd_ingest(args) -> int:
    out = args.out_dir
    schema = data.FeatureSchema.load(args.schema)
    raw = data.load_csv(args.csv, schema, training=True, patient_column=args.patient_column)
    ds = data.preprocess(raw, args.missing_threshold, args.target_prevalence, args.seed)
    outputs = _write_splits(out, ds, args)
    record_stage(out, "ingest", _jsonable_args(args), [args.csv, args.schema], outputs,
                 {"rows": ds.n, "columns": ds.d, "prevalence": ds.prevalence()})
    print(f"ingested {raw.n} rows -> {ds.n} rows x {ds.d} columns, prevalence {ds.prevalence():.4f}")
    return 0


def _parse_external(files: list[str]) -> dict[str, Path]:
    mapping = {}
    for item in files:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = "train", item
        if name not in SPLITS[1:]:
            raise UsageError(f"--file split must be one of {SPLITS[1:]}, got {name!r}")
        mapping[name] = Path(path)
    return mapping


def cmd_impute(args) -> int:
    kind = {"external": "external_file"}.get(args.kind, args.kind)
    if kind == "identity_test_only" and not args.allow_test_imputer:
        raise UsageError("the identity imputer copies private values; pass --allow-test-imputer to use it in tests")
    data_dir, out = args.data_dir or args.out_dir, args.out_dir
    targets = [s.strip() for s in args.splits.split(",") if s.strip()]
    bad = [t for t in targets if t not in SPLITS[1:]]
    if bad:
        raise UsageError(f"unknown target splits {bad}")
    external = _parse_external(args.file or [])
    if kind == "external_file":
        missing = [t for t in targets if t not in external]
        if missing:
            raise UsageError(f"external imputer needs --file SPLIT=PATH for {missing}")

    support_path = _split_path(data_dir, "support")
    support = data.load_dataset(support_path)
    fitted = impute.fit(impute.Imputer(kind, k=args.k, allow_test_imputer=args.allow_test_imputer), support)
    inputs, outputs, audit = [support_path], [], {}
    for name in targets:
        src = _split_path(data_dir, name)
        view = data.AuditedView(data.load_dataset(src), name)
        imp = replace(fitted, path=str(external[name])) if kind == "external_file" else fitted
        hybrid = impute.impute(imp, view)
        if kind != "identity_test_only" and view.private_reads:
            raise RuntimeError(f"imputation read {view.private_reads} private rows of {name}")
        audit[name] = {"private_reads": view.private_reads, "public_reads": view.public_reads}
        dst = _hybrid_path(out, name)
        impute.save_hybrid(hybrid, dst)
        inputs.append(src)
        outputs.append(dst)
        if kind == "external_file":
            inputs.append(external[name])
        if args.export_csv:
            csv_path = out / f"hybrid_{name}.csv"
            impute.export_hybrid_csv(hybrid, csv_path)
            outputs.append(csv_path)
    record_stage(out, "impute", _jsonable_args(args), inputs, outputs,
                 {"provenance": fitted.provenance(), "audit": audit})
    print(f"imputed {', '.join(targets)} with {kind}")
    return 0


# ---------------------------------------------------------------- privacy


def cmd_calibrate(args) -> int:
    if args.closed_form:
        need = {"tau": args.tau, "m": args.m, "n": args.n, "steps": args.steps, "delta": args.delta}
        missing = [k for k, v in need.items() if v is None]
        if missing:
            raise UsageError(f"closed-form calibration needs --{' --'.join(missing)}")
        sigma = privacy.calibrate_sigma_closed_form(args.epsilon, args.delta, args.tau, args.m, args.n,
                                                    args.steps, args.c)
        detail = {"route": "closed_form", "tau": args.tau, "m": args.m, "n": args.n, "c": args.c}
    else:
        if args.p is None or args.steps is None:
            raise UsageError("accountant calibration needs --p and --steps")
        delta = args.delta
        if delta is None:
            if args.n is None:
                raise UsageError("pass --delta or --n (delta defaults to n^-1.1)")
            delta = privacy.PrivacyBudget.default_delta(args.n)
        sigma = privacy.calibrate_sigma_accountant(args.epsilon, delta, args.p, args.steps)
        detail = {"route": "accountant", "p": args.p, "delta": delta,
                  "achieved_epsilon": privacy.rdp_epsilon(sigma, args.p, args.steps, delta)}
    print(f"sigma = {sigma!r}")
    out = args.out_dir
    doc = {"epsilon": args.epsilon, "steps": args.steps, "sigma": sigma, **detail}
    result_path = out / "calibration.json"
    result_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    outputs, inputs = [result_path], []
    if args.config:
        cfg_doc = json.loads(Path(args.config).read_text())
        cfg_doc.update({"sigma": sigma, "epsilon": args.epsilon})
        train.TrainConfig.from_dict(cfg_doc)
        cfg_path = out / "config.json"
        cfg_path.write_text(json.dumps(cfg_doc, indent=2, sort_keys=True) + "\n")
        inputs.append(Path(args.config))
        outputs.append(cfg_path)
    record_stage(out, "calibrate", _jsonable_args(args), inputs, outputs)
    return 0


# ---------------------------------------------------------------- training


CONFIG_FLAGS = {
    "method": str, "epochs": int, "lr": float, "lr_schedule": str, "lr_decay": float, "lr_step_epochs": int,
    "clip": float, "epsilon": float, "delta": float, "sigma": float, "calibration": str,
    "closed_form_c": float, "sample_rate": float, "private_batch_size": int, "public_batch_size": int,
    "alpha": float, "beta": float, "lam": float, "dropout": float,
}


def _load_splits(data_dir: Path, hybrid_dir: Path, need_hybrid: bool):
    paths = [_split_path(data_dir, s) for s in SPLITS]
    splits = train.Splits(*(data.load_dataset(p) for p in paths))
    hybrid = None
    hpaths = [_hybrid_path(hybrid_dir, s) for s in ("train", "val")]
    if need_hybrid or all(p.exists() for p in hpaths):
        if not all(p.exists() for p in hpaths):
            raise UsageError(f"hybrid files not found in {hybrid_dir}; run `impute` first")
        parts = [impute.load_hybrid(p) for p in hpaths]
        for p, h in zip(hpaths, parts):
            if h.provenance.get("kind") == "identity_test_only":
                raise UsageError(f"{p} was built by the identity imputer and would leak private values")
        hybrid = train.HybridSplits(*parts)
        paths += hpaths
    return splits, hybrid, paths


def _config_from_args(args) -> train.TrainConfig:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in CONFIG_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    doc["seed"] = args.seed
    if "hidden" in doc:
        doc["hidden"] = tuple(doc["hidden"])
    return train.TrainConfig.from_dict(doc)


def result_name(r: train.RunResult) -> str:
    eps = "none" if r.epsilon is None else repr(r.epsilon)
    return f"{r.method}_eps{eps}_seed{r.seed}"


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    data_dir = args.data_dir or args.out_dir
    needs_hybrid = "hybrid" in (cfg.spec.public_data, cfg.spec.private_reference)
    splits, hybrid, inputs = _load_splits(data_dir, args.hybrid_dir or data_dir, needs_hybrid)
    result, model = train.train_model(splits, hybrid, cfg)
    out = args.out_dir
    stem = result_name(result)
    res_path = out / f"{stem}.json"
    res_path.write_text(result.to_json())
    outputs = [res_path]
    if args.save_model:
        ckpt = out / f"{stem}.model.json"
        save_checkpoint(model, ckpt)
        outputs.append(ckpt)
    if args.save_scores:
        scores_path = out / f"{stem}.scores.csv"
        write_scores_csv(predict_logits(model, splits.test.schema.encode(splits.test.features)),
                         splits.test.labels, scores_path)
        outputs.append(scores_path)
    record_stage(out, "train", _jsonable_args(args), inputs + ([Path(args.config)] if args.config else []),
                 outputs, {"wall_clock_seconds": round(result.wall_clock, 3)})
    print(f"{result.method}: val AUPRC {result.val_auprc:.4f}, test AUPRC {result.test_auprc:.4f}, "
          f"test AUROC {result.test['auroc']:.4f}, epsilon {result.achieved_epsilon:.4g}")
    return 0


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise UsageError("--seeds is empty")
    return seeds


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"{flag} must be comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    if args.grid:
        grid = json.loads(Path(args.grid).read_text())
        if isinstance(grid, dict):
            grid = [grid]
    else:
        methods = [m.strip() for m in args.methods.split(",")] if args.methods else None
        epsilons = _floats(args.epsilons, "--epsilons") if args.epsilons else None
        lrs = _floats(args.lrs, "--lrs") if args.lrs else list(train.DEFAULT_LRS)
        grid = train.default_grid(methods, epsilons, lrs)
    base = json.loads(Path(args.config).read_text()) if args.config else None
    configs = train.expand_grid(grid, base)
    seeds = _seeds(args.seeds) if args.seeds else [args.seed]
    needs_hybrid = any("hybrid" in (c.spec.public_data, c.spec.private_reference) for c in configs)
    data_dir = args.data_dir or args.out_dir
    splits, hybrid, inputs = _load_splits(data_dir, args.hybrid_dir or data_dir, needs_hybrid)

    result = train.grid_search(splits, hybrid, grid, seeds, base, args.jobs)
    out = args.out_dir
    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    outputs = []
    names: dict[str, int] = {}
    for r in result.runs:
        stem = result_name(r)
        names[stem] = names.get(stem, 0) + 1
        path = runs_dir / (stem + (f"_cfg{names[stem] - 1}" if names[stem] > 1 else "") + ".json")
        path.write_text(r.to_json())
        outputs.append(path)
    sweep_path, best_path = out / "sweep.csv", out / "best.csv"
    train.write_sweep_csv(result.rows(), sweep_path)
    train.write_sweep_csv(result.rows(selected_only=True), best_path)
    outputs += [sweep_path, best_path]
    record_stage(out, "sweep", _jsonable_args(args), inputs, outputs,
                 {"wall_clock_seconds": round(sum(r.wall_clock for r in result.runs), 3)})
    print(f"{len(result.runs)} runs; sweep table in {sweep_path}, selected runs in {best_path}")
    return 0


# ---------------------------------------------------------------- evaluation


def write_scores_csv(scores: np.ndarray, labels: np.ndarray, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "score", "label"])
        for i, (s, y) in enumerate(zip(scores, labels)):
            w.writerow([i, repr(float(s)), int(y)])


def read_scores_csv(path: Path) -> metrics.ScoredPredictions:
    if not path.exists():
        raise UsageError(f"scores file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "score", "label"} <= set(reader.fieldnames):
            raise UsageError(f"{path}: header must contain id, score, label")
        scores, labels = [], []
        for r, row in enumerate(reader):
            try:
                scores.append(float(row["score"]))
                labels.append(float(row["label"]))
            except (TypeError, ValueError):
                raise UsageError(f"{path}: row {r} has a non-numeric score or label") from None
    return metrics.ScoredPredictions(np.array(scores), np.array(labels))


def cmd_eval(args) -> int:
    preds = read_scores_csv(Path(args.scores))
    doc = {"auprc": metrics.auprc(preds), "auroc": metrics.auroc(preds),
           **metrics.classification_report(preds, threshold=args.threshold), "n": int(preds.labels.size)}
    out = args.out_dir
    path = out / "eval.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    record_stage(out, "eval", _jsonable_args(args), [Path(args.scores)], [path])
    for k in ("auprc", "auroc", "precision", "recall", "f1", "accuracy"):
        print(f"{k:10s} {doc[k]:.6f}")
    return 0


def read_sweep_rows(paths: list[Path]) -> list[dict]:
    """Union of sweep CSV rows; identical duplicates collapse, conflicting ones are an error."""
    seen: dict[tuple, dict] = {}
    for path in paths:
        if not path.exists():
            raise UsageError(f"sweep file not found: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(train.SWEEP_COLUMNS) - set(reader.fieldnames or [])
            if missing:
                raise UsageError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                key = tuple(row[c] for c in ("method", "epsilon", "epochs", "lr", "C", "alpha", "beta", "lambda", "seed"))
                if key in seen and seen[key] != row:
                    raise UsageError(f"{path}: conflicting results for {key}")
                seen[key] = row
    return list(seen.values())


def select_rows(rows: list[dict]) -> dict[tuple[str, str], dict[int, dict]]:
    """Per (method, epsilon): rows of the config with the best seed-mean validation AUPRC, keyed by seed."""
    groups: dict[tuple, dict[tuple, list[dict]]] = {}
    for r in rows:
        cfg = tuple(r[c] for c in ("epochs", "lr", "C", "alpha", "beta", "lambda"))
        groups.setdefault((r["method"], r["epsilon"]), {}).setdefault(cfg, []).append(r)
    out = {}
    for cell, by_cfg in groups.items():
        best = max(by_cfg.values(), key=lambda rs: float(np.mean([float(r["val_auprc"]) for r in rs])))
        out[cell] = {int(r["seed"]): r for r in best}
    return out


def compare_sweeps(rows: list[dict], metric: str, reference: str) -> dict:
    cells = select_rows(rows)
    methods = sorted({m for m, _ in cells})
    epsilons = sorted({e for _, e in cells if e != ""}, key=float)
    table = []
    for (m, e), by_seed in sorted(cells.items(), key=lambda kv: (kv[0][0], -1.0 if kv[0][1] == "" else float(kv[0][1]))):
        vals = np.array([float(by_seed[s][metric]) for s in sorted(by_seed)])
        table.append({"epsilon": e, "method": m, "mean": float(vals.mean()),
                      "stddev": float(vals.std(ddof=1)) if vals.size > 1 else 0.0, "n_seeds": int(vals.size)})
    if reference not in methods:
        raise UsageError(f"reference method {reference!r} not present in the sweeps")

    tests = []
    for other in methods:
        if other == reference:
            continue
        for eps in epsilons + ["pooled"]:
            pairs_a, pairs_b = [], []
            eps_list = epsilons if eps == "pooled" else [eps]
            for e in eps_list:
                ref = cells.get((reference, e))
                # non-private baselines carry no epsilon; pair them with every level
                base = cells.get((other, e)) or cells.get((other, ""))
                if ref is None or base is None:
                    continue
                if set(ref) != set(base):
                    raise UsageError(f"seed mismatch between {reference} and {other} at epsilon {e}")
                for s in sorted(ref):
                    pairs_a.append(float(ref[s][metric]))
                    pairs_b.append(float(base[s][metric]))
            if not pairs_a:
                continue
            entry = {"reference": reference, "baseline": other, "epsilon": eps, "n_pairs": len(pairs_a),
                     "p_value": None}
            try:
                entry["p_value"] = metrics.wilcoxon_signed_rank(pairs_a, pairs_b, "greater")
            except metrics.MetricError as exc:
                entry["error"] = str(exc)
            tests.append(entry)
    return {"metric": metric, "table": table, "tests": tests}


def cmd_compare(args) -> int:
    paths = [Path(p) for p in args.sweeps]
    rows = read_sweep_rows(paths)
    metric = args.metric
    if metric not in ("test_auprc", "test_auroc", "val_auprc"):
        raise UsageError(f"unsupported metric {metric!r}")
    doc = compare_sweeps(rows, metric, args.reference)
    if doc["tests"] and all(t["p_value"] is None for t in doc["tests"]):
        raise UsageError("no comparison was testable: " + "; ".join(sorted({t["error"] for t in doc["tests"]})))
    out = args.out_dir
    cmp_path, plot_path = out / "comparison.json", out / "plot_data.csv"
    cmp_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with plot_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "method", f"mean_{metric}", "stddev"])
        for row in doc["table"]:
            w.writerow([row["epsilon"], row["method"], repr(row["mean"]), repr(row["stddev"])])
    record_stage(out, "compare", _jsonable_args(args), paths, [cmp_path, plot_path])
    print(f"{'epsilon':>8} {'method':20s} {'mean':>8} {'std':>8}")
    for row in doc["table"]:
        print(f"{row['epsilon'] or '-':>8} {row['method']:20s} {row['mean']:8.4f} {row['stddev']:8.4f}")
    for t in doc["tests"]:
        p = "n/a (" + t["error"] + ")" if t["p_value"] is None else f"{t['p_value']:.5f}"
        print(f"{t['reference']} > {t['baseline']} at epsilon {t['epsilon']}: p = {p}")
    return 0


# ---------------------------------------------------------------- parser


def _split_spec(text: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected four comma-separated fractions") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated fractions")
    return parts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory (default .)")
    common.add_argument("--config", help="JSON document with TrainConfig fields")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fusiondp", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset and split it")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--coupling", type=float, default=0.8)
    p.add_argument("--prevalence", type=float, default=0.15)
    p.add_argument("--schema", type=Path)
    p.add_argument("--split", type=_split_spec, default=(0.1, 0.7, 0.1, 0.1))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="load, preprocess and split a CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--schema", type=Path, required=True)
    p.add_argument("--patient-column")
    p.add_argument("--missing-threshold", type=float, default=0.70)
    p.add_argument("--target-prevalence", type=float, default=0.15)
    p.add_argument("--split", type=_split_spec, default=(0.1, 0.7, 0.1, 0.1))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("impute", parents=[common], help="build hybrid train/val splits")
    p.add_argument("--kind", choices=["mean_mode", "knn", "external", "identity_test_only"], default="knn")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--file", action="append", help="external imputations, SPLIT=PATH (bare PATH means train)")
    p.add_argument("--splits", default="train,val")
    p.add_argument("--data-dir", type=Path)
    p.add_argument("--export-csv", action="store_true")
    p.add_argument("--allow-test-imputer", action="store_true")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("calibrate", parents=[common], help="noise multiplier for a privacy budget")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--p", type=float, help="Poisson sampling rate")
    p.add_argument("--steps", type=int)
    p.add_argument("--closed-form", action="store_true")
    p.add_argument("--tau", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=float, default=1.0)
    p.set_defaults(func=cmd_calibrate)

    for name, helptext, func in (("train", "train one configuration", cmd_train),
                                 ("sweep", "grid search over configurations", cmd_sweep)):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data-dir", type=Path)
        p.add_argument("--hybrid-dir", type=Path)
        if name == "train":
            for key, typ in CONFIG_FLAGS.items():
                p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
            p.add_argument("--save-model", action="store_true", help="write the selected checkpoint")
            p.add_argument("--save-scores", action="store_true", help="write test-split logits for `eval`")
        else:
            p.add_argument("--grid", type=Path, help="JSON list of cells mapping config fields to value lists")
            p.add_argument("--methods", help="comma-separated methods for the default grid")
            p.add_argument("--epsilons", help="comma-separated epsilons for the default grid")
            p.add_argument("--lrs", help="comma-separated learning rates for the default grid (default 0.05,0.1,0.2)")
            p.add_argument("--seeds", help="comma-separated run seeds (default: --seed)")
            p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[common], help="metrics for a scores CSV (id,score,label)")
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="compare methods across sweeps")
    p.add_argument("sweeps", nargs="+")
    p.add_argument("--metric", default="test_auprc")
    p.add_argument("--reference", default="fusiondp")
    p.set_defaults(func=cmd_compare)
    return parser


USER_ERRORS = (UsageError, data.DataError, train.ConfigError, privacy.CalibrationError, metrics.MetricError,
               FileNotFoundError, json.JSONDecodeError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except train.TrainError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
