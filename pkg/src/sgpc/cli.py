"""Command-line experiment harness.

``sgpc run`` sweeps the Cartesian product of partitions, selectors, site
estimators, basis budgets, working-set sizes and seeds, and appends one JSON
record per cell to ``--out``.  Cells already present in the output file are
skipped, so an interrupted sweep can be resumed with the same command.

``sgpc summarize`` groups records by dataset, method and ``d_max`` and
reports means and sample standard deviations over partitions.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataio import (
    Dataset,
    PartitionSet,
    load_dataset,
    load_partitions,
    make_banana,
    make_gaussian_mixture,
    standardize,
    synth_partitions,
)
from .evaluate import evaluate_set
from .selection import DEFAULT_KAPPA, SITE_ESTIMATORS, STRATEGIES
from .trainer import TrainConfig, train

SCHEMA_VERSION = 1
RECORD_KEYS = (
    "schema_version", "dataset", "partition", "selector", "site_estimator", "d_max",
    "kappa", "seed", "status", "test_error", "test_nlp", "train_seconds",
    "inclusions_completed", "best_outer_iter", "error",
)
CELL_KEYS = ("dataset", "partition", "selector", "site_estimator", "d_max", "kappa", "seed")
SAMPLED = ("validation", "adaptive", "uniform")
LIST_OPTIONS = ("selector", "site", "dmax", "kappa", "seed")

log = logging.getLogger("sgpc")


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _str_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, lists are comma-separated."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def cell_key(rec: dict) -> tuple:
    return tuple(rec.get(k) for k in CELL_KEYS)


def expand_cells(dataset: str, n_partitions: int, selectors, sites, dmaxes, kappas, seeds):
    """Sweep cells in a fixed order; options that do not affect a selector are normalized away."""
    seen = set()
    cells = []
    for part, sel, site, dmax, kappa, seed in itertools.product(
        range(n_partitions), selectors, sites, dmaxes, kappas or [None], seeds
    ):
        if sel in SAMPLED:
            k = kappa if kappa is not None else DEFAULT_KAPPA[sel]
        else:
            k = None
        s = site if sel in ("adaptive", "uniform") else "moment"
        cell = {"dataset": dataset, "partition": part, "selector": sel, "site_estimator": s,
                "d_max": dmax, "kappa": k, "seed": seed}
        key = cell_key(cell)
        if key not in seen:
            seen.add(key)
            cells.append(cell)
    return cells


def run_cell(cell, train_set: Dataset, test_set: Dataset, opts: dict) -> dict:
    rec = dict.fromkeys(RECORD_KEYS)
    rec.update(cell)
    rec["schema_version"] = SCHEMA_VERSION
    try:
        if opts.get("standardize"):
            train_set, test_set = standardize(train_set, test_set)
        cfg = TrainConfig(
            d_max=min(cell["d_max"], train_set.n), kappa=cell["kappa"], selector=cell["selector"],
            site_estimator=cell["site_estimator"], iter_max=opts["itermax"], tol=opts["tol"],
            seed=cell["seed"], hyper_budget=opts["hyper_budget"],
        )
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = train(train_set.X, train_set.y, cfg)
        rec["train_seconds"] = round(time.perf_counter() - t0, 4)
        err, nlp = evaluate_set(model, test_set.X, test_set.y)
        rec.update(status="ok", test_error=err, test_nlp=nlp,
                   inclusions_completed=model.size, best_outer_iter=model.best_outer_iter)
    except Exception as exc:  # recorded in-stream; the sweep continues
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec


def _run_packed(args):
    return run_cell(*args)


def _load_data(args):
    if args.synthetic:
        rng = np.random.default_rng(args.data_seed)
        maker = {"gmm": make_gaussian_mixture, "banana": make_banana}[args.synthetic]
        data = maker(args.n, rng)
        return data, None
    if not args.data:
        raise SystemExit("either --data or --synthetic is required")
    data = load_dataset(args.data, args.format)
    test = load_dataset(args.test, args.format) if args.test else None
    return data, test


def _partitions(args, data: Dataset, test: Dataset | None):
    """List of ``(train Dataset, test Dataset)`` pairs."""
    if test is not None:
        return [(data, test)]
    if args.partitions:
        parts = load_partitions(args.partitions[0], args.partitions[1], n=data.n)
    else:
        parts = synth_partitions(data.y, args.pt, args.train_frac, np.random.default_rng(args.data_seed))
    if args.pt:
        parts = PartitionSet(parts.train[: args.pt], parts.test[: args.pt])
    return [(data.subset(tr), data.subset(te)) for tr, te in parts]


def _completed(path: Path) -> set:
    done = set()
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if rec.get("status") == "ok":
                    done.add(cell_key(rec))
    return done


def cmd_run(args) -> int:
    data, test = _load_data(args)
    splits = _partitions(args, data, test)
    name = args.name or data.name
    cells = expand_cells(name, len(splits), args.selector, args.site, args.dmax, args.kappa, args.seed)
    out = Path(args.out) if args.out else None
    done = _completed(out) if out else set()
    todo = [c for c in cells if cell_key(c) not in done]
    opts = {"itermax": args.itermax, "tol": args.tol, "standardize": args.standardize,
            "hyper_budget": args.hyper_budget}
    jobs = [(c, splits[c["partition"]][0], splits[c["partition"]][1], opts) for c in todo]
    log.info("%d cells, %d already done, %d to run", len(cells), len(cells) - len(todo), len(todo))

    fh = open(out, "a", encoding="utf-8") if out else sys.stdout
    failures = 0
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = pool.map(_run_packed, jobs)
                for rec in results:
                    failures += rec["status"] != "ok"
                    fh.write(json.dumps(rec) + "\n")
                    fh.flush()
        else:
            for job in jobs:
                rec = run_cell(*job)
                failures += rec["status"] != "ok"
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
    finally:
        if out:
            fh.close()
    return 0 if failures == 0 else 1


def summarize(records) -> list[dict]:
    """Per-(dataset, method, d_max) mean and sample standard deviation."""
    groups: dict = {}
    for rec in records:
        if rec.get("status", "ok") != "ok":
            continue
        key = (rec["dataset"], rec["selector"], rec["site_estimator"], rec["kappa"], rec["d_max"])
        groups.setdefault(key, []).append(rec)
    if not groups:
        raise ValueError("no completed records to summarize")
    rows = []
    for key in sorted(groups, key=lambda k: tuple("" if v is None else str(v).zfill(8) for v in k)):
        recs = groups[key]
        row = dict(zip(("dataset", "selector", "site_estimator", "kappa", "d_max"), key))
        row["count"] = len(recs)
        for metric in ("test_error", "test_nlp"):
            vals = np.array([r[metric] for r in recs], dtype=float)
            row[f"{metric}_mean"] = float(vals.mean())
            row[f"{metric}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(row)
    return rows


def cmd_summarize(args) -> int:
    records = []
    for path in args.results:
        with open(path, encoding="utf-8") as fh:
            records.extend(json.loads(line) for line in fh if line.strip())
    for row in summarize(records):
        print(json.dumps(row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgpc", description="Sparse GP classifier experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sweep and append JSON records")
    r.add_argument("--config", help="key=value file; command-line flags take precedence")
    r.add_argument("--data", help="training (or full) dataset file")
    r.add_argument("--test", help="separate test file (single partition)")
    r.add_argument("--format", choices=("dense", "sparse"), default="dense")
    r.add_argument("--partitions", nargs=2, metavar=("TRAIN_IDX", "TEST_IDX"))
    r.add_argument("--pt", type=int, default=None, help="use only the first PT partitions")
    r.add_argument("--train-frac", type=float, default=0.5)
    r.add_argument("--synthetic", choices=("gmm", "banana"))
    r.add_argument("--n", type=int, default=1000, help="size of a synthetic dataset")
    r.add_argument("--data-seed", type=int, default=0)
    r.add_argument("--name", help="dataset name used in records")
    r.add_argument("--selector", action="append", choices=STRATEGIES)
    r.add_argument("--site", action="append", choices=SITE_ESTIMATORS)
    r.add_argument("--dmax", action="append", type=int)
    r.add_argument("--kappa", action="append", type=int)
    r.add_argument("--seed", action="append", type=int)
    r.add_argument("--itermax", type=int, default=20)
    r.add_argument("--tol", type=float, default=1e-4)
    r.add_argument("--hyper-budget", type=int, default=100)
    r.add_argument("--standardize", action="store_true")
    r.add_argument("--out", help="append records here (default: stdout)")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("summarize", help="group records and average over partitions")
    s.add_argument("results", nargs="+")
    s.set_defaults(func=cmd_summarize)
    return p


def _apply_config(args) -> None:
    if getattr(args, "config", None) is None:
        return
    conf = read_config(args.config)
    defaults = vars(build_parser().parse_args(["run"]))
    for key, val in conf.items():
        if not hasattr(args, key):
            raise SystemExit(f"unknown config key {key!r}")
        current = getattr(args, key)
        if key in LIST_OPTIONS:
            if current is None:
                conv = _str_list if key in ("selector", "site") else _int_list
                setattr(args, key, conv(val))
        elif key == "partitions":
            if current is None:
                setattr(args, key, _str_list(val))
        elif current == defaults.get(key):
            if key == "standardize":
                setattr(args, key, val.lower() in ("1", "true", "yes"))
            else:
                typ = type(current) if current is not None else str
                setattr(args, key, typ(val))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "run":
        _apply_config(args)
        args.selector = args.selector or ["adaptive"]
        args.site = args.site or ["moment"]
        args.dmax = args.dmax or [40, 80, 160, 320]
        args.seed = args.seed or [0]
        if args.partitions is None and args.pt is None and not args.test:
            args.pt = 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
