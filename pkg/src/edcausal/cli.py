"""``edcausal`` command line: generate data, discover graphs, estimate CATEs, score.

Exit codes: 0 ok, 2 validation error, 3 I/O error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import kernels
from .core import aggregate
from .dataio import (
    FormatError,
    build_construct_series,
    ingest_answer_log,
    load_npy,
    pack_submission,
    read_construct_list,
    read_metadata,
    read_task1_folder,
    read_task2_folder,
    save_npy,
    write_events_csv,
    write_queries_json,
    write_query_txt,
    write_train_csv,
)
from .discovery import DiscoveryError, discover, discover_many
from .inference import NoSupportError, estimate_cate, estimate_cate_task4, fit_scm, read_questionnaire
from .scoring import MEMBER_NAMES, EdgeMask, ScoringError, score_submission
from .simulator import InvalidQueryError, SimConfig, cate_oracle, generate_graph, generate_queries, simulate_dataset

log = logging.getLogger("edcausal")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SPLITS = ("local_dev", "public", "private")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _pool_map(fn, items, jobs):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(min(jobs, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _write_submission(out: Path, array: np.ndarray, task: int) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    name = MEMBER_NAMES[task]
    save_npy(out / name, array)
    zpath = out / (Path(name).stem + ".zip")
    zpath.write_bytes(pack_submission(array, name))
    return zpath


# -- generate ---------------------------------------------------------------


def _generate_one(cfg: SimConfig, split: int, d: int, queries: int, rollouts: int, jobs: int):
    seed = derive_seed(cfg.seed, split, d)
    c = cfg.replace(seed=seed)
    graph = generate_graph(c)
    data = simulate_dataset(c, graph, jobs=jobs)
    qs = generate_queries(data, graph, queries, seed=seed)
    truth = [
        cate_oracle(graph, q, rollouts, seed=derive_seed(seed, 3, k), noise_scale=c.noise_scale)
        for k, q in enumerate(qs)
    ]
    return graph, data, qs, np.array(truth)


def cmd_generate(args) -> dict:
    cfg = SimConfig(
        num_constructs=args.constructs,
        num_students=args.students,
        num_steps=args.steps,
        lag=args.lag,
        edge_probability=args.edge_probability,
        noise_scale=args.noise_scale,
        seed=args.seed,
    )
    out = Path(args.out)
    splits = [s for s in args.splits.split(",") if s]
    for s in splits:
        if s not in SPLITS:
            raise CliError(EXIT_VALIDATION, f"unknown split {s!r}")
    summary = {"seed": args.seed, "splits": {}}
    for s in splits:
        si = SPLITS.index(s)
        # parallelism goes to datasets; students inside a dataset run serially
        results = _pool_map(
            lambda d: _generate_one(cfg, si, d, args.queries, args.rollouts, 1), range(args.datasets), args.jobs
        )
        t1 = out / f"Task_1_data_{s}_csv"
        t2 = out / f"Task_2_data_{s}"
        gt = out / "ground_truth" / s
        for p in (t1, t2, gt):
            p.mkdir(parents=True, exist_ok=True)
        adj = np.stack([aggregate(g).adj for g, *_ in results])
        cate = np.stack([c for *_, c in results])
        for d, (graph, data, qs, _) in enumerate(results):
            (t1 / f"dataset_{d}").mkdir(exist_ok=True)
            write_train_csv(t1 / f"dataset_{d}" / "train.csv", data)
            write_queries_json(t2 / f"intervention_{d}.json", qs)
            (t2 / f"intervention_{d}.txt").write_text(write_query_txt(qs), encoding="utf-8")
        save_npy(gt / "adj_matrix.npy", adj)
        save_npy(gt / "cate_estimate.npy", cate)
        save_npy(gt / "temporal_graphs.npy", np.stack([g.weights for g, *_ in results]))
        if s == "local_dev":
            save_npy(t1 / "adj_matrix.npy", adj)
            save_npy(t2 / "cate_estimate.npy", cate)
        summary["splits"][s] = {
            "datasets": len(results),
            "rows": [data.num_rows for _, data, _, _ in results],
            "edges": [int(a.sum()) for a in adj],
        }
    return summary


# -- discover ---------------------------------------------------------------


def _task3_graph(args) -> np.ndarray:
    requested = read_construct_list(Path(args.constructs))
    if not requested:
        raise CliError(EXIT_VALIDATION, "construct list is empty")
    ingested = ingest_answer_log(Path(args.log))
    present = {e.construct_id for e in ingested.events}
    usable = [c for c in requested if c in present]
    m = len(requested)
    full = np.zeros((m, m), dtype=bool)
    if len(usable) < 2:
        log.warning("fewer than two requested constructs appear in the log; emitting an empty graph")
        return full
    series = build_construct_series(ingested, args.window, usable)
    # constructs that are only ever taught carry a constant series: drop them
    probs = np.vstack([t.probs for t in series.dataset])
    varying = [c for k, c in enumerate(usable) if np.ptp(probs[:, k]) > 0]
    if len(varying) < 2:
        return full
    if varying != usable:
        series = build_construct_series(ingested, args.window, varying)
    adj = discover(series.dataset, args.lag, args.threshold, link="identity").adj
    pos = [requested.index(c) for c in varying]
    full[np.ix_(pos, pos)] = adj
    return full


def cmd_discover(args) -> dict:
    if args.task == 1:
        if not args.data:
            raise CliError(EXIT_VALIDATION, "--data is required for task 1")
        datasets = read_task1_folder(Path(args.data))
        adj = discover_many(datasets, jobs=args.jobs, lag=args.lag, threshold=args.threshold)
    elif args.task == 3:
        if not (args.log and args.constructs):
            raise CliError(EXIT_VALIDATION, "--log and --constructs are required for task 3")
        adj = _task3_graph(args)
    else:
        raise CliError(EXIT_VALIDATION, "discover handles tasks 1 and 3")
    zpath = _write_submission(Path(args.out), adj.astype(bool), args.task)
    return {"task": args.task, "shape": list(adj.shape), "edges": int(adj.sum()), "submission": str(zpath)}


# -- cate -------------------------------------------------------------------


def cmd_cate(args) -> dict:
    if not (args.data and args.queries):
        raise CliError(EXIT_VALIDATION, "--data and --queries are required")
    datasets = read_task1_folder(Path(args.data))
    queries = read_task2_folder(Path(args.queries))
    if len(datasets) != len(queries):
        raise CliError(EXIT_VALIDATION, f"{len(datasets)} datasets but {len(queries)} query files")

    def run(d):
        scm = fit_scm(datasets[d], args.lag)
        return [estimate_cate(scm, q, args.rollouts, seed=derive_seed(args.seed, d, k)) for k, q in enumerate(queries[d])]

    est = np.array(_pool_map(run, range(len(datasets)), args.jobs), dtype=np.float64)
    zpath = _write_submission(Path(args.out), est, 2)
    return {"task": 2, "shape": list(est.shape), "submission": str(zpath)}


def cmd_cate4(args) -> dict:
    if not (args.log and args.questionnaire and args.metadata):
        raise CliError(EXIT_VALIDATION, "--log, --questionnaire and --metadata are required")
    ingested = ingest_answer_log(Path(args.log))
    queries = read_questionnaire(Path(args.questionnaire))
    years = read_metadata(Path(args.metadata)).year_groups()
    values, missing = [], []
    for k, q in enumerate(queries):
        try:
            values.append(estimate_cate_task4(ingested, q, years, method=args.method, window=args.window))
        except NoSupportError as exc:
            if args.fill is None:
                missing.append(f"row {k} ({q.experiment_id}): {exc}")
                values.append(np.nan)
            else:
                values.append(args.fill)
    if missing:
        raise NoSupportError("; ".join(missing) + " (pass --fill to substitute a value)")
    est = np.array(values, dtype=np.float64)
    zpath = _write_submission(Path(args.out), est, 4)
    return {"task": 4, "shape": list(est.shape), "submission": str(zpath)}


# -- score ------------------------------------------------------------------


def cmd_score(args) -> dict:
    if not (args.submission and args.truth):
        raise CliError(EXIT_VALIDATION, "--submission and --truth are required")
    truth = load_npy(Path(args.truth))
    mask = None
    if args.mask:
        mask = EdgeMask.from_text(Path(args.mask).read_text(), truth.shape[-1])
    report = score_submission(
        Path(args.submission).read_bytes(), args.task, truth, mask=mask, redact=args.redact, timestamp=args.timestamp
    )
    result = json.loads(report.to_json())
    if report.errors:
        raise CliError(EXIT_VALIDATION, json.dumps(result, sort_keys=True))
    return result


# -- ingest -----------------------------------------------------------------


def cmd_ingest(args) -> dict:
    if not args.log:
        raise CliError(EXIT_VALIDATION, "--log is required")
    ingested = ingest_answer_log(Path(args.log))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_events_csv(out / "events.csv", ingested)
    constructs = read_construct_list(Path(args.constructs)) if args.constructs else None
    series = build_construct_series(ingested, args.window, constructs)
    write_train_csv(out / "train.csv", series.dataset)
    (out / "constructs.json").write_text(json.dumps(list(series.constructs)) + "\n", encoding="utf-8")
    result = {"summary": ingested.summary, "warnings": ingested.warnings, "series_rows": series.dataset.num_rows}
    (out / "summary.json").write_text(json.dumps(result, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return result


# -- argument parsing -------------------------------------------------------


def _common(p, *, seed=True, lag=True, jobs=True, out=True):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master random seed")
    if lag:
        p.add_argument("--lag", type=int, default=2, help="maximum lag")
    if jobs:
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel workers (results do not depend on it)")
    if out:
        p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", help="key = value file; command-line flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edcausal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate the task 1/2 dataset tree with ground truth")
    _common(p)
    p.add_argument("--students", type=int, default=100)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--constructs", type=int, default=50)
    p.add_argument("--datasets", type=int, default=5)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--rollouts", type=int, default=10_000)
    p.add_argument("--edge-probability", type=float, default=0.02)
    p.add_argument("--noise-scale", type=float, default=0.3)
    p.add_argument("--splits", default=",".join(SPLITS))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="estimate adjacency matrices (tasks 1 and 3)")
    _common(p, seed=False)
    p.add_argument("--task", type=int, choices=(1, 3), default=1)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--data", help="Task_1_data_*_csv folder (task 1)")
    p.add_argument("--log", help="answer log CSV (task 3)")
    p.add_argument("--constructs", help="constructs_input_test.csv (task 3)")
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("cate", help="answer task 2 queries with a fitted fold-time SCM")
    _common(p)
    p.add_argument("--task", type=int, choices=(2,), default=2)
    p.add_argument("--data", help="Task_1_data_*_csv folder")
    p.add_argument("--queries", help="Task_2_data_* folder")
    p.add_argument("--rollouts", type=int, default=10_000)
    p.set_defaults(func=cmd_cate)

    p = sub.add_parser("cate4", help="answer the task 4 questionnaire from an answer log")
    _common(p, seed=False, lag=False, jobs=False)
    p.add_argument("--task", type=int, choices=(4,), default=4)
    p.add_argument("--log", help="answer log CSV")
    p.add_argument("--questionnaire", help="construct_experiments_input_test.csv")
    p.add_argument("--metadata", help="folder with student_metadata.csv")
    p.add_argument("--method", choices=("difference", "scm"), default="difference")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--fill", type=float, default=None, help="value for queries without support")
    p.set_defaults(func=cmd_cate4)

    p = sub.add_parser("score", help="validate and score a zipped submission")
    _common(p, seed=False, lag=False, jobs=False)
    p.add_argument("--task", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument("--submission", help="submission zip")
    p.add_argument("--truth", help="ground truth .npy")
    p.add_argument("--mask", help="edge-pair file (one 'i,j' per line)")
    p.add_argument("--redact", action="store_true", help="hide the score, keep the ranking key")
    p.add_argument("--timestamp", type=float, default=0.0, help="submission time for tie-breaks")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ingest", help="normalize an answer log and build construct series")
    _common(p, seed=False, lag=False, jobs=False)
    p.add_argument("--log", help="answer log CSV")
    p.add_argument("--constructs", help="optional construct list restricting the series")
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_ingest)
    return parser


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments and blank lines ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_VALIDATION, f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip("\"'")
    return out


def _apply_config(parser: argparse.ArgumentParser, argv, args):
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    values = {}
    for k, v in read_config(args.config).items():
        if k not in actions or k in ("config", "func"):
            raise CliError(EXIT_VALIDATION, f"unknown config key {k!r}")
        act = actions[k]
        if isinstance(act, argparse._StoreTrueAction):
            values[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            values[k] = act.type(v) if act.type else v
    subparser.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        if getattr(args, "jobs", 1) < 1:
            raise CliError(EXIT_VALIDATION, "--jobs must be at least 1")
        result = args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DiscoveryError, NoSupportError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ScoringError, InvalidQueryError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("%s finished in %.2fs (kernels: %s)", args.command, time.perf_counter() - start, kernels.BACKEND)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
