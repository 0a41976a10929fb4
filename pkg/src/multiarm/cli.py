"""Command line entry point: ``multiarm {solve,evaluate,simulate,shift-bound}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import contextmanager

from multiarm.capacity import SolverConfig, solve_batch
from multiarm.errors import DimensionError, ManifestError, ParseError, ValidationError
from multiarm.ingest import load_manifest, load_scores, write_scores
from multiarm.metrics import evaluate_groups, max_aggregator, mean_aggregator, minimax_aggregator, single_detector
from multiarm.shift import load_instance, report
from multiarm.synth import generate_scenario, load_spec

log = logging.getLogger("multiarm")

EXIT_INVALID = 2
USER_ERRORS = (ParseError, ManifestError, ValidationError, DimensionError, OSError)


def configure_logging() -> None:
    level = os.environ.get("MULTIARM_LOG", "WARNING").upper()
    # own handler on the package logger, replaced on every call so that
    # repeated in-process runs write to the current stderr exactly once
    for h in list(log.handlers):
        if getattr(h, "_multiarm_cli", False):
            log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    handler._multiarm_cli = True
    log.addHandler(handler)
    log.setLevel(getattr(logging, level, logging.WARNING))
    log.propagate = False


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _read_scores(path: str):
    with open(path, encoding="utf-8", newline="") as fh:
        return load_scores(fh, name=path)


def _solver_config(args) -> SolverConfig:
    defaults = SolverConfig()
    return SolverConfig(
        tol=defaults.tol if args.tol is None else args.tol,
        max_iters=defaults.max_iters if args.max_iters is None else args.max_iters,
    )


def _dump_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")


def cmd_solve(args) -> int:
    table = _read_scores(args.scores)
    if args.gamma is not None and not 0.0 <= args.gamma <= 1.0:
        raise ValidationError(f"--gamma must lie in [0, 1], got {args.gamma}")
    sol = solve_batch(table.scores, _solver_config(args))
    n_bad = int((~sol.converged).sum())
    if n_bad:
        log.warning("%d of %d records hit --max-iters before converging", n_bad, len(table))
    header = ["sample_id", "source", *(f"w_{d}" for d in table.detectors), "capacity_nats", "p_adversarial", "converged"]
    if args.gamma is not None:
        header.append("verdict")
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(table)):
            row = [table.sample_ids[i], table.sources[i], *(repr(float(w)) for w in sol.weights[i])]
            row += [repr(float(sol.capacity_nats[i])), repr(float(sol.p_adversarial[i])), int(sol.converged[i])]
            if args.gamma is not None:
                row.append(int(sol.p_adversarial[i] > args.gamma))
            writer.writerow(row)
    return 0


def _aggregator(name: str, table, config: SolverConfig):
    if name == "minimax":
        return minimax_aggregator(config)
    if name == "mean":
        return mean_aggregator
    if name == "max":
        return max_aggregator
    if name.startswith("detector:"):
        det = name.split(":", 1)[1]
        if det not in table.detectors:
            raise ValidationError(f"unknown detector {det!r}; table has {list(table.detectors)}")
        return single_detector(table.detectors.index(det))
    raise ValidationError(f"unknown aggregator {name!r}")


def cmd_evaluate(args) -> int:
    table = _read_scores(args.scores)
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = load_manifest(fh)
    aggregate = _aggregator(args.aggregator, table, _solver_config(args))
    reports, skipped = evaluate_groups(table, manifest, aggregate)
    reports = [r.to_dict(percent=args.percent) for r in reports]
    with _output(args.out) as fh:
        _dump_json({"aggregator": args.aggregator, "groups": reports, "skipped": skipped}, fh)
    return 0


def cmd_simulate(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = load_spec(fh)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    table = generate_scenario(spec)
    with _output(args.out) as fh:
        write_scores(table, fh)
    return 0


def cmd_shift_bound(args) -> int:
    with open(args.instance, encoding="utf-8") as fh:
        inst = load_instance(fh)
    with _output(args.out) as fh:
        _dump_json(report(inst).to_dict(), fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiarm", description="Zero-shot aggregation of attack detectors.")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--tol", type=float, default=None, help="solver tolerance on the capacity bracket")
        sp.add_argument("--max-iters", type=int, default=None, help="iteration cap per sample")

    sp = sub.add_parser("solve", help="per-record capacity-achieving weights and aggregated score")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--out")
    sp.add_argument("--gamma", type=float, default=None, help="add a verdict column: 1 iff score > gamma")
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("evaluate", help="AUROC and FPR at 95%% TPR for each manifest group")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out")
    sp.add_argument("--percent", action="store_true", help="report rates x100")
    sp.add_argument("--aggregator", default="minimax", help="minimax (default), mean, max or detector:<id>")
    solver_flags(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("simulate", help="write a synthetic score table")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--seed", type=int, default=None, help="override the seed in the scenario file")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("shift-bound", help="evaluate the domain-shift error bound on a finite instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_shift_bound)
    return p


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    for name in ("tol", "max_iters"):
        value = getattr(args, name, None)
        if value is not None and value <= 0:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_INVALID
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
