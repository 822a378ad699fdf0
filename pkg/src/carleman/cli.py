"""Command-line runner: builds the induction, writes reports, error tables,
trajectory dumps, serialized words and hull masks."""
from __future__ import annotations

import argparse
import csv
import json
import logging
from pathlib import Path
import sys
import time

import numpy as np

from .config import RunConfig
from .curve import CurveError
from .driver import (InductionState, StepError, _clean, _jet_errors, limit_monitor, make_problem,
                     run_induction, verify)
from .lemmas import embed

TABLE_POINTS = 2001


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def _num(x: float) -> str:
    return repr(float(x))


def table_grid(state: InductionState, problem) -> np.ndarray:
    """Uniform grid over I_k plus the marked points inside it."""
    a = state.a[-1]
    t = np.linspace(-a, a, TABLE_POINTS)
    return np.unique(np.concatenate([t, problem.tangency_in(a)]))


def write_error_rows(writer, state: InductionState, problem) -> None:
    t = table_grid(state, problem)
    err = _jet_errors(state.f(), problem, t)
    eta = problem.weight(t)
    for s in range(problem.r + 1):
        for ti, e, w in zip(t, err[:, s], eta):
            writer.writerow([state.k, s, _num(ti), _num(e), _num(w)])


def write_trajectory(path: Path, state: InductionState, problem) -> None:
    t = table_grid(state, problem)
    vals = state.f().eval(embed(t, problem.n))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{part}_z{j + 1}" for j in range(problem.n) for part in ("re", "im")])
        for ti, row in zip(t, vals):
            w.writerow([_num(ti)] + [_num(x) for z in row for x in (z.real, z.imag)])


def write_step(out: Path, state: InductionState, problem) -> None:
    k = state.k
    _dump(out / f"step_{k}.json", {"report": state.report.to_json(), "certificate": state.certificates[-1]})
    _dump(out / f"words_{k}.json", state.to_json())
    (out / f"hull_{k}.txt").write_text(state.hull_masks[-1] + "\n")
    write_trajectory(out / f"trajectory_{k}.csv", state, problem)


def run(cfg: RunConfig) -> int:
    """Exit status 0 iff every configured step committed."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        problem = make_problem(cfg)
    except (CurveError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"invalid curve descriptor: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    states, timing, failure = [], {}, None
    clock = [time.perf_counter()]

    def on_commit(state):
        now = time.perf_counter()
        timing[f"step_{state.k}"] = now - clock[0]
        clock[0] = now
        write_step(out, state, problem)
        states.append(state)

    try:
        run_induction(problem, cfg.steps, on_commit)
    except StepError as exc:
        k = (states[-1].k if states else 0) + 1
        path = out / f"failed_step_{k}.json"
        _dump(path, {"message": str(exc), "details": exc.details,
                     "report": exc.report.to_json() if exc.report else None})
        failure = str(path)
        print(f"step {k} failed: {exc}; report at {path}", file=sys.stderr)

    with (out / "errors.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "s", "t", "error", "eta"])
        for state in states:
            write_error_rows(w, state, problem)
    monitor = limit_monitor(states, problem).to_json() if len(states) >= 2 else None
    # the output location is left out so reports from different directories compare equal
    config = {k: v for k, v in cfg.to_json().items() if k != "out"}
    summary = {"config": config, "committed": [s.k for s in states], "failure": failure,
               "steps": [{"k": s.k, "passed": s.report.passed, "summary": s.report.summary(),
                          "R": s.R[-1], "a": s.a[-1], "eps": s.eps[-1], "delta": s.delta[-1],
                          "letters": {"phi": len(s.phis[-1]), "psi": len(s.psis[-1])}} for s in states],
              "monitor": monitor}
    _dump(out / "report.json", summary)
    _dump(out / "timing.json", timing)
    return 0 if failure is None and len(states) == cfg.steps else 1


def verify_only(cfg: RunConfig, state_path: str) -> int:
    try:
        problem = make_problem(cfg)
    except (CurveError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"invalid curve descriptor: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    state = InductionState.from_json(json.loads(Path(state_path).read_text()))
    report = verify(state, problem)
    print(json.dumps(_clean(report.to_json()), indent=1, sort_keys=True))
    if not report.passed:
        print(f"failing conditions: {report.failing()}", file=sys.stderr)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carleman", description="Proper holomorphic embeddings C -> C^n by words of shears.")
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--steps", type=int, help="override the number of induction steps")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--verify-only", metavar="PATH", help="re-run verify on a serialized state (words_k.json)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config)
        overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed), ("out", args.out)) if v is not None}
        cfg = cfg.replace(**overrides) if overrides else cfg
    except (ValueError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.verify_only:
        return verify_only(cfg, args.verify_only)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
