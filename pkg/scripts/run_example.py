"""Run the induction on a curve descriptor and print a per-step summary.

    python scripts/run_example.py --config curves/config_bump_graph.json --steps 2
"""
import argparse
import time

from carleman.config import RunConfig
from carleman.driver import limit_monitor, make_problem, run_induction


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="curves/config_bump_graph.json")
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    cfg = RunConfig.load(args.config)
    overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed)) if v is not None}
    cfg = cfg.replace(**overrides)
    problem = make_problem(cfg)

    start = time.perf_counter()

    def report(state):
        letters = sum(len(w.letters) for w in state.phis + state.psis)
        print(f"k={state.k}  R={state.R[-1]:.3g}  a={state.a[-1]:.3g}  eps={state.eps[-1]:.3g}  "
              f"letters={letters}  {time.perf_counter() - start:.1f} s")

    states = run_induction(problem, on_commit=report)
    mon = limit_monitor(states, problem)
    print(f"monitor {'passed' if mon.passed else 'FAILED'}; weighted jet error ratio "
          + ", ".join(f"{x:.3g}" for x in mon.carleman_ratio))


if __name__ == "__main__":
    main()
