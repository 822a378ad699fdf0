"""Compare the Lawson-refined fit of |t| on [-1, 1] with the best uniform error.

The best degree-n error for |t| behaves like beta / n with Bernstein's
constant beta = 0.2801694990; the script prints the ratio per degree.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from carleman.approx import TargetProfile, fit

BERNSTEIN = 0.2801694990238691


@dataclass(frozen=True)
class CompareConfig:
    degrees: tuple = (8, 16, 32, 64, 128)
    # Lawson reweighting overfits between samples unless they outnumber the degree well
    samples_per_degree: int = 64
    check_samples: int = 40001
    lawson: int = 10


def compare(cfg: CompareConfig) -> list:
    fine = np.linspace(-1.0, 1.0, cfg.check_samples)
    rows = []
    for degree in cfg.degrees:
        t = np.linspace(-1.0, 1.0, max(2001, cfg.samples_per_degree * degree + 1))
        cp = fit(TargetProfile(t.astype(complex), np.abs(t) + 0j, np.ones(len(t))), tol=1e-30,
                 degrees=(degree,), strict=False, lawson=cfg.lawson)
        err = float(np.max(np.abs(cp.fn(fine.astype(complex)) - np.abs(fine))))
        rows.append((degree, err, err / (BERNSTEIN / degree)))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--degrees", type=int, nargs="+", default=list(CompareConfig.degrees))
    parser.add_argument("--lawson", type=int, default=CompareConfig.lawson)
    args = parser.parse_args(argv)
    cfg = CompareConfig(degrees=tuple(args.degrees), lawson=args.lawson)
    print("degree,sup_error,ratio_to_bernstein")
    for degree, err, ratio in compare(cfg):
        print(f"{degree},{err:.4e},{ratio:.3f}")


if __name__ == "__main__":
    main()
