#!/usr/bin/env python3
"""Regenerates ks_oracle.jsonl.

Each line holds one sample plus the reference one-sample Kolmogorov-Smirnov
result computed by scipy against a normal distribution fitted by the
sample mean and (ddof=1) standard deviation, with the asymptotic p-value
(method="asymp"). Values are rounded before the reference statistics are
computed, so the file itself is the exact oracle input.

Run from the repository root:

    python3 crates/core/tests/data/gen_ks_oracle.py
"""

import json
import pathlib

import numpy as np
from scipy import stats

OUT = pathlib.Path(__file__).with_name("ks_oracle.jsonl")
ROUND = 6


def finish(name, values):
    values = [round(float(v), ROUND) for v in values]
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    res = stats.kstest(arr, "norm", args=(mean, sd), method="asymp")
    return {
        "name": name,
        "values": values,
        "statistic": float(res.statistic),
        "p_value": float(res.pvalue),
    }


def main():
    rng = np.random.default_rng(20240817)
    cases = []

    # Exact normal scores: inverse CDF of (i - 0.5)/500 for the standard
    # normal; the closest-to-normal sample possible at n=500.
    i = np.arange(1, 501)
    cases.append(finish("normal_scores_500", stats.norm.ppf((i - 0.5) / 500.0)))

    # 1..10 repeated to n=200 plus 20 copies of a far outlier.
    tail = [float(k % 10 + 1) for k in range(200)] + [1000.0] * 20
    cases.append(finish("repeated_with_outlier_tail", tail))

    # Normal draws of varying size and scale.
    for k in range(16):
        n = int(rng.integers(40, 400))
        mu = float(rng.uniform(-50, 50))
        sigma = float(rng.uniform(0.5, 30))
        cases.append(finish(f"gauss_{k:02d}_n{n}", rng.normal(mu, sigma, n)))

    # Uniform draws: mildly non-normal; with estimated parameters the
    # asymptotic test usually cannot reject these.
    for k in range(6):
        n = int(rng.integers(60, 300))
        cases.append(finish(f"uniform_{k:02d}_n{n}", rng.uniform(0, 100, n)))

    # Strongly non-normal shapes the test does reject.
    for k in range(9):
        n = int(rng.integers(150, 400))
        cases.append(finish(f"exponential_{k:02d}_n{n}", rng.exponential(10.0, n)))
    for k in range(8):
        n = int(rng.integers(150, 400))
        cases.append(finish(f"lognormal_{k:02d}_n{n}", rng.lognormal(0.0, 1.2, n)))
    for k in range(9):
        n = int(rng.integers(100, 300))
        half = n // 2
        sample = np.concatenate(
            [rng.normal(-12, 1.0, half), rng.normal(12, 1.0, n - half)]
        )
        cases.append(finish(f"bimodal_{k:02d}_n{n}", sample))

    assert len(cases) == 50, len(cases)
    normal = sum(1 for c in cases if c["p_value"] > 0.05)
    assert normal >= 10 and len(cases) - normal >= 10, (
        f"want both branches exercised, got {normal} normal / "
        f"{len(cases) - normal} non-normal"
    )

    with OUT.open("w") as fh:
        for case in cases:
            fh.write(json.dumps(case) + "\n")
    print(f"wrote {len(cases)} cases ({normal} normal, {len(cases) - normal} non-normal)")


if __name__ == "__main__":
    main()
