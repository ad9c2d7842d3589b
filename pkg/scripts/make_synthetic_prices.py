"""Regenerate the bundled synthetic price series (1001 daily closes).

Returns follow the log-SV model with beta = 1, phi = 0.9, sigma2 = 0.1, seed 2024.
"""

import csv
from pathlib import Path

from deconvest.ingest import prices_from_returns
from deconvest.model import Theta, make_rng, simulate_sv

OUT = Path(__file__).resolve().parents[1] / "src" / "deconvest" / "data" / "synthetic_prices.csv"


def main():
    traj = simulate_sv(Theta(0.9, 0.1), beta=1.0, n=1000, rng=make_rng(2024))
    prices = prices_from_returns(traj.y, s0=100.0)
    with OUT.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "price"])
        for i, p in enumerate(prices):
            w.writerow([i, f"{p:.12f}"])


if __name__ == "__main__":
    main()
