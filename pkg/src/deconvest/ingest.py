"""Price ingestion and CSV input/output."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import Trajectory
from .special import LOG_CHISQ_MEAN

log = logging.getLogger(__name__)

KAPPA_ROUNDED = 1.27
KAPPA_EXACT = -LOG_CHISQ_MEAN
ZERO_FLOOR = 1e-8


class MalformedInputError(ValueError):
    """Input file or series does not satisfy the expected format."""


@dataclass(frozen=True)
class PriceSeries:
    s: np.ndarray
    dates: Optional[Sequence[str]] = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).ravel()
        if s.size < 2:
            raise MalformedInputError("need at least two prices")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise MalformedInputError("prices must be finite and strictly positive")
        if self.dates is not None and len(self.dates) != s.size:
            raise MalformedInputError("dates and prices differ in length")
        object.__setattr__(self, "s", s)


def to_returns(series: PriceSeries) -> np.ndarray:
    """Centred percentage log returns ``100 log(S_i / S_{i-1})`` minus their mean."""
    if not isinstance(series, PriceSeries):
        series = PriceSeries(series)
    r = 100.0 * np.diff(np.log(series.s))
    return r - r.mean()


def prices_from_returns(returns, s0: float = 100.0) -> np.ndarray:
    """Price path whose percentage log returns are ``returns``."""
    r = np.asarray(returns, dtype=float)
    return s0 * np.exp(np.concatenate([[0.0], np.cumsum(r) / 100.0]))


def to_log_chisq(returns, mode: str = "rounded", return_count: bool = False):
    """``log(y^2) + kappa`` with zero returns floored at ``|y| = 1e-8``.

    ``mode="rounded"`` uses the two-decimal ``kappa = 1.27``; ``mode="exact"`` uses
    ``-psi(1/2) - log 2``.
    """
    if mode not in ("rounded", "exact"):
        raise ValueError("mode must be 'rounded' or 'exact'")
    y = np.asarray(returns, dtype=float)
    if not np.all(np.isfinite(y)):
        raise MalformedInputError("returns must be finite")
    small = np.abs(y) < ZERO_FLOOR
    count = int(small.sum())
    if count:
        log.warning("floored %d near-zero returns at %g", count, ZERO_FLOOR)
    ya = np.where(small, ZERO_FLOOR, np.abs(y))
    kappa = KAPPA_ROUNDED if mode == "rounded" else KAPPA_EXACT
    z = 2.0 * np.log(ya) + kappa
    return (z, count) if return_count else z


# ---------------------------------------------------------------------------
# CSV


def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise MalformedInputError(f"{path}: need a header row and at least one data row")
    return rows[0], rows[1:]


def read_series_csv(path, column: Optional[str] = None) -> np.ndarray:
    """One numeric column from a CSV with header (``column`` or the last one)."""
    header, body = _read_rows(path)
    header = [h.strip() for h in header]
    if column is None:
        idx = len(header) - 1
    elif column in header:
        idx = header.index(column)
    else:
        raise MalformedInputError(f"column {column!r} not in header {header}")
    try:
        return np.array([float(r[idx]) for r in body])
    except (ValueError, IndexError) as exc:
        raise MalformedInputError(f"{path}: non-numeric or missing value ({exc})") from exc


def read_prices_csv(path) -> PriceSeries:
    """Prices from the last column; a first column is kept as date labels when there are two."""
    header, body = _read_rows(path)
    try:
        s = np.array([float(r[-1]) for r in body])
    except ValueError as exc:
        raise MalformedInputError(f"{path}: non-numeric price ({exc})") from exc
    dates = [r[0] for r in body] if len(header) >= 2 else None
    return PriceSeries(s, dates)


def write_series_csv(path, values, name: str = "z") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        w.writerows([[repr(float(v))] for v in values])


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Two columns ``x,z`` when states are known, else one column ``z``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if traj.x is not None:
            w.writerow(["x", "z"])
            w.writerows([[repr(float(a)), repr(float(b))] for a, b in zip(traj.x, traj.z)])
        else:
            w.writerow(["z"])
            w.writerows([[repr(float(b))] for b in traj.z])


def read_trajectory_csv(path) -> Trajectory:
    header, _ = _read_rows(path)
    header = [h.strip() for h in header]
    z = read_series_csv(path, "z" if "z" in header else None)
    x = read_series_csv(path, "x") if "x" in header else None
    return Trajectory(z=z, x=x)
