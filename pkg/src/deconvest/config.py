"""INI configuration with embedded defaults.

Example::

    [model]
    kind = sv
    sigma_eps2 = 0.1

    [particles]
    M = 5000
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from typing import Optional


@dataclass
class RunConfig:
    model: str = "ar1"
    sigma_eps2: float = 0.1
    beta: Optional[float] = None
    phi: float = 0.7
    sigma2: float = 0.3
    box: Optional[str] = None
    xtol: float = 1e-7
    max_iter: int = 500
    grid: int = 3
    q_trunc: int = 100
    quad_nodes: int = 2048
    quad_tol: float = 1e-12
    particles: int = 5000
    h: float = 0.1
    M_tilde: int = 100
    C: float = 1e-4
    max_sweeps: int = 30
    alpha: float = 0.05
    n: int = 1000
    reps: int = 100
    seed: int = 0


# section -> {ini key: RunConfig field}
_LAYOUT = {
    "model": {"kind": "model", "sigma_eps2": "sigma_eps2", "beta": "beta", "phi": "phi", "sigma2": "sigma2",
              "box": "box"},
    "contrast": {"xtol": "xtol", "max_iter": "max_iter", "grid": "grid", "q_trunc": "q_trunc"},
    "quadrature": {"nodes": "quad_nodes", "tol": "quad_tol"},
    "particles": {"m": "particles", "h": "h"},
    "siemle": {"m_tilde": "M_tilde", "c": "C", "max_sweeps": "max_sweeps"},
    "study": {"alpha": "alpha", "n": "n", "reps": "reps", "seed": "seed"},
}


def _coerce(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    if raw.strip().lower() in ("", "none") and "Optional" in str(kind):
        return None
    if name == "box":
        return raw.strip()
    if "int" in str(kind):
        return int(raw)
    if "float" in str(kind):
        return float(raw)
    return raw.strip()


def load_config(path: Optional[str] = None) -> RunConfig:
    """Defaults overlaid with values from an INI file (keys are case-insensitive)."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    for section in parser.sections():
        layout = _LAYOUT.get(section.lower())
        if layout is None:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in layout:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            setattr(cfg, layout[key], _coerce(layout[key], raw))
    return cfg
