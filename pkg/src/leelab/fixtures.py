"""Reference configurations: torus2(2pi, 2pi) and sphere2(1), sectors n = 0, 1, 2.

Truncations are sized so that every check in the validation suite runs at
desk scale. n = 0 runs use lambda = 0.3, the others lambda = 1; m = 1 and
mu = 0.5 throughout, with the source point at the origin (north pole on the
sphere).
"""
from __future__ import annotations

import math

from .config import RunConfig, parse_config

TWO_PI = 2 * math.pi

_GEOMETRY = {
    "torus2": {"kind": "torus2", "lengths": [TWO_PI, TWO_PI]},
    "sphere2": {"kind": "sphere2", "radius": 1.0},
}

# (sigma_max, sigma_max_k1) per (manifold, n)
_TRUNCATION = {
    ("torus2", 0): (60.0, 200.0),
    ("torus2", 1): (60.0, 200.0),
    ("torus2", 2): (20.0, 40.0),
    ("sphere2", 0): (60.0, 400.0),
    ("sphere2", 1): (60.0, 400.0),
    ("sphere2", 2): (20.0, 80.0),
}


def reference_dict(manifold: str, n: int, **overrides) -> dict:
    try:
        sigma_max, sigma_max_k1 = _TRUNCATION[(manifold, n)]
    except KeyError:
        raise KeyError(f"no reference fixture for {manifold} n={n}") from None
    data = {
        "manifold": dict(_GEOMETRY[manifold]),
        "params": {"m": 1.0, "mu": 0.5, "lambda": 0.3 if n == 0 else 1.0, "n": n},
        "truncation": {"sigma_max": sigma_max, "sigma_max_k1": sigma_max_k1},
        "seed": 0,
    }
    for key, value in overrides.items():
        section, _, field = key.partition("__")
        if field:
            data.setdefault(section, {})[field] = value
        else:
            data[section] = value
    return data


def reference_config(manifold: str, n: int, **overrides) -> RunConfig:
    """Reference RunConfig; overrides use ``section__field=value``, e.g. ``params__lambda=0.5``."""
    return parse_config(reference_dict(manifold, n, **overrides))


REFERENCE_FIXTURES = tuple(_TRUNCATION)
