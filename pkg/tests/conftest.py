"""Shared fixture generators for the test suite.

Two ruler-instance families are used throughout:

* ``spanning_instance`` draws noiseless GP rulers whose every gap respects
  the 0.5 px spacing guard, for round-trip fitting tests.
* ``foreshortened_instance`` draws rulers through the total growth across
  the ruler, ``G = r^(n-2)``, keeping the perspective foreshortening
  bounded the way a physical camera does: the ratio between the widest and
  narrowest gap stays under ``growth_max`` regardless of how many marks are
  visible, instead of exploding geometrically with n.
"""

from __future__ import annotations

import numpy as np

from rulerkit.gpfit import GPParams


def spanning_instance(rng: np.random.Generator) -> tuple[GPParams, int]:
    """Noiseless fit instance: r in [0.7, 1.4], n in [5, 40], min gap >= 5 px.

    The dense-end gap g is drawn first; for shrinking rulers (r < 1) the
    first gap is inflated to g / r^(n-2) so the *last* gap equals g, keeping
    every gap comfortably above the 0.5 px spacing guard.
    """
    r = float(rng.uniform(0.7, 1.4))
    n = int(rng.integers(5, 41))
    g = float(rng.uniform(5.0, 60.0))
    d = g if r >= 1.0 else g * r ** (-(n - 2))
    m0 = float(rng.uniform(-200.0, 200.0))
    return GPParams(m0=m0, m1=m0 + d, r=r), n


def foreshortened_instance(
    rng: np.random.Generator, n_lo: int = 5, n_hi: int = 40
) -> tuple[GPParams, int]:
    """Bounded-growth instance: total gap growth G uniform in [1, 6].

    G is clamped so r = G^(1/(n-2)) stays within [1/1.4, 1.4] even for the
    smallest rulers, and inverted with probability one half so shrinking
    and growing rulers are equally likely. The dense-end gap is uniform in
    [4, 40] px and the sparse end is at most G times wider.
    """
    n = int(rng.integers(n_lo, n_hi + 1))
    growth = float(rng.uniform(1.0, min(6.0, 1.4 ** (n - 2))))
    r = growth ** (1.0 / (n - 2))
    if rng.random() < 0.5:
        r = 1.0 / r
    g = float(rng.uniform(4.0, 40.0))
    d = g if r >= 1.0 else g * growth
    m0 = float(rng.uniform(-200.0, 200.0))
    return GPParams(m0=m0, m1=m0 + d, r=r), n
