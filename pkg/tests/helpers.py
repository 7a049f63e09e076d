"""Random problem builders shared by the test modules."""

import numpy as np

from sgpc.adf import include
from sgpc.kernel import HyperParams
from sgpc.state import init_state


def random_problem(rng, n=None, d=None, hp=None):
    n = int(rng.integers(20, 201)) if n is None else n
    d = int(rng.integers(1, 11)) if d is None else d
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = np.where(X @ w + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    if hp is None:
        hp = HyperParams(
            v0=float(np.exp(rng.uniform(-1.0, 1.5))),
            sigma2=float(d * np.exp(rng.uniform(-1.0, 1.0))),
            b=float(rng.normal(scale=0.3)),
        )
    return X, y, hp


def grown_state(rng, n, d, steps, hp=None):
    """State after ``steps`` moment-matched inclusions of random indices."""
    X, y, hp = random_problem(rng, n, d, hp)
    st = init_state(X, y, hp)
    for j in rng.permutation(n)[:steps]:
        include(st, int(j))
    return st
