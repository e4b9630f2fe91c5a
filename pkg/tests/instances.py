"""Random instance generators shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from flexmarket.market_model import MarketInstance

EXAMPLE_ONE = MarketInstance.from_arrays([1, 1], [2, 2], [6, 6], p=10, f=30)
BINDING = MarketInstance.from_arrays([1, 1], [0, 0], [6, 6], p=10, f=4)
SINGLE = MarketInstance.from_arrays([2], [0], [10], p=0.6, f=1)


def random_instance(rng: np.random.Generator, n: int, cap_prob: float = 0.85) -> MarketInstance:
    """Generic instance touching every piece of the response map.

    Mixes signs of ``b``, exact zeros of ``b`` and ``m``, and caps that sit
    anywhere between the free flexibility and beyond the total flexibility.
    """
    a = rng.uniform(0.2, 3.0, n)
    b = rng.uniform(-2.0, 4.0, n)
    b[rng.random(n) < 0.1] = 0.0
    m = rng.uniform(0.0, 6.0, n)
    m = np.maximum(m, np.maximum(0.0, -b / a) + rng.uniform(0.0, 1.0, n))
    m[(rng.random(n) < 0.05) & (b >= 0)] = 0.0
    p = float(rng.uniform(0.0, 12.0))
    free = float(np.sum(np.maximum(0.0, -b / a)))
    u = rng.random()
    if u < 0.05:
        f = free
    else:
        f = free + float(rng.uniform(0.0, 1.2)) * float(m.sum() - free)
    return MarketInstance.from_arrays(a, b, m, p, f, cap_enabled=bool(rng.random() < cap_prob))


def instances(min_n: int = 0, max_n: int = 6, cap=None):
    """Hypothesis strategy over feasible instances."""

    @st.composite
    def build(draw):
        n = draw(st.integers(min_n, max_n))
        a = draw(st.lists(st.floats(0.05, 5.0), min_size=n, max_size=n))
        b = draw(st.lists(st.one_of(st.just(0.0), st.floats(-3.0, 5.0)), min_size=n, max_size=n))
        extra = draw(st.lists(st.floats(0.0, 6.0), min_size=n, max_size=n))
        m = [max(0.0, -bi / ai) + ei for ai, bi, ei in zip(a, b, extra)]
        p = draw(st.floats(0.0, 15.0))
        free = sum(max(0.0, -bi / ai) for ai, bi in zip(a, b))
        frac = draw(st.floats(0.0, 1.5))
        f = free + frac * (sum(m) - free)
        cap_enabled = draw(st.booleans()) if cap is None else cap
        return MarketInstance.from_arrays(a, b, m, p, f, cap_enabled=cap_enabled)

    return build()
