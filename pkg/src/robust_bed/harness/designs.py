"""Design optimisation by closed form, used as ground truth in the experiments."""

from __future__ import annotations

import numpy as np
from scipy import optimize

from .. import abtest, linreg
from ..core import derive_rng

__all__ = ["optimal_linreg_design", "linreg_value", "optimal_allocation"]

_RANDOM_STARTS = 8


def linreg_value(model: linreg.LinRegModel, design, order) -> float:
    return linreg.sibson_mi(model, design, order)


def optimal_linreg_design(model: linreg.LinRegModel, batch_size: int, order) -> tuple[np.ndarray, float]:
    """Maximise the closed-form Sibson MI over a batch of designs in the box.

    Multi-start L-BFGS-B from box corners, an alternating corner pattern and
    a fixed set of random interior points; deterministic. Returns the
    ``(batch_size, design_dim)`` design and its value.
    """
    p = model.design_dim
    shape = (batch_size, p)
    if batch_size == 0:
        return np.zeros(shape), 0.0
    lo, hi = np.broadcast_to(model.lower, shape).ravel(), np.broadcast_to(model.upper, shape).ravel()
    alt = np.where(np.arange(lo.size) % 2 == 0, hi, lo)
    mid = 0.5 * (lo + hi)
    starts = [hi, lo, alt, mid + 0.1 * (alt - mid)]
    rng = derive_rng(0)
    starts += [rng.uniform(lo, hi) for _ in range(_RANDOM_STARTS)]

    def neg(flat):
        return -linreg.sibson_mi(model, np.clip(flat, lo, hi).reshape(shape), order)

    best_x, best_v = None, -np.inf
    for x0 in starts:
        res = optimize.minimize(neg, x0, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        x = np.clip(res.x, lo, hi)
        v = -neg(x)
        if v > best_v + 1e-12:
            best_x, best_v = x, v
    return best_x.reshape(shape), float(best_v)


def optimal_allocation(model: abtest.ABModel, order) -> tuple[abtest.Allocation, float]:
    curve = abtest.sibson_curve(model, order)
    k = int(np.argmax(curve))
    return model.allocation(k), float(curve[k])
