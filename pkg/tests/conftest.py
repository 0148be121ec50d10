import numpy as np
import pytest

from maps.market_data import MarketFrame


def numeric_grad(loss_fn, arrays, h=1e-4):
    """Central finite differences of ``loss_fn()`` w.r.t. each array, perturbed in place."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            up = loss_fn()
            a[idx] = orig - h
            down = loss_fn()
            a[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic, numeric, floor=1e-6):
    """Largest element-wise |a - n| / max(|a|, |n|, floor) over all arrays."""
    worst = 0.0
    for name in analytic:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def frame_from(closes, start="2020-01-01"):
    closes = np.atleast_2d(np.asarray(closes, dtype=float))
    dates = np.datetime64(start, "D") + np.arange(closes.shape[1])
    return MarketFrame(tuple(f"C{i}" for i in range(closes.shape[0])), dates, closes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
