import numpy as np
import pytest


def numeric_grad(loss_fn, arrays, h=1e-5):
    """Central finite differences of ``loss_fn(arrays)`` w.r.t. every entry of every array."""
    grads = {}
    for name, a in arrays.items():
        g = np.zeros_like(a, dtype=np.float64)
        for idx in np.ndindex(a.shape):
            plus = {k: v.copy() for k, v in arrays.items()}
            minus = {k: v.copy() for k, v in arrays.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            g[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
        grads[name] = g
    return grads


def rel_err(analytic, numeric):
    a = np.concatenate([np.ravel(analytic[k]) for k in sorted(numeric)])
    n = np.concatenate([np.ravel(numeric[k]) for k in sorted(numeric)])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
