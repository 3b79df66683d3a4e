import numpy as np
import pytest

from streamrl import approximator as nn


def numeric_grad(spec, params, obs, output_grad, h=1e-5):
    """Central differences of sum(output_grad * forward(params))."""
    g = np.zeros_like(params)
    weights = np.asarray(output_grad).reshape(-1)
    for i in range(params.size):
        p = params.copy()
        p[i] += h
        up = nn.forward(spec, p, obs)[0].reshape(-1) @ weights
        p[i] -= 2 * h
        down = nn.forward(spec, p, obs)[0].reshape(-1) @ weights
        g[i] = (up - down) / (2 * h)
    return g


def sup_relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def random_dense_params(spec, rng):
    """Fully dense parameters with perturbed LayerNorm gains, so every path gets exercised."""
    params = nn.init_sparse(spec, int(rng.integers(1 << 30)))
    return params + rng.normal(0.0, 0.3, size=params.size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance tests append (criterion, passed, detail) here; printed at the end of the session.
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
