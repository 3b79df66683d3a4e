"""Two-parameter Adam problems contrasting a stable gradient with a noisy or sparse one.

The y coordinate always sees ``g_y = 0.1 * w_y``. The x coordinate sees
``+-0.1 * w_x`` with a fair random sign (``noisy``) or ``0.1 * w_x`` on 5% of
steps and zero otherwise (``sparse``). Both coordinates are driven by
:func:`streamrl.optim.adam_step`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..optim import AdamState, adam_step

GRAD_SCALE = 0.1
SPARSE_RATE = 0.05


@dataclass
class ToyProblemConfig:
    kind: str = "noisy"
    w0: tuple[float, float] = (1.5, 1.5)
    steps: int = 2000
    beta0: float = 0.5
    beta1: float = 0.9
    eps: float = 0.1
    lr: float = 0.7
    bias_correction: bool = False
    seed: int = 0
    output: str = ""

    def __post_init__(self):
        if self.kind not in ("noisy", "sparse"):
            raise ConfigurationError(f"toy kind must be 'noisy' or 'sparse', got {self.kind!r}")
        if self.steps <= 0:
            raise ConfigurationError("toy steps must be positive")
        if len(self.w0) != 2:
            raise ConfigurationError("w0 must have two components")


def toy_gradient(kind: str, w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if kind == "noisy":
        gx = GRAD_SCALE * w[0] * (1.0 if rng.random() < 0.5 else -1.0)
    else:
        gx = GRAD_SCALE * w[0] if rng.random() < SPARSE_RATE else 0.0
    return np.array([gx, GRAD_SCALE * w[1]])


def run_toy(config: ToyProblemConfig) -> np.ndarray:
    """Simulate the problem; returns rows ``(step, w_x, w_y, g_x, g_y)``, step 0 being the start point.

    The gradient logged on row ``t`` is the one applied to reach that row's weights.
    """
    rng = np.random.default_rng(config.seed)
    w = np.array(config.w0, dtype=np.float64)
    state = AdamState.zeros(2, beta0=config.beta0, beta1=config.beta1, epsilon=config.eps,
                            bias_correction=config.bias_correction)
    rows = np.empty((config.steps + 1, 5))
    rows[0] = (0, w[0], w[1], 0.0, 0.0)
    for t in range(1, config.steps + 1):
        g = toy_gradient(config.kind, w, rng)
        adam_step(state, w, g, config.lr)
        rows[t] = (t, w[0], w[1], g[0], g[1])
    if config.output:
        write_trajectory(rows, config.output)
    return rows


def write_trajectory(rows: np.ndarray, path) -> None:
    """Write rows as CSV to ``path``, or to an open text stream."""
    if hasattr(path, "write"):
        _write_rows(rows, path)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        _write_rows(rows, fh)


def _write_rows(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["step", "w_x", "w_y", "g_x", "g_y"])
    for row in rows:
        writer.writerow([int(row[0])] + [format(v, ".17g") for v in row[1:]])
