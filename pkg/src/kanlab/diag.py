"""Evaluation metrics and training diagnostics.

Three run-time metrics (relative L2 error, gradient signal-to-noise
ratio, geometric complexity), the append-only metric stream the trainer
emits, and a changepoint heuristic that annotates SNR series with
learning stages.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .diffcore import DTYPE, Jet2, Tape

SNR_SENTINEL = 1e12
SNR_FLOOR = 1e-12


def relative_l2(reference, predicted) -> float:
    """L2 norm of (reference - predicted) over L2 norm of reference."""
    ref = np.asarray(reference, dtype=DTYPE).ravel()
    pred = np.asarray(predicted, dtype=DTYPE).ravel()
    if ref.shape != pred.shape:
        raise ValueError("reference and prediction shapes differ")
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(ref - pred) / denom)


def snr(grads) -> float:
    """Signal-to-noise ratio of sub-batch gradients: ||mean|| / ||std||.

    std is the per-coordinate population standard deviation across the
    sub-batches. A degenerate spread (all sub-batches identical) reports
    the sentinel 1e12 instead of dividing by zero, and the ratio is
    capped there as well.
    """
    g = np.asarray(grads, dtype=DTYPE)
    if g.ndim != 2 or g.shape[0] < 2:
        raise ValueError("need at least 2 sub-batch gradient vectors")
    mu = g.mean(axis=0)
    sd = g.std(axis=0)
    denom = float(np.linalg.norm(sd))
    if denom < SNR_FLOOR:
        return SNR_SENTINEL
    return float(min(np.linalg.norm(mu) / denom, SNR_SENTINEL))


def geometric_complexity(model, store, X) -> float:
    """Mean squared Frobenius norm of the input Jacobian over a point set.

    One order-1 jet pass per input coordinate; parameters stay plain
    arrays so each tape carries only the jet path.
    """
    X = np.asarray(X, dtype=DTYPE)
    p = {name: store.view(name) for name in store.segments}
    total = 0.0
    for j in range(model.d):
        tp = Tape()
        cols = [X[:, [i]] for i in range(model.d)]
        cols[j] = Jet2.seed(tp.const(cols[j]), order=1)
        u = model.forward(p, cols)
        if isinstance(u, Jet2) and u.d1 is not None:
            total += float(np.sum(np.asarray(u.d1.val) ** 2))
    return total / X.shape[0]


@dataclass
class MetricRecord:
    iteration: int
    name: str
    value: float
    wall: float


class MetricLog:
    """Append-only metric stream; iterations must not decrease."""

    def __init__(self):
        self.records: list[MetricRecord] = []
        self._t0 = time.perf_counter()

    def add(self, iteration: int, name: str, value: float) -> None:
        if self.records and iteration < self.records[-1].iteration:
            raise ValueError("iteration went backwards")
        self.records.append(MetricRecord(int(iteration), str(name), float(value),
                                         time.perf_counter() - self._t0))

    def series(self, name: str):
        its = [r.iteration for r in self.records if r.name == name]
        vals = [r.value for r in self.records if r.name == name]
        return np.asarray(its, dtype=int), np.asarray(vals, dtype=DTYPE)

    def last(self, name: str) -> float:
        for r in reversed(self.records):
            if r.name == name:
                return r.value
        raise KeyError(name)

    def names(self) -> list[str]:
        seen = []
        for r in self.records:
            if r.name not in seen:
                seen.append(r.name)
        return seen


@dataclass
class SNRProbe:
    """Held-out probe set split into equal sub-batches for SNR sampling.

    residual(tape, params, idx) must return the probe residuals for the
    selected indices; the probe loss is the unweighted mean square.
    """

    residual: object
    n: int
    n_batches: int = 10
    cadence: int = 100

    def __post_init__(self):
        if self.n_batches < 2:
            raise ValueError("need at least 2 sub-batches")
        if self.n % self.n_batches:
            raise ValueError("probe size must split into equal sub-batches")

    def sub_batches(self) -> list[np.ndarray]:
        size = self.n // self.n_batches
        return [np.arange(b * size, (b + 1) * size) for b in range(self.n_batches)]


def detect_stages(iterations, values):
    """Split an SNR series into three phases (fitting, transition,
    diffusion) by exhaustive two-changepoint search minimizing
    within-segment variance of the log series. Report annotation only.
    """
    it = np.asarray(iterations)
    y = np.log(np.clip(np.asarray(values, dtype=DTYPE), 1e-300, None))
    n = y.size
    if n < 3:
        return None
    c1 = np.concatenate([[0.0], np.cumsum(y)])
    c2 = np.concatenate([[0.0], np.cumsum(y * y)])

    def sse(a, b):
        s = c1[b] - c1[a]
        return c2[b] - c2[a] - s * s / (b - a)

    best = (np.inf, 1, 2)
    for i in range(1, n - 1):
        left = sse(0, i)
        for j in range(i + 1, n):
            tot = left + sse(i, j) + sse(j, n)
            if tot < best[0]:
                best = (tot, i, j)
    _, i, j = best
    return {
        "fitting": (int(it[0]), int(it[i - 1])),
        "transition": (int(it[i]), int(it[j - 1])),
        "diffusion": (int(it[j]), int(it[-1])),
    }
