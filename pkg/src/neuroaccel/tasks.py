"""Benchmark inputs and targets: generalized NARMA-n and n-bit parity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 10.0


@dataclass
class NarmaSpec:
    n_range: list[int] = field(default_factory=lambda: list(range(2, 21)))
    train_len: int = 4000
    test_len: int = 400
    input_low: float = 0.0
    input_high: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_range) < 2:
            raise ValueError("NARMA lag parameter must be >= 2")
        if self.train_len <= 0 or self.test_len <= 0:
            raise ValueError("sequence lengths must be positive")


@dataclass
class ParitySpec:
    n_range: list[int] = field(default_factory=lambda: list(range(1, 7)))
    train_len: int = 4000
    test_len: int = 2000
    max_run: int | None = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_run is not None and self.max_run < 1:
            raise ValueError("max_run must be >= 1")


def narma_input(spec: NarmaSpec, length: int, seed: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    return rng.uniform(spec.input_low, spec.input_high, length)


def _check_narma_range(u: np.ndarray) -> None:
    if u.size and (u.min() < 0.0 or u.max() > 0.5):
        log.warning("NARMA input outside [0, 0.5]: [%g, %g]", u.min(), u.max())


def narma_target(u, n: int, saturate: bool = False, check_range: bool = True) -> np.ndarray:
    """Generalized NARMA-n response to ``u``.

    ``out[k]`` is ``y(k)``, so ``out[0] = 0`` and ``out[k+1]`` is produced
    from ``u[k]`` and ``u[k-n+1]``. Past values before the sequence start are
    zero.

    With ``saturate=True`` the update is wrapped in ``tanh``, which keeps
    high-order recurrences bounded.

    Raises:
        DivergenceError: if ``|y|`` exceeds 10 (only without ``saturate``).
    """
    u = np.asarray(u, dtype=float)
    if n < 2:
        raise ValueError("n must be >= 2")
    if check_range:
        _check_narma_range(u)
    m = u.size
    y = np.zeros(m)
    window = 0.0  # running sum of y(k-n+1) .. y(k)
    for k in range(m - 1):
        window += y[k]
        if k - n >= 0:
            window -= y[k - n]
        lagged = u[k - n + 1] if k - n + 1 >= 0 else 0.0
        nxt = 0.3 * y[k] + 0.05 * y[k] * window + 1.5 * u[k] * lagged + 0.1
        if saturate:
            nxt = math.tanh(nxt)
        elif not abs(nxt) <= DIVERGENCE_LIMIT:
            raise DivergenceError(f"NARMA-{n} diverged at step {k + 1}")
        y[k + 1] = nxt
    return y


def parity_stream(spec: ParitySpec, length: int | None = None, seed: int | None = None) -> np.ndarray:
    """Random +-1 stream where no run of equal values exceeds ``spec.max_run``."""
    length = spec.train_len + spec.test_len if length is None else length
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    raw = rng.choice(np.array([-1.0, 1.0]), size=length)
    if spec.max_run is None:
        return raw
    out = raw.copy()
    run = 0
    for k in range(length):
        if k > 0 and out[k] == out[k - 1]:
            run += 1
            if run > spec.max_run:
                out[k] = -out[k]
                run = 1
        else:
            run = 1
    return out


def parity_target(u, n: int) -> np.ndarray:
    """Product of the ``n`` most recent inputs; NaN where fewer than ``n`` exist."""
    if n < 1:
        raise ValueError("parity order must be >= 1")
    u = np.asarray(u, dtype=float)
    out = np.full(u.size, np.nan)
    if u.size >= n:
        prod = np.ones(u.size - n + 1)
        for i in range(n):
            prod *= u[n - 1 - i : u.size - i]
        out[n - 1 :] = prod
    return out


def build_target_matrix(task: str, inputs, n_range, saturate=()) -> np.ndarray:
    """One target column per order in ``n_range``, aligned with ``inputs``.

    ``saturate`` lists NARMA orders that use the tanh-bounded update.
    """
    inputs = np.asarray(inputs, dtype=float)
    n_range = list(n_range)
    if task == "narma":
        if inputs.size < max(n_range):
            raise ValueError("input shorter than the largest NARMA order")
        _check_narma_range(inputs)
        cols = [narma_target(inputs, n, saturate=n in saturate, check_range=False) for n in n_range]
    elif task == "parity":
        if inputs.size < max(n_range):
            raise ValueError("input shorter than the largest parity order")
        cols = [parity_target(inputs, n) for n in n_range]
    else:
        raise ValueError(f"unknown task {task!r}")
    return np.column_stack(cols)


def stable_narma_orders(u, n_range) -> tuple[list[int], list[int]]:
    """Split ``n_range`` into orders whose plain recurrence stays bounded on ``u`` and the rest."""
    ok, bad = [], []
    for n in n_range:
        try:
            narma_target(u, n, check_range=False)
            ok.append(n)
        except DivergenceError:
            bad.append(n)
    return ok, bad
