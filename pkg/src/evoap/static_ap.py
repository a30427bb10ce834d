"""Classic affinity propagation and the responsibility/availability kernels
shared with the evolutionary engine."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, NoExemplarError


@dataclass(frozen=True)
class ApMessages:
    rho: np.ndarray
    alpha: np.ndarray
    damping: float = 0.9

    @classmethod
    def zeros(cls, n: int, damping: float = 0.9) -> "ApMessages":
        return cls(np.zeros((n, n)), np.zeros((n, n)), damping)


@dataclass(frozen=True)
class ApConfig:
    damping: float = 0.9
    max_iter: int = 500
    conv_window: Optional[int] = 20

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ConfigError(f"damping must be in [0, 1), got {self.damping}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.conv_window is not None and self.conv_window < 1:
            raise ConfigError("conv_window must be >= 1")


@dataclass(frozen=True)
class ApResult:
    exemplar: np.ndarray  # exemplar index for every point
    exemplars: np.ndarray  # sorted exemplar indices
    iterations: int
    converged: bool


def damp(old: np.ndarray, new: np.ndarray, damping: float) -> np.ndarray:
    if damping == 0.0:
        return new
    return damping * old + (1.0 - damping) * new


def responsibilities(s: np.ndarray, alpha: np.ndarray, temporal: Optional[np.ndarray] = None) -> np.ndarray:
    """Undamped rho_ij = b_ij - max_{k != j}(alpha_ik + b_ik) with b = s (+ temporal).

    ``temporal`` carries phi + delta for the evolutionary variant. Ties in the
    row maximum resolve to the lowest column index.
    """
    base = s if temporal is None else s + temporal
    n = base.shape[0]
    if n == 1:
        return base.copy()
    cand = alpha + base
    rows = np.arange(n)
    best = np.argmax(cand, axis=1)
    first = cand[rows, best]
    cand[rows, best] = -np.inf
    second = np.max(cand, axis=1)
    rho = base - first[:, None]
    rho[rows, best] = base[rows, best] - second
    return rho


def availabilities(rho: np.ndarray) -> np.ndarray:
    """Undamped availabilities; off-diagonal entries are capped at 0."""
    pos = np.maximum(rho, 0.0)
    diag = np.diagonal(rho)
    np.fill_diagonal(pos, diag)
    a = pos.sum(axis=0)[None, :] - pos
    self_avail = np.diagonal(a).copy()
    np.minimum(a, 0.0, out=a)
    np.fill_diagonal(a, self_avail)
    return a


def update_responsibilities(msgs: ApMessages, s: np.ndarray) -> ApMessages:
    new = responsibilities(s, msgs.alpha)
    return replace(msgs, rho=damp(msgs.rho, new, msgs.damping))


def update_availabilities(msgs: ApMessages) -> ApMessages:
    new = availabilities(msgs.rho)
    return replace(msgs, alpha=damp(msgs.alpha, new, msgs.damping))


def exemplar_set(rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.diagonal(rho) + np.diagonal(alpha) > 0)


def assign(rho: np.ndarray, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exemplar set and per-point exemplar; exemplars choose themselves."""
    exemplars = exemplar_set(rho, alpha)
    if exemplars.size == 0:
        raise NoExemplarError("no exemplar identified; preferences may be too low")
    score = (rho + alpha)[:, exemplars]
    labels = exemplars[np.argmax(score, axis=1)]
    labels[exemplars] = exemplars
    return exemplars, labels


def run_ap(s: np.ndarray, cfg: ApConfig = ApConfig()) -> ApResult:
    """Affinity propagation on one square similarity matrix (preferences on
    the diagonal). Stops once the exemplar set has been unchanged and
    non-empty for ``conv_window`` iterations, or after ``max_iter``."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    n = s.shape[0]
    if n == 1:
        return ApResult(np.zeros(1, dtype=int), np.zeros(1, dtype=int), 0, True)
    if not np.all(np.isfinite(np.diagonal(s))):
        raise ValueError("preferences (diagonal) must be finite")

    rho = np.zeros_like(s)
    alpha = np.zeros_like(s)
    last = None
    stable = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        rho = damp(rho, responsibilities(s, alpha), cfg.damping)
        alpha = damp(alpha, availabilities(rho), cfg.damping)
        ex = exemplar_set(rho, alpha)
        if last is not None and ex.size and np.array_equal(ex, last):
            stable += 1
        else:
            stable = 0
        last = ex
        if cfg.conv_window is not None and stable >= cfg.conv_window:
            converged = True
            break
    exemplars, labels = assign(rho, alpha)
    return ApResult(labels, exemplars, it, converged)
