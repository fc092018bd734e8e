"""Figures of merit for the cascade used as a filter or as a photon counter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .dynamics import closed_form_n2, return_amplitude, sector_spectrum
from .fock_sector import NumberDistribution

DEFAULT_THETA_MAX = 40 * math.pi
DEFAULT_THETA_STEP = math.pi / 200


def _survival(theta: float, n: int = 2) -> float:
    """|xi_0^(n)(theta)|^2: chance an n-photon pulse leaves one stage untouched."""
    if n == 2:
        return abs(closed_form_n2(theta)[0]) ** 2
    return float(abs(return_amplitude(n, theta)) ** 2)


def detector_firing_probability(i: int, theta: float = math.pi) -> float:
    """P(D^i fires) for a two-photon input: |xi_0|^(2i-2) - |xi_0|^(2i)."""
    if i < 1:
        raise ValueError(f"stage index starts at 1, got {i}")
    s = _survival(theta)
    return s ** (i - 1) * (1.0 - s)


def misidentification_probability(stages: int, theta: float = math.pi, n: int = 2) -> float:
    """Chance that an n-photon input fires only D_inf, mimicking a single photon."""
    if stages < 1:
        raise ValueError(f"need at least one stage, got {stages}")
    if n < 2:
        raise ValueError("misidentification is defined for multi-photon inputs (n >= 2)")
    return _survival(theta, n) ** stages


def discrimination_accuracy(stages: int, theta: float = math.pi) -> float:
    return 1.0 - misidentification_probability(stages, theta)


@dataclass(frozen=True)
class FilterMetrics:
    stage: int
    p0: float
    p1: float
    p_ge2: float


def filter_metrics(history: Sequence[NumberDistribution]) -> list[FilterMetrics]:
    """Vacuum, single-photon and multi-photon probabilities after each stage."""
    if not history:
        raise ValueError("empty history")
    return [FilterMetrics(k, d[0], d[1], d.at_least(2)) for k, d in enumerate(history)]


def stages_to_purity(history: Sequence[NumberDistribution], threshold: float = 0.01):
    """First stage index at which P(n >= 2) drops below ``threshold``, or None."""
    for m in filter_metrics(history):
        if m.p_ge2 < threshold:
            return m.stage
    return None


@dataclass(frozen=True)
class TuneResult:
    n: int
    theta: float
    return_probability: float
    exact: bool

    @property
    def cycles(self) -> float:
        """Stage length in units of the single-photon cycle length L0."""
        return self.theta / math.pi


def return_probability(n: int, theta) -> np.ndarray:
    return np.abs(return_amplitude(n, theta)) ** 2


def _return_slope(n: int, theta) -> np.ndarray:
    evals, evecs = sector_spectrum(n)
    phases = np.exp(-1j * np.multiply.outer(np.asarray(theta, dtype=float), evals))
    w = evecs[0] ** 2
    amp = phases @ w
    damp = phases @ (-1j * evals * w)
    return 2.0 * np.real(np.conj(amp) * damp)


def tune_length_for_sector(n: int, tolerance: float = 1e-10,
                           theta_max: float = DEFAULT_THETA_MAX,
                           step: float = DEFAULT_THETA_STEP) -> TuneResult:
    """Shortest stage phase theta > 0 that returns |n,0,0> to itself.

    Local maxima of the return probability are bracketed on a uniform grid
    over (0, theta_max] and located as roots of its derivative.  The first
    maximum within ``tolerance`` of a full return wins.  If none qualifies the
    best maximum found is returned with ``exact=False``.
    """
    if n < 1:
        raise ValueError(f"need at least one photon, got {n}")
    grid = np.arange(1, int(theta_max / step) + 1) * step
    slope = _return_slope(n, grid)
    best = None
    for k in np.flatnonzero((slope[:-1] > 0) & (slope[1:] <= 0)):
        lo, hi = grid[k], grid[k + 1]
        if slope[k + 1] == 0:
            theta = hi
        else:
            theta = brentq(lambda t: float(_return_slope(n, t)), lo, hi,
                           xtol=1e-14, rtol=4 * np.finfo(float).eps)
        r = float(return_probability(n, theta))
        if 1.0 - r < tolerance:
            return TuneResult(n, float(theta), r, True)
        if best is None or r > best.return_probability:
            best = TuneResult(n, float(theta), r, False)
    if best is None:
        r = return_probability(n, grid)
        k = int(np.argmax(r))
        best = TuneResult(n, float(grid[k]), float(r[k]), False)
    return best
