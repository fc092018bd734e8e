"""Photon-number sectors of the three-mode field (Omega_1, E_1, E_2).

The interaction conserves n_Omega1 + n_E1 and n_E1 - n_E2, so an input with
``n`` photons in Omega_1 and vacuum in the generated fields only ever visits
the states |n-j, j, j>, j = 0..n.  Everything downstream works on amplitude
vectors over that basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import poisson

NORM_ATOL = 1e-12
DEFAULT_TAIL_TOLERANCE = 1e-8


class TruncationError(ValueError):
    """Raised when a photon-number truncation discards too much probability."""

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = required


@dataclass(frozen=True)
class SectorBasis:
    n: int
    states: tuple[tuple[int, int, int], ...]

    def __len__(self) -> int:
        return len(self.states)

    def index(self, triple: tuple[int, int, int]) -> int:
        return self.states.index(tuple(triple))


def sector_basis(n: int) -> SectorBasis:
    """Ordered basis |n-j, j, j> of the n-photon sector, j = 0..n."""
    if n < 0:
        raise ValueError(f"photon number must be nonnegative, got {n}")
    return SectorBasis(n, tuple((n - j, j, j) for j in range(n + 1)))


@dataclass(frozen=True)
class SectorState:
    """Amplitudes over ``sector_basis(n)``; ``amps[j]`` multiplies |n-j, j, j>.

    A branch produced by a measurement may carry less than unit norm, in which
    case it must be built with ``subnormalized=True``.
    """

    n: int
    amps: np.ndarray
    subnormalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=complex).copy()
        if amps.shape != (self.n + 1,):
            raise ValueError(f"sector {self.n} needs {self.n + 1} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)
        norm = self.norm_squared
        if self.subnormalized:
            if norm > 1.0 + NORM_ATOL:
                raise ValueError(f"sub-normalized state has norm^2 {norm} > 1")
        elif abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")

    @classmethod
    def fock(cls, n: int) -> "SectorState":
        """Pure |n, 0, 0>: all photons in Omega_1."""
        amps = np.zeros(n + 1, dtype=complex)
        amps[0] = 1.0
        return cls(n, amps)

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    @property
    def basis(self) -> SectorBasis:
        return sector_basis(self.n)


@dataclass(frozen=True)
class NumberDistribution:
    """Probabilities indexed by Omega_1 photon number 0..n_max.

    ``tail_mass`` records how much probability was dropped (and renormalized
    away) when the distribution was cut off at ``n_max``.
    """

    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).copy()
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a nonempty 1-d vector")
        if np.any(probs < -NORM_ATOL) or np.any(probs > 1 + NORM_ATOL):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > NORM_ATOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs = np.clip(probs, 0.0, 1.0)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, n: int) -> float:
        if 0 <= n < self.probs.size:
            return float(self.probs[n])
        return 0.0

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def at_least(self, n: int) -> float:
        return float(self.probs[n:].sum())


def poisson_tail(mean_n: float, truncation: int) -> float:
    """Poisson mass strictly above ``truncation``."""
    return float(poisson.sf(truncation, mean_n)) if mean_n > 0 else 0.0


def default_truncation(mean_n: float, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> int:
    """Smallest n_max whose Poisson tail is below ``tail_tolerance``."""
    if mean_n < 0:
        raise ValueError(f"mean photon number must be nonnegative, got {mean_n}")
    n_max = 0
    while poisson_tail(mean_n, n_max) >= tail_tolerance:
        n_max += 1
    return n_max


def coherent_sector_weights(
    mean_n: float,
    truncation: Optional[int] = None,
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE,
) -> NumberDistribution:
    """Poisson photon-number weights of a coherent state, cut at ``truncation``.

    The kept weights are renormalized; the discarded mass is stored on the
    result as ``tail_mass``.  If that mass is not below ``tail_tolerance`` a
    :class:`TruncationError` names the truncation that would be needed.
    """
    if mean_n < 0:
        raise ValueError(f"mean photon number must be nonnegative, got {mean_n}")
    if truncation is None:
        truncation = default_truncation(mean_n, tail_tolerance)
    if truncation < 0:
        raise ValueError(f"truncation must be nonnegative, got {truncation}")

    tail = poisson_tail(mean_n, truncation)
    if tail >= tail_tolerance and tail > 0:
        needed = default_truncation(mean_n, tail_tolerance)
        raise TruncationError(
            f"Poisson tail above n={truncation} is {tail:.3e} (tolerance {tail_tolerance:.1e}); "
            f"use truncation >= {needed}",
            required=needed,
        )

    n = np.arange(truncation + 1)
    if mean_n == 0:
        probs = (n == 0).astype(float)
    else:
        log_p = -mean_n + n * math.log(mean_n) - np.array([math.lgamma(k + 1) for k in n])
        probs = np.exp(log_p)
    probs = probs / probs.sum()
    return NumberDistribution(probs, tail_mass=tail)


@dataclass(frozen=True)
class InputSpec:
    """Input pulse in Omega_1: a Fock state or a (truncated) coherent state."""

    kind: str
    n: int = 0
    mean_n: float = 0.0
    truncation: Optional[int] = None
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    def __post_init__(self):
        if self.kind not in ("fock", "coherent"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.kind == "fock" and self.n < 0:
            raise ValueError(f"Fock photon number must be nonnegative, got {self.n}")
        if self.kind == "coherent" and self.mean_n < 0:
            raise ValueError(f"mean photon number must be nonnegative, got {self.mean_n}")

    @classmethod
    def fock_state(cls, n: int) -> "InputSpec":
        return cls("fock", n=n)

    @classmethod
    def coherent(cls, mean_n: float, truncation: Optional[int] = None,
                 tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> "InputSpec":
        return cls("coherent", mean_n=mean_n, truncation=truncation, tail_tolerance=tail_tolerance)

    @classmethod
    def parse(cls, text: str, truncation: Optional[int] = None) -> "InputSpec":
        """Parse ``fock:N`` or ``coherent:MEAN``."""
        kind, sep, value = text.strip().partition(":")
        kind = kind.lower()
        if not sep:
            raise ValueError(f"input must look like fock:N or coherent:MEAN, got {text!r}")
        try:
            if kind == "fock":
                return cls.fock_state(int(value))
            if kind == "coherent":
                return cls.coherent(float(value), truncation=truncation)
        except ValueError as exc:
            raise ValueError(f"bad input spec {text!r}: {exc}") from None
        raise ValueError(f"unknown input kind {kind!r} in {text!r}")

    def __str__(self) -> str:
        if self.kind == "fock":
            return f"fock:{self.n}"
        return f"coherent:{self.mean_n!r}"

    def distribution(self) -> NumberDistribution:
        if self.kind == "fock":
            probs = np.zeros(self.n + 1)
            probs[self.n] = 1.0
            return NumberDistribution(probs)
        return coherent_sector_weights(self.mean_n, self.truncation, self.tail_tolerance)
