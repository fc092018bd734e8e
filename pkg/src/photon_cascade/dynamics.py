"""Propagation of sector states through one length of nonlinear medium.

Within the n-photon sector the saturation denominator
n_Omega1 + n_E1 is the constant ``n``, so the interaction is a real
tridiagonal hopping matrix (up to the drive phase) between neighbouring
|n-j, j, j> states.  Time is measured by the dimensionless phase
theta = kappa * |Omega_2| * L, with the single-photon cycle at theta = pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .fock_sector import SectorState


@dataclass(frozen=True)
class MediumParams:
    """Coupling kappa = g / Delta and the classical drive Omega_2.

    Only the product ``kappa * drive_mag`` (a rate per unit length) and the
    drive phase affect the dynamics.
    """

    kappa: float = 1.0
    drive_mag: float = 1.0
    drive_phase: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not self.kappa * self.drive_mag > 0:
            raise ValueError(
                f"kappa * |Omega_2| must be positive, got {self.kappa} * {self.drive_mag}"
            )

    @classmethod
    def from_atomic(cls, density: float, wavelength: float, decay_rate: float,
                    detuning: float, drive_mag: float, drive_phase: float = 0.0,
                    c: float = 1.0) -> "MediumParams":
        """Build from atomic density N, wavelength, decay rate gamma and detuning Delta.

        Uses g = 3 N lambda^2 gamma / (8 pi) and kappa = g / Delta.
        """
        g = 3.0 * density * wavelength**2 * decay_rate / (8.0 * math.pi)
        return cls(kappa=g / detuning, drive_mag=drive_mag, drive_phase=drive_phase, c=c)

    @property
    def rate(self) -> float:
        return self.kappa * self.drive_mag


@dataclass(frozen=True)
class StageGeometry:
    theta: float

    def __post_init__(self):
        if not self.theta >= 0:
            raise ValueError(f"propagation phase must be >= 0, got {self.theta}")

    @classmethod
    def from_cycles(cls, cycles: float) -> "StageGeometry":
        """Medium length given in units of the single-photon cycle length L0."""
        return cls(math.pi * cycles)

    @classmethod
    def from_length(cls, length: float, params: MediumParams) -> "StageGeometry":
        return cls(params.rate * length)

    def length(self, params: MediumParams) -> float:
        return self.theta / params.rate


def cycle_length(params: MediumParams) -> float:
    """L0 = pi / (kappa |Omega_2|), the length for one full single-photon cycle."""
    rate = params.kappa * params.drive_mag
    if not rate > 0:
        raise ValueError("cycle length undefined for zero coupling or zero drive")
    return math.pi / rate


def sector_couplings(n: int) -> np.ndarray:
    """Hopping strengths (j+1) sqrt(n-j) / n between |n-j,j,j> and |n-j-1,j+1,j+1>."""
    if n < 0:
        raise ValueError(f"photon number must be nonnegative, got {n}")
    j = np.arange(n, dtype=float)
    return (j + 1.0) * np.sqrt(n - j) / n if n > 0 else np.zeros(0)


def sector_hamiltonian(n: int, drive_phase: float = 0.0) -> np.ndarray:
    """Interaction in the n-photon sector, in units of hbar kappa |Omega_2| c.

    The pair-creating direction j -> j+1 carries exp(i * drive_phase).
    """
    couplings = sector_couplings(n)
    h = np.zeros((n + 1, n + 1), dtype=complex)
    idx = np.arange(n)
    h[idx + 1, idx] = np.exp(1j * drive_phase) * couplings
    h[idx, idx + 1] = np.exp(-1j * drive_phase) * couplings
    return h


@lru_cache(maxsize=128)
def sector_spectrum(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of the real (zero drive phase) sector matrix."""
    if n == 0:
        return np.zeros(1), np.ones((1, 1))
    evals, evecs = eigh_tridiagonal(np.zeros(n + 1), sector_couplings(n))
    evals.setflags(write=False)
    evecs.setflags(write=False)
    return evals, evecs


def gauge_phases(n: int, drive_phase: float) -> np.ndarray:
    return np.exp(1j * drive_phase * np.arange(n + 1))


def sector_propagator(n: int, theta: float, drive_phase: float = 0.0) -> np.ndarray:
    """exp(-i H_n theta) as an (n+1) x (n+1) unitary."""
    evals, evecs = sector_spectrum(n)
    u = (evecs * np.exp(-1j * evals * theta)) @ evecs.T
    if drive_phase:
        g = gauge_phases(n, drive_phase)
        u = g[:, None] * u * g.conj()[None, :]
    return u


def transfer_amplitudes(n: int, theta: float, drive_phase: float = 0.0) -> np.ndarray:
    """xi_j^(n): amplitudes on |n-j,j,j> after one pass, starting from |n,0,0>."""
    evals, evecs = sector_spectrum(n)
    amps = evecs @ (np.exp(-1j * evals * theta) * evecs[0])
    return amps * gauge_phases(n, drive_phase)


def return_amplitude(n: int, theta) -> np.ndarray:
    """<n,0,0| U_n(theta) |n,0,0>, vectorized over ``theta``; drive-phase independent."""
    evals, evecs = sector_spectrum(n)
    theta = np.asarray(theta, dtype=float)
    weights = evecs[0] ** 2
    return np.exp(-1j * np.multiply.outer(theta, evals)) @ weights


def propagate_sector(state: SectorState, geom: StageGeometry,
                     params: Optional[MediumParams] = None) -> SectorState:
    """Evolve a sector state over one stage of length ``geom``."""
    phase = params.drive_phase if params is not None else 0.0
    amps = sector_propagator(state.n, geom.theta, phase) @ state.amps
    return SectorState(state.n, amps, subnormalized=state.subnormalized)


def closed_form_n1(theta: float, drive_phase: float = 0.0) -> tuple[complex, complex]:
    """Single-photon cycling: (cos theta, -i e^{i phi} sin theta)."""
    return complex(math.cos(theta)), -1j * np.exp(1j * drive_phase) * math.sin(theta)


def closed_form_n2(theta: float, drive_phase: float = 0.0) -> tuple[complex, complex, complex]:
    """Two-photon amplitudes (xi_0, xi_1, xi_2) on |2,0,0>, |1,1,1>, |0,2,2>."""
    x = math.sqrt(1.5) * theta
    xi0 = (2.0 + math.cos(x)) / 3.0
    xi1 = -1j / math.sqrt(3.0) * np.exp(1j * drive_phase) * math.sin(x)
    xi2 = -2.0 * math.sqrt(2.0) / 3.0 * np.exp(2j * drive_phase) * math.sin(0.5 * x) ** 2
    return complex(xi0), complex(xi1), complex(xi2)
