"""Brute-force reference on a truncated three-mode Fock space.

Nothing here uses the sector reduction.  The interaction is assembled from
single-mode ladder operators, with the saturation denominator
a1^dag a1 + b1^dag b1 applied as an operator (pseudo-inverse on its kernel),
and states are propagated either by dense diagonalization or by fixed-step
RK4.  The results are compared against the sector code and the cascade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .cascade import DetectorModel, DetectorRecord, run_cascade
from .dynamics import MediumParams, StageGeometry, sector_hamiltonian, sector_propagator, closed_form_n1
from .fock_sector import InputSpec

MAX_TRUNCATION = 8
HERMITIAN_ATOL = 1e-12


class OracleError(RuntimeError):
    pass


class IntegrationError(OracleError):
    """Step-halving shows the RK4 result is not converged."""


def _annihilator(truncation: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, truncation + 1, dtype=float)), k=1)


def mode_operators(truncation: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Annihilators of Omega_1, E_1, E_2 on the product space, index order (n1, m1, m2)."""
    a = _annihilator(truncation)
    eye = np.eye(truncation + 1)
    return (
        np.kron(np.kron(a, eye), eye),
        np.kron(np.kron(eye, a), eye),
        np.kron(np.kron(eye, eye), a),
    )


def occupations(truncation: int) -> np.ndarray:
    """(dim, 3) array of (n1, m1, m2) for each product-basis index."""
    r = np.arange(truncation + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class FullHamiltonian:
    """Interaction matrix in units of hbar kappa |Omega_2| c."""

    matrix: np.ndarray
    truncation: int
    drive_phase: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def charge_leakage(self) -> float:
        """Largest matrix element connecting different (n1+m1, m1-m2) sectors."""
        occ = occupations(self.truncation)
        total = occ[:, 0] + occ[:, 1]
        diff = occ[:, 1] - occ[:, 2]
        other = (total[:, None] != total[None, :]) | (diff[:, None] != diff[None, :])
        return float(np.max(np.abs(self.matrix[other]), initial=0.0))

    def restrict(self, states) -> np.ndarray:
        """Submatrix on the listed (n1, m1, m2) occupations, in the given order."""
        idx = [flat_index(s, self.truncation) for s in states]
        return self.matrix[np.ix_(idx, idx)]


def flat_index(occ, truncation: int) -> int:
    n1, m1, m2 = occ
    d = truncation + 1
    return (n1 * d + m1) * d + m2


def numerator_operator(truncation: int, drive_phase: float = 0.0) -> np.ndarray:
    """a1^dag Omega_2^* b1 b2 + b1^dag b2^dag a1 Omega_2, with |Omega_2| scaled out."""
    a1, b1, b2 = mode_operators(truncation)
    lower = np.exp(-1j * drive_phase) * a1.conj().T @ b1 @ b2
    return lower + lower.conj().T


@lru_cache(maxsize=16)
def build_full_hamiltonian(truncation: int, drive_phase: float = 0.0) -> FullHamiltonian:
    """H = D^+ N with D = a1^dag a1 + b1^dag b1 and N the four-wave-mixing numerator."""
    if truncation < 1:
        raise ValueError(f"truncation must be at least 1, got {truncation}")
    a1, b1, _ = mode_operators(truncation)
    denom = np.real(np.diag(a1.conj().T @ a1 + b1.conj().T @ b1))
    pinv = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0.5)
    matrix = pinv[:, None] * numerator_operator(truncation, drive_phase)
    matrix.setflags(write=False)
    return FullHamiltonian(matrix, truncation, drive_phase)


@dataclass(frozen=True)
class FullFockState:
    truncation: int
    amps: np.ndarray

    def __post_init__(self):
        d = self.truncation + 1
        amps = np.asarray(self.amps, dtype=complex).reshape(d, d, d).copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_occupations(cls, components: Mapping[tuple[int, int, int], complex],
                         truncation: int, normalize: bool = True) -> "FullFockState":
        d = truncation + 1
        amps = np.zeros((d, d, d), dtype=complex)
        for occ, a in components.items():
            if max(occ) > truncation or min(occ) < 0:
                raise ValueError(f"occupation {occ} outside truncation {truncation}")
            amps[tuple(occ)] += a
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ValueError("zero state")
            amps /= norm
        return cls(truncation, amps)

    @classmethod
    def fock(cls, n: int, truncation: Optional[int] = None) -> "FullFockState":
        """|n, 0, 0>."""
        return cls.from_occupations({(n, 0, 0): 1.0}, truncation if truncation is not None else max(n, 1))

    @property
    def vector(self) -> np.ndarray:
        return self.amps.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def __getitem__(self, occ) -> complex:
        return complex(self.amps[tuple(occ)])


@lru_cache(maxsize=16)
def _full_eigensystem(truncation: int, drive_phase: float):
    h = build_full_hamiltonian(truncation, drive_phase).matrix
    return np.linalg.eigh(h)


def full_propagator(truncation: int, theta: float, drive_phase: float = 0.0,
                    max_truncation: int = MAX_TRUNCATION) -> np.ndarray:
    if truncation > max_truncation:
        raise OracleError(
            f"truncation {truncation} gives {(truncation + 1) ** 3} states; limit is {max_truncation}"
        )
    evals, evecs = _full_eigensystem(truncation, drive_phase)
    return (evecs * np.exp(-1j * evals * theta)) @ evecs.conj().T


def propagate_full(state: FullFockState, theta: float, drive_phase: float = 0.0,
                   max_truncation: int = MAX_TRUNCATION) -> FullFockState:
    """exp(-i H theta) |state> by dense Hermitian diagonalization."""
    u = full_propagator(state.truncation, theta, drive_phase, max_truncation)
    return FullFockState(state.truncation, u @ state.vector)


def _rk4(h: np.ndarray, psi: np.ndarray, theta: float, steps: int) -> np.ndarray:
    # For constant H one classical RK4 step is exactly psi -> M psi with M the
    # fourth-order Taylor polynomial of exp(-i H dt); build it once, then step.
    a = -1j * (theta / steps) * h
    a2 = a @ a
    step = np.eye(h.shape[0]) + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24
    for _ in range(steps):
        psi = step @ psi
    return psi


def integrate_schrodinger(state: FullFockState, theta: float, steps: int = 10_000,
                          drive_phase: float = 0.0, tol: float = 1e-8) -> FullFockState:
    """Fixed-step RK4 integration of i d/dtheta psi = H psi.

    The run is repeated with twice the steps; if the two disagree by more
    than ``tol`` (or the norm drifts by more than ``tol``) an
    :class:`IntegrationError` asks for more steps.  The finer result is returned.
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    h = build_full_hamiltonian(state.truncation, drive_phase).matrix
    psi0 = state.vector
    coarse = _rk4(h, psi0, theta, steps)
    fine = _rk4(h, psi0, theta, 2 * steps)
    err = float(np.linalg.norm(fine - coarse))
    drift = abs(float(np.linalg.norm(fine)) - float(np.linalg.norm(psi0)))
    if err > tol or drift > tol:
        raise IntegrationError(
            f"RK4 with {steps} steps not converged (step-halving difference {err:.2e}, "
            f"norm drift {drift:.2e}, tolerance {tol:.0e}); increase steps"
        )
    return FullFockState(state.truncation, fine)


def steps_for(theta: float, per_radian: int = 200, minimum: int = 1000) -> int:
    """Step count keeping RK4 step-halving error far below 1e-8 for |H| <= ~2."""
    return max(minimum, int(math.ceil(abs(theta) * per_radian)))


def project_to_sector(state: FullFockState, n: int) -> tuple[np.ndarray, float]:
    """Amplitudes on |n-j, j, j> (j = 0..n) and the norm of everything else."""
    if n > state.truncation:
        raise ValueError(f"sector {n} does not fit in truncation {state.truncation}")
    inside = np.array([state.amps[n - j, j, j] for j in range(n + 1)])
    rest = np.array(state.amps)
    for j in range(n + 1):
        rest[n - j, j, j] = 0.0
    return inside, float(np.linalg.norm(rest))


def sector_deviation(n: int, theta: float, truncation: Optional[int] = None,
                     drive_phase: float = 0.0) -> tuple[float, float]:
    """(max |sector - full| on the sector basis, weight outside the sector) for |n,0,0>."""
    truncation = truncation if truncation is not None else max(n, 1)
    full = propagate_full(FullFockState.fock(n, truncation), theta, drive_phase)
    inside, outside = project_to_sector(full, n)
    reduced = sector_propagator(n, theta, drive_phase)[:, 0]
    return float(np.max(np.abs(inside - reduced))), outside


@dataclass
class ConservationReport:
    truncation: int
    norms: dict[str, float]

    def passed(self, tol: float = 1e-10) -> bool:
        return bool(all(v < tol for v in self.norms.values()))


def conserved_operators(truncation: int, drive_phase: float = 0.0) -> dict[str, np.ndarray]:
    a1, b1, b2 = mode_operators(truncation)
    n_a1 = a1.conj().T @ a1
    n_b1 = b1.conj().T @ b1
    n_b2 = b2.conj().T @ b2
    return {
        "omega1_plus_e1": n_a1 + n_b1,
        "e1_minus_e2": n_b1 - n_b2,
        "trilinear": numerator_operator(truncation, drive_phase),
    }


def check_constants_of_motion(truncation: int, drive_phase: float = 0.0) -> ConservationReport:
    """Spectral norms of [H, Q] acting on states with n1 + m1 <= truncation - 1."""
    if truncation < 2:
        raise ValueError(f"need truncation >= 2 to have interior sectors, got {truncation}")
    h = build_full_hamiltonian(truncation, drive_phase).matrix
    occ = occupations(truncation)
    interior = np.flatnonzero(occ[:, 0] + occ[:, 1] <= truncation - 1)
    norms = {}
    for name, q in conserved_operators(truncation, drive_phase).items():
        comm = h @ q - q @ h
        norms[name] = float(np.linalg.norm(comm[:, interior], 2))
    return ConservationReport(truncation, norms)


def _poisson_amplitudes(mean_n: float, truncation: int) -> np.ndarray:
    if mean_n == 0:
        p = np.zeros(truncation + 1)
        p[0] = 1.0
    else:
        p = np.array([math.exp(-mean_n) * mean_n**k / math.factorial(k) for k in range(truncation + 1)])
        p /= p.sum()
    return np.sqrt(p)


@dataclass
class PureCascade:
    """Coherent-input cascade on the full Fock space, one pure state per pair-count history."""

    history: list[np.ndarray]
    records: dict[DetectorRecord, float]


def pure_cascade(mean_n: float, truncation: int, stages: int, geom: StageGeometry,
                 det: DetectorModel = DetectorModel(), drive_phase: float = 0.0) -> PureCascade:
    """Propagate sum_n c_n |n,0,0> with all cross-sector coherences kept.

    After each medium pass the E modes are measured in the pair-number basis
    and reset to vacuum, which is what the beamsplitter plus detector does.
    """
    d = truncation + 1
    psi0 = np.zeros((d, d, d), dtype=complex)
    psi0[:, 0, 0] = _poisson_amplitudes(mean_n, truncation)
    branches: dict[tuple[int, ...], np.ndarray] = {(): psi0}
    history = [np.abs(psi0[:, 0, 0]) ** 2]
    for _ in range(stages):
        u = full_propagator(truncation, geom.theta, drive_phase)
        nxt = {}
        for pairs, psi in branches.items():
            out = (u @ psi.reshape(-1)).reshape(d, d, d)
            for j in range(d):
                kept = out[:, j, j]
                if np.vdot(kept, kept).real <= 1e-30:
                    continue
                reset = np.zeros((d, d, d), dtype=complex)
                reset[:, 0, 0] = kept
                nxt[pairs + (j,)] = reset
        branches = nxt
        history.append(sum(np.abs(psi[:, 0, 0]) ** 2 for psi in branches.values()))

    records: dict[DetectorRecord, float] = {}
    for pairs, psi in branches.items():
        pops = np.abs(psi[:, 0, 0]) ** 2
        stage_outcomes = [[]]
        for j in pairs:
            stage_outcomes = [prev + [(c, p)] for prev in stage_outcomes for c, p in det.outcomes(2 * j)]
        for outcome in stage_outcomes:
            p_stage = math.prod(p for _, p in outcome)
            counts = tuple(c for c, _ in outcome)
            for n, pop in enumerate(pops):
                for c_final, p_final in det.outcomes(n):
                    rec = DetectorRecord(counts, c_final)
                    records[rec] = records.get(rec, 0.0) + pop * p_stage * p_final
    return PureCascade(history, records)


def compare_pure_vs_mixture(mean_n: float, truncation: int, stages: int,
                            geom: StageGeometry = StageGeometry(math.pi),
                            det: DetectorModel = DetectorModel(),
                            drive_phase: float = 0.0) -> float:
    """Largest difference in any reported probability between a coherent-superposition
    input (full Fock space) and the Poisson-mixture input used by the cascade."""
    pure = pure_cascade(mean_n, truncation, stages, geom, det, drive_phase)
    mixture = run_cascade(
        InputSpec.coherent(mean_n, truncation=truncation, tail_tolerance=1.0),
        stages, geom, det, MediumParams(drive_phase=drive_phase),
    )
    dev = 0.0
    for p_pure, dist in zip(pure.history, mixture.history):
        q = np.zeros(max(p_pure.size, dist.probs.size))
        q[:p_pure.size] += p_pure
        q[:dist.probs.size] -= dist.probs
        dev = max(dev, float(np.max(np.abs(q))))
    mixed_records = mixture.record_distribution()
    for rec in set(pure.records) | set(mixed_records):
        dev = max(dev, abs(pure.records.get(rec, 0.0) - mixed_records.get(rec, 0.0)))
    return dev


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.tolerance)


def run_oracle_checks(truncation: int = 4, n_theta: int = 20, seed: int = 0,
                      drive_phase: float = 0.0) -> list[CheckResult]:
    """Every oracle comparison at one truncation, as (name, max deviation, tolerance)."""
    if truncation < 1:
        raise ValueError(f"truncation must be at least 1, got {truncation}")
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 4 * math.pi, size=n_theta)
    ham = build_full_hamiltonian(truncation, drive_phase)
    checks = [
        CheckResult("hermiticity", ham.hermiticity_error(), HERMITIAN_ATOL),
        CheckResult("charge_block_structure", ham.charge_leakage(), HERMITIAN_ATOL),
    ]

    two_level = ham.restrict([(1, 0, 0), (0, 1, 1)])
    checks.append(CheckResult("n1_hamiltonian_vs_sector",
                              float(np.max(np.abs(two_level - sector_hamiltonian(1, drive_phase)))), 1e-15))
    cf_dev = 0.0
    for th in thetas:
        out = propagate_full(FullFockState.fock(1, truncation), th, drive_phase)
        cf_dev = max(cf_dev, float(np.max(np.abs(
            np.array([out[(1, 0, 0)], out[(0, 1, 1)]]) - np.array(closed_form_n1(th, drive_phase))))))
    checks.append(CheckResult("n1_full_vs_closed_form", cf_dev, 1e-10))

    if truncation >= 2:
        for name, value in check_constants_of_motion(truncation, drive_phase).norms.items():
            checks.append(CheckResult(f"commutator_{name}", value, 1e-10))

    sec_dev, leak = 0.0, 0.0
    for n in range(1, truncation + 1):
        for th in thetas:
            d, o = sector_deviation(n, th, truncation, drive_phase)
            sec_dev, leak = max(sec_dev, d), max(leak, o)
    checks.append(CheckResult("sector_vs_full", sec_dev, 1e-8))
    checks.append(CheckResult("amplitude_outside_sector", leak, 1e-12))

    rk_dev = 0.0
    for n in range(1, truncation + 1):
        start = FullFockState.fock(n, truncation)
        for th in thetas[:5]:
            a = integrate_schrodinger(start, th, steps_for(th), drive_phase)
            b = propagate_full(start, th, drive_phase)
            rk_dev = max(rk_dev, float(np.max(np.abs(a.vector - b.vector))))
    checks.append(CheckResult("rk4_vs_eigendecomposition", rk_dev, 1e-7))

    mix_dev = compare_pure_vs_mixture(min(0.5, truncation / 4), truncation, 3,
                                      StageGeometry(math.pi), drive_phase=drive_phase)
    checks.append(CheckResult("pure_vs_mixture", mix_dev, 1e-10))
    return checks
