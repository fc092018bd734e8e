"""Medium -> beamsplitter -> avalanche detector cascade.

Each stage evolves the Omega_1 pulse through the medium, the beamsplitter
sends every E_1/E_2 photon pair into that stage's detector, and the detector
outcome conditions what continues to the next stage.  After the last stage a
terminal detector (D_inf) registers whatever is left in Omega_1.

Branches are enumerated exactly.  A branch is a (sub-normalized) state of the
Omega_1 mode conditioned on a detector record.  Measurement outcomes that the
detector's microstate distinguishes (different numbers of absorbed pairs) are
never recombined coherently; when two such histories end up with the same
record and photon number they are merged into a mixed branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import binom

from .dynamics import MediumParams, StageGeometry, transfer_amplitudes
from .fock_sector import NumberDistribution, InputSpec

DEFAULT_REFLECTION_PHASE = 1j
DEFAULT_BRANCH_CAP = 1_000_000
SAMPLE_CHUNK = 1 << 16
# Branches lighter than this are rounding debris from exact zeros (e.g. |0,1,1> at theta = pi).
PRUNE_WEIGHT = 1e-28


class BranchOverflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectorModel:
    """Per-photon efficiency and whether the detector resolves photon number.

    The default (unit efficiency, no number resolution) is an ideal avalanche
    photodiode.
    """

    efficiency: float = 1.0
    number_resolving: bool = False

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"detector efficiency must be in (0, 1], got {self.efficiency}")

    def outcomes(self, photons: int) -> list[tuple[int, float]]:
        """(reported count, probability) pairs for ``photons`` incident photons.

        Non-resolving detectors report 1 for a click and 0 otherwise.
        """
        if photons == 0:
            return [(0, 1.0)]
        if self.efficiency == 1.0:
            return [(photons if self.number_resolving else 1, 1.0)]
        detected = binom.pmf(np.arange(photons + 1), photons, self.efficiency)
        if self.number_resolving:
            return [(k, float(p)) for k, p in enumerate(detected) if p > 0]
        p_dark = (1.0 - self.efficiency) ** photons
        return [(0, p_dark), (1, 1.0 - p_dark)]

    def click_probability(self, photons: int) -> float:
        return 1.0 - (1.0 - self.efficiency) ** photons


@dataclass(frozen=True, order=True)
class DetectorRecord:
    """Outcomes of the stage detectors D^1..D^k and, once measured, of D_inf.

    ``stage_counts`` holds reported counts; for a non-resolving detector those
    are 0 (no click) or 1 (click).  ``final_count`` is None until the terminal
    detector has been read out.
    """

    stage_counts: tuple[int, ...] = ()
    final_count: Optional[int] = None

    @property
    def stage_clicks(self) -> tuple[bool, ...]:
        return tuple(c > 0 for c in self.stage_counts)

    @property
    def final_click(self) -> Optional[bool]:
        return None if self.final_count is None else self.final_count > 0

    @property
    def any_stage_click(self) -> bool:
        return any(self.stage_counts)

    def extend(self, count: int) -> "DetectorRecord":
        return DetectorRecord(self.stage_counts + (count,), self.final_count)

    def finish(self, count: int) -> "DetectorRecord":
        return DetectorRecord(self.stage_counts, count)

    def label(self) -> str:
        """Compact text form, e.g. ``D3,Dinf`` or ``none``."""
        fired = [f"D{i + 1}" if c == 1 else f"D{i + 1}x{c}"
                 for i, c in enumerate(self.stage_counts) if c]
        if self.final_count:
            fired.append("Dinf" if self.final_count == 1 else f"Dinfx{self.final_count}")
        return ",".join(fired) if fired else "none"

    def __len__(self) -> int:
        return len(self.stage_counts)


@dataclass(frozen=True)
class CascadeBranch:
    """A record together with the conditional state of the Omega_1 pulse.

    ``amps`` maps remaining photon number to the amplitude on |n,0,0> and is
    present only for pure branches; mixed branches carry ``populations`` only.
    ``weight`` is the branch probability.
    """

    record: DetectorRecord
    populations: Mapping[int, float]
    amps: Optional[Mapping[int, complex]] = None

    @classmethod
    def pure(cls, amps: Mapping[int, complex], record: DetectorRecord = DetectorRecord()) -> "CascadeBranch":
        amps = {int(n): complex(a) for n, a in sorted(amps.items())}
        return cls(record, {n: abs(a) ** 2 for n, a in amps.items()}, amps)

    @classmethod
    def mixed(cls, populations: Mapping[int, float], record: DetectorRecord) -> "CascadeBranch":
        return cls(record, {int(n): float(p) for n, p in sorted(populations.items())}, None)

    @property
    def weight(self) -> float:
        return math.fsum(self.populations.values())

    @property
    def remaining_n(self) -> Optional[int]:
        """Photon number left in Omega_1, if the branch has a definite one."""
        return next(iter(self.populations)) if len(self.populations) == 1 else None

    @property
    def is_pure(self) -> bool:
        return self.amps is not None


def _merge_key(branch: CascadeBranch):
    n = branch.remaining_n
    if n is None:
        return None
    return (branch.record, n)


def apply_stage(branch: CascadeBranch, geom: StageGeometry,
                det: DetectorModel = DetectorModel(),
                params: MediumParams = MediumParams(),
                reflection_phase: complex = DEFAULT_REFLECTION_PHASE) -> list[CascadeBranch]:
    """Send one branch through medium, beamsplitter and stage detector.

    For every number j of diverted photon pairs and every detector report the
    result is a separate branch.  The j = 0 branch keeps its coherence across
    photon-number sectors.  The diverted photons pick up ``reflection_phase``
    each, which only affects amplitudes, never probabilities.
    """
    if not branch.populations:
        return []
    n_top = max(branch.populations)
    xi = {n: transfer_amplitudes(n, geom.theta, params.drive_phase) for n in branch.populations}
    out = []
    for j in range(n_top + 1):
        contributors = [n for n in branch.populations if n >= j]
        if not contributors:
            continue
        bs_phase = reflection_phase ** (2 * j)
        for count, p_report in det.outcomes(2 * j):
            record = branch.record.extend(count)
            if branch.amps is not None:
                scale = math.sqrt(p_report) * bs_phase
                amps = {n - j: branch.amps[n] * xi[n][j] * scale for n in contributors}
                amps = {m: a for m, a in amps.items() if abs(a) ** 2 > PRUNE_WEIGHT}
                if amps:
                    out.append(CascadeBranch.pure(amps, record))
            else:
                pops = {n - j: branch.populations[n] * abs(xi[n][j]) ** 2 * p_report
                        for n in contributors}
                pops = {m: p for m, p in pops.items() if p > PRUNE_WEIGHT}
                if pops:
                    out.append(CascadeBranch.mixed(pops, record))
    return out


def detect_remaining(branch: CascadeBranch, det: DetectorModel = DetectorModel()) -> list[CascadeBranch]:
    """Read out the terminal detector D_inf on whatever is left in Omega_1."""
    out = []
    for n, pop in branch.populations.items():
        for count, p_report in det.outcomes(n):
            if pop * p_report > 0:
                out.append(CascadeBranch.mixed({n: pop * p_report}, branch.record.finish(count)))
    return out


def merge_branches(branches: Iterable[CascadeBranch]) -> list[CascadeBranch]:
    """Combine branches with identical record and definite photon number.

    Branches that cannot be told apart by any later measurement are merged;
    a merge of more than one contributor yields a mixed branch.  The result is
    sorted by (record, photon number) so enumeration order is reproducible.
    """
    merged: dict = {}
    singles: dict = {}
    loose = []
    for br in branches:
        key = _merge_key(br)
        if key is None:
            loose.append(br)
            continue
        if key in merged:
            merged[key] += br.weight
            singles.pop(key, None)
        else:
            merged[key] = br.weight
            singles[key] = br
    out = [singles.get(key) or CascadeBranch.mixed({key[1]: w}, key[0]) for key, w in merged.items()]
    out.extend(loose)
    out.sort(key=lambda b: (b.record.stage_counts, -1 if b.record.final_count is None else b.record.final_count,
                            tuple(b.populations)))
    return out


def number_distribution(branches: Sequence[CascadeBranch], n_max: Optional[int] = None) -> NumberDistribution:
    """Unconditional Omega_1 photon-number distribution over all branches."""
    top = max((max(b.populations) for b in branches if b.populations), default=0)
    size = max(top, n_max or 0) + 1
    probs = np.zeros(size)
    for b in branches:
        for n, p in b.populations.items():
            probs[n] += p
    return NumberDistribution(probs)


def initial_branches(inp: InputSpec) -> list[CascadeBranch]:
    """One branch per photon number: coherent inputs enter as a Poisson mixture."""
    dist = inp.distribution()
    if inp.kind == "fock":
        return [CascadeBranch.pure({inp.n: 1.0})]
    return [CascadeBranch.pure({n: math.sqrt(p)}) for n, p in enumerate(dist.probs) if p > 0]


def _stage_thetas(geom, stages: int) -> list[StageGeometry]:
    if isinstance(geom, StageGeometry):
        return [geom] * stages
    geoms = [g if isinstance(g, StageGeometry) else StageGeometry(float(g)) for g in geom]
    if len(geoms) == 1:
        return geoms * stages
    if len(geoms) != stages:
        raise ValueError(f"got {len(geoms)} stage lengths for {stages} stages")
    return geoms


@dataclass
class CascadeResult:
    """Exact outcome of a cascade run.

    ``history[k]`` is the Omega_1 photon-number distribution after k stages
    (``history[0]`` is the input).  ``branches`` include the terminal
    detector readout.
    """

    branches: list[CascadeBranch]
    history: list[NumberDistribution]
    stage_branches: list[CascadeBranch] = field(repr=False, default_factory=list)

    def record_distribution(self) -> dict[DetectorRecord, float]:
        dist: dict[DetectorRecord, float] = {}
        for b in self.branches:
            dist[b.record] = dist.get(b.record, 0.0) + b.weight
        return dict(sorted(dist.items()))

    def probability(self, predicate) -> float:
        return math.fsum(b.weight for b in self.branches if predicate(b.record))

    def p_only_final(self) -> float:
        """Probability that no stage detector fires but D_inf does."""
        return self.probability(lambda r: not r.any_stage_click and bool(r.final_count))

    def p_no_stage_click(self) -> float:
        return self.probability(lambda r: not r.any_stage_click)

    def p_first_click_at(self, stage: int) -> float:
        """Probability that the earliest stage detector to fire is D^stage (1-based)."""
        def first(r):
            clicks = r.stage_clicks
            return any(clicks) and clicks.index(True) == stage - 1
        return self.probability(first)

    def p_silent(self) -> float:
        """Probability that no detector at all fires."""
        return self.probability(lambda r: not r.any_stage_click and not r.final_count)

    @property
    def total_weight(self) -> float:
        return math.fsum(b.weight for b in self.branches)


def run_cascade(inp: InputSpec, stages: int,
                geom: Union[StageGeometry, Sequence] = StageGeometry(math.pi),
                det: DetectorModel = DetectorModel(),
                params: MediumParams = MediumParams(),
                reflection_phase: complex = DEFAULT_REFLECTION_PHASE,
                branch_cap: int = DEFAULT_BRANCH_CAP,
                track_records: bool = True) -> CascadeResult:
    """Exact branch enumeration of ``stages`` cascade stages followed by D_inf.

    ``geom`` is either one geometry used for every stage or a per-stage list.
    With ``track_records=False`` the stage detector outcomes are discarded
    after each stage, so branches merge by photon number alone.  The
    photon-number history is unchanged, the branch count stays linear in the
    input truncation, and the returned records only keep the D_inf outcome.
    """
    if stages < 1:
        raise ValueError(f"need at least one stage, got {stages}")
    geoms = _stage_thetas(geom, stages)
    branches = initial_branches(inp)
    n_max = max(max(b.populations) for b in branches)
    history = [number_distribution(branches, n_max)]
    for k, g in enumerate(geoms, start=1):
        nxt = []
        for br in branches:
            nxt.extend(apply_stage(br, g, det, params, reflection_phase))
        if not track_records:
            nxt = [replace(br, record=DetectorRecord()) for br in nxt]
        branches = merge_branches(nxt)
        if len(branches) > branch_cap:
            raise BranchOverflowError(
                f"{len(branches)} branches after stage {k} exceed the cap of {branch_cap}; "
                "reduce the input truncation or the number of stages"
            )
        history.append(number_distribution(branches, n_max))
    final = []
    for br in branches:
        final.extend(detect_remaining(br, det))
    return CascadeResult(merge_branches(final), history, branches)


@dataclass
class SampleResult:
    trials: int
    stage_counts: np.ndarray      # (trials, stages) reported counts
    final_counts: np.ndarray      # (trials,)
    photon_numbers: np.ndarray    # (stages + 1, trials) Omega_1 photons after each stage

    def history(self) -> list[np.ndarray]:
        """Empirical photon-number frequencies after each stage."""
        top = int(self.photon_numbers.max(initial=0))
        return [np.bincount(row, minlength=top + 1) / self.trials for row in self.photon_numbers]

    def record_frequencies(self) -> dict[DetectorRecord, float]:
        rows = np.column_stack([self.stage_counts, self.final_counts])
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        return {DetectorRecord(tuple(int(c) for c in u[:-1]), int(u[-1])): n / self.trials
                for u, n in zip(uniq, counts)}

    def frequency(self, predicate) -> float:
        return sum(f for r, f in self.record_frequencies().items() if predicate(r))


def sample_cascade(inp: InputSpec, stages: int,
                   geom: Union[StageGeometry, Sequence] = StageGeometry(math.pi),
                   det: DetectorModel = DetectorModel(),
                   params: MediumParams = MediumParams(),
                   trials: int = 10_000, seed: int = 0) -> SampleResult:
    """Monte Carlo version of :func:`run_cascade`, one photon-number history per trial.

    Trials are drawn in fixed-size chunks, each from its own Philox stream
    spawned from ``seed``, so results depend only on (seed, trials).
    """
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    if stages < 1:
        raise ValueError(f"need at least one stage, got {stages}")
    geoms = _stage_thetas(geom, stages)
    p_in = inp.distribution().probs
    n_top = p_in.size - 1
    jump_probs = [
        {n: np.abs(transfer_amplitudes(n, g.theta, params.drive_phase)) ** 2 for n in range(n_top + 1)}
        for g in geoms
    ]

    n_chunks = -(-trials // SAMPLE_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    stage_counts = np.zeros((trials, stages), dtype=np.int64)
    final_counts = np.zeros(trials, dtype=np.int64)
    photons = np.zeros((stages + 1, trials), dtype=np.int64)

    for c, ss in enumerate(seeds):
        lo, hi = c * SAMPLE_CHUNK, min((c + 1) * SAMPLE_CHUNK, trials)
        rng = np.random.Generator(np.random.Philox(ss))
        n = rng.choice(p_in.size, size=hi - lo, p=p_in)
        photons[0, lo:hi] = n
        for k in range(stages):
            pairs = np.zeros_like(n)
            for m in np.unique(n):
                sel = n == m
                pm = jump_probs[k][int(m)]
                pairs[sel] = rng.choice(pm.size, size=int(sel.sum()), p=pm / pm.sum())
            stage_counts[lo:hi, k] = _report(rng, 2 * pairs, det)
            n = n - pairs
            photons[k + 1, lo:hi] = n
        final_counts[lo:hi] = _report(rng, n, det)
    return SampleResult(trials, stage_counts, final_counts, photons)


def _report(rng: np.random.Generator, photons: np.ndarray, det: DetectorModel) -> np.ndarray:
    detected = photons if det.efficiency == 1.0 else rng.binomial(photons, det.efficiency)
    return detected if det.number_resolving else (detected > 0).astype(np.int64)
