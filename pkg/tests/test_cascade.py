import math

import numpy as np
import pytest

from photon_cascade.cascade import (
    BranchOverflowError,
    CascadeBranch,
    DetectorModel,
    DetectorRecord,
    apply_stage,
    run_cascade,
    sample_cascade,
)
from photon_cascade.dynamics import MediumParams, StageGeometry, closed_form_n2
from photon_cascade.fock_sector import InputSpec

PI = StageGeometry(math.pi)
XI0, XI1, XI2 = (abs(x) for x in closed_form_n2(math.pi))


def test_single_photon_stage_is_fixed_point():
    out = apply_stage(CascadeBranch.pure({1: 1.0}), PI)
    assert len(out) == 1
    (b,) = out
    assert b.record.stage_clicks == (False,)
    assert b.remaining_n == 1
    assert b.weight == pytest.approx(1.0, abs=1e-12)
    assert b.amps[1] == pytest.approx(-1.0, abs=1e-12)


def test_vacuum_stage_unchanged():
    (b,) = apply_stage(CascadeBranch.pure({0: 1.0}), PI)
    assert b.remaining_n == 0 and b.record.stage_counts == (0,) and b.weight == 1.0


def test_two_photon_stage_branches():
    out = {(b.record.stage_counts, b.remaining_n): b.weight for b in apply_stage(CascadeBranch.pure({2: 1.0}), PI)}
    assert out[((0,), 2)] == pytest.approx(0.1706, abs=1e-4)
    assert out[((1,), 1)] == pytest.approx(0.1403, abs=1e-4)
    assert out[((1,), 0)] == pytest.approx(0.6891, abs=1e-4)
    assert sum(out.values()) == pytest.approx(1.0, abs=1e-12)


def test_no_click_branch_keeps_cross_sector_coherence():
    amps = {1: math.sqrt(0.5), 2: math.sqrt(0.5) * 1j}
    out = apply_stage(CascadeBranch.pure(amps), PI)
    silent = [b for b in out if not b.record.any_stage_click]
    assert len(silent) == 1 and silent[0].is_pure
    assert set(silent[0].amps) == {1, 2}
    assert silent[0].amps[2] == pytest.approx(math.sqrt(0.5) * 1j * closed_form_n2(math.pi)[0])


@pytest.mark.parametrize("inp", [InputSpec.fock_state(3), InputSpec.coherent(2.25)])
@pytest.mark.parametrize("eta", [1.0, 0.6])
def test_weight_conservation(inp, eta):
    res = run_cascade(inp, 6, PI, DetectorModel(eta))
    assert abs(res.total_weight - 1.0) < 1e-12
    for dist in res.history:
        assert abs(dist.probs.sum() - 1.0) < 1e-12


def test_stage_level_weight_conservation():
    branch = CascadeBranch.pure({n: math.sqrt(p) for n, p in enumerate([0.1, 0.2, 0.3, 0.4])})
    for geom in (PI, StageGeometry(1.234)):
        for det in (DetectorModel(), DetectorModel(0.5), DetectorModel(0.5, True)):
            out = apply_stage(branch, geom, det)
            assert abs(sum(b.weight for b in out) - 1.0) < 1e-12


def test_single_photon_cascade():
    res = run_cascade(InputSpec.fock_state(1), 4, PI)
    assert res.p_only_final() == pytest.approx(1.0, abs=1e-12)
    (b,) = res.stage_branches
    assert b.amps[1] == pytest.approx(1.0, abs=1e-10)  # (-1)^4


@pytest.mark.parametrize("stages", [1, 2, 3, 4, 7])
def test_two_photon_misidentification(stages):
    res = run_cascade(InputSpec.fock_state(2), stages, PI)
    assert res.p_no_stage_click() == pytest.approx(XI0 ** (2 * stages), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_monotone_filtering(n):
    res = run_cascade(InputSpec.fock_state(n), 6, PI)
    xi0_sq = res.history[1][n]
    survivals = [d[n] for d in res.history]
    np.testing.assert_allclose(survivals, xi0_sq ** np.arange(7), atol=1e-12)
    assert all(a > b for a, b in zip(survivals, survivals[1:]))


def test_record_reconstruction_two_photon():
    res = run_cascade(InputSpec.fock_state(2), 5, PI)
    s = XI0 ** 2
    for k in range(1, 6):
        p_first = res.p_first_click_at(k)
        assert p_first == pytest.approx(s ** (k - 1) * (1 - s), abs=1e-12)
        both = res.probability(lambda r: r.stage_clicks.index(True) == k - 1 if any(r.stage_clicks) else False)
        with_final = res.probability(
            lambda r: any(r.stage_clicks) and r.stage_clicks.index(True) == k - 1 and r.final_click)
        assert with_final / both == pytest.approx(XI1**2 / (XI1**2 + XI2**2), abs=1e-12)


@pytest.mark.parametrize("phi", [0.0, math.pi / 4, math.pi])
def test_drive_phase_independence(phi):
    ref = run_cascade(InputSpec.coherent(2.25), 5, PI)
    res = run_cascade(InputSpec.coherent(2.25), 5, PI, params=MediumParams(drive_phase=phi))
    for a, b in zip(ref.history, res.history):
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)
    ra, rb = ref.record_distribution(), res.record_distribution()
    assert ra.keys() == rb.keys()
    for k in ra:
        assert ra[k] == pytest.approx(rb[k], abs=1e-12)


def test_reflection_phase_cosmetic():
    a = run_cascade(InputSpec.fock_state(3), 3, PI)
    b = run_cascade(InputSpec.fock_state(3), 3, PI, reflection_phase=-1.0)
    assert a.record_distribution() == pytest.approx(b.record_distribution())


def test_vacuum_fires_nothing():
    res = run_cascade(InputSpec.fock_state(0), 3, PI)
    assert res.p_silent() == 1.0


def test_per_stage_thetas():
    res = run_cascade(InputSpec.fock_state(2), 2, [StageGeometry(math.pi), StageGeometry(2 * math.pi)])
    expected = XI0**2 * abs(closed_form_n2(2 * math.pi)[0]) ** 2
    assert res.history[2][2] == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        run_cascade(InputSpec.fock_state(2), 3, [math.pi, math.pi])


def test_branch_cap():
    with pytest.raises(BranchOverflowError):
        run_cascade(InputSpec.coherent(2.25), 6, PI, branch_cap=10)


def test_imperfect_detector_single_photon_dinf():
    res = run_cascade(InputSpec.fock_state(1), 3, PI, DetectorModel(0.8))
    assert res.p_only_final() == pytest.approx(0.8, abs=1e-12)


def test_number_resolving_detector_counts_pairs():
    res = run_cascade(InputSpec.fock_state(2), 1, PI, DetectorModel(number_resolving=True))
    dist = res.record_distribution()
    assert dist[DetectorRecord((4,), 0)] == pytest.approx(XI2**2, abs=1e-12)
    assert dist[DetectorRecord((2,), 1)] == pytest.approx(XI1**2, abs=1e-12)
    assert dist[DetectorRecord((0,), 2)] == pytest.approx(XI0**2, abs=1e-12)


def test_record_labels():
    assert DetectorRecord((0, 0, 1), 1).label() == "D3,Dinf"
    assert DetectorRecord((0,), 0).label() == "none"


def assert_records_agree(exact, freqs, trials, min_expected=20):
    """4 sigma per well-populated record; rare records are pooled into one bin."""
    assert set(freqs) <= set(exact)
    rare_p = rare_f = 0.0
    for rec, p in exact.items():
        if p * trials >= min_expected:
            assert abs(freqs.get(rec, 0.0) - p) <= 4 * math.sqrt(p * (1 - p) / trials)
        else:
            rare_p += p
            rare_f += freqs.get(rec, 0.0)
    assert abs(rare_f - rare_p) <= 4 * math.sqrt(rare_p * (1 - rare_p) / trials) + 1e-12


def test_sample_single_photon_deterministic_branch():
    s = sample_cascade(InputSpec.fock_state(1), 5, PI, trials=1000, seed=3)
    assert not s.stage_counts.any()
    assert s.final_counts.all()


def test_sample_two_photon_click_frequency():
    trials = 1_000_000
    s = sample_cascade(InputSpec.fock_state(2), 1, PI, trials=trials, seed=11)
    p = 1 - XI0**2
    freq = s.stage_counts[:, 0].mean()
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / trials)


def test_sample_matches_exact_coherent():
    trials = 100_000
    exact = run_cascade(InputSpec.coherent(2.25), 8, PI)
    s = sample_cascade(InputSpec.coherent(2.25), 8, PI, trials=trials, seed=5)
    for dist, emp in zip(exact.history, s.history()):
        assert_records_agree(dict(enumerate(dist.probs)), {n: f for n, f in enumerate(emp) if f}, trials)
    assert_records_agree(exact.record_distribution(), s.record_frequencies(), trials)


def test_sample_matches_exact_lossy_detector():
    trials = 200_000
    det = DetectorModel(0.7)
    exact = run_cascade(InputSpec.fock_state(3), 3, PI, det)
    s = sample_cascade(InputSpec.fock_state(3), 3, PI, det, trials=trials, seed=2)
    assert_records_agree(exact.record_distribution(), s.record_frequencies(), trials)


def test_sample_is_reproducible():
    a = sample_cascade(InputSpec.coherent(2.25), 4, PI, trials=70_000, seed=9)
    b = sample_cascade(InputSpec.coherent(2.25), 4, PI, trials=70_000, seed=9)
    np.testing.assert_array_equal(a.stage_counts, b.stage_counts)
    np.testing.assert_array_equal(a.photon_numbers, b.photon_numbers)


def test_untracked_records_keep_number_history():
    inp = InputSpec.coherent(1.5, truncation=14)
    geoms = [StageGeometry(math.pi), StageGeometry(2.0), StageGeometry(2 * math.pi), StageGeometry(0.7)]
    for det in (DetectorModel(), DetectorModel(0.6), DetectorModel(0.8, number_resolving=True)):
        full = run_cascade(inp, 4, geoms, det)
        lean = run_cascade(inp, 4, geoms, det, track_records=False)
        for a, b in zip(full.history, lean.history):
            np.testing.assert_allclose(a.probs, b.probs, atol=1e-13)
        assert len(lean.stage_branches) <= 2 * (inp.truncation + 1)
        assert lean.total_weight == pytest.approx(1.0, abs=1e-12)
