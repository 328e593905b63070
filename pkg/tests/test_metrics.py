import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqmix_kd.audio_io import Key, Manifest, TrialRecord
from freqmix_kd.errors import EmptyScores, InvalidCoefficients, MalformedLine, MissingScore, UnknownUttId
from freqmix_kd.metrics import (
    ScoreSet,
    TdcfCoefficients,
    eer,
    evaluate,
    load_score_set,
    min_tdcf,
    preset,
    read_scores,
    sweep,
    tdcf_coefficients_from_asv,
    tdcf_curve,
    write_scores,
)

from .oracles import oracle_eer, oracle_min_tdcf

scores = st.lists(st.integers(-20, 20).map(lambda v: v / 4), min_size=1, max_size=30)


def test_perfect_separation():
    assert eer(ScoreSet([0.9, 0.8, 0.7], [0.3, 0.2, 0.1]))[0] == 0.0


def test_perfect_inversion():
    assert eer(ScoreSet([0.1], [0.9]))[0] == 1.0


def test_two_by_two_example():
    e, t = eer(ScoreSet([0.8, 0.4], [0.6, 0.2]))
    assert e == 0.5 and 0.4 < t <= 0.6
    assert (e, t) == oracle_eer([0.8, 0.4], [0.6, 0.2])


def test_empty_scores():
    with pytest.raises(EmptyScores):
        eer(ScoreSet([], [0.1]))
    with pytest.raises(EmptyScores):
        min_tdcf(ScoreSet([0.1], []), TdcfCoefficients(1, 1))


def test_tdcf_examples():
    perfect = ScoreSet([0.9, 0.8], [0.1, 0.2])
    assert min_tdcf(perfect, TdcfCoefficients(1.0, 1.0, 0.0))[0] == 0.0
    s = ScoreSet([0.8, 0.4, 0.3], [0.6, 0.2, 0.5])
    thr, cost = tdcf_curve(s, TdcfCoefficients(c_miss=2.0, c_fa=3.0, c0=0.5))
    assert thr[0] == -math.inf and cost[0] == 0.5 + 3.0


def test_unit_costs_equal_min_far_plus_frr():
    bona, spoof = [0.8, 0.4, 0.35, 0.1], [0.6, 0.2, 0.5]
    value, _ = min_tdcf(ScoreSet(bona, spoof), TdcfCoefficients(1.0, 1.0))
    from .oracles import exhaustive_rates

    assert value == min(far + frr for _, far, frr in exhaustive_rates(bona, spoof))


@pytest.mark.parametrize("c", [TdcfCoefficients(0, 1), TdcfCoefficients(1, -1), TdcfCoefficients(1, 1, -0.1)])
def test_invalid_coefficients(c):
    with pytest.raises(InvalidCoefficients):
        min_tdcf(ScoreSet([1.0], [0.0]), c)


def test_asvspoof_preset_reduction():
    c = tdcf_coefficients_from_asv(0.0, 0.0, 1.0)
    assert c.c0 == 0.0
    assert c.c_miss == pytest.approx(0.95 * 0.99)
    assert c.c_fa == pytest.approx(0.5)
    c = tdcf_coefficients_from_asv(0.1, 0.05, 0.4)
    c0 = 0.9405 * 0.1 + 0.0095 * 10 * 0.05
    assert c.c0 == pytest.approx(c0)
    assert c.c_miss == pytest.approx(0.9405 - c0)
    assert c.c_fa == pytest.approx(0.05 * 10 * 0.4)
    assert preset("asvspoof2021").normalize
    with pytest.raises(InvalidCoefficients):
        preset("nope")


@settings(max_examples=200, deadline=None)
@given(bona=scores, spoof=scores)
def test_eer_matches_oracle(bona, spoof):
    assert eer(ScoreSet(bona, spoof)) == oracle_eer(bona, spoof)


@settings(max_examples=200, deadline=None)
@given(bona=scores, spoof=scores, c0=st.sampled_from([0.0, 0.3]), norm=st.booleans(),
       cm=st.sampled_from([1.0, 0.9405, 2.5]), cf=st.sampled_from([1.0, 0.5, 7.0]))
def test_min_tdcf_matches_oracle_and_is_minimal(bona, spoof, c0, norm, cm, cf):
    c = TdcfCoefficients(cm, cf, c0, norm)
    got = min_tdcf(ScoreSet(bona, spoof), c)
    assert got == oracle_min_tdcf(bona, spoof, cm, cf, c0, norm)
    _, curve = tdcf_curve(ScoreSet(bona, spoof), c)
    assert np.all(got[0] <= curve)


@settings(max_examples=100, deadline=None)
@given(bona=scores, spoof=scores)
def test_eer_invariant_to_increasing_transform(bona, spoof):
    base = eer(ScoreSet(bona, spoof))[0]
    assert eer(ScoreSet(np.exp(bona), np.exp(spoof)))[0] == base
    assert eer(ScoreSet(3 * np.asarray(bona) + 1, 3 * np.asarray(spoof) + 1))[0] == base


def test_eer_role_swap_symmetry(rng):
    # swapping roles maps each (FAR, FRR) cut to (FRR, FAR); the reported EER
    # is symmetric whenever the |FAR - FRR| minimiser is unique
    checked = 0
    for _ in range(200):
        bona = rng.normal(1, 1, rng.integers(1, 40))
        spoof = rng.normal(0, 1, rng.integers(1, 40))
        _, far, frr = sweep(ScoreSet(bona, spoof))
        _, far2, frr2 = sweep(ScoreSet(-spoof, -bona))
        gap, gap2 = np.abs(far - frr), np.abs(far2 - frr2)
        assert gap.min() == gap2.min()
        if np.sum(gap == gap.min()) == 1:
            assert eer(ScoreSet(bona, spoof))[0] == eer(ScoreSet(-spoof, -bona))[0]
            checked += 1
    assert checked > 50


def manifest(n_bona, n_spoof):
    recs = [TrialRecord(f"b{i}", Key.BONAFIDE) for i in range(n_bona)]
    recs += [TrialRecord(f"s{i}", Key.SPOOF) for i in range(n_spoof)]
    return Manifest(recs, ".")


def test_score_file_partition_and_roundtrip(tmp_path):
    m = manifest(2, 3)
    sc = {"b0": 1.5, "s0": -0.25, "b1": 0.1 + 0.2, "s1": 1e-17, "s2": -3.0}
    path = tmp_path / "scores.txt"
    write_scores(path, sc)
    assert read_scores(path) == sc
    s = load_score_set(path, m)
    assert (s.bona_scores.size, s.spoof_scores.size) == (2, 3)
    assert s.bona_scores.tolist() == [1.5, 0.1 + 0.2]
    write_scores(tmp_path / "again.txt", read_scores(path))
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_score_file_errors(tmp_path):
    m = manifest(1, 1)
    p = tmp_path / "s.txt"
    p.write_text("b0 1.0\ns0 0.0\nzz 3.0\n")
    with pytest.raises(UnknownUttId):
        load_score_set(p, m)
    p.write_text("b0 1.0\n")
    with pytest.raises(MissingScore):
        load_score_set(p, m)
    p.write_text("b0 1.0 extra\n")
    with pytest.raises(MalformedLine):
        read_scores(p)
    p.write_text("b0 abc\n")
    with pytest.raises(MalformedLine):
        read_scores(p)


def test_report_is_stable():
    s = ScoreSet([0.8, 0.4, 0.7], [0.6, 0.2])
    a, b = evaluate(s).to_json(), evaluate(s).to_json()
    assert a == b
    assert '"n_bonafide": 3' in a and '"n_spoof": 2' in a
