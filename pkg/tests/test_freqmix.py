import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqmix_kd.errors import BatchTooSmall, ConfigError, ShapeMismatch
from freqmix_kd.features import FeatureMap
from freqmix_kd.freqmix import (
    BandSelection,
    FreqmixConfig,
    apply_freqmix,
    draw_gate,
    freqmix_batch,
    select_band,
)


def batch(rng, b, frames=600):
    return rng.normal(size=(b, 45, frames))


def test_gate_boundaries():
    r = np.random.default_rng(0)
    assert not any(draw_gate(r, FreqmixConfig(gate_threshold=1.0)) for _ in range(2000))
    assert all(draw_gate(r, FreqmixConfig(gate_threshold=0.0)) for _ in range(2000))
    assert not draw_gate(r, FreqmixConfig(enabled=False, gate_threshold=0.0))


def test_gate_fraction():
    r = np.random.default_rng(1)
    fired = sum(draw_gate(r, FreqmixConfig()) for _ in range(10000))
    assert 0.485 <= fired / 10000 <= 0.515


def test_select_band_ranges():
    r = np.random.default_rng(2)
    cfg = FreqmixConfig()
    spans = set()
    for _ in range(3000):
        sel = select_band(r, cfg, 5)
        assert 1 <= sel.f <= 10 and sel.f0 >= 0 and sel.f0 + sel.f <= 45
        assert sorted(sel.permutation) == list(range(5))
        spans.add(sel.f)
    assert spans == set(range(1, 11))


def test_select_band_small_batch():
    with pytest.raises(BatchTooSmall):
        select_band(np.random.default_rng(0), FreqmixConfig(), 1)


def test_select_band_deterministic():
    a = select_band(np.random.default_rng(9), FreqmixConfig(), 8)
    b = select_band(np.random.default_rng(9), FreqmixConfig(), 8)
    assert a == b


def test_derangement_flag():
    r = np.random.default_rng(3)
    cfg = FreqmixConfig(derangement=True)
    for _ in range(200):
        perm = select_band(r, cfg, 4).permutation
        assert all(p != i for i, p in enumerate(perm))


def test_identical_maps_unchanged(rng):
    one = rng.normal(size=(45, 600))
    x = np.stack([one] * 4)
    out = apply_freqmix(x, BandSelection(10, 8, (3, 2, 0, 1)))
    assert np.array_equal(out, x)


def test_identity_permutation(rng):
    x = batch(rng, 3)
    assert np.array_equal(apply_freqmix(x, BandSelection(0, 10, (0, 1, 2))), x)


def test_swap_example_hand_constructed():
    a = np.zeros((45, 600))
    b = np.ones((45, 600))
    out = apply_freqmix(np.stack([a, b]), BandSelection(3, 2, (1, 0)))
    exp_a, exp_b = a.copy(), b.copy()
    exp_a[3:5] = 1.0
    exp_b[3:5] = 0.0
    assert np.array_equal(out[0], exp_a) and np.array_equal(out[1], exp_b)


def test_feature_map_sequence_in_and_out(rng):
    maps = [FeatureMap(rng.normal(size=(45, 600)), f"u{i}") for i in range(3)]
    out = apply_freqmix(maps, BandSelection(0, 1, (1, 2, 0)))
    assert [m.utt_id for m in out] == ["u0", "u1", "u2"]
    assert np.array_equal(out[0].values[0], maps[1].values[0])


def test_shape_and_selection_errors(rng):
    with pytest.raises(ShapeMismatch):
        apply_freqmix(rng.normal(size=(45, 600)), BandSelection(0, 1, (0,)))
    with pytest.raises(ShapeMismatch):
        apply_freqmix(batch(rng, 2), BandSelection(40, 10, (1, 0)))
    with pytest.raises(ShapeMismatch):
        apply_freqmix(batch(rng, 2), BandSelection(0, 3, (0, 0)))


def test_freqmix_batch_policies(rng):
    x = batch(rng, 4)
    out, sel = freqmix_batch(x, FreqmixConfig(gate_threshold=1.0), np.random.default_rng(0))
    assert sel is None and np.array_equal(out, x)
    single = batch(rng, 1)
    out, sel = freqmix_batch(single, FreqmixConfig(gate_threshold=0.0), np.random.default_rng(0))
    assert sel is None and np.array_equal(out, single)


def test_freqmix_batch_is_composition(rng):
    x = batch(rng, 6)
    cfg = FreqmixConfig(gate_threshold=0.0)
    out, sel = freqmix_batch(x, cfg, np.random.default_rng(4))
    r = np.random.default_rng(4)
    assert draw_gate(r, cfg)
    expected_sel = select_band(r, cfg, 6)
    assert sel == expected_sel
    assert np.array_equal(out, apply_freqmix(x, expected_sel))


@pytest.mark.parametrize("kwargs", [dict(f_max=0), dict(f_max=46), dict(gate_threshold=1.5),
                                    dict(granularity="per_sample")])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FreqmixConfig(**kwargs)


@settings(max_examples=60, deadline=None)
@given(b=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_band_conservation_and_outside_identity(b, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(b, 45, 20))
    sel = select_band(r, FreqmixConfig(), b)
    out = apply_freqmix(x, sel)
    rows = np.zeros(45, bool)
    rows[sel.rows()] = True
    assert np.array_equal(out[:, ~rows], x[:, ~rows])
    for row in np.flatnonzero(rows):
        got = sorted(map(tuple, out[:, row]))
        want = sorted(map(tuple, x[:, row]))
        assert got == want


@settings(max_examples=40, deadline=None)
@given(b=st.integers(2, 8), i=st.integers(0, 7), j=st.integers(0, 7), f0=st.integers(0, 35),
       f=st.integers(1, 10))
def test_swap_is_involution(b, i, j, f0, f):
    i, j = i % b, j % b
    perm = list(range(b))
    perm[i], perm[j] = perm[j], perm[i]
    sel = BandSelection(f0, f, tuple(perm))
    x = np.random.default_rng(b * 100 + f0).normal(size=(b, 45, 8))
    assert np.array_equal(apply_freqmix(apply_freqmix(x, sel), sel), x)
