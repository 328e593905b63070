import warnings

import numpy as np
import pytest

from freqmix_kd.audio_io import Waveform
from freqmix_kd.errors import ConfigError
from freqmix_kd.rawboost import (
    DegenerateSignalWarning,
    ISDConfig,
    RawboostConfig,
    RawboostMode,
    SSIConfig,
    apply_isd,
    apply_rawboost,
    apply_ssi,
    isd_positions,
    item_rng,
    peaking_biquad,
    ssi_noise,
)

from .conftest import sine


def snr_db(signal, noise):
    return 10 * np.log10(np.mean(signal**2) / np.mean(noise**2))


def test_ssi_zero_input_is_unchanged_with_warning():
    w = Waveform(np.zeros(4000))
    with pytest.warns(DegenerateSignalWarning):
        out = apply_ssi(w, RawboostConfig(), np.random.default_rng(0))
    assert np.array_equal(out.samples, w.samples)


def test_ssi_unit_sine_at_10db():
    cfg = RawboostConfig(ssi=SSIConfig(snr_min_db=10.0, snr_max_db=10.0))
    w = sine(440, amp=1.0)
    noise, target = ssi_noise(w, cfg, np.random.default_rng(3))
    assert target == 10.0
    assert abs(snr_db(w.samples, noise) - 10.0) < 0.1


def test_ssi_achieved_snr_without_clipping(rng):
    cfg = RawboostConfig()
    for i in range(20):
        w = sine(rng.uniform(100, 3000), amp=0.2)
        r = np.random.default_rng(i)
        noise, target = ssi_noise(w, cfg, r)
        out = apply_ssi(w, cfg, np.random.default_rng(i))
        assert cfg.ssi.snr_min_db <= target <= cfg.ssi.snr_max_db
        assert np.abs(w.samples + noise).max() <= 1.0
        added = out.samples - w.samples
        assert np.allclose(added, noise, rtol=0, atol=1e-15)
        assert abs(snr_db(w.samples, added) - target) < 0.1


def test_ssi_is_deterministic():
    w = sine(300)
    a = apply_ssi(w, RawboostConfig(), np.random.default_rng(42))
    b = apply_ssi(w, RawboostConfig(), np.random.default_rng(42))
    assert np.array_equal(a.samples, b.samples)


def test_peaking_biquad_gain_at_center():
    from scipy.signal import freqz

    b, a = peaking_biquad(1000.0, 200.0, 12.0, 16000)
    _, h = freqz(b, a, worN=[1000.0], fs=16000)
    assert 20 * np.log10(abs(h[0])) == pytest.approx(12.0, abs=1e-6)
    b, a = peaking_biquad(1000.0, 200.0, 0.0, 16000)
    assert np.allclose(b, a)


def test_isd_no_positions():
    w = Waveform(np.linspace(0.1, 0.5, 10))
    cfg = RawboostConfig(isd=ISDConfig(p_samples_pct=1.0))
    assert isd_positions(10, 1.0) == 0
    assert np.array_equal(apply_isd(w, cfg, np.random.default_rng(0)).samples, w.samples)


def test_isd_modifies_exactly_k_positions(rng):
    x = rng.uniform(0.05, 0.3, 1000) * rng.choice([-1, 1], 1000)
    w = Waveform(x)
    out = apply_isd(w, RawboostConfig(isd=ISDConfig(p_samples_pct=10.0)), np.random.default_rng(1))
    changed = np.flatnonzero(out.samples != x)
    assert changed.size == 100
    assert np.unique(changed).size == 100


def test_isd_zero_signal_fixed_point():
    w = Waveform(np.zeros(500))
    out = apply_isd(w, RawboostConfig(isd=ISDConfig(p_samples_pct=50)), np.random.default_rng(5))
    assert np.array_equal(out.samples, w.samples)


def test_isd_perturbation_bounded_by_gain(rng):
    x = rng.uniform(-0.2, 0.2, 2000)
    cfg = RawboostConfig(isd=ISDConfig(p_samples_pct=30, g_sd_db=2.0))
    out = apply_isd(Waveform(x), cfg, np.random.default_rng(9))
    g = 10 ** (2.0 / 20)
    assert np.all(np.abs(out.samples - x) <= g * np.abs(x) + 1e-15)


@pytest.mark.parametrize("mode", list(RawboostMode))
def test_output_length_and_range(mode, rng):
    w = Waveform(np.clip(rng.normal(0, 0.5, 3000), -1, 1))
    out = apply_rawboost(w, RawboostConfig(mode=mode), np.random.default_rng(0))
    assert len(out) == len(w)
    assert np.abs(out.samples).max() <= 1.0


def test_dispatch_matches_components():
    w = sine(220)
    cfg_ssi = RawboostConfig(mode="ssi_only")
    cfg_isd = RawboostConfig(mode="isd_only")
    cfg_ser = RawboostConfig(mode="series_isd_then_ssi")
    r = lambda: np.random.default_rng(77)
    assert np.array_equal(apply_rawboost(w, cfg_ssi, r()).samples, apply_ssi(w, cfg_ssi, r()).samples)
    assert np.array_equal(apply_rawboost(w, cfg_isd, r()).samples, apply_isd(w, cfg_isd, r()).samples)
    g = r()
    expected = apply_ssi(apply_isd(w, cfg_ser, g), cfg_ser, g)
    assert np.array_equal(apply_rawboost(w, cfg_ser, r()).samples, expected.samples)


def test_item_rng_streams():
    a = item_rng(1, "utt", 0).random(4)
    assert np.array_equal(a, item_rng(1, "utt", 0).random(4))
    assert not np.array_equal(a, item_rng(1, "utt", 1).random(4))
    assert not np.array_equal(a, item_rng(1, "other", 0).random(4))
    assert not np.array_equal(a, item_rng(2, "utt", 0).random(4))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(ssi=SSIConfig(snr_min_db=30, snr_max_db=10)),
        dict(isd=ISDConfig(p_samples_pct=0)),
        dict(isd=ISDConfig(p_samples_pct=120)),
        dict(ssi=SSIConfig(n_bands=0)),
        dict(mode="reverb"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        RawboostConfig(**kwargs)


def test_config_from_dicts():
    cfg = RawboostConfig(ssi={"n_bands": 3}, isd={"g_sd_db": 1.0}, mode="isd_only")
    assert cfg.ssi.n_bands == 3 and cfg.isd.g_sd_db == 1.0 and cfg.mode is RawboostMode.ISD_ONLY


def test_no_warning_on_normal_input():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        apply_ssi(sine(100), RawboostConfig(), np.random.default_rng(0))
