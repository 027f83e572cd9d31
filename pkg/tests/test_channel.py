import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import C, ECHO_SEP_7P5CM, TAU_2P6, delay, lfm
from jrcsim.channel import (SPEED_OF_LIGHT, LinkNoiseConfig, Target, TargetScene, add_awgn,
                            apply_target_scene, in_band_snr_db)
from jrcsim.errors import ChannelError
from jrcsim.signal import SignalBuffer, tone

FS = 160e9


def probe(bandwidth=40e9, duration=50e-9, fs=FS):
    """Complex baseband chirp sweeping -B/2..B/2, padded so echoes fit."""
    n = int(round(duration * fs))
    x = lfm(-bandwidth / 2, bandwidth / duration, n, fs)
    return SignalBuffer(np.concatenate([x, np.zeros(4 * n)]), fs)


def matched_filter_peaks(tx, echo, count=1):
    """Delays of the ``count`` strongest correlation peaks, parabola-refined."""
    n = len(tx)
    R = np.fft.ifft(np.fft.fft(echo.samples, 2 * n) * np.conj(np.fft.fft(tx.samples, 2 * n)))
    mag = np.abs(R[:n])
    out = []
    for _ in range(count):
        i = int(np.argmax(mag))
        a, b, c = mag[i - 1], mag[i], mag[i + 1]
        out.append((i + 0.5 * (a - c) / (a - 2 * b + c)) / tx.sample_rate)
        mag[max(0, i - 8):i + 9] = 0
    return sorted(out)


def test_default_propagation_speed():
    assert SPEED_OF_LIGHT == C == 2.99792458e8


def test_zero_range_limit_is_identity():
    x = probe()
    y = apply_target_scene(x, TargetScene.from_ranges([1e-15]))
    assert np.max(np.abs(y.samples - x.samples)) < 1e-9


def test_target_at_2p6_m_is_delayed_17p34_ns():
    scene = TargetScene.from_ranges([2.6])
    assert scene.delays[0] == pytest.approx(TAU_2P6, rel=1e-12)
    assert TAU_2P6 == pytest.approx(17.34e-9, abs=0.01e-9)
    x = probe(bandwidth=2e9, duration=40e-9)
    (d,) = matched_filter_peaks(x, apply_target_scene(x, scene))
    assert abs(d - TAU_2P6) <= 1 / (10 * 2e9)


def test_two_targets_give_echoes_half_a_nanosecond_apart():
    scene = TargetScene.from_ranges([2.6, 2.675])
    assert np.diff(scene.delays)[0] == pytest.approx(ECHO_SEP_7P5CM, rel=1e-9)
    x = probe()
    d = matched_filter_peaks(x, apply_target_scene(x, scene), count=2)
    assert d[1] - d[0] == pytest.approx(0.5e-9, abs=0.01e-9)


@given(st.floats(0.5, 10.0))
@settings(max_examples=15, deadline=None)
def test_matched_filter_delay_accuracy(r):
    x = probe(bandwidth=2e9, duration=40e-9)
    (d,) = matched_filter_peaks(x, apply_target_scene(x, TargetScene.from_ranges([r])))
    assert abs(d - delay(r)) <= 1 / (10 * 2e9)


def test_reflectivity_scales_the_echo():
    x = probe()
    a = apply_target_scene(x, TargetScene.from_ranges([3.0], [1.0]))
    b = apply_target_scene(x, TargetScene.from_ranges([3.0], [0.25]))
    assert np.allclose(b.samples, 0.25 * a.samples, atol=1e-12)
    z = apply_target_scene(x, TargetScene.from_ranges([3.0], [0.0]))
    assert np.all(z.samples == 0)


def test_real_input_stays_real():
    x = tone(5e9, FS, 4000, real=True)
    y = apply_target_scene(x, TargetScene.from_ranges([1.0]))
    assert not y.is_complex and len(y) == len(x)


def test_channel_errors():
    with pytest.raises(ChannelError):
        Target(1.0, -0.5)
    with pytest.raises(ChannelError):
        Target(0.0)
    with pytest.raises(ChannelError):
        apply_target_scene(tone(1e9, FS, 100), TargetScene.from_ranges([10.0]))  # tau > buffer


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    n = 2048
    x = SignalBuffer(rng.standard_normal(n) + 1j * rng.standard_normal(n), FS)
    y = SignalBuffer(rng.standard_normal(n) + 1j * rng.standard_normal(n), FS)
    scene = TargetScene.from_ranges([0.3, 0.71, 1.2], [1.0, 0.4, 0.8])
    lhs = apply_target_scene(x * a + y * b, scene).samples
    rhs = a * apply_target_scene(x, scene).samples + b * apply_target_scene(y, scene).samples
    assert np.sqrt(np.mean(np.abs(lhs - rhs) ** 2)) < 1e-9


# -- additive noise -------------------------------------------------------------------

def test_infinite_snr_is_identity():
    x = tone(1e9, FS, 1000)
    y = add_awgn(x, LinkNoiseConfig(), (0, 10e9))
    assert np.array_equal(y.samples, x.samples)


def test_unit_tone_at_zero_db_gets_unit_noise():
    x = tone(1e9, 16e9, 16000)
    y = add_awgn(x, LinkNoiseConfig(0.0, 1), (0.5e9, 1.5e9))
    noise = y.samples - x.samples
    f = np.fft.fftfreq(len(x), 1 / x.sample_rate)
    N = np.fft.fft(noise)
    p_in = np.sum(np.abs(N[(f >= 0.5e9) & (f <= 1.5e9)]) ** 2) / len(x) ** 2
    assert p_in == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("snr", [-5.0, 0.0, 10.0, 30.0])
@pytest.mark.parametrize("real", [False, True])
def test_measured_snr_matches_request(snr, real):
    x = tone(1e9, 16e9, 16000, real=real)
    band = (0.5e9, 1.5e9)
    y = add_awgn(x, LinkNoiseConfig(snr, 7), band)
    assert in_band_snr_db(x, y, band) == pytest.approx(snr, abs=0.2)


def test_noise_is_seeded():
    x = tone(1e9, 16e9, 4000)
    a = add_awgn(x, LinkNoiseConfig(10.0, 5), (0, 2e9))
    b = add_awgn(x, LinkNoiseConfig(10.0, 5), (0, 2e9))
    c = add_awgn(x, LinkNoiseConfig(10.0, 6), (0, 2e9))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_only_sentinel():
    x = tone(1e9, 16e9, 4000)
    y = add_awgn(x, LinkNoiseConfig(-math.inf, 5), (0, 2e9))
    assert abs(np.vdot(x.samples, y.samples)) / len(x) < 0.1


def test_noise_band_validation():
    x = tone(1e9, 16e9, 100)
    with pytest.raises(ChannelError):
        add_awgn(x, LinkNoiseConfig(0.0), (2e9, 1e9))
    with pytest.raises(ChannelError):
        add_awgn(x, LinkNoiseConfig(0.0), (0, 9e9))
    with pytest.raises(ChannelError):
        LinkNoiseConfig(float("nan"))
