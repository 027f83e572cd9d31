import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import desk_pulse, paper_pulse
from oracles import lfm, occupied_band, rel_rms, spectral_peak
from jrcsim import waveform as w
from jrcsim.errors import ConfigError, SignalError
from jrcsim.signal import SignalBuffer, analytic, bandpass, tone


def const_m(cfg, value=0.0):
    return SignalBuffer(np.full(cfg.n_samples, float(value)), cfg.sample_rate)


# -- configuration --------------------------------------------------------------

def test_paper_defaults():
    cfg = w.JrcWaveformConfig()
    assert (cfg.f1, cfg.f2, cfg.chirp_bandwidth, cfg.pulse_width, cfg.pmi, cfg.mmw_shift) == \
        (4e9, 11e9, 2e9, 5e-6, 0.7, 50e9)
    assert cfg.chirp_slope == pytest.approx(4e14)
    assert cfg.band_starts_mmw == (54e9, 61e9)
    assert cfg.band_centers_mmw == (55e9, 62e9)
    assert cfg.fused_bandwidth == 9e9
    assert cfg.if_frequency == 7e9


def test_desk_preset_divides_frequencies_by_ten():
    d, p = w.preset("desk"), w.preset("paper")
    assert d.band_starts_mmw == pytest.approx(tuple(f / 10 for f in p.band_starts_mmw))
    assert d.chirp_bandwidth == p.chirp_bandwidth / 10
    assert d.pulse_width == p.pulse_width * 10
    assert d.n_samples == p.n_samples
    with pytest.raises(ConfigError):
        w.preset("lab")


@pytest.mark.parametrize("kw", [dict(f2=5e9), dict(chirp_bandwidth=0), dict(pulse_width=-1e-6),
                                dict(pmi=-0.1), dict(sample_rate=100e9)])
def test_invalid_waveform_configs(kw):
    with pytest.raises(ConfigError):
        w.JrcWaveformConfig(**kw)


@pytest.mark.parametrize("kw", [dict(qam_order=32), dict(pilot_spacing=1), dict(n_subcarriers=1),
                                dict(cp_fraction=1.0)])
def test_invalid_ofdm_configs(kw):
    with pytest.raises(ConfigError):
        w.OfdmConfig(**kw)


# -- OFDM baseband --------------------------------------------------------------

def test_zero_symbols_give_zero_baseband():
    ofdm = w.OfdmConfig()
    x = w.ofdm_modulate(np.zeros((2, ofdm.n_subcarriers)), ofdm, 160e9)
    assert x.size and np.all(x == 0)


def test_single_subcarrier_pair_is_a_sinusoid():
    ofdm, fs = w.OfdmConfig(cp_fraction=0), 160e9
    lay = w.ofdm_layout(ofdm, fs)
    j, s = 100, 0.6 - 0.8j
    grid = np.zeros((1, ofdm.n_subcarriers), complex)
    grid[0, j] = s
    x = w.ofdm_modulate(grid, ofdm, fs)
    f = (lay.first_bin + j) * fs / lay.n_fft
    t = np.arange(lay.n_fft) / fs
    expected = 2 / lay.n_fft * abs(s) * np.cos(2 * np.pi * f * t + np.angle(s))
    assert np.max(np.abs(x - expected)) < 1e-12 * lay.n_fft
    assert f == pytest.approx(ofdm.low_edge + j * ofdm.subcarrier_spacing,
                              abs=ofdm.subcarrier_spacing / 2)


def test_default_baseband_seed_42_is_real_with_unit_rms():
    m, rec = w.generate_ofdm_baseband(w.OfdmConfig(), 42, 160e9)
    assert np.max(np.abs(np.imag(m.samples))) < 1e-12
    assert not m.is_complex
    assert np.sqrt(np.mean(m.samples**2)) == pytest.approx(1.0, abs=1e-9)
    ofdm = w.OfdmConfig()
    assert rec.tx_bits.size == ofdm.frame_count * len(ofdm.data_positions) * 6


def test_baseband_occupies_configured_band():
    ofdm = w.OfdmConfig()
    m, _ = w.generate_ofdm_baseband(ofdm, 1, 160e9)
    X = np.abs(np.fft.rfft(m.samples)) ** 2
    f = np.fft.rfftfreq(len(m), 1 / m.sample_rate)
    inside = (f >= ofdm.low_edge * 0.99) & (f <= (ofdm.low_edge + ofdm.occupied_bandwidth) * 1.01)
    assert X[inside].sum() / X.sum() > 0.99


def test_baseband_preconditions():
    with pytest.raises(ConfigError):
        w.generate_ofdm_baseband(w.OfdmConfig(), 0, 1.5e9)  # below 2 x occupied bandwidth
    with pytest.raises(ConfigError):
        w.generate_ofdm_baseband(w.OfdmConfig(), 0, 3.0001e9)  # off-grid spacing
    with pytest.raises(ConfigError):
        w.generate_ofdm_baseband(w.OfdmConfig(frame_count=40), 0, 160e9, duration=5e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=5, deadline=None)
def test_baseband_is_deterministic(seed):
    ofdm = w.OfdmConfig(n_subcarriers=64, occupied_bandwidth=64e6, low_edge=4e6, frame_count=1)
    a, ra = w.generate_ofdm_baseband(ofdm, seed, 1e9)
    b, rb = w.generate_ofdm_baseband(ofdm, seed, 1e9)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(ra.tx_bits, rb.tx_bits)
    assert np.array_equal(ra.tx_symbols, rb.tx_symbols)
    c, _ = w.generate_ofdm_baseband(ofdm, seed + 1, 1e9)
    assert not np.array_equal(a.samples, c.samples)


# -- IF synthesis ---------------------------------------------------------------

def test_zero_pmi_is_two_pure_chirps(desk_cfg):
    cfg = desk_cfg.with_pmi(0.0)
    m, _ = w.generate_ofdm_baseband(cfg.ofdm, 3, cfg.sample_rate, cfg.pulse_width)
    x = w.synthesize_if_jrc(cfg, m).samples
    n, fs, k = cfg.n_samples, cfg.sample_rate, cfg.chirp_slope
    ref = lfm(cfg.f1, k, n, fs) + lfm(cfg.f2, k, n, fs)
    assert np.max(np.abs(x - ref)) < 1e-9
    for i in (1, 2):
        assert np.max(np.abs(np.abs(w.if_subband(cfg, m, i).samples) - cfg.amplitude)) < 1e-12


def test_synthesis_matches_closed_form(desk_cfg):
    cfg, _, if_sig, m, _ = desk_pulse()
    n, fs, k, h = cfg.n_samples, cfg.sample_rate, cfg.chirp_slope, cfg.pmi
    ph = 2 * np.pi * h * m.samples
    ref = lfm(cfg.f1, k, n, fs, extra_phase=ph) + lfm(cfg.f2, k, n, fs, extra_phase=-ph)
    assert rel_rms(if_sig.samples, ref) < 1e-9


def test_constant_modulation_only_offsets_phase(desk_cfg):
    cfg, c0 = desk_cfg, 0.37
    b0 = [w.if_subband(cfg, const_m(cfg), i).samples for i in (1, 2)]
    bc = [w.if_subband(cfg, const_m(cfg, c0), i).samples for i in (1, 2)]
    offset = 2 * np.pi * cfg.pmi * c0
    assert np.max(np.abs(bc[0] - b0[0] * np.exp(1j * offset))) < 1e-9
    assert np.max(np.abs(bc[1] - b0[1] * np.exp(-1j * offset))) < 1e-9

    def spectrogram(m):
        return np.abs(scipy.signal.stft(w.synthesize_if_jrc(cfg, m).samples, nperseg=1024,
                                        window=("kaiser", 14), return_onesided=False,
                                        boundary=None, padded=False)[2])

    s0, sc = spectrogram(const_m(cfg)), spectrogram(const_m(cfg, c0))
    assert np.max(np.abs(sc - s0)) < 1e-3 * s0.max()


def test_default_spectrogram_shows_two_parallel_chirps(paper_cfg):
    cfg, _, if_sig, _, _ = paper_pulse()
    fs = cfg.sample_rate
    f, t, S = scipy.signal.stft(if_sig.samples, fs=fs, nperseg=4096, return_onesided=False,
                                boundary=None, padded=False)
    P = np.abs(S) ** 2
    k = cfg.chirp_slope
    for lo, hi, start in ((0, 8.5e9, 4e9), (8.5e9, 20e9, 11e9)):
        sel = (f >= lo) & (f < hi)
        ridge = f[sel][np.argmax(P[sel], axis=0)]
        slope, intercept = np.polyfit(t, ridge, 1)
        assert slope == pytest.approx(k, rel=0.01)
        assert intercept == pytest.approx(start, abs=50e6)
        assert intercept + slope * cfg.pulse_width == pytest.approx(start + 2e9, abs=50e6)


def test_synthesis_rejects_bad_modulation(desk_cfg):
    with pytest.raises(SignalError):
        w.synthesize_if_jrc(desk_cfg, SignalBuffer(np.zeros(desk_cfg.n_samples, complex),
                                                   desk_cfg.sample_rate))
    with pytest.raises(SignalError):
        w.synthesize_if_jrc(desk_cfg, SignalBuffer(np.zeros(10), desk_cfg.sample_rate))


def test_opposite_pmi_antisymmetry(desk_cfg):
    # pmi is stored non-negative; -h is realised as h applied to -m
    cfg, _, _, m, _ = desk_pulse()
    neg = m.replace(-m.samples)
    b1 = w.if_subband(cfg, m, 1)
    b2 = w.if_subband(cfg, neg, 2)
    shift = np.exp(-2j * np.pi * (cfg.f2 - cfg.f1) * b2.time)
    assert np.sqrt(np.mean(np.abs(b1.samples - b2.samples * shift) ** 2)) < 1e-9


@pytest.mark.parametrize("h", [0.2, 0.7, 1.2])
def test_constant_envelope_per_band(h):
    cfg, mmw, _, _, _ = desk_pulse(pmi=h)
    x = SignalBuffer(mmw.samples.real, mmw.sample_rate)
    skirt = cfg.ofdm.low_edge + cfg.ofdm.occupied_bandwidth
    for s in cfg.band_starts_mmw:
        e = np.abs(analytic(bandpass(x, s - 1.5 * skirt, s + cfg.chirp_bandwidth + 1.5 * skirt))
                   .valid_samples)
        assert e.std() / e.mean() < 1e-2


def test_transmit_is_deterministic(desk_cfg):
    a = w.transmit_pulse(desk_cfg, 9)
    b = w.transmit_pulse(desk_cfg, 9)
    assert np.array_equal(a[0].samples, b[0].samples)
    assert np.array_equal(a[3].tx_bits, b[3].tx_bits)


# -- up-conversion --------------------------------------------------------------

def test_dc_becomes_tone_at_shift():
    fs, n = 160e9, 16000
    y = w.upconvert_to_mmw(SignalBuffer(np.ones(n, complex), fs), 50e9)
    assert np.max(np.abs(y.samples - tone(50e9, fs, n).samples)) < 1e-9


def test_4ghz_tone_moves_to_54ghz():
    fs, n = 160e9, 16000
    y = w.upconvert_to_mmw(tone(4e9, fs, n), 50e9)
    assert spectral_peak(y.samples, fs) == pytest.approx(54e9, abs=fs / n)
    real = w.upconvert_to_mmw(tone(4e9, fs, n), 50e9, real=True)
    assert not real.is_complex
    assert np.array_equal(real.samples, y.samples.real)


def test_upconvert_checks_nyquist_and_input():
    with pytest.raises(SignalError):
        w.upconvert_to_mmw(tone(20e9, 100e9, 1000), 40e9)
    with pytest.raises(SignalError):
        w.upconvert_to_mmw(tone(4e9, 160e9, 1000, real=True), 50e9)


def test_unmodulated_waveform_occupancy_at_30db(paper_cfg):
    _, mmw, _, _, _ = paper_pulse(pmi=0.0)
    lo, hi = occupied_band(mmw.samples, paper_cfg.sample_rate, -30.0)
    assert 53.9e9 <= lo and hi <= 63.1e9
    assert lo < 54.0e9 + 0.1e9 and hi > 63.0e9 - 0.1e9


def test_default_waveform_occupancy_at_30db(paper_cfg):
    # phase modulation adds sidebands one OFDM bandwidth wide on either side
    cfg = paper_cfg
    _, mmw, _, _, _ = paper_pulse()
    lo, hi = occupied_band(mmw.samples, cfg.sample_rate, -30.0)
    skirt = cfg.ofdm.low_edge + cfg.ofdm.occupied_bandwidth
    assert 53.9e9 - skirt <= lo and hi <= 63.1e9 + skirt
