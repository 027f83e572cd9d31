"""Dual-band constant-envelope LFM-OFDM waveform synthesis.

Each sub-band is an up-chirp whose phase is modulated by a real OFDM
baseband m(t); the two bands use opposite modulation indices (+h, -h) so a
square-law detector sees the chirps cancel and the data phase double.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import qam
from .errors import ConfigError, SignalError
from .signal import SignalBuffer

# RMS of m(t) inside the presets' phase modulators. Keeps h * max|m| under
# half a cycle for h <= 1.2, so neither sub-band spreads into the other.
PRESET_DRIVE_RMS = 0.05

_PILOT_KEY = 0x5EED_1F0D


def _is_integer(x: float, tol: float = 1e-6) -> bool:
    return abs(x - round(x)) <= tol * max(1.0, abs(x))


@dataclass(frozen=True)
class OfdmConfig:
    """Real-valued OFDM baseband: subcarriers occupy [low_edge, low_edge + occupied_bandwidth)."""

    n_subcarriers: int = 1024
    qam_order: int = 64
    occupied_bandwidth: float = 1e9
    cp_fraction: float = 1 / 8
    pilot_spacing: int = 8
    frame_count: int = 4
    low_edge: float = 50e6
    rms: float = 1.0

    def __post_init__(self):
        if self.n_subcarriers < 2:
            raise ConfigError("n_subcarriers must be >= 2")
        if self.qam_order not in qam.SUPPORTED_ORDERS:
            raise ConfigError(f"qam_order must be a square QAM in {qam.SUPPORTED_ORDERS}")
        if self.occupied_bandwidth <= 0:
            raise ConfigError("occupied_bandwidth must be positive")
        if not 0 <= self.cp_fraction < 1:
            raise ConfigError("cp_fraction must lie in [0, 1)")
        if self.pilot_spacing < 2:
            raise ConfigError("pilot_spacing must be >= 2")
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if self.low_edge < 0 or self.rms <= 0:
            raise ConfigError("low_edge must be >= 0 and rms > 0")

    @property
    def subcarrier_spacing(self) -> float:
        return self.occupied_bandwidth / self.n_subcarriers

    @property
    def pilot_positions(self) -> np.ndarray:
        return np.arange(0, self.n_subcarriers, self.pilot_spacing)

    @property
    def data_positions(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_subcarriers), self.pilot_positions)

    @property
    def bits_per_frame(self) -> int:
        return len(self.data_positions) * qam.bits_per_symbol(self.qam_order)


@dataclass(frozen=True)
class OfdmLayout:
    n_fft: int
    n_cp: int
    first_bin: int

    @property
    def symbol_length(self) -> int:
        return self.n_fft + self.n_cp


def ofdm_layout(ofdm: OfdmConfig, sample_rate: float) -> OfdmLayout:
    top = ofdm.low_edge + ofdm.occupied_bandwidth
    if sample_rate < 2 * top:
        raise ConfigError(
            f"sample rate {sample_rate:.6g} Hz cannot carry OFDM up to {top:.6g} Hz"
        )
    n_fft = sample_rate / ofdm.subcarrier_spacing
    if not _is_integer(n_fft):
        raise ConfigError(
            f"{ofdm.n_subcarriers} subcarriers over {ofdm.occupied_bandwidth:.6g} Hz "
            f"are not representable on a {sample_rate:.6g} Hz grid"
        )
    n_fft = int(round(n_fft))
    first = max(1, int(round(ofdm.low_edge / ofdm.subcarrier_spacing)))
    if first + ofdm.n_subcarriers > n_fft // 2:
        raise ConfigError("subcarriers exceed the grid Nyquist bin")
    return OfdmLayout(n_fft, int(round(ofdm.cp_fraction * n_fft)), first)


@dataclass(frozen=True, eq=False)
class OfdmFrameRecord:
    """What the transmitter put into m(t); the receiver uses pilots and layout only."""

    tx_bits: np.ndarray
    tx_symbols: np.ndarray  # (frames, n_subcarriers), pilots included
    pilot_positions: np.ndarray
    layout: OfdmLayout
    scale: float
    frame_start: int = 0

    @property
    def frames(self) -> int:
        return self.tx_symbols.shape[0]


def pilot_symbols(n: int) -> np.ndarray:
    """Fixed unit-energy QPSK pilot sequence shared by transmitter and receiver."""
    rng = np.random.Generator(np.random.Philox(_PILOT_KEY))
    bits = rng.integers(0, 2, size=2 * n)
    return qam.modulate(bits, 4)


def ofdm_modulate(grid: np.ndarray, ofdm: OfdmConfig, sample_rate: float) -> np.ndarray:
    """Map a (frames, n_subcarriers) symbol grid to a real sample stream with CP.

    Hermitian symmetry is implicit in the inverse real FFT. No power scaling.
    """
    lay = ofdm_layout(ofdm, sample_rate)
    grid = np.atleast_2d(grid)
    frames = grid.shape[0]
    spec = np.zeros((frames, lay.n_fft // 2 + 1), dtype=complex)
    spec[:, lay.first_bin:lay.first_bin + ofdm.n_subcarriers] = grid
    body = np.fft.irfft(spec, n=lay.n_fft, axis=1)
    if lay.n_cp:
        body = np.hstack([body[:, -lay.n_cp:], body])
    return body.reshape(-1)


def generate_ofdm_baseband(ofdm: OfdmConfig, seed: int, sample_rate: float,
                           duration: float | None = None):
    """Random-data real OFDM baseband m(t) with RMS ``ofdm.rms``.

    With ``duration`` the frames are zero-padded to that length.
    Returns (SignalBuffer, OfdmFrameRecord).
    """
    lay = ofdm_layout(ofdm, sample_rate)
    rng = np.random.Generator(np.random.Philox(seed))
    bits = rng.integers(0, 2, size=ofdm.frame_count * ofdm.bits_per_frame, dtype=np.uint8)
    data = qam.modulate(bits, ofdm.qam_order).reshape(ofdm.frame_count, -1)
    grid = np.empty((ofdm.frame_count, ofdm.n_subcarriers), dtype=complex)
    grid[:, ofdm.pilot_positions] = pilot_symbols(len(ofdm.pilot_positions))
    grid[:, ofdm.data_positions] = data
    x = ofdm_modulate(grid, ofdm, sample_rate)
    if duration is not None:
        n = int(round(duration * sample_rate))
        if n < len(x):
            raise ConfigError(
                f"{ofdm.frame_count} OFDM frames ({len(x)} samples) exceed the "
                f"requested {n} samples"
            )
        x = np.concatenate([x, np.zeros(n - len(x))])
    rms = np.sqrt(np.mean(x**2))
    scale = ofdm.rms / rms if rms > 0 else 1.0
    record = OfdmFrameRecord(bits, grid, ofdm.pilot_positions, lay, float(scale))
    return SignalBuffer(x * scale, sample_rate), record


@dataclass(frozen=True)
class JrcWaveformConfig:
    """Parameters of the dual-band waveform; defaults are the full-scale (``paper`` preset) values.

    f1/f2 are chirp *start* frequencies at IF; mmw_shift is the heterodyne
    translation (twice the RF drive frequency).
    """

    f1: float = 4e9
    f2: float = 11e9
    chirp_bandwidth: float = 2e9
    pulse_width: float = 5e-6
    pmi: float = 0.7
    amplitude: float = 1.0
    ofdm: OfdmConfig = field(default_factory=lambda: OfdmConfig(rms=PRESET_DRIVE_RMS))
    mmw_shift: float = 50e9
    sample_rate: float = 160e9
    beat_sample_rate: float = 250e6

    def __post_init__(self):
        if self.chirp_bandwidth <= 0 or self.pulse_width <= 0:
            raise ConfigError("chirp_bandwidth and pulse_width must be positive")
        if self.f1 < 0 or self.f1 + self.chirp_bandwidth > self.f2:
            raise ConfigError("sub-bands overlap: need f1 + B <= f2")
        if self.pmi < 0:
            raise ConfigError("pmi must be non-negative")
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be positive")
        top = self.mmw_shift + self.f2 + self.chirp_bandwidth
        if self.sample_rate < 2 * top:
            raise ConfigError(
                f"sample_rate {self.sample_rate:.6g} below 2 x {top:.6g} Hz"
            )
        if not _is_integer(self.pulse_width * self.sample_rate):
            raise ConfigError("pulse_width is not a whole number of samples")
        if self.beat_sample_rate <= 0:
            raise ConfigError("beat_sample_rate must be positive")

    @property
    def chirp_slope(self) -> float:
        return self.chirp_bandwidth / self.pulse_width

    @property
    def n_samples(self) -> int:
        return int(round(self.pulse_width * self.sample_rate))

    @property
    def if_frequency(self) -> float:
        return self.f2 - self.f1

    @property
    def band_starts_mmw(self) -> tuple[float, float]:
        return (self.mmw_shift + self.f1, self.mmw_shift + self.f2)

    @property
    def band_centers_mmw(self) -> tuple[float, float]:
        half = self.chirp_bandwidth / 2
        return tuple(f + half for f in self.band_starts_mmw)

    @property
    def fused_bandwidth(self) -> float:
        return self.f2 + self.chirp_bandwidth - self.f1

    def with_pmi(self, h: float) -> "JrcWaveformConfig":
        return replace(self, pmi=h)


def preset(name: str) -> JrcWaveformConfig:
    """``paper``: 54/61 GHz bands, 2 GHz / 5 us. ``desk``: every frequency / 10."""
    if name == "paper":
        return JrcWaveformConfig()
    if name == "desk":
        return JrcWaveformConfig(
            f1=0.4e9, f2=1.1e9, chirp_bandwidth=0.2e9, pulse_width=50e-6,
            ofdm=OfdmConfig(occupied_bandwidth=100e6, low_edge=5e6, rms=PRESET_DRIVE_RMS),
            mmw_shift=5e9, sample_rate=16e9, beat_sample_rate=25e6,
        )
    raise ConfigError(f"unknown preset {name!r} (expected 'paper' or 'desk')")


def _pulse_time(cfg: JrcWaveformConfig) -> np.ndarray:
    return np.arange(cfg.n_samples) / cfg.sample_rate


def _modulation(cfg: JrcWaveformConfig, m: SignalBuffer) -> np.ndarray:
    if m.is_complex:
        raise SignalError("m(t) must be real-valued")
    if m.sample_rate != cfg.sample_rate or m.start_time != 0.0:
        raise SignalError("m(t) is not on the synthesis grid")
    if len(m) < cfg.n_samples:
        raise SignalError(
            f"m(t) lasts {m.duration:.6g} s, shorter than the {cfg.pulse_width:.6g} s pulse"
        )
    return np.asarray(m.samples[:cfg.n_samples], dtype=float)


def subband_signal(cfg: JrcWaveformConfig, m: SignalBuffer, start_frequency: float,
                   pmi_sign: int) -> SignalBuffer:
    """A * exp(j(2 pi f t + pi k t^2 + sign * 2 pi h m(t))) over one pulse."""
    t = _pulse_time(cfg)
    phase = (2 * np.pi * start_frequency * t + np.pi * cfg.chirp_slope * t**2
             + pmi_sign * 2 * np.pi * cfg.pmi * _modulation(cfg, m))
    return SignalBuffer(cfg.amplitude * np.exp(1j * phase), cfg.sample_rate)


def if_subband(cfg: JrcWaveformConfig, m: SignalBuffer, index: int) -> SignalBuffer:
    if index == 1:
        return subband_signal(cfg, m, cfg.f1, +1)
    if index == 2:
        return subband_signal(cfg, m, cfg.f2, -1)
    raise ValueError("sub-band index must be 1 or 2")


def synthesize_if_jrc(cfg: JrcWaveformConfig, m: SignalBuffer) -> SignalBuffer:
    """Complex IF dual-band CE-LFM-OFDM pulse over [0, Tc)."""
    t = _pulse_time(cfg)
    chirp = 2 * np.pi * cfg.f1 * t + np.pi * cfg.chirp_slope * t**2
    data = 2 * np.pi * cfg.pmi * _modulation(cfg, m)
    offset = 2 * np.pi * (cfg.f2 - cfg.f1) * t
    x = cfg.amplitude * (np.exp(1j * (chirp + data)) + np.exp(1j * (chirp + offset - data)))
    return SignalBuffer(x, cfg.sample_rate)


def _occupied_top(sig: SignalBuffer, floor_db: float = -60.0) -> float:
    X = np.abs(np.fft.fft(sig.samples)) ** 2
    f = np.fft.fftfreq(len(sig), 1 / sig.sample_rate)
    keep = X >= X.max() * 10 ** (floor_db / 10) if X.max() > 0 else np.zeros(len(X), bool)
    return float(np.max(np.abs(f[keep]))) if np.any(keep) else 0.0


def upconvert_to_mmw(if_sig: SignalBuffer, mmw_shift: float, *, real: bool = False,
                     band_top: float | None = None) -> SignalBuffer:
    """Ideal heterodyne translation of an analytic IF signal up by ``mmw_shift``.

    ``band_top`` is the highest IF frequency present; when omitted it is
    measured at the -60 dB point. ``real=True`` returns the real passband.
    """
    if not if_sig.is_complex:
        raise SignalError("upconversion expects a complex analytic IF signal")
    top = _occupied_top(if_sig) if band_top is None else band_top
    if mmw_shift + top >= if_sig.sample_rate / 2:
        raise SignalError(
            f"translated band reaches {mmw_shift + top:.6g} Hz, beyond Nyquist "
            f"{if_sig.sample_rate / 2:.6g} Hz"
        )
    y = if_sig.samples * np.exp(2j * np.pi * mmw_shift * if_sig.time)
    return if_sig.replace(y.real if real else y)


def transmit_pulse(cfg: JrcWaveformConfig, seed: int, *, real: bool = False):
    """Convenience chain: OFDM data -> IF JRC -> MMW. Returns (mmw, if_sig, m, record)."""
    m, record = generate_ofdm_baseband(cfg.ofdm, seed, cfg.sample_rate, cfg.pulse_width)
    if_sig = synthesize_if_jrc(cfg, m)
    top = cfg.f2 + cfg.chirp_bandwidth
    mmw = upconvert_to_mmw(if_sig, cfg.mmw_shift, real=real, band_top=top)
    return mmw, if_sig, m, record
