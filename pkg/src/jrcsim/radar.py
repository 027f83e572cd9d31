"""Sub-band de-chirp receiver and range-profile analysis.

Each sub-band echo is mixed with the conjugate of its own transmitted band
(modulation included), so a target at delay tau leaves a beat tone at
f_b = k tau carrying phase 2 pi F_i tau - pi k tau^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .channel import SPEED_OF_LIGHT, TargetScene
from .errors import RadarError, SignalError
from .signal import SignalBuffer, bandpass, resample
from .waveform import JrcWaveformConfig, subband_signal

# Beat power, relative to echo x reference power, below which the reference
# band is declared absent from the echo.
BAND_PRESENCE_RATIO = 1e-2


@dataclass(frozen=True)
class SubbandDescriptor:
    index: int
    start_frequency: float  # MMW chirp start, Hz
    chirp_slope: float
    sweep_bandwidth: float
    pmi_sign: int = +1

    def __post_init__(self):
        if self.pmi_sign not in (-1, 1):
            raise ValueError("pmi_sign must be +1 or -1")
        if self.chirp_slope <= 0 or self.sweep_bandwidth <= 0:
            raise ValueError("chirp_slope and sweep_bandwidth must be positive")

    @property
    def duration(self) -> float:
        return self.sweep_bandwidth / self.chirp_slope

    @property
    def center_frequency(self) -> float:
        return self.start_frequency + self.sweep_bandwidth / 2


def subband_descriptors(cfg: JrcWaveformConfig) -> tuple[SubbandDescriptor, SubbandDescriptor]:
    k, B = cfg.chirp_slope, cfg.chirp_bandwidth
    s1, s2 = cfg.band_starts_mmw
    return (SubbandDescriptor(1, s1, k, B, +1), SubbandDescriptor(2, s2, k, B, -1))


@dataclass(frozen=True, eq=False)
class DechirpedSubband:
    """Low-rate beat of one sub-band. ``gain`` is the beat amplitude of a unit target."""

    beat: SignalBuffer
    descriptor: SubbandDescriptor
    reference_phase_origin: float = 0.0
    gain: float = 1.0


def beat_cutoff(cfg: JrcWaveformConfig) -> tuple[float, float]:
    """(cutoff, transition) of the beat lowpass; stays clear of the OFDM low edge."""
    edge = cfg.ofdm.low_edge
    return 0.8 * edge, 0.2 * edge


def reference_signal(desc: SubbandDescriptor, cfg: JrcWaveformConfig,
                     m: SignalBuffer | None) -> SignalBuffer:
    """Clean transmitted band ``desc`` at MMW, including its +/- h m(t) phase."""
    if m is None:
        if cfg.pmi != 0:
            raise RadarError("the de-chirp reference needs m(t) when pmi > 0")
        m = SignalBuffer(np.zeros(cfg.n_samples), cfg.sample_rate)
    return subband_signal(cfg, m, desc.start_frequency, desc.pmi_sign)


def lfm_chirp(start_frequency: float, slope: float, duration: float, sample_rate: float,
              amplitude: float = 1.0) -> SignalBuffer:
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    return SignalBuffer(amplitude * np.exp(1j * (2 * np.pi * start_frequency * t
                                                 + np.pi * slope * t**2)), sample_rate)


def dechirp(echo: SignalBuffer, reference: SignalBuffer, desc: SubbandDescriptor, *,
            beat_rate: float, cutoff: float, transition: float) -> DechirpedSubband:
    """Mix ``reference * conj(echo)``, resample to ``beat_rate`` and lowpass at ``cutoff``."""
    if echo.sample_rate != reference.sample_rate:
        raise SignalError("echo and reference are on different sample grids")
    n = len(reference)
    if len(echo) < n:
        raise SignalError("echo is shorter than the reference pulse")
    e = echo.samples[:n]
    r = reference.samples
    prod = SignalBuffer(r * np.conj(e), echo.sample_rate, reference.start_time)
    beat = bandpass(resample(prod, beat_rate, discard_out_of_band=True), 0.0, cutoff,
                    transition=transition)
    p_echo = np.mean(np.abs(e) ** 2)
    if p_echo > 0:
        ratio = beat.power() / (p_echo * np.mean(np.abs(r) ** 2))
        if ratio < BAND_PRESENCE_RATIO:
            raise RadarError(
                f"sub-band {desc.index} reference finds no matching echo "
                f"(beat/echo power ratio {ratio:.2e})"
            )
    amp = np.max(np.abs(r)) if n else 1.0
    gain = amp**2 if echo.is_complex else amp**2 / 2
    return DechirpedSubband(beat, desc, reference.start_time, float(gain))


def dechirp_subband(echo: SignalBuffer, desc: SubbandDescriptor, cfg: JrcWaveformConfig,
                    m: SignalBuffer | None = None) -> DechirpedSubband:
    """De-chirp one sub-band of a (real or analytic) MMW echo with its own modulated reference."""
    ref = reference_signal(desc, cfg, m)
    cutoff, transition = beat_cutoff(cfg)
    return dechirp(echo, ref, desc, beat_rate=cfg.beat_sample_rate, cutoff=cutoff,
                   transition=transition)


@dataclass(frozen=True)
class Peak:
    range: float
    magnitude_db: float


@dataclass(frozen=True, eq=False)
class RangeProfile:
    ranges: np.ndarray
    magnitude_db: np.ndarray
    resolution_nominal: float
    peaks: tuple[Peak, ...] = ()
    window: str = "hann"

    @property
    def bin_spacing(self) -> float:
        return float(self.ranges[1] - self.ranges[0])


def resolution(bandwidth: float, c: float = SPEED_OF_LIGHT) -> float:
    """Nominal range resolution c / (2 B)."""
    return c / (2 * bandwidth)


def _window(name: str, n: int) -> np.ndarray:
    if name in ("rect", "rectangular", "boxcar", None):
        return np.ones(n)
    return scipy.signal.get_window(name, n, fftbins=False)


def profile_from_samples(x: np.ndarray, sample_rate: float, slope: float, bandwidth: float, *,
                         window: str = "hann", zero_pad_factor: int = 8,
                         min_prominence_db: float = 6.0, max_range: float | None = None,
                         c: float = SPEED_OF_LIGHT) -> RangeProfile:
    """FFT range profile of beat-like samples; positive beat frequencies only."""
    x = np.asarray(x)
    n = len(x)
    if n == 0:
        raise SignalError("cannot form a profile from an empty beat")
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    w = _window(window, n)
    nfft = n * int(zero_pad_factor)
    X = np.fft.fft(x * w, nfft) / np.sum(w)
    f = np.arange(nfft // 2) * sample_rate / nfft
    r = c * f / (2 * slope)
    mag = np.abs(X[:nfft // 2])
    if max_range is not None:
        keep = r <= max_range
        r, mag = r[keep], mag[keep]
    mag_db = 20 * np.log10(np.maximum(mag, 1e-300))
    p = RangeProfile(r, mag_db, resolution(bandwidth, c), (), window)
    return RangeProfile(r, mag_db, p.resolution_nominal,
                        tuple(detect_peaks(p, min_prominence_db)), window)


def range_profile(d: DechirpedSubband, window: str = "hann", zero_pad_factor: int = 8, *,
                  min_prominence_db: float = 6.0, c: float = SPEED_OF_LIGHT) -> RangeProfile:
    desc = d.descriptor
    return profile_from_samples(d.beat.samples, d.beat.sample_rate, desc.chirp_slope,
                                desc.sweep_bandwidth, window=window,
                                zero_pad_factor=zero_pad_factor,
                                min_prominence_db=min_prominence_db, c=c)


# Peaks further than this below the strongest one are treated as sidelobes.
_RELATIVE_FLOOR_DB = {"rect": -10.0, "rectangular": -10.0, "boxcar": -10.0}
_DEFAULT_RELATIVE_FLOOR_DB = -20.0


def detect_peaks(p: RangeProfile, min_prominence_db: float = 6.0,
                 relative_floor_db: float | None = None) -> list[Peak]:
    """Local maxima with the given prominence, refined by a parabola through
    the three dB samples around each maximum; sorted strongest first."""
    y = np.asarray(p.magnitude_db)
    if len(y) < 3:
        return []
    floor = (_RELATIVE_FLOOR_DB.get(p.window, _DEFAULT_RELATIVE_FLOOR_DB)
             if relative_floor_db is None else relative_floor_db)
    idx, _ = scipy.signal.find_peaks(y, prominence=min_prominence_db,
                                     height=y.max() + floor)
    out = []
    dr = p.ranges[1] - p.ranges[0]
    for i in idx:
        a, b, g = y[i - 1], y[i], y[i + 1]
        den = a - 2 * b + g
        delta = 0.5 * (a - g) / den if den != 0 else 0.0
        out.append(Peak(float(p.ranges[i] + delta * dr), float(b - 0.25 * (a - g) * delta)))
    return sorted(out, key=lambda q: -q.magnitude_db)


def peak_spacing(p: RangeProfile) -> float | None:
    """Distance between the two strongest peaks, or None when fewer than two."""
    if len(p.peaks) < 2:
        return None
    return abs(p.peaks[0].range - p.peaks[1].range)


def mainlobe_width(p: RangeProfile, drop_db: float = 3.0) -> float:
    """-3 dB width around the strongest bin."""
    y = p.magnitude_db
    i = int(np.argmax(y))
    thr = y[i] - drop_db
    lo = i
    while lo > 0 and y[lo - 1] >= thr:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi + 1] >= thr:
        hi += 1
    return float((hi - lo + 1) * (p.ranges[1] - p.ranges[0]))


def _beat_power(d: DechirpedSubband, window: str, zero_pad_factor: int):
    x = d.beat.samples
    n = len(x)
    w = _window(window, n)
    nfft = n * zero_pad_factor
    P = np.abs(np.fft.fft(x * w, nfft) / np.sum(w)) ** 2
    return np.fft.fftfreq(nfft, 1 / d.beat.sample_rate), P


def target_peak_powers_db(d: DechirpedSubband, truth: TargetScene, *, window: str = "hann",
                          zero_pad_factor: int = 8) -> np.ndarray:
    """Peak beat power (dB) within half a resolution cell of each true target."""
    f, P = _beat_power(d, window, zero_pad_factor)
    cell = 1 / d.descriptor.duration
    out = []
    for f0 in d.descriptor.chirp_slope * truth.delays:
        sel = np.abs(f - f0) <= 0.5 * cell
        if not np.any(sel):
            raise RadarError(f"target beat {f0:.6g} Hz is outside the captured band")
        out.append(P[sel].max())
    return 10 * np.log10(np.maximum(np.array(out), 1e-300))


def measure_radar_snr(d: DechirpedSubband, truth: TargetScene, *, window: str = "hann",
                      zero_pad_factor: int = 8, cutoff: float | None = None,
                      guard_cells: float = 2.0) -> float:
    """Mean target peak power over the median floor power inside |f_b| < cutoff, in dB.

    Bins within ``guard_cells`` resolution cells of any target are excluded
    from the floor (twice that for tapered windows, whose mainlobe is wider).
    """
    if not truth.targets:
        raise RadarError("no targets to measure")
    peaks = 10 ** (target_peak_powers_db(d, truth, window=window,
                                         zero_pad_factor=zero_pad_factor) / 10)
    f, P = _beat_power(d, window, zero_pad_factor)
    cutoff = d.beat.sample_rate / 2 if cutoff is None else cutoff
    cell = 1 / d.descriptor.duration
    guard = guard_cells * cell * (1 if window in _RELATIVE_FLOOR_DB else 2)
    near = np.zeros(len(f), bool)
    for f0 in d.descriptor.chirp_slope * truth.delays:
        near |= np.abs(f - f0) <= guard
    floor_sel = (np.abs(f) < cutoff) & ~near
    floor = np.median(P[floor_sel]) if np.any(floor_sel) else 0.0
    peak = float(np.mean(peaks))
    if floor <= 0:
        return float("inf") if peak > 0 else float("nan")
    snr = 10 * np.log10(peak / floor)
    if snr <= 0:
        raise RadarError(f"no target peak above the floor (SNR {snr:.1f} dB)")
    return float(snr)


def write_profile_csv(path, p: RangeProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["range_m", "magnitude_db"])
        for r, m in zip(p.ranges, p.magnitude_db):
            w.writerow([repr(float(r)), repr(float(m))])


def write_peaks_csv(path, p: RangeProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["range_m", "magnitude_db"])
        for q in p.peaks:
            w.writerow([repr(q.range), repr(q.magnitude_db)])
