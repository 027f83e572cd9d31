"""Self-coherent communication receiver.

Square-law detection beats the two sub-bands against each other. The
shared chirp cancels and the cross term sits at f2 - f1 with phase
-4 pi h m(t), so a plain phase demodulator followed by an OFDM receiver
recovers the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.signal

from . import qam
from .errors import DemodulationError, SignalError, SyncError
from .signal import SignalBuffer, analytic, bandpass
from .waveform import JrcWaveformConfig, OfdmConfig, OfdmFrameRecord

FEC_THRESHOLD = 3.8e-3
# Normalised CP-correlation peak below which frame sync is declared failed.
SYNC_THRESHOLD = 0.5
# Fraction of wrapped phase steps beyond pi/2 tolerated before unwrapping is
# considered unreliable.
UNWRAP_JUMP_LIMIT = 1e-3


def envelope_detect(rx: SignalBuffer) -> SignalBuffer:
    """Square-law detector: |analytic(rx)|^2 (complex input is taken as analytic)."""
    if len(rx) == 0:
        raise SignalError("empty input")
    z = rx if rx.is_complex else analytic(rx)
    return z.replace(np.abs(z.samples) ** 2)


def if_passband(cfg: JrcWaveformConfig) -> tuple[float, float]:
    """IF filter around f2 - f1, wide enough for several phase-modulation harmonics."""
    f_if = cfg.if_frequency
    top = cfg.ofdm.low_edge + cfg.ofdm.occupied_bandwidth
    half = min(4 * top, 0.6 * f_if)
    return f_if - half, f_if + half


def if_baseband(ed_out: SignalBuffer, cfg: JrcWaveformConfig) -> SignalBuffer:
    """Complex envelope of the cross term, carrier f2 - f1 removed."""
    if ed_out.is_complex:
        raise SignalError("envelope-detector output must be real")
    lo, hi = if_passband(cfg)
    # the DC term dwarfs the cross term; drop it before the finite-stopband filter
    dc = np.mean(ed_out.valid_samples) if ed_out.valid[1] > ed_out.valid[0] else 0.0
    z = analytic(bandpass(ed_out - dc, lo, hi))
    return z.replace(z.samples * np.exp(-2j * np.pi * cfg.if_frequency * z.time))


def demod_ce_ofdm(ed_out: SignalBuffer, cfg: JrcWaveformConfig, *, pmi: float | None = None,
                  check_unwrap: bool = True) -> SignalBuffer:
    """Recover m(t) from the detector output: phase of the IF cross term / (-4 pi h).

    ``pmi`` overrides cfg.pmi (useful to show the linear scale error). Raises
    DemodulationError when wrapped phase steps look like noise-driven cycle
    slips, unless ``check_unwrap`` is False.
    """
    h = cfg.pmi if pmi is None else pmi
    if h <= 0:
        raise DemodulationError("phase demodulation needs a positive PMI")
    z = if_baseband(ed_out, cfg)
    lo, hi = z.valid
    wrapped = np.angle(z.samples)
    steps = np.abs(np.diff(np.angle(z.samples[lo:hi])))
    steps = np.minimum(steps, 2 * np.pi - steps)
    if check_unwrap and len(steps) and np.mean(steps > np.pi / 2) > UNWRAP_JUMP_LIMIT:
        raise DemodulationError(
            f"{np.mean(steps > np.pi / 2):.2%} of phase steps exceed pi/2; "
            "SNR too low or PMI mismatched"
        )
    phase = np.unwrap(wrapped)
    # unwrap's branch depends on the first sample; pull it back to the nearest
    # 2 pi multiple so a noiseless capture needs no further offset
    if hi > lo:
        phase -= 2 * np.pi * np.round(np.mean(phase[lo:hi]) / (2 * np.pi))
    return z.replace(-phase / (4 * np.pi * h))


class OfdmDemodResult(NamedTuple):
    rx_bits: np.ndarray
    symbols: np.ndarray  # equalised data symbols, (frames, n_data)
    channel: np.ndarray  # per-subcarrier estimate normalised by the tx scale
    timing: int


def cp_sync(x: np.ndarray, record: OfdmFrameRecord, search: int | None = None) -> tuple[int, float]:
    """Frame start from cyclic-prefix autocorrelation averaged over all frames.

    Returns (offset, normalised peak) with the search centred on the nominal
    start and spanning +/- ``search`` samples (default half a CP).
    """
    lay = record.layout
    L, ncp, nfft = lay.symbol_length, lay.n_cp, lay.n_fft
    if ncp == 0:
        raise SyncError("no cyclic prefix to synchronise on")
    search = ncp // 2 if search is None else search
    nominal = record.frame_start
    frames = record.frames
    csum = lambda v: np.concatenate([[0], np.cumsum(v)])
    prod = csum(x[:-nfft] * x[nfft:]) if len(x) > nfft else np.zeros(1)
    energy = csum(x * x)
    best, best_metric = nominal, -1.0
    for d in range(max(0, nominal - search), nominal + search + 1):
        num = den1 = den2 = 0.0
        for s in range(frames):
            a = d + s * L
            if a + ncp + nfft > len(x):
                break
            num += prod[a + ncp] - prod[a]
            den1 += energy[a + ncp] - energy[a]
            den2 += energy[a + nfft + ncp] - energy[a + nfft]
        metric = abs(num) / np.sqrt(den1 * den2) if den1 > 0 and den2 > 0 else 0.0
        if metric > best_metric:
            best, best_metric = d, metric
    return best, best_metric


def ofdm_demodulate(m_hat: SignalBuffer, record: OfdmFrameRecord, ofdm: OfdmConfig, *,
                    sync: bool = True, sync_fallback: bool = False) -> OfdmDemodResult:
    """CP-synchronised OFDM receiver with pilot-based one-tap equalisation.

    Pilot estimates are averaged across frames and linearly interpolated over
    the data subcarriers. With ``sync_fallback`` a failed sync reverts to the
    nominal frame start instead of raising SyncError.
    """
    x = np.asarray(m_hat.samples, dtype=float)
    lo, hi = m_hat.valid
    x_sync = np.zeros_like(x)
    x_sync[lo:hi] = x[lo:hi]  # filter transients would bias the CP metric
    lay = record.layout
    start = record.frame_start
    if sync:
        d, peak = cp_sync(x_sync, record)
        if peak >= SYNC_THRESHOLD:
            start = d
        elif not sync_fallback:
            raise SyncError(f"CP correlation peak {peak:.3f} below {SYNC_THRESHOLD}")
    L = lay.symbol_length
    if start + record.frames * L > len(x):
        raise SyncError("captured signal is shorter than the OFDM frames")
    idx = start + np.arange(record.frames)[:, None] * L + lay.n_cp + np.arange(lay.n_fft)
    Y = np.fft.rfft(x[idx], axis=1)[:, lay.first_bin:lay.first_bin + ofdm.n_subcarriers]

    pilots = record.pilot_positions
    tx_p = record.tx_symbols[:, pilots]
    h_p = np.mean(Y[:, pilots] / tx_p, axis=0)
    k = np.arange(ofdm.n_subcarriers)
    H = np.interp(k, pilots, h_p.real) + 1j * np.interp(k, pilots, h_p.imag)
    if np.any(H == 0):
        raise DemodulationError("channel estimate has a null")
    Z = (Y / H)[:, ofdm.data_positions]
    bits = qam.demodulate(Z.reshape(-1), ofdm.qam_order)
    return OfdmDemodResult(bits, Z, H / record.scale, start)


@dataclass(frozen=True)
class BerReport:
    bits_total: int
    bits_error: int
    evm_rms: float = float("nan")
    per_frame_ber: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0 <= self.bits_error <= self.bits_total:
            raise ValueError("bits_error must lie in [0, bits_total]")

    @property
    def ber(self) -> float:
        return self.bits_error / self.bits_total if self.bits_total else 0.0

    def summary(self) -> str:
        if self.bits_error == 0 and self.bits_total:
            return f"BER < {1 / self.bits_total:.3g} (0 errors in {self.bits_total} bits)"
        return f"BER = {self.ber:.3g} ({self.bits_error}/{self.bits_total})"


def compute_ber(tx_bits, rx_bits, *, rx_symbols=None, tx_symbols=None,
                frames: int = 1) -> BerReport:
    """Exact bit-error count; EVM (RMS, relative to reference power) when symbols are given."""
    tx = np.asarray(tx_bits).reshape(-1)
    rx = np.asarray(rx_bits).reshape(-1)
    if tx.shape != rx.shape:
        raise ValueError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    err = tx != rx
    evm = float("nan")
    if rx_symbols is not None and tx_symbols is not None:
        s = np.asarray(tx_symbols).reshape(-1)
        z = np.asarray(rx_symbols).reshape(-1)
        evm = float(np.sqrt(np.mean(np.abs(z - s) ** 2) / np.mean(np.abs(s) ** 2)))
    per_frame = tuple(float(np.mean(c)) for c in np.array_split(err, frames)) if tx.size else ()
    return BerReport(int(tx.size), int(err.sum()), evm, per_frame)


def combine_reports(reports) -> BerReport:
    reports = list(reports)
    total = sum(r.bits_total for r in reports)
    errors = sum(r.bits_error for r in reports)
    evms = [r.evm_rms for r in reports if np.isfinite(r.evm_rms)]
    evm = float(np.sqrt(np.mean(np.square(evms)))) if evms else float("nan")
    frames = tuple(b for r in reports for b in r.per_frame_ber)
    return BerReport(total, errors, evm, frames)


# -- measurement helpers used by tests and experiments ---------------------

def dominant_frequency(sig: SignalBuffer, exclude_below: float = 0.0) -> float:
    """Frequency of the strongest spectral bin with |f| >= exclude_below."""
    X = np.abs(np.fft.rfft(sig.samples.real)) if not sig.is_complex else np.abs(np.fft.fft(sig.samples))
    f = (np.fft.rfftfreq(len(sig), 1 / sig.sample_rate) if not sig.is_complex
         else np.fft.fftfreq(len(sig), 1 / sig.sample_rate))
    X = np.where(np.abs(f) >= exclude_below, X, 0)
    return float(f[np.argmax(X)])


def cross_term_phase(ed_out: SignalBuffer, cfg: JrcWaveformConfig) -> float:
    """Mean phase of the carrier-removed IF cross term over the valid interval."""
    z = if_baseband(ed_out, cfg)
    return float(np.angle(np.mean(z.valid_samples)))


def ridge_slope(sig: SignalBuffer, f_lo: float, f_hi: float, nperseg: int = 4096) -> float:
    """Slope (Hz/s) of the STFT power-centroid ridge inside [f_lo, f_hi]."""
    x = sig.samples
    f, t, S = scipy.signal.stft(x, fs=sig.sample_rate, nperseg=nperseg,
                                return_onesided=not sig.is_complex, boundary=None)
    P = np.abs(S) ** 2
    band = (f >= f_lo) & (f <= f_hi)
    centroid = (f[band, None] * P[band]).sum(0) / P[band].sum(0)
    keep = P[band].sum(0) > 0
    return float(np.polyfit(t[keep], centroid[keep], 1)[0])
