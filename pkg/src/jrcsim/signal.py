"""Sampled-signal containers and the numerics shared by every stage.

All transforms use unitary normalisation, filters are linear-phase FIR with
their group delay removed, and filter warm-up is reported through
``SignalBuffer.valid`` instead of trimming samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .errors import AliasingError, SignalError

STOPBAND_DB = 60.0
# Design margin so the realised Kaiser filter clears the 60 dB target.
_KAISER_DESIGN_DB = STOPBAND_DB + 5.0
_HILBERT_DESIGN_DB = 140.0

DUMP_MAGIC = b"JRCSIG01"
_DUMP_HEADER = struct.Struct("<8sddQ")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.view()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SignalBuffer:
    """Uniformly sampled waveform.

    ``valid`` is the half-open sample interval free of filter transients;
    it defaults to the whole buffer.
    """

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    domain_tag: str = "time"
    valid: tuple[int, int] | None = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 1:
            raise SignalError("samples must be one-dimensional")
        if not np.issubdtype(x.dtype, np.number):
            raise SignalError("samples must be numeric")
        if not (self.sample_rate > 0 and np.isfinite(self.sample_rate)):
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise SignalError("samples contain NaN or Inf")
        if self.domain_tag not in ("time", "frequency"):
            raise SignalError(f"unknown domain_tag {self.domain_tag!r}")
        if x.dtype.kind in "iub":
            x = x.astype(float)
        object.__setattr__(self, "samples", _readonly(x))
        lo, hi = self.valid if self.valid is not None else (0, len(x))
        lo, hi = max(0, int(lo)), min(len(x), int(hi))
        object.__setattr__(self, "valid", (lo, max(lo, hi)))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    @property
    def time(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate

    @property
    def valid_samples(self) -> np.ndarray:
        lo, hi = self.valid
        return self.samples[lo:hi]

    def replace(self, samples=None, *, valid=None, **kw) -> "SignalBuffer":
        """Copy with new samples; validity carries over unless given."""
        return SignalBuffer(
            samples=self.samples if samples is None else samples,
            sample_rate=kw.get("sample_rate", self.sample_rate),
            start_time=kw.get("start_time", self.start_time),
            domain_tag=kw.get("domain_tag", self.domain_tag),
            valid=self.valid if valid is None else valid,
        )

    def power(self) -> float:
        lo, hi = self.valid
        seg = self.samples[lo:hi]
        return float(np.mean(np.abs(seg) ** 2)) if len(seg) else 0.0

    def _check_compatible(self, other: "SignalBuffer"):
        if self.sample_rate != other.sample_rate:
            raise SignalError(
                f"sample-rate mismatch: {self.sample_rate} vs {other.sample_rate}"
            )
        if len(self) != len(other) or self.start_time != other.start_time:
            raise SignalError("buffers are not on the same time grid")

    def _binary(self, other, op):
        if isinstance(other, SignalBuffer):
            self._check_compatible(other)
            lo = max(self.valid[0], other.valid[0])
            hi = min(self.valid[1], other.valid[1])
            return self.replace(op(self.samples, other.samples), valid=(lo, hi))
        return self.replace(op(self.samples, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Centred (fftshifted) unitary DFT of a SignalBuffer."""

    bins: np.ndarray
    bin_spacing: float
    start_frequency: float
    start_time: float = 0.0

    def __post_init__(self):
        if not self.bin_spacing > 0:
            raise SignalError("bin_spacing must be positive")
        object.__setattr__(self, "bins", _readonly(np.asarray(self.bins)))

    @property
    def frequencies(self) -> np.ndarray:
        return self.start_frequency + np.arange(len(self.bins)) * self.bin_spacing


def fft(sig: SignalBuffer) -> Spectrum:
    n = len(sig)
    if n == 0:
        raise SignalError("cannot transform an empty buffer")
    bins = np.fft.fftshift(np.fft.fft(sig.samples, norm="ortho"))
    df = sig.sample_rate / n
    return Spectrum(bins, df, -(n // 2) * df, sig.start_time)


def ifft(spec: Spectrum) -> SignalBuffer:
    n = len(spec.bins)
    if n == 0:
        raise SignalError("cannot transform an empty spectrum")
    x = np.fft.ifft(np.fft.ifftshift(spec.bins), norm="ortho")
    return SignalBuffer(x, n * spec.bin_spacing, spec.start_time)


def tone(freq: float, sample_rate: float, n: int, *, amplitude=1.0, phase=0.0,
         start_time=0.0, real=False) -> SignalBuffer:
    t = start_time + np.arange(n) / sample_rate
    arg = 2 * np.pi * freq * t + phase
    x = amplitude * (np.cos(arg) if real else np.exp(1j * arg))
    return SignalBuffer(x, sample_rate, start_time)


def band_power(sig: SignalBuffer, f_lo: float, f_hi: float) -> float:
    """Mean power carried by |f| in [f_lo, f_hi] (whole buffer)."""
    n = len(sig)
    f = np.fft.fftfreq(n, 1 / sig.sample_rate)
    X = np.fft.fft(sig.samples)
    sel = (np.abs(f) >= f_lo) & (np.abs(f) <= f_hi)
    return float(np.sum(np.abs(X[sel]) ** 2) / n**2)


def design_fir(sample_rate: float, f_lo: float, f_hi: float,
               transition: float | None = None) -> np.ndarray:
    """Kaiser-window linear-phase taps passing [f_lo, f_hi] with >= 60 dB stopband.

    ``transition`` is the width of each skirt, placed outside the passband.
    """
    nyq = sample_rate / 2
    if not (0 <= f_lo < f_hi <= nyq):
        raise SignalError(f"invalid band [{f_lo}, {f_hi}] for sample rate {sample_rate}")
    if transition is None:
        transition = 0.1 * (f_hi - f_lo)
        if f_lo > 0:
            transition = min(transition, f_lo)
        if f_hi < nyq:
            transition = min(transition, nyq - f_hi)
    if transition <= 0:
        raise SignalError("transition width must be positive")
    numtaps, beta = scipy.signal.kaiserord(_KAISER_DESIGN_DB, transition / nyq)
    numtaps |= 1
    edges = []
    if f_lo > 0:
        edges.append(f_lo - transition / 2)
    if f_hi < nyq:
        edges.append(f_hi + transition / 2)
    if not edges:
        taps = np.zeros(numtaps)
        taps[numtaps // 2] = 1.0
        return taps
    pass_zero = f_lo == 0
    return scipy.signal.firwin(numtaps, edges, window=("kaiser", beta),
                               pass_zero=pass_zero, fs=sample_rate)


def bandpass(sig: SignalBuffer, f_lo: float, f_hi: float, *,
             transition: float | None = None) -> SignalBuffer:
    """Pass |f| in [f_lo, f_hi]; f_lo = 0 gives a lowpass.

    Taps are real, so complex inputs are filtered symmetrically in frequency.
    The output is aligned with the input (group delay removed) and the first
    and last (L-1)/2 samples are excluded from ``valid``.
    """
    if len(sig) == 0:
        raise SignalError("cannot filter an empty buffer")
    taps = design_fir(sig.sample_rate, f_lo, f_hi, transition)
    y = scipy.signal.oaconvolve(sig.samples, taps, mode="same")
    if not sig.is_complex:
        y = y.real
    half = len(taps) // 2
    lo, hi = sig.valid
    return sig.replace(y, valid=(lo + half, hi - half))


def resample(sig: SignalBuffer, new_rate: float, *, discard_out_of_band: bool = False,
             alias_tolerance: float = 1e-6) -> SignalBuffer:
    """Band-limited (DFT-domain) resampling to ``new_rate``.

    When decimating, energy above the new Nyquist frequency raises
    AliasingError unless ``discard_out_of_band`` is set, in which case it is
    removed by an ideal lowpass before the rate change.
    """
    if not new_rate > 0:
        raise SignalError("new_rate must be positive")
    n = len(sig)
    if n == 0:
        raise SignalError("cannot resample an empty buffer")
    ratio = new_rate / sig.sample_rate
    m = int(round(n * ratio))
    if m < 1:
        raise SignalError("resampled buffer would be empty")
    if m == n:
        return sig.replace(sig.samples.copy(), sample_rate=new_rate)
    if m < n and not discard_out_of_band:
        X = np.fft.fft(sig.samples)
        k = np.abs(np.fft.fftfreq(n, 1.0 / n))
        out = k > m / 2
        total = np.sum(np.abs(X) ** 2)
        frac = np.sum(np.abs(X[out]) ** 2) / total if total > 0 else 0.0
        if frac > alias_tolerance:
            raise AliasingError(
                f"{frac:.3g} of the energy lies above {new_rate / 2:.6g} Hz; "
                "band-limit the signal before decimating"
            )
    y = scipy.signal.resample(sig.samples, m)
    lo, hi = sig.valid
    valid = (int(np.ceil(lo * ratio)), int(np.floor(hi * ratio)))
    return SignalBuffer(y, new_rate, sig.start_time, sig.domain_tag, valid)


def hilbert_taps(sample_rate: float, transition: float) -> np.ndarray:
    """Kaiser-windowed type-III Hilbert transformer, ~1e-7 ripple on
    [transition, fs/2 - transition]."""
    if not 0 < transition < sample_rate / 4:
        raise SignalError("Hilbert transition must lie in (0, fs/4)")
    numtaps, beta = scipy.signal.kaiserord(_HILBERT_DESIGN_DB, 2 * transition / sample_rate)
    numtaps |= 1
    n = np.arange(numtaps) - numtaps // 2
    odd = n % 2 != 0
    taps = np.zeros(numtaps)
    taps[odd] = 2 / (np.pi * n[odd])
    return taps * np.kaiser(numtaps, beta)


def analytic(sig: SignalBuffer, *, transition: float | None = None) -> SignalBuffer:
    """Analytic signal x + j H{x} of a real buffer.

    H is a finite Hilbert transformer, so samples further than half its
    length from the edges are exact up to the design ripple; the rest are
    excluded from ``valid``. Content within ``transition`` (default 1% of
    the sample rate) of DC or Nyquist is not separated into one sideband.
    """
    if len(sig) == 0:
        raise SignalError("cannot build the analytic signal of an empty buffer")
    if sig.is_complex:
        raise SignalError("analytic() expects a real-valued buffer")
    transition = 0.01 * sig.sample_rate if transition is None else transition
    taps = hilbert_taps(sig.sample_rate, transition)
    x = np.asarray(sig.samples, dtype=float)
    y = scipy.signal.oaconvolve(x, taps, mode="same")
    half = len(taps) // 2
    lo, hi = sig.valid
    return sig.replace(x + 1j * y, valid=(lo + half, hi - half))


def instantaneous_frequency(sig: SignalBuffer) -> np.ndarray:
    """Finite-difference frequency of the unwrapped phase, length N-1."""
    phase = np.unwrap(np.angle(sig.samples))
    return np.diff(phase) * sig.sample_rate / (2 * np.pi)


def write_dump(path, sig: SignalBuffer) -> None:
    """Little-endian header (magic, rate, start, length) then interleaved I/Q float64."""
    x = np.asarray(sig.samples, dtype=complex)
    iq = np.empty(2 * len(x), dtype="<f8")
    iq[0::2] = x.real
    iq[1::2] = x.imag
    with open(Path(path), "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, float(sig.sample_rate),
                                   float(sig.start_time), len(x)))
        fh.write(iq.tobytes())


def read_dump(path) -> SignalBuffer:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise SignalError("dump file truncated")
    magic, rate, start, n = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise SignalError(f"bad dump magic {magic!r}")
    iq = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    if len(iq) != 2 * n:
        raise SignalError("dump payload length does not match header")
    x = iq[0::2] + 1j * iq[1::2]
    if not np.any(iq[1::2]):
        x = x.real.copy()
    return SignalBuffer(x, rate, start)
