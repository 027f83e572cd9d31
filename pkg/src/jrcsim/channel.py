"""Point-target radar channel and additive noise for the comm link."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ChannelError
from .signal import SignalBuffer

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class Target:
    range: float
    reflectivity: float = 1.0

    def __post_init__(self):
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ChannelError(f"target range must be positive, got {self.range}")
        if not (self.reflectivity >= 0 and math.isfinite(self.reflectivity)):
            raise ChannelError(f"reflectivity must be >= 0, got {self.reflectivity}")


@dataclass(frozen=True)
class TargetScene:
    targets: tuple[Target, ...] = ()
    propagation_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(
            t if isinstance(t, Target) else Target(*t) for t in self.targets
        ))
        if not self.propagation_speed > 0:
            raise ChannelError("propagation_speed must be positive")

    @classmethod
    def from_ranges(cls, ranges, reflectivities=None, **kw) -> "TargetScene":
        rho = [1.0] * len(ranges) if reflectivities is None else reflectivities
        return cls(tuple(Target(float(r), float(a)) for r, a in zip(ranges, rho)), **kw)

    @property
    def ranges(self) -> np.ndarray:
        return np.array([t.range for t in self.targets])

    @property
    def reflectivities(self) -> np.ndarray:
        return np.array([t.reflectivity for t in self.targets])

    @property
    def delays(self) -> np.ndarray:
        return 2 * self.ranges / self.propagation_speed


@dataclass(frozen=True)
class LinkNoiseConfig:
    """In-band electrical SNR. ``inf`` disables noise; ``-inf`` keeps noise only."""

    snr_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ChannelError("snr_db must not be NaN")


def apply_target_scene(tx: SignalBuffer, scene: TargetScene) -> SignalBuffer:
    """echo(t) = sum_i rho_i tx(t - tau_i), delays applied as a frequency-domain phase ramp.

    The buffer is zero-padded first so the delay is linear rather than
    circular; the echo keeps the input length and time grid.
    """
    n = len(tx)
    if n == 0:
        raise ChannelError("empty transmit buffer")
    tau = scene.delays
    if len(tau) and tau.max() >= tx.duration:
        raise ChannelError(
            f"round-trip delay {tau.max():.6g} s exceeds the {tx.duration:.6g} s buffer"
        )
    shift = int(np.ceil(tau.max() * tx.sample_rate)) if len(tau) else 0
    nfft = scipy.fft.next_fast_len(n + shift + 16)
    real = not tx.is_complex
    if real:
        X = np.fft.rfft(tx.samples, nfft)
        f = np.fft.rfftfreq(nfft, 1 / tx.sample_rate)
    else:
        X = np.fft.fft(tx.samples, nfft)
        f = np.fft.fftfreq(nfft, 1 / tx.sample_rate)
    H = np.zeros(len(f), dtype=complex)
    for rho, d in zip(scene.reflectivities, tau):
        H += rho * np.exp(-2j * np.pi * f * d)
    y = np.fft.irfft(X * H, nfft) if real else np.fft.ifft(X * H)
    return tx.replace(y[:n])


def _noise_mask(f: np.ndarray, band, complex_signal: bool) -> np.ndarray:
    lo, hi = band
    if complex_signal:
        return (f >= lo) & (f <= hi)
    return (np.abs(f) >= lo) & (np.abs(f) <= hi)


def add_awgn(sig: SignalBuffer, noise: LinkNoiseConfig, band) -> SignalBuffer:
    """Add white Gaussian noise confined to ``band`` = (f_lo, f_hi) Hz.

    The noise power inside the band is set exactly to P_signal / 10^(snr/10),
    both measured over the same band (positive frequencies for complex
    buffers, |f| for real ones).
    """
    lo, hi = map(float, band)
    nyq = sig.sample_rate / 2
    if not (0 <= lo < hi <= nyq):
        raise ChannelError(f"noise band [{lo}, {hi}] Hz is invalid for Nyquist {nyq} Hz")
    if noise.snr_db == math.inf:
        return sig.replace(sig.samples.copy())
    n = len(sig)
    f = np.fft.fftfreq(n, 1 / sig.sample_rate)
    mask = _noise_mask(f, (lo, hi), sig.is_complex)
    if not np.any(mask):
        raise ChannelError("noise band contains no frequency bins")
    X = np.fft.fft(sig.samples)
    p_sig = np.sum(np.abs(X[mask]) ** 2)

    rng = np.random.Generator(np.random.Philox(noise.seed))
    w = rng.standard_normal(n)
    if sig.is_complex:
        w = w + 1j * rng.standard_normal(n)
    W = np.fft.fft(w)
    W[~mask] = 0
    p_w = np.sum(np.abs(W[mask]) ** 2)
    if noise.snr_db == -math.inf:
        # noise only, at the power the signal would have had (or unit power)
        target = p_sig if p_sig > 0 else float(n * n)
        W *= np.sqrt(target / p_w)
        y = np.fft.ifft(W)
    else:
        if p_sig == 0:
            raise ChannelError("signal has no power in the noise band; SNR undefined")
        W *= np.sqrt(p_sig / p_w / 10 ** (noise.snr_db / 10))
        y = np.fft.ifft(X + W)
    return sig.replace(y if sig.is_complex else y.real)


def in_band_snr_db(clean: SignalBuffer, noisy: SignalBuffer, band) -> float:
    """Measured SNR of ``noisy`` against ``clean`` over ``band``."""
    f = np.fft.fftfreq(len(clean), 1 / clean.sample_rate)
    mask = _noise_mask(f, band, clean.is_complex)
    S = np.fft.fft(clean.samples)[mask]
    N = np.fft.fft(noisy.samples)[mask] - S
    return float(10 * np.log10(np.sum(np.abs(S) ** 2) / np.sum(np.abs(N) ** 2)))
