"""Coherent fusion of two sparse sub-bands into one wide synthetic band.

The de-chirped beat of band i is a scan of the target frequency response
H(f) = sum_l rho_l exp(-j 2 pi f tau_l) at f = F_i + k t. Both scans share one
frequency grid, so H is a sum of complex exponentials in the bin index. Its
poles are estimated jointly from both bands (forward-backward linear
prediction, then a variable-projection refinement over the full aperture),
and the missing bins are predicted from the model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.optimize
from numpy.lib.stride_tricks import sliding_window_view

from .channel import SPEED_OF_LIGHT
from .errors import FusionError
from .radar import DechirpedSubband, RangeProfile, profile_from_samples

PROVENANCE = ("measured-band1", "measured-band2", "interpolated")
# Largest acceptable condition number of the exponential basis.
CONDITION_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class BandSamples:
    """Samples of H(f) on a uniform grid; ``valid`` marks trustworthy bins."""

    values: np.ndarray
    frequencies: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        f = np.asarray(self.frequencies, dtype=float)
        if v.shape != f.shape or v.ndim != 1 or len(v) < 2:
            raise FusionError("values and frequencies must be equal-length 1-D arrays (>= 2 bins)")
        d = np.diff(f)
        if d[0] <= 0 or np.max(np.abs(d - d[0])) > 1e-6 * d[0]:
            raise FusionError("band grid is not uniform")
        ok = np.ones(len(v), bool) if self.valid is None else np.asarray(self.valid, bool)
        if ok.shape != v.shape:
            raise FusionError("valid mask does not match the samples")
        for name, a in (("values", v), ("frequencies", f), ("valid", ok)):
            a = a.view()
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def spacing(self) -> float:
        return float((self.frequencies[-1] - self.frequencies[0]) / (len(self.frequencies) - 1))

    @property
    def start(self) -> float:
        return float(self.frequencies[0])

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class FusionConfig:
    model_order: int | Literal["auto"] = "auto"
    method: str = "fblp"
    gap: tuple[float, float] | None = None
    coherence_correction: bool = False
    prune_db: float = -20.0
    refine: bool = True

    def __post_init__(self):
        if self.method not in ("fblp", "forward-backward linear prediction"):
            raise FusionError(f"unsupported fusion method {self.method!r}")
        if self.model_order != "auto" and (not isinstance(self.model_order, (int, np.integer))
                                           or self.model_order < 1):
            raise FusionError("model_order must be a positive integer or 'auto'")


@dataclass(frozen=True, eq=False)
class FusedSpectrum:
    values: np.ndarray
    frequencies: np.ndarray
    provenance: np.ndarray  # one entry of PROVENANCE per bin

    @property
    def spacing(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def bandwidth(self) -> float:
        return self.spacing * len(self.values)


@dataclass(frozen=True)
class CoherenceEstimate:
    gain: complex
    slope: float  # s, linear phase slope of band 2 relative to band 1

    @property
    def phase(self) -> float:
        return float(np.angle(self.gain))


# -- frequency sampling ------------------------------------------------------

def to_frequency_samples(d: DechirpedSubband, scene_window=None, *,
                         c: float = SPEED_OF_LIGHT) -> BandSamples:
    """Turn a beat into H(f) samples on f = F_i + k n / fs.

    The residual video phase is removed for every target at once by a
    quadratic-phase (deskew) filter exp(j pi f_b^2 / k) on the beat spectrum;
    this also advances each target's tone by its own delay so all targets
    start at t = 0. ``scene_window`` = (r_min, r_max) bounds the target
    ranges; the tail that later targets never reach is marked invalid.
    """
    beat = d.beat
    desc = d.descriptor
    k, fs = desc.chirp_slope, beat.sample_rate
    n = len(beat)
    if scene_window is None:
        scene_window = (0.0, c * fs / 2 / (2 * k))
    r_min, r_max = map(float, scene_window)
    if not 0 <= r_min <= r_max:
        raise FusionError("scene_window must satisfy 0 <= r_min <= r_max")
    tau_min, tau_max = 2 * r_min / c, 2 * r_max / c

    nfft = 2 * n
    X = np.fft.fft(beat.samples, nfft)
    nu = np.fft.fftfreq(nfft, 1 / fs)
    z = np.fft.ifft(X * np.exp(1j * np.pi * nu**2 / k))[:n]

    # dispersion of the deskew filter smears edges over ~ fs / sqrt(k) samples
    margin = int(np.ceil(2 * fs / np.sqrt(k)))
    lo, hi = beat.valid
    start = max(0, lo - int(np.floor(tau_min * fs))) + margin
    stop = min(n, hi - int(np.ceil(tau_max * fs))) - margin
    valid = np.zeros(n, bool)
    valid[max(0, start):max(0, stop)] = True
    if not valid.any():
        raise FusionError("scene window leaves no valid frequency samples")
    f = desc.start_frequency + k * np.arange(n) / fs
    return BandSamples(np.conj(z) / d.gain, f, valid)


# -- model fitting --------------------------------------------------------------

def _offsets(b1: BandSamples, b2: BandSamples) -> tuple[float, int]:
    df = b1.spacing
    if abs(b2.spacing - df) > 1e-6 * df:
        raise FusionError("sub-band grids have different spacings")
    off = (b2.start - b1.start) / df
    if abs(off - round(off)) > 1e-3:
        raise FusionError("band 2 grid is not aligned with band 1 grid")
    off = int(round(off))
    if off < len(b1):
        raise FusionError("sub-bands overlap")
    return df, off


def _lp_rows(x: np.ndarray, ok: np.ndarray, p: int):
    """Forward and backward prediction rows from windows of p+1 valid samples."""
    if len(x) <= p:
        return np.zeros((0, p), complex), np.zeros(0, complex)
    W = sliding_window_view(x, p + 1)
    good = sliding_window_view(ok, p + 1).all(axis=1)
    W = W[good]
    fwd_A, fwd_b = W[:, p - 1::-1], -W[:, p]
    bwd_A, bwd_b = np.conj(W[:, 1:]), -np.conj(W[:, 0])
    return np.vstack([fwd_A, bwd_A]), np.concatenate([fwd_b, bwd_b])


def fblp_poles(bands, order: int, lp_order: int | None = None) -> np.ndarray:
    """Pole angles (rad/bin) of ``order`` exponentials by forward-backward LP.

    Prediction coefficients are shared across ``bands`` (iterable of
    (values, valid) pairs). The LP order defaults to a third of the shortest
    band and the solution is truncated to rank ``order`` (Tufts-Kumaresan),
    which pushes the extraneous roots inside the unit circle. The ``order``
    roots nearest the circle are kept and projected onto it.
    """
    bands = [(np.asarray(v), np.asarray(ok)) for v, ok in bands]
    if lp_order is None:
        lp_order = max(order, min(int(ok.sum()) for _, ok in bands) // 3)
    rows, rhs = zip(*(_lp_rows(v, ok, lp_order) for v, ok in bands))
    A, y = np.vstack(rows), np.concatenate(rhs)
    if len(y) < lp_order:
        raise FusionError("too few valid samples for the requested model order")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    r = min(order, int(np.sum(s > 1e-12 * s[0]))) if s[0] > 0 else 0
    if r == 0:
        return np.zeros(0)
    coef = Vh[:r].conj().T @ ((U[:, :r].conj().T @ y) / s[:r])
    roots = np.roots(np.concatenate([[1.0], coef]))
    roots = roots[np.argsort(np.abs(np.abs(roots) - 1))[:order]]
    return np.angle(roots)


def _basis(omega: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(idx, omega))


def _lstsq(E: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(E, x, rcond=None)[0]


@dataclass(frozen=True)
class ExponentialModel:
    """H[n] = sum_l a_l exp(j omega_l n) on the global bin index n."""

    omega: np.ndarray
    amplitudes: np.ndarray

    def evaluate(self, idx) -> np.ndarray:
        return _basis(self.omega, np.asarray(idx, float)) @ self.amplitudes


def _measured(b1: BandSamples, b2: BandSamples, off: int):
    i1 = np.flatnonzero(b1.valid)
    i2 = np.flatnonzero(b2.valid)
    return i1, b1.values[i1], i2 + off, b2.values[i2]


def _prune(omega, E_idx, x, prune_db):
    """Drop near-duplicate poles and components weaker than ``prune_db``."""
    omega = np.sort(omega)
    keep = np.concatenate([[True], np.diff(omega) > 1e-9]) if len(omega) else np.zeros(0, bool)
    omega = omega[keep]
    while len(omega):
        a = _lstsq(_basis(omega, E_idx), x)
        mag = np.abs(a)
        weak = mag < mag.max() * 10 ** (prune_db / 20)
        if not weak.any():
            break
        omega = omega[~weak]
    return omega


def _refine(omega, idx, x):
    """Variable projection: optimise pole angles with amplitudes solved by LS."""
    def resid(w):
        E = _basis(w, idx)
        r = x - E @ _lstsq(E, x)
        return np.concatenate([r.real, r.imag])

    sol = scipy.optimize.least_squares(resid, omega, method="lm", xtol=1e-15, ftol=1e-15,
                                       gtol=1e-15, max_nfev=200 * (len(omega) + 1))
    return sol.x


def auto_order(b1: BandSamples, b2: BandSamples) -> int:
    """Coarse peak count of the better-resolved single band plus two."""
    count = 0
    for b in (b1, b2):
        x = np.conj(b.values[b.valid])
        if len(x) > 2 and np.any(x):
            p = profile_from_samples(x, 1.0, b.spacing, b.spacing * len(x), window="hann")
            count = max(count, len(p.peaks))
    return count + 2


def _order(cfg: FusionConfig, b1, b2) -> int:
    p = auto_order(b1, b2) if cfg.model_order == "auto" else int(cfg.model_order)
    limit = min(int(b1.valid.sum()), int(b2.valid.sum())) / 2
    if p >= limit:
        raise FusionError(f"model order {p} must stay below {limit:g} (half the valid bins)")
    return p


def fit_model(b1: BandSamples, b2: BandSamples, cfg: FusionConfig = FusionConfig()) -> ExponentialModel:
    """Shared-pole exponential model of both bands."""
    _, off = _offsets(b1, b2)
    i1, x1, i2, x2 = _measured(b1, b2, off)
    idx = np.concatenate([i1, i2]).astype(float)
    x = np.concatenate([x1, x2])
    if not np.any(x):
        return ExponentialModel(np.zeros(0), np.zeros(0, complex))
    p = _order(cfg, b1, b2)
    omega = fblp_poles([(b1.values, b1.valid), (b2.values, b2.valid)], p)
    omega = _prune(omega, idx, x, cfg.prune_db)
    if cfg.refine and len(omega):
        omega = _prune(_refine(omega, idx, x), idx, x, cfg.prune_db)
    E = _basis(omega, idx)
    if np.linalg.cond(E) > CONDITION_LIMIT:
        raise FusionError("exponential basis is ill-conditioned; reduce the model order")
    return ExponentialModel(omega, _lstsq(E, x))


# -- coherence --------------------------------------------------------------------

def estimate_coherence(b1: BandSamples, b2: BandSamples,
                       cfg: FusionConfig = FusionConfig()) -> CoherenceEstimate:
    """Complex gain g and phase slope s such that b2 ~ g exp(j s (n - n2)) H.

    Shared poles, per-band amplitudes tied through g, solved by variable
    projection over (poles, log|g|, arg g, s).
    """
    _, off = _offsets(b1, b2)
    i1, x1, i2, x2 = _measured(b1, b2, off)
    if not (np.any(x1) and np.any(x2)):
        raise FusionError("cannot align bands without signal in both")
    p = _order(cfg, b1, b2)
    omega = fblp_poles([(b1.values, b1.valid), (b2.values, b2.valid)], p)
    omega = _prune(omega, np.concatenate([i1, i2]).astype(float),
                   np.concatenate([x1, x2]), cfg.prune_db)
    if not len(omega):
        raise FusionError("no signal components found for alignment")
    L = len(omega)
    rel = (i2 - off).astype(float)

    def basis(params):
        w, lg, th, s = params[:L], params[L], params[L + 1], params[L + 2]
        E1 = _basis(w, i1)
        E2 = _basis(w, i2) * (np.exp(lg + 1j * (th + s * rel)))[:, None]
        return np.vstack([E1, E2])

    x = np.concatenate([x1, x2])

    def resid(params):
        E = basis(params)
        r = x - E @ _lstsq(E, x)
        return np.concatenate([r.real, r.imag])

    a1 = _lstsq(_basis(omega, i1), x1)
    m2 = _basis(omega, i2) @ a1
    g0 = np.vdot(m2, x2) / np.vdot(m2, m2)
    x0 = np.concatenate([omega, [np.log(abs(g0)), np.angle(g0), 0.0]])
    sol = scipy.optimize.least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15,
                                       gtol=1e-15, max_nfev=400 * (L + 4))
    if np.linalg.cond(basis(sol.x)) > CONDITION_LIMIT:
        raise FusionError("coherence fit is ill-conditioned")
    lg, th, s = sol.x[L:]
    return CoherenceEstimate(complex(np.exp(lg + 1j * th)), float(s))


def slope_seconds(est: CoherenceEstimate, spacing: float) -> float:
    """Express the per-bin phase slope as a time offset in seconds."""
    return est.slope / (2 * np.pi * spacing)


def align_coherence(b1: BandSamples, b2: BandSamples,
                    cfg: FusionConfig = FusionConfig()) -> BandSamples:
    """Band 2 with the estimated gain/slope mismatch removed (unchanged when correction is off)."""
    if not cfg.coherence_correction:
        return b2
    est = estimate_coherence(b1, b2, cfg)
    n = np.arange(len(b2))
    corr = est.gain * np.exp(1j * est.slope * n)
    return BandSamples(b2.values / corr, b2.frequencies, b2.valid)


# -- gap filling ----------------------------------------------------------------------

def fill_gap(b1: BandSamples, b2: BandSamples, cfg: FusionConfig = FusionConfig()) -> FusedSpectrum:
    """Fused spectrum over [band 1 start, band 2 end).

    Poles come from the joint fit; band 1 alone sets the forward amplitudes
    and band 2 alone the backward ones. Gap bins cross-fade linearly from the
    forward to the backward prediction; invalid bins inside a band take that
    band's prediction. Valid measured bins are copied unchanged.
    """
    df, off = _offsets(b1, b2)
    if cfg.gap is not None:
        g_lo, g_hi = cfg.gap
        if (abs(g_lo - (b1.start + len(b1) * df)) > 1e-3 * df
                or abs(g_hi - b2.start) > 1e-3 * df):
            raise FusionError("configured gap is not adjacent to both band grids")
    n_total = off + len(b2)
    freqs = b1.start + df * np.arange(n_total)
    values = np.zeros(n_total, complex)
    prov = np.full(n_total, "interpolated", dtype=object)

    i1, x1, i2, x2 = _measured(b1, b2, off)
    need = (~b1.valid).any() or (~b2.valid).any() or off > len(b1)
    if need and np.any(np.concatenate([x1, x2])):
        model = fit_model(b1, b2, cfg)
        fwd = _lstsq(_basis(model.omega, i1), x1) if len(i1) else model.amplitudes
        bwd = _lstsq(_basis(model.omega, i2), x2) if len(i2) else model.amplitudes
        n = np.arange(n_total, dtype=float)
        E = _basis(model.omega, n)
        pred_f, pred_b = E @ fwd, E @ bwd
        n_gap = off - len(b1)
        w = np.zeros(n_total)
        w[len(b1):off] = np.arange(1, n_gap + 1) / (n_gap + 1)
        w[off:] = 1.0
        values[:] = (1 - w) * pred_f + w * pred_b

    values[i1] = x1
    prov[i1] = PROVENANCE[0]
    values[i2] = x2
    prov[i2] = PROVENANCE[1]
    return FusedSpectrum(values, freqs, prov.astype(str))


def fused_range_profile(f: FusedSpectrum, window: str = "hann", zero_pad_factor: int = 8, *,
                        min_prominence_db: float = 6.0, c: float = SPEED_OF_LIGHT) -> RangeProfile:
    """Range profile of the fused spectrum; nominal resolution c / (2 * total bandwidth)."""
    return profile_from_samples(np.conj(f.values), 1.0, f.spacing, f.bandwidth,
                                window=window, zero_pad_factor=zero_pad_factor,
                                min_prominence_db=min_prominence_db, c=c)


def band_range_profile(b: BandSamples, window: str = "hann", zero_pad_factor: int = 8, *,
                       c: float = SPEED_OF_LIGHT) -> RangeProfile:
    """Single-band profile from H(f) samples (all bins, valid or not)."""
    return profile_from_samples(np.conj(b.values), 1.0, b.spacing, b.spacing * len(b),
                                window=window, zero_pad_factor=zero_pad_factor, c=c)


def write_fused_csv(path, f: FusedSpectrum) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", "re", "im", "provenance"])
        for fr, v, p in zip(f.frequencies, f.values, f.provenance):
            w.writerow([repr(float(fr)), repr(float(v.real)), repr(float(v.imag)), p])
