"""Gray-coded square QAM with unit average symbol energy."""

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)


def _check(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"qam_order must be one of {SUPPORTED_ORDERS}, got {order}")
    return int(np.log2(order)) // 2  # bits per axis


def _levels(bits_per_axis: int) -> np.ndarray:
    m = 2**bits_per_axis
    return np.arange(-(m - 1), m, 2, dtype=float)


def _scale(order: int) -> float:
    # mean |s|^2 of the unnormalised lattice is 2 (M - 1) / 3
    return 1.0 / np.sqrt(2.0 * (order - 1) / 3.0)


def bits_per_symbol(order: int) -> int:
    return 2 * _check(order)


def _axis_map(bits: np.ndarray, k: int) -> np.ndarray:
    # bits -> Gray index -> level
    b = bits.reshape(-1, k)
    gray = b.dot(1 << np.arange(k - 1, -1, -1))
    binary = gray.copy()
    shift = gray >> 1
    while np.any(shift):
        binary ^= shift
        shift >>= 1
    return _levels(k)[binary]


def _axis_demap(values: np.ndarray, k: int) -> np.ndarray:
    m = 2**k
    idx = np.clip(np.round((values + (m - 1)) / 2), 0, m - 1).astype(int)
    gray = idx ^ (idx >> 1)
    out = (gray[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return out.reshape(-1).astype(np.uint8)


def modulate(bits: np.ndarray, order: int) -> np.ndarray:
    k = _check(order)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % (2 * k):
        raise ValueError("bit count is not a multiple of bits per symbol")
    pairs = bits.reshape(-1, 2 * k)
    i = _axis_map(pairs[:, :k].reshape(-1), k)
    q = _axis_map(pairs[:, k:].reshape(-1), k)
    return (i + 1j * q) * _scale(order)


def demodulate(symbols: np.ndarray, order: int) -> np.ndarray:
    """Hard-decision demapping back to bits (uint8)."""
    k = _check(order)
    s = np.asarray(symbols) / _scale(order)
    bi = _axis_demap(s.real, k).reshape(-1, k)
    bq = _axis_demap(s.imag, k).reshape(-1, k)
    return np.hstack([bi, bq]).reshape(-1)
