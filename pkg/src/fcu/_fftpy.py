"""Pure-Python transform kernels (numpy-vectorized).

Fallback lane for :mod:`fcu.fourier`.  Implements the same contract as the
compiled ``fcu._fftcore`` extension: ``fft_rows(a, inverse)`` transforms every
row of a C-contiguous complex128 matrix in place, using iterative radix-2
Cooley-Tukey for power-of-two lengths and Bluestein's chirp-z algorithm for
everything else.  The inverse transform includes the 1/n factor.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _bit_reversal(n: int) -> np.ndarray:
    """Index permutation that bit-reverses positions 0..n-1 (n a power of two)."""
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_pow2(a: np.ndarray, inverse: bool) -> None:
    """Unnormalized radix-2 transform of each row of `a`, in place.

    Rows must have power-of-two length.  Standard iterative butterflies after
    a bit-reversal permutation; all rows advance through each stage together.
    """
    rows, n = a.shape
    if n <= 1:
        return
    a[:, :] = a[:, _bit_reversal(n)]
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(rows, n // size, size)
        even = blocks[:, :, :half].copy()
        odd = blocks[:, :, half:] * tw
        blocks[:, :, :half] = even + odd
        blocks[:, :, half:] = even - odd
        size *= 2


def _fft_bluestein(a: np.ndarray, inverse: bool) -> None:
    """Unnormalized transform of each row for arbitrary length, in place.

    Bluestein's identity km = (k^2 + m^2 - (k-m)^2) / 2 turns the DFT into a
    linear convolution with a quadratic chirp, evaluated as a zero-padded
    cyclic convolution at the next power of two >= 2n - 1 so the radix-2
    kernel above does the heavy lifting.
    """
    rows, n = a.shape
    sign = 1.0 if inverse else -1.0
    k = np.arange(n)
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length()

    fa = np.zeros((rows, m), dtype=np.complex128)
    fa[:, :n] = a * chirp
    fb = np.zeros((1, m), dtype=np.complex128)
    fb[0, :n] = np.conj(chirp)
    fb[0, m - n + 1:] = np.conj(chirp[1:])[::-1]

    _fft_pow2(fa, False)
    _fft_pow2(fb, False)
    fa *= fb
    _fft_pow2(fa, True)
    fa /= m  # cyclic convolution needs the 1/m of the unnormalized inverse

    a[:, :] = fa[:, :n] * chirp


def fft_rows(a: np.ndarray, inverse: bool = False) -> None:
    """Transform every row of `a` in place; inverse includes the 1/n factor."""
    if a.ndim != 2:
        raise ValueError(f"fft_rows expects a 2-D array, got ndim={a.ndim}")
    if a.dtype != np.complex128 or not a.flags.c_contiguous:
        raise ValueError("fft_rows expects a C-contiguous complex128 array")
    n = a.shape[1]
    if n == 0:
        raise ValueError("fft_rows: rows must be non-empty")
    if n & (n - 1) == 0:
        _fft_pow2(a, inverse)
    else:
        _fft_bluestein(a, inverse)
    if inverse:
        a /= n
