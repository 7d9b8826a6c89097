# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled transform kernels.

Same contract as fcu._fftpy: fft_rows(a, inverse) transforms every row of a
C-contiguous complex128 matrix in place (iterative radix-2 Cooley-Tukey,
Bluestein chirp-z for non-power-of-two lengths, 1/n folded into the inverse).
The butterfly loops run as tight C; Bluestein's chirp setup stays in numpy
since it is O(n) against the O(n log n) transforms.
"""

import numpy as np


cdef void _pow2_rows(double complex[:, ::1] a, double complex[::1] table) noexcept nogil:
    # table[k] = exp(sign * 2j*pi*k / n) for k < n//2; sign picks direction.
    cdef Py_ssize_t rows = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, i, j, bit, size, half, stride, start, k
    cdef double complex u, t
    if n <= 1:
        return
    for r in range(rows):
        j = 0
        for i in range(1, n):
            bit = n >> 1
            while j & bit:
                j ^= bit
                bit >>= 1
            j |= bit
            if i < j:
                u = a[r, i]
                a[r, i] = a[r, j]
                a[r, j] = u
        size = 2
        while size <= n:
            half = size >> 1
            stride = n // size
            start = 0
            while start < n:
                for k in range(half):
                    u = a[r, start + k]
                    t = a[r, start + half + k] * table[k * stride]
                    a[r, start + k] = u + t
                    a[r, start + half + k] = u - t
                start += size
            size <<= 1


def _twiddles(Py_ssize_t n, bint inverse):
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(max(n // 2, 1)) / n)


def _pow2(a, bint inverse):
    cdef double complex[:, ::1] mv = a
    cdef double complex[::1] tw = _twiddles(a.shape[1], inverse)
    with nogil:
        _pow2_rows(mv, tw)


def _bluestein(a, bint inverse):
    # km = (k^2 + m^2 - (k-m)^2) / 2 rewrites the DFT as a chirp-modulated
    # linear convolution, evaluated cyclically at the next power of two.
    cdef Py_ssize_t n = a.shape[1]
    sign = 1.0 if inverse else -1.0
    k = np.arange(n)
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << int(2 * n - 1).bit_length()

    fa = np.zeros((a.shape[0], m), dtype=np.complex128)
    fa[:, :n] = a * chirp
    fb = np.zeros((1, m), dtype=np.complex128)
    fb[0, :n] = np.conj(chirp)
    fb[0, m - n + 1:] = np.conj(chirp[1:])[::-1]

    _pow2(fa, False)
    _pow2(fb, False)
    fa *= fb
    _pow2(fa, True)
    fa /= m

    a[:, :] = fa[:, :n] * chirp


def fft_rows(a, bint inverse=False):
    """Transform every row of `a` in place; inverse includes the 1/n factor."""
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ValueError("fft_rows expects a 2-D numpy array")
    if a.dtype != np.complex128 or not a.flags.c_contiguous:
        raise ValueError("fft_rows expects a C-contiguous complex128 array")
    cdef Py_ssize_t n = a.shape[1]
    if n == 0:
        raise ValueError("fft_rows: rows must be non-empty")
    if n & (n - 1) == 0:
        _pow2(a, inverse)
    else:
        _bluestein(a, inverse)
    if inverse:
        a /= n


BACKEND = "compiled"
