"""2-D discrete Fourier transforms over parameter matrices.

Forward transform is unnormalized,

    F(u, v) = sum_x sum_y m(x, y) * exp(-2j*pi*(u*x/rows + v*y/cols)),

and the inverse carries the 1/(rows*cols) factor, so ifft2(fft2(m)) == m up to
roundoff.  The row-transform kernel comes from one of two interchangeable
lanes: the compiled Cython extension ``fcu._fftcore`` when it imported
cleanly, else the numpy fallback ``fcu._fftpy``.  Setting the environment
variable ``FCU_PURE_PYTHON=1`` forces the fallback.  Both lanes implement
iterative radix-2 Cooley-Tukey plus Bluestein's chirp-z for arbitrary
lengths; no FFT library is involved.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("FCU_PURE_PYTHON", "") == "1":
    from fcu import _fftpy as _kernel
else:
    try:
        from fcu import _fftcore as _kernel  # type: ignore[no-redef]
    except ImportError:
        from fcu import _fftpy as _kernel  # type: ignore[no-redef]

BACKEND: str = _kernel.BACKEND
fft_rows = _kernel.fft_rows


def _as_complex_copy(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.size == 0:
        raise ValueError("expected a non-empty matrix")
    return np.array(m, dtype=np.complex128, order="C", copy=True)


def fft2(m: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT of a real or complex matrix."""
    a = _as_complex_copy(m)
    fft_rows(a, False)
    a = np.ascontiguousarray(a.T)
    fft_rows(a, False)
    return np.ascontiguousarray(a.T)


def ifft2_complex(c: np.ndarray) -> np.ndarray:
    """Normalized 2-D inverse DFT, complex result kept."""
    a = _as_complex_copy(c)
    fft_rows(a, True)
    a = np.ascontiguousarray(a.T)
    fft_rows(a, True)
    return np.ascontiguousarray(a.T)


def ifft2(c: np.ndarray, imag_tol: float = 1e-8) -> np.ndarray:
    """Inverse DFT of a spectrum expected to describe a real matrix.

    The imaginary residue is asserted below `imag_tol` before being
    discarded; a spectrum that is not conjugate-symmetric fails loudly
    instead of silently losing mass.
    """
    a = ifft2_complex(c)
    residue = float(np.max(np.abs(a.imag)))
    if not residue < imag_tol:
        raise ValueError(
            f"inverse transform produced imaginary residue {residue:.3e} "
            f"(tolerance {imag_tol:.1e}); spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(a.real)


def fft1(v: np.ndarray) -> np.ndarray:
    """Unnormalized 1-D DFT of a vector."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {v.shape}")
    a = np.array(v[None, :], dtype=np.complex128, order="C", copy=True)
    fft_rows(a, False)
    return a[0]


def ifft1(c: np.ndarray, imag_tol: float = 1e-8) -> np.ndarray:
    """Normalized 1-D inverse DFT with the same residue check as ifft2."""
    c = np.asarray(c)
    if c.ndim != 1 or c.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {c.shape}")
    a = np.array(c[None, :], dtype=np.complex128, order="C", copy=True)
    fft_rows(a, True)
    residue = float(np.max(np.abs(a.imag)))
    if not residue < imag_tol:
        raise ValueError(
            f"inverse transform produced imaginary residue {residue:.3e} "
            f"(tolerance {imag_tol:.1e}); spectrum is not conjugate-symmetric"
        )
    return np.ascontiguousarray(a[0].real)
