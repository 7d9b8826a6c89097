"""Frequency-domain memory preservation for model parameters.

Parameters are viewed as 2-D matrices (convolution tensors are unrolled so
kernel rows/columns stay contiguous), transformed with the package's DFT, and
split into amplitude and phase.  A blend keeps the *low-frequency amplitudes*
of a reference model and everything else (high-frequency amplitudes and all
phases) from the working model:

    A_hat = M * A(ref) + (1 - M) * A(work),      result = IDFT(A_hat * e^{i phase(work)})

where M selects a centered ``floor(r*rows) x floor(r*cols)`` block in
fftshifted coordinates.  Because the matrices are real their spectra are
conjugate-symmetric; the selector actually applied is the mask united with
its frequency-negation mirror so the blended spectrum stays conjugate
symmetric and the inverse transform lands on a real matrix.  The mask's
``bits`` keep the exact rectangle (popcount = floor(r*rows)*floor(r*cols));
the symmetrized selector can be wider by at most one ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from fcu import fourier
from fcu.nn import ParameterSet


class AmplitudePhase(NamedTuple):
    amplitude: np.ndarray  # nonnegative
    phase: np.ndarray  # radians in (-pi, pi]


def decompose(c: np.ndarray) -> AmplitudePhase:
    """Polar split of a complex spectrum."""
    c = np.asarray(c, dtype=np.complex128)
    return AmplitudePhase(np.abs(c), np.angle(c))


def recompose(ap: AmplitudePhase) -> np.ndarray:
    amplitude, phase = ap
    if np.any(amplitude < 0):
        raise ValueError("amplitudes must be nonnegative")
    return amplitude * np.exp(1j * np.asarray(phase))


def _block(n: int, ratio: float) -> tuple[int, int]:
    # centered length-floor(ratio*n) block in fftshifted coordinates
    b = int(np.floor(ratio * n))
    return (n - b) // 2, b


@dataclass(frozen=True)
class FrequencyMask:
    """Centered rectangular low-frequency mask, in fftshifted coordinates."""

    rows: int
    cols: int
    ratio: float
    bits: np.ndarray = field(repr=False)

    def popcount(self) -> int:
        return int(self.bits.sum())


def build_mask(rows: int, cols: int, ratio: float) -> FrequencyMask:
    if rows < 1 or cols < 1:
        raise ValueError("mask dimensions must be positive")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"blend ratio must be in [0, 1], got {ratio}")
    bits = np.zeros((rows, cols), dtype=np.uint8)
    r0, br = _block(rows, ratio)
    c0, bc = _block(cols, ratio)
    bits[r0 : r0 + br, c0 : c0 + bc] = 1
    return FrequencyMask(rows, cols, ratio, bits)


def _mirror2(sel: np.ndarray) -> np.ndarray:
    # frequency negation: index k -> (-k) mod n on both axes
    return np.roll(sel[::-1, ::-1], (1, 1), axis=(0, 1))


def selector(mask: FrequencyMask) -> np.ndarray:
    """Boolean selector in unshifted coordinates, symmetrized under negation."""
    sel = np.fft.ifftshift(mask.bits.astype(bool))
    return sel | _mirror2(sel)


def _selector_1d(n: int, ratio: float) -> np.ndarray:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"blend ratio must be in [0, 1], got {ratio}")
    bits = np.zeros(n, dtype=bool)
    s0, b = _block(n, ratio)
    bits[s0 : s0 + b] = True
    sel = np.fft.ifftshift(bits)
    return sel | np.roll(sel[::-1], 1)


def blend_matrix(m_ref: np.ndarray, m_work: np.ndarray, ratio: float) -> np.ndarray:
    """Low-band amplitudes of `m_ref`, remaining spectrum of `m_work`."""
    m_ref = np.asarray(m_ref, dtype=np.float64)
    m_work = np.asarray(m_work, dtype=np.float64)
    if m_ref.shape != m_work.shape or m_ref.ndim != 2:
        raise ValueError("blend_matrix expects two equal-shape 2-D matrices")
    sel = selector(build_mask(m_ref.shape[0], m_ref.shape[1], ratio))
    amp_ref = np.abs(fourier.fft2(m_ref))
    f_work = fourier.fft2(m_work)
    amp, phase = decompose(f_work)
    blended = np.where(sel, amp_ref, amp)
    return fourier.ifft2(recompose(AmplitudePhase(blended, phase)), imag_tol=1e-8)


def blend_vector(v_ref: np.ndarray, v_work: np.ndarray, ratio: float) -> np.ndarray:
    """1-D analogue of :func:`blend_matrix`, used for bias vectors."""
    v_ref = np.asarray(v_ref, dtype=np.float64)
    v_work = np.asarray(v_work, dtype=np.float64)
    if v_ref.shape != v_work.shape or v_ref.ndim != 1:
        raise ValueError("blend_vector expects two equal-length vectors")
    sel = _selector_1d(v_ref.size, ratio)
    amp_ref = np.abs(fourier.fft1(v_ref))
    f_work = fourier.fft1(v_work)
    blended = np.where(sel, amp_ref, np.abs(f_work))
    return fourier.ifft1(blended * np.exp(1j * np.angle(f_work)), imag_tol=1e-8)


def reshape_conv(w: np.ndarray, dims: tuple[int, int, int, int]) -> np.ndarray:
    """Unroll (in_ch, out_ch, kh, kw) so element [n,h,x,y] lands at row n*kh+x, col h*kw+y."""
    n, h, d1, d2 = dims
    w = np.asarray(w, dtype=np.float64)
    if w.shape != dims:
        raise ValueError(f"weight shape {w.shape} does not match dims {dims}")
    return np.ascontiguousarray(w.transpose(0, 2, 1, 3).reshape(n * d1, h * d2))


def unreshape_conv(m: np.ndarray, dims: tuple[int, int, int, int]) -> np.ndarray:
    n, h, d1, d2 = dims
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (n * d1, h * d2):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
    return np.ascontiguousarray(m.reshape(n, d1, h, d2).transpose(0, 2, 1, 3))


def fgmp_blend(
    w_ref: np.ndarray,
    w_work: np.ndarray,
    ratio: float,
    conv_dims: tuple[int, int, int, int] | None = None,
) -> np.ndarray:
    """Blend one tensor: 4-D via the conv unroll, 2-D directly, 1-D via vectors."""
    w_ref = np.asarray(w_ref, dtype=np.float64)
    w_work = np.asarray(w_work, dtype=np.float64)
    if w_ref.shape != w_work.shape:
        raise ValueError("tensors must have the same shape")
    if w_ref.ndim == 4:
        if conv_dims is None:
            conv_dims = w_ref.shape
        out = blend_matrix(
            reshape_conv(w_ref, conv_dims), reshape_conv(w_work, conv_dims), ratio
        )
        return unreshape_conv(out, conv_dims)
    if w_ref.ndim == 2:
        return blend_matrix(w_ref, w_work, ratio)
    if w_ref.ndim == 1:
        return blend_vector(w_ref, w_work, ratio)
    raise ValueError(f"unsupported tensor rank {w_ref.ndim}")


def fgmp_apply(p_ref: ParameterSet, p_work: ParameterSet, ratio: float) -> ParameterSet:
    """Blend every tensor of a parameter set; returns a new congruent set."""
    p_ref.require_congruent(p_work, "fgmp_apply")
    entries = {}
    for name in p_ref.names:
        meta = p_ref.meta[name]
        entries[name] = fgmp_blend(
            p_ref[name], p_work[name], ratio, conv_dims=meta.conv_dims
        )
    out = ParameterSet(entries, p_ref.meta)
    out.require_finite("fgmp_apply")
    return out
