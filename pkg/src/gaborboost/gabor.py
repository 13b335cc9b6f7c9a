"""Complex Gabor kernels and same-size image convolution.

Kernels are sampled on an integer offset lattice. ``sigma_x`` scales the
horizontal envelope and ``sigma_y`` the vertical one; at ``theta = 0`` the
carrier oscillates along the horizontal axis, so the filter responds to
vertical stripe structure. ``lam`` is an angular spatial frequency in
radians per pixel (a pattern of period L pixels has lam = 2*pi/L).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .dataio import GrayImage
from .errors import SizeError

SUPPORT_SIGMAS = 3.0


@dataclass(frozen=True)
class GaborParams:
    sigma_x: float
    sigma_y: float
    theta: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "theta", "lam"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"non-finite parameter {name}={v}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("sigma_x and sigma_y must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class ComplexKernel:
    """Complex samples on [-half_width..half_width] x [-half_height..half_height]."""

    values: np.ndarray  # complex128, shape (2*half_height+1, 2*half_width+1)
    half_width: int
    half_height: int

    def value_at(self, dx: int, dy: int) -> complex:
        """Sample at integer offset (dx right, dy down) from the center."""
        return complex(self.values[dy + self.half_height, dx + self.half_width])


def make_kernel(p: GaborParams, dc_correct: bool = False) -> ComplexKernel:
    """Build the truncated kernel for ``p``.

    The support is cut at ceil(3 sigma) per axis. With ``dc_correct`` the
    mean of the real part over the support is subtracted, which removes the
    kernel's response to constant intensity.
    """
    hw = math.ceil(SUPPORT_SIGMAS * p.sigma_x)
    hh = math.ceil(SUPPORT_SIGMAS * p.sigma_y)
    dx = np.arange(-hw, hw + 1, dtype=np.float64)[None, :]
    dy = np.arange(-hh, hh + 1, dtype=np.float64)[:, None]
    envelope = np.exp(-(dx**2 / (2.0 * p.sigma_x**2) + dy**2 / (2.0 * p.sigma_y**2)))
    phase = p.lam * (dy * math.sin(p.theta) + dx * math.cos(p.theta))
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * p.sigma_x * p.sigma_y)
    values = norm * envelope * np.exp(1j * phase)
    if dc_correct:
        values = values - values.real.mean()
    return ComplexKernel(values, hw, hh)


def _pad_reflect(data: np.ndarray, hh: int, hw: int) -> np.ndarray:
    return np.pad(data, ((hh, hh), (hw, hw)), mode="symmetric")


def _convolve_direct_valid(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Plain shift-and-accumulate convolution, 'valid' output size."""
    kh, kw = kernel.shape
    out_h = padded.shape[0] - kh + 1
    out_w = padded.shape[1] - kw + 1
    out = np.zeros((out_h, out_w), dtype=np.complex128)
    for r in range(kh):
        for c in range(kw):
            w = kernel[r, c]
            if w == 0:
                continue
            out += w * padded[kh - 1 - r : kh - 1 - r + out_h, kw - 1 - c : kw - 1 - c + out_w]
    return out


def convolve(img: GrayImage, kernel: ComplexKernel, backend: str = "fft") -> np.ndarray:
    """Same-size convolution of ``img`` with ``kernel``.

    Borders use reflect padding. Backends 'direct' and 'fft' compute the
    same quantity by independent methods and agree to float precision.
    """
    kh, kw = kernel.values.shape
    if kh > 3 * img.height or kw > 3 * img.width:
        raise SizeError(
            f"kernel {kw}x{kh} exceeds 3x image extent {img.width}x{img.height}"
        )
    padded = _pad_reflect(img.data, kernel.half_height, kernel.half_width)
    if backend == "fft":
        return fftconvolve(padded.astype(np.complex128), kernel.values, mode="valid")
    if backend == "direct":
        return _convolve_direct_valid(padded.astype(np.complex128), kernel.values)
    raise ValueError(f"unknown convolution backend {backend!r}")


def response_norm(
    img: GrayImage,
    p: GaborParams,
    dc_correct: bool = True,
    backend: str = "fft",
) -> float:
    """l2 norm of the complex response magnitude over the whole field."""
    kernel = make_kernel(p, dc_correct=dc_correct)
    resp = convolve(img, kernel, backend=backend)
    return float(np.linalg.norm(resp))
