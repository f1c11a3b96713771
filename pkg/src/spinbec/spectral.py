"""Periodic tensor grids, spinor fields and Fourier-diagonal differential operators.

Grids cover ``[-L, L)`` per axis with ``N`` points, ``x_m = -L + m h`` and
``h = 2L/N``. Wavenumbers follow the standard DFT layout, ``v_p = pi p / L``
for ``p`` in ``-N/2 .. N/2-1`` (the Nyquist mode keeps its signed value).

Fields carry a leading component axis ordered ``(1, 0, -1)``.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DegenerateInput, InvalidArgument

FFT_WORKERS = int(os.environ.get("SPINBEC_FFT_WORKERS", "1"))

COMPONENT_LABELS = (1, 0, -1)


@dataclass(frozen=True)
class GridSpec:
    dim: int
    half_widths: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidArgument(f"dim must be 2 or 3, got {self.dim}")
        if len(self.half_widths) != self.dim or len(self.points) != self.dim:
            raise InvalidArgument("half_widths and points must have one entry per axis")
        for L in self.half_widths:
            if not np.isfinite(L) or L <= 0:
                raise InvalidArgument(f"half width must be positive, got {L}")
        for n in self.points:
            if int(n) != n or n < 4 or n % 2:
                raise InvalidArgument(f"points per axis must be even and >= 4, got {n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(2.0 * L / n for L, n in zip(self.half_widths, self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis(self, i: int) -> np.ndarray:
        L, n = self.half_widths[i], self.points[i]
        return -L + np.arange(n) * (2.0 * L / n)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        return tuple(
            self.axis(i).reshape([-1 if j == i else 1 for j in range(self.dim)])
            for i in range(self.dim)
        )

    def refined(self) -> "GridSpec":
        return GridSpec(self.dim, self.half_widths, tuple(2 * n for n in self.points))

    def same_domain(self, other: "GridSpec") -> bool:
        return self.dim == other.dim and np.allclose(
            self.half_widths, other.half_widths, rtol=1e-14, atol=0.0
        )


def make_grid(dim: int, half_widths, points) -> GridSpec:
    """Build a grid; scalar ``half_widths``/``points`` are broadcast to every axis."""
    if dim not in (2, 3):
        raise InvalidArgument(f"dim must be 2 or 3, got {dim}")
    if np.isscalar(half_widths):
        half_widths = [half_widths] * dim
    if np.isscalar(points):
        points = [points] * dim
    try:
        pts = tuple(int(n) for n in points)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"invalid points {points!r}") from exc
    if any(int(n) != n for n in points):
        raise InvalidArgument(f"points must be integers, got {points!r}")
    return GridSpec(dim, tuple(float(L) for L in half_widths), pts)


class SpinorField:
    """Three complex components ``(phi_1, phi_0, phi_-1)`` sampled on a grid.

    ``data`` has shape ``(3, *grid.shape)``. Instances are treated as values:
    operations return new fields and never modify their inputs.
    """

    __slots__ = ("grid", "data")

    def __init__(self, grid: GridSpec, data, *, check: bool = True):
        arr = np.asarray(data, dtype=np.complex128)
        if check:
            if arr.shape != (3,) + grid.shape:
                raise InvalidArgument(
                    f"field data has shape {arr.shape}, expected {(3,) + grid.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise InvalidArgument("field contains NaN or Inf")
        self.grid = grid
        self.data = arr

    @classmethod
    def from_components(cls, grid: GridSpec, comps: Sequence) -> "SpinorField":
        if len(comps) != 3:
            raise InvalidArgument("a spinor field needs exactly three components")
        return cls(grid, np.stack([np.broadcast_to(np.asarray(c, dtype=np.complex128), grid.shape) for c in comps]))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpinorField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=np.complex128), check=False)

    @property
    def comp(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.data[0], self.data[1], self.data[2]

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.data.copy(), check=False)

    def scaled(self, factor: complex) -> "SpinorField":
        return SpinorField(self.grid, self.data * factor, check=False)

    def norm(self) -> float:
        return norm(self)

    def __repr__(self):
        return f"SpinorField(grid={self.grid!r}, norm={self.norm():.6g})"


@dataclass(frozen=True)
class SpectralMultipliers:
    wavenumbers: tuple[np.ndarray, ...]
    laplacian: np.ndarray
    soc0: np.ndarray
    soc1: np.ndarray


def wavenumbers(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Per-axis ``pi p / L`` in FFT order."""
    return tuple(
        2.0 * np.pi * sfft.fftfreq(n, d=h) for n, h in zip(grid.shape, grid.h)
    )


def _broadcast_axis(v: np.ndarray, i: int, dim: int) -> np.ndarray:
    return v.reshape([-1 if j == i else 1 for j in range(dim)])


class SpectralOps:
    """Cached multipliers and transforms for one grid, acting on raw arrays.

    All methods accept arrays whose trailing ``dim`` axes are spatial; leading
    axes (typically the component axis) are carried along.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        d = grid.dim
        self.axes = tuple(range(-d, 0))
        self.k = tuple(_broadcast_axis(v, i, d) for i, v in enumerate(wavenumbers(grid)))
        self.k2 = sum(k * k for k in self.k)
        kx, ky = self.k[0], self.k[1]
        self.soc0 = -kx + 1j * ky
        self.soc1 = -(kx + 1j * ky)
        self.coords = grid.coords()
        self.dv = grid.cell_volume

    @property
    def multipliers(self) -> SpectralMultipliers:
        d = self.grid.dim
        return SpectralMultipliers(
            wavenumbers=tuple(k.ravel() for k in self.k),
            laplacian=np.broadcast_to(-self.k2, self.grid.shape),
            soc0=np.broadcast_to(self.soc0, self.grid.shape[:2] + (1,) * (d - 2)),
            soc1=np.broadcast_to(self.soc1, self.grid.shape[:2] + (1,) * (d - 2)),
        )

    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.fftn(a, axes=self.axes, workers=FFT_WORKERS)

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.ifftn(a, axes=self.axes, workers=FFT_WORKERS)

    def laplacian(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(a))

    def lz(self, a: np.ndarray, a_hat: np.ndarray | None = None) -> np.ndarray:
        # -i(x d_y - y d_x) = x * F^-1[v_y a^] - y * F^-1[v_x a^]
        if a_hat is None:
            a_hat = self.fft(a)
        x, y = self.coords[0], self.coords[1]
        return x * self.ifft(self.k[1] * a_hat) - y * self.ifft(self.k[0] * a_hat)

    def soc(self, a: np.ndarray, which: str) -> np.ndarray:
        if which == "L0":
            m = self.soc0
        elif which == "L1":
            m = self.soc1
        else:
            raise InvalidArgument(f"unknown SOC operator {which!r}; expected 'L0' or 'L1'")
        return self.ifft(m * self.fft(a))

    def kinetic_density_sum(self, a_hat: np.ndarray) -> np.ndarray:
        """Per leading index, ``(1/2) int |grad a|^2`` from Fourier coefficients (Parseval)."""
        w = np.abs(a_hat) ** 2
        w *= self.k2
        return 0.5 * self.dv / self.grid.size * w.reshape(w.shape[: w.ndim - self.grid.dim] + (-1,)).sum(axis=-1)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        """``h^d sum a conj(b)`` over all entries."""
        return complex(np.vdot(b.ravel(), a.ravel())) * self.dv

    def norm2(self, a: np.ndarray) -> float:
        v = a.ravel().view(np.float64)
        return float(np.dot(v, v)) * self.dv


@functools.lru_cache(maxsize=16)
def spectral_ops(grid: GridSpec) -> SpectralOps:
    return SpectralOps(grid)


def spectral_multipliers(grid: GridSpec) -> SpectralMultipliers:
    return spectral_ops(grid).multipliers


def forward(field: SpinorField) -> np.ndarray:
    """Unnormalized DFT of every component."""
    return spectral_ops(field.grid).fft(field.data)


def inverse(grid: GridSpec, coeffs: np.ndarray) -> SpinorField:
    return SpinorField(grid, spectral_ops(grid).ifft(coeffs), check=False)


def apply_laplacian(field: SpinorField) -> SpinorField:
    return SpinorField(field.grid, spectral_ops(field.grid).laplacian(field.data), check=False)


def apply_lz(field: SpinorField) -> SpinorField:
    return SpinorField(field.grid, spectral_ops(field.grid).lz(field.data), check=False)


def apply_soc(field: SpinorField, which: str) -> SpinorField:
    """Apply ``L0 = i d_x + d_y`` or ``L1 = i d_x - d_y`` to every component."""
    return SpinorField(field.grid, spectral_ops(field.grid).soc(field.data, which), check=False)


def _check_same_grid(a: SpinorField, b: SpinorField):
    if a.grid != b.grid:
        raise InvalidArgument("fields live on different grids")


def inner_product(a: SpinorField, b: SpinorField) -> complex:
    """``<a, b> = int sum_l a_l conj(b_l)``, linear in the first argument."""
    _check_same_grid(a, b)
    return spectral_ops(a.grid).inner(a.data, b.data)


def norm(field: SpinorField) -> float:
    return float(np.sqrt(spectral_ops(field.grid).norm2(field.data)))


def normalize(field: SpinorField) -> SpinorField:
    n = norm(field)
    if not n > 0.0:
        raise DegenerateInput("cannot normalize a zero field")
    return SpinorField(field.grid, field.data / n, check=False)


def _pad_axis(c: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Zero-pad FFT-ordered coefficients along ``axis`` from ``n`` to ``2n`` modes.

    The Nyquist coefficient is split evenly between ``+n/2`` and ``-n/2``.
    """
    half = n // 2
    shape = list(c.shape)
    shape[axis] = 2 * n
    out = np.zeros(shape, dtype=c.dtype)

    def sl(a, b):
        idx = [slice(None)] * c.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    out[sl(0, half)] = c[sl(0, half)]
    out[sl(2 * n - half + 1, 2 * n)] = c[sl(half + 1, n)]
    nyq = 0.5 * c[sl(half, half + 1)]
    out[sl(half, half + 1)] = nyq
    out[sl(2 * n - half, 2 * n - half + 1)] = nyq
    return out


def prolongate_array(a: np.ndarray, coarse: GridSpec) -> np.ndarray:
    """Trigonometric interpolation of ``a`` (trailing axes on ``coarse``) to the doubled grid."""
    ops = spectral_ops(coarse)
    c = ops.fft(a)
    lead = a.ndim - coarse.dim
    for i, n in enumerate(coarse.shape):
        c = _pad_axis(c, lead + i, n)
    fine = coarse.refined()
    return spectral_ops(fine).ifft(c) * (2 ** coarse.dim)


def prolongate(field: SpinorField, fine: GridSpec) -> SpinorField:
    coarse = field.grid
    if not coarse.same_domain(fine):
        raise InvalidArgument("prolongation requires the same domain on both grids")
    if tuple(fine.shape) != tuple(2 * n for n in coarse.shape):
        raise InvalidArgument(
            f"fine grid must double the points per axis: {coarse.shape} -> {fine.shape}"
        )
    return SpinorField(fine, prolongate_array(field.data, coarse), check=False)
