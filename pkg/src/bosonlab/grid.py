"""Periodic uniform grid on a 2D torus with FFT-based differential operators.

All physics modules share this discretization: the square box
[-L/2, L/2)^2 with M nodes per side, spectral derivatives, and the plain
h^2 * sum quadrature (exact for the spectral representation).  Fields are
immutable once built; every operation returns a new field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

POSITION = "position"
FREQUENCY = "frequency"

# scipy.fft worker threads; the CLI owns this knob (see cli.set_fft_workers).
_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft2(values: np.ndarray) -> np.ndarray:
    return _fft.fft2(values, workers=_FFT_WORKERS)


def ifft2(values: np.ndarray) -> np.ndarray:
    return _fft.ifft2(values, workers=_FFT_WORKERS)


def _smooth_enough(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-L/2, L/2)^2.

    Nodes are x_i = -L/2 + i*h with h = L/M, so index 0 sits on the left
    boundary and index M/2 exactly on the origin.  Wavenumbers per axis are
    (2*pi/L) * {-M/2, ..., M/2 - 1} in FFT (wrap-around) order.
    """

    L: float
    M: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"box length must be finite and positive, got {self.L}")
        if self.M % 2 != 0:
            raise ValueError(f"points per side must be even, got M={self.M}")
        if self.M < 8:
            raise ValueError(f"grid too coarse: need M >= 8, got M={self.M}")
        if not _smooth_enough(self.M):
            raise ValueError(
                f"M={self.M} has prime factors beyond 5; fast transforms need "
                "a 2/3/5-smooth side length"
            )
        h = self.L / self.M
        object.__setattr__(self, "h", h)
        x1 = -self.L / 2 + h * np.arange(self.M)
        object.__setattr__(self, "x1", x1)
        # 2*pi/L * integer frequencies, FFT ordering; index M/2 is the
        # Nyquist mode -M/2.
        k1 = 2.0 * np.pi * _fft.fftfreq(self.M, d=h)
        object.__setattr__(self, "k1", k1)
        # derivative multipliers zero the Nyquist mode so real fields keep
        # real derivatives
        kd = k1.copy()
        kd[self.M // 2] = 0.0
        object.__setattr__(self, "k1_deriv", kd)
        kx, ky = np.meshgrid(k1, k1, indexing="ij")
        object.__setattr__(self, "k2", kx**2 + ky**2)
        xg, yg = np.meshgrid(x1, x1, indexing="ij")
        object.__setattr__(self, "xg", xg)
        object.__setattr__(self, "yg", yg)
        object.__setattr__(self, "r2", xg**2 + yg**2)

    # round-trip index <-> coordinate maps (exact by construction)
    def coord(self, i: np.ndarray | int) -> np.ndarray | float:
        return -self.L / 2 + self.h * np.asarray(i)

    def index(self, x: np.ndarray | float) -> np.ndarray | int:
        return np.rint((np.asarray(x) + self.L / 2) / self.h).astype(int) % self.M


def make_grid(L: float, M: int) -> GridSpec:
    """Build a periodic grid; rejects odd/tiny M and non-finite L."""
    return GridSpec(float(L), int(M))


@dataclass(frozen=True)
class Field2D:
    """One complex amplitude per grid node, tagged position or frequency."""

    grid: GridSpec
    values: np.ndarray
    space: str = POSITION

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.M, self.grid.M):
            raise ValueError(
                f"field shape {v.shape} does not match grid {(self.grid.M,) * 2}"
            )
        if self.space not in (POSITION, FREQUENCY):
            raise ValueError(f"unknown space tag {self.space!r}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray, space: str | None = None) -> "Field2D":
        return Field2D(self.grid, values, space or self.space)


def field_from_function(grid: GridSpec, fn) -> Field2D:
    """Sample fn(x, y) at the nodes (vectorized over meshgrid arrays)."""
    return Field2D(grid, np.asarray(fn(grid.xg, grid.yg), dtype=np.complex128))


def to_frequency(f: Field2D) -> Field2D:
    if f.space == FREQUENCY:
        return f
    return Field2D(f.grid, fft2(f.values), FREQUENCY)


def to_position(f: Field2D) -> Field2D:
    if f.space == POSITION:
        return f
    return Field2D(f.grid, ifft2(f.values), POSITION)


def norm(f: Field2D) -> float:
    """L2 norm with the h^2*sum quadrature; Parseval-consistent in both spaces."""
    if f.space == POSITION:
        return float(f.grid.h * np.linalg.norm(f.values))
    return float(f.grid.h * np.linalg.norm(f.values) / f.grid.M)


def inner(f: Field2D, g: Field2D) -> complex:
    """<f, g> = h^2 * sum conj(f) g, both fields in position space."""
    if f.space != POSITION or g.space != POSITION:
        raise ValueError("inner product expects position-space fields")
    return complex(f.grid.h**2 * np.vdot(f.values, g.values))


def normalized(f: Field2D) -> Field2D:
    n = norm(f)
    if n == 0:
        raise ValueError("cannot normalize the zero field")
    return f.with_values(f.values / n)


def _require_position(f: Field2D, op: str) -> None:
    if f.space != POSITION:
        raise ValueError(f"{op} expects a position-space field")


def apply_laplacian(f: Field2D) -> Field2D:
    """Return -Laplacian(f), spectrally; positive semidefinite by convention."""
    _require_position(f, "apply_laplacian")
    return f.with_values(ifft2(f.grid.k2 * fft2(f.values)))


def gradient(f: Field2D) -> tuple[Field2D, Field2D]:
    """Spectral (d/dx f, d/dy f); the Nyquist derivative mode is zeroed."""
    _require_position(f, "gradient")
    fhat = fft2(f.values)
    kd = f.grid.k1_deriv
    fx = ifft2(1j * kd[:, None] * fhat)
    fy = ifft2(1j * kd[None, :] * fhat)
    return f.with_values(fx), f.with_values(fy)


def grad_norm_sq(f: Field2D) -> float:
    """\\|grad f\\|^2 via the frequency-space sum (one FFT, no roundtrip)."""
    _require_position(f, "grad_norm_sq")
    fhat = fft2(f.values)
    kd = f.grid.k1_deriv
    w = kd[:, None] ** 2 + kd[None, :] ** 2
    return float(np.sum(w * np.abs(fhat) ** 2) * (f.grid.h / f.grid.M) ** 2)


def poisson_solve_zero_mean(rhs: Field2D, mean_tol: float = 1e-10) -> Field2D:
    """Solve Laplacian(h) = rhs on the torus, returning the zero-mean solution.

    The right-hand side must have (numerically) zero mean; the k = 0 mode is
    set to zero, every other frequency coefficient is divided by -|k|^2.
    """
    _require_position(rhs, "poisson_solve_zero_mean")
    sup = float(np.max(np.abs(rhs.values)))
    mean = float(np.abs(np.mean(rhs.values)))
    if sup > 0 and mean > mean_tol * sup:
        raise ValueError(
            f"rhs mean {mean:.3e} exceeds {mean_tol:.1e} * sup {sup:.3e}; "
            "a zero-mean source is required (check the scaled potential pair)"
        )
    rhat = fft2(rhs.values)
    k2 = rhs.grid.k2.copy()
    k2[0, 0] = 1.0  # placeholder, the zero mode is overwritten below
    hhat = -rhat / k2
    hhat[0, 0] = 0.0
    return rhs.with_values(ifft2(hhat))


def sobolev_multiplier(f: Field2D) -> Field2D:
    """Apply sqrt(1 - Laplacian): multiply coefficients by sqrt(1 + |k|^2)."""
    _require_position(f, "sobolev_multiplier")
    return f.with_values(ifft2(np.sqrt(1.0 + f.grid.k2) * fft2(f.values)))


def random_smooth_field(grid: GridSpec, rng: np.random.Generator, damp: float = 0.0) -> Field2D:
    """Random complex field with the Nyquist line removed, optionally damped.

    Resolved physical fields carry no energy at the unpaired Nyquist mode; the
    derivative operators zero it, so random test fields are drawn from the
    same band-limited class.  damp > 0 applies exp(-damp * |k|^2) smoothing.
    """
    vals = rng.standard_normal((grid.M, grid.M)) + 1j * rng.standard_normal(
        (grid.M, grid.M)
    )
    vhat = fft2(vals)
    ny = grid.M // 2
    vhat[ny, :] = 0.0
    vhat[:, ny] = 0.0
    if damp > 0:
        vhat *= np.exp(-damp * grid.k2)
    return Field2D(grid, ifft2(vhat))


def boundary_decay(f: Field2D) -> float:
    """max |f| on the outermost node ring relative to max |f| overall.

    Box sizes must be chosen so this stays below ~1e-8 for wave functions
    and potentials; the torus then behaves like free space.
    """
    v = np.abs(f.values)
    sup = float(v.max())
    if sup == 0:
        return 0.0
    edge = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
    return float(edge / sup)


# ---------------------------------------------------------------------------
# serialization: little-endian header (L float64, M int64), then M^2
# complex128 values row-major
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<dq")


def save_field(path, f: Field2D) -> None:
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.L, g.M))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path) -> Field2D:
    with open(path, "rb") as fh:
        L, M = _HEADER.unpack(fh.read(_HEADER.size))
        raw = fh.read(16 * M * M)
    values = np.frombuffer(raw, dtype="<c16").reshape(M, M).astype(np.complex128)
    return Field2D(make_grid(L, M), values)


def save_field_csv(path, f: Field2D) -> None:
    g = f.grid
    with open(path, "w") as fh:
        fh.write("x,y,re,im\n")
        for i in range(g.M):
            x = g.x1[i]
            for j in range(g.M):
                v = f.values[i, j]
                fh.write(f"{x:.17g},{g.x1[j]:.17g},{v.real:.17g},{v.imag:.17g}\n")
