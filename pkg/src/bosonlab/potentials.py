"""Pair interactions, their mean-field scaling, smeared potentials and traps.

The unscaled pair potential W is spherically symmetric, bounded and compactly
supported.  Its scaled version W_beta(x) = N^(-1+2*beta) * W(N^beta * x)
shrinks in range while keeping the total integral a/N, a = integral of W.
The reference bump U and the smeared potential h with Laplacian(h) = W_beta - U
trade the short-range singularity for derivatives of a mild field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .grid import (
    Field2D,
    GridSpec,
    apply_laplacian,
    fft2,
    field_from_function,
    grad_norm_sq,
    ifft2,
    inner,
    norm,
    poisson_solve_zero_mean,
)

DISK = "disk_indicator"
BUMP = "smooth_bump"
TABLE = "table"


class ResolutionError(ValueError):
    """Scaled support too small for the grid; message names the minimal M."""


@dataclass(frozen=True)
class PairPotentialSpec:
    """Spherically symmetric, compactly supported pair potential.

    shape: one of disk_indicator | smooth_bump | table.
    w0:    peak amplitude (negative values give an attractive potential).
    radius: support radius R.
    table: (r_nodes, values) radial samples, only for shape="table".
    """

    shape: str
    w0: float
    radius: float
    table: tuple | None = None

    def __post_init__(self) -> None:
        if self.shape not in (DISK, BUMP, TABLE):
            raise ValueError(f"unknown pair potential shape {self.shape!r}")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"support radius must be positive, got {self.radius}")
        if self.shape == TABLE:
            if self.table is None:
                raise ValueError("table shape needs (r_nodes, values)")
            r, v = self.table
            object.__setattr__(
                self, "table", (np.asarray(r, float), np.asarray(v, float))
            )
        object.__setattr__(self, "a", self._integral())

    def profile(self, r: np.ndarray) -> np.ndarray:
        """Radial profile W(r); zero outside the support."""
        r = np.asarray(r, dtype=float)
        if self.shape == DISK:
            return np.where(r < self.radius, self.w0, 0.0)
        if self.shape == BUMP:
            # C-infinity bump: w0 * exp(1 - 1/(1 - (r/R)^2)) inside the support
            s = np.clip(r / self.radius, 0.0, None)
            inside = s < 1.0
            out = np.zeros_like(s)
            with np.errstate(divide="ignore", over="ignore"):
                arg = 1.0 - 1.0 / (1.0 - np.where(inside, s, 0.0) ** 2)
            out[inside] = self.w0 * np.exp(arg[inside])
            return out
        rn, vn = self.table
        return np.where(r <= rn[-1], np.interp(r, rn, vn), 0.0)

    def _integral(self) -> float:
        if self.shape == DISK:
            return self.w0 * math.pi * self.radius**2
        val, _err = quad(
            lambda r: 2.0 * math.pi * r * float(self.profile(np.array(r))),
            0.0,
            self.radius,
            limit=200,
        )
        return val


def _sample_radial(
    grid: GridSpec, profile, radius: float, sharp_edge: bool, subsample: int = 16
) -> np.ndarray:
    """Sample a radial profile on the grid.

    Pointwise for smooth profiles; cells straddling a sharp support edge are
    averaged over a subsample x subsample sub-grid so the discrete mass of an
    indicator converges at a useful rate.
    """
    r = np.sqrt(grid.r2)
    out = profile(r).astype(float)
    if not sharp_edge:
        return out
    half = grid.h / 2
    straddance = np.abs(r - radius) <= half * math.sqrt(2.0)
    idx = np.argwhere(straddance)
    if idx.size == 0:
        return out
    offs = (np.arange(subsample) + 0.5) / subsample - 0.5
    ox, oy = np.meshgrid(offs * grid.h, offs * grid.h, indexing="ij")
    for i, j in idx:
        xx = grid.x1[i] + ox
        yy = grid.x1[j] + oy
        out[i, j] = float(np.mean(profile(np.sqrt(xx**2 + yy**2))))
    return out


@dataclass(frozen=True)
class ScaledPair:
    """Grid realization of W_beta = N^(-1+2b) W(N^b x), discrete mass a/N.

    The sampled field is rescaled so that h^2 * sum(values) equals a/N
    exactly; the Poisson solve for the smeared potential needs the discrete
    integrals of W_beta and U to cancel to machine precision.
    """

    base: PairPotentialSpec
    n_particles: int
    beta: float
    field: Field2D
    peak: float
    radius: float

    @property
    def mass(self) -> float:
        return self.base.a / self.n_particles


def scale_pair_potential(
    base: PairPotentialSpec, n_particles: int, beta: float, grid: GridSpec
) -> ScaledPair:
    """Realize W_beta on the grid.  Requires >= 4 cells across the support."""
    if n_particles < 1:
        raise ValueError(f"need N >= 1, got {n_particles}")
    if beta < 0:
        raise ValueError(f"need beta >= 0, got {beta}")
    n = float(n_particles)
    amp = n ** (-1.0 + 2.0 * beta)
    radius = base.radius * n ** (-beta)
    if base.w0 == 0.0 and base.shape != TABLE:
        # the zero potential is exactly representable at any resolution
        return ScaledPair(
            base=base,
            n_particles=n_particles,
            beta=beta,
            field=Field2D(grid, np.zeros((grid.M, grid.M))),
            peak=0.0,
            radius=radius,
        )
    if radius < 4.0 * grid.h:
        m_min = int(math.ceil(4.0 * grid.L / radius))
        m_min += m_min % 2
        raise ResolutionError(
            f"scaled support radius {radius:.4g} < 4 cells (h={grid.h:.4g}); "
            f"need M >= {m_min} at L={grid.L:g}"
        )
    scale = n**beta

    def profile(r):
        return amp * base.profile(r * scale)

    vals = _sample_radial(grid, profile, radius, sharp_edge=base.shape == DISK)
    target = base.a / n
    got = float(vals.sum() * grid.h**2)
    if got == 0.0 or (target != 0.0 and got / target <= 0):
        raise ResolutionError(
            f"discrete mass {got:.3e} inconsistent with target {target:.3e}; "
            "grid does not resolve the scaled potential"
        )
    if target != 0.0:
        vals = vals * (target / got)
        peak = amp * (target / got)
    else:
        peak = amp
    return ScaledPair(
        base=base,
        n_particles=n_particles,
        beta=beta,
        field=Field2D(grid, vals),
        peak=peak,
        radius=radius,
    )


@dataclass(frozen=True)
class SmearedPotential:
    """U (reference bump), h with Laplacian(h) = W_beta - U, and cached norms.

    mean(h) = 0 by gauge fixing; comparisons of ||h|| against the continuum
    free-space potential hold up to that gauge.
    """

    beta1: float
    u_field: Field2D
    h_field: Field2D
    h_l2: float
    h_l1: float
    grad_h_l2: float


def reference_bump(
    a: float, n_particles: int, beta1: float, grid: GridSpec
) -> Field2D:
    """U(x) = (a/pi) N^(-1+2*beta1) for |x| < N^(-beta1), normalized to a/N."""
    n = float(n_particles)
    radius = n ** (-beta1)
    if radius < 4.0 * grid.h:
        m_min = int(math.ceil(4.0 * grid.L / radius))
        m_min += m_min % 2
        raise ResolutionError(
            f"reference bump radius {radius:.4g} < 4 cells (h={grid.h:.4g}); "
            f"need M >= {m_min} at L={grid.L:g}"
        )
    amp = (a / math.pi) * n ** (-1.0 + 2.0 * beta1)

    def profile(r):
        return np.where(r < radius, amp, 0.0)

    vals = _sample_radial(grid, profile, radius, sharp_edge=True)
    target = a / n
    got = float(vals.sum() * grid.h**2)
    if target != 0.0:
        if got == 0.0 or got / target <= 0:
            raise ResolutionError("grid does not resolve the reference bump")
        vals = vals * (target / got)
    return Field2D(grid, vals)


def build_smeared(scaled: ScaledPair, beta1: float) -> SmearedPotential:
    """Assemble U and solve Laplacian(h) = W_beta - U with zero-mean gauge."""
    if not 0.0 <= beta1 <= scaled.beta:
        raise ValueError(f"need 0 <= beta1 <= beta, got beta1={beta1}")
    grid = scaled.field.grid
    u = reference_bump(scaled.base.a, scaled.n_particles, beta1, grid)
    mass_w = float(scaled.field.values.real.sum() * grid.h**2)
    mass_u = float(u.values.real.sum() * grid.h**2)
    ref = max(abs(mass_w), abs(mass_u), 1e-300)
    if abs(mass_w - mass_u) > 1e-8 * ref:
        raise ValueError(
            f"integral mismatch: int W_beta = {mass_w:.12e} but int U = "
            f"{mass_u:.12e}; the pair is mis-scaled"
        )
    rhs = Field2D(grid, scaled.field.values - u.values)
    h = poisson_solve_zero_mean(rhs)
    hv = h.with_values(h.values.real)
    return SmearedPotential(
        beta1=beta1,
        u_field=u,
        h_field=hv,
        h_l2=norm(hv),
        h_l1=float(np.sum(np.abs(hv.values)) * grid.h**2),
        grad_h_l2=math.sqrt(grad_norm_sq(hv)),
    )


def smeared_residual(scaled: ScaledPair, sm: SmearedPotential) -> float:
    """Relative residual of Laplacian(h) = W_beta - U (roundoff-level)."""
    rhs = scaled.field.values - sm.u_field.values
    lap_h = -apply_laplacian(sm.h_field).values
    scale = float(np.linalg.norm(rhs))
    if scale == 0:
        return float(np.linalg.norm(lap_h))
    return float(np.linalg.norm(lap_h - rhs) / scale)


# ---------------------------------------------------------------------------
# variational ratios: sharp-constant estimation and the stability condition
# ---------------------------------------------------------------------------


def quartic_norm4(u: Field2D) -> float:
    """\\|u\\|_4^4 with the grid quadrature."""
    return float(np.sum(np.abs(u.values) ** 4) * u.grid.h**2)


def gn_ratio(u: Field2D) -> float:
    """2 ||grad u||^2 ||u||^2 / ||u||_4^4; its infimum over u is a*."""
    n2 = norm(u) ** 2
    if n2 == 0:
        raise ValueError("gn_ratio of the zero field")
    q4 = quartic_norm4(u)
    if q4 == 0:
        raise ValueError("gn_ratio denominator ||u||_4^4 vanishes")
    return 2.0 * grad_norm_sq(u) * n2 / q4


def convolve(f: Field2D, g: Field2D) -> Field2D:
    """Periodic convolution (f * g)(x_n) = h^2 sum_m f(x_n - x_m) g(x_m).

    Both inputs are node-sampled; the kernel is rolled so that displacement
    index d addresses f at the wrapped displacement d*h, matching the
    minimum-image pair tensor exactly.
    """
    m = f.grid.M
    kern = np.roll(f.values, (m // 2, m // 2), axis=(0, 1))
    vals = ifft2(fft2(kern) * fft2(g.values)) * f.grid.h**2
    return Field2D(f.grid, vals)


@dataclass(frozen=True)
class StabilityEstimate:
    """Minimum of the interaction/kinetic ratio over a trial family.

    This is an UPPER bound on the true infimum: values <= -1 certify
    instability, values > -1 do not certify stability.
    """

    value: float
    is_upper_bound: bool
    argmin: int
    ratios: tuple


def stability_ratio_estimate(
    w_field: Field2D, trials: list[Field2D]
) -> StabilityEstimate:
    """min over trials of  int |phi|^2 (|phi|^2 conv W) / (||phi||^2 ||grad phi||^2)."""
    if not trials:
        raise ValueError("need at least one trial function")
    ratios = []
    for phi in trials:
        n2 = norm(phi) ** 2
        g2 = grad_norm_sq(phi)
        if n2 == 0 or g2 == 0:
            raise ValueError("trial function must be normalizable and non-constant")
        rho = Field2D(phi.grid, np.abs(phi.values) ** 2)
        conv = convolve(w_field, rho)
        val = float(np.sum(rho.values.real * conv.values.real) * phi.grid.h**2)
        ratios.append(val / (n2 * g2))
    k = int(np.argmin(ratios))
    return StabilityEstimate(
        value=float(ratios[k]), is_upper_bound=True, argmin=k, ratios=tuple(ratios)
    )


# ---------------------------------------------------------------------------
# external trapping potentials
# ---------------------------------------------------------------------------

ZERO = "zero"
HARMONIC = "harmonic"
POWER = "power"
CUSTOM = "custom"


@dataclass(frozen=True)
class ExternalPotentialSpec:
    """Trap A_t: zero, |x|^2, C|x|^s, or a tabulated sequence of snapshots.

    time_dependence "static" keeps the base field; "ramp" multiplies it by
    (1 + rate*t); "table" interpolates linearly between snapshot times.
    """

    family: str = ZERO
    coupling: float = 1.0
    exponent: float = 2.0
    time_dependence: str = "static"
    rate: float = 0.0
    snapshots: tuple | None = None  # ((t0, array), (t1, array), ...)

    def __post_init__(self) -> None:
        if self.family not in (ZERO, HARMONIC, POWER, CUSTOM):
            raise ValueError(f"unknown external potential family {self.family!r}")
        if self.family in (HARMONIC, POWER) and self.coupling < 0:
            raise ValueError("harmonic/power traps must be nonnegative")
        if self.family == POWER and self.exponent <= 0:
            raise ValueError("power trap needs exponent s > 0")
        if self.family == CUSTOM and not self.snapshots:
            raise ValueError("custom family needs snapshots")

    def negative_part_sup(self, grid: GridSpec) -> float:
        """sup of A_t^- over the configured time range (0 for the built-ins)."""
        if self.family in (ZERO, HARMONIC, POWER):
            return 0.0
        worst = 0.0
        for _t, arr in self.snapshots:
            worst = max(worst, float(np.maximum(-np.asarray(arr), 0.0).max()))
        return worst


def evaluate_external(spec: ExternalPotentialSpec, t: float, grid: GridSpec) -> Field2D:
    """Grid field of A_t; harmonic gives exactly |x|^2 at the nodes."""
    if spec.family == ZERO:
        base = np.zeros((grid.M, grid.M))
    elif spec.family == HARMONIC:
        base = spec.coupling * grid.r2
    elif spec.family == POWER:
        base = spec.coupling * np.sqrt(grid.r2) ** spec.exponent
    else:
        times = [s[0] for s in spec.snapshots]
        if t < times[0] or t > times[-1]:
            raise ValueError(
                f"t={t:g} outside tabulated range [{times[0]:g}, {times[-1]:g}]"
            )
        i = int(np.searchsorted(times, t, side="right") - 1)
        i = min(i, len(times) - 2) if len(times) > 1 else 0
        if len(times) == 1:
            base = np.asarray(spec.snapshots[0][1], dtype=float)
        else:
            t0, a0 = spec.snapshots[i]
            t1, a1 = spec.snapshots[i + 1]
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            base = (1 - w) * np.asarray(a0, float) + w * np.asarray(a1, float)
        return Field2D(grid, base)
    if spec.time_dependence == "ramp":
        base = (1.0 + spec.rate * t) * base
    return Field2D(grid, base)
