"""Effective one-body dynamics: the cubic NLS with an external trap.

i d/dt phi = (-Laplacian + A_t) phi + a |phi|^2 phi

Real-time propagation uses Strang splitting with exact exponential substeps:
half a step of the diagonal phase (trap sampled at the interval midpoint plus
the frozen nonlinearity), a full kinetic step in frequency space, and another
diagonal half step with the refreshed density.  Imaginary-time variants of
the same splitting produce ground states; the lens transform maps free-space
solutions onto harmonically trapped ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    FREQUENCY,
    Field2D,
    GridSpec,
    fft2,
    grad_norm_sq,
    ifft2,
    inner,
    norm,
    normalized,
)
from .potentials import ExternalPotentialSpec, evaluate_external, quartic_norm4


@dataclass(frozen=True)
class NLSParams:
    """Coupling a (focusing when a < 0), time step, trap, and scheme tag."""

    a: float
    dt: float
    external: ExternalPotentialSpec
    scheme: str = "strang"

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.scheme != "strang":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


@dataclass(frozen=True)
class NLSState:
    phi: Field2D
    t: float
    params: NLSParams


@dataclass(frozen=True)
class ConservedReport:
    t: float
    mass: float
    e_nls: float
    sup_norm: float
    grad_l2: float
    sigma4: float


@dataclass(frozen=True)
class BlowUpInfo:
    t: float
    reason: str
    sup_norm: float
    grad_l2: float


def nls_energy(phi: Field2D, a: float, a_field: Field2D) -> float:
    """E = ||grad phi||^2 + (a/2) <phi, |phi|^2 phi> + <phi, A phi>."""
    quart = quartic_norm4(phi)
    pot = float(np.sum(a_field.values.real * np.abs(phi.values) ** 2) * phi.grid.h**2)
    return grad_norm_sq(phi) + 0.5 * a * quart + pot


def conserved_report(state: NLSState) -> ConservedReport:
    phi = state.phi
    a_field = evaluate_external(state.params.external, state.t, phi.grid)
    return ConservedReport(
        t=state.t,
        mass=norm(phi) ** 2,
        e_nls=nls_energy(phi, state.params.a, a_field),
        sup_norm=float(np.max(np.abs(phi.values))),
        grad_l2=math.sqrt(grad_norm_sq(phi)),
        sigma4=sigma_norm(phi, 4),
    )


def strang_step(state: NLSState) -> NLSState:
    """One Strang split step; mass is conserved to roundoff."""
    phi, params = state.phi, state.params
    grid = phi.grid
    dt = params.dt
    a_mid = evaluate_external(params.external, state.t + dt / 2, grid).values.real
    v = phi.values * np.exp(-0.5j * dt * (a_mid + params.a * np.abs(phi.values) ** 2))
    v = ifft2(np.exp(-1j * dt * grid.k2) * fft2(v))
    v = v * np.exp(-0.5j * dt * (a_mid + params.a * np.abs(v) ** 2))
    if not np.isfinite(v.view(float)).all():
        raise FloatingPointError(f"non-finite amplitudes after step at t={state.t:g}")
    return NLSState(phi.with_values(v), state.t + dt, params)


def evolve(
    state: NLSState,
    t_final: float,
    snapshot_stride: int = 10,
    sup_ceiling_factor: float = 50.0,
    grad_ceiling_factor: float = 100.0,
    on_snapshot=None,
) -> tuple[NLSState, list[ConservedReport], BlowUpInfo | None]:
    """Propagate to t_final, recording snapshots and watching for collapse.

    The blow-up flag is an instrumented proxy (a true blow-up cannot be
    resolved on a fixed grid): it trips when the sup norm exceeds
    sup_ceiling_factor times its initial value, when the kinetic norm exceeds
    grad_ceiling_factor times its initial value, or on the first non-finite
    amplitude.  The run halts at detection.
    """
    if t_final <= state.t:
        raise ValueError("t_final must exceed the current time")
    sup0 = float(np.max(np.abs(state.phi.values)))
    grad0 = math.sqrt(grad_norm_sq(state.phi))
    reports = [conserved_report(state)]
    n_steps = int(round((t_final - state.t) / state.params.dt))
    for k in range(n_steps):
        try:
            state = strang_step(state)
        except FloatingPointError:
            info = BlowUpInfo(state.t, "non-finite amplitudes", math.inf, math.inf)
            return state, reports, info
        sup = float(np.max(np.abs(state.phi.values)))
        if sup > sup_ceiling_factor * sup0:
            reports.append(conserved_report(state))
            return state, reports, BlowUpInfo(
                state.t, "sup-norm ceiling", sup, math.sqrt(grad_norm_sq(state.phi))
            )
        if (k + 1) % snapshot_stride == 0 or k == n_steps - 1:
            rep = conserved_report(state)
            reports.append(rep)
            if on_snapshot is not None:
                on_snapshot(state)
            if rep.grad_l2 > grad_ceiling_factor * grad0:
                return state, reports, BlowUpInfo(
                    state.t, "kinetic-norm ceiling", sup, rep.grad_l2
                )
    return state, reports, None


# ---------------------------------------------------------------------------
# ground states by imaginary time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundStateResult:
    phi: Field2D
    energy: float
    iterations: int
    residual: float


def imaginary_time_ground_state(
    params: NLSParams,
    init: Field2D,
    dtau: float = 5e-3,
    max_iter: int = 200_000,
    energy_tol: float = 1e-12,
    residual_tol: float = 1e-8,
) -> GroundStateResult:
    """Normalized minimizer of ||grad u||^2 + <u,Au> + (a/2)||u||_4^4.

    Imaginary-time Strang stepping with L2 renormalization after each step;
    terminates when the energy decrement per step drops below energy_tol or
    the Euler-Lagrange residual ||(h_GP - mu) u|| drops below residual_tol.
    """
    grid = init.grid
    if norm(init) == 0:
        raise ValueError("initial guess must be nonzero")
    a_field = evaluate_external(params.external, 0.0, grid)
    a_vals = a_field.values.real
    kin = np.exp(-dtau * grid.k2)
    u = normalized(init)
    e_prev = nls_energy(u, params.a, a_field)
    res = math.inf
    for it in range(1, max_iter + 1):
        v = u.values * np.exp(-0.5 * dtau * (a_vals + params.a * np.abs(u.values) ** 2))
        v = ifft2(kin * fft2(v))
        v = v * np.exp(-0.5 * dtau * (a_vals + params.a * np.abs(v) ** 2))
        u = normalized(Field2D(grid, v))
        if it % 20 == 0 or it == max_iter:
            e_now = nls_energy(u, params.a, a_field)
            res = _gp_residual(u, params.a, a_vals)
            if res <= residual_tol or abs(e_prev - e_now) <= energy_tol * 20:
                return GroundStateResult(u, e_now, it, res)
            e_prev = e_now
        if norm(u) == 0:
            raise RuntimeError("imaginary-time flow collapsed to the zero field")
    raise RuntimeError(
        f"imaginary time did not converge in {max_iter} iterations "
        f"(last residual {res:.3e})"
    )


def _gp_residual(u: Field2D, a: float, a_vals: np.ndarray) -> float:
    grid = u.grid
    hu = ifft2(grid.k2 * fft2(u.values)) + (a_vals + a * np.abs(u.values) ** 2) * u.values
    mu = float(np.real(np.vdot(u.values, hu)) * grid.h**2)
    return float(grid.h * np.linalg.norm(hu - mu * u.values))


def townes_profile(
    grid: GridSpec,
    dtau: float = 0.05,
    max_iter: int = 50_000,
    residual_tol: float = 1e-7,
) -> GroundStateResult:
    """Positive radial solution Q of  -Laplacian(Q) + Q - Q^3 = 0.

    Minimizes ||grad u||^2 + ||u||^2 along a fixed ||u||_4 normalization
    path: semi-implicit descent with the Lagrange term lambda |u|^2 u,
    lambda = (||grad u||^2 + ||u||^2)/||u||_4^4, followed by the exact L4
    renormalization.  At a fixed point u solves the Euler-Lagrange equation
    with multiplier lambda, and Q = sqrt(lambda) u solves the unit-coefficient
    equation.  The reported energy is ||Q||^2 (= the sharp constant a*).
    """
    r2 = grid.r2
    u = np.exp(-r2 / 2.0) * 2.2
    c4 = quartic_norm4(Field2D(grid, u)) ** 0.25
    denom = 1.0 + dtau * (1.0 + grid.k2)
    lam = 1.0
    for it in range(1, max_iter + 1):
        f = Field2D(grid, u)
        lam = (grad_norm_sq(f) + norm(f) ** 2) / quartic_norm4(f)
        w = u + dtau * lam * np.abs(u) ** 2 * u
        u = ifft2(fft2(w) / denom).real
        q4 = quartic_norm4(Field2D(grid, u)) ** 0.25
        if q4 == 0:
            raise RuntimeError("Townes iteration collapsed to zero")
        u = u * (c4 / q4)
        if it % 25 == 0 or it == max_iter:
            q = math.sqrt(lam) * u
            res = _townes_residual(grid, q)
            if res <= residual_tol:
                qf = Field2D(grid, q)
                return GroundStateResult(qf, norm(qf) ** 2, it, res)
    raise RuntimeError(
        f"Townes iteration did not reach residual {residual_tol:g} in "
        f"{max_iter} iterations (last {res:.3e})"
    )


def _townes_residual(grid: GridSpec, q: np.ndarray) -> float:
    lap = ifft2(grid.k2 * fft2(q)).real
    res = lap + q - q**3
    return float(np.linalg.norm(res) / max(np.linalg.norm(q), 1e-300))


# ---------------------------------------------------------------------------
# lens transform and weighted Sobolev diagnostics
# ---------------------------------------------------------------------------


def lens_transform(u: Field2D, t: float) -> Field2D:
    """Dilate-and-chirp map between free and harmonically trapped solutions.

    Returns (1/cos t) * u(x / cos t) * exp(-i |x|^2 tan(t) / 2).  With the
    trap A = |x|^2 the angle doubles relative to the half-coefficient
    oscillator convention: if u is the free cubic-NLS solution at time
    tan(t)/2, the returned field is the trapped solution at time t/2 (both
    starting from the same datum).  The map is an exact L2 isometry in 2D.
    The dilation is spectral interpolation of the periodic trigonometric
    interpolant; u must decay at the box boundary for this to be meaningful.
    """
    if not abs(t) < math.pi / 2:
        raise ValueError(f"lens transform needs |t| < pi/2, got t={t}")
    grid = u.grid
    c = math.cos(t)
    y = grid.x1 / c
    # 1D evaluation matrices of the trigonometric interpolant at the dilated
    # nodes; index 0 sits at coordinate -L/2, hence the +L/2 in the phase.
    # The tensor structure keeps this O(M^3).
    e = np.exp(1j * np.outer(y + grid.L / 2, grid.k1)) / grid.M
    uhat = fft2(u.values)
    dil = e @ uhat @ e.T
    chirp = np.exp(-0.5j * grid.r2 * math.tan(t))
    return u.with_values(dil * chirp / c)


def sigma_norm(u: Field2D, m: int) -> float:
    """Weighted Sobolev norm sqrt(sum_{k<=m} ||grad^k u||^2 + || |x|^k u||^2).

    Spectral |k|^k derivative weights and nodal |x|^k moment weights; the
    k = 0 term counts ||u||^2 twice (both weights are the identity there).
    """
    if not 0 <= m <= 4:
        raise ValueError(f"order must be in 0..4, got {m}")
    grid = u.grid
    uhat = fft2(u.values)
    kmag = np.sqrt(grid.k2)
    rmag = np.sqrt(grid.r2)
    freq_w = (grid.h / grid.M) ** 2
    pos_w = grid.h**2
    total = 0.0
    for k in range(m + 1):
        total += float(np.sum(np.abs(kmag**k * uhat) ** 2)) * freq_w
        total += float(np.sum(np.abs(rmag**k * u.values) ** 2)) * pos_w
    return math.sqrt(total)


def free_gaussian(grid: GridSpec, t: float, sigma0: float = 1.0) -> Field2D:
    """Closed-form free evolution (a=0, A=0) of the normalized Gaussian.

    Initial datum (pi*sigma0^2)^(-1/2) exp(-|x|^2 / (2 sigma0^2)) evolved
    under i d/dt phi = -Laplacian(phi); used as an oracle for the splitting.
    """
    s2 = sigma0**2 + 2j * t
    amp = (math.pi * sigma0**2) ** -0.5 * (sigma0**2 / s2)
    vals = amp * np.exp(-grid.r2 / (2.0 * s2))
    return Field2D(grid, vals)
