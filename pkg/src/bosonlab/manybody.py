"""Exact N-boson dynamics on the grid and the projector functionals.

States are first-quantized rank-N tensors: particle j owns axes (2j, 2j+1)
of an (M, M, ..., M) complex array.  Bosonic symmetry is an invariant, not an
encoding.  Kinetic terms act spectrally per particle, the pair interaction is
diagonal in position with periodic minimum-image displacements, so Strang
splitting needs one full-tensor FFT pair and two diagonal phases per step.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from . import grid as _grid
from .grid import Field2D, GridSpec, make_grid, normalized
from .nls import NLSParams, NLSState
from .potentials import ExternalPotentialSpec, ScaledPair, evaluate_external

DEFAULT_BUDGET_BYTES = 2 * 1024**3


class BudgetError(MemoryError):
    """Requested tensor exceeds the memory budget; message carries the table."""


def tensor_bytes(m: int, n_particles: int) -> int:
    """State-size accounting: 16 bytes per amplitude, M^(2N) amplitudes."""
    return 16 * m ** (2 * n_particles)


def admissible_table(budget_bytes: int, m_values=(8, 12, 16, 20, 24, 32)) -> str:
    lines = ["    M   N  bytes          admissible"]
    for m in m_values:
        for n in (1, 2, 3, 4):
            b = tensor_bytes(m, n)
            ok = "yes" if b <= budget_bytes else "no"
            lines.append(f"  {m:3d}  {n:2d}  {b:<14d} {ok}")
    return "\n".join(lines)


def check_budget(m: int, n_particles: int, budget_bytes: int) -> None:
    need = tensor_bytes(m, n_particles)
    if need > budget_bytes:
        raise BudgetError(
            f"state tensor needs {need} bytes > budget {budget_bytes}; "
            "admissible configurations:\n" + admissible_table(budget_bytes)
        )


@dataclass(frozen=True)
class ManyBodyState:
    """Symmetric N-particle wave function on the grid (N in 1..4)."""

    grid: GridSpec
    n_particles: int
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        n = self.n_particles
        if not 1 <= n <= 4:
            raise ValueError(f"supported particle numbers are 1..4, got {n}")
        shape = (self.grid.M,) * (2 * n)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != shape:
            raise ValueError(f"amplitude shape {amps.shape}, expected {shape}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def weight(self) -> float:
        """Quadrature weight h^(2N) of the discrete 2N-dimensional integral."""
        return self.grid.h ** (2 * self.n_particles)


def mb_norm(state: ManyBodyState) -> float:
    return float(math.sqrt(state.weight) * np.linalg.norm(state.amplitudes))


def mb_inner(a: ManyBodyState, b: ManyBodyState) -> complex:
    return complex(a.weight * np.vdot(a.amplitudes, b.amplitudes))


def mb_normalized(state: ManyBodyState) -> ManyBodyState:
    n = mb_norm(state)
    if n == 0:
        raise ValueError("cannot normalize the zero state")
    return ManyBodyState(state.grid, state.n_particles, state.amplitudes / n, state.t)


def product_state(phi: Field2D, n_particles: int, t: float = 0.0) -> ManyBodyState:
    """phi tensored N times; exactly symmetric by construction."""
    if abs(_grid.norm(phi) - 1.0) > 1e-10:
        raise ValueError(f"product_state needs a normalized phi, norm={_grid.norm(phi)}")
    amps = phi.values
    for _ in range(n_particles - 1):
        amps = np.multiply.outer(amps, phi.values)
    return ManyBodyState(phi.grid, n_particles, amps, t)


def gamma_state(phi: Field2D, eta: Field2D, n_particles: int) -> ManyBodyState:
    """Symmetrized one-excitation state (1/sqrt N) sum_k phi...eta(x_k)...phi.

    Requires <eta, phi> = 0 and both factors normalized; then <q1> = 1/N
    exactly and the reduced density has eigenvalues {1 - 1/N, 1/N}.
    """
    ov = _grid.inner(eta, phi)
    if abs(ov) > 1e-10:
        raise ValueError(f"eta must be orthogonal to phi, <eta,phi>={ov:.2e}")
    n = n_particles
    amps = None
    for k in range(n):
        factors = [eta.values if j == k else phi.values for j in range(n)]
        term = factors[0]
        for f in factors[1:]:
            term = np.multiply.outer(term, f)
        amps = term if amps is None else amps + term
    return ManyBodyState(phi.grid, n, amps / math.sqrt(n))


def symmetrize(amps: np.ndarray, n_particles: int) -> np.ndarray:
    """Average over all particle permutations."""
    acc = np.zeros_like(amps)
    count = 0
    for perm in itertools.permutations(range(n_particles)):
        axes = []
        for j in perm:
            axes.extend((2 * j, 2 * j + 1))
        acc += amps.transpose(axes)
        count += 1
    return acc / count


def random_symmetric_state(
    grid: GridSpec, n_particles: int, rng: np.random.Generator, smooth: float = 0.0
) -> ManyBodyState:
    """Normalized random bosonic state; smooth > 0 damps high frequencies."""
    shape = (grid.M,) * (2 * n_particles)
    amps = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if smooth > 0:
        amps = _fft.fftn(amps, workers=_grid._FFT_WORKERS)
        k2 = _kinetic_multiplier(grid, n_particles)
        amps *= np.exp(-smooth * k2)
        amps = _fft.ifftn(amps, workers=_grid._FFT_WORKERS)
    amps = symmetrize(amps, n_particles)
    return mb_normalized(ManyBodyState(grid, n_particles, amps))


def symmetry_defect(state: ManyBodyState, pairs=None) -> tuple[float, tuple | None]:
    """Largest relative asymmetry over particle pairs; names the worst pair."""
    n = state.n_particles
    if n == 1:
        return 0.0, None
    if pairs is None:
        pairs = list(itertools.combinations(range(n), 2))
    scale = float(np.max(np.abs(state.amplitudes)))
    if scale == 0:
        return 0.0, None
    worst, worst_pair = 0.0, None
    for i, j in pairs:
        axes = list(range(2 * n))
        axes[2 * i], axes[2 * i + 1], axes[2 * j], axes[2 * j + 1] = (
            axes[2 * j],
            axes[2 * j + 1],
            axes[2 * i],
            axes[2 * i + 1],
        )
        diff = float(np.max(np.abs(state.amplitudes - state.amplitudes.transpose(axes))))
        if diff / scale > worst:
            worst, worst_pair = diff / scale, (i, j)
    return worst, worst_pair


# ---------------------------------------------------------------------------
# Hamiltonian assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManyBodyHamiltonianSpec:
    """H = sum_j (-Lap_j) + sum_{j<k} W_beta(x_j - x_k) + sum_j A_t(x_j)."""

    scaled: ScaledPair
    external: ExternalPotentialSpec
    n_particles: int

    def __post_init__(self) -> None:
        if self.scaled.n_particles != self.n_particles:
            raise ValueError(
                f"pair potential scaled for N={self.scaled.n_particles} but the "
                f"Hamiltonian acts on N={self.n_particles}"
            )

    @property
    def beta(self) -> float:
        return self.scaled.beta

    @property
    def grid(self) -> GridSpec:
        return self.scaled.field.grid


def _axis_shape(m: int, n_particles: int, axes: tuple[int, ...]) -> tuple[int, ...]:
    shape = [1] * (2 * n_particles)
    for ax in axes:
        shape[ax] = m
    return tuple(shape)


def pair_displacement_matrix(wvals: np.ndarray) -> np.ndarray:
    """W[(i1,j1),(i2,j2)] = w(x_1 - x_2) with periodic minimum-image wrap.

    The node field w(x_i) is rolled so index d = (i1 - i2) mod M addresses the
    displacement d*h wrapped into [-L/2, L/2); this is the same kernel the
    circular FFT convolution uses, so quadrature-mode and tensor-mode pair
    energies agree to roundoff.
    """
    m = wvals.shape[0]
    kern = np.roll(wvals, (m // 2, m // 2), axis=(0, 1))
    d = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m
    return kern[d[:, None, :, None], d[None, :, None, :]]


def _kinetic_multiplier(grid: GridSpec, n_particles: int) -> np.ndarray:
    """sum_j |k_j|^2 over all particle axes, full-tensor shape."""
    acc = np.zeros((grid.M,) * (2 * n_particles))
    k2 = grid.k2
    for j in range(n_particles):
        acc = acc + k2.reshape(_axis_shape(grid.M, n_particles, (2 * j, 2 * j + 1)))
    return acc


def potential_tensor(spec: ManyBodyHamiltonianSpec, t: float) -> np.ndarray:
    """Full diagonal potential: pair terms plus the trap, one real tensor."""
    g = spec.grid
    n = spec.n_particles
    m = g.M
    acc = np.zeros((m,) * (2 * n))
    a_vals = evaluate_external(spec.external, t, g).values.real
    for j in range(n):
        acc = acc + a_vals.reshape(_axis_shape(m, n, (2 * j, 2 * j + 1)))
    if n >= 2:
        w4 = pair_displacement_matrix(spec.scaled.field.values.real)
        for j, k in itertools.combinations(range(n), 2):
            acc = acc + w4.reshape(_axis_shape(m, n, (2 * j, 2 * j + 1, 2 * k, 2 * k + 1)))
    return acc


def apply_hamiltonian(
    spec: ManyBodyHamiltonianSpec, state: ManyBodyState, t: float | None = None
) -> ManyBodyState:
    """H Psi as an (unnormalized) state-shaped tensor."""
    if t is None:
        t = state.t
    amps = state.amplitudes
    khat = _fft.fftn(amps, workers=_grid._FFT_WORKERS)
    khat *= _kinetic_multiplier(state.grid, state.n_particles)
    out = _fft.ifftn(khat, workers=_grid._FFT_WORKERS)
    out += potential_tensor(spec, t) * amps
    return ManyBodyState(state.grid, state.n_particles, out, state.t)


def energy_expectation(spec: ManyBodyHamiltonianSpec, state: ManyBodyState) -> float:
    return float(np.real(mb_inner(state, apply_hamiltonian(spec, state))))


def _strang_step_raw(
    spec: ManyBodyHamiltonianSpec,
    state: ManyBodyState,
    dt: float,
    kin_phase: np.ndarray | None = None,
    pot_phase: np.ndarray | None = None,
) -> ManyBodyState:
    """One Strang step of signed size dt; phases may be supplied precomputed."""
    if pot_phase is None:
        v_mid = potential_tensor(spec, state.t + dt / 2)
        pot_phase = np.exp(-0.5j * dt * v_mid)
    if kin_phase is None:
        kin_phase = np.exp(-1j * dt * _kinetic_multiplier(state.grid, state.n_particles))
    amps = state.amplitudes * pot_phase
    amps = _fft.fftn(amps, workers=_grid._FFT_WORKERS)
    amps *= kin_phase
    amps = _fft.ifftn(amps, workers=_grid._FFT_WORKERS)
    amps *= pot_phase
    return ManyBodyState(state.grid, state.n_particles, amps, state.t + dt)


def evolve_manybody(
    spec: ManyBodyHamiltonianSpec,
    state: ManyBodyState,
    t_final: float,
    dt: float,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    snapshot_stride: int = 0,
    on_snapshot=None,
) -> ManyBodyState:
    """Strang propagation to t_final; norm and symmetry are preserved.

    For a static trap the two exponential phase tensors are built once.
    on_snapshot(state) fires every snapshot_stride steps when requested;
    snapshots are read-only views of a finished step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    check_budget(state.grid.M, state.n_particles, budget_bytes)
    n_steps = int(round((t_final - state.t) / dt))
    static = spec.external.time_dependence == "static" and spec.external.family != "custom"
    kin_phase = np.exp(-1j * dt * _kinetic_multiplier(state.grid, state.n_particles))
    pot_phase = np.exp(-0.5j * dt * potential_tensor(spec, state.t + dt / 2)) if static else None
    for k in range(n_steps):
        phase = pot_phase if static else None
        state = _strang_step_raw(spec, state, dt, kin_phase, phase)
        if not np.isfinite(state.amplitudes.view(float)).all():
            raise FloatingPointError(f"non-finite amplitudes at t={state.t:g}")
        if snapshot_stride and on_snapshot and (k + 1) % snapshot_stride == 0:
            on_snapshot(state)
    return state


# ---------------------------------------------------------------------------
# projectors and the functional battery
# ---------------------------------------------------------------------------


def apply_projector(
    state: ManyBodyState, which: str, site: int, phi: Field2D
) -> ManyBodyState:
    """p or q = 1 - p on the given particle slot (0-based).

    p contracts the slot against phi with the h^2 quadrature weight, so p is
    an orthogonal projection whenever ||phi|| = 1.
    """
    n = state.n_particles
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for N={n}")
    if which not in ("p", "q"):
        raise ValueError(f"projector kind must be 'p' or 'q', got {which!r}")
    if abs(_grid.norm(phi) - 1.0) > 1e-10:
        raise ValueError("projector needs a normalized phi")
    amps = _project_amps(state.amplitudes, site, phi.values, state.grid.h)
    if which == "q":
        amps = state.amplitudes - amps
    return ManyBodyState(state.grid, n, amps, state.t)


def _project_amps(amps: np.ndarray, site: int, phi_vals: np.ndarray, h: float) -> np.ndarray:
    ax = (2 * site, 2 * site + 1)
    overlap = h * h * np.tensordot(np.conj(phi_vals), amps, axes=([0, 1], list(ax)))
    proj = np.multiply.outer(phi_vals, overlap)
    return np.moveaxis(proj, (0, 1), ax)


def _apply_pair_z(
    amps: np.ndarray,
    spec: ManyBodyHamiltonianSpec,
    phi: Field2D,
    sites: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Z(x_i, x_j) Psi: pair potential minus the mean-field counterterms.

    Z = W_beta(x_i - x_j) - a/(N-1) |phi|^2(x_i) - a/(N-1) |phi|^2(x_j).
    """
    n = spec.n_particles
    m = spec.grid.M
    i, j = sites
    w4 = pair_displacement_matrix(spec.scaled.field.values.real)
    out = amps * w4.reshape(_axis_shape(m, n, (2 * i, 2 * i + 1, 2 * j, 2 * j + 1)))
    dens = (spec.scaled.base.a / (n - 1)) * np.abs(phi.values) ** 2
    out -= amps * dens.reshape(_axis_shape(m, n, (2 * i, 2 * i + 1)))
    out -= amps * dens.reshape(_axis_shape(m, n, (2 * j, 2 * j + 1)))
    return out


def _grad_axis_norm_sq(state: ManyBodyState, site: int = 0) -> float:
    """\\|grad_site Psi\\|^2 via the frequency sum on that particle's axes."""
    g = state.grid
    ax = (2 * site, 2 * site + 1)
    fhat = _fft.fftn(state.amplitudes, axes=ax, workers=_grid._FFT_WORKERS)
    kd2 = g.k1_deriv**2
    w = kd2.reshape(_axis_shape(g.M, state.n_particles, (ax[0],))) + kd2.reshape(
        _axis_shape(g.M, state.n_particles, (ax[1],))
    )
    total = float(np.sum(w * np.abs(fhat) ** 2))
    return total * state.weight / g.M**2


@dataclass(frozen=True)
class FunctionalReport:
    """Every functional of one (Psi, phi) snapshot, in the run-CSV order."""

    t: float
    q1: float
    var: float
    alpha: float
    gamma_pp_qp: float
    gamma_pp_qq: float
    gamma_qp_qq: float
    grad1: float
    q2grad1: float
    wsq_q1q2: float
    trdist: float
    sobdist: float

    @property
    def gamma_total(self) -> float:
        return self.gamma_pp_qp + self.gamma_pp_qq + self.gamma_qp_qq

    CSV_COLUMNS = (
        "t q1 var alpha gamma_pp_qp gamma_pp_qq gamma_qp_qq "
        "grad1 q2grad1 wsq_q1q2 trdist sobdist"
    ).split()

    def csv_row(self) -> list[float]:
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def functional_report(
    spec: ManyBodyHamiltonianSpec,
    state: ManyBodyState,
    phi: Field2D,
    with_distances: bool = True,
) -> FunctionalReport:
    """Evaluate the full battery: counting functional, variance, transition
    terms, kinetic functionals and density-matrix distances."""
    n = state.n_particles
    if n < 2:
        raise ValueError("pair-dependent functionals need N >= 2")
    g = state.grid
    hpsi = apply_hamiltonian(spec, state)
    e = float(np.real(mb_inner(state, hpsi)))
    h2 = float(mb_norm(hpsi) ** 2)
    var = (h2 - e * e) / n**2

    q1 = apply_projector(state, "q", 0, phi)
    q1_exp = float(np.real(mb_inner(q1, q1)))

    q2q1 = apply_projector(q1, "q", 1, phi)
    p2q1 = ManyBodyState(g, n, q1.amplitudes - q2q1.amplitudes, state.t)
    p1 = ManyBodyState(g, n, state.amplitudes - q1.amplitudes, state.t)
    p2p1 = apply_projector(p1, "p", 1, phi)

    z_p2q1 = ManyBodyState(g, n, _apply_pair_z(p2q1.amplitudes, spec, phi), state.t)
    z_q2q1 = ManyBodyState(g, n, _apply_pair_z(q2q1.amplitudes, spec, phi), state.t)
    gamma_pp_qp = 2 * n * abs(mb_inner(p2p1, z_p2q1))
    gamma_pp_qq = 2 * n * abs(mb_inner(p2p1, z_q2q1))
    gamma_qp_qq = 2 * n * abs(mb_inner(p2q1, z_q2q1))

    grad1 = math.sqrt(_grad_axis_norm_sq(state, 0))
    q2psi = apply_projector(state, "q", 1, phi)
    q2grad1 = math.sqrt(_grad_axis_norm_sq(q2psi, 0))

    w4 = pair_displacement_matrix(spec.scaled.field.values.real)
    sqw = np.sqrt(np.abs(n * w4)).reshape(_axis_shape(g.M, n, (0, 1, 2, 3)))
    wsq = ManyBodyState(g, n, q2q1.amplitudes * sqw, state.t)
    wsq_q1q2 = mb_norm(wsq)

    trdist = sobdist = math.nan
    if with_distances:
        rd = reduced_density_1(state)
        trdist = trace_distance(rd, phi)
        sobdist = sobolev_trace_distance(rd, phi)

    return FunctionalReport(
        t=state.t,
        q1=q1_exp,
        var=var,
        alpha=q1_exp + var,
        gamma_pp_qp=gamma_pp_qp,
        gamma_pp_qq=gamma_pp_qq,
        gamma_qp_qq=gamma_qp_qq,
        grad1=grad1,
        q2grad1=q2grad1,
        wsq_q1q2=wsq_q1q2,
        trdist=trdist,
        sobdist=sobdist,
    )


# ---------------------------------------------------------------------------
# reduced density matrix and trace distances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedDensity:
    """gamma^(1) as a dense Hermitian M^2 x M^2 matrix, trace folded to 1."""

    grid: GridSpec
    matrix: np.ndarray

    def validate(self, tol: float = 1e-10) -> None:
        m = self.matrix
        if float(np.max(np.abs(m - m.conj().T))) > tol:
            raise ValueError("reduced density is not Hermitian")
        if abs(float(np.real(np.trace(m))) - 1.0) > tol:
            raise ValueError(f"trace {np.real(np.trace(m)):.12f} != 1")
        ev = np.linalg.eigvalsh(m)
        if float(ev.min()) < -tol:
            raise ValueError(f"negative occupation {ev.min():.3e}")


def reduced_density_1(
    state: ManyBodyState, budget_bytes: int = DEFAULT_BUDGET_BYTES
) -> ReducedDensity:
    """Partial trace over particles 2..N with quadrature weights folded in."""
    g = state.grid
    m2 = g.M**2
    if 16 * m2 * m2 > budget_bytes:
        raise BudgetError(
            f"dense reduced density needs {16 * m2 * m2} bytes > budget"
        )
    psi = state.amplitudes.reshape(m2, -1)
    mat = state.weight * (psi @ psi.conj().T)
    return ReducedDensity(g, mat)


def projector_matrix(phi: Field2D) -> np.ndarray:
    v = phi.values.reshape(-1)
    return phi.grid.h**2 * np.outer(v, v.conj())


_SOBOLEV_CACHE: dict[tuple[float, int], np.ndarray] = {}


def sobolev_matrix(grid: GridSpec) -> np.ndarray:
    """Dense matrix of sqrt(1 - Laplacian) on the flattened grid basis."""
    key = (grid.L, grid.M)
    if key not in _SOBOLEV_CACHE:
        f1 = _fft.fft(np.eye(grid.M), axis=0) / math.sqrt(grid.M)
        u2 = np.kron(f1, f1)
        mult = np.sqrt(1.0 + grid.k2.reshape(-1))
        s = u2.conj().T @ (mult[:, None] * u2)
        _SOBOLEV_CACHE[key] = 0.5 * (s + s.conj().T)
    return _SOBOLEV_CACHE[key]


def trace_distance(rd: ReducedDensity, phi: Field2D) -> float:
    """Tr |gamma - |phi><phi|| via Hermitian eigendecomposition."""
    diff = rd.matrix - projector_matrix(phi)
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def sobolev_trace_distance(rd: ReducedDensity, phi: Field2D) -> float:
    """Tr |sqrt(1-Lap)(gamma - |phi><phi|)sqrt(1-Lap)|."""
    s = sobolev_matrix(rd.grid)
    diff = rd.matrix - projector_matrix(phi)
    conj = s @ diff @ s
    conj = 0.5 * (conj + conj.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(conj))))


# ---------------------------------------------------------------------------
# the derivative identity of the counting functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheckResult:
    residual: float
    fd_value: float
    analytic_value: float
    term_pp_qp: float
    term_pp_qq: float
    term_pq_qp: float
    term_pq_qq: float
    im_pq_qp: float


def _nls_strang_raw(phi: Field2D, t: float, dt: float, params: NLSParams) -> Field2D:
    from .grid import fft2, ifft2

    g = phi.grid
    a_mid = evaluate_external(params.external, t + dt / 2, g).values.real
    v = phi.values * np.exp(-0.5j * dt * (a_mid + params.a * np.abs(phi.values) ** 2))
    v = ifft2(np.exp(-1j * dt * g.k2) * fft2(v))
    v = v * np.exp(-0.5j * dt * (a_mid + params.a * np.abs(v) ** 2))
    return phi.with_values(v)


def dq1dt_identity_check(
    spec: ManyBodyHamiltonianSpec,
    state: ManyBodyState,
    phi: Field2D,
    nls_params: NLSParams,
    dt: float,
) -> IdentityCheckResult:
    """Centered finite difference of t -> <Psi_t, q1 Psi_t> (co-evolving Psi
    and phi) against the commutator expression -2(N-1) Im <Psi, p1 Z q1 Psi>,
    split into the four p/q sandwich terms.  The (p1 q2, q1 p2) term has zero
    imaginary part for symmetric states; its measured Im is reported.
    """
    n = state.n_particles
    if n < 2:
        raise ValueError("identity check needs N >= 2")
    g = state.grid

    def q1_of(s: ManyBodyState, f: Field2D) -> float:
        qs = apply_projector(s, "q", 0, f)
        return float(np.real(mb_inner(qs, qs)))

    plus = _strang_step_raw(spec, state, dt)
    minus = _strang_step_raw(spec, state, -dt)
    phi_plus = _nls_strang_raw(phi, state.t, dt, nls_params)
    phi_minus = _nls_strang_raw(phi, state.t, -dt, nls_params)
    fd = (q1_of(plus, phi_plus) - q1_of(minus, phi_minus)) / (2 * dt)

    q1psi = apply_projector(state, "q", 0, phi)
    q2q1 = apply_projector(q1psi, "q", 1, phi)
    p2q1 = ManyBodyState(g, n, q1psi.amplitudes - q2q1.amplitudes, state.t)
    p1psi = ManyBodyState(g, n, state.amplitudes - q1psi.amplitudes, state.t)
    q2p1 = apply_projector(p1psi, "q", 1, phi)
    p2p1 = ManyBodyState(g, n, p1psi.amplitudes - q2p1.amplitudes, state.t)

    z_p2q1 = ManyBodyState(g, n, _apply_pair_z(p2q1.amplitudes, spec, phi), state.t)
    z_q2q1 = ManyBodyState(g, n, _apply_pair_z(q2q1.amplitudes, spec, phi), state.t)

    terms = {
        "pp_qp": mb_inner(p2p1, z_p2q1),
        "pp_qq": mb_inner(p2p1, z_q2q1),
        "pq_qp": mb_inner(q2p1, z_p2q1),
        "pq_qq": mb_inner(q2p1, z_q2q1),
    }
    contrib = {k: -2.0 * (n - 1) * v.imag for k, v in terms.items()}
    analytic = sum(contrib.values())
    return IdentityCheckResult(
        residual=abs(fd - analytic),
        fd_value=fd,
        analytic_value=analytic,
        term_pp_qp=contrib["pp_qp"],
        term_pp_qq=contrib["pp_qq"],
        term_pq_qp=contrib["pq_qp"],
        term_pq_qq=contrib["pq_qq"],
        im_pq_qp=abs(terms["pq_qp"].imag),
    )


# ---------------------------------------------------------------------------
# imaginary-time ground state of the N-body Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManyBodyGroundResult:
    state: ManyBodyState
    energy: float
    iterations: int
    converged: bool


def ground_state_manybody(
    spec: ManyBodyHamiltonianSpec,
    init: ManyBodyState,
    dtau: float = 2e-2,
    max_iter: int = 20_000,
    energy_tol: float = 1e-10,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
) -> ManyBodyGroundResult:
    """Imaginary-time power iteration with Strang substeps; returns E0 estimate."""
    check_budget(init.grid.M, init.n_particles, budget_bytes)
    kin = np.exp(-dtau * _kinetic_multiplier(init.grid, init.n_particles))
    pot = np.exp(-0.5 * dtau * potential_tensor(spec, 0.0))
    state = mb_normalized(init)
    e_prev = energy_expectation(spec, state)
    for it in range(1, max_iter + 1):
        amps = state.amplitudes * pot
        amps = _fft.fftn(amps, workers=_grid._FFT_WORKERS)
        amps *= kin
        amps = _fft.ifftn(amps, workers=_grid._FFT_WORKERS)
        amps *= pot
        state = mb_normalized(ManyBodyState(state.grid, state.n_particles, amps))
        if it % 10 == 0 or it == max_iter:
            e_now = energy_expectation(spec, state)
            if abs(e_now - e_prev) <= energy_tol * max(1.0, abs(e_now)) * 10:
                return ManyBodyGroundResult(state, e_now, it, True)
            e_prev = e_now
    return ManyBodyGroundResult(state, e_prev, max_iter, False)


# ---------------------------------------------------------------------------
# snapshot serialization: header (N, M, L, t) + flat tensor
# ---------------------------------------------------------------------------

_MB_HEADER = struct.Struct("<qqdd")


def save_state(path, state: ManyBodyState) -> None:
    with open(path, "wb") as fh:
        fh.write(_MB_HEADER.pack(state.n_particles, state.grid.M, state.grid.L, state.t))
        fh.write(np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes())


def load_state(path) -> ManyBodyState:
    with open(path, "rb") as fh:
        n, m, box, t = _MB_HEADER.unpack(fh.read(_MB_HEADER.size))
        raw = fh.read(16 * m ** (2 * n))
    amps = np.frombuffer(raw, dtype="<c16").reshape((m,) * (2 * n)).astype(np.complex128)
    return ManyBodyState(make_grid(box, m), n, amps, t)
