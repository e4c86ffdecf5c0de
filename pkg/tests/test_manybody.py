import math

import numpy as np
import pytest

from bosonlab import manybody as mb
from bosonlab import nls as nls_mod
from bosonlab import potentials as pot
from bosonlab.experiments import exact_variance, fit_exponent
from bosonlab.grid import (
    Field2D,
    field_from_function,
    grad_norm_sq,
    inner,
    make_grid,
    norm,
    normalized,
)
from bosonlab.nls import NLSParams

HARMONIC = pot.ExternalPotentialSpec(pot.HARMONIC)
ZERO = pot.ExternalPotentialSpec(pot.ZERO)


@pytest.fixture(scope="module")
def g12():
    return make_grid(6.0, 12)


@pytest.fixture(scope="module")
def phi12(g12):
    return normalized(
        field_from_function(g12, lambda x, y: np.exp(-(x**2 + y**2) / 2))
    )


@pytest.fixture(scope="module")
def eta12(g12, phi12):
    raw = field_from_function(g12, lambda x, y: (x + 1j * y) * np.exp(-(x**2 + y**2) / 2))
    return normalized(Field2D(g12, raw.values - inner(phi12, raw) * phi12.values))


@pytest.fixture(scope="module")
def pair_spec():
    return pot.PairPotentialSpec(pot.BUMP, w0=-0.5, radius=3.0)


@pytest.fixture(scope="module")
def hspec2(g12, pair_spec):
    scaled = pot.scale_pair_potential(pair_spec, 2, 0.25, g12)
    return mb.ManyBodyHamiltonianSpec(scaled, HARMONIC, 2)


# --- states -----------------------------------------------------------------


def test_product_state_n1_is_phi(g12, phi12):
    st = mb.product_state(phi12, 1)
    assert np.array_equal(st.amplitudes, phi12.values)


def test_product_state_rejects_unnormalized(g12, phi12):
    bad = Field2D(g12, 2.0 * phi12.values)
    with pytest.raises(ValueError):
        mb.product_state(bad, 2)


def test_product_state_q1_zero(g12, phi12):
    st = mb.product_state(phi12, 2)
    q1 = mb.apply_projector(st, "q", 0, phi12)
    assert mb.mb_norm(q1) < 1e-12


def test_product_state_reduced_density_rank1(g12, phi12):
    st = mb.product_state(phi12, 2)
    rd = mb.reduced_density_1(st)
    rd.validate()
    assert mb.trace_distance(rd, phi12) <= 1e-10
    top = np.linalg.eigvalsh(rd.matrix)[-1]
    assert abs(top - 1.0) <= 1e-10


def test_state_supports_up_to_four():
    g = make_grid(6.0, 8)
    phi = normalized(field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2)))
    st = mb.product_state(phi, 4)
    assert mb.mb_norm(st) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        mb.ManyBodyState(g, 5, np.zeros((8,) * 10))


def test_random_symmetric_state(g12, rng):
    st = mb.random_symmetric_state(g12, 3, rng)
    defect, pair = mb.symmetry_defect(st)
    assert defect <= 1e-12
    assert abs(mb.mb_norm(st) - 1.0) <= 1e-12


def test_symmetry_defect_names_axis_pair(g12, rng):
    amps = rng.standard_normal((12,) * 4) + 0j
    amps[0, 0, 1, 2] += 10.0  # breaks 0<->1 exchange
    st = mb.ManyBodyState(g12, 2, amps)
    defect, pair = mb.symmetry_defect(st)
    assert defect > 1e-3
    assert pair == (0, 1)


# --- projectors ---------------------------------------------------------------


def test_projector_algebra_random(g12, phi12, rng):
    psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.05)
    p1 = mb.apply_projector(psi, "p", 0, phi12)
    q1 = mb.apply_projector(psi, "q", 0, phi12)
    assert (
        mb.mb_norm(
            mb.ManyBodyState(
                g12, 2, mb.apply_projector(p1, "p", 0, phi12).amplitudes - p1.amplitudes
            )
        )
        <= 1e-12
    )
    assert mb.mb_norm(mb.apply_projector(q1, "p", 0, phi12)) <= 1e-12
    assert (
        mb.mb_norm(
            mb.ManyBodyState(g12, 2, psi.amplitudes - p1.amplitudes - q1.amplitudes)
        )
        <= 1e-12
    )


def test_projector_site_range(g12, phi12, rng):
    psi = mb.random_symmetric_state(g12, 2, rng)
    with pytest.raises(ValueError):
        mb.apply_projector(psi, "p", 2, phi12)
    with pytest.raises(ValueError):
        mb.apply_projector(psi, "r", 0, phi12)


def test_gamma_state_q1_expectation(g12, phi12, eta12):
    for n in (2, 3):
        gam = mb.gamma_state(phi12, eta12, n)
        q1 = mb.apply_projector(gam, "q", 0, phi12)
        assert np.real(mb.mb_inner(q1, q1)) == pytest.approx(1.0 / n, abs=1e-10)


def test_gamma_state_kinetic_identities(g12, phi12, eta12):
    for n in (2, 3):
        gam = mb.gamma_state(phi12, eta12, n)
        q2 = mb.apply_projector(gam, "q", 1, phi12)
        q1 = mb.apply_projector(gam, "q", 0, phi12)
        assert mb._grad_axis_norm_sq(q2, 0) == pytest.approx(
            grad_norm_sq(phi12) / n, abs=1e-8
        )
        assert mb._grad_axis_norm_sq(q1, 0) == pytest.approx(
            grad_norm_sq(eta12) / n, abs=1e-8
        )


def test_gamma_state_reduced_density(g12, phi12, eta12):
    n = 3
    gam = mb.gamma_state(phi12, eta12, n)
    rd = mb.reduced_density_1(gam)
    ev = np.linalg.eigvalsh(rd.matrix)
    assert ev[-1] == pytest.approx(1 - 1 / n, abs=1e-8)
    assert ev[-2] == pytest.approx(1 / n, abs=1e-8)


def test_gamma_state_requires_orthogonality(g12, phi12):
    with pytest.raises(ValueError):
        mb.gamma_state(phi12, phi12, 2)


# --- Hamiltonian --------------------------------------------------------------


def test_hamiltonian_n1_reduces_to_laplacian(g12, phi12, pair_spec):
    from bosonlab.grid import apply_laplacian

    scaled = pot.scale_pair_potential(pair_spec, 1, 0.0, g12)
    spec = mb.ManyBodyHamiltonianSpec(scaled, ZERO, 1)
    st = mb.product_state(phi12, 1)
    out = mb.apply_hamiltonian(spec, st)
    expected = apply_laplacian(phi12).values
    assert np.max(np.abs(out.amplitudes - expected)) < 1e-12


def test_hamiltonian_plane_wave_product(pair_spec):
    g = make_grid(6.0, 8)
    k1 = 2 * np.pi / g.L * np.array([1, -2])
    k2v = 2 * np.pi / g.L * np.array([0, 3])
    pw1 = normalized(field_from_function(g, lambda x, y: np.exp(1j * (k1[0] * x + k1[1] * y))))
    pw2 = normalized(field_from_function(g, lambda x, y: np.exp(1j * (k2v[0] * x + k2v[1] * y))))
    amps = np.multiply.outer(pw1.values, pw2.values)
    st = mb.ManyBodyState(g, 2, amps)
    w0 = pot.scale_pair_potential(pot.PairPotentialSpec(pot.DISK, w0=0.0, radius=2.0), 2, 0.0, g)
    spec = mb.ManyBodyHamiltonianSpec(w0, ZERO, 2)
    out = mb.apply_hamiltonian(spec, st)
    energy = float(k1 @ k1 + k2v @ k2v)
    assert np.max(np.abs(out.amplitudes - energy * st.amplitudes)) < 1e-10 * energy


def test_hamiltonian_product_energy_oracle(g12, phi12, pair_spec):
    from bosonlab.grid import apply_laplacian
    from bosonlab.potentials import convolve

    for n in (2, 3):
        scaled = pot.scale_pair_potential(pair_spec, n, 0.25, g12)
        spec = mb.ManyBodyHamiltonianSpec(scaled, HARMONIC, n)
        st = mb.product_state(phi12, n)
        e = mb.energy_expectation(spec, st)
        rho = Field2D(g12, np.abs(phi12.values) ** 2)
        i_w = float(
            np.sum(rho.values.real * convolve(scaled.field, rho).values.real)
            * g12.h**2
        )
        kin = inner(phi12, apply_laplacian(phi12)).real
        trap = float(np.sum(g12.r2 * rho.values.real) * g12.h**2)
        expected = n * kin + n * (n - 1) / 2 * i_w + n * trap
        assert e == pytest.approx(expected, rel=1e-8)


def test_hamiltonian_spec_consistency(g12, pair_spec):
    scaled = pot.scale_pair_potential(pair_spec, 2, 0.25, g12)
    with pytest.raises(ValueError):
        mb.ManyBodyHamiltonianSpec(scaled, HARMONIC, 3)


# --- evolution ----------------------------------------------------------------


def test_evolve_plane_wave_phase(pair_spec):
    g = make_grid(6.0, 8)
    k1 = 2 * np.pi / g.L * np.array([1, 0])
    pw = normalized(field_from_function(g, lambda x, y: np.exp(1j * k1[0] * x)))
    st = mb.product_state(pw, 2)
    w0 = pot.scale_pair_potential(pot.PairPotentialSpec(pot.DISK, w0=0.0, radius=2.0), 2, 0.0, g)
    spec = mb.ManyBodyHamiltonianSpec(w0, ZERO, 2)
    out = mb.evolve_manybody(spec, st, 0.1, 1e-3)
    energy = 2 * float(k1 @ k1)
    expected = st.amplitudes * np.exp(-1j * energy * 0.1)
    fidelity = abs(mb.mb_inner(mb.ManyBodyState(g, 2, expected), out))
    assert fidelity >= 1 - 1e-8


def test_evolve_norm_and_symmetry(g12, phi12, hspec2):
    st = mb.product_state(phi12, 2)
    out = mb.evolve_manybody(hspec2, st, 0.2, 1e-3)
    assert abs(mb.mb_norm(out) - 1.0) <= 1e-11
    defect, _ = mb.symmetry_defect(out)
    assert defect <= 1e-11


def test_evolve_factorizes_without_interaction(g12, phi12):
    """W = 0: gamma^(1) stays rank one and tracks the one-body solver."""
    w0 = pot.scale_pair_potential(
        pot.PairPotentialSpec(pot.DISK, w0=0.0, radius=2.0), 2, 0.0, g12
    )
    spec = mb.ManyBodyHamiltonianSpec(w0, HARMONIC, 2)
    st = mb.product_state(phi12, 2)
    dt = 1e-3
    out = mb.evolve_manybody(spec, st, 0.5, dt)
    params = NLSParams(a=0.0, dt=dt, external=HARMONIC)
    one, _, _ = nls_mod.evolve(nls_mod.NLSState(phi12, 0.0, params), 0.5, 10**9)
    rd = mb.reduced_density_1(out)
    assert mb.trace_distance(rd, one.phi) <= 1e-6


def test_evolve_strang_self_convergence(pair_spec):
    g = make_grid(5.0, 8)
    phi = normalized(field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2)))
    scaled = pot.scale_pair_potential(pair_spec, 2, 0.2, g)
    spec = mb.ManyBodyHamiltonianSpec(scaled, HARMONIC, 2)
    st = mb.product_state(phi, 2)
    t_final = 0.1
    ref = mb.evolve_manybody(spec, st, t_final, 1e-3 / 16)
    errs, dts = [], (4e-3, 2e-3, 1e-3)
    for dt in dts:
        out = mb.evolve_manybody(spec, st, t_final, dt)
        diff = mb.ManyBodyState(g, 2, out.amplitudes - ref.amplitudes)
        errs.append(mb.mb_norm(diff))
    fit = fit_exponent(dts, errs)
    assert abs(fit.slope - 2.0) <= 0.1


def test_budget_refusal():
    with pytest.raises(mb.BudgetError, match="admissible"):
        mb.check_budget(32, 4, mb.DEFAULT_BUDGET_BYTES)
    # (M=12, N=4) exceeds the default budget as documented
    with pytest.raises(mb.BudgetError):
        mb.check_budget(12, 4, mb.DEFAULT_BUDGET_BYTES)
    mb.check_budget(16, 3, mb.DEFAULT_BUDGET_BYTES)


# --- functionals ---------------------------------------------------------------


def test_functional_report_product_state(g12, phi12, hspec2):
    st = mb.product_state(phi12, 2)
    rep = mb.functional_report(hspec2, st, phi12)
    assert rep.q1 <= 1e-12
    assert rep.gamma_pp_qp <= 1e-10
    assert rep.gamma_pp_qq <= 1e-10
    assert rep.gamma_qp_qq <= 1e-10
    assert rep.var >= -1e-10
    assert rep.alpha == pytest.approx(rep.var, abs=1e-12)
    assert rep.trdist <= 1e-10


def test_variance_zero_for_eigenstate():
    g = make_grid(6.0, 8)
    k1 = 2 * np.pi / g.L
    pw = normalized(field_from_function(g, lambda x, y: np.exp(1j * k1 * (x + 2 * y))))
    w0 = pot.scale_pair_potential(pot.PairPotentialSpec(pot.DISK, w0=0.0, radius=2.0), 2, 0.0, g)
    spec = mb.ManyBodyHamiltonianSpec(w0, ZERO, 2)
    var = exact_variance(spec, mb.product_state(pw, 2))
    assert abs(var) <= 1e-12


def test_variance_nonnegative_random(g12, phi12, hspec2, rng):
    for _ in range(5):
        psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.05)
        assert exact_variance(hspec2, psi) >= -1e-10


def test_sandwich_inequality_50_states(g12, phi12, rng):
    """<q1> <= Tr|gamma - P| <= sqrt(8 <q1>) on random symmetric states."""
    for _ in range(50):
        psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.02)
        q1psi = mb.apply_projector(psi, "q", 0, phi12)
        q1 = float(np.real(mb.mb_inner(q1psi, q1psi)))
        tr = mb.trace_distance(mb.reduced_density_1(psi), phi12)
        assert q1 <= tr + 1e-10
        assert tr <= math.sqrt(8 * q1) + 1e-10


def test_trace_distance_orthogonal_pure_states(g12, phi12, eta12):
    rd = mb.reduced_density_1(mb.product_state(eta12, 1))
    assert mb.trace_distance(rd, phi12) == pytest.approx(2.0, abs=1e-10)


def test_reduced_density_particle_symmetry(g12, rng):
    psi = mb.random_symmetric_state(g12, 3, rng, smooth=0.05)
    m2 = g12.M**2
    amps = psi.amplitudes.reshape(m2, m2, m2)
    rd1 = psi.weight * np.einsum("abc,dbc->ad", amps, amps.conj())
    rd2 = psi.weight * np.einsum("abc,adc->bd", amps, amps.conj())
    assert np.max(np.abs(rd1 - rd2)) <= 1e-10


def test_occupation_leakage_bound(g12, phi12, rng):
    for _ in range(5):
        psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.05)
        rd = mb.reduced_density_1(psi)
        top = float(np.linalg.eigvalsh(rd.matrix)[-1])
        q1psi = mb.apply_projector(psi, "q", 0, phi12)
        q1 = float(np.real(mb.mb_inner(q1psi, q1psi)))
        assert 1.0 - top <= q1 + 1e-10


def test_sobolev_distance_zero_for_projector(g12, phi12):
    rd = mb.reduced_density_1(mb.product_state(phi12, 2))
    assert mb.sobolev_trace_distance(rd, phi12) <= 1e-8


def test_sobolev_matrix_applies_multiplier(g12, rng):
    """Dense sqrt(1 - Lap) matrix agrees with the spectral operator."""
    from bosonlab.grid import random_smooth_field, sobolev_multiplier

    f = random_smooth_field(g12, rng)
    s = mb.sobolev_matrix(g12)
    dense = (s @ f.values.reshape(-1)).reshape(g12.M, g12.M)
    spectral = sobolev_multiplier(f).values
    assert np.max(np.abs(dense - spectral)) <= 1e-10 * np.max(np.abs(spectral))


def test_sobolev_bound_calibrated(g12, phi12, eta12, rng):
    """Tr|S (gamma-P) S| <= C (1+|grad phi|)^2 (q + q^2 + gq + gq^2).

    C is calibrated on the one-excitation reference state (x2 headroom) and
    must hold across 20 random symmetric states.
    """

    def two_sides(psi):
        rd = mb.reduced_density_1(psi)
        lhs = mb.sobolev_trace_distance(rd, phi12)
        q1psi = mb.apply_projector(psi, "q", 0, phi12)
        qn = math.sqrt(max(np.real(mb.mb_inner(q1psi, q1psi)), 0.0))
        gq = math.sqrt(mb._grad_axis_norm_sq(q1psi, 0))
        rhs = (1 + math.sqrt(grad_norm_sq(phi12))) ** 2 * (
            qn + qn**2 + gq + gq**2
        )
        return lhs, rhs

    lhs_ref, rhs_ref = two_sides(mb.gamma_state(phi12, eta12, 2))
    c = 2.0 * lhs_ref / rhs_ref
    for _ in range(20):
        psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.05)
        lhs, rhs = two_sides(psi)
        assert lhs <= c * rhs


def test_sobolev_vs_trace_separation(g12, phi12):
    """Rough eta keeps the Sobolev distance order one while the trace
    distance shrinks like 1/N (the norm-hierarchy counter-example)."""
    rough_raw = field_from_function(
        g12,
        lambda x, y: np.exp(-(x**2 + y**2) / 2) * np.exp(1j * 2 * np.pi * (2 * x - y)),
    )
    rough = normalized(
        Field2D(g12, rough_raw.values - inner(phi12, rough_raw) * phi12.values)
    )
    for n in (2, 3):
        gam = mb.gamma_state(phi12, rough, n)
        rd = mb.reduced_density_1(gam)
        tr = mb.trace_distance(rd, phi12)
        sob = mb.sobolev_trace_distance(rd, phi12)
        assert tr == pytest.approx(2.0 / n, abs=1e-8)
        assert sob >= 1.0  # stays order one by the roughness of eta
        assert sob / tr >= 5.0


# --- derivative identity --------------------------------------------------------


@pytest.fixture(scope="module")
def mixed_state(g12, phi12, eta12):
    prod = mb.product_state(phi12, 2)
    gam = mb.gamma_state(phi12, eta12, 2)
    raw = prod.amplitudes + 0.1 * gam.amplitudes
    return mb.mb_normalized(mb.ManyBodyState(g12, 2, mb.symmetrize(raw, 2)))


def test_dq1dt_product_state(g12, phi12, hspec2):
    st = mb.product_state(phi12, 2)
    params = NLSParams(a=hspec2.scaled.base.a, dt=1e-3, external=HARMONIC)
    res = mb.dq1dt_identity_check(hspec2, st, phi12, params, 1e-3)
    assert abs(res.analytic_value) <= 1e-12
    assert abs(res.fd_value) <= 1e-5  # O(dt^2) leakage only


def test_dq1dt_identity_second_order(g12, phi12, hspec2, mixed_state):
    params = NLSParams(a=hspec2.scaled.base.a, dt=1e-3, external=HARMONIC)
    residuals = []
    dts = (4e-3, 2e-3, 1e-3)
    for dt in dts:
        res = mb.dq1dt_identity_check(hspec2, mixed_state, phi12, params, dt)
        residuals.append(res.residual)
        assert res.im_pq_qp <= 1e-10
    slopes = [
        math.log2(residuals[i] / residuals[i + 1]) for i in range(len(dts) - 1)
    ]
    for s in slopes:
        assert abs(s - 2.0) <= 0.2


def test_dq1dt_pqzqp_imaginary_part_random(g12, phi12, hspec2, rng):
    for _ in range(5):
        psi = mb.random_symmetric_state(g12, 2, rng, smooth=0.05)
        params = NLSParams(a=hspec2.scaled.base.a, dt=1e-3, external=HARMONIC)
        res = mb.dq1dt_identity_check(hspec2, psi, phi12, params, 1e-3)
        assert res.im_pq_qp <= 1e-10


# --- combinatorial inequality -----------------------------------------------------


def test_pair_exchange_inequality(rng):
    """|<Omega, O_12 chi>| <= |Omega|^2 + |<O_12 chi, O_13 chi>| + |O_12 chi|^2/(N-1)."""
    g = make_grid(6.0, 8)
    w = pot.scale_pair_potential(
        pot.PairPotentialSpec(pot.BUMP, w0=1.0, radius=3.0), 3, 0.0, g
    )
    w4 = mb.pair_displacement_matrix(w.field.values.real)
    shape12 = mb._axis_shape(8, 3, (0, 1, 2, 3))
    shape13 = mb._axis_shape(8, 3, (0, 1, 4, 5))
    for _ in range(30):
        omega = mb.random_symmetric_state(g, 3, rng)
        chi = mb.random_symmetric_state(g, 3, rng)
        o12 = chi.amplitudes * w4.reshape(shape12)
        o13 = chi.amplitudes * w4.reshape(shape13)
        lhs = abs(chi.weight * np.vdot(omega.amplitudes, o12))
        rhs = (
            mb.mb_norm(omega) ** 2
            + abs(chi.weight * np.vdot(o12, o13))
            + chi.weight * np.vdot(o12, o12).real / 2
        )
        assert lhs <= rhs + 1e-12


# --- operator norm bounds ----------------------------------------------------------


def _power_iterate_two_body(apply_op, g, n_iter, rng):
    v = rng.standard_normal((g.M,) * 4) + 1j * rng.standard_normal((g.M,) * 4)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = apply_op(v)
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return lam


def test_operator_norm_bounds_power_iteration(rng, townes):
    """|p1 f(x1-x2) p1| <= |f|_1 |phi|_inf^2 and |f(x1-x2) p1| <= |f| |phi|_inf."""
    g = make_grid(6.0, 16)
    for which_phi in ("gauss", "townes"):
        if which_phi == "gauss":
            phi = normalized(
                field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / 2))
            )
        else:
            vals = np.interp(
                np.sqrt(g.r2),
                np.sort(np.sqrt(townes.phi.grid.r2).ravel()),
                townes.phi.values.real.ravel()[
                    np.argsort(np.sqrt(townes.phi.grid.r2).ravel())
                ],
            )
            phi = normalized(Field2D(g, vals))
        w = pot.scale_pair_potential(
            pot.PairPotentialSpec(pot.BUMP, w0=-2.0, radius=2.0), 2, 0.1, g
        )
        w4 = mb.pair_displacement_matrix(w.field.values.real)
        f_l1 = float(np.sum(np.abs(w.field.values.real)) * g.h**2)
        f_l2 = float(g.h * np.linalg.norm(w.field.values.real))
        phi_sup = float(np.max(np.abs(phi.values)))

        def p1_f_p1(v):
            st = mb.ManyBodyState(g, 2, v)
            pv = mb.apply_projector(st, "p", 0, phi).amplitudes
            pv = pv * w4.reshape((g.M,) * 4)
            return mb.apply_projector(mb.ManyBodyState(g, 2, pv), "p", 0, phi).amplitudes

        lam = _power_iterate_two_body(p1_f_p1, g, 60, rng)
        assert lam <= f_l1 * phi_sup**2 * (1 + 1e-8)

        def p1_f2_p1(v):
            st = mb.ManyBodyState(g, 2, v)
            pv = mb.apply_projector(st, "p", 0, phi).amplitudes
            pv = pv * (w4**2).reshape((g.M,) * 4)
            return mb.apply_projector(mb.ManyBodyState(g, 2, pv), "p", 0, phi).amplitudes

        lam2 = _power_iterate_two_body(p1_f2_p1, g, 60, rng)
        assert math.sqrt(max(lam2, 0.0)) <= f_l2 * phi_sup * (1 + 1e-8)


# --- ground state / serialization ----------------------------------------------------


def test_ground_state_manybody_factorizes(g12, phi12):
    w0 = pot.scale_pair_potential(
        pot.PairPotentialSpec(pot.DISK, w0=0.0, radius=2.0), 2, 0.0, g12
    )
    spec = mb.ManyBodyHamiltonianSpec(w0, HARMONIC, 2)
    init = mb.product_state(phi12, 2)
    res = mb.ground_state_manybody(spec, init, dtau=2e-2, max_iter=4000)
    assert res.converged
    params = NLSParams(a=0.0, dt=1e-3, external=HARMONIC)
    one = nls_mod.imaginary_time_ground_state(params, phi12)
    assert res.energy / 2 == pytest.approx(one.energy, abs=1e-6)


def test_state_serialization_roundtrip(tmp_path, g12, phi12):
    st = mb.product_state(phi12, 2, t=0.7)
    path = tmp_path / "psi.state"
    mb.save_state(path, st)
    st2 = mb.load_state(path)
    assert st2.n_particles == 2 and st2.t == 0.7
    assert st2.grid.L == g12.L and st2.grid.M == g12.M
    assert np.array_equal(st2.amplitudes, st.amplitudes)
