import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leelab.errors import ConfigurationError, DomainError
from leelab.fock import enumerate_sector
from leelab.manifold import ManifoldSpec, enumerate_modes
from leelab.principal import (
    ModelParams,
    PrincipalOperator,
    assemble_phi,
    bare_sum_partial,
    k1_diagonal,
    mu_epsilon,
    u_matrix_element,
    write_matrix_csv,
)
from leelab.validation import k1_by_quadrature, u_by_quadrature

TORUS = ManifoldSpec.torus2()
SPHERE = ManifoldSpec.sphere2()


def _op(spec, n, sigma=6.0, sigma_k1=40.0, lam=1.0, a=(0.0, 0.0), mu=0.5):
    p = ModelParams(spec, m=1.0, mu=mu, lam=lam, a=a, n=n)
    basis = enumerate_sector(enumerate_modes(spec, sigma), n, n + sigma / 2, 1.0)
    return PrincipalOperator(basis, p, sigma_k1)


OPS = {
    "torus2-n1": _op(TORUS, 1),
    "torus2-n2-offcentre": _op(TORUS, 2, sigma=4.0, a=(0.7, 2.1)),
    "sphere2-n1": _op(SPHERE, 1, sigma=12.0),
    "sphere2-n2-offpole": _op(SPHERE, 2, sigma=6.0, a=(1.1, 0.4)),
}


@pytest.fixture(params=sorted(OPS))
def op(request):
    return OPS[request.param]


def test_u_matches_direct_element_formula(op):
    E = op.params.threshold - 0.4
    U = op.u(E)
    pool = list(op.basis.mode_pool)
    direct = np.array([[u_matrix_element(r, c, op.params, E, pool) for c in op.basis] for r in op.basis])
    np.testing.assert_allclose(U, direct, atol=1e-14)


def test_u_and_k1_match_time_quadrature(op):
    E = op.params.threshold - 0.25
    np.testing.assert_allclose(op.u(E), u_by_quadrature(op, E), atol=1e-9)
    k1 = op.k1(E)
    for i in (0, op.basis.dim // 2, op.basis.dim - 1):
        assert k1[i] == pytest.approx(k1_by_quadrature(op, op.h0[i], E), abs=1e-9)
        assert k1[i] == pytest.approx(k1_diagonal(op.basis[i], op.params, E, op.sigma_max_k1), rel=1e-13)


def test_phi_and_derivative_are_symmetric(op):
    E = op.params.threshold - 1.0
    for M in (op.phi(E).entries, op.dphi_dE(E).entries):
        np.testing.assert_allclose(M, M.T, atol=1e-14)


def test_derivative_matches_richardson_finite_differences(op):
    E = op.params.threshold - 0.7
    exact = op.dphi_dE(E).entries
    err = []
    for h in (1e-2, 1e-3):
        fd = (op.phi(E + h).entries - op.phi(E - h).entries) / (2 * h)
        err.append(np.max(np.abs(fd - exact)))
    # central differences: error shrinks by ~100 per decade of h
    assert 60 < err[0] / err[1] < 140
    assert err[1] < 1e-5


def test_derivative_is_at_most_minus_identity(op):
    w = np.linalg.eigvalsh(op.dphi_dE(op.params.threshold - 0.5).entries)
    assert w.max() <= -1.0 + 1e-12


def test_sign_structure_of_pieces(op):
    E = op.params.threshold - 0.3
    parts = op.phi(E, parts=True).parts
    assert np.all(parts["K1"] >= 0)
    assert np.all(np.diag(parts["U"]) <= 0)
    np.testing.assert_allclose(parts["K0"], op.h0 - E + op.params.mu)


def test_u_connects_only_one_boson_moves(op):
    U = op.u(op.params.threshold)
    for r, c in zip(*np.nonzero(U)):
        a, b = dict(op.basis[r].occupations), dict(op.basis[c].occupations)
        moved = sum(abs(a.get(k, 0) - b.get(k, 0)) for k in set(a) | set(b))
        assert moved in (0, 2)


def test_zero_coupling_leaves_the_free_operator():
    op0 = _op(SPHERE, 2, sigma=6.0, lam=0.0)
    E = 2.3
    np.testing.assert_array_equal(op0.phi(E).entries, np.diag(op0.h0 - E + 0.5))


def test_vacuum_sector_vanishes_at_mu():
    op0 = _op(TORUS, 0, lam=0.8)
    assert op0.basis.dim == 1
    assert op0.phi(0.5).entries[0, 0] == 0.0
    assert op0.phi(0.2).entries[0, 0] > 0


def test_regularized_operator_converges():
    op = OPS["sphere2-n1"]
    E = op.params.threshold - 0.3
    dist = [np.max(np.abs(op.phi_regularized(E, e).entries - op.phi(E).entries)) for e in (1e-2, 1e-4, 1e-6)]
    assert dist[0] > dist[1] > dist[2]
    assert dist[2] < 1e-4


def test_mu_epsilon_grows_like_log_in_two_dimensions():
    p = ModelParams(TORUS, lam=1.0, n=1)
    d = [mu_epsilon(p, e, 2e4) for e in (1e-2, 1e-3)]
    assert (d[1] - d[0]) / math.log(10) == pytest.approx(1 / (2 * math.pi), rel=0.02)
    with pytest.raises(DomainError):
        mu_epsilon(p, 0.0, 100.0)


def test_bare_sum_diverges_while_k1_converges():
    p = ModelParams(SPHERE, lam=1.0, n=1)
    assert bare_sum_partial(p, 4000.0) - bare_sum_partial(p, 1000.0) > 0.1
    basis = enumerate_sector(enumerate_modes(SPHERE, 2.0), 1, 2.0, 1.0)
    k1 = [k1_diagonal(basis[0], p, 1.2, s) for s in (1000.0, 4000.0)]
    assert abs(k1[1] - k1[0]) < 1e-3


def test_weyl_tail_improves_k1_truncation():
    p = ModelParams(TORUS, lam=1.0, n=1)
    basis = enumerate_sector(enumerate_modes(TORUS, 2.0), 1, 2.0, 1.0)
    ref = k1_diagonal(basis[0], p, 1.2, 20000.0)
    plain = k1_diagonal(basis[0], p, 1.2, 200.0)
    tailed = k1_diagonal(basis[0], p, 1.2, 200.0, tail=True)
    assert abs(tailed - ref) < 0.2 * abs(plain - ref)


def test_energy_above_intermediate_threshold_is_a_domain_error():
    op = OPS["torus2-n1"]
    with pytest.raises(DomainError):
        op.phi(2.5)


def test_basis_and_params_must_agree():
    p = ModelParams(TORUS, n=2)
    basis = enumerate_sector(enumerate_modes(TORUS, 1.0), 1, 2.0, 1.0)
    with pytest.raises(ConfigurationError):
        PrincipalOperator(basis, p)
    with pytest.raises(ConfigurationError):
        ModelParams(TORUS, m=1.0, mu=1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.5, 0.0), st.floats(0.01, 1.0))
def test_lowest_eigenvalue_strictly_decreasing_in_energy(offset, step):
    op = OPS["sphere2-n2-offpole"]
    E = op.params.threshold + offset
    lo = np.linalg.eigvalsh(op.phi(E - step).entries)[0]
    hi = np.linalg.eigvalsh(op.phi(E).entries)[0]
    # slope <= -1, so the drop is at least the step
    assert lo - hi >= step * (1 - 1e-9)


def test_assemble_helpers_and_csv():
    op = OPS["torus2-n1"]
    pm = assemble_phi(op.basis, op.params, 1.0, op.sigma_max_k1)
    np.testing.assert_allclose(pm.entries, op.phi(1.0).entries)
    assert set(pm.parts) == {"K0", "K1", "U"}
    buf = io.StringIO()
    write_matrix_csv(pm, buf)
    assert len(buf.getvalue().splitlines()) == pm.dim
