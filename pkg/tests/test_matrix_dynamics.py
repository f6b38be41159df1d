import numpy as np
import pytest

from conftest import hermitian_contraction, unit_vector
from ncflow.flows import average_series, rotation_flow
from ncflow.linalg import haar_unitary, op_norm, random_density, tensor, unitary_power
from ncflow.matrix_dynamics import (
    TraceProductSpec,
    ad_flow,
    finite_vn_average_bound,
    quantize_unitary,
    rank_one_flow,
    trace_product_sum,
)


def random_contraction(rng, k):
    g = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    return g / op_norm(g)


def make_spec(rng, k, d, degree=1, coeff_max=7):
    unitaries = tuple(haar_unitary(k, rng) for _ in range(d))
    contractions = tuple(random_contraction(rng, k) for _ in range(d))
    polys = tuple(
        (0,) + tuple(int(rng.integers(1, coeff_max + 1)) for _ in range(degree))
        for _ in range(d)
    )
    return TraceProductSpec(
        unitaries=unitaries, contractions=contractions, phase_polys=polys
    )


def test_ad_flow_diagonal_equals_rotation(table_10k):
    theta = 0.23
    u = np.diag([np.exp(2j * np.pi * theta), 1.0])
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    rho = np.full((2, 2), 0.5)
    fl = ad_flow(u, a, rho)
    rot = rotation_flow(theta)
    got = fl.values(0, 64)
    want = 0.5 * rot.values(0, 64)
    assert np.max(np.abs(got - want)) < 1e-12


def test_ad_flow_long_walk_stays_anchored():
    # incremental powers with periodic re-unitarization vs direct binary powers
    u = haar_unitary(8, 1)
    rng = np.random.default_rng(2)
    a = hermitian_contraction(rng, 8)
    rho = random_density(8, rng)
    fl = ad_flow(u, a, rho)
    for n in (1, 9999, 30000, 30001):
        w = unitary_power(u, n)
        direct = np.trace(rho @ w @ a @ w.conj().T)
        assert abs(fl.evaluator(n) - direct) < 1e-10


def test_ad_flow_block_matches_evaluator():
    u = haar_unitary(5, 3)
    rng = np.random.default_rng(4)
    a = hermitian_contraction(rng, 5)
    rho = random_density(5, rng)
    fl = ad_flow(u, a, rho)
    block = fl.values(100, 140)
    scal = np.array([fl.evaluator(n) for n in range(101, 141)])
    assert np.max(np.abs(block - scal)) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_ad_flow_conjugation_invariance(seed):
    # the average only sees the pair (state, observable) up to a unitary change of frame
    rng = np.random.default_rng(seed)
    u = haar_unitary(6, rng)
    a = hermitian_contraction(rng, 6)
    rho = random_density(6, rng)
    v = haar_unitary(6, rng)
    base = ad_flow(u, a, rho)
    moved = ad_flow(v @ u @ v.conj().T, v @ a @ v.conj().T, v @ rho @ v.conj().T)
    ns = np.arange(1, 200)
    assert np.max(np.abs(base.values(0, 199) - moved.values(0, 199))) < 1e-12


def test_ad_flow_block_embedding_restriction():
    # direct sum with an untouched corner restricts to the small flow exactly
    rng = np.random.default_rng(7)
    u1 = haar_unitary(3, rng)
    u2 = haar_unitary(2, rng)
    a1 = hermitian_contraction(rng, 3)
    rho1 = random_density(3, rng)
    u = np.block(
        [[u1, np.zeros((3, 2))], [np.zeros((2, 3)), u2]]
    )
    a = np.block([[a1, np.zeros((3, 2))], [np.zeros((2, 3)), np.zeros((2, 2))]])
    rho = np.block(
        [[rho1, np.zeros((3, 2))], [np.zeros((2, 3)), np.zeros((2, 2))]]
    )
    small = ad_flow(u1, a1, rho1)
    big = ad_flow(u, a, rho)
    assert np.max(np.abs(small.values(0, 100) - big.values(0, 100))) < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_rank_one_flow_tensor_identity(seed):
    # <U^n eta, xi><U*^n xi, eta> = <(U^n (x) U*^n) eta (x) xi, xi (x) eta>
    rng = np.random.default_rng(seed)
    u = haar_unitary(4, rng)
    xi = unit_vector(rng, 4)
    eta = unit_vector(rng, 4)
    fl = rank_one_flow(u, xi, eta)
    w = np.eye(4, dtype=complex)
    for n in range(1, 101):
        w = u @ w
        big = tensor(w, w.conj().T)
        lhs = complex(np.vdot(np.kron(xi, eta), big @ np.kron(eta, xi)))
        assert abs(fl.evaluator(n) - lhs) < 1e-12


def test_rank_one_flow_values_are_nonnegative():
    rng = np.random.default_rng(3)
    u = haar_unitary(5, rng)
    fl = rank_one_flow(u, unit_vector(rng, 5), unit_vector(rng, 5))
    vals = fl.values(0, 50)
    assert np.max(np.abs(vals.imag)) < 1e-14
    assert vals.real.min() > -1e-14


def test_trace_product_spec_validation():
    rng = np.random.default_rng(0)
    u = haar_unitary(3, rng)
    c = random_contraction(rng, 3)
    with pytest.raises(ValueError, match="equally many"):
        TraceProductSpec(unitaries=(u,), contractions=(c, c), phase_polys=((0, 1),))
    with pytest.raises(ValueError, match="integer"):
        TraceProductSpec(unitaries=(u,), contractions=(c,), phase_polys=((0, 1.5),))
    with pytest.raises(ValueError, match="contraction"):
        TraceProductSpec(unitaries=(u,), contractions=(2.0 * c,), phase_polys=((0, 1),))
    with pytest.raises(ValueError, match="share one dimension"):
        TraceProductSpec(
            unitaries=(u, haar_unitary(4, rng)),
            contractions=(c, random_contraction(rng, 4)),
            phase_polys=((0, 1), (0, 1)),
        )


@pytest.mark.parametrize("seed", range(8))
def test_trace_product_two_paths_agree(seed, table_10k):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9))
    d = int(rng.integers(1, 4))
    spec = make_spec(rng, k, d)
    res = trace_product_sum(spec, table_10k, 1000, two_path=True)
    assert res.discrepancy is not None and res.discrepancy < 1e-9
    assert abs(res.value - res.eigen_value) == res.discrepancy


def test_trace_product_quadratic_phase_two_paths(table_10k):
    rng = np.random.default_rng(123)
    spec = make_spec(rng, 4, 2, degree=2, coeff_max=3)
    res = trace_product_sum(spec, table_10k, 500, two_path=True)
    assert res.discrepancy < 1e-9


def test_trace_product_d1_matches_weighted_average(table_10k):
    # single factor: (1/N) sum mu(n) tr(U^{c n} A)/k computed directly
    rng = np.random.default_rng(5)
    spec = make_spec(rng, 3, 1)
    c = spec.phase_polys[0][1]
    n_max = 500
    u, a = spec.unitaries[0], spec.contractions[0]
    acc = 0.0 + 0j
    for n in range(1, n_max + 1):
        m = int(table_10k.mu[n])
        if m:
            acc += m * np.trace(unitary_power(u, c * n) @ a) / 3
    res = trace_product_sum(spec, table_10k, n_max)
    assert abs(res.value - acc / n_max) < 1e-10


def test_trace_product_respects_congruence_restriction(table_10k):
    rng = np.random.default_rng(6)
    base = make_spec(rng, 3, 2)
    spec0 = TraceProductSpec(
        unitaries=base.unitaries,
        contractions=base.contractions,
        phase_polys=base.phase_polys,
        modulus=2,
        residue=0,
    )
    spec1 = TraceProductSpec(
        unitaries=base.unitaries,
        contractions=base.contractions,
        phase_polys=base.phase_polys,
        modulus=2,
        residue=1,
    )
    full = trace_product_sum(base, table_10k, 400).value
    split = (
        trace_product_sum(spec0, table_10k, 400).value
        + trace_product_sum(spec1, table_10k, 400).value
    )
    assert abs(full - split) < 1e-12


@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_quantize_drift_within_epsilon(epsilon):
    u = haar_unitary(8, 17)
    q = quantize_unitary(u, epsilon, 100)
    for n in range(1, 101):
        drift = op_norm(unitary_power(u, n) - q.decomp.power(n))
        assert drift <= epsilon + 1e-12
    assert q.grid_size == int(np.ceil(2 * np.pi * 100 / epsilon))


def test_quantize_on_grid_unitary_is_exact():
    # eigenphases already on the grid: V reproduces U to machine precision
    horizon, eps = 10, 0.1
    m = int(np.ceil(2 * np.pi * horizon / eps))
    angles = np.array([0, 10, 25]) / m
    u = np.diag(np.exp(2j * np.pi * angles))
    q = quantize_unitary(u, eps, horizon)
    assert op_norm(q.matrix - u) < 1e-12


def test_quantize_merges_grid_collisions():
    u = np.diag([np.exp(2j * np.pi * 0.0), np.exp(2j * np.pi * 1e-15)])
    q = quantize_unitary(u, 0.1, 10)
    assert len(q.decomp.projections) == 1


def test_quantize_refuses_oversized_grid():
    u = haar_unitary(3, 1)
    with pytest.raises(ValueError, match="grid size"):
        quantize_unitary(u, 1e-9, 100)


@pytest.mark.parametrize("seed", range(4))
def test_finite_average_bound_chain(seed, table_10k):
    rng = np.random.default_rng(seed)
    u = haar_unitary(6, rng)
    t = hermitian_contraction(rng, 6)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    q = quantize_unitary(u, 0.05, 10**4)
    fb = finite_vn_average_bound(u, q, t, a, table_10k, 10**4)
    assert abs(fb.s_n - fb.s_n_quantized) <= fb.epsilon_term + 1e-9
    assert fb.bound == pytest.approx(fb.epsilon_term + fb.exp_term)
    assert fb.dominates
    assert fb.epsilon_term == pytest.approx(2 * 0.05 * op_norm(t))


def test_finite_average_bound_validates_inputs(table_10k):
    u = haar_unitary(4, 2)
    q = quantize_unitary(u, 0.1, 100)
    rng = np.random.default_rng(0)
    t = hermitian_contraction(rng, 4)
    a = np.eye(4)
    with pytest.raises(ValueError, match="horizon"):
        finite_vn_average_bound(u, q, t, a, table_10k, 101)
    with pytest.raises(ValueError, match=r"\|\|T\|\|"):
        finite_vn_average_bound(u, q, 3.0 * t, a, table_10k, 100)
