import math

import numpy as np
import pytest

from conftest import hermitian_contraction
from ncflow.flows import (
    AverageSeries,
    Flow,
    FlowEvaluationError,
    average_series,
    bsz_check,
    constant_flow,
    decay_fit,
    geometric_checkpoints,
    periodic_flow,
    rotation_flow,
)
from ncflow.linalg import haar_unitary, random_density
from ncflow.matrix_dynamics import ad_flow
from ncflow.moebius import PolynomialPhase, exp_sum, squarefree_count

GOLDEN = (math.sqrt(5) - 1) / 2


def test_geometric_checkpoints():
    cps = geometric_checkpoints(10**5)
    assert cps[0] == 1000 and cps[-1] == 10**5
    assert list(cps) == sorted(cps)
    assert geometric_checkpoints(500) == (500,)


def test_rotation_series_matches_exp_sum(table_1m):
    cps = geometric_checkpoints(10**5)
    series = average_series(rotation_flow(GOLDEN), table_1m, cps)
    for i, n in enumerate(cps):
        direct = exp_sum(table_1m, PolynomialPhase((0.0, GOLDEN)), n)
        assert abs(series.values[i] - direct) < 1e-12


def test_series_prefix_consistency(table_1m):
    # truncating the checkpoint list must not change earlier values at all
    cps = geometric_checkpoints(10**5)
    full = average_series(rotation_flow(GOLDEN), table_1m, cps)
    part = average_series(rotation_flow(GOLDEN), table_1m, cps[:3])
    assert np.array_equal(full.values[:3], part.values)


def test_series_worker_count_does_not_change_bits(table_1m):
    cps = geometric_checkpoints(10**5)
    flow = rotation_flow(GOLDEN)
    s1 = average_series(flow, table_1m, cps, workers=1)
    s4 = average_series(flow, table_1m, cps, workers=4)
    assert np.array_equal(s1.values, s4.values)
    assert s1.abs_mu_counts == s4.abs_mu_counts


def test_series_abs_mu_counts_and_bounds(table_10k):
    series = average_series(constant_flow(1.0), table_10k, [100, 10**4])
    assert series.abs_mu_counts == (
        squarefree_count(table_10k, 100),
        squarefree_count(table_10k, 10**4),
    )
    bounds = series.running_bounds()
    assert bounds[1] == pytest.approx(squarefree_count(table_10k, 10**4) / 10**4)
    rows = list(series.csv_rows())
    assert rows[0][0] == 100 and len(rows[0]) == 5


def test_constant_flow_series_is_mertens(table_10k):
    from ncflow.moebius import mertens

    series = average_series(constant_flow(1.0), table_10k, [9973])
    assert series.values[0] == pytest.approx(mertens(table_10k, 9973) / 9973, abs=1e-15)


def test_flow_declared_bound_enforced(table_10k):
    bad = Flow(evaluator=lambda n: 2.0 + 0j, declared_bound=1.0, label="bad")
    with pytest.raises(FlowEvaluationError, match="bound"):
        average_series(bad, table_10k, [100])


def test_flow_rejects_nonfinite_values(table_10k):
    def ev(n):
        return complex("nan") if n == 37 else 0.5

    bad = Flow(evaluator=ev, declared_bound=1.0, label="nan_at_37")
    with pytest.raises(FlowEvaluationError, match="37"):
        average_series(bad, table_10k, [100])


def test_flow_valid_n_window(table_10k):
    flow = Flow(
        evaluator=lambda n: 1.0 + 0j, declared_bound=1.0, label="w", valid_n=50
    )
    with pytest.raises(ValueError, match="n <= 50"):
        average_series(flow, table_10k, [100])
    series = average_series(flow, table_10k, [50])
    assert len(series.values) == 1


def test_block_values_path_matches_scalar_path(table_10k):
    theta = 0.3173
    scalar = Flow(
        evaluator=lambda n: complex(np.exp(2j * np.pi * theta * n)),
        declared_bound=1.0,
        label="scalar",
    )
    blocked = Flow(
        evaluator=lambda n: complex(np.exp(2j * np.pi * theta * n)),
        declared_bound=1.0,
        label="blocked",
        block_values=lambda lo, hi: np.exp(
            2j * np.pi * theta * np.arange(lo + 1, hi + 1)
        ),
    )
    s1 = average_series(scalar, table_10k, [5000])
    s2 = average_series(blocked, table_10k, [5000])
    assert abs(s1.values[0] - s2.values[0]) < 1e-12


def test_averaging_is_linear(table_10k):
    f1 = rotation_flow(0.21)
    f2 = rotation_flow(0.57)
    mix = Flow(
        evaluator=lambda n: 0.5 * (f1.evaluator(n) + f2.evaluator(n)),
        declared_bound=1.0,
        label="mix",
        values_at=lambda ns: 0.5 * (f1.values_at(ns) + f2.values_at(ns)),
    )
    n = 9973
    s1 = average_series(f1, table_10k, [n]).values[0]
    s2 = average_series(f2, table_10k, [n]).values[0]
    sm = average_series(mix, table_10k, [n]).values[0]
    assert abs(sm - 0.5 * (s1 + s2)) < 1e-14


def test_nearby_flows_have_nearby_averages(table_10k):
    # |s_N(f) - s_N(g)| <= sup|f-g| * (1/N) sum |mu|
    delta = 1e-3
    f = rotation_flow(0.41)
    g = Flow(
        evaluator=lambda n: f.evaluator(n) * (1 - delta),
        declared_bound=1.0,
        label="shrunk",
        values_at=lambda ns: f.values_at(ns) * (1 - delta),
    )
    n = 9973
    sf = average_series(f, table_10k, [n]).values[0]
    sg = average_series(g, table_10k, [n]).values[0]
    slack = delta * squarefree_count(table_10k, n) / n
    assert abs(sf - sg) <= slack + 1e-15


def test_periodic_flow_matches_ad_flow(table_1m):
    u = np.diag(np.exp(2j * np.pi * np.array([0.25, 0.5, 0.75, 0.0])))
    rng = np.random.default_rng(9)
    rho = random_density(4, rng)
    a = hermitian_contraction(rng, 4)
    pf = periodic_flow(u, rho, a)
    assert pf.period == 4
    af = ad_flow(u, a, rho)
    n = 99991
    s1 = average_series(pf, table_1m, [n]).values[0]
    s2 = average_series(af, table_1m, [n]).values[0]
    assert abs(s1 - s2) < 1e-12


def test_periodic_flow_regrouping_identity(table_1m):
    # s_N = (1/N) sum_j c_j sum_{n <= N, n % q == j} mu(n)
    u = np.diag(np.exp(2j * np.pi * np.array([0.5, 0.0, 0.5])))
    rng = np.random.default_rng(11)
    rho = random_density(3, rng)
    a = hermitian_contraction(rng, 3)
    pf = periodic_flow(u, rho, a)
    q = pf.period
    n = 10**5
    s = average_series(pf, table_1m, [n]).values[0]
    mu = table_1m.mu[1 : n + 1].astype(np.float64)
    ns = np.arange(1, n + 1)
    regroup = sum(pf.cycle[j] * mu[ns % q == j].sum() for j in range(q)) / n
    assert abs(s - regroup) < 1e-12


def test_periodic_flow_requires_finite_order():
    u = haar_unitary(3, 5)
    rho = random_density(3, 5)
    with pytest.raises(ValueError, match="period"):
        periodic_flow(u, rho, np.eye(3), max_period=32)


def test_decay_fit_recovers_synthetic_exponent():
    cps = tuple(geometric_checkpoints(10**6))
    vals = np.array([2.5 * math.log(n) ** -2.0 for n in cps], dtype=complex)
    series = AverageSeries(
        label="synthetic",
        declared_bound=1.0,
        checkpoints=cps,
        values=vals,
        abs_mu_counts=tuple(1 for _ in cps),
    )
    fit = decay_fit(series)
    assert fit.h == pytest.approx(2.0, abs=1e-9)
    assert fit.C == pytest.approx(2.5, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_decay_fit_flags_exact_zero():
    cps = (10, 100, 1000)
    series = AverageSeries(
        label="zero",
        declared_bound=1.0,
        checkpoints=cps,
        values=np.zeros(3, dtype=complex),
        abs_mu_counts=(1, 1, 1),
    )
    fit = decay_fit(series)
    assert fit.exact_zero and math.isinf(fit.h)


def test_decay_fit_needs_enough_points():
    series = AverageSeries(
        label="short",
        declared_bound=1.0,
        checkpoints=(10, 100),
        values=np.ones(2, dtype=complex),
        abs_mu_counts=(1, 1),
    )
    with pytest.raises(ValueError):
        decay_fit(series)


def test_bsz_golden_rotation_passes(table_1m):
    rep = bsz_check(rotation_flow(GOLDEN), table_1m, 0.25, 10**4, 10**6)
    assert rep.hypothesis_holds
    assert rep.max_correlation_ratio < 1.0
    assert rep.within_analytic_bound
    assert rep.analytic_bound == pytest.approx(
        2.0 * math.sqrt(0.25 * math.log(4.0)) * 10**6
    )
    assert rep.prime_cap <= min(200, int(math.exp(4)), 10**6 // 10**4)
    assert rep.prime_pairs_checked > 0


def test_bsz_constant_flow_fails(table_1m):
    rep = bsz_check(constant_flow(1.0), table_1m, 0.25, 10**4, 10**6)
    assert not rep.hypothesis_holds
    assert rep.max_correlation_ratio == pytest.approx(4.0)


def test_bsz_rejects_bad_epsilon(table_10k):
    with pytest.raises(ValueError):
        bsz_check(constant_flow(1.0), table_10k, 1.5, 10, 10**4)
