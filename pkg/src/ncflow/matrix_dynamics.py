"""Matrix flows and their Moebius averages: inner conjugation flows, trace
product sums with an eigenphase-expansion cross-check, rank-one compressions,
eigenphase quantization, and the finite-dimensional average bound chain.

Powers of a unitary are walked incrementally (one multiply per step) with a
polar re-unitarization every POLAR_INTERVAL steps; every block of the average
walk is re-anchored with an exact binary power, so values do not depend on
block assignment.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linalg, moebius
from .flows import Flow, average_series
from .linalg import (
    SpectralDecomp,
    check_density,
    check_matrix,
    check_square,
    check_unitary,
    check_unit_vector,
    eig_unitary,
    hs_norm,
    inner,
    normalized_trace,
    op_norm,
    unitary_power,
)
from .moebius import MoebiusTable, PolynomialPhase, fold_pairwise, phase_values, poly_phase_frac

POLAR_INTERVAL = 10**4


def _power_walk(u: np.ndarray, lo: int, hi: int):
    """Yield U^n for n = lo+1 .. hi, re-unitarizing every POLAR_INTERVAL steps."""
    w = unitary_power(u, lo + 1)
    steps = 0
    for n in range(lo + 1, hi + 1):
        yield w
        w = u @ w
        steps += 1
        if steps % POLAR_INTERVAL == 0:
            w = linalg.polar_unitary_factor(w)


def ad_flow(u, a, rho, *, label: Optional[str] = None) -> Flow:
    """Flow n -> trace(rho U^n A U*^n)."""
    u = check_unitary(u)
    a = check_matrix(a)
    rho = check_density(rho)

    def block(lo, hi):
        out = np.empty(hi - lo, dtype=np.complex128)
        for i, w in enumerate(_power_walk(u, lo, hi)):
            out[i] = np.trace(rho @ w @ a @ w.conj().T)
        return out

    return Flow(
        evaluator=lambda n: complex(
            np.trace(rho @ unitary_power(u, n) @ a @ unitary_power(u, n).conj().T)
        ),
        declared_bound=op_norm(a) * (1.0 + 1e-9),
        label=label or f"ad_flow(dim={u.shape[0]})",
        block_values=block,
    )


def rank_one_flow(u, xi, eta, *, label: Optional[str] = None) -> Flow:
    """Flow n -> <U*^n P_xi U^n eta, eta> = |<U^n eta, xi>|^2."""
    u = check_unitary(u)
    xi = check_unit_vector(xi)
    eta = check_unit_vector(eta)

    def block(lo, hi):
        out = np.empty(hi - lo, dtype=np.complex128)
        w = unitary_power(u, lo + 1) @ eta
        for i, n in enumerate(range(lo + 1, hi + 1)):
            z = inner(w, xi)
            out[i] = z * np.conj(z)
            w = u @ w
        return out

    def ev(n):
        z = inner(unitary_power(u, n) @ eta, xi)
        return complex(z * np.conj(z))

    return Flow(
        evaluator=ev,
        declared_bound=1.0,
        label=label or f"rank_one_flow(dim={u.shape[0]})",
        block_values=block,
    )


# ---------------------------------------------------------------------------
# trace product sums


@dataclass(frozen=True)
class TraceProductSpec:
    """Data for (1/N) sum mu(n) tr_k(prod_j U_j^{phi_j(n)} A_j) over n = residue (mod modulus).

    phase_polys[j] are ascending integer coefficients of phi_j.
    Contractions A_j must satisfy ||A_j|| <= 1.
    """

    unitaries: tuple
    contractions: tuple
    phase_polys: tuple
    modulus: int = 1
    residue: int = 0

    def __post_init__(self):
        us = tuple(check_unitary(u) for u in self.unitaries)
        cs = tuple(check_matrix(a) for a in self.contractions)
        if not us or len(us) != len(cs) or len(us) != len(self.phase_polys):
            raise ValueError("need equally many unitaries, contractions, and phase polynomials")
        k = us[0].shape[0]
        if any(m.shape != (k, k) for m in us + cs):
            raise ValueError("all matrices must share one dimension k")
        for a in cs:
            if op_norm(a) > 1.0 + 1e-10:
                raise ValueError("contractions must have operator norm <= 1")
        polys = []
        for coeffs in self.phase_polys:
            if any(int(c) != c for c in coeffs):
                raise ValueError("phase coefficients must be integers")
            coeffs = tuple(int(c) for c in coeffs)
            if not coeffs:
                raise ValueError("phase polynomials need at least one coefficient")
            polys.append(coeffs)
        if self.modulus < 1 or not 0 <= self.residue < self.modulus:
            raise ValueError("bad congruence restriction")
        object.__setattr__(self, "unitaries", us)
        object.__setattr__(self, "contractions", cs)
        object.__setattr__(self, "phase_polys", tuple(polys))

    @property
    def k(self) -> int:
        return self.unitaries[0].shape[0]

    @property
    def d(self) -> int:
        return len(self.unitaries)


@dataclass(frozen=True)
class TraceProductResult:
    value: complex  # direct matrix-product path
    eigen_value: Optional[complex] = None
    discrepancy: Optional[float] = None


def _phi_values(coeffs: Sequence[int], ns: np.ndarray) -> np.ndarray:
    out = np.zeros(ns.shape, dtype=np.int64)
    for c in reversed(coeffs):
        out = out * ns + c
    return out


def trace_product_sum(
    spec: TraceProductSpec,
    table: MoebiusTable,
    N: int,
    *,
    two_path: bool = False,
    agree_tol: float = 1e-9,
) -> TraceProductResult:
    """Moebius-weighted trace product average, optionally cross-checked.

    The direct path multiplies binary powers of each U_j.  The eigen path
    diagonalizes each U_j once and sums scalar phase products against the
    transformed contractions; when two_path is set the two values must agree
    to agree_tol or an ArithmeticError is raised.
    """
    if not 1 <= N <= table.n_max:
        raise ValueError(f"N must lie in [1, {table.n_max}], got {N}")
    ns = np.asarray(
        moebius._restricted_range(N, spec.modulus, spec.residue), dtype=np.int64
    )
    ns = ns[table.mu[ns] != 0]
    k = spec.k
    if ns.size == 0:
        direct = 0j
    else:
        phis = [_phi_values(c, ns) for c in spec.phase_polys]
        parts = []
        for i, n in enumerate(ns):
            m = np.eye(k, dtype=np.complex128)
            for j in range(spec.d):
                m = m @ unitary_power(spec.unitaries[j], int(phis[j][i]))
                m = m @ spec.contractions[j]
            parts.append(int(table.mu[n]) * np.trace(m) / k)
        direct = complex(fold_pairwise(parts)) / N
    if not two_path:
        return TraceProductResult(value=direct)
    eigen = _eigen_expansion_sum(spec, table, N)
    gap = abs(direct - eigen)
    if gap > agree_tol:
        raise ArithmeticError(
            f"trace product paths disagree by {gap:.3e} > {agree_tol:g}"
        )
    return TraceProductResult(value=direct, eigen_value=eigen, discrepancy=gap)


def _eigen_expansion_sum(spec: TraceProductSpec, table: MoebiusTable, N: int) -> complex:
    """Eigen path: tr_k(prod U_j^{phi_j} A_j) expanded over joint eigenphases.

    With U_j = W_j D_j W_j*, the trace is the chain product of
    A~_j = W_j* A_j W_{j+1} against phase factors e(theta^{(j)}_t phi_j(n)),
    summed over one eigenindex per factor and divided by k.
    """
    ns = np.asarray(
        moebius._restricted_range(N, spec.modulus, spec.residue), dtype=np.int64
    )
    ns = ns[table.mu[ns] != 0]
    if ns.size == 0:
        return 0j
    k, d = spec.k, spec.d
    import scipy.linalg

    thetas = []
    ws = []
    for u in spec.unitaries:
        t, q = scipy.linalg.schur(u, output="complex")
        thetas.append((np.angle(np.diagonal(t)) / (2 * np.pi)) % 1.0)
        ws.append(q)
    a_tilde = [
        ws[j].conj().T @ spec.contractions[j] @ ws[(j + 1) % d] for j in range(d)
    ]
    # E_j[n, t] = e(theta_t * phi_j(n)), phases reduced mod 1 per eigenvalue
    es = []
    for j in range(d):
        cols = [
            phase_values([c * th for c in spec.phase_polys[j]], ns)
            for th in thetas[j]
        ]
        es.append(np.stack(cols, axis=1))
    chain = es[0][:, :, None] * a_tilde[0][None, :, :]
    for j in range(1, d):
        chain = np.einsum("nab,nb,bc->nac", chain, es[j], a_tilde[j], optimize=True)
    vals = np.einsum("naa->n", chain) / k
    w = table.mu[ns].astype(np.float64)
    return complex(moebius.tree_sum(vals * w)) / N


# ---------------------------------------------------------------------------
# eigenphase quantization


@dataclass(frozen=True)
class QuantizedUnitary:
    """V sharing U's eigenprojections with eigenphases on a uniform grid.

    grid_size m = ceil(2 pi N / eps) guarantees ||U^n - V^n|| <= eps for
    n <= horizon by the telescoping estimate ||U^n - V^n|| <= n ||U - V||.
    """

    matrix: np.ndarray
    decomp: SpectralDecomp
    epsilon: float
    horizon: int
    grid_size: int


def quantize_unitary(
    u, epsilon: float, horizon: int, *, grid_cap: int = 10**8
) -> QuantizedUnitary:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    u = check_unitary(u)
    m = math.ceil(2.0 * math.pi * horizon / epsilon)
    if m > grid_cap:
        raise ValueError(
            f"epsilon = {epsilon:g} at horizon {horizon} needs grid size m = {m}"
            f" > cap {grid_cap}; refuse to quantize"
        )
    base = eig_unitary(u)
    rounded = (np.round(base.angles * m) % m) / m
    # distinct phases may collapse onto one grid point: merge projections
    merged = {}
    for theta, p in zip(rounded, base.projections):
        key = round(float(theta) * m)
        if key in merged:
            merged[key] = (merged[key][0], merged[key][1] + p)
        else:
            merged[key] = (float(theta), p.copy())
    angles = np.array([merged[key][0] for key in sorted(merged)])
    projections = tuple(merged[key][1] for key in sorted(merged))
    decomp = SpectralDecomp(angles=angles, projections=projections)
    v = decomp.reconstruct()
    for n in {1, max(1, horizon // 2), horizon}:
        if op_norm(unitary_power(u, n) - decomp.power(n)) > epsilon:
            raise ArithmeticError(
                f"quantized power drifted past epsilon at n = {n}"
            )
    return QuantizedUnitary(
        matrix=v, decomp=decomp, epsilon=float(epsilon), horizon=int(horizon), grid_size=m
    )


# ---------------------------------------------------------------------------
# finite-dimensional average bound chain


@dataclass(frozen=True)
class FiniteAverageBound:
    """s_N with its two-term majorant: a quantization term plus an
    exponential-sum-weighted Cauchy-Schwarz term."""

    s_n: complex
    s_n_quantized: complex
    epsilon_term: float
    exp_term: float
    bound: float
    max_exp_sum_abs: float

    @property
    def dominates(self) -> bool:
        return abs(self.s_n) <= self.bound + 1e-12


def finite_vn_average_bound(
    u,
    quantized: QuantizedUnitary,
    t,
    a,
    table: MoebiusTable,
    N: int,
) -> FiniteAverageBound:
    """Bound (1/N) sum mu(n) rho(U*^n T U^n) for the state rho = tr_k(. AA*)/tr_k(AA*).

    The chain replaces U by its quantized companion V (cost 2 eps ||T||) and
    expands the V-flow over eigenprojections, bounding it by
    max |exp_sum| * ||T||_2 ||AA*||_2 / tr_k(AA*).
    """
    u = check_unitary(u)
    t = check_square(t)
    a = check_square(a)
    if op_norm(t) > 1.0 + 1e-9:
        raise ValueError("finite_vn_average_bound requires ||T|| <= 1")
    if N > quantized.horizon:
        raise ValueError(
            f"N = {N} exceeds the quantization horizon {quantized.horizon}"
        )
    aa = a @ a.conj().T
    denom = normalized_trace(aa).real
    if denom <= 0:
        raise ValueError("A A* has zero trace; state is undefined")

    def block(lo, hi):
        out = np.empty(hi - lo, dtype=np.complex128)
        for i, w in enumerate(_power_walk(u, lo, hi)):
            out[i] = np.trace(w.conj().T @ t @ w @ aa)
        return out / (u.shape[0] * denom)

    flow = Flow(
        evaluator=lambda n: complex(
            np.trace(
                unitary_power(u, n).conj().T @ t @ unitary_power(u, n) @ aa
            )
        )
        / (u.shape[0] * denom),
        declared_bound=op_norm(t) * op_norm(aa) / denom + 1e-9,
        label="finite_vn_state_flow",
        block_values=block,
    )
    s_n = complex(average_series(flow, table, [N]).values[0])

    angles = quantized.decomp.angles
    projections = quantized.decomp.projections
    r = len(angles)
    s_mat = np.empty((r, r), dtype=np.complex128)
    for i in range(r):
        for j in range(r):
            theta = (angles[j] - angles[i]) % 1.0
            s_mat[i, j] = moebius.exp_sum(table, moebius.linear_phase(theta), N)
    s_v = 0j
    for i in range(r):
        for j in range(r):
            s_v += s_mat[i, j] * normalized_trace(
                projections[i] @ t @ projections[j] @ aa
            )
    s_v /= denom

    eps_term = 2.0 * quantized.epsilon * op_norm(t)
    max_exp = float(np.max(np.abs(s_mat)))
    exp_term = max_exp * hs_norm(t) * hs_norm(aa) / denom
    if abs(s_n - s_v) > eps_term + 1e-9:
        raise ArithmeticError(
            f"quantization gap |s_N - s_N(V)| = {abs(s_n - s_v):.3e} exceeds "
            f"2 eps ||T|| = {eps_term:.3e}"
        )
    return FiniteAverageBound(
        s_n=s_n,
        s_n_quantized=complex(s_v),
        epsilon_term=eps_term,
        exp_term=exp_term,
        bound=eps_term + exp_term,
        max_exp_sum_abs=max_exp,
    )
