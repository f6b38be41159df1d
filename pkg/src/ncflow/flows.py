"""Flows n -> complex, their Moebius-weighted average series, decay fits, and
the bilinear (Bourgain-Sarnak-Ziegler) criterion check.

A Flow is a pure evaluator with a declared sup bound.  average_series walks
n = 1..max(checkpoints) once, in fixed blocks split at every checkpoint, and
accumulates with the blocked pairwise scheme from ncflow.moebius, so the
result is independent of how blocks are assigned to workers.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import moebius
from .moebius import MoebiusTable, fold_pairwise, phase_values

_BLOCK = 4096


class FlowEvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Flow:
    """Sequence n -> complex with |value| <= declared_bound.

    evaluator must be pure.  block_values, when given, returns the values for
    n in (lo, hi] as a complex array and must agree with evaluator; it exists
    so vectorized or incrementally-computed flows stay fast under the block
    walk.  valid_n caps the domain for truncated flows.
    """

    evaluator: Callable[[int], complex]
    declared_bound: float
    label: str
    block_values: Optional[Callable[[int, int], np.ndarray]] = None
    values_at: Optional[Callable[[np.ndarray], np.ndarray]] = None
    valid_n: Optional[int] = None

    def values(self, lo: int, hi: int) -> np.ndarray:
        """Values for n in (lo, hi]."""
        if self.valid_n is not None and hi > self.valid_n:
            raise ValueError(
                f"flow {self.label!r} is only defined for n <= {self.valid_n}, "
                f"requested n = {hi}"
            )
        if self.block_values is not None:
            vals = np.asarray(self.block_values(lo, hi), dtype=np.complex128)
        elif self.values_at is not None:
            vals = np.asarray(
                self.values_at(np.arange(lo + 1, hi + 1, dtype=np.int64)),
                dtype=np.complex128,
            )
        else:
            vals = np.array(
                [complex(self.evaluator(n)) for n in range(lo + 1, hi + 1)],
                dtype=np.complex128,
            )
        if vals.shape != (hi - lo,):
            raise FlowEvaluationError(
                f"flow {self.label!r} returned {vals.shape} values for ({lo}, {hi}]"
            )
        finite = np.isfinite(vals.view(np.float64)).reshape(-1, 2).all(axis=1)
        if not finite.all():
            n_bad = lo + 1 + int(np.argmin(finite))
            raise FlowEvaluationError(
                f"flow {self.label!r} produced a non-finite value at n = {n_bad}"
            )
        over = np.abs(vals) > self.declared_bound + 1e-9
        if over.any():
            n_bad = lo + 1 + int(np.argmax(over))
            raise FlowEvaluationError(
                f"flow {self.label!r} exceeded its declared bound "
                f"{self.declared_bound:g} at n = {n_bad}"
            )
        return vals


@dataclass(frozen=True)
class AverageSeries:
    """s_N = (1/N) sum_{n<=N} mu(n) f(n) at each checkpoint."""

    label: str
    declared_bound: float
    checkpoints: tuple
    values: np.ndarray
    abs_mu_counts: tuple  # sum_{n<=N} |mu(n)| per checkpoint, exact

    def running_bounds(self) -> np.ndarray:
        """declared_bound * (1/N) sum |mu(n)|, the trivial majorant of |s_N|."""
        counts = np.asarray(self.abs_mu_counts, dtype=np.float64)
        ns = np.asarray(self.checkpoints, dtype=np.float64)
        return self.declared_bound * counts / ns

    def csv_rows(self):
        bounds = self.running_bounds()
        for i, n in enumerate(self.checkpoints):
            v = self.values[i]
            yield (n, v.real, v.imag, abs(v), bounds[i])


CSV_COLUMNS = ("N", "re", "im", "abs", "running_bound")


def _block_edges(n_max: int, checkpoints: Sequence[int]):
    edges = set(range(0, n_max + 1, _BLOCK))
    edges.add(n_max)
    edges.update(checkpoints)
    return sorted(edges)


def average_series(
    flow: Flow,
    table: MoebiusTable,
    checkpoints: Iterable[int],
    *,
    workers: int = 1,
) -> AverageSeries:
    """Moebius-weighted average of a flow at ascending checkpoints, single pass.

    The block layout depends only on (max checkpoint, checkpoint set), so a
    given call signature yields bit-identical results for any worker count.
    """
    cps = moebius._checked_checkpoints(table, checkpoints)
    n_max = cps[-1]
    if flow.valid_n is not None and n_max > flow.valid_n:
        raise ValueError(
            f"flow {flow.label!r} is only defined for n <= {flow.valid_n}, "
            f"requested series up to N = {n_max}"
        )
    edges = _block_edges(n_max, cps)
    blocks = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]

    def block_sum(bounds):
        lo, hi = bounds
        vals = flow.values(lo, hi)
        w = table.mu[lo + 1 : hi + 1]
        return complex(np.add.reduce(vals * w))

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(block_sum, blocks))
    else:
        sums = [block_sum(b) for b in blocks]

    abs_mu = np.concatenate(
        [[0], np.cumsum(np.abs(table.mu[1 : n_max + 1].astype(np.int64)))]
    )
    values = []
    counts = []
    for N in cps:
        k = next(i for i, (_, hi) in enumerate(blocks) if hi == N)
        values.append(fold_pairwise(sums[: k + 1]) / N)
        counts.append(int(abs_mu[N]))
    return AverageSeries(
        label=flow.label,
        declared_bound=flow.declared_bound,
        checkpoints=tuple(cps),
        values=np.asarray(values, dtype=np.complex128),
        abs_mu_counts=tuple(counts),
    )


def geometric_checkpoints(n_max: int, start: int = 1000) -> tuple:
    """start, start*sqrt(10), ... rounded, capped at n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if start > n_max:
        return (n_max,)
    out = []
    x = float(start)
    while round(x) < n_max:
        out.append(int(round(x)))
        x *= math.sqrt(10.0)
    out.append(n_max)
    return tuple(dict.fromkeys(out))


# ---------------------------------------------------------------------------
# concrete scalar flows


def rotation_flow(theta: float, label: Optional[str] = None) -> Flow:
    """f(n) = e(theta n)."""
    coeffs = (0.0, float(theta))
    return Flow(
        evaluator=lambda n: complex(phase_values(coeffs, np.asarray([n]))[0]),
        declared_bound=1.0,
        label=label or f"rotation(theta={theta!r})",
        values_at=lambda ns: phase_values(coeffs, ns),
    )


def constant_flow(value: complex = 1.0, label: str = "constant") -> Flow:
    value = complex(value)

    return Flow(
        evaluator=lambda n: value,
        declared_bound=abs(value),
        label=label,
        values_at=lambda ns: np.full(np.asarray(ns).shape, value, dtype=np.complex128),
    )


@dataclass(frozen=True)
class PeriodicFlow(Flow):
    period: int = 0
    cycle: Optional[np.ndarray] = None


def periodic_flow(u, rho, a, *, max_period: int = 64, label: Optional[str] = None) -> "PeriodicFlow":
    """Flow n -> trace(rho U^n A U*^n) for a finite-order unitary U.

    Finds the least q <= max_period with ||U^q - I|| <= 1e-10 and tabulates
    one period; the evaluator is an exact lookup, q-periodic in n.
    """
    from . import linalg

    u = linalg.check_unitary(u)
    rho = linalg.check_density(rho)
    a = linalg.check_matrix(a)
    dim = u.shape[0]
    q = None
    w = np.eye(dim, dtype=np.complex128)
    for j in range(1, max_period + 1):
        w = w @ u
        if np.max(np.abs(w - np.eye(dim))) <= 1e-10:
            q = j
            break
    if q is None:
        raise ValueError(f"no period q <= {max_period} with U^q = I")
    cycle = np.empty(q, dtype=np.complex128)
    w = np.eye(dim, dtype=np.complex128)
    for j in range(q):
        cycle[j] = np.trace(rho @ w @ a @ w.conj().T)
        w = w @ u
    return PeriodicFlow(
        evaluator=lambda n: complex(cycle[n % q]),
        declared_bound=float(np.max(np.abs(cycle))),
        label=label or f"periodic(q={q})",
        values_at=lambda ns: cycle[np.asarray(ns) % q],
        period=q,
        cycle=cycle,
    )


# ---------------------------------------------------------------------------
# decay fit


@dataclass(frozen=True)
class DecayFit:
    """Least squares of log |s_N| against log log N: |s_N| ~ C (log N)^-h."""

    C: float
    h: float
    r_squared: float
    n_used: int
    n_zero_dropped: int
    exact_zero: bool = False


def decay_fit(series: AverageSeries) -> DecayFit:
    ns = np.asarray(series.checkpoints, dtype=np.float64)
    mags = np.abs(series.values)
    if ns.size < 3:
        raise ValueError("decay fit needs at least 3 checkpoints")
    if np.any(ns <= math.e):
        raise ValueError("decay fit needs checkpoints with log log N defined (N > e)")
    keep = mags > 0.0
    dropped = int(np.count_nonzero(~keep))
    if not keep.any():
        return DecayFit(
            C=0.0, h=math.inf, r_squared=1.0, n_used=0,
            n_zero_dropped=dropped, exact_zero=True,
        )
    if np.count_nonzero(keep) < 3:
        raise ValueError("decay fit needs at least 3 nonzero checkpoints")
    x = np.log(np.log(ns[keep]))
    y = np.log(mags[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        C=float(np.exp(intercept)),
        h=float(-slope),
        r_squared=r2,
        n_used=int(np.count_nonzero(keep)),
        n_zero_dropped=dropped,
    )


# ---------------------------------------------------------------------------
# bilinear criterion


@dataclass(frozen=True)
class BSZReport:
    """Bilinear-criterion audit at level epsilon.

    hypothesis_holds iff every checked prime pair p1 < p2 satisfies
    |sum_{m<=M} f(p1 m) conj(f(p2 m))| <= epsilon M; max_correlation_ratio is
    the largest |sum| / (epsilon M).  mobius_sum_abs = |sum_{n<=N} mu(n) f(n)|
    (unnormalized) and analytic_bound = 2 sqrt(eps log(1/eps)) N.
    """

    epsilon: float
    M: int
    N: int
    prime_cap: int
    prime_pairs_checked: int
    hypothesis_holds: bool
    max_correlation_ratio: float
    mobius_sum_abs: float
    analytic_bound: float

    @property
    def within_analytic_bound(self) -> bool:
        return self.mobius_sum_abs <= self.analytic_bound


def bsz_check(
    flow: Flow,
    table: MoebiusTable,
    epsilon: float,
    M: int,
    N: int,
    *,
    hard_prime_cap: int = 200,
) -> BSZReport:
    """Check the bilinear hypothesis for a bounded flow and report the
    Moebius-sum bound it buys.

    Primes are capped at min(e^(1/eps), hard_prime_cap, table.n_max / M).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if M < 1 or N < 1 or N > table.n_max:
        raise ValueError("need M >= 1 and 1 <= N <= table.n_max")
    if flow.declared_bound > 1.0 + 1e-12:
        raise ValueError("bsz_check requires |f| <= 1 (declared_bound <= 1)")
    cap = min(math.exp(1.0 / epsilon), float(hard_prime_cap), table.n_max / M)
    cap = int(math.floor(cap))
    primes = [int(p) for p in table.primes if p <= cap]
    per_prime = {}
    for p in primes:
        ns = np.arange(1, M + 1, dtype=np.int64) * p
        per_prime[p] = _flow_at(flow, ns)
    worst = 0.0
    pairs = 0
    for i, p1 in enumerate(primes):
        for p2 in primes[i + 1 :]:
            corr = complex(np.add.reduce(per_prime[p1] * np.conj(per_prime[p2])))
            worst = max(worst, abs(corr))
            pairs += 1
    ratio = worst / (epsilon * M) if pairs else 0.0
    mob = abs(moebius.weighted_average(table, _flow_seq(flow), N)) * N
    bound = 2.0 * math.sqrt(epsilon * math.log(1.0 / epsilon)) * N
    return BSZReport(
        epsilon=epsilon,
        M=M,
        N=N,
        prime_cap=cap,
        prime_pairs_checked=pairs,
        hypothesis_holds=(pairs > 0 and ratio <= 1.0),
        max_correlation_ratio=ratio,
        mobius_sum_abs=float(mob),
        analytic_bound=bound,
    )


def _flow_at(flow: Flow, ns: np.ndarray) -> np.ndarray:
    """Flow values at an arbitrary ascending index array."""
    if flow.valid_n is not None and ns.size and ns[-1] > flow.valid_n:
        raise ValueError(
            f"flow {flow.label!r} is only defined for n <= {flow.valid_n}"
        )
    if flow.values_at is not None:
        return np.asarray(flow.values_at(ns), dtype=np.complex128)
    if flow.block_values is not None and ns.size and ns[0] + ns.size - 1 == ns[-1]:
        # contiguous range
        return flow.values(int(ns[0]) - 1, int(ns[-1]))
    return np.array([complex(flow.evaluator(int(n))) for n in ns], dtype=np.complex128)


def _flow_seq(flow: Flow):
    def f(ns):
        ns = np.asarray(ns)
        if ns.ndim == 0:
            return complex(flow.evaluator(int(ns)))
        return _flow_at(flow, ns)

    return f
