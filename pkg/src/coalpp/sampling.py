"""Sampling transforms: Bernoulli/Poisson to k-sampling, and index chains.

k-sampling (drawing exactly k tips uniformly) is obtained from Bernoulli or
Poisson sampling by mixing over a k-dependent probability measure on the
sampling rate. For a CPP with P(H <= t) = a the Bernoulli mixing measure has
density k (1-a) rho^{k-1} / (1 - a(1-rho))^{k+1} on rho in (0, 1); its Feller
analogue, in the variable v = 2 nu beta(t; delta), is k v^{k-1}/(1+v)^{k+1}
on (0, inf). Mixing the product-form joint law of a Poisson-sampled Feller
diffusion and resolving by partial fractions yields the closed form

    F(tau_2, ..., tau_k) = k! ( C - sum_j G_j log B_j ),

with B_j = beta(t)/beta(tau_j), C = prod (1 - B_j)^{-1} and
G_j = -B_j^{k-1} (1 - B_j)^{-2} prod_{l != j} (B_j - B_l)^{-1}.

Index chains map sample coalescent times onto population coalescent times for
exchangeable binary trees: the root and step probabilities (computed in
log-gamma space, with closed-form cumulative sums used for inverse-cdf
sampling over the infinite root support) give a strictly increasing chain
i_2 < i_3 < ... < i_n with sample time number k equal to population time
number i_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoleError, DomainError
from .numerics import QuadratureSpec, beta_fn, integrate

__all__ = [
    "BernoulliCPP",
    "FellerPoisson",
    "IndexChain",
    "lambert_measure_density",
    "ksample_mix",
    "ksample_joint_cdf_feller",
    "saunders_root_pmf",
    "saunders_root_cdf",
    "saunders_step_pmf",
    "saunders_step_cdf",
    "sample_index_chain",
    "two_sample_cdf_via_series",
]

_MIX_SPEC = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10, max_subdivisions=400)
_TAIL_MASS = 1e-12  # root-index inverse-cdf truncation threshold


@dataclass(frozen=True)
class BernoulliCPP:
    """Mixing regime for a finite-population CPP with a = P(H <= t)."""

    a: float

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise DomainError(f"a must lie in (0, 1), got {self.a}")


@dataclass(frozen=True)
class FellerPoisson:
    """Mixing regime for the Poisson-sampled Feller diffusion."""


def lambert_measure_density(k: int, value: float, regime) -> float:
    """Density of the Bernoulli->k or Poisson->k mixing measure.

    BernoulliCPP(a): density in rho on (0, 1); FellerPoisson: density in the
    substituted variable v = 2 nu beta(t; delta) on (0, inf).
    """
    if k < 1:
        raise DomainError(f"need k >= 1, got {k}")
    if isinstance(regime, BernoulliCPP):
        rho = value
        if not 0.0 < rho < 1.0:
            raise DomainError(f"rho must lie in (0, 1), got {rho}")
        a = regime.a
        return k * (1.0 - a) * rho ** (k - 1) / (1.0 - a * (1.0 - rho)) ** (k + 1)
    if isinstance(regime, FellerPoisson):
        v = value
        if not v > 0.0:
            raise DomainError(f"v must be positive, got {v}")
        return k * v ** (k - 1) / (1.0 + v) ** (k + 1)
    raise DomainError(f"unknown mixing regime {regime!r}")


def ksample_mix(integrand, k: int, t: float, delta: float, spec: QuadratureSpec | None = None) -> float:
    """Integrate a function of the Poisson rate nu against the k-sampling measure.

    The substitution w = v/(1+v), v = 2 nu beta(t; delta), turns the measure
    into k w^{k-1} dw on (0, 1); ``integrand`` must accept ndarray nu.
    """
    if k < 1:
        raise DomainError(f"need k >= 1, got {k}")
    if not t > 0:
        raise DomainError(f"need t > 0, got {t}")
    two_beta = 2.0 * beta_fn(t, delta)

    def g(w):
        v = w / (1.0 - w)
        nu = v / two_beta
        return k * w ** (k - 1) * np.asarray(integrand(nu), dtype=float)

    return integrate(g, 0.0, 1.0, spec or _MIX_SPEC)


def ksample_joint_cdf_feller(alpha: float, t: float, k: int, taus, pole_rtol: float = 1e-9) -> float:
    """Joint k-sample coalescent-time law of a Feller diffusion given T_1 = t.

    Returns k! (C - sum_j G_j log B_j) for strictly decreasing
    taus = (tau_2, ..., tau_k) in (0, t); depends on the drift only through
    |alpha|. Near-coincident times make the partial fractions degenerate, in
    which case a :class:`DegeneratePoleError` is raised and the caller should
    perturb the times or use :func:`ksample_mix` (the quadrature route has no
    pole).
    """
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    arr = np.asarray(taus, dtype=float)
    if arr.shape != (k - 1,):
        raise DomainError(f"expected {k - 1} times for k={k}, got shape {arr.shape}")
    if np.any(arr <= 0) or np.any(arr >= t) or np.any(np.diff(arr) >= 0):
        raise DomainError(f"times must satisfy t > tau_2 > ... > tau_k > 0, got {taus!r}")
    a = abs(alpha)
    bt = beta_fn(t, a)
    B = bt / np.asarray(beta_fn(arr, a))  # each > 1, increasing
    spread = np.abs(np.subtract.outer(B, B))
    np.fill_diagonal(spread, np.inf)
    if np.any(spread < pole_rtol * np.max(B)):
        raise DegeneratePoleError(
            "coincident coalescent times make the partial fractions degenerate; "
            "perturb the times or use the ksample_mix quadrature route"
        )
    C = float(np.prod(1.0 / (1.0 - B)))
    total = C
    for j in range(k - 1):
        others = np.delete(B, j)
        Gj = -(B[j] ** (k - 1)) / (1.0 - B[j]) ** 2 / np.prod(B[j] - others)
        total -= Gj * math.log(B[j])
    return math.factorial(k) * total


# ---------------------------------------------------------------------------
# Saunders index chains


@dataclass(frozen=True)
class IndexChain:
    """Population-coalescent indices for a size-n sample: sample time number k
    coincides with population time number indices[k], for k = 2..n."""

    n: int
    indices: dict[int, int]

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"need n >= 2, got {self.n}")
        if sorted(self.indices) != list(range(2, self.n + 1)):
            raise DomainError(f"indices must cover k = 2..{self.n}")
        seq = [self.indices[k] for k in range(2, self.n + 1)]
        if any(i < k for k, i in zip(range(2, self.n + 1), seq)):
            raise DomainError(f"chain violates i_k >= k: {seq}")
        if any(a >= b for a, b in zip(seq, seq[1:])):
            raise DomainError(f"chain must increase strictly in k: {seq}")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.indices[k] for k in range(2, self.n + 1))


def saunders_root_pmf(n: int, i: int) -> float:
    """P(sample time n = population time i) = n(n-1) (i-1)!(i-2)! / ((i-n)!(i+n-1)!)."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    if i < n:
        raise DomainError(f"root index support is i >= n, got i={i}")
    lg = math.lgamma
    return math.exp(
        math.log(n) + math.log(n - 1) + lg(i) + lg(i - 1) - lg(i - n + 1) - lg(i + n)
    )


def saunders_root_cdf(n: int, i: int) -> float:
    """P(root index <= i) = prod_{m=1}^{n-1} (i-m)/(i+m), stable for huge i."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    if i < n:
        return 0.0
    return math.exp(sum(math.log1p(-2.0 * m / (i + m)) for m in range(1, n)))


def saunders_step_pmf(k: int, j: int, i: int) -> float:
    """P(sample time k = population time i | sample time k+1 = population time j).

    Support i = k..j-1 (so j >= k+1), for k >= 2.
    """
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    if j < k + 1:
        raise DomainError(f"need j >= k+1, got j={j}, k={k}")
    if not k <= i <= j - 1:
        raise DomainError(f"step index support is {k} <= i <= {j - 1}, got i={i}")
    lg = math.lgamma
    return math.exp(
        math.log(k)
        + math.log(k - 1)
        + lg(j - k) + lg(j + k - 1) - lg(j) - lg(j - 1)
        + lg(i) + lg(i - 1) - lg(i - k + 1) - lg(i + k)
    )


def saunders_step_cdf(k: int, j: int, i: int) -> float:
    """P(step index <= i | previous index j); equals 1 at i = j-1."""
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    if j < k + 1:
        raise DomainError(f"need j >= k+1, got j={j}, k={k}")
    if i < k:
        return 0.0
    if i >= j - 1:
        return 1.0
    lg = math.lgamma
    return math.exp(
        lg(j - k) + lg(j + k - 1) - lg(j) - lg(j - 1)
        + lg(i) + lg(i + 1) - lg(i - k + 1) - lg(i + k)
    )


def _inverse_cdf_root(n: int, u: float) -> int:
    # Smallest i >= n with cdf(i) >= u, by doubling then bisection on the
    # closed-form cumulative sum; the tail beyond mass 1 - _TAIL_MASS is
    # lumped into the last retained atom.
    target = min(u, 1.0 - _TAIL_MASS)
    lo, hi = n, n
    while saunders_root_cdf(n, hi) < target:
        lo, hi = hi + 1, hi * 2
    while lo < hi:
        mid = (lo + hi) // 2
        if saunders_root_cdf(n, mid) >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _inverse_cdf_step(k: int, j: int, u: float) -> int:
    lo, hi = k, j - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if saunders_step_cdf(k, j, mid) >= u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sample_index_chain(n: int, rng) -> IndexChain:
    """Draw the population indices (i_n, then i_{n-1}, ..., i_2) by inverse cdf."""
    from .simulate import as_generator

    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    gen = as_generator(rng)
    indices: dict[int, int] = {}
    indices[n] = _inverse_cdf_root(n, gen.random())
    for k in range(n - 1, 1, -1):
        j = indices[k + 1]
        indices[k] = k if j == k + 1 else _inverse_cdf_step(k, j, gen.random())
    return IndexChain(n, indices)


def two_sample_cdf_via_series(alpha: float, t: float, tau: float, tol: float = 1e-12) -> float:
    """MRCA-time cdf of a 2-sample from a non-extinct Feller diffusion, by the
    population-coalescent series

        F(tau) = sum_{i>=2} [1 - (1 - beta(tau)/beta(t))^{i-1}] P(root index = i)
               = 1 - sum_{i>=2} (2/(i(i+1))) z^{i-1},   z = 1 - beta(tau)/beta(t),

    summed until the geometric tail bound drops below ``tol``.
    """
    if not 0.0 <= tau <= t:
        raise DomainError(f"need 0 <= tau <= t, got tau={tau}, t={t}")
    if tau == 0.0:
        return 0.0
    if tau == t:
        return 1.0
    a = abs(alpha)
    z = 1.0 - float(beta_fn(tau, a)) / float(beta_fn(t, a))
    if z <= 0.0:
        return 1.0
    n_terms = max(16, int(math.ceil(math.log(tol) / math.log(z))) + 2)
    total = 0.0
    start = 2
    chunk = 65536
    while start <= n_terms + 1:
        stop = min(start + chunk, n_terms + 2)
        i = np.arange(start, stop, dtype=float)
        total += float(np.sum(2.0 / (i * (i + 1.0)) * z ** (i - 1.0)))
        start = stop
    return 1.0 - total
