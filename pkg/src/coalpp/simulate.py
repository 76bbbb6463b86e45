"""Tree and genealogy simulators, plus the brute-force forward oracle.

Simulators are exact (no discretization): CPP trees by inverse-transform
draws from the node-height law; root-at-infinity and uniform-prior trees by
order statistics; the Yule time-transform route; the k-sampled Feller
procedure via Saunders index chains with closed-form inverse cdfs; and an
event-driven forward birth-death simulation (the oracle everything else is
checked against), which reconstructs survivor node heights exactly.

Randomness: every simulator takes an ``rng`` that may be an
:class:`RngState`, a ``numpy.random.Generator`` or a plain seed. Identical
(seed, stream) pairs reproduce identical output bit for bit; distinct streams
are statistically independent by construction of the underlying PCG64 seed
sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv, gammainccinv

from ._backend import get_kernels
from .analytics import FellerSetting
from .errors import DomainError, PopulationCapError, UnsupportedConditioningError
from .models import NodeHeightModel
from .trees import CoalescentTree

__all__ = [
    "RngState",
    "as_generator",
    "BdGenealogy",
    "simulate_cpp",
    "simulate_cpp_given_n",
    "simulate_root_infinity",
    "simulate_unif_prior",
    "simulate_yule_transform",
    "simulate_bd_oracle",
    "simulate_bd_batch",
    "simulate_feller_ksample",
    "poisson_sample_size",
    "induced_subtree_heights",
]

_TINY = 5e-324  # smallest positive double; keeps inverse-transform draws > 0


@dataclass(frozen=True)
class RngState:
    """Seed plus stream index; (seed, stream) fully determines the output."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise DomainError(f"stream must be nonnegative, got {self.stream}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Normalize RngState | Generator | int seed to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngState(int(rng)).generator()
    raise DomainError(f"cannot interpret {rng!r} as a random generator")


def _clip_height(h: float, t: float) -> float:
    if h <= 0.0:
        return _TINY
    if h >= t:
        return float(np.nextafter(t, 0.0))
    return h


# ---------------------------------------------------------------------------
# CPP simulators


def simulate_cpp(model: NodeHeightModel, t: float, rng) -> CoalescentTree:
    """Draw heights i.i.d. from the node-height law until one exceeds t.

    The leaf count is shifted-geometric with success probability F_H(t); a
    draw of +infinity (possible when total_mass < 1) also terminates.
    """
    if not t > 0:
        raise DomainError(f"stem age must be positive, got {t}")
    gen = as_generator(rng)
    mass_t = model.cdf(t)
    heights: list[float] = []
    while True:
        u = gen.random()
        if u >= mass_t:  # the draw lands beyond t (or at +inf)
            break
        heights.append(_clip_height(model.quantile(u), t))
    return CoalescentTree(t, tuple(heights))


def simulate_cpp_given_n(model: NodeHeightModel, t: float, n: int, rng) -> CoalescentTree:
    """n-1 i.i.d. draws from the normalized law F_H(tau)/F_H(t) on (0, t)."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    gen = as_generator(rng)
    mass_t = model.cdf(t)
    if not mass_t > 0:
        raise DomainError(f"cdf({t}) = 0: cannot condition on leaves")
    heights = tuple(
        _clip_height(model.quantile(max(gen.random(), _TINY) * mass_t), t)
        for _ in range(n - 1)
    )
    return CoalescentTree(t, heights)


def _require_full_mass(model: NodeHeightModel) -> None:
    if model.total_mass() < 1.0:
        raise UnsupportedConditioningError(
            f"total_mass={model.total_mass()} < 1: the reversed process may not "
            "converge to a single ancestral founder"
        )


def simulate_root_infinity(model: NodeHeightModel, n: int, rng) -> CoalescentTree:
    """n-1 i.i.d. draws from the full node-height law; stem age is infinite."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    _require_full_mass(model)
    gen = as_generator(rng)
    heights = tuple(model.quantile(max(gen.random(), _TINY)) for _ in range(n - 1))
    return CoalescentTree(math.inf, heights)


def simulate_unif_prior(model: NodeHeightModel, n: int, rng) -> CoalescentTree:
    """n i.i.d. draws under the improper uniform prior; the largest becomes T_1."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    _require_full_mass(model)
    gen = as_generator(rng)
    draws = [model.quantile(max(gen.random(), _TINY)) for _ in range(n)]
    stem_idx = max(range(n), key=draws.__getitem__)
    stem = draws.pop(stem_idx)
    heights = tuple(_clip_height(h, stem) for h in draws)
    return CoalescentTree(stem, heights)


def simulate_yule_transform(delta: float, gamma: float, n: int, rng) -> CoalescentTree:
    """Root-at-infinity Wiuf-form tree via the rate-1 Yule time transform.

    Standard-exponential heights u map to physical time by
    delta * tau = log(1 + gamma (e^u - 1)), reproducing the law of
    :func:`simulate_root_infinity` on ``WiufForm(delta, gamma)``.
    """
    if not (delta > 0 and gamma > 0):
        raise DomainError(f"need delta, gamma > 0, got delta={delta}, gamma={gamma}")
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    gen = as_generator(rng)
    u = gen.standard_exponential(n - 1)
    heights = np.log1p(gamma * np.expm1(u)) / delta
    heights = tuple(max(float(h), _TINY) for h in heights)
    return CoalescentTree(math.inf, heights)


# ---------------------------------------------------------------------------
# forward birth-death oracle


@dataclass(frozen=True)
class BdGenealogy:
    """Outcome of one forward birth-death run stopped at ``stop_time``.

    ``heights`` are the reconstructed node heights of the survivors in planar
    (CPP) order; ``survivor_ids`` the corresponding lineage ids; ``events``
    is None unless recording was requested, else (kinds, times, lineage ids)
    with kind +1 for birth and -1 for death (the founder, id 0, is not an
    event).
    """

    lam: float
    mu: float
    stop_time: float
    heights: np.ndarray
    survivor_ids: np.ndarray
    n_events: int
    events: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def n_survivors(self) -> int:
        return len(self.survivor_ids)

    def to_tree(self) -> CoalescentTree:
        if self.n_survivors < 1:
            raise DomainError("extinct replicate has no reconstructed tree")
        heights = tuple(_clip_height(h, self.stop_time) for h in self.heights)
        return CoalescentTree(self.stop_time, heights)

    def subsample_uniform(self, k: int, rng) -> CoalescentTree:
        """The reconstructed tree of k tips chosen uniformly without replacement."""
        if not 1 <= k <= self.n_survivors:
            raise DomainError(f"need 1 <= k <= {self.n_survivors}, got {k}")
        gen = as_generator(rng)
        kept = np.sort(gen.choice(self.n_survivors, size=k, replace=False))
        heights = induced_subtree_heights(self.heights, kept)
        return CoalescentTree(
            self.stop_time, tuple(_clip_height(h, self.stop_time) for h in heights)
        )

    def subsample_bernoulli(self, rho: float, rng) -> CoalescentTree | None:
        """Keep each surviving tip independently with probability rho.

        Returns None when no tip is retained.
        """
        if not 0.0 < rho <= 1.0:
            raise DomainError(f"rho must lie in (0, 1], got {rho}")
        gen = as_generator(rng)
        kept = np.flatnonzero(gen.random(self.n_survivors) < rho)
        if kept.size == 0:
            return None
        heights = induced_subtree_heights(self.heights, kept)
        return CoalescentTree(
            self.stop_time, tuple(_clip_height(h, self.stop_time) for h in heights)
        )


def induced_subtree_heights(heights: np.ndarray, kept: np.ndarray) -> np.ndarray:
    """Node heights of the subtree spanned by the kept (sorted) tip indices.

    Adjacent kept tips a < b diverge at the deepest boundary between them:
    max(heights[a:b]).
    """
    kept = np.asarray(kept, dtype=np.int64)
    if kept.size <= 1:
        return np.empty(0, dtype=np.float64)
    h = np.asarray(heights, dtype=np.float64)
    return np.maximum.reduceat(h[: kept[-1]], kept[:-1])


def simulate_bd_oracle(
    lam: float,
    mu: float,
    t: float,
    rng,
    cap: int = 1_000_000,
    record_events: bool = False,
) -> BdGenealogy:
    """Exact exponential-clock forward simulation from one founder.

    Raises :class:`PopulationCapError` when the population exceeds ``cap``
    (the replicate should be discarded and counted by the caller).
    """
    if not (lam > 0 and mu > 0):
        raise DomainError(f"rates must be positive, got lam={lam}, mu={mu}")
    if not t > 0:
        raise DomainError(f"stop time must be positive, got {t}")
    gen = as_generator(rng)
    kernels = get_kernels()
    heights, ids, n_events, truncated, events = kernels.bd_forward(
        gen.bit_generator, lam, mu, t, cap, record_events
    )
    if truncated:
        raise PopulationCapError(
            f"population exceeded cap={cap} at lam={lam}, mu={mu}", cap + 1, cap
        )
    return BdGenealogy(lam, mu, t, heights, ids, n_events, events)


def simulate_bd_batch(lam: float, mu: float, t: float, rng, n_reps: int, cap: int = 1_000_000):
    """Batched forward runs on a single stream.

    Returns (heights_flat, offsets, survivor_counts, n_truncated); replicate r
    contributed heights_flat[offsets[r]:offsets[r+1]] and survivor_counts[r]
    survivors (-1 marks a discarded, cap-truncated replicate).
    """
    gen = as_generator(rng)
    kernels = get_kernels()
    return kernels.bd_forward_batch(gen.bit_generator, lam, mu, t, cap, int(n_reps))


# ---------------------------------------------------------------------------
# k-sampled Feller simulator


def _beta_inverse(b: float, alpha: float) -> float:
    a = abs(alpha)
    if a == 0.0:
        return 2.0 * b
    return math.log1p(2.0 * a * b) / a


def _draw_marginal_time(setting: FellerSetting, k: int, u: float) -> float:
    # Inverse of P(T_k <= tau | X(t)=x) = Q(k-1, y(tau)): exact closed form.
    x = setting.require_x()
    y = float(gammainccinv(k - 1, u))
    b = x / (y + x / setting.beta(setting.t))
    return _beta_inverse(b, setting.alpha)


def _draw_conditional_time(setting: FellerSetting, i: int, j: int, s: float, u: float) -> float:
    # Inverse of P(T_i <= tau | T_j = s) = I_w(j-i, i-1) in
    # w = beta(t)(beta(tau)-beta(s)) / (beta(tau)(beta(t)-beta(s))).
    w = float(betaincinv(j - i, i - 1, u))
    bs = setting.beta(s)
    bt = setting.beta(setting.t)
    b = bt * bs / (bt - w * (bt - bs))
    return _beta_inverse(b, setting.alpha)


def _exchangeable_tree_from_times(times_desc, stem_age: float, gen) -> CoalescentTree:
    # Random-join construction: merging two uniformly chosen blocks at each
    # level (shallowest first) realizes the exchangeable binary topology; the
    # planar boundary heights then encode the tree.
    n = len(times_desc) + 1
    blocks: list[tuple[list[int], list[float]]] = [([i], []) for i in range(n)]
    for time in sorted(times_desc):  # ascending: shallowest merge first
        i, j = sorted(gen.choice(len(blocks), size=2, replace=False))
        left = blocks[i]
        right = blocks.pop(j)
        blocks[i] = (left[0] + right[0], left[1] + [time] + right[1])
    heights = tuple(blocks[0][1])
    return CoalescentTree(stem_age, tuple(_clip_height(h, stem_age) for h in heights))


def simulate_feller_ksample(setting: FellerSetting, n: int, rng) -> CoalescentTree:
    """Sample tree of n tips from a Feller diffusion conditioned on X(t) = x.

    Draws a Saunders index chain i_2 < ... < i_n, then the matching population
    coalescent times: the shallowest, T_{i_n}, from its marginal law, and each
    deeper T_{i_k} from the conditional law given T_{i_{k+1}} (which is free
    of x), via exact inverse cdfs. Sample time number k equals population time
    number i_k.
    """
    from .sampling import sample_index_chain

    setting.require_x()
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    gen = as_generator(rng)
    chain = sample_index_chain(n, gen)
    idx = chain.as_tuple()  # (i_2, ..., i_n)
    times: dict[int, float] = {}
    i_n = idx[-1]
    times[i_n] = _draw_marginal_time(setting, i_n, max(gen.random(), _TINY))
    for pos in range(len(idx) - 2, -1, -1):
        i_k, i_next = idx[pos], idx[pos + 1]
        s = times[i_next]
        times[i_k] = _draw_conditional_time(setting, i_k, i_next, s, max(gen.random(), _TINY))
    sample_times = [times[i] for i in idx]  # descending: T~_2 > ... > T~_n
    return _exchangeable_tree_from_times(sample_times, setting.t, gen)


def poisson_sample_size(x: float, nu: float, rng) -> int:
    """Sample size of a Poisson-sampled population: N ~ Pois(2 nu x)."""
    if not (x > 0 and nu > 0):
        raise DomainError(f"need x, nu > 0, got x={x}, nu={nu}")
    gen = as_generator(rng)
    return int(gen.poisson(2.0 * nu * x))
