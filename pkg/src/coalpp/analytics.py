"""Exact coalescent-time distributions for CPP trees and their Feller limits.

Generic path: a CPP with stem age t and n leaves has node heights that are
i.i.d. with the normalized law F(tau) = F_H(tau)/F_H(t) on [0, t]; the
coalescent times T_2 > ... > T_n are their descending order statistics, which
gives closed forms for the joint, marginal and conditional laws below.

Feller path: conditioning the diffusion limit on a current scaled population
X(t) = x gives the closed forms in terms of

    beta(tau) = (e^{|a| tau} - 1) / (2 |a|),    mu(tau) = 2 |a| e^{|a| tau} / (e^{|a| tau} - 1):

the joint density of T_2..T_k is  prod_j [x mu(tau_j) / (2 beta(tau_j))] *
exp(-(x/beta(tau_k) - x/beta(t))), with Poisson-mixture marginals and an
x-free conditional law for T_i given T_j. All Feller formulas depend on the
drift only through |alpha|.

Density evaluators return 0 outside the ordered support (rather than raising)
so they can be integrated over boxes; structural misuse (bad indices, missing
conditioning) raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, MissingConditioningError, UnsupportedConditioningError
from .models import NodeHeightModel
from .numerics import beta_fn, mu_fn

__all__ = [
    "FixedStem",
    "UniformPrior",
    "RootAtInfinity",
    "FellerSetting",
    "joint_cdf_given_stem",
    "joint_density_top_k",
    "marginal_density_Tk",
    "marginal_cdf_Tk",
    "cond_density_Ti_given_Tj",
    "unif_prior_T1_density",
    "unif_prior_joint_density",
    "feller_joint_density",
    "feller_marginal_Tk",
    "feller_marginal_cdf_Tk",
    "feller_cond_Ti_given_Tj",
    "feller_cond_cdf_Ti_given_Tj",
    "feller_popcoal_density",
    "feller_popcoal_cdf",
    "validate_conditioning",
]


# ---------------------------------------------------------------------------
# stem-age conditioning regimes


@dataclass(frozen=True)
class FixedStem:
    """Condition on the founding time T_1 = t."""

    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"stem age must be positive, got {self.t}")


@dataclass(frozen=True)
class UniformPrior:
    """Uniform prior on T_1 over [0, horizon]; horizon=inf is the improper prior."""

    horizon: float = math.inf

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class RootAtInfinity:
    """Condition on T_1 = inf (single founder infinitely far in the past)."""


def validate_conditioning(model: NodeHeightModel, regime) -> None:
    """Reject regimes that require P(H < inf) = 1 when mass escapes to infinity."""
    needs_full_mass = isinstance(regime, RootAtInfinity) or (
        isinstance(regime, UniformPrior) and math.isinf(regime.horizon)
    )
    if needs_full_mass and model.total_mass() < 1.0:
        raise UnsupportedConditioningError(
            f"total_mass={model.total_mass()} < 1: the reversed process may not "
            "converge to a single ancestral founder; condition on a single "
            "ancestor first"
        )


@dataclass(frozen=True)
class FellerSetting:
    """Feller-diffusion conditioning data: drift, stem age, and optionally the
    observed scaled population x and the Poisson sampling rate nu."""

    alpha: float
    t: float
    x: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"stem age must be positive, got {self.t}")
        if self.x is not None and not self.x > 0:
            raise DomainError(f"population x must be positive, got {self.x}")
        if self.nu is not None and not self.nu > 0:
            raise DomainError(f"sampling rate nu must be positive, got {self.nu}")

    def beta(self, tau):
        return beta_fn(tau, abs(self.alpha))

    def mu(self, tau):
        return mu_fn(tau, abs(self.alpha))

    def require_x(self) -> float:
        if self.x is None:
            raise MissingConditioningError(
                "this law conditions on X(t) = x; construct FellerSetting with x set"
            )
        return self.x

    def forbid_x(self) -> None:
        if self.x is not None:
            raise DomainError(
                "this law does not condition on X(t) = x; construct FellerSetting "
                "without x"
            )


# ---------------------------------------------------------------------------
# generic CPP laws given T_1 = t


def _check_nk(n: int, k: int) -> None:
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")


def _strictly_decreasing(taus) -> np.ndarray:
    arr = np.asarray(taus, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"taus must be a nonempty 1-d sequence, got {taus!r}")
    return arr


def joint_cdf_given_stem(model: NodeHeightModel, t: float, n: int, taus) -> float:
    """(n-1)! * prod_j F(tau_j) for the coalescent times of an n-leaf tree.

    ``taus`` are (tau_2, ..., tau_n), strictly decreasing inside (0, t). This
    is the source form used by the k-sampling mix: the product over the
    normalized node-height cdf with the (n-1)! ordering factor.
    """
    arr = _strictly_decreasing(taus)
    if arr.size != n - 1:
        raise DomainError(f"expected {n - 1} times for n={n}, got {arr.size}")
    if np.any(arr <= 0) or np.any(arr >= t) or np.any(np.diff(arr) >= 0):
        raise DomainError(f"times must satisfy t > tau_2 > ... > tau_n > 0, got {taus!r}")
    log_f = np.log(model.normalized_cdf(t, arr))
    return float(math.exp(math.lgamma(n) + log_f.sum()))


def joint_density_top_k(model: NodeHeightModel, t: float, n: int, k: int, taus) -> float:
    """Joint density of the k-1 largest coalescent times (T_2, ..., T_k).

    (n-1)!/(n-k)! * prod_{j=2}^k f(tau_j) * F(tau_k)^{n-k}; zero outside the
    ordered region t > tau_2 > ... > tau_k > 0.
    """
    _check_nk(n, k)
    arr = _strictly_decreasing(taus)
    if arr.size != k - 1:
        raise DomainError(f"expected {k - 1} times for k={k}, got {arr.size}")
    if np.any(arr <= 0) or np.any(arr >= t) or np.any(np.diff(arr) >= 0):
        return 0.0
    coeff = math.lgamma(n) - math.lgamma(n - k + 1)
    log_f = np.log(model.normalized_pdf(t, arr)).sum()
    tail = (n - k) * math.log(model.normalized_cdf(t, float(arr[-1]))) if n > k else 0.0
    return float(math.exp(coeff + log_f + tail))


def marginal_density_Tk(model: NodeHeightModel, t: float, n: int, k: int, tau: float) -> float:
    """Marginal density of T_k: the (n+1-k)-th order statistic of n-1 heights."""
    _check_nk(n, k)
    if not 0.0 < tau < t:
        return 0.0
    F = model.normalized_cdf(t, tau)
    f = model.normalized_pdf(t, tau)
    log_coeff = math.lgamma(n) - math.lgamma(n - k + 1) - math.lgamma(k - 1)
    with np.errstate(divide="ignore"):
        body = xlogy(k - 2, 1.0 - F) + xlogy(n - k, F)
    return float(math.exp(log_coeff + body) * f)


def marginal_cdf_Tk(model: NodeHeightModel, t: float, n: int, k: int, tau: float) -> float:
    """P(T_k <= tau): binomial tail of the normalized height law.

    T_k <= tau iff at least n+1-k of the n-1 heights are <= tau, i.e. the
    regularized incomplete beta I_F(n+1-k, k-1).
    """
    from scipy.special import betainc

    _check_nk(n, k)
    if tau <= 0:
        return 0.0
    if tau >= t:
        return 1.0
    F = model.normalized_cdf(t, tau)
    return float(betainc(n + 1 - k, k - 1, F))


def cond_density_Ti_given_Tj(
    model: NodeHeightModel, t: float, i: int, j: int, s: float, tau: float
) -> float:
    """Density of T_i given T_j = s (i < j), independent of the leaf count n.

    (j-2)!/((i-2)!(j-i-1)!) * (F(tau)-F(s))^{j-i-1} (1-F(tau))^{i-2}
    / (1-F(s))^{j-2} * f(tau), supported on (s, t).
    """
    if not 2 <= i < j:
        raise DomainError(f"need 2 <= i < j, got i={i}, j={j}")
    if not 0.0 < s < t:
        raise DomainError(f"conditioning value s must lie in (0, t), got s={s}")
    if not s < tau < t:
        return 0.0
    Fs = model.normalized_cdf(t, s)
    Ft = model.normalized_cdf(t, tau)
    f = model.normalized_pdf(t, tau)
    log_coeff = math.lgamma(j - 1) - math.lgamma(i - 1) - math.lgamma(j - i)
    with np.errstate(divide="ignore"):
        body = (
            xlogy(j - i - 1, Ft - Fs)
            + xlogy(i - 2, 1.0 - Ft)
            - xlogy(j - 2, 1.0 - Fs)
        )
    return float(math.exp(log_coeff + body) * f)


def unif_prior_T1_density(model: NodeHeightModel, t: float, n: int, tau: float) -> float:
    """Density of T_1 under a uniform[0, t] prior, given n leaves: n F^{n-1} f."""
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    if not 0.0 < tau < t:
        return 0.0
    F = model.normalized_cdf(t, tau)
    f = model.normalized_pdf(t, tau)
    return float(n * F ** (n - 1) * f)


def unif_prior_joint_density(model: NodeHeightModel, t: float, n: int, taus) -> float:
    """Joint density of (T_1, ..., T_n) under a uniform[0, t] prior: n! prod f(tau_j).

    Equals the fixed-stem joint density of (T_2, ..., T_{n+1}) with n+1 leaves.
    """
    arr = _strictly_decreasing(taus)
    if arr.size != n:
        raise DomainError(f"expected {n} times, got {arr.size}")
    if np.any(arr <= 0) or np.any(arr >= t) or np.any(np.diff(arr) >= 0):
        return 0.0
    log_f = np.log(model.normalized_pdf(t, arr)).sum()
    return float(math.exp(math.lgamma(n + 1) + log_f))


# ---------------------------------------------------------------------------
# Feller closed forms (Theorems 1 and 2, and the population-coalescent law)


def _feller_y(setting: FellerSetting, tau) -> np.ndarray:
    x = setting.require_x()
    return x / np.asarray(setting.beta(tau)) - x / setting.beta(setting.t)


def feller_joint_density(setting: FellerSetting, k: int, taus) -> float:
    """Joint density of the population coalescent times T_2..T_k given X(t) = x."""
    x = setting.require_x()
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    arr = _strictly_decreasing(taus)
    if arr.size != k - 1:
        raise DomainError(f"expected {k - 1} times for k={k}, got {arr.size}")
    if np.any(arr <= 0) or np.any(arr >= setting.t) or np.any(np.diff(arr) >= 0):
        return 0.0
    rate = x * np.asarray(setting.mu(arr)) / (2.0 * np.asarray(setting.beta(arr)))
    y_deepest = float(_feller_y(setting, float(arr[-1])))
    return float(math.exp(np.log(rate).sum() - y_deepest))


def feller_marginal_Tk(setting: FellerSetting, k: int, tau: float) -> float:
    """Marginal density of T_k given X(t) = x: a Poisson-mixture closed form."""
    x = setting.require_x()
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    if not 0.0 < tau < setting.t:
        return 0.0
    y = float(_feller_y(setting, tau))
    rate = x * setting.mu(tau) / (2.0 * setting.beta(tau))
    with np.errstate(divide="ignore"):
        log_weight = xlogy(k - 2, y) - y - math.lgamma(k - 1)
    return float(rate * math.exp(log_weight))


def feller_marginal_cdf_Tk(setting: FellerSetting, k: int, tau: float) -> float:
    """P(T_k <= tau | X(t) = x): regularized upper incomplete gamma of y(tau).

    x/beta(T_m) - x/beta(t), m = 2, 3, ..., are the arrival times of a
    unit-rate Poisson process, so T_k <= tau iff a Gamma(k-1) variate
    exceeds y(tau).
    """
    from scipy.special import gammaincc

    setting.require_x()
    if k < 2:
        raise DomainError(f"need k >= 2, got {k}")
    if tau <= 0:
        return 0.0
    if tau >= setting.t:
        return 1.0
    return float(gammaincc(k - 1, float(_feller_y(setting, tau))))


def feller_cond_Ti_given_Tj(
    setting: FellerSetting, i: int, j: int, s: float, tau: float
) -> float:
    """Density of T_i given T_j = s for i < j; independent of X(t).

    (j-2)!/(2 (i-2)!(j-i-1)!) * mu(tau) * beta(s)^{i-1} beta(t)^{j-i}
    / beta(tau)^{j-2} * (beta(tau)-beta(s))^{j-i-1} (beta(t)-beta(tau))^{i-2}
    / (beta(t)-beta(s))^{j-2}, supported on (s, t).
    """
    if not 2 <= i < j:
        raise DomainError(f"need 2 <= i < j, got i={i}, j={j}")
    if not 0.0 < s < setting.t:
        raise DomainError(f"conditioning value s must lie in (0, t), got s={s}")
    if not s < tau < setting.t:
        return 0.0
    bs = setting.beta(s)
    bt = setting.beta(setting.t)
    btau = setting.beta(tau)
    log_coeff = math.lgamma(j - 1) - math.lgamma(i - 1) - math.lgamma(j - i) - math.log(2.0)
    with np.errstate(divide="ignore"):
        body = (
            (i - 1) * math.log(bs)
            + (j - i) * math.log(bt)
            - (j - 2) * math.log(btau)
            + xlogy(j - i - 1, btau - bs)
            + xlogy(i - 2, bt - btau)
            - (j - 2) * math.log(bt - bs)
        )
    return float(setting.mu(tau) * math.exp(log_coeff + body))


def feller_cond_cdf_Ti_given_Tj(
    setting: FellerSetting, i: int, j: int, s: float, tau: float
) -> float:
    """P(T_i <= tau | T_j = s): regularized incomplete beta in the arrival ratio.

    Given the (j-1)-th Poisson arrival, the (i-1)-th is a Beta(i-1, j-i)
    fraction of it, so the cdf is I_w(j-i, i-1) with
    w = beta(t)(beta(tau)-beta(s)) / (beta(tau)(beta(t)-beta(s))).
    """
    from scipy.special import betainc

    if not 2 <= i < j:
        raise DomainError(f"need 2 <= i < j, got i={i}, j={j}")
    if not 0.0 < s < setting.t:
        raise DomainError(f"conditioning value s must lie in (0, t), got s={s}")
    if tau <= s:
        return 0.0
    if tau >= setting.t:
        return 1.0
    bs = setting.beta(s)
    bt = setting.beta(setting.t)
    btau = setting.beta(tau)
    w = bt * (btau - bs) / (btau * (bt - bs))
    return float(betainc(j - i, i - 1, w))


def feller_popcoal_density(setting: FellerSetting, i: int, tau: float) -> float:
    """Density of the population coalescent time T_i for a non-extinct Feller
    diffusion without conditioning on X(t):

    (i-1)/2 * mu(tau) beta(tau)/beta(t) * (1 - beta(tau)/beta(t))^{i-2}.
    """
    setting.forbid_x()
    if i < 2:
        raise DomainError(f"need i >= 2, got {i}")
    if not 0.0 < tau < setting.t:
        return 0.0
    ratio = setting.beta(tau) / setting.beta(setting.t)
    return float(
        0.5 * (i - 1) * setting.mu(tau) * ratio * math.exp(xlogy(i - 2, 1.0 - ratio))
    )


def feller_popcoal_cdf(setting: FellerSetting, i: int, tau: float) -> float:
    """cdf of T_i for the non-extinct Feller diffusion: 1 - (1 - beta(tau)/beta(t))^{i-1}."""
    setting.forbid_x()
    if i < 2:
        raise DomainError(f"need i >= 2, got {i}")
    if tau <= 0:
        return 0.0
    if tau >= setting.t:
        return 1.0
    ratio = setting.beta(tau) / setting.beta(setting.t)
    return float(-math.expm1(xlogy(i - 1, 1.0 - ratio)))
