"""Node-height distribution families for coalescent point processes.

A coalescent point process (CPP) with stem age t is the random ultrametric
tree whose node depths are i.i.d. draws from a node-height distribution until
a draw exceeds t. This module provides every member of the node-height family
used by the library:

* ``BirthDeath(lam, mu)`` -- reconstructed linear birth-death process;
* ``BirthDeathSingleAncestor(lam, mu)`` -- the same, conditioned on the
  reversed reconstructed process converging to a single founder;
* ``WiufForm(delta, gamma)`` -- the generic two-parameter cdf
  (e^{delta tau} - 1) / (e^{delta tau} - 1 + gamma);
* ``BernoulliThinned(base, rho)`` -- tips retained independently with
  probability rho (thinning a CPP yields another CPP);
* ``PoissonFeller(alpha, nu)`` -- Poisson-sampled Feller diffusion, the
  thinning analogue in the diffusion limit (sample size ~ Pois(2 nu x)).

All models are immutable after construction, validate their parameters
eagerly, and expose a common distributional interface: ``cdf``, ``pdf``,
``sf``, ``total_mass``, ``quantile``, ``inverse_tail``,
``effective_death_rate`` and the stem-normalized ``normalized_cdf`` /
``normalized_pdf``. Scalar arguments return floats; ndarray arguments
broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoPartnerError, UnsupportedParameterizationError

__all__ = [
    "NodeHeightModel",
    "BirthDeath",
    "BirthDeathSingleAncestor",
    "WiufForm",
    "BernoulliThinned",
    "PoissonFeller",
    "to_wiuf_form",
    "symmetric_partner",
    "feller_prelimit_rates",
    "parse_spec",
]


def _as_float_array(x, name: str, minimum: float | None = None, strict: bool = False):
    arr = np.asarray(x, dtype=float)
    if minimum is not None:
        bad = arr <= minimum if strict else arr < minimum
        if np.any(bad):
            op = ">" if strict else ">="
            raise DomainError(f"{name} must be {op} {minimum}, got {x!r}")
    return arr


def _scalar_like(template, out):
    return out if isinstance(out, np.ndarray) and np.ndim(template) != 0 else float(out)


class NodeHeightModel:
    """Common interface of the node-height distribution family."""

    def cdf(self, tau):
        """P(H <= tau) for node height H; tau >= 0."""
        arr = _as_float_array(tau, "tau", minimum=0.0)
        return _scalar_like(tau, self._cdf(arr))

    def pdf(self, tau):
        """Node-height density F_H'(tau); tau >= 0."""
        arr = _as_float_array(tau, "tau", minimum=0.0)
        return _scalar_like(tau, self._pdf(arr))

    def sf(self, tau):
        """Survival P(H > tau), evaluated without cancellation."""
        arr = _as_float_array(tau, "tau", minimum=0.0)
        return _scalar_like(tau, self._sf(arr))

    def total_mass(self) -> float:
        """lim_{tau -> inf} cdf(tau); < 1 when P(H = inf) > 0."""
        raise NotImplementedError

    def quantile(self, p):
        """tau with cdf(tau) = p, for 0 <= p < total_mass()."""
        arr = _as_float_array(p, "p", minimum=0.0)
        if np.any(arr >= self.total_mass()):
            raise DomainError(
                f"quantile requires p < total_mass = {self.total_mass()}, got {p!r}"
            )
        return _scalar_like(p, self._quantile(arr))

    def inverse_tail(self, tau):
        """Inverse tail distribution 1 / P(H > tau)."""
        s = self.sf(tau)
        if np.any(np.asarray(s) == 0.0):
            raise DomainError("inverse_tail undefined where cdf(tau) = 1")
        return _scalar_like(tau, 1.0 / np.asarray(s))

    def effective_death_rate(self, tau):
        """Rate of the reversed reconstructed process: pdf / (1 - cdf)."""
        s = np.asarray(self.sf(tau))
        if np.any(s == 0.0):
            raise DomainError("effective_death_rate undefined where cdf(tau) = 1")
        return _scalar_like(tau, np.asarray(self.pdf(tau)) / s)

    def normalized_cdf(self, t: float, tau):
        """cdf(tau) / cdf(t) on [0, t]: the law of a height conditioned on <= t."""
        denom = self._stem_mass(t)
        arr = _as_float_array(tau, "tau", minimum=0.0)
        if np.any(arr > t):
            raise DomainError(f"tau must lie in [0, t] = [0, {t}], got {tau!r}")
        return _scalar_like(tau, self._cdf(arr) / denom)

    def normalized_pdf(self, t: float, tau):
        """pdf(tau) / cdf(t) on [0, t]."""
        denom = self._stem_mass(t)
        arr = _as_float_array(tau, "tau", minimum=0.0)
        if np.any(arr > t):
            raise DomainError(f"tau must lie in [0, t] = [0, {t}], got {tau!r}")
        return _scalar_like(tau, self._pdf(arr) / denom)

    def _stem_mass(self, t: float) -> float:
        if not t > 0:
            raise DomainError(f"stem age t must be positive, got {t}")
        denom = self.cdf(float(t))
        if denom <= 0.0:
            raise DomainError(f"cdf({t}) = 0; cannot normalize")
        return denom

    # subclasses implement the vectorized kernels
    def _cdf(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pdf(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sf(self, tau: np.ndarray) -> np.ndarray:
        return 1.0 - self._cdf(tau)

    def _quantile(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class WiufForm(NodeHeightModel):
    """Node-height cdf (e^{delta tau} - 1)/(e^{delta tau} - 1 + gamma).

    Covers the single-ancestor birth-death process, the thinned birth-death
    process and the Poisson-sampled Feller diffusion under reparameterization.
    """

    delta: float
    gamma: float

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")

    def _em1(self, tau):
        return np.expm1(self.delta * tau)

    def _cdf(self, tau):
        em1 = self._em1(tau)
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(em1), 1.0, em1 / (em1 + self.gamma))

    def _sf(self, tau):
        em1 = self._em1(tau)
        return np.where(np.isinf(em1), 0.0, self.gamma / (em1 + self.gamma))

    def _pdf(self, tau):
        # gamma * delta * e^{delta tau} / (e^{delta tau} - 1 + gamma)^2 in log space
        em1 = self._em1(tau)
        return self.gamma * self.delta * np.exp(self.delta * tau - 2.0 * np.log(em1 + self.gamma))

    def _quantile(self, p):
        return np.log1p(self.gamma * p / (1.0 - p)) / self.delta

    def total_mass(self) -> float:
        return 1.0

    def effective_death_rate(self, tau):
        # delta * e^{delta tau} / (e^{delta tau} - 1 + gamma), stable at large tau
        arr = _as_float_array(tau, "tau", minimum=0.0)
        out = self.delta / (1.0 - (1.0 - self.gamma) * np.exp(-self.delta * arr))
        return _scalar_like(tau, out)


@dataclass(frozen=True)
class BirthDeath(NodeHeightModel):
    """Reconstructed-tree node heights of a linear birth-death process.

    cdf(tau) = lam (e^{a tau} - 1) / (a + lam (e^{a tau} - 1)) with
    a = lam - mu, and lam*tau/(1 + lam*tau) in the critical case. Subcritical
    processes place mass P(H = inf) = 1 - lam/mu at infinity.
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not self.mu >= 0:
            raise DomainError(f"mu must be nonnegative, got {self.mu}")

    @property
    def alpha(self) -> float:
        return self.lam - self.mu

    def _cdf(self, tau):
        a = self.alpha
        if a == 0.0:
            x = self.lam * tau
            return x / (1.0 + x)
        em1 = np.expm1(a * tau)
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(em1), 1.0, self.lam * em1 / (a + self.lam * em1))

    def _sf(self, tau):
        a = self.alpha
        if a == 0.0:
            return 1.0 / (1.0 + self.lam * tau)
        em1 = np.expm1(a * tau)
        return np.where(np.isinf(em1), 0.0, a / (a + self.lam * em1))

    def _pdf(self, tau):
        a = self.alpha
        if a == 0.0:
            return self.lam / (1.0 + self.lam * tau) ** 2
        # lam a^2 e^{a tau} / (a + lam(e^{a tau} - 1))^2 in log space; the
        # denominator is negative for subcritical large tau, so log|.|.
        s = a * tau
        denom = a + self.lam * np.expm1(s)
        return self.lam * a * a * np.exp(s - 2.0 * np.log(np.abs(denom)))

    def total_mass(self) -> float:
        if self.alpha < 0:
            return self.lam / self.mu
        return 1.0

    def _quantile(self, p):
        a = self.alpha
        with np.errstate(divide="ignore"):
            if a == 0.0:
                return p / (self.lam * (1.0 - p))
            return np.log1p(a * p / (self.lam * (1.0 - p))) / a


@dataclass(frozen=True)
class BirthDeathSingleAncestor(NodeHeightModel):
    """Birth-death node heights conditioned on a single ancestral founder.

    The cdf is cdf_BD(tau) / cdf_BD(inf) = max(lam, mu) (e^{a tau} - 1) /
    (lam e^{a tau} - mu); for lam != mu this is exactly the Wiuf form with
    delta = |lam - mu|, gamma = delta / max(lam, mu), and the critical case
    coincides with the plain critical birth-death process.
    """

    lam: float
    mu: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not self.mu >= 0:
            raise DomainError(f"mu must be nonnegative, got {self.mu}")
        if self.lam == self.mu:
            eq = BirthDeath(self.lam, self.mu)
        else:
            delta = abs(self.lam - self.mu)
            eq = WiufForm(delta, delta / max(self.lam, self.mu))
        object.__setattr__(self, "_equivalent", eq)

    def _cdf(self, tau):
        return self._equivalent._cdf(tau)

    def _sf(self, tau):
        return self._equivalent._sf(tau)

    def _pdf(self, tau):
        return self._equivalent._pdf(tau)

    def _quantile(self, p):
        return self._equivalent._quantile(p)

    def total_mass(self) -> float:
        return 1.0


@dataclass(frozen=True)
class BernoulliThinned(NodeHeightModel):
    """Node heights after Bernoulli sampling of tips with probability rho.

    Thinning a CPP yields a CPP with inverse tail 1 - rho + rho / (1 - F),
    i.e. cdf rho F / (1 - (1 - rho) F). Composes over any base model.
    """

    base: NodeHeightModel
    rho: float

    def __post_init__(self):
        if not isinstance(self.base, NodeHeightModel):
            raise DomainError(f"base must be a NodeHeightModel, got {self.base!r}")
        if not (0.0 < self.rho <= 1.0):
            raise DomainError(f"rho must lie in (0, 1], got {self.rho}")

    def _cdf(self, tau):
        f = self.base._cdf(tau)
        return self.rho * f / (1.0 - (1.0 - self.rho) * f)

    def _sf(self, tau):
        f = self.base._cdf(tau)
        return self.base._sf(tau) / (1.0 - (1.0 - self.rho) * f)

    def _pdf(self, tau):
        f = self.base._cdf(tau)
        return self.rho * self.base._pdf(tau) / (1.0 - (1.0 - self.rho) * f) ** 2

    def _quantile(self, p):
        return self.base._quantile(p / (self.rho + (1.0 - self.rho) * p))

    def total_mass(self) -> float:
        m = self.base.total_mass()
        return self.rho * m / (1.0 - (1.0 - self.rho) * m)


@dataclass(frozen=True)
class PoissonFeller(NodeHeightModel):
    """Node heights of a Poisson-sampled Feller diffusion.

    For drift alpha != 0 the cdf is the Wiuf form with delta = |alpha| and
    gamma_nu = alpha/nu (alpha > 0) or alpha/(alpha - nu) (alpha < 0); the
    critical case is tau / (tau + 1/nu).
    """

    alpha: float
    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        eq = None if self.alpha == 0.0 else WiufForm(abs(self.alpha), self.gamma_nu)
        object.__setattr__(self, "_equivalent", eq)

    @property
    def gamma_nu(self) -> float:
        """The limit of the thinned-process gamma under diffusion scaling."""
        if self.alpha > 0:
            return self.alpha / self.nu
        if self.alpha < 0:
            return self.alpha / (self.alpha - self.nu)
        raise UnsupportedParameterizationError("gamma_nu vanishes for alpha = 0")

    def _cdf(self, tau):
        if self._equivalent is not None:
            return self._equivalent._cdf(tau)
        x = self.nu * tau
        return x / (1.0 + x)

    def _sf(self, tau):
        if self._equivalent is not None:
            return self._equivalent._sf(tau)
        return 1.0 / (1.0 + self.nu * tau)

    def _pdf(self, tau):
        if self._equivalent is not None:
            return self._equivalent._pdf(tau)
        return self.nu / (1.0 + self.nu * tau) ** 2

    def _quantile(self, p):
        if self._equivalent is not None:
            return self._equivalent._quantile(p)
        return p / (self.nu * (1.0 - p))

    def total_mass(self) -> float:
        return 1.0


def to_wiuf_form(model: NodeHeightModel) -> tuple[float, float]:
    """Map a model onto its (delta, gamma) Wiuf-form parameters.

    The returned ``WiufForm(delta, gamma)`` has cdf identical to
    ``model.cdf / model.total_mass`` at every tau (which is ``model.cdf``
    itself whenever the model places no mass at infinity). Raises
    :class:`UnsupportedParameterizationError` where no such pair exists
    (critical birth-death, critical Feller).
    """
    if isinstance(model, WiufForm):
        return model.delta, model.gamma
    if isinstance(model, BirthDeathSingleAncestor):
        if model.lam == model.mu:
            raise UnsupportedParameterizationError(
                "critical birth-death has no Wiuf form (delta would be 0)"
            )
        delta = abs(model.lam - model.mu)
        return delta, delta / max(model.lam, model.mu)
    if isinstance(model, BirthDeath):
        if model.lam <= model.mu:
            raise UnsupportedParameterizationError(
                "critical/subcritical BirthDeath is not Wiuf-form; condition on a "
                "single ancestor (BirthDeathSingleAncestor) first"
            )
        delta = model.lam - model.mu
        return delta, delta / model.lam
    if isinstance(model, PoissonFeller):
        if model.alpha == 0.0:
            raise UnsupportedParameterizationError(
                "critical Poisson-sampled Feller has no Wiuf form (delta would be 0)"
            )
        return abs(model.alpha), model.gamma_nu
    if isinstance(model, BernoulliThinned):
        base = model.base
        if isinstance(base, BirthDeath):
            if base.lam == base.mu:
                raise UnsupportedParameterizationError(
                    "thinned critical birth-death has no Wiuf form"
                )
            delta = abs(base.lam - base.mu)
            gamma = delta / max(model.rho * base.lam, base.mu - (1.0 - model.rho) * base.lam)
            return delta, gamma
        # Thinning a Wiuf-form cdf divides F by itself pointwise into the same
        # family: rho F/(1 - (1-rho)F) with F = (e-1)/(e-1+g) is Wiuf(delta, g/rho).
        delta, gamma = to_wiuf_form(base)
        return delta, gamma / model.rho
    raise UnsupportedParameterizationError(f"no Wiuf form for {model!r}")


def symmetric_partner(alpha: float, nu: float) -> tuple[float, float]:
    """The Poisson-sampled Feller process with the same coalescent-time law.

    (alpha, nu) -> (-alpha, nu - alpha) preserves (delta, gamma_nu). A partner
    exists for every subcritical process and for supercritical ones only when
    nu > alpha; raises :class:`NoPartnerError` when 0 < nu <= alpha.
    """
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    if alpha >= nu:
        raise NoPartnerError(
            f"no Poisson-sampled partner exists for alpha={alpha} >= nu={nu}"
        )
    return -alpha, nu - alpha


def feller_prelimit_rates(epsilon: float, alpha: float) -> tuple[float, float]:
    """Leading-order birth/death rates of the epsilon-prelimit of the Feller diffusion.

    Returns (lam, mu) = (eps^{-1}/2 + alpha/2, eps^{-1}/2 - alpha/2); the
    scaled population eps * N_eps(t) converges to the Feller diffusion with
    drift alpha as eps -> 0.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    lam = 0.5 / epsilon + 0.5 * alpha
    mu = 0.5 / epsilon - 0.5 * alpha
    if mu <= 0:
        raise DomainError(f"epsilon={epsilon} too large for alpha={alpha}: mu={mu} <= 0")
    return lam, mu


_SPEC_KINDS = ("bd", "bdsa", "wiuf", "bern", "feller")


def parse_spec(text: str) -> NodeHeightModel:
    """Build a model from the CLI grammar ``kind:key=value,...``.

    Kinds: ``bd:lambda=,mu=``; ``bdsa:lambda=,mu=``; ``wiuf:delta=,gamma=``;
    ``feller:alpha=,nu=``; and ``bern:rho=,of=<kind>,<base keys>`` for a
    Bernoulli-thinned base model. See the CLI documentation for examples.
    """
    kind, fields = split_spec(text)
    return model_from_fields(kind, fields, text)


def split_spec(text: str) -> tuple[str, dict[str, str]]:
    head, _, rest = text.partition(":")
    kind = head.strip().lower()
    if kind not in _SPEC_KINDS:
        raise DomainError(f"unknown model kind {kind!r} in {text!r}; expected one of {_SPEC_KINDS}")
    fields: dict[str, str] = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise DomainError(f"malformed field {item!r} in model spec {text!r}")
            fields[key.strip().lower()] = value.strip()
    return kind, fields


def _take(fields: dict[str, str], key: str, text: str) -> float:
    if key not in fields:
        raise DomainError(f"model spec {text!r} is missing required key {key!r}")
    try:
        return float(fields.pop(key))
    except ValueError as exc:
        raise DomainError(f"non-numeric value for {key!r} in {text!r}") from exc


def model_from_fields(kind: str, fields: dict[str, str], text: str) -> NodeHeightModel:
    fields = dict(fields)
    if kind == "bd":
        model = BirthDeath(_take(fields, "lambda", text), _take(fields, "mu", text))
    elif kind == "bdsa":
        model = BirthDeathSingleAncestor(_take(fields, "lambda", text), _take(fields, "mu", text))
    elif kind == "wiuf":
        model = WiufForm(_take(fields, "delta", text), _take(fields, "gamma", text))
    elif kind == "feller":
        model = PoissonFeller(_take(fields, "alpha", text), _take(fields, "nu", text))
    elif kind == "bern":
        rho = _take(fields, "rho", text)
        base_kind = fields.pop("of", None)
        if base_kind is None:
            raise DomainError(f"bern spec {text!r} needs of=<base kind>")
        base = model_from_fields(base_kind.strip().lower(), fields, text)
        return BernoulliThinned(base, rho)
    else:  # pragma: no cover - guarded by split_spec
        raise DomainError(f"unknown model kind {kind!r}")
    if fields:
        raise DomainError(f"unexpected keys {sorted(fields)} in model spec {text!r}")
    return model
