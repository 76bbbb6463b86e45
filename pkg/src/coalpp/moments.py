"""Expected coalescent times and inter-coalescent waiting times.

Three routes are provided and cross-checked by the test suite:

* quadrature -- E_n[T_k | T_1 = t] as a Beta-weighted integral of the inverse
  normalized tail, G(u) = F^{-1}(1 - u);
* recursion -- the triangular recursions in (n, k) for E[T_k] and the waiting
  times W_k = T_k - T_{k+1}, seeded by the k = 2 quadrature row (fixed stem)
  or by the explicit W_1 formula (uniform prior, Wiuf-form models);
* closed form -- E_n^unif[W_k] = (gamma/delta) (1/k) 2F1(n-k+1, 1; n+1; 1-gamma)
  and its root-at-infinity shift, evaluated through ``numerics.hyp2f1_b1``.

The W_1 seed formula is a small difference of huge terms when gamma is near 1
(amplitude |1-gamma|^{-n}), so the recursion route evaluates its seeds and
steps in extended precision (mpmath) and is intended for verification; the
closed form is the production path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import mpmath as mp

from .analytics import FixedStem, RootAtInfinity, UniformPrior, validate_conditioning
from .errors import DomainError
from .models import NodeHeightModel, to_wiuf_form
from .numerics import QuadratureSpec, hyp2f1_b1, integrate

__all__ = [
    "MomentTable",
    "expected_Tk_quadrature",
    "expected_T2_row",
    "expected_Tk_recursive",
    "expected_Wk_recursive",
    "expected_Wk_unif_recursive",
    "expected_W1_unif_wiuf",
    "expected_Wk_unif_closed",
    "expected_Wk_root_infinity",
    "unif_waiting_table_recursive",
    "waiting_table",
]

_SEED_SPEC = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-11, max_subdivisions=400)


@dataclass(frozen=True)
class MomentTable:
    """Expected waiting times E[W_k] or coalescent times E[T_k] for k = 1..n."""

    n: int
    regime: str
    kind: str  # "waiting" | "coalescent"
    values: dict[int, float]
    delta: float | None = None
    gamma: float | None = None
    stem_age: float | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("waiting", "coalescent"):
            raise DomainError(f"kind must be 'waiting' or 'coalescent', got {self.kind!r}")
        if self.kind == "waiting" and any(v < 0 for v in self.values.values()):
            raise DomainError("waiting-time expectations must be nonnegative")
        if self.kind == "coalescent":
            ks = sorted(self.values)
            vals = [self.values[k] for k in ks]
            if any(a <= b for a, b in zip(vals, vals[1:])):
                raise DomainError("coalescent-time expectations must decrease strictly in k")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "k", "value", "regime", "delta", "gamma"])
        fmt = lambda v: "" if v is None else f"{v:.17g}"
        for k in sorted(self.values):
            writer.writerow(
                [self.n, k, f"{self.values[k]:.17g}", self.regime, fmt(self.delta), fmt(self.gamma)]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "regime": self.regime,
                "kind": self.kind,
                "delta": self.delta,
                "gamma": self.gamma,
                "values": {str(k): self.values[k] for k in sorted(self.values)},
            }
        )


# ---------------------------------------------------------------------------
# fixed stem: quadrature and recursions


def expected_Tk_quadrature(
    model: NodeHeightModel,
    t: float,
    n: int,
    k: int,
    spec: QuadratureSpec | None = None,
) -> float:
    """E_n[T_k | T_1 = t] as (n-1)!/((n-k)!(k-2)!) Int_0^1 u^{k-2}(1-u)^{n-k} G(u) du,

    where G inverts u = 1 - F(tau) for the normalized node-height cdf F.
    """
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")
    mass_t = model.cdf(t)
    coeff = math.exp(math.lgamma(n) - math.lgamma(n - k + 1) - math.lgamma(k - 1))

    def integrand(u):
        g = model.quantile((1.0 - u) * mass_t)
        return u ** (k - 2) * (1.0 - u) ** (n - k) * g

    return coeff * integrate(integrand, 0.0, 1.0, spec or _SEED_SPEC)


def expected_T2_row(
    model: NodeHeightModel, t: float, ns, spec: QuadratureSpec | None = None
) -> dict[int, float]:
    """Seed row {m: E_m[T_2 | T_1 = t]} for the recursions; E_1[T_2] := 0."""
    row: dict[int, float] = {}
    for m in ns:
        row[m] = 0.0 if m == 1 else expected_Tk_quadrature(model, t, m, 2, spec)
    return row


def expected_Tk_recursive(
    model: NodeHeightModel, t: float, n: int, k: int, seed_row: dict[int, float] | None = None
) -> float:
    """E_n[T_k | T_1 = t] via the (n, k) triangular recursion,

        E_n[T_k] = (n-1)/(k-2) E_{n-1}[T_{k-1}] - (n-k+1)/(k-2) E_n[T_{k-1}],

    seeded by the quadrature row at k = 2.
    """
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")
    if seed_row is None:
        seed_row = expected_T2_row(model, t, range(n - k + 2, n + 1))
    if k == 2:
        return seed_row[n]
    prev = {m: seed_row[m] for m in range(n - k + 2, n + 1)}
    for j in range(3, k + 1):
        cur = {
            m: ((m - 1) * prev[m - 1] - (m - j + 1) * prev[m]) / (j - 2)
            for m in range(j, n + 1)
            if m - 1 in prev and m in prev
        }
        prev = cur
    return prev[n]


def expected_Wk_recursive(model: NodeHeightModel, t: float, n: int, k: int) -> float:
    """E_n[W_k | T_1 = t] via the waiting-time recursion.

    Boundary row: E_m[W_1] = t - E_m[T_2 | T_1 = t] (with E_1[T_2] = 0); then
    E_n[W_k] = (n-1)/(k-1) E_{n-1}[W_{k-1}] - (n-k+1)/(k-1) E_n[W_{k-1}].
    """
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    seed = expected_T2_row(model, t, range(max(1, n - k + 1), n + 1))
    prev = {m: t - seed[m] for m in seed}
    if k == 1:
        return prev[n]
    for j in range(2, k + 1):
        cur = {}
        for m in range(j, n + 1):
            if m - 1 in prev and m in prev:
                cur[m] = ((m - 1) * prev[m - 1] - (m - j + 1) * prev[m]) / (j - 1)
        prev = cur
    return prev[n]


# ---------------------------------------------------------------------------
# uniform prior on T_1 (Wiuf-form closed forms and recursion)


def expected_W1_unif_wiuf(delta: float, gamma: float, n: int) -> float:
    """E_n^unif[W_1] for a Wiuf-form model under the improper uniform prior:

        -(n/delta) sum_{i=1}^{n-1} (gamma/i)(1-gamma)^{i-n}
        -(n/delta) gamma (1-gamma)^{-n} log gamma,

    with the gamma = 1 limit 1/delta. Warning: for gamma near 1 the two terms
    are huge and cancel; use the closed form or the extended-precision
    recursion there.
    """
    if not (delta > 0 and gamma > 0):
        raise DomainError(f"need delta, gamma > 0, got delta={delta}, gamma={gamma}")
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    if gamma == 1.0:
        return 1.0 / delta
    one_minus = 1.0 - gamma
    acc = sum(gamma / i * one_minus ** (i - n) for i in range(1, n))
    acc += gamma * one_minus ** (-n) * math.log(gamma)
    return -(n / delta) * acc


def expected_Wk_unif_closed(delta: float, gamma: float, n: int, k: int) -> float:
    """E_n^unif[W_k] = (gamma/delta) (1/k) 2F1(n-k+1, 1; n+1; 1-gamma)."""
    if not (delta > 0 and gamma > 0):
        raise DomainError(f"need delta, gamma > 0, got delta={delta}, gamma={gamma}")
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if gamma == 1.0:
        return 1.0 / (delta * k)
    return gamma / delta / k * hyp2f1_b1(n - k + 1, n + 1, 1.0 - gamma)


def expected_Wk_root_infinity(delta: float, gamma: float, n: int, k: int) -> float:
    """E_n[W_k | T_1 = inf] = (gamma/delta) (1/(k-1)) 2F1(n-k+1, 1; n; 1-gamma),

    equal to E_{n-1}^unif[W_{k-1}] by the stem-shift identity; k >= 2.
    """
    if k < 2:
        raise DomainError(f"root-at-infinity waiting times need k >= 2, got {k}")
    if not k <= n:
        raise DomainError(f"need k <= n, got k={k}, n={n}")
    return expected_Wk_unif_closed(delta, gamma, n - 1, k - 1)


def _recursion_dps(gamma: float, n: int) -> int:
    # The W_1 seed cancels |1-gamma|^{-n}-sized terms; scale digits with that.
    if gamma == 1.0:
        return 30
    amp = -mp.log10(abs(1.0 - gamma)) if abs(1.0 - gamma) < 1.0 else mp.mpf(0)
    return 40 + int(math.ceil(n * max(0.0, float(amp))))


def unif_waiting_table_recursive(
    delta: float, gamma: float, n: int, dps: int | None = None
) -> list[float]:
    """[E_n^unif[W_k] for k = 1..n] via the W_1 seeds and the uniform-prior
    recursion E_n[W_k] = (n/k) E_{n-1}[W_{k-1}] - ((n-k+1)/k) E_n[W_{k-1}],

    evaluated in extended precision. This is the verification route for the
    hypergeometric closed form.
    """
    if not (delta > 0 and gamma > 0):
        raise DomainError(f"need delta, gamma > 0, got delta={delta}, gamma={gamma}")
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    with mp.workdps(dps or _recursion_dps(gamma, n)):
        d, g = mp.mpf(delta), mp.mpf(gamma)
        if g == 1:
            w1 = {m: 1 / d for m in range(1, n + 1)}
        else:
            w1 = {}
            for m in range(1, n + 1):
                acc = mp.fsum(g / i * (1 - g) ** (i - m) for i in range(1, m))
                acc += g * (1 - g) ** (-m) * mp.log(g)
                w1[m] = -(mp.mpf(m) / d) * acc
        prev = w1
        out = [float(w1[n])]
        for k in range(2, n + 1):
            cur = {}
            for m in range(k, n + 1):
                cur[m] = (m * prev[m - 1] - (m - k + 1) * prev[m]) / k
            out.append(float(cur[n]))
            prev = cur
    return out


def expected_Wk_unif_recursive(
    model: NodeHeightModel, n: int, k: int, horizon: float = math.inf
) -> float:
    """E_n^unif[W_k] by recursion under a uniform[0, horizon] prior on T_1.

    A finite horizon reduces to the fixed-stem table through the shift
    identity E_n^unif[W_k] = E_{n+1}[W_{k+1} | T_1 = horizon]; the improper
    prior requires a Wiuf-form model and uses the extended-precision seeds.
    """
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if math.isfinite(horizon):
        return expected_Wk_recursive(model, horizon, n + 1, k + 1)
    validate_conditioning(model, UniformPrior(math.inf))
    delta, gamma = to_wiuf_form(model)
    return unif_waiting_table_recursive(delta, gamma, n)[k - 1]


# ---------------------------------------------------------------------------
# table builder shared by the CLI


def waiting_table(
    n: int,
    regime,
    model: NodeHeightModel | None = None,
    delta: float | None = None,
    gamma: float | None = None,
    kind: str = "waiting",
) -> MomentTable:
    """Build a MomentTable under FixedStem / UniformPrior / RootAtInfinity.

    Fixed-stem tables need a model (quadrature seeds); the improper-prior and
    root-at-infinity tables need (delta, gamma), either given directly or
    derived from a Wiuf-form-representable model.
    """
    if model is not None and (delta is None and gamma is None):
        try:
            delta, gamma = to_wiuf_form(model)
        except DomainError:
            delta = gamma = None
    if isinstance(regime, FixedStem):
        if model is None:
            raise DomainError("fixed-stem moment tables require a model")
        waits = {k: expected_Wk_recursive(model, regime.t, n, k) for k in range(1, n + 1)}
        regime_name = f"fixed:t={regime.t:g}"
        stem = regime.t
    elif isinstance(regime, UniformPrior) and math.isinf(regime.horizon):
        if delta is None or gamma is None:
            raise DomainError("uniform-prior tables require (delta, gamma)")
        waits = {k: expected_Wk_unif_closed(delta, gamma, n, k) for k in range(1, n + 1)}
        regime_name = "unif"
        stem = None
    elif isinstance(regime, UniformPrior):
        if model is None:
            raise DomainError("finite-horizon uniform tables require a model")
        waits = {
            k: expected_Wk_recursive(model, regime.horizon, n + 1, k + 1)
            for k in range(1, n + 1)
        }
        regime_name = f"unif:t={regime.horizon:g}"
        stem = regime.horizon
    elif isinstance(regime, RootAtInfinity):
        if delta is None or gamma is None:
            raise DomainError("root-at-infinity tables require (delta, gamma)")
        waits = {k: expected_Wk_root_infinity(delta, gamma, n, k) for k in range(2, n + 1)}
        regime_name = "rootinf"
        stem = None
    else:
        raise DomainError(f"unknown regime {regime!r}")
    if kind == "waiting":
        return MomentTable(n, regime_name, "waiting", waits, delta, gamma, stem)
    if kind != "coalescent":
        raise DomainError(f"kind must be 'waiting' or 'coalescent', got {kind!r}")
    # T_k = sum_{j >= k} W_j with T_{n+1} = 0 (for root-at-infinity the table
    # starts at k = 2 since T_1 = inf).
    coal: dict[int, float] = {}
    acc = 0.0
    for k in sorted(waits, reverse=True):
        acc += waits[k]
        coal[k] = acc
    return MomentTable(n, regime_name, "coalescent", coal, delta, gamma, stem)
