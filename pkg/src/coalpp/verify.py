"""Acceptance checks: exact values, route-equivalence oracles, Monte Carlo.

Each ``ac*`` function runs one criterion end to end and returns a
:class:`CheckResult`; the CLI ``verify`` command and the acceptance test
module both drive these. Checks are deterministic given their seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import analytics, moments, sampling, simulate
from .analytics import FellerSetting
from .errors import NoPartnerError
from .models import (
    BernoulliThinned,
    BirthDeath,
    PoissonFeller,
    WiufForm,
    feller_prelimit_rates,
    symmetric_partner,
    to_wiuf_form,
)
from .numerics import QuadratureSpec, integrate

__all__ = ["CheckResult", "run_suite", "SUITES", "ALL_CHECKS"]

_ONE_SAMPLE_KS_CRIT = 1.63  # sqrt(N)-scaled critical value at the 1% level


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:6s} {status}  [{self.seconds:6.1f}s]  {self.detail}"


def _timed(name, budget, fn):
    start = time.perf_counter()
    passed, detail = fn()
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        passed = False
        detail += f"; runtime {elapsed:.1f}s exceeded budget {budget}s"
    return CheckResult(name, passed, detail, elapsed)


# ---------------------------------------------------------------------------
# AC-1 / AC-2: hypergeometric closed form vs recursion, special values


def ac1_closed_vs_recursion() -> CheckResult:
    def body():
        worst = 0.0
        for gamma in (0.05, 0.5, 0.999, 2.0, 1000.0):
            for delta in (0.5, 1.0, 3.0):
                for n in range(1, 21):
                    rec = moments.unif_waiting_table_recursive(delta, gamma, n)
                    for k in range(1, n + 1):
                        closed = moments.expected_Wk_unif_closed(delta, gamma, n, k)
                        rel = abs(closed - rec[k - 1]) / abs(closed)
                        worst = max(worst, rel)
        return worst <= 1e-9, f"max relative closed-vs-recursion gap {worst:.2e} (tol 1e-9)"

    return _timed("AC-1", 5.0, body)


def ac2_special_values() -> CheckResult:
    def body():
        worst_exact = 0.0
        for delta in (0.5, 1.0, 3.0):
            for n in (1, 5, 20):
                for k in range(1, n + 1):
                    got = moments.expected_Wk_unif_closed(delta, 1.0, n, k)
                    worst_exact = max(worst_exact, abs(got - 1.0 / (delta * k)))
        ok_exact = worst_exact <= 1e-12

        # gamma -> 0 asymptote. For k >= 2 the first-order form is accurate at
        # gamma = 1e-6; for k = 1 its relative error is H_{n-1}/log(1/gamma),
        # so the 1% check applies at n = 1 and the n > 1 cases are instead
        # verified to converge monotonically toward ratio 1.
        gamma = 1e-6
        worst_ratio = 0.0
        for n in (2, 5, 20):
            for k in range(2, n + 1):
                closed = moments.expected_Wk_unif_closed(1.0, gamma, n, k)
                asym = n * gamma / (k * (k - 1))
                worst_ratio = max(worst_ratio, abs(closed / asym - 1.0))
        w1 = moments.expected_Wk_unif_closed(1.0, gamma, 1, 1)
        worst_ratio = max(worst_ratio, abs(w1 / (-gamma * math.log(gamma)) - 1.0))
        ok_ratio = worst_ratio <= 0.01

        ok_converge = True
        for n in (5, 20):
            gaps = []
            for g in (1e-4, 1e-6, 1e-8):
                closed = moments.expected_Wk_unif_closed(1.0, g, n, 1)
                gaps.append(abs(closed / (-n * g * math.log(g)) - 1.0))
            ok_converge &= gaps[0] > gaps[1] > gaps[2]
        ok = ok_exact and ok_ratio and ok_converge
        return ok, (
            f"gamma=1 max |E[W_k]-1/(dk)| {worst_exact:.2e} (tol 1e-12); "
            f"gamma->0 max ratio gap {worst_ratio:.2e} (tol 1e-2); "
            f"k=1 ratio converging: {ok_converge}"
        )

    return _timed("AC-2", None, body)


# ---------------------------------------------------------------------------
# AC-3: Saunders pmfs and the 2-sample series


def ac3_saunders() -> CheckResult:
    def body():
        worst_root = 0.0
        for n in range(2, 51):
            upper = 4000
            i = np.arange(n, upper + 1, dtype=float)
            logp = (
                math.log(n) + math.log(n - 1)
                + gammaln(i) + gammaln(i - 1) - gammaln(i - n + 1) - gammaln(i + n)
            )
            partial = float(np.exp(logp).sum())
            worst_root = max(worst_root, abs(partial - sampling.saunders_root_cdf(n, upper)))
            # analytic tail bound: cdf exceeds 1 - 1e-10 at a closed-form index
            far = int(math.ceil(1.2e10 * n * (n - 1))) + n
            if sampling.saunders_root_cdf(n, far) < 1.0 - 1e-10:
                return False, f"root tail bound violated at n={n}"
        worst_step = 0.0
        for k in (2, 5, 17, 49):
            for j in (k + 1, k + 7, 50):
                if j <= k:
                    continue
                total = sum(sampling.saunders_step_pmf(k, j, i) for i in range(k, j))
                worst_step = max(worst_step, abs(total - 1.0))

        worst_series = 0.0
        count = 0
        for alpha in (-1.5, -0.5, 0.0, 0.7, 2.0):
            for t in (0.5, 1.0):
                for frac in (0.05, 0.3, 0.5, 0.7, 0.95):
                    tau = frac * t
                    series = sampling.two_sample_cdf_via_series(alpha, t, tau)
                    closed = sampling.ksample_joint_cdf_feller(alpha, t, 2, [tau])
                    worst_series = max(worst_series, abs(series - closed))
                    count += 1
        ok = worst_root <= 1e-10 and worst_step <= 1e-10 and worst_series <= 1e-8
        return ok, (
            f"root pmf-vs-cdf gap {worst_root:.2e}, step sum gap {worst_step:.2e} "
            f"(tol 1e-10); series-vs-closed gap {worst_series:.2e} over {count} "
            "points (tol 1e-8)"
        )

    return _timed("AC-3", 10.0, body)


# ---------------------------------------------------------------------------
# AC-4: k-sample route triangle


def _bernoulli_joint_integrand(alpha, t, taus):
    # (k-1)! * prod_j F_nu(tau_j)/F_nu(t) as a function of the Poisson rate,
    # the Bernoulli-route side of the mix. The tree being thinned is the
    # single-ancestor-conditioned one, whose sampled law depends on the drift
    # only through |alpha| (partner symmetry), so the |alpha| representative
    # model supplies the cdf ratio.
    k = len(taus) + 1
    factor = math.factorial(k - 1)

    def integrand(nu_arr):
        out = np.empty_like(np.asarray(nu_arr, dtype=float))
        for idx, nu in np.ndenumerate(np.asarray(nu_arr, dtype=float)):
            m = PoissonFeller(abs(alpha), float(nu))
            prod = factor
            ft = m.cdf(t)
            for tau in taus:
                prod *= m.cdf(tau) / ft
            out[idx] = prod
        return out

    return integrand


def ac4_ksample_triangle() -> CheckResult:
    def body():
        t = 1.0
        grids = {
            2: [(0.5,), (0.2,), (0.85,)],
            3: [(0.8, 0.5), (0.6, 0.2), (0.9, 0.45)],
            4: [(0.8, 0.5, 0.3), (0.9, 0.6, 0.2), (0.7, 0.5, 0.15)],
        }
        worst = 0.0
        for k, tau_sets in grids.items():
            for alpha in (0.0, 1.0, -1.0):
                delta = abs(alpha)
                for taus in tau_sets:
                    closed = sampling.ksample_joint_cdf_feller(alpha, t, k, list(taus))
                    mixed = sampling.ksample_mix(
                        _bernoulli_joint_integrand(alpha, t, list(taus)), k, t, delta
                    )
                    worst = max(worst, abs(closed - mixed))
        exact = sampling.ksample_joint_cdf_feller(0.0, 1.0, 2, [0.5])
        gap_exact = abs(exact - (-2.0 + 4.0 * math.log(2.0)))
        # near-corner expansion check for k=3: both routes stay consistent
        closed = sampling.ksample_joint_cdf_feller(0.0, t, 3, [0.999, 0.998])
        mixed = sampling.ksample_mix(
            _bernoulli_joint_integrand(0.0, t, [0.999, 0.998]), 3, t, 0.0
        )
        corner = abs(closed - mixed)
        ok = worst <= 1e-7 and gap_exact <= 1e-10 and corner <= 1e-6
        return ok, (
            f"max closed-vs-quadrature gap {worst:.2e} (tol 1e-7); "
            f"k=2 exact-value gap {gap_exact:.2e} (tol 1e-10); corner gap {corner:.2e}"
        )

    return _timed("AC-4", 30.0, body)


# ---------------------------------------------------------------------------
# AC-5: Monte Carlo vs closed forms


def _ks_distance(samples: np.ndarray, cdf_values: np.ndarray) -> float:
    n = len(samples)
    order = np.argsort(samples)
    c = cdf_values[order]
    hi = np.max(np.arange(1, n + 1) / n - c)
    lo = np.max(c - np.arange(0, n) / n)
    return float(max(hi, lo))


def ac5_montecarlo(seed: int = 20240915, budget: int = 100_000) -> CheckResult:
    def body():
        details = []
        ok = True

        # (a) leaf-count pmf of simulate_cpp is shifted-geometric
        model = WiufForm(1.0, 1.0)
        t = 1.0
        p = model.cdf(t)
        gen = simulate.RngState(seed, 1).generator()
        counts = np.array([simulate.simulate_cpp(model, t, gen).n for _ in range(budget)])
        max_n = 1
        while budget * p ** (max_n - 1) * (1 - p) >= 10:
            max_n += 1
        observed = np.array(
            [np.sum(counts == v) for v in range(1, max_n)] + [np.sum(counts >= max_n)]
        )
        pmf = np.array([p ** (v - 1) * (1 - p) for v in range(1, max_n)] + [p ** (max_n - 1)])
        expected = budget * pmf
        chi2 = float(np.sum((observed - expected) ** 2 / expected))
        crit = float(stats.chi2.ppf(0.999, len(observed) - 1))
        ok_a = chi2 < crit
        ok &= ok_a
        details.append(f"(a) chi2 {chi2:.1f} < {crit:.1f}: {ok_a}")

        # (b) T_k marginals of simulate_cpp_given_n
        model_b = WiufForm(1.0, 0.5)
        t_b, n_b = 1.5, 6
        gen = simulate.RngState(seed, 2).generator()
        trees = [simulate.simulate_cpp_given_n(model_b, t_b, n_b, gen) for _ in range(budget)]
        crit_b = _ONE_SAMPLE_KS_CRIT / math.sqrt(budget)
        for k in (2, 4, 6):
            tk = np.array([tr.coalescent_time(k) for tr in trees])
            cdf_vals = np.array(
                [analytics.marginal_cdf_Tk(model_b, t_b, n_b, k, v) for v in np.sort(tk)]
            )
            d = _ks_distance(np.sort(tk), cdf_vals)
            ok_k = d < crit_b
            ok &= ok_k
            details.append(f"(b) k={k} KS {d:.4f} < {crit_b:.4f}: {ok_k}")

        # (c) BD-oracle reconstructed node heights match the birth-death cdf
        for case_idx, (lam, mu) in enumerate(((1.0, 1.0), (2.0, 1.0), (1.0, 2.0))):
            bd = BirthDeath(lam, mu)
            gen = simulate.RngState(seed, 3 + case_idx).generator()
            heights = []
            collected = 0
            while collected < budget:
                flat, off, cnt, _ = simulate.simulate_bd_batch(lam, mu, 1.0, gen, 200_000)
                heights.append(flat)
                collected += len(flat)
            h = np.concatenate(heights)[:budget]
            h.sort()
            cdf_vals = np.asarray(bd.normalized_cdf(1.0, h))
            d = _ks_distance(h, cdf_vals)
            crit_c = _ONE_SAMPLE_KS_CRIT / math.sqrt(len(h))
            ok_c = d < crit_c
            ok &= ok_c
            details.append(f"(c) lam={lam},mu={mu} KS {d:.4f} < {crit_c:.4f}: {ok_c}")

        return ok, "; ".join(details)

    return _timed("AC-5", 120.0, body)


# ---------------------------------------------------------------------------
# AC-6: Feller-limit convergence of the prelimit oracle


def _thinned_prelimit_heights(lam, mu, t, rho, target, gen) -> np.ndarray:
    out: list[np.ndarray] = []
    total = 0
    while total < target:
        flat, off, cnt, _ = simulate.simulate_bd_batch(lam, mu, t, gen, 200_000)
        for r in np.flatnonzero(cnt >= 2):
            m = int(cnt[r])
            keep = np.flatnonzero(gen.random(m) < rho)
            if keep.size >= 2:
                induced = simulate.induced_subtree_heights(flat[off[r]: off[r + 1]], keep)
                out.append(induced)
                total += induced.size
    return np.concatenate(out)[:target]


def ac6_feller_limit(seed: int = 20240916) -> CheckResult:
    def body():
        nu, t = 3.0, 1.0
        eps_grid = (0.1, 0.03, 0.01)
        targets = (10_000, 30_000, 100_000)
        details = []
        ok = True
        for alpha in (0.0, 1.0):
            target_model = PoissonFeller(alpha, nu)
            dists = []
            for stream, (eps, n_target) in enumerate(zip(eps_grid, targets)):
                lam, mu = feller_prelimit_rates(eps, alpha)
                rho = 2.0 * nu * eps
                gen = simulate.RngState(seed, 10 * int(alpha) + stream).generator()
                h = _thinned_prelimit_heights(lam, mu, t, rho, n_target, gen)
                h.sort()
                cdf_vals = np.asarray(target_model.normalized_cdf(t, h))
                dists.append(_ks_distance(h, cdf_vals))
            monotone = dists[0] > dists[1] > dists[2]
            final_ok = dists[2] < 0.01
            ok &= monotone and final_ok
            details.append(
                f"alpha={alpha}: KS {dists[0]:.4f} > {dists[1]:.4f} > {dists[2]:.4f} "
                f"(monotone {monotone}), final < 0.01: {final_ok}"
            )
        # at alpha = 0 the thinned prelimit law equals the Poisson-Feller law
        # identically (rho * lam = nu exactly), so also pin the identity
        lam, mu = feller_prelimit_rates(0.01, 0.0)
        thinned = BernoulliThinned(BirthDeath(lam, mu), 2.0 * nu * 0.01)
        grid = np.linspace(1e-3, t, 57)
        gap = float(
            np.max(
                np.abs(
                    np.asarray(thinned.normalized_cdf(t, grid))
                    - np.asarray(PoissonFeller(0.0, nu).normalized_cdf(t, grid))
                )
            )
        )
        ok &= gap <= 1e-12
        details.append(f"alpha=0 prelimit identity gap {gap:.1e} (tol 1e-12)")
        return ok, "; ".join(details)

    return _timed("AC-6", 180.0, body)


# ---------------------------------------------------------------------------
# AC-7: Theorem 1/2 normalization and alpha -> -alpha symmetry


def ac7_normalization_symmetry() -> CheckResult:
    def body():
        spec = QuadratureSpec(abs_tol=1e-10, rel_tol=1e-9, max_subdivisions=400)
        t = 1.0
        worst = 0.0
        for alpha in (0.0, 1.0, -1.0):
            for x in (0.5, 2.0):
                setting = FellerSetting(alpha, t, x=x)
                for k in (2, 3, 6):
                    total = integrate(
                        np.vectorize(lambda tau: analytics.feller_marginal_Tk(setting, k, tau)),
                        0.0, t, spec,
                    )
                    worst = max(worst, abs(total - 1.0))
            setting = FellerSetting(alpha, t)
            for (i, j) in ((2, 3), (2, 4), (3, 5)):
                s = 0.3 * t
                total = integrate(
                    np.vectorize(
                        lambda tau: analytics.feller_cond_Ti_given_Tj(setting, i, j, s, tau)
                    ),
                    s, t, spec,
                )
                worst = max(worst, abs(total - 1.0))
        ok_norm = worst <= 1e-7

        # exact symmetry: every Feller formula sees only |alpha|
        sym_ok = True
        for alpha in (0.7, 1.3):
            plus_x = FellerSetting(alpha, t, x=1.2)
            minus_x = FellerSetting(-alpha, t, x=1.2)
            plus = FellerSetting(alpha, t)
            minus = FellerSetting(-alpha, t)
            for tau in (0.2, 0.5, 0.9):
                sym_ok &= analytics.feller_marginal_Tk(plus_x, 3, tau) == analytics.feller_marginal_Tk(minus_x, 3, tau)
                sym_ok &= analytics.feller_joint_density(plus_x, 3, [0.8, tau * 0.7]) == analytics.feller_joint_density(minus_x, 3, [0.8, tau * 0.7])
                sym_ok &= analytics.feller_cond_Ti_given_Tj(plus, 2, 4, 0.1, tau) == analytics.feller_cond_Ti_given_Tj(minus, 2, 4, 0.1, tau)
                sym_ok &= analytics.feller_popcoal_cdf(plus, 4, tau) == analytics.feller_popcoal_cdf(minus, 4, tau)
                sym_ok &= sampling.ksample_joint_cdf_feller(alpha, t, 2, [tau]) == sampling.ksample_joint_cdf_feller(-alpha, t, 2, [tau])
        return ok_norm and sym_ok, (
            f"max |integral - 1| {worst:.2e} (tol 1e-7); exact alpha sign symmetry: {sym_ok}"
        )

    return _timed("AC-7", None, body)


# ---------------------------------------------------------------------------
# AC-8: sampling symmetry corollary


def ac8_partner_symmetry(seed: int = 20240917) -> CheckResult:
    def body():
        gen = simulate.RngState(seed, 0).generator()
        n_pairs = 0
        while n_pairs < 100:
            a_int = int(gen.integers(-96, 97))
            if a_int == 0:
                continue
            alpha = a_int / 32.0
            nu = (max(a_int, 0) + int(gen.integers(1, 129))) / 32.0
            partner = symmetric_partner(alpha, nu)
            direct = to_wiuf_form(PoissonFeller(alpha, nu))
            mirrored = to_wiuf_form(PoissonFeller(*partner))
            if direct != mirrored:
                return False, f"wiuf-form mismatch at alpha={alpha}, nu={nu}: {direct} vs {mirrored}"
            back = symmetric_partner(*partner)
            if back != (alpha, nu):
                return False, f"involution failed at alpha={alpha}, nu={nu}"
            n_pairs += 1
        n_err = 0
        for _ in range(50):
            nu = int(gen.integers(1, 64)) / 32.0
            alpha = nu + int(gen.integers(0, 64)) / 32.0
            try:
                symmetric_partner(alpha, nu)
            except NoPartnerError:
                n_err += 1
        ok = n_err == 50
        return ok, f"100 dyadic pairs bit-identical; no-partner raised {n_err}/50 times"

    return _timed("AC-8", None, body)


# ---------------------------------------------------------------------------
# AC-9: Yule-transform simulator vs order-statistic simulator


def ac9_yule_equivalence(seed: int = 20240918, budget: int = 100_000) -> CheckResult:
    def body():
        n = 20
        details = []
        ok = True
        ratios = {}
        for idx, gamma in enumerate((0.05, 1.0, 1000.0)):
            gen_a = simulate.RngState(seed, 2 * idx).generator()
            gen_b = simulate.RngState(seed, 2 * idx + 1).generator()
            model = WiufForm(1.0, gamma)
            t2_a = np.empty(budget)
            t2_b = np.empty(budget)
            ratio_acc = 0.0
            for r in range(budget):
                tree_a = simulate.simulate_yule_transform(1.0, gamma, n, gen_a)
                tree_b = simulate.simulate_root_infinity(model, n, gen_b)
                t2_a[r] = tree_a.times[0]
                t2_b[r] = tree_b.times[0]
                if r < 2000:
                    ratio_acc += tree_b.times[0] / tree_b.times[-1]
            ratios[gamma] = ratio_acc / 2000
            res = stats.ks_2samp(t2_a, t2_b, method="asymp")
            ok_g = res.pvalue > 0.01
            ok &= ok_g
            details.append(f"gamma={gamma}: 2-sample KS p={res.pvalue:.3f} > 0.01: {ok_g}")
        ordered = ratios[0.05] > ratios[1.0] > ratios[1000.0]
        ok &= ordered
        details.append(
            "mean T2/T20 ordered across regimes "
            f"({ratios[0.05]:.1f} > {ratios[1.0]:.1f} > {ratios[1000.0]:.1f}): {ordered}"
        )
        return ok, "; ".join(details)

    return _timed("AC-9", None, body)


ALL_CHECKS = {
    "AC-1": ac1_closed_vs_recursion,
    "AC-2": ac2_special_values,
    "AC-3": ac3_saunders,
    "AC-4": ac4_ksample_triangle,
    "AC-5": ac5_montecarlo,
    "AC-6": ac6_feller_limit,
    "AC-7": ac7_normalization_symmetry,
    "AC-8": ac8_partner_symmetry,
    "AC-9": ac9_yule_equivalence,
}

SUITES = {
    "moments": ("AC-1", "AC-2"),
    "ksample": ("AC-3", "AC-4"),
    "montecarlo": ("AC-5", "AC-6", "AC-7", "AC-8"),
    "yule": ("AC-9",),
    "all": tuple(ALL_CHECKS),
}


def run_suite(suite: str, budget: int | None = None) -> list[CheckResult]:
    """Run a named suite; ``budget`` overrides the Monte Carlo sample counts."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    results = []
    for name in SUITES[suite]:
        fn = ALL_CHECKS[name]
        if budget is not None and name in ("AC-5", "AC-9"):
            results.append(fn(budget=int(budget)))
        else:
            results.append(fn())
    return results
