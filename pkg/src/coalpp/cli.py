"""Command-line interface.

Model specs use the grammar ``kind:key=value,...`` with kinds

* ``bd:lambda=1,mu=2``          birth-death process
* ``bdsa:lambda=3,mu=1``        birth-death conditioned on a single ancestor
* ``wiuf:delta=1,gamma=0.05``   generic two-parameter node-height cdf
* ``feller:alpha=1,nu=2``       Poisson-sampled Feller diffusion (``nu`` may be
  omitted for ``density`` when only the drift is conditioned on)
* ``bern:rho=0.5,of=bd,lambda=1,mu=2``  Bernoulli-thinned base model

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 verification
failure. Every run logs its resolved configuration as one JSON line on
stderr; the default seed comes from ``COALPP_SEED``.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from . import __version__, analytics, moments, sampling, simulate, trees, verify
from .analytics import FellerSetting, FixedStem, RootAtInfinity, UniformPrior
from .errors import CoalppError, DomainError, NumericalError
from .models import WiufForm, model_from_fields, parse_spec, split_spec

EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4


def _default_seed() -> int:
    raw = os.environ.get("COALPP_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise click.UsageError(f"COALPP_SEED must be an integer, got {raw!r}")


def _log_config(command: str, **kwargs) -> None:
    payload = {"command": command}
    payload.update({k: v for k, v in kwargs.items() if v is not None})
    click.echo(json.dumps(payload, default=str), err=True)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _parse_grid(grid: str) -> np.ndarray:
    try:
        lo_s, hi_s, count_s = grid.split(":")
        lo, hi, count = float(lo_s), float(hi_s), int(count_s)
    except ValueError:
        raise click.UsageError(f"--grid must be lo:hi:count, got {grid!r}")
    if count < 1 or not hi > lo:
        raise click.UsageError(f"--grid needs hi > lo and count >= 1, got {grid!r}")
    return np.linspace(lo, hi, count)


def _csv_table(rows, header) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


@click.group()
@click.version_option(__version__)
def main():
    """Coalescent point processes: densities, moment tables, simulators, checks."""


@main.command()
@click.option("--model", "model_spec", required=True, help="model spec, e.g. wiuf:delta=1,gamma=0.5")
@click.option("--t", "stem", type=float, required=True, help="stem age")
@click.option("--x", "x", type=float, default=None, help="observed scaled population (feller only)")
@click.option("--n", type=int, default=None, help="leaf count (generic CPP laws)")
@click.option("--k", type=int, default=None, help="coalescent-time index for the marginal law")
@click.option("--i", "idx_i", type=int, default=None, help="target index for conditional/population laws")
@click.option("--j", "idx_j", type=int, default=None, help="conditioning index (with --i and --s)")
@click.option("--s", "cond_s", type=float, default=None, help="conditioning time T_j = s")
@click.option("--tau", type=float, default=None, help="single evaluation point")
@click.option("--grid", default=None, help="evaluation grid lo:hi:count")
@click.option("--cdf", "want_cdf", is_flag=True, help="emit the cdf instead of the density")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", default=None, help="output path (default stdout)")
def density(model_spec, stem, x, n, k, idx_i, idx_j, cond_s, tau, grid, want_cdf, fmt, out):
    """Evaluate a coalescent-time density or cdf on a point or grid."""
    if (tau is None) == (grid is None):
        raise click.UsageError("exactly one of --tau or --grid is required")
    taus = np.array([tau]) if tau is not None else _parse_grid(grid)
    kind, fields = split_spec(model_spec)
    _log_config(
        "density", model=model_spec, t=stem, x=x, n=n, k=k, i=idx_i, j=idx_j, s=cond_s,
        tau=tau, grid=grid, cdf=want_cdf, format=fmt, out=out,
    )

    if kind == "feller" and "nu" not in fields:
        alpha = float(fields.get("alpha", "nan"))
        if math.isnan(alpha):
            raise click.UsageError("feller spec needs alpha=")
        setting = FellerSetting(alpha, stem, x=x)
        if x is not None:
            if idx_i is not None and idx_j is not None:
                if cond_s is None:
                    raise click.UsageError("--i/--j conditioning needs --s")
                cond_setting = FellerSetting(alpha, stem)  # the conditional law is x-free
                fn = (
                    (lambda v: analytics.feller_cond_cdf_Ti_given_Tj(cond_setting, idx_i, idx_j, cond_s, v))
                    if want_cdf
                    else (lambda v: analytics.feller_cond_Ti_given_Tj(cond_setting, idx_i, idx_j, cond_s, v))
                )
            elif k is not None:
                fn = (
                    (lambda v: analytics.feller_marginal_cdf_Tk(setting, k, v))
                    if want_cdf
                    else (lambda v: analytics.feller_marginal_Tk(setting, k, v))
                )
            else:
                raise click.UsageError("with --x, pass --k or the triple --i/--j/--s")
        elif idx_i is not None:
            fn = (
                (lambda v: analytics.feller_popcoal_cdf(setting, idx_i, v))
                if want_cdf
                else (lambda v: analytics.feller_popcoal_density(setting, idx_i, v))
            )
        elif k is not None and k == 2:
            fn = lambda v: sampling.two_sample_cdf_via_series(alpha, stem, v)
        else:
            raise click.UsageError(
                "feller without --x needs --i (population law) or --k 2 (2-sample cdf)"
            )
    else:
        if x is not None:
            raise click.UsageError("--x applies only to feller:alpha=... specs")
        model = parse_spec(model_spec) if kind != "feller" else model_from_fields(kind, fields, model_spec)
        if idx_i is not None and idx_j is not None:
            if cond_s is None:
                raise click.UsageError("--i/--j conditioning needs --s")
            fn = lambda v: analytics.cond_density_Ti_given_Tj(model, stem, idx_i, idx_j, cond_s, v)
        else:
            if n is None or k is None:
                raise click.UsageError("generic CPP laws need --n and --k")
            fn = (
                (lambda v: analytics.marginal_cdf_Tk(model, stem, n, k, v))
                if want_cdf
                else (lambda v: analytics.marginal_density_Tk(model, stem, n, k, v))
            )

    values = [float(fn(float(v))) for v in taus]
    if fmt == "json":
        _emit(json.dumps({"tau": list(map(float, taus)), "value": values}) + "\n", out)
    else:
        _emit(_csv_table(zip(map(float, taus), values), ("tau", "value")), out)


@main.command("moments")
@click.option("--model", "model_spec", default=None, help="model spec (alternative to --delta/--gamma)")
@click.option("--delta", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--n", type=int, required=True, help="leaf count")
@click.option("--regime", type=click.Choice(["fixed", "unif", "rootinf"]), default="unif")
@click.option("--t", "stem", type=float, default=None, help="stem age (fixed) or horizon (unif)")
@click.option("--kind", type=click.Choice(["waiting", "coalescent"]), default="waiting")
@click.option("--verify", "do_verify", is_flag=True,
              help="cross-check the closed form against the recursion (exit 4 on mismatch)")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", default=None)
def moments_cmd(model_spec, delta, gamma, n, regime, stem, kind, do_verify, fmt, out):
    """Tabulate expected waiting times E[W_k] (or coalescent times E[T_k])."""
    if model_spec is None and (delta is None or gamma is None):
        raise click.UsageError("pass --model or both --delta and --gamma")
    model = parse_spec(model_spec) if model_spec else None
    if model is None and regime == "fixed":
        raise click.UsageError("--regime fixed needs --model (quadrature seeds)")
    if regime == "fixed":
        if stem is None:
            raise click.UsageError("--regime fixed needs --t")
        regime_obj = FixedStem(stem)
    elif regime == "unif":
        regime_obj = UniformPrior(stem if stem is not None else math.inf)
    else:
        regime_obj = RootAtInfinity()
    if model is None:
        model_for_table = WiufForm(delta, gamma)
    else:
        model_for_table = model
    _log_config(
        "moments", model=model_spec, delta=delta, gamma=gamma, n=n, regime=regime,
        t=stem, kind=kind, verify=do_verify, format=fmt, out=out,
    )
    table = moments.waiting_table(n, regime_obj, model=model_for_table, delta=delta, gamma=gamma, kind=kind)
    if do_verify:
        if table.delta is None or table.gamma is None:
            raise click.UsageError("--verify needs a Wiuf-form parameterization")
        rec = moments.unif_waiting_table_recursive(table.delta, table.gamma, n)
        worst = max(
            abs(moments.expected_Wk_unif_closed(table.delta, table.gamma, n, kk) - rec[kk - 1])
            / abs(rec[kk - 1])
            for kk in range(1, n + 1)
        )
        if worst > 1e-9:
            click.echo(f"verification failed: closed-vs-recursion gap {worst:.3e}", err=True)
            sys.exit(EXIT_VERIFICATION)
        click.echo(f"verify ok: max closed-vs-recursion gap {worst:.3e}", err=True)
    _emit(table.to_json() + "\n" if fmt == "json" else table.to_csv(), out)


@main.command("simulate")
@click.option("--model", "model_spec", default=None)
@click.option("--delta", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--n", type=int, default=None, help="leaf count (omit to draw it from the CPP)")
@click.option("--regime", type=click.Choice(["fixed", "unif", "rootinf"]), default="rootinf")
@click.option("--t", "stem", type=float, default=None, help="stem age (fixed regime)")
@click.option("--x", type=float, default=None, help="observed population (feller k-sample)")
@click.option("--replicates", type=int, default=1)
@click.option("--seed", type=int, default=None, help="default from COALPP_SEED, else 0")
@click.option("--summary", is_flag=True, help="emit an empirical E[W_k] table instead of trees")
@click.option("--format", "fmt", type=click.Choice(["newick", "segments"]), default="newick")
@click.option("--stem-display", type=float, default=None,
              help="display truncation depth for infinite-stem segment output")
@click.option("--out", default=None)
def simulate_cmd(model_spec, delta, gamma, n, regime, stem, x, replicates, seed, summary, fmt,
                 stem_display, out):
    """Simulate coalescent trees (Newick stream or plot-segment JSON)."""
    seed = _default_seed() if seed is None else seed
    if model_spec is None:
        if delta is None or gamma is None:
            raise click.UsageError("pass --model or both --delta and --gamma")
        model = WiufForm(delta, gamma)
        kind = "wiuf"
    else:
        kind, fields = split_spec(model_spec)
        if kind == "feller" and x is not None:
            alpha = float(fields.get("alpha", "nan"))
            if stem is None:
                raise click.UsageError("feller k-sample simulation needs --t")
            if n is None or n < 2:
                raise click.UsageError("feller k-sample simulation needs --n >= 2")
            _log_config("simulate", model=model_spec, x=x, t=stem, n=n,
                        replicates=replicates, seed=seed, format=fmt, out=out)
            setting = FellerSetting(alpha, stem, x=x)
            lines = []
            for rep in range(replicates):
                rng = simulate.RngState(seed, rep)
                tree = simulate.simulate_feller_ksample(setting, n, rng)
                lines.append(_render_tree(tree, fmt, stem_display))
            _emit("".join(lines), out)
            return
        model = parse_spec(model_spec)
    _log_config("simulate", model=model_spec, delta=delta, gamma=gamma, n=n, regime=regime,
                t=stem, replicates=replicates, seed=seed, summary=summary, format=fmt, out=out)

    def draw(rep: int) -> trees.CoalescentTree:
        rng = simulate.RngState(seed, rep)
        if regime == "fixed":
            if stem is None:
                raise click.UsageError("--regime fixed needs --t")
            if n is None:
                return simulate.simulate_cpp(model, stem, rng)
            return simulate.simulate_cpp_given_n(model, stem, n, rng)
        if n is None:
            raise click.UsageError("unif/rootinf regimes need --n")
        if regime == "unif":
            return simulate.simulate_unif_prior(model, n, rng)
        return simulate.simulate_root_infinity(model, n, rng)

    if summary:
        if n is None or n < 2:
            raise click.UsageError("--summary needs --n >= 2")
        acc = np.zeros(n + 1)
        for rep in range(replicates):
            tree = draw(rep)
            times = list(tree.times) + [0.0]
            for k in range(2, n + 1):
                acc[k] += times[k - 2] - times[k - 1]
            if math.isfinite(tree.stem_age):
                acc[1] += tree.stem_age - times[0]
        rows = []
        start_k = 1 if regime == "fixed" else 2
        for k in range(start_k, n + 1):
            rows.append((n, k, acc[k] / replicates))
        _emit(_csv_table(rows, ("n", "k", "mean_Wk")), out)
        return
    lines = [_render_tree(draw(rep), fmt, stem_display) for rep in range(replicates)]
    _emit("".join(lines), out)


def _render_tree(tree: trees.CoalescentTree, fmt: str, stem_display: float | None) -> str:
    if fmt == "segments":
        if math.isinf(tree.stem_age) and stem_display is None:
            stem_display = 1.25 * max(tree.heights) if tree.heights else 1.0
        return trees.segments_json(tree, stem_display) + "\n"
    return trees.to_newick(tree) + "\n"


@main.command("verify")
@click.argument("suite", type=click.Choice(sorted(verify.SUITES)))
@click.option("--budget", type=float, default=None, help="Monte Carlo replicate budget")
def verify_cmd(suite, budget):
    """Run an acceptance-criteria suite and report pass/fail per criterion."""
    _log_config("verify", suite=suite, budget=budget)
    results = verify.run_suite(suite, None if budget is None else int(budget))
    failed = False
    for res in results:
        click.echo(res.line())
        failed |= not res.passed
    if failed:
        sys.exit(EXIT_VERIFICATION)


def entrypoint():  # pragma: no cover - thin wrapper
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    except DomainError as exc:
        click.echo(f"usage error: {exc}", err=True)
        sys.exit(2)
    except CoalppError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)


if __name__ == "__main__":  # pragma: no cover
    entrypoint()
