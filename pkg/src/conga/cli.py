"""``conga`` command line.

Exit codes: 0 success, 2 input error, 3 numeric or truncation error.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import click
import numpy as np

from . import __version__
from . import io as cio
from .benchmark import PRESETS, BenchmarkPreset, run_benchmark, write_table
from .datagen import CopulaSpec, generate_copula_counts, random_sparse_precision
from .errors import InputError, NumericError, ParameterError
from .posterior import edge_decision, graph_difference
from .sampler import PriorConfig, SamplerConfig, run_chain
from .theta import ThetaSearchConfig, select_theta

log = logging.getLogger("conga")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _sampler_options(f):
    opts = [
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--burn", type=click.IntRange(min=0), default=5000, show_default=True),
        click.option("--keep", type=click.IntRange(min=0), default=5000, show_default=True),
        click.option("--B", "B", type=click.IntRange(min=1), default=100, show_default=True,
                     help="Truncation level of the node conditionals."),
        click.option("--theta", type=float, default=None,
                     help="Transform exponent; selected from the data when omitted."),
        click.option("--level", type=float, default=0.95, show_default=True,
                     help="Credible level for edge decisions."),
        click.option("--nu3", type=float, default=100.0, show_default=True),
        click.option("--gamma-w", type=float, default=5.0, show_default=True),
        click.option("--prior-a", type=float, default=1.0, show_default=True),
        click.option("--prior-b", type=float, default=1.0, show_default=True),
        click.option("--prior-c", type=float, default=10.0, show_default=True),
        click.option("--prior-d", type=float, default=10.0, show_default=True),
        click.option("--pl-weight", type=float, default=0.5, show_default=True,
                     help="Power on the pseudo-likelihood in edge-weight moves (1 = untempered)."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _build_config(o):
    priors = PriorConfig(nu3=o["nu3"], gamma_w=o["gamma_w"], a=o["prior_a"], b=o["prior_b"],
                         c=o["prior_c"], d=o["prior_d"])
    sampler = SamplerConfig(n_burn=o["burn"], n_keep=o["keep"], B=o["B"], pl_weight=o["pl_weight"])
    if not 0 < o["level"] < 1:
        raise ParameterError("--level must lie in (0, 1)")
    if o["theta"] is not None and not o["theta"] > 0:
        raise ParameterError("--theta must be positive")
    return priors, sampler


@click.group()
@click.version_option(__version__, prog_name="conga")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Count graphical models with DP random effects."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    """Console entry point; returns (and exits with) the process status."""
    try:
        rv = cli.main(args=argv, prog_name="conga", standalone_mode=False)
        code = rv if isinstance(rv, int) else 0
    except click.exceptions.Exit as exc:
        code = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        code = EXIT_INPUT
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        code = 1
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        code = EXIT_INPUT
    except NumericError as exc:
        click.echo(f"numeric error: {exc}", err=True)
        code = EXIT_NUMERIC
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        code = EXIT_INPUT
    sys.exit(code)


# -- fit ---------------------------------------------------------------------

_FIT_KEYS = ("seed", "burn", "keep", "B", "theta", "level", "nu3", "gamma_w",
             "prior_a", "prior_b", "prior_c", "prior_d", "pl_weight")


@cli.command()
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Counts CSV (rows = observations).")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Rerun with the settings recorded in a previous manifest.")
@_sampler_options
@click.pass_context
def fit(ctx, data, out, manifest_path, **opts):
    """Select theta, run the sampler and write the graph estimate."""
    if manifest_path:
        recorded = cio.read_json(manifest_path)
        try:
            rec = recorded["options"]
        except (KeyError, TypeError):
            raise ParameterError(f"{manifest_path} is not a fit manifest") from None
        for key in _FIT_KEYS:
            src = ctx.get_parameter_source(key)
            if src in (None, click.core.ParameterSource.DEFAULT) and key in rec:
                opts[key] = rec[key]
        data = data or recorded.get("data")
    if not data:
        raise ParameterError("--data is required (or a manifest naming it)")
    counts, header = cio.read_counts(data)
    priors, scfg = _build_config(opts)

    t0 = time.perf_counter()
    selection = None
    if opts["theta"] is None:
        selection = select_theta(counts)
        theta = selection.theta
    else:
        theta = float(opts["theta"])
    res = run_chain(counts, priors, theta, seed=opts["seed"], config=scfg)
    est = edge_decision(res.samples, opts["level"]) if res.samples.n_draws >= 2 else None
    wall = time.perf_counter() - t0

    _ensure_dir(out)
    cio.write_samples(os.path.join(out, "samples.csv"), res.samples)
    if est is not None:
        cio.write_json(os.path.join(out, "graph.json"), cio.graph_to_dict(est, header))
        cio.write_edge_list(os.path.join(out, "edges.csv"), est)
    else:
        log.warning("fewer than 2 retained draws; no graph written")
    options = {k: opts[k] for k in _FIT_KEYS}
    config = {"priors": asdict(priors), "sampler": asdict(scfg), "level": opts["level"],
              "theta": theta, "seed": opts["seed"]}
    manifest = {
        "schema_version": cio.SCHEMA_VERSION,
        "command": "fit",
        "version": __version__,
        "data": os.path.abspath(data),
        "data_sha256": _sha256_file(data),
        "shape": list(counts.shape),
        "seed": opts["seed"],
        "options": options,
        "config": config,
        "config_hash": _config_hash(config),
        "theta": {"value": theta, "selected": selection is not None,
                  "degenerate": bool(selection.degenerate) if selection else False},
        "acceptance": {k: res.summary[k] for k in
                       ("lambda_accept_rate", "beta_accept_rate", "repairs", "nonfinite")},
        "n_edges": len(est.edges()) if est is not None else None,
        "wall_time_s": round(wall, 3),
    }
    cio.write_json(os.path.join(out, "manifest.json"), manifest)
    click.echo(f"theta={theta:.6g} edges={manifest['n_edges']} -> {out}")


# -- simulate ----------------------------------------------------------------

@cli.command()
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--P", "P", type=click.IntRange(min=2), default=None)
@click.option("--n", "n", type=click.IntRange(min=1), default=None)
@click.option("--edge-prob", type=float, default=None)
@click.option("--magnitude", type=float, default=None)
@click.option("--mean", "marginal_mean", type=float, default=None, help="Poisson marginal mean.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the counts.")
@click.option("--precision-seed", type=int, default=None,
              help="Seed for the precision matrix (defaults to --seed).")
@click.option("--identity", is_flag=True, help="Use the identity precision (no edges).")
def simulate(out, preset, P, n, edge_prob, magnitude, marginal_mean, seed, precision_seed, identity):
    """Generate Gaussian-copula counts with a known graph."""
    base = PRESETS[preset] if preset else BenchmarkPreset(
        P=P or 10, edge_prob=0.2, magnitude=0.3, marginal_mean=1.0)
    spec = BenchmarkPreset(
        P=P if P is not None else base.P,
        n=n if n is not None else base.n,
        edge_prob=edge_prob if edge_prob is not None else base.edge_prob,
        magnitude=magnitude if magnitude is not None else base.magnitude,
        marginal_mean=marginal_mean if marginal_mean is not None else base.marginal_mean,
    )
    pseed = seed if precision_seed is None else precision_seed
    if identity:
        omega = np.eye(spec.P)
    else:
        omega, _ = random_sparse_precision(spec.P, spec.edge_prob, spec.magnitude, seed=pseed)
    sim = generate_copula_counts(CopulaSpec(spec.P, spec.n, omega, spec.marginal_mean, seed=seed))
    _ensure_dir(out)
    cio.write_counts(os.path.join(out, "data.csv"), sim.counts)
    desc = asdict(spec)
    desc.update(identity=identity, precision_seed=pseed)
    cio.write_json(os.path.join(out, "truth.json"), cio.truth_to_dict(sim.edges, desc, seed))
    click.echo(f"{spec.n}x{spec.P} counts, {len(sim.edges)} true edges -> {out}")


# -- benchmark ---------------------------------------------------------------

@cli.command()
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="p10", show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@_sampler_options
def benchmark(preset, reps, out, workers, **opts):
    """Replicated simulate -> fit -> evaluate; writes table.csv and summary.json."""
    priors, scfg = _build_config(opts)

    def report(row):
        click.echo(f"replication {row.replication}: {row.status} p1={row.p1:.4g} p2={row.p2:.4g}",
                   err=True)

    result = run_benchmark(preset, reps, opts["seed"], scfg, priors, opts["level"],
                           opts["theta"], workers, progress=report)
    _ensure_dir(out)
    write_table(os.path.join(out, "table.csv"), result)
    summary = result.summary()
    summary.update(base_seed=opts["seed"], sampler=asdict(scfg), priors=asdict(priors),
                   level=opts["level"])
    cio.write_json(os.path.join(out, "summary.json"), summary)
    click.echo(f"mean p1={result.mean_p1:.4f} mean p2={result.mean_p2:.4f} "
               f"failed={result.n_failed}/{reps}")


# -- compare -----------------------------------------------------------------

@cli.command()
@click.argument("samples_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("samples_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Path of the differences JSON.")
def compare(samples_a, samples_b, level, out):
    """Flag edges whose weight differs between two fitted conditions."""
    a, b = cio.read_samples(samples_a), cio.read_samples(samples_b)
    diff = graph_difference(a, b, level)
    cio.write_json(out, cio.difference_to_dict(diff, a.P))
    click.echo(f"flagged {int(diff.flagged.sum())}/{diff.flagged.size}, "
               f"similarity {diff.similarity:.2f}%")


# -- theta -------------------------------------------------------------------

@cli.command()
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--lower", type=float, default=0.05, show_default=True)
@click.option("--upper", type=float, default=8.0, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--grid-points", type=click.IntRange(min=3), default=200, show_default=True)
def theta(data, out, lower, upper, tolerance, grid_points):
    """Covariance-matching choice of the transform exponent."""
    counts, _ = cio.read_counts(data)
    cfg = ThetaSearchConfig(lower, upper, tolerance, grid_points)
    sel = select_theta(counts, cfg)
    _ensure_dir(out)
    with open(os.path.join(out, "theta_curve.csv"), "w") as fh:
        fh.write("theta,objective\n")
        for t, v in zip(sel.grid, sel.curve):
            fh.write(f"{t!r},{v!r}\n")
    cio.write_json(os.path.join(out, "theta.json"), {
        "schema_version": cio.SCHEMA_VERSION,
        "theta": sel.theta, "objective": sel.objective, "degenerate": sel.degenerate,
        "interior_minima": sel.interior_minima, "search": asdict(cfg),
    })
    click.echo(f"theta={sel.theta:.6g} objective={sel.objective:.6g}"
               + (" (degenerate)" if sel.degenerate else ""))


if __name__ == "__main__":
    main()
