"""Command-line front end: `equiwave <experiment> --config <path> [...]`.

Exit status: 0 on success, 2 on a configuration or validation error,
3 on numeric failure or an exceeded resource cap.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence
import argparse
import logging
import sys
import time

import numpy as np

from . import __version__
from .analytics import gram_matrix, top_eigenvalue, variance_budget
from .config import (
    EXPERIMENTS,
    RunConfig,
    load_config,
    resolve_out_dir,
    validate_config,
)
from .errors import (
    ConfigError,
    DegenerateWindowError,
    EmptyWindowError,
    InvalidArgumentError,
    NumericFailureError,
    ResourceLimitError,
)
from .experiments import (
    SweepSpec,
    build_cover,
    run_amplitude_experiment,
    run_kernel_profile,
    run_moment_point,
    run_moment_sweep,
    run_tail_experiment,
    run_uniform_experiment,
    run_weyl_diagnostics,
    run_worst_case_sweep,
    theorem_regime,
)
from .manifold import BallRegion, ManifoldModel, Point, manifold_from_name
from .report import ReportRecord, Series, config_digest, render_svg, write_report
from .spectral import SpectralWindow, build_window

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

# Dense eigensolve cross-check for worst-case sweeps runs up to this dimension.
DENSE_CHECK_MAX_N = 200


@dataclass
class Outcome:
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    plot: Optional[str] = None


def _plain(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _window(config: RunConfig, m: ManifoldModel) -> SpectralWindow:
    return build_window(m, config.resolved_frequency(), config.width)


def _ball(config: RunConfig, m: ManifoldModel, frequency: float) -> BallRegion:
    return BallRegion(m, Point(*config.center), config.radius_at(frequency))


# --- Experiments --------------------------------------------------------------


def _weyl(config: RunConfig, m: ManifoldModel) -> Outcome:
    rows = run_weyl_diagnostics(m, config.resolved_frequencies())
    columns = ["lambda", "n", "remainder", "pointwise_sup", "ratio", "pointwise_ratio", "band_average"]
    table = [
        [r.frequency, r.count, r.remainder, r.pointwise_sup, r.ratio, r.pointwise_ratio, r.band_average]
        for r in rows
    ]
    plot = None
    if config.plot:
        positive = [r for r in rows if r.frequency > 0.0]
        plot = render_svg(
            f"Weyl remainder on {m.name}",
            [
                Series("band mean |R|/lambda", [r.frequency for r in positive], [r.band_average for r in positive]),
                Series("sup R(lambda,x)/lambda", [r.frequency for r in positive], [abs(r.pointwise_ratio) for r in positive]),
            ],
            x_label="lambda",
            log_x=True,
            log_y=True,
        )
    return Outcome(columns, table, plot=plot)


def _moment_row(config: RunConfig, m: ManifoldModel, threads: int):
    window = _window(config, m)
    ball = _ball(config, m, window.frequency)
    row = run_moment_point(
        window,
        ball,
        config.samples,
        config.seed,
        threads=threads,
        order=config.order,
        gram_cap=config.gram_cap,
    )
    return window, ball, row


def _expectation(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    _, _, row = _moment_row(config, m, threads)
    columns = ["lambda", "n", "W", "r", "e_closed", "e_mc", "e_mc_se", "target", "method", "mc_skipped"]
    table = [[
        row.frequency, row.dimension, row.width, row.radius, row.e_closed,
        row.e_mc, row.e_mc_se, row.target, row.method, row.mc_skipped,
    ]]
    summary = {"relative_error": abs(row.e_closed / row.target - 1.0)}
    return Outcome(columns, table, summary)


def _variance(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window, ball, row = _moment_row(config, m, threads)
    budget = variance_budget(window, ball)
    columns = [
        "lambda", "n", "W", "r", "var_exact", "var_mc", "var_mc_se", "var_approx",
        "relative_gap", "var_ratio", "planck", "annulus", "remainder",
    ]
    table = [[
        row.frequency, row.dimension, row.width, row.radius, row.var_exact, row.var_mc,
        row.var_mc_se, row.var_approx, row.relative_gap, row.var_ratio,
        budget.planck, budget.annulus, budget.remainder,
    ]]
    summary = {"rem": budget.rem, "budget_total": budget.total, "method": row.method}
    return Outcome(columns, table, summary)


def _tail(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window = _window(config, m)
    ball = _ball(config, m, window.frequency)
    report = run_tail_experiment(
        window,
        ball,
        config.samples,
        config.t_grid,
        config.seed,
        threads=threads,
        order=config.order,
        gram_cap=config.gram_cap,
    )
    columns = ["t", "empirical", "levy_bound", "n_samples"]
    table = [
        [float(t), float(e), float(b), report.n_samples]
        for t, e, b in zip(report.t, report.empirical, report.levy_bound)
    ]
    summary = {
        "median": report.median,
        "expectation": report.expectation,
        "mean_mc": report.mean_mc,
        "lipschitz": report.lipschitz,
        "median_gap": abs(report.median - report.expectation),
    }
    plot = None
    if config.plot:
        plot = render_svg(
            "Deviation from the median",
            [Series("empirical", report.t, report.empirical), Series("Levy bound", report.t, report.levy_bound)],
            x_label="t",
        )
    return Outcome(columns, table, summary, plot)


def _uniform(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window = _window(config, m)
    r = config.radius_at(window.frequency)
    cover = build_cover(m, r, delta=config.delta, seed=config.seed)
    report = run_uniform_experiment(
        window,
        cover,
        config.samples,
        config.seed,
        threads=threads,
        order=config.order,
        gram_cap=config.gram_cap,
    )
    columns = ["center_u", "center_v", "deviation_rate"]
    table = [
        [float(u), float(v), float(rate)]
        for (u, v), rate in zip(cover.centers, report.per_ball_rates)
    ]
    summary = {
        "empirical_prob": report.empirical_prob,
        "threshold": report.threshold,
        "target": report.target,
        "n_balls": report.n_balls,
    }
    if window.frequency > 1.0:
        summary["regime"] = asdict(
            theorem_regime(window.frequency, window.width, r, config.delta, m.dimension)
        )
    return Outcome(columns, table, summary)


def _sweep(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    spec = SweepSpec(
        manifold=m,
        frequencies=config.frequencies,
        window=config.window,
        width=config.width if config.width is not None else 1.0,
        beta=config.beta,
        r_scale=config.r_scale,
        r_alpha=config.r_alpha,
        center=Point(*config.center),
        samples=config.samples,
        seed=config.seed,
        degrees=config.degrees,
    )
    rows = run_moment_sweep(spec, threads=threads, order=config.order, gram_cap=config.gram_cap)
    columns = [
        "lambda", "n", "W", "r", "e_closed", "e_mc", "target", "var_exact",
        "var_mc", "var_approx", "var_ratio", "mc_skipped", "error",
    ]
    table = [
        [
            r.frequency, r.dimension, r.width, r.radius, r.e_closed, r.e_mc, r.target,
            r.var_exact, r.var_mc, r.var_approx, r.var_ratio, r.mc_skipped, r.error,
        ]
        for r in rows
    ]
    summary = {"admissible_radius_rule": spec.in_admissible_regime}
    plot = None
    if config.plot:
        plot = render_svg(
            f"Variance ratio on {m.name}",
            [Series("Var/Vol(B)^2", [r.frequency for r in rows], [r.var_ratio for r in rows])],
            x_label="lambda",
            log_x=True,
            log_y=True,
        )
    return Outcome(columns, table, summary, plot)


def _kernel_profile(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window = _window(config, m)
    profile, rows = run_kernel_profile(
        window,
        Point(*config.center),
        config.direction,
        config.max_separation,
        config.profile_samples,
    )
    columns = ["separation", "value", "bound"]
    table = [[row.separation, row.value, row.bound] for row in rows]
    summary = {
        "decay_exponent": profile.decay_exponent,
        "far_constant_ls": profile.far_constant_ls,
        "far_constant_sup": profile.far_constant_sup,
        "near_constant": profile.near_constant,
        "fraction_below_envelope": profile.fraction_below_envelope(window.frequency),
    }
    plot = None
    if config.plot:
        plot = render_svg(
            "Projector kernel profile",
            [
                Series("|E(x,y)|", profile.separations, np.abs(profile.values)),
                Series("envelope", profile.separations, profile.bound_values),
            ],
            x_label="d(x,y)",
        )
    return Outcome(columns, table, summary, plot)


def _sogge(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window = _window(config, m)
    center = Point(*config.center)
    report = run_worst_case_sweep(
        window, config.radii, center, order=config.order, gram_cap=config.gram_cap
    )
    columns = ["radius", "lambda_max", "ratio", "lipschitz", "envelope", "lipschitz_envelope"]
    table = [
        [r.radius, r.lambda_max, r.ratio, r.lipschitz, r.envelope, r.lipschitz_envelope]
        for r in report.rows
    ]
    summary = {"constant": report.constant, "spread": report.spread}
    if window.dimension <= DENSE_CHECK_MAX_N:
        worst = 0.0
        for r in config.radii:
            g = gram_matrix(window, BallRegion(m, center, r), order=config.order)
            dense = float(np.linalg.eigvalsh(g.entries)[-1])
            worst = max(worst, abs(dense - top_eigenvalue(g.entries)))
        summary["dense_max_abs_diff"] = worst
    plot = None
    if config.plot:
        plot = render_svg(
            "Worst-case ball mass",
            [Series("lambda_max / r", [r.radius for r in report.rows], [r.ratio for r in report.rows])],
            x_label="r",
            log_x=True,
            log_y=True,
        )
    return Outcome(columns, table, summary, plot)


def _amplitude(config: RunConfig, m: ManifoldModel, threads: int) -> Outcome:
    window = _window(config, m)
    report = run_amplitude_experiment(
        window, Point(*config.center), config.samples, config.seed, threads=threads
    )
    columns = ["t", "empirical", "pointwise_tail", "plane_tail"]
    table = [
        [float(t), float(e), float(p), float(q)]
        for t, e, p, q in zip(report.t, report.empirical, report.pointwise_tail, report.plane_tail)
    ]
    summary = {
        "s_norm": report.s_norm,
        "sphere_dimension": report.sphere_dimension,
        "ks_pointwise": report.ks_pointwise,
        "ks_plane": report.ks_plane,
    }
    plot = None
    if config.plot:
        plot = render_svg(
            "Amplitude survival",
            [
                Series("empirical", report.t, report.empirical),
                Series("exact", report.t, report.pointwise_tail),
                Series("2-plane", report.t, report.plane_tail),
            ],
            x_label="t",
        )
    return Outcome(columns, table, summary, plot)


RUNNERS: dict[str, Callable[..., Outcome]] = {
    "weyl": lambda config, m, threads: _weyl(config, m),
    "expectation": _expectation,
    "variance": _variance,
    "tail": _tail,
    "uniform": _uniform,
    "sweep": _sweep,
    "kernel-profile": _kernel_profile,
    "sogge": _sogge,
    "amplitude": _amplitude,
}


def run(config: RunConfig, out_dir: Path) -> ReportRecord:
    """Execute the configured experiment and write its artifacts."""
    m = manifold_from_name(config.manifold)
    started = time.perf_counter()
    logger.info("run started: experiment=%s manifold=%s seed=%d", config.experiment, m.name, config.seed)
    outcome = RUNNERS[config.experiment](config, m, config.threads)
    echo = _plain(config.echo())
    record = ReportRecord(
        experiment=config.experiment,
        config=echo,
        columns=outcome.columns,
        rows=_plain(outcome.rows),
        summary=_plain(outcome.summary),
        provenance={
            "seed": config.seed,
            "version": __version__,
            "wall_time_s": time.perf_counter() - started,
            "config_sha256": config_digest(echo),
        },
    )
    write_report(out_dir, record, svg=outcome.plot if config.plot else None)
    return record


# --- Entry -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equiwave",
        description="Random-wave equidistribution experiments on the flat torus and round sphere.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="config file (default: $EQUIWAVE_CONFIG or ./equiwave.conf)")
    parser.add_argument("--out-dir", type=Path, help="directory for CSV/JSON/SVG outputs")
    parser.add_argument("--plot", action="store_true", help="also write an SVG plot")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = load_config(args.config, args.experiment)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.plot:
            overrides["plot"] = True
        if overrides:
            config = replace(config, **overrides)
            validate_config(config)
        run(config, resolve_out_dir(args.out_dir, config))
    except (ConfigError, InvalidArgumentError, EmptyWindowError, DegenerateWindowError) as exc:
        print(f"equiwave: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericFailureError, ResourceLimitError) as exc:
        print(f"equiwave: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK
