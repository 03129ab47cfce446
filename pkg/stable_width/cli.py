"""Command line interface for stable_width."""
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import typer
from rich.console import Console
from rich.table import Table
from rich.text import Text

from . import logger
from .config import BUILTIN_DEFAULTS, Config, ExperimentConfig, load_experiment, resolve_threads
from .counterexample import CSV_HEADER as COUNTEREXAMPLE_HEADER
from .counterexample import CounterexampleConfig, divergence_experiment
from .exceptions import ConfigError, DomainError, NumericalError, ToleranceError
from .limit_theory import LimitLaw, multivariate_recursion, sigma_recursion
from .reports import write_csv, write_json
from .selftest import run_selftest
from .stats import CSV_HEADER as SWEEP_HEADER
from .stats import ConvergenceReport, convergence_sweep
from .streams import RandomStream

EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def format_help(text: str) -> str:
    """Format help text with proper word wrapping."""
    return str(Text.from_markup(text).plain)


app = typer.Typer(
    help=format_help("""\
Finite-width MLPs with heavy-tailed weights and their stable infinite-width limits.\n
[bold]Description:[/bold]\n
\tSimulates multi-layer perceptrons with regularly varying weights, computes the\n
\tpredicted symmetric alpha-stable limit of every layer and checks the simulated\n
\tpre-activations against it. Every run is driven by a JSON experiment file.\n
[bold]Commands:[/bold]\n
\t[cyan]predict[/cyan]          Compute the limit law of each layer\n
\t[cyan]verify[/cyan]           Compare simulated layers with the limit across widths\n
\t[cyan]counterexample[/cyan]   Run the ReLU/Pareto divergence experiment\n
\t[cyan]sweep[/cyan]            Run verify over a grid of alpha, activation and widths\n
\t[cyan]selftest[/cyan]         Run the closed-form checks\n
\t[cyan]config[/cyan]           Manage user defaults\n
[bold]Exit codes:[/bold]\n
\t0 pass, 1 tolerance failure, 2 configuration error, 3 numerical error\n
[bold]Quick Start:[/bold]\n
\t$ stable-width predict --config configs/tanh_a15.json\n
\t$ stable-width verify --config configs/tanh_a15.json --threads 8\n
For detailed help on any command, use:\n
\t$ stable-width COMMAND --help\n""")
)
console = Console()

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="Experiment file (JSON, schema_version 1)")
SEED_OPTION = typer.Option(None, "--seed", help="Seed in [0, 2**64), overrides the file")
THREADS_OPTION = typer.Option(None, "--threads", "-t", help="Worker threads (fallback: STABLE_WIDTH_THREADS)")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Output directory")
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Show debug output")


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map package errors onto the documented exit codes."""
    try:
        yield
    except ToleranceError as e:
        console.print(f"[red]FAIL:[/red] {e}")
        raise typer.Exit(EXIT_TOLERANCE)
    except (ConfigError, DomainError) as e:
        console.print(f"[red]Configuration error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG)
    except NumericalError as e:
        console.print(f"[red]Numerical error:[/red] {e}")
        raise typer.Exit(EXIT_NUMERIC)


def _load(config: Optional[Path], seed: Optional[int], user: Config) -> ExperimentConfig:
    if config is None:
        raise ConfigError("--config is required")
    exp = load_experiment(config, user)
    return exp.with_seed(seed) if seed is not None else exp


def _out_dir(out: Optional[Path], exp: Optional[ExperimentConfig], user: Config) -> Path:
    if out is not None:
        return out
    if exp is not None and "out_dir" in exp.output:
        return Path(exp.output["out_dir"])
    return Path(user.get_default("out_dir"))


def _limit(exp: ExperimentConfig, stream: RandomStream) -> Dict[str, LimitLaw]:
    laws = {"univariate": sigma_recursion(exp.network, exp.inputs[0], exp.mc_size, stream)}
    if exp.k > 1:
        laws["multivariate"] = multivariate_recursion(exp.network, exp.inputs, exp.mc_size, stream, exp.atoms_budget)
    return laws


def _verify(exp: ExperimentConfig, threads: int) -> ConvergenceReport:
    if not exp.widths:
        raise ConfigError("data.widths: verify needs at least one width")
    return convergence_sweep(
        exp.network,
        exp.inputs,
        exp.layer,
        exp.widths,
        exp.replicates,
        rng=RandomStream(exp.seed),
        n_mc=exp.mc_size,
        tolerances=exp.tolerances,
        threads=threads,
        bootstrap=exp.bootstrap,
    )


def _report_table(report: ConvergenceReport, title: str) -> Table:
    table = Table(title=title)
    table.add_column("Widths", style="cyan")
    table.add_column("sup |ecf - cf|", justify="right")
    table.add_column("L2", justify="right")
    table.add_column("alpha hat", justify="right")
    table.add_column("sigma hat", justify="right")
    table.add_column("independence", justify="right")
    for r in report.results:
        table.add_row(
            r.label,
            f"{r.sup:.4f}",
            f"{r.l2:.4f}",
            "-" if r.alpha_hat is None else f"{r.alpha_hat.alpha:.3f}",
            "-" if r.sigma_hat is None else f"{r.sigma_hat.sigma:.4g}",
            "-" if r.independence is None else f"{r.independence:.4f}",
        )
    return table


def _print_flags(flags: Dict[str, bool]) -> None:
    for name, ok in sorted(flags.items()):
        console.print(f"  {name}: {'[green]pass[/green]' if ok else '[red]fail[/red]'}")


@app.command()
def predict(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Compute the predicted limit law of every layer\n
    \tRuns the scale recursion at the first input and, with two or more inputs,\n
    \tthe multivariate recursion. Writes PREFIX_limit.json.\n
    \nExamples:\n
    \t$ stable-width predict --config configs/tanh_a15.json\n
    \t$ stable-width predict -c configs/multi_input.json --seed 7 --out results"""
    logger.set_verbose(verbose)
    with _exit_codes():
        user = Config()
        resolve_threads(threads, user)
        exp = _load(config, seed, user)
        out_dir = _out_dir(out, exp, user)
        with logger.run_log(out_dir / f"{exp.prefix}_predict.log"):
            laws = _limit(exp, RandomStream(exp.seed).child("limit"))
        table = Table(title="Predicted limits")
        table.add_column("Layer", style="cyan")
        table.add_column("alpha", justify="right")
        table.add_column("sigma", justify="right")
        table.add_column("95% CI", justify="right")
        for ell, lim in sorted(laws["univariate"].layers.items()):
            lo, hi = lim.sigma_ci
            table.add_row(str(ell), f"{lim.alpha:g}", f"{lim.sigma:.6g}", f"[{lo:.6g}, {hi:.6g}]")
        console.print(table)
        path = out_dir / f"{exp.prefix}_limit.json"
        write_json(path, {key: law.to_dict() for key, law in laws.items()}, exp.raw)
        console.print(f"[green]Wrote[/green] {path}")


@app.command()
def verify(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Compare simulated pre-activations with the predicted limit\n
    \tSimulates the configured layer at each width and measures the distance of\n
    \tits empirical characteristic function from the limit. Writes\n
    \tPREFIX_verify.json and PREFIX_verify.csv. Exits 1 when a check fails.\n
    \nExamples:\n
    \t$ stable-width verify --config configs/tanh_a15.json --threads 8"""
    logger.set_verbose(verbose)
    with _exit_codes():
        user = Config()
        n_threads = resolve_threads(threads, user)
        exp = _load(config, seed, user)
        out_dir = _out_dir(out, exp, user)
        with logger.run_log(out_dir / f"{exp.prefix}_verify.log"):
            report = _verify(exp, n_threads)
        console.print(_report_table(report, f"Layer {report.layer}, {report.m} replicates"))
        _print_flags(report.flags)
        write_json(out_dir / f"{exp.prefix}_verify.json", report.to_dict(), exp.raw)
        report.write_csv(out_dir / f"{exp.prefix}_verify.csv", exp.raw)
        if not report.passed:
            failed = ", ".join(name for name, ok in sorted(report.flags.items()) if not ok)
            raise ToleranceError(f"checks failed: {failed}")
        console.print("[green]PASS[/green]")


@app.command()
def counterexample(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Run the ReLU/Pareto divergence experiment\n
    \tSimulates the second layer under the standard and the log-corrected\n
    \tscaling. Without --config the built-in setup is used (alpha 1.5,\n
    \twidths 1e3, 1e4, 1e5). Writes PREFIX_counterexample.csv and .json.\n
    \nExamples:\n
    \t$ stable-width counterexample --seed 0 --threads 8\n
    \t$ stable-width counterexample -c configs/counterexample.json"""
    logger.set_verbose(verbose)
    with _exit_codes():
        user = Config()
        n_threads = resolve_threads(threads, user)
        exp = _load(config, seed, user) if config is not None else None
        if exp is not None and exp.counterexample is not None:
            cex = exp.counterexample
        else:
            cex = CounterexampleConfig(seed=exp.seed if exp is not None else (seed or 0))
        prefix = exp.prefix if exp is not None else "counterexample"
        out_dir = _out_dir(out, exp, user)
        with logger.run_log(out_dir / f"{prefix}_counterexample.log"):
            report = divergence_experiment(cex, threads=n_threads)
        table = Table(title=f"ReLU/Pareto, alpha = {cex.alpha:g}")
        for column in COUNTEREXAMPLE_HEADER:
            table.add_column(column, justify="right")
        for row in report.rows:
            table.add_row(str(row.width), row.scaling_mode, f"{row.median_abs:.4g}", f"{row.sigma_hat:.4g}")
        console.print(table)
        _print_flags(report.flags)
        for note in report.notes:
            console.print(f"[yellow]{note}[/yellow]")
        hashed = exp.raw if exp is not None else cex.to_dict()
        write_json(out_dir / f"{prefix}_counterexample.json", report.to_dict(), hashed)
        report.write_csv(out_dir / f"{prefix}_counterexample.csv", hashed)
        if not report.passed:
            raise ToleranceError("no growth of the naive scale across widths")


@app.command()
def sweep(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    threads: Optional[int] = THREADS_OPTION,
    out: Optional[Path] = OUT_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Run verify over a parameter grid\n
    \tThe config's sweep block lists values for alpha, activation and widths;\n
    \tevery combination runs with its own seed derived from the file seed. The\n
    \tper-point CSVs are concatenated into PREFIX_sweep.csv.\n
    \nExamples:\n
    \t$ stable-width sweep --config configs/sweep_alpha.json"""
    logger.set_verbose(verbose)
    with _exit_codes():
        user = Config()
        n_threads = resolve_threads(threads, user)
        exp = _load(config, seed, user)
        out_dir = _out_dir(out, exp, user)
        points = exp.sweep_points()
        root = RandomStream(exp.seed)
        blocks: List[Dict[str, Any]] = []
        rows: List[List[Any]] = []
        with logger.run_log(out_dir / f"{exp.prefix}_sweep.log"):
            for idx, (params, point) in enumerate(points):
                point = point.with_seed(root.child("sweep", idx).derive_seed())
                label = " ".join(f"{key}={_compact(value)}" for key, value in sorted(params.items()))
                logger.get_logger().info(f"sweep point {idx + 1}/{len(points)}: {label} (seed {point.seed})")
                report = _verify(point, n_threads)
                console.print(_report_table(report, f"Point {idx}: {label}"))
                _print_flags(report.flags)
                blocks.append({"point": idx, "params": params, "seed": point.seed, "report": report.to_dict()})
                rows.extend([idx, point.seed, label] + row for row in report.csv_rows())
        write_json(out_dir / f"{exp.prefix}_sweep.json", {"points": blocks}, exp.raw)
        write_csv(out_dir / f"{exp.prefix}_sweep.csv", ("point", "seed", "params") + SWEEP_HEADER, rows, exp.raw)
        failed = [str(b["point"]) for b in blocks if not b["report"]["passed"]]
        if failed:
            raise ToleranceError(f"sweep points failed: {', '.join(failed)}")
        console.print("[green]PASS[/green]")


def _compact(value: Any) -> str:
    if isinstance(value, dict):
        params = ",".join(f"{p:g}" for p in value.get("params", []))
        return f"{value.get('kind')}({params})" if params else str(value.get("kind"))
    if isinstance(value, list):
        return "/".join(_compact(v) for v in value)
    return f"{value:g}" if isinstance(value, float) else str(value)


@app.command()
def selftest(verbose: bool = VERBOSE_OPTION):
    """Run the closed-form checks\n
    \tEvaluates exactly known values (constants, tails, estimators on\n
    \tdeterministic inputs). Exits 1 if any check fails.\n
    \nExamples:\n
    \t$ stable-width selftest"""
    logger.set_verbose(verbose)
    results = run_selftest()
    table = Table(title="Self-test")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for r in results:
        table.add_row(r.name, "[green]ok[/green]" if r.ok else "[red]FAIL[/red]", r.detail)
    console.print(table)
    failed = sum(not r.ok for r in results)
    if failed:
        console.print(f"[red]{failed} of {len(results)} checks failed[/red]")
        raise typer.Exit(EXIT_TOLERANCE)
    console.print(f"[green]All {len(results)} checks passed[/green]")


@app.command()
def config(
    action: str = typer.Argument(
        ...,
        help=format_help("Action: [cyan]show[/cyan], [cyan]config-path[/cyan], [cyan]set-default[/cyan], [cyan]remove-default[/cyan]"),
    ),
    key: Optional[str] = typer.Option(None, "--key", "-k", help="threads, out_dir, mc_size, replicates or tolerance"),
    value: Optional[str] = typer.Option(None, "--value", help="Value for set-default"),
):
    """Manage user defaults\n
    \tDefaults live in ~/.stable_width/config.toml and apply when neither a flag\n
    \tnor the experiment file sets a value.\n
    \nExamples:\n
    \t$ stable-width config show\n
    \t$ stable-width config set-default --key threads --value 8\n
    \t$ stable-width config remove-default --key threads"""
    with _exit_codes():
        cfg = Config()
        if action == "config-path":
            console.print(f"[bold]Configuration file:[/bold] {cfg.config_file}")
            if not cfg.config_file.exists():
                console.print("[yellow]Config file does not exist yet. It will be created when you set a default.[/yellow]")
            return

        if action == "show":
            table = Table(title="Defaults")
            table.add_column("Key", style="cyan")
            table.add_column("Value")
            table.add_column("Source", style="dim")
            user_defaults = cfg.defaults
            for name in sorted(user_defaults) + sorted(set(BUILTIN_DEFAULTS) - set(user_defaults)):
                table.add_row(name, str(cfg.get_default(name)), "user" if name in user_defaults else "built-in")
            console.print(table)
            return

        if action == "set-default":
            if key is None or value is None:
                raise ConfigError("set-default needs --key and --value")
            stored = cfg.set_default(key, value)
            console.print(f"[green]Set default:[/green] {key} = {stored}")
            return

        if action == "remove-default":
            if key is None:
                raise ConfigError("remove-default needs --key")
            if not cfg.remove_default(key):
                raise ConfigError(f"default '{key}' is not set")
            console.print(f"[green]Removed default:[/green] {key}")
            return

        raise ConfigError(f"Invalid action: {action}. Use --help to see available actions.")


def main():
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
