"""Command line front end: ``pevcharge generate | run | compare | verify``.

Exit codes: 0 success, 1 infeasible or not converged (outputs are still
written and the reason is flagged), 2 input error. Failures print a JSON
object with ``error`` and ``message`` keys on stderr.
"""

from __future__ import annotations

import functools
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import storage
from .errors import InputError, PevChargeError, SlotError
from .experiment import ALGORITHMS, compare_runs, run_algorithm, write_comparison, write_run
from .scenario import ScenarioConfig, generate_scenario

EXIT_OK, EXIT_FLAGGED, EXIT_INPUT = 0, 1, 2


class Flagged(Exception):
    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))


def _fail(kind: str, message: str, code: int):
    click.echo(storage.dumps({"error": kind, "message": message}), err=True)
    sys.exit(code)


def _root_cause(exc: BaseException) -> BaseException:
    while isinstance(exc, SlotError) and exc.__cause__ is not None:
        exc = exc.__cause__
    return exc


def handled(fn):
    """Map library errors onto exit codes and a JSON error message."""

    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Flagged as exc:
            _fail("Flagged", str(exc), EXIT_FLAGGED)
        except (InputError, click.BadParameter) as exc:
            _fail(type(exc).__name__, str(exc), EXIT_INPUT)
        except PevChargeError as exc:
            cause = _root_cause(exc)
            code = EXIT_INPUT if isinstance(cause, InputError) else EXIT_FLAGGED
            _fail(type(exc).__name__, str(exc), code)

    return inner


def _scenario_overrides(seed, days, penetration) -> dict:
    out = {}
    if seed is not None:
        out["seed"] = seed
    if days is not None:
        out["days"] = days
    if penetration is not None:
        out["penetration"] = penetration
    return out


def _load_config(path) -> dict:
    if path is None:
        return {"scenario": ScenarioConfig(), "online": {}, "solver": {}}
    return storage.read_config(path)


def _build_config(config_path, seed, days, penetration) -> tuple[ScenarioConfig, dict]:
    doc = _load_config(config_path)
    try:
        cfg = replace(doc["scenario"], **_scenario_overrides(seed, days, penetration))
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    return cfg, doc


def _warn_empty(n: int) -> None:
    if n == 0:
        click.echo("warning: the scenario has no vehicles", err=True)


config_opt = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                          help="JSON config (scenario, online, solver sections).")
seed_opt = click.option("--seed", type=int, default=None, help="Override the RNG seed.")
days_opt = click.option("--days", type=click.IntRange(min=1), default=None,
                        help="Override the number of days.")
pen_opt = click.option("--penetration", type=click.FloatRange(0, 1), default=None,
                       help="Override the PEV penetration level.")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.version_option(package_name="artifact")
def main(verbose):
    """Decentralized PEV charging experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_opt
@seed_opt
@days_opt
@pen_opt
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Directory for scenario.json and the CSV traces.")
@handled
def generate(config_path, seed, days, penetration, out):
    """Generate a scenario and write it to OUT."""
    cfg, _ = _build_config(config_path, seed, days, penetration)
    sc = generate_scenario(cfg)
    _warn_empty(sc.n_vehicles)
    meta = storage.save_scenario(sc, out, cfg)
    click.echo(storage.dumps({"out": str(out), "fleet_size": sc.n_vehicles,
                           "strictly_feasible": meta["strictly_feasible"],
                           "epsilon": meta["epsilon"], "fingerprint": meta["fingerprint"]}))


@main.command()
@config_opt
@click.option("--scenario", "scenario_dir", type=click.Path(exists=True, file_okay=False),
              help="Scenario directory written by 'generate' (instead of --config).")
@seed_opt
@days_opt
@pen_opt
@click.option("--algo", type=click.Choice(ALGORITHMS), default="online", show_default=True)
@click.option("--beta", type=float, default=None,
              help="Cost weight; defaults to the reference value rescaled to the feeder size.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--plot/--no-plot", default=False, help="Also render PNG figures.")
@handled
def run(config_path, scenario_dir, seed, days, penetration, algo, beta, out, plot):
    """Run one algorithm and write traces and reports to OUT."""
    if scenario_dir is not None:
        if config_path or seed is not None or days is not None or penetration is not None:
            raise click.BadParameter("--scenario cannot be combined with scenario options")
        sc = storage.load_scenario(scenario_dir)
        doc = {"online": {}, "solver": {}}
        cfg = None
    else:
        cfg, doc = _build_config(config_path, seed, days, penetration)
        sc = generate_scenario(cfg)
    _warn_empty(sc.n_vehicles)
    if beta is not None and not beta > 0:
        raise click.BadParameter("--beta must be > 0")
    result = run_algorithm(sc, algo, beta, online=doc["online"], solver=doc["solver"])
    storage.save_scenario(sc, Path(out) / "scenario", cfg)
    write_run(result, out, plot=plot)
    c = result.cost
    summary = {"algorithm": algo, "out": str(out), "f": c.f, "f_tilde": c.f_tilde,
               "variance": c.variance, "peak": c.peak, "ok": result.ok}
    if result.bound is not None:
        summary.update(cost_bound_ok=result.bound.cost_ok, queue_bound_ok=result.bound.queue_ok)
    click.echo(storage.dumps(summary))
    if result.flags:
        raise Flagged(result.flags)


@main.command()
@click.argument("runs", nargs=-1, type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Write compare.json and compare.csv here.")
@handled
def compare(runs, out):
    """Compare two or more run directories produced on the same scenario."""
    report = compare_runs(list(runs))
    if out:
        write_comparison(report, out)
    click.echo(storage.dumps(report, indent=2))


@main.command()
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Write verify.json here.")
@handled
def verify(out):
    """Run every acceptance property on seeded desk scenarios."""
    from .verification import run_all

    results = run_all(echo=click.echo)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        storage.dump_json([r.__dict__ for r in results], Path(out) / "verify.json")
    failed = [r for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        sys.exit(EXIT_FLAGGED)


if __name__ == "__main__":  # pragma: no cover
    main()
