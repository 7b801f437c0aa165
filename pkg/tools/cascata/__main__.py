import logging
from collections.abc import Callable
from pathlib import Path
from typing import Optional

import typer
from rich.logging import RichHandler
from typing_extensions import Annotated

import core.api
from core.cascade.experiments import EmptyEnsembleError
from core.config import ConfigError, load_config, output_root
from core.consts import EXIT_CONFIG_ERROR, EXIT_IO_ERROR, EXIT_NOT_CONVERGED
from core.tomography import ConvergenceError

app = typer.Typer(help='AC-Stark entanglement toolkit: sweeps, spectra and tomography on synthetic data.')

ConfigOption = Annotated[Optional[Path], typer.Option('--config', help='Path to the JSON run configuration')]
OutOption = Annotated[Optional[Path], typer.Option('--out', help='Output root (default: $CASCATA_OUT or ./results)')]
SeedOption = Annotated[Optional[int], typer.Option('--seed', min=0, help='Base seed of every random stream')]
JobsOption = Annotated[int, typer.Option('--jobs', min=1, help='Number of worker processes')]
SetOption = Annotated[Optional[list[str]], typer.Option('--set', help='Override one config leaf: key.path=value')]


@app.callback()
def main(verbose: Annotated[bool, typer.Option('--verbose', help='Log numerical diagnostics')] = False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(message)s',
                        handlers=[RichHandler()],
                        force=True)


def _guarded(action: Callable[[], object]) -> None:
    """Run a command body, mapping its failures to the documented exit codes."""
    try:
        action()
    except ConfigError as e:
        logging.error(str(e))
        raise typer.Exit(EXIT_CONFIG_ERROR)
    except (ConvergenceError, core.api.NotConvergedError, EmptyEnsembleError) as e:
        logging.error(f'Numerical non-convergence: {e}')
        raise typer.Exit(EXIT_NOT_CONVERGED)
    except ValueError as e:
        logging.error(f'Invalid input: {e}')
        raise typer.Exit(EXIT_CONFIG_ERROR)
    except OSError as e:
        logging.error(f'I/O failure: {e}')
        raise typer.Exit(EXIT_IO_ERROR)


def _run(command: Callable[..., Path], config_file: Path | None, out: Path | None, seed: int | None, jobs: int,
         overrides: list[str] | None, **options) -> None:

    def action():
        assignments = list(overrides or [])
        if seed is not None:
            assignments.append(f'seed={seed}')
        config = load_config(config_file, assignments)
        core.api.set_result_dir(output_root(out, config))
        command(config, jobs=jobs, **options)

    _guarded(action)


@app.command()
def sweep_duration(config: ConfigOption = None,
                   out: OutOption = None,
                   seed: SeedOption = None,
                   jobs: JobsOption = 1,
                   overrides: SetOption = None):
    """Concurrence versus pulse duration, tomography round trip and square-pulse fit."""
    _run(core.api.cmd_sweep_duration, config, out, seed, jobs, overrides)


@app.command()
def sweep_power(config: ConfigOption = None,
                out: OutOption = None,
                seed: SeedOption = None,
                jobs: JobsOption = 1,
                overrides: SetOption = None):
    """Concurrence and XX spectral metrics versus pulse area, plus the notch-filter experiment."""
    _run(core.api.cmd_sweep_power, config, out, seed, jobs, overrides)


@app.command()
def spectra(config: ConfigOption = None,
            out: OutOption = None,
            seed: SeedOption = None,
            jobs: JobsOption = 1,
            overrides: SetOption = None):
    """Analyzer-angle spectra of X and XX with splitting and sideband metrics over the duration grid."""
    _run(core.api.cmd_spectra, config, out, seed, jobs, overrides)


@app.command()
def tomography(state: Annotated[str, typer.Argument(help='Source state: phi_plus, werner or cascade')] = 'phi_plus',
               p: Annotated[Optional[float], typer.Option('--p', help='Werner mixing weight')] = None,
               config: ConfigOption = None,
               out: OutOption = None,
               seed: SeedOption = None,
               overrides: SetOption = None):
    """Simulated 36-setting tomography of a source state with MLE reconstruction."""
    if state not in core.api.STATE_SOURCES:
        logging.error(f'Unknown state source "{state}" (choose from {", ".join(core.api.STATE_SOURCES)})')
        raise typer.Exit(EXIT_CONFIG_ERROR)
    overrides = list(overrides or [])
    if p is not None:
        overrides.append(f'tomography.werner_p={p}')
    _run(core.api.cmd_tomography, config, out, seed, 1, overrides, state_source=state)


@app.command()
def validate_config(config: ConfigOption = None, overrides: SetOption = None):
    """Check a configuration and print its hash without running anything."""
    _guarded(lambda: core.api.validate_config(config, overrides))


@app.command()
def replay(run_file: Annotated[Path, typer.Argument(help='run.json of a previous run')],
           out: OutOption = None,
           jobs: JobsOption = 1):
    """Re-execute a recorded run into a new run directory."""

    def action():
        if out is not None:
            core.api.set_result_dir(out)
        core.api.replay(run_file, jobs)

    _guarded(action)


if __name__ == '__main__':
    app()
