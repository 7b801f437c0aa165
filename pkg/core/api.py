import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import jsonpickle
import numpy as np
from tabulate import tabulate

from core.cascade.ensemble import MonteCarlo, ensemble_state, montecarlo_coherence, remove_fss_dephasing
from core.cascade.experiments import (notch_filter_experiment, run_points, sweep_duration, sweep_power,
                                      write_sweep_csv)
from core.config import RunConfig, config_from_dict, load_config
from core.consts import BASIS, CONFIG_FILENAME, RUN_FILENAME
from core.fitting import fit_eq1
from core.seeding import derive_seed
from core.spectra import (Spectrum, centroid, mix_branches, sideband_fraction, simulate_branches, spectrum_grid,
                          splitting_amplitude, write_spectra_csv)
from core.states import (TwoPhotonState, concurrence, depolarize, fidelity, make_phi_plus, max_bell_fidelity,
                         multiphoton_correct, purity)
from core.tomography import (concurrence_uncertainty, linear_inversion, log_likelihood, mle_fit, simulate_counts,
                             write_records_csv)
from core.workspace import Workspace, get_workspace

logger = logging.getLogger(__name__)

STATE_SOURCES = ('phi_plus', 'werner', 'cascade')


class NotConvergedError(RuntimeError):
    pass


@dataclass
class RunRequest:
    """What `replay` needs to re-execute a command: its name, resolved config and options."""
    command: str
    config: dict
    options: dict = field(default_factory=dict)


def set_result_dir(result_dir: Path):
    result_dir.mkdir(parents=True, exist_ok=True)
    Workspace.result_dir = result_dir


def _execute(command: str, config: RunConfig, body: Callable[[], dict], **options) -> Path:
    """Run `body` inside a fresh workspace and publish the run directory.

    `body` writes its outputs through `get_workspace()` and returns the seeds it used."""
    logger.info(f'Running {command} (config {config.digest()[:12]})')
    with Workspace(command) as workspace:
        seeds = body()
        workspace.save_json(CONFIG_FILENAME, config.to_dict())
        workspace.save_to_file(jsonpickle.encode(RunRequest(command, config.to_dict(), options), indent=2) + '\n',
                               RUN_FILENAME)
        return workspace.save_as(config.digest(), seeds)


# ------------------------------------------------ Tomography ------------------------------------------------ #


@dataclass(frozen=True)
class TomographyOutcome:
    state: TwoPhotonState
    concurrence: float
    std: float
    corrected: float | None
    log_likelihood: float
    iterations: int


def _reconstruct(config: RunConfig, source: TwoPhotonState, seed: int) -> tuple[TomographyOutcome, list]:
    """Simulated coincidences of `source` (mixed with multiphoton noise when g2 > 0), MLE and bootstrap."""
    tomo = config.tomography
    g2 = config.g2()
    measured = depolarize(source, g2.noise_weight) if g2.noise_weight > 0 else source
    records = simulate_counts(measured, tomo.n_per_setting, derive_seed(seed, 'counts'))
    report = mle_fit(records)
    spread = concurrence_uncertainty(records, tomo.bootstrap, derive_seed(seed, 'bootstrap'))
    corrected = concurrence(multiphoton_correct(report.state, g2)) if g2.noise_weight > 0 else None
    outcome = TomographyOutcome(report.state, concurrence(report.state), spread.std, corrected,
                                log_likelihood(report.state, records), report.iterations)
    return outcome, records


def _tomography_point(config: RunConfig, item: tuple[float, int]) -> TomographyOutcome:
    tau_l, seed = item
    source = ensemble_state(config.qd_params(), config.pulse_params(tau_l=tau_l), config.stark_calibration(),
                            config.quadrature_method())
    return _reconstruct(config, source, seed)[0]


# ---------------------------------------------- Sweep commands ---------------------------------------------- #


def cmd_sweep_duration(config: RunConfig, jobs: int = 1) -> Path:
    """Concurrence versus pulse duration at the configured area, its tomography round trip and square-pulse fit."""

    def body() -> dict:
        workspace = get_workspace()
        durations = config.durations()
        with workspace.timer('sweep'):
            points = sweep_duration(config.qd_params(), config.stark_calibration(), durations,
                                    math.pi * config.pulse.area_over_pi, config.pulse.shape,
                                    config.quadrature_method(), jobs)

        seeds = [derive_seed(config.seed, 'sweep-duration', 'tomography', i) for i in range(len(durations))]
        outcomes = [None] * len(durations)
        if config.tomography.enabled:
            with workspace.timer('tomography'):
                outcomes = run_points(partial(_tomography_point, config), list(zip(durations, seeds)), jobs,
                                      desc='Tomography')

        fit = fit_eq1([p.fit_input() for p in points])
        if not fit.converged:
            raise NotConvergedError(f'square-pulse fit did not converge: {fit.message}')
        logger.info(f'Fit: c0 = {fit.params["c0"]:.4f}, tau_xx = {fit.params["tau_xx"]:.2f} ps '
                    f'(R^2 = {fit.r_squared:.4f})')

        header = ['tau_l_ps', 'C_model', 'C_tomo', 'C_tomo_std']
        corrected = config.g2().noise_weight > 0
        if corrected:
            header.append('C_tomo_corrected')
        rows = []
        for point, outcome in zip(points, outcomes):
            row = [point.value, point.concurrence]
            row += [outcome.concurrence, outcome.std] if outcome else [None, None]
            if corrected:
                row.append(outcome.corrected if outcome else None)
            rows.append(row)
        workspace.save_csv('fig3a_analog.csv', header, rows)
        workspace.save_json('eq1_fit.json', fit.to_dict())
        workspace.save_with('cascade_sweep.csv', partial(write_sweep_csv, points))
        return {'seed': config.seed, 'tomography': seeds if config.tomography.enabled else []}

    return _execute('sweep-duration', config, body)


def _line_metrics(config: RunConfig, tau_l: float, area_over_pi: float, line: str,
                  seed: int) -> tuple[list[Spectrum], dict]:
    """Analyzer-angle spectra of one line and their splitting and sideband metrics."""
    qd, cal = config.qd_params(), config.stark_calibration()
    pulse = config.pulse_params(tau_l=tau_l, area_over_pi=area_over_pi)
    spectra = config.spectra
    grid = spectrum_grid(qd, pulse, cal, line, spectra.grid_step_ueV, spectra.instrument_fwhm)
    branches = simulate_branches(qd, pulse, cal, line, grid.energies, spectra.instrument_fwhm, spectra.n_events,
                                 seed)

    angles = [k * 180 / spectra.n_angles for k in range(spectra.n_angles)]
    series = [mix_branches(branches, grid.energies, line, angle, pulse.pol_angle) for angle in angles]
    window = config.window(line)
    splitting = splitting_amplitude([(s.pol_angle, centroid(s, window, spectra.background)) for s in series])
    parallel = mix_branches(branches, grid.energies, line, pulse.pol_angle, pulse.pol_angle)
    orthogonal = mix_branches(branches, grid.energies, line, pulse.pol_angle + 90, pulse.pol_angle)
    fraction = sideband_fraction(parallel, orthogonal, grid.noise_window)
    return series, {
        'splitting_ueV': splitting.value,
        'splitting_std_ueV': splitting.std,
        'sideband_fraction': fraction,
        'window_ev': window.to_list(),
        'noise_window_ev': grid.noise_window.to_list()
    }


def _power_point(config: RunConfig, item: tuple[float, int]) -> dict:
    area_over_pi, seed = item
    return _line_metrics(config, config.sweeps.power_tau_l, area_over_pi, 'XX', seed)[1]


def cmd_sweep_power(config: RunConfig, jobs: int = 1) -> Path:
    """Concurrence, XX splitting and XX sideband fraction versus pulse area at fixed duration."""

    def body() -> dict:
        workspace = get_workspace()
        sweeps = config.sweeps
        qd, cal = config.qd_params(), config.stark_calibration()
        with workspace.timer('sweep'):
            points = sweep_power(qd, cal, sweeps.power_tau_l, [math.pi * a for a in sweeps.areas_over_pi],
                                 config.pulse.shape, config.quadrature_method(), jobs)

        seeds = [derive_seed(config.seed, 'sweep-power', 'spectra', i) for i in range(len(points))]
        with workspace.timer('spectra'):
            metrics = run_points(partial(_power_point, config), list(zip(sweeps.areas_over_pi, seeds)), jobs,
                                 desc='XX spectra')
        rows = [(area, p.concurrence, m['splitting_ueV'], m['sideband_fraction'])
                for area, p, m in zip(sweeps.areas_over_pi, points, metrics)]
        workspace.save_csv('fig4_analog.csv', ('area_over_pi', 'C_model', 'splitting_xx_ueV', 'sideband_fraction_xx'),
                           rows)
        workspace.save_with('cascade_sweep.csv', partial(write_sweep_csv, points, axis='area_over_pi'))

        notch_seed = derive_seed(config.seed, 'sweep-power', 'notch')
        pulse = config.pulse_params(tau_l=sweeps.power_tau_l, area_over_pi=1.0)
        with workspace.timer('notch'):
            notch = notch_filter_experiment(qd, pulse, cal, config.notch.cutoff_ueV, config.notch.n_events,
                                            notch_seed)
            unfiltered = montecarlo_coherence(qd, pulse, cal, MonteCarlo(config.notch.n_events, notch_seed))
        workspace.save_json(
            'notch_filter.json', {
                'tau_l_ps': sweeps.power_tau_l,
                'area_over_pi': 1.0,
                'cutoff_ueV': config.notch.cutoff_ueV,
                'concurrence_unfiltered': unfiltered.concurrence,
                'concurrence_filtered': notch.concurrence_filtered,
                'retained_fraction': notch.retained_fraction
            })
        return {'seed': config.seed, 'spectra': seeds, 'notch': notch_seed}

    return _execute('sweep-power', config, body)


def _spectra_point(config: RunConfig, item: tuple[float, int]) -> tuple[list[Spectrum], dict]:
    tau_l, seed = item
    spectra, metrics = [], {'tau_l_ps': tau_l}
    for line in ('X', 'XX'):
        series, metrics[line] = _line_metrics(config, tau_l, config.pulse.area_over_pi, line,
                                              derive_seed(seed, line))
        spectra += series
    return spectra, metrics


def cmd_spectra(config: RunConfig, jobs: int = 1) -> Path:
    """Analyzer-angle spectra of both lines over the duration grid, with splitting and sideband metrics."""

    def body() -> dict:
        workspace = get_workspace()
        durations = config.durations()
        seeds = [derive_seed(config.seed, 'spectra', i) for i in range(len(durations))]
        with workspace.timer('spectra'):
            results = run_points(partial(_spectra_point, config), list(zip(durations, seeds)), jobs, desc='Spectra')

        for index, (spectra, _) in enumerate(results):
            filename = f'spectra_{index:02d}_tau_l_{durations[index]:g}ps.csv'
            workspace.save_with(filename, partial(write_spectra_csv, spectra))
        metrics = [m for _, m in results]
        workspace.save_json('metrics.json', {'durations': metrics})
        workspace.save_csv('fig2bc_analog.csv', ('tau_l_ps', 'splitting_x_ueV', 'splitting_xx_ueV',
                                                 'sideband_fraction_x', 'sideband_fraction_xx'),
                           [(m['tau_l_ps'], m['X']['splitting_ueV'], m['XX']['splitting_ueV'],
                             m['X']['sideband_fraction'], m['XX']['sideband_fraction']) for m in metrics])
        return {'seed': config.seed, 'spectra': seeds}

    return _execute('spectra', config, body)


# ---------------------------------------------- Tomography command ------------------------------------------ #


def tomography_source(config: RunConfig, state_source: str) -> TwoPhotonState:
    match state_source:
        case 'phi_plus':
            return make_phi_plus()
        case 'werner':
            return depolarize(make_phi_plus(), 1 - config.tomography.werner_p)
        case 'cascade':
            return ensemble_state(config.qd_params(), config.pulse_params(), config.stark_calibration(),
                                  config.quadrature_method())
        case _:
            raise ValueError(f'state source must be one of {", ".join(STATE_SOURCES)} (got {state_source!r})')


def _matrix_table(matrix: np.ndarray) -> str:
    return tabulate([[label, *row] for label, row in zip(BASIS, matrix)], headers=['', *BASIS], tablefmt='github',
                    floatfmt='.4f')


def cmd_tomography(config: RunConfig, state_source: str = 'phi_plus', jobs: int = 1) -> Path:
    """Counts from a source state, MLE reconstruction, bootstrap concurrence and a markdown report."""

    def body() -> dict:
        workspace = get_workspace()
        source = tomography_source(config, state_source)
        seed = derive_seed(config.seed, 'tomography', state_source)
        with workspace.timer('tomography'):
            outcome, records = _reconstruct(config, source, seed)
        linear = linear_inversion(records)

        workspace.save_to_file(outcome.state.to_json(), 'density_matrix.json')
        workspace.save_to_file(source.to_json(), 'source_density_matrix.json')
        workspace.save_with('coincidences.csv', partial(write_records_csv, records))

        summary = {
            'state_source': state_source,
            'concurrence': outcome.concurrence,
            'concurrence_std': outcome.std,
            'concurrence_source': concurrence(source),
            'concurrence_corrected': outcome.corrected,
            'fidelity_to_source': fidelity(outcome.state, source),
            'bell_fidelity': max_bell_fidelity(outcome.state),
            'purity': purity(outcome.state),
            'log_likelihood': outcome.log_likelihood,
            'mle_iterations': outcome.iterations,
            'linear_inversion_physical': linear.is_physical
        }
        if state_source == 'werner':
            summary['werner_p'] = config.tomography.werner_p
        if state_source == 'cascade':
            without_fss = remove_fss_dephasing(outcome.state, config.qd_params())
            summary['concurrence_fss_corrected'] = concurrence(without_fss)
            summary['bell_fidelity_fss_corrected'] = max_bell_fidelity(without_fss)
        workspace.save_json('tomography.json', summary)

        table = [(key, value) for key, value in summary.items() if value is not None]
        state = outcome.state.matrix
        report = '\n\n'.join([
            f'# Tomography of {state_source}',
            tabulate(table, headers=['quantity', 'value'], tablefmt='github'),
            '## Re(rho)',
            _matrix_table(state.real),
            '## Im(rho)',
            _matrix_table(state.imag),
        ]) + '\n'
        workspace.save_to_file(report, 'report.md')
        logger.info(f'C = {outcome.concurrence:.4f} +- {outcome.std:.4f} (source {concurrence(source):.4f})')
        return {'seed': config.seed, 'tomography': seed}

    return _execute('tomography', config, body, state_source=state_source)


# ------------------------------------------------- Utilities ------------------------------------------------ #

COMMANDS = {
    'sweep-duration': cmd_sweep_duration,
    'sweep-power': cmd_sweep_power,
    'spectra': cmd_spectra,
    'tomography': cmd_tomography
}


def validate_config(config_file: Path | None, overrides: list[str] | None = None) -> RunConfig:
    config = load_config(config_file, overrides)
    logger.info(f'Configuration is valid (sha256 {config.digest()})')
    return config


def replay(run_file: Path, jobs: int = 1) -> Path:
    """Re-execute the command recorded in a run directory's run.json."""
    request = jsonpickle.decode(Path(run_file).read_text(encoding='utf-8'))
    if not isinstance(request, RunRequest) or request.command not in COMMANDS:
        raise ValueError(f'{run_file} is not a run record')
    return COMMANDS[request.command](config_from_dict(request.config), jobs=jobs, **request.options)
