from pathlib import Path

from invoke.collection import Collection
from invoke.tasks import task

import core.api
from core.config import load_config

core.api.set_result_dir(Path.cwd() / 'results')


def _config(config, overrides, seed):
    overrides = list(overrides or [])
    if seed is not None:
        overrides.append(f'seed={seed}')
    return load_config(Path(config) if config else None, overrides)


@task(iterable=['overrides'])
def sweep_duration(c, config=None, overrides=None, seed=None, n_jobs=1):
    core.api.cmd_sweep_duration(_config(config, overrides, seed), jobs=int(n_jobs))


@task(iterable=['overrides'])
def sweep_power(c, config=None, overrides=None, seed=None, n_jobs=1):
    core.api.cmd_sweep_power(_config(config, overrides, seed), jobs=int(n_jobs))


@task(iterable=['overrides'])
def spectra(c, config=None, overrides=None, seed=None, n_jobs=1):
    core.api.cmd_spectra(_config(config, overrides, seed), jobs=int(n_jobs))


@task(iterable=['overrides'])
def tomography(c, state='phi_plus', config=None, overrides=None, seed=None):
    core.api.cmd_tomography(_config(config, overrides, seed), state_source=state)


@task
def replay(c, run_file, n_jobs=1):
    core.api.replay(Path(run_file), int(n_jobs))


@task
def test(c, quick=False):
    c.run('python3 -m pytest -q' + (' -m "not slow"' if quick else ''))


namespace = Collection(sweep_duration, sweep_power, spectra, tomography, replay, test)

# display output when calling by `inv` command
namespace.configure({'run': {'hide': False, 'echo': True}})
