import dataclasses
import hashlib
import json
import logging
import math
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from core.cascade.ensemble import Quadrature
from core.cascade.model import PULSE_SHAPES, PulseParams, QdParams, StarkCalibration
from core.consts import (BINDING_ENERGY_BAND, DEFAULT_INSTRUMENT_FWHM, DEFAULT_RESULT_DIR, DEFAULT_S_CAL,
                         DEFAULT_TAU_CAL, DEFAULT_TBP, MIN_MONTE_CARLO_SAMPLES, N_PREPARATION_NODES, N_WAITING_NODES,
                         OUTPUT_ENV_VAR)
from core.spectra import AnalysisWindow
from core.states import G2Pair
from core.units import bandwidth_to_duration, tpe_bandwidth_ok
from core.workspace import json_text

logger = logging.getLogger(__name__)


class ConfigError(ValueError):

    def __init__(self, problems: list[str]):
        super().__init__('invalid configuration:\n' + '\n'.join(f'  {p}' for p in problems))
        self.problems = problems


@dataclass(frozen=True)
class QdSection:
    tau_xx: float = 35.0
    tau_x: float = 53.0
    fss: float = 0.8
    e_x_line: float = 1.58860
    e_xx_line: float = 1.58420
    purcell: float = 1.0
    binding_band_ueV: tuple[float, float] = BINDING_ENERGY_BAND


@dataclass(frozen=True)
class PulseSection:
    tau_l: float = 20.0
    area_over_pi: float = 1.0
    shape: str = 'gaussian'
    pol_angle: float = 0.0
    tbp: float = DEFAULT_TBP


@dataclass(frozen=True)
class StarkSection:
    s_cal: float = DEFAULT_S_CAL
    tau_cal: float = DEFAULT_TAU_CAL


@dataclass(frozen=True)
class QuadratureSection:
    n_prep: int = N_PREPARATION_NODES
    n_wait: int = N_WAITING_NODES


@dataclass(frozen=True)
class TomographySection:
    enabled: bool = True
    n_per_setting: float = 1e5
    bootstrap: int = 100
    g2_x: float = 0.0
    g2_xx: float = 0.0
    werner_p: float = 0.8


@dataclass(frozen=True)
class SpectraSection:
    grid_step_ueV: float = 2.0
    instrument_fwhm: float = DEFAULT_INSTRUMENT_FWHM
    n_events: int = 100_000
    n_angles: int = 12
    window_x: tuple[float, float] = (1.5882, 1.5890)
    window_xx: tuple[float, float] = (1.5835, 1.5846)
    background: float = 0.0


@dataclass(frozen=True)
class SweepsSection:
    durations: tuple[float, ...] = (1.3, 2.5, 5.0, 10.0, 15.0, 20.0)
    bandwidths_ueV: tuple[float, ...] = ()
    areas_over_pi: tuple[float, ...] = (0.0, 0.5, 0.7, 1.0, 1.5, 2.0)
    power_tau_l: float = 20.0


@dataclass(frozen=True)
class NotchSection:
    cutoff_ueV: float = 10.0
    n_events: int = 200_000


@dataclass(frozen=True)
class RunConfig:
    qd: QdSection = field(default_factory=QdSection)
    pulse: PulseSection = field(default_factory=PulseSection)
    stark: StarkSection = field(default_factory=StarkSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    tomography: TomographySection = field(default_factory=TomographySection)
    spectra: SpectraSection = field(default_factory=SpectraSection)
    sweeps: SweepsSection = field(default_factory=SweepsSection)
    notch: NotchSection = field(default_factory=NotchSection)
    seed: int = 1
    output_dir: str | None = None

    def qd_params(self) -> QdParams:
        q = self.qd
        return QdParams(q.tau_xx, q.tau_x, q.fss, q.e_x_line, q.e_xx_line, q.purcell)

    def pulse_params(self, tau_l: float | None = None, area_over_pi: float | None = None) -> PulseParams:
        p = self.pulse
        return PulseParams(p.tau_l if tau_l is None else tau_l,
                           math.pi * (p.area_over_pi if area_over_pi is None else area_over_pi), p.shape, p.pol_angle)

    def stark_calibration(self) -> StarkCalibration:
        return StarkCalibration(self.stark.s_cal, self.stark.tau_cal)

    def quadrature_method(self) -> Quadrature:
        return Quadrature(self.quadrature.n_prep, self.quadrature.n_wait)

    def g2(self) -> G2Pair:
        return G2Pair(self.tomography.g2_x, self.tomography.g2_xx)

    def durations(self) -> list[float]:
        """Sweep durations in ps; bandwidths, when given, are converted with the pulse TBP."""
        if self.sweeps.bandwidths_ueV:
            return [bandwidth_to_duration(b, self.pulse.tbp) for b in self.sweeps.bandwidths_ueV]
        return list(self.sweeps.durations)

    def window(self, line: str) -> AnalysisWindow:
        return AnalysisWindow(*(self.spectra.window_x if line == 'X' else self.spectra.window_xx))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json_text(self.to_dict())

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()


# ------------------------------------------------ Loading --------------------------------------------------- #


def _coerce(value, annotation, path: str, problems: list[str]):
    origin = typing.get_origin(annotation)
    if dataclasses.is_dataclass(annotation):
        return _build(annotation, value, path, problems)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            problems.append(f'{path}: expected a list (got {value!r})')
            return None
        item_type = typing.get_args(annotation)[0]
        return tuple(_coerce(v, item_type, f'{path}[{i}]', problems) for i, v in enumerate(value))
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        annotation = next(a for a in typing.get_args(annotation) if a is not type(None))
    if annotation is bool:
        if not isinstance(value, bool):
            problems.append(f'{path}: expected true or false (got {value!r})')
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            problems.append(f'{path}: expected an integer (got {value!r})')
        return value
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f'{path}: expected a number (got {value!r})')
            return value
        return float(value)
    if annotation is str and not isinstance(value, str):
        problems.append(f'{path}: expected a string (got {value!r})')
    return value


def _build(cls, data, path: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f'{path or "config"}: expected an object (got {data!r})')
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f'{path + "." if path else ""}{key}: unknown key')
    values = {}
    for name in names & set(data):
        values[name] = _coerce(data[name], hints[name], f'{path + "." if path else ""}{name}', problems)
    return cls(**values)


def parse_override(assignment: str) -> tuple[list[str], object]:
    """Split `a.b.c=value`; the value is JSON when it parses, a plain string otherwise."""
    key, sep, raw = assignment.partition('=')
    if not sep or not key:
        raise ConfigError([f'{assignment}: overrides must look like key.path=value'])
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split('.'), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    data = json.loads(json.dumps(data))
    for assignment in overrides:
        keys, value = parse_override(assignment)
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError([f'{".".join(keys)}: {key} is not a section'])
        node[keys[-1]] = value
    return data


# ---------------------------------------------- Validation -------------------------------------------------- #


def validate(config: RunConfig) -> list[str]:
    """Every physically invalid field, as `path: message`."""
    problems = []

    def check(condition: bool, path: str, message: str) -> None:
        if not condition:
            problems.append(f'{path}: {message}')

    def finite(value) -> bool:
        return isinstance(value, (int, float)) and math.isfinite(value)

    qd = config.qd
    check(finite(qd.tau_xx) and qd.tau_xx > 0, 'qd.tau_xx', 'lifetime must be positive')
    check(finite(qd.tau_x) and qd.tau_x > 0, 'qd.tau_x', 'lifetime must be positive')
    check(finite(qd.fss) and qd.fss >= 0, 'qd.fss', 'fine structure splitting must be non-negative')
    check(finite(qd.purcell) and qd.purcell > 0, 'qd.purcell', 'must be positive')
    band = qd.binding_band_ueV
    if len(band) != 2 or not band[0] < band[1]:
        problems.append('qd.binding_band_ueV: expected [lo, hi] with lo < hi')
    elif qd.e_xx_line >= qd.e_x_line:
        problems.append('qd.e_xx_line: the XX line must lie below the X line')
    else:
        binding = (qd.e_x_line - qd.e_xx_line) * 1e6
        check(band[0] <= binding <= band[1], 'qd.e_xx_line',
              f'binding energy {binding:.0f} ueV outside [{band[0]:g}, {band[1]:g}] ueV')

    pulse = config.pulse
    check(finite(pulse.tau_l) and pulse.tau_l >= 0, 'pulse.tau_l', 'duration must be non-negative')
    check(finite(pulse.area_over_pi) and pulse.area_over_pi >= 0, 'pulse.area_over_pi', 'area must be non-negative')
    check(pulse.shape in PULSE_SHAPES, 'pulse.shape', f'must be one of {", ".join(PULSE_SHAPES)}')
    check(finite(pulse.tbp) and pulse.tbp > 0, 'pulse.tbp', 'time-bandwidth product must be positive')

    check(finite(config.stark.s_cal) and config.stark.s_cal >= 0, 'stark.s_cal', 'must be non-negative')
    check(finite(config.stark.tau_cal) and config.stark.tau_cal > 0, 'stark.tau_cal', 'must be positive')
    check(config.quadrature.n_prep >= 2, 'quadrature.n_prep', 'needs at least 2 nodes')
    check(config.quadrature.n_wait >= 2, 'quadrature.n_wait', 'needs at least 2 nodes')

    tomo = config.tomography
    check(finite(tomo.n_per_setting) and tomo.n_per_setting > 0, 'tomography.n_per_setting', 'must be positive')
    check(tomo.bootstrap >= 100, 'tomography.bootstrap', 'needs at least 100 replicas')
    for name in ('g2_x', 'g2_xx'):
        value = getattr(tomo, name)
        check(finite(value) and 0 <= value <= 1, f'tomography.{name}', 'must lie in [0, 1]')
    if finite(tomo.g2_x) and finite(tomo.g2_xx):
        eps = 1 - (1 - tomo.g2_x) * (1 - tomo.g2_xx)
        check(eps < 1, 'tomography.g2_x', f'multiphoton weight {eps:g} leaves no signal to correct')
    check(finite(tomo.werner_p) and 0 <= tomo.werner_p <= 1, 'tomography.werner_p', 'must lie in [0, 1]')

    spectra = config.spectra
    check(finite(spectra.grid_step_ueV) and spectra.grid_step_ueV > 0, 'spectra.grid_step_ueV', 'must be positive')
    check(finite(spectra.instrument_fwhm) and spectra.instrument_fwhm >= 0, 'spectra.instrument_fwhm',
          'must be non-negative')
    check(spectra.n_events >= MIN_MONTE_CARLO_SAMPLES, 'spectra.n_events',
          f'needs at least {MIN_MONTE_CARLO_SAMPLES} events')
    check(spectra.n_angles >= 6, 'spectra.n_angles', 'the splitting fit needs at least 6 angles')
    for name in ('window_x', 'window_xx'):
        window = getattr(spectra, name)
        check(len(window) == 2 and window[0] < window[1], f'spectra.{name}', 'expected [lo, hi] with lo < hi')

    sweeps = config.sweeps
    check(len(sweeps.durations) > 0 and all(finite(t) and t > 0 for t in sweeps.durations), 'sweeps.durations',
          'expected a non-empty list of positive durations')
    check(all(finite(b) and b > 0 for b in sweeps.bandwidths_ueV), 'sweeps.bandwidths_ueV',
          'bandwidths must be positive')
    check(len(sweeps.areas_over_pi) > 0 and all(finite(a) and a >= 0 for a in sweeps.areas_over_pi),
          'sweeps.areas_over_pi', 'expected a non-empty list of non-negative areas')
    check(finite(sweeps.power_tau_l) and sweeps.power_tau_l > 0, 'sweeps.power_tau_l', 'must be positive')

    check(finite(config.notch.cutoff_ueV) and config.notch.cutoff_ueV >= 0, 'notch.cutoff_ueV', 'must be non-negative')
    check(config.notch.n_events >= MIN_MONTE_CARLO_SAMPLES, 'notch.n_events',
          f'needs at least {MIN_MONTE_CARLO_SAMPLES} events')
    check(isinstance(config.seed, int) and config.seed >= 0, 'seed', 'must be a non-negative integer')

    if not problems:
        for tau_l in config.durations():
            if not tpe_bandwidth_ok(tau_l, config.qd_params().binding_energy, pulse.tbp):
                logger.warning(f'A {tau_l:.3g} ps pulse is spectrally broader than the XX binding energy')
    return problems


def load_config(path: Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Read, override, build and validate. Raises `ConfigError` listing every problem."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ConfigError([f'{path}: not valid JSON ({e})'])
    return config_from_dict(apply_overrides(data, overrides or []))


def config_from_dict(data: dict) -> RunConfig:
    problems = []
    config = _build(RunConfig, data, '', problems)
    if problems:
        raise ConfigError(problems)
    if problems := validate(config):
        raise ConfigError(problems)
    return config


def output_root(out: Path | None, config: RunConfig) -> Path:
    """--out, else $CASCATA_OUT, else the config's output_dir, else ./results."""
    if out is not None:
        return Path(out)
    if env := os.environ.get(OUTPUT_ENV_VAR):
        return Path(env)
    return Path(config.output_dir or DEFAULT_RESULT_DIR)
