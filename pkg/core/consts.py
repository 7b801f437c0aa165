import math

# ------------------------------------------------ Physical constants ------------------------------------------------ #

# Exact SI definitions (h in J*s, elementary charge in C) expressed in eV*s
PLANCK_H = 6.62607015e-34 / 1.602176634e-19
HBAR = PLANCK_H / (2 * math.pi)

UEV_PER_EV = 1e6
PS_PER_S = 1e12

# hbar in ueV*ps: the phase accumulated by a splitting S (ueV) over t (ps) is S * t / HBAR_UEV_PS
HBAR_UEV_PS = HBAR * UEV_PER_EV * PS_PER_S

FWHM_TO_SIGMA = 1 / (2 * math.sqrt(2 * math.log(2)))

# ------------------------------------------------- Model defaults --------------------------------------------------- #

DEFAULT_TBP = 0.374
DEFAULT_TAU_CAL = 10.0  # ps
DEFAULT_S_CAL = 200.0  # ueV

# Preparation times are drawn within +-PREPARATION_SPAN * tau_l around the pulse peak
PREPARATION_SPAN = 3.0

# Quadrature node counts
N_PREPARATION_NODES = 64
N_WAITING_NODES = 96

MIN_MONTE_CARLO_SAMPLES = 1000

BINDING_ENERGY_BAND = (3000.0, 5000.0)  # ueV

# ---------------------------------------------- Numerical tolerances ------------------------------------------------ #

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-8
UNPHYSICAL_TOL = 1e-6

LORENTZIAN_SUPPORT = 50  # linewidths
GRID_MARGIN_LINEWIDTHS = 5
MAX_MASS_OUTSIDE_GRID = 1e-3
DEFAULT_INSTRUMENT_FWHM = 25.0  # ueV

# ------------------------------------------------ Output settings --------------------------------------------------- #

BASIS = ('HH', 'HV', 'VH', 'VV')
POLARIZATIONS = ('H', 'V', 'D', 'A', 'R', 'L')

FLOAT_FORMAT = '.12g'

OUTPUT_ENV_VAR = 'CASCATA_OUT'
DEFAULT_RESULT_DIR = 'results'

MANIFEST_FILENAME = 'manifest.json'
CONFIG_FILENAME = 'config.json'
RUN_FILENAME = 'run.json'

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO_ERROR = 4

TOOLKIT_VERSION = '0.3.0'
