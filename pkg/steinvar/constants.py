RANK_TOLERANCE = 1e-10
CENTERING_TOLERANCE = 1e-10

QUADRATURE_RTOL = 1e-13
QUADRATURE_MIN_NODES = 16
QUADRATURE_MAX_NODES = 2**12
NEAR_ONE_GAP = 1e-8
SERIES_TERM_RTOL = 1e-16
SERIES_MAX_TERMS = 10**6

MONOTONE_GRID_SIZE = 1000
# Smallest generalized Bayes order with a nondecreasing phi bracketed by phi_BZ and 1.
CHECKED_MIN_ORDER = 2.0
PROPERTY_TOLERANCE = 1e-12

DEFAULT_XI_GRID = (0.0, 1.0, 4.0, 16.0, 64.0, 256.0)
DEFAULT_REPLICATES = 100_000
BLOCK_SIZE = 8192
VERDICT_STD_ERRS = 3.0

ORACLE_RTOL = 1e-10
NORMALIZATION_TOLERANCE = 1e-8

SEED_ENV_VAR = "STEINVAR_SEED"
SLOW_TESTS_ENV_VAR = "STEINVAR_SLOW_TESTS"

LOG_MAX_BYTES = 1_000_000
LOG_BACKUP_COUNT = 3

POISSON_TAIL_SPREAD = 10.0
POISSON_TAIL_PAD = 40.0
