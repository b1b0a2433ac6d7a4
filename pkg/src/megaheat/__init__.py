"""Station-based analysis of urban-corridor warming and heat waves.

Submodules:

* ``ghcn`` — fixed-width record parsing and serialization
* ``regions`` — region geometry, station membership, covariate tables
* ``qc`` — record-completeness filters
* ``interpolate`` — monthly GWR+kriging imputation, daily moving-average fill
* ``indices`` — seasonal means and annual heat-wave indices
* ``stats`` — Mann-Kendall, FDR, rank tests, proportion comparison
* ``synth`` — seeded synthetic station worlds for testing
* ``pipeline`` — file-based stage runner and comparison cells
* ``cli`` — ``megaheat`` command

The most commonly used entry points are re-exported here.
"""

__version__ = "0.1.0"

from .pipeline import (  # noqa: E402
    ConfigError,
    DataError,
    RunConfig,
    config_hash,
    load_config,
    run_all,
    run_stages,
)
from .series import AnnualSeries, DailySeries, MonthlySeries, StationMeta  # noqa: E402

__all__ = [
    "AnnualSeries",
    "ConfigError",
    "DailySeries",
    "DataError",
    "MonthlySeries",
    "RunConfig",
    "StationMeta",
    "__version__",
    "config_hash",
    "load_config",
    "run_all",
    "run_stages",
]
