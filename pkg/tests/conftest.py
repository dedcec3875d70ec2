import numpy as np
import pytest

import qseg

_TABLES = {}


def get_table(n, beta=0.5, alpha=0.3, system=qseg.IntervalSystem.ALL,
              n_reps=5000, master_seed=0, cache_path=None):
    """session-wide memo so repeated tests don't re-simulate."""
    key = (n, beta, alpha, system, n_reps, master_seed)
    if key not in _TABLES:
        _TABLES[key] = qseg.calibrate(n, beta=beta, alpha=alpha, system=system,
                                      n_reps=n_reps, master_seed=master_seed,
                                      cache_path=cache_path)
    return _TABLES[key]


def config_for(table, betas=None):
    return qseg.QuantileConfig(
        betas=betas if betas is not None else (table.beta,),
        alpha=table.alpha, intervals=table.system, mc_reps=table.n_reps,
        master_seed=table.master_seed)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260814)
