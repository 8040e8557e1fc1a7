import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bosonic_solution():
    from biorth_ldp import bosonic_spec
    from biorth_ldp.equilibrium import solve_ensemble
    return solve_ensemble(bosonic_spec(), 400, (0.0, 6.0))


@pytest.fixture(scope="session")
def gue_solution():
    from biorth_ldp import gue_type_spec
    from biorth_ldp.equilibrium import solve_ensemble
    return solve_ensemble(gue_type_spec(), 400, (-3.0, 3.0))


class TimedBatches(dict):
    seconds = 0.0


@pytest.fixture(scope="session")
def bosonic_batches():
    """Pooled bosonic MCMC batches at n = 16, 32, 64 (4 chains x 25 kept configurations)."""
    import time
    from biorth_ldp import bosonic_spec
    from biorth_ldp.sampler import ChainConfig, merge_batches, run_chains
    out = TimedBatches()
    t0 = time.perf_counter()
    for n in (16, 32, 64):
        cfg = ChainConfig(n=n, sweeps=1000, burn_in=500, thinning=20, step_size=0.1, seed=1)
        out[n] = merge_batches(run_chains(bosonic_spec(), cfg, 4))
    out.seconds = time.perf_counter() - t0
    return out
