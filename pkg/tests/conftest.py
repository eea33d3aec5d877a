import pytest

from backward_cp import harness

# Long-run references for the rate checks and the stability diagnostic.
# Session-scoped: the n=1000 run takes ~30s and is shared by several tests.

REF_KW = dict(num_labels=10, signal=2.0, cap=1, draws=100_000)


@pytest.fixture(scope="session")
def reference_n250() -> harness.ReferenceEstimates:
    return harness.estimate_reference(n=250, seed=90250, **REF_KW)


@pytest.fixture(scope="session")
def reference_n1000() -> harness.ReferenceEstimates:
    return harness.estimate_reference(n=1000, seed=91000, **REF_KW)
