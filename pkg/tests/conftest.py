import numpy as np
import pytest

from hipmv.core import FitConfig, HipParams, MultiViewDataset, OutcomeData


def random_instance(family, seed, n=(15, 15), p=(8, 6), K=2, m=3, lam=(0.7, 0.4)):
    """Small random data set plus a generic (non-stationary) parameter point."""
    rng = np.random.default_rng(seed)
    X = [[rng.normal(size=(ns, pd)) for ns in n] for pd in p]
    if family == "multiclass":
        # every class present in every subgroup
        labels = [np.concatenate([np.arange(m), rng.integers(0, m, size=ns - m)]) for ns in n]
        outcome = OutcomeData.from_labels(labels, n_classes=m)
        q = m
    else:
        y = [rng.poisson(2.0, size=ns) * (rng.random(ns) > (0.3 if family == "zip" else 0.0)) for ns in n]
        t = [rng.uniform(0.5, 2.0, size=ns) for ns in n]
        outcome = OutcomeData(family, y, t)
        q = 1
    data = MultiViewDataset.from_arrays(X, outcome)
    params = HipParams(
        Z=[rng.normal(size=(ns, K)) for ns in n],
        G=[rng.normal(size=(pd, K)) for pd in p],
        Xi=[[rng.normal(size=(pd, K)) for _ in n] for pd in p],
        Theta=rng.normal(scale=0.5, size=(K, q)),
        beta0=rng.normal(scale=0.5, size=q),
        tau=float(rng.uniform(0.1, 0.6)) if family == "zip" else None,
    )
    config = FitConfig(K=K, lambda_G=lam[0], lambda_xi=lam[1], family=family)
    return data, params, config


@pytest.fixture
def instance():
    return random_instance


@pytest.fixture
def report(request):
    """Record one pass/fail line per acceptance criterion for the run summary."""
    lines = request.config.__dict__.setdefault("acceptance_lines", {})

    def record(number, ok, detail):
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
