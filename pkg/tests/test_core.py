import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hipmv.core import (TAU_EPS, FitConfig, MultiViewDataset, OutcomeData, initialize_params,
                        standardize_subgroup, validate_dataset)
from hipmv.simgen import ScenarioSpec, generate_dataset


def _two_by_two(n=(250, 260), p=(5, 4), family="zip", seed=0):
    rng = np.random.default_rng(seed)
    X = [[rng.normal(size=(ns, pd)) for ns in n] for pd in p]
    y = [rng.poisson(1.0, size=ns) for ns in n]
    return MultiViewDataset.from_arrays(X, OutcomeData(family, y))


def test_validate_well_formed():
    assert validate_dataset(_two_by_two(), K=2).ok


def test_validate_shape_violation_names_block():
    data = _two_by_two()
    data.X[0][0] = data.X[0][0][:249]
    report = validate_dataset(data)
    assert not report.ok
    assert any("shape" in v and "view 1" in v and "subgroup 1" in v for v in report.violations)


def test_validate_zero_offset():
    data = _two_by_two()
    data.outcome.offsets[1][3] = 0.0
    report = validate_dataset(data)
    assert any("offset" in v for v in report.violations)


def test_validate_nonfinite_and_k_bound():
    data = _two_by_two(n=(6, 7))
    data.X[1][0][2, 1] = np.nan
    report = validate_dataset(data, K=10)
    kinds = " ".join(report.violations)
    assert "non-finite" in kinds and "K=10" in kinds


def test_validate_does_not_mutate():
    data = _two_by_two()
    before = [x.copy() for row in data.X for x in row]
    validate_dataset(data)
    assert all(np.array_equal(a, b) for a, b in zip(before, [x for row in data.X for x in row]))


def test_validate_empty_class_only_for_training():
    X = [[np.zeros((4, 2)), np.zeros((3, 2))]]
    labels = [np.array([0, 1, 2, 0]), np.array([0, 1, 1])]
    data = MultiViewDataset.from_arrays(X, OutcomeData.from_labels(labels, n_classes=3))
    report = validate_dataset(data)
    assert any("empty class" in v and "subgroup 2" in v for v in report.violations)
    assert validate_dataset(data, training=False).ok


def test_standardize_simple_column():
    data = MultiViewDataset.from_arrays([[np.array([[1.0], [2.0], [3.0]])]])
    out, params = standardize_subgroup(data)
    col = out.X[0][0][:, 0]
    assert abs(col.mean()) < 1e-15
    assert col.var(ddof=1) == pytest.approx(1.0, abs=1e-14)


def test_standardize_constant_column():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])
    out, params = standardize_subgroup(MultiViewDataset.from_arrays([[X]]))
    assert np.all(out.X[0][0][:, 0] == 0.0)
    assert params.constant[0][0].tolist() == [True, False]


def test_standardize_applies_training_params_to_test():
    rng = np.random.default_rng(3)
    train = MultiViewDataset.from_arrays([[rng.normal(4.0, 2.0, size=(20, 3))]])
    test = MultiViewDataset.from_arrays([[rng.normal(4.0, 2.0, size=(7, 3))]])
    _, params = standardize_subgroup(train)
    got = params.apply(test).X[0][0]
    x = train.X[0][0]
    expect = (test.X[0][0] - x.mean(axis=0)) / x.std(axis=0, ddof=1)
    assert np.allclose(got, expect, atol=1e-14)
    # and not with the test data's own moments
    assert not np.allclose(got.mean(axis=0), 0.0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)))
def test_standardize_idempotent(X):
    once, _ = standardize_subgroup(MultiViewDataset.from_arrays([[X]]))
    twice, _ = standardize_subgroup(once)
    assert np.allclose(once.X[0][0], twice.X[0][0], atol=1e-12, rtol=0)


def _config(**kw):
    base = dict(K=2, lambda_G=1.0, lambda_xi=1.0, family="zip", seed=11)
    base.update(kw)
    return FitConfig(**base)


def test_initialize_deterministic():
    data = _two_by_two()
    a = initialize_params(data, _config())
    b = initialize_params(data, _config())
    assert all(np.array_equal(x, y) for x, y in zip(a.Z, b.Z))
    assert all(np.array_equal(x, y) for ra, rb in zip(a.Xi, b.Xi) for x, y in zip(ra, rb))
    assert a.tau == b.tau


def test_initialize_ranges_and_ones():
    data = _two_by_two()
    params = initialize_params(data, _config())
    assert all(z.min() >= 0.9 and z.max() <= 1.1 for z in params.Z)
    assert all(np.all(g == 1.0) for g in params.G)
    assert np.all(params.Theta == 1.0) and np.all(params.beta0 == 1.0)
    assert TAU_EPS < params.tau < 1 - TAU_EPS


def test_initialize_xi_hand_case():
    X = np.full((5, 1), 2.0)
    data = MultiViewDataset.from_arrays([[X]], OutcomeData("poisson", [np.zeros(5)]))
    params = initialize_params(data, _config(K=1, family="poisson"), Z0=[np.ones((5, 1))])
    assert params.Xi[0][0].tolist() == [[pytest.approx(2.0, abs=1e-12)]]


def test_initialize_tau_all_zero_outcome():
    rng = np.random.default_rng(5)
    n = (6, 4)
    X = [[rng.normal(size=(ns, 3)) for ns in n]]
    data = MultiViewDataset.from_arrays(X, OutcomeData("zip", [np.zeros(ns) for ns in n]))
    params = initialize_params(data, _config(K=2))
    eta = np.concatenate([1.0 + z @ np.ones(2) for z in params.Z])
    expect = np.clip(1.0 - np.mean(np.exp(-np.exp(eta))), TAU_EPS, 1 - TAU_EPS)
    assert params.tau == pytest.approx(expect, abs=1e-15)


def test_initialize_noiseless_square_recovers_loadings():
    spec = ScenarioSpec(p=(60, 70), n=(40, 45), n_signal=20, n_common=10, noise_sd=0.0, family="poisson")
    data, truth = generate_dataset(spec)
    Z0 = truth.Z
    params = initialize_params(data, _config(family="poisson"), Z0=Z0)
    for d in range(2):
        for s in range(2):
            assert np.allclose(params.Xi[d][s], truth.B[d][s], atol=1e-8)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        _config(lambda_G=0.0)
    with pytest.raises(ValueError):
        _config(gamma=(0, 0))
    with pytest.raises(ValueError):
        _config(gamma=(1, 2))
    cfg = _config(gamma=(1, 0))
    assert FitConfig.from_dict(cfg.to_dict()) == cfg
