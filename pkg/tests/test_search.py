import math

import numpy as np
import pytest

from subsvr.data import Dataset, SynthSpec, SynthTerm, generate_synthetic, normalize
from subsvr.errors import InputError, NumericError
from subsvr.kernels import default_kernel
from subsvr.search import (
    FoldState,
    SearchConfig,
    Subspace,
    constant_model_cv,
    cv_score,
    delta_e,
    draw_subspace,
    initial_fold_state,
    make_fold_split,
    recompute_fold_residuals,
    run_search,
)
from subsvr.svr import SvrConfig

KERNEL3 = default_kernel(3)


def small_config(**kw):
    base = dict(subspace_dim=3, max_iterations=400, seed=0, patience=20)
    base.update(kw)
    return SearchConfig(**base)


def test_draw_full_set():
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert sorted(draw_subspace(rng, 3, 3).indices) == [0, 1, 2]


def test_draw_determinism():
    a = draw_subspace(np.random.default_rng(99), 41, 3)
    b = draw_subspace(np.random.default_rng(99), 41, 3)
    assert a.indices == b.indices


def test_draw_distinct_and_ranged():
    rng = np.random.default_rng(1)
    for _ in range(200):
        idx = draw_subspace(rng, 10, 4).indices
        assert len(set(idx)) == 4
        assert all(0 <= i < 10 for i in idx)


def test_draw_uniform_frequency():
    rng = np.random.default_rng(2024)
    counts = np.zeros(10)
    n_draws = 100_000
    for _ in range(n_draws):
        for i in draw_subspace(rng, 10, 3).indices:
            counts[i] += 1
    freq = counts / n_draws
    assert np.abs(freq - 0.3).max() <= 0.01


def test_draw_invalid():
    with pytest.raises(InputError):
        draw_subspace(np.random.default_rng(0), 3, 4)


def test_fold_split_properties():
    rng = np.random.default_rng(5)
    split = make_fold_split(23, 5, rng)
    counts = np.bincount(split.assignments)
    assert len(counts) == 5
    assert counts.max() - counts.min() <= 1
    again = make_fold_split(23, 5, np.random.default_rng(5))
    assert np.array_equal(split.assignments, again.assignments)
    with pytest.raises(InputError):
        make_fold_split(4, 5, rng)


def test_constant_model_cv_matches_hand_recomputation():
    y = np.arange(1.0, 11.0)
    split = make_fold_split(10, 5, np.random.default_rng(3))
    cv0, means = constant_model_cv(y, split)
    # independent recomputation with plain python loops
    rmses = []
    for q in range(5):
        train = [i for i in range(10) if split.assignments[i] != q]
        val = [i for i in range(10) if split.assignments[i] == q]
        m = sum(y[i] for i in train) / len(train)
        assert means[q] == pytest.approx(m, abs=1e-15)
        rmses.append(math.sqrt(sum((y[i] - m) ** 2 for i in val) / len(val)))
    assert cv0 == pytest.approx(sum(rmses) / 5.0, abs=1e-12)


def test_cv_score_identity_submodel():
    # zero training residuals make the fitted submodel vanish, so CV_t is the
    # plain RMS of the current validation residuals
    rng = np.random.default_rng(8)
    data = normalize(Dataset(X=rng.normal(size=(25, 4)), y=rng.normal(size=25), labels=list("abcd")))
    split = make_fold_split(25, 5, np.random.default_rng(1))
    val_residuals = [rng.normal(size=(split.assignments == q).sum()) for q in range(5)]
    state = FoldState(
        train_residuals=[np.zeros((split.assignments != q).sum()) for q in range(5)],
        val_residuals=[v.copy() for v in val_residuals],
    )
    svr = SvrConfig(epsilon=0.1, cost=1.0, kernel=default_kernel(2))
    got = cv_score(Subspace((0, 1)), state, data, split, svr)
    expected = np.mean([np.sqrt(np.mean(v**2)) for v in val_residuals])
    assert got == pytest.approx(expected, abs=1e-12)


def test_delta_e_examples():
    assert delta_e(10.0, 9.0) == pytest.approx(0.1, abs=1e-15)
    assert delta_e(7.5, 7.5) == 0.0
    assert delta_e(11.5, 11.6) == pytest.approx((11.5 - 11.6) / 11.5, abs=1e-15)
    assert delta_e(11.5, 11.6) == pytest.approx(-0.00870, abs=5e-6)
    with pytest.raises(NumericError):
        delta_e(0.0, 1.0)


def test_config_validation():
    with pytest.raises(InputError):
        SearchConfig(termination_threshold=0.02, selection_threshold=0.01)
    with pytest.raises(InputError):
        SearchConfig(termination_threshold=0.0)
    with pytest.raises(InputError):
        SearchConfig(folds=1)
    with pytest.raises(InputError):
        SearchConfig(patience=0)
    with pytest.raises(InputError):
        SearchConfig(max_iterations=0)
    with pytest.raises(InputError):
        SearchConfig(subspace_dim=0)


def test_noise_only_response_keeps_constant_model():
    rng = np.random.default_rng(31)
    data = normalize(Dataset(X=rng.normal(size=(80, 8)), y=rng.normal(size=80), labels=[f"x{i}" for i in range(8)]))
    svr = SvrConfig(epsilon=0.1, cost=1.0, kernel=KERNEL3)
    result = run_search(data, small_config(seed=3), svr)
    assert result.trace.stop_reason in ("below_tau", "max_iterations")
    assert len(result.accepted) <= 2
    assert abs(result.cv_star - result.trace.cv0) <= 0.05 * result.trace.cv0


def test_recovery_on_spec_example_instance():
    # y = x1 + x2*x3 over p=10: accepted set covers {x1} and jointly {x2, x3}
    spec = SynthSpec(
        n=200, p=10,
        terms=(SynthTerm("linear", (0,), 1.0), SynthTerm("product", (1, 2), 1.0)),
        noise_sd=0.05, seed=21,
    )
    raw, _ = generate_synthetic(spec)
    data = normalize(raw)
    svr = SvrConfig(epsilon=0.01, cost=5.0, kernel=KERNEL3)
    hits = 0
    for seed in (1, 2, 3, 4, 5):
        result = run_search(data, SearchConfig(seed=seed), svr)
        union = set()
        joint = False
        for sub in result.accepted:
            union |= set(sub.indices)
            if {1, 2} <= set(sub.indices):
                joint = True
        hits += (0 in union) and joint
    assert hits >= 4


def test_monotonicity_halting_and_bound():
    rng = np.random.default_rng(17)
    eta = 0.01
    for trial in range(3):
        X = rng.normal(size=(60, 6))
        y = X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.normal(size=60)
        data = normalize(Dataset(X=X, y=y, labels=[f"v{i}" for i in range(6)]))
        svr = SvrConfig(epsilon=0.1, cost=2.0, kernel=KERNEL3)
        result = run_search(data, small_config(seed=trial), svr)
        cv = result.trace.cv0
        n_accepted = 0
        for rec in result.trace.records:
            if rec.decision == "accepted":
                assert rec.cv < cv * (1.0 - eta)
                cv = rec.cv
                n_accepted += 1
        assert len(result.trace.records) <= 400  # halted
        if n_accepted and result.cv_star < result.trace.cv0:
            bound = math.log(result.cv_star / result.trace.cv0) / math.log(1.0 - eta)
            assert n_accepted <= bound + 1e-9


def test_bitwise_reproducibility():
    spec = SynthSpec(n=80, p=8, terms=(SynthTerm("linear", (0,), 1.0),), noise_sd=0.3, seed=5)
    data = normalize(generate_synthetic(spec)[0])
    svr = SvrConfig(epsilon=0.1, cost=2.0, kernel=KERNEL3)
    a = run_search(data, small_config(seed=11), svr)
    b = run_search(data, small_config(seed=11), svr)
    assert len(a.trace.records) == len(b.trace.records)
    for ra, rb in zip(a.trace.records, b.trace.records):
        assert ra.indices == rb.indices
        assert ra.cv == rb.cv
        assert ra.delta_e == rb.delta_e
        assert ra.decision == rb.decision


def test_residual_consistency_after_search():
    spec = SynthSpec(
        n=100, p=6,
        terms=(SynthTerm("linear", (0,), 1.0), SynthTerm("linear", (3,), 0.5)),
        noise_sd=0.2, seed=9,
    )
    data = normalize(generate_synthetic(spec)[0])
    svr = SvrConfig(epsilon=0.1, cost=2.0, kernel=KERNEL3)
    config = small_config(seed=2)
    result = run_search(data, config, svr)
    assert result.accepted, "expected at least one acceptance on signal data"

    root = np.random.SeedSequence(config.seed)
    split_seq, _ = root.spawn(2)
    split = make_fold_split(data.n, config.folds, np.random.default_rng(split_seq))
    cv0, means = constant_model_cv(data.y, split)
    fresh = recompute_fold_residuals(data, split, means, result.accepted)

    # replay the incremental updates the search performed
    incremental = initial_fold_state(data.y, split, means)
    from subsvr.svr import svr_predict

    for sub in result.accepted:
        Z = data.X[:, list(sub.indices)]
        for q in range(split.n_folds):
            train, val = split.fold_rows(q)
            incremental.train_residuals[q] = incremental.train_residuals[q] - svr_predict(sub.fold_models[q], Z[train])
            incremental.val_residuals[q] = incremental.val_residuals[q] - svr_predict(sub.fold_models[q], Z[val])
    for q in range(split.n_folds):
        assert np.abs(fresh.train_residuals[q] - incremental.train_residuals[q]).max() <= 1e-10
        assert np.abs(fresh.val_residuals[q] - incremental.val_residuals[q]).max() <= 1e-10


def test_run_search_requires_normalized_data():
    rng = np.random.default_rng(0)
    raw = Dataset(X=rng.normal(size=(30, 4)), y=rng.normal(size=30), labels=list("abcd"))
    with pytest.raises(InputError):
        run_search(raw, small_config(), SvrConfig(kernel=KERNEL3))


def test_patience_one_stops_on_first_below_tau():
    rng = np.random.default_rng(41)
    data = normalize(Dataset(X=rng.normal(size=(60, 6)), y=rng.normal(size=60), labels=[f"x{i}" for i in range(6)]))
    svr = SvrConfig(epsilon=0.1, cost=1.0, kernel=KERNEL3)
    result = run_search(data, small_config(seed=1, patience=1), svr)
    below = [rec for rec in result.trace.records if rec.delta_e < small_config().termination_threshold]
    assert below, "noise data should produce a sub-tau draw quickly"
    assert result.trace.records[-1].decision == "terminated"
    first_sub_tau = next(
        i for i, rec in enumerate(result.trace.records)
        if rec.delta_e < small_config().termination_threshold and rec.decision != "accepted"
    )
    assert first_sub_tau == len(result.trace.records) - 1
