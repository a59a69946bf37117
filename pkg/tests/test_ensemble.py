import numpy as np
import pytest

from subsvr.data import Dataset, SynthSpec, SynthTerm, generate_synthetic, normalize
from subsvr.ensemble import finalize, load_model, save_model
from subsvr.errors import InputError
from subsvr.kernels import KernelSpec, default_kernel
from subsvr.search import SearchConfig, run_search
from subsvr.svr import SvrConfig

LINEAR = KernelSpec(family="linear")


def fitted_synthetic_model(tmp_seed=4):
    spec = SynthSpec(
        n=120, p=8,
        terms=(SynthTerm("linear", (0,), 1.0), SynthTerm("product", (1, 2), 2.0)),
        noise_sd=0.1, seed=tmp_seed,
    )
    raw, _ = generate_synthetic(spec)
    data = normalize(raw)
    svr = SvrConfig(epsilon=0.01, cost=5.0, kernel=default_kernel(3))
    cfg = SearchConfig(seed=1, max_iterations=300, patience=25)
    result = run_search(data, cfg, svr)
    model = finalize(data, result.accepted, svr, cfg)
    return raw, data, model


def test_empty_model_predicts_baseline():
    rng = np.random.default_rng(0)
    raw = Dataset(X=rng.normal(size=(20, 3)), y=rng.normal(5.0, 2.0, size=20), labels=list("abc"))
    data = normalize(raw)
    cfg = SearchConfig(seed=0)
    model = finalize(data, [], SvrConfig(kernel=default_kernel(3)), cfg)
    pred = model.predict(raw.X)
    assert np.abs(pred - raw.y.mean()).max() < 1e-12
    assert model.decompose(raw.X[0]) == []
    assert model.baseline == pytest.approx(raw.y.mean(), abs=1e-12)


def test_single_subspace_exact_line():
    x = np.linspace(0.0, 3.0, 12)
    raw = Dataset(X=x[:, None], y=2.0 * x, labels=["x1"])
    data = normalize(raw)
    svr = SvrConfig(epsilon=0.01, cost=10.0, kernel=LINEAR, tolerance=1e-8)
    cfg = SearchConfig(subspace_dim=1, seed=0)

    class Sub:
        indices = (0,)

    model = finalize(data, [Sub()], svr, cfg)
    pred_norm = (model.predict(raw.X) - raw.y.mean()) / raw.y.std(ddof=1)
    target_norm = (raw.y - raw.y.mean()) / raw.y.std(ddof=1)
    assert np.sqrt(np.mean((pred_norm - target_norm) ** 2)) <= 0.01


def test_predict_reproduces_fitted_values():
    raw, data, model = fitted_synthetic_model()
    fitted_original = data.stats.denormalize_y(model.fitted_norm)
    assert np.abs(model.predict(raw.X) - fitted_original).max() <= 1e-10


def test_additive_decomposition():
    raw, _, model = fitted_synthetic_model()
    assert len(model.subspaces) >= 1
    for i in range(0, 20, 5):
        x = raw.X[i]
        contribs = model.decompose(x)
        total = model.baseline + sum(c for _, c in contribs)
        assert total == pytest.approx(float(model.predict(x[None, :])[0]), abs=1e-10)
        assert [idx for idx, _ in contribs] == [s.indices for s in model.subspaces]


def test_model_file_round_trip_bitwise(tmp_path):
    raw, _, model = fitted_synthetic_model()
    path = tmp_path / "model.json"
    save_model(model, path, header_comment="test artifact")
    loaded = load_model(path)
    grid = np.random.default_rng(3).uniform(0, 1, size=(40, raw.p))
    assert np.array_equal(model.predict(grid), loaded.predict(grid))
    assert loaded.labels == model.labels
    assert loaded.search_config == model.search_config
    assert loaded.svr_config == model.svr_config
    # a second save round-trips to identical bytes
    path2 = tmp_path / "model2.json"
    save_model(loaded, path2, header_comment="test artifact")
    assert path.read_bytes() == path2.read_bytes()


def test_predict_validation():
    _, _, model = fitted_synthetic_model()
    with pytest.raises(InputError):
        model.predict(np.ones((2, model.p + 1)))
    with pytest.raises(InputError):
        model.predict(np.full((1, model.p), np.nan))


def test_finalize_requires_normalized():
    rng = np.random.default_rng(0)
    raw = Dataset(X=rng.normal(size=(20, 3)), y=rng.normal(size=20), labels=list("abc"))
    with pytest.raises(InputError):
        finalize(raw, [], SvrConfig(kernel=default_kernel(3)), SearchConfig())


def test_load_model_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("# banner\nnot json")
    with pytest.raises(InputError):
        load_model(path)
    path.write_text('{"version": 99}')
    with pytest.raises(InputError):
        load_model(path)
