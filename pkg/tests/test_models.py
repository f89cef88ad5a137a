import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procoutcome.errors import InvalidGeometry, ShapeMismatch
from procoutcome.features import CategoricalColumn, ColumnLayout
from procoutcome.models import KINDS, SIZE_MULTIPLIERS, ModelConfig, Network, build, cnn_stages, predict, random_instance
from procoutcome.nncore import Conv1D, MaxPool1D, grad_check

RANGE4 = ColumnLayout((), ("a", "b", "c", "d"))
MIXED = ColumnLayout((CategoricalColumn("act", 7, 2), CategoricalColumn("res", 4, 1)), ("x", "y"))


def cfg(kind, **kw):
    kw.setdefault("seq_len", 6)
    if kind == "cnn":
        kw.setdefault("kernel_size", 2)
    return ModelConfig(kind, **kw)


def batch(layout, n, T, seed=0):
    rng = np.random.default_rng(seed)
    X = np.zeros((n, T, layout.n_columns))
    for j, v in enumerate(layout.vocab_sizes):
        X[:, :, j] = rng.integers(0, v, size=(n, T))
    X[:, :, layout.n_categorical :] = rng.normal(size=(n, T, layout.n_range))
    return X


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig("cnn", seq_len=5)
    with pytest.raises(ValueError):
        ModelConfig("lstm", seq_len=5, kernel_size=2)
    with pytest.raises(ValueError):
        ModelConfig("lstm", seq_len=5, batch_size=100)
    with pytest.raises(ValueError):
        ModelConfig("lstm", seq_len=5, size_multiplier=3)
    with pytest.raises(ValueError):
        ModelConfig("gru", seq_len=5)


def test_lstm_parameter_count_closed_form():
    net = build(cfg("lstm", seq_len=5), RANGE4)
    D, h = 4, 8
    lstm = 4 * (D * h + h * h + h)
    assert net.n_parameters == lstm + (h * h + h) + (h + 1) == 497


def test_cnn_single_stage_when_too_short():
    assert cnn_stages(5, 4) == [(2, True)]
    net = build(cfg("cnn", seq_len=5, kernel_size=4), RANGE4)
    assert sum(isinstance(layer, Conv1D) for layer in net.layers) == 1
    assert len(cnn_stages(15, 2)) == 2
    with pytest.raises(InvalidGeometry):
        build(cfg("cnn", seq_len=3, kernel_size=4), RANGE4)


def test_cnn_degenerate_pool_skipped():
    # first conv output of length 1 cannot be pooled
    assert cnn_stages(4, 4) == [(1, False)]
    net = build(cfg("cnn", seq_len=4, kernel_size=4), RANGE4)
    assert not any(isinstance(layer, MaxPool1D) for layer in net.layers)
    p = predict(net, batch(RANGE4, 3, 4))
    assert p.shape == (3,)


def test_attention_with_one_step_equals_lstm():
    X = batch(MIXED, 5, 1)
    a = build(cfg("lstm", seq_len=1, seed=9), MIXED)
    b = build(cfg("lstm_attention", seq_len=1, seed=9), MIXED)
    np.testing.assert_array_equal(predict(a, X), predict(b, X))


@pytest.mark.parametrize("kind", KINDS)
def test_predict_range_and_determinism(kind):
    net = build(cfg(kind), MIXED)
    X = batch(MIXED, 8, 6)
    X[1] = X[0]
    p = predict(net, X)
    assert np.all((p > 0) & (p < 1))
    assert p[0] == p[1]
    assert predict(net, X).tobytes() == p.tobytes()
    with pytest.raises(ShapeMismatch):
        net.forward(X[:, :5])


@pytest.mark.parametrize("kind", KINDS)
def test_parameter_count_grows_with_multiplier(kind):
    counts = [build(cfg(kind, size_multiplier=m, seq_len=10), MIXED).n_parameters for m in SIZE_MULTIPLIERS]
    assert counts == sorted(counts) and len(set(counts)) == len(counts)


@pytest.mark.parametrize("kind", KINDS)
def test_builds_are_bit_identical(kind):
    a = build(cfg(kind, seed=4), MIXED).state_dict()
    b = build(cfg(kind, seed=4), MIXED).state_dict()
    assert a.keys() == b.keys()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c = build(cfg(kind, seed=5), MIXED).state_dict()
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_roundtrip(kind, tmp_path):
    net = build(cfg(kind, seed=2), MIXED)
    for p in net.parameters():
        p.value += np.random.default_rng(1).normal(size=p.shape) * 1e-3
    blob = net.to_bytes()
    back = Network.from_bytes(blob)
    assert back.to_bytes() == blob
    assert back.config == net.config and back.layout == net.layout
    X = batch(MIXED, 4, 6)
    assert predict(back, X).tobytes() == predict(net, X).tobytes()
    net.save(tmp_path / "m.pcnet")
    assert Network.load(tmp_path / "m.pcnet").to_bytes() == blob
    with pytest.raises(ValueError):
        Network.from_bytes(b"garbage!" + blob[8:])


def test_predict_accepts_matrix_lists():
    from procoutcome.prefixes import PrefixMatrix

    net = build(cfg("lstm"), MIXED)
    X = batch(MIXED, 3, 6)
    mats = [PrefixMatrix(x, 2, 6, "c", 0) for x in X]
    np.testing.assert_array_equal(predict(net, mats), predict(net, X))


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 10_000))
def test_composed_models_pass_gradcheck(kind, seed):
    assert grad_check(*random_instance(kind, seed)) < 1e-5
