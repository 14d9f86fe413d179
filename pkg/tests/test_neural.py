import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_blobs
from mcdnn.errors import TrainingError, ValidationError
from mcdnn.neural import (
    LayerSpec,
    MlpModel,
    TrainConfig,
    backward,
    cross_entropy_loss,
    forward,
    gradient_check,
    init_mlp,
    load_mlp,
    predict_class,
    predict_proba,
    save_mlp,
    sgd_step,
    train_mlp,
)

NET_684 = [LayerSpec(8, "sigmoid"), LayerSpec(4, "softmax")]


def onehot(y, M):
    return np.eye(M)[np.asarray(y)]


def zero_model(n_0, layers):
    m = init_mlp(n_0, layers, 0)
    return MlpModel(m.layers, tuple(np.zeros_like(w) for w in m.weights), n_0)


def test_init_shapes_and_bias():
    m = init_mlp(6, [LayerSpec(8, "relu"), LayerSpec(4, "softmax")], seed=1)
    assert [w.shape for w in m.weights] == [(8, 7), (4, 9)]
    assert all(np.all(w[:, 0] == 0) for w in m.weights)
    assert m.M == 4 and m.n_0 == 6


def test_init_is_seeded():
    a, b = init_mlp(6, NET_684, 3), init_mlp(6, NET_684, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_init_glorot_bound():
    m = init_mlp(8, [LayerSpec(8, "relu")] * 150 + [LayerSpec(4, "softmax")], seed=0)
    w = np.concatenate([w[:, 1:].ravel() for w in m.weights[:-1]])
    assert w.size >= 9600
    assert np.abs(w).max() <= math.sqrt(6 / 16)


@pytest.mark.parametrize("layers", [
    [LayerSpec(4, "softmax"), LayerSpec(4, "softmax")],
    [LayerSpec(4, "relu")],
    [LayerSpec(0, "softmax")],
    [LayerSpec(3, "tanh"), LayerSpec(2, "softmax")],
])
def test_init_rejects_bad_layers(layers):
    with pytest.raises(ValidationError):
        init_mlp(3, layers)


def test_zero_weights_give_uniform_output():
    m = zero_model(5, [LayerSpec(3, "relu"), LayerSpec(4, "softmax")])
    p = forward(m, np.arange(5.0)).probs
    assert np.allclose(p, 0.25, atol=0, rtol=1e-15)
    assert predict_class(m, np.random.default_rng(0).normal(size=(7, 5))).tolist() == [0] * 7


def _hand_net():
    w1 = np.array([[0.1, 0.4, -0.6], [-0.3, 0.2, 0.9]])
    w2 = np.array([[0.05, 1.2, -0.7], [-0.1, -0.4, 0.8]])
    return MlpModel((LayerSpec(2, "sigmoid"), LayerSpec(2, "softmax")), (w1, w2), 2), w1, w2


def test_forward_matches_hand_evaluation():
    m, w1, w2 = _hand_net()
    x = [0.7, -1.3]
    o0 = [1.0] + x
    net1 = [sum(w1[j][i] * o0[i] for i in range(3)) for j in range(2)]
    o1 = [1.0] + [1.0 / (1.0 + math.exp(-v)) for v in net1]
    net2 = [sum(w2[j][i] * o1[i] for i in range(3)) for j in range(2)]
    z = sum(math.exp(v) for v in net2)
    probs = [math.exp(v) / z for v in net2]
    tr = forward(m, x)
    assert np.max(np.abs(tr.probs[0] - probs)) <= 1e-12
    assert np.max(np.abs(tr.nets[0][0] - net1)) <= 1e-12
    assert np.max(np.abs(tr.outputs[1][0] - o1)) <= 1e-12
    assert tr.outputs[0][0].tolist() == o0
    assert predict_class(m, np.array([x]))[0] == int(np.argmax(probs))


def test_dropout_zero_train_equals_infer():
    m = init_mlp(6, [LayerSpec(5, "relu"), LayerSpec(4, "softmax")], 2)
    x = np.random.default_rng(0).normal(size=(3, 6))
    a, b = forward(m, x, "train", 0.0, rng=1), forward(m, x)
    assert np.array_equal(a.probs, b.probs)


def test_dropout_masks_and_scales():
    m = init_mlp(4, [LayerSpec(2000, "sigmoid"), LayerSpec(3, "softmax")], 0)
    x = np.ones((1, 4))
    tr = forward(m, x, "train", 0.25, rng=5)
    mask = tr.masks[0]
    assert abs(1 - mask.mean() - 0.25) < 0.05
    plain = forward(m, x).activations[1]
    assert np.allclose(tr.activations[1], plain * mask / 0.75)


def test_forward_dimension_mismatch():
    with pytest.raises(ValidationError):
        forward(init_mlp(3, NET_684), np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50.0))
def test_softmax_is_distribution(seed, scale):
    rng = np.random.default_rng(seed)
    m = init_mlp(5, [LayerSpec(6, "relu"), LayerSpec(4, "softmax")], seed)
    p = predict_proba(m, rng.normal(0, scale, (10, 5)))
    assert np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)


def test_loss_examples():
    m = zero_model(3, [LayerSpec(4, "softmax")])
    tr = forward(m, [1.0, 2.0, 3.0])
    assert math.isclose(cross_entropy_loss(tr, [0, 1, 0, 0], m), math.log(4), rel_tol=1e-14)
    # a single non-bias weight of 2 with a confident correct output
    w = np.array([[0.0, 2.0], [-800.0, 0.0]])
    m2 = MlpModel((LayerSpec(2, "softmax"),), (w,), 1)
    tr2 = forward(m2, [500.0])
    assert cross_entropy_loss(tr2, [1, 0], m2, 0.0) == 0.0
    assert math.isclose(cross_entropy_loss(tr2, [1, 0], m2, 0.1), 0.2, rel_tol=1e-14)


def test_loss_rejects_non_onehot():
    m = init_mlp(3, NET_684)
    tr = forward(m, np.zeros(3))
    for bad in ([0.5, 0.5, 0, 0], [1, 1, 0, 0], [1, 0, 0]):
        with pytest.raises(ValidationError):
            cross_entropy_loss(tr, bad, m)


def test_loss_clamped():
    w = np.array([[0.0, 0.0], [0.0, 1e4]])
    m = MlpModel((LayerSpec(2, "softmax"),), (w,), 1)
    loss = cross_entropy_loss(forward(m, [1.0]), [1, 0], m)
    assert math.isclose(loss, -math.log(1e-12), rel_tol=1e-12)


def test_perfect_prediction_zero_gradient():
    w = np.array([[0.0, 0.0], [-800.0, 0.0]])
    m = MlpModel((LayerSpec(2, "softmax"),), (w,), 1)
    g = backward(m, forward(m, [3.0]), [1, 0])
    assert all(np.all(gi == 0.0) for gi in g)
    assert gradient_check(m, [3.0], [1, 0]) <= 1e-6


def test_output_delta_is_o_minus_d():
    m = init_mlp(6, [LayerSpec(8, "relu"), LayerSpec(4, "softmax")], 3)
    x = np.random.default_rng(1).normal(size=(1, 6))
    tr = forward(m, x)
    _, deltas = backward(m, tr, [0, 0, 1, 0], return_deltas=True)
    assert np.allclose(deltas[-1], tr.probs - [0, 0, 1, 0], atol=1e-15)


def test_backward_rejects_foreign_trace():
    a = init_mlp(6, NET_684)
    b = init_mlp(5, NET_684)
    with pytest.raises(ValidationError):
        backward(a, forward(b, np.zeros(5)), [1, 0, 0, 0])


def test_gradient_check_sigmoid_with_l2():
    rng = np.random.default_rng(7)
    m = init_mlp(6, NET_684, 7)
    x = rng.normal(size=(5, 6))
    y = onehot(rng.integers(0, 4, 5), 4)
    assert gradient_check(m, x, y, l2_lambda=0.05) <= 1e-4


def test_gradient_check_deep_relu():
    rng = np.random.default_rng(8)
    layers = [LayerSpec(7, "relu"), LayerSpec(5, "relu"), LayerSpec(3, "softmax")]
    for seed in range(50):
        m = init_mlp(4, layers, seed)
        x = rng.normal(size=(3, 4))
        if min(np.abs(n).min() for n in forward(m, x).nets[:-1]) > 1e-3:
            break
    assert gradient_check(m, x, onehot([0, 2, 1], 3), l2_lambda=0.01) <= 1e-4


def test_gradient_check_rejects_bad_epsilon():
    with pytest.raises(ValidationError):
        gradient_check(init_mlp(6, NET_684), np.zeros(6), [1, 0, 0, 0], epsilon=0)


def test_dropout_gradient_matches_fixed_mask():
    # with the mask held fixed the network is deterministic, so finite differences still apply
    m = init_mlp(4, [LayerSpec(6, "sigmoid"), LayerSpec(3, "softmax")], 1)
    x = np.random.default_rng(2).normal(size=(2, 4))
    y = onehot([1, 2], 3)
    tr = forward(m, x, "train", 0.5, rng=3)
    g = backward(m, tr, y)
    mask = tr.masks[0]

    def loss(weights):
        w1, w2 = weights
        h = 1 / (1 + np.exp(-(np.hstack([np.ones((2, 1)), x]) @ w1.T))) * mask / 0.5
        z = np.hstack([np.ones((2, 1)), h]) @ w2.T
        p = np.exp(z - z.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        return -(y * np.log(p)).sum(1).mean()

    eps = 1e-6
    for l in range(2):
        for idx in np.ndindex(m.weights[l].shape):
            wp = [w.copy() for w in m.weights]
            wm = [w.copy() for w in m.weights]
            wp[l][idx] += eps
            wm[l][idx] -= eps
            fd = (loss(wp) - loss(wm)) / (2 * eps)
            assert abs(fd - g[l][idx]) <= 1e-7 + 1e-5 * abs(fd)


def test_sgd_step_examples():
    m = MlpModel((LayerSpec(1, "softmax"),), (np.array([[0.0, 1.0]]),), 1)
    new = sgd_step(m, [np.array([[0.0, 0.5]])], 0.1)
    assert new.weights[0][0, 1] == 0.95
    assert m.weights[0][0, 1] == 1.0
    same = sgd_step(m, [np.zeros((1, 2))], 0.1)
    assert np.array_equal(same.weights[0], m.weights[0])


def test_sgd_step_linearity_and_purity():
    m = init_mlp(3, NET_684, 0)
    rng = np.random.default_rng(0)
    g1 = [rng.normal(size=w.shape) for w in m.weights]
    g2 = [rng.normal(size=w.shape) for w in m.weights]
    two = sgd_step(sgd_step(m, g1, 0.1), g2, 0.1)
    one = sgd_step(m, [a + b for a, b in zip(g1, g2)], 0.1)
    assert all(np.allclose(a, b, atol=1e-15) for a, b in zip(two.weights, one.weights))
    again = sgd_step(m, g1, 0.1)
    assert all(np.array_equal(a, b) for a, b in zip(sgd_step(m, g1, 0.1).weights, again.weights))


def test_sgd_step_rejects_non_finite():
    m = init_mlp(3, NET_684, 0)
    bad = [np.full(w.shape, np.nan) for w in m.weights]
    with pytest.raises(TrainingError):
        sgd_step(m, bad, 0.1)


def _blob_task(seed):
    X, y, _ = make_blobs(seed, n_per=100, sigma=0.1)
    X = np.hstack([X, np.random.default_rng(seed + 100).uniform(size=(len(X), 4))])
    perm = np.random.default_rng(seed).permutation(len(X))
    return X[perm], y[perm]


def test_zero_epochs_is_identity():
    m = init_mlp(6, NET_684, 0)
    X, y = _blob_task(0)
    out, hist = train_mlp(m, X, onehot(y, 4), config=TrainConfig(epochs=0))
    assert out is m and hist.iteration_loss == []


def test_training_is_deterministic():
    m = init_mlp(6, NET_684, 0)
    X, y = _blob_task(1)
    cfg = TrainConfig(epochs=5, seed=4)
    a, ha = train_mlp(m, X, onehot(y, 4), config=cfg)
    b, hb = train_mlp(m, X, onehot(y, 4), config=cfg)
    assert all(np.array_equal(x, z) for x, z in zip(a.weights, b.weights))
    assert ha.iteration_loss == hb.iteration_loss
    assert len(ha.iteration_loss) == 5 * math.ceil(len(X) / cfg.batch_size)


def test_training_leaves_input_model_untouched():
    m = init_mlp(6, NET_684, 0)
    before = [w.copy() for w in m.weights]
    X, y = _blob_task(2)
    train_mlp(m, X, onehot(y, 4), config=TrainConfig(epochs=2))
    assert all(np.array_equal(a, b) for a, b in zip(before, m.weights))


def test_batch_size_larger_than_data_rejected():
    X, y = _blob_task(0)
    with pytest.raises(ValidationError):
        train_mlp(init_mlp(6, NET_684), X[:10], onehot(y[:10], 4), config=TrainConfig(batch_size=11))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    X, y = _blob_task(0)
    with pytest.raises(TrainingError, match="non-finite"):
        train_mlp(init_mlp(6, NET_684), X * 1e300, onehot(y, 4), config=TrainConfig(epochs=3, eta=1e300))


def test_early_stopping_returns_best_snapshot():
    X, y = _blob_task(3)
    Y = onehot(y, 4)
    # validation labels are noise, so validation loss stops improving early
    vY = onehot(np.random.default_rng(0).integers(0, 4, 100), 4)
    cfg = TrainConfig(epochs=200, early_stop_patience=3, eta=0.1)
    m, h = train_mlp(init_mlp(6, NET_684, 0), X, Y, (X[:100], vY), cfg)
    assert h.stopped_early
    assert len(h.val_loss) == h.best_epoch + 4
    got = cross_entropy_loss(forward(m, X[:100]), vY, m)
    assert math.isclose(got, h.val_loss[h.best_epoch], rel_tol=1e-12)


@pytest.mark.parametrize("eta", [0.05, 0.01])
def test_epoch_loss_decreases_early(eta):
    ok = 0
    for seed in range(10):
        X, y, _ = make_blobs(seed, n_per=500, sigma=0.1)
        X = np.hstack([X, np.random.default_rng(seed + 100).uniform(size=(len(X), 4))])
        m = init_mlp(6, [LayerSpec(16, "relu"), LayerSpec(4, "softmax")], seed)
        _, h = train_mlp(m, X, onehot(y, 4), config=TrainConfig(epochs=10, eta=eta, seed=seed))
        ok += bool(np.all(np.diff(h.epoch_loss) <= 0))
    assert ok >= 9


def test_predict_class_matches_probs():
    m = init_mlp(6, [LayerSpec(8, "relu"), LayerSpec(4, "softmax")], 5)
    X = np.random.default_rng(5).normal(size=(100, 6))
    assert np.array_equal(predict_class(m, X), predict_proba(m, X).argmax(axis=1))


def test_save_load_bit_exact(tmp_path):
    m = init_mlp(6, [LayerSpec(8, "relu"), LayerSpec(4, "softmax")], 9)
    save_mlp(m, tmp_path / "m.json")
    back = load_mlp(tmp_path / "m.json")
    assert back.layers == m.layers and back.n_0 == m.n_0
    assert all(np.array_equal(a, b) for a, b in zip(back.weights, m.weights))


def test_from_dict_rejects_bad_shapes():
    d = init_mlp(3, NET_684).to_dict()
    d["n_0"] = 4
    with pytest.raises(ValidationError):
        MlpModel.from_dict(d)
