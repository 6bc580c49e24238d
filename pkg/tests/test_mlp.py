import math

import numpy as np
import pytest
from scipy.special import logsumexp

from privforget.data import EncodedMatrix, encode
from privforget.mlp import (
    MlpModel,
    ModelError,
    TrainConfig,
    TrainingDiverged,
    _batch_gradients,
    accuracy,
    auc_utility,
    entropy_per_example,
    finetune,
    forward,
    init,
    load_model,
    loss_per_example,
    mean_loss,
    models_equal,
    save_model,
    train,
)

from conftest import make_dataset


def matrix(features, labels):
    return EncodedMatrix(np.asarray(features, float), np.asarray(labels), (), {})


def ref_loss(weights, biases, x, y):
    """Mean cross-entropy computed independently of the training code."""
    h = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if i < len(weights) - 1 else z
    return float(np.mean(logsumexp(h, axis=1) - h[np.arange(len(y)), y]))


def fd_gradient_check(dims, seed, n=8, h=1e-6):
    """Max relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    weights = [rng.normal(size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [rng.normal(size=b) for b in dims[1:]]
    x = rng.normal(size=(n, dims[0]))
    y = rng.integers(0, dims[-1], size=n)

    _, grads_w, grads_b = _batch_gradients((weights, biases), x, y, dims[-1])

    worst = 0.0
    for params, grads in ((weights, grads_w), (biases, grads_b)):
        for p, g in zip(params, grads):
            flat = p.reshape(-1)
            for idx in range(flat.size):
                keep = flat[idx]
                flat[idx] = keep + h
                up = ref_loss(weights, biases, x, y)
                flat[idx] = keep - h
                down = ref_loss(weights, biases, x, y)
                flat[idx] = keep
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(g.reshape(-1)[idx]), 1e-8)
                worst = max(worst, abs(fd - g.reshape(-1)[idx]) / denom)
    return worst


def test_gradients_match_finite_differences():
    for seed in range(3):
        assert fd_gradient_check((4, 5, 3), seed) < 1e-5


def test_gradients_match_finite_differences_deep():
    assert fd_gradient_check((3, 4, 4, 2), 11) < 1e-5


def test_init_is_deterministic_and_glorot_bounded():
    a = init((3, 7, 2), seed=4)
    b = init((3, 7, 2), seed=4)
    c = init((3, 7, 2), seed=5)
    assert models_equal(a, b)
    assert not models_equal(a, c)
    for w, (fan_in, fan_out) in zip(a.weights, [(3, 7), (7, 2)]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(w).max() <= bound
    for bias in a.biases:
        assert (bias == 0.0).all()


def test_zero_model_is_uniform():
    model = MlpModel((4, 3), (np.zeros((4, 3)),), (np.zeros(3),))
    x = np.random.default_rng(0).normal(size=(5, 4))
    p = forward(model, x)
    assert np.allclose(p, 1.0 / 3)
    data = matrix(x, [0, 1, 2, 0, 1])
    assert mean_loss(model, data) == pytest.approx(math.log(3), rel=1e-12)
    assert np.allclose(entropy_per_example(model, x), math.log(3))


def test_forward_hand_example():
    # single linear layer, identity weights: logits equal the inputs
    model = MlpModel((2, 2), (np.eye(2),), (np.zeros(2),))
    p = forward(model, np.array([[1.0, 0.0]]))
    assert p[0, 0] == pytest.approx(math.e / (math.e + 1.0), rel=1e-12)
    assert p.sum() == pytest.approx(1.0)


def test_loss_matches_forward_probabilities(small_dataset):
    em = encode(small_dataset)
    model = init((em.width, 6, 2), seed=0)
    losses = loss_per_example(model, em)
    probs = forward(model, em.features)
    direct = -np.log(probs[np.arange(em.n_rows), em.labels])
    assert np.allclose(losses, direct, rtol=1e-10)


def test_zero_epochs_is_identity(small_dataset):
    em = encode(small_dataset)
    model = init((em.width, 5, 2), seed=1)
    out = train(model, em, TrainConfig(epochs=0))
    assert models_equal(model, out)


def test_training_is_deterministic(small_dataset):
    em = encode(small_dataset)
    cfg = TrainConfig(batch_size=32, epochs=3, seed=9)
    model = init((em.width, 8, 2), seed=2)
    a = train(model, em, cfg)
    b = train(model, em, cfg)
    assert models_equal(a, b)
    c = train(model, em, cfg.with_(seed=10))
    assert not models_equal(a, c)


def test_training_reduces_loss_and_fits_blobs():
    ds = make_dataset(400, seed=3, class_sep=4.0)
    em = encode(ds)
    model = init((em.width, 16, 2), seed=0)
    before = mean_loss(model, em)
    trained = train(model, em, TrainConfig(batch_size=64, epochs=30, seed=0))
    after = mean_loss(trained, em)
    assert after < before * 0.5
    assert accuracy(trained, em) >= 0.99


def test_divergence_is_reported():
    ds = make_dataset(64, seed=0)
    em = encode(ds)
    model = init((em.width, 4, 2), seed=0)
    cfg = TrainConfig(batch_size=16, epochs=3, learning_rate=1e200)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged, match="epoch"):
        train(model, em, cfg)


def test_label_and_width_validation(small_dataset):
    em = encode(small_dataset)
    model = init((em.width, 4, 2), seed=0)
    bad_labels = matrix(em.features, np.full(em.n_rows, 5))
    with pytest.raises(ModelError, match="class range"):
        loss_per_example(model, bad_labels)
    with pytest.raises(ModelError, match="input columns"):
        forward(model, em.features[:, :3])
    with pytest.raises(ModelError, match="class range"):
        train(model, bad_labels, TrainConfig(epochs=1))


def test_model_shape_validation():
    with pytest.raises(ModelError, match="layer_dims"):
        MlpModel((4,), (), ())
    with pytest.raises(ModelError, match="shapes"):
        MlpModel((2, 3), (np.zeros((3, 2)),), (np.zeros(3),))
    with pytest.raises(ModelError, match="non-finite"):
        MlpModel((2, 2), (np.full((2, 2), np.inf),), (np.zeros(2),))


def test_train_config_validation():
    with pytest.raises(ModelError):
        TrainConfig(batch_size=0)
    with pytest.raises(ModelError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ModelError):
        TrainConfig(epochs=-1)
    with pytest.raises(ModelError):
        TrainConfig(seed=-1)


def test_finetune_provenance_and_validation(small_dataset):
    em = encode(small_dataset)
    base = init((em.width, 4, 2), seed=0, provenance="protected(k=5)")
    tuned = finetune(base, em, 2, TrainConfig(seed=3))
    assert tuned.provenance == "finetuned(protected(k=5),epochs=2)"
    assert tuned.train_seed == 3
    with pytest.raises(ModelError, match="non-negative"):
        finetune(base, em, -1, TrainConfig())


def test_auc_utility():
    # scores proportional to the first feature separate the classes perfectly
    model = MlpModel((1, 2), (np.array([[0.0, 4.0]]),), (np.zeros(2),))
    data = matrix([[-2.0], [-1.0], [1.0], [2.0]], [0, 0, 1, 1])
    assert auc_utility(model, data) == 1.0
    three = init((1, 3), seed=0)
    with pytest.raises(ModelError, match="binary"):
        auc_utility(three, data)


def test_empty_metrics_raise():
    model = init((2, 2), seed=0)
    empty = matrix(np.empty((0, 2)), np.empty(0, dtype=int))
    with pytest.raises(ModelError):
        mean_loss(model, empty)
    with pytest.raises(ModelError):
        accuracy(model, empty)


def test_save_load_round_trip(tmp_path):
    ds = make_dataset(80, seed=1)
    em = encode(ds)
    model = train(
        init((em.width, 6, 2), seed=7, provenance="protected(eps=0.5)"),
        em,
        TrainConfig(batch_size=20, epochs=2, seed=7),
    )
    path = tmp_path / "m.model"
    save_model(model, path)
    back = load_model(path)
    assert models_equal(model, back)
    assert back.provenance == model.provenance
    assert back.train_seed == model.train_seed
    assert back.layer_dims == model.layer_dims


def test_load_model_rejects_corruption(tmp_path):
    model = init((2, 3, 2), seed=0)
    path = tmp_path / "m.model"
    save_model(model, path)
    raw = path.read_bytes()

    (tmp_path / "magic.model").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ModelError, match="not a model file"):
        load_model(tmp_path / "magic.model")

    (tmp_path / "short.model").write_bytes(raw[:-9])
    with pytest.raises(ModelError, match="truncated"):
        load_model(tmp_path / "short.model")

    (tmp_path / "long.model").write_bytes(raw + b"\x00")
    with pytest.raises(ModelError, match="trailing"):
        load_model(tmp_path / "long.model")
