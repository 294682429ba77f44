"""Role head: forward math, analytic gradients vs finite differences, training, checkpoints."""

import numpy as np
import pytest
from scipy.special import erf

from logicdiff.backends import TrapConfig
from logicdiff.core import InvalidConfigError, InvalidInputError, NUM_ROLES, Role
from logicdiff.labeling import ClassWeights
from logicdiff.rolehead import (
    RoleHeadParams,
    TrainConfig,
    collect_hidden_dataset,
    forward_batch,
    gelu,
    gelu_grad,
    init_params,
    layer_norm,
    load_checkpoint,
    loss_and_grads,
    predict_role,
    predict_roles_batch,
    role_head_forward,
    save_checkpoint,
    softmax,
    stratified_split,
    train_role_head,
    weighted_ce_loss,
)


def _head(d=16, seed=0, dropout=0.0):
    return init_params(d, np.random.default_rng(seed), dropout_rate=dropout)


def test_param_count_formula():
    for d in (8, 16, 32, 64):
        params = _head(d)
        expected = 2 * d + (d // 4) * (d + 1) + NUM_ROLES * (d // 4 + 1)
        actual = sum(t.size for t in params.tensors().values())
        assert params.param_count == expected == actual


def test_param_count_at_transformer_scale():
    params = _head(4096)
    assert params.param_count == 4_208_645


def test_dimension_must_divide_by_four():
    with pytest.raises(InvalidConfigError):
        _head(10)


def test_gelu_exact_form():
    x = np.linspace(-4, 4, 41)
    assert np.allclose(gelu(x), x * 0.5 * (1 + erf(x / np.sqrt(2))), atol=0.0)
    # distinguishable from the tanh approximation at moderate inputs
    tanh_approx = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    assert np.max(np.abs(gelu(x) - tanh_approx)) > 1e-5


def test_gelu_grad_matches_numeric_derivative():
    x = np.linspace(-3.5, 3.5, 29)
    h = 1e-6
    numeric = (gelu(x + h) - gelu(x - h)) / (2 * h)
    assert np.allclose(gelu_grad(x), numeric, atol=1e-8)


def test_layer_norm_moments_and_constant_input():
    rng = np.random.default_rng(3)
    h = rng.normal(2.0, 5.0, size=(10, 24))
    out = layer_norm(h, np.ones(24), np.zeros(24))
    assert np.allclose(out.mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=1), 1.0, atol=1e-4)  # eps shrinks variance slightly
    flat = layer_norm(np.full((1, 24), 7.0), np.ones(24), np.zeros(24))
    assert np.all(np.isfinite(flat))
    assert np.allclose(flat, 0.0)


def test_softmax_normalizes_and_shifts():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(6, 5)) * 50
    p = softmax(z)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.allclose(p, softmax(z + 1234.5))
    assert np.all(np.isfinite(softmax(np.array([1e4, -1e4, 0.0]))))


def test_weighted_ce_loss_against_manual_oracle():
    rng = np.random.default_rng(5)
    weights = ClassWeights()
    for _ in range(20):
        logits = rng.normal(size=NUM_ROLES) * 3
        gold = Role(int(rng.integers(NUM_ROLES)))
        loss, grad = weighted_ce_loss(logits, gold, weights)
        z = logits - logits.max()
        probs = np.exp(z) / np.exp(z).sum()
        oracle = -weights[gold] * np.log(probs[int(gold)])
        assert loss == pytest.approx(oracle, rel=1e-12)
        onehot = np.eye(NUM_ROLES)[int(gold)]
        assert np.allclose(grad, weights[gold] * (probs - onehot), atol=1e-12)


def test_weighted_ce_grad_matches_finite_differences():
    rng = np.random.default_rng(6)
    weights = ClassWeights()
    logits = rng.normal(size=NUM_ROLES)
    gold = Role.CONNECTIVE
    _, grad = weighted_ce_loss(logits, gold, weights)
    h = 1e-6
    for j in range(NUM_ROLES):
        up, dn = logits.copy(), logits.copy()
        up[j] += h
        dn[j] -= h
        numeric = (weighted_ce_loss(up, gold, weights)[0] - weighted_ce_loss(dn, gold, weights)[0]) / (2 * h)
        assert grad[j] == pytest.approx(numeric, abs=1e-8)


def _fd_check(params, x, y, weights, tensor, index, h=1e-3):
    """Central finite difference through the float32 parameter storage."""
    original = getattr(params, tensor).copy()

    def loss_with(value):
        t = original.copy()
        t.flat[index] = np.float32(value)
        setattr(params, tensor, t)
        loss, _ = loss_and_grads(params, x, y, weights)
        return loss

    v = float(original.flat[index])
    up = float(np.float32(v + h))
    dn = float(np.float32(v - h))
    numeric = (loss_with(up) - loss_with(dn)) / (up - dn)
    setattr(params, tensor, original)
    return numeric


def test_all_parameter_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    params = _head(d=12, seed=1)
    x = rng.normal(size=(6, 12))
    y = np.array([0, 1, 2, 3, 4, 2])
    weights = ClassWeights()
    _, grads = loss_and_grads(params, x, y, weights)
    for tensor in ("ln_gain", "ln_bias", "w1", "b1", "w2", "b2"):
        size = getattr(params, tensor).size
        for index in rng.choice(size, size=min(6, size), replace=False):
            numeric = _fd_check(params, x, y, weights, tensor, int(index))
            analytic = grads[tensor].flat[int(index)]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4, (tensor, index)


def test_forward_shapes_and_tie_break():
    params = _head(d=8, seed=2)
    logits = role_head_forward(params, np.zeros(8))
    assert logits.shape == (NUM_ROLES,)
    # zero weights force exactly tied logits; argmax must take the first
    params.w2 = np.zeros_like(params.w2)
    params.b2 = np.zeros_like(params.b2)
    assert predict_role(params, np.ones(8)) == Role.PREMISE


def test_forward_rejects_wrong_width():
    params = _head(d=8)
    with pytest.raises(Exception):
        role_head_forward(params, np.zeros(12))


def test_dropout_only_in_training_mode():
    params = _head(d=16, seed=3, dropout=0.5)
    h = np.random.default_rng(8).normal(size=16)
    a = role_head_forward(params, h)
    b = role_head_forward(params, h)
    assert np.array_equal(a, b)
    rng = np.random.default_rng(9)
    t1 = role_head_forward(params, h, training=True, rng=rng)
    t2 = role_head_forward(params, h, training=True, rng=rng)
    assert not np.array_equal(t1, t2)
    with pytest.raises(InvalidInputError):
        role_head_forward(params, h, training=True)


def _blob_dataset(n_per_class=200, d=16, seed=0):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for cls in range(NUM_ROLES):
        center = np.zeros(d)
        center[cls] = 3.0
        xs.append(center + rng.normal(scale=0.6, size=(n_per_class, d)))
        ys.append(np.full(n_per_class, cls))
    return np.concatenate(xs), np.concatenate(ys)


def test_training_learns_separable_blobs():
    x, y = _blob_dataset()
    params, metrics = train_role_head((x, y), TrainConfig(epochs=8, rng_seed=1))
    assert metrics.val_accuracy > 0.9
    assert set(metrics.per_class_recall) == set(range(NUM_ROLES))
    assert metrics.n_train + metrics.n_val == len(y)


def test_training_is_deterministic():
    x, y = _blob_dataset(n_per_class=80)
    cfg = TrainConfig(epochs=3, rng_seed=6)
    a, ma = train_role_head((x, y), cfg)
    b, mb = train_role_head((x, y), cfg)
    for name, tensor in a.tensors().items():
        assert np.array_equal(tensor, b.tensors()[name]), name
    assert ma == mb
    c, _ = train_role_head((x, y), TrainConfig(epochs=3, rng_seed=7))
    assert any(not np.array_equal(a.tensors()[n], c.tensors()[n]) for n in a.tensors())


def test_zero_learning_rate_leaves_params_unchanged():
    x, y = _blob_dataset(n_per_class=40)
    params0 = _head(d=16, seed=5)
    trained, _ = train_role_head(
        (x, y), TrainConfig(epochs=4, learning_rate=0.0, rng_seed=2), params0=params0
    )
    for name, tensor in trained.tensors().items():
        assert np.array_equal(tensor, params0.tensors()[name]), name


def test_training_input_validation():
    with pytest.raises(InvalidInputError):
        train_role_head((np.zeros((0, 8)), np.zeros(0, dtype=int)), TrainConfig())
    with pytest.raises(InvalidInputError):
        train_role_head((np.zeros((5, 8)), np.zeros(5, dtype=int)), TrainConfig())


def test_stratified_split_properties():
    y = np.array([0] * 50 + [1] * 9 + [2] * 2 + [4] * 39)
    train_idx, val_idx = stratified_split(y, 0.1, np.random.default_rng(0))
    assert len(set(train_idx) & set(val_idx)) == 0
    assert len(train_idx) + len(val_idx) == len(y)
    for cls in (0, 1, 2, 4):
        assert np.sum(y[val_idx] == cls) >= 1
        assert np.sum(y[train_idx] == cls) >= 1


def test_checkpoint_round_trip_bitwise(tmp_path):
    params = _head(d=24, seed=4, dropout=0.1)
    path = tmp_path / "head.ckpt"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    assert blob[:4] == b"LDRH"
    again = load_checkpoint(path)
    for name, tensor in params.tensors().items():
        assert np.array_equal(tensor, again.tensors()[name]), name
    assert np.array_equal(
        forward_batch(params, np.ones((2, 24))), forward_batch(again, np.ones((2, 24)))
    )


def test_checkpoint_rejects_corruption(tmp_path):
    params = _head(d=8)
    path = tmp_path / "head.ckpt"
    save_checkpoint(params, path)
    blob = path.read_bytes()

    bad_magic = tmp_path / "bad_magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(InvalidInputError, match="magic"):
        load_checkpoint(bad_magic)

    bad_version = tmp_path / "bad_version.ckpt"
    bad_version.write_bytes(blob[:4] + (99).to_bytes(4, "little") + blob[8:])
    with pytest.raises(InvalidInputError, match="version"):
        load_checkpoint(bad_version)

    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(blob[:-5])
    with pytest.raises(InvalidInputError, match="truncated"):
        load_checkpoint(truncated)

    trailing = tmp_path / "trailing.ckpt"
    trailing.write_bytes(blob + b"\x00\x00\x00\x00")
    with pytest.raises(InvalidInputError, match="trailing"):
        load_checkpoint(trailing)


def test_collect_hidden_dataset_shapes_and_determinism(small_problems):
    trap = TrapConfig()
    x1, y1 = collect_hidden_dataset(small_problems[:10], trap, seed=3, min_examples=500)
    x2, y2 = collect_hidden_dataset(small_problems[:10], trap, seed=3, min_examples=500)
    assert x1.shape[0] >= 500
    assert x1.shape[1] == trap.d_syn
    assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
    assert set(np.unique(y1)) <= {int(r) for r in Role}
    x3, _ = collect_hidden_dataset(small_problems[:10], trap, seed=4, min_examples=500)
    n = min(len(x1), len(x3))
    assert not np.array_equal(x1[:n], x3[:n])


def test_predict_roles_batch_matches_single(small_problems, trained_head):
    rng = np.random.default_rng(11)
    x, _ = collect_hidden_dataset(small_problems[:4], TrapConfig(), seed=9, min_examples=40)
    batch = predict_roles_batch(trained_head, x)
    for i in rng.choice(len(x), size=10, replace=False):
        assert batch[i] == int(predict_role(trained_head, x[i]))
