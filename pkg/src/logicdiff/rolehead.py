"""Five-way role classifier over hidden states: forward, analytic gradients, training, checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import InvalidConfigError, InvalidInputError, NUM_ROLES, Role, ShapeError

LN_EPS = 1e-5
CHECKPOINT_MAGIC = b"LDRH"
CHECKPOINT_VERSION = 1
MOMENTUM = 0.9

_PARAM_ORDER = ("ln_gain", "ln_bias", "w1", "b1", "w2", "b2")


@dataclass
class RoleHeadParams:
    """LayerNorm gain/bias plus a 2-layer MLP with hidden width D/4.

    Tensors are stored float32 so checkpoints round-trip bitwise; math is
    done in float64.
    """

    ln_gain: np.ndarray
    ln_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in _PARAM_ORDER:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float32))
        d = self.ln_gain.shape[0]
        if d % 4 != 0:
            raise InvalidConfigError(f"hidden dimension {d} must be divisible by 4")
        h = d // 4
        expected = {
            "ln_gain": (d,), "ln_bias": (d,),
            "w1": (h, d), "b1": (h,),
            "w2": (NUM_ROLES, h), "b2": (NUM_ROLES,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError(f"dropout_rate {self.dropout_rate} outside [0, 1)")

    @property
    def d(self) -> int:
        return self.ln_gain.shape[0]

    @property
    def hidden(self) -> int:
        return self.d // 4

    @property
    def param_count(self) -> int:
        return 2 * self.d + self.hidden * (self.d + 1) + NUM_ROLES * (self.hidden + 1)

    def copy(self) -> "RoleHeadParams":
        return RoleHeadParams(*(getattr(self, n).copy() for n in _PARAM_ORDER), self.dropout_rate)

    def tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in _PARAM_ORDER}


def init_params(d: int, rng: np.random.Generator, dropout_rate: float = 0.1) -> RoleHeadParams:
    h = d // 4
    return RoleHeadParams(
        ln_gain=np.ones(d, dtype=np.float32),
        ln_bias=np.zeros(d, dtype=np.float32),
        w1=(rng.standard_normal((h, d)) * np.sqrt(2.0 / d)).astype(np.float32),
        b1=np.zeros(h, dtype=np.float32),
        w2=(rng.standard_normal((NUM_ROLES, h)) * np.sqrt(2.0 / h)).astype(np.float32),
        b2=np.zeros(NUM_ROLES, dtype=np.float32),
        dropout_rate=dropout_rate,
    )


def layer_norm(h: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Normalize with population variance and eps=1e-5; handles constant input."""
    h = np.asarray(h, dtype=np.float64)
    mu = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    xhat = (h - mu) / np.sqrt(var + LN_EPS)
    return np.asarray(gain, dtype=np.float64) * xhat + np.asarray(bias, dtype=np.float64)


def gelu(x: np.ndarray) -> np.ndarray:
    # Exact Gaussian-CDF form, not tanh approximation.
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_parts(params: RoleHeadParams, h: np.ndarray, dropout_mask: np.ndarray | None):
    """Batched forward; h is (B, D). Returns logits plus cached activations."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if h.shape[1] != params.d:
        raise ShapeError(f"input dimension {h.shape[1]} != head dimension {params.d}")
    ln = layer_norm(h, params.ln_gain, params.ln_bias)
    z1 = ln @ params.w1.astype(np.float64).T + params.b1.astype(np.float64)
    a1 = gelu(z1)
    if dropout_mask is not None:
        a1 = a1 * dropout_mask
    logits = a1 @ params.w2.astype(np.float64).T + params.b2.astype(np.float64)
    return logits, (h, ln, z1, a1)


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    # Inverted scaling: kept units are multiplied by 1/(1-p).
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def role_head_forward(
    params: RoleHeadParams,
    h: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for one hidden vector. Dropout is active only when training."""
    mask = None
    if training and params.dropout_rate > 0.0:
        if rng is None:
            raise InvalidInputError("training-mode forward needs an rng for dropout")
        mask = _dropout_mask((1, params.hidden), params.dropout_rate, rng)
    logits, _ = _forward_parts(params, np.atleast_2d(h), mask)
    return logits[0]


def forward_batch(params: RoleHeadParams, h: np.ndarray) -> np.ndarray:
    logits, _ = _forward_parts(params, h, None)
    return logits


def predict_role(params: RoleHeadParams, h: np.ndarray) -> Role:
    """Argmax role; ties resolve to the lowest role id (np.argmax takes the first max)."""
    logits = role_head_forward(params, h, training=False)
    return Role(int(np.argmax(logits)))


def predict_roles_batch(params: RoleHeadParams, h: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(params, h), axis=-1)


def weighted_ce_loss(logits: np.ndarray, gold: Role, weights) -> tuple[float, np.ndarray]:
    """Class-weighted cross entropy with max-subtraction stabilization.

    Returns the scalar loss and its gradient w.r.t. the logits:
    w(gold) * (softmax(logits) - onehot(gold)).
    """
    logits = np.asarray(logits, dtype=np.float64)
    w = float(weights[Role(int(gold))])
    z = logits - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    loss = -w * log_probs[int(gold)]
    grad = w * np.exp(log_probs)
    grad[int(gold)] -= w
    return float(loss), grad


def loss_and_grads(
    params: RoleHeadParams,
    h: np.ndarray,
    golds: np.ndarray,
    weights,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean weighted-CE loss over a batch and gradients for every parameter tensor."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    golds = np.atleast_1d(np.asarray(golds, dtype=np.int64))
    n = h.shape[0]
    w_vec = np.array([weights[Role(int(g))] for g in golds], dtype=np.float64)

    logits, (x, ln, z1, a1) = _forward_parts(params, h, dropout_mask)
    probs = softmax(logits)
    log_probs = logits - logits.max(axis=1, keepdims=True)
    log_probs = log_probs - np.log(np.exp(log_probs).sum(axis=1, keepdims=True))
    loss = float(np.mean(-w_vec * log_probs[np.arange(n), golds]))

    dlogits = probs * w_vec[:, None]
    dlogits[np.arange(n), golds] -= w_vec
    dlogits /= n

    db2 = dlogits.sum(axis=0)
    dw2 = dlogits.T @ a1
    da1 = dlogits @ params.w2.astype(np.float64)
    if dropout_mask is not None:
        da1 = da1 * dropout_mask
    dz1 = da1 * gelu_grad(z1)
    db1 = dz1.sum(axis=0)
    dw1 = dz1.T @ ln
    dln = dz1 @ params.w1.astype(np.float64)

    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    istd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * istd
    dgain = (dln * xhat).sum(axis=0)
    dbias = dln.sum(axis=0)
    dxhat = dln * params.ln_gain.astype(np.float64)
    # Population-variance LayerNorm backward.
    dx = istd * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    _ = dx  # gradient w.r.t. the frozen hidden state; computed for completeness
    grads = {"ln_gain": dgain, "ln_bias": dbias, "w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 0.05
    val_fraction: float = 0.1
    mask_ratio_law: str = "uniform"
    rng_seed: int = 0
    dropout_rate: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidConfigError(f"val_fraction {self.val_fraction} outside (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.mask_ratio_law != "uniform":
            raise InvalidConfigError(f"unsupported mask_ratio_law {self.mask_ratio_law!r}")


@dataclass(frozen=True)
class TrainMetrics:
    val_accuracy: float
    per_class_recall: dict[int, float]
    n_train: int
    n_val: int

    def to_dict(self) -> dict:
        return {
            "val_accuracy": self.val_accuracy,
            "per_class_recall": {str(k): v for k, v in self.per_class_recall.items()},
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


def stratified_split(y: np.ndarray, val_fraction: float, rng: np.random.Generator):
    """Per-class held-out split; every class with >= 2 members contributes to val."""
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(val_fraction * len(idx)))
        if len(idx) >= 2:
            n_val = min(max(n_val, 1), len(idx) - 1)
        else:
            n_val = 0
        val_idx.extend(idx[:n_val])
        train_idx.extend(idx[n_val:])
    return np.sort(np.array(train_idx, dtype=np.int64)), np.sort(np.array(val_idx, dtype=np.int64))


def train_role_head(
    dataset: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    weights=None,
    params0: RoleHeadParams | None = None,
) -> tuple[RoleHeadParams, TrainMetrics]:
    """Mini-batch SGD with momentum 0.9 on the class-weighted CE.

    Deterministic under cfg.rng_seed: init, split, shuffles, and dropout all
    draw from one seeded generator in a fixed order.
    """
    from .labeling import ClassWeights

    x, y = dataset
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.size == 0 or len(x) != len(y):
        raise InvalidInputError("dataset must be non-empty with aligned features and labels")
    if len(np.unique(y)) < 2:
        raise InvalidInputError("dataset must contain at least 2 classes")
    if weights is None:
        weights = ClassWeights()

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.rng_seed & 0xFFFFFFFFFFFFFFFF)))
    params = params0.copy() if params0 is not None else init_params(x.shape[1], rng, cfg.dropout_rate)
    train_idx, val_idx = stratified_split(y, cfg.val_fraction, rng)

    velocity = {n: np.zeros_like(t, dtype=np.float64) for n, t in params.tensors().items()}
    for _ in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            mask = None
            if params.dropout_rate > 0.0:
                mask = _dropout_mask((len(batch), params.hidden), params.dropout_rate, rng)
            _, grads = loss_and_grads(params, x[batch], y[batch], weights, mask)
            for name in _PARAM_ORDER:
                velocity[name] = MOMENTUM * velocity[name] + grads[name]
                updated = getattr(params, name).astype(np.float64) - cfg.learning_rate * velocity[name]
                setattr(params, name, updated.astype(np.float32))

    pred = predict_roles_batch(params, x[val_idx])
    gold = y[val_idx]
    val_accuracy = float(np.mean(pred == gold)) if len(gold) else 0.0
    recall = {}
    for cls in np.unique(gold):
        members = gold == cls
        recall[int(cls)] = float(np.mean(pred[members] == cls))
    return params, TrainMetrics(val_accuracy, recall, len(train_idx), len(val_idx))


def save_checkpoint(params: RoleHeadParams, path) -> None:
    """magic + (version, D, R) header, then little-endian float32 tensors in declaration order."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", CHECKPOINT_VERSION, params.d, NUM_ROLES))
        for name in _PARAM_ORDER:
            f.write(np.ascontiguousarray(getattr(params, name), dtype="<f4").tobytes())


def load_checkpoint(path) -> RoleHeadParams:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"not a role-head checkpoint: bad magic {blob[:4]!r}")
    version, d, r = struct.unpack("<III", blob[4:16])
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {version}")
    if r != NUM_ROLES:
        raise InvalidInputError(f"checkpoint has {r} roles, expected {NUM_ROLES}")
    h = d // 4
    shapes = [(d,), (d,), (h, d), (h,), (NUM_ROLES, h), (NUM_ROLES,)]
    offset = 16
    tensors = []
    for shape in shapes:
        n = int(np.prod(shape))
        end = offset + 4 * n
        if end > len(blob):
            raise InvalidInputError("checkpoint truncated")
        tensors.append(np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy())
        offset = end
    if offset != len(blob):
        raise InvalidInputError("checkpoint has trailing bytes")
    return RoleHeadParams(*tensors)


def collect_hidden_dataset(problems, trap, seed: int, min_examples: int):
    """Hidden vectors at masked positions, labeled by the gold role hidden there.

    Each visit masks a solution at a ratio drawn uniformly from (0, 1] and
    runs the synthetic backend forward; only masked-position rows are kept.
    """
    from .backends.synthetic import SyntheticBackend
    from .core import initial_state
    from .corpus import default_vocab

    if not problems:
        raise InvalidInputError("need at least one problem to collect hidden states")
    vocab = default_vocab()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF)))
    xs: list[np.ndarray] = []
    ys: list[int] = []
    i = 0
    while len(ys) < min_examples:
        problem = problems[i % len(problems)]
        i += 1
        sol_ids = [vocab.encode(t) for t in problem.solution_tokens()]
        gen_len = len(sol_ids)
        backend = SyntheticBackend(problem, trap, vocab, gen_len=gen_len)
        ratio = 1.0 - rng.random()
        k = max(1, int(round(ratio * gen_len)))
        masked = {int(m) for m in rng.choice(gen_len, size=k, replace=False)}
        state = initial_state([vocab.encode(t) for t in problem.question_tokens()], gen_len)
        for off in range(gen_len):
            if off not in masked:
                state.ids[state.prompt_len + off] = sol_ids[off]
        out = backend.forward(state)
        for off in sorted(masked):
            xs.append(out.hidden[state.prompt_len + off])
            ys.append(problem.gold_roles[off])
    return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64)
