"""Channel Transform Kernels: a learnable stack of three 1x1 channel-mixing
layers with ReLU, composed with approximate rank pooling and a linear
softmax head, trained end-to-end by full-batch gradient descent.

The stack maps each scene-flow triple (X_mu, X_nu, X_omega) pixelwise to a
transformed triple (Y1, Y2, Y3); pooling the transformed sequence yields the
CTKRP action map.
"""

from dataclasses import dataclass, field

import numpy as np

from .encode import ActionMap, SceneFlowMap
from .errors import DataError
from .features import POOL_HW, pool_grid, pool_grid_backward
from .rankpool import approx_rank_pool_coefficients

_INIT_NOISE = 0.05


@dataclass
class ChannelKernelStack:
    """Three 3x3 mixing matrices (rows = output channels), each followed by
    elementwise ReLU. No bias terms."""

    layers: np.ndarray

    def __post_init__(self):
        layers = np.asarray(self.layers, dtype=np.float64)
        if layers.shape != (3, 3, 3):
            raise DataError("stack must hold exactly 3 layers of 3x3 weights")
        if not np.all(np.isfinite(layers)):
            raise DataError("stack weights must be finite")
        self.layers = layers

    @classmethod
    def identity(cls):
        return cls(np.stack([np.eye(3)] * 3))

    @classmethod
    def perturbed_identity(cls, rng):
        noise = rng.uniform(-_INIT_NOISE, _INIT_NOISE, size=(3, 3, 3))
        return cls(np.stack([np.eye(3)] * 3) + noise)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# sfam-ctk-stack v1\n")
            for k in range(3):
                for r in range(3):
                    fh.write(" ".join(repr(v) for v in self.layers[k, r]) + "\n")

    @classmethod
    def from_file(cls, path):
        values = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                values.extend(float(v) for v in line.split())
        if len(values) != 27:
            raise DataError(f"{path}: expected 27 weights, got {len(values)}")
        return cls(np.array(values).reshape(3, 3, 3))


def _forward_array(x, layers, keep_cache=False):
    """Apply the stack to a (3, H, W) array; optionally keep pre-activations
    and activations for backprop."""
    cache = [x]
    cur = x
    for k in range(3):
        pre = np.einsum("oc,chw->ohw", layers[k], cur)
        cur = np.maximum(pre, 0.0)
        if keep_cache:
            cache.append(pre)
            cache.append(cur)
    return (cur, cache) if keep_cache else cur


def ctk_forward(sfm, stack):
    """Transform one SFM through the stack."""
    x = np.stack(sfm.channels())
    y = _forward_array(x, stack.layers)
    return SceneFlowMap(y[0], y[1], y[2], sfm.index)


def ctk_encode(sfms, stack):
    """Transform every SFM, then approximate-rank-pool per output channel."""
    if not sfms:
        raise DataError("need at least one scene flow map")
    alphas = approx_rank_pool_coefficients(len(sfms))
    pooled = np.zeros((3,) + sfms[0].shape)
    for alpha, sfm in zip(alphas, sfms):
        pooled += alpha * _forward_array(np.stack(sfm.channels()), stack.layers)
    return ActionMap(pooled[0], pooled[1], pooled[2], "CTKRP")


def ctk_backward(sfms, stack, upstream):
    """Exact gradient of a scalar loss w.r.t. the 27 stack weights.

    ``upstream`` is the loss gradient w.r.t. the pooled (3, H, W) action
    map. Pooling is linear with the fixed coefficients, so each SFM's
    transformed output receives coefficient * upstream; that is then
    backpropagated through the three ReLU layers (subgradient 0 at exactly
    zero pre-activations).
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    alphas = approx_rank_pool_coefficients(len(sfms))
    grads = np.zeros((3, 3, 3))
    for alpha, sfm in zip(alphas, sfms):
        x = np.stack(sfm.channels())
        _, cache = _forward_array(x, stack.layers, keep_cache=True)
        # cache: [a0, z1, a1, z2, a2, z3, a3]
        delta = alpha * upstream
        for k in (2, 1, 0):
            pre = cache[2 * k + 1]
            act_in = cache[2 * k]
            delta = delta * (pre > 0)
            grads[k] += np.einsum("ohw,chw->oc", delta, act_in)
            if k > 0:
                delta = np.einsum("oc,ohw->chw", stack.layers[k], delta)
    return grads


@dataclass
class CtkTrainState:
    """Parameters and history of end-to-end CTK training."""

    stack: ChannelKernelStack
    head_w: np.ndarray
    head_b: np.ndarray
    learning_rate: float
    epoch: int = 0
    loss_history: list = field(default_factory=list)

    @classmethod
    def initialize(cls, num_classes, learning_rate=0.05, seed=0, pool_hw=POOL_HW):
        rng = np.random.default_rng(seed)
        stack = ChannelKernelStack.perturbed_identity(rng)
        feature_dim = 3 * pool_hw * pool_hw
        return cls(
            stack=stack,
            head_w=np.zeros((num_classes, feature_dim)),
            head_b=np.zeros(num_classes),
            learning_rate=learning_rate,
        )


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _encode_features(sfms, stack, pool_hw):
    amap = ctk_encode(sfms, stack)
    pooled = [pool_grid(c, pool_hw, pool_hw) for c in amap.channels()]
    return np.concatenate([p.ravel() for p in pooled])


def train_ctk(dataset, state, epochs=200, freeze_stack=False, pool_hw=POOL_HW):
    """Full-batch gradient descent on softmax cross-entropy through the head
    and (unless frozen) the stack.

    ``dataset`` is a list of (sfm_sequence, label) pairs with labels in
    0..C-1. Returns a new state carrying the best-loss parameters; its final
    loss never exceeds the initial one.
    """
    if not dataset:
        raise DataError("empty dataset")
    labels = np.array([label for _, label in dataset], dtype=np.int64)
    num_classes = state.head_w.shape[0]
    if len(set(labels.tolist())) < 2:
        raise DataError("need at least two classes")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise DataError("labels out of range for the classifier head")

    n = len(dataset)
    one_hot = np.zeros((n, num_classes))
    one_hot[np.arange(n), labels] = 1.0
    map_shape = dataset[0][0][0].shape

    stack_w = state.stack.layers.copy()
    head_w = state.head_w.copy()
    head_b = state.head_b.copy()
    lr = state.learning_rate
    history = list(state.loss_history)

    best = None
    for _ in range(epochs):
        feats = np.stack(
            [_encode_features(sfms, ChannelKernelStack(stack_w), pool_hw) for sfms, _ in dataset]
        )
        logits = feats @ head_w.T + head_b
        probs = _softmax(logits)
        loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
        history.append(loss)
        if best is None or loss < best[0]:
            best = (loss, stack_w.copy(), head_w.copy(), head_b.copy())

        dlogits = (probs - one_hot) / n
        g_head_w = dlogits.T @ feats
        g_head_b = dlogits.sum(axis=0)
        if not freeze_stack:
            g_stack = np.zeros((3, 3, 3))
            dfeats = dlogits @ head_w
            stack_obj = ChannelKernelStack(stack_w)
            for i, (sfms, _) in enumerate(dataset):
                per_channel = dfeats[i].reshape(3, pool_hw, pool_hw)
                upstream = np.stack(
                    [pool_grid_backward(per_channel[c], map_shape) for c in range(3)]
                )
                g_stack += ctk_backward(sfms, stack_obj, upstream)
            stack_w = stack_w - lr * g_stack
        head_w = head_w - lr * g_head_w
        head_b = head_b - lr * g_head_b

    # Evaluate the final iterate so the best tracker sees every parameter set.
    feats = np.stack(
        [_encode_features(sfms, ChannelKernelStack(stack_w), pool_hw) for sfms, _ in dataset]
    )
    probs = _softmax(feats @ head_w.T + head_b)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    history.append(loss)
    if loss < best[0]:
        best = (loss, stack_w, head_w, head_b)

    return CtkTrainState(
        stack=ChannelKernelStack(best[1]),
        head_w=best[2],
        head_b=best[3],
        learning_rate=lr,
        epoch=state.epoch + epochs,
        loss_history=history,
    )


def predict_ctk(dataset_sfms, state, pool_hw=POOL_HW):
    """Class scores (softmax) for a list of SFM sequences."""
    feats = np.stack(
        [_encode_features(sfms, state.stack, pool_hw) for sfms in dataset_sfms]
    )
    return _softmax(feats @ state.head_w.T + state.head_b)
