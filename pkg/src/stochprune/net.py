"""Dense/ReLU/residual layers with hand-written backward passes.

Parameters, activations and gradients are float32. Reductions that feed
reported numbers (losses, accuracies) accumulate in float64. Each layer
caches what its backward pass needs during forward; calling backward
without a matching forward is an error.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Shape mismatch, naming the offending layer."""


class NumericsError(ArithmeticError):
    """Non-finite values where finite ones are required."""


def he_uniform(shape, fan_in, rng):
    limit = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


class Dense:
    """Affine layer: y = x @ W.T + b, weight shape [out_dim, in_dim]."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, has_bias=True, rng=None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dense dimensions must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.has_bias = has_bias
        self.path = "?"
        if rng is None:
            weight = np.zeros((out_dim, in_dim), dtype=DTYPE)
        else:
            weight = he_uniform((out_dim, in_dim), in_dim, rng)
        self.params = {"weight": weight}
        if has_bias:
            self.params["bias"] = np.zeros(out_dim, dtype=DTYPE)
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"layer {self.path} (dense): expected input [B, {self.in_dim}], "
                f"got {list(x.shape)}"
            )
        self._x = x
        y = x @ self.params["weight"].T
        if self.has_bias:
            y = y + self.params["bias"]
        return y

    def backward(self, dy, grads):
        if self._x is None:
            raise RuntimeError(f"layer {self.path}: backward before forward")
        x = self._x
        grads[f"{self.path}.weight"] = dy.T @ x
        if self.has_bias:
            grads[f"{self.path}.bias"] = dy.sum(axis=0, dtype=DTYPE)
        return dy @ self.params["weight"]

    def copy(self):
        out = Dense(self.in_dim, self.out_dim, self.has_bias)
        out.params = {k: v.copy() for k, v in self.params.items()}
        return out


class ReLU:
    kind = "relu"

    def __init__(self):
        self.path = "?"
        self.params = {}
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, DTYPE(0.0))

    def backward(self, dy, grads):
        if self._mask is None:
            raise RuntimeError(f"layer {self.path}: backward before forward")
        return np.where(self._mask, dy, DTYPE(0.0))

    def copy(self):
        return ReLU()


class ResidualBlock:
    """Skip connection around an inner stack: y = x + inner(x).

    The inner stack must preserve the input width so the skip addition is
    shape-legal; the identity path makes the input gradient dy + d(inner).
    """

    kind = "residual"

    def __init__(self, inner):
        self.inner = list(inner)
        self.path = "?"
        self.params = {}

    def forward(self, x):
        h = x
        for layer in self.inner:
            h = layer.forward(h)
        if h.shape != x.shape:
            raise ShapeError(
                f"layer {self.path} (residual): inner stack maps "
                f"{list(x.shape)} to {list(h.shape)}, skip addition illegal"
            )
        return x + h

    def backward(self, dy, grads):
        dh = dy
        for layer in reversed(self.inner):
            dh = layer.backward(dh, grads)
        return dy + dh

    def copy(self):
        return ResidualBlock([l.copy() for l in self.inner])


class SoftmaxCrossEntropy:
    """Terminal loss layer: softmax over logits + mean cross entropy.

    forward() stops at the logits; loss and the (softmax - onehot)/B logit
    gradient are produced by the model's backward pass from cached logits.
    """

    kind = "softmax_ce"

    def __init__(self, num_classes):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        self.num_classes = num_classes
        self.path = "?"
        self.params = {}
        self._logits = None

    def cache(self, logits):
        if logits.ndim != 2 or logits.shape[1] != self.num_classes:
            raise ShapeError(
                f"layer {self.path} (softmax_ce): expected logits "
                f"[B, {self.num_classes}], got {list(logits.shape)}"
            )
        self._logits = logits

    def loss_and_grad(self, targets):
        if self._logits is None:
            raise RuntimeError(f"layer {self.path}: backward before forward")
        logits = self._logits
        batch = logits.shape[0]
        targets = np.asarray(targets)
        if targets.shape != (batch,):
            raise ShapeError(
                f"layer {self.path}: expected {batch} targets, "
                f"got shape {list(targets.shape)}"
            )
        if targets.min() < 0 or targets.max() >= self.num_classes:
            raise ValueError(
                f"layer {self.path}: target class out of range [0, "
                f"{self.num_classes})"
            )
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        rows = np.arange(batch)
        # per-sample log-likelihood in float64; mean drift stays bounded
        logp = shifted[rows, targets].astype(np.float64) - np.log(
            exp.sum(axis=1, dtype=np.float64)
        )
        loss = float(-logp.mean())
        dlogits = probs
        dlogits[rows, targets] -= DTYPE(1.0)
        dlogits /= DTYPE(batch)
        return loss, dlogits

    def copy(self):
        return SoftmaxCrossEntropy(self.num_classes)


class Model:
    """Ordered layer stack ending in a SoftmaxCrossEntropy loss layer.

    The parameter registry is the deterministic flattening of the stack:
    top-level layers by position, residual inner layers by position within
    the block, then parameter name in layer-defined order. Registry paths
    look like "0.weight" and "2.1.bias".
    """

    def __init__(self, layers):
        if not layers or not isinstance(layers[-1], SoftmaxCrossEntropy):
            raise ValueError("model must end with a SoftmaxCrossEntropy layer")
        for layer in layers[:-1]:
            if isinstance(layer, SoftmaxCrossEntropy):
                raise ValueError("loss layer must be last")
        self.layers = list(layers)
        self._slots = []
        for i, layer in enumerate(self.layers):
            layer.path = str(i)
            if isinstance(layer, ResidualBlock):
                for j, inner in enumerate(layer.inner):
                    inner.path = f"{i}.{j}"
                    for name in inner.params:
                        self._slots.append((inner, name))
            else:
                for name in layer.params:
                    self._slots.append((layer, name))

    @property
    def loss_layer(self):
        return self.layers[-1]

    @property
    def num_classes(self):
        return self.loss_layer.num_classes

    def parameters(self):
        """Ordered list of (registry path, live array)."""
        return [(f"{layer.path}.{name}", layer.params[name])
                for layer, name in self._slots]

    def set_parameter(self, path, value):
        for layer, name in self._slots:
            if f"{layer.path}.{name}" == path:
                current = layer.params[name]
                if value.shape != current.shape:
                    raise ShapeError(
                        f"parameter {path}: expected shape "
                        f"{list(current.shape)}, got {list(value.shape)}"
                    )
                layer.params[name] = np.ascontiguousarray(value, dtype=DTYPE)
                return
        raise KeyError(f"unknown parameter {path}")

    def forward(self, x):
        """Run the stack up to the loss layer; returns logits [B, K]."""
        x = np.asarray(x, dtype=DTYPE)
        if x.ndim != 2:
            raise ShapeError(f"expected batch input [B, d], got {list(x.shape)}")
        h = x
        for layer in self.layers[:-1]:
            h = layer.forward(h)
        self.loss_layer.cache(h)
        if not np.isfinite(h).all():
            raise NumericsError("non-finite logits in forward pass")
        return h

    def backward(self, targets):
        """Mean-over-batch loss and gradients for the cached forward batch.

        Returns (grads, loss) with grads keyed by registry path.
        """
        loss, dy = self.loss_layer.loss_and_grad(targets)
        grads = {}
        for layer in reversed(self.layers[:-1]):
            dy = layer.backward(dy, grads)
        return grads, loss

    def loss(self, x, targets):
        """Forward + mean cross entropy without touching gradients."""
        self.forward(x)
        loss, _ = self.loss_layer.loss_and_grad(targets)
        return loss

    def copy(self):
        return Model([l.copy() for l in self.layers])


def build_residual_mlp(input_dim, hidden_width, blocks, classes,
                       has_bias=True, rng=None):
    """Residual MLP classifier: input projection, `blocks` residual blocks
    of two Dense layers around a ReLU, linear head, softmax cross entropy.

    hidden_width == 0 builds the degenerate linear classifier (single
    Dense straight to the logits).
    """
    if hidden_width == 0:
        return Model([
            Dense(input_dim, classes, has_bias, rng),
            SoftmaxCrossEntropy(classes),
        ])
    layers = [Dense(input_dim, hidden_width, has_bias, rng), ReLU()]
    for _ in range(blocks):
        layers.append(ResidualBlock([
            Dense(hidden_width, hidden_width, has_bias, rng),
            ReLU(),
            Dense(hidden_width, hidden_width, has_bias, rng),
        ]))
    layers.append(Dense(hidden_width, classes, has_bias, rng))
    layers.append(SoftmaxCrossEntropy(classes))
    return Model(layers)


def predict_classes(model, features, batch_size=512):
    """Argmax class per row; ties resolve to the lowest class index."""
    n = features.shape[0]
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, batch_size):
        logits = model.forward(features[start:start + batch_size])
        out[start:start + batch_size] = np.argmax(logits, axis=1)
    return out

def eval_accuracy(model, dataset, batch_size=512):
    """Fraction of samples whose argmax logit matches the label."""
    if len(dataset.labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = predict_classes(model, dataset.features, batch_size)
    return float(np.mean(preds == dataset.labels))
