"""Dense feed-forward quantile network and the Adam optimizer.

The network maps (features, quantile level) to a single quantile estimate:
the quantile level is appended to the feature vector as one extra input.
Hidden layers use ReLU and, optionally, inverted dropout (activations are
scaled by 1/(1-rate) at train time so that evaluation is a pure function
of the weights).
"""
from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor, relu


class DimensionMismatchError(ValueError):
    """Input width does not compose with a layer's weight matrix."""


class Mlp:
    """ReLU multilayer perceptron with a scalar output.

    Parameters are a flat list of arrays [W0, b0, W1, b1, ...] with W of
    shape (fan_in, fan_out). Weights are initialized uniformly in
    [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the given generator.
    """

    def __init__(self, input_dim: int, hidden=(64, 64), dropout: float = 0.0,
                 rng: np.random.Generator | None = None):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.dropout = float(dropout)
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = (self.input_dim,) + self.hidden + (1,)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def dropout_masks(self, n: int, rng: np.random.Generator) -> list[np.ndarray] | None:
        """Pre-scaled inverted-dropout masks for one train-mode forward pass."""
        if self.dropout == 0.0:
            return None
        keep = 1.0 - self.dropout
        return [(rng.random((n, width)) < keep) / keep for width in self.hidden]

    def forward(self, X: np.ndarray, tau, params=None, train: bool = False,
                dropout_masks=None):
        """Quantile estimates for a batch.

        X is (n, p) and `tau` a scalar or length-n vector of levels; the
        two are concatenated into the (n, p+1) network input. Passing
        tape `Tensor`s as `params` records gradients. Dropout is applied
        only when `train` is true and masks are supplied.
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        tau_col = np.broadcast_to(np.asarray(tau, dtype=np.float64), (X.shape[0],))
        Z = np.column_stack([X, tau_col])
        if Z.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"layer 0: input width {Z.shape[1]} != expected {self.input_dim}")
        params = self.params if params is None else params
        h = Z
        n_layers = self.n_layers
        for i in range(n_layers):
            W, b = params[2 * i], params[2 * i + 1]
            w_shape = W.data.shape if isinstance(W, Tensor) else W.shape
            h_width = h.data.shape[1] if isinstance(h, Tensor) else h.shape[1]
            if h_width != w_shape[0]:
                raise DimensionMismatchError(
                    f"layer {i}: input width {h_width} != expected {w_shape[0]}")
            h = h @ W + b
            if i < n_layers - 1:
                h = relu(h)
                if train and dropout_masks is not None:
                    h = h * dropout_masks[i]
        return h[:, 0]

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params) -> None:
        for own, new in zip(self.params, params):
            own[...] = new

    # -- checkpoint io -------------------------------------------------

    def save(self, path) -> None:
        """JSON checkpoint; float repr round-trips bit-exactly."""
        blob = {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "dropout": self.dropout,
            "params": [p.tolist() for p in self.params],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        model = cls(blob["input_dim"], hidden=blob["hidden"], dropout=blob["dropout"])
        model.params = [np.asarray(p, dtype=np.float64) for p in blob["params"]]
        return model


def loss_gradients(model: Mlp, objective) -> list[np.ndarray]:
    """Gradients of `objective(params) -> Tensor` w.r.t. every parameter."""
    tensors = [Tensor(p) for p in model.params]
    out = objective(tensors)
    if not isinstance(out, Tensor):  # objective ignored the parameters
        return [np.zeros_like(p) for p in model.params]
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


class Adam:
    """Adam with bias correction; state arrays mirror the parameter shapes."""

    def __init__(self, shapes, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
