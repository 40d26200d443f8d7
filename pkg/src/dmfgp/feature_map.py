"""Multilayer feature map h(x) = (h^L o ... o h^1)(x) with exact backprop.

Each layer computes sigma(W z + b) where sigma is either the logistic
sigmoid or the identity. The map is deterministic; activations are
recomputed during the backward pass rather than cached, since layer widths
are tiny at the scales this library targets.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LayerSpec",
    "FeatureMapParams",
    "FeatureMapGrad",
    "forward",
    "backward",
    "identity_map",
]

TRANSFERS = ("sigmoid", "identity")


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    transfer: str  # "sigmoid" or "identity"

    def __post_init__(self):
        if self.transfer not in TRANSFERS:
            raise ValueError(f"unknown transfer {self.transfer!r}; expected one of {TRANSFERS}")
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be positive")


@dataclass
class FeatureMapParams:
    """Per-layer weights (output_width x input_width) and biases (output_width,).

    ``trainable=False`` marks the map as frozen (the identity baseline);
    the trainer then excludes these parameters from optimization.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    trainable: bool = True

    def copy(self):
        return FeatureMapParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.trainable,
        )

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class FeatureMapGrad:
    """Gradient with the same per-layer shapes as FeatureMapParams."""

    weights: list
    biases: list


def _validate(arch, params, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not arch:
        raise ValueError("architecture must have at least one layer")
    for a, b in zip(arch[:-1], arch[1:]):
        if a.output_width != b.input_width:
            raise ValueError(f"layer widths do not chain: {a.output_width} -> {b.input_width}")
    if X.shape[1] != arch[0].input_width:
        raise ValueError(
            f"input has {X.shape[1]} columns, first layer expects {arch[0].input_width}"
        )
    if len(params.weights) != len(arch) or len(params.biases) != len(arch):
        raise ValueError("parameter count does not match architecture depth")
    for spec, w, b in zip(arch, params.weights, params.biases):
        if w.shape != (spec.output_width, spec.input_width) or b.shape != (spec.output_width,):
            raise ValueError(f"parameter shapes {w.shape}, {b.shape} do not match layer {spec}")
    return X


def _sigmoid(z):
    # split formulas avoid overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pass(arch, params, X):
    """Return the list of activations [X, A^1, ..., A^L]."""
    acts = [X]
    for spec, w, b in zip(arch, params.weights, params.biases):
        z = acts[-1] @ w.T + b
        acts.append(_sigmoid(z) if spec.transfer == "sigmoid" else z)
    return acts


def forward(arch, params, X):
    """Apply the feature map rowwise: returns h(X) with shape (n, D_out)."""
    X = _validate(arch, params, X)
    return _forward_pass(arch, params, X)[-1]


def backward(arch, params, X, H_adjoint):
    """Vector-Jacobian product: sum_{i,k} H_adjoint[i,k] * d h_k(X_i) / d theta_h.

    Parameters
    ----------
    H_adjoint : ndarray, shape (n, D_out)
        Adjoint of the forward output.

    Returns
    -------
    FeatureMapGrad
    """
    X = _validate(arch, params, X)
    acts = _forward_pass(arch, params, X)
    H_adjoint = np.asarray(H_adjoint, dtype=float)
    if H_adjoint.shape != acts[-1].shape:
        raise ValueError(
            f"adjoint shape {H_adjoint.shape} does not match output shape {acts[-1].shape}"
        )
    dW = [None] * len(arch)
    db = [None] * len(arch)
    dA = H_adjoint
    for ell in range(len(arch) - 1, -1, -1):
        a_out = acts[ell + 1]
        if arch[ell].transfer == "sigmoid":
            dZ = dA * a_out * (1.0 - a_out)
        else:
            dZ = dA
        dW[ell] = dZ.T @ acts[ell]
        db[ell] = dZ.sum(axis=0)
        dA = dZ @ params.weights[ell]
    return FeatureMapGrad(dW, db)


def identity_map(D):
    """Architecture and frozen parameters realizing h(x) = x on R^D."""
    if D < 1:
        raise ValueError("D must be >= 1")
    arch = [LayerSpec(D, D, "identity")]
    params = FeatureMapParams([np.eye(D)], [np.zeros(D)], trainable=False)
    return arch, params
