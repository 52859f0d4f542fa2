"""Dense-network substrate: explicit forward/backward, Adam, checkpoints.

Each layer composes affine -> layer norm -> activation -> inverted dropout.
Everything runs in float64 and the backward passes are hand-derived; they
are held to central finite differences at a 1e-4 relative-error bound (see
``grad_check`` and the test suite).

Parameter sets are plain dicts of arrays keyed ``L{i}.W`` / ``L{i}.b`` and,
for normalized layers, ``L{i}.gain`` / ``L{i}.offset``. Composite networks
(critics, the graph allocator) namespace these keys with prefixes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LN_EPS = 1e-12          # layer-norm variance floor; float64 keeps this safe
GRAD_ERR_FLOOR = 1e-6   # relative-error denominators never drop below this

ParamSet = dict  # name -> np.ndarray


class NumericError(RuntimeError):
    """Non-finite values entered a numeric kernel."""


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    layer_norm: bool = False
    activation: str = "linear"  # linear | relu | tanh
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError(f"layer widths must be >= 1, got {self.fan_in}->{self.fan_out}")
        if self.activation not in ("linear", "relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def param_count(self) -> int:
        n = self.fan_in * self.fan_out + self.fan_out
        if self.layer_norm:
            n += 2 * self.fan_out
        return n


@dataclass(frozen=True)
class DenseNetSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"width mismatch: {a.fan_out} -> {b.fan_in}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def param_count(self) -> int:
        return sum(l.param_count for l in self.layers)


def mlp_spec(
    widths,
    *,
    hidden_norm: bool = False,
    hidden_dropout: float = 0.0,
    hidden_activation: str = "relu",
    output_activation: str = "linear",
) -> DenseNetSpec:
    """Stack of hidden layers plus an output layer without norm/dropout."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    layers = [
        LayerSpec(widths[i], widths[i + 1], hidden_norm, hidden_activation, hidden_dropout)
        for i in range(len(widths) - 2)
    ]
    layers.append(LayerSpec(widths[-2], widths[-1], False, output_activation, 0.0))
    return DenseNetSpec(tuple(layers))


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(spec: DenseNetSpec, rng) -> ParamSet:
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(rng)
    params: ParamSet = {}
    for i, ls in enumerate(spec.layers):
        bound = xavier_bound(ls.fan_in, ls.fan_out)
        params[f"L{i}.W"] = rng.uniform(-bound, bound, size=(ls.fan_in, ls.fan_out))
        params[f"L{i}.b"] = np.zeros(ls.fan_out)
        if ls.layer_norm:
            params[f"L{i}.gain"] = np.ones(ls.fan_out)
            params[f"L{i}.offset"] = np.zeros(ls.fan_out)
    return params


def forward(
    spec: DenseNetSpec,
    params: ParamSet,
    x,
    *,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
):
    """Run the stack; returns (output, cache) with the cache feeding backward.

    Dropout uses inverted scaling, so inference needs no rescale; in
    training mode a dropout_rng is mandatory whenever any layer drops.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"input width {x.shape[-1]} != spec input {spec.input_dim}")
    if not np.isfinite(x).all():
        raise NumericError("non-finite network input")
    if training and dropout_rng is None and any(l.dropout > 0 for l in spec.layers):
        raise ValueError("training mode with dropout requires dropout_rng")

    h = x
    caches = []
    for i, ls in enumerate(spec.layers):
        c: dict = {"x": h}
        z = h @ params[f"L{i}.W"] + params[f"L{i}.b"]
        if ls.layer_norm:
            mu = z.mean(axis=-1, keepdims=True)
            var = z.var(axis=-1, keepdims=True)
            inv = 1.0 / np.sqrt(var + LN_EPS)
            xhat = (z - mu) * inv
            c["xhat"], c["inv"] = xhat, inv
            z = params[f"L{i}.gain"] * xhat + params[f"L{i}.offset"]
        c["pre_act"] = z
        if ls.activation == "relu":
            a = np.maximum(z, 0.0)
        elif ls.activation == "tanh":
            a = np.tanh(z)
            c["tanh"] = a
        else:
            a = z
        if training and ls.dropout > 0.0:
            keep = 1.0 - ls.dropout
            mask = (dropout_rng.random(a.shape) < keep) / keep
            a = a * mask
            c["mask"] = mask
        caches.append(c)
        h = a
    return (h[0] if squeeze else h), {"layers": caches, "squeeze": squeeze}


def backward(spec: DenseNetSpec, params: ParamSet, cache, dy):
    """Exact gradients of the composed stack. Returns (dx, grads)."""
    dy = np.asarray(dy, dtype=float)
    if cache["squeeze"]:
        dy = dy[None, :]
    if dy.shape[-1] != spec.output_dim:
        raise ValueError(f"upstream width {dy.shape[-1]} != spec output {spec.output_dim}")
    grads: ParamSet = {}
    for i in reversed(range(len(spec.layers))):
        ls = spec.layers[i]
        c = cache["layers"][i]
        if "mask" in c:
            dy = dy * c["mask"]
        if ls.activation == "relu":
            dy = dy * (c["pre_act"] > 0.0)
        elif ls.activation == "tanh":
            dy = dy * (1.0 - c["tanh"] ** 2)
        if ls.layer_norm:
            xhat, inv = c["xhat"], c["inv"]
            grads[f"L{i}.gain"] = (dy * xhat).sum(axis=0)
            grads[f"L{i}.offset"] = dy.sum(axis=0)
            dxhat = dy * params[f"L{i}.gain"]
            dy = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        x = c["x"]
        grads[f"L{i}.W"] = x.T @ dy
        grads[f"L{i}.b"] = dy.sum(axis=0)
        dy = dy @ params[f"L{i}.W"].T
    return (dy[0] if cache["squeeze"] else dy), grads


@dataclass
class AdamState:
    m: ParamSet
    v: ParamSet
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamSet) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update in place. Aborts before touching anything
    if any gradient is non-finite."""
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {k}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[k] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def loss_and_grads(
    spec: DenseNetSpec,
    params: ParamSet,
    x,
    target,
    *,
    training: bool = False,
    dropout_seed: int | None = None,
):
    """Mean-squared-error loss against a fixed target, with parameter grads."""
    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    y, cache = forward(spec, params, x, training=training, dropout_rng=rng)
    diff = y - target
    loss = float(np.mean(diff ** 2))
    dy = 2.0 * diff / diff.size
    dx, grads = backward(spec, params, cache, dy)
    return loss, grads, dx


def _loss_only(spec, params, x, target, training, dropout_seed):
    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    y, _ = forward(spec, params, x, training=training, dropout_rng=rng)
    return float(np.mean((y - target) ** 2))


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_ERR_FLOOR)


def compare_to_finite_differences(
    loss_fn,
    params: ParamSet,
    analytic: ParamSet,
    *,
    eps: float = 1e-5,
    max_entries_per_tensor: int | None = None,
    entry_rng: np.random.Generator | None = None,
) -> dict:
    """Max relative error per tensor between analytic grads and central FD.

    ``loss_fn(params)`` must be deterministic (frozen dropout masks). With
    ``max_entries_per_tensor`` set, a random subset of entries is probed;
    otherwise every entry is.
    """
    report: dict = {}
    for name in sorted(params):
        p = params[name]
        idxs = list(np.ndindex(p.shape))
        if max_entries_per_tensor is not None and len(idxs) > max_entries_per_tensor:
            if entry_rng is None:
                entry_rng = np.random.default_rng(0)
            chosen = entry_rng.choice(len(idxs), size=max_entries_per_tensor, replace=False)
            idxs = [idxs[int(i)] for i in chosen]
        worst = 0.0
        for idx in idxs:
            orig = p[idx]
            p[idx] = orig + eps
            up = loss_fn(params)
            p[idx] = orig - eps
            down = loss_fn(params)
            p[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_error(float(analytic[name][idx]), numeric))
        report[name] = worst
    return report


@dataclass(frozen=True)
class GradCheckReport:
    per_tensor: dict
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    spec: DenseNetSpec,
    seed: int = 0,
    tolerance: float = 1e-4,
    *,
    batch: int = 3,
    eps: float = 1e-5,
    training: bool = True,
    max_entries_per_tensor: int | None = None,
) -> GradCheckReport:
    """Check every (or a sampled subset of) parameter gradient against
    central finite differences on a random MSE loss."""
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    x = rng.normal(size=(batch, spec.input_dim))
    target = rng.normal(size=(batch, spec.output_dim))
    use_dropout = training and any(l.dropout > 0 for l in spec.layers)
    dropout_seed = int(rng.integers(2 ** 31)) if use_dropout else None
    _, analytic, _ = loss_and_grads(
        spec, params, x, target, training=training, dropout_seed=dropout_seed
    )
    report = compare_to_finite_differences(
        lambda p: _loss_only(spec, p, x, target, training, dropout_seed),
        params,
        analytic,
        eps=eps,
        max_entries_per_tensor=max_entries_per_tensor,
        entry_rng=np.random.default_rng(seed + 1),
    )
    return GradCheckReport(report, max(report.values()), tolerance)


def save_checkpoint(path, manifest: dict, arrays: ParamSet) -> None:
    """Write a checkpoint: JSON manifest plus flat row-major arrays."""
    shapes = {k: list(v.shape) for k, v in arrays.items()}
    doc = dict(manifest)
    doc["shapes"] = shapes
    flat = {k: np.ascontiguousarray(v).ravel() for k, v in arrays.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, __manifest__=np.array(json.dumps(doc, sort_keys=True)), **flat)


def load_checkpoint(path):
    """Read back (manifest, arrays); arrays round-trip bit-exactly."""
    with np.load(path, allow_pickle=False) as z:
        doc = json.loads(str(z["__manifest__"][()]))
        shapes = doc.pop("shapes")
        arrays = {k: z[k].reshape(shapes[k]) for k in shapes}
    return doc, arrays
