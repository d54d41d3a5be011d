"""Variational Bayesian linear layers and MLP stacks with exact backprop.

Each layer keeps a mean-field Gaussian posterior over its weights and bias,
parameterized as (mu, rho) with effective stddev softplus(rho). Forward
passes draw one reparameterized weight sample; every draw and intermediate
is recorded in a trace so the pass can be replayed bit-for-bit and
differentiated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeError

RHO_INIT = -5.0  # softplus(-5) ~ 0.0067: near-deterministic early training


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"expected 1-D or 2-D input, got ndim={x.ndim}")


@dataclass
class VariationalLinear:
    mu_w: np.ndarray   # (out, in)
    rho_w: np.ndarray  # (out, in), pre-softplus scale
    mu_b: np.ndarray   # (out,)
    rho_b: np.ndarray  # (out,)

    def __post_init__(self):
        if self.mu_w.shape != self.rho_w.shape or self.mu_b.shape != self.rho_b.shape:
            raise ShapeError("mu/rho shapes differ within a parameter group")
        if self.mu_w.ndim != 2 or self.mu_b.ndim != 1 or self.mu_w.shape[0] != self.mu_b.shape[0]:
            raise ShapeError("inconsistent weight/bias shapes")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "VariationalLinear":
        bound = 1.0 / np.sqrt(n_in)
        return cls(
            mu_w=rng.uniform(-bound, bound, size=(n_out, n_in)),
            rho_w=np.full((n_out, n_in), RHO_INIT),
            mu_b=rng.uniform(-bound, bound, size=n_out),
            rho_b=np.full(n_out, RHO_INIT),
        )

    def refresh_cache(self):
        """Precompute softplus(rho) and sigmoid(rho); valid until the next
        parameter update. Lets the hot loop skip the transcendental ops."""
        self._sigma_w = kernels.softplus(self.rho_w)
        self._sigma_b = kernels.softplus(self.rho_b)
        self._sig_w = kernels.sigmoid(self.rho_w)
        self._sig_b = kernels.sigmoid(self.rho_b)

    @property
    def n_in(self) -> int:
        return self.mu_w.shape[1]

    @property
    def n_out(self) -> int:
        return self.mu_w.shape[0]

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {"mu_w": self.mu_w, "rho_w": self.rho_w, "mu_b": self.mu_b, "rho_b": self.rho_b}


@dataclass
class LayerTrace:
    """Everything needed to replay and differentiate one sampled pass."""
    x: np.ndarray       # (B, in) layer input
    eps_w: np.ndarray   # (out, in)
    eps_b: np.ndarray   # (out,)
    w: np.ndarray       # sampled weight
    b: np.ndarray       # sampled bias
    z: np.ndarray       # (B, out) pre-activation output


def sample_forward(layer: VariationalLinear, x, rng: np.random.Generator | None = None,
                   *, eps_w=None, eps_b=None, cached: bool = False):
    """One reparameterized forward pass; returns (y, trace).

    Pass eps_w/eps_b instead of an rng to replay a recorded draw. With
    cached=True the layer's refreshed softplus(rho) values are reused.
    """
    xm, squeeze = _as_matrix(x)
    if xm.shape[1] != layer.n_in:
        raise ShapeError(f"input width {xm.shape[1]} != layer width {layer.n_in}")
    if eps_w is None:
        eps_w = rng.standard_normal(layer.mu_w.shape)
        eps_b = rng.standard_normal(layer.mu_b.shape)
    if cached:
        w = kernels.fma(layer.mu_w, layer._sigma_w, eps_w)
        b = kernels.fma(layer.mu_b, layer._sigma_b, eps_b)
    else:
        w = kernels.sample_gaussian(layer.mu_w, layer.rho_w, eps_w)
        b = kernels.sample_gaussian(layer.mu_b, layer.rho_b, eps_b)
    z = xm @ w.T + b
    trace = LayerTrace(x=xm, eps_w=eps_w, eps_b=eps_b, w=w, b=b, z=z)
    return (z[0] if squeeze else z), trace


def kl_to_standard_normal(layer: VariationalLinear, cached: bool = False) -> float:
    """Closed-form KL(q || N(0,1)) summed over all weight and bias entries."""
    total = 0.0
    for mu, rho, sig_name in ((layer.mu_w, layer.rho_w, "_sigma_w"),
                              (layer.mu_b, layer.rho_b, "_sigma_b")):
        sigma = getattr(layer, sig_name) if cached else kernels.softplus(rho)
        total += 0.5 * float(np.sum(mu**2 + sigma**2 - np.log(sigma**2) - 1.0))
    return total


def kl_grads(layer: VariationalLinear, cached: bool = False) -> dict[str, np.ndarray]:
    """Exact gradients of kl_to_standard_normal w.r.t. mu and rho."""
    out = {}
    for name, mu, rho in (("w", layer.mu_w, layer.rho_w), ("b", layer.mu_b, layer.rho_b)):
        if cached:
            sigma = getattr(layer, f"_sigma_{name}")
            sig = getattr(layer, f"_sig_{name}")
        else:
            sigma = kernels.softplus(rho)
            sig = kernels.sigmoid(rho)
        out[f"mu_{name}"] = mu.copy()
        out[f"rho_{name}"] = (sigma - 1.0 / sigma) * sig
    return out


@dataclass
class MlpSpec:
    """Architecture of one variational MLP stack.

    layer_dims are output widths; hidden layers use ReLU then inverted
    dropout, the final layer is identity with no dropout unless an explicit
    activations tuple overrides it.
    """
    layer_dims: tuple[int, ...]
    dropout_rate: float = 0.0
    mc_samples: int = 10
    kl_weight: float = 1e-6
    activations: tuple[str, ...] | None = None

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if any(d <= 0 for d in self.layer_dims):
            raise ShapeError("layer_dims must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError("dropout_rate must be in [0, 1)")
        if self.mc_samples < 1:
            raise ShapeError("mc_samples must be >= 1")
        if self.activations is None:
            self.activations = tuple(
                "relu" if i < len(self.layer_dims) - 1 else "identity"
                for i in range(len(self.layer_dims))
            )
        if len(self.activations) != len(self.layer_dims):
            raise ShapeError("one activation per layer required")
        if any(a not in ("relu", "identity") for a in self.activations):
            raise ShapeError("activation must be 'relu' or 'identity'")


@dataclass
class MlpTrace:
    layers: list[LayerTrace]
    masks: list[np.ndarray]   # scaled dropout masks (all-ones at inference)
    squeeze: bool
    y: np.ndarray             # final output, kept for replay checks


@dataclass
class MlpGrads:
    """Per-layer gradients keyed like VariationalLinear.param_arrays()."""
    layers: list[dict[str, np.ndarray]] = field(default_factory=list)

    def __iadd__(self, other: "MlpGrads"):
        for mine, theirs in zip(self.layers, other.layers):
            for k in mine:
                mine[k] += theirs[k]
        return self

    def scale(self, a: float):
        for g in self.layers:
            for k in g:
                g[k] *= a
        return self


class VariationalMlp:
    """Stack of VariationalLinear layers driven by an MlpSpec."""

    def __init__(self, n_in: int, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        self.layers: list[VariationalLinear] = []
        prev = n_in
        for dim in spec.layer_dims:
            self.layers.append(VariationalLinear.init(prev, dim, rng))
            prev = dim
        self.n_in = n_in
        self.n_out = prev

    def refresh_cache(self):
        for layer in self.layers:
            layer.refresh_cache()

    def forward(self, x, rng: np.random.Generator, training: bool = False,
                cached: bool = False):
        xm, squeeze = _as_matrix(x)
        traces: list[LayerTrace] = []
        masks: list[np.ndarray] = []
        h = xm
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z, tr = sample_forward(layer, h, rng, cached=cached)
            traces.append(tr)
            h = np.maximum(z, 0.0) if self.spec.activations[i] == "relu" else z
            if i < last and training and self.spec.dropout_rate > 0.0:
                keep = rng.random(h.shape) >= self.spec.dropout_rate
                mask = keep / (1.0 - self.spec.dropout_rate)
            else:
                mask = np.ones_like(h)
            masks.append(mask)
            h = h * mask
        trace = MlpTrace(layers=traces, masks=masks, squeeze=squeeze, y=h)
        return (h[0] if squeeze else h), trace

    def replay(self, trace: MlpTrace):
        """Recompute the traced pass from current parameters with the stored
        noise and masks. With unchanged parameters the result is bit-identical
        to the recorded output."""
        h = trace.layers[0].x
        for i, layer in enumerate(self.layers):
            z, _ = sample_forward(layer, h, eps_w=trace.layers[i].eps_w,
                                  eps_b=trace.layers[i].eps_b)
            h = np.maximum(z, 0.0) if self.spec.activations[i] == "relu" else z
            h = h * trace.masks[i]
        return h[0] if trace.squeeze else h

    def backward(self, trace: MlpTrace, upstream_grad, cached: bool = False):
        """Exact gradients of the traced pass w.r.t. every mu/rho, plus the
        gradient w.r.t. the stack input."""
        gm, _ = _as_matrix(upstream_grad)
        if len(trace.layers) != len(self.layers):
            raise ShapeError("trace does not match this MLP")
        grads = MlpGrads(layers=[None] * len(self.layers))
        g = gm
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            tr = trace.layers[i]
            if g.shape != tr.z.shape:
                raise ShapeError("upstream gradient shape does not match trace")
            g = g * trace.masks[i]
            if self.spec.activations[i] == "relu":
                g = g * (tr.z > 0.0)
            d_w = g.T @ tr.x
            d_b = g.sum(axis=0)
            if cached:
                rho_w_g = kernels.mul3(d_w, tr.eps_w, layer._sig_w)
                rho_b_g = kernels.mul3(d_b, tr.eps_b, layer._sig_b)
            else:
                rho_w_g = kernels.rho_grad(d_w, tr.eps_w, layer.rho_w)
                rho_b_g = kernels.rho_grad(d_b, tr.eps_b, layer.rho_b)
            grads.layers[i] = {
                "mu_w": d_w,
                "rho_w": rho_w_g,
                "mu_b": d_b,
                "rho_b": rho_b_g,
            }
            g = g @ tr.w
        return grads, (g[0] if trace.squeeze else g)

    def kl(self, cached: bool = False) -> float:
        return sum(kl_to_standard_normal(layer, cached) for layer in self.layers)

    def kl_grads(self, cached: bool = False) -> MlpGrads:
        return MlpGrads(layers=[kl_grads(layer, cached) for layer in self.layers])

    def zero_grads(self) -> MlpGrads:
        return MlpGrads(layers=[
            {k: np.zeros_like(v) for k, v in layer.param_arrays().items()}
            for layer in self.layers
        ])
