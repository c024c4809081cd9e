"""The composite trajectory model and its single-module baselines.

Three small networks each read a different representation of one trajectory:

* graph MLP     -- the (nodes x 8) aggregate signal, flattened
* spectral GCNN -- visit counts in the graph Fourier domain, filtered by
                   learned polynomials in the Laplacian eigenvalues
* attention CNN -- the 10-channel time series, gated by a 1-channel
                   attention convolution and pooled over time

Their 16-vector outputs are concatenated and aggregated by an MLP into a
demographic prediction in (0, 1)^8. A "single" variant wires one module into
a linear head instead (no weight sharing with the composite model).

Training minimizes a width-scaled squared error: the negative log of the
ratio between a diagonal Gaussian density centered on the target and its
peak value, so a perfect prediction scores exactly 0.

All backward passes are hand-derived and validated against central finite
differences (see gradcheck).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonPositiveEpsilon, ShapeMismatch, UnknownKind
from .features import FeatureSeries
from .graph import Spectrum, gft
from .nn import (
    Param,
    SplitMix64,
    conv1d_backward,
    conv1d_forward,
    glorot_uniform,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    tanh,
    tanh_backward,
)

FEATURE_DIM = 10       # trajectory feature channels
NODE_SIGNAL_DIM = 8    # per-node aggregate channels
COEFF_HIDDEN = 16      # hidden width of the filter-coefficient MLPs
ATTENTION_STABILIZER = 1e-8
# Filters are evaluated in the rescaled basis (lam / BASIS_SCALE)^k; with the
# normalized Laplacian's spectrum in [0, 2] the plain powers reach 2^k, which
# saturates every sigmoid downstream at initialization. The learned outputs
# are coefficients in the scaled basis; dividing coefficient k by
# BASIS_SCALE^k recovers the plain-power polynomial, so the model family is
# unchanged.
BASIS_SCALE = 2.0

MODEL_KINDS = ("compsnn", "single_mlp", "single_gcnn", "single_cnn")
MODULE_KINDS = ("graph_mlp", "gcnn", "cnn")


@dataclass(frozen=True)
class CompSnnConfig:
    node_count: int
    mlp_hidden: int = 32
    module_out: int = 16
    cnn_channels: int = 16
    cnn_kernel: int = 13
    gcnn_filters: int = 8
    gcnn_degree: int = 8
    aggregator_hidden: int = 32
    demographic_dim: int = 8
    epsilon: tuple = (0.25,) * 8

    def __post_init__(self):
        dims = (
            self.node_count, self.mlp_hidden, self.module_out, self.cnn_channels,
            self.cnn_kernel, self.gcnn_filters, self.gcnn_degree + 1,
            self.aggregator_hidden, self.demographic_dim,
        )
        if any(d < 1 for d in dims):
            raise ValueError("all model dimensions must be >= 1")
        if len(self.epsilon) != self.demographic_dim:
            raise ValueError("epsilon length must equal demographic_dim")
        if any(e <= 0 for e in self.epsilon):
            raise NonPositiveEpsilon("epsilon components must be > 0")


@dataclass(frozen=True)
class SpectrumAux:
    """Per-spectrum constants shared by every forward pass."""

    lam: np.ndarray
    powers: np.ndarray  # (n, degree+1), powers[i, k] = (lam_i / BASIS_SCALE) ** k

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, degree: int) -> "SpectrumAux":
        powers = np.vander(spectrum.eigenvalues / BASIS_SCALE, degree + 1, increasing=True)
        return cls(spectrum.eigenvalues.copy(), powers)


@dataclass
class ModelInputs:
    """One trajectory's model-ready representations (unused ones may be None)."""

    node_signal_flat: np.ndarray | None = None  # (node_count * 8,)
    shat: np.ndarray | None = None              # (node_count,)
    features: np.ndarray | None = None          # (10, N)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _init_module(kind: str, cfg: CompSnnConfig, rng: SplitMix64, params: dict) -> None:
    n, out = cfg.node_count, cfg.module_out
    if kind == "graph_mlp":
        din = n * NODE_SIGNAL_DIM
        params["gmlp.w1"] = Param(glorot_uniform((cfg.mlp_hidden, din), din, cfg.mlp_hidden, rng))
        params["gmlp.b1"] = Param(np.zeros(cfg.mlp_hidden))
        params["gmlp.w2"] = Param(glorot_uniform((out, cfg.mlp_hidden), cfg.mlp_hidden, out, rng))
        params["gmlp.b2"] = Param(np.zeros(out))
    elif kind == "gcnn":
        k1 = cfg.gcnn_degree + 1
        for i in range(cfg.gcnn_filters):
            params[f"gcnn.f{i}.w1"] = Param(glorot_uniform((COEFF_HIDDEN, n), n, COEFF_HIDDEN, rng))
            params[f"gcnn.f{i}.b1"] = Param(np.zeros(COEFF_HIDDEN))
            params[f"gcnn.f{i}.w2"] = Param(glorot_uniform((k1, COEFF_HIDDEN), COEFF_HIDDEN, k1, rng))
            params[f"gcnn.f{i}.b2"] = Param(np.zeros(k1))
        din = cfg.gcnn_filters * n
        params["gcnn.read.w"] = Param(glorot_uniform((out, din), din, out, rng))
        params["gcnn.read.b"] = Param(np.zeros(out))
    elif kind == "cnn":
        c, k = cfg.cnn_channels, cfg.cnn_kernel
        params["cnn.feat.k"] = Param(glorot_uniform((c, FEATURE_DIM, k), FEATURE_DIM * k, c * k, rng))
        params["cnn.feat.b"] = Param(np.zeros(c))
        params["cnn.att.k"] = Param(glorot_uniform((1, FEATURE_DIM, k), FEATURE_DIM * k, k, rng))
        params["cnn.att.b"] = Param(np.zeros(1))
        params["cnn.read.w"] = Param(glorot_uniform((out, c), c, out, rng))
        params["cnn.read.b"] = Param(np.zeros(out))
    else:
        raise UnknownKind(f"module kind {kind!r}")


def init_params(model_kind: str, cfg: CompSnnConfig, seed: int) -> dict[str, Param]:
    """Fresh learnable parameters, a pure function of (model_kind, cfg, seed)."""
    if model_kind not in MODEL_KINDS:
        raise UnknownKind(f"model kind {model_kind!r}")
    rng = SplitMix64(seed)
    params: dict[str, Param] = {}
    if model_kind == "compsnn":
        for mod in MODULE_KINDS:
            _init_module(mod, cfg, rng, params)
        din = 3 * cfg.module_out
        params["agg.w1"] = Param(glorot_uniform((cfg.aggregator_hidden, din), din, cfg.aggregator_hidden, rng))
        params["agg.b1"] = Param(np.zeros(cfg.aggregator_hidden))
        params["agg.w2"] = Param(
            glorot_uniform((cfg.demographic_dim, cfg.aggregator_hidden), cfg.aggregator_hidden, cfg.demographic_dim, rng)
        )
        params["agg.b2"] = Param(np.zeros(cfg.demographic_dim))
    else:
        module = {"single_mlp": "graph_mlp", "single_gcnn": "gcnn", "single_cnn": "cnn"}[model_kind]
        _init_module(module, cfg, rng, params)
        params["head.w"] = Param(
            glorot_uniform((cfg.demographic_dim, cfg.module_out), cfg.module_out, cfg.demographic_dim, rng)
        )
        params["head.b"] = Param(np.zeros(cfg.demographic_dim))
    return params


def copy_params(params: dict[str, Param]) -> dict[str, Param]:
    return {name: p.copy() for name, p in params.items()}


# ---------------------------------------------------------------------------
# module forwards / backwards (caches carry what the gradients need)
# ---------------------------------------------------------------------------

def _gmlp_forward(flat, p):
    z1 = linear_forward(flat, p["gmlp.w1"].value, p["gmlp.b1"].value)
    a1 = relu(z1)
    out = linear_forward(a1, p["gmlp.w2"].value, p["gmlp.b2"].value)
    return out, (flat, z1, a1)


def _gmlp_backward(cache, dout, p):
    flat, z1, a1 = cache
    da1, dw2, db2 = linear_backward(a1, p["gmlp.w2"].value, dout)
    p["gmlp.w2"].grad += dw2
    p["gmlp.b2"].grad += db2
    dz1 = relu_backward(z1, da1)
    _, dw1, db1 = linear_backward(flat, p["gmlp.w1"].value, dz1)
    p["gmlp.w1"].grad += dw1
    p["gmlp.b1"].grad += db1


def _filter_count(p) -> int:
    i = 0
    while f"gcnn.f{i}.w1" in p:
        i += 1
    return i


def _gcnn_forward(shat, aux: SpectrumAux, p):
    lam, powers = aux.lam, aux.powers
    pieces, filter_caches = [], []
    for i in range(_filter_count(p)):
        z1 = linear_forward(lam, p[f"gcnn.f{i}.w1"].value, p[f"gcnn.f{i}.b1"].value)
        a1 = tanh(z1)
        h = linear_forward(a1, p[f"gcnn.f{i}.w2"].value, p[f"gcnn.f{i}.b2"].value)
        response = powers @ h
        pieces.append(response * shat)
        filter_caches.append((z1, a1))
    concat = np.concatenate(pieces)
    out = linear_forward(concat, p["gcnn.read.w"].value, p["gcnn.read.b"].value)
    return out, (lam, powers, shat, concat, filter_caches)


def _gcnn_backward(cache, dout, p):
    lam, powers, shat, concat, filter_caches = cache
    dconcat, dwr, dbr = linear_backward(concat, p["gcnn.read.w"].value, dout)
    p["gcnn.read.w"].grad += dwr
    p["gcnn.read.b"].grad += dbr
    n = len(shat)
    for i, (z1, a1) in enumerate(filter_caches):
        dpiece = dconcat[i * n : (i + 1) * n]
        dh = powers.T @ (dpiece * shat)
        da1, dw2, db2 = linear_backward(a1, p[f"gcnn.f{i}.w2"].value, dh)
        p[f"gcnn.f{i}.w2"].grad += dw2
        p[f"gcnn.f{i}.b2"].grad += db2
        dz1 = tanh_backward(z1, da1)
        _, dw1, db1 = linear_backward(lam, p[f"gcnn.f{i}.w1"].value, dz1)
        p[f"gcnn.f{i}.w1"].grad += dw1
        p[f"gcnn.f{i}.b1"].grad += db1


def _cnn_forward(x, p):
    zf = conv1d_forward(x, p["cnn.feat.k"].value, p["cnn.feat.b"].value)
    f = sigmoid(zf)
    za = conv1d_forward(x, p["cnn.att.k"].value, p["cnn.att.b"].value)
    a = sigmoid(za)[0]
    denom = a.sum() + ATTENTION_STABILIZER
    pooled = (f @ a) / denom
    out = linear_forward(pooled, p["cnn.read.w"].value, p["cnn.read.b"].value)
    return out, (x, zf, f, za, a, denom, pooled)


def _cnn_backward(cache, dout, p):
    x, zf, f, za, a, denom, pooled = cache
    dpooled, dwr, dbr = linear_backward(pooled, p["cnn.read.w"].value, dout)
    p["cnn.read.w"].grad += dwr
    p["cnn.read.b"].grad += dbr
    df = np.outer(dpooled, a) / denom
    da = (f.T @ dpooled - float(dpooled @ pooled)) / denom
    dzf = sigmoid_backward(zf, df)
    _, dkf, dbf = conv1d_backward(x, p["cnn.feat.k"].value, dzf)
    p["cnn.feat.k"].grad += dkf
    p["cnn.feat.b"].grad += dbf
    dza = sigmoid_backward(za, da[None, :])
    _, dka, dba = conv1d_backward(x, p["cnn.att.k"].value, dza)
    p["cnn.att.k"].grad += dka
    p["cnn.att.b"].grad += dba


def _head_forward(module_out, p):
    z = linear_forward(module_out, p["head.w"].value, p["head.b"].value)
    return sigmoid(z), (module_out, z)


def _head_backward(cache, dx, p):
    module_out, z = cache
    dz = sigmoid_backward(z, dx)
    dmod, dw, db = linear_backward(module_out, p["head.w"].value, dz)
    p["head.w"].grad += dw
    p["head.b"].grad += db
    return dmod


def _agg_forward(concat, p):
    z1 = linear_forward(concat, p["agg.w1"].value, p["agg.b1"].value)
    a1 = relu(z1)
    z2 = linear_forward(a1, p["agg.w2"].value, p["agg.b2"].value)
    return sigmoid(z2), (concat, z1, a1, z2)


def _agg_backward(cache, dx, p):
    concat, z1, a1, z2 = cache
    dz2 = sigmoid_backward(z2, dx)
    da1, dw2, db2 = linear_backward(a1, p["agg.w2"].value, dz2)
    p["agg.w2"].grad += dw2
    p["agg.b2"].grad += db2
    dz1 = relu_backward(z1, da1)
    dconcat, dw1, db1 = linear_backward(concat, p["agg.w1"].value, dz1)
    p["agg.w1"].grad += dw1
    p["agg.b1"].grad += db1
    return dconcat


def model_forward(kind: str, inputs: ModelInputs, aux: SpectrumAux | None, params) -> tuple:
    """Forward pass of any model kind; returns (prediction, cache)."""
    if kind == "compsnn":
        m1, c1 = _gmlp_forward(inputs.node_signal_flat, params)
        m2, c2 = _gcnn_forward(inputs.shat, aux, params)
        m3, c3 = _cnn_forward(inputs.features, params)
        x, c4 = _agg_forward(np.concatenate([m1, m2, m3]), params)
        return x, ("compsnn", c1, c2, c3, c4)
    if kind == "single_mlp":
        m, cm = _gmlp_forward(inputs.node_signal_flat, params)
    elif kind == "single_gcnn":
        m, cm = _gcnn_forward(inputs.shat, aux, params)
    elif kind == "single_cnn":
        m, cm = _cnn_forward(inputs.features, params)
    else:
        raise UnknownKind(f"model kind {kind!r}")
    x, ch = _head_forward(m, params)
    return x, (kind, cm, ch)


def model_backward(cache, dx, params) -> None:
    """Accumulate parameter gradients for a cached forward pass."""
    kind = cache[0]
    if kind == "compsnn":
        _, c1, c2, c3, c4 = cache
        dconcat = _agg_backward(c4, dx, params)
        out = params["agg.w1"].value.shape[1] // 3
        _gmlp_backward(c1, dconcat[:out], params)
        _gcnn_backward(c2, dconcat[out : 2 * out], params)
        _cnn_backward(c3, dconcat[2 * out :], params)
        return
    _, cm, ch = cache
    dmod = _head_backward(ch, dx, params)
    if kind == "single_mlp":
        _gmlp_backward(cm, dmod, params)
    elif kind == "single_gcnn":
        _gcnn_backward(cm, dmod, params)
    else:
        _cnn_backward(cm, dmod, params)


# ---------------------------------------------------------------------------
# public forward operations
# ---------------------------------------------------------------------------

def _feature_matrix(features) -> np.ndarray:
    x = features.channels if isinstance(features, FeatureSeries) else np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != FEATURE_DIM:
        raise ShapeMismatch(f"features must be ({FEATURE_DIM}, N), got {x.shape}")
    return x


def forward_graph_mlp(node_signal: np.ndarray, params) -> np.ndarray:
    """Flatten the (nodes x 8) signal row-major and run the graph MLP."""
    sig = np.asarray(node_signal, dtype=np.float64)
    if sig.ndim != 2 or sig.shape[1] != NODE_SIGNAL_DIM:
        raise ShapeMismatch(f"node signal must be (n, {NODE_SIGNAL_DIM}), got {sig.shape}")
    if sig.shape[0] * NODE_SIGNAL_DIM != params["gmlp.w1"].value.shape[1]:
        raise ShapeMismatch("node signal size does not match the first layer")
    out, _ = _gmlp_forward(sig.reshape(-1), params)
    return out


def spectral_filter_bank(lam: np.ndarray, params) -> np.ndarray:
    """Coefficient matrix (filters x degree+1): one coefficient MLP per filter,
    each mapping the full eigenvalue vector to its polynomial coefficients.

    The MLPs emit coefficients in the conditioned (lam / BASIS_SCALE)^k basis;
    the returned rows are mapped back to plain-power coefficients, so feeding
    them to apply_spectral_filter reproduces the network's filter responses.
    """
    lam = np.asarray(lam, dtype=np.float64)
    count = _filter_count(params)
    if count == 0:
        raise UnknownKind("parameter set holds no spectral filters")
    if lam.shape != (params["gcnn.f0.w1"].value.shape[1],):
        raise ShapeMismatch(f"eigenvalues {lam.shape} vs filter input {params['gcnn.f0.w1'].value.shape}")
    degree_plus_1 = params["gcnn.f0.w2"].value.shape[0]
    unscale = BASIS_SCALE ** -np.arange(degree_plus_1)
    rows = []
    for i in range(count):
        a1 = tanh(linear_forward(lam, params[f"gcnn.f{i}.w1"].value, params[f"gcnn.f{i}.b1"].value))
        coeffs = linear_forward(a1, params[f"gcnn.f{i}.w2"].value, params[f"gcnn.f{i}.b2"].value)
        rows.append(coeffs * unscale)
    return np.stack(rows)


def apply_spectral_filter(h: np.ndarray, lam: np.ndarray, shat: np.ndarray) -> np.ndarray:
    """Pointwise spectral filtering: out_i = (sum_k h_k lam_i^k) * shat_i."""
    h = np.asarray(h, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    shat = np.asarray(shat, dtype=np.float64)
    if h.ndim != 1 or lam.shape != shat.shape or lam.ndim != 1:
        raise ShapeMismatch(f"h {h.shape}, lam {lam.shape}, shat {shat.shape}")
    powers = np.vander(lam, len(h), increasing=True)
    return (powers @ h) * shat


def forward_gcnn(visits, spectrum: Spectrum, params) -> np.ndarray:
    """Transform visit counts to the spectral domain, filter, and read out."""
    shat = gft(spectrum, np.asarray(visits, dtype=np.float64))
    degree = params["gcnn.f0.w2"].value.shape[0] - 1
    aux = SpectrumAux.from_spectrum(spectrum, degree)
    out, _ = _gcnn_forward(shat, aux, params)
    return out


def forward_cnn(features, params) -> np.ndarray:
    """Sigmoid feature conv, sigmoid attention conv, attention-weighted mean
    pooling over time, linear readout."""
    out, _ = _cnn_forward(_feature_matrix(features), params)
    return out


def forward_compsnn(node_signal, visits, features, spectrum: Spectrum, params) -> np.ndarray:
    """Composite prediction in (0, 1)^u from all three representations."""
    sig = np.asarray(node_signal, dtype=np.float64)
    if sig.ndim != 2 or sig.shape[1] != NODE_SIGNAL_DIM:
        raise ShapeMismatch(f"node signal must be (n, {NODE_SIGNAL_DIM}), got {sig.shape}")
    degree = params["gcnn.f0.w2"].value.shape[0] - 1
    aux = SpectrumAux.from_spectrum(spectrum, degree)
    inputs = ModelInputs(
        node_signal_flat=sig.reshape(-1),
        shat=gft(spectrum, np.asarray(visits, dtype=np.float64)),
        features=_feature_matrix(features),
    )
    x, _ = model_forward("compsnn", inputs, aux, params)
    return x


def forward_singlenn(module_kind: str, module_input, params, spectrum: Spectrum | None = None) -> np.ndarray:
    """One module feeding a linear head with a sigmoid output."""
    if module_kind not in MODULE_KINDS:
        raise UnknownKind(f"module kind {module_kind!r}")
    if module_kind == "graph_mlp":
        m = forward_graph_mlp(module_input, params)
    elif module_kind == "gcnn":
        if spectrum is None:
            raise ShapeMismatch("gcnn single model needs a spectrum")
        m = forward_gcnn(module_input, spectrum, params)
    else:
        m = forward_cnn(module_input, params)
    x, _ = _head_forward(m, params)
    return x


def loss(x, u, epsilon) -> tuple[float, np.ndarray]:
    """Width-scaled squared error and its gradient with respect to x.

    loss = sum_i (x_i - u_i)^2 / (2 eps_i^2), i.e. the negative log of the
    Gaussian density at x divided by its value at the center u; zero iff
    x == u. Gradient: (x_i - u_i) / eps_i^2.
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    eps = np.asarray(epsilon, dtype=np.float64)
    if x.shape != u.shape or eps.shape != x.shape:
        raise ShapeMismatch(f"loss shapes: x {x.shape}, u {u.shape}, eps {eps.shape}")
    if np.any(eps <= 0):
        raise NonPositiveEpsilon("epsilon must be strictly positive")
    d = x - u
    value = float(np.sum(d * d / (2.0 * eps * eps)))
    return value, d / (eps * eps)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model_kind: str
    config: CompSnnConfig
    seed: int
    epoch: int
    params: dict[str, Param]
    extras: dict


def save_checkpoint(path, model_kind: str, config: CompSnnConfig, seed: int,
                    epoch: int, params: dict[str, Param], extras: dict | None = None) -> None:
    """Write a JSON checkpoint; float values are stored as shortest
    round-trip decimal strings so reloads are bit-identical."""
    cfg = asdict(config)
    cfg["epsilon"] = [repr(float(e)) for e in config.epsilon]
    cfg["model_kind"] = model_kind
    if extras:
        cfg["extras"] = {k: _encode_extra(v) for k, v in extras.items()}
    doc = {
        "config": cfg,
        "seed": seed,
        "epoch": epoch,
        "params": {
            name: {
                "shape": list(p.value.shape),
                "values": [repr(float(v)) for v in p.value.reshape(-1)],
            }
            for name, p in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _encode_extra(v):
    if isinstance(v, np.ndarray):
        return {"array": [repr(float(x)) for x in v.reshape(-1)], "shape": list(v.shape)}
    return v


def _decode_extra(v):
    if isinstance(v, dict) and "array" in v:
        return np.array([float(x) for x in v["array"]], dtype=np.float64).reshape(v["shape"])
    return v


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg_doc = dict(doc["config"])
    model_kind = cfg_doc.pop("model_kind")
    extras = {k: _decode_extra(v) for k, v in cfg_doc.pop("extras", {}).items()}
    cfg_doc["epsilon"] = tuple(float(e) for e in cfg_doc["epsilon"])
    config = CompSnnConfig(**cfg_doc)
    params = {}
    for name, entry in doc["params"].items():
        values = np.array([float(v) for v in entry["values"]], dtype=np.float64)
        params[name] = Param(values.reshape(entry["shape"]))
    return Checkpoint(model_kind, config, int(doc["seed"]), int(doc["epoch"]), params, extras)
