"""The three graph classifiers: GCN, GIN, and GIN with learnable aggregation.

All models map a SceneGraph to a 2-vector of class log-probabilities.
GCN propagates features through the symmetrically degree-normalized
adjacency and mean-pools the last layer.  GIN updates each node from
(1 + eps) * own state + aggregated neighbor states through a two-layer
MLP, pools every layer's node states, and classifies the concatenation.
The LAF variant swaps GIN's sum aggregation for a trainable ratio of
generalized p-norm terms evaluated on sigmoid-squashed multisets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import AggregatorMismatch, InputOutOfRange
from .graph_builder import SceneGraph
from .numerics import ParameterStore, Tensor

VARIANTS = ("gcn", "gin", "ginlaf")
EDGE_WEIGHT_MODES = ("binary", "expneg")
_DEFAULT_HIDDEN = {"gcn": 1024, "gin": 1024, "ginlaf": 32}

DENOMINATOR_FLOOR = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    vocab_size: int = 80
    num_layers: int = 3
    hidden_dim: int | None = None  # None -> 1024 for gcn/gin, 32 for ginlaf
    num_classes: int = 2
    edge_weight_mode: str = "expneg"
    beta: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", _DEFAULT_HIDDEN[self.variant])
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.num_classes != 2:
            raise ValueError("this task is binary: num_classes must be 2")
        if self.edge_weight_mode not in EDGE_WEIGHT_MODES:
            raise ValueError(
                f"edge_weight_mode must be one of {EDGE_WEIGHT_MODES}, got {self.edge_weight_mode!r}"
            )
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    @property
    def feature_dim(self) -> int:
        return self.vocab_size + 1


def normalize_adjacency(graph: SceneGraph, mode: str = "expneg") -> np.ndarray:
    """Degree-normalized propagation matrix D^-1/2 (W + I) D^-1/2.

    Binary mode weights every edge 1.  ExpNeg weights an edge exp(-d/tau)
    with tau the mean nonzero edge distance, so near objects couple more
    strongly than far ones; storing raw distances as weights would invert
    that.  Self-loops keep isolated nodes alive and the degrees positive.
    """
    if mode not in EDGE_WEIGHT_MODES:
        raise ValueError(f"unknown edge weight mode {mode!r}")
    mask = graph.edge_mask
    if mode == "binary":
        weights = mask.astype(np.float64)
    else:
        nonzero = graph.adjacency[mask & (graph.adjacency > 0)]
        tau = float(nonzero.mean()) if nonzero.size else 1.0
        weights = np.where(mask, np.exp(-graph.adjacency / tau), 0.0)
    tilde = weights + np.eye(graph.n)
    inv_sqrt_deg = 1.0 / np.sqrt(tilde.sum(axis=1))
    return tilde * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


# --- learnable aggregation ---

@dataclass(frozen=True)
class LafParams:
    """Effective parameters of the aggregation ratio.

    Exponents are the values actually used in the formula (the trainable
    module stores unconstrained numbers and maps them through softplus to
    get these).  Coefficients are free reals; the _laf suffix keeps them
    apart from the graph-construction distance ratio beta.
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float
    alpha_laf: float
    beta_laf: float
    gamma_laf: float
    delta_laf: float

    def __post_init__(self):
        for name in "abcdefgh":
            if getattr(self, name) < 0:
                raise ValueError(f"exponent {name} must be >= 0")


def _lp_norm_term(x: np.ndarray, inner: float, outer: float) -> float:
    # np.power(0.0, 0.0) == 1.0, which is the convention that makes a zero
    # inner exponent count multiset cardinality
    return float(np.power(np.sum(np.power(x, inner)), outer))


def _guard_denominator(value: float) -> float:
    if abs(value) >= DENOMINATOR_FLOOR:
        return value
    return -DENOMINATOR_FLOOR if value < 0 else DENOMINATOR_FLOOR


def laf_aggregate(params: LafParams, values) -> float:
    """Aggregate a multiset of values in [0, 1] into one number.

    Computes (alpha * L_{a,b}(x) + beta * L_{c,d}(1-x)) over
    (gamma * L_{e,f}(x) + delta * L_{g,h}(1-x)) with L_{p,q}(x) = (sum x_i^q)^p.
    The empty multiset aggregates to 0, extending the invariance of the
    L terms under appended zeros.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return 0.0
    if np.any((x < 0) | (x > 1)):
        raise InputOutOfRange(f"values must lie in [0, 1], got range [{x.min()}, {x.max()}]")
    num = params.alpha_laf * _lp_norm_term(x, params.b, params.a)
    num += params.beta_laf * _lp_norm_term(1.0 - x, params.d, params.c)
    den = params.gamma_laf * _lp_norm_term(x, params.f, params.e)
    den += params.delta_laf * _lp_norm_term(1.0 - x, params.h, params.g)
    return float(num / _guard_denominator(den))


def _softplus_inverse(y: float) -> float:
    if y <= 0:
        raise ValueError(f"softplus is positive, cannot invert {y}")
    return float(np.log(np.expm1(y)))


class LafModule:
    """Trainable channel-wise aggregation over row multisets.

    selector is a constant (m, n) 0/1 matrix whose rows pick the multisets:
    the neighbor mask for message aggregation, a ones row for pooling.
    Inputs must already be squashed into [0, 1].
    """

    _EXPONENTS = ("a", "b", "c", "d", "e", "f", "g", "h")
    _COEFFICIENTS = ("alpha_laf", "beta_laf", "gamma_laf", "delta_laf")

    # Start at the sum aggregator: numerator alpha * (sum x)^1, denominator
    # ~1 (outer exponent near zero).  A random start makes numerator and
    # denominator nearly proportional, which squeezes the input signal out
    # of the ratio and stalls training.
    _INIT_EXPONENTS = {"a": 1.0, "b": 1.0, "c": 1.0, "d": 1.0, "e": 0.01, "f": 1.0, "g": 1.0, "h": 1.0}
    _INIT_COEFFICIENTS = {"alpha_laf": 1.0, "beta_laf": 0.0, "gamma_laf": 1.0, "delta_laf": 0.0}

    def __init__(self, store: ParameterStore, prefix: str):
        self._raw = {
            name: store.add(
                f"{prefix}.{name}_raw",
                nm.parameter(np.full((1, 1), _softplus_inverse(self._INIT_EXPONENTS[name]))),
            )
            for name in self._EXPONENTS
        }
        self._coef = {
            name: store.add(
                f"{prefix}.{name}",
                nm.parameter(np.full((1, 1), self._INIT_COEFFICIENTS[name])),
            )
            for name in self._COEFFICIENTS
        }

    def set_effective(self, params: LafParams) -> None:
        for name in self._EXPONENTS:
            self._raw[name].values[...] = _softplus_inverse(getattr(params, name))
        for name in self._COEFFICIENTS:
            self._coef[name].values[...] = getattr(params, name)

    def __call__(self, squashed: Tensor, selector: Tensor) -> Tensor:
        exp = {name: nm.softplus(t) for name, t in self._raw.items()}
        complement = nm.sub(1.0, squashed)

        def lp(base, inner, outer):
            return nm.scalar_pow(nm.matmul(selector, nm.scalar_pow(base, inner)), outer)

        num = nm.add(
            nm.mul(self._coef["alpha_laf"], lp(squashed, exp["b"], exp["a"])),
            nm.mul(self._coef["beta_laf"], lp(complement, exp["d"], exp["c"])),
        )
        den = nm.add(
            nm.mul(self._coef["gamma_laf"], lp(squashed, exp["f"], exp["e"])),
            nm.mul(self._coef["delta_laf"], lp(complement, exp["h"], exp["g"])),
        )
        return nm.div(num, nm.clamp_away_from_zero(den, DENOMINATOR_FLOOR))


# --- shared building blocks ---

def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Affine:
    def __init__(self, store, prefix, in_dim, out_dim, rng):
        self.weight = store.add(f"{prefix}.weight", nm.parameter(_glorot(rng, in_dim, out_dim)))
        self.bias = store.add(f"{prefix}.bias", nm.parameter(np.zeros((1, out_dim))))

    def __call__(self, x: Tensor) -> Tensor:
        return nm.add_bias(nm.matmul(x, self.weight), self.bias)


class GinLayer:
    """One GIN update: MLP((1 + eps) * own state + aggregated neighbors)."""

    def __init__(self, store, prefix, in_dim, hidden_dim, rng):
        self.eps = store.add(f"{prefix}.eps", nm.parameter(np.zeros((1, 1))))
        self.lin1 = Affine(store, f"{prefix}.mlp1", in_dim, hidden_dim, rng)
        self.lin2 = Affine(store, f"{prefix}.mlp2", hidden_dim, hidden_dim, rng)

    def __call__(self, h: Tensor, aggregated: Tensor) -> Tensor:
        mixed = nm.add(nm.mul(nm.add(self.eps, 1.0), h), aggregated)
        return self.lin2(nm.relu(self.lin1(mixed)))


# --- models ---

class GCNModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        if config.variant != "gcn":
            raise ValueError(f"GCNModel requires variant 'gcn', got {config.variant!r}")
        self.config = config
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        dims = [config.feature_dim] + [config.hidden_dim] * config.num_layers
        self.weights = [
            self.store.add(f"layer{k}.weight", nm.parameter(_glorot(rng, dims[k], dims[k + 1])))
            for k in range(config.num_layers)
        ]
        self.head = Affine(self.store, "head", config.hidden_dim, config.num_classes, rng)

    def forward(self, graph: SceneGraph) -> Tensor:
        a_hat = nm.constant(normalize_adjacency(graph, self.config.edge_weight_mode))
        h = nm.constant(graph.features)
        for weight in self.weights:
            h = nm.relu(nm.matmul(nm.matmul(a_hat, h), weight))
        return nm.log_softmax(self.head(nm.mean_rows(h)))


class GINModel:
    """GIN classifier; aggregator 'sum' or 'laf' (laf requires variant ginlaf)."""

    def __init__(self, config: ModelConfig, seed: int = 0, aggregator: str | None = None):
        if config.variant not in ("gin", "ginlaf"):
            raise ValueError(f"GINModel requires variant gin/ginlaf, got {config.variant!r}")
        if aggregator is None:
            aggregator = "laf" if config.variant == "ginlaf" else "sum"
        if aggregator not in ("sum", "laf"):
            raise ValueError(f"unknown aggregator {aggregator!r}")
        if aggregator == "laf" and config.variant != "ginlaf":
            raise AggregatorMismatch("the laf aggregator is reserved for the ginlaf variant")
        self.config = config
        self.aggregator = aggregator
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)

        dims = [config.feature_dim] + [config.hidden_dim] * config.num_layers
        self.layers = []
        self.layer_lafs = []
        for k in range(config.num_layers):
            self.layers.append(GinLayer(self.store, f"layer{k}", dims[k], config.hidden_dim, rng))
            if aggregator == "laf":
                self.layer_lafs.append(LafModule(self.store, f"layer{k}.laf"))
        self.pool_lafs = []
        if aggregator == "laf":
            self.pool_lafs = [
                LafModule(self.store, f"pool{k}.laf")
                for k in range(config.num_layers + 1)
            ]
        readout_dim = config.feature_dim + config.hidden_dim * config.num_layers
        self.head = Affine(self.store, "head", readout_dim, config.num_classes, rng)

    def _aggregate(self, h: Tensor, neighbor: Tensor, k: int) -> Tensor:
        if self.aggregator == "sum":
            return nm.matmul(neighbor, h)
        return self.layer_lafs[k](nm.sigmoid(h), neighbor)

    def _pool(self, h: Tensor, ones_row: Tensor, k: int) -> Tensor:
        if self.aggregator == "sum":
            return nm.sum_rows(h)
        return self.pool_lafs[k](nm.sigmoid(h), ones_row)

    def forward(self, graph: SceneGraph) -> Tensor:
        neighbor = nm.constant(graph.edge_mask.astype(np.float64))
        ones_row = nm.constant(np.ones((1, graph.n)))
        states = [nm.constant(graph.features)]
        for k, layer in enumerate(self.layers):
            aggregated = self._aggregate(states[-1], neighbor, k)
            states.append(layer(states[-1], aggregated))
        pooled = [self._pool(h, ones_row, k) for k, h in enumerate(states)]
        return nm.log_softmax(self.head(nm.concat_cols(pooled)))


Model = GCNModel | GINModel


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    if config.variant == "gcn":
        return GCNModel(config, seed)
    return GINModel(config, seed)


def classify_log_probs(model: Model, graph: SceneGraph) -> np.ndarray:
    """Forward pass returning the log-probability vector as a plain array."""
    return model.forward(graph).values[0].copy()


def param_count(store: ParameterStore) -> int:
    return sum(t.values.size for _, t in store.items())
