"""Dense float64 tensors with reverse-mode automatic differentiation.

The GNN layers need a small, fixed set of operations, so the tape is
dynamic and minimal: each op computes its forward value eagerly and closes
over whatever its backward pass needs.  Shapes vary per scene (graphs have
different node counts), which rules out a static graph.

Double precision throughout: the test suite leans on 1e-5-level central
difference gradient checks, which float32 cannot support.
"""

from __future__ import annotations

import numpy as np

from .errors import InputOutOfRange, NonFinite, NotScalar, ShapeMismatch


class Tensor:
    """A dense array plus the bookkeeping reverse-mode AD needs.

    Leaf tensors created with requires_grad=True own a same-shape gradient
    accumulator; backward() adds into it, so gradients accumulate across
    calls until zeroed.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, values, requires_grad=False, _parents=(), _backward_fn=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward_fn
        self.grad = None
        if self.requires_grad and _backward_fn is None:
            self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _is_scalar(t: Tensor) -> bool:
    return t.values.size == 1


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and not _is_scalar(a) and not _is_scalar(b):
        raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    # the operand was a broadcast scalar
    return np.full(shape, grad.sum())


def _result(values, parents, backward_fn) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(
        values,
        requires_grad=requires,
        _parents=tuple(parents) if requires else (),
        _backward_fn=backward_fn if requires else None,
    )


# --- elementwise / linear algebra ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.values @ b.values

    def backward_fn(g):
        ga = g @ b.values.T if a.requires_grad else None
        gb = a.values.T @ g if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward_fn)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "add")
    out = a.values + b.values

    def backward_fn(g):
        ga = _reduce_to(g, a.shape) if a.requires_grad else None
        gb = _reduce_to(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "sub")
    out = a.values - b.values

    def backward_fn(g):
        ga = _reduce_to(g, a.shape) if a.requires_grad else None
        gb = _reduce_to(-g, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "mul")
    out = a.values * b.values

    def backward_fn(g):
        ga = _reduce_to(g * b.values, a.shape) if a.requires_grad else None
        gb = _reduce_to(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise(a, b, "div")
    out = a.values / b.values

    def backward_fn(g):
        ga = _reduce_to(g / b.values, a.shape) if a.requires_grad else None
        gb = (
            _reduce_to(-g * a.values / (b.values * b.values), b.shape)
            if b.requires_grad
            else None
        )
        return ga, gb

    return _result(out, (a, b), backward_fn)


def scale(a: Tensor, factor: float) -> Tensor:
    a = _as_tensor(a)
    factor = float(factor)
    out = a.values * factor

    def backward_fn(g):
        return (g * factor if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a (1, m) bias row to every row of an (n, m) matrix."""
    a, bias = _as_tensor(a), _as_tensor(bias)
    if a.values.ndim != 2 or bias.shape != (1, a.shape[1]):
        raise ShapeMismatch(f"add_bias: incompatible shapes {a.shape} and {bias.shape}")
    out = a.values + bias.values

    def backward_fn(g):
        ga = g if a.requires_grad else None
        gb = g.sum(axis=0, keepdims=True) if bias.requires_grad else None
        return ga, gb

    return _result(out, (a, bias), backward_fn)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.values, 0.0)

    def backward_fn(g):
        # subgradient at 0 is defined as 0
        return (g * (a.values > 0) if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) <= 1 in both branches, so this never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid_values(a.values)

    def backward_fn(g):
        return (g * out * (1.0 - out) if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), the nonnegativity map for learnable exponents."""
    a = _as_tensor(a)
    x = a.values
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward_fn(g):
        return (g * _sigmoid_values(x) if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def exp_neg(a: Tensor) -> Tensor:
    """Elementwise exp(-x)."""
    a = _as_tensor(a)
    out = np.exp(-a.values)

    def backward_fn(g):
        return (-g * out if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def concat_cols(tensors) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat_cols: empty input")
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.values.ndim != 2 or t.shape[0] != rows:
            raise ShapeMismatch(
                f"concat_cols: row mismatch {[t.shape for t in tensors]}"
            )
    out = np.concatenate([t.values for t in tensors], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        return tuple(
            g[:, offsets[i] : offsets[i + 1]] if t.requires_grad else None
            for i, t in enumerate(tensors)
        )

    return _result(out, tensors, backward_fn)


def sum_rows(a: Tensor) -> Tensor:
    """Sum across rows: (n, m) -> (1, m)."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeMismatch(f"sum_rows: expected a matrix, got shape {a.shape}")
    out = a.values.sum(axis=0, keepdims=True)

    def backward_fn(g):
        return (np.broadcast_to(g, a.shape).copy() if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def mean_rows(a: Tensor) -> Tensor:
    """Mean across rows: (n, m) -> (1, m)."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeMismatch(f"mean_rows: expected a matrix, got shape {a.shape}")
    n = a.shape[0]
    out = a.values.mean(axis=0, keepdims=True)

    def backward_fn(g):
        return (np.broadcast_to(g / n, a.shape).copy() if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def scalar_pow(a: Tensor, p) -> Tensor:
    """Elementwise a**p for nonnegative bases and a scalar exponent.

    The exponent may be a plain float or a size-1 tensor (learnable).
    0**0 evaluates to 1 and zero base entries get zero gradient, so the
    aggregation formulas stay finite at empty neighbor sets.
    """
    a = _as_tensor(a)
    p = _as_tensor(p)
    if not _is_scalar(p):
        raise ShapeMismatch(f"scalar_pow: exponent must be scalar, got shape {p.shape}")
    if np.any(a.values < 0):
        raise InputOutOfRange("scalar_pow: base entries must be nonnegative")
    p_val = float(p.values.reshape(-1)[0])
    out = np.power(a.values, p_val)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"scalar_pow: non-finite result for exponent {p_val}")

    def backward_fn(g):
        positive = a.values > 0
        ga = None
        if a.requires_grad:
            ga = np.where(positive, g * p_val * np.power(a.values, p_val - 1.0, where=positive, out=np.zeros_like(a.values)), 0.0)
        gp = None
        if p.requires_grad:
            log_a = np.log(a.values, where=positive, out=np.zeros_like(a.values))
            gp = np.array([[np.sum(np.where(positive, g * out * log_a, 0.0))]])
        return ga, gp

    return _result(out, (a, p), backward_fn)


def clamp_away_from_zero(a: Tensor, min_magnitude: float) -> Tensor:
    """Push entries inside (-min_magnitude, min_magnitude) out to the boundary.

    Sign is preserved (zero counts as positive); gradient passes through
    untouched entries and is zero on clamped ones, mirroring relu.
    """
    a = _as_tensor(a)
    eps = float(min_magnitude)
    passthrough = np.abs(a.values) >= eps
    out = np.where(passthrough, a.values, np.where(a.values < 0, -eps, eps))

    def backward_fn(g):
        return (g * passthrough if a.requires_grad else None,)

    return _result(out, (a,), backward_fn)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log softmax, shifted by the row max for stability."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeMismatch(f"log_softmax: expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.values)):
        raise NonFinite("log_softmax: input contains NaN or infinity")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backward_fn(g):
        if not a.requires_grad:
            return (None,)
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return _result(out, (a,), backward_fn)


def pick(a: Tensor, index: int) -> Tensor:
    """Select column `index` from a single-row matrix as a (1, 1) tensor."""
    a = _as_tensor(a)
    if a.values.ndim != 2 or a.shape[0] != 1:
        raise ShapeMismatch(f"pick: expected a single-row matrix, got shape {a.shape}")
    if not 0 <= index < a.shape[1]:
        raise ShapeMismatch(f"pick: index {index} out of range for shape {a.shape}")
    out = a.values[:, index : index + 1].copy()

    def backward_fn(g):
        if not a.requires_grad:
            return (None,)
        ga = np.zeros_like(a.values)
        ga[0, index] = g[0, 0]
        return (ga,)

    return _result(out, (a,), backward_fn)


# --- reverse pass ---

def _topo_order(root: Tensor) -> list[Tensor]:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every tracked leaf reachable from loss."""
    if loss.values.size != 1:
        raise NotScalar(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    local = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = local.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in local:
                local[key] = local[key] + pg
            else:
                local[key] = pg


# --- parameter bookkeeping ---

class ParameterStore:
    """Named map of trainable tensors with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = values if isinstance(values, Tensor) else parameter(values)
        if not t.requires_grad:
            raise ValueError(f"parameter {name!r} must be tracked")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state_dict(self) -> dict:
        return {
            name: {"shape": list(t.values.shape), "values": t.values.reshape(-1).tolist()}
            for name, t in self._params.items()
        }

    def load_state_dict(self, state: dict) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, entry in state.items():
            t = self._params[name]
            values = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
            if values.shape != t.values.shape:
                raise ValueError(
                    f"parameter {name!r}: shape {values.shape} does not match {t.values.shape}"
                )
            t.values[...] = values


# --- finite-difference verification ---

def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check(f, x, h: float = 1e-6) -> float:
    """Compare the analytic gradient of scalar-valued f at x to central differences.

    Returns max_i |g_i - ghat_i| / max(1, |g_i|, |ghat_i|).
    """
    x0 = np.array(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    tracked = Tensor(x0.copy(), requires_grad=True)
    out = f(tracked)
    if out.values.size != 1:
        raise NotScalar(f"grad_check expects a scalar-valued f, got shape {out.shape}")
    backward(out)
    analytic = tracked.grad.reshape(-1).copy()

    numeric = np.zeros_like(analytic)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x0.copy())).item()
        flat[i] = orig - h
        fm = f(Tensor(x0.copy())).item()
        flat[i] = orig
        numeric[i] = (fp - fm) / (2.0 * h)
    return _relative_error(analytic, numeric)


def grad_check_params(loss_fn, store: ParameterStore, h: float = 1e-6) -> float:
    """grad_check over every tensor in a ParameterStore against loss_fn()."""
    store.zero_grad()
    loss = loss_fn()
    if loss.values.size != 1:
        raise NotScalar(f"grad_check_params expects a scalar loss, got shape {loss.shape}")
    backward(loss)
    worst = 0.0
    for _, t in store.items():
        analytic = t.grad.reshape(-1).copy()
        numeric = np.zeros_like(analytic)
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)
        worst = max(worst, _relative_error(analytic, numeric))
    return worst
