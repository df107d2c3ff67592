"""Dense float64 tensors with reverse-mode automatic differentiation.

The op vocabulary is deliberately small: exactly what 1D conv / LSTM
classifiers need (plus the reductions the scoring code uses). Every op
records a backward closure; ``Tensor.backward`` replays the tape in
reverse topological order and accumulates gradients into ``.grad``.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """An operation received tensors with incompatible shapes."""


class MissingTape(RuntimeError):
    """backward() was called on a tensor with no recorded graph."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Run reverse-mode differentiation from this tensor.

        Without an explicit seed the tensor must hold a single value
        (a loss); the seed defaults to 1.
        """
        if self._backward is None and not self._parents:
            raise MissingTape("no recorded operations lead to this tensor")
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.accumulate(np.asarray(seed, dtype=np.float64).reshape(self.data.shape))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def sum(self):
        return sum_all(self)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a: Tensor, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _node(data, (a, b), backward)


def transpose2d(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose2d expects a matrix, got {a.shape}")
    data = a.data.T

    def backward(g):
        a.accumulate(g.T)

    return _node(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)

    def backward(g):
        a.accumulate(g * mask)

    return _node(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a.accumulate(g * data * (1.0 - data))

    return _node(data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate(g * (1.0 - data * data))

    return _node(data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    data = np.array(a.data.sum())

    def backward(g):
        a.accumulate(np.full_like(a.data, float(g)))

    return _node(data, (a,), backward)


def mean_last_axis(a: Tensor) -> Tensor:
    """Mean over the trailing axis, e.g. global average pooling over time."""
    n = a.data.shape[-1]
    data = a.data.mean(axis=-1)

    def backward(g):
        a.accumulate(np.repeat(g[..., None], n, axis=-1) / n)

    return _node(data, (a,), backward)


def last_step(a: Tensor) -> Tensor:
    """Select the final entry of the trailing (time) axis."""
    data = a.data[..., -1].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., -1] = g
        a.accumulate(full)

    return _node(data, (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    data = a.data * mask

    def backward(g):
        a.accumulate(g * mask)

    return _node(data, (a,), backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, layer_name: str = "conv") -> Tensor:
    """Valid (no padding), stride-1 cross-correlation.

    x: [B, C_in, L], w: [C_out, C_in, K], b: [C_out] -> [B, C_out, L-K+1].
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeMismatch(f"{layer_name}: conv1d expects 3D input/kernel, got {x.shape}, {w.shape}")
    B, cin, L = x.shape
    cout, cin_w, K = w.shape
    if cin != cin_w:
        raise ShapeMismatch(f"{layer_name}: input has {cin} channels, kernel expects {cin_w}")
    if L < K:
        raise ShapeMismatch(f"{layer_name}: input length {L} shorter than kernel {K}")
    cols = np.lib.stride_tricks.sliding_window_view(x.data, K, axis=2)  # [B, C_in, L_out, K]
    data = np.einsum("bilk,oik->bol", cols, w.data, optimize=True)
    if b is not None:
        data = data + b.data[None, :, None]

    def backward(g):
        if w.requires_grad:
            w.accumulate(np.einsum("bol,bilk->oik", g, cols, optimize=True))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gp = np.pad(g, ((0, 0), (0, 0), (K - 1, K - 1)))
            gw = np.lib.stride_tricks.sliding_window_view(gp, K, axis=2)  # [B, C_out, L, K]
            x.accumulate(np.einsum("bolk,oik->bil", gw, w.data[:, :, ::-1], optimize=True))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


def lstm(x: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor, layer_name: str = "lstm") -> Tensor:
    """Single LSTM layer over a [B, C_in, T] sequence; returns hidden states [B, H, T].

    Gate order i, f, g, o; zero initial hidden/cell state. Backward is a
    fused backpropagation-through-time pass over the cached gate values.
    """
    if x.ndim != 3:
        raise ShapeMismatch(f"{layer_name}: expects [B, C, T] input, got {x.shape}")
    B, cin, T = x.shape
    H4, cin_w = w_ih.shape
    H = H4 // 4
    if cin != cin_w:
        raise ShapeMismatch(f"{layer_name}: input has {cin} channels, gate weights expect {cin_w}")
    if w_hh.shape != (H4, H) or b.shape != (H4,):
        raise ShapeMismatch(f"{layer_name}: inconsistent gate parameter shapes")

    xs = np.ascontiguousarray(x.data.transpose(2, 0, 1))  # [T, B, C_in]
    gates = np.empty((T, B, 4 * H))
    cells = np.empty((T, B, H))
    tanh_c = np.empty((T, B, H))
    hidden = np.empty((T, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        raw = xs[t] @ w_ih.data.T + h @ w_hh.data.T + b.data
        raw[:, : 2 * H] = 1.0 / (1.0 + np.exp(-raw[:, : 2 * H]))          # i, f
        raw[:, 2 * H : 3 * H] = np.tanh(raw[:, 2 * H : 3 * H])            # g
        raw[:, 3 * H :] = 1.0 / (1.0 + np.exp(-raw[:, 3 * H :]))          # o
        gates[t] = raw
        c = raw[:, H : 2 * H] * c + raw[:, :H] * raw[:, 2 * H : 3 * H]
        cells[t] = c
        tanh_c[t] = np.tanh(c)
        h = raw[:, 3 * H :] * tanh_c[t]
        hidden[t] = h
    data = np.ascontiguousarray(hidden.transpose(1, 2, 0))  # [B, H, T]

    def backward(g):
        gh_seq = np.ascontiguousarray(g.transpose(2, 0, 1))  # [T, B, H]
        d_wih = np.zeros_like(w_ih.data)
        d_whh = np.zeros_like(w_hh.data)
        d_b = np.zeros_like(b.data)
        d_x = np.zeros_like(xs) if x.requires_grad else None
        dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        draw = np.empty((B, 4 * H))
        for t in range(T - 1, -1, -1):
            dh = dh + gh_seq[t]
            i, f = gates[t, :, :H], gates[t, :, H : 2 * H]
            gg, o = gates[t, :, 2 * H : 3 * H], gates[t, :, 3 * H :]
            dc = dc + dh * o * (1.0 - tanh_c[t] * tanh_c[t])
            c_prev = cells[t - 1] if t > 0 else np.zeros((B, H))
            draw[:, :H] = (dc * gg) * i * (1.0 - i)
            draw[:, H : 2 * H] = (dc * c_prev) * f * (1.0 - f)
            draw[:, 2 * H : 3 * H] = (dc * i) * (1.0 - gg * gg)
            draw[:, 3 * H :] = (dh * tanh_c[t]) * o * (1.0 - o)
            d_wih += draw.T @ xs[t]
            h_prev = hidden[t - 1] if t > 0 else np.zeros((B, H))
            d_whh += draw.T @ h_prev
            d_b += draw.sum(axis=0)
            if d_x is not None:
                d_x[t] = draw @ w_ih.data
            dh = draw @ w_hh.data
            dc = dc * f
        if w_ih.requires_grad:
            w_ih.accumulate(d_wih)
        if w_hh.requires_grad:
            w_hh.accumulate(d_whh)
        if b.requires_grad:
            b.accumulate(d_b)
        if d_x is not None:
            x.accumulate(np.ascontiguousarray(d_x.transpose(1, 2, 0)))

    return _node(data, (x, w_ih, w_hh, b), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy, stabilized by max subtraction.

    logits: [B, K]; labels: int array [B] with values in [0, K).
    """
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeMismatch(f"cross_entropy expects [B, K] logits, got {logits.shape}")
    B, K = logits.shape
    if labels.shape != (B,):
        raise ShapeMismatch(f"labels shape {labels.shape} does not match batch {B}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"label out of range [0, {K})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    data = np.array(-logp[np.arange(B), labels].mean())

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(B), labels] -= 1.0
        logits.accumulate(grad * (float(g) / B))

    return _node(data, (logits,), backward)
