"""Reverse-mode autodiff over numpy arrays.

Every differentiable operation builds a :class:`Tensor` that remembers its
parents and a closure that pushes the output gradient back into them.
``backward`` orders the recorded nodes topologically and sweeps them once in
reverse. Gradients accumulate (``+=``) so a weight used twice, as in the
shared-weight parallel network, collects both contributions; call
``zero_grad`` between steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 dtype=None, _parents: tuple = (), _op: str = ""):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op or 'leaf'})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> "ComputeTape":
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        tape = ComputeTape.from_output(self)
        tape.run_backward(self)
        return tape

    # sugar used by tests and small compositions
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def sum(self):
        return tensor_sum(self)


class ComputeTape:
    """Topologically ordered record of the nodes feeding one output."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputeTape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def run_backward(self, out: Tensor) -> None:
        # intermediate grads are local to this sweep; only leaves keep theirs
        for node in self.nodes:
            if node._parents:
                node.grad = None
        out.grad = np.ones_like(out.data)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in self.nodes:
            if node._parents and node is not out:
                node.grad = None

    def __len__(self) -> int:
        return len(self.nodes)


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad for t in ts)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str) -> Tensor:
    return Tensor(data, requires_grad=_needs_grad(*parents), _parents=tuple(parents), _op=op)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data + b.data, (a, b), "add")

    def _backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)
    out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data * b.data, (a, b), "mul")

    def _backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)
    out._backward = _backward
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = _result(a.data * a.data.dtype.type(c), (a,), "scale")

    def _backward(g):
        a._accumulate(g * a.data.dtype.type(c))
    out._backward = _backward
    return out


def tensor_sum(a: Tensor) -> Tensor:
    out = _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,), "sum")

    def _backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))
    out._backward = _backward
    return out


def sum_squares(a: Tensor) -> Tensor:
    out = _result(np.asarray(np.sum(a.data * a.data), dtype=a.dtype), (a,), "sumsq")

    def _backward(g):
        a._accumulate(2 * g * a.data)
    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum keeps NaN so corrupt inputs surface as a non-finite loss
    out = _result(np.maximum(x.data, 0).astype(x.dtype), (x,), "relu")

    def _backward(g):
        x._accumulate(g * mask)
    out._backward = _backward
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = _result(x.data.reshape(shape), (x,), "reshape")

    def _backward(g):
        x._accumulate(g.reshape(x.shape))
    out._backward = _backward
    return out


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat on axis {axis}: incompatible shapes {ref} and {t.shape}")
    out = _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, "concat")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def _backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    out._backward = _backward
    return out


# ---------------------------------------------------------------- layer ops

def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"fully_connected: input {x.shape} does not match weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"fully_connected: bias {bias.shape} != ({weight.shape[1]},)")
    out = _result(x.data @ weight.data + bias.data, (x, weight, bias), "fc")

    def _backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight._accumulate(x.data.T @ g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))
    out._backward = _backward
    return out


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N,C,H,W) with ``kernel`` (O,C,kH,kW) plus bias."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    if bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({o},)")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} padding={padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    if kh == 1 and kw == 1:
        cols = xp[:, :, ::stride, ::stride][:, :, :ho, :wo]  # (N,C,Ho,Wo)
        y = np.tensordot(cols, kernel.data[:, :, 0, 0], axes=([1], [1]))  # N,Ho,Wo,O
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
        y = (cols @ kernel.data.reshape(o, -1).T).reshape(n, ho, wo, o)
    y = y.transpose(0, 3, 1, 2) + bias.data[None, :, None, None]
    out = _result(np.ascontiguousarray(y), (x, kernel, bias), "conv2d")

    def _backward(g):
        # g: N,O,Ho,Wo
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if kh == 1 and kw == 1:
            if kernel.requires_grad:
                dk = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
                kernel._accumulate(dk[:, :, None, None])
            if x.requires_grad:
                dcols = np.tensordot(kernel.data[:, :, 0, 0], g, axes=([0], [1])).transpose(1, 0, 2, 3)
                dxp = np.zeros_like(xp)
                dxp[:, :, ::stride, ::stride][:, :, :ho, :wo] += dcols
                x._accumulate(dxp[:, :, padding:padding + h, padding:padding + w])
            return
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        if kernel.requires_grad:
            kernel._accumulate((g2.T @ cols).reshape(kernel.shape))
        if x.requires_grad:
            dcols = (g2 @ kernel.data.reshape(o, -1)).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x._accumulate(dxp[:, :, padding:padding + h, padding:padding + w])
    out._backward = _backward
    return out


def maxpool2d(x: Tensor, window: int, stride: int, padding: int = 0) -> Tensor:
    """Max over ``window`` x ``window`` patches; ties send gradient to the first (row-major) max."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d: expected 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if window > h + 2 * padding or window > w + 2 * padding:
        raise ShapeError(f"maxpool2d: window {window} larger than input {h}x{w}")
    if padding > window // 2:
        raise ShapeError("maxpool2d: padding must be at most half the window")
    ho = conv_output_size(h, window, stride, padding)
    wo = conv_output_size(w, window, stride, padding)
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                    constant_values=-np.inf)
    def tap(i, j):
        return xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]

    y = tap(0, 0).copy()
    for i in range(window):
        for j in range(window):
            if i or j:
                np.maximum(y, tap(i, j), out=y)
    out = _result(y, (x,), "maxpool2d")

    def _backward(g):
        dxp = np.zeros(xp.shape, dtype=x.dtype)
        taken = np.zeros(y.shape, dtype=bool)
        # row-major scan: the first tap equal to the max takes the gradient
        for i in range(window):
            for j in range(window):
                sel = tap(i, j) == y
                sel &= ~taken
                taken |= sel
                dxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += g * sel
        x._accumulate(dxp[:, :, padding:padding + h, padding:padding + w])
    out._backward = _backward
    return out


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so evaluation is the identity."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1 - p)
    out = _result(x.data * keep, (x,), "dropout")

    def _backward(g):
        x._accumulate(g * keep)
    out._backward = _backward
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: Tensor, labels, params: Iterable[Tensor] = (),
                          l2_coeff: float = 0.0) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy plus ``l2_coeff`` times the squared norm of weight tensors.

    Biases (1-D parameters) are excluded from the penalty.
    """
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k or not np.all(labels == labels.astype(int))):
        raise ValueError(f"labels must be integers in [0, {k}), got {np.unique(labels)}")
    labels = labels.astype(int)
    logp = log_softmax(logits.data)
    probs = np.exp(logp)
    loss = _result(np.asarray(-logp[np.arange(n), labels].mean(), dtype=logits.dtype), (logits,), "xent")

    def _backward(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1
        logits._accumulate(d * (g / n))
    loss._backward = _backward

    if l2_coeff:
        for p in params:
            if p.data.ndim > 1:
                loss = add(loss, scale(sum_squares(p), l2_coeff))
    return loss, probs
