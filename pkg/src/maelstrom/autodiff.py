"""Reverse-mode differentiation over small dense vector graphs.

A fresh graph is built for every forward pass and discarded after
``backward``. Recurrent state crosses timesteps only as plain numbers
(see :func:`detach`), never as graph edges, so unrolling a recurrence
through time is not even expressible here.

Supported operations are deliberately few: affine, tanh, relu, add,
concat, detach, and two scalar losses. Parameters are not graph nodes;
ops that consume a :class:`Param` accumulate into its ``grad`` buffer
directly during the backward sweep (unless the param is frozen).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, ShapeError, UsageError


class Param:
    """A named tensor with a gradient accumulator.

    Frozen params never receive gradient: the backward rules skip the
    accumulation entirely, so their ``grad`` buffer stays exactly zero.
    """

    __slots__ = ("name", "value", "grad", "frozen")

    def __init__(self, name: str, value, frozen: bool = False):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.frozen = bool(frozen)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        tag = " frozen" if self.frozen else ""
        return f"Param({self.name!r}, shape={self.value.shape}{tag})"


class Node:
    """One value in a single-timestep computation graph."""

    __slots__ = ("value", "parents", "backward_fn", "grad")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.grad: np.ndarray | None = None


def constant(value) -> Node:
    """Leaf node carrying a plain input vector."""
    return Node(np.asarray(value, dtype=float))


def detach(x: Node) -> Node:
    """Forward identity whose backward contribution is exactly zero.

    The returned node shares x's value bit-for-bit but records no
    parents, so the backward sweep cannot reach any of x's ancestors.
    """
    return Node(x.value)


def affine(w: Param, b: Param, x: Node) -> Node:
    """value = W @ x + b, with the standard affine backward rules."""
    wv, bv, xv = w.value, b.value, x.value
    if wv.ndim != 2 or xv.ndim != 1 or bv.ndim != 1:
        raise ShapeError(
            f"affine expects W (m,n), b (m,), x (n,); got {wv.shape}, {bv.shape}, {xv.shape}"
        )
    if wv.shape[1] != xv.shape[0] or wv.shape[0] != bv.shape[0]:
        raise ShapeError(
            f"affine shapes do not conform: W {wv.shape}, b {bv.shape}, x {xv.shape}"
        )
    out = wv @ xv + bv

    def backward_fn(g: np.ndarray) -> None:
        if not w.frozen:
            w.grad += np.outer(g, xv)
        if not b.frozen:
            b.grad += g
        x.grad += wv.T @ g

    return Node(out, (x,), backward_fn)


def tanh_node(x: Node) -> Node:
    out = np.tanh(x.value)

    def backward_fn(g: np.ndarray) -> None:
        x.grad += g * (1.0 - out * out)

    return Node(out, (x,), backward_fn)


def relu_node(x: Node) -> Node:
    out = np.maximum(x.value, 0.0)
    mask = x.value > 0.0  # derivative taken as 0 at the kink

    def backward_fn(g: np.ndarray) -> None:
        x.grad += g * mask

    return Node(out, (x,), backward_fn)


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add shapes differ: {a.value.shape} vs {b.value.shape}")
    out = a.value + b.value

    def backward_fn(g: np.ndarray) -> None:
        a.grad += g
        b.grad += g

    return Node(out, (a, b), backward_fn)


def concat(a: Node, b: Node) -> Node:
    if a.value.ndim != 1 or b.value.ndim != 1:
        raise ShapeError("concat expects 1-d vectors")
    na = a.value.shape[0]
    out = np.concatenate([a.value, b.value])

    def backward_fn(g: np.ndarray) -> None:
        a.grad += g[:na]
        b.grad += g[na:]

    return Node(out, (a, b), backward_fn)


def mse_loss(pred: Node, target) -> Node:
    """Scalar mean squared error; gradient is 2*(pred - target)/dim."""
    t = np.asarray(target, dtype=float)
    if pred.value.shape != t.shape:
        raise ShapeError(f"mse shapes differ: {pred.value.shape} vs {t.shape}")
    diff = pred.value - t
    dim = diff.shape[0]
    out = np.asarray(float(np.mean(diff * diff)))

    def backward_fn(g: np.ndarray) -> None:
        pred.grad += g * (2.0 / dim) * diff

    return Node(out, (pred,), backward_fn)


def softmax_xent_loss(pred: Node, class_index: int) -> Node:
    """Scalar softmax cross-entropy against a single class index.

    Gradient w.r.t. the logits is softmax(pred) - one_hot(class_index).
    """
    logits = pred.value
    if logits.ndim != 1:
        raise ShapeError("softmax_xent_loss expects a 1-d logit vector")
    if not (0 <= int(class_index) < logits.shape[0]):
        raise InputError(
            f"class index {class_index} out of range for {logits.shape[0]} classes"
        )
    c = int(class_index)
    m = float(np.max(logits))
    shifted = logits - m
    log_z = m + float(np.log(np.sum(np.exp(shifted))))
    out = np.asarray(log_z - float(logits[c]))
    probs = np.exp(shifted) / float(np.sum(np.exp(shifted)))

    def backward_fn(g: np.ndarray) -> None:
        delta = probs.copy()
        delta[c] -= 1.0
        pred.grad += g * delta

    return Node(out, (pred,), backward_fn)


def _topo_order(root: Node) -> list[Node]:
    """Parents-before-children ordering; iterative so graph depth is
    bounded only by memory, not the recursion limit."""
    order: list[Node] = []
    state: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        s = state.get(id(node), 0)
        if s == 0:
            state[id(node)] = 1
            for p in node.parents:
                if state.get(id(p), 0) == 0:
                    stack.append(p)
        elif s == 1:
            state[id(node)] = 2
            order.append(node)
            stack.pop()
        else:
            stack.pop()
    return order


def backward(loss: Node) -> None:
    """Accumulate dloss/dparam into every reachable non-frozen Param.

    The root must be scalar. Node gradients are (re)allocated for this
    graph only; Param gradients accumulate across calls until explicitly
    zeroed by the caller.
    """
    if np.ndim(loss.value) != 0 and np.size(loss.value) != 1:
        raise UsageError(f"backward root must be scalar, got shape {np.shape(loss.value)}")
    order = _topo_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_fn is not None:
            node.backward_fn(node.grad)


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


def grad_check(
    builder: Callable[[], Node], params: Sequence[Param], eps: float = 1e-5
) -> float:
    """Compare reverse-mode gradients against central finite differences.

    ``builder`` must deterministically rebuild the scalar loss graph from
    the current param values. Returns the worst relative error over all
    param coordinates, with denominator max(|analytic|, |numeric|, 1e-8).
    """
    zero_grads(params)
    backward(builder())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = ga.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lo_hi = float(builder().value)
            flat[idx] = orig - eps
            lo_lo = float(builder().value)
            flat[idx] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            a = float(gflat[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    zero_grads(params)
    return worst
