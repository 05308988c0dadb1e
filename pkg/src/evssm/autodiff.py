"""Reverse-mode autodiff over numpy arrays, real and complex, for the toy trainer.

Gradients of complex leaves use the independent-(Re, Im) convention:
grad = dL/dRe + 1j * dL/dIm. For holomorphic ops this means every vjp
multiplies by the conjugated local derivative; Re(.) passes the incoming
gradient straight through to the real part.

The recurrence op differentiates through the scan analytically: the adjoint of
x_k = a x_{k-1} + bu_k is itself a linear recurrence run in reverse with the
conjugated, time-shifted transitions, so backward reuses the same scan
machinery (parallel or sequential) and keeps memory at O(L * P).
"""

from __future__ import annotations

import numpy as np

from .scan import scan_parallel, scan_sequential


class _Node:
    __slots__ = ("value", "parents", "vjps", "is_leaf", "needs_grad")

    def __init__(self, value, parents, vjps, is_leaf, needs_grad):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.is_leaf = is_leaf
        self.needs_grad = needs_grad


class Var:
    """Handle to a tape node; supports arithmetic sugar against Vars and constants."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape._nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        return self.tape.grad(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only operation record; one backward pass per recording."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._grads: dict[int, np.ndarray] | None = None

    def leaf(self, value) -> Var:
        return self._push(np.asarray(value), (), (), is_leaf=True, needs_grad=True)

    def constant(self, value) -> Var:
        return self._push(np.asarray(value), (), (), is_leaf=False, needs_grad=False)

    def _push(self, value, parents, vjps, is_leaf=False, needs_grad=None) -> Var:
        if needs_grad is None:
            needs_grad = any(self._nodes[p].needs_grad for p in parents)
        self._nodes.append(_Node(value, parents, vjps, is_leaf, needs_grad))
        return Var(self, len(self._nodes) - 1)

    def backward(self, loss: Var) -> None:
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        lval = self._nodes[loss.index].value
        if np.asarray(lval).size != 1:
            raise ValueError("backward requires a scalar loss")
        if np.iscomplexobj(lval):
            raise ValueError("backward requires a real loss")
        grads: list[np.ndarray | None] = [None] * (loss.index + 1)
        grads[loss.index] = np.ones_like(np.asarray(lval, dtype=np.float64))
        out: dict[int, np.ndarray] = {}
        for i in range(loss.index, -1, -1):
            g = grads[i]
            grads[i] = None
            if g is None:
                continue
            node = self._nodes[i]
            if node.is_leaf:
                out[i] = g
                continue
            for pidx, vjp in zip(node.parents, node.vjps):
                pnode = self._nodes[pidx]
                if not pnode.needs_grad:
                    continue
                contrib = vjp(g)
                if np.iscomplexobj(contrib) and not np.iscomplexobj(pnode.value):
                    contrib = contrib.real
                if grads[pidx] is None:
                    grads[pidx] = contrib
                else:
                    grads[pidx] = grads[pidx] + contrib
        self._grads = out

    def grad(self, var: Var) -> np.ndarray:
        if self._grads is None:
            raise ValueError("backward has not been run on this tape")
        node = self._nodes[var.index]
        g = self._grads.get(var.index)
        if g is None:
            dtype = np.complex128 if np.iscomplexobj(node.value) else np.float64
            return np.zeros(np.shape(node.value), dtype=dtype)
        return g


def _wrap(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("mixing Vars from different tapes")
        return x
    return tape.constant(x)


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    raise TypeError("at least one argument must be a Var")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _wrap(tape, a), _wrap(tape, b)
    av, bv = a.value, b.value
    return tape._push(
        av + bv,
        (a.index, b.index),
        (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(g, bv.shape)),
    )


def sub(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _wrap(tape, a), _wrap(tape, b)
    av, bv = a.value, b.value
    return tape._push(
        av - bv,
        (a.index, b.index),
        (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(-g, bv.shape)),
    )


def neg(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    return tape._push(-a.value, (a.index,), (lambda g: -g,))


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _wrap(tape, a), _wrap(tape, b)
    av, bv = a.value, b.value
    return tape._push(
        av * bv,
        (a.index, b.index),
        (
            lambda g: _unbroadcast(g * np.conj(bv), av.shape),
            lambda g: _unbroadcast(g * np.conj(av), bv.shape),
        ),
    )


def div(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _wrap(tape, a), _wrap(tape, b)
    av, bv = a.value, b.value
    return tape._push(
        av / bv,
        (a.index, b.index),
        (
            lambda g: _unbroadcast(g * np.conj(1.0 / bv), av.shape),
            lambda g: _unbroadcast(g * np.conj(-av / (bv * bv)), bv.shape),
        ),
    )


def exp(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    ev = np.exp(a.value)
    return tape._push(ev, (a.index,), (lambda g: g * np.conj(ev),))


def sqrt(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    sv = np.sqrt(a.value)
    return tape._push(sv, (a.index,), (lambda g: g * np.conj(0.5 / sv),))


def real(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    complex_parent = np.iscomplexobj(a.value)

    def vjp(g):
        return g.astype(np.complex128) if complex_parent else g

    return tape._push(a.value.real.copy(), (a.index,), (vjp,))


def abs2(a) -> Var:
    """|z|^2 elementwise, real-valued."""
    tape = _tape_of(a)
    a = _wrap(tape, a)
    av = a.value
    return tape._push((av * np.conj(av)).real, (a.index,), (lambda g: 2.0 * g * av,))


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _wrap(tape, a), _wrap(tape, b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")

    def vjp_a(g):
        return _unbroadcast(g @ np.conj(bv).swapaxes(-1, -2), av.shape)

    def vjp_b(g):
        return _unbroadcast(np.conj(av).swapaxes(-1, -2) @ g, bv.shape)

    return tape._push(av @ bv, (a.index, b.index), (vjp_a, vjp_b))


def transpose(a, axes=None) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    if axes is None:
        axes = tuple(reversed(range(a.value.ndim)))
    inv = np.argsort(axes)
    return tape._push(np.transpose(a.value, axes), (a.index,), (lambda g: np.transpose(g, inv),))


def reshape(a, shape) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    old = a.value.shape
    return tape._push(a.value.reshape(shape), (a.index,), (lambda g: g.reshape(old),))


def mean(a, axis=None) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    av = a.value
    val = av.mean(axis=axis)
    n = av.size if axis is None else av.shape[axis]

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / n, av.shape).copy()

    return tape._push(val, (a.index,), (vjp,))


def sum_(a, axis=None) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    av = a.value
    val = av.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape).copy()

    return tape._push(val, (a.index,), (vjp,))


def tanh(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    t = np.tanh(a.value)
    return tape._push(t, (a.index,), (lambda g: g * (1.0 - t * t),))


def sigmoid(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    s = 1.0 / (1.0 + np.exp(-a.value))
    return tape._push(s, (a.index,), (lambda g: g * s * (1.0 - s),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Var:
    tape = _tape_of(a)
    a = _wrap(tape, a)
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    val = 0.5 * x * (1.0 + t)

    def vjp(g):
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return g * local

    return tape._push(val, (a.index,), (vjp,))


def softmax_cross_entropy(logits, labels) -> Var:
    """Mean cross-entropy of (B, K) logits against integer labels (B,)."""
    tape = _tape_of(logits)
    logits = _wrap(tape, logits)
    z = logits.value
    labels = np.asarray(labels)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ValueError("softmax_cross_entropy expects (B, K) logits and (B,) labels")
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    probs = ez / ez.sum(axis=1, keepdims=True)
    lse = np.log(ez.sum(axis=1)) + zmax[:, 0]
    losses = lse - z[np.arange(z.shape[0]), labels]
    val = np.asarray(losses.mean())

    def vjp(g):
        gr = probs.copy()
        gr[np.arange(z.shape[0]), labels] -= 1.0
        return gr * (g / z.shape[0])

    return tape._push(val, (logits.index,), (vjp,))


def scan_recurrence(a, bu, prev_state=None, parallel: bool = True, threads: int | None = None) -> Var:
    """Differentiable states of x_k = a * x_{k-1} + bu_k with constant transition a.

    bu has shape (L, ...); a broadcasts against bu[k]. prev_state is a constant
    (detached) initial state, which is exactly what TBPTT chunk carries need.
    """
    tape = _tape_of(a, bu)
    a, bu = _wrap(tape, a), _wrap(tape, bu)
    av = np.asarray(a.value, dtype=np.complex128)
    buv = np.asarray(bu.value, dtype=np.complex128)
    a_full = np.broadcast_to(av, buv.shape)
    prev = None if prev_state is None else np.asarray(prev_state, dtype=np.complex128)
    if parallel:
        states = scan_parallel(a_full, buv, prev, threads=threads)
    else:
        states = scan_sequential(a_full, buv, prev)

    cache: dict[str, np.ndarray] = {}

    def adjoint(g):
        # lambda_k = g_k + conj(a) lambda_{k+1}: a reverse-time linear recurrence.
        if "adj" not in cache:
            gc = np.ascontiguousarray(g, dtype=np.complex128)
            shifted = np.empty_like(a_full)
            shifted[:-1] = np.conj(a_full[1:])
            shifted[-1] = 0.0
            if parallel:
                cache["adj"] = scan_parallel(shifted, gc, None, reverse=True, threads=threads)
            else:
                cache["adj"] = scan_sequential(shifted[::-1], gc[::-1], None)[::-1]
        return cache["adj"]

    def vjp_bu(g):
        return adjoint(g)

    def vjp_a(g):
        adj = adjoint(g)
        x_prev = np.empty_like(states)
        x_prev[0] = 0.0 if prev is None else prev
        x_prev[1:] = states[:-1]
        return _unbroadcast(adj * np.conj(x_prev), av.shape)

    return tape._push(states, (a.index, bu.index), (vjp_a, vjp_bu))


def backward(tape: Tape, loss: Var) -> None:
    """Populate leaf gradients of a scalar real loss; read them via Var.grad."""
    tape.backward(loss)


def finite_diff_check(f, params, eps: float = 1e-6, atol: float = 1e-5) -> float:
    """Worst-coordinate relative error between tape gradients and central differences.

    f(tape, vars) -> scalar Var must be deterministic. Complex parameters are
    perturbed separately along the real and imaginary axes. atol floors the
    per-coordinate denominator: central differences of an O(1) loss carry
    ~1e-10 roundoff, so coordinates far below atol are compared absolutely
    (|fd - grad| <= atol * tolerance) instead of drowning in that noise.
    """
    params = [np.asarray(p) for p in params]
    tape = Tape()
    leaves = [tape.leaf(p.copy()) for p in params]
    loss = f(tape, leaves)
    tape.backward(loss)
    analytic = [tape.grad(v) for v in leaves]

    def value_at(ps):
        t = Tape()
        vs = [t.leaf(p) for p in ps]
        return float(f(t, vs).value)

    worst = 0.0
    for pi, base in enumerate(params):
        comps = (1.0, 1j) if np.iscomplexobj(base) else (1.0,)
        flat = base.reshape(-1)
        for idx in range(flat.size):
            for comp in comps:
                def perturbed(sign):
                    ps = [p.copy() for p in params]
                    ps[pi].reshape(-1)[idx] += sign * eps * comp
                    return ps

                fd = (value_at(perturbed(+1)) - value_at(perturbed(-1))) / (2.0 * eps)
                an_val = analytic[pi].reshape(-1)[idx]
                an = an_val.imag if comp == 1j else np.real(an_val)
                rel = abs(fd - an) / max(abs(fd), abs(an), atol)
                worst = max(worst, rel)
    return worst
