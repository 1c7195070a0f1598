"""Dense float64 tensors with a reverse-mode autodiff tape.

A ``Tensor`` wraps a contiguous, row-major ``numpy`` array and records
the operations applied to it so that ``backward()`` can push gradients
to every leaf that was created with ``requires_grad=True``. The tape is
rebuilt on every forward pass; there is no retained graph.

All computation is float64. Elementwise binary ops require identical
shapes (scalars are the only broadcast allowed); any richer broadcast
must go through the explicit :meth:`Tensor.broadcast_to`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonDivisibleLength, NonScalarRoot, ShapeMismatch

__all__ = [
    "Tensor",
    "BlockTensor",
    "concat",
    "reshape_to_blocks",
    "reshape_from_blocks",
]


def _as_array(data):
    arr = np.asarray(data, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """A node in the computation graph.

    Attributes:
        data: the value, a contiguous float64 ndarray.
        grad: accumulated gradient (same shape as ``data``) or None.
        requires_grad: whether backward should reach this node.
        name: optional diagnostic tag.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad=False, name=None):
        return Tensor(np.zeros(shape), requires_grad=requires_grad, name=name)

    @staticmethod
    def ones(shape, requires_grad=False, name=None):
        return Tensor(np.ones(shape), requires_grad=requires_grad, name=name)

    @staticmethod
    def _from_op(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def detach(self):
        """A view of the same value that blocks gradient flow."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    # -- autodiff -------------------------------------------------------------

    def backward(self):
        """Reverse-mode sweep from a scalar root.

        Gradients accumulate into ``.grad`` of every reachable node with
        ``requires_grad``; call :meth:`zero_grad` between independent
        backward passes.
        """
        if self.data.size != 1:
            raise NonScalarRoot(f"backward root must be scalar, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ----------------------------------------------

    def _binary(self, other, op, fwd, bwd_self, bwd_other):
        if isinstance(other, (int, float)):
            other_arr = float(other)
            data = fwd(self.data, other_arr)

            def backward(g, s=self, o=other_arr):
                if s.requires_grad:
                    s.accumulate_grad(bwd_self(g, s.data, o))

            return Tensor._from_op(data, (self,), backward)
        if not isinstance(other, Tensor):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeMismatch(op, self.shape, other.shape)
        data = fwd(self.data, other.data)

        def backward(g, s=self, o=other):
            if s.requires_grad:
                s.accumulate_grad(bwd_self(g, s.data, o.data))
            if o.requires_grad:
                o.accumulate_grad(bwd_other(g, s.data, o.data))

        return Tensor._from_op(data, (self, other), backward)

    def __add__(self, other):
        return self._binary(
            other, "add",
            lambda a, b: a + b,
            lambda g, a, b: g,
            lambda g, a, b: g,
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(
            other, "sub",
            lambda a, b: a - b,
            lambda g, a, b: g,
            lambda g, a, b: -g,
        )

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._binary(
            other, "mul",
            lambda a, b: a * b,
            lambda g, a, b: g * b,
            lambda g, a, b: g * a,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("tensor division is only defined for scalar divisors")
        return self * (1.0 / float(other))

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        e = float(exponent)
        data = self.data ** e

        def backward(g, s=self):
            s.accumulate_grad(g * e * s.data ** (e - 1.0))

        return Tensor._from_op(data, (self,), backward)

    # -- linear algebra -------------------------------------------------------

    def matmul(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatch("matmul", self.shape, other.shape)
        data = self.data @ other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)

        return Tensor._from_op(data, (self, other), backward)

    __matmul__ = matmul

    # -- shape manipulation ---------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        data = self.data.reshape(shape)

        def backward(g, s=self, old=old):
            s.accumulate_grad(g.reshape(old))

        return Tensor._from_op(data, (self,), backward)

    def transpose(self, axes):
        axes = tuple(axes)
        inv = np.argsort(axes)
        data = self.data.transpose(axes)

        def backward(g, s=self, inv=tuple(inv)):
            s.accumulate_grad(g.transpose(inv))

        return Tensor._from_op(data, (self,), backward)

    def broadcast_to(self, shape):
        """Explicit broadcast; backward sums over the expanded axes."""
        shape = tuple(shape)
        old = self.shape
        data = np.ascontiguousarray(np.broadcast_to(self.data, shape))

        def backward(g, s=self, old=old, new=shape):
            extra = len(new) - len(old)
            axes = tuple(range(extra)) + tuple(
                i + extra for i, d in enumerate(old) if d == 1 and new[i + extra] != 1
            )
            s.accumulate_grad(g.sum(axis=axes).reshape(old))

        return Tensor._from_op(data, (self,), backward)

    def __getitem__(self, key):
        data = np.ascontiguousarray(self.data[key])

        def backward(g, s=self, key=key):
            full = np.zeros_like(s.data)
            full[key] = full[key] + g
            s.accumulate_grad(full)

        return Tensor._from_op(data, (self,), backward)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g, s=self, axis=axis, keepdims=keepdims):
            if axis is None:
                s.accumulate_grad(np.broadcast_to(g, s.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                s.accumulate_grad(np.broadcast_to(g, s.shape).copy())

        return Tensor._from_op(np.asarray(data, dtype=np.float64), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    def max(self, axis):
        """Max over one axis; ties route the gradient to the earliest index."""
        arg = np.argmax(self.data, axis=axis)
        data = np.max(self.data, axis=axis)

        def backward(g, s=self, axis=axis, arg=arg):
            full = np.zeros_like(s.data)
            idx = list(np.indices(arg.shape))
            idx.insert(axis if axis >= 0 else s.ndim + axis, arg)
            np.add.at(full, tuple(idx), g)
            s.accumulate_grad(full)

        return Tensor._from_op(data, (self,), backward)

    # -- pointwise nonlinearities --------------------------------------------

    def relu(self):
        # subgradient at exactly 0 is defined to be 0
        mask = self.data > 0.0
        data = np.where(mask, self.data, 0.0)

        def backward(g, s=self, mask=mask):
            s.accumulate_grad(g * mask)

        return Tensor._from_op(data, (self,), backward)

    def sigmoid(self):
        # piecewise form avoids exp overflow for large |x|
        x = self.data
        data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g, s=self, y=data):
            s.accumulate_grad(g * y * (1.0 - y))

        return Tensor._from_op(data, (self,), backward)

    def tanh(self):
        data = np.tanh(self.data)

        def backward(g, s=self, y=data):
            s.accumulate_grad(g * (1.0 - y * y))

        return Tensor._from_op(data, (self,), backward)


def concat(tensors, axis):
    """Concatenate tensors along ``axis``; backward slices the gradient."""
    tensors = list(tensors)
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and a != b for i, (a, b) in enumerate(zip(base, other))
        ):
            raise ShapeMismatch("concat", tensors[0].shape, t.shape)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    widths = [t.shape[axis] for t in tensors]

    def backward(g, parts=tuple(tensors), axis=axis, widths=tuple(widths)):
        start = 0
        for t, w in zip(parts, widths):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, start + w)
                t.accumulate_grad(np.ascontiguousarray(g[tuple(sl)]))
            start += w

    return Tensor._from_op(data, tensors, backward)


# -- block reshaping ----------------------------------------------------------


@dataclass
class BlockTensor:
    """A [T, C] tensor regrouped into [num_blocks, block_len, C].

    The reshape is a pure row-major regrouping, so round-tripping with
    :func:`reshape_from_blocks` is bit-identical.
    """

    num_blocks: int
    block_len: int
    channels: int
    data: Tensor

    def __post_init__(self):
        expected = (self.num_blocks, self.block_len, self.channels)
        if self.data.shape != expected:
            raise ShapeMismatch("BlockTensor", self.data.shape, expected)


def reshape_to_blocks(f: Tensor, block_len: int) -> BlockTensor:
    """Split a [T, C] tensor into contiguous time blocks of ``block_len``."""
    if f.ndim != 2:
        raise ShapeMismatch("reshape_to_blocks", f.shape, ("T", "C"))
    t, c = f.shape
    if block_len < 1 or t % block_len != 0:
        raise NonDivisibleLength(
            f"time dimension {t} is not divisible by block length {block_len}"
        )
    blocks = f.reshape(t // block_len, block_len, c)
    return BlockTensor(t // block_len, block_len, c, blocks)


def reshape_from_blocks(blocks: BlockTensor) -> Tensor:
    """Inverse of :func:`reshape_to_blocks`; exact round-trip."""
    return blocks.data.reshape(blocks.num_blocks * blocks.block_len, blocks.channels)
