"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Covers exactly the operations the alignment/model/trainer stack needs:
matmul, broadcast add, scaling, SiLU/GeLU, row softmax, row/element slicing,
embedding lookup, mean-of-rows, concat, and a fused stable cross-entropy.
Gradients accumulate additively across backward calls; callers zero first.

All values are 2-D (scalars are 1x1, vectors are 1xN rows). Elementwise and
matmul forward/backward work is delegated to the selected kernel backend.
"""

from __future__ import annotations

import numpy as np

from .backend import kernels


class DimensionError(ValueError):
    """Shape contract violation, naming the offending shapes."""


class TapeError(RuntimeError):
    """Tape misuse: non-scalar backward, op outside a recording context, etc."""


def _as_matrix(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"rank {arr.ndim} unsupported, expected <= 2, got shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("data", "grad")

    def __init__(self, values):
        self.data = _as_matrix(values)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """Named leaf tensor. Frozen parameters are never updated and are
    skipped by gradient checks."""

    __slots__ = ("name", "trainable", "frozen")

    def __init__(self, values, name: str, trainable: bool = True, frozen: bool = False):
        super().__init__(values)
        self.name = name
        self.trainable = trainable
        self.frozen = frozen

    def __repr__(self):
        flags = "frozen" if self.frozen else ("trainable" if self.trainable else "static")
        return f"Parameter({self.name!r}, shape={self.shape}, {flags})"


class Tape:
    """Ordered record of ops; backward runs their local rules in reverse."""

    def __init__(self):
        self._entries: list[tuple[Tensor, object]] = []

    def __len__(self):
        return len(self._entries)

    def record(self, out: Tensor, backward_fn) -> None:
        self._entries.append((out, backward_fn))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise TapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        # intermediates belong to the tape: reset them so a repeated backward
        # adds exactly one more gradient copy into the leaves
        for out, _fn in self._entries:
            out.grad = None
        loss.accumulate_grad(np.ones_like(loss.data))
        for out, fn in reversed(self._entries):
            if out.grad is not None:
                fn(out.grad)


_ACTIVE_TAPE: Tape | None = None


class record:
    """Context manager activating a tape; ops created inside are recorded."""

    def __init__(self, tape: Tape):
        self.tape = tape
        self._prev: Tape | None = None

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self.tape
        return self.tape

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        return False


def _emit(values: np.ndarray, backward_fn) -> Tensor:
    out = Tensor(values)
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.record(out, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Run backward for a scalar loss on the active tape."""
    if _ACTIVE_TAPE is None:
        raise TapeError("backward called with no active tape")
    _ACTIVE_TAPE.backward(loss)


# ---------------------------------------------------------------- operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        a.accumulate_grad(kernels.matmul(g, np.ascontiguousarray(bd.T)))
        b.accumulate_grad(kernels.matmul(np.ascontiguousarray(ad.T), g))

    return _emit(kernels.matmul(ad, bd), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may be a single row broadcast over a's rows."""
    if a.shape == b.shape:
        def bwd(g):
            a.accumulate_grad(g)
            b.accumulate_grad(g)
        return _emit(a.data + b.data, bwd)
    if b.shape == (1, a.shape[1]):
        def bwd(g):
            a.accumulate_grad(g)
            b.accumulate_grad(g.sum(axis=0, keepdims=True))
        return _emit(a.data + b.data, bwd)
    raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        a.accumulate_grad(c * g)

    return _emit(c * a.data, bwd)


def mul_const(a: Tensor, mask) -> Tensor:
    """Elementwise product with a constant array (no gradient to the mask)."""
    m = _as_matrix(mask)
    if m.shape != a.shape:
        raise DimensionError(f"mul_const shape mismatch: {a.shape} vs {m.shape}")

    def bwd(g):
        a.accumulate_grad(g * m)

    return _emit(a.data * m, bwd)


def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Product of a tensor with a 1x1 tensor; grads flow to both."""
    if s.data.size != 1:
        raise DimensionError(f"mul_scalar needs a 1x1 scalar, got {s.shape}")
    ad, sv = a.data, float(s.data[0, 0])

    def bwd(g):
        a.accumulate_grad(sv * g)
        s.accumulate_grad(np.array([[np.sum(g * ad)]]))

    return _emit(sv * ad, bwd)


def div_scalar(a: Tensor, s: Tensor) -> Tensor:
    """a / s with s a 1x1 tensor."""
    if s.data.size != 1:
        raise DimensionError(f"div_scalar needs a 1x1 scalar, got {s.shape}")
    ad, sv = a.data, float(s.data[0, 0])

    def bwd(g):
        a.accumulate_grad(g / sv)
        s.accumulate_grad(np.array([[-np.sum(g * ad) / (sv * sv)]]))

    return _emit(ad / sv, bwd)


def silu(a: Tensor) -> Tensor:
    ad = a.data

    def bwd(g):
        a.accumulate_grad(g * kernels.silu_grad(ad))

    return _emit(kernels.silu(ad), bwd)


def gelu(a: Tensor) -> Tensor:
    """GeLU, tanh approximation (0.7978845608, 0.044715)."""
    ad = a.data

    def bwd(g):
        a.accumulate_grad(g * kernels.gelu_grad(ad))

    return _emit(kernels.gelu(ad), bwd)


def softmax_row(a: Tensor) -> Tensor:
    y = kernels.softmax_rows(a.data)

    def bwd(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        a.accumulate_grad(y * (g - dot))

    return _emit(y, bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(g):
        a.accumulate_grad(np.ascontiguousarray(g.T))

    return _emit(np.ascontiguousarray(a.data.T), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"cannot reshape {a.shape} to {tuple(shape)}")

    def bwd(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return _emit(np.ascontiguousarray(a.data.reshape(shape)), bwd)


def row(a: Tensor, i: int) -> Tensor:
    if not 0 <= i < a.shape[0]:
        raise IndexError(f"row {i} out of range for shape {a.shape}")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[i, :] = g[0, :]
        a.accumulate_grad(full)

    return _emit(a.data[i : i + 1, :].copy(), bwd)


def elem(a: Tensor, i: int, j: int) -> Tensor:
    """Single entry as a 1x1 tensor."""
    def bwd(g):
        full = np.zeros_like(a.data)
        full[i, j] = g[0, 0]
        a.accumulate_grad(full)

    return _emit(np.array([[a.data[i, j]]]), bwd)


def mean_rows(a: Tensor) -> Tensor:
    m = a.shape[0]

    def bwd(g):
        a.accumulate_grad(np.repeat(g, m, axis=0) / m)

    return _emit(a.data.mean(axis=0, keepdims=True), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        a.accumulate_grad(np.full_like(a.data, g[0, 0]))

    return _emit(np.array([[a.data.sum()]]), bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat row mismatch: {a.shape} vs {b.shape}")
    na = a.shape[1]

    def bwd(g):
        a.accumulate_grad(g[:, :na])
        b.accumulate_grad(g[:, na:])

    return _emit(np.concatenate([a.data, b.data], axis=1), bwd)


def embed(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or idx.size < 1:
        raise IndexError("embed expects a non-empty 1-D id sequence")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise IndexError(f"token id out of range [0, {table.shape[0]}): {idx.tolist()}")

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table.accumulate_grad(full)

    return _emit(table.data[idx, :], bwd)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Stable -log softmax(logits)[target] for a 1xV logit row."""
    if logits.shape[0] != 1:
        raise DimensionError(f"cross_entropy expects a 1xV logit row, got {logits.shape}")
    v = logits.shape[1]
    if not 0 <= target < v:
        raise IndexError(f"target {target} out of range for {v} logits")
    p = kernels.softmax_rows(logits.data)
    x = logits.data[0]
    mx = x.max()
    loss = float(np.log(np.sum(np.exp(x - mx))) + mx - x[target])

    def bwd(g):
        d = p.copy()
        d[0, target] -= 1.0
        logits.accumulate_grad(g[0, 0] * d)

    return _emit(np.array([[loss]]), bwd)


# ---------------------------------------------------------- gradient checking


def finite_diff_check(f, params, eps: float = 1e-4):
    """Compare tape gradients against central differences.

    f: zero-argument callable building a scalar-loss forward pass from the
    current parameter values. Returns (max relative error, per-param report);
    frozen parameters are skipped and reported as 'frozen'. Relative error
    uses a 1e-12 denominator floor.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    params = list(params)
    for p in params:
        p.grad = None
    with record(Tape()) as tape:
        loss = f()
        tape.backward(loss)
    analytic = {p.name: (None if p.grad is None else p.grad.copy()) for p in params}

    report: dict[str, float | str] = {}
    worst = 0.0
    for p in params:
        if p.frozen:
            report[p.name] = "frozen"
            continue
        a = analytic[p.name]
        if a is None:
            a = np.zeros_like(p.data)
        num = np.zeros_like(p.data)
        flat = p.data.ravel()
        nflat = num.ravel()
        for i in range(flat.size):
            orig = flat[i]
            # 4th-order central stencil: larger eps stays in the truncation
            # regime while keeping roundoff well below the 1e-4 tolerance
            vals = []
            for h in (-2.0, -1.0, 1.0, 2.0):
                flat[i] = orig + h * eps
                vals.append(f().item())
            flat[i] = orig
            f_m2, f_m1, f_p1, f_p2 = vals
            # grouped as differences so an untouched loss yields exactly 0
            nflat[i] = (8.0 * (f_p1 - f_m1) - (f_p2 - f_m2)) / (12.0 * eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-12)
        err = float(np.max(np.abs(a - num) / denom))
        report[p.name] = err
        worst = max(worst, err)
    return worst, report
