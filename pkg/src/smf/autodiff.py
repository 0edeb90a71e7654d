"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Covers exactly the primitives the three network topologies (policy, value, Q)
and their training updates need: dense linear maps, valid 1-D convolution,
elementwise maps, reductions, reparameterized Gaussian sampling, and the Adam
optimizer with global gradient-norm clipping.

Ops run eagerly on numpy arrays. When a `Tape` is active, every op whose
inputs require gradients records a backward closure; `backward()` replays the
tape in reverse. Without an active tape the same functions act as plain
numpy computations, so inference and training share one code path bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, GradientError

_LOG_2PI = float(np.log(2.0 * np.pi))

# Module-global active tape. Training loops are single-threaded per the
# concurrency contract, so a single slot is enough.
_TAPE: "Tape | None" = None


class Tensor:
    """Dense float64 tensor with an optional gradient buffer.

    `data` is a C-contiguous float64 ndarray; `grad` has the same shape once
    populated. Values are expected to stay finite through every forward and
    backward pass; the training loops check their losses and abort on NaN.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # copy: g may be a view or reused buffer
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops; inputs always precede dependents.

    Use as a context manager around a forward pass; call `backward(loss)`
    inside the block. The node list is consumed by `backward`.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        global _TAPE
        if _TAPE is not None:
            raise RuntimeError("nested tapes are not supported")
        _TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _TAPE
        _TAPE = None

    def record(self, out: Tensor, backward_fn) -> None:
        self.nodes.append((out, backward_fn))


def _maybe_record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.record(out, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Populate grads of every tensor the scalar `loss` depends on.

    The active tape is walked in reverse and cleared afterwards. Tensors that
    do not influence the loss keep `grad is None` (read as zero).
    """
    if _TAPE is None:
        raise GradientError("backward() called without an active tape")
    if loss.data.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(_TAPE.nodes):
        if out.grad is not None:
            fn(out.grad)
    _TAPE.nodes.clear()


# ---------------------------------------------------------------------------
# primitives


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y[i, j] = sum_k w[j, k] * x[i, k] + b[j]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError("linear expects x[batch,in], w[out,in], b[out]")
    if x.data.shape[1] != w.data.shape[1] or w.data.shape[0] != b.data.shape[0]:
        raise DimensionError(
            f"linear shapes do not conform: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    out = Tensor(x.data @ w.data.T + b.data)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g @ w.data)
        if w.requires_grad:
            w.accumulate_grad(g.T @ x.data)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return _maybe_record(out, (x, w, b), bwd)


def conv1d(x: Tensor, k: Tensor, b: Tensor, stride: int) -> Tensor:
    """Valid cross-correlation over the last axis, plus a per-channel bias.

    x: [batch, Cin, L], k: [Cout, Cin, K], b: [Cout]; output length
    floor((L - K) / stride) + 1. No padding.
    """
    if x.data.ndim != 3 or k.data.ndim != 3:
        raise DimensionError("conv1d expects x[batch,Cin,L] and k[Cout,Cin,K]")
    batch, cin, length = x.data.shape
    cout, cin2, ksize = k.data.shape
    if cin != cin2 or b.data.shape != (cout,):
        raise DimensionError(
            f"conv1d shapes do not conform: x{x.data.shape} k{k.data.shape} b{b.data.shape}"
        )
    if length < ksize:
        raise DimensionError(f"conv1d input length {length} shorter than kernel {ksize}")
    if stride < 1:
        raise DimensionError("conv1d stride must be >= 1")
    t_out = (length - ksize) // stride + 1
    # im2col: cols[(b, t), (c, k)] = x[b, c, t*stride + k]; one explicit copy,
    # then every pass is a plain GEMM
    windows = np.lib.stride_tricks.sliding_window_view(x.data, ksize, axis=2)[:, :, ::stride]
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * t_out, cin * ksize)
    kmat = k.data.reshape(cout, cin * ksize)
    y = cols @ kmat.T
    y += b.data
    out = Tensor(np.ascontiguousarray(y.reshape(batch, t_out, cout).transpose(0, 2, 1)))

    def bwd(g: np.ndarray) -> None:
        gmat = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * t_out, cout)
        if k.requires_grad:
            k.accumulate_grad((gmat.T @ cols).reshape(cout, cin, ksize))
        if b.requires_grad:
            b.accumulate_grad(gmat.sum(axis=0))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            spread = (gmat @ kmat).reshape(batch, t_out, cin, ksize)
            for kk in range(ksize):
                stop = kk + stride * (t_out - 1) + 1
                gx[:, :, kk:stop:stride] += spread[:, :, :, kk].transpose(0, 2, 1)
            x.accumulate_grad(gx)

    return _maybe_record(out, (x, k, b), bwd)


def conv1d_cl(x: Tensor, k: Tensor, b: Tensor, stride: int) -> Tensor:
    """conv1d for channels-last activations: x[batch, L, Cin] -> y[batch, Lout, Cout].

    Same math as conv1d with both activations transposed; this layout keeps
    im2col a near-sequential copy and makes the trunk's flatten free, which is
    what the training loops' throughput lives on.
    """
    if x.data.ndim != 3 or k.data.ndim != 3:
        raise DimensionError("conv1d_cl expects x[batch,L,Cin] and k[Cout,Cin,K]")
    batch, length, cin = x.data.shape
    cout, cin2, ksize = k.data.shape
    if cin != cin2 or b.data.shape != (cout,):
        raise DimensionError(
            f"conv1d_cl shapes do not conform: x{x.data.shape} k{k.data.shape} b{b.data.shape}"
        )
    if length < ksize:
        raise DimensionError(f"conv1d_cl input length {length} shorter than kernel {ksize}")
    if stride < 1:
        raise DimensionError("conv1d_cl stride must be >= 1")
    t_out = (length - ksize) // stride + 1
    # windows[b, t, k, c] = x[b, t*stride + k, c]; unit-stride innermost axis
    windows = np.lib.stride_tricks.sliding_window_view(x.data, ksize, axis=1)[:, ::stride]
    cols = windows.transpose(0, 1, 3, 2).reshape(batch * t_out, ksize * cin)
    kmat = np.ascontiguousarray(k.data.transpose(0, 2, 1)).reshape(cout, ksize * cin)
    y = cols @ kmat.T
    y += b.data
    out = Tensor(y.reshape(batch, t_out, cout))

    def bwd(g: np.ndarray) -> None:
        gmat = g.reshape(batch * t_out, cout)
        if k.requires_grad:
            gk = (gmat.T @ cols).reshape(cout, ksize, cin).transpose(0, 2, 1)
            k.accumulate_grad(np.ascontiguousarray(gk))
        if b.requires_grad:
            b.accumulate_grad(gmat.sum(axis=0))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            spread = (gmat @ kmat).reshape(batch, t_out, ksize, cin)
            for kk in range(ksize):
                stop = kk + stride * (t_out - 1) + 1
                gx[:, kk:stop:stride, :] += spread[:, :, kk, :]
            x.accumulate_grad(gx)

    return _maybe_record(out, (x, k, b), bwd)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0.0))

    return _maybe_record(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    val = np.tanh(x.data)
    out = Tensor(val)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - val * val))

    return _maybe_record(out, (x,), bwd)


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity; `kind` is "relu" or "tanh"."""
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def exp(x: Tensor) -> Tensor:
    val = np.exp(x.data)
    out = Tensor(val)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * val)

    return _maybe_record(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g / x.data)

    return _maybe_record(out, (x,), bwd)


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (2.0 * x.data))

    return _maybe_record(out, (x,), bwd)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(-g)

    return _maybe_record(out, (x,), bwd)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _maybe_record(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _maybe_record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _maybe_record(out, (a, b), bwd)


def add_const(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + c)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g)

    return _maybe_record(out, (x,), bwd)


def mul_const(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * c)

    return _maybe_record(out, (x,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient routes to the first argument."""
    _check_same_shape(a, b, "minimum")
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * take_a)
        if b.requires_grad:
            b.accumulate_grad(g * ~take_a)

    return _maybe_record(out, (a, b), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes where the input is inside the range."""
    inside = (x.data >= lo) & (x.data <= hi)
    out = Tensor(np.clip(x.data, lo, hi))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * inside)

    return _maybe_record(out, (x,), bwd)


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along axis 1."""
    for p in parts:
        if p.data.ndim != 2:
            raise DimensionError("concat expects 2-D tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.data.shape[1] for p in parts]

    def bwd(g: np.ndarray) -> None:
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                p.accumulate_grad(g[:, offset:offset + w])
            offset += w

    return _maybe_record(out, tuple(parts), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.data.shape))

    return _maybe_record(out, (x,), bwd)


def sum_last(x: Tensor) -> Tensor:
    """Sum a [batch, n] tensor over its last axis, yielding [batch]."""
    if x.data.ndim != 2:
        raise DimensionError("sum_last expects a 2-D tensor")
    out = Tensor(x.data.sum(axis=1))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.repeat(g[:, None], x.data.shape[1], axis=1))

    return _maybe_record(out, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum()))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g.item()))

    return _maybe_record(out, (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean()))

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g.item() / n))

    return _maybe_record(out, (x,), bwd)


def gaussian_reparam_sample(mu: Tensor, log_sigma: Tensor, noise: Tensor) -> Tensor:
    """a = mu + exp(log_sigma) * noise, differentiable in mu and log_sigma.

    `noise` is standard normal from a seeded generator and is treated as a
    constant by the backward rule even if it carries requires_grad.
    """
    _check_same_shape(mu, log_sigma, "gaussian_reparam_sample")
    _check_same_shape(mu, noise, "gaussian_reparam_sample")
    sigma = np.exp(log_sigma.data)
    out = Tensor(mu.data + sigma * noise.data)

    def bwd(g: np.ndarray) -> None:
        if mu.requires_grad:
            mu.accumulate_grad(g)
        if log_sigma.requires_grad:
            log_sigma.accumulate_grad(g * sigma * noise.data)

    return _maybe_record(out, (mu, log_sigma), bwd)


def squash_log_jac(u: Tensor) -> Tensor:
    """log(1 - tanh(u)^2), computed stably as 2*(log 2 - u - softplus(-2u))."""
    val = 2.0 * (np.log(2.0) - u.data - np.logaddexp(0.0, -2.0 * u.data))
    out = Tensor(val)

    def bwd(g: np.ndarray) -> None:
        if u.requires_grad:
            u.accumulate_grad(g * (-2.0 * np.tanh(u.data)))

    return _maybe_record(out, (u,), bwd)


def diag_gaussian_logp(mu: Tensor, log_sigma: Tensor, a: Tensor) -> Tensor:
    """Per-row log density of a diagonal Gaussian at `a`; returns [batch].

    Differentiable through mu and log_sigma; `a` is a constant observation.
    """
    z = mul(sub(a, mu), exp(neg(log_sigma)))
    per_dim = add(log_sigma, mul_const(square(z), 0.5))
    h = mu.data.shape[1]
    return add_const(neg(sum_last(per_dim)), -0.5 * h * _LOG_2PI)


# ---------------------------------------------------------------------------
# parameters and optimizer


class ParamStore:
    """Ordered, named parameter tensors with Adam moment slots."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def copy_values_from(self, other: "ParamStore") -> None:
        for name, t in self.params.items():
            np.copyto(t.data, other.params[name].data)

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.params.values():
            t.requires_grad = flag

    def slot_second_moment(self, name: str) -> np.ndarray:
        return self._v[name]


def adam_step(store: ParamStore, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam update over every parameter; grads are zeroed afterwards."""
    missing = [n for n, t in store.items() if t.grad is None]
    if missing:
        raise GradientError(f"adam_step: missing grads for {missing}")
    store.step_count += 1
    t = store.step_count
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    for name, p in store.items():
        g = p.grad
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    store.zero_grad()


def clip_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all grads so their joint L2 norm is at most `max_norm`.

    Returns the pre-clip norm.
    """
    missing = [n for n, t in store.items() if t.grad is None]
    if missing:
        raise GradientError(f"clip_global_norm: missing grads for {missing}")
    total = 0.0
    for _, p in store.items():
        total += float(np.dot(p.grad.ravel(), p.grad.ravel()))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for _, p in store.items():
            p.grad *= scale
    return norm
