"""Dense float64 tensor ops with a minimal reverse-mode gradient tape.

Everything learnable in the decoder is assembled from the operations in
this module.  A ``GradVar`` wraps a numpy array together with its gradient
and a record of the producing operation; calling :func:`backward` on a
scalar result walks the tape in reverse topological order and accumulates
``d(loss)/d(node)`` into every reachable ``grad``.

Conventions fixed here so that independent oracles agree:

* all values are float64, row-major;
* convolution is cross-correlation (no kernel flip), "same" zero padding;
* max pooling uses ceil-mode edge handling and routes its gradient to the
  first maximum in row-major scan order;
* repeated ``backward`` calls without :func:`zero_grad` accumulate.

Ops accept an optional leading batch axis where noted (a 3-D image
``H x W x C`` may be ``B x H x W x C``); the unbatched form is the
contractual one, the batched form exists so training steps can amortize
Python overhead.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import SplitMix64


class GradVar:
    """A value in the computation graph plus its gradient shadow.

    ``grad`` is allocated lazily (forward-only evaluation never pays for
    it) and is guaranteed to be a zero-initialized array of the same shape
    as ``value`` once a backward pass touches the node.
    """

    __slots__ = ("value", "grad", "op", "_parents", "_backward")

    def __init__(self, value, _parents=(), op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.op = op
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def __repr__(self):
        return f"GradVar(op={self.op!r}, shape={self.value.shape})"


def param(value, name=None) -> GradVar:
    """Leaf variable (learnable parameter or graph input)."""
    g = GradVar(value, op=name or "param")
    return g


def zero_grad(params) -> None:
    """Reset gradients in place (no-op for never-touched grads)."""
    for p in params:
        if p.grad is not None:
            p.grad.fill(0.0)


def _shapes(*vs):
    return " x ".join(str(v.value.shape) for v in vs)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: GradVar, b: GradVar) -> GradVar:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch: {_shapes(a, b)}")
    out = GradVar(a.value + b.value, (a, b), op="add")

    def bwd(g):
        a.grad += g
        b.grad += g

    out._backward = bwd
    return out


def sub(a: GradVar, b: GradVar) -> GradVar:
    if a.value.shape != b.value.shape:
        raise ValueError(f"sub shape mismatch: {_shapes(a, b)}")
    out = GradVar(a.value - b.value, (a, b), op="sub")

    def bwd(g):
        a.grad += g
        b.grad -= g

    out._backward = bwd
    return out


def add_scalar(a: GradVar, c: float) -> GradVar:
    out = GradVar(a.value + c, (a,), op="add_scalar")

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def scale(a: GradVar, c: float) -> GradVar:
    out = GradVar(a.value * c, (a,), op="scale")

    def bwd(g):
        a.grad += c * g

    out._backward = bwd
    return out


def neg(a: GradVar) -> GradVar:
    return scale(a, -1.0)


def hadamard(a: GradVar, b: GradVar) -> GradVar:
    if a.value.shape != b.value.shape:
        raise ValueError(f"hadamard shape mismatch: {_shapes(a, b)}")
    out = GradVar(a.value * b.value, (a, b), op="hadamard")

    def bwd(g):
        a.grad += g * b.value
        b.grad += g * a.value

    out._backward = bwd
    return out


def relu(a: GradVar) -> GradVar:
    out = GradVar(np.maximum(a.value, 0.0), (a,), op="relu")
    mask = a.value > 0.0

    def bwd(g):
        a.grad += g * mask

    out._backward = bwd
    return out


def sigmoid(a: GradVar) -> GradVar:
    s = 1.0 / (1.0 + np.exp(-a.value))
    out = GradVar(s, (a,), op="sigmoid")

    def bwd(g):
        a.grad += g * s * (1.0 - s)

    out._backward = bwd
    return out


def tanh(a: GradVar) -> GradVar:
    t = np.tanh(a.value)
    out = GradVar(t, (a,), op="tanh")

    def bwd(g):
        a.grad += g * (1.0 - t * t)

    out._backward = bwd
    return out


def reshape(a: GradVar, dims) -> GradVar:
    dims = tuple(int(d) for d in dims)
    out = GradVar(a.value.reshape(dims), (a,), op="reshape")
    src_shape = a.value.shape

    def bwd(g):
        a.grad += g.reshape(src_shape)

    out._backward = bwd
    return out


def flatten(a: GradVar) -> GradVar:
    """Row-major flatten to one dimension (``flatten . reshape = id``)."""
    return reshape(a, (a.value.size,))


def concat_channels(parts) -> GradVar:
    """Concatenate along the trailing (channel) axis."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels of nothing")
    lead = parts[0].value.shape[:-1]
    for p in parts[1:]:
        if p.value.shape[:-1] != lead:
            raise ValueError(f"concat_channels shape mismatch: {_shapes(*parts)}")
    out = GradVar(np.concatenate([p.value for p in parts], axis=-1),
                  tuple(parts), op="concat_channels")
    widths = [p.value.shape[-1] for p in parts]

    def bwd(g):
        ofs = 0
        for p, w in zip(parts, widths):
            p.grad += g[..., ofs:ofs + w]
            ofs += w

    out._backward = bwd
    return out


def select_time(seq: GradVar, t: int) -> GradVar:
    """Row ``t`` of a ``L x d`` (or ``B x L x d``) sequence."""
    v = seq.value
    if v.ndim == 2:
        out = GradVar(v[t], (seq,), op="select_time")

        def bwd(g):
            seq.grad[t] += g

    elif v.ndim == 3:
        out = GradVar(v[:, t, :], (seq,), op="select_time")

        def bwd(g):
            seq.grad[:, t, :] += g

    else:
        raise ValueError(f"select_time expects 2-D or 3-D sequence, got {v.shape}")
    out._backward = bwd
    return out


def stack_time(states) -> GradVar:
    """Inverse of select_time: stack per-step states along a new time axis."""
    states = list(states)
    if not states:
        raise ValueError("stack_time of nothing")
    nd = states[0].value.ndim
    axis = 0 if nd == 1 else 1
    out = GradVar(np.stack([s.value for s in states], axis=axis),
                  tuple(states), op="stack_time")

    def bwd(g):
        for t, s in enumerate(states):
            if axis == 0:
                s.grad += g[t]
            else:
                s.grad += g[:, t, :]

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# dense / conv / pool
# ---------------------------------------------------------------------------


def matmul(a: GradVar, b: GradVar) -> GradVar:
    """``a @ b`` with ``a`` 1-D or 2-D and ``b`` 2-D."""
    av, bv = a.value, b.value
    if bv.ndim != 2 or av.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch: {_shapes(a, b)}")
    out = GradVar(av @ bv, (a, b), op="matmul")

    def bwd(g):
        a.grad += g @ bv.T
        if av.ndim == 1:
            b.grad += np.outer(av, g)
        else:
            b.grad += av.T @ g

    out._backward = bwd
    return out


def add_bias(a: GradVar, b: GradVar) -> GradVar:
    """Add a 1-D bias along the trailing axis (broadcast over leading axes)."""
    if b.value.ndim != 1 or a.value.shape[-1] != b.value.shape[0]:
        raise ValueError(f"add_bias shape mismatch: {_shapes(a, b)}")
    out = GradVar(a.value + b.value, (a, b), op="add_bias")
    lead = tuple(range(a.value.ndim - 1))

    def bwd(g):
        a.grad += g
        b.grad += g.sum(axis=lead) if lead else g

    out._backward = bwd
    return out


def _windows(v: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Same-padded sliding windows: (..., H, W, C) -> (..., H, W, C, kh, kw)."""
    pad = [(0, 0)] * (v.ndim - 3) + [((kh - 1) // 2,) * 2, ((kw - 1) // 2,) * 2,
                                     (0, 0)]
    vp = np.pad(v, pad)
    return np.lib.stride_tricks.sliding_window_view(vp, (kh, kw), axis=(-3, -2))


def _corr_same(v: np.ndarray, kv: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation of (..., H, W, Cin) with a
    kh x kw x Cin x Cout kernel (one tensordot over kh, kw, Cin)."""
    win = _windows(v, kv.shape[0], kv.shape[1])
    return np.tensordot(win, kv, axes=([-2, -1, -3], [0, 1, 2]))


def conv2d_same(x: GradVar, k: GradVar, bias: GradVar) -> GradVar:
    """Same-padded 2-D cross-correlation.

    ``x``: ``H x W x Cin`` (optionally ``B x H x W x Cin``),
    ``k``: ``kh x kw x Cin x Cout`` with odd spatial extents,
    ``bias``: ``Cout``.  Output keeps the spatial extents.
    """
    xv, kv, bv = x.value, k.value, bias.value
    if kv.ndim != 4:
        raise ValueError(f"conv2d_same kernel must be 4-D, got {kv.shape}")
    kh, kw, cin, cout = kv.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d_same kernel extents must be odd, got {kh}x{kw}")
    if xv.ndim not in (3, 4) or xv.shape[-1] != cin:
        raise ValueError(f"conv2d_same shape mismatch: x {xv.shape}, k {kv.shape}")
    if bv.shape != (cout,):
        raise ValueError(f"conv2d_same bias must be ({cout},), got {bv.shape}")
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    H, W = xv.shape[-3], xv.shape[-2]
    outv = _corr_same(xv, kv) + bv
    out = GradVar(outv, (x, k, bias), op="conv2d_same")

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        bias.grad += g.sum(axis=lead)
        # kernel grad: contract input windows with g over batch and space
        win = _windows(xv, kh, kw)
        contract = tuple(range(g.ndim - 1))
        kg = np.tensordot(win, g, axes=(contract, contract))  # cin,kh,kw,cout
        k.grad += kg.transpose(1, 2, 0, 3)
        # input grad, one kernel offset at a time (windowing g would blow
        # its footprint up by kh*kw)
        gxp = np.zeros(xv.shape[:-3] + (H + 2 * ph, W + 2 * pw, cin))
        for di in range(kh):
            for dj in range(kw):
                gxp[..., di:di + H, dj:dj + W, :] += np.tensordot(
                    g, kv[di, dj], axes=([-1], [1]))
        x.grad += gxp[..., ph:ph + H, pw:pw + W, :]

    out._backward = bwd
    return out


def maxpool2d(x: GradVar, ph: int, pw: int, stride: int) -> GradVar:
    """Windowed maxima, ceil mode (edge windows are clipped, which equals
    padding with -inf).  Ties route the gradient to the first maximum in
    row-major window scan order."""
    xv = x.value
    if xv.ndim not in (3, 4):
        raise ValueError(f"maxpool2d expects 3-D or 4-D input, got {xv.shape}")
    if ph < 1 or pw < 1 or stride < 1:
        raise ValueError("pool extents and stride must be >= 1")
    if ph == pw == stride:
        return _maxpool2d_tiled(x, stride)
    H, W, C = xv.shape[-3:]
    Ho = -(-H // stride)
    Wo = -(-W // stride)
    outv = np.empty(xv.shape[:-3] + (Ho, Wo, C), dtype=np.float64)
    argmaxes = []
    for i in range(Ho):
        r0, r1 = i * stride, min(i * stride + ph, H)
        for j in range(Wo):
            c0, c1 = j * stride, min(j * stride + pw, W)
            win = xv[..., r0:r1, c0:c1, :]
            flat = win.reshape(win.shape[:-3] + ((r1 - r0) * (c1 - c0), C))
            am = flat.argmax(axis=-2)
            outv[..., i, j, :] = np.take_along_axis(
                flat, am[..., None, :], axis=-2)[..., 0, :]
            argmaxes.append((r0, c0, c1 - c0, am))
    out = GradVar(outv, (x,), op="maxpool2d")

    def bwd(g):
        gx = x.grad
        ch = np.arange(C)
        pos = 0
        for i in range(Ho):
            for j in range(Wo):
                r0, c0, ncols, am = argmaxes[pos]
                pos += 1
                rows = r0 + am // ncols
                cols = c0 + am % ncols
                if xv.ndim == 3:
                    gx[rows, cols, ch] += g[i, j, :]
                else:
                    bidx = np.arange(xv.shape[0])[:, None]
                    gx[bidx, rows, cols, ch[None, :]] += g[:, i, j, :]

    out._backward = bwd
    return out


def _maxpool2d_tiled(x: GradVar, s: int) -> GradVar:
    """Non-overlapping s x s pooling over strided slices.

    Slice (di, dj) of the input holds position (di, dj) of every window,
    with edge windows naturally clipped, so the output is the running
    maximum over the s*s slices.  The backward scan claims each window for
    its first slice that attains the maximum, which reproduces the
    row-major first-occurrence tie rule of the general path.
    """
    xv = x.value
    H, W, C = xv.shape[-3:]
    Ho, Wo = -(-H // s), -(-W // s)
    outv = xv[..., ::s, ::s, :].copy()
    for di in range(s):
        for dj in range(s):
            if di == dj == 0:
                continue
            sl = xv[..., di::s, dj::s, :]
            sh, sw = sl.shape[-3], sl.shape[-2]
            np.maximum(outv[..., :sh, :sw, :], sl, out=outv[..., :sh, :sw, :])
    out = GradVar(outv, (x,), op="maxpool2d")

    def bwd(g):
        claimed = np.zeros(outv.shape, dtype=bool)
        for di in range(s):
            for dj in range(s):
                sl = xv[..., di::s, dj::s, :]
                sh, sw = sl.shape[-3], sl.shape[-2]
                take = (sl == outv[..., :sh, :sw, :]) & ~claimed[..., :sh, :sw, :]
                x.grad[..., di::s, dj::s, :] += g[..., :sh, :sw, :] * take
                claimed[..., :sh, :sw, :] |= take

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a: GradVar) -> GradVar:
    out = GradVar(a.value.sum(), (a,), op="sum_all")

    def bwd(g):
        a.grad += g

    out._backward = bwd
    return out


def mse(pred: GradVar, target) -> GradVar:
    """Mean over all entries of the squared difference (scalar output)."""
    tgt = target.value if isinstance(target, GradVar) else np.asarray(target, dtype=np.float64)
    if pred.value.shape != tgt.shape:
        raise ValueError(f"mse shape mismatch: {pred.value.shape} vs {tgt.shape}")
    diff = pred.value - tgt
    n = diff.size
    parents = (pred, target) if isinstance(target, GradVar) else (pred,)
    out = GradVar(np.mean(diff * diff), parents, op="mse")

    def bwd(g):
        d = (2.0 / n) * diff * g
        pred.grad += d
        if isinstance(target, GradVar):
            target.grad -= d

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# backward driver and finite-difference checker
# ---------------------------------------------------------------------------


def backward(loss: GradVar) -> None:
    """Reverse-topological gradient accumulation from a scalar loss.

    Every node reachable from ``loss`` ends up with ``grad`` holding
    ``d(loss)/d(node)``; contributions through multiple consumers sum.
    Calling this twice without :func:`zero_grad` doubles leaf gradients.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    for node in topo:
        node.ensure_grad()
    loss.grad += np.ones_like(loss.value)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def grad_check(f, params, h: float = 1e-5, n_sample: int = 200, seed: int = 0,
               h_fallback: tuple = (1e-4, 1e-6, 1e-7),
               rtol: float = 1e-4) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is a deterministic scalar function of ``params`` (a GradVar
    closure re-evaluated on every call).  Up to ``n_sample`` coordinates
    per tensor are probed (all of them for small tensors), chosen by a
    seeded draw.  Relative error uses max(|analytic|, |numeric|, 1e-8) as
    denominator.

    Central differences carry step-size artifacts: roundoff noise of
    order eps/h, which dominates when the true derivative is near zero
    (saturated gates, dead paths), and secants across the kinks of
    max-pool or relu when a crossing lies within ``h`` of the probe
    point.  A coordinate whose error at ``h`` exceeds ``rtol`` is
    therefore re-probed, cheapest first: at each step in
    ``h_fallback``, then with a fourth-order five-point stencil whose
    truncation term is negligible at large steps, and finally with
    one-sided secants, which recover the exact one-sided derivative
    when a kink sits arbitrarily close to the probe point (where every
    symmetric stencil reports a mixture of the two pieces).  A genuine
    backprop error matches none of these, since each probe converges to
    a true local slope.  Each coordinate is scored by its best probe;
    the return value is the max over coordinates of that
    per-coordinate best.
    """
    if h <= 0 or any(hf <= 0 for hf in h_fallback):
        raise ValueError("h must be positive")
    params = list(params)
    zero_grad(params)
    loss = f()
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite loss in grad_check")
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.value)
                for p in params]

    def eval_at(flat_v, c, offset):
        orig = flat_v[c]
        flat_v[c] = orig + offset
        fx = float(f().value)
        flat_v[c] = orig
        if not math.isfinite(fx):
            raise FloatingPointError("non-finite loss in grad_check")
        return fx

    def rel_err(a, numeric):
        return abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)

    def probe(flat_v, c, step, a):
        fp = eval_at(flat_v, c, step)
        fm = eval_at(flat_v, c, -step)
        return rel_err(a, (fp - fm) / (2.0 * step))

    def probe4(flat_v, c, step, a):
        f2p = eval_at(flat_v, c, 2.0 * step)
        fp = eval_at(flat_v, c, step)
        fm = eval_at(flat_v, c, -step)
        f2m = eval_at(flat_v, c, -2.0 * step)
        numeric = (-f2p + 8.0 * fp - 8.0 * fm + f2m) / (12.0 * step)
        return rel_err(a, numeric)

    def probe_sided(flat_v, c, step, a):
        f0 = eval_at(flat_v, c, 0.0)
        fwd = (eval_at(flat_v, c, step) - f0) / step
        bwd = (f0 - eval_at(flat_v, c, -step)) / step
        return min(rel_err(a, fwd), rel_err(a, bwd))

    rng = SplitMix64(seed)
    worst = 0.0
    for p, an in zip(params, analytic):
        flat_v = p.value.reshape(-1)
        flat_a = an.reshape(-1)
        n = flat_v.size
        if n <= n_sample:
            coords = range(n)
        else:
            coords = sorted({rng.next_below(n) for _ in range(2 * n_sample)})[:n_sample]
            while len(coords) < n_sample:
                c = rng.next_below(n)
                if c not in coords:
                    coords.append(c)
        for c in coords:
            rel = probe(flat_v, c, h, flat_a[c])
            settled = 0.5 * rtol
            for hf in h_fallback:
                if rel < settled:
                    break
                rel = min(rel, probe(flat_v, c, hf, flat_a[c]))
            for hf in (1e-3, 1e-4, 3e-5):
                if rel < settled:
                    break
                rel = min(rel, probe4(flat_v, c, hf, flat_a[c]))
            for hf in (1e-6, 3e-6):
                if rel < settled:
                    break
                rel = min(rel, probe_sided(flat_v, c, hf, flat_a[c]))
            if rel > worst:
                worst = rel
    return worst
