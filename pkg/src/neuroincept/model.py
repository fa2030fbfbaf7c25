"""The Inception+GRU spectrogram decoder.

One input row of 9 context frames x C channels is laid out as a 9 x C x 1
grid and flows through:

    inception block (1x1 / 3x3 / 5x5 conv branches, concat, 2x2 maxpool,
        1x1 conv)                      -> 5 x ceil(C/2) x 64
    rows of the pooled context axis as a length-5 sequence
    GRU 128 (sequence) -> GRU 256 (sequence) -> GRU 512 (final state)
    reshape to a 1 x 512 x 1 grid -> second inception block -> flatten
    dense 1024 -> 512 -> 256 (ReLU) -> linear 128

All layers are built from the autodiff primitives, so one backward pass
yields every parameter gradient.  Forward is pure: same row, same params,
same output.  Ops accept a leading batch axis, which the training loop
uses; the public ``predict_batch`` evaluates row by row so its output is
bit-identical to single-row calls.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradVar
from .rng import SplitMix64


@dataclass
class InceptionConfig:
    branch_filters: int = 32
    post_conv_filters: int = 64
    # kernel set fixed at 1x1 / 3x3 / 5x5; pooling fixed at 2x2 stride 2


@dataclass
class ModelConfig:
    n_channels: int = 4
    context_len: int = 9
    gru_units: tuple = (128, 256, 512)
    dense_units: tuple = (1024, 512, 256)
    output_dim: int = 128
    inception: InceptionConfig = field(default_factory=InceptionConfig)

    @property
    def input_dim(self) -> int:
        return self.context_len * self.n_channels

    @property
    def seq_len(self) -> int:
        return -(-self.context_len // 2)  # pooled context axis

    @property
    def seq_features(self) -> int:
        return self.inception.post_conv_filters * (-(-self.n_channels // 2))


class InceptionParams:
    """Kernels and biases of one inception block."""

    def __init__(self, cin: int, cfg: InceptionConfig, rng: SplitMix64, tag: str):
        f, post = cfg.branch_filters, cfg.post_conv_filters
        self.k1 = _glorot(rng, (1, 1, cin, f), f"{tag}.k1")
        self.b1 = _zeros((f,), f"{tag}.b1")
        self.k3 = _glorot(rng, (3, 3, cin, f), f"{tag}.k3")
        self.b3 = _zeros((f,), f"{tag}.b3")
        self.k5 = _glorot(rng, (5, 5, cin, f), f"{tag}.k5")
        self.b5 = _zeros((f,), f"{tag}.b5")
        self.kp = _glorot(rng, (1, 1, 3 * f, post), f"{tag}.kp")
        self.bp = _zeros((post,), f"{tag}.bp")

    def named(self):
        return [(v.op, v) for v in
                (self.k1, self.b1, self.k3, self.b3, self.k5, self.b5,
                 self.kp, self.bp)]


class GruLayerParams:
    """Update/reset/candidate weights: x @ W + h @ U + b per gate."""

    def __init__(self, d: int, u: int, rng: SplitMix64, tag: str):
        self.wz = _glorot(rng, (d, u), f"{tag}.wz")
        self.uz = _glorot(rng, (u, u), f"{tag}.uz")
        self.bz = _zeros((u,), f"{tag}.bz")
        self.wr = _glorot(rng, (d, u), f"{tag}.wr")
        self.ur = _glorot(rng, (u, u), f"{tag}.ur")
        self.br = _zeros((u,), f"{tag}.br")
        self.wh = _glorot(rng, (d, u), f"{tag}.wh")
        self.uh = _glorot(rng, (u, u), f"{tag}.uh")
        self.bh = _zeros((u,), f"{tag}.bh")
        self.units = u

    def named(self):
        return [(v.op, v) for v in
                (self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                 self.wh, self.uh, self.bh)]


class DenseParams:
    def __init__(self, d: int, u: int, rng: SplitMix64, tag: str):
        self.w = _glorot(rng, (d, u), f"{tag}.w")
        self.b = _zeros((u,), f"{tag}.b")

    def named(self):
        return [(self.w.op, self.w), (self.b.op, self.b)]


def _fan_in_out(shape) -> tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 4:  # kh x kw x cin x cout
        rf = shape[0] * shape[1]
        return rf * shape[2], rf * shape[3]
    raise ValueError(f"no fan rule for shape {shape}")


def _glorot(rng: SplitMix64, shape, name: str) -> GradVar:
    fan_in, fan_out = _fan_in_out(shape)
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    vals = rng.uniform(-limit, limit, int(np.prod(shape))).reshape(shape)
    return ad.param(vals, name)


def _zeros(shape, name: str) -> GradVar:
    return ad.param(np.zeros(shape), name)


class NeuroInceptParams:
    """Every learnable tensor of the decoder, with stable names."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = SplitMix64(seed)
        inc_cfg = cfg.inception
        self.inc1 = InceptionParams(1, inc_cfg, rng, "inc1")
        self.grus = []
        d = cfg.seq_features
        for i, u in enumerate(cfg.gru_units):
            self.grus.append(GruLayerParams(d, u, rng, f"gru{i + 1}"))
            d = u
        self.inc2 = InceptionParams(1, inc_cfg, rng, "inc2")
        flat_dim = inc_cfg.post_conv_filters * (-(-cfg.gru_units[-1] // 2))
        self.denses = []
        d = flat_dim
        for i, u in enumerate(cfg.dense_units):
            self.denses.append(DenseParams(d, u, rng, f"dense{i + 1}"))
            d = u
        self.out = DenseParams(d, cfg.output_dim, rng, "out")

    def named(self):
        items = list(self.inc1.named())
        for g in self.grus:
            items += g.named()
        items += self.inc2.named()
        for dn in self.denses:
            items += dn.named()
        items += self.out.named()
        return items

    def all(self):
        return [v for _, v in self.named()]

    def num_params(self) -> int:
        return sum(v.size for v in self.all())

    def count_report(self):
        """Name -> (shape, count), plus a total; for the docs ledger test."""
        rows = [(name, v.shape, v.size) for name, v in self.named()]
        return rows, sum(r[2] for r in rows)

    def snapshot(self):
        return [v.value.copy() for v in self.all()]

    def restore(self, snap) -> None:
        for v, s in zip(self.all(), snap):
            np.copyto(v.value, s)

    def check_finite(self) -> None:
        for name, v in self.named():
            if not np.all(np.isfinite(v.value)):
                raise FloatingPointError(f"non-finite values in parameter {name}")


def inception_forward(x: GradVar, p: InceptionParams) -> GradVar:
    """Three same-padded conv branches, concat, 2x2/2 maxpool, 1x1 conv."""
    b1 = ad.relu(ad.conv2d_same(x, p.k1, p.b1))
    b3 = ad.relu(ad.conv2d_same(x, p.k3, p.b3))
    b5 = ad.relu(ad.conv2d_same(x, p.k5, p.b5))
    merged = ad.concat_channels([b1, b3, b5])
    pooled = ad.maxpool2d(merged, 2, 2, 2)
    return ad.relu(ad.conv2d_same(pooled, p.kp, p.bp))


def gru_cell(x: GradVar, h: GradVar, p: GruLayerParams) -> GradVar:
    """z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
    cand = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*h + z*cand."""
    z = ad.sigmoid(ad.add_bias(ad.add(ad.matmul(x, p.wz), ad.matmul(h, p.uz)), p.bz))
    r = ad.sigmoid(ad.add_bias(ad.add(ad.matmul(x, p.wr), ad.matmul(h, p.ur)), p.br))
    cand = ad.tanh(ad.add_bias(
        ad.add(ad.matmul(x, p.wh), ad.matmul(ad.hadamard(r, h), p.uh)), p.bh))
    one_minus_z = ad.add_scalar(ad.neg(z), 1.0)
    return ad.add(ad.hadamard(one_minus_z, h), ad.hadamard(z, cand))


def gru_layer(seq: GradVar, p: GruLayerParams,
              return_sequence: bool = True) -> GradVar:
    """Left-to-right recurrence from h0 = 0 over a ``L x d`` sequence.

    The 2-D path is the definitional step-by-step gru_cell loop.  A
    ``B x L x d`` batch takes a fused path that projects all timesteps
    through W in one matmul per gate; same recurrence, fewer graph nodes.
    """
    v = seq.value
    if v.ndim not in (2, 3) or v.shape[-2] < 1:
        raise ValueError(f"gru_layer needs a nonempty L x d sequence, got {v.shape}")
    if v.ndim == 3:
        return _gru_layer_fused(seq, p, return_sequence)
    L = v.shape[-2]
    h = ad.param(np.zeros(p.units), "h0")
    states = []
    for t in range(L):
        h = gru_cell(ad.select_time(seq, t), h, p)
        states.append(h)
    if return_sequence:
        return ad.stack_time(states)
    return states[-1]


def _gru_layer_fused(seq: GradVar, p: GruLayerParams,
                     return_sequence: bool) -> GradVar:
    B, L, d = seq.value.shape
    rows = ad.reshape(seq, (B * L, d))
    xz = ad.reshape(ad.add_bias(ad.matmul(rows, p.wz), p.bz), (B, L, p.units))
    xr = ad.reshape(ad.add_bias(ad.matmul(rows, p.wr), p.br), (B, L, p.units))
    xh = ad.reshape(ad.add_bias(ad.matmul(rows, p.wh), p.bh), (B, L, p.units))
    h = ad.param(np.zeros((B, p.units)), "h0")
    states = []
    for t in range(L):
        z = ad.sigmoid(ad.add(ad.select_time(xz, t), ad.matmul(h, p.uz)))
        r = ad.sigmoid(ad.add(ad.select_time(xr, t), ad.matmul(h, p.ur)))
        cand = ad.tanh(ad.add(ad.select_time(xh, t),
                              ad.matmul(ad.hadamard(r, h), p.uh)))
        one_minus_z = ad.add_scalar(ad.neg(z), 1.0)
        h = ad.add(ad.hadamard(one_minus_z, h), ad.hadamard(z, cand))
        states.append(h)
    if return_sequence:
        return ad.stack_time(states)
    return states[-1]


class NeuroInceptDecoder:
    """Config + parameters + forward passes."""

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: NeuroInceptParams | None = None):
        self.cfg = cfg
        self.params = params if params is not None else NeuroInceptParams(cfg, seed)

    def forward(self, row: GradVar) -> GradVar:
        """One feature row (length 9C) to 128 log-mel values.

        Accepts a batch as a B x 9C GradVar, in which case every stage
        carries the leading batch axis.
        """
        cfg = self.cfg
        v = row.value
        batched = v.ndim == 2
        if v.shape[-1] != cfg.input_dim:
            raise ValueError(
                f"row length {v.shape[-1]} != context_len*channels = {cfg.input_dim}")
        lead = (v.shape[0],) if batched else ()
        grid = ad.reshape(row, lead + (cfg.context_len, cfg.n_channels, 1))
        feat = inception_forward(grid, self.params.inc1)
        seq = ad.reshape(feat, lead + (cfg.seq_len, cfg.seq_features))
        for i, gp in enumerate(self.params.grus):
            last = i == len(self.params.grus) - 1
            seq = gru_layer(seq, gp, return_sequence=not last)
        grid2 = ad.reshape(seq, lead + (1, cfg.gru_units[-1], 1))
        feat2 = inception_forward(grid2, self.params.inc2)
        flat = ad.reshape(feat2, lead + (int(np.prod(feat2.shape[-3:])),))
        h = flat
        for dn in self.params.denses:
            h = ad.relu(ad.add_bias(ad.matmul(h, dn.w), dn.b))
        return ad.add_bias(ad.matmul(h, self.params.out.w), self.params.out.b)

    def predict_row(self, row: np.ndarray) -> np.ndarray:
        return self.forward(ad.param(np.asarray(row, dtype=np.float64))).value

    def predict_batch(self, X) -> np.ndarray:
        """Row-wise forward over a feature matrix; row order preserved and
        each output identical to the corresponding single-row call."""
        values = X.values if hasattr(X, "values") else np.asarray(X, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.cfg.input_dim:
            raise ValueError(f"feature matrix of width {values.shape} does not "
                             f"match model input {self.cfg.input_dim}")
        out = np.empty((values.shape[0], self.cfg.output_dim), dtype=np.float64)
        for i in range(values.shape[0]):
            out[i] = self.predict_row(values[i])
        return out

    def predict_chunked(self, values: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Batched forward in chunks; fast path for monitoring/evaluation
        (agrees with predict_batch to float64 rounding, not bit-exactly)."""
        values = np.asarray(values, dtype=np.float64)
        parts = [self.forward(ad.param(values[i:i + chunk])).value
                 for i in range(0, values.shape[0], chunk)]
        return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# checkpoints: one store per named tensor plus a text manifest
# ---------------------------------------------------------------------------


CHECKPOINT_MANIFEST = "checkpoint.txt"


def save_checkpoint(decoder: NeuroInceptDecoder, out_dir) -> None:
    """Write every named tensor as a float64 store plus a manifest."""
    from . import io as nio

    os.makedirs(out_dir, exist_ok=True)
    cfg = decoder.cfg
    lines = [
        "format = neuroincept-checkpoint-1",
        f"n_channels = {cfg.n_channels}",
        f"context_len = {cfg.context_len}",
        f"gru_units = {','.join(str(u) for u in cfg.gru_units)}",
        f"dense_units = {','.join(str(u) for u in cfg.dense_units)}",
        f"output_dim = {cfg.output_dim}",
        f"branch_filters = {cfg.inception.branch_filters}",
        f"post_conv_filters = {cfg.inception.post_conv_filters}",
    ]
    for name, v in decoder.params.named():
        fname = f"{name}.nifs"
        nio.write_store(os.path.join(out_dir, fname), v.value, dtype="f8")
        lines.append(f"tensor {name} = {fname}")
    with open(os.path.join(out_dir, CHECKPOINT_MANIFEST), "w",
              encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_checkpoint(ckpt_dir) -> NeuroInceptDecoder:
    """Rebuild a decoder from :func:`save_checkpoint` output."""
    from . import io as nio

    path = os.path.join(ckpt_dir, CHECKPOINT_MANIFEST)
    fields = {}
    tensors = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("tensor "):
                tensors[key[len("tensor "):].strip()] = value
            else:
                fields[key] = value
    if fields.get("format") != "neuroincept-checkpoint-1":
        raise ValueError(f"{path}: not a neuroincept checkpoint manifest")
    cfg = ModelConfig(
        n_channels=int(fields["n_channels"]),
        context_len=int(fields["context_len"]),
        gru_units=tuple(int(u) for u in fields["gru_units"].split(",")),
        dense_units=tuple(int(u) for u in fields["dense_units"].split(",")),
        output_dim=int(fields["output_dim"]),
        inception=InceptionConfig(
            branch_filters=int(fields["branch_filters"]),
            post_conv_filters=int(fields["post_conv_filters"])),
    )
    decoder = NeuroInceptDecoder(cfg, seed=0)
    for name, v in decoder.params.named():
        if name not in tensors:
            raise ValueError(f"{path}: tensor {name} missing from checkpoint")
        arr = nio.read_store(os.path.join(ckpt_dir, tensors[name]))
        if arr.shape != v.value.shape:
            raise ValueError(
                f"checkpoint tensor {name} has shape {arr.shape}, "
                f"model expects {v.value.shape}")
        np.copyto(v.value, arr)
    return decoder
