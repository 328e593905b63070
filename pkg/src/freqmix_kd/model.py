"""Multi-scale residual classifier with four feature taps.

Small stand-in for MPIF-Res2Net. Each stage splits its channels into groups,
runs Res2Net-style hierarchical convolutions with growing dilation, fuses the
group outputs with per-channel softmax attention and adds a residual path.
The stem halves both axes; each stage output (before its own 2x downsampling)
is the feature tap used for distillation.

Shapes for the default widths on a 45x600 input::

    tap 1  [B,  8, 22, 300]
    tap 2  [B, 16, 11, 150]
    tap 3  [B, 32,  5,  75]
    tap 4  [B, 64,  2,  37]
    logits [B, 2]   (column 0 bona fide, column 1 spoof)
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ArchitectureMismatch, CheckpointError, ConfigError, FrozenUpdate, ShapeMismatch

N_ROWS = 45
N_FRAMES = 600
N_CLASSES = 2

CKPT_MAGIC = b"FKDCKPT\x00"
CKPT_VERSION = 1


ACTIVATIONS = {"relu": F.relu, "softplus": F.softplus}


@dataclass
class ModelConfig:
    widths: tuple[int, ...] = (8, 16, 32, 64)
    n_groups: int = 4
    embed_dim: int = 64
    # fixed affine map on the log-power input; not a per-utterance statistic
    input_offset: float = 0.0
    input_scale: float = 1.0
    input_shape: tuple[int, int] = (N_ROWS, N_FRAMES)
    # per-sample group normalisation after each convolution (same in train and eval)
    group_norm: bool = True
    # "softplus" gives a smooth network, used for finite-difference checks
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"model.activation must be one of {sorted(ACTIVATIONS)}")
        self.widths = tuple(int(w) for w in self.widths)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if len(self.widths) != 4:
            raise ConfigError("model.widths: exactly four stages are required")
        for w in self.widths:
            if w % self.n_groups:
                raise ConfigError(f"model.widths: {w} not divisible by n_groups={self.n_groups}")

    def descriptor(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["input_shape"] = list(self.input_shape)
        return d


class ModelOutput(NamedTuple):
    logits: torch.Tensor
    embedding: torch.Tensor
    taps: tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]


def _fan_in_uniform_(weight: torch.Tensor, gen: torch.Generator) -> None:
    fan_in = weight[0].numel()
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=gen)


def _norm(channels: int, enabled: bool) -> nn.Module:
    if not enabled:
        return nn.Identity()
    return nn.GroupNorm(math.gcd(4, channels), channels)


class MultiScaleStage(nn.Module):
    def __init__(self, c_in: int, c_out: int, n_groups: int, norm: bool = True, activation: str = "relu"):
        super().__init__()
        self.n_groups = n_groups
        self.act = ACTIVATIONS[activation]
        g = c_out // n_groups
        self.split = nn.Conv2d(c_in, c_out, 1)
        self.split_norm = _norm(c_out, norm)
        self.branches = nn.ModuleList(
            nn.Conv2d(g, g, 3, padding=d, dilation=d) for d in range(1, n_groups + 1)
        )
        self.branch_norms = nn.ModuleList(_norm(g, norm) for _ in range(n_groups))
        # attention logits [group, channel]; softmax runs over the group axis
        self.attn_logits = nn.Parameter(torch.zeros(n_groups, g))
        self.merge = nn.Conv2d(g, c_out, 1)
        self.skip = nn.Conv2d(c_in, c_out, 1, bias=False)
        self.out_norm = _norm(c_out, norm)

    def fusion_weights(self) -> torch.Tensor:
        return torch.softmax(self.attn_logits, dim=0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        parts = torch.chunk(self.act(self.split_norm(self.split(x))), self.n_groups, dim=1)
        outs = []
        prev = None
        for part, conv, norm in zip(parts, self.branches, self.branch_norms):
            h = part if prev is None else part + prev
            prev = self.act(norm(conv(h)))
            outs.append(prev)
        w = self.fusion_weights()
        fused = sum(w[j].view(1, -1, 1, 1) * y for j, y in enumerate(outs))
        return self.act(self.out_norm(self.skip(x) + self.merge(fused)))


class MultiScaleNet(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 1):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        w = cfg.widths
        self.stem = nn.Conv2d(1, w[0], 3, padding=1)
        self.stem_norm = _norm(w[0], cfg.group_norm)
        c_in = w[0]
        stages = []
        for c_out in w:
            stages.append(MultiScaleStage(c_in, c_out, cfg.n_groups, cfg.group_norm, cfg.activation))
            c_in = c_out
        self.stages = nn.ModuleList(stages)
        self.embed = nn.Linear(w[-1], cfg.embed_dim)
        # angular-margin head: class weights, no bias
        self.head = nn.Parameter(torch.empty(N_CLASSES, cfg.embed_dim))
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(int(seed))
        norms = {n for n, m in self.named_modules() if isinstance(m, nn.GroupNorm)}
        for name, p in self.named_parameters():
            if name.endswith("attn_logits") or name.endswith(".bias"):
                with torch.no_grad():
                    p.zero_()
            elif name.rsplit(".", 1)[0] in norms:
                with torch.no_grad():
                    p.fill_(1.0)
            else:
                _fan_in_uniform_(p, gen)

    def forward(self, x: torch.Tensor) -> ModelOutput:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        if x.dim() != 4 or x.shape[1] != 1 or tuple(x.shape[2:]) != self.cfg.input_shape:
            raise ShapeMismatch(
                f"expected [B, {self.cfg.input_shape[0]}, {self.cfg.input_shape[1]}], "
                f"got {list(x.shape)}"
            )
        x = x.to(self.head.dtype)
        h = (x - self.cfg.input_offset) * self.cfg.input_scale
        h = F.avg_pool2d(ACTIVATIONS[self.cfg.activation](self.stem_norm(self.stem(h))), 2)
        taps = []
        for stage in self.stages:
            h = stage(h)
            taps.append(h)
            h = F.avg_pool2d(h, 2)
        emb = self.embed(h.mean(dim=(2, 3)))
        logits = emb @ F.normalize(self.head, dim=1).t()
        return ModelOutput(logits, emb, tuple(taps))

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def flat_parameters(self) -> np.ndarray:
        """All parameters as one float32 vector in checkpoint order."""
        return np.concatenate(
            [p.detach().cpu().numpy().astype(np.float32).ravel() for p in self.parameters()]
        )


class FrozenModel:
    """Forward-only handle on a model. Updates are rejected."""

    def __init__(self, model: MultiScaleNet):
        self._model = model
        for p in model.parameters():
            p.requires_grad_(False)
        model.eval()

    @property
    def cfg(self) -> ModelConfig:
        return self._model.cfg

    def __call__(self, x: torch.Tensor) -> ModelOutput:
        with torch.no_grad():
            return self._model(x)

    def parameters(self):
        return self._model.parameters()

    def named_parameters(self):
        return self._model.named_parameters()

    def n_parameters(self) -> int:
        return self._model.n_parameters()

    def flat_parameters(self) -> np.ndarray:
        return self._model.flat_parameters()

    def load_state_dict(self, *args, **kwargs):
        raise FrozenUpdate("cannot load new parameters into a frozen model")


def freeze(model: MultiScaleNet) -> FrozenModel:
    return FrozenModel(model)


def parameter_gradients(model: MultiScaleNet | FrozenModel, loss: torch.Tensor) -> dict[str, torch.Tensor]:
    """Gradients of ``loss`` for every named parameter.

    Parameters that do not require grad (e.g. a frozen teacher) get explicit
    zero tensors.
    """
    named = list(model.named_parameters())
    live = [(n, p) for n, p in named if p.requires_grad]
    grads = {}
    if live and loss.requires_grad:
        g = torch.autograd.grad(loss, [p for _, p in live], allow_unused=True)
        grads = {n: (gi if gi is not None else torch.zeros_like(p)) for (n, p), gi in zip(live, g)}
    return {n: grads.get(n, torch.zeros_like(p)) for n, p in named}


class Adam:
    """Adam with the usual bias-corrected moment recurrences."""

    def __init__(self, model, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        if isinstance(model, FrozenModel):
            raise FrozenUpdate("optimizer attached to a frozen model")
        self.params = [p for p in model.parameters() if p.requires_grad]
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if not p.requires_grad:
                raise FrozenUpdate("parameter was frozen after the optimizer was built")
            if p.grad is None:
                continue
            m.mul_(self.b1).add_(p.grad, alpha=1.0 - self.b1)
            v.mul_(self.b2).addcmul_(p.grad, p.grad, value=1.0 - self.b2)
            denom = (v / c2).sqrt_().add_(self.eps)
            p.addcdiv_(m, denom, value=-self.lr / c1)


# --- checkpoints -----------------------------------------------------------
#
# layout (little-endian):
#   8s   magic "FKDCKPT\0"
#   u32  format version
#   u32  descriptor length n, then n bytes of UTF-8 JSON (ModelConfig, sorted keys)
#   u64  parameter count P
#   P x f32 parameters, in ``model.parameters()`` order
#   i64  seed
#   u64  step counter


def checkpoint_bytes(model: MultiScaleNet | FrozenModel, seed: int = 1, step: int = 0) -> bytes:
    desc = json.dumps(model.cfg.descriptor(), sort_keys=True).encode()
    flat = model.flat_parameters()
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<II", CKPT_VERSION, len(desc)))
    buf.write(desc)
    buf.write(struct.pack("<Q", flat.size))
    buf.write(flat.astype("<f4").tobytes())
    buf.write(struct.pack("<qQ", int(seed), int(step)))
    return buf.getvalue()


def save_checkpoint(path, model, seed: int = 1, step: int = 0) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, seed, step))


@dataclass
class Checkpoint:
    model: MultiScaleNet
    seed: int
    step: int
    meta: dict = field(default_factory=dict)


def load_checkpoint(path, expect: ModelConfig | None = None) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 8)
        if version != CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        desc = json.loads(data[16 : 16 + n])
        off = 16 + n
        (count,) = struct.unpack_from("<Q", data, off)
        off += 8
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=off)
        off += 4 * count
        seed, step = struct.unpack_from("<qQ", data, off)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint") from exc
    try:
        cfg = ModelConfig(**desc)
    except (TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: unusable model descriptor {desc}") from exc
    if expect is not None and cfg.descriptor() != expect.descriptor():
        raise ArchitectureMismatch(f"{path}: checkpoint architecture {desc} != {expect.descriptor()}")
    model = MultiScaleNet(cfg)
    if model.n_parameters() != count:
        raise CheckpointError(f"{path}: parameter count {count} != {model.n_parameters()}")
    off = 0
    with torch.no_grad():
        for p in model.parameters():
            k = p.numel()
            p.copy_(torch.from_numpy(flat[off : off + k].astype(np.float32)).view_as(p))
            off += k
    return Checkpoint(model, seed, step, desc)


def clone_model(model: MultiScaleNet | FrozenModel) -> MultiScaleNet:
    """Independent trainable copy (float32) with identical parameters."""
    src = model._model if isinstance(model, FrozenModel) else model
    out = MultiScaleNet(src.cfg)
    with torch.no_grad():
        for dst, p in zip(out.parameters(), src.parameters()):
            dst.copy_(p)
    return out
