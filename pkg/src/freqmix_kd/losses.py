"""Feature-matching, angular-margin and combined distillation losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import EmptyBatch, InvalidMargin, ShapeMismatch


def feature_loss_terms(t_taps, s_taps) -> list[torch.Tensor]:
    """Per-tap mean squared error, teacher vs student."""
    if len(t_taps) != len(s_taps):
        raise ShapeMismatch(f"{len(t_taps)} teacher taps vs {len(s_taps)} student taps")
    terms = []
    for i, (t, s) in enumerate(zip(t_taps, s_taps)):
        if t.shape != s.shape:
            raise ShapeMismatch(f"tap {i + 1}: {tuple(t.shape)} vs {tuple(s.shape)}")
        terms.append(F.mse_loss(s, t.to(s.dtype).detach(), reduction="mean"))
    return terms


def feature_loss(t_taps, s_taps) -> torch.Tensor:
    """Sum over taps of the elementwise MSE (mean over each tap's elements)."""
    return torch.stack(feature_loss_terms(t_taps, s_taps)).sum()


def chebyshev_cos_multiple(c: torch.Tensor, m: int) -> torch.Tensor:
    """cos(m * theta) as the Chebyshev polynomial T_m evaluated at c = cos(theta)."""
    prev, cur = torch.ones_like(c), c
    if m == 0:
        return prev
    for _ in range(m - 1):
        prev, cur = cur, 2.0 * c * cur - prev
    return cur


def margin_psi(cos_theta: torch.Tensor, m: int) -> torch.Tensor:
    """Monotone extension psi(theta) = (-1)^k cos(m theta) - 2k, k = floor(m theta / pi)."""
    c = cos_theta.clamp(-1.0, 1.0)
    with torch.no_grad():
        k = torch.floor(m * torch.acos(c) / math.pi)
        sign = 1.0 - 2.0 * torch.remainder(k, 2.0)
    return sign * chebyshev_cos_multiple(c, m) - 2.0 * k


def margin_logits(embedding: torch.Tensor, class_weights: torch.Tensor, labels: torch.Tensor,
                  margin_m: int) -> torch.Tensor:
    """Logits ``|x| cos(theta_j)`` with the true class replaced by ``|x| psi(theta_y)``."""
    w = F.normalize(class_weights, dim=1)
    norm = embedding.norm(dim=1, keepdim=True)
    raw = embedding @ w.t()
    cos = raw / norm.clamp_min(1e-12)
    true_cos = cos.gather(1, labels.view(-1, 1))
    psi = margin_psi(true_cos, margin_m)
    one_hot = F.one_hot(labels, raw.shape[1]).to(raw.dtype)
    return raw * (1.0 - one_hot) + norm * psi * one_hot


def hard_loss(embedding: torch.Tensor, class_weights: torch.Tensor, labels, margin_m: int = 2) -> torch.Tensor:
    """A-softmax cross-entropy, averaged over the batch."""
    if int(margin_m) != margin_m or margin_m < 1:
        raise InvalidMargin(f"margin_m must be an integer >= 1, got {margin_m}")
    labels = torch.as_tensor(labels, dtype=torch.long)
    if embedding.shape[0] == 0:
        raise EmptyBatch("hard_loss on an empty batch")
    if labels.shape[0] != embedding.shape[0]:
        raise ShapeMismatch(f"{embedding.shape[0]} embeddings vs {labels.shape[0]} labels")
    return F.cross_entropy(margin_logits(embedding, class_weights, labels, int(margin_m)), labels)


@dataclass
class LossReport:
    loss_feat: float
    loss_hard: float
    loss_total: float
    per_tap: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


def total_loss(lf, lh, cfg):
    """alpha * feature loss + beta * hard loss; works on floats and tensors alike."""
    return cfg.alpha * lf + cfg.beta * lh


def loss_report(lf: float, lh: float, cfg, per_tap=(0.0, 0.0, 0.0, 0.0)) -> LossReport:
    lf, lh = float(lf), float(lh)
    return LossReport(lf, lh, float(total_loss(lf, lh, cfg)), tuple(float(v) for v in per_tap))
