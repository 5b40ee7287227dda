"""Loss primitives: cross-entropy, L1, generalized-IoU, InfoNCE, binary cross-entropy.

All losses are mean-reduced scalars on float64 tensors. Box losses operate on
(x, y, w, h) boxes; the contrastive loss compares cosine similarities at a
fixed temperature.
"""
from __future__ import annotations

from typing import Optional

import torch
from torch import Tensor

PROB_EPS = 1e-7


def _check_nonempty(t: Tensor) -> None:
    if t.numel() == 0:
        raise ValueError("empty batch")


def cross_entropy(logits: Tensor, labels: Tensor) -> Tensor:
    _check_nonempty(logits)
    logp = torch.log_softmax(logits, dim=-1)
    return -logp.gather(-1, labels.long().unsqueeze(-1)).mean()


def l1_loss(predictions: Tensor, targets: Tensor) -> Tensor:
    _check_nonempty(predictions)
    return (predictions - targets).abs().mean()


def generalized_iou(boxes_a: Tensor, boxes_b: Tensor) -> Tensor:
    """Pairwise GIoU for aligned (N, 4) box tensors in (x, y, w, h) form."""
    ax0, ay0 = boxes_a[..., 0], boxes_a[..., 1]
    ax1, ay1 = ax0 + boxes_a[..., 2], ay0 + boxes_a[..., 3]
    bx0, by0 = boxes_b[..., 0], boxes_b[..., 1]
    bx1, by1 = bx0 + boxes_b[..., 2], by0 + boxes_b[..., 3]

    inter = (torch.minimum(ax1, bx1) - torch.maximum(ax0, bx0)).clamp(min=0) * (
        torch.minimum(ay1, by1) - torch.maximum(ay0, by0)
    ).clamp(min=0)
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    union = area_a + area_b - inter
    iou = inter / union.clamp(min=PROB_EPS)

    hull = (torch.maximum(ax1, bx1) - torch.minimum(ax0, bx0)) * (
        torch.maximum(ay1, by1) - torch.minimum(ay0, by0)
    )
    return iou - (hull - union) / hull.clamp(min=PROB_EPS)


def giou_loss(predictions: Tensor, targets: Tensor) -> Tensor:
    _check_nonempty(predictions)
    return (1.0 - generalized_iou(predictions, targets)).mean()


def bce_loss(probabilities: Tensor, targets: Tensor) -> Tensor:
    # additive epsilon instead of clamping: clamping zeroes the gradient at
    # saturation and strands confidently-wrong predictions; log(p + tiny)
    # keeps d/dlogit = (p - y) intact over the whole float64 range
    _check_nonempty(probabilities)
    tiny = 1e-300
    p = probabilities
    return -(targets * (p + tiny).log() + (1.0 - targets) * (1.0 - p + tiny).log()).mean()


def info_nce(
    anchors: Tensor,
    positives: Tensor,
    negatives: Tensor,
    temperature: float = 0.07,
) -> Tensor:
    """Contrastive loss over cosine similarities.

    anchors/positives: (N, D); negatives: (N, K, D). Each anchor is scored
    against its positive and its K negatives; mean over anchors.
    """
    _check_nonempty(anchors)
    a = torch.nn.functional.normalize(anchors, dim=-1, eps=PROB_EPS)
    p = torch.nn.functional.normalize(positives, dim=-1, eps=PROB_EPS)
    n = torch.nn.functional.normalize(negatives, dim=-1, eps=PROB_EPS)
    pos_sim = (a * p).sum(-1, keepdim=True) / temperature  # (N, 1)
    neg_sim = torch.einsum("nd,nkd->nk", a, n) / temperature  # (N, K)
    logits = torch.cat([pos_sim, neg_sim], dim=-1)
    return -torch.log_softmax(logits, dim=-1)[:, 0].mean()


def loss(kind: str, predictions, targets, config: Optional[dict] = None) -> Tensor:
    """Dispatch by loss kind: CE | L1 | GIOU | INFO_NCE | BCE."""
    config = config or {}
    if kind == "CE":
        return cross_entropy(predictions, targets)
    if kind == "L1":
        return l1_loss(predictions, targets)
    if kind == "GIOU":
        return giou_loss(predictions, targets)
    if kind == "BCE":
        return bce_loss(predictions, targets)
    if kind == "INFO_NCE":
        positives, negatives = targets
        return info_nce(predictions, positives, negatives, config.get("temperature", 0.07))
    raise ValueError(f"unknown loss kind {kind!r}")
