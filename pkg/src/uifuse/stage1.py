"""First-stage representation learning.

Each design node becomes a 512-dim multimodal vector: a message-passing
geometry/semantics encoder (128), a frozen sentence embedding projected from
768 to 128 and concatenated (256 fused), then eight pre-norm self-attention
blocks with rotary positions over the pre-order traversal index. Three
decoding heads (semantic logits, sigmoid box regression, 768-dim text
projection) drive the self-supervised joint loss
0.5 * CE + 1.0 * (L1 + GIoU) + 0.1 * InfoNCE.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from . import nn as kernel
from .nn import DTYPE, MLP, SelfAttentionBlock
from .proto import SEMANTIC_INDEX, SEMANTICS, DesignTree, Kind, Semantic
from .relations import spatial_matrix
from .textembed import HashedTextEmbedder, TextEmbedderProvider

GEOM_DIM = 128
TEXT_DIM = 768
FUSED_DIM = 256
MODEL_DIM = 512
N_BLOCKS = 8
N_HEADS = 8
N_MESSAGE_ROUNDS = 2
N_SEMANTICS = len(SEMANTICS)


@dataclass
class Stage1Config:
    lambda_semantic: float = 0.5
    lambda_geometry: float = 1.0
    lambda_text: float = 0.1
    batch_size: int = 4
    epochs: int = 300
    pad_length: int = 200
    lr: float = 1e-5
    lr_decay: float = 0.2
    lr_decay_every: int = 50
    mask_prob: float = 0.1
    jitter_range: float = 0.02
    scale_range: tuple[float, float] = (0.95, 1.05)
    temperature: float = 0.07
    n_negatives: int = 2
    seed: int = 0


@dataclass
class TreeSample:
    """One training/inference item: a node sequence extracted from a tree.

    UI trees contribute their leaves (the matchable units); UX/GAMEUI trees
    contribute every node. Boxes stay in absolute canvas pixels.
    """

    name: str
    canvas: tuple[int, int]
    node_ids: list[str]
    boxes: np.ndarray  # (n, 4) float64
    semantics: list[Semantic]
    texts: list[Optional[str]]
    positive_texts: list[Optional[str]] = field(default_factory=list)
    negative_texts: list[list[str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.positive_texts:
            self.positive_texts = [None] * len(self.node_ids)
        if not self.negative_texts:
            self.negative_texts = [[] for _ in self.node_ids]

    def __len__(self) -> int:
        return len(self.node_ids)


def sample_from_tree(
    tree: DesignTree,
    name: str = "",
    contrastive: Optional[dict[str, tuple[list[str], list[str]]]] = None,
) -> TreeSample:
    nodes = tree.leaves() if tree.kind is Kind.UI else list(tree.walk())
    contrastive = contrastive or {}
    pos, neg = [], []
    for n in nodes:
        entry = contrastive.get(n.id)
        pos.append(entry[0][0] if entry and entry[0] else None)
        neg.append(list(entry[1]) if entry else [])
    return TreeSample(
        name=name or tree.root.id,
        canvas=tree.canvas,
        node_ids=[n.id for n in nodes],
        boxes=np.array([n.rect for n in nodes], dtype=np.float64).reshape(-1, 4),
        semantics=[n.semantic for n in nodes],
        texts=[n.text for n in nodes],
        positive_texts=pos,
        negative_texts=neg,
    )


def augment(sample: TreeSample, config: Stage1Config, rng: np.random.Generator) -> TreeSample:
    """Word masking plus box translation/scaling, clipped to the canvas.

    With mask_prob == 0 and jitter_range == 0 this is the identity.
    """
    texts = sample.texts
    if config.mask_prob > 0:
        texts = []
        for text in sample.texts:
            if not text:
                texts.append(text)
                continue
            words = text.split()
            kept = [w for w in words if rng.random() >= config.mask_prob]
            if not kept and words:
                kept = [words[0]]
            texts.append(" ".join(kept))
    boxes = sample.boxes
    if config.jitter_range > 0:
        W, H = sample.canvas
        boxes = boxes.copy()
        n = boxes.shape[0]
        dx = rng.uniform(-config.jitter_range, config.jitter_range, n) * W
        dy = rng.uniform(-config.jitter_range, config.jitter_range, n) * H
        s = rng.uniform(config.scale_range[0], config.scale_range[1], n)
        boxes[:, 0] += dx
        boxes[:, 1] += dy
        boxes[:, 2] *= s
        boxes[:, 3] *= s
        boxes[:, 0] = np.clip(boxes[:, 0], 0, W)
        boxes[:, 1] = np.clip(boxes[:, 1], 0, H)
        boxes[:, 2] = np.minimum(boxes[:, 2], W - boxes[:, 0])
        boxes[:, 3] = np.minimum(boxes[:, 3], H - boxes[:, 1])
    return replace(sample, boxes=boxes, texts=texts)


@dataclass
class Batch:
    geometry: Tensor  # (B, T, 4) normalized
    semantics: Tensor  # (B, T) long
    sem_onehot: Tensor  # (B, T, C)
    spatial: Tensor  # (B, T, T, 5)
    text_emb: Tensor  # (B, T, 768)
    positions: Tensor  # (B, T) long
    mask: Tensor  # (B, T) bool
    has_contrastive: Tensor  # (B, T) bool
    positive_emb: Tensor  # (B, T, 768)
    negative_emb: Tensor  # (B, T, K, 768)


def featurize(
    samples: Sequence[TreeSample],
    provider: TextEmbedderProvider,
    pad_length: int = 200,
    n_negatives: int = 2,
) -> Batch:
    clipped = [min(len(s), pad_length) for s in samples]
    T = max(clipped)
    B = len(samples)
    geometry = torch.zeros(B, T, 4, dtype=DTYPE)
    semantics = torch.zeros(B, T, dtype=torch.long)
    spatial = torch.zeros(B, T, T, 5, dtype=DTYPE)
    text_emb = torch.zeros(B, T, TEXT_DIM, dtype=DTYPE)
    mask = torch.zeros(B, T, dtype=torch.bool)
    has_contrastive = torch.zeros(B, T, dtype=torch.bool)
    positive_emb = torch.zeros(B, T, TEXT_DIM, dtype=DTYPE)
    negative_emb = torch.zeros(B, T, n_negatives, TEXT_DIM, dtype=DTYPE)

    for b, sample in enumerate(samples):
        n = clipped[b]
        W, H = sample.canvas
        boxes = sample.boxes[:n]
        geometry[b, :n] = torch.as_tensor(
            boxes / np.array([W, H, W, H], dtype=np.float64), dtype=DTYPE
        )
        semantics[b, :n] = torch.tensor([SEMANTIC_INDEX[s] for s in sample.semantics[:n]])
        spatial[b, :n, :n] = torch.as_tensor(spatial_matrix(boxes, sample.canvas), dtype=DTYPE)
        mask[b, :n] = True
        embeddings = [provider.embed(t) for t in sample.texts[:n]]
        text_emb[b, :n] = torch.as_tensor(np.stack(embeddings), dtype=DTYPE)
        for i in range(n):
            if not sample.texts[i]:
                continue
            positive = sample.positive_texts[i]
            negatives = list(sample.negative_texts[i])
            if not negatives:  # fall back to other texts in the same sequence
                negatives = [
                    t for j, t in enumerate(sample.texts[:n])
                    if j != i and t and t != sample.texts[i]
                ]
            if not negatives:
                continue
            pos_vec = provider.embed(positive) if positive else embeddings[i]
            neg_vecs = [provider.embed(negatives[k % len(negatives)]) for k in range(n_negatives)]
            has_contrastive[b, i] = True
            positive_emb[b, i] = torch.as_tensor(pos_vec, dtype=DTYPE)
            negative_emb[b, i] = torch.as_tensor(np.stack(neg_vecs), dtype=DTYPE)

    positions = torch.arange(T).unsqueeze(0).expand(B, T).clone()
    return Batch(
        geometry=geometry,
        semantics=semantics,
        sem_onehot=torch.nn.functional.one_hot(semantics, N_SEMANTICS).to(DTYPE),
        spatial=spatial,
        text_emb=text_emb,
        positions=positions,
        mask=mask,
        has_contrastive=has_contrastive,
        positive_emb=positive_emb,
        negative_emb=negative_emb,
    )


@dataclass
class NodeFeatureBundle:
    """Per-node features at each pipeline step for one tree."""

    geometry: Tensor  # (n, 128)
    text: Tensor  # (n, 768)
    fused: Tensor  # (n, 256)
    final: Tensor  # (n, 512)


class RepresentationModel(nn.Module):
    """Geometry message passing + text fusion + rotary self-attention encoder + heads."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        gen = kernel.seeded_generator(seed)
        self.geom_encoder = MLP([4 + N_SEMANTICS, GEOM_DIM, GEOM_DIM], gen)
        self.message_mlps = nn.ModuleList(
            MLP([2 * GEOM_DIM + 5, GEOM_DIM, GEOM_DIM], gen) for _ in range(N_MESSAGE_ROUNDS)
        )
        self.text_projector = kernel.linear(TEXT_DIM, GEOM_DIM, gen)
        self.input_projector = kernel.linear(FUSED_DIM, MODEL_DIM, gen)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(MODEL_DIM, N_HEADS, gen) for _ in range(N_BLOCKS)
        )
        self.final_norm = nn.LayerNorm(MODEL_DIM, dtype=DTYPE)
        self.semantic_head = MLP([MODEL_DIM, 256, N_SEMANTICS], gen)
        self.box_head = MLP([MODEL_DIM, 256, 4], gen, out_activation="sigmoid")
        self.text_head = MLP([MODEL_DIM, MODEL_DIM, TEXT_DIM], gen)

    def embed_geometry(self, batch: Batch) -> Tensor:
        h = self.geom_encoder(torch.cat([batch.geometry, batch.sem_onehot], dim=-1))
        B, T, _ = h.shape
        valid = batch.mask[:, None, :, None] & batch.mask[:, :, None, None]  # (B, T_i, T_j, 1)
        off_diag = ~torch.eye(T, dtype=torch.bool)[None, :, :, None]
        for mlp in self.message_mlps:
            pair = torch.cat(
                [h[:, :, None, :].expand(B, T, T, GEOM_DIM),
                 h[:, None, :, :].expand(B, T, T, GEOM_DIM),
                 batch.spatial],
                dim=-1,
            )
            messages = mlp(pair) * (valid & off_diag)
            h = h + messages.sum(dim=2)
        return h

    def fuse(self, f_g: Tensor, f_t: Tensor) -> Tensor:
        return torch.cat([f_g, self.text_projector(f_t)], dim=-1)

    def encode_sequence(self, fused: Tensor, positions: Tensor, mask: Tensor) -> Tensor:
        x = self.input_projector(fused)
        for block in self.blocks:
            x = block(x, positions, key_mask=mask)
        return self.final_norm(x)

    def decode_heads(self, final: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return self.semantic_head(final), self.box_head(final), self.text_head(final)

    def forward(self, batch: Batch) -> dict[str, Tensor]:
        f_g = self.embed_geometry(batch)
        fused = self.fuse(f_g, batch.text_emb)
        final = self.encode_sequence(fused, batch.positions, batch.mask)
        logits, boxes, text_proj = self.decode_heads(final)
        return {
            "geometry": f_g,
            "fused": fused,
            "final": final,
            "logits": logits,
            "boxes": boxes,
            "text_proj": text_proj,
        }


def stage1_loss(outputs: dict[str, Tensor], batch: Batch, config: Stage1Config) -> tuple[Tensor, dict[str, float]]:
    valid = batch.mask
    logits = outputs["logits"][valid]
    labels = batch.semantics[valid]
    loss_semantic = kernel.cross_entropy(logits, labels)

    boxes = outputs["boxes"][valid]
    targets = batch.geometry[valid]
    loss_geometry = kernel.l1_loss(boxes, targets) + kernel.giou_loss(boxes, targets)

    contrastive = batch.has_contrastive & valid
    if contrastive.any():
        loss_text = kernel.info_nce(
            outputs["text_proj"][contrastive],
            batch.positive_emb[contrastive],
            batch.negative_emb[contrastive],
            temperature=config.temperature,
        )
    else:
        loss_text = torch.zeros((), dtype=DTYPE)

    total = (
        config.lambda_semantic * loss_semantic
        + config.lambda_geometry * loss_geometry
        + config.lambda_text * loss_text
    )
    parts = {
        "semantic": float(loss_semantic.detach()),
        "geometry": float(loss_geometry.detach()),
        "text": float(loss_text.detach()),
        "total": float(total.detach()),
    }
    return total, parts


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


@dataclass
class Stage1Checkpoint:
    model: RepresentationModel
    config: Stage1Config
    history: list[dict]
    provider_name: str = HashedTextEmbedder.name

    def save(self, path: str | Path) -> None:
        manifest = {
            "stage": 1,
            "seed": self.config.seed,
            "provider": self.provider_name,
            "config": _config_dict(self.config),
            "history": self.history,
        }
        kernel.save_checkpoint(path, kernel.module_state(self.model), manifest)


def _config_dict(config) -> dict:
    out = {}
    for key, value in vars(config).items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def _config_from_dict(cls, data: dict):
    kwargs = dict(data)
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return cls(**kwargs)


def load_stage1(path: str | Path) -> Stage1Checkpoint:
    tensors, manifest = kernel.load_checkpoint(path)
    if manifest.get("stage") != 1:
        raise ValueError(f"{path}: not a stage-1 checkpoint")
    config = _config_from_dict(Stage1Config, manifest["config"])
    model = RepresentationModel(seed=config.seed)
    kernel.load_module_state(model, tensors)
    return Stage1Checkpoint(model=model, config=config, history=manifest.get("history", []),
                            provider_name=manifest.get("provider", HashedTextEmbedder.name))


def train_stage1(
    samples: Sequence[TreeSample],
    config: Stage1Config,
    provider: Optional[TextEmbedderProvider] = None,
    log_every: int = 0,
) -> Stage1Checkpoint:
    if not samples:
        raise ValueError("empty dataset")
    provider = provider or HashedTextEmbedder()
    torch.manual_seed(config.seed)
    model = RepresentationModel(seed=config.seed)
    optimizer = kernel.make_adam([p for p in model.parameters() if p.requires_grad], config.lr)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    start = time.time()
    for epoch in range(config.epochs):
        kernel.set_lr(optimizer, kernel.stepped_lr(config.lr, epoch, config.lr_decay, config.lr_decay_every))
        # group similar lengths per batch (less padding), then shuffle batch order
        order = rng.permutation(len(samples))
        order = sorted(order, key=lambda i: len(samples[i]))
        batches = [order[b : b + config.batch_size] for b in range(0, len(order), config.batch_size)]
        batch_order = rng.permutation(len(batches))
        epoch_losses: list[dict] = []
        for bi in batch_order:
            chosen = [samples[i] for i in batches[bi]]
            augmented = [augment(s, config, rng) for s in chosen]
            batch = featurize(augmented, provider, config.pad_length, config.n_negatives)
            optimizer.zero_grad()
            total, parts = stage1_loss(model(batch), batch, config)
            if not math.isfinite(parts["total"]):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
            total.backward()
            optimizer.step()
            epoch_losses.append(parts)
        means = {k: float(np.mean([p[k] for p in epoch_losses])) for k in epoch_losses[0]}
        means["epoch"] = epoch
        history.append(means)
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            print(f"[stage1] epoch {epoch}: loss {means['total']:.4f} ({time.time() - start:.0f}s)", flush=True)
    return Stage1Checkpoint(model=model, config=config, history=history)


@torch.no_grad()
def embed_sample(model: RepresentationModel, sample: TreeSample, provider: TextEmbedderProvider) -> NodeFeatureBundle:
    batch = featurize([sample], provider, pad_length=max(len(sample), 1))
    outputs = model(batch)
    n = len(sample)
    return NodeFeatureBundle(
        geometry=outputs["geometry"][0, :n],
        text=batch.text_emb[0, :n],
        fused=outputs["fused"][0, :n],
        final=outputs["final"][0, :n],
    )


def retrieval_score(f_query: Tensor, f_candidate: Tensor) -> float:
    """Scalar page similarity: cosine matrix, mean row-max averaged with mean column-max."""
    if f_query.numel() == 0 or f_candidate.numel() == 0:
        raise ValueError("empty embedding matrix")
    a = torch.nn.functional.normalize(f_query, dim=-1, eps=1e-12)
    b = torch.nn.functional.normalize(f_candidate, dim=-1, eps=1e-12)
    sim = a @ b.T
    return float((sim.max(dim=1).values.mean() + sim.max(dim=0).values.mean()) / 2.0)
