"""Second-stage matcher: grouped cross-attention over frozen representations.

Each layer attends bidirectionally between every UX group and the full UI
row set, scatters the group-side outputs back into the UX matrix, reduces
the UI-side stack to an (L, m) probability matrix through a sigmoid MLP
head, then residually updates both matrices (the UI update is weighted by
the column-normalized probabilities). The last layer's probabilities drive
thresholded row/column bounds and the assignment cost matrix 1 - M^T.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from . import nn as kernel
from .nn import DTYPE, MLP
from .stage1 import MODEL_DIM, Stage1Checkpoint, TreeSample, embed_sample
from .textembed import HashedTextEmbedder, TextEmbedderProvider

N_GCA_LAYERS = 4
GCA_HEADS = 8
PROB_HIDDEN = 128


@dataclass
class Stage2Config:
    epochs: int = 200
    batch_size: int = 4
    lr: float = 1e-5
    lr_decay: float = 0.2
    lr_decay_every: int = 50
    sigma: float = 0.5
    n_layers: int = N_GCA_LAYERS
    # geometry augmentation: number of pre-embedded jittered corpus variants
    # cycled across epochs (1 = embeddings of the raw corpus only)
    augment_variants: int = 1
    jitter_range: float = 0.02
    seed: int = 0


@dataclass
class GcaState:
    """Intermediate products of one grouped cross-attention layer."""

    group_outputs: Tensor  # (n, 512) scattered by member index
    cross_outputs: Tensor  # (L, m, 512)
    probs: Tensor  # (L, m)


def proportional_normalize(probs: Tensor) -> Tensor:
    """Column-normalize probabilities so each column sums to 1.

    Columns whose sum underflows to zero get uniform 1/L weights (the limit
    of the proportional rule).
    """
    L = probs.shape[0]
    col_sums = probs.sum(dim=0)
    safe = torch.where(col_sums > 0, col_sums, torch.ones_like(col_sums))
    return torch.where(col_sums > 0, probs / safe, torch.full_like(probs, 1.0 / L))


class GcaLayer(nn.Module):
    def __init__(self, generator: torch.Generator, heads: int = GCA_HEADS, dim: int = MODEL_DIM):
        super().__init__()
        self.heads = heads
        self.norm_rows = nn.LayerNorm(dim, dtype=DTYPE)
        self.norm_groups = nn.LayerNorm(dim, dtype=DTYPE)
        # group-side queries against the full row set
        self.group_query = kernel.linear(dim, dim, generator)
        self.row_key = kernel.linear(dim, dim, generator, bias=False)
        self.row_value = kernel.linear(dim, dim, generator)
        self.group_out = kernel.linear(dim, dim, generator)
        # row-side queries against each group
        self.row_query = kernel.linear(dim, dim, generator)
        self.group_key = kernel.linear(dim, dim, generator, bias=False)
        self.group_value = kernel.linear(dim, dim, generator)
        self.row_out = kernel.linear(dim, dim, generator)
        self.prob_head = MLP([dim, PROB_HIDDEN, 1], generator)
        with torch.no_grad():
            # damp residual writes: full-scale updates are nearly identical
            # across rows, so depth would homogenize row identities and leave
            # the deeper probability heads with constant inputs
            self.row_out.weight.mul_(0.1)
            self.group_out.weight.mul_(0.1)
            # start probabilities near 0.5 for a calm BCE
            self.prob_head.layers[-1].weight.mul_(0.1)

    def forward(
        self, rows: Tensor, groups_matrix: Tensor, group_indices: Sequence[Tensor]
    ) -> tuple[Tensor, Tensor, Tensor, GcaState]:
        """rows: (m, 512) UI side; groups_matrix: (n, 512) UX side."""
        if any(len(idx) == 0 for idx in group_indices):
            raise ValueError("empty group")
        m = rows.shape[0]
        n = groups_matrix.shape[0]
        L = len(group_indices)

        rows_n = self.norm_rows(rows)
        groups_n = self.norm_groups(groups_matrix)
        row_keys = self.row_key(rows_n)
        row_values = self.row_value(rows_n)
        row_queries = self.row_query(rows_n)

        group_outputs = torch.zeros(n, MODEL_DIM, dtype=DTYPE)
        cross_outputs = []
        for idx in group_indices:
            members = groups_n[idx]
            attended_group = kernel.attention(
                self.group_query(members), row_keys, row_values, self.heads
            )
            # query-side residual inside the unit (vanilla transformer block):
            # the projected output must carry the query identity, otherwise the
            # probability head would see only group content, constant per row
            group_outputs = group_outputs.index_put(
                (idx,), self.group_out(members + attended_group)
            )
            attended_rows = kernel.attention(
                row_queries, self.group_key(members), self.group_value(members), self.heads
            )
            cross_outputs.append(self.row_out(rows_n + attended_rows))
        cross = torch.stack(cross_outputs)  # (L, m, 512)

        probs = torch.sigmoid(self.prob_head(cross)).squeeze(-1)  # (L, m)
        weights = proportional_normalize(probs)
        rows_updated = rows + (weights.unsqueeze(-1) * cross).sum(dim=0)
        groups_updated = groups_matrix + group_outputs
        state = GcaState(group_outputs=group_outputs, cross_outputs=cross, probs=probs)
        return rows_updated, groups_updated, probs, state


class MatchStack(nn.Module):
    """Stack of grouped cross-attention layers; the final layer's probabilities count."""

    def __init__(self, seed: int = 0, n_layers: int = N_GCA_LAYERS):
        super().__init__()
        self.seed = seed
        gen = kernel.seeded_generator(seed)
        self.layers = nn.ModuleList(GcaLayer(gen) for _ in range(n_layers))

    def forward(
        self, rows: Tensor, groups_matrix: Tensor, group_indices: Sequence[Tensor]
    ) -> tuple[Tensor, list[GcaState]]:
        states = []
        probs = None
        for layer in self.layers:
            rows, groups_matrix, probs, state = layer(rows, groups_matrix, group_indices)
            states.append(state)
        return probs, states


def match_forward(
    stack: MatchStack, rows: Tensor, groups_matrix: Tensor, group_indices: Sequence[Tensor]
) -> Tensor:
    probs, _ = stack(rows, groups_matrix, group_indices)
    return probs


def group_index_tensors(node_ids: Sequence[str], members: Sequence[Sequence[str]]) -> list[Tensor]:
    """Map group member id lists onto row indices of the encoded UX sequence."""
    order = {nid: i for i, nid in enumerate(node_ids)}
    return [torch.tensor([order[m] for m in ms], dtype=torch.long) for ms in members]


def cost_matrix(probs: "Tensor | np.ndarray") -> np.ndarray:
    """Assignment costs: 1 - M^T, shape (m, L)."""
    M = probs.detach().cpu().numpy() if isinstance(probs, Tensor) else np.asarray(probs)
    return 1.0 - M.T


@dataclass
class MatchBounds:
    """Thresholded row/column quotas for the transportation polytope."""

    row_flags: np.ndarray  # (m,) 0/1: row participates in matching
    col_counts: np.ndarray  # (L,) matches required per column
    threshold: float


def derive_bounds(probs: "Tensor | np.ndarray", sigma: float = 0.5) -> MatchBounds:
    """Row is matchable iff its best probability reaches sigma; its argmax
    column (ties to the lowest index) accumulates the column quota."""
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    M = probs.detach().cpu().numpy() if isinstance(probs, Tensor) else np.asarray(probs)
    L, m = M.shape
    best = M.max(axis=0)
    row_flags = (best >= sigma).astype(np.int64)
    col_counts = np.zeros(L, dtype=np.int64)
    winners = M.argmax(axis=0)  # ties: lowest group index (numpy argmax contract)
    for i in range(m):
        if row_flags[i]:
            col_counts[winners[i]] += 1
    return MatchBounds(row_flags=row_flags, col_counts=col_counts, threshold=sigma)


def stage2_loss(probs: Tensor, labels: Tensor) -> Tensor:
    if probs.shape != labels.shape:
        raise ValueError(f"label shape {tuple(labels.shape)} != probability shape {tuple(probs.shape)}")
    return kernel.bce_loss(probs, labels)


def confidence_ranking(
    probs: np.ndarray, ui_ids: Sequence[str], group_ids: Sequence[str]
) -> dict[str, list[tuple[str, float]]]:
    """Per UI node, groups ranked by descending matching probability."""
    out: dict[str, list[tuple[str, float]]] = {}
    for i, ui_id in enumerate(ui_ids):
        ranked = sorted(
            ((group_ids[l], float(probs[l, i])) for l in range(len(group_ids))),
            key=lambda item: -item[1],
        )
        out[ui_id] = ranked
    return out


@dataclass
class PairExample:
    """One supervised matching example: UI rows vs UX groups with binary labels."""

    name: str
    ui_sample: TreeSample
    ux_sample: TreeSample
    group_members: list[list[str]]  # member node ids per group
    labels: np.ndarray  # (L, m) binary, at most one 1 per column


@dataclass
class Stage2Checkpoint:
    stack: MatchStack
    config: Stage2Config
    history: list[dict]

    def save(self, path: str | Path) -> None:
        from .stage1 import _config_dict

        manifest = {
            "stage": 2,
            "seed": self.config.seed,
            "config": _config_dict(self.config),
            "history": self.history,
        }
        kernel.save_checkpoint(path, kernel.module_state(self.stack), manifest)


def load_stage2(path: str | Path) -> Stage2Checkpoint:
    from .stage1 import _config_from_dict

    tensors, manifest = kernel.load_checkpoint(path)
    if manifest.get("stage") != 2:
        raise ValueError(f"{path}: not a stage-2 checkpoint")
    config = _config_from_dict(Stage2Config, manifest["config"])
    stack = MatchStack(seed=config.seed, n_layers=config.n_layers)
    kernel.load_module_state(stack, tensors)
    return Stage2Checkpoint(stack=stack, config=config, history=manifest.get("history", []))


def train_stage2(
    pairs: Sequence[PairExample],
    stage1: Stage1Checkpoint,
    config: Stage2Config,
    provider: Optional[TextEmbedderProvider] = None,
    log_every: int = 0,
) -> Stage2Checkpoint:
    """Trains the GCA stack; the first-stage model stays frozen throughout."""
    if not pairs:
        raise ValueError("empty dataset")
    provider = provider or HashedTextEmbedder()
    kernel.freeze_module(stage1.model)
    stage1.model.eval()
    torch.manual_seed(config.seed)
    stack = MatchStack(seed=config.seed, n_layers=config.n_layers)
    optimizer = kernel.make_adam([p for p in stack.parameters() if p.requires_grad], config.lr)
    rng = np.random.default_rng(config.seed)

    from .stage1 import Stage1Config, augment

    variants = max(1, int(config.augment_variants))
    jitter_config = Stage1Config(mask_prob=0.0, jitter_range=config.jitter_range)
    caches = []
    for v in range(variants):
        cache = []
        for pair in pairs:
            ui_sample, ux_sample = pair.ui_sample, pair.ux_sample
            if v > 0:  # variant 0 is the raw corpus
                ui_sample = augment(ui_sample, jitter_config, rng)
                ux_sample = augment(ux_sample, jitter_config, rng)
            rows = embed_sample(stage1.model, ui_sample, provider).final
            groups_matrix = embed_sample(stage1.model, ux_sample, provider).final
            indices = group_index_tensors(pair.ux_sample.node_ids, pair.group_members)
            labels = torch.as_tensor(pair.labels, dtype=DTYPE)
            cache.append((rows, groups_matrix, indices, labels))
        caches.append(cache)

    history: list[dict] = []
    start = time.time()
    for epoch in range(config.epochs):
        kernel.set_lr(optimizer, kernel.stepped_lr(config.lr, epoch, config.lr_decay, config.lr_decay_every))
        cached = caches[epoch % variants]
        order = rng.permutation(len(cached))
        epoch_losses = []
        for begin in range(0, len(order), config.batch_size):
            optimizer.zero_grad()
            batch_losses = []
            for k in order[begin : begin + config.batch_size]:
                rows, groups_matrix, indices, labels = cached[k]
                probs, _ = stack(rows, groups_matrix, indices)
                batch_losses.append(stage2_loss(probs, labels))
            total = torch.stack(batch_losses).mean()
            if not math.isfinite(float(total.detach())):
                raise _diverged(epoch, history)
            total.backward()
            optimizer.step()
            epoch_losses.append(float(total.detach()))
        history.append({"epoch": epoch, "total": float(np.mean(epoch_losses))})
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            print(f"[stage2] epoch {epoch}: bce {history[-1]['total']:.4f} ({time.time() - start:.0f}s)", flush=True)
    return Stage2Checkpoint(stack=stack, config=config, history=history)


def _diverged(epoch: int, history: list[dict]):
    from .stage1 import TrainingDiverged

    return TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
