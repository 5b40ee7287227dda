"""End-to-end matching pipeline: embeddings -> grouped probabilities ->
constrained assignment, applied recursively down the UX hierarchy.

Level 0 matches UI leaves against secondary-level groups. Every solved
group spawns a subproblem between its assigned UI leaves and the children
of the group root, until the columns are leaves or no UI nodes remain. UI
leaves that fall below the matchability threshold are UNMATCHED at level 0
and absorbed by the subtree root deeper down (a non-leaf keeps its own
background image that way). Infeasible or budget-exhausted levels surface
as diagnostics and leave their UI nodes UNMATCHED.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .construct import CorrespondenceMap, MatchEntry, TypeClashError, integrate
from .dataset import LoadedPair
from .metrics import EvalReport, SampleMetrics, matching_metrics, pixel_metrics
from .proto import DesignNode, DesignTree, Kind
from .relations import detect_ambiguity_pairs, group_level_codes, leaf_relations
from .render import render
from .solver import (
    AssignmentProblem,
    BudgetExhausted,
    InfeasibleProblem,
    build_penalties,
    problem_to_json,
    solve,
)
from .stage1 import Stage1Checkpoint, TreeSample, embed_sample, sample_from_tree
from .stage2 import (
    Stage2Checkpoint,
    PairExample,
    cost_matrix,
    derive_bounds,
    group_index_tensors,
    match_forward,
)
from .textembed import HashedTextEmbedder, TextEmbedderProvider


@dataclass
class MatchConfig:
    sigma: float = 0.5
    gamma: float = 1.0
    tau: Optional[float] = None  # None -> group count of the level
    max_expansions: int = 5_000_000
    time_budget: float = 30.0
    regime: str = "equality"


@dataclass
class MatchModels:
    stage1: Stage1Checkpoint
    stage2: Stage2Checkpoint
    provider: TextEmbedderProvider = field(default_factory=HashedTextEmbedder)

    def __post_init__(self):
        self.stage1.model.eval()
        self.stage2.stack.eval()
        for p in self.stage1.model.parameters():
            p.requires_grad_(False)


@dataclass
class LevelStats:
    scope: str
    depth: int
    m: int
    L: int
    embed_seconds: float  # frozen stage-1 representation time
    match_seconds: float  # stage-2 forward + bounds + ambiguity detection
    solve_seconds: float
    expansions: int
    optimal: bool
    penalties: int


@dataclass
class MatchOutcome:
    cmap: CorrespondenceMap
    levels: list[LevelStats] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)  # JSON dumps per level
    diagnostics: list[str] = field(default_factory=list)
    # level-0 probability matrix exported as user-facing confidences:
    # {"groups": [...], "ui_ids": [...], "probs": L x m nested lists}
    level0: Optional[dict] = None

    @property
    def optimal(self) -> bool:
        return all(level.optimal for level in self.levels)


def _leaves_sample(leaves: list[DesignNode], canvas) -> TreeSample:
    return TreeSample(
        name="ui-leaves",
        canvas=canvas,
        node_ids=[n.id for n in leaves],
        boxes=np.array([n.rect for n in leaves], dtype=np.float64).reshape(-1, 4),
        semantics=[n.semantic for n in leaves],
        texts=[n.text for n in leaves],
    )


@dataclass
class LevelResult:
    probs: np.ndarray  # (L, m)
    assigned: dict[int, int]  # row -> group index
    unassigned: list[int]
    stats: LevelStats
    problem_json: str


def match_level(
    ui_leaves: list[DesignNode],
    subtree_root: DesignNode,
    ui_canvas: tuple[int, int],
    ux_canvas: tuple[int, int],
    models: MatchModels,
    config: MatchConfig,
    scope: str = "level0",
    depth: int = 0,
) -> LevelResult:
    """One node-to-group matching problem plus its constrained solve."""
    t0 = time.perf_counter()
    group_roots = subtree_root.children
    if not group_roots:
        raise ValueError(f"{scope}: subtree root {subtree_root.id!r} has no children")
    ux_subtree = DesignTree(kind=Kind.UX, canvas=ux_canvas, root=subtree_root)

    with torch.no_grad():
        rows = embed_sample(models.stage1.model, _leaves_sample(ui_leaves, ui_canvas), models.provider).final
        cols = embed_sample(models.stage1.model, sample_from_tree(ux_subtree, name=scope), models.provider).final
    embed_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    with torch.no_grad():
        node_ids = [n.id for n in ux_subtree.walk()]
        indices = group_index_tensors(node_ids, [[n.id for n in g.walk()] for g in group_roots])
        probs = match_forward(models.stage2.stack, rows, cols, indices).numpy()

    bounds = derive_bounds(probs, config.sigma)
    costs = cost_matrix(probs)
    relations = leaf_relations(ui_leaves, ui_canvas)
    col_h, col_r = group_level_codes(ux_subtree, list(group_roots))
    pairs = detect_ambiguity_pairs(relations.hierarchy, relations.rendering, col_h, col_r)
    tau = config.tau if config.tau is not None else float(len(group_roots))
    penalties = build_penalties(pairs, costs, config.gamma, tau) if config.gamma > 0 else []
    problem = AssignmentProblem(
        costs=costs,
        row_flags=bounds.row_flags,
        col_counts=bounds.col_counts,
        penalties=penalties,
        gamma=config.gamma,
        tau=tau,
        regime=config.regime,
        sigma=config.sigma,
        max_expansions=config.max_expansions,
        time_budget=config.time_budget,
    )
    match_seconds = time.perf_counter() - t0
    assignment = solve(problem)
    assigned = {
        int(r): int(np.argmax(assignment.matrix[r]))
        for r in np.flatnonzero(assignment.matrix.sum(axis=1))
    }
    unassigned = [i for i in range(len(ui_leaves)) if i not in assigned]
    stats = LevelStats(
        scope=scope,
        depth=depth,
        m=len(ui_leaves),
        L=len(group_roots),
        embed_seconds=embed_seconds,
        match_seconds=match_seconds,
        solve_seconds=assignment.wall_time,
        expansions=assignment.expansions,
        optimal=assignment.optimal,
        penalties=len(penalties),
    )
    return LevelResult(
        probs=probs,
        assigned=assigned,
        unassigned=unassigned,
        stats=stats,
        problem_json=problem_to_json(problem),
    )


def recursive_match(
    ui_tree: DesignTree,
    ux_tree: DesignTree,
    models: MatchModels,
    config: Optional[MatchConfig] = None,
) -> MatchOutcome:
    config = config or MatchConfig()
    outcome = MatchOutcome(cmap=CorrespondenceMap(provenance={
        "sigma": config.sigma,
        "gamma": config.gamma,
        "stage1_seed": models.stage1.config.seed,
        "stage2_seed": models.stage2.config.seed,
    }))

    def emit(leaf: DesignNode, path: Optional[str], confidence: float) -> None:
        outcome.cmap.entries.append(MatchEntry(leaf.id, path, float(confidence), "AUTO"))

    def recurse(leaves: list[DesignNode], subtree_root: DesignNode, depth: int,
                inherited: dict[str, float], scope: str) -> None:
        if not leaves:
            return
        if subtree_root.is_leaf:
            path = ux_tree.path_of(subtree_root.id)
            for leaf in leaves:
                emit(leaf, path, inherited.get(leaf.id, 1.0))
            return
        try:
            level = match_level(leaves, subtree_root, ui_tree.canvas, ux_tree.canvas,
                                models, config, scope=scope, depth=depth)
        except (InfeasibleProblem, BudgetExhausted) as exc:
            outcome.diagnostics.append(f"{scope}: {exc}")
            for leaf in leaves:
                emit(leaf, None, 0.0)
            return
        outcome.levels.append(level.stats)
        outcome.problems.append(level.problem_json)
        if depth == 0:
            outcome.level0 = {
                "groups": [c.id for c in subtree_root.children],
                "ui_ids": [leaf.id for leaf in leaves],
                "probs": level.probs.tolist(),
            }

        for i in level.unassigned:
            leaf = leaves[i]
            if depth == 0:
                emit(leaf, None, float(level.probs[:, i].max(initial=0.0)))
            else:  # absorbed by the subtree root (e.g. its background image)
                emit(leaf, ux_tree.path_of(subtree_root.id), inherited.get(leaf.id, 1.0))

        for l, group_root in enumerate(subtree_root.children):
            chosen = [i for i, gl in level.assigned.items() if gl == l]
            if not chosen:
                continue
            subset = [leaves[i] for i in chosen]
            confidences = {leaves[i].id: float(level.probs[l, i]) for i in chosen}
            if group_root.is_leaf:
                path = ux_tree.path_of(group_root.id)
                for leaf in subset:
                    emit(leaf, path, confidences[leaf.id])
            else:
                recurse(subset, group_root, depth + 1, confidences, f"{scope}/{group_root.id}")

    recurse(ui_tree.leaves(), ux_tree.root, 0, {}, "level0")
    return outcome


def cosine_similarity_matrix(a: torch.Tensor, b: torch.Tensor) -> np.ndarray:
    an = torch.nn.functional.normalize(a, dim=-1, eps=1e-12)
    bn = torch.nn.functional.normalize(b, dim=-1, eps=1e-12)
    return (an @ bn.T).numpy()


def build_n2n_problem(
    ui_tree: DesignTree,
    ux_tree: DesignTree,
    models: MatchModels,
    config: Optional[MatchConfig] = None,
) -> AssignmentProblem:
    """Diagnostic node-to-node formulation (no grouping).

    Columns are individual non-root UX nodes; pseudo-probabilities are
    rescaled cosine similarities. With hierarchy/rendering penalties this
    grows quadratically and is expected to exhaust realistic budgets.
    """
    from .relations import tree_relations

    config = config or MatchConfig()
    leaves = ui_tree.leaves()
    with torch.no_grad():
        rows = embed_sample(models.stage1.model, _leaves_sample(leaves, ui_tree.canvas), models.provider).final
        cols_all = embed_sample(models.stage1.model, sample_from_tree(ux_tree), models.provider).final
    nodes = list(ux_tree.walk())
    keep = [k for k, n in enumerate(nodes) if k != 0]
    probs = (cosine_similarity_matrix(rows, cols_all[keep]) + 1.0) / 2.0  # (m, n-1)

    bounds = derive_bounds(probs.T, config.sigma)
    costs = 1.0 - probs
    relations = leaf_relations(leaves, ui_tree.canvas)
    ux_rel = tree_relations(ux_tree)
    col_h = ux_rel.hierarchy[np.ix_(keep, keep)]
    col_r = ux_rel.rendering[np.ix_(keep, keep)]
    pairs = detect_ambiguity_pairs(relations.hierarchy, relations.rendering, col_h, col_r)
    tau = config.tau if config.tau is not None else float(len(keep))
    penalties = build_penalties(pairs, costs, config.gamma, tau) if config.gamma > 0 else []
    return AssignmentProblem(
        costs=costs,
        row_flags=bounds.row_flags,
        col_counts=bounds.col_counts,
        penalties=penalties,
        gamma=config.gamma,
        tau=tau,
        max_expansions=config.max_expansions,
        time_budget=config.time_budget,
    )


def group_of_path(path: Optional[str]) -> str:
    """Secondary-group class label of a full node path (UNMATCHED for None)."""
    if path is None:
        return "UNMATCHED"
    parts = path.split("/")
    return parts[1] if len(parts) > 1 else parts[0]


def predicted_group_labels(cmap: CorrespondenceMap) -> dict[str, str]:
    return {ui: group_of_path(e.ux_node_path) for ui, e in cmap.effective().items()}


def sanitize_for_integration(ui_tree: DesignTree, ux_tree: DesignTree,
                             cmap: CorrespondenceMap) -> tuple[DesignTree, list[str]]:
    """Integrate, dropping semantically clashing entries instead of failing."""
    dropped: list[str] = []
    current = cmap
    for _ in range(1 + len(cmap.entries)):
        try:
            return integrate(ui_tree, ux_tree, current), dropped
        except TypeClashError as exc:
            bad = {ui for ui, _ in exc.pairs}
            dropped.extend(sorted(bad))
            current = CorrespondenceMap(
                entries=[e for e in current.entries if e.ui_node_id not in bad],
                provenance=current.provenance,
            )
    raise RuntimeError("sanitize_for_integration failed to converge")


def pair_to_stage2_example(pair: LoadedPair) -> PairExample:
    """Supervised node-to-group example from a dataset pair and its labels."""
    from .relations import partition_secondary_groups

    ui_sample = sample_from_tree(pair.ui_tree, name=f"{pair.name}-ui", contrastive=pair.contrastive)
    ux_sample = sample_from_tree(pair.ux_tree, name=f"{pair.name}-ux", contrastive=pair.contrastive)
    partition = partition_secondary_groups(pair.ux_tree)
    group_pos = {gid: k for k, gid in enumerate(partition.group_ids)}
    labels = np.zeros((partition.L, len(ui_sample.node_ids)))
    for col, ui_id in enumerate(ui_sample.node_ids):
        target = pair.labels.get(ui_id)
        if target is not None:
            labels[group_pos[target], col] = 1.0
    return PairExample(
        name=pair.name,
        ui_sample=ui_sample,
        ux_sample=ux_sample,
        group_members=partition.members,
        labels=labels,
    )


def stage1_samples(pairs: list[LoadedPair]) -> list[TreeSample]:
    samples = []
    for pair in pairs:
        samples.append(sample_from_tree(pair.ui_tree, name=f"{pair.name}-ui", contrastive=pair.contrastive))
        samples.append(sample_from_tree(pair.ux_tree, name=f"{pair.name}-ux", contrastive=pair.contrastive))
    return samples


def evaluate_pairs(
    pairs: list[LoadedPair],
    models: MatchModels,
    assets: dict[str, np.ndarray],
    config: Optional[MatchConfig] = None,
    jobs: int = 1,
) -> tuple[EvalReport, list[MatchOutcome]]:
    """Match, integrate, and render every pair; aggregate fidelity metrics."""
    config = config or MatchConfig()

    def run_one(pair: LoadedPair) -> tuple[SampleMetrics, MatchOutcome]:
        t0 = time.perf_counter()
        outcome = recursive_match(pair.ui_tree, pair.ux_tree, models, config)
        match_seconds = time.perf_counter() - t0
        predicted = predicted_group_labels(outcome.cmap)
        truth = {ui: (gid if gid is not None else "UNMATCHED") for ui, gid in pair.labels.items()}
        precision, recall, f1 = matching_metrics(predicted, truth)
        truth_render = render(pair.ui_tree, assets)
        gameui, dropped = sanitize_for_integration(pair.ui_tree, pair.ux_tree, outcome.cmap)
        if dropped:
            outcome.diagnostics.append(f"integration dropped clashing entries: {dropped}")
        constructed = render(gameui, assets, target_size=(truth_render.width, truth_render.height))
        rmse, per = pixel_metrics(truth_render, constructed)
        metrics = SampleMetrics(
            name=pair.name, precision=precision, recall=recall, f1=f1,
            rmse=rmse, per=per, pixels=truth_render.width * truth_render.height,
            match_seconds=match_seconds,
        )
        return metrics, outcome

    results: list[tuple[SampleMetrics, MatchOutcome]] = []
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, pairs))
    else:
        results = [run_one(p) for p in pairs]

    report = EvalReport(samples=[m for m, _ in results])
    return report, [o for _, o in results]
