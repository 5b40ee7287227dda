import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uifuse.proto import DesignNode, DesignTree, Kind, Semantic
from uifuse.relations import (
    compute_hierarchy_codes,
    compute_render_codes,
    compute_spatial_relation,
    detect_ambiguity_pairs,
    group_level_codes,
    leaf_relations,
    partition_secondary_groups,
    simulate_ui_hierarchy,
    spatial_matrix,
    tree_relations,
)


def _tree(children_spec) -> DesignTree:
    """children_spec: nested tuples (id, semantic, rect, z, children)."""

    def build(spec):
        nid, semantic, rect, z, kids = spec
        return DesignNode(id=nid, semantic=semantic, rect=rect, z=z, children=[build(k) for k in kids])

    return DesignTree(kind=Kind.UX, canvas=(10, 10), root=build(children_spec))


def test_spatial_identity():
    rel = compute_spatial_relation((1, 2, 3, 4), (1, 2, 3, 4), (10, 10))
    assert np.allclose(rel, [0, 0, 1, 0, 0])


def test_spatial_known_iou_and_translation():
    rel = compute_spatial_relation((0, 0, 2, 2), (1, 1, 2, 2), (10, 10))
    assert rel[0] == pytest.approx(0.1)
    assert rel[1] == pytest.approx(0.1)
    assert rel[2] == pytest.approx(1.0 / 7.0)


def test_spatial_orientation_convention():
    # j directly right of i -> 0; j directly below -> 0.5 (y grows downward)
    right = compute_spatial_relation((0, 0, 2, 2), (5, 0, 2, 2), (10, 10))
    below = compute_spatial_relation((0, 0, 2, 2), (0, 5, 2, 2), (10, 10))
    assert right[4] == pytest.approx(0.0)
    assert below[4] == pytest.approx(0.5)


def test_spatial_degenerate_box_does_not_blow_up():
    rel = compute_spatial_relation((0, 0, 2, 0), (1, 1, 2, 2), (10, 10))
    assert np.all(np.isfinite(rel))


def test_spatial_matrix_ranges():
    rng = np.random.default_rng(3)
    boxes = np.column_stack(
        [rng.uniform(0, 8, 12), rng.uniform(0, 8, 12), rng.uniform(0.1, 4, 12), rng.uniform(0.1, 4, 12)]
    )
    rel = spatial_matrix(boxes, (10, 10))
    assert rel.shape == (12, 12, 5)
    assert np.all(rel[..., 0] >= -1) and np.all(rel[..., 0] <= 1)
    assert np.all(rel[..., 1] >= -1) and np.all(rel[..., 1] <= 1)
    assert np.all(rel[..., 2] >= 0) and np.all(rel[..., 2] <= 1)
    assert np.all(rel[..., 4] >= -1) and np.all(rel[..., 4] <= 1)


def test_hierarchy_codes_basics():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, [
        ("a", Semantic.PANEL, (0, 0, 5, 5), 1, [("b", Semantic.IMAGE, (1, 1, 2, 2), 2, [])]),
        ("c", Semantic.IMAGE, (6, 6, 2, 2), 3, []),
    ]))
    codes = compute_hierarchy_codes(tree)
    order = tree_relations(tree).node_order
    r, a, b, c = order["r"], order["a"], order["b"], order["c"]
    assert codes[r, b] == 0 and codes[b, r] == 1
    assert codes[a, b] == 0 and codes[b, a] == 1
    assert codes[a, c] == 2 and codes[c, a] == 2


def test_hierarchy_codes_match_transitive_closure_oracle():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, [
        ("a", Semantic.PANEL, (0, 0, 5, 5), 1, [
            ("b", Semantic.IMAGE, (1, 1, 2, 2), 2, []),
            ("d", Semantic.TEXT, (3, 3, 1, 1), 4, []),
        ]),
        ("c", Semantic.IMAGE, (6, 6, 2, 2), 3, []),
    ]))
    nodes = list(tree.walk())
    n = len(nodes)
    # Oracle: reachability closure over parent links.
    parent = {}
    for node in nodes:
        for ch in node.children:
            parent[ch.id] = node.id
    ids = [node.id for node in nodes]
    reach = np.zeros((n, n), dtype=bool)
    for j, nid in enumerate(ids):
        cur = nid
        while cur in parent:
            cur = parent[cur]
            reach[ids.index(cur), j] = True
    codes = compute_hierarchy_codes(tree)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            expected = 0 if reach[i, j] else (1 if reach[j, i] else 2)
            assert codes[i, j] == expected


def test_simulate_ui_hierarchy():
    boxes = np.array([[0, 0, 10, 10], [2, 2, 3, 3], [20, 20, 2, 2], [0, 0, 10, 10]], dtype=float)
    codes = simulate_ui_hierarchy(boxes)
    assert codes[0, 1] == 0 and codes[1, 0] == 1
    assert codes[0, 2] == 2 and codes[2, 0] == 2
    # identical boxes: unrelated both ways
    assert codes[0, 3] == 2 and codes[3, 0] == 2


def test_render_codes():
    boxes = np.array([[0, 0, 4, 4], [2, 2, 4, 4], [100, 100, 2, 2]], dtype=float)
    codes = compute_render_codes(boxes, [5, 2, 9])
    assert codes[0, 1] == 0 and codes[1, 0] == 1  # overlap, z 5 over z 2
    assert codes[0, 2] == 2 and codes[2, 0] == 2  # no overlap regardless of z
    # equal z: document-later node draws on top
    codes_eq = compute_render_codes(boxes[:2], [1, 1])
    assert codes_eq[1, 0] == 0 and codes_eq[0, 1] == 1


def test_edge_touching_boxes_do_not_overlap():
    boxes = np.array([[0, 0, 2, 2], [2, 0, 2, 2]], dtype=float)
    codes = compute_render_codes(boxes, [1, 0])
    assert codes[0, 1] == 2


def test_antisymmetry_property():
    rng = np.random.default_rng(11)
    boxes = np.column_stack(
        [rng.uniform(0, 8, 15), rng.uniform(0, 8, 15), rng.uniform(0.5, 5, 15), rng.uniform(0.5, 5, 15)]
    )
    for codes in (simulate_ui_hierarchy(boxes), compute_render_codes(boxes, rng.integers(0, 5, 15))):
        n = codes.shape[0]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                assert (codes[i, j], codes[j, i]) in {(0, 1), (1, 0), (2, 2)}


def test_simulated_hierarchy_agrees_with_tree_on_nested_layout():
    # Lay out each subtree strictly inside its parent's box, siblings disjoint:
    # containment codes over all node boxes must equal the tree codes.
    tree = _tree(("r", Semantic.PANEL, (0, 0, 100, 100), 0, [
        ("a", Semantic.PANEL, (5, 5, 40, 40), 1, [
            ("a1", Semantic.IMAGE, (10, 10, 10, 10), 2, []),
            ("a2", Semantic.IMAGE, (25, 25, 12, 12), 3, []),
        ]),
        ("b", Semantic.PANEL, (50, 50, 45, 45), 4, [("b1", Semantic.TEXT, (60, 60, 20, 10), 5, [])]),
    ]))
    boxes = np.array([n.rect for n in tree.walk()], dtype=float)
    assert np.array_equal(simulate_ui_hierarchy(boxes), compute_hierarchy_codes(tree))


def test_partition_secondary_groups():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, [
        ("A", Semantic.PANEL, (0, 0, 5, 5), 1, [
            ("A1", Semantic.IMAGE, (0, 0, 2, 2), 2, []),
            ("A2", Semantic.TEXT, (2, 2, 2, 2), 3, []),
        ]),
        ("B", Semantic.BUTTON, (6, 6, 3, 3), 4, []),
    ]))
    part = partition_secondary_groups(tree)
    assert part.L == 2
    assert part.group_ids == ["A", "B"]
    assert part.members[0] == ["A", "A1", "A2"]
    assert part.members[1] == ["B"]
    # disjoint and covering all non-root nodes
    flat = [m for ms in part.members for m in ms]
    assert len(flat) == len(set(flat)) == len(tree) - 1


def test_partition_chain_single_group():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, [
        ("A", Semantic.PANEL, (0, 0, 5, 5), 1, [
            ("B", Semantic.PANEL, (0, 0, 4, 4), 2, [("C", Semantic.IMAGE, (0, 0, 2, 2), 3, [])]),
        ]),
    ]))
    part = partition_secondary_groups(tree)
    assert part.L == 1
    assert part.members[0] == ["A", "B", "C"]


def test_partition_requires_children():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, []))
    with pytest.raises(ValueError, match="no groups"):
        partition_secondary_groups(tree)


def test_partition_three_secondary_nodes():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 10, 10), 0, [
        ("blue", Semantic.PANEL, (0, 0, 3, 3), 1, [("b1", Semantic.IMAGE, (0, 0, 1, 1), 2, [])]),
        ("yellow", Semantic.PANEL, (4, 0, 3, 3), 3, []),
        ("green", Semantic.LIST, (0, 4, 3, 3), 4, [("g1", Semantic.TEXT, (1, 5, 1, 1), 5, [])]),
    ]))
    part = partition_secondary_groups(tree)
    assert part.L == 3
    assert part.group_ids == ["blue", "yellow", "green"]


def test_detect_hierarchy_ambiguity():
    row_h = np.array([[2, 0], [1, 2]], dtype=np.int8)  # row 0 ancestor of row 1
    row_r = np.full((2, 2), 2, dtype=np.int8)
    col_h = np.array([[2, 1], [0, 2]], dtype=np.int8)  # col 0 descendant of col 1
    col_r = np.full((2, 2), 2, dtype=np.int8)
    pairs = detect_ambiguity_pairs(row_h, row_r, col_h, col_r)
    assert len(pairs) == 1
    assert pairs[0].kind == "HIERARCHY"
    assert pairs[0].ui_pair == (0, 1)
    assert pairs[0].column_pair == (0, 1)


def test_detect_rendering_ambiguity():
    row_h = np.full((2, 2), 2, dtype=np.int8)
    row_r = np.array([[2, 0], [1, 2]], dtype=np.int8)  # row 0 rendered after row 1
    col_h = np.full((2, 2), 2, dtype=np.int8)
    col_r = np.array([[2, 1], [0, 2]], dtype=np.int8)  # col 0 rendered before col 1
    pairs = detect_ambiguity_pairs(row_h, row_r, col_h, col_r)
    assert len(pairs) == 1
    assert pairs[0].kind == "RENDERING"


def test_no_overlap_no_pairs():
    flat = np.full((3, 3), 2, dtype=np.int8)
    assert detect_ambiguity_pairs(flat, flat, flat, flat) == []


def test_identity_columns_produce_no_pairs():
    # When column relations mirror row relations, the identity assignment
    # activates nothing: every listed pair must invert, not preserve.
    rng = np.random.default_rng(5)
    boxes = np.column_stack(
        [rng.uniform(0, 8, 6), rng.uniform(0, 8, 6), rng.uniform(0.5, 4, 6), rng.uniform(0.5, 4, 6)]
    )
    h = simulate_ui_hierarchy(boxes)
    r = compute_render_codes(boxes, rng.integers(0, 3, 6))
    for pair in detect_ambiguity_pairs(h, r, h, r):
        i, j = pair.ui_pair
        ci, cj = pair.column_pair
        assert (i, j) != (ci, cj)


def test_group_level_codes():
    tree = _tree(("r", Semantic.PANEL, (0, 0, 100, 100), 0, [
        ("big", Semantic.PANEL, (0, 0, 60, 60), 1, [("bg", Semantic.IMAGE, (1, 1, 58, 58), 2, [])]),
        ("inner", Semantic.PANEL, (10, 10, 20, 20), 5, [("x", Semantic.IMAGE, (12, 12, 5, 5), 6, [])]),
        ("far", Semantic.PANEL, (80, 80, 10, 10), 3, []),
    ]))
    h, r = group_level_codes(tree, tree.root.children)
    assert h[0, 1] == 0 and h[1, 0] == 1  # big contains inner
    assert h[0, 2] == 2
    assert r[1, 0] == 0 and r[0, 1] == 1  # inner subtree draws later (max z 6 > 2)
    assert r[0, 2] == 2  # disjoint boxes


def test_leaf_relations_bundle():
    leaves = [
        DesignNode(id="a", semantic=Semantic.IMAGE, rect=(0, 0, 10, 10), z=0),
        DesignNode(id="b", semantic=Semantic.IMAGE, rect=(1, 1, 2, 2), z=1),
    ]
    rel = leaf_relations(leaves, (10, 10))
    assert rel.n_nodes == 2
    assert rel.hierarchy[0, 1] == 0
    assert rel.rendering[1, 0] == 0  # b draws later and overlaps
    assert rel.node_order == {"a": 0, "b": 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=10_000))
def test_spatial_self_relation_property(n, seed):
    rng = np.random.default_rng(seed)
    boxes = np.column_stack(
        [rng.uniform(0, 8, n), rng.uniform(0, 8, n), rng.uniform(0.1, 5, n), rng.uniform(0.1, 5, n)]
    )
    rel = spatial_matrix(boxes, (10, 10))
    for i in range(n):
        assert np.allclose(rel[i, i], [0, 0, 1, 0, 0])
