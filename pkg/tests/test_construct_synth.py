import numpy as np
import pytest

from uifuse.construct import (
    CorrespondenceMap,
    IntegrationError,
    MatchEntry,
    TypeClashError,
    integrate,
)
from uifuse.dataset import load_dataset, load_dataset_assets, write_dataset
from uifuse.metrics import pixel_metrics
from uifuse.proto import (
    DesignNode,
    DesignTree,
    Kind,
    Semantic,
    structurally_equal,
    validate,
)
from uifuse.render import render
from uifuse.synth import parse_complexity, synthesize_pair, synthesize_pairs


def _ux() -> DesignTree:
    root = DesignNode(id="root", semantic=Semantic.PANEL, rect=(0, 0, 100, 100))
    menu = DesignNode(id="menu", semantic=Semantic.BUTTON, rect=(10, 10, 40, 30), z=1)
    menu.children = [DesignNode(id="label", semantic=Semantic.TEXT, rect=(12, 12, 30, 10), z=2)]
    icon = DesignNode(id="icon", semantic=Semantic.IMAGE, rect=(60, 60, 20, 20), z=3)
    root.children = [menu, icon]
    return DesignTree(kind=Kind.UX, canvas=(100, 100), root=root)


def _ui() -> DesignTree:
    root = DesignNode(id="ui_root", semantic=Semantic.PANEL, rect=(0, 0, 100, 100))
    root.children = [
        DesignNode(id="u_label", semantic=Semantic.TEXT, rect=(13, 11, 28, 9), z=5,
                   text="Play", font=("hero", 32), color=(255, 255, 255, 255)),
        DesignNode(id="u_icon", semantic=Semantic.IMAGE, rect=(61, 59, 18, 22), z=6, texture="icon.png"),
        DesignNode(id="u_bg", semantic=Semantic.IMAGE, rect=(9, 9, 42, 32), z=1, texture="bg.png"),
        DesignNode(id="u_junk", semantic=Semantic.IMAGE, rect=(90, 90, 5, 5), z=9, texture="junk.png"),
    ]
    return DesignTree(kind=Kind.UI, canvas=(100, 100), root=root)


def test_empty_map_is_identity_with_kind_change():
    ux = _ux()
    out = integrate(_ui(), ux, CorrespondenceMap())
    assert out.kind is Kind.GAMEUI
    out.kind = Kind.UX
    assert structurally_equal(out, ux)


def test_copy_contract_text_attributes_verbatim():
    cmap = CorrespondenceMap(entries=[MatchEntry("u_label", "root/menu/label", 0.9)])
    out = integrate(_ui(), _ux(), cmap)
    label = out.node_by_id("label")
    assert label.text == "Play"
    assert label.font == ("hero", 32)
    assert label.color == (255, 255, 255, 255)
    assert label.rect == (13, 11, 28, 9)
    assert label.z == 2  # draw priority stays UX-owned on in-place copies
    assert label.is_leaf


def test_many_to_one_absorbs_children_ordered_by_z():
    cmap = CorrespondenceMap(entries=[
        MatchEntry("u_label", "root/menu", 0.8),
        MatchEntry("u_bg", "root/menu", 0.7),
    ])
    out = integrate(_ui(), _ux(), cmap)
    menu = out.node_by_id("menu")
    added = [c.id for c in menu.children if c.id.startswith("u_")]
    assert added == ["u_bg", "u_label"]  # z=1 before z=5
    bg = out.node_by_id("u_bg")
    assert bg.z == 1 and bg.texture == "bg.png"
    assert out.node_by_id("label") is not None  # original child kept


def test_unmatched_ui_leaves_are_omitted():
    cmap = CorrespondenceMap(entries=[
        MatchEntry("u_icon", "root/icon", 0.99),
        MatchEntry("u_junk", None, 0.1),
    ])
    out = integrate(_ui(), _ux(), cmap)
    assert out.node_by_id("u_junk") is None
    assert out.node_by_id("icon").texture == "icon.png"


def test_type_clash_lists_offending_pair():
    cmap = CorrespondenceMap(entries=[MatchEntry("u_label", "root/icon", 0.5)])
    with pytest.raises(TypeClashError, match="u_label -> icon"):
        integrate(_ui(), _ux(), cmap)


def test_unknown_ids_raise():
    with pytest.raises(IntegrationError, match="unknown or non-leaf"):
        integrate(_ui(), _ux(), CorrespondenceMap(entries=[MatchEntry("ghost", "root/icon", 1.0)]))
    with pytest.raises(IntegrationError, match="unknown UX path"):
        integrate(_ui(), _ux(), CorrespondenceMap(entries=[MatchEntry("u_icon", "root/ghost", 1.0)]))


def test_integration_idempotence():
    cmap = CorrespondenceMap(entries=[
        MatchEntry("u_label", "root/menu/label", 0.9),
        MatchEntry("u_bg", "root/menu", 0.7),
        MatchEntry("u_icon", "root/icon", 0.95),
    ])
    once = integrate(_ui(), _ux(), cmap)
    as_ux = once.clone()
    as_ux.kind = Kind.UX
    twice = integrate(_ui(), as_ux, cmap)
    assert structurally_equal(once, twice)


def test_manual_overrides_auto():
    cmap = CorrespondenceMap(entries=[
        MatchEntry("u_icon", "root/icon", 0.9, "AUTO"),
        MatchEntry("u_icon", None, 1.0, "MANUAL"),
        MatchEntry("u_label", None, 1.0, "MANUAL"),
        MatchEntry("u_label", "root/menu/label", 0.9, "AUTO"),
    ])
    effective = cmap.effective()
    assert effective["u_icon"].ux_node_path is None
    assert effective["u_label"].ux_node_path is None  # AUTO never overwrites MANUAL


def test_jsonl_round_trip(tmp_path):
    cmap = CorrespondenceMap(entries=[
        MatchEntry("a", "root/x", 0.5, "AUTO"),
        MatchEntry("b", None, 0.25, "MANUAL"),
    ])
    path = tmp_path / "map.jsonl"
    cmap.save(path)
    loaded = CorrespondenceMap.load(path)
    assert loaded.entries == cmap.entries
    assert "UNMATCHED" in path.read_text()


# --- synthetic corpus -------------------------------------------------------


def test_parse_complexity():
    assert parse_complexity("medium") == 0.5
    assert parse_complexity("0.3") == 0.3
    assert parse_complexity(0) == 0.0
    with pytest.raises(ValueError):
        parse_complexity(1.5)


def test_complexity_zero_identity():
    rng = np.random.default_rng(0)
    pair = synthesize_pair("p0", rng, 0.0)
    ui_leaves = pair.ui_tree.leaves()
    ux_leaves = pair.ux_tree.leaves()
    assert len(ui_leaves) == len(ux_leaves)
    for ui_leaf, ux_leaf in zip(ui_leaves, ux_leaves):
        assert ui_leaf.id == f"u_{ux_leaf.id}"
        assert ui_leaf.rect == ux_leaf.rect
        assert ui_leaf.z == ux_leaf.z
        assert ui_leaf.semantic == ux_leaf.semantic
    targets = {e.ui_node_id: e.ux_node_path for e in pair.truth.entries}
    for ux_leaf in ux_leaves:
        assert targets[f"u_{ux_leaf.id}"] == pair.ux_tree.path_of(ux_leaf.id)


def test_determinism():
    a = synthesize_pairs(seed=7, count=3, complexity="medium")
    b = synthesize_pairs(seed=7, count=3, complexity="medium")
    from uifuse.proto import serialize_protocol

    for pa, pb in zip(a, b):
        assert serialize_protocol(pa.ui_tree) == serialize_protocol(pb.ui_tree)
        assert serialize_protocol(pa.ux_tree) == serialize_protocol(pb.ux_tree)
        assert pa.truth.entries == pb.truth.entries
        assert set(pa.assets) == set(pb.assets)
        for k in pa.assets:
            assert np.array_equal(pa.assets[k], pb.assets[k])


def test_generated_trees_validate_and_truths_obey_rules():
    pairs = synthesize_pairs(seed=3, count=40, complexity="medium")
    for pair in pairs:
        assert not [d for d in validate(pair.ui_tree) if d.severity == "ERROR"]
        assert not [d for d in validate(pair.ux_tree) if d.severity == "ERROR"]
        ui_ids = [e.ui_node_id for e in pair.truth.entries]
        assert len(ui_ids) == len(set(ui_ids))  # Rule 1: each UI node once
        assert len(ui_ids) <= len(pair.ui_tree.leaves())
        secondary = {c.id for c in pair.ux_tree.root.children}
        for ui_id, gid in pair.group_labels.items():
            assert gid is None or gid in secondary
        groups = {c.id for c in pair.ux_tree.root.children}
        assert 2 <= len(groups) <= 6


def test_complexity_zero_pipeline_renders_pixel_identical():
    for k in range(3):
        rng = np.random.default_rng(100 + k)
        pair = synthesize_pair(f"p{k}", rng, 0.0)
        gameui = integrate(pair.ui_tree, pair.ux_tree, pair.truth)
        truth_img = render(pair.ui_tree, pair.assets)
        built_img = render(gameui, pair.assets, target_size=(truth_img.width, truth_img.height))
        rmse, per = pixel_metrics(truth_img, built_img)
        assert per == 0.0
        assert rmse == 0.0


def test_medium_pairs_have_mismatch_phenomenology():
    pairs = synthesize_pairs(seed=11, count=30, complexity="medium")
    any_unmatched = any(e.ux_node_path is None for p in pairs for e in p.truth.entries)
    any_many_to_one = False
    any_dropped = False
    for pair in pairs:
        non_leaf_targets = 0
        matched_ux = set()
        for entry in pair.truth.entries:
            if entry.ux_node_path is None:
                continue
            node = pair.ux_tree.node_by_path(entry.ux_node_path)
            matched_ux.add(node.id)
            if not node.is_leaf:
                non_leaf_targets += 1
        if non_leaf_targets:
            any_many_to_one = True
        if {l.id for l in pair.ux_tree.leaves()} - matched_ux:
            any_dropped = True
    assert any_unmatched and any_many_to_one and any_dropped


def test_truth_integration_keeps_per_low_at_medium():
    pairs = synthesize_pairs(seed=21, count=8, complexity="medium")
    for pair in pairs:
        gameui = integrate(pair.ui_tree, pair.ux_tree, pair.truth)
        truth_img = render(pair.ui_tree, pair.assets)
        built = render(gameui, pair.assets, target_size=(truth_img.width, truth_img.height))
        _, per = pixel_metrics(truth_img, built)
        assert per <= 0.02, f"{pair.name}: truth-map PER {per}"


def test_dataset_write_load_round_trip(tmp_path):
    pairs = synthesize_pairs(seed=5, count=4, complexity=0.5)
    out = tmp_path / "ds"
    write_dataset(pairs, out, meta={"seed": 5, "count": 4, "complexity": 0.5})
    loaded = load_dataset(out)
    assert [p.name for p in loaded] == [p.name for p in pairs]
    for orig, back in zip(pairs, loaded):
        assert structurally_equal(orig.ui_tree, back.ui_tree)
        assert structurally_equal(orig.ux_tree, back.ux_tree)
        assert back.labels == orig.group_labels
        assert back.truth is not None
        assert {e.ui_node_id for e in back.truth.entries} == {e.ui_node_id for e in orig.truth.entries}
        for node_id, (pos, neg) in orig.contrastive.items():
            assert back.contrastive[node_id] == (pos, neg)
    assets = load_dataset_assets(out)
    for pair in pairs:
        for name, tex in pair.assets.items():
            assert np.array_equal(assets[name], tex)
