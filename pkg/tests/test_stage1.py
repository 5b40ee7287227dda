import numpy as np
import pytest
import torch

from uifuse.nn import DTYPE, check_gradients, module_params
from uifuse.proto import DesignNode, DesignTree, Kind, Semantic
from uifuse.stage1 import (
    RepresentationModel,
    Stage1Checkpoint,
    Stage1Config,
    TreeSample,
    augment,
    embed_sample,
    featurize,
    load_stage1,
    retrieval_score,
    sample_from_tree,
    stage1_loss,
    train_stage1,
)
from uifuse.textembed import HashedTextEmbedder

PROVIDER = HashedTextEmbedder()


def _sample(n: int, seed: int = 0, with_text: bool = True) -> TreeSample:
    rng = np.random.default_rng(seed)
    boxes = np.column_stack(
        [rng.uniform(0, 80, n), rng.uniform(0, 60, n), rng.uniform(4, 30, n), rng.uniform(4, 30, n)]
    )
    texts = [f"label {i}" if with_text and i % 2 == 0 else None for i in range(n)]
    return TreeSample(
        name=f"s{seed}",
        canvas=(100, 80),
        node_ids=[f"n{i}" for i in range(n)],
        boxes=boxes,
        semantics=[list(Semantic)[i % 4] for i in range(n)],
        texts=texts,
        positive_texts=[f"LABEL {i}" if t else None for i, t in enumerate(texts)],
        negative_texts=[["something else", "other words"] if t else [] for t in texts],
    )


def test_sample_from_ui_tree_takes_leaves_only():
    root = DesignNode(id="root", semantic=Semantic.PANEL, rect=(0, 0, 10, 10))
    panel = DesignNode(id="p", semantic=Semantic.PANEL, rect=(0, 0, 8, 8))
    panel.children = [DesignNode(id="img", semantic=Semantic.IMAGE, rect=(1, 1, 2, 2))]
    root.children = [panel, DesignNode(id="txt", semantic=Semantic.TEXT, rect=(5, 5, 3, 2), text="hi")]
    ui = DesignTree(kind=Kind.UI, canvas=(10, 10), root=root)
    sample = sample_from_tree(ui)
    assert sample.node_ids == ["img", "txt"]

    ux = DesignTree(kind=Kind.UX, canvas=(10, 10), root=root)
    assert sample_from_tree(ux).node_ids == ["root", "p", "img", "txt"]


def test_single_node_equals_encoder_output():
    model = RepresentationModel(seed=0)
    batch = featurize([_sample(1)], PROVIDER)
    f_g = model.embed_geometry(batch)
    encoder_only = model.geom_encoder(torch.cat([batch.geometry, batch.sem_onehot], dim=-1))
    assert torch.allclose(f_g, encoder_only)


def test_zero_message_mlp_gives_residual_identity():
    model = RepresentationModel(seed=0)
    with torch.no_grad():
        for mlp in model.message_mlps:
            for layer in mlp.layers:
                layer.weight.zero_()
                layer.bias.zero_()
    pair = featurize([_sample(2)], PROVIDER)
    single_a = featurize([TreeSample(
        name="a", canvas=(100, 80), node_ids=["n0"],
        boxes=_sample(2).boxes[:1], semantics=_sample(2).semantics[:1], texts=[None],
    )], PROVIDER)
    paired = model.embed_geometry(pair)
    solo = model.embed_geometry(single_a)
    assert torch.allclose(paired[0, 0], solo[0, 0])


def test_geometry_permutation_equivariance():
    model = RepresentationModel(seed=1)
    sample = _sample(5)
    perm = [3, 0, 4, 1, 2]
    permuted = TreeSample(
        name="p",
        canvas=sample.canvas,
        node_ids=[sample.node_ids[i] for i in perm],
        boxes=sample.boxes[perm],
        semantics=[sample.semantics[i] for i in perm],
        texts=[sample.texts[i] for i in perm],
    )
    base = model.embed_geometry(featurize([sample], PROVIDER))[0]
    shuffled = model.embed_geometry(featurize([permuted], PROVIDER))[0]
    assert torch.allclose(shuffled, base[perm], atol=1e-10)


def test_fuse_zero_projector_and_shape():
    model = RepresentationModel(seed=0)
    with torch.no_grad():
        model.text_projector.weight.zero_()
        model.text_projector.bias.zero_()
    batch = featurize([_sample(3)], PROVIDER)
    f_g = model.embed_geometry(batch)
    fused = model.fuse(f_g, batch.text_emb)
    assert fused.shape[-1] == 256
    assert torch.equal(fused[..., :128], f_g)
    assert torch.all(fused[..., 128:] == 0)


def test_fuse_gradient_reaches_projector_only_via_text_half():
    model = RepresentationModel(seed=0)
    batch = featurize([_sample(3)], PROVIDER)

    def forward_left():
        f_g = model.embed_geometry(batch)
        fused = model.fuse(f_g, batch.text_emb)
        return fused[..., :128].sum()

    report = check_gradients(
        forward_left,
        {"projector.weight": model.text_projector.weight, "projector.bias": model.text_projector.bias},
        samples_per_tensor=4,
    )
    # left half never touches the projector: numeric and analytic both zero
    assert report.max_rel_error == 0.0

    def forward_right():
        f_g = model.embed_geometry(batch)
        fused = model.fuse(f_g, batch.text_emb)
        return (fused[..., 128:] ** 2).sum()

    report = check_gradients(
        forward_right,
        {"projector.weight": model.text_projector.weight, "projector.bias": model.text_projector.bias},
        tolerance=1e-6,
        samples_per_tensor=6,
    )
    assert report.passed, report.summary()


def test_sequence_permutation_equivariance_with_positions():
    model = RepresentationModel(seed=4)
    sample = _sample(5)
    batch = featurize([sample], PROVIDER)
    fused = model.fuse(model.embed_geometry(batch), batch.text_emb)
    base = model.encode_sequence(fused, batch.positions, batch.mask)

    perm = [2, 0, 4, 3, 1]
    permuted = TreeSample(
        name="p",
        canvas=sample.canvas,
        node_ids=[sample.node_ids[i] for i in perm],
        boxes=sample.boxes[perm],
        semantics=[sample.semantics[i] for i in perm],
        texts=[sample.texts[i] for i in perm],
    )
    batch_p = featurize([permuted], PROVIDER)
    fused_p = model.fuse(model.embed_geometry(batch_p), batch_p.text_emb)
    positions_p = batch.positions[:, perm]  # carry original traversal indices along
    out_p = model.encode_sequence(fused_p, positions_p, batch_p.mask)
    assert torch.allclose(out_p, base[:, perm], atol=1e-9)


def test_encode_singleton_and_position_shift_invariance():
    model = RepresentationModel(seed=0)
    batch = featurize([_sample(1)], PROVIDER)
    out = model(batch)
    assert out["final"].shape == (1, 1, 512)

    batch5 = featurize([_sample(5)], PROVIDER)
    base = model.encode_sequence(model.fuse(model.embed_geometry(batch5), batch5.text_emb),
                                 batch5.positions, batch5.mask)
    shifted = model.encode_sequence(model.fuse(model.embed_geometry(batch5), batch5.text_emb),
                                    batch5.positions + 37, batch5.mask)
    assert float((base - shifted).abs().max()) < 1e-9


@pytest.mark.slow
def test_encode_long_sequence_no_length_cap():
    model = RepresentationModel(seed=0)
    batch = featurize([_sample(200)], PROVIDER)
    out = model(batch)
    assert out["final"].shape == (1, 200, 512)


def test_decode_heads_ranges():
    model = RepresentationModel(seed=2)
    batch = featurize([_sample(6)], PROVIDER)
    out = model(batch)
    assert out["logits"].shape == (1, 6, 9)
    assert torch.all(out["boxes"] > 0) and torch.all(out["boxes"] < 1)
    assert out["text_proj"].shape == (1, 6, 768)


def test_stage1_loss_weights_and_linearity():
    config = Stage1Config()
    assert (config.lambda_semantic, config.lambda_geometry, config.lambda_text) == (0.5, 1.0, 0.1)
    model = RepresentationModel(seed=0)
    batch = featurize([_sample(4)], PROVIDER)
    out = model(batch)
    _, parts = stage1_loss(out, batch, config)
    doubled, parts2 = stage1_loss(out, batch, Stage1Config(lambda_geometry=2.0))
    assert parts2["geometry"] == pytest.approx(parts["geometry"])
    expected = parts["total"] + parts["geometry"]
    assert float(doubled) == pytest.approx(expected, rel=1e-12)


def test_stage1_loss_perfect_reconstruction_leaves_text_floor():
    config = Stage1Config()
    batch = featurize([_sample(4)], PROVIDER)
    out = {
        "logits": torch.nn.functional.one_hot(batch.semantics, 9).to(DTYPE) * 1e4,
        "boxes": batch.geometry.clone(),
        "text_proj": batch.positive_emb.clone(),
        "geometry": None,
        "fused": None,
        "final": None,
    }
    total, parts = stage1_loss(out, batch, config)
    assert parts["semantic"] == pytest.approx(0.0, abs=1e-10)
    assert parts["geometry"] == pytest.approx(0.0, abs=1e-10)
    assert float(total) == pytest.approx(config.lambda_text * parts["text"], rel=1e-9)


def test_augment_identity_and_determinism():
    sample = _sample(5)
    config = Stage1Config(mask_prob=0.0, jitter_range=0.0)
    out = augment(sample, config, np.random.default_rng(0))
    assert np.array_equal(out.boxes, sample.boxes)
    assert out.texts == sample.texts

    config = Stage1Config(mask_prob=0.3, jitter_range=0.05)
    a = augment(sample, config, np.random.default_rng(7))
    b = augment(sample, config, np.random.default_rng(7))
    assert np.array_equal(a.boxes, b.boxes)
    assert a.texts == b.texts


def test_augment_clips_to_canvas():
    sample = _sample(30, seed=3)
    config = Stage1Config(jitter_range=0.5)
    out = augment(sample, config, np.random.default_rng(1))
    W, H = sample.canvas
    assert np.all(out.boxes[:, 0] >= 0) and np.all(out.boxes[:, 0] + out.boxes[:, 2] <= W + 1e-9)
    assert np.all(out.boxes[:, 1] >= 0) and np.all(out.boxes[:, 1] + out.boxes[:, 3] <= H + 1e-9)


def test_config_defaults_mirror_training_recipe():
    config = Stage1Config()
    assert config.batch_size == 4
    assert config.epochs == 300
    assert config.lr == 1e-5
    assert config.lr_decay == 0.2
    assert config.lr_decay_every == 50
    assert config.pad_length == 200


def test_zero_epochs_checkpoint_is_initialization():
    samples = [_sample(3, seed=s) for s in range(2)]
    ckpt = train_stage1(samples, Stage1Config(epochs=0, seed=11))
    fresh = RepresentationModel(seed=11)
    for (name, p), (name2, q) in zip(ckpt.model.named_parameters(), fresh.named_parameters()):
        assert name == name2
        assert torch.equal(p, q)


@pytest.mark.slow
def test_training_reduces_loss():
    samples = [_sample(4, seed=s) for s in range(10)]
    config = Stage1Config(epochs=20, lr=1e-3, seed=0, mask_prob=0.0, jitter_range=0.0)
    ckpt = train_stage1(samples, config)
    totals = [h["total"] for h in ckpt.history]
    assert totals[-1] < totals[0]
    drops = sum(1 for a, b in zip(totals, totals[1:]) if b < a)
    assert drops >= 15  # strictly decreasing in nearly every early epoch


def test_checkpoint_round_trip(tmp_path):
    samples = [_sample(3, seed=s) for s in range(2)]
    ckpt = train_stage1(samples, Stage1Config(epochs=1, seed=5))
    path = tmp_path / "stage1.ckpt"
    ckpt.save(path)
    loaded = load_stage1(path)
    bundle_a = embed_sample(ckpt.model, samples[0], PROVIDER)
    bundle_b = embed_sample(loaded.model, samples[0], PROVIDER)
    assert torch.equal(bundle_a.final, bundle_b.final)
    assert loaded.config.seed == 5


def test_embed_sample_bundle_dims():
    model = RepresentationModel(seed=0)
    bundle = embed_sample(model, _sample(4), PROVIDER)
    assert bundle.geometry.shape == (4, 128)
    assert bundle.text.shape == (4, 768)
    assert bundle.fused.shape == (4, 256)
    assert bundle.final.shape == (4, 512)


def test_text_provider_determinism_and_unknown():
    provider = HashedTextEmbedder()
    a = provider.embed("Press Start")
    b = provider.embed("Press Start")
    assert np.array_equal(a, b)
    assert np.array_equal(provider.embed("OK"), provider.embed("ok"))
    assert np.array_equal(provider.embed(""), provider.unknown_vector)
    assert np.array_equal(provider.embed(None), provider.unknown_vector)
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_retrieval_score_identity_orthogonal_and_hand_case():
    f = torch.eye(3, 512, dtype=DTYPE)
    assert retrieval_score(f, f) == pytest.approx(1.0)

    q = torch.zeros(2, 512, dtype=DTYPE)
    c = torch.zeros(2, 512, dtype=DTYPE)
    q[0, 0] = q[1, 1] = 1.0
    c[0, 2] = c[1, 3] = 1.0
    assert retrieval_score(q, c) == pytest.approx(0.0)

    # 3x2: hand-computed via brute-force enumeration of the cosine matrix
    q = torch.tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=DTYPE)
    c = torch.tensor([[1.0, 0.0], [1.0, -1.0]], dtype=DTYPE)
    qn = torch.nn.functional.normalize(q, dim=-1)
    cn = torch.nn.functional.normalize(c, dim=-1)
    sim = qn @ cn.T
    expected = (sim.max(dim=1).values.mean() + sim.max(dim=0).values.mean()) / 2
    assert retrieval_score(q, c) == pytest.approx(float(expected))
