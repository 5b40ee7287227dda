import numpy as np
import pytest
import torch

torch.set_num_threads(2)

from uifuse.dataset import LoadedPair, write_dataset
from uifuse.pipeline import MatchModels, pair_to_stage2_example, stage1_samples
from uifuse.stage1 import Stage1Config, train_stage1
from uifuse.stage2 import Stage2Config, train_stage2
from uifuse.synth import synthesize_pairs


def pairs_to_loaded(pairs):
    return [
        LoadedPair(p.name, p.ui_tree, p.ux_tree, p.group_labels, p.truth, p.contrastive)
        for p in pairs
    ]


@pytest.fixture(scope="session")
def toy_corpus():
    """Small mixed corpus: easy identity pairs plus mildly perturbed ones."""
    easy = synthesize_pairs(seed=101, count=8, complexity=0.0)
    perturbed = synthesize_pairs(seed=202, count=8, complexity=0.3)
    assets = {}
    for p in easy + perturbed:
        assets.update(p.assets)
    return {"train": pairs_to_loaded(easy + perturbed), "raw": easy + perturbed, "assets": assets}


@pytest.fixture(scope="session")
def toy_models(toy_corpus, tmp_path_factory):
    """Session-trained small-but-real checkpoints (minutes, cached per session)."""
    stage1 = train_stage1(
        stage1_samples(toy_corpus["train"]),
        Stage1Config(epochs=30, lr=1.5e-3, seed=0),
    )
    examples = [pair_to_stage2_example(p) for p in toy_corpus["train"]]
    stage2 = train_stage2(examples, stage1, Stage2Config(epochs=90, lr=1.5e-3, seed=0))
    ckpt_dir = tmp_path_factory.mktemp("checkpoints")
    stage1.save(ckpt_dir / "stage1.ckpt")
    stage2.save(ckpt_dir / "stage2.ckpt")
    return {
        "models": MatchModels(stage1=stage1, stage2=stage2),
        "stage1_path": ckpt_dir / "stage1.ckpt",
        "stage2_path": ckpt_dir / "stage2.ckpt",
    }


@pytest.fixture(scope="session")
def toy_dataset_dir(tmp_path_factory):
    pairs = synthesize_pairs(seed=101, count=4, complexity=0.0)
    directory = tmp_path_factory.mktemp("dataset")
    write_dataset(pairs, directory, meta={"seed": 101, "count": 4, "complexity": 0.0})
    return directory
