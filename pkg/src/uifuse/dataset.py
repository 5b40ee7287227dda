"""Dataset directory format: paired protocol files plus JSONL sidecars.

Layout:
    dataset/
      meta.json             generator provenance (seed, count, complexity)
      assets/               shared PNG textures referenced by the UI files
      <pair>.uiproto        UI design, canonical form
      <pair>.uxproto        UX design, canonical form
      labels.jsonl          one record per pair: UI leaf -> secondary node id
                            (null = unmatchable); the training/annotation format
      truth.jsonl           full-path correspondence per pair (oracle/eval aid)
      contrastive.jsonl     positive/negative sentences per text node
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .construct import CorrespondenceMap
from .proto import DesignTree, parse_protocol, serialize_protocol
from .synth import SyntheticPair


@dataclass
class LoadedPair:
    name: str
    ui_tree: DesignTree
    ux_tree: DesignTree
    labels: dict[str, Optional[str]]  # UI leaf id -> secondary node id
    truth: Optional[CorrespondenceMap] = None
    contrastive: dict[str, tuple[list[str], list[str]]] = field(default_factory=dict)


def write_dataset(pairs: list[SyntheticPair], directory: str | Path, meta: Optional[dict] = None) -> Path:
    directory = Path(directory)
    (directory / "assets").mkdir(parents=True, exist_ok=True)
    labels_lines, truth_lines, contrastive_lines = [], [], []
    for pair in pairs:
        (directory / f"{pair.name}.uiproto").write_text(serialize_protocol(pair.ui_tree), encoding="utf-8")
        (directory / f"{pair.name}.uxproto").write_text(serialize_protocol(pair.ux_tree), encoding="utf-8")
        for tex_name, tex in pair.assets.items():
            Image.fromarray(tex, mode="RGBA").save(directory / "assets" / tex_name, format="PNG")
        labels_lines.append(json.dumps({
            "pair": pair.name,
            "ui": f"{pair.name}.uiproto",
            "ux": f"{pair.name}.uxproto",
            "entries": [{"ui": k, "target": v} for k, v in sorted(pair.group_labels.items())],
        }))
        truth_lines.append(json.dumps({
            "pair": pair.name,
            "entries": [
                {"ui": e.ui_node_id, "ux": e.ux_node_path or "UNMATCHED",
                 "confidence": e.confidence, "source": e.source}
                for e in pair.truth.entries
            ],
        }))
        contrastive_lines.append(json.dumps({
            "pair": pair.name,
            "nodes": {k: {"pos": v[0], "neg": v[1]} for k, v in sorted(pair.contrastive.items())},
        }))
    (directory / "labels.jsonl").write_text("\n".join(labels_lines) + "\n", encoding="utf-8")
    (directory / "truth.jsonl").write_text("\n".join(truth_lines) + "\n", encoding="utf-8")
    (directory / "contrastive.jsonl").write_text("\n".join(contrastive_lines) + "\n", encoding="utf-8")
    if meta is not None:
        (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return directory


def _read_jsonl(path: Path) -> dict[str, dict]:
    out = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                record = json.loads(line)
                out[record["pair"]] = record
    return out


def load_dataset(directory: str | Path) -> list[LoadedPair]:
    directory = Path(directory)
    labels_path = directory / "labels.jsonl"
    if not labels_path.exists():
        raise FileNotFoundError(f"{labels_path} not found: not a dataset directory")
    truth_records = _read_jsonl(directory / "truth.jsonl")
    contrastive_records = _read_jsonl(directory / "contrastive.jsonl")

    pairs = []
    for line in labels_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        name = record["pair"]
        ui_result = parse_protocol((directory / record["ui"]).read_text(encoding="utf-8"))
        ux_result = parse_protocol((directory / record["ux"]).read_text(encoding="utf-8"))
        if not ui_result.ok or not ux_result.ok:
            bad = record["ui"] if not ui_result.ok else record["ux"]
            raise ValueError(f"failed to parse {bad}: {(ui_result.diagnostics + ux_result.diagnostics)[0]}")
        labels = {e["ui"]: e["target"] for e in record["entries"]}
        truth = None
        if name in truth_records:
            truth = CorrespondenceMap(entries=[])
            from .construct import MatchEntry

            for e in truth_records[name]["entries"]:
                truth.entries.append(MatchEntry(
                    ui_node_id=e["ui"],
                    ux_node_path=None if e["ux"] == "UNMATCHED" else e["ux"],
                    confidence=float(e.get("confidence", 1.0)),
                    source=e.get("source", "MANUAL"),
                ))
        contrastive = {}
        if name in contrastive_records:
            contrastive = {
                k: (v["pos"], v["neg"])
                for k, v in contrastive_records[name]["nodes"].items()
            }
        pairs.append(LoadedPair(
            name=name, ui_tree=ui_result.tree, ux_tree=ux_result.tree,
            labels=labels, truth=truth, contrastive=contrastive,
        ))
    return pairs


def load_dataset_assets(directory: str | Path) -> dict[str, np.ndarray]:
    from .render import load_assets

    return load_assets(Path(directory) / "assets")
