"""HTTP service exposing the construction loop.

Projects persist as directories (protocol files, assets, state.json,
append-only annotations.jsonl); every mutation bumps a revision counter and
rewrites state atomically before acknowledging, so a killed process comes
back with all DONE results and overrides intact. Matching runs on a worker
thread, one job per project at a time; manual overrides always survive
re-matching. A static web client is mounted at /ui when present.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, HTTPException, Query, UploadFile
from fastapi.responses import PlainTextResponse, Response

from .construct import CorrespondenceMap, IntegrationError, MatchEntry
from .pipeline import MatchConfig, MatchModels, recursive_match, sanitize_for_integration
from .proto import (
    DesignNode,
    DesignTree,
    Semantic,
    parse_protocol,
    serialize_protocol,
    validate,
)
from .render import load_png, render, save_png
from .stage1 import load_stage1
from .stage2 import load_stage2

MAX_UPLOAD_BYTES = 16 * 1024 * 1024


def _tree_to_json(tree: DesignTree) -> dict:
    def node_json(node: DesignNode) -> dict:
        return {
            "id": node.id,
            "semantic": node.semantic.value,
            "rect": list(node.rect),
            "z": node.z,
            "rotation": node.rotation,
            "scale": list(node.scale),
            "anchor": list(node.anchor),
            "opacity": node.opacity,
            "texture": node.texture,
            "text": node.text,
            "font": list(node.font) if node.font else None,
            "color": list(node.color) if node.color else None,
            "children": [node_json(c) for c in node.children],
        }

    return {
        "kind": tree.kind.value,
        "canvas": list(tree.canvas),
        "version": tree.version,
        "root": node_json(tree.root),
    }


@dataclass
class JobStatus:
    job_id: str
    state: str = "QUEUED"  # QUEUED | RUNNING | DONE | FAILED
    progress: float = 0.0
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {"job_id": self.job_id, "state": self.state,
                "progress": self.progress, "error": self.error}


@dataclass
class ProjectSession:
    project_id: str
    directory: Path
    ui_tree: DesignTree
    ux_tree: DesignTree
    revision: int = 0
    overrides: list[MatchEntry] = field(default_factory=list)
    auto_map: Optional[CorrespondenceMap] = None
    confidences: Optional[dict] = None  # level-0 probability export
    match_stale: bool = False
    running_job: Optional[str] = None
    lock: threading.RLock = field(default_factory=threading.RLock)

    # -- persistence --------------------------------------------------------
    def state_payload(self) -> dict:
        return {
            "revision": self.revision,
            "match_stale": self.match_stale,
            "overrides": [
                {"ui": e.ui_node_id, "ux": e.ux_node_path, "confidence": e.confidence}
                for e in self.overrides
            ],
            "auto_map": [
                {"ui": e.ui_node_id, "ux": e.ux_node_path, "confidence": e.confidence}
                for e in self.auto_map.entries
            ] if self.auto_map is not None else None,
            "confidences": self.confidences,
        }

    def persist(self) -> None:
        (self.directory / "ui.uiproto").write_text(serialize_protocol(self.ui_tree), encoding="utf-8")
        (self.directory / "ux.uxproto").write_text(serialize_protocol(self.ux_tree), encoding="utf-8")
        tmp = self.directory / "state.json.tmp"
        tmp.write_text(json.dumps(self.state_payload(), indent=2), encoding="utf-8")
        tmp.replace(self.directory / "state.json")

    @classmethod
    def load(cls, directory: Path) -> "ProjectSession":
        ui = parse_protocol((directory / "ui.uiproto").read_text(encoding="utf-8"))
        ux = parse_protocol((directory / "ux.uxproto").read_text(encoding="utf-8"))
        if not ui.ok or not ux.ok:
            raise ValueError(f"{directory}: stored protocols fail to parse")
        session = cls(project_id=directory.name, directory=directory,
                      ui_tree=ui.tree, ux_tree=ux.tree)
        state_path = directory / "state.json"
        if state_path.exists():
            state = json.loads(state_path.read_text(encoding="utf-8"))
            session.revision = state.get("revision", 0)
            session.match_stale = state.get("match_stale", False)
            session.overrides = [
                MatchEntry(e["ui"], e["ux"], e.get("confidence", 1.0), "MANUAL")
                for e in state.get("overrides", [])
            ]
            if state.get("auto_map") is not None:
                session.auto_map = CorrespondenceMap(entries=[
                    MatchEntry(e["ui"], e["ux"], e.get("confidence", 1.0), "AUTO")
                    for e in state["auto_map"]
                ])
            session.confidences = state.get("confidences")
        return session

    # -- views ---------------------------------------------------------------
    def effective_map(self) -> CorrespondenceMap:
        base = self.auto_map or CorrespondenceMap()
        return base.merged_with_overrides(self.overrides)

    def assets_dir(self) -> Path:
        return self.directory / "assets"

    def load_assets(self) -> dict[str, np.ndarray]:
        out = {}
        if self.assets_dir().is_dir():
            for p in sorted(self.assets_dir().glob("*.png")):
                out[p.name] = load_png(p)
        return out

    def secondary_ids(self) -> set[str]:
        return {c.id for c in self.ux_tree.root.children}


class ServiceState:
    def __init__(self, data_dir: Path, models: Optional[MatchModels],
                 match_config: Optional[MatchConfig] = None):
        self.data_dir = data_dir
        self.models = models
        self.match_config = match_config or MatchConfig()
        self.sessions: dict[str, ProjectSession] = {}
        self.jobs: dict[str, JobStatus] = {}
        self.lock = threading.Lock()
        projects_dir = data_dir / "projects"
        if projects_dir.is_dir():
            for child in sorted(projects_dir.iterdir()):
                if (child / "ui.uiproto").exists():
                    self.sessions[child.name] = ProjectSession.load(child)

    def session(self, project_id: str) -> ProjectSession:
        session = self.sessions.get(project_id)
        if session is None:
            raise HTTPException(404, f"unknown project {project_id}")
        return session


def create_app(
    data_dir: str | Path,
    stage1_path: Optional[str] = None,
    stage2_path: Optional[str] = None,
    models: Optional[MatchModels] = None,
    match_config: Optional[MatchConfig] = None,
    frontend_dir: Optional[str | Path] = None,
) -> FastAPI:
    data_dir = Path(data_dir)
    (data_dir / "projects").mkdir(parents=True, exist_ok=True)
    if models is None and stage1_path and stage2_path:
        models = MatchModels(stage1=load_stage1(stage1_path), stage2=load_stage2(stage2_path))
    state = ServiceState(data_dir, models, match_config)
    app = FastAPI(title="uifuse service")
    app.state.service = state

    # ---- projects -----------------------------------------------------------
    @app.post("/projects", status_code=201)
    async def create_project(
        uiproto: UploadFile = File(...),
        uxproto: UploadFile = File(...),
        assets: list[UploadFile] = File(default=[]),
    ):
        payloads = {}
        for upload in (uiproto, uxproto, *assets):
            data = await upload.read()
            if len(data) > MAX_UPLOAD_BYTES:
                raise HTTPException(413, f"{upload.filename} exceeds {MAX_UPLOAD_BYTES} bytes")
            payloads[upload] = data

        diagnostics = []
        trees = []
        for upload, kind in ((uiproto, "ui"), (uxproto, "ux")):
            result = parse_protocol(payloads[upload].decode("utf-8", errors="replace"))
            diags = result.diagnostics + (validate(result.tree) if result.ok else [])
            errors = [d for d in diags if d.severity == "ERROR"]
            if errors:
                diagnostics.extend(
                    {"file": upload.filename, "line": d.line, "column": d.column,
                     "message": d.message} for d in errors
                )
            else:
                trees.append(result.tree)
        if diagnostics:
            raise HTTPException(400, detail={"diagnostics": diagnostics})
        ui_tree, ux_tree = trees

        asset_names = {a.filename for a in assets}
        referenced = {n.texture for n in ui_tree.walk() if n.texture}
        missing = sorted(referenced - asset_names)
        if missing:
            raise HTTPException(400, detail={"missing_assets": missing})

        project_id = uuid.uuid4().hex[:12]
        directory = data_dir / "projects" / project_id
        (directory / "assets").mkdir(parents=True)
        for upload in assets:
            (directory / "assets" / Path(upload.filename).name).write_bytes(payloads[upload])
        session = ProjectSession(project_id=project_id, directory=directory,
                                 ui_tree=ui_tree, ux_tree=ux_tree)
        session.persist()
        state.sessions[project_id] = session
        return {"project_id": project_id, "revision": session.revision}

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        session = state.session(project_id)
        with session.lock:
            effective = session.effective_map().effective()
            return {
                "project_id": project_id,
                "revision": session.revision,
                "match_stale": session.match_stale,
                "has_match": session.auto_map is not None,
                "running_job": session.running_job,
                "ui_tree": _tree_to_json(session.ui_tree),
                "ux_tree": _tree_to_json(session.ux_tree),
                "map": [
                    {"ui": ui, "ux": e.ux_node_path, "confidence": e.confidence, "source": e.source}
                    for ui, e in sorted(effective.items())
                ],
                "secondary": sorted(session.secondary_ids()),
            }

    # ---- matching -----------------------------------------------------------
    def _run_match_job(session: ProjectSession, job: JobStatus,
                       config: Optional[MatchConfig] = None) -> None:
        job.state = "RUNNING"
        job.progress = 0.1
        try:
            if state.models is None:
                raise RuntimeError("missing checkpoint: service started without models")
            outcome = recursive_match(session.ui_tree, session.ux_tree, state.models,
                                      config or state.match_config)
            with session.lock:
                session.auto_map = outcome.cmap
                session.confidences = outcome.level0
                session.match_stale = False
                session.revision += 1
                session.persist()  # persist before acknowledging DONE
            job.progress = 1.0
            job.state = "DONE"
        except Exception as exc:  # noqa: BLE001 - job boundary
            job.error = str(exc)
            job.state = "FAILED"
        finally:
            with session.lock:
                session.running_job = None

    @app.post("/projects/{project_id}/match", status_code=202)
    def run_match(project_id: str, body: Optional[dict] = None):
        session = state.session(project_id)
        config = state.match_config
        if body:
            allowed = {"sigma", "gamma", "tau", "max_expansions", "time_budget"}
            unknown = set(body) - allowed
            if unknown:
                raise HTTPException(422, f"unknown match config keys: {sorted(unknown)}")
            config = MatchConfig(**{**vars(state.match_config), **body})
        with session.lock:
            if session.running_job is not None:
                raise HTTPException(409, f"job {session.running_job} already running")
            job = JobStatus(job_id=uuid.uuid4().hex[:12])
            state.jobs[job.job_id] = job
            session.running_job = job.job_id
        thread = threading.Thread(target=_run_match_job, args=(session, job, config), daemon=True)
        thread.start()
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}")
    def poll_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return job.to_json()

    # ---- confidences ----------------------------------------------------------
    @app.get("/projects/{project_id}/confidences")
    def get_confidences(project_id: str, node: str, direction: str = Query("ui")):
        session = state.session(project_id)
        with session.lock:
            if session.auto_map is None or session.confidences is None:
                raise HTTPException(409, "no match has been run yet")
            level0 = session.confidences
            groups = level0["groups"]
            ui_ids = level0["ui_ids"]
            probs = level0["probs"]  # L x m
            sigma = state.match_config.sigma
            if direction == "ui":
                if node not in ui_ids:
                    if session.ui_tree.node_by_id(node) is None:
                        raise HTTPException(404, f"unknown UI node {node}")
                    return {"node": node, "direction": "ui", "candidates": [],
                            "below_threshold": True}
                col = ui_ids.index(node)
                ranked = sorted(
                    ({"target": groups[l], "probability": probs[l][col]}
                     for l in range(len(groups))),
                    key=lambda item: -item["probability"],
                )
                below = max((c["probability"] for c in ranked), default=0.0) < sigma
                return {"node": node, "direction": "ui", "candidates": ranked,
                        "below_threshold": below}
            if direction == "ux":
                target = session.ux_tree.node_by_id(node)
                if target is None:
                    raise HTTPException(404, f"unknown UX node {node}")
                # rank UI candidates by the probability row of the node's group
                path = session.ux_tree.path_of(node)
                secondary = path.split("/")[1] if "/" in path else path
                if secondary not in groups:
                    return {"node": node, "direction": "ux", "candidates": []}
                row = probs[groups.index(secondary)]
                ranked = sorted(
                    ({"target": ui_ids[i], "probability": row[i]} for i in range(len(ui_ids))),
                    key=lambda item: -item["probability"],
                )
                return {"node": node, "direction": "ux", "candidates": ranked}
            raise HTTPException(422, f"direction must be ui|ux, got {direction}")

    # ---- overrides -----------------------------------------------------------
    @app.post("/projects/{project_id}/overrides")
    def override_match(project_id: str, body: dict):
        session = state.session(project_id)
        ui_node_id = body.get("ui_node_id")
        target = body.get("target")
        expected = body.get("revision")
        with session.lock:
            if expected is not None and expected != session.revision:
                raise HTTPException(409, f"stale revision {expected} != {session.revision}")
            if session.ui_tree.node_by_id(ui_node_id) is None:
                raise HTTPException(404, f"unknown UI node {ui_node_id}")
            warnings = []
            if target in (None, "UNMATCHED"):
                path = None
            else:
                node = session.ux_tree.node_by_path(target) or session.ux_tree.node_by_id(target)
                if node is None:
                    raise HTTPException(404, f"unknown UX target {target}")
                path = session.ux_tree.path_of(node.id)
                ui_node = session.ui_tree.node_by_id(ui_node_id)
                if node.is_leaf and node.semantic in (Semantic.IMAGE, Semantic.TEXT) \
                        and ui_node.is_leaf and ui_node.semantic is not node.semantic:
                    warnings.append(
                        f"semantic clash: {ui_node.semantic.value} -> {node.semantic.value}"
                    )
            session.overrides = [e for e in session.overrides if e.ui_node_id != ui_node_id]
            session.overrides.append(MatchEntry(ui_node_id, path, 1.0, "MANUAL"))
            session.revision += 1
            session.persist()
            return {"revision": session.revision, "warnings": warnings}

    # ---- edits ---------------------------------------------------------------
    @app.post("/projects/{project_id}/edits")
    def edit_node(project_id: str, body: dict):
        session = state.session(project_id)
        op = body.get("op")
        expected = body.get("revision")
        with session.lock:
            if expected is not None and expected != session.revision:
                raise HTTPException(409, f"stale revision {expected} != {session.revision}")
            tree = session.ux_tree.clone()
            try:
                removed = _apply_edit(tree, op, body)
            except KeyError as exc:
                raise HTTPException(404, str(exc)) from None
            except ValueError as exc:
                raise HTTPException(422, str(exc)) from None
            errors = [d for d in validate(tree) if d.severity == "ERROR"]
            if errors:
                raise HTTPException(422, detail={"diagnostics": [str(d) for d in errors]})
            session.ux_tree = tree
            if removed:  # cascade: drop overrides that target deleted nodes
                session.overrides = [
                    e for e in session.overrides
                    if e.ux_node_path is None or e.ux_node_path.split("/")[-1] not in removed
                ]
            session.match_stale = True
            session.revision += 1
            session.persist()
            return {"revision": session.revision, "match_stale": True}

    # ---- integrate / export / render -------------------------------------------
    @app.post("/projects/{project_id}/integrate")
    def integrate_project(project_id: str):
        session = state.session(project_id)
        with session.lock:
            cmap = session.effective_map()
            if not cmap.entries:
                raise HTTPException(409, "no correspondence map yet: run a match or add overrides")
            try:
                gameui, dropped = sanitize_for_integration(session.ui_tree, session.ux_tree, cmap)
            except IntegrationError as exc:
                raise HTTPException(422, str(exc)) from None
            text = serialize_protocol(gameui)
            (session.directory / "integrated.gameui").write_text(text, encoding="utf-8")
            session.revision += 1
            session.persist()
            return {"revision": session.revision, "dropped": dropped, "gameui": text}

    @app.get("/projects/{project_id}/export", response_class=PlainTextResponse)
    def export_project(project_id: str):
        session = state.session(project_id)
        with session.lock:
            path = session.directory / "integrated.gameui"
            if not path.exists():
                raise HTTPException(409, "nothing integrated yet")
            return path.read_text(encoding="utf-8")

    @app.get("/projects/{project_id}/render")
    def render_project(project_id: str, mode: str = "rgba", source: str = "auto"):
        session = state.session(project_id)
        if mode not in ("rgba", "depth"):
            raise HTTPException(422, f"mode must be rgba|depth, got {mode}")
        with session.lock:
            assets = session.load_assets()
            integrated = session.directory / "integrated.gameui"
            if source == "auto":
                source = "gameui" if integrated.exists() else "ux"
            if source == "ui":
                tree = session.ui_tree
            elif source == "ux":
                tree = session.ux_tree
            elif source == "gameui":
                if not integrated.exists():
                    raise HTTPException(409, "nothing integrated yet")
                tree = parse_protocol(integrated.read_text(encoding="utf-8")).tree
            else:
                raise HTTPException(422, f"source must be ui|ux|gameui, got {source}")
            image = render(tree, assets, mode=mode)
        buffer = BytesIO()
        image.to_pil().save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    # ---- annotations -------------------------------------------------------------
    @app.post("/projects/{project_id}/annotations", status_code=201)
    def record_annotation(project_id: str, body: dict):
        session = state.session(project_id)
        entries = body.get("entries", [])
        with session.lock:
            secondary = session.secondary_ids()
            cleaned = []
            for entry in entries:
                ui_id = entry.get("ui")
                target = entry.get("target")
                if session.ui_tree.node_by_id(ui_id) is None:
                    raise HTTPException(404, f"unknown UI node {ui_id}")
                if target is not None and target != "UNMATCHED" and target not in secondary:
                    raise HTTPException(
                        422, f"annotation target {target!r} is not a secondary-level node"
                    )
                cleaned.append({"ui": ui_id,
                                "target": None if target in (None, "UNMATCHED") else target})
            annotation_id = uuid.uuid4().hex[:12]
            record = {
                "pair": f"{project_id}:{annotation_id}",
                "ui": "ui.uiproto",
                "ux": "ux.uxproto",
                "entries": cleaned,
            }
            with open(session.directory / "annotations.jsonl", "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")
            session.revision += 1
            session.persist()
            return {"annotation_id": annotation_id, "revision": session.revision}

    @app.get("/projects/{project_id}/annotations", response_class=PlainTextResponse)
    def export_annotations(project_id: str):
        session = state.session(project_id)
        path = session.directory / "annotations.jsonl"
        return path.read_text(encoding="utf-8") if path.exists() else ""

    frontend = Path(frontend_dir) if frontend_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend, html=True), name="ui")

    return app


def _apply_edit(tree: DesignTree, op: str, body: dict) -> set[str]:
    """Mutates the (cloned) tree; returns ids removed by DELETE."""
    if op == "DELETE":
        node_id = body["node_id"]
        target = tree.node_by_id(node_id)
        if target is None:
            raise KeyError(f"unknown UX node {node_id}")
        if target is tree.root:
            raise ValueError("cannot delete the root node")
        removed = {n.id for n in target.walk()}
        for node in tree.walk():
            node.children = [c for c in node.children if c.id != node_id]
        return removed
    if op == "CREATE":
        parent_id = body.get("parent_id", tree.root.id)
        parent = tree.node_by_id(parent_id)
        if parent is None:
            raise KeyError(f"unknown parent {parent_id}")
        node_id = body["node_id"]
        if tree.node_by_id(node_id) is not None:
            raise ValueError(f"node id {node_id!r} already exists")
        try:
            semantic = Semantic(body.get("semantic", "PANEL"))
        except ValueError:
            raise ValueError(f"unknown semantic {body.get('semantic')!r}") from None
        rect = tuple(body.get("rect", (0, 0, 10, 10)))
        parent.children.append(DesignNode(id=node_id, semantic=semantic, rect=rect,
                                          z=int(body.get("z", 0)),
                                          text=body.get("text")))
        return set()
    if op == "MOVE":
        node = tree.node_by_id(body["node_id"])
        if node is None:
            raise KeyError(f"unknown UX node {body['node_id']}")
        dx, dy = body.get("delta", (0, 0))
        x, y, w, h = node.rect
        node.rect = (x + dx, y + dy, w, h)
        return set()
    if op == "RETYPE":
        node = tree.node_by_id(body["node_id"])
        if node is None:
            raise KeyError(f"unknown UX node {body['node_id']}")
        try:
            node.semantic = Semantic(body["semantic"])
        except ValueError:
            raise ValueError(f"unknown semantic {body.get('semantic')!r}") from None
        if node.semantic is not Semantic.TEXT:
            node.text = node.font = node.color = None
        if node.semantic is not Semantic.IMAGE:
            node.texture = None
        return set()
    raise ValueError(f"unknown edit op {op!r}: expected DELETE|CREATE|MOVE|RETYPE")
