"""Command-line entry points for every pipeline stage.

Subcommands: validate | fmt | match | integrate | render | synth | train |
eval | serve. A key=value config file (--config) supplies defaults that
explicit flags override. Exit codes: 0 ok, 1 validation failure, 2 runtime
error, 3 infeasible problem.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INFEASIBLE = 3


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat key = value file; '#' and '//' comments; quotes stripped."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].split("//", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip().strip("'\"")
    return out


def _resolve(args, config: dict[str, str], key: str, default, cast):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return cast(config[key])
    return default


def _parse_trees(ui_path: str, ux_path: str):
    from .proto import parse_protocol, validate

    trees = []
    for path in (ui_path, ux_path):
        text = Path(path).read_text(encoding="utf-8")
        result = parse_protocol(text)
        diags = result.diagnostics + (validate(result.tree) if result.ok else [])
        errors = [d for d in diags if d.severity == "ERROR"]
        if errors:
            for d in errors:
                print(f"{path}:{d}", file=sys.stderr)
            raise SystemExit(EXIT_VALIDATION)
        trees.append(result.tree)
    return trees


def _load_models(args, config):
    from .pipeline import MatchModels
    from .stage1 import load_stage1
    from .stage2 import load_stage2

    stage1_path = _resolve(args, config, "stage1", None, str)
    stage2_path = _resolve(args, config, "stage2", None, str)
    for label, p in (("stage-1", stage1_path), ("stage-2", stage2_path)):
        if p is None or not Path(p).exists():
            print(f"error: {label} checkpoint required (got {p})", file=sys.stderr)
            raise SystemExit(EXIT_VALIDATION)
    return MatchModels(stage1=load_stage1(stage1_path), stage2=load_stage2(stage2_path))


def _match_config(args, config):
    from .pipeline import MatchConfig

    return MatchConfig(
        sigma=_resolve(args, config, "sigma", 0.5, float),
        gamma=_resolve(args, config, "gamma", 1.0, float),
        tau=_resolve(args, config, "tau", None, float),
        max_expansions=_resolve(args, config, "expansions", 5_000_000, int),
        time_budget=_resolve(args, config, "time_budget", 30.0, float),
    )


# --- subcommands -------------------------------------------------------------


def cmd_validate(args, config) -> int:
    from .proto import parse_protocol, validate

    records = []
    ok = True
    for path in args.paths:
        text = Path(path).read_text(encoding="utf-8")
        result = parse_protocol(text)
        diags = list(result.diagnostics)
        if result.ok:
            diags.extend(validate(result.tree))
        errors = [d for d in diags if d.severity == "ERROR"]
        ok = ok and not errors
        records.append({
            "path": str(path),
            "ok": not errors,
            "diagnostics": [
                {"severity": d.severity, "line": d.line, "column": d.column,
                 "message": d.message, "node": d.node_id}
                for d in diags
            ],
        })
    if args.json:
        print(json.dumps({"files": records}, indent=2))
    else:
        for record in records:
            status = "OK" if record["ok"] else "FAIL"
            print(f"{status:4} {record['path']}")
            for d in record["diagnostics"]:
                loc = f"{d['line']}:{d['column']}"
                print(f"     {d['severity']} {loc}: {d['message']}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_fmt(args, config) -> int:
    from .proto import parse_protocol, serialize_protocol

    changed = []
    for path in args.paths:
        original = Path(path).read_text(encoding="utf-8")
        result = parse_protocol(original)
        if not result.ok:
            for d in result.diagnostics:
                print(f"{path}:{d}", file=sys.stderr)
            return EXIT_VALIDATION
        canonical = serialize_protocol(result.tree)
        if canonical != original:
            changed.append(path)
            if not args.check:
                Path(path).write_text(canonical, encoding="utf-8")
    if args.check and changed:
        for path in changed:
            print(f"would reformat {path}")
        return EXIT_VALIDATION
    for path in changed:
        print(f"reformatted {path}")
    return EXIT_OK


def cmd_synth(args, config) -> int:
    from .dataset import write_dataset
    from .synth import parse_complexity, synthesize_pairs

    complexity = parse_complexity(args.complexity)
    pairs = synthesize_pairs(seed=args.seed, count=args.count, complexity=complexity)
    write_dataset(pairs, args.out, meta={
        "seed": args.seed, "count": args.count, "complexity": complexity,
    })
    n_ui = sum(len(p.ui_tree.leaves()) for p in pairs)
    print(f"wrote {len(pairs)} pairs ({n_ui} UI leaves) to {args.out}")
    return EXIT_OK


def cmd_train(args, config) -> int:
    from .dataset import load_dataset
    from .pipeline import pair_to_stage2_example, stage1_samples
    from .reports import write_training_report

    pairs = load_dataset(args.dataset)
    out = Path(args.out)
    report_dir = Path(args.report_dir) if args.report_dir else out.parent
    if args.stage == 1:
        from .stage1 import Stage1Config, train_stage1

        cfg = Stage1Config(seed=args.seed)
        _apply_training_overrides(cfg, args, config)
        ckpt = train_stage1(stage1_samples(pairs), cfg, log_every=args.log_every)
        ckpt.save(out)
        write_training_report(ckpt.history, report_dir, stage=1)
    else:
        if not args.stage1 or not Path(args.stage1).exists():
            print("error: stage-1 checkpoint required (--stage1)", file=sys.stderr)
            return EXIT_VALIDATION
        from .stage1 import load_stage1
        from .stage2 import Stage2Config, train_stage2

        cfg = Stage2Config(seed=args.seed)
        _apply_training_overrides(cfg, args, config)
        examples = [pair_to_stage2_example(p) for p in pairs]
        ckpt = train_stage2(examples, load_stage1(args.stage1), cfg, log_every=args.log_every)
        ckpt.save(out)
        write_training_report(ckpt.history, report_dir, stage=2)
    print(f"saved stage-{args.stage} checkpoint to {out}")
    return EXIT_OK


def _apply_training_overrides(cfg, args, config) -> None:
    for key in ("epochs", "batch_size"):
        value = _resolve(args, config, key, None, int)
        if value is not None:
            setattr(cfg, key, value)
    lr = _resolve(args, config, "lr", None, float)
    if lr is not None:
        cfg.lr = lr


def cmd_match(args, config) -> int:
    from .pipeline import recursive_match

    ui_tree, ux_tree = _parse_trees(args.ui, args.ux)
    models = _load_models(args, config)
    match_config = _match_config(args, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    outcome = recursive_match(ui_tree, ux_tree, models, match_config)
    wall = time.perf_counter() - t0

    outcome.cmap.save(out_dir / "correspondence.jsonl")
    if outcome.level0 is not None:
        from .stage2 import confidence_ranking
        import numpy as np

        ranking = confidence_ranking(
            np.array(outcome.level0["probs"]), outcome.level0["ui_ids"], outcome.level0["groups"]
        )
        (out_dir / "confidences.json").write_text(
            json.dumps({ui: [[g, p] for g, p in ranked] for ui, ranked in ranking.items()},
                       indent=2) + "\n",
            encoding="utf-8",
        )
    for k, dump in enumerate(outcome.problems):
        (out_dir / f"problem_{k}.json").write_text(dump, encoding="utf-8")
    stats = {
        "wall_seconds": wall,
        "optimal": outcome.optimal,
        "levels": [vars(level) for level in outcome.levels],
        "diagnostics": outcome.diagnostics,
    }
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    matched = sum(1 for e in outcome.cmap.effective().values() if e.ux_node_path is not None)
    total = len(outcome.cmap.effective())
    if args.json:
        print(json.dumps({"matched": matched, "total": total, "wall_seconds": wall,
                          "optimal": outcome.optimal}))
    else:
        print(f"matched {matched}/{total} UI leaves in {wall:.3f}s "
              f"(optimal={str(outcome.optimal).lower()}) -> {out_dir}")
    return EXIT_OK


def cmd_integrate(args, config) -> int:
    from .construct import CorrespondenceMap, IntegrationError, integrate
    from .proto import serialize_protocol

    ui_tree, ux_tree = _parse_trees(args.ui, args.ux)
    cmap = CorrespondenceMap.load(args.map)
    try:
        gameui = integrate(ui_tree, ux_tree, cmap)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    Path(args.out).write_text(serialize_protocol(gameui), encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_render(args, config) -> int:
    from .proto import parse_protocol
    from .render import load_assets, render, save_png

    result = parse_protocol(Path(args.input).read_text(encoding="utf-8"))
    if not result.ok:
        for d in result.diagnostics:
            print(f"{args.input}:{d}", file=sys.stderr)
        return EXIT_VALIDATION
    assets = load_assets(args.assets) if args.assets else {}
    size = None
    if args.size:
        w, h = args.size.lower().split("x")
        size = (int(w), int(h))
    image = render(result.tree, assets, target_size=size, mode=args.mode)
    save_png(image, args.out)
    print(f"wrote {args.out} ({image.width}x{image.height}, {args.mode})")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    from .dataset import load_dataset, load_dataset_assets
    from .pipeline import evaluate_pairs
    from .reports import write_eval_report

    pairs = load_dataset(args.dataset)
    if args.limit:
        pairs = pairs[: args.limit]
    assets = load_dataset_assets(args.dataset)
    models = _load_models(args, config)
    match_config = _match_config(args, config)
    report, _ = evaluate_pairs(pairs, models, assets, match_config, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    payload = write_eval_report(report, out_dir)
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print((out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_serve(args, config) -> int:
    import os

    import uvicorn

    from .service import create_app

    def setting(key: str, env: str, default, cast):
        value = _resolve(args, config, key, None, cast)
        if value is not None:
            return value
        raw = os.environ.get(env)
        return cast(raw) if raw is not None else default

    app = create_app(
        data_dir=setting("data_dir", "UIFUSE_DATA_DIR", "./uifuse-data", str),
        stage1_path=setting("stage1", "UIFUSE_STAGE1", None, str),
        stage2_path=setting("stage2", "UIFUSE_STAGE2", None, str),
    )
    uvicorn.run(app, host=setting("host", "UIFUSE_HOST", "127.0.0.1", str),
                port=setting("port", "UIFUSE_PORT", 8000, int))
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uifuse",
        description="Construct cohesive game interfaces from paired UI/UX designs.",
    )
    parser.add_argument("--config", help="key=value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate protocol files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("fmt", help="rewrite protocol files in canonical form")
    p.add_argument("paths", nargs="+")
    p.add_argument("--check", action="store_true", help="exit 1 if any file would change")
    p.set_defaults(fn=cmd_fmt)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("out")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--complexity", default="medium")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train stage-1 or stage-2 models")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stage1", help="stage-1 checkpoint (required for --stage 2)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--report-dir")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("match", help="match one UI/UX pair and export the correspondence")
    p.add_argument("--ui", required=True)
    p.add_argument("--ux", required=True)
    p.add_argument("--stage1")
    p.add_argument("--stage2")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_match_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("integrate", help="apply a correspondence map to build a .gameui file")
    p.add_argument("--ui", required=True)
    p.add_argument("--ux", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_integrate)

    p = sub.add_parser("render", help="rasterize a protocol file to PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--assets")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("rgba", "depth"), default="rgba")
    p.add_argument("--size", help="WxH target size")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("eval", help="evaluate matching + construction fidelity on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage1")
    p.add_argument("--stage2")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--jobs", type=int, default=1)
    _add_match_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--stage1")
    p.add_argument("--stage2")
    p.set_defaults(fn=cmd_serve)

    return parser


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, help="matchability threshold (default 0.5)")
    p.add_argument("--gamma", type=float, help="ambiguity penalty factor (default 1.0; 0 disables)")
    p.add_argument("--tau", type=float, help="penalty divisor (default: group count)")
    p.add_argument("--expansions", type=int, help="solver node-expansion budget")
    p.add_argument("--time-budget", dest="time_budget", type=float, help="solver wall cap seconds")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config_file(args.config) if args.config else {}
    try:
        return args.fn(args, config)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except BrokenPipeError:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        from .solver import BudgetExhausted, InfeasibleProblem

        if isinstance(exc, InfeasibleProblem):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        if isinstance(exc, BudgetExhausted):
            print(f"budget exhausted: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
