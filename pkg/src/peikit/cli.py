"""Command-line operator surface.

Subcommands build the simulated ecosystem, synthesize attack samples,
run inference/defense/stealing experiments, and serve the ecosystem over
HTTP.  Artifacts live under one output directory per experiment; reports
are written as JSON + CSV + PNG side by side.

Exit codes: 0 ok, 2 config error, 3 missing prerequisite artifacts,
4 transport failure, 5 training failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, config_hash, load_config
from .errors import TrainingFailure, TransportFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PREREQ = 3
EXIT_TRANSPORT = 4
EXIT_TRAINING = 5


class PrerequisiteMissing(Exception):
    pass


def _load(args) -> dict:
    return load_config(getattr(args, "config", None))


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved_config(cfg: dict, outdir: Path) -> None:
    doc = dict(cfg)
    doc["_hash"] = config_hash(cfg)
    doc["_tool_version"] = __version__
    (outdir / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(args) -> int:
    from .pipeline import build_ecosystem, save_ecosystem

    cfg = _load(args)
    outdir = _outdir(args)
    if (outdir / "ecosystem" / "services.json").exists() and not args.force:
        print(f"error: {outdir}/ecosystem already exists; pass --force to rebuild",
              file=sys.stderr)
        return EXIT_CONFIG
    eco = build_ecosystem(cfg)
    save_ecosystem(eco, outdir)
    _write_resolved_config(cfg, outdir)
    print(f"built {len(eco.services)} services (config {config_hash(cfg)})")
    for svc in eco.services:
        acc = eco.train_accuracy[svc.encoder.name]
        print(f"  {svc.name:16s} hidden={svc.encoder.spec.architecture:<15s} "
              f"train_acc={acc:.3f}")
    return EXIT_OK


def _require_ecosystem(cfg, outdir):
    from .pipeline import load_ecosystem

    try:
        return load_ecosystem(outdir, cfg)
    except FileNotFoundError as exc:
        raise PrerequisiteMissing(f"{exc}; run `peikit build` first") from None


def cmd_synthesize(args) -> int:
    from .pipeline import (attack_config_from, run_synthesis, save_sample_set)
    from .report import render_budget_projection, write_loss_traces
    from .synthesis import PAPER_DEFAULTS

    cfg = _load(args)
    price = cfg["inference"]["price_per_query"]

    if args.paper_defaults:
        n = len(cfg["zoo"]["encoders"])
        print(render_budget_projection(PAPER_DEFAULTS, price, n))
        return EXIT_OK

    outdir = _outdir(args)
    eco = _require_ecosystem(cfg, outdir)

    if args.remote:
        encoders = _remote_encoders(outdir, cfg)
    else:
        encoders = eco.encoders

    base_cfg = attack_config_from(cfg)
    sweep = _parse_sweep(args.sweep) if args.sweep else None
    runs = [(None, base_cfg)] if sweep is None else [
        (s, _with_directions(base_cfg, s)) for s in sweep]

    for s, acfg in runs:
        subdir = "attack" if s is None else f"attack_S{s}"
        sset, ledger = run_synthesis(cfg, encoders, acfg, jobs=args.jobs)
        save_sample_set(sset, outdir, ledger, png=args.png, subdir=subdir)
        write_loss_traces(sset, outdir / subdir)
        total = ledger.queries()
        print(f"{subdir}: {len(sset.samples)} samples, {total:,} encoder queries "
              f"(per candidate {acfg.total_queries_per_candidate():,})")
    print(render_budget_projection(base_cfg, price, len(encoders)))
    return EXIT_OK


def _with_directions(acfg, s):
    from .synthesis import AttackConfig

    return AttackConfig(acfg.objectives_count, acfg.replicas, acfg.iterations,
                        s, acfg.radius, acfg.step_size, acfg.image_shape)


def _parse_sweep(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.replace("S=", "").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --sweep value {text!r}; expected e.g. 25,50,75")
    if not values or min(values) < 1:
        raise ConfigError("--sweep needs positive direction counts")
    return values


def cmd_infer(args) -> int:
    from .pipeline import infer_services, load_sample_set
    from .report import (render_verdict_summary, write_inference_reports,
                         write_sweep_report)

    cfg = _load(args)
    outdir = _outdir(args)
    eco = _require_ecosystem(cfg, outdir)
    services = _remote_services(outdir, cfg) if args.remote else eco.services

    sweep_dirs = sorted(outdir.glob("attack_S*"))
    if args.sweep and sweep_dirs:
        per_s = {}
        for d in sweep_dirs:
            s = int(d.name.removeprefix("attack_S"))
            sset = load_sample_set(outdir, subdir=d.name)
            per_s[s] = infer_services(cfg, services, sset)
        root = write_sweep_report(per_s, outdir / "reports")
        print(f"sweep report -> {root}")
        return EXIT_OK

    try:
        sset = load_sample_set(outdir)
    except FileNotFoundError as exc:
        raise PrerequisiteMissing(f"{exc}; run `peikit synthesize` first") from None

    tag = "loo" if args.leave_one_out else "inference"
    reports = infer_services(cfg, services, sset, leave_one_out=args.leave_one_out)
    root = write_inference_reports(reports, outdir / "reports", tag=tag)
    print(render_verdict_summary(reports))
    print(f"reports -> {root}")
    return EXIT_OK


def cmd_defend(args) -> int:
    from .defense import CodecConfig, ResizeSpec, bypass_resize, wrap_service_with_defense
    from .inference import indicator_similarity, run_inference
    from .pipeline import load_sample_set
    from .report import write_defense_report

    cfg = _load(args)
    outdir = _outdir(args)
    eco = _require_ecosystem(cfg, outdir)
    try:
        sset = load_sample_set(outdir)
    except FileNotFoundError as exc:
        raise PrerequisiteMissing(f"{exc}; run `peikit synthesize` first") from None

    d = cfg["defense"]
    try:
        target = eco.service(d["target_service"])
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    codec = CodecConfig(quality=d["quality"])
    rspec = ResizeSpec(d["resize_to"][0], d["resize_to"][1], d["interpolation"])
    threshold = cfg["inference"]["threshold"]
    fingerprint = config_hash(cfg)

    defended = wrap_service_with_defense(target, codec)
    resized = bypass_resize(sset, rspec)
    arms = {
        "origin": run_inference(target, sset, indicator_similarity,
                                threshold, config_fingerprint=fingerprint),
        "defended": run_inference(defended, sset, indicator_similarity,
                                  threshold, config_fingerprint=fingerprint),
        "defended_vs_resized": run_inference(
            wrap_service_with_defense(target, codec), resized,
            indicator_similarity, threshold, config_fingerprint=fingerprint),
    }
    meta = {
        "note": ("codec is block-DCT quantization without entropy coding; "
                 "suppression direction is reported, not asserted"),
        "target_service": target.name,
        "quality": d["quality"],
        "resize_to": d["resize_to"],
        "interpolation": d["interpolation"],
        "config_fingerprint": fingerprint,
    }
    root = write_defense_report(arms, outdir / "reports", meta)
    for arm, rep in arms.items():
        zmax = "--" if rep.zscores is None else f"{max(rep.zscores):.2f}"
        print(f"{arm:22s} max z {zmax:>6}  verdict {rep.identified_name or '(none)'}")
    print(f"defense report -> {root}")
    return EXIT_OK


def cmd_steal(args) -> int:
    from .pipeline import run_steal_suite
    from .report import render_steal_table, write_steal_report

    cfg = _load(args)
    outdir = _outdir(args)
    eco = _require_ecosystem(cfg, outdir)

    identified = None
    verdict_file = (outdir / "reports" / "inference"
                    / f"{cfg['steal']['target_service']}.json")
    if verdict_file.exists():
        identified = json.loads(verdict_file.read_text()).get("verdict")
        if identified is None:
            raise PrerequisiteMissing(
                "inference did not identify an encoder for the steal target; "
                "cannot run the 'correct' arm from the verdict")
    try:
        reports = run_steal_suite(cfg, eco, identified)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    meta = {"target_service": cfg["steal"]["target_service"],
            "identified_encoder": identified,
            "config_fingerprint": config_hash(cfg)}
    root = write_steal_report(reports, outdir / "reports", meta)
    print(render_steal_table(reports))
    print(f"steal report -> {root}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import serve_encoder, serve_service

    cfg = _load(args)
    outdir = _outdir(args)
    eco = _require_ecosystem(cfg, outdir)
    host = cfg["serve"]["host"]
    port = cfg["serve"]["port_base"]
    price = cfg["serve"]["price_per_query"]
    serve_dir = outdir / "serve"
    serve_dir.mkdir(exist_ok=True)

    handles = []
    endpoints = {"encoders": {}, "services": {}}
    for enc in eco.encoders:
        h = serve_encoder(enc, host, port, price,
                          log_path=serve_dir / f"meter_{enc.name}.log")
        handles.append(h)
        endpoints["encoders"][enc.name] = h.url
        port = port + 1 if port else 0
    for svc in eco.services:
        h = serve_service(svc, host, port, price,
                          log_path=serve_dir / f"meter_{svc.name}.log")
        handles.append(h)
        endpoints["services"][svc.name] = h.url
        port = port + 1 if port else 0

    (serve_dir / "endpoints.json").write_text(json.dumps(endpoints, indent=2) + "\n")
    for kind, table in endpoints.items():
        for name, url in table.items():
            print(f"{kind[:-1]:8s} {name:16s} {url}")
    print(f"endpoint map -> {serve_dir / 'endpoints.json'}")

    if args.once:
        for h in handles:
            h.close()
        return EXIT_OK

    stop = {"flag": False}
    signal.signal(signal.SIGINT, lambda *a: stop.update(flag=True))
    signal.signal(signal.SIGTERM, lambda *a: stop.update(flag=True))
    print("serving; Ctrl-C to stop")
    try:
        while not stop["flag"]:
            signal.pause()
    finally:
        for h in handles:
            h.close()
    return EXIT_OK


def _endpoints_map(outdir: Path) -> dict:
    path = outdir / "serve" / "endpoints.json"
    if not path.exists():
        raise PrerequisiteMissing(f"no endpoint map at {path}; run `peikit serve`")
    return json.loads(path.read_text())


def _remote_encoders(outdir: Path, cfg: dict):
    from .client import RemoteEncoder

    table = _endpoints_map(outdir)["encoders"]
    return [RemoteEncoder(table[e["name"]]) for e in cfg["zoo"]["encoders"]]


def _remote_services(outdir: Path, cfg: dict):
    from .client import RemoteService

    table = _endpoints_map(outdir)["services"]
    return [RemoteService(url) for url in table.values()]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peikit",
        description="encoder-inference attack toolkit over a simulated "
                    "encoder-as-a-service ecosystem")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="experiment config JSON "
                                              "(defaults when omitted)")
        p.add_argument("-o", "--out", default="runs/default",
                       help="artifacts directory (default: %(default)s)")

    p = sub.add_parser("build", help="build encoders, dataset, heads, services")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing ecosystem")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("synthesize", help="synthesize attack samples")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("--png", action="store_true", help="also export sample PNGs")
    p.add_argument("--paper-defaults", action="store_true",
                   help="print the full-scale budget projection and exit")
    p.add_argument("--sweep", metavar="S1,S2,...",
                   help="synthesize once per direction count, e.g. 25,50,75,100,125")
    p.add_argument("--remote", action="store_true",
                   help="query encoders through served endpoints")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("infer", help="run hidden-encoder inference")
    common(p)
    p.add_argument("--leave-one-out", action="store_true",
                   help="drop each service's own encoder from its candidate set")
    p.add_argument("--sweep", action="store_true",
                   help="score the sweep sample sets instead of the main one")
    p.add_argument("--remote", action="store_true",
                   help="query services through served endpoints")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("defend", help="three-arm defense experiment")
    common(p)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("steal", help="model stealing case study")
    common(p)
    p.set_defaults(func=cmd_steal)

    p = sub.add_parser("serve", help="host the ecosystem as HTTP endpoints")
    common(p)
    p.add_argument("--once", action="store_true",
                   help="bind, write the endpoint map, then exit (for scripts)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrerequisiteMissing as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except TransportFailure as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except TrainingFailure as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
