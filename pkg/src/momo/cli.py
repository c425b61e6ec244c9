"""Command-line entry point.

Subcommands: corpus build, train, sample, invert, transfer,
analyze qk-cluster|correspondence|attn-map, bench build|run, metrics.

Option precedence: command-line flag > config file (--config, JSON object
keyed by flag name) > built-in default. The MOMO_SEED environment variable
overrides the built-in default seed only. Every run writes a manifest with
the fully resolved configuration and the checkpoint content hash.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .motion import read_motion, write_motion

_SEED_DEFAULT_ENV = "MOMO_SEED"


class CliError(Exception):
    """Runtime failure reported with exit code 1."""


def _default_seed() -> int:
    raw = os.environ.get(_SEED_DEFAULT_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        return 0


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError(f"config parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise CliError("config parse error at line 1: top level must be an object")
    return data


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """flag > config file > default; returns the fully resolved option dict."""
    config = load_config(getattr(args, "config", None))
    for key in config:
        if key not in defaults:
            raise CliError(f"config error: unknown option {key!r}")
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in config:
            resolved[key] = config[key]
        else:
            resolved[key] = default
    return resolved


def write_manifest(path: str, command: str, resolved: dict,
                   checkpoint_path: str | None = None) -> None:
    from .denoiser import file_sha256
    manifest = {
        "command": command,
        "config": resolved,
        "tool_version": __version__,
        "checkpoint_sha256": file_sha256(checkpoint_path) if checkpoint_path else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _json_dump(path: str, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")


# -- subcommands --------------------------------------------------------------


def cmd_corpus_build(args) -> int:
    from .synthgen import build_corpus, save_corpus
    defaults = {"size": 240, "seed": _default_seed(), "jitter": 0.02, "out_dir": "corpus"}
    opt = resolve(args, defaults)
    corpus = build_corpus(opt["size"], seed=opt["seed"], jitter=opt["jitter"])
    save_corpus(corpus, opt["out_dir"])
    write_manifest(os.path.join(opt["out_dir"], "manifest.json"), "corpus build", opt)
    print(f"wrote {len(corpus.samples)} samples to {opt['out_dir']}")
    return 0


def cmd_train(args) -> int:
    from .denoiser import Denoiser, DenoiserConfig, init_weights, save_checkpoint
    from .diffusion import TrainConfig, build_schedule, train, write_loss_curve
    from .motion import default_skeleton, feature_size
    from .synthgen import load_corpus, corpus_vocab

    defaults = {"corpus": "corpus", "out": "model.ckpt", "steps": 4000,
                "batch_size": 16, "lr": 3e-4, "dropout": 0.1,
                "seed": _default_seed() or 10, "layers": 4, "dim": 64,
                "heads": 4, "ff_dim": 256, "diffusion_steps": 100,
                "schedule": "cosine", "loss_csv": None}
    opt = resolve(args, defaults)
    corpus = load_corpus(opt["corpus"])
    skel = default_skeleton()
    config = DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(skel.joint_count),
                            layers=opt["layers"], dim=opt["dim"], heads=opt["heads"],
                            ff_dim=opt["ff_dim"], steps=opt["diffusion_steps"])
    model = Denoiser(config, init_weights(config, seed=opt["seed"]), skel)
    schedule = build_schedule(opt["diffusion_steps"], opt["schedule"])
    tcfg = TrainConfig(batch_size=opt["batch_size"], lr=opt["lr"], steps=opt["steps"],
                       cond_dropout=opt["dropout"], seed=opt["seed"])
    result = train(model, [(s.motion, s.text) for s in corpus.split("train")],
                   schedule, tcfg,
                   on_log=lambda step, loss: print(f"step {step}: loss {loss:.5f}"))
    save_checkpoint(opt["out"], model)
    if opt["loss_csv"]:
        write_loss_curve(opt["loss_csv"], result.loss_curve)
    write_manifest(opt["out"] + ".manifest.json", "train", opt, checkpoint_path=opt["out"])
    print(f"saved checkpoint to {opt['out']}")
    return 0


def cmd_sample(args) -> int:
    from .denoiser import load_checkpoint
    from .diffusion import SamplerConfig, build_schedule, sample

    defaults = {"ckpt": "model.ckpt", "text": "a person walks", "length": 48,
                "seed": _default_seed(), "guidance": 2.5, "out": "sample.json"}
    opt = resolve(args, defaults)
    model = load_checkpoint(opt["ckpt"])
    schedule = build_schedule(model.config.steps, "cosine")
    motion = sample(model, schedule, opt["text"], opt["length"],
                    SamplerConfig(guidance_scale=opt["guidance"], seed=opt["seed"]))
    write_motion(motion, opt["out"])
    write_manifest(opt["out"] + ".manifest.json", "sample", opt, checkpoint_path=opt["ckpt"])
    print(f"wrote motion to {opt['out']}")
    return 0


def cmd_invert(args) -> int:
    from .denoiser import load_checkpoint
    from .diffusion import build_schedule, ddim_invert
    from .traces import write_trace_bundle

    defaults = {"ckpt": "model.ckpt", "motion": None, "out_dir": "inversion",
                "stride": 10}
    opt = resolve(args, defaults)
    if not opt["motion"]:
        raise CliError("invert requires --motion")
    model = load_checkpoint(opt["ckpt"])
    schedule = build_schedule(model.config.steps, "cosine")
    motion = read_motion(opt["motion"])
    trajectory = ddim_invert(model, schedule, motion)
    os.makedirs(opt["out_dir"], exist_ok=True)
    entries = {("invert", None, t, "cond", "x"): trajectory[t]
               for t in range(0, len(trajectory), max(opt["stride"], 1))}
    entries[("invert", None, len(trajectory) - 1, "cond", "x")] = trajectory[-1]
    write_trace_bundle(os.path.join(opt["out_dir"], "trajectory"), entries)
    write_manifest(os.path.join(opt["out_dir"], "manifest.json"), "invert", opt,
                   checkpoint_path=opt["ckpt"])
    print(f"wrote inversion trajectory to {opt['out_dir']}")
    return 0


def cmd_transfer(args) -> int:
    from .denoiser import load_checkpoint
    from .diffusion import SamplerConfig, build_schedule
    from .traces import write_trace_bundle
    from .transfer import TransferConfig, TransferSource, transfer

    defaults = {"ckpt": "model.ckpt", "leader": None, "follower": None,
                "leader_text": None, "follower_text": None,
                "leader_seed": _default_seed(), "follower_seed": _default_seed(),
                "length": 48, "s_layer": None, "e_layer": None,
                "s_step": None, "e_step": None, "prompt_policy": "follower",
                "direction": "root-yaw-copy", "scope": "frame-tokens-only",
                "guidance": 2.5, "method": "momo", "out": "transfer.json",
                "trace_dir": None, "nn_temperature": 1.0,
                "latent_layer": None, "latent_step": None}
    opt = resolve(args, defaults)
    model = load_checkpoint(opt["ckpt"])
    schedule = build_schedule(model.config.steps, "cosine")

    def source(kind: str) -> TransferSource:
        path, text = opt[kind], opt[f"{kind}_text"]
        if path:
            return TransferSource(motion=read_motion(path))
        if text:
            return TransferSource(prompt=text, seed=opt[f"{kind}_seed"],
                                  length=opt["length"])
        raise CliError(f"transfer requires --{kind} or --{kind}-text")

    leader, follower = source("leader"), source("follower")
    sampler = SamplerConfig(guidance_scale=opt["guidance"],
                            seed=opt["leader_seed"])
    method = opt["method"]
    if method == "momo":
        cfg = TransferConfig.defaults(model.config.layers, schedule.steps,
                                      prompt_policy=opt["prompt_policy"],
                                      direction=opt["direction"], scope=opt["scope"])
        overrides = {k: opt[k] for k in ("s_layer", "e_layer", "s_step", "e_step")
                     if opt[k] is not None}
        if overrides:
            from dataclasses import replace
            cfg = replace(cfg, **overrides)
        steps_to_trace = {cfg.s_step, (cfg.s_step + cfg.e_step) // 2, cfg.e_step} \
            if opt["trace_dir"] else None
        result = transfer(model, schedule, leader, follower, cfg, sampler,
                          trace_steps=steps_to_trace)
        output = result.output
        if opt["trace_dir"]:
            write_trace_bundle(opt["trace_dir"], result.trace)
    elif method in ("nn-motion", "nn-softmax"):
        from .baselines import nn_motion_space, nn_softmax
        if not (leader.inverted and follower.inverted):
            raise CliError(f"{method} needs motion files for both sources")
        output = nn_motion_space(leader.motion, follower.motion) if method == "nn-motion" \
            else nn_softmax(leader.motion, follower.motion, opt["nn_temperature"])
    elif method == "nn-latent":
        from .baselines import nn_latent
        layer = opt["latent_layer"] if opt["latent_layer"] is not None \
            else max(model.config.layers - 2, 0)
        step = opt["latent_step"] if opt["latent_step"] is not None \
            else round(0.3 * schedule.steps)
        output = nn_latent(model, schedule, leader, follower, layer, step, sampler)
    else:
        raise CliError(f"unknown method {method!r}")
    write_motion(output, opt["out"])
    write_manifest(opt["out"] + ".manifest.json", f"transfer {method}", opt,
                   checkpoint_path=opt["ckpt"])
    print(f"wrote transfer output to {opt['out']}")
    return 0


def cmd_analyze(args) -> int:
    from .analysis import (AnalysisConfig, AttentionMaps, attention_map,
                           cluster_strip_svg, correspondence,
                           correspondence_defaults, heatmap_svg, qk_cluster,
                           write_cluster_csv, write_matrix_csv)
    from .denoiser import load_checkpoint
    from .diffusion import build_schedule
    from .synthgen import gait_phase, load_corpus

    mode = args.analyze_mode
    defaults = {"ckpt": "model.ckpt", "corpus": "corpus", "layer": None,
                "step": None, "element": "q", "dims": 10, "clusters": 10,
                "seed": _default_seed(), "max_motions": 24,
                "leader": None, "follower": None, "out_dir": "analysis"}
    opt = resolve(args, defaults)
    model = load_checkpoint(opt["ckpt"])
    schedule = build_schedule(model.config.steps, "cosine")
    if mode == "qk-cluster":
        base = AnalysisConfig.defaults(model.config.layers, schedule.steps,
                                       element=opt["element"])
        d_layer, d_step = base.layer, base.step
    else:
        d_layer, d_step = correspondence_defaults(model.config.layers, schedule.steps)
    layer = opt["layer"] if opt["layer"] is not None else d_layer
    step = opt["step"] if opt["step"] is not None else d_step
    os.makedirs(opt["out_dir"], exist_ok=True)

    if mode == "qk-cluster":
        corpus = load_corpus(opt["corpus"])
        samples = [s for s in corpus.samples if s.spec.verb != "stand"]
        samples = samples[:opt["max_motions"]]
        cfg = AnalysisConfig(layer=layer, step=step, pca_dims=opt["dims"],
                             clusters=opt["clusters"], element=opt["element"],
                             seed=opt["seed"])
        result = qk_cluster(model, schedule, [s.motion for s in samples], cfg)
        phase_bins = []
        motifs = []
        for mi, fi in result.keys:
            spec = samples[mi].spec
            phase_bins.append(int(gait_phase(spec, fi)[0] * 8) % 8)
            motifs.append(spec.motif)
        write_cluster_csv(os.path.join(opt["out_dir"], f"clusters_{opt['element']}.csv"),
                          result, phase_bins, motifs)
        offset = 0
        for mi, sample in enumerate(samples[:4]):
            n = sample.motion.length
            cluster_strip_svg(os.path.join(opt["out_dir"], f"strip_{opt['element']}_{mi}.svg"),
                              sample.motion, result.labels[offset:offset + n])
            offset += n
        _json_dump(os.path.join(opt["out_dir"], "temporal_correlation.json"),
                   {"element": opt["element"],
                    "correlation_with_frame_index": list(result.temporal_correlation)})
    elif mode == "correspondence":
        if not (opt["leader"] and opt["follower"]):
            raise CliError("correspondence requires --leader and --follower")
        corr = correspondence(model, schedule, read_motion(opt["leader"]),
                              read_motion(opt["follower"]), layer, step)
        write_matrix_csv(os.path.join(opt["out_dir"], "correspondence_logits.csv"),
                         corr.logits)
        _json_dump(os.path.join(opt["out_dir"], "correspondence.json"),
                   {"argmax": [int(v) for v in corr.argmax]})
    elif mode == "attn-map":
        if not (opt["leader"] and opt["follower"]):
            raise CliError("attn-map requires --leader and --follower")
        maps: AttentionMaps = attention_map(model, schedule, read_motion(opt["leader"]),
                                            read_motion(opt["follower"]), layer, step)
        for name, mat in (("leader_self", maps.leader_self),
                          ("follower_self", maps.follower_self),
                          ("cross", maps.cross)):
            write_matrix_csv(os.path.join(opt["out_dir"], f"attn_{name}.csv"), mat)
            heatmap_svg(os.path.join(opt["out_dir"], f"attn_{name}.svg"), mat)
    else:
        raise CliError(f"unknown analyze mode {mode!r}")
    write_manifest(os.path.join(opt["out_dir"], "manifest.json"), f"analyze {mode}",
                   opt, checkpoint_path=opt["ckpt"])
    print(f"wrote analysis outputs to {opt['out_dir']}")
    return 0


def cmd_bench(args) -> int:
    from .evalkit import build_benchmark, read_benchmark, run_benchmark, write_benchmark
    from .synthgen import load_corpus

    mode = args.bench_mode
    defaults = {"corpus": "corpus", "out": "benchmark.json", "cap": 20,
                "limit": None, "pairs": "benchmark.json", "method": "momo",
                "ckpt": "model.ckpt", "out_dir": "bench", "guidance": 2.5,
                "seed": _default_seed()}
    opt = resolve(args, defaults)
    corpus = load_corpus(opt["corpus"])
    if mode == "build":
        pairs = build_benchmark([s.text for s in corpus.samples],
                                cap=opt["cap"], limit=opt["limit"])
        write_benchmark(opt["out"], pairs)
        write_manifest(opt["out"] + ".manifest.json", "bench build", opt)
        print(f"wrote {len(pairs)} pairs to {opt['out']}")
        return 0
    if mode == "run":
        from .denoiser import load_checkpoint
        from .diffusion import SamplerConfig, build_schedule
        pairs = read_benchmark(opt["pairs"])
        model = load_checkpoint(opt["ckpt"])
        schedule = build_schedule(model.config.steps, "cosine")
        sampler = SamplerConfig(guidance_scale=opt["guidance"], seed=opt["seed"])
        _, agg = run_benchmark(pairs, opt["method"], corpus, opt["out_dir"],
                               model=model, schedule=schedule, sampler=sampler,
                               log=lambda pid, row: print(f"{pid}: "
                                                          f"fc={row['foot_contact_sim']:.3f}"))
        write_manifest(os.path.join(opt["out_dir"], "manifest.json"), "bench run",
                       opt, checkpoint_path=opt["ckpt"])
        print(json.dumps(agg, sort_keys=True))
        return 0
    raise CliError(f"unknown bench mode {mode!r}")


def cmd_metrics(args) -> int:
    from .evalkit import (follower_similarity, foot_contact_similarity, jitter)

    defaults = {"output_motion": None, "leader": None, "follower": None,
                "out": "metrics.json"}
    opt = resolve(args, defaults)
    for key in ("output_motion", "leader", "follower"):
        if not opt[key]:
            raise CliError(f"metrics requires --{key.replace('_', '-')}")
    out = read_motion(opt["output_motion"])
    leader = read_motion(opt["leader"])
    follower = read_motion(opt["follower"])
    report = {
        "foot_contact_sim": foot_contact_similarity(out, leader),
        "follower_rot_sim": follower_similarity(out, leader, follower, "rotations"),
        "follower_loc_sim": follower_similarity(out, leader, follower, "locations"),
        "jitter": jitter(out),
    }
    _json_dump(opt["out"], report)
    write_manifest(opt["out"] + ".manifest.json", "metrics", opt)
    print(json.dumps(report, sort_keys=True))
    return 0


# -- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momo",
                                     description="Desk-scale motion diffusion toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="synthetic corpus tools")
    corpus_sub = corpus.add_subparsers(dest="corpus_mode", required=True)
    cb = corpus_sub.add_parser("build", help="generate a labeled gait corpus")
    _add_common(cb)
    cb.add_argument("--size", type=int)
    cb.add_argument("--seed", type=int)
    cb.add_argument("--jitter", type=float)
    cb.add_argument("--out-dir", dest="out_dir")
    cb.set_defaults(func=cmd_corpus_build)

    tr = sub.add_parser("train", help="train the toy denoiser")
    _add_common(tr)
    for flag, typ in (("--corpus", str), ("--out", str), ("--steps", int),
                      ("--batch-size", int), ("--lr", float), ("--dropout", float),
                      ("--seed", int), ("--layers", int), ("--dim", int),
                      ("--heads", int), ("--ff-dim", int), ("--diffusion-steps", int),
                      ("--schedule", str), ("--loss-csv", str)):
        tr.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    tr.set_defaults(func=cmd_train)

    sa = sub.add_parser("sample", help="generate a motion from text")
    _add_common(sa)
    for flag, typ in (("--ckpt", str), ("--text", str), ("--length", int),
                      ("--seed", int), ("--guidance", float), ("--out", str)):
        sa.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    sa.set_defaults(func=cmd_sample)

    inv = sub.add_parser("invert", help="DDIM-invert a motion to noise")
    _add_common(inv)
    for flag, typ in (("--ckpt", str), ("--motion", str), ("--out-dir", str),
                      ("--stride", int)):
        inv.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    inv.set_defaults(func=cmd_invert)

    tf = sub.add_parser("transfer", help="zero-shot motion transfer")
    _add_common(tf)
    for flag, typ in (("--ckpt", str), ("--leader", str), ("--follower", str),
                      ("--leader-text", str), ("--follower-text", str),
                      ("--leader-seed", int), ("--follower-seed", int),
                      ("--length", int), ("--s-layer", int), ("--e-layer", int),
                      ("--s-step", int), ("--e-step", int), ("--prompt-policy", str),
                      ("--direction", str), ("--scope", str), ("--guidance", float),
                      ("--method", str), ("--out", str), ("--trace-dir", str),
                      ("--nn-temperature", float), ("--latent-layer", int),
                      ("--latent-step", int)):
        tf.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    tf.set_defaults(func=cmd_transfer)

    an = sub.add_parser("analyze", help="attention feature analysis")
    an_sub = an.add_subparsers(dest="analyze_mode", required=True)
    for mode in ("qk-cluster", "correspondence", "attn-map"):
        ap = an_sub.add_parser(mode)
        _add_common(ap)
        for flag, typ in (("--ckpt", str), ("--corpus", str), ("--layer", int),
                          ("--step", int), ("--element", str), ("--dims", int),
                          ("--clusters", int), ("--seed", int), ("--max-motions", int),
                          ("--leader", str), ("--follower", str), ("--out-dir", str)):
            ap.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
        ap.set_defaults(func=cmd_analyze)

    be = sub.add_parser("bench", help="benchmark tools")
    be_sub = be.add_subparsers(dest="bench_mode", required=True)
    for mode in ("build", "run"):
        bp = be_sub.add_parser(mode)
        _add_common(bp)
        for flag, typ in (("--corpus", str), ("--out", str), ("--cap", int),
                          ("--limit", int), ("--pairs", str), ("--method", str),
                          ("--ckpt", str), ("--out-dir", str), ("--guidance", float),
                          ("--seed", int)):
            bp.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
        bp.set_defaults(func=cmd_bench)

    me = sub.add_parser("metrics", help="per-pair transfer metrics")
    _add_common(me)
    for flag, typ in (("--output-motion", str), ("--leader", str),
                      ("--follower", str), ("--out", str)):
        me.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    me.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
