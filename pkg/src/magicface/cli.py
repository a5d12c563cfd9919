"""Command-line pipeline: forge -> train -> edit -> postprocess -> eval.

Every command is deterministic given (config, seed).  Exit codes: 0 ok,
1 runtime error, 2 usage error.  MAGICFACE_THREADS caps math-library
parallelism (0 or unset = automatic).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as cfg
from .dataset_forge import forge, load_manifest
from .diffusion.model import UNetModel
from .diffusion.training import train_image_model, train_text_model
from .effects import resolve_effects
from .errors import MagicFaceError
from .imaging import load_video, save_video
from .metrics import compute_report
from .sampler import edit_video
from .seeding import derive_seed
from .synthface import (
    MotionSpec,
    generate_trajectory,
    sample_face_params,
    save_landmark_track,
    load_landmark_track,
)
from .temporal import lowpass, stabilize


def _apply_thread_cap():
    value = os.environ.get("MAGICFACE_THREADS", "0")
    try:
        n = int(value)
    except ValueError:
        n = 0
    if n > 0:
        import torch

        torch.set_num_threads(n)


def _load_run_config(args) -> cfg.RunConfig:
    config = cfg.load_config(args.config) if getattr(args, "config", None) else cfg.RunConfig()
    return config


def _override(config, section, args, mapping):
    updates = {}
    for flag, field in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            updates[field] = value
    if updates:
        config = cfg.replace_section(config, section, **updates)
    return config


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_forge(args) -> int:
    config = _load_run_config(args)
    config = _override(
        config,
        "dataset",
        args,
        {"identities": "identities", "poses": "poses", "seed": "seed"},
    )
    ds = config.dataset
    names = args.effects.split(",") if args.effects else list(ds.effects)
    effects = resolve_effects([n.strip() for n in names], args.effects_dir)
    manifest = forge(
        ds.identities, effects, ds.poses, ds.seed, args.out, canvas=tuple(ds.canvas)
    )
    print(f"forged {len(manifest)} records -> {os.path.join(args.out, 'manifest.json')}")

    if args.video_out:
        params = sample_face_params(
            derive_seed(ds.seed, "identity", args.video_identity), tuple(ds.canvas)
        )
        motion = MotionSpec(
            yaw_amplitude=args.video_yaw,
            yaw_period=args.video_frames,
            translation_amplitude=args.video_translation,
            n_frames=args.video_frames,
        )
        video, tracks = generate_trajectory(params, motion, tuple(ds.canvas), fps=ds.fps)
        save_video(video, args.video_out)
        save_landmark_track(tracks, args.video_out + ".landmarks.json")
        print(f"wrote {len(video)}-frame trajectory -> {args.video_out}")
    return 0


def cmd_train(args) -> int:
    config = _load_run_config(args)
    config = _override(
        config,
        "text_training",
        args,
        {"steps": "steps", "lr": "lr", "batch": "batch_size", "seed": "seed", "subset": "subset_per_effect"},
    )
    config = _override(
        config,
        "image_training",
        args,
        {"steps": "steps", "lr": "lr", "batch": "batch_size", "seed": "seed", "p_drop": "p_drop"},
    )
    manifest = load_manifest(args.data)
    manifest.validate()
    os.makedirs(args.out, exist_ok=True)

    from .reporting import plot_loss_curve, write_loss_csv

    which = args.which
    if which in ("text", "both"):
        model, losses = train_text_model(
            manifest, config.text_training.subset_per_effect, config.text_training.train_config()
        )
        model.save(os.path.join(args.out, "text.ckpt"))
        write_loss_csv(losses, os.path.join(args.out, "text_loss.csv"))
        plot_loss_curve(losses, os.path.join(args.out, "text_loss.png"), "text-control loss")
        print(f"text model: {model.n_params} params, final loss "
              f"{losses[-1]:.5f}" if losses else "text model: 0 steps")
    if which in ("image", "both"):
        model, losses = train_image_model(manifest, config.image_training.train_config())
        model.save(os.path.join(args.out, "image.ckpt"))
        write_loss_csv(losses, os.path.join(args.out, "image_loss.csv"))
        plot_loss_curve(losses, os.path.join(args.out, "image_loss.png"), "image-control loss")
        print(f"image model: {model.n_params} params, final loss "
              f"{losses[-1]:.5f}" if losses else "image model: 0 steps")
    return 0


def _postprocess(edited, source, post: cfg.PostSection, only=None):
    do_flow = post.stabilize if only is None else only == "flow"
    do_lowpass = post.lowpass if only is None else only == "lowpass"
    out = edited
    if do_flow:
        out = stabilize(
            out, source,
            levels=post.flow_levels, iters=post.flow_iters,
            smoothness=post.smoothness, strength=post.strength,
        )
    if do_lowpass:
        out = lowpass(out, window=post.window, passes=post.passes)
    return out


def cmd_edit(args) -> int:
    config = _load_run_config(args)
    config = _override(
        config, "guidance", args, {"T": "T", "K": "K", "v": "v", "s": "s", "seed": "seed"}
    )
    source = load_video(args.src)
    text_model = UNetModel.load(args.text_ckpt)
    image_model = UNetModel.load(args.image_ckpt)
    g = config.guidance.guidance_config()
    edited = edit_video(source, args.prompt, (text_model, image_model), g)
    if not args.no_postprocess:
        edited = _postprocess(edited, source, config.post)
    save_video(edited, args.out)
    print(f"edited {len(edited)} frames -> {args.out}")
    if args.strip:
        from .reporting import save_frame_strip

        save_frame_strip(edited, args.strip_every, args.strip)
        print(f"frame strip -> {args.strip}")
    return 0


def cmd_postprocess(args) -> int:
    config = _load_run_config(args)
    config = _override(
        config,
        "post",
        args,
        {"window": "window", "passes": "passes", "strength": "strength"},
    )
    source = load_video(args.src)
    edited = load_video(args.edited)
    out = _postprocess(edited, source, config.post, only=args.only)
    save_video(out, args.out)
    print(f"postprocessed {len(out)} frames -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    source = load_video(args.src)
    edited = load_video(args.edited)
    tracks = load_landmark_track(args.landmarks)

    from .reporting import (
        format_ablation_table,
        plot_ablation,
        plot_similarity_traces,
        write_ablation_csv,
        write_report_json,
    )

    os.makedirs(args.out_dir, exist_ok=True)
    report = compute_report(source, edited, tracks)
    write_report_json(report, os.path.join(args.out_dir, "report.json"))
    plot_similarity_traces(report, os.path.join(args.out_dir, "traces.png"))
    print(f"as given: tl_id={report.tl_id:.4f} tg_id={report.tg_id:.4f}")

    rows = []
    for use_flow, use_lowpass in ((False, False), (True, False), (False, True), (True, True)):
        variant = edited
        if use_flow:
            variant = stabilize(
                variant, source,
                levels=config.post.flow_levels, iters=config.post.flow_iters,
                smoothness=config.post.smoothness, strength=config.post.strength,
            )
        if use_lowpass:
            variant = lowpass(variant, window=config.post.window, passes=config.post.passes)
        r = compute_report(source, variant, tracks)
        rows.append(
            {"optical_flow": use_flow, "lowpass": use_lowpass, "tl_id": r.tl_id, "tg_id": r.tg_id}
        )
    write_ablation_csv(rows, os.path.join(args.out_dir, "ablation.csv"))
    plot_ablation(rows, os.path.join(args.out_dir, "ablation.png"))
    print(format_ablation_table(rows))
    return 0


def cmd_dump_config(args) -> int:
    config = _load_run_config(args)
    text = config.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magicface",
        description="Forge paired face-effect data, train dual control models, edit videos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forge", help="generate the paired training corpus")
    p.add_argument("--identities", type=int)
    p.add_argument("--poses", type=int)
    p.add_argument("--effects", help="comma-separated effect names (default: all builtin)")
    p.add_argument("--effects-dir", help="directory of extra effect manifests")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--video-out", help="also render a head-motion trajectory video (MFV)")
    p.add_argument("--video-identity", type=int, default=0)
    p.add_argument("--video-frames", type=int, default=24)
    p.add_argument("--video-yaw", type=float, default=20.0)
    p.add_argument("--video-translation", type=float, default=1.5)
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("train", help="train the control models")
    p.add_argument("--data", required=True, help="path to manifest.json")
    p.add_argument("--which", choices=("text", "image", "both"), default="both")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--subset", type=int)
    p.add_argument("--p-drop", dest="p_drop", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("edit", help="edit a video frame by frame")
    p.add_argument("--src", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--text-ckpt", required=True)
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--v", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-postprocess", action="store_true")
    p.add_argument("--strip", help="write a PNG frame strip of the result")
    p.add_argument("--strip-every", type=int, default=4)
    p.add_argument("--config")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("postprocess", help="apply stabilization and temporal low-pass")
    p.add_argument("--src", required=True)
    p.add_argument("--edited", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--only", choices=("flow", "lowpass"))
    p.add_argument("--window", type=int)
    p.add_argument("--passes", type=int)
    p.add_argument("--strength", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="identity-consistency report plus ablation table")
    p.add_argument("--src", required=True)
    p.add_argument("--edited", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-config", help="print the fully-resolved run configuration")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_config)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MagicFaceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
