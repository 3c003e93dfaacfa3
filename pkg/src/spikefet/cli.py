"""Command-line entry point: gen-data, train, eval, energy, demo."""
import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from PIL import Image, ImageDraw

from .config import ConfigError, RunConfig, dump_config, load_config
from .data import gen_dataset, load_dataset, make_sample
from .energy import E_AC_PJ, E_MAC_PJ, format_report, profile, report_kv
from .model import SpikeFET, load_checkpoint
from .tracker import SpikeTracker, evaluate_tracker, write_tracking_output
from .train import DivergenceError, train

log = logging.getLogger("spikefet")

CONFIG_NAME = "config.ini"


def _config(args, fallback_dir=None):
    if args.config:
        cfg = load_config(args.config)
    elif fallback_dir and (Path(fallback_dir) / CONFIG_NAME).is_file():
        cfg = load_config(Path(fallback_dir) / CONFIG_NAME)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            train=dataclasses.replace(cfg.train, seed=args.seed),
            data=dataclasses.replace(cfg.data, seed=args.seed),
        )
    return cfg


def _load_model(args):
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    cfg = _config(args, ckpt.parent)
    model = SpikeFET(cfg.train.model, seed=cfg.train.seed)
    load_checkpoint(ckpt, model)
    return cfg, model.eval()


def _split(data_dir, name):
    d = Path(data_dir) / name
    return load_dataset(d if d.is_dir() else data_dir)


def cmd_gen_data(args):
    cfg = _config(args)
    out = Path(args.out)
    gen_dataset(cfg.data.spec, cfg.data.n_train, cfg.data.seed, out / "train", prefix="train")
    gen_dataset(cfg.data.spec, cfg.data.n_test, cfg.data.seed + 1, out / "test", prefix="test")
    (out / CONFIG_NAME).write_text(dump_config(cfg))
    print(f"wrote {cfg.data.n_train} train and {cfg.data.n_test} test sequences to {out}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    seqs = _split(args.data, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_NAME).write_text(dump_config(cfg))

    def progress(step, value, raw):
        if step % max(1, cfg.train.steps // 10) == 0 or step == cfg.train.steps:
            print(f"step {step:5d}  L_track {value:.4f}", flush=True)

    try:
        train(cfg.train, seqs, out, progress=progress)
    except DivergenceError as exc:
        print(f"error: {exc}; last good checkpoint kept in {out}", file=sys.stderr)
        return 3
    print(f"checkpoint: {out / 'checkpoint.bin'}")
    return 0


def cmd_eval(args):
    cfg, model = _load_model(args)
    seqs = _split(args.data, "test")
    tracker = SpikeTracker(model, cfg.train.template_factor, cfg.train.search_factor, cfg.train.lam)
    a, p, outputs = evaluate_tracker(tracker, seqs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for s in seqs:
            boxes, scores = outputs[s.name]
            write_tracking_output(out / f"{s.name}.txt", boxes, scores, s.frames.shape[1:])
        (out / "metrics.txt").write_text(f"auc = {a!r}\npr = {p!r}\n")
    print(f"AUC {a!r}")
    print(f"PR {p!r}")
    return 0


def cmd_energy(args):
    cfg, model = _load_model(args)
    seq = _split(args.data, "test")[0]
    k = min(1, len(seq) - 1)
    sample = make_sample(seq, 0, 0, k, cfg.train, jitter=False, bins=cfg.train.model.event_bins)
    report = profile(model, sample, args.e_mac, args.e_ac)
    table = format_report(report)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "energy.txt").write_text(table)
        (out / "energy.kv").write_text(report_kv(report))
    return 0


def _overlay(frame, boxes, colors):
    img = Image.fromarray(frame).convert("RGB")
    draw = ImageDraw.Draw(img)
    for b, c in zip(boxes, colors):
        x, y, w, h = (float(v) for v in b)
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=c)
    return img


def cmd_demo(args):
    cfg, model = _load_model(args)
    seqs = _split(args.data, "test")
    seq = seqs[args.sequence % len(seqs)]
    tracker = SpikeTracker(model, cfg.train.template_factor, cfg.train.search_factor, cfg.train.lam)
    tracker.init(seq, seq.boxes[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _overlay(seq.frames[0], [seq.boxes[0]], [(0, 255, 0)]).save(out / f"{seq.name}_{0:06d}.png")
    for k in range(1, len(seq)):
        box, _ = tracker.track(seq, k)
        _overlay(seq.frames[k], [seq.boxes[k], box], [(0, 255, 0), (255, 0, 0)]).save(out / f"{seq.name}_{k:06d}.png")
    print(f"wrote {len(seq)} overlays to {out} (green: ground truth, red: tracker)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="spikefet", description="Spiking frame+event tracker at desk scale.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, ckpt=False, out_required=False):
        sp.add_argument("--config", help="[section] key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")
        if data:
            sp.add_argument("--data", required=True, help="dataset directory (from gen-data)")
        if ckpt:
            sp.add_argument("--checkpoint", required=True)
        return sp

    common(sub.add_parser("gen-data", help="write synthetic sequences"), data=False, out_required=True).set_defaults(
        func=cmd_gen_data
    )
    common(sub.add_parser("train", help="train and write checkpoint + loss log"), out_required=True).set_defaults(
        func=cmd_train
    )
    common(sub.add_parser("eval", help="AUC/PR on the test split"), ckpt=True).set_defaults(func=cmd_eval)
    sp = common(sub.add_parser("energy", help="theoretical energy report"), ckpt=True)
    sp.add_argument("--e-mac", type=float, default=E_MAC_PJ, help="pJ per MAC")
    sp.add_argument("--e-ac", type=float, default=E_AC_PJ, help="pJ per AC")
    sp.set_defaults(func=cmd_energy)
    sp = common(sub.add_parser("demo", help="render box overlays"), ckpt=True, out_required=True)
    sp.add_argument("--sequence", type=int, default=0, help="test sequence index")
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
