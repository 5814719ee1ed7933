"""Command-line front end: synth, train, eval, plan.

Exit codes are a stable scripting contract: 0 success, 64 usage or parameter
error, 2 I/O error, 3 training divergence, 4 optics configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import cnn_pipeline, data_io, sthc_optics, timing_model
from .errors import (
    CrosstalkError,
    DivergenceError,
    EncodingError,
    FormatError,
    IngestionError,
    LayoutCapacityError,
    ManifestError,
    ParameterError,
    TimingError,
)
from .spectral_engine import KernelShape

EXIT_OK = 0
EXIT_IO = 2
EXIT_TRAINING = 3
EXIT_OPTICS = 4
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_config(path):
    """Minimal key = value configuration file: #-comments, bools, numbers, strings."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestionError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip().strip("\"'")
        if val.lower() in ("true", "false"):
            parsed = val.lower() == "true"
        else:
            try:
                parsed = int(val)
            except ValueError:
                try:
                    parsed = float(val)
                except ValueError:
                    parsed = val
        values[key] = parsed
    return values


def _resolve(args, defaults):
    """Effective settings: hard defaults, overridden by config file, then flags."""
    cfg = _parse_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    return out


def _clip_spec(opts) -> data_io.ClipSpec:
    return data_io.ClipSpec(
        num_frames=int(opts["frames"]),
        height=int(opts["height"]),
        width=int(opts["width"]),
    )


def _add_clip_flags(p):
    p.add_argument("--frames", type=int, help="frames per clip (default 16)")
    p.add_argument("--height", type=int, help="frame height (default 60)")
    p.add_argument("--width", type=int, help="frame width (default 80)")


_CLIP_DEFAULTS = {"frames": 16, "height": 60, "width": 80}


def cmd_synth(args) -> int:
    opts = _resolve(args, {"seed": 0, "per_class": 25, **_CLIP_DEFAULTS})
    manifest, clips = data_io.synth_dataset(
        int(opts["seed"]), int(opts["per_class"]), _clip_spec(opts)
    )
    path = data_io.write_dataset(manifest, clips, args.out)
    print(f"wrote {len(manifest)} clips, manifest {path}")
    return EXIT_OK


_TRAIN_DEFAULTS = {
    "seed": 0,
    "epochs": 30,
    "batch_size": 8,
    "learning_rate": 1e-3,
    "kernels": 9,
    "kernel_height": 30,
    "kernel_width": 40,
    "kernel_frames": 8,
    **_CLIP_DEFAULTS,
}


def cmd_train(args) -> int:
    opts = _resolve(args, _TRAIN_DEFAULTS)
    manifest = data_io.parse_manifest(args.manifest)
    train_m, val_m, _ = data_io.split_by_subject(manifest)
    spec = _clip_spec(opts)
    train_samples = data_io.load_samples(train_m, spec)
    val_samples = data_io.load_samples(val_m, spec)
    config = cnn_pipeline.TrainConfig(
        learning_rate=float(opts["learning_rate"]),
        batch_size=int(opts["batch_size"]),
        epochs=int(opts["epochs"]),
        seed=int(opts["seed"]),
    )
    shape = KernelShape(
        int(opts["kernel_height"]), int(opts["kernel_width"]), int(opts["kernel_frames"]), 1
    )
    result = cnn_pipeline.train(
        train_samples, val_samples, config,
        kernel_shape=shape, num_kernels=int(opts["kernels"]),
        num_classes=len(manifest.class_names),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    cnn_pipeline.export_kernels(result.kernels, os.path.join(args.out_dir, "kernels.bank"))
    cnn_pipeline.export_head(result.head, os.path.join(args.out_dir, "head.bank"))
    log_path = os.path.join(args.out_dir, "train_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_acc,val_acc\n")
        for row in result.log:
            fh.write(
                f"{row.epoch},{row.train_loss:.12g},{row.train_acc:.12g},{row.val_acc:.12g}\n"
            )
    best = result.log[result.best_epoch - 1]
    print(f"best epoch {result.best_epoch}: val accuracy {best.val_acc:.6f}")
    return EXIT_OK


_EVAL_DEFAULTS = {
    "split": "test",
    "mode": "digital",
    "optics_mode": "ideal",
    "slm_levels": 0,
    "pulse_radius": 1,
    "coherence_lifetime": math.inf,
    "flatness_min": 0.9,
    "guard_px": 4,
    **_CLIP_DEFAULTS,
}


def _optical_setup(opts, kernels, spec):
    levels = int(opts["slm_levels"])
    params = sthc_optics.OpticalParams(
        mode=str(opts["optics_mode"]),
        pulse_radius=int(opts["pulse_radius"]),
        coherence_lifetime=float(opts["coherence_lifetime"]),
        slm_levels=None if levels == 0 else levels,
        flatness_min=float(opts["flatness_min"]),
        guard_px=int(opts["guard_px"]),
    )
    ks = kernels.shape
    map_hw = (spec.height - ks.k_h + 1, spec.width - ks.k_w + 1)
    layout = sthc_optics.plan_slm_layout(
        kernels.count, (ks.k_h, ks.k_w), map_hw, params.guard_px, canvas=opts.get("canvas")
    )
    return params, layout


def cmd_eval(args) -> int:
    opts = _resolve(args, _EVAL_DEFAULTS)
    opts["canvas"] = tuple(args.canvas) if args.canvas else None
    manifest = data_io.parse_manifest(args.manifest)
    splits = dict(zip(("train", "val", "test"), data_io.split_by_subject(manifest)))
    splits["all"] = manifest
    split_name = str(opts["split"])
    if split_name not in splits:
        raise ParameterError(f"unknown split {split_name!r}")
    spec = _clip_spec(opts)
    samples = data_io.load_samples(splits[split_name], spec)
    kernels = cnn_pipeline.import_kernels(args.kernels)
    head = cnn_pipeline.import_head(args.head)
    if head.num_classes != len(manifest.class_names):
        raise ParameterError(
            f"head classifies {head.num_classes} classes but manifest has "
            f"{len(manifest.class_names)}"
        )
    mode = str(opts["mode"])
    timing = None
    if args.echo_times:
        timing = sthc_optics.EchoTiming(*args.echo_times)
    params = layout = None
    if mode == "hybrid":
        params, layout = _optical_setup(opts, kernels, spec)
    report = cnn_pipeline.evaluate(
        kernels, head, samples, mode=mode, params=params, layout=layout, timing=timing
    )
    print(f"accuracy {report.accuracy:.6f}")

    names = manifest.class_names
    if args.confusion:
        with open(args.confusion, "w", encoding="utf-8") as fh:
            fh.write("true\\pred," + ",".join(names) + "\n")
            for i, name in enumerate(names):
                fh.write(name + "," + ",".join(str(int(v)) for v in report.confusion_matrix[i]) + "\n")
    if args.report:
        doc = {
            "mode": mode,
            "split": split_name,
            "num_samples": int(report.labels.size),
            "accuracy": report.accuracy,
            "class_names": list(names),
            "per_class_recall": {n: float(r) for n, r in zip(names, report.per_class_recall)},
            "confusion_matrix": report.confusion_matrix.tolist(),
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    if args.dump_maps:
        _dump_feature_maps(args.dump_maps, samples[0][0], kernels, mode, params, layout, timing)
    return EXIT_OK


def _dump_feature_maps(out_dir, video, kernels, mode, params, layout, timing):
    """Subtracted per-kernel map frames of the first sample, 8-bit normalized."""
    if mode == "hybrid":
        maps = sthc_optics.optical_conv_maps(video, kernels, params, layout, timing)
    else:
        maps = cnn_pipeline.digital_conv_maps(kernels, video)
    os.makedirs(out_dir, exist_ok=True)
    for k in range(maps.shape[0]):
        vol = maps[k]
        lo, hi = float(vol.min()), float(vol.max())
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        for t in range(vol.shape[2]):
            frame = np.rint((vol[:, :, t] - lo) * scale).astype(np.uint8)
            data_io.write_pgm(os.path.join(out_dir, f"k{k:02d}_t{t:02d}.pgm"), frame)


def cmd_plan(args) -> int:
    opts = _resolve(
        args,
        {"bandwidth": 6.28e8, "device_fps": 125000.0, "digital_fps": 400.0},
    )
    load_time = timing_model.frame_load_time(float(opts["bandwidth"]))
    plan = timing_model.segmentation_plan(args.t1, args.t2, args.t3)
    report = timing_model.throughput_report(
        float(opts["device_fps"]), float(opts["digital_fps"]), frame_load_time=load_time
    )
    doc = {
        "frame_load_time_s": load_time,
        "segmentation": {
            "t1": plan.t1,
            "t2": plan.t2,
            "t3": plan.t3,
            "count": plan.count,
            "segment_starts": list(plan.segment_starts),
        },
        "throughput": {
            "device_fps": report.device_fps,
            "digital_fps": report.digital_fps,
            "speedup": report.speedup,
            "exceeds_two_orders": report.exceeds_two_orders,
        },
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sthcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic motion-direction dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--per-class", dest="per_class", type=int)
    _add_clip_flags(p)
    p.add_argument("--config", help="key = value configuration file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the digital baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--kernels", type=int)
    p.add_argument("--kernel-height", dest="kernel_height", type=int)
    p.add_argument("--kernel-width", dest="kernel_width", type=int)
    p.add_argument("--kernel-frames", dest="kernel_frames", type=int)
    _add_clip_flags(p)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model digitally or through the optics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kernels", required=True, help="kernel bank file")
    p.add_argument("--head", required=True, help="head bank file")
    p.add_argument("--split", choices=("train", "val", "test", "all"))
    p.add_argument("--mode", choices=("digital", "hybrid"))
    p.add_argument("--optics-mode", dest="optics_mode", choices=("ideal", "physical"))
    p.add_argument("--slm-levels", dest="slm_levels", type=int,
                   help="quantization levels, 0 disables")
    p.add_argument("--pulse-radius", dest="pulse_radius", type=int)
    p.add_argument("--coherence-lifetime", dest="coherence_lifetime", type=float)
    p.add_argument("--flatness-min", dest="flatness_min", type=float)
    p.add_argument("--guard-px", dest="guard_px", type=int)
    p.add_argument("--canvas", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--echo-times", dest="echo_times", type=float, nargs=3,
                   metavar=("T_P", "T_Q", "T_R"))
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--confusion", help="write the confusion matrix CSV here")
    p.add_argument("--dump-maps", dest="dump_maps",
                   help="write per-kernel feature-map PGMs of the first sample here")
    _add_clip_flags(p)
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="segmentation schedule and throughput arithmetic")
    p.add_argument("--t1", type=float, required=True, help="query duration (s)")
    p.add_argument("--t2", type=float, required=True, help="segment duration (s)")
    p.add_argument("--t3", type=float, required=True, help="database duration (s)")
    p.add_argument("--bandwidth", type=float, help="frequency spread (rad/s)")
    p.add_argument("--device-fps", dest="device_fps", type=float)
    p.add_argument("--digital-fps", dest="digital_fps", type=float)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--config")
    p.set_defaults(func=cmd_plan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParameterError, TimingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, ManifestError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (CrosstalkError, LayoutCapacityError, EncodingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTICS


def app():
    sys.exit(main())


if __name__ == "__main__":
    app()
