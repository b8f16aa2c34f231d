"""``polypvid`` command line: synth, train, detect, eval, layout, curves.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from polypvid.config import SNAPSHOT, RunConfig, apply_override, load_config_dict
from polypvid.errors import ConfigError, DataError

log = logging.getLogger("polypvid")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

DETECTIONS = "detections.jsonl"
REPORT = "report.json"
TRAIN_LOG = "train_log.csv"
BEST, LAST = "best.ckpt", "last.ckpt"
LOG_COLUMNS = ["epoch", "lr", "train_loss", "val_loss", "seconds"]


# --- helpers -----------------------------------------------------------------

def _subset(dataset, ids):
    from polypvid.dataio import Dataset

    if ids is None:
        return dataset
    return Dataset([dataset[i] for i in ids])


def _load_data(cfg: RunConfig, override: str | None):
    from polypvid.dataio import load_dataset

    root = override or cfg.data.root
    if not root:
        raise ConfigError("no dataset directory: set data.root or pass --data")
    return load_dataset(root)


def read_detections(path: str | Path) -> dict:
    from polypvid.heatmap_codec import DetectionBox

    dets = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"{path}: cannot read detections ({e})") from e
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            key = (str(rec["video_id"]), int(rec["frame_index"]))
            dets[key] = [DetectionBox.from_dict(b) for b in rec["boxes"]]
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}:{n}: malformed detection line ({e})") from e
    return dets


def _draw_overlay(frame, boxes, heatmap, with_panel: bool):
    import cv2

    img = cv2.cvtColor(frame, cv2.COLOR_RGB2BGR)
    h, w = img.shape[:2]
    for b in boxes:
        x0, y0, x1, y1 = b.corners()
        p0 = (int(round(x0)), int(round(y0)))
        cv2.rectangle(img, p0, (int(round(x1)), int(round(y1))), (0, 255, 0), 1)
        cv2.putText(img, f"{b.confidence:.2f}", (p0[0], max(p0[1] - 2, 8)),
                    cv2.FONT_HERSHEY_SIMPLEX, 0.3, (0, 255, 0), 1, cv2.LINE_AA)
    if not with_panel:
        return img
    hm = np.clip(heatmap, 0, 1)
    hm = cv2.resize((hm * 255).astype(np.uint8), (w, h), interpolation=cv2.INTER_NEAREST)
    return np.concatenate([img, cv2.applyColorMap(hm, cv2.COLORMAP_JET)], axis=1)


# --- commands ----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    from polypvid.dataio import generate_synthetic, save_dataset

    out = Path(cfg.out)
    ds = generate_synthetic(cfg.synth, seed=cfg.seed)
    save_dataset(ds, out)
    cfg.write_snapshot(out)
    flashes = sum(len(v.flash_frames) for v in ds)
    print(f"wrote {len(ds)} videos ({ds.n_frames} frames, {flashes} flashes) to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    from polypvid.dataio import split_train_val
    from polypvid.model import load_checkpoint, save_checkpoint, train

    out = Path(cfg.out)
    data = _subset(_load_data(cfg, args.data), cfg.data.train_ids)
    if cfg.data.val_ratio < 1.0:
        train_set, val_set = split_train_val(data, cfg.data.val_ratio, cfg.seed)
    else:
        train_set, val_set = data, None
    model_cfg = cfg.model_config()
    resume = load_checkpoint(args.resume) if args.resume else None
    if resume is not None and resume.config.get("model") != model_cfg.to_dict():
        raise ConfigError("checkpoint model configuration differs from the run configuration")
    cfg.write_snapshot(out, {"model": model_cfg.to_dict(),
                             "train_videos": train_set.video_ids,
                             "val_videos": val_set.video_ids if val_set else []})

    log_path = out / TRAIN_LOG
    append = resume is not None and log_path.exists()
    if append:
        # drop rows that the resumed run will rewrite
        with open(log_path, newline="") as f:
            kept = [r for r in csv.DictReader(f) if int(r["epoch"]) <= resume.epoch]
    with open(log_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        if append:
            writer.writerows(kept)
        f.flush()

        state = {"best": resume.val_loss if resume and resume.val_loss is not None else float("inf")}

        def on_epoch(rec, ckpt):
            writer.writerow({
                "epoch": rec.epoch, "lr": repr(rec.lr), "train_loss": repr(rec.train_loss),
                "val_loss": "" if rec.val_loss is None else repr(rec.val_loss),
                "seconds": f"{rec.seconds:.3f}",
            })
            f.flush()
            save_checkpoint(out / LAST, ckpt)
            score = rec.val_loss if rec.val_loss is not None else rec.train_loss
            if score < state["best"]:
                state["best"] = score
                save_checkpoint(out / BEST, ckpt)
            print(f"epoch {rec.epoch} lr {rec.lr:.1e} train {rec.train_loss:.6f} "
                  f"val {rec.val_loss if rec.val_loss is None else round(rec.val_loss, 6)}")

        result = train(train_set, val_set, model_cfg, cfg.train_config(),
                       cfg.preprocess_config(model_cfg.input_size), cfg.augment.build(),
                       resume=resume, on_epoch=on_epoch, run_config=cfg.to_dict())
    if not result.history:
        print(f"nothing to do: checkpoint is already at epoch {resume.epoch}")
    if resume is not None and not (out / BEST).exists():
        save_checkpoint(out / BEST, resume)
    return EXIT_OK


def _model_and_preprocess(cfg: RunConfig, checkpoint: str):
    from polypvid.model import load_checkpoint, model_from_checkpoint

    ckpt = load_checkpoint(checkpoint)
    model = model_from_checkpoint(ckpt)
    return model, cfg.preprocess_config(model.config.input_size)


def cmd_detect(cfg: RunConfig, args) -> int:
    import cv2

    from polypvid.inference import detect_video

    if not args.checkpoint:
        raise ConfigError("detect needs --checkpoint")
    out = Path(cfg.out)
    model, pp = _model_and_preprocess(cfg, args.checkpoint)
    data = _subset(_load_data(cfg, args.data), cfg.data.eval_ids)
    cfg.write_snapshot(out, {"checkpoint": str(args.checkpoint), "n_prev": model.config.n_prev,
                             "model": model.config.to_dict()})
    lines = 0
    with open(out / DETECTIONS, "w") as f:
        for v in data:
            boxes, maps = detect_video(model, v, pp, cfg.codec.peak_threshold, cfg.codec.k_sigma)
            if len(boxes) != len(v):
                raise DataError(f"{v.video_id}: {len(boxes)} detections for {len(v)} frames")
            for t, frame_boxes in enumerate(boxes):
                rec = {"video_id": v.video_id, "frame_index": t,
                       "boxes": [b.to_dict() for b in frame_boxes]}
                f.write(json.dumps(rec) + "\n")
                lines += 1
            if cfg.detect.overlays:
                odir = out / "overlays" / v.video_id
                odir.mkdir(parents=True, exist_ok=True)
                for t, (frame, fb, hm) in enumerate(zip(v.frames, boxes, maps)):
                    img = _draw_overlay(frame, fb, hm, cfg.detect.heatmap_panel)
                    if not cv2.imwrite(str(odir / f"{t:06d}.png"), img):
                        raise DataError(f"{odir}: cannot write overlay")
    print(f"wrote {lines} detection lines to {out / DETECTIONS}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    from polypvid.evaluation import evaluate_run, latency_probe
    from polypvid.inference import prepare_frame

    if not args.detections:
        raise ConfigError("eval needs --detections")
    out = Path(cfg.out)
    dets = read_detections(args.detections)
    data = _subset(_load_data(cfg, args.data), cfg.data.eval_ids)
    n_prev = args.n_prev
    if n_prev is None:
        snap = Path(args.detections).parent / SNAPSHOT
        if snap.exists():
            n_prev = json.loads(snap.read_text()).get("resolved", {}).get("n_prev")
    report = evaluate_run(dets, data, cfg.eval.criterion(), n_prev)
    if cfg.eval.latency_repetitions:
        if not args.checkpoint:
            raise ConfigError("eval.latency_repetitions > 0 needs --checkpoint")
        model, pp = _model_and_preprocess(cfg, args.checkpoint)
        first = data.videos[0]
        stream = [prepare_frame(fr, pp)[0] for fr in first.frames]
        report.latency_ms = latency_probe(model, stream, cfg.eval.latency_repetitions).to_dict()
    cfg.write_snapshot(out, {"detections": str(args.detections), "n_prev": n_prev})
    report.save(out / REPORT)

    def fmt(v):
        return "undefined" if v is None else f"{v:.2f}%"

    print(f"sensitivity {fmt(report.sensitivity)} precision {fmt(report.precision)} "
          f"specificity {fmt(report.specificity)} -> {out / REPORT}")
    return EXIT_OK


def cmd_layout(cfg: RunConfig, args) -> int:
    from polypvid.temporal import compute_slot_layout

    n = cfg.model.n_prev if args.n_prev is None else args.n_prev
    print(compute_slot_layout(n))
    return EXIT_OK


def cmd_curves(cfg: RunConfig, args) -> int:
    from polypvid.evaluation import MetricsReport, curve_report

    reports = [MetricsReport.load(p) for p in args.reports]
    out = Path(cfg.out)
    cfg.write_snapshot(out, {"reports": [str(p) for p in args.reports]})
    res = curve_report(reports, out)
    print(f"wrote {res['csv']} and {res['plot']}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "layout": cmd_layout,
    "curves": cmd_curves,
}


# --- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polypvid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="render a synthetic video dataset")

    t = sub.add_parser("train", parents=[common], help="train a detector")
    t.add_argument("--data", help="dataset directory (overrides data.root)")
    t.add_argument("--n-prev", type=int, help="previous frames concatenated (model.n_prev)")
    t.add_argument("--epochs", type=int, help="stop after this epoch (train.epochs)")
    t.add_argument("--resume", help="checkpoint to continue from")

    d = sub.add_parser("detect", parents=[common], help="write per-frame detections as JSONL")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", help="dataset directory (overrides data.root)")
    d.add_argument("--peak-threshold", type=float, help="codec.peak_threshold")
    d.add_argument("--overlays", action="store_true", default=None, help="detect.overlays")

    e = sub.add_parser("eval", parents=[common], help="score detections against masks")
    e.add_argument("--detections", required=True, help="detections JSONL")
    e.add_argument("--data", help="dataset directory (overrides data.root)")
    e.add_argument("--criterion", choices=["centroid", "iou"], help="eval.mode")
    e.add_argument("--iou-threshold", type=float, help="eval.iou_threshold")
    e.add_argument("--n-prev", type=int, help="recorded in the report (default: from the detect run)")
    e.add_argument("--checkpoint", help="model for the optional latency probe")

    lay = sub.add_parser("layout", parents=[common], help="print the latent slot layout")
    lay.add_argument("n_prev", type=int, nargs="?")

    c = sub.add_parser("curves", parents=[common], help="plot rates against n_prev")
    c.add_argument("reports", nargs="+", help="report.json files")
    return p


def resolve_config(args) -> RunConfig:
    raw = load_config_dict(args.config) if args.config else {}
    for assignment in args.overrides:
        apply_override(raw, assignment)
    flag_keys = {
        "seed": ("seed",),
        "out": ("out",),
        "n_prev": ("model", "n_prev"),
        "epochs": ("train", "epochs"),
        "peak_threshold": ("codec", "peak_threshold"),
        "overlays": ("detect", "overlays"),
        "criterion": ("eval", "mode"),
        "iou_threshold": ("eval", "iou_threshold"),
    }
    for attr, path in flag_keys.items():
        value = getattr(args, attr, None)
        if value is None or (attr == "n_prev" and args.command in ("eval", "layout")):
            continue
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value
    return RunConfig.from_dict(raw)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
