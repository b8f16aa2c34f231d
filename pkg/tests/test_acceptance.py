"""Acceptance criteria 1-8. Each test records a PASS/FAIL line shown in the pytest summary.

Run on their own with ``pytest tests/test_acceptance.py -v -rA``. Criterion 7 trains two toy
models and takes roughly twenty minutes on one CPU core.
"""

import itertools
import json
import statistics
import time

import numpy as np
import pytest
import torch

from oracles import (
    finite_difference_check,
    frozen_history_loss,
    l2_loss_loop,
    match_frame_bruteforce,
)
from polypvid.cli import main
from polypvid.dataio import (
    AugmentPolicy,
    Dataset,
    PreprocessConfig,
    SyntheticSceneConfig,
    generate_synthetic,
    split_train_val,
)
from polypvid.evaluation import evaluate_run, latency_probe, match_frame
from polypvid.heatmap_codec import DetectionBox, decode_heatmap, encode_gaussian, extract_regions
from polypvid.inference import detect_video
from polypvid.model import (
    ModelConfig,
    TrainConfig,
    build_model,
    count_trainable_parameters,
    l2_loss,
    model_from_checkpoint,
    train,
)
from polypvid.temporal import LatentSlice, TemporalBuffer, compute_slot_layout, push_and_assemble


def test_1_slot_arithmetic(acceptance):
    t0 = time.perf_counter()
    got = {n: compute_slot_layout(n) for n in range(4)}
    table = {n: (lay.slots, lay.channels_per_slot, lay.total_channels) for n, lay in got.items()}
    expected = {0: (1, 256, 256), 1: (2, 128, 256), 2: (3, 86, 258), 3: (4, 64, 256)}
    elapsed = time.perf_counter() - t0
    ok = table == expected and elapsed < 1.0
    assert acceptance(1, ok, f"layouts {table}, {elapsed * 1e3:.2f} ms")


def test_2_codec_round_trip(acceptance):
    rng = np.random.default_rng(2024)
    size, margin = 128, 16
    t0 = time.perf_counter()
    worst = {"centre": 0.0, "size": 0.0, "conf": 1.0}
    n_ok = 0
    for _ in range(200):
        # random rotated ellipse whose bounding box is at least 20 px wide and tall
        a, b = rng.uniform(10, 30, size=2)
        theta = rng.uniform(0, np.pi)
        half_w = np.sqrt((a * np.cos(theta)) ** 2 + (b * np.sin(theta)) ** 2)
        half_h = np.sqrt((a * np.sin(theta)) ** 2 + (b * np.cos(theta)) ** 2)
        cx = rng.uniform(margin + half_w + 1, size - 1 - margin - half_w - 1)
        cy = rng.uniform(margin + half_h + 1, size - 1 - margin - half_h - 1)
        ys, xs = np.mgrid[0:size, 0:size]
        u = ((xs - cx) * np.cos(theta) + (ys - cy) * np.sin(theta)) / a
        v = (-(xs - cx) * np.sin(theta) + (ys - cy) * np.cos(theta)) / b
        mask = (u * u + v * v <= 1).astype(np.uint8)
        (region,) = extract_regions(mask)
        boxes = decode_heatmap(encode_gaussian([region], size, size))
        if len(boxes) != 1:
            worst["conf"] = 0.0
            continue
        (box,) = boxes
        centre = max(abs(box.cx - region.cx), abs(box.cy - region.cy))
        rel = max(abs(box.width - region.w_box) / region.w_box,
                  abs(box.height - region.h_box) / region.h_box)
        worst["centre"] = max(worst["centre"], centre)
        worst["size"] = max(worst["size"], rel)
        worst["conf"] = min(worst["conf"], box.confidence)
        n_ok += centre <= 1.0 and rel <= 0.10 and box.confidence >= 0.99
    elapsed = time.perf_counter() - t0
    ok = n_ok == 200 and elapsed < 10
    detail = (f"{n_ok}/200 within tolerance; worst centre {worst['centre']:.3f} px, "
              f"size {100 * worst['size']:.2f}%, confidence {worst['conf']:.4f}; {elapsed:.1f} s")
    assert acceptance(2, ok, detail)


def test_3_loss_and_gradients(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    loss_err = 0.0
    for _ in range(20):
        shape = (int(rng.integers(1, 4)), 1, int(rng.integers(2, 20)), int(rng.integers(2, 20)))
        y, p = rng.random(shape), rng.random(shape)
        ref = l2_loss_loop(y, p)
        for got in (l2_loss(y, p), float(l2_loss(torch.from_numpy(y), torch.from_numpy(p)))):
            loss_err = max(loss_err, abs(got - ref) / ref)

    micro = dict(input_size=64, stage_widths=(4, 8, 8, 8), stage_blocks=(1, 1, 1, 1),
                 decoder_widths=(8, 8, 4, 4, 4, 4), bottleneck_channels=8, scale="toy")
    errors, n_params = [], {}
    for n_prev in (0, 1):
        torch.manual_seed(0)
        model = build_model(ModelConfig(n_prev=n_prev, **micro), seed=0).double()
        model.train()
        n_params[n_prev] = count_trainable_parameters(model)
        window = torch.randn(4, n_prev + 1, 3, 64, 64, dtype=torch.float64)
        target = torch.rand(4, 1, 64, 64, dtype=torch.float64)
        # previous-frame latents are constants under backprop, so the oracle freezes them
        errors += finite_difference_check(
            model, frozen_history_loss(model, window, target), n_probe=60, seed=n_prev,
            analytic_fn=lambda: l2_loss(target, model(window)),
        )
    elapsed = time.perf_counter() - t0
    ok = (loss_err <= 1e-6 and len(errors) >= 100 and max(errors) <= 1e-4 and elapsed < 120
          and max(n_params.values()) <= 10_000)
    detail = (f"loss rel err {loss_err:.1e}; {len(errors)} probed parameters on models of "
              f"{n_params} params, "
              f"max grad rel err {max(errors):.1e}; {elapsed:.1f} s")
    assert acceptance(3, ok, detail)


def _expected_slots(frames_in_segment, slots):
    t = len(frames_in_segment) - 1
    return tuple(frames_in_segment[max(t - j, 0)] for j in range(slots))


def test_4_warmup_and_still_semantics(acceptance):
    t0 = time.perf_counter()
    checked = mismatches = 0
    for n_prev in (1, 2, 3):
        layout = compute_slot_layout(n_prev)
        # every pattern of "continue the stream" / "start over" across pushes 2..5
        for restarts in itertools.product((False, True), repeat=4):
            buf = TemporalBuffer(layout)
            segment = []
            for i, restart in enumerate((True, *restarts)):
                if restart:
                    buf.reset()
                    segment = []
                segment.append(i)
                feats = np.full((layout.channels_per_slot, 1, 1), float(i), np.float32)
                out = push_and_assemble(buf, LatentSlice(feats, i))
                c = layout.channels_per_slot
                tags = tuple(int(out.features[j * c, 0, 0]) for j in range(layout.slots))
                want = _expected_slots(segment, layout.slots)
                checked += 1
                mismatches += out.frame_indices != want or tags != want
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and checked == 3 * 16 * 5 and elapsed < 1.0
    assert acceptance(4, ok, f"{checked} pushes enumerated, {mismatches} mismatches, "
                             f"{elapsed * 1e3:.0f} ms")


def test_5_constant_cost(acceptance):
    t0 = time.perf_counter()
    counts = {n: count_trainable_parameters(build_model(ModelConfig.toy(n), seed=0))
              for n in (0, 1, 3)}
    rng = np.random.default_rng(5)
    stream = [torch.from_numpy(rng.standard_normal((3, 64, 64)).astype(np.float32))
              for _ in range(50)]
    calls = {}
    for n in range(4):
        model = build_model(ModelConfig.toy(n), seed=0)
        model.encode_calls = 0
        model.forward_stream(stream, model.new_buffer())
        calls[n] = model.encode_calls
    # alternate the two models so drift and one-off warm-up costs hit both equally
    models = {n: build_model(ModelConfig.toy(n), seed=0) for n in (0, 3)}
    rounds = {0: [], 3: []}
    for _ in range(6):
        for n, model in models.items():
            rounds[n].append(latency_probe(model, stream, repetitions=5, warmup=1).mean_ms)
    latency = {n: statistics.median(v) for n, v in rounds.items()}
    ratio = abs(latency[3] - latency[0]) / latency[0]
    elapsed = time.perf_counter() - t0
    ok = (len(set(counts.values())) == 1 and all(c == 50 for c in calls.values())
          and ratio <= 0.10 and elapsed < 300)
    detail = (f"params {counts}; encoder calls {calls}; latency n0 {latency[0]:.2f} ms vs "
              f"n3 {latency[3]:.2f} ms ({100 * ratio:.1f}% apart); {elapsed:.1f} s")
    assert acceptance(5, ok, detail)


def test_6_metric_identities_and_oracle(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    ds = generate_synthetic(SyntheticSceneConfig(n_videos=6, video_length=10), seed=6)
    identity_fail = 0
    for _ in range(30):
        dets = {}
        for v in ds:
            for t in range(len(v)):
                dets[(v.video_id, t)] = [
                    DetectionBox(*rng.uniform(0, 64, 2), 8, 8, float(rng.uniform(0.4, 1)))
                    for _ in range(rng.integers(0, 3))
                ]
        r = evaluate_run(dets, ds)
        summed = sum((x.counts for x in r.per_video.values()), start=type(r.total)())
        identity_fail += not (r.check_identities() and summed == r.total)

    oracle_fail = 0
    for _ in range(1000):
        mask = np.zeros((16, 16), np.uint8)
        for _ in range(rng.integers(0, 4)):
            y, x = rng.integers(0, 14, size=2)
            hh, ww = rng.integers(1, 6, size=2)
            mask[y:y + hh, x:x + ww] = 1
        boxes = [DetectionBox(*rng.uniform(-1, 16, 2), 3, 3, float(rng.uniform(0.4, 1)))
                 for _ in range(rng.integers(0, 6))]
        oracle_fail += tuple(match_frame(boxes, mask)) != match_frame_bruteforce(boxes, mask)
    elapsed = time.perf_counter() - t0
    ok = identity_fail == 0 and oracle_fail == 0 and elapsed < 30
    detail = (f"30 reports, {identity_fail} identity failures; 1000 fixtures, "
              f"{oracle_fail} oracle mismatches; {elapsed:.1f} s")
    assert acceptance(6, ok, detail)


# criterion 7: corpus and schedule shared by both models. The models are compared at the
# end of the schedule; during the 1e-3 phase flash false positives swing by several counts
# between neighbouring epochs, so the lowest-validation-loss epoch is close to a coin toss.
MECHANISM_SEED = 0
MECHANISM_CORPUS = SyntheticSceneConfig(n_videos=40, video_length=40, flash_probability=0.1)
MECHANISM_SCHEDULE = TrainConfig(lr_schedule=((60, 1e-3), (85, 1e-4), (100, 1e-5)),
                                 seed=MECHANISM_SEED)


@pytest.mark.slow
def test_7_mechanism_demonstration(acceptance):
    t0 = time.perf_counter()
    corpus = generate_synthetic(MECHANISM_CORPUS, seed=MECHANISM_SEED)
    train_all, test = Dataset(corpus.videos[:30]), Dataset(corpus.videos[30:])
    train_set, val_set = split_train_val(train_all, 0.85, MECHANISM_SEED)
    pp = PreprocessConfig(target_size=64)
    results = {}
    for n_prev in (0, 1):
        res = train(train_set, val_set, ModelConfig.toy(n_prev), MECHANISM_SCHEDULE, pp,
                    AugmentPolicy())
        model = model_from_checkpoint(res.last)
        dets = {}
        for v in test:
            boxes, _ = detect_video(model, v, pp)
            for t, b in enumerate(boxes):
                dets[(v.video_id, t)] = b
        results[n_prev] = evaluate_run(dets, test, n_prev=n_prev)
    elapsed = time.perf_counter() - t0
    r0, r1 = results[0], results[1]
    n_flash = sum(len(v.flash_frames) for v in test if v.label == "negative")
    ok = (r1.flash_fp_negative <= r0.flash_fp_negative
          and r1.precision is not None and r0.precision is not None
          and r1.precision >= r0.precision and elapsed < 1800)
    detail = (f"flash FP on {n_flash} negative flash frames: n0 {r0.flash_fp_negative}, "
              f"n1 {r1.flash_fp_negative}; precision n0 {r0.precision:.2f}% n1 {r1.precision:.2f}%; "
              f"specificity n0 {r0.specificity:.2f}% n1 {r1.specificity:.2f}%; "
              f"sensitivity n0 {r0.sensitivity:.2f}% n1 {r1.sensitivity:.2f}%; {elapsed / 60:.1f} min")
    assert acceptance(7, ok, detail)


def _pipeline(root, config):
    ds, tr, det, ev = (root / d for d in ("ds", "train", "detect", "eval"))
    assert main(["synth", "--config", str(config), "--out", str(ds)]) == 0
    assert main(["train", "--config", str(config), "--data", str(ds), "--out", str(tr)]) == 0
    assert main(["detect", "--config", str(config), "--data", str(ds),
                 "--checkpoint", str(tr / "best.ckpt"), "--out", str(det)]) == 0
    assert main(["eval", "--config", str(config), "--data", str(ds),
                 "--detections", str(det / "detections.jsonl"), "--out", str(ev)]) == 0
    losses = [line.split(",")[2:4] for line in (tr / "train_log.csv").read_text().splitlines()]
    return (ev / "report.json").read_bytes(), losses, tr / "config.json"


def test_8_end_to_end_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "seed": 8,
        "synth": {"n_videos": 6, "video_length": 20},
        "model": {"n_prev": 1},
        "train": {"epochs": 2, "lr_schedule": [[2, 1e-3]]},
        "codec": {"peak_threshold": 0.1},
    }))
    report_a, losses_a, snapshot = _pipeline(tmp_path / "a", config)
    # the second run is driven by the snapshot the first one wrote
    report_b, losses_b, _ = _pipeline(tmp_path / "b", snapshot)
    elapsed = time.perf_counter() - t0
    ok = report_a == report_b and losses_a == losses_b and elapsed < 900
    detail = (f"report.json identical: {report_a == report_b}; per-epoch losses identical: "
              f"{losses_a == losses_b}; {elapsed:.1f} s")
    assert acceptance(8, ok, detail)
