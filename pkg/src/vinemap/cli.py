"""vinemap command line: registration, segmentation, fusion, evaluation.

Exit codes: 0 success, 1 internal failure, 2 bad input, 3 registration
failed.  A failed stage removes its partial outputs before exiting.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentationGrid, generate
from .config import PipelineConfig, derive_seed
from .errors import (
    ConfigurationError,
    ContractError,
    FormatError,
    RegistrationFailedError,
    VinemapError,
)
from .evaluate import (
    grapevine_level_report,
    leaf_level_report,
    registration_stats,
)
from .fusion import FusionMode, fuse_maps, render_overlay
from .manifest import RunManifest, stable_digest
from .raster import TileGrid, read_png, write_png
from .registration import register_pair, warp_image, warp_labels
from .segmap import (
    BaselineBackend,
    BaselineModel,
    ExternalMaskBackend,
    load_mask,
    save_mask,
    segment_tiled,
    train_baseline,
)
from .synth import write_corpus

_MODE_BY_NAME = {"AND": FusionMode.INTERSECTION, "OR": FusionMode.UNION}


class OutputTracker:
    """Remembers written paths so a failing stage can clean up."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        p = Path(path)
        self.paths.append(p)
        return p

    def discard_all(self):
        for p in self.paths:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _require_inputs(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"input file not found: {p}")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# register


def cmd_register(args, out: OutputTracker) -> int:
    _require_inputs(args.vis, args.ir)
    cfg = _load_config(args)
    vis = read_png(args.vis)
    ir = read_png(args.ir)
    result = register_pair(
        vis, ir, cfg.registration, rng_seed=derive_seed(cfg.seed, "registration")
    )
    warped, valid = warp_image(ir, result.homography, vis.shape[1], vis.shape[0])
    write_png(out.add(args.out_warped), warped)
    if args.out_mask:
        write_png(out.add(args.out_mask), (valid * 255).astype(np.uint8))
    _write_json(out.add(args.out_report), result.to_report_dict())
    if args.debug_features:
        _write_json(out.add(args.debug_features), _feature_debug_dump(vis, ir, cfg, result))
    print(
        f"registered: rmse={result.rmse:.3f}px iterations={result.iterations} "
        f"mode={result.mode} quality={result.quality}"
    )
    return 0


def _feature_debug_dump(vis, ir, cfg: PipelineConfig, result) -> dict:
    """Re-run detection/matching once to expose the raw feature data."""
    from .features import (
        build_scale_space,
        describe,
        detect,
        keypoints_to_dicts,
        match,
        matches_to_dicts,
    )
    from .raster import Channel, extract_channel, normalize

    params = cfg.registration.features
    dumps = {}
    descs = {}
    for name, channel, img in (("visible", Channel.GREEN, vis), ("infrared", Channel.NIR, ir)):
        gray = normalize(extract_channel(img, channel))
        pyramid = build_scale_space(gray, octaves=params.octaves, sublevels=params.sublevels)
        kps = detect(pyramid, threshold=params.detector_threshold,
                     max_keypoints=params.max_keypoints)
        kept, desc = describe(pyramid, kps, pattern_scale=params.pattern_scale)
        dumps[name] = keypoints_to_dicts(kept)
        descs[name] = desc
    matches = match(descs["visible"], descs["infrared"], result.match_threshold)
    dumps["matches"] = matches_to_dicts(matches)
    dumps["match_threshold"] = result.match_threshold
    return dumps


# ---------------------------------------------------------------------------
# train / segment


def _patch_pairs(image_paths, label_paths):
    if len(image_paths) != len(label_paths):
        raise ConfigurationError("--image and --labels must be given equally often")
    pairs = []
    for ip, lp in zip(image_paths, label_paths):
        _require_inputs(ip, lp)
        pairs.append((read_png(ip), load_mask(lp)))
    return pairs


def cmd_train(args, out: OutputTracker) -> int:
    pairs = _patch_pairs(args.image, args.labels)
    model = train_baseline(pairs, epochs=args.epochs, lr=args.lr, seed=args.seed)
    model.save(out.add(args.out))
    print(f"trained baseline: {model.feature_dim} features, train accuracy {model.train_accuracy:.3f}")
    return 0


def _segmentation_backend(model_path, mask_path):
    if (model_path is None) == (mask_path is None):
        raise ConfigurationError("choose exactly one of --model / --mask")
    if model_path is not None:
        _require_inputs(model_path)
        return BaselineBackend(BaselineModel.load(model_path))
    _require_inputs(mask_path)
    return ExternalMaskBackend(load_mask(mask_path))


def cmd_segment(args, out: OutputTracker) -> int:
    _require_inputs(args.image)
    cfg = _load_config(args)
    img = read_png(args.image)
    backend = _segmentation_backend(args.model, args.mask)
    grid = TileGrid.for_image(img.shape[1], img.shape[0], cfg.tile_w, cfg.tile_h)
    labels = segment_tiled(backend, img, grid, halo=cfg.halo)
    save_mask(labels, out.add(args.out))
    print(f"segmented {args.image} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# fuse / evaluate


def cmd_fuse(args, out: OutputTracker) -> int:
    _require_inputs(args.vis_mask, args.ir_mask, args.validity, args.vis_image)
    vis_map = load_mask(args.vis_mask)
    ir_map = load_mask(args.ir_mask)
    valid = None
    if args.validity:
        valid = read_png(args.validity) > 127
    disease = fuse_maps(vis_map, ir_map, valid)
    from .fusion import DISEASE_PALETTE

    save_mask(disease, out.add(args.out), palette=DISEASE_PALETTE)
    if args.overlay:
        if not args.vis_image:
            raise ConfigurationError("--overlay needs --vis-image")
        overlay = render_overlay(disease, read_png(args.vis_image))
        write_png(out.add(args.overlay), overlay)
    print(f"fused -> {args.out}")
    return 0


def _load_disease_maps(paths):
    from .fusion import DISEASE_PALETTE

    return [load_mask(p, palette=DISEASE_PALETTE) for p in paths]


def cmd_evaluate(args, out: OutputTracker) -> int:
    _require_inputs(*args.pred, *args.truth)
    if len(args.pred) != len(args.truth):
        raise ConfigurationError("--pred and --truth must list equally many maps")
    cfg = _load_config(args)
    preds = _load_disease_maps(args.pred)
    truths = _load_disease_maps(args.truth)
    modes = list(cfg.fusion_modes) if args.mode == "both" else [args.mode]
    levels = ["leaf", "grapevine"] if args.level == "both" else [args.level]
    reports = []
    for mode_name in modes:
        mode = _MODE_BY_NAME[mode_name]
        if "leaf" in levels:
            reports.append(leaf_level_report(preds, truths, mode))
        if "grapevine" in levels:
            reports.append(
                grapevine_level_report(
                    preds, truths, window=args.window or cfg.eval_window,
                    stride=args.stride or cfg.eval_stride, mode=mode,
                )
            )
    _write_json(out.add(args.out), {"reports": [r.to_dict() for r in reports]})
    for r in reports:
        print(r.to_text())
    if args.csv:
        Path(out.add(args.csv)).write_text("".join(r.to_csv() for r in reports))
    return 0


# ---------------------------------------------------------------------------
# augment / synth


def cmd_augment(args, out: OutputTracker) -> int:
    _require_inputs(args.frame, args.labels, args.grid)
    grid = (
        AugmentationGrid.from_json(Path(args.grid).read_text())
        if args.grid
        else AugmentationGrid()
    )
    frame = read_png(args.frame)
    labels = load_mask(args.labels)
    patches, skipped = generate(frame, labels, grid, frame_id=Path(args.frame).stem)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, patch in enumerate(patches):
        img_name = f"patch_{i:05d}.png"
        lab_name = f"patch_{i:05d}_labels.png"
        write_png(out.add(out_dir / img_name), patch.image)
        save_mask(patch.labels, out.add(out_dir / lab_name))
        entries.append({"image": img_name, "labels": lab_name, **patch.provenance})
    manifest = {
        "frame": str(args.frame),
        "labels": str(args.labels),
        "grid": json.loads(grid.to_json()),
        "patches": entries,
        "skipped": skipped,
    }
    _write_json(out.add(out_dir / "augment.json"), manifest)
    print(f"wrote {len(patches)} patches ({len(skipped)} grid tuples skipped) to {out_dir}")
    return 0


def cmd_synth(args, out: OutputTracker) -> int:
    manifest = write_corpus(
        args.out_dir, count=args.count, seed=args.seed, width=args.width, height=args.height
    )
    print(f"wrote {manifest['count']} synthetic pairs to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# pipeline


def _segment_stage(img, model_path, mask_path, cfg, modality):
    if (model_path is None) == (mask_path is None):
        raise ConfigurationError(
            f"{modality}: choose exactly one of a model or an external mask"
        )
    if model_path is not None:
        backend = BaselineBackend(BaselineModel.load(model_path))
        grid = TileGrid.for_image(img.shape[1], img.shape[0], cfg.tile_w, cfg.tile_h)
        return segment_tiled(backend, img, grid, halo=cfg.halo)
    return load_mask(mask_path)


def run_pipeline_pair(
    vis_path,
    ir_path,
    out_dir: Path,
    cfg: PipelineConfig,
    model_vis=None,
    model_ir=None,
    vis_mask=None,
    ir_mask=None,
    truth_vis=None,
    truth_ir=None,
    tracker: OutputTracker | None = None,
    pair_label: str = "pair",
) -> dict:
    """One full register -> segment x2 -> fuse -> evaluate chain.

    Partial outputs of a failing stage are removed before the exception
    propagates.
    """
    tracker = tracker or OutputTracker()
    try:
        return _run_pipeline_pair(
            vis_path, ir_path, out_dir, cfg, model_vis, model_ir,
            vis_mask, ir_mask, truth_vis, truth_ir, tracker, pair_label,
        )
    except Exception:
        tracker.discard_all()
        raise


def _run_pipeline_pair(
    vis_path, ir_path, out_dir, cfg, model_vis, model_ir,
    vis_mask, ir_mask, truth_vis, truth_ir, tracker, pair_label,
) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    runtimes: dict[str, float] = {}
    manifest = RunManifest(command="pipeline", version=__version__, config=cfg.to_dict())
    for p in (vis_path, ir_path, vis_mask, ir_mask, truth_vis, truth_ir):
        if p is not None:
            manifest.add_input(p)

    vis = read_png(vis_path)
    ir = read_png(ir_path)

    t0 = time.perf_counter()
    result = register_pair(
        vis, ir, cfg.registration, rng_seed=derive_seed(cfg.seed, "registration", pair_label)
    )
    warped_ir, valid = warp_image(ir, result.homography, vis.shape[1], vis.shape[0])
    runtimes["registration"] = time.perf_counter() - t0

    write_png(tracker.add(out_dir / "ir_registered.png"), warped_ir)
    write_png(tracker.add(out_dir / "ir_validity.png"), (valid * 255).astype(np.uint8))
    _write_json(tracker.add(out_dir / "registration.json"), result.to_report_dict())

    t0 = time.perf_counter()
    vis_labels = _segment_stage(vis, model_vis, vis_mask, cfg, "visible")
    runtimes["segmentation_visible"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if ir_mask is not None:
        ir_frame_labels = load_mask(ir_mask)
        ir_labels, _ = warp_labels(
            ir_frame_labels, result.homography, vis.shape[1], vis.shape[0]
        )
    else:
        ir_labels = _segment_stage(warped_ir, model_ir, None, cfg, "infrared")
    runtimes["segmentation_infrared"] = time.perf_counter() - t0

    save_mask(vis_labels, tracker.add(out_dir / "classmap_visible.png"))
    save_mask(ir_labels, tracker.add(out_dir / "classmap_infrared.png"))

    t0 = time.perf_counter()
    disease = fuse_maps(vis_labels, ir_labels, valid)
    runtimes["fusion"] = time.perf_counter() - t0

    from .fusion import DISEASE_PALETTE

    save_mask(disease, tracker.add(out_dir / "disease_map.png"), palette=DISEASE_PALETTE)
    if vis.ndim == 3:
        write_png(tracker.add(out_dir / "overlay.png"), render_overlay(disease, vis))

    metrics_payload = None
    if truth_vis is not None and truth_ir is not None:
        t0 = time.perf_counter()
        truth_disease = fuse_maps(load_mask(truth_vis), load_mask(truth_ir))
        reports = []
        for mode_name in cfg.fusion_modes:
            mode = _MODE_BY_NAME[mode_name]
            reports.append(leaf_level_report([disease], [truth_disease], mode))
            reports.append(
                grapevine_level_report(
                    [disease], [truth_disease], window=cfg.eval_window,
                    stride=cfg.eval_stride, mode=mode,
                )
            )
        metrics_payload = {"reports": [r.to_dict() for r in reports]}
        runtimes["evaluation"] = time.perf_counter() - t0
        _write_json(tracker.add(out_dir / "metrics.json"), metrics_payload)

    runtimes["total"] = sum(runtimes.values())
    manifest.runtimes = runtimes
    for p in tracker.paths:
        # keyed by name relative to the run directory so identical runs
        # in different directories produce identical manifests
        manifest.outputs[str(Path(p).relative_to(out_dir))] = stable_digest(p)
    manifest.write(out_dir / "manifest.json")
    return {
        "registration": result.to_report_dict(),
        "runtimes": runtimes,
        "metrics": metrics_payload,
    }


def cmd_pipeline(args, out: OutputTracker) -> int:
    cfg = _load_config(args)
    if args.corpus:
        return _pipeline_corpus(args, cfg)
    _require_inputs(
        args.vis, args.ir, args.model_vis, args.model_ir,
        args.vis_mask, args.ir_mask, args.truth_vis, args.truth_ir,
    )
    if args.vis is None or args.ir is None:
        raise ConfigurationError("pipeline needs --vis and --ir (or --corpus)")
    summary = run_pipeline_pair(
        args.vis,
        args.ir,
        Path(args.out_dir),
        cfg,
        model_vis=args.model_vis,
        model_ir=args.model_ir,
        vis_mask=args.vis_mask,
        ir_mask=args.ir_mask,
        truth_vis=args.truth_vis,
        truth_ir=args.truth_ir,
        tracker=out,
    )
    rt = summary["runtimes"]
    print(
        "runtimes: registration={registration:.2f}s segmentation={seg:.2f}s "
        "fusion={fusion:.2f}s total={total:.2f}s".format(
            registration=rt["registration"],
            seg=rt["segmentation_visible"] + rt["segmentation_infrared"],
            fusion=rt["fusion"],
            total=rt["total"],
        )
    )
    return 0


def _pipeline_corpus(args, cfg: PipelineConfig) -> int:
    corpus_dir = Path(args.corpus)
    manifest_path = corpus_dir / "corpus.json"
    _require_inputs(manifest_path)
    corpus = json.loads(manifest_path.read_text())
    out_root = Path(args.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    def run_one(idx_entry):
        idx, entry = idx_entry
        label = f"pair_{idx:03d}"
        return run_pipeline_pair(
            corpus_dir / entry["vis"],
            corpus_dir / entry["ir"],
            out_root / label,
            cfg,
            model_vis=args.model_vis,
            model_ir=args.model_ir,
            vis_mask=None if args.model_vis else corpus_dir / entry["labels_vis"],
            ir_mask=None if args.model_ir else corpus_dir / entry["labels_ir"],
            truth_vis=corpus_dir / entry["labels_vis"],
            truth_ir=corpus_dir / entry["labels_vis"],  # scene truth, visible frame
            pair_label=label,
        )
    items = list(enumerate(corpus["pairs"]))
    jobs = max(1, args.jobs)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(run_one, items))
    else:
        summaries = [run_one(it) for it in items]

    stats = registration_stats([s["registration"] for s in summaries])
    _write_json(out_root / "registration_stats.json", stats.to_dict())
    print(stats.to_text())
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vinemap",
        description="Visible/infrared UAV registration and vine disease mapping",
    )
    parser.add_argument("--version", action="version", version=f"vinemap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register an infrared image onto a visible one")
    p.add_argument("--vis", required=True)
    p.add_argument("--ir", required=True)
    p.add_argument("--out-warped", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-mask", default=None, help="optional validity mask PNG")
    p.add_argument("--debug-features", default=None,
                   help="dump keypoints and matches to this JSON file")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("train", help="fit the baseline pixel classifier")
    p.add_argument("--image", action="append", required=True)
    p.add_argument("--labels", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment one raster into a class map")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="baseline model JSON")
    p.add_argument("--mask", default=None, help="ingest an externally produced mask")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("fuse", help="fuse visible and infrared class maps")
    p.add_argument("--vis-mask", required=True)
    p.add_argument("--ir-mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--validity", default=None, help="registration validity mask PNG")
    p.add_argument("--overlay", default=None, help="write an overlay PNG here")
    p.add_argument("--vis-image", default=None, help="visible raster for the overlay")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="score disease maps against ground truth")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", choices=["leaf", "grapevine", "both"], default="both")
    p.add_argument("--mode", choices=["AND", "OR", "both"], default="both")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment", help="expand a labeled frame into training patches")
    p.add_argument("--frame", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", default=None, help="augmentation grid JSON")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=480)
    p.add_argument("--height", type=int, default=360)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="register, segment, fuse and evaluate")
    p.add_argument("--vis", default=None)
    p.add_argument("--ir", default=None)
    p.add_argument("--corpus", default=None, help="process a synth corpus directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--model-vis", default=None)
    p.add_argument("--model-ir", default=None)
    p.add_argument("--vis-mask", default=None)
    p.add_argument("--ir-mask", default=None)
    p.add_argument("--truth-vis", default=None, help="visible-frame ground-truth mask")
    p.add_argument("--truth-ir", default=None, help="visible-frame ground-truth infrared mask")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    tracker = OutputTracker()
    try:
        return args.func(args, tracker)
    except FileNotFoundError as exc:
        tracker.discard_all()
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, ContractError, FormatError) as exc:
        tracker.discard_all()
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    except RegistrationFailedError as exc:
        tracker.discard_all()
        print(f"error [{args.command}]: registration failed: {exc}", file=sys.stderr)
        return 3
    except VinemapError as exc:
        tracker.discard_all()
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
