"""Batch entry point: the full pipeline as subcommands.

    bathyseg convert  --input survey.tif --output survey.bgrd
    bathyseg synth    --out data/ --synthetic 60 --terrain-only 60 --seed 7
    bathyseg train    --manifest data/manifest.tsv --out model.swnn --hillshade
    bathyseg infer    --input survey.bgrd --weights model.swnn --out-prefix run1
    bathyseg eval     --manifest data/manifest.tsv --pred-dir preds/
    bathyseg bench    --input survey.bgrd --weights model.swnn
    bathyseg serve    --data-dir ~/.bathyseg

Exit codes: 0 success, 1 usage error, 2 data error. A --config file of
key=value lines overrides flags of the same name. The BATHYSEG_DATA_DIR
environment variable supplies the default data directory. Outputs are written
to a temp file and renamed, so failed runs leave no partial files.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import grid_io
from .depression import DepressionParams, infer_depression
from .detect import infer_cnn
from .errors import BathysegError, UnwritableFormat
from .grid_io import RasterFormat, format_for_path, read_grid, write_grid
from .metrics import (
    ConfusionCounts,
    PerWreck,
    RuntimeRecord,
    confusion,
    format_report,
    grouped_report,
    report,
    report_records,
    runtime_per_mb,
)
from .postprocess import detections_from_probability, to_geojson
from .segnet import NetConfig, TrainConfig, load_weights, save_weights, train
from .synthgen import (
    DatasetManifest,
    SynthConfig,
    build_dataset,
    generate_terrain,
    load_pair,
    synthetic_ship,
)

DATA_DIR_ENV = "BATHYSEG_DATA_DIR"
BACKENDS = ("cnn", "cnn-hillshade", "depression")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse calls sys.exit(2) on usage errors; map them to exit code 1
    def error(self, message):
        raise _UsageError(message)


def atomic_write(path: str | Path, data: bytes):
    """Write to a sibling temp file and rename, so failures leave no partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _apply_config_file(args: argparse.Namespace):
    """key=value lines override flags of the same name."""
    if not getattr(args, "config", None):
        return
    for line in Path(args.config).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise _UsageError(f"bad config line {line!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not hasattr(args, key):
            raise _UsageError(f"unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.strip().lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value.strip())


def build_parser() -> _Parser:
    parser = _Parser(prog="bathyseg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file overriding flags of the same name")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("convert", help="convert between raster formats")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--in-format", choices=[f.value for f in RasterFormat])
    p.add_argument("--out-format", choices=["bgrd", "asc"])

    p = sub.add_parser("synth", help="build a synthetic training dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--ships", type=int, default=4, help="procedural hull patches")
    p.add_argument("--terrains", type=int, default=4, help="procedural terrain grids")
    p.add_argument("--real", type=int, default=0)
    p.add_argument("--synthetic", type=int, default=40)
    p.add_argument("--terrain-only", type=int, default=40)
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.add_argument("--base-depth", type=float, default=90.0)
    p.add_argument("--roughness", type=float, default=1.5)
    p.add_argument("--depth-ratio-sigma", type=float, default=0.02)
    p.add_argument("--real-dir", help="directory with samples/ and labels/ .bgrd pairs")

    p = sub.add_parser("train", help="train the segmentation net")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--schedule", choices=["constant", "plateau", "onecycle"], default="onecycle")
    p.add_argument("--stages", type=int, default=3)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--hillshade", action="store_true", help="add the hillshade input channel")
    p.add_argument("--ship-weight", type=float, default=5.0)
    p.add_argument("--history-out", help="optional JSONL file for the epoch history")

    p = sub.add_parser("infer", help="run detection over a raster")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--weights")
    p.add_argument("--backend", choices=BACKENDS, default="cnn")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-area", type=float, default=10.0, help="m^2")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--extent", help="pixel rect row0,col0,nrows,ncols")
    p.add_argument("--outlines", action="store_true", help="also write outline polygons")
    p.add_argument("--min-depress", type=int, default=100)
    p.add_argument("--buffer", type=int, default=1)
    p.add_argument("--interval", type=float, default=0.2)
    p.add_argument("--min-depth", type=float, default=0.2)

    p = sub.add_parser("eval", help="score predictions against a manifest split")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--group-by", choices=["resolution", "depth"])
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--out", help="report file prefix (.txt and .jsonl)")

    p = sub.add_parser("bench", help="timed inference, reports runtime per MB")
    common(p)
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--weights")
    p.add_argument("--backend", choices=BACKENDS, default="cnn")

    p = sub.add_parser("serve", help="start the local HTTP service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8643)
    p.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV, "bathyseg-data"))
    p.add_argument("--web-root", help="static files directory for the browser UI")

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _read_raster_file(path: str, fmt_name: str | None):
    fmt = RasterFormat(fmt_name) if fmt_name else format_for_path(path)
    return read_grid(Path(path).read_bytes(), fmt)


def cmd_convert(args) -> int:
    grid = _read_raster_file(args.input, args.in_format)
    fmt = RasterFormat(args.out_format) if args.out_format else format_for_path(args.output)
    if fmt not in grid_io.WRITABLE_FORMATS:
        raise UnwritableFormat(f"{fmt.name} is not writable")
    atomic_write(args.output, write_grid(grid, fmt))
    print(f"wrote {args.output} ({grid.rows}x{grid.cols} @ {grid.pixel_size} m/px)")
    return 0


def _load_real_pairs(real_dir: str):
    root = Path(real_dir)
    pairs = []
    for sample in sorted((root / "samples").glob("*.bgrd")):
        label = root / "labels" / sample.name
        if not label.exists():
            raise BathysegError(f"missing label for {sample.name}")
        g = read_grid(sample.read_bytes(), RasterFormat.INTERNAL_BINARY)
        lg = read_grid(label.read_bytes(), RasterFormat.INTERNAL_BINARY)
        pairs.append((g, (lg.depth > 0.5).astype(np.uint8), sample.stem))
    return pairs


def cmd_synth(args) -> int:
    rngbase = args.seed
    ships = [
        synthetic_ship(
            length_m=12.0 + 3.0 * (i % 4),
            beam_m=4.0 + (i % 3),
            height_m=1.5 + 0.5 * (i % 2),
            pixel_size=args.pixel_size,
            seed=rngbase + i,
        )
        for i in range(args.ships)
    ]
    terrains = [
        generate_terrain(args.rows, args.cols, args.pixel_size, args.base_depth,
                         args.roughness, seed=rngbase + 1000 + t)
        for t in range(args.terrains)
    ]
    real_pairs = _load_real_pairs(args.real_dir) if args.real_dir else None
    cfg = SynthConfig(depth_ratio_sigma=args.depth_ratio_sigma, seed=args.seed)
    manifest = build_dataset(
        ships, terrains, (args.real, args.synthetic, args.terrain_only), cfg,
        args.out, real_pairs=real_pairs,
    )
    splits = {s: len(manifest.for_split(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(manifest.entries)} samples to {args.out} (splits {splits})")
    return 0


def cmd_train(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    net = NetConfig(
        in_channels=2 if args.hillshade else 1,
        stages=args.stages,
        base_channels=args.base_channels,
    )
    cfg = TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
        schedule=args.schedule, seed=args.seed, ship_weight=args.ship_weight,
    )
    weights, history = train(manifest, net, cfg)
    atomic_write(args.out, save_weights(weights))
    best = max(h["val_iou_ship"] for h in history)
    if args.history_out:
        import json

        atomic_write(
            args.history_out,
            ("\n".join(json.dumps(h, separators=(",", ":")) for h in history) + "\n").encode(),
        )
    print(f"wrote {args.out} (best val IoU_ship {best:.3f} over {args.epochs} epochs)")
    return 0


def _parse_extent(text: str | None):
    if not text:
        return None
    try:
        parts = [int(v) for v in text.split(",")]
        if len(parts) != 4:
            raise ValueError
    except ValueError:
        raise _UsageError(f"--extent must be row0,col0,nrows,ncols, got {text!r}") from None
    return tuple(parts)


def _run_backend(grid, args):
    if args.backend == "depression":
        params = DepressionParams(
            min_depress=getattr(args, "min_depress", 100),
            buffer=getattr(args, "buffer", 1),
            interval=getattr(args, "interval", 0.2),
            min_depth=getattr(args, "min_depth", 0.2),
        )
        return infer_depression(grid, params)
    if not args.weights:
        raise _UsageError(f"--weights is required for backend {args.backend}")
    weights = load_weights(Path(args.weights).read_bytes())
    return infer_cnn(grid, weights, use_hillshade=args.backend == "cnn-hillshade",
                     extent=_parse_extent(getattr(args, "extent", None)))


def cmd_infer(args) -> int:
    grid = _read_raster_file(args.input, None)
    if args.backend == "depression" and args.extent:
        row0, col0, nrows, ncols = _parse_extent(args.extent)
        grid = grid_io.crop_grid(grid, row0, col0, nrows, ncols)
    prob = _run_backend(grid, args)
    dset = detections_from_probability(prob, args.threshold, args.min_area)
    prefix = args.out_prefix
    atomic_write(f"{prefix}.prob.bgrd", write_grid(prob.to_grid(), RasterFormat.INTERNAL_BINARY))
    mask_grid = grid_io.GeoGrid(
        depth=dset.mask.astype(np.float32), valid=prob.valid.copy(),
        origin_easting=prob.origin_easting, origin_northing=prob.origin_northing,
        pixel_size=prob.pixel_size, crs_id=prob.crs_id,
    )
    atomic_write(f"{prefix}.mask.bgrd", write_grid(mask_grid, RasterFormat.INTERNAL_BINARY))
    atomic_write(f"{prefix}.boxes.geojson", to_geojson(dset, "boxes").encode())
    if args.outlines:
        atomic_write(f"{prefix}.outlines.geojson", to_geojson(dset, "outlines").encode())
    print(f"wrote {prefix}.prob.bgrd, {prefix}.mask.bgrd, {prefix}.boxes.geojson "
          f"({len(dset.components)} detections)")
    return 0


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(Path(args.manifest))
    entries = manifest.for_split(args.split)
    if not entries:
        raise BathysegError(f"manifest has no {args.split!r} entries")
    pred_dir = Path(args.pred_dir)
    pooled = ConfusionCounts()
    per_wreck = []
    grouped_entries = []
    for entry in entries:
        stem = Path(entry.sample_path).stem
        pred_path = pred_dir / f"{stem}.mask.bgrd"
        if not pred_path.exists():
            raise BathysegError(f"missing prediction {pred_path}")
        pred_grid = read_grid(pred_path.read_bytes(), RasterFormat.INTERNAL_BINARY)
        grid, label = load_pair(manifest, entry)
        counts = confusion(pred_grid.depth > 0.5, label, grid.valid)
        pooled = pooled + counts
        if label.any():
            denom = counts.tp + counts.fp + counts.fn
            per_wreck.append(
                PerWreck(stem, counts.tp / denom if denom else 0.0,
                         entry.resolution, entry.mean_depth)
            )
        key = entry.resolution if args.group_by == "resolution" else entry.mean_depth
        grouped_entries.append((counts, key))
    rep = report(pooled, per_wreck=per_wreck, tau=args.tau)
    if args.group_by:
        rep.groups[args.group_by] = grouped_report(grouped_entries)
    table = format_report(rep)
    print(table)
    if args.out:
        atomic_write(f"{args.out}.txt", (table + "\n").encode())
        atomic_write(f"{args.out}.jsonl", (report_records(rep) + "\n").encode())
    return 0


def cmd_bench(args) -> int:
    records = []
    for path in args.input:
        grid = _read_raster_file(path, None)
        size_mb = Path(path).stat().st_size / 1e6
        start = time.perf_counter()
        _run_backend(grid, args)
        elapsed = time.perf_counter() - start
        records.append(RuntimeRecord(path, elapsed, size_mb))
        print(f"{path}: {elapsed:.2f} s over {size_mb:.2f} MB")
    print(f"runtime per MB: {runtime_per_mb(records):.3f} s/MB")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.host, args.port, args.data_dir, web_root=args.web_root)
    return 0


_COMMANDS = {
    "convert": cmd_convert,
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except BathysegError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
