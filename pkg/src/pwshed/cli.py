"""Command-line front end: load, preprocess, segment, verify, export.

Exit status is 0 on success, 2 for bad configuration or unreadable input and
3 when ``--verify`` finds a difference from the sequential reference.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .fileio import FormatError, RunRecord, export_labels, load_image
from .grid import ConfigError, Connectivity, check_connectivity
from .oracle import compare_partitions, sequential_watershed
from .preprocess import PreprocessConfig, preprocess
from .waterfall import HierarchyError, build_hierarchy
from .watershed import Resolution, Variant, WatershedConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3

log = logging.getLogger("pwshed")


def _tile(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"tile must look like 16x16 or 8x8x8, got {text!r}")
    if not 1 <= len(dims) <= 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad tile dimensions {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwshed", description=__doc__.splitlines()[0])
    ap.add_argument("--input", required=True, help="PGM or PWV1 file")
    ap.add_argument("--format", choices=("auto", "pgm", "pwv"), default="auto")
    ap.add_argument("--variant", choices=[v.value for v in Variant], default="pruf")
    ap.add_argument("--strategy", choices=[r.value for r in Resolution], default="bal")
    ap.add_argument("--conn", type=int, choices=(4, 8, 6, 26), default=None,
                    help="neighbourhood (default 4 in 2D, 6 in 3D)")
    ap.add_argument("--rr", type=int, default=6, help="path reduction rate")
    ap.add_argument("--tile", type=_tile, default=None, help="tile size, e.g. 16x16 or 8x8x8")
    ap.add_argument("--layers", type=int, default=1, help="hierarchy layers")
    ap.add_argument("--sigma", type=float, default=0.0, help="Gaussian blur sigma (0 = off)")
    ap.add_argument("--gradient", action="store_true", help="segment the gradient magnitude")
    ap.add_argument("--repeats", type=int, default=10, help="runs; timings report the minimum")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--verify", action="store_true", help="check layer 0 against the sequential reference")
    ap.add_argument("--out", default=None, help="directory for label files")
    ap.add_argument("--report", default=None, help="write the run record here")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def _verify(img, first_layer, cfg: WatershedConfig, conn: Connectivity) -> bool:
    expected = sequential_watershed(img, conn)
    if cfg.resolution is Resolution.ASYNC:
        # tile-local iteration divides plateaux differently; only the basin
        # count is fixed
        got, want = len(np.unique(first_layer)), len(np.unique(expected))
        if got != want:
            log.error("verify: %d regions, reference has %d", got, want)
        return got == want
    report = compare_partitions(first_layer, expected)
    if not report.partitions_equal:
        log.error("verify: partitions differ at pixel %s", report.first_mismatch)
        return False
    if not np.array_equal(first_layer.reshape(-1), expected.reshape(-1)):
        log.error("verify: same partition but different representatives")
        return False
    return True


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    try:
        img = load_image(args.input, args.format)
        pre = PreprocessConfig(gaussian_sigma=args.sigma, gradient=args.gradient)
        img = preprocess(img, pre)
        conn = Connectivity.from_count(args.conn) if args.conn else None
        if conn is not None:
            check_connectivity(img.dims, conn)
        if args.tile is not None and len(args.tile) != img.ndim:
            raise ConfigError(f"--tile has {len(args.tile)} extents for a {img.ndim}D image")
        if args.repeats < 1 or args.layers < 1:
            raise ConfigError("--repeats and --layers must be >= 1")
        cfg = WatershedConfig(
            variant=Variant(args.variant),
            resolution=Resolution(args.strategy),
            connectivity=conn,
            reduction_rate=args.rr,
            tile_dims=args.tile,
            workers=args.workers,
        )
        conn = cfg.resolve_connectivity(img.ndim)
        record = RunRecord(config={
            "input": args.input,
            "dims": "x".join(map(str, img.dims)),
            "variant": cfg.variant.value,
            "strategy": cfg.resolution.value,
            "conn": conn.size,
            "rr": cfg.reduction_rate,
            "tile": "x".join(map(str, cfg.resolve_tiles(img.ndim)[3 - img.ndim:])),
            "layers": args.layers,
            "sigma": args.sigma,
            "gradient": args.gradient,
        })
        hierarchy = None
        for _ in range(args.repeats):
            hierarchy = build_hierarchy(img, cfg, args.layers)
            record.add_run(hierarchy.layer_timings)
        record.region_counts = list(hierarchy.region_counts)
    except (ConfigError, FormatError, OSError, ValueError) as exc:
        log.error("error: %s", exc)
        return EXIT_CONFIG
    except HierarchyError as exc:
        log.error("error: %s", exc)
        return EXIT_VERIFY

    status = EXIT_OK
    if args.verify:
        ok = _verify(img, hierarchy.layers[0], cfg, conn)
        record.verification = "pass" if ok else "fail"
        if not ok:
            status = EXIT_VERIFY
    if args.out:
        export_labels(hierarchy, args.out, conn)
    if args.report:
        record.write(args.report)
    log.info("regions per layer: %s", " ".join(map(str, record.region_counts)))
    if record.verification:
        log.info("verification: %s", record.verification)
    return status


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
