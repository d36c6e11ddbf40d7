"""Command-line front end: encode, decode, eval and sweep.

Exit codes: 0 success, 2 usage error, 3 data error, 4 corrupt bitstream.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

from .codec import EncodeConfig, decode, encode
from .errors import DataError, DecodeError
from .metrics import bpp, d1_psnr
from .pointcloud_io import read_ply, write_ply

log = logging.getLogger("nfcodec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DECODE = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config handling

_FIELD_TYPES = {f.name: f for f in fields(EncodeConfig)}

# command-line flag -> EncodeConfig field
_FLAG_FIELDS = {
    "lam": "lam", "channels": "J", "widths": "widths", "latent_size": "L",
    "octree_levels": "M", "cube_levels": "N", "iters": "iterations", "seed": "seed",
    "threshold_override": "threshold_override", "peak_convention": "peak_convention",
    "batch_size": "batch_size", "lr": "lr",
}


def parse_value(key: str, text: str):
    """Convert a config-file string to the type of the matching EncodeConfig field."""
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown config key {key!r}")
    default = getattr(EncodeConfig(), key)
    text = text.strip()
    try:
        if key == "widths":
            return parse_widths(text)
        if key == "threshold_override":
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None
    return text


def parse_widths(text: str) -> tuple:
    try:
        widths = tuple(int(w) for w in text.replace(" ", "").split(",") if w)
    except ValueError:
        raise UsageError(f"widths must be comma-separated integers, got {text!r}") from None
    if not widths:
        raise UsageError("empty widths")
    return widths


def read_config_file(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(key.strip(), value)
    return out


def build_config(args) -> EncodeConfig:
    """Defaults, then the config file, then explicit flags."""
    values = read_config_file(args.config) if args.config else {}
    for flag, key in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if args.no_rate_loss:
        values["rate_loss"] = False
    if args.no_init_sep:
        values["init_separation"] = False
    if args.plain_focal:
        values["distance_weighted"] = False
    try:
        cfg = EncodeConfig(**values)
        cfg.arch  # validates the layer layout
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}") from None
    return cfg


# ---------------------------------------------------------------- commands

def _load_inputs(paths, bit_depth):
    return [read_ply(p, bit_depth=bit_depth) for p in paths]


def cmd_encode(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump())
        return EXIT_OK
    if not args.inputs or not args.output:
        raise UsageError("encode needs input PLY file(s) and -o/--output")
    if len(args.inputs) > 1 and not args.group:
        raise UsageError("several inputs are coded together only with --group")
    frames = _load_inputs(args.inputs, args.bit_depth)
    depths = {f.bit_depth for f in frames}
    if len(depths) != 1:
        raise DataError(f"frames have different bit depths {sorted(depths)}")
    if depths.pop() != cfg.M + cfg.N:
        raise DataError(f"input bit depth {frames[0].bit_depth} != M + N = {cfg.M + cfg.N}")
    log.info("config:\n%s", cfg.dump())
    res = encode(frames, cfg)
    Path(args.output).write_bytes(res.data)
    for i, (rec, ref) in enumerate(zip(res.reconstruction, frames)):
        rep = d1_psnr(rec, ref, convention=cfg.peak_convention)
        log.info("frame %d: %d points, D1 PSNR %.3f dB", i, len(rec), rep.psnr_symmetric)
    print(f"bits={res.stats['total_bits']} bpp={res.stats['bpp']:.6f} "
          f"threshold={res.threshold:.6g}")
    return EXIT_OK


def frame_name(i: int) -> str:
    return f"frame_{i:04d}.ply"


def cmd_decode(args) -> int:
    data = Path(args.bitstream).read_bytes()
    frames = decode(data)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_ply(f, out / frame_name(i), format="ascii" if args.ascii else "binary")
    print(f"frames={len(frames)} points={sum(len(f) for f in frames)}")
    return EXIT_OK


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6f}"


def evaluate(refs, decs, data: bytes, peak=None, convention="3p2") -> dict:
    """bpp of ``data`` over the reference points plus per-frame and mean D1 PSNR."""
    if len(refs) != len(decs):
        raise DataError(f"{len(refs)} reference frames but {len(decs)} decoded frames")
    rows = []
    for i, (r, d) in enumerate(zip(refs, decs)):
        rep = d1_psnr(d, r, peak=peak, convention=convention)
        rows.append(dict(frame=i, points=len(r), **rep.as_dict()))
    mean = sum(r["psnr_symmetric"] for r in rows) / len(rows)
    return dict(bpp=bpp(data, refs), frames=rows, mean_psnr=mean)


def cmd_eval(args) -> int:
    refs = _load_inputs(args.ref, args.bit_depth)
    decs = _load_inputs(args.dec, args.bit_depth)
    data = Path(args.bitstream).read_bytes()
    rep = evaluate(refs, decs, data, args.peak, args.peak_convention)
    print(f"bpp={rep['bpp']:.6f}")
    for row in rep["frames"]:
        print(f"frame={row['frame']} points={row['points']} "
              f"psnr_a_to_b={_fmt(row['psnr_a_to_b'])} psnr_b_to_a={_fmt(row['psnr_b_to_a'])} "
              f"psnr={_fmt(row['psnr_symmetric'])}")
    print(f"mean_psnr={_fmt(rep['mean_psnr'])}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "points", "bpp", "mse_a_to_b", "mse_b_to_a", "psnr"])
            for row in rep["frames"]:
                w.writerow([row["frame"], row["points"], f"{rep['bpp']:.6f}", row["mse_a_to_b"],
                            row["mse_b_to_a"], _fmt(row["psnr_symmetric"])])
    return EXIT_OK


SWEEP_COLUMNS = ["lambda", "J", "widths", "bpp", "psnr", "total_bits", "y_bits", "z_bits",
                 "octree_bits", "threshold"]


def sweep(frames, base: EncodeConfig, lambdas, channels, widths_list) -> list[dict]:
    """One encode per (lambda, J, widths) combination; rows sorted by bpp."""
    rows = []
    for lam, J, widths in itertools.product(lambdas, channels, widths_list):
        cfg = EncodeConfig(**{**{f.name: getattr(base, f.name) for f in fields(base)},
                              "lam": lam, "J": J, "widths": widths})
        res = encode(frames, cfg)
        psnrs = [d1_psnr(r, f, convention=cfg.peak_convention).psnr_symmetric
                 for r, f in zip(res.reconstruction, frames)]
        rows.append({"lambda": lam, "J": J, "widths": ",".join(map(str, cfg.widths)),
                     "bpp": res.stats["bpp"], "psnr": sum(psnrs) / len(psnrs),
                     "total_bits": res.stats["total_bits"], "y_bits": res.stats["y_bits"],
                     "z_bits": res.stats["z_bits"], "octree_bits": res.stats["octree_bits"],
                     "threshold": res.threshold})
        log.info("sweep point lambda=%g J=%d widths=%s: %.4f bpp, %.3f dB", lam, J,
                 rows[-1]["widths"], rows[-1]["bpp"], rows[-1]["psnr"])
    rows.sort(key=lambda r: r["bpp"])
    return rows


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump())
        return EXIT_OK
    if not args.inputs:
        raise UsageError("sweep needs input PLY file(s)")
    if len(args.inputs) > 1 and not args.group:
        raise UsageError("several inputs are coded together only with --group")
    try:
        lambdas = [float(x) for x in args.lambdas.split(",")] if args.lambdas else [cfg.lam]
        channels = [int(x) for x in args.channel_list.split(",")] if args.channel_list else [cfg.J]
    except ValueError:
        raise UsageError("--lambdas and --channel-list take comma-separated numbers") from None
    widths_list = ([parse_widths(w) for w in args.width_list.split(";")]
                   if args.width_list else [cfg.widths])
    for lam, J, widths in itertools.product(lambdas, channels, widths_list):
        try:
            EncodeConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                            "lam": lam, "J": J, "widths": widths}).arch
        except ValueError as e:
            raise UsageError(f"invalid sweep setting: {e}") from None
    frames = _load_inputs(args.inputs, args.bit_depth)
    rows = sweep(frames, cfg, lambdas, channels, widths_list)
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) and k == "psnr" else v)
                        for k, v in r.items()})
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_encode_flags(p):
    p.add_argument("--config", help="key=value file of EncodeConfig fields")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved configuration and exit")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--channels", type=int, help="latent channels J")
    p.add_argument("--widths", type=parse_widths, help="comma-separated generator widths")
    p.add_argument("--latent-size", type=int, help="latent spatial level L (side 2^L)")
    p.add_argument("--octree-levels", type=int, help="shallow octree depth M")
    p.add_argument("--cube-levels", type=int, help="cube depth N (side 2^N)")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--group", action="store_true", help="code all inputs with one network")
    p.add_argument("--no-rate-loss", action="store_true")
    p.add_argument("--no-init-sep", action="store_true")
    p.add_argument("--plain-focal", action="store_true")
    p.add_argument("--threshold-override", type=float)
    p.add_argument("--peak-convention", choices=["3p2", "p2"])
    p.add_argument("--bit-depth", type=int, help="voxel bit depth of the inputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfcodec",
                                     description="Neural volumetric field point cloud codec")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode PLY frame(s) into one bitstream")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-o", "--output")
    _add_encode_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream to one PLY per frame")
    p.add_argument("bitstream")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--ascii", action="store_true", help="write ASCII PLY")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="bpp and D1 PSNR of decoded frames")
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--dec", nargs="+", required=True)
    p.add_argument("--bitstream", required=True)
    p.add_argument("--peak", type=float)
    p.add_argument("--peak-convention", choices=["3p2", "p2"], default="3p2")
    p.add_argument("--bit-depth", type=int)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="encode over several settings, CSV of RD points")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--channel-list", help="comma-separated J values")
    p.add_argument("--width-list", help="semicolon-separated width lists, e.g. '24,24,12;16,16,8'")
    p.add_argument("--csv")
    _add_encode_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"nfcodec: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DecodeError as e:
        print(f"nfcodec: corrupt bitstream: {e}", file=sys.stderr)
        return EXIT_DECODE
    except (DataError, OSError) as e:
        print(f"nfcodec: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
