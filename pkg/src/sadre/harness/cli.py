"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from ..diffusion import AttackConfig, LEVELS, sadre_attack
from ..metrics import composite_d, dssim, psnr, ssim, wasserstein
from ..perturb import FAMILIES
from ..pixelio import crop, load_image, replace_luma, save_image, to_luma
from ..saliency import SaliencyConfig, estimate_saliency
from ..watermarkers import METHODS, EmbedConfig, Payload, bra, embed, extract
from .attacks import jpeg_attack, regen_from_config
from .bench import BenchConfig, emit_report, rows_markdown, run_bench, sadre_config
from .corpus import write_synth_corpus


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _is_gray(img: np.ndarray) -> bool:
    return bool(np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2]))


def _write_like(src_rgb: np.ndarray, new_y: np.ndarray, path: str):
    """Save ``new_y`` as a plane for gray sources, else as the recoloured RGB image."""
    if _is_gray(src_rgb):
        save_image(new_y, path)
    else:
        save_image(replace_luma(src_rgb, new_y), path)


def _fmt(v: float) -> str:
    return "inf" if v == float("inf") else f"{v:.4f}"


# --- subcommands -------------------------------------------------------------------

def cmd_embed(a):
    img = load_image(a.input)
    cfg = EmbedConfig(a.method, strength=a.strength, seed=a.seed, payload_len=a.payload_len)
    payload = Payload.from_hex(a.payload, a.payload_len)
    x_w = embed(to_luma(img), payload, cfg)
    _write_like(img, x_w, a.output)
    print(f"embedded {payload.to_hex()} ({len(payload)} bits, {cfg.method}, strength {cfg.k:g})")


def cmd_extract(a):
    cfg = EmbedConfig(a.method, strength=a.strength, seed=a.seed, payload_len=a.payload_len)
    got = extract(to_luma(load_image(a.input)), cfg)
    print(got.to_hex())
    if a.expect is not None:
        print(f"BRA={bra(got, Payload.from_hex(a.expect, a.payload_len)):.4f}")


def _attack_config(a) -> AttackConfig:
    params = {"noise_family": a.noise_family, "lambda_s": a.lambda_s, "lo_pct": a.lo_pct,
              "hi_pct": a.hi_pct, "search_mode": "blind"}
    mode = a.sigma_mode or ("fixed" if a.sigma is not None else "adaptive")
    params["sigma_mode"] = mode
    if a.sigma is not None:
        params["sigma"] = a.sigma
    return sadre_config(params, a.seed)


def cmd_attack(a):
    img = load_image(a.input)
    y = to_luma(img)
    if a.attack == "jpeg":
        out = jpeg_attack(y, a.quality)
    elif a.attack == "regen":
        if a.sigma is None:
            raise UsageError("regen needs --sigma")
        out = regen_from_config(y, a.sigma, _attack_config(a))
    else:
        out, trace = sadre_attack(y, _attack_config(a))
        print(trace.to_json())
    _write_like(img, out, a.output)


def cmd_eval(a):
    x = to_luma(load_image(a.a))
    y = to_luma(load_image(a.b))
    if x.shape != y.shape:
        raise ValueError(f"geometry mismatch: {x.shape} vs {y.shape}")
    wp = wasserstein(x, y, 1)
    ds = dssim(x, y)
    print(f"PSNR={_fmt(psnr(x, y))}")
    print(f"SSIM={ssim(x, y):.4f}")
    print(f"DSSIM={ds:.4f}")
    print(f"W1={wp:.4f}")
    print(f"D={composite_d(wp, ds):.4f}")
    if a.payload_expect is not None:
        cfg = EmbedConfig(a.method, strength=a.strength, seed=a.seed, payload_len=a.payload_len)
        got = extract(y, cfg)
        print(f"BRA={bra(got, Payload.from_hex(a.payload_expect, a.payload_len)):.4f}")


def cmd_mask(a):
    y = to_luma(load_image(a.input))
    m = estimate_saliency(y, SaliencyConfig(a.lo_pct, a.hi_pct))
    f = 1 << LEVELS
    heat = np.repeat(np.repeat(m, f, axis=0), f, axis=1)
    save_image(crop(heat, *y.shape), a.output)
    print(f"mask mean={m.mean():.4f} frac>0.5={np.mean(m > 0.5):.4f}")


def cmd_bench(a):
    cfg = BenchConfig.load(a.config)
    if a.workers is not None:
        cfg = dataclasses.replace(cfg, workers=a.workers)
        cfg.validate()
    res = run_bench(cfg)
    emit_report(res.rows, cfg.formats, a.output or cfg.output, res.records, res.skipped)
    sys.stdout.write(rows_markdown(res.rows, res.skipped))


def cmd_make_corpus(a):
    paths = write_synth_corpus(a.output, a.n, a.size, a.seed)
    print(f"wrote {len(paths)} images to {a.output}")


# --- parser ------------------------------------------------------------------------

def _wm_args(p):
    p.add_argument("--method", default="dwtdct", choices=METHODS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strength", type=float, default=None)
    p.add_argument("--payload-len", type=int, default=32)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sadre", description="Watermark embedding, removal attacks and benchmarking.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="embed a hex payload")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--payload", required=True, help="hex, MSB first")
    _wm_args(p)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("extract", help="blind payload extraction")
    p.add_argument("input")
    p.add_argument("--expect", default=None, help="hex payload to score BRA against")
    _wm_args(p)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("attack", help="run a removal attack")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--attack", choices=("sadre", "jpeg", "regen"), default="sadre")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--sigma-mode", choices=("fixed", "adaptive"), default=None)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--noise-family", choices=FAMILIES, default="laplace")
    p.add_argument("--lambda-s", type=float, default=1.5)
    p.add_argument("--lo-pct", type=float, default=50.0)
    p.add_argument("--hi-pct", type=float, default=95.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("eval", help="fidelity metrics between two images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--payload-expect", default=None, help="hex payload; extracts from the second image")
    _wm_args(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("mask", help="write the saliency mask as a PGM heat-map")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lo-pct", type=float, default=50.0)
    p.add_argument("--hi-pct", type=float, default=95.0)
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("bench", help="run the benchmark grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None, help="override the config's output directory")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("make-corpus", help="write a synthetic test corpus as PGM files")
    p.add_argument("output")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_corpus)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except UsageError as exc:
        print(f"sadre {args.cmd}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"sadre {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
