"""``kpacdeblur`` command-line interface.

Every invocation ends with one ``RESULT key=value ...`` line on stdout.
Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from .deconv import BlendWeights, convolve_circular, deconvolve, multiscale_deconvolve
from .errors import KpacError
from .experiments import approx_experiment, base_grid_size, validate_dilate, validate_eq4
from .image import Image, mae, make_kernel, psnr
from .net.model import NetworkConfig, flops_estimate, net_forward, param_count
from .net.train import TOY_CONFIG, evaluate, make_blur_dataset, train_toy
from .net.weights_io import load_weights, save_weights
from .netpbm import load_netpbm, save_netpbm
from .spectral import DEFAULT_EPS, embed_kernel, wiener_inverse_kernel

__all__ = ["main", "build_parser", "format_result"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v).replace(" ", "_")


def format_result(**fields) -> str:
    return "RESULT " + " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


# -- argument types ---------------------------------------------------------
def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> tuple:
    parts = text.replace("x", ",").split(",")
    try:
        h, w = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected H,W, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"grid sizes must be positive, got {text!r}")
    return h, w


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v

    return parse


def _add_kernel_args(p, size=True):
    p.add_argument("--kind", choices=("disc", "gaussian"), required=True)
    p.add_argument("--param", type=_positive(float), required=True, help="disc radius or gaussian sigma")
    if size:
        p.add_argument("--size", type=_positive(int), default=None, help="odd kernel size (default: smallest valid)")


def _add_experiment_args(p):
    _add_kernel_args(p, size=False)
    p.add_argument("--grid", type=_grid, default=(127, 127), help="image size H,W")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--seed", type=int, default=0)


# -- subcommands ------------------------------------------------------------
def cmd_blur(a):
    x = load_netpbm(a.inp)
    k = make_kernel(a.kind, a.param, a.size)
    y = convolve_circular(x, k)
    save_netpbm(y, a.out, a.bit_depth)
    return {"height": x.height, "width": x.width, "ksize": k.size}


def cmd_invert(a):
    k = make_kernel(a.kind, a.param, a.size)
    h, w = a.grid
    g = wiener_inverse_kernel(k, a.eps, h, w)
    lo, hi = float(g.min()), float(g.max())
    if a.out_vis:
        vis = np.fft.fftshift(g)
        vis = (vis - lo) / (hi - lo) if hi > lo else np.zeros_like(vis)
        save_netpbm(Image(vis[:, :, None]), a.out_vis)
    return {"min": lo, "max": hi, "sum": float(g.sum())}


def cmd_deblur(a):
    y = load_netpbm(a.inp)
    k = make_kernel(a.kind, a.param, a.size)
    if a.scales is None:
        if a.weights is not None:
            raise UsageError("--weights needs --scales")
        x = deconvolve(y, wiener_inverse_kernel(k, a.eps, y.height, y.width))
    else:
        blend = BlendWeights.uniform(a.scales) if a.weights is None else BlendWeights(a.scales, a.weights)
        m = base_grid_size(min(y.height, y.width), max(a.scales))
        kdag = wiener_inverse_kernel(embed_kernel(k, m, m), a.eps)
        x = multiscale_deconvolve(y, kdag, blend, a.mode)
    save_netpbm(x, a.out, a.bit_depth)
    return {"height": y.height, "width": y.width}


def cmd_approx(a):
    r = approx_experiment(a.kind, a.param, a.target, a.scales, a.grid, a.eps, a.seed)
    out = {"uniform": r.uniform_accuracy, "nnls": r.fitted_accuracy}
    for i, wgt in enumerate(r.fitted.weights, start=1):
        out[f"w{i}"] = float(wgt)
    return out


def cmd_validate(fn):
    def run(a):
        r = fn(a.kind, a.param, a.s, a.grid, a.eps, a.seed)
        return {"psnr": r.psnr_between, "psnr_ref": r.psnr_reference, "psnr_cand": r.psnr_candidate}

    return run


def _config(a):
    return NetworkConfig(levels=a.levels, blocks=a.blocks, k=a.k, n=a.n, share_weights=not a.unshared)


def cmd_kpac_info(a):
    cfg = _config(a)
    w, h = a.res
    return {"params": param_count(cfg), "flops": float(flops_estimate(cfg, h, w)), "res": f"{w}x{h}"}


def cmd_kpac_infer(a):
    weights = load_weights(a.weights)
    x = load_netpbm(a.inp)
    out = net_forward(x.data[None], weights)[0]
    save_netpbm(Image(out), a.out, a.bit_depth)
    return {"height": x.height, "width": x.width}


def cmd_kpac_train(a):
    cfg = NetworkConfig.from_dict({**TOY_CONFIG.to_dict(), "width": a.width})
    train = make_blur_dataset(a.train_size, seed=a.seed)
    test = make_blur_dataset(a.test_size, seed=a.seed + 10_000)
    w, curve = train_toy(cfg, train, a.steps, seed=a.seed, lr=a.lr)
    base = float(np.mean(np.abs(test.blurred - test.sharp)))
    held = evaluate(w, test)
    if a.out_weights:
        save_weights(w, a.out_weights)
    return {"steps": a.steps, "loss": curve[-1][1] if curve else float("nan"), "blurred_mae": base,
            "heldout_mae": held, "improvement": 1.0 - held / base}


def cmd_metrics(a):
    x, y = load_netpbm(a.a), load_netpbm(a.b)
    return {"psnr": psnr(x, y), "mae": mae(x, y)}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kpacdeblur", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        p.set_defaults(func=fn)
        return p

    p = add("blur", cmd_blur, "blur a netpbm image with a disc or gaussian kernel")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_kernel_args(p)
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)

    p = add("invert", cmd_invert, "compute a Wiener inverse kernel")
    _add_kernel_args(p)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--grid", type=_grid, default=(127, 127), help="inverse-kernel grid H,W")
    p.add_argument("--out-vis", default=None, help="write the centered grid, rescaled to [0,1], as P5")

    p = add("deblur", cmd_deblur, "deconvolve with a single or multi-scale inverse kernel")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_kernel_args(p)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--scales", type=_floats, default=None)
    p.add_argument("--weights", type=_floats, default=None)
    p.add_argument("--mode", choices=("upsample", "dilate"), default="upsample")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)

    p = add("approx", cmd_approx, "blend bracketing scales to approximate a target scale")
    _add_experiment_args(p)
    p.add_argument("--target", type=_positive(float), default=3.5)
    p.add_argument("--scales", type=_floats, default=(3.0, 4.0))

    for name, fn in (("validate-eq4", validate_eq4), ("validate-dilate", validate_dilate)):
        p = add(name, cmd_validate(fn), "upsampled-inverse equivalence experiment")
        _add_experiment_args(p)
        p.add_argument("--s", type=_positive(int), default=5, help="integer scale factor")

    p = add("kpac-info", cmd_kpac_info, "parameter count and FLOPs of a KPAC network")
    p.add_argument("--levels", type=int, choices=(2, 3), default=3)
    p.add_argument("--blocks", type=_positive(int), default=2)
    p.add_argument("--k", type=_positive(int), default=5)
    p.add_argument("--n", type=_positive(int), default=5)
    p.add_argument("--unshared", action="store_true", help="independent taps per atrous branch")
    p.add_argument("--res", type=_grid, default=(1280, 720), help="resolution WxH")

    p = add("kpac-infer", cmd_kpac_infer, "run a trained network on an image")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)

    p = add("kpac-train", cmd_kpac_train, "train a toy network on synthetic blur")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-weights", default=None)
    p.add_argument("--width", type=_positive(int), default=TOY_CONFIG.width)
    p.add_argument("--lr", type=_positive(float), default=1e-4)
    p.add_argument("--train-size", type=_positive(int), default=256)
    p.add_argument("--test-size", type=_positive(int), default=32)

    p = add("metrics", cmd_metrics, "PSNR and MAE between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "steps", 0) < 0:
            raise UsageError("--steps must be nonnegative")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        print(format_result(error="usage"))
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        fields = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(format_result(error="usage"))
        return 2
    except (KpacError, OSError) as exc:
        print(f"kpacdeblur {args.command}: {exc}", file=sys.stderr)
        print(format_result(error=type(exc).__name__))
        return 1
    print(format_result(**fields))
    return 0


if __name__ == "__main__":
    sys.exit(main())
