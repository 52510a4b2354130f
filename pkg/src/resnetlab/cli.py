"""``resnetlab`` command-line driver.

Exit codes: 0 success, 2 bad input (flags, config), 3 invalid weight file,
4 invariant violation. Every written artifact gets a sibling
``<artifact>.manifest.json``; data files are deterministic, manifests differ
only in timestamp and wall clock.
"""
import argparse
import datetime
import json
import math
import os
import sys
import time

import numpy as np

from resnetlab import __version__
from resnetlab import serialize
from resnetlab.activation import accumulate_piece, trace_forward
from resnetlab.conv import conv_mc_direct, toeplitz_mc
from resnetlab.diagnostics import TOL_CAUCHY, TOL_TAIL, diagnose
from resnetlab.generator import ConfigError, GeneratorConfig, generate
from resnetlab.model import (
    ResNetWeights,
    apply_output,
    forward_network,
    forward_resnet,
    forward_resnet_features,
    lower_to_matrix,
    pad_input,
)
from resnetlab.tensor import check_p, vec_stack

EXIT_OK, EXIT_INPUT, EXIT_WEIGHTS, EXIT_INVARIANT = 0, 2, 3, 4
VERIFY_TOL = 1e-10


class UsageError(Exception):
    pass


def manifest_path(path):
    return path + ".manifest.json"


def write_manifest(command, argv, outputs, seed, started, config=None):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "outputs": [os.path.abspath(p) for p in outputs],
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_clock_s": time.perf_counter() - started,
    }
    for out in outputs:
        with open(manifest_path(out), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")


def parse_depths(text):
    """``"0,5,10"`` or inclusive ``"start:stop:step"`` (step defaults to 1)."""
    try:
        if ":" in text:
            parts = [int(s) for s in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            depths = list(range(start, stop + 1, step))
        else:
            depths = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --depths value {text!r}") from None
    if not depths:
        raise UsageError(f"--depths {text!r} selects no depths")
    return depths


def parse_p(text):
    try:
        p = math.inf if text.strip().lower() in ("inf", "infinity") else float(text)
        return check_p(p)
    except ValueError as exc:
        raise UsageError(f"invalid --p {text!r}: {exc}") from None


def load_weights(path):
    try:
        return serialize.load(path)
    except OSError as exc:
        raise serialize.WeightFileError(f"cannot read {path}: {exc}") from None


def cmd_gen(args, argv):
    started = time.perf_counter()
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = GeneratorConfig.from_dict(json.load(fh))
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except (json.JSONDecodeError, ConfigError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from None
    serialize.save(generate(cfg), args.out)
    write_manifest("gen", argv, [args.out], cfg.seed, started, config=os.path.abspath(args.config))
    print(f"wrote {args.out}")
    return EXIT_OK


def _conv_suites(rw, dense, rng, trials):
    """Max deviations of the conv pipeline against its lowered matrix form."""
    dev = {"toeplitz": 0.0, "features": 0.0, "output": 0.0}
    layers = [(rw.sampling.masks[0], rw.c_in)] + [(m, m.shape[1]) for blk in rw.blocks for m in blk.masks]
    for _ in range(trials):
        for mask, c in layers:
            z = rng.uniform(-1.0, 1.0, size=(c, rw.d, rw.d))
            lhs = vec_stack(conv_mc_direct(z, mask))
            rhs = toeplitz_mc(mask, rw.d) @ vec_stack(z)
            dev["toeplitz"] = max(dev["toeplitz"], float(np.abs(lhs - rhs).max()))
        x = rng.uniform(0.0, 1.0, size=(rw.c_in, rw.d, rw.d))
        xin = pad_input(vec_stack(x), dense.d_res)
        h_mat = forward_network(dense, xin, dense.n)
        h_conv = vec_stack(forward_resnet_features(rw, x))
        dev["features"] = max(dev["features"], float(np.abs(h_conv - h_mat).max()))
        if rw.output_w is not None:
            diff = forward_resnet(rw, x) - apply_output(dense, h_mat)
            dev["output"] = max(dev["output"], float(np.abs(diff).max()))
    return dev


def cmd_verify(args, argv):
    started = time.perf_counter()
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    weights = load_weights(args.weights)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    deviations = {}
    if isinstance(weights, ResNetWeights):
        dense = lower_to_matrix(weights)
        deviations.update(_conv_suites(weights, dense, rng, args.trials))
    else:
        dense = weights
    traces = []
    explicit = 0.0
    for _ in range(args.trials):
        x = pad_input(rng.uniform(0.0, 1.0, size=dense.d_in), dense.d_res)
        trace = trace_forward(dense, x, dense.n)
        piece = accumulate_piece(dense, trace, dense.n)
        y = forward_network(dense, x, dense.n)
        explicit = max(explicit, float(np.abs(piece.A @ x + piece.B - y).max()))
        if args.dump_traces:
            traces.append(trace.to_json())
    deviations["explicit"] = explicit
    for name, value in deviations.items():
        print(f"{name}: max deviation {value:.3e}")
    ok = all(v <= VERIFY_TOL for v in deviations.values())
    print("PASS" if ok else f"FAIL: deviation above {VERIFY_TOL:g}")
    if args.dump_traces:
        with open(args.dump_traces, "w", encoding="utf-8") as fh:
            json.dump({"weights": os.path.abspath(args.weights), "traces": traces,
                       "deviations": deviations, "manifest": os.path.basename(manifest_path(args.dump_traces))}, fh)
            fh.write("\n")
        write_manifest("verify", argv, [args.dump_traces], args.seed, started)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_diagnose(args, argv):
    started = time.perf_counter()
    p = parse_p(args.p)
    depths = parse_depths(args.depths) if args.depths else None
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    weights = load_weights(args.weights)
    try:
        report = diagnose(weights, p=p, depths=depths, samples=args.samples, seed=args.seed,
                          tol_cauchy=args.tolerance_cauchy, tol_tail=args.tolerance_tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    outputs = [args.out_csv]
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    if args.out_json:
        doc = report.to_json()
        doc["weights"] = os.path.abspath(args.weights)
        doc["manifest"] = os.path.basename(manifest_path(args.out_json))
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        outputs.append(args.out_json)
    write_manifest("diagnose", argv, outputs, args.seed, started)
    print(f"verdict: {report.verdict}")
    print(f"S1={report.S1[-1]:.6g} S2={report.S2[-1]:.6g} productBound={report.product_bound[-1]:.6g} "
          f"tail={report.tail[-1]:.3e}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="resnetlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic weights from a JSON config")
    g.add_argument("config")
    g.add_argument("out")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="check conv/matrix and explicit/recursive equivalence")
    v.add_argument("weights")
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--dump-traces", metavar="PATH")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("diagnose", help="partial sums, product bounds, Cauchy tails and a verdict")
    d.add_argument("weights")
    d.add_argument("--p", default="1", help="norm index >= 1 or 'inf' (default 1)")
    d.add_argument("--depths", help="comma list or inclusive start:stop:step (default: all)")
    d.add_argument("--samples", type=int, default=64)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out-csv", required=True)
    d.add_argument("--out-json")
    d.add_argument("--tolerance-cauchy", type=float, default=TOL_CAUCHY)
    d.add_argument("--tolerance-tail", type=float, default=TOL_TAIL)
    d.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except serialize.WeightFileError as exc:
        print(f"error: invalid weight file: {exc}", file=sys.stderr)
        return EXIT_WEIGHTS


if __name__ == "__main__":
    sys.exit(main())
