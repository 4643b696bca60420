"""rlprune-export command line entry point."""

import argparse
import sys

from .convert import ImportSpec, export_checkpoint, verify_parity
from .errors import ExportError, ParityError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rlprune-export",
        description="Convert an ONNX checkpoint (operator subset) to the "
                    "rlpmodel format")
    parser.add_argument("src", help="ONNX source file")
    parser.add_argument("dst", help="output stem (writes <dst>.rlpm.json/.bin)")
    parser.add_argument("--input-shape", default=None, metavar="C,H,W",
                        help="override / supply the input shape")
    parser.add_argument("--verify", type=int, default=0, metavar="N",
                        help="check parity on N seeded random inputs")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threshold", type=float, default=1e-4)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    shape = None
    if args.input_shape:
        try:
            shape = tuple(int(v) for v in args.input_shape.split(","))
        except ValueError:
            print(f"error: bad --input-shape {args.input_shape!r}",
                  file=sys.stderr)
            return 2
    try:
        spec = ImportSpec(args.src, input_shape=shape)
        jpath, bpath = export_checkpoint(spec, args.dst)
        print(f"wrote {jpath} and {bpath}")
        if args.verify > 0:
            report = verify_parity(args.src, args.dst, args.verify, args.seed,
                                   args.threshold)
            print(f"parity: max deviation {report.max_deviation:.3e} over "
                  f"{report.inputs} inputs (threshold {report.threshold:g})")
            if not report.passed:
                raise ParityError(f"deviation {report.max_deviation:.3e} "
                                  f"exceeds {report.threshold:g}")
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
