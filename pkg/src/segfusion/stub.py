"""Reference predictors speaking the bridge wire protocol.

Runnable as ``python3 -m segfusion.stub``. The process reads framed image
requests from stdin and answers with probability maps on stdout until EOF,
which serves both bridge io modes: a per-image invocation simply closes stdin
after one frame.

Three modes:
  uniform       every pixel gets the flat distribution 1/C
  constant      every pixel gets a one-hot at ``--class-index``
  noisy-oracle  one-hot of a ground-truth map whose labels are flipped
                pixelwise with probability ``--p`` (to a uniformly random
                other class); ``--p 0`` reproduces the ground truth exactly

The noisy-oracle mode resizes its ground truth (nearest) when a request's
dimensions differ, so it stays usable behind scaled test-time aggregation.
Flip noise is seeded per frame, so identical frame sequences reproduce
identical noise.
"""

from __future__ import annotations

import argparse
import struct
import sys

import numpy as np

from .augment import derive_seed
from .core import LabelMap, ProbMap, one_hot_prob, resize_labels
from .formats import read_label_png, sfpm_to_bytes

_REQ_HEADER = struct.Struct("<4sHII")


def corrupt_labels(labels: LabelMap, p: float, num_classes: int, seed: int) -> LabelMap:
    """Flip each non-ignore pixel with probability p to a random other class."""
    rng = np.random.default_rng(seed)
    data = labels.data.copy()
    flip = (data != labels.ignore_index) & (rng.random(data.shape) < p)
    offsets = rng.integers(1, max(2, num_classes), size=data.shape)
    data[flip] = (data[flip] + offsets[flip]) % num_classes
    return LabelMap(data, labels.ignore_index)


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    have = 0
    while have < n:
        chunk = stream.read(n - have)
        if not chunk:
            break
        chunks.append(chunk)
        have += len(chunk)
    return b"".join(chunks)


def _respond(args, width: int, height: int, frame: int) -> bytes:
    c = args.classes
    if args.mode == "uniform":
        prob = np.full((c, height, width), 1.0 / c, dtype=np.float32)
        return sfpm_to_bytes(ProbMap(prob))
    if args.mode == "constant":
        prob = np.zeros((c, height, width), dtype=np.float32)
        prob[args.class_index] = 1.0
        return sfpm_to_bytes(ProbMap(prob))
    gt = args.gt_labels
    if (gt.width, gt.height) != (width, height):
        gt = resize_labels(gt, width, height)
    noisy = corrupt_labels(gt, args.p, c, derive_seed(args.seed, f"frame/{frame}"))
    return sfpm_to_bytes(one_hot_prob(noisy, c))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="segfusion-stub", description="reference predictor for the bridge protocol"
    )
    parser.add_argument("--mode", required=True, choices=["uniform", "constant", "noisy-oracle"])
    parser.add_argument("--classes", type=int, required=True)
    parser.add_argument("--class-index", type=int, default=0)
    parser.add_argument("--gt", help="ground-truth label PNG for noisy-oracle mode")
    parser.add_argument("--p", type=float, default=0.0, help="per-pixel flip probability")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if args.classes < 1:
        parser.error("--classes must be >= 1")
    if args.mode == "constant" and not (0 <= args.class_index < args.classes):
        parser.error(f"--class-index must lie in [0, {args.classes})")
    if args.mode == "noisy-oracle":
        if args.gt is None:
            parser.error("noisy-oracle mode needs --gt")
        if not (0.0 <= args.p <= 1.0):
            parser.error("--p must lie in [0, 1]")
        args.gt_labels = read_label_png(args.gt)

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    frame = 0
    while True:
        header = _read_exact(stdin, _REQ_HEADER.size)
        if not header:
            return 0
        if len(header) < _REQ_HEADER.size:
            print(f"error: truncated request header ({len(header)} bytes)", file=sys.stderr)
            return 1
        magic, version, width, height = _REQ_HEADER.unpack(header)
        if magic != b"SFIM" or version != 1:
            print(f"error: bad request frame {magic!r} v{version}", file=sys.stderr)
            return 1
        payload = _read_exact(stdin, 3 * width * height)
        if len(payload) < 3 * width * height:
            print("error: truncated request payload", file=sys.stderr)
            return 1
        stdout.write(_respond(args, width, height, frame))
        stdout.flush()
        frame += 1


if __name__ == "__main__":
    sys.exit(main())
