"""Wire protocol and process runner for external prediction producers.

A predictor is any executable that reads framed image requests and writes
probability maps back. The request frame is:

    magic "SFIM" (4 bytes), version u16 LE = 1, width u32 LE, height u32 LE,
    then 3*W*H bytes of interleaved RGB, row-major.

The response is the SFPM container from :mod:`segfusion.formats`. Both frames
carry explicit dimensions, so the protocol needs no delimiters and is
implementable in a few lines in any language.

Two io modes: ``per-image-invocation`` starts the command once per request
(payload on stdin, map on stdout); ``persistent-stream`` keeps one process
alive and frames requests back-to-back on its pipes. :class:`PredictorHandle`
hides the difference behind a single ``predict`` method.

Responses are validated structurally (magic, version, dims, class count,
finiteness) and numerically: per-pixel sums must lie within 1e-3 of one, and
are renormalized to exactly one before use.
"""

from __future__ import annotations

import json
import os
import select
import struct
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ImageRGB, ProbMap
from .errors import (
    BadFormat,
    BadMagic,
    BadVersion,
    ClassMismatch,
    IoFailure,
    PredictorCrash,
    PredictorTimeout,
    ProtocolError,
    SchemaError,
    TruncatedFile,
)
from .formats import sfpm_from_bytes

SFIM_MAGIC = b"SFIM"
SFIM_VERSION = 1
_SFIM_HEADER = struct.Struct("<4sHII")
_SFPM_HEADER_SIZE = 18  # magic + version + three u32 dims

IO_MODES = ("per-image-invocation", "persistent-stream")
TIMEOUT_ENV = "SEGFUSION_PREDICTOR_TIMEOUT"
DEFAULT_TIMEOUT = 60.0
NORMALIZATION_SLACK = 1e-3


@dataclass(frozen=True)
class PredictorSpec:
    """One external predictor: identity, launch command, and io contract."""

    id: str
    command: tuple[str, ...]
    expected_classes: int
    io_mode: str = "per-image-invocation"
    parallel_safe: bool = True
    timeout: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaError("predictor id must be non-empty")
        if not self.command:
            raise SchemaError(f"predictor {self.id}: command must be non-empty")
        if self.expected_classes < 1:
            raise SchemaError(
                f"predictor {self.id}: expected_classes must be >= 1, got {self.expected_classes}"
            )
        if self.io_mode not in IO_MODES:
            raise SchemaError(
                f"predictor {self.id}: io_mode must be one of {', '.join(IO_MODES)}"
            )
        if self.timeout is not None and self.timeout <= 0:
            raise SchemaError(f"predictor {self.id}: timeout must be > 0")


def effective_timeout(spec: PredictorSpec) -> float:
    """Spec timeout, else the env override, else the default."""
    if spec.timeout is not None:
        return spec.timeout
    env = os.environ.get(TIMEOUT_ENV)
    if env is not None:
        try:
            value = float(env)
        except ValueError as exc:
            raise SchemaError(f"{TIMEOUT_ENV} must be a number, got {env!r}") from exc
        if value > 0:
            return value
        raise SchemaError(f"{TIMEOUT_ENV} must be > 0, got {env!r}")
    return DEFAULT_TIMEOUT


# -- framing -----------------------------------------------------------------

def serialize_request(image: ImageRGB) -> bytes:
    header = _SFIM_HEADER.pack(SFIM_MAGIC, SFIM_VERSION, image.width, image.height)
    return header + image.data.tobytes()


def parse_request(buf: bytes) -> ImageRGB:
    """Decode one request frame (the stub side of the protocol)."""
    if len(buf) < 4 or buf[:4] != SFIM_MAGIC:
        if len(buf) >= 4:
            raise BadMagic(f"bad request magic {buf[:4]!r}")
        raise TruncatedFile(f"request is {len(buf)} bytes, shorter than its magic")
    if len(buf) < _SFIM_HEADER.size:
        raise TruncatedFile(f"request header truncated at {len(buf)} bytes")
    _, version, width, height = _SFIM_HEADER.unpack_from(buf)
    if version != SFIM_VERSION:
        raise BadVersion(f"unsupported request version {version}")
    if width < 1 or height < 1:
        raise BadFormat(f"degenerate request dims {width}x{height}")
    expected = _SFIM_HEADER.size + 3 * width * height
    if len(buf) < expected:
        raise TruncatedFile(f"request payload is {len(buf)} bytes, header promises {expected}")
    if len(buf) > expected:
        raise BadFormat(f"request has {len(buf) - expected} trailing bytes")
    data = np.frombuffer(buf, dtype=np.uint8, offset=_SFIM_HEADER.size)
    return ImageRGB(data.reshape(height, width, 3).copy())


def validate_response(buf: bytes, image: ImageRGB, spec: PredictorSpec) -> ProbMap:
    """Parse a response frame and enforce the bridge contract on it."""
    try:
        prob = sfpm_from_bytes(buf)
    except TruncatedFile as exc:
        raise PredictorCrash(f"predictor {spec.id}: response truncated: {exc}") from exc
    except (BadMagic, BadVersion, BadFormat) as exc:
        raise ProtocolError(f"predictor {spec.id}: {exc}") from exc
    if prob.num_classes != spec.expected_classes:
        raise ClassMismatch(
            f"predictor {spec.id}: sent {prob.num_classes} classes, "
            f"spec promises {spec.expected_classes}"
        )
    if (prob.width, prob.height) != (image.width, image.height):
        raise ProtocolError(
            f"predictor {spec.id}: sent {prob.width}x{prob.height} "
            f"for a {image.width}x{image.height} request"
        )
    sums = prob.data.sum(axis=0, dtype=np.float64)
    drift = np.abs(sums - 1.0).max()
    if drift > NORMALIZATION_SLACK:
        raise ProtocolError(
            f"predictor {spec.id}: per-pixel sums drift {drift:.2e} from 1 "
            f"(allowed {NORMALIZATION_SLACK:.0e})"
        )
    return ProbMap((prob.data / sums[None, :, :]).astype(np.float32))


# -- process management ------------------------------------------------------

def _read_exact(stream, n: int, deadline: float, spec_id: str) -> bytes:
    """Read exactly n bytes from a pipe before the deadline."""
    fd = stream.fileno()
    os.set_blocking(fd, False)
    chunks = []
    have = 0
    while have < n:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise PredictorTimeout(f"predictor {spec_id}: no response within timeout")
        ready, _, _ = select.select([fd], [], [], remaining)
        if not ready:
            continue
        chunk = os.read(fd, n - have)
        if not chunk:
            raise PredictorCrash(
                f"predictor {spec_id}: stream closed after {have} of {n} bytes"
            )
        chunks.append(chunk)
        have += len(chunk)
    return b"".join(chunks)


class PredictorHandle:
    """Callable session with one predictor, hiding its io mode.

    Per-image specs launch their command anew for every ``predict``;
    persistent specs keep a single child process and stream frames through
    its pipes. Handles are context managers; ``close`` is idempotent. A
    handle whose stream broke refuses further use.
    """

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        self._proc: subprocess.Popen | None = None
        self._broken = False
        # One shared pipe pair cannot interleave frames, and predictors that
        # declare themselves parallel-unsafe must never run concurrently.
        self._serialize = spec.io_mode == "persistent-stream" or not spec.parallel_safe
        self._lock = threading.Lock()
        if spec.io_mode == "persistent-stream":
            self._proc = self._spawn()

    def _spawn(self) -> subprocess.Popen:
        try:
            return subprocess.Popen(
                self.spec.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise PredictorCrash(f"predictor {self.spec.id}: cannot launch: {exc}") from exc

    def predict(self, image: ImageRGB) -> ProbMap:
        if not self._serialize:
            return self._predict_oneshot(image)
        with self._lock:
            if self.spec.io_mode == "per-image-invocation":
                return self._predict_oneshot(image)
            return self._predict_stream(image)

    def _predict_oneshot(self, image: ImageRGB) -> ProbMap:
        timeout = effective_timeout(self.spec)
        try:
            done = subprocess.run(
                self.spec.command,
                input=serialize_request(image),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise PredictorTimeout(
                f"predictor {self.spec.id}: no result within {timeout}s"
            ) from exc
        except OSError as exc:
            raise PredictorCrash(f"predictor {self.spec.id}: cannot launch: {exc}") from exc
        if done.returncode != 0:
            detail = done.stderr.decode("utf-8", "replace").strip().splitlines()
            tail = detail[-1] if detail else "no diagnostics"
            raise PredictorCrash(
                f"predictor {self.spec.id}: exit code {done.returncode}: {tail}"
            )
        return validate_response(done.stdout, image, self.spec)

    def _predict_stream(self, image: ImageRGB) -> ProbMap:
        if self._broken or self._proc is None or self._proc.poll() is not None:
            raise PredictorCrash(f"predictor {self.spec.id}: stream is not alive")
        deadline = time.monotonic() + effective_timeout(self.spec)
        try:
            self._proc.stdin.write(serialize_request(image))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._broken = True
            raise PredictorCrash(f"predictor {self.spec.id}: request pipe broke: {exc}") from exc
        try:
            header = _read_exact(self._proc.stdout, _SFPM_HEADER_SIZE, deadline, self.spec.id)
            _, _, num_classes, width, height = struct.unpack("<4sHIII", header)
            body_len = 4 * num_classes * width * height
            body = _read_exact(self._proc.stdout, body_len, deadline, self.spec.id)
        except (PredictorCrash, PredictorTimeout):
            self._broken = True
            raise
        return validate_response(header + body, image, self.spec)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self) -> PredictorHandle:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def invoke_predictor(spec: PredictorSpec, image: ImageRGB) -> ProbMap:
    """One-shot convenience: open a handle, run one prediction, close it."""
    with PredictorHandle(spec) as handle:
        return handle.predict(image)


# -- registry files ----------------------------------------------------------

REGISTRY_FORMAT = 1


def parse_registry(path: str | Path) -> tuple[PredictorSpec, ...]:
    """Load a JSON predictor registry; errors name the offending field."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"registry is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != REGISTRY_FORMAT:
        raise SchemaError(f"registry.format must be {REGISTRY_FORMAT}")
    entries = doc.get("predictors")
    if not isinstance(entries, list) or not entries:
        raise SchemaError("registry.predictors must be a non-empty list")
    specs = []
    seen = set()
    for i, entry in enumerate(entries):
        where = f"registry.predictors[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where} must be an object")
        try:
            spec = PredictorSpec(
                id=entry["id"],
                command=tuple(entry["command"]),
                expected_classes=entry["expected_classes"],
                io_mode=entry.get("io_mode", "per-image-invocation"),
                parallel_safe=entry.get("parallel_safe", True),
                timeout=entry.get("timeout"),
            )
        except (KeyError, TypeError, SchemaError) as exc:
            raise SchemaError(f"{where}: {exc}") from exc
        if spec.id in seen:
            raise SchemaError(f"{where}: duplicate predictor id {spec.id!r}")
        seen.add(spec.id)
        specs.append(spec)
    return tuple(specs)
