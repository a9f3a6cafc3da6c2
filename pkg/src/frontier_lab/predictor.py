"""Global map prediction: ensemble interface, built-in predictors, and the
out-of-process predictor wire protocol.

A predictor fills the unknown part of an observed grid with occupancy
probabilities. Known cells always pass through exactly (Free -> 0.0,
Occupied -> 1.0): the pass-through is enforced here at the interface, so a
member's raw output only matters where the observed map is Unknown.
"""

from __future__ import annotations

import json
import shlex
import socket
import struct
import subprocess
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .grids import (
    UNKNOWN,
    OccupancyGrid,
    ProbabilityGrid,
    to_grayscale,
)

NOISE_AMPLITUDE = 0.1


class PredictionError(RuntimeError):
    """External predictor failed (timeout, protocol violation, dead process)."""


class Predictor:
    """Interface: raw per-cell occupancy probabilities for an observed grid."""

    def predict_raw(self, observed: OccupancyGrid) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:  # external predictors hold connections
        pass


def apply_passthrough(raw: np.ndarray, observed: OccupancyGrid) -> np.ndarray:
    """Force known cells to their observed encoding; keep raw elsewhere."""
    out = np.asarray(raw, dtype=np.float64).copy()
    known = observed.known_mask()
    out[known] = observed.cells[known]
    return out


@dataclass
class PredictionBundle:
    """K member predictions plus their per-cell mean and population variance."""

    members: list[ProbabilityGrid]
    mean: ProbabilityGrid
    variance: np.ndarray

    @property
    def k(self) -> int:
        return len(self.members)


def predict(observed: OccupancyGrid, ensemble: Sequence[Predictor]) -> PredictionBundle:
    if not ensemble:
        raise ValueError("ensemble must be non-empty")
    members = []
    for p in ensemble:
        raw = p.predict_raw(observed)
        if raw.shape != observed.shape:
            raise PredictionError(
                f"{type(p).__name__} returned shape {raw.shape}, expected {observed.shape}"
            )
        members.append(apply_passthrough(raw, observed))
    stack = np.stack(members).astype(np.float64)
    mean = stack.mean(axis=0)
    variance = stack.var(axis=0)  # population variance: K is tiny and fixed
    return PredictionBundle(
        members=[ProbabilityGrid(m, observed.resolution) for m in members],
        mean=ProbabilityGrid(mean, observed.resolution),
        variance=variance,
    )


class NullPredictor(Predictor):
    """Maximum-entropy prediction: 0.5 everywhere it is allowed to guess."""

    def predict_raw(self, observed: OccupancyGrid) -> np.ndarray:
        return np.full(observed.shape, 0.5, dtype=np.float64)


class OracleLeakPredictor(Predictor):
    """Test-double with tunable accuracy: box-blurred ground truth plus
    seeded per-cell noise in [-0.1, 0.1], clamped to [0, 1].

    The noise field is a pure function of (seed, grid shape): the same seed
    always produces the same output, and distinct seeds across ensemble
    members create variance exactly where the map is unknown.
    """

    def __init__(
        self,
        truth: OccupancyGrid,
        blur_radius: int = 3,
        noise_seed: int = 0,
        noise_amplitude: float = NOISE_AMPLITUDE,
    ):
        if blur_radius < 0:
            raise ValueError("blur_radius must be >= 0")
        if noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        self.truth = truth
        self.blur_radius = blur_radius
        self.noise_seed = noise_seed
        self.noise_amplitude = noise_amplitude

    def predict_raw(self, observed: OccupancyGrid) -> np.ndarray:
        if observed.shape != self.truth.shape:
            raise ValueError("observed shape differs from truth shape")
        base = self.truth.cells.astype(np.float64)
        if self.blur_radius > 0:
            base = ndimage.uniform_filter(base, size=2 * self.blur_radius + 1, mode="nearest")
        if self.noise_amplitude > 0:
            base = base + np.random.default_rng(self.noise_seed).uniform(
                -self.noise_amplitude, self.noise_amplitude, size=observed.shape
            )
        return np.clip(base, 0.0, 1.0)


class MorphologicalInpaintPredictor(Predictor):
    """Learning-free baseline: an unknown cell within `radius` (Chebyshev) of
    known space takes the 1/distance-weighted average of the known cells'
    encoding; unknown cells farther than that take 0.5."""

    def __init__(self, radius: int = 10):
        if radius < 1:
            raise ValueError("radius must be >= 1")
        self.radius = radius

    def predict_raw(self, observed: OccupancyGrid) -> np.ndarray:
        known = observed.known_mask()
        values = np.where(known, observed.cells.astype(np.float64), 0.0)
        h, w = observed.shape
        wsum = np.zeros((h, w))
        vsum = np.zeros((h, w))
        r = self.radius
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                d = max(abs(dy), abs(dx))
                if d == 0:
                    continue
                weight = 1.0 / d
                ys0, ys1 = max(0, -dy), min(h, h - dy)
                xs0, xs1 = max(0, -dx), min(w, w - dx)
                src = (slice(ys0 + dy, ys1 + dy), slice(xs0 + dx, xs1 + dx))
                dst = (slice(ys0, ys1), slice(xs0, xs1))
                k = known[src]
                wsum[dst] += weight * k
                vsum[dst] += weight * values[src] * k
        out = np.full((h, w), 0.5)
        reached = wsum > 0
        out[reached] = vsum[reached] / wsum[reached]
        out[known] = observed.cells[known]
        return out


# ---------------------------------------------------------------------------
# External predictor wire protocol.
#
# Each message is framed as: 8-byte little-endian unsigned payload length,
# then the payload itself: a UTF-8 JSON header line (newline-terminated)
# followed by the raw body. Requests carry {"width": W, "height": H,
# "dtype": "u8"} and W*H bytes using the 0/128/255 grayscale encoding for
# Occupied/Unknown/Free; responses carry "dtype": "f32" and W*H little-endian
# 32-bit floats, row-major, in [0, 1]. One request is in flight per endpoint
# at a time.
# ---------------------------------------------------------------------------

_LEN = struct.Struct("<Q")


def write_frame(write, header: dict, body: bytes) -> None:
    payload = json.dumps(header).encode() + b"\n" + body
    write(_LEN.pack(len(payload)))
    write(payload)


def read_frame(read_exact) -> tuple[dict, bytes]:
    (n,) = _LEN.unpack(read_exact(8))
    payload = read_exact(n)
    nl = payload.find(b"\n")
    if nl < 0:
        raise PredictionError("frame header missing newline terminator")
    try:
        header = json.loads(payload[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise PredictionError(f"bad frame header: {e}") from e
    return header, payload[nl + 1 :]


def encode_request(observed: OccupancyGrid) -> tuple[dict, bytes]:
    raster = to_grayscale(observed)
    header = {"width": observed.width, "height": observed.height, "dtype": "u8"}
    return header, raster.tobytes()


def decode_response(header: dict, body: bytes, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    if header.get("dtype") != "f32":
        raise PredictionError(f"response dtype {header.get('dtype')!r}, expected 'f32'")
    if header.get("width") != w or header.get("height") != h:
        raise PredictionError("response dimensions do not match the request")
    if len(body) != w * h * 4:
        raise PredictionError(f"response body {len(body)} bytes, expected {w * h * 4}")
    out = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    if not np.isfinite(out).all() or out.min() < 0.0 or out.max() > 1.0:
        raise PredictionError("response probabilities outside [0, 1]")
    return out


class ExternalPredictor(Predictor):
    """Out-of-process predictor reached over `tcp://host:port` or
    `stdio:<command line>` (the command is spawned once and kept alive)."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._proc: subprocess.Popen | None = None
        if endpoint.startswith("tcp://"):
            host, _, port = endpoint[len("tcp://") :].partition(":")
            if not port:
                raise ValueError(f"tcp endpoint needs host:port, got {endpoint!r}")
            self._sock = socket.create_connection((host, int(port)), timeout=timeout_s)
        elif endpoint.startswith("stdio:"):
            cmd = shlex.split(endpoint[len("stdio:") :])
            if not cmd:
                raise ValueError("stdio endpoint needs a command")
            self._proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        else:
            raise ValueError(f"endpoint must start with tcp:// or stdio:, got {endpoint!r}")

    def _write(self, data: bytes) -> None:
        try:
            if self._sock is not None:
                self._sock.sendall(data)
            else:
                assert self._proc is not None and self._proc.stdin is not None
                self._proc.stdin.write(data)
                self._proc.stdin.flush()
        except (OSError, ValueError, BrokenPipeError) as e:
            raise PredictionError(f"write to {self.endpoint} failed: {e}") from e

    def _read_exact(self, n: int) -> bytes:
        chunks, got = [], 0
        while got < n:
            try:
                if self._sock is not None:
                    chunk = self._sock.recv(n - got)
                else:
                    assert self._proc is not None and self._proc.stdout is not None
                    chunk = self._proc.stdout.read(n - got)
            except (OSError, socket.timeout) as e:
                raise PredictionError(f"read from {self.endpoint} failed: {e}") from e
            if not chunk:
                raise PredictionError(f"{self.endpoint} closed mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def predict_raw(self, observed: OccupancyGrid) -> np.ndarray:
        header, body = encode_request(observed)
        with self._lock:  # one in-flight request per endpoint
            write_frame(self._write, header, body)
            resp_header, resp_body = read_frame(self._read_exact)
        return decode_response(resp_header, resp_body, observed.shape)

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)


def oracle_ensemble(
    truth: OccupancyGrid,
    blur_radius: int = 3,
    seeds: Sequence[int] = (0, 1, 2),
    noise_amplitude: float = NOISE_AMPLITUDE,
) -> list[Predictor]:
    """Default K=3 ensemble: one leaky oracle per seed, so variance is
    nonzero precisely where the map is still unknown."""
    return [OracleLeakPredictor(truth, blur_radius, s, noise_amplitude) for s in seeds]
