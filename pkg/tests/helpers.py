"""Independent oracles and scripted peers for the test suite.

Everything here is deliberately written from the documented contracts,
not by calling into the package's own code paths: brute-force pixel
math, a pure-Python forward simulation of the paddle dynamics, a
hand-rolled client-message parser, and small scripted servers.
"""

from __future__ import annotations

import random
import socket
import struct
import threading


# -- paddle dynamics oracle --------------------------------------------------

CONTROL_GAIN = 0.004
DRIFT_GAIN = 0.002
SEED_STRIDE = 0x9E3779B97F4A7C15


def oracle_episode_seed(base_seed: int, episode: int) -> int:
    return (base_seed + episode * SEED_STRIDE) & 0xFFFFFFFFFFFFFFFF


def oracle_start_position(base_seed: int, episode: int) -> float:
    seed = oracle_episode_seed(base_seed, episode)
    return random.Random(seed).uniform(-0.1, 0.1)


def oracle_step(p: float, v: float, tilt: int) -> tuple[float, float]:
    v = v + CONTROL_GAIN * tilt + DRIFT_GAIN * p
    p = p + v
    return p, v


def oracle_trajectory(p0: float, v0: float, tilts) -> list[tuple[float, float]]:
    """(p, v) after each tick for a fixed tilt sequence."""
    points = []
    p, v = p0, v0
    for tilt in tilts:
        p, v = oracle_step(p, v, tilt)
        points.append((p, v))
    return points


def oracle_survival_ticks(p0: float, tilt_fn, max_ticks: int = 100000) -> int:
    """Ticks until |p| > 1 under tilt_fn(tick_index, p, v)."""
    p, v = p0, 0.0
    for tick in range(1, max_ticks + 1):
        p, v = oracle_step(p, v, tilt_fn(tick - 1, p, v))
        if abs(p) > 1.0:
            return tick
    raise AssertionError(f"no terminal within {max_ticks} ticks")


# -- pixel math oracles ------------------------------------------------------


def oracle_gray(r: int, g: int, b: int) -> int:
    """Luminance of one 0..255 RGB pixel, exact half-up rational."""
    return (299 * r + 587 * g + 114 * b + 500) // 1000


def oracle_downsample(values, in_w: int, in_h: int, out_w: int, out_h: int):
    """Brute-force box means over floor-partitioned cells (half-up)."""
    def edges(size, parts):
        return [(i * size) // parts for i in range(parts + 1)]

    row_edges = edges(in_h, out_h)
    col_edges = edges(in_w, out_w)
    out = []
    for i in range(out_h):
        row = []
        for j in range(out_w):
            total = 0
            count = 0
            for y in range(row_edges[i], row_edges[i + 1]):
                for x in range(col_edges[j], col_edges[j + 1]):
                    total += values[y][x]
                    count += 1
            row.append((2 * total + count) // (2 * count))
        out.append(row)
    return out


def oracle_ball_columns(position: float) -> range:
    """Lit ball columns for a position, from the documented geometry."""
    center = int((position + 1.0) / 2.0 * 151 + 0.5)
    return range(max(0, center - 4), min(160, center + 4))


# -- reference wire parsing --------------------------------------------------


def reference_parse_client_message(data: bytes) -> tuple[str, dict, int]:
    """Hand-rolled RFC-layout parser: (kind, fields, consumed)."""
    kind = data[0]
    if kind == 0:
        fmt = data[4:20]
        fields = {
            "bpp": fmt[0],
            "depth": fmt[1],
            "big_endian": fmt[2],
            "true_color": fmt[3],
            "red_max": (fmt[4] << 8) | fmt[5],
            "green_max": (fmt[6] << 8) | fmt[7],
            "blue_max": (fmt[8] << 8) | fmt[9],
            "red_shift": fmt[10],
            "green_shift": fmt[11],
            "blue_shift": fmt[12],
        }
        return "set_pixel_format", fields, 20
    if kind == 2:
        count = (data[2] << 8) | data[3]
        encodings = []
        for i in range(count):
            raw = int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big", signed=True)
            encodings.append(raw)
        return "set_encodings", {"encodings": encodings}, 4 + 4 * count
    if kind == 3:
        return (
            "update_request",
            {
                "incremental": data[1],
                "x": (data[2] << 8) | data[3],
                "y": (data[4] << 8) | data[5],
                "width": (data[6] << 8) | data[7],
                "height": (data[8] << 8) | data[9],
            },
            10,
        )
    if kind == 4:
        return (
            "key_event",
            {"down": data[1], "keysym": int.from_bytes(data[4:8], "big")},
            8,
        )
    if kind == 5:
        return (
            "pointer_event",
            {"mask": data[1], "x": (data[2] << 8) | data[3], "y": (data[4] << 8) | data[5]},
            6,
        )
    raise AssertionError(f"unexpected message type {kind}")


# -- scripted peers ----------------------------------------------------------


class ScriptedSocket:
    """Duplex fake: serves canned bytes, records everything sent."""

    def __init__(self, script: bytes):
        self._script = bytes(script)
        self._offset = 0
        self.sent = bytearray()

    def recv(self, count: int) -> bytes:
        chunk = self._script[self._offset : self._offset + count]
        self._offset += len(chunk)
        return chunk

    def sendall(self, data: bytes) -> None:
        self.sent.extend(data)

    def settimeout(self, value):
        pass

    def close(self):
        pass


def handshake_script(
    greeting: bytes = b"RFB 003.008\n",
    security_types: bytes = b"\x01",
    security_result: int = 0,
    reason: bytes = b"",
    width: int = 160,
    height: int = 160,
    pixel_format: bytes = None,
    name: bytes = b"scripted",
) -> bytes:
    """Server-side byte stream for one handshake, built by hand."""
    if pixel_format is None:
        pixel_format = struct.pack(">BBBBHHHBBB3x", 32, 24, 0, 1, 255, 255, 255, 16, 8, 0)
    parts = [greeting]
    if not security_types:
        parts.append(struct.pack(">B", 0))
        parts.append(struct.pack(">I", len(reason)) + reason)
        return b"".join(parts)
    parts.append(struct.pack(">B", len(security_types)) + security_types)
    parts.append(struct.pack(">I", security_result))
    if security_result != 0:
        parts.append(struct.pack(">I", len(reason)) + reason)
        return b"".join(parts)
    parts.append(struct.pack(">HH", width, height))
    parts.append(pixel_format)
    parts.append(struct.pack(">I", len(name)) + name)
    return b"".join(parts)


class RecordingServer:
    """Real-socket RFB 3.8 stub: full handshake, empty updates, and a
    byte-exact record of everything the client wrote after the handshake."""

    def __init__(self, width: int = 64, height: int = 48):
        self.width = width
        self.height = height
        self.raw = bytearray()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(1)
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._stopped = threading.Event()

    def start(self) -> "RecordingServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stopped.set()
        self._listener.close()
        self._thread.join(timeout=5.0)

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    def _serve(self) -> None:
        try:
            conn, _ = self._listener.accept()
        except OSError:
            return
        with conn:
            conn.sendall(b"RFB 003.008\n")
            self._read_exact(conn, 12)
            conn.sendall(b"\x01\x01")
            self._read_exact(conn, 1)
            conn.sendall(struct.pack(">I", 0))
            self._read_exact(conn, 1)
            name = b"recorder"
            fmt = struct.pack(">BBBBHHHBBB3x", 32, 24, 0, 1, 255, 255, 255, 16, 8, 0)
            conn.sendall(
                struct.pack(">HH", self.width, self.height) + fmt + struct.pack(">I", len(name)) + name
            )
            conn.settimeout(0.2)
            lengths = {0: 20, 3: 10, 4: 8, 5: 6}
            while not self._stopped.is_set():
                try:
                    first = self._read_exact(conn, 1)
                except (TimeoutError, socket.timeout):
                    continue
                except (OSError, EOFError):
                    return
                kind = first[0]
                if kind == 2:
                    header = self._read_exact(conn, 3)
                    count = (header[1] << 8) | header[2]
                    body = self._read_exact(conn, 4 * count)
                    self.raw.extend(first + header + body)
                    continue
                body = self._read_exact(conn, lengths[kind] - 1)
                self.raw.extend(first + body)
                if kind == 3:
                    conn.sendall(struct.pack(">BxH", 0, 0))  # empty update

    @staticmethod
    def _read_exact(conn, count: int) -> bytes:
        data = b""
        while len(data) < count:
            chunk = conn.recv(count - len(data))
            if not chunk:
                raise EOFError
            data += chunk
        return data
