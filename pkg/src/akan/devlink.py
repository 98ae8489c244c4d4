"""Single-device measurement service and the time-multiplexed client.

One physical unit stands in for every device slot of a network: the server
exposes a lone virtual device over a line protocol, and the client walks a
model's units in deterministic order, one measurement per unit per sample,
doing all summation and scaling locally.

Wire format, over any reliable byte stream:
    request  "MEAS v0 v1 v2 v3 v4 v5 v6[ settle]\\n"   (decimal text)
    reply    "OK <current>\\n" | "ERR <reason>\\n"
Floats travel as 17-significant-digit decimals, which round-trip IEEE
doubles exactly; error reasons start with "parse" or "range".
"""

import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

import numpy as np

from .devices import N_ELECTRODES, device_forward
from .errors import ConfigError, DeviceLinkError, RangeViolationError

DEFAULT_SETTLE_S = 10e-6


def _wire_float(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class MeasurementRequest:
    voltages: tuple  # one entry per electrode
    settle: float = None  # server default when None

    def __post_init__(self):
        object.__setattr__(self, "voltages",
                           tuple(float(v) for v in self.voltages))
        if len(self.voltages) != N_ELECTRODES:
            raise DeviceLinkError(
                f"parse expected {N_ELECTRODES} voltages, "
                f"got {len(self.voltages)}")
        if not all(math.isfinite(v) for v in self.voltages):
            raise DeviceLinkError("parse non-finite voltage")
        if self.settle is not None and not (
                math.isfinite(self.settle) and self.settle >= 0):
            raise DeviceLinkError("parse settle must be a finite time >= 0")

    def line(self) -> str:
        parts = ["MEAS"] + [_wire_float(v) for v in self.voltages]
        if self.settle is not None:
            parts.append(_wire_float(self.settle))
        return " ".join(parts) + "\n"


def parse_request(line: str) -> MeasurementRequest:
    tokens = line.split()
    if not tokens or tokens[0] != "MEAS":
        raise DeviceLinkError(f"parse unknown verb in {line.strip()!r}")
    if len(tokens) - 1 not in (N_ELECTRODES, N_ELECTRODES + 1):
        raise DeviceLinkError(
            f"parse expected {N_ELECTRODES} voltages plus optional "
            f"settle, got {len(tokens) - 1} values")
    try:
        values = [float(t) for t in tokens[1:]]
    except ValueError as ex:
        raise DeviceLinkError(f"parse {ex}") from None
    settle = values[N_ELECTRODES] if len(values) > N_ELECTRODES else None
    return MeasurementRequest(tuple(values[:N_ELECTRODES]), settle)


# -- server --------------------------------------------------------------------


@dataclass(frozen=True)
class ServerConfig:
    device: object
    settle_s: float = DEFAULT_SETTLE_S
    host: str = "127.0.0.1"
    port: int = 0  # 0 lets the OS pick a free port

    def __post_init__(self):
        if not (math.isfinite(self.settle_s) and self.settle_s >= 0):
            raise ConfigError(f"settle delay must be >= 0, "
                              f"got {self.settle_s!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        # one request in flight per connection: read, answer, repeat
        while True:
            raw = self.rfile.readline()
            if not raw:
                return
            self.wfile.write(self.server.answer(raw).encode("ascii"))
            self.wfile.flush()


class DeviceServer(socketserver.ThreadingTCPServer):
    """Serves one virtual device; all measurements share one device lock."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: ServerConfig):
        super().__init__((config.host, config.port), _Handler)
        self.config = config
        self._device_lock = threading.Lock()
        self._thread = None

    @property
    def endpoint(self) -> tuple:
        return self.server_address[:2]

    def answer(self, raw: bytes) -> str:
        try:
            req = parse_request(raw.decode("ascii", errors="strict"))
        except UnicodeDecodeError:
            return "ERR parse request is not ascii text\n"
        except DeviceLinkError as ex:
            return f"ERR {ex}\n"
        settle = self.config.settle_s if req.settle is None else req.settle
        with self._device_lock:
            if settle:
                time.sleep(settle)
            try:
                current = device_forward(self.config.device, req.voltages)
            except RangeViolationError as ex:
                return f"ERR range {ex}\n"
        return f"OK {_wire_float(current)}\n"

    def start(self) -> "DeviceServer":
        self._thread = threading.Thread(target=self.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def close(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(config: ServerConfig) -> DeviceServer:
    """Bind and start answering in a background thread."""
    return DeviceServer(config).start()


def parse_endpoint(text: str) -> tuple:
    host, sep, port = str(text).rpartition(":")
    if not sep or not host:
        raise ConfigError(f"endpoint must look like host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"endpoint port must be an integer, "
                          f"got {text!r}") from None


# -- client --------------------------------------------------------------------


class DeviceClient:
    """Synchronous measurement connection; counts completed requests."""

    def __init__(self, endpoint, timeout: float = 10.0):
        if isinstance(endpoint, str):
            endpoint = parse_endpoint(endpoint)
        self.endpoint = tuple(endpoint)
        self.request_count = 0
        try:
            self._sock = socket.create_connection(self.endpoint, timeout)
        except OSError as ex:
            raise DeviceLinkError(
                f"cannot reach device server at "
                f"{self.endpoint[0]}:{self.endpoint[1]}: {ex}") from None
        self._file = self._sock.makefile("rw", encoding="ascii",
                                         newline="\n")

    def measure(self, voltages, settle: float = None) -> float:
        req = MeasurementRequest(tuple(voltages), settle)
        try:
            self._file.write(req.line())
            self._file.flush()
            reply = self._file.readline()
        except OSError as ex:
            raise DeviceLinkError(f"connection lost: {ex}") from None
        if not reply:
            raise DeviceLinkError("connection closed by server")
        if reply.startswith("OK "):
            self.request_count += 1
            return float(reply[3:])
        if reply.startswith("ERR range"):
            raise RangeViolationError(reply[4:].strip())
        raise DeviceLinkError(f"server refused request: {reply.strip()}")

    def close(self):
        self._file.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RemoteDevice:
    """Device stand-in that forwards every unit evaluation over the wire.

    Ranges come from the local twin of the server's device, so range
    handling and current normalization stay identical to in-process runs.
    """

    client: DeviceClient
    ranges: object

    def eval_batch(self, volts: np.ndarray) -> np.ndarray:
        volts = np.asarray(volts, dtype=float)
        out = np.empty(len(volts))
        for i, row in enumerate(volts):
            out[i] = self.client.measure(row)
        return out


def timemux_infer(model, features, client: DeviceClient) -> np.ndarray:
    """Evaluate the network with every device slot played by the server's
    single unit, in (layer, sample, edge, unit) order. The local model must
    be backed by the same device the server measures."""
    remote = RemoteDevice(client, model.device.ranges)
    start = client.request_count
    try:
        return model.forward_batch(features, device=remote)
    except DeviceLinkError as ex:
        done = client.request_count - start
        raise DeviceLinkError(
            f"inference aborted after {done} completed measurements: {ex}"
        ) from None
