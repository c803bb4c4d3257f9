"""Newline-delimited JSON protocol for out-of-process predictors.

One JSON object per line over a child process's stdio or a TCP connection.
Both ends send {"type": "hello", "protocol_version": 1} first. Requests are
the persisted model-input schema (ModelInput.to_request); responses carry 25
Gaussian steps or an error with the matching request id.

Failure modes get distinct exception types so callers can tell a dead
endpoint (timeout) from a misbehaving one (malformed JSON, wrong step count,
invariant violations).
"""

from __future__ import annotations

import json
import selectors
import shlex
import socket
import subprocess
import time

from .predictors import GaussianStep, GaussianTrajectory
from .tracks import ModelInput

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 10.0
MAX_LINE_BYTES = 1 << 20


class ProtocolError(RuntimeError):
    """Base class for wire-protocol failures."""


class EndpointTimeout(ProtocolError):
    """The endpoint did not answer within the timeout."""


class MalformedMessage(ProtocolError):
    """The endpoint sent something that is not valid protocol JSON."""


class WrongStepCount(ProtocolError):
    """The endpoint answered with the wrong number of trajectory steps."""


class InvariantViolation(ProtocolError):
    """The endpoint's Gaussians violate sigma > 0 or |rho| < 1."""


class EndpointClosed(ProtocolError):
    """The endpoint hung up mid-conversation."""


def parse_endpoint(text: str):
    """Split an endpoint descriptor into ("tcp", host, port) or ("cmd", argv)."""
    if text.startswith("tcp:"):
        rest = text[4:]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad tcp endpoint {text!r}; expected tcp:host:port")
        return ("tcp", host, int(port))
    argv = shlex.split(text)
    if not argv:
        raise ValueError("empty endpoint command")
    return ("cmd", argv)


def parse_prediction_message(obj: dict, request_id: int, horizon: int) -> GaussianTrajectory:
    """Validate a prediction response object against the output contract."""
    if not isinstance(obj, dict) or obj.get("type") not in ("prediction", "error"):
        raise MalformedMessage(f"unexpected message {obj!r}")
    if obj.get("id") != request_id:
        raise MalformedMessage(
            f"response id {obj.get('id')!r} does not match request {request_id}")
    if obj["type"] == "error":
        raise ProtocolError(f"endpoint error: {obj.get('message', '(no message)')}")
    steps_raw = obj.get("steps")
    if not isinstance(steps_raw, list):
        raise MalformedMessage("prediction lacks a steps list")
    if len(steps_raw) != horizon:
        raise WrongStepCount(f"expected {horizon} steps, got {len(steps_raw)}")
    steps = []
    for i, s in enumerate(steps_raw):
        try:
            step = GaussianStep(float(s["mux"]), float(s["muy"]), float(s["sigx"]),
                                float(s["sigy"]), float(s["rho"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedMessage(f"bad step {i}: {exc}") from exc
        if step.sigma_x <= 0.0 or step.sigma_y <= 0.0 or not -1.0 < step.rho < 1.0:
            raise InvariantViolation(
                f"step {i}: sigma_x={step.sigma_x}, sigma_y={step.sigma_y}, "
                f"rho={step.rho}")
        steps.append(step)
    maneuver = None
    if "maneuver_probs" in obj and obj["maneuver_probs"] is not None:
        try:
            maneuver = tuple((str(label), float(p)) for label, p in obj["maneuver_probs"])
        except (TypeError, ValueError) as exc:
            raise MalformedMessage(f"bad maneuver_probs: {exc}") from exc
    return GaussianTrajectory(steps=tuple(steps), maneuver_probs=maneuver)


class _LineChannel:
    """Line-oriented transport with a deadline on reads.

    read_chunk(remaining_s) must return available bytes (b"" on EOF) or raise
    EndpointTimeout after remaining_s with nothing to read.
    """

    def __init__(self, read_chunk, write, timeout_s: float):
        self._read_chunk = read_chunk
        self._write = write
        self._timeout_s = timeout_s
        self._buffer = b""

    def send(self, obj: dict) -> None:
        self._write(json.dumps(obj, separators=(",", ":")).encode() + b"\n")

    def recv(self) -> dict:
        deadline = time.monotonic() + self._timeout_s
        while True:
            nl = self._buffer.find(b"\n")
            if nl >= 0:
                line = self._buffer[:nl]
                self._buffer = self._buffer[nl + 1:]
                if not line.strip():
                    continue
                try:
                    return json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedMessage(f"invalid JSON from endpoint: {exc}") from exc
            if len(self._buffer) > MAX_LINE_BYTES:
                raise MalformedMessage("endpoint line exceeds 1 MiB")
            remaining = deadline - time.monotonic()
            if remaining <= 0.0:
                raise EndpointTimeout(f"no reply within {self._timeout_s} s")
            chunk = self._read_chunk(remaining)
            if not chunk:
                raise EndpointClosed("endpoint closed the connection")
            self._buffer += chunk


class ExternalPredictor:
    """Client for one external prediction endpoint.

    Usage:
        with ExternalPredictor("node bridge/dist/main.js") as client:
            trajectory = client.predict(model_input)
    """

    def __init__(self, endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._proc = None
        self._sock = None
        self._channel = None
        self._next_id = 1

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def connect(self) -> None:
        kind = parse_endpoint(self.endpoint)
        if kind[0] == "tcp":
            _, host, port = kind
            self._sock = socket.create_connection((host, port), timeout=self.timeout_s)
            self._channel = _LineChannel(self._read_tcp, self._send_tcp, self.timeout_s)
        else:
            self._proc = subprocess.Popen(
                kind[1], stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
            self._channel = _LineChannel(
                self._read_stdio, self._send_stdio, self.timeout_s)
        self._channel.send({"type": "hello", "protocol_version": PROTOCOL_VERSION})
        first = self._channel.recv()
        if first.get("type") != "hello":
            raise MalformedMessage(f"expected hello, got {first!r}")
        if first.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: ours {PROTOCOL_VERSION}, "
                f"endpoint {first.get('protocol_version')!r}")

    def _read_tcp(self, remaining_s: float) -> bytes:
        self._sock.settimeout(max(remaining_s, 1e-3))
        try:
            return self._sock.recv(65536)
        except socket.timeout as exc:
            raise EndpointTimeout(f"no reply within {self.timeout_s} s") from exc

    def _read_stdio(self, remaining_s: float) -> bytes:
        sel = selectors.DefaultSelector()
        sel.register(self._proc.stdout, selectors.EVENT_READ)
        try:
            if not sel.select(timeout=max(remaining_s, 1e-3)):
                raise EndpointTimeout(f"no reply within {self.timeout_s} s")
        finally:
            sel.close()
        return self._proc.stdout.read(65536)

    def _send_tcp(self, data: bytes) -> None:
        self._sock.sendall(data)

    def _send_stdio(self, data: bytes) -> None:
        self._proc.stdin.write(data)
        self._proc.stdin.flush()

    def predict(self, model_input: ModelInput) -> GaussianTrajectory:
        if self._channel is None:
            raise ProtocolError("client is not connected")
        request_id = self._next_id
        self._next_id += 1
        self._channel.send(model_input.to_request(request_id))
        reply = self._channel.recv()
        return parse_prediction_message(reply, request_id, model_input.horizon)

    def close(self) -> None:
        self._channel = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None
