"""Request loop over stdin/stdout.

One JSON object per line in both directions. Requests carry
{op, id, payload}; every request gets exactly one reply with the same
id, either {id, result} or {id, error}. Lines that do not parse get an
error reply with id -1 since no request id is recoverable. Nothing but
protocol lines is ever written to the output stream; diagnostics belong
on stderr.
"""

from __future__ import annotations

import base64
import binascii
import json
import sys
import time

PROTOCOL_VERSION = 1


class PayloadError(ValueError):
    """Request payload missing or undecodable."""


def _decode_image(payload: dict, key: str) -> bytes:
    value = payload.get(key)
    if not isinstance(value, str):
        raise PayloadError(f"payload needs base64 string {key!r}")
    try:
        return base64.b64decode(value, validate=True)
    except binascii.Error as exc:
        raise PayloadError(f"{key!r} is not valid base64: {exc}") from exc


def _hello_result(backend) -> dict:
    return {
        "protocol": PROTOCOL_VERSION,
        "descriptor_dim": backend.descriptor_dim,
        "frame_convention": backend.frame_convention,
        "translation_scale": backend.translation_scale,
        "models": dict(backend.models),
    }


def _embed_result(backend, payload: dict) -> dict:
    image = _decode_image(payload, "image_b64")
    return {"descriptor": backend.embed(image)}


def _relpose_result(backend, payload: dict) -> dict:
    image_a = _decode_image(payload, "image_a_b64")
    image_b = _decode_image(payload, "image_b_b64")
    rotation, translation = backend.relpose(image_a, image_b)
    return {"rotation": rotation, "translation": translation}


def _write(stream, reply: dict) -> None:
    stream.write(json.dumps(reply, separators=(",", ":")) + "\n")
    stream.flush()


def serve(backend, *, stdin=None, stdout=None, delay_s: float = 0.0) -> None:
    """Answer requests until the input stream closes.

    delay_s postpones every model call (not the handshake), which lets
    client timeout handling be tested against a live but slow server.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    try:
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                message = json.loads(line)
            except json.JSONDecodeError:
                _write(stdout, {"id": -1, "error": "malformed request: not JSON"})
                continue
            if not isinstance(message, dict) or not isinstance(message.get("id"), int):
                _write(stdout, {"id": -1,
                                "error": "malformed request: missing integer id"})
                continue
            req_id = message["id"]
            op = message.get("op")
            payload = message.get("payload")
            payload = payload if isinstance(payload, dict) else {}
            if delay_s > 0.0 and op != "hello":
                time.sleep(delay_s)
            try:
                if op == "hello":
                    result = _hello_result(backend)
                elif op == "embed":
                    result = _embed_result(backend, payload)
                elif op == "relpose":
                    result = _relpose_result(backend, payload)
                else:
                    _write(stdout, {"id": req_id, "error": f"unknown op {op!r}"})
                    continue
            except PayloadError as exc:
                _write(stdout, {"id": req_id, "error": str(exc)})
                continue
            except Exception as exc:
                _write(stdout, {"id": req_id, "error": f"model failure: {exc}"})
                continue
            _write(stdout, {"id": req_id, "result": result})
    except BrokenPipeError:
        # Client went away; nothing left to serve.
        return
