"""Relative pose estimation: simulation oracle, ground projection, bridge client.

Estimators return a full 3-D transform from the current view to a subgoal
view. Failure (out of range, degenerate geometry, model error, timeout) is
a first-class outcome reported as None plus a diagnostic, never an
exception.
"""

from __future__ import annotations

import base64
import enum
import json
import math
import queue
import subprocess
import sys
import threading
import time
from dataclasses import dataclass

import numpy as np

from .core import Descriptor, Pose2, RelPose2, Transform3, relative_se2, yaw_rotation


class FrameConvention(enum.Enum):
    """Axis convention of an estimated transform.

    ROBOT_PLANAR: x forward, y left, z up.
    CAMERA_OPTICAL: z forward, x right, y down.
    """

    ROBOT_PLANAR = "robot_planar"
    CAMERA_OPTICAL = "camera_optical"


# Maps camera-optical axes onto robot-planar axes:
# camera z -> robot x, camera -x -> robot y, camera -y -> robot z.
_CAMERA_TO_ROBOT = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)

MIN_VERTICAL_ALIGNMENT = 0.5


class NonPlanarPoseError(ValueError):
    """Raised when a transform has too much roll/pitch to project."""


def project_to_ground(transform: Transform3,
                      convention: FrameConvention = FrameConvention.ROBOT_PLANAR) -> RelPose2:
    """Project a 3-D transform onto the ground plane as [dx, dy, dpsi].

    Camera-optical transforms are re-axed into the robot frame first. The
    vertical component of translation is dropped; yaw comes from the
    rotation's top-left block. Transforms with severe roll or pitch
    (vertical-axis alignment below 0.5) are rejected.
    """
    rot = transform.rotation
    tra = transform.translation
    if convention is FrameConvention.CAMERA_OPTICAL:
        rot = _CAMERA_TO_ROBOT @ rot @ _CAMERA_TO_ROBOT.T
        tra = _CAMERA_TO_ROBOT @ tra
    if abs(float(rot[2, 2])) < MIN_VERTICAL_ALIGNMENT:
        raise NonPlanarPoseError(
            f"non-planar pose: vertical-axis alignment {float(rot[2, 2]):.3f}"
        )
    dpsi = math.atan2(float(rot[1, 0]), float(rot[0, 0]))
    return RelPose2(float(tra[0]), float(tra[1]), dpsi)


@dataclass(frozen=True)
class OracleConfig:
    """Noise and validity model for the simulation oracle."""

    sigma_t: float = 0.0
    sigma_psi: float = 0.0
    r_valid: float = 8.0
    p_fail: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_t < 0.0 or self.sigma_psi < 0.0:
            raise ValueError("noise magnitudes must be non-negative")
        if self.r_valid <= 0.0:
            raise ValueError("validity radius must be positive")
        if not 0.0 <= self.p_fail <= 1.0:
            raise ValueError("failure probability must lie in [0, 1]")


def oracle_estimate(current: Pose2, subgoal: Pose2, config: OracleConfig,
                    rng: np.random.Generator | None = None) -> Transform3 | None:
    """Ground-truth relative pose with optional noise and failure model.

    Returns None when the true planar distance exceeds r_valid or on a
    spurious failure drawn with probability p_fail.
    """
    xi = relative_se2(current, subgoal)
    if math.hypot(xi.dx, xi.dy) > config.r_valid:
        return None
    needs_rng = config.p_fail > 0.0 or config.sigma_t > 0.0 or config.sigma_psi > 0.0
    if needs_rng and rng is None:
        raise ValueError("oracle noise/failure model requires an rng")
    if config.p_fail > 0.0 and rng.random() < config.p_fail:
        return None
    dx, dy, dpsi = xi.dx, xi.dy, xi.dpsi
    if config.sigma_t > 0.0:
        dx += config.sigma_t * rng.standard_normal()
        dy += config.sigma_t * rng.standard_normal()
    if config.sigma_psi > 0.0:
        dpsi += config.sigma_psi * rng.standard_normal()
    return Transform3(yaw_rotation(dpsi), np.array([dx, dy, 0.0]))


class OracleEstimator:
    """Pipeline adapter around oracle_estimate using stored teach poses."""

    convention = FrameConvention.ROBOT_PLANAR

    def __init__(self, config: OracleConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or OracleConfig()
        self.rng = rng
        self.last_failure: str | None = None

    def estimate(self, current_pose: Pose2, current_observation: bytes | None,
                 node) -> Transform3 | None:
        if node.teach_pose is None:
            raise ValueError(f"node {node.index} has no teach pose; oracle unusable")
        result = oracle_estimate(current_pose, node.teach_pose, self.config, self.rng)
        self.last_failure = None if result is not None else "no estimate"
        return result

    def close(self) -> None:
        pass


def _repair_rotation(raw: np.ndarray) -> np.ndarray | None:
    """Validate a claimed rotation matrix, re-orthonormalizing mild drift.

    Accepts deviation up to 1e-6 as-is, projects deviation up to 1e-3 onto
    the nearest rotation, and rejects anything worse or with a negative
    determinant.
    """
    rot = np.asarray(raw, dtype=np.float64)
    if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
        return None
    if float(np.linalg.det(rot)) <= 0.0:
        return None
    err = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
    if err <= 1e-6:
        return rot
    if err <= 1e-3:
        u, _s, vt = np.linalg.svd(rot)
        fixed = u @ vt
        if float(np.linalg.det(fixed)) < 0.0:
            fixed = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        return fixed
    return None


class BridgeError(Exception):
    """Raised when the bridge process cannot be started or handshaken."""


class BridgeClient:
    """Client for an out-of-process model server speaking JSON lines on stdio.

    Each request is one JSON object {"op", "id", "payload"} on a single
    line; each reply carries the same id with either "result" or "error".
    Replies slower than the timeout count as failures and their eventual
    arrival is discarded.
    """

    def __init__(self, command: list[str], *, timeout_s: float = 0.4):
        if timeout_s <= 0.0:
            raise ValueError("timeout must be positive")
        self.timeout_s = timeout_s
        self.last_failure: str | None = None
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=sys.stderr.fileno() if hasattr(sys.stderr, "fileno") else None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot start bridge process: {exc}") from exc
        self._replies: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.hello = self._handshake()
        self.descriptor_dim = int(self.hello["descriptor_dim"])
        self.convention = FrameConvention(self.hello["frame_convention"])
        scale = self.hello.get("translation_scale", "metric")
        if scale != "metric":
            self.close()
            raise BridgeError(
                f"bridge reports translation scale {scale!r}; metric scale required"
            )

    def _read_loop(self) -> None:
        out = self._proc.stdout
        if out is None:
            return
        for line in out:
            self._replies.put(line)
        self._replies.put(None)

    def _handshake(self) -> dict:
        reply = self._request("hello", {})
        if reply is None:
            self.close()
            raise BridgeError(f"bridge handshake failed: {self.last_failure}")
        if reply.get("protocol") != 1:
            self.close()
            raise BridgeError(f"unsupported bridge protocol {reply.get('protocol')!r}")
        for key in ("descriptor_dim", "frame_convention"):
            if key not in reply:
                self.close()
                raise BridgeError(f"bridge hello missing {key!r}")
        return reply

    def _request(self, op: str, payload: dict) -> dict | None:
        """Send one request and wait for its reply; None means failure."""
        self.last_failure = None
        req_id = self._next_id
        self._next_id += 1
        if self._proc.poll() is not None:
            self.last_failure = "bridge process exited"
            return None
        line = json.dumps({"op": op, "id": req_id, "payload": payload}) + "\n"
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            self.last_failure = "bridge pipe closed"
            return None
        deadline = time.monotonic() + self.timeout_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0.0:
                self.last_failure = "timeout"
                return None
            try:
                raw = self._replies.get(timeout=remaining)
            except queue.Empty:
                self.last_failure = "timeout"
                return None
            if raw is None:
                self.last_failure = "bridge process exited"
                return None
            try:
                message = json.loads(raw)
            except json.JSONDecodeError:
                self.last_failure = "malformed reply"
                return None
            if not isinstance(message, dict) or message.get("id") != req_id:
                continue  # stale reply from an abandoned request
            if "error" in message:
                self.last_failure = f"bridge error: {message['error']}"
                return None
            result = message.get("result")
            if not isinstance(result, dict):
                self.last_failure = "malformed reply"
                return None
            return result

    def embed(self, image: bytes) -> Descriptor | None:
        """Embed one image; None on failure (see last_failure)."""
        payload = {"image_b64": base64.b64encode(image).decode("ascii")}
        result = self._request("embed", payload)
        if result is None:
            return None
        values = result.get("descriptor")
        if not isinstance(values, list) or len(values) != self.descriptor_dim:
            self.last_failure = "malformed descriptor"
            return None
        vec = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            self.last_failure = "malformed descriptor"
            return None
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-5:
            self.last_failure = f"descriptor norm {norm:.6f} off unit"
            return None
        return Descriptor(vec)

    def estimate_transform(self, current: bytes, subgoal: bytes) -> Transform3 | None:
        """Relative pose between two images; None on failure."""
        payload = {
            "image_a_b64": base64.b64encode(current).decode("ascii"),
            "image_b_b64": base64.b64encode(subgoal).decode("ascii"),
        }
        result = self._request("relpose", payload)
        if result is None:
            return None
        rotation = result.get("rotation")
        translation = result.get("translation")
        try:
            tra = np.asarray(translation, dtype=np.float64).reshape(3)
        except (TypeError, ValueError):
            self.last_failure = "malformed translation"
            return None
        if not np.all(np.isfinite(tra)):
            self.last_failure = "malformed translation"
            return None
        try:
            raw = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        except (TypeError, ValueError):
            self.last_failure = "malformed rotation"
            return None
        rot = _repair_rotation(raw)
        if rot is None:
            self.last_failure = "invalid rotation"
            return None
        return Transform3(rot, tra)

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class BridgeEstimator:
    """Pipeline adapter sending observation payloads through a bridge."""

    needs_observation = True

    def __init__(self, client: BridgeClient):
        self.client = client
        self.convention = client.convention
        self.last_failure: str | None = None

    def estimate(self, current_pose: Pose2, current_observation: bytes | None,
                 node) -> Transform3 | None:
        if current_observation is None:
            self.last_failure = "no current observation"
            return None
        result = self.client.estimate_transform(current_observation, node.observation)
        self.last_failure = self.client.last_failure
        return result

    def close(self) -> None:
        self.client.close()
