"""Sparse topological route maps: keyframe selection and binary storage.

A teach run produces a stream of frames; the adaptive selector keeps a
small subset as keyframes which become map nodes. Maps and frame streams
share one little-endian record layout:

    magic | u32 version | u32 count | u32 dim | u64 metadata_len |
    metadata (UTF-8 JSON) | count records | u32 CRC32 trailer

    record: u32 index | f64 timestamp | u8 has_pose | 3x f64 pose if set |
            dim x f32 descriptor | u64 obs_len | obs bytes

Maps use magic "VTRM", frame streams use "VTRF". The CRC32 covers every
byte before the trailer.
"""

from __future__ import annotations

import binascii
import json
import math
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import Descriptor, Pose2, cosine_similarity

MAP_MAGIC = b"VTRM"
FRAMES_MAGIC = b"VTRF"
FORMAT_VERSION = 1


class MapFormatError(Exception):
    """Base error for malformed map or frame files."""


class BadMagicError(MapFormatError):
    pass


class UnsupportedVersionError(MapFormatError):
    pass


class TruncatedDataError(MapFormatError):
    pass


class ChecksumError(MapFormatError):
    pass


@dataclass(frozen=True)
class Frame:
    """One teach-time observation: timestamp, embedding, raw payload."""

    timestamp: float
    descriptor: Descriptor
    observation: bytes = b""
    teach_pose: Pose2 | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.timestamp):
            raise ValueError("frame timestamp must be finite")


@dataclass(frozen=True)
class TopoNode:
    """A retained keyframe: index equals its position in the map."""

    index: int
    timestamp: float
    descriptor: Descriptor
    observation: bytes = b""
    teach_pose: Pose2 | None = None


class TopoMap:
    """Ordered node list plus creation metadata.

    Node indices must equal list positions and timestamps must be strictly
    increasing. A usable route needs at least 2 nodes.
    """

    def __init__(self, nodes: list[TopoNode], creation_metadata: dict | None = None):
        if len(nodes) < 2:
            raise ValueError("route too short: a map needs at least 2 nodes")
        dim = nodes[0].descriptor.dim
        prev_t = -math.inf
        for pos, node in enumerate(nodes):
            if node.index != pos:
                raise ValueError(f"node index {node.index} at position {pos}")
            if node.descriptor.dim != dim:
                raise ValueError("all node descriptors must share one dimension")
            if node.timestamp <= prev_t:
                raise ValueError("node timestamps must be strictly increasing")
            prev_t = node.timestamp
        self.nodes = list(nodes)
        self.creation_metadata = dict(creation_metadata or {})
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def descriptor_dim(self) -> int:
        return self.nodes[0].descriptor.dim

    @property
    def descriptor_matrix(self) -> np.ndarray:
        """Stacked (N, D) node descriptors for vectorized retrieval."""
        if self._matrix is None:
            mat = np.stack([n.descriptor.values for n in self.nodes])
            mat.setflags(write=False)
            self._matrix = mat
        return self._matrix


@dataclass(frozen=True)
class SelectorConfig:
    """Tunables for adaptive keyframe admission."""

    dt_min: float = 0.6
    dt_max: float = 3.0
    buffer_size: int = 5
    tau_base: float = 0.85
    tau_lo: float = 0.70
    tau_hi: float = 0.95
    gamma: float = 0.05
    target_rate: float = 1.0
    rate_window: float = 20.0

    def __post_init__(self) -> None:
        if not (0.0 < self.dt_min < self.dt_max):
            raise ValueError("selector needs 0 < dt_min < dt_max")
        if self.buffer_size < 1:
            raise ValueError("diversity buffer must hold at least 1 keyframe")
        if not (0.0 < self.tau_lo <= self.tau_base <= self.tau_hi < 1.0):
            raise ValueError("thresholds must satisfy 0 < tau_lo <= tau_base <= tau_hi < 1")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")
        if self.target_rate <= 0.0 or self.rate_window <= 0.0:
            raise ValueError("rate parameters must be positive")


@dataclass(frozen=True)
class Admission:
    """Outcome of considering one frame.

    `tau` is the similarity threshold in force when the decision was made,
    before the post-decision adaptation step.
    """

    added: bool
    rule: str | None
    max_similarity: float | None
    tau: float


class KeyframeSelector:
    """Sequential keyframe admission with an adaptive similarity threshold.

    A frame is admitted when any of these fires, checked in order:
      first   -- no keyframe exists yet
      forced  -- at least dt_max elapsed since the last keyframe
      diverse -- at least dt_min elapsed and its max cosine similarity
                 against the last `buffer_size` keyframes is below tau

    After every decision tau moves by gamma * (observed_rate - target_rate),
    clamped into [tau_lo, tau_hi], where observed_rate counts keyframes
    admitted during the trailing rate_window seconds.
    """

    def __init__(self, config: SelectorConfig | None = None):
        self.config = config or SelectorConfig()
        self.tau = self.config.tau_base
        self._buffer: deque[Descriptor] = deque(maxlen=self.config.buffer_size)
        self._last_frame_t: float | None = None
        self._last_key_t: float | None = None
        self._key_times: deque[float] = deque()
        self.admission_log: list[dict] = []
        self._count = 0

    @property
    def keyframe_count(self) -> int:
        return self._count

    def consider(self, frame: Frame) -> Admission:
        t = frame.timestamp
        if self._last_frame_t is not None and t <= self._last_frame_t:
            raise ValueError(
                f"out-of-order frame timestamp {t!r} after {self._last_frame_t!r}"
            )
        self._last_frame_t = t

        max_sim: float | None = None
        if self._buffer:
            max_sim = max(cosine_similarity(frame.descriptor, d) for d in self._buffer)

        tau_at_decision = self.tau
        rule: str | None = None
        # Slack keeps the dt gates insensitive to camera-tick float rounding
        # (i / rate differences can land one ulp under the nominal gap).
        gap_eps = 1e-9
        if self._last_key_t is None:
            rule = "first"
        elif t - self._last_key_t >= self.config.dt_max - gap_eps:
            rule = "forced"
        elif t - self._last_key_t >= self.config.dt_min - gap_eps and max_sim is not None:
            if max_sim < tau_at_decision:
                rule = "diverse"

        added = rule is not None
        if added:
            self._buffer.append(frame.descriptor)
            self._last_key_t = t
            self._key_times.append(t)
            self.admission_log.append(
                {
                    "node": self._count,
                    "timestamp": t,
                    "rule": rule,
                    "max_similarity": max_sim,
                    "tau": tau_at_decision,
                }
            )
            self._count += 1

        while self._key_times and self._key_times[0] <= t - self.config.rate_window:
            self._key_times.popleft()
        observed_rate = len(self._key_times) / self.config.rate_window
        cfg = self.config
        self.tau = min(
            cfg.tau_hi,
            max(cfg.tau_lo, self.tau + cfg.gamma * (observed_rate - cfg.target_rate)),
        )
        return Admission(added, rule, max_sim, tau_at_decision)


def build_map(frames, config: SelectorConfig | None = None) -> TopoMap:
    """Run the adaptive selector over a frame stream and build a map."""
    selector = KeyframeSelector(config)
    nodes: list[TopoNode] = []
    n_frames = 0
    last_t = 0.0
    for frame in frames:
        n_frames += 1
        last_t = frame.timestamp
        decision = selector.consider(frame)
        if decision.added:
            nodes.append(
                TopoNode(
                    index=len(nodes),
                    timestamp=frame.timestamp,
                    descriptor=frame.descriptor,
                    observation=frame.observation,
                    teach_pose=frame.teach_pose,
                )
            )
    if n_frames == 0:
        raise ValueError("empty teach demonstration")
    if len(nodes) < 2:
        raise ValueError("route too short: selector admitted fewer than 2 keyframes")
    metadata = {
        "selector": {
            "kind": "adaptive",
            "dt_min": selector.config.dt_min,
            "dt_max": selector.config.dt_max,
            "buffer_size": selector.config.buffer_size,
            "tau_base": selector.config.tau_base,
            "tau_lo": selector.config.tau_lo,
            "tau_hi": selector.config.tau_hi,
            "gamma": selector.config.gamma,
            "target_rate": selector.config.target_rate,
            "rate_window": selector.config.rate_window,
        },
        "source_frame_count": n_frames,
        "created_at": last_t,
        "admissions": selector.admission_log,
    }
    return TopoMap(nodes, metadata)


def build_map_fixed_interval(frames, interval_s: float) -> TopoMap:
    """Baseline selector: admit one keyframe every fixed time interval."""
    if interval_s <= 0.0:
        raise ValueError("interval must be positive")
    nodes: list[TopoNode] = []
    n_frames = 0
    last_key_t: float | None = None
    last_t = 0.0
    for frame in frames:
        n_frames += 1
        last_t = frame.timestamp
        if last_key_t is None or frame.timestamp - last_key_t >= interval_s:
            nodes.append(
                TopoNode(
                    index=len(nodes),
                    timestamp=frame.timestamp,
                    descriptor=frame.descriptor,
                    observation=frame.observation,
                    teach_pose=frame.teach_pose,
                )
            )
            last_key_t = frame.timestamp
    if n_frames == 0:
        raise ValueError("empty teach demonstration")
    if len(nodes) < 2:
        raise ValueError("route too short: fewer than 2 keyframes kept")
    metadata = {
        "selector": {"kind": "fixed_interval", "interval_s": interval_s},
        "source_frame_count": n_frames,
        "created_at": last_t,
    }
    return TopoMap(nodes, metadata)


def delete_nodes(topo_map: TopoMap, indices) -> TopoMap:
    """Return a new map with the given node indices removed and the rest reindexed."""
    drop = set(indices)
    for i in drop:
        if not 0 <= i < len(topo_map):
            raise ValueError(f"node index {i} out of range")
    kept = [n for n in topo_map.nodes if n.index not in drop]
    if len(kept) < 2:
        raise ValueError("route too short: deletion would leave fewer than 2 nodes")
    nodes = [
        TopoNode(
            index=pos,
            timestamp=n.timestamp,
            descriptor=n.descriptor,
            observation=n.observation,
            teach_pose=n.teach_pose,
        )
        for pos, n in enumerate(kept)
    ]
    metadata = dict(topo_map.creation_metadata)
    edits = list(metadata.get("edits", []))
    edits.append({"op": "delete_nodes", "indices": sorted(drop)})
    metadata["edits"] = edits
    return TopoMap(nodes, metadata)


def _encode_metadata(metadata: dict) -> bytes:
    return json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _encode_record(index: int, timestamp: float, pose: Pose2 | None,
                   descriptor: Descriptor, observation: bytes) -> bytes:
    parts = [struct.pack("<Id", index, timestamp)]
    if pose is not None:
        parts.append(struct.pack("<Bddd", 1, pose.x, pose.y, pose.psi))
    else:
        parts.append(struct.pack("<B", 0))
    parts.append(descriptor.values.astype("<f4").tobytes())
    parts.append(struct.pack("<Q", len(observation)))
    parts.append(observation)
    return b"".join(parts)


def _encode_container(magic: bytes, count: int, dim: int, metadata: dict,
                      records: list[bytes]) -> bytes:
    meta = _encode_metadata(metadata)
    body = [magic, struct.pack("<IIIQ", FORMAT_VERSION, count, dim, len(meta)), meta]
    body.extend(records)
    payload = b"".join(body)
    return payload + struct.pack("<I", binascii.crc32(payload) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedDataError(
                f"truncated payload: needed {n} bytes at offset {self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_container(data: bytes, magic: bytes):
    reader = _Reader(data)
    got_magic = reader.take(len(magic))
    if got_magic != magic:
        raise BadMagicError(f"bad magic {got_magic!r}, expected {magic!r}")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    count, dim, meta_len = reader.unpack("<IIQ")
    meta_raw = reader.take(meta_len)
    try:
        metadata = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"invalid metadata JSON: {exc}") from exc
    records = []
    for _ in range(count):
        index, timestamp = reader.unpack("<Id")
        (has_pose,) = reader.unpack("<B")
        pose = None
        if has_pose == 1:
            x, y, psi = reader.unpack("<ddd")
            pose = Pose2(x, y, psi)
        elif has_pose != 0:
            raise MapFormatError(f"invalid pose flag {has_pose}")
        desc = np.frombuffer(reader.take(4 * dim), dtype="<f4").astype(np.float64)
        (obs_len,) = reader.unpack("<Q")
        obs = reader.take(obs_len)
        records.append((index, timestamp, pose, desc, obs))
    trailer = reader.take(4)
    if reader.pos != len(data):
        raise MapFormatError(f"{len(data) - reader.pos} trailing bytes after checksum")
    (stored_crc,) = struct.unpack("<I", trailer)
    actual_crc = binascii.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"checksum mismatch: stored {stored_crc:#010x}, actual {actual_crc:#010x}"
        )
    return metadata, records


def serialize(topo_map: TopoMap) -> bytes:
    """Encode a map to bytes. Encoding is deterministic for equal inputs."""
    records = [
        _encode_record(n.index, n.timestamp, n.teach_pose, n.descriptor, n.observation)
        for n in topo_map.nodes
    ]
    return _encode_container(
        MAP_MAGIC, len(topo_map), topo_map.descriptor_dim,
        topo_map.creation_metadata, records,
    )


def deserialize(data: bytes) -> TopoMap:
    """Decode bytes produced by serialize(), verifying the checksum."""
    metadata, records = _decode_container(data, MAP_MAGIC)
    nodes = [
        TopoNode(
            index=index,
            timestamp=timestamp,
            descriptor=Descriptor.from_normalized(desc),
            observation=obs,
            teach_pose=pose,
        )
        for index, timestamp, pose, desc, obs in records
    ]
    return TopoMap(nodes, metadata)


def serialize_frames(frames: list[Frame], metadata: dict | None = None) -> bytes:
    """Encode a teach frame stream with the shared record layout."""
    if not frames:
        raise ValueError("empty teach demonstration")
    dim = frames[0].descriptor.dim
    records = []
    for i, frame in enumerate(frames):
        if frame.descriptor.dim != dim:
            raise ValueError("all frame descriptors must share one dimension")
        records.append(
            _encode_record(i, frame.timestamp, frame.teach_pose,
                           frame.descriptor, frame.observation)
        )
    return _encode_container(FRAMES_MAGIC, len(frames), dim, metadata or {}, records)


def deserialize_frames(data: bytes) -> tuple[list[Frame], dict]:
    """Decode a frame stream, returning (frames, metadata)."""
    metadata, records = _decode_container(data, FRAMES_MAGIC)
    frames = [
        Frame(
            timestamp=timestamp,
            descriptor=Descriptor.from_normalized(desc),
            observation=obs,
            teach_pose=pose,
        )
        for _index, timestamp, pose, desc, obs in records
    ]
    return frames, metadata
