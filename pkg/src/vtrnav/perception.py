"""Synthetic appearance model for simulation.

Descriptors come from a bank of random cosine features evaluated on a
pose embedding, so nearby poses yield similar descriptors and similarity
falls off smoothly with distance and heading change. A repeat session
sees the same world through a fixed pose-dependent perturbation field
(scene change between sessions) plus fresh per-call measurement noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Descriptor, Pose2


class Session(enum.Enum):
    TEACH = "teach"
    REPEAT = "repeat"


@dataclass(frozen=True)
class FieldConfig:
    """Parameters of the synthetic descriptor field."""

    dimension: int = 64
    correlation_length: float = 2.0
    heading_weight: float = 1.0
    scene_sigma: float = 0.0
    measurement_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 8:
            raise ValueError("descriptor dimension must be at least 8")
        if self.correlation_length <= 0.0:
            raise ValueError("correlation length must be positive")
        if self.heading_weight < 0.0:
            raise ValueError("heading weight must be non-negative")
        if self.scene_sigma < 0.0 or self.measurement_sigma < 0.0:
            raise ValueError("noise magnitudes must be non-negative")


class DescriptorField:
    """Deterministic descriptor source over planar poses.

    The feature bank is drawn once from the config seed; embeddings are a
    pure function of (pose, session) plus measurement noise drawn from the
    caller's generator.
    """

    def __init__(self, config: FieldConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.dimension
        self._omega = rng.standard_normal((d, 4))
        self._phase = rng.uniform(0.0, 2.0 * math.pi, d)
        self._omega_scene = rng.standard_normal((d, 4))
        self._phase_scene = rng.uniform(0.0, 2.0 * math.pi, d)

    @property
    def dim(self) -> int:
        return self.config.dimension

    def _pose_embedding(self, pose: Pose2) -> np.ndarray:
        cfg = self.config
        return np.array(
            [
                pose.x / cfg.correlation_length,
                pose.y / cfg.correlation_length,
                cfg.heading_weight * math.cos(pose.psi),
                cfg.heading_weight * math.sin(pose.psi),
            ]
        )

    def embed(self, pose: Pose2, session: Session,
              rng: np.random.Generator | None = None) -> Descriptor:
        """Embed a pose for the given session.

        Measurement noise requires an explicit generator so determinism is
        under the caller's control.
        """
        u = self._pose_embedding(pose)
        raw = np.cos(self._omega @ u + self._phase)
        if session is Session.REPEAT and self.config.scene_sigma > 0.0:
            raw = raw + self.config.scene_sigma * np.cos(
                self._omega_scene @ u + self._phase_scene
            )
        if self.config.measurement_sigma > 0.0:
            if rng is None:
                raise ValueError("measurement noise requires an rng")
            raw = raw + self.config.measurement_sigma * rng.standard_normal(self.dim)
        return Descriptor(raw)


def mean_teach_repeat_similarity(config: FieldConfig, *, n_probes: int = 200,
                                 span: float = 100.0, seed: int = 1) -> float:
    """Mean cosine similarity between teach and repeat views of one pose.

    Probes are spread over a span x span area with random headings;
    measurement noise is excluded so the statistic isolates scene change.
    """
    clean = FieldConfig(
        dimension=config.dimension,
        correlation_length=config.correlation_length,
        heading_weight=config.heading_weight,
        scene_sigma=config.scene_sigma,
        measurement_sigma=0.0,
        seed=config.seed,
    )
    field = DescriptorField(clean)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_probes):
        pose = Pose2(
            rng.uniform(-span / 2, span / 2),
            rng.uniform(-span / 2, span / 2),
            rng.uniform(-math.pi, math.pi),
        )
        a = field.embed(pose, Session.TEACH)
        b = field.embed(pose, Session.REPEAT)
        total += float(np.dot(a.values, b.values))
    return total / n_probes


def calibrate_scene_sigma(target_similarity: float, config: FieldConfig, *,
                          tolerance: float = 0.01, n_probes: int = 200,
                          max_sigma: float = 8.0) -> float:
    """Find scene_sigma so mean teach/repeat similarity hits a target.

    Bisects on the monotone similarity-vs-sigma curve. Raises if the target
    is outside the achievable range.
    """
    if not 0.0 < target_similarity < 1.0:
        raise ValueError("target similarity must lie in (0, 1)")

    def measure(sigma: float) -> float:
        probe = FieldConfig(
            dimension=config.dimension,
            correlation_length=config.correlation_length,
            heading_weight=config.heading_weight,
            scene_sigma=sigma,
            measurement_sigma=0.0,
            seed=config.seed,
        )
        return mean_teach_repeat_similarity(probe, n_probes=n_probes)

    lo, hi = 0.0, max_sigma
    if measure(hi) > target_similarity:
        raise ValueError(f"target {target_similarity} unreachable below sigma {max_sigma}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        sim = measure(mid)
        if abs(sim - target_similarity) <= tolerance:
            return mid
        if sim > target_similarity:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
