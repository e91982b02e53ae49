"""Model backends the server can expose.

A backend declares its descriptor dimension, frame convention, and
translation scale for the hello reply, and answers the two model calls:

    embed(image: bytes) -> list[float]          unit-norm descriptor
    relpose(a: bytes, b: bytes) -> (rotation, translation)
        rotation as 9 row-major floats, translation as 3 floats

Only the echo backend ships here. Real model backends live with their
runtimes and implement the same surface.
"""

from __future__ import annotations

import hashlib
import math


def _expand_to_floats(data: bytes, count: int) -> list[float]:
    """Deterministic counter-mode expansion of a byte string into floats.

    Values land in [-1, 1); the stream depends only on the input bytes,
    so it is stable across platforms and processes.
    """
    digest = hashlib.sha256(data).digest()
    values: list[float] = []
    counter = 0
    while len(values) < count:
        block = hashlib.sha256(digest + counter.to_bytes(4, "big")).digest()
        for i in range(0, len(block) - 3, 4):
            if len(values) == count:
                break
            word = int.from_bytes(block[i:i + 4], "big")
            values.append(word / 2.0 ** 31 - 1.0)
        counter += 1
    return values


class EchoBackend:
    """Deterministic stand-in for real embedding and pose models.

    Descriptors are hashes of the image bytes stretched to the declared
    dimension, so identical images agree and different images disagree.
    Relative pose is always the identity: the backend has no geometry,
    it exists to exercise the protocol.
    """

    descriptor_dim = 512
    frame_convention = "camera_optical"
    translation_scale = "metric"
    models = {"embed": "echo-sha256", "relpose": "echo-identity"}

    def embed(self, image: bytes) -> list[float]:
        values = _expand_to_floats(image, self.descriptor_dim)
        norm = math.sqrt(math.fsum(v * v for v in values))
        return [v / norm for v in values]

    def relpose(self, image_a: bytes, image_b: bytes) -> tuple[list[float], list[float]]:
        rotation = [1.0, 0.0, 0.0,
                    0.0, 1.0, 0.0,
                    0.0, 0.0, 1.0]
        return rotation, [0.0, 0.0, 0.0]
