"""Discrete Bayes filter over map node indices.

Beliefs are plain numpy probability vectors over nodes. Each repeat cycle
convolves the belief with a forward-biased motion kernel, then reweights
it with a softmax-style appearance likelihood against the node
descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Descriptor
from .topomap import TopoMap

DEFAULT_KERNEL_OFFSETS = ((-1, 0.1), (0, 0.2), (1, 0.5), (2, 0.2))


class BeliefCollapseError(ValueError):
    """Raised when the posterior has no probability mass left."""


@dataclass(frozen=True)
class MotionKernel:
    """Node-index transition kernel: (offset, probability) pairs."""

    offsets: tuple[tuple[int, float], ...] = DEFAULT_KERNEL_OFFSETS

    def __post_init__(self) -> None:
        if not self.offsets:
            raise ValueError("kernel needs at least one offset")
        total = 0.0
        for delta, prob in self.offsets:
            if prob < 0.0:
                raise ValueError(f"kernel probability for offset {delta} is negative")
            total += prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"kernel probabilities sum to {total!r}, expected 1")

    @property
    def has_forward_bias(self) -> bool:
        """True when some strictly positive offset carries probability."""
        return any(delta > 0 and prob > 0.0 for delta, prob in self.offsets)


@dataclass(frozen=True)
class LikelihoodConfig:
    """Appearance likelihood: exp(similarity / temperature) + floor."""

    temperature: float = 0.07
    floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.floor <= 0.0:
            raise ValueError("likelihood floor must be positive")


def init_belief(n_nodes: int, start: int | None = None, *,
                eps_init: float = 1e-3) -> np.ndarray:
    """Uniform belief, or a spike at `start` with eps_init spread elsewhere."""
    if n_nodes < 2:
        raise ValueError("belief needs at least two nodes")
    if start is None:
        return np.full(n_nodes, 1.0 / n_nodes)
    if not 0 <= start < n_nodes:
        raise ValueError(f"start node {start} out of range")
    belief = np.full(n_nodes, eps_init / max(n_nodes - 1, 1))
    belief[start] = 1.0 - eps_init
    return belief / belief.sum()


def predict(belief: np.ndarray, kernel: MotionKernel) -> np.ndarray:
    """Convolve the belief with the motion kernel.

    Mass pushed past either end of the route accumulates at that end.
    """
    b = np.asarray(belief, dtype=np.float64)
    n = b.size
    out = np.zeros(n)
    for delta, prob in kernel.offsets:
        if prob == 0.0:
            continue
        if delta == 0:
            out += prob * b
        elif delta > 0:
            d = min(delta, n)
            if d < n:
                out[d:] += prob * b[:-d]
            out[-1] += prob * b[n - d:].sum()
        else:
            d = min(-delta, n)
            if d < n:
                out[:-d] += prob * b[d:]
            out[0] += prob * b[:d].sum()
    return out / out.sum()


def measurement_likelihood(query: Descriptor, topo_map: TopoMap,
                           config: LikelihoodConfig | None = None) -> np.ndarray:
    """Per-node appearance likelihood of a query descriptor."""
    cfg = config or LikelihoodConfig()
    if query.dim != topo_map.descriptor_dim:
        raise ValueError(
            f"query dimension {query.dim} != map dimension {topo_map.descriptor_dim}"
        )
    sims = np.clip(topo_map.descriptor_matrix @ query.values, -1.0, 1.0)
    return np.exp(sims / cfg.temperature) + cfg.floor


def update(belief: np.ndarray, likelihood: np.ndarray) -> np.ndarray:
    """Pointwise Bayes update; renormalizes to sum 1."""
    b = np.asarray(belief, dtype=np.float64)
    like = np.asarray(likelihood, dtype=np.float64)
    if b.shape != like.shape:
        raise ValueError(f"belief shape {b.shape} != likelihood shape {like.shape}")
    posterior = b * like
    total = posterior.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise BeliefCollapseError("belief collapse: posterior mass is zero")
    return posterior / total


def belief_mode(belief: np.ndarray) -> int:
    """Index of the belief maximum; ties break toward the larger index."""
    b = np.asarray(belief)
    return b.size - 1 - int(np.argmax(b[::-1]))


def select_subgoal(belief: np.ndarray, lookahead: int = 1) -> int:
    """Subgoal node: belief mode plus lookahead, clamped to the last node."""
    if lookahead < 0:
        raise ValueError("lookahead must be non-negative")
    n = np.asarray(belief).size
    return min(belief_mode(belief) + lookahead, n - 1)
