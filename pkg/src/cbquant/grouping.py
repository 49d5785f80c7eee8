"""Group-wise quantization: split a tensor into contiguous spans, quantize each.

Groups cover the flattened row-major tensor with balanced contiguous spans.
Each group gets its own codebook and its own derived RNG stream, so the
result is bit-identical to quantizing the spans one by one, in any order.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import core
from .errors import EmptyInputError, ShapeMismatchError, TooManyGroupsError

__all__ = [
    "GroupedQuantizedTensor",
    "split_groups",
    "quantize_grouped",
    "reconstruct_grouped",
    "timed_reconstruct_grouped",
]


@dataclass(frozen=True)
class GroupedQuantizedTensor:
    """A tensor quantized as G independent contiguous groups."""

    shape: tuple[int, ...]
    groups: tuple[core.QuantizedVector, ...]
    spans: tuple[tuple[int, int], ...]  # (offset, length) per group
    cfg: core.QuantConfig

    def __post_init__(self):
        n = math.prod(self.shape)
        if len(self.groups) != len(self.spans):
            raise ShapeMismatchError("one span required per group")
        offset = 0
        for qv, (off, length) in zip(self.groups, self.spans):
            if off != offset or length != qv.n:
                raise ShapeMismatchError("spans must be contiguous and match group sizes")
            offset += length
        if offset != n:
            raise ShapeMismatchError(f"spans cover {offset} elements, tensor has {n}")

    @property
    def n(self) -> int:
        return math.prod(self.shape)


def split_groups(n: int, group_count: int) -> tuple[tuple[int, int], ...]:
    """Balanced contiguous (offset, length) spans covering [0, n).

    The first ``n % G`` spans get ``ceil(n/G)`` elements, the rest
    ``floor(n/G)``.  More groups than elements is an error.
    """
    if n < 1:
        raise EmptyInputError("cannot split zero elements")
    if group_count < 1:
        raise TooManyGroupsError("group count must be >= 1")
    if group_count > n:
        raise TooManyGroupsError(f"{group_count} groups requested for {n} elements")
    base, rem = divmod(n, group_count)
    spans = []
    offset = 0
    for g in range(group_count):
        length = base + (1 if g < rem else 0)
        spans.append((offset, length))
        offset += length
    return tuple(spans)


def quantize_grouped(tensor, cfg: core.QuantConfig, tensor_name: str = "") -> GroupedQuantizedTensor:
    """Quantize each contiguous span of the flattened tensor independently.

    Per-group RNG streams are derived from ``(cfg.seed, tensor_name, group
    index)``, so the output matches mapping the flat quantizer over the spans
    sequentially with the same arguments.
    """
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("cannot quantize an empty tensor")
    shape = arr.shape
    flat = arr.reshape(-1)
    spans = split_groups(flat.size, cfg.group_count)
    groups = tuple(
        core.quantize(flat[off : off + length], cfg, tensor_name, g)
        for g, (off, length) in enumerate(spans)
    )
    return GroupedQuantizedTensor(shape=tuple(shape), groups=groups, spans=spans, cfg=cfg)


def reconstruct_grouped(g: GroupedQuantizedTensor) -> np.ndarray:
    """Reconstruct group by group into a float32 tensor of the original shape."""
    out = np.empty(g.n, dtype=np.float32)
    for qv, (off, length) in zip(g.groups, g.spans):
        out[off : off + length] = core.reconstruct(qv)
    return out.reshape(g.shape)


def timed_reconstruct_grouped(g: GroupedQuantizedTensor, repeats: int = 5) -> tuple[np.ndarray, float]:
    """Reconstruct and report the best wall-clock time over ``repeats`` runs."""
    best = np.inf
    out = None
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        out = reconstruct_grouped(g)
        best = min(best, time.perf_counter() - start)
    return out, best
