# The CBQ container stores, per group, 2**bits float32 centroids, their
# occupancy counts, and the labels packed at exactly `bits` bits each.
# Round-trips are bit-exact, which is what makes the compression ratio an
# honest measurement rather than a formula.

import tempfile
from pathlib import Path

import numpy as np

from cbquant import (
    QuantConfig,
    Scheme,
    compression_ratio,
    pack_indices,
    quantize_grouped,
    read_bundle,
    read_cbq,
    reconstruct_grouped,
    unpack_indices,
    write_bundle,
    write_cbq,
)

# --- fixed-width bit packing -------------------------------------------------
labels = [3, 2, 1, 0]
packed = pack_indices(labels, bits=2)
print("labels", labels, "-> packed", packed.hex(), "-> back",
      unpack_indices(packed, 4, 2).tolist())

# --- CBQ round trip ----------------------------------------------------------
v = np.random.default_rng(0).normal(size=10_000).astype(np.float32)
cfg = QuantConfig(scheme=Scheme.KMEANS, bits=4, max_iterations=3, seed=9, group_count=4)
g = quantize_grouped(v, cfg, tensor_name="weights")
blob = write_cbq(g)
again = read_cbq(blob)
assert write_cbq(again) == blob
assert np.array_equal(reconstruct_grouped(again), reconstruct_grouped(g))
print(f"\nCBQ blob: {len(blob)} bytes for {v.size} float32 values "
      f"({32 * v.size / (8 * len(blob)):.2f}x smaller)")

# --- predicted ratios match serialized sizes exactly --------------------------
print("\npredicted compression ratios (n = 1e6, one group):")
for bits in (1, 3, 8):
    ratio = compression_ratio(10**6, QuantConfig(scheme=Scheme.LINEAR, bits=bits))
    print(f"  {bits} bits -> {ratio:6.2f}x")

# --- tensor bundles: the CLI's input format ----------------------------------
with tempfile.TemporaryDirectory() as tmp:
    manifest = Path(tmp) / "model.json"
    write_bundle(manifest, {"embed": v.reshape(100, 100), "head": v[:64].reshape(8, 8)})
    loaded = read_bundle(manifest)
    print("\nbundle tensors:", {k: t.shape for k, t in loaded.items()})
