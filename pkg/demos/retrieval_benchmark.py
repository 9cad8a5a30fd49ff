"""
Benchmarking retrieval under synthetic image damage
===================================================

"""

import numpy as np

from platesearch import (
    EmbeddingStore,
    HnswIndex,
    HnswParams,
    RasterImage,
    TransformRanges,
    mock_embed,
    run_retrieval_eval,
    sample_transform,
)

# How do you measure retrieval quality without ground-truth labels
# saying which historical plates depict the same thing? Self-retrieval:
# damage a copy of an indexed image, query with the damaged copy, and
# check whether the original comes back. The damage model is crop,
# rotate, rescale, sampled per query from a seeded generator, so every
# run of this script prints identical numbers.

rng = np.random.default_rng(42)


def tile_image(size=96, grid=8):
    tiles = rng.integers(0, 256, size=(grid, grid, 3), dtype=np.uint8)
    factor = size // grid
    pixels = np.repeat(np.repeat(tiles, factor, axis=0), factor, axis=1)
    return RasterImage.from_array(pixels)


images = {f"plate-{i:04d}": tile_image() for i in range(80)}

store = EmbeddingStore("mock64", 64)
index = HnswIndex(dim=64, params=HnswParams(ef_search=len(images), rng_seed=11), model="mock64")
for element_id in sorted(images):
    vec = mock_embed(images[element_id])
    store.add(element_id, vec.values)
    index.insert(element_id, vec.values)

# A sample of what the damage looks like in numbers.
params = sample_transform(np.random.default_rng([17, 0]), TransformRanges())
print("one sampled transform:")
print(f"  crop l/r/t/b: {params.crop_left:.3f} {params.crop_right:.3f}"
      f" {params.crop_top:.3f} {params.crop_bottom:.3f}")
print(f"  rotation:     {params.rotation_deg:+.2f} deg")
print(f"  scale w/h:    {params.scale_w:.3f} x {params.scale_h:.3f}\n")

for name, ranges in [
    ("identity", TransformRanges.identity()),
    ("mild (crops to 5%)", TransformRanges.mild()),
    ("full damage", TransformRanges()),
]:
    report = run_retrieval_eval(
        images,
        index.search,
        ranges=ranges,
        seed=17,
        ks=(1, 5, 10),
        index_meta={"model": index.model, "n": len(index)},
    )
    print(name)
    print(report.to_text())

# Reports serialize to canonical JSON, one line, sorted keys. Equal
# bytes across reruns is the cheap way to spot a determinism break.
a = run_retrieval_eval(images, index.search, seed=17).to_json()
b = run_retrieval_eval(images, index.search, seed=17).to_json()
assert a == b
print("byte-identical rerun:", a == b)
