"""
Anatomy of the 64-dimensional mock embedding
============================================

"""

import numpy as np

from platesearch import RasterImage, cosine_similarity, mock_embed

# The real embedding model is an external neural network. For tests,
# demos and offline work the library ships a deterministic stand-in:
# 48 dims of colour (mean R, G, B over a 4x4 grid of cells) plus a
# 16-bin luminance histogram, L2-normalized. Crude, but it preserves
# the one property everything downstream needs: similar pictures land
# near each other, different pictures do not.

rng = np.random.default_rng(7)


def tile_image(size=96, grid=8):
    tiles = rng.integers(0, 256, size=(grid, grid, 3), dtype=np.uint8)
    factor = size // grid
    pixels = np.repeat(np.repeat(tiles, factor, axis=0), factor, axis=1)
    return RasterImage.from_array(pixels)


img = tile_image()
vec = mock_embed(img)
print(f"model tag: {vec.model}, dim: {vec.dim}")
print(f"unit norm: {np.linalg.norm(vec.values):.12f}")

# The first 48 entries are cell means scaled into [0, 255] before
# normalization; the last 16 are histogram mass. Both blocks are
# visible in the raw vector.
print("\nfirst cell (R, G, B):", np.round(vec.values[:3], 4))
print("histogram block:     ", np.round(vec.values[48:], 4))

# An identical image embeds identically. Byte determinism is what lets
# the evaluation harness reproduce reports bit for bit.
again = mock_embed(img)
print("\nidentical input, identical vector:", np.array_equal(vec.values, again.values))

# Mild damage moves the vector a little; a different picture moves it a
# lot. Similarity is plain cosine, which on unit vectors is the dot
# product.
cropped = RasterImage.from_array(img.pixels[3:-3, 3:-3])
other = tile_image()

sim_crop = cosine_similarity(vec, mock_embed(cropped))
sim_other = cosine_similarity(vec, mock_embed(other))
print(f"\nself vs 3px crop:        {sim_crop:.4f}")
print(f"self vs unrelated image: {sim_other:.4f}")
assert sim_crop > 0.98 > sim_other
