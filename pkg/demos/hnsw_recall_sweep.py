"""
Graph index recall as a function of search effort
=================================================

"""

import time

import numpy as np

from platesearch import EmbeddingStore, HnswIndex, HnswParams, brute_force_knn, recall_at_k

# The vector index is a hierarchical small-world graph. Search walks the
# graph greedily while keeping a candidate frontier of size ef; a larger
# ef explores more of the graph and recovers more of the true neighbours
# at the cost of more distance evaluations. This script measures that
# trade-off directly against exact brute force.

n, dim, n_queries, k = 5000, 64, 200, 10
rng = np.random.default_rng(2024)

vectors = rng.standard_normal((n, dim)).astype(np.float32)
vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
queries = rng.standard_normal((n_queries, dim)).astype(np.float32)
queries /= np.linalg.norm(queries, axis=1, keepdims=True)

ids = [f"v{i:05d}" for i in range(n)]

store = EmbeddingStore("demo", dim)
for i, element_id in enumerate(ids):
    store.add(element_id, vectors[i])

index = HnswIndex(dim=dim, params=HnswParams(rng_seed=5), model="demo")
start = time.perf_counter()
for i, element_id in enumerate(ids):
    index.insert(element_id, vectors[i])
build = time.perf_counter() - start
print(f"built {n} vectors in {build:.1f}s, top layer {index.max_level}")

# Ground truth from the flat store.
exact = [brute_force_knn(store, q, k) for q in queries]

print(f"\n{'ef':>5} {'recall@10':>10} {'queries/s':>10}")
for ef in (8, 16, 32, 64, 128, 256):
    start = time.perf_counter()
    results = [index.search(q, k, ef=ef) for q in queries]
    elapsed = time.perf_counter() - start
    recall = float(np.mean([recall_at_k(r, e, k) for r, e in zip(results, exact)]))
    print(f"{ef:>5} {recall:>10.4f} {n_queries / elapsed:>10.0f}")

# With ef equal to the collection size the frontier never drops a
# candidate, so the walk degenerates into exhaustive scoring and the
# result matches brute force exactly, ordering included.
full = [index.search(q, k, ef=n) for q in queries]
print("\nef=n identical to brute force:", full == exact)
