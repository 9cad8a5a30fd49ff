"""
Selecting an embedding and a regularizer by nested cross-validation
===================================================================

"""

import numpy as np

from platesearch import Label, filter_anomalies, fit_logistic, nested_cv

# Not every extracted element is worth indexing: blank regions, rules
# and musical staves outnumber the actual illustrations on many pages.
# A small multinomial logistic classifier sorts elements into content
# classes. Because both the embedding (which feature space?) and the
# regularization strength are choices, model selection runs as nested
# cross-validation: inner folds pick (embedding, C), outer folds report
# an honest score for the whole selection procedure.

rng = np.random.default_rng(42)

# Synthetic stand-in for real features: three classes, two candidate
# feature spaces. "sharp" separates the classes; "murky" is the same
# data drowned in noise, playing the role of a weaker embedding.
n_per_class, dim = 60, 16
labels = np.repeat([int(Label.ILLUSTRATION_OR_PHOTOGRAPH), int(Label.MAP), int(Label.BLANK_PAGE)], n_per_class)
centers = rng.standard_normal((3, dim)) * 4.0
sharp = np.vstack([centers[i] + rng.standard_normal((n_per_class, dim)) for i in range(3)])
murky = sharp + rng.standard_normal(sharp.shape) * 12.0

report = nested_cv(
    {"sharp": sharp, "murky": murky},
    labels,
    outer_folds=5,
    inner_folds=3,
    seed=1,
    grid=[0.01, 1.0, 100.0],
)

print(f"mean outer micro-F1: {report.mean_f1:.4f} +/- {report.std_f1:.4f}")
print(f"selections by tag:   {report.selections}")
print(f"\n{'fold':>4} {'tag':>6} {'C':>8} {'inner F1':>9} {'outer F1':>9}")
for fold in report.folds:
    print(
        f"{fold.fold:>4} {fold.selected_tag:>6} {fold.selected_complexity:>8.2f}"
        f" {fold.inner_mean_f1:>9.4f} {fold.outer_f1:>9.4f}"
    )

# The pooled confusion matrix uses predicted class as rows, true class
# as columns, so a column that bleeds across rows is a class the model
# scatters.
print("\nconfusion (rows predicted, cols true):")
print(report.confusion)

# The fitted model also acts as an ingest filter: elements predicted to
# be blank pages or segmentation junk never reach the index. On this
# toy data the blank class is exactly the third blob, so the filter
# should keep two thirds of the corpus.
model = fit_logistic(sharp, labels, complexity=1.0)
element_ids = [f"el-{i:03d}" for i in range(len(labels))]
kept, filt = filter_anomalies(element_ids, sharp, model)
print(
    f"\nfilter kept {filt.kept}/{filt.total}"
    f" (dropped {filt.dropped_fraction * 100:.1f}%, drop labels {list(filt.drop_labels)})"
)
assert filt.kept == 2 * n_per_class
