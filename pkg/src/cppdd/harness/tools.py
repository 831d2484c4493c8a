# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats


def uniformity_pvalue(samples: ArrayLike, upper: int, buckets: int = 16) -> float:
    """
    Chi-square p-value of integer samples in ``[0, upper)`` falling uniformly
    into ``buckets`` equally wide buckets.

    Parameters
    ----------
    samples:
        Integer samples, for example field representatives.
    upper:
        Exclusive upper bound of the samples, for example the modulus.
    buckets:
        Number of buckets.

    Returns
    -------
    :
        The p-value, large when the samples look uniform.
    """
    values = np.asarray(samples, dtype=np.float64)
    counts = np.bincount(
        np.minimum((values / upper * buckets).astype(np.int64), buckets - 1),
        minlength=buckets,
    )
    return float(stats.chisquare(counts).pvalue)


def category_pvalue(labels: Sequence, categories: Sequence) -> float:
    """Chi-square p-value of ``labels`` being uniform over ``categories``."""
    counts = [sum(1 for x in labels if x == c) for c in categories]
    return float(stats.chisquare(counts).pvalue)


def linear_r2(x: ArrayLike, y: ArrayLike) -> float:
    """Coefficient of determination of the least-squares line through the points."""
    return float(stats.linregress(x, y).rvalue ** 2)


def spread(values: ArrayLike) -> float:
    """Ratio of the largest to the smallest value."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.max() / v.min())
