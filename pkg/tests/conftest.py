import numpy as np
import pytest

from clustassoc import Categorizer, ClusteredDataset, categorize, categorize_labels


def random_dataset(rng, n_clusters=None, max_size=8, min_size=1, corr=0.0):
    """Small random clustered dataset with continuous margins."""
    if n_clusters is None:
        n_clusters = int(rng.integers(3, 10))
    clusters = []
    for i in range(n_clusters):
        n = int(rng.integers(min_size, max_size + 1))
        x = rng.normal(size=n)
        y = corr * x + np.sqrt(max(0.0, 1 - corr**2)) * rng.normal(size=n)
        clusters.append((f"c{i}", x, y))
    return ClusteredDataset.from_clusters(clusters)


def random_categorized(rng, n_clusters=None, max_size=8, levels_x=3, levels_y=3, min_size=1):
    """Random dataset with random integer categories on both margins."""
    data = random_dataset(rng, n_clusters=n_clusters, max_size=max_size, min_size=min_size)
    xc = rng.integers(1, levels_x + 1, size=data.n_units)
    yc = rng.integers(1, levels_y + 1, size=data.n_units)
    return categorize_labels(data, xc, yc, levels_x, levels_y)


def median_categorized(data):
    """Dichotomize both margins at their pooled medians."""
    return categorize(
        data,
        Categorizer.from_thresholds([float(np.median(data.x))], [float(np.median(data.y))]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
