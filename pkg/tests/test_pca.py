import numpy as np
import pytest
from numpy.testing import assert_allclose

from momentkit.exceptions import DegenerateInputError, InputError
from momentkit.temporal import pca_first_component


def test_rank_one():
    n = 12
    rows = np.outer(np.arange(1, n + 1), [1.0, 0, 0, 0])
    scores, component = pca_first_component(rows)
    assert_allclose(component, [1, 0, 0, 0], atol=1e-12)
    assert_allclose(scores, np.arange(1, n + 1) - (n + 1) / 2, atol=1e-10)


def test_sign_convention():
    rows = np.outer(np.arange(5), [0.0, -3.0])
    _, component = pca_first_component(rows)
    assert_allclose(component, [0, 1], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_matches_eigendecomposition(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(10, 4)) * [3.0, 1.0, 0.5, 0.2]
    _, component = pca_first_component(x)
    centered = x - x.mean(axis=0)
    _, vectors = np.linalg.eigh(np.cov(centered, rowvar=False))
    expected = vectors[:, -1]
    if np.dot(expected, component) < 0:
        expected = -expected
    assert_allclose(component, expected, atol=1e-8)
    assert_allclose(np.linalg.norm(component), 1)


def test_deterministic():
    x = np.random.default_rng(1).normal(size=(20, 6))
    a = pca_first_component(x, random_state=3)
    b = pca_first_component(x, random_state=3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_degenerate():
    with pytest.raises(DegenerateInputError):
        pca_first_component(np.ones((5, 3)))
    with pytest.raises(InputError):
        pca_first_component(np.ones((1, 3)))


if __name__ == "__main__":
    # Run unit tests, in separate process to avoid warnings about cached
    # modules, printing output line by line in realtime
    from subprocess import PIPE, Popen
    with Popen(['pytest',
                '--tb=short',  # shorter traceback format
                '--hypothesis-show-statistics',
                str(__file__)], stdout=PIPE, bufsize=1,
               universal_newlines=True) as p:
        for line in p.stdout:
            print(line, end='')
