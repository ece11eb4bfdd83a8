"""
First principal component by power iteration, used to check how smoothly
trained anchor embeddings vary with their index.
"""
import numpy as np

from momentkit._common import check_random_state
from momentkit.exceptions import DegenerateInputError, InputError


def pca_first_component(matrix, tol=1e-10, max_iter=10_000, random_state=0):
    """
    First principal component of the rows of a matrix, by power iteration.

    Parameters
    ----------
    matrix : array_like
        Array of shape ``(N, dim)`` with N >= 2 rows.
    tol : float, optional
        Iteration stops once the direction moves less than this (2-norm).
    max_iter : int, optional
        Upper bound on power iterations.
    random_state : {None, int, np.random.Generator}, optional
        Seeds the starting vector.

    Returns
    -------
    scores : ndarray
        Projection of each mean-centered row onto the component.
    component : ndarray
        Unit vector, with its largest-magnitude entry positive.

    Examples
    --------
    Points along the first axis:

    >>> rows = np.outer(np.arange(1, 6), [1.0, 0.0, 0.0])
    >>> scores, component = pca_first_component(rows)
    >>> scores
    array([-2., -1.,  0.,  1.,  2.])
    >>> component
    array([1., 0., 0.])
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError('PCA needs a 2-D matrix with at least 2 rows')

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    if not np.any(cov):
        raise DegenerateInputError('All rows are identical; no principal '
                                   'direction exists')

    rng = check_random_state(random_state)
    v = rng.standard_normal(x.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            # Started orthogonal to every direction with variance
            v = rng.standard_normal(x.shape[1])
            v /= np.linalg.norm(v)
            continue
        w /= norm
        if np.dot(w, v) < 0:
            w = -w
        converged = np.linalg.norm(w - v) < tol
        v = w
        if converged:
            break

    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    # Exact zeros print as -0. otherwise
    v = v + 0.0
    return centered @ v, v
