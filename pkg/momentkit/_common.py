"""
Helpers shared by several sub-packages: seeding, option lookup, and the
cosine similarity used by both segment merging and track linking.
"""
import numbers

import numpy as np

from momentkit.exceptions import DegenerateInputError


def check_random_state(seed):
    """
    The `np.random.Generator` behind a ``random_state`` argument.

    An integer seeds a new generator and a generator is used as is, so
    equal seeds give equal output.  None gives an unseeded generator.

    >>> check_random_state(1978).random() == check_random_state(1978).random()
    True
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ValueError('random_state must be None, an int or a Generator, '
                     f'not {seed!r}')


def _get_option(option, option_map, what='Option'):
    try:
        return option_map[option]
    except (KeyError, TypeError):
        raise ValueError(f'{what} {option!r} not understood')


def cosine(u, v):
    """
    Cosine similarity of two vectors.

    Raises `DegenerateInputError` if either vector has zero norm, since the
    similarity is undefined there.

    Examples
    --------
    >>> cosine([1, 0], [1, 1])
    0.7071067811865475
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateInputError('Cosine similarity of a zero-norm vector')
    return float(np.dot(u, v) / (nu * nv))
