"""
Continuous temporal token space.

N anchor embeddings sit at evenly spaced normalized times
``tau_k = (k-1)/(N-1)``.  Any time in [0, 1] is encoded by linear
interpolation between the two neighbouring anchors, and an embedding is
decoded back to a time by projecting it onto that piecewise-linear curve.

Neighboring token propagation (NTP) leaves the forward value of token
``<k>`` unchanged but routes its gradient to every anchor ``i`` with weight
``delta(i, k) + 2**-|i - k|``.
"""
import json
from dataclasses import dataclass

import numpy as np

from momentkit._common import check_random_state
from momentkit.exceptions import InputError, RangeError, ShapeError

# Float noise from upstream arithmetic is tolerated up to this much outside
# [0, 1] and clamped.
TAU_CLAMP = 1e-12

# Interpolation positions this close to an integer land on the anchor.
_SNAP = 1e-10

_LAYOUT = 'row-major-f32-le'


@dataclass(frozen=True, eq=False)
class TemporalTokenSpace:
    """
    N anchor embeddings spanning normalized video time [0, 1].

    Row ``k - 1`` of `anchors` is the embedding of temporal token ``<k>``.
    The anchor array is stored read-only, so a space can be shared between
    threads; training produces new spaces instead of mutating one.
    """
    anchors: np.ndarray
    rng_seed: int = None

    def __post_init__(self):
        anchors = np.array(self.anchors, dtype=np.float64)
        if anchors.ndim != 2:
            raise ShapeError('anchors must be a 2-D (n_anchors, dim) array')
        if anchors.shape[0] < 2:
            raise InputError('A temporal token space needs at least 2 '
                             'anchors (the two endpoints)')
        if anchors.shape[1] < 1:
            raise ShapeError('Embedding width must be positive')
        if not np.all(np.isfinite(anchors)):
            raise InputError('Anchor values must be finite')
        anchors.setflags(write=False)
        object.__setattr__(self, 'anchors', anchors)

    @property
    def n_anchors(self):
        return self.anchors.shape[0]

    @property
    def dim(self):
        return self.anchors.shape[1]

    @property
    def anchor_times(self):
        """Normalized time of each anchor, 0 to 1 inclusive."""
        return np.arange(self.n_anchors) / (self.n_anchors - 1)


@dataclass(frozen=True, eq=False)
class AnchorGradients:
    """
    Gradient of a scalar loss with respect to every anchor row, together
    with the upstream gradient that produced it.
    """
    grad: np.ndarray
    upstream: np.ndarray


def make_space(n_anchors=300, dim=64, random_state=0):
    """
    Create a space with Gaussian-initialized anchors.

    Parameters
    ----------
    n_anchors : int, optional
        Number of temporal tokens N.  Must be at least 2.
    dim : int, optional
        Embedding width.
    random_state : int, optional
        Seed for the anchor initialization (mean 0, standard deviation 0.02).
        The same seed always gives the same anchors.

    Returns
    -------
    space : TemporalTokenSpace

    Examples
    --------
    >>> space = make_space(5, 3, random_state=1)
    >>> space.anchors.shape
    (5, 3)
    >>> space.anchor_times
    array([0.  , 0.25, 0.5 , 0.75, 1.  ])
    """
    if n_anchors < 2:
        raise InputError('A temporal token space needs at least 2 anchors')
    if dim < 1:
        raise ShapeError('Embedding width must be positive')
    rng = check_random_state(random_state)
    anchors = rng.normal(0.0, 0.02, size=(n_anchors, dim))
    seed = random_state if isinstance(random_state, (int, np.integer)) else None
    return TemporalTokenSpace(anchors, seed)


def check_tau(tau):
    """
    Validate a normalized time, clamping float noise just outside [0, 1].

    >>> check_tau(1 + 1e-15)
    1.0
    >>> check_tau(1.5)
    Traceback (most recent call last):
    ...
    momentkit.exceptions.RangeError: Normalized time 1.5 outside [0, 1]
    """
    tau = float(tau)
    if not (-TAU_CLAMP <= tau <= 1 + TAU_CLAMP):
        raise RangeError(f'Normalized time {tau} outside [0, 1]', tau)
    return min(max(tau, 0.0), 1.0)


def _locate(n_anchors, taus):
    """
    Find the left anchor (0-based) and fractional offset for each time.

    The last segment is used for tau = 1, with offset 1.
    """
    p = np.asarray(taus, dtype=float) * (n_anchors - 1)
    nearest = np.round(p)
    p = np.where(np.abs(p - nearest) <= _SNAP, nearest, p)
    a = np.minimum(np.floor(p), n_anchors - 2).astype(int)
    f = p - a
    return a, f


def encode_times(space, taus, interpolate=True):
    """
    Encode many normalized times at once.

    Parameters
    ----------
    space : TemporalTokenSpace
    taus : array_like
        Normalized times in [0, 1].
    interpolate : bool, optional
        If False, each time is quantized to its nearest anchor (round half
        up) instead of interpolated, reproducing discrete temporal tokens.

    Returns
    -------
    embeddings : ndarray
        Array of shape ``(len(taus), dim)``.
    """
    taus = np.array([check_tau(t) for t in np.ravel(taus)], dtype=float)
    a, f = _locate(space.n_anchors, taus)
    if not interpolate:
        f = np.where(f >= 0.5, 1.0, 0.0)
    f = f[:, np.newaxis]
    return (1 - f) * space.anchors[a] + f * space.anchors[a + 1]


def encode_time(space, tau, interpolate=True):
    """
    Encode a normalized time as an embedding.

    The embedding is the linear interpolation between the two anchors on
    either side of `tau`: with ``p = tau*(N-1)``, ``a = floor(p)`` and
    ``f = p - a``, it is ``(1-f)*anchors[a] + f*anchors[a+1]``.

    Parameters
    ----------
    space : TemporalTokenSpace
    tau : float
        Normalized time in [0, 1].
    interpolate : bool, optional
        If False, return the nearest anchor row instead.

    Returns
    -------
    embedding : ndarray
        Vector of length ``space.dim``.

    Examples
    --------
    >>> space = TemporalTokenSpace(np.arange(10.).reshape(5, 2))
    >>> encode_time(space, 0.625)
    array([5., 6.])
    >>> encode_time(space, 0.625, interpolate=False)
    array([6., 7.])
    """
    return encode_times(space, [tau], interpolate)[0]


def decode_time(space, embedding):
    """
    Decode an embedding to the normalized time of the nearest curve point.

    The embedding is projected onto each of the N-1 straight segments
    between neighbouring anchors (clamped to the segment), and the closest
    projection wins.  Ties go to the smallest time.

    Parameters
    ----------
    space : TemporalTokenSpace
    embedding : array_like
        Vector of length ``space.dim``.

    Returns
    -------
    tau : float
        Normalized time of the closest point on the curve.
    residual : float
        Euclidean distance from `embedding` to that point.

    Examples
    --------
    >>> space = TemporalTokenSpace([[0., 0.], [1., 0.], [1., 1.]])
    >>> decode_time(space, [0.5, 0.2])
    (0.25, 0.2)
    """
    e = np.asarray(embedding, dtype=float)
    if e.shape != (space.dim,):
        raise ShapeError(f'Embedding has shape {e.shape}, '
                         f'expected ({space.dim},)')

    start = space.anchors[:-1]
    direction = np.diff(space.anchors, axis=0)
    length2 = np.einsum('ij,ij->i', direction, direction)
    along = np.einsum('ij,ij->i', e - start, direction)
    s = np.divide(along, length2, out=np.zeros_like(along),
                  where=length2 > 0)
    s = np.clip(s, 0.0, 1.0)
    nearest = start + s[:, np.newaxis] * direction
    dist = np.linalg.norm(e - nearest, axis=1)

    # argmin returns the first (smallest-time) segment among equal distances
    j = int(np.argmin(dist))
    tau = (j + s[j]) / (space.n_anchors - 1)
    return float(tau), float(dist[j])


def _check_index(n_anchors, k):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= n_anchors):
        raise IndexError(f'Temporal token index {k} outside 1..{n_anchors}')


def ntp_weights(n_anchors, k, include_self=True):
    """
    Gradient routing weights of neighboring token propagation for token k.

    Anchor ``i`` (1-based) receives ``delta(i, k) + 2**-|i - k|``: the direct
    path through ``t_k`` plus its weight inside the adjacent sum.  With
    `include_self` False the adjacent sum skips ``i = k``, leaving the token
    itself a weight of 1.

    Examples
    --------
    >>> ntp_weights(5, 2)
    array([0.5  , 2.   , 0.5  , 0.25 , 0.125])
    >>> ntp_weights(5, 2, include_self=False)
    array([0.5  , 1.   , 0.5  , 0.25 , 0.125])
    """
    _check_index(n_anchors, k)
    distance = np.abs(np.arange(1, n_anchors + 1) - k)
    weights = np.exp2(-distance.astype(float))
    if not include_self:
        weights[k - 1] = 0.0
    weights[k - 1] += 1.0
    return weights


def routing_matrix(n_anchors, indices, ntp_enabled=True, include_self=True):
    """
    Stack of routing weight rows, one per 1-based token index.

    Without NTP each row is one-hot at its own token.
    """
    rows = np.zeros((len(indices), n_anchors))
    for row, k in enumerate(indices):
        if ntp_enabled:
            rows[row] = ntp_weights(n_anchors, k, include_self)
        else:
            _check_index(n_anchors, k)
            rows[row, k - 1] = 1.0
    return rows


def _adjacent_sum(anchors, k, include_self=True):
    weights = ntp_weights(anchors.shape[0], k, include_self)
    weights[k - 1] -= 1.0
    return weights @ anchors


def ntp_forward(space, k, include_self=True):
    """
    Forward value of temporal token ``<k>`` after neighboring token
    propagation.

    Computes ``t_k + t_adj - StopGrad(t_adj)`` with a single stored
    ``t_adj``, so the result equals ``anchors[k-1]`` bit for bit.

    Parameters
    ----------
    space : TemporalTokenSpace
    k : int
        Token index, 1 to N.

    Returns
    -------
    embedding : ndarray

    Examples
    --------
    >>> space = make_space(300, 8, random_state=2)
    >>> all((ntp_forward(space, k) == space.anchors[k - 1]).all()
    ...     for k in range(1, 301))
    True
    """
    _check_index(space.n_anchors, k)
    t_adj = _adjacent_sum(space.anchors, k, include_self)
    detached = t_adj.copy()
    # Grouping the difference first makes it exactly zero, so the value of
    # t_k passes through untouched.
    return space.anchors[k - 1] + (t_adj - detached)


def _check_upstream(space, upstream):
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (space.dim,):
        raise ShapeError(f'Upstream gradient has shape {upstream.shape}, '
                         f'expected ({space.dim},)')
    return upstream


def grad_wrt_token(space, k, upstream, ntp_enabled=True, include_self=True):
    """
    Gradient on every anchor from an upstream gradient on token ``<k>``.

    Examples
    --------
    >>> space = make_space(3, 1)
    >>> grad_wrt_token(space, 1, [1.0]).grad.ravel()
    array([2.  , 0.5 , 0.25])
    """
    upstream = _check_upstream(space, upstream)
    weights = routing_matrix(space.n_anchors, [k], ntp_enabled,
                             include_self)[0]
    return AnchorGradients(np.outer(weights, upstream), upstream)


def grad_wrt_anchors(space, tau, upstream, ntp_enabled=True,
                     include_self=True):
    """
    Gradient on every anchor from an upstream gradient on the embedding of
    a normalized time.

    The interpolated embedding mixes tokens ``a`` and ``a+1`` with weights
    ``1-f`` and ``f``; each token then routes its share through
    `ntp_weights` when `ntp_enabled`, or straight to itself otherwise.

    Parameters
    ----------
    space : TemporalTokenSpace
    tau : float
        Normalized time in [0, 1].
    upstream : array_like
        Gradient of the loss with respect to ``encode_time(space, tau)``.
    ntp_enabled : bool, optional
        Apply neighboring token propagation.
    include_self : bool, optional
        Keep the ``i = k`` term of the adjacent sum (weight 2 on the token
        itself).  False gives the ablation with weight 1.

    Returns
    -------
    gradients : AnchorGradients

    Examples
    --------
    >>> space = make_space(3, 2)
    >>> grad_wrt_anchors(space, 0.5, [1.0, 2.0], ntp_enabled=False).grad
    array([[0., 0.],
           [1., 2.],
           [0., 0.]])
    >>> grad_wrt_anchors(space, 0.5, [1.0, 2.0]).grad
    array([[0.5, 1. ],
           [2. , 4. ],
           [0.5, 1. ]])
    """
    tau = check_tau(tau)
    upstream = _check_upstream(space, upstream)
    a, f = _locate(space.n_anchors, [tau])
    a, f = int(a[0]), float(f[0])
    rows = routing_matrix(space.n_anchors, [a + 1, a + 2], ntp_enabled,
                          include_self)
    weights = (1 - f) * rows[0] + f * rows[1]
    return AnchorGradients(np.outer(weights, upstream), upstream)


def _surrogate_loss(anchors, frozen, a, f, upstream, ntp_enabled,
                    include_self):
    """
    Loss through the interpolated, propagated embedding with every
    ``StopGrad(t_adj)`` frozen at the values in `frozen`.
    """
    value = np.zeros(anchors.shape[1])
    for weight, k in ((1 - f, a + 1), (f, a + 2)):
        token = anchors[k - 1]
        if ntp_enabled:
            token = token + _adjacent_sum(anchors, k, include_self) - frozen[k]
        value = value + weight * token
    return float(upstream @ value)


def finite_difference_gradient(space, tau, upstream, ntp_enabled=True,
                               include_self=True, step=1e-5):
    """
    Central finite-difference gradient of the frozen-StopGrad surrogate.

    This is the independent check on `grad_wrt_anchors`: every anchor
    entry is nudged by ``±step`` and the change of
    ``upstream · (interpolated t_k + t_adj(t) - c)`` is measured, with each
    ``c`` held at the unperturbed ``t_adj``.
    """
    tau = check_tau(tau)
    upstream = _check_upstream(space, upstream)
    a, f = _locate(space.n_anchors, [tau])
    a, f = int(a[0]), float(f[0])
    anchors = np.array(space.anchors)
    frozen = {k: _adjacent_sum(anchors, k, include_self)
              for k in (a + 1, a + 2)}

    grad = np.zeros_like(anchors)
    for index in np.ndindex(*anchors.shape):
        original = anchors[index]
        anchors[index] = original + step
        plus = _surrogate_loss(anchors, frozen, a, f, upstream, ntp_enabled,
                               include_self)
        anchors[index] = original - step
        minus = _surrogate_loss(anchors, frozen, a, f, upstream, ntp_enabled,
                                include_self)
        anchors[index] = original
        grad[index] = (plus - minus) / (2 * step)
    return grad


def relative_error(analytic, numeric):
    """
    Largest absolute difference, relative to the largest analytic entry.
    """
    scale = max(np.max(np.abs(analytic)), np.finfo(float).tiny)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def gradient_check(n_trials=100, max_anchors=16, max_dim=6, ntp_enabled=True,
                   include_self=True, random_state=0):
    """
    Compare `grad_wrt_anchors` against `finite_difference_gradient` on
    random (space, tau, upstream) triples.

    Returns
    -------
    max_error : float
        Worst `relative_error` over all trials.
    """
    rng = check_random_state(random_state)
    worst = 0.0
    for _ in range(n_trials):
        n = int(rng.integers(2, max_anchors + 1))
        dim = int(rng.integers(1, max_dim + 1))
        space = TemporalTokenSpace(rng.normal(0.0, 1.0, size=(n, dim)))
        tau = float(rng.random())
        upstream = rng.normal(0.0, 1.0, size=dim)
        analytic = grad_wrt_anchors(space, tau, upstream, ntp_enabled,
                                    include_self).grad
        numeric = finite_difference_gradient(space, tau, upstream,
                                             ntp_enabled, include_self)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def inject_time(space, frame_features, frame_times=None):
    """
    Add the temporal embedding of each frame's time to its feature.

    Parameters
    ----------
    space : TemporalTokenSpace
    frame_features : array_like
        Array of shape ``(M, dim)``.
    frame_times : array_like, optional
        Non-decreasing normalized times, one per frame.  Defaults to M
        uniformly sampled frames, ``tau_i = i/(M-1)``.

    Returns
    -------
    features : ndarray
        Array of shape ``(M, dim)``.

    Examples
    --------
    >>> space = TemporalTokenSpace([[0., 0.], [10., 20.]])
    >>> inject_time(space, np.ones((3, 2)))
    array([[ 1.,  1.],
           [ 6., 11.],
           [11., 21.]])
    """
    features = np.asarray(frame_features, dtype=float)
    if features.ndim != 2 or features.shape[1] != space.dim:
        raise ShapeError(f'Frame features have shape {features.shape}, '
                         f'expected (M, {space.dim})')
    if frame_times is None:
        frame_times = default_frame_times(features.shape[0])
    frame_times = np.asarray(frame_times, dtype=float)
    if frame_times.shape != (features.shape[0],):
        raise ShapeError('Need exactly one time per frame')
    if np.any(np.diff(frame_times) < 0):
        raise InputError('Frame times must be sorted in non-decreasing order')
    return features + encode_times(space, frame_times)


def default_frame_times(n_frames=300):
    """
    Normalized times of `n_frames` uniformly sampled frames, both video
    endpoints included.

    >>> default_frame_times(5)
    array([0.  , 0.25, 0.5 , 0.75, 1.  ])
    """
    if n_frames == 1:
        return np.zeros(1)
    return np.arange(n_frames) / (n_frames - 1)


def seconds_to_tau(seconds, duration):
    """
    Convert a timestamp in seconds to normalized time.

    >>> seconds_to_tau(15.5, 100)
    0.155
    """
    if not duration > 0:
        raise RangeError(f'Video duration must be positive, got {duration}',
                         duration)
    return check_tau(seconds / duration)


def tau_to_seconds(tau, duration):
    """
    Convert a normalized time to seconds.

    >>> tau_to_seconds(0.25, 60)
    15.0
    """
    if not duration > 0:
        raise RangeError(f'Video duration must be positive, got {duration}',
                         duration)
    return check_tau(tau) * duration


def save_space(space, path):
    """
    Write a space as a one-line JSON header followed by the anchors as
    little-endian 32-bit floats in row-major order.
    """
    header = {'n_anchors': space.n_anchors, 'dim': space.dim,
              'rng_seed': space.rng_seed, 'layout': _LAYOUT}
    with open(path, 'wb') as f:
        f.write(json.dumps(header).encode('utf-8') + b'\n')
        f.write(space.anchors.astype('<f4').tobytes(order='C'))


def load_space(path):
    """
    Read a space written by `save_space`.  Values are widened to 64 bits.
    """
    with open(path, 'rb') as f:
        header = json.loads(f.readline().decode('utf-8'))
        payload = f.read()
    if header.get('layout') != _LAYOUT:
        raise InputError(f"Unsupported anchor layout {header.get('layout')!r}")
    n, dim = int(header['n_anchors']), int(header['dim'])
    expected = n * dim * 4
    if len(payload) != expected:
        raise InputError(f'Anchor payload has {len(payload)} bytes, '
                         f'expected {expected}')
    anchors = np.frombuffer(payload, dtype='<f4').reshape(n, dim)
    return TemporalTokenSpace(anchors.astype(np.float64), header['rng_seed'])
