"""
Small gradient-descent experiments on a temporal token space.

Only some anchors are supervised.  Without neighboring token propagation
the rest never receive a gradient; with it they are dragged along by their
supervised neighbours, and the learned anchors form a smoother curve.
"""
import csv
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import spearmanr

from momentkit._common import check_random_state
from momentkit.exceptions import DegenerateInputError, InputError, TrainingError
from momentkit.temporal.pca import pca_first_component
from momentkit.temporal.space import (TemporalTokenSpace, make_space,
                                      ntp_forward, routing_matrix)

logger = logging.getLogger(__name__)


def every_nth_index(n_anchors, every=8):
    """
    1-based token indices 1, 1+every, 1+2*every, ... up to `n_anchors`.

    >>> every_nth_index(20, 8)
    (1, 9, 17)
    """
    return tuple(range(1, n_anchors + 1, every))


def sinusoidal_targets(indices, n_anchors, dim, random_state=0):
    """
    Smooth targets: each embedding dimension is a low-frequency sinusoid of
    the token's normalized time, with a seeded frequency (1 or 2 cycles)
    and phase per dimension.
    """
    rng = check_random_state(random_state)
    freq = rng.integers(1, 3, size=dim)
    phase = rng.uniform(0, 2 * np.pi, size=dim)
    tau = (np.asarray(indices, dtype=float) - 1) / (n_anchors - 1)
    return np.sin(2 * np.pi * np.outer(tau, freq) + phase)


def random_targets(indices, dim, random_state=0):
    """Unstructured targets, for stress runs."""
    rng = check_random_state(random_state)
    return rng.standard_normal((len(indices), dim))


@dataclass
class TrainConfig:
    """
    Settings for `train_anchors`.

    `supervised_indices` are 1-based token indices (every 8th by default)
    and `targets` holds one row per supervised index (seeded sinusoids by
    default, or unstructured Gaussian rows if `random_targets`).
    """
    n_anchors: int = 64
    dim: int = 16
    learning_rate: float = 0.1
    steps: int = 500
    supervised_indices: tuple = None
    targets: np.ndarray = None
    ntp_enabled: bool = True
    include_self: bool = True
    random_targets: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_anchors < 2 or self.dim < 1:
            raise InputError('Need at least 2 anchors and a positive width')
        if self.steps < 0:
            raise InputError(f'steps must be non-negative, got {self.steps}')
        if not self.learning_rate > 0:
            raise InputError('learning_rate must be positive, got '
                             f'{self.learning_rate}')
        if self.supervised_indices is None:
            self.supervised_indices = every_nth_index(self.n_anchors)
        self.supervised_indices = tuple(int(k) for k in
                                        self.supervised_indices)
        if not all(1 <= k <= self.n_anchors for k in self.supervised_indices):
            raise InputError('Supervised indices must lie in '
                             f'1..{self.n_anchors}')
        if len(set(self.supervised_indices)) != len(self.supervised_indices):
            raise InputError('Supervised indices must be distinct')
        if self.targets is None:
            # Offset seed so targets are not correlated with the anchor init
            if self.random_targets:
                self.targets = random_targets(self.supervised_indices,
                                              self.dim, self.rng_seed + 1)
            else:
                self.targets = sinusoidal_targets(self.supervised_indices,
                                                  self.n_anchors, self.dim,
                                                  self.rng_seed + 1)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.shape != (len(self.supervised_indices), self.dim):
            raise InputError(f'targets must have shape '
                             f'({len(self.supervised_indices)}, {self.dim})')


def train_anchors(config, initial=None):
    """
    Fit the supervised tokens to their targets by full-batch gradient
    descent.

    The loss is ``sum_k ||ntp_forward(space, k) - target_k||**2`` over the
    supervised tokens.  Its gradient with respect to the forward value of
    token k, ``2*(t_k - target_k)``, is routed to the anchors with
    `routing_matrix`, so with NTP every anchor moves and without it only
    the supervised ones do.

    Parameters
    ----------
    config : TrainConfig
    initial : TemporalTokenSpace, optional
        Starting space.  By default a fresh `make_space` seeded with
        ``config.rng_seed``.

    Returns
    -------
    space : TemporalTokenSpace
        The trained space.
    loss_curve : list of float
        Loss before each step, followed by the final loss, so it has
        ``steps + 1`` entries.

    Examples
    --------
    One supervised anchor already at its target does not move anything:

    >>> space = make_space(4, 2, random_state=0)
    >>> config = TrainConfig(4, 2, supervised_indices=[2],
    ...                      targets=space.anchors[[1]], steps=3)
    >>> trained, curve = train_anchors(config, space)
    >>> curve
    [0.0, 0.0, 0.0, 0.0]
    >>> bool((trained.anchors == space.anchors).all())
    True
    """
    if initial is None:
        initial = make_space(config.n_anchors, config.dim, config.rng_seed)
    if initial.anchors.shape != (config.n_anchors, config.dim):
        raise InputError('Initial space does not match the config shape')

    indices = config.supervised_indices
    routing = routing_matrix(config.n_anchors, indices, config.ntp_enabled,
                             config.include_self)
    anchors = np.array(initial.anchors)
    curve = []
    for step in range(config.steps + 1):
        space = TemporalTokenSpace(anchors, initial.rng_seed)
        forward = np.array([ntp_forward(space, k, config.include_self)
                            for k in indices]).reshape(len(indices),
                                                       config.dim)
        residual = forward - config.targets
        loss = float(np.sum(residual ** 2))
        if not np.isfinite(loss):
            raise TrainingError(f'Loss became non-finite at step {step}',
                                step)
        curve.append(loss)
        if step == config.steps:
            break
        if step % 100 == 0:
            logger.debug('step %d loss %.6g', step, loss)
        grad = routing.T @ (2 * residual)
        anchors = anchors - config.learning_rate * grad

    logger.info('Trained %d steps (NTP %s): loss %.6g -> %.6g',
                config.steps, 'on' if config.ntp_enabled else 'off',
                curve[0], curve[-1])
    return TemporalTokenSpace(anchors, initial.rng_seed), curve


@dataclass
class ContinuityReport:
    """
    How continuous a set of learned anchors is.

    adjacent_mean_cos
        Mean cosine similarity of neighbouring anchors (k, k+1).
    random_mean_cos
        Mean cosine similarity over a seeded sample of non-adjacent pairs.
    pca1_spearman
        Absolute Spearman correlation between token index and the first
        principal component score.
    unsupervised_displacement
        Largest distance moved by an anchor that was never supervised.
    """
    adjacent_mean_cos: float
    random_mean_cos: float
    pca1_spearman: float
    unsupervised_displacement: float
    pca1_scores: np.ndarray = field(default=None, compare=False, repr=False)

    @property
    def gap(self):
        return self.adjacent_mean_cos - self.random_mean_cos

    def to_dict(self):
        return {'adjacent_mean_cos': self.adjacent_mean_cos,
                'random_mean_cos': self.random_mean_cos,
                'pca1_spearman': self.pca1_spearman,
                'unsupervised_displacement': self.unsupervised_displacement}


def _row_cosines(a, b):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateInputError('Zero-norm anchor embedding')
    return np.clip(np.einsum('ij,ij->i', a, b) / (na * nb), -1.0, 1.0)


def continuity_report(space, initial, supervised_indices, n_pairs=1000,
                      random_state=0):
    """
    Measure the continuity of a trained space.

    Parameters
    ----------
    space : TemporalTokenSpace
        The trained anchors.
    initial : TemporalTokenSpace
        The anchors before training, for displacement.
    supervised_indices : sequence of int
        1-based indices that had targets.
    n_pairs : int, optional
        Number of non-adjacent pairs sampled for the baseline similarity.
    random_state : {None, int, np.random.Generator}, optional

    Returns
    -------
    report : ContinuityReport
    """
    anchors = space.anchors
    n = space.n_anchors
    adjacent = float(_row_cosines(anchors[:-1], anchors[1:]).mean())

    rng = check_random_state(random_state)
    if n >= 3:
        i = rng.integers(0, n, size=4 * n_pairs)
        j = rng.integers(0, n, size=4 * n_pairs)
        keep = np.abs(i - j) >= 2
        i, j = i[keep][:n_pairs], j[keep][:n_pairs]
        random_cos = float(_row_cosines(anchors[i], anchors[j]).mean())
    else:
        random_cos = float('nan')

    scores, _ = pca_first_component(anchors, random_state=random_state)
    rho = spearmanr(np.arange(n), scores)[0]
    rho = abs(float(rho)) if np.isfinite(rho) else 0.0

    unsupervised = np.setdiff1d(np.arange(n), np.asarray(supervised_indices) - 1)
    if unsupervised.size:
        moved = np.linalg.norm(anchors[unsupervised] -
                               initial.anchors[unsupervised], axis=1)
        displacement = float(moved.max())
    else:
        displacement = 0.0

    return ContinuityReport(adjacent, random_cos, rho, displacement, scores)


def _run_arm(config):
    initial = make_space(config.n_anchors, config.dim, config.rng_seed)
    trained, _ = train_anchors(config, initial)
    return continuity_report(trained, initial, config.supervised_indices,
                             random_state=config.rng_seed)


def write_pca_csv(path, scores):
    """Write ``index,pca1`` rows, 1-based token index first."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['index', 'pca1'])
        for k, score in enumerate(scores, start=1):
            writer.writerow([k, repr(float(score))])


def continuity_experiment(base=None, output_dir=None, n_jobs=1):
    """
    Train the same config with and without neighboring token propagation
    and report the continuity of each result.

    Parameters
    ----------
    base : TrainConfig, optional
        Shared settings; `ntp_enabled` is overridden in each arm.  Defaults
        to ``TrainConfig()`` (64 anchors, width 16, every 8th supervised,
        500 steps, learning rate 0.1).
    output_dir : str, optional
        If given, ``pca1_ntp.csv`` and ``pca1_plain.csv`` are written there.
    n_jobs : int, optional
        Run the two arms in parallel when greater than 1.

    Returns
    -------
    report_ntp, report_plain : ContinuityReport
    """
    if base is None:
        base = TrainConfig()
    arms = [replace(base, ntp_enabled=True), replace(base, ntp_enabled=False)]
    report_ntp, report_plain = Parallel(n_jobs=n_jobs)(
        delayed(_run_arm)(arm) for arm in arms)

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        write_pca_csv(os.path.join(output_dir, 'pca1_ntp.csv'),
                      report_ntp.pca1_scores)
        write_pca_csv(os.path.join(output_dir, 'pca1_plain.csv'),
                      report_plain.pca1_scores)

    logger.info('Continuity gap: %.4f with NTP, %.4f without',
                report_ntp.gap, report_plain.gap)
    return report_ntp, report_plain
