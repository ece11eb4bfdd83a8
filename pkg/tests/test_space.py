import numpy as np
import pytest
from hypothesis import given
from hypothesis.strategies import floats, integers
from numpy.testing import assert_allclose, assert_array_equal

from momentkit.exceptions import InputError, RangeError, ShapeError
from momentkit.temporal import (TemporalTokenSpace, decode_time,
                                default_frame_times, encode_time,
                                encode_times, finite_difference_gradient,
                                grad_wrt_anchors, gradient_check,
                                inject_time, load_space, make_space,
                                ntp_forward, ntp_weights, relative_error,
                                save_space, seconds_to_tau, tau_to_seconds)


@pytest.fixture(scope='module')
def big_space():
    return make_space(300, 64, random_state=0)


def test_make_space_deterministic():
    a = make_space(10, 4, random_state=5)
    b = make_space(10, 4, random_state=5)
    c = make_space(10, 4, random_state=6)
    assert_array_equal(a.anchors, b.anchors)
    assert not np.array_equal(a.anchors, c.anchors)
    assert a.rng_seed == 5
    assert abs(make_space(300, 64).anchors.std() - 0.02) < 0.002


def test_space_invalid():
    with pytest.raises(InputError):
        make_space(1, 4)
    with pytest.raises(InputError):
        TemporalTokenSpace([[0.0], [np.nan]])
    with pytest.raises(ShapeError):
        TemporalTokenSpace([0.0, 1.0])


def test_anchors_read_only():
    space = make_space(4, 2)
    with pytest.raises(ValueError):
        space.anchors[0, 0] = 1.0


def test_encode_endpoints_exact():
    space = make_space(5, 7, random_state=3)
    assert_array_equal(encode_time(space, 0), space.anchors[0])
    assert_array_equal(encode_time(space, 1), space.anchors[-1])
    for k in range(5):
        assert_array_equal(encode_time(space, k / 4), space.anchors[k])


def test_encode_interpolates():
    space = make_space(5, 7, random_state=3)
    t = space.anchors
    assert_allclose(encode_time(space, 0.625), 0.5 * t[2] + 0.5 * t[3],
                    rtol=1e-12, atol=1e-15)
    assert_allclose(encode_time(space, 0.3), 0.8 * t[1] + 0.2 * t[2],
                    rtol=1e-12, atol=1e-15)


def test_encode_matches_dense_interpolation():
    space = make_space(5, 3, random_state=4)
    grid = np.linspace(0, 1, 100_001)
    dense = np.stack([np.interp(grid, space.anchor_times, space.anchors[:, d])
                      for d in range(space.dim)], axis=1)
    assert_allclose(encode_times(space, grid), dense, atol=1e-15)


def test_encode_quantized():
    space = TemporalTokenSpace(np.arange(10.).reshape(5, 2))
    assert_array_equal(encode_time(space, 0.1, interpolate=False), [0., 1.])
    assert_array_equal(encode_time(space, 0.125, interpolate=False), [2., 3.])
    assert_array_equal(encode_time(space, 1.0, interpolate=False), [8., 9.])


@pytest.mark.parametrize("tau", [-0.1, 1.2, -1e-9, 1 + 1e-9, np.nan])
def test_encode_out_of_range(tau):
    with pytest.raises(RangeError):
        encode_time(make_space(5, 2), tau)


def test_encode_clamps_float_noise():
    space = make_space(5, 2)
    assert_array_equal(encode_time(space, 1 + 1e-14), space.anchors[-1])
    assert_array_equal(encode_time(space, -1e-14), space.anchors[0])


def test_decode_anchor_hit(big_space):
    tau, residual = decode_time(big_space, big_space.anchors[0])
    assert tau == 0
    assert residual == 0


def test_decode_shape():
    with pytest.raises(ShapeError):
        decode_time(make_space(5, 3), [0.0, 1.0])


def test_round_trip(big_space):
    rng = np.random.default_rng(0)
    taus = rng.random(10_000)
    embeddings = encode_times(big_space, taus)
    worst = max(abs(decode_time(big_space, e)[0] - tau)
                for tau, e in zip(taus, embeddings))
    assert worst <= 1e-9


@given(tau=floats(0, 1))
def test_round_trip_property(tau):
    space = make_space(30, 16, random_state=1)
    decoded, residual = decode_time(space, encode_time(space, tau))
    assert abs(decoded - tau) <= 1e-9
    assert residual < 1e-12


def test_decode_matches_grid_search():
    space = make_space(300, 64, random_state=0)
    grid = np.linspace(0, 1, 100_001)
    curve = encode_times(space, grid)
    rng = np.random.default_rng(1)
    for tau in rng.random(10):
        e = encode_time(space, tau) + rng.normal(0, 1e-3, space.dim)
        expected = grid[np.argmin(np.linalg.norm(curve - e, axis=1))]
        decoded, _ = decode_time(space, e)
        assert abs(decoded - expected) <= 1e-5


def test_decode_tie_goes_to_smallest_time():
    # Both curve endpoints are at distance 1 from the origin
    space = TemporalTokenSpace([[1.0, 0.0], [1.0, 5.0], [-1.0, 5.0],
                                [-1.0, 0.0]])
    assert decode_time(space, [0.0, 0.0]) == (0.0, 1.0)


def test_ntp_forward_exact(big_space):
    for k in range(1, 301):
        assert_array_equal(ntp_forward(big_space, k),
                           big_space.anchors[k - 1])
    for k in (0, 301):
        with pytest.raises(IndexError):
            ntp_forward(big_space, k)


def test_ntp_weights():
    assert_array_equal(ntp_weights(3, 2), [0.5, 2.0, 0.5])
    assert_array_equal(ntp_weights(3, 1), [2.0, 0.5, 0.25])
    assert_array_equal(ntp_weights(3, 1, include_self=False),
                       [1.0, 0.5, 0.25])


def test_gradient_examples():
    space = make_space(3, 2)
    upstream = np.array([0.3, -1.2])
    assert_array_equal(
        grad_wrt_anchors(space, 0.5, upstream, ntp_enabled=False).grad,
        [0 * upstream, upstream, 0 * upstream])
    assert_allclose(grad_wrt_anchors(space, 0.5, upstream).grad,
                    [upstream / 2, 2 * upstream, upstream / 2])
    assert_allclose(grad_wrt_anchors(space, 0, upstream).grad,
                    [2 * upstream, upstream / 2, upstream / 4])
    g = grad_wrt_anchors(space, 0.5, upstream)
    assert_array_equal(g.upstream, upstream)


def test_gradient_zero_rows_without_ntp():
    space = make_space(10, 3)
    grad = grad_wrt_anchors(space, 0.37, [1.0, 2.0, 3.0],
                            ntp_enabled=False).grad
    nonzero = np.flatnonzero(np.any(grad != 0, axis=1))
    assert_array_equal(nonzero, [3, 4])


@given(k=integers(1, 15))
def test_gradient_symmetry_and_decay(k):
    n = 15
    space = make_space(n, 2)
    upstream = np.array([1.0, -2.0])
    grad = grad_wrt_anchors(space, (k - 1) / (n - 1), upstream).grad
    for d in range(1, n):
        if k - d >= 1 and k + d <= n:
            assert_array_equal(grad[k - 1 - d], grad[k - 1 + d])
    # Powers of two scale exactly
    norms = np.linalg.norm(grad, axis=1)
    assert_array_equal(norms, norms[k - 1] / 2 * ntp_weights(n, k))


def test_gradient_linear_in_upstream():
    space = make_space(12, 4, random_state=9)
    rng = np.random.default_rng(2)
    u, v = rng.normal(size=(2, 4))
    for tau in (0.0, 0.41, 1.0):
        g_u = grad_wrt_anchors(space, tau, u).grad
        g_v = grad_wrt_anchors(space, tau, v).grad
        assert_allclose(grad_wrt_anchors(space, tau, u + v).grad, g_u + g_v,
                        atol=1e-14)


@pytest.mark.parametrize("ntp_enabled", [True, False])
@pytest.mark.parametrize("include_self", [True, False])
def test_finite_difference_agreement(ntp_enabled, include_self):
    assert gradient_check(100, ntp_enabled=ntp_enabled,
                          include_self=include_self) <= 1e-6


def test_finite_difference_example():
    space = make_space(3, 1, random_state=0)
    numeric = finite_difference_gradient(space, 0.0, [1.0])
    assert_allclose(numeric.ravel(), [2.0, 0.5, 0.25], rtol=1e-6)
    assert relative_error(np.array([2.0]), np.array([2.0])) == 0


def test_inject_time():
    space = make_space(300, 8, random_state=1)
    zeros = np.zeros((5, 8))
    times = [0, 0.1, 0.1, 0.7, 1]
    assert_array_equal(inject_time(space, zeros, times),
                       encode_times(space, times))

    features = np.random.default_rng(0).normal(size=(300, 8))
    out = inject_time(space, features)
    expected = np.stack([encode_time(space, t)
                         for t in default_frame_times(300)])
    assert_array_equal(out, features + expected)

    two = np.ones((2, 8))
    assert_array_equal(inject_time(space, two, [0, 1]),
                       two + space.anchors[[0, -1]])


def test_inject_time_errors():
    space = make_space(10, 4)
    with pytest.raises(ShapeError):
        inject_time(space, np.zeros((3, 5)))
    with pytest.raises(InputError):
        inject_time(space, np.zeros((3, 4)), [0.5, 0.2, 0.9])


def test_seconds_conversion():
    assert seconds_to_tau(15.5, 100) == 0.155
    assert tau_to_seconds(0.5, 60) == 30.0
    with pytest.raises(RangeError):
        seconds_to_tau(5, 0)
    with pytest.raises(RangeError):
        seconds_to_tau(120, 100)


def test_save_load(tmp_path):
    space = make_space(20, 6, random_state=11)
    path = tmp_path / 'space.bin'
    save_space(space, path)
    header = path.read_bytes().split(b'\n', 1)[0]
    assert b'"layout": "row-major-f32-le"' in header
    loaded = load_space(path)
    assert loaded.rng_seed == 11
    assert_array_equal(loaded.anchors,
                       space.anchors.astype('<f4').astype(float))


def test_load_truncated(tmp_path):
    path = tmp_path / 'space.bin'
    save_space(make_space(4, 2), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(InputError):
        load_space(path)


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
