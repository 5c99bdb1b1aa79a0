import os
import subprocess
import sys

import numpy as np
import pytest

from fusesep import _conv_py, kernels

try:
    from fusesep import _conv
except ImportError:  # extension not built
    _conv = None

BACKENDS = [_conv_py] + ([_conv] if _conv is not None else [])
IDS = ["python"] + (["compiled"] if _conv is not None else [])


def naive_forward(x, w, b):
    B, Ci, H, W = x.shape
    Co = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = np.zeros((B, Co, H, W))
    for n in range(B):
        for o in range(Co):
            for i in range(H):
                for j in range(W):
                    y[n, o, i, j] = b[o] + np.sum(w[o] * xp[n, :, i:i + 3, j:j + 3])
    return y


def random_problem(seed, B=2, Ci=3, Co=4, H=6, W=5):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((B, Ci, H, W)), rng.standard_normal((Co, Ci, 3, 3)),
            rng.standard_normal(Co))


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
def test_forward_matches_loops(impl):
    x, w, b = random_problem(0)
    np.testing.assert_allclose(impl.conv3x3_forward(x, w, b), naive_forward(x, w, b), atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=IDS)
def test_backward_is_adjoint(impl):
    # <gy, conv(x)> is bilinear: gradients follow from finite differences exactly
    x, w, b = random_problem(1)
    gy = np.random.default_rng(2).standard_normal((2, 4, 6, 5))
    gx, gw, gb = impl.conv3x3_backward(x, w, gy)
    f = lambda x_, w_, b_: np.sum(gy * naive_forward(x_, w_, b_))
    h = 1e-6
    for arr, grad, args in ((x, gx, 0), (w, gw, 1), (b, gb, 2)):
        flat = arr.ravel()
        for k in np.random.default_rng(3).choice(flat.size, min(8, flat.size), replace=False):
            plus, minus = [a.copy() for a in (x, w, b)], [a.copy() for a in (x, w, b)]
            plus[args].flat[k] += h
            minus[args].flat[k] -= h
            fd = (f(*plus) - f(*minus)) / (2 * h)
            assert grad.flat[k] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.skipif(_conv is None, reason="compiled extension not built")
def test_backends_agree():
    x, w, b = random_problem(4, B=3, Ci=8, Co=16, H=33, W=17)
    gy = np.random.default_rng(5).standard_normal((3, 16, 33, 17))
    np.testing.assert_allclose(_conv.conv3x3_forward(x, w, b), _conv_py.conv3x3_forward(x, w, b),
                               rtol=1e-12, atol=1e-12)
    for a, c in zip(_conv.conv3x3_backward(x, w, gy), _conv_py.conv3x3_backward(x, w, gy)):
        np.testing.assert_allclose(a, c, rtol=1e-11, atol=1e-11)


def test_dispatcher_accepts_non_contiguous_float32():
    x, w, b = random_problem(6)
    xf = np.asfortranarray(x.astype(np.float32))
    y = kernels.conv3x3_forward(xf, w, b)
    np.testing.assert_allclose(y, naive_forward(xf.astype(np.float64), w, b), atol=1e-12)


def test_env_forces_python_backend():
    env = dict(os.environ, FUSESEP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import fusesep; print(fusesep.KERNEL_BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
