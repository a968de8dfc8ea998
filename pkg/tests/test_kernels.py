import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lowgain import examples as X
from lowgain import kernels
from lowgain.synthesis import davison_gain
from lowgain.model import DcGains

compiled = pytest.mark.skipif(kernels.compiled_backend is None,
                              reason="compiled extension not built")


def _rk_args(n_steps=200, delta=-0.5):
    lfr, d, _ = X.saturated_uncertain_example(1, delta)
    K = davison_gain(DcGains(lfr.F, lfr.E1))
    kinds, params = d.kernel_encoding
    w_values = np.eye(5)
    return (np.zeros(lfr.p), w_values, np.full(5, n_steps // 5, dtype=np.int_),
            np.full(5, 0.01), lfr.F @ K, lfr.G, lfr.E1, lfr.H @ K, lfr.J, lfr.E2,
            kinds, params, 0.5, 1e-12, 10000)


def test_backend_flag_is_consistent():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (kernels.compiled_backend is not None)


@compiled
def test_rk4_backends_agree():
    args = _rk_args()
    ep, ee, sp = kernels.python_backend.rk4_lfr(*args)
    cp, ce, sc = kernels.compiled_backend.rk4_lfr(*args)
    assert sp == sc == 0
    np.testing.assert_allclose(cp, ep, atol=1e-12)
    np.testing.assert_allclose(ce, ee, atol=1e-12)


@compiled
@given(hnp.arrays(np.float64, 3, elements=st.floats(-5, 5)), st.floats(-1.0, 1.0))
def test_fixed_point_backends_agree(c, delta):
    lfr, d, _ = X.saturated_uncertain_example(2, delta)
    kinds, params = d.kernel_encoding
    qp, pp, _, okp = kernels.python_backend.fixed_point(c, lfr.J, kinds, params, 0.5, 1e-12, 10000)
    qc, pc, _, okc = kernels.compiled_backend.fixed_point(c, lfr.J, kinds, params, 0.5, 1e-12,
                                                          10000)
    assert okp and okc
    np.testing.assert_allclose(qc, qp, atol=1e-11)
    np.testing.assert_allclose(pc, pp, atol=1e-11)
    np.testing.assert_allclose(qp, c + lfr.J @ pp, atol=1e-10)


@pytest.mark.parametrize("backend", ["python_backend", "compiled_backend"])
def test_fixed_point_reports_divergence(backend):
    mod = getattr(kernels, backend)
    if mod is None:
        pytest.skip("compiled extension not built")
    kinds, params = np.array([0]), np.array([[1.0, 0.0]])
    _, _, _, ok = mod.fixed_point(np.array([1.0]), np.array([[3.0]]), kinds, params,
                                  0.5, 1e-12, 100)
    assert not ok


def test_channel_kinds():
    kinds = np.array([kernels.LIN, kernels.SAT, kernels.TANH])
    params = np.array([[2.0, 0.0], [1.0, 0.0], [0.5, 1.5]])
    q = np.array([1.5, 1.5, 1.5])
    out = kernels.python_backend.apply_channels(kinds, params, q)
    np.testing.assert_allclose(out, [3.0, 1.0, 0.75 + 1.5 * np.tanh(1.5)])


def test_pure_python_env_forces_fallback():
    env = dict(os.environ, LOWGAIN_PURE_PYTHON="1")
    code = "from lowgain import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"


def test_benchmark_script_runs():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    script = os.path.join(root, "benchmarks", "bench_kernels.py")
    out = subprocess.run([sys.executable, script, "--repeat", "1", "--steps", "50"],
                         capture_output=True, text=True, check=True)
    assert "python" in out.stdout
