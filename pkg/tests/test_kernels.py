"""Compiled vs NumPy convolution kernels: parity and backend selection."""

import os
import subprocess
import sys

import numpy as np
import pytest

from petcast.nn.kernels import backend_name, compiled_available, pyconv

compiled = pytest.importorskip(
    "petcast.nn.kernels._cconv", reason="compiled extension not built"
)


def _random_instance(rng, t=None, d=None, n_f=None, w=None):
    t = t or int(rng.integers(3, 12))
    d = d or int(rng.integers(1, 6))
    n_f = n_f or int(rng.integers(1, 7))
    w = w or int(rng.integers(1, min(t, 4) + 1))
    emb = rng.normal(size=(t, d))
    weights = rng.normal(size=(n_f, w * d))
    bias = rng.normal(size=n_f)
    return emb, weights, bias


class TestForwardParity:
    def test_pooled_and_argmax_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            emb, weights, bias = _random_instance(rng)
            p_ref, a_ref = pyconv.conv_forward(emb, weights, bias)
            p_c, a_c = compiled.conv_forward(emb, weights, bias)
            np.testing.assert_allclose(p_c, p_ref, atol=1e-12)
            np.testing.assert_array_equal(a_c, a_ref)

    def test_first_max_tie_rule(self):
        # two identical windows: both backends must keep the earlier one
        emb = np.array([[1.0], [1.0], [0.0]])
        weights = np.array([[2.0]])
        bias = np.array([0.0])
        for impl in (pyconv, compiled):
            pooled, argmax = impl.conv_forward(emb, weights, bias)
            assert pooled[0] == pytest.approx(2.0)
            assert argmax[0] == 0

    def test_relu_floor(self):
        emb = np.array([[1.0], [2.0]])
        weights = np.array([[-3.0]])
        bias = np.array([0.0])
        for impl in (pyconv, compiled):
            pooled, argmax = impl.conv_forward(emb, weights, bias)
            assert pooled[0] == 0.0


class TestBackwardParity:
    def _run_backward(self, impl, emb, weights, bias, g):
        pooled, argmax = impl.conv_forward(emb, weights, bias)
        d_emb = np.zeros_like(emb)
        d_w = np.zeros_like(weights)
        d_b = np.zeros_like(bias)
        impl.conv_backward(emb, weights, g, pooled, argmax, d_emb, d_w, d_b)
        return d_emb, d_w, d_b

    def test_gradients_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            emb, weights, bias = _random_instance(rng)
            g = rng.normal(size=bias.shape)
            ref = self._run_backward(pyconv, emb, weights, bias, g)
            got = self._run_backward(compiled, emb, weights, bias, g)
            for a, b in zip(got, ref):
                np.testing.assert_allclose(a, b, atol=1e-12)

    def test_inactive_filters_pass_nothing(self):
        emb = np.array([[1.0], [2.0]])
        weights = np.array([[-3.0]])  # always negative activation
        bias = np.array([0.0])
        for impl in (pyconv, compiled):
            d_emb, d_w, d_b = self._run_backward(
                impl, emb, weights, bias, np.array([1.0])
            )
            assert not d_emb.any() and not d_w.any() and not d_b.any()

    def test_accumulates_into_existing_buffers(self):
        emb = np.array([[1.0], [2.0]])
        weights = np.array([[3.0]])
        bias = np.array([0.0])
        pooled, argmax = pyconv.conv_forward(emb, weights, bias)
        for impl in (pyconv, compiled):
            d_b = np.array([10.0])
            d_emb, d_w = np.zeros_like(emb), np.zeros_like(weights)
            impl.conv_backward(
                emb, weights, np.array([1.0]), pooled, argmax, d_emb, d_w, d_b
            )
            assert d_b[0] == pytest.approx(11.0)


def _backend_in_subprocess(value):
    env = dict(os.environ)
    if value is None:
        env.pop("PETCAST_KERNEL", None)
    else:
        env["PETCAST_KERNEL"] = value
    proc = subprocess.run(
        [sys.executable, "-c",
         "from petcast.nn import kernels; print(kernels.backend_name())"],
        capture_output=True, text=True, env=env,
    )
    return proc


class TestBackendSelection:
    def test_compiled_is_available_here(self):
        assert compiled_available()
        assert backend_name() in ("python", "compiled")

    def test_env_forces_python(self):
        proc = _backend_in_subprocess("python")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "python"

    def test_env_forces_compiled(self):
        proc = _backend_in_subprocess("compiled")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "compiled"

    def test_default_prefers_compiled(self):
        proc = _backend_in_subprocess(None)
        assert proc.returncode == 0
        assert proc.stdout.strip() == "compiled"

    def test_unknown_value_fails_import(self):
        proc = _backend_in_subprocess("bogus")
        assert proc.returncode != 0
        assert "PETCAST_KERNEL" in proc.stderr


class TestModelUsesSelectedBackend:
    def test_forward_identical_across_backends(self):
        """End to end: a whole forward pass matches between backends."""
        code = (
            "import numpy as np\n"
            "from petcast.nn.model import ModelHyper, create_model, forward\n"
            "hyper = ModelHyper(vocab_size=30, embed_dim=6, n_filters=5)\n"
            "model = create_model(hyper, seed=4)\n"
            "ids = np.arange(3, 13) % 30\n"
            "print(repr(forward(model, ids).y_hat))\n"
        )
        outs = {}
        for choice in ("python", "compiled"):
            env = dict(os.environ, PETCAST_KERNEL=choice)
            proc = subprocess.run(
                [sys.executable, "-c", code],
                capture_output=True, text=True, env=env,
            )
            assert proc.returncode == 0, proc.stderr
            outs[choice] = proc.stdout.strip()
        assert outs["python"] == outs["compiled"]
