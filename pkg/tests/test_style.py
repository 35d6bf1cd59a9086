import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l2d import functional as F
from l2d.style import (
    MixWeights,
    StyleComplementModule,
    StyleTransformation,
    apply_transformation,
    draw_mix_weights,
    export_pnm,
    generate,
    reinit,
    style_shift,
)
from l2d.tensor import Tensor, backward, parameter

from oracles import TOL, gradcheck


def identity_kernels(t: StyleTransformation):
    k = np.zeros(t.conv_kernel.shape)
    c = min(k.shape[0], k.shape[1])
    mid = t.kernel_size // 2
    for i in range(c):
        k[i, i, mid, mid] = 1.0
    t.conv_kernel = Tensor(k)
    t.deconv_kernel = Tensor(k.copy())


def set_identity_shift(t: StyleTransformation, x: np.ndarray):
    """Shift maps equal to the (single-image) instance statistics of ``x``."""
    mean, var = F.instance_mean_var(Tensor(x))
    c, h, w = t.mean_shift.shape
    t.mean_shift = parameter(np.broadcast_to(mean.data[0][:, None, None], (c, h, w)).copy())
    t.var_shift = parameter(np.broadcast_to(np.sqrt(var.data[0] + F.EPS)[:, None, None], (c, h, w)).copy())


def test_style_shift_identity_configuration():
    f = np.random.default_rng(0).standard_normal((1, 3, 5, 5))
    t = StyleTransformation(1, (3, 5, 5))
    set_identity_shift(t, f)
    out = style_shift(Tensor(f), t.mean_shift, t.var_shift)
    np.testing.assert_allclose(out.data, f, atol=1e-10)


def test_style_shift_zero_variance_shift_gives_constant_map():
    f = np.random.default_rng(1).standard_normal((4, 3, 6, 6))
    mu = np.random.default_rng(2).standard_normal((3, 6, 6))
    out = style_shift(Tensor(f), Tensor(mu), Tensor(np.zeros((3, 6, 6)))).data
    for b in range(4):
        np.testing.assert_array_equal(out[b], mu)


def test_style_shift_hand_example():
    f = Tensor(np.array([0.0, 1.0, 1.0, 0.0]).reshape(1, 1, 2, 2))
    out = style_shift(f, Tensor(np.zeros((1, 2, 2))), Tensor(np.ones((1, 2, 2))), eps=0.0)
    np.testing.assert_allclose(out.data.ravel(), [-1.0, 1.0, 1.0, -1.0])


def test_style_shift_rejects_geometry_mismatch():
    with pytest.raises(ValueError):
        style_shift(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((3, 5, 5))), Tensor(np.ones((3, 5, 5))))


@pytest.mark.parametrize("k", [1, 3, 5, 7, 9, 11])
def test_apply_transformation_preserves_shape(k):
    t = StyleTransformation(k)
    t.reinit(np.random.default_rng(k))
    x = Tensor(np.random.default_rng(0).uniform(-1, 1, (2, 3, 32, 32)))
    assert apply_transformation(x, t).shape == (2, 3, 32, 32)


@pytest.mark.parametrize("k", [1, 3])
def test_apply_transformation_identity_configuration(k):
    x = np.random.default_rng(3).uniform(-1, 1, (1, 3, 8, 8))
    t = StyleTransformation(k, (3, 8, 8))
    identity_kernels(t)
    set_identity_shift(t, x)
    np.testing.assert_allclose(apply_transformation(Tensor(x), t).data, x, atol=1e-9)


def test_apply_transformation_gradient_wrt_shift_maps():
    rng = np.random.default_rng(4)
    t = StyleTransformation(3, (3, 5, 5))
    t.reinit(rng)
    x = rng.uniform(-1, 1, (2, 3, 5, 5))
    w = rng.standard_normal((2, 3, 5, 5))

    def fn(mean_shift, var_shift):
        t.mean_shift, t.var_shift = mean_shift, var_shift
        return (apply_transformation(Tensor(x), t) * w).sum()

    assert gradcheck(fn, [rng.standard_normal((3, 5, 5)) * 0.1, 1 + 0.1 * rng.standard_normal((3, 5, 5))]) < TOL


def test_single_transform_mix_is_tanh_of_branch():
    module = StyleComplementModule(1, (3, 8, 8))
    module.reinit(0)
    x = Tensor(np.random.default_rng(5).uniform(-1, 1, (2, 3, 8, 8)))
    expected = apply_transformation(x, module.transformations[0]).tanh().data
    for w in (0.3, -2.0, 7.5):
        out, _ = module.generate(x, weights=MixWeights(np.array([w])))
        np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_single_identity_transform_returns_tanh_of_input():
    x = np.random.default_rng(6).uniform(-1, 1, (1, 3, 6, 6))
    module = StyleComplementModule(1, (3, 6, 6))
    identity_kernels(module.transformations[0])
    set_identity_shift(module.transformations[0], x)
    out, _ = module.generate(Tensor(x), rng=0)
    np.testing.assert_allclose(out.data, np.tanh(x), atol=1e-9)
    assert np.abs(out.data).max() <= 1.0


def test_equal_weights_average_two_branches():
    module = StyleComplementModule(2, (3, 8, 8))
    module.reinit(1)
    x = Tensor(np.random.default_rng(7).uniform(-1, 1, (3, 3, 8, 8)))
    out, _ = module.generate(x, weights=MixWeights(np.array([1.0, 1.0])))
    a, b = (apply_transformation(x, t).tanh().data for t in module.transformations)
    np.testing.assert_allclose(out.data, (a + b) / 2, atol=1e-12)


def test_mix_guard_resamples_small_sums():
    class Scripted:
        def __init__(self, draws):
            self.draws = list(draws)

        def standard_normal(self, k):
            return np.array(self.draws.pop(0))

    w = draw_mix_weights(2, Scripted([[0.5, -0.45], [0.04, 0.03], [1.0, 0.2]]), guard=0.1)
    np.testing.assert_array_equal(w.w, [1.0, 0.2])
    assert w.coefficients.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
def test_mix_coefficients_sum_to_one(seed, k):
    w = draw_mix_weights(k, np.random.default_rng(seed))
    assert abs(w.w.sum()) >= 0.1
    assert abs(w.coefficients.sum() - 1.0) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reinit_bounds_and_shift_maps_untouched(seed):
    module = StyleComplementModule(6, (3, 12, 12))
    for t in module.transformations:
        t.mean_shift.data[:] = 0.25
        t.var_shift.data[:] = 0.75
    before = {k: p.data.tobytes() for k, p in module.named_parameters().items()}
    reinit(module, seed)
    for t in module.transformations:
        bound = 1.0 / np.sqrt(t.kernel_size * t.kernel_size)
        for kernel in (t.conv_kernel.data, t.deconv_kernel.data):
            assert np.all(np.abs(kernel) < bound)
    assert {k: p.data.tobytes() for k, p in module.named_parameters().items()} == before


def test_reinit_is_deterministic_per_seed():
    a, b = StyleComplementModule(3, (3, 8, 8)), StyleComplementModule(3, (3, 8, 8))
    a.reinit(11)
    b.reinit(11)
    for ta, tb in zip(a.transformations, b.transformations):
        np.testing.assert_array_equal(ta.conv_kernel.data, tb.conv_kernel.data)
        np.testing.assert_array_equal(ta.deconv_kernel.data, tb.deconv_kernel.data)


def test_module_structure_and_trainable_set():
    module = StyleComplementModule()
    assert module.kernel_sizes == (1, 3, 5, 7, 9, 11)
    params = module.parameters()
    assert len(params) == 12
    for t in module.transformations:
        assert t.mean_shift.size == t.var_shift.size == 3 * 32 * 32
        assert not t.conv_kernel.requires_grad and not t.deconv_kernel.requires_grad
    kernel_ids = {id(t.conv_kernel) for t in module.transformations}
    assert kernel_ids.isdisjoint(id(p) for p in params)
    with pytest.raises(ValueError, match="distinct"):
        StyleComplementModule(2, kernel_sizes=(3, 3))
    with pytest.raises(ValueError):
        StyleTransformation(4)


def test_generate_pairs_outputs_with_inputs_and_is_seeded():
    module = StyleComplementModule(3, (3, 8, 8))
    module.reinit(2)
    x = np.random.default_rng(8).uniform(-1, 1, (4, 3, 8, 8))
    full, w = generate(Tensor(x), module, rng=5)
    again, w2 = generate(Tensor(x), module, rng=5)
    np.testing.assert_array_equal(full.data, again.data)
    np.testing.assert_array_equal(w.w, w2.w)
    single, _ = module.generate(Tensor(x[2:3]), weights=w)
    np.testing.assert_allclose(single.data[0], full.data[2], atol=1e-12)


def test_generator_gradient_is_live():
    module = StyleComplementModule(2, (3, 8, 8))
    module.reinit(3)
    x = Tensor(np.random.default_rng(9).uniform(-1, 1, (2, 3, 8, 8)))
    out, _ = module.generate(x, rng=1)
    backward((out * np.random.default_rng(1).standard_normal(out.shape)).sum())
    assert any(np.any(p.grad != 0) for p in module.parameters())


def test_export_pnm_writes_pixmaps(tmp_path):
    images = np.random.default_rng(0).uniform(-1, 1, (2, 3, 4, 5))
    paths = export_pnm(images, tmp_path, prefix="x")
    assert [p.name for p in paths] == ["x_0000.ppm", "x_0001.ppm"]
    raw = paths[0].read_bytes()
    assert raw.startswith(b"P6\n5 4\n255\n")
    assert len(raw) == len(b"P6\n5 4\n255\n") + 4 * 5 * 3
    gray = export_pnm(images[:, :1], tmp_path, prefix="g")
    assert gray[0].read_bytes().startswith(b"P5")
