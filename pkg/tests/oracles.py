"""Independent reference implementations used as test oracles.

Everything here is written with explicit Python loops and numpy only, without
touching the library code paths it is compared against.
"""

import math

import numpy as np

from l2d import functional as F
from l2d.objectives import (
    ContrastiveConfig,
    MMDConfig,
    VariationalGaussianHead,
    class_conditional_mmd,
    club_estimate,
    likelihood_loss,
    supcon_loss,
)
from l2d.style import StyleComplementModule, draw_mix_weights, style_shift
from l2d.tensor import Tensor, backward, concat, parameter

STEP = 1e-5
TOL = 1e-4
FLOOR = 1e-8


# -- finite differences ---------------------------------------------------


def numeric_grad(fn, arrays, index, step=STEP):
    """Central differences of scalar ``fn(*arrays)`` w.r.t. ``arrays[index]``."""
    base = [np.array(a, dtype=float) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + step
        hi = fn(*[Tensor(a) for a in base]).item()
        target[i] = orig - step
        lo = fn(*[Tensor(a) for a in base]).item()
        target[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


def analytic_grads(fn, arrays):
    params = [parameter(np.array(a, dtype=float)) for a in arrays]
    loss = fn(*params)
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def max_rel_error(analytic, numeric, floor=FLOOR):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(analytic - numeric)[mask] / scale[mask]))


def gradcheck(fn, arrays, step=STEP):
    """Worst relative error over all inputs of ``fn``."""
    worst = 0.0
    for i, a in enumerate(analytic_grads(fn, arrays)):
        worst = max(worst, max_rel_error(a, numeric_grad(fn, arrays, i, step)))
    return worst


def _weighted(out, weights):
    """Reduce a tensor to a scalar with fixed random weights so no gradient is trivially uniform."""
    return (out * weights).sum()


def gradient_cases(seed=0):
    """``name -> (fn, arrays)``: every differentiable primitive and three composite graphs."""
    rng = np.random.default_rng(seed)
    r = lambda *shape: rng.standard_normal(shape)  # noqa: E731
    pos = lambda *shape: rng.uniform(0.5, 2.0, shape)  # noqa: E731
    away = lambda *shape: rng.choice([-1, 1], shape) * rng.uniform(0.2, 1.5, shape)  # noqa: E731
    cases = {}

    def add(name, fn, *arrays):
        probe = fn(*[Tensor(a) for a in arrays])
        w = rng.standard_normal(probe.shape)
        cases[name] = (lambda *t, fn=fn, w=w: _weighted(fn(*t), w), list(arrays))

    add("add", lambda a, b: a + b, r(3, 4), r(4))
    add("sub", lambda a, b: a - b, r(3, 4), r(3, 1))
    add("mul", lambda a, b: a * b, r(3, 4), r(1, 4))
    add("div", lambda a, b: a / b, r(3, 4), pos(3, 4))
    add("neg", lambda a: -a, r(5))
    add("pow", lambda a: a**3.0, r(2, 3))
    add("matmul", lambda a, b: a @ b, r(3, 4), r(4, 2))
    add("getitem", lambda a: a[np.array([0, 2, 2]), 1:], r(3, 4))
    add("exp", lambda a: a.exp(), r(2, 5))
    add("log", lambda a: a.log(), pos(2, 5))
    add("tanh", lambda a: a.tanh(), r(2, 5))
    add("relu", lambda a: a.relu(), away(2, 5))
    add("sqrt", lambda a: a.sqrt(), pos(2, 5))
    add("clip", lambda a: a.clip(-1.0, 1.0), away(3, 4) * 1.3)
    add("sum_axis", lambda a: a.sum(axis=1), r(3, 4, 2))
    add("sum_all", lambda a: a.sum() * a.sum(), r(3, 4))
    add("mean_axis", lambda a: a.mean(axis=(0, 2), keepdims=True), r(3, 4, 2))
    add("reshape", lambda a: a.reshape(4, 3), r(3, 4))
    add("transpose", lambda a: a.transpose(2, 0, 1), r(2, 3, 4))
    add("concat", lambda a, b: concat([a, b], axis=1), r(2, 3), r(2, 2))
    add("conv2d", lambda x, k: F.conv2d(x, k, 1, 1), r(2, 2, 5, 5), r(3, 2, 3, 3))
    add("conv2d_stride2", lambda x, k: F.conv2d(x, k, 2, 1), r(1, 2, 6, 6), r(2, 2, 3, 3))
    add("conv_transpose2d", lambda x, k: F.conv_transpose2d(x, k, 1, 1), r(2, 3, 4, 4), r(3, 2, 3, 3))
    add("conv_transpose2d_stride2", lambda x, k: F.conv_transpose2d(x, k, 2, 1), r(1, 2, 3, 3), r(2, 2, 3, 3))
    add("linear", lambda x, w, b: F.linear(x, w, b), r(3, 4), r(2, 4), r(2))
    add("max_pool2d", lambda x: F.max_pool2d(x, 2), r(2, 2, 4, 6))
    add("log_softmax", lambda x: F.log_softmax(x, axis=1), r(3, 5))
    add("l2_normalize", lambda x: F.l2_normalize(x), r(4, 3))
    add("instance_mean", lambda f: F.instance_mean_var(f)[0], r(2, 3, 4, 4))
    add("instance_std", lambda f: (F.instance_mean_var(f)[1] + F.EPS).sqrt(), r(2, 3, 4, 4))
    add("pairwise_sq_dists", lambda a, b: F.pairwise_sq_dists(a, b), r(3, 4), r(5, 4))
    add("style_shift", lambda f, m, s: style_shift(f, m, s), r(2, 2, 3, 3), r(2, 3, 3), r(2, 3, 3))

    # composite 1: a small tanh convnet with pooling and cross-entropy
    x = r(2, 3, 8, 8)
    labels = np.array([1, 0])

    def convnet(k1, w):
        h = F.max_pool2d(F.conv2d(Tensor(x), k1, 1, 1).tanh(), 2)
        logits = F.linear(h.reshape(2, -1), w, Tensor(np.zeros(2)))
        return -(F.log_softmax(logits, axis=1) * np.eye(2)[labels]).sum() * 0.5

    cases["composite_convnet"] = (convnet, [r(4, 3, 3, 3) * 0.3, r(2, 64) * 0.2])

    # composite 2: style generator -> embedding -> CLUB estimate w.r.t. the style maps
    module = StyleComplementModule(2, image_shape=(3, 6, 6), kernel_sizes=(1, 3))
    module.reinit(np.random.default_rng(seed))
    weights = draw_mix_weights(2, np.random.default_rng(seed + 1))
    q = VariationalGaussianHead(4, rng=seed)
    proj = r(3 * 36, 4) * 0.2
    imgs = np.tanh(r(3, 3, 6, 6))

    def generator_club(m1, s1, m2, s2):
        t1, t2 = module.transformations
        saved = [(t.mean_shift, t.var_shift) for t in (t1, t2)]
        t1.mean_shift, t1.var_shift, t2.mean_shift, t2.var_shift = m1, s1, m2, s2
        try:
            xp, _ = module.generate(Tensor(imgs), weights=weights)
        finally:
            (t1.mean_shift, t1.var_shift), (t2.mean_shift, t2.var_shift) = saved
        z = Tensor(imgs.reshape(3, -1) @ proj)
        zp = xp.reshape(3, -1) @ Tensor(proj)
        return club_estimate(z, zp, q)

    shape = (3, 6, 6)
    cases["composite_generator_club"] = (
        generator_club,
        [r(*shape) * 0.1, 1.0 + 0.1 * r(*shape), r(*shape) * 0.1, 1.0 + 0.1 * r(*shape)],
    )

    # composite 3: the task-side objectives through normalization, MMD and the variational head
    y = np.array([0, 1, 0, 1])

    def task_objectives(z, zp, w1):
        head = VariationalGaussianHead(3, rng=0)
        head.w1 = w1
        sup = supcon_loss(F.l2_normalize(concat([z, zp])), np.concatenate([y, y]), ContrastiveConfig(0.5))
        mmd = class_conditional_mmd(z, zp, y, y, MMDConfig("rbf", bandwidth=2.0))
        return sup + mmd + likelihood_loss(z, zp, head)

    cases["composite_task_objectives"] = (task_objectives, [r(4, 3), r(4, 3), r(6, 3) * 0.5])
    return cases


# -- brute-force losses ------------------------------------------------------


def log_normal(x, mean, log_var):
    return -0.5 * math.log(2 * math.pi) - 0.5 * log_var - (x - mean) ** 2 / (2 * math.exp(log_var))


def brute_club(z, zp, mean, log_var):
    """Double loop over the sampled CLUB definition, given q's outputs per row of ``z``."""
    n, d = z.shape
    total = 0.0
    for i in range(n):
        pos = sum(log_normal(zp[i, k], mean[i, k], log_var[i, k]) for k in range(d))
        neg = 0.0
        for j in range(n):
            neg += sum(log_normal(zp[j, k], mean[i, k], log_var[i, k]) for k in range(d))
        total += pos - neg / n
    return total / n


def brute_supcon(e, labels, tau):
    n = len(labels)
    total = 0.0
    for i in range(n):
        positives = [p for p in range(n) if p != i and labels[p] == labels[i]]
        if not positives:
            continue
        denom = sum(math.exp(float(e[i] @ e[a]) / tau) for a in range(n) if a != i)
        anchor = 0.0
        for p in positives:
            anchor += math.log(math.exp(float(e[i] @ e[p]) / tau) / denom)
        total += -anchor / len(positives)
    return total


def brute_mmd(z, zp, labels, labels_plus, kernel, bandwidth=None):
    def k(a, b):
        if kernel == "linear":
            return float(a @ b)
        return math.exp(-float(((a - b) ** 2).sum()) / bandwidth)

    terms = []
    for m in sorted(set(labels) | set(labels_plus)):
        s = [z[i] for i in range(len(labels)) if labels[i] == m]
        t = [zp[j] for j in range(len(labels_plus)) if labels_plus[j] == m]
        if not s or not t:
            continue
        ss = sum(k(a, b) for a in s for b in s) / len(s) ** 2
        st = sum(k(a, b) for a in s for b in t) / (len(s) * len(t))
        tt = sum(k(a, b) for a in t for b in t) / len(t) ** 2
        terms.append(ss - 2 * st + tt)
    return sum(terms) / len(terms)


def brute_median_bandwidth(points):
    d = []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            v = float(((points[i] - points[j]) ** 2).sum())
            if v > 0:
                d.append(v)
    return float(np.median(d)) if d else 1.0


def brute_log_softmax(logits):
    out = np.zeros_like(logits)
    for i, row in enumerate(logits):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        out[i] = [v - lse for v in row]
    return out


def brute_ce_task(logits, logits_plus, labels):
    lp, lpp = brute_log_softmax(logits), brute_log_softmax(logits_plus)
    n = len(labels)
    return -(sum(lp[i, labels[i]] for i in range(n)) + sum(lpp[i, labels[i]] for i in range(n))) / (2 * n)


def brute_infonce(z, zp, scale):
    n = len(z)
    total = 0.0
    for i in range(n):
        scores = [scale * float(z[i] @ zp[j]) for j in range(n)]
        total += scores[i] - math.log(sum(math.exp(s) for s in scores))
    return total / n + math.log(n)


def brute_conv2d(x, k, stride, padding):
    b, c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for n in range(b):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[n, oc, i, j] = (patch * k[oc]).sum()
    return out


def brute_conv_transpose2d(x, k, stride, padding):
    b, c, h, w = x.shape
    _, o, kh, kw = k.shape
    full = np.zeros((b, o, (h - 1) * stride + kh, (w - 1) * stride + kw))
    for n in range(b):
        for ic in range(c):
            for i in range(h):
                for j in range(w):
                    full[n, :, i * stride : i * stride + kh, j * stride : j * stride + kw] += x[n, ic, i, j] * k[ic]
    hp, wp = full.shape[2] - 2 * padding, full.shape[3] - 2 * padding
    return full[:, :, padding : padding + hp, padding : padding + wp]
