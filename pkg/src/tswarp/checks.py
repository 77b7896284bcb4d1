"""Finite-difference gradient suite.

Runs ``grad_check`` over every differentiable primitive, a full
re-gridding layer in both directions, a two-layer attention block, and
a small end-to-end model.  The same suite backs the ``gradcheck`` CLI
command and the acceptance tests, which require every entry to stay
below 1e-4 maximum relative error.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor
from .attention import AttentionBlock
from .dataio import GridInstance, batch as make_batch
from .model import ModelConfig, MultiScaleModel
from .warp import WarpLayer

__all__ = ["run_gradient_suite", "GRADIENT_TOLERANCE"]

GRADIENT_TOLERANCE = 1e-4


def _p(rng, name, *shape):
    return Parameter(name, rng.normal(size=shape))


def _op_checks(rng):
    """Closures for every primitive; each returns (callable, params)."""
    checks = {}

    def simple(name, build):
        checks[name] = build

    a = _p(rng, "a", 3, 4)
    b = _p(rng, "b", 3, 4)
    c = _p(rng, "c", 4)  # broadcasts against (3, 4)
    simple("add", lambda: (lambda: tt.tsum((a + c) * (a + c)), [a, c]))
    simple("sub", lambda: (lambda: tt.tsum((a - b) * (a - b)), [a, b]))
    simple("mul", lambda: (lambda: tt.tsum(a * b), [a, b]))
    pos = _p(rng, "pos", 3, 4)
    pos.data = np.abs(pos.data) + 0.5
    simple("div", lambda: (lambda: tt.tsum(a / pos), [a, pos]))
    simple("neg", lambda: (lambda: tt.tsum(-(a * a)), [a]))
    simple("maximum", lambda: (lambda: tt.tsum(tt.maximum(a, 0.1)), [a]))
    simple("relu", lambda: (lambda: tt.tsum(tt.relu(a) * b), [a, b]))
    simple("sigmoid", lambda: (lambda: tt.tsum(tt.sigmoid(a)), [a]))
    simple("tanh", lambda: (lambda: tt.tsum(tt.tanh(a) * b), [a, b]))
    simple("sin", lambda: (lambda: tt.tsum(tt.sin(a)), [a]))
    simple("exp", lambda: (lambda: tt.tsum(tt.exp(a * 0.3)), [a]))
    simple("log", lambda: (lambda: tt.tsum(tt.log(pos)), [pos]))
    simple("softplus", lambda: (lambda: tt.tsum(tt.softplus(a)), [a]))
    simple("reshape", lambda: (lambda: tt.tsum(tt.reshape(a, (4, 3)) * 1.5), [a]))
    simple("transpose", lambda: (lambda: tt.tsum(tt.transpose(a, (1, 0)) * b.data.T), [a]))
    simple("expand_squeeze", lambda: (
        lambda: tt.tsum(tt.squeeze(tt.expand_dims(a, 1), 1) * b), [a]))
    simple("concat", lambda: (lambda: tt.tsum(tt.concat([a, b], axis=1)
                                              * tt.concat([b, a], axis=1)), [a, b]))
    simple("sum_axis", lambda: (lambda: tt.tsum(tt.tsum(a, axis=0) * c), [a, c]))
    simple("mean", lambda: (lambda: tt.tmean(a * a), [a]))
    simple("cumsum", lambda: (lambda: tt.tsum(tt.cumsum(a, axis=1) * b), [a, b]))

    w = _p(rng, "w", 4, 5)
    bias = _p(rng, "bias", 5)
    x = _p(rng, "x", 2, 3, 4)
    simple("linear", lambda: (lambda: tt.tsum(tt.linear(x, w, bias)
                                              * tt.linear(x, w, bias)), [x, w, bias]))
    m1 = _p(rng, "m1", 2, 3, 4)
    m2 = _p(rng, "m2", 2, 4, 5)
    simple("matmul", lambda: (lambda: tt.tsum(tt.matmul_batch(m1, m2)
                                              * tt.matmul_batch(m1, m2)), [m1, m2]))
    vec = _p(rng, "vec", 2, 4)
    simple("matmul_vector", lambda: (
        lambda: tt.tsum(tt.matmul_batch(m1, vec) * tt.matmul_batch(m1, vec)),
        [m1, vec]))

    table = _p(rng, "table", 5, 4)
    idx = np.array([[0, 2, 4], [1, 1, 3]])
    simple("embedding", lambda: (
        lambda: tt.tsum(tt.embedding(table, idx) * tt.embedding(table, idx)), [table]))

    logits = _p(rng, "logits", 3, 5)
    mask = np.ones((3, 5))
    mask[0, 2:] = 0.0
    mask[2] = 0.0  # fully masked row must stay inert
    coeff = rng.normal(size=(3, 5))
    simple("masked_softmax", lambda: (
        lambda: tt.tsum(tt.masked_softmax(logits, mask) * coeff), [logits]))
    gain = _p(rng, "gain", 4)
    ln_b = _p(rng, "ln_b", 4)
    simple("layer_norm", lambda: (
        lambda: tt.tsum(tt.layer_norm(x, gain, ln_b) * 0.7
                        * tt.layer_norm(x, gain, ln_b)), [x, gain, ln_b]))
    return checks


def _warp_check(rng, new_length):
    layer = WarpLayer(rng, dim=5, mode="adaptive", prefix="w")
    params = layer.parameters()
    for p in params:
        p.data = p.data + rng.normal(scale=0.05, size=p.data.shape)
    hidden = Parameter("h", rng.normal(size=(2, 5, 5)))
    mask = (rng.uniform(size=(2, 5)) > 0.3).astype(float)
    mask[:, 0] = 1.0
    times = np.sort(rng.uniform(0, 8, size=(2, 5)), axis=-1)

    def fn():
        warped, frac, anchors, _ = layer.forward(hidden, mask, times, new_length)
        return tt.tsum(warped * warped) + tt.tsum(frac) + tt.tsum(anchors * 0.1)

    return fn, params + [hidden]


def _attention_check(rng):
    block = AttentionBlock(rng, dim=4, heads=2, layers=2, head_width=3, prefix="t")
    params = block.parameters()
    for p in params:
        p.data = p.data + rng.normal(scale=0.05, size=p.data.shape)
    x = rng.normal(size=(2, 3, 4))
    mask = np.ones((2, 3))
    mask[0, 1] = 0.0

    def fn():
        out = block.encode_block(Tensor(x), mask)
        return tt.tsum(out * out)

    return fn, params


def _model_check(rng):
    config = ModelConfig(num_variates=3, num_classes=2, dim=8, heads=1,
                         attn_layers=1, scales=(1.0, 0.5), reference_length=6)
    model = MultiScaleModel(config, rng)
    params = model.parameters()
    for p in params:
        p.data = p.data + rng.normal(scale=0.05, size=p.data.shape)
    instances = []
    for i in range(2):
        mask = (rng.uniform(size=(3, 6)) > 0.35).astype(float)
        mask[0, 0] = 1.0
        values = rng.normal(size=(3, 6)) * mask
        types = (np.arange(3)[:, None] + 1) * mask.astype(int)
        times = np.sort(rng.uniform(0, 10, size=6))
        instances.append(GridInstance(f"g{i}", values, types, mask, times,
                                      np.array([i % 2])))
    b = make_batch(instances)

    def fn():
        out = model.forward_batch(b)
        return model.loss(out, b.labels)

    return fn, params


def run_gradient_suite(seed: int = 0, samples_per_param: int = 4,
                       include_model: bool = True) -> dict:
    """Name -> max relative gradient error, for every suite entry."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, build in _op_checks(rng).items():
        fn, params = build()
        results[name] = tt.grad_check(fn, params, rng=np.random.default_rng(seed + 1),
                                      samples_per_param=samples_per_param)
    for label, new_length in (("warp_layer_down", 3), ("warp_layer_up", 9)):
        fn, params = _warp_check(rng, new_length)
        results[label] = tt.grad_check(fn, params, rng=np.random.default_rng(seed + 2),
                                       samples_per_param=samples_per_param)
    fn, params = _attention_check(rng)
    results["attention_block"] = tt.grad_check(
        fn, params, rng=np.random.default_rng(seed + 3),
        samples_per_param=samples_per_param)
    if include_model:
        fn, params = _model_check(rng)
        results["end_to_end_model"] = tt.grad_check(
            fn, params, rng=np.random.default_rng(seed + 4),
            samples_per_param=max(2, samples_per_param // 2))
    return results
