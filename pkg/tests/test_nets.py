"""Network engine: gradients vs finite differences, heads, Adam, checkpoints."""

import numpy as np
import pytest

from dilute_rl import nets


def flatten(params, order):
    return np.concatenate([params[name].ravel() for name, _ in order])


def unflatten(vec, order):
    params, pos = {}, 0
    for name, shape in order:
        n = int(np.prod(shape))
        params[name] = vec[pos:pos + n].reshape(shape).copy()
        pos += n
    return params


def finite_difference(f, params, order, h=1e-6):
    """Central finite differences of a scalar f(params) at params."""
    base = flatten(params, order)
    grad = np.zeros_like(base)
    for i in range(len(base)):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(unflatten(up, order)) - f(unflatten(down, order))) / (2 * h)
    return grad


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


# -- forward heads --------------------------------------------------------------

def test_dueling_combination_pinned_example():
    # v=2, adv=(1,-1,0) -> q = v + adv - mean(adv) = (3,1,2)
    spec = nets.NetworkSpec(2, 3, nets.HEAD_DUELING, hidden_dims=(4,),
                            dropout_rate=0.0)
    net = nets.Network(spec, rng=np.random.default_rng(0))
    # craft the head directly: zero trunk output makes heads equal the biases
    for name in ("w0", "wv", "wa"):
        net.params[name][:] = 0.0
    net.params["b0"][:] = 0.0
    net.params["bv"][:] = 2.0
    net.params["ba"][:] = [1.0, -1.0, 0.0]
    out = net.forward(np.zeros(2))
    assert out["q"] == pytest.approx([3.0, 1.0, 2.0], abs=1e-12)


def test_dueling_identity_mean_centred_advantages():
    spec = nets.NetworkSpec(5, 4, nets.HEAD_DUELING, dropout_rate=0.0)
    net = nets.Network(spec, rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    for _ in range(20):
        out = net.forward(rng.normal(size=5))
        assert np.mean(out["q"] - out["v"]) == pytest.approx(0.0, abs=1e-9)


def test_softmax_pinned_example_and_normalization():
    # logits (ln 2, 0) -> (2/3, 1/3)
    out = nets.softmax(np.array([np.log(2.0), 0.0]))
    assert out == pytest.approx([2 / 3, 1 / 3], abs=1e-12)
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(50, 7)) * 30
    probs = nets.softmax(logits)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12


def test_logit_gain_scales_logits_only():
    rng = np.random.default_rng(4)
    base = nets.NetworkSpec(3, 4, nets.HEAD_ACTOR_CRITIC, hidden_dims=(6,),
                            dropout_rate=0.0, logit_gain=1.0)
    gained = nets.NetworkSpec(3, 4, nets.HEAD_ACTOR_CRITIC, hidden_dims=(6,),
                              dropout_rate=0.0, logit_gain=5.0)
    params = nets.init_params(base, rng)
    x = rng.normal(size=3)
    out1 = nets.Network(base, params=nets.copy_params(params)).forward(x)
    out5 = nets.Network(gained, params=nets.copy_params(params)).forward(x)
    assert out5["logits"] == pytest.approx(5.0 * out1["logits"])
    assert out5["q"] == pytest.approx(out1["q"])


# -- gradients vs finite differences ---------------------------------------------

@pytest.mark.parametrize("head", [nets.HEAD_DUELING, nets.HEAD_ACTOR_CRITIC])
def test_backward_matches_finite_differences(head):
    rng = np.random.default_rng(10)
    spec = nets.NetworkSpec(4, 3, head, hidden_dims=(8, 5), dropout_rate=0.0,
                            logit_gain=3.0 if head == nets.HEAD_ACTOR_CRITIC else 1.0)
    order = spec.param_shapes()
    x = rng.normal(size=(6, 4))
    if head == nets.HEAD_DUELING:
        cot_key, out_key = "q", "q"
    else:
        cot_key, out_key = "logits", "logits"
    cot = rng.normal(size=(6, 3))

    def scalar(params):
        return float(np.sum(
            nets.Network(spec, params=params).forward(x)[out_key] * cot))

    params = nets.init_params(spec, rng)
    net = nets.Network(spec, params=params)
    net.forward(x)
    grads = net.backward({cot_key: cot})
    fd = finite_difference(scalar, params, order)
    assert rel_err(flatten(grads, order), fd) < 1e-7


def test_backward_dropout_masks_are_reused():
    rng = np.random.default_rng(11)
    spec = nets.NetworkSpec(4, 3, nets.HEAD_DUELING, hidden_dims=(16,),
                            dropout_rate=0.5)
    net = nets.Network(spec, rng=rng)
    x = rng.normal(size=(3, 4))
    out = net.forward(x, train=True, rng=rng)
    mask = net._cache["masks"][0]
    grads = net.backward({"q": np.ones_like(out["q"])})
    # gradients through dropped units are exactly zero
    dropped = np.all(mask == 0.0, axis=0)
    assert np.any(dropped)
    assert np.all(grads["w0"][:, dropped] == 0.0)


def test_train_mode_dropout_requires_rng_and_backward_requires_forward():
    spec = nets.NetworkSpec(2, 2, nets.HEAD_DUELING)
    net = nets.Network(spec, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.zeros(2), train=True)
    fresh = nets.Network(spec, rng=np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        fresh.backward({"q": np.zeros((1, 2))})


# -- Adam -------------------------------------------------------------------------

def test_adam_steps_against_constant_gradient_sign():
    spec = nets.NetworkSpec(2, 2, nets.HEAD_DUELING, hidden_dims=(3,),
                            dropout_rate=0.0)
    net = nets.Network(spec, rng=np.random.default_rng(0))
    state = nets.adam_init(net.params, learning_rate=0.01)
    before = net.params["w0"].copy()
    grads = {k: np.ones_like(v) for k, v in net.params.items()}
    for _ in range(5):
        nets.adam_step(net.params, state, grads)
    # positive gradients must decrease every parameter
    assert np.all(net.params["w0"] < before)
    assert state.step_count == 5


def test_adam_rejects_non_finite_gradients_without_touching_state():
    spec = nets.NetworkSpec(2, 2, nets.HEAD_DUELING, hidden_dims=(3,),
                            dropout_rate=0.0)
    net = nets.Network(spec, rng=np.random.default_rng(0))
    state = nets.adam_init(net.params)
    before = nets.copy_params(net.params)
    grads = {k: np.ones_like(v) for k, v in net.params.items()}
    grads["w0"][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        nets.adam_step(net.params, state, grads)
    assert state.step_count == 0
    for k in before:
        assert np.array_equal(net.params[k], before[k])


def test_soft_update_pinned_example():
    # target 2, online 4, rate 0.5 -> 3
    target = {"w": np.full((2, 2), 2.0)}
    online = {"w": np.full((2, 2), 4.0)}
    nets.soft_update_params(target, online, 0.5)
    assert np.all(target["w"] == 3.0)


def test_soft_update_validation():
    with pytest.raises(ValueError):
        nets.soft_update_params({"a": np.zeros(2)}, {"b": np.zeros(2)}, 0.5)
    with pytest.raises(ValueError):
        nets.soft_update_params({"a": np.zeros(2)}, {"a": np.zeros(2)}, 1.5)


# -- checkpoints --------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(12)
    spec = nets.NetworkSpec(7, 5, nets.HEAD_ACTOR_CRITIC, hidden_dims=(9, 4),
                            dropout_rate=0.1, logit_gain=8.0)
    params = nets.init_params(spec, rng)
    path = tmp_path / "net.ckpt"
    nets.save_checkpoint(path, spec, params, extra={"note": 1})
    spec2, params2, extra = nets.load_checkpoint(path)
    assert spec2 == spec
    assert extra == {"note": 1}
    for name in params:
        assert np.array_equal(params[name], params2[name])


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b'{"format": "something-else"}\n')
    with pytest.raises(ValueError):
        nets.load_checkpoint(path)


def test_spec_validation():
    with pytest.raises(ValueError):
        nets.NetworkSpec(3, 2, "mystery_head")
    with pytest.raises(ValueError):
        nets.NetworkSpec(0, 2, nets.HEAD_DUELING)
    with pytest.raises(ValueError):
        nets.NetworkSpec(3, 2, nets.HEAD_DUELING, dropout_rate=1.0)
    with pytest.raises(ValueError):
        nets.NetworkSpec(3, 2, nets.HEAD_ACTOR_CRITIC, logit_gain=0.0)
