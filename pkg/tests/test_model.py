import numpy as np
import pytest

from bss_attack.errors import ArgumentError, FormatError, ShapeError
from bss_attack.model import (
    ArchConfig, LinearSoftmax, TinyConvNet, load_checkpoint, save_checkpoint, softmax_cross_entropy, train,
)

ARCHS = [
    ArchConfig(in_channels=3, height=32, width=32, c1=8, c2=16, num_classes=10),
    ArchConfig(in_channels=3, height=32, width=32, c1=12, c2=24, num_classes=10),
    ArchConfig(in_channels=1, height=8, width=12, c1=3, c2=4, num_classes=5),
]


def relative_error(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-8)


def fd_check(model, img, label, coords, h=1e-4):
    """Central finite differences of the loss at the given flat coordinates."""
    _, grad = model.loss_and_input_grad(img, label)
    flat = img.reshape(-1)
    errors = []
    for c in coords:
        plus, minus = flat.copy(), flat.copy()
        plus[c] += h
        minus[c] -= h
        lp, _ = model.loss_and_input_grad(plus.reshape(img.shape), label)
        lm, _ = model.loss_and_input_grad(minus.reshape(img.shape), label)
        errors.append(relative_error((lp - lm) / (2 * h), grad.reshape(-1)[c]))
    return np.array(errors)


@pytest.mark.parametrize("arch", ARCHS, ids=lambda a: f"{a.c1}-{a.c2}-{a.height}x{a.width}")
def test_input_gradient_matches_finite_differences(arch):
    rng = np.random.default_rng(0)
    model = TinyConvNet(arch, seed=1).astype(np.float64)
    img = rng.random((arch.in_channels, arch.height, arch.width))
    coords = rng.choice(img.size, size=min(100, img.size), replace=False)
    errors = fd_check(model, img, 3 % arch.num_classes, coords)
    assert errors.max() < 1e-4


def test_param_gradient_matches_finite_differences():
    arch = ARCHS[2]
    rng = np.random.default_rng(1)
    model = TinyConvNet(arch, seed=2).astype(np.float64)
    x = rng.random((4, *model.input_shape))
    y = np.array([0, 1, 2, 3])
    _, g, _ = model.loss_and_param_grad(x, y)
    base = model.params.copy()
    for c in rng.choice(base.size, size=40, replace=False):
        vals = []
        for s in (1, -1):
            model.params = base.copy()
            model.params[c] += s * 1e-5
            vals.append(model.loss_and_param_grad(x, y)[0])
        assert relative_error((vals[0] - vals[1]) / 2e-5, g[c]) < 1e-4
    model.params = base


def test_zero_network_gives_zero_logits():
    arch = ARCHS[0]
    model = TinyConvNet(arch, params=np.zeros(arch.num_params))
    logits = model.forward(np.zeros(model.input_shape))
    assert logits.shape == (10,)
    assert np.all(logits == 0)


def test_uniform_logits_loss_is_log_c():
    arch = ARCHS[0]
    model = TinyConvNet(arch, params=np.zeros(arch.num_params))
    loss, grad = model.loss_and_input_grad(np.random.default_rng(0).random(model.input_shape), 4)
    assert loss == pytest.approx(np.log(10), abs=1e-6)
    assert grad.shape == model.input_shape


def test_shift_invariance_of_cross_entropy():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 7))
    y = rng.integers(0, 7, size=5)
    l1, g1 = softmax_cross_entropy(logits, y)
    l2, g2 = softmax_cross_entropy(logits + 13.5, y)
    assert abs(l1 - l2) < 1e-6
    np.testing.assert_allclose(g1, g2, atol=1e-6)


def test_duplicated_batch_mean_reduction():
    model = TinyConvNet(ARCHS[2], seed=3)
    img = np.random.default_rng(2).random(model.input_shape).astype(np.float32)
    _, single = model.loss_and_input_grad(img, 1)
    _, grads = model.loss_and_input_grad_batch(np.stack([img] * 4), [1] * 4)
    np.testing.assert_allclose(grads.sum(axis=0), single, rtol=1e-5, atol=1e-8)


def test_shape_and_label_errors():
    model = TinyConvNet(ARCHS[2])
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 8, 8)))
    with pytest.raises(ArgumentError):
        model.loss_and_input_grad(np.zeros(model.input_shape), 5)
    with pytest.raises(ArgumentError):
        ArchConfig(height=30)


def test_evaluation_counter():
    model = TinyConvNet(ARCHS[2])
    model.loss_and_input_grad_batch(np.zeros((6, *model.input_shape)), [0] * 6)
    model.forward(np.zeros(model.input_shape))
    assert model.evaluations == 7


def test_linear_softmax_gradient_closed_form():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 12))
    model = LinearSoftmax(W, input_shape=(1, 3, 4), dtype=np.float64)
    x = rng.random((1, 3, 4))
    _, g = model.loss_and_input_grad(x, 2)
    z = W @ x.ravel()
    p = np.exp(z - z.max())
    p /= p.sum()
    p[2] -= 1
    np.testing.assert_allclose(g.ravel(), W.T @ p, atol=1e-12)


def _toy_data(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, 1, 8, 12)).astype(np.float32), rng.integers(0, 5, size=n)


def test_zero_learning_rate_keeps_parameters():
    x, y = _toy_data()
    model = TinyConvNet(ARCHS[2], seed=4)
    before = model.params.copy()
    train(model, x, y, epochs=1, lr=0.0, rng=0)
    np.testing.assert_array_equal(model.params, before)


def test_training_determinism_and_seed_dependence():
    x, y = _toy_data(40)
    runs = []
    for seed in (5, 5, 6):
        m = TinyConvNet(ARCHS[2], seed=seed)
        train(m, x, y, epochs=2, lr=0.05, rng=seed, augment=True)
        runs.append(m)
    np.testing.assert_array_equal(runs[0].params, runs[1].params)
    assert runs[0].checksum() != runs[2].checksum()


def test_training_reduces_loss():
    x, y = _toy_data(64, seed=1)
    m = TinyConvNet(ARCHS[2], seed=0)
    report = train(m, x, y, epochs=30, lr=0.05, rng=0, batch_size=16)
    assert report.losses[-1] < report.losses[0]


def test_empty_training_data():
    with pytest.raises(ArgumentError):
        train(TinyConvNet(ARCHS[2]), np.zeros((0, 1, 8, 12)), np.zeros(0), 1, 0.1, 0)


def test_checkpoint_round_trip(tmp_path):
    m = TinyConvNet(ARCHS[1], seed=9)
    path = save_checkpoint(m, tmp_path / "m.bin")
    back = load_checkpoint(path)
    assert back.arch == m.arch
    np.testing.assert_array_equal(back.params, m.params)
    blob = path.read_bytes()
    assert blob[:4] == b"TCNV"
    assert len(blob) == 4 + 4 + 6 * 4 + 4 + 4 * m.arch.num_params


def test_checkpoint_errors(tmp_path):
    m = TinyConvNet(ARCHS[2], seed=9)
    path = save_checkpoint(m, tmp_path / "m.bin")
    blob = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + blob[4:])
    (tmp_path / "short.bin").write_bytes(blob[:-3])
    for name in ("magic.bin", "short.bin"):
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / name)


def test_train_schedule_and_custom_augment():
    from bss_attack.model import train

    arch = ArchConfig(height=8, width=8, c1=2, c2=2, num_classes=3)
    rng = np.random.default_rng(0)
    x = rng.random((20, 3, 8, 8), dtype=np.float32)
    y = rng.integers(3, size=20)
    calls = []

    def augment(batch, gen):
        calls.append(len(batch))
        return batch[:, :, ::-1]

    model = TinyConvNet(arch, seed=1)
    train(model, x, y, epochs=2, lr=0.05, rng=0, batch_size=8, augment=augment, schedule="cosine")
    assert calls == [8, 8, 4] * 2
    frozen = TinyConvNet(arch, seed=1)
    before = frozen.params.copy()
    train(frozen, x, y, epochs=1, lr=0.0, rng=0, schedule="cosine")
    assert np.array_equal(frozen.params, before)
    with pytest.raises(ArgumentError):
        train(frozen, x, y, epochs=1, lr=0.1, rng=0, schedule="step")
