import json

import numpy as np
import pytest

from lctlab.errors import ConfigError, ShapeError
from lctlab.film_net import Architecture, FilmMlp, predict
from lctlab.ndmath import Rng


def small_net(seed=0, film_hidden=5, lambda_dim=2):
    arch = Architecture(input_dim=3, lambda_dim=lambda_dim, hidden=(4,), channels=3, film_hidden=film_hidden)
    net = FilmMlp.init(arch, Rng(seed))
    # move the generator off its identity start so FiLM has real gradients
    gen = np.random.default_rng(seed)
    sl = net.film_slice()
    net.theta[sl] += gen.normal(scale=0.5, size=sl.stop - sl.start)
    return net


class TestArchitecture:
    def test_parameter_count(self):
        arch = Architecture(input_dim=10, lambda_dim=2)
        trunk = (10 * 32 + 32) + (32 * 32 + 32) + (32 * 16 + 16)
        film = 2 * 128 + 128 + 128 * 32 + 32
        head = 16 * 2 + 2
        assert arch.n_params() == trunk + film + head
        assert FilmMlp(arch).theta.size == arch.n_params()

    def test_rejects_zero_width(self):
        with pytest.raises(ConfigError):
            Architecture(input_dim=0, lambda_dim=1)


class TestForward:
    def test_identity_film_at_init(self):
        arch = Architecture(input_dim=4, lambda_dim=2, hidden=(8,), channels=5, film_hidden=6)
        net = FilmMlp.init(arch, Rng(1))
        x = np.random.default_rng(0).normal(size=(7, 4))
        sigma, mu = net.modulation([0.3, 2.0])
        np.testing.assert_array_equal(sigma, 1.0)
        np.testing.assert_array_equal(mu, 0.0)
        np.testing.assert_array_equal(net.logits(x, [0.3, 2.0]), net.logits(x, film_enabled=False))

    def test_hand_computed_network(self):
        # 2 inputs -> 4 hidden -> 2 channels, FiLM with scalar lambda
        arch = Architecture(input_dim=2, lambda_dim=1, hidden=(4,), channels=2, film_hidden=1)
        net = FilmMlp(arch)
        p = net.params
        p["trunk.0.w"][...] = [[1, -1, 0, 2], [0, 1, 1, -1]]
        p["trunk.0.b"][...] = [0, 0, -1, 0]
        p["trunk.1.w"][...] = [[1, 0], [0, 1], [1, 1], [-1, 1]]
        p["trunk.1.b"][...] = [0, 0.5]
        p["film.0.w"][...] = [[1.0]]
        p["film.0.b"][...] = [0.0]
        p["film.1.w"][...] = [[1, 2, 0, -1]]
        p["film.1.b"][...] = [1, 0, 0.5, 0]
        p["head.w"][...] = [[1, 0], [0, 1]]
        p["head.b"][...] = [0, 0.25]
        x = np.array([[1.0, 2.0]])
        # hidden: relu([1, 1, 1, 0]) = [1,1,1,0]; channels: relu([2, 2.5]) = [2, 2.5]
        # lambda = 2: g = 2, sigma = [3, 4], mu = [0.5, -2]
        # modulated = [6.5, 8.0]; z = [6.5, 8.25]
        np.testing.assert_allclose(net.logits(x, [2.0]), [[6.5, 8.25]], rtol=0, atol=1e-15)
        np.testing.assert_allclose(net.logits(x, film_enabled=False), [[2.0, 2.75]], rtol=0, atol=1e-15)

    def test_batch_matches_rows(self):
        net = small_net()
        x = np.random.default_rng(3).normal(size=(6, 3))
        lam = np.array([0.2, 1.0])
        full = net.logits(x, lam)
        for i in range(6):
            np.testing.assert_allclose(net.logits(x[i:i + 1], lam), full[i:i + 1], rtol=0, atol=1e-13)

    def test_per_row_lambda(self):
        net = small_net()
        x = np.random.default_rng(3).normal(size=(4, 3))
        lams = np.random.default_rng(4).uniform(size=(4, 2))
        z = net.logits(x, lams)
        for i in range(4):
            np.testing.assert_allclose(z[i], net.logits(x[i:i + 1], lams[i])[0], atol=1e-13)

    def test_shape_errors(self):
        net = small_net()
        with pytest.raises(ShapeError):
            net.logits(np.zeros((2, 4)), [0, 0])
        with pytest.raises(ShapeError):
            net.logits(np.zeros((2, 3)), [0, 0, 0])
        with pytest.raises(ShapeError):
            net.logits(np.zeros((2, 3)))


def objective(net, x, lam, film, w):
    return float(np.sum(w * net.logits(x, lam, film)))


class TestBackward:
    @pytest.mark.parametrize("film,per_row", [(True, False), (True, True), (False, False)])
    def test_matches_finite_differences(self, film, per_row):
        net = small_net(seed=2)
        gen = np.random.default_rng(5)
        x = gen.normal(size=(5, 3))
        lam = gen.uniform(size=(5, 2)) if per_row else gen.uniform(size=2)
        w = gen.normal(size=(5, 2))
        _, tape = net.forward(x, lam, film)
        grad = net.backward(tape, w)
        base = net.theta.copy()
        h = 1e-6
        numeric = np.zeros_like(base)
        for i in range(base.size):
            tp, tm = base.copy(), base.copy()
            tp[i] += h
            tm[i] -= h
            net.set_theta(tp)
            fp = objective(net, x, lam, film, w)
            net.set_theta(tm)
            fm = objective(net, x, lam, film, w)
            numeric[i] = (fp - fm) / (2 * h)
        net.set_theta(base)
        np.testing.assert_allclose(grad, numeric, rtol=1e-4, atol=1e-7)

    def test_film_disabled_gives_zero_generator_gradient(self):
        net = small_net()
        x = np.random.default_rng(0).normal(size=(4, 3))
        _, tape = net.forward(x, film_enabled=False)
        grad = net.backward(tape, np.ones((4, 2)))
        assert np.all(grad[net.film_slice()] == 0)
        assert np.any(grad != 0)

    def test_stale_tape(self):
        net = small_net()
        x = np.zeros((1, 3))
        _, tape = net.forward(x, [0, 0])
        net.set_theta(net.theta)
        with pytest.raises(RuntimeError):
            net.backward(tape, np.ones((1, 2)))
        _, tape = net.forward(x, [0, 0])
        net.backward(tape, np.ones((1, 2)))
        with pytest.raises(RuntimeError):
            net.backward(tape, np.ones((1, 2)))


class TestPredictAndCheckpoint:
    def test_predict_rule(self):
        assert predict((0.2, 0.1), t=0) == 0
        assert predict((0.1, 0.2), t=0) == 1
        assert predict((0.0, 0.0)) == 0
        assert predict((0.0, 1.0), t=1.0) == 0
        np.testing.assert_array_equal(predict(np.array([[0, 1], [1, 0]]), t=-2), [1, 1])

    def test_checkpoint_round_trip(self, tmp_path):
        net = small_net(seed=9)
        path = tmp_path / "net.json"
        path.write_text(json.dumps(net.to_dict()))
        back = FilmMlp.from_dict(json.loads(path.read_text()))
        assert np.array_equal(back.theta, net.theta)
        x = np.random.default_rng(1).normal(size=(3, 3))
        assert np.array_equal(back.logits(x, [0.5, 0.5]), net.logits(x, [0.5, 0.5]))

    def test_checkpoint_format_checked(self):
        data = small_net().to_dict()
        data["version"] = 99
        with pytest.raises(ConfigError):
            FilmMlp.from_dict(data)
