import numpy as np
import pytest

import usgan


def small_config(skip=True):
    c = usgan.ModelConfig()
    c.image_size = 16
    c.num_classes = 3
    c.base_channels = 4
    c.discriminator_layers = 3
    c.use_ultimate_skip = skip
    return c


def test_reference_parameter_counts():
    c = usgan.ModelConfig()
    assert usgan.generator_parameter_count(c) == 2534595
    c.num_residual_blocks = 6
    assert 8.3e6 <= usgan.generator_parameter_count(c) <= 8.6e6


def test_identity_at_init_round_trips_numpy_layout():
    g = usgan.Generator(small_config(), seed=3)
    g.zero_output_layer()
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(2, 16, 16, 3)).astype(np.float32)
    out, residual = g.synthesize(x, [1, 2])
    assert out.shape == x.shape
    np.testing.assert_array_equal(out, x)
    assert not residual.any()


def test_synthesis_output_in_range_and_deterministic(tmp_path):
    g = usgan.Generator(small_config(), seed=5)
    x = np.zeros((16, 16, 3), np.float32)
    a, _ = g.synthesize(x, [0])
    assert a.shape == (16, 16, 3)
    assert a.min() >= -1 and a.max() <= 1
    path = tmp_path / "g.bin"
    g.save(path)
    b, _ = usgan.Generator.load(path).synthesize(x, [0])
    np.testing.assert_array_equal(a, b)


def test_bad_inputs_raise_typed_errors():
    g = usgan.Generator(small_config(), seed=0)
    with pytest.raises(usgan.DimensionError):
        g.synthesize(np.zeros((16, 16, 4), np.float32), [0])
    with pytest.raises(usgan.ValidationError):
        g.synthesize(np.zeros((16, 16, 3), np.float32), [7])
    with pytest.raises(usgan.IoError):
        usgan.Generator.load("/nonexistent/model.bin")
    with pytest.raises(usgan.ConfigError):
        c = small_config()
        c.num_classes = 1
        c.validate()


def test_metrics():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(16, 16, 3)).astype(np.float32)
    y = rng.uniform(-1, 1, size=(16, 16, 3)).astype(np.float32)
    assert usgan.acd(x, x) == 0
    assert usgan.acd(x, y) == usgan.acd(y, x) > 0
    assert usgan.identity_drift(x, x) == 0
    assert usgan.mock_similarity(x, x) == 100
    assert usgan.classification_loss([[0.0] * 7], [3]) == pytest.approx(np.log(7), abs=1e-12)


def test_toy_corpus_and_cli(tmp_path):
    n = usgan.make_toy_corpus(tmp_path / "corpus", identities=2, classes=3, size=32, seed=0)
    assert n == 6
    img = usgan.load_image(tmp_path / "corpus" / "identity_0" / "expr_1.png", 32)
    assert img.shape == (32, 32, 3) and img.dtype == np.float32
    code, out, _ = usgan.run_cli(["default-config"])
    assert code == 0 and "learning_rate" in out
    code, _, err = usgan.run_cli(["train"])
    assert code == 2 and err
