import numpy as np
import pytest

from flowprox.datasets import (CircleSpec, GaussianSpec, LineManifoldSpec, MnistSpec,
                               TwoMoonsSpec, load_mnist_idx, sample, write_mnist_idx)


def test_circle_support_exact():
    pts = sample(CircleSpec(1.0), 500, seed=3).points
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() <= 1e-12


def test_circle_radius_flag():
    pts = sample(CircleSpec(2.5), 100, seed=3).points
    assert np.abs(np.linalg.norm(pts, axis=1) - 2.5).max() <= 1e-12


def test_line_manifold_support():
    pts = sample(LineManifoldSpec(c=1.0), 200, seed=0).points
    assert np.all(pts[:, 1] == 1.0)


def test_gaussian_mean_clt_bound():
    pts = sample(GaussianSpec(mean=np.zeros(2), cov_sqrt=np.eye(2)), 10_000, seed=7).points
    assert np.abs(pts.mean(axis=0)).max() < 0.05


def test_two_moons_noiseless_arcs():
    pts = sample(TwoMoonsSpec(noise=0.0), 400, seed=1).points
    d_upper = np.abs(np.linalg.norm(pts, axis=1) - 1.0)
    d_lower = np.abs(np.linalg.norm(pts - np.array([1.0, 0.5]), axis=1) - 1.0)
    assert np.minimum(d_upper, d_lower).max() <= 1e-12
    assert (d_upper < d_lower).any() and (d_lower < d_upper).any()


def test_determinism_and_seed_sensitivity():
    for spec in (CircleSpec(1.0), TwoMoonsSpec(), LineManifoldSpec(0.5),
                 GaussianSpec(mean=np.zeros(3), cov_sqrt=np.eye(3))):
        a = sample(spec, 64, seed=5).points
        b = sample(spec, 64, seed=5).points
        c = sample(spec, 64, seed=6).points
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


def test_sample_size_error():
    with pytest.raises(ValueError):
        sample(CircleSpec(1.0), 0, seed=0)


@pytest.fixture
def idx_files(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(12, 28, 28)).astype(np.uint8)
    labels = rng.integers(0, 10, size=12).astype(np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_mnist_idx(images, labels, ip, lp)
    return images, labels, ip, lp


def test_mnist_parse_and_normalize(idx_files):
    images, labels, ip, lp = idx_files
    cloud, got_labels = load_mnist_idx(ip, lp)
    assert cloud.points.shape == (12, 784)
    assert got_labels == [int(v) for v in labels]
    assert np.array_equal(cloud.points, images.reshape(12, -1) / 255.0)
    raw, _ = load_mnist_idx(ip, lp, normalize=False)
    assert raw.points.max() > 1.0


def test_mnist_roundtrip_bytes(idx_files, tmp_path):
    images, labels, ip, lp = idx_files
    raw, got_labels = load_mnist_idx(ip, lp, normalize=False)
    ip2, lp2 = tmp_path / "img2.idx", tmp_path / "lab2.idx"
    write_mnist_idx(raw.points.reshape(-1, 28, 28).astype(np.uint8),
                    got_labels, ip2, lp2)
    assert ip.read_bytes() == ip2.read_bytes()
    assert lp.read_bytes() == lp2.read_bytes()


def test_mnist_magic_checks(idx_files, tmp_path):
    _, _, ip, lp = idx_files
    bad = tmp_path / "bad.idx"
    data = bytearray(ip.read_bytes())
    data[3] = 0x01
    bad.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="magic"):
        load_mnist_idx(bad, lp)


def test_mnist_truncation_offset(idx_files, tmp_path):
    _, _, ip, lp = idx_files
    cut = tmp_path / "cut.idx"
    cut.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(ValueError, match="offset"):
        load_mnist_idx(cut, lp)


def test_mnist_count_mismatch(idx_files, tmp_path):
    images, labels, ip, lp = idx_files
    lp2 = tmp_path / "short.idx"
    write_mnist_idx(images, labels, tmp_path / "img3.idx", lp2)
    # rewrite the label file with a shorter payload
    write_mnist_idx(images[:8], labels[:8], tmp_path / "img4.idx", lp2)
    with pytest.raises(ValueError, match="mismatch"):
        load_mnist_idx(ip, lp2)


def test_mnist_sampling(idx_files):
    images, labels, ip, lp = idx_files
    spec = MnistSpec(str(ip), str(lp))
    pts = sample(spec, 6, seed=2)
    assert pts.points.shape == (6, 784)
