import numpy as np
import pytest

from fedchain import data
from fedchain.errors import PartitionUnderflowError
from fedchain.fed import kl_divergence


@pytest.fixture
def balanced():
    return data.make_blobs(1000, n_features=8, n_classes=10, seed=3)


class TestHistogram:
    def test_frequencies(self):
        hist = data.label_histogram(np.array([0, 0, 1, 2]), 4)
        assert hist.tolist() == [0.5, 0.25, 0.25, 0.0]

    def test_smoothing_positive_and_normalized(self):
        hist = data.smooth_histogram(np.array([1.0, 0.0]))
        assert np.all(hist > 0)
        assert hist.sum() == pytest.approx(1.0)


class TestBlobs:
    def test_shapes_and_balance(self, balanced):
        assert len(balanced) == 1000
        assert balanced.n_features == 8
        counts = np.bincount(balanced.y, minlength=10)
        assert np.all(counts == 100)

    def test_deterministic(self):
        a = data.make_blobs(100, seed=7)
        b = data.make_blobs(100, seed=7)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)


class TestCsvRoundtrip:
    def test_roundtrip(self, tmp_path, balanced):
        path = tmp_path / "fixture.csv"
        small = balanced.subset(np.arange(50))
        data.save_csv(small, str(path))
        loaded = data.load_csv(str(path))
        assert loaded.n_classes == 10
        assert np.array_equal(loaded.y, small.y)
        assert np.allclose(loaded.x, small.x, rtol=1e-8)


class TestPartitionNoniid:
    def test_iid_limit_matches_global(self, balanced):
        parts = data.partition_noniid(balanced, 4, alpha=0.0, seed=1)
        global_hist = balanced.histogram()
        for part in parts:
            # chi-squared distance to the global histogram stays small
            hist = part.histogram()
            chi2 = np.sum((hist - global_hist) ** 2 / (global_hist + 1e-12))
            assert chi2 < 0.05

    def test_skew_limit_near_single_label(self, balanced):
        parts = data.partition_noniid(balanced, 4, alpha=1.0, seed=1)
        for j, part in enumerate(parts):
            hist = part.histogram()
            assert hist[j % 10] > 0.95

    def test_mid_alpha_between_extremes(self, balanced):
        uniform = np.full(10, 0.1)

        def mean_kl(alpha):
            parts = data.partition_noniid(balanced, 4, alpha=alpha, seed=2)
            return np.mean(
                [
                    kl_divergence(data.smooth_histogram(p.histogram()), uniform)
                    for p in parts
                ]
            )

        low, mid, high = mean_kl(0.0), mean_kl(0.5), mean_kl(1.0)
        assert low < mid < high

    def test_parts_disjoint_within_base(self, balanced):
        parts = data.partition_noniid(balanced, 5, alpha=0.4, seed=9)
        rows = np.concatenate([p.x for p in parts])
        # samples drawn without replacement: no row reused across parts
        assert len(np.unique(rows, axis=0)) == len(rows)
        assert sum(len(p) for p in parts) <= len(balanced)
        assert all(len(p) >= 1 for p in parts)

    def test_iid_partition_covers_base(self, balanced):
        parts = data.partition_noniid(balanced, 4, alpha=0.0, seed=9)
        assert sum(len(p) for p in parts) == len(balanced)

    def test_deterministic(self, balanced):
        a = data.partition_noniid(balanced, 3, alpha=0.5, seed=11)
        b = data.partition_noniid(balanced, 3, alpha=0.5, seed=11)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.y, pb.y)

    def test_per_part_alpha_schedule(self, balanced):
        parts = data.partition_noniid(
            balanced, 3, alpha=0.8, seed=4, alphas=[0.0, 0.4, 0.8]
        )
        uniform = np.full(10, 0.1)
        kls = [
            kl_divergence(data.smooth_histogram(p.histogram()), uniform) for p in parts
        ]
        assert kls[0] < kls[1] < kls[2]

    def test_underflow(self):
        tiny = data.make_blobs(3, n_classes=3, seed=0)
        with pytest.raises(PartitionUnderflowError):
            data.partition_noniid(tiny, 4, alpha=0.0, seed=0)

    def test_bad_alpha(self, balanced):
        with pytest.raises(ValueError):
            data.partition_noniid(balanced, 2, alpha=1.5, seed=0)
