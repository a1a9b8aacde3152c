import struct

import numpy as np
import pytest

from cpc.store import (
    FORMAT_VERSION,
    MAGIC,
    FeatureMatrix,
    FormatError,
    SampleMeta,
    l2_normalize,
    load_embeddings,
    pairwise_distances,
    save_embeddings,
)

from oracles import naive_pairwise


def random_meta(rng, n):
    identity = rng.integers(0, 5, n)
    return SampleMeta(
        identity=identity,
        clothes=identity * 10 + rng.integers(0, 3, n),
        camera=rng.integers(0, 4, n),
        timestamp=np.arange(n),
    )


class TestBinaryFormat:
    def test_handcrafted_file_loads(self, tmp_path):
        # bytes assembled independently of save_embeddings
        rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        blob = struct.pack("<4sIQQB", MAGIC, FORMAT_VERSION, 2, 3, 0)
        for row in rows:
            blob += struct.pack("<3d", *row)
        path = tmp_path / "hand.cpce"
        path.write_bytes(blob)
        matrix, meta = load_embeddings(path)
        assert meta is None
        np.testing.assert_array_equal(matrix.data, np.asarray(rows))

    def test_save_load_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        for trial in range(10):
            n, d = int(rng.integers(1, 40)), int(rng.integers(1, 12))
            data = rng.standard_normal((n, d))
            meta = random_meta(rng, n) if trial % 2 else None
            path = tmp_path / f"m{trial}.cpce"
            save_embeddings(path, FeatureMatrix(data), meta)
            loaded, loaded_meta = load_embeddings(path)
            assert np.array_equal(loaded.data, data)
            if meta is None:
                assert loaded_meta is None
            else:
                for field in ("identity", "clothes", "camera", "timestamp"):
                    assert np.array_equal(getattr(loaded_meta, field), getattr(meta, field))

    def test_empty_dataset_code(self, tmp_path):
        path = tmp_path / "empty.cpce"
        path.write_bytes(struct.pack("<4sIQQB", MAGIC, FORMAT_VERSION, 0, 3, 0))
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "empty_dataset"

    def test_bad_magic_code(self, tmp_path):
        path = tmp_path / "bad.cpce"
        path.write_bytes(struct.pack("<4sIQQB", b"NOPE", FORMAT_VERSION, 1, 1, 0) + b"\x00" * 8)
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "bad_magic"

    def test_bad_version_code(self, tmp_path):
        path = tmp_path / "v9.cpce"
        path.write_bytes(struct.pack("<4sIQQB", MAGIC, 9, 1, 1, 0) + b"\x00" * 8)
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "bad_version"

    def test_truncated_payload_code(self, tmp_path):
        path = tmp_path / "trunc.cpce"
        save_embeddings(path, FeatureMatrix(np.ones((4, 4))))
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "truncated"

    def test_non_finite_payload_code(self, tmp_path):
        path = tmp_path / "nan.cpce"
        blob = struct.pack("<4sIQQB", MAGIC, FORMAT_VERSION, 1, 2, 0)
        blob += struct.pack("<2d", 1.0, float("nan"))
        path.write_bytes(blob)
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "non_finite"


class TestCsvImport:
    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        n, d = 12, 4
        data = rng.standard_normal((n, d))
        meta = random_meta(rng, n)
        lines = ["id,clothes,camera,timestamp," + ",".join(f"f{j}" for j in range(d))]
        for i in range(n):
            fields = [meta.identity[i], meta.clothes[i], meta.camera[i], meta.timestamp[i]]
            lines.append(",".join(map(str, fields)) + "," + ",".join(repr(float(v)) for v in data[i]))
        path = tmp_path / "input.csv"
        path.write_text("\n".join(lines) + "\n")
        loaded, loaded_meta = load_embeddings(path)
        assert np.array_equal(loaded.data, data)
        assert np.array_equal(loaded_meta.identity, meta.identity)
        assert np.array_equal(loaded_meta.timestamp, meta.timestamp)

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,clothes,camera,f0\n1,2,3,4.0\n")
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.code == "bad_csv"


class TestTypes:
    def test_feature_matrix_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            FeatureMatrix(np.array([[1.0, float("inf")]]))

    def test_feature_matrix_rejects_empty(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.empty((0, 3)))

    def test_meta_rejects_shared_clothes_id(self):
        with pytest.raises(ValueError, match="clothes id"):
            SampleMeta(
                identity=np.array([0, 1]),
                clothes=np.array([5, 5]),
                camera=np.array([0, 0]),
                timestamp=np.array([0, 1]),
            )

    def test_meta_rejects_negative(self):
        with pytest.raises(ValueError):
            SampleMeta(
                identity=np.array([-1]),
                clothes=np.array([0]),
                camera=np.array([0]),
                timestamp=np.array([0]),
            )


class TestNormalize:
    def test_three_four_five(self):
        out = l2_normalize(FeatureMatrix(np.array([[3.0, 4.0]])))
        np.testing.assert_allclose(out.data, [[0.6, 0.8]], atol=1e-15)

    def test_unit_row_unchanged(self):
        out = l2_normalize(FeatureMatrix(np.array([[1.0, 0.0, 0.0]])))
        np.testing.assert_array_equal(out.data, [[1.0, 0.0, 0.0]])

    def test_random_rows_unit_norm_and_direction(self):
        rng = np.random.default_rng(11)
        data = rng.standard_normal((50, 8)) * rng.uniform(0.1, 40, (50, 1))
        out = l2_normalize(FeatureMatrix(data))
        norms = np.linalg.norm(out.data, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)
        cos = np.einsum("ij,ij->i", out.data, data) / np.linalg.norm(data, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        once = l2_normalize(FeatureMatrix(rng.standard_normal((20, 5))))
        twice = l2_normalize(once)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-6)

    def test_zero_row_names_index(self):
        data = np.ones((4, 3))
        data[2] = 0.0
        with pytest.raises(ValueError, match="index 2"):
            l2_normalize(FeatureMatrix(data))


class TestPairwiseDistances:
    def test_three_four_five(self):
        d = pairwise_distances(FeatureMatrix(np.array([[0.0, 0.0], [3.0, 4.0]])))
        assert d[0, 1] == pytest.approx(5.0, abs=1e-12)

    def test_identical_rows_exactly_zero(self):
        data = np.vstack([np.full(6, 0.123), np.full(6, 0.123), np.ones(6)])
        d = pairwise_distances(FeatureMatrix(data))
        assert d[0, 1] == 0.0 and d[1, 0] == 0.0

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            x = rng.random((10, 4))
            d = pairwise_distances(FeatureMatrix(x))
            np.testing.assert_allclose(d, naive_pairwise(x), atol=1e-9)

    def test_invariants_and_triangle(self):
        rng = np.random.default_rng(22)
        x = rng.standard_normal((30, 6))
        d = pairwise_distances(FeatureMatrix(x))
        assert np.array_equal(d, d.T)
        assert np.all(np.diagonal(d) == 0.0)
        assert np.all(d >= 0)
        for _ in range(200):
            i, j, k = rng.integers(0, 30, 3)
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-9
