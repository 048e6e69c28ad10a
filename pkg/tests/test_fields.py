import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picsb.fields import (
    ExperimentConfig,
    Field,
    RngStream,
    default_config,
    field_read,
    field_write,
    rng_fork,
)


class TestFgrdFormat:
    def test_single_value_file_is_24_bytes(self, tmp_path):
        path = tmp_path / "one1d.fgrd"
        field_write(Field(np.zeros(1), ("space",)), path)
        assert path.stat().st_size == 24  # 8 magic + 4 rank + 4 dims + 8 payload
        path2 = tmp_path / "one2d.fgrd"
        field_write(Field(np.zeros((1, 1)), ("row", "col")), path2)
        assert path2.stat().st_size == 28  # extra 4-byte dim entry

    def test_header_layout(self, tmp_path):
        path = tmp_path / "f.fgrd"
        field_write(Field(np.array([1.0, 2.0, 3.0]), ("space",)), path)
        raw = path.read_bytes()
        assert raw[:8] == b"FGRD0001"
        assert int.from_bytes(raw[8:12], "little") == 1
        assert int.from_bytes(raw[12:16], "little") == 3

    def test_roundtrip_random_field(self, tmp_path):
        rng = RngStream(0)
        f = Field(rng.standard_normal((5, 7, 3)), ("frame", "row", "col"))
        path = tmp_path / "r.fgrd"
        field_write(f, path)
        g = field_read(path, f.axis_tags)
        assert g == f

    @settings(max_examples=25, deadline=None)
    @given(
        dims=st.lists(st.integers(1, 6), min_size=1, max_size=3),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_roundtrip_property(self, tmp_path_factory, dims, seed):
        f = Field(RngStream(seed).standard_normal(tuple(dims)))
        path = tmp_path_factory.mktemp("h") / "p.fgrd"
        field_write(f, path)
        assert field_read(path) == f

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.fgrd"
        path.write_bytes(b"XXXXXXXX" + b"\0" * 16)
        with pytest.raises(ValueError, match="not an FGRD file"):
            field_read(path)

    def test_size_mismatch_rejected(self, tmp_path):
        path = tmp_path / "t.fgrd"
        field_write(Field(np.zeros((2, 2)), ("row", "col")), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])  # drop one value: declared 2x2 but 3 present
        with pytest.raises(ValueError, match="size mismatch"):
            field_read(path)

    def test_rank_zero_rejected(self):
        with pytest.raises(ValueError, match="empty dims"):
            Field(np.float64(1.0))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            Field(np.array([1.0, np.nan]))


class TestRngStream:
    def test_fork_same_label_identical(self):
        s = RngStream(42)
        a = rng_fork(s, "a").standard_normal(100)
        b = rng_fork(s, "a").standard_normal(100)
        assert np.array_equal(a, b)

    def test_fork_distinct_labels_differ(self):
        s = RngStream(42)
        a = s.fork("a").standard_normal(1000)
        b = s.fork("b").standard_normal(1000)
        assert not np.array_equal(a, b)

    def test_same_key_identical_sequence(self):
        a = RngStream(7, 9).standard_normal(50)
        b = RngStream(7, 9).standard_normal(50)
        assert np.array_equal(a, b)

    def test_normal_mean_clt_bound(self):
        draws = RngStream(3).fork("clt").standard_normal(100_000)
        assert abs(draws.mean()) < 0.02

    def test_fork_does_not_consume_parent(self):
        s = RngStream(5)
        s.fork("x")
        a = s.standard_normal(10)
        s2 = RngStream(5)
        b = s2.standard_normal(10)
        assert np.array_equal(a, b)


class TestExperimentConfig:
    def test_json_roundtrip_lossless(self):
        cfg = default_config("burgers", seed=123)
        cfg2 = ExperimentConfig.from_json(cfg.to_json())
        assert cfg2 == cfg

    def test_exact_key_names(self):
        doc = json.loads(default_config("darcy").to_json())
        assert set(doc) == {
            "benchmark", "grid", "frames", "regime", "ratio", "solver",
            "trainer", "seed",
        }

    @pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
    def test_ratio_validated(self, ratio):
        with pytest.raises(ValueError, match="ratio"):
            ExperimentConfig(
                benchmark="burgers", grid=[8], frames=8, regime="R1",
                ratio=ratio, solver={}, trainer={}, seed=0,
            )

    def test_unknown_benchmark_rejected(self):
        with pytest.raises(ValueError, match="benchmark"):
            ExperimentConfig(
                benchmark="stokes", grid=[8], frames=8, regime="R1",
                ratio=0.1, solver={}, trainer={}, seed=0,
            )

    def test_save_load(self, tmp_path):
        cfg = default_config("kolmogorov", seed=9)
        cfg.save(tmp_path / "c.json")
        assert ExperimentConfig.load(tmp_path / "c.json") == cfg
