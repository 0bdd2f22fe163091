import json

import numpy as np
import pytest

from bmr import io as bio
from bmr.densities import DirichletDensity, GaussianDensity, SchemaError
from bmr.dynamics import TimeSeries


class TestNumbers:
    @pytest.mark.parametrize("x", [0.1, 1 / 3, np.pi * 1e-300, -2.5e17, np.nextafter(1.0, 2.0)])
    def test_round_trip(self, x):
        assert float(bio.format_number(x)) == x

    def test_types(self):
        assert bio.format_number(True) == "true"
        assert bio.format_number(np.int64(7)) == "7"
        assert bio.format_number("a") == "a"
        assert len(bio.format_number(1 / 3).replace(".", "").lstrip("0")) == 17


class TestProvenance:
    def test_fields(self):
        p = bio.provenance(5, {"a": 1})
        assert p["seed"] == 5
        assert set(p) == {"seed", "config_sha256", "version", "input_sha256"}

    def test_hash_is_order_free(self):
        assert bio.config_hash({"a": 1, "b": 2}) == bio.config_hash({"b": 2, "a": 1})
        assert bio.config_hash({"a": 1}) != bio.config_hash({"a": 2})

    def test_input_checksum(self, tmp_path):
        f = tmp_path / "x.json"
        f.write_text("{}")
        a = bio.provenance(1, {}, [f])["input_sha256"]
        f.write_text("{ }")
        assert bio.provenance(1, {}, [f])["input_sha256"] != a


class TestFiles:
    def test_json_density_round_trip(self, tmp_path):
        d = GaussianDensity([0.25, -1.0], cov=[[2.0, 0.3], [0.3, 1.0]])
        path = bio.write_json(tmp_path / "d.json", d.to_dict(), bio.provenance(1, {}))
        back = bio.read_density(path)
        assert np.array_equal(back.mean, d.mean) and np.array_equal(back.cov, d.cov)
        assert bio.read_json(path)["provenance"]["seed"] == 1

    def test_non_finite_json(self, tmp_path):
        path = bio.write_json(tmp_path / "x.json", {"a": np.inf, "b": np.nan, "c": np.arange(2)})
        assert json.loads(path.read_text()) == {"a": "inf", "b": None, "c": [0, 1]}

    def test_malformed_density_names_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"family": "dirichlet", "concentrations": [1.0, -2.0]}))
        with pytest.raises(SchemaError) as err:
            bio.read_density(path)
        assert err.value.field == "concentrations"

    def test_table_round_trip(self, tmp_path):
        rows = [[1, 0.1, "x"], [2, 1 / 3, "y,z"]]
        path = bio.write_table(tmp_path / "t.csv", ["i", "v", "s"], rows, {"seed": 3})
        text = path.read_text()
        assert text.startswith("# seed: 3\n")
        header, got = bio.read_table(path)
        assert header == ["i", "v", "s"]
        assert got[1] == ["2", "0.33333333333333331", "y,z"]
        assert float(got[1][1]) == 1 / 3

    def test_read_matrix(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("# note\na,b\n1,2\n3,4.5\n")
        assert bio.read_matrix(path).tolist() == [[1.0, 2.0], [3.0, 4.5]]
        path.write_text("1,2\n3,x\n")
        with pytest.raises(ValueError):
            bio.read_matrix(path)
        path.write_text("# only a comment\n")
        with pytest.raises(ValueError):
            bio.read_matrix(path)

    def test_timeseries_round_trip(self, tmp_path):
        ts = TimeSeries(np.arange(4) * 0.1, np.random.default_rng(0).standard_normal((4, 2)))
        back = bio.read_timeseries(bio.write_timeseries(tmp_path / "ts.csv", ts))
        assert np.array_equal(back.values, ts.values) and np.array_equal(back.times, ts.times)

    def test_dirichlet_file(self, tmp_path):
        path = bio.write_json(tmp_path / "d.json", DirichletDensity([4.0, 3.0]).to_dict())
        assert bio.read_density(path).concentrations.tolist() == [4.0, 3.0]
