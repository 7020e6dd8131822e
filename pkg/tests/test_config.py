import json

import numpy as np
import pytest

from driftbound import config
from driftbound.errors import ConfigError
from driftbound.scenarios import (
    list_scenarios,
    resolve_config,
    shipped_scenarios,
    validate_scenario,
)


def minimal_doc(**over):
    doc = {
        "schema_version": 1,
        "name": "t",
        "kind": "bound",
        "seed": 1,
        "params": {"kernel_ref": "k", "certificate_ref": "c", "x0": 0},
        "components": {
            "k": {"type": "finite_matrix", "matrix": [[1.0]]},
            "c": {
                "type": "exponential_certificate",
                "alpha": 0.1,
                "V": {"form": "table", "states": [0], "values": [1.0]},
                "region": {"type": "finite_set", "members": [0]},
            },
        },
    }
    doc.update(over)
    return doc


class TestValidation:
    def test_minimal_document_validates(self):
        validate_scenario(minimal_doc())

    def test_schema_version_pinned(self):
        with pytest.raises(ConfigError, match="schema_version"):
            config.validate_document(minimal_doc(schema_version=2))

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="extra"):
            config.validate_document(minimal_doc(extra=1))

    def test_unknown_kind_lists_valid_kinds(self):
        with pytest.raises(ConfigError, match="certificate-verify"):
            config.validate_document(minimal_doc(kind="nonsense"))

    def test_seed_mandatory(self):
        doc = minimal_doc()
        del doc["seed"]
        with pytest.raises(ConfigError, match="seed"):
            config.validate_document(doc)

    def test_unknown_param_key_is_an_error(self):
        doc = minimal_doc()
        doc["params"]["horizonn"] = 10  # typo must not pass silently
        with pytest.raises(ConfigError, match="horizonn"):
            config.validate_document(doc)

    def test_bad_row_sum_names_the_row(self):
        doc = minimal_doc()
        doc["components"]["k"]["matrix"] = [[0.9]]
        with pytest.raises(ConfigError, match="row 0 sums"):
            validate_scenario(doc)

    def test_unresolved_reference(self):
        doc = minimal_doc()
        doc["params"]["kernel_ref"] = "missing"
        with pytest.raises(ConfigError, match="unknown component 'missing'"):
            validate_scenario(doc)

    def test_not_a_file_and_not_shipped(self):
        with pytest.raises(ConfigError, match="neither a config file"):
            resolve_config("no-such-scenario")

    def test_invalid_json_file(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            resolve_config(p)


class TestBuilders:
    def test_walk_matrix_rows(self):
        k = config.build_kernel({"type": "walk_matrix", "p_up": 0.25, "size": 5})
        assert k.matrix[0, 0] == 0.75 and k.matrix[0, 1] == 0.25
        assert k.matrix[4, 4] == 0.25 and k.matrix[4, 3] == 0.75

    def test_walk_family_schedule(self):
        k = config.build_kernel(
            {"type": "walk_matrix_family", "p_up_schedule": [0.25, 0.1], "size": 4}
        )
        assert k.matrix_at(0)[1, 2] == 0.25
        assert k.matrix_at(1)[1, 2] == 0.1
        assert k.matrix_at(50)[1, 2] == 0.1  # schedule tail extends

    def test_functional_forms(self):
        g = config.build_functional({"form": "geometric", "base": 3, "root": 2})
        assert g(2) == pytest.approx(3.0)
        t = config.build_functional(
            {"form": "table", "states": [0, 1], "values": [1.0, 0.5]}
        )
        assert t(1) == 0.5
        n = config.build_functional({"form": "norm"})
        assert n(np.array([3.0, 4.0])) == 5.0

    def test_classk_forms(self):
        f = config.build_classk({"form": "linear", "c": 4.0})
        assert f(2.0) == 8.0

    def test_disturbance_table_from_csv(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("0.1\n-0.2\n0.15\n")
        d = config.build_disturbance(
            {"kind": "table", "w_max": 0.25, "values_csv": str(p)}
        )
        w = d.sequence(3)
        assert w.shape == (3, 1)
        assert np.allclose(w[:, 0], [0.1, -0.2, 0.15])
        d.validate_bound(3)

    def test_disturbance_csv_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="disturbance table"):
            config.build_disturbance(
                {"kind": "table", "w_max": 1.0,
                 "values_csv": str(tmp_path / "missing.csv")}
            )


class TestShipped:
    def test_at_least_six_scenarios(self):
        assert len(shipped_scenarios()) >= 6

    def test_every_shipped_scenario_validates(self):
        for name in shipped_scenarios():
            validate_scenario(name)

    def test_listing_has_descriptions(self):
        for name, kind, desc in list_scenarios():
            assert kind in config.SCENARIO_KINDS
            assert len(desc) > 10

    def test_shipped_files_are_valid_json(self):
        for name, path in shipped_scenarios().items():
            doc = json.loads(path.read_text())
            assert doc["name"] == name
