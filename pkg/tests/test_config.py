import json

import numpy as np
import pytest

from xsplat.config import (
    DEFAULT_SCANNER,
    RunConfig,
    load_run_config,
    run_config_from_dict,
    save_run_config,
)
from xsplat.errors import ConfigError
from xsplat.geometry import equal_interval_angles


class TestDefaults:
    def test_default_values(self):
        cfg = RunConfig()
        assert cfg.seed == 0
        assert cfg.n_features == 16
        assert cfg.init == "cuboid"
        assert cfg.noise_level == 0.03
        assert cfg.scanner == DEFAULT_SCANNER
        assert cfg.cuboid.extent == (100.0, 100.0, 100.0)
        assert cfg.cuboid.grid == (64, 64, 64)

    def test_scanner_config_geometry(self):
        sc = RunConfig().scanner_config()
        assert sc.source_object_distance == 1000.0
        assert sc.source_detector_distance == 1500.0
        assert sc.detector_width == 64
        assert np.array_equal(sc.angles, equal_interval_angles(100))

    def test_partial_scanner_merges_defaults(self):
        cfg = RunConfig(scanner={"n_views": 10})
        assert cfg.scanner["n_views"] == 10
        assert cfg.scanner["pixel_pitch"] == 3.0
        assert len(cfg.scanner_config().angles) == 10

    def test_resolved_basis_weights(self):
        assert np.array_equal(RunConfig().resolved_basis_weights(), np.ones(16))
        cfg = RunConfig(n_features=3, basis_weights=[1.0, 0.5, 0.25])
        w = cfg.resolved_basis_weights()
        assert w.dtype == np.float64
        assert np.array_equal(w, [1.0, 0.5, 0.25])

    def test_default_phantom_is_nonempty(self):
        prims = RunConfig().phantom_list()
        assert len(prims) >= 3
        assert all(hasattr(p, "density") for p in prims)


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_features=0),
            dict(init="voronoi"),
            dict(noise_level=-0.01),
            dict(n_features=4, basis_weights=[1.0, 2.0]),
            dict(scanner={"n_views": 0}),
            dict(scanner={"detector_w": 64}),
        ],
    )
    def test_bad_config_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            RunConfig(**kwargs)

    def test_inconsistent_geometry_rejected(self):
        with pytest.raises(ConfigError, match="scanner"):
            RunConfig(scanner={"pixel_pitch": -1.0})


class TestFromDict:
    def test_empty_document_gives_defaults(self):
        assert run_config_from_dict({}) == RunConfig()

    def test_round_trip(self):
        cfg = RunConfig(
            seed=7,
            n_features=4,
            basis_weights=[1.0, 0.5, 0.25, 0.125],
            init="spherical",
            scanner={"n_views": 12, "detector_width": 32},
            noise_level=0.01,
            dataset_dir="data/run1",
            output_dir="out/run1",
        )
        assert run_config_from_dict(cfg.to_dict()) == cfg

    def test_phantom_primitives_round_trip(self):
        prims = [
            {
                "kind": "ellipsoid",
                "center": [0, 0, 0],
                "semi_axes": [10.0, 10.0, 10.0],
                "density": 0.5,
            },
            {
                "kind": "cuboid",
                "center": [5, 0, 0],
                "half_extents": [4, 4, 4],
                "density": 0.2,
            },
        ]
        cfg = run_config_from_dict({"phantom": {"primitives": prims}})
        assert cfg.to_dict()["phantom"]["primitives"] == prims
        kinds = [type(p).__name__ for p in cfg.phantom_list()]
        assert kinds == ["Ellipsoid", "Cuboid"]

    def test_noise_level_lives_in_phantom_block(self):
        cfg = run_config_from_dict({"phantom": {"noise_level": 0.1}})
        assert cfg.noise_level == 0.1
        with pytest.raises(ConfigError, match="unknown configuration keys"):
            run_config_from_dict({"noise_level": 0.1})

    @pytest.mark.parametrize(
        "doc, fragment",
        [
            ({"smoothing": 1}, "unknown configuration keys"),
            ({"scanner": {"views": 4}}, "scanner"),
            ({"cuboid": {"extent": [1, 1, 1], "grid": [2, 2, 2], "pitch": 3}}, "cuboid"),
            ({"phantom": {"shapes": []}}, "phantom"),
            ({"train": {"momentum": 0.9}}, "train"),
            ({"paths": {"workdir": "x"}}, "paths"),
        ],
    )
    def test_unknown_keys_rejected_at_every_level(self, doc, fragment):
        with pytest.raises(ConfigError, match=fragment):
            run_config_from_dict(doc)

    def test_non_object_root_rejected(self):
        with pytest.raises(ConfigError, match="object"):
            run_config_from_dict([1, 2, 3])

    def test_incomplete_cuboid_rejected(self):
        with pytest.raises(ConfigError, match="cuboid"):
            run_config_from_dict({"cuboid": {"extent": [100, 100, 100]}})


class TestFiles:
    def test_save_load_round_trip(self, tmp_path):
        cfg = RunConfig(seed=3, scanner={"n_views": 5}, output_dir="out")
        path = tmp_path / "run.json"
        save_run_config(cfg, path)
        assert load_run_config(path) == cfg
        # The on-disk form is plain JSON, editable by hand.
        doc = json.loads(path.read_text())
        assert doc["seed"] == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_run_config(path)
