"""Experiment configuration, end-to-end commands, file formats and CLI."""

import os

import numpy as np
import pytest

from gcmp import imageio
from gcmp.cli import main
from gcmp.imageio import (ImageFormatError, read_pfm, read_pgm, write_pfm,
                          write_pgm)
from gcmp.pipeline import (ConfigError, ExperimentConfig, RDRecord,
                           cmd_benchmark, cmd_encode, cmd_estimate,
                           cmd_metrics, cmd_synthesize, measurement_count,
                           run_estimate)
from gcmp.synthesize import SceneObject, SceneSpec, synthesize

DIMS = (32, 32)


@pytest.fixture(scope="module")
def views(tmp_path_factory):
    root = tmp_path_factory.mktemp("views")
    scene = SceneSpec(
        dims=DIMS,
        objects=[
            SceneObject("rect", 2, 20, 9, 8, 90.0),
            SceneObject("disk", 20, 3, 8, 8, 140.0),
            SceneObject("rect", 8, 8, 10, 10, 200.0, shift=(2.0, 0.0)),
        ],
        background=30.0, blur_sigma=1.0)
    out = synthesize(scene)
    ref = os.path.join(root, "view1.pgm")
    tgt = os.path.join(root, "view2.pgm")
    gt = os.path.join(root, "gt_h.pfm")
    write_pgm(ref, out.reference)
    write_pgm(tgt, out.views[0])
    write_pfm(gt, out.gt_fields[0].m_h)
    return {"ref": ref, "tgt": tgt, "gt": gt, "root": str(root)}


def _base_cfg(views, outdir, **extra):
    cfg = {
        "reference": views["ref"], "target": views["tgt"],
        "gt": views["gt"], "mode": "OPT2", "k_atoms": "6",
        "rate": "0.2", "bits": "4", "seed": "3",
        "alpha1": "10000", "alpha2": "100", "tau": "4",
        "window.dt_x": "2", "dict.rotation_count": "1",
        "dict.scale_count": "3", "output_dir": outdir,
    }
    cfg.update(extra)
    return ExperimentConfig.from_dict(cfg)


class TestImageIO:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=DIMS).astype(np.float64)
        path = os.path.join(tmp_path, "x.pgm")
        write_pgm(path, img)
        np.testing.assert_array_equal(read_pgm(path), img)

    def test_pgm_clamps_and_rounds(self, tmp_path):
        path = os.path.join(tmp_path, "c.pgm")
        write_pgm(path, np.array([[-5.0, 300.0, 127.4]]))
        np.testing.assert_array_equal(read_pgm(path), [[0, 255, 127]])

    def test_pfm_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        field = rng.normal(size=DIMS).astype(np.float64)
        path = os.path.join(tmp_path, "f.pfm")
        write_pfm(path, field)
        np.testing.assert_allclose(read_pfm(path), field, atol=1e-6)

    def test_bad_magic_raises(self, tmp_path):
        path = os.path.join(tmp_path, "bad.pgm")
        with open(path, "wb") as fh:
            fh.write(b"JUNKJUNK")
        with pytest.raises(ImageFormatError):
            read_pgm(path)


class TestConfig:
    def test_measurement_count(self):
        # [PAPER-style] 35% of a 144x176 image is 8870 measurements.
        assert measurement_count(0.35, (144, 176)) == 8870

    def test_rate_validation(self):
        with pytest.raises(ConfigError):
            measurement_count(0.0, DIMS)
        with pytest.raises(ConfigError):
            measurement_count(1.5, DIMS)

    def test_missing_reference(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"target": "x.pgm"})

    def test_missing_target(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"reference": "x.pgm"})

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"reference": "a", "target": "b",
                                        "mode": "OPT7"})

    def test_opt3_needs_depth(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"reference": "a", "target": "b",
                                        "mode": "OPT3"})

    def test_depth_parsing(self):
        cfg = ExperimentConfig.from_dict({
            "reference": "a", "targets": "b,c", "mode": "OPT3",
            "depth.levels": "4", "depth.z_min": "12", "depth.z_max": "48",
            "depth.focal": "48", "depth.baselines": "1,2"})
        assert cfg.depth.level_count == 4
        assert cfg.depth.baselines == (1.0, 2.0)
        assert cfg.targets == ["b", "c"]

    def test_csv_excludes_wall_time(self):
        assert "wall_time" not in RDRecord.CSV_COLUMNS
        r = RDRecord("OPT2", 1, 0.2, 2, 100, 800, 0.78, 25.0, 0.1,
                     1.0, 2.0, 3.0, 0, 99.9)
        row = r.csv_row()
        assert len(row.split(",")) == len(RDRecord.CSV_COLUMNS)
        assert "99.9" not in row


class TestEncode:
    def test_cmd_encode_writes_bitstream(self, views, tmp_path):
        out = os.path.join(tmp_path, "v.gcmp")
        info = cmd_encode(views["tgt"], out, rate=0.2, bits=2)
        assert os.path.exists(out)
        assert info["m_count"] == int(0.2 * DIMS[0] * DIMS[1])
        assert info["bitstream_bits"] == os.path.getsize(out) * 8

    def test_full_rate_quantizer_contract(self, views, tmp_path):
        # [DERIVED] decoded interior-cell measurements sit within step/2 of
        # the true values; only span-clipped outliers may exceed that.
        from gcmp.sensing import decode_packet, sense
        out = os.path.join(tmp_path, "full.gcmp")
        cmd_encode(views["tgt"], out, rate=1.0, bits=8)
        with open(out, "rb") as fh:
            packet = decode_packet(fh.read())
        img = read_pgm(views["tgt"])
        y = sense(img, packet.sensing)
        interior = (packet.indices > 0) & (packet.indices < packet.quant.levels - 1)
        assert interior.mean() > 0.9
        err = np.abs(y - packet.dequantized)
        assert np.all(err[interior] <= packet.quant.step / 2 + 1e-9)


class TestEstimate:
    def test_estimate_outputs(self, views, tmp_path):
        cfg = _base_cfg(views, str(tmp_path))
        records = cmd_estimate(cfg)
        assert len(records) == 1
        r = records[0]
        assert np.isfinite(r.psnr_db) and r.psnr_db > 10.0
        assert 0.0 <= r.disparity_err <= 1.0
        for name in ("view1.gcmp", "predicted1.pgm", "field_h.pfm",
                     "field_v.pfm", "estimate.csv"):
            assert os.path.exists(os.path.join(tmp_path, name))
        with open(os.path.join(tmp_path, "estimate.csv")) as fh:
            header = fh.readline().strip()
        assert header == ",".join(RDRecord.CSV_COLUMNS)

    def test_identical_views_zero_error(self, views, tmp_path):
        cfg = _base_cfg(views, str(tmp_path), target=views["ref"],
                        alpha1="10000")
        out = run_estimate(cfg, write_outputs=False)
        # identical target: identity labels explain the measurements and
        # the predicted view is the reference itself
        assert np.all(out.result.field.m_h == 0.0)
        np.testing.assert_array_equal(out.predicted[0],
                                      read_pgm(views["ref"]))

    def test_sidecar_reuse(self, views, tmp_path):
        side = os.path.join(tmp_path, "ref.atoms")
        cfg = _base_cfg(views, str(tmp_path), sidecar=side)
        out1 = run_estimate(cfg, write_outputs=False)
        assert os.path.exists(side)
        out2 = run_estimate(cfg, write_outputs=False)
        assert out1.result.labels == out2.result.labels
        assert out1.records[0].csv_row() == out2.records[0].csv_row()


class TestBenchmark:
    def test_sweep_and_determinism(self, views, tmp_path):
        out1 = os.path.join(tmp_path, "run1")
        out2 = os.path.join(tmp_path, "run2")
        records = cmd_benchmark(_base_cfg(views, out1, rates="0.1,0.2",
                                          bits_list="2,4"))
        assert len(records) == 4
        cmd_benchmark(_base_cfg(views, out2, rates="0.1,0.2",
                                bits_list="2,4"))
        with open(os.path.join(out1, "benchmark.csv"), "rb") as fh:
            a = fh.read()
        with open(os.path.join(out2, "benchmark.csv"), "rb") as fh:
            b = fh.read()
        assert a == b
        assert os.path.exists(os.path.join(out1, "summary.txt"))


class TestCommands:
    def test_cmd_synthesize(self, tmp_path):
        scene = os.path.join(tmp_path, "scene.json")
        with open(scene, "w") as fh:
            fh.write('{"dims": [16, 16], "objects": [{"shape": "rect",'
                     '"x": 4, "y": 4, "w": 6, "h": 6, "intensity": 150,'
                     '"shift": [2, 0]}]}')
        out = os.path.join(tmp_path, "scene_out")
        info = cmd_synthesize(scene, out)
        assert info["views"] == 2
        assert os.path.exists(os.path.join(out, "view1.pgm"))
        assert os.path.exists(os.path.join(out, "gt_h_view2.pfm"))

    def test_cmd_metrics(self, views):
        out = cmd_metrics(views["ref"], views["ref"])
        assert out["psnr_db"] == np.inf
        out = cmd_metrics(views["ref"], views["tgt"],
                          gt_path=views["gt"], est_path=views["gt"])
        assert out["disparity_err"] == 0.0


class TestCLI:
    def test_encode_ok(self, views, tmp_path, capsys):
        out = os.path.join(tmp_path, "v.gcmp")
        assert main(["encode", views["tgt"], out, "--rate", "0.2"]) == 0
        assert "M=" in capsys.readouterr().out

    def test_bad_rate_exit_2(self, views, tmp_path, capsys):
        out = os.path.join(tmp_path, "v.gcmp")
        assert main(["encode", views["tgt"], out, "--rate", "0"]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path, capsys):
        out = os.path.join(tmp_path, "v.gcmp")
        assert main(["encode", "/nonexistent.pgm", out,
                     "--rate", "0.2"]) == 2

    def test_metrics_cli(self, views, capsys):
        assert main(["metrics", views["ref"], views["tgt"]]) == 0
        assert "psnr_db=" in capsys.readouterr().out
