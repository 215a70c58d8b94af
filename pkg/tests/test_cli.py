import csv
import json

import numpy as np
import pytest

from dicect import experiment
from dicect.cli import main
from dicect.config import ExperimentConfig, apply_overrides, load_config
from dicect.errors import NumericalError
from dicect.experiment import ablation_sweep, run_experiment
from dicect.io import read_raw, read_sinogram

FAST = ["image_side=32", "T_steps=5", "fista_iters=20", "tv_iters=10", "fista_tv_iters=10"]


def fast_config(tmp_path, *extra):
    return apply_overrides(ExperimentConfig(), FAST + [f"out={tmp_path / 'out'}", *extra])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRunExperiment:
    def test_fbp_smoke(self, tmp_path):
        cfg = fast_config(tmp_path, "method=fbp", "views=180", "phantom=ellipses", "n_images=3")
        run_experiment(cfg)
        rows = read_csv(tmp_path / "out" / "metrics.csv")
        assert len(rows) == 3
        assert all(float(r["psnr"]) > 15 for r in rows)
        assert {r["image_id"] for r in rows} == {"ellipses00", "ellipses01", "ellipses02"}

    def test_outputs(self, tmp_path):
        cfg = fast_config(tmp_path, "method=fbp,dice", "views=15")
        run_experiment(cfg)
        out = tmp_path / "out"
        recon = read_raw(out / "recon" / "shepp_logan__dice__uniform__15.f64")
        assert recon.shape == (32, 32)
        assert (out / "recon" / "shepp_logan__fbp__uniform__15.pgm").exists()
        assert read_sinogram(out / "sinograms" / "shepp_logan__uniform__15.sino").shape == (15, 32)
        log = read_csv(out / "runlogs" / "shepp_logan__dice__uniform__15.csv")
        assert len(log) == 5 * 5 and set(log[0]) == {"t", "k", "residual", "abs_residual"}
        meta = json.loads((out / "run.json").read_text())
        assert meta["version"].startswith("v") and meta["schedule"] == "linear"
        assert set(meta["stage_seconds"]) == {"simulate", "reconstruct_and_score"}
        assert not list(out.glob(".partial-*"))

    def test_config_echo_roundtrips(self, tmp_path):
        cfg = fast_config(tmp_path, "method=fbp", "views=30,60", "P=none", "rho=0.7")
        run_experiment(cfg)
        assert load_config(tmp_path / "out" / "config.ini") == cfg

    def test_dice_grid_groups(self, tmp_path):
        cfg = fast_config(tmp_path, "method=dice", "views=15,30,60", "pattern=uniform,nonuniform", "T_steps=2")
        run_experiment(cfg)
        rows = read_csv(tmp_path / "out" / "metrics.csv")
        assert sorted((r["pattern"], int(r["views"])) for r in rows) == sorted(
            (p, v) for p in ("uniform", "nonuniform") for v in (15, 30, 60))

    def test_rerun_bit_exact_and_parallel(self, tmp_path):
        base = FAST + ["method=fbp,pnp_fista,dice", "views=15,30", "phantom=mixed", "n_images=2",
                       "record_seconds=false", "noise_sigma=0.01", "pattern=nonuniform"]
        outputs = []
        for name, workers in (("a", 1), ("b", 1), ("c", 3)):
            cfg = apply_overrides(ExperimentConfig(), base + [f"out={tmp_path / name}", f"workers={workers}"])
            run_experiment(cfg)
            outputs.append(tmp_path / name)
        first = (outputs[0] / "metrics.csv").read_bytes()
        for out in outputs[1:]:
            assert (out / "metrics.csv").read_bytes() == first
            for f in (outputs[0] / "recon").glob("*.f64"):
                assert (out / "recon" / f.name).read_bytes() == f.read_bytes()

    def test_abort_removes_partial_outputs(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise NumericalError("forced", {"t": 1, "k": 0})

        monkeypatch.setattr(experiment, "dice_reconstruct", boom)
        cfg = fast_config(tmp_path, "method=fbp,dice")
        with pytest.raises(NumericalError):
            run_experiment(cfg)
        assert not (tmp_path / "out").exists()

    def test_abort_keeps_existing_directory_untouched(self, tmp_path, monkeypatch):
        (tmp_path / "out").mkdir()
        (tmp_path / "out" / "keep.txt").write_text("x")
        monkeypatch.setattr(experiment, "dice_reconstruct",
                            lambda *a, **k: (_ for _ in ()).throw(NumericalError("forced")))
        with pytest.raises(NumericalError):
            run_experiment(fast_config(tmp_path, "method=dice"))
        assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["keep.txt"]

    def test_input_directory(self, tmp_path):
        from dicect.io import write_pgm
        from dicect.phantoms import random_ellipse_phantom

        src = tmp_path / "imgs"
        src.mkdir()
        for i in range(2):
            write_pgm(src / f"slice{i}.pgm", random_ellipse_phantom(32, i))
        run_experiment(fast_config(tmp_path, "method=fbp", f"input_dir={src}"))
        rows = read_csv(tmp_path / "out" / "metrics.csv")
        assert [r["image_id"] for r in rows] == ["slice0", "slice1"]


class TestSweep:
    def test_mann_iteration_axis(self, tmp_path):
        cfg = fast_config(tmp_path, "T_steps=3")
        rows = ablation_sweep(cfg, "K", list(range(1, 11)))
        table = read_csv(tmp_path / "out" / "sweep_K.csv")
        assert len(rows) == len(table) == 10
        assert [int(r["axis_value"]) for r in table] == list(range(1, 11))
        assert {"axis_value", "psnr", "ssim", "seconds"} <= set(table[0])
        assert all(r["axis"] == "K" and r["method"] == "dice" for r in table)

    def test_invalid_axis(self, tmp_path):
        from dicect.errors import ConfigError

        with pytest.raises(ConfigError):
            ablation_sweep(fast_config(tmp_path), "lambda_tv", [1.0])
        with pytest.raises(ConfigError):
            ablation_sweep(fast_config(tmp_path), "rho", [1.5])


class TestCommandLine:
    def test_pipeline_verbs(self, tmp_path, capsys):
        sim, rec = tmp_path / "sim", tmp_path / "rec"
        common = [f"--override={o}" for o in FAST]
        assert main(["simulate", "--out", str(sim), "--views", "30", "--pattern", "uniform,nonuniform",
                     *common]) == 0
        assert len(list((sim / "sinograms").glob("*.sino"))) == 2
        assert main(["reconstruct", "--input", str(sim / "sinograms"), "--out", str(rec),
                     "--method", "fbp", *common]) == 0
        assert main(["evaluate", "--ref", str(sim / "phantoms"), "--test", str(rec / "recon"),
                     "--csv", str(tmp_path / "m.csv")]) == 0
        rows = read_csv(tmp_path / "m.csv")
        assert {(r["pattern"], r["views"]) for r in rows} == {("uniform", "30"), ("nonuniform", "30")}
        assert all(float(r["psnr"]) > 10 for r in rows)

    def test_all_and_config_file(self, tmp_path, capsys):
        ini = tmp_path / "exp.ini"
        ini.write_text("[sampling]\nviews = 60\n[run]\nmethod = fbp\n")
        assert main(["all", "--config", str(ini), "--out", str(tmp_path / "o"), "--seed", "4",
                     *[f"--override={o}" for o in FAST]]) == 0
        assert "psnr" in capsys.readouterr().out
        cfg = load_config(tmp_path / "o" / "config.ini")
        assert cfg.views == (60,) and cfg.seed == 4 and cfg.image_side == 32

    def test_sweep_verb(self, tmp_path):
        assert main(["sweep", "--axis", "rho", "--values", "0.3,0.9", "--out", str(tmp_path / "s"),
                     *[f"--override={o}" for o in FAST + ["T_steps=2"]]]) == 0
        assert len(read_csv(tmp_path / "s" / "sweep_rho.csv")) == 2

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["all", "--views", "7", "--out", str(tmp_path / "o")]) == 2
        assert main(["all", "--override", "nonsense=1", "--out", str(tmp_path / "o")]) == 2
        assert "config error" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_numerical_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(experiment, "dice_reconstruct",
                            lambda *a, **k: (_ for _ in ()).throw(NumericalError("forced", {"t": 3, "k": 1})))
        assert main(["all", "--method", "dice", "--out", str(tmp_path / "o"),
                     *[f"--override={o}" for o in FAST]]) == 3
        assert not (tmp_path / "o").exists()

    def test_io_exit_code(self, tmp_path):
        assert main(["reconstruct", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 4
        (tmp_path / "ref").mkdir()
        (tmp_path / "test").mkdir()
        np.zeros(4).tofile(tmp_path / "test" / "img__fbp__uniform__15.f64")
        assert main(["evaluate", "--ref", str(tmp_path / "ref"), "--test", str(tmp_path / "test")]) == 4
