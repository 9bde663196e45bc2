from __future__ import annotations

import pandas as pd
import pytest
import yaml

from lowlight_nerf.checkpoint import load_checkpoint
from lowlight_nerf.cli import build_parser, main, run_overrides
from lowlight_nerf.data import load_dataset


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "scene.yaml"
    spec.write_text(
        yaml.safe_dump(
            {"scene": {"seed": 1, "n_blobs": 2, "n_cameras": 9, "width": 8, "height": 8}}
        )
    )
    out = root / "blobs"
    assert main(["synth", "--spec", str(spec), "--out", str(out), "--samples", "16"]) == 0
    return out


@pytest.fixture(scope="module")
def run_dir(dataset_dir, tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    config = root / "config.yaml"
    config.write_text(
        yaml.safe_dump(
            {
                "field": {"trunk_layers": 2, "trunk_width": 8, "skip_layer": 1, "pos_enc_levels": 2,
                          "dir_enc_levels": 1},
                "train": {"iters": 3, "patch_w": 4, "patch_h": 4, "n_samples": 8,
                          "checkpoint_every": 2, "log_every": 1},
                "paths": {"data_dir": str(dataset_dir), "runs_dir": str(root)},
            }
        )
    )
    assert main(["train", "--config", str(config), "--name", "tiny", "--seed", "2"]) == 0
    return root / "tiny"


def test_synth_writes_a_dataset(dataset_dir):
    frames = load_dataset(dataset_dir)
    assert [f.name for f in frames if f.split == "test"] == ["r_000", "r_008"]
    normal = load_dataset(dataset_dir, exposure="normal")
    pairs = zip(frames, normal, strict=True)
    assert all(low.image.mean() < high.image.mean() for low, high in pairs)
    assert sorted(p.name for p in (dataset_dir / "gt").iterdir()) == ["r_000.png", "r_008.png"]
    content = yaml.safe_load((dataset_dir / "scene_spec.yaml").read_text())
    assert content["darken"]["mode"] == "field_conceal"
    assert content["darken"]["n_samples"] == 16


def test_synth_image_gamma(tmp_path):
    spec = tmp_path / "scene.yaml"
    spec.write_text(yaml.safe_dump({"scene": {"n_cameras": 1, "width": 4, "height": 4}}))
    out = tmp_path / "gamma"
    code = main(
        ["synth", "--spec", str(spec), "--out", str(out), "--darken-mode", "image_gamma",
         "--gain", "0.3"]
    )
    assert code == 0
    content = yaml.safe_load((out / "scene_spec.yaml").read_text())
    assert (content["darken"]["mode"], content["darken"]["gain"]) == ("image_gamma", 0.3)


def test_train_writes_the_run(run_dir, capsys):
    assert (run_dir / "config.yaml").is_file()
    assert yaml.safe_load((run_dir / "config.yaml").read_text())["train"]["seed"] == 2
    log = pd.read_csv(run_dir / "loss.csv")
    assert log["iter"].tolist() == [0, 1, 2]
    assert (run_dir / "ckpt_000002.ckpt").is_file()
    assert load_checkpoint(run_dir / "final.ckpt").iteration == 3


def test_train_resume_continues(run_dir, dataset_dir, tmp_path, capsys):
    config = yaml.safe_load((run_dir / "config.yaml").read_text())
    config["train"]["iters"] = 4
    config["paths"]["runs_dir"] = str(tmp_path)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config))
    code = main(["train", "--config", str(path), "--resume", str(run_dir / "final.ckpt")])
    assert code == 0, capsys.readouterr().err
    resumed = pd.read_csv(tmp_path / config["run"]["name"] / "loss.csv")
    assert resumed["iter"].tolist() == [3]
    assert "checkpoint hash" in capsys.readouterr().out


def test_render_and_eval(run_dir, dataset_dir, tmp_path, capsys):
    renders = tmp_path / "renders"
    assert main(["render", "--checkpoint", str(run_dir / "final.ckpt"), "--data", str(dataset_dir),
                 "--out", str(renders)]) == 0
    assert sorted(p.name for p in renders.iterdir()) == ["r_000.png", "r_008.png"]

    report_dir = tmp_path / "report"
    assert main(["eval", "--render-dir", str(renders), "--gt-dir", str(dataset_dir / "gt"),
                 "--label", "tiny", "--out", str(report_dir)]) == 0
    assert "Evaluation: tiny" in capsys.readouterr().out
    assert (report_dir / "report.csv").is_file()


def test_render_lowlight_next_to_the_checkpoint(run_dir, dataset_dir):
    code = main(["render", "--checkpoint", str(run_dir / "final.ckpt"), "--data", str(dataset_dir),
                 "--mode", "lowlight", "--split", "all", "--tile", "4"])
    assert code == 0
    assert len(list((run_dir / "renders_lowlight").iterdir())) == 9


def test_enhance(dataset_dir, tmp_path, capsys):
    out = tmp_path / "he"
    code = main(
        ["enhance", "--in", str(dataset_dir / "test"), "--out", str(out), "--method", "he"]
    )
    assert code == 0
    assert {p.name for p in out.iterdir()} == {p.name for p in (dataset_dir / "test").iterdir()}
    assert "he: wrote" in capsys.readouterr().out


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_checkgrad_passes_at_the_default_tolerance(seed, capsys):
    assert main(["checkgrad", "--seed", str(seed)]) == 0
    out = capsys.readouterr().out
    assert "3x3 patch, N=3" in out
    assert "max relative error" in out


def test_checkgrad_failure_exits_with_4(capsys):
    assert main(["checkgrad", "--tolerance", "0"]) == 4
    assert capsys.readouterr().err.startswith("error[E_NUMERIC]")


def test_train_without_data_exits_with_2(tmp_path, capsys):
    assert main(["train", "--name", "x", "--iters", "1"]) == 2
    assert capsys.readouterr().err.startswith("error[E_CONFIG]")


def test_bad_config_value_exits_with_2(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path), "--eta", "-1"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error[E_CONFIG]")
    assert err.count("\n") == 1


def test_missing_data_exits_with_3(tmp_path, capsys):
    assert main(["eval", "--render-dir", str(tmp_path / "a"), "--gt-dir", str(tmp_path / "b")]) == 3
    assert capsys.readouterr().err.startswith("error[E_MISSING_FILE]")


def test_unmatched_eval_exits_with_3(dataset_dir, tmp_path, capsys):
    code = main(
        ["eval", "--render-dir", str(dataset_dir / "train"), "--gt-dir", str(dataset_dir / "gt")]
    )
    assert code == 3
    assert capsys.readouterr().err.startswith("error[E_UNMATCHED]")


def test_unknown_enhancement_is_an_argparse_error():
    with pytest.raises(SystemExit) as info:
        main(["enhance", "--in", "a", "--out", "b", "--method", "retinex"])
    assert info.value.code == 2


@pytest.mark.parametrize(("text", "expected"), [("32", (32, 32)), ("32x16", (32, 16))])
def test_patch_flag(text, expected):
    args = build_parser().parse_args(["train", "--patch", text])
    assert run_overrides(args)["train"]["patch_w"] == expected[0]
    assert run_overrides(args)["train"]["patch_h"] == expected[1]


def test_unset_flags_stay_none():
    overrides = run_overrides(build_parser().parse_args(["train"]))
    assert overrides["train"]["eta"] is None
    assert overrides["train"]["f64"] is None
    assert "patch_w" not in overrides["train"]
