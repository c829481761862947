import json

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from cartogen.cli import main
from cartogen.control import load_control_png
from cartogen.scene import load_scene


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def corpus_dir(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    r = runner.invoke(
        main,
        ["corpus", "gen", "--seed", "5", "--width", "64", "--height", "64",
         "--tile-size", "32", "--density", "text=0", "--out", str(out)],
    )
    assert r.exit_code == 0, r.output
    return out


def test_corpus_gen_outputs(corpus_dir):
    assert (corpus_dir / "scene.json").exists()
    assert (corpus_dir / "control.png").exists()
    for sid in ("modern", "midcentury", "antique"):
        assert (corpus_dir / f"ref_{sid}.png").exists()
    scene = load_scene(corpus_dir / "scene.json")
    assert scene.width == scene.height == 64


def test_corpus_gen_density_override(runner, tmp_path):
    r = runner.invoke(
        main,
        ["corpus", "gen", "--seed", "5", "--width", "64", "--height", "64", "--tile-size", "32",
         "--density", "building=2,road=0", "--out", str(tmp_path)],
    )
    assert r.exit_code == 0, r.output
    scene = load_scene(tmp_path / "scene.json")
    from cartogen.legend import class_by_slug

    assert sum(1 for f in scene.features if f.class_id == class_by_slug("building").id) == 2
    assert sum(1 for f in scene.features if f.class_id == class_by_slug("road").id) == 0


@pytest.fixture(scope="module")
def dataset_dir(runner, corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    r = runner.invoke(
        main,
        ["dataset", "build", "--scene", str(corpus_dir / "scene.json"),
         "--styles", "modern,antique", "--tile-size", "32", "--out", str(out)],
    )
    assert r.exit_code == 0, r.output
    return out


def test_dataset_build_manifest(dataset_dir):
    lines = (dataset_dir / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 8  # 2x2 tiles x 2 styles
    rec = json.loads(lines[0])
    assert {"sheet_id", "row", "col", "control_path", "target_path", "prompt"} <= set(rec)


@pytest.fixture(scope="module")
def trained(runner, dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    r = runner.invoke(
        main,
        ["train", "base", "--data", str(dataset_dir), "--steps", "3", "--log-every", "3",
         "--batch-size", "4", "--sample-steps", "4", "--out", str(out / "base")],
    )
    assert r.exit_code == 0, r.output
    r = runner.invoke(
        main,
        ["train", "control", "--data", str(dataset_dir), "--base", str(out / "base" / "base.pt"),
         "--steps", "3", "--log-every", "3", "--batch-size", "4", "--sample-steps", "4",
         "--out", str(out / "control")],
    )
    assert r.exit_code == 0, r.output
    return out


def test_training_artifacts(trained):
    assert (trained / "base" / "base.pt").exists()
    assert (trained / "base" / "metrics.jsonl").exists()
    assert (trained / "control" / "control.pt").exists()
    logs = list((trained / "control").glob("imagelog_step*.png"))
    assert logs


def test_generate_and_postproc_and_miou(runner, trained, corpus_dir, tmp_path):
    tile = tmp_path / "tile.png"
    r = runner.invoke(
        main,
        ["generate", "--checkpoint", str(trained / "control" / "control.pt"),
         "--control", str(corpus_dir / "control_modern.png"), "--style", "modern",
         "--seed", "3", "--steps", "5", "--out", str(tile)],
    )
    assert r.exit_code == 0, r.output
    assert Image.open(tile).size == (64, 64)

    post = tmp_path / "post.png"
    r = runner.invoke(
        main,
        ["postproc", "--tile", str(tile), "--control", str(corpus_dir / "control_modern.png"),
         "--style", "modern", "--scene", str(corpus_dir / "scene.json"), "--out", str(post)],
    )
    assert r.exit_code == 0, r.output

    r = runner.invoke(
        main,
        ["evaluate", "miou", "--pred", str(corpus_dir / "ref_modern.png"),
         "--ref", str(corpus_dir / "control_modern.png"), "--style", "modern"],
    )
    assert r.exit_code == 0, r.output
    assert float(r.output.split()[-1]) == 1.0  # zero-noise reference segments perfectly


def test_stitch_command(runner, tmp_path):
    rng = np.random.default_rng(0)
    for row in range(2):
        for col in range(3):
            arr = rng.integers(0, 255, (8, 8, 3), dtype=np.uint8)
            Image.fromarray(arr).save(tmp_path / f"r{row}_c{col}.png")
    out = tmp_path / "sheet.png"
    r = runner.invoke(main, ["stitch", "--tiles", str(tmp_path), "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert Image.open(out).size == (24, 16)


def test_evaluate_assessment_and_sus(runner, tmp_path):
    records = tmp_path / "records.csv"
    rows = ["item_id,truth,response,task,style_id,participant_id"]
    for i in range(19):
        rows.append(f"r{i},real,real,1,modern,p1")
    rows.append("r19,real,synthetic,1,modern,p1")
    for i in range(20):
        rows.append(f"s{i},synthetic,synthetic,1,modern,p1")
    records.write_text("\n".join(rows) + "\n")
    r = runner.invoke(main, ["evaluate", "assessment", "--records", str(records)])
    assert r.exit_code == 0, r.output
    assert "0.97" in r.output  # F1 of P=1.00, R=0.95

    sus = tmp_path / "sus.csv"
    sus.write_text(
        "participant_id," + ",".join(f"q{i}" for i in range(1, 11)) + "\n"
        + "p1," + ",".join(["3"] * 10) + "\n"
    )
    r = runner.invoke(main, ["evaluate", "sus", "--responses", str(sus)])
    assert r.exit_code == 0, r.output
    assert "mean=50.00" in r.output


def test_generate_rejects_missing_checkpoint(runner, tmp_path):
    r = runner.invoke(
        main,
        ["generate", "--checkpoint", str(tmp_path / "none.pt"), "--control", str(tmp_path / "c.png"),
         "--style", "modern", "--out", str(tmp_path / "t.png")],
    )
    assert r.exit_code != 0
