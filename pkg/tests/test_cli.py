import json

import numpy as np
import pytest

from textinpaint.annotations import load_annotations, parse_annotation_lines, training_windows, write_dataset
from textinpaint.cli import main
from textinpaint.errors import ManifestParseError
from textinpaint.toyworld import TOY_WORDS, make_text_scene, write_backgrounds

TINY = [
    "autoencoder.hidden=8", "autoencoder.steps=3",
    "condition.dim=16", "condition.layers=1", "condition.heads=2",
    "denoiser.channels=16", "denoiser.heads=2", "denoiser.groups=4",
    "diffusion.T=50", "training.steps=3", "training.batch_size=2",
    "sampler.steps=2", "recognizer.steps=3", "recognizer.hidden=8", "recognizer.batch_size=4",
    "probe.steps=2", "probe.hidden=4",
]


def run(capsys, *argv):
    args = list(argv)
    for s in TINY:
        args += ["--set", s]
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    samples = []
    for i in range(3):
        scene = make_text_scene(rng, 96)
        samples.append((f"train_{i}", scene.image, scene.instances))
    write_dataset(root / "data", samples)
    write_backgrounds(root / "world", 3, seed=1, size=96)
    (root / "words.txt").write_text("\n".join(TOY_WORDS) + "\n")
    return root


def test_annotation_round_trip(workspace):
    anns = load_annotations(workspace / "data")
    assert anns and all(a.image.endswith(".png") for a in anns)
    windows = training_windows(workspace / "data", 64)
    assert all(w.shape == (64, 64, 3) for w, _, _ in windows)


def test_annotation_parse_error_has_line():
    good = json.dumps({"image": "a.png", "polygon": [[0, 0], [1, 0], [1, 1]], "text": "x"})
    with pytest.raises(ManifestParseError) as err:
        parse_annotation_lines([good, json.dumps({"image": "a.png", "text": "x"})])
    assert err.value.line_number == 2


def test_full_cli_flow(workspace, capsys):
    ws = workspace
    out = ws / "out"
    code, o, _ = run(capsys, "train-autoencoder", "--data", str(ws / "data"), "--out-dir", str(out))
    assert code == 0 and json.loads(o)["sha256"]
    code, o, _ = run(capsys, "train-denoiser", "--data", str(ws / "data"), "--autoencoder", str(out / "autoencoder.ckpt"), "--out-dir", str(out))
    assert code == 0 and json.loads(o)["freeze_policy"]["autoencoder"] == "frozen"
    code, o, _ = run(capsys, "train-recognizer", "--toy-samples", "20", "--out-dir", str(out))
    assert code == 0
    code, o, _ = run(capsys, "propose-regions", "--backgrounds", str(ws / "world/backgrounds"), "--maps-dir", str(ws / "world/maps"), "--out-dir", str(out))
    assert code == 0 and json.loads(o)["images"] == 3

    gen = [
        "generate", "--backgrounds", str(ws / "world/backgrounds"), "--maps-dir", str(ws / "world/maps"),
        "--checkpoint", str(out / "model.ckpt"), "--recognizer", str(out / "recognizer.ckpt"),
        "--words", str(ws / "words.txt"), "--seed", "5", "--deterministic", "--threads", "1",
    ]
    assert run(capsys, *gen, "--out-dir", str(ws / "gen1"))[0] == 0
    assert run(capsys, *gen, "--out-dir", str(ws / "gen2"))[0] == 0
    m1, m2 = (ws / "gen1/manifest.jsonl").read_bytes(), (ws / "gen2/manifest.jsonl").read_bytes()
    assert m1 == m2 and len(m1.splitlines()) == 3

    code, o, _ = run(capsys, "stats", "--manifest", str(ws / "gen1/manifest.jsonl"))
    stats = json.loads(o)
    assert stats["images"] == 3 and stats["reference"]["instances"] == 76354
    code, o, _ = run(capsys, "export-icdar", "--manifest", str(ws / "gen1/manifest.jsonl"), "--out-dir", str(ws / "icdar"))
    assert code == 0 and json.loads(o)["files"] == 3
    code, o, _ = run(capsys, "probe-train", "--manifest", str(ws / "gen1/manifest.jsonl"), "--out-dir", str(out))
    assert code == 0
    code, o, _ = run(capsys, "probe-eval", "--manifest", str(ws / "gen1/manifest.jsonl"), "--probe", str(out / "probe.ckpt"))
    assert code == 0 and set(json.loads(o)) >= {"precision", "recall", "hmean"}


def test_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "stats", "--manifest", str(tmp_path / "missing.jsonl"))
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "DataError"
    code, _, err = run(capsys, "show-config", "--set", "training.nonsense=1")
    assert code == 2
    cfg = tmp_path / "c.yaml"
    cfg.write_text("training:\n  learning_rate: -1\n")
    assert run(capsys, "show-config", "--config", str(cfg))[0] == 2
    bad = tmp_path / "m.jsonl"
    bad.write_text("{broken\n")
    code, _, err = run(capsys, "stats", "--manifest", str(bad))
    assert code == 3 and "line 1" in err


def test_paper_profile_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("training:\n  profile: paper\n")
    assert main(["show-config", "--config", str(cfg)]) == 0
    tr = json.loads(capsys.readouterr()[0])["config"]["training"]
    assert (tr["learning_rate"], tr["batch_size"], tr["image_size"]) == (1e-5, 24, 512)


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    lines = capsys.readouterr()[0].strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
