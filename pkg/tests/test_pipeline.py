import filecmp
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rlaug import dataset, pipeline
from rlaug.cli import main
from rlaug.config import RunConfig, parse_config
from rlaug.errors import ConfigError

TINY = """\
size = 16
n_samples = 12
n_train = 6
n_val = 2
n_test = 4
pretrain_epochs = 2
final_epochs = 2
episodes = 4
agent_batch = 4
max_steps = 3
"""


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, tiny_cfg):
    out = tmp_path_factory.mktemp("run") / "a"
    assert main(["--config", str(tiny_cfg), "--seed", "3", "--out", str(out), "run"]) == 0
    return out


def artifact_files(root):
    return sorted(p.relative_to(root) for p in Path(root).rglob("*")
                  if p.is_file() and p.name != "run.log")


def test_phase_seeds_distinct():
    cfg = RunConfig(seed=1)
    seeds = {cfg.phase_seed(p) for p in ("gen-data", "split", "pretrain", "agent")}
    assert len(seeds) == 4
    assert cfg.phase_seed("agent") == RunConfig(seed=1).phase_seed("agent")
    assert cfg.phase_seed("agent") != RunConfig(seed=2).phase_seed("agent")


def test_config_roundtrip_and_errors():
    cfg = parse_config(TINY)
    assert cfg.size == 16 and cfg.episodes == 4
    assert parse_config(cfg.to_text()) == cfg
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("bogus = 1")
    with pytest.raises(ConfigError):
        parse_config("size = big")
    with pytest.raises(ConfigError):
        parse_config("n_samples = 3")


def test_run_layout(tiny_run):
    names = {str(p) for p in artifact_files(tiny_run)}
    for expected in ("config.txt", "data/manifest.jsonl", "checkpoints/pretrained.ckpt",
                     "checkpoints/agent.ckpt", "policy/curve.csv", "policy/traces.jsonl",
                     "augmented/learned/traces.jsonl", "report/report.csv", "report/report.txt"):
        assert expected in names
    for m in pipeline.METHODS:
        assert f"final/{m}/metrics.csv" in names and f"final/{m}/model.ckpt" in names
    header = (tiny_run / "report" / "report.csv").read_text().splitlines()[0]
    assert header == "seed,method,mIoU,DSC,PPV,SEN,CD,HD,ASD"


def test_augmented_sizes_and_replay(tiny_run):
    data = dataset.load_manifest(tiny_run / "data" / "manifest.jsonl", ("train",), phase="augment")
    by_id = {s.id: s for s in data}
    for m in ("traditional", "random", "learned"):
        recs = dataset.read_manifest_records(tiny_run / "augmented" / m / "manifest.jsonl")
        assert len(recs) == 2 * len(data)
        base = tiny_run / "augmented" / m
        for rec in recs:
            prov = rec["provenance"]
            if prov["kind"] != "augmented":
                continue
            src = by_id[prov["source"]]
            img, mask = dataset.replay_steps(src.image, src.mask, prov["steps"])
            assert np.array_equal(dataset.image_to_bytes(img), dataset.read_pgm(base / rec["image"]))
            assert np.array_equal(mask * 255, dataset.read_pgm(base / rec["mask"]))
    none = dataset.read_manifest_records(tiny_run / "augmented" / "none" / "manifest.jsonl")
    assert len(none) == len(data)


def test_cli_phases_deterministic(tiny_run, tiny_cfg, tmp_path):
    out = tmp_path / "b"
    common = ["--config", str(tiny_cfg), "--seed", "3", "--out", str(out)]
    for cmd in (["gen-data"], ["pretrain"], ["learn-policy"], ["augment"], ["train-final"],
                ["report"]):
        assert main(common + cmd) == 0, cmd
    a, b = artifact_files(tiny_run), artifact_files(out)
    assert a == b
    _, mismatch, errors = filecmp.cmpfiles(tiny_run, out, [str(p) for p in a], shallow=False)
    assert mismatch == [] and errors == []


def test_different_seed_differs(tiny_run, tiny_cfg, tmp_path):
    out = tmp_path / "c"
    assert main(["--config", str(tiny_cfg), "--seed", "4", "--out", str(out), "gen-data"]) == 0
    img = Path("data") / "images" / "s0000.pgm"
    assert (out / img).read_bytes() != (tiny_run / img).read_bytes()


def test_eval_subcommand(tiny_run, tmp_path):
    dest = tmp_path / "m.csv"
    ckpt = tiny_run / "final" / "none" / "model.ckpt"
    assert main(["--out", str(tiny_run), "eval", "--checkpoint", str(ckpt), "--dest", str(dest)]) == 0
    assert dest.read_bytes() == (tiny_run / "final" / "none" / "metrics.csv").read_bytes()


def test_report_pools_runs(tiny_run, tiny_cfg, tmp_path, capsys):
    other = tmp_path / "d"
    assert main(["--config", str(tiny_cfg), "--seed", "5", "--out", str(other), "run"]) == 0
    capsys.readouterr()
    assert main(["--out", str(tiny_run), "report", "--runs", str(other)]) == 0
    text = capsys.readouterr().out
    assert "Across 2 runs" in text and "learned > random" in text


def test_exit_codes(tiny_run, tiny_cfg, tmp_path):
    # missing prerequisites / files -> 2
    assert main(["--out", str(tmp_path / "empty"), "pretrain"]) == 2
    assert main(["--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "x"), "gen-data"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("frobnicate = 3\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "y"), "gen-data"]) == 2
    broken = tmp_path / "broken.ckpt"
    broken.write_bytes(b"garbage")
    assert main(["--out", str(tiny_run), "eval", "--checkpoint", str(broken),
                 "--dest", str(tmp_path / "z.csv")]) == 2
    # inconsistent reuse of an output directory -> 1
    assert main(["--config", str(tiny_cfg), "--seed", "99", "--out", str(tiny_run), "pretrain"]) == 1
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "rlaug", "--out", str(tmp_path / "q"), "report"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "gen-data first" in res.stderr
    res = subprocess.run([sys.executable, "-m", "rlaug", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("gen-data", "pretrain", "learn-policy", "augment", "train-final", "eval", "report"):
        assert cmd in res.stdout


def test_sign_test():
    assert pipeline.sign_test(5, 0) == 1 / 32
    assert pipeline.sign_test(4, 1) == 6 / 32
    assert pipeline.sign_test(0, 0) == 1.0
