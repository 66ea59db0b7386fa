import json

import pytest

from compmech.cli import main
from compmech.dataset import read_records
from compmech.manifest import RunManifest, file_digest


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_build_dataset(tmp_path, tiny_dir, bank_path, capsys):
    out = tmp_path / "ds"
    assert run_cli("build-dataset", "--input", bank_path, "--out-dir", out, "--model-dir", tiny_dir) == 0
    printed = capsys.readouterr().out
    assert "duplicates=1" in printed and "multi_token=1" in printed
    kept = read_records(out / "filtered.jsonl")
    rejected = [json.loads(line) for line in open(out / "rejections.jsonl")]
    n_input = sum(1 for _ in open(bank_path))
    assert len(kept) + len(rejected) == n_input
    assert {r["stage"] for r in rejected} <= {"dedupe", "single-token", "base-factual", "full-binary"}
    manifest = RunManifest.read(out / "manifest.json")
    assert manifest.status == "ok" and manifest.verify()
    assert manifest.dataset_digest == file_digest(bank_path)
    assert manifest.model_digest == file_digest(tiny_dir / "model.safetensors")


def test_build_dataset_empty_input(tmp_path, tiny_dir, caplog):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "ds"
    assert run_cli("build-dataset", "--input", empty, "--out-dir", out, "--model-dir", tiny_dir) == 0
    assert "no records" in caplog.text
    assert (out / "filtered.jsonl").read_text() == ""


def test_build_dataset_errors(tmp_path, tiny_dir, bank_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    assert run_cli("build-dataset", "--input", bad, "--out-dir", tmp_path / "x", "--model-dir", tiny_dir) == 1
    assert run_cli("build-dataset", "--input", bank_path, "--out-dir", tmp_path / "y",
                   "--model-dir", tmp_path / "nowhere") == 1


def test_unknown_kind_is_usage_error():
    with pytest.raises(SystemExit) as info:
        run_cli("run", "telepathy")
    assert info.value.code == 2


def test_invalid_config_exit_code(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[dataset]\nbogus = true\n")
    assert run_cli("run", "ablation", "--config", cfg) == 2


@pytest.mark.parametrize("kind,artifact", [
    ("logit-inspection", "logit_inspection.csv"),
    ("block-attrib", "block_attribution.csv"),
    ("head-attrib", "head_attribution.csv"),
    ("ablation", "ablation_summary.json"),
    ("premise-sweep", "premise_sweep.json"),
])
def test_run_each_kind(tmp_path, tiny_dir, bank_path, kind, artifact):
    out = tmp_path / "run"
    code = run_cli("run", kind, "--model-dir", tiny_dir, "--dataset", bank_path, "--output-dir", out,
                   "--set", 'interventions=["L1H0:5"]', "--set", "dataset.by_domain=true")
    assert code == 0
    assert (out / artifact).is_file()
    manifest = RunManifest.read(out / "manifest.json")
    assert str(out / artifact) in manifest.artifacts and manifest.verify()
    assert manifest.config_hash.startswith("sha256:")
    assert manifest.model_digest == file_digest(tiny_dir / "model.safetensors")


def test_runs_are_reproducible(tmp_path, tiny_dir, bank_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("run", "head-attrib", "--model-dir", tiny_dir, "--dataset", bank_path, "--output-dir", out) == 0
        outs.append(out)
    for f in ("head_attribution.csv", "head_attribution.meta.json", "head_ranking.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_config_file_with_relative_paths(tmp_path, tiny_dir, bank_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(f'[model]\ndir = "{tiny_dir}"\n[dataset]\npath = "{bank_path}"\n[run]\noutput_dir = "res"\n')
    assert run_cli("run", "ablation", "--config", cfg) == 0
    assert (tmp_path / "res" / "ablation_summary.json").is_file()
    manifest = RunManifest.read(tmp_path / "res" / "manifest.json")
    assert manifest.config_path == str(cfg)


def test_failed_run_writes_flagged_manifest(tmp_path, bank_path):
    out = tmp_path / "run"
    assert run_cli("run", "ablation", "--model-dir", tmp_path / "missing", "--dataset", bank_path,
                   "--output-dir", out) == 1
    manifest = RunManifest.read(out / "manifest.json")
    assert manifest.status == "failed"
    assert any("aborted" in n for n in manifest.notes)


def test_plot_grid_is_deterministic(tmp_path, tiny_dir, bank_path):
    out = tmp_path / "run"
    run_cli("run", "logit-inspection", "--model-dir", tiny_dir, "--dataset", bank_path, "--output-dir", out)
    csv_path = out / "logit_inspection.csv"
    assert run_cli("plot", csv_path, "--out", tmp_path / "a.svg") == 0
    assert run_cli("plot", csv_path, "--out", tmp_path / "b.svg") == 0
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert a == b and a.startswith(b"<?xml")


@pytest.mark.parametrize("kind,artifact,extra", [
    ("block-attrib", "block_attribution.csv", []),
    ("head-attrib", "head_attribution.csv", []),
    ("ablation", "ablation_summary.json", ["--set", "dataset.by_domain=true"]),
    ("premise-sweep", "premise_sweep.json", ["--set", 'interventions=["L1H0:5"]']),
])
def test_plot_other_artifacts(tmp_path, tiny_dir, bank_path, kind, artifact, extra):
    out = tmp_path / "run"
    assert run_cli("run", kind, "--model-dir", tiny_dir, "--dataset", bank_path, "--output-dir", out, *extra) == 0
    assert run_cli("plot", out / artifact) == 0
    assert (out / artifact).with_suffix(".svg").is_file()


def test_plot_schema_mismatch(tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    assert run_cli("plot", bad) == 1
    assert run_cli("plot", bad, "--kind", "grid") == 1
    assert run_cli("plot", tmp_path / "absent.csv") == 1
