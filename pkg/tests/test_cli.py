import json
import subprocess
import sys

import pytest

from harbias.cli import main
from harbias.experiment import read_results

from conftest import write_lara


def test_synth_enumerate_run_report(tmp_path, capsys):
    ds = tmp_path / "ds"
    assert main(["synth", "--out", str(ds), "--frames", "300", "--seed", "1"]) == 0
    assert "YF=4" in capsys.readouterr().out

    settings = tmp_path / "settings.json"
    assert main(["enumerate", "--dataset", str(ds), "--hm", "HM1", "HM4",
                 "--max-settings", "1", "--out", str(settings)]) == 0
    out = capsys.readouterr().out
    assert "HM4: 256 feasible, 1 selected" in out
    assert len(json.loads(settings.read_text())) == 2
    assert main(["enumerate", "--dataset", str(ds), "--verify", str(settings)]) == 0
    assert "2/2 settings verified" in capsys.readouterr().out

    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "dataset": {"root": "ds"}, "settings_file": "settings.json",
        "window": {"window_size": 50, "step": 25},
        "model": {"conv_layers_per_branch": 2, "filters": 4, "branch_fc_units": 8,
                  "fusion_fc_units": 8},
        "train": {"learning_rate": 0.001, "batch_size": 64, "max_epochs": 1},
        "trials_per_setting": 2}))
    results = tmp_path / "r.jsonl"
    assert main(["run", "--manifest", str(manifest), "--out", str(results)]) == 0
    assert len(read_results(results)) == 4
    assert main(["run", "--manifest", str(manifest), "--out", str(results)]) == 0
    assert len(read_results(results)) == 4
    capsys.readouterr()

    assert main(["report", "--in", str(results), "--group-by", "hm_subgroup",
                 "--out", str(tmp_path / "rep")]) == 0
    out = capsys.readouterr().out
    assert "HM1" in out and "HM4" in out
    assert (tmp_path / "rep" / "group_summary.csv").is_file()


def test_exit_codes(tmp_path, capsys):
    # data error: missing metadata
    (tmp_path / "empty").mkdir()
    assert main(["ingest", "--dataset", str(tmp_path / "empty")]) == 3
    # config error: malformed manifest
    (tmp_path / "m.json").write_text(json.dumps({"window": {"window_size": 10, "step": 5}}))
    assert main(["run", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "r")]) == 2
    # partial failures present
    recs = [{"setting_id": "a", "trial_index": 0, "hm": "HM1", "status": "ok", "accuracy": 0.5, "wf1": 0.5},
            {"setting_id": "a", "trial_index": 1, "hm": "HM1", "status": "failed", "error": "x"}]
    path = tmp_path / "r.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    assert main(["report", "--in", str(path)]) == 4
    # no successful records
    path.write_text(json.dumps(recs[1]) + "\n")
    assert main(["report", "--in", str(path)]) == 3
    assert main(["synth", "--out", str(tmp_path / "s"), "--profiles", "YF=1,OF=1"]) == 2


def test_ingest_converts_lara(tmp_path, capsys):
    root = write_lara(tmp_path / "lara", frames=20)
    assert main(["ingest", "--dataset", str(root), "--kind", "lara_omocap", "--downsample", "2",
                 "--out", str(tmp_path / "canon")]) == 0
    assert "100 Hz" in capsys.readouterr().out
    assert main(["ingest", "--dataset", str(tmp_path / "canon")]) == 0


def test_characteristics_reference(capsys):
    assert main(["characteristics", "--reference", "combined"]) == 0
    out = capsys.readouterr().out
    assert "redundant" in out and "chi2 = 5.216" in out
    assert main(["characteristics"]) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "harbias.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("ingest", "synth", "enumerate", "run", "report", "characteristics"):
        assert cmd in proc.stdout
