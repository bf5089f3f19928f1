import io
from pathlib import Path

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from main import cli

ROOT = Path(__file__).resolve().parent.parent
CROSSING = str(ROOT / "scenarios" / "crossing.yml")
PAN8 = str(ROOT / "scenarios" / "pan8.yml")


@pytest.fixture
def runner():
    return CliRunner()


def write_yaml(path, mapping):
    path.write_text(yaml.safe_dump(mapping), encoding="utf-8")
    return str(path)


def small_scenario(tmp_path, name="small", objects=3, frames=20):
    return write_yaml(tmp_path / f"{name}.yml", {
        "name": name, "frames": frames, "random_objects": objects,
        "noise_alpha": 0.05, "miss_rate": 0.1, "camera.pan": "4, 0",
    })


def slow_walkers(tmp_path):
    return write_yaml(tmp_path / "walkers.yml", {
        "name": "walkers", "frames": 30,
        "object.1.start": "100, 200, 40, 100", "object.1.velocity": "2, 0",
        "object.2.start": "600, 250, 60, 150", "object.2.velocity": "-1, 1",
    })


def simulate(runner, scenario, out, seed=None):
    args = ["simulate", "--scenario", scenario, "--out", str(out), "--quiet"]
    if seed is not None:
        args += ["--seed", str(seed)]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    return out


def read_csv(source):
    return pd.read_csv(source, dtype=str, keep_default_na=False).to_dict("records")


def test_simulate_writes_sequence(runner, tmp_path):
    seq = simulate(runner, CROSSING, tmp_path / "crossing")
    assert (seq / "det" / "det.txt").read_text().strip()
    assert (seq / "gt" / "gt.txt").read_text().strip()
    assert "seqLength = 60" in (seq / "seqinfo.ini").read_text()


def test_track_then_eval(runner, tmp_path):
    seq = simulate(runner, slow_walkers(tmp_path), tmp_path / "walkers")
    tracks = tmp_path / "tracks.txt"
    result = runner.invoke(cli, ["track", "-d", str(seq / "det" / "det.txt"), "-o", str(tracks),
                                 "--dump-overlays", "--quiet"])
    assert result.exit_code == 0, result.output
    assert tracks.read_text().strip()
    overlays = (tmp_path / "tracks.overlays.csv").read_text().splitlines()
    assert overlays[0] == "frame,id,x,y,w,h,provenance"
    assert {line.rsplit(",", 1)[1] for line in overlays[1:]} <= {"detection", "averaged", "virtual"}

    report = tmp_path / "report.csv"
    result = runner.invoke(cli, ["eval", "--gt", str(seq / "gt" / "gt.txt"), "--tracks", str(tracks),
                                 "--out", str(report)])
    assert result.exit_code == 0, result.output
    (row,) = read_csv(report)
    assert row["Sequence"] == "walkers"
    assert 50.0 < float(row["MOTA"]) <= 100.0


def test_track_several_sequences_into_directory(runner, tmp_path):
    first = simulate(runner, small_scenario(tmp_path, "alpha"), tmp_path / "alpha")
    second = simulate(runner, small_scenario(tmp_path, "beta"), tmp_path / "beta")
    out = tmp_path / "tracks"
    result = runner.invoke(cli, ["track", "-q", "-d", str(first / "det" / "det.txt"),
                                 "-d", str(second / "det" / "det.txt"), "-o", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "alpha.txt").exists() and (out / "beta.txt").exists()

    report = tmp_path / "report.csv"
    result = runner.invoke(cli, ["eval", "--gt", str(first / "gt" / "gt.txt"), "--tracks", str(out / "alpha.txt"),
                                 "--gt", str(second / "gt" / "gt.txt"), "--tracks", str(out / "beta.txt"),
                                 "--csv", "--out", str(report)])
    assert result.exit_code == 0, result.output
    assert [r["Sequence"] for r in read_csv(report)] == ["alpha", "beta", "OVERALL"]


def test_missing_config_key_exits_3(runner, tmp_path):
    seq = simulate(runner, CROSSING, tmp_path / "crossing")
    config = yaml.safe_load((ROOT / "config.yml").read_text())
    del config["b22.2"]
    result = runner.invoke(cli, ["track", "-q", "-c", write_yaml(tmp_path / "cfg.yml", config),
                                 "-d", str(seq / "det" / "det.txt"), "-o", str(tmp_path / "t.txt")])
    assert result.exit_code == 3
    assert "b22.2" in result.output


def test_unknown_config_key_exits_3(runner, tmp_path):
    seq = simulate(runner, CROSSING, tmp_path / "crossing")
    config = yaml.safe_load((ROOT / "config.yml").read_text())
    config["k_inti"] = 3
    result = runner.invoke(cli, ["track", "-q", "-c", write_yaml(tmp_path / "cfg.yml", config),
                                 "-d", str(seq / "det" / "det.txt"), "-o", str(tmp_path / "t.txt")])
    assert result.exit_code == 3
    assert "k_inti" in result.output


def test_missing_file_exits_2(runner, tmp_path):
    result = runner.invoke(cli, ["track", "-q", "-d", str(tmp_path / "missing.txt"), "-o", str(tmp_path / "t.txt")])
    assert result.exit_code == 2
    assert "missing.txt" in result.output


def test_malformed_detections_exit_2(runner, tmp_path):
    det = tmp_path / "det.txt"
    det.write_text("1,-1,0,0,10,10,1\n2,-1,0,0,-4,10,1\n")
    result = runner.invoke(cli, ["track", "-q", "-d", str(det), "-o", str(tmp_path / "t.txt")])
    assert result.exit_code == 2
    assert "det.txt:2:" in result.output


def test_bad_scenario_value_exits_3(runner, tmp_path):
    scenario = write_yaml(tmp_path / "bad.yml", {"frames": "abc", "random_objects": 2})
    result = runner.invoke(cli, ["simulate", "-q", "--scenario", scenario, "--out", str(tmp_path / "seq")])
    assert result.exit_code == 3
    assert "frames" in result.output


def test_fractional_config_integer_exits_3(runner, tmp_path):
    config = yaml.safe_load((ROOT / "config.yml").read_text())
    config["k_init"] = 2.5
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", small_scenario(tmp_path), "--seeds", "1",
                                 "-c", write_yaml(tmp_path / "cfg.yml", config)])
    assert result.exit_code == 3
    assert "k_init" in result.output


def test_invalid_oracle_box_exits_2(runner, tmp_path):
    seq = simulate(runner, slow_walkers(tmp_path), tmp_path / "walkers")
    oracle = tmp_path / "displacement.csv"
    oracle.write_text("walkers,2,100,200,40,100,0,1.0\nwalkers,2,100,200,0,100,1,1.0\n")
    result = runner.invoke(cli, ["track", "-q", "-d", str(seq / "det" / "det.txt"), "-o", str(tmp_path / "t.txt"),
                                 "--displacement-provider", "oracle", "--oracle", str(oracle)])
    assert result.exit_code == 2
    assert "displacement.csv:2:" in result.output


def test_bad_seqinfo_value_exits_2(runner, tmp_path):
    seq = simulate(runner, slow_walkers(tmp_path), tmp_path / "walkers")
    ini = seq / "seqinfo.ini"
    ini.write_text(ini.read_text().replace("seqLength = 30", "seqLength = thirty"))
    result = runner.invoke(cli, ["track", "-q", "-d", str(seq / "det" / "det.txt"), "-o", str(tmp_path / "t.txt")])
    assert result.exit_code == 2
    assert "seqinfo.ini" in result.output


def test_truth_provider_without_gt_exits_3(runner, tmp_path):
    seq = simulate(runner, CROSSING, tmp_path / "crossing")
    result = runner.invoke(cli, ["track", "-q", "-d", str(seq / "det" / "det.txt"), "-o", str(tmp_path / "t.txt"),
                                 "--similarity-provider", "truth"])
    assert result.exit_code == 3


@pytest.mark.parametrize("args", [
    ["ablate", "--scenario", CROSSING, "--modes", "asymmetric,sideways"],
    ["track", "-d", CROSSING, "-o", "t.txt", "--pairwise-mode", "sideways"],
    ["eval", "--gt", CROSSING],
    ["track", "-d", CROSSING, "-d", CROSSING, "-g", CROSSING, "-o", "out"],
])
def test_usage_errors_exit_1(runner, args):
    assert runner.invoke(cli, args).exit_code == 1


def test_bad_sweep_exits_3(runner, tmp_path):
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", small_scenario(tmp_path), "--seeds", "1",
                                 "--sweep", "gamma=1,2"])
    assert result.exit_code == 3


def test_ablate_is_deterministic(runner, tmp_path):
    scenario = small_scenario(tmp_path)
    outputs = []
    for k in range(2):
        out = tmp_path / f"ablate{k}.csv"
        result = runner.invoke(cli, ["ablate", "-q", "--scenario", scenario, "--seeds", "2", "--out", str(out)])
        assert result.exit_code == 0, result.output
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]
    assert [r["Variant"] for r in read_csv(tmp_path / "ablate0.csv")] == ["asymmetric", "symmetric_gaussian", "none"]


def test_ablate_sweep_labels(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", small_scenario(tmp_path, frames=10), "--seeds", "1",
                                 "--sweep", "k_init=2,3", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert [r["Variant"] for r in read_csv(out)] == ["asymmetric k_init=2", "asymmetric k_init=3"]


def test_track_and_eval_match_single_seed_ablation(runner, tmp_path):
    seed = 5
    seq = simulate(runner, CROSSING, tmp_path / "crossing", seed=seed)
    tracks = tmp_path / "tracks.txt"
    result = runner.invoke(cli, ["track", "-q", "-d", str(seq / "det" / "det.txt"), "-g", str(seq / "gt" / "gt.txt"),
                                 "-o", str(tracks), "--pairwise-mode", "asymmetric", "--seed", str(seed),
                                 "--displacement-provider", "noisy-truth", "--similarity-provider", "truth"])
    assert result.exit_code == 0, result.output
    report = tmp_path / "report.csv"
    result = runner.invoke(cli, ["eval", "--gt", str(seq / "gt" / "gt.txt"), "--tracks", str(tracks),
                                 "--out", str(report)])
    assert result.exit_code == 0, result.output

    ablation = tmp_path / "ablate.csv"
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", CROSSING, "--modes", "asymmetric",
                                 "--seeds", "1", "--seed", str(seed), "--out", str(ablation)])
    assert result.exit_code == 0, result.output

    (tracked,) = read_csv(report)
    (ablated,) = read_csv(ablation)
    for column in ("MOTA", "MOTP", "FP", "FN", "IDSW", "Frag"):
        assert tracked[column] == ablated[column], column


def test_ablate_csv_on_stdout(runner, tmp_path):
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", small_scenario(tmp_path, frames=10), "--seeds", "1",
                                 "--modes", "none", "--csv"])
    assert result.exit_code == 0, result.output
    tail = result.output[result.output.index("Variant,"):]
    (row,) = read_csv(io.StringIO(tail))
    assert row["Variant"] == "none"


@pytest.mark.slow
def test_pairwise_modes_order_with_shipped_config(runner, tmp_path):
    out = tmp_path / "ablate.csv"
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", PAN8, "-c", str(ROOT / "config.yml"),
                                 "--seeds", "20", "--out", str(out)])
    assert result.exit_code == 0, result.output
    mota = {r["Variant"]: float(r["MOTA"]) for r in read_csv(out)}
    assert mota["asymmetric"] >= mota["symmetric_gaussian"] >= mota["none"]


@pytest.mark.slow
def test_pairwise_terms_recover_failed_evidence(runner, tmp_path):
    config = yaml.safe_load((ROOT / "config.yml").read_text())
    config["evidence_failure_rate"] = 0.2
    out = tmp_path / "ablate.csv"
    result = runner.invoke(cli, ["ablate", "-q", "--scenario", PAN8, "-c", write_yaml(tmp_path / "cfg.yml", config),
                                 "--seeds", "20", "--out", str(out)])
    assert result.exit_code == 0, result.output
    mota = {r["Variant"]: float(r["MOTA"]) for r in read_csv(out)}
    assert mota["asymmetric"] >= mota["none"]
    assert mota["symmetric_gaussian"] >= mota["none"]
