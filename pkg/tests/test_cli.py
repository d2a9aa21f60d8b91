import json
import shutil

import numpy as np
import pytest

from gazeprint.cli import main
from gazeprint.core import load_manifest, serialize_events
from gazeprint.dissimilarity import parse_matrix
from gazeprint.fdm import parse_fdm
from gazeprint.synth import generate_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = generate_dataset(root / "data", seed=11, trials=2, weeks=("1",))
    return root, paths


@pytest.fixture(scope="module")
def pipeline_run(dataset):
    root, paths = dataset
    cfg = {"dataset": ["data/*.manifest.json"], "output_dir": "run", "grid_n": 32}
    (root / "pipe.json").write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(root / "pipe.json")]) == 0
    return root / "run"


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["dissim", "x.csv"]) == 2  # --metric is required
    assert main(["dissim", "x.csv", "--metric", "cosine"]) == 2
    assert main(["pipeline"]) == 2


def test_missing_input_exits_3(tmp_path, capsys):
    assert main(["fixations", str(tmp_path / "nope.manifest.json")]) == 3
    assert main(["dft", str(tmp_path / "nope.csv")]) == 3
    bad = tmp_path / "m.csv"
    bad.write_text("not a matrix\n")
    assert main(["evaluate", str(bad)]) == 3


def test_single_subject_evaluation_exits_4(tmp_path, capsys):
    m = tmp_path / "m.csv"
    m.write_text("# metric=mse\n,A:1:1,A:1:2\nA:1:1,0,0.5\nA:1:2,0.5,0\n")
    assert main(["evaluate", str(m)]) == 4


def test_subcommands_compose_to_pipeline_output(dataset, pipeline_run, tmp_path):
    root, paths = dataset
    feats = []
    for p in paths:
        slug = p.name.replace(".manifest.json", "")
        fx, rc, fdm, dft = (tmp_path / f"{slug}.{k}.csv" for k in ("fix", "recal", "fdm", "dft"))
        assert main(["fixations", str(p), "--out", str(fx)]) == 0
        assert fx.read_bytes() == (pipeline_run / "fixations" / f"{slug}.csv").read_bytes()
        tf = tmp_path / f"{slug}.json"
        assert main(["recalibrate", str(p), "--fixations", str(fx), "--out", str(rc),
                     "--transform-out", str(tf)]) == 0
        assert rc.read_bytes() == (pipeline_run / "fixations_recal" / f"{slug}.csv").read_bytes()
        assert tf.read_bytes() == (pipeline_run / "transforms" / f"{slug}.json").read_bytes()
        assert main(["fdm", str(p), "--fixations", str(fx), "--grid-n", "32", "--out", str(fdm)]) == 0
        assert fdm.read_bytes() == (pipeline_run / "fdm" / f"{slug}.csv").read_bytes()
        assert main(["dft", str(fdm), "--out", str(dft)]) == 0
        assert dft.read_bytes() == (pipeline_run / "dft" / f"{slug}.csv").read_bytes()
        feats.append(dft)
    mat = tmp_path / "dft_eucl.csv"
    assert main(["dissim", *map(str, feats), "--metric", "eucl", "--domain", "dft", "--out", str(mat)]) == 0
    assert mat.read_bytes() == (pipeline_run / "matrices" / "dft_eucl_all.csv").read_bytes()
    curve, rep = tmp_path / "curve.csv", tmp_path / "rep.json"
    assert main(["evaluate", str(mat), "--curve-out", str(curve), "--out", str(rep)]) == 0
    assert curve.read_bytes() == (pipeline_run / "curves" / "dft_eucl_all.csv").read_bytes()
    ours = json.loads(rep.read_text())
    theirs = json.loads((pipeline_run / "reports" / "dft_eucl_all.json").read_text())
    assert all(theirs[k] == v for k, v in ours.items())


def test_pipeline_tables(pipeline_run):
    summary = (pipeline_run / "summary.csv").read_text().splitlines()
    assert summary[0] == "domain,metric,1_acc,1_auc,1_eer,all_acc,all_auc,all_eer"
    assert len(summary) == 1 + 16
    assert (pipeline_run / "excluded.csv").read_text() == "trial,domain,reason\n"
    assert len((pipeline_run / "recalibration.csv").read_text().splitlines()) == 5
    for name in ("records", "stats_all", "stats_direction", "stats_trial"):
        assert (pipeline_run / "ttt" / f"{name}.csv").exists()
    cfg = json.loads((pipeline_run / "config.json").read_text())
    assert cfg["grid_n"] == 32


def test_dissim_kld_on_three_spectra(pipeline_run, tmp_path):
    files = sorted((pipeline_run / "dft").glob("*.csv"))[:3]
    out = tmp_path / "k.csv"
    assert main(["dissim", *map(str, files), "--metric", "kld", "--domain", "dft'", "--out", str(out)]) == 0
    m = parse_matrix(out.read_bytes())
    assert m.values.shape == (3, 3) and m.metric_tag == "kld"
    assert np.all(np.diag(m.values) == 0)


def test_ttt_subcommand(dataset, tmp_path):
    _, paths = dataset
    out = tmp_path / "t"
    assert main(["ttt", *map(str, paths[:2]), "--radius-deg", "3", "--out-dir", str(out)]) == 0
    rows = (out / "records.csv").read_text().splitlines()
    assert rows[0] == "trial,event_index,latency,direction" and len(rows) > 100
    assert (out / "stats_direction.csv").read_text().splitlines()[0] == "group,n,mean,median,sigma"
    assert len((out / "stats_trial.csv").read_text().splitlines()) == 3


def test_fdm_only_domain_writes_no_spectra(dataset, tmp_path):
    root, _ = dataset
    cfg = {"dataset": [str(root / "data")], "output_dir": str(tmp_path / "o"),
           "domains": ["fdm"], "metrics": ["mse"], "grid_n": 16}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(tmp_path / "c.json")]) == 0
    out = tmp_path / "o"
    assert not (out / "dft").exists() and not (out / "dft_recal").exists()
    assert not (out / "fdm_recal").exists()
    assert sorted(p.name for p in (out / "matrices").iterdir()) == ["fdm_mse_1.csv", "fdm_mse_all.csv"]


def test_excluded_trials_are_accounted_for(dataset, tmp_path):
    root, paths = dataset
    data = tmp_path / "data"
    shutil.copytree(root / "data", data)
    # an extra trial whose events contain no blank epoch has nothing to map
    man = load_manifest(data / "A_1_1.manifest.json")
    events = [e for e in man.load_events() if e.kind.value == "target"]
    (data / "A_1_9.events.csv").write_text(serialize_events(events))
    shutil.copy(data / "A_1_1.trace.csv", data / "A_1_9.trace.csv")
    doc = json.loads(man.to_json())
    doc.update(trial_index=9, trace_path="A_1_9.trace.csv", events_path="A_1_9.events.csv")
    (data / "A_1_9.manifest.json").write_text(json.dumps(doc))
    n_manifests = len(list(data.glob("*.manifest.json")))
    cfg = {"dataset": [str(data)], "output_dir": str(tmp_path / "o"), "metrics": ["mse"], "grid_n": 16}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(tmp_path / "c.json")]) == 0
    excluded = (tmp_path / "o" / "excluded.csv").read_text().splitlines()[1:]
    for d in ("fdm", "fdm_recal", "dft", "dft_recal"):
        m = parse_matrix((tmp_path / "o" / "matrices" / f"{d}_mse_all.csv").read_bytes())
        gone = [row for row in excluded if row.split(",")[1] == d]
        assert gone == [f"A:1:9,{d},empty fdm"]
        assert m.size + len(gone) == n_manifests


def test_config_supplies_defaults(dataset, tmp_path):
    root, paths = dataset
    fx = tmp_path / "f.csv"
    assert main(["fixations", str(paths[0]), "--out", str(fx)]) == 0
    (tmp_path / "c.json").write_text(json.dumps({"grid_n": 16, "sigma": 0.0}))
    out = tmp_path / "m.csv"
    assert main(["--config", str(tmp_path / "c.json"), "fdm", str(paths[0]), "--fixations", str(fx),
                 "--out", str(out)]) == 0
    assert parse_fdm(out.read_bytes()).grid.shape == (16, 16)
    # explicit flags win over the config file
    assert main(["fdm", str(paths[0]), "--fixations", str(fx), "--config", str(tmp_path / "c.json"),
                 "--grid-n", "24", "--out", str(out)]) == 0
    assert parse_fdm(out.read_bytes()).grid.shape == (24, 24)


def test_synth_subcommand(tmp_path, capsys):
    assert main(["synth", "--seed", "3", "--out", str(tmp_path), "--trials", "1", "--weeks", "2",
                 "--write-presets"]) == 0
    assert (tmp_path / "profile_A.json").exists()
    assert sorted(p.name for p in tmp_path.glob("*.manifest.json")) == ["A_2_1.manifest.json",
                                                                        "B_2_1.manifest.json"]
    prof = tmp_path / "p.json"
    prof.write_text((tmp_path / "profile_B.json").read_text())
    out = tmp_path / "o"
    assert main(["synth", "--seed", "3", "--out", str(out), "--trials", "1", "--weeks", "1",
                 "--profile", f"C={prof}", "--profile", f"D={prof}"]) == 0
    assert sorted(p.name for p in out.glob("*.manifest.json")) == ["C_1_1.manifest.json", "D_1_1.manifest.json"]
    assert main(["synth", "--seed", "3", "--out", str(out), "--profile", "C"]) == 2
