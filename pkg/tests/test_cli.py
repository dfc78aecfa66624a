import json
import subprocess
import sys

import pytest

from smlsbm.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from smlsbm.config import ConfigError, load_config, parse_config, preset


def test_presets_and_hash():
    assert preset("fig3").c == 20 and preset("fig3").s == 3
    f4 = preset("fig4-L100")
    assert f4.c == 16 and f4.layer_counts == [100] and f4.gap1 == 10
    assert preset("microbiome").threshold == 0.2
    assert preset("fig3").hash() == preset("fig3").hash()
    assert preset("fig3").hash() != preset("fig4").hash()
    with pytest.raises(ConfigError):
        preset("fig5")


def test_parse_config_overrides_preset():
    cfg = parse_config("""
[experiment]
preset = fig4-L10
seed = 7
[generator]
gaps = 2, 18
[inference]
s = auto
""")
    assert cfg.kind == "fig4" and cfg.seed == 7 and cfg.gaps == [2.0, 18.0]
    assert cfg.layer_counts == [10] and cfg.s is None


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[experiment]\ncolour = red\n",
    "[experiment]\nkind = fig9\n",
    "[generator]\nlayers = 11\n",
    "[experiment]\nreplicates = two\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_generate_is_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["generate", "--config", "fig3", "--seed", "3", "--out-dir", str(tmp_path / d)]) == EXIT_OK
    for f in ("network.json", "network.csv", "ground_truth.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    out = capsys.readouterr().out
    assert "N=128 L=30 S=3" in out
    truth = json.loads((tmp_path / "a" / "ground_truth.json").read_text())
    assert truth["meta"]["seed"] == 3 and len(truth["y"]) == 30


def test_generate_infeasible(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\nkind = generate\n[generator]\nc = 20\nstrata = 0.9\n")
    assert main(["generate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_USAGE
    assert "p_out" in capsys.readouterr().err


def test_fit_models(tmp_path, capsys):
    main(["generate", "--config", "fig3", "--seed", "1", "--out-dir", str(tmp_path)])
    net = str(tmp_path / "network.json")
    assert main(["fit", net, "--out-dir", str(tmp_path / "m")]) == EXIT_OK
    doc = json.loads((tmp_path / "m" / "model.json").read_text())
    assert doc["assignment"]["n_strata"] == 3 and doc["converged"]
    assert main(["fit", net, "--model", "single-sbm", "--k", "4", "--out-dir", str(tmp_path / "s")]) == EXIT_OK
    single = json.loads((tmp_path / "s" / "model.json").read_text())
    assert single["k"] == 4 and len(single["pi"]) == 10


def test_fit_exit_codes(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "missing.json")]) == EXIT_IO
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["fit", "x.json", "--s", "zero"])
    assert exc.value.code == EXIT_USAGE
    bad = tmp_path / "bad.csv"
    bad.write_text("a,x,x\n")
    assert main(["fit", str(bad)]) == EXIT_IO


def test_experiment_rerun_identical(tmp_path):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text("[experiment]\npreset = fig4-L10\nreplicates = 1\n[generator]\ngaps = 18\n")
    for d in ("a", "b"):
        assert main(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path / d)]) == EXIT_OK
    for f in ("fig4_results.csv", "fig4_aggregate.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    text = (tmp_path / "a" / "fig4_results.csv").read_text()
    assert text.startswith("# smlsbm-results v1 config_hash=")
    assert "kmeans_adjacency,strata_nmi" in text


def test_experiment_failure_is_recorded(tmp_path, monkeypatch):
    from smlsbm import experiments

    def boom(*args):
        raise FloatingPointError("synthetic failure")

    monkeypatch.setattr(experiments, "run_fig4_replicate", boom)
    cfg = load_config("fig4-L10")
    tasks = experiments.tasks_for(cfg)[:2]
    rows = experiments.run_experiment(cfg, tasks=tasks)
    assert len(rows) == 2 and all(r.status.startswith("error: FloatingPointError") for r in rows)


def microbiome_file(tmp_path):
    lines = []
    groups = {"saliva": 0, "hard_palate": 0, "tongue_dorsum": 0, "stool": 1, "anterior_nares": 1}
    for layer, g in groups.items():
        for i in range(12):
            for j in range(i + 1, 12):
                same = (i < 6) == (j < 6)
                w = 0.6 if (same if g == 0 else (i % 2 == j % 2)) else 0.05
                lines.append(f"{layer},otu{i},otu{j},{w}")
    lines.append("stool,otu0,otu99,0.9")
    p = tmp_path / "net.csv"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_microbiome_pipeline(tmp_path, capsys):
    p = microbiome_file(tmp_path)
    out = tmp_path / "out"
    code = main(["microbiome", str(p), "--s", "2", "--k", "2", "--out-dir", str(out)])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "L=5 layers, N=12 nodes" in text  # otu99 occurs in one layer only
    rows = dict(line.split(",") for line in (out / "strata.csv").read_text().split()[1:])
    assert rows["saliva"] == rows["hard_palate"] == rows["tongue_dorsum"] != rows["stool"]
    dend = json.loads((out / "dendrogram.json").read_text())
    assert dend["n_leaves"] == 5
    samples = json.loads((out / "stratum_samples.json").read_text())
    assert set(samples["edges"]) == {"1", "2"}


def test_microbiome_threshold_too_high(tmp_path, capsys):
    code = main(["microbiome", str(microbiome_file(tmp_path)), "--threshold", "1.1",
                 "--out-dir", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert "no edge reaches threshold" in err
    assert code == EXIT_IO  # nothing survives the layer filter


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "smlsbm.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "smlsbm" in res.stdout
