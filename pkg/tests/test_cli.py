import json

import pytest

from skillshift import cli

TINY = {
    "years": [2010, 2018],
    "min_ads": 100,
    "workers": 1,
    "training": {"dim": 16, "epochs": 2},
    "atom_grid": [4, 8],
    "atom_sparsity": 2,
    "atom_iterations": 3,
    "grid_rows": 3,
    "grid_cols": 3,
    "synth": {"n_skills": 240, "n_occupations": 6, "posts_per_occupation_year": 150, "pair_posts": 120,
              "n_bad_lines": 4},
}


def write_config(tmp_path, **extra):
    cfg = {**TINY, "postings": str(tmp_path / "p.jsonl"), "output_dir": str(tmp_path / "out"), **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    assert cli.main(["synth", "--config", str(cfg)]) == 0
    assert cli.main(["all", "--config", str(cfg)]) == 0
    return tmp


def test_all_writes_documented_artifacts(pipeline):
    out = pipeline / "out"
    for cmd in cli.PIPELINE:
        for name in cli.ARTIFACTS[cmd]:
            assert (out / name).exists(), name
        manifest = json.loads((out / f"manifest_{cmd}.json").read_text())
        assert manifest["command"] == cmd and len(manifest["config_hash"]) == 64
        assert all(len(d) == 64 for d in manifest["inputs"].values())
    assert (pipeline / "p.manifest.json").exists()


def test_ingest_reports_bad_lines(pipeline):
    errors = (pipeline / "out/ingest/errors.jsonl").read_text().splitlines()
    assert len(errors) == 4
    assert {"line", "reason"} <= set(json.loads(errors[0]))


def test_help_lists_artifacts(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for files in cli.ARTIFACTS.values():
        for name in files:
            assert name in text


def test_missing_artifact_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg)]) == 3
    assert last_error(capsys)["exit_code"] == 3


def test_bad_years_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, years=[2018, 2010])
    assert cli.main(["ingest", "--config", str(cfg)]) == 2
    err = last_error(capsys)
    assert err["error"] == "ConfigError" and "t0 < t1" in err["message"]


def test_unknown_field_and_missing_input(tmp_path, capsys):
    assert cli.main(["ingest", "--set", "bogus=1"]) == 2
    assert cli.main(["ingest", "--postings", str(tmp_path / "nope.jsonl")]) == 2
    assert last_error(capsys)["exit_code"] == 2


def test_corrupt_input_exit_code(tmp_path, capsys):
    (tmp_path / "p.jsonl").write_text("garbage\nmore garbage\n")
    cfg = write_config(tmp_path)
    assert cli.main(["ingest", "--config", str(cfg)]) == 4
    assert last_error(capsys)["error"] == "CorruptInput"


def test_flag_overrides_config(tmp_path):
    cfg = cli.load_config(write_config(tmp_path), {"seed": 9, "core_quantile": 0.5})
    assert cfg.seed == 9 and cfg.core_quantile == 0.5
    assert cfg.training_config().seed == 9


def test_optional_tables(pipeline):
    out = pipeline / "out"
    occs = [r.split(",")[0] for r in (out / "drift/change_report.csv").read_text().splitlines()[1:]]
    (pipeline / "demo.csv").write_text("occupation,group,occupation_share,labor_force_share\n"
                                       + "".join(f"{o},women,0.8,0.5\n{o},men,0.2,0.5\n" for o in occs))
    (pipeline / "zones.csv").write_text("occupation,zone\n" + "".join(f"{o},{1 + i % 5}\n" for i, o in enumerate(occs)))
    (pipeline / "mob.csv").write_text("occ_i,occ_j,transition_count\n"
                                      + "".join(f"{a},{b},{i + j}\n" for i, a in enumerate(occs)
                                                for j, b in enumerate(occs) if a != b))
    (pipeline / "labels.csv").write_text("atom_id,label\n0,human\n1,machine\n")
    cfg = write_config(pipeline, demographics=str(pipeline / "demo.csv"), job_zones=str(pipeline / "zones.csv"),
                       mobility=str(pipeline / "mob.csv"), atom_labels=str(pipeline / "labels.csv"))
    assert cli.main(["atoms", "--config", str(cfg)]) == 0
    assert cli.main(["strata", "--config", str(cfg)]) == 0
    for name in ("atoms/atom_label_tally.csv", "strata/demographic_dominance.csv", "strata/demographic_heatmap.csv",
                 "strata/job_zone_correlation.csv", "strata/mobility_validation.csv"):
        assert (out / name).exists(), name
    rows = (out / "strata/demographic_dominance.csv").read_text().splitlines()
    assert any(r.endswith(",women,1.6,1") for r in rows)
