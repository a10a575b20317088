import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crem import cli
from crem.acceptance import acceptance_batch_config, acceptance_suite, run_criterion
from crem.batch import CSV_COLUMNS, ExperimentConfig, GridPoint, load_config, parse_config, rows_to_csv, run_batch
from crem.errors import ConfigParseError
from crem.partition import log_partition
from crem.profile import builtin_profile
from crem.sampler import sample_tree


def _doc(**over):
    doc = {"profile": "lin", "quantity": "negmoment", "reps": 200, "seed": 5, "grid": [{"N": 6, "beta": 0.4, "s": 1.0}]}
    doc.update(over)
    return doc


def test_config_rejects_k_above_N():
    doc = _doc(grid=[{"N": 6, "beta": 0.4, "s": 1.0}, {"N": 4, "k": 5, "eps": 0.5, "quantity": "lefttail"}])
    with pytest.raises(ConfigParseError, match="grid row 1"):
        parse_config(doc)


@pytest.mark.parametrize(
    "grid",
    [
        [{"beta": 0.4, "s": 1.0}],
        [{"N": 6, "beta": 0.4}],
        [{"N": 6, "beta": 0.4, "s": 1.0, "colour": 3}],
        [{"N": 30, "beta": 0.4, "s": 1.0}],
        [{"N": 6, "eps": 1.5, "quantity": "lefttail"}],
        [{"N": 6, "quantity": "median"}],
    ],
)
def test_config_rejects_bad_rows(grid):
    with pytest.raises(ConfigParseError, match="grid row 0"):
        parse_config(_doc(grid=grid))


def test_config_requires_fields_and_reps():
    with pytest.raises(ConfigParseError):
        parse_config({"profile": "lin", "grid": [{"N": 3}], "reps": 200})
    with pytest.raises(ConfigParseError):
        parse_config(_doc(reps=50))


def test_load_config_reports_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigParseError):
        load_config(p)


points = st.builds(
    lambda N, k, beta, s, eps, q: {
        "negmoment": GridPoint(N, 0, beta, s, None, None),
        "lefttail": GridPoint(N, min(k, N - 1), beta, None, eps, "lefttail"),
        "freenergy": GridPoint(N, 0, beta, None, None, "freenergy"),
        "max": GridPoint(N, 0, 0.0, None, None, "max"),
    }[q],
    st.integers(1, 26),
    st.integers(0, 25),
    st.floats(0.0, 3.0),
    st.floats(0.01, 5.0),
    st.floats(0.01, 0.99),
    st.sampled_from(["negmoment", "lefttail", "freenergy", "max"]),
)


@settings(max_examples=80, deadline=None)
@given(st.lists(points, min_size=1, max_size=6), st.integers(100, 10**6), st.integers(0, 2**63), st.floats(1.11, 1.99))
def test_config_round_trip(grid, reps, seed, gamma):
    cfg = ExperimentConfig("pw1", "negmoment", grid, reps, seed, gamma)
    doc = json.loads(json.dumps(cfg.to_dict()))
    again = parse_config(doc)
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_shipped_acceptance_config_parses():
    cfg = acceptance_batch_config()
    assert cfg.reps >= 100
    assert {p.quantity or cfg.quantity for p in cfg.grid} == {"negmoment", "lefttail", "freenergy", "max"}


def test_batch_rows_in_grid_order_and_thread_independent(tmp_path):
    doc = _doc(grid=[{"N": 7, "beta": 0.3, "s": 1.0}, {"N": 5, "quantity": "max"}, {"N": 6, "k": 2, "beta": 0.5, "eps": 0.5, "quantity": "lefttail"}])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    one = rows_to_csv(run_batch(cfg, threads=1))
    four = rows_to_csv(run_batch(cfg, threads=4))
    assert one == four
    rows = list(csv.DictReader(io.StringIO(one)))
    assert [r["quantity"] for r in rows] == ["negmoment", "max", "lefttail"]
    assert list(rows[0]) == CSV_COLUMNS


def test_batch_profile_path_relative_to_config(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps(builtin_profile("pw1").to_dict()))
    (tmp_path / "c.json").write_text(json.dumps(_doc(profile="p.json")))
    rows = run_batch(load_config(tmp_path / "c.json"))
    assert rows[0]["profile_hash"] == builtin_profile("pw1").digest()


# --- command line -----------------------------------------------------------


def test_cli_profile_info(capsys):
    assert cli.main(["profile-info", "pw2", "--beta", "0.5", "--beta", "2"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["hull_knots"] == [[0.0, 0.0], [1.0, 1.0]]
    assert info["beta_c"] == pytest.approx(math.sqrt(2 * math.log(2)))
    assert set(info["free_energy"]) == {"0.5", "2.0"}


def test_cli_sample_round_trip(tmp_path, capsys):
    out = tmp_path / "s.bin"
    assert cli.main(["sample", "--profile", "pw1", "--n", "7", "--k", "2", "--seed", "99", "--beta", "0.5", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    N, k, seed, values = cli.read_sample(out)
    ref = sample_tree(builtin_profile("pw1"), 7, 2, 99)
    assert (N, k, seed) == (7, 2, 99)
    assert np.array_equal(values, ref.node_values)
    assert out.read_bytes()[:4] == b"CREM"
    assert printed.strip() == f"log_Z={log_partition(ref, 0.5)!r}"


def test_cli_estimate_csv(tmp_path):
    out = tmp_path / "e.csv"
    argv = ["estimate", "--quantity", "lefttail", "--profile", "lin", "--n", "8", "--k", "1", "--beta", "0.5", "--eps", "0.5", "--reps", "300", "--seed", "4", "--out", str(out)]
    assert cli.main(argv) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["quantity"] == "lefttail" and rows[0]["s_or_eps"] == "0.5"


def test_cli_estimate_missing_parameter(capsys):
    assert cli.main(["estimate", "--quantity", "negmoment", "--profile", "lin", "--n", "8", "--reps", "300", "--seed", "4"]) == 2


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        cli.main(["estimate", "--quantity", "bogus"])
    assert exc.value.code == 2


def test_cli_verify_tilting(tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--suite", "tilting", "--seed", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 200
    assert list(rows[0]) == ["suite", "case_id", "value_a", "se_a", "value_b", "se_b", "pass"]


def test_cli_verify_one_step(tmp_path):
    out = tmp_path / "v.csv"
    code = cli.main(["verify", "--suite", "one-step", "--profile", "pw1", "--reps", "20000", "--seed", "3", "--out", str(out)])
    rows = list(csv.DictReader(out.open()))
    assert code == (0 if all(r["pass"] == "True" for r in rows) else 1)
    assert len(rows) == 6


def test_cli_bounds(capsys):
    assert cli.main(["bounds", "--profile", "lin", "--beta", "0.5", "--s", "1", "--n", "100", "--gamma", "1.5", "--empirical-eta0", "--reps", "500"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["K"] == 22
    assert 0.0 <= doc["empirical_eta0"] <= 1.0
    assert doc["empirical"] == {"N": 16, "reps": 500, "seed": doc["empirical"]["seed"], "upper_95": doc["empirical"]["upper_95"]}


def test_cli_bounds_supercritical_is_usage_error():
    assert cli.main(["bounds", "--profile", "lin", "--beta", "1.5", "--s", "1", "--n", "100"]) == 2


def test_cli_batch(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_doc(output=str(tmp_path / "r.csv"))))
    assert cli.main(["batch", str(cfg), "--threads", "2"]) == 0
    assert (tmp_path / "r.csv").read_text().startswith(",".join(CSV_COLUMNS))


def test_cli_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_doc(grid=[{"N": 3, "k": 4}])))
    assert cli.main(["batch", str(cfg)]) == 2


def test_cli_accept_subset(tmp_path):
    report = tmp_path / "r.json"
    assert cli.main(["accept", "--only", "1,9", "--report", str(report), "--csv", str(tmp_path / "r.csv")]) == 0
    doc = json.loads(report.read_text())
    assert doc["passed"] and [c["number"] for c in doc["criteria"]] == [1, 9]


def test_accept_fails_on_corrupted_profile(tmp_path):
    for name in ("lin", "pw2"):
        (tmp_path / f"{name}.json").write_text(json.dumps(builtin_profile(name).to_dict()))
    bad = builtin_profile("pw1").to_dict()
    bad["knots"][1] = [0.5, 1.2]  # A no longer monotone
    (tmp_path / "pw1.json").write_text(json.dumps(bad))
    report = acceptance_suite(only=[1, 9], profile_dir=tmp_path)
    assert not report.passed
    failed = [r for r in report.results if not r.passed]
    assert [r.number for r in failed] == [1]
    assert "pw1" in failed[0].error
    assert cli.main(["accept", "--only", "1", "--profile-dir", str(tmp_path)]) == 1


def test_accept_seed_plus_one_fast_criteria():
    from crem.acceptance import DEFAULT_SEED

    for n in (1, 2, 9):
        assert run_criterion(n, DEFAULT_SEED + 1).passed
