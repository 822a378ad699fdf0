import json

import pytest

from carleman.cli import build_parser, main

from conftest import descriptor, poly


def write_config(tmp_path, curve, **extra):
    cfg = {"curve": curve, "steps": 1, "seed": 0, "eta_cap": 0.1, "tangency": [0.0], "out": str(tmp_path / "out")}
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_parser_flags():
    args = build_parser().parse_args(["--config", "c.json", "--steps", "2", "--seed", "7", "--out", "o",
                                      "--verify-only", "w.json", "-q"])
    assert (args.config, args.steps, args.seed, args.out, args.verify_only, args.quiet) == \
        ("c.json", 2, 7, "o", "w.json", True)
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_non_immersion_is_rejected(tmp_path, capsys):
    # t -> (t^2, t^3) has zero velocity at t = 0
    bad = descriptor([[poly(0.0, 0.0, 1.0)], [poly(0.0, 0.0, 0.0, 1.0)]])
    assert main(["--config", str(write_config(tmp_path, bad))]) == 2
    err = capsys.readouterr().err
    assert "invalid curve descriptor" in err and "immersion" in err


def test_non_injective_is_rejected(tmp_path, capsys):
    # the nodal cubic t -> (t^2, t^3 - t) passes through (1, 0) at t = -1 and t = 1
    bad = descriptor([[poly(0.0, 0.0, 1.0)], [poly(0.0, -1.0, 0.0, 1.0)]])
    assert main(["--config", str(write_config(tmp_path, bad))]) == 2
    err = capsys.readouterr().err
    assert "invalid curve descriptor" in err and "injectivity" in err


def test_unknown_term_kind_is_rejected(tmp_path, capsys):
    bad = descriptor([[{"kind": "spline", "coefficients": []}], [poly(0.0)]])
    assert main(["--config", str(write_config(tmp_path, bad))]) == 2
    assert "unknown term kind" in capsys.readouterr().err


def test_invalid_config_is_rejected(tmp_path, capsys):
    path = write_config(tmp_path, "curve.json", eta_cap=0.9)
    assert main(["--config", str(path)]) == 2
    assert "invalid config" in capsys.readouterr().err


@pytest.mark.slow
def test_verify_only_round_trip(reference_run, tmp_path, capsys):
    words = reference_run.out / "words_3.json"
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(reference_run.config.to_json()))
    assert main(["--config", str(cfg), "--verify-only", str(words)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["k"] == 3


@pytest.mark.slow
def test_run_outputs(reference_run):
    out = reference_run.out
    for k in (1, 2, 3):
        for name in (f"step_{k}.json", f"words_{k}.json", f"hull_{k}.txt", f"trajectory_{k}.csv"):
            assert (out / name).is_file()
    header = (out / "errors.csv").read_text().splitlines()[0]
    assert header == "k,s,t,error,eta"
    report = reference_run.report
    assert report["committed"] == [1, 2, 3] and report["failure"] is None
    assert report["monitor"]["passed"]
    assert "seconds" not in (out / "report.json").read_text()
