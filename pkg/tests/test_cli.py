import json
import sys

import pytest
from loguru import logger

from nkcli import CLI_VERSION, Command, ExitCode, main, parse_args
from tests.field_setup import config_text, write_config


@pytest.fixture(autouse=True)
def restore_logger():
    yield
    logger.remove()
    logger.add(sys.stderr)


def test_parse_args():
    args = parse_args(["verify", "run.toml", "--window", "8", "--tol", "1e-6"])
    assert args.command == Command.VERIFY
    assert args.config == "run.toml"
    assert args.window == 8
    assert args.tol == 1e-6
    assert args.samples is None
    assert not args.verbose

    args = parse_args(["-v", "salem4"])
    assert args.command == Command.SALEM4
    assert (args.q1_min, args.q1_max) == (-10, 10)
    assert args.verbose

    # test missing subcommand
    with pytest.raises(SystemExit):
        parse_args([])


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert CLI_VERSION in capsys.readouterr().out


def test_verify(tmp_path):
    path = write_config(tmp_path / "salem4.toml", config_text("salem4.toml"))
    out = tmp_path / "cert.json"
    code = main(
        ["-q", "verify", path, "--window", "24", "--samples", "200", "--out", str(out)]
    )
    assert code == ExitCode.PASSED
    assert json.loads(out.read_text())["status"] == "passed"

    # test missing config writes a failure certificate
    out = tmp_path / "missing.json"
    code = main(["-q", "verify", str(tmp_path / "nope.toml"), "--out", str(out)])
    assert code == ExitCode.INPUT_ERROR
    cert = json.loads(out.read_text())
    assert cert["status"] == "error"
    assert cert["error"].startswith("ConfigError")

    # test invalid override
    out = tmp_path / "bad.json"
    code = main(["-q", "verify", path, "--samples", "0", "--out", str(out)])
    assert code == ExitCode.INPUT_ERROR
    assert "Invalid samples" in json.loads(out.read_text())["error"]


def test_plot(tmp_path):
    path = write_config(tmp_path / "salem4.toml", config_text("salem4.toml"))
    out = tmp_path / "domain.svg"
    assert main(["-q", "plot", path, "--window", "4", "--out", str(out)]) == 0
    assert out.read_text().count('class="ray"') == 18

    path = write_config(tmp_path / "quintic.toml", config_text("quintic_ot.toml"))
    assert main(["-q", "plot", path, "--out", str(out)]) == ExitCode.INPUT_ERROR


def test_salem4(tmp_path, capsys):
    out = tmp_path / "salem4.csv"
    code = main(["-q", "salem4", "--q1-min", "-1", "--q1-max", "-1", "--out", str(out)])
    assert code == ExitCode.PASSED
    lines = out.read_text().splitlines()
    assert lines[0] == "q1,q2,salem_number,irreducible,poly"
    assert len(lines) == 4
    assert lines[1].startswith("-1,-1,1.72208")
    assert "X**4 - X**3 - X**2 - X + 1" in capsys.readouterr().out

    # test empty range
    code = main(["-q", "salem4", "--q1-min", "1", "--q1-max", "0"])
    assert code == ExitCode.INPUT_ERROR

    # test banner goes to stderr
    main(["salem4", "--q1-min", "0", "--q1-max", "0"])
    assert "Welcome to nkcert CLI" in capsys.readouterr().err
