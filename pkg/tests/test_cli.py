from __future__ import annotations

from click.testing import CliRunner

from strategist.cli import main


def test_recover_smoke(tmp_path):
    out = tmp_path / "rec"
    result = CliRunner().invoke(
        main, ["recover", "--smoke", "--seed", "3", "--out", str(out), "--workers", "1"]
    )
    assert result.exit_code == 0, result.output
    assert (out / "curves.csv").exists()
    assert (out / "recovery.csv").exists()
    assert (out / "meta.json").exists()
    assert "recovery rate" in result.output


def test_transfer_smoke(tmp_path):
    out = tmp_path / "tr"
    result = CliRunner().invoke(
        main, ["transfer", "--smoke", "--seed", "3", "--out", str(out), "--workers", "1"]
    )
    assert result.exit_code == 0, result.output
    assert (out / "convergence.csv").exists()
    assert (out / "lambda_gp.csv").exists()
    assert "mean best value" in result.output


def test_help_lists_subcommands():
    result = CliRunner().invoke(main, ["--help"])
    assert result.exit_code == 0
    for cmd in ("recover", "transfer", "serve"):
        assert cmd in result.output
