"""Command-line front door: the two simulation studies and the
demonstration service."""

from __future__ import annotations

import click

from .harness import StudyConfig, recovery_study, transfer_study
from .service import DATA_DIR_ENV, create_app


def _study_config(dim: int, trials: int, seed: int, smoke: bool, workers: int) -> StudyConfig:
    if smoke:
        import dataclasses

        return dataclasses.replace(StudyConfig.smoke(seed=seed), workers=workers)
    return StudyConfig(dim=dim, trials=trials, seed=seed, workers=workers)


@click.group()
def main() -> None:
    """Search-strategy recovery toolkit."""


@main.command()
@click.option("--dim", default=30, show_default=True, help="problem dimension")
@click.option("--trials", default=30, show_default=True, help="independent trials per case")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--smoke", is_flag=True, help="desk-scale preset (dim 2, 2 trials)")
@click.option("--workers", default=0, show_default=True, help="process pool size (0 = all cores)")
def recover(dim: int, trials: int, seed: int, out: str, smoke: bool, workers: int) -> None:
    """Parameter-recovery study: fit candidate settings to generated
    trajectories and report cost curves and selection rates."""
    cfg = _study_config(dim, trials, seed, smoke, workers)
    report = recovery_study(cfg, out)
    click.echo(f"wrote {report.out_dir}/curves.csv, recovery.csv, meta.json")
    for case in cfg.lambda_cases:
        rate = report.recovery_rate(case, cfg.max_prefix)
        click.echo(f"case {case:g}: recovery rate at prefix {cfg.max_prefix} = {rate:.2f}")


@main.command()
@click.option("--dim", default=30, show_default=True)
@click.option("--trials", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--smoke", is_flag=True)
@click.option("--workers", default=0, show_default=True)
def transfer(dim: int, trials: int, seed: int, out: str, smoke: bool, workers: int) -> None:
    """Transfer-versus-self-adaptation study over four search arms."""
    cfg = _study_config(dim, trials, seed, smoke, workers)
    report = transfer_study(cfg, out)
    click.echo(f"wrote {report.out_dir}/convergence.csv, lambda_gp.csv, meta.json")
    last = {arm: report.bands[arm][-1][0] for arm in report.curves}
    for arm, mean in last.items():
        click.echo(f"{arm}: mean best value at iteration {cfg.transfer_iterations} = {mean:.4g}")


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--data-dir",
    default=None,
    help=f"session storage directory (default: ${DATA_DIR_ENV} or ./strategist-data)",
)
def serve(port: int, host: str, data_dir: str | None) -> None:
    """Run the demonstration-capture service."""
    import uvicorn

    uvicorn.run(create_app(data_dir), host=host, port=port)


if __name__ == "__main__":
    main()
