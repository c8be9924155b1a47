import functools
import logging
import os

import click

from config import current_config
from nematic import create_app, logger as root_logger
from nematic.services.experiment_service import ExperimentService
from nematic.services.preset_service import PresetService
from nematic.utils.config_parser import load_config
from nematic.utils.errors import NematicError
from nematic.utils.writers import write_diagnostics, write_rate_table, write_snapshot

logger = logging.getLogger(__name__)

VERBOSITY = {1: logging.INFO, 2: logging.DEBUG}


def handle_errors(command):
    """领域异常 -> 一行错误信息 + 退出码"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NematicError as e:
            click.echo(f"error: {e}", err=True)
            click.get_current_context().exit(e.exit_code)
    return wrapper


def _split_list(cast):
    def callback(ctx, param, value):
        if value is None:
            return None
        try:
            return [cast(item) for item in value.replace(' ', '').split(',') if item]
        except ValueError:
            raise click.BadParameter(f"expected a comma separated list, got {value!r}")
    return callback


def _output_dir(out, config):
    directory = out or config.output.directory or current_config.OUTPUT_DIR
    os.makedirs(directory, exist_ok=True)
    return directory


def _echo_warnings(config):
    for message in config.warnings:
        click.echo(f"warning: {message}", err=True)


def _echo_rates(table):
    click.echo(f"{table.kind:>12} {'err_grad':>12} {'rate':>6} {'err_L2':>12} {'rate':>6} {'err_s':>12} {'rate':>6}")
    for row in table.rows:
        def rate(value):
            return f"{value:6.2f}" if value is not None else f"{'-':>6}"
        click.echo(f"{row.resolution:12.6g} {row.error_grad:12.4e} {rate(row.rate_grad)} "
                   f"{row.error_L2:12.4e} {rate(row.rate_L2)} {row.error_s:12.4e} {rate(row.rate_s)}")


@click.group()
@click.option('-v', '--verbose', count=True, help='-v 输出 INFO，-vv 输出 DEBUG')
def cli(verbose):
    """Landau-de Gennes Q-tensor gradient flow solver"""
    create_app()
    if verbose:
        level = VERBOSITY.get(verbose, logging.DEBUG)
        root_logger.setLevel(level)
        for handler in root_logger.handlers:
            handler.setLevel(level)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False), help='TOML experiment file')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='output directory')
@click.option('--set', 'overrides', multiple=True, metavar='SECTION.KEY=VALUE', help='override a config value')
@handle_errors
def run(config_path, out, overrides):
    """运行一次模拟，写出诊断与快照"""
    config = load_config(config_path, overrides)
    _echo_warnings(config)
    directory = _output_dir(out, config)
    fmt = config.output.format

    def on_snapshot(step, state):
        write_snapshot(state.Q, os.path.join(directory, f"snapshot_{step}.{fmt}"), format=fmt)

    state, records, _ = ExperimentService.run_simulation(config, on_snapshot=on_snapshot)
    write_diagnostics(records, os.path.join(directory, 'diagnostics.csv'))
    last = records[-1]
    click.echo(f"{config.scheme}: {last.step} steps to t={state.t:.6g}, energy={last.energy:.12g}, "
               f"sup|Q|={last.sup_norm:.6g}, defect nodes={ExperimentService.defect_node_count(state.Q)}")
    click.echo(f"results written to {directory}")


@cli.command('converge-time')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False))
@click.option('--taus', required=True, callback=_split_list(float), help='comma separated step sizes')
@click.option('--ref-tau', 'ref_tau', required=True, type=float, help='reference step size')
@click.option('--out', type=click.Path(file_okay=False), default=None)
@click.option('--set', 'overrides', multiple=True, metavar='SECTION.KEY=VALUE')
@handle_errors
def converge_time(config_path, taus, ref_tau, out, overrides):
    """时间收敛率表"""
    config = load_config(config_path, overrides)
    _echo_warnings(config)
    table = ExperimentService.convergence_study_time(config, taus, ref_tau)
    _echo_rates(table)
    write_rate_table(table, os.path.join(_output_dir(out, config), 'rates.csv'))


@cli.command('converge-space')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False))
@click.option('--Ms', 'Ms', required=True, callback=_split_list(int), help='comma separated nested resolutions')
@click.option('--out', type=click.Path(file_okay=False), default=None)
@click.option('--set', 'overrides', multiple=True, metavar='SECTION.KEY=VALUE')
@handle_errors
def converge_space(config_path, Ms, out, overrides):
    """空间收敛率表"""
    config = load_config(config_path, overrides)
    _echo_warnings(config)
    table = ExperimentService.convergence_study_space(config, Ms)
    _echo_rates(table)
    write_rate_table(table, os.path.join(_output_dir(out, config), 'rates.csv'))


@cli.command()
@handle_errors
def presets():
    """列出内置预设及其参数"""
    for name in PresetService.preset_names():
        click.echo(name)
        for section, values in PresetService.preset_sections(name).items():
            items = ', '.join(f"{key}={value!r}" for key, value in values.items())
            click.echo(f"  [{section}] {items}")


def main(argv=None):
    cli.main(args=argv, prog_name='nematic')
