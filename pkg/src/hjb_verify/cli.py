#!/usr/bin/env python3
import argparse
import cmd
import shlex
import sys
import traceback
from typing import List, Optional

from rich.panel import Panel
from rich.table import Table

from . import __version__
from .errors import ConfigInvalid, HJBError, MissingArtifact
from .harness import PLOT_KINDS, ExperimentConfig, RunRecord, emit_plot_data, run_experiment
from .presets import preset_registry
from .utils import check_dependencies, check_python_version, console, display_metrics, setup_logging

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

STATUS_STYLE = {"passed": "green", "failed": "red", "skipped": "dim"}


def show_presets() -> None:
    table = Table(title="Problem presets")
    table.add_column("Name", style="cyan")
    table.add_column("Equation")
    table.add_column("Suites", style="green")
    table.add_column("Flags", style="yellow")
    for descriptor in preset_registry():
        flags = [name for name in ("controlled", "infinity_path", "diffusion_zero", "blow_up")
                 if getattr(descriptor, name)]
        table.add_row(descriptor.name, descriptor.form, ", ".join(descriptor.suites), ", ".join(flags))
    console.print(table)


def show_record(record: RunRecord) -> None:
    table = Table(title=f"Run summary: {record.config.get('preset')}")
    table.add_column("Suite", style="cyan")
    table.add_column("Status")
    table.add_column("Message")
    table.add_column("Time [s]", justify="right")
    for name, result in record.suites.items():
        style = STATUS_STYLE[result.status]
        elapsed = record.timings.get(name)
        table.add_row(name, f"[{style}]{result.status}[/{style}]", result.error or result.message,
                      "" if elapsed is None else f"{elapsed:.2f}")
    console.print(table)
    verdict = "[green]all selected suites passed[/green]" if record.passed else "[red]some suites failed[/red]"
    console.print(Panel(f"{verdict}\nsummary: {record.output_dir / 'summary.json'}", border_style="bright_blue"))


def cmd_run(config_path: str, output_dir: Optional[str] = None, seed: Optional[int] = None) -> int:
    try:
        config = ExperimentConfig.from_file(config_path)
        if output_dir is not None:
            config.output_dir = output_dir
        if seed is not None:
            config.seed = seed
        record = run_experiment(config, show_progress=True)
    except ConfigInvalid as exc:
        console.print(f"[red]Configuration error: {exc}[/red]")
        return EXIT_USAGE
    show_record(record)
    return EXIT_OK if record.passed else EXIT_FAILED


def cmd_plot(record_path: str, what: str) -> int:
    try:
        record = RunRecord.load(record_path)
        paths = emit_plot_data(record, what)
    except MissingArtifact as exc:
        console.print(f"[red]Error: {exc}[/red]")
        return EXIT_FAILED
    for path in paths:
        console.print(f"[green]wrote[/green] {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjb-verify", description="HJB solver and verification suites")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="log level for the hjb_verify logger")
    sub = parser.add_subparsers(dest="verb")

    run = sub.add_parser("run", help="run the suites of an experiment config")
    run.add_argument("--config", required=True, help="path to the JSON experiment config")
    run.add_argument("--output-dir", default=None, help="override the configured output directory")
    run.add_argument("--seed", type=int, default=None, help="override the configured random seed")

    sub.add_parser("presets", help="list the problem presets")

    plot = sub.add_parser("plot", help="write plot-ready CSV from a finished run")
    plot.add_argument("--record", required=True, help="summary.json of a run (or its directory)")
    plot.add_argument("--what", required=True, choices=PLOT_KINDS)
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.verb == "run":
        return cmd_run(args.config, args.output_dir, args.seed)
    if args.verb == "presets":
        show_presets()
        return EXIT_OK
    if args.verb == "plot":
        return cmd_plot(args.record, args.what)
    return EXIT_USAGE


class VerifyShell(cmd.Cmd):
    intro = (
        "hjb-verify interactive shell\n\n"
        "  run <config.json> [output-dir]   run an experiment\n"
        "  presets                          list problem presets\n"
        "  plot <summary.json> <what>       write plot data (" + ", ".join(PLOT_KINDS) + ")\n"
        "  last                             show the metrics of the last run\n"
        "  help, quit"
    )
    prompt = "hjb> "

    def __init__(self):
        super().__init__()
        self.last_record: Optional[RunRecord] = None

    def cmdloop(self, intro=None):
        console.print(Panel(intro or self.intro, border_style="bright_blue", title="hjb-verify",
                            title_align="center"))
        while True:
            try:
                super().cmdloop(intro="")
                break
            except KeyboardInterrupt:
                console.print("\n[yellow]Use 'quit' to leave.[/yellow]")

    def _args(self, line: str) -> List[str]:
        try:
            return shlex.split(line)
        except ValueError as exc:
            console.print(f"[red]{exc}[/red]")
            return []

    def do_run(self, line: str):
        """run <config.json> [output-dir]"""
        parts = self._args(line)
        if not parts:
            console.print("[yellow]usage: run <config.json> [output-dir][/yellow]")
            return False
        try:
            config = ExperimentConfig.from_file(parts[0])
            if len(parts) > 1:
                config.output_dir = parts[1]
            self.last_record = run_experiment(config, show_progress=True)
        except ConfigInvalid as exc:
            console.print(f"[red]Configuration error: {exc}[/red]")
            return False
        show_record(self.last_record)
        return False

    def do_presets(self, line: str):
        """list problem presets"""
        show_presets()
        return False

    def do_plot(self, line: str):
        """plot <summary.json> <what>"""
        parts = self._args(line)
        if len(parts) != 2 or parts[1] not in PLOT_KINDS:
            console.print(f"[yellow]usage: plot <summary.json> <{'|'.join(PLOT_KINDS)}>[/yellow]")
            return False
        cmd_plot(parts[0], parts[1])
        return False

    def do_last(self, line: str):
        """show the metrics of the last run"""
        if self.last_record is None:
            console.print("[dim]No run yet.[/dim]")
            return False
        for name, result in self.last_record.suites.items():
            data = result.data if isinstance(result.data, dict) else {}
            display_metrics(f"{name} ({result.status})", data)
        return False

    def do_quit(self, line: str):
        """leave the shell"""
        return True

    do_exit = do_quit
    do_EOF = do_quit

    def emptyline(self):
        return False

    def default(self, line: str):
        console.print(f"[yellow]Unknown command: {line}. Type 'help'.[/yellow]")
        return False


def main(argv: Optional[List[str]] = None) -> None:
    """Entry point for the hjb-verify CLI."""
    if not check_python_version():
        sys.exit(EXIT_FAILED)

    missing_deps = check_dependencies()
    if missing_deps:
        console.print("[red]Error: Missing required dependencies:[/red]")
        for dep in missing_deps:
            console.print(f"  - {dep}")
        console.print("[yellow]Please install them using: pip install " + " ".join(missing_deps) + "[/yellow]")
        sys.exit(EXIT_FAILED)

    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.verb is None:
            VerifyShell().cmdloop()
            code = EXIT_OK
        else:
            code = dispatch(args)
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted.[/yellow]")
        code = EXIT_FAILED
    except HJBError as e:
        console.print(f"[red]Error: {str(e)}[/red]")
        code = EXIT_FAILED
    except Exception as e:
        console.print(f"[red]Error: {str(e)}[/red]")
        console.print(traceback.format_exc())
        code = EXIT_FAILED
    sys.exit(code)


if __name__ == "__main__":
    main()
