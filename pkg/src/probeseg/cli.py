"""
probeseg – unified CLI entrypoint (Click group)

Subcommands:
- gen-scenes: write procedurally generated micro-world scene files
- render: render a scene view (optionally before/after one push) to PNG
- train: run interactive self-supervised training
- eval: score checkpoints on a scene set
- infer: propose objects in a single RGB-D image
- selfsup-debug: inspect the supervision mask for a frame pair
- bank-stats: summarize the memory bank of a training run
"""

import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import rich_click as click
from rich.console import Console

import probeseg.handlers as _h
from probeseg import __version__
from probeseg.exceptions import ConfigError, ProbesegError
from probeseg.logger import setup_logging
from probeseg.microworld import Layout, Split
from probeseg.output import OutputFormatter

click.rich_click.TEXT_MARKUP = "rich"
click.rich_click.SHOW_ARGUMENTS = True
click.rich_click.GROUP_ARGUMENTS_OPTIONS = True

console = Console()
logger = logging.getLogger(__name__)


def _common(func: Callable[..., Any]) -> Callable[..., Any]:
    """--json/--verbose/--debug shared by every command."""
    func = click.option("--debug", "-d", is_flag=True, help="Debug output")(func)
    func = click.option("--verbose", "-v", is_flag=True, help="Verbose output")(func)
    func = click.option("--json", "-j", "json_mode", is_flag=True, help="JSON output mode")(func)
    return func


def _setup(json_mode: bool, verbose: bool, debug: bool) -> OutputFormatter:
    log_level = "DEBUG" if debug else ("INFO" if verbose else "WARNING")
    setup_logging(level=log_level, verbose=debug)
    formatter = OutputFormatter("json" if json_mode else "human")
    if json_mode:
        formatter.set_silent(True)
    return formatter


def _run(
    formatter: OutputFormatter,
    json_mode: bool,
    debug: bool,
    work: Callable[[], Any],
) -> None:
    """Run a handler; print its result in JSON mode and map failures to exit code 1."""
    try:
        result = work()
        if json_mode:
            print(_h.json_dumps({"status": "success", "result": result}))
    except ProbesegError as e:
        logger.debug("ProbesegError exception caught:", exc_info=True)
        if json_mode:
            print(_h.json_dumps({"status": "error", "error": e.to_dict()}))
        else:
            formatter.output_error(e.message, code=e.code)
            if e.details:
                formatter.output_info(e.details)
        if debug:
            raise
        sys.exit(1)
    except Exception as e:
        logger.debug("Unexpected exception caught:", exc_info=True)
        if json_mode:
            error = {"code": "UNEXPECTED_ERROR", "message": str(e), "details": type(e).__name__}
            print(_h.json_dumps({"status": "error", "error": error}))
        else:
            formatter.output_error(str(e), code="UNEXPECTED_ERROR")
        if debug:
            raise
        sys.exit(1)


@click.group(help="probeseg – discover objects by poking at them")
@click.version_option(version=__version__)
def cli() -> None:
    """Top-level Click group."""


@cli.command(name="gen-scenes", help="Generate micro-world scene files")
@click.option(
    "--split",
    type=click.Choice([s.value for s in Split]),
    default=Split.NOVEL_LAYOUTS.value,
    show_default=True,
    help="Dataset split",
)
@click.option("--count", type=click.IntRange(min=1), required=True, help="Scenes per role")
@click.option("--seed", type=int, default=0, show_default=True, help="First scene seed")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory receiving <role>/scene_XXXXX.scene files",
)
@click.option(
    "--role",
    type=click.Choice(["train", "test", "both"]),
    default="both",
    show_default=True,
    help="Which side of the split to generate",
)
@click.option(
    "--layout",
    type=click.Choice([layout.value for layout in Layout]),
    default=Layout.FULL.value,
    show_default=True,
    help="'trivial' places one large movable box per scene",
)
@click.option(
    "--texture-amplitude",
    type=click.FloatRange(min=0.0),
    default=0.03,
    show_default=True,
    help="Surface texture amplitude (0 gives flat colors)",
)
@_common
def gen_scenes(
    split: str,
    count: int,
    seed: int,
    out_dir: Path,
    role: str,
    layout: str,
    texture_amplitude: float,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)
    roles = ["train", "test"] if role == "both" else [role]
    _run(
        formatter,
        json_mode,
        debug,
        lambda: _h._handle_gen_scenes(
            formatter, split, count, seed, out_dir, roles, layout, texture_amplitude
        ),
    )


@cli.command(name="render", help="Render one view of a scene to PNG files")
@click.option(
    "--scene", "scene_path", type=click.Path(path_type=Path), required=True, help="Scene file"
)
@click.option("--spawn", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "--out-prefix",
    type=click.Path(path_type=Path),
    required=True,
    help="Writes <prefix>_rgb.png, <prefix>_depth.png (and <prefix>_after.png)",
)
@click.option("--view", type=click.IntRange(min=3), default=300, show_default=True)
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.option("--push", help="Input-resolution point 'row,col' to push before the second frame")
@click.option("--force", type=float, default=200.0, show_default=True, help="Push force (N)")
@click.option("--direction", type=click.IntRange(0, 7), default=0, show_default=True)
@_common
def render(
    scene_path: Path,
    spawn: int,
    out_prefix: Path,
    view: int,
    noise_seed: int,
    push: str | None,
    force: float,
    direction: int,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)
    _run(
        formatter,
        json_mode,
        debug,
        lambda: _h._handle_render(
            formatter,
            scene_path,
            spawn,
            out_prefix,
            view,
            noise_seed,
            _h.parse_point(push) if push else None,
            force,
            direction,
        ),
    )


@cli.command(name="train", help="Train a predictor by interacting with the micro-world")
@click.option(
    "--config",
    "config_file",
    type=click.Path(dir_okay=False, path_type=Path),
    help="key=value config file",
)
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Run directory (checkpoints, metrics.jsonl, bank_snapshot.json)",
)
@click.option("--preset", type=click.Choice(["large", "desk", "trivial", "smoke"]))
@click.option("--seed", type=int, help="Master seed (also PROBESEG_SEED)")
@click.option("--jobs", type=click.IntRange(min=1), help="Parallel rollout workers")
@click.option("--deterministic", is_flag=True, help="Single-threaded, reproducible run")
@click.option(
    "--dump-grads",
    type=click.Path(file_okay=False, path_type=Path),
    help="Write head-gradient heatmaps here once per cycle",
)
@click.option(
    "--set",
    "settings",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override any config key (repeatable)",
)
@click.option("--progress/--no-progress", default=True, help="Show a progress bar")
@_common
def train(
    config_file: Path | None,
    out_dir: Path,
    preset: str | None,
    seed: int | None,
    jobs: int | None,
    deterministic: bool,
    dump_grads: Path | None,
    settings: tuple[str, ...],
    progress: bool,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)

    def work() -> Any:
        overrides: dict[str, Any] = {}
        for item in settings:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip().lower()] = value
        overrides.update({"preset": preset, "seed": seed, "jobs": jobs})
        return _h._handle_train(
            formatter,
            config_file,
            out_dir,
            overrides,
            jobs,
            deterministic,
            dump_grads,
            progress and not json_mode,
        )

    _run(formatter, json_mode, debug, work)


@cli.command(name="eval", help="Evaluate checkpoints on a scene set (no interaction)")
@click.option(
    "--ckpt",
    "checkpoints",
    type=click.Path(dir_okay=False, path_type=Path),
    multiple=True,
    help="Checkpoint file; repeat to report mean and std",
)
@click.option(
    "--scenes",
    "scenes_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory of *.scene files",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Text report")
@click.option(
    "--panels-dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Write a qualitative panel per location",
)
@click.option("--baseline", type=click.Choice(["random"]), help="Score a baseline instead")
@click.option("--theta", type=float, default=0.0, show_default=True, help="Score threshold")
@click.option("-n", "n", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Rendering noise seed")
@click.option("--noise/--no-noise", default=True, help="Render with sensor noise")
@_common
def eval_cmd(
    checkpoints: tuple[Path, ...],
    scenes_dir: Path,
    out: Path | None,
    panels_dir: Path | None,
    baseline: str | None,
    theta: float,
    n: int,
    seed: int,
    noise: bool,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)
    _run(
        formatter,
        json_mode,
        debug,
        lambda: _h._handle_eval(
            formatter,
            list(checkpoints),
            scenes_dir,
            out,
            panels_dir,
            baseline,
            theta,
            n,
            seed,
            noise,
        ),
    )


@cli.command(name="infer", help="Propose objects in one RGB-D image")
@click.option("--ckpt", "ckpt_path", type=click.Path(path_type=Path), required=True)
@click.option("--image", type=click.Path(path_type=Path), required=True, help="8-bit RGB PNG")
@click.option(
    "--depth", "depth_path", type=click.Path(path_type=Path), required=True, help="16-bit PNG"
)
@click.option("--out-panel", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--out-json",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Machine-readable proposal listing",
)
@click.option("--theta", type=float, default=0.0, show_default=True)
@click.option("-n", "n", type=click.IntRange(min=1), default=10, show_default=True)
@_common
def infer(
    ckpt_path: Path,
    image: Path,
    depth_path: Path,
    out_panel: Path | None,
    out_json: Path | None,
    theta: float,
    n: int,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)
    _run(
        formatter,
        json_mode,
        debug,
        lambda: _h._handle_infer(
            formatter, ckpt_path, image, depth_path, out_panel, out_json, theta, n
        ),
    )


@cli.command(name="selfsup-debug", help="Show the supervision mask for two frames")
@click.option("--before", "before_path", type=click.Path(path_type=Path), required=True)
@click.option("--after", "after_path", type=click.Path(path_type=Path), required=True)
@click.option("--point", required=True, help="Output-resolution point 'row,col'")
@click.option(
    "--out-prefix",
    type=click.Path(path_type=Path),
    help="Writes <prefix>_B.png, <prefix>_Bplus.png and <prefix>_report.txt "
    "(default: next to --before)",
)
@click.option("--out-panel", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--superpixels/--no-superpixels", default=True, show_default=True)
@_common
def selfsup_debug(
    before_path: Path,
    after_path: Path,
    point: str,
    out_prefix: Path | None,
    out_panel: Path | None,
    superpixels: bool,
    json_mode: bool,
    verbose: bool,
    debug: bool,
) -> None:
    formatter = _setup(json_mode, verbose, debug)
    _run(
        formatter,
        json_mode,
        debug,
        lambda: _h._handle_selfsup_debug(
            formatter,
            before_path,
            after_path,
            _h.parse_point(point),
            out_prefix,
            out_panel,
            superpixels,
        ),
    )


@cli.command(name="bank-stats", help="Summarize the memory bank of a training run")
@click.option(
    "--ckpt-dir",
    "run_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Training run directory",
)
@_common
def bank_stats(run_dir: Path, json_mode: bool, verbose: bool, debug: bool) -> None:
    formatter = _setup(json_mode, verbose, debug)
    _run(formatter, json_mode, debug, lambda: _h._handle_bank_stats(formatter, run_dir))


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
