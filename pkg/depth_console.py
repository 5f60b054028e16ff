#!/usr/bin/env python3
"""
Depth Loss Console
==================

Command-line front end for the edge-fattening experiments. Each subcommand
loads an experiment config, renders the procedural stereo scene and calls one
service:

    synth     write both views, ground truth, labels, masks and an overlay
    profile   photometric error vs disparity for one pixel (--landscape for all)
    optimize  direct disparity optimization, loss history, fattening report
    metrics   depth metrics of disparity PFMs against the scene's ground truth
    sweep     margin / ablation / triplet-weight comparison runs

Architecture:
    depth_console.py (argparse, formatting, exit codes)
            ↓ (Python imports)
    Service layer (services/*_service.py)

Results go to standard output as markdown or JSON; logs go to standard error.
Exit codes: 0 success, 2 config or contract error, 3 numerical divergence.
"""

import argparse
import json
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import List, Optional

# Add the repository root so the services package imports when run as a script
sys.path.insert(0, str(Path(__file__).parent))

from services.config_service import load_experiment_config
from services.exceptions import DivergenceError, ServiceError
from services.experiment_service import SWEEP_KINDS, cmd_metrics, cmd_optimize, cmd_profile, cmd_sweep, cmd_synth
from services.schemas import error_response

logger = logging.getLogger("depth_console")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ResponseFormat(str, Enum):
    """Output format options for command results."""
    MARKDOWN = "markdown"
    JSON = "json"


# ============================================================================
# HELPER FUNCTIONS FOR FORMATTING
# ============================================================================

def _value(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(rows: List[dict]) -> str:
    if not rows:
        return "**No rows**"
    keys = list(rows[0].keys())
    table_md = "| " + " | ".join(keys) + " |\n"
    table_md += "| " + " | ".join(['---'] * len(keys)) + " |\n"
    for row in rows:
        table_md += "| " + " | ".join(_value(row[k]) for k in keys) + " |\n"
    return table_md


def _files(data: dict) -> str:
    return "\n".join(f"- {name}" for name in data["files"])


def format_synth_markdown(data: dict) -> str:
    return f"""# Scene

**Occlusion band width:** {data['band_width']} px (d_bg={data['d_bg']}, d_fg={data['d_fg']})
**Occluded pixels:** {data['occluded_pixels']}
**Pose gap:** {data['pose_gap_px']:.3g} px

## Files in {data['output_dir']}
{_files(data)}
"""


def format_profile_markdown(data: dict) -> str:
    x, y = data["pixel"]
    text = f"""# Profile at ({x}, {y})

argmin={_value(data['argmin'])}, gt={_value(data['gt'])}, {data['flag']}
**Occluded:** {data['occluded']}
"""
    if "landscape" in data:
        text += f"\n## Landscape\n\n{_table([data['landscape']])}"
    return text + f"\n## Files in {data['output_dir']}\n{_files(data)}\n"


def format_optimize_markdown(data: dict) -> str:
    return f"""# Optimization

**Steps:** {data['steps']} | **Final loss:** {_value(data['final_loss'])}

## Fattening
{_table([data['fattening']])}
## Metrics
{_table([data['metrics']])}
## Files in {data['output_dir']}
{_files(data)}
"""


def format_table_markdown(title: str, data: dict) -> str:
    table = data["table"]
    return f"""# {title}

**Rows:** {table['rows']}

{_table(table['preview'])}
## Files in {data['output_dir']}
{_files(data)}
"""


# ============================================================================
# COMMANDS
# ============================================================================

def _dispatch(args: argparse.Namespace):
    config = load_experiment_config(args.config, seed_override=args.seed)
    if args.command == "synth":
        return cmd_synth(config, args.out), format_synth_markdown
    if args.command == "profile":
        return cmd_profile(config, tuple(args.pixel), args.out, landscape=args.landscape), format_profile_markdown
    if args.command == "optimize":
        return cmd_optimize(config, args.out, snapshot_every=args.snapshot_every), format_optimize_markdown
    if args.command == "metrics":
        return cmd_metrics(config, args.pred, args.out), lambda d: format_table_markdown("Metrics", d)
    return cmd_sweep(config, args.kind, args.out), lambda d: format_table_markdown(f"Sweep: {d['kind']}", d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depth_console", description="Edge-fattening depth-loss experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Experiment TOML (default: data/reference.toml)")
    common.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, default=None, help="Overrides the config seed")
    common.add_argument("--format", dest="response_format", choices=[f.value for f in ResponseFormat],
                        default=ResponseFormat.MARKDOWN.value)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="Render the scene")

    profile = sub.add_parser("profile", parents=[common], help="Photometric error curve of one pixel")
    profile.add_argument("--pixel", nargs=2, type=int, required=True, metavar=("X", "Y"))
    profile.add_argument("--landscape", action="store_true", help="Also summarize every band/background pixel")

    optimize = sub.add_parser("optimize", parents=[common], help="Direct disparity optimization")
    optimize.add_argument("--snapshot-every", type=int, default=None, help="Write disparity PFMs every N steps")

    metrics = sub.add_parser("metrics", parents=[common], help="Evaluate disparity PFMs")
    metrics.add_argument("--pred", nargs="+", required=True, help="Disparity PFM file(s)")

    sweep = sub.add_parser("sweep", parents=[common], help="Comparison runs")
    sweep.add_argument("--kind", choices=SWEEP_KINDS, default="margin")
    return parser


def _configure_logging(args: argparse.Namespace):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        result, formatter = _dispatch(args)
    except DivergenceError as e:
        print(json.dumps(error_response(f"{e} (last finite step {e.last_finite_step})")), file=sys.stderr)
        return EXIT_DIVERGED
    except ServiceError as e:
        print(json.dumps(error_response(str(e))), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(json.dumps(error_response(f"Could not write output: {e}")), file=sys.stderr)
        return EXIT_CONFIG

    data = result["data"]
    if args.response_format == ResponseFormat.MARKDOWN.value:
        print(formatter(data))
    else:
        print(json.dumps(data, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
