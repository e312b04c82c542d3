"""Morphing-quadrotor NMPC built on the morphmpc C++ core."""

import csv
import io
import json

from ._core import (
    INPUT_DIM,
    STATE_DIM,
    ConfigError,
    Entrance,
    frame_widths,
    hover_input,
    integrate_step,
    region,
    run_file,
    run_text,
    trajectory_columns,
    wall_violation,
)

__all__ = [
    "INPUT_DIM",
    "STATE_DIM",
    "ConfigError",
    "Entrance",
    "frame_widths",
    "hover_input",
    "integrate_step",
    "region",
    "run_file",
    "run_text",
    "trajectory_columns",
    "wall_violation",
    "load_run",
]


def load_run(result):
    """Parses the output of run_file or run_text into (rows, summary)."""
    rows = list(csv.DictReader(io.StringIO(result["trajectory_csv"])))
    return rows, json.loads(result["summary_json"])
