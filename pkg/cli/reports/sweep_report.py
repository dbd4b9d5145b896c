from pathlib import Path
from typing import Dict

from softsensor.ExperimentService import SweepResult


def write_sweep_report(result: SweepResult, output_dir) -> Dict[str, Path]:
    """
    Write the sweep tables.

    ``sweep_table.csv`` holds the mean test RMSE with one row per method and
    one column per label fraction. ``sweep_points.csv`` is the long form
    (kind, fraction, mean, spread, run count) and ``sweep_runs.csv`` lists
    every single run.

    Returns:
        Dict[str, Path]: Written files by short name
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": output_dir / "sweep_table.csv",
        "points": output_dir / "sweep_points.csv",
        "runs": output_dir / "sweep_runs.csv",
    }
    result.table.to_csv(paths["table"], float_format="%.6f")
    result.points.to_csv(paths["points"], index=False, float_format="%.17g")
    result.runs.to_csv(paths["runs"], index=False, float_format="%.17g")
    return paths
