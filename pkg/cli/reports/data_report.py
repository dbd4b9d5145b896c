from pathlib import Path
from typing import Optional, Tuple

import pandas as pd


def format_data_report(summary: pd.DataFrame, width: int, offset: int, sizes: Tuple[int, int, int]) -> str:
    """
    Render the per-column summary plus the lagged width and split sizes as text.

    Example:
        >>> print(format_data_report(summary, 28, 9, (1431, 477, 477)))
    """
    lines = [summary.to_string(float_format=lambda v: f"{v:.6g}")]
    lines.append(f"lagged width: {width}, rows dropped by lags: {offset}")
    lines.append(f"split: train {sizes[0]}, validation {sizes[1]}, test {sizes[2]}")
    return "\n".join(lines)


def write_data_report(summary: pd.DataFrame, output_dir) -> Optional[Path]:
    """
    Write the per-column summary as ``data_summary.csv``.

    Args:
        summary: Frame from ``DatasetService.describe``, indexed by column name
        output_dir: Target directory; nothing is written when None

    Returns:
        Optional[Path]: The written file, or None
    """
    if output_dir is None:
        return None
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "data_summary.csv"
    summary.to_csv(path, index_label="column", float_format="%.17g")
    return path
