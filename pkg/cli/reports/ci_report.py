from pathlib import Path

import pandas as pd


def write_ci_report(trace: pd.DataFrame, output_dir, split_name: str, level: float) -> Path:
    """
    Write the confidence-interval trace of one split.

    The file has one row per sample with columns ``index``, ``truth``,
    ``prediction``, ``lower`` and ``upper``, ready for plotting the predicted
    band against the measured quality variable.

    Args:
        trace: Output of ``ExperimentService.predict_split``
        output_dir: Directory receiving the file
        split_name: Split the trace belongs to, used in the file name
        level: Confidence level, used in the file name

    Returns:
        Path: The written ``ci_<split>_<level>.csv``

    Example:
        >>> write_ci_report(trace, "runs/debutanizer", "test", 0.95)
        PosixPath('runs/debutanizer/ci_test_95.csv')
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"ci_{split_name}_{round(level * 100):d}.csv"
    trace[["index", "truth", "prediction", "lower", "upper"]].to_csv(path, index=False, float_format="%.17g")
    return path
