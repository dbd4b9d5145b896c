from pathlib import Path

import pandas as pd


def write_latent_report(latent: pd.DataFrame, output_dir, split_name: str) -> Path:
    """Write latent means, predictive spread and labels as ``latent_<split>.csv``."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"latent_{split_name}.csv"
    latent.to_csv(path, index=False, float_format="%.17g")
    return path
