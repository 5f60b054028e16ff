import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import pandas as pd

from .exceptions import ContractViolationError, NotFoundError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
LOSS_COLUMNS = ["step", "total", "pe", "smooth", "triplet"]


def write_frame(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug("wrote %s (%d rows)", path, len(df))
    return path


def read_frame(path, columns: Sequence[str] = ()) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"File not found: {path}")

    df = pd.read_csv(path)

    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ContractViolationError(f"Columns {missing} not found in {path}")

    return df


def loss_history_frame(history: Iterable) -> pd.DataFrame:
    return pd.DataFrame([(r.step, r.total, r.pe, r.smooth, r.triplet) for r in history],
                        columns=LOSS_COLUMNS)


def profile_frame(profile: List[Tuple[float, float]]) -> pd.DataFrame:
    return pd.DataFrame(profile, columns=["disparity", "error"])


def report_frame(rows: List[dict]) -> pd.DataFrame:
    """Rows of run-level results (one dict per run, shared keys)."""
    return pd.DataFrame(rows)


def summarize_frame(df: pd.DataFrame) -> dict:
    return {
        "rows": len(df),
        "columns": list(df.columns),
        "preview": df.head(5).to_dict(orient="records"),
    }
