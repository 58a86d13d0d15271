"""CSV ingestion and the machine-readable outputs of the command line."""

import json
import logging
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import pydantic
import scipy
import sklearn
from sklearn.preprocessing import StandardScaler

from glm_subsampling.errors import (
    ConstantColumn,
    MalformedCsv,
    MissingColumn,
    MissingResponses,
    NonNumericField,
)
from glm_subsampling.glm_core import Dataset
from glm_subsampling.sampling import SamplingPlan

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "setting",
    "family",
    "criterion",
    "method",
    "r",
    "r_p",
    "S",
    "emse",
    "emp_var",
    "mean_trace_vhat",
    "rel_eff",
    "mean_iters",
    "wall_ms",
    "seed",
]

NA_TOKENS = ["", "NA"]


def _resolve_response(columns: List[str], response_column: Union[str, int]) -> str:
    if isinstance(response_column, str) and response_column in columns:
        return response_column
    index = None
    if isinstance(response_column, int):
        index = response_column
    elif isinstance(response_column, str) and response_column.lstrip("-").isdigit():
        index = int(response_column)
    if index is not None and -len(columns) <= index < len(columns):
        return columns[index]
    raise MissingColumn(
        f"response column '{response_column}' not found; available columns: {', '.join(columns)}"
    )


def _numeric_column(frame: pd.DataFrame, name: str, allow_missing: bool) -> np.ndarray:
    raw = frame[name]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise NonNumericField(f"non-numeric value '{raw.iloc[row]}' in column '{name}' at data row {row + 1}")
    if not allow_missing and values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise NonNumericField(f"missing value in column '{name}' at data row {row + 1}")
    return values.to_numpy(dtype=float)


def load_csv_dataset(
    path: Union[str, Path],
    response_column: Union[str, int],
    standardize: bool = True,
    add_intercept: bool = True,
    allow_missing_response: bool = False,
) -> Dataset:
    """Read a headed numeric CSV into a Dataset.

    Features are z-scored with the population standard deviation when
    ``standardize`` is set; the response is left untouched. Empty fields and
    ``NA`` are accepted in the response column only, and only when
    ``allow_missing_response`` is set.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=NA_TOKENS, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise MalformedCsv(f"cannot open {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise MalformedCsv(f"{path} is empty; a header row is required") from exc
    except pd.errors.ParserError as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if frame.shape[0] == 0:
        raise MalformedCsv(f"{path} has a header but no data rows")

    columns = [str(column) for column in frame.columns]
    frame.columns = columns
    response = _resolve_response(columns, response_column)
    features = [column for column in columns if column != response]
    if not features:
        raise MalformedCsv(f"{path} has no feature columns besides '{response}'")

    x = np.column_stack([_numeric_column(frame, name, allow_missing=False) for name in features])
    y = _numeric_column(frame, response, allow_missing=True)
    if np.isnan(y).any() and not allow_missing_response:
        raise MissingResponses(
            f"{int(np.isnan(y).sum())} rows of '{response}' are NA; enable responses on demand to allow this"
        )

    if standardize:
        scaler = StandardScaler()
        x = scaler.fit_transform(x)
        constant = [name for name, scale in zip(features, scaler.var_) if scale == 0.0]
        if constant:
            raise ConstantColumn(f"cannot standardize zero-variance columns: {', '.join(constant)}")

    logger.info("loaded %s: %d rows, %d features, response '%s'", path, x.shape[0], len(features), response)
    return Dataset.from_arrays(x, y, add_intercept=add_intercept, feature_names=features)


def write_report_csv(rows: List[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    frame.to_csv(path, index=False, na_rep="")
    return path


def write_probabilities_csv(plan: SamplingPlan, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"row_index": np.arange(plan.n), "pi": plan.probabilities})
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (datetime, date)):
        return value.isoformat()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, pydantic.BaseModel):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def library_versions() -> Dict[str, str]:
    from glm_subsampling import __version__

    return {
        "glm_subsampling": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "scikit-learn": sklearn.__version__,
    }


def build_manifest(
    command: str,
    config,
    seed: int,
    timings: Optional[Dict[str, float]] = None,
    **fields: Any,
) -> Dict[str, Any]:
    """Config echo, seed and library versions; timings only when the config asks for them."""
    manifest = {
        "command": command,
        "config": config.model_dump(mode="json"),
        "seed": seed,
        "versions": library_versions(),
    }
    if timings is not None and config.experiment.record_timings:
        manifest["timings"] = timings
    manifest.update(fields)
    return manifest
