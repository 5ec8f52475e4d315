"""JSON report envelope and CSV row dumps.

Every command emits::

    {"command": ..., "config": {...}, "results": {...},
     "versions": {...}, "seed": ..., "timestamp": ...}

Keys are sorted and floats rendered by ``json`` (shortest round-trip
repr), so identical inputs give byte-identical reports once the
timestamp is switched off.
"""

import csv
import io
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
import pydantic
import scipy
import structlog
from pydantic import BaseModel

from src import __version__
from src.dataset_io import atomic_write

logger = structlog.get_logger(__name__)


def versions() -> Dict[str, str]:
    return {
        "fdg-toolkit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def _json_default(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def build_report(
    command: str,
    config: Dict[str, Any],
    results: Any,
    seed: Optional[int],
    *,
    timestamp: bool = True,
) -> Dict[str, Any]:
    report = {
        "command": command,
        "config": config,
        "results": results,
        "versions": versions(),
        "seed": seed,
    }
    if timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
    return report


def dumps(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_json(payload: Any, path: Path | str) -> None:
    atomic_write(path, dumps(payload).encode("utf-8"))
    logger.info("report_written", path=str(path))


def emit_report(report: Dict[str, Any], out: Optional[Path | str] = None) -> None:
    """Write the report to ``out``, or stdout when no path is given."""
    if out is None:
        sys.stdout.write(dumps(report))
        sys.stdout.flush()
    else:
        write_json(report, out)


def write_rows_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    atomic_write(path, buf.getvalue().encode("utf-8"))
    logger.info("csv_written", path=str(path))
