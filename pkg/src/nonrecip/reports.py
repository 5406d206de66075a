"""CSV/JSON report emission with atomic writes."""

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError, ReportWriteError

logger = logging.getLogger(__name__)

ReportFormat = Literal["csv", "json"]
FLOAT_FORMAT = "%.17g"


@dataclass
class Report:
    """One table plus scalar metadata."""

    name: str
    columns: List[str]
    rows: List[Sequence[Any]]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise InvalidArgumentError(
                    f"report {self.name}: row of length {len(row)} for {len(self.columns)} columns"
                )

    def frame(self) -> pd.DataFrame:
        """Table with complex columns split into re_/im_ pairs."""
        data: Dict[str, List[Any]] = {}
        for j, name in enumerate(self.columns):
            values = [_plain(row[j]) for row in self.rows]
            if any(isinstance(v, complex) for v in values):
                data[f"re_{name}"] = [complex(v).real for v in values]
                data[f"im_{name}"] = [complex(v).imag for v in values]
            else:
                data[name] = values
        return pd.DataFrame(data, columns=list(data))


def _plain(value: Any) -> Any:
    """Numpy scalars to Python scalars."""
    if isinstance(value, np.generic):
        return value.item()
    return value


def _jsonable(value: Any) -> Any:
    value = _plain(value)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def config_line(config: Dict[str, Any]) -> str:
    return json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))


def render_csv(report: Report, config: Dict[str, Any], seed: int) -> str:
    header = f"# config: {config_line(config)}\n# seed: {seed}\n"
    body = report.frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return header + body


def render_json(report: Report, config: Dict[str, Any], seed: int) -> str:
    frame = report.frame()
    document = {
        "config": _jsonable(config),
        "seed": seed,
        "name": report.name,
        "meta": _jsonable(report.meta),
        "columns": list(frame.columns),
        "rows": [[_jsonable(v) for v in row] for row in frame.itertuples(index=False, name=None)],
    }
    return json.dumps(document, indent=2) + "\n"


def render_gnuplot(report: Report, csv_name: str) -> str:
    columns = list(report.frame().columns)
    lines = [
        f"# {report.name}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{columns[0]}'" if columns else "",
    ]
    if len(columns) > 1:
        lines.append(f"plot for [i=2:{len(columns)}] '{csv_name}' using 1:i with linespoints")
    return "\n".join(line for line in lines if line) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise ReportWriteError(f"could not write {path}: {e}", path=str(path)) from e


def emit_report(
    reports: Sequence[Report],
    out_dir: Path,
    fmt: ReportFormat,
    config: Dict[str, Any],
    seed: int,
    gnuplot: bool = False,
) -> List[Path]:
    """
    Write each report as <name>.csv or <name>.json under out_dir.

    Args:
        reports: Tables to write
        out_dir: Target directory (created if missing)
        fmt: "csv" or "json"
        config: Full scenario configuration recorded in every file
        seed: Seed recorded in every file
        gnuplot: Also write <name>.gp next to each CSV

    Returns:
        Paths written, in order
    """
    if fmt not in ("csv", "json"):
        raise InvalidArgumentError(f"unknown report format '{fmt}'")
    written: List[Path] = []
    for report in reports:
        path = Path(out_dir) / f"{report.name}.{fmt}"
        render = render_csv if fmt == "csv" else render_json
        write_atomic(path, render(report, config, seed))
        written.append(path)
        if gnuplot and fmt == "csv":
            script = path.with_suffix(".gp")
            write_atomic(script, render_gnuplot(report, path.name))
            written.append(script)
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def load_csv(path: Path) -> pd.DataFrame:
    """Read a report back, skipping its comment header."""
    return pd.read_csv(path, comment="#")


def read_header(path: Path) -> Optional[Dict[str, Any]]:
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
    prefix = "# config: "
    return json.loads(first[len(prefix):]) if first.startswith(prefix) else None
