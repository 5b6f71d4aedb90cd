import contextlib
import csv
import json
import os
import stat
import sys
import tempfile
from collections.abc import Iterable, Iterator
from typing import TextIO

import numpy as np

from steinvar.domain.errors import CsvFormatError
from steinvar.domain.regression import RegressionData

CURVE_HEADERS = ("xi", "risk", "std_err", "replicates")


def _target_mode(path: str) -> int:
    """Mode of an existing destination, else what a plain open() would create under the umask."""
    try:
        return stat.S_IMODE(os.stat(path).st_mode)
    except FileNotFoundError:
        pass
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


@contextlib.contextmanager
def atomic_write(path: str | None) -> Iterator[TextIO]:
    """Write to a temp file beside ``path`` and rename it into place on success.

    ``None`` writes to stdout. On any exception the destination is untouched.
    """
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w",
        dir=directory,
        prefix=".tmp-",
        suffix=os.path.basename(path),
        newline="",
        encoding="utf-8",
        delete=False,
    )
    try:
        with handle:
            yield handle
        os.chmod(handle.name, _target_mode(path))
        os.replace(handle.name, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(handle.name)
        raise


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_regression_rows(rows: list[list[str]], source: str = "<input>") -> RegressionData:
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if rows and not all(_is_number(cell) for cell in rows[0]):
        rows = rows[1:]
    if not rows:
        raise CsvFormatError(f"{source}: no data rows.")
    width = len(rows[0])
    if width < 2:
        raise CsvFormatError(f"{source}: need a response column and at least one predictor column.")
    values = np.empty((len(rows), width))
    for line, row in enumerate(rows, start=1):
        if len(row) != width:
            raise CsvFormatError(f"{source}: data row {line} has {len(row)} fields, expected {width}.")
        try:
            values[line - 1] = [float(cell) for cell in row]
        except ValueError as exc:
            raise CsvFormatError(f"{source}: data row {line} is not numeric: {row}.") from exc
    return RegressionData.from_raw(values[:, 0], values[:, 1:])


def read_regression_csv(path: str) -> RegressionData:
    """First column is y, the rest are raw predictors; an optional header row is skipped."""
    with open(path, newline="", encoding="utf-8") as csvfile:
        rows = list(csv.reader(csvfile))
    return parse_regression_rows(rows, path)


def metadata_line(metadata: dict) -> str:
    return "#" + json.dumps(metadata, sort_keys=True, separators=(",", ":")) + "\n"


def read_metadata(path: str) -> dict:
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
    if not first.startswith("#"):
        raise CsvFormatError(f"{path}: missing metadata line.")
    return json.loads(first[1:])


def write_table(
    handle: TextIO,
    headers: Iterable[str],
    rows: Iterable[Iterable[object]],
    metadata: dict | None = None,
) -> None:
    if metadata is not None:
        handle.write(metadata_line(metadata))
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(row)


def write_csv(
    path: str | None,
    headers: Iterable[str],
    rows: Iterable[Iterable[object]],
    metadata: dict | None = None,
) -> None:
    with atomic_write(path) as handle:
        write_table(handle, headers, rows, metadata)


def to_json(payload: object) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(path: str | None, payload: object) -> None:
    with atomic_write(path) as handle:
        handle.write(to_json(payload))
