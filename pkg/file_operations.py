#!filepath: file_operations.py
import cmath
import csv
import io
import json
import math
import os
import platform
import tempfile
from typing import Any, Dict, List

import numpy as np

from starweyl.config import WeylKind
from starweyl.errors import ConfigError
from starweyl.graph_forward import WeylSample

CSV_HEADER = ["lambda_re", "lambda_im", "row", "col", "val_re", "val_im", "flag"]


def _fmt(value: float) -> str:
    """Round-trip precision scientific notation."""
    return f"{value:.17e}" if math.isfinite(value) else "nan"


def to_jsonable(obj: Any) -> Any:
    """numpy scalars to floats, complex to [re, im], non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


class ReportFileOps:
    """
    Handles all report output: the output directory, file names, and writes
    that either land completely or not at all.
    """
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.system = platform.system().lower()

    def get_output_dir(self) -> str:
        """Creates and returns the output directory."""
        os.makedirs(self.out_dir, exist_ok=True)
        return self.out_dir

    def safe_filename(self, filename: str) -> str:
        """Replaces characters that are invalid in file names on the current OS."""
        invalid_chars = {
            'windows': r'<>:"/\|?*',
            'darwin': r':/',
            'linux': r'/'
        }
        for char in invalid_chars.get(self.system, '/'):
            filename = filename.replace(char, '_')
        return filename

    def path(self, name: str) -> str:
        return os.path.join(self.get_output_dir(), self.safe_filename(name))

    def atomic_write(self, name: str, text: str) -> str:
        """Writes to a temp file in the target directory, then renames it over the target."""
        target = self.path(name)
        fd, tmp = tempfile.mkstemp(prefix=".tmp_", dir=self.get_output_dir())
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        return target

    def write_json(self, name: str, data: Dict[str, Any]) -> str:
        return self.atomic_write(name, json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")

    def write_weyl_csv(self, name: str, sample: WeylSample) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for re, im, r, c, v, flag in sample.rows():
            v = complex(v)
            if not cmath.isfinite(v):
                v = complex(math.nan, math.nan)
            writer.writerow([_fmt(re), _fmt(im), r, c, _fmt(v.real), _fmt(v.imag), flag])
        return self.atomic_write(name, buf.getvalue())

    def read_weyl_csv(self, name: str, kind: WeylKind, index: int) -> WeylSample:
        """Reads a Weyl-type matrix written by write_weyl_csv (or any file in the same schema)."""
        path = name if os.path.isabs(name) else os.path.join(self.out_dir, name)
        if not os.path.isfile(path):
            raise ConfigError(f"Weyl data file not found: {path}")
        rows: List[tuple] = []
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != CSV_HEADER:
                raise ConfigError(f"{path}: expected columns {CSV_HEADER}, got {reader.fieldnames}.")
            for line in reader:
                rows.append((float(line["lambda_re"]), float(line["lambda_im"]), int(line["row"]),
                             int(line["col"]), complex(float(line["val_re"]), float(line["val_im"])),
                             line["flag"]))
        if not rows:
            raise ConfigError(f"{path} holds no data rows.")
        return WeylSample.from_rows(kind, index, rows)
