import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class ResultExporter:
    """
    Writes experiment results as CSV tables and JSON documents

    Every file is written to a temporary sibling and moved into place, so a
    reader never sees a half-written result. Output carries no timestamps and
    no locale-dependent formatting, so equal inputs give equal bytes.
    """

    def __init__(self, output_dir: Union[str, Path] = "outputs"):
        """
        Args:
            output_dir: Directory for result files, created when missing
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def write_csv(self, df: pd.DataFrame, name: str) -> Path:
        """
        Write a table with '.' decimals and 17 significant digits

        Args:
            df: Table to write; the index is dropped
            name: File name inside the output directory

        Returns:
            Path of the written file
        """
        try:
            text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            path = self._write_atomic(name, text)
            logger.info(f"Wrote {len(df)} rows to {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing CSV {name}: {e}")
            raise

    def write_json(self, document: Dict[str, Any], name: str) -> Path:
        """
        Write a JSON document with sorted keys

        numpy scalars and arrays are converted to plain Python values first.
        """
        try:
            text = json.dumps(to_plain(document), sort_keys=True, indent=2) + "\n"
            path = self._write_atomic(name, text)
            logger.info(f"Wrote {path}")
            return path
        except Exception as e:
            logger.error(f"Error writing JSON {name}: {e}")
            raise

    def create_summary_report(self, records: List[Dict[str, Any]],
                              name: str = "summary.csv") -> Optional[Path]:
        """One row per experiment of a batch: name, kind, status, outputs"""
        if not records:
            logger.warning("No experiments to summarize")
            return None
        columns = ["experiment", "kind", "status", "exit_code", "outputs"]
        df = pd.DataFrame(records, columns=columns)
        return self.write_csv(df, name)

    def _write_atomic(self, name: str, text: str) -> Path:
        target = self.output_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        handle, temp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(temp_name, target)
        except BaseException:
            if os.path.exists(temp_name):
                os.remove(temp_name)
            raise
        self.written.append(target)
        return target


def to_plain(value: Any) -> Any:
    """Recursively turn numpy values into JSON-friendly Python values"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
