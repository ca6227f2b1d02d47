"""Report container shared by every CLI subcommand, with JSON and CSV rendering."""

import io
import json
import math
from typing import Any, Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, Field

from . import config


def round_sig(value: float, digits: int = config.OUTPUT_DIGITS) -> Any:
    """Round to significant digits; non-finite values become the strings 'inf', '-inf' or 'nan'."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(f"{value:.{digits}g}")


def _clean(obj: Any, digits: int) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        return round_sig(obj, digits)
    if isinstance(obj, dict):
        return {str(k): _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if hasattr(obj, "item"):
        return _clean(obj.item(), digits)
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist(), digits)
    return obj


class Report(BaseModel):
    """
    Output of one CLI command.

    payload holds the structured result; rows, when present, is the table written
    in CSV mode (one dict per row, shared keys as the header). CSV output starts with
    '# key: value' comment lines carrying the command, the instance digest and the
    scalar payload fields.
    """

    command: str = Field(description="Subcommand that produced the report.")
    instance_digest: Optional[str] = Field(default=None, description="sha256 of the canonical instance.")
    payload: Dict[str, Any] = Field(default_factory=dict)
    rows: Optional[List[Dict[str, Any]]] = Field(default=None)
    format: Literal["json", "csv"] = Field(default="json")

    def to_json(self, digits: int = config.OUTPUT_DIGITS) -> str:
        doc = {
            "command": self.command,
            "instance_digest": self.instance_digest,
            "payload": _clean(self.payload, digits),
        }
        if self.rows is not None:
            doc["rows"] = _clean(self.rows, digits)
        return json.dumps(doc, indent=2)

    def to_frame(self) -> pd.DataFrame:
        """Table view: rows if given, otherwise the scalar payload fields as one row."""
        if self.rows is not None:
            return pd.DataFrame(self.rows)
        flat = {k: v for k, v in self.payload.items() if not isinstance(v, (dict, list, tuple))}
        return pd.DataFrame([flat])

    def csv_header(self, digits: int = config.OUTPUT_DIGITS) -> List[str]:
        lines = [f"# command: {self.command}"]
        if self.instance_digest:
            lines.append(f"# instance_digest: {self.instance_digest}")
        if self.rows is not None:
            for key, value in self.payload.items():
                if not isinstance(value, (dict, list, tuple)):
                    lines.append(f"# {key}: {_clean(value, digits)}")
        return lines

    def to_csv(self, digits: int = config.OUTPUT_DIGITS) -> str:
        buffer = io.StringIO()
        for line in self.csv_header(digits):
            buffer.write(line + "\n")
        frame = self.to_frame().map(lambda v: round_sig(v, digits) if isinstance(v, float) else v)
        frame.to_csv(buffer, index=False, float_format=f"%.{digits}g")
        return buffer.getvalue()

    def render(self, digits: int = config.OUTPUT_DIGITS) -> str:
        return self.to_csv(digits) if self.format == "csv" else self.to_json(digits)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        doc = json.loads(text)
        return cls(
            command=doc["command"],
            instance_digest=doc.get("instance_digest"),
            payload=doc.get("payload", {}),
            rows=doc.get("rows"),
            format="json",
        )
