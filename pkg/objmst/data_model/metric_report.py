#!/usr/bin/env python3

# Copyright (c) Facebook, Inc. and its affiliates.
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, TextIO

METRIC_COLUMNS = [
    "clipscore_text",
    "clipscore_image",
    "lpips",
    "nima",
    "contrique_fr",
    "contrique_nr",
]
CSV_COLUMNS = ["image_id", "method", "mode"] + METRIC_COLUMNS


@dataclass
class MetricRow:
    image_id: str
    method: str
    mode: str
    clipscore_text: Optional[float] = None
    clipscore_image: Optional[float] = None
    lpips: Optional[float] = None
    nima: Optional[float] = None
    contrique_fr: Optional[float] = None
    contrique_nr: Optional[float] = None

    def metric_values(self) -> Dict[str, Optional[float]]:
        return {c: getattr(self, c) for c in METRIC_COLUMNS}

    def to_csv_dict(self) -> Dict[str, str]:
        out = {}
        for key, value in asdict(self).items():
            out[key] = "" if value is None else (repr(value) if isinstance(value, float) else str(value))
        return out

    @staticmethod
    def from_csv_dict(row: Dict[str, str]) -> "MetricRow":
        kwargs = {}
        for f in fields(MetricRow):
            raw = row.get(f.name, "")
            if f.name in METRIC_COLUMNS:
                kwargs[f.name] = None if raw == "" else float(raw)
            else:
                kwargs[f.name] = raw
        return MetricRow(**kwargs)


@dataclass
class MetricReport:
    """Per-image metric rows and per-method means over them"""

    per_image: List[MetricRow] = field(default_factory=list)
    mode: str = ""

    def methods(self) -> List[str]:
        seen: List[str] = []
        for row in self.per_image:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    @property
    def aggregate(self) -> Dict[str, Dict[str, Optional[float]]]:
        """Arithmetic mean of every metric column per method, over rows that have it"""
        result: Dict[str, Dict[str, Optional[float]]] = {}
        for method in self.methods():
            rows = [r for r in self.per_image if r.method == method]
            means: Dict[str, Optional[float]] = {}
            for column in METRIC_COLUMNS:
                values = [getattr(r, column) for r in rows if getattr(r, column) is not None]
                means[column] = math.fsum(values) / len(values) if values else None
            result[method] = means
        return result

    def is_finite(self) -> bool:
        for row in self.per_image:
            for value in row.metric_values().values():
                if value is not None and not math.isfinite(value):
                    return False
        return True

    def write_csv(self, fp: TextIO) -> None:
        writer = csv.DictWriter(fp, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in self.per_image:
            writer.writerow(row.to_csv_dict())

    @staticmethod
    def read_csv(fp: TextIO) -> "MetricReport":
        rows = [MetricRow.from_csv_dict(r) for r in csv.DictReader(fp)]
        mode = rows[0].mode if rows else ""
        return MetricReport(per_image=rows, mode=mode)
