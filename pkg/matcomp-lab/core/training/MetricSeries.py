import csv
from dataclasses import dataclass, field

import numpy as np

from config import METRICS_HEADER
from core.errors import DataError


def _cell(value):
    return "" if value is None else repr(float(value))


@dataclass
class MetricSeries:  # per-step (step, L, L_obs, L_mask); absent losses stay None
    rows: list = field(default_factory=list)
    seed: int = None
    wall_clock: float = 0.0

    def __len__(self):
        return len(self.rows)

    def append(self, step, losses):
        if self.rows and step <= self.rows[-1]["step"]:
            raise DataError(f"metric steps must increase, got {step} after {self.rows[-1]['step']}")
        row = {"step": int(step), **losses.as_row()}
        self.rows.append(row)
        return row

    def steps(self):
        return np.array([r["step"] for r in self.rows], dtype=np.int64)

    def column(self, name):  # float array, NaN where the loss is absent
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=np.float64)

    def last(self):
        return self.rows[-1] if self.rows else None

    def until(self, step):
        return MetricSeries([r for r in self.rows if r["step"] <= step], self.seed, self.wall_clock)

    @staticmethod
    def format_row(row):
        return [str(row["step"])] + [_cell(row[k]) for k in METRICS_HEADER[1:]]

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRICS_HEADER)
            for row in self.rows:
                writer.writerow(self.format_row(row))

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if tuple(header or ()) != METRICS_HEADER:
                raise DataError(f"{path} does not start with the header {','.join(METRICS_HEADER)}")
            series = cls()
            for line in reader:
                if not line:
                    continue
                row = {"step": int(line[0])}
                for key, cell in zip(METRICS_HEADER[1:], line[1:]):
                    row[key] = float(cell) if cell else None
                series.rows.append(row)
        return series
