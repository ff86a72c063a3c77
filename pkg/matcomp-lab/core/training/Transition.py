import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import median_filter

from config import DROP_LOOKBACK, DROP_SPREAD, DROP_THRESHOLD, DROP_WINDOW
from core.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class TransitionReport:  # sudden drop in smoothed log10 loss, if any
    plateau: float
    drop_step: int = None
    post_drop: float = None
    magnitude: float = 0.0  # log10 units
    window: int = DROP_WINDOW
    threshold: float = DROP_THRESHOLD
    drop_count: int = 0
    metric: str = "L_mask"

    @property
    def detected(self):
        return self.drop_step is not None

    def to_dict(self):
        return asdict(self)


def _plateau(segment, window, spread):  # (median level, whether the part before the fall is flat)
    level = float(np.median(segment))
    leave = np.flatnonzero(segment >= level - spread / 2)[-1] + 1
    plateau = segment[:leave]
    if len(plateau) < window // 2:
        return level, False
    low, high = np.percentile(plateau, [10, 90])
    return level, high - low <= spread


def _drops(s, window, threshold, lookback, spread):  # (index, plateau level) of each drop off a flat plateau
    drops, start = [], 0
    for t in range(window // 2, len(s)):
        segment = s[max(start, t - lookback):t]
        if len(segment) < window // 2 or s[t] > segment.max() - threshold:
            continue
        level, flat = _plateau(segment, window, spread)
        if flat and s[t] <= level - threshold:
            drops.append((t, level))
            start = t
    return drops


def detect_transition(series, window=DROP_WINDOW, threshold=DROP_THRESHOLD, lookback=DROP_LOOKBACK,
                      spread=DROP_SPREAD):
    if not len(series):
        raise DataError("cannot detect a transition in an empty metric series")
    if len(series) <= window:
        raise DataError(f"metric series has {len(series)} steps, need more than the window of {window}")
    metric = "L_mask"
    y = series.column(metric)
    if np.isnan(y).any():  # p_mask = 0 runs have no masked entries
        metric = "L"
        y = series.column(metric)
    s = median_filter(np.log10(np.maximum(y, 1e-300)), size=window, mode="nearest")
    drops = _drops(s, window, threshold, lookback, spread)
    if not drops:
        return TransitionReport(plateau=float(10 ** np.median(s)), window=window, threshold=threshold, metric=metric)
    t, level = drops[0]
    end = drops[1][0] if len(drops) > 1 else len(s)
    low = float(s[t:end].min())
    report = TransitionReport(
        plateau=float(10 ** level),
        drop_step=int(series.steps()[t]),
        post_drop=float(10 ** low),
        magnitude=float(level - low),
        window=window,
        threshold=threshold,
        drop_count=len(drops),
        metric=metric,
    )
    logger.info("drop detected at step %d: %s %.4g -> %.4g", report.drop_step, metric, report.plateau,
                report.post_drop)
    return report
