"""Network inter-event times and the very-frequent-user filter."""
import logging
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from apps.cdr.grouping import UserGroups
from apps.cdr.schemas import EventRecord, StatsDiagnostics, UserStats
from apps.common.exceptions import ValidationError

logger = logging.getLogger(__name__)

FREQUENT_THRESHOLD_MIN = 60.0
QUARTILES = (0.25, 0.5, 0.75)

# Dataset-wide values measured on two months of operator logs; kept for
# comparison with `summarize` output, they cannot be reproduced from synthetic data
REFERENCE_INTER_EVENT_MIN = {"mean": 320.0, "t25": 41.0, "t50": 114.0, "t75": 406.0}


def user_stats(events: Sequence[EventRecord]) -> UserStats:
    """Stats of one user's time-sorted events."""
    if not events:
        raise ValidationError("events", "At least one event is required")
    times = np.array([e.t for e in events], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValidationError("events", "Events must be sorted by time")
    n = len(times)
    if n < 2:
        return UserStats(events[0].user_id, n)
    gaps_min = np.diff(times) / 60.0
    q25, q50, q75 = np.percentile(gaps_min, [25, 50, 75])
    return UserStats(
        user_id=events[0].user_id,
        n_events=n,
        inter_event_mean_min=(times[-1] - times[0]) / 60.0 / (n - 1),
        quartiles_min=(float(q25), float(q50), float(q75)),
    )


def compute_user_stats(groups: UserGroups) -> list[UserStats]:
    """`user_stats` for every user at once."""
    n_users = len(groups)
    if n_users == 0:
        return []
    counts = groups.counts
    first = groups.t[groups.offsets[:-1]]
    last = groups.t[groups.offsets[1:] - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(counts >= 2, (last - first) / 60.0 / (counts - 1), np.nan)

    gid = np.repeat(np.arange(n_users), counts)
    same_user = gid[1:] == gid[:-1]
    gaps = pd.Series(np.diff(groups.t)[same_user] / 60.0)
    quartiles = (
        gaps.groupby(gid[1:][same_user]).quantile(list(QUARTILES)).unstack()
        if len(gaps)
        else pd.DataFrame(columns=list(QUARTILES))
    )
    quartiles = quartiles.reindex(range(n_users)).to_numpy(dtype=float)

    stats = []
    for i, (user_id, n) in enumerate(zip(groups.user_ids, counts)):
        if n < 2:
            stats.append(UserStats(user_id, int(n)))
            continue
        stats.append(
            UserStats(
                user_id=user_id,
                n_events=int(n),
                inter_event_mean_min=float(means[i]),
                quartiles_min=tuple(float(q) for q in quartiles[i]),
            )
        )
    return stats


def filter_frequent(stats: Iterable[UserStats], threshold_min: float = FREQUENT_THRESHOLD_MIN) -> set[str]:
    """Users whose network inter-event time is strictly below the threshold."""
    if threshold_min <= 0:
        raise ValidationError("frequent_threshold_min", "Must be positive")
    return {
        s.user_id
        for s in stats
        if s.inter_event_mean_min is not None and s.inter_event_mean_min < threshold_min
    }


def summarize(stats: Sequence[UserStats], threshold_min: float = FREQUENT_THRESHOLD_MIN) -> tuple[dict, StatsDiagnostics]:
    """Dataset-level distribution of per-user inter-event times."""
    means = np.array([s.inter_event_mean_min for s in stats if s.inter_event_mean_min is not None])
    n_frequent = len(filter_frequent(stats, threshold_min))
    diagnostics = StatsDiagnostics(
        n_users=len(stats),
        n_users_single_event=len(stats) - len(means),
        n_frequent=n_frequent,
    )
    if len(means) == 0:
        summary = {"mean_min": None, "t25_min": None, "t50_min": None, "t75_min": None}
    else:
        q25, q50, q75 = np.percentile(means, [25, 50, 75])
        summary = {
            "mean_min": float(means.mean()),
            "t25_min": float(q25),
            "t50_min": float(q50),
            "t75_min": float(q75),
        }
    summary["frequent_share"] = n_frequent / len(means) if len(means) else None
    summary["threshold_min"] = threshold_min
    summary["reference_min"] = REFERENCE_INTER_EVENT_MIN
    if diagnostics.n_users_single_event:
        logger.info(
            f"{diagnostics.n_users_single_event} users have a single event and no inter-event time"
        )
    return summary, diagnostics
