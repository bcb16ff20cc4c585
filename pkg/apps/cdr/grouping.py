from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd


@dataclass
class UserGroups:
    """
    Events ordered by (user_id, t) with a stable sort, so events sharing a
    timestamp keep their file order. Group ``i`` spans
    ``offsets[i]:offsets[i + 1]``.
    """

    user_ids: np.ndarray
    offsets: np.ndarray
    t: np.ndarray
    lon: np.ndarray
    lat: np.ndarray

    def __len__(self) -> int:
        return len(self.user_ids)

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def span(self, index: int) -> tuple[int, int]:
        return int(self.offsets[index]), int(self.offsets[index + 1])

    def select(self, users: Iterable[str]) -> "UserGroups":
        keep = pd.Series(self.user_ids).isin(set(users)).to_numpy()
        event_mask = np.repeat(keep, self.counts)
        counts = self.counts[keep]
        return UserGroups(
            user_ids=self.user_ids[keep],
            offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
            t=self.t[event_mask],
            lon=self.lon[event_mask],
            lat=self.lat[event_mask],
        )

    def subset(self, start: int, stop: int) -> "UserGroups":
        """Users ``start:stop`` as an independent group set (one worker shard)."""
        a, b = int(self.offsets[start]), int(self.offsets[stop])
        return UserGroups(
            user_ids=self.user_ids[start:stop],
            offsets=self.offsets[start : stop + 1] - a,
            t=self.t[a:b],
            lon=self.lon[a:b],
            lat=self.lat[a:b],
        )


def group_events(events: pd.DataFrame) -> UserGroups:
    codes, uniques = pd.factorize(events["user_id"], sort=True)
    t = events["t"].to_numpy(dtype=float)
    order = np.lexsort((t, codes))
    counts = np.bincount(codes, minlength=len(uniques))
    return UserGroups(
        user_ids=np.asarray(uniques, dtype=object),
        offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        t=t[order],
        lon=events["lon"].to_numpy(dtype=float)[order],
        lat=events["lat"].to_numpy(dtype=float)[order],
    )
