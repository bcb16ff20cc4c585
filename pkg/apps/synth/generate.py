"""
Synthetic city generator.

Agents commute between a home and a work place on workdays, with an
optional mid-day errand, and stay home on other days. Each trip is public
with the window's probability. Phone events are Poisson at the agent's
current position; in the detectable regime frequent agents also log an
event at every departure and arrival and no event is logged while
travelling, so every one of their trips is recoverable from the log.
"""
import logging
import math
from dataclasses import dataclass
from datetime import datetime, time, timedelta

import numpy as np
import pandas as pd

from apps.common.exceptions import ErrorCode, ExitCode, OdflowError
from apps.common.parallel import map_shards, shard_bounds
from apps.geo.districts import DistrictMap, grid_districts
from apps.geo.projection import unproject_arrays
from apps.od.binning import GRANULARITY_S, bin_counts
from apps.od.windows import WORKDAYS, zone
from apps.synth.schemas import (
    AGENT_COLUMNS,
    PRIVATE,
    PUBLIC,
    TOWER_FILE_COLUMNS,
    TRUTH_TRIP_COLUMNS,
    GroundTruth,
    WorldDiagnostics,
    WorldSpec,
)
from apps.transit.schemas import LEG_COLUMNS, STATION_COLUMNS

logger = logging.getLogger(__name__)

MINUTE = 60
HOUR = 3600

# share of the cell side kept free of stay points and stations on each edge
MARGIN = 0.1
PLACEMENT_ATTEMPTS = 1000

MORNING_DEPARTURE = (7 * HOUR, 9 * HOUR)
MIDDAY_DEPARTURE = (12 * HOUR, 13 * HOUR)
EVENING_DEPARTURE = (17 * HOUR, 19 * HOUR)
TRAVEL_S = (15 * MINUTE, 45 * MINUTE)
ERRAND_STAY_S = (60 * MINUTE, 90 * MINUTE)

BOUNDARY_START = 10 * HOUR
BOUNDARY_LEG_S = 10 * MINUTE
# just under and exactly at the default transfer limit
BOUNDARY_GAPS_S = (44 * MINUTE + 59, 45 * MINUTE)


def infeasible(message: str, **data) -> OdflowError:
    return OdflowError(ErrorCode.INFEASIBLE_SPEC, message, ExitCode.CONFIG, data or None)


@dataclass(frozen=True)
class Layout:
    """The district grid in meters, centred on the projection origin."""

    rows: int
    cols: int
    cell_m: float

    @property
    def x0(self) -> float:
        return -self.cols / 2.0 * self.cell_m

    @property
    def y0(self) -> float:
        return -self.rows / 2.0 * self.cell_m

    @property
    def n_districts(self) -> int:
        return self.rows * self.cols

    def random_point(self, district: int, rng: np.random.Generator) -> tuple[float, float]:
        row, col = divmod(district, self.cols)
        u, v = rng.uniform(MARGIN, 1.0 - MARGIN, 2)
        return self.x0 + (col + u) * self.cell_m, self.y0 + (row + v) * self.cell_m

    def max_interior_distance(self) -> float:
        return math.hypot((self.cols - 2 * MARGIN) * self.cell_m, (self.rows - 2 * MARGIN) * self.cell_m)

    def towers(self, per_side: int) -> tuple[np.ndarray, np.ndarray]:
        spacing = self.cell_m / per_side
        xs = self.x0 + (np.arange(self.cols * per_side) + 0.5) * spacing
        ys = self.y0 + (np.arange(self.rows * per_side) + 0.5) * spacing
        grid_x, grid_y = np.meshgrid(xs, ys)
        return grid_x.ravel(), grid_y.ravel()

    def snap_to_towers(self, xs: np.ndarray, ys: np.ndarray, per_side: int) -> tuple[np.ndarray, np.ndarray]:
        spacing = self.cell_m / per_side
        ix = np.clip(np.floor((xs - self.x0) / spacing), 0, self.cols * per_side - 1)
        iy = np.clip(np.floor((ys - self.y0) / spacing), 0, self.rows * per_side - 1)
        return self.x0 + (ix + 0.5) * spacing, self.y0 + (iy + 0.5) * spacing


@dataclass(frozen=True)
class Calendar:
    day_starts: tuple[float, ...]
    workdays: tuple[bool, ...]

    @property
    def span(self) -> tuple[float, float]:
        return self.day_starts[0], self.day_starts[-1]

    @classmethod
    def from_spec(cls, spec: WorldSpec) -> "Calendar":
        tz = zone(spec.timezone)
        dates = [spec.start_date + timedelta(days=d) for d in range(spec.n_days + 1)]
        return cls(
            tuple(datetime.combine(day, time(), tzinfo=tz).timestamp() for day in dates),
            tuple(day.isoweekday() in WORKDAYS for day in dates[:-1]),
        )


@dataclass(frozen=True)
class Stations:
    ids: tuple[str, ...]
    xs: np.ndarray
    ys: np.ndarray
    districts: np.ndarray

    def of_district(self, district: int) -> np.ndarray:
        return np.flatnonzero(self.districts == district)


def _seed(spec: WorldSpec, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=key))


def check_feasible(spec: WorldSpec):
    layout = Layout(spec.rows, spec.cols, spec.cell_m)
    if spec.n_agents and spec.stations_per_district == 0 and max(spec.public_share.values()) > 0:
        raise infeasible("Public trips need at least one station per district", public_share=spec.public_share)
    if spec.min_trip_m >= layout.max_interior_distance():
        raise infeasible(
            f"No two places in the grid are {spec.min_trip_m:.0f} m apart",
            max_distance_m=layout.max_interior_distance(),
        )


def _other_district(rng: np.random.Generator, n_districts: int, exclude: int) -> int:
    district = int(rng.integers(n_districts - 1))
    return district + (district >= exclude)


def _place(
    layout: Layout,
    rng: np.random.Generator,
    exclude: int,
    anchor: tuple[float, float],
    min_m: float,
    fixed: int | None = None,
) -> tuple[int, float, float]:
    """A district (``fixed`` or any other than ``exclude``) and a point at least ``min_m`` from ``anchor``."""
    for _ in range(PLACEMENT_ATTEMPTS):
        district = fixed if fixed is not None else _other_district(rng, layout.n_districts, exclude)
        x, y = layout.random_point(district, rng)
        if math.hypot(x - anchor[0], y - anchor[1]) >= min_m:
            return district, x, y
    raise infeasible(f"Could not place a stay {min_m:.0f} m away from district {exclude}", district=exclude)


@dataclass(frozen=True)
class ShardTask:
    spec: WorldSpec
    layout: Layout
    calendar: Calendar
    stations: Stations
    start: int
    frequent: np.ndarray


@dataclass
class ShardResult:
    agents: list[tuple]
    trips: list[tuple]
    legs: list[tuple]
    # per agent: (agent index, times, xs, ys)
    events: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]


def _day_trips(spec, layout, rng, day, home, work) -> list[tuple]:
    """(departure, arrival, from, to, window) of one workday; a place is (district, x, y)."""

    def leg(departure, origin, dest, window):
        return departure, departure + int(rng.integers(TRAVEL_S[0], TRAVEL_S[1] + 1)), origin, dest, window

    trips = [leg(day + int(rng.integers(*MORNING_DEPARTURE)), home, work, "morning")]
    if rng.random() < spec.midday_trip_prob:
        errand = _place(layout, rng, work[0], work[1:], spec.min_trip_m)
        out = leg(day + int(rng.integers(*MIDDAY_DEPARTURE)), work, errand, "midday")
        stay = int(rng.integers(ERRAND_STAY_S[0], ERRAND_STAY_S[1] + 1))
        trips += [out, leg(out[1] + stay, errand, work, "midday")]
    trips.append(leg(day + int(rng.integers(*EVENING_DEPARTURE)), work, home, "evening"))
    return trips


def _legs(rng, stations: Stations, card_id, departure, arrival, origin, dest, transfer_prob) -> list[tuple]:
    board = stations.ids[rng.choice(stations.of_district(origin))]
    alight = stations.ids[rng.choice(stations.of_district(dest))]
    if rng.random() >= transfer_prob:
        return [(card_id, departure, arrival, board, alight)]
    transfer = stations.ids[rng.choice(stations.of_district(dest))]
    first_alight = departure + (arrival - departure) // 3
    # below the transfer limit: the remaining ride is at most 30 minutes
    gap = int(rng.uniform(0.1, 0.6) * (arrival - first_alight))
    return [
        (card_id, departure, first_alight, board, transfer),
        (card_id, first_alight + gap, arrival, transfer, alight),
    ]


def _simulate_agent(task: ShardTask, index: int, frequent: bool, result: ShardResult):
    spec, layout, calendar = task.spec, task.layout, task.calendar
    rng = _seed(spec, 1, index)
    user_id, card_id = f"u{index:06d}", f"c{index:06d}"

    if spec.home_districts:
        home_district = spec.home_districts[index % len(spec.home_districts)]
    else:
        home_district = int(rng.integers(layout.n_districts))
    home = (home_district, *layout.random_point(home_district, rng))
    fixed_work = spec.work_districts[index % len(spec.work_districts)] if spec.work_districts else None
    work = _place(layout, rng, home_district, home[1:], spec.min_trip_m, fixed_work)
    result.agents.append((user_id, card_id, int(frequent), *home, *work))

    trips = []
    for day, workday in zip(calendar.day_starts, calendar.workdays):
        if workday:
            trips.extend(_day_trips(spec, layout, rng, day, home, work))

    t0, t1 = calendar.span
    seg_start, seg_end, seg_from, seg_to, travelling = [], [], [], [], []
    now, here = t0, home
    for departure, arrival, origin, dest, window in trips:
        seg_start += [now, departure]
        seg_end += [departure, arrival]
        seg_from += [here[1:], origin[1:]]
        seg_to += [here[1:], dest[1:]]
        travelling += [False, True]
        now, here = arrival, dest
        public = rng.random() < spec.public_share[window]
        displacement = math.hypot(dest[1] - origin[1], dest[2] - origin[2])
        result.trips.append(
            (user_id, card_id, PUBLIC if public else PRIVATE, int(frequent), departure, arrival,
             origin[0], dest[0], *origin[1:], *dest[1:], displacement)
        )
        if public:
            result.legs.extend(
                _legs(rng, task.stations, card_id, departure, arrival, origin[0], dest[0], spec.transfer_prob)
            )
    seg_start.append(now)
    seg_end.append(t1)
    seg_from.append(here[1:])
    seg_to.append(here[1:])
    travelling.append(False)

    gap_s = (spec.frequent_gap_min if frequent else spec.infrequent_gap_min) * MINUTE
    t = np.sort(np.floor(rng.uniform(t0, t1, rng.poisson((t1 - t0) / gap_s))))
    seg_start, seg_end = np.array(seg_start, dtype=float), np.array(seg_end, dtype=float)
    seg_from, seg_to = np.array(seg_from, dtype=float), np.array(seg_to, dtype=float)
    segment = np.searchsorted(seg_start, t, side="right") - 1
    frac = (t - seg_start[segment]) / np.maximum(seg_end[segment] - seg_start[segment], 1.0)
    xy = seg_from[segment] + frac[:, None] * (seg_to[segment] - seg_from[segment])

    if spec.regime == "detectable":
        keep = ~np.array(travelling)[segment] | (frac == 0)
        t, xy = t[keep], xy[keep]
        if frequent:
            forced_t = [t0, t1 - 1] + [v for trip in trips for v in trip[:2]]
            forced_xy = [home[1:], here[1:]] + [p for trip in trips for p in (trip[2][1:], trip[3][1:])]
            t = np.concatenate([t, forced_t])
            xy = np.concatenate([xy, np.array(forced_xy, dtype=float).reshape(-1, 2)])
            order = np.argsort(t, kind="stable")
            t, xy = t[order], xy[order]
    else:
        xy = np.column_stack(layout.snap_to_towers(xy[:, 0], xy[:, 1], spec.towers_per_side))

    result.events.append((index, t, xy[:, 0], xy[:, 1]))


def _simulate_shard(task: ShardTask) -> ShardResult:
    result = ShardResult([], [], [], [])
    for offset, frequent in enumerate(task.frequent):
        _simulate_agent(task, task.start + offset, bool(frequent), result)
    return result


def _place_stations(spec: WorldSpec, layout: Layout, rng: np.random.Generator) -> Stations:
    ids, xs, ys, districts = [], [], [], []
    for district in range(layout.n_districts):
        for k in range(spec.stations_per_district):
            x, y = layout.random_point(district, rng)
            ids.append(f"S{district:03d}_{k:03d}")
            xs.append(x)
            ys.append(y)
            districts.append(district)
    return Stations(tuple(ids), np.array(xs), np.array(ys), np.array(districts, dtype=np.int64))


def _boundary_cards(spec: WorldSpec, calendar: Calendar, stations: Stations) -> tuple[list[tuple], list[tuple]]:
    """Two cards riding 0 -> 1 -> 2 with a transfer gap just under and exactly at 45 minutes."""
    first = {d: stations.ids[stations.of_district(d)[0]] for d in range(min(3, spec.n_districts))}
    last = 2 if spec.n_districts > 2 else 0
    board = calendar.day_starts[0] + BOUNDARY_START
    legs, trips = [], []
    for k, gap in enumerate(BOUNDARY_GAPS_S):
        card_id = f"p{k:06d}"
        first_alight = board + BOUNDARY_LEG_S
        second_board = first_alight + gap
        second_alight = second_board + BOUNDARY_LEG_S
        legs += [
            (card_id, board, first_alight, first[0], first[1]),
            (card_id, second_board, second_alight, first[1], first[last]),
        ]
        if gap < BOUNDARY_GAPS_S[1]:
            trips.append((card_id, board, second_alight, 0, last))
        else:
            trips += [(card_id, board, first_alight, 0, 1), (card_id, second_board, second_alight, 1, last)]
    return legs, trips


def _to_lonlat(xs, ys, spec: WorldSpec):
    return unproject_arrays(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), spec.origin_point)


@dataclass
class World:
    spec: WorldSpec
    district_map: DistrictMap
    cdr: pd.DataFrame
    legs: pd.DataFrame
    stations: pd.DataFrame
    towers: pd.DataFrame
    truth: GroundTruth
    diagnostics: WorldDiagnostics


def generate(spec: WorldSpec, workers: int = 1, granularity_s: int = GRANULARITY_S) -> World:
    """
    Districts, stations, towers, CDR and smart-card logs plus the exact
    ground truth. The result depends on ``spec`` only, never on ``workers``.
    """
    check_feasible(spec)
    layout = Layout(spec.rows, spec.cols, spec.cell_m)
    calendar = Calendar.from_spec(spec)
    district_map = grid_districts(spec.origin_point, spec.rows, spec.cols, spec.cell_m)

    world_rng = _seed(spec, 0)
    frequent = np.zeros(spec.n_agents, dtype=bool)
    n_frequent = int(math.floor(spec.frequent_fraction * spec.n_agents + 0.5))
    frequent[world_rng.permutation(spec.n_agents)[:n_frequent]] = True
    stations = _place_stations(spec, layout, world_rng)

    tasks = [
        ShardTask(spec, layout, calendar, stations, a, frequent[a:b])
        for a, b in shard_bounds(spec.n_agents, workers * 4)
    ]
    results = map_shards(_simulate_shard, tasks, workers)

    agents = [row for r in results for row in r.agents]
    trips = [row for r in results for row in r.trips]
    legs = [row for r in results for row in r.legs]
    events = [e for r in results for e in r.events]
    event_agent = np.concatenate(
        [np.empty(0, dtype=np.int64)] + [np.full(len(t), i, dtype=np.int64) for i, t, _, _ in events]
    )
    event_t, event_x, event_y = (
        np.concatenate([np.empty(0)] + [e[k] for e in events]) for k in (1, 2, 3)
    )

    if spec.boundary_transfers and spec.n_agents and spec.stations_per_district:
        boundary_legs, boundary_trips = _boundary_cards(spec, calendar, stations)
        legs += boundary_legs
        for card_id, start_t, end_t, origin, dest in boundary_trips:
            trips.append((card_id, card_id, PUBLIC, 0, start_t, end_t, origin, dest) + (np.nan,) * 5)

    # one global log ordered by time, ties by agent then generation order
    order = np.lexsort((event_agent, event_t))
    lons, lats = _to_lonlat(event_x[order], event_y[order], spec)
    cdr = pd.DataFrame(
        {
            "user_id": [f"u{i:06d}" for i in event_agent[order]],
            "timestamp": event_t[order].astype(np.int64),
            "lon": lons,
            "lat": lats,
        },
        columns=["user_id", "timestamp", "lon", "lat"],
    )
    legs_frame = pd.DataFrame(legs, columns=LEG_COLUMNS).astype({"board_time": np.int64, "alight_time": np.int64})
    station_lons, station_lats = _to_lonlat(stations.xs, stations.ys, spec)
    stations_frame = pd.DataFrame(
        {"station_id": list(stations.ids), "lon": station_lons, "lat": station_lats}, columns=STATION_COLUMNS
    )
    tower_lons, tower_lats = _to_lonlat(*layout.towers(spec.towers_per_side), spec)
    towers_frame = pd.DataFrame(
        {"tower_id": [f"T{k:05d}" for k in range(len(tower_lons))], "lon": tower_lons, "lat": tower_lats},
        columns=TOWER_FILE_COLUMNS,
    )

    truth = ground_truth(spec, trips, agents, calendar.span, granularity_s)
    diagnostics = WorldDiagnostics(
        n_agents=spec.n_agents,
        n_frequent=int(frequent.sum()),
        n_events=len(cdr),
        n_legs=len(legs_frame),
        n_trips=len(truth.trips),
        n_public_trips=int((truth.trips["mode"] == PUBLIC).sum()),
        n_stations=len(stations_frame),
        n_towers=len(towers_frame),
    )
    logger.info(
        f"Generated {diagnostics.n_agents:,} agents, {diagnostics.n_events:,} events, "
        f"{diagnostics.n_trips:,} trips ({diagnostics.n_public_trips:,} public)"
    )
    return World(spec, district_map, cdr, legs_frame, stations_frame, towers_frame, truth, diagnostics)


def ground_truth(
    spec: WorldSpec,
    trips: list[tuple],
    agents: list[tuple],
    span: tuple[float, float],
    granularity_s: int = GRANULARITY_S,
) -> GroundTruth:
    columns = TRUTH_TRIP_COLUMNS[:8] + ["origin_x", "origin_y", "dest_x", "dest_y", "displacement_m"]
    frame = pd.DataFrame(trips, columns=columns)
    origin_lon, origin_lat = _to_lonlat(frame["origin_x"], frame["origin_y"], spec)
    dest_lon, dest_lat = _to_lonlat(frame["dest_x"], frame["dest_y"], spec)
    frame = frame.assign(origin_lon=origin_lon, origin_lat=origin_lat, dest_lon=dest_lon, dest_lat=dest_lat)
    frame = frame[TRUTH_TRIP_COLUMNS].astype(
        {"frequent": np.int64, "start_t": float, "end_t": float, "origin_district": np.int64, "dest_district": np.int64}
    )

    agent_columns = AGENT_COLUMNS[:4] + ["home_x", "home_y", "work_district", "work_x", "work_y"]
    agent_frame = pd.DataFrame(agents, columns=agent_columns)
    home_lon, home_lat = _to_lonlat(agent_frame["home_x"], agent_frame["home_y"], spec)
    work_lon, work_lat = _to_lonlat(agent_frame["work_x"], agent_frame["work_y"], spec)
    agent_frame = agent_frame.assign(home_lon=home_lon, home_lat=home_lat, work_lon=work_lon, work_lat=work_lat)
    agent_frame = agent_frame[AGENT_COLUMNS]

    def binned(subset: pd.DataFrame, label: str):
        matrices, _ = bin_counts(
            subset["end_t"], subset["origin_district"], subset["dest_district"],
            spec.n_districts, granularity_s, label, span,
        )
        return matrices

    return GroundTruth(
        trips=frame,
        agents=agent_frame,
        span=span,
        overall=binned(frame, "truth-overall"),
        public=binned(frame[frame["mode"] == PUBLIC], "truth-public"),
        private=binned(frame[frame["mode"] == PRIVATE], "truth-private"),
        frequent_overall=binned(frame[frame["frequent"] == 1], "truth-frequent"),
    )
