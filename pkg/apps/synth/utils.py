from pathlib import Path

import pandas as pd

from apps.common.utils import hash_params, write_json
from apps.od.files import write_matrices
from apps.synth.generate import World
from apps.synth.schemas import TRUTH_TRIP_COLUMNS

CSV_OPTIONS = {"index": False, "float_format": "%.17g", "lineterminator": "\n"}


def write_world(world: World, out_dir) -> dict[str, Path]:
    """Every artifact of ``world`` under ``out_dir``; returns the written paths by name."""
    out_dir = Path(out_dir)
    truth_dir = out_dir / "truth"
    truth_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "districts": write_json(out_dir / "districts.geojson", world.district_map.to_feature_collection()),
        "cdr": out_dir / "cdr.csv",
        "legs": out_dir / "legs.csv",
        "stations": out_dir / "stations.csv",
        "towers": out_dir / "towers.csv",
        "truth_trips": truth_dir / "trips.csv",
        "truth_agents": truth_dir / "agents.csv",
    }
    world.cdr.to_csv(paths["cdr"], **CSV_OPTIONS)
    world.legs.to_csv(paths["legs"], **CSV_OPTIONS)
    world.stations.to_csv(paths["stations"], **CSV_OPTIONS)
    world.towers.to_csv(paths["towers"], **CSV_OPTIONS)
    world.truth.trips.to_csv(paths["truth_trips"], **CSV_OPTIONS)
    world.truth.agents.to_csv(paths["truth_agents"], **CSV_OPTIONS)

    spec = world.spec.model_dump(mode="json")
    for name in ("overall", "public", "private", "frequent_overall"):
        paths[f"truth_{name}"] = write_matrices(
            truth_dir / f"{name}.csv", getattr(world.truth, name), {"world_hash": hash_params(spec)}
        )
    paths["world"] = write_json(
        out_dir / "world.json",
        {"spec": spec, "hash": hash_params(spec), "diagnostics": world.diagnostics.model_dump()},
    )
    return paths


def read_truth_trips(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"user_id": str, "card_id": str, "mode": str})[TRUTH_TRIP_COLUMNS]
