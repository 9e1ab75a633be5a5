"""On-disk formats: scenario directories, run outputs and JSON configs.

Floats are written with ``repr`` so a save/load round trip is exact and
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import InputError, MalformedProfile
from .model import NetLoadTrace, SlotGrid, VehicleSpec
from .scenario import PriorityClass, Scenario, ScenarioConfig

FORMAT_VERSION = 1
SCENARIO_JSON = "scenario.json"
NET_LOAD_CSV = "net_load.csv"
AVAILABILITY_CSV = "availability.csv"
CONSUMPTION_CSV = "consumption.csv"
PATTERNS_CSV = "patterns.csv"


class ConfigError(InputError):
    """A JSON config that does not parse or validate; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def fingerprint(scenario: Scenario) -> str:
    """Stable hash of everything an algorithm sees in a scenario."""
    h = hashlib.sha256()
    h.update(repr((scenario.grid.slots_per_day, scenario.grid.days)).encode())
    for s in scenario.specs:
        h.update(repr((s.capacity, s.p_max, s.eta, s.c_offset, s.a_max)).encode())
    for arr in (scenario.net_load.values, scenario.availability.astype(np.uint8),
                scenario.consumption, scenario.initial_queue):
        h.update(np.ascontiguousarray(arr).tobytes())
    if scenario.forecast is not None:
        h.update(np.ascontiguousarray(scenario.forecast.values).tobytes())
    return h.hexdigest()[:16]


def to_jsonable(obj):
    """Plain JSON types; numpy values converted, NaN and infinities become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj, **kwargs) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, allow_nan=False, **kwargs)


def dump_json(obj, path: Path) -> None:
    Path(path).write_text(dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise InputError(f"missing file {path}") from exc
    if not rows:
        raise MalformedProfile(f"{path}: empty file")
    return rows[0], rows[1:]


# --- scenario directories -------------------------------------------------


def save_scenario(scenario: Scenario, out_dir, config: ScenarioConfig | None = None) -> dict:
    """Write a scenario as JSON metadata plus CSV traces; returns the metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, h = scenario.n_vehicles, scenario.grid.horizon
    meta = {
        "format": FORMAT_VERSION,
        "fingerprint": fingerprint(scenario),
        "slots_per_day": scenario.grid.slots_per_day,
        "days": scenario.days,
        "seed": scenario.seed,
        "households": scenario.households,
        "penetration": scenario.penetration,
        "min_margin": scenario.min_margin,
        "class_names": list(scenario.class_names),
        "fleet_size": n,
        "epsilon": scenario.epsilon if n else None,
        "strictly_feasible": scenario.strictly_feasible,
        "vehicles": [
            {"capacity": s.capacity, "p_max": s.p_max, "eta": s.eta, "c_offset": s.c_offset,
             "a_max": s.a_max, "class": int(scenario.class_index[i]),
             "initial_queue": float(scenario.initial_queue[i])}
            for i, s in enumerate(scenario.specs)
        ],
    }
    if config is not None:
        meta["config"] = config_to_dict(config)
    dump_json(meta, out / SCENARIO_JSON)
    fc = scenario.forecast.values if scenario.forecast is not None else np.full(h, np.nan)
    write_csv(out / NET_LOAD_CSV, ["slot", "s_net", "forecast"],
              ([k, fmt(scenario.net_load.values[k]), fmt(fc[k])] for k in range(h)))
    vcols = [f"v{i}" for i in range(n)]
    write_csv(out / AVAILABILITY_CSV, ["slot", *vcols],
              ([k, *map(int, scenario.availability[:, k])] for k in range(h)))
    write_csv(out / CONSUMPTION_CSV, ["slot", *vcols],
              ([k, *map(fmt, scenario.consumption[:, k])] for k in range(h)))
    if scenario.depart is not None:
        write_csv(out / PATTERNS_CSV, ["vehicle", "day", "depart_slot", "arrive_slot"],
                  ([i, d, int(scenario.depart[i, d]), int(scenario.arrive[i, d])]
                   for i in range(n) for d in range(scenario.days)))
    return meta


def load_scenario(path) -> Scenario:
    """Inverse of `save_scenario`."""
    root = Path(path)
    if root.is_file():
        root = root.parent
    try:
        meta = json.loads((root / SCENARIO_JSON).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"no {SCENARIO_JSON} in {root}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{root / SCENARIO_JSON}: {exc.msg}", exc.lineno) from exc
    if meta.get("format") != FORMAT_VERSION:
        raise InputError(f"unsupported scenario format {meta.get('format')!r}")
    grid = SlotGrid.from_slots(int(meta["slots_per_day"]), int(meta["days"]))
    h, vehicles = grid.horizon, meta["vehicles"]
    n = len(vehicles)

    _, rows = read_csv(root / NET_LOAD_CSV)
    if len(rows) != h:
        raise MalformedProfile(f"{NET_LOAD_CSV}: {len(rows)} rows, expected {h}")
    s = np.array([float(r[1]) for r in rows])
    fc = np.array([float(r[2]) for r in rows])

    def matrix(name, dtype):
        _, rr = read_csv(root / name)
        if len(rr) != h or any(len(r) != n + 1 for r in rr):
            raise MalformedProfile(f"{name}: expected {h} rows of {n + 1} columns")
        return np.array([[dtype(x) for x in r[1:]] for r in rr], dtype=float).T.reshape(n, h)

    avail = matrix(AVAILABILITY_CSV, int).astype(bool)
    cons = matrix(CONSUMPTION_CSV, float)
    depart = arrive = None
    if (root / PATTERNS_CSV).exists():
        depart = np.zeros((n, grid.days), dtype=int)
        arrive = np.zeros((n, grid.days), dtype=int)
        for r in read_csv(root / PATTERNS_CSV)[1]:
            i, d = int(r[0]), int(r[1])
            depart[i, d], arrive[i, d] = int(r[2]), int(r[3])
    scenario = Scenario(
        grid=grid,
        net_load=NetLoadTrace(s),
        specs=tuple(VehicleSpec(v["capacity"], v["p_max"], v["eta"], v["c_offset"], v["a_max"])
                    for v in vehicles),
        availability=avail,
        consumption=cons,
        initial_queue=np.array([v["initial_queue"] for v in vehicles], dtype=float),
        seed=int(meta["seed"]),
        households=int(meta["households"]),
        penetration=float(meta["penetration"]),
        forecast=None if np.all(np.isnan(fc)) else NetLoadTrace(fc, forecast=True),
        class_index=np.array([v["class"] for v in vehicles], dtype=int),
        class_names=tuple(meta["class_names"]),
        depart=depart,
        arrive=arrive,
        min_margin=float(meta["min_margin"]),
    )
    fp = fingerprint(scenario)
    if meta.get("fingerprint") not in (None, fp):
        raise InputError(f"scenario files in {root} do not match their recorded fingerprint")
    return scenario


# --- JSON configs ---------------------------------------------------------

_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}
_ONLINE_KEYS = {"beta", "uref_min", "uref_max", "eps_prime", "max_iters"}
_SOLVER_KEYS = {"max_iters", "tol", "feas_tol"}


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return no
    return None


def parse_config(text: str) -> dict:
    """Parse and validate a run config.

    The document has up to three sections: ``scenario`` (fields of
    `ScenarioConfig`), ``online`` (aggregator settings) and ``solver``. A flat
    document is read as the ``scenario`` section. Errors carry line numbers.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1)
    if not ({"scenario", "online", "solver"} & doc.keys()):
        doc = {"scenario": doc}
    unknown = set(doc) - {"scenario", "online", "solver"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown section {key!r}", _line_of(text, key))
    for section, allowed in (("scenario", _SCENARIO_KEYS), ("online", _ONLINE_KEYS),
                             ("solver", _SOLVER_KEYS)):
        body = doc.setdefault(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object", _line_of(text, section))
        for key in body:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in {section!r}", _line_of(text, key))
    sc = dict(doc["scenario"])
    if "classes" in sc:
        try:
            sc["classes"] = tuple(PriorityClass(str(c["name"]), float(c["fraction"]),
                                                float(c["c_offset"])) for c in sc["classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad priority class entry: {exc}", _line_of(text, "classes")) from exc
    try:
        doc["scenario"] = ScenarioConfig(**sc)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in sc if k in str(exc)), None)
        raise ConfigError(str(exc), _line_of(text, bad) if bad else None) from exc
    return doc


def read_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise InputError(f"config file {path} not found") from exc
    return parse_config(text)


def config_to_dict(config: ScenarioConfig) -> dict:
    d = {f.name: getattr(config, f.name) for f in fields(config)}
    d["classes"] = [{"name": c.name, "fraction": c.fraction, "c_offset": c.c_offset}
                    for c in config.classes]
    return d
