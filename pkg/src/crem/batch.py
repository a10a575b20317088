"""JSON experiment configs and their deterministic CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigParseError, CremError
from .estimators import MomentEstimate, estimate_free_energy, estimate_left_tail, estimate_max, estimate_neg_moment
from .profile import load_profile
from .rng import derive_seed
from .sampler import MAX_DEPTH

QUANTITIES = ("negmoment", "lefttail", "freenergy", "max")
CSV_COLUMNS = ["quantity", "profile_hash", "N", "k", "beta", "s_or_eps", "reps", "seed", "mean", "stderr", "warn"]
NUMERIC_COLUMNS = ["N", "k", "beta", "s_or_eps", "reps", "seed", "mean", "stderr"]


@dataclass
class GridPoint:
    N: int
    k: int = 0
    beta: float = 0.0
    s: float | None = None
    eps: float | None = None
    quantity: str | None = None  # overrides the config-wide quantity

    def to_dict(self) -> dict:
        d = {"N": self.N, "k": self.k, "beta": self.beta}
        for key in ("s", "eps", "quantity"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d


@dataclass
class ExperimentConfig:
    profile: str
    quantity: str
    grid: list[GridPoint]
    reps: int
    seed: int
    gamma: float = 1.5
    output: str | None = None
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {
            "profile": self.profile,
            "quantity": self.quantity,
            "grid": [p.to_dict() for p in self.grid],
            "reps": self.reps,
            "seed": self.seed,
            "gamma": self.gamma,
        }
        if self.output is not None:
            d["output"] = self.output
        return d

    def profile_path(self) -> str:
        p = Path(self.profile)
        if p.suffix == ".json" and not p.is_absolute():
            return str(self.base_dir / p)
        return self.profile


def _row_error(i, msg):
    return ConfigParseError(f"grid row {i}: {msg}")


def _parse_point(i: int, raw, default_quantity: str) -> GridPoint:
    if not isinstance(raw, dict):
        raise _row_error(i, "expected an object")
    unknown = set(raw) - {"N", "k", "beta", "s", "eps", "quantity"}
    if unknown:
        raise _row_error(i, f"unknown keys {sorted(unknown)}")
    try:
        N = int(raw["N"])
        k = int(raw.get("k", 0))
        beta = float(raw.get("beta", 0.0))
        s = None if raw.get("s") is None else float(raw["s"])
        eps = None if raw.get("eps") is None else float(raw["eps"])
    except KeyError:
        raise _row_error(i, "missing N") from None
    except (TypeError, ValueError) as exc:
        raise _row_error(i, str(exc)) from None
    quantity = raw.get("quantity")
    q = quantity or default_quantity
    if q not in QUANTITIES:
        raise _row_error(i, f"unknown quantity {q!r}")
    if N < 1:
        raise _row_error(i, f"N={N} must be at least 1")
    if not 0 <= k < N:
        raise _row_error(i, f"k={k} must satisfy 0 <= k < N={N}")
    if N - k > MAX_DEPTH:
        raise _row_error(i, f"depth N-k={N - k} exceeds {MAX_DEPTH}")
    if beta < 0:
        raise _row_error(i, f"beta={beta} is negative")
    if q != "lefttail" and k != 0:
        raise _row_error(i, f"quantity {q} needs k=0")
    if q == "negmoment" and (s is None or s <= 0):
        raise _row_error(i, "negmoment needs s > 0")
    if q == "lefttail" and (eps is None or not 0 < eps < 1):
        raise _row_error(i, "lefttail needs 0 < eps < 1")
    return GridPoint(N, k, beta, s, eps, quantity)


def parse_config(doc: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigParseError("config must be a JSON object")
    for key in ("profile", "grid", "reps", "seed"):
        if key not in doc:
            raise ConfigParseError(f"config lacks required field {key!r}")
    quantity = doc.get("quantity", "negmoment")
    if quantity not in QUANTITIES:
        raise ConfigParseError(f"unknown quantity {quantity!r}")
    if not isinstance(doc["grid"], list) or not doc["grid"]:
        raise ConfigParseError("grid must be a nonempty list")
    try:
        reps, seed, gamma = int(doc["reps"]), int(doc["seed"]), float(doc.get("gamma", 1.5))
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(str(exc)) from None
    if reps < 100:
        raise ConfigParseError(f"reps={reps} is below the minimum of 100")
    grid = [_parse_point(i, raw, quantity) for i, raw in enumerate(doc["grid"])]
    return ExperimentConfig(str(doc["profile"]), quantity, grid, reps, seed, gamma, doc.get("output"), Path(base_dir))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    return parse_config(doc, path.parent)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return str(x)


def estimate_row(quantity: str, est: MomentEstimate) -> dict:
    return {
        "quantity": quantity,
        "profile_hash": est.profile_hash,
        "N": est.N,
        "k": est.k,
        "beta": est.beta,
        "s_or_eps": est.param,
        "reps": est.reps,
        "seed": est.seed,
        "mean": est.mean,
        "stderr": est.stderr,
        "warn": est.warn,
    }


def run_point(profile, quantity, point: GridPoint, reps, seed, threads=None) -> MomentEstimate:
    if quantity == "negmoment":
        return estimate_neg_moment(profile, point.N, point.beta, point.s, reps, seed, threads)
    if quantity == "lefttail":
        return estimate_left_tail(profile, point.N, point.k, point.beta, point.eps, reps, seed, threads)
    if quantity == "freenergy":
        return estimate_free_energy(profile, point.N, point.beta, reps, seed, threads)
    return estimate_max(profile, point.N, reps, seed, threads)


def run_batch(config: ExperimentConfig, threads: int | None = None) -> list[dict]:
    """One result row per grid point, in grid order; point i uses seed derive_seed(seed, i)."""
    profile = load_profile(config.profile_path())
    rows = []
    for i, point in enumerate(config.grid):
        q = point.quantity or config.quantity
        try:
            est = run_point(profile, q, point, config.reps, derive_seed(config.seed, i), threads)
        except CremError as exc:
            raise type(exc)(f"grid row {i}: {exc}") from exc
        rows.append(estimate_row(q, est))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def numeric_columns(csv_text: str) -> list[list[str]]:
    """The numeric cells of a results CSV, as written."""
    reader = csv.DictReader(io.StringIO(csv_text))
    return [[row[c] for c in NUMERIC_COLUMNS] for row in reader]
