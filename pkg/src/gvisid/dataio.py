"""Datasets, experiment configs and result files.

Formats: datasets are CSV with a header row (columns ``t``, ``u0``..,
``y0``.., optional ``batch``); configs are JSON with a versioned schema;
results are JSON plus CSV metric tables.  All writers are deterministic
(sorted keys, no timestamps inside result payloads) so reruns with equal
seeds produce byte-identical files.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .errors import ConfigError

CONFIG_SCHEMA_ID = "gvisid-config-v1"
RESULT_SCHEMA_ID = "gvisid-result-v1"


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Uniformly sampled record: time, inputs and outputs."""

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    batch: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = self.t.size
        self.y = np.asarray(self.y, dtype=float).reshape(n, -1)
        if self.u is None:
            self.u = np.zeros((n, 0))
        else:
            self.u = np.asarray(self.u, dtype=float).reshape(n, -1)
        if self.batch is not None:
            self.batch = np.asarray(self.batch, dtype=int).reshape(n)
        self.validate()

    def validate(self):
        dt = np.diff(self.t)
        if self.batch is None:
            same = np.ones(dt.size, dtype=bool)
        else:
            same = self.batch[1:] == self.batch[:-1]
        if np.any(dt[same] <= 0):
            raise ValueError("time must be strictly increasing within a batch")
        if dt[same].size and np.ptp(dt[same]) > 1e-9 * max(1.0, abs(dt[same][0])):
            raise ValueError("sampling period must be uniform")

    @property
    def nu(self) -> int:
        return self.u.shape[1]

    @property
    def ny(self) -> int:
        return self.y.shape[1]

    @property
    def num_steps(self) -> int:
        return self.t.size - 1

    def split(self, n_batches: int) -> list:
        """Split one record into contiguous equal-size batches."""
        if n_batches < 1 or self.t.size % n_batches:
            raise ValueError("batch count must divide the record length")
        size = self.t.size // n_batches
        out = []
        for j in range(n_batches):
            s = slice(j * size, (j + 1) * size)
            out.append(Dataset(self.t[s], self.u[s], self.y[s]))
        return out

    def batches(self) -> list:
        """Per-batch datasets according to the batch column (or [self])."""
        if self.batch is None:
            return [self]
        out = []
        for b in np.unique(self.batch):
            idx = self.batch == b
            out.append(Dataset(self.t[idx], self.u[idx], self.y[idx]))
        return out

    def to_csv(self, path):
        cols = ["t"] + [f"u{i}" for i in range(self.nu)] \
            + [f"y{i}" for i in range(self.ny)]
        arrays = [self.t] + [self.u[:, i] for i in range(self.nu)] \
            + [self.y[:, i] for i in range(self.ny)]
        fmt = ["%.17g"] * len(arrays)
        if self.batch is not None:
            cols.append("batch")
            arrays.append(self.batch)
            fmt.append("%d")
        data = np.column_stack(arrays)
        _atomic_write_text(path, ",".join(cols) + "\n" + "\n".join(
            ",".join(f % v for f, v in zip(fmt, row)) for row in data) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = {name: raw[:, i] for i, name in enumerate(header)}
        if "t" not in cols:
            raise ValueError(f"{path}: missing 't' column")
        nu = sum(1 for c in header if c.startswith("u"))
        ny = sum(1 for c in header if c.startswith("y"))
        u = np.column_stack([cols[f"u{i}"] for i in range(nu)]) if nu else None
        y = np.column_stack([cols[f"y{i}"] for i in range(ny)])
        batch = cols["batch"].astype(int) if "batch" in cols else None
        return cls(cols["t"], u, y, batch=batch)


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

_OPTIMIZER_SCHEMA = {
    "type": "object",
    "properties": {
        "method": {"enum": ["trust-region", "adam"]},
        "grad_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "trust_radius": {"type": "number", "exclusiveMinimum": 0},
        "cg_max_iter": {"type": "integer", "minimum": 1},
        "step_size": {"type": "number", "exclusiveMinimum": 0},
        "decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "epochs": {"type": "integer", "minimum": 1},
    },
    "required": ["method"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "kind": {"enum": ["duffing", "linear", "custom"]},
        "seed": {"type": "integer", "minimum": 0},
        "realizations": {"type": "integer", "minimum": 1},
        "simulate": {
            "type": "object",
            "properties": {
                "t_final": {"type": "number", "exclusiveMinimum": 0},
                "sample_time": {"type": "number", "exclusiveMinimum": 0},
                "dt_sim": {"type": "number", "exclusiveMinimum": 0},
                "params": {"type": "object"},
                "nx": {"type": "integer", "minimum": 1},
                "nu": {"type": "integer", "minimum": 1},
                "ny": {"type": "integer", "minimum": 1},
                "n_samples": {"type": "integer", "minimum": 2},
                "rho_max": {"type": "number", "exclusiveMinimum": 0,
                            "exclusiveMaximum": 1},
                "noise_std_w": {"type": "number", "minimum": 0},
                "noise_std_v": {"type": "number", "minimum": 0},
                "batches": {"type": "integer", "minimum": 1},
                "input_hold": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "estimate": {
            "type": "object",
            "properties": {
                "parameterization": {
                    "enum": ["time-varying", "steady-state", "conv-smoother"]},
                "window": {"type": "integer", "minimum": 0},
                "quad_order": {"type": "integer", "minimum": 1},
                "chol_mode": {"enum": ["expm", "diag"]},
                "fit_theta": {"type": "boolean"},
                "kernel_init_std": {"type": "number", "minimum": 0},
                "optimizer": _OPTIMIZER_SCHEMA,
            },
            "additionalProperties": False,
        },
        "pem": {
            "type": "object",
            "properties": {
                "init": {"enum": ["null", "truth"]},
                "gain_std": {"type": "number", "minimum": 0},
                "gain": {"type": "array", "items": {"type": "number"}},
                "optimizer": _OPTIMIZER_SCHEMA,
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema", "kind", "seed"],
    "additionalProperties": False,
}


def validate_config(cfg: dict) -> dict:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        keys = "; ".join(
            f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}"
            for e in errors)
        raise ConfigError(f"invalid config: {keys}")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class EstimationResult:
    """Optimized parameters plus provenance; serializes losslessly to JSON."""

    kind: str                       # gvi | pem-linear | pem-duffing
    status: str                     # ok | failed
    theta: np.ndarray
    posterior: dict | None = None   # parameterization-specific arrays
    final_value: float = np.nan
    trace: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    wall_clock: float | None = None

    def to_json(self) -> dict:
        return {
            "schema": RESULT_SCHEMA_ID,
            "kind": self.kind,
            "status": self.status,
            "theta": np.asarray(self.theta, dtype=float).tolist(),
            "posterior": _encode_arrays(self.posterior),
            "final_value": self.final_value,
            "trace": self.trace,
            "metrics": self.metrics,
            "provenance": self.provenance,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "EstimationResult":
        if payload.get("schema") != RESULT_SCHEMA_ID:
            raise ValueError(f"unknown result schema {payload.get('schema')!r}")
        return cls(
            kind=payload["kind"], status=payload["status"],
            theta=np.asarray(payload["theta"], dtype=float),
            posterior=_decode_arrays(payload.get("posterior")),
            final_value=payload.get("final_value", np.nan),
            trace=payload.get("trace", []),
            metrics=payload.get("metrics", {}),
            provenance=payload.get("provenance", {}),
            wall_clock=payload.get("wall_clock"))

    def save(self, path):
        _atomic_write_text(path, json.dumps(self.to_json(), sort_keys=True,
                                            indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "EstimationResult":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _encode_arrays(obj):
    if obj is None:
        return None
    out = {}
    for k, v in obj.items():
        out[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def _decode_arrays(obj):
    if obj is None:
        return None
    out = {}
    for k, v in obj.items():
        out[k] = np.asarray(v, dtype=float) if isinstance(v, list) else v
    return out


def _atomic_write_text(path, text: str):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv_table(path, header, rows):
    """Plot-ready CSV with deterministic float formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{v:.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")
