"""File formats: columnar spectrum files, JSON state/result files and YAML run configs.

Spectrum files are plain text::

    # optomech-tomo spectrum v1
    # created: 2026-01-01T00:00:00Z
    # meta: {"engine": "analytic", ...}
    # columns: detuning/omega_m spectrum*omega_m [sigma*omega_m]
    -8 0.0123...

Units on disk are always the dimensionless ratios ``dk / omega_m`` and
``S * omega_m``.  Rows are written sorted; reading accepts any order.
"""

import datetime
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import maximally_mixed, superposed_fock_density, thermal_distribution
from .errors import InvalidInputError, OptomechError
from .spectra import Spectrum, SystemParams

__all__ = [
    "FileFormatError",
    "SPECTRUM_MAGIC",
    "write_spectrum",
    "read_spectrum",
    "write_json",
    "read_json",
    "write_state",
    "read_state",
    "state_to_json",
    "state_from_json",
    "load_config",
    "RunConfig",
    "timestamp",
]

SPECTRUM_MAGIC = "# optomech-tomo spectrum v1"
NEGATIVE_SLACK = 1e-12


class FileFormatError(OptomechError, IOError):
    """A file is missing, unreadable or malformed."""


def timestamp():
    now = datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0)
    return now.strftime("%Y-%m-%dT%H:%M:%SZ")


def _clean_values(values):
    values = np.asarray(values, dtype=float)
    scale = max(float(np.max(np.abs(values))), 1.0) if values.size else 1.0
    if np.any(values < -NEGATIVE_SLACK * scale):
        raise InvalidInputError(f"spectrum has negative values (min {values.min():.3e})")
    return np.clip(values, 0.0, None)


def write_spectrum(path, spectrum, sigma=None, meta=None):
    """Write ``spectrum`` (already in ``omega_m`` units) to a path or open text stream."""
    spec = spectrum.sorted()
    det = spec.detunings
    if det.size and np.any(np.diff(det) <= 0):
        raise InvalidInputError("spectrum detunings must be distinct")
    vals = _clean_values(spec.values)
    info = dict(spectrum.provenance)
    info.update(meta or {})
    info["units"] = {"detuning": "omega_m", "spectrum": "1/omega_m"}
    cols = "detuning/omega_m spectrum*omega_m"
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[np.argsort(spectrum.detunings, kind="stable")]
        cols += " sigma*omega_m"
    lines = [
        SPECTRUM_MAGIC,
        f"# created: {timestamp()}",
        "# meta: " + json.dumps(info, sort_keys=True),
        f"# columns: {cols}",
    ]
    for i in range(det.size):
        row = f"{det[i]:.17g} {vals[i]:.17g}"
        if sigma is not None:
            row += f" {sigma[i]:.17g}"
        lines.append(row)
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)


def read_spectrum(path):
    """Read a spectrum file.

    Returns
    -------
    spectrum : Spectrum
        Sorted by detuning, with the header metadata as provenance.
    sigma : ndarray or None
        Per-point standard deviations when the file has a third column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read spectrum file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != SPECTRUM_MAGIC:
        raise FileFormatError(f"{path} is not a spectrum file (missing '{SPECTRUM_MAGIC}')")
    meta = {}
    rows = []
    for num, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# meta:"):
                try:
                    meta = json.loads(line[len("# meta:"):])
                except json.JSONDecodeError as exc:
                    raise FileFormatError(f"{path}:{num}: bad metadata: {exc}") from exc
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError as exc:
            raise FileFormatError(f"{path}:{num}: {exc}") from exc
    if not rows:
        raise FileFormatError(f"{path} contains no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1 or width.pop() not in (2, 3):
        raise FileFormatError(f"{path}: every row needs 2 or 3 columns")
    data = np.array(rows)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if np.any(np.diff(data[:, 0]) <= 0):
        raise FileFormatError(f"{path}: duplicate detunings")
    if np.any(data[:, 1] < 0):
        raise FileFormatError(f"{path}: negative spectral values")
    sigma = data[:, 2] if data.shape[1] == 3 else None
    return Spectrum(data[:, 0], data[:, 1], meta), sigma


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, payload, stamp=True):
    """Pretty JSON with sorted keys; ``created`` is the only run-dependent line."""
    data = dict(payload)
    if stamp:
        data["created"] = timestamp()
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_default) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path} is not valid JSON: {exc}") from exc


def state_to_json(state):
    arr = np.asarray(state)
    if arr.ndim == 1:
        return {"populations": np.real(arr).tolist()}
    return {"real": arr.real.tolist(), "imag": np.imag(arr).tolist()}


def state_from_json(data):
    """Population vector or density matrix from a state/result mapping."""
    if "populations" in data:
        return np.asarray(data["populations"], dtype=float)
    if "solution" in data:
        return np.asarray(data["solution"], dtype=float)
    for re_key, im_key in (("real", "imag"), ("solution_real", "solution_imag")):
        if re_key in data:
            re = np.asarray(data[re_key], dtype=float)
            im = np.asarray(data.get(im_key, np.zeros_like(re)), dtype=float)
            return re + 1j * im
    raise FileFormatError("state file needs 'populations', 'real'/'imag' or a solution")


def write_state(path, state, meta=None):
    payload = state_to_json(state)
    if meta:
        payload["meta"] = meta
    write_json(path, payload, stamp=False)


def read_state(path):
    return state_from_json(read_json(path))


# ---------------------------------------------------------------- run config

STATE_KINDS = ("thermal", "maximally_mixed", "fock", "superposition", "populations", "file")

_NUMERIC_DEFAULTS = {
    "n_d": 48,
    "n_d_reference": None,
    "N": 8,
    "plan": "sideband",
    "even": "upper",
    "points": None,
    "range": [-5.0, 5.0],
    "seed": 0,
    "mode": "diagonal",
    "engine": "analytic",
    "condition_cap": 1e12,
    "scan_tol": 1e-3,
    "N_min": 1,
    "N_max": 10,
    "grid": None,
    "project": False,
}

_ORACLE_DEFAULTS = {
    "window": 60.0,
    "spacing": None,
    "modes": None,
    "n_d": 40,
    "t_final": None,
    "tol": 1e-9,
    "max_dim": 4_000_000,
    "n_sideband": 8,
    "workers": 1,
}


def _parse_complex(value):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise InvalidInputError(f"bad complex coefficient {value!r}") from exc
    raise InvalidInputError(f"bad complex coefficient {value!r}")


@dataclass
class RunConfig:
    """Resolved run configuration.

    Frequencies are stored as ratios to ``omega_m``; the library is then
    driven with ``omega_m = 1``.
    """

    system: SystemParams
    photon: dict = field(default_factory=lambda: {"variant": "emission"})
    state: dict = None
    numerics: dict = field(default_factory=lambda: dict(_NUMERIC_DEFAULTS))
    oracle: dict = field(default_factory=lambda: dict(_ORACLE_DEFAULTS))
    source: str = None

    @classmethod
    def from_mapping(cls, data, source=None, base_dir=None):
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a mapping")
        unknown = set(data) - {"system", "photon", "state", "numerics", "oracle", "name",
                               "description"}
        if unknown:
            raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
        system = _parse_system(data.get("system") or {})
        photon = _parse_photon(data.get("photon") or {"variant": "emission"})
        state = data.get("state")
        if state is not None:
            state = _parse_state(state, base_dir)
        numerics = dict(_NUMERIC_DEFAULTS)
        for key, value in (data.get("numerics") or {}).items():
            if key not in numerics:
                raise InvalidInputError(f"numerics.{key}: unknown field")
            numerics[key] = value
        oracle = dict(_ORACLE_DEFAULTS)
        for key, value in (data.get("oracle") or {}).items():
            if key not in oracle:
                raise InvalidInputError(f"oracle.{key}: unknown field")
            oracle[key] = value
        cfg = cls(system, photon, state, numerics, oracle, source)
        cfg.check()
        return cfg

    def check(self):
        num = self.numerics
        for key in ("n_d", "N", "N_min", "N_max"):
            if int(num[key]) != num[key] or num[key] < 1:
                raise InvalidInputError(f"numerics.{key}: must be a positive integer")
        if num["n_d_reference"] is not None and (
                int(num["n_d_reference"]) != num["n_d_reference"] or num["n_d_reference"] < 1):
            raise InvalidInputError("numerics.n_d_reference: must be a positive integer")
        if num["plan"] not in ("sideband", "random", "explicit"):
            raise InvalidInputError(f"numerics.plan: unknown strategy {num['plan']!r}")
        if num["plan"] == "explicit" and not num["points"]:
            raise InvalidInputError("numerics.points: required for the explicit plan")
        if num["mode"] not in ("diagonal", "general"):
            raise InvalidInputError(f"numerics.mode: must be diagonal or general, got {num['mode']!r}")
        if num["engine"] not in ("analytic", "oracle"):
            raise InvalidInputError(f"numerics.engine: must be analytic or oracle")
        if num["even"] not in ("upper", "lower"):
            raise InvalidInputError("numerics.even: must be upper or lower")
        rng = num["range"]
        if not isinstance(rng, (list, tuple)) or len(rng) != 2:
            raise InvalidInputError("numerics.range: expected [low, high]")
        if num["grid"] is not None:
            g = num["grid"]
            if not isinstance(g, dict) or set(g) != {"low", "high", "count"}:
                raise InvalidInputError("numerics.grid: expected {low, high, count}")
        if self.photon["variant"] == "scattering" and num["engine"] != "oracle":
            # scattering spectra only come from the time-domain engine
            num["engine"] = "oracle"

    @property
    def reference_dim(self):
        nd = self.numerics["n_d_reference"]
        return int(nd if nd is not None else self.numerics["n_d"])

    def build_state(self, size=None):
        """Population vector or density matrix described by ``state``."""
        if self.state is None:
            raise InvalidInputError("state: no state specification in config")
        kind, spec = self.state["kind"], self.state
        dim = int(spec.get("size") or size or self.reference_dim)
        if kind == "thermal":
            return thermal_distribution(float(spec["value"]), dim)
        if kind == "maximally_mixed":
            return maximally_mixed(int(spec["value"]), max(dim, int(spec["value"])))
        if kind == "fock":
            n = int(spec["value"])
            out = np.zeros(max(n + 1, int(spec.get("size") or n + 1)))
            out[n] = 1.0
            return out
        if kind == "superposition":
            return superposed_fock_density([_parse_complex(c) for c in spec["value"]])
        if kind == "populations":
            return np.asarray(spec["value"], dtype=float)
        return read_state(spec["value"])

    def as_dict(self):
        return {
            "system": self.system.as_dict(),
            "photon": dict(self.photon),
            "state": None if self.state is None else {
                k: (str(v) if isinstance(v, Path) else v) for k, v in self.state.items()},
            "numerics": dict(self.numerics),
            "oracle": dict(self.oracle),
        }


def _parse_system(sec):
    raw = {"g0", "gamma_c", "omega_m"} & set(sec)
    ratio = {"g0_over_wm", "gamma_c_over_wm"} & set(sec)
    extra = set(sec) - {"g0", "gamma_c", "omega_m", "g0_over_wm", "gamma_c_over_wm"}
    if extra:
        raise InvalidInputError(f"system: unknown fields {sorted(extra)}")
    if raw and ratio:
        raise InvalidInputError("system: give either raw frequencies or ratios, not both")
    try:
        if ratio:
            return SystemParams.from_ratios(float(sec["g0_over_wm"]), float(sec["gamma_c_over_wm"]))
        if {"g0", "gamma_c"} <= raw:
            return SystemParams(float(sec["g0"]), float(sec["gamma_c"]),
                                float(sec.get("omega_m", 1.0))).scaled()
    except KeyError as exc:
        raise InvalidInputError(f"system.{exc.args[0]}: missing") from exc
    raise InvalidInputError("system: need g0 and gamma_c (or g0_over_wm and gamma_c_over_wm)")


def _parse_photon(sec):
    variant = sec.get("variant", "emission")
    if variant == "emission":
        return {"variant": "emission"}
    if variant != "scattering":
        raise InvalidInputError(f"photon.variant: unknown {variant!r}")
    for key in ("center", "width"):
        if key not in sec:
            raise InvalidInputError(f"photon.{key}: required for scattering")
    return {"variant": "scattering", "center": float(sec["center"]), "width": float(sec["width"])}


def _parse_state(sec, base_dir):
    if not isinstance(sec, dict):
        raise InvalidInputError("state: expected a mapping")
    kinds = [k for k in STATE_KINDS if k in sec]
    if len(kinds) != 1:
        raise InvalidInputError(
            f"state: exactly one of {', '.join(STATE_KINDS)} is required, got {kinds or 'none'}")
    extra = set(sec) - set(kinds) - {"size"}
    if extra:
        raise InvalidInputError(f"state: unknown fields {sorted(extra)}")
    kind = kinds[0]
    value = sec[kind]
    if kind == "file":
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        value = str(path)
    out = {"kind": kind, "value": value}
    if "size" in sec:
        out["size"] = int(sec["size"])
    return out


def parse_state_flag(text):
    """``thermal:1``, ``fock:2``, ``maximally_mixed:5``, ``superposition:1,1j,-1``, ``file:x.json``."""
    if ":" not in text:
        raise InvalidInputError(f"--state expects kind:value, got {text!r}")
    kind, value = text.split(":", 1)
    if kind == "superposition":
        return {kind: value.split(",")}
    if kind == "populations":
        return {kind: [float(x) for x in value.split(",")]}
    if kind in ("thermal",):
        return {kind: float(value)}
    if kind in ("fock", "maximally_mixed"):
        return {kind: int(value)}
    if kind == "file":
        return {kind: value}
    raise InvalidInputError(f"--state: unknown kind {kind!r}")


def load_config(path=None, overrides=None):
    """Read a YAML config (optional) and apply dotted-key ``overrides`` on top."""
    data = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except OSError as exc:
            raise FileFormatError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise InvalidInputError(f"config {path} is not valid YAML: {exc}") from exc
        base_dir = path.parent
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section == "state":
            data["state"] = value
            continue
        if section == "system":
            sys_sec = dict(data.get("system") or {})
            if key in ("g0", "gamma_c", "omega_m") and "g0_over_wm" in sys_sec:
                # a flag in raw units replaces ratio-form config entries
                sys_sec = {"g0": sys_sec.pop("g0_over_wm"),
                           "gamma_c": sys_sec.pop("gamma_c_over_wm", None)}
            sys_sec[key] = value
            data["system"] = sys_sec
            continue
        data.setdefault(section, {})
        data[section] = dict(data[section] or {})
        data[section][key] = value
    return RunConfig.from_mapping(data, source=None if path is None else str(path),
                                  base_dir=base_dir)


def finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)
