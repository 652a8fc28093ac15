"""
Scenario configurations, end-to-end runs and result files.

A scenario is a JSON object whose ``kind`` selects the experiment. Units are
part of every key name (``fsr_ghz``, ``gamma_mhz``, ``fiber_length_m``); no
unit inference is done. All violations in a configuration are collected and
reported together.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .cglmp import (
    REFERENCE_PHASES,
    CGLMPBasis,
    NoiseMixture,
    chain_probability,
    cglmp_lattice,
    i3_from_counts,
    model_i3,
    simulate_cglmp_run,
)
from .detection import (
    CoincidenceRecord,
    CoincidenceTable,
    DetectionConfig,
    build_table,
    coincidence_probability,
    coincidence_to_accidental,
    compute_jsi,
    dip_metrics,
    fit_fringe,
    fringe_scan,
    schmidt_bound,
    subtract_background,
    visibility,
)
from .errors import ValidationError
from .fixtures import (
    atomic_write_text,
    data_path,
    format_fixture,
    format_matrix,
    parse_fixture,
    read_matrix,
)
from .lattice import FrequencyLattice, Lineshape, make_comb_state
from .optics import (
    DispersionSpec,
    ModulatorDrive,
    SpectralMask,
    apply_mask,
    apply_modulator,
    best_single_order_index,
    dip_scan,
    dispersion_mask,
    equalize_sidebands,
    midpoint_channel,
)
from .tomography import bell_state, fidelity, mle_fit, negativity

KINDS = ("jsi", "dip", "fringe", "tomo", "cglmp", "simulate")

_COMMON = {"kind", "name", "description", "seed", "fixture", "output"}
_SECTIONS = {
    "jsi": {"lattice", "source", "detection", "jsi"},
    "dip": {"lattice", "dip"},
    "fringe": {"lattice", "source", "detection", "dispersion", "fringe"},
    "tomo": {"tomo"},
    "cglmp": {"lattice", "detection", "cglmp"},
    "simulate": {"lattice", "source", "detection", "elements", "channels", "simulate"},
}
_REQUIRED = {
    "jsi": {"source"},
    "dip": {"dip"},
    "fringe": {"source", "fringe"},
    "tomo": set(),
    "cglmp": set(),
    "simulate": {"source", "channels"},
}
_KEYS = {
    "output": {"dir", "plots"},
    "lattice": {"pump_thz", "fsr_ghz", "subdivision", "max_index"},
    "source": {"pairs", "pair_range", "alphas"},
    "detection": {"eta_signal", "eta_idler", "pair_flux_hz", "integration_time_s", "accidental_rate_hz", "car"},
    "jsi": {"pair_range", "sample", "subtract_background"},
    "dip": {"pairs", "lineshape", "gamma_mhz", "q_factor", "relative_phase_rad",
            "offset_start_ghz", "offset_stop_ghz", "offset_num", "offsets_ghz"},
    "dispersion": {"fiber_length_m", "dispersion_ps_nm_km", "ref_wavelength_nm", "compensate"},
    "fringe": {"pairs", "scanned_pair", "photons", "rf_steps", "sideband_order", "mod_index_rad",
               "phase_start_rad", "phase_stop_rad", "phase_num", "phases_rad", "sample", "subtract_background"},
    "tomo": {"convention", "restarts", "reference_matrix", "tol", "max_evals"},
    "cglmp": {"mode", "errors", "normalization", "lambda", "alpha", "beta", "triplet", "mod_index_rad", "sample"},
    "simulate": {"sample", "subtract_background"},
}
_ELEMENT_KEYS = {
    "mask": {"type", "phases_rad", "pair_phases_rad", "photons", "pass_indices", "pass_pairs"},
    "modulator": {"type", "rf_steps", "mod_index_rad", "equalize_orders", "maximize_order", "rf_phase_rad"},
    "dispersion": {"type", "fiber_length_m", "dispersion_ps_nm_km", "ref_wavelength_nm", "compensate"},
}


# -- validation ---------------------------------------------------------------

class _Checker:
    def __init__(self):
        self.violations = []

    def add(self, where, msg):
        self.violations.append(f"{where}: {msg}")

    def keys(self, where, obj, allowed):
        if not isinstance(obj, Mapping):
            self.add(where, "must be an object")
            return False
        for k in sorted(set(obj) - set(allowed)):
            self.add(f"{where}.{k}", "unknown key")
        return True

    def number(self, where, obj, key, lo=None, hi=None, lo_open=False, integer=False):
        if key not in obj:
            return
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.add(f"{where}.{key}", f"must be a finite number, got {v!r}")
            return
        if integer and int(v) != v:
            self.add(f"{where}.{key}", f"must be an integer, got {v!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.add(f"{where}.{key}", f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            self.add(f"{where}.{key}", f"must be <= {hi}, got {v!r}")

    def flag(self, where, obj, key):
        if key in obj and not isinstance(obj[key], bool):
            self.add(f"{where}.{key}", f"must be true or false, got {obj[key]!r}")

    def choice(self, where, obj, key, options):
        if key in obj and obj[key] not in options:
            self.add(f"{where}.{key}", f"must be one of {list(options)}, got {obj[key]!r}")

    def int_list(self, where, obj, key, length=None, lo=None):
        if key not in obj:
            return
        v = obj[key]
        if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            self.add(f"{where}.{key}", f"must be a list of integers, got {v!r}")
            return
        if length is not None and len(v) != length:
            self.add(f"{where}.{key}", f"must have {length} entries, got {len(v)}")
        if lo is not None and any(x < lo for x in v):
            self.add(f"{where}.{key}", f"entries must be >= {lo}")

    def num_list(self, where, obj, key):
        if key not in obj:
            return
        v = obj[key]
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.add(f"{where}.{key}", f"must be a list of numbers, got {v!r}")

    def exclusive(self, where, obj, keys, required=False):
        present = [k for k in keys if k in obj]
        if len(present) > 1:
            self.add(where, f"give only one of {list(keys)}, got {present}")
        elif required and not present:
            self.add(where, f"needs one of {list(keys)}")


def _check_complex(c, where, v):
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return
    c.add(where, f"must be a number or [re, im], got {v!r}")


def validate_config(raw):
    """List of every violation in the configuration mapping ``raw`` (empty if valid)."""
    c = _Checker()
    if not isinstance(raw, Mapping):
        return ["config: must be a JSON object"]
    kind = raw.get("kind")
    if kind not in KINDS:
        c.add("kind", f"must be one of {list(KINDS)}, got {kind!r}")
        return c.violations
    allowed = _COMMON | _SECTIONS[kind]
    c.keys("config", raw, allowed)
    for sec in sorted(_REQUIRED[kind] - set(raw)):
        c.add(sec, f"required for kind {kind!r}")
    c.number("config", raw, "seed", lo=0, hi=2**64 - 1, integer=True)
    if "fixture" in raw and not isinstance(raw["fixture"], str):
        c.add("config.fixture", "must be a path string")

    if "output" in raw and c.keys("output", raw["output"], _KEYS["output"]):
        if "dir" in raw["output"] and not isinstance(raw["output"]["dir"], str):
            c.add("output.dir", "must be a path string")
        c.flag("output", raw["output"], "plots")

    lat = raw.get("lattice", {})
    if c.keys("lattice", lat, _KEYS["lattice"]):
        c.number("lattice", lat, "pump_thz", lo=0, lo_open=True)
        c.number("lattice", lat, "fsr_ghz", lo=0, lo_open=True)
        c.number("lattice", lat, "subdivision", lo=1, integer=True)
        c.number("lattice", lat, "max_index", lo=1, integer=True)
        if all(isinstance(lat.get(k), int) for k in ("subdivision", "max_index")) and lat["max_index"] < lat["subdivision"]:
            c.add("lattice.max_index", "must be >= subdivision")

    if "source" in raw and c.keys("source", raw["source"], _KEYS["source"]):
        src = raw["source"]
        c.exclusive("source", src, ("pairs", "pair_range", "alphas"), required=True)
        c.int_list("source", src, "pairs", lo=1)
        c.int_list("source", src, "pair_range", length=2, lo=1)
        if "alphas" in src:
            if not isinstance(src["alphas"], Mapping) or not src["alphas"]:
                c.add("source.alphas", "must be a non-empty object {pair: amplitude}")
            else:
                for k, v in src["alphas"].items():
                    if not str(k).isdigit() or int(k) < 1:
                        c.add(f"source.alphas.{k}", "pair label must be a positive integer")
                    _check_complex(c, f"source.alphas.{k}", v)

    if "detection" in raw and c.keys("detection", raw["detection"], _KEYS["detection"]):
        d = raw["detection"]
        for k in ("eta_signal", "eta_idler"):
            c.number("detection", d, k, lo=0, hi=1, lo_open=True)
        for k in ("pair_flux_hz", "integration_time_s", "accidental_rate_hz"):
            c.number("detection", d, k, lo=0)
        c.number("detection", d, "car", lo=0, lo_open=True)
        c.exclusive("detection", d, ("car", "accidental_rate_hz"))

    sec = raw.get(kind, {}) if kind in _KEYS else {}
    if kind in _KEYS and c.keys(kind, sec, _KEYS[kind]):
        for k in ("sample", "subtract_background"):
            c.flag(kind, sec, k)
        _validate_kind(c, kind, sec)

    if kind == "fringe" and "dispersion" in raw:
        _validate_dispersion(c, "dispersion", raw["dispersion"], _KEYS["dispersion"])
    if kind == "simulate":
        _validate_simulate(c, raw)
    return c.violations


def _validate_dispersion(c, where, d, allowed):
    if c.keys(where, d, allowed):
        c.number(where, d, "fiber_length_m", lo=0)
        c.number(where, d, "dispersion_ps_nm_km")
        c.number(where, d, "ref_wavelength_nm", lo=0, lo_open=True)
        c.flag(where, d, "compensate")


def _validate_kind(c, kind, sec):
    if kind == "jsi":
        c.int_list("jsi", sec, "pair_range", length=2, lo=1)
    elif kind == "dip":
        c.int_list("dip", sec, "pairs", length=2, lo=1)
        if "pairs" not in sec:
            c.add("dip.pairs", "required")
        c.choice("dip", sec, "lineshape", ("lorentzian", "delta"))
        c.exclusive("dip", sec, ("gamma_mhz", "q_factor"))
        c.number("dip", sec, "gamma_mhz", lo=0, lo_open=True)
        c.number("dip", sec, "q_factor", lo=0, lo_open=True)
        c.number("dip", sec, "relative_phase_rad")
        c.exclusive("dip", sec, ("offsets_ghz", "offset_num"), required=True)
        c.num_list("dip", sec, "offsets_ghz")
        c.number("dip", sec, "offset_num", lo=0, integer=True)
        if "offset_num" in sec:
            for k in ("offset_start_ghz", "offset_stop_ghz"):
                if k not in sec:
                    c.add(f"dip.{k}", "required with offset_num")
                c.number("dip", sec, k)
    elif kind == "fringe":
        c.int_list("fringe", sec, "pairs", length=2, lo=1)
        if "pairs" not in sec:
            c.add("fringe.pairs", "required")
        c.number("fringe", sec, "scanned_pair", lo=1, integer=True)
        if "pairs" in sec and "scanned_pair" in sec and sec["scanned_pair"] not in sec["pairs"]:
            c.add("fringe.scanned_pair", "must be one of fringe.pairs")
        c.choice("fringe", sec, "photons", ("signal", "idler", "both"))
        c.number("fringe", sec, "rf_steps", lo=1, integer=True)
        c.number("fringe", sec, "sideband_order", lo=1, integer=True)
        c.number("fringe", sec, "mod_index_rad", lo=0, hi=20)
        c.exclusive("fringe", sec, ("phases_rad", "phase_num"), required=True)
        c.num_list("fringe", sec, "phases_rad")
        c.number("fringe", sec, "phase_num", lo=1, integer=True)
        if "phase_num" in sec:
            for k in ("phase_start_rad", "phase_stop_rad"):
                if k not in sec:
                    c.add(f"fringe.{k}", "required with phase_num")
                c.number("fringe", sec, k)
    elif kind == "tomo":
        c.choice("tomo", sec, "convention", ("shaper", "label"))
        c.number("tomo", sec, "restarts", lo=0, integer=True)
        c.number("tomo", sec, "tol", lo=0, lo_open=True)
        c.number("tomo", sec, "max_evals", lo=1, integer=True)
        if "reference_matrix" in sec and not isinstance(sec["reference_matrix"], str):
            c.add("tomo.reference_matrix", "must be a path string")
    elif kind == "cglmp":
        c.choice("cglmp", sec, "mode", ("counts", "simulate"))
        c.choice("cglmp", sec, "errors", ("auto", "listed", "poisson"))
        c.choice("cglmp", sec, "normalization", ("reference", "absolute"))
        c.number("cglmp", sec, "lambda", lo=0, hi=1)
        c.num_list("cglmp", sec, "alpha")
        c.num_list("cglmp", sec, "beta")
        c.int_list("cglmp", sec, "triplet", length=3, lo=1)
        c.number("cglmp", sec, "mod_index_rad", lo=0, hi=20)
        for k in ("alpha", "beta"):
            if isinstance(sec.get(k), list) and len(sec[k]) != 2:
                c.add(f"cglmp.{k}", "must have 2 entries")
        if sec.get("mode", "counts") == "counts":
            for k in ("lambda", "sample", "mod_index_rad"):
                if k in sec:
                    c.add(f"cglmp.{k}", "only used with mode 'simulate'")


def _validate_simulate(c, raw):
    elements = raw.get("elements", [])
    if not isinstance(elements, list):
        c.add("elements", "must be a list")
        elements = []
    for i, el in enumerate(elements):
        where = f"elements[{i}]"
        if not isinstance(el, Mapping) or el.get("type") not in _ELEMENT_KEYS:
            c.add(where, f"needs type in {list(_ELEMENT_KEYS)}")
            continue
        c.keys(where, el, _ELEMENT_KEYS[el["type"]])
        if el["type"] == "mask":
            c.exclusive(where, el, ("phases_rad", "pair_phases_rad", "pass_indices", "pass_pairs"), required=True)
            c.choice(where, el, "photons", ("signal", "idler", "both"))
            c.int_list(where, el, "pass_indices")
            c.int_list(where, el, "pass_pairs", lo=1)
            for k in ("phases_rad", "pair_phases_rad"):
                if k in el and not isinstance(el[k], Mapping):
                    c.add(f"{where}.{k}", "must be an object {index: phase}")
        elif el["type"] == "modulator":
            c.number(where, el, "rf_steps", lo=1, integer=True)
            c.number(where, el, "mod_index_rad", lo=0, hi=20)
            c.number(where, el, "rf_phase_rad")
            c.int_list(where, el, "equalize_orders", lo=1)
            c.number(where, el, "maximize_order", lo=1, integer=True)
            c.exclusive(where, el, ("mod_index_rad", "equalize_orders", "maximize_order"), required=True)
        else:
            _validate_dispersion(c, where, el, _ELEMENT_KEYS["dispersion"])
    ch = raw.get("channels")
    if ch is not None:
        ok = isinstance(ch, list) and ch and all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(x, int) for x in p) and p[0] > 0 > p[1]
            for p in ch
        )
        if not ok:
            c.add("channels", "must be a non-empty list of [signal_index > 0, idler_index < 0]")


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario. ``raw`` is the JSON object; ``base_dir`` resolves relative paths."""

    raw: Mapping
    base_dir: Path | None = None

    def __post_init__(self):
        violations = validate_config(self.raw)
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, "raw", copy.deepcopy(dict(self.raw)))

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
        return cls(raw, path.parent)

    @property
    def kind(self):
        return self.raw["kind"]

    @property
    def seed(self):
        return int(self.raw.get("seed", 0))

    def section(self, name):
        return self.raw.get(name, {})

    def path(self, value):
        p = Path(value)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    @property
    def fixture(self):
        return self.path(self.raw["fixture"]) if "fixture" in self.raw else None

    @property
    def out_dir(self):
        d = self.section("output").get("dir")
        return self.path(d) if d else None

    def with_overrides(self, seed=None, fixture=None, out_dir=None):
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if fixture is not None:
            raw["fixture"] = str(Path(fixture).resolve())
        if out_dir is not None:
            raw.setdefault("output", {})["dir"] = str(Path(out_dir).resolve())
        return ScenarioConfig(raw, self.base_dir)

    def digest(self):
        """SHA-256 of the canonical JSON of the configuration, output location excluded."""
        raw = copy.deepcopy(self.raw)
        raw.get("output", {}).pop("dir", None)
        if raw.get("output") == {}:
            del raw["output"]
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def list_scenarios():
    """Names of the bundled scenarios."""
    return sorted(p.stem for p in data_path("scenarios").glob("*.json"))


def load_scenario(name):
    return ScenarioConfig.load(data_path("scenarios") / f"{name}.json")


# -- result bundle --------------------------------------------------------------

@dataclass(frozen=True)
class Sweep:
    columns: tuple
    rows: tuple = ()


@dataclass(frozen=True)
class ResultBundle:
    kind: str
    scalars: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)
    matrices: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


# -- builders shared by several kinds -----------------------------------------------

def _lattice(cfg, **defaults):
    kw = {**defaults, **cfg.section("lattice")}
    return FrequencyLattice(**kw)


def _alphas(src):
    if "pairs" in src:
        return {k: 1.0 for k in src["pairs"]}
    if "pair_range" in src:
        a, b = src["pair_range"]
        return {k: 1.0 for k in range(a, b + 1)}
    return {int(k): complex(*v) if isinstance(v, list) else complex(v) for k, v in src["alphas"].items()}


def _detection(cfg, peak_probability=1.0):
    d = cfg.section("detection")
    det = DetectionConfig(
        eta_signal=d.get("eta_signal", 1.0),
        eta_idler=d.get("eta_idler", 1.0),
        pair_flux=d.get("pair_flux_hz", 1.0),
        integration_time=d.get("integration_time_s", 1.0),
        accidental_rate=d.get("accidental_rate_hz", 0.0),
        rng_seed=cfg.seed,
    )
    if "car" in d:
        det = det.with_car(d["car"], peak_probability)
    return det


def _linspace(sec, prefix, unit):
    return np.linspace(sec[f"{prefix}_start_{unit}"], sec[f"{prefix}_stop_{unit}"], int(sec[f"{prefix}_num"]))


def _table_sweep(table, column="counts"):
    return Sweep(
        ("signal_channel", "idler_channel", column, "accidentals"),
        tuple((r.signal_channel, r.idler_channel, r.counts, r.accidentals) for r in table.records),
    )


# -- kinds ----------------------------------------------------------------

def _run_jsi(cfg):
    src = cfg.section("source")
    alphas = _alphas(src)
    sec = cfg.section("jsi")
    lo, hi = sec.get("pair_range", [min(alphas), max(alphas)])
    lattice = _lattice(cfg, max_index=2 * hi + 4)
    state = make_comb_state(lattice, alphas)
    peak = max(abs(c) ** 2 for c in state.amplitudes.values())
    det = _detection(cfg, peak)
    pairs = range(lo, hi + 1)
    sig = [lattice.signal_index(k) for k in pairs]
    idl = [lattice.idler_index(k) for k in pairs]
    jsi = compute_jsi(state, sig, idl, det)
    if sec.get("sample", False):
        rng = np.random.default_rng(cfg.seed)
        jsi = rng.poisson(jsi).astype(float)
    floor = det.accidental_counts
    subtract = sec.get("subtract_background", True)
    scalars = {
        "schmidt_bound": schmidt_bound(jsi, floor if subtract else 0.0),
        "schmidt_bound_raw": schmidt_bound(jsi),
        "pairs": float(len(pairs)),
    }
    if floor > 0:
        scalars["car"] = coincidence_to_accidental(jsi, floor)
    return ResultBundle("jsi", scalars, matrices={"jsi": jsi})


def _run_dip(cfg):
    sec = cfg.section("dip")
    lattice = _lattice(cfg)
    a, b = sec["pairs"]
    if sec.get("lineshape", "lorentzian") == "delta":
        shape = Lineshape("delta")
    elif "gamma_mhz" in sec:
        shape = Lineshape("lorentzian", sec["gamma_mhz"])
    else:
        shape = Lineshape.from_quality_factor(lattice.pump_thz, sec.get("q_factor", 2e6))
    offsets = sec["offsets_ghz"] if "offsets_ghz" in sec else _linspace(sec, "offset", "ghz")
    phase = sec.get("relative_phase_rad", np.pi)
    scan = dip_scan(a, b, shape, offsets, phase, lattice.fsr_ghz)
    scalars = {"gamma_mhz": shape.fwhm_mhz if shape.fwhm_mhz else 0.0}
    if scan:
        m = dip_metrics(scan)
        scalars.update({
            "dip_offset_ghz": m["x_min"],
            "dip_minimum": m["y_min"],
            "dip_visibility": m["visibility"],
            "dip_fwhm_mhz": m["fwhm"] * 1e3,
        })
    return ResultBundle("dip", scalars, sweeps={"dip": Sweep(("offset_GHz", "coincidence"), tuple(scan))})


def fringe_setup(cfg):
    """Lattice, detection channel and ``phase -> state`` builder for a fringe scenario."""
    sec = cfg.section("fringe")
    a, b = sec["pairs"]
    lattice = _lattice(cfg, subdivision=4, max_index=4 * (max(a, b) + 2))
    alphas = _alphas(cfg.section("source"))
    state0 = make_comb_state(lattice, alphas)
    d = cfg.section("dispersion")
    if d:
        spec = DispersionSpec(
            d.get("fiber_length_m", 0.0), d.get("dispersion_ps_nm_km", 17.0), d.get("ref_wavelength_nm", 1550.0)
        )
        state0 = apply_mask(state0, dispersion_mask(lattice, spec))
        if d.get("compensate", False):
            state0 = apply_mask(state0, dispersion_mask(lattice, spec, compensate=True))
    gap = abs(b - a) * lattice.subdivision
    order = sec.get("sideband_order", 2)
    rf_steps = sec.get("rf_steps", gap // (2 * order) if gap % (2 * order) == 0 else 0)
    if rf_steps * order * 2 != gap:
        raise ValidationError(
            [f"fringe: sideband order {order} at rf_steps {rf_steps} does not meet midway between pairs {a} and {b}"]
        )
    mu = sec.get("mod_index_rad", best_single_order_index(order))
    drive = ModulatorDrive(rf_steps, mu)
    scanned = sec.get("scanned_pair", max(a, b))
    photons = sec.get("photons", "signal")
    share = 0.5 if photons == "both" else 1.0

    def build(phi):
        mask = SpectralMask.pair_phases(lattice, {scanned: share * phi}, photons)
        return apply_modulator(apply_mask(state0, mask), drive)

    channel = (midpoint_channel(lattice, a, b, "signal"), midpoint_channel(lattice, a, b, "idler"))
    return lattice, channel, build


def _run_fringe(cfg):
    sec = cfg.section("fringe")
    lattice, channel, build = fringe_setup(cfg)
    phases = sec["phases_rad"] if "phases_rad" in sec else _linspace(sec, "phase", "rad")
    peak = max(coincidence_probability(build(p), *channel) for p in np.linspace(0, 2 * np.pi, 73))
    det = _detection(cfg, peak)
    scan = fringe_scan(build, phases, channel, det, sample=sec.get("sample", False))
    table = CoincidenceTable(
        [_record(channel, n, det.accidental_counts) for _, n in scan], det.integration_time
    )
    ph = [p for p, _ in scan]
    raw = [r.counts for r in table.records]
    scalars = {}
    fit_raw = fit_fringe(ph, raw)
    scalars["visibility_raw"] = fit_raw.visibility
    if sec.get("subtract_background", True) and det.accidental_counts > 0:
        sub = subtract_background(table)
        counts = [r.counts for r in sub.records]
        fit = fit_fringe(ph, counts)
    else:
        counts = raw
        fit = fit_raw
    scalars["visibility"] = fit.visibility
    scalars["fringe_offset_rad"] = fit.offset
    scalars["fringe_amplitude"] = fit.amplitude
    if max(counts) + min(counts) > 0:
        scalars["visibility_minmax"] = visibility(max(counts), min(counts))
    rows = tuple((p, n, c) for p, n, c in zip(ph, raw, counts))
    return ResultBundle(
        "fringe", scalars, sweeps={"fringe": Sweep(("phase_rad", "counts", "counts_subtracted"), rows)}
    )


def _record(channel, n, acc):
    return CoincidenceRecord(channel[0], channel[1], n, acc)


def _run_tomo(cfg):
    sec = cfg.section("tomo")
    path = cfg.fixture or data_path("table1.csv")
    table = parse_fixture(path, "table1")
    data = table.data()
    fit = mle_fit(
        data,
        convention=sec.get("convention", "shaper"),
        restarts=int(sec.get("restarts", 8)),
        seed=cfg.seed,
        tol=sec.get("tol", 1e-10),
        max_evals=int(sec.get("max_evals", 200_000)),
    )
    rho = fit.rho
    ref_path = cfg.path(sec["reference_matrix"]) if "reference_matrix" in sec else data_path("qubit_rho_reference.txt")
    ref = read_matrix(ref_path)
    scalars = {
        "negativity": negativity(rho),
        "fidelity": fidelity(rho, ref),
        "fidelity_bell": fidelity(rho, bell_state(2)),
        "max_abs_deviation": float(np.max(np.abs(rho - ref))),
        "likelihood": fit.likelihood,
        "normalization": data.normalization,
        "negativity_reference": negativity(ref),
    }
    return ResultBundle("tomo", scalars, matrices={"rho": rho})


def _basis(sec):
    kw = {}
    if "alpha" in sec:
        kw["alpha"] = tuple(sec["alpha"])
    if "beta" in sec:
        kw["beta"] = tuple(sec["beta"])
    if "triplet" in sec:
        kw["triplet"] = tuple(sec["triplet"])
    return CGLMPBasis(**kw)


def _run_cglmp(cfg):
    sec = cfg.section("cglmp")
    basis = _basis(sec)
    errors = sec.get("errors", "auto")
    if sec.get("mode", "counts") == "counts":
        path = cfg.fixture or data_path("table2.csv")
        counts = parse_fixture(path, "table2").counts()
        i3, sigma = i3_from_counts(counts, errors, sec.get("normalization", "reference"))
        scalars = {"i3": i3, "i3_sigma": sigma}
        for mode in ("poisson", "listed"):
            if mode != "listed" or counts.stds:
                scalars[f"i3_sigma_{mode}"] = i3_from_counts(counts, mode)[1]
        scalars["i3_violation_sigmas"] = (i3 - 2) / sigma
    else:
        lattice = _lattice(cfg, subdivision=2, max_index=cglmp_lattice(basis).max_index)
        mu = sec.get("mod_index_rad", equalize_sidebands([1, 3]))
        noise = NoiseMixture(sec.get("lambda", 1.0))
        peak = chain_probability(noise, *REFERENCE_PHASES["P_max"], basis, lattice, mu)
        det = _detection(cfg, peak)
        counts = simulate_cglmp_run(noise, basis, det, lattice, mu, sample=sec.get("sample", True))
        norm = sec.get("normalization", "absolute")
        i3, sigma = i3_from_counts(counts, "poisson" if errors == "auto" else errors, norm)
        scalars = {"i3": i3, "i3_sigma": sigma, "i3_model": model_i3(noise, basis), "lambda": noise.lam}
    rows = tuple((label, n) for label, n in counts.counts.items()) + (("P_max", counts.n_max), ("P_min", counts.n_min))
    return ResultBundle("cglmp", scalars, sweeps={"terms": Sweep(("term", "counts"), rows)})


def build_chain(cfg, lattice):
    """Apply the configured element list to the source state."""
    state = make_comb_state(lattice, _alphas(cfg.section("source")))
    for el in cfg.raw.get("elements", []):
        t = el["type"]
        if t == "mask":
            photons = el.get("photons", "both")
            if "phases_rad" in el:
                mask = SpectralMask.phases({int(j): p for j, p in el["phases_rad"].items()}, lattice)
            elif "pair_phases_rad" in el:
                mask = SpectralMask.pair_phases(lattice, {int(k): p for k, p in el["pair_phases_rad"].items()}, photons)
            elif "pass_indices" in el:
                mask = SpectralMask.passband(el["pass_indices"], lattice)
            else:
                mask = SpectralMask.select_pairs(lattice, {k: 1.0 for k in el["pass_pairs"]})
            state = apply_mask(state, mask)
        elif t == "modulator":
            if "equalize_orders" in el:
                mu = equalize_sidebands(el["equalize_orders"])
            elif "maximize_order" in el:
                mu = best_single_order_index(el["maximize_order"])
            else:
                mu = el["mod_index_rad"]
            state = apply_modulator(state, ModulatorDrive(el.get("rf_steps", 1), mu, el.get("rf_phase_rad", 0.0)))
        else:
            spec = DispersionSpec(
                el.get("fiber_length_m", 0.0), el.get("dispersion_ps_nm_km", 17.0), el.get("ref_wavelength_nm", 1550.0)
            )
            state = apply_mask(state, dispersion_mask(lattice, spec, el.get("compensate", False)))
    return state


def _run_simulate(cfg):
    sec = cfg.section("simulate")
    alphas = _alphas(cfg.section("source"))
    channels = [tuple(p) for p in cfg.raw["channels"]]
    reach = max([max(alphas) * 2 + 8] + [max(s, -i) + 2 for s, i in channels])
    lattice = _lattice(cfg, max_index=reach)
    state = build_chain(cfg, lattice)
    peak = max(coincidence_probability(state, s, i) for s, i in channels) or 1.0
    det = _detection(cfg, peak)
    table = build_table(state, channels, det, sample=sec.get("sample", True))
    scalars = {"survival": state.norm(), "total_counts": float(sum(r.counts for r in table.records))}
    tables = {"coincidences": table}
    if sec.get("subtract_background", False):
        tables["coincidences_subtracted"] = subtract_background(table)
    return ResultBundle("simulate", scalars, tables=tables)


_DISPATCH = {
    "jsi": _run_jsi,
    "dip": _run_dip,
    "fringe": _run_fringe,
    "tomo": _run_tomo,
    "cglmp": _run_cglmp,
    "simulate": _run_simulate,
}


def run_scenario(config, write=True):
    """Run ``config`` and return its :class:`ResultBundle`.

    Outputs are written when the configuration names an output directory and
    ``write`` is true.
    """
    if not isinstance(config, ScenarioConfig):
        config = ScenarioConfig(config)
    bundle = _DISPATCH[config.kind](config)
    prov = {
        "kind": config.kind,
        "name": config.raw.get("name", ""),
        "config_sha256": config.digest(),
        "seed": config.seed,
        "version": __version__,
    }
    bundle = ResultBundle(bundle.kind, bundle.scalars, bundle.sweeps, bundle.matrices, bundle.tables, prov)
    if write and config.out_dir is not None:
        emit_outputs(bundle, config.out_dir, plots=config.section("output").get("plots", True))
    return bundle


# -- output files ----------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    return str(v)


def format_sweep(sweep):
    lines = [",".join(sweep.columns)]
    lines += [",".join(_cell(v) for v in row) for row in sweep.rows]
    return "\n".join(lines) + "\n"


def format_results(bundle, files=()):
    doc = {
        "kind": bundle.kind,
        "scalars": {k: float(v) for k, v in sorted(bundle.scalars.items())},
        "provenance": bundle.provenance,
        "files": sorted(files),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def svg_line_plot(sweep, x_col=0, y_col=1, width=480, height=320):
    """Minimal SVG line rendering of one sweep column against another."""
    pad = 48
    pts = [(float(r[x_col]), float(r[y_col])) for r in sweep.rows]
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )
    axes = (
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad / 2}" y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad / 2}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{sweep.columns[x_col]}</text>\n'
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{sweep.columns[y_col]}</text>\n'
    )
    body = ""
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(0.0, min(ys)), max(ys)
        sx = (width - 1.5 * pad) / (x1 - x0 if x1 > x0 else 1.0)
        sy = (height - 1.5 * pad) / (y1 - y0 if y1 > y0 else 1.0)
        coords = " ".join(f"{pad + (x - x0) * sx:.2f},{height - pad - (y - y0) * sy:.2f}" for x, y in pts)
        body = (
            f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{coords}"/>\n'
            f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.4g}</text>\n'
            f'<text x="{width - pad / 2}" y="{height - pad + 16}" font-size="10" text-anchor="end">{x1:.4g}</text>\n'
            f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>\n'
            f'<text x="{pad - 4}" y="{pad / 2 + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>\n'
        )
    return head + axes + body + "</svg>\n"


def emit_outputs(bundle, out_dir, plots=True):
    """Write ``bundle`` under ``out_dir`` and return the written file names.

    ``results.json`` holds scalars and provenance; each sweep becomes
    ``sweep_<name>.csv`` (plus ``.svg`` when ``plots``), each matrix
    ``matrix_<name>.txt`` and each coincidence table ``table_<name>.csv``.
    Every file is written atomically and depends only on the bundle.
    """
    out = Path(out_dir)
    written = {}
    for name, sweep in sorted(bundle.sweeps.items()):
        written[f"sweep_{name}.csv"] = format_sweep(sweep)
        if plots and len(sweep.columns) >= 2 and _numeric(sweep):
            written[f"sweep_{name}.svg"] = svg_line_plot(sweep)
    for name, m in sorted(bundle.matrices.items()):
        written[f"matrix_{name}.txt"] = format_matrix(m)
    for name, table in sorted(bundle.tables.items()):
        written[f"table_{name}.csv"] = format_fixture(table)
    written["results.json"] = format_results(bundle, [k for k in written])
    for fname, text in written.items():
        atomic_write_text(out / fname, text)
    return sorted(written)


def _numeric(sweep):
    return all(isinstance(r[0], (int, float, np.number)) and isinstance(r[1], (int, float, np.number)) for r in sweep.rows)
