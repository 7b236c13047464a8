"""Experiment configuration, orchestration and result export.

A ``ScenarioConfig`` is the complete, validated description of one
experiment.  Configs are written as YAML (comments allowed); a config may
name a preset to start from and override any subset of keys.  All unit
conversion happens here: angles may be given in degrees, powers in dBm,
gains in dB; internally everything is radians / watts / linear.

One master seed drives named sub-streams ("batch", "proposal", "accept"),
so rerunning any method with the same config and seed reproduces results
bit-identically, and all methods score against the same user ensemble.
"""

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import yaml

from .capacity import CapacityEstimate, RfConfig, average_capacity
from .channel import ArrayShape, GainPattern
from .errors import ConfigError
from .geometry import BsGeometry, RotationGrid, candidate_rotations, check_track_capacity
from .optimizer import (
    AmcmcParams,
    amcmc_optimize,
    exhaustive_search,
    scheme1_rotations,
    scheme2_rotations,
    scheme3_scenario,
)
from .population import DiskRegion, RealizationBatch, densities_from_targets, generate_batch

TWO_PI = 2.0 * math.pi

METHODS = ("amcmc", "esm", "scheme1", "scheme2", "scheme3", "fixed-rotations")

CSV_COLUMNS = (
    "method",
    "P0_W",
    "capacity_bps_hz",
    "ase_bps_hz_m2",
    "rotations_rad",
    "seed",
    "runtime_s",
)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full physical + statistical description of one experiment."""

    geometry: BsGeometry
    num_slots: int
    n_ma: int
    surface_shape: ArrayShape
    fpa_shape: ArrayShape
    pattern: GainPattern
    rf: RfConfig
    cell_radius: float
    hotspots: tuple[DiskRegion, ...]
    k_bar: float
    hotspot_ratio: tuple[float, ...]
    hotspot_fraction: float
    upsilon: int
    seed: int
    optimizer: AmcmcParams = field(default_factory=AmcmcParams)
    esm_cap: int = 200_000

    def __post_init__(self):
        if self.num_slots < 1:
            raise ConfigError("track.num_slots: must be >= 1")
        if self.n_ma < 0:
            raise ConfigError("track.num_surfaces: must be >= 0")
        if self.num_slots < self.n_ma:
            raise ConfigError(
                f"track.num_surfaces: {self.n_ma} surfaces exceed {self.num_slots} slots"
            )
        if not check_track_capacity(self.num_slots, self.geometry.r2, self.geometry.d_min):
            cap = math.floor(TWO_PI * self.geometry.r2 / self.geometry.d_min)
            raise ConfigError(
                f"track.num_slots: {self.num_slots} slots exceed the track capacity "
                f"of {cap} (floor(2*pi*r2 / d_min))"
            )
        if self.cell_radius <= 0:
            raise ConfigError("users.cell_radius_m: must be positive")
        if self.k_bar < 0:
            raise ConfigError("users.mean_total: must be >= 0")
        if len(self.hotspot_ratio) != len(self.hotspots):
            raise ConfigError(
                "users.hotspot_ratio: needs one entry per hotspot "
                f"({len(self.hotspot_ratio)} vs {len(self.hotspots)})"
            )
        if not 0.0 <= self.hotspot_fraction <= 1.0:
            raise ConfigError("users.hotspot_fraction: must lie in [0, 1]")
        if self.upsilon < 1:
            raise ConfigError("monte_carlo.num_realizations: must be >= 1")
        if self.esm_cap < 1:
            raise ConfigError("optimizer.esm_cap: must be >= 1")

    @property
    def grid(self) -> RotationGrid:
        return candidate_rotations(self.num_slots)

    @property
    def cell_area(self) -> float:
        return math.pi * self.cell_radius**2

    @property
    def total_antennas(self) -> int:
        return self.n_ma * self.surface_shape.total + 3 * self.fpa_shape.total

    def regions(self) -> tuple[DiskRegion, ...]:
        """Cell plus hotspot disks with densities derived from the user budget."""
        cell = DiskRegion(psi=0.0, d=0.0, r=self.cell_radius)
        return densities_from_targets(
            self.k_bar, self.hotspot_ratio, self.hotspot_fraction,
            (cell,) + self.hotspots,
        )

    def sample_batch(self) -> RealizationBatch:
        """The experiment's Monte-Carlo ensemble (batch sub-stream of the seed)."""
        return generate_batch(self.regions(), self.upsilon, self.seed, self.geometry.h2)


@dataclass(frozen=True)
class RunReport:
    """Outcome of one method on one scenario."""

    method: str
    rotations: tuple[float, ...]
    capacity: CapacityEstimate
    p0_w: float
    seed: int
    config_hash: str
    runtime_s: float
    trace: tuple = ()

    @property
    def ase(self) -> float:
        return self.capacity.ase


# ---------------------------------------------------------------------------
# Config schema


def _deg2rad(x):
    return float(x) * math.pi / 180.0


_IDENT = float

# field name -> alternates as (config key, converter); exactly one must be set
_SCHEMA = {
    "geometry": {
        "r1": (("fpa_ring_radius_m", _IDENT),),
        "h1": (("fpa_height_m", _IDENT),),
        "r2": (("track_radius_m", _IDENT),),
        "h2": (("track_height_m", _IDENT),),
        "fpa_rotations": (("fpa_rotations_rad", None), ("fpa_rotations_deg", None)),
        "d_min": (("min_surface_spacing_m", _IDENT),),
    },
    "track": {
        "num_slots": (("num_slots", int),),
        "num_surfaces": (("num_surfaces", int),),
    },
    "surface_array": {
        "m_h": (("horizontal", int),),
        "m_v": (("vertical", int),),
    },
    "sector_array": {
        "m_h": (("horizontal", int),),
        "m_v": (("vertical", int),),
    },
    "gain_pattern": {
        "g_m": (("max_gain_dbi", _IDENT),),
        "g_s": (("sidelobe_db", _IDENT),),
        "phi_3db": (("beamwidth_rad", _IDENT), ("beamwidth_deg", _deg2rad)),
    },
    "rf": {
        "p0": (("tx_power_w", _IDENT), ("tx_power_dbm", dbm_to_watts)),
        "sigma2": (("noise_power_w", _IDENT), ("noise_power_dbm", dbm_to_watts)),
        "lambda_c": (("wavelength_m", _IDENT),),
        "beta0": (("ref_power_gain", _IDENT), ("ref_power_gain_db", db_to_linear)),
    },
    "users": {
        "cell_radius": (("cell_radius_m", _IDENT),),
        "k_bar": (("mean_total", _IDENT),),
        "hotspot_fraction": (("hotspot_fraction", _IDENT),),
        "hotspot_ratio": (("hotspot_ratio", None),),
        "hotspots": (("hotspots", None),),
    },
    "monte_carlo": {
        "upsilon": (("num_realizations", int),),
        "seed": (("seed", int),),
    },
    "optimizer": {
        "tau": (("tau", _IDENT),),
        "n_s": (("inner_iterations", int),),
        "t_outer": (("outer_iterations", int),),
        "p_floor": (("p_floor", _IDENT),),
        "max_proposal_retries": (("max_proposal_retries", int),),
        "esm_cap": (("esm_cap", int),),
    },
}

_HOTSPOT_KEYS = {"azimuth_rad", "azimuth_deg", "distance_m", "radius_m"}


def _paper_default_dict() -> dict:
    return {
        "geometry": {
            "fpa_ring_radius_m": 1.0,
            "fpa_height_m": 9.0,
            "track_radius_m": 1.0,
            "track_height_m": 10.0,
            "fpa_rotations_rad": [math.pi / 2, 7 * math.pi / 6, 11 * math.pi / 6],
            "min_surface_spacing_m": 0.125,
        },
        "track": {"num_slots": 40, "num_surfaces": 6},
        "surface_array": {"horizontal": 2, "vertical": 8},
        "sector_array": {"horizontal": 8, "vertical": 8},
        "gain_pattern": {
            "max_gain_dbi": 0.0,
            "sidelobe_db": 25.0,
            "beamwidth_deg": 65.0,
        },
        "rf": {
            "tx_power_w": 1e-3,
            "noise_power_dbm": -80.0,
            "wavelength_m": 0.125,
            "ref_power_gain_db": -40.0,
        },
        "users": {
            "cell_radius_m": 100.0,
            "mean_total": 300.0,
            "hotspot_fraction": 0.5,
            "hotspot_ratio": [1.0, 2.0, 3.0],
            "hotspots": [
                {"azimuth_rad": math.pi / 4, "distance_m": 50.0, "radius_m": 10.0},
                {"azimuth_rad": 7 * math.pi / 6, "distance_m": 60.0, "radius_m": 15.0},
                {"azimuth_rad": 7 * math.pi / 4, "distance_m": 70.0, "radius_m": 20.0},
            ],
        },
        "monte_carlo": {"num_realizations": 100, "seed": 1},
        "optimizer": {
            "tau": 1.0,
            "inner_iterations": 20,
            "outer_iterations": 10,
            "p_floor": 0.01,
            "max_proposal_retries": 1000,
            "esm_cap": 200_000,
        },
    }


PRESETS = {"paper-default": _paper_default_dict}


def _reject_unknown(data: dict) -> None:
    for section, content in data.items():
        if section == "preset":
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"{section}: unknown config section")
        if not isinstance(content, dict):
            raise ConfigError(f"{section}: expected a mapping")
        allowed = {key for alts in _SCHEMA[section].values() for key, _ in alts}
        for key in content:
            if key not in allowed:
                raise ConfigError(f"{section}.{key}: unknown key")
        if section == "users":
            for i, spot in enumerate(content.get("hotspots") or []):
                if not isinstance(spot, dict):
                    raise ConfigError(f"users.hotspots[{i}]: expected a mapping")
                for key in spot:
                    if key not in _HOTSPOT_KEYS:
                        raise ConfigError(f"users.hotspots[{i}].{key}: unknown key")


def _merge_preset(preset: dict, override: dict) -> dict:
    """Field-level merge: a user key supersedes every alternate spelling of
    the same field in the preset."""
    merged = {}
    for section, fields in _SCHEMA.items():
        base = dict(preset.get(section, {}))
        over = dict(override.get(section, {}))
        out = {}
        for alts in fields.values():
            keys = [k for k, _ in alts]
            src = over if any(k in over for k in keys) else base
            for k in keys:
                if k in src:
                    out[k] = src[k]
        if out:
            merged[section] = out
    return merged


def _pick(data: dict, section: str, name: str, required: bool = True):
    """Extract one schema field, applying its unit converter."""
    content = data.get(section, {})
    alts = _SCHEMA[section][name]
    present = [(key, conv) for key, conv in alts if key in content]
    if len(present) > 1:
        keys = ", ".join(k for k, _ in present)
        raise ConfigError(f"{section}: give only one of {keys}")
    if not present:
        if required:
            keys = " or ".join(k for k, _ in alts)
            raise ConfigError(f"{section}.{keys}: missing required key")
        return None
    key, conv = present[0]
    value = content[key]
    try:
        return conv(value) if conv is not None else (value, key)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def _build_scenario(data: dict) -> ScenarioConfig:
    _reject_unknown(data)

    rotations, rot_key = _pick(data, "geometry", "fpa_rotations")
    if len(rotations) != 3:
        raise ConfigError(f"geometry.{rot_key}: exactly three sector rotations expected")
    if rot_key.endswith("_deg"):
        rotations = [_deg2rad(a) for a in rotations]
    rotations = tuple(float(a) % TWO_PI for a in rotations)

    hotspots_raw, _ = _pick(data, "users", "hotspots")
    hotspots = []
    for i, spot in enumerate(hotspots_raw):
        if "azimuth_rad" in spot and "azimuth_deg" in spot:
            raise ConfigError(f"users.hotspots[{i}]: give only one azimuth form")
        if "azimuth_rad" in spot:
            psi = float(spot["azimuth_rad"])
        elif "azimuth_deg" in spot:
            psi = _deg2rad(spot["azimuth_deg"])
        else:
            raise ConfigError(f"users.hotspots[{i}].azimuth_rad: missing required key")
        try:
            hotspots.append(
                DiskRegion(
                    psi=psi % TWO_PI,
                    d=float(spot["distance_m"]),
                    r=float(spot["radius_m"]),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"users.hotspots[{i}].{exc.args[0]}: missing required key")
        except ValueError as exc:
            raise ConfigError(f"users.hotspots[{i}]: {exc}") from exc

    ratio, _ = _pick(data, "users", "hotspot_ratio")
    ratio = tuple(float(w) for w in ratio)

    def build(section, cls, names):
        kwargs = {field_name: _pick(data, section, field_name) for field_name in names}
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{section}: {exc}") from exc

    geometry_kwargs = {
        "r1": _pick(data, "geometry", "r1"),
        "h1": _pick(data, "geometry", "h1"),
        "r2": _pick(data, "geometry", "r2"),
        "h2": _pick(data, "geometry", "h2"),
        "d_min": _pick(data, "geometry", "d_min"),
        "fpa_rotations": rotations,
    }
    try:
        geometry = BsGeometry(**geometry_kwargs)
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc

    surface = build("surface_array", ArrayShape, ("m_h", "m_v"))
    sector = build("sector_array", ArrayShape, ("m_h", "m_v"))
    pattern = build("gain_pattern", GainPattern, ("g_m", "g_s", "phi_3db"))
    rf = build("rf", RfConfig, ("p0", "sigma2", "lambda_c", "beta0"))

    # the optimizer section is optional; absent fields keep their defaults
    opt_kwargs = {}
    for name in ("tau", "n_s", "t_outer", "p_floor", "max_proposal_retries"):
        value = _pick(data, "optimizer", name, required=False)
        if value is not None:
            opt_kwargs[name] = value
    try:
        opt = AmcmcParams(**opt_kwargs)
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from exc
    esm_cap = _pick(data, "optimizer", "esm_cap", required=False)

    return ScenarioConfig(
        geometry=geometry,
        num_slots=_pick(data, "track", "num_slots"),
        n_ma=_pick(data, "track", "num_surfaces"),
        surface_shape=surface,
        fpa_shape=sector,
        pattern=pattern,
        rf=rf,
        cell_radius=_pick(data, "users", "cell_radius"),
        k_bar=_pick(data, "users", "k_bar"),
        hotspot_ratio=ratio,
        hotspot_fraction=_pick(data, "users", "hotspot_fraction"),
        hotspots=tuple(hotspots),
        upsilon=_pick(data, "monte_carlo", "upsilon"),
        seed=_pick(data, "monte_carlo", "seed"),
        optimizer=opt,
        esm_cap=esm_cap if esm_cap is not None else 200_000,
    )


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings onto a config dict (values are
    parsed as YAML scalars/lists)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected dotted.path=value")
        path, _, raw = item.partition("=")
        keys = path.strip().split(".")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {path}: {key} is not a mapping")
        node[keys[-1]] = yaml.safe_load(raw)
    return data


def load_config(source, overrides=()) -> ScenarioConfig:
    """Build a validated ScenarioConfig from a preset name, YAML file path,
    YAML text, or an already-parsed mapping."""
    if isinstance(source, dict):
        data = source
    elif isinstance(source, str) and source in PRESETS:
        data = {"preset": source}
    else:
        text = None
        if isinstance(source, (str, os.PathLike)):
            path = os.fspath(source)
            if "\n" not in path and os.path.exists(path):
                with open(path, "r", encoding="utf-8") as handle:
                    text = handle.read()
        if text is None:
            if not isinstance(source, str):
                raise ConfigError(f"config file not found: {source}")
            text = source
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: expected a YAML mapping at the top level")

    data = dict(data)
    preset_name = data.pop("preset", None)
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(
                f"preset: unknown preset {preset_name!r} "
                f"(available: {', '.join(sorted(PRESETS))})"
            )
        _reject_unknown(data)
        data = _merge_preset(PRESETS[preset_name](), data)
    if overrides:
        data = apply_overrides(data, overrides)
    return _build_scenario(data)


def canonical_dict(scenario: ScenarioConfig) -> dict:
    """Canonical config form: radians, watts, linear gains."""
    geo, rf, pat, opt = scenario.geometry, scenario.rf, scenario.pattern, scenario.optimizer
    return {
        "geometry": {
            "fpa_ring_radius_m": geo.r1,
            "fpa_height_m": geo.h1,
            "track_radius_m": geo.r2,
            "track_height_m": geo.h2,
            "fpa_rotations_rad": list(geo.fpa_rotations),
            "min_surface_spacing_m": geo.d_min,
        },
        "track": {"num_slots": scenario.num_slots, "num_surfaces": scenario.n_ma},
        "surface_array": {
            "horizontal": scenario.surface_shape.m_h,
            "vertical": scenario.surface_shape.m_v,
        },
        "sector_array": {
            "horizontal": scenario.fpa_shape.m_h,
            "vertical": scenario.fpa_shape.m_v,
        },
        "gain_pattern": {
            "max_gain_dbi": pat.g_m,
            "sidelobe_db": pat.g_s,
            "beamwidth_rad": pat.phi_3db,
        },
        "rf": {
            "tx_power_w": rf.p0,
            "noise_power_w": rf.sigma2,
            "wavelength_m": rf.lambda_c,
            "ref_power_gain": rf.beta0,
        },
        "users": {
            "cell_radius_m": scenario.cell_radius,
            "mean_total": scenario.k_bar,
            "hotspot_fraction": scenario.hotspot_fraction,
            "hotspot_ratio": list(scenario.hotspot_ratio),
            "hotspots": [
                {"azimuth_rad": h.psi, "distance_m": h.d, "radius_m": h.r}
                for h in scenario.hotspots
            ],
        },
        "monte_carlo": {
            "num_realizations": scenario.upsilon,
            "seed": scenario.seed,
        },
        "optimizer": {
            "tau": opt.tau,
            "inner_iterations": opt.n_s,
            "outer_iterations": opt.t_outer,
            "p_floor": opt.p_floor,
            "max_proposal_retries": opt.max_proposal_retries,
            "esm_cap": scenario.esm_cap,
        },
    }


def dump_config(scenario: ScenarioConfig) -> str:
    """Canonical YAML serialization; load(dump(s)) reproduces ``s`` exactly."""
    return yaml.safe_dump(canonical_dict(scenario), sort_keys=True)


def config_hash(scenario: ScenarioConfig) -> str:
    """Stable hex digest of the canonical config form."""
    text = json.dumps(canonical_dict(scenario), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Orchestration


def run_experiment(config: ScenarioConfig, method: str, rotations=None,
                   batch: RealizationBatch | None = None) -> RunReport:
    """Run one method on one scenario and report its outcome.

    ``rotations`` is required for (and only used by) ``fixed-rotations``.
    A pre-sampled batch may be passed to share the ensemble across calls;
    by default the batch is sampled from the config's seed.
    """
    if method not in METHODS:
        raise ConfigError(f"method: unknown method {method!r} (choose from {METHODS})")
    if batch is None:
        batch = config.sample_batch()
    start = time.perf_counter()
    trace: tuple = ()
    grid = config.grid

    if method == "amcmc":
        eps, estimate, trace = amcmc_optimize(config, batch, config.optimizer, config.seed)
        chosen = tuple(grid.angles[l] for l in eps.support)
    elif method == "esm":
        eps, estimate = exhaustive_search(config, batch)
        chosen = tuple(grid.angles[l] for l in eps.support)
    elif method == "scheme1":
        result = scheme1_rotations(config, batch)
        chosen, estimate = result.rotations, result.capacity
    elif method == "scheme2":
        result = scheme2_rotations(config, batch)
        chosen, estimate = result.rotations, result.capacity
    elif method == "scheme3":
        result = scheme3_scenario(config, batch)
        chosen, estimate = result.rotations, result.capacity
    else:  # fixed-rotations
        if rotations is None:
            raise ConfigError("method fixed-rotations requires an explicit rotation list")
        chosen = tuple(float(a) for a in rotations)
        estimate = average_capacity(batch, chosen, config)

    return RunReport(
        method=method,
        rotations=chosen,
        capacity=estimate,
        p0_w=config.rf.p0,
        seed=config.seed,
        config_hash=config_hash(config),
        runtime_s=time.perf_counter() - start,
        trace=trace,
    )


def compare(config: ScenarioConfig, methods=None,
            batch: RealizationBatch | None = None) -> list[RunReport]:
    """Run several methods against one shared ensemble.

    By default runs amcmc and the three benchmark schemes, plus esm when
    the enumeration count fits the cap.
    """
    if methods is None:
        methods = ["amcmc", "scheme1", "scheme2", "scheme3"]
        if math.comb(config.num_slots, config.n_ma) <= config.esm_cap:
            methods.insert(1, "esm")
    if batch is None:
        batch = config.sample_batch()
    return [run_experiment(config, m, batch=batch) for m in methods]


def power_sweep(config: ScenarioConfig, method: str, powers) -> list[RunReport]:
    """Re-run one method at several transmit powers over a fixed ensemble.

    The user batch is sampled once; the rotation decision is re-optimized
    at each power.  Reports come back in the order powers were given.
    """
    if not powers:
        raise ConfigError("power_sweep: empty power list")
    batch = config.sample_batch()
    reports = []
    for p0 in powers:
        cfg = replace(config, rf=replace(config.rf, p0=float(p0)))
        reports.append(run_experiment(cfg, method, batch=batch))
    return reports


# ---------------------------------------------------------------------------
# Export


def _format_row(report: RunReport, stable_runtime: bool) -> list[str]:
    return [
        report.method,
        repr(report.p0_w),
        repr(report.capacity.mean_bps_hz),
        repr(report.capacity.ase),
        ";".join(repr(a) for a in report.rotations),
        str(report.seed),
        "0.0" if stable_runtime else f"{report.runtime_s:.6f}",
    ]


def export_results(reports, destination, stable_runtime: bool = False) -> None:
    """Write reports as CSV (UTF-8, comma-delimited, exact header).

    ``stable_runtime`` writes 0.0 in the runtime column so reruns with the
    same seed produce byte-identical files.
    """
    rows = [_format_row(r, stable_runtime) for r in reports]
    _write_csv(rows, destination)


def export_plot_data(reports, destination, stable_runtime: bool = False) -> None:
    """CSV variant with rows grouped by method (curve-per-method layout)."""
    order: dict[str, list[RunReport]] = {}
    for report in reports:
        order.setdefault(report.method, []).append(report)
    rows = [
        _format_row(r, stable_runtime)
        for method in order for r in order[method]
    ]
    _write_csv(rows, destination)


def _write_csv(rows, destination) -> None:
    if hasattr(destination, "write"):
        _write_csv_handle(rows, destination)
        return
    with open(destination, "w", encoding="utf-8", newline="") as handle:
        _write_csv_handle(rows, handle)


def _write_csv_handle(rows, handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)


def results_csv_text(reports, stable_runtime: bool = False) -> str:
    """The CSV document as a string (convenience for tests and stdout)."""
    buf = io.StringIO()
    export_results(reports, buf, stable_runtime=stable_runtime)
    return buf.getvalue()
