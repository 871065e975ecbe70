"""Experiment configuration: array geometry, target, interferers, shared bands.

Scenario files are JSON trees with the sections ``array``, ``target``,
``interferers``, ``shared_bands`` and ``controls``.  Frequencies are in Hz
except the shared bands, which are normalized over the total FDA band of
width ``n_tx * delta_f_hz`` (0 at ``carrier_hz``).  Angles are in degrees and
powers in dB.  Band tolerances may be written as fraction strings such as
``"1/30"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8
_EDGE_SNAP = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or violates an invariant."""


class InfeasibleScenario(ScenarioError):
    """Raised when a constraint of the design problem cannot be met.

    ``constraint`` names the binding constraint (e.g. ``"shared_band[1]"``).
    """

    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


def _per_channel(value, n_tx: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n_tx
    vals = tuple(float(v) for v in value)
    if len(vals) != n_tx:
        raise ScenarioError(f"array.{name}: expected {n_tx} entries, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class ArrayConfig:
    n_tx: int
    n_rx: int
    carrier_hz: float
    delta_f_hz: float
    sample_rate_hz: float
    n_samples: int
    tx_spacing: float | None = None  # metres, None -> half wavelength
    rx_spacing: float | None = None
    inband_tolerance: tuple[float, ...] | float = 0.91
    lp_cutoff: tuple[float, ...] | float = 0.5
    reference_weights: tuple[complex, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "inband_tolerance",
                           _per_channel(self.inband_tolerance, self.n_tx, "inband_tolerance"))
        object.__setattr__(self, "lp_cutoff", _per_channel(self.lp_cutoff, self.n_tx, "lp_cutoff"))
        if self.reference_weights is not None:
            w = tuple(complex(v) for v in self.reference_weights)
            if len(w) != self.n_tx:
                raise ScenarioError(f"array.reference_weights: expected {self.n_tx} entries")
            object.__setattr__(self, "reference_weights", w)
        self.validate()

    def validate(self) -> None:
        if self.n_tx < 1:
            raise ScenarioError("array.n_tx must be >= 1")
        if self.n_rx < 1:
            raise ScenarioError("array.n_rx must be >= 1")
        if self.n_samples < 2:
            raise ScenarioError("array.n_samples must be >= 2")
        for name in ("carrier_hz", "sample_rate_hz"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"array.{name} must be positive")
        if self.delta_f_hz < 0:
            raise ScenarioError("array.delta_f_hz must be non-negative")
        if self.n_tx > 1 and self.delta_f_hz < self.sample_rate_hz:
            raise ScenarioError(
                "array.delta_f_hz: overlapping channel spectra "
                f"(delta_f={self.delta_f_hz:g} Hz < sample_rate={self.sample_rate_hz:g} Hz)")
        for g in self.inband_tolerance:
            if not 0 < g <= 1:
                raise ScenarioError(f"array.inband_tolerance: {g} not in (0, 1]")
        for f in self.lp_cutoff:
            if not 0 < f <= 1:
                raise ScenarioError(f"array.lp_cutoff: {f} not in (0, 1]")
        for name in ("tx_spacing", "rx_spacing"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ScenarioError(f"array.{name} must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def d_tx(self) -> float:
        return self.wavelength / 2 if self.tx_spacing is None else self.tx_spacing

    @property
    def d_rx(self) -> float:
        return self.wavelength / 2 if self.rx_spacing is None else self.rx_spacing

    @property
    def channel_freqs(self) -> np.ndarray:
        """Carrier of each transmit channel, f_c + m * delta_f."""
        return self.carrier_hz + np.arange(self.n_tx) * self.delta_f_hz

    @property
    def w_ref(self) -> np.ndarray:
        if self.reference_weights is None:
            return np.ones(self.n_tx, dtype=complex)
        return np.asarray(self.reference_weights, dtype=complex)

    @property
    def channel_span(self) -> float:
        """Width of one channel in local normalized frequency (cycles/sample)."""
        return self.delta_f_hz / self.sample_rate_hz if self.n_tx > 1 else 1.0


@dataclass(frozen=True)
class TargetSpec:
    range_m: float
    angle_deg: float
    snr_db: float = 0.0
    noise_power: float = 1.0

    def __post_init__(self):
        if not self.range_m > 0:
            raise ScenarioError("target.range_m must be positive")
        if not -90 <= self.angle_deg <= 90:
            raise ScenarioError("target.angle_deg must lie in [-90, 90]")
        if not self.noise_power > 0:
            raise ScenarioError("target.noise_power must be positive")

    @property
    def snr(self) -> float:
        return 10 ** (self.snr_db / 10)


@dataclass(frozen=True)
class InterfererSpec:
    freq_hz: float
    angle_deg: float
    inr_db: float

    def __post_init__(self):
        if not -90 <= self.angle_deg <= 90:
            raise ScenarioError("interferer.angle_deg must lie in [-90, 90]")
        if not math.isfinite(self.inr_db):
            raise ScenarioError("interferer.inr_db must be finite")


@dataclass(frozen=True)
class SharedBandSpec:
    f_low: float
    f_high: float
    eta: float

    def __post_init__(self):
        if not 0 <= self.f_low < self.f_high <= 1:
            raise ScenarioError(
                f"shared band ({self.f_low}, {self.f_high}) must satisfy 0 <= f_low < f_high <= 1")


@dataclass(frozen=True)
class DesignControls:
    waveform_similarity: float = 6.0
    weight_similarity: float = 15.0
    max_iters: int = 4
    n_randomizations: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.waveform_similarity < 0:
            raise ScenarioError("controls.waveform_similarity must be >= 0")
        if self.weight_similarity < 0:
            raise ScenarioError("controls.weight_similarity must be >= 0")
        if self.max_iters < 1:
            raise ScenarioError("controls.max_iters must be >= 1")
        if self.n_randomizations < 1:
            raise ScenarioError("controls.n_randomizations must be >= 1")


@dataclass(frozen=True)
class BandIndexing:
    """Channel indices (0-based) and channel-local edges of a shared band.

    ``local_low``/``local_high`` are in cycles/sample relative to the lower
    edge of channels ``p_low`` and ``p_high`` respectively.
    """

    p_low: int
    p_high: int
    local_low: float
    local_high: float

    @property
    def case(self) -> str:
        d = self.p_high - self.p_low
        return "same-channel" if d == 0 else "adjacent" if d == 1 else "spanning"


@dataclass(frozen=True)
class ScenarioConfig:
    array: ArrayConfig
    target: TargetSpec
    interferers: tuple[InterfererSpec, ...] = ()
    shared_bands: tuple[SharedBandSpec, ...] = ()
    controls: DesignControls = field(default_factory=DesignControls)

    def __post_init__(self):
        object.__setattr__(self, "interferers", tuple(self.interferers))
        object.__setattr__(self, "shared_bands", tuple(self.shared_bands))
        for b, band in enumerate(self.shared_bands):
            if not band.eta > 0:
                raise InfeasibleScenario(
                    f"shared_band[{b}]: eta={band.eta:g} is unreachable "
                    "(radiated energy in a band of positive width is always > 0)",
                    f"shared_band[{b}]")

    @property
    def band_indexing(self) -> tuple[BandIndexing, ...]:
        return tuple(normalize_band(b, self.array) for b in self.shared_bands)

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def with_controls(self, **changes) -> "ScenarioConfig":
        return replace(self, controls=replace(self.controls, **changes))

    def to_dict(self) -> dict[str, Any]:
        arr = asdict(self.array)
        arr["inband_tolerance"] = list(self.array.inband_tolerance)
        arr["lp_cutoff"] = list(self.array.lp_cutoff)
        if self.array.reference_weights is not None:
            arr["reference_weights"] = [[c.real, c.imag] for c in self.array.reference_weights]
        else:
            arr.pop("reference_weights")
        for k in ("tx_spacing", "rx_spacing"):
            if arr[k] is None:
                arr.pop(k)
        return {
            "array": arr,
            "target": asdict(self.target),
            "interferers": [asdict(i) for i in self.interferers],
            "shared_bands": [asdict(b) for b in self.shared_bands],
            "controls": asdict(self.controls),
        }


def normalize_band(band: SharedBandSpec, cfg: ArrayConfig) -> BandIndexing:
    """Map a normalized shared band onto the FDA channel grid.

    The total band [0, 1] is split into ``n_tx`` channels of width ``1/n_tx``.
    Edges are floored onto channels; an upper edge at exactly 1.0 is clamped
    into the last channel.
    """
    if not 0 <= band.f_low < band.f_high <= 1:
        raise ScenarioError(f"band ({band.f_low}, {band.f_high}) outside [0, 1]")
    n = cfg.n_tx

    def locate(f: float) -> tuple[int, float]:
        x = f * n
        if abs(x - round(x)) < _EDGE_SNAP:
            x = float(round(x))
        p = min(int(math.floor(x)), n - 1)
        return p, (x - p) * cfg.channel_span

    p_lo, loc_lo = locate(band.f_low)
    p_hi, loc_hi = locate(band.f_high)
    return BandIndexing(p_lo, p_hi, loc_lo, loc_hi)


def _parse_eta(value) -> float:
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(f"shared band eta {value!r} is not a number or fraction") from exc
    return float(value)


def _section(tree: dict, name: str, required: bool = True):
    if name not in tree:
        if required:
            raise ScenarioError(f"missing section '{name}'")
        return None
    return tree[name]


def scenario_from_dict(tree: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(tree, dict):
        raise ScenarioError("scenario root must be an object")
    try:
        arr = dict(_section(tree, "array"))
        if "n_samples" not in arr:
            if "duration_s" not in arr:
                raise ScenarioError("array: give either n_samples or duration_s")
            arr["n_samples"] = int(round(arr.pop("duration_s") * arr["sample_rate_hz"]))
        else:
            arr.pop("duration_s", None)
        if "reference_weights" in arr:
            arr["reference_weights"] = tuple(
                complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
                for v in arr["reference_weights"])
        for key in ("n_tx", "n_rx", "n_samples"):
            if key in arr:
                if float(arr[key]) != int(arr[key]):
                    raise ScenarioError(f"array.{key} must be an integer")
                arr[key] = int(arr[key])
        array = ArrayConfig(**arr)
        target = TargetSpec(**_section(tree, "target"))
        interferers = tuple(InterfererSpec(**i) for i in (_section(tree, "interferers", False) or []))
        bands = []
        for b in _section(tree, "shared_bands", False) or []:
            b = dict(b)
            b["eta"] = _parse_eta(b["eta"])
            bands.append(SharedBandSpec(**b))
        controls = DesignControls(**(_section(tree, "controls", False) or {}))
    except TypeError as exc:
        raise ScenarioError(f"bad scenario field: {exc}") from exc
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc}") from exc
    return ScenarioConfig(array, target, interferers, tuple(bands), controls)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(tree)


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# Interferers of the standard evaluation setup (frequency Hz, angle deg, INR dB).
STANDARD_INTERFERERS = (
    InterfererSpec(10000e6, 10.0, 20.0),
    InterfererSpec(10002e6, 40.0, 22.0),
    InterfererSpec(10004e6, 60.0, 24.0),
)


def standard_scenario(mode: str = "joint", **controls) -> ScenarioConfig:
    """The 6x4 FDA evaluation setup with its two shared bands.

    ``mode="waveform"`` relaxes the second band tolerance to 101/300 because
    fixed weights cannot push the fully covered channel below 1/N_T.
    """
    array = ArrayConfig(n_tx=6, n_rx=4, carrier_hz=10e9, delta_f_hz=1e6,
                        sample_rate_hz=1e6, n_samples=40)
    eta2 = 101 / 300 if mode in ("waveform", "waveform_only") else 1 / 200
    bands = (SharedBandSpec(0.073, 0.200, 1 / 30), SharedBandSpec(0.556, 0.884, eta2))
    ctrl = DesignControls(**{"waveform_similarity": 6.0, "weight_similarity": 15.0,
                             "max_iters": 4, "n_randomizations": 1000, **controls})
    return ScenarioConfig(array, TargetSpec(15e3, 40.0, 0.0, 1.0), STANDARD_INTERFERERS, bands, ctrl)


def reduced_scenario(n_tx: int = 3, n_rx: int = 2, n_samples: int = 16,
                     interferers: Sequence[InterfererSpec] | None = None,
                     bands: Sequence[SharedBandSpec] = (), **controls) -> ScenarioConfig:
    """Small configuration on the same channel grid, for quick checks."""
    array = ArrayConfig(n_tx=n_tx, n_rx=n_rx, carrier_hz=10e9, delta_f_hz=1e6,
                        sample_rate_hz=1e6, n_samples=n_samples)
    if interferers is None:
        interferers = (InterfererSpec(10000e6, 10.0, 20.0),)
    ctrl = DesignControls(**{"max_iters": 2, "n_randomizations": 200, **controls})
    return ScenarioConfig(array, TargetSpec(15e3, 40.0), tuple(interferers), tuple(bands), ctrl)
