"""Domain types for one balancing interval and the parameter derivations.

Prosumers are described by the triple ``(a, b, m)``: discomfort curvature,
flexibility cost offset and maximum flexibility. They can be given directly
or derived from a heat pump / micro-CHP device and the aggregator's
regulation direction.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "DEFAULT_DT_HOURS",
    "DEFAULT_PRICES",
    "HP_TYPES",
    "MCHP_TYPES",
    "CaseVerdict",
    "DeviceKind",
    "DeviceSpec",
    "Direction",
    "MarketInstance",
    "PriceBook",
    "Prosumer",
    "RegulationCase",
    "check_assumption1",
    "classify_case",
    "derive_b",
    "derive_m",
    "instance_from_json",
    "instance_to_json",
    "load_instance",
    "save_instance",
]

# 300 s market interval, in hours so that m is in kWh.
DEFAULT_DT_HOURS = 300.0 / 3600.0


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"

    @property
    def opposite(self) -> "Direction":
        return Direction.DOWN if self is Direction.UP else Direction.UP


class DeviceKind(str, enum.Enum):
    HEAT_PUMP = "heat_pump"
    MICRO_CHP = "micro_chp"


class CaseVerdict(str, enum.Enum):
    OPTIMIZE = "optimize"
    SELL_TO_TSO = "sell_to_tso"
    TSO_PAYS_TO_CONSUME = "tso_pays_to_consume"


@dataclass(frozen=True)
class DeviceSpec:
    """Controllable device of a prosumer.

    ``nominal_input_power_kw`` is only meaningful for a micro-CHP, where the
    ratio of input to electric output power sets the cost offset.
    """

    kind: DeviceKind
    nominal_electric_power_kw: float
    current_electric_power_kw: float = 0.0
    nominal_input_power_kw: float = 0.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", DeviceKind(self.kind))
        if not 0.0 <= self.current_electric_power_kw <= self.nominal_electric_power_kw:
            raise ValueError(
                "current electric power must lie in [0, nominal electric power], got "
                f"{self.current_electric_power_kw} / {self.nominal_electric_power_kw}"
            )
        if self.kind is DeviceKind.MICRO_CHP and self.nominal_input_power_kw < 0:
            raise ValueError("micro-CHP nominal input power must be nonnegative")

    @property
    def conversion_ratio(self) -> float:
        """Nominal input power over nominal electric output power (micro-CHP)."""
        if self.nominal_electric_power_kw == 0:
            raise ZeroDivisionError("micro-CHP with zero nominal electric power")
        return self.nominal_input_power_kw / self.nominal_electric_power_kw

    def with_current_power(self, power_kw: float) -> "DeviceSpec":
        return DeviceSpec(
            self.kind,
            self.nominal_electric_power_kw,
            power_kw,
            self.nominal_input_power_kw,
            self.label,
        )


@dataclass(frozen=True)
class PriceBook:
    """Retail electricity/gas prices and the TSO balancing price, in EUR/kWh."""

    pi_e: float
    pi_g: float
    p: float

    def __post_init__(self):
        for name in ("pi_e", "pi_g", "p"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


# Dutch retail prices and a high-stress TenneT settlement price.
DEFAULT_PRICES = PriceBook(pi_e=0.1707, pi_g=0.0861, p=0.6)


class DeviceType(NamedTuple):
    """Catalogue entry: a device template plus its tabulated ``|b|``.

    ``table_direction`` is the regulation direction whose formula the
    tabulated value corresponds to.
    """

    spec: DeviceSpec
    table_abs_b: float
    table_direction: Direction


HP_TYPES = {
    1: DeviceType(
        DeviceSpec(DeviceKind.HEAT_PUMP, 1.1, label="hp1"), 0.1707, Direction.UP
    ),
}

# Type 2 is tabulated as 0.5088 although (4.7 / 0.8) * 0.0861 = 0.5058; the
# table value is kept verbatim.
MCHP_TYPES = {
    1: DeviceType(
        DeviceSpec(DeviceKind.MICRO_CHP, 1.0, nominal_input_power_kw=8.0, label="mchp1"),
        0.6888,
        Direction.DOWN,
    ),
    2: DeviceType(
        DeviceSpec(DeviceKind.MICRO_CHP, 0.8, nominal_input_power_kw=4.7, label="mchp2"),
        0.5088,
        Direction.DOWN,
    ),
}


@dataclass(frozen=True)
class RegulationCase:
    aggregator: Direction
    tso: Direction

    def __post_init__(self):
        object.__setattr__(self, "aggregator", Direction(self.aggregator))
        object.__setattr__(self, "tso", Direction(self.tso))


@dataclass(frozen=True)
class Prosumer:
    """One prosumer: utility ``x*y - a/2*y**2 - b*y`` over ``0 <= y <= m``."""

    a: float
    b: float
    m: float
    device: Optional[DeviceSpec] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"a must be positive and finite, got {self.a!r}")
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b!r}")
        if not (self.m >= 0 and math.isfinite(self.m)):
            raise ValueError(f"m must be nonnegative and finite, got {self.m!r}")

    @property
    def free_flex(self) -> float:
        """Flexibility offered at zero price, ``max(0, -b/a)``."""
        return -self.b / self.a if self.b < 0 else 0.0

    @property
    def saturation_price(self) -> float:
        """Price ``a*m + b`` above which the response is capped at ``m``."""
        return self.a * self.m + self.b


@dataclass(frozen=True)
class MarketInstance:
    """One balancing interval.

    Parameters
    ----------
    prosumers : sequence of Prosumer
    p : float
        TSO balancing price (EUR/kWh).
    f : float
        Requested imbalance (kWh).
    cap_enabled : bool
        Whether the aggregator may not buy more than ``f`` from its prosumers.
    """

    prosumers: tuple
    p: float
    f: float
    cap_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "prosumers", tuple(self.prosumers))
        if not (self.p >= 0 and math.isfinite(self.p)):
            raise ValueError(f"p must be nonnegative and finite, got {self.p!r}")
        if not (self.f >= 0 and math.isfinite(self.f)):
            raise ValueError(f"f must be nonnegative and finite, got {self.f!r}")

    @classmethod
    def from_arrays(cls, a, b, m, p, f, cap_enabled=True) -> "MarketInstance":
        a, b, m = (np.asarray(v, dtype=float).ravel() for v in (a, b, m))
        if not a.shape == b.shape == m.shape:
            raise ValueError("a, b and m must have the same length")
        prosumers = [Prosumer(float(ai), float(bi), float(mi)) for ai, bi, mi in zip(a, b, m)]
        return cls(prosumers, float(p), float(f), bool(cap_enabled))

    def __len__(self):
        return len(self.prosumers)

    @property
    def n(self) -> int:
        return len(self.prosumers)

    @cached_property
    def a(self) -> np.ndarray:
        arr = np.array([pr.a for pr in self.prosumers], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def b(self) -> np.ndarray:
        arr = np.array([pr.b for pr in self.prosumers], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def m(self) -> np.ndarray:
        arr = np.array([pr.m for pr in self.prosumers], dtype=float)
        arr.flags.writeable = False
        return arr

    def replace(self, **changes) -> "MarketInstance":
        kw = dict(prosumers=self.prosumers, p=self.p, f=self.f, cap_enabled=self.cap_enabled)
        kw.update(changes)
        return MarketInstance(**kw)


def derive_b(device: DeviceSpec, direction: Direction, prices: PriceBook) -> float:
    """Flexibility cost offset of a device for the given aggregator direction."""
    direction = Direction(direction)
    if device.kind is DeviceKind.HEAT_PUMP:
        return prices.pi_e if direction is Direction.UP else -prices.pi_g
    c = device.conversion_ratio
    return -c * prices.pi_e if direction is Direction.UP else c * prices.pi_g


def derive_m(device: DeviceSpec, direction: Direction, dt_hours: float = DEFAULT_DT_HOURS) -> float:
    """Maximum flexibility (kWh) a device can offer over one interval.

    A heat pump gives up-regulation by consuming more (headroom up to its
    nominal power) and down-regulation by consuming less; a micro-CHP the
    other way round.
    """
    if not dt_hours > 0:
        raise ValueError("dt_hours must be positive")
    direction = Direction(direction)
    headroom = device.nominal_electric_power_kw - device.current_electric_power_kw
    current = device.current_electric_power_kw
    if device.kind is DeviceKind.HEAT_PUMP:
        power = headroom if direction is Direction.UP else current
    else:
        power = current if direction is Direction.UP else headroom
    return max(power, 0.0) * dt_hours


def prosumer_from_device(
    device: DeviceSpec,
    a: float,
    direction: Direction,
    prices: PriceBook = DEFAULT_PRICES,
    dt_hours: float = DEFAULT_DT_HOURS,
) -> Prosumer:
    return Prosumer(a, derive_b(device, direction, prices), derive_m(device, direction, dt_hours), device)


def classify_case(reg: RegulationCase) -> CaseVerdict:
    """Which market case applies for the aggregator/TSO directions.

    Only when both are in the same direction does the aggregator have to
    trade off prosumer flexibility against the TSO price.
    """
    if reg.aggregator is reg.tso:
        return CaseVerdict.OPTIMIZE
    if reg.aggregator is Direction.UP:
        return CaseVerdict.SELL_TO_TSO
    return CaseVerdict.TSO_PAYS_TO_CONSUME


class Assumption1Check(NamedTuple):
    holds: bool
    free_flex: float


def free_flexibility(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    neg = b < 0
    return float(np.sum(-b[neg] / a[neg]))


def check_assumption1(inst: MarketInstance) -> Assumption1Check:
    """Total zero-price flexibility must not exceed the requested imbalance."""
    free = free_flexibility(inst.a, inst.b) if inst.n else 0.0
    holds = (not inst.cap_enabled) or free <= inst.f
    return Assumption1Check(holds, free)


# -- JSON -------------------------------------------------------------------


def instance_to_json(inst: MarketInstance, indent: Optional[int] = 2) -> str:
    doc = {
        "p": inst.p,
        "f": inst.f,
        "cap_enabled": inst.cap_enabled,
        "prosumers": [{"a": pr.a, "b": pr.b, "m": pr.m} for pr in inst.prosumers],
    }
    return json.dumps(doc, indent=indent) + "\n"


def instance_from_json(text: str) -> MarketInstance:
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("instance document must be a JSON object")
    try:
        prosumers = [
            Prosumer(float(d["a"]), float(d["b"]), float(d["m"])) for d in doc["prosumers"]
        ]
        return MarketInstance(
            prosumers,
            float(doc["p"]),
            float(doc["f"]),
            bool(doc.get("cap_enabled", True)),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance document: {exc!r}") from exc


def load_instance(path) -> MarketInstance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_json(fh.read())


def save_instance(inst: MarketInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_json(inst))

