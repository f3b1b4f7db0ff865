"""Parameter blocks for fermentation kinetics, reactor physics, and costs.

Defaults reproduce the tabulated values shipped with the toolkit; every
field can be overridden through the run configuration so sensitivity
studies need no code changes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace

# atomic masses for molar-mass resolution from metabolite formulas
_ATOMIC = {
    "C": 12.011, "H": 1.008, "N": 14.007, "O": 15.999, "P": 30.974,
    "S": 32.06, "Na": 22.99, "K": 39.098, "Mg": 24.305, "Ca": 40.078,
    "Fe": 55.845, "Cl": 35.45, "Zn": 65.38, "Cu": 63.546, "Mn": 54.938,
    "Co": 58.933, "Mo": 95.95, "Se": 78.971, "Ni": 58.693, "W": 183.84,
}


class ConfigError(Exception):
    pass


def molar_mass(formula: str) -> float:
    """Molar mass in g/mol from a Hill-style formula like 'C6H12O6'."""
    if not formula:
        raise ConfigError("empty formula")
    total = 0.0
    matched = 0
    for el, cnt in re.findall(r"([A-Z][a-z]?)(\d*)", formula):
        if not el:
            continue
        if el not in _ATOMIC:
            raise ConfigError(f"unknown element {el!r} in formula {formula!r}")
        total += _ATOMIC[el] * (int(cnt) if cnt else 1)
        matched += len(el) + len(cnt)
    if matched != len(formula):
        raise ConfigError(f"cannot parse formula {formula!r}")
    return total


@dataclass
class KineticsParams:
    """Fermentation-side constants; fluxes in mmol/gCDW/h, growth in 1/h."""

    K_S: float = 0.044          # Monod constant [g/L]
    v_bio_opt: float = 0.73     # max growth rate at optimal pH [1/h]
    f: float = 0.1              # required fraction of wild-type growth [-]
    v_S_upper: float = 10.0     # substrate uptake cap [mmol/gCDW/h]
    v_ATP_lower: float = 6.86   # non-growth ATP maintenance [mmol/gCDW/h]
    v_bio_WT: float | None = None  # wild-type growth, filled in by FBA [1/h]

    def validate(self):
        for name in ("K_S", "v_bio_opt", "v_S_upper", "v_ATP_lower"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"kinetics.{name} must be positive")
        if not 0.0 < self.f < 1.0:
            raise ConfigError("kinetics.f must lie in (0, 1)")


@dataclass
class ReactorParams:
    """Bioreactor geometry, transfer and utility constants (SI + h units)."""

    beta: float = 1.2            # headspace multiplier [-]
    q: float = 2.5               # culture height / diameter [-]
    delta_heat: float = 0.13     # metabolic heat per O2 [kWh/mol]
    phi: float = 0.3             # dissolved-O2 fraction of saturation [-]
    alpha: float = 1.4           # polytropic exponent [-]
    eta_compress: float = 0.7
    eta_pump: float = 0.7
    rho_cooling: float = 1000.0  # [kg/m3]
    rho_culture: float = 1000.0  # [kg/m3]
    rho_o2: float = 1.27         # O2 density at culture temperature [kg/m3]
    c_o2_equil: float = 0.0068   # O2 solubility [g/L]
    cp_cooling: float = 4184.0   # cooling water heat capacity [J/kg/K]
    T_cooling_in: float = 288.15   # [K]
    T_cooling_out: float = 298.15  # [K]
    p0: float = 1.0e5            # atmospheric pressure [Pa]
    p_air: float = 2.5e5         # sparger feed pressure [Pa]
    g: float = 9.81              # [m/s2]
    our_max: float = 250.0       # oxygen uptake cap [mmol/L/h]
    n_r_upper: int = 10          # max parallel reactors [-]
    v_r_upper: float = 10.0      # max reactor volume [m3]
    ph_min: float = 4.0
    ph_lower: float = 4.5
    ph_opt: float = 7.0
    ph_upper: float = 7.5
    ph_max: float = 9.0
    eps_gas_cap: float = 0.5     # holdup correlation validity cap [-]
    c_bio_lower: float = 0.1     # biomass concentration search range [gCDW/L]
    c_bio_upper: float = 100.0

    def validate(self):
        if not (self.ph_min < self.ph_lower < self.ph_opt < self.ph_upper < self.ph_max):
            raise ConfigError("pH cardinal values must satisfy min<lower<opt<upper<max")
        if not 0.0 < self.phi < 1.0:
            raise ConfigError("phi must lie in (0, 1)")
        if self.beta < 1.0:
            raise ConfigError("beta must be >= 1")
        for name in ("eta_compress", "eta_pump"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.T_cooling_in == self.T_cooling_out:
            raise ConfigError("cooling inlet and outlet temperature coincide")
        if self.n_r_upper < 1 or self.v_r_upper <= 0:
            raise ConfigError("reactor count/volume caps must be positive")
        if not 0.0 < self.eps_gas_cap < 1.0:
            raise ConfigError("eps_gas_cap must lie in (0, 1)")
        if not 0.0 < self.c_bio_lower < self.c_bio_upper:
            raise ConfigError("c_bio range must be positive and ordered")

    def for_capacity(self, capacity: float) -> "ReactorParams":
        """Large-scale tier: 100 reactors / 100 m3 from 1e6 kg/a upward."""
        if capacity >= 1e6 and self.n_r_upper == 10 and self.v_r_upper == 10.0:
            return replace(self, n_r_upper=100, v_r_upper=100.0)
        return self


@dataclass
class CostParams:
    """Specific costs and molar masses. Molar masses in g/mol."""

    C_S: float = 0.79            # substrate (glucose) [USD/kg]
    C_acid: float = 0.064        # sulfuric acid [USD/kg]
    C_base: float = 0.29         # sodium hydroxide [USD/kg]
    C_cooling: float = 0.17      # cooling water [USD/m3]
    C_power: float = 0.06        # electricity [USD/kWh]
    C_R_ref: float = 40000.0     # reference reactor investment [USD]
    V_R_ref: float = 0.5         # reference reactor volume [m3]
    t_annual: float = 8400.0     # operating hours per year [h/a]
    t_amortization: float = 15.0  # amortization period [a]
    M_S: float = 180.156         # substrate molar mass [g/mol]
    M_P: float = 0.0             # product molar mass, resolved from model [g/mol]
    M_O2: float = 31.998
    M_acid: float = 98.1
    M_base: float = 40.0

    def validate(self):
        for f_ in fields(self):
            v = getattr(self, f_.name)
            if v <= 0:
                raise ConfigError(f"costs.{f_.name} must be positive")


def _apply_overrides(obj, overrides: dict, section: str):
    known = {f_.name for f_ in fields(obj)}
    for key, val in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown {section} parameter {key!r}")
        setattr(obj, key, type(getattr(obj, key))(val) if getattr(obj, key) is not None else val)
    return obj


@dataclass
class CandidateConfig:
    exclude: tuple = ()
    prune_blocked: bool = False


@dataclass
class SearchConfig:
    strategy: str = "auto"       # auto | exhaustive | pruned | beam
    beam_width: int = 50

    def validate(self):
        if self.strategy not in ("auto", "exhaustive", "pruned", "beam"):
            raise ConfigError(f"unknown search strategy {self.strategy!r}")
        if self.beam_width < 1:
            raise ConfigError("beam width must be >= 1")


@dataclass
class FluxSelectionConfig:
    strategy: str = "scan"       # scan | max_product
    n_scan: int = 5

    def validate(self):
        if self.strategy not in ("scan", "max_product"):
            raise ConfigError(f"unknown flux selection strategy {self.strategy!r}")
        if self.n_scan < 1:
            raise ConfigError("n_scan must be >= 1")


@dataclass
class RunConfig:
    """One self-contained run description (deterministic, no RNG fields)."""

    model_path: str = ""
    product: str = ""            # product exchange reaction id
    substrate: str = "EX_glc__D_e"
    oxygen: str = "EX_o2_e"
    kappa: int = 1
    capacity: float = 1e3        # [kg/a]
    biomass_id: str = ""
    biomass_marker: str = "BIOMASS"
    atpm_id: str = "ATPM"
    strong_acid_exchanges: tuple = ("EX_for_e", "EX_ac_e", "EX_succ_e")
    strong_base_exchanges: tuple = ("EX_nh4_e",)
    candidates: CandidateConfig = field(default_factory=CandidateConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    flux_selection: FluxSelectionConfig = field(default_factory=FluxSelectionConfig)
    kinetics: KineticsParams = field(default_factory=KineticsParams)
    reactor: ReactorParams = field(default_factory=ReactorParams)
    costs: CostParams = field(default_factory=CostParams)
    threads: int = 1

    def validate(self):
        if self.kappa < 0:
            raise ConfigError("kappa must be >= 0")
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        if not self.product:
            raise ConfigError("product exchange id is required")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        overlap = set(self.strong_acid_exchanges) & set(self.strong_base_exchanges)
        if overlap:
            raise ConfigError(f"exchanges annotated as both acid and base: {sorted(overlap)}")
        self.kinetics.validate()
        self.reactor.validate()
        self.costs.validate()
        self.search.validate()
        self.flux_selection.validate()


# default exclusions for the bundled core model: spontaneous diffusion
# pseudo-reactions are not enzyme-backed and therefore not knockable
CORE_SPONTANEOUS = ("ACALDt", "CO2t", "H2Ot", "NH4t", "O2t")


def default_core_config(product: str, **kw) -> RunConfig:
    cfg = RunConfig(product=product,
                    biomass_id="BIOMASS_Ecoli_core_w_GAM",
                    candidates=CandidateConfig(exclude=CORE_SPONTANEOUS,
                                               prune_blocked=True))
    for key, val in kw.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, val)
    if cfg.product:
        cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    """Load a JSON run configuration; unknown keys are rejected."""
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: invalid JSON at byte {exc.pos}: {exc.msg}")
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RunConfig:
    cfg = RunConfig()
    plain = {"model_path", "product", "substrate", "oxygen", "kappa", "capacity",
             "biomass_id", "biomass_marker", "atpm_id", "threads"}
    for key, val in doc.items():
        if key in plain:
            setattr(cfg, key, type(getattr(cfg, key))(val))
        elif key in ("strong_acid_exchanges", "strong_base_exchanges"):
            setattr(cfg, key, tuple(val))
        elif key == "candidates":
            cfg.candidates = CandidateConfig(exclude=tuple(val.get("exclude", ())),
                                             prune_blocked=bool(val.get("prune_blocked", False)))
        elif key == "search":
            cfg.search = _apply_overrides(SearchConfig(), val, "search")
        elif key == "flux_selection":
            cfg.flux_selection = _apply_overrides(FluxSelectionConfig(), val, "flux_selection")
        elif key == "kinetics":
            cfg.kinetics = _apply_overrides(KineticsParams(), val, "kinetics")
        elif key == "reactor":
            cfg.reactor = _apply_overrides(ReactorParams(), val, "reactor")
        elif key == "costs":
            cfg.costs = _apply_overrides(CostParams(), val, "costs")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    cfg.validate()
    return cfg
