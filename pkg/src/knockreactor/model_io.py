"""Metabolic model parsing and derived structures.

Reads the community JSON schema (``metabolites``/``reactions`` arrays with
per-reaction stoichiometry and bounds), validates referential integrity,
detects exchange reactions, and derives the irreversible split model with
its column-to-source mapping matrix.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .params import ConfigError, molar_mass


class ModelError(Exception):
    """Malformed or inconsistent model document."""


@dataclass(frozen=True)
class Metabolite:
    id: str
    compartment: str = ""
    name: str = ""
    formula: str = ""
    charge: int | None = None


@dataclass(frozen=True)
class Reaction:
    id: str
    stoichiometry: dict            # metabolite id -> signed coefficient
    lower_bound: float
    upper_bound: float
    name: str = ""

    @property
    def reversible(self) -> bool:
        return self.lower_bound < 0.0

    @property
    def is_exchange(self) -> bool:
        return len(self.stoichiometry) == 1


@dataclass
class MetabolicModel:
    metabolites: list
    reactions: list
    biomass_reaction_id: str
    atpm_reaction_id: str
    exchange_ids: frozenset
    model_id: str = ""
    _met_index: dict = field(default_factory=dict, repr=False)
    _rxn_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._met_index = {m.id: i for i, m in enumerate(self.metabolites)}
        self._rxn_index = {r.id: i for i, r in enumerate(self.reactions)}
        self.validate()

    def validate(self):
        if len(self._met_index) != len(self.metabolites):
            raise ModelError("duplicate metabolite ids")
        if len(self._rxn_index) != len(self.reactions):
            raise ModelError("duplicate reaction ids")
        for r in self.reactions:
            for mid in r.stoichiometry:
                if mid not in self._met_index:
                    raise ModelError(f"reaction {r.id}: unknown metabolite {mid!r}")
            if r.lower_bound > r.upper_bound:
                raise ModelError(f"reaction {r.id}: lower bound exceeds upper bound")
        for rid in (self.biomass_reaction_id, self.atpm_reaction_id):
            if rid not in self._rxn_index:
                raise ModelError(f"designated reaction {rid!r} not in model")
        for rid in self.exchange_ids:
            if len(self.reaction(rid).stoichiometry) != 1:
                raise ModelError(f"exchange {rid} must have exactly one metabolite")

    def metabolite(self, mid: str) -> Metabolite:
        return self.metabolites[self._met_index[mid]]

    def reaction(self, rid: str) -> Reaction:
        return self.reactions[self._rxn_index[rid]]

    def reaction_index(self, rid: str) -> int:
        return self._rxn_index[rid]

    def has_reaction(self, rid: str) -> bool:
        return rid in self._rxn_index

    def exchange_metabolite(self, rid: str) -> Metabolite:
        (mid,) = self.reaction(rid).stoichiometry
        return self.metabolite(mid)

    def product_molar_mass(self, exchange_id: str) -> float:
        """Molar mass of the single metabolite behind an exchange [g/mol]."""
        met = self.exchange_metabolite(exchange_id)
        if not met.formula:
            raise ModelError(f"metabolite {met.id} carries no formula; "
                             f"set the molar mass explicitly in the config")
        return molar_mass(met.formula)

    def to_json(self) -> str:
        """Canonical JSON emission; parse(to_json()) reproduces the model."""
        doc = {
            "metabolites": [
                {k: v for k, v in (("id", m.id), ("name", m.name),
                                   ("compartment", m.compartment),
                                   ("charge", m.charge), ("formula", m.formula))
                 if v not in ("", None)}
                for m in self.metabolites
            ],
            "reactions": [
                {"id": r.id, **({"name": r.name} if r.name else {}),
                 "metabolites": {k: r.stoichiometry[k] for k in sorted(r.stoichiometry)},
                 "lower_bound": r.lower_bound, "upper_bound": r.upper_bound}
                for r in self.reactions
            ],
            "id": self.model_id,
        }
        return json.dumps(doc, indent=1, sort_keys=False)


def parse_model(data, biomass_id: str = "", biomass_marker: str = "BIOMASS",
                atpm_id: str = "ATPM", model_id: str = "") -> MetabolicModel:
    """Parse a community-schema JSON document (bytes or str).

    The biomass reaction is resolved either by exact id or as the unique
    reaction whose id contains ``biomass_marker``.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON at byte {exc.pos}: {exc.msg}")
    if not isinstance(doc, dict) or "metabolites" not in doc or "reactions" not in doc:
        raise ModelError("document must carry 'metabolites' and 'reactions' arrays")

    mets = []
    for entry in doc["metabolites"]:
        if "id" not in entry:
            raise ModelError("metabolite without id")
        mets.append(Metabolite(
            id=entry["id"], compartment=entry.get("compartment", ""),
            name=entry.get("name", ""), formula=entry.get("formula") or "",
            charge=entry.get("charge")))

    rxns = []
    for entry in doc["reactions"]:
        for key in ("id", "metabolites", "lower_bound", "upper_bound"):
            if key not in entry:
                raise ModelError(f"reaction {entry.get('id', '?')!r} missing {key!r}")
        rxns.append(Reaction(
            id=entry["id"],
            stoichiometry={k: float(v) for k, v in entry["metabolites"].items()},
            lower_bound=float(entry["lower_bound"]),
            upper_bound=float(entry["upper_bound"]),
            name=entry.get("name", "")))

    rxn_ids = {r.id for r in rxns}
    if biomass_id:
        if biomass_id not in rxn_ids:
            raise ConfigError(f"configured biomass reaction {biomass_id!r} not in model")
        biomass = biomass_id
    else:
        hits = [r.id for r in rxns if biomass_marker in r.id]
        if not hits:
            raise ConfigError(f"no reaction id contains biomass marker {biomass_marker!r}")
        if len(hits) > 1:
            raise ConfigError(f"biomass marker {biomass_marker!r} ambiguous: {sorted(hits)}")
        biomass = hits[0]
    if atpm_id not in rxn_ids:
        raise ConfigError(f"ATP maintenance reaction {atpm_id!r} not in model")

    exchange = frozenset(r.id for r in rxns if r.is_exchange)
    return MetabolicModel(metabolites=mets, reactions=rxns,
                          biomass_reaction_id=biomass, atpm_reaction_id=atpm_id,
                          exchange_ids=exchange,
                          model_id=doc.get("id", model_id))


def load_model_file(path: str, **kw) -> MetabolicModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read(), **kw)


def bundled_model_path(name: str = "e_coli_core"):
    """Filesystem path of a model shipped with the package."""
    res = importlib.resources.files("knockreactor") / "data" / f"{name}.json"
    return str(res)


@dataclass(frozen=True)
class IrreversibleColumn:
    source_reaction: str
    direction: int        # +1 forward, -1 backward
    lower: float
    upper: float


@dataclass
class IrreversibleModel:
    """Nonnegative-flux reformulation of a MetabolicModel.

    ``stoich`` is m x n over the split columns; ``mapping`` is the n x r
    0/1 matrix linking each column to its source reaction.
    """

    base: MetabolicModel
    columns: list
    stoich: sp.csc_matrix
    mapping: sp.csc_matrix
    _source_cols: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._source_cols = {}
        for j, col in enumerate(self.columns):
            self._source_cols.setdefault(col.source_reaction, []).append(j)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def columns_of(self, source_id: str) -> list:
        return self._source_cols[source_id]

    def bound_arrays(self):
        lo = np.array([c.lower for c in self.columns])
        hi = np.array([c.upper for c in self.columns])
        return lo, hi

    def net_fluxes(self, w: np.ndarray) -> np.ndarray:
        """Collapse split-column fluxes w to net source-reaction fluxes."""
        signs = np.array([c.direction for c in self.columns], dtype=float)
        return np.asarray(self.mapping.T @ (signs * w)).ravel()

    def objective_for(self, source_id: str) -> np.ndarray:
        """Column objective vector maximizing the net flux of one reaction."""
        c = np.zeros(self.n_columns)
        for j in self.columns_of(source_id):
            c[j] = float(self.columns[j].direction)
        return c


def split_reversible(model: MetabolicModel) -> IrreversibleModel:
    """Split reversible reactions into forward/backward nonnegative columns."""
    cols = []
    data, rows, col_idx = [], [], []
    map_rows, map_cols = [], []
    met_index = {m.id: i for i, m in enumerate(model.metabolites)}

    def add_column(src_i, rxn, direction, lower, upper):
        j = len(cols)
        cols.append(IrreversibleColumn(rxn.id, direction, lower, upper))
        for mid, coef in rxn.stoichiometry.items():
            rows.append(met_index[mid])
            col_idx.append(j)
            data.append(coef * direction)
        map_rows.append(j)
        map_cols.append(src_i)

    for i, rxn in enumerate(model.reactions):
        add_column(i, rxn, +1, max(rxn.lower_bound, 0.0), max(rxn.upper_bound, 0.0))
        if rxn.lower_bound < 0.0:
            add_column(i, rxn, -1, 0.0, -rxn.lower_bound)

    m = len(model.metabolites)
    n = len(cols)
    stoich = sp.csc_matrix((data, (rows, col_idx)), shape=(m, n))
    mapping = sp.csc_matrix((np.ones(len(map_rows)), (map_rows, map_cols)),
                            shape=(n, len(model.reactions)))
    return IrreversibleModel(base=model, columns=cols, stoich=stoich, mapping=mapping)


def apply_knockouts(irr: IrreversibleModel, deleted) -> IrreversibleModel:
    """New split model with all columns of the deleted reactions closed."""
    for rid in deleted:
        if rid not in irr._source_cols:
            raise ModelError(f"unknown reaction {rid}")
    zero = set()
    for rid in deleted:
        zero.update(irr.columns_of(rid))
    cols = [IrreversibleColumn(c.source_reaction, c.direction, 0.0, 0.0)
            if j in zero else c
            for j, c in enumerate(irr.columns)]
    return IrreversibleModel(base=irr.base, columns=cols,
                             stoich=irr.stoich, mapping=irr.mapping)


@dataclass(frozen=True)
class IonAnnotation:
    """Exchange reactions entering the strong-ion charge balance."""

    strong_acid_exchanges: frozenset
    strong_base_exchanges: frozenset

    def validate(self, model: MetabolicModel):
        both = self.strong_acid_exchanges & self.strong_base_exchanges
        if both:
            raise ConfigError(f"ions annotated as both acid and base: {sorted(both)}")
        for rid in self.strong_acid_exchanges | self.strong_base_exchanges:
            if rid not in model.exchange_ids:
                raise ConfigError(f"ion annotation {rid!r} is not an exchange reaction")

    @classmethod
    def from_config(cls, cfg, model: MetabolicModel) -> "IonAnnotation":
        ann = cls(strong_acid_exchanges=frozenset(r for r in cfg.strong_acid_exchanges
                                                  if model.has_reaction(r)),
                  strong_base_exchanges=frozenset(r for r in cfg.strong_base_exchanges
                                                  if model.has_reaction(r)))
        ann.validate(model)
        return ann


@dataclass(frozen=True)
class KnockoutCandidates:
    candidate_ids: tuple

    def __contains__(self, rid):
        return rid in set(self.candidate_ids)


def knockout_candidates(model: MetabolicModel, exclude=(), prune_blocked=False,
                        flux_range=None) -> KnockoutCandidates:
    """Deterministic candidate list for reaction elimination.

    Always excludes biomass, ATP maintenance, and exchange reactions, plus
    any configured ids. With ``prune_blocked`` the caller supplies an FVA
    probe ``flux_range(rid) -> (lo, hi)`` and reactions pinned to zero flux
    are dropped (deleting them can never change any solution).
    """
    drop = set(exclude) | {model.biomass_reaction_id, model.atpm_reaction_id}
    drop |= model.exchange_ids
    out = []
    for r in sorted(model.reactions, key=lambda r_: r_.id):
        if r.id in drop:
            continue
        if prune_blocked:
            if flux_range is None:
                raise ConfigError("prune_blocked requires a flux_range probe")
            lo, hi = flux_range(r.id)
            if max(abs(lo), abs(hi)) <= 1e-9:
                continue
        out.append(r.id)
    return KnockoutCandidates(candidate_ids=tuple(out))
