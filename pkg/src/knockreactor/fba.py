"""Flux balance analysis over the irreversible split model.

Wraps one LpSession per model so that knockout solves, growth pinning,
flux-variability probes, and alternate-optimum selection all warm-start
from the wild-type basis. All fluxes are net source-reaction fluxes in
mmol/gCDW/h; uptakes are reported positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import EQ, LpProblem, LpSession, ToleranceSet, duality_gap
from .model_io import IonAnnotation, IrreversibleModel, ModelError
from .params import KineticsParams


class FbaError(Exception):
    pass


@dataclass(frozen=True)
class KnockoutSet:
    deleted_ids: frozenset
    budget: int

    def __post_init__(self):
        if len(self.deleted_ids) > self.budget:
            raise FbaError(f"{len(self.deleted_ids)} deletions exceed budget {self.budget}")

    @classmethod
    def of(cls, ids, budget=None):
        ids = frozenset(ids)
        return cls(deleted_ids=ids, budget=len(ids) if budget is None else budget)

    def sorted_ids(self):
        return tuple(sorted(self.deleted_ids))


@dataclass
class FluxBundle:
    """One lower-level flux solution plus the scalars the reactor needs."""

    net: np.ndarray            # net flux per source reaction
    v_bio: float               # growth rate [1/h]
    v_S: float                 # substrate uptake (positive)
    v_P: float                 # product secretion (positive)
    v_O2: float                # oxygen uptake (positive)
    ion_net: float             # strong acid minus strong base exchange flux
    knockouts: KnockoutSet

    def flux_of(self, model, rid):
        return float(self.net[model.reaction_index(rid)])


@dataclass
class Infeasible:
    reason: str
    v_bio: float = float("nan")


class FbaEngine:
    """FBA operations for one model / product / parameter set."""

    def __init__(self, irr: IrreversibleModel, kinetics: KineticsParams,
                 product_id: str, substrate_id: str, oxygen_id: str,
                 ions: IonAnnotation, tol: ToleranceSet = ToleranceSet(),
                 record_gaps: bool = False):
        model = irr.base
        for rid in (product_id, substrate_id, oxygen_id):
            if not model.has_reaction(rid):
                raise ModelError(f"unknown reaction {rid}")
        self.irr = irr
        self.model = model
        self.kinetics = kinetics
        self.product_id = product_id
        self.substrate_id = substrate_id
        self.oxygen_id = oxygen_id
        self.ions = ions
        self.tol = tol
        self.record_gaps = record_gaps
        self.gap_log = []

        self.lo0, self.hi0 = irr.bound_arrays()
        # substrate uptake capped by kinetics; backward column of the
        # substrate exchange carries the uptake direction
        for j in irr.columns_of(substrate_id):
            if irr.columns[j].direction < 0:
                self.hi0[j] = min(self.hi0[j], kinetics.v_S_upper)
        for j in irr.columns_of(model.atpm_reaction_id):
            if irr.columns[j].direction > 0:
                self.lo0[j] = max(self.lo0[j], kinetics.v_ATP_lower)

        bio_cols = [j for j in irr.columns_of(model.biomass_reaction_id)
                    if irr.columns[j].direction > 0]
        if len(bio_cols) != 1:
            raise ModelError("biomass reaction must have a single forward column")
        self.bio_col = bio_cols[0]

        c_growth = np.zeros(irr.n_columns)
        c_growth[self.bio_col] = 1.0
        self.c_growth = c_growth
        problem = LpProblem(objective=c_growth, matrix=irr.stoich,
                            row_kind=[EQ] * irr.stoich.shape[0],
                            rhs=np.zeros(irr.stoich.shape[0]),
                            lo=self.lo0, hi=self.hi0,
                            name=f"fba:{model.model_id or 'model'}")
        self.session = LpSession(problem, tol)
        self._growth_cache = {}
        self._wt = None

    def clone(self) -> "FbaEngine":
        """Independent engine (own LP session) for parallel workers."""
        return FbaEngine(self.irr, self.kinetics, self.product_id,
                         self.substrate_id, self.oxygen_id, self.ions,
                         self.tol, self.record_gaps)

    # -- plumbing ---------------------------------------------------------
    def _ko_bounds(self, ko: KnockoutSet):
        lo, hi = self.lo0.copy(), self.hi0.copy()
        for rid in ko.deleted_ids:
            if rid not in self.irr._source_cols:
                raise ModelError(f"unknown reaction {rid}")
            for j in self.irr.columns_of(rid):
                lo[j] = 0.0
                hi[j] = 0.0
        return lo, hi

    def _solve(self, label, **kw):
        sol, snap = self.session.solve(**kw)
        if sol.is_optimal and self.record_gaps:
            view = LpProblem(objective=kw.get("objective", self.c_growth),
                             matrix=self.irr.stoich,
                             row_kind=[EQ] * self.irr.stoich.shape[0],
                             rhs=np.zeros(self.irr.stoich.shape[0]),
                             lo=kw.get("lo", self.lo0), hi=kw.get("hi", self.hi0))
            self.gap_log.append((label, duality_gap(view, sol)))
        return sol, snap

    def _bundle(self, w, ko: KnockoutSet) -> FluxBundle:
        net = self.irr.net_fluxes(w)
        model = self.model
        def exch(rid):
            return float(net[model.reaction_index(rid)])
        v_bio = float(w[self.bio_col])
        ion = sum(exch(r) for r in self.ions.strong_acid_exchanges) - \
            sum(exch(r) for r in self.ions.strong_base_exchanges)
        return FluxBundle(net=net, v_bio=v_bio,
                          v_S=max(0.0, -exch(self.substrate_id)),
                          v_P=max(0.0, exch(self.product_id)),
                          v_O2=max(0.0, -exch(self.oxygen_id)),
                          ion_net=float(ion), knockouts=ko)

    # -- operations --------------------------------------------------------
    def wild_type_growth(self) -> FluxBundle:
        """Growth-maximal wild-type bundle; pins kinetics.v_bio_WT."""
        if self._wt is None:
            sol, snap = self._solve("wild_type")
            if not sol.is_optimal:
                raise FbaError(f"wild-type FBA {sol.status}; model cannot grow "
                               f"under the configured bounds")
            self.kinetics.v_bio_WT = sol.objective_value
            self._wt = self._bundle(sol.primal, KnockoutSet.of(())), snap
        return self._wt[0]

    @property
    def growth_threshold(self) -> float:
        self.wild_type_growth()
        return self.kinetics.f * self.kinetics.v_bio_WT

    def max_growth(self, ko: KnockoutSet):
        """Growth-maximal bundle under knockouts, or Infeasible.

        Infeasible covers both an empty feasible set (maintenance cannot be
        met) and growth below the wild-type fraction threshold.
        """
        key = ko.deleted_ids
        if key in self._growth_cache:
            return self._growth_cache[key]
        self.wild_type_growth()
        lo, hi = self._ko_bounds(ko)
        sol, _ = self._solve(f"growth:{'+'.join(sorted(key))}", lo=lo, hi=hi)
        if not sol.is_optimal:
            out = Infeasible(reason="lp_infeasible")
        elif sol.objective_value < self.growth_threshold - 1e-12:
            out = Infeasible(reason="below_biomass_threshold", v_bio=sol.objective_value)
        else:
            out = self._bundle(sol.primal, ko)
        self._growth_cache[key] = out
        return out

    def _pin(self, lo, hi, col_ids, value):
        band = 1e-9 * max(1.0, abs(value))
        for j in col_ids:
            direction = self.irr.columns[j].direction
            if direction > 0:
                lo[j] = max(0.0, value - band) if value >= 0 else 0.0
                hi[j] = max(0.0, value + band)
            else:
                lo[j] = max(0.0, -value - band) if value <= 0 else 0.0
                hi[j] = max(0.0, -value + band)

    def _pinned_growth_bounds(self, ko: KnockoutSet, v_bio_star: float):
        lo, hi = self._ko_bounds(ko)
        band = 1e-9 * max(1.0, abs(v_bio_star))
        lo[self.bio_col] = v_bio_star - band
        hi[self.bio_col] = v_bio_star + band
        return lo, hi

    def flux_range(self, ko: KnockoutSet, reaction_id: str, fixed_growth: float):
        """FVA probe: [min, max] net flux of one reaction at pinned growth."""
        lo, hi = self._pinned_growth_bounds(ko, fixed_growth)
        c = self.irr.objective_for(reaction_id)
        smax, _ = self._solve(f"fva_max:{reaction_id}", lo=lo, hi=hi, objective=c)
        smin, _ = self._solve(f"fva_min:{reaction_id}", lo=lo, hi=hi, objective=-c)
        if not (smax.is_optimal and smin.is_optimal):
            raise FbaError(f"flux range at pinned growth infeasible for {reaction_id}")
        return (-smin.objective_value, smax.objective_value)

    def _min_o2_bundle(self, ko, lo, hi, label):
        c_o2 = self.irr.objective_for(self.oxygen_id)  # max net exchange = min uptake
        sol, _ = self._solve(label, lo=lo, hi=hi, objective=c_o2)
        if not sol.is_optimal:
            return None
        return self._bundle(sol.primal, ko)

    def select_fluxes(self, ko: KnockoutSet, v_bio_star: float,
                      strategy: str = "scan", n_scan: int = 5):
        """Candidate alternate optima at fixed growth.

        ``max_product``: maximize product secretion, then minimize oxygen
        uptake at that product level. ``scan``: additionally sample the
        product's variability range at n_scan evenly spaced targets, each
        with oxygen uptake minimized.
        """
        lo, hi = self._pinned_growth_bounds(ko, v_bio_star)
        c_p = self.irr.objective_for(self.product_id)
        sol_p, _ = self._solve("max_product", lo=lo, hi=hi, objective=c_p)
        if not sol_p.is_optimal:
            raise FbaError("growth pin infeasible in select_fluxes")
        p_max = sol_p.objective_value

        bundles = []
        seen = set()

        def add_at_product(value, label):
            lo2, hi2 = lo.copy(), hi.copy()
            self._pin(lo2, hi2, self.irr.columns_of(self.product_id), value)
            b = self._min_o2_bundle(ko, lo2, hi2, label)
            if b is None:
                return
            key = round(b.v_P, 9)
            if key not in seen:
                seen.add(key)
                bundles.append(b)

        add_at_product(p_max, "bundle_pmax")
        if strategy == "scan" and n_scan > 1:
            smin, _ = self._solve("min_product", lo=lo, hi=hi, objective=-c_p)
            p_min = -smin.objective_value if smin.is_optimal else 0.0
            for t in np.linspace(p_min, p_max, n_scan):
                add_at_product(float(t), f"bundle_{t:.6g}")
        return bundles
