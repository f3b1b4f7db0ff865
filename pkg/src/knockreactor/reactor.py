"""Continuous stirred-tank design cascade and hourly cost model.

Given one lower-level flux solution, a design point (pH, biomass
concentration, reactor count) fixes every remaining quantity analytically:
Monod residual substrate, product titer, throughput, vessel geometry,
oxygen transfer (van't Riet inversion), gas holdup, compression, heat load
and cooling. ``optimize_design`` searches the design point by coarse grid
plus pattern refinement.

Per-reactor quantities: volumes, diameter, heights, cross-section, gas
velocity, kLa, holdup. Plant totals: outflow, air/O2 flows, powers, heat
flows, cooling mass flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .fba import FluxBundle
from .params import CostParams, ReactorParams


class DesignError(Exception):
    pass


@dataclass(frozen=True)
class DesignPoint:
    ph: float
    c_bio: float              # biomass concentration [gCDW/L]
    n_r: int                  # parallel reactors

    def validate(self, rp: ReactorParams):
        if not rp.ph_lower <= self.ph <= rp.ph_upper:
            raise DesignError(f"pH {self.ph} outside [{rp.ph_lower}, {rp.ph_upper}]")
        if self.c_bio <= 0:
            raise DesignError("c_bio must be positive")
        if not 1 <= self.n_r <= rp.n_r_upper:
            raise DesignError(f"n_r {self.n_r} outside [1, {rp.n_r_upper}]")


@dataclass(frozen=True)
class InfeasibleDesign:
    reason: str
    detail: str = ""

    @property
    def feasible(self):
        return False


@dataclass
class ReactorDesign:
    gamma: float
    v_bio_max: float            # pH-inhibited growth ceiling [1/h]
    c_s_residual: float         # [g/L]
    c_s_feed: float             # [g/L]
    c_p: float                  # product titer [g/L]
    vdot: float                 # plant outflow [m3/h]
    v_culture: float            # per reactor [m3]
    v_gas: float                # per reactor [m3]
    v_r: float                  # per reactor [m3]
    diameter: float             # [m]
    h_culture: float            # [m]
    h_gas: float                # [m]
    a_cross: float              # [m2]
    u_s: float                  # superficial gas velocity [m/s]
    kla: float                  # [1/s]
    eps_gas: float              # holdup [-]
    our: float                  # oxygen uptake rate [g/L/h]
    vdot_o2: float              # plant O2 gas flow [m3/h]
    vdot_air: float             # plant air flow [m3/h]
    p_agitation: float          # plant total [kW]
    p_compress: float           # [kW]
    p_cooling: float            # [kW]
    qdot: float                 # total heat load [kW]
    qdot_met: float             # metabolic heat [kW]
    qdot_agitation: float       # [kW]
    mdot_cooling: float         # [kg/h]
    c_h_plus: float             # [mol/L]
    c_acid: float               # control acid [mol/L]
    c_base: float               # control base [mol/L]
    design_point: DesignPoint = None
    flux: FluxBundle = None
    capacity: float = 0.0

    @property
    def feasible(self):
        return True

    @property
    def specific_power(self):
        """Agitation power per culture volume [kW/m3]."""
        total_culture = self.v_culture * self.design_point.n_r
        return self.p_agitation / total_culture


@dataclass
class CostBreakdown:
    hourly_investment_reactor: float
    hourly_investment_compressor: float
    hourly_substrate: float
    hourly_ph_control: float
    hourly_cooling_agent: float
    hourly_power: float
    hourly_total: float
    specific_cost: float          # [USD/kg product]
    capex_reactor_total: float
    capex_compressor_total: float

    def as_dict(self):
        return {
            "hourly_investment_reactor": self.hourly_investment_reactor,
            "hourly_investment_compressor": self.hourly_investment_compressor,
            "hourly_substrate": self.hourly_substrate,
            "hourly_ph_control": self.hourly_ph_control,
            "hourly_cooling_agent": self.hourly_cooling_agent,
            "hourly_power": self.hourly_power,
            "hourly_total": self.hourly_total,
            "specific_cost": self.specific_cost,
            "capex_reactor_total": self.capex_reactor_total,
            "capex_compressor_total": self.capex_compressor_total,
        }


def cpm_gamma(ph: float, rp: ReactorParams) -> float:
    """Cardinal-pH growth inhibition factor; 1 at the optimum pH."""
    if not rp.ph_min < ph < rp.ph_max:
        raise DesignError(f"pH {ph} outside open interval ({rp.ph_min}, {rp.ph_max})")
    a = (ph - rp.ph_min) * (ph - rp.ph_max)
    return a / (a - (ph - rp.ph_opt) ** 2)


def ph_agents(ph_target: float, flux: FluxBundle, c_bio: float):
    """Control-agent concentrations closing the strong-ion charge balance.

    Returns (c_acid, c_base, c_H+) in mol/L; exactly one agent is nonzero
    (or both zero when the culture balances itself).
    """
    c_h = 10.0 ** (-ph_target)
    ion_offset = (c_bio / flux.v_bio) * flux.ion_net / 1000.0
    diff = c_h - ion_offset
    if diff >= 0.0:
        return diff, 0.0, c_h
    return 0.0, -diff, c_h


def evaluate_design(flux: FluxBundle, dp: DesignPoint, rp: ReactorParams,
                    cp: CostParams, capacity: float, kinetics=None):
    """Run the full sizing cascade; returns ReactorDesign or InfeasibleDesign.

    ``capacity`` is the annual production target [kg/a]. The Monod constant
    and optimal-pH growth ceiling come from ``kinetics`` (K_S, v_bio_opt).
    """
    dp.validate(rp)
    k_s = kinetics.K_S
    v_bio_opt = kinetics.v_bio_opt

    # 1. pH-inhibited growth ceiling; the Monod denominator must stay positive
    gamma = cpm_gamma(dp.ph, rp)
    v_bio_max = v_bio_opt * gamma
    if flux.v_bio >= v_bio_max:
        return InfeasibleDesign("growth_exceeds_ph_inhibited_max",
                                f"v_bio={flux.v_bio:.4f} >= {v_bio_max:.4f}")
    if flux.v_P <= 0.0:
        return InfeasibleDesign("zero_product")

    # 2-3. steady-state substrate and product concentrations
    c_s_residual = k_s * flux.v_bio / (v_bio_max - flux.v_bio)
    c_s_feed = c_s_residual + flux.v_S * (cp.M_S / 1000.0) * dp.c_bio / flux.v_bio
    c_p = flux.v_P * (cp.M_P / 1000.0) * dp.c_bio / flux.v_bio   # [g/L]

    # 4. throughput and per-reactor culture volume (numbering-up)
    vdot = capacity / (cp.t_annual * c_p)          # [m3/h]
    v_culture = vdot / (flux.v_bio * dp.n_r)       # per reactor [m3]

    # 5. cylindrical geometry
    diameter = (4.0 * v_culture / (math.pi * rp.q)) ** (1.0 / 3.0)
    h_culture = rp.q * diameter
    a_cross = math.pi / 4.0 * diameter ** 2

    # 6. oxygen uptake rate, capped
    our = flux.v_O2 * (cp.M_O2 / 1000.0) * dp.c_bio    # [g/L/h]
    if our > rp.our_max * cp.M_O2 / 1000.0:
        return InfeasibleDesign("our_bound", f"OUR={our:.3f} g/L/h")
    if our <= 0.0:
        # aerated-CSTR correlations are undefined at zero gas flow
        return InfeasibleDesign("zero_oxygen_uptake")

    # 7. gas flows (plant totals) and per-reactor superficial velocity
    v_culture_total = v_culture * dp.n_r
    vdot_o2 = our * v_culture_total / rp.rho_o2    # [m3/h]
    vdot_air = vdot_o2 / 0.21
    u_s = (vdot_air / dp.n_r) / (3600.0 * a_cross)  # [m/s]

    # 8. required kLa from OTR = OUR, inverted van't Riet for agitation power
    kla = our / ((1.0 - rp.phi) * rp.c_o2_equil) / 3600.0   # [1/s]
    spec_power = (kla / (0.002 * u_s ** 0.2)) ** (1.0 / 0.7)  # [W/m3]
    p_agitation_w = spec_power * v_culture_total

    # 9. gas holdup and gas volume
    eps_gas = 1.12 * (spec_power / rp.rho_culture) ** 0.29 * u_s ** 0.6
    if eps_gas >= rp.eps_gas_cap:
        return InfeasibleDesign("gas_holdup", f"eps={eps_gas:.3f}")
    v_gas = eps_gas / (1.0 - eps_gas) * v_culture
    h_gas = v_gas / a_cross

    # 10. vessel volume with headspace
    v_r = rp.beta * (v_culture + v_gas)
    if v_r > rp.v_r_upper:
        return InfeasibleDesign("reactor_volume", f"V_R={v_r:.3f} m3")

    # 11. adiabatic compression of the total air flow
    pressure_term = (rp.p_air / rp.p0) ** ((rp.alpha - 1.0) / rp.alpha) - 1.0
    p_compress_w = (rp.p0 * (vdot_air / 3600.0) / rp.eta_compress
                    * rp.alpha / (rp.alpha - 1.0) * pressure_term)

    # 12. heat load: metabolic + agitation
    qdot_met = rp.delta_heat * (our * v_culture_total * 1000.0 / cp.M_O2)  # [kW]
    qdot_agitation = p_agitation_w / 1000.0
    qdot = qdot_met + qdot_agitation

    # 13. cooling water flow and pumping power
    d_t = abs(rp.T_cooling_out - rp.T_cooling_in)
    mdot_cooling = qdot * 3.6e6 / (rp.cp_cooling * d_t)      # [kg/h]
    p_cooling_w = (mdot_cooling / 3600.0) * rp.g * (h_culture + h_gas) / rp.eta_pump

    # 14. pH control agents
    c_acid, c_base, c_h = ph_agents(dp.ph, flux, dp.c_bio)

    return ReactorDesign(
        gamma=gamma, v_bio_max=v_bio_max, c_s_residual=c_s_residual,
        c_s_feed=c_s_feed, c_p=c_p, vdot=vdot, v_culture=v_culture,
        v_gas=v_gas, v_r=v_r, diameter=diameter, h_culture=h_culture,
        h_gas=h_gas, a_cross=a_cross, u_s=u_s, kla=kla, eps_gas=eps_gas,
        our=our, vdot_o2=vdot_o2, vdot_air=vdot_air,
        p_agitation=p_agitation_w / 1000.0, p_compress=p_compress_w / 1000.0,
        p_cooling=p_cooling_w / 1000.0, qdot=qdot, qdot_met=qdot_met,
        qdot_agitation=qdot_agitation, mdot_cooling=mdot_cooling,
        c_h_plus=c_h, c_acid=c_acid, c_base=c_base, design_point=dp,
        flux=flux, capacity=capacity)


def cost_breakdown(d: ReactorDesign, cp: CostParams) -> CostBreakdown:
    """Hourly cost terms and specific cost per kg product.

    Reactor investment follows the economy-of-scale power law per vessel;
    the compressor is sized once on the total air flow.
    """
    n_r = d.design_point.n_r
    capex_reactor = n_r * cp.C_R_ref * (d.v_r / cp.V_R_ref) ** 0.6
    capex_compressor = 5840.0 * d.p_compress ** 0.82 if d.p_compress > 0 else 0.0
    amortized_hours = cp.t_annual * cp.t_amortization
    inv_reactor = capex_reactor / amortized_hours
    inv_compressor = capex_compressor / amortized_hours
    substrate = d.vdot * cp.C_S * d.c_s_feed
    ph_control = d.vdot * (cp.C_acid * cp.M_acid * d.c_acid
                           + cp.C_base * cp.M_base * d.c_base)
    cooling_agent = (d.mdot_cooling / 1000.0) * cp.C_cooling / 1.0
    cooling_agent = (d.mdot_cooling / _rho_cooling_of(d)) * cp.C_cooling
    power = cp.C_power * (d.p_compress + d.p_agitation + d.p_cooling)
    total = (inv_reactor + inv_compressor + substrate + ph_control
             + cooling_agent + power)
    produced = d.vdot * d.c_p     # [kg/h]
    return CostBreakdown(
        hourly_investment_reactor=inv_reactor,
        hourly_investment_compressor=inv_compressor,
        hourly_substrate=substrate, hourly_ph_control=ph_control,
        hourly_cooling_agent=cooling_agent, hourly_power=power,
        hourly_total=total, specific_cost=total / produced,
        capex_reactor_total=capex_reactor,
        capex_compressor_total=capex_compressor)


def _rho_cooling_of(d: ReactorDesign) -> float:
    return 1000.0


def optimize_design(flux: FluxBundle, rp: ReactorParams, cp: CostParams,
                    capacity: float, kinetics=None,
                    n_ph: int = 13, n_cbio: int = 25):
    """Minimize hourly cost over (pH, c_bio, n_R) for one flux bundle.

    Coarse grid per reactor count followed by pattern-search refinement.
    Deterministic tie-break: lower cost, then fewer reactors, then lower pH.
    Returns (ReactorDesign, CostBreakdown) or InfeasibleDesign carrying the
    dominant rejection reason.
    """
    rp = rp.for_capacity(capacity)
    ph_grid = [rp.ph_lower + i * (rp.ph_upper - rp.ph_lower) / (n_ph - 1)
               for i in range(n_ph)]
    lc_lo = math.log10(rp.c_bio_lower)
    lc_hi = math.log10(rp.c_bio_upper)
    lc_grid = [lc_lo + i * (lc_hi - lc_lo) / (n_cbio - 1) for i in range(n_cbio)]

    reasons = {}

    def try_point(ph, lc, n_r):
        ph = min(max(ph, rp.ph_lower), rp.ph_upper)
        lc = min(max(lc, lc_lo), lc_hi)
        dp = DesignPoint(ph=ph, c_bio=10.0 ** lc, n_r=n_r)
        des = evaluate_design(flux, dp, rp, cp, capacity, kinetics=kinetics)
        if not des.feasible:
            reasons[des.reason] = reasons.get(des.reason, 0) + 1
            return None
        return des, cost_breakdown(des, cp)

    best = None  # (cost, n_r, ph, design, breakdown)

    for n_r in range(1, rp.n_r_upper + 1):
        seed = None
        for ph in ph_grid:
            for lc in lc_grid:
                out = try_point(ph, lc, n_r)
                if out is None:
                    continue
                key = (out[1].hourly_total, out[0].design_point.ph)
                if seed is None or key < (seed[1].hourly_total, seed[0].design_point.ph):
                    seed = out
        if seed is None:
            continue
        # pattern search around the seed in (pH, log10 c_bio)
        cur = seed
        ph = cur[0].design_point.ph
        lc = math.log10(cur[0].design_point.c_bio)
        step_ph = (rp.ph_upper - rp.ph_lower) / (n_ph - 1)
        step_lc = (lc_hi - lc_lo) / (n_cbio - 1)
        for _ in range(200):
            moved = False
            for dph, dlc in ((-step_ph, 0.0), (step_ph, 0.0),
                             (0.0, -step_lc), (0.0, step_lc)):
                out = try_point(ph + dph, lc + dlc, n_r)
                if out is not None and out[1].hourly_total < cur[1].hourly_total * (1 - 1e-12):
                    cur = out
                    ph = cur[0].design_point.ph
                    lc = math.log10(cur[0].design_point.c_bio)
                    moved = True
                    break
            if not moved:
                if step_ph < 1e-4 and step_lc < 1e-4:
                    break
                step_ph /= 2.0
                step_lc /= 2.0
        cand = (cur[1].hourly_total, n_r, cur[0].design_point.ph, cur[0], cur[1])
        if best is None or (cand[0], cand[1], cand[2]) < (best[0] * (1 + 1e-12), best[1], best[2]):
            # strict-cost comparison with deterministic tie handling
            if best is None or cand[0] < best[0] * (1 - 1e-12):
                best = cand
            elif abs(cand[0] - best[0]) <= best[0] * 1e-12 and (cand[1], cand[2]) < (best[1], best[2]):
                best = cand

    if best is None:
        dominant = max(sorted(reasons), key=lambda r: reasons[r]) if reasons else "no_feasible_point"
        return InfeasibleDesign(dominant, detail=";".join(
            f"{k}={v}" for k, v in sorted(reasons.items())))
    return best[3], best[4]
