//! Cost model: escalation, loss costing over the horizon, equipment
//! capital, the voltage-profile index and the weighted objective.
//!
//! Conductor capital and loss cost form the minimized objective;
//! capacitor and DG capital enter only their budget constraints.

use crate::netmodel::{CapacitorType, DGType, Economics, NetworkCase, Topology};
use crate::planner::Design;
use serde::{Deserialize, Serialize};

/// All cost components of one evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Conductor capital, currency.
    pub cond_cost: f64,
    /// Loss cost summed over the horizon, currency.
    pub loss_cost: f64,
    /// Capacitor capital plus installation, currency.
    pub cap_cost: f64,
    /// DG capital plus installation, currency.
    pub dg_cost: f64,
    /// Peak active loss per horizon year (t = 1..T), kW.
    pub per_year_ploss: Vec<f64>,
    /// Loss cost per horizon year, currency.
    pub per_year_loss_cost: Vec<f64>,
}

/// Loss factor from load factor: LsF = 0.2·LF + 0.8·LF².
pub fn loss_factor(lf: f64) -> f64 {
    assert!(lf > 0.0 && lf <= 1.0, "load factor {lf} outside (0, 1]");
    0.2 * lf + 0.8 * lf * lf
}

/// Escalate a year-0 rate by `t` years of inflation: base·(1 + rate)^t.
pub fn escalate(base: f64, rate: f64, t: u32) -> f64 {
    base * (1.0 + rate).powi(t as i32)
}

/// Peak demand after `t` years of load growth: d0·(1 + growth)^t.
pub fn demand_at_year(d0: f64, growth: f64, t: u32) -> f64 {
    d0 * (1.0 + growth).powi(t as i32)
}

/// Total conductor capital: Σ price_per_km(assigned type) × length over
/// the sizable sections. Zero-length sections carry no conductor.
pub fn conductor_capital(design: &Design, case: &NetworkCase, topo: &Topology) -> f64 {
    assert_eq!(
        design.conductor_choice.len(),
        topo.sizable_sections.len(),
        "design does not cover every sizable section"
    );
    topo.sizable_sections
        .iter()
        .zip(&design.conductor_choice)
        .map(|(&s, &id)| {
            let c = &case.conductor_catalog[id as usize - 1];
            c.price_per_km * case.sections[s].length_km
        })
        .sum()
}

/// Loss cost per year and its horizon total:
/// cost_t = Ploss_t · [CP_t + CE_t · LsF · 8760] for t = 1..T.
pub fn loss_cost_horizon(per_year_ploss: &[f64], econ: &Economics) -> (f64, Vec<f64>) {
    assert_eq!(
        per_year_ploss.len(),
        econ.horizon_years as usize,
        "loss vector must cover years 1..T"
    );
    let lsf = loss_factor(econ.load_factor);
    let per_year: Vec<f64> = per_year_ploss
        .iter()
        .zip(1..)
        .map(|(&ploss, t)| {
            ploss * (escalate(econ.cp0, econ.inflation, t) + escalate(econ.ce0, econ.inflation, t) * lsf * 8760.0)
        })
        .collect();
    (per_year.iter().sum(), per_year)
}

/// Capacitor capital plus installation over all buses with a nonzero
/// capacitor selected.
pub fn capacitor_cost(design: &Design, catalog: &[CapacitorType]) -> f64 {
    design
        .capacitor_choice
        .iter()
        .map(|&id| &catalog[id as usize - 1])
        .filter(|c| c.q_kvar > 0.0)
        // fold from +0.0: an empty .sum() would yield -0.0, which leaks
        // into reports as "-0.00"
        .fold(0.0, |acc, c| acc + c.capital_cost + c.install_cost)
}

/// DG capital plus installation: unit cost times number of placements.
pub fn dg_cost(design: &Design, dg: &DGType) -> f64 {
    design.dg_flag.iter().filter(|&&m| m != 0).count() as f64 * dg.total_cost
}

/// Voltage-profile index: Σ |1 − u_j| over all buses, slack included.
pub fn voltage_index(u: &[f64]) -> f64 {
    assert!(!u.is_empty(), "voltage list is empty");
    u.iter().map(|&uj| (1.0 - uj).abs()).sum()
}

/// Weighted objective ω·cond_cost + (1−ω)·loss_cost. At ω = 0.5 its
/// argmin coincides with the plain sum of the two components.
pub fn objective(cond_cost: f64, loss_cost: f64, omega: f64) -> f64 {
    assert!((0.0..=1.0).contains(&omega), "omega {omega} outside [0, 1]");
    omega * cond_cost + (1.0 - omega) * loss_cost
}
