//! Planning layer: design encoding/decoding, full-horizon evaluation,
//! swarm optimization of the two scenarios, the ω-sweep and a brute-force
//! reference search for small cases.

use crate::bspso::{self, Objective, SwarmConfig, VariableSpec};
use crate::econ::{self, CostBreakdown};
use crate::netmodel::{radial_topology, to_per_unit, CaseError, NetworkCase, PerUnitCase, Topology};
use crate::powerflow::{self, LimitViolation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Largest design count the brute-force search will enumerate.
pub const MAX_ORACLE_DESIGNS: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("search space of {designs} designs exceeds the exhaustive-search limit of {MAX_ORACLE_DESIGNS}")]
    SearchSpaceTooLarge { designs: u128 },
    #[error("{what} catalog has a single entry; optimization needs at least two choices")]
    CatalogTooSmall { what: &'static str },
    #[error("design does not fit the case: {0}")]
    DesignMismatch(String),
    #[error(transparent)]
    Case(#[from] CaseError),
}

/// Which decisions the optimizer is allowed to make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    /// Conductor sizes only; no capacitors, no DG.
    ConductorsOnly,
    /// Conductor sizes plus capacitor and DG placement.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub mode: ScenarioMode,
    /// Weight of conductor capital in the minimized objective.
    pub omega: f64,
}

impl Scenario {
    pub fn conductors_only() -> Self {
        Scenario { mode: ScenarioMode::ConductorsOnly, omega: 0.5 }
    }

    pub fn full() -> Self {
        Scenario { mode: ScenarioMode::Full, omega: 0.5 }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        assert!((0.0..=1.0).contains(&omega), "omega {omega} outside [0, 1]");
        self.omega = omega;
        self
    }
}

/// One complete plan: a conductor per sizable section (ascending section
/// id), a capacitor catalog id and a DG flag per candidate bus (ascending
/// bus id; every non-slack bus is a candidate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub conductor_choice: Vec<u32>,
    pub capacitor_choice: Vec<u32>,
    pub dg_flag: Vec<u8>,
}

/// One constraint violation: the horizon year it occurred in (0 for
/// installation-time budget checks), what was violated and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub year: u32,
    pub kind: String,
    pub location: String,
}

/// Condensed per-year power-flow outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct YearSummary {
    pub year: u32,
    pub converged: bool,
    pub iterations: u32,
    pub max_mismatch: f64,
    pub ploss_kw: f64,
    pub min_u: f64,
    pub max_i_loading: f64,
}

/// Full verdict on one design.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub breakdown: CostBreakdown,
    /// Voltage-profile index at the final horizon year.
    pub u_ind: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    /// Total constraint-violation depth (0 exactly when feasible):
    /// voltage deficits in p.u., current overloads and budget overruns as
    /// fractions of their limits, 1 per diverged year. Gives repair
    /// heuristics a continuous slope toward feasibility.
    pub severity: f64,
    /// ω-weighted conductor-plus-loss objective.
    pub total_objective: f64,
    pub per_year_solutions: Vec<YearSummary>,
}

/// Outcome of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub best_design: Design,
    /// Fresh re-evaluation of `best_design`, not cached swarm values.
    pub report: EvaluationReport,
    pub swarm_history: Vec<f64>,
    pub seed: u64,
    pub particles: usize,
    pub iterations: u32,
}

/// Candidate equipment buses: every non-slack bus, ascending by id.
pub fn candidate_buses(case: &NetworkCase, topo: &Topology) -> Vec<usize> {
    let mut v: Vec<usize> = (0..case.buses.len()).filter(|&b| b != topo.root).collect();
    v.sort_by_key(|&b| case.buses[b].id);
    v
}

/// Swarm variable layout for a scenario: one selective variable per
/// sizable section, then (full mode) one selective capacitor choice and
/// one DG bit per candidate bus.
pub fn encode_specs(
    case: &NetworkCase,
    topo: &Topology,
    scenario: &Scenario,
) -> Result<Vec<VariableSpec>, PlanError> {
    let n_cond = case.conductor_catalog.len() as u32;
    if n_cond < 2 {
        return Err(PlanError::CatalogTooSmall { what: "conductor" });
    }
    let mut specs = vec![VariableSpec::selective(n_cond); topo.sizable_sections.len()];
    if scenario.mode == ScenarioMode::Full {
        let n_cap = case.capacitor_catalog.len() as u32;
        if n_cap < 2 {
            return Err(PlanError::CatalogTooSmall { what: "capacitor" });
        }
        let n_cand = candidate_buses(case, topo).len();
        specs.extend(std::iter::repeat_n(VariableSpec::selective(n_cap), n_cand));
        specs.extend(std::iter::repeat_n(VariableSpec::Binary, n_cand));
    }
    Ok(specs)
}

/// Map a position vector back to a design. Conductors-only positions get
/// "no capacitor" and DG off everywhere.
pub fn decode(position: &[u32], case: &NetworkCase, topo: &Topology, scenario: &Scenario) -> Design {
    let ns = topo.sizable_sections.len();
    let n_cand = candidate_buses(case, topo).len();
    let none_cap = case.capacitor_catalog.len() as u32;
    match scenario.mode {
        ScenarioMode::ConductorsOnly => {
            assert_eq!(position.len(), ns, "position does not match the conductors-only layout");
            Design {
                conductor_choice: position.to_vec(),
                capacitor_choice: vec![none_cap; n_cand],
                dg_flag: vec![0; n_cand],
            }
        }
        ScenarioMode::Full => {
            assert_eq!(position.len(), ns + 2 * n_cand, "position does not match the full layout");
            Design {
                conductor_choice: position[..ns].to_vec(),
                capacitor_choice: position[ns..ns + n_cand].to_vec(),
                dg_flag: position[ns + n_cand..].iter().map(|&b| b as u8).collect(),
            }
        }
    }
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// Evaluate a design over the whole horizon: solve every year, screen
/// limits and budgets, and assemble costs. Infeasibility is a verdict in
/// the report, never an error.
pub fn evaluate(
    design: &Design,
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    scenario: &Scenario,
) -> EvaluationReport {
    let econ_p = &case.economics;
    let mut violations = Vec::new();
    let mut severity = 0.0;

    let cap_cost = econ::capacitor_cost(design, &case.capacitor_catalog);
    if cap_cost > econ_p.cap_budget {
        severity += (cap_cost - econ_p.cap_budget) / econ_p.cap_budget;
        violations.push(Violation {
            year: 0,
            kind: "capacitor budget".into(),
            location: format!("{cap_cost:.2} over budget {:.2}", econ_p.cap_budget),
        });
    }
    let dg_cost = econ::dg_cost(design, &case.dg_type);
    if dg_cost > econ_p.dg_budget {
        severity += (dg_cost - econ_p.dg_budget) / econ_p.dg_budget;
        violations.push(Violation {
            year: 0,
            kind: "dg budget".into(),
            location: format!("{dg_cost:.2} over budget {:.2}", econ_p.dg_budget),
        });
    }

    let t_max = econ_p.horizon_years;
    let mut per_year_ploss = Vec::with_capacity(t_max as usize);
    let mut per_year_solutions = Vec::with_capacity(t_max as usize);
    let mut u_ind = 0.0;
    for t in 1..=t_max {
        let sol = powerflow::solve(case, pu, topo, design, t);
        if sol.converged {
            for v in powerflow::check_limits(&sol, case, topo, design, econ_p) {
                let kind = match v {
                    LimitViolation::Voltage { u_pu, .. } => {
                        severity += (econ_p.v_min - u_pu).max(u_pu - econ_p.v_max);
                        "voltage"
                    }
                    LimitViolation::Current { i_amp, i_max_amp, .. } => {
                        severity += i_amp / i_max_amp - 1.0;
                        "current"
                    }
                };
                violations.push(Violation { year: t, kind: kind.into(), location: v.to_string() });
            }
        } else {
            severity += 1.0;
            violations.push(Violation { year: t, kind: "divergence".into(), location: "power flow".into() });
        }
        // Diverged years can leave non-finite numbers behind; they are
        // already flagged above, so zero them to keep reports printable.
        per_year_ploss.push(finite_or_zero(sol.ploss_kw));
        if t == t_max {
            u_ind = finite_or_zero(econ::voltage_index(&sol.u));
        }
        let min_u = sol.u.iter().copied().fold(f64::INFINITY, f64::min);
        let max_i_loading = topo
            .sizable_sections
            .iter()
            .zip(&sol.branch_i)
            .zip(&design.conductor_choice)
            .map(|((_, bi), &id)| bi.i_amp / case.conductor_catalog[id as usize - 1].i_max)
            .fold(0.0, f64::max);
        per_year_solutions.push(YearSummary {
            year: t,
            converged: sol.converged,
            iterations: sol.iterations,
            max_mismatch: sol.max_mismatch,
            ploss_kw: finite_or_zero(sol.ploss_kw),
            min_u: finite_or_zero(min_u),
            max_i_loading: finite_or_zero(max_i_loading),
        });
    }

    let cond_cost = econ::conductor_capital(design, case, topo);
    let (loss_cost, per_year_loss_cost) = econ::loss_cost_horizon(&per_year_ploss, econ_p);
    let total_objective = econ::objective(cond_cost, loss_cost, scenario.omega);
    let feasible = violations.is_empty();
    debug_assert_eq!(feasible, severity == 0.0);
    EvaluationReport {
        breakdown: CostBreakdown {
            cond_cost,
            loss_cost,
            cap_cost,
            dg_cost,
            per_year_ploss,
            per_year_loss_cost,
        },
        u_ind,
        feasible,
        violations,
        severity,
        total_objective,
        per_year_solutions,
    }
}

/// Ranking for the descent phase: first shrink the constraint-violation
/// depth to zero (repair), then push the objective down. The continuous
/// severity matters: repairing a budget overrun means removing equipment,
/// which often *raises* the objective, so a violation-count rank would
/// deadlock where severity keeps a downhill slope.
fn descent_rank(report: &EvaluationReport) -> (f64, f64) {
    (report.severity, report.total_objective)
}

fn rank_improves(candidate: &(f64, f64), incumbent: &(f64, f64)) -> bool {
    let by_severity = candidate.0.partial_cmp(&incumbent.0).expect("severities are never NaN");
    by_severity
        .then(candidate.1.partial_cmp(&incumbent.1).expect("objectives are never NaN"))
        .is_lt()
}

/// Deterministic steepest single-variable descent from a starting
/// position. Each pass tries every alternative value of every variable
/// and applies the best strict improvement; stops at a local optimum.
///
/// The swarm's position sampler stays stochastic around its best find
/// even at full velocity saturation, so it locates the right basin but
/// rarely lands on the exact floor; this pass walks that last stretch.
pub fn refine(
    start: &[u32],
    specs: &[VariableSpec],
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    scenario: &Scenario,
) -> Vec<u32> {
    assert_eq!(start.len(), specs.len(), "position does not match the variable layout");
    for (value, spec) in start.iter().zip(specs) {
        let valid = match spec {
            VariableSpec::Binary => *value <= 1,
            VariableSpec::Selective { .. } => (1..=spec.n_choices()).contains(value),
        };
        assert!(valid, "position value {value} outside its variable domain");
    }
    let rank_of = |position: &[u32]| {
        let design = decode(position, case, topo, scenario);
        descent_rank(&evaluate(&design, case, pu, topo, scenario))
    };
    let mut position = start.to_vec();
    let mut rank = rank_of(&position);
    loop {
        let mut best_move: Option<(usize, u32, (f64, f64))> = None;
        for (k, spec) in specs.iter().enumerate() {
            let original = position[k];
            let values: Vec<u32> = match spec {
                VariableSpec::Binary => (0..=1).collect(),
                VariableSpec::Selective { .. } => (1..=spec.n_choices()).collect(),
            };
            for value in values {
                if value == original {
                    continue;
                }
                position[k] = value;
                let candidate = rank_of(&position);
                let incumbent = best_move.as_ref().map_or(&rank, |(_, _, r)| r);
                if rank_improves(&candidate, incumbent) {
                    best_move = Some((k, value, candidate));
                }
            }
            position[k] = original;
        }
        match best_move {
            Some((k, value, new_rank)) => {
                position[k] = value;
                rank = new_rank;
            }
            None => return position,
        }
    }
}

/// Optimize a scenario: a global swarm phase followed by a deterministic
/// local-descent phase on the swarm's best position. The final design is
/// re-evaluated from scratch for the report; a run that never reaches
/// feasibility returns the best attempt with its violations listed.
pub fn optimize(
    case: &NetworkCase,
    scenario: &Scenario,
    cfg: &SwarmConfig,
) -> Result<PlanResult, PlanError> {
    let topo = radial_topology(case)?;
    let pu = to_per_unit(case);
    let specs = encode_specs(case, &topo, scenario)?;
    let record = bspso::run(
        |position| {
            let design = decode(position, case, &topo, scenario);
            let report = evaluate(&design, case, &pu, &topo, scenario);
            if report.feasible {
                Objective::Feasible(report.total_objective)
            } else {
                Objective::Infeasible
            }
        },
        &specs,
        cfg,
    );
    let position = refine(&record.gbest_position, &specs, case, &pu, &topo, scenario);
    let best_design = decode(&position, case, &topo, scenario);
    let report = evaluate(&best_design, case, &pu, &topo, scenario);
    Ok(PlanResult {
        best_design,
        report,
        swarm_history: record.objective_history,
        seed: cfg.seed,
        particles: cfg.n_particles,
        iterations: cfg.it_max,
    })
}

/// One row of the ω-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub cond_cost: f64,
    pub loss_cost: f64,
    /// Σ of the per-year peak losses over the horizon, kW.
    pub total_ploss_kw: f64,
    pub u_ind: f64,
    pub feasible: bool,
    /// Conductor id per sizable section.
    pub profile: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Plot-ready CSV; the profile column joins conductor ids with `|`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,cond_cost,loss_cost,total_ploss_kw,u_ind,profile\n");
        for r in &self.rows {
            let profile =
                r.profile.iter().map(|id| id.to_string()).collect::<Vec<_>>().join("|");
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.omega, r.cond_cost, r.loss_cost, r.total_ploss_kw, r.u_ind, profile
            )
            .expect("string write cannot fail");
        }
        out
    }
}

/// Conductor-sizing optimization per ω value (the trade-off curve data).
pub fn omega_sweep(case: &NetworkCase, cfg: &SwarmConfig, grid: &[f64]) -> Result<SweepResult, PlanError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &omega in grid {
        let scenario = Scenario::conductors_only().with_omega(omega);
        let result = optimize(case, &scenario, cfg)?;
        let b = &result.report.breakdown;
        rows.push(SweepRow {
            omega,
            cond_cost: b.cond_cost,
            loss_cost: b.loss_cost,
            total_ploss_kw: b.per_year_ploss.iter().sum(),
            u_ind: result.report.u_ind,
            feasible: result.report.feasible,
            profile: result.best_design.conductor_choice.clone(),
        });
    }
    Ok(SweepResult { rows })
}

/// Enumerate the entire design space (guarded by [`MAX_ORACLE_DESIGNS`])
/// through the exact evaluation path the optimizer uses and return the
/// feasible minimum; ties go to the lexicographically smallest position.
pub fn exhaustive_oracle(case: &NetworkCase, scenario: &Scenario) -> Result<PlanResult, PlanError> {
    let topo = radial_topology(case)?;
    let pu = to_per_unit(case);
    let specs = encode_specs(case, &topo, scenario)?;
    let radices: Vec<u64> = specs.iter().map(|s| s.n_choices() as u64).collect();
    let mut total: u128 = 1;
    for &r in &radices {
        total = total.saturating_mul(r as u128);
        if total > MAX_ORACLE_DESIGNS {
            return Err(PlanError::SearchSpaceTooLarge { designs: total });
        }
    }

    // index → position, first variable most significant, so ascending
    // index is ascending lexicographic order.
    let position_of = |mut idx: u64| -> Vec<u32> {
        let mut pos = vec![0u32; specs.len()];
        for k in (0..specs.len()).rev() {
            let digit = (idx % radices[k]) as u32;
            idx /= radices[k];
            pos[k] = match &specs[k] {
                VariableSpec::Binary => digit,
                VariableSpec::Selective { .. } => digit + 1,
            };
        }
        pos
    };

    // Order: feasible before infeasible, then objective, then index (so
    // ties resolve to the lexicographically smallest position).
    let best = (0..total as u64)
        .into_par_iter()
        .map(|idx| {
            let design = decode(&position_of(idx), case, &topo, scenario);
            let report = evaluate(&design, case, &pu, &topo, scenario);
            let key = if report.feasible { (false, report.total_objective) } else { (true, f64::INFINITY) };
            (key, idx)
        })
        .min_by(|a, b| {
            a.0 .0
                .cmp(&b.0 .0)
                .then(a.0 .1.partial_cmp(&b.0 .1).expect("objective keys are never NaN"))
                .then(a.1.cmp(&b.1))
        });

    let (_, best_idx) = best.expect("at least one design exists");
    let best_design = decode(&position_of(best_idx), case, &topo, scenario);
    let report = evaluate(&best_design, case, &pu, &topo, scenario);
    Ok(PlanResult {
        best_design,
        report,
        swarm_history: Vec::new(),
        seed: 0,
        particles: 0,
        iterations: 0,
    })
}

/// Design block of the result file, keyed by section/bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignIds {
    pub conductors: Vec<SectionConductor>,
    pub capacitors: Vec<BusCapacitor>,
    pub dg: Vec<BusDg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionConductor {
    pub section: u32,
    pub conductor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusCapacitor {
    pub bus: u32,
    pub capacitor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDg {
    pub bus: u32,
    pub dg: u8,
}

impl DesignIds {
    pub fn from_design(design: &Design, case: &NetworkCase, topo: &Topology) -> Self {
        let conductors = topo
            .sizable_sections
            .iter()
            .zip(&design.conductor_choice)
            .map(|(&s, &conductor)| SectionConductor { section: case.sections[s].id, conductor })
            .collect();
        let cand = candidate_buses(case, topo);
        let capacitors = cand
            .iter()
            .zip(&design.capacitor_choice)
            .map(|(&b, &capacitor)| BusCapacitor { bus: case.buses[b].id, capacitor })
            .collect();
        let dg = cand
            .iter()
            .zip(&design.dg_flag)
            .map(|(&b, &dg)| BusDg { bus: case.buses[b].id, dg })
            .collect();
        DesignIds { conductors, capacitors, dg }
    }

    /// Rebuild the positional design, checking that every id matches the
    /// case and every choice references its catalog.
    pub fn to_design(&self, case: &NetworkCase, topo: &Topology) -> Result<Design, PlanError> {
        let miss = |msg: String| PlanError::DesignMismatch(msg);
        let section_ids = topo.sizable_section_ids(case);
        if self.conductors.len() != section_ids.len() {
            return Err(miss(format!(
                "expected {} conductor entries, got {}",
                section_ids.len(),
                self.conductors.len()
            )));
        }
        let n_cond = case.conductor_catalog.len() as u32;
        let mut conductor_choice = Vec::with_capacity(section_ids.len());
        for (entry, want) in self.conductors.iter().zip(&section_ids) {
            if entry.section != *want {
                return Err(miss(format!("expected section {want}, got {}", entry.section)));
            }
            if entry.conductor < 1 || entry.conductor > n_cond {
                return Err(miss(format!(
                    "conductor id {} outside catalog 1..{n_cond}",
                    entry.conductor
                )));
            }
            conductor_choice.push(entry.conductor);
        }

        let cand = candidate_buses(case, topo);
        if self.capacitors.len() != cand.len() || self.dg.len() != cand.len() {
            return Err(miss(format!("expected {} capacitor and dg entries", cand.len())));
        }
        let n_cap = case.capacitor_catalog.len() as u32;
        let mut capacitor_choice = Vec::with_capacity(cand.len());
        let mut dg_flag = Vec::with_capacity(cand.len());
        for ((ce, de), &b) in self.capacitors.iter().zip(&self.dg).zip(&cand) {
            let want = case.buses[b].id;
            if ce.bus != want || de.bus != want {
                return Err(miss(format!("expected bus {want}, got {} / {}", ce.bus, de.bus)));
            }
            if ce.capacitor < 1 || ce.capacitor > n_cap {
                return Err(miss(format!("capacitor id {} outside catalog 1..{n_cap}", ce.capacitor)));
            }
            if de.dg > 1 {
                return Err(miss(format!("dg flag {} is not 0/1", de.dg)));
            }
            capacitor_choice.push(ce.capacitor);
            dg_flag.push(de.dg);
        }
        Ok(Design { conductor_choice, capacitor_choice, dg_flag })
    }
}

/// On-disk result document (`result.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub seed: u64,
    pub particles: usize,
    pub iterations: u32,
    pub scenario: ScenarioMode,
    pub omega: f64,
    pub feasible: bool,
    pub best_design: DesignIds,
    pub costs: ResultCosts,
    pub u_ind: f64,
    pub violations: Vec<Violation>,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCosts {
    pub cond_cost: f64,
    pub loss_cost: f64,
    pub cap_cost: f64,
    pub dg_cost: f64,
    pub total_objective: f64,
    pub total_ploss_kw: f64,
}

impl ResultFile {
    pub fn new(result: &PlanResult, case: &NetworkCase, topo: &Topology, scenario: &Scenario) -> Self {
        let b = &result.report.breakdown;
        ResultFile {
            seed: result.seed,
            particles: result.particles,
            iterations: result.iterations,
            scenario: scenario.mode,
            omega: scenario.omega,
            feasible: result.report.feasible,
            best_design: DesignIds::from_design(&result.best_design, case, topo),
            costs: ResultCosts {
                cond_cost: b.cond_cost,
                loss_cost: b.loss_cost,
                cap_cost: b.cap_cost,
                dg_cost: b.dg_cost,
                total_objective: result.report.total_objective,
                total_ploss_kw: b.per_year_ploss.iter().sum(),
            },
            u_ind: result.report.u_ind,
            violations: result.report.violations.clone(),
            history: result.swarm_history.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("result serialization cannot fail");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{builtin_case_26bus, parse_case, two_bus_case};
    use approx::assert_relative_eq;

    fn toy5() -> NetworkCase {
        parse_case(include_str!("../tests/fixtures/toy5.json")).unwrap()
    }

    fn prepared(case: &NetworkCase) -> (PerUnitCase, Topology) {
        (to_per_unit(case), radial_topology(case).unwrap())
    }

    #[test]
    fn spec_layout_for_26bus() {
        let case = builtin_case_26bus();
        let topo = radial_topology(&case).unwrap();

        let a = encode_specs(&case, &topo, &Scenario::conductors_only()).unwrap();
        assert_eq!(a.len(), 25);
        assert!(a.iter().all(|s| *s == VariableSpec::selective(5)));

        let b = encode_specs(&case, &topo, &Scenario::full()).unwrap();
        assert_eq!(b.len(), 25 + 26 + 26);
        assert!(b[..25].iter().all(|s| *s == VariableSpec::selective(5)));
        assert!(b[25..51].iter().all(|s| *s == VariableSpec::selective(4)));
        assert!(b[51..].iter().all(|s| *s == VariableSpec::Binary));
    }

    #[test]
    fn single_entry_catalog_is_rejected() {
        let case = two_bus_case(); // one conductor type only
        let topo = radial_topology(&case).unwrap();
        let err = encode_specs(&case, &topo, &Scenario::conductors_only()).unwrap_err();
        assert!(err.to_string().contains("conductor catalog"), "{err}");
    }

    #[test]
    fn decode_layouts() {
        let case = toy5();
        let topo = radial_topology(&case).unwrap();

        let d = decode(&[1, 2, 1, 2], &case, &topo, &Scenario::conductors_only());
        assert_eq!(d.conductor_choice, vec![1, 2, 1, 2]);
        assert_eq!(d.capacitor_choice, vec![2; 4]); // "none" entry
        assert_eq!(d.dg_flag, vec![0; 4]);

        let full = decode(
            &[1, 1, 1, 1, /* caps */ 1, 2, 2, 2, /* dg */ 0, 1, 0, 1],
            &case,
            &topo,
            &Scenario::full(),
        );
        assert_eq!(full.capacitor_choice, vec![1, 2, 2, 2]);
        assert_eq!(full.dg_flag, vec![0, 1, 0, 1]);
    }

    #[test]
    fn evaluate_two_bus_baseline() {
        let case = two_bus_case();
        let (pu, topo) = prepared(&case);
        let design = Design { conductor_choice: vec![1], capacitor_choice: vec![2], dg_flag: vec![0] };
        let report = evaluate(&design, &case, &pu, &topo, &Scenario::conductors_only());
        assert!(report.feasible, "violations: {:?}", report.violations);
        assert_relative_eq!(report.breakdown.cond_cost, 151.0, max_relative = 1e-12);
        assert!(report.breakdown.loss_cost > 0.0);
        assert_eq!(report.breakdown.cap_cost, 0.0);
        assert_eq!(report.breakdown.dg_cost, 0.0);
        assert_eq!(report.breakdown.per_year_ploss.len(), 5);
        assert!(report.u_ind > 0.0);
        assert_eq!(report.per_year_solutions.len(), 5);
        assert!(report.per_year_solutions.iter().all(|y| y.converged));
        // losses grow with the load
        assert!(report
            .breakdown
            .per_year_ploss
            .windows(2)
            .all(|w| w[1] > w[0]));

        // purity: same inputs, same report
        let again = evaluate(&design, &case, &pu, &topo, &Scenario::conductors_only());
        assert_eq!(report, again);
    }

    #[test]
    fn budget_overruns_are_violations() {
        let mut case = two_bus_case();
        case.economics.cap_budget = 1000.0; // type 1 costs 1075
        case.economics.dg_budget = 500.0; // one unit costs 1000
        let (pu, topo) = prepared(&case);
        let design = Design { conductor_choice: vec![1], capacitor_choice: vec![1], dg_flag: vec![1] };
        let report = evaluate(&design, &case, &pu, &topo, &Scenario::full());
        assert!(!report.feasible);
        let kinds: Vec<&str> = report.violations.iter().map(|v| v.kind.as_str()).collect();
        assert!(kinds.contains(&"capacitor budget"), "{kinds:?}");
        assert!(kinds.contains(&"dg budget"), "{kinds:?}");
    }

    #[test]
    fn undervoltage_year_is_reported() {
        let mut case = two_bus_case();
        case.sections[0].length_km = 10.0;
        case.buses[1].s_load_kva = 8000.0;
        let (pu, topo) = prepared(&case);
        let design = Design { conductor_choice: vec![1], capacitor_choice: vec![2], dg_flag: vec![0] };
        let report = evaluate(&design, &case, &pu, &topo, &Scenario::conductors_only());
        assert!(!report.feasible);
        let t = case.economics.horizon_years;
        assert!(
            report.violations.iter().any(|v| v.year == t && v.kind == "voltage"),
            "expected a year-{t} voltage violation: {:?}",
            report.violations
        );
    }

    #[test]
    fn oracle_picks_the_cheaper_of_two_feasible_designs() {
        let mut case = two_bus_case();
        case.conductor_catalog.push(crate::netmodel::ConductorType {
            id: 2,
            r_per_km: 0.455,
            x_per_km: 0.26,
            price_per_km: 48.0,
            i_max: 212.0,
        });
        let (pu, topo) = prepared(&case);
        let scenario = Scenario::conductors_only();
        let d1 = Design { conductor_choice: vec![1], capacitor_choice: vec![2], dg_flag: vec![0] };
        let d2 = Design { conductor_choice: vec![2], capacitor_choice: vec![2], dg_flag: vec![0] };
        let e1 = evaluate(&d1, &case, &pu, &topo, &scenario);
        let e2 = evaluate(&d2, &case, &pu, &topo, &scenario);
        assert!(e1.feasible && e2.feasible);

        let best = exhaustive_oracle(&case, &scenario).unwrap();
        assert!(best.report.feasible);
        assert_eq!(best.report.total_objective, e1.total_objective.min(e2.total_objective));
    }

    #[test]
    fn oracle_guard_rejects_large_spaces() {
        let case = builtin_case_26bus();
        let err = exhaustive_oracle(&case, &Scenario::full()).unwrap_err();
        assert!(matches!(err, PlanError::SearchSpaceTooLarge { .. }), "{err}");
    }

    #[test]
    fn oracle_flags_an_infeasible_space() {
        let mut case = toy5();
        case.economics.v_min = 0.9999; // unreachable under load
        let best = exhaustive_oracle(&case, &Scenario::conductors_only()).unwrap();
        assert!(!best.report.feasible);
        assert!(!best.report.violations.is_empty());
    }

    #[test]
    fn swarm_run_is_reproducible_and_feasible_on_toy_case() {
        let case = toy5();
        let cfg = SwarmConfig { n_particles: 10, it_max: 20, seed: 11, ..SwarmConfig::default() };
        let a = optimize(&case, &Scenario::conductors_only(), &cfg).unwrap();
        let b = optimize(&case, &Scenario::conductors_only(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.report.feasible);
        assert_eq!(a.swarm_history.len(), 20);
        assert!(a.swarm_history.windows(2).all(|w| w[1] <= w[0]));
        // root section must carry the year-5 load: only type 1 can
        assert_eq!(a.best_design.conductor_choice[0], 1);
    }

    #[test]
    fn swarm_never_beats_the_oracle() {
        let case = toy5();
        let scenario = Scenario::full();
        let oracle = exhaustive_oracle(&case, &scenario).unwrap();
        let cfg = SwarmConfig { n_particles: 12, it_max: 30, seed: 3, ..SwarmConfig::default() };
        let swarm = optimize(&case, &scenario, &cfg).unwrap();
        assert!(oracle.report.feasible);
        if swarm.report.feasible {
            assert!(swarm.report.total_objective >= oracle.report.total_objective - 1e-9);
        }
    }

    #[test]
    fn descent_stops_at_a_single_change_optimum() {
        let case = toy5();
        let (pu, topo) = prepared(&case);
        let scenario = Scenario::full();
        let specs = encode_specs(&case, &topo, &scenario).unwrap();
        // thin conductors + every bus loaded with a capacitor and a DG:
        // overcurrent at the root plus both budgets blown
        let start = [2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1];
        let start_report =
            evaluate(&decode(&start, &case, &topo, &scenario), &case, &pu, &topo, &scenario);
        assert!(start_report.severity > 0.0);
        assert!(start_report.violations.iter().any(|v| v.kind.ends_with("budget")));
        let refined = refine(&start, &specs, &case, &pu, &topo, &scenario);

        let rank_of = |position: &[u32]| {
            let design = decode(position, &case, &topo, &scenario);
            descent_rank(&evaluate(&design, &case, &pu, &topo, &scenario))
        };
        let rank = rank_of(&refined);
        assert_eq!(rank.0, 0.0, "descent should have repaired the start: {rank:?}");
        let mut probe = refined.clone();
        for k in 0..specs.len() {
            let original = probe[k];
            let lo = if specs[k] == VariableSpec::Binary { 0 } else { 1 };
            for value in lo..=specs[k].n_choices() {
                if value == original {
                    continue;
                }
                probe[k] = value;
                assert!(
                    !rank_improves(&rank_of(&probe), &rank),
                    "variable {k} -> {value} still improves the refined design"
                );
            }
            probe[k] = original;
        }
    }

    #[test]
    fn descent_repairs_an_infeasible_start_and_never_worsens() {
        let case = toy5();
        let (pu, topo) = prepared(&case);
        let scenario = Scenario::conductors_only();
        let specs = encode_specs(&case, &topo, &scenario).unwrap();
        // all-thin start: root section overloads, so this is infeasible
        let start = vec![2u32; 4];
        let start_report =
            evaluate(&decode(&start, &case, &topo, &scenario), &case, &pu, &topo, &scenario);
        assert!(!start_report.feasible);

        let refined = refine(&start, &specs, &case, &pu, &topo, &scenario);
        let report =
            evaluate(&decode(&refined, &case, &topo, &scenario), &case, &pu, &topo, &scenario);
        assert!(report.feasible, "descent failed to repair: {:?}", report.violations);
        assert_eq!(refined[0], 1, "only the heavy conductor can carry the root section");

        // and from an already-feasible start the objective can only drop
        let fat = vec![1u32; 4];
        let fat_obj =
            evaluate(&decode(&fat, &case, &topo, &scenario), &case, &pu, &topo, &scenario)
                .total_objective;
        let polished = refine(&fat, &specs, &case, &pu, &topo, &scenario);
        let polished_obj =
            evaluate(&decode(&polished, &case, &topo, &scenario), &case, &pu, &topo, &scenario)
                .total_objective;
        assert!(polished_obj <= fat_obj);
    }

    #[test]
    fn descent_matches_the_oracle_on_the_toy_case() {
        let case = toy5();
        let (pu, topo) = prepared(&case);
        let scenario = Scenario::conductors_only();
        let specs = encode_specs(&case, &topo, &scenario).unwrap();
        let oracle = exhaustive_oracle(&case, &scenario).unwrap();
        let refined = refine(&[1, 1, 1, 1], &specs, &case, &pu, &topo, &scenario);
        let report =
            evaluate(&decode(&refined, &case, &topo, &scenario), &case, &pu, &topo, &scenario);
        assert!(report.total_objective <= oracle.report.total_objective + 1e-9);
    }

    #[test]
    fn equipment_only_helps_the_minimized_objective() {
        // "no capacitor / no DG" is inside the full search space, so the
        // full-scenario optimum can only match or beat conductors-only.
        let case = toy5();
        let a = exhaustive_oracle(&case, &Scenario::conductors_only()).unwrap();
        let b = exhaustive_oracle(&case, &Scenario::full()).unwrap();
        assert!(b.report.total_objective <= a.report.total_objective + 1e-9);
        // and every feasible report respects the budgets
        assert!(b.report.breakdown.cap_cost <= case.economics.cap_budget);
        assert!(b.report.breakdown.dg_cost <= case.economics.dg_budget);
    }

    #[test]
    fn design_ids_roundtrip() {
        let case = toy5();
        let topo = radial_topology(&case).unwrap();
        let design = Design {
            conductor_choice: vec![1, 2, 1, 2],
            capacitor_choice: vec![1, 2, 2, 1],
            dg_flag: vec![0, 1, 1, 0],
        };
        let ids = DesignIds::from_design(&design, &case, &topo);
        assert_eq!(ids.to_design(&case, &topo).unwrap(), design);

        let mut bad = ids.clone();
        bad.conductors[1].conductor = 9;
        let err = bad.to_design(&case, &topo).unwrap_err();
        assert!(err.to_string().contains("outside catalog"), "{err}");
    }

    #[test]
    fn result_file_roundtrip() {
        let case = toy5();
        let topo = radial_topology(&case).unwrap();
        let cfg = SwarmConfig { n_particles: 8, it_max: 10, seed: 2, ..SwarmConfig::default() };
        let scenario = Scenario::full();
        let result = optimize(&case, &scenario, &cfg).unwrap();
        let file = ResultFile::new(&result, &case, &topo, &scenario);
        let text = file.to_json();
        assert_eq!(ResultFile::from_json(&text).unwrap(), file);
        assert_eq!(file.seed, 2);
        assert_eq!(file.history.len(), 10);
    }

    #[test]
    fn sweep_rows_and_csv_shape() {
        let case = toy5();
        let cfg = SwarmConfig { n_particles: 8, it_max: 12, seed: 4, ..SwarmConfig::default() };
        let sweep = omega_sweep(&case, &cfg, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        let csv = sweep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "omega,cond_cost,loss_cost,total_ploss_kw,u_ind,profile");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,"), "{first}");
        let profile = first.rsplit(',').next().unwrap();
        assert_eq!(profile.split('|').count(), 4);
    }
}
