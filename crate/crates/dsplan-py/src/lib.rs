//! Python bindings for the planning library: case handling, power flow,
//! design evaluation and the swarm/oracle optimizers, exposed as the
//! `dsplan_py` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dsplan::bspso::SwarmConfig;
use dsplan::{bspso, econ, netmodel, planner, powerflow};

fn value_err(msg: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(msg.to_string())
}

/// A validated radial study case with its derived topology and per-unit
/// quantities.
#[pyclass(frozen)]
struct Case {
    case: netmodel::NetworkCase,
    topo: netmodel::Topology,
    pu: netmodel::PerUnitCase,
}

impl Case {
    fn wrap(case: netmodel::NetworkCase) -> PyResult<Self> {
        let topo = netmodel::radial_topology(&case).map_err(value_err)?;
        let pu = netmodel::to_per_unit(&case);
        Ok(Case { case, topo, pu })
    }

    fn candidate_ids(&self) -> Vec<u32> {
        planner::candidate_buses(&self.case, &self.topo)
            .into_iter()
            .map(|b| self.case.buses[b].id)
            .collect()
    }
}

#[pymethods]
impl Case {
    /// Parse a case from JSON text and validate it.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Case::wrap(netmodel::parse_case(text).map_err(value_err)?)
    }

    /// Load a bundled case by name. Known names: "26bus".
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        match name {
            "26bus" => Case::wrap(netmodel::builtin_case_26bus()),
            other => Err(value_err(format!("unknown builtin case {other:?}"))),
        }
    }

    #[getter]
    fn bus_count(&self) -> usize {
        self.case.buses.len()
    }

    #[getter]
    fn section_count(&self) -> usize {
        self.case.sections.len()
    }

    #[getter]
    fn horizon_years(&self) -> u32 {
        self.case.economics.horizon_years
    }

    /// Section ids whose conductor is chosen by the planner (zero-length
    /// ties are excluded), ascending.
    fn sizable_sections(&self) -> Vec<u32> {
        self.topo.sizable_section_ids(&self.case)
    }

    /// Bus ids eligible for capacitors and DG (every non-slack bus),
    /// ascending.
    fn candidate_buses(&self) -> Vec<u32> {
        self.candidate_ids()
    }

    fn to_json(&self) -> String {
        netmodel::serialize_case(&self.case)
    }

    fn __repr__(&self) -> String {
        format!(
            "Case({} buses, {} sections, horizon {} years)",
            self.case.buses.len(),
            self.case.sections.len(),
            self.case.economics.horizon_years
        )
    }
}

/// One complete plan: a conductor type per sizable section, a capacitor
/// catalog id and a DG flag (0/1) per candidate bus, all in the orders
/// reported by `Case.sizable_sections()` / `Case.candidate_buses()`.
#[pyclass(frozen)]
struct Design {
    inner: planner::Design,
}

/// Reject designs whose shape or ids do not fit the case, so errors
/// surface as ValueError instead of a library panic.
fn check_design(case: &Case, design: &planner::Design) -> PyResult<()> {
    let n_sections = case.topo.sizable_sections.len();
    let n_cand = planner::candidate_buses(&case.case, &case.topo).len();
    if design.conductor_choice.len() != n_sections {
        return Err(value_err(format!(
            "expected {n_sections} conductor choices, got {}",
            design.conductor_choice.len()
        )));
    }
    if design.capacitor_choice.len() != n_cand || design.dg_flag.len() != n_cand {
        return Err(value_err(format!(
            "expected {n_cand} capacitor choices and dg flags, got {} and {}",
            design.capacitor_choice.len(),
            design.dg_flag.len()
        )));
    }
    let n_cond = case.case.conductor_catalog.len() as u32;
    if let Some(c) = design.conductor_choice.iter().find(|&&c| c < 1 || c > n_cond) {
        return Err(value_err(format!("conductor type {c} outside 1..={n_cond}")));
    }
    let n_cap = case.case.capacitor_catalog.len() as u32;
    if let Some(c) = design.capacitor_choice.iter().find(|&&c| c < 1 || c > n_cap) {
        return Err(value_err(format!("capacitor id {c} outside 1..={n_cap}")));
    }
    if design.dg_flag.iter().any(|&f| f > 1) {
        return Err(value_err("dg flags must be 0 or 1"));
    }
    Ok(())
}

#[pymethods]
impl Design {
    #[new]
    fn new(conductor_choice: Vec<u32>, capacitor_choice: Vec<u32>, dg_flag: Vec<u8>) -> Self {
        Design { inner: planner::Design { conductor_choice, capacitor_choice, dg_flag } }
    }

    /// The do-nothing reference plan: every section on conductor type 1,
    /// no capacitors, no DG.
    #[staticmethod]
    fn baseline(case: &Case) -> Self {
        let none_cap = case.case.capacitor_catalog.len() as u32;
        let n_cand = planner::candidate_buses(&case.case, &case.topo).len();
        Design {
            inner: planner::Design {
                conductor_choice: vec![1; case.topo.sizable_sections.len()],
                capacitor_choice: vec![none_cap; n_cand],
                dg_flag: vec![0; n_cand],
            },
        }
    }

    /// Parse the id-keyed JSON form (the `best_design` object of a result
    /// file) against a case.
    #[staticmethod]
    fn from_ids_json(case: &Case, text: &str) -> PyResult<Self> {
        let ids: planner::DesignIds = serde_json::from_str(text).map_err(value_err)?;
        let inner = ids.to_design(&case.case, &case.topo).map_err(value_err)?;
        Ok(Design { inner })
    }

    /// The id-keyed JSON form, the same shape result files use.
    fn to_ids_json(&self, case: &Case) -> PyResult<String> {
        check_design(case, &self.inner)?;
        let ids = planner::DesignIds::from_design(&self.inner, &case.case, &case.topo);
        serde_json::to_string_pretty(&ids).map_err(value_err)
    }

    #[getter]
    fn conductor_choice(&self) -> Vec<u32> {
        self.inner.conductor_choice.clone()
    }

    #[getter]
    fn capacitor_choice(&self) -> Vec<u32> {
        self.inner.capacitor_choice.clone()
    }

    #[getter]
    fn dg_flag(&self) -> Vec<u8> {
        self.inner.dg_flag.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(conductors={:?}, capacitors={:?}, dg={:?})",
            self.inner.conductor_choice, self.inner.capacitor_choice, self.inner.dg_flag
        )
    }
}

/// One solved operating point.
#[pyclass(frozen)]
struct Solution {
    inner: powerflow::PowerFlowSolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> u32 {
        self.inner.iterations
    }

    #[getter]
    fn max_mismatch(&self) -> f64 {
        self.inner.max_mismatch
    }

    #[getter]
    fn ploss_kw(&self) -> f64 {
        self.inner.ploss_kw
    }

    /// Voltage magnitude per bus index, p.u.
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.u.clone()
    }

    /// Voltage angle per bus index, rad.
    #[getter]
    fn delta(&self) -> Vec<f64> {
        self.inner.delta.clone()
    }

    #[getter]
    fn min_u(&self) -> f64 {
        self.inner.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// (section id, amps) per sizable section.
    fn branch_amps(&self) -> Vec<(u32, f64)> {
        self.inner.branch_i.iter().map(|b| (b.section, b.i_amp)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(converged={}, iterations={}, ploss_kw={:.3})",
            self.inner.converged, self.inner.iterations, self.inner.ploss_kw
        )
    }
}

/// Full verdict on one design: costs, feasibility and per-year outcomes.
#[pyclass(frozen)]
struct Report {
    inner: planner::EvaluationReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn feasible(&self) -> bool {
        self.inner.feasible
    }

    /// Total constraint-violation depth; 0 exactly when feasible.
    #[getter]
    fn severity(&self) -> f64 {
        self.inner.severity
    }

    #[getter]
    fn total_objective(&self) -> f64 {
        self.inner.total_objective
    }

    #[getter]
    fn u_ind(&self) -> f64 {
        self.inner.u_ind
    }

    #[getter]
    fn cond_cost(&self) -> f64 {
        self.inner.breakdown.cond_cost
    }

    #[getter]
    fn loss_cost(&self) -> f64 {
        self.inner.breakdown.loss_cost
    }

    #[getter]
    fn cap_cost(&self) -> f64 {
        self.inner.breakdown.cap_cost
    }

    #[getter]
    fn dg_cost(&self) -> f64 {
        self.inner.breakdown.dg_cost
    }

    /// Peak active loss per horizon year (year 1 first), kW.
    #[getter]
    fn per_year_ploss(&self) -> Vec<f64> {
        self.inner.breakdown.per_year_ploss.clone()
    }

    #[getter]
    fn total_ploss_kw(&self) -> f64 {
        self.inner.breakdown.per_year_ploss.iter().sum()
    }

    /// (year, kind, location) per constraint violation.
    #[getter]
    fn violations(&self) -> Vec<(u32, String, String)> {
        self.inner
            .violations
            .iter()
            .map(|v| (v.year, v.kind.clone(), v.location.clone()))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(feasible={}, objective={:.2}, u_ind={:.4})",
            self.inner.feasible, self.inner.total_objective, self.inner.u_ind
        )
    }
}

/// Outcome of an optimization run: the best design found, its fresh
/// evaluation and the per-iteration best-objective history.
#[pyclass(frozen)]
struct Outcome {
    inner: planner::PlanResult,
    scenario: planner::Scenario,
}

#[pymethods]
impl Outcome {
    #[getter]
    fn design(&self) -> Design {
        Design { inner: self.inner.best_design.clone() }
    }

    #[getter]
    fn report(&self) -> Report {
        Report { inner: self.inner.report.clone() }
    }

    /// Best swarm objective after each iteration (infeasible iterations
    /// carry the penalty value).
    #[getter]
    fn history(&self) -> Vec<f64> {
        self.inner.swarm_history.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn particles(&self) -> usize {
        self.inner.particles
    }

    #[getter]
    fn iterations(&self) -> u32 {
        self.inner.iterations
    }

    /// The same JSON document the command-line `plan` subcommand writes.
    fn result_json(&self, case: &Case) -> PyResult<String> {
        check_design(case, &self.inner.best_design)?;
        let file = planner::ResultFile::new(&self.inner, &case.case, &case.topo, &self.scenario);
        Ok(file.to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "Outcome(feasible={}, objective={:.2}, seed={})",
            self.inner.report.feasible, self.inner.report.total_objective, self.inner.seed
        )
    }
}

fn parse_scenario(mode: &str, omega: f64) -> PyResult<planner::Scenario> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(value_err(format!("omega {omega} outside [0, 1]")));
    }
    let base = match mode {
        "conductors" | "conductors_only" => planner::Scenario::conductors_only(),
        "full" => planner::Scenario::full(),
        other => Err(value_err(format!(
            "unknown scenario mode {other:?} (use \"conductors\" or \"full\")"
        )))?,
    };
    Ok(base.with_omega(omega))
}

fn swarm_config(seed: u64, particles: usize, iterations: u32) -> PyResult<SwarmConfig> {
    if particles < 2 {
        return Err(value_err("need at least two particles"));
    }
    if iterations < 1 {
        return Err(value_err("need at least one iteration"));
    }
    Ok(SwarmConfig { seed, n_particles: particles, it_max: iterations, ..SwarmConfig::default() })
}

/// Loss factor from load factor: 0.2·LF + 0.8·LF².
#[pyfunction]
fn loss_factor(lf: f64) -> PyResult<f64> {
    if !(lf > 0.0 && lf <= 1.0) {
        return Err(value_err(format!("load factor {lf} outside (0, 1]")));
    }
    Ok(econ::loss_factor(lf))
}

/// Compound escalation: base·(1+rate)^t.
#[pyfunction]
fn escalate(base: f64, rate: f64, t: u32) -> f64 {
    econ::escalate(base, rate, t)
}

/// The logistic curve used by the swarm's position rules.
#[pyfunction]
fn sigmoid(v: f64) -> f64 {
    bspso::sigmoid(v)
}

/// Solve the operating point of `design` in horizon year `year`
/// (0 = installation year, before any load growth).
#[pyfunction]
#[pyo3(signature = (case, design, year = 0))]
fn solve_year(case: &Case, design: &Design, year: u32) -> PyResult<Solution> {
    check_design(case, &design.inner)?;
    if year > case.case.economics.horizon_years {
        return Err(value_err(format!(
            "year {year} beyond the {}-year horizon",
            case.case.economics.horizon_years
        )));
    }
    let inner = powerflow::solve(&case.case, &case.pu, &case.topo, &design.inner, year);
    Ok(Solution { inner })
}

/// Evaluate one design over the whole horizon: costs, feasibility and
/// the ω-weighted objective.
#[pyfunction]
#[pyo3(signature = (case, design, mode = "full", omega = 0.5))]
fn evaluate(case: &Case, design: &Design, mode: &str, omega: f64) -> PyResult<Report> {
    check_design(case, &design.inner)?;
    let scenario = parse_scenario(mode, omega)?;
    let inner = planner::evaluate(&design.inner, &case.case, &case.pu, &case.topo, &scenario);
    Ok(Report { inner })
}

/// Run the selective-swarm optimizer plus its local-descent refinement.
#[pyfunction]
#[pyo3(signature = (case, mode = "conductors", omega = 0.5, seed = 0, particles = 50, iterations = 200))]
fn optimize(
    case: &Case,
    mode: &str,
    omega: f64,
    seed: u64,
    particles: usize,
    iterations: u32,
) -> PyResult<Outcome> {
    let scenario = parse_scenario(mode, omega)?;
    let cfg = swarm_config(seed, particles, iterations)?;
    let inner = planner::optimize(&case.case, &scenario, &cfg).map_err(value_err)?;
    Ok(Outcome { inner, scenario })
}

/// Enumerate the whole design space (small cases only) and return the
/// feasible minimum through the same evaluation path the swarm uses.
#[pyfunction]
#[pyo3(signature = (case, mode = "conductors", omega = 0.5))]
fn exhaustive_oracle(case: &Case, mode: &str, omega: f64) -> PyResult<Outcome> {
    let scenario = parse_scenario(mode, omega)?;
    let inner = planner::exhaustive_oracle(&case.case, &scenario).map_err(value_err)?;
    Ok(Outcome { inner, scenario })
}

/// Conductor-sizing trade-off curve: one optimization per ω value.
/// Returns (rows, csv) where each row is a dict.
#[pyfunction]
#[pyo3(signature = (case, grid, seed = 0, particles = 50, iterations = 200))]
fn omega_sweep(
    py: Python<'_>,
    case: &Case,
    grid: Vec<f64>,
    seed: u64,
    particles: usize,
    iterations: u32,
) -> PyResult<(Vec<Py<PyAny>>, String)> {
    if let Some(&omega) = grid.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(value_err(format!("omega {omega} outside [0, 1]")));
    }
    let cfg = swarm_config(seed, particles, iterations)?;
    let sweep = planner::omega_sweep(&case.case, &cfg, &grid).map_err(value_err)?;
    let mut rows = Vec::with_capacity(sweep.rows.len());
    for row in &sweep.rows {
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("omega", row.omega)?;
        dict.set_item("cond_cost", row.cond_cost)?;
        dict.set_item("loss_cost", row.loss_cost)?;
        dict.set_item("total_ploss_kw", row.total_ploss_kw)?;
        dict.set_item("u_ind", row.u_ind)?;
        dict.set_item("feasible", row.feasible)?;
        dict.set_item("profile", row.profile.clone())?;
        rows.push(dict.into_any().unbind());
    }
    Ok((rows, sweep.to_csv()))
}

#[pymodule]
fn dsplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Case>()?;
    m.add_class::<Design>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Report>()?;
    m.add_class::<Outcome>()?;
    m.add_function(wrap_pyfunction!(loss_factor, m)?)?;
    m.add_function(wrap_pyfunction!(escalate, m)?)?;
    m.add_function(wrap_pyfunction!(sigmoid, m)?)?;
    m.add_function(wrap_pyfunction!(solve_year, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(omega_sweep, m)?)?;
    Ok(())
}
