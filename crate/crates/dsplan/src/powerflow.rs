//! Radial AC power flow by backward/forward sweep (current summation),
//! with an independent nodal-balance residual check, loss accounting and
//! voltage/ampacity limit screening.
//!
//! The sweep works in complex rectangular arithmetic; the residual is
//! evaluated in the standard polar form on the bus admittance matrix, so
//! the two never share an error. Convergence is declared only when the
//! residual drops below [`MISMATCH_TOL`].

use crate::econ::demand_at_year;
use crate::netmodel::{ConductorType, Economics, NetworkCase, PerUnitCase, Topology};
use crate::planner::{candidate_buses, Design};
use num_complex::Complex64;

/// Largest admissible per-node complex-power mismatch, p.u.
pub const MISMATCH_TOL: f64 = 1e-8;
/// Sweep iteration cap; hitting it reports `converged = false`.
pub const MAX_ITERATIONS: u32 = 50;

/// Current through one sizable section.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCurrent {
    /// Section id.
    pub section: u32,
    pub i_pu: f64,
    pub i_amp: f64,
}

/// One solved operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus index, p.u.
    pub u: Vec<f64>,
    /// Voltage angle per bus index, rad.
    pub delta: Vec<f64>,
    /// Current per sizable section, ordered as `Topology::sizable_sections`.
    pub branch_i: Vec<BranchCurrent>,
    /// Slack active injection, p.u.
    pub p_slack: f64,
    /// Slack reactive injection, p.u.
    pub q_slack: f64,
    /// Total active loss (generation minus consumption), kW.
    pub ploss_kw: f64,
    pub converged: bool,
    pub iterations: u32,
    /// Final nodal-balance residual, p.u.
    pub max_mismatch: f64,
}

/// Per-bus injections for one horizon year: escalated demands plus the
/// design's DG and capacitor outputs, all p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct YearInjections {
    pub p_demand: Vec<f64>,
    pub q_demand: Vec<f64>,
    pub dg_p: Vec<f64>,
    pub dg_q: Vec<f64>,
    pub cap_q: Vec<f64>,
}

/// Violations found by [`check_limits`].
#[derive(Debug, Clone, PartialEq)]
pub enum LimitViolation {
    Voltage { bus: u32, u_pu: f64 },
    Current { section: u32, i_amp: f64, i_max_amp: f64 },
}

impl std::fmt::Display for LimitViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitViolation::Voltage { bus, u_pu } => write!(f, "bus {bus} at {u_pu:.4} p.u."),
            LimitViolation::Current { section, i_amp, i_max_amp } => {
                write!(f, "section {section} at {i_amp:.1} A (limit {i_max_amp:.1} A)")
            }
        }
    }
}

/// Series admittance of `length_km` of a conductor: real and imaginary
/// parts of 1/(L·(R + jX)), siemens. Negative imaginary part for
/// inductive lines.
pub fn branch_admittance(conductor: &ConductorType, length_km: f64) -> (f64, f64) {
    assert!(length_km > 0.0, "zero-length sections carry no conductor; merge them instead");
    let y = (Complex64::new(conductor.r_per_km, conductor.x_per_km) * length_km).inv();
    (y.re, y.im)
}

/// Injections for horizon year `year`: demands grown by the case's load
/// growth rate; DG and capacitor outputs at the buses the design selects.
pub fn year_injections(
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    design: &Design,
    year: u32,
) -> YearInjections {
    let n = case.buses.len();
    let g = case.economics.load_growth;
    let mut inj = YearInjections {
        p_demand: pu.p_load.iter().map(|&p| demand_at_year(p, g, year)).collect(),
        q_demand: pu.q_load.iter().map(|&q| demand_at_year(q, g, year)).collect(),
        dg_p: vec![0.0; n],
        dg_q: vec![0.0; n],
        cap_q: vec![0.0; n],
    };
    for (slot, &b) in candidate_buses(case, topo).iter().enumerate() {
        let cap_id = design.capacitor_choice[slot] as usize;
        inj.cap_q[b] = pu.cap_q[cap_id - 1];
        if design.dg_flag[slot] != 0 {
            inj.dg_p[b] = pu.dg_p;
            inj.dg_q[b] = pu.dg_q;
        }
    }
    inj
}

/// Accumulate load currents leaf-to-root. Returns the total current into
/// the root; `branch_j` receives the series current of every section.
fn backward(topo: &Topology, s_net: &[Complex64], v: &[Complex64], branch_j: &mut [Complex64]) -> Complex64 {
    let mut node_i: Vec<Complex64> = s_net
        .iter()
        .zip(v)
        .map(|(&s, &vj)| if s == Complex64::ZERO { Complex64::ZERO } else { (s / vj).conj() })
        .collect();
    for &b in topo.order.iter().rev() {
        if let Some((p, s)) = topo.parent[b] {
            branch_j[s] = node_i[b];
            node_i[p] = node_i[p] + node_i[b];
        }
    }
    node_i[topo.root]
}

/// Bus admittance matrix over electrical nodes (zero-length sections
/// merged), used for the polar-form balance residual.
struct NodalModel {
    /// Representative bus index per slot.
    reps: Vec<usize>,
    /// Bus index → slot of its electrical node.
    slot_of_bus: Vec<usize>,
    root_slot: usize,
    diag_g: Vec<f64>,
    diag_b: Vec<f64>,
    /// Off-diagonal Y entries per slot: (other slot, G, B).
    off: Vec<Vec<(usize, f64, f64)>>,
}

impl NodalModel {
    fn new(case: &NetworkCase, pu: &PerUnitCase, topo: &Topology, design: &Design) -> Self {
        let n = case.buses.len();
        let reps: Vec<usize> = (0..n).filter(|&b| topo.electrical_node[b] == b).collect();
        let mut slot_of_rep = vec![usize::MAX; n];
        for (k, &b) in reps.iter().enumerate() {
            slot_of_rep[b] = k;
        }
        let slot_of_bus: Vec<usize> = (0..n).map(|b| slot_of_rep[topo.electrical_node[b]]).collect();

        let ns = reps.len();
        let mut diag_g = vec![0.0; ns];
        let mut diag_b = vec![0.0; ns];
        let mut off: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); ns];
        for (slot, &s) in topo.sizable_sections.iter().enumerate() {
            let sec = &case.sections[s];
            let c = &case.conductor_catalog[design.conductor_choice[slot] as usize - 1];
            let (g_s, b_s) = branch_admittance(c, sec.length_km);
            // catalog ohms → p.u. admittance
            let (g, b) = (g_s * pu.z_base_ohm, b_s * pu.z_base_ohm);
            let a = slot_of_bus[topo.bus_index(sec.from_bus).expect("validated case")];
            let d = slot_of_bus[topo.bus_index(sec.to_bus).expect("validated case")];
            diag_g[a] += g;
            diag_b[a] += b;
            diag_g[d] += g;
            diag_b[d] += b;
            off[a].push((d, -g, -b));
            off[d].push((a, -g, -b));
        }
        NodalModel { root_slot: slot_of_bus[topo.root], reps, slot_of_bus, diag_g, diag_b, off }
    }

    /// Largest |ΔP| or |ΔQ| over non-slack electrical nodes, where the
    /// calculated side is P_j = U_j Σ U_m (G cos δ_jm + B sin δ_jm) and
    /// Q_j = U_j Σ U_m (G sin δ_jm − B cos δ_jm).
    fn max_residual(&self, u: &[f64], delta: &[f64], inj: &YearInjections) -> f64 {
        let ns = self.reps.len();
        let mut p_spec = vec![0.0; ns];
        let mut q_spec = vec![0.0; ns];
        for b in 0..u.len() {
            let k = self.slot_of_bus[b];
            p_spec[k] += inj.dg_p[b] - inj.p_demand[b];
            q_spec[k] += inj.dg_q[b] + inj.cap_q[b] - inj.q_demand[b];
        }
        let mut worst = 0.0f64;
        for k in 0..ns {
            if k == self.root_slot {
                continue;
            }
            let (uk, dk) = (u[self.reps[k]], delta[self.reps[k]]);
            let mut p = uk * uk * self.diag_g[k];
            let mut q = -uk * uk * self.diag_b[k];
            for &(m, g, b) in &self.off[k] {
                let (um, dm) = (u[self.reps[m]], delta[self.reps[m]]);
                let (sin, cos) = (dk - dm).sin_cos();
                p += uk * um * (g * cos + b * sin);
                q += uk * um * (g * sin - b * cos);
            }
            worst = worst.max((p_spec[k] - p).abs()).max((q_spec[k] - q).abs());
        }
        worst
    }
}

/// Solve the operating point of `design` in horizon year `year`.
pub fn solve(
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    design: &Design,
    year: u32,
) -> PowerFlowSolution {
    let inj = year_injections(case, pu, topo, design, year);
    solve_injections(case, pu, topo, design, &inj)
}

/// Solve with explicit injections. Sweeps until the nodal-balance
/// residual is below [`MISMATCH_TOL`] or [`MAX_ITERATIONS`] is hit;
/// divergence is reported, never raised.
pub fn solve_injections(
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    design: &Design,
    inj: &YearInjections,
) -> PowerFlowSolution {
    let n = case.buses.len();
    debug_assert_eq!(inj.p_demand.len(), n);

    // Net constant-power load per bus; DG and capacitor as negative load.
    let s_net: Vec<Complex64> = (0..n)
        .map(|j| {
            Complex64::new(
                inj.p_demand[j] - inj.dg_p[j],
                inj.q_demand[j] - inj.dg_q[j] - inj.cap_q[j],
            )
        })
        .collect();

    // Series impedance per section, p.u.; zero for zero-length sections.
    let mut z = vec![Complex64::ZERO; case.sections.len()];
    for (slot, &s) in topo.sizable_sections.iter().enumerate() {
        let c = &case.conductor_catalog[design.conductor_choice[slot] as usize - 1];
        let (r, x) = pu.branch_z(c, case.sections[s].length_km);
        z[s] = Complex64::new(r, x);
    }

    let nodal = NodalModel::new(case, pu, topo, design);
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut u = vec![1.0; n];
    let mut delta = vec![0.0; n];
    let mut branch_j = vec![Complex64::ZERO; case.sections.len()];
    let mut converged = false;
    let mut iterations = 0;
    let mut max_mismatch = f64::INFINITY;

    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        backward(topo, &s_net, &v, &mut branch_j);
        for &b in &topo.order {
            if let Some((p, s)) = topo.parent[b] {
                v[b] = v[p] - z[s] * branch_j[s];
            }
        }
        for j in 0..n {
            u[j] = v[j].norm();
            delta[j] = v[j].arg();
        }
        max_mismatch = nodal.max_residual(&u, &delta, inj);
        if max_mismatch <= MISMATCH_TOL {
            converged = true;
            break;
        }
        if !max_mismatch.is_finite() {
            break; // numeric blow-up; report as unconverged
        }
    }

    // Currents and slack power consistent with the final voltages.
    let root_i = backward(topo, &s_net, &v, &mut branch_j);
    let s_slack = v[topo.root] * root_i.conj();
    let total_demand: f64 = inj.p_demand.iter().sum();
    let total_dg: f64 = inj.dg_p.iter().sum();
    let ploss_kw = (s_slack.re + total_dg - total_demand) * pu.s_base_kva;

    let branch_i = topo
        .sizable_sections
        .iter()
        .map(|&s| {
            let i_pu = branch_j[s].norm();
            BranchCurrent { section: case.sections[s].id, i_pu, i_amp: pu.amps(i_pu) }
        })
        .collect();

    PowerFlowSolution {
        u,
        delta,
        branch_i,
        p_slack: s_slack.re,
        q_slack: s_slack.im,
        ploss_kw,
        converged,
        iterations,
        max_mismatch,
    }
}

/// Independent check of a solution: largest polar-form nodal-balance
/// residual, p.u.
pub fn nodal_mismatch(
    solution: &PowerFlowSolution,
    case: &NetworkCase,
    pu: &PerUnitCase,
    topo: &Topology,
    design: &Design,
    inj: &YearInjections,
) -> f64 {
    NodalModel::new(case, pu, topo, design).max_residual(&solution.u, &solution.delta, inj)
}

/// Total active loss as generation minus consumption, kW:
/// (P_slack + Σ DG − Σ demand) on the system base.
pub fn total_loss(solution: &PowerFlowSolution, inj: &YearInjections, pu: &PerUnitCase) -> f64 {
    let total_demand: f64 = inj.p_demand.iter().sum();
    let total_dg: f64 = inj.dg_p.iter().sum();
    (solution.p_slack + total_dg - total_demand) * pu.s_base_kva
}

/// Voltage-band and ampacity screening. An empty list means the year is
/// feasible.
pub fn check_limits(
    solution: &PowerFlowSolution,
    case: &NetworkCase,
    topo: &Topology,
    design: &Design,
    econ: &Economics,
) -> Vec<LimitViolation> {
    let mut out = Vec::new();
    for (j, bus) in case.buses.iter().enumerate() {
        let u = solution.u[j];
        if u < econ.v_min || u > econ.v_max {
            out.push(LimitViolation::Voltage { bus: bus.id, u_pu: u });
        }
    }
    for (slot, &s) in topo.sizable_sections.iter().enumerate() {
        let c = &case.conductor_catalog[design.conductor_choice[slot] as usize - 1];
        let bi = &solution.branch_i[slot];
        if bi.i_amp > c.i_max {
            out.push(LimitViolation::Current {
                section: case.sections[s].id,
                i_amp: bi.i_amp,
                i_max_amp: c.i_max,
            });
        }
    }
    out
}
