//! Planning-problem data model: buses, sections, equipment catalogs and
//! economic parameters, plus case-file parsing, radiality verification and
//! per-unit conversion.
//!
//! A case describes one radial feeder rooted at the substation (bus 0).
//! Catalogs are ordered largest entry first (id 1), which the selective
//! update rule of the swarm engine relies on.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// One conductor catalog entry. Id 1 is the largest cross-section
/// (lowest resistance, highest ampacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductorType {
    pub id: u32,
    /// Resistance, ohm/km.
    pub r_per_km: f64,
    /// Reactance, ohm/km.
    pub x_per_km: f64,
    /// Capital cost, currency/km.
    pub price_per_km: f64,
    /// Ampacity, A.
    pub i_max: f64,
}

/// One shunt-capacitor catalog entry. The last entry must be the
/// zero-size "no capacitor" option with zero costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitorType {
    pub id: u32,
    pub q_kvar: f64,
    pub capital_cost: f64,
    pub install_cost: f64,
}

/// The single available DG unit type, dispatched at rated output when placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGType {
    pub p_rated_kw: f64,
    pub q_rated_kvar: f64,
    /// Capital plus installation cost per unit.
    pub total_cost: f64,
}

/// A network node. Bus 0 is the substation/slack and carries no load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Peak apparent load at year 0, kVA.
    pub s_load_kva: f64,
    /// Lagging power factor in (0, 1].
    pub power_factor: f64,
}

impl Bus {
    /// Peak active load at year 0, kW.
    pub fn p_load_kw(&self) -> f64 {
        self.s_load_kva * self.power_factor
    }

    /// Peak reactive load at year 0, kVAr.
    pub fn q_load_kvar(&self) -> f64 {
        self.s_load_kva * (1.0 - self.power_factor * self.power_factor).max(0.0).sqrt()
    }
}

/// A feeder section connecting two buses. Zero-length sections carry no
/// impedance and no conductor decision; their endpoints form one
/// electrical node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: u32,
    #[serde(rename = "from")]
    pub from_bus: u32,
    #[serde(rename = "to")]
    pub to_bus: u32,
    pub length_km: f64,
}

/// Economic and operating parameters for the planning horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economics {
    /// Cost of power at year 0, currency/kW.
    pub cp0: f64,
    /// Cost of energy at year 0, currency/kWh.
    pub ce0: f64,
    /// Per-year inflation rate.
    pub inflation: f64,
    /// Per-year load growth rate.
    pub load_growth: f64,
    /// Ratio of average to peak load, in (0, 1].
    pub load_factor: f64,
    /// Planning horizon T, years (loss costs accrue over t = 1..T).
    pub horizon_years: u32,
    /// Lower voltage limit, p.u.
    pub v_min: f64,
    /// Upper voltage limit, p.u.
    pub v_max: f64,
    /// Maximum capacitor budget, currency.
    pub cap_budget: f64,
    /// Maximum DG budget, currency.
    pub dg_budget: f64,
    /// System base power, MVA.
    #[serde(skip)]
    pub base_mva: f64,
    /// System base line voltage, kV.
    #[serde(skip)]
    pub base_kv: f64,
}

/// A complete, validated planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub buses: Vec<Bus>,
    pub sections: Vec<Section>,
    pub conductor_catalog: Vec<ConductorType>,
    pub capacitor_catalog: Vec<CapacitorType>,
    pub dg_type: DGType,
    pub economics: Economics,
}

/// Tree structure of a radial case, rooted at bus 0. Indices refer to
/// positions in `NetworkCase::buses` / `NetworkCase::sections`.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Index of the root (slack) bus.
    pub root: usize,
    /// Per bus index: parent bus index and connecting section index.
    /// `None` for the root.
    pub parent: Vec<Option<(usize, usize)>>,
    /// Bus indices in breadth-first order from the root; parents precede
    /// children.
    pub order: Vec<usize>,
    /// Per bus index: child (bus index, section index) pairs.
    pub children: Vec<Vec<(usize, usize)>>,
    /// Section indices with nonzero length, ascending by section id.
    pub sizable_sections: Vec<usize>,
    /// Per bus index: representative bus index of its electrical node
    /// (buses joined by zero-length sections collapse to one node).
    pub electrical_node: Vec<usize>,
    bus_index: HashMap<u32, usize>,
}

impl Topology {
    /// Parent of a bus by id, as (parent bus id, section id).
    pub fn parent_of(&self, case: &NetworkCase, bus_id: u32) -> Option<(u32, u32)> {
        let idx = *self.bus_index.get(&bus_id)?;
        self.parent[idx].map(|(p, s)| (case.buses[p].id, case.sections[s].id))
    }

    /// Index of a bus by id.
    pub fn bus_index(&self, bus_id: u32) -> Option<usize> {
        self.bus_index.get(&bus_id).copied()
    }

    /// Section ids of the sizable sections, in the order used by designs.
    pub fn sizable_section_ids(&self, case: &NetworkCase) -> Vec<u32> {
        self.sizable_sections.iter().map(|&s| case.sections[s].id).collect()
    }
}

/// Case converted to per-unit quantities on the system base.
#[derive(Debug, Clone)]
pub struct PerUnitCase {
    /// Peak active load per bus index at year 0, p.u.
    pub p_load: Vec<f64>,
    /// Peak reactive load per bus index at year 0, p.u.
    pub q_load: Vec<f64>,
    /// Capacitor catalog reactive sizes, p.u.
    pub cap_q: Vec<f64>,
    /// DG rated output, p.u.
    pub dg_p: f64,
    pub dg_q: f64,
    /// Impedance base, ohm.
    pub z_base_ohm: f64,
    /// Line current base, A (three-phase: S_base / (sqrt(3) V_base)).
    pub i_base_a: f64,
    /// Power base, kVA.
    pub s_base_kva: f64,
}

impl PerUnitCase {
    /// Series impedance of `length_km` of a conductor, p.u.
    pub fn branch_z(&self, conductor: &ConductorType, length_km: f64) -> (f64, f64) {
        (
            conductor.r_per_km * length_km / self.z_base_ohm,
            conductor.x_per_km * length_km / self.z_base_ohm,
        )
    }

    /// Convert a p.u. current magnitude to amps.
    pub fn amps(&self, i_pu: f64) -> f64 {
        i_pu * self.i_base_a
    }

    /// Convert a kW (or kVAr) quantity to p.u.
    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / self.s_base_kva
    }
}

/// Errors raised while parsing or validating a case.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{0}")]
    Data(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("cycle detected at section {section}")]
    CycleDetected { section: u32 },
    #[error("disconnected bus {bus}")]
    DisconnectedBus { bus: u32 },
    #[error("root not found: no bus with id 0")]
    RootNotFound,
}

fn invariant(msg: impl Into<String>) -> CaseError {
    CaseError::Invariant(msg.into())
}

/// On-disk case layout: bases at the top level, the rest of the economics
/// in their own object.
#[derive(Serialize, Deserialize)]
struct CaseFile {
    base_mva: f64,
    base_kv: f64,
    buses: Vec<Bus>,
    sections: Vec<Section>,
    conductor_catalog: Vec<ConductorType>,
    capacitor_catalog: Vec<CapacitorType>,
    dg_type: DGType,
    economics: Economics,
}

/// Parse a UTF-8 JSON case file and validate every invariant, radiality
/// included.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            CaseError::Syntax(e.to_string())
        } else {
            CaseError::Data(e.to_string())
        }
    })?;
    let mut economics = file.economics;
    economics.base_mva = file.base_mva;
    economics.base_kv = file.base_kv;
    let case = NetworkCase {
        buses: file.buses,
        sections: file.sections,
        conductor_catalog: file.conductor_catalog,
        capacitor_catalog: file.capacitor_catalog,
        dg_type: file.dg_type,
        economics,
    };
    validate(&case)?;
    Ok(case)
}

/// Serialize a case back to the case-file format. `parse_case` of the
/// result reproduces the case field for field.
pub fn serialize_case(case: &NetworkCase) -> String {
    let file = CaseFile {
        base_mva: case.economics.base_mva,
        base_kv: case.economics.base_kv,
        buses: case.buses.clone(),
        sections: case.sections.clone(),
        conductor_catalog: case.conductor_catalog.clone(),
        capacitor_catalog: case.capacitor_catalog.clone(),
        dg_type: case.dg_type.clone(),
        economics: case.economics.clone(),
    };
    serde_json::to_string_pretty(&file).expect("case serialization cannot fail")
}

fn check_finite(value: f64, what: &str) -> Result<(), CaseError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invariant(format!("{what} is not finite")))
    }
}

/// Check every NetworkCase invariant, radiality included.
pub fn validate(case: &NetworkCase) -> Result<(), CaseError> {
    // Buses: unique ids, exactly one slack with zero load, sane loads.
    let mut seen = HashMap::new();
    for bus in &case.buses {
        if seen.insert(bus.id, ()).is_some() {
            return Err(invariant(format!("duplicate bus id {}", bus.id)));
        }
        check_finite(bus.s_load_kva, "bus load")?;
        check_finite(bus.power_factor, "power factor")?;
        if bus.s_load_kva < 0.0 {
            return Err(invariant(format!("bus {} has negative load", bus.id)));
        }
        if !(bus.power_factor > 0.0 && bus.power_factor <= 1.0) {
            return Err(invariant(format!(
                "bus {} power factor {} outside (0, 1]",
                bus.id, bus.power_factor
            )));
        }
    }
    let root = case.buses.iter().find(|b| b.id == 0).ok_or(CaseError::RootNotFound)?;
    if root.s_load_kva != 0.0 {
        return Err(invariant("substation bus 0 must carry no load"));
    }

    // Sections: unique ids, distinct existing endpoints, nonnegative length.
    let mut sec_seen = HashMap::new();
    for sec in &case.sections {
        if sec_seen.insert(sec.id, ()).is_some() {
            return Err(invariant(format!("duplicate section id {}", sec.id)));
        }
        check_finite(sec.length_km, "section length")?;
        if sec.from_bus == sec.to_bus {
            return Err(invariant(format!("section {} connects a bus to itself", sec.id)));
        }
        if !seen.contains_key(&sec.from_bus) || !seen.contains_key(&sec.to_bus) {
            return Err(invariant(format!("section {} references an unknown bus", sec.id)));
        }
        if sec.length_km < 0.0 {
            return Err(invariant(format!("section {} has negative length", sec.id)));
        }
    }
    if case.sections.len() + 1 != case.buses.len() {
        return Err(invariant(format!(
            "section count {} must equal bus count {} minus one",
            case.sections.len(),
            case.buses.len()
        )));
    }

    // Conductor catalog: contiguous ids from 1, ordered largest first.
    if case.conductor_catalog.is_empty() {
        return Err(invariant("conductor catalog is empty"));
    }
    for (i, c) in case.conductor_catalog.iter().enumerate() {
        if c.id != i as u32 + 1 {
            return Err(invariant("conductor catalog ids not contiguous from 1"));
        }
        check_finite(c.r_per_km, "conductor resistance")?;
        check_finite(c.x_per_km, "conductor reactance")?;
        check_finite(c.price_per_km, "conductor price")?;
        check_finite(c.i_max, "conductor ampacity")?;
        if c.r_per_km <= 0.0 || c.x_per_km <= 0.0 || c.price_per_km <= 0.0 || c.i_max <= 0.0 {
            return Err(invariant(format!("conductor type {} has a non-positive field", c.id)));
        }
    }
    for pair in case.conductor_catalog.windows(2) {
        if pair[1].i_max >= pair[0].i_max || pair[1].r_per_km <= pair[0].r_per_km {
            return Err(invariant(
                "conductor catalog not ordered largest to smallest (ampacity must \
                 decrease and resistance increase with id)",
            ));
        }
    }

    // Capacitor catalog: contiguous ids, sizes decreasing, last entry is
    // the zero-size "none" option.
    if case.capacitor_catalog.is_empty() {
        return Err(invariant("capacitor catalog is empty"));
    }
    for (i, c) in case.capacitor_catalog.iter().enumerate() {
        if c.id != i as u32 + 1 {
            return Err(invariant("capacitor catalog ids not contiguous from 1"));
        }
        check_finite(c.q_kvar, "capacitor size")?;
        check_finite(c.capital_cost, "capacitor capital cost")?;
        check_finite(c.install_cost, "capacitor installation cost")?;
        if c.q_kvar < 0.0 || c.capital_cost < 0.0 || c.install_cost < 0.0 {
            return Err(invariant(format!("capacitor type {} has a negative field", c.id)));
        }
    }
    for pair in case.capacitor_catalog.windows(2) {
        if pair[1].q_kvar >= pair[0].q_kvar {
            return Err(invariant("capacitor catalog not ordered largest to smallest"));
        }
    }
    let last = case.capacitor_catalog.last().unwrap();
    if last.q_kvar != 0.0 || last.capital_cost != 0.0 || last.install_cost != 0.0 {
        return Err(invariant(
            "last capacitor catalog entry must be the zero-size, zero-cost option",
        ));
    }

    // DG type.
    check_finite(case.dg_type.p_rated_kw, "DG active rating")?;
    check_finite(case.dg_type.q_rated_kvar, "DG reactive rating")?;
    check_finite(case.dg_type.total_cost, "DG cost")?;
    if case.dg_type.p_rated_kw <= 0.0 {
        return Err(invariant("DG active rating must be positive"));
    }
    if case.dg_type.q_rated_kvar < 0.0 || case.dg_type.total_cost < 0.0 {
        return Err(invariant("DG reactive rating and cost must be nonnegative"));
    }

    // Economics.
    let e = &case.economics;
    for (v, what) in [
        (e.cp0, "cost of power"),
        (e.ce0, "cost of energy"),
        (e.inflation, "inflation"),
        (e.load_growth, "load growth"),
        (e.load_factor, "load factor"),
        (e.v_min, "v_min"),
        (e.v_max, "v_max"),
        (e.cap_budget, "capacitor budget"),
        (e.dg_budget, "DG budget"),
        (e.base_mva, "base MVA"),
        (e.base_kv, "base kV"),
    ] {
        check_finite(v, what)?;
    }
    if e.cp0 < 0.0 || e.ce0 < 0.0 {
        return Err(invariant("costs of power and energy must be nonnegative"));
    }
    if !(e.load_factor > 0.0 && e.load_factor <= 1.0) {
        return Err(invariant(format!("load factor {} outside (0, 1]", e.load_factor)));
    }
    if e.horizon_years < 1 {
        return Err(invariant("planning horizon must be at least one year"));
    }
    if e.v_min >= e.v_max {
        return Err(invariant("v_min must be below v_max"));
    }
    if e.cap_budget < 0.0 || e.dg_budget < 0.0 {
        return Err(invariant("budgets must be nonnegative"));
    }
    if e.base_mva <= 0.0 || e.base_kv <= 0.0 {
        return Err(invariant("system bases must be positive"));
    }

    // Radiality is a parse-time invariant.
    radial_topology(case)?;
    Ok(())
}

/// Build the rooted tree of a radial case: parent map, breadth-first
/// order, sizable sections and electrical-node merging of zero-length
/// sections.
pub fn radial_topology(case: &NetworkCase) -> Result<Topology, CaseError> {
    let n = case.buses.len();
    let mut bus_index = HashMap::with_capacity(n);
    for (i, bus) in case.buses.iter().enumerate() {
        bus_index.insert(bus.id, i);
    }
    let root = *bus_index.get(&0).ok_or(CaseError::RootNotFound)?;

    // Adjacency: per bus index, (neighbor bus index, section index).
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (s, sec) in case.sections.iter().enumerate() {
        let a = *bus_index
            .get(&sec.from_bus)
            .ok_or_else(|| invariant(format!("section {} references an unknown bus", sec.id)))?;
        let b = *bus_index
            .get(&sec.to_bus)
            .ok_or_else(|| invariant(format!("section {} references an unknown bus", sec.id)))?;
        adj[a].push((b, s));
        adj[b].push((a, s));
    }

    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    visited[root] = true;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, s) in &adj[u] {
            if let Some((_, ps)) = parent[u] {
                if ps == s {
                    continue; // tree edge back to the parent
                }
            }
            if visited[v] {
                return Err(CaseError::CycleDetected { section: case.sections[s].id });
            }
            visited[v] = true;
            parent[v] = Some((u, s));
            queue.push_back(v);
        }
    }
    if let Some(i) = visited.iter().position(|&v| !v) {
        return Err(CaseError::DisconnectedBus { bus: case.buses[i].id });
    }

    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (v, p) in parent.iter().enumerate() {
        if let Some((u, s)) = *p {
            children[u].push((v, s));
        }
    }

    let mut sizable: Vec<usize> = (0..case.sections.len())
        .filter(|&s| case.sections[s].length_km > 0.0)
        .collect();
    sizable.sort_by_key(|&s| case.sections[s].id);

    // Collapse zero-length tree edges upward to the nearest sizable parent.
    let mut electrical_node = vec![0usize; n];
    for &u in &order {
        electrical_node[u] = match parent[u] {
            Some((p, s)) if case.sections[s].length_km == 0.0 => electrical_node[p],
            _ => u,
        };
    }

    Ok(Topology {
        root,
        parent,
        order,
        children,
        sizable_sections: sizable,
        electrical_node,
        bus_index,
    })
}

/// Convert loads, equipment ratings and bases to per-unit quantities.
pub fn to_per_unit(case: &NetworkCase) -> PerUnitCase {
    let e = &case.economics;
    let s_base_kva = e.base_mva * 1000.0;
    let z_base_ohm = e.base_kv * e.base_kv / e.base_mva;
    let i_base_a = 1000.0 * e.base_mva / (3f64.sqrt() * e.base_kv);
    let p_load = case.buses.iter().map(|b| b.p_load_kw() / s_base_kva).collect();
    let q_load = case.buses.iter().map(|b| b.q_load_kvar() / s_base_kva).collect();
    let cap_q = case.capacitor_catalog.iter().map(|c| c.q_kvar / s_base_kva).collect();
    PerUnitCase {
        p_load,
        q_load,
        cap_q,
        dg_p: case.dg_type.p_rated_kw / s_base_kva,
        dg_q: case.dg_type.q_rated_kvar / s_base_kva,
        z_base_ohm,
        i_base_a,
        s_base_kva,
    }
}

/// The 26-bus test system: 27 buses (substation plus 26), 26 sections,
/// five conductor types, four capacitor types (the last meaning "none"),
/// one 500 kW / 300 kVAr DG type, 10-year horizon on a 1 MVA / 20 kV base.
pub fn builtin_case_26bus() -> NetworkCase {
    // (section id, from, to, length km, load kVA at the to-bus)
    const SECTIONS: [(u32, u32, u32, f64, f64); 26] = [
        (1, 0, 1, 0.000, 0.0),
        (2, 1, 2, 1.175, 0.0),
        (3, 2, 3, 0.625, 950.0),
        (4, 3, 4, 1.825, 0.0),
        (5, 4, 5, 0.850, 0.0),
        (6, 5, 6, 1.125, 850.0),
        (7, 6, 7, 2.625, 0.0),
        (8, 7, 8, 2.925, 640.0),
        (9, 8, 9, 1.175, 813.0),
        (10, 1, 10, 0.650, 800.0),
        (11, 10, 11, 1.825, 400.0),
        (12, 11, 12, 0.825, 950.0),
        (13, 12, 13, 1.125, 825.0),
        (14, 13, 14, 2.625, 725.0),
        (15, 14, 15, 2.925, 900.0),
        (16, 2, 16, 1.175, 300.0),
        (17, 16, 17, 0.650, 750.0),
        (18, 17, 18, 1.825, 350.0),
        (19, 18, 19, 0.825, 400.0),
        (20, 19, 20, 1.125, 700.0),
        (21, 3, 21, 2.625, 125.0),
        (22, 4, 22, 2.925, 565.0),
        (23, 5, 23, 1.175, 682.0),
        (24, 7, 24, 0.650, 900.0),
        (25, 7, 25, 1.825, 575.0),
        (26, 25, 26, 0.825, 200.0),
    ];
    // (id, R ohm/km, X ohm/km, price/km, ampacity A)
    const CONDUCTORS: [(u32, f64, f64, f64, f64); 5] = [
        (1, 0.158, 0.23, 151.0, 520.0),
        (2, 0.271, 0.25, 81.0, 310.0),
        (3, 0.455, 0.26, 48.0, 212.0),
        (4, 0.782, 0.28, 31.0, 150.0),
        (5, 1.374, 0.39, 15.0, 107.0),
    ];
    // (id, kVAr, capital, installation)
    const CAPACITORS: [(u32, f64, f64, f64); 4] = [
        (1, 1200.0, 2040.0, 100.0),
        (2, 600.0, 1320.0, 100.0),
        (3, 300.0, 975.0, 100.0),
        (4, 0.0, 0.0, 0.0),
    ];
    const POWER_FACTOR: f64 = 0.85;

    let mut buses = vec![Bus { id: 0, s_load_kva: 0.0, power_factor: POWER_FACTOR }];
    buses.extend(SECTIONS.iter().map(|&(_, _, to, _, s)| Bus {
        id: to,
        s_load_kva: s,
        power_factor: POWER_FACTOR,
    }));
    buses.sort_by_key(|b| b.id);

    let case = NetworkCase {
        buses,
        sections: SECTIONS
            .iter()
            .map(|&(id, from, to, length_km, _)| Section { id, from_bus: from, to_bus: to, length_km })
            .collect(),
        conductor_catalog: CONDUCTORS
            .iter()
            .map(|&(id, r_per_km, x_per_km, price_per_km, i_max)| ConductorType {
                id,
                r_per_km,
                x_per_km,
                price_per_km,
                i_max,
            })
            .collect(),
        capacitor_catalog: CAPACITORS
            .iter()
            .map(|&(id, q_kvar, capital_cost, install_cost)| CapacitorType {
                id,
                q_kvar,
                capital_cost,
                install_cost,
            })
            .collect(),
        dg_type: DGType { p_rated_kw: 500.0, q_rated_kvar: 300.0, total_cost: 4000.0 },
        economics: Economics {
            cp0: 168.0,
            ce0: 0.06,
            inflation: 0.05,
            load_growth: 0.02,
            load_factor: 0.25,
            horizon_years: 10,
            v_min: 0.95,
            v_max: 1.0,
            cap_budget: 5000.0,
            dg_budget: 10000.0,
            base_mva: 1.0,
            base_kv: 20.0,
        },
    };
    debug_assert!(validate(&case).is_ok());
    case
}

/// Two-bus fixture shared by the solver and planner tests: one 1 km
/// type-1 section feeding a 500 kVA, 0.85 pf load.
#[cfg(test)]
pub(crate) const TWO_BUS_JSON: &str = include_str!("../tests/fixtures/twobus.json");

#[cfg(test)]
pub(crate) fn two_bus_case() -> NetworkCase {
    parse_case(TWO_BUS_JSON).expect("fixture is valid")
}
