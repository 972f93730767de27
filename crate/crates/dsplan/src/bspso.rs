//! Binary-Selective PSO over mixed decision vectors.
//!
//! Velocities are real-valued per variable. Binary variables follow the
//! sigmoid rule (bit = 1 iff rand < sigmoid(v)); selective variables pick
//! a catalog index through nested thresholds on the same sigmoid, so a
//! higher velocity never selects a smaller choice. Infeasible particles
//! receive a penalty objective and can never become pbest or gbest over a
//! feasible one.
//!
//! Runs are deterministic for a given seed: every particle draws from its
//! own per-iteration ChaCha8 substream, so parallel evaluation cannot
//! reorder randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One decision variable of the swarm.
#[derive(Debug, Clone, PartialEq)]
pub enum VariableSpec {
    /// 0/1 decision.
    Binary,
    /// Ordered catalog choice 1..n (1 = largest). `thresholds` holds
    /// a_1 > a_2 > ... > a_n within [−0.5, 0.5].
    Selective { thresholds: Vec<f64> },
}

impl VariableSpec {
    /// Selective variable over `n` choices with evenly spaced thresholds
    /// a_i = 0.5 − (i−1)/(n−1), spanning the full permitted range.
    pub fn selective(n: u32) -> Self {
        assert!(n >= 2, "a selective variable needs at least two choices, got {n}");
        let thresholds = (1..=n).map(|i| 0.5 - (i - 1) as f64 / (n - 1) as f64).collect();
        VariableSpec::Selective { thresholds }
    }

    /// Number of values this variable can take.
    pub fn n_choices(&self) -> u32 {
        match self {
            VariableSpec::Binary => 2,
            VariableSpec::Selective { thresholds } => thresholds.len() as u32,
        }
    }

    /// Position value on a common [0, 1] scale for velocity arithmetic:
    /// bits map to themselves, choice idx to (n − idx)/(n − 1) so the
    /// largest choice sits at 1.
    fn normalized(&self, value: u32) -> f64 {
        match self {
            VariableSpec::Binary => value as f64,
            VariableSpec::Selective { thresholds } => {
                let n = thresholds.len() as f64;
                (n - value as f64) / (n - 1.0)
            }
        }
    }

    fn assert_valid(&self) {
        if let VariableSpec::Selective { thresholds } = self {
            assert!(thresholds.len() >= 2, "selective variable needs at least two thresholds");
            for pair in thresholds.windows(2) {
                assert!(pair[0] > pair[1], "selective thresholds must be strictly decreasing");
            }
            assert!(
                thresholds.iter().all(|a| (-0.5..=0.5).contains(a)),
                "selective thresholds must lie within [-0.5, 0.5]"
            );
        }
    }
}

/// Engine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub n_particles: usize,
    pub it_max: u32,
    pub c1: f64,
    pub c2: f64,
    pub w_max: f64,
    pub w_min: f64,
    /// Velocity clamp; |v| ≤ v_max after every update.
    pub v_max: f64,
    pub seed: u64,
    /// Objective assigned to infeasible particles. Must exceed any
    /// feasible objective.
    pub penalty: f64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            n_particles: 50,
            it_max: 200,
            c1: 2.0,
            c2: 2.0,
            w_max: 0.9,
            w_min: 0.4,
            v_max: 6.0,
            seed: 0,
            penalty: 1e18,
        }
    }
}

impl SwarmConfig {
    fn assert_valid(&self) {
        assert!(self.n_particles >= 2, "swarm needs at least two particles");
        assert!(self.it_max >= 1, "swarm needs at least one iteration");
        assert!(self.w_min <= self.w_max, "w_min must not exceed w_max");
        assert!(self.v_max > 0.0, "velocity clamp must be positive");
        assert!(self.c1 >= 0.0 && self.c2 >= 0.0, "acceleration constants must be nonnegative");
        assert!(self.penalty.is_finite() && self.penalty > 0.0, "penalty must be a positive finite value");
    }
}

/// Objective verdict for one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Feasible(f64),
    Infeasible,
}

/// One swarm member.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<u32>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<u32>,
    pub pbest_objective: f64,
    pub pbest_feasible: bool,
}

/// Outcome of a swarm run.
#[derive(Debug, Clone, PartialEq)]
pub struct BestRecord {
    pub gbest_position: Vec<u32>,
    /// Best objective; equals the penalty when nothing feasible was found.
    pub gbest_objective: f64,
    /// Best objective after each iteration; non-increasing.
    pub objective_history: Vec<f64>,
    pub feasible_found: bool,
}

/// Logistic transfer function 1/(1 + e^{−v}).
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Linearly decaying inertia: w_max at it = 0, w_min at it = it_max.
pub fn inertia(it: u32, cfg: &SwarmConfig) -> f64 {
    debug_assert!(it <= cfg.it_max);
    cfg.w_max - (cfg.w_max - cfg.w_min) / cfg.it_max as f64 * it as f64
}

/// One velocity step: w·v + c1·r1·(pbest − s) + c2·r2·(gbest − s), clamped
/// to ±v_max. Positions are on the normalized scale. The r1/r2 draws are
/// parameters so the formula stays directly testable.
#[allow(clippy::too_many_arguments)]
pub fn velocity_update(
    v: f64,
    s: f64,
    pbest: f64,
    gbest: f64,
    w: f64,
    r1: f64,
    r2: f64,
    cfg: &SwarmConfig,
) -> f64 {
    (w * v + cfg.c1 * r1 * (pbest - s) + cfg.c2 * r2 * (gbest - s)).clamp(-cfg.v_max, cfg.v_max)
}

/// Sigmoid rule for a bit: 1 iff the drawn rand falls below sigmoid(v).
pub fn binary_position_update(v: f64, rand: f64) -> u32 {
    u32::from(rand < sigmoid(v))
}

/// Nested-threshold rule for a selective variable: one shared draw `rd`;
/// the smallest index i with rd + a_i < sigmoid(v) wins, index n if no
/// condition holds.
pub fn selective_position_update(v: f64, spec: &VariableSpec, rd: f64) -> u32 {
    let VariableSpec::Selective { thresholds } = spec else {
        panic!("selective update applied to a binary variable");
    };
    let sig = sigmoid(v);
    for (i, a) in thresholds.iter().enumerate() {
        if rd + a < sig {
            return i as u32 + 1;
        }
    }
    thresholds.len() as u32
}

/// Independent RNG substream for (seed, domain, iteration, particle).
fn stream(seed: u64, domain: u64, it: u64, particle: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&domain.to_le_bytes());
    bytes[16..24].copy_from_slice(&it.to_le_bytes());
    bytes[24..].copy_from_slice(&particle.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

const DOMAIN_INIT: u64 = 0;
const DOMAIN_UPDATE: u64 = 1;

/// `cand` beats `incumbent` iff it is feasible and the incumbent is not,
/// or both share feasibility and it is strictly better.
fn improves(cand: (f64, bool), incumbent: (f64, bool)) -> bool {
    match (cand.1, incumbent.1) {
        (true, false) => true,
        (false, true) => false,
        _ => cand.0 < incumbent.0,
    }
}

fn evaluate_all<F>(problem: &F, particles: &[Particle], cfg: &SwarmConfig) -> Vec<(f64, bool)>
where
    F: Fn(&[u32]) -> Objective + Sync,
{
    particles
        .par_iter()
        .map(|p| match problem(&p.position) {
            Objective::Feasible(x) => {
                assert!(
                    x.is_finite() && x < cfg.penalty,
                    "feasible objective {x} must be finite and below the penalty {}",
                    cfg.penalty
                );
                (x, true)
            }
            Objective::Infeasible => (cfg.penalty, false),
        })
        .collect()
}

/// Minimize `problem` over the mixed domain described by `specs`.
///
/// Positions start uniform over each variable's domain, velocities
/// uniform in [−1, 1]. Updates are synchronous: all particles are
/// evaluated, then pbest/gbest advance in particle order. Identical
/// inputs (seed included) give identical records regardless of
/// evaluation parallelism.
pub fn run<F>(problem: F, specs: &[VariableSpec], cfg: &SwarmConfig) -> BestRecord
where
    F: Fn(&[u32]) -> Objective + Sync,
{
    cfg.assert_valid();
    assert!(!specs.is_empty(), "swarm needs at least one variable");
    for spec in specs {
        spec.assert_valid();
    }

    let mut particles: Vec<Particle> = (0..cfg.n_particles)
        .map(|p| {
            let mut rng = stream(cfg.seed, DOMAIN_INIT, 0, p as u64);
            let position: Vec<u32> = specs
                .iter()
                .map(|spec| match spec {
                    VariableSpec::Binary => rng.random_range(0..=1),
                    VariableSpec::Selective { thresholds } => {
                        rng.random_range(1..=thresholds.len() as u32)
                    }
                })
                .collect();
            let velocity = specs.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
            Particle {
                pbest_position: position.clone(),
                position,
                velocity,
                pbest_objective: cfg.penalty,
                pbest_feasible: false,
            }
        })
        .collect();

    let mut record = BestRecord {
        gbest_position: particles[0].position.clone(),
        gbest_objective: cfg.penalty,
        objective_history: Vec::with_capacity(cfg.it_max as usize),
        feasible_found: false,
    };

    let evals = evaluate_all(&problem, &particles, cfg);
    for (p, &(obj, feas)) in particles.iter_mut().zip(&evals) {
        p.pbest_objective = obj;
        p.pbest_feasible = feas;
        if improves((obj, feas), (record.gbest_objective, record.feasible_found)) {
            record.gbest_objective = obj;
            record.feasible_found = feas;
            record.gbest_position = p.position.clone();
        }
    }

    for it in 1..=cfg.it_max {
        let w = inertia(it, cfg);
        for (pi, particle) in particles.iter_mut().enumerate() {
            let mut rng = stream(cfg.seed, DOMAIN_UPDATE, it as u64, pi as u64);
            for (k, spec) in specs.iter().enumerate() {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = velocity_update(
                    particle.velocity[k],
                    spec.normalized(particle.position[k]),
                    spec.normalized(particle.pbest_position[k]),
                    spec.normalized(record.gbest_position[k]),
                    w,
                    r1,
                    r2,
                    cfg,
                );
                particle.velocity[k] = v;
                let draw: f64 = rng.random();
                particle.position[k] = match spec {
                    VariableSpec::Binary => binary_position_update(v, draw),
                    sel => selective_position_update(v, sel, draw),
                };
            }
        }

        let evals = evaluate_all(&problem, &particles, cfg);
        for (p, &(obj, feas)) in particles.iter_mut().zip(&evals) {
            if improves((obj, feas), (p.pbest_objective, p.pbest_feasible)) {
                p.pbest_objective = obj;
                p.pbest_feasible = feas;
                p.pbest_position = p.position.clone();
            }
        }
        for p in &particles {
            if improves(
                (p.pbest_objective, p.pbest_feasible),
                (record.gbest_objective, record.feasible_found),
            ) {
                record.gbest_objective = p.pbest_objective;
                record.feasible_found = p.pbest_feasible;
                record.gbest_position = p.pbest_position.clone();
            }
        }
        record.objective_history.push(record.gbest_objective);
    }

    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(n: usize, it: u32, seed: u64) -> SwarmConfig {
        SwarmConfig { n_particles: n, it_max: it, seed, ..SwarmConfig::default() }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(2.0), 0.880797, max_relative = 1e-6);
        assert!(sigmoid(40.0) > 0.999_999_9);
        assert!(sigmoid(-40.0) < 1e-9);
    }

    #[test]
    fn inertia_decays_linearly() {
        let c = cfg(10, 200, 0);
        assert_relative_eq!(inertia(0, &c), 0.9, max_relative = 1e-12);
        assert_relative_eq!(inertia(200, &c), 0.4, max_relative = 1e-12);
        assert_relative_eq!(inertia(100, &c), 0.65, max_relative = 1e-12);
    }

    #[test]
    fn velocity_update_examples() {
        let c = cfg(10, 100, 0);
        // zero attraction keeps w·v
        assert_relative_eq!(velocity_update(1.5, 0.7, 0.7, 0.7, 0.8, 0.3, 0.9, &c), 1.2, max_relative = 1e-12);
        // full pull toward pbest = gbest = 1 from 0 gives c1 + c2 = 4
        assert_relative_eq!(velocity_update(0.0, 0.0, 1.0, 1.0, 0.5, 1.0, 1.0, &c), 4.0, max_relative = 1e-12);
        // clamp at ±v_max
        assert_eq!(velocity_update(10.0, 0.0, 0.0, 0.0, 0.9, 1.0, 1.0, &c), 6.0);
        assert_eq!(velocity_update(-10.0, 0.0, 0.0, 0.0, 0.9, 1.0, 1.0, &c), -6.0);
    }

    proptest! {
        #[test]
        fn velocity_stays_clamped(v in -50.0f64..50.0, s in 0.0f64..1.0, pb in 0.0f64..1.0,
                                  gb in 0.0f64..1.0, w in 0.0f64..1.0, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
            let c = SwarmConfig::default();
            let out = velocity_update(v, s, pb, gb, w, r1, r2, &c);
            prop_assert!(out.abs() <= c.v_max);
        }

        // Criterion: at fixed rd, the selected index never grows when the
        // velocity (hence sigmoid) grows.
        #[test]
        fn selective_index_monotone_in_velocity(v1 in -8.0f64..8.0, v2 in -8.0f64..8.0, rd in 0.0f64..1.0) {
            for n in [2u32, 4, 5] {
                let spec = VariableSpec::selective(n);
                let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
                let idx_lo = selective_position_update(lo, &spec, rd);
                let idx_hi = selective_position_update(hi, &spec, rd);
                prop_assert!(idx_hi <= idx_lo);
                prop_assert!((1..=n).contains(&idx_lo) && (1..=n).contains(&idx_hi));
            }
        }
    }

    #[test]
    fn binary_rule_examples() {
        assert_eq!(binary_position_update(38.0, 0.999_999), 1);
        assert_eq!(binary_position_update(-38.0, 0.000_001), 0);
        assert_eq!(binary_position_update(0.0, 0.3), 1);
        assert_eq!(binary_position_update(0.0, 0.5), 0);
    }

    #[test]
    fn selective_rule_examples() {
        let spec = VariableSpec::Selective { thresholds: vec![0.4, 0.2, 0.0, -0.2, -0.4] };
        // sigmoid(v) = 0.95, rd = 0.5: first condition 0.5 + 0.4 < 0.95 holds
        let v95 = (0.95f64 / 0.05).ln();
        assert_eq!(selective_position_update(v95, &spec, 0.5), 1);
        // sigmoid = 0.5: first satisfied condition is 0.5 − 0.2 < 0.5
        assert_eq!(selective_position_update(0.0, &spec, 0.5), 4);
        // sigmoid = 0.05, rd = 0.9: nothing holds, fall back to n
        let v05 = (0.05f64 / 0.95).ln();
        assert_eq!(selective_position_update(v05, &spec, 0.9), 5);
    }

    #[test]
    fn default_thresholds_span_the_range() {
        assert_eq!(
            VariableSpec::selective(5),
            VariableSpec::Selective { thresholds: vec![0.5, 0.25, 0.0, -0.25, -0.5] }
        );
        assert_eq!(VariableSpec::selective(2), VariableSpec::Selective { thresholds: vec![0.5, -0.5] });
    }

    #[test]
    fn single_bit_minimum_is_found_quickly() {
        for seed in 0..6 {
            let rec = run(
                |s| Objective::Feasible(s[0] as f64),
                &[VariableSpec::Binary],
                &cfg(4, 5, seed),
            );
            assert_eq!(rec.gbest_position, vec![0], "seed {seed}");
            assert_eq!(rec.gbest_objective, 0.0);
            assert!(rec.feasible_found);
        }
    }

    #[test]
    fn selective_minimum_is_found() {
        let rec = run(
            |s| Objective::Feasible(s[0] as f64),
            &[VariableSpec::selective(4)],
            &cfg(6, 20, 1),
        );
        assert_eq!(rec.gbest_position, vec![1]);
        assert_eq!(rec.gbest_objective, 1.0);
    }

    #[test]
    fn all_infeasible_is_flagged() {
        let c = cfg(5, 10, 3);
        let rec = run(|_| Objective::Infeasible, &[VariableSpec::Binary, VariableSpec::Binary], &c);
        assert!(!rec.feasible_found);
        assert_eq!(rec.gbest_objective, c.penalty);
        assert!(rec.objective_history.iter().all(|&h| h == c.penalty));
    }

    #[test]
    fn infeasible_never_outranks_feasible() {
        // Feasibility requires bit 0 set; the infeasible half would score
        // better if it were ever admitted.
        let rec = run(
            |s| {
                if s[0] == 1 {
                    Objective::Feasible(1.0 + s[1..].iter().sum::<u32>() as f64)
                } else {
                    Objective::Infeasible
                }
            },
            &vec![VariableSpec::Binary; 3],
            &cfg(8, 30, 5),
        );
        assert!(rec.feasible_found);
        assert_eq!(rec.gbest_position[0], 1);
        assert_eq!(rec.gbest_objective, 1.0);
    }

    #[test]
    fn history_is_non_increasing_and_sized() {
        let specs: Vec<VariableSpec> = (0..12)
            .map(|k| if k % 2 == 0 { VariableSpec::Binary } else { VariableSpec::selective(5) })
            .collect();
        // Bumpy but deterministic objective over the mixed domain.
        let rec = run(
            |s| {
                let x = s.iter().enumerate().fold(0u64, |acc, (i, &v)| {
                    acc.wrapping_mul(31).wrapping_add((v as u64) << (i % 7))
                });
                Objective::Feasible((x % 1009) as f64)
            },
            &specs,
            &cfg(10, 40, 9),
        );
        assert_eq!(rec.objective_history.len(), 40);
        assert!(rec.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*rec.objective_history.last().unwrap(), rec.gbest_objective);
    }

    #[test]
    fn identical_seeds_reproduce_the_record() {
        let specs = vec![VariableSpec::selective(5), VariableSpec::Binary, VariableSpec::selective(3)];
        let problem = |s: &[u32]| Objective::Feasible(s.iter().map(|&v| v as f64).sum::<f64>());
        let a = run(problem, &specs, &cfg(12, 25, 42));
        let b = run(problem, &specs, &cfg(12, 25, 42));
        assert_eq!(a, b);
    }
}
