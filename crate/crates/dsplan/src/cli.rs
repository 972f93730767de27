//! The `dsplan` command-line tool.
//!
//! Subcommands: `validate` (case checks), `pf` (one load-flow solve with
//! CSV voltage/current profiles), `plan` (swarm optimization, writes
//! `result.json` and a readable `table.txt`) and `sweep` (conductor plans
//! across a grid of ω weights, writes `sweep.csv`).
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input,
//! 3 finished but found no feasible plan.

use crate::bspso::SwarmConfig;
use crate::netmodel::{
    builtin_case_26bus, parse_case, radial_topology, to_per_unit, NetworkCase, Topology,
};
use crate::planner::{
    self, Design, DesignIds, ResultFile, Scenario, ScenarioMode,
};
use crate::powerflow;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_FEASIBLE: i32 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    NoFeasible(String),
}

#[derive(Parser, Debug)]
#[command(
    name = "dsplan",
    version,
    about = "Radial distribution-system expansion planning",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a case file and run every validity check
    Validate(ValidateArgs),
    /// Solve the load flow for one design and year, writing CSV profiles
    Pf(PfArgs),
    /// Optimize a planning scenario with the particle swarm
    Plan(PlanArgs),
    /// Optimize conductor sizing across a grid of objective weights
    Sweep(SweepArgs),
}

/// The case argument, accepted positionally or as `--case`. The value is
/// a file path or `builtin:26bus`.
#[derive(Args, Debug)]
struct CaseArg {
    /// Case file path, or builtin:26bus
    #[arg(value_name = "CASE")]
    case_pos: Option<String>,
    /// Case file path, or builtin:26bus (alternative to the positional form)
    #[arg(long = "case", value_name = "CASE")]
    case_flag: Option<String>,
}

impl CaseArg {
    fn resolve(&self) -> Result<&str, Failure> {
        match (&self.case_pos, &self.case_flag) {
            (Some(p), None) => Ok(p),
            (None, Some(f)) => Ok(f),
            (Some(_), Some(_)) => Err(Failure::Usage(
                "give the case either positionally or with --case, not both".into(),
            )),
            (None, None) => {
                Err(Failure::Usage("no case given; pass a file path or builtin:26bus".into()))
            }
        }
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    case: CaseArg,
}

#[derive(Args, Debug)]
struct PfArgs {
    #[command(flatten)]
    case: CaseArg,
    /// Design to solve: a result.json from `plan` (its best design is
    /// used). Default: largest conductor everywhere, no capacitors, no DG.
    #[arg(long, value_name = "FILE")]
    design: Option<PathBuf>,
    /// Horizon year for the demand level (0 = base year)
    #[arg(long, default_value_t = 0)]
    year: u32,
    /// Directory for voltages.csv and currents.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    /// Conductor sizing only
    Conductors,
    /// Conductors plus capacitor and DG placement
    Full,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Conductors)]
    scenario: ScenarioArg,
    /// Conductor-capital weight in the objective, 0..=1
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    particles: usize,
    #[arg(long, default_value_t = 200)]
    iters: u32,
    /// Directory for result.json and table.txt
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    case: CaseArg,
    /// ω grid as START:STEP:END, all within 0..=1
    #[arg(long = "omega-grid", value_name = "GRID", default_value = "0:0.1:1")]
    omega_grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    particles: usize,
    #[arg(long, default_value_t = 200)]
    iters: u32,
    /// Directory for sweep.csv
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// Run the tool against an explicit argument vector (index 0 is the
/// program name) and return the process exit code. Factored out of `main`
/// so tests can drive it directly.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::NoFeasible(msg)) => {
            eprintln!("{msg}");
            EXIT_NO_FEASIBLE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Pf(args) => cmd_pf(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn load_case(spec: &str) -> Result<NetworkCase, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return match name {
            "26bus" => Ok(builtin_case_26bus()),
            other => Err(Failure::Input(format!(
                "unknown builtin case {other:?}; available: builtin:26bus"
            ))),
        };
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| Failure::Input(format!("cannot read {spec}: {e}")))?;
    parse_case(&text).map_err(|e| Failure::Input(format!("{spec}: {e}")))
}

fn topology(case: &NetworkCase) -> Result<Topology, Failure> {
    radial_topology(case).map_err(|e| Failure::Input(e.to_string()))
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let case = load_case(args.case.resolve()?)?;
    // parse_case has already run the full validation, radiality included.
    println!("{} buses, {} sections, radial: ok", case.buses.len(), case.sections.len());
    Ok(())
}

/// Every section on the largest conductor, no capacitors, no DG.
fn baseline_design(case: &NetworkCase, topo: &Topology) -> Design {
    let none_cap = case.capacitor_catalog.len() as u32;
    let n_cand = planner::candidate_buses(case, topo).len();
    Design {
        conductor_choice: vec![1; topo.sizable_sections.len()],
        capacitor_choice: vec![none_cap; n_cand],
        dg_flag: vec![0; n_cand],
    }
}

fn load_design(path: &Path, case: &NetworkCase, topo: &Topology) -> Result<Design, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let ids = match ResultFile::from_json(&text) {
        Ok(result) => result.best_design,
        // not a result file; accept a bare design block too
        Err(_) => serde_json::from_str::<DesignIds>(&text)
            .map_err(|e| Failure::Input(format!("{} is neither a result nor a design file: {e}", path.display())))?,
    };
    ids.to_design(case, topo).map_err(|e| Failure::Input(e.to_string()))
}

fn cmd_pf(args: PfArgs) -> Result<(), Failure> {
    let case = load_case(args.case.resolve()?)?;
    let topo = topology(&case)?;
    let pu = to_per_unit(&case);
    if args.year > case.economics.horizon_years {
        return Err(Failure::Usage(format!(
            "year {} is beyond the {}-year horizon",
            args.year, case.economics.horizon_years
        )));
    }
    let design = match &args.design {
        Some(path) => load_design(path, &case, &topo)?,
        None => baseline_design(&case, &topo),
    };
    let sol = powerflow::solve(&case, &pu, &topo, &design, args.year);
    if !sol.converged {
        return Err(Failure::Input(format!(
            "power flow did not converge in {} iterations (residual {:.3e})",
            sol.iterations, sol.max_mismatch
        )));
    }

    let mut voltages = String::from("bus,u_pu,delta_rad\n");
    for (b, bus) in case.buses.iter().enumerate() {
        writeln!(voltages, "{},{},{}", bus.id, sol.u[b], sol.delta[b]).unwrap();
    }
    let v_path = write_out(&args.out, "voltages.csv", &voltages)?;

    let mut currents = String::from("section,i_amp,i_max_amp\n");
    for (k, &s) in topo.sizable_sections.iter().enumerate() {
        let conductor = &case.conductor_catalog[design.conductor_choice[k] as usize - 1];
        writeln!(currents, "{},{},{}", case.sections[s].id, sol.branch_i[k].i_amp, conductor.i_max)
            .unwrap();
    }
    let c_path = write_out(&args.out, "currents.csv", &currents)?;

    let min_u = sol.u.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "year {}: converged in {} iterations, residual {:.3e}",
        args.year, sol.iterations, sol.max_mismatch
    );
    println!("losses {:.3} kW, lowest voltage {:.4} p.u.", sol.ploss_kw, min_u);
    println!("wrote {} and {}", v_path.display(), c_path.display());
    Ok(())
}

fn scenario_of(arg: ScenarioArg, omega: f64) -> Result<Scenario, Failure> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Failure::Usage(format!("omega {omega} outside [0, 1]")));
    }
    let base = match arg {
        ScenarioArg::Conductors => Scenario::conductors_only(),
        ScenarioArg::Full => Scenario::full(),
    };
    Ok(base.with_omega(omega))
}

fn swarm_config(seed: u64, particles: usize, iters: u32) -> Result<SwarmConfig, Failure> {
    if particles == 0 || iters == 0 {
        return Err(Failure::Usage("particles and iters must be at least 1".into()));
    }
    Ok(SwarmConfig { n_particles: particles, it_max: iters, seed, ..SwarmConfig::default() })
}

/// Readable summary of a plan, written next to result.json.
fn plan_table(file: &ResultFile, case: &NetworkCase) -> String {
    let mut t = String::new();
    let scenario = match file.scenario {
        ScenarioMode::ConductorsOnly => "conductors only",
        ScenarioMode::Full => "conductors + capacitors + DG",
    };
    writeln!(t, "scenario: {scenario} (omega {})", file.omega).unwrap();
    writeln!(t, "swarm: {} particles, {} iterations, seed {}", file.particles, file.iterations, file.seed).unwrap();
    writeln!(t, "feasible: {}", if file.feasible { "yes" } else { "no" }).unwrap();
    writeln!(t).unwrap();
    writeln!(t, "section  conductor").unwrap();
    for entry in &file.best_design.conductors {
        writeln!(t, "{:>7}  {:>9}", entry.section, entry.conductor).unwrap();
    }
    let caps: Vec<_> = file
        .best_design
        .capacitors
        .iter()
        .filter(|c| case.capacitor_catalog[c.capacitor as usize - 1].q_kvar > 0.0)
        .collect();
    writeln!(t).unwrap();
    if caps.is_empty() {
        writeln!(t, "capacitors: none").unwrap();
    } else {
        writeln!(t, "bus  capacitor  kvar").unwrap();
        for c in caps {
            let q = case.capacitor_catalog[c.capacitor as usize - 1].q_kvar;
            writeln!(t, "{:>3}  {:>9}  {:>4}", c.bus, c.capacitor, q).unwrap();
        }
    }
    let dg: Vec<_> = file.best_design.dg.iter().filter(|d| d.dg == 1).collect();
    if dg.is_empty() {
        writeln!(t, "dg units: none").unwrap();
    } else {
        let buses = dg.iter().map(|d| d.bus.to_string()).collect::<Vec<_>>().join(", ");
        writeln!(t, "dg units at buses: {buses}").unwrap();
    }
    writeln!(t).unwrap();
    writeln!(t, "conductor capital          {:>14.2}", file.costs.cond_cost).unwrap();
    writeln!(t, "loss cost over horizon     {:>14.2}", file.costs.loss_cost).unwrap();
    writeln!(t, "capacitor capital          {:>14.2}", file.costs.cap_cost).unwrap();
    writeln!(t, "dg capital                 {:>14.2}", file.costs.dg_cost).unwrap();
    writeln!(t, "weighted objective         {:>14.2}", file.costs.total_objective).unwrap();
    writeln!(t, "sum of yearly peak losses  {:>11.2} kW", file.costs.total_ploss_kw).unwrap();
    writeln!(t, "voltage index (final year) {:>14.5}", file.u_ind).unwrap();
    if !file.violations.is_empty() {
        writeln!(t).unwrap();
        writeln!(t, "violations:").unwrap();
        for v in &file.violations {
            writeln!(t, "  year {:>2}  {}: {}", v.year, v.kind, v.location).unwrap();
        }
    }
    t
}

fn cmd_plan(args: PlanArgs) -> Result<(), Failure> {
    let case = load_case(args.case.resolve()?)?;
    let topo = topology(&case)?;
    let scenario = scenario_of(args.scenario, args.omega)?;
    let cfg = swarm_config(args.seed, args.particles, args.iters)?;
    let result = planner::optimize(&case, &scenario, &cfg)
        .map_err(|e| Failure::Input(e.to_string()))?;

    let file = ResultFile::new(&result, &case, &topo, &scenario);
    let json_path = write_out(&args.out, "result.json", &file.to_json())?;
    let table = plan_table(&file, &case);
    let table_path = write_out(&args.out, "table.txt", &table)?;

    print!("{table}");
    println!("wrote {} and {}", json_path.display(), table_path.display());
    if !result.report.feasible {
        return Err(Failure::NoFeasible(
            "no feasible plan found; best attempt and its violations are in result.json".into(),
        ));
    }
    Ok(())
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = |msg: String| Failure::Usage(msg);
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad(format!("omega grid {text:?} is not START:STEP:END")));
    }
    let mut nums = [0.0f64; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|e| bad(format!("bad number {part:?} in omega grid: {e}")))?;
    }
    let [start, step, end] = nums;
    if !(start.is_finite() && step.is_finite() && end.is_finite()) {
        return Err(bad("omega grid values must be finite".into()));
    }
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start > end {
        return Err(bad(format!("omega grid {text:?} must satisfy 0 <= start <= end <= 1")));
    }
    if step <= 0.0 {
        return Err(bad("omega grid step must be positive".into()));
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let x = start + step * f64::from(k);
        if x > end + 1e-9 {
            break;
        }
        grid.push(x.min(end));
        k += 1;
    }
    Ok(grid)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let case = load_case(args.case.resolve()?)?;
    let grid = parse_grid(&args.omega_grid)?;
    let cfg = swarm_config(args.seed, args.particles, args.iters)?;
    let sweep = planner::omega_sweep(&case, &cfg, &grid)
        .map_err(|e| Failure::Input(e.to_string()))?;
    let path = write_out(&args.out, "sweep.csv", &sweep.to_csv())?;
    let feasible = sweep.rows.iter().filter(|r| r.feasible).count();
    println!("{} omega values, {feasible} feasible; wrote {}", sweep.rows.len(), path.display());
    if feasible == 0 {
        return Err(Failure::NoFeasible("no omega value produced a feasible plan".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:0.25:1").unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4], 1.0);
        for (a, b) in g.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }

        // a step that does not divide the range still ends within it
        let g = parse_grid("0:0.4:1").unwrap();
        assert_eq!(g.len(), 3);
        assert!(g[2] <= 1.0);

        // accumulated rounding must not drop the endpoint
        let g = parse_grid("0:0.1:1").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);

        assert_eq!(parse_grid("0.5:0.1:0.5").unwrap(), vec![0.5]);

        assert!(matches!(parse_grid("0:0.1").unwrap_err(), Failure::Usage(_)));
        assert!(matches!(parse_grid("a:b:c").unwrap_err(), Failure::Usage(_)));
        assert!(matches!(parse_grid("0:-0.1:1").unwrap_err(), Failure::Usage(_)));
        assert!(matches!(parse_grid("0.8:0.1:0.2").unwrap_err(), Failure::Usage(_)));
        assert!(matches!(parse_grid("0:0.1:1.5").unwrap_err(), Failure::Usage(_)));
    }

    #[test]
    fn case_argument_resolution() {
        let both = CaseArg { case_pos: Some("a".into()), case_flag: Some("b".into()) };
        assert!(matches!(both.resolve().unwrap_err(), Failure::Usage(_)));
        let neither = CaseArg { case_pos: None, case_flag: None };
        assert!(matches!(neither.resolve().unwrap_err(), Failure::Usage(_)));
        let pos = CaseArg { case_pos: Some("a".into()), case_flag: None };
        assert_eq!(pos.resolve().unwrap(), "a");
    }

    #[test]
    fn unknown_builtin_is_an_input_error() {
        assert!(matches!(load_case("builtin:nope").unwrap_err(), Failure::Input(_)));
    }
}
