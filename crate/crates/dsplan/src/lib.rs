//! Radial distribution-system expansion planning.
//!
//! Given a radial feeder, a conductor catalog, a capacitor catalog and a
//! distributed-generation unit type, this crate searches for the plan —
//! conductor size per section, capacitor size per bus, DG on/off per bus —
//! that minimizes a weighted sum of conductor capital and the present cost
//! of energy losses over a multi-year load-growth horizon, subject to
//! voltage limits, conductor ampacities and equipment budgets.
//!
//! Module map:
//!
//! * [`netmodel`] — case files, validation, radial topology and the
//!   per-unit conversion.
//! * [`powerflow`] — backward/forward sweep load flow with an independent
//!   nodal-balance residual check.
//! * [`econ`] — capital, loss-cost and voltage-profile figures.
//! * [`bspso`] — the binary/selective particle-swarm engine.
//! * [`planner`] — design encoding, horizon evaluation, optimization,
//!   ω-sweep and a brute-force reference search.
//! * [`cli`] — the `dsplan` command-line tool.

pub mod bspso;
pub mod cli;
pub mod econ;
pub mod netmodel;
pub mod planner;
pub mod powerflow;
