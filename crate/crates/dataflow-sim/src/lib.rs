//! Continuum and lattice models of data flowing through a pipeline of
//! processing stages shared by a ring of processors.
//!
//! The state is a density `rho(t, x, z)` over processors `x` in `[0, 1)`
//! (periodic) and stages `z` in `[0, 1]`. Data enters at `z = 0` and moves up
//! the stage axis at a rate throttled by the local load and by how far a
//! processor has drifted from its neighbours.
//!
//! - [`flux`]: throttling functions and the flux `Phi(rho, sigma)`.
//! - [`solver`]: finite-volume solver for the continuum model.
//! - [`micro`]: the lattice model it approximates.
//! - [`front`]: fronts between a loaded region and empty stages.
//! - [`control`]: processor-rate policies and the quantities that compare them.
//! - [`scenario`]: configuration files, presets and output artifacts.
//!
//! ```
//! use dataflow_sim::{Grid, MacroSolver, ModelParams, SolverOptions};
//!
//! let grid = Grid::square(40)?;
//! let params = ModelParams::new(0.8, 0.5)?;
//! let solver = MacroSolver::new(grid, params, 0.5, SolverOptions::default())?;
//! let state = solver.initial_state(&|_, z| if z < 0.2 { 0.5 } else { 0.0 })?;
//! let out = solver.run(state, &[1.0])?;
//! assert_eq!(out.snapshots[0].t, 1.0);
//! # Ok::<(), dataflow_sim::Error>(())
//! ```

pub mod control;
pub mod error;
pub mod flux;
pub mod front;
pub mod grid;
pub mod io;
pub mod micro;
pub mod scenario;
pub mod solver;

pub use control::{PolicyReport, PolicySpec};
pub use error::{Error, Result};
pub use flux::{ModelParams, RateField, Throttle};
pub use front::{FrontProfile, FrontShape};
pub use grid::Grid;
pub use micro::MicroState;
pub use scenario::ScenarioConfig;
pub use solver::{FieldState, MacroSolver, RunOutput, Scheme, SolverOptions, StepReport};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/throttling.md")]
    pub mod throttling {}
    #[doc = include_str!("../../../book/src/solver.md")]
    pub mod solver {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    pub mod lattice {}
    #[doc = include_str!("../../../book/src/fronts.md")]
    pub mod fronts {}
    #[doc = include_str!("../../../book/src/control.md")]
    pub mod control {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
}
