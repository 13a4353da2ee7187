//! Finite-volume solver for the macroscopic density `R` and its auxiliary
//! field `S` on a [`Grid`].
//!
//! Rows `j = 0` and `j = nz - 1` are boundary rows: the bottom row holds the
//! inflow density and the top row copies its neighbour. Everything else is
//! advanced by a conservative flux difference in `z`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{ModelParams, Throttle};
use crate::grid::Grid;

/// Threshold above which density in the last interior row counts as having
/// reached the top of the stage axis.
pub const TOP_ROW_THRESHOLD: f64 = 1e-6;

/// Densities may dip this far below zero before a step is rejected.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Multiple of the initial peak density at which a run is declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Cell averages at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    /// Density `R[[i, j]]`.
    pub density: Array2<f64>,
    /// Auxiliary field `S[[i, j]]`, the `x`-derivative of the density
    /// integrated from the top of the column.
    pub sigma: Array2<f64>,
    pub t: f64,
    pub step_count: u64,
    /// Reference peak density for the divergence guard.
    pub peak: f64,
}

impl FieldState {
    pub fn new(density: Array2<f64>, sigma: Array2<f64>, t: f64) -> Self {
        let peak = max_abs(&density);
        FieldState {
            density,
            sigma,
            t,
            step_count: 0,
            peak,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        FieldState::new(
            Array2::zeros((grid.nx, grid.nz)),
            Array2::zeros((grid.nx, grid.nz)),
            0.0,
        )
    }

    /// Total mass `sum R dx dz`.
    pub fn mass(&self, grid: &Grid) -> f64 {
        self.density.sum() * grid.cell_area()
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

fn sample(rho0: &dyn Fn(f64, f64) -> f64, x: f64, z: f64) -> Result<f64> {
    let v = rho0(x, z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!(
            "initial density is {v} at ({x}, {z})"
        )))
    }
}

/// Cell averages of `rho0` by tensor three-point Gauss quadrature.
pub fn init_density(rho0: &dyn Fn(f64, f64) -> f64, grid: &Grid) -> Result<Array2<f64>> {
    let mut r = Array2::zeros((grid.nx, grid.nz));
    for ((i, j), cell) in r.indexed_iter_mut() {
        let (xc, zc) = (grid.x(i), grid.z(j));
        let mut acc = 0.0;
        for (gx, wx) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            for (gz, wz) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let x = xc + 0.5 * gx * grid.dx;
                let z = zc + 0.5 * gz * grid.dz;
                acc += wx * wz * sample(rho0, x, z)?;
            }
        }
        *cell = acc;
    }
    Ok(r)
}

/// Initial `S` from point samples of `rho0` on the vertical cell edges.
///
/// `S[[i, j]] = (1/dx) sum_{l >= j} [rho0(x_i + dx/2, z_l) - rho0(x_i - dx/2, z_l)] dz`.
pub fn init_sigma(rho0: &dyn Fn(f64, f64) -> f64, grid: &Grid) -> Result<Array2<f64>> {
    let mut s = Array2::zeros((grid.nx, grid.nz));
    for i in 0..grid.nx {
        let (xr, xl) = (grid.x(i) + 0.5 * grid.dx, grid.x(i) - 0.5 * grid.dx);
        let mut acc = 0.0;
        for j in (0..grid.nz).rev() {
            let z = grid.z(j);
            acc += (sample(rho0, xr, z)? - sample(rho0, xl, z)?) * grid.dz / grid.dx;
            s[[i, j]] = acc;
        }
    }
    Ok(s)
}

/// Centred recursion from a zero top row:
/// `S[[i, j]] = dz/(2 dx) (R[[i+1, j]] - R[[i-1, j]]) + S[[i, j+1]]`.
pub fn sigma_update(density: &Array2<f64>, grid: &Grid) -> Array2<f64> {
    let mut s = Array2::zeros(density.raw_dim());
    let c = grid.dz / (2.0 * grid.dx);
    for i in 0..grid.nx {
        let (l, r) = (grid.left(i), grid.right(i));
        for j in (0..grid.nz - 1).rev() {
            s[[i, j]] = c * (density[[r, j]] - density[[l, j]]) + s[[i, j + 1]];
        }
    }
    s
}

/// One-sided analogue of [`sigma_update`] living on the edge between
/// columns `i` and `i + 1`: `E[[i, j]] = dz/dx (R[[i+1, j]] - R[[i, j]]) + E[[i, j+1]]`.
pub fn edge_sigma(density: &Array2<f64>, grid: &Grid) -> Array2<f64> {
    let mut e = Array2::zeros(density.raw_dim());
    let c = grid.dz / grid.dx;
    for i in 0..grid.nx {
        let r = grid.right(i);
        for j in (0..grid.nz - 1).rev() {
            e[[i, j]] = c * (density[[r, j]] - density[[i, j]]) + e[[i, j + 1]];
        }
    }
    e
}

/// Lax-Friedrichs flux between a lower and an upper cell of the same column.
#[allow(clippy::too_many_arguments)]
pub fn numerical_flux(
    r_lo: f64,
    s_lo: f64,
    r_hi: f64,
    s_hi: f64,
    a: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<f64> {
    let lo = crate::flux::flux_phi(r_lo, s_lo, alpha, params)?;
    let hi = crate::flux::flux_phi(r_hi, s_hi, alpha, params)?;
    Ok(0.5 * (hi + lo - a * (r_hi - r_lo)))
}

fn max_rate(params: &ModelParams, grid: &Grid, t: f64) -> f64 {
    (0..grid.nx)
        .map(|i| params.alpha.at(t, grid.x(i)))
        .fold(0.0, f64::max)
}

/// Largest `dphi_drho` over the cells, with `S` taken from the state.
pub fn max_wave_speed(state: &FieldState, params: &ModelParams, grid: &Grid) -> f64 {
    let th = params.throttle();
    let mut a = 0.0_f64;
    for i in 0..grid.nx {
        let alpha = params.alpha.at(state.t, grid.x(i));
        for j in 0..grid.nz {
            a = a.max(
                th.dphi_drho(state.density[[i, j]], state.sigma[[i, j]], alpha)
                    .abs(),
            );
        }
    }
    a
}

/// `dz / a` with `a` from [`max_wave_speed`], or `dz rho_star / max alpha`
/// when nothing in the domain can move.
pub fn adaptive_dt(state: &FieldState, params: &ModelParams, grid: &Grid) -> f64 {
    let a = max_wave_speed(state, params, grid);
    if a > 0.0 {
        grid.dz / a
    } else {
        grid.dz * params.rho_star / max_rate(params, grid, state.t)
    }
}

/// Spatial discretisation used by [`MacroSolver`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Upwind flux in `z`; the throttle sees the one-sided sums [`edge_sigma`]
    /// towards each neighbour. Monotone up to Courant number 1.
    #[default]
    Upwind,
    /// Lax-Friedrichs flux with the global wave speed, centred `S` and a
    /// quarter-weight smoothing in `x`. Stable up to Courant number 1/2.
    Relaxation,
}

impl Scheme {
    pub fn max_courant(self) -> f64 {
        match self {
            Scheme::Upwind => 1.0,
            Scheme::Relaxation => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Fraction of `dz / a` taken per step.
    pub courant: f64,
}

impl SolverOptions {
    /// Largest stable Courant number for `scheme`.
    pub fn for_scheme(scheme: Scheme) -> Self {
        SolverOptions {
            scheme,
            courant: scheme.max_courant(),
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions::for_scheme(Scheme::default())
    }
}

/// Mass bookkeeping for one step. All quantities are masses (density times area).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepReport {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub wave_speed: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    /// Through the face above the inflow row.
    pub inflow: f64,
    /// Through the face below the top row.
    pub outflow: f64,
    /// Mass added by overwriting the two boundary rows.
    pub boundary: f64,
}

impl StepReport {
    /// `mass_after - mass_before - (inflow - outflow) - boundary`.
    pub fn residual(&self) -> f64 {
        self.mass_after - self.mass_before - (self.inflow - self.outflow) - self.boundary
    }

    pub fn relative_residual(&self) -> f64 {
        let scale = [
            self.mass_before,
            self.mass_after,
            self.inflow,
            self.outflow,
            self.boundary,
        ]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / scale
        }
    }
}

/// Result of [`MacroSolver::run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// One state per requested output time, in ascending time order.
    pub snapshots: Vec<FieldState>,
    pub steps: Vec<StepReport>,
    /// First time the last interior row exceeded [`TOP_ROW_THRESHOLD`].
    pub top_reached: Option<f64>,
}

impl RunOutput {
    pub fn dt_history(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.dt).collect()
    }
}

/// Time stepper bound to a grid, parameters and inflow density.
#[derive(Clone, Debug)]
pub struct MacroSolver {
    grid: Grid,
    params: ModelParams,
    inflow: f64,
    options: SolverOptions,
}

impl MacroSolver {
    pub fn new(
        grid: Grid,
        params: ModelParams,
        inflow: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        params.validate()?;
        if !(inflow.is_finite() && inflow >= 0.0) {
            return Err(Error::Config(format!(
                "inflow density must be non-negative, got {inflow}"
            )));
        }
        let limit = options.scheme.max_courant();
        if !(options.courant > 0.0 && options.courant <= limit) {
            return Err(Error::Config(format!(
                "courant number {} outside (0, {limit}] for the {:?} scheme",
                options.courant, options.scheme
            )));
        }
        Ok(MacroSolver {
            grid,
            params,
            inflow,
            options,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// State at `t = 0` from a density function.
    pub fn initial_state(&self, rho0: &dyn Fn(f64, f64) -> f64) -> Result<FieldState> {
        let density = init_density(rho0, &self.grid)?;
        let sigma = init_sigma(rho0, &self.grid)?;
        Ok(self.state_from(density, sigma, 0.0))
    }

    /// Wraps existing arrays, setting the divergence reference.
    pub fn state_from(&self, density: Array2<f64>, sigma: Array2<f64>, t: f64) -> FieldState {
        let mut s = FieldState::new(density, sigma, t);
        s.peak = s.peak.max(self.inflow);
        s
    }

    /// Advances by one adaptive step.
    pub fn step(&self, state: &mut FieldState) -> Result<StepReport> {
        self.step_capped(state, f64::INFINITY)
    }

    /// Advances by one adaptive step, never past `state.t + cap`.
    pub fn step_capped(&self, state: &mut FieldState, cap: f64) -> Result<StepReport> {
        let g = &self.grid;
        let (nx, nz) = (g.nx, g.nz);
        let th: Throttle = self.params.throttle();
        let alpha: Vec<f64> = (0..nx)
            .map(|i| self.params.alpha.at(state.t, g.x(i)))
            .collect();
        let r = &state.density;

        let mut phi = Array2::zeros((nx, nz));
        let mut a = 0.0_f64;
        match self.options.scheme {
            Scheme::Upwind => {
                let e = edge_sigma(r, g);
                for i in 0..nx {
                    let l = g.left(i);
                    for j in 0..nz {
                        let (rho, fwd, bwd) = (r[[i, j]], e[[i, j]], e[[l, j]]);
                        phi[[i, j]] = th.phi_split(rho, fwd, bwd, alpha[i]);
                        a = a.max(th.split_speed(rho, fwd, bwd, alpha[i]));
                    }
                }
            }
            Scheme::Relaxation => {
                for i in 0..nx {
                    for j in 0..nz {
                        let (rho, s) = (r[[i, j]], state.sigma[[i, j]]);
                        phi[[i, j]] = th.phi(rho, s, alpha[i]);
                        a = a.max(th.dphi_drho(rho, s, alpha[i]));
                    }
                }
            }
        }

        let mut dt = if a > 0.0 {
            self.options.courant * g.dz / a
        } else {
            g.dz * self.params.rho_star / alpha.iter().copied().fold(0.0, f64::max)
        };
        dt = dt.min(cap);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Divergence {
                step: state.step_count,
                t: state.t,
                detail: format!("no admissible time step (dt = {dt}, wave speed {a})"),
            });
        }
        let lambda = dt / g.dz;

        // face f sits between rows f and f + 1
        let mut face = Array2::zeros((nx, nz - 1));
        match self.options.scheme {
            Scheme::Upwind => {
                for ((i, f), v) in face.indexed_iter_mut() {
                    *v = phi[[i, f]];
                }
            }
            Scheme::Relaxation => {
                for ((i, f), v) in face.indexed_iter_mut() {
                    *v = 0.5 * (phi[[i, f + 1]] + phi[[i, f]] - a * (r[[i, f + 1]] - r[[i, f]]));
                }
            }
        }
        let smoothing = match self.options.scheme {
            Scheme::Upwind => 0.0,
            Scheme::Relaxation => 0.25,
        };

        let mut next = r.clone();
        for i in 0..nx {
            let (l, rt) = (g.left(i), g.right(i));
            for j in 1..nz - 1 {
                let mut v = r[[i, j]] - lambda * (face[[i, j]] - face[[i, j - 1]]);
                if smoothing != 0.0 {
                    v += smoothing * (r[[rt, j]] - 2.0 * r[[i, j]] + r[[l, j]]);
                }
                next[[i, j]] = v;
            }
            next[[i, 0]] = self.inflow;
            next[[i, nz - 1]] = next[[i, nz - 2]];
        }

        let area = g.cell_area();
        let mut boundary = 0.0;
        let (mut inflow, mut outflow) = (0.0, 0.0);
        for i in 0..nx {
            boundary += (next[[i, 0]] - r[[i, 0]]) + (next[[i, nz - 1]] - r[[i, nz - 1]]);
            inflow += face[[i, 0]];
            outflow += face[[i, nz - 2]];
        }
        let report = StepReport {
            t: state.t + dt,
            dt,
            wave_speed: a,
            mass_before: r.sum() * area,
            mass_after: next.sum() * area,
            inflow: inflow * dt * g.dx,
            outflow: outflow * dt * g.dx,
            boundary: boundary * area,
        };

        self.check(&next, state)?;
        state.sigma = sigma_update(&next, g);
        state.density = next;
        state.t = report.t;
        state.step_count += 1;
        Ok(report)
    }

    fn check(&self, next: &Array2<f64>, state: &FieldState) -> Result<()> {
        let bound = DIVERGENCE_FACTOR * state.peak.max(self.inflow);
        let mut worst = (0.0_f64, 0.0_f64);
        let mut bad = None;
        Zip::indexed(next).for_each(|(i, j), &v| {
            if !v.is_finite() && bad.is_none() {
                bad = Some((i, j, v));
            }
            worst.0 = worst.0.max(v.abs());
            worst.1 = worst.1.min(v);
        });
        if let Some((i, j, v)) = bad {
            return Err(Error::Divergence {
                step: state.step_count + 1,
                t: state.t,
                detail: format!("density {v} in cell ({i}, {j})"),
            });
        }
        if bound > 0.0 && worst.0 > bound {
            return Err(Error::Divergence {
                step: state.step_count + 1,
                t: state.t,
                detail: format!("max |R| = {} exceeds {bound}", worst.0),
            });
        }
        if worst.1 < -NEGATIVE_TOLERANCE {
            return Err(Error::Stability {
                t: state.t,
                detail: format!("density fell to {}", worst.1),
            });
        }
        Ok(())
    }

    /// Steps until every time in `output_times` has been hit exactly,
    /// calling `observe` on the initial state and after every step.
    pub fn run_observed(
        &self,
        mut state: FieldState,
        output_times: &[f64],
        mut observe: impl FnMut(&FieldState, Option<&StepReport>),
    ) -> Result<RunOutput> {
        let mut times = output_times.to_vec();
        if let Some(bad) = times.iter().find(|t| !t.is_finite() || **t < state.t) {
            return Err(Error::Config(format!(
                "output time {bad} precedes the initial state"
            )));
        }
        times.sort_by(f64::total_cmp);

        let mut out = RunOutput {
            snapshots: Vec::with_capacity(times.len()),
            steps: Vec::new(),
            top_reached: None,
        };
        observe(&state, None);
        for target in times {
            while state.t < target {
                let cap = target - state.t;
                let report = self.step_capped(&mut state, cap)?;
                if (target - state.t).abs() <= 1e-12 * target.abs().max(1.0) {
                    state.t = target;
                }
                if out.top_reached.is_none() && self.top_row_occupied(&state) {
                    out.top_reached = Some(state.t);
                }
                observe(&state, Some(&report));
                out.steps.push(report);
            }
            out.snapshots.push(state.clone());
        }
        Ok(out)
    }

    pub fn run(&self, state: FieldState, output_times: &[f64]) -> Result<RunOutput> {
        self.run_observed(state, output_times, |_, _| {})
    }

    fn top_row_occupied(&self, state: &FieldState) -> bool {
        let j = self.grid.nz - 2;
        state
            .density
            .column(j)
            .iter()
            .any(|&v| v > TOP_ROW_THRESHOLD)
    }
}
