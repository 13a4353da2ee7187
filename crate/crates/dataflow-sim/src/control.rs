//! Processor-rate policies and the quantities used to compare them.
//!
//! At a fixed stage `z` the comparison tracks
//! - `omega1`: data that has passed stage `z` so far, `int_0^t int Phi dx ds`;
//! - `omega2`: current flow through stage `z`, `int Phi dx`;
//! - `omega3`: accumulated load at stage `z`, `int_0^t int rho dx ds`.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{ModelParams, RateField};
use crate::front::FrontShape;
use crate::grid::Grid;
use crate::solver::{FieldState, MacroSolver, SolverOptions, StepReport};

/// A rule assigning a processing rate to each processor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Every processor runs at `alpha_bar`.
    Constant { alpha_bar: f64 },
    /// Rate proportional to `zeta_max - zeta0(x)`, so processors that start
    /// behind run faster; scaled to have mean `alpha_bar`.
    Priority {
        alpha_bar: f64,
        zeta_max: f64,
        rho_star: f64,
        zeta0: FrontShape,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Constant { .. } => "constant",
            PolicySpec::Priority { .. } => "priority",
        }
    }

    pub fn alpha_bar(&self) -> f64 {
        match self {
            PolicySpec::Constant { alpha_bar } | PolicySpec::Priority { alpha_bar, .. } => {
                *alpha_bar
            }
        }
    }
}

fn check_alpha_bar(alpha_bar: f64) -> Result<()> {
    if alpha_bar.is_finite() && alpha_bar > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "alpha_bar must be positive, got {alpha_bar}"
        )))
    }
}

/// The constant `C_alpha` of a priority policy on the given cell centres.
pub fn priority_scale(spec: &PolicySpec, x_grid: &[f64]) -> Result<Option<f64>> {
    match spec {
        PolicySpec::Constant { alpha_bar } => {
            check_alpha_bar(*alpha_bar)?;
            Ok(None)
        }
        PolicySpec::Priority {
            alpha_bar,
            zeta_max,
            rho_star,
            zeta0,
        } => {
            check_alpha_bar(*alpha_bar)?;
            if x_grid.is_empty() {
                return Err(Error::Config("policy needs at least one cell".into()));
            }
            if !(rho_star.is_finite() && *rho_star > 0.0) {
                return Err(Error::Config(format!(
                    "rho_star must be positive, got {rho_star}"
                )));
            }
            let heights: Vec<f64> = x_grid.iter().map(|&x| zeta0.height(x)).collect();
            let top = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if zeta_max.is_nan() || *zeta_max <= top {
                return Err(Error::Config(format!(
                    "zeta_max = {zeta_max} must exceed the highest initial front point {top}"
                )));
            }
            let mean_gap = heights.iter().map(|h| zeta_max - h).sum::<f64>() / heights.len() as f64;
            Ok(Some(alpha_bar / (rho_star * mean_gap)))
        }
    }
}

/// Rates on the cell centres `x_grid`; their midpoint mean equals `alpha_bar`.
pub fn policy_alpha(spec: &PolicySpec, x_grid: &[f64]) -> Result<Vec<f64>> {
    match (spec, priority_scale(spec, x_grid)?) {
        (
            PolicySpec::Priority {
                zeta_max,
                rho_star,
                zeta0,
                ..
            },
            Some(c),
        ) => Ok(x_grid
            .iter()
            .map(|&x| c * rho_star * (zeta_max - zeta0.height(x)))
            .collect()),
        _ => Ok(vec![spec.alpha_bar(); x_grid.len()]),
    }
}

fn check_stage(z: f64) -> Result<()> {
    if z > 0.0 && z < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "stage z = {z} must lie strictly inside (0, 1)"
        )))
    }
}

/// Current flow through stage `z`: midpoint sum of `Phi(R, S)` on the nearest row.
pub fn omega2(state: &FieldState, z: f64, params: &ModelParams, grid: &Grid) -> Result<f64> {
    check_stage(z)?;
    let j = grid.row_nearest(z);
    let th = params.throttle();
    Ok((0..grid.nx)
        .map(|i| {
            let alpha = params.alpha.at(state.t, grid.x(i));
            th.phi(state.density[[i, j]], state.sigma[[i, j]], alpha)
        })
        .sum::<f64>()
        * grid.dx)
}

/// Midpoint sum of the density on the row nearest `z`.
pub fn row_load(state: &FieldState, z: f64, grid: &Grid) -> Result<f64> {
    check_stage(z)?;
    let j = grid.row_nearest(z);
    Ok(state.density.column(j).sum() * grid.dx)
}

/// Running trapezoid integral, starting at zero.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(Error::Config(format!(
            "{} times for {} values",
            times.len(),
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            let h = times[k] - times[k - 1];
            if h < 0.0 {
                return Err(Error::Config("times must be non-decreasing".into()));
            }
            acc += 0.5 * h * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Cumulative outflow from a history of [`omega2`] values.
pub fn omega1(times: &[f64], flow: &[f64]) -> Result<f64> {
    Ok(cumulative_trapezoid(times, flow)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// Cumulative load from a history of [`row_load`] values.
pub fn omega3(times: &[f64], load: &[f64]) -> Result<f64> {
    Ok(cumulative_trapezoid(times, load)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

/// Quantities at one stage, one entry per recorded time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QoiSeries {
    pub z: f64,
    pub t: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub omega3: Vec<f64>,
}

impl QoiSeries {
    /// Values at `t` by linear interpolation between recorded times.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        let k = self.t.partition_point(|&s| s < t);
        if k == 0 {
            return (self.omega1[0], self.omega2[0], self.omega3[0]);
        }
        if k == self.t.len() {
            let n = k - 1;
            return (self.omega1[n], self.omega2[n], self.omega3[n]);
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        let lerp = |v: &[f64]| v[k - 1] + w * (v[k] - v[k - 1]);
        (lerp(&self.omega1), lerp(&self.omega2), lerp(&self.omega3))
    }
}

/// Collects flow and load at a set of stages after every step.
#[derive(Clone, Debug)]
pub struct QoiRecorder {
    z: Vec<f64>,
    t: Vec<f64>,
    flow: Vec<Vec<f64>>,
    load: Vec<Vec<f64>>,
}

impl QoiRecorder {
    pub fn new(z_list: &[f64]) -> Result<Self> {
        for &z in z_list {
            check_stage(z)?;
        }
        Ok(QoiRecorder {
            z: z_list.to_vec(),
            t: Vec::new(),
            flow: vec![Vec::new(); z_list.len()],
            load: vec![Vec::new(); z_list.len()],
        })
    }

    pub fn record(&mut self, state: &FieldState, params: &ModelParams, grid: &Grid) -> Result<()> {
        self.t.push(state.t);
        for (k, &z) in self.z.iter().enumerate() {
            self.flow[k].push(omega2(state, z, params, grid)?);
            self.load[k].push(row_load(state, z, grid)?);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<QoiSeries>> {
        self.z
            .iter()
            .zip(self.flow)
            .zip(self.load)
            .map(|((&z, flow), load)| {
                Ok(QoiSeries {
                    z,
                    omega1: cumulative_trapezoid(&self.t, &flow)?,
                    omega3: cumulative_trapezoid(&self.t, &load)?,
                    omega2: flow,
                    t: self.t.clone(),
                })
            })
            .collect()
    }
}

/// Shared setup of a policy comparison: front-type initial data over a plateau `params.r`.
#[derive(Clone, Debug)]
pub struct ComparisonSetup {
    pub grid: Grid,
    pub params: ModelParams,
    pub front: FrontShape,
    pub options: SolverOptions,
}

/// One policy's simulation.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub policy: PolicySpec,
    pub alpha: Vec<f64>,
    pub c_alpha: Option<f64>,
    pub series: Vec<QoiSeries>,
    pub snapshots: Vec<FieldState>,
    pub steps: Vec<StepReport>,
    pub top_reached: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PolicyReport {
    pub runs: Vec<PolicyRun>,
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub t: f64,
    pub policy: String,
    pub z: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
}

impl PolicyReport {
    /// All policies on a common time grid of `samples` equally spaced points in `[0, t_end]`.
    pub fn rows(&self, t_end: f64, samples: usize) -> Vec<ReportRow> {
        let samples = samples.max(2);
        let mut rows = Vec::new();
        for k in 0..samples {
            let t = if k + 1 == samples {
                t_end
            } else {
                t_end * k as f64 / (samples - 1) as f64
            };
            for run in &self.runs {
                for s in &run.series {
                    let (omega1, omega2, omega3) = s.at(t);
                    rows.push(ReportRow {
                        t,
                        policy: run.policy.name().to_string(),
                        z: s.z,
                        omega1,
                        omega2,
                        omega3,
                    });
                }
            }
        }
        rows
    }

    pub fn run(&self, name: &str) -> Option<&PolicyRun> {
        self.runs.iter().find(|r| r.policy.name() == name)
    }
}

fn run_policy(
    setup: &ComparisonSetup,
    policy: &PolicySpec,
    z_list: &[f64],
    output_times: &[f64],
) -> Result<PolicyRun> {
    let xs = setup.grid.x_centres();
    let alpha = policy_alpha(policy, &xs)?;
    let c_alpha = priority_scale(policy, &xs)?;
    let params = setup
        .params
        .clone()
        .with_rate(RateField::sampled(alpha.clone()))
        .with_alpha_bar(policy.alpha_bar());
    let r = params.r;
    let solver = MacroSolver::new(setup.grid, params.clone(), r, setup.options)?;
    let front = setup.front.clone();
    let state = solver.initial_state(&move |x, z| if z < front.height(x) { r } else { 0.0 })?;

    let mut recorder = QoiRecorder::new(z_list)?;
    let mut failure = None;
    let out = solver.run_observed(state, output_times, |s, _| {
        if failure.is_none() {
            if let Err(e) = recorder.record(s, &params, &setup.grid) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(PolicyRun {
        policy: policy.clone(),
        alpha,
        c_alpha,
        series: recorder.finish()?,
        snapshots: out.snapshots,
        steps: out.steps,
        top_reached: out.top_reached,
    })
}

/// Runs every policy from the same initial data, one thread per policy.
///
/// Snapshots are taken at `output_times`; the run ends at their maximum.
pub fn policy_compare(
    setup: &ComparisonSetup,
    policies: &[PolicySpec],
    z_list: &[f64],
    output_times: &[f64],
) -> Result<PolicyReport> {
    if policies.is_empty() {
        return Err(Error::Config("no policies to compare".into()));
    }
    setup.front.validate()?;
    setup.params.validate_front()?;
    let results: Vec<Result<PolicyRun>> = thread::scope(|scope| {
        let handles: Vec<_> = policies
            .iter()
            .map(|p| scope.spawn(move || run_policy(setup, p, z_list, output_times)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("policy worker panicked"))
            .collect()
    });
    Ok(PolicyReport {
        runs: results.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xs(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
    }

    #[test]
    fn constant_policy() {
        let a = policy_alpha(&PolicySpec::Constant { alpha_bar: 0.5 }, &xs(10)).unwrap();
        assert!(a.iter().all(|&v| v == 0.5));
        assert!(policy_alpha(&PolicySpec::Constant { alpha_bar: 0.0 }, &xs(10)).is_err());
    }

    #[test]
    fn priority_over_flat_front_is_constant() {
        let spec = PolicySpec::Priority {
            alpha_bar: 0.5,
            zeta_max: 1.0,
            rho_star: 0.8,
            zeta0: FrontShape::Flat { height: 0.3 },
        };
        let a = policy_alpha(&spec, &xs(16)).unwrap();
        assert!(a.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn priority_scale_for_v_front() {
        let spec = PolicySpec::Priority {
            alpha_bar: 0.5,
            zeta_max: 1.01875,
            rho_star: 0.8,
            zeta0: FrontShape::VShape { z0: 0.1 },
        };
        let c = priority_scale(&spec, &xs(200)).unwrap().unwrap();
        assert!((c - 0.5 / 0.575).abs() < 1e-12, "{c}");
        let a = policy_alpha(&spec, &xs(200)).unwrap();
        let mean = a.iter().sum::<f64>() / 200.0;
        assert!((mean - 0.5).abs() < 1e-12);
        // trailing centre gets the largest rate
        assert!(a[100] > a[0]);
    }

    #[test]
    fn priority_needs_headroom() {
        let spec = PolicySpec::Priority {
            alpha_bar: 0.5,
            zeta_max: 0.4,
            rho_star: 0.8,
            zeta0: FrontShape::VShape { z0: 0.1 },
        };
        assert!(policy_alpha(&spec, &xs(20)).is_err());
    }

    #[test]
    fn quantities_on_a_plateau() {
        let g = Grid::square(10).unwrap();
        let p = ModelParams::new(0.8, 1.0).unwrap();
        let mut s = FieldState::zeros(&g);
        assert_eq!(omega2(&s, 0.5, &p, &g).unwrap(), 0.0);
        s.density.fill(0.5);
        let w = omega2(&s, 0.5, &p, &g).unwrap();
        assert!((w - 0.1 * 0.5 / 0.8).abs() < 1e-15);
        assert!((row_load(&s, 0.5, &g).unwrap() - 0.5).abs() < 1e-15);
        assert!(omega2(&s, 1.0, &p, &g).is_err());
        assert!(row_load(&s, 0.0, &g).is_err());
    }

    #[test]
    fn trapezoid_integrals() {
        let t = [0.0, 0.5, 1.0, 2.0];
        let v = [1.0, 1.0, 3.0, 3.0];
        assert_eq!(
            cumulative_trapezoid(&t, &v).unwrap(),
            vec![0.0, 0.5, 1.5, 4.5]
        );
        assert_eq!(omega1(&t, &v).unwrap(), 4.5);
        assert_eq!(omega3(&[], &[]).unwrap(), 0.0);
        assert!(cumulative_trapezoid(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn series_interpolation() {
        let s = QoiSeries {
            z: 0.5,
            t: vec![0.0, 1.0],
            omega1: vec![0.0, 2.0],
            omega2: vec![1.0, 3.0],
            omega3: vec![0.0, 4.0],
        };
        assert_eq!(s.at(0.25), (0.5, 1.5, 1.0));
        assert_eq!(s.at(5.0), (2.0, 3.0, 4.0));
    }
}
