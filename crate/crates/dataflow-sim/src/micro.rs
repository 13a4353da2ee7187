//! Processor lattice: `i_max` processors, each a pipeline of `k_max` stages,
//! integrated with explicit Euler.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::flux::{ModelParams, RateField, Throttle};

/// Values this close below zero are clipped after a step.
pub const CLIP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MicroState {
    q: Array2<f64>,
    outflow: Vec<f64>,
    t: f64,
    a: Vec<f64>,
    q_star: f64,
}

impl MicroState {
    /// `q` has shape `(i_max, k_max)`; `a` holds one rate per processor.
    pub fn new(q: Array2<f64>, a: Vec<f64>, q_star: f64) -> Result<Self> {
        let (i_max, k_max) = q.dim();
        if i_max == 0 || k_max == 0 {
            return Err(Error::Config(
                "lattice needs at least one processor and one stage".into(),
            ));
        }
        if a.len() != i_max {
            return Err(Error::Config(format!(
                "{} rates for {i_max} processors",
                a.len()
            )));
        }
        if !(q_star.is_finite() && q_star > 0.0) {
            return Err(Error::Config(format!(
                "q_star must be positive, got {q_star}"
            )));
        }
        if let Some(v) = a
            .iter()
            .chain(q.iter())
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Config(format!(
                "lattice data must be finite and non-negative, got {v}"
            )));
        }
        Ok(MicroState {
            q,
            outflow: vec![0.0; i_max],
            t: 0.0,
            a,
            q_star,
        })
    }

    pub fn i_max(&self) -> usize {
        self.q.nrows()
    }

    pub fn k_max(&self) -> usize {
        self.q.ncols()
    }

    /// Coupling strength `k_max / i_max` implied by the lattice shape.
    pub fn eta(&self) -> f64 {
        self.k_max() as f64 / self.i_max() as f64
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn outflow(&self) -> &[f64] {
        &self.outflow
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rates(&self) -> &[f64] {
        &self.a
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    /// Lattice amounts plus everything that has left through the last stage.
    pub fn total_mass(&self) -> f64 {
        self.q.sum() + self.outflow.iter().sum::<f64>()
    }

    /// Density on the unit square, `k_max q`.
    pub fn density(&self) -> Array2<f64> {
        &self.q * self.k_max() as f64
    }

    fn check_index(&self, i: usize, k: usize) -> Result<()> {
        if i < self.i_max() && k < self.k_max() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "index ({i}, {k}) outside a {}x{} lattice",
                self.i_max(),
                self.k_max()
            )))
        }
    }

    /// Data in processor `i` at stage `k` or beyond, including what already left.
    pub fn cumulative_q(&self, i: usize, k: usize) -> Result<f64> {
        self.check_index(i, k)?;
        Ok(self.q.row(i).iter().skip(k).sum::<f64>() + self.outflow[i])
    }

    /// Flow out of stage `k` of processor `i`.
    pub fn flux(&self, i: usize, k: usize) -> Result<f64> {
        self.check_index(i, k)?;
        let n = self.i_max();
        let (l, r) = ((i + n - 1) % n, (i + 1) % n);
        let qc = self.q[[i, k]];
        let here = self.cumulative_q(i, k)?;
        let up = self.cumulative_q(r, k)? - here + qc;
        let down = self.cumulative_q(l, k)? - here + qc;
        Ok(self.a[i] * self.ramp(v2(qc, up, down)))
    }

    fn ramp(&self, u: f64) -> f64 {
        Throttle {
            rho_star: self.q_star,
            eta: 1.0,
        }
        .w1(u)
    }

    fn cumulative(&self) -> Array2<f64> {
        let mut c = Array2::zeros(self.q.raw_dim());
        for i in 0..self.i_max() {
            let mut acc = self.outflow[i];
            for k in (0..self.k_max()).rev() {
                acc += self.q[[i, k]];
                c[[i, k]] = acc;
            }
        }
        c
    }

    /// All stage fluxes from the current state.
    pub fn fluxes(&self) -> Array2<f64> {
        let c = self.cumulative();
        let n = self.i_max();
        Array2::from_shape_fn(self.q.raw_dim(), |(i, k)| {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            let qc = self.q[[i, k]];
            let up = c[[r, k]] - c[[i, k]] + qc;
            let down = c[[l, k]] - c[[i, k]] + qc;
            self.a[i] * self.ramp(v2(qc, up, down))
        })
    }

    /// Largest Euler step that keeps every stage non-negative: `q_star / max a`.
    pub fn stable_dt(&self) -> f64 {
        self.q_star / self.a.iter().copied().fold(0.0, f64::max)
    }

    /// One explicit Euler step with per-processor inflow `f_in` into stage 0.
    pub fn step(&mut self, dt: f64, f_in: &[f64]) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if f_in.len() != self.i_max() {
            return Err(Error::Config(format!(
                "{} inflows for {} processors",
                f_in.len(),
                self.i_max()
            )));
        }
        let f = self.fluxes();
        let k_last = self.k_max() - 1;
        let mut worst = 0.0_f64;
        for i in 0..self.i_max() {
            let mut prev = f_in[i];
            for k in 0..=k_last {
                let cell = &mut self.q[[i, k]];
                *cell += dt * (prev - f[[i, k]]);
                if *cell < 0.0 {
                    worst = worst.min(*cell);
                    if *cell >= -CLIP_TOLERANCE {
                        *cell = 0.0;
                    }
                }
                prev = f[[i, k]];
            }
            self.outflow[i] += dt * f[[i, k_last]];
        }
        if worst < -CLIP_TOLERANCE {
            return Err(Error::Stability {
                t: self.t,
                detail: format!("stage amount fell to {worst} with dt = {dt}"),
            });
        }
        self.t += dt;
        Ok(())
    }

    /// Steps with [`MicroState::stable_dt`] until `t_end`, landing on it exactly.
    pub fn run_until(&mut self, t_end: f64, f_in: &[f64]) -> Result<usize> {
        let dt = self.stable_dt();
        let mut steps = 0;
        while self.t < t_end {
            let h = if dt.is_finite() {
                dt.min(t_end - self.t)
            } else {
                t_end - self.t
            };
            self.step(h, f_in)?;
            if (t_end - self.t).abs() <= 1e-12 * t_end.abs().max(1.0) {
                self.t = t_end;
            }
            steps += 1;
        }
        Ok(steps)
    }
}

/// Amount ready for processing given the two neighbour surpluses.
#[inline]
fn v2(q: f64, up: f64, down: f64) -> f64 {
    q.min(up.max(0.0)).min(down.max(0.0))
}

/// Lattice whose density matches `rho0` at cell centres.
///
/// `q = rho0(x_i, z_k) / k_max`, `q_star = rho_star / k_max`, `a_i = alpha(0, x_i)`.
pub fn micro_from_macro(
    rho0: &dyn Fn(f64, f64) -> f64,
    alpha: &RateField,
    params: &ModelParams,
    i_max: usize,
    k_max: usize,
) -> Result<MicroState> {
    params.validate()?;
    if i_max == 0 || k_max == 0 {
        return Err(Error::Config(
            "lattice needs at least one processor and one stage".into(),
        ));
    }
    let ratio = k_max as f64 / i_max as f64;
    if (ratio - params.eta).abs() > 1e-12 * params.eta {
        return Err(Error::Config(format!(
            "lattice shape {i_max}x{k_max} gives eta = {ratio}, model has eta = {}",
            params.eta
        )));
    }
    let x = |i: usize| (i as f64 + 0.5) / i_max as f64;
    let z = |k: usize| (k as f64 + 0.5) / k_max as f64;
    let q = Array2::from_shape_fn((i_max, k_max), |(i, k)| rho0(x(i), z(k)) / k_max as f64);
    let a = (0..i_max).map(|i| alpha.at(0.0, x(i))).collect();
    MicroState::new(q, a, params.rho_star / k_max as f64)
}
