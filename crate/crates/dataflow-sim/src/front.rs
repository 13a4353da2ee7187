//! Fronts: surfaces `z = zeta(t, x)` separating a plateau of density `r`
//! from empty stages above it.
//!
//! A front moves with speed `(alpha / rho_star) W2(d zeta / dx)`: flat parts
//! at full speed, tilted parts slower, and parts steeper than `1 / eta` not
//! at all.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{ModelParams, RateField};
use crate::grid::Grid;
use crate::solver::FieldState;

/// Front heights at the cell centres `x_i = (i + 1/2) / n` of the periodic unit interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontProfile {
    pub zeta: Vec<f64>,
    pub t: f64,
}

impl FrontProfile {
    pub fn new(zeta: Vec<f64>, t: f64) -> Result<Self> {
        if zeta.is_empty() {
            return Err(Error::Config(
                "front profile needs at least one sample".into(),
            ));
        }
        if let Some(z) = zeta.iter().find(|z| !z.is_finite() || **z < 0.0) {
            return Err(Error::Config(format!(
                "front heights must be finite and non-negative, got {z}"
            )));
        }
        Ok(FrontProfile { zeta, t })
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.zeta.len() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Largest pointwise difference.
    pub fn linf_distance(&self, other: &FrontProfile) -> f64 {
        self.zeta
            .iter()
            .zip(&other.zeta)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Midpoint-rule integral of the absolute difference.
    pub fn l1_distance(&self, other: &FrontProfile) -> f64 {
        self.zeta
            .iter()
            .zip(&other.zeta)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dx()
    }
}

/// Initial front shapes with closed-form heights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrontShape {
    /// `zeta = height`.
    Flat { height: f64 },
    /// `zeta = (1 - 2 z0) |x - 1/2| + z0`, lowest at the centre.
    VShape { z0: f64 },
    /// `zeta = amplitude cos(2 pi x) + offset`.
    Cosine { amplitude: f64, offset: f64 },
    /// Heights at cell centres, interpolated linearly and periodically.
    Table { values: Vec<f64> },
}

impl FrontShape {
    pub fn height(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            FrontShape::Flat { height } => *height,
            FrontShape::VShape { z0 } => (1.0 - 2.0 * z0) * (x - 0.5).abs() + z0,
            FrontShape::Cosine { amplitude, offset } => {
                amplitude * (2.0 * std::f64::consts::PI * x).cos() + offset
            }
            FrontShape::Table { values } => {
                let n = values.len();
                let u = x * n as f64 - 0.5;
                let lo = u.floor();
                let w = u - lo;
                let i = (lo as isize).rem_euclid(n as isize) as usize;
                (1.0 - w) * values[i] + w * values[(i + 1) % n]
            }
        }
    }

    /// Largest `|d zeta / dx|`.
    pub fn max_slope(&self) -> f64 {
        match self {
            FrontShape::Flat { .. } => 0.0,
            FrontShape::VShape { z0 } => (1.0 - 2.0 * z0).abs(),
            FrontShape::Cosine { amplitude, .. } => 2.0 * std::f64::consts::PI * amplitude.abs(),
            FrontShape::Table { values } => {
                let n = values.len();
                (0..n)
                    .map(|i| (values[(i + 1) % n] - values[i]).abs() * n as f64)
                    .fold(0.0, f64::max)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            FrontShape::Flat { height } => height.is_finite() && *height >= 0.0,
            FrontShape::VShape { z0 } => z0.is_finite() && (0.0..=0.5).contains(z0),
            FrontShape::Cosine { amplitude, offset } => {
                amplitude.is_finite() && offset.is_finite() && *offset >= amplitude.abs()
            }
            FrontShape::Table { values } => {
                !values.is_empty() && values.iter().all(|v| v.is_finite() && *v >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "front shape {self:?} is not a non-negative height function"
            )))
        }
    }

    pub fn profile(&self, nx: usize) -> Result<FrontProfile> {
        FrontProfile::new(
            (0..nx)
                .map(|i| self.height((i as f64 + 0.5) / nx as f64))
                .collect(),
            0.0,
        )
    }
}

/// `(alpha / rho_star) W2(d zeta / dx)`.
pub fn front_speed(dzeta_dx: f64, alpha: f64, params: &ModelParams) -> f64 {
    alpha / params.rho_star * params.throttle().tent(dzeta_dx)
}

/// Evolves `zeta_t = (alpha / rho_star) W2(zeta_x)` for time `t_end` with a
/// first-order Godunov scheme, sub-stepping to keep `dt <= dx rho_star / (alpha eta)`.
pub fn front_evolve(
    zeta0: &FrontProfile,
    alpha: &RateField,
    params: &ModelParams,
    t_end: f64,
) -> Result<FrontProfile> {
    params.validate()?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::Config(format!(
            "evolution time must be non-negative, got {t_end}"
        )));
    }
    let n = zeta0.len();
    let dx = zeta0.dx();
    let xs: Vec<f64> = (0..n).map(|i| zeta0.x(i)).collect();
    let th = params.throttle();
    let mut zeta = zeta0.zeta.clone();
    let mut t = zeta0.t;
    let stop = zeta0.t + t_end;

    let mut c: Vec<f64> = alpha
        .sample(t, &xs)
        .iter()
        .map(|a| a / params.rho_star)
        .collect();
    let mut next = vec![0.0; n];
    while t < stop {
        if alpha.is_time_dependent() {
            c = alpha
                .sample(t, &xs)
                .iter()
                .map(|a| a / params.rho_star)
                .collect();
        }
        let cmax = c.iter().copied().fold(0.0, f64::max);
        if cmax == 0.0 && !alpha.is_time_dependent() {
            break;
        }
        let dt_max = if cmax > 0.0 {
            dx / (cmax * params.eta)
        } else {
            stop - t
        };
        let dt = dt_max.min(stop - t);
        for i in 0..n {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            let pm = (zeta[i] - zeta[l]) / dx;
            let pp = (zeta[r] - zeta[i]) / dx;
            let g = if pm <= pp {
                // largest tent value on [pm, pp]
                th.tent(0.0_f64.clamp(pm, pp))
            } else {
                th.tent(pm).min(th.tent(pp))
            };
            next[i] = zeta[i] + dt * c[i] * g;
        }
        std::mem::swap(&mut zeta, &mut next);
        t += dt;
        if (stop - t).abs() <= 1e-12 * stop.abs().max(1.0) {
            t = stop;
        }
    }
    FrontProfile::new(zeta, stop)
}

/// V-shaped front whose arms are shallower than `1 / eta`.
///
/// The arms translate with reduced speed while the tip moves at full speed;
/// the answer is the larger of the two.
pub fn front_vshape_solution(
    x: f64,
    t: f64,
    z0: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<f64> {
    let slope = 1.0 - 2.0 * z0;
    if params.eta * slope >= 1.0 {
        return Err(Error::domain(
            "front_vshape_solution",
            format!("arm slope {slope} is at least 1/eta; the arms are stalled"),
        ));
    }
    let c = alpha / params.rho_star;
    let base = FrontShape::VShape { z0 }.height(x);
    Ok((base + c * (1.0 - params.eta * slope) * t).max(z0 + c * t))
}

/// V-shaped front whose arms are at least as steep as `1 / eta` and therefore stalled.
pub fn front_stalled_solution(
    x: f64,
    t: f64,
    z0: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<f64> {
    let slope = 1.0 - 2.0 * z0;
    if params.eta * slope < 1.0 {
        return Err(Error::domain(
            "front_stalled_solution",
            format!("arm slope {slope} is below 1/eta; the arms move"),
        ));
    }
    let base = FrontShape::VShape { z0 }.height(x);
    Ok(base.max(z0 + alpha / params.rho_star * t))
}

/// Cell averages of `r H(zeta - z)` and `r H(zeta - z) zeta_x`.
///
/// Columns are filled exactly; the slope is a central difference.
pub fn density_from_front(
    zeta: &FrontProfile,
    r: f64,
    grid: &Grid,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if zeta.len() != grid.nx {
        return Err(Error::Config(format!(
            "front has {} samples but the grid has {} columns",
            zeta.len(),
            grid.nx
        )));
    }
    let mut rho = Array2::zeros((grid.nx, grid.nz));
    let mut sigma = Array2::zeros((grid.nx, grid.nz));
    for i in 0..grid.nx {
        let z = zeta.zeta[i];
        let slope = (zeta.zeta[grid.right(i)] - zeta.zeta[grid.left(i)]) / (2.0 * grid.dx);
        for j in 0..grid.nz {
            let fill = ((z - j as f64 * grid.dz) / grid.dz).clamp(0.0, 1.0);
            rho[[i, j]] = r * fill;
            sigma[[i, j]] = r * fill * slope;
        }
    }
    Ok((rho, sigma))
}

/// Speeds of a lower front `zeta1` (density `r1` below it) and an upper
/// front `zeta2` (density `r2` between the two).
pub fn two_front_speeds(
    dz1_dx: f64,
    dz2_dx: f64,
    r1: f64,
    r2: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<(f64, f64)> {
    if r1 == r2 {
        return Err(Error::domain(
            "two_front_speeds",
            "equal densities describe a single front",
        ));
    }
    if r1 <= 0.0 {
        return Err(Error::domain(
            "two_front_speeds",
            format!("r1 = {r1} must be positive"),
        ));
    }
    let th = params.throttle();
    let c = alpha / params.rho_star;
    let upper = c * th.tent(dz2_dx);
    let inner = th.tent((r1 - r2) / r1 * dz1_dx + r2 / r1 * dz2_dx);
    let lower = alpha / (params.rho_star * (r2 - r1)) * (r2 * th.tent(dz2_dx) - r1 * inner);
    Ok((lower, upper))
}

/// Jump-condition residual `Phi(left) - Phi(right) - speed (rho_l - rho_r)`.
#[allow(clippy::too_many_arguments)]
pub fn rh_residual(
    rho_l: f64,
    sigma_l: f64,
    rho_r: f64,
    sigma_r: f64,
    dzeta_dt: f64,
    alpha: f64,
    params: &ModelParams,
) -> Result<f64> {
    let fl = crate::flux::flux_phi(rho_l, sigma_l, alpha, params)?;
    let fr = crate::flux::flux_phi(rho_r, sigma_r, alpha, params)?;
    Ok(fl - fr - dzeta_dt * (rho_l - rho_r))
}

/// Half-height crossing of each column, scanning down from the top.
///
/// Columns with no crossing report `0`, or `1` when even the top cell is at
/// least half full.
pub fn extract_front(state: &FieldState, r: f64, grid: &Grid) -> FrontProfile {
    let h = 0.5 * r;
    let zeta = (0..grid.nx)
        .map(|i| {
            let col = state.density.row(i);
            if col[grid.nz - 1] >= h {
                return 1.0;
            }
            (0..grid.nz - 1)
                .rev()
                .find(|&j| col[j] >= h && col[j + 1] < h)
                .map_or(0.0, |j| {
                    grid.z(j) + (col[j] - h) / (col[j] - col[j + 1]) * grid.dz
                })
        })
        .collect();
    FrontProfile { zeta, t: state.t }
}
