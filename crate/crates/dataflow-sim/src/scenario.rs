//! Scenario configuration, presets and the run pipeline behind the CLI.
//!
//! A configuration file is TOML with a top-level `name` (and optionally a
//! `preset` to start from) plus the sections `[model]`, `[grid]`,
//! `[initial]`, `[run]`, `[micro]` and `[control]`:
//!
//! ```toml
//! name = "tilted"
//! preset = "example3"
//!
//! [grid]
//! nx = 100
//! nz = 100
//!
//! [run]
//! t_final = 1.0
//! ```

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::control::{self, ComparisonSetup, PolicyReport, PolicySpec};
use crate::error::{Error, Result};
use crate::flux::{ModelParams, RateField};
use crate::front::{self, FrontProfile, FrontShape};
use crate::grid::Grid;
use crate::io;
use crate::micro::{self, MicroState};
use crate::solver::{MacroSolver, RunOutput, Scheme, SolverOptions, StepReport};

/// Processing rate of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSpec {
    Uniform {
        value: f64,
    },
    /// `peak (1 - depth sin^2(pi x))`: slowest at the centre.
    Dip {
        peak: f64,
        depth: f64,
    },
}

impl RateSpec {
    pub fn field(&self) -> RateField {
        match *self {
            RateSpec::Uniform { value } => RateField::Uniform(value),
            RateSpec::Dip { peak, depth } => RateField::profile(move |x| {
                let s = (std::f64::consts::PI * x).sin();
                peak * (1.0 - depth * s * s)
            }),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RateSpec::Uniform { value } => value,
            RateSpec::Dip { peak, depth } => peak * (1.0 - 0.5 * depth),
        }
    }
}

/// Initial density.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Plateau `r` below the height `zeta0`.
    ConstantFront { zeta0: f64 },
    /// Plateau `r` below `(1 - 2 z0)|x - 1/2| + z0`.
    VFront { z0: f64 },
    /// Plateau `r` below `amplitude cos(2 pi x) + offset`.
    SmoothFront { amplitude: f64, offset: f64 },
    /// `amplitude sin(2 pi z)^power` for `z <= cutoff`, independent of `x`.
    SmoothBump {
        amplitude: f64,
        power: i32,
        cutoff: f64,
    },
    /// Density `r1` below `zeta1`, `r2` between `zeta1` and `zeta2`.
    TwoFront {
        r1: f64,
        r2: f64,
        zeta1: f64,
        zeta2: f64,
    },
    /// Plateau `r` below front heights read from a CSV file with columns `x,zeta`.
    Table {
        path: PathBuf,
        #[serde(skip)]
        zeta: Vec<f64>,
    },
}

impl InitialCondition {
    /// Shape of the single front, if the data is one.
    pub fn front_shape(&self) -> Option<FrontShape> {
        match self {
            InitialCondition::ConstantFront { zeta0 } => Some(FrontShape::Flat { height: *zeta0 }),
            InitialCondition::VFront { z0 } => Some(FrontShape::VShape { z0: *z0 }),
            InitialCondition::SmoothFront { amplitude, offset } => Some(FrontShape::Cosine {
                amplitude: *amplitude,
                offset: *offset,
            }),
            InitialCondition::Table { zeta, .. } => Some(FrontShape::Table {
                values: zeta.clone(),
            }),
            InitialCondition::SmoothBump { .. } | InitialCondition::TwoFront { .. } => None,
        }
    }

    /// Density function for plateau `r`.
    pub fn density(&self, r: f64) -> Box<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        if let Some(shape) = self.front_shape() {
            return Box::new(move |x, z| if z < shape.height(x) { r } else { 0.0 });
        }
        match *self {
            InitialCondition::SmoothBump {
                amplitude,
                power,
                cutoff,
            } => Box::new(move |_, z| {
                if (0.0..=cutoff).contains(&z) {
                    amplitude * (2.0 * std::f64::consts::PI * z).sin().powi(power)
                } else {
                    0.0
                }
            }),
            InitialCondition::TwoFront {
                r1,
                r2,
                zeta1,
                zeta2,
            } => Box::new(move |_, z| {
                if z < zeta1 {
                    r1
                } else if z < zeta2 {
                    r2
                } else {
                    0.0
                }
            }),
            _ => unreachable!("front data handled above"),
        }
    }

    /// Density held in the bottom row.
    pub fn inflow(&self, r: f64) -> f64 {
        match self {
            InitialCondition::SmoothBump { .. } => 0.0,
            InitialCondition::TwoFront { r1, .. } => *r1,
            _ => r,
        }
    }

    /// Plateau behind the topmost front, used to locate it.
    pub fn plateau(&self, r: f64) -> Option<f64> {
        match self {
            InitialCondition::SmoothBump { .. } => None,
            InitialCondition::TwoFront { r2, .. } => Some(*r2),
            _ => Some(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MicroToggle {
    pub i_max: usize,
    pub k_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlSettings {
    pub alpha_bar: f64,
    pub zeta_max: Option<f64>,
    pub z: Vec<f64>,
    pub policies: Vec<String>,
    pub report_samples: usize,
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub rho_star: f64,
    pub eta: f64,
    pub r: f64,
    pub rate: RateSpec,
    pub nx: usize,
    pub nz: usize,
    pub initial: InitialCondition,
    pub t_final: f64,
    /// Snapshot times; always ends with `t_final`.
    pub output_times: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    pub solver: SolverOptions,
    /// Tolerate data reaching the top of the stage axis.
    pub allow_outflow: bool,
    pub micro: Option<MicroToggle>,
    pub control: Option<ControlSettings>,
}

/// A violated setting, tagged with the key that caused it.
#[derive(Debug)]
struct Invalid {
    key: &'static str,
    message: String,
}

fn invalid(key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid {
        key,
        message: message.into(),
    }
}

impl From<Invalid> for Error {
    fn from(v: Invalid) -> Self {
        Error::Config(format!("{}: {}", v.key, v.message))
    }
}

impl ScenarioConfig {
    /// Plain defaults; `name`, `eta` and the initial data still need setting.
    fn blank() -> Self {
        ScenarioConfig {
            name: String::new(),
            description: String::new(),
            rho_star: 0.8,
            eta: f64::NAN,
            r: 0.5,
            rate: RateSpec::Uniform { value: 0.1 },
            nx: 200,
            nz: 200,
            initial: InitialCondition::ConstantFront { zeta0: f64::NAN },
            t_final: 2.0,
            output_times: Vec::new(),
            output_dir: None,
            solver: SolverOptions::default(),
            allow_outflow: false,
            micro: None,
            control: None,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.nz)
    }

    /// `eta dz / dx`: above 1 a cell's own density outweighs it in the
    /// neighbour throttle and the discrete flux stops being monotone.
    pub fn coupling_number(&self) -> f64 {
        self.eta * self.nx as f64 / self.nz as f64
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            rho_star: self.rho_star,
            eta: self.eta,
            r: self.r,
            alpha_bar: self.rate.mean(),
            alpha: self.rate.field(),
        }
    }

    /// Square grid of `n` cells per axis, resizing the micro lattice to match.
    pub fn with_resolution(mut self, n: usize) -> Self {
        self.nx = n;
        self.nz = n;
        if let Some(m) = &mut self.micro {
            m.i_max = n;
            m.k_max = (self.eta * n as f64).round() as usize;
        }
        self
    }

    /// Replaces the final time, dropping later snapshot times.
    pub fn with_final_time(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self.output_times.retain(|&t| t < t_final);
        self.output_times.push(t_final);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(Error::from)
    }

    fn check(&self) -> Result<(), Invalid> {
        let positive = |key, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be a positive number, got {v}")))
            }
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name", "every scenario needs a name"));
        }
        if self.eta.is_nan() {
            return Err(invalid("model.eta", "no coupling strength given"));
        }
        positive("model.rho_star", self.rho_star)?;
        positive("model.eta", self.eta)?;
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(invalid(
                "model.r",
                format!("must be non-negative, got {}", self.r),
            ));
        }
        match self.rate {
            RateSpec::Uniform { value } if !(value.is_finite() && value >= 0.0) => {
                return Err(invalid(
                    "model.alpha",
                    format!("must be non-negative, got {value}"),
                ));
            }
            RateSpec::Dip { peak, depth } => {
                positive("model.alpha", peak)?;
                if !(0.0..=1.0).contains(&depth) {
                    return Err(invalid(
                        "model.alpha_dip",
                        format!("must lie in [0, 1], got {depth}"),
                    ));
                }
            }
            _ => {}
        }
        if self.nx < 3 {
            return Err(invalid(
                "grid.nx",
                format!("needs at least 3 cells, got {}", self.nx),
            ));
        }
        if self.nz < 3 {
            return Err(invalid(
                "grid.nz",
                format!("needs at least 3 cells, got {}", self.nz),
            ));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(invalid(
                "run.t_final",
                format!("must be non-negative, got {}", self.t_final),
            ));
        }
        if let Some(t) = self
            .output_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final))
        {
            return Err(invalid(
                "run.output_times",
                format!("{t} lies outside [0, t_final]"),
            ));
        }
        let limit = self.solver.scheme.max_courant();
        if !(self.solver.courant > 0.0 && self.solver.courant <= limit) {
            return Err(invalid(
                "run.courant",
                format!(
                    "must lie in (0, {limit}] for this scheme, got {}",
                    self.solver.courant
                ),
            ));
        }
        self.check_initial()?;
        if let Some(m) = self.micro {
            if m.i_max == 0 || m.k_max == 0 {
                return Err(invalid(
                    "micro.i_max",
                    "lattice dimensions must be positive",
                ));
            }
            let ratio = m.k_max as f64 / m.i_max as f64;
            if (ratio - self.eta).abs() > 1e-9 * self.eta {
                return Err(invalid(
                    "micro.k_max",
                    format!("k_max / i_max = {ratio} differs from eta = {}", self.eta),
                ));
            }
        }
        if let Some(c) = &self.control {
            self.check_control(c)?;
        }
        Ok(())
    }

    fn check_initial(&self) -> Result<(), Invalid> {
        let front_r = || {
            if self.r > 0.0 && self.r < self.rho_star {
                Ok(())
            } else {
                Err(invalid(
                    "model.r",
                    format!("front data needs 0 < r < rho_star, got r = {}", self.r),
                ))
            }
        };
        match &self.initial {
            InitialCondition::ConstantFront { zeta0 } => {
                if !(zeta0.is_finite() && (0.0..=1.0).contains(zeta0)) {
                    return Err(invalid(
                        "initial.zeta0",
                        format!("must lie in [0, 1], got {zeta0}"),
                    ));
                }
                front_r()
            }
            InitialCondition::VFront { z0 } => {
                if !(z0.is_finite() && *z0 >= 0.0 && *z0 < 0.5) {
                    return Err(invalid(
                        "initial.z0",
                        format!("must lie in [0, 0.5), got {z0}"),
                    ));
                }
                front_r()
            }
            InitialCondition::SmoothFront { amplitude, offset } => {
                if !(amplitude.is_finite() && offset.is_finite() && *offset >= amplitude.abs()) {
                    return Err(invalid("initial.offset", "front would dip below z = 0"));
                }
                if offset + amplitude.abs() > 1.0 {
                    return Err(invalid("initial.amplitude", "front would rise above z = 1"));
                }
                front_r()
            }
            InitialCondition::SmoothBump {
                amplitude, cutoff, ..
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(invalid(
                        "initial.amplitude",
                        format!("must be non-negative, got {amplitude}"),
                    ));
                }
                if !(0.0..=1.0).contains(cutoff) {
                    return Err(invalid(
                        "initial.cutoff",
                        format!("must lie in [0, 1], got {cutoff}"),
                    ));
                }
                Ok(())
            }
            InitialCondition::TwoFront {
                r1,
                r2,
                zeta1,
                zeta2,
            } => {
                for (key, v) in [("initial.r1", r1), ("initial.r2", r2)] {
                    if !(*v > 0.0 && *v < self.rho_star) {
                        return Err(invalid(key, format!("must lie in (0, rho_star), got {v}")));
                    }
                }
                if r1 == r2 {
                    return Err(invalid("initial.r2", "equal densities make a single front"));
                }
                if !(0.0 <= *zeta1 && zeta1 <= zeta2 && *zeta2 <= 1.0) {
                    return Err(invalid("initial.zeta2", "need 0 <= zeta1 <= zeta2 <= 1"));
                }
                Ok(())
            }
            InitialCondition::Table { zeta, .. } => {
                FrontShape::Table {
                    values: zeta.clone(),
                }
                .validate()
                .map_err(|e| invalid("initial.table", e.to_string()))?;
                front_r()
            }
        }
    }

    fn check_control(&self, c: &ControlSettings) -> Result<(), Invalid> {
        let Some(shape) = self.initial.front_shape() else {
            return Err(invalid(
                "control.policies",
                "policy comparison needs single-front initial data",
            ));
        };
        if !(c.alpha_bar.is_finite() && c.alpha_bar > 0.0) {
            return Err(invalid(
                "control.alpha_bar",
                format!("must be positive, got {}", c.alpha_bar),
            ));
        }
        if let Some(z) = c.z.iter().find(|z| !(**z > 0.0 && **z < 1.0)) {
            return Err(invalid(
                "control.z",
                format!("stage {z} must lie inside (0, 1)"),
            ));
        }
        if c.z.is_empty() {
            return Err(invalid("control.z", "no stages to evaluate"));
        }
        if c.policies.is_empty() {
            return Err(invalid("control.policies", "no policies listed"));
        }
        for p in &c.policies {
            match p.as_str() {
                "constant" => {}
                "priority" => {
                    let Some(zmax) = c.zeta_max else {
                        return Err(invalid(
                            "control.zeta_max",
                            "the priority policy needs zeta_max",
                        ));
                    };
                    let top = (0..self.nx)
                        .map(|i| shape.height((i as f64 + 0.5) / self.nx as f64))
                        .fold(f64::NEG_INFINITY, f64::max);
                    if zmax.is_nan() || zmax <= top {
                        return Err(invalid(
                            "control.zeta_max",
                            format!("must exceed the highest initial front point {top}"),
                        ));
                    }
                }
                other => {
                    return Err(invalid(
                        "control.policies",
                        format!("unknown policy {other:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Policies listed in `[control]`.
    pub fn policy_specs(&self) -> Vec<PolicySpec> {
        let (Some(c), Some(shape)) = (&self.control, self.initial.front_shape()) else {
            return Vec::new();
        };
        c.policies
            .iter()
            .map(|p| match p.as_str() {
                "priority" => PolicySpec::Priority {
                    alpha_bar: c.alpha_bar,
                    zeta_max: c.zeta_max.unwrap_or(f64::NAN),
                    rho_star: self.rho_star,
                    zeta0: shape.clone(),
                },
                _ => PolicySpec::Constant {
                    alpha_bar: c.alpha_bar,
                },
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// presets

/// Name and one-line summary of a built-in scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

impl std::fmt::Display for PresetInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.name, self.summary)
    }
}

const PRESETS: [PresetInfo; 6] = [
    PresetInfo {
        name: "example1",
        summary: "smooth density bump, lattice model against continuum model",
    },
    PresetInfo {
        name: "example2",
        summary: "constant front",
    },
    PresetInfo {
        name: "example3",
        summary: "V-shaped front with small eta",
    },
    PresetInfo {
        name: "example4",
        summary: "smooth front with small eta",
    },
    PresetInfo {
        name: "example5",
        summary: "V-shaped front with large eta (stalled arms)",
    },
    PresetInfo {
        name: "control_study",
        summary: "constant against priority processor rates on a V-shaped front",
    },
];

pub fn list_presets() -> &'static [PresetInfo] {
    &PRESETS
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let info = PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}; see list-presets")))?;
    let mut c = ScenarioConfig::blank();
    c.name = info.name.to_string();
    c.description = info.summary.to_string();
    c.output_times = vec![0.5, 1.0, 1.5, 2.0];
    match name {
        "example1" => {
            c.rho_star = 1.0;
            c.eta = 1.0;
            c.r = 0.0;
            c.rate = RateSpec::Dip {
                peak: 1.0,
                depth: 0.4,
            };
            c.initial = InitialCondition::SmoothBump {
                amplitude: 1.5,
                power: 6,
                cutoff: 0.5,
            };
            c.t_final = 0.5;
            c.output_times = vec![0.25, 0.5];
            c.micro = Some(MicroToggle {
                i_max: 200,
                k_max: 200,
            });
        }
        "example2" => {
            c.eta = 0.5;
            c.initial = InitialCondition::ConstantFront { zeta0: 0.2 };
        }
        "example3" => {
            c.eta = 1.0 / 1.1;
            c.initial = InitialCondition::VFront { z0: 0.2 };
        }
        "example4" => {
            c.eta = 1.0 / (std::f64::consts::FRAC_PI_2 + 1.0);
            c.initial = InitialCondition::SmoothFront {
                amplitude: 0.25,
                offset: 0.3,
            };
        }
        "example5" => {
            c.eta = 10.0;
            c.initial = InitialCondition::VFront { z0: 0.2 };
            c.output_times = vec![0.25, 1.0, 2.0];
        }
        "control_study" => {
            c.eta = 1.0 / 1.1;
            c.initial = InitialCondition::VFront { z0: 0.1 };
            c.t_final = 1.0;
            c.output_times = vec![0.5, 1.0];
            c.rate = RateSpec::Uniform { value: 0.5 };
            c.control = Some(ControlSettings {
                alpha_bar: 0.5,
                zeta_max: Some(1.01875),
                z: vec![0.5, 0.75],
                policies: vec!["constant".into(), "priority".into()],
                report_samples: 101,
            });
        }
        _ => unreachable!("preset table and match agree"),
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// configuration files

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    preset: Option<String>,
    description: Option<String>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    initial: Option<RawInitial>,
    #[serde(default)]
    run: RawRun,
    micro: Option<RawMicro>,
    control: Option<RawControl>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    rho_star: Option<f64>,
    eta: Option<f64>,
    r: Option<f64>,
    alpha: Option<f64>,
    alpha_dip: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<usize>,
    nz: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: String,
    zeta0: Option<f64>,
    z0: Option<f64>,
    amplitude: Option<f64>,
    offset: Option<f64>,
    power: Option<i32>,
    cutoff: Option<f64>,
    r1: Option<f64>,
    r2: Option<f64>,
    zeta1: Option<f64>,
    zeta2: Option<f64>,
    table: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    t_final: Option<f64>,
    output_times: Option<Vec<f64>>,
    output_dir: Option<PathBuf>,
    scheme: Option<Scheme>,
    courant: Option<f64>,
    allow_outflow: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMicro {
    enabled: Option<bool>,
    i_max: Option<usize>,
    k_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    alpha_bar: Option<f64>,
    zeta_max: Option<f64>,
    z: Option<Vec<f64>>,
    policies: Option<Vec<String>>,
    report_samples: Option<usize>,
}

/// 1-based line of `key` inside `[section]` (or the top level for `""`).
fn locate(src: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.rsplit_once('.').unwrap_or(("", dotted));
    let mut current = String::new();
    for (n, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

fn need<T>(v: Option<T>, key: &'static str, kind: &str) -> Result<T, Invalid> {
    v.ok_or_else(|| invalid(key, format!("required for initial kind {kind:?}")))
}

fn build_initial(raw: RawInitial, base_dir: &Path) -> Result<InitialCondition, Invalid> {
    let kind = raw.kind.as_str();
    let allowed: &[&str] = match kind {
        "constant_front" => &["zeta0"],
        "v_front" => &["z0"],
        "smooth_front" => &["amplitude", "offset"],
        "smooth_bump" => &["amplitude", "power", "cutoff"],
        "two_front" => &["r1", "r2", "zeta1", "zeta2"],
        "table" => &["table"],
        other => {
            return Err(invalid(
                "initial.kind",
                format!(
                    "unknown kind {other:?}; expected constant_front, v_front, smooth_front, smooth_bump, two_front or table"
                ),
            ));
        }
    };
    let given = [
        ("zeta0", raw.zeta0.is_some()),
        ("z0", raw.z0.is_some()),
        ("amplitude", raw.amplitude.is_some()),
        ("offset", raw.offset.is_some()),
        ("power", raw.power.is_some()),
        ("cutoff", raw.cutoff.is_some()),
        ("r1", raw.r1.is_some()),
        ("r2", raw.r2.is_some()),
        ("zeta1", raw.zeta1.is_some()),
        ("zeta2", raw.zeta2.is_some()),
        ("table", raw.table.is_some()),
    ];
    if let Some((k, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(invalid(
            "initial.kind",
            format!("key {k:?} has no meaning for kind {kind:?}"),
        ));
    }
    Ok(match kind {
        "constant_front" => InitialCondition::ConstantFront {
            zeta0: need(raw.zeta0, "initial.zeta0", kind)?,
        },
        "v_front" => InitialCondition::VFront {
            z0: need(raw.z0, "initial.z0", kind)?,
        },
        "smooth_front" => InitialCondition::SmoothFront {
            amplitude: need(raw.amplitude, "initial.amplitude", kind)?,
            offset: need(raw.offset, "initial.offset", kind)?,
        },
        "smooth_bump" => InitialCondition::SmoothBump {
            amplitude: need(raw.amplitude, "initial.amplitude", kind)?,
            power: raw.power.unwrap_or(6),
            cutoff: raw.cutoff.unwrap_or(0.5),
        },
        "two_front" => InitialCondition::TwoFront {
            r1: need(raw.r1, "initial.r1", kind)?,
            r2: need(raw.r2, "initial.r2", kind)?,
            zeta1: need(raw.zeta1, "initial.zeta1", kind)?,
            zeta2: need(raw.zeta2, "initial.zeta2", kind)?,
        },
        _ => {
            let rel = need(raw.table, "initial.table", kind)?;
            let path = base_dir.join(&rel);
            let profile =
                io::read_front(&path).map_err(|e| invalid("initial.table", e.to_string()))?;
            InitialCondition::Table {
                path: rel,
                zeta: profile.zeta,
            }
        }
    })
}

fn merge(raw: RawConfig, base_dir: &Path) -> Result<ScenarioConfig> {
    let mut c = match &raw.preset {
        Some(p) => preset(p).map_err(|e| invalid("preset", e.to_string()))?,
        None => ScenarioConfig::blank(),
    };
    c.name = raw.name.unwrap_or_default();
    if c.name.trim().is_empty() {
        return Err(invalid("name", "every scenario needs a name").into());
    }
    if let Some(d) = raw.description {
        c.description = d;
    }
    let m = raw.model;
    if let Some(v) = m.rho_star {
        c.rho_star = v;
    }
    if let Some(v) = m.eta {
        c.eta = v;
    }
    if let Some(v) = m.r {
        c.r = v;
    }
    match (m.alpha, m.alpha_dip) {
        (Some(a), Some(d)) => c.rate = RateSpec::Dip { peak: a, depth: d },
        (Some(a), None) => c.rate = RateSpec::Uniform { value: a },
        (None, Some(d)) => {
            let peak = match c.rate {
                RateSpec::Uniform { value } => value,
                RateSpec::Dip { peak, .. } => peak,
            };
            c.rate = RateSpec::Dip { peak, depth: d };
        }
        (None, None) => {}
    }
    if let Some(v) = raw.grid.nx {
        c.nx = v;
    }
    if let Some(v) = raw.grid.nz {
        c.nz = v;
    }
    if let Some(init) = raw.initial {
        c.initial = build_initial(init, base_dir)?;
    } else if raw.preset.is_none() {
        return Err(invalid("initial.kind", "no initial data given").into());
    }
    let run = raw.run;
    if let Some(s) = run.scheme {
        c.solver = SolverOptions::for_scheme(s);
    }
    if let Some(v) = run.courant {
        c.solver.courant = v;
    }
    if let Some(v) = run.allow_outflow {
        c.allow_outflow = v;
    }
    c.output_dir = run.output_dir.or(c.output_dir);
    match (run.t_final, run.output_times) {
        (t, Some(times)) => {
            if let Some(t) = t {
                c.t_final = t;
            }
            c.output_times = times;
        }
        (Some(t), None) => c = c.with_final_time(t),
        (None, None) => {}
    }
    normalise_times(&mut c);
    if let Some(mi) = raw.micro {
        c.micro = if mi.enabled.unwrap_or(true) {
            let i_max = mi.i_max.unwrap_or(c.nx);
            let k_max = mi
                .k_max
                .unwrap_or_else(|| (c.eta * i_max as f64).round() as usize);
            Some(MicroToggle { i_max, k_max })
        } else {
            None
        };
    }
    if let Some(ct) = raw.control {
        let base = c.control.clone();
        c.control = Some(ControlSettings {
            alpha_bar: ct
                .alpha_bar
                .or(base.as_ref().map(|b| b.alpha_bar))
                .unwrap_or(c.rate.mean()),
            zeta_max: ct.zeta_max.or(base.as_ref().and_then(|b| b.zeta_max)),
            z: ct
                .z
                .or(base.as_ref().map(|b| b.z.clone()))
                .unwrap_or_else(|| vec![0.5, 0.75]),
            policies: ct
                .policies
                .or(base.as_ref().map(|b| b.policies.clone()))
                .unwrap_or_else(|| vec!["constant".into(), "priority".into()]),
            report_samples: ct
                .report_samples
                .or(base.as_ref().map(|b| b.report_samples))
                .unwrap_or(101),
        });
    }
    Ok(c)
}

fn normalise_times(c: &mut ScenarioConfig) {
    c.output_times.sort_by(f64::total_cmp);
    c.output_times.dedup();
    if c.output_times.last() != Some(&c.t_final) && c.output_times.iter().all(|&t| t < c.t_final) {
        c.output_times.push(c.t_final);
    }
}

/// Parses configuration text; `path` only labels error messages and anchors relative paths.
pub fn parse_config(src: &str, path: &Path) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let at_line = |v: Invalid| match locate(src, v.key) {
        Some(line) => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{}: {}", v.key, v.message),
        },
        None => Error::from(v),
    };
    let config = merge(raw, base_dir).map_err(|e| match e {
        Error::Config(msg) => match msg.split_once(": ") {
            Some((key, rest)) if locate(src, key).is_some() => Error::Parse {
                path: path.to_path_buf(),
                line: locate(src, key).unwrap_or(0),
                message: format!("{key}: {rest}"),
            },
            _ => Error::Config(msg),
        },
        other => other,
    })?;
    config.check().map_err(at_line)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let src = std::fs::read_to_string(path)?;
    parse_config(&src, path)
}

/// A preset name or a configuration file path.
pub fn resolve(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if PRESETS.iter().any(|p| p.name == spec) {
        preset(spec)
    } else if path.exists() {
        load_config(path)
    } else {
        Err(Error::Config(format!(
            "{spec:?} is neither a preset nor an existing file; see list-presets"
        )))
    }
}

// ---------------------------------------------------------------------------
// running

/// Front error against the reference at one output time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontError {
    pub t: f64,
    pub linf: f64,
    pub l1: f64,
    /// `linf / dz`.
    pub linf_cells: f64,
}

/// How the reference front was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    ClosedForm,
    Evolved,
}

/// One macroscopic run (one per policy in a comparison).
#[derive(Clone, Debug)]
pub struct MacroRun {
    pub label: Option<String>,
    pub params: ModelParams,
    pub output: RunOutput,
    pub fronts: Vec<FrontProfile>,
    pub references: Vec<FrontProfile>,
    pub reference_kind: Option<ReferenceKind>,
    pub errors: Vec<FrontError>,
}

#[derive(Clone, Debug)]
pub struct MicroComparison {
    pub state: MicroState,
    /// `sum |R - rho_micro| / sum |R|` at the final time, when the meshes coincide.
    pub relative_l1: Option<f64>,
}

/// Everything a scenario produced, before anything is written.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub runs: Vec<MacroRun>,
    pub micro: Option<MicroComparison>,
    pub report: Option<PolicyReport>,
}

impl Simulation {
    pub fn steps(&self) -> impl Iterator<Item = &StepReport> {
        self.runs.iter().flat_map(|r| r.output.steps.iter())
    }

    pub fn max_ledger_residual(&self) -> f64 {
        self.steps()
            .map(StepReport::relative_residual)
            .fold(0.0, f64::max)
    }

    pub fn top_reached(&self) -> Option<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.output.top_reached)
            .min_by(f64::total_cmp)
    }

    /// Error if data reached the top and the scenario does not allow it.
    pub fn assumption_check(&self) -> Result<()> {
        match self.top_reached() {
            Some(t) if !self.config.allow_outflow => Err(Error::Assumption(format!(
                "data reached the top of the stage axis at t = {t}; shorten t_final"
            ))),
            _ => Ok(()),
        }
    }
}

/// Reference front at time `t`: closed form for flat and V-shaped data under
/// a uniform rate, otherwise the front evolver.
pub fn reference_front(
    initial: &InitialCondition,
    alpha: &RateField,
    params: &ModelParams,
    nx: usize,
    t: f64,
) -> Result<Option<(FrontProfile, ReferenceKind)>> {
    let Some(shape) = initial.front_shape() else {
        return Ok(None);
    };
    let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) / nx as f64).collect();
    if let RateField::Uniform(a) = *alpha {
        let closed: Option<Vec<f64>> = match *initial {
            InitialCondition::ConstantFront { zeta0 } => {
                Some(xs.iter().map(|_| zeta0 + a / params.rho_star * t).collect())
            }
            InitialCondition::VFront { z0 } => Some(
                xs.iter()
                    .map(|&x| {
                        front::front_vshape_solution(x, t, z0, a, params)
                            .or_else(|_| front::front_stalled_solution(x, t, z0, a, params))
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        if let Some(z) = closed {
            return Ok(Some((FrontProfile::new(z, t)?, ReferenceKind::ClosedForm)));
        }
    }
    let z0 = shape.profile(nx)?;
    Ok(Some((
        front::front_evolve(&z0, alpha, params, t)?,
        ReferenceKind::Evolved,
    )))
}

fn finish_run(
    config: &ScenarioConfig,
    grid: &Grid,
    label: Option<String>,
    params: ModelParams,
    output: RunOutput,
) -> Result<MacroRun> {
    let mut run = MacroRun {
        label,
        fronts: Vec::new(),
        references: Vec::new(),
        reference_kind: None,
        errors: Vec::new(),
        params,
        output,
    };
    let Some(plateau) = config.initial.plateau(config.r) else {
        return Ok(run);
    };
    for snap in &run.output.snapshots {
        let f = front::extract_front(snap, plateau, grid);
        if let Some((reference, kind)) = reference_front(
            &config.initial,
            &run.params.alpha,
            &run.params,
            grid.nx,
            snap.t,
        )? {
            let linf = f.linf_distance(&reference);
            run.errors.push(FrontError {
                t: snap.t,
                linf,
                l1: f.l1_distance(&reference),
                linf_cells: linf / grid.dz,
            });
            run.references.push(reference);
            run.reference_kind = Some(kind);
        }
        run.fronts.push(f);
    }
    Ok(run)
}

fn relative_l1(a: &Array2<f64>, b: &Array2<f64>) -> Option<f64> {
    if a.dim() != b.dim() {
        return None;
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = a.iter().map(|x| x.abs()).sum();
    Some(if den == 0.0 { num } else { num / den })
}

/// Runs a scenario in memory.
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation> {
    config.validate()?;
    let grid = config.grid()?;
    let params = config.params();
    let rho0 = config.initial.density(config.r);

    let (runs, report) = if let Some(ctrl) = &config.control {
        let shape = config
            .initial
            .front_shape()
            .expect("validated as front data");
        let setup = ComparisonSetup {
            grid,
            params: params.clone(),
            front: shape,
            options: config.solver,
        };
        let report = control::policy_compare(
            &setup,
            &config.policy_specs(),
            &ctrl.z,
            &config.output_times,
        )?;
        let runs = report
            .runs
            .iter()
            .map(|pr| {
                let p = params
                    .clone()
                    .with_rate(RateField::sampled(pr.alpha.clone()))
                    .with_alpha_bar(pr.policy.alpha_bar());
                let output = RunOutput {
                    snapshots: pr.snapshots.clone(),
                    steps: pr.steps.clone(),
                    top_reached: pr.top_reached,
                };
                finish_run(config, &grid, Some(pr.policy.name().to_string()), p, output)
            })
            .collect::<Result<Vec<_>>>()?;
        (runs, Some(report))
    } else {
        let inflow = config.initial.inflow(config.r);
        let solver = MacroSolver::new(grid, params.clone(), inflow, config.solver)?;
        let state = solver.initial_state(&*rho0)?;
        let output = solver.run(state, &config.output_times)?;
        (
            vec![finish_run(config, &grid, None, params.clone(), output)?],
            None,
        )
    };

    let micro = match config.micro {
        Some(m) => {
            let mut state =
                micro::micro_from_macro(&*rho0, &params.alpha, &params, m.i_max, m.k_max)?;
            let inflow = config.initial.inflow(config.r);
            let f_in: Vec<f64> = state
                .rates()
                .iter()
                .map(|a| a * (inflow / params.rho_star).clamp(0.0, 1.0))
                .collect();
            state.run_until(config.t_final, &f_in)?;
            let last = runs[0]
                .output
                .snapshots
                .last()
                .expect("t_final is an output time");
            let relative_l1 = relative_l1(&last.density, &state.density());
            Some(MicroComparison { state, relative_l1 })
        }
        None => None,
    };

    Ok(Simulation {
        config: config.clone(),
        grid,
        runs,
        micro,
        report,
    })
}

#[derive(Serialize)]
struct LedgerRow {
    t: f64,
    dt: f64,
    mass_before: f64,
    mass_after: f64,
    inflow: f64,
    outflow: f64,
    boundary: f64,
    residual: f64,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    label: Option<&'a str>,
    alpha_bar: f64,
    c_alpha: Option<f64>,
    dt_history: Vec<f64>,
    ledger: Vec<LedgerRow>,
    max_relative_residual: f64,
    top_reached: Option<f64>,
    reference: Option<ReferenceKind>,
    front_errors: &'a [FrontError],
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ScenarioConfig,
    grid: &'a Grid,
    coupling_number: f64,
    runs: Vec<RunMeta<'a>>,
    micro_relative_l1: Option<f64>,
}

/// Writes every artifact of `sim` into `dir`, returning the file paths.
pub fn write_artifacts(sim: &Simulation, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut push = |name: String| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    for run in &sim.runs {
        let prefix = run
            .label
            .as_deref()
            .map(|l| format!("{l}_"))
            .unwrap_or_default();
        for (k, snap) in run.output.snapshots.iter().enumerate() {
            io::write_snapshot(
                &push(format!("{prefix}density_{k:03}.csv")),
                snap,
                &sim.grid,
                &run.params,
            )?;
        }
        for (k, f) in run.fronts.iter().enumerate() {
            io::write_front(&push(format!("{prefix}front_{k:03}.csv")), f)?;
        }
        for (k, f) in run.references.iter().enumerate() {
            io::write_front(&push(format!("{prefix}front_reference_{k:03}.csv")), f)?;
        }
        if !run.errors.is_empty() {
            let rows: Vec<Vec<f64>> = run
                .errors
                .iter()
                .map(|e| vec![e.t, e.linf, e.l1, e.linf_cells])
                .collect();
            io::write_columns(
                &push(format!("{prefix}front_error.csv")),
                &["t", "linf", "l1", "linf_cells"],
                &rows,
            )?;
        }
    }
    if let Some(m) = &sim.micro {
        io::write_lattice_density(
            &push("micro_density.csv".into()),
            &m.state.density(),
            m.state.t(),
        )?;
    }
    if let (Some(report), Some(ctrl)) = (&sim.report, &sim.config.control) {
        let rows = report.rows(sim.config.t_final, ctrl.report_samples);
        io::write_report(&push("qoi_report.csv".into()), &rows)?;
    }

    let runs = sim
        .runs
        .iter()
        .map(|run| {
            let c_alpha = sim
                .report
                .as_ref()
                .and_then(|rep| rep.run(run.label.as_deref().unwrap_or_default()))
                .and_then(|r| r.c_alpha);
            RunMeta {
                label: run.label.as_deref(),
                alpha_bar: run.params.alpha_bar,
                c_alpha,
                dt_history: run.output.dt_history(),
                ledger: run
                    .output
                    .steps
                    .iter()
                    .map(|s| LedgerRow {
                        t: s.t,
                        dt: s.dt,
                        mass_before: s.mass_before,
                        mass_after: s.mass_after,
                        inflow: s.inflow,
                        outflow: s.outflow,
                        boundary: s.boundary,
                        residual: s.residual(),
                    })
                    .collect(),
                max_relative_residual: run
                    .output
                    .steps
                    .iter()
                    .map(StepReport::relative_residual)
                    .fold(0.0, f64::max),
                top_reached: run.output.top_reached,
                reference: run.reference_kind,
                front_errors: &run.errors,
            }
        })
        .collect();
    let meta = Metadata {
        config: &sim.config,
        grid: &sim.grid,
        coupling_number: sim.config.coupling_number(),
        runs,
        micro_relative_l1: sim.micro.as_ref().and_then(|m| m.relative_l1),
    };
    let path = push("metadata.json".into());
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(files)
}

/// What [`run_scenario`] produced.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub simulation: Simulation,
    pub files: Vec<PathBuf>,
}

/// Simulates and writes all artifacts to `dir`.
///
/// A run whose data reached the top of the stage axis still succeeds here;
/// call [`Simulation::assumption_check`] on the outcome to detect it.
pub fn run_scenario(config: &ScenarioConfig, dir: &Path) -> Result<ScenarioOutcome> {
    let simulation = simulate(config)?;
    let files = write_artifacts(&simulation, dir)?;
    Ok(ScenarioOutcome { simulation, files })
}
