//! `dataflow`: run, list and check simulation scenarios.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad configuration, 3 numerical
//! failure, 4 modelling assumption violated (results are still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dataflow_sim::scenario::{self, MicroToggle, ScenarioConfig};
use dataflow_sim::{Error, Scheme, SolverOptions};

#[derive(Parser)]
#[command(
    name = "dataflow",
    version,
    about = "Simulate data flow through processor pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML scenario file and write its artifacts.
    Run(RunArgs),
    /// Print the built-in presets.
    ListPresets,
    /// Check a scenario file without running it.
    Validate {
        /// Preset name or path to a TOML file.
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Upwind,
    Relaxation,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Upwind => Scheme::Upwind,
            SchemeArg::Relaxation => Scheme::Relaxation,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a TOML file.
    scenario: String,
    /// Output directory (default: <root>/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parent of the default output directory.
    #[arg(long, env = "DATAFLOW_OUTPUT_ROOT", default_value = "output")]
    output_root: PathBuf,
    /// Cells per axis on a square grid.
    #[arg(long, conflicts_with_all = ["nx", "nz"])]
    n: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    courant: Option<f64>,
    /// Also run the lattice model on a matching lattice.
    #[arg(long, conflicts_with = "no_micro")]
    micro: bool,
    /// Skip the lattice model even if the scenario enables it.
    #[arg(long)]
    no_micro: bool,
}

impl RunArgs {
    fn apply(&self, mut c: ScenarioConfig) -> ScenarioConfig {
        if let Some(n) = self.n {
            c = c.with_resolution(n);
        }
        if let Some(nx) = self.nx {
            c.nx = nx;
        }
        if let Some(nz) = self.nz {
            c.nz = nz;
        }
        if let Some(t) = self.t_final {
            c = c.with_final_time(t);
        }
        if let Some(s) = self.scheme {
            c.solver = SolverOptions::for_scheme(s.into());
        }
        if let Some(k) = self.courant {
            c.solver.courant = k;
        }
        if self.no_micro {
            c.micro = None;
        } else if self.micro || c.micro.is_some() {
            c.micro = Some(MicroToggle {
                i_max: c.nx,
                k_max: (c.eta * c.nx as f64).round() as usize,
            });
        }
        c
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::Config(_) | Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => 2,
        Error::Domain { .. } | Error::Stability { .. } | Error::Divergence { .. } => 3,
        Error::Assumption(_) => 4,
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let config = args.apply(scenario::resolve(&args.scenario)?);
    config.validate()?;
    if config.coupling_number() > 1.0 {
        eprintln!(
            "warning: eta dz/dx = {:.3} exceeds 1; stalled fronts will be inaccurate (use nx <= nz / eta)",
            config.coupling_number()
        );
    }
    let dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| args.output_root.join(&config.name));
    let outcome = scenario::run_scenario(&config, &dir)?;
    summarise(&outcome.simulation);
    println!("wrote {} files to {}", outcome.files.len(), dir.display());
    outcome.simulation.assumption_check()
}

fn summarise(sim: &scenario::Simulation) {
    let c = &sim.config;
    println!(
        "{}: {}x{} cells, t_final = {}",
        c.name, c.nx, c.nz, c.t_final
    );
    for run in &sim.runs {
        let label = run
            .label
            .as_deref()
            .map(|l| format!("[{l}] "))
            .unwrap_or_default();
        println!("{label}{} steps", run.output.steps.len());
        if let Some(e) = run.errors.last() {
            println!(
                "{label}front error at t = {}: max {:.3e} ({:.2} cells)",
                e.t, e.linf, e.linf_cells
            );
        }
    }
    println!(
        "max relative mass residual {:.3e}",
        sim.max_ledger_residual()
    );
    if let Some(m) = &sim.micro {
        match m.relative_l1 {
            Some(l1) => println!("lattice vs continuum relative L1 {l1:.4}"),
            None => println!(
                "lattice {}x{} differs from the {}x{} grid; no lattice vs continuum comparison",
                m.state.i_max(),
                m.state.k_max(),
                c.nx,
                c.nz
            ),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets => {
            for p in scenario::list_presets() {
                println!("{p}");
            }
            Ok(())
        }
        Command::Validate { scenario: s } => {
            scenario::resolve(s).map(|c| println!("{}: ok", c.name))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
