//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input (files, schema, network
//! structure), 3 numerical failure (non-finite state, step-size collapse).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phgrid::analysis::{classify_steady_state, ClassifierConfig, SignalLayout};
use phgrid::dynamics::System;
use phgrid::integrator::{integrate, IntegratorConfig, Method};
use phgrid::io;
use phgrid::netmodel::{contraction_certificate, state_dim, validate_network};
use phgrid::scenarios::{
    builtin_scenarios, default_threads, run_sweep, scenario_by_name, InitialPolicy, Scenario,
};
use phgrid::Error;

#[derive(Parser)]
#[command(name = "phgrid", version, about = "Port-Hamiltonian power-network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a network or scenario and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Classify the steady state of a trajectory CSV.
    Analyze(AnalyzeArgs),
    /// Run a parameter sweep and write a CSV table.
    Sweep(SweepArgs),
    /// Check structural assumptions and print the contraction certificate.
    Verify {
        #[arg(long)]
        net: PathBuf,
    },
    /// List or export the built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Network or scenario file.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    net: Option<PathBuf>,
    /// Built-in scenario name or scenario file.
    #[arg(long)]
    scenario: Option<String>,
    /// End time (s); defaults to the scenario horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Fixed RK4 step (s).
    #[arg(long, conflicts_with = "tol")]
    dt: Option<f64>,
    /// Adaptive Dormand–Prince tolerance (absolute and relative).
    #[arg(long)]
    tol: Option<f64>,
    /// Output sampling interval (s).
    #[arg(long)]
    sample_every: Option<f64>,
    /// Random initial state seed (overrides the scenario policy).
    #[arg(long)]
    seed: Option<u64>,
    /// Random initial state scale.
    #[arg(long)]
    scale: Option<f64>,
    /// Start from the no-load speed guess instead of a random state.
    #[arg(long, conflicts_with = "seed")]
    steady_guess: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trajectory CSV.
    #[arg(long)]
    traj: PathBuf,
    /// Network file, used to pick the middle-bus probe.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Probe capacitor label, e.g. sh5.
    #[arg(long)]
    probe: Option<String>,
    /// Where to write the report (TOML); printed to stdout as well.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to PHGRID_THREADS or the core count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum ScenarioAction {
    List,
    Export {
        name: String,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite { .. } | Error::StepFailure { .. } | Error::DegenerateDirection { .. } => 3,
        _ => 2,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_scenario(args: &SimulateArgs) -> Result<Scenario, Error> {
    if let Some(name) = &args.scenario {
        if let Some(sc) = scenario_by_name(name) {
            return Ok(sc);
        }
        return io::read_scenario(Path::new(name));
    }
    let path = args.net.as_ref().expect("clap enforces --net or --scenario");
    let text = std::fs::read_to_string(path)?;
    if let Ok(sc) = io::parse_scenario(&text) {
        return Ok(sc);
    }
    let network = io::parse_network(&text)?;
    Ok(Scenario {
        name: path.display().to_string(),
        network,
        initial: InitialPolicy::Random {
            seed: 1,
            scale: 100.0,
        },
        horizon: 0.0,
        integrator: phgrid::scenarios::default_integrator(),
        expected: None,
    })
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut sc = load_scenario(&args)?;
    if let Some(t) = args.t_end {
        sc.horizon = t;
    }
    if sc.horizon == 0.0 {
        return Err(Error::Config("--t-end is required with a plain network file".into()));
    }
    let every = args.sample_every.unwrap_or(sc.integrator.sample_every);
    sc.integrator = match (args.dt, args.tol) {
        (Some(dt), _) => IntegratorConfig::rk4(dt, every),
        (None, Some(tol)) => IntegratorConfig {
            method: Method::Rk45 {
                abs_tol: tol,
                rel_tol: tol,
                dt_min: 1e-12,
                dt_max: every,
            },
            sample_every: every,
        },
        (None, None) => IntegratorConfig {
            sample_every: every,
            ..sc.integrator
        },
    };
    if args.steady_guess {
        sc.initial = InitialPolicy::SteadyGuess;
    } else if args.seed.is_some() || args.scale.is_some() {
        let (seed0, scale0) = match sc.initial {
            InitialPolicy::Random { seed, scale } => (seed, scale),
            InitialPolicy::SteadyGuess => (1, 100.0),
        };
        sc.initial = InitialPolicy::Random {
            seed: args.seed.unwrap_or(seed0),
            scale: args.scale.unwrap_or(scale0),
        };
    }
    sc.validate()?;
    let sys = System::new(sc.network.clone())?;
    let x0 = sc.initial_state(&sys);
    let traj = integrate(&sys, &x0, (0.0, sc.horizon), &sc.integrator)?;
    let mut w = create(&args.out)?;
    io::write_trajectory_csv(&mut w, &io::state_columns(&sys), &traj)?;
    w.flush()?;
    eprintln!("wrote {} samples to {}", traj.len(), args.out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let (columns, traj) = io::read_trajectory_csv(BufReader::new(File::open(&args.traj)?))?;
    let layout = match &args.net {
        Some(path) => {
            let sys = System::new(io::read_network(path)?)?;
            let cols = io::state_columns(&sys);
            if cols != columns {
                return Err(Error::Format("trajectory columns do not match the network".into()));
            }
            SignalLayout::from_system(&sys)
        }
        None => SignalLayout::from_columns(&columns),
    };
    let cfg = ClassifierConfig {
        probe: args.probe,
        ..Default::default()
    };
    let report = classify_steady_state(&traj, &layout, &cfg)?;
    let text = io::report_to_string(&report)?;
    print!("{text}");
    if let Some(path) = args.report_out {
        std::fs::write(path, &text)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let spec = io::read_sweep_spec(&args.spec)?;
    let rows = run_sweep(&spec, args.threads.unwrap_or_else(default_threads))?;
    let mut w = create(&args.out)?;
    io::write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    io::write_sweep_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}

fn verify(path: &Path) -> Result<(), Error> {
    let net = io::read_network(path)?;
    let violations = validate_network(&net);
    if !violations.is_empty() {
        return Err(Error::Structural(violations));
    }
    let sys = System::new(net)?;
    let cert = contraction_certificate(sys.net())?;
    let skew = sys.network_matrix().is_skew_symmetric();
    println!("buses = {}", sys.net().buses.len());
    println!("edges = {}", sys.net().edges.len());
    println!("state_dim = {}", state_dim(sys.net()));
    println!("w_skew_symmetric = {skew}");
    println!("lambda_min_r = {}", cert.lambda_min_r);
    println!("hessian_floor_a = {:e}", cert.hessian_floor_a);
    println!("rate_c = {:e}", cert.rate_c);
    println!("remark_estimate = {:e}", cert.remark_estimate);
    if !skew || !(cert.rate_c > 0.0) {
        return Err(Error::Config("structural assumptions do not hold".into()));
    }
    Ok(())
}

fn scenario(action: ScenarioAction) -> Result<(), Error> {
    match action {
        ScenarioAction::List => {
            for sc in builtin_scenarios() {
                let expected = sc.expected.map_or("-".to_string(), |c| c.to_string());
                println!("{}\thorizon={} s\texpected={expected}", sc.name, sc.horizon);
            }
        }
        ScenarioAction::Export { name, out } => {
            let sc = scenario_by_name(&name)
                .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))?;
            let text = io::scenario_to_string(&sc)?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify { net } => verify(&net),
        Command::Scenario { action } => scenario(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Structural(v)) => {
            eprintln!("error: invalid network");
            for x in &v {
                eprintln!("  {x}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
