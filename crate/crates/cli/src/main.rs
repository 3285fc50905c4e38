use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensus_net::artifacts::{self, CertificationFile};
use consensus_net::gains::{certify, suggest_matched, suggest_unmatched};
use consensus_net::graph::{build_laplacian, load_graph};
use consensus_net::scenario::{builtin, load_scenario, BUILTINS};
use consensus_net::{plot, Error, Gains, Result};

/// Certify and simulate integral consensus controllers on directed graphs.
#[derive(Debug, Parser)]
#[command(name = "consensus-net", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Graph inspection.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Gain certification and suggestion.
    #[command(subcommand)]
    Gains(GainsCommand),
    /// Built-in scenario export.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Run a scenario and write trajectory, metrics, summary and certification.
    Simulate(SimulateArgs),
    /// Run several scenarios in parallel, each into its own subdirectory.
    Batch(BatchArgs),
    /// Render one series of a finished run as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Subcommand)]
enum GraphCommand {
    /// Laplacian, spanning-tree test, left eigenvector and spectral norm.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum GainsCommand {
    /// Evaluate every stability condition for the scenario's gains.
    Certify {
        /// Scenario file or built-in name.
        scenario: String,
        #[arg(long)]
        json: bool,
    },
    /// Propose gains satisfying the conditions, keeping the scenario's free gains.
    Suggest {
        scenario: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    /// Print a built-in scenario as JSON (or write it to a file).
    Export {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUILTINS))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SimOverrides {
    /// Override the horizon in seconds.
    #[arg(long)]
    t_final: Option<f64>,
    /// Override the step size in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Shrink dt so that it divides t_final and every switch time.
    #[arg(long)]
    align_dt: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file or built-in name.
    scenario: String,
    #[arg(long, env = "CONSENSUS_NET_OUT", default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: SimOverrides,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[arg(required = true)]
    scenarios: Vec<String>,
    #[arg(long, env = "CONSENSUS_NET_OUT", default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: SimOverrides,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Output directory of a previous simulate run.
    dir: PathBuf,
    /// One of x, y, dhat, errors, lyapunov.
    #[arg(long)]
    series: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Graph(GraphCommand::Analyze { file, json }) => graph_analyze(&file, json),
        Command::Gains(GainsCommand::Certify { scenario, json }) => gains_certify(&scenario, json),
        Command::Gains(GainsCommand::Suggest { scenario, json }) => gains_suggest(&scenario, json),
        Command::Scenario(ScenarioCommand::Export { name, out }) => {
            let s = builtin(&name).expect("clap restricts names to built-ins");
            match out {
                Some(path) => consensus_net::scenario::save_scenario(&s, &path),
                None => {
                    print!("{}", s.to_json());
                    Ok(())
                }
            }
        }
        Command::Simulate(args) => {
            let summary = simulate_one(&args.scenario, &args.out, &args.overrides)?;
            println!("{summary}");
            Ok(())
        }
        Command::Batch(args) => batch(&args),
        Command::Plot(args) => {
            let path = plot::plot(&args.dir, &args.series)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn graph_analyze(file: &Path, json: bool) -> Result<()> {
    let g = load_graph(file)?;
    let lap = build_laplacian(&g)?;
    let v: Option<Vec<f64>> = lap.v_left.as_ref().map(|v| v.iter().copied().collect());
    if json {
        return print_json(serde_json::json!({
            "n": lap.n(),
            "laplacian": lap.l.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "has_spanning_tree": lap.has_spanning_tree,
            "v_left": v,
            "lambda_L": lap.lambda_l,
            "nonzero_eigenvalue_real_parts_positive": lap.nonzero_eigenvalue_real_parts_positive,
        }));
    }
    println!("agents:            {}", lap.n());
    println!("spanning tree:     {}", lap.has_spanning_tree);
    match v {
        Some(v) => println!("left eigenvector:  {v:?}"),
        None => println!("left eigenvector:  none (no directed spanning tree)"),
    }
    println!("lambda_L (‖L‖₂):   {}", lap.lambda_l);
    println!(
        "Re λ > 0 (λ ≠ 0):  {}",
        lap.nonzero_eigenvalue_real_parts_positive
    );
    Ok(())
}

fn gains_certify(spec: &str, json: bool) -> Result<()> {
    let s = load_scenario(spec)?;
    let lap = s.laplacian()?;
    let cert = s.certificate(&lap)?;
    let report = certify(&s.gains, &lap, &cert)?;
    if json {
        return print_json(serde_json::to_value(CertificationFile {
            report,
            certificate: cert.to_export(),
            v_left: lap.v()?.iter().copied().collect(),
            lambda_l: lap.lambda_l,
        })?);
    }
    println!(
        "lambda_P = {:.6e}, lambda_L = {:.6e}, residual = {:.3e}",
        cert.lambda_p, cert.lambda_l, cert.residual
    );
    print!("{}", report.to_table());
    Ok(())
}

fn gains_suggest(spec: &str, json: bool) -> Result<()> {
    let s = load_scenario(spec)?;
    let lap = s.laplacian()?;
    let cert = s.certificate(&lap)?;
    let suggested = match s.gains {
        Gains::Matched(g) => {
            Gains::Matched(suggest_matched(g.gamma1, g.gamma3, g.mu, g.b, &lap, &cert)?)
        }
        Gains::Unmatched(g) => {
            Gains::Unmatched(suggest_unmatched(g.k_x, g.k_s, g.alpha2, &lap, &cert)?)
        }
    };
    let report = certify(&suggested, &lap, &cert)?;
    let gains_json = match &suggested {
        Gains::Matched(g) => serde_json::to_value(g)?,
        Gains::Unmatched(g) => serde_json::to_value(g)?,
    };
    if json {
        return print_json(serde_json::json!({ "gains": gains_json, "report": report }));
    }
    println!("{}", serde_json::to_string_pretty(&gains_json)?);
    print!("{}", report.to_table());
    Ok(())
}

fn simulate_one(spec: &str, out: &Path, o: &SimOverrides) -> Result<String> {
    let s = load_scenario(spec)?.with_sim_overrides(o.t_final, o.dt, o.align_dt)?;
    let run = artifacts::run(&s, out)?;
    let sm = &run.summary;
    let mut text = format!(
        "{}: {} samples to t = {} s (dt = {}), certification {}\n  final ‖e_x‖, ‖e_y‖, ‖e_d‖ = {:.3e}, {:.3e}, {:.3e}",
        sm.scenario,
        sm.samples,
        sm.t_final,
        sm.dt,
        if sm.certification_passed { "passed" } else { "failed" },
        sm.final_errors[0],
        sm.final_errors[1],
        sm.final_errors[2],
    );
    if let Some(m) = &sm.matched {
        for c in &m.estimation_limits {
            text.push_str(&format!(
                "\n  dhat({}) = {:?}  (d/gamma3 = {:?})",
                c.t,
                rounded(&c.delta_hat),
                rounded(&c.predicted)
            ));
        }
    }
    if let Some(u) = &sm.unmatched {
        if let Some(rate) = u.decay_rate {
            text.push_str(&format!(
                "\n  averaged velocity decay rate {rate:.4} (k_d = {})",
                u.k_d
            ));
        }
        let freqs: Vec<String> = u
            .orbit_fits
            .iter()
            .map(|o| {
                o.fit
                    .as_ref()
                    .map_or("-".into(), |f| format!("{:.4}", f.angular_frequency))
            })
            .collect();
        text.push_str(&format!(
            "\n  orbit frequencies [{}] (sqrt(k_s·alpha1) = {:.4}); tracking error {:.3e}",
            freqs.join(", "),
            u.predicted_angular_frequency,
            u.tracking_error
        ));
    }
    text.push_str(&format!("\n  artifacts in {}", out.display()));
    Ok(text)
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn batch(args: &BatchArgs) -> Result<()> {
    let results: Vec<(String, Result<String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = args
            .scenarios
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let stem = Path::new(spec)
                    .file_stem()
                    .map_or_else(|| format!("run{k}"), |s| s.to_string_lossy().into_owned());
                let dir = args.out.join(format!("{k:02}-{stem}"));
                let overrides = &args.overrides;
                (
                    spec.clone(),
                    scope.spawn(move || simulate_one(spec, &dir, overrides)),
                )
            })
            .collect();
        handles
            .into_iter()
            .map(|(spec, h)| (spec, h.join().expect("simulation thread panicked")))
            .collect()
    });
    let mut first_error: Option<Error> = None;
    for (spec, result) in results {
        match result {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("{spec}: error: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}
