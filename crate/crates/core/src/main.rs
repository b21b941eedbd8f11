use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use quadlab::cvs::{cvs_finite, cvs_infinite, parse_maps, InfiniteVariant};
use quadlab::experiments::{self, stream};
use quadlab::report::{validate_report_json, ExperimentReport};
use quadlab::samplers::{
    sample_rho, sample_rho_minus, sample_rho_plus, sample_rho_plus_exact, sample_t_k, sample_theta_bar, sample_theta_infinity,
    sample_theta_infinity_rerooted, sample_theta_n, SampleError, SamplerBudget,
};
use quadlab::tree::{LabeledTree, SpineTree};

#[derive(Parser)]
#[command(name = "quadlab", version, about = "Labeled trees, quadrangulations and their label chains")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format: text or json for reports; trees or edge_list for
    /// samples; edge_list, csv_processes or json_report for export.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum LawName {
    Rho,
    #[value(alias = "rho-plus")]
    RhoPlus,
    #[value(alias = "rho-minus")]
    RhoMinus,
    #[value(alias = "theta-n")]
    ThetaN,
    #[value(name = "T_k", alias = "t_k")]
    TK,
    #[value(alias = "theta-inf")]
    ThetaInf,
    #[value(name = "theta_bar1", alias = "theta-bar1")]
    ThetaBar1,
    #[value(name = "theta_bar2", alias = "theta-bar2")]
    ThetaBar2,
    #[value(alias = "theta-inf-rerooted")]
    ThetaInfRerooted,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Laws,
    Green,
    Cvs,
    Kernel,
    Scaling,
    Submap,
    Properties,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Which {
    #[value(alias = "min-label")]
    MinLabel,
    Scaling,
    #[value(alias = "last-hit")]
    LastHit,
    #[value(alias = "yj-histogram")]
    YjHistogram,
}

#[derive(Subcommand)]
enum Command {
    /// Draw trees (or their maps) from one of the laws.
    Sample {
        law: LawName,
        #[arg(long, default_value_t = 0)]
        x: i64,
        #[arg(long, default_value_t = 1)]
        n: i64,
        #[arg(long, default_value_t = 1)]
        k: i64,
        /// Spine height for the infinite trees.
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_edges: usize,
        /// Use rejection for rho_plus instead of the exact sampler.
        #[arg(long)]
        rejection: bool,
    },
    /// Run a verification suite and report pass/fail per statistic.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        n: i64,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Coupling frequencies of the conditioned tree and the half-plane trees.
    Couple {
        #[arg(long, default_value_t = 30)]
        n: i64,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        replicates: u64,
    },
    /// Containment of map balls in the tree windows.
    Localize {
        #[arg(long, default_value_t = 30)]
        n: i64,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        replicates: u64,
    },
    /// Distributional statistics of the chains and trees.
    Stats {
        which: Which,
        #[arg(long, default_value_t = 5)]
        n: i64,
        #[arg(long, default_value_t = 3)]
        k: i64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Convert tree files, map files or reports.
    Export {
        #[arg(long)]
        input: PathBuf,
        /// Tree used for the process export.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Experiment(#[from] experiments::ExperimentError),
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                _ => 3,
            })
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_report(cli: &Cli, r: &ExperimentReport) -> Result<Outcome, CliError> {
    let text = match cli.format.as_deref() {
        None | Some("text") => r.to_text(),
        Some("json") => r.to_json() + "\n",
        Some(f) => return Err(CliError::Usage(format!("unknown report format `{f}` (text, json)"))),
    };
    emit(cli, &text)?;
    Ok(if r.passed() { Outcome::Ok } else { Outcome::Failed })
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Sample { law, x, n, k, horizon, count, max_edges, rejection } => {
            let budget = SamplerBudget { horizon: *horizon, ..SamplerBudget::with_edges(*max_edges) };
            let maps = match cli.format.as_deref() {
                None | Some("trees") => false,
                Some("edge_list") => true,
                Some(f) => return Err(CliError::Usage(format!("unknown sample format `{f}` (trees, edge_list)"))),
            };
            let draws: Vec<Result<Drawn, SampleError>> = (0..*count)
                .into_par_iter()
                .map(|i| draw(*law, *x, *n, *k, *horizon, *rejection, &mut stream(seed, 0, i), &budget))
                .collect();
            let mut out = String::new();
            let mut trees = Vec::new();
            let mut failures = 0u64;
            for (i, d) in draws.into_iter().enumerate() {
                match d {
                    Ok(d) => {
                        if maps {
                            out.push_str(&d.map_text().map_err(|m| CliError::Usage(format!("sample {i}: {m}")))?);
                        } else {
                            out.push_str(&d.tree.to_text());
                            out.push('\n');
                        }
                        trees.push(d.tree);
                    }
                    Err(e) => {
                        eprintln!("sample {i}: {e}");
                        failures += 1;
                    }
                }
            }
            emit(cli, &out)?;
            let theta_root = matches!(law, LawName::ThetaN).then_some(*n);
            let summary = experiments::sample_summary(&trees, failures, theta_root, seed);
            eprint!("{}", summary.to_text());
            Ok(if failures == 0 && summary.passed() { Outcome::Ok } else { Outcome::Failed })
        }
        Command::Verify { suite, n, samples } => {
            let r = match suite {
                Suite::Laws => experiments::law_equality(*n, samples.unwrap_or(100_000), 2, seed)?,
                Suite::Green => ExperimentReport::merge(
                    "green",
                    seed,
                    vec![experiments::green_audit(8, 8, 1e-9)?, experiments::hstar_audit(30, 10)?],
                ),
                Suite::Cvs => ExperimentReport::merge("cvs", seed, vec![experiments::cvs_audit(3)?, experiments::property_suite(20, 10_000, seed)?]),
                Suite::Kernel => experiments::kernel_limit(5, 5, 500, &[200, 500, 1000])?,
                Suite::Scaling => experiments::lamperti(10_000)?,
                Suite::Submap => experiments::submap_law(samples.unwrap_or(100_000), 2, seed)?,
                Suite::Properties => experiments::property_suite(samples.unwrap_or(20), 10_000, seed)?,
            };
            emit_report(cli, &r)
        }
        Command::Couple { n, beta, replicates } => emit_report(cli, &experiments::couple(*n, beta, *replicates, seed)?),
        Command::Localize { n, alpha, beta, replicates } => emit_report(cli, &experiments::localize(*n, alpha, *beta, *replicates, seed)?),
        Command::Stats { which, n, k, samples } => {
            let r = match which {
                Which::MinLabel => experiments::min_label(*n, *k, *samples, seed)?,
                Which::Scaling => experiments::lamperti(*n as usize)?,
                Which::LastHit => experiments::last_hit(*n, *samples, seed)?,
                Which::YjHistogram => experiments::yj_histogram(*n, *samples, seed)?,
            };
            emit_report(cli, &r)
        }
        Command::Export { input, index } => {
            let path = input.display().to_string();
            let text = fs::read_to_string(input)?;
            let bad = |msg: String| CliError::Input { path: path.clone(), msg };
            let format = cli.format.as_deref().unwrap_or("edge_list");
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim_start();
            let out = match format {
                "json_report" => {
                    validate_report_json(&text).map_err(bad)?;
                    let r = ExperimentReport::from_json(&text).map_err(|e| bad(e.to_string()))?;
                    r.to_json() + "\n"
                }
                "edge_list" if first.starts_with("quad ") => {
                    let maps = parse_maps(&text).map_err(|e| bad(e.to_string()))?;
                    maps.iter().map(|q| q.to_text()).collect()
                }
                "edge_list" => {
                    let mut s = String::new();
                    for t in read_trees(&text).map_err(bad)? {
                        s.push_str(&cvs_finite(&t).map_err(|e| bad(e.to_string()))?.to_text());
                    }
                    s
                }
                "csv_processes" => {
                    let trees = read_trees(&text).map_err(bad)?;
                    let t = trees.get(*index).ok_or_else(|| bad(format!("no tree at index {index}")))?;
                    let (contour, labels) = t.contour_label_processes();
                    let mut s = String::from("contour,label\n");
                    for (c, l) in contour.iter().zip(&labels) {
                        s.push_str(&format!("{c},{l}\n"));
                    }
                    s
                }
                f => return Err(CliError::Usage(format!("unknown export format `{f}` (edge_list, csv_processes, json_report)"))),
            };
            emit(cli, &out)?;
            Ok(Outcome::Ok)
        }
    }
}

fn read_trees(text: &str) -> Result<Vec<LabeledTree>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LabeledTree::from_text(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

struct Drawn {
    tree: LabeledTree,
    spine: Option<(SpineTree, InfiniteVariant)>,
    /// Finite truncation of an infinite tree without a map construction.
    stub: bool,
}

impl Drawn {
    fn finite(tree: LabeledTree) -> Self {
        Drawn { tree, spine: None, stub: false }
    }

    fn map_text(&self) -> Result<String, String> {
        if self.stub {
            return Err("no map export for this truncated law".into());
        }
        match &self.spine {
            Some((st, v)) => cvs_infinite(st, *v).map(|p| p.quad.to_text()).map_err(|e| e.to_string()),
            None => cvs_finite(&self.tree).map(|q| q.to_text()).map_err(|e| e.to_string()),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn draw(
    law: LawName,
    x: i64,
    n: i64,
    k: i64,
    horizon: usize,
    rejection: bool,
    rng: &mut rand_chacha::ChaCha8Rng,
    budget: &SamplerBudget,
) -> Result<Drawn, SampleError> {
    let spine = |st: SpineTree, v: InfiniteVariant| Drawn { tree: st.flatten().tree, spine: Some((st, v)), stub: false };
    Ok(match law {
        LawName::Rho => Drawn::finite(sample_rho(x, rng, budget)?),
        LawName::RhoPlus if rejection => Drawn::finite(sample_rho_plus(x, rng, budget)?.0),
        LawName::RhoPlus => Drawn::finite(sample_rho_plus_exact(x, rng, budget)?),
        LawName::RhoMinus => Drawn::finite(sample_rho_minus(x, rng, budget)?.0),
        LawName::ThetaN => Drawn::finite(sample_theta_n(n, rng, budget)?.tree),
        LawName::TK => Drawn::finite(sample_t_k(k, rng, budget)?.tree),
        LawName::ThetaInf => spine(sample_theta_infinity(horizon, rng, budget)?, InfiniteVariant::SMinus),
        LawName::ThetaBar1 => spine(sample_theta_bar(1, horizon, rng, budget)?, InfiniteVariant::S1),
        LawName::ThetaBar2 => spine(sample_theta_bar(2, horizon, rng, budget)?, InfiniteVariant::S2),
        LawName::ThetaInfRerooted => Drawn { stub: true, ..Drawn::finite(sample_theta_infinity_rerooted(n, rng, budget)?.tree) },
    })
}
