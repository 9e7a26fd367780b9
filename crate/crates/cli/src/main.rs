use std::fs::File;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use richq_core::harness::{run_experiment, Experiment, ExperimentConfig};
use richq_core::policy::{
    default_grid, estimate_info_ratios, fit_cost_model, read_cost_observations, select_query_config, InfoRateTable,
    RatioSettings,
};
use richq_core::response::QueryKind;
use richq_core::session::SessionManager;
use richq_core::theory::{stopping_bounds, BoundInput};

#[derive(Parser)]
#[command(name = "richq", version, about = "Active classifier learning from label, selection and ranking queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment against a simulated annotator.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace output, overriding the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Bounds on the expected number of queries to reach |Sigma| <= eps^d.
    Bounds {
        #[arg(long)]
        d: usize,
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value = "label")]
        kind: QueryKind,
        #[arg(long, default_value_t = 1)]
        size: usize,
        /// Per-query information floor in bits.
        #[arg(long = "L", default_value_t = 1.0)]
        l: f64,
    },
    /// Fit linear response-time models to `kind,set_size,seconds` rows.
    FitCost {
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate information ratios and the best query configuration.
    Ratios {
        #[arg(long)]
        config: PathBuf,
        /// Interaction counts of the configured run to probe at (0 = prior).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        at: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        min_size: usize,
        #[arg(long, default_value_t = 10)]
        max_size: usize,
    },
    /// Serve annotation sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// `name=path` configs that clients can refer to by name.
        #[arg(long = "config", value_parser = parse_named)]
        configs: Vec<(String, PathBuf)>,
    },
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.into(), path.into())),
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if output.is_some() {
                cfg.output = output;
            }
            let out = run_experiment(&cfg)?;
            let last = out.records.last();
            println!("interactions {}", out.records.len());
            if let Some(r) = last {
                println!("mse_to_gt {:.6}", r.mse_to_gt);
                println!("accuracy {:.4}", r.accuracy);
                println!("log_det_sigma {:.4}", r.log_det_sigma);
                println!("predicted_seconds {:.1}", r.cum_predicted_seconds);
            }
            if let Some(path) = &cfg.output {
                println!("trace {}", path.display());
            }
            if let Some(e) = out.error {
                bail!("run aborted after {} interactions: {e}", out.records.len());
            }
        }
        Command::Bounds { d, m, epsilon, kind, size, l } => {
            let b = stopping_bounds(&BoundInput { d, m, epsilon, kind, set_size: size, l })?;
            println!("lower {:.4} (raw {:.4})", b.lower, b.lower_raw);
            println!("upper {:.4}", b.upper);
        }
        Command::FitCost { input } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let model = fit_cost_model(&read_cost_observations(file)?)?;
            model.write_csv(std::io::stdout().lock())?;
        }
        Command::Ratios { config, at, min_size, max_size } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            // the run only has to reach the last snapshot
            let last = at.iter().copied().max().unwrap_or(0);
            cfg.max_interactions = Some(cfg.max_interactions.map_or(last, |m| m.max(last)));
            let experiment = Experiment::prepare(&cfg)?;
            let probes = experiment.belief_snapshots(&at)?;
            let l = &experiment.learner;
            let grid: Vec<_> =
                default_grid(min_size..=max_size).into_iter().filter(|(k, _)| *k != QueryKind::SelectLow).collect();
            let settings = RatioSettings {
                committee_size: cfg.committee_size,
                disagreement: cfg.disagreement,
                seed: cfg.seed(),
                ..RatioSettings::default()
            };
            let ratios = estimate_info_ratios(&l.pool, &probes, &grid, &l.params, &settings)?;
            let table = InfoRateTable::from_ratios(&ratios, &l.costs);
            println!("kind,set_size,ratio,seconds,ratio_per_second");
            for r in &table.rows {
                println!("{},{},{:.4},{:.3},{:.5}", r.kind, r.set_size, r.ratio, r.cost, r.rate);
            }
            let (kind, size) = select_query_config(&table)?;
            println!("best {kind} {size}");
        }
        Command::Serve { addr, configs } => {
            let manager = SessionManager::new();
            for (name, path) in configs {
                let cfg = ExperimentConfig::load(&path).with_context(|| format!("config {name}"))?;
                manager.register(name, cfg)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {addr}");
            rt.block_on(richq_server::serve(addr, Arc::new(manager)))?;
        }
    }
    Ok(())
}
