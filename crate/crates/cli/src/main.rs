//! Command-line front end for the hierarchical federated learning simulator.
//!
//! Log verbosity follows `RUST_LOG` (e.g. `RUST_LOG=info`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use leohfl_core::aggregation::Scheme;
use leohfl_core::association::AssociationMode;
use leohfl_core::harness::{self, MetricsLog, RunOutput, Scenario};

#[derive(Parser)]
#[command(name = "leohfl", version, about = "Hierarchical federated learning over a LEO constellation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with one aggregation scheme and write reports.
    Run(RunArgs),
    /// Train with several schemes on the same seed and compare them.
    Compare(CompareArgs),
    /// Print mean contact window and computing frequency per association rule.
    Contacts(ContactArgs),
    /// Write the built-in reference scenario as JSON.
    Scenario {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; the built-in reference scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Global rounds T.
    #[arg(long)]
    rounds: Option<usize>,
    /// Sub-region rounds M per global round.
    #[arg(long)]
    subrounds: Option<usize>,
    /// Association rule: proposed or nearest.
    #[arg(long)]
    assoc: Option<AssociationMode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.scenario {
            Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => Scenario::reference(),
        };
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(t) = self.rounds {
            sc.global_rounds = t;
        }
        if let Some(m) = self.subrounds {
            sc.subregion_rounds = m;
        }
        if let Some(a) = self.assoc {
            sc.association_mode = a;
        }
        if let Some(b) = self.beta {
            sc.aggregator.beta = b;
        }
        if let Some(k) = self.kappa {
            sc.aggregator.kappa = k;
        }
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Aggregation scheme: fedavg, fedavep, fedindi, fedlol or fedsel.
    #[arg(long)]
    agg: Option<Scheme>,
    /// Also run one FedAvg model per gateway alone and compare against it.
    #[arg(long)]
    single_gateway: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',', default_value = "fedavg,fedavep,fedindi,fedlol,fedsel")]
    schemes: Vec<Scheme>,
}

#[derive(Args)]
struct ContactArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seeds 0..n are sampled.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Random instants per seed.
    #[arg(long, default_value_t = 200)]
    instants: usize,
    #[arg(long, default_value_t = 1e5)]
    horizon_s: f64,
}

fn report_audit(label: &str, out: &RunOutput) {
    let a = &out.audit;
    log::info!(
        "{label}: {} time checks, {} energy checks, {} violations",
        a.time_checks,
        a.energy_checks,
        a.violations.len()
    );
    for v in &a.violations {
        log::warn!("{label}: {v:?}");
    }
}

fn print_final(label: &str, log: &MetricsLog) {
    if let Some(eval) = log.final_eval() {
        let cells: Vec<String> = eval
            .iter()
            .map(|e| format!("{} dB: {:.3} dB / {:.4}", e.snr_db, e.psnr_db, e.ssim))
            .collect();
        println!("{label:>10}  {}", cells.join("  "));
    }
}

fn write_reports(runs: &[(String, &MetricsLog)], out: &Path) -> Result<()> {
    let files = harness::emit_reports(runs, out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let mut sc = args.common.scenario()?;
            if let Some(s) = args.agg {
                sc.aggregator.scheme = s;
            }
            let main = harness::run(&sc)?;
            report_audit("hfl", &main);
            let label = sc.aggregator.scheme.to_string();
            if args.single_gateway {
                let singles = harness::run_single_gateway(&sc)?;
                let mut runs = vec![(format!("hfl_{label}"), &main.log)];
                for (g, o) in sc.gateways.iter().zip(&singles) {
                    report_audit(&format!("gw{}", g.id), o);
                    runs.push((format!("gw{}", g.id), &o.log));
                }
                for (l, log) in &runs {
                    print_final(l, log);
                }
                write_reports(&runs, &args.common.out)?;
            } else {
                print_final(&label, &main.log);
                write_reports(&[(label, &main.log)], &args.common.out)?;
            }
        }
        Command::Compare(args) => {
            let sc = args.common.scenario()?;
            if args.schemes.is_empty() {
                bail!("no schemes given");
            }
            let mut outs = Vec::new();
            for s in &args.schemes {
                let mut one = sc.clone();
                one.aggregator.scheme = *s;
                let o = harness::run(&one)?;
                report_audit(s.name(), &o);
                outs.push((s.to_string(), o));
            }
            let runs: Vec<(String, &MetricsLog)> = outs.iter().map(|(l, o)| (l.clone(), &o.log)).collect();
            for (l, log) in &runs {
                print_final(l, log);
            }
            write_reports(&runs, &args.common.out)?;
        }
        Command::Contacts(args) => {
            let sc = match &args.scenario {
                Some(p) => Scenario::load(p)?,
                None => Scenario::reference(),
            };
            println!("seed,mode,mean_window_s,mean_freq_ghz,samples");
            for seed in 0..args.seeds {
                for mode in [AssociationMode::Proposed, AssociationMode::Nearest] {
                    let s = harness::contact_statistics(&sc, mode, seed, args.instants, args.horizon_s);
                    let name = match mode {
                        AssociationMode::Proposed => "proposed",
                        AssociationMode::Nearest => "nearest",
                    };
                    println!("{seed},{name},{:.1},{:.4},{}", s.mean_window_s, s.mean_freq_hz / 1e9, s.samples);
                }
            }
        }
        Command::Scenario { out } => {
            let json = Scenario::reference().to_json();
            match out {
                Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
