use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nocsim::check::run_check;
use nocsim::experiment::{
    boundary_summary, figure_config, figure_files, occupancy_csv, parse_mesh, report_summary, run_figure, run_sweep,
    simulate, write_atomic, zero_load, ExperimentConfig, Figure, Sweep, SweepPoint,
};
use nocsim::link::Variant;
use nocsim::topology::MeshSpec;

#[derive(Parser)]
#[command(name = "nocsim", version, about = "Cycle-level wide/narrow mesh NoC simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    NarrowWide,
    WideOnly,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::NarrowWide => Variant::NarrowWide,
            VariantArg::WideOnly => Variant::WideOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig5a,
    Fig5b,
    Zeroload,
    BoundaryBw,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config (a single run or a sweep).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for CSV results; overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_cycles: Option<u64>,
        /// Also write a per-transfer trace CSV.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Run a built-in reproduction.
    Preset {
        #[arg(value_enum)]
        name: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        max_cycles: Option<u64>,
        /// Only run this variant of the figure sweeps.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Mesh size for boundary-bw, e.g. 7x7.
        #[arg(long, default_value = "7x7")]
        mesh: String,
    },
    /// Randomized ordering sweep against the oracle, bypass on and off.
    Check {
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn flagged(points: &[SweepPoint]) -> Vec<String> {
    points
        .iter()
        .filter(|p| p.report.flagged())
        .map(|p| format!("{} {:?} level {}: {} timeouts", p.variant, p.direction, p.level, p.report.timeouts))
        .collect()
}

fn run_config(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    max_cycles: Option<u64>,
    trace: bool,
    variant: Option<VariantArg>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.traffic.seed = s;
    }
    if let Some(m) = max_cycles {
        cfg.max_cycles = m;
    }
    if let Some(v) = variant {
        cfg.variant = v.into();
    }
    let out = out.or_else(|| cfg.output_dir.clone());

    if cfg.sweep != Sweep::None {
        let fig = if cfg.sweep == Sweep::Wide { Figure::Latency } else { Figure::Bandwidth };
        let points = run_sweep(&cfg, &[cfg.variant], &[cfg.traffic.direction])?;
        let files = figure_files(fig, &points);
        match &out {
            Some(dir) => write_files(dir, &files)?,
            None => files.iter().for_each(|(_, body)| print!("{body}")),
        }
        let bad = flagged(&points);
        if !bad.is_empty() {
            bail!("incomplete runs:\n{}", bad.join("\n"));
        }
        return Ok(());
    }

    let run = simulate(&cfg, &cfg.traffic, trace)?;
    let summary = report_summary(&run.report);
    print!("{summary}");
    if let Some(dir) = &out {
        let mut files = vec![("summary.csv".to_string(), summary), ("occupancy.csv".into(), occupancy_csv(&run.report))];
        if let Some(t) = run.trace {
            files.push(("trace.csv".into(), t));
        }
        write_files(dir, &files)?;
    }
    if run.report.flagged() {
        bail!("{} transactions did not complete within {} cycles", run.report.timeouts, cfg.max_cycles);
    }
    Ok(())
}

fn run_preset(
    name: Preset,
    seed: Option<u64>,
    out: &Path,
    max_cycles: Option<u64>,
    variant: Option<VariantArg>,
    mesh: &str,
) -> Result<()> {
    match name {
        Preset::Zeroload => {
            let z = zero_load(true)?;
            print!("{}", z.summary());
        }
        Preset::BoundaryBw => {
            let (w, h) = parse_mesh(mesh)?;
            print!("{}", boundary_summary(&MeshSpec::new(w, h)));
        }
        Preset::Fig5a | Preset::Fig5b => {
            let fig = if matches!(name, Preset::Fig5a) { Figure::Latency } else { Figure::Bandwidth };
            let mut cfg = figure_config(fig);
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.traffic.seed = s;
            }
            if let Some(m) = max_cycles {
                cfg.max_cycles = m;
            }
            let variants = match variant {
                Some(v) => vec![v.into()],
                None => vec![Variant::NarrowWide, Variant::WideOnly],
            };
            let points = run_figure(fig, &cfg, &variants)?;
            write_files(out, &figure_files(fig, &points))?;
            let bad = flagged(&points);
            if !bad.is_empty() {
                bail!("incomplete runs:\n{}", bad.join("\n"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, seed, out, max_cycles, trace, variant } => {
            run_config(&config, seed, out, max_cycles, trace, variant)
                .with_context(|| format!("run {} failed", config.display()))
        }
        Cmd::Preset { name, seed, out, max_cycles, variant, mesh } => {
            run_preset(name, seed, &out, max_cycles, variant, &mesh)
        }
        Cmd::Check { runs, seed } => {
            let rep = run_check(runs, seed);
            print!("{}", rep.summary());
            if rep.passed() {
                Ok(())
            } else {
                for f in rep.failures.iter().take(20) {
                    eprintln!("{f}");
                }
                Err(anyhow::anyhow!("{} violations", rep.failures.len()))
            }
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
