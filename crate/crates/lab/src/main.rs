use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mfdiff::oracle::theorems::{verify_theorems, TheoremConfig};
use mfdiff_lab::config::{preset, PRESETS};
use mfdiff_lab::experiment::{build_manifold, evaluate, generate, generate_data, run_experiment, split, train_model};
use mfdiff_lab::io::{read_points, write_points};
use mfdiff_lab::report::theorem_json;
use mfdiff_lab::{checkpoint, ExperimentConfig, LabError, Result};

#[derive(Parser)]
#[command(name = "mfdiff", version, about = "Diffusion models for manifold-structured data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (TOML); keys not given take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long, short)]
    preset: Option<String>,
    /// Override a config key, e.g. `--set method=niso --set seeds=[1,2]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => return Err(LabError::Config("give --config or --preset, not both".into())),
            (Some(path), None) => {
                let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.clone(), source })?;
                ExperimentConfig::from_toml(&text)?
            }
            (None, Some(name)) => preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        let cfg = base.with_overrides(&self.sets)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print a preset as TOML, or list presets.
    Preset { name: Option<String> },
    /// Draw the target dataset.
    GenerateData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train on the 8:2 training split of a dataset and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate samples from a checkpoint.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, short = 'n')]
        count: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Configured metrics between two point files; prints JSON.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Score-singularity sweeps on the unit circle.
    VerifyTheorems {
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Every seed end to end; artifacts under `<out-dir>/<config hash>/`.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
}

fn write_json(path: Option<&Path>, v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| LabError::Io { path: p.into(), source }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Preset { name: None } => PRESETS.iter().for_each(|p| println!("{p}")),
        Command::Preset { name: Some(n) } => print!("{}", preset(&n)?.to_toml()),
        Command::GenerateData { cfg, seed, out } => {
            let cfg = cfg.load()?;
            let m = build_manifold(&cfg)?;
            let data = generate_data(&cfg, &m, seed)?;
            write_points(&out, &data.points, data.faces.as_deref(), &data.meta)?;
            eprintln!("wrote {} points to {}", data.points.len(), out.display());
        }
        Command::Train { cfg, seed, data, out } => {
            let cfg = cfg.load()?;
            let m = build_manifold(&cfg)?;
            let points = read_points(&data)?.points;
            let (train, _) = split(&points, seed);
            let t = train_model(&cfg, &m, &train, seed)?;
            checkpoint::save(&out, &t.model, &t.optimizer)?;
            eprintln!("final epoch loss {:.6e}; wrote {}", t.epoch_losses.last().copied().unwrap_or(f64::NAN), out.display());
        }
        Command::Sample { cfg, seed, checkpoint: ck, count, out } => {
            let cfg = cfg.load()?;
            let m = build_manifold(&cfg)?;
            let c = checkpoint::load(&ck)?;
            let model = if cfg.use_ema { c.model.with_params(c.optimizer.ema().to_vec())? } else { c.model };
            let pts = generate(&cfg, &model, &m, count, seed)?;
            let meta = json!({ "seed": seed, "checkpoint": ck, "sampler": cfg.sampler, "config": cfg });
            write_points(&out, &pts, None, &meta)?;
        }
        Command::Evaluate { cfg, seed, samples, reference } => {
            let cfg = cfg.load()?;
            let m = build_manifold(&cfg)?;
            let x = read_points(&samples)?.points;
            let y = read_points(&reference)?.points;
            let entries = evaluate(&cfg, &m, &x, &y, seed)?;
            write_json(None, &serde_json::to_value(entries)?)?;
        }
        Command::VerifyTheorems { out } => {
            let tc = TheoremConfig::default();
            let start = Instant::now();
            let r = verify_theorems(&tc)?;
            for c in &r.checks {
                eprintln!("{} {}: {:.6} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.requirement);
            }
            write_json(out.as_deref(), &theorem_json(&tc, &r, start.elapsed().as_secs_f64()))?;
            return Ok(r.all_pass());
        }
        Command::Run { cfg, out_dir } => {
            let cfg = cfg.load()?;
            let r = run_experiment(&cfg, Some(&out_dir))?;
            for (k, s) in &r.summary {
                println!("{k}: mean {:.6e} std {:.3e} median {:.6e}", s.mean, s.std, s.median);
            }
            if let Some(p) = &r.path {
                println!("report: {}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
