use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use drc_core::audit::Label;
use drc_core::denoiser::{serve_pending, Denoiser, EmpiricalDenoiser, RequestManifest};
use drc_core::gridio::{write_grid, write_pgm};
use drc_core::harness::{
    read_report, report_json, run_audit_with, sample_id, scores_csv, sweep, synth_dataset,
    AuditConfig, SweepAxis,
};
use drc_core::{DrcError, Execution, Grid, Result};

#[derive(Parser)]
#[command(
    name = "drc",
    version,
    about = "Degrade-restore-compare membership audits for diffusion denoisers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Hard,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON audit config
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// built-in config used when --config is absent
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

impl ConfigArgs {
    fn load(&self) -> Result<AuditConfig> {
        match (&self.config, self.preset) {
            (Some(path), _) => AuditConfig::from_file(path),
            (None, Some(Preset::Hard)) => Ok(AuditConfig::hard()),
            (None, _) => Ok(AuditConfig::default()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic member and non-member images
    SynthData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an audit and write report.json, scores.csv and roc.csv
    Audit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// overrides output_dir; without either the report goes to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the audit over one parameter
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// mask_ratio, agree_n or interval
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a previously written report
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Answer file-protocol requests with the empirical denoiser of the config's members
    Serve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
        /// exit after this many seconds without a request
        #[arg(long)]
        idle_secs: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drc: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { cfg, out } => synth_data(&cfg.load()?, &out),
        Command::Audit { cfg, out } => {
            let mut cfg = cfg.load()?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let report = run_audit_with(&cfg, Execution::from_env()?)?;
            match &cfg.output_dir {
                Some(dir) => eprintln!(
                    "{}: acc {:.4} auc {:.4} -> {}",
                    report.primary_task,
                    report.acc,
                    report.auc,
                    dir.display()
                ),
                None => print!("{}", report_json(&report)),
            }
            Ok(())
        }
        Command::Sweep {
            cfg,
            axis,
            values,
            out,
        } => {
            let mut cfg = cfg.load()?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let axis: SweepAxis = axis.parse()?;
            let points = sweep(&cfg, axis, &values, Execution::from_env()?)?;
            print!("{}", drc_core::harness::sweep_csv(axis, &points));
            Ok(())
        }
        Command::Report { input, format } => {
            let report = read_report(&input)?;
            match format {
                Format::Json => print!("{}", report_json(&report)),
                Format::Csv => print!("{}", scores_csv(&report)),
            }
            Ok(())
        }
        Command::Serve {
            cfg,
            dir,
            idle_secs,
        } => serve_dir(&cfg.load()?, &dir, idle_secs),
    }
}

fn synth_data(cfg: &AuditConfig, out: &Path) -> Result<()> {
    let data = synth_dataset(&cfg.dataset)?;
    fs::create_dir_all(out).map_err(|e| DrcError::io(out, e))?;
    let labelled = data
        .members
        .iter()
        .enumerate()
        .map(|(k, g)| (sample_id(Label::Member, k), g))
        .chain(
            data.nonmembers
                .iter()
                .enumerate()
                .map(|(k, g)| (sample_id(Label::Nonmember, k), g)),
        );
    let mut n = 0;
    for (id, grid) in labelled {
        write_grid(&out.join(format!("{id}.drcgrid")), grid)?;
        write_pgm(&out.join(format!("{id}.pgm")), grid)?;
        n += 1;
    }
    eprintln!("wrote {n} images to {}", out.display());
    Ok(())
}

fn serve_dir(cfg: &AuditConfig, dir: &Path, idle_secs: Option<f64>) -> Result<()> {
    let sched = cfg.schedule.build()?;
    let members = synth_dataset(&cfg.dataset)?.members;
    let den = EmpiricalDenoiser::new(members, sched.clone())?;
    fs::create_dir_all(dir).map_err(|e| DrcError::io(dir, e))?;
    let handler = |x: &Grid, m: &RequestManifest| {
        if m.schedule_id != sched.id() {
            return Err(DrcError::Config(format!(
                "request for schedule {:?}, serving {:?}",
                m.schedule_id,
                sched.id()
            )));
        }
        den.predict_eps(x, m.t)
    };
    let idle = idle_secs.map(Duration::from_secs_f64);
    let mut last = Instant::now();
    let mut total = 0;
    loop {
        let n = serve_pending(dir, &handler)?;
        if n > 0 {
            total += n;
            last = Instant::now();
        } else if idle.is_some_and(|d| last.elapsed() >= d) {
            break;
        } else {
            thread::sleep(Duration::from_millis(1));
        }
    }
    eprintln!("served {total} requests");
    Ok(())
}
