//! The `afnn` command line. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 2 for usage,
//! configuration and I/O errors, 3 for numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::autograd::Mode;
use crate::data::{list_domains, load_split, load_training_domains, write_synthetic_dataset, Split};
use crate::error::{Error, Result};
use crate::gradsuite::run_suite;
use crate::metrics::{domain_gap_stats, load_csv, save_csv, summarize, Connectivity, GapReport, Summary};
use crate::model::{init_params, load_checkpoint, ModelConfig};
use crate::report::{ablation_table, render_report};
use crate::tensor::Tensor;
use crate::trainer::{adapt_images, evaluate, prepare_samples, sidecar_paths, train, RunConfig, RunSummary};

#[derive(Parser, Debug)]
#[command(name = "afnn", version, about = "Domain-generalized optic disc and cup segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Default,
    Desk,
    Smoke,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic domains to DIR/domain_<d>/{train,test}.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        domains: usize,
        #[arg(long, default_value_t = 64)]
        per_domain: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on every domain but the unseen one.
    Train {
        /// RunConfig JSON; fields left out take the preset's values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk", conflicts_with = "config")]
        preset: Preset,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        unseen: usize,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on one domain's split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        unseen: usize,
        #[arg(long)]
        out: PathBuf,
        /// Must match the config the checkpoint was trained with.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Defaults to the checkpoint's file stem.
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long, value_enum, default_value = "four")]
        connectivity: ConnectivityArg,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        /// `all` or one op name.
        #[arg(long, default_value = "all")]
        ops: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Between-domain intensity gap before and after the adaptor.
    GapStats {
        #[arg(long)]
        data: PathBuf,
        /// Use this checkpoint's adaptor (eval mode) instead of a fresh one.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Compare raw images with themselves (no adaptor).
        #[arg(long, conflicts_with = "ckpt")]
        identity: bool,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for histogram CSVs (and SVGs with --svg).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, requires = "out")]
        svg: bool,
    },
    /// Markdown tables from metric CSVs.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Append the ablation table (run ids named full, no_adaptor, ...).
        #[arg(long)]
        ablation: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConnectivityArg {
    Four,
    Eight,
}

/// Parses `args` (program name first) and runs the command, writing
/// progress to `out` and errors to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenData {
            out: dir,
            domains,
            per_domain,
            size,
            seed,
        } => {
            let written = write_synthetic_dataset(&dir, domains, per_domain, size, seed)?;
            emit(out, format!("wrote {} manifests under {}", written.len(), dir.display()))
        }
        Command::Train {
            config,
            preset,
            data,
            unseen,
            out: ckpt,
            seed,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => match preset {
                    Preset::Default => RunConfig::default(),
                    Preset::Desk => RunConfig::desk(),
                    Preset::Smoke => RunConfig::smoke(),
                },
            };
            cfg.unseen_domain = unseen;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let samples = load_training_domains(&data, unseen)?;
            let outcome = train(&cfg, &samples)?;
            create_parent(&ckpt)?;
            outcome.save(&ckpt)?;
            let s = &outcome.summary;
            emit(
                out,
                format!(
                    "trained {} steps on {} samples; final loss {:.4} (seg {:.4}); config {}",
                    s.steps, s.train_samples, s.final_loss.total, s.final_loss.seg, s.config_hash
                ),
            )
        }
        Command::Eval {
            ckpt,
            data,
            unseen,
            out: csv,
            config,
            split,
            run_id,
            connectivity,
        } => {
            let (_, summary_path) = sidecar_paths(&ckpt);
            let trained = RunSummary::load(&summary_path)?;
            if let Some(path) = config {
                let given = RunConfig::load(&path)?;
                if given.hash() != trained.config_hash {
                    return Err(Error::Config(format!(
                        "{} does not match the config {} was trained with",
                        path.display(),
                        ckpt.display()
                    )));
                }
            }
            let cfg = trained.config;
            let params = load_checkpoint(&ckpt, &cfg.model)?;
            let domains = list_domains(&data)?;
            if !domains.contains(&unseen) {
                return Err(Error::Config(format!("domain {unseen} not found (domains: {domains:?})")));
            }
            let samples = load_split(&data, unseen, split.into())?;
            if samples.is_empty() {
                return Err(Error::Config(format!("domain {unseen} has no {} samples", Split::from(split).as_str())));
            }
            let run_id = run_id.unwrap_or_else(|| {
                ckpt.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into())
            });
            let conn = match connectivity {
                ConnectivityArg::Four => Connectivity::Four,
                ConnectivityArg::Eight => Connectivity::Eight,
            };
            let records = evaluate(&params, &samples, cfg.image_size, cfg.threshold, &run_id, conn)?;
            create_parent(&csv)?;
            save_csv(&csv, &records)?;
            let summary = EvalSummary {
                run_id,
                config_hash: trained.config_hash,
                unseen_domain: unseen,
                split: Split::from(split).as_str(),
                samples: samples.len(),
                means: summarize(&records),
            };
            let path = eval_summary_path(&csv);
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            emit(
                out,
                format!(
                    "domain {unseen}: OD DSC {:.4}, OC DSC {:.4} over {} samples",
                    summary.means.disc.dsc, summary.means.cup.dsc, summary.samples
                ),
            )
        }
        Command::Gradcheck { ops, trials, seed } => {
            let only = (ops != "all").then_some(ops.as_str());
            let results = run_suite(only, trials, seed)?;
            let mut failed = Vec::new();
            for r in &results {
                let verdict = if r.passed() { "ok" } else { "FAIL" };
                emit(
                    out,
                    format!(
                        "{verdict:4} {:<18} max rel err {:.3e} (tol {:.0e}, {} trials, {} entries)",
                        r.name, r.max_rel_error, r.tol, r.trials, r.entries_checked
                    ),
                )?;
                if !r.passed() {
                    failed.push(r.name.clone());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::NonFinite(format!("gradient check failed for {}", failed.join(", "))))
            }
        }
        Command::GapStats {
            data,
            ckpt,
            identity,
            split,
            seed,
            out: dir,
            svg,
        } => {
            let (raw, adapted) = gap_stats(&data, ckpt.as_deref(), identity, split.into(), seed)?;
            emit(out, format!("raw gap      {:.6e}", raw.gap))?;
            emit(out, format!("adapted gap  {:.6e}", adapted.gap))?;
            let ratio = if raw.gap > 0.0 { adapted.gap / raw.gap } else { f64::NAN };
            emit(out, format!("ratio        {ratio:.4}"))?;
            if let Some(dir) = dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (name, report) in [("raw", &raw), ("adapted", &adapted)] {
                    let p = dir.join(format!("{name}_histograms.csv"));
                    std::fs::write(&p, report.histogram_csv()).map_err(|e| Error::io(&p, e))?;
                    if svg {
                        let p = dir.join(format!("{name}_histograms.svg"));
                        let title = format!("{name} intensity by domain");
                        std::fs::write(&p, report.histogram_svg(&title)).map_err(|e| Error::io(&p, e))?;
                    }
                }
            }
            Ok(())
        }
        Command::Report {
            inputs,
            out: path,
            ablation,
        } => {
            let mut records = Vec::new();
            for p in &inputs {
                records.extend(load_csv(p)?);
            }
            let mut text = render_report(&records)?;
            if ablation {
                text.push('\n');
                text.push_str(&ablation_table(&records)?);
            }
            create_parent(&path)?;
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            emit(out, format!("wrote {} ({} records)", path.display(), records.len()))
        }
    }
}

#[derive(Serialize)]
struct EvalSummary {
    run_id: String,
    config_hash: String,
    unseen_domain: usize,
    split: &'static str,
    samples: usize,
    means: Summary,
}

/// `<metrics.csv>.summary.json`.
pub fn eval_summary_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Raw and adapted gap reports over one split of every domain. Without a
/// checkpoint the adaptor is freshly initialized from `seed` and run in
/// train mode; `identity` skips the adaptor entirely.
pub fn gap_stats(
    data: &Path,
    ckpt: Option<&Path>,
    identity: bool,
    split: Split,
    seed: u64,
) -> Result<(GapReport, GapReport)> {
    let (params, mode, size) = match ckpt {
        Some(path) => {
            let (_, summary) = sidecar_paths(path);
            let cfg = RunSummary::load(&summary)?.config;
            (load_checkpoint(path, &cfg.model)?, Mode::Eval, Some(cfg.image_size))
        }
        None => (init_params(&ModelConfig::desk(), seed)?, Mode::Train, None),
    };
    let mut raw = Vec::new();
    let mut adapted = Vec::new();
    for d in list_domains(data)? {
        let mut samples = load_split(data, d, split)?;
        if let Some(size) = size {
            samples = prepare_samples(&samples, size)?;
        }
        let images: Vec<Tensor> = samples.into_iter().map(|s| s.image).collect();
        let transformed = if identity {
            images.clone()
        } else {
            adapt_images(&params, &images, mode)?
        };
        raw.push((d, images));
        adapted.push((d, transformed));
    }
    Ok((domain_gap_stats(&raw)?, domain_gap_stats(&adapted)?))
}
