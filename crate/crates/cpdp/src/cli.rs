//! Command-line front end: `stats`, `norm-select`, `train`, and `sweep`.
//!
//! A run is described by one JSON config file so an experiment is fully
//! captured in a single artifact; the seed is mandatory there (no
//! wall-clock fallback) because reruns must be byte-identical. Flags beat
//! the `CPDP_OUTPUT_DIR` environment variable, which beats the config's
//! `output_dir`. All numeric work runs in f64.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, ProjectDataset};
use crate::error::{Error, Result};
use crate::eval::{self, ClassifierSettings, NormalizationMode, PipelineConfig};
use crate::gan::{GanConfig, LossVariant, MmdRecording};
use crate::nn::Activation;
use crate::normrules;
use crate::optim::AdamHyper;

pub const OUTPUT_DIR_ENV: &str = "CPDP_OUTPUT_DIR";

/// Training settings as they appear in the config file. This mirrors
/// [`GanConfig`] minus the seed, which lives at the top level of
/// [`RunConfig`] so it cannot be specified twice; a `seed` key in this
/// section is rejected outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub loss_variant: LossVariant,
    pub optimizer: AdamHyper,
    pub output_clamp_eps: f64,
    pub record_mmd: MmdRecording,
}

impl Default for GanSection {
    fn default() -> Self {
        let g = GanConfig::default();
        GanSection {
            epochs: g.epochs,
            batch_size: g.batch_size,
            d_steps_per_g_step: g.d_steps_per_g_step,
            loss_variant: g.loss_variant,
            optimizer: g.optimizer,
            output_clamp_eps: g.output_clamp_eps,
            record_mmd: g.record_mmd,
        }
    }
}

impl GanSection {
    fn with_seed(&self, seed: u64) -> GanConfig {
        GanConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            d_steps_per_g_step: self.d_steps_per_g_step,
            loss_variant: self.loss_variant,
            optimizer: self.optimizer,
            output_clamp_eps: self.output_clamp_eps,
            record_mmd: self.record_mmd,
            seed,
        }
    }
}

fn default_label_column() -> String {
    "label".to_string()
}

fn default_normalization() -> NormalizationMode {
    PipelineConfig::default().normalization
}

fn default_hidden_dims() -> Vec<usize> {
    PipelineConfig::default().hidden_dims
}

fn default_generator_output() -> Activation {
    PipelineConfig::default().generator_output
}

/// One experiment, fully described. Unknown keys are rejected so a typo'd
/// config fails loudly instead of silently running defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Labeled source-project CSV.
    pub source: PathBuf,
    /// Target-project CSV; labels are used only for scoring.
    pub target: PathBuf,
    #[serde(default = "default_label_column")]
    pub source_label_column: String,
    #[serde(default = "default_label_column")]
    pub target_label_column: String,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationMode,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_generator_output")]
    pub generator_output: Activation,
    #[serde(default)]
    pub gan: GanSection,
    #[serde(default)]
    pub classifier: ClassifierSettings,
    /// Where reports, traces, and models land (see [`OUTPUT_DIR_ENV`]).
    pub output_dir: PathBuf,
    /// Mandatory: reruns of the same config must be byte-identical.
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("cannot parse run config {}: {e}", path.display()))
        })?;
        config.to_pipeline_config().validate()?;
        Ok(config)
    }

    pub fn to_pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            normalization: self.normalization,
            hidden_dims: self.hidden_dims.clone(),
            generator_output: self.generator_output,
            gan: self.gan.with_seed(self.seed),
            classifier: self.classifier,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cpdp",
    version,
    about = "Cross-project defect prediction via adversarial feature adaptation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print instance count, faulty count, and buggy rate of a dataset.
    Stats {
        /// Metric CSV to summarize.
        dataset: PathBuf,
        /// Name of the label column.
        #[arg(long, default_value = "label")]
        label_column: String,
    },
    /// Print the distance-statistics comparison and normalization decision.
    NormSelect {
        /// Labeled source-project CSV.
        source: PathBuf,
        /// Target-project CSV.
        target: PathBuf,
        #[arg(long, default_value = "label")]
        source_label_column: String,
        #[arg(long, default_value = "label")]
        target_label_column: String,
    },
    /// Train the full pipeline from a config file and write the report,
    /// trace, and model files.
    Train {
        /// JSON run config.
        config: PathBuf,
        /// Overrides the config's output_dir and the environment variable.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one pipeline per epoch count and write the flat reports CSV.
    Sweep {
        /// JSON run config.
        config: PathBuf,
        /// Comma-separated epoch counts, e.g. 25,50,75,100.
        #[arg(long, value_delimiter = ',', required = true)]
        epochs: Vec<usize>,
        /// Overrides the config's output_dir and the environment variable.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

/// Flag beats environment beats config.
fn resolve_output_dir(flag: Option<&Path>, env_value: Option<&str>, config_value: &Path) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = env_value.filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    config_value.to_path_buf()
}

fn output_dir_from_env() -> Option<String> {
    std::env::var(OUTPUT_DIR_ENV).ok()
}

/// Executes a parsed invocation. Errors bubble up for `main` to print as
/// one `error: <category>: <detail>` line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats {
            dataset,
            label_column,
        } => cmd_stats(&dataset, &label_column),
        Command::NormSelect {
            source,
            target,
            source_label_column,
            target_label_column,
        } => cmd_norm_select(&source, &target, &source_label_column, &target_label_column),
        Command::Train { config, output_dir } => cmd_train(&config, output_dir.as_deref()),
        Command::Sweep {
            config,
            epochs,
            output_dir,
        } => cmd_sweep(&config, &epochs, output_dir.as_deref()),
    }
}

#[derive(Serialize)]
struct StatsLine {
    n: usize,
    faulty: usize,
    buggy_rate: f64,
}

fn cmd_stats(path: &Path, label_column: &str) -> Result<()> {
    let ds: ProjectDataset<f64> = dataset::load_csv(path, Some(label_column))?;
    let stats = ds.stats()?;
    let line = StatsLine {
        n: stats.n_instances,
        faulty: stats.n_faulty,
        buggy_rate: stats.buggy_rate_rounded(),
    };
    println!("{}", serde_json::to_string(&line).expect("stats serialize"));
    Ok(())
}

#[derive(Serialize)]
struct NormSelectLine<T> {
    source_stats: normrules::DistStats<T>,
    target_stats: normrules::DistStats<T>,
    levels: normrules::DistComparison,
    rule_id: u8,
    choice: normrules::NormalizationChoice,
}

fn cmd_norm_select(
    source: &Path,
    target: &Path,
    source_label_column: &str,
    target_label_column: &str,
) -> Result<()> {
    let src: ProjectDataset<f64> = dataset::load_csv(source, Some(source_label_column))?;
    let tgt: ProjectDataset<f64> = dataset::load_csv(target, Some(target_label_column))?;
    let source_stats = normrules::pairwise_dist(&src)?;
    let target_stats = normrules::pairwise_dist(&tgt)?;
    let levels = normrules::compare(&source_stats, &target_stats);
    let decision = normrules::select_rule(&levels, src.len(), tgt.len());
    let line = NormSelectLine {
        source_stats,
        target_stats,
        levels,
        rule_id: decision.rule_id,
        choice: decision.choice,
    };
    println!(
        "{}",
        serde_json::to_string(&line).expect("decision serialize")
    );
    Ok(())
}

fn load_pair(config: &RunConfig) -> Result<(ProjectDataset<f64>, ProjectDataset<f64>)> {
    let source = dataset::load_csv(&config.source, Some(&config.source_label_column))?;
    let target = dataset::load_csv(&config.target, Some(&config.target_label_column))?;
    Ok((source, target))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_train(config_path: &Path, output_dir_flag: Option<&Path>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let out_dir = resolve_output_dir(
        output_dir_flag,
        output_dir_from_env().as_deref(),
        &config.output_dir,
    );
    ensure_dir(&out_dir)?;
    let (source, target) = load_pair(&config)?;
    let out = eval::run_pipeline_full(&source, &target, &config.to_pipeline_config())?;

    let report_path = out_dir.join("report.json");
    write_text(&report_path, &(out.report.to_json() + "\n"))?;
    let trace_path = out_dir.join("trace.csv");
    out.trace.write_csv(&trace_path)?;
    let gan_path = out_dir.join("gan_model.json");
    write_text(&gan_path, &(out.gan.to_json() + "\n"))?;
    let nb_path = out_dir.join("nb_model.json");
    write_text(&nb_path, &(out.nb.to_json() + "\n"))?;

    for path in [&report_path, &trace_path, &gan_path, &nb_path] {
        println!("wrote {}", path.display());
    }
    println!(
        "f1 {} precision {} recall {} mmd {} -> {}",
        out.report.f1,
        out.report.precision,
        out.report.recall,
        out.report.mmd_before,
        out.report.mmd_after
    );
    Ok(())
}

fn cmd_sweep(config_path: &Path, epochs: &[usize], output_dir_flag: Option<&Path>) -> Result<()> {
    if epochs.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one epoch count".into(),
        ));
    }
    let config = RunConfig::load(config_path)?;
    let out_dir = resolve_output_dir(
        output_dir_flag,
        output_dir_from_env().as_deref(),
        &config.output_dir,
    );
    ensure_dir(&out_dir)?;
    let (source, target) = load_pair(&config)?;
    let reports = eval::epoch_sweep(&source, &target, epochs, &config.to_pipeline_config())?;

    let sweep_path = out_dir.join("sweep.csv");
    eval::write_reports_csv(&reports, &sweep_path)?;
    println!("wrote {}", sweep_path.display());
    for r in &reports {
        println!("epochs {} f1 {}", r.epochs, r.f1);
    }
    Ok(())
}
