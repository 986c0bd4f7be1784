//! Command-line front end: train a proxy tree, derive sampling plans,
//! filter and audit datasets, run experiment sweeps, and evaluate the
//! analytical bounds.
//!
//! Exit codes: 0 on success, 1 on configuration or input errors, 2 when
//! a sweep finishes but some cells failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fairsample::dataset::{load_csv, Encoder, Schema, TargetDistribution};
use fairsample::geometry::ConditionalMatrix;
use fairsample::harness::{run_experiment, ExperimentConfig};
use fairsample::metrics::{audit, bound_report, SampleSource};
use fairsample::sampler::{derive_plan, rejection_sample, PlanMode, Proxy, SamplingPlan};
use fairsample::tree::{grow_tree, GrowConfig, ProxyTree};

#[derive(Parser)]
#[command(
    name = "fairsample",
    about = "Train non-disclosive proxy trees and collect group-balanced samples",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a proxy tree on a labeled CSV and write the model artifacts.
    Train(TrainArgs),
    /// Derive a sampling plan from a trained model and filter a CSV.
    Sample(SampleArgs),
    /// Measure disclosivity and imbalance of a trained model on a CSV.
    Audit(AuditArgs),
    /// Run the full experiment sweep and write curve/plot data files.
    Sweep(SweepArgs),
    /// Evaluate the growth-rate and sample-size bound calculators.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Name of the binary label column.
    #[arg(long)]
    label_column: String,
    /// Raw value mapped to label 1; everything else maps to 0.
    #[arg(long)]
    positive_label: String,
    /// Name of the sensitive-group column.
    #[arg(long)]
    sensitive_column: String,
    /// Columns to drop before encoding (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "")]
    drop_columns: Vec<String>,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            label_column: self.label_column.clone(),
            positive_label: self.positive_label.clone(),
            sensitive_column: self.sensitive_column.clone(),
            drop_columns: self
                .drop_columns
                .iter()
                .filter(|c| !c.is_empty())
                .cloned()
                .collect(),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Disclosivity budget.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Required per-split distance reduction factor is (1 - gamma).
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 20)]
    max_height: usize,
    /// Growth stops once the hull is this close to the target.
    #[arg(long, default_value_t = 0.1)]
    stop_distance: f64,
    /// Cap on game rounds per split.
    #[arg(long, default_value_t = 2000)]
    t_cap: usize,
    #[arg(long, default_value_t = 50.0)]
    min_leaf_mass: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target group distribution (comma separated); uniform when absent.
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<f64>>,
    /// Directory for the model artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// CSV to filter; only the feature columns are required.
    #[arg(long)]
    data: PathBuf,
    /// strict: mixing weights on the simplex; relaxed: nonnegative only.
    #[arg(long, default_value = "strict")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to the model directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// CSV with the sensitive column present.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where the audit report goes; defaults to stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment configuration; defaults apply for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the desk-scale preset (fewer seeds, coarser grids, subsample).
    #[arg(long)]
    desk: bool,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured dataset CSV path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the configured seed count.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// VC dimension of the splitter class (p + 1 for p features).
    #[arg(long)]
    dim: usize,
    /// Number of sensitive groups.
    #[arg(long)]
    groups: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&body)?)
}

fn target_from(values: Option<Vec<f64>>, k: usize) -> Result<TargetDistribution> {
    match values {
        None => Ok(TargetDistribution::uniform(k)),
        Some(v) => {
            if v.len() != k {
                bail!("target has {} entries but the data has {k} groups", v.len());
            }
            Ok(TargetDistribution::from_vec(v)?)
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let schema = args.schema.schema();
    let loaded = load_csv(&args.data, &schema)?;
    let ds = loaded.dataset;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} rows with missing fields", loaded.dropped_rows);
    }
    let target = target_from(args.target, ds.group_count)?;
    let cfg = GrowConfig {
        alpha: args.alpha,
        epsilon: args.epsilon,
        gamma: args.gamma,
        max_height: args.max_height,
        stop_distance: args.stop_distance,
        t_cap: args.t_cap,
        min_leaf_mass: args.min_leaf_mass,
        seed: args.seed,
    };
    let result = grow_tree(&ds, &target, &cfg)?;

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("tree.json"), &result.tree)?;
    write_json(&args.out.join("matrix.json"), &result.matrix)?;
    write_json(&args.out.join("trace.json"), &result.trace)?;
    write_json(&args.out.join("encoder.json"), &loaded.encoder)?;
    write_json(&args.out.join("labelmap.json"), &ds.label_map())?;
    write_json(&args.out.join("schema.json"), &schema)?;
    write_json(&args.out.join("target.json"), &target)?;
    write_json(&args.out.join("grow_config.json"), &cfg)?;

    println!(
        "trained: {} leaves, {} accepted splits, final distance {:.6}",
        result.tree.leaf_count(),
        result.trace.accepted_splits,
        result.trace.final_distance
    );
    for note in &result.trace.notes {
        println!("note: {note}");
    }
    Ok(())
}

/// Encoded rows, their group labels, their source row indices, and the
/// count of skipped rows.
type EncodedRows = (Vec<Vec<f64>>, Vec<usize>, Vec<usize>, usize);

/// Extracts the encoder's feature columns (and optionally the sensitive
/// column, mapped through the trained group names) from a raw CSV. Rows
/// with missing or unmappable values are skipped and counted.
fn encode_file(
    path: &Path,
    encoder: &Encoder,
    sensitive_column: Option<&str>,
) -> Result<EncodedRows> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let col_names: Vec<&str> = encoder
        .columns
        .iter()
        .map(|c| match c {
            fairsample::dataset::ColumnEncoder::Numeric { name } => name.as_str(),
            fairsample::dataset::ColumnEncoder::Categorical { name, .. } => name.as_str(),
        })
        .collect();
    let col_idx: Vec<usize> = col_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("missing column {name:?}"))
        })
        .collect::<Result<_>>()?;
    let sens_idx = match sensitive_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("missing sensitive column {name:?}"))?,
        ),
        None => None,
    };

    let mut features = Vec::new();
    let mut sensitive = Vec::new();
    let mut row_indices = Vec::new();
    let mut skipped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let values: Vec<String> = col_idx
            .iter()
            .map(|&c| record.get(c).unwrap_or("").to_string())
            .collect();
        if values.iter().any(|v| v.is_empty() || v == "?") {
            skipped += 1;
            continue;
        }
        let z = match sens_idx {
            Some(c) => {
                let raw = record.get(c).unwrap_or("").trim();
                match encoder.group_names.iter().position(|g| g == raw) {
                    Some(z) => Some(z),
                    None => {
                        skipped += 1;
                        continue;
                    }
                }
            }
            None => None,
        };
        match encoder.encode_row(&values) {
            Ok(row) => {
                features.push(row);
                if let Some(z) = z {
                    sensitive.push(z);
                }
                row_indices.push(i);
            }
            Err(_) => skipped += 1,
        }
    }
    Ok((features, sensitive, row_indices, skipped))
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let mode = match args.mode.as_str() {
        "strict" => PlanMode::Strict,
        "relaxed" => PlanMode::Relaxed,
        other => bail!("mode must be strict or relaxed, got {other:?}"),
    };
    let tree: ProxyTree = read_json(&args.model.join("tree.json"))?;
    let matrix: ConditionalMatrix = read_json(&args.model.join("matrix.json"))?;
    let encoder: Encoder = read_json(&args.model.join("encoder.json"))?;
    let target: TargetDistribution = read_json(&args.model.join("target.json"))?;

    let plan: SamplingPlan = derive_plan(&matrix, &target, mode)?;
    let (features, _, row_indices, skipped) = encode_file(&args.data, &encoder, None)?;
    if features.is_empty() {
        bail!("no usable rows in {}", args.data.display());
    }
    let kept = rejection_sample(&tree, &plan, &features, args.seed)?;

    let out = args.out.unwrap_or_else(|| args.model.clone());
    fs::create_dir_all(&out)?;
    write_json(&out.join("plan.json"), &plan)?;
    let mut w = csv::Writer::from_path(out.join("kept.csv"))?;
    w.write_record(["row_index"])?;
    for &i in &kept {
        w.write_record([row_indices[i].to_string()])?;
    }
    w.flush()?;

    println!(
        "kept {} of {} rows ({} skipped); expected keep rate {:.4}",
        kept.len(),
        features.len(),
        skipped,
        plan.keep_rate(&matrix.leaf_mass)
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let tree: ProxyTree = read_json(&args.model.join("tree.json"))?;
    let encoder: Encoder = read_json(&args.model.join("encoder.json"))?;
    let schema: Schema = read_json(&args.model.join("schema.json"))?;
    let target: TargetDistribution = read_json(&args.model.join("target.json"))?;

    let (features, sensitive, _, skipped) =
        encode_file(&args.data, &encoder, Some(&schema.sensitive_column))?;
    if features.is_empty() {
        bail!("no usable rows in {}", args.data.display());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let assigned: Vec<usize> = features.iter().map(|x| tree.assign(x, &mut rng)).collect();
    let report = audit(
        &sensitive,
        &assigned,
        tree.range_size(),
        &target,
        SampleSource::Collected,
    )?;

    println!(
        "disclosivity {:.6}, imbalance {:.6} over {} rows ({} skipped)",
        report.disclosivity, report.imbalance, report.sample_count, skipped
    );
    if let Some(out) = args.out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        write_json(&out, &report)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let mut cfg = match (&args.config, args.desk) {
        (Some(path), _) => {
            let body = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: ExperimentConfig = toml::from_str(&body)?;
            if args.desk {
                let desk = ExperimentConfig::desk_preset();
                cfg.alpha_grid = desk.alpha_grid;
                cfg.eta_grid = desk.eta_grid;
                cfg.seeds = desk.seeds;
                cfg.subsample = desk.subsample;
            }
            cfg
        }
        (None, true) => ExperimentConfig::desk_preset(),
        (None, false) => ExperimentConfig::default(),
    };
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(data) = args.data {
        cfg.dataset = Some(data);
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if let Some(seed) = args.master_seed {
        cfg.master_seed = seed;
    }
    let summary = run_experiment(&cfg)?;
    println!(
        "wrote {} curve points to {}",
        summary.points.len(),
        summary.output_dir.display()
    );
    if summary.failures.is_empty() {
        Ok(0)
    } else {
        for f in &summary.failures {
            eprintln!(
                "cell failed: {} grid {} seed {}: {}",
                f.variant, f.grid_value, f.seed, f.message
            );
        }
        eprintln!("{} cells failed; partial results written", summary.failures.len());
        Ok(2)
    }
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let report = bound_report(
        args.alpha,
        args.beta,
        args.epsilon,
        args.delta,
        args.dim,
        args.groups,
        args.gamma,
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is a
            // configuration error.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args).map(|()| 0),
        Command::Sample(args) => cmd_sample(args).map(|()| 0),
        Command::Audit(args) => cmd_audit(args).map(|()| 0),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bounds(args) => cmd_bounds(args).map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
