//! Experiment runner: sweeps the proxy variants over a disclosivity (or
//! interpolation) grid across seeds and writes curve, proportion,
//! heat-map, and bound files.
//!
//! Units of work are (variant, seed) pairs — they share a train/test
//! split and, for the direct classifiers, one trained model across the
//! whole grid. Units run data-parallel and merge by a deterministic sort,
//! so reruns produce byte-identical curves. Wall times go to a separate
//! timings file since they are inherently non-reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{naive_plan_from_matrix, qp_plan_from_matrix, train_direct, DirectHyper, DirectKind};
use crate::dataset::{base_rates, split_train_test, LabeledDataset, TargetDistribution};
use crate::geometry::ConditionalMatrix;
use crate::metrics::{bound_report, disclosivity_of_matrix, imbalance_of, BoundReport};
use crate::sampler::{derive_plan, rejection_sample, Interpolated, PlanMode, SamplingPlan};
use crate::tree::{estimate_conditional_matrix, grow_tree, GrowConfig};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    AlphaBeta,
    AlphaBetaRelaxed,
    NaiveRegression,
    NaiveTree,
    QpRegression,
    QpTree,
}

impl Variant {
    pub fn all() -> [Variant; 6] {
        [
            Variant::AlphaBeta,
            Variant::AlphaBetaRelaxed,
            Variant::NaiveRegression,
            Variant::NaiveTree,
            Variant::QpRegression,
            Variant::QpTree,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::AlphaBeta => "alpha-beta",
            Variant::AlphaBetaRelaxed => "alpha-beta-relaxed",
            Variant::NaiveRegression => "naive-regression",
            Variant::NaiveTree => "naive-tree",
            Variant::QpRegression => "qp-regression",
            Variant::QpTree => "qp-tree",
        }
    }

    /// Tree variants sweep the disclosivity budget; direct classifiers
    /// sweep the interpolation knob.
    pub fn grid_kind(self) -> &'static str {
        match self {
            Variant::AlphaBeta | Variant::AlphaBetaRelaxed => "alpha",
            _ => "eta",
        }
    }

    fn is_tree(self) -> bool {
        matches!(self, Variant::AlphaBeta | Variant::AlphaBetaRelaxed)
    }
}

fn grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Full sweep configuration; serializes to/from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// CSV path; when absent the built-in synthetic dataset is used.
    pub dataset: Option<PathBuf>,
    pub schema: Option<crate::dataset::Schema>,
    pub variants: Vec<Variant>,
    pub alpha_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub seeds: u64,
    pub master_seed: u64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_height: usize,
    pub stop_distance: f64,
    pub t_cap: usize,
    pub min_leaf_mass: f64,
    pub delta: f64,
    pub train_fraction: f64,
    /// Rows drawn (seeded) before splitting; caps runtime on large files.
    pub subsample: Option<usize>,
    /// Explicit target distribution; uniform when absent.
    pub target: Option<Vec<f64>>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            schema: None,
            variants: Variant::all().to_vec(),
            alpha_grid: grid(0.05),
            eta_grid: grid(0.1),
            seeds: 20,
            master_seed: 0,
            gamma: 0.1,
            epsilon: 0.05,
            max_height: 20,
            stop_distance: 0.1,
            t_cap: 300,
            min_leaf_mass: 50.0,
            delta: 0.05,
            train_fraction: 2.0 / 3.0,
            subsample: None,
            target: None,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    /// Single-core-friendly preset: fewer seeds, coarser grid, capped
    /// sample count.
    pub fn desk_preset() -> Self {
        ExperimentConfig {
            alpha_grid: grid(0.1),
            eta_grid: grid(0.25),
            seeds: 5,
            subsample: Some(5_000),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Domain("seeds must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Domain("no variants selected".into()));
        }
        let needs_alpha = self.variants.iter().any(|v| v.is_tree());
        let needs_eta = self.variants.iter().any(|v| !v.is_tree());
        if needs_alpha && self.alpha_grid.is_empty() {
            return Err(Error::Domain("alpha grid is empty".into()));
        }
        if needs_eta && self.eta_grid.is_empty() {
            return Err(Error::Domain("eta grid is empty".into()));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::Domain("train fraction outside (0,1)".into()));
        }
        Ok(())
    }

    fn grid_for(&self, v: Variant) -> &[f64] {
        if v.is_tree() {
            &self.alpha_grid
        } else {
            &self.eta_grid
        }
    }
}

/// One measured point on a tradeoff curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub variant: String,
    pub grid_kind: String,
    pub grid_value: f64,
    pub seed: u64,
    pub split: String,
    /// Exactly-computed disclosivity of the proxy on this split.
    pub disclosivity: f64,
    /// Imbalance of the exactly-computed induced distribution.
    pub imbalance: f64,
    /// Imbalance of one realized rejection sample.
    pub realized_imbalance: f64,
    pub split_count: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub variant: String,
    pub grid_value: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProportionRecord {
    pub variant: String,
    pub grid_value: f64,
    pub seed: u64,
    /// Group marginal before filtering (train split).
    pub pre: Vec<f64>,
    /// Induced marginal after filtering.
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapRecord {
    pub variant: String,
    pub grid_value: f64,
    pub seed: u64,
    pub leaf_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRecord {
    pub variant: String,
    pub grid_value: f64,
    pub seed: u64,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub points: Vec<TradeoffPoint>,
    pub failures: Vec<CellFailure>,
    pub proportions: Vec<ProportionRecord>,
    pub bounds: Vec<BoundRecord>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct TimingRecord {
    variant: String,
    grid_value: f64,
    seed: u64,
    wall_time_ms: f64,
}

/// FNV-1a over the unit identity; gives every (variant, grid, seed) an
/// independent, reorderable random stream.
fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn cell_seed(master: u64, variant: &str, grid_value: f64, seed: u64) -> u64 {
    stable_hash(&[
        &master.to_le_bytes(),
        variant.as_bytes(),
        &grid_value.to_bits().to_le_bytes(),
        &seed.to_le_bytes(),
    ])
}

/// Expected conditional matrix of the eta-interpolated proxy, computed in
/// closed form from the deterministic inner assignments.
fn interp_matrix(
    zhat: &[usize],
    z: &[usize],
    range: usize,
    k: usize,
    eta: f64,
) -> ConditionalMatrix {
    let n = zhat.len() as f64;
    let mut cell = vec![0.0; range];
    let mut joint = vec![vec![0.0; k]; range];
    let mut group = vec![0.0; k];
    for (&j, &zi) in zhat.iter().zip(z) {
        cell[j] += 1.0;
        joint[j][zi] += 1.0;
        group[zi] += 1.0;
    }
    let mut rows = Vec::new();
    let mut leaf_mass = Vec::new();
    let mut leaf_ids = Vec::new();
    let r = range as f64;
    for j in 0..range {
        // Numerator and denominator are both scaled by `range` so the
        // eta = 1 limit reduces to group[i] / n bitwise — identical to
        // the priors, making full mixing exactly non-disclosive.
        let denom = (1.0 - eta) * cell[j] * r + eta * n;
        if denom <= 0.0 {
            continue;
        }
        let row: Vec<f64> = (0..k)
            .map(|i| ((1.0 - eta) * joint[j][i] * r + eta * group[i]) / denom)
            .collect();
        rows.push(row);
        leaf_mass.push(denom / (r * n));
        leaf_ids.push(j.to_string());
    }
    ConditionalMatrix {
        rows,
        leaf_mass,
        leaf_ids,
    }
}

/// Induced marginal of the kept set under a plan, tolerant of plans and
/// matrices with different leaf sets. None when nothing is kept.
fn induced_marginal(plan: &SamplingPlan, a: &ConditionalMatrix) -> Option<Vec<f64>> {
    let k = a.group_count();
    let mut num = vec![0.0; k];
    let mut den = 0.0;
    for ((row, &mass), id) in a.rows.iter().zip(&a.leaf_mass).zip(&a.leaf_ids) {
        let rho = plan.rho_for(id);
        den += mass * rho;
        for (n, r) in num.iter_mut().zip(row) {
            *n += mass * rho * r;
        }
    }
    if den <= 0.0 {
        return None;
    }
    Some(num.iter().map(|v| v / den).collect())
}

fn realized_imbalance(
    kept: &[usize],
    sensitive: &[usize],
    k: usize,
    u: &TargetDistribution,
) -> f64 {
    let mut marginal = vec![0.0; k];
    if kept.is_empty() {
        return imbalance_of(&marginal, u);
    }
    for &i in kept {
        marginal[sensitive[i]] += 1.0;
    }
    for m in &mut marginal {
        *m /= kept.len() as f64;
    }
    imbalance_of(&marginal, u)
}

struct UnitOutput {
    points: Vec<TradeoffPoint>,
    failures: Vec<CellFailure>,
    proportions: Vec<ProportionRecord>,
    heatmaps: Vec<HeatmapRecord>,
    bounds: Vec<BoundRecord>,
    timings: Vec<TimingRecord>,
}

fn subsample_rows(ds: &LabeledDataset, cap: usize, seed: u64) -> LabeledDataset {
    if ds.len() <= cap {
        return ds.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(cap);
    LabeledDataset {
        features: idx.iter().map(|&i| ds.features[i].clone()).collect(),
        labels: idx.iter().map(|&i| ds.labels[i]).collect(),
        sensitive: idx.iter().map(|&i| ds.sensitive[i]).collect(),
        group_count: ds.group_count,
        feature_names: ds.feature_names.clone(),
        group_names: ds.group_names.clone(),
    }
}

/// Runs the full grid for one (variant, seed) pair.
fn run_unit(
    cfg: &ExperimentConfig,
    ds: &LabeledDataset,
    variant: Variant,
    seed: u64,
) -> UnitOutput {
    let mut out = UnitOutput {
        points: Vec::new(),
        failures: Vec::new(),
        proportions: Vec::new(),
        heatmaps: Vec::new(),
        bounds: Vec::new(),
        timings: Vec::new(),
    };
    let unit_seed = cell_seed(cfg.master_seed, variant.name(), f64::NAN, seed);
    let prepared = match cfg.subsample {
        Some(cap) => subsample_rows(ds, cap, unit_seed),
        None => ds.clone(),
    };
    let split = match split_train_test(&prepared, cfg.train_fraction, unit_seed) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(CellFailure {
                variant: variant.name().into(),
                grid_value: f64::NAN,
                seed,
                message: e.to_string(),
            });
            return out;
        }
    };
    let (train, test) = split;
    let k = train.group_count;
    let u = match &cfg.target {
        Some(t) => match TargetDistribution::from_vec(t.clone()) {
            Ok(u) => u,
            Err(e) => {
                out.failures.push(CellFailure {
                    variant: variant.name().into(),
                    grid_value: f64::NAN,
                    seed,
                    message: e.to_string(),
                });
                return out;
            }
        },
        None => TargetDistribution::uniform(k),
    };

    // Direct classifiers depend on the split but not on eta: train once.
    let direct = if variant.is_tree() {
        None
    } else {
        let kind = match variant {
            Variant::NaiveRegression | Variant::QpRegression => DirectKind::Softmax,
            _ => DirectKind::Cart,
        };
        match train_direct(&train, kind, &DirectHyper::default()) {
            Ok(clf) => Some(clf),
            Err(e) => {
                out.failures.push(CellFailure {
                    variant: variant.name().into(),
                    grid_value: f64::NAN,
                    seed,
                    message: e.to_string(),
                });
                return out;
            }
        }
    };

    for &g in cfg.grid_for(variant) {
        let started = Instant::now();
        let point_seed = cell_seed(cfg.master_seed, variant.name(), g, seed);
        let result = if let Some(clf) = &direct {
            run_direct_point(cfg, variant, clf, &train, &test, &u, g, point_seed)
        } else {
            run_tree_point(cfg, variant, &train, &test, &u, g, point_seed)
        };
        out.timings.push(TimingRecord {
            variant: variant.name().into(),
            grid_value: g,
            seed,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        match result {
            Ok(mut point) => {
                for p in &mut point.points {
                    p.seed = seed;
                }
                out.points.extend(point.points);
                out.proportions.push(ProportionRecord {
                    variant: variant.name().into(),
                    grid_value: g,
                    seed,
                    pre: point.pre,
                    post: point.post,
                });
                out.heatmaps.push(HeatmapRecord {
                    variant: variant.name().into(),
                    grid_value: g,
                    seed,
                    leaf_ids: point.matrix.leaf_ids,
                    rows: point.matrix.rows,
                });
                if let Some(report) = point.bounds {
                    out.bounds.push(BoundRecord {
                        variant: variant.name().into(),
                        grid_value: g,
                        seed,
                        report,
                    });
                }
            }
            Err(e) => out.failures.push(CellFailure {
                variant: variant.name().into(),
                grid_value: g,
                seed,
                message: e.to_string(),
            }),
        }
    }
    out
}

struct PointOutput {
    points: Vec<TradeoffPoint>,
    pre: Vec<f64>,
    post: Vec<f64>,
    matrix: ConditionalMatrix,
    bounds: Option<BoundReport>,
}

#[allow(clippy::too_many_arguments)]
fn measure_split(
    variant: Variant,
    grid_value: f64,
    split_name: &str,
    a: &ConditionalMatrix,
    priors: &[f64],
    plan: &SamplingPlan,
    u: &TargetDistribution,
    kept: &[usize],
    sensitive: &[usize],
    split_count: usize,
) -> Result<TradeoffPoint> {
    let induced = induced_marginal(plan, a)
        .ok_or(Error::DegeneratePlan)?;
    Ok(TradeoffPoint {
        variant: variant.name().into(),
        grid_kind: variant.grid_kind().into(),
        grid_value,
        seed: 0, // filled by the unit
        split: split_name.into(),
        disclosivity: disclosivity_of_matrix(&a.rows, priors),
        imbalance: imbalance_of(&induced, u),
        realized_imbalance: realized_imbalance(kept, sensitive, priors.len(), u),
        split_count,
        kept: kept.len(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_tree_point(
    cfg: &ExperimentConfig,
    variant: Variant,
    train: &LabeledDataset,
    test: &LabeledDataset,
    u: &TargetDistribution,
    alpha: f64,
    seed: u64,
) -> Result<PointOutput> {
    let grow_cfg = GrowConfig {
        alpha,
        epsilon: cfg.epsilon,
        gamma: cfg.gamma,
        max_height: cfg.max_height,
        stop_distance: cfg.stop_distance,
        t_cap: cfg.t_cap,
        min_leaf_mass: cfg.min_leaf_mass,
        seed,
    };
    let grown = grow_tree(train, u, &grow_cfg)?;
    let mode = if variant == Variant::AlphaBetaRelaxed {
        PlanMode::Relaxed
    } else {
        PlanMode::Strict
    };
    let plan = derive_plan(&grown.matrix, u, mode)?;
    let split_count = grown.trace.accepted_splits;

    let mut points = Vec::new();
    let mut post = Vec::new();
    for (name, split, salt) in [("train", train, 1u64), ("test", test, 2u64)] {
        let a = estimate_conditional_matrix(&grown.tree, split)?;
        let priors = base_rates(split)?.rates;
        let kept = rejection_sample(&grown.tree, &plan, &split.features, seed ^ salt)?;
        let point = measure_split(
            variant,
            alpha,
            name,
            &a,
            &priors,
            &plan,
            u,
            &kept,
            &split.sensitive,
            split_count,
        )?;
        if name == "train" {
            post = induced_marginal(&plan, &a).unwrap_or_default();
        }
        points.push(point);
    }
    let beta = grown.trace.final_distance.clamp(1e-6, std::f64::consts::SQRT_2);
    let bounds = bound_report(
        alpha,
        beta,
        cfg.epsilon,
        cfg.delta,
        train.dim() + 1,
        u.len(),
        cfg.gamma,
    )
    .ok();
    Ok(PointOutput {
        points,
        pre: base_rates(train)?.rates,
        post,
        matrix: grown.matrix,
        bounds,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_direct_point(
    cfg: &ExperimentConfig,
    variant: Variant,
    clf: &crate::baselines::DirectClassifier,
    train: &LabeledDataset,
    test: &LabeledDataset,
    u: &TargetDistribution,
    eta: f64,
    seed: u64,
) -> Result<PointOutput> {
    let range = clf.group_count;
    let zhat_train: Vec<usize> = train.features.iter().map(|x| clf.predict(x)).collect();
    let a_train = interp_matrix(&zhat_train, &train.sensitive, range, train.group_count, eta);
    let plan = match variant {
        Variant::NaiveRegression | Variant::NaiveTree => naive_plan_from_matrix(&a_train)?,
        _ => qp_plan_from_matrix(&a_train, u)?,
    };
    let _ = cfg;

    let proxy = Interpolated::new(clf.clone(), eta)?;
    let mut points = Vec::new();
    let mut post = Vec::new();
    for (name, split, salt) in [("train", train, 1u64), ("test", test, 2u64)] {
        let a = if name == "train" {
            a_train.clone()
        } else {
            let zhat: Vec<usize> = split.features.iter().map(|x| clf.predict(x)).collect();
            interp_matrix(&zhat, &split.sensitive, range, split.group_count, eta)
        };
        let priors = base_rates(split)?.rates;
        let kept = rejection_sample(&proxy, &plan, &split.features, seed ^ salt)?;
        points.push(measure_split(
            variant,
            eta,
            name,
            &a,
            &priors,
            &plan,
            u,
            &kept,
            &split.sensitive,
            0,
        )?);
        if name == "train" {
            post = induced_marginal(&plan, &a).unwrap_or_default();
        }
    }
    Ok(PointOutput {
        points,
        pre: base_rates(train)?.rates,
        post,
        matrix: a_train,
        bounds: None,
    })
}

fn point_sort_key(p: &TradeoffPoint) -> (String, String, u64, u64, String) {
    (
        p.variant.clone(),
        p.grid_kind.clone(),
        p.grid_value.to_bits(),
        p.seed,
        p.split.clone(),
    )
}

/// Runs the sweep on an in-memory dataset and writes all output files.
pub fn run_experiment_on(cfg: &ExperimentConfig, ds: &LabeledDataset) -> Result<RunSummary> {
    cfg.validate()?;
    ds.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;

    let units: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| (0..cfg.seeds).map(move |s| (v, s)))
        .collect();
    let results = par::map_collect(units, |(v, s)| run_unit(cfg, ds, v, s));

    let mut points = Vec::new();
    let mut failures = Vec::new();
    let mut proportions = Vec::new();
    let mut heatmaps = Vec::new();
    let mut bounds = Vec::new();
    let mut timings = Vec::new();
    for unit in results {
        points.extend(unit.points);
        failures.extend(unit.failures);
        proportions.extend(unit.proportions);
        heatmaps.extend(unit.heatmaps);
        bounds.extend(unit.bounds);
        timings.extend(unit.timings);
    }
    points.sort_by_key(point_sort_key);
    failures.sort_by(|a, b| {
        (&a.variant, a.grid_value.to_bits(), a.seed)
            .cmp(&(&b.variant, b.grid_value.to_bits(), b.seed))
    });
    proportions.sort_by(|a, b| {
        (&a.variant, a.grid_value.to_bits(), a.seed)
            .cmp(&(&b.variant, b.grid_value.to_bits(), b.seed))
    });
    heatmaps.sort_by(|a, b| {
        (&a.variant, a.grid_value.to_bits(), a.seed)
            .cmp(&(&b.variant, b.grid_value.to_bits(), b.seed))
    });
    bounds.sort_by(|a, b| {
        (&a.variant, a.grid_value.to_bits(), a.seed)
            .cmp(&(&b.variant, b.grid_value.to_bits(), b.seed))
    });

    write_curves(&cfg.output_dir.join("curves.csv"), &points)?;
    write_json(&cfg.output_dir.join("proportions.json"), &proportions)?;
    write_json(&cfg.output_dir.join("heatmaps.json"), &heatmaps)?;
    write_json(&cfg.output_dir.join("bounds.json"), &bounds)?;
    write_json(&cfg.output_dir.join("failures.json"), &failures)?;
    write_timings(&cfg.output_dir.join("timings.csv"), &timings)?;
    emit_plot_data(&cfg.output_dir)?;

    Ok(RunSummary {
        points,
        failures,
        proportions,
        bounds,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Loads (or synthesizes) the dataset and runs the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let ds = match (&cfg.dataset, &cfg.schema) {
        (Some(path), Some(schema)) => crate::dataset::load_csv(path, schema)?.dataset,
        (Some(_), None) => {
            return Err(Error::Domain("dataset path given without a schema".into()))
        }
        (None, _) => crate::synth::skewed_census_like(20_000, cfg.master_seed),
    };
    run_experiment_on(cfg, &ds)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

fn write_curves(path: &Path, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variant",
        "grid_kind",
        "grid_value",
        "seed",
        "split",
        "disclosivity",
        "imbalance",
        "realized_imbalance",
        "split_count",
        "kept",
    ])?;
    for p in points {
        w.write_record([
            p.variant.clone(),
            p.grid_kind.clone(),
            format!("{:.6}", p.grid_value),
            p.seed.to_string(),
            p.split.clone(),
            format!("{:.12}", p.disclosivity),
            format!("{:.12}", p.imbalance),
            format!("{:.12}", p.realized_imbalance),
            p.split_count.to_string(),
            p.kept.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timings(path: &Path, timings: &[TimingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "grid_value", "seed", "wall_time_ms"])?;
    for t in timings {
        w.write_record([
            t.variant.clone(),
            format!("{:.6}", t.grid_value),
            t.seed.to_string(),
            format!("{:.3}", t.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical percentile with linear interpolation over sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Aggregates curves.csv into mean and empirical 95% interval per
/// (variant, grid point, split), written as aggregated.csv.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(dir.join("curves.csv"))?;
    // (variant, grid_kind, grid_value, split) -> (disclosivities, imbalances)
    type CurveKey = (String, String, String, String);
    let mut groups: std::collections::BTreeMap<CurveKey, (Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for record in reader.records() {
        let r = record?;
        let key = (
            r[0].to_string(),
            r[1].to_string(),
            r[2].to_string(),
            r[4].to_string(),
        );
        let entry = groups.entry(key).or_default();
        entry.0.push(r[5].parse().map_err(|_| Error::Parse("bad disclosivity".into()))?);
        entry.1.push(r[6].parse().map_err(|_| Error::Parse("bad imbalance".into()))?);
    }

    let mut rows = Vec::new();
    let mut w = csv::Writer::from_path(dir.join("aggregated.csv"))?;
    w.write_record([
        "variant",
        "grid_kind",
        "grid_value",
        "split",
        "n",
        "mean_disclosivity",
        "lo_disclosivity",
        "hi_disclosivity",
        "mean_imbalance",
        "lo_imbalance",
        "hi_imbalance",
    ])?;
    for ((variant, kind, value, split), (mut disc, mut imb)) in groups {
        disc.sort_by(|a, b| a.partial_cmp(b).unwrap());
        imb.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let row = vec![
            variant,
            kind,
            value,
            split,
            disc.len().to_string(),
            format!("{:.12}", mean(&disc)),
            format!("{:.12}", percentile(&disc, 0.025)),
            format!("{:.12}", percentile(&disc, 0.975)),
            format!("{:.12}", mean(&imb)),
            format!("{:.12}", percentile(&imb, 0.025)),
            format!("{:.12}", percentile(&imb, 0.975)),
        ];
        w.write_record(&row)?;
        rows.push(row);
    }
    w.flush()?;
    Ok(rows)
}
