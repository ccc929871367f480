//! Experiment harness: config files, per-trial seeding, concurrent trials
//! with ordered on-disk output, and the helpers behind the `bench-leiden`
//! and `inspect-proximity` commands.
//!
//! Output layout inside `output_dir`:
//! * `records.csv`: a schema comment line, the header, then one row per
//!   generation ordered by (setup, trial, generation).
//! * `masks.jsonl`: one accepted crossover mask per line, same order.
//! * `meta.json`: resolved config, trial seeds, version and git revision.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{run_trial_observed, MaskRecord, RunConfig, SetupKind, TrialOutcome};
use crate::linkage_graph::{leiden_partition, modularity};
use crate::metrics::{GenerationRecord, RECORD_COLUMNS};
use crate::network::{LayerSpec, Network};
use crate::oracle::{exhaustive_optimum, random_connected_graph};
use crate::par::{self, Execution};

pub const RECORDS_FILE: &str = "records.csv";
pub const MASKS_FILE: &str = "masks.jsonl";
pub const META_FILE: &str = "meta.json";
/// First line of `records.csv`.
pub const RECORDS_SCHEMA: &str = "# modlink records v1";
/// Overrides `base_seed` when set.
pub const SEED_ENV: &str = "MODLINK_SEED";

/// A full experiment: every listed setup is run for `trials` trials with the
/// shared hyperparameters below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub setups: Vec<SetupKind>,
    pub trials: u32,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub n_bits: usize,
    /// `[n, n, n, n, 1]` with biases when absent.
    pub layer_sizes: Option<LayerSpec>,
    pub pop_size: usize,
    pub elitism_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub init_sigma: f64,
    pub max_evaluations: u64,
    pub literal_alg4_normalization: bool,
    pub lt_max_subset_size: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let run = RunConfig::default();
        ExperimentSpec {
            setups: SetupKind::ALL.to_vec(),
            trials: 20,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            n_bits: run.n_bits,
            layer_sizes: None,
            pop_size: run.pop_size,
            elitism_rate: run.elitism_rate,
            mutation_rate: run.mutation_rate,
            mutation_sigma: run.mutation_sigma,
            init_sigma: run.init_sigma,
            max_evaluations: run.max_evaluations,
            literal_alg4_normalization: run.literal_alg4_normalization,
            lt_max_subset_size: run.lt_max_subset_size,
        }
    }
}

/// One scheduled trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub setup: SetupKind,
    pub trial_id: u32,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.setups.is_empty() {
            return Err(Error::Config("no setups listed".into()));
        }
        for (i, s) in self.setups.iter().enumerate() {
            if self.setups[..i].contains(s) {
                return Err(Error::Config(format!("setup {s} listed twice")));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        for &s in &self.setups {
            self.run_config(s, 0).validate()?;
        }
        Ok(())
    }

    /// Applies a `MODLINK_SEED`-style override value.
    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self> {
        if let Some(v) = value {
            self.base_seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned 64-bit integer, got {v:?}")))?;
        }
        Ok(self)
    }

    /// Reads [`SEED_ENV`] from the environment.
    pub fn with_env_overrides(self) -> Result<Self> {
        let value = std::env::var(SEED_ENV).ok();
        self.with_seed_override(value.as_deref())
    }

    pub fn resolved_layer_sizes(&self) -> LayerSpec {
        self.layer_sizes
            .clone()
            .unwrap_or_else(|| RunConfig::new(self.n_bits, SetupKind::MOD).layer_sizes)
    }

    pub fn run_config(&self, setup: SetupKind, trial_id: u32) -> RunConfig {
        RunConfig {
            n_bits: self.n_bits,
            layer_sizes: self.resolved_layer_sizes(),
            setup,
            pop_size: self.pop_size,
            elitism_rate: self.elitism_rate,
            mutation_rate: self.mutation_rate,
            mutation_sigma: self.mutation_sigma,
            init_sigma: self.init_sigma,
            max_evaluations: self.max_evaluations,
            seed: trial_seed(self.base_seed, setup, trial_id),
            literal_alg4_normalization: self.literal_alg4_normalization,
            lt_max_subset_size: self.lt_max_subset_size,
        }
    }

    /// Setups in listed order, trials ascending within each setup.
    pub fn trial_plan(&self) -> Vec<PlannedTrial> {
        self.setups
            .iter()
            .flat_map(|&setup| {
                (0..self.trials).map(move |trial_id| PlannedTrial {
                    setup,
                    trial_id,
                    seed: trial_seed(self.base_seed, setup, trial_id),
                })
            })
            .collect()
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: SplitMix64 folded over the base seed, the setup's
/// position in [`SetupKind::ALL`] and the trial index. Independent of which
/// other setups are listed.
pub fn trial_seed(base_seed: u64, setup: SetupKind, trial_id: u32) -> u64 {
    let s = SetupKind::ALL.iter().position(|&k| k == setup).expect("listed setup") as u64;
    splitmix64(splitmix64(splitmix64(base_seed) ^ s) ^ u64::from(trial_id))
}

/// End-of-trial numbers kept after the population is dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub setup: SetupKind,
    pub trial_id: u32,
    pub seed: u64,
    pub generations: u32,
    pub final_best_fitness: f64,
    pub accepted_masks: usize,
    pub accepted_cross_rate_sum: f64,
    /// Initial evaluations plus everything each offspring reported.
    pub reported_evaluations: u64,
    /// The evaluator's counter.
    pub counted_evaluations: u64,
    /// `evaluations_used` of the last CSV row.
    pub recorded_evaluations: u64,
}

impl TrialSummary {
    fn new(plan: PlannedTrial, out: &TrialOutcome) -> Self {
        let last = out.records.last().expect("generation 0 is always recorded");
        TrialSummary {
            setup: plan.setup,
            trial_id: plan.trial_id,
            seed: plan.seed,
            generations: last.generation,
            final_best_fitness: out.best_fitness(),
            accepted_masks: out.masks.len(),
            accepted_cross_rate_sum: out.masks.iter().map(|m| m.cross_rate).sum(),
            reported_evaluations: out.evaluations.reported_total(),
            counted_evaluations: out.evaluations.counter,
            recorded_evaluations: last.evaluations_used,
        }
    }

    pub fn budget_consistent(&self) -> bool {
        self.reported_evaluations == self.counted_evaluations && self.counted_evaluations == self.recorded_evaluations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub trials: Vec<TrialSummary>,
}

impl ExperimentSummary {
    pub fn of_setup(&self, setup: SetupKind) -> impl Iterator<Item = &TrialSummary> {
        self.trials.iter().filter(move |t| t.setup == setup)
    }

    pub fn mean_final_best(&self, setup: SetupKind) -> f64 {
        crate::metrics::mean(self.of_setup(setup).map(|t| t.final_best_fitness))
    }

    /// Mean over every mask accepted in any trial of `setup`, 0 if none.
    pub fn mean_accepted_cross_rate(&self, setup: SetupKind) -> f64 {
        let (sum, count) = self
            .of_setup(setup)
            .fold((0.0, 0usize), |(s, c), t| (s + t.accepted_cross_rate_sum, c + t.accepted_masks));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

enum Message {
    Generation {
        slot: usize,
        record: GenerationRecord,
        masks: Vec<MaskRecord>,
    },
    Done {
        slot: usize,
    },
}

struct OutputFiles {
    records: csv::Writer<BufWriter<File>>,
    masks: BufWriter<File>,
}

impl OutputFiles {
    fn create(dir: &Path) -> Result<Self> {
        let mut raw = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        writeln!(raw, "{RECORDS_SCHEMA}")?;
        let mut records = csv::WriterBuilder::new().has_headers(false).from_writer(raw);
        records.write_record(RECORD_COLUMNS)?;
        records.flush()?;
        let masks = BufWriter::new(File::create(dir.join(MASKS_FILE))?);
        Ok(OutputFiles { records, masks })
    }

    fn write(&mut self, record: &GenerationRecord, masks: &[MaskRecord]) -> Result<()> {
        self.records.serialize(record)?;
        for m in masks {
            serde_json::to_writer(&mut self.masks, m)?;
            self.masks.write_all(b"\n")?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.records.flush()?;
        self.masks.flush()?;
        Ok(())
    }
}

/// Streams the lowest unfinished trial straight to disk and buffers the
/// others until every earlier trial is done, so file order never depends on
/// scheduling.
struct OrderedSink {
    head: usize,
    pending: Vec<Vec<(GenerationRecord, Vec<MaskRecord>)>>,
    done: Vec<bool>,
}

impl OrderedSink {
    fn new(slots: usize) -> Self {
        OrderedSink {
            head: 0,
            pending: vec![Vec::new(); slots],
            done: vec![false; slots],
        }
    }

    fn accept(&mut self, msg: Message, out: &mut OutputFiles) -> Result<()> {
        match msg {
            Message::Generation { slot, record, masks } => {
                if slot == self.head {
                    out.write(&record, &masks)?;
                    out.flush()?;
                } else {
                    self.pending[slot].push((record, masks));
                }
            }
            Message::Done { slot } => {
                self.done[slot] = true;
                while self.head < self.done.len() && self.done[self.head] {
                    self.head += 1;
                    if let Some(buffered) = self.pending.get_mut(self.head) {
                        for (record, masks) in buffered.drain(..) {
                            out.write(&record, &masks)?;
                        }
                        out.flush()?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    git_revision: Option<String>,
    created_unix_seconds: u64,
    experiment: &'a ExperimentSpec,
    resolved_layer_sizes: LayerSpec,
    records_schema: &'static str,
    trials: Vec<PlannedTrial>,
    notes: BTreeMap<&'static str, &'static str>,
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let rev = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!rev.is_empty()).then_some(rev)
}

fn write_meta(spec: &ExperimentSpec) -> Result<()> {
    let notes = BTreeMap::from([
        (
            "mutation",
            "after mixing, every offspring gets one mutate-and-keep-if-strictly-better step (one extra evaluation); \
             NO uses that step as its only variation",
        ),
        (
            "mutation_rate",
            "per-weight probability of adding Normal(0, mutation_sigma^2)",
        ),
        (
            "parent_child_diff",
            "mean over produced offspring of the behaviour difference to the first parent and to the donor actually \
             used (aligned under NS); NO compares against the first parent only",
        ),
        (
            "cross_rate",
            "min(r, 1 - r) per accepted mask; the per-generation column averages the masks accepted that generation",
        ),
    ]);
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        git_revision: git_revision(),
        created_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        experiment: spec,
        resolved_layer_sizes: spec.resolved_layer_sizes(),
        records_schema: RECORDS_SCHEMA,
        trials: spec.trial_plan(),
        notes,
    };
    let file = BufWriter::new(File::create(spec.output_dir.join(META_FILE))?);
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(())
}

/// Runs every trial of `spec`, at most `jobs` at a time, and writes the
/// output files. Rows are flushed after each generation of the trial that is
/// currently first in file order.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>, exec: Execution) -> Result<ExperimentSummary> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir)?;
    write_meta(spec)?;
    let mut files = OutputFiles::create(&spec.output_dir)?;
    let plan = spec.trial_plan();
    let (tx, rx) = mpsc::channel::<Message>();

    let outcomes = std::thread::scope(|scope| -> Result<Vec<Result<TrialSummary>>> {
        let plan = &plan;
        let worker = scope.spawn(move || {
            par::with_jobs(jobs, || {
                par::map_range(exec, plan.len(), |slot| {
                    let p = plan[slot];
                    let cfg = spec.run_config(p.setup, p.trial_id);
                    let result = run_trial_observed(&cfg, p.trial_id, exec, |record, masks| {
                        let _ = tx.send(Message::Generation {
                            slot,
                            record: record.clone(),
                            masks: masks.to_vec(),
                        });
                    });
                    let _ = tx.send(Message::Done { slot });
                    result.map(|out| TrialSummary::new(p, &out))
                })
            })
        });
        let mut sink = OrderedSink::new(plan.len());
        for msg in rx {
            sink.accept(msg, &mut files)?;
        }
        Ok(worker.join().expect("trial worker panicked"))
    })?;
    files.flush()?;
    Ok(ExperimentSummary {
        output_dir: spec.output_dir.clone(),
        trials: outcomes.into_iter().collect::<Result<_>>()?,
    })
}

/// Parses a `records.csv` written by [`run_experiment`].
pub fn read_records(path: &Path) -> Result<Vec<GenerationRecord>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RECORD_COLUMNS) {
        return Err(Error::Config(format!("unexpected records header {headers:?}")));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_masks(path: &Path) -> Result<Vec<MaskRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeidenBenchRow {
    pub graph: usize,
    pub leiden_quality: f64,
    pub optimum_quality: f64,
    pub gap: f64,
    pub leiden_communities: usize,
    pub optimum_communities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeidenBenchReport {
    pub vertices: usize,
    pub density: f64,
    pub seed: u64,
    pub rows: Vec<LeidenBenchRow>,
}

/// Slack allowed when checking that Leiden never beats the optimum.
pub const QUALITY_EPSILON: f64 = 1e-12;

impl LeidenBenchReport {
    /// Graphs where Leiden is within `tolerance` of the optimum.
    pub fn within(&self, tolerance: f64) -> usize {
        self.rows.iter().filter(|r| r.gap <= tolerance).count()
    }

    /// Graphs where Leiden reports more than the optimum (should be none).
    pub fn exceeding(&self) -> usize {
        self.rows.iter().filter(|r| r.gap < -QUALITY_EPSILON).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::from("graph  leiden_Q    optimum_Q   gap        communities\n");
        for r in &self.rows {
            s += &format!(
                "{:>5}  {:<10.6}  {:<10.6}  {:<9.2e}  {}/{}\n",
                r.graph, r.leiden_quality, r.optimum_quality, r.gap, r.leiden_communities, r.optimum_communities
            );
        }
        let n = self.rows.len();
        s += &format!(
            "{} graphs, {} vertices: exact {}/{n}, within 0.02 {}/{n}, above optimum {}\n",
            n,
            self.vertices,
            self.within(1e-9),
            self.within(0.02),
            self.exceeding()
        );
        s
    }
}

/// Compares Leiden with the exhaustive optimum on `graphs` random connected
/// graphs. Graph `k` and its Leiden run depend only on `seed` and `k`.
pub fn leiden_benchmark(vertices: usize, graphs: usize, density: f64, seed: u64, exec: Execution) -> Result<LeidenBenchReport> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Config(format!("density must be in [0, 1], got {density}")));
    }
    if vertices == 0 {
        return Err(Error::Config("vertices must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list: Vec<_> = (0..graphs).map(|_| random_connected_graph(vertices, density, &mut rng)).collect();
    let rows = par::map_range(exec, graphs, |k| -> Result<LeidenBenchRow> {
        let g = &list[k];
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k as u64)));
        let p = leiden_partition(g, &mut rng)?;
        let q = modularity(g, &p)?;
        let opt = exhaustive_optimum(g)?;
        Ok(LeidenBenchRow {
            graph: k,
            leiden_quality: q,
            optimum_quality: opt.quality,
            gap: opt.quality - q,
            leiden_communities: p.community_count(),
            optimum_communities: opt.labels.iter().max().map_or(0, |m| m + 1),
        })
    });
    Ok(LeidenBenchReport {
        vertices,
        density,
        seed,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// `"2,2,1"` to `[2, 2, 1]`.
pub fn parse_layer_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad layer size {t:?} in {text:?}")))
        })
        .collect()
}

/// Whitespace-separated numbers in flat weight order.
pub fn parse_weights(text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Config(format!("bad weight {t:?}"))))
        .collect()
}

/// Builds a network from a flat weight list. Whether the architecture has
/// biases is decided by the number of weights.
pub fn network_from_weights(sizes: Vec<usize>, weights: Vec<f64>) -> Result<Network> {
    let with = LayerSpec::new(sizes.clone())?;
    let without = LayerSpec::without_bias(sizes)?;
    let spec = if weights.len() == with.weight_count() {
        with
    } else if weights.len() == without.weight_count() {
        without
    } else {
        return Err(Error::Config(format!(
            "got {} weights; the architecture needs {} with biases or {} without",
            weights.len(),
            with.weight_count(),
            without.weight_count()
        )));
    };
    Network::new(spec, weights)
}
