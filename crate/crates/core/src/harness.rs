//! Multi-run experiments: seed derivation, parallel execution, cross-run
//! aggregation and the CSV tables written for downstream plotting.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{derive_seed, run_simulation, RunConfig, RunRecord, SampleRow, Treatment, METRICS};
use crate::error::{ConfigError, HarnessError};
use crate::plex::{MutationOptions, StrategyEdit};
use crate::social::GatheringConfig;
use crate::task::RewardDistribution;

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "COEVO_JOBS";

/// z-score of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

const PAIRED_ENV_TAG: u64 = 0x7061_6972;

pub fn default_jobs() -> usize {
    std::env::var(JOBS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Template for every run; its `seed`, `env_seed` and `treatment` are
    /// overwritten per run.
    pub base: RunConfig,
    pub base_seed: u64,
    pub run_count: usize,
    pub treatments: Vec<Treatment>,
    pub jobs: usize,
    /// Give run `i` of every treatment the same environment.
    pub paired_environments: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            base_seed: 0,
            run_count: 159,
            treatments: Treatment::ALL.to_vec(),
            jobs: 1,
            paired_environments: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run_count == 0 {
            return Err(ConfigError::invalid("run_count", "must be at least 1"));
        }
        if self.treatments.is_empty() {
            return Err(ConfigError::invalid("treatments", "at least one treatment required"));
        }
        let mut seen = self.treatments.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.treatments.len() {
            return Err(ConfigError::invalid("treatments", "listed more than once"));
        }
        if self.jobs == 0 {
            return Err(ConfigError::invalid("jobs", "must be at least 1"));
        }
        self.base.validate()
    }

    /// Seed of run `run` under `treatment`.
    pub fn run_seed(&self, treatment: Treatment, run: usize) -> u64 {
        derive_seed(&[self.base_seed, treatment.tag(), run as u64])
    }

    pub fn run_config(&self, treatment: Treatment, run: usize) -> RunConfig {
        RunConfig {
            seed: self.run_seed(treatment, run),
            env_seed: self
                .paired_environments
                .then(|| derive_seed(&[self.base_seed, PAIRED_ENV_TAG, run as u64])),
            treatment,
            ..self.base.clone()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_owned(), message },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: ExperimentFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        let cfg = file.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ExperimentFile::from_config(self)).expect("flat config serializes")
    }
}

/// On-disk form of [`ExperimentConfig`]: one flat table, every key optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    base_seed: Option<u64>,
    run_count: Option<usize>,
    treatments: Option<Vec<Treatment>>,
    jobs: Option<usize>,
    paired_environments: Option<bool>,
    days: Option<u32>,
    sample_interval: Option<u32>,
    population_size: Option<usize>,
    site_count: Option<usize>,
    reward_weights: Option<[f64; 3]>,
    kappa: Option<f64>,
    min_participants: Option<usize>,
    births_per_day: Option<usize>,
    age_unit_days: Option<u32>,
    strategy_edit: Option<StrategyEdit>,
    max_attempts: Option<u32>,
    log_events: Option<bool>,
    record_population: Option<bool>,
}

impl ExperimentFile {
    fn into_config(self) -> ExperimentConfig {
        let d = ExperimentConfig { jobs: default_jobs(), ..ExperimentConfig::default() };
        let b = RunConfig::default();
        ExperimentConfig {
            base: RunConfig {
                days: self.days.unwrap_or(b.days),
                sample_interval: self.sample_interval.unwrap_or(b.sample_interval),
                population_size: self.population_size.unwrap_or(b.population_size),
                site_count: self.site_count.unwrap_or(b.site_count),
                reward_weights: self.reward_weights.map(|weights| RewardDistribution { weights }).unwrap_or(b.reward_weights),
                gathering: GatheringConfig {
                    kappa: self.kappa.unwrap_or(b.gathering.kappa),
                    min_participants: self.min_participants.unwrap_or(b.gathering.min_participants),
                },
                births_per_day: self.births_per_day.unwrap_or(b.births_per_day),
                age_unit_days: self.age_unit_days.unwrap_or(b.age_unit_days),
                mutation: MutationOptions {
                    strategy_edit: self.strategy_edit.unwrap_or(b.mutation.strategy_edit),
                    max_attempts: self.max_attempts.unwrap_or(b.mutation.max_attempts),
                },
                log_events: self.log_events.unwrap_or(b.log_events),
                record_population: self.record_population.unwrap_or(b.record_population),
                ..b
            },
            base_seed: self.base_seed.unwrap_or(d.base_seed),
            run_count: self.run_count.unwrap_or(d.run_count),
            treatments: self.treatments.unwrap_or(d.treatments),
            jobs: self.jobs.unwrap_or(d.jobs),
            paired_environments: self.paired_environments.unwrap_or(d.paired_environments),
        }
    }

    fn from_config(c: &ExperimentConfig) -> Self {
        Self {
            base_seed: Some(c.base_seed),
            run_count: Some(c.run_count),
            treatments: Some(c.treatments.clone()),
            jobs: Some(c.jobs),
            paired_environments: Some(c.paired_environments),
            days: Some(c.base.days),
            sample_interval: Some(c.base.sample_interval),
            population_size: Some(c.base.population_size),
            site_count: Some(c.base.site_count),
            reward_weights: Some(c.base.reward_weights.weights),
            kappa: Some(c.base.gathering.kappa),
            min_participants: Some(c.base.gathering.min_participants),
            births_per_day: Some(c.base.births_per_day),
            age_unit_days: Some(c.base.age_unit_days),
            strategy_edit: Some(c.base.mutation.strategy_edit),
            max_attempts: Some(c.base.mutation.max_attempts),
            log_events: Some(c.base.log_events),
            record_population: Some(c.base.record_population),
        }
    }
}

/// Runs every (treatment, run) pair of `cfg` on `cfg.jobs` workers.
/// Results come back grouped by treatment in configuration order, runs in
/// index order, whatever the worker count.
pub fn execute_runs(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Table(format!("thread pool: {e}")))?;
    let tasks: Vec<(Treatment, usize)> =
        cfg.treatments.iter().flat_map(|&t| (0..cfg.run_count).map(move |r| (t, r))).collect();
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(t, r)| {
                let mut rec = run_simulation(&cfg.run_config(t, r), |_| {})
                    .map_err(|e| HarnessError::Run { treatment: t, run: r, source: Box::new(e.into()) })?;
                rec.run = r;
                Ok(rec)
            })
            .collect()
    })
}

/// File name of a run record inside an experiment's `runs/` directory.
pub fn record_file_name(treatment: Treatment, run: usize) -> String {
    format!("{treatment}-{run:04}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub records: Vec<String>,
    pub failures: Vec<String>,
}

/// What an experiment wrote.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub aggregates: BTreeMap<Treatment, Vec<AggregateRow>>,
    pub files: Vec<PathBuf>,
}

/// Runs the experiment and writes, under `out_dir`: one run record per run
/// in `runs/`, a sample table and an aggregate table per treatment, and a
/// manifest. On failure the manifest lists what did finish.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| HarnessError::io(&runs_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Table(format!("thread pool: {e}")))?;
    let tasks: Vec<(Treatment, usize)> =
        cfg.treatments.iter().flat_map(|&t| (0..cfg.run_count).map(move |r| (t, r))).collect();
    let abort = AtomicBool::new(false);
    let results: Vec<Option<Result<RunRecord, HarnessError>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(t, r)| {
                if abort.load(Ordering::Relaxed) {
                    return None;
                }
                let out = run_one(cfg, t, r, &runs_dir);
                if out.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                Some(out)
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut first_error = None;
    for (res, &(t, r)) in results.into_iter().zip(&tasks) {
        match res {
            Some(Ok(rec)) => records.push(rec),
            Some(Err(e)) => {
                failures.push(format!("{t} run {r}: {e}"));
                first_error.get_or_insert(e);
            }
            None => failures.push(format!("{t} run {r}: skipped after earlier failure")),
        }
    }
    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        complete: failures.is_empty(),
        records: records.iter().map(|r| format!("runs/{}", record_file_name(r.treatment(), r.run))).collect(),
        failures,
    };
    write_json(&manifest_path, &manifest)?;
    if let Some(err) = first_error {
        if manifest.failures.len() == 1 {
            return Err(err);
        }
        return Err(HarnessError::Partial {
            failed: manifest.failures.len(),
            total: tasks.len(),
            manifest: manifest_path,
        });
    }

    let mut files = vec![manifest_path];
    let mut aggregates = BTreeMap::new();
    for &t in &cfg.treatments {
        let group: Vec<&RunRecord> = records.iter().filter(|r| r.treatment() == t).collect();
        let samples_path = out_dir.join(format!("samples_{t}.csv"));
        write_file(&samples_path, |w| write_sample_table(w, group.iter().copied()))?;
        let rows = aggregate(&group)?;
        let agg_path = out_dir.join(aggregate_file_name(t));
        write_file(&agg_path, |w| write_aggregate_table(w, &rows))?;
        files.extend([samples_path, agg_path]);
        aggregates.insert(t, rows);
    }
    Ok(ExperimentOutput { records, aggregates, files })
}

fn run_one(cfg: &ExperimentConfig, t: Treatment, r: usize, runs_dir: &Path) -> Result<RunRecord, HarnessError> {
    let wrap = |e: HarnessError| HarnessError::Run { treatment: t, run: r, source: Box::new(e) };
    let mut rec = run_simulation(&cfg.run_config(t, r), |_| {}).map_err(|e| wrap(e.into()))?;
    rec.run = r;
    write_json(&runs_dir.join(record_file_name(t, r)), &rec).map_err(wrap)?;
    Ok(rec)
}

pub fn aggregate_file_name(treatment: Treatment) -> String {
    format!("aggregate_{treatment}.csv")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, value).map_err(|source| HarnessError::Json { path: path.to_owned(), source })?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_file<F>(path: &Path, body: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), HarnessError>,
{
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_record(path: &Path) -> Result<RunRecord, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|source| HarnessError::Json { path: path.to_owned(), source })
}

/// Loads every `*.json` run record in `dir` (or in `dir/runs` when present),
/// ordered by treatment and run index.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let runs = dir.join("runs");
    let dir = if runs.is_dir() { runs } else { dir.to_owned() };
    let mut records = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))? {
        let path = entry.map_err(|e| HarnessError::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") && path.file_name().is_some_and(|n| n != "manifest.json") {
            records.push(read_record(&path)?);
        }
    }
    records.sort_by_key(|r| (r.treatment(), r.run));
    Ok(records)
}

/// Summary statistics of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
}

/// Streaming mean and sum of squared deviations; mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Self {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    pub fn stat(&self) -> MetricStat {
        if self.n < 2 {
            return MetricStat { mean: self.mean, sd: 0.0, ci95: 0.0 };
        }
        let sd = (self.m2.max(0.0) / (self.n - 1) as f64).sqrt();
        MetricStat { mean: self.mean, sd, ci95: Z95 * sd / (self.n as f64).sqrt() }
    }

    fn from_stat(n: usize, s: &MetricStat) -> Self {
        Self { n, mean: s.mean, m2: if n < 2 { 0.0 } else { s.sd * s.sd * (n - 1) as f64 } }
    }
}

/// Cross-run statistics for one treatment on one sample day.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub day: u32,
    pub treatment: Treatment,
    pub runs: usize,
    pub stats: [MetricStat; 11],
}

impl AggregateRow {
    /// Fewer than two runs: the spread is reported as zero.
    pub fn degenerate(&self) -> bool {
        self.runs < 2
    }

    pub fn stat(&self, metric: &str) -> Option<MetricStat> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.stats[i])
    }

    /// Combines rows computed over disjoint sets of runs.
    pub fn merge(&self, other: &AggregateRow) -> Result<AggregateRow, HarnessError> {
        if self.day != other.day || self.treatment != other.treatment {
            return Err(HarnessError::GridMismatch(format!(
                "cannot merge day {} {} with day {} {}",
                self.day, self.treatment, other.day, other.treatment
            )));
        }
        let stats = std::array::from_fn(|i| {
            Accumulator::from_stat(self.runs, &self.stats[i])
                .merge(Accumulator::from_stat(other.runs, &other.stats[i]))
                .stat()
        });
        Ok(AggregateRow { day: self.day, treatment: self.treatment, runs: self.runs + other.runs, stats })
    }
}

/// Per-day mean, standard deviation and 95% half-width of every metric.
/// All records must share a treatment and a sample grid.
pub fn aggregate<R: std::borrow::Borrow<RunRecord>>(records: &[R]) -> Result<Vec<AggregateRow>, HarnessError> {
    let Some(first) = records.first().map(|r| r.borrow()) else { return Ok(Vec::new()) };
    let days: Vec<u32> = first.samples.iter().map(|s| s.day).collect();
    for r in records.iter().map(|r| r.borrow()) {
        if r.treatment() != first.treatment() {
            return Err(HarnessError::GridMismatch(format!(
                "treatments {} and {} mixed",
                first.treatment(),
                r.treatment()
            )));
        }
        if r.samples.len() != days.len() || r.samples.iter().zip(&days).any(|(s, d)| s.day != *d) {
            return Err(HarnessError::GridMismatch(format!("run {} samples different days", r.run)));
        }
    }
    Ok(days
        .iter()
        .enumerate()
        .map(|(i, &day)| {
            let mut acc = [Accumulator::default(); 11];
            for r in records {
                for (a, v) in acc.iter_mut().zip(r.borrow().samples[i].metrics()) {
                    a.push(v);
                }
            }
            AggregateRow { day, treatment: first.treatment(), runs: records.len(), stats: acc.map(|a| a.stat()) }
        })
        .collect())
}

/// Aggregates records grouped by treatment.
pub fn aggregate_by_treatment(records: &[RunRecord]) -> Result<BTreeMap<Treatment, Vec<AggregateRow>>, HarnessError> {
    let mut groups: BTreeMap<Treatment, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.treatment()).or_default().push(r);
    }
    groups.into_iter().map(|(t, g)| Ok((t, aggregate(&g)?))).collect()
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn sample_header() -> Vec<String> {
    ["day", "treatment", "run"].iter().map(|s| s.to_string()).chain(METRICS.iter().map(|s| s.to_string())).collect()
}

pub fn aggregate_header() -> Vec<String> {
    let mut h: Vec<String> = ["day", "treatment", "runs"].iter().map(|s| s.to_string()).collect();
    for m in METRICS {
        h.extend([format!("{m}_mean"), format!("{m}_sd"), format!("{m}_ci95")]);
    }
    h.push("degenerate".into());
    h
}

/// One row of a sample table.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub treatment: Treatment,
    pub run: usize,
    pub row: SampleRow,
}

pub fn write_sample_table<'a, I>(w: &mut dyn Write, records: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = &'a RunRecord>,
{
    let entries: Vec<SampleEntry> = records
        .into_iter()
        .flat_map(|r| r.samples.iter().map(|s| SampleEntry { treatment: r.treatment(), run: r.run, row: s.clone() }))
        .collect();
    write_sample_entries(w, &entries)
}

pub fn write_sample_entries(w: &mut dyn Write, entries: &[SampleEntry]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(sample_header())?;
    for e in entries {
        let mut rec = vec![e.row.day.to_string(), e.treatment.to_string(), e.run.to_string()];
        rec.extend(e.row.metrics().iter().map(|v| fmt6(*v)));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn read_sample_table<R: Read>(r: R) -> Result<Vec<SampleEntry>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &sample_header())?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut metrics = [0.0; 11];
        for (i, m) in metrics.iter_mut().enumerate() {
            *m = parse_field(&rec, 3 + i)?;
        }
        out.push(SampleEntry {
            treatment: rec[1].parse()?,
            run: parse_field(&rec, 2)?,
            row: SampleRow::from_metrics(parse_field(&rec, 0)?, metrics),
        });
    }
    Ok(out)
}

pub fn write_aggregate_table(w: &mut dyn Write, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(aggregate_header())?;
    for row in rows {
        let mut rec = vec![row.day.to_string(), row.treatment.to_string(), row.runs.to_string()];
        for s in &row.stats {
            rec.extend([fmt6(s.mean), fmt6(s.sd), fmt6(s.ci95)]);
        }
        rec.push(u8::from(row.degenerate()).to_string());
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn read_aggregate_table<R: Read>(r: R) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &aggregate_header())?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut stats = [MetricStat { mean: 0.0, sd: 0.0, ci95: 0.0 }; 11];
        for (i, s) in stats.iter_mut().enumerate() {
            let base = 3 + 3 * i;
            *s = MetricStat {
                mean: parse_field(&rec, base)?,
                sd: parse_field(&rec, base + 1)?,
                ci95: parse_field(&rec, base + 2)?,
            };
        }
        out.push(AggregateRow {
            day: parse_field(&rec, 0)?,
            treatment: rec[1].parse()?,
            runs: parse_field(&rec, 2)?,
            stats,
        });
    }
    Ok(out)
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<(), HarnessError> {
    if found.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::Table(format!("unexpected header {:?}", found.iter().collect::<Vec<_>>())));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, HarnessError> {
    let raw = rec.get(i).ok_or_else(|| HarnessError::Table(format!("missing column {i}")))?;
    raw.parse().map_err(|_| HarnessError::Table(format!("cannot parse {raw:?} in column {i}")))
}

/// Figure 1 series: best-plex fitness of memomes and genomes.
pub const FITNESS_SERIES: [(&str, &str); 2] =
    [("meme_fitness", "mean_best_meme_fitness"), ("gene_fitness", "mean_best_gene_fitness")];

/// Figure 2 series: non-gathering action counts in memomes and genomes.
pub const ACTION_SERIES: [(&str, &str); 6] = [
    ("meme_reproduce", "meme_reproduce"),
    ("meme_learn_ind", "meme_learn_ind"),
    ("meme_learn_soc", "meme_learn_soc"),
    ("gene_reproduce", "gene_reproduce"),
    ("gene_learn_ind", "gene_learn_ind"),
    ("gene_learn_soc", "gene_learn_soc"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub day: u32,
    pub treatment: Treatment,
    pub series: &'static str,
    pub mean: f64,
    pub ci: f64,
}

/// Long-format rows for one figure, grouped by treatment then series.
pub fn plot_rows(aggregates: &[AggregateRow], series: &[(&'static str, &'static str)]) -> Vec<PlotRow> {
    let mut treatments: Vec<Treatment> = aggregates.iter().map(|r| r.treatment).collect();
    treatments.sort();
    treatments.dedup();
    let mut out = Vec::new();
    for t in treatments {
        for &(name, metric) in series {
            for row in aggregates.iter().filter(|r| r.treatment == t) {
                let s = row.stat(metric).expect("known metric");
                out.push(PlotRow { day: row.day, treatment: t, series: name, mean: s.mean, ci: s.ci95 });
            }
        }
    }
    out
}

pub fn write_plot_rows(w: &mut dyn Write, rows: &[PlotRow]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["day", "treatment", "series", "mean", "ci"])?;
    for r in rows {
        out.write_record([r.day.to_string(), r.treatment.to_string(), r.series.to_string(), fmt6(r.mean), fmt6(r.ci)])?;
    }
    out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub const FIGURE1_FILE: &str = "figure1_fitness.csv";
pub const FIGURE2_FILE: &str = "figure2_actions.csv";

/// Writes the two long-format figure tables into `out_dir`.
pub fn emit_plot_data(aggregates: &[AggregateRow], out_dir: &Path) -> Result<[PathBuf; 2], HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let f1 = out_dir.join(FIGURE1_FILE);
    let f2 = out_dir.join(FIGURE2_FILE);
    write_file(&f1, |w| write_plot_rows(w, &plot_rows(aggregates, &FITNESS_SERIES)))?;
    write_file(&f2, |w| write_plot_rows(w, &plot_rows(aggregates, &ACTION_SERIES)))?;
    Ok([f1, f2])
}

/// Reads aggregate tables from a single CSV file or every `aggregate_*.csv`
/// in a directory.
pub fn load_aggregates(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let open = |p: &Path| fs::File::open(p).map_err(|e| HarnessError::io(p, e));
    if path.is_file() {
        return read_aggregate_table(open(path)?);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| HarnessError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("aggregate_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_aggregate_table(open(&f)?)?);
    }
    Ok(rows)
}

/// Re-aggregates run records from `in_dir`, writing one table per treatment.
pub fn aggregate_dir(in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let records = load_records(in_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (t, rows) in aggregate_by_treatment(&records)? {
        let path = out_dir.join(aggregate_file_name(t));
        write_file(&path, |w| write_aggregate_table(w, &rows))?;
        written.push(path);
    }
    Ok(written)
}
