//! Executes an [`ExperimentConfig`]: every scenario point × seed becomes one
//! audit job writing into `points/<point>/seed_<s>/`. A failing job leaves an
//! `error.json` and the run carries on.
//!
//! Every file written is appended to `manifest.jsonl` together with its
//! SHA-256 and the hash of the resolved config.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use memaudit_core::audit::{run_audit, AuditOutcome};
use memaudit_core::data::Dataset;
use memaudit_core::report::{Clock, F1Loss, GroupMetrics};
use memaudit_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::csvio::{export_attack_records, export_pca, load_csv};
use crate::error::{io_err, parse_err, Error, Result};
use crate::modelio::{save_model, ModelFile};

pub const MANIFEST: &str = "manifest.jsonl";
pub const RECORD: &str = "record.json";
pub const ERROR: &str = "error.json";

/// Stream tag for synthetic data drawn per seed.
const DATA_STREAM: u64 = 0xda7a;

/// Wall clock for attack timing; reads seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub attack_wall_time: f64,
    pub setup_seconds: f64,
    pub job_seconds: f64,
}

/// Contents of `record.json`. Everything outside `timing` is a pure function
/// of the config and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub point: String,
    pub seed: u64,
    pub job_seed: u64,
    pub outcome: AuditOutcome,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub point: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub enum JobStatus {
    Ok(Box<JobRecord>),
    Failed(JobError),
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub jobs: Vec<JobStatus>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.jobs.iter().filter(|j| matches!(j, JobStatus::Failed(_))).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ManifestEntry {
    Run {
        name: String,
        config_hash: String,
        master_seed: u64,
        seeds: Vec<u64>,
        points: Vec<String>,
    },
    Artifact {
        path: String,
        sha256: String,
        config_hash: String,
    },
}

/// Serialized writer: artifacts from parallel jobs are appended one line at
/// a time.
pub(crate) struct Manifest {
    root: PathBuf,
    config_hash: String,
    file: Mutex<File>,
}

impl Manifest {
    fn create(root: &Path, config_hash: String, header: &ManifestEntry) -> Result<Self> {
        let path = root.join(MANIFEST);
        let file = File::create(&path).map_err(io_err(&path))?;
        let m = Self {
            root: root.to_path_buf(),
            config_hash,
            file: Mutex::new(file),
        };
        m.append(header)?;
        Ok(m)
    }

    /// Reopens an existing manifest for appending; the config hash is taken
    /// from its run header.
    pub(crate) fn reopen(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let first = text.lines().next().unwrap_or_default();
        let config_hash = match serde_json::from_str(first) {
            Ok(ManifestEntry::Run { config_hash, .. }) => config_hash,
            _ => return Err(parse_err(&path, "first line is not a run header")),
        };
        let file = fs::OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self {
            root: root.to_path_buf(),
            config_hash,
            file: Mutex::new(file),
        })
    }

    fn append(&self, entry: &ManifestEntry) -> Result<()> {
        let line = serde_json::to_string(entry).expect("manifest entry serializes");
        let path = self.root.join(MANIFEST);
        let mut f = self.file.lock().expect("manifest lock");
        writeln!(f, "{line}").map_err(io_err(&path))
    }

    /// Records a file that has just been written.
    fn add(&self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.append(&ManifestEntry::Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hex(&Sha256::digest(&bytes)),
            config_hash: self.config_hash.clone(),
        })
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, bytes).map_err(io_err(path))?;
        self.add(path)
    }

    fn write_json(&self, path: &Path, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("record serializes");
        text.push('\n');
        self.write(path, text.as_bytes())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex(&Sha256::digest(cfg.canonical_json().as_bytes()))
}

/// Seed of job `seed` under the config's master seed.
pub fn job_seed(cfg: &ExperimentConfig, seed: u64) -> u64 {
    derive_seed(cfg.master_seed, seed)
}

/// The dataset a job runs on. CSV data is shared by all seeds; synthetic data
/// is drawn per job seed.
pub fn job_data(cfg: &ExperimentConfig, csv: Option<&Dataset>, job_seed: u64) -> Result<Dataset> {
    match (&cfg.dataset.synth, csv) {
        (Some(s), _) => Ok(s.generate(derive_seed(job_seed, DATA_STREAM))?),
        (None, Some(d)) => Ok(d.clone()),
        (None, None) => Err(Error::InvalidConfig(vec!["dataset: exactly one of csv or synth is required".into()])),
    }
}

pub fn point_dir(out: &Path, point: &str, seed: u64) -> PathBuf {
    out.join("points").join(point).join(format!("seed_{seed}"))
}

/// Validates, then runs every job on a pool of `parallel` threads (0 picks
/// the rayon default).
pub fn run(cfg: &ExperimentConfig, parallel: usize) -> Result<RunSummary> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let hash = config_hash(cfg);
    let points = cfg.points();
    let manifest = Manifest::create(
        &out,
        hash.clone(),
        &ManifestEntry::Run {
            name: cfg.name.clone(),
            config_hash: hash.clone(),
            master_seed: cfg.master_seed,
            seeds: cfg.seeds.clone(),
            points: points.iter().map(|p| p.id.clone()).collect(),
        },
    )?;
    manifest.write_json(&out.join("config.json"), cfg)?;

    let csv = match &cfg.dataset.csv {
        Some(src) => Some(load_csv(src)?),
        None => None,
    };
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| parse_err(&out, format!("thread pool: {e}")))?;
    let results: Vec<Result<JobStatus>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, seed)| {
                let point = &points[p];
                let dir = point_dir(&out, &point.id, seed);
                match run_job(cfg, csv.as_ref(), &point.id, &point.plan, seed, &dir, &manifest) {
                    Ok(rec) => Ok(JobStatus::Ok(Box::new(rec))),
                    Err(e) => {
                        let err = JobError {
                            point: point.id.clone(),
                            seed,
                            error: e.to_string(),
                        };
                        manifest.write_json(&dir.join(ERROR), &err)?;
                        Ok(JobStatus::Failed(err))
                    }
                }
            })
            .collect()
    });
    let jobs = results.into_iter().collect::<Result<Vec<_>>>()?;
    write_tables(&out, &jobs, &manifest)?;
    Ok(RunSummary {
        out_dir: out,
        config_hash: hash,
        jobs,
    })
}

fn run_job(
    cfg: &ExperimentConfig,
    csv: Option<&Dataset>,
    point: &str,
    plan: &memaudit_core::audit::AuditPlan,
    seed: u64,
    dir: &Path,
    manifest: &Manifest,
) -> Result<JobRecord> {
    let start = Instant::now();
    let js = job_seed(cfg, seed);
    let data = job_data(cfg, csv, js)?;
    let mut outcome = run_audit(plan, &data, js, &StdClock::new())?;

    if let Some(view) = outcome.view.take() {
        let p = dir.join("pca.csv");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        export_pca(&view, &p)?;
        manifest.add(&p)?;
    }
    if let Some(records) = outcome.attack_records.take() {
        let p = dir.join("attack_records.csv");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        export_attack_records(&records, &p)?;
        manifest.add(&p)?;
    }
    if let Some(model) = outcome.target_model.take() {
        let p = dir.join("target_model.json");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let accounting = outcome.dp.as_ref().and_then(|d| d.accounting.clone());
        save_model(&ModelFile::new(model, accounting), &p)?;
        manifest.add(&p)?;
    }

    let mut timing = Timing {
        attack_wall_time: outcome.report.attack_wall_time,
        setup_seconds: outcome.setup_seconds,
        job_seconds: 0.0,
    };
    outcome.report.attack_wall_time = 0.0;
    outcome.setup_seconds = 0.0;
    timing.job_seconds = start.elapsed().as_secs_f64();
    let record = JobRecord {
        point: point.to_string(),
        seed,
        job_seed: js,
        outcome,
        timing,
    };
    manifest.write_json(&dir.join(RECORD), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub point: String,
    pub seed: u64,
    pub status: String,
    pub attack_accuracy: Option<f64>,
    pub attack_precision: Option<f64>,
    pub attack_recall: Option<f64>,
    pub attack_f1: Option<f64>,
    pub target_train_accuracy: Option<f64>,
    pub target_test_accuracy: Option<f64>,
    pub accuracy_difference: Option<f64>,
    pub epsilon: Option<f64>,
    pub utility_loss: Option<f64>,
    pub substitute_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub point: String,
    pub seed: u64,
    pub group: String,
    pub support: usize,
    pub members: usize,
    pub non_members: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1LossRow {
    pub point: String,
    pub seed: u64,
    pub class: usize,
    /// Empty when the loss is undefined (zero F1 on both models).
    pub f1_loss: Option<f64>,
    pub epsilon: Option<f64>,
}

impl AggregateRow {
    fn new(job: &JobStatus) -> Self {
        match job {
            JobStatus::Failed(e) => Self {
                point: e.point.clone(),
                seed: e.seed,
                status: "failed".into(),
                attack_accuracy: None,
                attack_precision: None,
                attack_recall: None,
                attack_f1: None,
                target_train_accuracy: None,
                target_test_accuracy: None,
                accuracy_difference: None,
                epsilon: None,
                utility_loss: None,
                substitute_agreement: None,
            },
            JobStatus::Ok(r) => {
                let o = &r.outcome;
                let m = &o.report.aggregate;
                Self {
                    point: r.point.clone(),
                    seed: r.seed,
                    status: "ok".into(),
                    attack_accuracy: Some(m.accuracy),
                    attack_precision: Some(m.precision),
                    attack_recall: Some(m.recall),
                    attack_f1: Some(m.f1),
                    target_train_accuracy: Some(o.target_train_accuracy),
                    target_test_accuracy: Some(o.target_test_accuracy),
                    accuracy_difference: Some(o.target_train_accuracy - o.target_test_accuracy),
                    epsilon: o.dp.as_ref().and_then(|d| d.accounting.as_ref()).map(|a| a.epsilon),
                    utility_loss: o.dp.as_ref().map(|d| d.utility.overall_accuracy_loss),
                    substitute_agreement: o.substitute_agreement,
                }
            }
        }
    }
}

fn group_row(r: &JobRecord, group: String, g: &GroupMetrics) -> GroupRow {
    GroupRow {
        point: r.point.clone(),
        seed: r.seed,
        group,
        support: g.support,
        members: g.members,
        non_members: g.non_members,
        accuracy: g.metrics.accuracy,
        precision: g.metrics.precision,
        recall: g.metrics.recall,
        f1: g.metrics.f1,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| parse_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Cross-job tables at the top of the output directory.
pub(crate) fn write_tables(out: &Path, jobs: &[JobStatus], manifest: &Manifest) -> Result<()> {
    let aggregate: Vec<AggregateRow> = jobs.iter().map(AggregateRow::new).collect();
    let mut per_class = Vec::new();
    let mut subgroups = Vec::new();
    let mut f1 = Vec::new();
    for job in jobs {
        let JobStatus::Ok(r) = job else { continue };
        for (c, g) in &r.outcome.report.per_class {
            per_class.push(group_row(r, c.to_string(), g));
        }
        for (name, g) in &r.outcome.report.subgroups {
            subgroups.push(group_row(r, name.clone(), g));
        }
        if let Some(dp) = &r.outcome.dp {
            for (&class, loss) in &dp.utility.per_class_f1_loss {
                f1.push(F1LossRow {
                    point: r.point.clone(),
                    seed: r.seed,
                    class,
                    f1_loss: match loss {
                        F1Loss::Value(v) => Some(*v),
                        F1Loss::Undefined => None,
                    },
                    epsilon: dp.utility.epsilon,
                });
            }
        }
    }
    let group_header = [
        "point", "seed", "group", "support", "members", "non_members", "accuracy", "precision", "recall", "f1",
    ];
    let table = |name: &str, written: Result<()>| -> Result<()> {
        written?;
        manifest.add(&out.join(name))
    };
    table("aggregate.csv", write_csv(&out.join("aggregate.csv"), &aggregate, &["point", "seed", "status"]))?;
    table("per_class.csv", write_csv(&out.join("per_class.csv"), &per_class, &group_header))?;
    table("subgroups.csv", write_csv(&out.join("subgroups.csv"), &subgroups, &group_header))?;
    let f1_header = ["point", "seed", "class", "f1_loss", "epsilon"];
    table("dp_f1_loss.csv", write_csv(&out.join("dp_f1_loss.csv"), &f1, &f1_header))?;
    Ok(())
}

/// Reads every `record.json` and `error.json` under `out`, in point/seed order.
pub fn load_records(out: &Path) -> Result<Vec<JobStatus>> {
    let mut jobs = Vec::new();
    let points = out.join("points");
    let mut dirs: Vec<PathBuf> = Vec::new();
    for p in fs::read_dir(&points).map_err(io_err(&points))? {
        let p = p.map_err(io_err(&points))?.path();
        for s in fs::read_dir(&p).map_err(io_err(&p))? {
            dirs.push(s.map_err(io_err(&p))?.path());
        }
    }
    dirs.sort();
    for d in dirs {
        let rec = d.join(RECORD);
        let err = d.join(ERROR);
        if rec.is_file() {
            let text = fs::read_to_string(&rec).map_err(io_err(&rec))?;
            let r: JobRecord = serde_json::from_str(&text).map_err(|e| parse_err(&rec, e))?;
            jobs.push(JobStatus::Ok(Box::new(r)));
        } else if err.is_file() {
            let text = fs::read_to_string(&err).map_err(io_err(&err))?;
            let e: JobError = serde_json::from_str(&text).map_err(|e| parse_err(&err, e))?;
            jobs.push(JobStatus::Failed(e));
        }
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(out: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
name = "t"
seeds = [0, 1]
output_dir = "{}"
[dataset.synth]
kind = "blobs"
classes = 3
per_class = 120
features = 4
spread = 0.3
[target.split]
target_train_fraction = 0.4
eval_in_count = 60
eval_out_count = 60
[scenario]
kind = "skew_sweep"
target_class = 0
fractions = [0.2, 0.9]
[outputs]
pca = true
"#,
            out.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn failing_points_do_not_stop_the_run() {
        let tmp = tempfile::tempdir().unwrap();
        let summary = run(&config(tmp.path()), 2).unwrap();
        assert_eq!(summary.jobs.len(), 4);
        // A 0.9 share of one class cannot be reached by downsampling it.
        assert_eq!(summary.failures(), 2);
        assert!(point_dir(tmp.path(), "skew_0.9", 1).join(ERROR).is_file());
        assert!(point_dir(tmp.path(), "skew_0.2", 0).join(RECORD).is_file());
        assert!(point_dir(tmp.path(), "skew_0.2", 0).join("pca.csv").is_file());
        let text = fs::read_to_string(tmp.path().join("aggregate.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn manifest_lists_every_file() {
        let tmp = tempfile::tempdir().unwrap();
        run(&config(tmp.path()), 1).unwrap();
        let listed: Vec<String> = fs::read_to_string(tmp.path().join(MANIFEST))
            .unwrap()
            .lines()
            .filter_map(|l| match serde_json::from_str(l).unwrap() {
                ManifestEntry::Artifact { path, .. } => Some(path),
                ManifestEntry::Run { .. } => None,
            })
            .collect();
        let mut on_disk = Vec::new();
        let mut stack = vec![tmp.path().to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if !p.ends_with(MANIFEST) {
                    on_disk.push(p.strip_prefix(tmp.path()).unwrap().to_string_lossy().replace('\\', "/"));
                }
            }
        }
        let mut sorted = listed.clone();
        sorted.sort();
        on_disk.sort();
        assert_eq!(sorted, on_disk);
    }

    #[test]
    fn records_round_trip_from_disk() {
        let tmp = tempfile::tempdir().unwrap();
        let summary = run(&config(tmp.path()), 1).unwrap();
        let loaded = load_records(tmp.path()).unwrap();
        assert_eq!(loaded.len(), summary.jobs.len());
        let ok = loaded.iter().filter(|j| matches!(j, JobStatus::Ok(_))).count();
        assert_eq!(ok, 2);
    }
}
