use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{best_and_equivalents, informedness, ConfusionMatrix, Ranking};
use crate::feasibility::{Label, MultiSurrogate};
use crate::harness::CampaignConfig;
use crate::problems::{true_feasible, ProblemId, ProblemSpec};
use crate::sampling::{derive_seed, uniform_random, SamplePlan};
use crate::search::{run_search, Method, SearchConfig};

pub const MANIFEST: &str = "manifest.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const TRACES: &str = "traces";
pub const RUNS: &str = "runs";
pub const MODELS: &str = "models";

/// Identifies one run of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub problem: ProblemId,
    pub method: Method,
    pub rep: usize,
}

impl RunKey {
    pub fn stem(&self) -> String {
        format!("{}_{}_rep{:03}", self.problem, self.method, self.rep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub key: RunKey,
    pub aborted: Option<String>,
    pub evaluations: usize,
    pub confusion: Option<ConfusionMatrix>,
    /// `None` for aborted runs and when the score is undefined.
    pub informedness: Option<f64>,
    pub elapsed_seconds: f64,
}

impl RunRecord {
    pub fn score(&self) -> f64 {
        match (&self.aborted, self.informedness) {
            (None, Some(v)) => v,
            _ => f64::NAN,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

/// Paths of a campaign's artifacts.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join(SUMMARY)
    }

    pub fn trace(&self, key: &RunKey) -> PathBuf {
        self.root.join(TRACES).join(format!("{}.csv", key.stem()))
    }

    pub fn run(&self, key: &RunKey) -> PathBuf {
        self.root.join(RUNS).join(format!("{}.json", key.stem()))
    }

    pub fn model(&self, key: &RunKey) -> PathBuf {
        self.root.join(MODELS).join(format!("{}.json", key.stem()))
    }

    fn create(&self) -> Result<()> {
        for sub in [TRACES, RUNS, MODELS] {
            let dir = self.root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }

    /// Keys listed in the manifest whose run record is present.
    pub fn completed(&self) -> Result<HashSet<RunKey>> {
        let path = self.manifest();
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashSet::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let mut done = HashSet::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            // A torn final line from an interrupted write is ignored.
            if let Ok(key) = serde_json::from_str::<RunKey>(&line) {
                if self.run(&key).is_file() {
                    done.insert(key);
                }
            }
        }
        Ok(done)
    }

    /// All run records in the `runs` directory.
    pub fn records(&self) -> Result<Vec<RunRecord>> {
        let dir = self.root.join(RUNS);
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut records = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                records.push(RunRecord::load(&path)?);
            }
        }
        records.sort_by_key(|r| r.key);
        Ok(records)
    }
}

/// What a campaign did.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub executed: usize,
    pub skipped: usize,
    pub aborted: usize,
    pub summary: Vec<SummaryRow>,
}

pub fn search_config(cfg: &CampaignConfig, key: &RunKey) -> SearchConfig {
    let n = key.problem.spec().dimension();
    let budget = cfg.budget_multiplier * n;
    let mut sc = SearchConfig::new(key.problem, key.method, key.rep, cfg.master_seed);
    let init = match key.method {
        Method::LhsOnly => budget,
        Method::Acquisition(_) => n.max(2).min(budget),
    };
    sc = sc.with_samples(init, budget.max(init));
    sc.acq_eval_multiplier = cfg.acq_eval_multiplier;
    sc.pbe_entropy_floor = cfg.pbe_entropy_floor;
    sc.pbe_entropy_scale = cfg.pbe_entropy_scale;
    sc
}

/// Validation points for one (problem, repetition), shared by every method.
pub fn validation_set(
    spec: &ProblemSpec,
    rep: usize,
    samples: usize,
    master_seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
    let seed = derive_seed(master_seed, &[spec.id.name(), &rep.to_string(), "validation"]);
    let points = uniform_random(&SamplePlan::new(samples, spec.bounds.clone(), seed)?);
    let labels = points
        .iter()
        .map(|x| true_feasible(spec, x))
        .collect::<Result<Vec<_>>>()?;
    Ok((points, labels))
}

pub fn score(surr: &MultiSurrogate, points: &[Vec<f64>], truth: &[Label]) -> Result<ConfusionMatrix> {
    let predicted = points
        .iter()
        .map(|x| surr.classify(x))
        .collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_labels(&predicted, truth)
}

fn execute(cfg: &CampaignConfig, layout: &Layout, key: &RunKey) -> Result<RunRecord> {
    let started = Instant::now();
    let sc = search_config(cfg, key);
    let run = run_search(&sc)?;
    run.trace.save(layout.trace(key))?;
    let mut record = RunRecord {
        key: *key,
        aborted: run.aborted.clone(),
        evaluations: run.evaluations,
        confusion: None,
        informedness: None,
        elapsed_seconds: 0.0,
    };
    if let Some(surr) = &run.surrogate {
        surr.save(layout.model(key))?;
        let spec = key.problem.spec();
        let (points, truth) = validation_set(&spec, key.rep, cfg.validation_samples, cfg.master_seed)?;
        let cm = score(surr, &points, &truth)?;
        let inf = informedness(&cm);
        if inf.is_nan() {
            log::warn!("{}: informedness undefined for {cm:?}", key.stem());
        }
        record.confusion = Some(cm);
        record.informedness = Some(inf).filter(|v| !v.is_nan());
    }
    record.elapsed_seconds = started.elapsed().as_secs_f64();
    let path = layout.run(key);
    let json = serde_json::to_string_pretty(&record).expect("run record serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(record)
}

/// Runs every (problem, method, rep) not yet in the manifest, then writes the
/// summary over all runs the configuration covers.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    layout.create()?;
    let done = layout.completed()?;
    let keys: Vec<RunKey> = cfg
        .problems
        .iter()
        .flat_map(|&problem| {
            (0..cfg.reps).flat_map(move |rep| {
                cfg.methods.iter().map(move |&method| RunKey {
                    problem,
                    method,
                    rep,
                })
            })
        })
        .collect();
    let pending: Vec<RunKey> = keys.iter().filter(|k| !done.contains(k)).copied().collect();
    let skipped = keys.len() - pending.len();

    let manifest_path = layout.manifest();
    let manifest = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&manifest_path)
        .map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = Mutex::new(manifest);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::input(format!("worker pool: {e}")))?;

    let outcomes: Vec<Result<RunRecord>> = pool.install(|| {
        pending
            .par_iter()
            .map(|key| {
                let record = execute(cfg, &layout, key);
                match &record {
                    Ok(r) => {
                        log::info!(
                            "{} informedness {:?} in {:.1}s",
                            key.stem(),
                            r.informedness,
                            r.elapsed_seconds
                        );
                        let line = serde_json::to_string(key).expect("key serializes");
                        let mut file = manifest.lock().expect("manifest lock");
                        writeln!(file, "{line}")
                            .and_then(|_| file.flush())
                            .map_err(|e| Error::io(&manifest_path, e))?;
                    }
                    Err(e) => log::error!("{} failed: {e}", key.stem()),
                }
                record
            })
            .collect()
    });
    let mut aborted = 0;
    for outcome in outcomes.iter() {
        match outcome {
            Ok(r) if r.aborted.is_some() => aborted += 1,
            Ok(_) => {}
            Err(e) => return Err(Error::numerical(format!("campaign stopped: {e}"))),
        }
    }

    let wanted: HashSet<RunKey> = keys.iter().copied().collect();
    let records: Vec<RunRecord> = layout
        .records()?
        .into_iter()
        .filter(|r| wanted.contains(&r.key))
        .collect();
    let summary = summarize(&records, &cfg.problems, &cfg.methods, cfg.reps)?;
    write_summary(&layout.summary(), &summary)?;
    Ok(CampaignReport {
        executed: pending.len(),
        skipped,
        aborted,
        summary,
    })
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem: ProblemId,
    pub method: Method,
    pub median_informedness: Option<f64>,
    pub mad: Option<f64>,
    pub n_runs: usize,
    pub n_aborted: usize,
    pub p_vs_best: Option<f64>,
    pub equivalent_to_best: bool,
}

/// Per-repetition scores (NaN where missing) for one problem.
pub fn scores_by_method(
    records: &[RunRecord],
    problem: ProblemId,
    methods: &[Method],
    reps: usize,
) -> Vec<(Method, Vec<f64>)> {
    methods
        .iter()
        .map(|&m| {
            let mut v = vec![f64::NAN; reps];
            for r in records.iter().filter(|r| r.key.problem == problem && r.key.method == m) {
                if r.key.rep < reps {
                    v[r.key.rep] = r.score();
                }
            }
            (m, v)
        })
        .collect()
}

pub fn rank_problem(
    records: &[RunRecord],
    problem: ProblemId,
    methods: &[Method],
    reps: usize,
) -> Result<Option<Ranking>> {
    let scores = scores_by_method(records, problem, methods, reps);
    if scores.iter().all(|(_, v)| v.iter().all(|x| x.is_nan())) {
        return Ok(None);
    }
    best_and_equivalents(&scores, 0.05).map(Some)
}

pub fn summarize(
    records: &[RunRecord],
    problems: &[ProblemId],
    methods: &[Method],
    reps: usize,
) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for &problem in problems {
        let ranking = rank_problem(records, problem, methods, reps)?;
        let mut aborted: BTreeMap<Method, usize> = BTreeMap::new();
        for r in records.iter().filter(|r| r.key.problem == problem && r.aborted.is_some()) {
            *aborted.entry(r.key.method).or_default() += 1;
        }
        for &method in methods {
            let row = ranking.as_ref().and_then(|rk| rk.row(method));
            rows.push(SummaryRow {
                problem,
                method,
                median_informedness: row.map(|r| r.median).filter(|v| !v.is_nan()),
                mad: row.map(|r| r.mad).filter(|v| !v.is_nan()),
                n_runs: row.map_or(0, |r| r.n_valid),
                n_aborted: aborted.get(&method).copied().unwrap_or(0),
                p_vs_best: row.and_then(|r| r.test).map(|t| t.p_value),
                equivalent_to_best: row.is_some_and(|r| r.equivalent_to_best()),
            });
        }
    }
    Ok(rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e)))
        .collect()
}
