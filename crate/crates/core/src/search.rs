//! Sequential Bayesian search for the feasible region.
//!
//! A run draws a Latin hypercube of `M` points, then repeats
//! fit → maximize acquisition → evaluate → augment until `T` expensive
//! evaluations have been spent, and finally fits the surrogate on all `T`
//! points.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{Acquisition, AcquisitionKind, EntropyScale};
use crate::error::{Error, Result};
use crate::feasibility::MultiSurrogate;
use crate::gp::{Dataset, FitConfig};
use crate::optimizer::{maximize, OptimizerConfig};
use crate::problems::{evaluate_constraints, EvaluationLedger, ProblemId, ProblemSpec};
use crate::sampling::{derive_seed, latin_hypercube, SamplePlan};
use crate::Bounds;

/// Normalized distance under which a candidate counts as a duplicate.
pub const DUPLICATE_TOLERANCE: f64 = 1e-8;
/// Half-width of the normalized perturbation applied to duplicates.
pub const DUPLICATE_PERTURBATION: f64 = 1e-6;
/// Jitter ceiling used when a fit fails with the configured ceiling.
pub const RETRY_JITTER_MAX: f64 = 1e-2;

/// A model-based acquisition or the space-filling baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    LhsOnly,
    Acquisition(AcquisitionKind),
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::LhsOnly,
        Method::Acquisition(AcquisitionKind::Knudde),
        Method::Acquisition(AcquisitionKind::Tmse),
        Method::Acquisition(AcquisitionKind::Bichon),
        Method::Acquisition(AcquisitionKind::Ranjan),
        Method::Acquisition(AcquisitionKind::Echard),
        Method::Acquisition(AcquisitionKind::Pbe),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LhsOnly => "lhs-only",
            Method::Acquisition(kind) => kind.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lhs-only" | "lhs" => Ok(Method::LhsOnly),
            other => other.parse().map(Method::Acquisition),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub problem: ProblemId,
    pub method: Method,
    /// Initial Latin hypercube size `M`.
    pub init_samples: usize,
    /// Total expensive evaluations `T`, initial design included.
    pub budget: usize,
    /// Acquisition evaluations per optimizer call, per dimension.
    pub acq_eval_multiplier: usize,
    pub rep_index: usize,
    pub master_seed: u64,
    pub fit: FitConfig,
    #[serde(default)]
    pub pbe_entropy_floor: Option<f64>,
    #[serde(default)]
    pub pbe_entropy_scale: EntropyScale,
}

impl SearchConfig {
    /// `M = n` (at least 2), `T = 11n`, `5000n` acquisition evaluations.
    pub fn new(problem: ProblemId, method: Method, rep_index: usize, master_seed: u64) -> Self {
        let n = problem.spec().dimension();
        let budget = 11 * n;
        let init_samples = match method {
            Method::LhsOnly => budget,
            Method::Acquisition(_) => n.max(2),
        };
        SearchConfig {
            problem,
            method,
            init_samples,
            budget,
            acq_eval_multiplier: 5000,
            rep_index,
            master_seed,
            fit: FitConfig::default(),
            pbe_entropy_floor: None,
            pbe_entropy_scale: EntropyScale::default(),
        }
    }

    pub fn with_samples(mut self, init_samples: usize, budget: usize) -> Self {
        self.init_samples = init_samples;
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_samples < 2 {
            return Err(Error::input("the initial design needs at least 2 points"));
        }
        if self.budget < self.init_samples {
            return Err(Error::input(format!(
                "budget {} is smaller than the initial design {}",
                self.budget, self.init_samples
            )));
        }
        if self.method == Method::LhsOnly && self.budget != self.init_samples {
            return Err(Error::input("the lhs-only baseline spends its whole budget on the design"));
        }
        if self.acq_eval_multiplier == 0 {
            return Err(Error::input("acquisition evaluation multiplier must be at least 1"));
        }
        Ok(())
    }

    pub fn acquisition(&self) -> Option<Acquisition> {
        match self.method {
            Method::LhsOnly => None,
            Method::Acquisition(kind) => {
                let mut acq = Acquisition::new(kind);
                acq.config.pbe_entropy_floor = self.pbe_entropy_floor;
                acq.config.pbe_entropy_scale = self.pbe_entropy_scale;
                Some(acq)
            }
        }
    }

    fn labels(&self) -> [String; 2] {
        [self.problem.name().to_string(), self.rep_index.to_string()]
    }

    /// Seed of the initial design. Shared by every model-based method on the
    /// same (problem, repetition); the baseline draws its own.
    pub fn init_seed(&self) -> u64 {
        let [p, r] = self.labels();
        let purpose = match self.method {
            Method::LhsOnly => "lhs-baseline",
            Method::Acquisition(_) => "init",
        };
        derive_seed(self.master_seed, &[&p, &r, purpose])
    }

    fn stream_seed(&self, purpose: &str, iter: usize) -> u64 {
        let [p, r] = self.labels();
        derive_seed(
            self.master_seed,
            &[&p, &r, self.method.name(), purpose, &iter.to_string()],
        )
    }

    /// Seed of the hyperparameter fit that precedes evaluation number `iter`.
    pub fn fit_seed(&self, iter: usize) -> u64 {
        self.stream_seed("fit", iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Seq,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Seq => "seq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    /// Utility at `x` under the model that proposed it; `None` for the design.
    pub acq_value: Option<f64>,
    /// Seconds since the run started. Not persisted.
    pub wallclock: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dataset(&self, upto: usize) -> Result<Dataset> {
        let rows = &self.rows[..upto];
        Dataset::from_rows(
            rows.iter().map(|r| r.x.clone()).collect(),
            rows.iter().map(|r| r.g.clone()).collect(),
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_csv(&mut out, Path::new("<memory>"))?;
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, path)
    }

    fn write_csv<W: std::io::Write>(&self, w: W, path: &Path) -> Result<()> {
        let (n, l) = match self.rows.first() {
            Some(r) => (r.x.len(), r.g.len()),
            None => (0, 0),
        };
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec!["iter".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..l).map(|i| format!("g_{i}")));
        header.push("acq_value".into());
        header.push("phase".into());
        let fail = |e: csv::Error| Error::format(path, e);
        writer.write_record(&header).map_err(fail)?;
        for row in &self.rows {
            let mut rec = vec![row.iter.to_string()];
            rec.extend(row.x.iter().map(f64::to_string));
            rec.extend(row.g.iter().map(f64::to_string));
            rec.push(row.acq_value.map(|v| v.to_string()).unwrap_or_default());
            rec.push(row.phase.as_str().into());
            writer.write_record(&rec).map_err(fail)?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes(), Path::new("<memory>"))
    }

    fn read_csv<R: std::io::Read>(r: R, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(path, reason);
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let n = header.iter().filter(|h| h.starts_with("x_")).count();
        let l = header.iter().filter(|h| h.starts_with("g_")).count();
        if header.len() != n + l + 3 || header.get(0) != Some("iter") {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let iter = rec[0].parse().map_err(|e| bad(format!("iter: {e}")))?;
            let x = (1..=n).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
            let g = (n + 1..=n + l).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
            let acq = &rec[n + l + 1];
            let acq_value = if acq.is_empty() { None } else { Some(num(acq)?) };
            let phase = match &rec[n + l + 2] {
                "init" => Phase::Init,
                "seq" => Phase::Seq,
                other => return Err(bad(format!("unknown phase {other:?}"))),
            };
            rows.push(TraceRow {
                iter,
                x,
                g,
                acq_value,
                wallclock: 0.0,
                phase,
            });
        }
        Ok(RunTrace { rows })
    }
}

/// Result of one search run. An aborted run keeps its partial trace.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub trace: RunTrace,
    pub surrogate: Option<MultiSurrogate>,
    pub aborted: Option<String>,
    pub evaluations: usize,
}

impl SearchResult {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }
}

/// Returns `candidate` unchanged unless it lies within `tolerance` (max norm,
/// unit-cube coordinates) of an existing point, in which case it is nudged by
/// uniform noise of half-width [`DUPLICATE_PERTURBATION`] until it is clear.
pub fn duplicate_guard<R: Rng>(
    candidate: &[f64],
    existing: &[Vec<f64>],
    bounds: &Bounds,
    tolerance: f64,
    rng: &mut R,
) -> Vec<f64> {
    let scaled: Vec<Vec<f64>> = existing.iter().map(|e| bounds.to_unit(e)).collect();
    let clashes = |u: &[f64]| {
        scaled.iter().any(|e| {
            e.iter()
                .zip(u)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                <= tolerance
        })
    };
    let start = bounds.to_unit(candidate);
    if !clashes(&start) {
        return candidate.to_vec();
    }
    let mut u = start.clone();
    for attempt in 0.. {
        // Grow the step if a point sits in a dense cluster.
        let width = DUPLICATE_PERTURBATION * f64::from(1 + attempt / 16);
        u = start
            .iter()
            .map(|s| (s + rng.random_range(-width..=width)).clamp(0.0, 1.0))
            .collect();
        if !clashes(&u) {
            break;
        }
    }
    bounds.from_unit(&u)
}

/// Fits all constraint models, retrying once with a higher jitter ceiling.
pub fn fit_surrogate(
    data: &Dataset,
    spec: &ProblemSpec,
    base: &FitConfig,
    seed: u64,
) -> Result<MultiSurrogate> {
    let config = FitConfig {
        seed,
        ..base.clone()
    };
    match MultiSurrogate::fit(data, &spec.bounds, spec.thresholds.clone(), &config) {
        Err(Error::Numerical(_)) if config.jitter_max < RETRY_JITTER_MAX => {
            let retry = FitConfig {
                jitter_max: RETRY_JITTER_MAX,
                ..config
            };
            MultiSurrogate::fit(data, &spec.bounds, spec.thresholds.clone(), &retry)
        }
        other => other,
    }
}

/// Runs one search. Configuration errors are returned as `Err`; failures
/// during the run produce an aborted [`SearchResult`].
pub fn run_search(config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    let spec = config.problem.spec();
    let started = Instant::now();
    let mut ledger = EvaluationLedger::with_cap(config.budget);
    let mut trace = RunTrace::default();
    let mut result = SearchResult {
        config: config.clone(),
        trace: RunTrace::default(),
        surrogate: None,
        aborted: None,
        evaluations: 0,
    };

    let plan = SamplePlan::new(config.init_samples, spec.bounds.clone(), config.init_seed())?;
    for x in latin_hypercube(&plan) {
        let g = match evaluate_constraints(&spec, &x, &mut ledger) {
            Ok(g) => g,
            Err(e) => return Ok(abort(result, trace, &ledger, e)),
        };
        trace.rows.push(TraceRow {
            iter: trace.len(),
            x,
            g,
            acq_value: None,
            wallclock: started.elapsed().as_secs_f64(),
            phase: Phase::Init,
        });
    }

    let acquisition = config.acquisition();
    while let Some(acq) = acquisition.filter(|_| trace.len() < config.budget) {
        let iter = trace.len();
        match propose(config, &spec, &acq, &trace, iter) {
            Ok((x, value)) => match evaluate_constraints(&spec, &x, &mut ledger) {
                Ok(g) => trace.rows.push(TraceRow {
                    iter,
                    x,
                    g,
                    acq_value: Some(value),
                    wallclock: started.elapsed().as_secs_f64(),
                    phase: Phase::Seq,
                }),
                Err(e) => return Ok(abort(result, trace, &ledger, e)),
            },
            Err(e) => return Ok(abort(result, trace, &ledger, e)),
        }
    }

    let final_fit = trace
        .dataset(trace.len())
        .and_then(|data| fit_surrogate(&data, &spec, &config.fit, config.fit_seed(trace.len())));
    match final_fit {
        Ok(surr) => {
            result.surrogate = Some(surr);
            result.evaluations = ledger.calls();
            result.trace = trace;
            Ok(result)
        }
        Err(e) => Ok(abort(result, trace, &ledger, e)),
    }
}

fn abort(
    mut result: SearchResult,
    trace: RunTrace,
    ledger: &EvaluationLedger,
    error: Error,
) -> SearchResult {
    log::warn!(
        "{} {} rep {} aborted after {} evaluations: {error}",
        result.config.problem,
        result.config.method,
        result.config.rep_index,
        ledger.calls()
    );
    result.aborted = Some(error.to_string());
    result.evaluations = ledger.calls();
    result.trace = trace;
    result
}

/// Fits on the first `iter` rows and returns the next point to evaluate
/// together with its utility.
fn propose(
    config: &SearchConfig,
    spec: &ProblemSpec,
    acq: &Acquisition,
    trace: &RunTrace,
    iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let data = trace.dataset(iter)?;
    let surr = fit_surrogate(&data, spec, &config.fit, config.fit_seed(iter))?;
    let opt = OptimizerConfig::new(spec.bounds.clone(), config.stream_seed("acq", iter))
        .with_max_evals(config.acq_eval_multiplier * spec.dimension());
    let best = maximize(|x| acq.objective(&surr, x), &opt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.stream_seed("guard", iter));
    let x = duplicate_guard(&best.x, data.inputs(), &spec.bounds, DUPLICATE_TOLERANCE, &mut rng);
    let value = acq.evaluate(&surr, &x)?;
    Ok((x, value))
}

/// Rebuilds the surrogate that proposed row `iter` of a trace.
pub fn replay_model(config: &SearchConfig, trace: &RunTrace, iter: usize) -> Result<MultiSurrogate> {
    if iter == 0 || iter > trace.len() {
        return Err(Error::input(format!(
            "iteration {iter} outside a trace of {} rows",
            trace.len()
        )));
    }
    let spec = config.problem.spec();
    fit_surrogate(&trace.dataset(iter)?, &spec, &config.fit, config.fit_seed(iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(problem: ProblemId, method: Method) -> SearchConfig {
        let mut cfg = SearchConfig::new(problem, method, 0, 11);
        cfg.acq_eval_multiplier = 200;
        cfg.fit.restarts = 3;
        cfg
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn distinct_candidate_is_unchanged() {
        let b = Bounds::new(vec![(0.0, 10.0); 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = duplicate_guard(&[1.0, 2.0], &[vec![1.0, 2.1]], &b, DUPLICATE_TOLERANCE, &mut rng);
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn duplicate_is_moved_inside_bounds() {
        let b = Bounds::new(vec![(0.0, 10.0); 2]).unwrap();
        let existing = vec![vec![0.0, 10.0], vec![3.0, 3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = duplicate_guard(&[0.0, 10.0], &existing, &b, DUPLICATE_TOLERANCE, &mut rng);
        assert_ne!(x, vec![0.0, 10.0]);
        assert!(b.contains(&x));
        // Idempotent once clear of the existing set.
        let again = duplicate_guard(&x, &existing, &b, DUPLICATE_TOLERANCE, &mut rng);
        assert_eq!(again, x);
    }

    #[test]
    fn perturbed_point_avoids_all_neighbours() {
        let b = Bounds::unit(1);
        let existing: Vec<Vec<f64>> = (0..5).map(|i| vec![0.5 + i as f64 * 5e-9]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = duplicate_guard(&[0.5], &existing, &b, DUPLICATE_TOLERANCE, &mut rng);
        assert!(existing.iter().all(|e| (e[0] - x[0]).abs() > DUPLICATE_TOLERANCE));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = quick(ProblemId::G24, Method::Acquisition(AcquisitionKind::Pbe));
        assert!(run_search(&cfg.clone().with_samples(5, 4)).is_err());
        assert!(run_search(&cfg.with_samples(1, 4)).is_err());
        let lhs = quick(ProblemId::G24, Method::LhsOnly).with_samples(4, 8);
        assert!(run_search(&lhs).is_err());
    }

    #[test]
    fn budget_equal_to_design_skips_sequential_phase() {
        let cfg = quick(ProblemId::G24, Method::Acquisition(AcquisitionKind::Pbe)).with_samples(6, 6);
        let run = run_search(&cfg).unwrap();
        assert!(run.is_complete());
        assert_eq!(run.evaluations, 6);
        assert!(run.trace.rows.iter().all(|r| r.phase == Phase::Init && r.acq_value.is_none()));
        let surr = run.surrogate.unwrap();
        assert_eq!(surr.models()[0].training_inputs().len(), 6);
    }

    #[test]
    fn sequential_run_spends_exact_budget_and_replays() {
        let cfg = quick(ProblemId::G24, Method::Acquisition(AcquisitionKind::Pbe)).with_samples(2, 6);
        let run = run_search(&cfg).unwrap();
        assert!(run.is_complete(), "{:?}", run.aborted);
        assert_eq!(run.evaluations, 6);
        assert_eq!(run.trace.len(), 6);
        assert_eq!(run.surrogate.as_ref().unwrap().models()[0].training_inputs().len(), 6);
        let acq = cfg.acquisition().unwrap();
        for row in &run.trace.rows[2..] {
            let surr = replay_model(&cfg, &run.trace, row.iter).unwrap();
            assert_eq!(acq.evaluate(&surr, &row.x).unwrap(), row.acq_value.unwrap());
        }
    }

    #[test]
    fn matched_design_across_methods() {
        let run = |m| run_search(&quick(ProblemId::G8, m).with_samples(3, 4)).unwrap();
        let a = run(Method::Acquisition(AcquisitionKind::Pbe));
        let b = run(Method::Acquisition(AcquisitionKind::Tmse));
        for (ra, rb) in a.trace.rows[..3].iter().zip(&b.trace.rows[..3]) {
            assert_eq!((&ra.x, &ra.g), (&rb.x, &rb.g));
        }
        let lhs = run_search(&quick(ProblemId::G8, Method::LhsOnly).with_samples(3, 3)).unwrap();
        assert_ne!(lhs.trace.rows[0].x, a.trace.rows[0].x);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = quick(ProblemId::G24, Method::Acquisition(AcquisitionKind::Knudde)).with_samples(2, 4);
        let run = run_search(&cfg).unwrap();
        let text = run.trace.to_csv().unwrap();
        assert!(text.starts_with("iter,x_0,x_1,g_0,g_1,acq_value,phase\n"));
        let back = RunTrace::from_csv(&text).unwrap();
        assert_eq!(back.to_csv().unwrap(), text);
        for (a, b) in back.rows.iter().zip(&run.trace.rows) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.g, b.g);
            assert_eq!(a.acq_value.map(f64::to_bits), b.acq_value.map(f64::to_bits));
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(RunTrace::from_csv("iter,x_0,phase\n0,1,init\n").is_err());
        assert!(RunTrace::from_csv("iter,x_0,g_0,acq_value,phase\n0,1,2,,later\n").is_err());
    }
}
