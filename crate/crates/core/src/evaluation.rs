//! Classifier scoring, robust summaries and one-sided rank tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::Label;
use crate::normal::cdf;
use crate::search::Method;

/// Largest number of non-zero differences handled by exact enumeration in
/// the signed-rank test.
pub const WILCOXON_EXACT_MAX: usize = 20;
/// Largest combined sample size handled exactly by the rank-sum test.
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;

/// Counts with "feasible" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::input(format!(
                "{} predictions for {} ground-truth labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut cm = ConfusionMatrix::default();
        for (p, t) in predicted.iter().zip(truth) {
            cm.record(*p, *t);
        }
        Ok(cm)
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted.is_feasible(), truth.is_feasible()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// `TPR + TNR − 1`.
///
/// When a class is absent from the ground truth its rate is taken as 1 if the
/// present class is classified perfectly; otherwise the score is NaN.
pub fn informedness(cm: &ConfusionMatrix) -> f64 {
    let pos = cm.tp + cm.fn_;
    let neg = cm.tn + cm.fp;
    let rate = |hit: u64, total: u64| hit as f64 / total as f64;
    match (pos, neg) {
        (0, 0) => f64::NAN,
        (0, _) if cm.fp == 0 => 1.0,
        (_, 0) if cm.fn_ == 0 => 1.0,
        (0, _) | (_, 0) => f64::NAN,
        _ => rate(cm.tp, pos) + rate(cm.tn, neg) - 1.0,
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median and unscaled median absolute deviation.
pub fn median_mad(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::input("median of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::input("sample contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let med = median_sorted(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok((med, median_sorted(&dev)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// The first sample tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    /// Exact below the size threshold, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub corrected_alpha: f64,
    pub decision: Decision,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            statistic,
            p_value,
            corrected_alpha: alpha,
            decision: if p_value <= alpha {
                Decision::Reject
            } else {
                Decision::FailToReject
            },
        }
    }

    pub fn rejects(&self) -> bool {
        self.decision == Decision::Reject
    }
}

/// Average ranks (1-based) of `values` and the tie group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Upper-tail probability under a continuity-corrected normal approximation.
fn normal_upper(stat: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return if stat >= mean { 1.0 } else { 0.0 };
    }
    let z = (stat - mean - 0.5) / var.sqrt();
    cdf(-z)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// One-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; tied magnitudes share average ranks. The statistic is the
/// positive-rank sum `W+` of `a − b` (of `b − a` for [`Alternative::Less`]).
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    alpha: f64,
    branch: Branch,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::input("paired samples must be finite"));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| match alternative {
            Alternative::Greater => x - y,
            Alternative::Less => y - x,
        })
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestResult::new(0.0, 1.0, alpha));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let exact = match branch {
        Branch::Auto => n <= WILCOXON_EXACT_MAX,
        Branch::Exact => true,
        Branch::Normal => false,
    };
    let p = if exact {
        // Doubled ranks are integers even with ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (2.0 * w_plus).round() as usize;
        let upper: f64 = counts[observed..].iter().sum();
        upper / 2f64.powi(n as i32)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        normal_upper(w_plus, mean, var)
    };
    Ok(TestResult::new(w_plus, p, alpha))
}

/// One-sided Mann-Whitney U test. The statistic is `U` of the sample that
/// the alternative claims is larger.
pub fn mann_whitney_u(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    alpha: f64,
    branch: Branch,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::input("samples must be finite"));
    }
    let (hi, lo) = match alternative {
        Alternative::Greater => (a, b),
        Alternative::Less => (b, a),
    };
    let combined: Vec<f64> = hi.iter().chain(lo).copied().collect();
    let (ranks, ties) = midranks(&combined);
    let (n1, n2) = (hi.len(), lo.len());
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let exact = match branch {
        Branch::Auto => n1 + n2 <= MANN_WHITNEY_EXACT_MAX,
        Branch::Exact => true,
        Branch::Normal => false,
    };
    let p = if exact {
        // counts[k][s]: subsets of size k with doubled rank sum s.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![vec![0.0f64; total + 1]; n1 + 1];
        counts[0][0] = 1.0;
        for &r in &doubled {
            for k in (1..=n1).rev() {
                for s in (r..=total).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let observed = (2.0 * rank_sum).round() as usize;
        let all: f64 = counts[n1].iter().sum();
        counts[n1][observed..].iter().sum::<f64>() / all
    } else {
        let (f1, f2) = (n1 as f64, n2 as f64);
        let nn = f1 + f2;
        let mean = f1 * f2 / 2.0;
        let var = f1 * f2 / 12.0 * ((nn + 1.0) - tie_sum(&ties) / (nn * (nn - 1.0)));
        normal_upper(u, mean, var)
    };
    Ok(TestResult::new(u, p, alpha))
}

/// Outcome of comparing every method against the best median.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub best: Method,
    pub corrected_alpha: f64,
    /// Per method in input order: median, MAD, runs used, test against the
    /// best (`None` for the best itself).
    pub rows: Vec<RankingRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub method: Method,
    pub median: f64,
    pub mad: f64,
    pub n_valid: usize,
    pub test: Option<TestResult>,
}

impl RankingRow {
    pub fn equivalent_to_best(&self) -> bool {
        self.test.is_some_and(|t| !t.rejects())
    }
}

impl Ranking {
    pub fn equivalent(&self) -> Vec<Method> {
        self.rows
            .iter()
            .filter(|r| r.equivalent_to_best())
            .map(|r| r.method)
            .collect()
    }

    pub fn row(&self, method: Method) -> Option<&RankingRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Picks the method with the highest median and tests it against each other
/// method (best greater, one-sided) at `alpha / (methods − 1)`.
///
/// Values are indexed by repetition; NaN marks a run that produced no score.
/// Pairs involving the baseline use the rank-sum test, all other pairs the
/// signed-rank test on repetitions where both methods have a score.
pub fn best_and_equivalents(per_method: &[(Method, Vec<f64>)], alpha: f64) -> Result<Ranking> {
    check_alpha(alpha)?;
    if per_method.is_empty() {
        return Err(Error::input("nothing to rank"));
    }
    let valid = |v: &[f64]| v.iter().copied().filter(|x| !x.is_nan()).collect::<Vec<_>>();
    let mut rows = Vec::with_capacity(per_method.len());
    for (method, values) in per_method {
        let vals = valid(values);
        let (median, mad) = if vals.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            median_mad(&vals)?
        };
        rows.push(RankingRow {
            method: *method,
            median,
            mad,
            n_valid: vals.len(),
            test: None,
        });
    }
    let best_idx = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.median.is_nan())
        .fold(None::<usize>, |acc, (i, r)| match acc {
            Some(j) if rows[j].median >= r.median => Some(j),
            _ => Some(i),
        })
        .ok_or_else(|| Error::input("no method has a valid score"))?;
    let comparisons = per_method.len().saturating_sub(1).max(1);
    let corrected = alpha / comparisons as f64;
    let (best_method, best_values) = &per_method[best_idx];
    for (i, (method, values)) in per_method.iter().enumerate() {
        if i == best_idx || rows[i].n_valid == 0 {
            continue;
        }
        let test = if *method == Method::LhsOnly || *best_method == Method::LhsOnly {
            mann_whitney_u(
                &valid(best_values),
                &valid(values),
                Alternative::Greater,
                corrected,
                Branch::Auto,
            )?
        } else {
            if values.len() != best_values.len() {
                return Err(Error::input(format!(
                    "{best_method} has {} repetitions but {method} has {}",
                    best_values.len(),
                    values.len()
                )));
            }
            let (a, b): (Vec<f64>, Vec<f64>) = best_values
                .iter()
                .zip(values)
                .filter(|(x, y)| !x.is_nan() && !y.is_nan())
                .map(|(x, y)| (*x, *y))
                .unzip();
            wilcoxon_signed_rank(&a, &b, Alternative::Greater, corrected, Branch::Auto)?
        };
        rows[i].test = Some(test);
    }
    Ok(Ranking {
        best: *best_method,
        corrected_alpha: corrected,
        rows,
    })
}
