//! Acquisition functions for locating the feasibility boundary.
//!
//! Single-constraint criteria (`tmse`, `bichon`, `ranjan`, `echard`) take raw
//! predictive mean and deviation. With several constraints they are applied to
//! the constraint whose mean most exceeds its threshold. `knudde` sums its
//! per-constraint entropy terms, and `pbe` multiplies the probability of lying
//! on the joint boundary by the joint predictive entropy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{prob_feasible_from_taus, tau, JointPrediction, MultiSurrogate};
use crate::normal::{cdf, log_cdf_times_survival, pdf};

/// Finite stand-in for `−∞` handed to the optimizer.
pub const SENTINEL: f64 = -1e12;

/// `½ ln(2πe)`, the entropy of a unit-variance Gaussian.
pub const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Knudde,
    Tmse,
    Bichon,
    Ranjan,
    Echard,
    Pbe,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 6] = [
        AcquisitionKind::Knudde,
        AcquisitionKind::Tmse,
        AcquisitionKind::Bichon,
        AcquisitionKind::Ranjan,
        AcquisitionKind::Echard,
        AcquisitionKind::Pbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::Knudde => "knudde",
            AcquisitionKind::Tmse => "tmse",
            AcquisitionKind::Bichon => "bichon",
            AcquisitionKind::Ranjan => "ranjan",
            AcquisitionKind::Echard => "echard",
            AcquisitionKind::Pbe => "pbe",
        }
    }

    /// Short tag used in tables: K, T, B, R, E or PBE.
    pub fn tag(self) -> &'static str {
        match self {
            AcquisitionKind::Knudde => "K",
            AcquisitionKind::Tmse => "T",
            AcquisitionKind::Bichon => "B",
            AcquisitionKind::Ranjan => "R",
            AcquisitionKind::Echard => "E",
            AcquisitionKind::Pbe => "PBE",
        }
    }

    /// Whether several constraints are handled by selecting one of them.
    pub fn is_composite(self) -> bool {
        !matches!(self, AcquisitionKind::Knudde | AcquisitionKind::Pbe)
    }

    fn single(self) -> Option<fn(f64, f64, f64) -> f64> {
        match self {
            AcquisitionKind::Tmse => Some(tmse_single),
            AcquisitionKind::Bichon => Some(bichon_single),
            AcquisitionKind::Ranjan => Some(ranjan_single),
            AcquisitionKind::Echard => Some(echard_single),
            AcquisitionKind::Knudde | AcquisitionKind::Pbe => None,
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AcquisitionKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::input(format!("unknown acquisition {s:?}")))
    }
}

/// Output scale of the deviations that enter the `pbe` entropy term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyScale {
    /// Units of the constraint responses.
    #[default]
    Raw,
    /// Units of the per-constraint standardized GP outputs.
    Standardized,
}

/// Optional tweaks to the acquisition formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Lower bound applied to the joint entropy inside `pbe`. `None` uses the
    /// entropy as is, which can be negative for small deviations.
    pub pbe_entropy_floor: Option<f64>,
    #[serde(default)]
    pub pbe_entropy_scale: EntropyScale,
}

/// Entropy reduction criterion for one constraint:
/// `½ ln(2πe σ²) − ln(Φ(τ)(1 − Φ(τ)))`. Returns `−∞` for `σ ≤ 0`.
pub fn knudde_single(mean: f64, std: f64, threshold: f64) -> f64 {
    if std.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return f64::NEG_INFINITY;
    }
    let t = (threshold - mean) / std;
    HALF_LN_2PI_E + std.ln() - log_cdf_times_survival(t)
}

fn standardized_gap(mean: f64, std: f64, threshold: f64) -> Option<f64> {
    (std > 0.0).then(|| (mean - threshold) / std)
}

/// Targeted mean squared error, `σ φ(z)`.
pub fn tmse_single(mean: f64, std: f64, threshold: f64) -> f64 {
    match standardized_gap(mean, std, threshold) {
        Some(z) => std * pdf(z),
        None => 0.0,
    }
}

/// `E[max(0, x + N(0,1))] = xΦ(x) + φ(x)`.
fn positive_part_mean(x: f64) -> f64 {
    x * cdf(x) + pdf(x)
}

/// Expected feasibility, `σ[z⁺Φ(z⁺) + z⁻Φ(z⁻) + φ(z⁺) + φ(z⁻) − 2zΦ(z) − 2φ(z)]`.
pub fn bichon_single(mean: f64, std: f64, threshold: f64) -> f64 {
    let Some(z) = standardized_gap(mean, std, threshold) else {
        return 0.0;
    };
    // The bracket is even in z; evaluating at −|z| avoids cancelling large terms.
    let z = -z.abs();
    let bracket = positive_part_mean(z + 1.0) + positive_part_mean(z - 1.0)
        - 2.0 * positive_part_mean(z);
    std * bracket.max(0.0)
}

/// `σ²[z²(Φ(z⁻) − Φ(z⁺)) + z⁺φ(z⁻) − z⁻φ(z⁺)]`, equal to
/// `E[max(0, σ² − (t − g)²)]` for `g ~ N(μ, σ²)`.
pub fn ranjan_single(mean: f64, std: f64, threshold: f64) -> f64 {
    let Some(z) = standardized_gap(mean, std, threshold) else {
        return 0.0;
    };
    let z = -z.abs();
    let (zp, zm) = (z + 1.0, z - 1.0);
    let bracket = z * z * (cdf(zm) - cdf(zp)) + zp * pdf(zm) - zm * pdf(zp);
    std * std * bracket.max(0.0)
}

/// `−|μ − t| / σ`; `−∞` when the deviation vanishes.
pub fn echard_single(mean: f64, std: f64, threshold: f64) -> f64 {
    match standardized_gap(mean, std, threshold) {
        Some(z) => -z.abs(),
        None => f64::NEG_INFINITY,
    }
}

/// Sum of [`knudde_single`] over constraints.
pub fn knudde(jp: &JointPrediction, thresholds: &[f64]) -> f64 {
    jp.means
        .iter()
        .zip(&jp.stds)
        .zip(thresholds)
        .map(|((m, s), t)| knudde_single(*m, *s, *t))
        .sum()
}

/// Index of the constraint with the largest `μ_l − t_l`; ties go to the lowest index.
pub fn composite_index(jp: &JointPrediction, thresholds: &[f64]) -> usize {
    let mut best = 0;
    let mut best_gap = f64::NEG_INFINITY;
    for (l, (m, t)) in jp.means.iter().zip(thresholds).enumerate() {
        let gap = m - t;
        if gap > best_gap {
            best = l;
            best_gap = gap;
        }
    }
    best
}

/// Applies a single-constraint criterion to the selected constraint.
pub fn composite(kind: AcquisitionKind, jp: &JointPrediction, thresholds: &[f64]) -> Result<f64> {
    let single = kind
        .single()
        .ok_or_else(|| Error::input(format!("{kind} is not a single-constraint criterion")))?;
    if jp.is_empty() {
        return Err(Error::input("composite criterion needs at least one constraint"));
    }
    let k = composite_index(jp, thresholds);
    Ok(single(jp.means[k], jp.stds[k], thresholds[k]))
}

/// `p(F)·p(I) = p(F)(1 − p(F))`, in `[0, 0.25]`.
pub fn prob_boundary(jp: &JointPrediction) -> f64 {
    let p = prob_feasible_from_taus(&jp.taus);
    p * (1.0 - p)
}

/// Differential entropy of a diagonal Gaussian with the given deviations.
pub fn joint_entropy(stds: &[f64]) -> f64 {
    stds.len() as f64 * HALF_LN_2PI_E + stds.iter().map(|s| s.ln()).sum::<f64>()
}

/// Boundary probability times joint predictive entropy.
pub fn pbe(jp: &JointPrediction, config: &AcquisitionConfig) -> f64 {
    let boundary = prob_boundary(jp);
    if boundary == 0.0 {
        return 0.0;
    }
    let stds = match config.pbe_entropy_scale {
        EntropyScale::Raw => &jp.stds,
        EntropyScale::Standardized => &jp.standardized_stds,
    };
    let mut entropy = joint_entropy(stds);
    if let Some(floor) = config.pbe_entropy_floor {
        entropy = entropy.max(floor);
    }
    boundary * entropy
}

/// A configured acquisition criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acquisition {
    pub kind: AcquisitionKind,
    pub config: AcquisitionConfig,
}

impl Acquisition {
    pub fn new(kind: AcquisitionKind) -> Self {
        Acquisition {
            kind,
            config: AcquisitionConfig::default(),
        }
    }

    /// Utility of a joint prediction; may be `−∞`.
    pub fn value(&self, jp: &JointPrediction, thresholds: &[f64]) -> f64 {
        match self.kind {
            AcquisitionKind::Knudde => knudde(jp, thresholds),
            AcquisitionKind::Pbe => pbe(jp, &self.config),
            kind => composite(kind, jp, thresholds).unwrap_or(f64::NEG_INFINITY),
        }
    }

    pub fn evaluate(&self, surr: &MultiSurrogate, x: &[f64]) -> Result<f64> {
        let jp = surr.joint_predict(x)?;
        Ok(self.value(&jp, surr.thresholds()))
    }

    /// Finite utility for maximization: `−∞` and NaN become [`SENTINEL`].
    pub fn objective(&self, surr: &MultiSurrogate, x: &[f64]) -> f64 {
        let jp = surr.joint_predict_unchecked(x);
        finite_or_sentinel(self.value(&jp, surr.thresholds()))
    }
}

pub fn finite_or_sentinel(v: f64) -> f64 {
    if v.is_nan() || v < SENTINEL {
        SENTINEL
    } else {
        v
    }
}

/// Entropy of `N(mean, std²)` truncated to `[lo, hi]` (either end may be infinite).
pub fn truncated_normal_entropy(mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / std;
    let b = (hi - mean) / std;
    // Mass computed on whichever side keeps it away from 1 − ε cancellation.
    let z = if a > 0.0 {
        cdf(-a) - cdf(-b)
    } else {
        cdf(b) - cdf(a)
    };
    let edge = |x: f64| if x.is_finite() { x * pdf(x) } else { 0.0 };
    HALF_LN_2PI_E + std.ln() + z.ln() + (edge(a) - edge(b)) / (2.0 * z)
}

/// The four-entropy form of the boundary entropy criterion with the feasible
/// region `g ≤ t` (lower limit at −∞):
/// `3H[g] − H[g | g > t] − H[g | g < t] − H[g | g < −∞]`, the last term being zero.
pub fn knudde_four_term(mean: f64, std: f64, threshold: f64) -> f64 {
    let full = HALF_LN_2PI_E + std.ln();
    let above = truncated_normal_entropy(mean, std, threshold, f64::INFINITY);
    let below = truncated_normal_entropy(mean, std, f64::NEG_INFINITY, threshold);
    3.0 * full - above - below
}

/// Difference between [`knudde_four_term`] and [`knudde_single`]:
/// `−τφ(τ)(2Φ(τ) − 1) / (2Φ(τ)(1 − Φ(τ)))`.
pub fn knudde_truncation_cross_term(mean: f64, std: f64, threshold: f64) -> f64 {
    let t = tau(mean, std, threshold);
    let p = cdf(t);
    -t * pdf(t) * (2.0 * p - 1.0) / (2.0 * p * (1.0 - p))
}
