//! Benchmark constraint suite.
//!
//! G4, G8, G9, G19 and G24 of the CEC 2006 constrained test set (inequality
//! constraints only, objectives omitted) and a one-dimensional two-sine
//! demo. Every constraint is written as `g_l(x) ≤ t_l`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::Label;
use crate::Bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    G4,
    G8,
    G9,
    G19,
    G24,
    Demo1d,
}

impl ProblemId {
    pub const ALL: [ProblemId; 6] = [
        ProblemId::G4,
        ProblemId::G8,
        ProblemId::G9,
        ProblemId::G19,
        ProblemId::G24,
        ProblemId::Demo1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::G4 => "g4",
            ProblemId::G8 => "g8",
            ProblemId::G9 => "g9",
            ProblemId::G19 => "g19",
            ProblemId::G24 => "g24",
            ProblemId::Demo1d => "demo1d",
        }
    }

    pub fn spec(self) -> ProblemSpec {
        ProblemSpec::new(self)
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| Error::input(format!("unknown problem {s:?}")))
    }
}

/// Thresholds of the demo: `sin x ≤ 0.05` and `2 sin(x − 1) ≤ 1.5`.
pub const DEMO_THRESHOLDS: [f64; 2] = [0.05, 1.5];

/// Points where the demo's feasible region begins or ends inside `[0, 2π]`.
pub fn demo_boundaries() -> [f64; 2] {
    [
        DEMO_THRESHOLDS[0].asin(),
        1.0 + PI - (DEMO_THRESHOLDS[1] / 2.0).asin(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub bounds: Bounds,
    pub thresholds: Vec<f64>,
    /// Feasible share of the box in percent, as tabulated for the benchmark.
    pub reference_rho: f64,
}

impl ProblemSpec {
    pub fn new(id: ProblemId) -> Self {
        let (pairs, num_constraints, rho) = match id {
            ProblemId::G4 => (
                vec![(78.0, 102.0), (33.0, 45.0), (27.0, 45.0), (27.0, 45.0), (27.0, 45.0)],
                6,
                26.9953,
            ),
            ProblemId::G8 => (vec![(0.0, 10.0); 2], 2, 0.8727),
            ProblemId::G9 => (vec![(-10.0, 10.0); 7], 4, 0.5218),
            ProblemId::G19 => (vec![(0.0, 10.0); 15], 5, 33.4856),
            ProblemId::G24 => (vec![(0.0, 3.0), (0.0, 4.0)], 2, 44.2294),
            ProblemId::Demo1d => {
                let [a, b] = demo_boundaries();
                (vec![(0.0, 2.0 * PI)], 2, 100.0 * (a + 2.0 * PI - b) / (2.0 * PI))
            }
        };
        let thresholds = match id {
            ProblemId::Demo1d => DEMO_THRESHOLDS.to_vec(),
            _ => vec![0.0; num_constraints],
        };
        ProblemSpec {
            id,
            bounds: Bounds::new(pairs).expect("static bounds are valid"),
            thresholds,
            reference_rho: rho,
        }
    }

    pub fn dimension(&self) -> usize {
        self.bounds.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.thresholds.len()
    }

    /// Constraint vector without bounds checking or bookkeeping.
    pub fn constraints(&self, x: &[f64]) -> Vec<f64> {
        match self.id {
            ProblemId::G4 => g04(x),
            ProblemId::G8 => g08(x),
            ProblemId::G9 => g09(x),
            ProblemId::G19 => g19(x),
            ProblemId::G24 => g24(x),
            ProblemId::Demo1d => vec![x[0].sin(), 2.0 * (x[0] - 1.0).sin()],
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::input(format!(
                "{} expects {} variables, got {}",
                self.id,
                self.dimension(),
                x.len()
            )));
        }
        if !self.bounds.contains(x) {
            return Err(Error::input(format!("{x:?} lies outside the bounds of {}", self.id)));
        }
        Ok(())
    }
}

/// `g_l ≤ t_l` for every constraint.
pub fn satisfies(values: &[f64], thresholds: &[f64]) -> bool {
    values.iter().zip(thresholds).all(|(g, t)| g <= t)
}

/// Count and call-ordered log of expensive evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationLedger {
    log: Vec<(Vec<f64>, Vec<f64>)>,
    cap: Option<usize>,
}

impl EvaluationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(cap: usize) -> Self {
        EvaluationLedger {
            log: Vec::new(),
            cap: Some(cap),
        }
    }

    pub fn calls(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.log
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }
}

/// Evaluates all constraints at an in-bounds point and records the call.
pub fn evaluate_constraints(
    spec: &ProblemSpec,
    x: &[f64],
    ledger: &mut EvaluationLedger,
) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    if let Some(cap) = ledger.cap {
        if ledger.calls() >= cap {
            return Err(Error::Budget(cap));
        }
    }
    let values = spec.constraints(x);
    ledger.log.push((x.to_vec(), values.clone()));
    Ok(values)
}

/// Ground-truth label of an in-bounds point.
pub fn true_feasible(spec: &ProblemSpec, x: &[f64]) -> Result<Label> {
    spec.check_point(x)?;
    Ok(label_of(spec, x))
}

fn label_of(spec: &ProblemSpec, x: &[f64]) -> Label {
    if satisfies(&spec.constraints(x), &spec.thresholds) {
        Label::Feasible
    } else {
        Label::Infeasible
    }
}

/// Minimum sample count accepted by [`monte_carlo_rho`].
pub const MIN_RHO_SAMPLES: usize = 10_000;

/// Percentage of uniform samples that satisfy every constraint.
pub fn monte_carlo_rho(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<f64> {
    if samples < MIN_RHO_SAMPLES {
        return Err(Error::input(format!(
            "volume estimate needs at least {MIN_RHO_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dimension();
    let mut u = vec![0.0; dim];
    let mut feasible = 0usize;
    for _ in 0..samples {
        u.iter_mut().for_each(|v| *v = rng.random());
        let x = spec.bounds.from_unit(&u);
        if label_of(spec, &x).is_feasible() {
            feasible += 1;
        }
    }
    Ok(100.0 * feasible as f64 / samples as f64)
}

fn g04(x: &[f64]) -> Vec<f64> {
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    let u = 85.334407 + 0.0056858 * x2 * x5 + 0.0006262 * x1 * x4 - 0.0022053 * x3 * x5;
    let v = 80.51249 + 0.0071317 * x2 * x5 + 0.0029955 * x1 * x2 + 0.0021813 * x3 * x3;
    let w = 9.300961 + 0.0047026 * x3 * x5 + 0.0012547 * x1 * x3 + 0.0019085 * x3 * x4;
    vec![u - 92.0, -u, v - 110.0, 90.0 - v, w - 25.0, 20.0 - w]
}

fn g08(x: &[f64]) -> Vec<f64> {
    let (x1, x2) = (x[0], x[1]);
    vec![x1 * x1 - x2 + 1.0, 1.0 - x1 + (x2 - 4.0).powi(2)]
}

fn g09(x: &[f64]) -> Vec<f64> {
    let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
    vec![
        -127.0 + 2.0 * x1 * x1 + 3.0 * x2.powi(4) + x3 + 4.0 * x4 * x4 + 5.0 * x5,
        -282.0 + 7.0 * x1 + 3.0 * x2 + 10.0 * x3 * x3 + x4 - x5,
        -196.0 + 23.0 * x1 + x2 * x2 + 6.0 * x6 * x6 - 8.0 * x7,
        4.0 * x1 * x1 + x2 * x2 - 3.0 * x1 * x2 + 2.0 * x3 * x3 + 5.0 * x6 - 11.0 * x7,
    ]
}

const G19_A: [[f64; 5]; 10] = [
    [-16.0, 2.0, 0.0, 1.0, 0.0],
    [0.0, -2.0, 0.0, 0.4, 2.0],
    [-3.5, 0.0, 2.0, 0.0, 0.0],
    [0.0, -2.0, 0.0, -4.0, -1.0],
    [0.0, -9.0, -2.0, 1.0, -2.8],
    [2.0, 0.0, -4.0, 0.0, 0.0],
    [-1.0, -1.0, -1.0, -1.0, -1.0],
    [-1.0, -2.0, -3.0, -2.0, -1.0],
    [1.0, 2.0, 3.0, 4.0, 5.0],
    [1.0, 1.0, 1.0, 1.0, 1.0],
];
const G19_C: [[f64; 5]; 5] = [
    [30.0, -20.0, -10.0, 32.0, -10.0],
    [-20.0, 39.0, -6.0, -31.0, 32.0],
    [-10.0, -6.0, 10.0, -6.0, -10.0],
    [32.0, -31.0, -6.0, 39.0, -20.0],
    [-10.0, 32.0, -10.0, -20.0, 30.0],
];
const G19_D: [f64; 5] = [4.0, 8.0, 10.0, 6.0, 2.0];
const G19_E: [f64; 5] = [-15.0, -27.0, -36.0, -18.0, -12.0];

fn g19(x: &[f64]) -> Vec<f64> {
    (0..5)
        .map(|j| {
            let coupling: f64 = (0..5).map(|i| G19_C[i][j] * x[10 + i]).sum();
            let linear: f64 = (0..10).map(|i| G19_A[i][j] * x[i]).sum();
            -2.0 * coupling - 3.0 * G19_D[j] * x[10 + j].powi(2) - G19_E[j] + linear
        })
        .collect()
}

fn g24(x: &[f64]) -> Vec<f64> {
    let (x1, x2) = (x[0], x[1]);
    vec![
        -2.0 * x1.powi(4) + 8.0 * x1.powi(3) - 8.0 * x1 * x1 + x2 - 2.0,
        -4.0 * x1.powi(4) + 32.0 * x1.powi(3) - 88.0 * x1 * x1 + 96.0 * x1 + x2 - 36.0,
    ]
}
