use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::campaign::{rank_problem, Layout, RunRecord};
use crate::problems::ProblemId;
use crate::search::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub median: f64,
    pub mad: f64,
    pub best: bool,
    pub equivalent: bool,
}

/// Problems × methods table of median informedness and MAD.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub problems: Vec<ProblemId>,
    pub methods: Vec<Method>,
    /// `cells[i][j]` belongs to `problems[i]` and `methods[j]`.
    pub cells: Vec<Vec<Cell>>,
}

impl Report {
    pub fn cell(&self, problem: ProblemId, method: Method) -> Option<&Cell> {
        let i = self.problems.iter().position(|&p| p == problem)?;
        let j = self.methods.iter().position(|&m| m == method)?;
        Some(&self.cells[i][j])
    }

    /// Plain-text table. `*` marks the best median, `=` methods not
    /// distinguishable from it.
    pub fn render(&self) -> String {
        let width = 12;
        let mut out = String::new();
        let _ = write!(out, "{:<8}{:<8}", "problem", "");
        for m in &self.methods {
            let _ = write!(out, "{:>width$}", m.name());
        }
        out.push('\n');
        for (p, row) in self.problems.iter().zip(&self.cells) {
            let _ = write!(out, "{:<8}{:<8}", p.name(), "median");
            for c in row {
                let mark = if c.best {
                    "*"
                } else if c.equivalent {
                    "="
                } else {
                    " "
                };
                let _ = write!(out, "{:>w$}{mark}", format!("{:.2}%", 100.0 * c.median), w = width - 1);
            }
            out.push('\n');
            let _ = write!(out, "{:<8}{:<8}", "", "mad");
            for c in row {
                let _ = write!(out, "{:>w$} ", format!("{:.1e}", c.mad), w = width - 1);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("problem,method,median_informedness,mad,best,equivalent_to_best\n");
        for (p, row) in self.problems.iter().zip(&self.cells) {
            for (m, c) in self.methods.iter().zip(row) {
                let _ = writeln!(out, "{p},{m},{},{},{},{}", c.median, c.mad, c.best, c.equivalent);
            }
        }
        out
    }
}

/// Builds the table from run records. Every problem must have a score for
/// every method that appears anywhere in the records.
pub fn report_from_records(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::input("no run records to compare"));
    }
    let mut problems: Vec<ProblemId> = records.iter().map(|r| r.key.problem).collect();
    problems.sort();
    problems.dedup();
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| records.iter().any(|r| r.key.method == *m))
        .collect();
    let reps = records.iter().map(|r| r.key.rep + 1).max().unwrap_or(0);
    let mut cells = Vec::with_capacity(problems.len());
    for &problem in &problems {
        for &m in &methods {
            let has_score = records
                .iter()
                .any(|r| r.key.problem == problem && r.key.method == m && !r.score().is_nan());
            if !has_score {
                return Err(Error::input(format!("no {m} results for {problem}")));
            }
        }
        let ranking = rank_problem(records, problem, &methods, reps)?
            .expect("every method has a score");
        cells.push(
            ranking
                .rows
                .iter()
                .map(|r| Cell {
                    median: r.median,
                    mad: r.mad,
                    best: r.method == ranking.best,
                    equivalent: r.equivalent_to_best(),
                })
                .collect(),
        );
    }
    Ok(Report {
        problems,
        methods,
        cells,
    })
}

/// Reads the run records of a campaign directory and builds the table.
pub fn compare(dir: impl AsRef<Path>) -> Result<Report> {
    report_from_records(&Layout::new(dir.as_ref()).records()?)
}
