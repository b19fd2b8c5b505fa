use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feasibility::{classify_probability, prob_feasible, Label, MultiSurrogate};
use crate::problems::{true_feasible, ProblemId};

/// One grid point with the model's view and the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub p_feasible: f64,
    pub predicted: Label,
    pub truth: Label,
}

fn axis(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..resolution)
        .map(|i| {
            if i + 1 == resolution {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (resolution - 1) as f64
            }
        })
        .collect()
}

/// Evaluates the surrogate on a regular grid of `resolution` points per axis
/// (the first coordinate varies slowest). Only one- and two-dimensional
/// problems are supported.
pub fn grid_rows(problem: ProblemId, surr: &MultiSurrogate, resolution: usize) -> Result<Vec<GridRow>> {
    let spec = problem.spec();
    let n = spec.dimension();
    if n > 2 {
        return Err(Error::input(format!("{problem} has {n} variables; grids support at most 2")));
    }
    if surr.dimension() != n || surr.num_constraints() != spec.num_constraints() {
        return Err(Error::input(format!("model does not match the shape of {problem}")));
    }
    if resolution == 0 {
        return Err(Error::input("grid resolution must be at least 1"));
    }
    let axes: Vec<Vec<f64>> = spec
        .bounds
        .pairs()
        .iter()
        .map(|&(lo, hi)| axis(lo, hi, resolution))
        .collect();
    let points: Vec<Vec<f64>> = match n {
        1 => axes[0].iter().map(|&a| vec![a]).collect(),
        _ => axes[0]
            .iter()
            .flat_map(|&a| axes[1].iter().map(move |&b| vec![a, b]))
            .collect(),
    };
    points
        .into_iter()
        .map(|x| {
            let jp = surr.joint_predict(&x)?;
            let p = prob_feasible(&jp);
            Ok(GridRow {
                truth: true_feasible(&spec, &x)?,
                predicted: classify_probability(p),
                p_feasible: p,
                means: jp.means,
                stds: jp.stds,
                x,
            })
        })
        .collect()
}

fn label(l: Label) -> &'static str {
    if l.is_feasible() {
        "feasible"
    } else {
        "infeasible"
    }
}

pub fn write_grid<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let fail = |e: csv::Error| Error::format("<grid>", e);
    let mut w = csv::Writer::from_writer(out);
    let (n, l) = rows.first().map_or((0, 0), |r| (r.x.len(), r.means.len()));
    let mut header: Vec<String> = (0..n).map(|i| format!("x_{i}")).collect();
    header.extend((0..l).map(|i| format!("mu_{i}")));
    header.extend((0..l).map(|i| format!("sigma_{i}")));
    header.extend(["p_feasible", "predicted_label", "true_label"].map(String::from));
    w.write_record(&header).map_err(fail)?;
    for r in rows {
        let mut rec: Vec<String> = r.x.iter().map(f64::to_string).collect();
        rec.extend(r.means.iter().map(f64::to_string));
        rec.extend(r.stds.iter().map(f64::to_string));
        rec.push(r.p_feasible.to_string());
        rec.push(label(r.predicted).into());
        rec.push(label(r.truth).into());
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io("<grid>", e))
}

/// Loads a saved surrogate and writes its grid as CSV. Returns the row count.
pub fn emit_grid<W: Write>(
    problem: ProblemId,
    model_file: impl AsRef<Path>,
    resolution: usize,
    out: W,
) -> Result<usize> {
    let surr = MultiSurrogate::load(model_file)?;
    let rows = grid_rows(problem, &surr, resolution)?;
    write_grid(&rows, out)?;
    Ok(rows.len())
}
