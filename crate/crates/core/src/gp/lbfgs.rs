//! Limited-memory BFGS with Armijo backtracking, used for hyperparameter fitting.

use std::collections::VecDeque;

pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 7,
            max_iters: 60,
            grad_tol: 1e-5,
            rel_tol: 1e-10,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient (or `None` where
/// undefined). Returns the best point found and its value.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for iter in 0..opts.max_iters {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < opts.grad_tol {
            break;
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let converged = (fx - fnew).abs() <= opts.rel_tol * fx.abs().max(1.0) && iter > 0;
        x = xn;
        fx = fnew;
        g = gn;
        if converged {
            break;
        }
    }
    Some((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((v, g))
        };
        let opts = LbfgsOptions {
            max_iters: 500,
            grad_tol: 1e-10,
            rel_tol: 0.0,
            ..Default::default()
        };
        let (x, v) = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert!(v < 1e-12, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }
}
