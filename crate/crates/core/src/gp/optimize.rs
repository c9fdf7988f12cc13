//! Box-constrained L-BFGS with projection and Armijo backtracking.
//!
//! Used for hyperparameter search in log space. The objective returns `None`
//! where it is undefined (e.g. a failed factorization); such points are
//! treated as infinitely bad by the line search.

const MEMORY: usize = 8;

pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`.
pub fn minimize<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], max_iters: usize) -> Option<Outcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut hist_s: Vec<Vec<f64>> = Vec::new();
    let mut hist_y: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < max_iters {
        iterations += 1;
        // variables pinned at a bound with the gradient pushing outward
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let pg_norm = (0..n).filter(|&i| free[i]).fold(0.0f64, |a, i| a.max(g[i].abs()));
        if pg_norm < 1e-7 {
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        if !hist_s.is_empty() {
            let m = hist_s.len();
            let mut alpha = vec![0.0; m];
            let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
            for k in (0..m).rev() {
                let rho = 1.0 / dotv(&hist_y[k], &hist_s[k]);
                alpha[k] = rho * dotv(&hist_s[k], &q);
                for i in 0..n {
                    q[i] -= alpha[k] * hist_y[k][i];
                }
            }
            let last = m - 1;
            let gamma = dotv(&hist_s[last], &hist_y[last]) / dotv(&hist_y[last], &hist_y[last]);
            for v in q.iter_mut() {
                *v *= gamma;
            }
            for k in 0..m {
                let rho = 1.0 / dotv(&hist_y[k], &hist_s[k]);
                let beta = rho * dotv(&hist_y[k], &q);
                for i in 0..n {
                    q[i] += hist_s[k][i] * (alpha[k] - beta);
                }
            }
            let cand: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
            if dotv(&cand, &g) < 0.0 {
                d = cand;
            } else {
                hist_s.clear();
                hist_y.clear();
            }
        }
        let mut step = if hist_s.is_empty() {
            (1.0 / dotv(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn, lo, hi);
            let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dotv(&g, &dx);
            if decrease >= 0.0 {
                step *= 0.5;
                continue;
            }
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fn_, gn, dx));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else { break };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dotv(&s, &y) > 1e-12 * dotv(&y, &y).max(1e-300) {
            if hist_s.len() == MEMORY {
                hist_s.remove(0);
                hist_y.remove(0);
            }
            hist_s.push(s);
            hist_y.push(y);
        }
        let rel = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Some(Outcome { x, value: fx, iterations })
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
