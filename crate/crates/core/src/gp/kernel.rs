use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// Squared exponential with one lengthscale per input.
    SquaredExponential,
    /// `k((x, f), (x', f')) = kx(x, x') kf(f, f') + kd(x, x')` where the last
    /// input coordinate is the lower-fidelity prediction.
    NargpComposite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    SquaredExponential {
        lengthscales: Vec<f64>,
        variance: f64,
    },
    NargpComposite {
        x_lengthscales: Vec<f64>,
        x_variance: f64,
        f_lengthscale: f64,
        delta_lengthscales: Vec<f64>,
        delta_variance: f64,
    },
}

#[inline]
fn se(a: &[f64], b: &[f64], inv_l2: &[f64]) -> f64 {
    let mut r = 0.0;
    for k in 0..inv_l2.len() {
        let t = a[k] - b[k];
        r += t * t * inv_l2[k];
    }
    (-0.5 * r).exp()
}

fn inv_sq(ls: &[f64]) -> Vec<f64> {
    ls.iter().map(|l| 1.0 / (l * l)).collect()
}

impl KernelKind {
    /// Number of kernel hyperparameters for inputs of dimension `d`.
    pub fn n_params(self, d: usize) -> usize {
        match self {
            KernelKind::SquaredExponential => d + 1,
            KernelKind::NargpComposite => 2 * (d - 1) + 3,
        }
    }

    /// Log-space bounds given the per-input data ranges.
    pub(crate) fn bounds(self, ranges: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        let ls = |r: &[f64], lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
            for &v in r {
                lo.push((1e-2 * v).ln());
                hi.push((1e2 * v).ln());
            }
        };
        match self {
            KernelKind::SquaredExponential => {
                ls(ranges, &mut lo, &mut hi);
                lo.push(1e-2f64.ln());
                hi.push(1e2f64.ln());
            }
            KernelKind::NargpComposite => {
                let d = ranges.len() - 1;
                ls(&ranges[..d], &mut lo, &mut hi);
                lo.push(1e-2f64.ln());
                hi.push(1e2f64.ln());
                ls(&ranges[d..], &mut lo, &mut hi);
                ls(&ranges[..d], &mut lo, &mut hi);
                lo.push(1e-6f64.ln());
                hi.push(1e2f64.ln());
            }
        }
        (lo, hi)
    }

    /// Deterministic starting point (log space).
    pub(crate) fn initial(self, ranges: &[f64]) -> Vec<f64> {
        match self {
            KernelKind::SquaredExponential => {
                let mut v: Vec<f64> = ranges.iter().map(|r| r.ln()).collect();
                v.push(0.0);
                v
            }
            KernelKind::NargpComposite => {
                let d = ranges.len() - 1;
                let mut v: Vec<f64> = ranges[..d].iter().map(|r| r.ln()).collect();
                v.push(0.0);
                v.push(ranges[d].ln());
                v.extend(ranges[..d].iter().map(|r| r.ln()));
                v.push(0.1f64.ln());
                v
            }
        }
    }

    /// Log-space box for random restarts.
    pub(crate) fn restart_box(self, ranges: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        let ls = |r: &[f64], lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
            for &v in r {
                lo.push((0.2 * v).ln());
                hi.push((5.0 * v).ln());
            }
        };
        match self {
            KernelKind::SquaredExponential => {
                ls(ranges, &mut lo, &mut hi);
                lo.push(0.2f64.ln());
                hi.push(5.0f64.ln());
            }
            KernelKind::NargpComposite => {
                let d = ranges.len() - 1;
                ls(&ranges[..d], &mut lo, &mut hi);
                lo.push(0.2f64.ln());
                hi.push(5.0f64.ln());
                ls(&ranges[d..], &mut lo, &mut hi);
                ls(&ranges[..d], &mut lo, &mut hi);
                lo.push(0.01f64.ln());
                hi.push(1.0f64.ln());
            }
        }
        (lo, hi)
    }
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::SquaredExponential { .. } => KernelKind::SquaredExponential,
            Kernel::NargpComposite { .. } => KernelKind::NargpComposite,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Kernel::SquaredExponential { lengthscales, .. } => lengthscales.len(),
            Kernel::NargpComposite { x_lengthscales, .. } => x_lengthscales.len() + 1,
        }
    }

    /// `k(x, x)`, identical for every `x`.
    pub fn prior_variance(&self) -> f64 {
        match self {
            Kernel::SquaredExponential { variance, .. } => *variance,
            Kernel::NargpComposite { x_variance, delta_variance, .. } => x_variance + delta_variance,
        }
    }

    pub fn from_log_params(kind: KernelKind, d: usize, theta: &[f64]) -> Kernel {
        let e = |s: &[f64]| s.iter().map(|v| v.exp()).collect::<Vec<f64>>();
        match kind {
            KernelKind::SquaredExponential => Kernel::SquaredExponential {
                lengthscales: e(&theta[..d]),
                variance: theta[d].exp(),
            },
            KernelKind::NargpComposite => {
                let m = d - 1;
                Kernel::NargpComposite {
                    x_lengthscales: e(&theta[..m]),
                    x_variance: theta[m].exp(),
                    f_lengthscale: theta[m + 1].exp(),
                    delta_lengthscales: e(&theta[m + 2..2 * m + 2]),
                    delta_variance: theta[2 * m + 2].exp(),
                }
            }
        }
    }

    pub fn to_log_params(&self) -> Vec<f64> {
        match self {
            Kernel::SquaredExponential { lengthscales, variance } => {
                let mut v: Vec<f64> = lengthscales.iter().map(|l| l.ln()).collect();
                v.push(variance.ln());
                v
            }
            Kernel::NargpComposite { x_lengthscales, x_variance, f_lengthscale, delta_lengthscales, delta_variance } => {
                let mut v: Vec<f64> = x_lengthscales.iter().map(|l| l.ln()).collect();
                v.push(x_variance.ln());
                v.push(f_lengthscale.ln());
                v.extend(delta_lengthscales.iter().map(|l| l.ln()));
                v.push(delta_variance.ln());
                v
            }
        }
    }

    pub(crate) fn evaluator(&self) -> Evaluator {
        match self {
            Kernel::SquaredExponential { lengthscales, variance } => Evaluator::Se { inv_l2: inv_sq(lengthscales), variance: *variance },
            Kernel::NargpComposite { x_lengthscales, x_variance, f_lengthscale, delta_lengthscales, delta_variance } => Evaluator::Composite {
                inv_x: inv_sq(x_lengthscales),
                x_variance: *x_variance,
                inv_f: 1.0 / (f_lengthscale * f_lengthscale),
                inv_d: inv_sq(delta_lengthscales),
                delta_variance: *delta_variance,
            },
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.evaluator().eval(a, b)
    }
}

/// Kernel with precomputed inverse squared lengthscales.
pub(crate) enum Evaluator {
    Se {
        inv_l2: Vec<f64>,
        variance: f64,
    },
    Composite {
        inv_x: Vec<f64>,
        x_variance: f64,
        inv_f: f64,
        inv_d: Vec<f64>,
        delta_variance: f64,
    },
}

impl Evaluator {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Evaluator::Se { inv_l2, variance } => variance * se(a, b, inv_l2),
            Evaluator::Composite { inv_x, x_variance, inv_f, inv_d, delta_variance, .. } => {
                let m = inv_x.len();
                let t = a[m] - b[m];
                x_variance * se(a, b, inv_x) * (-0.5 * t * t * inv_f).exp() + delta_variance * se(a, b, inv_d)
            }
        }
    }

    /// Row-major Gram matrix of the `n` points in `x` (flat, stride `d`).
    pub fn gram(&self, x: &[f64], n: usize, d: usize) -> Vec<f64> {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            for j in 0..i {
                let v = self.eval(xi, &x[j * d..(j + 1) * d]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = self.eval(xi, xi);
        }
        k
    }

    /// `grad[p] = 1/2 sum_ij w_ij dK_ij / dtheta_p` for the log hyperparameters.
    pub fn gradient(&self, x: &[f64], n: usize, d: usize, w: &[f64], grad: &mut [f64]) {
        match self {
            Evaluator::Se { inv_l2, variance } => {
                let mut gl = vec![0.0; d];
                let mut gv = 0.0;
                let mut d2 = vec![0.0; d];
                for i in 0..n {
                    let xi = &x[i * d..(i + 1) * d];
                    for j in 0..i {
                        let xj = &x[j * d..(j + 1) * d];
                        let mut r = 0.0;
                        for k in 0..d {
                            let t = xi[k] - xj[k];
                            d2[k] = t * t;
                            r += d2[k] * inv_l2[k];
                        }
                        let kij = variance * (-0.5 * r).exp();
                        let a = w[i * n + j] * kij;
                        gv += a;
                        for k in 0..d {
                            gl[k] += a * d2[k];
                        }
                    }
                    gv += 0.5 * w[i * n + i] * variance;
                }
                for k in 0..d {
                    grad[k] = gl[k] * inv_l2[k];
                }
                grad[d] = gv;
            }
            Evaluator::Composite { inv_x, x_variance, inv_f, inv_d, delta_variance, .. } => {
                let m = d - 1;
                let mut gx = vec![0.0; m];
                let mut gd = vec![0.0; m];
                let (mut gsx, mut gf, mut gsd) = (0.0, 0.0, 0.0);
                let mut d2 = vec![0.0; m];
                for i in 0..n {
                    let xi = &x[i * d..(i + 1) * d];
                    for j in 0..i {
                        let xj = &x[j * d..(j + 1) * d];
                        let (mut rx, mut rd) = (0.0, 0.0);
                        for k in 0..m {
                            let t = xi[k] - xj[k];
                            d2[k] = t * t;
                            rx += d2[k] * inv_x[k];
                            rd += d2[k] * inv_d[k];
                        }
                        let tf = xi[m] - xj[m];
                        let f2 = tf * tf;
                        let kxf = x_variance * (-0.5 * (rx + f2 * inv_f)).exp();
                        let kd = delta_variance * (-0.5 * rd).exp();
                        let wij = w[i * n + j];
                        let a = wij * kxf;
                        let b = wij * kd;
                        gsx += a;
                        gsd += b;
                        gf += a * f2;
                        for k in 0..m {
                            gx[k] += a * d2[k];
                            gd[k] += b * d2[k];
                        }
                    }
                    gsx += 0.5 * w[i * n + i] * x_variance;
                    gsd += 0.5 * w[i * n + i] * delta_variance;
                }
                for k in 0..m {
                    grad[k] = gx[k] * inv_x[k];
                    grad[m + 2 + k] = gd[k] * inv_d[k];
                }
                grad[m] = gsx;
                grad[m + 1] = gf * inv_f;
                grad[2 * m + 2] = gsd;
            }
        }
    }
}
