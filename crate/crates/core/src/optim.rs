//! Box-constrained quasi-Newton minimization.

/// Objective returning the value and, when requested, the gradient.
/// Returning a non-finite value marks the point as infeasible.
pub(crate) trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsSettings {
    pub max_iter: usize,
    /// Stop when the projected gradient sup-norm falls below this.
    pub gtol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub ftol: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self { max_iter: 200, gtol: 1e-6, ftol: 1e-10 }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

/// Projected BFGS with Armijo backtracking. Variables held at a bound with
/// the gradient pointing outward are frozen for the step.
pub(crate) fn minimize_box(
    obj: &dyn Objective,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: BfgsSettings,
) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut f, mut g) = obj.value_grad(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    for _ in 0..settings.max_iter {
        if projected_gradient_norm(&x, &g, lo, hi) < settings.gtol {
            break;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if !free[i] {
                    return 0.0;
                }
                -(0..n).filter(|&j| free[j]).map(|j| h[i * n + j] * g[j]).sum::<f64>()
            })
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = identity(n);
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        // keep the first trial step within a unit box move
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
            project(&mut xn, lo, hi);
            let fn_ = obj.value(&xn);
            let decrease: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            if fn_.is_finite() && fn_ <= f + 1e-4 * decrease {
                accepted = Some(xn);
                break;
            }
            t *= 0.5;
        }
        let Some(xn) = accepted else {
            break;
        };
        let (fnew, gnew) = obj.value_grad(&xn);
        if !fnew.is_finite() || gnew.iter().any(|v| !v.is_finite()) {
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gnew[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let rel = (f - fnew).abs() / (f.abs() + 1.0);
        x = xn;
        f = fnew;
        g = gnew;
        if rel < settings.ftol {
            break;
        }
    }
    Some(Minimum { x, value: f })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (self.value(x), vec![g0, g1])
        }
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let s = BfgsSettings { max_iter: 500, gtol: 1e-8, ftol: 0.0 };
        let m = minimize_box(&Rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], s).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn active_bound() {
        let s = BfgsSettings { max_iter: 500, gtol: 1e-8, ftol: 0.0 };
        let m = minimize_box(&Rosenbrock, &[0.0, 0.0], &[-5.0, -5.0], &[0.5, 5.0], s).unwrap();
        assert_eq!(m.x[0], 0.5);
        assert!((m.x[1] - 0.25).abs() < 1e-6);
    }
}
