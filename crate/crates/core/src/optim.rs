//! Derivative-free minimizers used by the realization search and the λ search.

/// Result of a minimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder-Mead simplex search with the standard coefficients.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub step: f64,
    pub max_evals: usize,
    pub f_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { step: 0.5, max_evals: 1000, f_tol: 1e-10 }
    }
}

impl NelderMead {
    pub fn new(step: f64, max_evals: usize) -> Self {
        Self { step, max_evals, ..Default::default() }
    }

    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        self.minimize_batched(|xs: &[Vec<f64>]| xs.iter().map(|x| f(x)).collect(), x0)
    }

    /// Like [`Self::minimize`], but independent evaluations (initial simplex,
    /// shrink steps) are handed over together so the caller may run them
    /// concurrently.
    pub fn minimize_batched(&self, mut f: impl FnMut(&[Vec<f64>]) -> Vec<f64>, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut evals = 0usize;
        if n == 0 || self.max_evals <= 1 {
            let v = f(&[x0.to_vec()]);
            return Minimum { x: x0.to_vec(), value: v[0], evaluations: 1 };
        }
        let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += self.step;
            pts.push(p);
        }
        let take = pts.len().min(self.max_evals);
        pts.truncate(take);
        let mut vals = f(&pts);
        evals += pts.len();
        if pts.len() < n + 1 {
            let (i, v) = argmin(&vals);
            return Minimum { x: pts[i].clone(), value: v, evaluations: evals };
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = pts.into_iter().zip(vals.drain(..)).collect();

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if (worst - best).abs() <= self.f_tol * (1.0 + best.abs()) {
                break;
            }
            let centroid: Vec<f64> =
                (0..n).map(|k| simplex[..n].iter().map(|p| p.0[k]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = f(std::slice::from_ref(&xr))[0];
            evals += 1;
            if fr < simplex[0].1 {
                if evals >= self.max_evals {
                    simplex[n] = (xr, fr);
                    break;
                }
                let xe = along(2.0);
                let fe = f(std::slice::from_ref(&xe))[0];
                evals += 1;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                if evals >= self.max_evals {
                    break;
                }
                let t = if fr < simplex[n].1 { 0.5 } else { -0.5 };
                let xc = along(t);
                let fc = f(std::slice::from_ref(&xc))[0];
                evals += 1;
                if fc < fr.min(simplex[n].1) {
                    simplex[n] = (xc, fc);
                } else {
                    let remaining = self.max_evals - evals;
                    if remaining < n {
                        break;
                    }
                    let x0 = simplex[0].0.clone();
                    let shrunk: Vec<Vec<f64>> = simplex[1..]
                        .iter()
                        .map(|p| x0.iter().zip(&p.0).map(|(a, b)| a + 0.5 * (b - a)).collect())
                        .collect();
                    let v = f(&shrunk);
                    evals += shrunk.len();
                    for (slot, (x, fx)) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(v)) {
                        *slot = (x, fx);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum { x, value, evaluations: evals }
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, x)| if x < b.1 { (i, x) } else { b })
}

/// Golden-section search for a minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, evals: usize) -> Minimum {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    let mut used = 2;
    while used < evals {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
        used += 1;
    }
    if fa < fb {
        Minimum { x: vec![a], value: fa, evaluations: used }
    } else {
        Minimum { x: vec![b], value: fb, evaluations: used }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead { step: 0.5, max_evals: 5000, f_tol: 1e-14 };
        let m = nm.minimize(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0]);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{m:?}");
        assert!(m.evaluations <= 5000);
    }

    #[test]
    fn budget_is_respected() {
        let nm = NelderMead::new(1.0, 17);
        let mut count = 0;
        let m = nm.minimize(
            |x| {
                count += 1;
                x.iter().map(|v| v * v).sum()
            },
            &[3.0, -2.0, 1.0],
        );
        assert!(count <= 17);
        assert_eq!(m.evaluations, count);
        let one = NelderMead::new(1.0, 1).minimize(|x| x[0].abs(), &[0.0]);
        assert_eq!(one.evaluations, 1);
        assert_eq!(one.x, vec![0.0]);
    }

    #[test]
    fn golden() {
        let m = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 60);
        assert!((m.x[0] - 0.3).abs() < 1e-8);
    }
}
