//! Derivative-free minimization.

/// Nelder-Mead simplex search with dimension-adaptive coefficients
/// (Gao and Han, 2012), which behaves better than the classic 1/2/0.5/0.5
/// set beyond a handful of dimensions.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Converged once every vertex is within this max-norm distance of the best.
    pub xtol: f64,
    /// Per-coordinate offsets for the initial simplex.
    pub initial_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn new(max_iter: usize, xtol: f64, initial_step: Vec<f64>) -> Self {
        NelderMead { max_iter, xtol, initial_step }
    }

    /// Minimizes `f` from `x0`. Non-finite function values are treated as
    /// `+inf`, so infeasible regions simply repel the simplex.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        assert_eq!(self.initial_step.len(), n, "initial_step must match x0");
        let nf = n as f64;
        let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
        let rho = 0.75 - 1.0 / (2.0 * nf);
        let sigma = 1.0 - 1.0 / nf;

        let mut evals = 0usize;
        let mut eval = |x: &[f64]| {
            evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if self.initial_step[i] != 0.0 { self.initial_step[i] } else { 0.05 };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];
        loop {
            // Order vertices by value.
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| std::mem::take(&mut simplex[i])).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let size = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            if size <= self.xtol {
                converged = true;
                break;
            }
            if iterations >= self.max_iter {
                break;
            }
            iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let worst = &simplex[n];
            for k in 0..n {
                trial[k] = centroid[k] + alpha * (centroid[k] - worst[k]);
            }
            let fr = eval(&trial);

            if fr < values[0] {
                for k in 0..n {
                    trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
                }
                let fe = eval(&trial2);
                if fe < fr {
                    simplex[n].copy_from_slice(&trial2);
                    values[n] = fe;
                } else {
                    simplex[n].copy_from_slice(&trial);
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
                continue;
            }
            // Contraction, outside or inside.
            let outside = fr < values[n];
            for k in 0..n {
                trial2[k] = if outside {
                    centroid[k] + rho * (trial[k] - centroid[k])
                } else {
                    centroid[k] + rho * (simplex[n][k] - centroid[k])
                };
            }
            let fc = eval(&trial2);
            if (outside && fc <= fr) || (!outside && fc < values[n]) {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fc;
                continue;
            }
            // Shrink toward the best vertex.
            let (best, rest) = simplex.split_first_mut().expect("non-empty simplex");
            for (v, fv) in rest.iter_mut().zip(values[1..].iter_mut()) {
                for (x, b) in v.iter_mut().zip(best.iter()) {
                    *x = b + sigma * (*x - b);
                }
                *fv = eval(v);
            }
        }

        let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        Minimum { x: simplex[best].clone(), value: values[best], iterations, evaluations: evals, converged }
    }
}
