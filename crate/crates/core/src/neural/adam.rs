use super::lstm::{Gradients, LstmNetwork};

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Zero moments sized for `net`, with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(net: &LstmNetwork) -> Self {
        let shapes: Vec<Vec<f64>> =
            Gradients::zeros_like(net).named().iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: shapes.clone(), v: shapes }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut LstmNetwork, grads: &Gradients, learning_rate: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let named = grads.named();
        for (((_, params), (_, g)), (m, v)) in
            net.named_params_mut().into_iter().zip(named).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..params.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                params[k] -= learning_rate * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::NetworkConfig;

    fn net() -> LstmNetwork {
        let mut c = NetworkConfig::desk().with_uniform_layers(1, 3, crate::neural::Activation::Tanh, 0.0);
        c.seed = 5;
        LstmNetwork::new(c, 2).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut n = net();
        let before = n.clone();
        let mut adam = Adam::new(&n);
        let g = Gradients::zeros_like(&n);
        for _ in 0..5 {
            adam.step(&mut n, &g, 0.01);
        }
        assert_eq!(n, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut n = net();
        let before = n.clone();
        let mut adam = Adam::new(&n);
        let mut g = Gradients::zeros_like(&n);
        for (k, v) in g.layers[0].u.iter_mut().enumerate() {
            *v = if k % 2 == 0 { 0.3 } else { -2.0 };
        }
        g.dense_b = 1e-3;
        adam.step(&mut n, &g, 0.01);
        for (k, (a, b)) in n.layers[0].u.iter().zip(&before.layers[0].u).enumerate() {
            let expected = if k % 2 == 0 { -0.01 } else { 0.01 };
            assert!((a - b - expected).abs() < 1e-6);
        }
        assert!((n.dense.b - before.dense.b + 0.01).abs() < 1e-6);
        assert_eq!(n.layers[0].v, before.layers[0].v);
    }

    #[test]
    fn identical_streams_stay_identical() {
        let (mut a, mut b) = (net(), net());
        let (mut oa, mut ob) = (Adam::new(&a), Adam::new(&b));
        let mut g = Gradients::zeros_like(&a);
        for step in 0..20 {
            for (k, v) in g.layers[0].v.iter_mut().enumerate() {
                *v = ((step * 31 + k * 7) % 11) as f64 - 5.0;
            }
            oa.step(&mut a, &g, 0.003);
            ob.step(&mut b, &g, 0.003);
        }
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }
}
