use crate::nn::Parameterized;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<M: Parameterized>(&mut self, params: &mut M, grads: &M) {
        let grads = grads.tensors();
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i].data);
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Tensor};

    #[derive(Clone)]
    struct Quad(Dense);

    impl Parameterized for Quad {
        fn named_tensors(&self) -> Vec<(String, &Tensor)> {
            let [w, b] = self.0.tensors();
            vec![("w".into(), w), ("b".into(), b)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            self.0.tensors_mut().into_iter().collect()
        }
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = Quad(Dense::zeros(2, 1));
        p.0.weight.data = vec![3.0, -2.0];
        p.0.bias.data = vec![1.0];
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let mut g = p.clone();
            g.scale(2.0);
            opt.step(&mut p, &g);
        }
        assert!(p.global_norm() < 1e-3);
    }
}
