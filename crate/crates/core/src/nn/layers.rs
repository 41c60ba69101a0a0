//! Dense layers and gated recurrent cells, each with a plain forward pass
//! and a taped forward pass that share the same arithmetic order.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::{Tape, Var};
use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    /// Uniform `±1/√fan_in` weights scaled by `gain`, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let mut d = Self::zeros(input, output);
        d.weight = uniform_fan_in(output, input, rng);
        d.weight.data.iter_mut().for_each(|w| *w *= gain);
        d
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("dense input", self.input_dim(), x.len())?;
        Ok(kernels::add(
            &kernels::matvec(&self.weight.data, self.input_dim(), x),
            &self.bias.data,
        ))
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn bind(&self, tape: &mut Tape) -> DenseVars {
        DenseVars {
            weight: tape.leaf(self.weight.data.clone()),
            bias: tape.leaf(self.bias.data.clone()),
            input: self.input_dim(),
        }
    }
}

/// A [`Dense`] layer's parameters placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
    input: usize,
}

impl DenseVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let wx = tape.matvec(self.weight, x, self.input);
        tape.add(wx, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// ĥ  = tanh(W_h x + U_h (r ∘ h) + b_h)
/// h' = (1 − z) ∘ h + z ∘ ĥ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

pub const GRU_TENSOR_NAMES: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];

impl GruCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Orthogonal recurrent matrices, fan-in uniform input matrices, zero
    /// biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut c = Self::zeros(input, hidden);
        c.w_z = uniform_fan_in(hidden, input, rng);
        c.w_r = uniform_fan_in(hidden, input, rng);
        c.w_h = uniform_fan_in(hidden, input, rng);
        c.u_z = orthogonal(hidden, rng);
        c.u_r = orthogonal(hidden, rng);
        c.u_h = orthogonal(hidden, rng);
        c
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_dim(), self.hidden_dim());
        for w in [&self.w_z, &self.w_r, &self.w_h] {
            check_dim("gru input weight rows", h, w.rows())?;
            check_dim("gru input weight cols", i, w.cols())?;
        }
        for u in [&self.u_z, &self.u_r, &self.u_h] {
            check_dim("gru recurrent weight", h * h, u.len())?;
        }
        for b in [&self.b_z, &self.b_r, &self.b_h] {
            check_dim("gru bias", h, b.len())?;
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("gru parameters"));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> GruVars {
        let t = self.tensors().map(|t| tape.leaf(t.data.clone()));
        GruVars {
            w_z: t[0],
            w_r: t[1],
            w_h: t[2],
            u_z: t[3],
            u_r: t[4],
            u_h: t[5],
            b_z: t[6],
            b_r: t[7],
            b_h: t[8],
            input: self.input_dim(),
            hidden: self.hidden_dim(),
        }
    }
}

/// One recurrent step `h' = GRU(x, h)`.
pub fn gru_step(cell: &GruCellParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let (ni, nh) = (cell.input_dim(), cell.hidden_dim());
    check_dim("gru input", ni, x.len())?;
    check_dim("gru hidden", nh, h.len())?;
    let gate = |w: &Tensor, u: &Tensor, b: &Tensor, hh: &[f64]| {
        let wx = kernels::matvec(&w.data, ni, x);
        let uh = kernels::matvec(&u.data, nh, hh);
        kernels::add(&kernels::add(&wx, &uh), &b.data)
    };
    let z = kernels::map(&gate(&cell.w_z, &cell.u_z, &cell.b_z, h), kernels::sigmoid);
    let r = kernels::map(&gate(&cell.w_r, &cell.u_r, &cell.b_r, h), kernels::sigmoid);
    let rh = kernels::mul(&r, h);
    let cand = kernels::map(&gate(&cell.w_h, &cell.u_h, &cell.b_h, &rh), f64::tanh);
    let keep = kernels::map(&z, |a| 1.0 - a);
    Ok(kernels::add(&kernels::mul(&keep, h), &kernels::mul(&z, &cand)))
}

/// A [`GruCellParams`] placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
    input: usize,
    hidden: usize,
}

impl GruVars {
    pub fn vars(&self) -> [Var; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h,
        ]
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let (ni, nh) = (self.input, self.hidden);
        let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, hh: Var| {
            let wx = tape.matvec(w, x, ni);
            let uh = tape.matvec(u, hh, nh);
            let s = tape.add(wx, uh);
            tape.add(s, b)
        };
        let za = gate(tape, self.w_z, self.u_z, self.b_z, h);
        let z = tape.sigmoid(za);
        let ra = gate(tape, self.w_r, self.u_r, self.b_r, h);
        let r = tape.sigmoid(ra);
        let rh = tape.mul(r, h);
        let ca = gate(tape, self.w_h, self.u_h, self.b_h, rh);
        let cand = tape.tanh(ca);
        let keep = tape.one_minus(z);
        let kept = tape.mul(keep, h);
        let new = tape.mul(z, cand);
        tape.add(kept, new)
    }
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

pub(crate) fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(&[rows, cols], data)
}

/// Random orthogonal matrix via Gram-Schmidt on Gaussian rows.
pub(crate) fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for q in &rows {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    Tensor::from_vec(&[n, n], rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_halves_hidden() {
        let cell = GruCellParams::zeros(3, 4);
        let h = vec![0.8, -0.4, 0.2, 1.0];
        let out = gru_step(&cell, &[1.0, -2.0, 0.5], &h).unwrap();
        for (o, hi) in out.iter().zip(&h) {
            assert!((o - 0.5 * hi).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCellParams::init(3, 8, &mut rng);
        let out = gru_step(&cell, &[0.0; 3], &[0.0; 8]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cell = GruCellParams::zeros(3, 4);
        assert!(gru_step(&cell, &[0.0; 2], &[0.0; 4]).is_err());
        assert!(gru_step(&cell, &[0.0; 3], &[0.0; 5]).is_err());
        assert!(Dense::zeros(3, 2).forward(&[1.0]).is_err());
    }

    #[test]
    fn hidden_bounded_by_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut cell = GruCellParams::init(4, 6, &mut rng);
            for t in cell.tensors_mut() {
                t.data.iter_mut().for_each(|v| *v *= 3.0);
            }
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = gru_step(&cell, &x, &h).unwrap();
            for (o, hi) in out.iter().zip(&h) {
                assert!(o.abs() <= hi.abs().max(1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn taped_step_matches_plain_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = GruCellParams::init(5, 7, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let vars = cell.bind(&mut tape);
        let (xv, hv) = (tape.leaf(x.clone()), tape.leaf(h.clone()));
        let out = vars.step(&mut tape, xv, hv);
        assert_eq!(tape.value(out), gru_step(&cell, &x, &h).unwrap().as_slice());
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = orthogonal(16, &mut rng);
        for i in 0..16 {
            for j in 0..16 {
                let d: f64 = (0..16).map(|k| q.data[i * 16 + k] * q.data[j * 16 + k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }
}
