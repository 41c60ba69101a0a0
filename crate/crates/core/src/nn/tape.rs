//! Reverse-mode automatic differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every operation of a forward pass (including a whole
//! unrolled recurrent episode) and [`Tape::backward`] sweeps it once in
//! reverse to produce exact gradients for every node.

use super::tensor::kernels;
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Value copied from another node; blocks gradient flow.
    Detach,
    MatVec { w: Var, x: Var, cols: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddN(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    OneMinus(Var),
    Square(Var),
    Scale(Var, f64),
    Offset(Var),
    Sum(Var),
    Concat(Vec<Var>),
    Clamp { x: Var, lo: f64, hi: f64 },
    Min(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; self.lens[v.0]])
    }

    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant or parameter input.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).to_vec();
        self.push(v, Op::Detach)
    }

    /// `W x` where `W` has shape `[rows, cols]` stored row-major.
    pub fn matvec(&mut self, w: Var, x: Var, cols: usize) -> Var {
        let v = kernels::matvec(self.value(w), cols, self.value(x));
        self.push(v, Op::MatVec { w, x, cols })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = kernels::add(self.value(a), self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = kernels::mul(self.value(a), self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise sum of equally sized nodes.
    pub fn add_n(&mut self, xs: Vec<Var>) -> Var {
        let mut v = vec![0.0; xs.first().map_or(1, |x| self.value(*x).len())];
        for x in &xs {
            v.iter_mut().zip(self.value(*x)).for_each(|(a, b)| *a += b);
        }
        self.push(v, Op::AddN(xs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = kernels::map(self.value(x), kernels::sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = kernels::map(self.value(x), f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = kernels::map(self.value(x), f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let v = kernels::map(self.value(x), |a| 1.0 - a);
        self.push(v, Op::OneMinus(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = kernels::map(self.value(x), |a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = kernels::map(self.value(x), |a| a * c);
        self.push(v, Op::Scale(x, c))
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let v = kernels::map(self.value(x), |a| a + c);
        self.push(v, Op::Offset(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = vec![self.value(x).iter().sum()];
        self.push(v, Op::Sum(x))
    }

    pub fn concat(&mut self, xs: Vec<Var>) -> Var {
        let v = xs.iter().flat_map(|x| self.value(*x).iter().copied()).collect();
        self.push(v, Op::Concat(xs))
    }

    /// Clamp into `[lo, hi]`; the gradient is passed through inside the
    /// closed interval and blocked outside it.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = kernels::map(self.value(x), |a| a.clamp(lo, hi));
        self.push(v, Op::Clamp { x, lo, hi })
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x.min(*y)).collect();
        self.push(v, Op::Min(a, b))
    }

    /// Reverse sweep from the scalar node `loss`. A tape can be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::DimensionMismatch {
                context: "backward loss",
                expected: 1,
                actual: self.value(loss).len(),
            });
        }
        self.consumed = true;

        let n = self.nodes.len();
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], lens: &[usize], v: Var, f: impl Fn(usize) -> f64) {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; lens[v.0]]);
            for (i, g) in slot.iter_mut().enumerate() {
                *g += f(i);
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::MatVec { w, x, cols } => {
                    let (wv, xv) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
                    let cols = *cols;
                    let gw = grads[w.0].get_or_insert_with(|| vec![0.0; lens[w.0]]);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            row.iter_mut().zip(xv).for_each(|(a, b)| *a += gr * b);
                        }
                    }
                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; lens[x.0]]);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            let row = &wv[r * cols..(r + 1) * cols];
                            gx.iter_mut().zip(row).for_each(|(a, b)| *a += gr * b);
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &lens, *a, |i| g[i]);
                    acc(&mut grads, &lens, *b, |i| g[i]);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &lens, *a, |i| g[i]);
                    acc(&mut grads, &lens, *b, |i| -g[i]);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(&mut grads, &lens, *a, |i| g[i] * bv[i]);
                    acc(&mut grads, &lens, *b, |i| g[i] * av[i]);
                }
                Op::AddN(xs) => {
                    for x in xs {
                        acc(&mut grads, &lens, *x, |i| g[i]);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    acc(&mut grads, &lens, *x, |i| g[i] * y[i] * (1.0 - y[i]));
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    acc(&mut grads, &lens, *x, |i| g[i] * (1.0 - y[i] * y[i]));
                }
                Op::Exp(x) => {
                    let y = &node.value;
                    acc(&mut grads, &lens, *x, |i| g[i] * y[i]);
                }
                Op::OneMinus(x) => acc(&mut grads, &lens, *x, |i| -g[i]),
                Op::Square(x) => {
                    let xv = &self.nodes[x.0].value;
                    acc(&mut grads, &lens, *x, |i| 2.0 * xv[i] * g[i]);
                }
                Op::Scale(x, c) => acc(&mut grads, &lens, *x, |i| g[i] * c),
                Op::Offset(x) => acc(&mut grads, &lens, *x, |i| g[i]),
                Op::Sum(x) => acc(&mut grads, &lens, *x, |_| g[0]),
                Op::Concat(xs) => {
                    let mut start = 0;
                    for x in xs {
                        let len = lens[x.0];
                        acc(&mut grads, &lens, *x, |i| g[start + i]);
                        start += len;
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.nodes[x.0].value;
                    acc(&mut grads, &lens, *x, |i| {
                        if xv[i] >= *lo && xv[i] <= *hi {
                            g[i]
                        } else {
                            0.0
                        }
                    });
                }
                Op::Min(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(&mut grads, &lens, *a, |i| if av[i] <= bv[i] { g[i] } else { 0.0 });
                    acc(&mut grads, &lens, *b, |i| if av[i] <= bv[i] { 0.0 } else { g[i] });
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, lens })
    }
}
