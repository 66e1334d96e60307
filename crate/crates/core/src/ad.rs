//! Minimal reverse-mode automatic differentiation over `f64` scalars,
//! vectors, and matrices.
//!
//! A [`Tape`] records a topologically ordered list of operations; calling
//! [`Tape::backward`] on a scalar root accumulates gradients for every node.
//! The op set is exactly what the recurrent policy and its losses need —
//! this is not a general tensor library.

use std::rc::Rc;

use ndarray::{Array1, Array2};

/// Value stored at a tape node.
#[derive(Clone, Debug)]
pub enum Value {
    S(f64),
    V(Array1<f64>),
    M(Array2<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> f64 {
        match self {
            Value::S(s) => *s,
            _ => panic!("expected scalar value"),
        }
    }

    pub fn as_vector(&self) -> &Array1<f64> {
        match self {
            Value::V(v) => v,
            _ => panic!("expected vector value"),
        }
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        match self {
            Value::M(m) => m,
            _ => panic!("expected matrix value"),
        }
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// y = M v
    MatVec { m: Var, v: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    /// Elementwise product (scalar*scalar or vector*vector).
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    AddConst { a: Var },
    Sigmoid { a: Var },
    Tanh { a: Var },
    Concat { a: Var, b: Var },
    Dot { a: Var, b: Var },
    Index { a: Var, i: usize },
    Exp { a: Var },
    Neg { a: Var },
    /// min(a, b); ties route the gradient to `a`.
    Min2 { a: Var, b: Var },
    Sqr { a: Var },
    /// clamp(a, lo, hi); gradient passes iff lo <= a <= hi.
    Clamp { a: Var, lo: f64, hi: f64 },
    Sum { items: Vec<Var> },
    /// log-softmax over the unmasked entries; masked entries are -inf.
    LogSoftmaxMasked { logits: Var, mask: Rc<Vec<bool>> },
    /// H = -sum_i p_i log p_i over unmasked entries of a log-prob vector.
    EntropyFromLogProbs { lp: Var, mask: Rc<Vec<bool>> },
    /// KL(p || q) = sum_i p_i (lp_i - lq_i) with q a constant log-prob vector.
    KlFromLogProbs { lp: Var, lq: Rc<Array1<f64>>, mask: Rc<Vec<bool>> },
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Value>>,
}

impl Grads {
    /// Gradient of the root with respect to `v`; zero-shaped if unused.
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.grads[v.0].as_ref()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        match self.get(v) {
            Some(Value::S(s)) => *s,
            None => 0.0,
            _ => panic!("expected scalar gradient"),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    vals: Vec<Value>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn push(&mut self, v: Value, op: Op) -> Var {
        self.vals.push(v);
        self.ops.push(op);
        Var(self.vals.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.vals[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.vals[v.0].as_scalar()
    }

    pub fn vector(&self, v: Var) -> &Array1<f64> {
        self.vals[v.0].as_vector()
    }

    // ---- leaves ----

    pub fn scalar_leaf(&mut self, c: f64) -> Var {
        self.push(Value::S(c), Op::Leaf)
    }

    pub fn vector_leaf(&mut self, v: Array1<f64>) -> Var {
        self.push(Value::V(v), Op::Leaf)
    }

    pub fn matrix_leaf(&mut self, m: Array2<f64>) -> Var {
        self.push(Value::M(m), Op::Leaf)
    }

    // ---- ops ----

    pub fn matvec(&mut self, m: Var, v: Var) -> Var {
        let y = self.vals[m.0].as_matrix().dot(self.vals[v.0].as_vector());
        self.push(Value::V(y), Op::MatVec { m, v })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = match (&self.vals[a.0], &self.vals[b.0]) {
            (Value::S(x), Value::S(z)) => Value::S(x + z),
            (Value::V(x), Value::V(z)) => Value::V(x + z),
            _ => panic!("add: shape mismatch"),
        };
        self.push(y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = match (&self.vals[a.0], &self.vals[b.0]) {
            (Value::S(x), Value::S(z)) => Value::S(x - z),
            (Value::V(x), Value::V(z)) => Value::V(x - z),
            _ => panic!("sub: shape mismatch"),
        };
        self.push(y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = match (&self.vals[a.0], &self.vals[b.0]) {
            (Value::S(x), Value::S(z)) => Value::S(x * z),
            (Value::V(x), Value::V(z)) => Value::V(x * z),
            _ => panic!("mul: shape mismatch"),
        };
        self.push(y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = match &self.vals[a.0] {
            Value::S(x) => Value::S(x * c),
            Value::V(x) => Value::V(x * c),
            Value::M(_) => panic!("scale: matrix unsupported"),
        };
        self.push(y, Op::Scale { a, c })
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let y = Value::S(self.vals[a.0].as_scalar() + c);
        self.push(y, Op::AddConst { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].as_vector().mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Value::V(y), Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].as_vector().mapv(f64::tanh);
        self.push(Value::V(y), Op::Tanh { a })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let x = self.vals[a.0].as_vector();
        let z = self.vals[b.0].as_vector();
        let mut y = Array1::zeros(x.len() + z.len());
        y.slice_mut(ndarray::s![..x.len()]).assign(x);
        y.slice_mut(ndarray::s![x.len()..]).assign(z);
        self.push(Value::V(y), Op::Concat { a, b })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let y = self.vals[a.0].as_vector().dot(self.vals[b.0].as_vector());
        self.push(Value::S(y), Op::Dot { a, b })
    }

    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let y = self.vals[a.0].as_vector()[i];
        self.push(Value::S(y), Op::Index { a, i })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.vals[a.0].as_scalar().exp();
        self.push(Value::S(y), Op::Exp { a })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let y = match &self.vals[a.0] {
            Value::S(x) => Value::S(-x),
            Value::V(x) => Value::V(-x),
            Value::M(_) => panic!("neg: matrix unsupported"),
        };
        self.push(y, Op::Neg { a })
    }

    pub fn min2(&mut self, a: Var, b: Var) -> Var {
        let y = self.vals[a.0].as_scalar().min(self.vals[b.0].as_scalar());
        self.push(Value::S(y), Op::Min2 { a, b })
    }

    pub fn sqr(&mut self, a: Var) -> Var {
        let x = self.vals[a.0].as_scalar();
        self.push(Value::S(x * x), Op::Sqr { a })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let y = self.vals[a.0].as_scalar().clamp(lo, hi);
        self.push(Value::S(y), Op::Clamp { a, lo, hi })
    }

    pub fn sum(&mut self, items: Vec<Var>) -> Var {
        let y: f64 = items.iter().map(|v| self.vals[v.0].as_scalar()).sum();
        self.push(Value::S(y), Op::Sum { items })
    }

    pub fn mean(&mut self, items: Vec<Var>) -> Var {
        let n = items.len();
        assert!(n > 0, "mean of empty list");
        let s = self.sum(items);
        self.scale(s, 1.0 / n as f64)
    }

    /// Masked log-softmax. Masked-out entries come back as `-inf` and carry
    /// no gradient; at least one entry must be legal.
    pub fn log_softmax_masked(&mut self, logits: Var, mask: Rc<Vec<bool>>) -> Var {
        let x = self.vals[logits.0].as_vector();
        assert_eq!(x.len(), mask.len(), "mask length mismatch");
        let mx = x
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(mx.is_finite(), "log_softmax_masked: empty mask support");
        let lse = mx
            + x.iter()
                .zip(mask.iter())
                .filter(|(_, &m)| m)
                .map(|(v, _)| (v - mx).exp())
                .sum::<f64>()
                .ln();
        let y = Array1::from_iter(
            x.iter()
                .zip(mask.iter())
                .map(|(v, &m)| if m { v - lse } else { f64::NEG_INFINITY }),
        );
        self.push(Value::V(y), Op::LogSoftmaxMasked { logits, mask })
    }

    /// Entropy of the categorical encoded by a masked log-prob vector.
    pub fn entropy_from_log_probs(&mut self, lp: Var, mask: Rc<Vec<bool>>) -> Var {
        let l = self.vals[lp.0].as_vector();
        let h = -l
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.exp() * v)
            .sum::<f64>();
        self.push(Value::S(h), Op::EntropyFromLogProbs { lp, mask })
    }

    /// KL(p || q) with p from the differentiable log-prob vector `lp` and q a
    /// constant log-prob vector. Both must share support (the same mask).
    pub fn kl_from_log_probs(&mut self, lp: Var, lq: Rc<Array1<f64>>, mask: Rc<Vec<bool>>) -> Var {
        let l = self.vals[lp.0].as_vector();
        assert_eq!(l.len(), lq.len(), "kl: length mismatch");
        let k = l
            .iter()
            .zip(lq.iter())
            .zip(mask.iter())
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| a.exp() * (a - b))
            .sum::<f64>();
        self.push(Value::S(k), Op::KlFromLogProbs { lp, lq, mask })
    }

    // ---- backward ----

    /// Reverse pass from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: Var) -> Grads {
        let mut grads: Vec<Option<Value>> = vec![None; self.vals.len()];
        grads[root.0] = Some(Value::S(1.0));

        for idx in (0..=root.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Leaf => {
                    grads[idx] = Some(gy);
                    continue;
                }
                Op::MatVec { m, v } => {
                    let g = match &gy {
                        Value::V(g) => g,
                        _ => unreachable!(),
                    };
                    let x = self.vals[v.0].as_vector();
                    let w = self.vals[m.0].as_matrix();
                    let gv = w.t().dot(g);
                    // Rank-1 update in place; the outer-product temporary
                    // would dominate allocation during BPTT.
                    let gm_slot = &mut grads[m.0];
                    if gm_slot.is_none() {
                        *gm_slot = Some(Value::M(Array2::zeros((w.nrows(), w.ncols()))));
                    }
                    if let Some(Value::M(gm)) = gm_slot {
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            let mut row = gm.row_mut(i);
                            for (j, xj) in x.iter().enumerate() {
                                row[j] += gi * xj;
                            }
                        }
                    }
                    self.accum(&mut grads, *v, Value::V(gv));
                }
                Op::Add { a, b } => {
                    self.accum(&mut grads, *a, gy.clone());
                    self.accum(&mut grads, *b, gy.clone());
                }
                Op::Sub { a, b } => {
                    self.accum(&mut grads, *a, gy.clone());
                    self.accum(&mut grads, *b, neg_value(&gy));
                }
                Op::Mul { a, b } => {
                    let ga = mul_value(&gy, &self.vals[b.0]);
                    let gb = mul_value(&gy, &self.vals[a.0]);
                    self.accum(&mut grads, *a, ga);
                    self.accum(&mut grads, *b, gb);
                }
                Op::Scale { a, c } => {
                    self.accum(&mut grads, *a, scale_value(&gy, *c));
                }
                Op::AddConst { a } => {
                    self.accum(&mut grads, *a, gy.clone());
                }
                Op::Sigmoid { a } => {
                    let y = self.vals[idx].as_vector();
                    let g = match &gy {
                        Value::V(g) => g,
                        _ => unreachable!(),
                    };
                    let ga = g * &(y * &y.mapv(|s| 1.0 - s));
                    self.accum(&mut grads, *a, Value::V(ga));
                }
                Op::Tanh { a } => {
                    let y = self.vals[idx].as_vector();
                    let g = match &gy {
                        Value::V(g) => g,
                        _ => unreachable!(),
                    };
                    let ga = g * &y.mapv(|t| 1.0 - t * t);
                    self.accum(&mut grads, *a, Value::V(ga));
                }
                Op::Concat { a, b } => {
                    let g = match &gy {
                        Value::V(g) => g,
                        _ => unreachable!(),
                    };
                    let na = self.vals[a.0].as_vector().len();
                    let ga = g.slice(ndarray::s![..na]).to_owned();
                    let gb = g.slice(ndarray::s![na..]).to_owned();
                    self.accum(&mut grads, *a, Value::V(ga));
                    self.accum(&mut grads, *b, Value::V(gb));
                }
                Op::Dot { a, b } => {
                    let g = gy.as_scalar();
                    let ga = self.vals[b.0].as_vector() * g;
                    let gb = self.vals[a.0].as_vector() * g;
                    self.accum(&mut grads, *a, Value::V(ga));
                    self.accum(&mut grads, *b, Value::V(gb));
                }
                Op::Index { a, i } => {
                    let mut ga = Array1::zeros(self.vals[a.0].as_vector().len());
                    ga[*i] = gy.as_scalar();
                    self.accum(&mut grads, *a, Value::V(ga));
                }
                Op::Exp { a } => {
                    let ga = gy.as_scalar() * self.vals[idx].as_scalar();
                    self.accum(&mut grads, *a, Value::S(ga));
                }
                Op::Neg { a } => {
                    self.accum(&mut grads, *a, neg_value(&gy));
                }
                Op::Min2 { a, b } => {
                    let xa = self.vals[a.0].as_scalar();
                    let xb = self.vals[b.0].as_scalar();
                    if xa <= xb {
                        self.accum(&mut grads, *a, gy.clone());
                    } else {
                        self.accum(&mut grads, *b, gy.clone());
                    }
                }
                Op::Sqr { a } => {
                    let ga = 2.0 * self.vals[a.0].as_scalar() * gy.as_scalar();
                    self.accum(&mut grads, *a, Value::S(ga));
                }
                Op::Clamp { a, lo, hi } => {
                    let x = self.vals[a.0].as_scalar();
                    if x >= *lo && x <= *hi {
                        self.accum(&mut grads, *a, gy.clone());
                    }
                }
                Op::Sum { items } => {
                    for it in items {
                        self.accum(&mut grads, *it, gy.clone());
                    }
                }
                Op::LogSoftmaxMasked { logits, mask } => {
                    let g = match &gy {
                        Value::V(g) => g,
                        _ => unreachable!(),
                    };
                    let y = self.vals[idx].as_vector();
                    let gsum: f64 = g
                        .iter()
                        .zip(mask.iter())
                        .filter(|(_, &m)| m)
                        .map(|(v, _)| *v)
                        .sum();
                    let ga = Array1::from_iter(y.iter().zip(g.iter()).zip(mask.iter()).map(
                        |((lp, gi), &m)| {
                            if m {
                                gi - lp.exp() * gsum
                            } else {
                                0.0
                            }
                        },
                    ));
                    self.accum(&mut grads, *logits, Value::V(ga));
                }
                Op::EntropyFromLogProbs { lp, mask } => {
                    let g = gy.as_scalar();
                    let l = self.vals[lp.0].as_vector();
                    let ga = Array1::from_iter(l.iter().zip(mask.iter()).map(|(v, &m)| {
                        if m {
                            -g * v.exp() * (v + 1.0)
                        } else {
                            0.0
                        }
                    }));
                    self.accum(&mut grads, *lp, Value::V(ga));
                }
                Op::KlFromLogProbs { lp, lq, mask } => {
                    let g = gy.as_scalar();
                    let l = self.vals[lp.0].as_vector();
                    let ga = Array1::from_iter(l.iter().zip(lq.iter()).zip(mask.iter()).map(
                        |((a, b), &m)| {
                            if m {
                                g * a.exp() * (a - b + 1.0)
                            } else {
                                0.0
                            }
                        },
                    ));
                    self.accum(&mut grads, *lp, Value::V(ga));
                }
            }
        }
        Grads { grads }
    }

    fn accum(&self, grads: &mut [Option<Value>], v: Var, g: Value) {
        match &mut grads[v.0] {
            Some(existing) => add_into(existing, &g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn neg_value(v: &Value) -> Value {
    match v {
        Value::S(s) => Value::S(-s),
        Value::V(a) => Value::V(-a),
        Value::M(m) => Value::M(-m),
    }
}

fn scale_value(v: &Value, c: f64) -> Value {
    match v {
        Value::S(s) => Value::S(s * c),
        Value::V(a) => Value::V(a * c),
        Value::M(m) => Value::M(m * c),
    }
}

fn mul_value(g: &Value, other: &Value) -> Value {
    match (g, other) {
        (Value::S(a), Value::S(b)) => Value::S(a * b),
        (Value::V(a), Value::V(b)) => Value::V(a * b),
        _ => panic!("mul_value: shape mismatch"),
    }
}

fn add_into(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::S(a), Value::S(b)) => *a += b,
        (Value::V(a), Value::V(b)) => *a += b,
        (Value::M(a), Value::M(b)) => *a += b,
        _ => panic!("add_into: shape mismatch"),
    }
}
