//! Benchmark problem categories, task sampling, and objective bookkeeping.
//!
//! A task is a distribution over shifted/rotated instances of one function
//! category; sampling an instance draws the function id uniformly within the
//! category, an offset `z ~ U[-80, 80]^dim`, and a Haar-random rotation.
//! Instances are normalized so the global optimum value is exactly 0.

pub mod functions;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use functions::{bi_rastrigin, BaseFn};

/// The four benchmark function categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    UniModal,
    Basic,
    Hybrid,
    Composition,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::UniModal,
        Category::Basic,
        Category::Hybrid,
        Category::Composition,
    ];

    /// Function ids belonging to the category.
    pub fn function_ids(self) -> &'static [u8] {
        match self {
            Category::UniModal => &[1],
            Category::Basic => &[2, 3, 4],
            Category::Hybrid => &[5, 6, 7],
            Category::Composition => &[8, 9, 10],
        }
    }

    pub fn of_function(id: u8) -> Option<Category> {
        match id {
            1 => Some(Category::UniModal),
            2..=4 => Some(Category::Basic),
            5..=7 => Some(Category::Hybrid),
            8..=10 => Some(Category::Composition),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Category::UniModal => "uni_modal",
            Category::Basic => "basic",
            Category::Hybrid => "hybrid",
            Category::Composition => "composition",
        }
    }

    pub fn from_tag(s: &str) -> Option<Category> {
        match s {
            "uni_modal" | "U" | "u" => Some(Category::UniModal),
            "basic" | "B" | "b" => Some(Category::Basic),
            "hybrid" | "H" | "h" => Some(Category::Hybrid),
            "composition" | "C" | "c" => Some(Category::Composition),
            _ => None,
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A problem distribution: one or more categories plus the shared instance
/// geometry. Plain tasks hold a single category; the all-task regime uses
/// the union of all four (which makes the function id uniform over 1..=10).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskSpec {
    pub categories: Vec<Category>,
    pub dim: usize,
    pub bounds: (f64, f64),
    pub offset_low: f64,
    pub offset_high: f64,
    pub fe_budget: u64,
}

impl TaskSpec {
    pub fn single(category: Category, dim: usize, bounds: (f64, f64), fe_budget: u64) -> Self {
        TaskSpec {
            categories: vec![category],
            dim,
            bounds,
            offset_low: -80.0,
            offset_high: 80.0,
            fe_budget,
        }
    }

    pub fn all_categories(dim: usize, bounds: (f64, f64), fe_budget: u64) -> Self {
        TaskSpec {
            categories: Category::ALL.to_vec(),
            dim,
            bounds,
            offset_low: -80.0,
            offset_high: 80.0,
            fe_budget,
        }
    }

    /// Union of member function ids, ascending.
    pub fn function_ids(&self) -> Vec<u8> {
        let mut ids: Vec<u8> = self
            .categories
            .iter()
            .flat_map(|c| c.function_ids().iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::config("task has no categories"));
        }
        if self.dim == 0 {
            return Err(Error::config("task dimension must be positive"));
        }
        if self.bounds.0 >= self.bounds.1 {
            return Err(Error::config("task bounds are empty"));
        }
        if self.offset_low > self.offset_high {
            return Err(Error::config("offset range is empty"));
        }
        Ok(())
    }
}

/// Hybrid chunk proportions per function id.
fn hybrid_proportions(id: u8) -> &'static [f64] {
    match id {
        5 => &[0.3, 0.3, 0.4],
        6 => &[0.2, 0.2, 0.3, 0.3],
        7 => &[0.1, 0.2, 0.2, 0.2, 0.3],
        _ => unreachable!("not a hybrid id"),
    }
}

fn hybrid_parts(id: u8) -> &'static [BaseFn] {
    match id {
        5 => &[BaseFn::ModSchwefel, BaseFn::Rastrigin, BaseFn::Elliptic],
        6 => &[
            BaseFn::SchafferF6,
            BaseFn::HgBat,
            BaseFn::Rosenbrock,
            BaseFn::ModSchwefel,
        ],
        7 => &[
            BaseFn::SchafferF6,
            BaseFn::HgBat,
            BaseFn::Rosenbrock,
            BaseFn::ModSchwefel,
            BaseFn::Elliptic,
        ],
        _ => unreachable!("not a hybrid id"),
    }
}

/// Composition component recipes: (base, sigma, lambda, bias).
fn composition_parts(id: u8) -> &'static [(BaseFn, f64, f64, f64)] {
    match id {
        8 => &[
            (BaseFn::Rosenbrock, 10.0, 1.0, 0.0),
            (BaseFn::Elliptic, 20.0, 1e-6, 100.0),
            (BaseFn::Rastrigin, 30.0, 1.0, 200.0),
        ],
        9 => &[
            (BaseFn::Rastrigin, 10.0, 1.0, 0.0),
            (BaseFn::Griewank, 20.0, 10.0, 100.0),
            (BaseFn::ModSchwefel, 30.0, 1.0, 200.0),
            (BaseFn::Ackley, 40.0, 10.0, 300.0),
        ],
        10 => &[
            (BaseFn::Rastrigin, 10.0, 1.0, 0.0),
            (BaseFn::HappyCat, 20.0, 1.0, 100.0),
            (BaseFn::Ackley, 30.0, 10.0, 200.0),
            (BaseFn::Discus, 40.0, 1e-6, 300.0),
            (BaseFn::Rosenbrock, 50.0, 1.0, 400.0),
        ],
        _ => unreachable!("not a composition id"),
    }
}

/// Split `dim` variables into chunks following `props` by largest remainder;
/// when `dim >= props.len()` every chunk gets at least one variable.
pub fn chunk_sizes(props: &[f64], dim: usize) -> Vec<usize> {
    let n = props.len();
    let mut sizes: Vec<usize> = props.iter().map(|p| (p * dim as f64).floor() as usize).collect();
    let mut frac: Vec<(usize, f64)> = props
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p * dim as f64 - sizes[i] as f64))
        .collect();
    frac.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut rem = dim - sizes.iter().sum::<usize>();
    let mut cursor = 0;
    while rem > 0 {
        sizes[frac[cursor % n].0] += 1;
        cursor += 1;
        rem -= 1;
    }
    if dim >= n {
        while let Some(zero) = sizes.iter().position(|&s| s == 0) {
            let donor = sizes
                .iter()
                .enumerate()
                .max_by_key(|(_, &s)| s)
                .map(|(i, _)| i)
                .unwrap();
            if sizes[donor] < 2 {
                break;
            }
            sizes[donor] -= 1;
            sizes[zero] += 1;
        }
    }
    sizes
}

#[derive(Clone, Debug)]
struct CompComponent {
    base: BaseFn,
    shift: Array1<f64>,
    rotation: Array2<f64>,
    sigma: f64,
    lambda: f64,
    bias: f64,
}

#[derive(Clone, Debug)]
enum InstanceKind {
    /// ids 1..=4
    Simple,
    /// ids 5..=7: variable permutation plus per-chunk bases
    Hybrid {
        perm: Vec<usize>,
        sizes: Vec<usize>,
        parts: &'static [BaseFn],
    },
    /// ids 8..=10: Gaussian-weighted mixture; component 0 carries the
    /// instance offset/rotation and owns the global optimum
    Composition { comps: Vec<CompComponent> },
}

/// A concrete sampled problem: shifted/rotated function with an evaluation
/// budget. The learner's evaluations are counted against `fe_budget`; guide
/// (shadow) evaluations are tracked separately and never charged.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub function_id: u8,
    pub category: Category,
    pub dim: usize,
    pub bounds: (f64, f64),
    pub offset: Array1<f64>,
    pub rotation: Array2<f64>,
    pub f_opt: f64,
    pub fe_budget: u64,
    evals: u64,
    shadow_evals: u64,
    kind: InstanceKind,
    opt_raw: f64,
}

impl ProblemInstance {
    /// Build an instance from explicit parts. Hybrid permutations and extra
    /// composition components are drawn from `rng`.
    pub fn new(
        function_id: u8,
        dim: usize,
        bounds: (f64, f64),
        offset: Array1<f64>,
        rotation: Array2<f64>,
        fe_budget: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let category = Category::of_function(function_id)
            .ok_or_else(|| Error::config(format!("unknown function id {function_id}")))?;
        assert_eq!(offset.len(), dim);
        assert_eq!(rotation.nrows(), dim);
        assert_eq!(rotation.ncols(), dim);

        let kind = match category {
            Category::UniModal | Category::Basic => InstanceKind::Simple,
            Category::Hybrid => {
                let mut perm: Vec<usize> = (0..dim).collect();
                // Fisher-Yates
                for i in (1..dim).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                InstanceKind::Hybrid {
                    perm,
                    sizes: chunk_sizes(hybrid_proportions(function_id), dim),
                    parts: hybrid_parts(function_id),
                }
            }
            Category::Composition => {
                let mut comps = Vec::new();
                for (i, &(base, sigma, lambda, bias)) in
                    composition_parts(function_id).iter().enumerate()
                {
                    let (shift, rot) = if i == 0 {
                        (offset.clone(), rotation.clone())
                    } else {
                        let s = Array1::from_shape_fn(dim, |_| rng.gen_range(-80.0..=80.0));
                        (s, random_rotation(dim, rng))
                    };
                    comps.push(CompComponent {
                        base,
                        shift,
                        rotation: rot,
                        sigma,
                        lambda,
                        bias,
                    });
                }
                InstanceKind::Composition { comps }
            }
        };

        let mut inst = ProblemInstance {
            function_id,
            category,
            dim,
            bounds,
            offset,
            rotation,
            f_opt: 0.0,
            fe_budget,
            evals: 0,
            shadow_evals: 0,
            kind,
            opt_raw: 0.0,
        };
        inst.opt_raw = inst.raw(inst.offset.clone().view());
        Ok(inst)
    }

    /// Raw objective before the optimum-value correction; no counting.
    fn raw(&self, x: ArrayView1<'_, f64>) -> f64 {
        let s = &x.to_owned() - &self.offset;
        match &self.kind {
            InstanceKind::Simple => {
                let z = self.rotation.dot(&s);
                match self.function_id {
                    1 => BaseFn::BentCigar.eval(z.view()),
                    2 => BaseFn::ModSchwefel.eval(z.view()),
                    3 => bi_rastrigin(s.view(), &self.rotation),
                    4 => BaseFn::GrieRosen.eval(z.view()),
                    _ => unreachable!(),
                }
            }
            InstanceKind::Hybrid { perm, sizes, parts } => {
                let z = self.rotation.dot(&s);
                let permuted: Array1<f64> = perm.iter().map(|&j| z[j]).collect();
                let mut f = 0.0;
                let mut start = 0;
                for (&size, base) in sizes.iter().zip(parts.iter()) {
                    let chunk = permuted.slice(ndarray::s![start..start + size]);
                    f += base.eval(chunk);
                    start += size;
                }
                f
            }
            InstanceKind::Composition { comps } => {
                let weights = composition_weights(comps, x);
                let mut f = 0.0;
                for (w, c) in weights.iter().zip(comps.iter()) {
                    if *w == 0.0 {
                        continue;
                    }
                    let sc = &x.to_owned() - &c.shift;
                    let zc = c.rotation.dot(&sc);
                    f += w * (c.lambda * c.base.eval(zc.view()) + c.bias);
                }
                f
            }
        }
    }

    /// Counted learner evaluation. Errors once the budget is exhausted.
    pub fn evaluate(&mut self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if self.evals >= self.fe_budget {
            return Err(Error::BudgetExhausted {
                used: self.evals,
                budget: self.fe_budget,
            });
        }
        self.evals += 1;
        Ok(self.raw(x) - self.opt_raw)
    }

    /// Uncharged evaluation for the guide's reward-side population; tracked
    /// in a separate counter.
    pub fn evaluate_shadow(&mut self, x: ArrayView1<'_, f64>) -> f64 {
        self.shadow_evals += 1;
        self.raw(x) - self.opt_raw
    }

    pub fn evals_used(&self) -> u64 {
        self.evals
    }

    pub fn shadow_evals_used(&self) -> u64 {
        self.shadow_evals
    }

    pub fn remaining_budget(&self) -> u64 {
        self.fe_budget - self.evals
    }

    #[cfg(test)]
    pub(crate) fn kind_for_test(&self) -> (&'static str, Option<(Vec<usize>, usize)>) {
        match &self.kind {
            InstanceKind::Simple => ("simple", None),
            InstanceKind::Hybrid { sizes, perm, .. } => {
                ("hybrid", Some((sizes.clone(), perm.len())))
            }
            InstanceKind::Composition { comps } => ("composition", Some((vec![], comps.len()))),
        }
    }

    #[cfg(test)]
    pub(crate) fn composition_weights_for_test(&self, x: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
        match &self.kind {
            InstanceKind::Composition { comps } => Some(composition_weights(comps, x)),
            _ => None,
        }
    }
}

/// Normalized mixture weights; finite, non-negative, summing to 1. A point
/// exactly on a component shift gets that component's full weight.
fn composition_weights(comps: &[CompComponent], x: ArrayView1<'_, f64>) -> Vec<f64> {
    let d = x.len() as f64;
    let mut raw = Vec::with_capacity(comps.len());
    for c in comps {
        let dist2: f64 = x
            .iter()
            .zip(c.shift.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist2 == 0.0 {
            let mut w = vec![0.0; comps.len()];
            w[raw.len()] = 1.0;
            return w;
        }
        raw.push((1.0 / dist2.sqrt()) * (-dist2 / (2.0 * d * c.sigma * c.sigma)).exp());
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return vec![1.0 / comps.len() as f64; comps.len()];
    }
    raw.iter().map(|w| w / total).collect()
}

/// Sample a fresh instance: uniform function id within the task's
/// categories, offset `U[offset_low, offset_high]^dim`, Haar rotation.
pub fn sample_problem(task: &TaskSpec, rng: &mut impl Rng) -> Result<ProblemInstance> {
    task.validate()?;
    let ids = task.function_ids();
    let id = ids[rng.gen_range(0..ids.len())];
    let offset =
        Array1::from_shape_fn(task.dim, |_| rng.gen_range(task.offset_low..=task.offset_high));
    let rotation = random_rotation(task.dim, rng);
    ProblemInstance::new(id, task.dim, task.bounds, offset, rotation, task.fe_budget, rng)
}

/// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
/// matrix with the R-diagonal sign correction.
pub fn random_rotation(dim: usize, rng: &mut impl Rng) -> Array2<f64> {
    assert!(dim >= 1);
    let a = Array2::from_shape_fn((dim, dim), |_| standard_normal(rng));
    let (q, r) = householder_qr(a);
    let mut q = q;
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// One standard normal draw via Box-Muller (consumes exactly two uniforms).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Householder QR of a square matrix; returns (Q, R).
fn householder_qr(a: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut r = a;
    let mut q = Array2::<f64>::eye(n);
    for k in 0..n {
        let mut v = Array1::<f64>::zeros(n - k);
        for i in k..n {
            v[i - k] = r[(i, k)];
        }
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * norm;
        let vnorm2 = v.dot(&v);
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- H R, applied to rows k.., columns k..
        for col in k..n {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * r[(i, col)];
            }
            let coef = 2.0 * dot / vnorm2;
            for i in k..n {
                r[(i, col)] -= coef * v[i - k];
            }
        }
        // Q <- Q H, applied to columns k..
        for row in 0..n {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * q[(row, i)];
            }
            let coef = 2.0 * dot / vnorm2;
            for i in k..n {
                q[(row, i)] -= coef * v[i - k];
            }
        }
    }
    (q, r)
}

/// Linear objective normalization: `(f_worst - f) / (f_worst - f_opt)`;
/// larger is better, 1 at the optimum, 0 at the pool's worst value.
pub fn normalize_objective(f: f64, f_worst: f64, f_opt: f64) -> Result<f64> {
    if f_worst <= f_opt {
        return Err(Error::DegenerateRange { f_worst, f_opt });
    }
    Ok((f_worst - f) / (f_worst - f_opt))
}
