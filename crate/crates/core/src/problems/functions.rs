//! Base objective functions.
//!
//! Each function takes the shifted-and-rotated vector `z = R(x - o)` and
//! applies its own native-domain rescaling internally, following the usual
//! CEC convention for suites sampled on `[-100, 100]^dim`. All bases have
//! their global optimum at `z = 0`; the value there is exactly zero except
//! for the modified Schwefel, whose residual at the optimum is ~1e-13 and is
//! subtracted at the instance level.

use ndarray::{Array1, Array2, ArrayView1};
use std::f64::consts::{E, PI};

/// Base functions usable standalone and inside hybrids/compositions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseFn {
    BentCigar,
    Rastrigin,
    Elliptic,
    Discus,
    Ackley,
    Griewank,
    Rosenbrock,
    ModSchwefel,
    HgBat,
    HappyCat,
    SchafferF6,
    GrieRosen,
}

impl BaseFn {
    /// Evaluate on `z = R(x - o)`. Empty slices evaluate to zero so hybrid
    /// chunks may be empty at very small dimensions.
    pub fn eval(self, z: ArrayView1<'_, f64>) -> f64 {
        if z.is_empty() {
            return 0.0;
        }
        match self {
            BaseFn::BentCigar => bent_cigar(z),
            BaseFn::Rastrigin => rastrigin(z),
            BaseFn::Elliptic => elliptic(z),
            BaseFn::Discus => discus(z),
            BaseFn::Ackley => ackley(z),
            BaseFn::Griewank => griewank(z),
            BaseFn::Rosenbrock => rosenbrock(z),
            BaseFn::ModSchwefel => mod_schwefel(z),
            BaseFn::HgBat => hgbat(z),
            BaseFn::HappyCat => happycat(z),
            BaseFn::SchafferF6 => schaffer_f6(z),
            BaseFn::GrieRosen => grie_rosen(z),
        }
    }
}

fn bent_cigar(z: ArrayView1<'_, f64>) -> f64 {
    let mut f = z[0] * z[0];
    for i in 1..z.len() {
        f += 1e6 * z[i] * z[i];
    }
    f
}

fn rastrigin(z: ArrayView1<'_, f64>) -> f64 {
    z.iter()
        .map(|&v| {
            let y = v * 5.12 / 100.0;
            y * y - 10.0 * (2.0 * PI * y).cos() + 10.0
        })
        .sum()
}

fn elliptic(z: ArrayView1<'_, f64>) -> f64 {
    let d = z.len();
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let expo = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.0 };
            1e6f64.powf(expo) * v * v
        })
        .sum()
}

fn discus(z: ArrayView1<'_, f64>) -> f64 {
    let mut f = 1e6 * z[0] * z[0];
    for i in 1..z.len() {
        f += z[i] * z[i];
    }
    f
}

fn ackley(z: ArrayView1<'_, f64>) -> f64 {
    let d = z.len() as f64;
    let sum_sq: f64 = z.iter().map(|&v| v * v).sum();
    let sum_cos: f64 = z.iter().map(|&v| (2.0 * PI * v).cos()).sum();
    -20.0 * (-0.2 * (sum_sq / d).sqrt()).exp() - (sum_cos / d).exp() + 20.0 + E
}

fn griewank(z: ArrayView1<'_, f64>) -> f64 {
    let sum: f64 = z.iter().map(|&v| (v * 6.0) * (v * 6.0)).sum::<f64>() / 4000.0;
    let prod: f64 = z
        .iter()
        .enumerate()
        .map(|(i, &v)| ((v * 6.0) / ((i + 1) as f64).sqrt()).cos())
        .product();
    sum - prod + 1.0
}

fn rosenbrock(z: ArrayView1<'_, f64>) -> f64 {
    // Shift by +1 after rescaling so the optimum sits at z = 0.
    let y: Vec<f64> = z.iter().map(|&v| v * 2.048 / 100.0 + 1.0).collect();
    let mut f = 0.0;
    for i in 0..y.len().saturating_sub(1) {
        let a = y[i] * y[i] - y[i + 1];
        let b = y[i] - 1.0;
        f += 100.0 * a * a + b * b;
    }
    f
}

fn mod_schwefel(z: ArrayView1<'_, f64>) -> f64 {
    let d = z.len() as f64;
    let mut f = 418.982_887_272_433_8 * d;
    for &v in z.iter() {
        let w = v * 10.0 + 420.968_746_227_503_6;
        f -= if w.abs() <= 500.0 {
            w * w.abs().sqrt().sin()
        } else if w > 500.0 {
            let t = 500.0 - w % 500.0;
            t * t.abs().sqrt().sin() - (w - 500.0) * (w - 500.0) / (10_000.0 * d)
        } else {
            let t = (w.abs() % 500.0) - 500.0;
            t * t.abs().sqrt().sin() - (w + 500.0) * (w + 500.0) / (10_000.0 * d)
        };
    }
    f
}

fn hgbat(z: ArrayView1<'_, f64>) -> f64 {
    let d = z.len() as f64;
    let y: Vec<f64> = z.iter().map(|&v| v * 5.0 / 100.0 - 1.0).collect();
    let s2: f64 = y.iter().map(|&v| v * v).sum();
    let s1: f64 = y.iter().sum();
    (s2 * s2 - s1 * s1).abs().sqrt() + (0.5 * s2 + s1) / d + 0.5
}

fn happycat(z: ArrayView1<'_, f64>) -> f64 {
    let d = z.len() as f64;
    let y: Vec<f64> = z.iter().map(|&v| v * 5.0 / 100.0 - 1.0).collect();
    let s2: f64 = y.iter().map(|&v| v * v).sum();
    let s1: f64 = y.iter().sum();
    (s2 - d).abs().powf(0.25) + (0.5 * s2 + s1) / d + 0.5
}

fn schaffer_pair(a: f64, b: f64) -> f64 {
    let r2 = a * a + b * b;
    let s = r2.sqrt().sin();
    let denom = 1.0 + 0.001 * r2;
    0.5 + (s * s - 0.5) / (denom * denom)
}

fn schaffer_f6(z: ArrayView1<'_, f64>) -> f64 {
    let n = z.len();
    if n == 1 {
        return schaffer_pair(z[0], z[0]);
    }
    (0..n).map(|i| schaffer_pair(z[i], z[(i + 1) % n])).sum()
}

fn grie_rosen(z: ArrayView1<'_, f64>) -> f64 {
    let n = z.len();
    let y: Vec<f64> = z.iter().map(|&v| v * 5.0 / 100.0 + 1.0).collect();
    if n == 1 {
        let a = y[0] * y[0] - y[0];
        let b = y[0] - 1.0;
        let t = 100.0 * a * a + b * b;
        return t * t / 4000.0 - t.cos() + 1.0;
    }
    let mut f = 0.0;
    for i in 0..n {
        let (u, v) = (y[i], y[(i + 1) % n]);
        let a = u * u - v;
        let b = u - 1.0;
        let t = 100.0 * a * a + b * b;
        f += t * t / 4000.0 - t.cos() + 1.0;
    }
    f
}

/// Lunacek bi-Rastrigin. Needs the unrotated shifted vector `s = x - o` and
/// the rotation separately: the funnel structure is built in the shifted
/// frame and only the cosine term sees the rotation.
pub fn bi_rastrigin(s: ArrayView1<'_, f64>, rot: &Array2<f64>) -> f64 {
    let d = s.len() as f64;
    let mu0 = 2.5;
    let dd = 1.0;
    let sc = 1.0 - 1.0 / (2.0 * (d + 20.0).sqrt() - 8.2);
    let mu1 = -((mu0 * mu0 - dd) / sc).sqrt();

    let xhat: Array1<f64> = s.iter().map(|&v| 2.0 * (10.0 * v / 100.0) + mu0).collect();
    let t0: f64 = xhat.iter().map(|&v| (v - mu0) * (v - mu0)).sum();
    let t1: f64 = dd * d + sc * xhat.iter().map(|&v| (v - mu1) * (v - mu1)).sum::<f64>();
    let centered: Array1<f64> = xhat.iter().map(|&v| v - mu0).collect();
    let zr = rot.dot(&centered);
    let cos_term: f64 = zr.iter().map(|&v| (2.0 * PI * v).cos()).sum();
    t0.min(t1) + 10.0 * (d - cos_term)
}
