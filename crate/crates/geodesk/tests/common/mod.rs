//! Shared test support: an independent finite-difference oracle for the
//! connection and curvature, plus a seeded random-metric generator.
//!
//! The oracle evaluates metric component ASTs with a plain recursive `f64`
//! evaluator (no jets anywhere) and differentiates by central differences,
//! so it shares no derivative code path with the engine it checks.

#![allow(dead_code)]

use geodesk::expr::{parse, BinOp, Expr, Func};
use geodesk::geometry::MetricField;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------------------
// Plain f64 expression evaluation (independent of the jet path)
// ---------------------------------------------------------------------------

pub fn eval_f64(e: &Expr, coords: &[String], point: &[f64]) -> f64 {
    match e {
        Expr::Num(v) => *v,
        Expr::Coord(name) => {
            let idx = coords.iter().position(|c| c == name).expect("bound coord");
            point[idx]
        }
        Expr::Neg(inner) => -eval_f64(inner, coords, point),
        Expr::Bin(op, lhs, rhs) => {
            let a = eval_f64(lhs, coords, point);
            let b = eval_f64(rhs, coords, point);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
        Expr::Pow(base, exp) => eval_f64(base, coords, point).powf(*exp),
        Expr::Call(func, arg) => {
            let v = eval_f64(arg, coords, point);
            match func {
                Func::Exp => v.exp(),
                Func::Log => v.ln(),
                Func::Sqrt => v.sqrt(),
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Tan => v.tan(),
            }
        }
    }
}

/// Central first difference.
pub fn fd1(f: &dyn Fn(&[f64]) -> f64, point: &[f64], var: usize, h: f64) -> f64 {
    let mut plus = point.to_vec();
    let mut minus = point.to_vec();
    plus[var] += h;
    minus[var] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Central second difference (same or mixed variables).
pub fn fd2(f: &dyn Fn(&[f64]) -> f64, point: &[f64], i: usize, j: usize, h: f64) -> f64 {
    if i == j {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - 2.0 * f(point) + f(&minus)) / (h * h)
    } else {
        let mut pp = point.to_vec();
        let mut pm = point.to_vec();
        let mut mp = point.to_vec();
        let mut mm = point.to_vec();
        pp[i] += h;
        pp[j] += h;
        pm[i] += h;
        pm[j] -= h;
        mp[i] -= h;
        mp[j] += h;
        mm[i] -= h;
        mm[j] -= h;
        (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h)
    }
}

/// Third partial by nesting a central difference over `fd2`.
pub fn fd3(
    f: &dyn Fn(&[f64]) -> f64,
    point: &[f64],
    i: usize,
    j: usize,
    k: usize,
    h: f64,
) -> f64 {
    let inner = |p: &[f64]| fd2(f, p, j, k, h);
    let mut plus = point.to_vec();
    let mut minus = point.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (inner(&plus) - inner(&minus)) / (2.0 * h)
}

// ---------------------------------------------------------------------------
// FD oracle for the connection and curvature
// ---------------------------------------------------------------------------

/// Metric given as parsed component ASTs; everything evaluated with the
/// plain evaluator above.
pub struct OracleMetric {
    pub dim: usize,
    pub coords: Vec<String>,
    pub comps: Vec<Expr>,
}

impl OracleMetric {
    pub fn from_strings(coords: &[&str], comps: &[&str]) -> OracleMetric {
        let dim = coords.len();
        assert_eq!(comps.len(), dim * dim);
        OracleMetric {
            dim,
            coords: coords.iter().map(|s| s.to_string()).collect(),
            comps: comps.iter().map(|s| parse(s).expect("oracle metric")).collect(),
        }
    }

    pub fn value(&self, point: &[f64], i: usize, j: usize) -> f64 {
        eval_f64(&self.comps[i * self.dim + j], &self.coords, point)
    }

    pub fn matrix(&self, point: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i * self.dim + j] = self.value(point, i, j);
            }
        }
        out
    }

    /// Engine-side field with the same component expressions.
    pub fn engine_field(&self) -> MetricField {
        let comps = self
            .comps
            .iter()
            .map(|e| e.bind(&self.coords).expect("bind oracle metric"))
            .collect();
        MetricField {
            dim: self.dim,
            comps,
        }
    }
}

/// Gauss-Jordan inverse, local to the oracle.
pub fn invert(n: usize, a: &[f64]) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        assert!(m[pivot * n + col].abs() > 1e-12, "oracle metric singular");
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row * n + col];
                for k in 0..n {
                    m[row * n + k] -= f * m[col * n + k];
                    inv[row * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

/// `Gamma^k_ij` by finite differences of the metric components.
pub fn christoffel_fd(metric: &OracleMetric, point: &[f64], h: f64) -> Vec<f64> {
    let dim = metric.dim;
    let ginv = invert(dim, &metric.matrix(point));
    // dg[l][i][j] = d_l g_ij
    let mut dg = vec![0.0; dim * dim * dim];
    for l in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                let f = |p: &[f64]| metric.value(p, i, j);
                dg[(l * dim + i) * dim + j] = fd1(&f, point, l, h);
            }
        }
    }
    let mut gamma = vec![0.0; dim * dim * dim];
    for k in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for l in 0..dim {
                    acc += ginv[k * dim + l]
                        * (dg[(i * dim + j) * dim + l] + dg[(j * dim + i) * dim + l]
                            - dg[(l * dim + i) * dim + j]);
                }
                gamma[(k * dim + i) * dim + j] = 0.5 * acc;
            }
        }
    }
    gamma
}

/// `R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma Gamma - Gamma Gamma`,
/// with the Christoffel derivative taken by an outer central difference.
pub fn riemann_fd(metric: &OracleMetric, point: &[f64], h_outer: f64, h_inner: f64) -> Vec<f64> {
    let dim = metric.dim;
    let gamma = christoffel_fd(metric, point, h_inner);
    // dgamma[m][k][i][j] = d_m Gamma^k_ij
    let mut dgamma = vec![0.0; dim * dim * dim * dim];
    for m in 0..dim {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[m] += h_outer;
        minus[m] -= h_outer;
        let gp = christoffel_fd(metric, &plus, h_inner);
        let gm = christoffel_fd(metric, &minus, h_inner);
        for t in 0..dim * dim * dim {
            dgamma[m * dim * dim * dim + t] = (gp[t] - gm[t]) / (2.0 * h_outer);
        }
    }
    let ga = |k: usize, i: usize, j: usize| gamma[(k * dim + i) * dim + j];
    let dga =
        |m: usize, k: usize, i: usize, j: usize| dgamma[((m * dim + k) * dim + i) * dim + j];
    let mut riem = vec![0.0; dim * dim * dim * dim];
    for l in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let mut acc = dga(i, l, j, k) - dga(j, l, i, k);
                    for m in 0..dim {
                        acc += ga(l, i, m) * ga(m, j, k) - ga(l, j, m) * ga(m, i, k);
                    }
                    riem[((l * dim + i) * dim + j) * dim + k] = acc;
                }
            }
        }
    }
    riem
}

// ---------------------------------------------------------------------------
// Random analytic metrics
// ---------------------------------------------------------------------------

pub const COORD_NAMES: [&str; 4] = ["x", "y", "z", "w"];

/// Seeded positive-definite random metric with analytic components on
/// `[-1, 1]^dim`: diagonally dominant, so invertible on the whole box.
pub fn random_metric(seed: u64, dim: usize) -> OracleMetric {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let coords: Vec<&str> = COORD_NAMES[..dim].to_vec();
    let mut comps = vec![String::new(); dim * dim];
    let mut rnd = |lo: f64, hi: f64| format!("{:.4}", rng.gen_range(lo..hi));
    for i in 0..dim {
        for j in i..dim {
            let u = coords[(i + j) % dim];
            let v = coords[(i + 1) % dim];
            let text = if i == j {
                format!(
                    "1.2+{}*sin({}*{}+{})+{}*{}*{}",
                    rnd(0.1, 0.3),
                    rnd(0.4, 1.1),
                    u,
                    rnd(-1.0, 1.0),
                    rnd(0.02, 0.1),
                    v,
                    v
                )
            } else {
                format!(
                    "{}*cos({}*{}+{}*{})",
                    rnd(0.02, 0.08),
                    rnd(0.4, 1.0),
                    u,
                    rnd(0.4, 1.0),
                    v
                )
            };
            comps[i * dim + j] = text.clone();
            comps[j * dim + i] = text;
        }
    }
    let refs: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
    OracleMetric::from_strings(&coords, &refs)
}

/// Seeded points in `[-0.8, 0.8]^dim`.
pub fn random_points(seed: u64, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect())
        .collect()
}

pub fn assert_rel_close(got: f64, want: f64, rel: f64, floor: f64, what: &str) {
    let diff = (got - want).abs();
    let tol = floor + rel * want.abs().max(got.abs());
    assert!(
        diff <= tol,
        "{what}: got {got}, want {want}, diff {diff} > tol {tol}"
    );
}
