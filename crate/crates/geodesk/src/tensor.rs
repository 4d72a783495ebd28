//! Jet-valued tensors at a point, small dense linear algebra, and
//! orthonormal frames for residual norms.
//!
//! Dimensions stay at four or below, so everything here is dense, flat
//! `Vec` storage with row-major index arithmetic.

use crate::jet::Jet;

/// A tensor of valence `(up, down)` at a single point, with jet components.
///
/// Component layout is row-major over `up + down` slots, contravariant
/// slots first. For a `(1,1)` operator `M`, `comps[a*dim + b]` is the
/// coefficient of `∂_a` in `M(∂_b)`.
#[derive(Debug, Clone)]
pub struct PointTensor {
    pub up: usize,
    pub down: usize,
    pub dim: usize,
    pub comps: Vec<Jet>,
}

impl PointTensor {
    pub fn new(up: usize, down: usize, dim: usize, comps: Vec<Jet>) -> Self {
        assert_eq!(comps.len(), dim.pow((up + down) as u32));
        PointTensor {
            up,
            down,
            dim,
            comps,
        }
    }

    pub fn zeros(up: usize, down: usize, dim: usize, nvars: usize, order: usize) -> Self {
        let len = dim.pow((up + down) as u32);
        PointTensor::new(up, down, dim, vec![Jet::constant(0.0, nvars, order); len])
    }

    pub fn rank(&self) -> usize {
        self.up + self.down
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], jet: Jet) {
        let f = self.flat(idx);
        self.comps[f] = jet;
    }

    pub fn order(&self) -> usize {
        self.comps[0].order()
    }

    pub fn truncated(&self, order: usize) -> PointTensor {
        PointTensor {
            up: self.up,
            down: self.down,
            dim: self.dim,
            comps: self.comps.iter().map(|j| j.truncate(order)).collect(),
        }
    }

    pub fn values(&self) -> ValueTensor {
        ValueTensor {
            up: self.up,
            down: self.down,
            dim: self.dim,
            comps: self.comps.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn sub(&self, other: &PointTensor) -> PointTensor {
        assert_eq!((self.up, self.down), (other.up, other.down));
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a - b)
            .collect();
        PointTensor::new(self.up, self.down, self.dim, comps)
    }

    pub fn add(&self, other: &PointTensor) -> PointTensor {
        assert_eq!((self.up, self.down), (other.up, other.down));
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a + b)
            .collect();
        PointTensor::new(self.up, self.down, self.dim, comps)
    }

    pub fn scale(&self, factor: f64) -> PointTensor {
        PointTensor {
            up: self.up,
            down: self.down,
            dim: self.dim,
            comps: self.comps.iter().map(|j| j.scale(factor)).collect(),
        }
    }
}

/// Plain `f64` tensor components at a point.
#[derive(Debug, Clone)]
pub struct ValueTensor {
    pub up: usize,
    pub down: usize,
    pub dim: usize,
    pub comps: Vec<f64>,
}

impl ValueTensor {
    pub fn new(up: usize, down: usize, dim: usize, comps: Vec<f64>) -> Self {
        assert_eq!(comps.len(), dim.pow((up + down) as u32));
        ValueTensor {
            up,
            down,
            dim,
            comps,
        }
    }

    pub fn rank(&self) -> usize {
        self.up + self.down
    }

    pub fn sub(&self, other: &ValueTensor) -> ValueTensor {
        assert_eq!((self.up, self.down), (other.up, other.down));
        ValueTensor {
            up: self.up,
            down: self.down,
            dim: self.dim,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

// ---------------------------------------------------------------------------
// Dense f64 linear algebra (dim <= 4)
// ---------------------------------------------------------------------------

/// Inverts an `n x n` matrix by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` when a pivot collapses below `1e-13` of the
/// largest entry.
pub fn invert_f64(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let scale = a.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if m[pivot * n + col].abs() < 1e-13 * scale {
            return None;
        }
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
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[row * n + k] -= f * m[col * n + k];
                inv[row * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Some(inv)
}

/// Solves a symmetric 2x2 system; `None` when the determinant is tiny
/// relative to the entries.
pub fn solve_sym_2x2(s11: f64, s12: f64, s22: f64, t1: f64, t2: f64) -> Option<(f64, f64)> {
    let det = s11 * s22 - s12 * s12;
    let scale = s11.abs().max(s22.abs()).max(s12.abs()).max(1e-300);
    if det.abs() < 1e-12 * scale * scale {
        return None;
    }
    Some(((t1 * s22 - t2 * s12) / det, (t2 * s11 - t1 * s12) / det))
}

// ---------------------------------------------------------------------------
// Jet-valued matrices
// ---------------------------------------------------------------------------

pub fn mat_mul_jets(n: usize, a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    let nvars = a[0].nvars();
    let order = a[0].order();
    let mut out = vec![Jet::constant(0.0, nvars, order); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::constant(0.0, nvars, order);
            for k in 0..n {
                acc = acc + &a[i * n + k] * &b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Jet-valued matrix inverse: invert the value part numerically, then push
/// the series through `G^{-1} = (sum_k (-G0^{-1} dG)^k) G0^{-1}`, truncated
/// at the jet order.
pub fn invert_jet_matrix(n: usize, g: &[Jet]) -> Option<Vec<Jet>> {
    let nvars = g[0].nvars();
    let order = g[0].order();
    let g0: Vec<f64> = g.iter().map(|j| j.value()).collect();
    let g0inv = invert_f64(n, &g0)?;
    // M = -G0^{-1} (G - G0); entries have zero value part.
    let mut m = vec![Jet::constant(0.0, nvars, order); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::constant(0.0, nvars, order);
            for k in 0..n {
                let mut dg = g[k * n + j].clone();
                let dgv = dg.value();
                dg = dg.try_sub(&Jet::constant(dgv, nvars, order)).expect("shape");
                acc = acc + dg.scale(-g0inv[i * n + k]);
            }
            m[i * n + j] = acc;
        }
    }
    // S = I + M + M^2 + ... via Horner: S = I + M*S.
    let identity: Vec<Jet> = (0..n * n)
        .map(|p| Jet::constant(if p % (n + 1) == 0 { 1.0 } else { 0.0 }, nvars, order))
        .collect();
    let mut s = identity.clone();
    for _ in 0..order {
        let ms = mat_mul_jets(n, &m, &s);
        s = identity
            .iter()
            .zip(&ms)
            .map(|(i, x)| i + x)
            .collect();
    }
    // G^{-1} = S * G0^{-1}.
    let mut out = vec![Jet::constant(0.0, nvars, order); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::constant(0.0, nvars, order);
            for k in 0..n {
                acc = acc + s[i * n + k].scale(g0inv[k * n + j]);
            }
            out[i * n + j] = acc;
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Orthonormal frames
// ---------------------------------------------------------------------------

/// An orthonormal frame at a point: `g(f_i, f_j) = eps_i delta_ij`.
///
/// Residual tensors are expressed in frame components before taking
/// max-norms so that tolerances do not depend on coordinate conditioning.
#[derive(Debug, Clone)]
pub struct Frame {
    pub dim: usize,
    /// `vectors[k]` is the k-th frame vector in coordinates.
    pub vectors: Vec<Vec<f64>>,
    /// `eps[k] = g(f_k, f_k)`, each +1 or -1.
    pub eps: Vec<f64>,
    /// Dual covectors: `duals[k][a] = eps_k * (g f_k)_a`, so
    /// `duals[k] . f_j = delta_kj`.
    pub duals: Vec<Vec<f64>>,
}

impl Frame {
    /// Gram-Schmidt on the coordinate basis against the metric values.
    /// Works for Riemannian and Lorentzian signatures as long as no basis
    /// vector degenerates against the part already built.
    pub fn orthonormalize(dim: usize, gval: &[f64]) -> Option<Frame> {
        let ip = |u: &[f64], v: &[f64]| -> f64 {
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    s += gval[a * dim + b] * u[a] * v[b];
                }
            }
            s
        };
        let scale = gval.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut eps = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            for j in 0..vectors.len() {
                let c = eps[j] * ip(&vectors[j], &v);
                for a in 0..dim {
                    v[a] -= c * vectors[j][a];
                }
            }
            let q = ip(&v, &v);
            if q.abs() < 1e-10 * scale {
                return None;
            }
            let e = q.signum();
            let norm = q.abs().sqrt();
            for a in v.iter_mut() {
                *a /= norm;
            }
            eps.push(e);
            vectors.push(v);
        }
        Some(Frame::with_vectors(dim, gval, vectors, eps))
    }

    /// Frame from declared vectors; eps is read off from `g(f_k, f_k)`.
    pub fn from_vectors(dim: usize, gval: &[f64], vectors: Vec<Vec<f64>>) -> Frame {
        let ip = |u: &[f64], v: &[f64]| -> f64 {
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    s += gval[a * dim + b] * u[a] * v[b];
                }
            }
            s
        };
        let eps: Vec<f64> = vectors.iter().map(|v| ip(v, v).signum()).collect();
        Frame::with_vectors(dim, gval, vectors, eps)
    }

    fn with_vectors(dim: usize, gval: &[f64], vectors: Vec<Vec<f64>>, eps: Vec<f64>) -> Frame {
        let mut duals = Vec::with_capacity(dim);
        for (k, v) in vectors.iter().enumerate() {
            let mut theta = vec![0.0; dim];
            for a in 0..dim {
                for b in 0..dim {
                    theta[a] += eps[k] * gval[a * dim + b] * v[b];
                }
            }
            duals.push(theta);
        }
        Frame {
            dim,
            vectors,
            eps,
            duals,
        }
    }

    /// Expresses a value tensor in frame components: contravariant slots
    /// contract with dual covectors, covariant slots with frame vectors.
    pub fn components(&self, t: &ValueTensor) -> Vec<f64> {
        let rank = t.rank();
        let dim = self.dim;
        let total = dim.pow(rank as u32);
        let mut out = vec![0.0; total];
        let mut fidx = vec![0usize; rank];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut rem = o;
            for r in (0..rank).rev() {
                fidx[r] = rem % dim;
                rem /= dim;
            }
            let mut acc = 0.0;
            let mut cidx = vec![0usize; rank];
            for c in 0..dim.pow(rank as u32) {
                let mut rem = c;
                for r in (0..rank).rev() {
                    cidx[r] = rem % dim;
                    rem /= dim;
                }
                let mut w = t.comps[c];
                if w == 0.0 {
                    continue;
                }
                for r in 0..rank {
                    w *= if r < t.up {
                        self.duals[fidx[r]][cidx[r]]
                    } else {
                        self.vectors[fidx[r]][cidx[r]]
                    };
                }
                acc += w;
            }
            *slot = acc;
        }
        out
    }

    /// Max absolute frame component of a value tensor.
    pub fn max_norm(&self, t: &ValueTensor) -> f64 {
        self.components(t)
            .iter()
            .fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Frame components of a coordinate vector (scalars have rank 0 and
    /// pass through unchanged).
    pub fn vector_components(&self, v: &[f64]) -> Vec<f64> {
        self.duals
            .iter()
            .map(|theta| theta.iter().zip(v).map(|(t, x)| t * x).sum())
            .collect()
    }
}

/// Residual measurement shared by all checks: a raw max-norm together with
/// the `1 + max input magnitude` scale it should be divided by.
#[derive(Debug, Clone, Copy)]
pub struct PointResidual {
    pub raw: f64,
    pub scale: f64,
}

impl PointResidual {
    pub fn new(raw: f64, input_magnitude: f64) -> Self {
        PointResidual {
            raw,
            scale: 1.0 + input_magnitude,
        }
    }

    pub fn scaled(&self) -> f64 {
        self.raw / self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;
    use approx::assert_relative_eq;

    #[test]
    fn f64_inverse_roundtrip() {
        let a = vec![2.0, 1.0, 0.5, 1.0, 3.0, 0.0, 0.5, 0.0, 1.5];
        let inv = invert_f64(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(s, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(invert_f64(2, &a).is_none());
    }

    #[test]
    fn jet_matrix_inverse_roundtrip() {
        // g = [[1+x^2, x*y], [x*y, 2+y^2]] at (0.3, -0.7), order 2.
        let x = Jet::variable(0, 0.3, 2, 2).unwrap();
        let y = Jet::variable(1, -0.7, 2, 2).unwrap();
        let one = Jet::constant(1.0, 2, 2);
        let two = Jet::constant(2.0, 2, 2);
        let g = vec![
            &one + &(&x * &x),
            &x * &y,
            &x * &y,
            &two + &(&y * &y),
        ];
        let ginv = invert_jet_matrix(2, &g).unwrap();
        let prod = mat_mul_jets(2, &g, &ginv);
        for (p, jet) in prod.iter().enumerate() {
            let want = if p % 3 == 0 { 1.0 } else { 0.0 };
            assert_relative_eq!(jet.value(), want, epsilon = 1e-13);
            for c in &jet.coeffs()[1..] {
                assert!(c.abs() < 1e-12, "identity has stray coefficient {c}");
            }
        }
    }

    #[test]
    fn gram_schmidt_lorentzian() {
        // Minkowski metric: coordinate basis is already orthonormal.
        let g = vec![
            -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let frame = Frame::orthonormalize(3, &g).unwrap();
        assert_eq!(frame.eps, vec![-1.0, 1.0, 1.0]);
        for k in 0..3 {
            for j in 0..3 {
                let d: f64 = frame.duals[k].iter().zip(&frame.vectors[j]).map(|(a, b)| a * b).sum();
                let want = if k == j { 1.0 } else { 0.0 };
                assert_relative_eq!(d, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frame_components_identity_metric() {
        let g = vec![1.0, 0.0, 0.0, 1.0];
        let frame = Frame::orthonormalize(2, &g).unwrap();
        let t = ValueTensor::new(0, 2, 2, vec![1.0, 2.0, 2.0, 5.0]);
        let comps = frame.components(&t);
        assert_eq!(comps, vec![1.0, 2.0, 2.0, 5.0]);
        assert_relative_eq!(frame.max_norm(&t), 5.0);
    }
}
