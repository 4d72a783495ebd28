//! Chart-level Riemannian/Lorentzian operators evaluated pointwise from jets.
//!
//! Conventions, fixed once and used everywhere:
//!
//! * Curvature operator: `K(E,F) = [nabla_E, nabla_F] - nabla_[E,F]`.
//! * Storage: `R^l_ijk` means `K(d_i, d_j) d_k = R^l_ijk d_l`, i.e.
//!   `R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik
//!            + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik`.
//! * Lowered components: `R_ijkl = g(K(d_k, d_l) d_j, d_i) = g_im R^m_klj`,
//!   which makes the unit 2-sphere come out with `R_theta,phi,theta,phi =
//!   sin^2(theta) > 0`.
//! * Ricci: `Ric(F,G) = trace(E -> K(E,F)G)`, i.e. `Ric_jk = R^l_ljk`;
//!   `Q = g^{-1} Ric`; the scalar curvature is the trace of `Q` (the
//!   signature weights enter through the inverse metric).
//!
//! A [`PointGeometry`] bundles the metric jets, inverse, Christoffel
//! symbols and curvature at one point. Everything it returns is jet-valued
//! so that derived quantities (the Ricci operator, gradients) can be
//! covariantly differentiated again without symbolic work: a jet of order
//! `k` still carries `k` exact derivative orders of the quantity it
//! represents.

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError};
use crate::jet::Jet;
use crate::tensor::{invert_jet_matrix, Frame, PointResidual, PointTensor, ValueTensor};

#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("metric is singular at the evaluation point")]
    SingularMetric,
    #[error("jet order {have} too low: {what} needs base order >= {need}")]
    InsufficientOrder {
        what: &'static str,
        need: usize,
        have: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("form is not antisymmetric at the evaluation point (residual {0:.3e})")]
    NotAntisymmetric(f64),
    #[error("coordinate frame degenerates against the metric at the evaluation point")]
    DegenerateFrame,
    #[error("metric signature mismatch: {found_minus} negative directions, chart declares {want_minus}")]
    SignatureMismatch {
        found_minus: usize,
        want_minus: usize,
    },
}

/// Coordinate chart: dimension, coordinate names, domain predicate
/// (a list of expressions required to be positive) and metric signature.
#[derive(Debug, Clone)]
pub struct Chart {
    pub dim: usize,
    pub coords: Vec<String>,
    pub domain: Vec<CompiledExpr>,
    /// One entry per orthonormal-frame slot, each +1.0 or -1.0.
    pub signature: Vec<f64>,
}

impl Chart {
    pub fn is_lorentzian(&self) -> bool {
        self.signature.iter().any(|&e| e < 0.0)
    }

    pub fn minus_count(&self) -> usize {
        self.signature.iter().filter(|&&e| e < 0.0).count()
    }
}

/// Symmetric matrix of metric component expressions.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub dim: usize,
    /// Row-major `dim x dim`, symmetric.
    pub comps: Vec<CompiledExpr>,
}

impl MetricField {
    pub fn eval(&self, point: &[f64], order: usize) -> Result<Vec<Jet>, EvalError> {
        self.comps
            .iter()
            .map(|c| c.eval_jet(point, order))
            .collect()
    }
}

/// Tensor field with expression components, evaluated to jets on demand.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub up: usize,
    pub down: usize,
    pub dim: usize,
    pub comps: Vec<CompiledExpr>,
}

impl TensorField {
    pub fn new(up: usize, down: usize, dim: usize, comps: Vec<CompiledExpr>) -> Self {
        assert_eq!(comps.len(), dim.pow((up + down) as u32));
        TensorField {
            up,
            down,
            dim,
            comps,
        }
    }

    pub fn eval(&self, point: &[f64], order: usize) -> Result<PointTensor, EvalError> {
        let comps: Result<Vec<Jet>, EvalError> = self
            .comps
            .iter()
            .map(|c| c.eval_jet(point, order))
            .collect();
        Ok(PointTensor::new(self.up, self.down, self.dim, comps?))
    }
}

/// All metric-derived jets at one point.
#[derive(Debug)]
pub struct PointGeometry {
    pub dim: usize,
    /// Base jet order the metric was evaluated at.
    pub order: usize,
    pub point: Vec<f64>,
    /// Metric components, order `B`.
    pub g: Vec<Jet>,
    /// Inverse metric, order `B`.
    pub ginv: Vec<Jet>,
    /// Christoffel symbols `Gamma^k_ij` at `gamma[(k*dim + i)*dim + j]`, order `B-1`.
    pub gamma: Vec<Jet>,
    riem: Option<Vec<Jet>>,
    ric: Option<Vec<Jet>>,
    q: Option<Vec<Jet>>,
    tau: Option<Jet>,
}

impl PointGeometry {
    pub fn new(metric: &MetricField, point: &[f64], order: usize) -> Result<Self, GeometryError> {
        let dim = metric.dim;
        if order < 1 {
            return Err(GeometryError::InsufficientOrder {
                what: "the Levi-Civita connection",
                need: 1,
                have: order,
            });
        }
        let g = metric.eval(point, order)?;
        let ginv = invert_jet_matrix(dim, &g).ok_or(GeometryError::SingularMetric)?;

        // Gamma^k_ij = (1/2) g^{kl} (d_i g_jl + d_j g_il - d_l g_ij), order B-1.
        let co = order - 1;
        let ginv_t: Vec<Jet> = ginv.iter().map(|j| j.truncate(co)).collect();
        let dg = |i: usize, j: usize, k: usize| g[j * dim + k].derivative(i);
        let mut gamma = vec![Jet::constant(0.0, dim, co); dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in i..dim {
                    let mut acc = Jet::constant(0.0, dim, co);
                    for l in 0..dim {
                        let sym = dg(i, j, l) + dg(j, i, l) - dg(l, i, j);
                        acc = acc + &ginv_t[k * dim + l] * &sym;
                    }
                    let acc = acc.scale(0.5);
                    gamma[(k * dim + i) * dim + j] = acc.clone();
                    gamma[(k * dim + j) * dim + i] = acc;
                }
            }
        }

        let mut pg = PointGeometry {
            dim,
            order,
            point: point.to_vec(),
            g,
            ginv,
            gamma,
            riem: None,
            ric: None,
            q: None,
            tau: None,
        };
        if order >= 2 {
            pg.compute_curvature();
        }
        Ok(pg)
    }

    fn compute_curvature(&mut self) {
        let dim = self.dim;
        let ro = self.order - 2;
        let ga = |k: usize, i: usize, j: usize| &self.gamma[(k * dim + i) * dim + j];
        let gat: Vec<Jet> = self.gamma.iter().map(|j| j.truncate(ro)).collect();
        let gt = |k: usize, i: usize, j: usize| &gat[(k * dim + i) * dim + j];

        let mut riem = vec![Jet::constant(0.0, dim, ro); dim * dim * dim * dim];
        for l in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let mut acc = ga(l, j, k).derivative(i) - ga(l, i, k).derivative(j);
                        for m in 0..dim {
                            acc = acc + gt(l, i, m) * gt(m, j, k) - gt(l, j, m) * gt(m, i, k);
                        }
                        riem[((l * dim + i) * dim + j) * dim + k] = acc;
                    }
                }
            }
        }
        let mut ric = vec![Jet::constant(0.0, dim, ro); dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                let mut acc = Jet::constant(0.0, dim, ro);
                for l in 0..dim {
                    acc = acc + &riem[((l * dim + l) * dim + j) * dim + k];
                }
                ric[j * dim + k] = acc;
            }
        }
        let ginv_t: Vec<Jet> = self.ginv.iter().map(|j| j.truncate(ro)).collect();
        let mut q = vec![Jet::constant(0.0, dim, ro); dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                let mut acc = Jet::constant(0.0, dim, ro);
                for m in 0..dim {
                    acc = acc + &ginv_t[a * dim + m] * &ric[m * dim + b];
                }
                q[a * dim + b] = acc;
            }
        }
        let mut tau = Jet::constant(0.0, dim, ro);
        for a in 0..dim {
            tau = tau + &q[a * dim + a];
        }
        self.riem = Some(riem);
        self.ric = Some(ric);
        self.q = Some(q);
        self.tau = Some(tau);
    }

    fn need_curvature(&self, what: &'static str) -> Result<(), GeometryError> {
        if self.riem.is_none() {
            return Err(GeometryError::InsufficientOrder {
                what,
                need: 2,
                have: self.order,
            });
        }
        Ok(())
    }

    /// `R^l_ijk` jets (order `B-2`).
    pub fn riemann(&self) -> Result<&[Jet], GeometryError> {
        self.need_curvature("the curvature tensor")?;
        Ok(self.riem.as_deref().unwrap())
    }

    /// Ricci tensor `Ric_jk` jets.
    pub fn ricci(&self) -> Result<&[Jet], GeometryError> {
        self.need_curvature("the Ricci tensor")?;
        Ok(self.ric.as_deref().unwrap())
    }

    /// Ricci operator `Q^a_b` jets.
    pub fn ricci_operator(&self) -> Result<&[Jet], GeometryError> {
        self.need_curvature("the Ricci operator")?;
        Ok(self.q.as_deref().unwrap())
    }

    /// Scalar curvature jet.
    pub fn scalar_curvature(&self) -> Result<&Jet, GeometryError> {
        self.need_curvature("the scalar curvature")?;
        Ok(self.tau.as_ref().unwrap())
    }

    pub fn christoffel_values(&self) -> Vec<f64> {
        self.gamma.iter().map(|j| j.value()).collect()
    }

    pub fn riemann_values(&self) -> Result<Vec<f64>, GeometryError> {
        Ok(self.riemann()?.iter().map(|j| j.value()).collect())
    }

    pub fn ricci_values(&self) -> Result<Vec<f64>, GeometryError> {
        Ok(self.ricci()?.iter().map(|j| j.value()).collect())
    }

    pub fn metric_values(&self) -> Vec<f64> {
        self.g.iter().map(|j| j.value()).collect()
    }

    /// Lowered curvature `R_ijkl = g_im R^m_klj` (see module docs).
    pub fn lowered_riemann_values(&self) -> Result<Vec<f64>, GeometryError> {
        let dim = self.dim;
        let riem = self.riemann()?;
        let gv = self.metric_values();
        let mut out = vec![0.0; dim * dim * dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        let mut acc = 0.0;
                        for m in 0..dim {
                            acc += gv[i * dim + m]
                                * riem[((m * dim + k) * dim + l) * dim + j].value();
                        }
                        out[((i * dim + j) * dim + k) * dim + l] = acc;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Orthonormal frame by Gram-Schmidt on the coordinate basis.
    pub fn orthonormal_frame(&self) -> Result<Frame, GeometryError> {
        Frame::orthonormalize(self.dim, &self.metric_values())
            .ok_or(GeometryError::DegenerateFrame)
    }

    /// Verifies the pointwise signature against the chart's declaration.
    pub fn check_signature(&self, chart: &Chart) -> Result<(), GeometryError> {
        let frame = self.orthonormal_frame()?;
        let found_minus = frame.eps.iter().filter(|&&e| e < 0.0).count();
        let want_minus = chart.minus_count();
        if found_minus != want_minus {
            return Err(GeometryError::SignatureMismatch {
                found_minus,
                want_minus,
            });
        }
        Ok(())
    }

    /// Gradient vector `(D omega)^i = g^{ij} d_j omega` (order of `omega` minus one).
    pub fn gradient(&self, omega: &Jet) -> Result<Vec<Jet>, GeometryError> {
        if omega.order() < 1 {
            return Err(GeometryError::InsufficientOrder {
                what: "the gradient",
                need: 1,
                have: omega.order(),
            });
        }
        let dim = self.dim;
        let go = omega.order() - 1;
        let ginv_t: Vec<Jet> = self.ginv.iter().map(|j| j.truncate(go)).collect();
        let domega: Vec<Jet> = (0..dim).map(|i| omega.derivative(i).truncate(go)).collect();
        Ok((0..dim)
            .map(|i| {
                let mut acc = Jet::constant(0.0, dim, go);
                for j in 0..dim {
                    acc = acc + &ginv_t[i * dim + j] * &domega[j];
                }
                acc
            })
            .collect())
    }

    /// Hessian `(nabla d omega)_ij = d_i d_j omega - Gamma^m_ij d_m omega`.
    pub fn hessian(&self, omega: &Jet) -> Result<Vec<Jet>, GeometryError> {
        if omega.order() < 2 {
            return Err(GeometryError::InsufficientOrder {
                what: "the Hessian",
                need: 2,
                have: omega.order(),
            });
        }
        let dim = self.dim;
        let ho = omega.order().min(self.order) - 2;
        let domega: Vec<Jet> = (0..dim).map(|i| omega.derivative(i)).collect();
        let mut out = vec![Jet::constant(0.0, dim, ho); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let mut acc = domega[j].derivative(i).truncate(ho);
                for m in 0..dim {
                    acc = acc
                        - self.gamma[(m * dim + i) * dim + j].truncate(ho)
                            * domega[m].truncate(ho);
                }
                out[i * dim + j] = acc.clone();
                out[j * dim + i] = acc;
            }
        }
        Ok(out)
    }

    /// Trace of the Hessian with respect to `g`. The opposite sign
    /// convention (`-div D`) is this value negated; callers report both.
    pub fn laplacian_trace(&self, omega: &Jet) -> Result<Jet, GeometryError> {
        let hess = self.hessian(omega)?;
        let dim = self.dim;
        let ho = hess[0].order();
        let mut acc = Jet::constant(0.0, dim, ho);
        for i in 0..dim {
            for j in 0..dim {
                acc = acc + self.ginv[i * dim + j].truncate(ho) * &hess[i * dim + j];
            }
        }
        Ok(acc)
    }

    /// Levi-Civita covariant derivative; appends the derivative slot as the
    /// last covariant index: `(nabla T)(..., X) = (nabla_X T)(...)`.
    pub fn covariant_derivative(&self, t: &PointTensor) -> Result<PointTensor, GeometryError> {
        if t.order() < 1 {
            return Err(GeometryError::InsufficientOrder {
                what: "a covariant derivative",
                need: self.order.max(2),
                have: self.order,
            });
        }
        let dim = self.dim;
        let out_order = (t.order() - 1).min(self.order - 1);
        let rank = t.rank();
        let t_trunc = t.truncated(out_order);
        let gamma_t: Vec<Jet> = self.gamma.iter().map(|j| j.truncate(out_order)).collect();
        let ga = |k: usize, i: usize, j: usize| &gamma_t[(k * dim + i) * dim + j];

        let mut out = PointTensor::zeros(t.up, t.down + 1, dim, dim, out_order);
        let total = dim.pow(rank as u32);
        let mut idx = vec![0usize; rank];
        for flat in 0..total {
            let mut rem = flat;
            for r in (0..rank).rev() {
                idx[r] = rem % dim;
                rem /= dim;
            }
            for c in 0..dim {
                let mut acc = t.comps[flat].derivative(c).truncate(out_order);
                for u in 0..t.up {
                    let a = idx[u];
                    for m in 0..dim {
                        let mut midx = idx.clone();
                        midx[u] = m;
                        acc = acc + ga(a, c, m) * &t_trunc.comps[t.flat(&midx)];
                    }
                }
                for d in 0..t.down {
                    let b = idx[t.up + d];
                    for m in 0..dim {
                        let mut midx = idx.clone();
                        midx[t.up + d] = m;
                        acc = acc - ga(m, c, b) * &t_trunc.comps[t.flat(&midx)];
                    }
                }
                let mut oidx = idx.clone();
                oidx.push(c);
                out.set(&oidx, acc);
            }
        }
        Ok(out)
    }

    /// Divergence of a vector field: trace of its covariant derivative.
    pub fn divergence(&self, x: &PointTensor) -> Result<Jet, GeometryError> {
        assert_eq!((x.up, x.down), (1, 0));
        let nabla = self.covariant_derivative(x)?;
        let dim = self.dim;
        let mut acc = Jet::constant(0.0, dim, nabla.order());
        for i in 0..dim {
            acc = acc + nabla.get(&[i, i]);
        }
        Ok(acc)
    }

    /// Applies curvature values to three coordinate vectors: `K(u, v) w`.
    pub fn curvature_apply(
        &self,
        u: &[f64],
        v: &[f64],
        w: &[f64],
    ) -> Result<Vec<f64>, GeometryError> {
        let dim = self.dim;
        let riem = self.riemann()?;
        let mut out = vec![0.0; dim];
        for l in 0..dim {
            let mut acc = 0.0;
            for i in 0..dim {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..dim {
                    if v[j] == 0.0 {
                        continue;
                    }
                    for k in 0..dim {
                        acc += riem[((l * dim + i) * dim + j) * dim + k].value()
                            * u[i]
                            * v[j]
                            * w[k];
                    }
                }
            }
            out[l] = acc;
        }
        Ok(out)
    }

    /// `nabla_X Y` for jet-valued vector fields at this point.
    pub fn directional_derivative(
        &self,
        x: &PointTensor,
        y: &PointTensor,
    ) -> Result<Vec<f64>, GeometryError> {
        let nabla_y = self.covariant_derivative(y)?;
        let dim = self.dim;
        let mut out = vec![0.0; dim];
        for l in 0..dim {
            let mut acc = 0.0;
            for c in 0..dim {
                acc += nabla_y.get(&[l, c]).value() * x.comps[c].value();
            }
            out[l] = acc;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Connection-free operators
// ---------------------------------------------------------------------------

/// Lie bracket `[X,Y]^k = X^i d_i Y^k - Y^i d_i X^k`.
pub fn bracket(x: &PointTensor, y: &PointTensor) -> Result<PointTensor, GeometryError> {
    assert_eq!((x.up, x.down), (1, 0));
    assert_eq!((y.up, y.down), (1, 0));
    let dim = x.dim;
    let min_order = x.order().min(y.order());
    if min_order < 1 {
        return Err(GeometryError::InsufficientOrder {
            what: "a Lie bracket",
            need: 1,
            have: min_order,
        });
    }
    let o = min_order - 1;
    let xt = x.truncated(o);
    let yt = y.truncated(o);
    let mut comps = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut acc = Jet::constant(0.0, dim, o);
        for i in 0..dim {
            acc = acc + &xt.comps[i] * &y.comps[k].derivative(i).truncate(o)
                - &yt.comps[i] * &x.comps[k].derivative(i).truncate(o);
        }
        comps.push(acc);
    }
    Ok(PointTensor::new(1, 0, dim, comps))
}

/// Lie derivative of an arbitrary `(r,s)` tensor along `X`, via coordinate
/// partials (connection independent).
pub fn lie_derivative(x: &PointTensor, t: &PointTensor) -> Result<PointTensor, GeometryError> {
    assert_eq!((x.up, x.down), (1, 0));
    let dim = x.dim;
    let min_order = x.order().min(t.order());
    if min_order < 1 {
        return Err(GeometryError::InsufficientOrder {
            what: "a Lie derivative",
            need: 1,
            have: min_order,
        });
    }
    let o = min_order - 1;
    let xt = x.truncated(o);
    let tt = t.truncated(o);
    let dx: Vec<Vec<Jet>> = (0..dim)
        .map(|m| {
            (0..dim)
                .map(|a| x.comps[a].derivative(m).truncate(o))
                .collect()
        })
        .collect();
    let rank = t.rank();
    let mut out = PointTensor::zeros(t.up, t.down, dim, dim, o);
    let total = dim.pow(rank as u32);
    let mut idx = vec![0usize; rank];
    for flat in 0..total {
        let mut rem = flat;
        for r in (0..rank).rev() {
            idx[r] = rem % dim;
            rem /= dim;
        }
        let mut acc = Jet::constant(0.0, dim, o);
        for c in 0..dim {
            acc = acc + &xt.comps[c] * &t.comps[flat].derivative(c).truncate(o);
        }
        for u in 0..t.up {
            let a = idx[u];
            for m in 0..dim {
                let mut midx = idx.clone();
                midx[u] = m;
                acc = acc - &dx[m][a] * &tt.comps[tt.flat(&midx)];
            }
        }
        for d in 0..t.down {
            let b = idx[t.up + d];
            for m in 0..dim {
                let mut midx = idx.clone();
                midx[t.up + d] = m;
                acc = acc + &dx[b][m] * &tt.comps[tt.flat(&midx)];
            }
        }
        out.comps[flat] = acc;
    }
    Ok(out)
}

/// Coordinate exterior derivative for antisymmetric forms of degree 0..=2.
pub fn exterior_derivative(form: &PointTensor) -> Result<PointTensor, GeometryError> {
    assert_eq!(form.up, 0, "exterior derivative takes covariant forms");
    let dim = form.dim;
    if form.order() < 1 {
        return Err(GeometryError::InsufficientOrder {
            what: "an exterior derivative",
            need: 1,
            have: form.order(),
        });
    }
    let o = form.order() - 1;
    // Antisymmetry gate for degree >= 2 inputs.
    if form.down == 2 {
        let vals = form.values();
        let mut worst = 0.0f64;
        let mut mag = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let s = vals.comps[i * dim + j] + vals.comps[j * dim + i];
                worst = worst.max(s.abs());
                mag = mag.max(vals.comps[i * dim + j].abs());
            }
        }
        if worst > 1e-9 * (1.0 + mag) {
            return Err(GeometryError::NotAntisymmetric(worst));
        }
    }
    match form.down {
        0 => {
            let comps: Vec<Jet> = (0..dim).map(|i| form.comps[0].derivative(i)).collect();
            Ok(PointTensor::new(0, 1, dim, comps))
        }
        1 => {
            let mut out = PointTensor::zeros(0, 2, dim, dim, o);
            for i in 0..dim {
                for j in 0..dim {
                    let v = form.comps[j].derivative(i).truncate(o)
                        - form.comps[i].derivative(j).truncate(o);
                    out.set(&[i, j], v);
                }
            }
            Ok(out)
        }
        2 => {
            let mut out = PointTensor::zeros(0, 3, dim, dim, o);
            let get = |a: usize, b: usize| &form.comps[a * dim + b];
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let v = get(j, k).derivative(i).truncate(o)
                            - get(i, k).derivative(j).truncate(o)
                            + get(i, j).derivative(k).truncate(o);
                        out.set(&[i, j, k], v);
                    }
                }
            }
            Ok(out)
        }
        d => panic!("exterior derivative of degree-{d} forms is out of scope"),
    }
}

// ---------------------------------------------------------------------------
// Property residuals (used by the check suites and the oracle tests)
// ---------------------------------------------------------------------------

/// `max |(nabla g)_ijk|` in frame components over `1 + max |g|`.
pub fn metric_compatibility_residual(
    pg: &PointGeometry,
    frame: &Frame,
) -> Result<PointResidual, GeometryError> {
    let gt = PointTensor::new(0, 2, pg.dim, pg.g.clone());
    let nabla_g = pg.covariant_derivative(&gt)?;
    let raw = frame.max_norm(&nabla_g.values());
    let gmag = frame.max_norm(&gt.values());
    Ok(PointResidual::new(raw, gmag))
}

/// Pair/exchange symmetries of the lowered curvature tensor.
pub fn riemann_symmetry_residual(
    pg: &PointGeometry,
    frame: &Frame,
) -> Result<PointResidual, GeometryError> {
    let dim = pg.dim;
    let low = pg.lowered_riemann_values()?;
    let at = |i: usize, j: usize, k: usize, l: usize| low[((i * dim + j) * dim + k) * dim + l];
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let r = at(i, j, k, l);
                    worst = worst.max((r + at(j, i, k, l)).abs());
                    worst = worst.max((r + at(i, j, l, k)).abs());
                    worst = worst.max((r - at(k, l, i, j)).abs());
                }
            }
        }
    }
    // The lowered tensor is already a "frame-free" scalar array only in
    // orthonormal frames; measure magnitudes there.
    let lowt = ValueTensor::new(0, 4, dim, low);
    let mag = frame.max_norm(&lowt);
    let frame_comps = frame.components(&lowt);
    let at_f = |i: usize, j: usize, k: usize, l: usize| {
        frame_comps[((i * dim + j) * dim + k) * dim + l]
    };
    let mut worst_f = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let r = at_f(i, j, k, l);
                    worst_f = worst_f.max((r + at_f(j, i, k, l)).abs());
                    worst_f = worst_f.max((r + at_f(i, j, l, k)).abs());
                    worst_f = worst_f.max((r - at_f(k, l, i, j)).abs());
                }
            }
        }
    }
    Ok(PointResidual::new(worst.max(worst_f), mag))
}

/// First Bianchi identity `R_ijkl + R_iklj + R_iljk = 0` on the lowered tensor.
pub fn first_bianchi_residual(
    pg: &PointGeometry,
    frame: &Frame,
) -> Result<PointResidual, GeometryError> {
    let dim = pg.dim;
    let low = pg.lowered_riemann_values()?;
    let at = |i: usize, j: usize, k: usize, l: usize| low[((i * dim + j) * dim + k) * dim + l];
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let s = at(i, j, k, l) + at(i, k, l, j) + at(i, l, j, k);
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    let mag = frame.max_norm(&ValueTensor::new(0, 4, dim, low));
    Ok(PointResidual::new(worst, mag))
}

/// Contracted second Bianchi identity `div Ric = (1/2) d tau`.
pub fn second_bianchi_residual(
    pg: &PointGeometry,
    frame: &Frame,
) -> Result<PointResidual, GeometryError> {
    if pg.order < 3 {
        return Err(GeometryError::InsufficientOrder {
            what: "the contracted second Bianchi identity",
            need: 3,
            have: pg.order,
        });
    }
    let dim = pg.dim;
    let ric = PointTensor::new(0, 2, dim, pg.ricci()?.to_vec());
    let nabla_ric = pg.covariant_derivative(&ric)?;
    let tau = pg.scalar_curvature()?;
    let ginv_v: Vec<f64> = pg.ginv.iter().map(|j| j.value()).collect();
    let mut resid = vec![0.0; dim];
    for k in 0..dim {
        let mut div = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                div += ginv_v[i * dim + j] * nabla_ric.get(&[j, k, i]).value();
            }
        }
        resid[k] = div - 0.5 * tau.first_partial(k);
    }
    let raw = frame
        .components(&ValueTensor::new(0, 1, dim, resid))
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let mag = frame.max_norm(&ric.values());
    Ok(PointResidual::new(raw, mag))
}

/// Rebuilds the 3D curvature tensor from Ricci data and compares:
/// `K(E,F)G = Ric(F,G)E - Ric(E,G)F + g(F,G)QE - g(E,G)QF
///          - (tau/2)(g(F,G)E - g(E,G)F)`.
pub fn reconstruction_3d_residual(
    pg: &PointGeometry,
    frame: &Frame,
) -> Result<PointResidual, GeometryError> {
    assert_eq!(pg.dim, 3, "curvature reconstruction is specific to dim 3");
    let dim = 3;
    let riem = pg.riemann()?;
    let ric: Vec<f64> = pg.ricci()?.iter().map(|j| j.value()).collect();
    let qv: Vec<f64> = pg.ricci_operator()?.iter().map(|j| j.value()).collect();
    let tau = pg.scalar_curvature()?.value();
    let gv = pg.metric_values();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut diff = vec![0.0; dim * dim * dim * dim];
    for l in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let rebuilt = ric[j * dim + k] * delta(l, i) - ric[i * dim + k] * delta(l, j)
                        + gv[j * dim + k] * qv[l * dim + i]
                        - gv[i * dim + k] * qv[l * dim + j]
                        - 0.5
                            * tau
                            * (gv[j * dim + k] * delta(l, i) - gv[i * dim + k] * delta(l, j));
                    diff[((l * dim + i) * dim + j) * dim + k] =
                        riem[((l * dim + i) * dim + j) * dim + k].value() - rebuilt;
                }
            }
        }
    }
    let difft = ValueTensor::new(1, 3, dim, diff);
    let raw = frame.max_norm(&difft);
    let riemt = ValueTensor::new(
        1,
        3,
        dim,
        riem.iter().map(|j| j.value()).collect(),
    );
    let mag = frame.max_norm(&riemt);
    Ok(PointResidual::new(raw, mag))
}
