//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients of a scalar quantity at a point,
//! up to a fixed total degree. Arithmetic on jets propagates derivatives
//! exactly (to the truncation order), which is what the curvature operators
//! downstream rely on: two metric derivatives for the curvature tensor,
//! three for anything involving a covariant derivative of the Ricci operator.
//!
//! Coefficients are indexed by multi-indices in graded lexicographic order,
//! so the table for order `k-1` is a strict prefix of the table for order
//! `k`. That makes truncation a prefix copy and the derivative shift a
//! single table lookup.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Errors from jet construction and arithmetic.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum JetError {
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("jet shape mismatch: ({0} vars, order {1}) vs ({2} vars, order {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("division by a jet with zero value")]
    DivisionByZero,
    #[error("domain error: {func}({value}) is undefined")]
    Domain { func: &'static str, value: f64 },
    #[error("multi-index degree {degree} exceeds jet order {order}")]
    DegreeExceedsOrder { degree: usize, order: usize },
    #[error("multi-index length {got} does not match {nvars} variables")]
    BadMultiIndex { got: usize, nvars: usize },
}

/// Precomputed multi-index bookkeeping shared by every jet of one shape.
#[derive(Debug)]
pub struct JetTable {
    nvars: usize,
    order: usize,
    /// Multi-indices in graded lexicographic order.
    indices: Vec<Vec<u8>>,
    /// Position of each multi-index.
    position: HashMap<Vec<u8>, usize>,
    /// `product[i * len + j]`: position of `indices[i] + indices[j]`,
    /// or `u32::MAX` when the sum exceeds the order.
    product: Vec<u32>,
    /// `shift_up[v][p]`: position of `indices[p] + e_v`, or `u32::MAX`.
    shift_up: Vec<Vec<u32>>,
    /// Factorial of each multi-index (product of component factorials).
    factorial: Vec<f64>,
    /// Number of coefficients for each truncation order `0..=order`.
    len_at_order: Vec<usize>,
}

impl JetTable {
    fn build(nvars: usize, order: usize) -> Self {
        assert!(nvars >= 1, "jets need at least one variable");
        let mut indices: Vec<Vec<u8>> = Vec::new();
        let mut len_at_order = Vec::with_capacity(order + 1);
        for deg in 0..=order {
            let mut idx = vec![0u8; nvars];
            gen_degree(&mut indices, &mut idx, 0, deg as u8);
            len_at_order.push(indices.len());
        }
        let position: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(p, ix)| (ix.clone(), p))
            .collect();
        let len = indices.len();
        let mut product = vec![u32::MAX; len * len];
        for i in 0..len {
            for j in 0..len {
                let deg: usize = indices[i]
                    .iter()
                    .zip(&indices[j])
                    .map(|(a, b)| (*a + *b) as usize)
                    .sum();
                if deg <= order {
                    let sum: Vec<u8> = indices[i]
                        .iter()
                        .zip(&indices[j])
                        .map(|(a, b)| a + b)
                        .collect();
                    product[i * len + j] = position[&sum] as u32;
                }
            }
        }
        let mut shift_up = vec![vec![u32::MAX; len]; nvars];
        for (p, ix) in indices.iter().enumerate() {
            let deg: usize = ix.iter().map(|&a| a as usize).sum();
            if deg < order {
                for v in 0..nvars {
                    let mut up = ix.clone();
                    up[v] += 1;
                    shift_up[v][p] = position[&up] as u32;
                }
            }
        }
        let factorial = indices
            .iter()
            .map(|ix| ix.iter().map(|&a| fact(a as usize)).product())
            .collect();
        JetTable {
            nvars,
            order,
            indices,
            position,
            product,
            shift_up,
            factorial,
            len_at_order,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[Vec<u8>] {
        &self.indices
    }
}

fn gen_degree(out: &mut Vec<Vec<u8>>, idx: &mut Vec<u8>, var: usize, remaining: u8) {
    if var + 1 == idx.len() {
        idx[var] = remaining;
        out.push(idx.clone());
        idx[var] = 0;
        return;
    }
    // Lexicographic: highest exponent on the earliest variable first.
    for e in (0..=remaining).rev() {
        idx[var] = e;
        gen_degree(out, idx, var + 1, remaining - e);
        idx[var] = 0;
    }
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn table(nvars: usize, order: usize) -> Arc<JetTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet table cache poisoned");
    guard
        .entry((nvars, order))
        .or_insert_with(|| Arc::new(JetTable::build(nvars, order)))
        .clone()
}

/// Elementary functions liftable to jets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetFunc {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tan,
    /// Power with a fixed real exponent. Integer exponents accept any base
    /// (nonzero for negative powers); fractional exponents need a positive base.
    Pow(f64),
}

/// Truncated Taylor expansion of a scalar at a point.
///
/// Immutable value type; all operations are pure.
#[derive(Debug, Clone)]
pub struct Jet {
    table: Arc<JetTable>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars()
            && self.order() == other.order()
            && self.coeffs == other.coeffs
    }
}

impl Jet {
    /// Jet of a constant: value coefficient only.
    pub fn constant(value: f64, nvars: usize, order: usize) -> Jet {
        let table = table(nvars, order);
        let mut coeffs = vec![0.0; table.len()];
        coeffs[0] = value;
        Jet { table, coeffs }
    }

    /// Jet seeding the coordinate `index`: value plus a unit first-order
    /// coefficient (when the order admits one).
    pub fn variable(index: usize, value: f64, nvars: usize, order: usize) -> Result<Jet, JetError> {
        if index >= nvars {
            return Err(JetError::IndexOutOfRange { index, nvars });
        }
        let mut jet = Jet::constant(value, nvars, order);
        if order >= 1 {
            // Degree-1 block starts right after the constant slot; within the
            // block, graded-lex puts e_0 first.
            jet.coeffs[1 + index] = 1.0;
        }
        Ok(jet)
    }

    pub fn nvars(&self) -> usize {
        self.table.nvars
    }

    pub fn order(&self) -> usize {
        self.table.order
    }

    /// The degree-0 coefficient: the function value at the point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn same_shape(&self, other: &Jet) -> Result<(), JetError> {
        if self.nvars() != other.nvars() || self.order() != other.order() {
            return Err(JetError::ShapeMismatch(
                self.nvars(),
                self.order(),
                other.nvars(),
                other.order(),
            ));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Jet {
            table: self.table.clone(),
            coeffs,
        })
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Jet {
            table: self.table.clone(),
            coeffs,
        })
    }

    /// Cauchy product truncated at the shared order.
    pub fn try_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let len = self.coeffs.len();
        let mut coeffs = vec![0.0; len];
        let prod = &self.table.product;
        for i in 0..len {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let row = &prod[i * len..(i + 1) * len];
            for j in 0..len {
                let k = row[j];
                if k != u32::MAX {
                    coeffs[k as usize] += a * other.coeffs[j];
                }
            }
        }
        Ok(Jet {
            table: self.table.clone(),
            coeffs,
        })
    }

    /// Division: multiply by the reciprocal series of `other`.
    pub fn try_div(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let recip = other.reciprocal()?;
        self.try_mul(&recip)
    }

    fn reciprocal(&self) -> Result<Jet, JetError> {
        let v = self.value();
        if v == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        // 1/(v + w) = (1/v) * sum_k (-w/v)^k, truncated; w is the pure
        // infinitesimal part and nilpotent at the truncation order.
        let mut neg_scaled = self.clone();
        neg_scaled.coeffs[0] = 0.0;
        for c in neg_scaled.coeffs.iter_mut() {
            *c = -*c / v;
        }
        let mut acc = Jet::constant(1.0, self.nvars(), self.order());
        let mut power = Jet::constant(1.0, self.nvars(), self.order());
        for _ in 0..self.order() {
            power = power.try_mul(&neg_scaled)?;
            acc = acc.try_add(&power)?;
        }
        Ok(acc.scale(1.0 / v))
    }

    /// Composes a univariate function onto this jet.
    pub fn apply(&self, func: JetFunc) -> Result<Jet, JetError> {
        let v = self.value();
        let order = self.order();
        let series: Vec<f64> = match func {
            JetFunc::Exp => {
                let e = v.exp();
                (0..=order).map(|k| e / fact(k)).collect()
            }
            JetFunc::Log => {
                if v <= 0.0 {
                    return Err(JetError::Domain {
                        func: "log",
                        value: v,
                    });
                }
                (0..=order)
                    .map(|k| {
                        if k == 0 {
                            v.ln()
                        } else {
                            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                            sign / (k as f64 * v.powi(k as i32))
                        }
                    })
                    .collect()
            }
            JetFunc::Sqrt => {
                if v <= 0.0 {
                    return Err(JetError::Domain {
                        func: "sqrt",
                        value: v,
                    });
                }
                return self.apply(JetFunc::Pow(0.5));
            }
            JetFunc::Sin => (0..=order)
                .map(|k| match k % 4 {
                    0 => v.sin(),
                    1 => v.cos(),
                    2 => -v.sin(),
                    _ => -v.cos(),
                } / fact(k))
                .collect(),
            JetFunc::Cos => (0..=order)
                .map(|k| match k % 4 {
                    0 => v.cos(),
                    1 => -v.sin(),
                    2 => -v.cos(),
                    _ => v.sin(),
                } / fact(k))
                .collect(),
            JetFunc::Tan => {
                if v.cos() == 0.0 {
                    return Err(JetError::Domain {
                        func: "tan",
                        value: v,
                    });
                }
                let s = self.apply(JetFunc::Sin)?;
                let c = self.apply(JetFunc::Cos)?;
                return s.try_div(&c);
            }
            JetFunc::Pow(r) => return self.pow(r),
        };
        self.compose(&series)
    }

    fn pow(&self, r: f64) -> Result<Jet, JetError> {
        let v = self.value();
        if r == r.round() && r.abs() < 1e9 {
            let n = r as i64;
            return self.powi(n);
        }
        if v <= 0.0 {
            return Err(JetError::Domain {
                func: "pow",
                value: v,
            });
        }
        let order = self.order();
        let mut series = Vec::with_capacity(order + 1);
        let mut falling = 1.0;
        for k in 0..=order {
            series.push(falling * v.powf(r - k as f64) / fact(k));
            falling *= r - k as f64;
        }
        self.compose(&series)
    }

    /// Integer power by repeated squaring; negative exponents go through the
    /// reciprocal and need a nonzero value.
    pub fn powi(&self, n: i64) -> Result<Jet, JetError> {
        let base = if n < 0 {
            self.reciprocal()?
        } else {
            self.clone()
        };
        let mut e = n.unsigned_abs();
        let mut acc = Jet::constant(1.0, self.nvars(), self.order());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&sq)?;
            }
            e >>= 1;
            if e > 0 {
                sq = sq.try_mul(&sq)?;
            }
        }
        Ok(acc)
    }

    /// Evaluates `sum_k series[k] * w^k` with `w` the infinitesimal part.
    fn compose(&self, series: &[f64]) -> Result<Jet, JetError> {
        let mut w = self.clone();
        w.coeffs[0] = 0.0;
        let mut acc = Jet::constant(series[self.order()], self.nvars(), self.order());
        for k in (0..self.order()).rev() {
            acc = acc.try_mul(&w)?;
            acc.coeffs[0] += series[k];
        }
        Ok(acc)
    }

    /// Raw partial derivative for the given exponent tuple:
    /// coefficient times the multi-index factorial.
    pub fn partial(&self, multi_index: &[usize]) -> Result<f64, JetError> {
        if multi_index.len() != self.nvars() {
            return Err(JetError::BadMultiIndex {
                got: multi_index.len(),
                nvars: self.nvars(),
            });
        }
        let degree: usize = multi_index.iter().sum();
        if degree > self.order() {
            return Err(JetError::DegreeExceedsOrder {
                degree,
                order: self.order(),
            });
        }
        let key: Vec<u8> = multi_index.iter().map(|&e| e as u8).collect();
        let pos = self.table.position[&key];
        Ok(self.coeffs[pos] * self.table.factorial[pos])
    }

    /// First partial with respect to one variable, read from the degree-1 block.
    pub fn first_partial(&self, var: usize) -> f64 {
        if self.order() == 0 {
            return 0.0;
        }
        self.coeffs[1 + var]
    }

    /// The jet of `d/dx_var` of this quantity, one order lower.
    ///
    /// Panics if the order is zero; callers gate on [`Jet::order`].
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let out_table = table(self.nvars(), self.order() - 1);
        let mut coeffs = vec![0.0; out_table.len()];
        let shift = &self.table.shift_up[var];
        for (p, c) in coeffs.iter_mut().enumerate() {
            let up = shift[p];
            debug_assert_ne!(up, u32::MAX);
            let exp = self.table.indices[p][var] as f64;
            *c = (exp + 1.0) * self.coeffs[up as usize];
        }
        Jet {
            table: out_table,
            coeffs,
        }
    }

    /// Drops coefficients above `order`. A no-op when already at or below it.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let out_table = table(self.nvars(), order);
        let keep = self.table.len_at_order[order];
        Jet {
            table: out_table,
            coeffs: self.coeffs[..keep].to_vec(),
        }
    }

    pub fn scale(&self, factor: f64) -> Jet {
        Jet {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Maximum absolute coefficient, a crude magnitude for tolerance scaling.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

macro_rules! panicking_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$checked(rhs).expect("jet shape mismatch")
            }
        }
        impl $trait for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}

panicking_binop!(Add, add, try_add);
panicking_binop!(Sub, sub, try_sub);
panicking_binop!(Mul, mul, try_mul);

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}
