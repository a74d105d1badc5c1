//! Finite-dimensional linear operators between truncated Hilbert spaces.
//!
//! Scalars are real, so the adjoint of an operator is its transpose. An
//! operator is held either densely or as a thin factorization
//! `U · diag(s) · Vᵀ` with orthonormal columns in `U` and `V`; both forms
//! expose the same singular spectrum, Schatten norms and trace.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, shape_err, Error, Result};

/// Tolerance on `UᵀU = I` and `VᵀV = I` for factored operators.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Singular values below `s_1 · RANK_TOL` count as zero in rank decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Exponent of a Schatten or lp norm: a real `p >= 1` or infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Order {
    Finite(f64),
    Infinity,
}

impl Order {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() {
            return Err(invalid("order is NaN"));
        }
        if p == f64::INFINITY {
            return Ok(Order::Infinity);
        }
        if p < 1.0 {
            return Err(Error::UnsupportedOrder(p));
        }
        Ok(Order::Finite(p))
    }

    /// `p` as a float, with `f64::INFINITY` for the infinite order.
    pub fn value(self) -> f64 {
        match self {
            Order::Finite(p) => p,
            Order::Infinity => f64::INFINITY,
        }
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> Order {
        match self {
            Order::Infinity => Order::Finite(1.0),
            Order::Finite(p) if p == 1.0 => Order::Infinity,
            Order::Finite(p) => Order::Finite(p / (p - 1.0)),
        }
    }

    /// `1/p`, zero for the infinite order.
    pub fn reciprocal(self) -> f64 {
        match self {
            Order::Finite(p) => 1.0 / p,
            Order::Infinity => 0.0,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(p) => write!(f, "{p}"),
            Order::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Order::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| invalid(format!("cannot parse order {s:?}")))?;
                Order::new(p)
            }
        }
    }
}

/// The hypothesis class `{T : ‖T‖_{S_p} <= B}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchattenBall {
    order: Order,
    radius: f64,
}

impl SchattenBall {
    /// A radius of zero is accepted and describes the singleton `{0}`.
    pub fn new(order: Order, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(invalid(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(Self { order, radius })
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn conjugate(&self) -> Order {
        self.order.conjugate()
    }
}

/// Coordinates of a sample against a fixed orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertVector(DVector<f64>);

impl HilbertVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(coords))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(invalid("vector must have dimension >= 1"));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(invalid("vector has non-finite coordinates"));
        }
        Ok(Self(v))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim.max(1)))
    }

    /// Standard basis vector `e_index` (zero-based).
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim.max(1));
        v[index] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_dvector(self) -> DVector<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn dot(&self, other: &HilbertVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(shape_err(format!("inner product of dims {} and {}", self.dim(), other.dim())));
        }
        Ok(self.0.dot(&other.0))
    }
}

/// Nonincreasing sequence of nonnegative singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("singular values must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("singular values must be nonincreasing"));
        }
        Ok(Self(values))
    }

    /// Sorts and takes absolute values; used on raw decompositions.
    pub(crate) fn from_unsorted(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            *v = v.abs();
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// Number of values above `s_1 · RANK_TOL`.
    pub fn rank(&self) -> usize {
        let cut = self.largest() * RANK_TOL;
        self.0.iter().take_while(|&&s| s > cut).count()
    }

    /// `(Σ s_k^p)^{1/p}`, or `s_1` for the infinite order.
    pub fn schatten_norm(&self, order: Order) -> f64 {
        lp_norm(&self.0, order)
    }
}

/// lp norm of a real sequence; finite orders rescale by the max magnitude
/// before exponentiation.
pub fn lp_norm(values: &[f64], order: Order) -> f64 {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    match order {
        Order::Infinity => max,
        Order::Finite(p) if p == 1.0 => values.iter().map(|v| v.abs()).sum(),
        Order::Finite(_) if max == 0.0 => 0.0,
        Order::Finite(p) if p == 2.0 => {
            max * values.iter().map(|v| (v / max).powi(2)).sum::<f64>().sqrt()
        }
        Order::Finite(p) => {
            max * values.iter().map(|v| (v.abs() / max).powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Dense(DMatrix<f64>),
    Factored {
        u: DMatrix<f64>,
        s: DVector<f64>,
        v: DMatrix<f64>,
    },
}

/// A linear map `T : R^{d_x} -> R^{d_y}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    repr: Repr,
}

impl LinearOperator {
    /// Dense operator from a `d_y × d_x` matrix.
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(invalid("operator dimensions must be >= 1"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("operator has non-finite entries"));
        }
        Ok(Self { repr: Repr::Dense(m) })
    }

    /// Factored operator `U · diag(s) · Vᵀ`.
    ///
    /// `U` is `d_y × r`, `V` is `d_x × r`, both with orthonormal columns, and
    /// `s` is nonincreasing and nonnegative.
    pub fn factored(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = s.len();
        if r == 0 || u.nrows() == 0 || v.nrows() == 0 {
            return Err(invalid("factored operator needs r >= 1 and nonzero dimensions"));
        }
        if u.ncols() != r || v.ncols() != r {
            return Err(shape_err(format!(
                "factors have {} and {} columns for {} singular values",
                u.ncols(),
                v.ncols(),
                r
            )));
        }
        if u.iter().chain(v.iter()).chain(s.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("factored operator has non-finite entries"));
        }
        SingularSpectrum::new(s.iter().copied().collect())?;
        for (name, f) in [("U", &u), ("V", &v)] {
            let dev = orthonormality_defect(f);
            if dev > ORTHONORMAL_TOL {
                return Err(invalid(format!("columns of {name} are not orthonormal (defect {dev:e})")));
            }
        }
        Ok(Self { repr: Repr::Factored { u, s, v } })
    }

    /// Factored form built from trusted decomposition output.
    pub(crate) fn from_factors(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Self {
        debug_assert_eq!(u.ncols(), s.len());
        debug_assert_eq!(v.ncols(), s.len());
        Self { repr: Repr::Factored { u, s, v } }
    }

    pub fn zeros(d_y: usize, d_x: usize) -> Self {
        Self { repr: Repr::Dense(DMatrix::zeros(d_y.max(1), d_x.max(1))) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { repr: Repr::Dense(DMatrix::identity(dim.max(1), dim.max(1))) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::dense(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `d_y` (rows).
    pub fn d_y(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.nrows(),
            Repr::Factored { u, .. } => u.nrows(),
        }
    }

    /// `d_x` (columns).
    pub fn d_x(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.ncols(),
            Repr::Factored { v, .. } => v.nrows(),
        }
    }

    pub fn is_factored(&self) -> bool {
        matches!(self.repr, Repr::Factored { .. })
    }

    /// The dense `d_y × d_x` matrix of this operator.
    pub fn materialize(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Factored { u, s, v } => {
                let mut us = u.clone();
                for (mut col, sk) in us.column_iter_mut().zip(s.iter()) {
                    col *= *sk;
                }
                us * v.transpose()
            }
        }
    }

    /// Thin factors `(U, s, V)` with `s` sorted nonincreasing and of length
    /// `min(d_x, d_y)` for dense inputs.
    pub fn factors(&self) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        match &self.repr {
            Repr::Dense(m) => thin_svd(m),
            Repr::Factored { u, s, v } => (u.clone(), s.clone(), v.clone()),
        }
    }

    /// Converts to factored form (no-op if already factored).
    pub fn to_factored(&self) -> LinearOperator {
        match &self.repr {
            Repr::Factored { .. } => self.clone(),
            Repr::Dense(m) => {
                let (u, s, v) = thin_svd(m);
                LinearOperator::from_factors(u, s, v)
            }
        }
    }

    /// Matrix–vector product `T x`.
    pub fn apply(&self, x: &HilbertVector) -> Result<HilbertVector> {
        if x.dim() != self.d_x() {
            return Err(shape_err(format!("apply: operator has d_x = {}, vector has dim {}", self.d_x(), x.dim())));
        }
        Ok(HilbertVector(self.apply_unchecked(x.as_dvector())))
    }

    pub(crate) fn apply_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Dense(m) => m * x,
            Repr::Factored { u, s, v } => {
                let coeff = v.tr_mul(x).component_mul(s);
                u * coeff
            }
        }
    }

    /// Adjoint (transpose, since scalars are real).
    pub fn adjoint(&self) -> LinearOperator {
        match &self.repr {
            Repr::Dense(m) => Self { repr: Repr::Dense(m.transpose()) },
            Repr::Factored { u, s, v } => Self {
                repr: Repr::Factored { u: v.clone(), s: s.clone(), v: u.clone() },
            },
        }
    }

    /// Composition `self ∘ rhs`, i.e. the matrix product `self · rhs`.
    pub fn compose(&self, rhs: &LinearOperator) -> Result<LinearOperator> {
        if self.d_x() != rhs.d_y() {
            return Err(shape_err(format!(
                "compose: left operator takes dim {}, right produces dim {}",
                self.d_x(),
                rhs.d_y()
            )));
        }
        Ok(Self { repr: Repr::Dense(self.materialize() * rhs.materialize()) })
    }

    pub fn add(&self, rhs: &LinearOperator) -> Result<LinearOperator> {
        if self.d_x() != rhs.d_x() || self.d_y() != rhs.d_y() {
            return Err(shape_err("add: operator shapes differ"));
        }
        Ok(Self { repr: Repr::Dense(self.materialize() + rhs.materialize()) })
    }

    pub fn scale(&self, alpha: f64) -> LinearOperator {
        match &self.repr {
            Repr::Dense(m) => Self { repr: Repr::Dense(m * alpha) },
            Repr::Factored { u, s, v } if alpha >= 0.0 => Self {
                repr: Repr::Factored { u: u.clone(), s: s * alpha, v: v.clone() },
            },
            Repr::Factored { u, s, v } => Self {
                repr: Repr::Factored { u: -u, s: s * -alpha, v: v.clone() },
            },
        }
    }

    pub fn spectrum(&self) -> SingularSpectrum {
        svd_spectrum(self)
    }

    pub fn schatten_norm(&self, order: Order) -> f64 {
        schatten_norm(self, order)
    }

    /// Frobenius distance to another operator of the same shape.
    pub fn frobenius_distance(&self, rhs: &LinearOperator) -> Result<f64> {
        if self.d_x() != rhs.d_x() || self.d_y() != rhs.d_y() {
            return Err(shape_err("distance: operator shapes differ"));
        }
        Ok((self.materialize() - rhs.materialize()).norm())
    }
}

/// Largest absolute deviation of `FᵀF` from the identity.
pub(crate) fn orthonormality_defect(f: &DMatrix<f64>) -> f64 {
    let gram = f.tr_mul(f);
    let mut dev = 0.0_f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.column_iter()
        .enumerate()
        .all(|(j, col)| col.iter().enumerate().all(|(i, &x)| i == j || x == 0.0))
}

/// Singular values of a dense matrix, sorted nonincreasing, length
/// `min(rows, cols)`.
pub(crate) fn matrix_spectrum(m: &DMatrix<f64>) -> SingularSpectrum {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return SingularSpectrum(Vec::new());
    }
    if is_diagonal(m) {
        return SingularSpectrum::from_unsorted((0..k).map(|i| m[(i, i)]).collect());
    }
    let values = m.clone().svd(false, false).singular_values;
    SingularSpectrum::from_unsorted(values.iter().copied().collect())
}

/// Thin SVD with singular values sorted nonincreasing.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let k = idx.len();
    let mut us = DMatrix::zeros(u.nrows(), k);
    let mut vs = DMatrix::zeros(v_t.ncols(), k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in idx.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v_t.row(src).transpose());
        ss[dst] = s[src];
    }
    (us, ss, vs)
}

/// Singular values of `T`, nonincreasing, length `min(d_x, d_y)` with
/// trailing zeros retained.
pub fn svd_spectrum(t: &LinearOperator) -> SingularSpectrum {
    match &t.repr {
        Repr::Dense(m) => matrix_spectrum(m),
        Repr::Factored { s, .. } => {
            let k = t.d_x().min(t.d_y());
            let mut values: Vec<f64> = s.iter().copied().collect();
            values.resize(k.max(values.len()), 0.0);
            values.truncate(k);
            SingularSpectrum::from_unsorted(values)
        }
    }
}

/// Schatten p-norm `(Σ s_k^p)^{1/p}`; the operator norm `s_1` for `p = ∞`.
pub fn schatten_norm(t: &LinearOperator, order: Order) -> f64 {
    svd_spectrum(t).schatten_norm(order)
}

/// Trace of a square operator.
pub fn trace(t: &LinearOperator) -> Result<f64> {
    if t.d_x() != t.d_y() {
        return Err(shape_err(format!("trace of non-square {}x{} operator", t.d_y(), t.d_x())));
    }
    Ok(match &t.repr {
        Repr::Dense(m) => m.trace(),
        Repr::Factored { u, s, v } => (0..s.len()).map(|k| s[k] * u.column(k).dot(&v.column(k))).sum(),
    })
}

/// The rank-one operator `a b*: x ↦ ⟨b, x⟩ a`.
pub fn rank1(a: &HilbertVector, b: &HilbertVector) -> LinearOperator {
    LinearOperator { repr: Repr::Dense(a.as_dvector() * b.as_dvector().transpose()) }
}

pub fn apply(t: &LinearOperator, x: &HilbertVector) -> Result<HilbertVector> {
    t.apply(x)
}

pub fn adjoint(t: &LinearOperator) -> LinearOperator {
    t.adjoint()
}
