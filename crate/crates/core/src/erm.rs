//! Empirical risk minimization over a Schatten ball.
//!
//! The minimizer over the whole ball is attained by an operator mapping
//! `span{x_n}` into `span{y_n}`, so the problem is solved in span
//! coordinates: orthonormal bases for both spans are built, samples are
//! expressed in those bases, a small constrained least-squares problem is
//! solved by projected gradient descent, and the solution is lifted back to
//! the ambient spaces.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, shape_err, Error, Result};
use crate::operator::{lp_norm, matrix_spectrum, thin_svd, HilbertVector, LinearOperator, SchattenBall};
use crate::projection::project_schatten_matrix;

/// Default relative rank tolerance for span detection.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative slack on the norm bounds `C_x`, `C_y`.
const BOUND_SLACK: f64 = 1e-12;

/// `N` sample pairs stored column-wise, with norm bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    c_x: f64,
    c_y: f64,
}

impl TrainingSet {
    /// `x` is `d_x × N`, `y` is `d_y × N`; every column must respect its bound.
    pub fn from_matrices(x: DMatrix<f64>, y: DMatrix<f64>, c_x: f64, c_y: f64) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(shape_err(format!("{} inputs but {} outputs", x.ncols(), y.ncols())));
        }
        if x.nrows() == 0 || y.nrows() == 0 {
            return Err(invalid("sample dimensions must be >= 1"));
        }
        if !(c_x > 0.0) || !(c_y > 0.0) || !c_x.is_finite() || !c_y.is_finite() {
            return Err(invalid(format!("norm bounds must be positive, got C_x={c_x}, C_y={c_y}")));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("samples contain non-finite values"));
        }
        for (n, col) in x.column_iter().enumerate() {
            if col.norm() > c_x * (1.0 + BOUND_SLACK) {
                return Err(invalid(format!("‖x_{n}‖ = {} exceeds C_x = {c_x}", col.norm())));
            }
        }
        for (n, col) in y.column_iter().enumerate() {
            if col.norm() > c_y * (1.0 + BOUND_SLACK) {
                return Err(invalid(format!("‖y_{n}‖ = {} exceeds C_y = {c_y}", col.norm())));
            }
        }
        Ok(Self { x, y, c_x, c_y })
    }

    /// Uses the largest observed norms as bounds (at least `f64::MIN_POSITIVE`).
    pub fn with_observed_bounds(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let max_norm = |m: &DMatrix<f64>| m.column_iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max);
        let (c_x, c_y) = (max_norm(&x), max_norm(&y));
        Self::from_matrices(x, y, c_x, c_y)
    }

    pub fn from_pairs(pairs: &[(HilbertVector, HilbertVector)], c_x: f64, c_y: f64) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| invalid("no sample pairs"))?;
        let (d_x, d_y) = (first.0.dim(), first.1.dim());
        if pairs.iter().any(|(x, y)| x.dim() != d_x || y.dim() != d_y) {
            return Err(shape_err("sample pairs have inconsistent dimensions"));
        }
        let x = DMatrix::from_fn(d_x, pairs.len(), |i, n| pairs[n].0.coords()[i]);
        let y = DMatrix::from_fn(d_y, pairs.len(), |i, n| pairs[n].1.coords()[i]);
        Self::from_matrices(x, y, c_x, c_y)
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn d_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_y(&self) -> usize {
        self.y.nrows()
    }

    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    pub fn c_y(&self) -> f64 {
        self.c_y
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn pair(&self, n: usize) -> (HilbertVector, HilbertVector) {
        (
            HilbertVector::from_dvector(self.x.column(n).into_owned()).expect("validated"),
            HilbertVector::from_dvector(self.y.column(n).into_owned()).expect("validated"),
        )
    }
}

/// Orthonormal vectors (columns of a `dim × k` matrix) spanning a subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis {
    vectors: DMatrix<f64>,
}

impl OrthonormalBasis {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Number of basis vectors (the numerical rank of the input).
    pub fn size(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Appends directions orthogonal to the current span (deflated against
    /// it); directions already in the span are skipped.
    pub fn extended_with(&self, extra: &DMatrix<f64>) -> Result<OrthonormalBasis> {
        if extra.nrows() != self.dim() {
            return Err(shape_err("extension vectors have the wrong dimension"));
        }
        let mut cols: Vec<DVector<f64>> = self.vectors.column_iter().map(|c| c.into_owned()).collect();
        for col in extra.column_iter() {
            if let Some(q) = deflate(&cols, col.into_owned(), DEFAULT_RANK_TOL * col.norm().max(f64::MIN_POSITIVE)) {
                cols.push(q);
            }
        }
        Ok(OrthonormalBasis { vectors: columns_to_matrix(self.dim(), &cols) })
    }

    /// Coordinates of every column of `m` (a `dim × n` matrix).
    pub fn coordinates_of(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.dim() {
            return Err(shape_err(format!("vectors of dim {} against basis of dim {}", m.nrows(), self.dim())));
        }
        Ok(self.vectors.tr_mul(m))
    }
}

fn columns_to_matrix(dim: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Orthogonalizes `w` against `basis` (two passes) and normalizes it, or
/// returns `None` when the residual norm is at most `abs_tol`.
fn deflate(basis: &[DVector<f64>], mut w: DVector<f64>, abs_tol: f64) -> Option<DVector<f64>> {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&w);
            w.axpy(-c, q, 1.0);
        }
    }
    let norm = w.norm();
    (norm > abs_tol).then(|| w / norm)
}

/// Orthonormal basis of the span of the columns of `vectors`.
pub fn build_basis_matrix(vectors: &DMatrix<f64>, rank_tol: f64) -> Result<OrthonormalBasis> {
    if !(rank_tol > 0.0) {
        return Err(invalid(format!("rank tolerance must be positive, got {rank_tol}")));
    }
    let dim = vectors.nrows();
    let max_norm = vectors.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if max_norm > 0.0 {
        let abs_tol = rank_tol * max_norm;
        for col in vectors.column_iter() {
            if cols.len() == dim {
                break;
            }
            if let Some(q) = deflate(&cols, col.into_owned(), abs_tol) {
                cols.push(q);
            }
        }
    }
    Ok(OrthonormalBasis { vectors: columns_to_matrix(dim, &cols) })
}

/// Orthonormal basis of `span{vectors}`; an all-zero input gives an empty
/// basis.
pub fn build_basis(vectors: &[HilbertVector], rank_tol: f64) -> Result<OrthonormalBasis> {
    let first = vectors.first().ok_or_else(|| invalid("cannot build a basis from no vectors"))?;
    let dim = first.dim();
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(shape_err("vectors have inconsistent dimensions"));
    }
    let m = DMatrix::from_fn(dim, vectors.len(), |i, j| vectors[j].coords()[i]);
    build_basis_matrix(&m, rank_tol)
}

/// Inner products of `v` with the basis vectors.
pub fn coordinates(basis: &OrthonormalBasis, v: &HilbertVector) -> Result<Vec<f64>> {
    if v.dim() != basis.dim() {
        return Err(shape_err(format!("vector of dim {} against basis of dim {}", v.dim(), basis.dim())));
    }
    Ok(basis.vectors.tr_mul(v.as_dvector()).iter().copied().collect())
}

/// Bases of the input span (`u_1..u_{N_x}`) and output span (`v_1..v_{N_y}`).
#[derive(Clone, Debug, PartialEq)]
pub struct BasisPair {
    pub x: OrthonormalBasis,
    pub y: OrthonormalBasis,
}

impl BasisPair {
    pub fn from_training_set(data: &TrainingSet, rank_tol: f64) -> Result<Self> {
        Ok(Self {
            x: build_basis_matrix(data.inputs(), rank_tol)?,
            y: build_basis_matrix(data.outputs(), rank_tol)?,
        })
    }
}

/// Finite-dimensional ERM problem in span coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateProblem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    ball: SchattenBall,
}

impl CoordinateProblem {
    /// `x` is `N_x × N`, `y` is `N_y × N`.
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, ball: SchattenBall) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(shape_err(format!("{} input columns but {} output columns", x.ncols(), y.ncols())));
        }
        if x.ncols() == 0 {
            return Err(invalid("coordinate problem has no samples"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("coordinates contain non-finite values"));
        }
        Ok(Self { x, y, ball })
    }

    pub fn from_bases(data: &TrainingSet, bases: &BasisPair, ball: SchattenBall) -> Result<Self> {
        Self::new(bases.x.coordinates_of(data.inputs())?, bases.y.coordinates_of(data.outputs())?, ball)
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn ball(&self) -> &SchattenBall {
        &self.ball
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// `(1/N) ‖Y − T X‖_F²`, evaluated from residuals.
    pub fn objective(&self, t: &DMatrix<f64>) -> Result<f64> {
        if t.nrows() != self.y.nrows() || t.ncols() != self.x.nrows() {
            return Err(shape_err(format!(
                "operator is {}x{}, problem needs {}x{}",
                t.nrows(),
                t.ncols(),
                self.y.nrows(),
                self.x.nrows()
            )));
        }
        let n = self.len() as f64;
        if t.is_empty() {
            return Ok(self.y.norm_squared() / n);
        }
        Ok((&self.y - t * &self.x).norm_squared() / n)
    }
}

/// Projected gradient descent settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the objective falls by less than this fraction over `window`
    /// iterations.
    pub rel_tol: f64,
    pub window: usize,
    /// Feasibility tolerance handed to the Schatten projection.
    pub projection_tol: f64,
    /// Required bound on `‖G(T)‖_F / (L · B)` for the projected-gradient
    /// mapping `G` at exit.
    pub stationarity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            rel_tol: 1e-9,
            window: 10,
            projection_tol: 1e-10,
            stationarity_tol: 1e-7,
        }
    }
}

/// Diagnostics from [`solve_erm`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// Objective after every iterate, starting with `T = 0`.
    pub objective_trace: Vec<f64>,
    pub final_risk: f64,
    pub converged: bool,
    pub active_constraint: bool,
    pub schatten_norm: f64,
    /// Lipschitz constant `(2/N) λ_max(X Xᵀ)` of the gradient.
    pub lipschitz: f64,
}

impl FitReport {
    pub const CSV_HEADER: &'static str = "iterations,final_risk,converged,active_constraint,schatten_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{},{},{:.16e}",
            self.iterations, self.final_risk, self.converged, self.active_constraint, self.schatten_norm
        )
    }
}

/// Quadratic objective in Gram form: `J(T) = (‖Y‖² − 2⟨T, C⟩ + ⟨T G, T⟩) / N`
/// with `G = X Xᵀ` and `C = Y Xᵀ`.
struct Quadratic {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    y_sq: f64,
    n: f64,
}

impl Quadratic {
    fn value(&self, t: &DMatrix<f64>) -> f64 {
        let tg = t * &self.gram;
        ((self.y_sq - 2.0 * t.dot(&self.cross) + tg.dot(t)) / self.n).max(0.0)
    }

    fn gradient(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        (t * &self.gram - &self.cross) * (2.0 / self.n)
    }
}

/// Minimizes `(1/N) ‖Y − T X‖_F²` over `‖T‖_{S_p} <= B` by projected gradient
/// descent with step `1/L`, starting from `T = 0`.
///
/// Hitting the iteration cap is not an error: the last (feasible) iterate is
/// returned with `converged = false`.
pub fn solve_erm(problem: &CoordinateProblem, opts: &SolverOptions) -> Result<(DMatrix<f64>, FitReport)> {
    let start = DMatrix::zeros(problem.y.nrows(), problem.x.nrows());
    solve_erm_from(problem, opts, &start)
}

/// [`solve_erm`] started from the projection of `start` onto the ball.
pub fn solve_erm_from(
    problem: &CoordinateProblem,
    opts: &SolverOptions,
    start: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, FitReport)> {
    if opts.window == 0 || !(opts.rel_tol >= 0.0) {
        return Err(invalid("solver window must be >= 1 and rel_tol >= 0"));
    }
    let (n_y, n_x) = (problem.y.nrows(), problem.x.nrows());
    if start.shape() != (n_y, n_x) {
        return Err(shape_err(format!("start point is {:?}, expected {n_y}x{n_x}", start.shape())));
    }
    let n = problem.len() as f64;
    let ball = problem.ball;
    let mut t = if n_x == 0 || n_y == 0 {
        start.clone()
    } else {
        project_schatten_matrix(start, &ball, opts.projection_tol)?
    };

    let largest_sv = matrix_spectrum(&problem.x).largest();
    let lipschitz = 2.0 / n * largest_sv * largest_sv;
    let j0 = problem.objective(&t)?;
    if n_x == 0 || n_y == 0 || lipschitz == 0.0 {
        let report = FitReport {
            iterations: 0,
            objective_trace: vec![j0],
            final_risk: j0,
            converged: true,
            active_constraint: ball.radius() == 0.0,
            schatten_norm: 0.0,
            lipschitz,
        };
        return Ok((DMatrix::zeros(n_y, n_x), report));
    }

    let quad = Quadratic {
        gram: &problem.x * problem.x.transpose(),
        cross: &problem.y * problem.x.transpose(),
        y_sq: problem.y.norm_squared(),
        n,
    };
    let step = 1.0 / lipschitz;
    let stationarity_bound = opts.stationarity_tol * lipschitz * ball.radius();

    let mut trace = vec![quad.value(&t)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let candidate = &t - quad.gradient(&t) * step;
        t = project_schatten_matrix(&candidate, &ball, opts.projection_tol)?;
        iterations += 1;
        let j = quad.value(&t);
        trace.push(j);

        if iterations >= opts.window {
            let earlier = trace[iterations - opts.window];
            if earlier - j <= opts.rel_tol * earlier.abs() {
                let next = project_schatten_matrix(&(&t - quad.gradient(&t) * step), &ball, opts.projection_tol)?;
                if lipschitz * (&t - next).norm() <= stationarity_bound {
                    converged = true;
                    break;
                }
            }
        }
    }

    let norm = lp_norm(matrix_spectrum(&t).values(), ball.order());
    let report = FitReport {
        iterations,
        objective_trace: trace,
        final_risk: problem.objective(&t)?,
        converged,
        active_constraint: norm >= ball.radius() * (1.0 - 1e-6),
        schatten_norm: norm,
        lipschitz,
    };
    Ok((t, report))
}

/// Ambient operator `Σ_ij T̂_ij v_i u_jᵀ` from a span-coordinate solution.
pub fn lift(t_hat: &DMatrix<f64>, bases: &BasisPair) -> Result<LinearOperator> {
    let (n_y, n_x) = (bases.y.size(), bases.x.size());
    if t_hat.nrows() != n_y || t_hat.ncols() != n_x {
        return Err(shape_err(format!(
            "coordinate operator is {}x{}, bases have sizes {}x{}",
            t_hat.nrows(),
            t_hat.ncols(),
            n_y,
            n_x
        )));
    }
    if n_x == 0 || n_y == 0 {
        return Ok(LinearOperator::zeros(bases.y.dim(), bases.x.dim()));
    }
    let (a, s, b) = thin_svd(t_hat);
    LinearOperator::factored(bases.y.vectors() * a, s, bases.x.vectors() * b)
}

/// Mean squared residual `(1/N) Σ ‖y_n − T x_n‖²`.
pub fn empirical_risk(t: &LinearOperator, data: &TrainingSet) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("empirical risk of an empty sample"));
    }
    if t.d_x() != data.d_x() || t.d_y() != data.d_y() {
        return Err(shape_err(format!(
            "operator is {}x{}, data has d_y={}, d_x={}",
            t.d_y(),
            t.d_x(),
            data.d_y(),
            data.d_x()
        )));
    }
    Ok(residual_sq_sum(t, data.inputs(), data.outputs()) / data.len() as f64)
}

pub(crate) fn residual_sq_sum(t: &LinearOperator, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let pred = if t.is_factored() {
        let (u, s, v) = t.factors();
        let mut coeff = v.tr_mul(x);
        for (mut row, sk) in coeff.row_iter_mut().zip(s.iter()) {
            row *= *sk;
        }
        u * coeff
    } else {
        t.materialize() * x
    };
    (y - pred).norm_squared()
}

/// Output of the full pipeline: bases, coordinate problem solve and lift.
#[derive(Clone, Debug)]
pub struct Fit {
    pub operator: LinearOperator,
    pub coordinate_solution: DMatrix<f64>,
    pub bases: BasisPair,
    pub report: FitReport,
}

/// Runs the span-reduction pipeline on a training set.
pub fn fit(data: &TrainingSet, ball: SchattenBall, opts: &SolverOptions) -> Result<Fit> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty training set".into()));
    }
    let bases = BasisPair::from_training_set(data, DEFAULT_RANK_TOL)?;
    let problem = CoordinateProblem::from_bases(data, &bases, ball)?;
    let (t_hat, report) = solve_erm(&problem, opts)?;
    let operator = lift(&t_hat, &bases)?;
    Ok(Fit { operator, coordinate_solution: t_hat, bases, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{rank1, schatten_norm, Order};
    use crate::projection::is_member;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn ball(p: f64, b: f64) -> SchattenBall {
        SchattenBall::new(Order::new(p).unwrap(), b).unwrap()
    }

    fn hv(c: &[f64]) -> HilbertVector {
        HilbertVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn basis_gram_schmidt_example() {
        let b = build_basis(&[hv(&[1.0, 0.0, 0.0]), hv(&[1.0, 1.0, 0.0])], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.size(), 2);
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((b.vectors() - expected).amax() < 1e-15);
    }

    #[test]
    fn duplicates_collapse() {
        let v = hv(&[3.0, 0.0, 4.0]);
        let b = build_basis(&[v.clone(), v.clone(), v], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.size(), 1);
        assert!((b.vectors().column(0) - DVector::from_vec(vec![0.6, 0.0, 0.8])).amax() < 1e-15);
    }

    #[test]
    fn zero_vectors_give_empty_basis() {
        let b = build_basis(&[HilbertVector::zeros(4), HilbertVector::zeros(4)], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(b.size(), 0);
        assert!(build_basis(&[], DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn many_vectors_in_low_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = rand_mat(&mut rng, 8, 50);
        let b = build_basis_matrix(&m, DEFAULT_RANK_TOL).unwrap();
        // Rank oracle: count Gram eigenvalues above the relative cut.
        let eig = nalgebra::SymmetricEigen::new(&m * m.transpose()).eigenvalues;
        let top = eig.amax();
        let rank = eig.iter().filter(|&&l| l > top * 1e-20).count();
        assert_eq!(b.size(), rank);
        assert_eq!(b.size(), 8);
        let recon = b.vectors() * b.coordinates_of(&m).unwrap();
        for (orig, rec) in m.column_iter().zip(recon.column_iter()) {
            assert!((orig - rec).norm() <= 1e-8 * orig.norm());
        }
    }

    #[test]
    fn coordinate_examples() {
        let b = build_basis(&[HilbertVector::basis(3, 0), HilbertVector::basis(3, 1)], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(coordinates(&b, &hv(&[3.0, 4.0, 0.0])).unwrap(), vec![3.0, 4.0]);
        assert_eq!(coordinates(&b, &hv(&[0.0, 0.0, 7.0])).unwrap(), vec![0.0, 0.0]);
        assert!(coordinates(&b, &hv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn in_span_vectors_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let gen = rand_mat(&mut rng, 10, 4);
        let b = build_basis_matrix(&gen, DEFAULT_RANK_TOL).unwrap();
        for _ in 0..20 {
            let w = &gen * DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let v = HilbertVector::from_dvector(w.clone()).unwrap();
            let c = DVector::from_vec(coordinates(&b, &v).unwrap());
            assert!((b.vectors() * c - w).norm() <= 1e-10);
        }
    }

    #[test]
    fn scalar_clipped_regression() {
        let p = CoordinateProblem::new(
            DMatrix::from_element(1, 5, 1.0),
            DMatrix::from_element(1, 5, 2.0),
            ball(2.0, 1.0),
        )
        .unwrap();
        let (t, rep) = solve_erm(&p, &SolverOptions::default()).unwrap();
        assert!((t[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((rep.final_risk - 1.0).abs() < 1e-12);
        assert!(rep.converged && rep.active_constraint);
    }

    #[test]
    fn realizable_problem_recovers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = rand_mat(&mut rng, 4, 40);
        let truth = rand_mat(&mut rng, 3, 4);
        let y = &truth * &x;
        // Normal-equation oracle.
        let oracle = &y * x.transpose() * (&x * x.transpose()).try_inverse().unwrap();
        let p = CoordinateProblem::new(x, y, ball(1.0, 1e3)).unwrap();
        let (t, rep) = solve_erm(&p, &SolverOptions::default()).unwrap();
        assert!((&t - &oracle).amax() <= 1e-6, "{}", (&t - &oracle).amax());
        assert!(rep.final_risk <= 1e-12, "{}", rep.final_risk);
        assert!(!rep.active_constraint);
    }

    #[test]
    fn degenerate_ball_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = rand_mat(&mut rng, 3, 20);
        let y = rand_mat(&mut rng, 2, 20);
        let mean_sq = y.norm_squared() / 20.0;
        let p = CoordinateProblem::new(x, y, ball(2.0, 1e-9)).unwrap();
        let (t, rep) = solve_erm(&p, &SolverOptions::default()).unwrap();
        assert!(t.norm() <= 1e-9 * (1.0 + 1e-10));
        assert!((rep.final_risk - mean_sq).abs() < 1e-6);
    }

    #[test]
    fn zero_inputs_give_zero_operator() {
        let p = CoordinateProblem::new(DMatrix::zeros(2, 4), DMatrix::from_element(1, 4, 1.0), ball(1.0, 1.0)).unwrap();
        let (t, rep) = solve_erm(&p, &SolverOptions::default()).unwrap();
        assert_eq!(t, DMatrix::zeros(1, 2));
        assert_eq!(rep.final_risk, 1.0);
        assert_eq!(rep.lipschitz, 0.0);
    }

    #[test]
    fn objective_trace_is_monotone_and_result_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let b = ball(p, 0.5);
            let prob = CoordinateProblem::new(rand_mat(&mut rng, 5, 30), rand_mat(&mut rng, 4, 30), b).unwrap();
            let (t, rep) = solve_erm(&prob, &SolverOptions::default()).unwrap();
            let scale = rep.objective_trace[0].max(1.0);
            let worst = rep.objective_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
            assert!(worst <= 1e-12 * scale, "p={p} worst increase {worst:e} after {} iterations", rep.iterations);
            let op = LinearOperator::dense(t).unwrap();
            assert!(is_member(&op, &b, 1e-10));
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let prob = CoordinateProblem::new(rand_mat(&mut rng, 5, 30), rand_mat(&mut rng, 4, 30), ball(1.5, 0.5)).unwrap();
        let opts = SolverOptions { max_iter: 3, ..Default::default() };
        let (t, rep) = solve_erm(&prob, &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert!(is_member(&LinearOperator::dense(t).unwrap(), prob.ball(), 1e-10));
    }

    #[test]
    fn lift_identity_on_coordinate_span() {
        let bx = build_basis(&[HilbertVector::basis(3, 0), HilbertVector::basis(3, 1)], DEFAULT_RANK_TOL).unwrap();
        let by = bx.clone();
        let op = lift(&DMatrix::identity(2, 2), &BasisPair { x: bx, y: by }).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((op.materialize() - expected).amax() < 1e-14);
        assert!(lift(&DMatrix::identity(3, 3), &BasisPair {
            x: build_basis(&[HilbertVector::basis(3, 0)], DEFAULT_RANK_TOL).unwrap(),
            y: build_basis(&[HilbertVector::basis(3, 0)], DEFAULT_RANK_TOL).unwrap(),
        })
        .is_err());
    }

    #[test]
    fn lift_preserves_norms_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let xs = rand_mat(&mut rng, 9, 4);
        let ys = rand_mat(&mut rng, 7, 3);
        let bases = BasisPair {
            x: build_basis_matrix(&xs, DEFAULT_RANK_TOL).unwrap(),
            y: build_basis_matrix(&ys, DEFAULT_RANK_TOL).unwrap(),
        };
        let t_hat = rand_mat(&mut rng, 3, 4);
        let op = lift(&t_hat, &bases).unwrap();
        let coord_op = LinearOperator::dense(t_hat.clone()).unwrap();
        for order in [Order::Finite(1.0), Order::Finite(2.5), Order::Infinity] {
            assert!((schatten_norm(&op, order) - schatten_norm(&coord_op, order)).abs() < 1e-10);
        }
        for col in xs.column_iter() {
            let lifted = op.apply(&HilbertVector::from_dvector(col.into_owned()).unwrap()).unwrap();
            let coord = &t_hat * bases.x.vectors().tr_mul(&col);
            let back = bases.y.vectors().tr_mul(lifted.as_dvector());
            assert!((back - coord).amax() < 1e-10);
        }
    }

    #[test]
    fn empirical_risk_cases() {
        let data = TrainingSet::from_pairs(
            &[(hv(&[1.0, 0.0]), hv(&[2.0, 0.0])), (hv(&[0.0, 1.0]), hv(&[0.0, 4.0]))],
            1.0,
            4.0,
        )
        .unwrap();
        assert_eq!(empirical_risk(&LinearOperator::identity(2), &data).unwrap(), 5.0);
        assert_eq!(empirical_risk(&LinearOperator::zeros(2, 2), &data).unwrap(), 10.0);
        let exact = LinearOperator::from_diagonal(&[2.0, 4.0]).unwrap();
        assert_eq!(empirical_risk(&exact, &data).unwrap(), 0.0);
        assert!(matches!(empirical_risk(&LinearOperator::identity(3), &data), Err(Error::Shape(_))));
        let empty = TrainingSet::from_matrices(DMatrix::zeros(2, 0), DMatrix::zeros(2, 0), 1.0, 1.0).unwrap();
        assert!(empirical_risk(&LinearOperator::identity(2), &empty).is_err());
    }

    #[test]
    fn training_set_enforces_bounds() {
        let x = DMatrix::from_element(2, 1, 1.0);
        assert!(TrainingSet::from_matrices(x.clone(), x.clone(), 1.0, 2.0).is_err());
        assert!(TrainingSet::from_matrices(x.clone(), x, 2.0, 2.0).is_ok());
    }

    #[test]
    fn projected_loss_domination() {
        // Compressing any operator onto the data spans never raises the loss
        // for pairs drawn from those spans.
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        for _ in 0..50 {
            let gx = rand_mat(&mut rng, 8, 3);
            let gy = rand_mat(&mut rng, 8, 4);
            let px = build_basis_matrix(&gx, DEFAULT_RANK_TOL).unwrap();
            let py = build_basis_matrix(&gy, DEFAULT_RANK_TOL).unwrap();
            let proj_x = px.vectors() * px.vectors().transpose();
            let proj_y = py.vectors() * py.vectors().transpose();
            let t = rand_mat(&mut rng, 8, 8);
            let compressed = &proj_y * &t * &proj_x;
            let x = &gx * DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let y = &gy * DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let loss_c = (&y - &compressed * &x).norm_squared();
            let loss_t = (&y - &t * &x).norm_squared();
            assert!(loss_c <= loss_t + 1e-10);
            let sc = matrix_spectrum(&compressed);
            let st = matrix_spectrum(&t);
            for (a, b) in sc.values().iter().zip(st.values()) {
                assert!(*a <= b + 1e-10);
            }
        }
    }

    #[test]
    fn fit_pipeline_matches_coordinate_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let x = rand_mat(&mut rng, 6, 12) * 0.3;
        let a = HilbertVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = HilbertVector::from_dvector(DVector::from_fn(6, |_, _| rng.random_range(-0.3..0.3))).unwrap();
        let truth = rank1(&a, &b);
        let y = truth.materialize() * &x;
        let data = TrainingSet::with_observed_bounds(x, y).unwrap();
        let f = fit(&data, ball(1.0, 10.0), &SolverOptions::default()).unwrap();
        assert_eq!(f.bases.y.size(), 1);
        let risk = empirical_risk(&f.operator, &data).unwrap();
        assert!((risk - f.report.final_risk).abs() < 1e-12);
        assert!(risk < 1e-12);
    }
}
