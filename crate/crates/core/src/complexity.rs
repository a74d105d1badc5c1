//! Rademacher-complexity experiments and closed-form generalization bounds.
//!
//! The random operators `T_xx = Σ σ_n x_n x_nᵀ` and `T_yx = Σ σ_n y_n x_nᵀ`
//! (with Rademacher signs `σ_n`) grow like `N^{max(1/2, 1/q)}` in Schatten
//! q-norm. [`mc_growth`] estimates their mean norms over a grid of sample
//! sizes, checks the growth bound in every cell, and fits the log-log
//! exponent.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::{derived_rng, make_ground_truth, sample_pair, streams, SampleDistribution, ScenarioSpec};
use crate::error::{invalid, shape_err, Error, Result};
use crate::operator::{matrix_spectrum, HilbertVector, LinearOperator, Order, SchattenBall};
use crate::stats::{loglog_fit, PowerFit};

/// Relative slack when comparing a Monte-Carlo mean with its bound, to
/// absorb rounding in cases where the bound is attained exactly.
pub const BOUND_ROUNDING_SLACK: f64 = 1e-12;

/// Fits with `r²` below this are reported as unreliable.
pub const RELIABLE_R2: f64 = 0.95;

/// How the samples `x_n` (and `y_n`) are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Design {
    /// `x_n = y_n = e_1` for every `n`; the norm collapses to `|Σ σ_n|`.
    FixedVector,
    /// `x_n = y_n = e_n` in dimension `max(N_grid)`; every singular value is 1.
    Orthonormal,
    /// i.i.d. pairs drawn from a scenario.
    IidScenario(ScenarioSpec),
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::FixedVector => "fixed-vector",
            Design::Orthonormal => "orthonormal",
            Design::IidScenario(_) => "iid-scenario",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RademacherConfig {
    /// Strictly increasing sample counts.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub q: Order,
    pub design: Design,
    pub seed: u64,
}

impl RademacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(Error::Config("N grid must be nonempty with N >= 1".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("N grid must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if let Design::IidScenario(spec) = &self.design {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Monte-Carlo summary for one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthCell {
    pub n: usize,
    pub trials: usize,
    pub mean_norm_xx: f64,
    pub mean_norm_yx: f64,
    pub lemma_bound_xx: f64,
    pub lemma_bound_yx: f64,
    pub violated_xx: bool,
    pub violated_yx: bool,
    /// Either bound is exceeded.
    pub violated: bool,
}

/// Per-N means plus fitted log-log exponents.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthFit {
    pub design: String,
    pub q: Order,
    pub cells: Vec<GrowthCell>,
    pub exponent_xx: f64,
    pub r2_xx: f64,
    pub exponent_yx: f64,
    pub r2_yx: f64,
    /// `r² >= 0.95` for both fits and the grid spans at least two decades.
    pub reliable: bool,
}

impl GrowthFit {
    pub const CSV_HEADER: &'static str =
        "design,q,N,trials,mean_norm_xx,mean_norm_yx,lemma_bound_xx,lemma_bound_yx,violated";

    pub fn violations(&self) -> usize {
        self.cells.iter().filter(|c| c.violated).count()
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    self.design,
                    self.q,
                    c.n,
                    c.trials,
                    c.mean_norm_xx,
                    c.mean_norm_yx,
                    c.lemma_bound_xx,
                    c.lemma_bound_yx,
                    c.violated
                )
            })
            .collect()
    }

    /// Summary row: `fit,<design>,<q>,exponent_xx,r2_xx,exponent_yx,r2_yx,reliable`.
    pub fn summary_row(&self) -> String {
        format!(
            "fit,{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.design, self.q, self.exponent_xx, self.r2_xx, self.exponent_yx, self.r2_yx, self.reliable
        )
    }
}

/// Sample columns stored sparsely, so designs like `x_n = e_n` in a large
/// ambient dimension assemble in `O(N)` work.
struct SparseColumns {
    dim: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    fn from_dense(dim: usize, cols: impl IntoIterator<Item = DVector<f64>>) -> Self {
        let cols = cols
            .into_iter()
            .map(|c| c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
            .collect();
        Self { dim, cols }
    }

    fn norm_sq(&self, n: usize) -> f64 {
        self.cols[n].iter().map(|(_, v)| v * v).sum()
    }
}

/// `Σ σ_n a_n b_nᵀ` as a dense `dim(a) × dim(b)` matrix.
fn signed_outer_sum(a: &SparseColumns, b: &SparseColumns, signs: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.dim, b.dim);
    for ((ca, cb), &s) in a.cols.iter().zip(&b.cols).zip(signs) {
        for &(i, ai) in ca {
            for &(j, bj) in cb {
                out[(i, j)] += s * ai * bj;
            }
        }
    }
    out
}

/// Schatten q-norms of `T_xx = Σ σ_n x_n x_nᵀ` and `T_yx = Σ σ_n y_n x_nᵀ`.
pub fn random_op_norms(xs: &[HilbertVector], ys: &[HilbertVector], signs: &[f64], q: Order) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() != signs.len() {
        return Err(shape_err(format!(
            "{} inputs, {} outputs and {} signs",
            xs.len(),
            ys.len(),
            signs.len()
        )));
    }
    if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
        return Err(invalid("Rademacher signs must be +1 or -1"));
    }
    let first = match (xs.first(), ys.first()) {
        (Some(x), Some(y)) => (x.dim(), y.dim()),
        _ => return Ok((0.0, 0.0)),
    };
    if xs.iter().any(|x| x.dim() != first.0) || ys.iter().any(|y| y.dim() != first.1) {
        return Err(shape_err("samples have inconsistent dimensions"));
    }
    let x = SparseColumns::from_dense(first.0, xs.iter().map(|v| v.as_dvector().clone()));
    let y = SparseColumns::from_dense(first.1, ys.iter().map(|v| v.as_dvector().clone()));
    Ok(norm_pair(&x, &y, signs, q))
}

fn norm_pair(x: &SparseColumns, y: &SparseColumns, signs: &[f64], q: Order) -> (f64, f64) {
    let t_xx = signed_outer_sum(x, x, signs);
    let t_yx = signed_outer_sum(y, x, signs);
    (matrix_spectrum(&t_xx).schatten_norm(q), matrix_spectrum(&t_yx).schatten_norm(q))
}

fn rademacher_signs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// One trial's norms and the moment sums `Σ ‖x‖⁴`, `Σ ‖x‖²‖y‖²`.
struct TrialOutcome {
    norm_xx: f64,
    norm_yx: f64,
    sum_x4: f64,
    sum_x2y2: f64,
}

fn unit_design(dim: usize, n: usize, orthonormal: bool) -> SparseColumns {
    let cols = (0..n).map(|k| vec![(if orthonormal { k } else { 0 }, 1.0)]).collect();
    SparseColumns { dim, cols }
}

/// Monte-Carlo means of `‖T_xx‖_{S_q}`, `‖T_yx‖_{S_q}` per `N`, the growth
/// bounds `N^{max(1/2,1/q)} sqrt(E‖x‖⁴)` and `N^{max(1/2,1/q)} sqrt(E‖x‖²‖y‖²)`,
/// and log-log exponent fits.
///
/// Trials run in parallel; each uses a generator keyed by
/// `(seed, N, trial)` and results are reduced in trial order, so the output
/// does not depend on the thread count.
pub fn mc_growth(config: &RademacherConfig) -> Result<GrowthFit> {
    config.validate()?;
    let max_n = *config.n_grid.last().expect("validated nonempty");
    let truth = match &config.design {
        Design::IidScenario(spec) => Some(make_ground_truth(spec)?),
        _ => None,
    };
    let growth_exp = 0.5_f64.max(config.q.reciprocal());

    let mut cells = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let fixed = match &config.design {
            Design::FixedVector => Some(unit_design(2, n, false)),
            Design::Orthonormal => Some(unit_design(max_n, n, true)),
            Design::IidScenario(_) => None,
        };
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = derived_rng(&[config.seed, streams::RADEMACHER, n as u64, trial as u64]);
                let signs = rademacher_signs(&mut rng, n);
                let owned;
                let (x, y) = match (&fixed, &config.design, &truth) {
                    (Some(cols), _, _) => (cols, cols),
                    (None, Design::IidScenario(spec), Some(t)) => {
                        let pairs: Vec<_> = (0..n).map(|_| sample_pair(&mut rng, t, spec)).collect();
                        owned = (
                            SparseColumns::from_dense(spec.d_x, pairs.iter().map(|p| p.0.as_dvector().clone())),
                            SparseColumns::from_dense(spec.d_y, pairs.iter().map(|p| p.1.as_dvector().clone())),
                        );
                        (&owned.0, &owned.1)
                    }
                    _ => unreachable!("scenario design always has a truth operator"),
                };
                let (norm_xx, norm_yx) = norm_pair(x, y, &signs, config.q);
                let (mut sum_x4, mut sum_x2y2) = (0.0, 0.0);
                for k in 0..n {
                    let (nx, ny) = (x.norm_sq(k), y.norm_sq(k));
                    sum_x4 += nx * nx;
                    sum_x2y2 += nx * ny;
                }
                TrialOutcome { norm_xx, norm_yx, sum_x4, sum_x2y2 }
            })
            .collect();

        let trials = outcomes.len() as f64;
        let mean_norm_xx = outcomes.iter().map(|o| o.norm_xx).sum::<f64>() / trials;
        let mean_norm_yx = outcomes.iter().map(|o| o.norm_yx).sum::<f64>() / trials;
        let draws = trials * n as f64;
        let empirical_x4 = outcomes.iter().map(|o| o.sum_x4).sum::<f64>() / draws;
        let moment_x4 = match &config.design {
            Design::IidScenario(spec) if spec.sample_dist == SampleDistribution::UnitSphere => spec.c_x.powi(4),
            _ => empirical_x4,
        };
        let moment_x2y2 = outcomes.iter().map(|o| o.sum_x2y2).sum::<f64>() / draws;
        let scale = (n as f64).powf(growth_exp);
        let lemma_bound_xx = scale * moment_x4.sqrt();
        let lemma_bound_yx = scale * moment_x2y2.sqrt();
        let violated_xx = mean_norm_xx > lemma_bound_xx * (1.0 + BOUND_ROUNDING_SLACK);
        let violated_yx = mean_norm_yx > lemma_bound_yx * (1.0 + BOUND_ROUNDING_SLACK);
        cells.push(GrowthCell {
            n,
            trials: config.trials,
            mean_norm_xx,
            mean_norm_yx,
            lemma_bound_xx,
            lemma_bound_yx,
            violated_xx,
            violated_yx,
            violated: violated_xx || violated_yx,
        });
    }

    let ns: Vec<f64> = cells.iter().map(|c| c.n as f64).collect();
    let fit_of = |ys: Vec<f64>| {
        loglog_fit(&ns, &ys).unwrap_or(PowerFit { slope: f64::NAN, intercept: f64::NAN, r2: 0.0, points: 0 })
    };
    let fit_xx = fit_of(cells.iter().map(|c| c.mean_norm_xx).collect());
    let fit_yx = fit_of(cells.iter().map(|c| c.mean_norm_yx).collect());
    let decades = (max_n as f64 / config.n_grid[0] as f64).log10();
    let reliable = fit_xx.r2 >= RELIABLE_R2 && fit_yx.r2 >= RELIABLE_R2 && decades >= 2.0;

    Ok(GrowthFit {
        design: config.design.name().to_string(),
        q: config.q,
        cells,
        exponent_xx: fit_xx.slope,
        r2_xx: fit_xx.r2,
        exponent_yx: fit_yx.slope,
        r2_yx: fit_yx.r2,
        reliable,
    })
}

/// Right-hand sides of the Rademacher-complexity and excess-risk bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoremBounds {
    /// `C_y/√N + N^{-min(1/2,1/p)} (B² C_x + 2 B C_x C_y)`.
    pub rademacher: f64,
    /// `4 R_N + 2 (C_y + B C_x)² sqrt(ln(1/δ) / N)`.
    pub excess: f64,
}

/// Evaluates both bound formulas as written. For `p = ∞` the decay factor is
/// `N⁰ = 1` and the bound does not vanish.
pub fn theorem_bounds(n: usize, ball: &SchattenBall, c_x: f64, c_y: f64, delta: f64) -> Result<TheoremBounds> {
    if n == 0 {
        return Err(invalid("bounds need N >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("confidence parameter must lie in (0, 1), got {delta}")));
    }
    let nf = n as f64;
    let b = ball.radius();
    let decay = nf.powf(-(0.5_f64.min(ball.order().reciprocal())));
    let rademacher = c_y / nf.sqrt() + decay * (b * b * c_x + 2.0 * b * c_x * c_y);
    let excess = 4.0 * rademacher + 2.0 * (c_y + b * c_x).powi(2) * ((1.0 / delta).ln() / nf).sqrt();
    Ok(TheoremBounds { rademacher, excess })
}

/// `sup_{T in ball} ‖y − T x‖²` and an operator attaining it.
///
/// For nonzero `x`, `y` the value is `(‖y‖ + B‖x‖)²`, attained by
/// `−B/(‖y‖‖x‖) · y xᵀ`. If `x = 0` the loss is `‖y‖²` for every `T` and the
/// zero operator is returned. If `y = 0` the supremum is `(B‖x‖)²`, attained
/// by `−B e_1 xᵀ/‖x‖`.
pub fn sup_loss(x: &HilbertVector, y: &HilbertVector, ball: &SchattenBall) -> Result<(f64, LinearOperator)> {
    let (nx, ny) = (x.norm(), y.norm());
    let b = ball.radius();
    if nx == 0.0 || b == 0.0 {
        return Ok((ny * ny, LinearOperator::zeros(y.dim(), x.dim())));
    }
    let direction = if ny > 0.0 { y.as_dvector() / ny } else { HilbertVector::basis(y.dim(), 0).into_dvector() };
    let achiever = direction * x.as_dvector().transpose() * (-b / nx);
    Ok(((ny + b * nx).powi(2), LinearOperator::dense(achiever)?))
}
