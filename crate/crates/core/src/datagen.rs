//! Synthetic scenarios: ground-truth operators with power-law spectra,
//! bounded sample distributions with clipped Gaussian noise, and the
//! Tikhonov regularized inverse as a target operator.
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, stream, index)`, so sample `i` of a data set is the same no matter
//! how many samples are drawn, in which order, or on which thread.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::erm::TrainingSet;
use crate::error::{invalid, Error, Result};
use crate::operator::{thin_svd, HilbertVector, LinearOperator, Order};

/// Stream ids used to keep independent draws apart.
pub mod streams {
    pub const TRUTH: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const ORACLE_FIT: u64 = 3;
    pub const ORACLE_EVAL: u64 = 4;
    pub const RADEMACHER: u64 = 5;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for a tuple of counters (seed, stream, index, ...).
pub fn derived_rng(parts: &[u64]) -> ChaCha8Rng {
    let mut state = 0x5356_4E4C_4541_524E_u64;
    for &p in parts {
        state ^= p;
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleDistribution {
    /// Uniform on the sphere of radius `C_x`.
    UnitSphere,
    /// Uniform on the cube `[-1, 1]^d`, scaled by `C_x / sqrt(d)`.
    ScaledCube,
}

impl FromStr for SampleDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit-sphere" => Ok(Self::UnitSphere),
            "scaled-cube" => Ok(Self::ScaledCube),
            other => Err(invalid(format!("unknown sample distribution {other:?}"))),
        }
    }
}

impl fmt::Display for SampleDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UnitSphere => "unit-sphere",
            Self::ScaledCube => "scaled-cube",
        })
    }
}

/// Data-generating process: truth spectrum `s_k = scale · k^(-decay)`,
/// bounded inputs, isotropic noise and radial clipping of outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub decay: f64,
    pub scale: f64,
    pub sample_dist: SampleDistribution,
    pub c_x: f64,
    pub noise_sigma: f64,
    pub c_y: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            d_x: 16,
            d_y: 16,
            decay: 2.0,
            scale: 1.0,
            sample_dist: SampleDistribution::UnitSphere,
            c_x: 1.0,
            noise_sigma: 0.1,
            c_y: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_y == 0 {
            return Err(Error::Config("scenario dimensions must be >= 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(self.decay.is_finite() && self.decay >= 0.0) || !positive(self.scale) {
            return Err(Error::Config("decay must be >= 0 and scale > 0".into()));
        }
        if !positive(self.c_x) || !positive(self.c_y) {
            return Err(Error::Config("C_x and C_y must be > 0".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Truth spectrum `scale · k^(-decay)`, `k = 1..min(d_x, d_y)`.
    pub fn spectrum(&self) -> Vec<f64> {
        (1..=self.d_x.min(self.d_y)).map(|k| self.scale * (k as f64).powf(-self.decay)).collect()
    }

    /// `‖T₀‖_{S_p}` from the closed-form spectrum.
    pub fn truth_norm(&self, order: Order) -> f64 {
        crate::operator::lp_norm(&self.spectrum(), order)
    }
}

/// Columns of a seeded Haar-distributed `d × r` matrix with orthonormal
/// columns (QR of a Gaussian matrix with the sign of `diag(R)` fixed).
fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// Seeded operator with random orthonormal singular vectors and the
/// scenario's power-law spectrum.
pub fn make_ground_truth(spec: &ScenarioSpec) -> Result<LinearOperator> {
    spec.validate()?;
    let r = spec.d_x.min(spec.d_y);
    let mut rng = derived_rng(&[spec.seed, streams::TRUTH]);
    let u = random_orthonormal(&mut rng, spec.d_y, r);
    let v = random_orthonormal(&mut rng, spec.d_x, r);
    LinearOperator::factored(u, DVector::from_vec(spec.spectrum()), v)
}

/// Rescales `v` so its computed norm is at most `bound`.
fn clip_to_norm(v: &mut DVector<f64>, bound: f64) {
    let norm = v.norm();
    if norm <= bound {
        return;
    }
    let mut scale = bound / norm;
    loop {
        let trial = &*v * scale;
        if trial.norm() <= bound {
            *v = trial;
            return;
        }
        scale *= 1.0 - 4.0 * f64::EPSILON;
    }
}

fn draw_input(rng: &mut ChaCha8Rng, spec: &ScenarioSpec) -> DVector<f64> {
    let d = spec.d_x;
    let mut x = match spec.sample_dist {
        SampleDistribution::UnitSphere => loop {
            let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = g.norm();
            if n > 0.0 {
                break g * (spec.c_x / n);
            }
        },
        SampleDistribution::ScaledCube => {
            DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0)) * (spec.c_x / (d as f64).sqrt())
        }
    };
    clip_to_norm(&mut x, spec.c_x);
    x
}

/// One draw `(x, y)`: `x` from the input distribution, `y = T₀ x + ε`
/// clipped radially to `‖y‖ <= C_y`.
pub fn sample_pair(rng: &mut ChaCha8Rng, truth: &LinearOperator, spec: &ScenarioSpec) -> (HilbertVector, HilbertVector) {
    let x = draw_input(rng, spec);
    let mut y = truth.apply_unchecked(&x);
    if spec.noise_sigma > 0.0 {
        for yi in y.iter_mut() {
            *yi += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    clip_to_norm(&mut y, spec.c_y);
    assert!(x.norm() <= spec.c_x && y.norm() <= spec.c_y, "sample violates norm bounds");
    (
        HilbertVector::from_dvector(x).expect("finite input"),
        HilbertVector::from_dvector(y).expect("finite output"),
    )
}

/// Samples `start..start + n` of stream `(seed, stream)` as a training set.
pub fn generate(
    truth: &LinearOperator,
    spec: &ScenarioSpec,
    seed: u64,
    stream: u64,
    start: usize,
    n: usize,
) -> Result<TrainingSet> {
    if truth.d_x() != spec.d_x || truth.d_y() != spec.d_y {
        return Err(invalid("truth operator does not match scenario dimensions"));
    }
    let mut x = DMatrix::zeros(spec.d_x, n);
    let mut y = DMatrix::zeros(spec.d_y, n);
    for j in 0..n {
        let mut rng = derived_rng(&[seed, stream, (start + j) as u64]);
        let (xi, yi) = sample_pair(&mut rng, truth, spec);
        x.set_column(j, xi.as_dvector());
        y.set_column(j, yi.as_dvector());
    }
    TrainingSet::from_matrices(x, y, spec.c_x, spec.c_y)
}

/// Regularized inverse `(A*A + λ I)^{-1} A*`, built spectrally: singular
/// values `s/(s² + λ)` on the singular subspaces of `A*`.
pub fn tikhonov_truth(a: &LinearOperator, lambda: f64) -> Result<LinearOperator> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("Tikhonov parameter must be positive, got {lambda}")));
    }
    let (u, s, v) = a.factors();
    let filtered: Vec<f64> = s.iter().map(|sk| sk / (sk * sk + lambda)).collect();
    let mut order: Vec<usize> = (0..filtered.len()).collect();
    order.sort_by(|&i, &j| filtered[j].total_cmp(&filtered[i]));
    let k = order.len();
    let mut out_u = DMatrix::zeros(v.nrows(), k);
    let mut out_v = DMatrix::zeros(u.nrows(), k);
    let mut out_s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        out_u.set_column(dst, &v.column(src));
        out_v.set_column(dst, &u.column(src));
        out_s[dst] = filtered[src];
    }
    LinearOperator::factored(out_u, out_s, out_v)
}

/// Forward operator for the Tikhonov scenario: a seeded matrix with
/// spectrum `scale · k^(-decay)`.
pub fn smoothing_forward_operator(d: usize, decay: f64, seed: u64) -> Result<LinearOperator> {
    let spec = ScenarioSpec { d_x: d, d_y: d, decay, scale: 1.0, seed, ..Default::default() };
    let t = make_ground_truth(&spec)?;
    let (u, s, v) = thin_svd(&t.materialize());
    LinearOperator::factored(u, s, v)
}
