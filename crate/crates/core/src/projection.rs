//! Euclidean projection onto lp balls and Frobenius projection onto
//! Schatten balls.
//!
//! Schatten balls are unitarily invariant, so the Frobenius-nearest point
//! is obtained by projecting the singular value vector onto the matching
//! lp ball and reassembling with the original singular vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::operator::{lp_norm, thin_svd, LinearOperator, Order, SchattenBall};

/// Default feasibility tolerance for projections.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 200;
const MAX_NEWTON: usize = 100;

/// `{u : ‖u‖_p <= radius}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpBall {
    order: Order,
    radius: f64,
}

impl LpBall {
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
}

impl From<SchattenBall> for LpBall {
    fn from(b: SchattenBall) -> Self {
        LpBall { order: b.order(), radius: b.radius() }
    }
}

/// Projection result together with the Lagrange multiplier of the active
/// constraint `‖u‖_p^p <= radius^p`.
///
/// The multiplier satisfies `u_i - v_i + λ p |u_i|^{p-1} sign(u_i) = 0`; it is
/// `None` when the input was feasible or `p = ∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProjection {
    pub point: Vec<f64>,
    pub multiplier: Option<f64>,
}

/// Euclidean projection of `v` onto the lp ball.
pub fn project_lp(v: &[f64], ball: &LpBall, tol: f64) -> Result<Vec<f64>> {
    project_lp_detailed(v, ball, tol).map(|p| p.point)
}

pub fn project_lp_detailed(v: &[f64], ball: &LpBall, tol: f64) -> Result<LpProjection> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("vector has non-finite entries"));
    }
    let r = ball.radius;
    if lp_norm(v, ball.order) <= r {
        return Ok(LpProjection { point: v.to_vec(), multiplier: None });
    }
    if r == 0.0 {
        return Ok(LpProjection { point: vec![0.0; v.len()], multiplier: None });
    }

    let (mut point, multiplier): (Vec<f64>, Option<f64>) = match ball.order {
        Order::Infinity => (v.iter().map(|x| x.clamp(-r, r)).collect(), None),
        Order::Finite(p) if p == 1.0 => {
            let theta = l1_threshold(v, r);
            (v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect(), Some(theta))
        }
        Order::Finite(p) if p == 2.0 => {
            let norm = lp_norm(v, ball.order);
            let scale = r / norm;
            (v.iter().map(|x| x * scale).collect(), Some((norm / r - 1.0) / 2.0))
        }
        Order::Finite(p) => {
            let lambda = general_multiplier(v, p, r, tol)?;
            let c = lambda * p;
            (v.iter().map(|x| x.signum() * magnitude_root(x.abs(), c, p)).collect(), Some(lambda))
        }
    };
    shrink_into_ball(&mut point, ball.order, r);
    Ok(LpProjection { point, multiplier })
}

/// Soft threshold `θ` with `Σ max(|v_i| - θ, 0) = r`, by sorting.
fn l1_threshold(v: &[f64], r: f64) -> f64 {
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - r) / (j + 1) as f64;
        if m - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Nonnegative root of `u + c u^{p-1} = a` for `a >= 0`, `c >= 0`, `p > 1`.
///
/// The left side is increasing on `[0, a]`, so Newton steps are safeguarded
/// by bisection on that bracket.
fn magnitude_root(a: f64, c: f64, p: f64) -> f64 {
    if a == 0.0 || c == 0.0 {
        return a;
    }
    let g = |u: f64| u + c * u.powf(p - 1.0) - a;
    let (mut lo, mut hi) = (0.0_f64, a);
    let mut u = a.min((a / c).powf(1.0 / (p - 1.0)));
    for _ in 0..MAX_NEWTON {
        let gu = g(u);
        if gu == 0.0 {
            return u;
        }
        if gu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let slope = 1.0 + c * (p - 1.0) * u.powf(p - 2.0);
        let mut next = u - gu / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * u.max(f64::MIN_POSITIVE) || hi - lo <= 4.0 * f64::EPSILON * a {
            return next;
        }
        u = next;
    }
    u
}

fn norm_at(v: &[f64], c: f64, p: f64) -> f64 {
    let mags: Vec<f64> = v.iter().map(|x| magnitude_root(x.abs(), c, p)).collect();
    lp_norm(&mags, Order::Finite(p))
}

/// Root of `‖u(λ)‖_p = r` in the multiplier `λ` (the norm decreases in `λ`).
///
/// Illinois-style regula falsi with a bisection fallback, iterated to
/// near machine precision; `tol` is the acceptance threshold on the final
/// norm residual.
fn general_multiplier(v: &[f64], p: f64, r: f64, tol: f64) -> Result<f64> {
    let f = |lambda: f64| norm_at(v, lambda * p, p) - r;
    let mut hi = 1.0_f64;
    let mut f_hi = f(hi);
    let mut doublings = 0;
    while f_hi > 0.0 {
        hi *= 2.0;
        f_hi = f(hi);
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::NoConvergence { what: "lp projection bracket", iterations: doublings });
        }
    }
    let (mut lo, mut f_lo) = (0.0_f64, f(0.0));
    let target = (64.0 * f64::EPSILON).min(tol) * r;
    let mut residual_hi = f_hi;
    let mut last_side = 0i8;
    for _ in 0..MAX_BISECTIONS {
        if residual_hi.abs() <= target || hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
        let mut mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let f_mid = f(mid);
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
            if last_side == -1 {
                f_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            residual_hi = f_mid;
            if last_side == 1 {
                f_lo *= 0.5;
            }
            last_side = 1;
        }
    }
    if residual_hi.abs() <= tol * r {
        Ok(hi)
    } else {
        Err(Error::NoConvergence { what: "lp projection", iterations: MAX_BISECTIONS })
    }
}

/// Pulls a point whose computed norm exceeds `r` by rounding back inside, so
/// projected points are exactly feasible and projection is idempotent.
fn shrink_into_ball(u: &mut [f64], order: Order, r: f64) {
    let norm = lp_norm(u, order);
    if norm <= r {
        return;
    }
    let mut scale = r / norm;
    for _ in 0..64 {
        let trial: Vec<f64> = u.iter().map(|x| x * scale).collect();
        if lp_norm(&trial, order) <= r {
            u.copy_from_slice(&trial);
            return;
        }
        scale *= 1.0 - 4.0 * f64::EPSILON;
    }
}

/// Frobenius projection of `T` onto the Schatten ball.
pub fn project_schatten(t: &LinearOperator, ball: &SchattenBall, tol: f64) -> Result<LinearOperator> {
    if t.schatten_norm(ball.order()) <= ball.radius() {
        return Ok(t.clone());
    }
    let (u, s, v) = t.factors();
    let projected = project_lp(s.as_slice(), &LpBall::from(*ball), tol)?;
    Ok(LinearOperator::from_factors(u, DVector::from_vec(projected), v))
}

/// Dense-matrix form of [`project_schatten`], used by the solver.
pub(crate) fn project_schatten_matrix(m: &DMatrix<f64>, ball: &SchattenBall, tol: f64) -> Result<DMatrix<f64>> {
    let (u, s, v) = thin_svd(m);
    if lp_norm(s.as_slice(), ball.order()) <= ball.radius() {
        return Ok(m.clone());
    }
    let projected = project_lp(s.as_slice(), &LpBall::from(*ball), tol)?;
    let mut us = u;
    for (mut col, sk) in us.column_iter_mut().zip(projected) {
        col *= sk;
    }
    Ok(us * v.transpose())
}

/// `‖T‖_{S_p} <= B (1 + tol)`.
pub fn is_member(t: &LinearOperator, ball: &SchattenBall, tol: f64) -> bool {
    t.schatten_norm(ball.order()) <= ball.radius() * (1.0 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball(p: f64, r: f64) -> LpBall {
        LpBall::new(Order::new(p).unwrap(), r).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn l1_example() {
        let out = project_lp(&[3.0, 1.0], &ball(1.0, 2.0), DEFAULT_TOL).unwrap();
        assert!(close(&out, &[2.0, 0.0], 1e-15), "{out:?}");
    }

    #[test]
    fn l1_threshold_matches_dense_dual_scan() {
        // Scan θ over [0, 3] and keep the θ whose soft-threshold hits the radius.
        let v = [3.0, 1.0];
        let best = (0..=300_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| {
                let f = |t: f64| (v.iter().map(|x: &f64| (x - t).max(0.0)).sum::<f64>() - 2.0).abs();
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        assert!((best - 1.0).abs() < 1e-5);
        assert!((l1_threshold(&v, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l2_radial_scaling() {
        let v = [3.0, 0.0, -4.0];
        let out = project_lp(&v, &ball(2.0, 1.0), DEFAULT_TOL).unwrap();
        assert!(close(&out, &[0.6, 0.0, -0.8], 1e-15));
    }

    #[test]
    fn linf_clipping() {
        let out = project_lp(&[3.0, 4.0], &ball(f64::INFINITY, 2.0), DEFAULT_TOL).unwrap();
        assert_eq!(out, vec![2.0, 2.0]);
    }

    #[test]
    fn feasible_points_returned_exactly() {
        let v = [0.1, -0.2, 0.3];
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            assert_eq!(project_lp(&v, &ball(p, 1.0), DEFAULT_TOL).unwrap(), v.to_vec());
        }
    }

    #[test]
    fn rejects_bad_order_and_tolerance() {
        assert!(matches!(Order::new(0.5).and_then(|o| LpBall::new(o, 1.0)), Err(Error::UnsupportedOrder(_))));
        assert!(project_lp(&[1.0], &ball(2.0, 1.0), 0.0).is_err());
        assert!(project_lp(&[f64::NAN], &ball(2.0, 1.0), 1e-10).is_err());
    }

    #[test]
    fn signs_are_preserved() {
        let v = [-3.0, 2.0, -0.5, 1.5];
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let out = project_lp(&v, &ball(p, 1.0), DEFAULT_TOL).unwrap();
            for (o, x) in out.iter().zip(&v) {
                assert!(*o == 0.0 || o.signum() == x.signum());
                assert!(o.abs() <= x.abs());
            }
        }
    }

    #[test]
    fn kkt_conditions_for_general_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in [1.25, 1.5, 3.0, 4.5] {
            for _ in 0..50 {
                let v: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
                let b = ball(p, 1.0);
                let res = project_lp_detailed(&v, &b, DEFAULT_TOL).unwrap();
                let lambda = res.multiplier.expect("constraint active");
                assert!(lambda >= 0.0);
                for (u, x) in res.point.iter().zip(&v) {
                    let stationarity = u + lambda * p * u.abs().powf(p - 1.0) * u.signum() - x;
                    assert!(stationarity.abs() < 1e-8, "p={p} residual {stationarity}");
                }
                let slack = lp_norm(&res.point, Order::Finite(p)) - 1.0;
                assert!((lambda * slack).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn idempotent_for_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            for _ in 0..50 {
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
                let b = ball(p, 1.3);
                let once = project_lp(&v, &b, DEFAULT_TOL).unwrap();
                let twice = project_lp(&once, &b, DEFAULT_TOL).unwrap();
                assert!(close(&once, &twice, 1e-10));
                assert!(lp_norm(&once, b.order()) <= 1.3);
            }
        }
    }

    #[test]
    fn schatten_clip_example() {
        let t = LinearOperator::from_diagonal(&[3.0, 4.0]).unwrap();
        let b = SchattenBall::new(Order::Infinity, 2.0).unwrap();
        let out = project_schatten(&t, &b, DEFAULT_TOL).unwrap();
        assert!((out.materialize() - DMatrix::from_diagonal_element(2, 2, 2.0)).amax() < 1e-14);
    }

    #[test]
    fn schatten_feasible_unchanged() {
        let t = LinearOperator::from_diagonal(&[0.3, 0.2]).unwrap();
        let b = SchattenBall::new(Order::Finite(1.0), 1.0).unwrap();
        let out = project_schatten(&t, &b, DEFAULT_TOL).unwrap();
        assert_eq!(out.spectrum(), t.spectrum());
        assert_eq!(out, t);
    }

    #[test]
    fn schatten_projection_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = LinearOperator::dense(DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let b = SchattenBall::new(Order::Finite(1.5), 1.0).unwrap();
        let proj = project_schatten(&t, &b, DEFAULT_TOL).unwrap();
        let best = t.frobenius_distance(&proj).unwrap();
        for _ in 0..10_000 {
            let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let cand = LinearOperator::dense(m).unwrap();
            let scale = rng.random_range(0.0..1.0) / cand.schatten_norm(b.order());
            let cand = cand.scale(scale);
            assert!(t.frobenius_distance(&cand).unwrap() - best >= -1e-7);
        }
    }

    #[test]
    fn membership() {
        let b = SchattenBall::new(Order::Finite(1.0), 2.0).unwrap();
        assert!(is_member(&LinearOperator::zeros(3, 4), &b, DEFAULT_TOL));
        assert!(!is_member(&LinearOperator::from_diagonal(&[3.0]).unwrap(), &b, DEFAULT_TOL));
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let b = SchattenBall::new(Order::new(p).unwrap(), 0.7).unwrap();
            for _ in 0..20 {
                let m = DMatrix::from_fn(4, 5, |_, _| rng.random_range(-2.0..2.0));
                let out = project_schatten(&LinearOperator::dense(m).unwrap(), &b, DEFAULT_TOL).unwrap();
                assert!(is_member(&out, &b, DEFAULT_TOL));
                let s = out.spectrum();
                assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn zero_radius_projects_to_origin() {
        assert_eq!(project_lp(&[1.0, -2.0], &ball(1.5, 0.0), DEFAULT_TOL).unwrap(), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn non_expansive(
            u in prop::collection::vec(-4.0f64..4.0, 5),
            w in prop::collection::vec(-4.0f64..4.0, 5),
            p in prop::sample::select(vec![1.5, 2.0, 3.0, f64::INFINITY]),
        ) {
            let b = ball(p, 1.0);
            let pu = project_lp(&u, &b, DEFAULT_TOL).unwrap();
            let pw = project_lp(&w, &b, DEFAULT_TOL).unwrap();
            let d_in: f64 = u.iter().zip(&w).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let d_out: f64 = pu.iter().zip(&pw).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d_out <= d_in + 1e-8);
        }

        #[test]
        fn projected_spectrum_stays_sorted(
            mut s in prop::collection::vec(0.0f64..5.0, 1..8),
            p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY]),
        ) {
            s.sort_by(|a, b| b.total_cmp(a));
            let out = project_lp(&s, &ball(p, 1.0), DEFAULT_TOL).unwrap();
            prop_assert!(out.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(out.iter().all(|x| *x >= 0.0));
        }
    }
}
