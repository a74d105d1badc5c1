//! Small regression and summary helpers for the experiment reports.

/// Least-squares fit of `ln y = intercept + slope · ln x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r2: f64,
    pub points: usize,
}

/// Fits a power law through the points with `x > 0` and `y > 0`; returns
/// `None` with fewer than two usable points or a degenerate `x` range.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    Some(PowerFit { slope, intercept, r2, points: pts.len() })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for fewer than two
/// values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (4..11).map(|k| 2f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let fit = loglog_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_points_dropped() {
        let fit = loglog_fit(&[1.0, 2.0, 4.0, 8.0], &[1.0, -1.0, 0.25, 0.125]).unwrap();
        assert_eq!(fit.points, 3);
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn summary_stats() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_dev(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(std_dev(&[5.0]), 0.0);
    }
}
