//! Risk curves over the sample size, best-in-class risk estimates and bound
//! overlays.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::complexity::theorem_bounds;
use crate::datagen::{generate, make_ground_truth, streams, ScenarioSpec};
use crate::erm::{fit, FitReport, SolverOptions, TrainingSet};
use crate::error::{Error, Result};
use crate::operator::{LinearOperator, Order, SchattenBall};
use crate::stats::{loglog_fit, mean};

#[derive(Clone, Debug, PartialEq)]
pub struct RiskCurveConfig {
    /// `scenario.seed` is the master seed: it fixes the truth operator, the
    /// evaluation sample and the oracle fit.
    pub scenario: ScenarioSpec,
    pub ball: SchattenBall,
    pub n_grid: Vec<usize>,
    /// One training replicate per seed.
    pub seeds: Vec<u64>,
    pub test_size: usize,
    pub delta: f64,
    /// Sample size for the oracle fit; defaults to `test_size`.
    pub oracle_budget: Option<usize>,
    pub solver: SolverOptions,
}

impl RiskCurveConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let max_n = match self.n_grid.iter().max() {
            Some(&m) if self.n_grid.iter().all(|&n| n >= 1) => m,
            _ => return Err(Error::Config("N grid must be nonempty with N >= 1".into())),
        };
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.test_size < 10 * max_n {
            return Err(Error::Config(format!(
                "test_size {} must be at least 10 * max N = {}",
                self.test_size,
                10 * max_n
            )));
        }
        if self.oracle_budget.is_some_and(|b| b < 10 * max_n) {
            return Err(Error::Config(format!("oracle budget must be at least 10 * max N = {}", 10 * max_n)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.oracle_budget.unwrap_or(self.test_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskCurveRow {
    pub p: Order,
    pub radius: f64,
    pub n: usize,
    pub seed: u64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub oracle_risk: f64,
    /// `test_risk − oracle_risk`; both are measured on the same evaluation
    /// sample.
    pub excess: f64,
    /// Standard error of `excess` from the paired per-sample loss differences.
    pub excess_stderr: f64,
    pub bound: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl RiskCurveRow {
    pub const CSV_HEADER: &'static str =
        "p,B,N,seed,train_risk,test_risk,oracle_risk,excess,excess_stderr,bound,converged,iterations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            self.p,
            self.radius,
            self.n,
            self.seed,
            self.train_risk,
            self.test_risk,
            self.oracle_risk,
            self.excess,
            self.excess_stderr,
            self.bound,
            self.converged,
            self.iterations
        )
    }
}

pub fn risk_curve_csv(rows: &[RiskCurveRow]) -> String {
    let mut out = String::from(RiskCurveRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Per-sample squared residuals `‖y_n − T x_n‖²`.
pub fn pointwise_losses(t: &LinearOperator, data: &TrainingSet) -> Result<Vec<f64>> {
    if t.d_x() != data.d_x() || t.d_y() != data.d_y() {
        return Err(Error::Shape("operator does not match data dimensions".into()));
    }
    let pred: DMatrix<f64> = t.materialize() * data.inputs();
    Ok((data.outputs() - pred).column_iter().map(|c| c.norm_squared()).collect())
}

/// ERM solution on `budget` draws of the oracle stream of the scenario's
/// master seed.
pub fn oracle_operator(
    scenario: &ScenarioSpec,
    truth: &LinearOperator,
    ball: SchattenBall,
    budget: usize,
    opts: &SolverOptions,
) -> Result<(LinearOperator, FitReport)> {
    let data = generate(truth, scenario, scenario.seed, streams::ORACLE_FIT, 0, budget)?;
    let f = fit(&data, ball, opts)?;
    Ok((f.operator, f.report))
}

/// Best-in-class risk estimate: ERM on `budget` draws, evaluated on an
/// independent sample of the same size.
pub fn oracle_risk(scenario: &ScenarioSpec, ball: SchattenBall, budget: usize, opts: &SolverOptions) -> Result<f64> {
    scenario.validate()?;
    if budget == 0 {
        return Err(Error::Config("oracle budget must be >= 1".into()));
    }
    let truth = make_ground_truth(scenario)?;
    let (op, _) = oracle_operator(scenario, &truth, ball, budget, opts)?;
    let eval = generate(&truth, scenario, scenario.seed, streams::ORACLE_EVAL, 0, budget)?;
    Ok(mean(&pointwise_losses(&op, &eval)?))
}

/// Fits one replicate per `(N, seed)` cell and reports train, test, oracle
/// and excess risk with the theoretical bound attached.
///
/// Cells run on the current rayon pool. Each cell depends only on its
/// `(N, seed)` pair and rows come back sorted by `(N, seed)`, so the output
/// is identical for every thread count. A cell whose solver hits the
/// iteration cap is kept with `converged = false`.
pub fn risk_curve(config: &RiskCurveConfig) -> Result<Vec<RiskCurveRow>> {
    config.validate()?;
    let spec = &config.scenario;
    let truth = make_ground_truth(spec)?;
    let eval = generate(&truth, spec, spec.seed, streams::EVAL, 0, config.test_size)?;
    let (oracle_op, _) = oracle_operator(spec, &truth, config.ball, config.budget(), &config.solver)?;
    let oracle_losses = pointwise_losses(&oracle_op, &eval)?;
    let oracle_risk = mean(&oracle_losses);

    let mut cells: Vec<(usize, u64)> =
        config.n_grid.iter().flat_map(|&n| config.seeds.iter().map(move |&s| (n, s))).collect();
    cells.sort_unstable();
    cells.dedup();

    let rows: Vec<Result<RiskCurveRow>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let train = generate(&truth, spec, seed, streams::TRAIN, 0, n)?;
            let f = fit(&train, config.ball, &config.solver)?;
            let losses = pointwise_losses(&f.operator, &eval)?;
            let diffs: Vec<f64> = losses.iter().zip(&oracle_losses).map(|(a, b)| a - b).collect();
            let test_risk = mean(&losses);
            let excess = mean(&diffs);
            let m = diffs.len() as f64;
            let var = diffs.iter().map(|d| (d - excess).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            let bounds = theorem_bounds(n, &config.ball, spec.c_x, spec.c_y, config.delta)?;
            Ok(RiskCurveRow {
                p: config.ball.order(),
                radius: config.ball.radius(),
                n,
                seed,
                train_risk: f.report.final_risk,
                test_risk,
                oracle_risk,
                excess,
                excess_stderr: (var / m).sqrt(),
                bound: bounds.excess,
                converged: f.report.converged,
                iterations: f.report.iterations,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Fitted decay of the mean excess risk for one order `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub p: Order,
    pub slope: f64,
    pub r2: f64,
    /// Sample sizes used in the fit.
    pub used: Vec<usize>,
    /// Sample sizes dropped because their mean excess was not positive.
    pub dropped: Vec<usize>,
}

impl SlopeFit {
    pub const CSV_HEADER: &'static str = "p,slope,r2,points,dropped_N";

    pub fn csv_row(&self) -> String {
        let dropped: Vec<String> = self.dropped.iter().map(|n| n.to_string()).collect();
        format!("{},{:.16e},{:.16e},{},{}", self.p, self.slope, self.r2, self.used.len(), dropped.join(" "))
    }
}

/// Mean excess per `N`, sorted by `N`.
pub fn mean_excess_by_n(rows: &[RiskCurveRow]) -> Vec<(usize, f64)> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r.excess);
    }
    by_n.into_iter().map(|(n, v)| (n, mean(&v))).collect()
}

/// Least-squares slope of `ln(mean excess)` against `ln N`, one fit per
/// order present in `rows`. Needs at least five sample sizes with positive
/// mean excess for each order.
pub fn slope_fit(rows: &[RiskCurveRow]) -> Result<Vec<SlopeFit>> {
    let mut groups: Vec<(Order, Vec<RiskCurveRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(p, _)| *p == r.p) {
            Some((_, g)) => g.push(r.clone()),
            None => groups.push((r.p, vec![r.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(p, group)| {
            let means = mean_excess_by_n(&group);
            let (used, dropped): (Vec<_>, Vec<_>) = means.iter().partition(|(_, e)| *e > 0.0);
            if used.len() < 5 {
                return Err(Error::InvalidInput(format!(
                    "slope fit for p = {p} needs 5 sample sizes with positive mean excess, found {}",
                    used.len()
                )));
            }
            let xs: Vec<f64> = used.iter().map(|(n, _)| *n as f64).collect();
            let ys: Vec<f64> = used.iter().map(|(_, e)| *e).collect();
            let pf = loglog_fit(&xs, &ys).ok_or_else(|| Error::InvalidInput("degenerate slope fit".into()))?;
            Ok(SlopeFit {
                p,
                slope: pf.slope,
                r2: pf.r2,
                used: used.iter().map(|(n, _)| *n).collect(),
                dropped: dropped.iter().map(|(n, _)| *n).collect(),
            })
        })
        .collect()
}

/// Constants of the bound plot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub radius: f64,
    pub c_x: f64,
    pub c_y: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { radius: 1.0, c_x: 1.0, c_y: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundPoint {
    pub p: Order,
    pub n: usize,
    pub bound: f64,
}

/// Excess-risk bound curves, one per order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundPlot {
    pub points: Vec<BoundPoint>,
    pub constants: BoundConstants,
    pub delta: f64,
}

pub fn plot_bounds(p_list: &[Order], n_grid: &[usize], constants: BoundConstants, delta: f64) -> Result<BoundPlot> {
    if p_list.is_empty() || n_grid.is_empty() {
        return Err(Error::Config("plot needs at least one order and one sample size".into()));
    }
    let mut points = Vec::with_capacity(p_list.len() * n_grid.len());
    for &p in p_list {
        let ball = SchattenBall::new(p, constants.radius).map_err(|e| Error::Config(e.to_string()))?;
        for &n in n_grid {
            let b = theorem_bounds(n, &ball, constants.c_x, constants.c_y, delta)
                .map_err(|e| Error::Config(e.to_string()))?;
            points.push(BoundPoint { p, n, bound: b.excess });
        }
    }
    Ok(BoundPlot { points, constants, delta })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl BoundPlot {
    pub const CSV_HEADER: &'static str = "p,N,bound";

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for pt in &self.points {
            let _ = writeln!(out, "{},{},{:.16e}", pt.p, pt.n, pt.bound);
        }
        out
    }

    fn orders(&self) -> Vec<Order> {
        let mut out: Vec<Order> = Vec::new();
        for pt in &self.points {
            if !out.contains(&pt.p) {
                out.push(pt.p);
            }
        }
        out
    }

    /// Static SVG line chart with logarithmic axes.
    pub fn svg(&self) -> String {
        const W: f64 = 720.0;
        const H: f64 = 480.0;
        const LEFT: f64 = 80.0;
        const RIGHT: f64 = 150.0;
        const TOP: f64 = 40.0;
        const BOTTOM: f64 = 60.0;
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);

        let lx = |n: f64| n.log10();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for pt in &self.points {
            x0 = x0.min(lx(pt.n as f64));
            x1 = x1.max(lx(pt.n as f64));
            y0 = y0.min(pt.bound.log10());
            y1 = y1.max(pt.bound.log10());
        }
        let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
        let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
        let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
        let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Excess risk bound vs N (B={}, C_x={}, C_y={}, delta={})</text>"#,
            LEFT + pw / 2.0,
            self.constants.radius,
            self.constants.c_x,
            self.constants.c_y,
            self.delta
        );
        for d in (x0 as i32)..=(x1 as i32) {
            let x = sx(d as f64);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
                TOP + ph,
                TOP + ph + 18.0
            );
        }
        for d in (y0 as i32)..=(y1 as i32) {
            let y = sy(d as f64);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">N</text>"#,
            LEFT + pw / 2.0,
            H - 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">excess risk bound</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0
        );
        for (i, p) in self.orders().iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = self
                .points
                .iter()
                .filter(|pt| pt.p == *p)
                .map(|pt| format!("{:.2},{:.2}", sx(lx(pt.n as f64)), sy(pt.bound.log10())))
                .collect();
            let dash = if i % 2 == 1 { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 20.0 + 20.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">p = {p}</text>"#,
                LEFT + pw + 15.0,
                LEFT + pw + 45.0,
                LEFT + pw + 52.0,
                ly + 4.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
