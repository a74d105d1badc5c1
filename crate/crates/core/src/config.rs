//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Every key must be consumed by the command reading the file, so a
//! misspelled key is an error instead of a silently ignored setting.
//!
//! List values are comma separated. Integer lists also accept ranges
//! `a..b` (exclusive) and `a..=b` (inclusive), and sample-size grids accept
//! powers of two written `2^a..=2^b`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::complexity::{Design, RademacherConfig};
use crate::datagen::{SampleDistribution, ScenarioSpec};
use crate::erm::SolverOptions;
use crate::error::{Error, Result};
use crate::experiment::{BoundConstants, RiskCurveConfig};
use crate::operator::{Order, SchattenBall};

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigTable {
    entries: BTreeMap<String, String>,
}

impl ConfigTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(cfg_err(format!("line {}: empty key", i + 1)));
            }
            if table.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(table)
    }

    /// Parses a `key=value` override and replaces any existing value.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) =
            assignment.split_once('=').ok_or_else(|| cfg_err(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| cfg_err(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take(key)?.ok_or_else(|| cfg_err(format!("missing required key {key:?}")))
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        Err(cfg_err(format!("unknown key(s): {}", keys.join(", "))))
    }
}

fn parse_int<T: FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| cfg_err(format!("bad integer {s:?}")))
}

fn parse_power_of_two(s: &str) -> Result<u64> {
    match s.trim().strip_prefix("2^") {
        Some(e) => {
            let e: u32 = parse_int(e)?;
            if e > 62 {
                return Err(cfg_err(format!("exponent too large in {s:?}")));
            }
            Ok(1u64 << e)
        }
        None => parse_int(s),
    }
}

fn expand(item: &str, pow2: bool) -> Result<Vec<u64>> {
    let (lo, hi, inclusive) = if let Some((a, b)) = item.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = item.split_once("..") {
        (a, b, false)
    } else {
        let v = if pow2 { parse_power_of_two(item)? } else { parse_int(item)? };
        return Ok(vec![v]);
    };
    if pow2 && lo.trim().starts_with("2^") {
        let exp = |s: &str| -> Result<u32> {
            parse_int(s.trim().strip_prefix("2^").ok_or_else(|| cfg_err(format!("mixed range {item:?}")))?)
        };
        let (a, b) = (exp(lo)?, exp(hi)?);
        let end = if inclusive { b + 1 } else { b };
        if end > 63 {
            return Err(cfg_err(format!("exponent too large in {item:?}")));
        }
        return Ok((a..end).map(|e| 1u64 << e).collect());
    }
    let (a, b): (u64, u64) = (parse_int(lo)?, parse_int(hi)?);
    Ok(if inclusive { (a..=b).collect() } else { (a..b).collect() })
}

/// Integer list: `1, 2, 5`, `0..50` or `0..=49`.
pub fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        out.extend(expand(item.trim(), false)?);
    }
    if out.is_empty() {
        return Err(cfg_err(format!("empty list {s:?}")));
    }
    Ok(out)
}

/// Sample-size grid: integers, ranges and `2^a..=2^b`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        out.extend(expand(item.trim(), true)?.into_iter().map(|v| v as usize));
    }
    if out.is_empty() {
        return Err(cfg_err(format!("empty grid {s:?}")));
    }
    Ok(out)
}

pub fn parse_orders(s: &str) -> Result<Vec<Order>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<Order>().map_err(|e| cfg_err(e.to_string())))
        .collect()
}

pub const SCENARIO_KEYS: [&str; 10] =
    ["d", "d_x", "d_y", "decay", "scale", "sample_dist", "c_x", "noise_sigma", "c_y", "seed"];

/// Scenario keys: `d` (sets both dimensions), `d_x`, `d_y`, `decay`,
/// `scale`, `sample_dist`, `c_x`, `noise_sigma`, `c_y`, `seed`.
pub fn scenario_from(t: &mut ConfigTable) -> Result<ScenarioSpec> {
    let base = ScenarioSpec::default();
    let d: Option<usize> = t.take("d")?;
    let spec = ScenarioSpec {
        d_x: t.take_or("d_x", d.unwrap_or(base.d_x))?,
        d_y: t.take_or("d_y", d.unwrap_or(base.d_y))?,
        decay: t.take_or("decay", base.decay)?,
        scale: t.take_or("scale", base.scale)?,
        sample_dist: match t.take_raw("sample_dist") {
            Some(v) => v.parse::<SampleDistribution>().map_err(|e| cfg_err(e.to_string()))?,
            None => base.sample_dist,
        },
        c_x: t.take_or("c_x", base.c_x)?,
        noise_sigma: t.take_or("noise_sigma", base.noise_sigma)?,
        c_y: t.take_or("c_y", base.c_y)?,
        seed: t.take_or("seed", base.seed)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Ball keys: `p` (a number or `inf`) and `B`.
pub fn ball_from(t: &mut ConfigTable, default_p: Option<Order>, default_b: Option<f64>) -> Result<SchattenBall> {
    let p = match t.take_raw("p") {
        Some(v) => v.parse::<Order>().map_err(|e| cfg_err(e.to_string()))?,
        None => default_p.ok_or_else(|| cfg_err("missing required key \"p\""))?,
    };
    let b = match t.take::<f64>("B")? {
        Some(b) => b,
        None => default_b.ok_or_else(|| cfg_err("missing required key \"B\""))?,
    };
    SchattenBall::new(p, b).map_err(|e| cfg_err(e.to_string()))
}

/// Solver keys: `max_iter`, `rel_tol`, `window`, `projection_tol`,
/// `stationarity_tol`.
pub fn solver_from(t: &mut ConfigTable) -> Result<SolverOptions> {
    let base = SolverOptions::default();
    Ok(SolverOptions {
        max_iter: t.take_or("max_iter", base.max_iter)?,
        rel_tol: t.take_or("rel_tol", base.rel_tol)?,
        window: t.take_or("window", base.window)?,
        projection_tol: t.take_or("projection_tol", base.projection_tol)?,
        stationarity_tol: t.take_or("stationarity_tol", base.stationarity_tol)?,
    })
}

/// Risk-curve keys: scenario, ball and solver keys plus `n_grid`, `seeds`,
/// `test_size`, `delta`, `oracle_budget`. Defaults: `p = 2`, `B = 1`,
/// `n_grid = 2^4..=2^10`, `seeds = 0..50`, `test_size = 10 · max N`,
/// `delta = 0.05`.
pub fn risk_curve_from(t: &mut ConfigTable) -> Result<RiskCurveConfig> {
    let scenario = scenario_from(t)?;
    let ball = ball_from(t, Some(Order::Finite(2.0)), Some(1.0))?;
    let n_grid = parse_grid(&t.take_raw("n_grid").unwrap_or_else(|| "2^4..=2^10".into()))?;
    let seeds = parse_u64_list(&t.take_raw("seeds").unwrap_or_else(|| "0..50".into()))?;
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    let cfg = RiskCurveConfig {
        scenario,
        ball,
        n_grid,
        seeds,
        test_size: t.take_or("test_size", 10 * max_n)?,
        delta: t.take_or("delta", 0.05)?,
        oracle_budget: t.take("oracle_budget")?,
        solver: solver_from(t)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Rademacher keys: `n_grid`, `trials`, `q`, `design`
/// (`fixed-vector`, `orthonormal` or `iid-scenario`) and `seed`; the
/// `iid-scenario` design also reads the scenario keys. Defaults:
/// `n_grid = 2^4..=2^12`, `trials = 200`, `q = 2`, `design = iid-scenario`.
pub fn rademacher_from(t: &mut ConfigTable) -> Result<RademacherConfig> {
    let n_grid = parse_grid(&t.take_raw("n_grid").unwrap_or_else(|| "2^4..=2^12".into()))?;
    let trials = t.take_or("trials", 200usize)?;
    let q = match t.take_raw("q") {
        Some(v) => v.parse::<Order>().map_err(|e| cfg_err(e.to_string()))?,
        None => Order::Finite(2.0),
    };
    let design_name = t.take_raw("design").unwrap_or_else(|| "iid-scenario".into());
    let design = match design_name.as_str() {
        "fixed-vector" => Design::FixedVector,
        "orthonormal" => Design::Orthonormal,
        "iid-scenario" => Design::IidScenario(scenario_from(t)?),
        other => return Err(cfg_err(format!("unknown design {other:?}"))),
    };
    let seed = match &design {
        Design::IidScenario(spec) => spec.seed,
        _ => t.take_or("seed", 0u64)?,
    };
    let cfg = RademacherConfig { n_grid, trials, q, design, seed };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotConfig {
    pub p_list: Vec<Order>,
    pub n_grid: Vec<usize>,
    pub constants: BoundConstants,
    pub delta: f64,
}

/// Plot keys: `B`, `c_x`, `c_y` (required), `p_list`, `n_grid`, `delta`.
/// Defaults: `p_list = 1, 2, 3, 4, inf`, `n_grid = 2^2..=2^16`,
/// `delta = 0.001`.
pub fn plot_from(t: &mut ConfigTable) -> Result<PlotConfig> {
    let constants = BoundConstants { radius: t.require("B")?, c_x: t.require("c_x")?, c_y: t.require("c_y")? };
    if [constants.radius, constants.c_x, constants.c_y].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(cfg_err("B, c_x and c_y must be finite and nonnegative"));
    }
    let p_list = parse_orders(&t.take_raw("p_list").unwrap_or_else(|| "1, 2, 3, 4, inf".into()))?;
    let n_grid = parse_grid(&t.take_raw("n_grid").unwrap_or_else(|| "2^2..=2^16".into()))?;
    if n_grid.contains(&0) {
        return Err(cfg_err("sample sizes must be >= 1"));
    }
    let delta = t.take_or("delta", 1e-3)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(cfg_err(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(PlotConfig { p_list, n_grid, constants, delta })
}
