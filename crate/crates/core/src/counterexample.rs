//! The Brownian ladder: `V` follows `W` by jumps each time `W` moves `ε` away
//! from the last anchor. `X¹ = W − V⁺` and `X² = −V⁻` stay `ε`-close while the
//! total variation of `V` grows like `T/ε`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::RandomSeed;

/// Ladder statistics of one path at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPath {
    pub eps: f64,
    /// `sup_t |X¹_t − X²_t| = sup_t |W_t − V_t|` over the grid.
    pub sup_gap: f64,
    pub tv: f64,
    pub tv_plus: f64,
    pub tv_minus: f64,
    pub crossings: usize,
    /// Grid steps where `V⁺` and `V⁻` both increase.
    pub simultaneous: usize,
}

/// Streaming ladder construction on a fixed grid.
#[derive(Debug, Clone, Copy)]
pub struct LadderState {
    anchor: f64,
    path: LadderPath,
}

impl LadderState {
    pub fn new(eps: f64, w0: f64) -> Self {
        Self {
            anchor: w0,
            path: LadderPath {
                eps,
                sup_gap: 0.0,
                tv: 0.0,
                tv_plus: 0.0,
                tv_minus: 0.0,
                crossings: 0,
                simultaneous: 0,
            },
        }
    }

    /// Feeds the next grid value of `W`.
    pub fn push(&mut self, w: f64) {
        let p = &mut self.path;
        let jump = w - self.anchor;
        if jump.abs() >= p.eps {
            self.anchor = w;
            p.crossings += 1;
            p.tv += jump.abs();
            let (up, down) = (jump.max(0.0), (-jump).max(0.0));
            p.tv_plus += up;
            p.tv_minus += down;
            if up > 0.0 && down > 0.0 {
                p.simultaneous += 1;
            }
        }
        p.sup_gap = p.sup_gap.max((w - self.anchor).abs());
    }

    pub fn finish(self) -> LadderPath {
        self.path
    }
}

/// Ladder of a stored path `w` (with `w[0] = W_0`).
pub fn ladder_from_path(w: &[f64], eps: f64) -> LadderPath {
    let mut s = LadderState::new(eps, w.first().copied().unwrap_or(0.0));
    for &x in w.iter().skip(1) {
        s.push(x);
    }
    s.finish()
}

/// Overshoot slack `√(2 dt log(1/dt))` for grid-detected crossings.
pub fn overshoot_slack(dt: f64) -> f64 {
    (2.0 * dt * (1.0 / dt).ln()).sqrt()
}

/// Run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eps() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

fn default_dt() -> f64 {
    1e-5
}

fn default_horizon() -> f64 {
    1.0
}

fn default_paths() -> usize {
    10_000
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            dt: default_dt(),
            horizon: default_horizon(),
            n_paths: default_paths(),
            seed: 0,
        }
    }
}

/// Summary at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSummary {
    pub eps: f64,
    pub slack: f64,
    pub max_gap: f64,
    pub gap_pass_fraction: f64,
    pub mean_tv: f64,
    pub tv_quantiles: [f64; 5],
    pub mean_crossings: f64,
    /// The `T/ε` reference value.
    pub predicted_tv: f64,
    pub tv_relative_error: f64,
    pub simultaneous_increases: usize,
    /// `dt > 0.01 ε²`: the grid is coarse for this threshold.
    pub coarse_grid: bool,
}

/// Output of [`run_counterexample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub config: CounterexampleConfig,
    pub summaries: Vec<LadderSummary>,
    /// Least-squares slope of `log mean TV` on `log(1/ε)`.
    pub tv_slope: f64,
    /// Per path, per threshold in `config.eps` order.
    #[serde(skip)]
    pub paths: Vec<Vec<LadderPath>>,
}

/// Largest allowed `|mean TV − T/ε| / (T/ε)` on grids that are not coarse.
pub const TV_REL_TOL: f64 = 0.15;

/// Largest allowed distance of the TV slope from one.
pub const TV_SLOPE_TOL: f64 = 0.1;

impl CounterexampleReport {
    /// Failed criteria: any gap above `ε + slack`, a mean TV off `T/ε` by
    /// more than [`TV_REL_TOL`] on a fine grid, or a slope off one by more
    /// than [`TV_SLOPE_TOL`] when at least three thresholds are given.
    pub fn assess(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.summaries {
            if s.gap_pass_fraction < 1.0 {
                out.push(format!(
                    "eps {}: gap bound holds on {:.4} of paths (max gap {:.6})",
                    s.eps, s.gap_pass_fraction, s.max_gap
                ));
            }
            if !s.coarse_grid && !(s.tv_relative_error <= TV_REL_TOL) {
                out.push(format!(
                    "eps {}: mean TV {:.4} is {:.1}% off {:.4}",
                    s.eps,
                    s.mean_tv,
                    100.0 * s.tv_relative_error,
                    s.predicted_tv
                ));
            }
        }
        if self.summaries.len() >= 3 && !((self.tv_slope - 1.0).abs() <= TV_SLOPE_TOL) {
            out.push(format!("TV slope {:.4} outside 1 ± {TV_SLOPE_TOL}", self.tv_slope));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Simulates `n_paths` Brownian paths on a grid of step `dt` and builds the
/// ladder for every threshold along each path.
pub fn run_counterexample(cfg: &CounterexampleConfig) -> Result<CounterexampleReport> {
    if cfg.eps.is_empty() || cfg.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("thresholds must be positive".into()));
    }
    if !(cfg.dt > 0.0 && cfg.horizon > 0.0 && cfg.dt < cfg.horizon) || cfg.n_paths == 0 {
        return Err(Error::Config("need 0 < dt < T and at least one path".into()));
    }
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let sd = cfg.dt.sqrt();
    let base = RandomSeed::new(cfg.seed);
    let paths: Vec<Vec<LadderPath>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.fork(i as u64).rng();
            let mut states: Vec<LadderState> = cfg.eps.iter().map(|&e| LadderState::new(e, 0.0)).collect();
            let mut w = 0.0f64;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += sd * z;
                for s in states.iter_mut() {
                    s.push(w);
                }
            }
            states.into_iter().map(LadderState::finish).collect()
        })
        .collect();

    let slack = overshoot_slack(cfg.dt);
    let n = cfg.n_paths as f64;
    let summaries: Vec<LadderSummary> = cfg
        .eps
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let mut tv: Vec<f64> = paths.iter().map(|p| p[j].tv).collect();
            tv.sort_by(f64::total_cmp);
            let mean_tv = tv.iter().sum::<f64>() / n;
            let max_gap = paths.iter().map(|p| p[j].sup_gap).fold(0.0, f64::max);
            let ok = paths.iter().filter(|p| p[j].sup_gap <= eps + slack).count() as f64;
            let predicted = cfg.horizon / eps;
            LadderSummary {
                eps,
                slack,
                max_gap,
                gap_pass_fraction: ok / n,
                mean_tv,
                tv_quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&tv, q)),
                mean_crossings: paths.iter().map(|p| p[j].crossings as f64).sum::<f64>() / n,
                predicted_tv: predicted,
                tv_relative_error: (mean_tv - predicted).abs() / predicted,
                simultaneous_increases: paths.iter().map(|p| p[j].simultaneous).sum(),
                coarse_grid: cfg.dt > 0.01 * eps * eps,
            }
        })
        .collect();
    let x: Vec<f64> = summaries.iter().map(|s| 1.0 / s.eps).collect();
    let y: Vec<f64> = summaries.iter().map(|s| s.mean_tv).collect();
    let tv_slope = if x.len() >= 2 {
        crate::suites::log_log_slope(&x, &y)
    } else {
        f64::NAN
    };
    Ok(CounterexampleReport {
        config: cfg.clone(),
        summaries,
        tv_slope,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quiet_path_has_no_ladder() {
        let w = [0.0, 0.01, -0.02, 0.03, 0.0];
        let l = ladder_from_path(&w, 0.05);
        assert_eq!(l.crossings, 0);
        assert_eq!(l.tv, 0.0);
        assert!((l.sup_gap - 0.03).abs() < 1e-15);
    }

    #[test]
    fn jordan_parts_split_the_jumps() {
        let w = [0.0, 0.06, 0.13, 0.05, -0.01];
        let l = ladder_from_path(&w, 0.05);
        assert_eq!(l.crossings, 4);
        assert!((l.tv_plus - 0.13).abs() < 1e-12);
        assert!((l.tv_minus - 0.14).abs() < 1e-12);
        assert!((l.tv - 0.27).abs() < 1e-12);
        assert_eq!(l.simultaneous, 0);
        assert!(l.sup_gap < 0.05);
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = CounterexampleConfig {
            eps: vec![0.2, 0.1],
            dt: 1e-3,
            horizon: 1.0,
            n_paths: 50,
            seed: 4,
        };
        let a = run_counterexample(&cfg).unwrap();
        let b = run_counterexample(&cfg).unwrap();
        assert_eq!(a.paths, b.paths);
        assert!(a.summaries.iter().all(|s| s.gap_pass_fraction == 1.0));
        assert!(a.summaries[1].mean_tv > a.summaries[0].mean_tv);
        assert!(a.assess().iter().all(|f| !f.contains("gap")));
    }
}
