//! Verification suites: each runs one family of checks over seeded
//! instances and collects the reports plus suite-level assertions.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{BsdeInstance, Scheme, SolutionQuadruple};
use crate::constants::{power_sum_bounds, young_bound};
use crate::error::{Error, Result};
use crate::estimates::{
    check_burkholder, check_ito_p_inequality, check_lemma_intermediate, check_prop_rbsde_p2, check_prop_ref,
    check_prop_ref_stability, check_remark_equiv, check_theorem_main1, check_theorem_main2, LadlagPath, LemmaBranch,
    ObstacleVariant, ProofParams,
};
use crate::family::{FamilyMember, InstanceFamily};
use crate::martingale::meyer_bound_check;
use crate::norms::{norm_h, norm_i, norm_m, norm_sp_weighted, NormConfig};
use crate::process::{AdaptedProcess, LadlagProcess};
use crate::reflected::{alpha_star, solve_reflected};
use crate::report::{EstimateReport, Tier};
use crate::seed::RandomSeed;
use crate::tree::ScenarioTree;

/// The verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Main1,
    Main2,
    Lemma21,
    Prop32,
    Prop33,
    Meyer,
    ItoP,
    Remark21,
    Constants,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Main1,
        Suite::Main2,
        Suite::Lemma21,
        Suite::Prop32,
        Suite::Prop33,
        Suite::Meyer,
        Suite::ItoP,
        Suite::Remark21,
        Suite::Constants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Main1 => "main1",
            Suite::Main2 => "main2",
            Suite::Lemma21 => "lemma21",
            Suite::Prop32 => "prop32",
            Suite::Prop33 => "prop33",
            Suite::Meyer => "meyer",
            Suite::ItoP => "ito-p",
            Suite::Remark21 => "remark21",
            Suite::Constants => "constants",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Knobs shared by the suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub family: InstanceFamily,
    #[serde(default = "default_p")]
    pub p_values: Vec<f64>,
    /// Weight for the checks that take any `α`; the default is
    /// `α* + 1` for the family's Lipschitz constants.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub params: ProofParams,
    /// Random samples for the instance-free checks (paths, supermartingales,
    /// Young and power-sum draws).
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_path_steps")]
    pub path_steps: usize,
    #[serde(default = "default_h")]
    pub decay_h: Vec<f64>,
}

fn default_p() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

fn default_samples() -> usize {
    1000
}

fn default_path_steps() -> usize {
    24
}

fn default_h() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

impl SuiteConfig {
    pub fn new(family: InstanceFamily) -> Self {
        Self {
            family,
            p_values: default_p(),
            alpha: None,
            params: ProofParams::default(),
            samples: default_samples(),
            path_steps: default_path_steps(),
            decay_h: default_h(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.p_values.iter().any(|p| !(*p > 1.0 && p.is_finite())) {
            return Err(Error::Config("p_values must be non-empty and above 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be non-negative, got {a}")));
            }
        }
        if self.decay_h.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("decay_h entries must be positive".into()));
        }
        Ok(())
    }

    fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or_else(|| alpha_star(self.family.driver.l_y, self.family.driver.l_z) + 1.0)
    }
}

/// A suite-level assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl SuiteCheck {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

/// Reports and assertions of one suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub reports: Vec<EstimateReport>,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteOutcome {
    fn new(suite: Suite, mut reports: Vec<EstimateReport>, mut checks: Vec<SuiteCheck>) -> Self {
        reports.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint).then_with(|| a.id.cmp(&b.id)));
        checks.extend(summary_checks(&reports));
        Self {
            suite: suite.name().into(),
            reports,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass) && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .reports
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}:{}", r.id, r.fingerprint))
            .collect();
        out.extend(self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()));
        out
    }

    /// Largest ratio per report id.
    pub fn max_ratios(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.reports {
            let e = out.entry(r.id.clone()).or_insert(0.0f64);
            if r.ratio > *e {
                *e = r.ratio;
            }
        }
        out
    }
}

/// Pass counts per id and the max ratio of every empirical id.
fn summary_checks(reports: &[EstimateReport]) -> Vec<SuiteCheck> {
    let mut by_id: BTreeMap<&str, (usize, usize, f64, Tier)> = BTreeMap::new();
    for r in reports {
        let e = by_id.entry(&r.id).or_insert((0, 0, 0.0, r.tier));
        e.0 += 1;
        e.1 += usize::from(r.pass);
        if r.ratio.is_finite() {
            e.2 = e.2.max(r.ratio);
        } else {
            e.2 = f64::INFINITY;
        }
    }
    let mut out = Vec::new();
    for (id, (n, ok, max, tier)) in by_id {
        out.push(SuiteCheck::at_least(&format!("{id}.pass_fraction"), ok as f64 / n as f64, 1.0));
        if tier == Tier::Empirical {
            out.push(SuiteCheck::at_most(&format!("{id}.max_ratio"), max, f64::MAX));
        }
    }
    out
}

fn tag(r: EstimateReport, fp: &str, p: f64) -> EstimateReport {
    r.with_fingerprint(fp).with("p", p)
}

fn solve(member: &FamilyMember) -> Result<SolutionQuadruple> {
    if member.instance.obstacle.is_some() {
        solve_reflected(&member.instance, Scheme::Implicit)
    } else {
        crate::bsde::solve_bsde(&member.instance, Scheme::Implicit)
    }
}

type Solved = (FamilyMember, SolutionQuadruple);

fn solved_members(family: &InstanceFamily, tree: &Arc<ScenarioTree>, offset: usize) -> Result<Vec<Solved>> {
    (0..family.count)
        .into_par_iter()
        .map(|i| {
            let m = family.member(tree, i + offset)?;
            let s = solve(&m)?;
            Ok((m, s))
        })
        .collect()
}

fn flatten(v: Vec<Result<Vec<EstimateReport>>>) -> Result<Vec<EstimateReport>> {
    let mut out = Vec::new();
    for r in v {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs one suite.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    cfg.validate()?;
    match suite {
        Suite::Main1 => suite_main1(cfg),
        Suite::Main2 => suite_main2(cfg),
        Suite::Lemma21 => suite_lemma21(cfg),
        Suite::Prop32 => suite_prop32(cfg),
        Suite::Prop33 => suite_prop33(cfg),
        Suite::Meyer => suite_meyer(cfg),
        Suite::ItoP => suite_ito_p(cfg),
        Suite::Remark21 => suite_remark21(cfg),
        Suite::Constants => suite_constants(cfg),
    }
}

fn suite_main1(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let solved = solved_members(&cfg.family, &tree, 0)?;
    let alphas = [0.0, cfg.alpha()];
    let reports = flatten(
        solved
            .par_iter()
            .map(|(m, s)| {
                let mut out = Vec::new();
                for &p in &cfg.p_values {
                    for &a in &alphas {
                        let r = check_theorem_main1(&m.instance, s, NormConfig::new(p, a)?)?;
                        out.push(tag(r, &m.fingerprint, p));
                    }
                }
                Ok(out)
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::Main1, reports, Vec::new()))
}

/// `ξ + h ζ` with `ζ` uniform in `[−1, 1]` per leaf.
fn perturb_terminal(instance: &BsdeInstance, h: f64, seed: RandomSeed) -> Result<BsdeInstance> {
    let mut rng = seed.rng();
    let xi: Vec<f64> = instance.xi.iter().map(|v| v + h * rng.random_range(-1.0..=1.0)).collect();
    let mut out = BsdeInstance::new(instance.tree.clone(), xi, instance.generator.clone())?;
    if let Some(s) = &instance.obstacle {
        out = out.with_obstacle(s.clone())?;
    }
    Ok(out)
}

/// Least-squares slope of `log y` on `log x`; `+∞` when some `y` is zero.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if y.iter().any(|v| *v <= 0.0) {
        return f64::INFINITY;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Measured decay order of the stability left side in the size of a
/// terminal perturbation, one value per `p`.
pub fn stability_decay(cfg: &SuiteConfig, members: usize) -> Result<Vec<(f64, f64)>> {
    let tree = cfg.family.build_tree()?;
    let a = cfg.alpha();
    let mut out = Vec::new();
    for &p in &cfg.p_values {
        let mut worst = f64::INFINITY;
        for i in 0..members.min(cfg.family.count) {
            let m = cfg.family.member(&tree, i)?;
            let s1 = solve(&m)?;
            let mut lhs = Vec::new();
            for &h in &cfg.decay_h {
                let other = perturb_terminal(&m.instance, h, RandomSeed::new(cfg.family.seed).fork(i as u64))?;
                let s2 = if other.obstacle.is_some() {
                    solve_reflected(&other, Scheme::Implicit)?
                } else {
                    crate::bsde::solve_bsde(&other, Scheme::Implicit)?
                };
                lhs.push(check_theorem_main2(&m.instance, &s1, &other, &s2, NormConfig::new(p, a)?)?.lhs);
            }
            worst = worst.min(log_log_slope(&cfg.decay_h, &lhs));
        }
        out.push((p, worst));
    }
    Ok(out)
}

fn suite_main2(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let first = solved_members(&cfg.family, &tree, 0)?;
    let second = solved_members(&cfg.family, &tree, cfg.family.count)?;
    let a = cfg.alpha();
    let reports = flatten(
        first
            .par_iter()
            .zip(second.par_iter())
            .map(|((m1, s1), (m2, s2))| {
                let mut out = Vec::new();
                for &p in &cfg.p_values {
                    let cfg_p = NormConfig::new(p, a)?;
                    out.push(tag(check_theorem_main2(&m1.instance, s1, &m2.instance, s2, cfg_p)?, &m1.fingerprint, p));
                    let same = check_theorem_main2(&m1.instance, s1, &m1.instance, s1, cfg_p)?;
                    out.push(tag(same, &m1.fingerprint, p).into_identity());
                }
                Ok(out)
            })
            .collect(),
    )?;
    let mut checks = Vec::new();
    for (p, order) in stability_decay(cfg, 4)? {
        let need = (p / 2.0).min(p - 1.0);
        checks.push(SuiteCheck::at_least(&format!("main2.decay_order.p{p}"), order, need));
    }
    Ok(SuiteOutcome::new(Suite::Main2, reports, checks))
}

trait IdentityReport {
    fn into_identity(self) -> EstimateReport;
}

impl IdentityReport for EstimateReport {
    /// Identical inputs must give a zero left side.
    fn into_identity(mut self) -> EstimateReport {
        self.id = format!("{}_identical", self.id);
        self.pass = self.lhs == 0.0;
        self
    }
}

fn suite_lemma21(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let solved = solved_members(&cfg.family, &tree, 0)?;
    let (l_y, l_z) = (cfg.family.driver.l_y, cfg.family.driver.l_z);
    let ProofParams { epsilon, eta } = cfg.params;
    let reports = flatten(
        solved
            .par_iter()
            .map(|(m, s)| {
                let mut out = Vec::new();
                for &p in &cfg.p_values {
                    let k = check_lemma_intermediate(&m.instance, s, NormConfig::new(p, cfg.alpha())?, LemmaBranch::KBound, cfg.params)?;
                    out.push(tag(k, &m.fingerprint, p));
                    let (branch, need) = if p >= 2.0 {
                        (LemmaBranch::NGe2, 1.0 / epsilon + 2.0 * l_y + l_z * l_z / eta)
                    } else {
                        let beta = p * (p - 1.0) / 4.0;
                        (LemmaBranch::NLt2, 2.0 * l_y + p * l_z * l_z / (2.0 * beta))
                    };
                    let a = cfg.alpha().max(need + 1.0);
                    let r = check_lemma_intermediate(&m.instance, s, NormConfig::new(p, a)?, branch, cfg.params)?;
                    let a_ok = r.components.get("a_term").is_none_or(|v| *v >= 0.0);
                    out.push(tag(r.require(a_ok), &m.fingerprint, p));
                }
                Ok(out)
            })
            .collect(),
    )?;
    let printed = reports
        .iter()
        .filter_map(|r| r.components.get("printed_bound_holds"))
        .copied()
        .collect::<Vec<_>>();
    let mut checks = Vec::new();
    if !printed.is_empty() {
        let frac = printed.iter().sum::<f64>() / printed.len() as f64;
        checks.push(SuiteCheck::at_least("lemma21_n_ge2.printed_bound_fraction", frac, 0.0));
    }
    Ok(SuiteOutcome::new(Suite::Lemma21, reports, checks))
}

fn suite_prop32(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let first = solved_members(&cfg.family, &tree, 0)?;
    let second = solved_members(&cfg.family, &tree, cfg.family.count)?;
    let a = cfg.alpha();
    let reports = flatten(
        first
            .par_iter()
            .zip(second.par_iter())
            .map(|((m1, s1), (m2, s2))| {
                let mut out = Vec::new();
                if m1.instance.obstacle.is_none() {
                    return Ok(out);
                }
                for &p in &cfg.p_values {
                    let c = NormConfig::new(p, a)?;
                    for v in [ObstacleVariant::SPlus, ObstacleVariant::S] {
                        out.push(tag(check_prop_ref(&m1.instance, s1, c, v)?, &m1.fingerprint, p));
                    }
                    out.push(tag(check_prop_ref_stability(&m1.instance, s1, &m2.instance, s2, c)?, &m1.fingerprint, p));
                }
                Ok(out)
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::Prop32, reports, Vec::new()))
}

fn suite_prop33(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let first = solved_members(&cfg.family, &tree, 0)?;
    let second = solved_members(&cfg.family, &tree, cfg.family.count)?;
    let a = cfg.alpha();
    let eps = cfg.params.epsilon;
    let reports = flatten(
        first
            .par_iter()
            .zip(second.par_iter())
            .map(|((m1, s1), (m2, s2))| {
                if m1.instance.obstacle.is_none() {
                    return Ok(Vec::new());
                }
                let (main, cross) = check_prop_rbsde_p2(&m1.instance, s1, &m2.instance, s2, a, eps)?;
                let (same, _) = check_prop_rbsde_p2(&m1.instance, s1, &m1.instance, s1, a, eps)?;
                Ok(vec![
                    tag(main, &m1.fingerprint, 2.0),
                    tag(cross, &m1.fingerprint, 2.0),
                    tag(same, &m1.fingerprint, 2.0).into_identity(),
                ])
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::Prop33, reports, Vec::new()))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A làdlàg strong supermartingale: right limits below values, next values
/// a centered perturbation of the right limit minus a non-negative drift.
pub fn random_strong_supermartingale(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> LadlagProcess {
    let n = tree.node_count();
    let mut x = LadlagProcess::zeros(tree);
    let scale = rng.random_range(0.2..2.0);
    x.value[0] = scale * rng.random_range(-1.0..1.0);
    x.left[0] = x.value[0];
    let right_jumps = rng.random_bool(0.5);
    for node in 0..n {
        let jump = if right_jumps && rng.random_bool(0.4) {
            scale * rng.random_range(0.0..0.5)
        } else {
            0.0
        };
        x.right[node] = x.value[node] - jump;
        if tree.is_leaf(node) {
            continue;
        }
        let drift = if rng.random_bool(0.6) { scale * rng.random_range(0.0..0.3) } else { 0.0 };
        let kids = tree.children(node);
        let raw: Vec<f64> = kids.clone().map(|_| scale * normal(rng)).collect();
        let mean = tree.cond_mean(node, |c| raw[c - kids.start]);
        for c in kids.clone() {
            x.left[c] = x.right[node];
            x.value[c] = x.right[node] - drift + raw[c - kids.start] - mean;
        }
    }
    x
}

fn sample_tree(cfg: &SuiteConfig) -> Result<ScenarioTree> {
    cfg.family.tree.build()
}

fn suite_meyer(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = sample_tree(cfg)?;
    let seed = RandomSeed::with_stream(cfg.family.seed, 0x6d65);
    let reports = flatten(
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.fork(i as u64).rng();
                let x = random_strong_supermartingale(&tree, &mut rng);
                let fp = format!("meyer-{i:05}");
                cfg.p_values
                    .iter()
                    .map(|&p| Ok(tag(meyer_bound_check(&tree, &x, p)?, &fp, p)))
                    .collect()
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::Meyer, reports, Vec::new()))
}

/// A random làdlàg path on `[0, 1]` with left jumps, right jumps, exact
/// zeros and sign changes.
pub fn random_ladlag_path(steps: usize, rng: &mut ChaCha8Rng) -> LadlagPath {
    let n = steps + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / steps as f64).collect();
    let mut value = vec![0.0; n];
    let mut right = vec![0.0; n];
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut prev_right = scale * normal(rng);
    for k in 0..n {
        let left = prev_right;
        value[k] = if k > 0 && rng.random_bool(0.3) {
            if rng.random_bool(0.2) {
                0.0
            } else {
                left + scale * normal(rng)
            }
        } else {
            left
        };
        right[k] = if rng.random_bool(0.3) {
            if rng.random_bool(0.2) {
                -value[k]
            } else {
                value[k] + scale * normal(rng)
            }
        } else {
            value[k]
        };
        prev_right = right[k];
    }
    LadlagPath { times, value, right }
}

fn suite_ito_p(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let seed = RandomSeed::with_stream(cfg.family.seed, 0x6974);
    let ps = [1.2, 1.5, 1.9];
    let reports = flatten(
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.fork(i as u64).rng();
                let path = random_ladlag_path(cfg.path_steps, &mut rng);
                let alpha = rng.random_range(0.05..3.0);
                let fp = format!("path-{i:05}");
                ps.iter()
                    .map(|&p| Ok(check_ito_p_inequality(&path, p, alpha)?.with_fingerprint(&fp)))
                    .collect()
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::ItoP, reports, Vec::new()))
}

fn suite_remark21(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let tree = cfg.family.build_tree()?;
    let solved = solved_members(&cfg.family, &tree, 0)?;
    let a = cfg.alpha();
    let reports = flatten(
        solved
            .par_iter()
            .map(|(m, s)| {
                let mut out = Vec::new();
                for &p in &cfg.p_values {
                    for r in check_remark_equiv(&m.instance, s, NormConfig::new(p, a)?)? {
                        out.push(tag(r, &m.fingerprint, p));
                    }
                }
                Ok(out)
            })
            .collect(),
    )?;
    Ok(SuiteOutcome::new(Suite::Remark21, reports, Vec::new()))
}

/// A martingale on the tree: `U_c = U_p + r_c − E_p[r]` with Gaussian `r`.
pub fn random_martingale(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> AdaptedProcess {
    let mut u = AdaptedProcess::zeros(tree);
    let inner = tree.level(tree.n_steps()).start;
    let heavy = rng.random_bool(0.3);
    for p in 0..inner {
        let kids = tree.children(p);
        let raw: Vec<f64> = kids
            .clone()
            .map(|_| {
                let g = normal(rng);
                if heavy { g.powi(3) } else { g }
            })
            .collect();
        let mean = tree.cond_mean(p, |c| raw[c - kids.start]);
        for c in kids.clone() {
            u[c] = u[p] + raw[c - kids.start] - mean;
        }
    }
    u
}

/// `norm(α₁) <= norm(α₂) <= e^{c(α₂−α₁)T} norm(α₁)` for the weighted norms.
fn norm_equivalence(tree: &ScenarioTree, sol: &SolutionQuadruple, p: f64, a1: f64, a2: f64, fp: &str) -> Vec<EstimateReport> {
    let t = tree.horizon();
    let pairs: [(&str, f64, f64, f64); 4] = [
        ("z", norm_h(tree, &sol.z, p, a1), norm_h(tree, &sol.z, p, a2), p / 2.0),
        ("m", norm_m(tree, &sol.m, p, a1), norm_m(tree, &sol.m, p, a2), p / 2.0),
        ("k", norm_i(tree, &sol.k, p, a1), norm_i(tree, &sol.k, p, a2), p / 2.0),
        ("y", norm_sp_weighted(tree, &sol.y, p, a1), norm_sp_weighted(tree, &sol.y, p, a2), p / 2.0),
    ];
    let mut out = Vec::new();
    for (name, n1, n2, c) in pairs {
        let factor = (c * (a2 - a1) * t).exp();
        out.push(
            EstimateReport::explicit(format!("norm_equiv_{name}"), n2, factor * n1, Some(factor))
                .require(n1 <= n2 * (1.0 + 1e-12) + 1e-300)
                .with_fingerprint(fp)
                .with("p", p),
        );
    }
    out
}

fn suite_constants(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    let seed = RandomSeed::with_stream(cfg.family.seed, 0x636f);
    let tree = sample_tree(cfg)?;
    let mut reports = flatten(
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.fork(i as u64).rng();
                let fp = format!("draw-{i:05}");
                let mut out = Vec::new();
                let p = rng.random_range(1.05..6.0);
                let beta = 10f64.powf(rng.random_range(-2.0..2.0));
                let (a, b) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
                let (l, r) = young_bound(a, b, beta, p)?;
                out.push(EstimateReport::explicit("young", l, r, None).with_fingerprint(&fp).with("p", p));
                let k = rng.random_range(1..8usize);
                let values: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..10.0)).collect();
                let ell = rng.random_range(0.1..4.0);
                let (lo, mid, hi) = power_sum_bounds(&values, ell)?;
                out.push(EstimateReport::explicit("power_sum_lower", lo, mid, None).with_fingerprint(&fp).with("l", ell));
                out.push(EstimateReport::explicit("power_sum_upper", mid, hi, None).with_fingerprint(&fp).with("l", ell));
                let u = random_martingale(&tree, &mut rng);
                for p in [2.0, 3.0, 4.0, 6.0] {
                    out.push(tag(check_burkholder(&tree, &u, p)?, &fp, p));
                }
                Ok(out)
            })
            .collect(),
    )?;
    let ftree = cfg.family.build_tree()?;
    let solved = solved_members(&cfg.family, &ftree, 0)?;
    let a2 = cfg.alpha();
    for (m, s) in &solved {
        for &p in &cfg.p_values {
            reports.extend(norm_equivalence(&ftree, s, p, 0.0, a2, &m.fingerprint));
        }
    }
    let checks = vec![SuiteCheck::at_least(
        "constants.instances",
        reports.iter().filter(|r| r.id == "young").count() as f64,
        cfg.samples as f64,
    )];
    Ok(SuiteOutcome::new(Suite::Constants, reports, checks))
}

/// Largest empirical ratio per id over nested trees with `n` steps.
pub fn refinement_study(cfg: &SuiteConfig, suite: Suite, steps: &[usize]) -> Result<Vec<(usize, BTreeMap<String, f64>)>> {
    let mut out = Vec::new();
    for &n in steps {
        let mut c = cfg.clone();
        c.family.tree.n_steps = n;
        let outcome = run_suite(suite, &c)?;
        let ratios = outcome
            .reports
            .iter()
            .filter(|r| r.tier == Tier::Empirical)
            .fold(BTreeMap::new(), |mut acc: BTreeMap<String, f64>, r| {
                let e = acc.entry(r.id.clone()).or_insert(0.0);
                *e = e.max(r.ratio);
                acc
            });
        out.push((n, ratios));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{DriverFamily, ObstacleFamily, TerminalFamily};
    use crate::tree::TreeConfig;

    fn small() -> SuiteConfig {
        let mut c = SuiteConfig::new(InstanceFamily {
            tree: TreeConfig::new(1.0, 4, 1).with_reveal(0.5, &["a", "b", "c"], &[0.2, 0.3, 0.5]),
            driver: DriverFamily::default(),
            terminal: TerminalFamily::Smooth { scale: 1.0 },
            obstacle: ObstacleFamily::Linear { scale: 0.5, shift: 0.2 },
            count: 6,
            seed: 5,
        });
        c.samples = 40;
        c
    }

    #[test]
    fn every_suite_passes_on_a_small_family() {
        let cfg = small();
        for s in Suite::ALL {
            let out = run_suite(s, &cfg).unwrap();
            assert!(out.passed(), "{}: {:?}", s.name(), out.failures());
            assert!(!out.reports.is_empty());
        }
    }

    #[test]
    fn suites_are_reproducible() {
        let cfg = small();
        let a = run_suite(Suite::Main2, &cfg).unwrap();
        let b = run_suite(Suite::Main2, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.1, 0.01];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
        assert!(log_log_slope(&x, &[1.0, 0.0, 0.0]).is_infinite());
    }
}
