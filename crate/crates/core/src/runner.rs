//! Runs an experiment and writes its artifacts with a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde::{solve_bsde, BsdeInstance, Scheme, SolutionQuadruple, DYNAMICS_TOL};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::counterexample::run_counterexample;
use crate::error::{Error, Result};
use crate::experiments::{skorokhod_check, snell_check, PICARD_MATCH_TOL};
use crate::family::fingerprint;
use crate::generator::{probe_lipschitz, FrozenGenerator};
use crate::martingale::EXACT_TOL;
use crate::norms::{norm_report, NormReport};
use crate::reflected::{alpha_star, check_skorokhod, picard_solve, solve_reflected, PicardTrace};
use crate::report::EstimateReport;
use crate::seed::RandomSeed;
use crate::suites::{run_suite, Suite, SuiteOutcome};

pub const MANIFEST_NAME: &str = "manifest.json";

/// One output file, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn json<T: Serialize>(name: &str, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self { name: name.into(), bytes })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

/// Artifacts plus the hard assertions that failed.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub command: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactEntry>,
    pub passed: bool,
    pub failures: Vec<String>,
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Instances of the run: the hand-written one if present, else the family.
/// The explicit instance of `cfg`, or the members of its family, with fingerprints.
pub fn instances(cfg: &ExperimentConfig, what: &str) -> Result<Vec<(String, BsdeInstance)>> {
    if let Some(spec) = &cfg.instance {
        let tree = Arc::new(cfg.tree.build()?);
        let g = spec.generator.build(&tree)?;
        probe_lipschitz(&tree, g.as_ref(), RandomSeed::new(cfg.seed))?;
        let xi = spec.terminal.materialize(&tree)?;
        let mut inst = BsdeInstance::from_process(tree.clone(), &xi, g)?;
        if let Some(o) = &spec.obstacle {
            inst = inst.with_obstacle(o.materialize(&tree)?)?;
        }
        return Ok(vec![(fingerprint(&inst), inst)]);
    }
    let family = cfg.family(what)?;
    Ok(family
        .members()?
        .into_iter()
        .map(|m| (m.fingerprint, m.instance))
        .collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

struct Solved {
    fingerprint: String,
    tree: Arc<crate::tree::ScenarioTree>,
    solution: SolutionQuadruple,
    residual: f64,
    orthogonality: f64,
    skorokhod: Option<f64>,
    violation: Option<f64>,
    norms: Vec<NormReport>,
}

fn solve_all(cfg: &ExperimentConfig, reflect: bool) -> Result<RunOutput> {
    let what = if reflect { "reflect" } else { "solve" };
    let list = instances(cfg, what)?;
    if reflect && list.iter().any(|(_, i)| i.obstacle.is_none()) {
        return Err(Error::Config("reflect needs an obstacle in `family` or `instance`".into()));
    }
    let solved: Vec<Solved> = list
        .into_par_iter()
        .map(|(fp, inst)| {
            let tree = inst.tree.clone();
            let t = tree.as_ref();
            let solution = if reflect {
                solve_reflected(&inst, cfg.scheme)?
            } else {
                solve_bsde(&BsdeInstance { obstacle: None, ..inst.clone() }, cfg.scheme)?
            };
            let (skorokhod, violation) = match (&inst.obstacle, reflect) {
                (Some(s), true) => (
                    Some(check_skorokhod(t, &solution, s)),
                    Some((0..t.node_count()).map(|n| (s[n] - solution.y[n]).max(0.0)).fold(0.0, f64::max)),
                ),
                _ => (None, None),
            };
            Ok(Solved {
                fingerprint: fp,
                residual: solution.dynamics_residual(t),
                orthogonality: solution.orthogonality_defect(t),
                norms: cfg.norms.iter().map(|&n| norm_report(t, &solution, n)).collect(),
                skorokhod,
                violation,
                solution,
                tree,
            })
        })
        .collect::<Result<_>>()?;

    let mut failures = Vec::new();
    for s in &solved {
        let scale = max_abs(s.solution.y.values());
        if !(s.residual <= DYNAMICS_TOL) {
            failures.push(format!("{}: dynamics residual {:.3e}", s.fingerprint, s.residual));
        }
        if !(s.orthogonality <= EXACT_TOL * scale) {
            failures.push(format!("{}: orthogonality defect {:.3e}", s.fingerprint, s.orthogonality));
        }
        if let Some(d) = s.skorokhod {
            if !(d.abs() <= EXACT_TOL * scale) {
                failures.push(format!("{}: Skorokhod defect {:.3e}", s.fingerprint, d));
            }
        }
        if let Some(v) = s.violation {
            if v > 0.0 {
                failures.push(format!("{}: Y below the obstacle by {:.3e}", s.fingerprint, v));
            }
        }
    }

    let d = cfg.tree.d;
    let mut cols = header(&["instance", "node", "step", "time"]);
    cols.extend((1..=d).map(|i| format!("w_{i}")));
    cols.push("y".into());
    cols.extend((1..=d).map(|i| format!("z_{i}")));
    cols.extend(header(&["m", "k", "driver"]));
    let mut node_rows = Vec::new();
    for (i, s) in solved.iter().enumerate() {
        let t = s.tree.as_ref();
        for n in 0..t.node_count() {
            let mut r = vec![i.to_string(), n.to_string(), t.step(n).to_string(), num(t.time_of(n))];
            r.extend(t.w(n).iter().map(|&v| num(v)));
            r.push(num(s.solution.y[n]));
            if t.is_leaf(n) {
                r.extend((0..d).map(|_| String::new()));
            } else {
                r.extend(s.solution.z.at_parent(n).iter().map(|&v| num(v)));
            }
            r.push(num(s.solution.m[n]));
            r.push(num(s.solution.k[n]));
            r.push(if t.is_leaf(n) { String::new() } else { num(s.solution.driver[n]) });
            node_rows.push(r);
        }
    }

    let summary_cols = header(&[
        "instance",
        "fingerprint",
        "y0",
        "dynamics_residual",
        "orthogonality_defect",
        "skorokhod_defect",
        "obstacle_violation",
        "k_terminal_mean",
        "inner_iterations",
    ]);
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let summary_rows = solved.iter().enumerate().map(|(i, s)| {
        let t = s.tree.as_ref();
        let k_t: f64 = t.leaves().map(|l| t.path_prob(l) * s.solution.k[l]).sum();
        vec![
            i.to_string(),
            s.fingerprint.clone(),
            num(s.solution.y[0]),
            num(s.residual),
            num(s.orthogonality),
            opt(s.skorokhod),
            opt(s.violation),
            num(k_t),
            s.solution.inner_iterations.to_string(),
        ]
    });

    let norm_cols = header(&[
        "instance",
        "fingerprint",
        "p",
        "alpha",
        "s_p",
        "h_p_alpha",
        "h1_p_alpha",
        "m_p_alpha",
        "i_p_alpha",
    ]);
    let mut norm_rows = Vec::new();
    for (i, s) in solved.iter().enumerate() {
        for (cfg_n, r) in cfg.norms.iter().zip(&s.norms) {
            norm_rows.push(vec![
                i.to_string(),
                s.fingerprint.clone(),
                num(cfg_n.p),
                num(cfg_n.alpha),
                num(r.s_p),
                num(r.h_p_alpha),
                num(r.h1_p_alpha),
                num(r.m_p_alpha),
                num(r.i_p_alpha),
            ]);
        }
    }

    #[derive(Serialize)]
    struct JsonRow<'a> {
        fingerprint: &'a str,
        y0: f64,
        dynamics_residual: f64,
        orthogonality_defect: f64,
        skorokhod_defect: Option<f64>,
        norms: &'a [NormReport],
    }
    let json: Vec<JsonRow> = solved
        .iter()
        .map(|s| JsonRow {
            fingerprint: &s.fingerprint,
            y0: s.solution.y[0],
            dynamics_residual: s.residual,
            orthogonality_defect: s.orthogonality,
            skorokhod_defect: s.skorokhod,
            norms: &s.norms,
        })
        .collect();

    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "solutions.csv".into(), bytes: csv_bytes(&cols, node_rows)? },
            Artifact { name: "summary.csv".into(), bytes: csv_bytes(&summary_cols, summary_rows)? },
            Artifact { name: "norms.csv".into(), bytes: csv_bytes(&norm_cols, norm_rows)? },
            Artifact::json("summary.json", &json)?,
        ],
        failures,
    })
}

#[derive(Serialize)]
struct PicardRow {
    fingerprint: String,
    alpha: f64,
    trace: Option<PicardTrace>,
    error: Option<String>,
    limit_gap: f64,
    frozen_iterations: usize,
}

fn picard_all(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let list = instances(cfg, "picard")?;
    let opts = &cfg.picard;
    let rows: Vec<PicardRow> = list
        .into_par_iter()
        .map(|(fp, inst)| {
            let tree = inst.tree.as_ref();
            let (l_y, l_z) = inst.generator.lipschitz();
            let alpha = opts.alpha.unwrap_or_else(|| alpha_star(l_y, l_z) + 1.0);
            let direct = if inst.obstacle.is_some() {
                solve_reflected(&inst, Scheme::Implicit)?
            } else {
                solve_bsde(&inst, Scheme::Implicit)?
            };
            let (trace, error, gap) = match picard_solve(&inst, alpha, opts.max_iter, opts.tol) {
                Ok((limit, trace)) => {
                    let gap = (0..tree.node_count()).map(|n| (limit.y[n] - direct.y[n]).abs()).fold(0.0, f64::max);
                    (Some(trace), None, gap)
                }
                Err(Error::PicardNonConvergence(trace)) => {
                    let msg = format!("no convergence after {} iterations", trace.iterations());
                    (Some(*trace), Some(msg), f64::INFINITY)
                }
                Err(e) => return Err(e),
            };
            let frozen = BsdeInstance {
                generator: Arc::new(FrozenGenerator {
                    values: (0..tree.node_count()).map(|n| inst.generator.g0(n)).collect(),
                }),
                ..inst.clone()
            };
            let (_, ftrace) = picard_solve(&frozen, alpha, opts.max_iter, opts.tol)?;
            Ok(PicardRow {
                fingerprint: fp,
                alpha,
                trace,
                error,
                limit_gap: gap,
                frozen_iterations: ftrace.iterations(),
            })
        })
        .collect::<Result<_>>()?;

    let match_tol = PICARD_MATCH_TOL.max(10.0 * opts.tol);
    let mut failures = Vec::new();
    for r in &rows {
        if let Some(e) = &r.error {
            failures.push(format!("{}: {e}", r.fingerprint));
        }
        let ratio = r.trace.as_ref().map_or(f64::NAN, PicardTrace::max_contraction_ratio);
        if !(ratio < 1.0) {
            failures.push(format!("{}: contraction ratio {ratio:.4}", r.fingerprint));
        }
        if !(r.limit_gap <= match_tol) {
            failures.push(format!("{}: Picard limit off the direct solution by {:.3e}", r.fingerprint, r.limit_gap));
        }
        if r.frozen_iterations != 1 {
            failures.push(format!("{}: frozen driver took {} iterations", r.fingerprint, r.frozen_iterations));
        }
    }

    let trace_cols = header(&["instance", "iteration", "y0", "dist_y", "dist_z", "dist_l", "weighted", "ratio"]);
    let mut trace_rows = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let Some(t) = &r.trace else { continue };
        for (j, s) in t.steps.iter().enumerate() {
            let ratio = if j > 0 && t.steps[j - 1].weighted > 0.0 {
                num(s.weighted / t.steps[j - 1].weighted)
            } else {
                String::new()
            };
            trace_rows.push(vec![
                i.to_string(),
                (j + 1).to_string(),
                num(s.y0),
                num(s.dist_y),
                num(s.dist_z),
                num(s.dist_l),
                num(s.weighted),
                ratio,
            ]);
        }
    }
    let summary_cols = header(&[
        "instance",
        "fingerprint",
        "alpha",
        "iterations",
        "converged",
        "max_ratio",
        "limit_gap",
        "frozen_iterations",
    ]);
    let summary_rows = rows.iter().enumerate().map(|(i, r)| {
        let (it, conv, ratio) = r.trace.as_ref().map_or((0, false, f64::NAN), |t| {
            (t.iterations(), t.converged(), t.max_contraction_ratio())
        });
        vec![
            i.to_string(),
            r.fingerprint.clone(),
            num(r.alpha),
            it.to_string(),
            conv.to_string(),
            num(ratio),
            num(r.limit_gap),
            r.frozen_iterations.to_string(),
        ]
    });
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "picard_trace.csv".into(), bytes: csv_bytes(&trace_cols, trace_rows)? },
            Artifact { name: "summary.csv".into(), bytes: csv_bytes(&summary_cols, summary_rows)? },
            Artifact::json("picard.json", &rows)?,
        ],
        failures,
    })
}

fn report_cols() -> Vec<String> {
    header(&["group", "fingerprint", "id", "tier", "lhs", "rhs", "constant", "ratio", "pass", "components"])
}

fn report_row(group: &str, r: &EstimateReport) -> Vec<String> {
    let comps: Vec<String> = r.components.iter().map(|(k, v)| format!("{k}={v}")).collect();
    vec![
        group.to_string(),
        r.fingerprint.clone(),
        r.id.clone(),
        serde_json::to_value(r.tier)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        num(r.lhs),
        num(r.rhs),
        r.constant.map(num).unwrap_or_default(),
        num(r.ratio),
        r.pass.to_string(),
        comps.join(";"),
    ]
}

/// Parses `all` or a single suite name.
pub fn parse_suites(name: &str) -> Result<Vec<Suite>> {
    if name == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    Suite::parse(name).map(|s| vec![s]).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        Error::Config(format!("unknown suite `{name}`; expected all or one of {}", names.join(", ")))
    })
}

fn verify(cfg: &ExperimentConfig, suite: &str) -> Result<RunOutput> {
    let suites = parse_suites(suite)?;
    let spec = cfg
        .family
        .as_ref()
        .ok_or_else(|| Error::Config("verify needs a `family` block".into()))?;
    let scfg = cfg.suite_config(spec);
    let outcomes: Vec<SuiteOutcome> = suites.iter().map(|&s| run_suite(s, &scfg)).collect::<Result<_>>()?;
    let mut failures = Vec::new();
    let mut report_rows = Vec::new();
    let mut check_rows = Vec::new();
    for o in &outcomes {
        failures.extend(o.failures().into_iter().map(|f| format!("{}: {f}", o.suite)));
        report_rows.extend(o.reports.iter().map(|r| report_row(&o.suite, r)));
        check_rows.extend(o.checks.iter().map(|c| {
            vec![o.suite.clone(), c.name.clone(), num(c.value), num(c.threshold), c.pass.to_string()]
        }));
    }
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "reports.csv".into(), bytes: csv_bytes(&report_cols(), report_rows)? },
            Artifact {
                name: "checks.csv".into(),
                bytes: csv_bytes(&header(&["suite", "check", "value", "threshold", "pass"]), check_rows)?,
            },
            Artifact::json("verify.json", &outcomes)?,
        ],
        failures,
    })
}

fn counterexample(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let report = run_counterexample(&cfg.counterexample_config())?;
    let summary_cols = header(&[
        "eps",
        "slack",
        "max_gap",
        "gap_pass_fraction",
        "mean_tv",
        "tv_q05",
        "tv_q25",
        "tv_q50",
        "tv_q75",
        "tv_q95",
        "mean_crossings",
        "predicted_tv",
        "tv_relative_error",
        "simultaneous_increases",
        "coarse_grid",
    ]);
    let summary_rows = report.summaries.iter().map(|s| {
        let mut r = vec![num(s.eps), num(s.slack), num(s.max_gap), num(s.gap_pass_fraction), num(s.mean_tv)];
        r.extend(s.tv_quantiles.iter().map(|&q| num(q)));
        r.extend([
            num(s.mean_crossings),
            num(s.predicted_tv),
            num(s.tv_relative_error),
            s.simultaneous_increases.to_string(),
            s.coarse_grid.to_string(),
        ]);
        r
    });
    let path_cols = header(&["path", "eps", "sup_gap", "tv", "tv_plus", "tv_minus", "crossings"]);
    let path_rows = report.paths.iter().enumerate().flat_map(|(i, per)| {
        per.iter().map(move |l| {
            vec![
                i.to_string(),
                num(l.eps),
                num(l.sup_gap),
                num(l.tv),
                num(l.tv_plus),
                num(l.tv_minus),
                l.crossings.to_string(),
            ]
        })
    });
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "ladder_summary.csv".into(), bytes: csv_bytes(&summary_cols, summary_rows)? },
            Artifact { name: "ladder_paths.csv".into(), bytes: csv_bytes(&path_cols, path_rows)? },
            Artifact::json("counterexample.json", &report)?,
        ],
        failures: report.assess(),
    })
}

fn snell(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let family = cfg.family("snell-check")?;
    if matches!(family.obstacle, crate::family::ObstacleFamily::None) {
        return Err(Error::Config("snell-check needs `family.obstacle`".into()));
    }
    let groups = [("snell", snell_check(&family)?), ("skorokhod", skorokhod_check(&family)?)];
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (g, reports) in &groups {
        for r in reports {
            if !r.pass {
                failures.push(format!("{g}: {} failed on {} (lhs {:.3e}, rhs {:.3e})", r.id, r.fingerprint, r.lhs, r.rhs));
            }
            rows.push(report_row(g, r));
        }
    }
    #[derive(Serialize)]
    struct Group<'a> {
        group: &'a str,
        reports: &'a [EstimateReport],
    }
    let json: Vec<Group> = groups.iter().map(|(g, r)| Group { group: g, reports: r }).collect();
    Ok(RunOutput {
        artifacts: vec![
            Artifact { name: "reports.csv".into(), bytes: csv_bytes(&report_cols(), rows)? },
            Artifact::json("snell.json", &json)?,
        ],
        failures,
    })
}

/// Runs one experiment in memory. `suite` is used by `verify` only and
/// defaults to `all`.
pub fn run(cfg: &ExperimentConfig, kind: ExperimentKind, suite: Option<&str>) -> Result<RunOutput> {
    match kind {
        ExperimentKind::Solve => solve_all(cfg, false),
        ExperimentKind::Reflect => solve_all(cfg, true),
        ExperimentKind::Picard => picard_all(cfg),
        ExperimentKind::Verify => verify(cfg, suite.unwrap_or("all")),
        ExperimentKind::Counterexample => counterexample(cfg),
        ExperimentKind::SnellCheck => snell(cfg),
    }
}

fn manifest_for(cfg: &ExperimentConfig, kind: ExperimentKind, suite: Option<&str>, out: &RunOutput) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: kind,
        suite: (kind == ExperimentKind::Verify).then(|| suite.unwrap_or("all").to_string()),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        artifacts: out
            .artifacts
            .iter()
            .map(|a| ArtifactEntry { name: a.name.clone(), sha256: a.sha256(), bytes: a.bytes.len() })
            .collect(),
        passed: out.failures.is_empty(),
        failures: out.failures.clone(),
    }
}

fn write_all(dir: &Path, out: &RunOutput, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for a in &out.artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    let m = Artifact::json(MANIFEST_NAME, manifest)?;
    fs::write(dir.join(MANIFEST_NAME), m.bytes)?;
    Ok(())
}

/// Runs and writes the artifacts and `manifest.json` into `dir`.
pub fn execute(cfg: &ExperimentConfig, kind: ExperimentKind, suite: Option<&str>, dir: &Path) -> Result<Manifest> {
    let out = run(cfg, kind, suite)?;
    let manifest = manifest_for(cfg, kind, suite, &out);
    write_all(dir, &out, &manifest)?;
    Ok(manifest)
}

/// Result of re-running a manifest.
#[derive(Debug, Clone)]
pub struct Replay {
    pub manifest: Manifest,
    /// Artifacts whose bytes differ from the recorded hashes.
    pub mismatches: Vec<String>,
}

impl Replay {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.manifest.passed
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("manifest at `{path}`: {}", e.into_inner()))
    })?;
    m.config.validate()?;
    if m.seed != m.config.seed {
        return Err(Error::Config(format!(
            "manifest seed {} does not match its config seed {}",
            m.seed, m.config.seed
        )));
    }
    if m.config.hash() != m.config_hash {
        return Err(Error::Config(format!(
            "manifest config hash {} does not match its config ({})",
            m.config_hash,
            m.config.hash()
        )));
    }
    Ok(m)
}

/// Re-runs the experiment recorded in a manifest into `dir` and compares
/// every artifact against the recorded hash.
pub fn replay(path: &Path, dir: &Path) -> Result<Replay> {
    let recorded = read_manifest(path)?;
    let manifest = execute(&recorded.config, recorded.command, recorded.suite.as_deref(), dir)?;
    let mut mismatches = Vec::new();
    for a in &recorded.artifacts {
        match manifest.artifacts.iter().find(|b| b.name == a.name) {
            Some(b) if b.sha256 == a.sha256 => {}
            Some(_) => mismatches.push(format!("{}: content differs", a.name)),
            None => mismatches.push(format!("{}: not produced", a.name)),
        }
    }
    for b in &manifest.artifacts {
        if !recorded.artifacts.iter().any(|a| a.name == b.name) {
            mismatches.push(format!("{}: not in the recorded manifest", b.name));
        }
    }
    Ok(Replay { manifest, mismatches })
}

/// Default output directory of a replay: `replay/` next to the manifest.
pub fn replay_dir(manifest: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join("replay")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_config();
        cfg.family.as_mut().unwrap().count = 4;
        cfg.suites.samples = Some(20);
        cfg
    }

    #[test]
    fn solve_is_deterministic() {
        let cfg = small();
        let a = run(&cfg, ExperimentKind::Solve, None).unwrap();
        let b = run(&cfg, ExperimentKind::Solve, None).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        assert_eq!(a.artifacts, b.artifacts);
    }

    #[test]
    fn reflect_and_picard_pass() {
        let cfg = small();
        for kind in [ExperimentKind::Reflect, ExperimentKind::Picard, ExperimentKind::SnellCheck] {
            let out = run(&cfg, kind, None).unwrap();
            assert!(out.failures.is_empty(), "{}: {:?}", kind.name(), out.failures);
        }
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(parse_suites("nope"), Err(Error::Config(_))));
        assert_eq!(parse_suites("all").unwrap().len(), Suite::ALL.len());
    }
}
