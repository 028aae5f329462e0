//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use bsdelab::bsde::Scheme;
use bsdelab::config::ExperimentConfig;
use bsdelab::counterexample::{run_counterexample, CounterexampleConfig};
use bsdelab::experiments::{
    closed_form_convergence, convergence_orders, girsanov_check, picard_check, picard_ratio_by_alpha,
    representation_check, skorokhod_check, snell_check, tree_exactness, truncation_monotone, truncation_study,
};
use bsdelab::family::{DriverFamily, InstanceFamily, ObstacleFamily, TerminalFamily};
use bsdelab::reflected::alpha_star;
use bsdelab::report::{EstimateReport, Tier};
use bsdelab::seed::RandomSeed;
use bsdelab::suites::{refinement_study, run_suite, stability_decay, Suite, SuiteConfig};
use bsdelab::tree::TreeConfig;
use bsdelab::Result;

/// Largest allowed growth of an empirical ratio from one grid to the next.
const REFINEMENT_GROWTH: f64 = 2.0;
/// Largest allowed spread (max / min) of an empirical ratio across seeds.
const SEED_SPREAD: f64 = 10.0;
/// Smallest accepted closed-form convergence order.
const CONVERGENCE_ORDER: f64 = 0.95;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    let text = fs::read_to_string(configs_dir().join(name)).expect("shipped config");
    ExperimentConfig::from_json(&text).expect("valid shipped config")
}

fn family_of(name: &str) -> InstanceFamily {
    load(name).family(name).expect("config with a family")
}

fn failing(reports: &[EstimateReport]) -> Vec<&EstimateReport> {
    reports.iter().filter(|r| !r.pass).collect()
}

fn max_lhs(reports: &[EstimateReport], id: &str) -> f64 {
    reports.iter().filter(|r| r.id == id).map(|r| r.lhs).fold(0.0, f64::max)
}

fn count(reports: &[EstimateReport], id: &str) -> usize {
    reports.iter().filter(|r| r.id == id).count()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict { pass, detail: detail.into() })
}

fn tree_configs() -> Vec<(String, TreeConfig)> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(configs_dir().join("trees"))
        .expect("tree configs")
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    for p in paths {
        let cfg: TreeConfig = serde_json::from_slice(&fs::read(&p).unwrap()).expect("tree config");
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), cfg));
    }
    let mut names: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    for p in names {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.push((name.clone(), load(&name).tree));
    }
    out
}

fn tree_exactness_all() -> Result<Verdict> {
    let trees = tree_configs();
    let mut bad = Vec::new();
    for (name, t) in &trees {
        let within = t.d <= 2 && t.n_steps <= 12 && t.reveals.len() <= 2;
        if !within || !tree_exactness(t)?.pass {
            bad.push(name.clone());
        }
    }
    verdict(bad.is_empty(), format!("{} tree configs, failing: {bad:?}", trees.len()))
}

fn representation_girsanov() -> Result<Verdict> {
    let mut reps = Vec::new();
    let mut gir = Vec::new();
    for name in ["d2_n6_two_reveals.json", "d1_n10_two_reveals.json"] {
        let cfg: TreeConfig = serde_json::from_slice(&fs::read(configs_dir().join("trees").join(name)).unwrap())?;
        let tree = cfg.build()?;
        reps.extend(representation_check(&tree, 200, RandomSeed::new(7))?);
        gir.extend(girsanov_check(&tree, 50, RandomSeed::new(7))?);
    }
    let bad = failing(&reps).len() + failing(&gir).len();
    verdict(
        bad == 0,
        format!(
            "{} martingales, {} measure changes on 2 trees; max reconstruction {:.1e}, orthogonality {:.1e}, density {:.1e}, Q-martingale {:.1e}",
            count(&reps, "representation_reconstruction"),
            count(&gir, "girsanov_density_mean"),
            max_lhs(&reps, "representation_reconstruction"),
            max_lhs(&reps, "representation_orthogonality"),
            max_lhs(&gir, "girsanov_density_mean"),
            max_lhs(&gir, "girsanov_q_martingale"),
        ),
    )
}

fn snell_equivalence() -> Result<Verdict> {
    let shallow = family_of("snell.json");
    let revealed = InstanceFamily {
        tree: TreeConfig::new(1.5, 3, 1).with_reveal(0.5, &["a", "b"], &[0.3, 0.7]),
        count: 50,
        seed: 21,
        ..shallow.clone()
    };
    let deep = InstanceFamily {
        tree: TreeConfig::new(1.0, 12, 1),
        driver: DriverFamily { l_y: 1.0, l_z: 1.0, ..Default::default() },
        terminal: TerminalFamily::Smooth { scale: 1.0 },
        obstacle: ObstacleFamily::Linear { scale: 0.5, shift: 0.2 },
        count: 20,
        seed: 9,
    };
    let mut small = snell_check(&shallow)?;
    small.extend(snell_check(&revealed)?);
    let big = snell_check(&deep)?;
    let enumerated = count(&small, "snell_enumeration");
    let bad = failing(&small).len() + failing(&big).len();
    verdict(
        bad == 0 && enumerated >= 100 && count(&big, "snell_representation") == deep.count,
        format!(
            "{enumerated} enumerated instances (max |Y - brute| {:.1e}), {} depth-12 DP checks (max defect {:.1e})",
            max_lhs(&small, "snell_enumeration"),
            count(&big, "snell_representation"),
            max_lhs(&big, "snell_representation"),
        ),
    )
}

fn skorokhod() -> Result<Verdict> {
    let family = InstanceFamily { count: 200, ..family_of("reflect.json") };
    let reports = skorokhod_check(&family)?;
    verdict(
        failing(&reports).is_empty() && count(&reports, "skorokhod_defect") == 200,
        format!(
            "200 instances, max complementarity defect {:.1e}, max dynamics residual {:.1e}",
            max_lhs(&reports, "skorokhod_defect"),
            max_lhs(&reports, "dynamics_residual"),
        ),
    )
}

fn picard() -> Result<Verdict> {
    let cfg = load("picard.json");
    let family = cfg.family("picard")?;
    let a_star = alpha_star(family.driver.l_y, family.driver.l_z);
    let reports = picard_check(&family, a_star + 1.0, cfg.picard.tol, cfg.picard.max_iter)?;
    let small = InstanceFamily { count: 10, ..family.clone() };
    let by_alpha = picard_ratio_by_alpha(&small, &[a_star, a_star + 4.0, a_star + 16.0], cfg.picard.tol)?;
    verdict(
        failing(&reports).is_empty() && count(&reports, "picard_contraction") == 50,
        format!(
            "50 instances at alpha {:.1}: max ratio {:.3}, max limit gap {:.1e}; worst ratio by alpha {:?}",
            a_star + 1.0,
            max_lhs(&reports, "picard_contraction"),
            max_lhs(&reports, "picard_limit"),
            by_alpha.iter().map(|(a, r)| (*a, (r * 1e3).round() / 1e3)).collect::<Vec<_>>(),
        ),
    )
}

fn explicit_suite() -> Result<Verdict> {
    let mut cfg = load("default.json").suite_config(load("default.json").family.as_ref().unwrap());
    cfg.family.count = 1000;
    cfg.samples = 1000;
    cfg.p_values = vec![1.2, 1.5, 1.9, 2.0, 3.0];
    let suites = [
        Suite::Meyer,
        Suite::Constants,
        Suite::ItoP,
        Suite::Remark21,
        Suite::Lemma21,
        Suite::Prop32,
        Suite::Prop33,
    ];
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in suites {
        for r in run_suite(s, &cfg)?.reports.iter().filter(|r| r.tier == Tier::Explicit) {
            let e = counts.entry(r.id.clone()).or_default();
            e.0 += 1;
            e.1 += usize::from(r.pass);
        }
    }
    let bad: Vec<String> = counts
        .iter()
        .filter(|(_, (n, ok))| n != ok || *n < 1000)
        .map(|(id, (n, ok))| format!("{id} {ok}/{n}"))
        .collect();
    let fewest = counts.values().map(|c| c.0).min().unwrap_or(0);
    verdict(
        bad.is_empty(),
        format!("{} explicit checks, at least {fewest} draws each; short or failing: {bad:?}", counts.len()),
    )
}

const EMPIRICAL: [Suite; 5] = [Suite::Main1, Suite::Main2, Suite::Lemma21, Suite::Prop32, Suite::Prop33];

fn empirical_maxima(cfg: &SuiteConfig) -> Result<(bool, BTreeMap<String, f64>)> {
    let mut all_pass = true;
    let mut out = BTreeMap::new();
    for s in EMPIRICAL {
        let o = run_suite(s, cfg)?;
        all_pass &= o.passed();
        for r in o.reports.iter().filter(|r| r.tier == Tier::Empirical) {
            let e = out.entry(r.id.clone()).or_insert(0.0f64);
            *e = e.max(r.ratio);
        }
    }
    Ok((all_pass, out))
}

fn empirical_suite() -> Result<Verdict> {
    let base = load("default.json");
    let spec = base.family.clone().unwrap();
    let mut notes = Vec::new();
    let mut ok = true;

    let mut by_seed = Vec::new();
    for seed in [7, 8, 9] {
        let cfg = ExperimentConfig { seed, ..base.clone() }.suite_config(&spec);
        let (pass, maxima) = empirical_maxima(&cfg)?;
        ok &= pass && maxima.values().all(|r| r.is_finite());
        by_seed.push(maxima);
    }
    let mut worst_spread = 1.0f64;
    for id in by_seed[0].keys() {
        let v: Vec<f64> = by_seed.iter().filter_map(|m| m.get(id).copied()).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(l, h), x| (l.min(*x), h.max(*x)));
        let spread = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
        worst_spread = worst_spread.max(spread);
    }
    ok &= worst_spread <= SEED_SPREAD;
    notes.push(format!("seed spread {worst_spread:.2}"));

    let mut cfg = base.suite_config(&spec);
    cfg.family.count = 30;
    let mut worst_growth = 0.0f64;
    for s in EMPIRICAL {
        let study = refinement_study(&cfg, s, &[4, 8, 12])?;
        for w in study.windows(2) {
            for (id, r1) in &w[1].1 {
                let r0 = w[0].1.get(id).copied().unwrap_or(0.0);
                let g = if r0 > 0.0 { r1 / r0 } else if *r1 == 0.0 { 1.0 } else { f64::INFINITY };
                worst_growth = worst_growth.max(g);
            }
        }
    }
    ok &= worst_growth <= REFINEMENT_GROWTH;
    notes.push(format!("worst refinement growth {worst_growth:.2}"));

    let mut dcfg = base.suite_config(&spec);
    dcfg.p_values = vec![1.5, 2.0, 3.0];
    let decay = stability_decay(&dcfg, 20)?;
    for (p, order) in &decay {
        ok &= *order >= (p / 2.0).min(p - 1.0);
    }
    notes.push(format!(
        "decay orders {:?}",
        decay.iter().map(|(p, o)| (*p, (o * 100.0).round() / 100.0)).collect::<Vec<_>>()
    ));
    notes.push(format!("{} ratio ids", by_seed[0].len()));
    verdict(ok, notes.join(", "))
}

fn convergence() -> Result<Verdict> {
    let rows = closed_form_convergence(&[-1.0, 0.5], 1.0, &[4, 8, 16], Scheme::Implicit)?;
    let orders = convergence_orders(&rows);
    let explicit = convergence_orders(&closed_form_convergence(&[-1.0, 0.5], 1.0, &[4, 8, 16], Scheme::Explicit)?);
    let ok = orders.iter().all(|(_, o)| *o >= CONVERGENCE_ORDER);
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(l, o)| format!("{l}: {o:.3}")).collect::<Vec<_>>().join(", ");
    verdict(ok, format!("implicit orders {{{}}}, explicit (reported) {{{}}}", fmt(&orders), fmt(&explicit)))
}

fn counterexample() -> Result<Verdict> {
    let cfg = CounterexampleConfig { seed: 7, ..Default::default() };
    let report = run_counterexample(&cfg)?;
    let failures = report.assess();
    let at = |e: f64| report.summaries.iter().find(|s| s.eps == e).expect("threshold");
    let s = at(0.05);
    verdict(
        failures.is_empty() && s.gap_pass_fraction == 1.0 && report.summaries.len() >= 3,
        format!(
            "eps 0.05: gap ok on {:.0}% (slack {:.4}), mean TV {:.2} vs {:.0} ({:.1}%); slope {:.3}; {failures:?}",
            100.0 * s.gap_pass_fraction,
            s.slack,
            s.mean_tv,
            s.predicted_tv,
            100.0 * s.tv_relative_error,
            report.tv_slope,
        ),
    )
}

fn truncation() -> Result<Verdict> {
    let family = InstanceFamily {
        tree: TreeConfig::new(1.0, 12, 1),
        driver: DriverFamily { l_y: 0.5, l_z: 0.5, g0_scale: 0.5, frozen: false },
        terminal: TerminalFamily::Lognormal { sigma: 1.5 },
        obstacle: ObstacleFamily::Linear { scale: 1.0, shift: 0.0 },
        count: 50,
        seed: 7,
    };
    let levels: Vec<f64> = (5..=11).map(|j| 2f64.powi(j)).collect();
    let rows = truncation_study(&family, &levels, 1.5)?;
    let mono = truncation_monotone(&rows);
    let good = mono.iter().filter(|(_, ok)| *ok).count();
    let first = rows.iter().filter(|r| r.level == 32.0).map(|r| r.increment).fold(0.0, f64::max);
    let last = rows.iter().filter(|r| r.next_level == 2048.0).map(|r| r.increment).fold(0.0, f64::max);
    verdict(
        good == mono.len() && mono.len() == family.count,
        format!("{good}/{} instances monotone over levels 32..2048, largest first increment {first:.2e}, largest final increment {last:.1e}", mono.len()),
    )
}

type Criterion = (&'static str, Option<f64>, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("tree exactness", Some(1.0), tree_exactness_all),
        ("representation and measure change", Some(10.0), representation_girsanov),
        ("snell oracle equivalence", Some(30.0), snell_equivalence),
        ("skorokhod exactness", None, skorokhod),
        ("picard convergence", None, picard),
        ("explicit-constant inequalities", Some(120.0), explicit_suite),
        ("empirical ratios", None, empirical_suite),
        ("convergence to closed forms", None, convergence),
        ("brownian ladder", Some(120.0), counterexample),
        ("truncation", None, truncation),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(v) => {
                let in_time = budget.is_none_or(|b| secs < b);
                let budget_note = if in_time { String::new() } else { format!(" [over the {}s budget]", budget.unwrap()) };
                (v.pass && in_time, format!("{}{budget_note}", v.detail))
            }
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("{} {name} ({secs:.2}s): {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
