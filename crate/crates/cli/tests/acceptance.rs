//! Runs every shipped config and evaluates the eight acceptance criteria,
//! printing one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use collapse_lab::config::Payload;
use collapse_lab::parallel::{run_tasks, Task};
use collapse_lab::report::Report;
use collapse_lab::{experiments, validate_config, ExperimentConfig};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_all() -> BTreeMap<String, ExperimentConfig> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            let cfg = validate_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{stem}: {e}"));
            out.insert(stem, cfg);
        }
    }
    out
}

struct Criterion {
    id: usize,
    title: &'static str,
    /// Config-name prefixes the criterion is evaluated on.
    runs: &'static [&'static str],
    /// Checks with the tolerance each must be run at (`None`: config-relative bound).
    checks: &'static [(&'static str, Option<f64>)],
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "product model matches closed forms; eigenvalue ratios are 1",
        runs: &["product-ode"],
        checks: &[("closed_form_error", Some(1e-8)), ("eigenvalue_ratio_deviation", Some(1e-10))],
    },
    Criterion {
        id: 2,
        title: "fiber diameter decays at rate e^{-t/2}",
        runs: &["product-ode", "fiber-flow"],
        checks: &[("diameter_slope_deviation", Some(0.01))],
    },
    Criterion {
        id: 3,
        title: "potential, time derivative and volume ratio stay bounded",
        runs: &["fiber-flow"],
        checks: &[
            ("sup_phi", None),
            ("sup_dphi", None),
            ("volume_ratio_max", None),
            ("volume_ratio_min", None),
            ("late_log_slope_sup_phi", None),
            ("late_log_slope_sup_dphi", None),
            ("late_log_slope_volume_max", None),
        ],
    },
    Criterion {
        id: 4,
        title: "e^t(phi - Phi) bounded; lowest mode follows the linearized decay",
        runs: &["fiber-flow"],
        checks: &[
            ("sup_v", None),
            ("late_log_slope_sup_v", None),
            ("mode_slope_relative_error", Some(0.02)),
        ],
    },
    Criterion {
        id: 5,
        title: "elliptic solver recovers the manufactured solution quadratically",
        runs: &["gke-elliptic"],
        checks: &[
            ("solution_error", Some(1e-7)),
            ("newton_iterations", Some(10.0)),
            ("min_convergence_order", Some(1.8)),
        ],
    },
    Criterion {
        id: 6,
        title: "comparison inequality holds and the parabolic flow converges",
        runs: &["gke-parabolic"],
        checks: &[("inequality_excess", Some(1e-8)), ("decay_slope", Some(-0.5))],
    },
    Criterion {
        id: 7,
        title: "semi-flat scaling, rescaling, fiberwise F and Weil-Petersson identities",
        runs: &["semiflat-identities"],
        checks: &[
            ("scaling_error", Some(1e-12)),
            ("rescaling_residual", Some(1e-12)),
            ("fiber_variation_of_f", Some(1e-10)),
            ("weil_petersson_residual", Some(1e-6)),
        ],
    },
    Criterion {
        id: 8,
        title: "curvature stays bounded; product curvature matches the analytic value",
        runs: &["curvature-bound"],
        checks: &[
            ("product_sup_curvature", None),
            ("fiber_sup_curvature", None),
            ("product_curvature_relative_error", Some(0.01)),
        ],
    },
];

fn is_transient(cfg: &ExperimentConfig) -> bool {
    !matches!(&cfg.payload, Payload::GkeParabolic(p) if p.forcing == collapse_lab::config::ForcingMode::Static)
}

#[test]
fn acceptance_criteria() {
    let configs = load_all();
    assert!(configs.len() >= 11, "shipped configs missing");

    // The shipped fiber-flow runs stay in the small-amplitude regime.
    for cfg in configs.values() {
        if let Payload::FiberFlow(f) = &cfg.payload {
            assert!(f.modes.iter().all(|m| m.amplitude.abs() <= 0.2));
            assert_eq!(f.horizon, 10.0);
        }
        if let Payload::SemiflatIdentities(s) = &cfg.payload {
            assert_eq!((s.tau0, s.tau_slope), ([0.0, 1.0], [0.2, 0.0]));
            assert_eq!(s.times, vec![0.0, 1.0, 5.0]);
        }
    }

    let threads = collapse_lab::parallel::thread_budget().unwrap();
    let entries: Vec<(&String, &ExperimentConfig)> = configs.iter().collect();
    let tasks: Vec<Task<collapse_core::Result<Report>>> = entries
        .iter()
        .map(|(_, cfg)| Box::new(move || experiments::run(cfg, 1)) as Task<collapse_core::Result<Report>>)
        .collect();
    let reports: BTreeMap<&String, Report> = entries
        .iter()
        .map(|(name, _)| *name)
        .zip(run_tasks(threads, tasks))
        .map(|(name, r)| (name, r.unwrap_or_else(|e| panic!("{name}: solver error {e}"))))
        .collect();

    let mut all = true;
    for c in CRITERIA {
        let mut failures = Vec::new();
        let mut evaluated = 0;
        for (name, report) in &reports {
            if !c.runs.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            if c.id == 6 && !is_transient(&configs[*name]) {
                continue;
            }
            for (check_name, tolerance) in c.checks {
                let check = report
                    .check(check_name)
                    .unwrap_or_else(|| panic!("{name} lacks check {check_name}"));
                evaluated += 1;
                if let Some(tol) = tolerance {
                    assert_eq!(check.bound, *tol, "{name}: {check_name} must run at the stated tolerance");
                }
                if !check.passed {
                    failures.push(format!("{name}:{check_name} measured {:e} bound {:e}", check.measured, check.bound));
                }
            }
        }
        if c.id == 8 {
            for (name, report) in &reports {
                let sup = report.summary.get("sup_curvature").and_then(|v| v.as_f64());
                if let Some(sup) = sup {
                    evaluated += 1;
                    if !sup.is_finite() {
                        failures.push(format!("{name}: curvature is not finite"));
                    }
                }
            }
        }
        assert!(evaluated > 0, "criterion {} evaluated nothing", c.id);
        let passed = failures.is_empty();
        all &= passed;
        println!(
            "{} criterion {}: {} ({} checks){}",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            evaluated,
            if passed { String::new() } else { format!(": {}", failures.join("; ")) }
        );
    }
    assert!(all, "acceptance criteria failed");
}
