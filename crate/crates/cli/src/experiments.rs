//! The registered experiments. Each turns a validated config into a report.

use std::f64::consts::PI;

use collapse_core::geometry::{ddbar, mixed_density, ricci_form};
use collapse_core::gke::{self, convergence_orders, Forcing, ParabolicConfig};
use collapse_core::krf::{self, linear_mode_decay, Diagnostics, RunConfig};
use collapse_core::models::semiflat::{
    self, base_form_pullback, density_f, fiber_variation, volume_form, FiberPotential, QuarticControl, SemiFlat,
};
use collapse_core::models::{FiberFlowSpec, ProductModelSpec, SemiFlatSpec};
use collapse_core::rates::{rate_fit, Abscissa};
use collapse_core::{HermitianField, Result, ScalarField};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::{
    CurvatureConfig, ExperimentConfig, FiberFlowConfig, ForcingMode, GkeEllipticConfig, GkeParabolicConfig, Payload,
    ProductOdeConfig, SemiflatConfig,
};
use crate::parallel::{run_tasks, Task};
use crate::report::{Check, Report};

/// Runs one experiment with at most `threads` workers for its sub-tasks.
pub fn run(config: &ExperimentConfig, threads: usize) -> Result<Report> {
    match &config.payload {
        Payload::ProductOde(c) => product_ode(c),
        Payload::FiberFlow(c) => fiber_flow(c),
        Payload::GkeElliptic(c) => gke_elliptic(c, threads),
        Payload::GkeParabolic(c) => gke_parabolic(c),
        Payload::SemiflatIdentities(c) => semiflat_identities(c, config.seed, threads),
        Payload::CurvatureBound(c) => curvature_bound(c, threads),
    }
}

/// Analytic curvature norm of `a * omega_B` on `p` hyperbolic curves.
pub fn product_curvature_exact(spec: &ProductModelSpec, a: f64) -> f64 {
    (spec.base_dim as f64).sqrt() / a
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

fn series(diags: &[Diagnostics], f: impl Fn(&Diagnostics) -> f64) -> Vec<(f64, f64)> {
    diags.iter().map(|d| (d.t, f(d))).collect()
}

fn product_ode(c: &ProductOdeConfig) -> Result<Report> {
    let spec = c.product_spec();
    let run_cfg = RunConfig {
        sample_dt: c.sample_dt,
        diameter_dt: c.diameter_dt,
        diameter_resolution: c.diameter_resolution,
        step: c.step(),
        ..RunConfig::default()
    };
    let run = krf::run_product(&spec, c.horizon, &run_cfg)?;
    let mut report = Report::new(crate::config::ExperimentName::ProductOde);
    let mut closed_form_error: f64 = 0.0;
    let mut ratio_deviation: f64 = 0.0;
    let mut curvature_error: f64 = 0.0;
    for (s, d) in run.samples.iter().zip(&run.diagnostics) {
        let exact = product_curvature_exact(&spec, s.a_exact);
        closed_form_error = closed_form_error.max((s.a - s.a_exact).abs()).max((s.b - s.b_exact).abs());
        ratio_deviation = ratio_deviation.max((d.ratio_min - 1.0).abs()).max((d.ratio_max - 1.0).abs());
        curvature_error = curvature_error.max((d.curvature - exact).abs() / exact);
        report.rows.push(vec![
            s.t,
            s.phi,
            s.a,
            s.b,
            s.a_exact,
            s.b_exact,
            d.sup_dphi,
            d.volume_max,
            d.trace_sup,
            d.ratio_min,
            d.ratio_max,
            d.q_max,
            d.curvature,
            exact,
        ]);
    }
    let diameter = rate_fit("fiber_diameter", &run.diameters, Abscissa::T, None)?;
    let acc = &c.acceptance;
    report.checks.push(Check::at_most("closed_form_error", closed_form_error, acc.closed_form_tol));
    report.checks.push(Check::at_most("eigenvalue_ratio_deviation", ratio_deviation, acc.ratio_tol));
    report.checks.push(Check::at_most(
        "diameter_slope_deviation",
        (diameter.slope + 0.5).abs(),
        acc.diameter_slope_tol,
    ));
    report.checks.push(Check::at_most("curvature_relative_error", curvature_error, acc.curvature_rel_tol));
    report.note("diameter_slope", diameter.slope);
    report.note("accepted_steps", run.stats.accepted);
    report.note("rejected_steps", run.stats.rejected);
    report.plot("diameter", run.diameters.clone());
    report.plot("a", run.samples.iter().map(|s| (s.t, s.a)).collect());
    report.plot("b", run.samples.iter().map(|s| (s.t, s.b)).collect());
    report.plot("curvature", series(&run.diagnostics, |d| d.curvature));
    report.rates.push(diameter);
    Ok(report)
}

/// Log-slope over the final half of a positive series; `-inf` when the
/// series has reached zero.
fn late_log_slope(name: &str, samples: &[(f64, f64)]) -> Result<f64> {
    if samples.iter().skip(samples.len() / 2).any(|s| s.1 <= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(rate_fit(name, samples, Abscissa::T, None)?.slope)
}

fn fiber_flow(c: &FiberFlowConfig) -> Result<Report> {
    let spec = c.fiber_spec();
    let run_cfg = RunConfig {
        sample_dt: c.sample_dt,
        diameter_dt: c.diameter_dt,
        q_constant: c.q_constant,
        step: c.step(),
        ..RunConfig::default()
    };
    let run = krf::run_fiber_flow(&spec, &run_cfg)?;
    let (kx, ky) = run.tracked_mode;
    let amp0 = run.mode_amplitudes[0].1;
    let mut report = Report::new(crate::config::ExperimentName::FiberFlow);
    for (d, &(t, amp)) in run.diagnostics.iter().zip(&run.mode_amplitudes) {
        report.rows.push(vec![
            d.t,
            d.sup_phi,
            d.sup_dphi,
            d.volume_min,
            d.volume_max,
            d.trace_sup,
            d.ratio_min,
            d.ratio_max,
            d.sup_v,
            d.q_max,
            d.fiber_limit,
            d.curvature,
            amp,
            linear_mode_decay(spec.b0, kx, ky, amp0, t),
        ]);
    }
    let acc = &c.acceptance;
    let d0 = run.diagnostics[0];
    let rest = &run.diagnostics;

    let diameter = rate_fit("fiber_diameter", &run.diameters, Abscissa::T, None)?;
    report.checks.push(Check::at_most(
        "diameter_slope_deviation",
        (diameter.slope + 0.5).abs(),
        acc.diameter_slope_tol,
    ));

    // Maximum principle: phi stays between its initial range and log a(t).
    let phi_bound = d0.sup_phi.max(spec.a0.ln().abs()) * (1.0 + 1e-9) + 1e-12;
    report.checks.push(Check::at_most("sup_phi", max_of(rest.iter().map(|d| d.sup_phi)), phi_bound));
    report.checks.push(Check::at_most(
        "sup_dphi",
        max_of(rest.iter().map(|d| d.sup_dphi)),
        acc.growth_factor * d0.sup_dphi.max(1e-12),
    ));
    report.checks.push(Check::at_most(
        "volume_ratio_max",
        max_of(rest.iter().map(|d| d.volume_max)),
        2.0 * d0.volume_max.max(1.0),
    ));
    report.checks.push(Check::at_least(
        "volume_ratio_min",
        min_of(rest.iter().map(|d| d.volume_min)),
        0.5 * d0.volume_min.min(1.0),
    ));
    for (name, f) in [
        ("sup_phi", (|d: &Diagnostics| d.sup_phi) as fn(&Diagnostics) -> f64),
        ("sup_dphi", |d| d.sup_dphi),
        ("volume_max", |d| d.volume_max),
        ("sup_v", |d| d.sup_v),
    ] {
        let slope = late_log_slope(name, &series(rest, f))?;
        report.checks.push(Check::at_most(format!("late_log_slope_{name}"), slope, acc.max_late_log_slope));
    }
    report.checks.push(Check::at_most(
        "sup_v",
        max_of(rest.iter().map(|d| d.sup_v)),
        acc.growth_factor * d0.sup_v.max(1e-12),
    ));

    let cutoff = run
        .mode_amplitudes
        .iter()
        .take_while(|(_, a)| *a > acc.mode_floor * amp0)
        .last()
        .map_or(0.0, |s| s.0);
    let expected = -PI * PI * (kx * kx + ky * ky) as f64 / spec.b0;
    let mode = rate_fit("mode_amplitude", &run.mode_amplitudes, Abscissa::ExpT, Some((0.0, cutoff)))?;
    report.checks.push(Check::at_most(
        "mode_slope_relative_error",
        ((mode.slope - expected) / expected).abs(),
        acc.mode_slope_rel_tol,
    ));

    report.note("diameter_slope", diameter.slope);
    report.note("mode_slope", mode.slope);
    report.note("mode_slope_expected", expected);
    report.note("tracked_mode", vec![kx, ky]);
    report.note("sup_curvature", max_of(rest.iter().map(|d| d.curvature)));
    report.note("accepted_steps", run.stats.accepted);
    report.note("rejected_steps", run.stats.rejected);
    report.plot("diameter", run.diameters.clone());
    report.plot("mode_amplitude", run.mode_amplitudes.clone());
    report.plot("sup_v", series(rest, |d| d.sup_v));
    report.plot("sup_phi", series(rest, |d| d.sup_phi));
    report.plot("volume_max", series(rest, |d| d.volume_max));
    report.plot("curvature", series(rest, |d| d.curvature));
    report.rates.push(diameter);
    report.rates.push(mode);
    Ok(report)
}

fn gke_elliptic(c: &GkeEllipticConfig, threads: usize) -> Result<Report> {
    let testbed = c.testbed();
    let omega = testbed.omega_sigma()?;
    let f = testbed.density()?;
    let probe = ScalarField::constant(omega.grid(), c.probe_shift);
    let probe_ref = &probe;
    let tasks: Vec<Task<Result<gke::GkeSolution>>> = vec![
        Box::new(|| gke::solve_gke(&omega, &f, &c.newton)),
        Box::new(|| gke::solve_gke_from(&omega, &f, probe_ref.clone(), &c.newton)),
    ];
    let mut results = run_tasks(threads, tasks).into_iter();
    let sol = results.next().expect("two tasks")?;
    let alt = results.next().expect("two tasks")?;

    let mut report = Report::new(crate::config::ExperimentName::GkeElliptic);
    for (i, r) in sol.residual_history.iter().enumerate() {
        report.rows.push(vec![i as f64, *r]);
    }
    let acc = &c.acceptance;
    if let Some(exact) = testbed.manufactured_solution()? {
        let err = sol.u.sub(&exact)?.sup_norm();
        report.checks.push(Check::at_most("solution_error", err, acc.solution_tol));
    }
    report
        .checks
        .push(Check::at_most("newton_iterations", sol.iterations as f64, acc.max_iterations as f64));
    let orders = convergence_orders(&sol.residual_history, acc.order_threshold, acc.order_floor);
    let min_order = if orders.is_empty() { f64::NAN } else { min_of(orders.iter().copied()) };
    report.checks.push(Check::at_least("min_convergence_order", min_order, acc.min_order));
    report.checks.push(Check::at_most(
        "uniqueness_distance",
        sol.u.sub(&alt.u)?.sup_norm(),
        acc.uniqueness_factor * c.newton.tol,
    ));
    report.checks.push(Check::at_least("positivity_margin", sol.positivity_margin, 0.0));
    report.note("convergence_orders", orders);
    report.note("residual_history", sol.residual_history.clone());
    report.note("probe_iterations", alt.iterations);
    report.plot(
        "residual",
        sol.residual_history.iter().enumerate().map(|(i, r)| (i as f64, *r)).collect(),
    );
    Ok(report)
}

fn gke_parabolic(c: &GkeParabolicConfig) -> Result<Report> {
    let testbed = c.testbed();
    let omega = testbed.omega_sigma()?;
    let f = testbed.density()?;
    let forcing = match c.forcing {
        ForcingMode::Static => Forcing::Static,
        ForcingMode::Transient => Forcing::Transient(c.rho()?),
    };
    let u_inf = gke::solve_gke(&omega, &f, &c.newton)?.u;
    let u0 = u_inf.add_constant(c.initial_shift);
    let par = ParabolicConfig {
        horizon: c.horizon,
        sample_dt: c.sample_dt,
        step: c.step(),
        newton: c.newton.clone(),
    };
    let traj = gke::parabolic_gke(&omega, &f, &u0, &forcing, &par)?;

    let mut report = Report::new(crate::config::ExperimentName::GkeParabolic);
    for s in &traj.samples {
        report.rows.push(vec![s.t, s.a_max, s.a_min, s.distance]);
    }
    let acc = &c.acceptance;
    let distance: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.distance)).collect();
    let decay = rate_fit("distance", &distance, Abscissa::T, None)?;
    report
        .checks
        .push(Check::at_most("inequality_excess", traj.max_inequality_excess, acc.inequality_slack));
    match c.forcing {
        ForcingMode::Transient => {
            report.checks.push(Check::at_most("decay_slope", decay.slope, acc.max_decay_slope));
        }
        ForcingMode::Static => {
            report
                .checks
                .push(Check::at_most("static_slope_relative_error", (decay.slope + 1.0).abs(), acc.static_slope_tol));
        }
    }
    report
        .checks
        .push(Check::at_most("max_principle_excess", traj.max_principle_excess, acc.max_principle_tol));
    report.note("forcing_constant", traj.forcing_constant);
    report.note("decay_slope", decay.slope);
    report.note("accepted_steps", traj.accepted_steps);
    report.plot("distance", distance);
    report.plot("a_max", traj.samples.iter().map(|s| (s.t, s.a_max)).collect());
    report.rates.push(decay);
    Ok(report)
}

/// Largest relative error of `psi(z, l xi) = l^2 psi(z, xi)` over the points.
fn scaling_error(pot: &dyn FiberPotential, points: &[(Complex64, Complex64)], lambda: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(z, xi) in points {
        let expected = lambda * lambda * pot.potential(z, xi)?;
        let got = pot.potential(z, xi * lambda)?;
        if expected != 0.0 {
            worst = worst.max(((got - expected) / expected).abs());
        }
    }
    Ok(worst)
}

fn sample_points(spec: &SemiFlatSpec, seed: u64, count: usize) -> Vec<(Complex64, Complex64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = [rng.gen::<f64>() * spec.base_extent[0], rng.gen::<f64>() * spec.base_extent[1]];
            let z = spec.base_point(&coords);
            let xi = spec.fiber_point(z, rng.gen(), rng.gen());
            (z, xi)
        })
        .collect()
}

/// Form of `psi + quartic control` on the total grid: positive along the
/// fibers but not flat on them.
fn control_form(spec: &SemiFlatSpec) -> Result<HermitianField> {
    let grid = spec.total_grid()?;
    let mut values = Vec::with_capacity(grid.len() * 4);
    for i in 0..grid.len() {
        let x = grid.coords(i);
        let z = spec.base_point(&x);
        let xi = spec.fiber_point(z, x[2], x[3]);
        let a = SemiFlat(spec).form(z, xi)?;
        let b = QuarticControl(spec).form(z, xi)?;
        values.extend((0..4).map(|k| a[k] + b[k]));
    }
    HermitianField::new(grid, 2, values)
}

struct WpOutcome {
    residual: f64,
    control: f64,
    iterations: usize,
}

fn weil_petersson_identity(c: &SemiflatConfig) -> Result<WpOutcome> {
    let testbed = c.wp_testbed();
    let omega = testbed.omega_sigma()?;
    let f = testbed.density()?;
    let wp = testbed.weil_petersson()?.expect("modulus testbed carries a Weil-Petersson form");
    let sol = gke::solve_gke(&omega, &f, &c.wp_newton)?;
    let identity = |form: &HermitianField| -> Result<f64> {
        Ok(ricci_form(form)?.add(form)?.sub(&wp)?.sup_norm())
    };
    Ok(WpOutcome {
        residual: identity(&omega.add(&ddbar(&sol.u))?)?,
        control: identity(&omega)?,
        iterations: sol.iterations,
    })
}

enum SemiflatPart {
    Scaling(Vec<(f64, f64, f64)>),
    Rescaling(f64, f64, f64),
    Density(f64, f64),
    Wp(WpOutcome),
}

fn semiflat_identities(c: &SemiflatConfig, seed: u64, threads: usize) -> Result<Report> {
    let spec = c.semiflat_spec();
    let points = sample_points(&spec, seed, c.sample_points);
    let spec_ref = &spec;
    let points_ref = &points;

    let mut tasks: Vec<Task<Result<SemiflatPart>>> = Vec::new();
    tasks.push(Box::new(move || {
        let lambdas = c.lambdas.iter().copied().chain(c.times.iter().map(|t| (0.5 * t).exp()));
        let rows = lambdas
            .map(|l| {
                Ok((
                    l,
                    scaling_error(&SemiFlat(spec_ref), points_ref, l)?,
                    scaling_error(&QuarticControl(spec_ref), points_ref, l)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SemiflatPart::Scaling(rows))
    }));
    for &t in &c.times {
        tasks.push(Box::new(move || {
            Ok(SemiflatPart::Rescaling(
                t,
                semiflat::rescaling_check(t, spec_ref)?,
                semiflat::rescaling_residual(t, spec_ref, &QuarticControl(spec_ref))?,
            ))
        }));
    }
    tasks.push(Box::new(move || {
        let volume = volume_form(spec_ref, &c.base_potential)?;
        let f = density_f(spec_ref, &volume, &c.base_potential)?;
        let alpha = base_form_pullback(spec_ref, &c.base_potential)?;
        let denom = mixed_density(&alpha, &control_form(spec_ref)?, 1)?;
        let control = volume.zip_with(&denom, |o, d| o / d)?;
        Ok(SemiflatPart::Density(fiber_variation(&f), fiber_variation(&control)))
    }));
    tasks.push(Box::new(move || Ok(SemiflatPart::Wp(weil_petersson_identity(c)?))));

    let mut report = Report::new(crate::config::ExperimentName::SemiflatIdentities);
    let acc = &c.acceptance;
    let mut scaling = Vec::new();
    let mut rescaling = Vec::new();
    for part in run_tasks(threads, tasks) {
        match part? {
            SemiflatPart::Scaling(rows) => scaling = rows,
            SemiflatPart::Rescaling(t, r, ctrl) => rescaling.push((t, r, ctrl)),
            SemiflatPart::Density(var, ctrl) => {
                report.checks.push(Check::at_most("fiber_variation_of_f", var, acc.fiber_variation_tol));
                report.checks.push(Check::at_least("control_fiber_variation", ctrl, acc.control_min));
            }
            SemiflatPart::Wp(wp) => {
                report.checks.push(Check::at_most("weil_petersson_residual", wp.residual, acc.wp_tol));
                report.checks.push(Check::at_least("control_weil_petersson_residual", wp.control, acc.control_min));
                report.note("weil_petersson_newton_iterations", wp.iterations);
            }
        }
    }

    let n_plain = c.lambdas.len();
    for (i, &(l, err, ctrl)) in scaling.iter().enumerate() {
        if i < n_plain {
            report.rows.push(vec![f64::NAN, l, err, ctrl, f64::NAN, f64::NAN]);
        } else {
            let (t, r, rc) = rescaling[i - n_plain];
            report.rows.push(vec![t, l, err, ctrl, r, rc]);
        }
    }
    let nontrivial = |l: f64| (l.abs() - 1.0).abs() > 1e-3;
    report.checks.push(Check::at_most(
        "scaling_error",
        max_of(scaling.iter().map(|s| s.1)),
        acc.identity_tol,
    ));
    report.checks.push(Check::at_least(
        "control_scaling_error",
        min_of(scaling.iter().filter(|s| nontrivial(s.0)).map(|s| s.2)),
        acc.control_min,
    ));
    report.checks.push(Check::at_most(
        "rescaling_residual",
        max_of(rescaling.iter().map(|s| s.1)),
        acc.identity_tol,
    ));
    report.checks.push(Check::at_least(
        "control_rescaling_residual",
        min_of(rescaling.iter().filter(|s| s.0 > 1e-3).map(|s| s.2)),
        acc.control_min,
    ));
    report.plot("rescaling_residual", rescaling.iter().map(|s| (s.0, s.1)).collect());
    report.plot("control_rescaling_residual", rescaling.iter().map(|s| (s.0, s.2)).collect());
    Ok(report)
}

/// `(t, measured, analytic)`; the analytic value is NaN where none exists.
type CurvatureSample = (f64, f64, f64);

fn curvature_bound(c: &CurvatureConfig, threads: usize) -> Result<Report> {
    let run_cfg = RunConfig {
        sample_dt: c.sample_dt,
        step: collapse_core::integrate::StepConfig {
            tol: c.tol,
            ..Default::default()
        },
        ..RunConfig::default()
    };
    let fiber_spec: FiberFlowSpec = c.fiber_spec();
    let (run_cfg_ref, fiber_ref) = (&run_cfg, &fiber_spec);
    let tasks: Vec<Task<Result<Vec<CurvatureSample>>>> = vec![
        Box::new(move || {
            let run = krf::run_product(&c.product, c.horizon, run_cfg_ref)?;
            Ok(run
                .samples
                .iter()
                .zip(&run.diagnostics)
                .map(|(s, d)| (s.t, d.curvature, product_curvature_exact(&c.product, s.a_exact)))
                .collect())
        }),
        Box::new(move || {
            let run = krf::run_fiber_flow(fiber_ref, run_cfg_ref)?;
            Ok(run.diagnostics.iter().map(|d| (d.t, d.curvature, f64::NAN)).collect())
        }),
    ];
    let mut results = run_tasks(threads, tasks).into_iter();
    let product = results.next().expect("two tasks")?;
    let fiber = results.next().expect("two tasks")?;

    let mut report = Report::new(crate::config::ExperimentName::CurvatureBound);
    for (p, f) in product.iter().zip(&fiber) {
        report.rows.push(vec![p.0, p.1, p.2, f.1]);
    }
    let acc = &c.acceptance;
    let product_sup = max_of(product.iter().map(|p| p.1));
    let fiber_sup = max_of(fiber.iter().map(|f| f.1));
    report.checks.push(Check::at_most("product_sup_curvature", product_sup, acc.curvature_max));
    report.checks.push(Check::at_most("fiber_sup_curvature", fiber_sup, acc.curvature_max));
    report.checks.push(Check::at_most(
        "product_curvature_relative_error",
        max_of(product.iter().map(|p| (p.1 - p.2).abs() / p.2)),
        acc.rel_tol,
    ));
    report.plot("product_curvature", product.iter().map(|p| (p.0, p.1)).collect());
    report.plot("fiber_curvature", fiber.iter().map(|f| (f.0, f.1)).collect());
    Ok(report)
}
