//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::process::ExitCode;
use std::time::Instant;

use expbound::experiments::output::csv_string;
use expbound::experiments::validate::{
    alpha_optimality, conservativeness, eigen_identity, matching_dominance, scale_invariance,
    tightness, transform_monotonicity, SuiteReport,
};
use expbound::experiments::{sweep, BoundCurve, ExperimentConfig, ThetaGrid, CUBIC_SETUPS};
use expbound::models::{ReferenceFamily, DEFAULT_RICIAN_ANGLE};
use expbound::oracle::{fim_closed_form, fim_quadrature, QuadratureSpec};
use expbound::{standard_transform_set, ModelSpec};

type Outcome = (bool, String);
type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

fn suite(report: SuiteReport) -> Outcome {
    let detail = format!(
        "{} checks, {} failed, worst margin {:.3e}",
        report.checks.len(),
        report.failures().count(),
        report.worst_margin()
    );
    if !report.passed() {
        eprint!("{report}");
    }
    (report.passed(), detail)
}

fn timed(limit_secs: f64, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = f();
    let secs = start.elapsed().as_secs_f64();
    (
        ok && secs < limit_secs,
        format!("{detail}; {secs:.1} s (limit {limit_secs} s)"),
    )
}

fn fail(err: expbound::Error) -> Outcome {
    (false, format!("error: {err}"))
}

/// Combined relative standard error of two neighbouring points.
fn pair_eps(curve: &BoundCurve, i: usize) -> f64 {
    let a = curve.points[i].rel_se().unwrap_or(0.0);
    let b = curve.points[i + 1].rel_se().unwrap_or(0.0);
    (a * a + b * b).sqrt()
}

fn curve_for(model: ModelSpec, grid: ThetaGrid) -> expbound::Result<BoundCurve> {
    let mut config = ExperimentConfig::new(model, standard_transform_set());
    config.grid = grid;
    config.seed = 2024;
    let curve = sweep(&config)?;
    curve.check()?;
    Ok(curve)
}

fn losses(curve: &BoundCurve) -> Option<Vec<f64>> {
    curve.points.iter().map(|p| p.loss_db).collect()
}

fn criterion_8() -> Outcome {
    let model = ModelSpec::saleh(2.1587, 1.1517).expect("model");
    let curve = match curve_for(model, ThetaGrid::new(0.1, 4.0, 40)) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let Some(loss) = losses(&curve) else {
        return (false, "missing loss values".into());
    };
    let at = |theta: f64| {
        curve
            .point_at(theta)
            .and_then(|p| p.loss_db)
            .unwrap_or(f64::NAN)
    };
    let (l02, l1, l4) = (at(0.2), at(1.0), at(4.0));
    let lo = loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ok = lo >= -10.0 && hi <= 0.0 && l1 < l02 && l1 < l4;
    (
        ok,
        format!("loss range [{lo:.3}, {hi:.3}] dB; loss(0.2)={l02:.3}, loss(1)={l1:.3}, loss(4)={l4:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let model = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).expect("model");
    let curve = match curve_for(model, ThetaGrid::new(0.1, 2.0, 39)) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let Some(loss) = losses(&curve) else {
        return (false, "missing loss values".into());
    };
    let lo = loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (first, last) = (loss[0], loss[loss.len() - 1]);
    let mut worst_drop: f64 = 0.0;
    let mut wiggle_ok = true;
    for i in 0..loss.len() - 1 {
        let allowed = -10.0 * (1.0 - 3.0 * pair_eps(&curve, i)).max(1e-300).log10();
        let drop = loss[i] - loss[i + 1];
        worst_drop = worst_drop.max(drop);
        wiggle_ok &= drop <= allowed;
    }
    let ok = lo >= -25.0 && hi <= 0.0 && first < -12.0 && last > -3.0 && wiggle_ok;
    (
        ok,
        format!(
            "loss range [{lo:.3}, {hi:.3}] dB; loss(0.1)={first:.3}, loss(2)={last:.3}; largest drop {worst_drop:.4} dB \
             (within 3 sigma: {wiggle_ok})"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut curves = Vec::new();
    for (a, b) in CUBIC_SETUPS {
        match curve_for(
            ModelSpec::cubic(a, b).expect("model"),
            ThetaGrid::new(0.1, 1.0, 19),
        ) {
            Ok(c) => curves.push(c),
            Err(e) => return fail(e),
        }
    }
    let mut details = Vec::new();
    let mut ok = true;
    for (curve, (a, b)) in curves.iter().zip(CUBIC_SETUPS) {
        let Some(nrmse): Option<Vec<f64>> = curve.points.iter().map(|p| p.nrmse).collect() else {
            return (false, format!("missing nrmse for a={a}, b={b}"));
        };
        let mut decreasing = true;
        for i in 0..nrmse.len() - 1 {
            decreasing &= nrmse[i + 1] <= nrmse[i] * (1.0 + 1.5 * pair_eps(curve, i));
        }
        ok &= decreasing;
        details.push(format!(
            "a={a},b={b}: {:.4}->{:.4}",
            nrmse[0],
            nrmse[nrmse.len() - 1]
        ));
    }
    let mut ordering = true;
    for i in 0..curves[0].points.len() {
        let v: Vec<f64> = curves
            .iter()
            .map(|c| c.points[i].nrmse.unwrap_or(f64::NAN))
            .collect();
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        ordering &=
            v[0] == max && v[3] == min && v[1] < v[0] && v[2] < v[0] && v[1] > v[3] && v[2] > v[3];
    }
    ok &= ordering;
    (
        ok,
        format!(
            "{}; ordering holds at every theta: {ordering}",
            details.join(", ")
        ),
    )
}

fn criterion_11() -> Outcome {
    let spec = QuadratureSpec::default();
    let families = [
        ReferenceFamily::GaussianMean { sigma2: 1.0 },
        ReferenceFamily::GaussianVariance,
        ReferenceFamily::ExponentialRate,
        ReferenceFamily::Poisson,
    ];
    let mut worst: f64 = 0.0;
    for family in families {
        let model = ModelSpec::reference(family).expect("model");
        for theta in [0.5, 1.0, 2.0] {
            let (Ok(q), Ok(c)) = (
                fim_quadrature(&model, theta, &spec),
                fim_closed_form(&model, theta),
            ) else {
                return (false, format!("oracle failed for {family:?} at {theta}"));
            };
            worst = worst.max((q / c - 1.0).abs());
        }
    }
    let rician = ModelSpec::rician(DEFAULT_RICIAN_ANGLE).expect("model");
    let far = match fim_quadrature(&rician, 10.0, &spec) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let ok = worst <= 1e-6 && (far - 1.0).abs() <= 0.05;
    (
        ok,
        format!("worst closed-form deviation {worst:.2e}; Rician F(10)={far:.6}"),
    )
}

fn criterion_12() -> Outcome {
    let model = ModelSpec::saleh(2.1587, 1.1517).expect("model");
    let mut config = ExperimentConfig::new(model, standard_transform_set());
    config.grid = ThetaGrid::new(0.1, 4.0, 8);
    config.n_samples = 200_000;
    config.seed = 99;
    let mut render = |threads: usize| -> expbound::Result<String> {
        config.threads = Some(threads);
        csv_string(&sweep(&config)?)
    };
    let runs = (|| Ok::<_, expbound::Error>([render(8)?, render(8)?, render(1)?]))();
    match runs {
        Ok([a, b, serial]) => {
            let repeat = a == b;
            let threads = a == serial;
            (
                repeat && threads,
                format!("repeat identical: {repeat}; 8 vs 1 threads identical: {threads}"),
            )
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let n = 1_000_000;
    let criteria: Vec<Criterion> = vec![
        (
            "tightness on exponential families",
            Box::new(move || timed(30.0, || tightness(n, 1).map_or_else(fail, suite))),
        ),
        (
            "conservativeness (Rician)",
            Box::new(move || conservativeness(n, &[1, 2, 3, 4, 5]).map_or_else(fail, suite)),
        ),
        (
            "eigen identity",
            Box::new(|| eigen_identity(50, 11).map_or_else(fail, suite)),
        ),
        (
            "matching dominance",
            Box::new(move || matching_dominance(n, 200, 12).map_or_else(fail, suite)),
        ),
        (
            "alpha optimality",
            Box::new(|| alpha_optimality(20, 100, 13).map_or_else(fail, suite)),
        ),
        (
            "scale invariance",
            Box::new(|| scale_invariance(20, 14).map_or_else(fail, suite)),
        ),
        (
            "transform-set monotonicity",
            Box::new(move || transform_monotonicity(n, 15).map_or_else(fail, suite)),
        ),
        (
            "Saleh loss curve shape",
            Box::new(|| timed(180.0, criterion_8)),
        ),
        ("Rician loss curve shape", Box::new(criterion_9)),
        ("cubic NRMSE curve shape", Box::new(criterion_10)),
        ("oracle self-consistency", Box::new(criterion_11)),
        ("determinism", Box::new(criterion_12)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {name}: {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
