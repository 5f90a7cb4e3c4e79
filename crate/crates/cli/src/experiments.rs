//! The six experiment kinds. Each validates everything it can before the
//! first norm estimate, then records rows, fits and checks.

use num_complex::Complex64;
use oscint_core::geometry::SurfaceSpec;
use oscint_core::helmholtz::{
    l2_norm_on_box, relative_residual, residual_of, ObservationBox, PlaneQuadrature, PlaneSpec,
};
use oscint_core::kernels::{dyadic_reconstruct, partition_chi, CutoffSpec, KernelSpec, TensorBump};
use oscint_core::normlab::{
    decay_fit, opnorm_lower_random, power_iteration, predicted_exponent, witness_setup, Prediction,
    Regime, WitnessSetup, WitnessSpec,
};
use oscint_core::operators::{
    apply_adjoint, apply_forward, geometric_eps_grid, split_ab, ApplyMethod, DiscretizedOperator,
    Geometry, Grid, GridFunction, Localization, MaximalOperator, OperatorSpec, ProductCutoff,
};
use oscint_core::phase::{nondegeneracy_scan, sylvester_check, PhaseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, OperatorBlock, SelfcheckBlock};
use crate::output::{Check, Recorder};
use crate::RunError;

/// Turns a precondition failure into a config error naming its source.
fn pre<T>(what: &str, r: oscint_core::Result<T>) -> Result<T, RunError> {
    r.map_err(|e| RunError::config(format!("{what}: {e}")))
}

fn label(base: &str, tag: &str) -> String {
    if tag.is_empty() {
        base.to_string()
    } else {
        format!("{base}[{tag}]")
    }
}

/// Per-task seed, so estimates at different `lambda` use independent streams.
fn task_seed(seed: u64, task: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(task as u64)
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

pub fn run(cfg: &ExperimentConfig) -> Result<Recorder, RunError> {
    match cfg.experiment {
        ExperimentKind::Norm => norm_or_sweep(cfg, false),
        ExperimentKind::Sweep => norm_or_sweep(cfg, true),
        ExperimentKind::Witness => witness(cfg),
        ExperimentKind::Maximal => maximal(cfg),
        ExperimentKind::Helmholtz => helmholtz(cfg),
        ExperimentKind::Selfcheck => selfcheck(cfg),
    }
}

/// Specs for every `(geometry label, lambda)`, each checked by building it.
fn planned_specs(
    block: &OperatorBlock,
    lambdas: &[f64],
) -> Result<Vec<(String, Vec<OperatorSpec>)>, RunError> {
    let mut out = Vec::new();
    for (tag, geometry) in block.geometries()? {
        let mut specs = Vec::new();
        for &l in lambdas {
            let spec = block.spec_at(&geometry, l)?;
            pre(
                &format!("operator at lambda = {l}"),
                DiscretizedOperator::new(spec.clone()),
            )?;
            specs.push(spec);
        }
        out.push((tag, specs));
    }
    Ok(out)
}

fn prediction_of(cfg: &ExperimentConfig) -> Result<Option<Prediction>, RunError> {
    match &cfg.prediction {
        Some(p) => Ok(Some(pre(
            "prediction",
            predicted_exponent(p.regime, p.params()),
        )?)),
        None => Ok(None),
    }
}

fn norm_or_sweep(cfg: &ExperimentConfig, fit: bool) -> Result<Recorder, RunError> {
    let block = cfg.operator()?;
    let lambdas = cfg.lambdas()?;
    if fit && lambdas.len() < 3 {
        return Err(RunError::config(format!(
            "a sweep needs at least 3 lambda values for the decay fit, got {}",
            lambdas.len()
        )));
    }
    let prediction = prediction_of(cfg)?;
    if fit && prediction.is_none() {
        cfg.prediction()?;
    }
    let plan = planned_specs(block, &lambdas)?;
    let tol = &cfg.tolerances;
    let mut rec = Recorder::new(&cfg.id());
    let mut task = 0;
    for (tag, specs) in plan {
        let mut points = Vec::new();
        for spec in specs {
            let op = DiscretizedOperator::new(spec)?;
            let (est, _) =
                power_iteration(&op, tol.power_tol, tol.max_iter, task_seed(cfg.seed, task))?;
            task += 1;
            rec.push_estimate(label("opnorm", &tag), &est);
            points.push((est.lambda, est.value));
        }
        if fit {
            let f = decay_fit(&points)?;
            let p = prediction.expect("checked above");
            let target = cfg.prediction()?.target_slope.unwrap_or(p.exponent);
            rec.push_fit(
                label("opnorm", &tag),
                &f,
                Some((p.exponent, p.log_factor)),
                Some((target, tol.slope)),
            );
        }
    }
    Ok(rec)
}

fn witness(cfg: &ExperimentConfig) -> Result<Recorder, RunError> {
    let wb = cfg
        .witness
        .as_ref()
        .ok_or_else(|| RunError::config("witness needs a witness block"))?;
    let lambdas = cfg.lambdas()?;
    let prediction =
        prediction_of(cfg)?.ok_or_else(|| RunError::config("witness needs a prediction block"))?;
    let exponent = cfg
        .prediction()?
        .target_slope
        .unwrap_or(prediction.exponent);
    let beta = wb.beta();
    let mut plan: Vec<(f64, Vec<WitnessSetup>)> = Vec::new();
    for c0 in wb.c0_values() {
        let mut setups = Vec::new();
        for &l in &lambdas {
            let w = WitnessSpec {
                x0_prime: wb.x0_prime.clone(),
                c0,
                beta,
                separation_factor: wb.separation_factor,
                lambda: l,
            };
            let what = format!("witness at c0 = {c0}, lambda = {l}");
            setups.push(pre(
                &what,
                witness_setup(&w, wb.kind, &wb.kernel, wb.phase, wb.cells_per_radius),
            )?);
        }
        plan.push((c0, setups));
    }
    let mut rec = Recorder::new(&cfg.id());
    for (i, (c0, setups)) in plan.iter().enumerate() {
        let tag = format!("c0={c0}");
        let mut points = Vec::new();
        let mut compensated = Vec::new();
        for (s, &l) in setups.iter().zip(&lambdas) {
            let r = s.ratio()?;
            rec.push(label("witness_ratio", &tag), Some(l), r, "witness", 1, 0.0);
            let c = r * l.powf(exponent.abs());
            rec.push(
                label("compensated_ratio", &tag),
                Some(l),
                c,
                "witness",
                1,
                0.0,
            );
            points.push((l, r));
            compensated.push(c);
        }
        let calibrated = i == 0;
        if points.len() >= 3 {
            let f = decay_fit(&points)?;
            let target = calibrated.then_some((exponent, cfg.tolerances.slope));
            rec.push_fit(
                label("witness_ratio", &tag),
                &f,
                Some((prediction.exponent, prediction.log_factor)),
                target,
            );
        }
        let sp = spread(&compensated);
        if calibrated {
            rec.checks.push(Check::at_most(
                label("compensated_spread", &tag),
                sp,
                wb.max_spread,
            ));
        } else {
            rec.push(
                label("compensated_spread", &tag),
                None,
                sp,
                "witness",
                compensated.len(),
                0.0,
            );
        }
    }
    Ok(rec)
}

fn maximal(cfg: &ExperimentConfig) -> Result<Recorder, RunError> {
    let block = cfg.operator()?;
    let mb = cfg
        .maximal
        .as_ref()
        .ok_or_else(|| RunError::config("maximal needs a maximal block"))?;
    let lambdas = cfg.lambdas()?;
    if !matches!(block.geometry, Geometry::Surface { .. }) || block.x_last_values.is_some() {
        return Err(RunError::config(
            "maximal needs a surface geometry with a single x_last",
        ));
    }
    let prediction =
        prediction_of(cfg)?.ok_or_else(|| RunError::config("maximal needs a prediction block"))?;
    let exponent = cfg
        .prediction()?
        .target_slope
        .unwrap_or(prediction.exponent);
    let eps = geometric_eps_grid(mb.eps_levels);
    let fine = mb.sensitivity_levels.map(geometric_eps_grid);
    let (_, specs) = planned_specs(block, &lambdas)?.remove(0);
    for (spec, l) in specs.iter().zip(&lambdas) {
        let op = DiscretizedOperator::new(spec.clone())?;
        pre(
            &format!("maximal operator at lambda = {l}"),
            MaximalOperator::new(&op, mb.gamma_osc, &eps),
        )?;
    }
    if mb.trials == 0 {
        return Err(RunError::config("maximal.trials must be at least 1"));
    }
    let tol = &cfg.tolerances;
    let mut rec = Recorder::new(&cfg.id());
    let mut lower = Vec::new();
    let mut compensated = Vec::new();
    for (t, (spec, &l)) in specs.into_iter().zip(&lambdas).enumerate() {
        let op = DiscretizedOperator::new(spec)?;
        let max_op = MaximalOperator::new(&op, mb.gamma_osc, &eps)?;
        let seed = task_seed(cfg.seed, t);
        let mut candidates = Vec::new();
        for (member, e) in max_op.members().iter().zip(&eps) {
            let (est, v) = power_iteration(member, tol.power_tol, tol.max_iter, seed)?;
            rec.push(
                format!("member_opnorm[eps={e}]"),
                Some(l),
                est.value,
                est.method.as_str(),
                est.iterations,
                est.residual,
            );
            candidates.push(GridFunction::new(member.source_grid().clone(), v)?);
        }
        let (est, _) = opnorm_lower_random(&max_op, mb.trials, seed, &candidates)?;
        rec.push_estimate("maximal_lower", &est);
        let c = est.value * l.powf(exponent.abs());
        rec.push(
            "compensated_lower",
            Some(l),
            c,
            est.method.as_str(),
            est.iterations,
            0.0,
        );
        lower.push((l, est.value));
        compensated.push((l, c));
        if let Some(fine) = &fine {
            let fine_op = MaximalOperator::new(&op, mb.gamma_osc, fine)?;
            let (e2, _) = opnorm_lower_random(&fine_op, mb.trials, seed, &candidates)?;
            rec.push(
                format!("maximal_lower[K={}]", fine.len() - 1),
                Some(l),
                e2.value,
                e2.method.as_str(),
                e2.iterations,
                0.0,
            );
            rec.push(
                format!("sensitivity_ratio[K={}]", fine.len() - 1),
                Some(l),
                e2.value / est.value,
                "ratio",
                0,
                0.0,
            );
        }
    }
    let sp = spread(&compensated.iter().map(|p| p.1).collect::<Vec<_>>());
    rec.checks
        .push(Check::at_most("compensated_spread", sp, mb.max_spread));
    if lower.len() >= 3 {
        let f = decay_fit(&lower)?;
        rec.push_fit(
            "maximal_lower",
            &f,
            Some((prediction.exponent, prediction.log_factor)),
            None,
        );
        let fc = decay_fit(&compensated)?;
        rec.push_fit("compensated_lower", &fc, None, None);
        rec.checks
            .push(Check::at_most("compensated_trend", fc.slope, mb.max_trend));
    }
    Ok(rec)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|c| c / n);
        }
    }
}

fn helmholtz(cfg: &ExperimentConfig) -> Result<Recorder, RunError> {
    let hb = cfg
        .helmholtz
        .as_ref()
        .ok_or_else(|| RunError::config("helmholtz needs a helmholtz block"))?;
    let lambdas = cfg.lambdas()?;
    let plane = pre(
        "helmholtz plane",
        PlaneSpec::new(hb.normal, hb.density.clone()),
    )?;
    let domain = pre(
        "helmholtz.domain",
        ObservationBox::new(hb.domain.lo, hb.domain.hi),
    )?;
    let near = match &hb.near_domain {
        Some(b) => Some(pre(
            "helmholtz.near_domain",
            ObservationBox::new(b.lo, b.hi),
        )?),
        None => None,
    };
    let dist = domain.distance_to_plane(&plane);
    if dist < 0.5 * (1.0 - 1e-12) {
        return Err(RunError::config(format!(
            "helmholtz.domain is {dist:.4} from the plane, need at least 0.5"
        )));
    }
    let grid = pre(
        "helmholtz.plane_box",
        Grid::new(
            hb.plane_box.lo.clone(),
            hb.plane_box.hi.clone(),
            hb.plane_points,
            false,
        ),
    )?;
    pre("helmholtz.domain grid", domain.grid(hb.box_points))?;
    for &l in &lambdas {
        pre(
            &format!("plane quadrature at lambda = {l}"),
            PlaneQuadrature::new(&plane, l, &grid),
        )?;
    }
    if !(hb.fd_factor > 0.0 && hb.fd_factor <= 0.05) {
        return Err(RunError::config(
            "helmholtz.fd_factor must lie in (0, 0.05]",
        ));
    }
    if lambdas.len() < 3 {
        return Err(RunError::config(
            "helmholtz needs at least 3 lambda values for the decay fit",
        ));
    }
    let prediction = pre(
        "prediction",
        predicted_exponent(
            Regime::HelmholtzField,
            oscint_core::normlab::ExponentParams::new(3, 0.0),
        ),
    )?;

    let mut rec = Recorder::new(&cfg.id());
    let mut points = Vec::new();
    let mut compensated = Vec::new();
    for &l in &lambdas {
        let v = l2_norm_on_box(&plane, &domain, l, &grid, hb.box_points)?;
        rec.push(
            "l2_norm",
            Some(l),
            v,
            "midpoint",
            hb.plane_points * hb.plane_points,
            0.0,
        );
        rec.push("compensated_l2_norm", Some(l), v * l, "midpoint", 0, 0.0);
        points.push((l, v));
        compensated.push((l, v * l));
    }
    let f = decay_fit(&points)?;
    rec.push_fit(
        "l2_norm",
        &f,
        Some((prediction.exponent, prediction.log_factor)),
        None,
    );
    rec.checks
        .push(Check::at_most("l2_slope", f.slope, hb.max_slope));
    let fc = decay_fit(&compensated)?;
    rec.push_fit("compensated_l2_norm", &fc, None, None);
    rec.checks
        .push(Check::at_most("compensated_trend", fc.slope, 0.1));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes: Vec<[f64; 3]> = (0..hb.probes)
        .map(|_| std::array::from_fn(|a| rng.random_range(domain.lo[a]..domain.hi[a])))
        .collect();
    let mut worst = 0.0_f64;
    for &l in &lambdas {
        let q = PlaneQuadrature::new(&plane, l, &grid)?;
        let h = hb.fd_factor / l;
        for (i, x) in probes.iter().enumerate() {
            let r = residual_of(|p| q.field(p), x, l, h)?;
            let rel = relative_residual(r, q.field(x)?, l);
            worst = worst.max(rel);
            rec.push(
                format!("pde_residual[probe={i}]"),
                Some(l),
                rel,
                "fd7",
                7,
                0.0,
            );
        }
    }
    rec.checks
        .push(Check::at_most("max_pde_residual", worst, hb.max_residual));

    // Reduced and embedded quadratures for random planes, then the configured
    // plane against its untilted copy.
    let l0 = lambdas[0];
    let mut rot = 0.0_f64;
    for i in 0..hb.rotation_samples {
        let nu = random_unit(&mut rng);
        let p = pre("rotation sample", PlaneSpec::new(nu, hb.density.clone()))?;
        let x: [f64; 3] = std::array::from_fn(|a| {
            nu[a] * rng.random_range(0.5..1.5) + rng.random_range(-0.3..0.3)
        });
        let q = PlaneQuadrature::new(&p, l0, &grid)?;
        let d = (q.field(&x)? - q.field_direct(&x)?).norm();
        rot = rot.max(d);
        rec.push(
            format!("rotation_defect[sample={i}]"),
            Some(l0),
            d,
            "reduced_vs_embedded",
            0,
            0.0,
        );
    }
    let flat = pre(
        "untilted plane",
        PlaneSpec::new([0.0, 0.0, 1.0], hb.density.clone()),
    )?;
    let qf = PlaneQuadrature::new(&flat, l0, &grid)?;
    let qt = PlaneQuadrature::new(&plane, l0, &grid)?;
    for (i, x) in probes.iter().take(5).enumerate() {
        let w = plane.frame().apply_transpose(*x);
        let d = (qt.field(x)? - qf.field(&w)?).norm();
        rot = rot.max(d);
        rec.push(
            format!("tilt_defect[probe={i}]"),
            Some(l0),
            d,
            "tilted_vs_untilted",
            0,
            0.0,
        );
    }
    rec.checks
        .push(Check::at_most("max_rotation_defect", rot, hb.rotation_tol));

    if let Some(nb) = near {
        for &l in &lambdas {
            let v = l2_norm_on_box(&plane, &nb, l, &grid, hb.box_points)?;
            rec.push("near_plane_l2_norm", Some(l), v, "midpoint", 0, 0.0);
        }
    }
    Ok(rec)
}

fn bump(dim: usize, plateau: f64, transition: f64) -> CutoffSpec {
    CutoffSpec::TensorBump(TensorBump::centered(dim, plateau, transition).expect("valid bump"))
}

/// Operators covering each geometry, phase and localization.
pub fn test_matrix() -> Vec<(&'static str, OperatorSpec)> {
    let sine = SurfaceSpec::sine_product(0.3, vec![2.0, 1.0]).expect("valid surface");
    let zero = SurfaceSpec::zero(2).expect("valid surface");
    let surf = |surface: SurfaceSpec, x_last: f64, localization: Localization| OperatorSpec {
        source: Grid::cube(2, -0.5, 0.5, 12, false).expect("grid"),
        target: Grid::cube(2, -0.5, 0.5, 12, true).expect("grid"),
        kernel: KernelSpec::surface_setting(2, 1.0).expect("kernel"),
        phase: PhaseSpec::Linear,
        cutoff0: ProductCutoff {
            target: bump(2, 0.2, 0.25),
            source: bump(2, 0.2, 0.25),
        },
        geometry: Geometry::Surface { surface, x_last },
        localization,
        lambda: 12.0,
    };
    let flat = |restricted: bool, phase: PhaseSpec, lambda: f64| {
        let tdim = if restricted { 1 } else { 2 };
        OperatorSpec {
            source: Grid::cube(1, -0.8, 0.8, 24, false).expect("grid"),
            target: Grid::cube(tdim, -0.8, 0.8, 24, true).expect("grid"),
            kernel: KernelSpec::flat_setting(2, 0.5).expect("kernel"),
            phase,
            cutoff0: ProductCutoff {
                target: bump(tdim, 0.4, 0.35),
                source: bump(1, 0.4, 0.35),
            },
            geometry: Geometry::Flat { restricted },
            localization: Localization::Full,
            lambda,
        }
    };
    vec![
        ("surface_zero", surf(zero.clone(), 0.0, Localization::Full)),
        (
            "surface_sine_x0.3",
            surf(sine.clone(), 0.3, Localization::Full),
        ),
        (
            "surface_sine_near",
            surf(sine.clone(), 1.0, Localization::Near { beta: 0.5 }),
        ),
        (
            "surface_zero_far",
            surf(zero, 0.0, Localization::Far { beta: 1.0 }),
        ),
        ("flat_restricted", flat(true, PhaseSpec::Linear, 20.0)),
        ("flat_full", flat(false, PhaseSpec::Linear, 20.0)),
        (
            "flat_distance_2",
            flat(false, PhaseSpec::FractionalDistance { gamma: 2.0 }, 6.0),
        ),
        (
            "flat_distance_1.5",
            flat(false, PhaseSpec::FractionalDistance { gamma: 1.5 }, 6.0),
        ),
    ]
}

fn random_fn(grid: &Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction::from_fn(grid, |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn selfcheck(cfg: &ExperimentConfig) -> Result<Recorder, RunError> {
    let sb = cfg.selfcheck.clone().unwrap_or_default();
    let SelfcheckBlock {
        sylvester_samples,
        dyadic_samples,
        partition_points,
        adjoint_pairs,
    } = sb;
    if sylvester_samples == 0 || dyadic_samples == 0 || partition_points < 2 || adjoint_pairs == 0 {
        return Err(RunError::config("selfcheck sample counts must be positive"));
    }
    let mut rec = Recorder::new(&cfg.id());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut worst = 0.0_f64;
    for _ in 0..sylvester_samples {
        let k = rng.random_range(1..=8);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(0.5..4.0);
        let (direct, rank_one) = sylvester_check(&a, gamma)?;
        worst = worst.max((direct - rank_one).abs() / rank_one.abs().max(1.0));
    }
    rec.push(
        "sylvester_defect",
        None,
        worst,
        "lu_vs_rank_one",
        sylvester_samples,
        0.0,
    );
    rec.checks
        .push(Check::at_most("sylvester_defect", worst, 1e-12));

    let mut worst = 0.0_f64;
    for _ in 0..dyadic_samples {
        let d = rng.random_range(2..=4);
        let p = rng.random_range(0.1..(d as f64 - 0.1));
        let kern = KernelSpec::power(d, p)?;
        let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let z: Vec<f64> = dir.iter().map(|v| v / len * r).collect();
        let want = kern.eval_unchecked(&z);
        let got = dyadic_reconstruct(&kern, &z)?;
        worst = worst.max((got - want).abs() / want.abs());
    }
    rec.push(
        "dyadic_reconstruction_error",
        None,
        worst,
        "dyadic_sum",
        dyadic_samples,
        0.0,
    );
    rec.checks
        .push(Check::at_most("dyadic_reconstruction_error", worst, 1e-10));

    let mut worst = 0.0_f64;
    for k in [0, 1] {
        let reach = 2i64 << k;
        for i in 0..partition_points {
            for j in 0..partition_points {
                let step = 4.0 / (partition_points - 1) as f64;
                let t = [-2.0 + i as f64 * step, -2.0 + j as f64 * step];
                let mut s = 0.0;
                for a in -(reach + 2)..=(reach + 2) {
                    for b in -(reach + 2)..=(reach + 2) {
                        s += partition_chi(k, &[a, b], &t);
                    }
                }
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    rec.push(
        "partition_of_unity_defect",
        None,
        worst,
        "grid_scan",
        2 * partition_points * partition_points,
        0.0,
    );
    rec.checks
        .push(Check::at_most("partition_of_unity_defect", worst, 1e-10));

    let mut worst_adj = 0.0_f64;
    let mut worst_split = 0.0_f64;
    let mut variants = Vec::new();
    for (name, spec) in test_matrix() {
        variants.push((
            name.to_string(),
            DiscretizedOperator::with_method(spec.clone(), ApplyMethod::Direct)?,
        ));
        if let Ok(op) = DiscretizedOperator::with_method(spec, ApplyMethod::Fft) {
            variants.push((format!("{name}/fft"), op));
        }
    }
    for (name, op) in variants {
        let mut d_max = 0.0_f64;
        for _ in 0..adjoint_pairs {
            let f = random_fn(op.source_grid(), &mut rng);
            let g = random_fn(op.target_grid(), &mut rng);
            let lhs = apply_forward(&op, &f)?.inner(&g)?;
            let rhs = f.inner(&apply_adjoint(&op, &g)?)?;
            d_max = d_max.max((lhs - rhs).norm() / (f.norm() * g.norm()));
        }
        rec.push(
            format!("adjoint_defect[{name}]"),
            Some(op.lambda()),
            d_max,
            "inner_products",
            adjoint_pairs,
            0.0,
        );
        worst_adj = worst_adj.max(d_max);
        if op.spec().localization == Localization::Full {
            let f = random_fn(op.source_grid(), &mut rng);
            let t = apply_forward(&op, &f)?;
            let (a, b) = split_ab(&op, 0.5, &f)?;
            let scale = t.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
            let d = t
                .values()
                .iter()
                .zip(a.values().iter().zip(b.values()))
                .map(|(t, (a, b))| (a + b - t).norm())
                .fold(0.0, f64::max)
                / scale;
            rec.push(
                format!("split_defect[{name}]"),
                Some(op.lambda()),
                d,
                "a_plus_b",
                1,
                0.0,
            );
            worst_split = worst_split.max(d);
        }
    }
    rec.checks
        .push(Check::at_most("adjoint_defect", worst_adj, 1e-12));
    rec.checks
        .push(Check::at_most("split_defect", worst_split, 1e-12));

    for (gamma, c1, dim) in [(2.0, 0.5, 2), (1.5, 0.5, 3), (1.0, 0.5, 2)] {
        let report = nondegeneracy_scan(gamma, c1, dim, 2000, cfg.seed)?;
        rec.push(
            format!("hessian_min_det[gamma={gamma},n={dim}]"),
            None,
            report.min_det,
            "scan",
            report.samples,
            0.0,
        );
        rec.checks.push(Check::at_least(
            format!("hessian_min_det[gamma={gamma},n={dim}]"),
            report.min_det,
            report.analytic_lower_bound,
        ));
    }

    let kern = KernelSpec::surface_setting(2, 1.0)?;
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        for alpha in [[1, 0, 0], [0, 0, 1], [2, 0, 0], [1, 1, 0], [0, 1, 1]] {
            worst = worst.max(oscint_core::kernels::a2_ratio(&kern, &z, &alpha)?);
        }
    }
    rec.push(
        "symbol_ratio_max[m=1,n=2]",
        None,
        worst,
        "finite_difference",
        1000,
        0.0,
    );
    Ok(rec)
}
