//! Acceptance run: one PASS/FAIL line per criterion. Slopes, spreads and
//! bounds are recomputed here from `results.csv`; the runner's own verdicts
//! are not consulted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use oscint_core::geometry::{measure_weight, surface_height, SurfaceSpec};
use oscint_core::kernels::{
    cutoff_eval, kernel_eval, phi_annulus, CutoffSpec, KernelSpec, TensorBump,
};
use oscint_core::normlab::opnorm_power;
use oscint_core::operators::{
    ApplyMethod, DiscretizedOperator, Geometry, Grid, LinearOperator, Localization, OperatorSpec,
    ProductCutoff,
};
use oscint_core::phase::{phase_eval, PhaseSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone)]
struct Row {
    quantity: String,
    lambda: Option<f64>,
    value: f64,
    iterations: usize,
}

struct Run {
    dir: PathBuf,
    code: Option<i32>,
    stderr: String,
    rows: Vec<Row>,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn scratch() -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(experiment: &str, config: &str, threads: usize, tag: &str) -> Run {
    let dir = scratch().join(format!("{config}-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    let out = Command::new(env!("CARGO_BIN_EXE_oscint"))
        .arg(experiment)
        .arg("--config")
        .arg(configs_dir().join(format!("{config}.json")))
        .arg("--out")
        .arg(&dir)
        .env("OSCINT_THREADS", threads.to_string())
        .output()
        .expect("spawn oscint");
    let rows = read_rows(&dir.join("results.csv"));
    Run {
        dir,
        code: out.status.code(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        rows,
    }
}

fn read_rows(path: &Path) -> Vec<Row> {
    let Ok(mut rd) = csv::Reader::from_path(path) else {
        return Vec::new();
    };
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            Row {
                quantity: r[1].to_string(),
                lambda: if r[2].is_empty() {
                    None
                } else {
                    Some(r[2].parse().unwrap())
                },
                value: r[3].parse().unwrap(),
                iterations: r[5].parse().unwrap(),
            }
        })
        .collect()
}

impl Run {
    fn ok(&self) -> Result<(), Verdict> {
        if self.code == Some(0) {
            Ok(())
        } else {
            Err(verdict(
                false,
                format!("runner exited {:?}: {}", self.code, self.stderr.trim()),
            ))
        }
    }

    fn series(&self, quantity: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity)
            .map(|r| (r.lambda.expect("lambda column"), r.value))
            .collect()
    }

    fn values_with_prefix(&self, prefix: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.quantity.starts_with(prefix))
            .map(|r| r.value)
            .collect()
    }
}

/// Least-squares slope of `log value` against `log lambda`.
fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn lambdas(points: &[(f64, f64)]) -> Vec<f64> {
    points.iter().map(|p| p.0).collect()
}

fn max_over_min(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn slope_criterion(experiment: &str, config: &str, grid: &[f64], target: f64, tol: f64) -> Verdict {
    let r = run(experiment, config, 1, "t1");
    if let Err(v) = r.ok() {
        return v;
    }
    let pts = r.series("opnorm");
    if lambdas(&pts) != grid {
        return verdict(
            false,
            format!("lambda grid {:?} differs from {grid:?}", lambdas(&pts)),
        );
    }
    let s = loglog_slope(&pts);
    verdict(
        (s - target).abs() <= tol,
        format!("slope {s:.4}, want {target} +- {tol}"),
    )
}

// Criterion 1.

fn structural() -> Verdict {
    let r = run("selfcheck", "selfcheck", 1, "t1");
    let summary: serde_json::Value = match std::fs::read_to_string(r.dir.join("summary.json")) {
        Ok(s) => serde_json::from_str(&s).unwrap(),
        Err(e) => return verdict(false, format!("no summary: {e}; {}", r.stderr.trim())),
    };
    let bounds = [
        ("sylvester_defect", 1e-12),
        ("dyadic_reconstruction_error", 1e-10),
        ("partition_of_unity_defect", 1e-10),
        ("adjoint_defect", 1e-12),
        ("split_defect", 1e-12),
    ];
    let checks = summary["checks"].as_array().unwrap();
    let mut parts = Vec::new();
    let mut pass = r.code == Some(0);
    for (name, bound) in bounds {
        let Some(c) = checks.iter().find(|c| c["name"] == name) else {
            return verdict(false, format!("check {name} missing"));
        };
        let v = c["value"].as_f64().unwrap();
        pass &= v <= bound;
        parts.push(format!("{name} {v:.1e}"));
    }
    let samples = |q: &str| {
        r.rows
            .iter()
            .find(|row| row.quantity == q)
            .map_or(0, |row| row.iterations)
    };
    let (syl, dya) = (
        samples("sylvester_defect"),
        samples("dyadic_reconstruction_error"),
    );
    let adjoint_configs = r.values_with_prefix("adjoint_defect[").len();
    pass &= adjoint_configs >= 8 && syl >= 1000 && dya >= 1000;
    parts.push(format!(
        "{syl} + {dya} samples, {adjoint_configs} adjoint configs"
    ));
    verdict(pass, parts.join(", "))
}

// Criterion 2: independent entry-by-entry assembly and a dense eigensolver.

fn dense(spec: &OperatorSpec) -> DMatrix<Complex64> {
    let s = &spec.source;
    let t = &spec.target;
    let k = s.dim();
    let mut m = DMatrix::zeros(t.len(), s.len());
    for (i, x) in t.nodes().enumerate() {
        for (j, y) in s.nodes().enumerate() {
            let (z, mu) = match &spec.geometry {
                Geometry::Surface { surface, x_last } => {
                    let mut z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                    z.push(x_last - surface_height(surface, &y));
                    (z, measure_weight(surface, &y))
                }
                Geometry::Flat { restricted } => {
                    let mut z: Vec<f64> = (0..k).map(|a| x[a] - y[a]).collect();
                    z.push(if *restricted { 0.0 } else { x[k] });
                    (z, 1.0)
                }
            };
            let d = (0..k).map(|a| (x[a] - y[a]).powi(2)).sum::<f64>().sqrt();
            let loc = match spec.localization {
                Localization::Full => 1.0,
                Localization::Near { beta } => 1.0 - phi_annulus(spec.lambda.powf(beta) * d),
                Localization::Far { beta } => phi_annulus(spec.lambda.powf(beta) * d),
            };
            let ph = match spec.phase {
                PhaseSpec::Linear => phase_eval(&spec.phase, &x[..k], &y).unwrap(),
                PhaseSpec::FractionalDistance { .. } => {
                    let mut tail = y.clone();
                    tail.push(0.0);
                    let xf: Vec<f64> = (0..=k).map(|a| if a < k { x[a] } else { z[k] }).collect();
                    phase_eval(&spec.phase, &xf, &tail).unwrap()
                }
            };
            let amp = s.weight()
                * cutoff_eval(&spec.cutoff0.target, &x)
                * cutoff_eval(&spec.cutoff0.source, &y)
                * mu
                * kernel_eval(&spec.kernel, &z).unwrap()
                * loc;
            m[(i, j)] = Complex64::from_polar(amp, spec.lambda * ph);
        }
    }
    m
}

fn bump(dim: usize, plateau: f64, transition: f64) -> CutoffSpec {
    CutoffSpec::TensorBump(TensorBump::centered(dim, plateau, transition).unwrap())
}

fn oracle_configs() -> Vec<OperatorSpec> {
    let surf = |surface: SurfaceSpec, x_last: f64, loc: Localization| OperatorSpec {
        source: Grid::cube(2, -0.5, 0.5, 14, false).unwrap(),
        target: Grid::cube(2, -0.5, 0.5, 14, true).unwrap(),
        kernel: KernelSpec::surface_setting(2, 1.0).unwrap(),
        phase: PhaseSpec::Linear,
        cutoff0: ProductCutoff {
            target: bump(2, 0.2, 0.25),
            source: bump(2, 0.2, 0.25),
        },
        geometry: Geometry::Surface { surface, x_last },
        localization: loc,
        lambda: 10.0,
    };
    let flat = |restricted: bool, phase: PhaseSpec, lambda: f64, n: usize| {
        let tdim = if restricted { 1 } else { 2 };
        OperatorSpec {
            source: Grid::cube(1, -0.8, 0.8, n, false).unwrap(),
            target: Grid::cube(tdim, -0.8, 0.8, n, true).unwrap(),
            kernel: KernelSpec::flat_setting(2, 0.5).unwrap(),
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
    let sine = SurfaceSpec::sine_product(0.3, vec![2.0, 1.0]).unwrap();
    vec![
        surf(sine.clone(), 0.3, Localization::Full),
        surf(sine, 1.0, Localization::Near { beta: 0.5 }),
        surf(
            SurfaceSpec::zero(2).unwrap(),
            0.0,
            Localization::Far { beta: 1.0 },
        ),
        flat(true, PhaseSpec::Linear, 24.0, 32),
        flat(false, PhaseSpec::Linear, 24.0, 32),
        flat(false, PhaseSpec::fractional(2.0).unwrap(), 8.0, 32),
    ]
}

fn oracle() -> Verdict {
    let mut worst_apply = 0.0_f64;
    let mut worst_norm = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut fft_ops = 0;
    for spec in oracle_configs() {
        let a = dense(&spec);
        let mut ops =
            vec![DiscretizedOperator::with_method(spec.clone(), ApplyMethod::Direct).unwrap()];
        if let Ok(op) = DiscretizedOperator::with_method(spec, ApplyMethod::Fft) {
            ops.push(op);
            fft_ops += 1;
        }
        for op in ops {
            let f: Vec<Complex64> = (0..op.source_len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let got = op.forward(&f).unwrap();
            let want = &a * DVector::from_vec(f);
            let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let err = got
                .iter()
                .zip(want.iter())
                .map(|(g, w)| (g - w).norm())
                .fold(0.0, f64::max);
            worst_apply = worst_apply.max(err / scale);

            let b = &a * Complex64::new((op.target_weight() / op.source_weight()).sqrt(), 0.0);
            let top = (b.adjoint() * &b)
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(0.0, f64::max)
                .sqrt();
            let est = opnorm_power(&op, 1e-8, 3000, 5).unwrap();
            worst_norm = worst_norm.max((est.value - top).abs() / top);
        }
    }
    verdict(
        worst_apply <= 1e-13 && worst_norm <= 1e-3,
        format!(
            "apply rel {worst_apply:.1e} (<= 1e-13), opnorm rel {worst_norm:.1e} (<= 1e-3), {fft_ops} configs also via FFT"
        ),
    )
}

// Criterion 6.

fn witnesses() -> Verdict {
    let cases = [
        ("witness_flat_restricted", 0.25),
        ("witness_flat_full", 0.5),
        ("witness_nonlinear", 0.375),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (config, rate) in cases {
        let r = run("witness", config, 1, "t1");
        if let Err(v) = r.ok() {
            return v;
        }
        // The calibrated c0 is the first one recorded.
        let Some(first) = r
            .rows
            .iter()
            .find(|row| row.quantity.starts_with("witness_ratio["))
        else {
            return verdict(false, format!("{config}: no witness rows"));
        };
        let ratio = r.series(&first.quantity);
        let compensated: Vec<f64> = ratio.iter().map(|&(l, v)| v * l.powf(rate)).collect();
        let sp = max_over_min(&compensated);
        pass &= sp <= 2.0 && ratio.len() >= 4;
        parts.push(format!("{config} {sp:.3}"));
    }
    verdict(
        pass,
        format!("compensated max/min: {} (<= 2)", parts.join(", ")),
    )
}

// Criterion 7.

fn near_part() -> Verdict {
    let cases = [
        ("sweep_near_half", 0.5, [16.0, 32.0, 64.0, 128.0]),
        ("sweep_near_one", 1.0, [8.0, 16.0, 32.0, 64.0]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (config, beta, grid) in cases {
        let r = run("sweep", config, 1, "t1");
        if let Err(v) = r.ok() {
            return v;
        }
        let pts = r.series("opnorm");
        let s = loglog_slope(&pts);
        pass &= lambdas(&pts) == grid && (s + beta).abs() <= 0.15;
        parts.push(format!(
            "beta={beta}: slope {s:.4} (want {} +- 0.15)",
            -beta
        ));
    }
    verdict(pass, parts.join(", "))
}

// Criterion 8.

fn maximal() -> Verdict {
    let r = run("maximal", "maximal", 1, "t1");
    if let Err(v) = r.ok() {
        return v;
    }
    let lower = r.series("maximal_lower");
    if lambdas(&lower) != [16.0, 32.0, 64.0] {
        return verdict(false, format!("lambda grid {:?}", lambdas(&lower)));
    }
    let members = r.values_with_prefix("member_opnorm[").len();
    let compensated: Vec<(f64, f64)> = lower.iter().map(|&(l, v)| (l, v * l.powf(0.25))).collect();
    let sp = max_over_min(&compensated.iter().map(|p| p.1).collect::<Vec<_>>());
    let trend = loglog_slope(&compensated);
    verdict(
        sp <= 3.0 && trend <= 0.1 && members == 25 * 3,
        format!(
            "compensated max/min {sp:.3} (<= 3), trend {trend:.4} (<= 0.1), {members} member norms"
        ),
    )
}

// Criterion 9.

fn helmholtz() -> Verdict {
    let r = run("helmholtz", "helmholtz", 1, "t1");
    if let Err(v) = r.ok() {
        return v;
    }
    let norms = r.series("l2_norm");
    let s = loglog_slope(&norms);
    let residuals = r.values_with_prefix("pde_residual[");
    let probes: std::collections::BTreeSet<&str> = r
        .rows
        .iter()
        .filter(|row| row.quantity.starts_with("pde_residual["))
        .map(|row| row.quantity.as_str())
        .collect();
    let worst_res = residuals.iter().cloned().fold(0.0, f64::max);
    let rot = r
        .values_with_prefix("rotation_defect[")
        .into_iter()
        .chain(r.values_with_prefix("tilt_defect["))
        .fold(0.0, f64::max);
    let pass = lambdas(&norms) == [8.0, 16.0, 32.0, 64.0]
        && s <= -0.9
        && probes.len() >= 50
        && worst_res <= 1e-2
        && rot <= 1e-10;
    verdict(
        pass,
        format!(
            "slope {s:.4} (<= -0.9), max residual {worst_res:.2e} over {} probes (<= 1e-2), rotation {rot:.1e} (<= 1e-10)",
            probes.len()
        ),
    )
}

// Criterion 10.

fn determinism() -> Verdict {
    let cases = [
        ("selfcheck", "selfcheck"),
        ("sweep", "sweep_flat_restricted"),
        ("witness", "witness_nonlinear"),
        ("sweep", "sweep_near_one"),
        ("helmholtz", "helmholtz"),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (experiment, config) in cases {
        let one = run(experiment, config, 1, "d1");
        let four = run(experiment, config, 4, "d4");
        let a = std::fs::read(one.dir.join("results.csv")).unwrap_or_default();
        let b = std::fs::read(four.dir.join("results.csv")).unwrap_or_default();
        let same = !a.is_empty() && a == b;
        pass &= same;
        parts.push(format!(
            "{config} {}",
            if same { "identical" } else { "DIFFERS" }
        ));
    }
    verdict(pass, parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: Vec<(usize, &str, fn() -> Verdict)> = vec![
        (1, "structural identities", structural),
        (2, "oracle equivalence", oracle),
        (3, "flat restricted rate", || {
            slope_criterion(
                "sweep",
                "sweep_flat_restricted",
                &[16.0, 32.0, 64.0, 128.0],
                -0.25,
                0.05,
            )
        }),
        (4, "flat full rate", || {
            slope_criterion(
                "sweep",
                "sweep_flat_full",
                &[16.0, 32.0, 64.0, 128.0],
                -0.5,
                0.07,
            )
        }),
        (5, "nonlinear phase rate", || {
            slope_criterion(
                "sweep",
                "sweep_nonlinear",
                &[16.0, 32.0, 64.0, 128.0],
                -0.375,
                0.05,
            )
        }),
        (6, "witness constant stability", witnesses),
        (7, "near-part rate", near_part),
        (8, "maximal operator consistency", maximal),
        (9, "helmholtz field", helmholtz),
        (10, "determinism", determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut results = BTreeMap::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {}: {name}: {} [{secs:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.insert(id, v.pass);
    }
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, &p)| !p)
        .map(|(&i, _)| i)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
