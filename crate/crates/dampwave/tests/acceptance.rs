//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion ids (e.g. `A6 A7`) to run a subset.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use dampwave::commands::{self, Subcommand};
use dampwave::output::OutputDir;
use dampwave::{execute, Config};
use dampwave_core::flow::{
    ball_seeds, check_gcc, half_flow_at, integrate_full, integrate_half, minkowski_line, null_datum, reparam_match,
    verify_flow_scaling, ClassifyParams, FlowOptions, Verdict,
};
use dampwave_core::halfwave::{b_pm, p_symbol};
use dampwave_core::halton::{ball, unit_sphere, ScrambledHalton};
use dampwave_core::metric::{scale_metric, Metric};
use dampwave_core::ode::OdeOptions;
use dampwave_core::solver::{dissipation_residual, evolve, scheme_energy_monotone, Forcing, GridSpec, InitialData};
use dampwave_core::{Damping, FullPhasePoint, MetricModel, PhasePoint, Sign};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Config {
    Config::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}")).0
}

fn scratch() -> (tempfile::TempDir, OutputDir) {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = OutputDir::create(dir.path()).expect("output dir");
    (dir, out)
}

fn shell() -> MetricModel {
    MetricModel::trapped_shell(-0.75, 8.0, 2.0)
}

fn toy() -> MetricModel {
    MetricModel::crossterm_toy(0.3)
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn a1() -> Outcome {
    let m = MetricModel::minkowski();
    let grid: Vec<f64> = (0..=400).map(|i| 0.25 * i as f64).collect();
    let opts = OdeOptions::default();
    let mut worst: f64 = 0.0;
    for w0 in ball_seeds(10.0, 100, 101) {
        for sign in Sign::BOTH {
            // ẋ = ∓ξ/|ξ| on the two branches.
            let dir = if sign == Sign::Plus { 1.0 } else { -1.0 };
            let states = half_flow_at(&m, sign, &w0, &grid, &opts).map_err(|e| e.to_string())?;
            for (s, st) in grid.iter().zip(&states) {
                worst = worst.max(sub(&st.x, &minkowski_line(&w0, dir * s)));
                worst = worst.max(sub(&st.xi, &w0.xi));
            }
        }
    }
    verdict(worst <= 1e-8, format!("max deviation from straight lines {worst:.2e} (limit 1e-8)"))
}

fn a2() -> Outcome {
    let opts = FlowOptions::default();
    let mut half: f64 = 0.0;
    let mut full: f64 = 0.0;
    for (name, m) in [("trapped_shell", shell()), ("crossterm_toy", toy())] {
        for w0 in ball_seeds(12.0, 100, 202) {
            for sign in Sign::BOTH {
                let t = integrate_half(&m, sign, &w0, 100.0, &opts).map_err(|e| format!("{name}: {e}"))?;
                half = half.max(t.conserved_drift);
                let datum = null_datum(&m, &w0, sign);
                let t = integrate_full(&m, &datum, 100.0, &opts).map_err(|e| format!("{name}: {e}"))?;
                full = full.max(t.conserved_drift);
            }
        }
    }
    verdict(half <= 1e-8 && full <= 1e-8, format!("b± drift {half:.2e}, τ/p drift {full:.2e} (limit 1e-8)"))
}

fn a3() -> Outcome {
    const N: u64 = 100_000;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    let models = [("minkowski", MetricModel::minkowski()), ("trapped_shell", shell()), ("crossterm_toy", toy())];
    for (k, (_, m)) in models.iter().enumerate() {
        let seq = ScrambledHalton::new(7, 303, k as u64);
        let mut u = [0.0; 7];
        for i in 0..N {
            seq.point(i, &mut u);
            let x = ball(u[0], u[1], u[2], 24.0);
            let mag = 10f64.powf(-3.0 + 6.0 * u[5]);
            let dir = unit_sphere(u[3], u[4]);
            let xi = [mag * dir[0], mag * dir[1], mag * dir[2]];
            let pt = PhasePoint::new(x, xi);
            let (bp, bm) = (b_pm(m, &pt, Sign::Plus), b_pm(m, &pt, Sign::Minus));
            if !(bp > 0.0 && bm < 0.0) {
                violations += 1;
            }
            let tau = mag * (4.0 * u[6] - 2.0);
            let p = p_symbol(m, &FullPhasePoint { t: 0.0, tau, x, xi });
            let err = (p + (tau - bp) * (tau - bm)).abs() / (1.0 + p.abs());
            worst = worst.max(err);
            if err > 1e-10 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations over {N} samples x 3 metrics; worst factorization error {worst:.2e}"),
    )
}

fn a4() -> Outcome {
    let opts = OdeOptions::default();
    let mut worst: f64 = 0.0;
    for m in [shell(), toy()] {
        for w0 in ball_seeds(12.0, 20, 404) {
            for sign in Sign::BOTH {
                for lambda in [0.5, 10.0] {
                    let r = verify_flow_scaling(&m, &w0, lambda, sign, 50.0, &opts).map_err(|e| e.to_string())?;
                    worst = worst.max(r.max_dx).max(r.max_dxi);
                }
            }
        }
    }
    let model = shell().with_damping(Damping::Shell { radius: 9.0, half_width: 4.5, amplitude: 1.0 });
    let flow = FlowOptions::default();
    let base = ClassifyParams { r: 16.0, delta: 1.6, t_max: 500.0, a_threshold: 0.05 };
    let seeds = ball_seeds(16.0, 256, 405);
    let reference = check_gcc(&model, &seeds, &base, &flow);
    let mut compared = 0usize;
    let mut disagreements = 0usize;
    for gamma in [2.0, 10.0] {
        let scaled = scale_metric(model, gamma);
        let shrunk: Vec<PhasePoint> =
            seeds.iter().map(|p| PhasePoint::new([p.x[0] / gamma, p.x[1] / gamma, p.x[2] / gamma], p.xi)).collect();
        let prm = ClassifyParams { r: base.r / gamma, delta: base.delta / gamma, t_max: base.t_max / gamma, ..base };
        let rep = check_gcc(&scaled, &shrunk, &prm, &flow);
        for (a, b) in reference.rows.iter().zip(&rep.rows) {
            if a.class.verdict == Verdict::Undetermined || b.class.verdict == Verdict::Undetermined {
                continue;
            }
            compared += 1;
            if a.class.verdict != b.class.verdict {
                disagreements += 1;
            }
        }
    }
    verdict(
        worst <= 1e-7 && disagreements == 0 && compared > 0,
        format!("flow scaling deviation {worst:.2e} (limit 1e-7); GCC verdicts {disagreements} disagreements in {compared} rays"),
    )
}

fn a5() -> Outcome {
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    let models = [("minkowski", MetricModel::minkowski()), ("trapped_shell", shell()), ("crossterm_toy", toy())];
    for (name, m) in &models {
        for w0 in ball_seeds(12.0, 50, 505) {
            for branch in Sign::BOTH {
                let datum = null_datum(m, &w0, branch);
                let r = reparam_match(m, &datum, 50.0, &opts).map_err(|e| format!("{name}: {e}"))?;
                if r.branch != branch {
                    return Err(format!("{name}: datum on {} matched the other branch", branch.as_str()));
                }
                worst = worst.max(r.max_dx).max(r.max_dxi);
            }
        }
    }
    verdict(worst <= 1e-6, format!("full vs half flow deviation {worst:.2e} (limit 1e-6)"))
}

/// Minimizer of w(r)/r² near the shell, by golden-section search.
fn oracle_radius(amplitude: f64, center: f64, width: f64) -> f64 {
    let w = |r: f64| {
        1.0 + amplitude
            * ((-(r - center).powi(2) / width.powi(2)).exp() + (-(r + center).powi(2) / width.powi(2)).exp())
    };
    let f = |r: f64| w(r) / (r * r);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (center - width, center + width);
    while b - a > 1e-12 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn a6() -> Outcome {
    let cfg = load("default.toml");
    let (_dir, mut out) = scratch();
    let s = commands::rays(&cfg, &mut out).map_err(|e| e.to_string())?;
    let r_star = oracle_radius(-0.75, 8.0, 2.0);
    let located = s.stable_orbit.is_some_and(|r| (r - r_star).abs() <= 1e-6 * r_star);
    let ok = located
        && (s.radius - r_star).abs() <= 1e-6 * r_star
        && s.tangential.total > 0
        && s.tangential.trapped == s.tangential.total
        && s.tangential_within_tolerance == s.tangential.total
        && s.tolerance <= 0.1
        && s.radial.total > 0
        && s.radial.escaped == s.radial.total
        && s.permanence_failures == 0;
    verdict(
        ok,
        format!(
            "r_* {:.6} (oracle {r_star:.6}); tangential {}/{} trapped, max excursion {:.3}; radial {}/{} escaped; \
             {} permanence failures",
            s.radius,
            s.tangential.trapped,
            s.tangential.total,
            s.max_relative_excursion,
            s.radial.escaped,
            s.radial.total,
            s.permanence_failures
        ),
    )
}

fn a7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, want) in [("default.toml", 1.0), ("displaced.toml", 0.0)] {
        let cfg = load(name);
        let (_dir, mut out) = scratch();
        let s = commands::gcc(&cfg, &mut out).map_err(|e| format!("{name}: {e}"))?;
        ok &= s.seeds >= 4096 && s.trapped > 0 && s.trapped_fraction_hit == want;
        parts.push(format!("{name}: {}/{} trapped rays hit", s.trapped_hit, s.trapped));
    }
    verdict(ok, parts.join("; "))
}

fn a8() -> Outcome {
    let cfg = load("default.toml");
    let (_dir, mut out) = scratch();
    let s = commands::escape(&cfg, &mut out).map_err(|e| e.to_string())?;
    let Some(r) = s.report else {
        return Err(format!("no report: {}", s.error.unwrap_or_default()));
    };
    let ok = r.samples >= 100_000
        && r.c0 > 0.0
        && r.fraction_at_least_c0 >= 0.99
        && r.characteristic_samples > 0
        && r.min_characteristic >= r.c0
        && r.correction_valid_fraction == 1.0
        && r.non_finite == 0;
    verdict(
        ok,
        format!(
            "c0 {:.3e} at λ {} σ {} γ {} ε {:.3e}; {:.4} of {} samples above c0, {} characteristic (min {:.3e}); \
             correction valid on {:.4}",
            r.c0,
            r.lambda,
            r.sigma,
            r.gamma,
            r.epsilon,
            r.fraction_at_least_c0,
            r.samples,
            r.characteristic_samples,
            r.min_characteristic,
            r.correction_valid_fraction
        ),
    )
}

fn a9() -> Outcome {
    let ball = Damping::Ball { center: [0.0; 3], radius: 5.0, amplitude: 0.5 };
    let data = InitialData::Bump { center: [0.0; 3], radius: 3.0, amplitude: 1.0, power: 3 };
    let extent = 8.0;
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, m) in
        [("minkowski", MetricModel::minkowski()), ("damped minkowski", MetricModel::minkowski().with_damping(ball))]
    {
        let mut res = Vec::new();
        for n in [48usize, 96] {
            let h = 2.0 * extent / (n as f64 - 1.0);
            let grid = GridSpec::with_cfl(extent, n, 0.4, m.ellipticity_bounds().1, (extent / 4.0).max(4.0 * h), 2.0);
            let hist = evolve(&m, &grid, &data, &Forcing::None, 4.0, &[]).map_err(|e| e.to_string())?;
            let mono = scheme_energy_monotone(&hist, 1e-13);
            ok &= mono.violations == 0;
            res.push(dissipation_residual(&hist));
        }
        let ratio = res[0] / res[1];
        ok &= (3.0..=5.0).contains(&ratio);
        parts.push(format!("{name} residual ratio {ratio:.2}"));
    }
    // Monotonicity on the damped shell, where the sponge ledger matters most.
    let m = shell().with_damping(Damping::Shell { radius: 9.0, half_width: 4.5, amplitude: 1.0 });
    let grid = GridSpec::with_cfl(16.0, 48, 0.4, m.ellipticity_bounds().1, 4.0, 2.0);
    let data = InitialData::Bump { center: [8.0, 0.0, 0.0], radius: 2.0, amplitude: 1.0, power: 3 };
    let hist = evolve(&m, &grid, &data, &Forcing::None, 20.0, &[]).map_err(|e| e.to_string())?;
    let mono = scheme_energy_monotone(&hist, 1e-13);
    ok &= mono.violations == 0;
    parts.push(format!(
        "damped shell: {} energy increases, sponge loss {:.3e}, damping loss {:.3e}",
        mono.violations, mono.sponge_loss, mono.physical_loss
    ));
    verdict(ok, parts.join("; "))
}

fn a10() -> Outcome {
    let cfg = load("led.toml");
    if cfg.solver.n != 96 || cfg.solver.extent != 32.0 || cfg.led.t_list.last() != Some(&80.0) {
        return Err("led.toml no longer describes the n=96, L=32, T=80 comparison".into());
    }
    let (_dir, mut out) = scratch();
    let s = commands::led(&cfg, &mut out).map_err(|e| e.to_string())?;
    let ratio = |label: &str| s.cases.iter().find(|c| c.label == label).and_then(|c| c.ratio);
    let (Some(flat), Some(damped), Some(undamped)) =
        (ratio("minkowski"), ratio("damped_shell"), ratio("undamped_shell"))
    else {
        return Err("missing cases in led.toml".into());
    };
    let Some(sep) = &s.separation else {
        return Err("no separation in led.toml".into());
    };
    let ok = flat <= 1.05 && damped <= 1.05 && undamped >= 1.15 && sep.excess >= 0.30;
    verdict(
        ok,
        format!(
            "ρ(80)/ρ(40): minkowski {flat:.3}, damped shell {damped:.3}, undamped shell {undamped:.3}; \
             undamped exceeds damped by {:.0}%",
            100.0 * sep.excess
        ),
    )
}

fn a11() -> Outcome {
    let path = configs().join("quick.toml");
    let (cfg, bytes) = Config::load(&path).map_err(|e| e.to_string())?;
    let runs: Vec<tempfile::TempDir> = [Some(1), Some(1), Some(8)]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().expect("temp dir");
            execute(Subcommand::All, &cfg, &bytes, "quick.toml", dir.path(), threads).map(|_| dir)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let names = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .expect("read dir")
            .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
            .filter(|n| !n.starts_with("manifest"))
            .collect();
        v.sort();
        v
    };
    let files = names(runs[0].path());
    let mut differing = Vec::new();
    for other in &runs[1..] {
        if names(other.path()) != files {
            return Err("runs produced different file sets".into());
        }
        for f in &files {
            let a = std::fs::read(runs[0].path().join(f)).expect("read");
            let b = std::fs::read(other.path().join(f)).expect("read");
            if a != b {
                differing.push(f.clone());
            }
        }
    }
    verdict(
        differing.is_empty() && !files.is_empty(),
        if differing.is_empty() {
            format!("{} files identical across repeat and 1 vs 8 threads", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("A1", "flat-flow exactness", a1),
        ("A2", "conservation", a2),
        ("A3", "sign and factorization", a3),
        ("A4", "scaling identities", a4),
        ("A5", "factor correspondence", a5),
        ("A6", "trapping detection", a6),
        ("A7", "GCC audit", a7),
        ("A8", "escape positivity", a8),
        ("A9", "energy ledger", a9),
        ("A10", "empirical local energy decay", a10),
        ("A11", "determinism", a11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let clock = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = clock.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS {title}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {title}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
