use dampwave_core::escape::symbols::{fd_gradient, half_bracket};
use dampwave_core::escape::{
    build_symbols, tune, verify_escape_inequality, CoverSeed, EscapeOptions, PsiOptions, SampleCache, SampleSpec,
    SemiBounded, TuneGrid,
};
use dampwave_core::flow::{ball_seeds, check_gcc, tangential_seeds, ClassifyParams, FlowOptions};
use dampwave_core::halfwave::{b_pm, p_from_sample, phi_scale};
use dampwave_core::metric::{estimate_af, AfOptions, Metric, MetricModel};
use dampwave_core::{PhasePoint, Sign};

fn japanese_sq(x: &[f64; 3]) -> f64 {
    1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

fn small_options() -> EscapeOptions {
    EscapeOptions {
        bscale_samples: 2000,
        psi: PsiOptions { transit_samples: 64, ..PsiOptions::default() },
        ..EscapeOptions::default()
    }
}

#[test]
fn minkowski_escape_needs_no_cover() {
    let m = MetricModel::minkowski();
    let af = estimate_af(&m, &AfOptions { samples_per_annulus: 100, ..AfOptions::default() }).unwrap();
    let prm = ClassifyParams { r: 16.0, delta: 1.6, t_max: 100.0, a_threshold: 0.05 };
    let gcc = check_gcc(&m, &ball_seeds(16.0, 32, 3), &prm, &FlowOptions::default());
    assert!(gcc.vacuous);
    let symbols = build_symbols(&m, &gcc.rows, &af, &small_options()).unwrap();
    assert!(symbols.q1.iter().all(SemiBounded::is_absent));
    assert_eq!(symbols.cover_margin, [None, None]);

    let spec = SampleSpec { points: 300, ..SampleSpec::default() };
    let cache = SampleCache::build(&m, &symbols, &spec);
    let grid = TuneGrid {
        lambdas: vec![4.0],
        sigmas: vec![4.0],
        gammas: vec![16.0],
        epsilon_min: 1e-3,
        ..TuneGrid::default()
    };
    let (asm, outcome) = tune(&m, &symbols, &cache, &grid).map_err(|(e, _)| e).unwrap();
    let rep = &outcome.report;
    assert!(rep.passed && rep.c0 > 0.0);
    assert_eq!(rep.correction_valid_fraction, 1.0);

    // Cutoff support: below λ on both branches q and m vanish exactly.
    for w in ball_seeds(40.0, 50, 9) {
        let k = 0.25 * asm.lambda;
        let pt = PhasePoint::new(w.x, [k * w.xi[0], k * w.xi[1], k * w.xi[2]]);
        assert_eq!(asm.q(&m, 0.3 * k, &pt), 0.0);
        assert_eq!(asm.correction(&m, &pt), 0.0);
    }

    // The cached chain-rule evaluation agrees with differencing q directly.
    let check = verify_escape_inequality(&m, &asm, &cache, 0.0);
    assert_eq!(check.c0, rep.c0);
    for o in &check.worst {
        let pt = PhasePoint::new(o.x, o.xi);
        let p = p_from_sample(&m.sample(&pt.x), o.tau, &pt.xi);
        let k2 = o.xi.iter().map(|v| v * v).sum::<f64>();
        let slow = (asm.damped_bracket(&m, o.tau, &pt) + asm.correction(&m, &pt) * p) * japanese_sq(&o.x)
            / (o.tau * o.tau + k2);
        assert!((slow - o.value).abs() <= 1e-4 * (1.0 + o.value.abs()), "slow {slow} fast {}", o.value);
    }
}

fn shell() -> MetricModel {
    MetricModel::trapped_shell(-0.75, 8.0, 2.0)
}

/// One cover element around a trapped seed, with a fine quadrature step.
fn cover(m: &MetricModel, sign: Sign) -> SemiBounded {
    let r_star = m.geometry.circular_orbits().iter().find(|o| o.stable).unwrap().radius;
    let seed = phi_scale(m, &tangential_seeds(r_star, 1, 4)[0], sign);
    SemiBounded {
        sign,
        seeds: vec![CoverSeed { point: seed, s_w: 4.0, alpha: 0.5 }],
        r_in: 0.5,
        r_out: 0.75,
        ds: 0.01,
        damping_alpha: None,
        c_pm: 4.0,
        trapped_input: 1,
    }
}

/// Points near the seed on the unit-b cosphere.
fn nearby(m: &MetricModel, q: &SemiBounded, count: usize) -> Vec<PhasePoint> {
    let w = q.seeds[0].point;
    ball_seeds(0.6, count, 12)
        .into_iter()
        .map(|d| {
            let x = [w.x[0] + d.x[0], w.x[1] + d.x[1], w.x[2] + d.x[2]];
            let xi = [w.xi[0] + 0.3 * d.xi[0], w.xi[1] + 0.3 * d.xi[1], w.xi[2] + 0.3 * d.xi[2]];
            phi_scale(m, &PhasePoint::new(x, xi), q.sign)
        })
        .collect()
}

#[test]
fn cover_bracket_telescopes() {
    let m = shell();
    for sign in Sign::BOTH {
        let q = cover(&m, sign);
        let mut nontrivial = 0;
        for v in nearby(&m, &q, 24) {
            let g = fd_gradient(|z| q.q_w(&m, 0, z), &v);
            let bracket = half_bracket(&m, sign, &v, &g);
            let seed = &q.seeds[0];
            let expected = q.chi(seed, &v) - q.chi(seed, &q.pullback(&m, 0, &v));
            if expected.abs() > 1e-3 {
                nontrivial += 1;
            }
            assert!((bracket - expected).abs() <= 1e-4, "{} {bracket} vs {expected}", sign.as_str());
        }
        assert!(nontrivial > 0);
    }
}

#[test]
fn pulled_back_bracket_is_the_normalized_bracket() {
    let m = shell();
    for sign in Sign::BOTH {
        let q = cover(&m, sign);
        for (i, v) in nearby(&m, &q, 12).into_iter().enumerate() {
            // Off the cosphere: rescale by a factor between 0.5 and 3.
            let c = 0.5 + 0.25 * i as f64;
            let pt = PhasePoint::new(v.x, [c * v.xi[0], c * v.xi[1], c * v.xi[2]]);
            assert!((b_pm(&m, &pt, sign).abs() - c).abs() < 1e-12);
            let lhs = half_bracket(&m, sign, &pt, &fd_gradient(|z| q.eval(&m, z), &pt));
            let img = phi_scale(&m, &pt, sign);
            let rhs = half_bracket(&m, sign, &img, &fd_gradient(|z| q.eval_normalized(&m, z), &img));
            assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}
