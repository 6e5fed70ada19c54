use dampwave_core::escape::build_bootstrap;
use dampwave_core::flow::{half_flow_at, minkowski_line};
use dampwave_core::halfwave::{b_pm, p_symbol, phi_scale};
use dampwave_core::halton::ScrambledHalton;
use dampwave_core::metric::{scale_metric, Damping, Geometry, Metric, MetricModel};
use dampwave_core::ode::OdeOptions;
use dampwave_core::{FullPhasePoint, PhasePoint, Sign};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-r..r)
}

fn covector() -> impl Strategy<Value = [f64; 3]> {
    vec3(10.0).prop_filter("nonzero", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-6)
}

fn geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        Just(Geometry::Minkowski),
        (-0.9..0.9f64, 2.0..12.0f64, 0.5..3.0f64).prop_map(|(amplitude, center, width)| Geometry::TrappedShell {
            amplitude,
            center,
            width
        }),
        (0.0..0.5f64).prop_map(|epsilon| Geometry::CrosstermToy { epsilon }),
    ]
}

fn model() -> impl Strategy<Value = MetricModel> {
    geometry().prop_map(|g| MetricModel::new(g, Damping::None))
}

proptest! {
    #[test]
    fn branches_straddle_zero_and_factor_p(m in model(), x in vec3(30.0), xi in covector(), t in -2.0..2.0f64) {
        let pt = PhasePoint::new(x, xi);
        let (bp, bm) = (b_pm(&m, &pt, Sign::Plus), b_pm(&m, &pt, Sign::Minus));
        prop_assert!(bp > 0.0 && bm < 0.0);
        let k = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        let tau = t * k;
        let p = p_symbol(&m, &FullPhasePoint { t: 0.0, tau, x, xi });
        prop_assert!((p + (tau - bp) * (tau - bm)).abs() <= 1e-10 * (1.0 + p.abs()));
    }

    #[test]
    fn branches_are_homogeneous(m in model(), x in vec3(30.0), xi in covector(), c in 0.01..100.0f64) {
        for sign in Sign::BOTH {
            let b = b_pm(&m, &PhasePoint::new(x, xi), sign);
            let bc = b_pm(&m, &PhasePoint::new(x, [c * xi[0], c * xi[1], c * xi[2]]), sign);
            prop_assert!((bc - c * b).abs() <= 1e-12 * c * b.abs().max(1.0));
        }
    }

    #[test]
    fn normalization_lands_on_unit_b(m in model(), x in vec3(30.0), xi in covector()) {
        for sign in Sign::BOTH {
            let v = phi_scale(&m, &PhasePoint::new(x, xi), sign);
            prop_assert!((b_pm(&m, &v, sign).abs() - 1.0).abs() < 1e-12);
            prop_assert_eq!(v.x, x);
        }
    }

    #[test]
    fn scaled_metric_samples_the_original(g in geometry(), x in vec3(10.0), gamma in 0.1..10.0f64) {
        let m = MetricModel::new(g, Damping::None);
        let s = scale_metric(m, gamma).sample(&x);
        let o = m.sample(&[gamma * x[0], gamma * x[1], gamma * x[2]]);
        prop_assert_eq!(s.g, o.g);
        prop_assert_eq!(s.g0, o.g0);
        for k in 0..3 {
            for i in 0..3 {
                prop_assert!((s.dg0[k][i] - gamma * o.dg0[k][i]).abs() <= 1e-14 * gamma);
            }
        }
    }

    #[test]
    fn ellipticity_bounds_hold(m in model(), x in vec3(30.0), xi in covector()) {
        let (lo, hi) = m.ellipticity_bounds();
        let s = m.sample(&x);
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += s.g[i][j] * xi[i] * xi[j];
            }
        }
        let k2 = xi.iter().map(|c| c * c).sum::<f64>();
        prop_assert!(q >= lo * k2 * (1.0 - 1e-12) && q <= hi * k2 * (1.0 + 1e-12));
    }

    #[test]
    fn damping_is_nonnegative_and_compactly_supported(
        x in vec3(40.0),
        r0 in 1.0..20.0f64,
        w in 0.5..5.0f64,
        a0 in 0.0..3.0f64,
    ) {
        for d in [
            Damping::Shell { radius: r0, half_width: w, amplitude: a0 },
            Damping::Ball { center: [1.0, -2.0, 0.5], radius: r0, amplitude: a0 },
        ] {
            let m = MetricModel::minkowski().with_damping(d);
            let a = m.damping(&x);
            prop_assert!(a >= 0.0 && a <= m.damping_peak() * (1.0 + 1e-12));
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r > m.damping_support_radius() {
                prop_assert_eq!(a, 0.0);
            }
        }
    }

    #[test]
    fn flat_rays_are_straight(x in vec3(10.0), xi in covector(), s in 0.0..60.0f64) {
        let m = MetricModel::minkowski();
        let w0 = PhasePoint::new(x, xi);
        let end = half_flow_at(&m, Sign::Plus, &w0, &[0.0, s], &OdeOptions::default()).unwrap()[1];
        let line = minkowski_line(&w0, s);
        for i in 0..3 {
            prop_assert!((end.x[i] - line[i]).abs() <= 1e-9);
            prop_assert!((end.xi[i] - xi[i]).abs() <= 1e-12 * (1.0 + xi[i].abs()));
        }
    }

    #[test]
    fn bootstrap_weight_is_nondecreasing(
        levels in prop::collection::vec(0.0..0.2f64, 3..10),
        sigma in 1.0..64.0f64,
    ) {
        let w = build_bootstrap(&levels, 0.25, sigma);
        let mut prev = w.f(1.0);
        for i in 1..200 {
            let f = w.f(1.0 + 0.5 * i as f64 * i as f64);
            prop_assert!(f >= prev && f.is_finite());
            prev = f;
        }
    }

    #[test]
    fn halton_points_lie_in_the_unit_cube(seed in any::<u64>(), stream in 0..64u64, index in 0..1_000_000u64) {
        let seq = ScrambledHalton::new(7, seed, stream);
        let mut p = [0.0; 7];
        seq.point(index, &mut p);
        prop_assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
    }
}
