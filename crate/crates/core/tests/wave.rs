use dampwave_core::metric::{Damping, Metric, MetricModel};
use dampwave_core::solver::{
    du_norm_sq, energy, evolve, le_norms, led_experiment, plane_profile, Forcing, GridSpec, InitialData,
};

fn grid(m: &MetricModel, extent: f64, n: usize, sponge: f64) -> GridSpec {
    GridSpec::with_cfl(extent, n, 0.4, m.ellipticity_bounds().1, sponge, 2.0)
}

/// Max error against φ(x₁ − t − c) in a box the lateral sponge cannot reach.
fn pulse_error(n: usize) -> (f64, f64) {
    let m = MetricModel::minkowski();
    let (center, width, t) = (-4.0, 3.0, 4.0);
    let g = grid(&m, 12.0, n, 3.0).aligned_to(&[t]);
    let data = InitialData::PlanePulse { center, width, amplitude: 1.0 };
    let hist = evolve(&m, &g, &data, &Forcing::None, t, &[t]).unwrap();
    let snap = &hist.snapshots[0];
    assert!((snap.t - t).abs() < 1e-9);
    let mut err: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = g.point(i, j, k);
                if x[0].abs() > 8.0 || x[1].abs() > 4.0 || x[2].abs() > 4.0 {
                    continue;
                }
                let exact = plane_profile(x[0] - t - center, width, 1.0).0;
                err = err.max((snap.u[(i * n + j) * n + k] - exact).abs());
                peak = peak.max(exact.abs());
            }
        }
    }
    (err, peak)
}

#[test]
fn plane_pulse_travels_at_unit_speed() {
    let (err, peak) = pulse_error(97);
    assert!(peak > 0.99, "box misses the pulse");
    assert!(err < 2e-2, "error {err:.3e}");
}

#[test]
fn plane_pulse_error_is_second_order() {
    let (coarse, _) = pulse_error(49);
    let (fine, _) = pulse_error(97);
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "errors {coarse:.3e} {fine:.3e}, ratio {ratio:.2}");
}

#[test]
fn support_spreads_no_faster_than_the_light_cone() {
    let m = MetricModel::trapped_shell(-0.75, 8.0, 2.0);
    let (_, c_ell) = m.ellipticity_bounds();
    let n = 65;
    let (t, r0) = (6.0, 2.0);
    let g = grid(&m, 16.0, n, 4.0).aligned_to(&[t]);
    let data = InitialData::Bump { center: [0.0; 3], radius: r0, amplitude: 1.0, power: 3 };
    let hist = evolve(&m, &g, &data, &Forcing::None, t, &[t]).unwrap();
    let u = &hist.snapshots[0].u;
    let mut reach: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if u[(i * n + j) * n + k].abs() > 1e-12 {
                    let x = g.point(i, j, k);
                    reach = reach.max((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
                }
            }
        }
    }
    // A stencil of radius one cell can move the support h/dt per step, so the
    // 1e-12 front sits a few cells outside the cone.
    let cone = r0 + c_ell.sqrt() * t;
    assert!(reach > cone - 2.0, "front {reach:.2} lags the cone {cone:.2}");
    assert!(reach <= cone + 8.0 * g.h(), "front {reach:.2} vs cone {cone:.2}");
}

#[test]
fn energy_is_comparable_to_the_gradient_norm() {
    let m = MetricModel::trapped_shell(-0.75, 8.0, 2.0);
    let (c_lo, c_hi) = m.ellipticity_bounds();
    let n = 49;
    let g = grid(&m, 16.0, n, 4.0).aligned_to(&[2.0]);
    let data = InitialData::Bump { center: [8.0, 0.0, 0.0], radius: 3.0, amplitude: 1.0, power: 3 };
    let hist = evolve(&m, &g, &data, &Forcing::None, 4.0, &[2.0, 4.0]).unwrap();
    for s in &hist.snapshots {
        let e = energy(&m, &g, &s.u, &s.ut);
        let du = du_norm_sq(&g, &s.u, &s.ut);
        assert!(e >= c_lo.min(1.0) * du * (1.0 - 1e-9), "t={} E={e} du={du}", s.t);
        assert!(e <= c_hi.max(1.0) * du * (1.0 + 1e-9), "t={} E={e} du={du}", s.t);
    }
}

#[test]
fn le_numerator_grows_with_the_interval() {
    let m = MetricModel::minkowski().with_damping(Damping::Ball { center: [0.0; 3], radius: 4.0, amplitude: 0.5 });
    let g = grid(&m, 12.0, 41, 3.0).aligned_to(&[1.0]);
    let data = InitialData::Bump { center: [1.0, 0.0, 0.0], radius: 3.0, amplitude: 1.0, power: 3 };
    let t_list = [1.0, 2.0, 3.0, 4.0, 6.0];
    let table = led_experiment(&m, &g, &data, &Forcing::None, &t_list).unwrap();
    for w in table.rows.windows(2) {
        assert!(w[1].numerator >= w[0].numerator);
        assert_eq!(w[1].denominator, w[0].denominator);
    }
    // Unforced: the denominator is the initial energy norm alone.
    let r = le_norms(&table.history, 6.0);
    assert_eq!(r.sum_norm_f, 0.0);
    assert!(table.rows.iter().all(|row| row.denominator == table.history.initial_du));
}

#[test]
fn flat_local_energy_ratio_levels_off() {
    let m = MetricModel::minkowski();
    let g = grid(&m, 16.0, 49, 4.0).aligned_to(&[4.0]);
    let data = InitialData::Bump { center: [0.0; 3], radius: 2.0, amplitude: 1.0, power: 3 };
    let table = led_experiment(&m, &g, &data, &Forcing::None, &[4.0, 8.0, 16.0, 32.0]).unwrap();
    let rho = |t| table.rho_at(t).unwrap();
    assert!(rho(32.0) / rho(16.0) <= 1.05, "{:?}", table.rows);
}
