use std::f64::consts::PI;

use proptest::prelude::*;

use semifluxon::boundary::{area_perimeter, contains, flux_polar, FluxPolar, FluxPosition, ShapeParams};
use semifluxon::circle::{circle_levels, Parity};
use semifluxon::degeneracy::{codimension, toy_eigen, track_collision, CollisionOutcome, DegeneracyCounter, ToyCounter, ToyModel};
use semifluxon::nodal_force::{chi0_from_coefficients, nodal_angle, trace_nodal};
use semifluxon::roots::ScanOptions;
use semifluxon::specfun::{bessel_j, bessel_zero, BesselOrder};
use semifluxon::spectral::{boundary_residual, eval_f, find_levels, mode_coefficients, Collocation, SolverOptions};

fn j(order: BesselOrder, x: f64) -> f64 {
    bessel_j(order, x).unwrap()
}

fn wrap(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

fn angle_close(a: f64, b: f64, tol: f64) -> bool {
    let d = wrap(a - b);
    d < tol || 2.0 * PI - d < tol
}

proptest! {
    #[test]
    fn half_integer_recurrence(n in 1u32..30, x in 0.1f64..50.0) {
        let nu = n as f64 + 0.5;
        let (a, b, c) = (j(BesselOrder::Half(n - 1), x), j(BesselOrder::Half(n), x), j(BesselOrder::Half(n + 1), x));
        let scale = a.abs().max(c.abs()).max((2.0 * nu / x * b).abs());
        prop_assert!((a + c - 2.0 * nu / x * b).abs() <= 1e-10 * scale);
    }

    #[test]
    fn integer_recurrence(m in -20i32..20, x in 0.1f64..50.0) {
        let (a, b, c) = (j(BesselOrder::Integer(m - 1), x), j(BesselOrder::Integer(m), x), j(BesselOrder::Integer(m + 1), x));
        let scale = a.abs().max(c.abs()).max((2.0 * m as f64 / x * b).abs()).max(1e-300);
        prop_assert!((a + c - 2.0 * m as f64 / x * b).abs() <= 1e-10 * scale);
    }

    #[test]
    fn spherical_closed_forms(x in 0.1f64..50.0) {
        let pre = (2.0 / (PI * x)).sqrt();
        let (s, c) = x.sin_cos();
        let want = [
            pre * s,
            pre * (s / x - c),
            pre * ((3.0 / (x * x) - 1.0) * s - 3.0 * c / x),
        ];
        for (n, w) in want.iter().enumerate() {
            prop_assert!((j(BesselOrder::Half(n as u32), x) - w).abs() <= 1e-12 * pre.max(1.0));
        }
    }

    #[test]
    fn negative_integer_reflection(m in 0i32..30, x in 0.0f64..40.0) {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(j(BesselOrder::Integer(-m), x), sign * j(BesselOrder::Integer(m), x));
    }

    #[test]
    fn circle_polar_is_identity(phi in -PI..PI) {
        let p = flux_polar(&ShapeParams::CIRCLE, phi, FluxPosition::ORIGIN).unwrap();
        prop_assert!((p.rho - 1.0).abs() < 1e-14);
        prop_assert!(angle_close(p.mu, phi, 1e-12));
    }

    #[test]
    fn polar_round_trip(x in -2.0f64..2.0, y in -2.0f64..2.0, fx in -0.5f64..0.5, fy in -0.5f64..0.5) {
        let flux = FluxPosition::new(fx, fy);
        let q = FluxPolar::of_point([x, y], flux).to_point(flux);
        prop_assert!((q[0] - x).abs() < 1e-13 && (q[1] - y).abs() < 1e-13);
    }

    #[test]
    fn area_closed_form(a2 in 0.0f64..0.15, a3 in 0.0f64..0.1, sigma in 0.0f64..(2.0 * PI)) {
        let (area, _) = area_perimeter(&ShapeParams::new(a2, a3, sigma).unwrap()).unwrap();
        prop_assert!((area - PI * (1.0 + 2.0 * a2 * a2 + 3.0 * a3 * a3)).abs() < 1e-6);
    }

    #[test]
    fn circle_contains_is_exact(x in -1.5f64..1.5, y in -1.5f64..1.5) {
        let r2 = x * x + y * y;
        prop_assume!((r2 - 1.0).abs() > 1e-9);
        prop_assert_eq!(contains(&ShapeParams::CIRCLE, [x, y]), r2 < 1.0);
    }

    #[test]
    fn antiperiodic_expansion(
        c in prop::collection::vec(-1.0f64..1.0, 10),
        s in prop::collection::vec(-1.0f64..1.0, 10),
        k in 0.5f64..10.0,
        rho in 0.0f64..1.5,
        mu in -PI..PI,
    ) {
        let coeffs = semifluxon::spectral::ModeCoefficients { c, s };
        let a = eval_f(&coeffs, k, FluxPolar { rho, mu });
        let b = eval_f(&coeffs, k, FluxPolar { rho, mu: mu + 2.0 * PI });
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn toy_gap_and_count(z in -5.0f64..5.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let (lo, hi) = toy_eigen(ToyModel { z }, x, y);
        prop_assert!((hi - lo - 2.0 * (z - x * x).hypot(y)).abs() < 1e-12);
        prop_assume!(z != 0.0);
        prop_assert_eq!(ToyCounter.count(z).unwrap(), if z > 0.0 { 2 } else { 0 });
    }

    #[test]
    fn toy_collision_changes_count_by_two(lo in -4.0f64..-1e-3, hi in 1e-3f64..4.0) {
        match track_collision(&ToyCounter, "Z", [1, 2], (lo, hi), 1e-6).unwrap() {
            CollisionOutcome::Event(e) => {
                prop_assert_eq!(e.count_above.abs_diff(e.count_below), 2);
                prop_assert!(e.critical_value.abs() <= 1e-6);
            }
            CollisionOutcome::NoEvent { .. } => prop_assert!(false, "missed the collision"),
        }
    }

    #[test]
    fn codimension_counts_traceless_entries(n in 2u64..200) {
        let (codim, semifluxons) = codimension(n).unwrap();
        prop_assert_eq!(codim, n * (n + 1) / 2 - 1);
        prop_assert_eq!(semifluxons, (n * (n + 1)) / 4);
    }
}

#[test]
fn bessel_zeros_interlace_and_vanish() {
    for n in 0..8u32 {
        let mut prev_next = 0.0;
        for i in 1..=10 {
            let a = bessel_zero(BesselOrder::Half(n), i).unwrap();
            let b = bessel_zero(BesselOrder::Half(n + 1), i).unwrap();
            assert!(prev_next < a && a < b, "n={n} i={i}");
            prev_next = b;
            assert!(j(BesselOrder::Half(n), a).abs() < 1e-9);
        }
    }
}

#[test]
fn circle_parities_coincide_at_centre() {
    let opts = ScanOptions::default();
    let even = circle_levels(Parity::Even, 0.0, 2.0, 9.5, 12, &opts).unwrap().ks();
    let odd = circle_levels(Parity::Odd, 0.0, 2.0, 9.5, 12, &opts).unwrap().ks();
    assert!(even.len() >= 6);
    assert_eq!(even.len(), odd.len());
    for (e, o) in even.iter().zip(&odd).take(6) {
        assert!((e - o).abs() <= 1e-8, "{e} vs {o}");
    }
}

fn merged_circle(r: f64, k_lo: f64, k_hi: f64, s: usize) -> Vec<f64> {
    let opts = ScanOptions::default();
    let mut ks = circle_levels(Parity::Even, r, k_lo, k_hi, s, &opts).unwrap().ks();
    ks.extend(circle_levels(Parity::Odd, r, k_lo, k_hi, s, &opts).unwrap().ks());
    ks.sort_by(f64::total_cmp);
    ks
}

fn max_shift(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn circle_same_parity_levels_repel(r in 0.005f64..0.9) {
        let s = if r <= 0.55 { 12 } else { 32 };
        for parity in [Parity::Even, Parity::Odd] {
            let ks = circle_levels(parity, r, 2.0, 8.0, s, &ScanOptions::default()).unwrap().ks();
            for w in ks.windows(2) {
                prop_assert!(w[1] - w[0] > 1e-3, "{:?} R={} {:?}", parity, r, w);
            }
        }
    }

    #[test]
    fn circle_truncation_near_centre(r in 0.0f64..0.55) {
        prop_assert!(max_shift(&merged_circle(r, 2.0, 8.0, 12), &merged_circle(r, 2.0, 8.0, 16)) <= 1e-8);
    }

    #[test]
    fn circle_truncation_off_centre(r in 0.55f64..0.8) {
        prop_assert!(max_shift(&merged_circle(r, 2.0, 8.0, 24), &merged_circle(r, 2.0, 8.0, 32)) <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn collocation_matches_circle_module(r in 0.0f64..0.6, theta in 0.0f64..(2.0 * PI)) {
        let flux = FluxPosition::new(r * theta.cos(), r * theta.sin());
        let opts = SolverOptions { truncation: 14, ..SolverOptions::default() };
        let colloc = find_levels(&ShapeParams::CIRCLE, flux, 2.0, 6.0, &opts).unwrap().ks();
        let circle = merged_circle(r, 2.0, 6.0, 16);
        prop_assert!(max_shift(&colloc, &circle) <= 1e-6);
    }

    #[test]
    fn mode_coefficient_invariants(x in -0.4f64..0.4, y in -0.4f64..0.4) {
        let shape = ShapeParams::reference();
        let flux = FluxPosition::new(x, y);
        let opts = SolverOptions { truncation: 12, ..SolverOptions::default() };
        let k = find_levels(&shape, flux, 2.0, 4.0, &opts).unwrap().ks()[0];
        let coeffs = mode_coefficients(&shape, flux, k, &opts).unwrap();
        prop_assert!((coeffs.norm() - 1.0).abs() < 1e-12);
        for n in 0..coeffs.truncation() {
            let (e, chi) = (coeffs.amplitude(n), coeffs.phase(n));
            prop_assert!((coeffs.c[n] - e * chi.cos()).abs() < 1e-14);
            prop_assert!((coeffs.s[n] + e * chi.sin()).abs() < 1e-14);
        }
        let col = Collocation::new(&shape, flux, opts.truncation, opts.margin).unwrap();
        prop_assert!(boundary_residual(&col, &coeffs, k).unwrap() <= 1e-4);
    }

    #[test]
    fn nodal_line_runs_from_flux_to_boundary(x in -0.4f64..0.4, y in -0.4f64..0.4) {
        let shape = ShapeParams::reference();
        let flux = FluxPosition::new(x, y);
        let opts = SolverOptions::default();
        let k = find_levels(&shape, flux, 2.0, 4.0, &opts).unwrap().ks()[0];
        let coeffs = mode_coefficients(&shape, flux, k, &opts).unwrap();
        let (_, chi0) = chi0_from_coefficients(&coeffs).unwrap();
        let info = trace_nodal(&coeffs, flux, k, &shape).unwrap();
        prop_assert!(angle_close(info.mu_nodal, nodal_angle(chi0), 1e-12));
        prop_assert!(angle_close(info.mu_nodal, PI - 2.0 * chi0, 1e-12));
        let start = info.polyline[1];
        prop_assert!((start[0] - x).hypot(start[1] - y) <= 1e-3 + 1e-12);
        let end = *info.polyline.last().unwrap();
        prop_assert!(semifluxon::boundary::clearance(&shape, end) <= 1e-3);
    }

    #[test]
    fn parallel_runs_are_bitwise_identical(x in -0.4f64..0.4, y in -0.4f64..0.4) {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                find_levels(&ShapeParams::reference(), FluxPosition::new(x, y), 2.0, 6.0, &SolverOptions::default())
                    .unwrap()
                    .ks()
                    .iter()
                    .map(|k| k.to_bits())
                    .collect::<Vec<_>>()
            })
        };
        prop_assert_eq!(run(1), run(4));
    }
}
