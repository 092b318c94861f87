use grazing_core::identities::*;
use grazing_core::kernel::{change_of_var_psi, change_of_var_alpha};
use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

#[test]
fn closed_forms_match_independent_routes() {
    let t = Instant::now();
    let rep = identity_suite(20, 11, 1e-8).unwrap();
    let secs = t.elapsed().as_secs_f64();
    for s in &rep.summary {
        println!("{} n={} max rel {:.2e}", s.identity, s.samples, s.max_rel_residual);
        assert!(s.samples >= 20 && s.pass, "{s:?}");
    }
    assert_eq!(rep.summary.len(), 6);
    assert!(rep.pass && secs < 10.0, "{secs}");
    assert!(rep.to_csv().starts_with(IDENTITY_CSV_HEADER));
    assert_eq!(rep.to_csv().lines().count(), 121);
}

#[test]
fn psi_bounds_on_the_rectangle() {
    for i in 0..100 {
        for j in 0..100 {
            let a = 2.0 * i as f64 / 99.0;
            let th = (0.5 * PI * j as f64 / 99.0).min(0.5 * PI);
            let p = change_of_var_psi(a, th).unwrap();
            assert!((1.0 - 1e-15..=SQRT_2 + 1e-15).contains(&p), "{a} {th} {p}");
            assert!(change_of_var_alpha(a, th).unwrap() >= 0.0);
        }
    }
}

proptest::proptest! {
    #[test]
    fn jacobian_depends_on_kappa_plus_iota(k in 0.0..1.0f64, i in 0.0..1.0f64, shift in -0.3..0.3f64) {
        let (k2, i2) = (k + shift, i - shift);
        proptest::prop_assume!((0.0..=1.0).contains(&k2) && (0.0..=1.0).contains(&i2));
        let v = grazing_core::Vec3::new(0.4, -1.0, 0.3);
        let vs = grazing_core::Vec3::new(-0.2, 0.1, 0.5);
        let sig = grazing_core::Vec3::new(0.6, -0.8, 0.0);
        let a = alpha_jacobian(&v, &vs, &sig, k, i);
        let b = alpha_jacobian(&v, &vs, &sig, k2, i2);
        proptest::prop_assert!((a - b).abs() <= 1e-12);
    }
}
