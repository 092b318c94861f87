use grazing_core::boltzmann::{EvalConfig, Evaluator};
use grazing_core::field::{Poly, SmoothField};
use grazing_core::grazing::*;
use grazing_core::landau::LandauPlan;
use grazing_core::stats::fit_loglog;
use grazing_core::{KernelParams, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair() -> (SmoothField, SmoothField) {
    let g = SmoothField::gaussian(1.0, Poly::constant(1.0), 0.5, Vec3::new(0.2, 0.0, 0.0)).unwrap();
    let h = SmoothField::gaussian(1.0, Poly::from_pairs(&[([0, 0, 0], 1.0), ([0, 1, 0], 0.4)]).unwrap(), 0.7, Vec3::new(0.0, 0.0, 0.3))
        .unwrap();
    (g, h)
}

fn points() -> Vec<Vec3> {
    vec![Vec3::new(0.3, -0.4, 0.5), Vec3::new(1.0, 0.2, -0.3), Vec3::new(-0.6, 0.8, 0.1)]
}

#[test]
fn u2_matrix_is_trace_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let z = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let u = u2_matrix(rng.gen_range(0.05..0.99), rng.gen_range(-4.5..1.0), &z).unwrap();
        assert!(u.trace().abs() <= 4.0 * f64::EPSILON * u.norm());
        // hence U₂ : cI = 0
        assert!((u * 2.5).trace().abs() <= 1e-14 * u.norm());
    }
}

#[test]
fn decomposition_telescopes_and_u2_scales_with_one_minus_s() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    let v = points()[0];
    let mut ratios = Vec::new();
    for s in [0.9, 0.95, 0.975] {
        let p = KernelParams::new(s, 0.0, 1.0).unwrap();
        let d = decompose(&p, &g, &h, &v, &cfg).unwrap();
        assert_eq!(d.leading + d.u2_term + d.remainder, d.q.value);
        ratios.push(d.u2_term / (1.0 - s));
    }
    // the ratio settles toward its s → 1 limit: the last step moves it by < 5%
    let last = (ratios[2] - ratios[1]).abs() / ratios[2].abs();
    let first = (ratios[1] - ratios[0]).abs() / ratios[1].abs();
    assert!(last < 0.05 && last < first, "{ratios:?}");
}

#[test]
fn remainder_matches_direct_r1_quadrature() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    let p = KernelParams::new(0.9, -2.0, 1.0).unwrap();
    for v in points() {
        let d = decompose(&p, &g, &h, &v, &cfg).unwrap();
        let r1 = r1_direct(&p, &g, &h, &v, &cfg).unwrap();
        assert!((d.remainder - r1).abs() <= 0.1 * r1.abs(), "{} vs {r1}", d.remainder);
    }
}

#[test]
fn remainder_is_first_order_in_one_minus_s() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    let v = points()[0];
    let s_list = [0.9375, 0.96875, 0.984375, 0.9921875];
    let rem: Vec<f64> = s_list
        .iter()
        .map(|&s| decompose(&KernelParams::new(s, 0.0, 1.0).unwrap(), &g, &h, &v, &cfg).unwrap().remainder.abs())
        .collect();
    let oms: Vec<f64> = s_list.iter().map(|s| 1.0 - s).collect();
    let fit = fit_loglog(&oms, &rem);
    assert!(fit.slope >= 0.9, "{fit:?} {rem:?}");
}

#[test]
fn near_limit_boltzmann_is_close_to_landau() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    let p = KernelParams::new(0.999, 0.0, 1.0).unwrap();
    let ev = Evaluator::new(&p, &cfg).unwrap();
    let l = LandauPlan::new(0.0, &cfg).unwrap();
    for v in points() {
        let (qb, ql) = (ev.coarse.value(&g, &h, &v).unwrap(), l.value(&g, &h, &v).unwrap());
        assert!((qb - ql).abs() <= 1e-2 * ql.abs(), "{qb} vs {ql}");
    }
}

#[test]
fn operator_level_rate() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    let s_list = [0.75, 0.875, 0.9375, 0.96875];
    let r0 = convergence_study(0.0, &g, &h, &points(), &s_list, &cfg).unwrap();
    assert!((0.9..=1.1).contains(&r0.fitted_slope) && r0.fit_residual <= 0.1 && r0.monotone() && !r0.degenerate, "{r0:?}");
    let csv = r0.to_csv();
    assert!(csv.starts_with(RATE_CSV_HEADER) && csv.lines().count() == 5);
    let scaled = convergence_study_against(0.0, &g, &h, &points(), &s_list, &cfg, Reference::ScaledLandau).unwrap();
    assert!(scaled.errors.iter().zip(&r0.errors).all(|(a, b)| a < b));
    let r2 = convergence_study(-2.0, &g, &h, &points(), &s_list, &cfg).unwrap();
    assert!(r2.fitted_slope >= 0.9 && r2.fit_residual <= 0.1 && r2.monotone(), "{r2:?}");
}

#[test]
fn study_input_is_validated() {
    let (g, h) = pair();
    let cfg = EvalConfig::default();
    assert!(convergence_study(0.0, &g, &h, &points(), &[0.5, 0.7, 0.9], &cfg).is_err());
    assert!(convergence_study(0.0, &g, &h, &points(), &[0.5, 0.7, 0.6, 0.9], &cfg).is_err());
    assert!(convergence_study(0.0, &g, &h, &[], &[0.5, 0.6, 0.7, 0.9], &cfg).is_err());
}
