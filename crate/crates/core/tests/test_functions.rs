use grazing_core::field::{contract3, Poly, SmoothField, Term};
use grazing_core::geometry::{build_radial_rule, DirectionRule, RadialGrading};
use grazing_core::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng) -> SmoothField {
    let mut terms = Vec::new();
    for _ in 0..2 {
        let mut pairs = Vec::new();
        for _ in 0..4 {
            let e = [rng.gen_range(0..3), rng.gen_range(0..2), rng.gen_range(0..2)];
            pairs.push((e, rng.gen_range(-1.0..1.0)));
        }
        terms.push(Term {
            coef: rng.gen_range(0.2..1.0),
            poly: Poly::from_pairs(&pairs).unwrap(),
            width: rng.gen_range(0.2..0.8),
            center: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        });
    }
    SmoothField::new(terms).unwrap()
}

/// 5-point central difference of a scalar function along e_k.
fn fd5(f: impl Fn(&Vec3) -> f64, v: &Vec3, k: usize, h: f64) -> f64 {
    let mut e = Vec3::zeros();
    e[k] = h;
    (-f(&(v + 2.0 * e)) + 8.0 * f(&(v + e)) - 8.0 * f(&(v - e)) + f(&(v - 2.0 * e))) / (12.0 * h)
}

#[test]
fn maxwellian_gradient_is_minus_v_mu() {
    let m = SmoothField::maxwellian();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let v = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let want = -v * m.eval(&v);
        let got = m.grad(&v);
        assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-300));
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let f = random_field(&mut rng);
        let v = Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let j = f.jet(&v);
        let hs = j.hess.norm();
        let ts: f64 = j.third.iter().flatten().flatten().map(|x| x * x).sum::<f64>().sqrt();
        for k in 0..3 {
            let g = fd5(|x| f.eval(x), &v, k, h);
            assert!((g - j.grad[k]).abs() <= 1e-7 * j.grad.norm().max(1e-3));
            for i in 0..3 {
                let hk = fd5(|x| f.grad(x)[i], &v, k, h);
                assert!((hk - j.hess[(i, k)]).abs() <= 1e-6 * hs.max(1e-3), "hess {i}{k}");
                for l in 0..3 {
                    let t = fd5(|x| f.hess(x)[(i, l)], &v, k, h);
                    assert!((t - j.third[i][l][k]).abs() <= 1e-6 * ts.max(1e-3), "third {i}{l}{k}");
                }
            }
        }
    }
}

#[test]
fn maxwellian_moments_by_radial_quadrature() {
    let m = SmoothField::maxwellian();
    let radial = build_radial_rule(0.0, 12.0, &RadialGrading::default()).unwrap();
    let dirs = DirectionRule::product(8, 8);
    let mut mom = [0.0; 4];
    let mut first = Vec3::zeros();
    for (r, wr) in radial.rule.x.iter().zip(&radial.rule.w) {
        for (d, wd) in dirs.dirs.iter().zip(&dirs.w) {
            let v = *r * d;
            let w = wr * wd * r * r * m.eval(&v);
            mom[0] += w;
            mom[2] += w * r * r;
            mom[3] += w * r.powi(4);
            first += w * v;
        }
    }
    assert!((mom[0] - 1.0).abs() < 1e-8, "{}", mom[0]);
    assert!(first.norm() < 1e-8);
    assert!((mom[2] - 3.0).abs() < 3e-8);
    assert!((mom[3] - 15.0).abs() < 15e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_pointwise(seed in 0u64..10_000, x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_field(&mut rng);
        // random fields already reach degree 4, so the partner is a shifted plain Gaussian
        let b = SmoothField::gaussian(1.3, Poly::constant(1.0), 0.6, Vec3::new(0.2, 0.1, -0.4)).unwrap();
        let v = Vec3::new(x, y, z);
        let prod = a.product(&b).unwrap().eval(&v);
        let direct = a.eval(&v) * b.eval(&v);
        prop_assert!((prod - direct).abs() <= 1e-13 * (a.eval(&v).abs() + 1.0) * b.eval(&v).abs().max(1e-300) + 1e-300);
    }

    #[test]
    fn third_bound_is_an_upper_bound(seed in 0u64..10_000, ux in -1.0f64..1.0, uy in -1.0f64..1.0, uz in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&mut rng);
        let c = Vec3::new(0.3, -0.2, 0.1);
        let u = Vec3::new(ux, uy, uz + 1e-3).normalize();
        let v = c + 0.7 * Vec3::new(uy, uz, ux) / 1.8;
        prop_assert!(contract3(&f.third(&v), &u).abs() <= f.third_derivative_bound(&c, 0.7));
    }
}
