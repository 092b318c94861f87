use grazing_core::error::Error;
use grazing_core::linearized::*;
use grazing_core::relaxation::*;
use grazing_core::KernelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn basis() -> &'static GalerkinBasis {
    static B: OnceLock<GalerkinBasis> = OnceLock::new();
    B.get_or_init(|| GalerkinBasis::new(4).unwrap())
}

fn boltzmann(s: f64) -> Operator {
    Operator::Boltzmann(KernelParams::operator(s, 0.0, 1.0).unwrap())
}

fn tensors_b() -> &'static Tensors {
    static T: OnceLock<Tensors> = OnceLock::new();
    T.get_or_init(|| precompute_tensors(&boltzmann(0.5), basis(), &GalerkinConfig::default()).unwrap())
}

fn tensors_l() -> &'static Tensors {
    static T: OnceLock<Tensors> = OnceLock::new();
    T.get_or_init(|| precompute_tensors(&Operator::Landau { gamma: 0.0 }, basis(), &GalerkinConfig::default()).unwrap())
}

fn random_data(seed: u64, size: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c: Vec<f64> = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c = kernel_orthogonal(&c);
    let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter().map(|x| x * size / n).collect()
}

#[test]
fn tensors_conserve_collision_invariants() {
    for tn in [tensors_b(), tensors_l()] {
        assert!(tn.t.conservation_defect() <= 1e-6 * tn.t.max_abs());
        assert!(asymmetry(&tn.t.l_raw) < 1e-8);
        assert_eq!(tn.l, tn.l.transpose());
        // L_ik = −(T_1ik + T_i1k) with T symmetric in its first pair
        let n = tn.n();
        for i in 0..n {
            for k in 0..n {
                assert!((tn.l[(i, k)] + 2.0 * tn.t.get(0, i, k)).abs() <= 1e-9 * tn.t.max_abs());
            }
        }
    }
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let tr = integrate(tensors_b(), basis(), &vec![0.0; 35], &RelaxOptions::default()).unwrap();
    assert!(tr.coeffs.iter().all(|c| c.iter().all(|x| *x == 0.0)));
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn kernel_coefficients_do_not_drift() {
    let tn = tensors_b();
    let f0 = random_data(1, 5e-3);
    let opts = RelaxOptions { t_end: 5.0, dt: 1e-2 / tn.spectrum.gap, ..Default::default() };
    let tr = integrate(tn, basis(), &f0, &opts).unwrap();
    assert!(tr.max_drift() <= 1e-8, "{}", tr.max_drift());
    assert!(!tr.positivity_violated());
    // kernel components of the data are projected out first
    let mut with_kernel = f0.clone();
    with_kernel[0] = 0.3;
    with_kernel[4] = -0.1;
    let tr2 = integrate(tn, basis(), &with_kernel, &opts).unwrap();
    assert_eq!(tr2.coeffs[0][..5], [0.0; 5]);
    let csv = tr.to_csv();
    assert!(csv.starts_with("t,c0,c1") && csv.lines().next().unwrap().ends_with("norm,kernel_drift,min_density"));
    assert_eq!(csv.lines().count(), tr.times.len() + 1);
}

#[test]
fn linear_regime_decays_at_the_gap() {
    let tn = tensors_b();
    let gap = tn.spectrum.gap;
    let pairs = eigenpairs(&tn.l);
    let mode = &pairs.iter().find(|p| (p.0 - gap).abs() <= 1e-9 * gap).unwrap().1;
    let noise = random_data(4, 0.05);
    let mut f0: Vec<f64> = mode.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let n = f0.iter().map(|x| x * x).sum::<f64>().sqrt();
    f0.iter_mut().for_each(|x| *x *= 1e-3 / n);
    let tr = integrate(tn, basis(), &f0, &RelaxOptions::for_gap(gap)).unwrap();
    // one e-fold, after the faster modes in the noise have gone
    let (t0, t1) = (1.0 / gap, 2.0 / gap);
    let rate = tr.decay_rate(t0, t1);
    assert!((rate - gap).abs() <= 0.1 * gap, "{rate} vs {gap}");
}

#[test]
fn rk4_is_fourth_order() {
    let tn = tensors_b();
    let gap = tn.spectrum.gap;
    let order = observed_order(tn, &random_data(2, 5e-3), 2.0 / gap, 0.2 / gap);
    assert!(order >= 3.7, "{order}");
}

#[test]
fn energy_decays_inside_the_small_ball() {
    let tn = tensors_b();
    let f0 = random_data(3, 0.5 * tn.lyapunov_radius().min(5e-3));
    let tr = integrate(tn, basis(), &f0, &RelaxOptions::for_gap(tn.spectrum.gap)).unwrap();
    for c in &tr.coeffs[..tr.coeffs.len() - 1] {
        assert!(tn.energy_rate(c) <= 0.0);
    }
    assert!(tr.norm.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn unstable_step_aborts() {
    let tn = tensors_b();
    let opts = RelaxOptions { t_end: 5.0, dt: 0.5, ..Default::default() };
    assert!(matches!(integrate(tn, basis(), &random_data(5, 1e-3), &opts), Err(Error::Abort(_))));
    assert!(matches!(integrate(tn, basis(), &random_data(5, 10.0), &RelaxOptions::default()), Err(Error::Domain(_))));
}

#[test]
fn landau_against_itself_is_identical() {
    let tn = tensors_l();
    let d = trajectory_distance(tn, tn, basis(), &random_data(6, 5e-3), &RelaxOptions::for_gap(tn.spectrum.gap)).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn tensors_converge_to_landau() {
    let cfg = GalerkinConfig::default();
    let tl = tensors_l();
    let diff = |s: f64| {
        let tb = precompute_tensors(&boltzmann(s), basis(), &cfg).unwrap();
        tb.t.t.iter().zip(&tl.t.t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (d1, d2) = (diff(0.99), diff(0.999));
    // entrywise difference ≤ C(1−s) with one C across the two
    assert!(d2 / 1e-3 <= 1.5 * d1 / 1e-2 && d2 / 1e-3 >= 0.5 * d1 / 1e-2, "{d1} {d2}");
}

#[test]
fn trajectories_converge_at_rate_one() {
    let tl = tensors_l();
    let f0 = random_data(7, 5e-3);
    let cmp = compare_with(tl, 0.0, &[0.75, 0.875, 0.9375], &f0, &RelaxOptions::for_gap(tensors_b().spectrum.gap), basis(), &GalerkinConfig::default())
        .unwrap();
    assert!(cmp.fitted_slope >= 0.9, "{cmp:?}");
    // linear regime: the (1−s)-scaled data reproduce the unscaled comparison
    for (a, b) in cmp.differences.iter().zip(&cmp.scaled_differences) {
        assert!((a - b).abs() <= 0.01 * a, "{cmp:?}");
    }
    assert_eq!(cmp.to_csv().lines().count(), 4);
}
