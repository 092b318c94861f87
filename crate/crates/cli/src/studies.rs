//! One runner per study kind. Each returns CSV text, threshold checks and a
//! JSON body; nothing here depends on timing or thread count.

use crate::config::{StudyConfig, StudyKind};
use grazing_core::boltzmann::{weak_q_with_scale, Evaluator, TestFunction};
use grazing_core::field::{Poly, SmoothField};
use grazing_core::grazing::{convergence_study, decompose_with, u2_term, RateReport};
use grazing_core::identities::{identity_suite, IDENTITY_CSV_HEADER, IDENTITY_CSV_VERSION};
use grazing_core::landau::{weak_ql_with_scale, LandauEvaluator};
use grazing_core::linearized::{assemble_l_matrix, burnett_polys, eigenpairs, gap_scaling, oracle_config, rayleigh_quotient, GalerkinBasis, Operator};
use grazing_core::relaxation::{
    compare_with, integrate, kernel_orthogonal, observed_order, precompute_tensors, RelaxOptions, COMPARISON_CSV_VERSION, TRACE_CSV_VERSION,
};
use grazing_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, relation: "<=", threshold, pass: value <= threshold }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, relation: ">=", threshold, pass: value >= threshold }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub csv_version: String,
    pub csv: String,
    pub checks: Vec<Check>,
    pub results: Value,
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    match cfg.kind {
        StudyKind::Eval => eval(cfg),
        StudyKind::Conserve => conserve(cfg),
        StudyKind::Grazing => grazing(cfg),
        StudyKind::Spectrum => spectrum(cfg),
        StudyKind::Relax => relax(cfg),
        StudyKind::Identities => identities(cfg),
    }
}

fn relative_excess(value: f64, error: f64, tolerance: f64) -> f64 {
    error / (tolerance * value.abs().max(1.0))
}

// ---------------------------------------------------------------------------

fn eval(cfg: &StudyConfig) -> Result<StudyOutput> {
    let p = cfg.kernel.params()?;
    let (g, h) = (&cfg.fields.g, &cfg.fields.h);
    let q = &cfg.quadrature;
    let eb = Evaluator::new(&p, q)?;
    let el = LandauEvaluator::new(p.gamma, q)?;
    let mut csv = String::from("point,v1,v2,v3,q_b,q_b_error,q_l,q_l_error,leading,leading_error,u2,u2_error,remainder,remainder_error\n");
    let (mut worst_b, mut worst_l, mut mismatches) = (0.0f64, 0.0f64, 0usize);
    let mut rows = Vec::new();
    for (i, v) in cfg.points.resolve(cfg.seed).iter().enumerate() {
        let qb = eb.eval(g, h, v)?;
        let ql = el.eval(g, h, v)?;
        let u2 = u2_term(&p, g, h, v, q)?;
        let d = decompose_with(&p, qb, ql.value, u2.value);
        let lead_err = 2f64.powf(p.s - 1.0) * ql.error;
        let rem_err = d.q.error + lead_err + u2.error;
        worst_b = worst_b.max(relative_excess(d.q.value, d.q.error, d.q.tolerance));
        worst_l = worst_l.max(relative_excess(ql.value, ql.error, ql.tolerance));
        if d.total() != d.q.value {
            mismatches += 1;
        }
        writeln!(
            csv,
            "{i},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            v[0], v[1], v[2], d.q.value, d.q.error, ql.value, ql.error, d.leading, lead_err, d.u2_term, u2.error, d.remainder, rem_err
        )
        .unwrap();
        rows.push(json!({ "point": [v[0], v[1], v[2]], "q_b": d.q, "q_l": ql, "decomposition": d }));
    }
    Ok(StudyOutput {
        csv_version: "eval/1".into(),
        csv,
        checks: vec![
            Check::at_most("q_b_error_over_tolerance", worst_b, 1.0),
            Check::at_most("q_l_error_over_tolerance", worst_l, 1.0),
            Check::at_most("telescoping_mismatches", mismatches as f64, 0.0),
        ],
        results: json!({ "kernel": p, "points": rows }),
    })
}

// ---------------------------------------------------------------------------

fn invariants() -> Vec<(&'static str, Poly)> {
    vec![
        ("1", Poly::constant(1.0)),
        ("v1", Poly::monomial([1, 0, 0], 1.0).unwrap()),
        ("v2", Poly::monomial([0, 1, 0], 1.0).unwrap()),
        ("v3", Poly::monomial([0, 0, 1], 1.0).unwrap()),
        ("|v|^2", Poly::from_pairs(&[([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)]).unwrap()),
    ]
}

fn conserve(cfg: &StudyConfig) -> Result<StudyOutput> {
    let p = cfg.kernel.params()?;
    let g = &cfg.fields.g;
    let q = &cfg.quadrature;
    let tol = cfg.thresholds.conservation_rel;
    // residual rows carry their quadrature scale Σ|contributions|; pointwise rows their two-level estimate
    let mut csv = String::from("operator,test,point,value,error,scale,ratio\n");
    let mut worst = [0.0f64; 2];
    let mut sup_eq = [0.0f64; 2];
    let mut json_rows = Vec::new();
    for (name, phi) in invariants() {
        let tf = TestFunction::Poly(phi);
        let b = weak_q_with_scale(&p, g, g, &tf, q)?;
        let l = weak_ql_with_scale(p.gamma, g, g, &tf, q)?;
        for (k, (op, (value, scale))) in [("boltzmann", b), ("landau", l)].into_iter().enumerate() {
            // φ = 1 gives an identically zero integrand
            let ratio = if value == 0.0 { 0.0 } else { value.abs() / scale };
            worst[k] = worst[k].max(ratio);
            writeln!(csv, "{op},{name},,{value:e},,{scale:e},{ratio:e}").unwrap();
            json_rows.push(json!({ "operator": op, "test": name, "value": value, "scale": scale, "ratio": ratio }));
        }
    }
    let mu = SmoothField::maxwellian();
    let eb = Evaluator::new(&p, q)?;
    let el = LandauEvaluator::new(p.gamma, q)?;
    let mut eq_rows = Vec::new();
    for (i, v) in cfg.points.resolve(cfg.seed).iter().enumerate() {
        for (k, (op, e)) in [("boltzmann", eb.eval(&mu, &mu, v)?), ("landau", el.eval(&mu, &mu, v)?)].into_iter().enumerate() {
            sup_eq[k] = sup_eq[k].max(e.value.abs());
            let ratio = e.value.abs() / e.tolerance;
            writeln!(csv, "{op},equilibrium,{i},{:e},{:e},{:e},{ratio:e}", e.value, e.error, e.tolerance).unwrap();
            eq_rows.push(json!({ "operator": op, "point": [v[0], v[1], v[2]], "q": e }));
        }
    }
    let limit = cfg.thresholds.equilibrium_factor * q.tolerance;
    Ok(StudyOutput {
        csv_version: "conserve/1".into(),
        csv,
        checks: vec![
            Check::at_most("boltzmann_conservation_over_scale", worst[0], tol),
            Check::at_most("landau_conservation_over_scale", worst[1], tol),
            Check::at_most("boltzmann_sup_q_mu_mu", sup_eq[0], limit),
            Check::at_most("landau_sup_q_mu_mu", sup_eq[1], limit),
        ],
        results: json!({ "kernel": p, "conservation": json_rows, "equilibrium": eq_rows }),
    })
}

// ---------------------------------------------------------------------------

fn grazing(cfg: &StudyConfig) -> Result<StudyOutput> {
    let pts = cfg.points.resolve(cfg.seed);
    let th = &cfg.thresholds;
    let mut csv = String::from("gamma,s,one_minus_s,error,error_estimate,leading,u2,remainder\n");
    let mut checks = Vec::new();
    let mut reports: Vec<RateReport> = Vec::new();
    for &gamma in &cfg.sweep.gamma {
        let r = convergence_study(gamma, &cfg.fields.g, &cfg.fields.h, &pts, &cfg.sweep.s, &cfg.quadrature)?;
        for row in &r.rows {
            writeln!(
                csv,
                "{gamma:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                row.s, row.one_minus_s, row.error, row.error_estimate, row.leading, row.u2, row.remainder
            )
            .unwrap();
        }
        checks.push(Check::at_least(format!("gamma={gamma}:fitted_slope"), r.fitted_slope, th.slope_min));
        checks.push(Check::at_most(format!("gamma={gamma}:fit_residual"), r.fit_residual, th.fit_residual_max));
        checks.push(Check::at_most(format!("gamma={gamma}:degenerate"), r.degenerate as u8 as f64, 0.0));
        reports.push(r);
    }
    Ok(StudyOutput { csv_version: "rate/1".into(), csv, checks, results: json!({ "rate_reports": reports }) })
}

// ---------------------------------------------------------------------------

fn spectrum(cfg: &StudyConfig) -> Result<StudyOutput> {
    let p = cfg.kernel.params()?;
    let th = &cfg.thresholds;
    let basis = GalerkinBasis::new(cfg.galerkin.degree)?;
    let op = Operator::Boltzmann(p);
    let (_, rep) = assemble_l_matrix(&op, &basis, &cfg.galerkin.rules)?;
    let n = rep.basis_size as f64;
    let mut csv = String::from("index,eigenvalue,error_bound,kernel\n");
    for (i, ev) in rep.eigenvalues.iter().enumerate() {
        // Weyl: |Δλ| ≤ ‖ΔM‖₂ ≤ n · max entry change
        writeln!(csv, "{i},{ev:e},{:e},{}", n * rep.matrix_error, (i < rep.kernel_count) as u8).unwrap();
    }
    let kernel_max = rep.eigenvalues[..rep.kernel_count].iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let above_min = rep.eigenvalues[rep.kernel_count..].iter().copied().fold(f64::INFINITY, f64::min);
    // lowest nontrivial mode: the smaller of the two lowest Burnett quotients
    let quotients = burnett_polys()
        .into_iter()
        .filter(|(_, n, l, _)| (*n, *l) == (1, 1) || (*n, *l) == (2, 0))
        .map(|(label, _, _, poly)| Ok((label, rayleigh_quotient(&op, &poly, &oracle_config())?)))
        .collect::<Result<Vec<_>>>()?;
    let lowest = quotients.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let scaling = gap_scaling(p.gamma, &cfg.sweep.s, &basis, &cfg.galerkin.rules)?;
    let checks = vec![
        Check { name: "kernel_count".into(), value: rep.kernel_count as f64, relation: "==", threshold: 5.0, pass: rep.kernel_count == 5 },
        Check::at_most("kernel_over_gap", kernel_max / rep.gap, th.kernel_rel),
        Check::at_least("min_nonkernel_eigenvalue", above_min, f64::MIN_POSITIVE),
        Check::at_most("gap_vs_quotient_rel", (rep.gap - lowest).abs() / lowest, th.quotient_rel),
        Check::at_least("gap_over_moment_min", scaling.min_ratio, f64::MIN_POSITIVE),
        Check::at_least("gap_over_moment_fitted_c", scaling.fitted_c, f64::MIN_POSITIVE),
    ];
    let q_json: Vec<Value> = quotients.iter().map(|(l, q)| json!({ "mode": l, "quotient": q })).collect();
    Ok(StudyOutput {
        csv_version: "spectrum/1".into(),
        csv,
        checks,
        results: json!({ "spectrum": rep, "quotients": q_json, "gap_scaling": scaling }),
    })
}

// ---------------------------------------------------------------------------

fn seeded_data(seed: u64, n: usize, size: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = kernel_orthogonal(&c);
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter().map(|x| x * size / norm).collect()
}

fn relax(cfg: &StudyConfig) -> Result<StudyOutput> {
    let p = cfg.kernel.params()?;
    let r = &cfg.relax;
    let th = &cfg.thresholds;
    let rules = &cfg.galerkin.rules;
    let basis = GalerkinBasis::new(cfg.galerkin.degree)?;
    let n = basis.len();
    let tb = precompute_tensors(&Operator::Boltzmann(p), &basis, rules)?;
    let tl = precompute_tensors(&Operator::Landau { gamma: p.gamma }, &basis, rules)?;
    let gap = tb.spectrum.gap;
    let opts = RelaxOptions { t_end: r.t_end / gap, dt: r.dt / gap, sample_every: r.sample_every, grid_points: r.grid_points, grid_half: r.grid_half };
    let f0 = seeded_data(cfg.seed, n, r.amplitude);

    let zero = integrate(&tb, &basis, &vec![0.0; n], &opts)?;
    let zero_max = zero.coeffs.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));

    let trace = integrate(&tb, &basis, &f0, &opts)?;

    let pairs = eigenpairs(&tb.l);
    let mode = &pairs.iter().min_by(|a, b| (a.0 - gap).abs().total_cmp(&(b.0 - gap).abs())).expect("nonempty").1;
    let noise = seeded_data(cfg.seed.wrapping_add(1), n, 0.05);
    let mut fd: Vec<f64> = mode.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let nd = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
    fd.iter_mut().for_each(|x| *x *= r.decay_amplitude / nd);
    let decay_trace = integrate(&tb, &basis, &fd, &RelaxOptions::for_gap(gap))?;
    let rate = decay_trace.decay_rate(r.decay_window[0] / gap, r.decay_window[1] / gap);

    let order = observed_order(&tb, &f0, r.order_t_end / gap, r.order_dt / gap);
    let cmp = compare_with(&tl, p.gamma, &cfg.sweep.s, &f0, &opts, &basis, rules)?;

    let checks = vec![
        Check::at_most("zero_data_max_coefficient", zero_max, 0.0),
        Check::at_most("kernel_drift", trace.max_drift(), th.drift_max),
        Check::at_most("decay_rate_vs_gap_rel", (rate - gap).abs() / gap, th.decay_rel),
        Check::at_least("rk4_observed_order", order, th.order_min),
        Check::at_least("trajectory_fitted_slope", cmp.fitted_slope, th.slope_min),
    ];
    Ok(StudyOutput {
        csv_version: TRACE_CSV_VERSION.into(),
        csv: trace.to_csv(),
        checks,
        results: json!({
            "kernel": p,
            "spectrum": tb.spectrum,
            "tensor_conservation_defect": tb.t.conservation_defect(),
            "tensor_norm": tb.t.norm(),
            "lyapunov_radius": tb.lyapunov_radius(),
            "initial_norm": r.amplitude,
            "positivity_violated": trace.positivity_violated(),
            "min_density": trace.min_density.iter().copied().fold(f64::INFINITY, f64::min),
            "final_state": trace.last(),
            "decay_rate": rate,
            "observed_order": order,
            "comparison": cmp,
            "comparison_csv_version": COMPARISON_CSV_VERSION,
            "comparison_csv": cmp.to_csv(),
        }),
    })
}

// ---------------------------------------------------------------------------

fn identities(cfg: &StudyConfig) -> Result<StudyOutput> {
    let rep = identity_suite(cfg.identities.samples, cfg.seed, cfg.thresholds.identity_rel)?;
    debug_assert!(rep.to_csv().starts_with(IDENTITY_CSV_HEADER));
    let checks = rep.summary.iter().map(|s| Check::at_most(format!("{}:max_rel_residual", s.identity), s.max_rel_residual, rep.tolerance)).collect();
    Ok(StudyOutput { csv_version: IDENTITY_CSV_VERSION.into(), csv: rep.to_csv(), checks, results: json!({ "summary": rep.summary, "rows": rep.rows }) })
}
