//! Acceptance criteria, one PASS/FAIL line each. Runs sequentially.

use grazing_cli::config::{from_table, StudyConfig};
use grazing_cli::studies::{run_study, Check, StudyOutput};
use grazing_core::boltzmann::{cancellation_pair, EvalConfig};
use grazing_core::field::{Poly, SmoothField};
use grazing_core::grazing::{decompose, u2_matrix};
use grazing_core::{KernelParams, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::time::Instant;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(kind: &str) -> StudyConfig {
    from_table(format!("kind = \"{kind}\"").parse().unwrap()).unwrap()
}

fn study(kind: &str) -> Result<StudyOutput, String> {
    run_study(&config(kind)).map_err(|e| e.to_string())
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let shown: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:.3e} (want {} {:.1e})", c.name, c.value, c.relation, c.threshold)).collect();
    (pass, if pass { format!("{} checks", checks.len()) } else { shown.join("; ") })
}

fn from_study(kind: &str, budget_s: f64, t: Instant, extra: impl Fn(&StudyOutput) -> String) -> Outcome {
    match study(kind) {
        Ok(out) => {
            let (pass, detail) = summarize(&out.checks);
            let secs = t.elapsed().as_secs_f64();
            let within = secs < budget_s;
            Outcome { pass: pass && within, detail: format!("{detail}; {}; {secs:.1} s (budget {budget_s} s)", extra(&out)) }
        }
        Err(e) => Outcome { pass: false, detail: e },
    }
}

fn check_value(out: &StudyOutput, name: &str) -> f64 {
    out.checks.iter().find(|c| c.name == name).map(|c| c.value).unwrap_or(f64::NAN)
}

fn c1() -> Outcome {
    let t = Instant::now();
    from_study("identities", 10.0, t, |o| format!("{} rows", o.csv.lines().count() - 1))
}

fn isotropic(width: f64, quad: f64) -> SmoothField {
    let p = Poly::from_pairs(&[([0, 0, 0], 1.0), ([2, 0, 0], quad), ([0, 2, 0], quad), ([0, 0, 2], quad)]).unwrap();
    SmoothField::gaussian(1.0, p, width, Vec3::zeros()).unwrap()
}

fn c2() -> Outcome {
    let t = Instant::now();
    let mut cfg = EvalConfig { dir_theta: 16, dir_phi: 8, ..Default::default() };
    cfg.radial.per_panel = 8;
    let pairs = [(isotropic(0.5, 0.0), isotropic(0.5, 0.0)), (isotropic(0.5, 0.0), isotropic(1.0, 0.5)), (isotropic(0.6, 0.3), isotropic(0.4, 0.0))];
    let mut worst = 0.0f64;
    for (s, gamma, eta) in [(0.5, 0.0, 1.0), (0.9, -2.0, 0.7), (0.3, -1.0, 0.5)] {
        let p = KernelParams::new(s, gamma, eta).unwrap();
        for (g, h) in &pairs {
            match cancellation_pair(&p, g, h, &cfg) {
                Ok((a, b)) => worst = worst.max((a - b).abs() / a.abs().max(b.abs())),
                Err(e) => return Outcome { pass: false, detail: e.to_string() },
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome { pass: worst <= 1e-4 && secs < 120.0, detail: format!("9 cases, max rel {worst:.2e} (want <= 1e-4); {secs:.1} s (budget 120 s)") }
}

fn c3() -> Outcome {
    let t = Instant::now();
    from_study("conserve", 300.0, t, |o| {
        format!("sup|Q_B(mu,mu)| = {:.2e}, sup|Q_L(mu,mu)| = {:.2e}", check_value(o, "boltzmann_sup_q_mu_mu"), check_value(o, "landau_sup_q_mu_mu"))
    })
}

fn c4() -> Outcome {
    let t = Instant::now();
    // 30 min on 8 workers; this machine may have fewer
    from_study("grazing", 8.0 * 1800.0, t, |o| {
        format!("slopes gamma=0: {:.3}, gamma=-2: {:.3}", check_value(o, "gamma=0:fitted_slope"), check_value(o, "gamma=-2:fitted_slope"))
    })
}

fn c5() -> Outcome {
    let g = SmoothField::gaussian(1.0, Poly::constant(1.0), 0.5, Vec3::new(0.2, 0.0, 0.0)).unwrap();
    let h = SmoothField::gaussian(1.0, Poly::from_pairs(&[([0, 0, 0], 1.0), ([0, 1, 0], 0.4)]).unwrap(), 0.7, Vec3::new(0.0, 0.0, 0.3)).unwrap();
    let cfg = EvalConfig::default();
    let v = Vec3::new(0.3, -0.4, 0.5);
    let mut exact = true;
    let mut ratios = Vec::new();
    for s in [0.9, 0.95, 0.975] {
        let p = KernelParams::new(s, 0.0, 1.0).unwrap();
        match decompose(&p, &g, &h, &v, &cfg) {
            Ok(d) => {
                exact &= d.leading + d.u2_term + d.remainder == d.q.value;
                ratios.push(d.u2_term / (1.0 - s));
            }
            Err(e) => return Outcome { pass: false, detail: e.to_string() },
        }
    }
    let last = (ratios[2] - ratios[1]).abs() / ratios[2].abs();
    let first = (ratios[1] - ratios[0]).abs() / ratios[1].abs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_trace = 0.0f64;
    for _ in 0..1000 {
        let z = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let u = u2_matrix(rng.gen_range(0.05..0.99), rng.gen_range(-4.5..1.0), &z).unwrap();
        worst_trace = worst_trace.max(u.trace().abs() / (f64::EPSILON * u.norm()));
    }
    Outcome {
        pass: exact && last < 0.05 && last < first && worst_trace <= 4.0,
        detail: format!(
            "telescoping exact: {exact}; u2/(1-s) last change {:.2}% (prev {:.2}%); max |tr U2| = {worst_trace:.1} eps·|U2|",
            100.0 * last,
            100.0 * first
        ),
    }
}

fn c6() -> Outcome {
    let t = Instant::now();
    from_study("spectrum", 1200.0, t, |o| {
        format!("gap = {:.6}, rel to quotient {:.1e}, min gap/M(s) = {:.3}", check_value(o, "min_nonkernel_eigenvalue"), check_value(o, "gap_vs_quotient_rel"), check_value(o, "gap_over_moment_min"))
    })
}

fn c7() -> Outcome {
    let t = Instant::now();
    from_study("relax", 1800.0, t, |o| {
        format!(
            "drift {:.1e}, decay rel {:.1e}, order {:.2}, trajectory slope {:.3}",
            check_value(o, "kernel_drift"),
            check_value(o, "decay_rate_vs_gap_rel"),
            check_value(o, "rk4_observed_order"),
            check_value(o, "trajectory_fitted_slope")
        )
    })
}

fn c8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for kind in ["identities", "relax"] {
        let cfg_path = dir.path().join(format!("{kind}.toml"));
        std::fs::write(&cfg_path, format!("kind = \"{kind}\"\nseed = 7\n")).unwrap();
        let mut files = Vec::new();
        for workers in ["1", "4"] {
            let out = dir.path().join(format!("{kind}-{workers}"));
            let status = Command::new(env!("CARGO_BIN_EXE_grazing"))
                .args(["run", cfg_path.to_str().unwrap(), "--workers", workers, "--out", out.to_str().unwrap()])
                .status()
                .unwrap();
            pass &= status.code() == Some(0);
            files.push((std::fs::read(out.join("data.csv")).unwrap_or_default(), std::fs::read(out.join("report.json")).unwrap_or_default()));
        }
        let same_csv = !files[0].0.is_empty() && files[0].0 == files[1].0;
        let same_json = !files[0].1.is_empty() && files[0].1 == files[1].1;
        pass &= same_csv && same_json;
        notes.push(format!("{kind}: data.csv identical {same_csv}, report.json identical {same_json}"));
    }
    Outcome { pass, detail: format!("--workers 1 vs 4: {}", notes.join("; ")) }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("closed-form identity suite", c1),
        ("cancellation-lemma equivalence", c2),
        ("conservation and equilibrium", c3),
        ("grazing rate, operator level", c4),
        ("decomposition telescoping and U2", c5),
        ("spectrum at gamma = 0, D = 4", c6),
        ("relaxation", c7),
        ("reproducibility across worker counts", c8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("acceptance {} {}: {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
