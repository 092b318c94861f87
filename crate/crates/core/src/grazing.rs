//! Q_B = 2^{s−1} Q_L + E₂ + E₃ and the O(1−s) rate studies built on it.
//!
//! E₂ is the U₂ term, with U₂(z) = (¾ z⊗z − ¼|z|²I)·m₄(s)·|z|^γ and m₄ the sin⁴
//! moment. E₃ is defined by subtraction; [`r1_direct`] integrates it from the
//! Taylor remainder as an independent check.

use crate::boltzmann::{mass_centre, BoltzmannPlan, Estimate, EvalConfig, Evaluator};
use crate::error::{Error, Result};
use crate::field::SmoothField;
use crate::geometry::{build_radial_rule, DirectionRule, Mat3, Vec3};
use crate::kernel::{self, KernelParams};
use crate::landau::LandauEvaluator;
use crate::stats::{fit_loglog, LineFit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// U₂(z) for the kernel (s, γ).
pub fn u2_matrix(s: f64, gamma: f64, z: &Vec3) -> Result<Mat3> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singular("U2 at z = 0".into()));
    }
    let m4 = kernel::sin4_moment(s)?;
    Ok(m4 * r.powf(gamma) * (0.75 * z * z.transpose() - 0.25 * r * r * Mat3::identity()))
}

/// One quadrature level of ∫ U₂(v − v_*) : (∇_v − ∇_{v_*})²(g_* h) dv_*.
pub fn u2_level(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<f64> {
    if !(params.gamma > -5.0) {
        return Err(Error::Domain(format!("gamma = {} must exceed -5", params.gamma)));
    }
    let m4 = kernel::sin4_moment(params.s)?;
    let shells = build_radial_rule(params.gamma, cfg.r_max + v.norm(), &cfg.radial)?;
    let (hv, dh, hh) = h.value_grad_hess(v);
    let axis = v - mass_centre(g);
    let sharp = g.max_width();
    let cells: Vec<f64> = (0..shells.rule.len())
        .into_par_iter()
        .map(|k| {
            let rho = shells.rule.x[k];
            let dirs = DirectionRule::peaked_along(&axis, 2.0 * sharp * rho * axis.norm(), cfg.dir_theta, cfg.dir_phi);
            let mut acc = 0.0;
            for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                let (gs, dg, hg) = g.value_grad_hess(&(v - rho * om));
                let cross = dg * dh.transpose();
                let x = hg * hv - cross - cross.transpose() + gs * hh;
                acc += wd * (0.75 * om.dot(&(x * om)) - 0.25 * x.trace());
            }
            shells.rule.w[k] * m4 * rho.powf(params.gamma + 4.0) * acc
        })
        .collect();
    Ok(cells.iter().sum())
}

pub fn u2_term(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    let a = u2_level(params, g, h, v, cfg)?;
    let b = u2_level(params, g, h, v, &cfg.refined())?;
    Ok(Estimate::from_levels(a, b, cfg.tolerance))
}

/// E₃ = ∫∫ B R₁ dσ dv_* by direct quadrature, R₁ being g′_* h′ − g_* h minus
/// its first and second order Taylor terms in A = 2(v′ − v). One level only.
pub fn r1_direct(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<f64> {
    let plan = BoltzmannPlan::new(params, cfg)?;
    let ang = &plan.angular;
    let shells = plan.shells(v)?;
    let (hv, dh, hh) = h.value_grad_hess(v);
    let axis = v - mass_centre(g);
    let sharp = g.max_width();
    let cells: Vec<f64> = (0..shells.rule.len())
        .into_par_iter()
        .map(|k| {
            let rho = shells.rule.x[k];
            let dirs = DirectionRule::peaked_along(&axis, 2.0 * sharp * rho * axis.norm(), cfg.dir_theta, cfg.dir_phi);
            let mut offs = Vec::with_capacity(ang.n_sigma);
            let mut acc = 0.0;
            for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                let vs = v - rho * om;
                let (gs, dg, hg) = g.value_grad_hess(&vs);
                ang.offsets_around(om, &mut offs);
                let mut sum = 0.0;
                for (hd, w) in offs.iter().zip(&ang.w) {
                    // A = 2d
                    let d = rho * hd;
                    let (a_h, a_g) = (dh.dot(&d), dg.dot(&d));
                    let first = gs * a_h - hv * a_g;
                    let second = 0.5 * (gs * d.dot(&(hh * d)) + hv * d.dot(&(hg * d))) - a_h * a_g;
                    sum += w * (g.eval(&(vs - d)) * h.eval(&(v + d)) - gs * hv - first - second);
                }
                acc += wd * sum;
            }
            shells.rule.w[k] * rho.powf(params.gamma + 2.0) * acc
        })
        .collect();
    Ok(cells.iter().sum())
}

/// Q_B(g, h)(v) split as leading + u2_term + remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub s: f64,
    pub gamma: f64,
    /// Q_B(g, h)(v) with its estimate
    pub q: Estimate,
    /// 2^{s−1} Q_L(g, h)(v)
    pub leading: f64,
    pub u2_term: f64,
    pub remainder: f64,
}

impl DecompositionResult {
    /// (leading + u2_term) + remainder, equal to `q.value` bit for bit.
    pub fn total(&self) -> f64 {
        (self.leading + self.u2_term) + self.remainder
    }
}

/// r with (a + r) == q exactly when one exists next to q − a. When |q − a|
/// is much larger than |q| the grid of a + r is coarser than q's and no such
/// r exists; the closest r is returned.
fn telescope(a: f64, q: f64) -> f64 {
    let mut r = q - a;
    for _ in 0..64 {
        let t = a + r;
        if t == q {
            break;
        }
        let next = if t < q { r.next_up() } else { r.next_down() };
        if ((a + next) - q).abs() > (t - q).abs() {
            break;
        }
        r = next;
    }
    r
}

/// Decomposition at v from precomputed Boltzmann and Landau estimates.
///
/// If the three-term sum cannot land on q exactly, the reported Q_B value is
/// moved to the sum (a shift of an ulp of the largest term) and the shift is
/// added to its error estimate.
pub fn decompose_with(params: &KernelParams, mut q: Estimate, landau: f64, u2: f64) -> DecompositionResult {
    let leading = 2f64.powf(params.s - 1.0) * landau;
    let remainder = telescope(leading + u2, q.value);
    let total = (leading + u2) + remainder;
    if total != q.value {
        q.error += (total - q.value).abs();
        q.value = total;
    }
    DecompositionResult { s: params.s, gamma: params.gamma, q, leading, u2_term: u2, remainder }
}

pub fn decompose(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<DecompositionResult> {
    let q = Evaluator::new(params, cfg)?.eval(g, h, v)?;
    let l = LandauEvaluator::new(params.gamma, cfg)?.eval(g, h, v)?;
    let u2 = u2_term(params, g, h, v, cfg)?;
    Ok(decompose_with(params, q, l.value, u2.value))
}

/// What Q_B is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Landau,
    /// 2^{s−1} Q_L
    ScaledLandau,
}

/// One s of a rate study, with the decomposition at the worst sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub s: f64,
    pub one_minus_s: f64,
    /// max over sample points of |Q_B − reference|
    pub error: f64,
    /// quadrature estimate of that difference (both operators, two levels)
    pub error_estimate: f64,
    pub worst_point: usize,
    pub leading: f64,
    pub u2: f64,
    pub remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub gamma: f64,
    pub reference: Reference,
    pub s_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub rows: Vec<RateRow>,
    pub fitted_slope: f64,
    pub fit_intercept: f64,
    pub fit_residual: f64,
    /// every error sits within ten quadrature estimates of zero
    pub degenerate: bool,
}

pub const RATE_CSV_HEADER: &str = "s,one_minus_s,error,leading,u2,remainder";

impl RateReport {
    pub fn fit(&self) -> LineFit {
        LineFit { slope: self.fitted_slope, intercept: self.fit_intercept, residual: self.fit_residual }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RATE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.s, r.one_minus_s, r.error, r.leading, r.u2, r.remainder
            ));
        }
        out
    }

    /// E(s) strictly decreasing along the sweep.
    pub fn monotone(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn convergence_study(
    gamma: f64,
    g: &SmoothField,
    h: &SmoothField,
    points: &[Vec3],
    s_list: &[f64],
    cfg: &EvalConfig,
) -> Result<RateReport> {
    convergence_study_against(gamma, g, h, points, s_list, cfg, Reference::Landau)
}

/// Sup over `points` of |Q_B^{s,γ} − reference| for each s, and the log-log fit
/// against 1 − s.
pub fn convergence_study_against(
    gamma: f64,
    g: &SmoothField,
    h: &SmoothField,
    points: &[Vec3],
    s_list: &[f64],
    cfg: &EvalConfig,
    reference: Reference,
) -> Result<RateReport> {
    if s_list.len() < 4 {
        return Err(Error::Spec("a rate study needs at least 4 values of s".into()));
    }
    if s_list.iter().any(|&s| !(s > 0.0 && s < 1.0)) || s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Spec("s values must increase strictly inside (0, 1)".into()));
    }
    if points.is_empty() {
        return Err(Error::Spec("no sample points".into()));
    }
    let landau = LandauEvaluator::new(gamma, cfg)?;
    let ql: Vec<Estimate> = points.iter().map(|v| landau.eval(g, h, v)).collect::<Result<_>>()?;
    let rows: Vec<RateRow> = s_list
        .par_iter()
        .map(|&s| -> Result<RateRow> {
            let params = KernelParams::operator(s, gamma, 1.0)?;
            let ev = Evaluator::new(&params, cfg)?;
            let mut worst: Option<(usize, f64, f64, Estimate)> = None;
            for (i, v) in points.iter().enumerate() {
                let q = ev.eval(g, h, v)?;
                let target = match reference {
                    Reference::Landau => ql[i].value,
                    Reference::ScaledLandau => 2f64.powf(s - 1.0) * ql[i].value,
                };
                let e = (q.value - target).abs();
                if worst.is_none_or(|w| e > w.1) {
                    worst = Some((i, e, q.error + ql[i].error, q));
                }
            }
            let (i, e, est, q) = worst.expect("points are non-empty");
            let u2 = u2_term(&params, g, h, &points[i], cfg)?;
            let d = decompose_with(&params, q, ql[i].value, u2.value);
            Ok(RateRow {
                s,
                one_minus_s: 1.0 - s,
                error: e,
                error_estimate: est + u2.error,
                worst_point: i,
                leading: d.leading,
                u2: d.u2_term,
                remainder: d.remainder,
            })
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let oms: Vec<f64> = rows.iter().map(|r| r.one_minus_s).collect();
    let degenerate = rows.iter().all(|r| r.error <= 10.0 * r.error_estimate);
    let fit = if errors.iter().all(|&e| e > 0.0) {
        fit_loglog(&oms, &errors)
    } else {
        LineFit { slope: f64::NAN, intercept: f64::NAN, residual: f64::NAN }
    };
    Ok(RateReport {
        gamma,
        reference,
        s_values: s_list.to_vec(),
        errors,
        rows,
        fitted_slope: fit.slope,
        fit_intercept: fit.intercept,
        fit_residual: fit.residual,
        degenerate: degenerate || fit.slope.is_nan(),
    })
}
