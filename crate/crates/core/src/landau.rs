//! The Landau operator with a^γ(z) = π|z|^{γ+2}(I − ẑẑ).
//!
//! Pointwise values use the non-divergence form
//! (a^γ * g):∇²h − (a^γ *: ∇²g) h, so the kernel is never differentiated.

use crate::boltzmann::{Estimate, EvalConfig, TestFunction};
use crate::error::{Error, Result};
use crate::field::SmoothField;
use crate::geometry::{build_radial_rule, DirectionRule, Mat3, Vec3};
use crate::quadrature;
use rayon::prelude::*;
use std::f64::consts::PI;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > -5.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("Landau exponent gamma = {gamma} must exceed -5")));
    }
    Ok(())
}

/// a^γ(z) = π|z|^{γ+2}(I − z⊗z/|z|²).
pub fn landau_matrix(gamma: f64, z: &Vec3) -> Result<Mat3> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singular("Landau matrix at z = 0".into()));
    }
    let e = z / r;
    Ok(PI * r.powf(gamma + 2.0) * (Mat3::identity() - e * e.transpose()))
}

/// Pointwise Landau evaluation at one quadrature level.
pub struct LandauPlan {
    pub gamma: f64,
    pub cfg: EvalConfig,
}

impl LandauPlan {
    pub fn new(gamma: f64, cfg: &EvalConfig) -> Result<LandauPlan> {
        check_gamma(gamma)?;
        if !cfg.dir_phi.is_multiple_of(2) || cfg.dir_phi == 0 || cfg.dir_theta == 0 || !(cfg.r_max > 0.0) {
            return Err(Error::Spec("invalid direction rule or radius".into()));
        }
        Ok(LandauPlan { gamma, cfg: cfg.clone() })
    }

    /// (a^γ * g)(v) and (a^γ *: ∇²g)(v).
    pub fn convolutions(&self, g: &SmoothField, v: &Vec3) -> Result<(Mat3, f64)> {
        let shells = build_radial_rule(self.gamma, self.cfg.r_max + v.norm(), &self.cfg.radial)?;
        let axis = v - crate::boltzmann::mass_centre(g);
        let sharp = g.max_width();
        let cells: Vec<(Mat3, f64)> = (0..shells.rule.len())
            .into_par_iter()
            .map(|k| {
                let rho = shells.rule.x[k];
                let wr = shells.rule.w[k] * PI * rho.powf(self.gamma + 4.0);
                let dirs = DirectionRule::peaked_along(&axis, 2.0 * sharp * rho * axis.norm(), self.cfg.dir_theta, self.cfg.dir_phi);
                let mut m = Mat3::zeros();
                let mut c = 0.0;
                for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                    let (gv, _, hg) = g.value_grad_hess(&(v - rho * om));
                    let proj = Mat3::identity() - om * om.transpose();
                    m += (wd * gv) * proj;
                    c += wd * (hg.trace() - om.dot(&(hg * om)));
                }
                (wr * m, wr * c)
            })
            .collect();
        let mut m = Mat3::zeros();
        let mut c = 0.0;
        for (a, b) in cells {
            m += a;
            c += b;
        }
        Ok((m, c))
    }

    pub fn value(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<f64> {
        let (ag, ahg) = self.convolutions(g, v)?;
        let (hv, _, hh) = h.value_grad_hess(v);
        Ok(ag.component_mul(&hh).sum() - ahg * hv)
    }
}

pub struct LandauEvaluator {
    pub coarse: LandauPlan,
    pub fine: LandauPlan,
}

impl LandauEvaluator {
    pub fn new(gamma: f64, cfg: &EvalConfig) -> Result<LandauEvaluator> {
        Ok(LandauEvaluator { coarse: LandauPlan::new(gamma, cfg)?, fine: LandauPlan::new(gamma, &cfg.refined())? })
    }

    pub fn eval(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<Estimate> {
        let a = self.coarse.value(g, h, v)?;
        let b = self.fine.value(g, h, v)?;
        Ok(Estimate::from_levels(a, b, self.coarse.cfg.tolerance))
    }
}

/// Q_L^γ(g, h)(v) with a two-level error estimate.
pub fn eval_ql(gamma: f64, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    LandauEvaluator::new(gamma, cfg)?.eval(g, h, v)
}

pub fn eval_ql_many(gamma: f64, g: &SmoothField, h: &SmoothField, points: &[Vec3], cfg: &EvalConfig) -> Result<Vec<Estimate>> {
    let ev = LandauEvaluator::new(gamma, cfg)?;
    points.iter().map(|v| ev.eval(g, h, v)).collect()
}

fn test_grad_hess(phi: &TestFunction, v: &Vec3) -> (Vec3, Mat3) {
    match phi {
        TestFunction::Field(f) => {
            let (_, d, h) = f.value_grad_hess(v);
            (d, h)
        }
        TestFunction::Poly(p) => {
            let mut d = Vec3::zeros();
            let mut h = Mat3::zeros();
            for i in 0..3 {
                let mut e = [0; 3];
                e[i] = 1;
                d[i] = p.partial(e, v);
                for j in 0..3 {
                    let mut e = [0; 3];
                    e[i] += 1;
                    e[j] += 1;
                    h[(i, j)] = p.partial(e, v);
                }
            }
            (d, h)
        }
    }
}

/// ⟨Q_L(g, h), φ⟩ = ∫∫ g_* h [a(u):∇²φ − 4π|u|^γ u·∇φ] dv dv_*, u = v − v_*,
/// with Σ|node contributions|.
///
/// The direction rule is antipodal, so the odd drift term is paired across
/// u ↔ −u and integrable down to γ > −5.
pub fn weak_ql_with_scale(gamma: f64, g: &SmoothField, h: &SmoothField, phi: &TestFunction, cfg: &EvalConfig) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    if g.terms.is_empty() || h.terms.is_empty() {
        return Ok((0.0, 0.0));
    }
    let dirs = DirectionRule::product(cfg.dir_theta, cfg.dir_phi);
    let beta = g.min_width() + h.min_width();
    let mut c = Vec3::zeros();
    let mut n = 0.0;
    for t in g.terms.iter().chain(&h.terms) {
        c += t.width * Vec3::from(t.center);
        n += t.width;
    }
    let c = c / n;
    let gh = quadrature::gauss_hermite(cfg.n_hermite);
    let sc = beta.powf(-0.5);
    let mut vnodes = Vec::new();
    for (x0, w0) in gh.x.iter().zip(&gh.w) {
        for (x1, w1) in gh.x.iter().zip(&gh.w) {
            for (x2, w2) in gh.x.iter().zip(&gh.w) {
                let y = Vec3::new(*x0, *x1, *x2);
                vnodes.push((c + sc * y, w0 * w1 * w2 * sc.powi(3) * y.norm_squared().exp()));
            }
        }
    }
    let ur = build_radial_rule(gamma, 2.0 * cfg.r_max, &cfg.radial)?;
    let cells: Vec<(f64, f64)> = (0..ur.rule.len())
        .into_par_iter()
        .map(|k| {
            let r = ur.rule.x[k];
            let wr = ur.rule.w[k] * r * r;
            let ra = PI * r.powf(gamma + 2.0);
            let rb = 4.0 * PI * r.powf(gamma + 1.0);
            let mut acc = 0.0;
            let mut abs = 0.0;
            for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                let u = r * om;
                for (big_v, wv) in &vnodes {
                    let v = big_v + 0.5 * u;
                    let weight = g.eval(&(big_v - 0.5 * u)) * h.eval(&v);
                    if weight == 0.0 {
                        continue;
                    }
                    let (d, hs) = test_grad_hess(phi, &v);
                    let t = ra * (hs.trace() - om.dot(&(hs * om))) - rb * om.dot(&d);
                    let x = wd * wv * weight * t;
                    acc += x;
                    abs += x.abs();
                }
            }
            (wr * acc, wr * abs)
        })
        .collect();
    let mut out = (0.0, 0.0);
    for (a, b) in cells {
        out.0 += a;
        out.1 += b;
    }
    Ok(out)
}

pub fn weak_ql(gamma: f64, g: &SmoothField, h: &SmoothField, phi: &TestFunction, cfg: &EvalConfig) -> Result<Estimate> {
    let a = weak_ql_with_scale(gamma, g, h, phi, cfg)?.0;
    let b = weak_ql_with_scale(gamma, g, h, phi, &cfg.refined())?.0;
    Ok(Estimate::from_levels(a, b, cfg.tolerance))
}

/// Divergence-form evaluation for cross-checks: central differences of the flux
/// ∫ a(v − v_*)[g_* ∇h − h ∇g_*] dv_*, each flux on its own plain
/// spherical rule centred at the point.
pub mod oracle {
    use super::*;

    pub fn flux(gamma: f64, g: &SmoothField, h: &SmoothField, x: &Vec3) -> Result<Vec3> {
        check_gamma(gamma)?;
        let mut radial = quadrature::geometric_to_zero(1.0, 0.25, 8, 12, gamma + 4.0);
        radial.append(quadrature::composite(1.0, 12.0 + x.norm(), &[], 1.0, 12));
        let dirs = DirectionRule::product(32, 32);
        let (hv, dh) = h.value_grad(x);
        let mut f = Vec3::zeros();
        for (&r, &wr) in radial.x.iter().zip(&radial.w) {
            let mut acc = Vec3::zeros();
            for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                let (gs, dg) = g.value_grad(&(x - r * om));
                let q = gs * dh - hv * dg;
                acc += wd * (q - om * om.dot(&q));
            }
            f += wr * PI * r.powf(gamma + 4.0) * acc;
        }
        Ok(f)
    }

    pub fn divergence_form(gamma: f64, g: &SmoothField, h: &SmoothField, v: &Vec3, step: f64) -> Result<f64> {
        let mut div = 0.0;
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = step;
            let fp = flux(gamma, g, h, &(v + e))?;
            let fm = flux(gamma, g, h, &(v - e))?;
            let fp2 = flux(gamma, g, h, &(v + 2.0 * e))?;
            let fm2 = flux(gamma, g, h, &(v - 2.0 * e))?;
            div += (8.0 * (fp[i] - fm[i]) - (fp2[i] - fm2[i])) / (12.0 * step);
        }
        Ok(div)
    }
}
