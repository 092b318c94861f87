//! Pointwise and weak evaluation of the scaled non-cutoff Boltzmann operator.
//!
//! Pointwise values integrate over shells v_* = v − ρω. Every angular integrand
//! is Taylor-compensated so it is O(sin²(θ/2)), and the first-order terms are
//! put back through the exact moment M(s). The loss/gain difference in g is
//! split by ψ_η: near the diagonal it is compensated directly, away from it the
//! cancellation kernel S^η takes over.

use crate::error::{Error, Result};
use crate::field::{Poly, SmoothField};
use crate::geometry::{
    build_radial_rule, build_sphere_rule, AngularWeight, DirectionRule, Frame, RadialGrading, RadialQuadrature,
    SphereGrading, Vec3,
};
use crate::kernel::{self, KernelParams, PSI_HI, PSI_LO};
use crate::quadrature;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    #[default]
    Compensated,
    /// Plain g′_*h′ − g_*h integrand; diagnostics only, s < 1/2.
    Naive,
}

/// Kernel-weighted σ-rule settings (s comes from the kernel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSpec {
    pub per_panel: usize,
    pub n_phi: usize,
    pub theta_min: f64,
    pub ratio: f64,
}

impl Default for AngularSpec {
    fn default() -> Self {
        AngularSpec { per_panel: 6, n_phi: 12, theta_min: 1e-3, ratio: 0.35 }
    }
}

impl AngularSpec {
    pub fn grading(&self, s: f64) -> SphereGrading {
        SphereGrading {
            theta_max: PI / 2.0,
            theta_min: self.theta_min,
            ratio: self.ratio,
            per_panel: self.per_panel,
            n_phi: self.n_phi,
            weight: AngularWeight::Kernel { s },
            breakpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub angular: AngularSpec,
    /// Gauss-Legendre nodes in cos of the shell direction
    pub dir_theta: usize,
    /// uniform azimuths of the shell direction (even, for antipodal symmetry)
    pub dir_phi: usize,
    pub radial: RadialGrading,
    /// shell radius beyond the distance from v to the origin
    pub r_max: f64,
    /// Gauss-Hermite nodes per axis for the centre-of-mass variable of weak forms
    pub n_hermite: usize,
    pub tolerance: f64,
    pub regularization: Regularization,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            angular: AngularSpec::default(),
            dir_theta: 12,
            dir_phi: 12,
            radial: RadialGrading {
                per_panel: 10,
                panel_width: 2.5,
                split: 1.0,
                ratio: 0.3,
                levels: 4,
                tail_power: None,
                breakpoints: Vec::new(),
            },
            r_max: 10.0,
            n_hermite: 8,
            tolerance: 1e-6,
            regularization: Regularization::Compensated,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, p: &KernelParams) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !self.dir_phi.is_multiple_of(2) || self.dir_phi == 0 || self.dir_theta == 0 {
            return bad("direction rule needs a positive even azimuth count");
        }
        if !self.angular.n_phi.is_multiple_of(2) || self.angular.n_phi == 0 {
            return bad("sigma rule needs a positive even azimuth count");
        }
        if self.n_hermite == 0 || !(self.r_max > 0.0) {
            return bad("empty rule");
        }
        if self.regularization == Regularization::Naive && p.s >= 0.5 {
            return Err(Error::Domain(format!(
                "naive quadrature diverges for s = {} >= 1/2",
                p.s
            )));
        }
        self.angular.grading(p.s).validate()
    }

    /// The finer level used for error estimates.
    pub fn refined(&self) -> EvalConfig {
        let mut c = self.clone();
        c.angular.per_panel += 4;
        c.angular.n_phi += 4;
        c.dir_theta += 4;
        c.dir_phi += 6;
        c.radial.per_panel += 4;
        c.radial.levels += 2;
        c.n_hermite += 4;
        c
    }
}

/// A value with its two-level error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl Estimate {
    pub fn from_levels(coarse: f64, fine: f64, tolerance: f64) -> Estimate {
        Estimate { value: fine, error: (fine - coarse).abs(), tolerance }
    }

    /// Fails when the estimate exceeds the tolerance (relative to max(1, |value|)).
    pub fn checked(self, what: &str) -> Result<f64> {
        if self.error > self.tolerance * self.value.abs().max(1.0) {
            Err(Error::Tolerance { what: what.to_string(), estimate: self.error, tolerance: self.tolerance })
        } else {
            Ok(self.value)
        }
    }
}

/// σ-rule laid out around every shell direction.
pub struct AngularPlan {
    pub dirs: DirectionRule,
    /// per sphere node: weight (b included)
    pub w: Vec<f64>,
    /// per sphere node: t² = sin²(θ/2)
    pub t2: Vec<f64>,
    /// dir-major (σ − ω)/2 for every direction and sphere node
    pub half_dsigma: Vec<Vec3>,
    /// discrete M(s) of the rule, Σ w sin²(θ/2)
    pub m_rule: f64,
    pub n_sigma: usize,
    trig: Vec<(f64, f64, f64, f64)>,
    dir_theta: usize,
    dir_phi: usize,
}

impl AngularPlan {
    pub fn new(s: f64, spec: &AngularSpec, dir_theta: usize, dir_phi: usize) -> Result<AngularPlan> {
        let sphere = build_sphere_rule(&spec.grading(s))?;
        let dirs = DirectionRule::product(dir_theta, dir_phi);
        let n_sigma = sphere.nodes.len();
        let mut w = Vec::with_capacity(n_sigma);
        let mut t2 = Vec::with_capacity(n_sigma);
        let mut trig = Vec::with_capacity(n_sigma);
        for n in &sphere.nodes {
            w.push(n.weight);
            let t = (0.5 * n.theta).sin();
            t2.push(t * t);
            let (st, ct) = n.theta.sin_cos();
            let (sp, cp) = n.phi.sin_cos();
            trig.push((st, ct, cp, sp));
        }
        let m_rule = w.iter().zip(&t2).map(|(w, t)| w * t).sum();
        let mut half_dsigma = Vec::with_capacity(n_sigma * dirs.len());
        for om in &dirs.dirs {
            let f = Frame::around(*om);
            for &(st, ct, cp, sp) in &trig {
                half_dsigma.push(0.5 * (f.sigma_sc(st, ct, cp, sp) - om));
            }
        }
        Ok(AngularPlan { dirs, w, t2, half_dsigma, m_rule, n_sigma, trig, dir_theta, dir_phi })
    }

    /// Shell directions for radius ρ: a rule peaked along `axis` when
    /// g(v − ρω) is sharply concentrated there.
    pub fn shell_dirs(&self, axis: &Vec3, kappa: f64) -> DirectionRule {
        DirectionRule::peaked_along(axis, kappa, self.dir_theta, self.dir_phi)
    }

    /// (σ − ω)/2 for every sphere node, around direction ω.
    pub fn offsets_around(&self, om: &Vec3, out: &mut Vec<Vec3>) {
        out.clear();
        let f = Frame::around(*om);
        for &(st, ct, cp, sp) in &self.trig {
            out.push(0.5 * (f.sigma_sc(st, ct, cp, sp) - om));
        }
    }

    #[inline]
    pub fn offsets(&self, dir: usize) -> &[Vec3] {
        &self.half_dsigma[dir * self.n_sigma..(dir + 1) * self.n_sigma]
    }
}

/// |coef|·width-weighted centre of the Gaussian terms.
pub fn mass_centre(f: &SmoothField) -> Vec3 {
    let mut c = Vec3::zeros();
    let mut n = 0.0;
    for t in &f.terms {
        let w = t.coef.abs() * t.width;
        c += w * Vec3::from(t.center);
        n += w;
    }
    if n > 0.0 {
        c / n
    } else {
        c
    }
}

/// Precomputed tables for pointwise evaluation at one kernel and one level.
pub struct BoltzmannPlan {
    pub params: KernelParams,
    pub cfg: EvalConfig,
    pub angular: AngularPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QParts {
    pub near: f64,
    pub far: f64,
}

impl QParts {
    pub fn total(&self) -> f64 {
        self.near + self.far
    }
}

impl BoltzmannPlan {
    pub fn new(params: &KernelParams, cfg: &EvalConfig) -> Result<BoltzmannPlan> {
        params.check_operator_grade()?;
        cfg.validate(params)?;
        let angular = AngularPlan::new(params.s, &cfg.angular, cfg.dir_theta, cfg.dir_phi)?;
        Ok(BoltzmannPlan { params: *params, cfg: cfg.clone(), angular })
    }

    /// Shell radii around v, with the cutoff transition as breakpoints.
    pub fn shells(&self, v: &Vec3) -> Result<RadialQuadrature> {
        let mut spec = self.cfg.radial.clone();
        spec.breakpoints.extend(transition_cuts(self.params.eta));
        build_radial_rule(self.params.gamma, self.cfg.r_max + v.norm(), &spec)
    }

    /// Near and far parts of Q(g, h)(v) at this level.
    pub fn parts(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<QParts> {
        let shells = self.shells(v)?;
        let p = &self.params;
        let (hv, dh) = h.value_grad(v);
        let naive = self.cfg.regularization == Regularization::Naive;
        let ang = &self.angular;
        let m = ang.m_rule;
        let axis = v - mass_centre(g);
        let sharp = g.max_width();
        let s_table: Vec<f64> = shells
            .rule
            .x
            .iter()
            .map(|&r| kernel::cancellation_kernel_s(p, r))
            .collect::<Result<_>>()?;
        let cells: Vec<QParts> = (0..shells.rule.len())
            .into_par_iter()
            .map(|k| {
                let rho = shells.rule.x[k];
                let wr = shells.rule.w[k] * rho * rho;
                let rg = rho.powf(p.gamma);
                let (pn, pf) = (p.psi_near(rho), p.psi_far(rho));
                let mut near = 0.0;
                let mut far = 0.0;
                let dirs = ang.shell_dirs(&axis, 2.0 * sharp * rho * axis.norm());
                let mut offs = Vec::with_capacity(ang.n_sigma);
                for (om, &wd) in dirs.dirs.iter().zip(&dirs.w) {
                    ang.offsets_around(om, &mut offs);
                    let vs = v - rho * om;
                    let (gs, dg) = g.value_grad(&vs);
                    let mut core = 0.0;
                    let mut comp = 0.0;
                    for (hd, w) in offs.iter().zip(&ang.w) {
                        let d = rho * hd;
                        let hp = h.eval(&(v + d));
                        let gps = g.eval(&(vs - d));
                        if naive {
                            core += w * (gps * hp - gs * hv);
                        } else {
                            core += w * (gps * (hp - hv) - gs * dh.dot(&d));
                            comp += w * (gps - gs + dg.dot(&d));
                        }
                    }
                    if naive {
                        near += wd * rg * core;
                        continue;
                    }
                    // ∫ b (v′ − v) dσ = M (v_* − v) = −M ρ ω
                    let a = rg * (core - m * gs * rho * dh.dot(om));
                    let b = rg * (hv * comp + m * hv * rho * dg.dot(om));
                    near += wd * pn * (a + b);
                    far += wd * (pf * a + hv * s_table[k] * gs);
                }
                QParts { near: wr * near, far: wr * far }
            })
            .collect();
        let mut out = QParts::default();
        for c in cells {
            out.near += c.near;
            out.far += c.far;
        }
        Ok(out)
    }

    pub fn value(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<f64> {
        Ok(self.parts(g, h, v)?.total())
    }
}

/// Radii splitting the band where S^η switches on and ψ_η switches off.
pub fn transition_cuts(eta: f64) -> Vec<f64> {
    let lo = PSI_LO * eta / std::f64::consts::SQRT_2;
    let hi = PSI_HI * eta;
    let n = 6;
    let mut cuts: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    cuts.push(PSI_LO * eta);
    cuts
}

/// Coarse and refined plans for one kernel.
pub struct Evaluator {
    pub coarse: BoltzmannPlan,
    pub fine: BoltzmannPlan,
}

impl Evaluator {
    pub fn new(params: &KernelParams, cfg: &EvalConfig) -> Result<Evaluator> {
        Ok(Evaluator { coarse: BoltzmannPlan::new(params, cfg)?, fine: BoltzmannPlan::new(params, &cfg.refined())? })
    }

    pub fn eval(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<Estimate> {
        let a = self.coarse.value(g, h, v)?;
        let b = self.fine.value(g, h, v)?;
        Ok(Estimate::from_levels(a, b, self.coarse.cfg.tolerance))
    }

    pub fn eval_parts(&self, g: &SmoothField, h: &SmoothField, v: &Vec3) -> Result<(QParts, QParts)> {
        Ok((self.coarse.parts(g, h, v)?, self.fine.parts(g, h, v)?))
    }
}

/// Q^{s,γ}(g, h)(v) with a two-level error estimate.
pub fn eval_q(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    Evaluator::new(params, cfg)?.eval(g, h, v)
}

pub fn eval_q_near(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    let (a, b) = Evaluator::new(params, cfg)?.eval_parts(g, h, v)?;
    Ok(Estimate::from_levels(a.near, b.near, cfg.tolerance))
}

pub fn eval_q_far(params: &KernelParams, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    let (a, b) = Evaluator::new(params, cfg)?.eval_parts(g, h, v)?;
    Ok(Estimate::from_levels(a.far, b.far, cfg.tolerance))
}

/// Estimates at many points; results keep the input order.
pub fn eval_q_many(ev: &Evaluator, g: &SmoothField, h: &SmoothField, points: &[Vec3]) -> Result<Vec<Estimate>> {
    points.par_iter().map(|v| ev.eval(g, h, v)).collect()
}

fn is_isotropic(f: &SmoothField) -> bool {
    let probes = [Vec3::new(0.7, 0.0, 0.0), Vec3::new(1.9, 0.0, 0.0)];
    let rot = |v: &Vec3| Vec3::new(0.0, 0.6 * v[0], 0.8 * v[0]);
    probes.iter().all(|v| {
        let (a, b) = (f.eval(v), f.eval(&rot(v)));
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    })
}

/// Both sides of the cancellation identity for the far kernel,
/// ∫∫∫ B^η g_*(h′ − h) dσ dv dv_* directly and as ∫∫ S^η(|v − v_*|) g_* h dv dv_*.
///
/// g and h must be isotropic about the origin, so the outer v_* integral
/// reduces to a radial one along a fixed axis. Shell directions then see
/// h(v_* + ρω) peaked in cos of the polar angle, so the direction rule
/// wants more polar nodes than pointwise evaluation does.
pub fn cancellation_pair(params: &KernelParams, g: &SmoothField, h: &SmoothField, cfg: &EvalConfig) -> Result<(f64, f64)> {
    if !is_isotropic(g) || !is_isotropic(h) {
        return Err(Error::Domain("cancellation check needs isotropic centred fields".into()));
    }
    let plan = BoltzmannPlan::new(params, cfg)?;
    let ang = &plan.angular;
    let m = ang.m_rule;
    // g·|v_*|² is below e^{-36} beyond a_max
    let a_max = (36.0 / g.min_width()).sqrt().min(cfg.r_max);
    let outer = quadrature::composite(0.0, a_max, &[], 3.0, 8);
    let cells: Vec<(f64, f64)> = (0..outer.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let a = outer.x[i];
            let vs = Vec3::new(0.0, 0.0, a);
            let gs = g.eval(&vs);
            let wa = outer.w[i] * 4.0 * PI * a * a * gs;
            let shells = plan.shells(&vs)?;
            let (mut direct, mut via_s) = (0.0, 0.0);
            for (&rho, &wr) in shells.rule.x.iter().zip(&shells.rule.w) {
                let pf = params.psi_far(rho);
                let sk = kernel::cancellation_kernel_s(params, rho)?;
                if pf == 0.0 && sk == 0.0 {
                    continue;
                }
                let rg = rho.powf(params.gamma);
                let (mut dsum, mut ssum) = (0.0, 0.0);
                for (j, om) in ang.dirs.dirs.iter().enumerate() {
                    // u = v − v_* = ρω
                    let v = vs + rho * om;
                    let (hv, dh) = h.value_grad(&v);
                    let mut core = 0.0;
                    for (hd, w) in ang.offsets(j).iter().zip(&ang.w) {
                        let d = rho * hd;
                        core += w * (h.eval(&(v + d)) - hv - dh.dot(&d));
                    }
                    let wd = ang.dirs.w[j];
                    dsum += wd * pf * rg * (core - m * rho * dh.dot(om));
                    ssum += wd * sk * hv;
                }
                direct += wr * rho * rho * dsum;
                via_s += wr * rho * rho * ssum;
            }
            Ok((wa * direct, wa * via_s))
        })
        .collect::<Result<_>>()?;
    let mut out = (0.0, 0.0);
    for (a, b) in cells {
        out.0 += a;
        out.1 += b;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// weak forms

/// Multi-indices of total degree ≤ 4, graded.
pub const MULTI: [[u32; 3]; 35] = {
    let mut out = [[0u32; 3]; 35];
    let mut n = 0;
    let mut d = 0;
    while d <= 4 {
        let mut i = d;
        while i >= 0 {
            let mut j = d - i;
            while j >= 0 {
                let k = d - i - j;
                out[n] = [i as u32, j as u32, k as u32];
                n += 1;
                j -= 1;
            }
            i -= 1;
        }
        d += 1;
    }
    out
};

pub fn multi_slot(e: [u32; 3]) -> usize {
    MULTI.iter().position(|m| *m == e).expect("multi-index of degree ≤ 4")
}

#[inline]
fn mono(e: &[u32; 3], x: &Vec3) -> f64 {
    x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
}

fn mono_grad(e: &[u32; 3], x: &Vec3) -> Vec3 {
    let mut g = Vec3::zeros();
    for i in 0..3 {
        if e[i] > 0 {
            let mut f = *e;
            f[i] -= 1;
            g[i] = e[i] as f64 * mono(&f, x);
        }
    }
    g
}

/// A_β(u) = ∫ b [(|u|σ/2)^β − (u/2)^β] dσ for all |β| ≤ 4, Taylor-compensated.
pub fn increment_moments(ang: &AngularPlan, dir: usize, r: f64) -> [f64; 35] {
    let om = ang.dirs.dirs[dir];
    let x0 = 0.5 * r * om;
    let mut a = [0.0; 35];
    let grads: Vec<Vec3> = MULTI.iter().map(|e| mono_grad(e, &x0)).collect();
    let base: Vec<f64> = MULTI.iter().map(|e| mono(e, &x0)).collect();
    for (hd, w) in ang.offsets(dir).iter().zip(&ang.w) {
        let d = r * hd;
        let x = x0 + d;
        for (k, e) in MULTI.iter().enumerate().skip(1) {
            a[k] += w * (mono(e, &x) - base[k] - grads[k].dot(&d));
        }
    }
    // first-order part: ∫ b (v′ − v) dσ = −M u
    let drift = -ang.m_rule * r * om;
    for k in 1..35 {
        a[k] += grads[k].dot(&drift);
    }
    a
}

/// Φ_P(V, u) = ∫ b [P(v′) − P(v)] dσ from the increment moments A_β(u).
pub fn phi_poly(p: &Poly, a: &[f64; 35], big_v: &Vec3) -> f64 {
    let mut sum = 0.0;
    for m in p.terms() {
        let al = m.exp;
        for b0 in 0..=al[0] {
            for b1 in 0..=al[1] {
                for b2 in 0..=al[2] {
                    if b0 + b1 + b2 == 0 {
                        continue;
                    }
                    let c = binom(al[0], b0) * binom(al[1], b1) * binom(al[2], b2);
                    let rest = [al[0] - b0, al[1] - b1, al[2] - b2];
                    sum += m.coef * c * a[multi_slot([b0, b1, b2])] * mono(&rest, big_v);
                }
            }
        }
    }
    sum
}

fn binom(n: u32, k: u32) -> f64 {
    let mut b = 1.0;
    for j in 0..k {
        b *= (n - j) as f64 / (j + 1) as f64;
    }
    b
}

/// Test function for weak forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Poly(Poly),
    Field(SmoothField),
}

/// Reference Gaussian e^{−β|V−c|²} for the centre-of-mass variable; for
/// equal-width Gaussian arguments the remaining V-integrand is polynomial.
fn reference(g: &SmoothField, h: &SmoothField) -> (f64, Vec3) {
    let beta = g.min_width() + h.min_width();
    let mut c = Vec3::zeros();
    let mut n = 0.0;
    for t in g.terms.iter().chain(&h.terms) {
        c += t.width * Vec3::from(t.center);
        n += t.width;
    }
    (beta, c / n)
}

/// One level of ⟨Q(g, h), φ⟩ = ∫∫∫ B g_* h (φ′ − φ) dσ dv dv_*.
pub fn weak_q_level(params: &KernelParams, g: &SmoothField, h: &SmoothField, phi: &TestFunction, cfg: &EvalConfig) -> Result<f64> {
    Ok(weak_q_with_scale(params, g, h, phi, cfg)?.0)
}

/// Weak value together with Σ|node contributions|, the natural scale for
/// conservation checks.
pub fn weak_q_with_scale(
    params: &KernelParams,
    g: &SmoothField,
    h: &SmoothField,
    phi: &TestFunction,
    cfg: &EvalConfig,
) -> Result<(f64, f64)> {
    params.check_operator_grade()?;
    cfg.validate(params)?;
    if let TestFunction::Poly(p) = phi {
        if p.terms().iter().all(|m| m.exp == [0, 0, 0]) {
            return Ok((0.0, 0.0));
        }
    }
    if g.terms.is_empty() || h.terms.is_empty() {
        return Ok((0.0, 0.0));
    }
    let ang = AngularPlan::new(params.s, &cfg.angular, cfg.dir_theta, cfg.dir_phi)?;
    let (beta, c) = reference(g, h);
    let gh = quadrature::gauss_hermite(cfg.n_hermite);
    let scale = beta.powf(-0.5);
    let mut vnodes = Vec::new();
    for (x0, w0) in gh.x.iter().zip(&gh.w) {
        for (x1, w1) in gh.x.iter().zip(&gh.w) {
            for (x2, w2) in gh.x.iter().zip(&gh.w) {
                let y = Vec3::new(*x0, *x1, *x2);
                vnodes.push((c + scale * y, w0 * w1 * w2 * scale.powi(3) * y.norm_squared().exp()));
            }
        }
    }
    // relative velocity |u| ≤ 2(r_max) covers both arguments' tails
    let ur = build_radial_rule(params.gamma, 2.0 * cfg.r_max, &cfg.radial)?;
    let m = ang.m_rule;
    let cells: Vec<(f64, f64)> = (0..ur.rule.len())
        .into_par_iter()
        .map(|k| {
            let r = ur.rule.x[k];
            let wr = ur.rule.w[k] * r * r * r.powf(params.gamma);
            let mut acc = 0.0;
            let mut abs = 0.0;
            for (j, om) in ang.dirs.dirs.iter().enumerate() {
                let u = r * om;
                let a = match phi {
                    TestFunction::Poly(_) => Some(increment_moments(&ang, j, r)),
                    TestFunction::Field(_) => None,
                };
                let mut sj = 0.0;
                let mut aj = 0.0;
                for (big_v, wv) in &vnodes {
                    let v = big_v + 0.5 * u;
                    let vs = big_v - 0.5 * u;
                    let weight = g.eval(&vs) * h.eval(&v);
                    if weight == 0.0 {
                        continue;
                    }
                    let incr = match (phi, &a) {
                        (TestFunction::Poly(p), Some(a)) => phi_poly(p, a, big_v),
                        (TestFunction::Field(f), _) => {
                            let (f0, df) = f.value_grad(&v);
                            let mut t = 0.0;
                            for (hd, w) in ang.offsets(j).iter().zip(&ang.w) {
                                let d = r * hd;
                                t += w * (f.eval(&(v + d)) - f0 - df.dot(&d));
                            }
                            t - m * df.dot(&u)
                        }
                        _ => unreachable!(),
                    };
                    sj += wv * weight * incr;
                    aj += (wv * weight * incr).abs();
                }
                acc += ang.dirs.w[j] * sj;
                abs += ang.dirs.w[j] * aj;
            }
            (wr * acc, wr.abs() * abs)
        })
        .collect();
    let mut out = (0.0, 0.0);
    for (a, b) in cells {
        out.0 += a;
        out.1 += b;
    }
    Ok(out)
}

pub fn weak_q(params: &KernelParams, g: &SmoothField, h: &SmoothField, phi: &TestFunction, cfg: &EvalConfig) -> Result<Estimate> {
    let a = weak_q_level(params, g, h, phi, cfg)?;
    let b = weak_q_level(params, g, h, phi, &cfg.refined())?;
    Ok(Estimate::from_levels(a, b, cfg.tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_indices_are_graded_and_complete() {
        assert_eq!(MULTI[0], [0, 0, 0]);
        assert_eq!(MULTI[1], [1, 0, 0]);
        assert_eq!(MULTI[34], [0, 0, 4]);
        for (k, m) in MULTI.iter().enumerate() {
            assert_eq!(multi_slot(*m), k);
        }
    }

    #[test]
    fn naive_mode_is_refused_for_strong_singularity() {
        let p = KernelParams::new(0.6, 0.0, 1.0).unwrap();
        let cfg = EvalConfig { regularization: Regularization::Naive, ..Default::default() };
        assert!(matches!(BoltzmannPlan::new(&p, &cfg), Err(Error::Domain(_))));
        let p = KernelParams::new(0.3, 0.0, 1.0).unwrap();
        assert!(BoltzmannPlan::new(&p, &cfg).is_ok());
    }

    #[test]
    fn rule_moment_matches_closed_form() {
        let ang = AngularPlan::new(0.8, &AngularSpec::default(), 2, 2).unwrap();
        let m = kernel::momentum_transfer_moment(0.8).unwrap();
        assert!((ang.m_rule - m).abs() < 1e-9 * m);
    }
}
