//! Collision kinematics and the sphere/radial rules used by every integral.

use crate::error::{Error, Result};
use crate::quadrature::{self, Rule1D};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Post-collision pair in the sigma representation.
#[derive(Debug, Clone, Copy)]
pub struct Collision {
    pub v_prime: Vec3,
    pub v_star_prime: Vec3,
    pub theta: f64,
}

pub fn post_collision(v: &Vec3, v_star: &Vec3, sigma: &Vec3) -> Result<Collision> {
    if ((sigma.norm() - 1.0).abs()) > 1e-12 {
        return Err(Error::Domain(format!("|sigma| = {} is not 1", sigma.norm())));
    }
    let u = v - v_star;
    let r = u.norm();
    if r == 0.0 {
        return Err(Error::Singular("v equals v_star".into()));
    }
    let c = 0.5 * (v + v_star);
    let cos_t = (u.dot(sigma) / r).clamp(-1.0, 1.0);
    Ok(Collision {
        v_prime: c + 0.5 * r * sigma,
        v_star_prime: c - 0.5 * r * sigma,
        theta: cos_t.acos(),
    })
}

/// Right-handed orthonormal frame (h1, h2, axis) attached to a relative velocity.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub h1: Vec3,
    pub h2: Vec3,
    pub axis: Vec3,
}

impl Frame {
    /// Frame around a unit direction; h1 comes from Gram-Schmidt against the
    /// coordinate axis on which the direction has the smallest component.
    pub fn around(axis: Vec3) -> Frame {
        let k = (0..3)
            .min_by(|&i, &j| axis[i].abs().total_cmp(&axis[j].abs()))
            .unwrap_or(0);
        let mut e = Vec3::zeros();
        e[k] = 1.0;
        let h1 = (e - axis * axis.dot(&e)).normalize();
        let h2 = axis.cross(&h1);
        Frame { h1, h2, axis }
    }

    pub fn sigma(&self, theta: f64, phi: f64) -> Vec3 {
        let (st, ct) = theta.sin_cos();
        self.sigma_sc(st, ct, phi.cos(), phi.sin())
    }

    #[inline]
    pub fn sigma_sc(&self, sin_t: f64, cos_t: f64, cos_p: f64, sin_p: f64) -> Vec3 {
        self.h1 * (sin_t * cos_p) + self.h2 * (sin_t * sin_p) + self.axis * cos_t
    }
}

pub fn collision_frame(v: &Vec3, v_star: &Vec3) -> Result<Frame> {
    let u = v - v_star;
    let r = u.norm();
    if r == 0.0 {
        return Err(Error::Singular("v equals v_star".into()));
    }
    Ok(Frame::around(u / r))
}

/// u⁺ = (u + |u|σ)/2.
pub fn u_plus(u: &Vec3, sigma: &Vec3) -> Result<Vec3> {
    let r = u.norm();
    if r == 0.0 {
        return Err(Error::Singular("u = 0".into()));
    }
    Ok(0.5 * (u + r * sigma))
}

/// Weighting carried by a polar rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngularWeight {
    /// Σ w G ≈ ∫ G sinθ dθ dφ; the innermost panel assumes G sinθ ~ θ^tail_power.
    Surface { tail_power: f64 },
    /// Σ w G ≈ ∫ b^s(θ) G dσ for G = O(sin²(θ/2)); graded in w = sin(θ/2)^{2-2s}.
    Kernel { s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrading {
    pub theta_max: f64,
    pub theta_min: f64,
    pub ratio: f64,
    pub per_panel: usize,
    pub n_phi: usize,
    pub weight: AngularWeight,
    /// extra polar cut points (radians)
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

impl SphereGrading {
    /// Kernel-weighted rule over the collision hemisphere θ ∈ [0, π/2].
    pub fn kernel(s: f64, per_panel: usize, n_phi: usize) -> Self {
        SphereGrading {
            theta_max: PI / 2.0,
            theta_min: 1e-3,
            ratio: 0.35,
            per_panel,
            n_phi,
            weight: AngularWeight::Kernel { s },
            breakpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if !(self.theta_max > 0.0 && self.theta_max <= PI) {
            return bad("theta_max must lie in (0, pi]");
        }
        if !(self.theta_min > 0.0 && self.theta_min <= self.theta_max) {
            return bad("theta_min must lie in (0, theta_max]");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad("grading ratio must lie in (0, 1)");
        }
        if self.per_panel == 0 || self.n_phi == 0 {
            return bad("node counts must be positive");
        }
        if let AngularWeight::Kernel { s } = self.weight {
            if !(s > 0.0 && s < 1.0) {
                return bad("kernel weighting needs 0 < s < 1");
            }
            if self.theta_max > PI / 2.0 + 1e-15 {
                return bad("kernel weighting is restricted to theta <= pi/2");
            }
        }
        Ok(())
    }

    fn levels(&self) -> usize {
        if self.theta_min >= self.theta_max {
            0
        } else {
            ((self.theta_min / self.theta_max).ln() / self.ratio.ln()).ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

/// Product rule: graded polar nodes times a uniform azimuthal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub grading: SphereGrading,
    /// polar nodes θ_k with weights already including sinθ (or b^s sinθ)
    pub polar: Rule1D,
    pub phi: Vec<f64>,
    pub phi_weight: f64,
    pub nodes: Vec<SphereNode>,
}

impl SphereQuadrature {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Polar integral ∫ G(θ) (weight) dθ with the azimuth already summed out.
    pub fn polar_integral(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.polar.integrate(g) * 2.0 * PI
    }
}

/// Polar part of a kernel-weighted rule in t = sin(θ/2) with cut points `cuts_t`.
///
/// Returns t-nodes and weights W with Σ W G(t) ≈ ∫_0^{θ_max} b^s(θ) G sinθ dθ
/// for G = t²H(t), H even and smooth. Between cuts the rule is Gauss-Legendre in
/// w = t^{2−2s}; below the smallest cut t_J, H is replaced by its quadratic
/// Taylor model fitted at t_J and t_J/2, which integrates the leading θ^{1−2s}
/// behaviour exactly without placing nodes where the compensated integrand
/// loses its digits to cancellation.
pub fn kernel_polar_rule(s: f64, cuts_t: &[f64], per_panel: usize) -> Rule1D {
    let p = 2.0 - 2.0 * s;
    let mut cuts: Vec<f64> = cuts_t.iter().copied().filter(|&t| t > 0.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Rule1D { x: Vec::new(), w: Vec::new() };
    let Some(&t_j) = cuts.first() else {
        return out;
    };
    let big_w = t_j.powf(p);
    let q = p / (2.0 + p);
    let (ta, tb) = (t_j, 0.5 * t_j);
    // weights on H(ta), H(tb), converted to weights on G = t²H (factor 2 from b sinθ dθ = 2 t^{-2} G dw)
    out.x.push(tb);
    out.w.push(2.0 * big_w * 4.0 * (1.0 - q) / 3.0 / (tb * tb));
    out.x.push(ta);
    out.w.push(2.0 * big_w * (4.0 * q - 1.0) / 3.0 / (ta * ta));
    for win in cuts.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let gl = quadrature::gl_interval(lo.powf(p), hi.powf(p), per_panel);
        for (w, ww) in gl.x.iter().zip(&gl.w) {
            let t = w.powf(1.0 / p);
            out.x.push(t);
            out.w.push(2.0 * ww / (t * t));
        }
    }
    out
}

pub fn build_sphere_rule(g: &SphereGrading) -> Result<SphereQuadrature> {
    g.validate()?;
    let levels = g.levels();
    let polar = match g.weight {
        AngularWeight::Kernel { s } => {
            let t_max = (0.5 * g.theta_max).sin();
            let mut cuts = vec![t_max];
            let mut t = t_max;
            for _ in 0..levels {
                t *= g.ratio;
                cuts.push(t);
            }
            for b in &g.breakpoints {
                let tb = (0.5 * b).sin();
                if tb > t && *b < g.theta_max {
                    cuts.push(tb);
                }
            }
            let r = kernel_polar_rule(s, &cuts, g.per_panel);
            Rule1D {
                x: r.x.iter().map(|t| 2.0 * t.asin()).collect(),
                w: r.w,
            }
        }
        AngularWeight::Surface { tail_power } => {
            let mut cuts = vec![g.theta_max];
            let mut th = g.theta_max;
            for _ in 0..levels {
                th *= g.ratio;
                cuts.push(th);
            }
            cuts.extend(g.breakpoints.iter().copied().filter(|b| *b > th && *b < g.theta_max));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            // innermost panel: G sinθ ~ θ^p, integrated exactly in θ^{p+1}
            let mut r = quadrature::power_substituted(cuts[0], tail_power, g.per_panel);
            for win in cuts.windows(2) {
                r.append(quadrature::gl_interval(win[0], win[1], g.per_panel));
            }
            let w = r.x.iter().zip(&r.w).map(|(t, w)| w * t.sin()).collect();
            Rule1D { x: r.x, w }
        }
    };
    let n_phi = g.n_phi;
    let dphi = 2.0 * PI / n_phi as f64;
    let phi: Vec<f64> = (0..n_phi).map(|j| (j as f64 + 0.5) * dphi).collect();
    let mut nodes = Vec::with_capacity(polar.len() * n_phi);
    for (th, w) in polar.x.iter().zip(&polar.w) {
        for p in &phi {
            nodes.push(SphereNode { theta: *th, phi: *p, weight: w * dphi });
        }
    }
    Ok(SphereQuadrature { grading: g.clone(), polar, phi, phi_weight: dphi, nodes })
}

/// Ungraded product rule over the full sphere: Gauss-Legendre in cosθ, uniform φ.
///
/// Antipodally symmetric whenever `n_phi` is even.
#[derive(Debug, Clone)]
pub struct DirectionRule {
    pub dirs: Vec<Vec3>,
    pub w: Vec<f64>,
}

impl DirectionRule {
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let gl = quadrature::gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        let mut w = Vec::with_capacity(n_theta * n_phi);
        for (c, wc) in gl.x.iter().zip(&gl.w) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                let p = j as f64 * dphi;
                dirs.push(Vec3::new(s * p.cos(), s * p.sin(), *c));
                w.push(wc * dphi);
            }
        }
        DirectionRule { dirs, w }
    }

    /// Product rule with Gauss panels in cos θ split at `cuts` (inside (-1, 1)).
    pub fn paneled(cuts: &[f64], per_panel: usize, n_phi: usize) -> Self {
        let x = quadrature::composite(-1.0, 1.0, cuts, 2.0, per_panel);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut dirs = Vec::with_capacity(x.len() * n_phi);
        let mut w = Vec::with_capacity(x.len() * n_phi);
        for (c, wc) in x.x.iter().zip(&x.w) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                let p = j as f64 * dphi;
                dirs.push(Vec3::new(s * p.cos(), s * p.sin(), *c));
                w.push(wc * dphi);
            }
        }
        DirectionRule { dirs, w }
    }

    /// Rule for integrands concentrated like e^{κ(cos θ - 1)} about the pole.
    /// Small κ falls back to the plain product rule.
    pub fn peaked(kappa: f64, n_theta: usize, n_phi: usize) -> Self {
        if kappa <= 4.0 {
            return Self::product(n_theta, n_phi);
        }
        let cuts: Vec<f64> = [16.0, 5.0, 1.5]
            .iter()
            .map(|c| 1.0 - c / kappa)
            .filter(|&x| x > -0.9)
            .collect();
        Self::paneled(&cuts, n_theta.div_ceil(2).max(4), n_phi)
    }

    /// `peaked` rule with its pole turned to `axis` (z when axis vanishes).
    pub fn peaked_along(axis: &Vec3, kappa: f64, n_theta: usize, n_phi: usize) -> Self {
        let n = axis.norm();
        let rot = if n > 1e-12 { Frame::around(axis / n) } else { Frame::around(Vec3::z()) };
        let mut r = Self::peaked(kappa, n_theta, n_phi);
        for d in r.dirs.iter_mut() {
            *d = rot.h1 * d[0] + rot.h2 * d[1] + rot.axis * d[2];
        }
        r
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrading {
    pub per_panel: usize,
    /// maximal width of the outer panels
    pub panel_width: f64,
    /// below this radius panels are geometric
    pub split: f64,
    pub ratio: f64,
    pub levels: usize,
    #[serde(default)]
    pub tail_power: Option<f64>,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

impl Default for RadialGrading {
    fn default() -> Self {
        RadialGrading {
            per_panel: 10,
            panel_width: 1.0,
            split: 1.0,
            ratio: 0.3,
            levels: 12,
            tail_power: None,
            breakpoints: Vec::new(),
        }
    }
}

/// Radial nodes on (0, r_max] with plain dr weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialQuadrature {
    pub r_max: f64,
    pub rule: Rule1D,
}

pub const DEFAULT_R_MAX: f64 = 8.0;

/// Radial rule graded toward 0 so that r^{γ+4}·smooth integrands converge
/// down to γ > -5.
pub fn build_radial_rule(gamma: f64, r_max: f64, spec: &RadialGrading) -> Result<RadialQuadrature> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Spec("r_max must be positive".into()));
    }
    if spec.per_panel == 0 || !(spec.ratio > 0.0 && spec.ratio < 1.0) || !(spec.panel_width > 0.0) {
        return Err(Error::Spec("invalid radial grading".into()));
    }
    let p = spec.tail_power.unwrap_or(gamma + 4.0);
    if p <= -1.0 {
        return Err(Error::Spec(format!("tail power {p} is not integrable")));
    }
    let split = spec.split.min(r_max);
    let mut rule = Rule1D { x: Vec::new(), w: Vec::new() };
    let mut inner_bp: Vec<f64> = spec.breakpoints.iter().copied().filter(|b| *b < split).collect();
    inner_bp.sort_by(f64::total_cmp);
    let outer = quadrature::composite(split, r_max, &spec.breakpoints, spec.panel_width, spec.per_panel);
    // geometric part, honouring breakpoints that fall inside it
    let mut hi = split;
    let mut pieces = Vec::new();
    for _ in 0..spec.levels {
        let lo = hi * spec.ratio;
        pieces.push((lo, hi));
        hi = lo;
    }
    let inner = quadrature::power_substituted(hi, p, spec.per_panel);
    rule.append(inner);
    for (lo, hi) in pieces.into_iter().rev() {
        let bps: Vec<f64> = inner_bp.iter().copied().filter(|b| *b > lo && *b < hi).collect();
        rule.append(quadrature::composite(lo, hi, &bps, f64::INFINITY, spec.per_panel));
    }
    rule.append(outer);
    Ok(RadialQuadrature { r_max, rule })
}

/// Upper end of the collision hemisphere in t = sin(θ/2).
pub const T_MAX: f64 = FRAC_1_SQRT_2;
