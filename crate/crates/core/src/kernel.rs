//! The scaled non-cutoff kernel b^s(θ)|v-v*|^γ, its smooth near/far split and
//! the closed-form angular integrals attached to it.

use crate::error::{Error, Result};
use crate::geometry::{self, AngularWeight, SphereGrading, T_MAX};
use crate::quadrature::Rule1D;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Interpolation shape used on [3/4, 4/3].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothCutoff {
    /// e^{-1/t} blend, infinitely differentiable
    #[default]
    Exponential,
    /// 10x³ − 15x⁴ + 6x⁵ smoothstep, C² only
    Quintic,
}

pub const PSI_LO: f64 = 0.75;
pub const PSI_HI: f64 = 4.0 / 3.0;

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

fn bump_d(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp() / (t * t)
    }
}

impl SmoothCutoff {
    /// ψ(r): 1 on [0, 3/4], 0 on [4/3, ∞), strictly decreasing in between.
    pub fn psi(self, r: f64) -> f64 {
        if r <= PSI_LO {
            return 1.0;
        }
        if r >= PSI_HI {
            return 0.0;
        }
        let x = (r - PSI_LO) / (PSI_HI - PSI_LO);
        1.0 - self.step(x)
    }

    /// 1 − ψ(r), evaluated without cancellation near the upper plateau.
    pub fn psi_complement(self, r: f64) -> f64 {
        if r <= PSI_LO {
            return 0.0;
        }
        if r >= PSI_HI {
            return 1.0;
        }
        let x = (r - PSI_LO) / (PSI_HI - PSI_LO);
        self.step(x)
    }

    pub fn psi_derivative(self, r: f64) -> f64 {
        if r <= PSI_LO || r >= PSI_HI {
            return 0.0;
        }
        let x = (r - PSI_LO) / (PSI_HI - PSI_LO);
        -self.step_d(x) / (PSI_HI - PSI_LO)
    }

    fn step(self, x: f64) -> f64 {
        match self {
            SmoothCutoff::Exponential => {
                let a = bump(x);
                let b = bump(1.0 - x);
                a / (a + b)
            }
            SmoothCutoff::Quintic => x * x * x * (10.0 - 15.0 * x + 6.0 * x * x),
        }
    }

    fn step_d(self, x: f64) -> f64 {
        match self {
            SmoothCutoff::Exponential => {
                let a = bump(x);
                let b = bump(1.0 - x);
                let da = bump_d(x);
                let db = -bump_d(1.0 - x);
                (da * b - a * db) / ((a + b) * (a + b))
            }
            SmoothCutoff::Quintic => 30.0 * x * x * (1.0 - x) * (1.0 - x),
        }
    }
}

/// Kernel parameters (s, γ, η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub s: f64,
    pub gamma: f64,
    pub eta: f64,
    #[serde(default)]
    pub cutoff: SmoothCutoff,
}

impl KernelParams {
    pub fn new(s: f64, gamma: f64, eta: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s = {s} must satisfy 0 < s < 1")));
        }
        if !(gamma > -5.0 && gamma <= 0.0) {
            return Err(Error::Domain(format!("gamma = {gamma} must satisfy -5 < gamma <= 0")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!("eta = {eta} must satisfy 0 < eta <= 1")));
        }
        Ok(KernelParams { s, gamma, eta, cutoff: SmoothCutoff::Exponential })
    }

    /// Parameters for which the collision operator itself is defined (γ + 2s + 3 > 0).
    pub fn operator(s: f64, gamma: f64, eta: f64) -> Result<Self> {
        let p = Self::new(s, gamma, eta)?;
        p.check_operator_grade()?;
        Ok(p)
    }

    pub fn check_operator_grade(&self) -> Result<()> {
        let m = self.gamma + 2.0 * self.s + 3.0;
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::NotOperatorGrade(m))
        }
    }

    pub fn with_cutoff(mut self, c: SmoothCutoff) -> Self {
        self.cutoff = c;
        self
    }

    /// ψ_η(r) = ψ(r/η)
    pub fn psi_near(&self, r: f64) -> f64 {
        self.cutoff.psi(r / self.eta)
    }

    /// ψ^η(r) = 1 − ψ(r/η)
    pub fn psi_far(&self, r: f64) -> f64 {
        self.cutoff.psi_complement(r / self.eta)
    }
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("s = {s} must satisfy 0 < s < 1")))
    }
}

/// b^s(θ) = (1−s) sin(θ/2)^{−2−2s} on (0, π/2], zero beyond.
pub fn angular_b(s: f64, theta: f64) -> Result<f64> {
    check_s(s)?;
    if theta == 0.0 {
        return Err(Error::Singular("angular kernel evaluated at theta = 0".into()));
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} outside [0, pi]")));
    }
    if theta > PI / 2.0 {
        return Ok(0.0);
    }
    Ok((1.0 - s) * (0.5 * theta).sin().powf(-2.0 - 2.0 * s))
}

pub fn kernel_b(p: &KernelParams, r: f64, theta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Singular(format!("relative speed r = {r}")));
    }
    Ok(angular_b(p.s, theta)? * r.powf(p.gamma))
}

pub fn kernel_near(p: &KernelParams, r: f64, theta: f64) -> Result<f64> {
    Ok(p.psi_near(r) * kernel_b(p, r, theta)?)
}

pub fn kernel_far(p: &KernelParams, r: f64, theta: f64) -> Result<f64> {
    Ok(p.psi_far(r) * kernel_b(p, r, theta)?)
}

/// ∫ b^s sin²(θ/2) dσ = 4π·2^{s−1}; s = 1 returns the limit 4π.
pub fn momentum_transfer_moment(s: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Domain(format!("s = {s} must satisfy 0 < s <= 1")));
    }
    Ok(4.0 * PI * 2f64.powf(s - 1.0))
}

/// ∫ b^s sin⁴(θ/2) dσ = 8π(1−s)·2^{s−2}/(4−2s).
pub fn sin4_moment(s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(8.0 * PI * (1.0 - s) * 2f64.powf(s - 2.0) / (4.0 - 2.0 * s))
}

/// ∫ b^s sin^{2j}(θ/2) dσ for j ≥ 1.
pub fn even_moment(s: f64, j: u32) -> Result<f64> {
    check_s(s)?;
    if j == 0 {
        return Err(Error::Domain("zeroth moment of the angular kernel diverges".into()));
    }
    let e = 2.0 * j as f64 - 2.0 * s;
    Ok(8.0 * PI * (1.0 - s) * T_MAX.powf(e) / e)
}

/// A_s(ξ) = ∫ b^s min{|ξ|² sin²(θ/2), 1} dσ.
pub fn angular_symbol_a(s: f64, xi: f64) -> Result<f64> {
    check_s(s)?;
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("|xi| = {xi} must be nonnegative")));
    }
    if xi <= SQRT_2 {
        Ok(4.0 * PI * 2f64.powf(s - 1.0) * xi * xi)
    } else {
        let x2s = xi.powf(2.0 * s);
        Ok(4.0 * PI * (x2s + (1.0 - s) / s * (x2s - 2f64.powf(s))))
    }
}

fn check_a_theta(a: f64, theta: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&a) {
        return Err(Error::Domain(format!("a = {a} outside [0, 2]")));
    }
    if !(0.0..=PI / 2.0).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} outside [0, pi/2]")));
    }
    Ok(())
}

/// ψ_a(θ) = (cos²(θ/2) + (1−a)² sin²(θ/2))^{−1/2}
pub fn change_of_var_psi(a: f64, theta: f64) -> Result<f64> {
    check_a_theta(a, theta)?;
    let (sh, ch) = (0.5 * theta).sin_cos();
    Ok((ch * ch + (1.0 - a) * (1.0 - a) * sh * sh).powf(-0.5))
}

/// α_a(θ) = (1−a/2)²((1−a/2) + (a/2)cosθ)
pub fn change_of_var_alpha(a: f64, theta: f64) -> Result<f64> {
    check_a_theta(a, theta)?;
    let h = 1.0 - 0.5 * a;
    Ok(h * h * (h + 0.5 * a * theta.cos()))
}

/// Breakpoints in t = sin(θ/2) where r/cos(θ/2) crosses the edges of the
/// transition band of ψ^η.
fn far_split_cuts(p: &KernelParams, r: f64) -> Vec<f64> {
    let mut cuts = vec![T_MAX];
    for edge in [PSI_LO * p.eta, PSI_HI * p.eta] {
        if r < edge {
            let c = r / edge;
            let t = (1.0 - c * c).sqrt();
            if t < T_MAX {
                cuts.push(t);
            }
        }
    }
    cuts
}

/// Polar rule used by [`cancellation_kernel_s`].
pub fn s_polar_rule(p: &KernelParams, r: f64, per_panel: usize) -> Rule1D {
    let mut t = T_MAX;
    let mut cuts = vec![t];
    for _ in 0..7 {
        t *= 0.35;
        cuts.push(t);
    }
    let floor = t;
    cuts.extend(far_split_cuts(p, r).into_iter().filter(|&c| c > floor));
    geometry::kernel_polar_rule(p.s, &cuts, per_panel)
}

/// S^{s,γ,η}(r) = ∫ r^γ b^s(θ)[cos^{−γ−3}(θ/2) ψ^η(r/cos(θ/2)) − ψ^η(r)] dσ.
pub fn cancellation_kernel_s(p: &KernelParams, r: f64) -> Result<f64> {
    cancellation_kernel_s_with(p, r, 16)
}

pub fn cancellation_kernel_s_with(p: &KernelParams, r: f64, per_panel: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Singular(format!("relative speed r = {r}")));
    }
    // both far factors vanish when r·√2 < 3η/4
    if r * SQRT_2 < PSI_LO * p.eta {
        return Ok(0.0);
    }
    let rule = s_polar_rule(p, r, per_panel);
    let base = p.psi_far(r);
    let e = -p.gamma - 3.0;
    let sum = rule.integrate(|t| {
        let c = (1.0 - t * t).sqrt();
        c.powf(e) * p.psi_far(r / c) - base
    });
    Ok(2.0 * PI * r.powf(p.gamma) * sum)
}

/// Full-kernel constant: S(r) = c·r^γ once r ≥ 4η/3.
pub fn cancellation_constant(s: f64, gamma: f64) -> Result<f64> {
    check_s(s)?;
    // (1 − t²)^{−(γ+3)/2} − 1 = Σ_{j≥1} c_j t^{2j}, integrated term by term against b^s
    let k = 0.5 * (gamma + 3.0);
    let mut c = 1.0;
    let mut sum = 0.0;
    for j in 1..400u32 {
        c *= (k + j as f64 - 1.0) / j as f64;
        let term = c * even_moment(s, j)?;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    Ok(sum)
}

/// Independent quadrature companions for the closed forms, graded directly
/// in θ with an analytic θ^{p} tail.
pub mod oracle {
    use super::*;

    pub fn theta_rule(s: f64, tail_power: f64, breakpoints: Vec<f64>) -> Result<geometry::SphereQuadrature> {
        let _ = s;
        geometry::build_sphere_rule(&SphereGrading {
            theta_max: PI / 2.0,
            theta_min: 1e-7,
            ratio: 0.25,
            per_panel: 20,
            n_phi: 1,
            weight: AngularWeight::Surface { tail_power },
            breakpoints,
        })
    }

    fn b_sin(s: f64, theta: f64) -> f64 {
        (1.0 - s) * (0.5 * theta).sin().powf(-2.0 - 2.0 * s)
    }

    pub fn momentum_transfer_moment(s: f64) -> Result<f64> {
        check_s(s)?;
        let q = theta_rule(s, 1.0 - 2.0 * s, vec![])?;
        Ok(q.polar_integral(|th| b_sin(s, th) * (0.5 * th).sin().powi(2)))
    }

    pub fn sin4_moment(s: f64) -> Result<f64> {
        check_s(s)?;
        let q = theta_rule(s, 3.0 - 2.0 * s, vec![])?;
        Ok(q.polar_integral(|th| b_sin(s, th) * (0.5 * th).sin().powi(4)))
    }

    pub fn angular_symbol_a(s: f64, xi: f64) -> Result<f64> {
        check_s(s)?;
        if xi == 0.0 {
            return Ok(0.0);
        }
        let mut bp = vec![];
        if xi > SQRT_2 {
            bp.push(2.0 * (1.0 / xi).asin());
        }
        let q = theta_rule(s, 1.0 - 2.0 * s, bp)?;
        Ok(q.polar_integral(|th| {
            let sh = (0.5 * th).sin();
            b_sin(s, th) * (xi * xi * sh * sh).min(1.0)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_b_examples() {
        assert!((angular_b(0.5, PI / 2.0).unwrap() - SQRT_2).abs() < 1e-14);
        assert_eq!(angular_b(0.3, 3.0 * PI / 4.0).unwrap(), 0.0);
        let ratio = angular_b(0.9, 1e-3).unwrap() / angular_b(0.9, 2e-3).unwrap();
        assert!((ratio / 2f64.powf(3.8) - 1.0).abs() < 1e-3);
        assert!(matches!(angular_b(0.5, 0.0), Err(Error::Singular(_))));
        assert!(matches!(angular_b(1.0, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_examples() {
        let p = KernelParams::new(0.5, -3.0, 1.0).unwrap();
        assert!((kernel_b(&p, 2.0, PI / 2.0).unwrap() - SQRT_2 / 8.0).abs() < 1e-15);
        let p = KernelParams::new(0.5, -1.0, 1.0).unwrap();
        assert_eq!(kernel_near(&p, 2.0, 0.3).unwrap(), 0.0);
        assert_eq!(kernel_far(&p, 0.5, 0.3).unwrap(), 0.0);
        let n = kernel_near(&p, 1.0, 0.3).unwrap();
        let f = kernel_far(&p, 1.0, 0.3).unwrap();
        assert!(n > 0.0 && f > 0.0);
        assert!((n + f - kernel_b(&p, 1.0, 0.3).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn operator_grade_is_enforced() {
        assert!(matches!(KernelParams::operator(0.5, -4.5, 1.0), Err(Error::NotOperatorGrade(_))));
        assert!(KernelParams::operator(0.9, -4.5, 1.0).is_ok());
        assert!(KernelParams::new(0.5, 0.5, 1.0).is_err());
        assert!(KernelParams::new(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn moment_examples() {
        assert!((momentum_transfer_moment(1.0).unwrap() - 4.0 * PI).abs() < 1e-15);
        assert!((momentum_transfer_moment(0.5).unwrap() - 4.0 * PI / SQRT_2).abs() < 1e-14);
        // 8π(1/2)·∫_0^{1/√2} t² dt
        let expect = 4.0 * PI * 2f64.powf(-1.5) / 3.0;
        assert!((sin4_moment(0.5).unwrap() - expect).abs() < 1e-14);
        let s = 1.0 - 1e-9;
        assert!((sin4_moment(s).unwrap() / (1.0 - s) - 2.0 * PI).abs() < 1e-6);
        assert!((even_moment(0.4, 1).unwrap() - momentum_transfer_moment(0.4).unwrap()).abs() < 1e-13);
        assert!((even_moment(0.4, 2).unwrap() - sin4_moment(0.4).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn symbol_examples() {
        assert_eq!(angular_symbol_a(0.3, 0.0).unwrap(), 0.0);
        assert!((angular_symbol_a(0.5, 1.0).unwrap() - 4.0 * PI / SQRT_2).abs() < 1e-13);
        assert!((angular_symbol_a(0.5, 2.0).unwrap() - 4.0 * PI * (4.0 - SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn change_of_variables_examples() {
        for k in 0..=10 {
            let th = k as f64 * PI / 20.0;
            assert!((change_of_var_psi(0.0, th).unwrap() - 1.0).abs() < 1e-15);
            assert!((change_of_var_alpha(0.0, th).unwrap() - 1.0).abs() < 1e-15);
            assert!((change_of_var_psi(1.0, th).unwrap() - 1.0 / (0.5 * th).cos()).abs() < 1e-14);
            assert_eq!(change_of_var_alpha(2.0, th).unwrap(), 0.0);
        }
        assert!(change_of_var_psi(2.5, 0.1).is_err());
    }

    #[test]
    fn cutoff_plateaus_and_slope() {
        for c in [SmoothCutoff::Exponential, SmoothCutoff::Quintic] {
            assert_eq!(c.psi(0.75), 1.0);
            assert_eq!(c.psi(4.0 / 3.0), 0.0);
            assert_eq!(c.psi(0.75 - 1e-12), 1.0);
            assert!(c.psi(0.8) < 1.0 && c.psi(1.3) > 0.0);
            let h = 1e-5;
            let mut r = 0.7;
            let mut prev = c.psi(r);
            while r < 1.4 {
                r += h;
                let cur = c.psi(r);
                assert!((prev - cur) / h <= 4.0);
                assert!(cur <= prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn s_kernel_support_and_sign() {
        let p = KernelParams::new(0.7, 0.0, 1.0).unwrap();
        let r0 = 0.75 / SQRT_2 * (1.0 - 1e-9);
        assert_eq!(cancellation_kernel_s(&p, r0).unwrap(), 0.0);
        let big = cancellation_kernel_s(&p, 5.0).unwrap();
        let c = cancellation_constant(0.7, 0.0).unwrap();
        // independent float evaluation of the same binomial series
        assert!((c - 18.750222552413838).abs() < 1e-12);
        assert!((big - c).abs() < 1e-10 * big, "{big} vs {c}");
        let p = KernelParams::new(0.97, -2.0, 0.5).unwrap();
        let big = cancellation_kernel_s(&p, 3.0).unwrap();
        let c = cancellation_constant(0.97, -2.0).unwrap() * 3f64.powf(-2.0);
        assert!((big - c).abs() < 1e-8 * c.abs(), "{big} vs {c}");
    }
}
