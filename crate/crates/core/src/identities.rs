//! Closed-form angular identities against independent routes.
//!
//! Moments and A_s go against the θ-graded quadrature in `kernel::oracle`.
//! ψ_a and α_a go against the collision geometry itself: the distance ratio
//! |v − v_*| / |v(κ) − v_*(ι)| and the determinant of the 6×6 Jacobian of
//! (v, v_*) ↦ (v(κ), v_*(ι)) at fixed σ.

use crate::error::Result;
use crate::geometry::post_collision;
use crate::kernel::{self, oracle};
use crate::Vec3;
use nalgebra::{Matrix3, Matrix6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

pub const IDENTITY_CSV_VERSION: &str = "identities/1";
pub const IDENTITY_CSV_HEADER: &str = "identity,p1,p2,closed,oracle,rel_residual";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdentityRow {
    pub identity: String,
    /// s for the moments and A_s, a for ψ_a / α_a
    pub p1: f64,
    /// |ξ| for A_s, θ for ψ_a / α_a, 0 otherwise
    pub p2: f64,
    pub closed: f64,
    pub oracle: f64,
    pub rel_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdentitySummary {
    pub identity: String,
    pub samples: usize,
    pub max_rel_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdentityReport {
    pub tolerance: f64,
    pub rows: Vec<IdentityRow>,
    pub summary: Vec<IdentitySummary>,
    pub pass: bool,
}

impl IdentityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(IDENTITY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}\n", r.identity, r.p1, r.p2, r.closed, r.oracle, r.rel_residual));
        }
        out
    }
}

/// |u| / |v(κ) − v_*(ι)| for u = v − v_* and σ at angle θ from u.
pub fn psi_geometric(v: &Vec3, v_star: &Vec3, sigma: &Vec3, kappa: f64, iota: f64) -> Result<f64> {
    let c = post_collision(v, v_star, sigma)?;
    let vk = kappa * c.v_prime + (1.0 - kappa) * v;
    let vi = iota * c.v_star_prime + (1.0 - iota) * v_star;
    Ok((v - v_star).norm() / (vk - vi).norm())
}

/// det ∂(v(κ), v_*(ι))/∂(v, v_*) at fixed σ, from v′ = (v+v_*)/2 + |u|σ/2.
pub fn alpha_jacobian(v: &Vec3, v_star: &Vec3, sigma: &Vec3, kappa: f64, iota: f64) -> f64 {
    let u = v - v_star;
    let uhat = u / u.norm();
    let i3 = Matrix3::identity();
    let su = sigma * uhat.transpose();
    // ∂v′/∂v = I/2 + σûᵀ/2, ∂v′/∂v_* = I/2 − σûᵀ/2, and the mirror for v′_*
    let dvp_dv = 0.5 * (i3 + su);
    let dvp_dvs = 0.5 * (i3 - su);
    let dvsp_dv = 0.5 * (i3 - su);
    let dvsp_dvs = 0.5 * (i3 + su);
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(kappa * dvp_dv + (1.0 - kappa) * i3));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(kappa * dvp_dvs));
    j.fixed_view_mut::<3, 3>(3, 0).copy_from(&(iota * dvsp_dv));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&(iota * dvsp_dvs + (1.0 - iota) * i3));
    j.determinant()
}

fn rel(closed: f64, oracle: f64) -> f64 {
    if closed == oracle {
        0.0
    } else {
        (closed - oracle).abs() / closed.abs().max(oracle.abs())
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = x.norm();
        if n > 0.1 && n <= 1.0 {
            return x / n;
        }
    }
}

/// Relative velocity pair plus a σ at angle θ from v − v_*.
fn collision_at(rng: &mut ChaCha8Rng, theta: f64) -> (Vec3, Vec3, Vec3) {
    let v_star = 1.5 * unit(rng) * rng.gen_range(0.0..1.0);
    let r = rng.gen_range(0.2..3.0);
    let uhat = unit(rng);
    let mut perp = unit(rng).cross(&uhat);
    while perp.norm() < 1e-3 {
        perp = unit(rng).cross(&uhat);
    }
    perp /= perp.norm();
    let sigma = theta.cos() * uhat + theta.sin() * perp;
    (v_star + r * uhat, v_star, sigma / sigma.norm())
}

/// Runs all identities at `samples` parameter points each.
pub fn identity_suite(samples: usize, seed: u64, tolerance: f64) -> Result<IdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut push = |identity: &str, p1: f64, p2: f64, closed: f64, oracle: f64| {
        rows.push(IdentityRow { identity: identity.into(), p1, p2, closed, oracle, rel_residual: rel(closed, oracle) });
    };
    let s_at = |k: usize| 0.05 + 0.9 * (k as f64 + 0.5) / samples as f64;
    for k in 0..samples {
        let s = s_at(k);
        push("momentum_transfer_moment", s, 0.0, kernel::momentum_transfer_moment(s)?, oracle::momentum_transfer_moment(s)?);
    }
    for k in 0..samples {
        let s = s_at(k);
        push("sin4_moment", s, 0.0, kernel::sin4_moment(s)?, oracle::sin4_moment(s)?);
    }
    for k in 0..samples {
        let s = s_at(k);
        let xi = rng.gen_range(0.05..SQRT_2);
        push("angular_symbol_a_low", s, xi, kernel::angular_symbol_a(s, xi)?, oracle::angular_symbol_a(s, xi)?);
    }
    for k in 0..samples {
        let s = s_at(k);
        let xi = SQRT_2 * (1.0 + rng.gen_range(0.01..20.0));
        push("angular_symbol_a_high", s, xi, kernel::angular_symbol_a(s, xi)?, oracle::angular_symbol_a(s, xi)?);
    }
    for _ in 0..samples {
        let kappa = rng.gen_range(0.0..1.0);
        let iota = rng.gen_range(0.0..1.0);
        let theta = rng.gen_range(0.0..PI / 2.0);
        let (v, vs, sigma) = collision_at(&mut rng, theta);
        let a = kappa + iota;
        push("psi_a", a, theta, kernel::change_of_var_psi(a, theta)?, psi_geometric(&v, &vs, &sigma, kappa, iota)?);
    }
    for _ in 0..samples {
        let kappa = rng.gen_range(0.0..1.0);
        let iota = rng.gen_range(0.0..1.0);
        let theta = rng.gen_range(0.0..PI / 2.0);
        let (v, vs, sigma) = collision_at(&mut rng, theta);
        let a = kappa + iota;
        push("alpha_a", a, theta, kernel::change_of_var_alpha(a, theta)?, alpha_jacobian(&v, &vs, &sigma, kappa, iota));
    }
    let mut summary: Vec<IdentitySummary> = Vec::new();
    for r in &rows {
        match summary.last_mut() {
            Some(s) if s.identity == r.identity => {
                s.samples += 1;
                s.max_rel_residual = s.max_rel_residual.max(r.rel_residual);
            }
            _ => summary.push(IdentitySummary { identity: r.identity.clone(), samples: 1, max_rel_residual: r.rel_residual, pass: true }),
        }
    }
    for s in &mut summary {
        s.pass = s.max_rel_residual <= tolerance;
    }
    let pass = summary.iter().all(|s| s.pass);
    Ok(IdentityReport { tolerance, rows, summary, pass })
}
