//! Real spherical-harmonic expansions and the anisotropic norm
//! |f|²_{s,l} = |W_s((−Δ_S²)^{1/2}) W_l f|² + |W_s(D) W_l f|² + |W_s W_l f|².

use crate::error::{Error, Result};
use crate::field::SmoothField;
use crate::geometry::Vec3;
use crate::quadrature;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Index of (l, m) in a degree-major layout, m = −l..l.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) + (m + l as i64) as usize
}

/// Orthonormal real harmonics Y_l^m(θ, φ) for l ≤ l_max.
pub fn real_harmonics(l_max: usize, cos_t: f64, phi: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize((l_max + 1) * (l_max + 1), 0.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    // normalized associated Legendre functions P̄_l^m, Σ_m |Y|² = (2l+1)/4π
    let mut p = vec![vec![0.0; l_max + 1]; l_max + 1];
    p[0][0] = (0.25 / PI).sqrt();
    for m in 1..=l_max {
        p[m][m] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sin_t * p[m - 1][m - 1];
    }
    for m in 0..l_max {
        p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * cos_t * p[m][m];
    }
    for m in 0..=l_max {
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (cos_t * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    let r2 = 2f64.sqrt();
    for l in 0..=l_max {
        out[lm_index(l, 0)] = p[l][0];
        for m in 1..=l {
            let (s, c) = (m as f64 * phi).sin_cos();
            out[lm_index(l, m as i64)] = r2 * p[l][m] * c;
            out[lm_index(l, -(m as i64))] = r2 * p[l][m] * s;
        }
    }
}

/// f_l^m(r) = ∫ Y_l^m(σ) f(rσ) dσ on a composite Gauss radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExpansion {
    pub l_max: usize,
    pub radii: Vec<f64>,
    /// dr weights (r² is applied by the norms)
    pub radial_weights: Vec<f64>,
    /// [radius][lm_index]
    pub coeffs: Vec<Vec<f64>>,
    /// ∫_S |f(rσ)|² dσ at each radius, for the Parseval check
    pub sphere_l2: Vec<f64>,
    /// Gauss nodes per radial panel (panels are consecutive node groups)
    pub per_panel: usize,
    pub r_max: f64,
}

impl HarmonicExpansion {
    /// Expands f on [0, r_max] with panels of width ≤ 1.
    pub fn from_field(f: &SmoothField, l_max: usize, r_max: f64) -> Result<HarmonicExpansion> {
        if !(r_max > 0.0) {
            return Err(Error::Spec("radial extent must be positive".into()));
        }
        let per_panel = 10;
        let radial = quadrature::composite(0.0, r_max, &[], 1.0, per_panel);
        let n_theta = 2 * l_max + 16;
        let n_phi = 2 * l_max + 32;
        let gl = quadrature::gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut sphere = Vec::new();
        let mut y = Vec::new();
        for (c, wc) in gl.x.iter().zip(&gl.w) {
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                real_harmonics(l_max, *c, phi, &mut y);
                let st = (1.0 - c * c).max(0.0).sqrt();
                sphere.push((Vec3::new(st * phi.cos(), st * phi.sin(), *c), wc * dphi, y.clone()));
            }
        }
        let nh = (l_max + 1) * (l_max + 1);
        let mut coeffs = Vec::with_capacity(radial.len());
        let mut sphere_l2 = Vec::with_capacity(radial.len());
        for &r in &radial.x {
            let mut c = vec![0.0; nh];
            let mut l2 = 0.0;
            for (om, w, y) in &sphere {
                let v = f.eval(&(r * om));
                l2 += w * v * v;
                for (ci, yi) in c.iter_mut().zip(y) {
                    *ci += w * v * yi;
                }
            }
            coeffs.push(c);
            sphere_l2.push(l2);
        }
        Ok(HarmonicExpansion { l_max, radii: radial.x, radial_weights: radial.w, coeffs, sphere_l2, per_panel, r_max })
    }

    /// max_r |Σ_lm |f_l^m(r)|² − ∫_S |f(rσ)|²| relative to max_r ∫_S |f|².
    pub fn parseval_defect(&self) -> f64 {
        let top = self.sphere_l2.iter().fold(0.0f64, |m, x| m.max(*x));
        let worst = self
            .coeffs
            .iter()
            .zip(&self.sphere_l2)
            .map(|(c, l2)| (c.iter().map(|x| x * x).sum::<f64>() - l2).abs())
            .fold(0.0, f64::max);
        worst / top.max(f64::MIN_POSITIVE)
    }

    /// Coefficients at an arbitrary radius by Lagrange interpolation on the panel.
    fn coeffs_at(&self, r: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if r >= self.r_max {
            return;
        }
        let n_panels = self.radii.len() / self.per_panel;
        let width = self.r_max / n_panels as f64;
        let p = ((r / width) as usize).min(n_panels - 1);
        let nodes = &self.radii[p * self.per_panel..(p + 1) * self.per_panel];
        for (a, xa) in nodes.iter().enumerate() {
            let mut la = 1.0;
            for (b, xb) in nodes.iter().enumerate() {
                if a != b {
                    la *= (r - xb) / (xa - xb);
                }
            }
            for (o, c) in out.iter_mut().zip(&self.coeffs[p * self.per_panel + a]) {
                *o += la * c;
            }
        }
    }

    /// Real reconstruction Σ f_l^m(r) Y_l^m(σ).
    pub fn reconstruct(&self, v: &Vec3, scratch: &mut Vec<f64>, coef: &mut [f64]) -> f64 {
        let r = v.norm();
        self.coeffs_at(r, coef);
        let (c, phi) = if r == 0.0 { (1.0, 0.0) } else { (v[2] / r, v[1].atan2(v[0])) };
        real_harmonics(self.l_max, c, phi, scratch);
        coef.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum()
    }
}

/// The three parts of |f|²_{s,l}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParts {
    pub spherical: f64,
    pub fourier: f64,
    pub plain: f64,
    /// |W_l f|² from the radial rule
    pub weighted_l2: f64,
    pub parseval_defect: f64,
    /// relative mismatch of the grid L² against the radial rule
    pub grid_defect: f64,
}

impl NormParts {
    pub fn norm(&self) -> f64 {
        (self.spherical + self.fourier + self.plain).sqrt()
    }
}

/// Grid for the Fourier part: `n` points per axis over [−half, half).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierGrid {
    pub n: usize,
    pub half: f64,
}

impl Default for FourierGrid {
    fn default() -> Self {
        FourierGrid { n: 64, half: 8.0 }
    }
}

const PARSEVAL_TOL: f64 = 1e-6;

/// |f|_{s,l}; fails when the harmonic truncation or the grid does not
/// reproduce the L² norm to 1e-6.
pub fn anisotropic_norm(f: &HarmonicExpansion, s: f64, l: f64) -> Result<f64> {
    Ok(anisotropic_parts(f, s, l, &FourierGrid::default())?.norm())
}

pub fn anisotropic_parts(f: &HarmonicExpansion, s: f64, l: f64, grid: &FourierGrid) -> Result<NormParts> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("s = {s} must lie in [0, 1]")));
    }
    let parseval_defect = f.parseval_defect();
    if parseval_defect > PARSEVAL_TOL {
        return Err(Error::Tolerance { what: "harmonic truncation (Parseval)".into(), estimate: parseval_defect, tolerance: PARSEVAL_TOL });
    }
    let (mut spherical, mut plain, mut weighted_l2) = (0.0, 0.0, 0.0);
    for ((r, w), c) in f.radii.iter().zip(&f.radial_weights).zip(&f.coeffs) {
        let wl2 = (1.0 + r * r).powf(l);
        let mut sph = 0.0;
        let mut tot = 0.0;
        for deg in 0..=f.l_max {
            let lam = (1.0 + (deg * (deg + 1)) as f64).powf(s);
            for m in -(deg as i64)..=deg as i64 {
                let x = c[lm_index(deg, m)];
                sph += lam * x * x;
                tot += x * x;
            }
        }
        let dv = w * r * r * wl2;
        spherical += dv * sph;
        plain += dv * (1.0 + r * r).powf(s) * tot;
        weighted_l2 += dv * tot;
    }
    let (fourier, grid_l2) = fourier_part(f, s, l, grid)?;
    let grid_defect = (grid_l2 - weighted_l2).abs() / weighted_l2.max(f64::MIN_POSITIVE);
    if grid_defect > PARSEVAL_TOL {
        return Err(Error::Tolerance { what: "Fourier grid resolution".into(), estimate: grid_defect, tolerance: PARSEVAL_TOL });
    }
    Ok(NormParts { spherical, fourier, plain, weighted_l2, parseval_defect, grid_defect })
}

/// (2π)^{−3} ∫ ⟨ξ⟩^{2s} |ĝ|² dξ for g = W_l f, and h³ Σ |g|².
fn fourier_part(f: &HarmonicExpansion, s: f64, l: f64, grid: &FourierGrid) -> Result<(f64, f64)> {
    let n = grid.n;
    if n < 8 || !(grid.half > 0.0) {
        return Err(Error::Spec("Fourier grid too small".into()));
    }
    let h = 2.0 * grid.half / n as f64;
    let nh = (f.l_max + 1) * (f.l_max + 1);
    let mut data = vec![Complex::new(0.0, 0.0); n * n * n];
    let mut scratch = Vec::new();
    let mut coef = vec![0.0; nh];
    let mut grid_l2 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let v = Vec3::new(-grid.half + a as f64 * h, -grid.half + b as f64 * h, -grid.half + c as f64 * h);
                let g = (1.0 + v.norm_squared()).powf(0.5 * l) * f.reconstruct(&v, &mut scratch, &mut coef);
                grid_l2 += g * g;
                data[(a * n + b) * n + c] = Complex::new(g, 0.0);
            }
        }
    }
    grid_l2 *= h * h * h;
    fft3(&mut data, n);
    let dxi = 2.0 * PI / (n as f64 * h);
    let freq = |k: usize| if k < n / 2 { k as f64 } else { k as f64 - n as f64 } * dxi;
    let mut sum = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let xi2 = freq(a).powi(2) + freq(b).powi(2) + freq(c).powi(2);
                sum += (1.0 + xi2).powf(s) * data[(a * n + b) * n + c].norm_sqr();
            }
        }
    }
    Ok((sum * h.powi(3) / (n * n * n) as f64, grid_l2))
}

fn fft3(data: &mut [Complex<f64>], n: usize) {
    let fft = FftPlanner::new().plan_fft_forward(n);
    // last axis is contiguous
    for line in data.chunks_mut(n) {
        fft.process(line);
    }
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for a in 0..n {
        for c in 0..n {
            for b in 0..n {
                buf[b] = data[(a * n + b) * n + c];
            }
            fft.process(&mut buf);
            for b in 0..n {
                data[(a * n + b) * n + c] = buf[b];
            }
        }
    }
    for b in 0..n {
        for c in 0..n {
            for a in 0..n {
                buf[a] = data[(a * n + b) * n + c];
            }
            fft.process(&mut buf);
            for a in 0..n {
                data[(a * n + b) * n + c] = buf[a];
            }
        }
    }
}
