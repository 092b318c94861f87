//! Linearization around μ: Γ, ℒ, the macroscopic projection, Galerkin
//! matrices and their spectra.
//!
//! Galerkin elements are φ_i = √μ p_i with p_i orthonormal for the weight μ.
//! Then ⟨Γ(φ_i, φ_j), φ_k⟩ = ⟨Q(μp_i, μp_j), p_k⟩, and in centre-of-mass
//! coordinates μ(V − u/2)μ(V + u/2) = (2π)^{−3} e^{−|V|²−|u|²/4}, so the
//! V-integral is Gauss-Hermite exact and the |u| integral is generalized
//! Gauss-Laguerre exact. Only the σ-integral (inside the increment moments)
//! carries quadrature error.

use crate::boltzmann::{
    eval_q, increment_moments, multi_slot, weak_q_with_scale, AngularPlan, AngularSpec, Estimate, EvalConfig,
    TestFunction, MULTI,
};
use crate::error::{Error, Result};
use crate::field::{Poly, SmoothField};
use crate::geometry::{DirectionRule, Vec3};
use crate::kernel::{momentum_transfer_moment, KernelParams};
use crate::landau::{eval_ql, weak_ql_with_scale};
use crate::quadrature;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use crate::harmonic::{anisotropic_norm, HarmonicExpansion, NormParts};

/// Which collision operator is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operator {
    Boltzmann(KernelParams),
    Landau { gamma: f64 },
}

impl Operator {
    pub fn gamma(&self) -> f64 {
        match self {
            Operator::Boltzmann(p) => p.gamma,
            Operator::Landau { gamma } => *gamma,
        }
    }

    /// s, with the Landau endpoint at 1.
    pub fn s(&self) -> f64 {
        match self {
            Operator::Boltzmann(p) => p.s,
            Operator::Landau { .. } => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Operator::Boltzmann(p) => p.check_operator_grade(),
            Operator::Landau { gamma } if *gamma > -5.0 && gamma.is_finite() => Ok(()),
            Operator::Landau { gamma } => Err(Error::Domain(format!("Landau exponent gamma = {gamma} must exceed -5"))),
        }
    }
}

/// E[x^n] for a standard normal variable.
fn normal_moment(n: u32) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        (1..n).step_by(2).map(|k| k as f64).product()
    }
}

/// ∫ μ p q dv, exact.
pub fn mu_inner(p: &Poly, q: &Poly) -> f64 {
    let mut sum = 0.0;
    for a in p.terms() {
        for b in q.terms() {
            sum += a.coef
                * b.coef
                * (0..3).map(|i| normal_moment(a.exp[i] + b.exp[i])).product::<f64>();
        }
    }
    sum
}

fn kernel_polys() -> Vec<Poly> {
    let r6 = 1.0 / 6f64.sqrt();
    vec![
        Poly::constant(1.0),
        Poly::monomial([1, 0, 0], 1.0).unwrap(),
        Poly::monomial([0, 1, 0], 1.0).unwrap(),
        Poly::monomial([0, 0, 1], 1.0).unwrap(),
        Poly::from_pairs(&[([2, 0, 0], r6), ([0, 2, 0], r6), ([0, 0, 2], r6), ([0, 0, 0], -3.0 * r6)]).unwrap(),
    ]
}

/// ∫ f g dv on a radius × sphere product rule.
fn radial_sphere_inner(f: &SmoothField, g: &SmoothField) -> f64 {
    let radial = quadrature::composite(0.0, 14.0, &[], 1.0, 12);
    let dirs = DirectionRule::product(16, 32);
    let mut sum = 0.0;
    for (r, wr) in radial.x.iter().zip(&radial.w) {
        let mut s = 0.0;
        for (om, wd) in dirs.dirs.iter().zip(&dirs.w) {
            let v = *r * om;
            s += wd * f.eval(&v) * g.eval(&v);
        }
        sum += wr * r * r * s;
    }
    sum
}

fn gram_defect_by_quadrature(fields: &[SmoothField]) -> f64 {
    let n = fields.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let want = if i == j { 1.0 } else { 0.0 };
            (radial_sphere_inner(&fields[i], &fields[j]) - want).abs()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// e₁..e₅ = √μ {1, v₁, v₂, v₃, (|v|² − 3)/√6}.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub polys: Vec<Poly>,
    pub e: Vec<SmoothField>,
}

impl KernelBasis {
    pub fn new() -> KernelBasis {
        let polys = kernel_polys();
        let e = polys.iter().cloned().map(SmoothField::sqrt_maxwellian_times).collect();
        KernelBasis { polys, e }
    }

    /// max |⟨e_i, e_j⟩ − δ_ij| by radial-sphere quadrature.
    pub fn gram_defect(&self) -> f64 {
        gram_defect_by_quadrature(&self.e)
    }
}

impl Default for KernelBasis {
    fn default() -> Self {
        KernelBasis::new()
    }
}

/// √μ times polynomials of total degree ≤ D, orthonormal; the first five
/// members are the kernel basis.
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    pub degree: u32,
    pub polys: Vec<Poly>,
    pub fields: Vec<SmoothField>,
}

pub const KERNEL_DIM: usize = 5;

impl GalerkinBasis {
    pub fn new(degree: u32) -> Result<GalerkinBasis> {
        if !(2..=4).contains(&degree) {
            return Err(Error::Capacity(degree as usize));
        }
        let mut candidates = kernel_polys();
        candidates.extend(
            MULTI
                .iter()
                .filter(|e| e.iter().sum::<u32>() <= degree)
                .map(|&e| Poly::monomial(e, 1.0).unwrap()),
        );
        let mut polys: Vec<Poly> = Vec::new();
        for cand in candidates {
            let n0 = mu_inner(&cand, &cand).sqrt();
            let mut q = cand;
            for _ in 0..2 {
                for p in &polys {
                    let c = mu_inner(&q, p);
                    q = q.add(&p.scale(-c));
                }
            }
            let n = mu_inner(&q, &q).sqrt();
            if n > 1e-8 * n0 {
                polys.push(q.scale(1.0 / n));
            }
        }
        let d = degree as usize;
        let want = (d + 1) * (d + 2) * (d + 3) / 6;
        if polys.len() != want {
            return Err(Error::Spec(format!("basis conditioning: {} of {want} functions survived", polys.len())));
        }
        let fields = polys.iter().cloned().map(SmoothField::sqrt_maxwellian_times).collect();
        Ok(GalerkinBasis { degree, polys, fields })
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// max |G − I| from exact Gaussian moments.
    pub fn exact_gram_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, p) in self.polys.iter().enumerate() {
            for (j, q) in self.polys.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((mu_inner(p, q) - want).abs());
            }
        }
        worst
    }

    /// max |G − I| with G from radial-sphere quadrature.
    pub fn gram_defect(&self) -> f64 {
        gram_defect_by_quadrature(&self.fields)
    }

    /// c_i = ⟨f, φ_i⟩.
    pub fn coords(&self, f: &SmoothField) -> Result<Vec<f64>> {
        let g = f.multiply_sqrt_mu()?;
        self.polys.iter().map(|p| g.moment(p)).collect()
    }

    /// Σ c_i φ_i.
    pub fn field(&self, c: &[f64]) -> SmoothField {
        SmoothField::sqrt_maxwellian_times(self.poly(c))
    }

    /// Σ c_i p_i.
    pub fn poly(&self, c: &[f64]) -> Poly {
        self.polys.iter().zip(c).fold(Poly::default(), |acc, (p, &ci)| acc.add(&p.scale(ci)))
    }

    /// Row i holds the monomial coefficients of p_i in `MULTI` order.
    fn coefficient_rows(&self) -> Vec<[f64; 35]> {
        self.polys
            .iter()
            .map(|p| {
                let mut row = [0.0; 35];
                for m in p.terms() {
                    row[multi_slot(m.exp)] += m.coef;
                }
                row
            })
            .collect()
    }
}

/// Coefficients of the macroscopic projection and Pf itself.
#[derive(Debug, Clone)]
pub struct Projection {
    pub a: f64,
    pub b: Vec3,
    pub c: f64,
    pub pf: SmoothField,
}

/// Pf = (a + b·v + c|v|²)√μ.
pub fn project_p(f: &SmoothField) -> Result<Projection> {
    let g = f.multiply_sqrt_mu()?;
    let sq = [([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)];
    let m0 = g.moment(&Poly::constant(1.0))?;
    let m2 = g.moment(&Poly::from_pairs(&sq)?)?;
    let a = 2.5 * m0 - 0.5 * m2;
    let c = m2 / 6.0 - 0.5 * m0;
    let mut b = Vec3::zeros();
    for i in 0..3 {
        let mut e = [0; 3];
        e[i] = 1;
        b[i] = g.moment(&Poly::monomial(e, 1.0)?)?;
    }
    let poly = Poly::from_pairs(&[
        ([0, 0, 0], a),
        ([1, 0, 0], b[0]),
        ([0, 1, 0], b[1]),
        ([0, 0, 1], b[2]),
        ([2, 0, 0], c),
        ([0, 2, 0], c),
        ([0, 0, 2], c),
    ])?;
    Ok(Projection { a, b, c, pf: SmoothField::sqrt_maxwellian_times(poly) })
}

fn inv_sqrt_mu(v: &Vec3) -> f64 {
    (2.0 * PI).powf(0.75) * (0.25 * v.norm_squared()).exp()
}

/// Γ(g, h)(v) = μ^{−1/2} Q(√μ g, √μ h)(v).
pub fn gamma_bilinear(op: &Operator, g: &SmoothField, h: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    op.validate()?;
    let (sg, sh) = (g.multiply_sqrt_mu()?, h.multiply_sqrt_mu()?);
    let q = match op {
        Operator::Boltzmann(p) => eval_q(p, &sg, &sh, v, cfg)?,
        Operator::Landau { gamma } => eval_ql(*gamma, &sg, &sh, v, cfg)?,
    };
    let w = inv_sqrt_mu(v);
    Ok(Estimate { value: w * q.value, error: w * q.error, tolerance: q.tolerance })
}

/// ℒf(v) = −Γ(√μ, f)(v) − Γ(f, √μ)(v).
pub fn l_apply(op: &Operator, f: &SmoothField, v: &Vec3, cfg: &EvalConfig) -> Result<Estimate> {
    let m = SmoothField::sqrt_maxwellian();
    let a = gamma_bilinear(op, &m, f, v, cfg)?;
    let b = gamma_bilinear(op, f, &m, v, cfg)?;
    Ok(Estimate { value: -(a.value + b.value), error: a.error + b.error, tolerance: a.tolerance })
}

// ---------------------------------------------------------------------------
// Galerkin engine

/// Rules for Galerkin matrix elements. Everything except the σ-rule is
/// exact for degree-4 bases at the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GalerkinConfig {
    pub angular: AngularSpec,
    /// Gauss-Hermite nodes per axis in V
    pub n_hermite: usize,
    /// direction rule for u
    pub dir_theta: usize,
    pub dir_phi: usize,
    /// generalized Gauss-Laguerre nodes in |u|²/4
    pub n_radial: usize,
    pub tolerance: f64,
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        GalerkinConfig { angular: AngularSpec::default(), n_hermite: 6, dir_theta: 8, dir_phi: 14, n_radial: 5, tolerance: 1e-6 }
    }
}

impl GalerkinConfig {
    pub fn refined(&self) -> GalerkinConfig {
        let mut c = self.clone();
        c.angular.per_panel += 4;
        c.angular.n_phi += 4;
        c.n_hermite += 1;
        c.dir_theta += 2;
        c.dir_phi += 2;
        c.n_radial += 1;
        c
    }

    fn validate(&self) -> Result<()> {
        if self.n_hermite == 0 || self.dir_theta == 0 || self.n_radial == 0 || self.dir_phi == 0 {
            return Err(Error::Spec("empty Galerkin rule".into()));
        }
        if !self.angular.n_phi.is_multiple_of(2) || self.angular.n_phi == 0 {
            return Err(Error::Spec("sigma rule needs a positive even azimuth count".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Spec("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Full,
    /// only entries with i = 0 or j = 0, enough for ℒ
    Slices,
}

fn mono35(x: &Vec3) -> [f64; 35] {
    let mut pw = [[1.0; 5]; 3];
    for i in 0..3 {
        for k in 1..5 {
            pw[i][k] = pw[i][k - 1] * x[i];
        }
    }
    let mut out = [0.0; 35];
    for (o, e) in out.iter_mut().zip(MULTI.iter()) {
        *o = pw[0][e[0] as usize] * pw[1][e[1] as usize] * pw[2][e[2] as usize];
    }
    out
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).map(|j| (n - j) as f64 / (j + 1) as f64).product()
}

/// Monomial coefficients (in V) of Φ_k(V, u) = ⟨weak increment of p_k⟩.
fn phi_rows(op: &Operator, polys: &[Poly], ang: Option<&AngularPlan>, dir: usize, r: f64, om: &Vec3) -> Vec<[f64; 35]> {
    match op {
        Operator::Boltzmann(_) => {
            let a = increment_moments(ang.expect("angular plan"), dir, r);
            polys
                .iter()
                .map(|p| {
                    let mut row = [0.0; 35];
                    for m in p.terms() {
                        let al = m.exp;
                        for b0 in 0..=al[0] {
                            for b1 in 0..=al[1] {
                                for b2 in 0..=al[2] {
                                    if b0 + b1 + b2 == 0 {
                                        continue;
                                    }
                                    let c = binom(al[0], b0) * binom(al[1], b1) * binom(al[2], b2);
                                    row[multi_slot([al[0] - b0, al[1] - b1, al[2] - b2])] +=
                                        m.coef * c * a[multi_slot([b0, b1, b2])];
                                }
                            }
                        }
                    }
                    row
                })
                .collect()
        }
        Operator::Landau { .. } => {
            // π r²(Δp − ω·∇²p ω) − 4π r ω·∇p at v = V + u/2
            let shift = 0.5 * r * om;
            polys
                .iter()
                .map(|p| {
                    let q = p.translate(&shift);
                    let mut row = [0.0; 35];
                    for m in q.terms() {
                        let al = m.exp;
                        for i in 0..3 {
                            if al[i] == 0 {
                                continue;
                            }
                            let mut e = al;
                            e[i] -= 1;
                            row[multi_slot(e)] -= 4.0 * PI * r * om[i] * m.coef * al[i] as f64;
                            for j in 0..3 {
                                if e[j] == 0 {
                                    continue;
                                }
                                let mut f = e;
                                f[j] -= 1;
                                let proj = if i == j { 1.0 } else { 0.0 } - om[i] * om[j];
                                row[multi_slot(f)] += PI * r * r * proj * m.coef * al[i] as f64 * e[j] as f64;
                            }
                        }
                    }
                    row
                })
                .collect()
        }
    }
}

/// Raw T_ijk = ⟨Γ(φ_i, φ_j), φ_k⟩, layout [(i·n + j)·n + k].
fn tensor_engine(op: &Operator, basis: &GalerkinBasis, cfg: &GalerkinConfig, part: Part) -> Result<Vec<f64>> {
    op.validate()?;
    cfg.validate()?;
    let gamma = op.gamma();
    let n = basis.len();
    let ang = match op {
        Operator::Boltzmann(p) => Some(AngularPlan::new(p.s, &cfg.angular, cfg.dir_theta, cfg.dir_phi)?),
        Operator::Landau { .. } => None,
    };
    let dirs = match &ang {
        Some(a) => a.dirs.clone(),
        None => DirectionRule::product(cfg.dir_theta, cfg.dir_phi),
    };
    // ∫ r^{2+γ} e^{−r²/4} G(r) dr with G = O(r²): x = r²/4, weight x^{(γ+3)/2}
    let lag = quadrature::gauss_laguerre(cfg.n_radial, 0.5 * (gamma + 3.0));
    let pref = (2.0 * PI).powi(-3);
    let mut cells = Vec::new();
    for (x, w) in lag.x.iter().zip(&lag.w) {
        let r = 2.0 * x.sqrt();
        let wr = pref * w * 2f64.powf(2.0 + gamma) / x;
        for (d, wd) in dirs.w.iter().enumerate() {
            cells.push((r, wr * wd, d));
        }
    }
    let gh = quadrature::gauss_hermite(cfg.n_hermite);
    let mut vnodes = Vec::new();
    for (x0, w0) in gh.x.iter().zip(&gh.w) {
        for (x1, w1) in gh.x.iter().zip(&gh.w) {
            for (x2, w2) in gh.x.iter().zip(&gh.w) {
                vnodes.push((Vec3::new(*x0, *x1, *x2), w0 * w1 * w2));
            }
        }
    }
    let prow = basis.coefficient_rows();
    let eval_rows = |rows: &[[f64; 35]], m: &[f64; 35], out: &mut [f64]| {
        for (o, row) in out.iter_mut().zip(rows) {
            *o = row.iter().zip(m).map(|(a, b)| a * b).sum();
        }
    };
    let chunk = 16;
    let partial: Vec<Vec<f64>> = cells
        .par_chunks(chunk)
        .map(|cs| {
            let mut t = vec![0.0; n * n * n];
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut f = vec![0.0; n];
            for &(r, w, d) in cs {
                let om = dirs.dirs[d];
                let hu = 0.5 * r * om;
                let phi = phi_rows(op, &basis.polys, ang.as_ref(), d, r, &om);
                for (big_v, wv) in &vnodes {
                    eval_rows(&prow, &mono35(&(big_v - hu)), &mut a);
                    eval_rows(&prow, &mono35(&(big_v + hu)), &mut b);
                    eval_rows(&phi, &mono35(big_v), &mut f);
                    let s = w * wv;
                    for fk in f.iter_mut() {
                        *fk *= s;
                    }
                    for i in 0..n {
                        if part == Part::Full || i == 0 {
                            for j in 0..n {
                                let ab = a[i] * b[j];
                                let row = &mut t[(i * n + j) * n..(i * n + j + 1) * n];
                                for (tk, fk) in row.iter_mut().zip(&f) {
                                    *tk += ab * fk;
                                }
                            }
                        } else {
                            let ab = a[i] * b[0];
                            let row = &mut t[(i * n) * n..(i * n + 1) * n];
                            for (tk, fk) in row.iter_mut().zip(&f) {
                                *tk += ab * fk;
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    let mut t = vec![0.0; n * n * n];
    for p in partial {
        for (a, b) in t.iter_mut().zip(&p) {
            *a += b;
        }
    }
    Ok(t)
}

/// L_ik = ⟨ℒφ_i, φ_k⟩ = −(T_1ik + T_i1k), not symmetrized.
fn l_from_tensor(t: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, k| -(t[i * n + k] + t[(i * n) * n + k]))
}

/// ⟨Γ(φ_i, φ_j), φ_k⟩ for all i, j, k, symmetrized in (i, j).
pub fn gamma_tensor(op: &Operator, basis: &GalerkinBasis, cfg: &GalerkinConfig) -> Result<GammaTensor> {
    let raw = tensor_engine(op, basis, cfg, Part::Full)?;
    let n = basis.len();
    let l_raw = l_from_tensor(&raw, n);
    let mut t = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                t[(i * n + j) * n + k] = 0.5 * (raw[(i * n + j) * n + k] + raw[(j * n + i) * n + k]);
            }
        }
    }
    Ok(GammaTensor { n, t, l_raw })
}

#[derive(Debug, Clone)]
pub struct GammaTensor {
    pub n: usize,
    /// symmetric in the first two indices
    pub t: Vec<f64>,
    /// ⟨ℒφ_i, φ_k⟩ from the same quadrature, before symmetrization
    pub l_raw: DMatrix<f64>,
}

impl GammaTensor {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.t[(i * self.n + j) * self.n + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// max over k < 5 of |T_ijk|: collision invariants are conserved.
    pub fn conservation_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for ij in 0..n * n {
            for k in 0..KERNEL_DIM.min(n) {
                worst = worst.max(self.t[ij * n + k].abs());
            }
        }
        worst
    }

    /// Frobenius norm, an upper bound for the trilinear form norm.
    pub fn norm(&self) -> f64 {
        self.t.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// T(c, c)_k = Σ_ij T_ijk c_i c_j.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            if c[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let cc = c[i] * c[j];
                if cc == 0.0 {
                    continue;
                }
                let row = &self.t[(i * n + j) * n..(i * n + j + 1) * n];
                for (o, t) in out.iter_mut().zip(row) {
                    *o += cc * t;
                }
            }
        }
    }
}

/// ⟨ℒφ_i, φ_k⟩ from the two Γ slices, before symmetrization.
pub fn l_matrix_raw(op: &Operator, basis: &GalerkinBasis, cfg: &GalerkinConfig) -> Result<DMatrix<f64>> {
    let t = tensor_engine(op, basis, cfg, Part::Slices)?;
    Ok(l_from_tensor(&t, basis.len()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// ‖M − Mᵀ‖_F / ‖M‖_F.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub s: f64,
    pub gamma: f64,
    pub basis_degree: u32,
    pub basis_size: usize,
    /// ascending
    pub eigenvalues: Vec<f64>,
    pub kernel_count: usize,
    /// smallest eigenvalue above the null cluster
    pub gap: f64,
    pub kernel_threshold: f64,
    pub min_eigenvalue: f64,
    /// max ‖M e_k‖ over the five kernel coordinate vectors
    pub kernel_residual: f64,
    pub asymmetry: f64,
    /// max entry change against the refined rule
    pub matrix_error: f64,
}

impl SpectrumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn positive_semidefinite(&self) -> bool {
        self.min_eigenvalue >= -1e-6 * self.gap
    }
}

/// Null-cluster split: threshold 1e-4 × (smallest eigenvalue above it),
/// iterated to a fixed point.
pub fn kernel_split(eig: &[f64]) -> (usize, f64, f64) {
    let top = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut gap = top;
    for _ in 0..eig.len() + 1 {
        let tau = 1e-4 * gap;
        let next = eig.iter().filter(|x| x.abs() > tau).fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if next == gap || !next.is_finite() {
            break;
        }
        gap = next;
    }
    let tau = 1e-4 * gap;
    (eig.iter().filter(|x| x.abs() <= tau).count(), gap, tau)
}

pub fn spectrum_of(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenpairs sorted by eigenvalue.
pub fn eigenpairs(m: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let e = SymmetricEigen::new(m.clone());
    let mut out: Vec<(f64, Vec<f64>)> =
        (0..m.ncols()).map(|k| (e.eigenvalues[k], e.eigenvectors.column(k).iter().copied().collect())).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// M_ik = ⟨ℒφ_i, φ_k⟩ (symmetrized) with its spectrum.
pub fn assemble_l_matrix(op: &Operator, basis: &GalerkinBasis, cfg: &GalerkinConfig) -> Result<(DMatrix<f64>, SpectrumReport)> {
    let defect = basis.exact_gram_defect();
    if defect > 1e-8 {
        return Err(Error::Spec(format!("basis is not orthonormal (Gram defect {defect:.2e})")));
    }
    let coarse = l_matrix_raw(op, basis, cfg)?;
    let fine = l_matrix_raw(op, basis, &cfg.refined())?;
    let matrix_error = (&fine - &coarse).amax();
    let scale = fine.amax();
    if matrix_error > cfg.tolerance * scale {
        return Err(Error::Tolerance { what: "Galerkin matrix".into(), estimate: matrix_error, tolerance: cfg.tolerance * scale });
    }
    let m = symmetrize(&fine);
    let report = spectrum_report(op, basis, &m, asymmetry(&fine), matrix_error);
    Ok((m, report))
}

pub fn spectrum_report(op: &Operator, basis: &GalerkinBasis, m: &DMatrix<f64>, asym: f64, matrix_error: f64) -> SpectrumReport {
    let eigenvalues = spectrum_of(m);
    let (kernel_count, gap, kernel_threshold) = kernel_split(&eigenvalues);
    let kernel_residual = (0..KERNEL_DIM.min(m.ncols())).map(|k| m.column(k).norm()).fold(0.0, f64::max);
    SpectrumReport {
        s: op.s(),
        gamma: op.gamma(),
        basis_degree: basis.degree,
        basis_size: basis.len(),
        min_eigenvalue: eigenvalues[0],
        eigenvalues,
        kernel_count,
        gap,
        kernel_threshold,
        kernel_residual,
        asymmetry: asym,
        matrix_error,
    }
}

// ---------------------------------------------------------------------------
// eigenfunction-quotient oracle

/// A Burnett-type polynomial: (radial order, angular degree, p).
pub fn burnett_polys() -> Vec<(&'static str, u32, u32, Poly)> {
    let p = |pairs: &[([u32; 3], f64)]| Poly::from_pairs(pairs).unwrap();
    vec![
        ("(1,1) v1(|v|^2-5)", 1, 1, p(&[([3, 0, 0], 1.0), ([1, 2, 0], 1.0), ([1, 0, 2], 1.0), ([1, 0, 0], -5.0)])),
        ("(0,2) v1 v2", 0, 2, p(&[([1, 1, 0], 1.0)])),
        (
            "(2,0) |v|^4-10|v|^2+15",
            2,
            0,
            p(&[
                ([4, 0, 0], 1.0),
                ([0, 4, 0], 1.0),
                ([0, 0, 4], 1.0),
                ([2, 2, 0], 2.0),
                ([2, 0, 2], 2.0),
                ([0, 2, 2], 2.0),
                ([2, 0, 0], -10.0),
                ([0, 2, 0], -10.0),
                ([0, 0, 2], -10.0),
                ([0, 0, 0], 15.0),
            ]),
        ),
        ("(0,3) v1 v2 v3", 0, 3, p(&[([1, 1, 1], 1.0)])),
        ("(1,2) v1 v2(|v|^2-7)", 1, 2, p(&[([3, 1, 0], 1.0), ([1, 3, 0], 1.0), ([1, 1, 2], 1.0), ([1, 1, 0], -7.0)])),
        ("(0,4) v1 v2(v1^2-v2^2)", 0, 4, p(&[([3, 1, 0], 1.0), ([1, 3, 0], -1.0)])),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnettQuotient {
    pub label: String,
    pub n: u32,
    pub l: u32,
    pub quotient: f64,
}

/// ⟨ℒφ, φ⟩/⟨φ, φ⟩ for φ = √μ p, where
/// ⟨ℒφ, φ⟩ = −⟨Q(μ, μp) + Q(μp, μ), p⟩, from the generic weak form.
pub fn rayleigh_quotient(op: &Operator, p: &Poly, cfg: &EvalConfig) -> Result<f64> {
    let mu = SmoothField::maxwellian();
    let mp = SmoothField::maxwellian_times(p.clone());
    let phi = TestFunction::Poly(p.clone());
    let w = |g: &SmoothField, h: &SmoothField| -> Result<f64> {
        Ok(match op {
            Operator::Boltzmann(k) => weak_q_with_scale(k, g, h, &phi, cfg)?.0,
            Operator::Landau { gamma } => weak_ql_with_scale(*gamma, g, h, &phi, cfg)?.0,
        })
    };
    let num = -(w(&mu, &mp)? + w(&mp, &mu)?);
    Ok(num / mu_inner(p, p))
}

pub fn burnett_quotients(op: &Operator, cfg: &EvalConfig) -> Result<Vec<BurnettQuotient>> {
    burnett_polys()
        .into_iter()
        .map(|(label, n, l, p)| Ok(BurnettQuotient { label: label.to_string(), n, l, quotient: rayleigh_quotient(op, &p, cfg)? }))
        .collect()
}

/// Oracle rule: graded |u| rule as for pointwise values, with a u-direction
/// rule fine enough for azimuthal frequencies up to 12 and Hermite nodes
/// exact for the degree-11 V integrand.
pub fn oracle_config() -> EvalConfig {
    EvalConfig { dir_theta: 10, dir_phi: 14, n_hermite: 6, ..EvalConfig::default() }
}

// ---------------------------------------------------------------------------
// gap scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScaling {
    pub gamma: f64,
    pub s_values: Vec<f64>,
    pub gaps: Vec<f64>,
    pub moments: Vec<f64>,
    /// λ̂(s)/M(s)
    pub ratios: Vec<f64>,
    /// least-squares c in λ̂ ≈ c·M(s)
    pub fitted_c: f64,
    pub min_ratio: f64,
    pub kernel_counts: Vec<usize>,
}

pub fn gap_scaling(gamma: f64, s_values: &[f64], basis: &GalerkinBasis, cfg: &GalerkinConfig) -> Result<GapScaling> {
    let reports = s_values
        .iter()
        .map(|&s| Ok(assemble_l_matrix(&Operator::Boltzmann(KernelParams::operator(s, gamma, 1.0)?), basis, cfg)?.1))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = reports.iter().map(|r| r.gap).collect();
    let moments = s_values.iter().map(|&s| momentum_transfer_moment(s)).collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = gaps.iter().zip(&moments).map(|(g, m)| g / m).collect();
    let fitted_c = gaps.iter().zip(&moments).map(|(g, m)| g * m).sum::<f64>() / moments.iter().map(|m| m * m).sum::<f64>();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GapScaling {
        gamma,
        s_values: s_values.to_vec(),
        gaps,
        moments,
        ratios,
        fitted_c,
        min_ratio,
        kernel_counts: reports.iter().map(|r| r.kernel_count).collect(),
    })
}
