//! Gaussian × polynomial velocity fields with closed-form derivatives to third order.

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_DEGREE: u32 = 4;

pub type Tensor3 = [[[f64; 3]; 3]; 3];

/// Sparse polynomial in v, total degree ≤ [`MAX_DEGREE`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    terms: Vec<Monomial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exp: [u32; 3],
    pub coef: f64,
}

fn degree(e: &[u32; 3]) -> u32 {
    e[0] + e[1] + e[2]
}

impl Poly {
    pub fn new(mut terms: Vec<Monomial>) -> Result<Poly> {
        if let Some(m) = terms.iter().find(|m| degree(&m.exp) > MAX_DEGREE) {
            return Err(Error::Capacity(degree(&m.exp) as usize));
        }
        if terms.iter().any(|m| !m.coef.is_finite()) {
            return Err(Error::Domain("non-finite polynomial coefficient".into()));
        }
        terms.sort_by_key(|m| (degree(&m.exp), m.exp));
        let mut out: Vec<Monomial> = Vec::with_capacity(terms.len());
        for m in terms {
            match out.last_mut() {
                Some(last) if last.exp == m.exp => last.coef += m.coef,
                _ => out.push(m),
            }
        }
        out.retain(|m| m.coef != 0.0);
        Ok(Poly { terms: out })
    }

    pub fn constant(c: f64) -> Poly {
        Poly::new(vec![Monomial { exp: [0, 0, 0], coef: c }]).expect("constant polynomial")
    }

    pub fn monomial(exp: [u32; 3], coef: f64) -> Result<Poly> {
        Poly::new(vec![Monomial { exp, coef }])
    }

    /// Build from (exponent, coefficient) pairs.
    pub fn from_pairs(pairs: &[([u32; 3], f64)]) -> Result<Poly> {
        Poly::new(pairs.iter().map(|&(exp, coef)| Monomial { exp, coef }).collect())
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|m| degree(&m.exp)).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        let pw = powers(v);
        self.terms
            .iter()
            .map(|m| m.coef * pw[0][m.exp[0] as usize] * pw[1][m.exp[1] as usize] * pw[2][m.exp[2] as usize])
            .sum()
    }

    /// ∂^d p at v.
    pub fn partial(&self, d: [u32; 3], v: &Vec3) -> f64 {
        let pw = powers(v);
        let mut sum = 0.0;
        for m in &self.terms {
            let mut t = m.coef;
            for i in 0..3 {
                let n = m.exp[i];
                if d[i] > n {
                    t = 0.0;
                    break;
                }
                t *= falling(n, d[i]) * pw[i][(n - d[i]) as usize];
            }
            sum += t;
        }
        sum
    }

    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(Monomial {
                    exp: [a.exp[0] + b.exp[0], a.exp[1] + b.exp[1], a.exp[2] + b.exp[2]],
                    coef: a.coef * b.coef,
                });
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut t = self.terms.clone();
        t.extend_from_slice(&other.terms);
        Poly::new(t).expect("sum of admissible polynomials")
    }

    pub fn scale(&self, c: f64) -> Poly {
        Poly::new(self.terms.iter().map(|m| Monomial { exp: m.exp, coef: c * m.coef }).collect())
            .expect("scaled polynomial")
    }

    /// q(x) = p(x + d).
    pub fn translate(&self, d: &Vec3) -> Poly {
        let mut out = Vec::new();
        for m in &self.terms {
            for k0 in 0..=m.exp[0] {
                for k1 in 0..=m.exp[1] {
                    for k2 in 0..=m.exp[2] {
                        let c = m.coef
                            * binom(m.exp[0], k0)
                            * binom(m.exp[1], k1)
                            * binom(m.exp[2], k2)
                            * d[0].powi((m.exp[0] - k0) as i32)
                            * d[1].powi((m.exp[1] - k1) as i32)
                            * d[2].powi((m.exp[2] - k2) as i32);
                        out.push(Monomial { exp: [k0, k1, k2], coef: c });
                    }
                }
            }
        }
        Poly::new(out).expect("translation keeps the degree")
    }

    /// Sup of |(u·∇)^k p| over unit u and |v| ≤ rho.
    fn directional_bound(&self, k: u32, rho: f64) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                let n = degree(&m.exp);
                if k > n {
                    0.0
                } else {
                    m.coef.abs() * falling(n, k) * rho.powi((n - k) as i32)
                }
            })
            .sum()
    }
}

fn powers(v: &Vec3) -> [[f64; 5]; 3] {
    let mut pw = [[1.0; 5]; 3];
    for i in 0..3 {
        for k in 1..5 {
            pw[i][k] = pw[i][k - 1] * v[i];
        }
    }
    pw
}

fn falling(n: u32, k: u32) -> f64 {
    (0..k).map(|j| (n - j) as f64).product()
}

fn binom(n: u32, k: u32) -> f64 {
    falling(n, k) / falling(k, k)
}

/// ∫_R x^n e^{−a x²} dx.
pub fn gaussian_moment_1d(n: u32, a: f64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    // Γ((n+1)/2) / a^{(n+1)/2}, with Γ(1/2) = √π
    let mut g = PI.sqrt();
    let mut x = 0.5;
    while x < 0.5 * (n as f64 + 1.0) - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g / a.powf(0.5 * (n as f64 + 1.0))
}

/// ∫ v^e exp(−a|v − c|²) dv for any multi-index e.
pub fn gaussian_monomial_moment(e: [u32; 3], a: f64, c: &Vec3) -> f64 {
    (0..3)
        .map(|i| {
            (0..=e[i])
                .map(|k| binom(e[i], k) * c[i].powi((e[i] - k) as i32) * gaussian_moment_1d(k, a))
                .sum::<f64>()
        })
        .product()
}

/// One term c·p(v)·exp(−a|v − v₀|²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub poly: Poly,
    pub width: f64,
    pub center: [f64; 3],
}

impl Term {
    fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }
}

/// Derivatives of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
    pub third: Tensor3,
}

impl Jet {
    fn zero() -> Jet {
        Jet { value: 0.0, grad: Vec3::zeros(), hess: Mat3::zeros(), third: [[[0.0; 3]; 3]; 3] }
    }
}

/// Σ c·p(v)·exp(−a|v − v₀|²), a > 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SmoothField {
    pub terms: Vec<Term>,
}

// multi-indices with |d| ≤ 3
const DERIVS: [[u32; 3]; 20] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
    [3, 0, 0],
    [2, 1, 0],
    [2, 0, 1],
    [1, 2, 0],
    [1, 1, 1],
    [1, 0, 2],
    [0, 3, 0],
    [0, 2, 1],
    [0, 1, 2],
    [0, 0, 3],
];

fn multi_index(idx: &[usize]) -> [u32; 3] {
    let mut d = [0; 3];
    for &i in idx {
        d[i] += 1;
    }
    d
}

fn deriv_slot(d: [u32; 3]) -> usize {
    DERIVS.iter().position(|e| *e == d).expect("derivative order ≤ 3")
}

impl SmoothField {
    pub fn new(terms: Vec<Term>) -> Result<SmoothField> {
        for t in &terms {
            if !(t.width > 0.0 && t.width.is_finite()) {
                return Err(Error::Domain(format!("Gaussian width {} must be positive", t.width)));
            }
            if !t.coef.is_finite() || t.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain("non-finite field term".into()));
            }
            if t.poly.degree() > MAX_DEGREE {
                return Err(Error::Capacity(t.poly.degree() as usize));
            }
        }
        Ok(SmoothField { terms })
    }

    pub fn gaussian(coef: f64, poly: Poly, width: f64, center: Vec3) -> Result<SmoothField> {
        SmoothField::new(vec![Term { coef, poly, width, center: center.into() }])
    }

    /// The global Maxwellian μ = (2π)^{−3/2} e^{−|v|²/2}.
    pub fn maxwellian() -> SmoothField {
        SmoothField::gaussian((2.0 * PI).powf(-1.5), Poly::constant(1.0), 0.5, Vec3::zeros())
            .expect("Maxwellian")
    }

    /// √μ = (2π)^{−3/4} e^{−|v|²/4}.
    pub fn sqrt_maxwellian() -> SmoothField {
        SmoothField::gaussian((2.0 * PI).powf(-0.75), Poly::constant(1.0), 0.25, Vec3::zeros())
            .expect("root Maxwellian")
    }

    /// √μ·p for a polynomial p.
    pub fn sqrt_maxwellian_times(p: Poly) -> SmoothField {
        SmoothField::gaussian((2.0 * PI).powf(-0.75), p, 0.25, Vec3::zeros()).expect("root Maxwellian multiple")
    }

    /// μ·p for a polynomial p.
    pub fn maxwellian_times(p: Poly) -> SmoothField {
        SmoothField::gaussian((2.0 * PI).powf(-1.5), p, 0.5, Vec3::zeros()).expect("Maxwellian multiple")
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let x = v - t.center();
                t.coef * t.poly.eval(v) * (-t.width * x.norm_squared()).exp()
            })
            .sum()
    }

    pub fn jet(&self, v: &Vec3) -> Jet {
        let mut parts = [0.0; 20];
        for t in &self.terms {
            let x = v - t.center();
            let a = t.width;
            let e = t.coef * (-a * x.norm_squared()).exp();
            if e == 0.0 {
                continue;
            }
            // per-coordinate Hermite factors of the Gaussian
            let mut h = [[0.0; 4]; 3];
            for i in 0..3 {
                let y = x[i];
                h[i] = [
                    1.0,
                    -2.0 * a * y,
                    4.0 * a * a * y * y - 2.0 * a,
                    -8.0 * a * a * a * y * y * y + 12.0 * a * a * y,
                ];
            }
            let mut pd = [0.0; 20];
            for (k, d) in DERIVS.iter().enumerate() {
                pd[k] = t.poly.partial(*d, v);
            }
            for (k, d) in DERIVS.iter().enumerate() {
                let mut s = 0.0;
                for k0 in 0..=d[0] {
                    for k1 in 0..=d[1] {
                        for k2 in 0..=d[2] {
                            let c = binom(d[0], k0) * binom(d[1], k1) * binom(d[2], k2);
                            let ge = h[0][(d[0] - k0) as usize]
                                * h[1][(d[1] - k1) as usize]
                                * h[2][(d[2] - k2) as usize];
                            s += c * pd[deriv_slot([k0, k1, k2])] * ge;
                        }
                    }
                }
                parts[k] += e * s;
            }
        }
        let mut j = Jet::zero();
        j.value = parts[0];
        for i in 0..3 {
            j.grad[i] = parts[deriv_slot(multi_index(&[i]))];
            for k in 0..3 {
                j.hess[(i, k)] = parts[deriv_slot(multi_index(&[i, k]))];
                for l in 0..3 {
                    j.third[i][k][l] = parts[deriv_slot(multi_index(&[i, k, l]))];
                }
            }
        }
        j
    }

    /// Value and gradient without the higher derivatives.
    pub fn value_grad(&self, v: &Vec3) -> (f64, Vec3) {
        let mut val = 0.0;
        let mut grad = Vec3::zeros();
        for t in &self.terms {
            let x = v - t.center();
            let e = t.coef * (-t.width * x.norm_squared()).exp();
            if e == 0.0 {
                continue;
            }
            let p = t.poly.eval(v);
            val += e * p;
            for i in 0..3 {
                let mut d = [0; 3];
                d[i] = 1;
                grad[i] += e * (t.poly.partial(d, v) - 2.0 * t.width * x[i] * p);
            }
        }
        (val, grad)
    }

    /// Value, gradient and Hessian.
    pub fn value_grad_hess(&self, v: &Vec3) -> (f64, Vec3, Mat3) {
        let mut val = 0.0;
        let mut grad = Vec3::zeros();
        let mut hess = Mat3::zeros();
        for t in &self.terms {
            let x = v - t.center();
            let e = t.coef * (-t.width * x.norm_squared()).exp();
            if e == 0.0 {
                continue;
            }
            let a2 = 2.0 * t.width;
            let p = t.poly.eval(v);
            let mut dp = Vec3::zeros();
            for i in 0..3 {
                let mut d = [0; 3];
                d[i] = 1;
                dp[i] = t.poly.partial(d, v);
            }
            val += e * p;
            for i in 0..3 {
                grad[i] += e * (dp[i] - a2 * x[i] * p);
                for j in i..3 {
                    let mut d = [0; 3];
                    d[i] += 1;
                    d[j] += 1;
                    let mut hij = t.poly.partial(d, v) - a2 * (x[i] * dp[j] + x[j] * dp[i]) + a2 * a2 * x[i] * x[j] * p;
                    if i == j {
                        hij -= a2 * p;
                    }
                    hess[(i, j)] += e * hij;
                    if i != j {
                        hess[(j, i)] += e * hij;
                    }
                }
            }
        }
        (val, grad, hess)
    }

    pub fn grad(&self, v: &Vec3) -> Vec3 {
        self.value_grad(v).1
    }

    pub fn hess(&self, v: &Vec3) -> Mat3 {
        self.jet(v).hess
    }

    pub fn third(&self, v: &Vec3) -> Tensor3 {
        self.jet(v).third
    }

    pub fn add(&self, other: &SmoothField) -> SmoothField {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        SmoothField { terms }
    }

    pub fn scale(&self, c: f64) -> SmoothField {
        SmoothField {
            terms: self.terms.iter().map(|t| Term { coef: c * t.coef, ..t.clone() }).collect(),
        }
    }

    /// f(v − d).
    pub fn shift(&self, d: &Vec3) -> SmoothField {
        SmoothField {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coef: t.coef,
                    poly: t.poly.translate(&(-d)),
                    width: t.width,
                    center: (t.center() + d).into(),
                })
                .collect(),
        }
    }

    /// Exact pointwise product; fails with a capacity error past degree 4.
    pub fn product(&self, other: &SmoothField) -> Result<SmoothField> {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let w = a.width + b.width;
                let (ca, cb) = (a.center(), b.center());
                let center = (a.width * ca + b.width * cb) / w;
                let coef = a.coef * b.coef * (-(a.width * b.width / w) * (ca - cb).norm_squared()).exp();
                terms.push(Term { coef, poly: a.poly.mul(&b.poly)?, width: w, center: center.into() });
            }
        }
        Ok(SmoothField { terms })
    }

    pub fn multiply_sqrt_mu(&self) -> Result<SmoothField> {
        self.product(&SmoothField::sqrt_maxwellian())
    }

    pub fn multiply_poly(&self, p: &Poly) -> Result<SmoothField> {
        let terms = self
            .terms
            .iter()
            .map(|t| Ok(Term { poly: t.poly.mul(p)?, ..t.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(SmoothField { terms })
    }

    /// Exact ∫ f dv.
    pub fn integral(&self) -> f64 {
        self.moment(&Poly::constant(1.0)).expect("degree-0 moment")
    }

    /// Exact ∫ f·q dv for a polynomial q.
    pub fn moment(&self, q: &Poly) -> Result<f64> {
        let mut sum = 0.0;
        for t in &self.terms {
            for a in t.poly.terms() {
                for b in q.terms() {
                    let e = [a.exp[0] + b.exp[0], a.exp[1] + b.exp[1], a.exp[2] + b.exp[2]];
                    sum += t.coef * a.coef * b.coef * gaussian_monomial_moment(e, t.width, &t.center());
                }
            }
        }
        Ok(sum)
    }

    /// Upper bound for sup |∇³f[u,u,u]| over unit u and |v − c| ≤ radius.
    pub fn third_derivative_bound(&self, c: &Vec3, radius: f64) -> f64 {
        let rho = c.norm() + radius;
        self.terms
            .iter()
            .map(|t| {
                let a = t.width;
                let dist = (c - t.center()).norm();
                let xmax = dist + radius;
                let xmin = (dist - radius).max(0.0);
                let emax = (-a * xmin * xmin).exp();
                let e = [
                    emax,
                    2.0 * a * xmax * emax,
                    (4.0 * a * a * xmax * xmax + 2.0 * a) * emax,
                    (8.0 * a.powi(3) * xmax.powi(3) + 12.0 * a * a * xmax) * emax,
                ];
                let p: Vec<f64> = (0..4).map(|k| t.poly.directional_bound(k, rho)).collect();
                t.coef.abs() * (p[3] * e[0] + 3.0 * p[2] * e[1] + 3.0 * p[1] * e[2] + p[0] * e[3])
            })
            .sum()
    }

    pub fn max_width(&self) -> f64 {
        self.terms.iter().map(|t| t.width).fold(0.0, f64::max)
    }

    /// Smallest Gaussian width among the terms.
    pub fn min_width(&self) -> f64 {
        self.terms.iter().map(|t| t.width).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field serializes")
    }

    pub fn from_json(s: &str) -> Result<SmoothField> {
        let raw: SmoothField = serde_json::from_str(s).map_err(|e| Error::Spec(e.to_string()))?;
        let terms = raw
            .terms
            .into_iter()
            .map(|t| Ok(Term { poly: Poly::new(t.poly.terms)?, ..t }))
            .collect::<Result<Vec<_>>>()?;
        SmoothField::new(terms)
    }
}

/// Contract a symmetric 3-tensor with a³.
pub fn contract3(t: &Tensor3, a: &Vec3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                s += t[i][j][k] * a[i] * a[j] * a[k];
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SmoothField {
        let p = Poly::from_pairs(&[([0, 0, 0], 1.0), ([1, 0, 0], 0.3), ([0, 2, 1], -0.2), ([2, 1, 1], 0.05)]).unwrap();
        let q = Poly::from_pairs(&[([0, 0, 0], 0.5), ([0, 0, 2], 0.1)]).unwrap();
        SmoothField::new(vec![
            Term { coef: 0.8, poly: p, width: 0.4, center: [0.1, -0.2, 0.3] },
            Term { coef: -0.3, poly: q, width: 0.9, center: [-0.5, 0.0, 0.2] },
        ])
        .unwrap()
    }

    #[test]
    fn maxwellian_at_origin() {
        let m = SmoothField::maxwellian();
        assert!((m.eval(&Vec3::zeros()) - 0.063_493_635_934_240_97).abs() < 1e-15);
        assert!((m.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn root_maxwellian_squares_to_maxwellian() {
        let s = SmoothField::sqrt_maxwellian();
        let m = s.multiply_sqrt_mu().unwrap();
        assert_eq!(m.terms[0].width, 0.5);
        assert!((m.terms[0].coef - (2.0 * PI).powf(-1.5)).abs() < 1e-16);
        let v = Vec3::new(0.3, -1.0, 2.0);
        let one = SmoothField::sqrt_maxwellian_times(Poly::constant(1.0));
        assert_eq!(one.eval(&v), s.eval(&v));
    }

    #[test]
    fn product_matches_direct_evaluation() {
        let p = Poly::from_pairs(&[([0, 0, 0], 1.0), ([1, 0, 0], 1.0)]).unwrap();
        let f = SmoothField::gaussian((2.0 * PI).powf(-0.75), p, 0.25, Vec3::zeros()).unwrap();
        let g = f.multiply_sqrt_mu().unwrap();
        let v = Vec3::new(1.0, 0.0, 0.0);
        let direct = 2.0 * SmoothField::maxwellian().eval(&v);
        assert!((g.eval(&v) - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn degree_overflow_is_a_capacity_error() {
        let p = Poly::from_pairs(&[([3, 0, 0], 1.0)]).unwrap();
        let f = SmoothField::gaussian(1.0, p.clone(), 1.0, Vec3::zeros()).unwrap();
        let g = SmoothField::gaussian(1.0, p, 1.0, Vec3::zeros()).unwrap();
        assert!(matches!(f.product(&g), Err(Error::Capacity(6))));
        assert!(matches!(Poly::monomial([5, 0, 0], 1.0), Err(Error::Capacity(5))));
    }

    #[test]
    fn shift_translates() {
        let f = sample();
        let d = Vec3::new(0.4, -0.7, 1.1);
        let v = Vec3::new(0.2, 0.5, -0.3);
        assert!((f.shift(&d).eval(&(v + d)) - f.eval(&v)).abs() < 1e-14);
    }

    #[test]
    fn exact_moments_of_shifted_gaussians() {
        let f = sample();
        let d = Vec3::new(1.0, 2.0, -0.5);
        assert!((f.shift(&d).integral() - f.integral()).abs() < 1e-13);
        let m = SmoothField::maxwellian();
        let v2 = Poly::from_pairs(&[([2, 0, 0], 1.0), ([0, 2, 0], 1.0), ([0, 0, 2], 1.0)]).unwrap();
        assert!((m.moment(&v2).unwrap() - 3.0).abs() < 1e-14);
        assert!((m.moment(&v2.mul(&v2).unwrap()).unwrap() - 15.0).abs() < 1e-13);
    }

    #[test]
    fn json_round_trip() {
        let f = sample();
        let back = SmoothField::from_json(&f.to_json()).unwrap();
        assert_eq!(f, back);
        assert!(SmoothField::from_json(r#"{"terms":[{"coef":1,"poly":[],"width":-1,"center":[0,0,0]}]}"#).is_err());
    }

    #[test]
    fn third_bound_dominates_samples() {
        let f = sample();
        let c = Vec3::new(0.2, 0.1, -0.1);
        let b = f.third_derivative_bound(&c, 1.0);
        for k in 0..50 {
            let x = k as f64;
            let v = c + 0.9 * Vec3::new((x * 0.7).sin(), (x * 1.3).cos(), (x * 0.4).sin()) / 1.8;
            let u = Vec3::new((x * 2.1).cos(), (x * 0.3).sin(), 0.5).normalize();
            assert!(contract3(&f.third(&v), &u).abs() <= b);
        }
    }
}
