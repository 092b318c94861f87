//! One-dimensional Gauss rules and graded panel compositions.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::gamma;

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn append(&mut self, other: Rule1D) {
        self.x.extend(other.x);
        self.w.extend(other.w);
    }
}

/// Gauss-Legendre rule on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule1D {
    assert!(n > 0, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Rule1D { x, w }
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gl_interval(a: f64, b: f64, n: usize) -> Rule1D {
    let base = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    Rule1D {
        x: base.x.iter().map(|t| c + h * t).collect(),
        w: base.w.iter().map(|w| h * w).collect(),
    }
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule1D {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule1D {
        x: pairs.iter().map(|p| p.0).collect(),
        w: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Hermite rule for the weight e^{-x^2} on the real line.
pub fn gauss_hermite(n: usize) -> Rule1D {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut r = golub_welsch(&diag, &off, std::f64::consts::PI.sqrt());
    // symmetrize to remove eigen-solver round-off
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (r.x[j] - r.x[i]);
        let w = 0.5 * (r.w[i] + r.w[j]);
        r.x[i] = -x;
        r.x[j] = x;
        r.w[i] = w;
        r.w[j] = w;
    }
    if n % 2 == 1 {
        r.x[n / 2] = 0.0;
    }
    r
}

/// Generalized Gauss-Laguerre rule for the weight x^alpha e^{-x} on (0, inf).
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule1D {
    assert!(alpha > -1.0, "Laguerre exponent must exceed -1");
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|k| (k as f64 * (k as f64 + alpha)).sqrt())
        .collect();
    golub_welsch(&diag, &off, gamma(alpha + 1.0))
}

/// Rule for ∫_0^a r^p F(r) dr with F smooth, p > -1.
///
/// Substitutes y = r^{p+1}; the returned weights apply to the full
/// integrand r^p F(r), so they act like ordinary dr weights.
pub fn power_substituted(a: f64, p: f64, n: usize) -> Rule1D {
    let q = p + 1.0;
    let base = gl_interval(0.0, a.powf(q), n);
    let mut out = Rule1D { x: Vec::with_capacity(n), w: Vec::with_capacity(n) };
    for (y, wy) in base.x.iter().zip(&base.w) {
        let r = y.powf(1.0 / q);
        out.x.push(r);
        out.w.push(wy / (q * r.powf(p)));
    }
    out
}

/// Geometric panels [a q^{k+1}, a q^k] for k < levels, each with n Gauss nodes,
/// followed by an innermost panel [0, a q^levels] treated with a power substitution.
pub fn geometric_to_zero(a: f64, ratio: f64, levels: usize, n: usize, tail_power: f64) -> Rule1D {
    let mut out = Rule1D { x: Vec::new(), w: Vec::new() };
    let mut hi = a;
    for _ in 0..levels {
        let lo = hi * ratio;
        out.append(gl_interval(lo, hi, n));
        hi = lo;
    }
    out.append(power_substituted(hi, tail_power, n));
    out
}

/// Composite Gauss-Legendre over [a, b] split at sorted breakpoints, panels
/// of width at most `max_width`.
pub fn composite(a: f64, b: f64, breakpoints: &[f64], max_width: f64, n: usize) -> Rule1D {
    let mut cuts = vec![a];
    let mut bp: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    bp.sort_by(f64::total_cmp);
    cuts.extend(bp);
    cuts.push(b);
    let mut out = Rule1D { x: Vec::new(), w: Vec::new() };
    for win in cuts.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            out.append(gl_interval(lo + k as f64 * h, lo + (k + 1) as f64 * h, n));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(7);
        for k in 0..14 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let got = r.integrate(|x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "k={k} got={got}");
        }
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(10);
        let sp = std::f64::consts::PI.sqrt();
        assert!((r.integrate(|_| 1.0) - sp).abs() < 1e-13);
        assert!((r.integrate(|x| x * x) - sp / 2.0).abs() < 1e-13);
        assert!((r.integrate(|x| x.powi(4)) - 3.0 * sp / 4.0).abs() < 1e-12);
    }

    #[test]
    fn laguerre_moments() {
        let alpha = -0.5;
        let r = gauss_laguerre(8, alpha);
        for k in 0..10 {
            let exact = gamma(alpha + 1.0 + k as f64);
            let got = r.integrate(|x| x.powi(k));
            assert!(((got - exact) / exact).abs() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn power_substitution_is_exact_for_the_leading_power() {
        let r = power_substituted(1.0, -0.5, 4);
        let got = r.integrate(|x| x.powf(-0.5));
        assert!((got - 2.0).abs() < 1e-13);
    }
}
