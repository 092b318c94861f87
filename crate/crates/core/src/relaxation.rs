//! Space-homogeneous relaxation c′ = −Lc + T(c, c) in Galerkin coordinates,
//! F = μ + √μ Σ c_i φ_i.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kernel::KernelParams;
use crate::linearized::{
    assemble_l_matrix, gamma_tensor, GalerkinBasis, GalerkinConfig, GammaTensor, Operator, SpectrumReport, KERNEL_DIM,
};
use crate::stats::fit_loglog;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// L (symmetrized) and the Γ tensor for one operator.
#[derive(Debug, Clone)]
pub struct Tensors {
    pub op: Operator,
    pub l: DMatrix<f64>,
    pub t: GammaTensor,
    pub spectrum: SpectrumReport,
}

impl Tensors {
    pub fn n(&self) -> usize {
        self.t.n
    }

    /// −Lc + T(c, c).
    pub fn rhs(&self, c: &[f64], out: &mut [f64]) {
        self.t.apply(c, out);
        let n = self.n();
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += self.l[(i, k)] * c[i];
            }
            out[k] -= s;
        }
    }

    /// d/dt ‖c‖² = −2⟨Lc, c⟩ + 2⟨T(c, c), c⟩.
    pub fn energy_rate(&self, c: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n()];
        self.rhs(c, &mut r);
        2.0 * r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Radius λ̂/(2‖T‖) of the ball where ‖c‖² must decay.
    pub fn lyapunov_radius(&self) -> f64 {
        self.spectrum.gap / (2.0 * self.t.norm())
    }
}

pub fn precompute_tensors(op: &Operator, basis: &GalerkinBasis, cfg: &GalerkinConfig) -> Result<Tensors> {
    let (l, spectrum) = assemble_l_matrix(op, basis, cfg)?;
    let t = gamma_tensor(op, basis, cfg)?;
    let defect = t.conservation_defect();
    let tol = 1e-6 * t.max_abs();
    if defect > tol {
        return Err(Error::Tolerance { what: "Gamma tensor conservation".into(), estimate: defect, tolerance: tol });
    }
    Ok(Tensors { op: *op, l, t, spectrum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxOptions {
    pub t_end: f64,
    pub dt: f64,
    /// record every this many steps
    pub sample_every: usize,
    /// positivity grid: points per axis over [−half, half]³
    pub grid_points: usize,
    pub grid_half: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { t_end: 5.0, dt: 1e-2, sample_every: 10, grid_points: 9, grid_half: 3.0 }
    }
}

impl RelaxOptions {
    /// dt = 10⁻²/λ̂, t_end = 5/λ̂.
    pub fn for_gap(gap: f64) -> RelaxOptions {
        RelaxOptions { t_end: 5.0 / gap, dt: 1e-2 / gap, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxState {
    pub t: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxTrace {
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    /// ‖c‖
    pub norm: Vec<f64>,
    /// max over the five kernel coefficients of |c_k(t) − c_k(0)|
    pub kernel_drift: Vec<f64>,
    /// min of μ + √μ f over the sample grid
    pub min_density: Vec<f64>,
}

pub const TRACE_CSV_VERSION: &str = "relax-trace/1";

impl RelaxTrace {
    pub fn last(&self) -> RelaxState {
        RelaxState { t: *self.times.last().unwrap(), coeffs: self.coeffs.last().unwrap().clone() }
    }

    pub fn max_drift(&self) -> f64 {
        self.kernel_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn positivity_violated(&self) -> bool {
        self.min_density.iter().any(|m| *m < 0.0)
    }

    /// −d log‖c‖/dt between the samples nearest t0 and t1.
    pub fn decay_rate(&self, t0: f64, t1: f64) -> f64 {
        let near = |t: f64| {
            (0..self.times.len())
                .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
                .unwrap()
        };
        let (a, b) = (near(t0), near(t1));
        (self.norm[a] / self.norm[b]).ln() / (self.times[b] - self.times[a])
    }

    pub fn csv_header(&self) -> String {
        let n = self.coeffs.first().map_or(0, |c| c.len());
        let mut h = String::from("t");
        for i in 0..n {
            write!(h, ",c{i}").unwrap();
        }
        h.push_str(",norm,kernel_drift,min_density");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.times.len() {
            write!(out, "{:e}", self.times[k]).unwrap();
            for c in &self.coeffs[k] {
                write!(out, ",{c:e}").unwrap();
            }
            writeln!(out, ",{:e},{:e},{:e}", self.norm[k], self.kernel_drift[k], self.min_density[k]).unwrap();
        }
        out
    }
}

/// Basis polynomials and μ at the positivity sample grid.
struct DensityGrid {
    mu: Vec<f64>,
    /// [point][basis index]
    p: Vec<Vec<f64>>,
}

impl DensityGrid {
    fn new(basis: &GalerkinBasis, points: usize, half: f64) -> DensityGrid {
        let h = if points > 1 { 2.0 * half / (points - 1) as f64 } else { 0.0 };
        let mut mu = Vec::new();
        let mut p = Vec::new();
        for a in 0..points {
            for b in 0..points {
                for c in 0..points {
                    let v = Vec3::new(-half + a as f64 * h, -half + b as f64 * h, -half + c as f64 * h);
                    mu.push((2.0 * PI).powf(-1.5) * (-0.5 * v.norm_squared()).exp());
                    p.push(basis.polys.iter().map(|q| q.eval(&v)).collect());
                }
            }
        }
        DensityGrid { mu, p }
    }

    /// min μ(1 + Σ c_i p_i).
    fn min_density(&self, c: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(&self.p)
            .map(|(m, p)| m * (1.0 + p.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()))
            .fold(f64::INFINITY, f64::min)
    }
}

fn norm(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rk4_step(tn: &Tensors, c: &mut [f64], dt: f64, k: &mut [Vec<f64>; 4], tmp: &mut [f64]) {
    let n = c.len();
    tn.rhs(c, &mut k[0]);
    for i in 0..n {
        tmp[i] = c[i] + 0.5 * dt * k[0][i];
    }
    tn.rhs(tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = c[i] + 0.5 * dt * k[1][i];
    }
    tn.rhs(tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = c[i] + dt * k[2][i];
    }
    tn.rhs(tmp, &mut k[3]);
    for i in 0..n {
        c[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// Kernel part removed: the first five basis members span ker ℒ.
pub fn kernel_orthogonal(c0: &[f64]) -> Vec<f64> {
    let mut c = c0.to_vec();
    for x in c.iter_mut().take(KERNEL_DIM) {
        *x = 0.0;
    }
    c
}

/// Classical RK4 from the kernel-orthogonal part of `f0`.
pub fn integrate(tn: &Tensors, basis: &GalerkinBasis, f0: &[f64], opts: &RelaxOptions) -> Result<RelaxTrace> {
    let n = tn.n();
    if f0.len() != n || basis.len() != n {
        return Err(Error::Spec(format!("initial data has {} coefficients, basis has {n}", f0.len())));
    }
    if !(opts.dt > 0.0 && opts.t_end > 0.0) || opts.sample_every == 0 {
        return Err(Error::Spec("dt, t_end and sample_every must be positive".into()));
    }
    let grid = DensityGrid::new(basis, opts.grid_points, opts.grid_half);
    let mut c = kernel_orthogonal(f0);
    let m0 = grid.min_density(&c);
    if m0 < 0.0 {
        return Err(Error::Domain(format!("initial density μ + √μ f₀ is negative on the sample grid (min {m0:.3e})")));
    }
    let kernel0: Vec<f64> = c[..KERNEL_DIM.min(n)].to_vec();
    let n0 = norm(&c);
    let steps = (opts.t_end / opts.dt).round().max(1.0) as usize;
    let dt = opts.t_end / steps as f64;
    let mut trace = RelaxTrace { times: vec![], coeffs: vec![], norm: vec![], kernel_drift: vec![], min_density: vec![] };
    let record = |trace: &mut RelaxTrace, t: f64, c: &[f64]| {
        trace.times.push(t);
        trace.coeffs.push(c.to_vec());
        trace.norm.push(norm(c));
        trace.kernel_drift.push(c.iter().zip(&kernel0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        trace.min_density.push(grid.min_density(c));
    };
    record(&mut trace, 0.0, &c);
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    for step in 1..=steps {
        rk4_step(tn, &mut c, dt, &mut k, &mut tmp);
        let nn = norm(&c);
        if !nn.is_finite() || nn > 10.0 * n0 {
            return Err(Error::Abort(format!(
                "perturbation norm grew from {n0:.3e} to {nn:.3e} at t = {:.4}; reduce dt",
                step as f64 * dt
            )));
        }
        if step % opts.sample_every == 0 || step == steps {
            record(&mut trace, step as f64 * dt, &c);
        }
    }
    Ok(trace)
}

/// End state after t_end with step dt (no sampling).
pub fn end_state(tn: &Tensors, f0: &[f64], t_end: f64, dt: f64) -> Vec<f64> {
    let n = tn.n();
    let steps = (t_end / dt).round().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let mut c = kernel_orthogonal(f0);
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        rk4_step(tn, &mut c, dt, &mut k, &mut tmp);
    }
    c
}

/// log₂(e(dt)/e(dt/2)) with errors against a dt/8 run.
pub fn observed_order(tn: &Tensors, f0: &[f64], t_end: f64, dt: f64) -> f64 {
    let reference = end_state(tn, f0, t_end, dt / 8.0);
    let err = |h: f64| {
        let c = end_state(tn, f0, t_end, h);
        norm(&c.iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    (err(dt) / err(dt / 2.0)).log2()
}

fn sup_difference(a: &RelaxTrace, b: &RelaxTrace, scale: f64) -> f64 {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| norm(&x.iter().zip(y).map(|(p, q)| scale * p - q).collect::<Vec<_>>()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryComparison {
    pub gamma: f64,
    pub s_values: Vec<f64>,
    /// sup_t ‖c_B(t) − c_L(t)‖
    pub differences: Vec<f64>,
    /// same with Boltzmann started from (1−s)f₀ and rescaled by 1/(1−s)
    pub scaled_differences: Vec<f64>,
    pub fitted_slope: f64,
    pub fit_residual: f64,
}

pub const COMPARISON_CSV_VERSION: &str = "trajectory-difference/1";

impl TrajectoryComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,one_minus_s,difference,scaled_difference\n");
        for k in 0..self.s_values.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e}",
                self.s_values[k],
                1.0 - self.s_values[k],
                self.differences[k],
                self.scaled_differences[k]
            )
            .unwrap();
        }
        out
    }
}

/// Boltzmann (each s) against Landau from the same f₀; sweeps run one
/// trajectory per worker and are merged in s order.
pub fn compare_trajectories(
    gamma: f64,
    s_values: &[f64],
    f0: &[f64],
    opts: &RelaxOptions,
    basis: &GalerkinBasis,
    cfg: &GalerkinConfig,
) -> Result<TrajectoryComparison> {
    let landau = precompute_tensors(&Operator::Landau { gamma }, basis, cfg)?;
    compare_with(&landau, gamma, s_values, f0, opts, basis, cfg)
}

pub fn compare_with(
    landau: &Tensors,
    gamma: f64,
    s_values: &[f64],
    f0: &[f64],
    opts: &RelaxOptions,
    basis: &GalerkinBasis,
    cfg: &GalerkinConfig,
) -> Result<TrajectoryComparison> {
    if s_values.len() < 2 {
        return Err(Error::Spec("trajectory comparison needs at least two s values".into()));
    }
    let reference = integrate(landau, basis, f0, opts)?;
    let rows = s_values
        .par_iter()
        .map(|&s| {
            let tn = precompute_tensors(&Operator::Boltzmann(KernelParams::operator(s, gamma, 1.0)?), basis, cfg)?;
            let b = integrate(&tn, basis, f0, opts)?;
            let scaled0: Vec<f64> = f0.iter().map(|x| (1.0 - s) * x).collect();
            let bs = integrate(&tn, basis, &scaled0, opts)?;
            Ok((sup_difference(&b, &reference, 1.0), sup_difference(&bs, &reference, 1.0 / (1.0 - s))))
        })
        .collect::<Result<Vec<_>>>()?;
    let differences: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let oms: Vec<f64> = s_values.iter().map(|s| 1.0 - s).collect();
    let fit = fit_loglog(&oms, &differences);
    Ok(TrajectoryComparison {
        gamma,
        s_values: s_values.to_vec(),
        scaled_differences: rows.iter().map(|r| r.1).collect(),
        differences,
        fitted_slope: fit.slope,
        fit_residual: fit.residual,
    })
}

/// sup_t ‖c_a(t) − c_b(t)‖ for two tensor sets from the same data.
pub fn trajectory_distance(a: &Tensors, b: &Tensors, basis: &GalerkinBasis, f0: &[f64], opts: &RelaxOptions) -> Result<f64> {
    Ok(sup_difference(&integrate(a, basis, f0, opts)?, &integrate(b, basis, f0, opts)?, 1.0))
}
