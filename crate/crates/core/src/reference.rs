//! Classical Steklov eigenvalues of −Δ_p u + |u|^{p−2}u = 0 on (0, L) with
//! |u'|^{p−2}∂_ν u = λ|u|^{p−2}u at both ends.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{cell_power, cell_power_grad, cell_power_hess};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Shooting,
    LocalFem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteklovRef {
    pub p: f64,
    pub length: f64,
    pub lambda: f64,
    pub method: Method,
    /// |λ_shoot − λ_fem| when both routes ran.
    pub discrepancy: Option<f64>,
}

/// Steklov eigenvalues for p = 2, ascending. Only two exist:
/// tanh(L/2) from cosh(x − L/2) and coth(L/2) from sinh(x − L/2).
pub fn steklov_linear(length: f64, k: usize) -> Result<Vec<f64>> {
    if !(length > 0.0) {
        return Err(Error::Argument(format!("length must be positive, got {length}")));
    }
    if k > 2 {
        return Err(Error::TooManyEigenvalues { requested: k, available: 2 });
    }
    let t = (0.5 * length).tanh();
    Ok([t, 1.0 / t].into_iter().take(k).collect())
}

/// Outcome of the shooting integration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub lambda: f64,
    /// max |(p−1)|u'|^p − u^p + 1| along accepted steps
    pub first_integral_drift: f64,
    pub steps: usize,
    /// (x, u) at accepted steps, x measured from the left end
    pub trajectory: Vec<(f64, f64)>,
}

/// λ₁(p) by integrating the symmetric ground state from the midpoint.
pub fn steklov_p_shooting(p: f64, length: f64, ode_tol: f64) -> Result<f64> {
    Ok(shoot(p, length, ode_tol)?.lambda)
}

/// Integrates u' = |φ|^{1/(p−1)}sgn φ, φ' = u^{p−1} from u(L/2) = 1,
/// φ(L/2) = 0. The degenerate start is seeded by the two-term series
/// u = 1 + Aξ^m + Cξ^{2m}, φ = ξ + (p−1)Aξ^{m+1}/(m+1), m = p/(p−1).
pub fn shoot(p: f64, length: f64, ode_tol: f64) -> Result<ShootingSolution> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    if !(length > 0.0) || !(ode_tol > 0.0) {
        return Err(Error::Argument("length and tolerance must be positive".into()));
    }
    let half = 0.5 * length;
    let m = p / (p - 1.0);
    let a = (p - 1.0) / p;
    let c = (p - 1.0).powi(3) / (2.0 * p * p * (2.0 * p - 1.0));
    let xi0 = 1e-4f64.min(0.25 * half);
    let mut y = [1.0 + a * xi0.powf(m) + c * xi0.powf(2.0 * m), xi0 + (p - 1.0) * a * xi0.powf(m + 1.0) / (m + 1.0)];
    let rhs = |_: f64, y: &[f64; 2]| -> [f64; 2] {
        let phi = y[1];
        let du = if phi == 0.0 { 0.0 } else { phi.signum() * phi.abs().powf(1.0 / (p - 1.0)) };
        [du, y[0].abs().powf(p - 1.0)]
    };
    let invariant = |y: &[f64; 2]| (p - 1.0) * y[1].abs().powf(p / (p - 1.0)) - y[0].powf(p) + 1.0;

    let mut x = xi0;
    let mut h = xi0;
    let mut drift = invariant(&y).abs();
    let mut steps = 0;
    let mut trajectory = vec![(half, 1.0), (half + xi0, y[0])];
    while x < half {
        if steps > 1_000_000 {
            return Err(Error::NonConvergence("shooting step budget exhausted".into()));
        }
        h = h.min(half - x);
        let (y5, err) = dopri_step(&rhs, x, &y, h);
        let scale: f64 = y5.iter().zip(&y).map(|(a, b)| a.abs().max(b.abs())).fold(1.0, f64::max);
        let e = err / (ode_tol * scale);
        if e <= 1.0 {
            x += h;
            y = y5;
            steps += 1;
            drift = drift.max(invariant(&y).abs());
            trajectory.push((half + x, y[0]));
        }
        if !y[0].is_finite() || !y[1].is_finite() {
            return Err(Error::NonConvergence("shooting diverged".into()));
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-15 * half {
            return Err(Error::NonConvergence("shooting step size underflow".into()));
        }
    }
    Ok(ShootingSolution { lambda: y[1] / y[0].powf(p - 1.0), first_integral_drift: drift, steps, trajectory })
}

/// One Dormand–Prince 5(4) step; returns the fifth-order solution and the
/// max-norm of the embedded error estimate.
fn dopri_step<F: Fn(f64, &[f64; 2]) -> [f64; 2]>(f: &F, x: f64, y: &[f64; 2], h: f64) -> ([f64; 2], f64) {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let mut k = [[0.0; 2]; 7];
    for i in 0..7 {
        let mut yi = *y;
        for (j, kj) in k.iter().enumerate().take(i) {
            yi[0] += h * A[i][j] * kj[0];
            yi[1] += h * A[i][j] * kj[1];
        }
        k[i] = f(x + C[i] * h, &yi);
    }
    let mut y5 = *y;
    let mut err = 0.0f64;
    for d in 0..2 {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for i in 0..7 {
            s5 += B5[i] * k[i][d];
            s4 += B4[i] * k[i][d];
        }
        y5[d] += h * s5;
        err = err.max((h * (s5 - s4)).abs());
    }
    (y5, err)
}

/// Result of the local P1 inverse iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemSolution {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

/// λ₁(p) as the minimum of (∫|u'|^p + ∫|u|^p)/(|u(0)|^p + |u(L)|^p) over P1
/// functions on a uniform mesh.
pub fn steklov_p_fem(p: f64, length: f64, h: f64, tol: f64) -> Result<f64> {
    let sol = local_fem(p, length, h, tol, 500)?;
    if !sol.converged {
        return Err(Error::NonConvergence(format!("local p-Laplacian iteration for p = {p}")));
    }
    Ok(sol.lambda)
}

/// Boundary-weighted inverse iteration from u ≡ 1. Each step minimizes
/// (1/p)(∫|v'|^p + ∫|v|^p) − Σ_{ends}|u_k|^{p−2}u_k v by damped Newton on
/// the tridiagonal Hessian.
pub fn local_fem(p: f64, length: f64, h: f64, tol: f64, max_outer: usize) -> Result<FemSolution> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    if !(length > 0.0) || !(h > 0.0 && h < 0.25 * length) {
        return Err(Error::Argument(format!("need 0 < h < L/4, got h = {h}, L = {length}")));
    }
    let cells = (length / h).round().max(4.0) as usize;
    let hh = length / cells as f64;
    let n = cells + 1;
    let energy = |u: &[f64]| -> f64 {
        (0..cells).map(|i| hh * ((u[i + 1] - u[i]) / hh).abs().powf(p) + cell_power(u[i], u[i + 1], hh, p)).sum()
    };
    let boundary = |u: &[f64]| u[0].abs().powf(p) + u[n - 1].abs().powf(p);
    let quotient = |u: &[f64]| energy(u) / boundary(u);
    let normalize = |u: &mut Vec<f64>| {
        let b = boundary(u).powf(1.0 / p);
        u.iter_mut().for_each(|v| *v /= b);
    };

    let mut u = vec![1.0; n];
    normalize(&mut u);
    let mut q = quotient(&u);
    let mut converged = false;
    let mut iterations = 0;
    for outer in 1..=max_outer {
        iterations = outer;
        let mut g = vec![0.0; n];
        g[0] = crate::forms::signed_pow(u[0], p - 1.0);
        g[n - 1] = crate::forms::signed_pow(u[n - 1], p - 1.0);
        let mut v: Vec<f64> = u.iter().map(|x| x * q.powf(-1.0 / (p - 1.0))).collect();
        newton_1d(p, hh, &g, &mut v, &energy)?;
        normalize(&mut v);
        let qn = quotient(&v);
        let dq = (q - qn).abs();
        u = v;
        q = qn;
        if dq <= tol * q {
            converged = true;
            break;
        }
    }
    let nodes = (0..n).map(|i| i as f64 * hh).collect();
    Ok(FemSolution { lambda: q, iterations, converged, nodes, values: u })
}

fn newton_1d<E: Fn(&[f64]) -> f64>(p: f64, hh: f64, g: &[f64], v: &mut Vec<f64>, energy: &E) -> Result<()> {
    let n = v.len();
    let obj = |v: &[f64]| energy(v) / p - g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let gscale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut f = obj(v);
    for _ in 0..200 {
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let reg = 1e-8 * vmax;
        let mut grad = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let d = (v[i + 1] - v[i]) / hh;
            let flux = crate::forms::signed_pow(d, p - 1.0);
            grad[i] -= flux;
            grad[i + 1] += flux;
            let dd = if p < 2.0 { d.abs().max(reg / hh) } else { d.abs() };
            let k = (p - 1.0) * dd.powf(p - 2.0) / hh;
            diag[i] += k;
            diag[i + 1] += k;
            off[i] -= k;
            let (g0, g1) = cell_power_grad(v[i], v[i + 1], hh, p);
            grad[i] += g0;
            grad[i + 1] += g1;
            let m = cell_power_hess(v[i], v[i + 1], hh, p, reg);
            diag[i] += m[0][0];
            diag[i + 1] += m[1][1];
            off[i] += m[0][1];
        }
        for i in 0..n {
            grad[i] -= g[i];
        }
        let gn = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gn <= 1e-13 * gscale {
            return Ok(());
        }
        let mut dir: Vec<f64> = match thomas(&off, &diag, &grad) {
            Some(x) => x.into_iter().map(|x| -x).collect(),
            None => grad.iter().map(|x| -x).collect(),
        };
        let mut slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            dir = grad.iter().map(|x| -x).collect();
            slope = -grad.iter().map(|x| x * x).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let ft = obj(&trial);
            if ft <= f + 1e-4 * t * slope {
                accepted = ft < f;
                *v = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(());
        }
    }
    Ok(())
}

/// Solves the symmetric tridiagonal system with diagonal `d` and
/// off-diagonal `e`.
fn thomas(e: &[f64], d: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut piv = d[0];
    if piv.abs() < 1e-300 {
        return None;
    }
    x[0] = rhs[0] / piv;
    for i in 1..n {
        c[i - 1] = e[i - 1] / piv;
        piv = d[i] - e[i - 1] * c[i - 1];
        if piv.abs() < 1e-300 || !piv.is_finite() {
            return None;
        }
        x[i] = (rhs[i] - e[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// λ₁(p) with the route of record: closed form for p = 2, otherwise the
/// local FEM at h = 1e−3 cross-checked by shooting.
pub fn steklov_reference(p: f64, length: f64) -> Result<SteklovRef> {
    if p == 2.0 {
        return Ok(SteklovRef {
            p,
            length,
            lambda: steklov_linear(length, 1)?[0],
            method: Method::ClosedForm,
            discrepancy: None,
        });
    }
    let fem = steklov_p_fem(p, length, 1e-3 * length, 1e-14)?;
    let shot = steklov_p_shooting(p, length, 1e-12)?;
    Ok(SteklovRef { p, length, lambda: fem, method: Method::LocalFem, discrepancy: Some((fem - shot).abs()) })
}

/// JSON table of references keyed by (p, L).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCache {
    entries: BTreeMap<String, SteklovRef>,
}

impl ReferenceCache {
    fn key(p: f64, length: f64) -> String {
        format!("p={p:.16e},L={length:.16e}")
    }

    pub fn get(&self, p: f64, length: f64) -> Option<&SteklovRef> {
        self.entries.get(&Self::key(p, length))
    }

    pub fn get_or_compute(&mut self, p: f64, length: f64) -> Result<SteklovRef> {
        if let Some(r) = self.get(p, length) {
            return Ok(r.clone());
        }
        let r = steklov_reference(p, length)?;
        self.entries.insert(Self::key(p, length), r.clone());
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_values() {
        let v = steklov_linear(1.0, 2).unwrap();
        assert!((v[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert_relative_eq!(v[1], 2.163_953_413_738_653, max_relative = 1e-12);
        assert!(steklov_linear(1.0, 3).is_err());
        let mut prev = 0.0;
        for l in [1.0, 2.0, 5.0, 20.0] {
            let t = steklov_linear(l, 1).unwrap()[0];
            assert!(t > prev && t < 1.0);
            prev = t;
        }
    }

    #[test]
    fn shooting_linear_case() {
        let s = shoot(2.0, 1.0, 1e-12).unwrap();
        assert!((s.lambda - 0.5f64.tanh()).abs() < 1e-8, "{}", s.lambda);
        assert!(s.first_integral_drift < 1e-9);
        assert_eq!(s.trajectory[0], (0.5, 1.0));
    }

    #[test]
    fn shooting_conserves_first_integral() {
        for p in [1.5, 3.0, 4.0] {
            let s = shoot(p, 1.0, 1e-12).unwrap();
            assert!(s.first_integral_drift < 1e-8, "p = {p}: {}", s.first_integral_drift);
            assert!(s.lambda > 0.0 && s.lambda < 0.5);
        }
    }

    #[test]
    fn fem_linear_case() {
        let v = steklov_p_fem(2.0, 1.0, 1e-3, 1e-14).unwrap();
        assert!((v - 0.5f64.tanh()).abs() < 1e-5, "{v}");
    }

    #[test]
    fn fem_start_quotient_is_half() {
        let s = local_fem(3.0, 1.0, 0.01, 1e-12, 0).unwrap();
        assert_relative_eq!(s.lambda, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn fem_and_shooting_agree_for_p3() {
        let fem = steklov_p_fem(3.0, 1.0, 1e-3, 1e-14).unwrap();
        let shot = steklov_p_shooting(3.0, 1.0, 1e-12).unwrap();
        assert!((fem - shot).abs() < 1e-4, "{fem} vs {shot}");
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("refs.json");
        let mut c = ReferenceCache::default();
        let r = c.get_or_compute(2.0, 1.0).unwrap();
        assert_eq!(r.method, Method::ClosedForm);
        c.save(&path).unwrap();
        let back = ReferenceCache::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.len(), 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(shoot(1.0, 1.0, 1e-10), Err(Error::Domain(_))));
        assert!(local_fem(2.0, 1.0, 0.3, 1e-10, 10).is_err());
    }
}
