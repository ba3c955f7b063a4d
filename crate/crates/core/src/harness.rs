//! Limit experiments: BBM and strip tables, the ε = 1 − s sweep, the
//! vanishing infimum on all of ℝ, and the trace-constant variant.

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::{
    diagnostics, generalized_smallest, inverse_iteration, solve_first_p_with, solve_linear, Denominator, EigenResult,
    InnerControl,
};
use crate::error::{Error, Result};
use crate::forms::{lp_mass, mass_matrix, GagliardoForm, Region};
use crate::gauss;
use crate::kernel::{KernelSpec, QuadratureControl};
use crate::mesh::{build_collar_mesh, CollarMesh1D, DofFunction, MeshParams};
use crate::par;
use crate::reference::{steklov_reference, SteklovRef};

pub const DEFAULT_S_GRID: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 0.95];

/// How meshes are sized for a given strip width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    pub a: f64,
    pub b: f64,
    pub radius: f64,
    /// largest interior cell
    pub h: f64,
    pub gamma: f64,
    /// cells per strip; strip cells are also at most ε / this
    pub strip_cells: usize,
    #[serde(default)]
    pub quadrature: QuadratureControl,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        MeshPolicy {
            a: 0.0,
            b: 1.0,
            radius: 2.0,
            h: 0.05,
            gamma: 2.0,
            strip_cells: 8,
            quadrature: QuadratureControl::default(),
        }
    }
}

impl MeshPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) {
            return Err(Error::Argument("need a < b".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Argument("collar width must be positive".into()));
        }
        if !(self.h > 0.0 && self.h <= 0.5 * (self.b - self.a)) {
            return Err(Error::Argument("h must lie in (0, (b−a)/2]".into()));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::Argument("grading exponent must be at least 1".into()));
        }
        if self.strip_cells == 0 {
            return Err(Error::Argument("need at least one cell per strip".into()));
        }
        self.quadrature.validate()
    }

    /// Halves h and doubles the strip resolution.
    pub fn refined(&self) -> Self {
        MeshPolicy { h: 0.5 * self.h, strip_cells: 2 * self.strip_cells, ..*self }
    }

    /// Mesh with a+ε and b−ε as nodes and every strip cell no longer than
    /// ε / strip_cells. `None` builds without a strip.
    pub fn mesh(&self, eps: Option<f64>) -> Result<CollarMesh1D> {
        self.validate()?;
        let half = 0.5 * (self.b - self.a);
        // a strip at least half as wide as Ω is all of Ω
        let eps = eps.filter(|&e| e < half);
        let params =
            |h: f64| MeshParams { a: self.a, b: self.b, radius: self.radius, h, gamma: self.gamma, strip_eps: eps };
        let Some(eps) = eps else {
            return build_collar_mesh(&params(self.h));
        };
        let m = self.strip_cells as f64;
        // under x = half·t^γ the cell at depth ε has length ≈ γ·half^{1/γ}ε^{1−1/γ}/n
        let needed = m * self.gamma * (half / eps).powf(1.0 / self.gamma);
        let mut n = needed.max(half / self.h).ceil();
        for _ in 0..50 {
            let mesh = build_collar_mesh(&params(half / n))?;
            let strip = mesh.strip_cells(eps)?;
            let longest = strip.cells.iter().map(|&i| mesh.cell(i).len()).fold(0.0, f64::max);
            if strip.cells.len() >= 2 * self.strip_cells && longest <= eps / m * (1.0 + 1e-9) {
                return Ok(mesh);
            }
            n = (n * 1.1).ceil();
        }
        Err(Error::Argument(format!("could not resolve a strip of width {eps}")))
    }
}

/// One row of a check table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub param: f64,
    pub value: f64,
    pub target: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckTable {
    pub rows: Vec<CheckRow>,
}

impl CheckTable {
    fn push(&mut self, param: f64, value: f64, target: f64) {
        self.rows.push(CheckRow { param, value, target, deviation: (value - target).abs() });
    }
}

/// One s of the convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub s: f64,
    pub eps: f64,
    pub p: f64,
    pub lambda: f64,
    pub reference: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// interior DOFs
    pub dofs: usize,
    pub strip_cells: usize,
    pub tail_mass: f64,
    /// quotient of u ≡ 1, an upper bound for λ
    pub upper_bound: f64,
    pub sign_constant: bool,
    pub normalized: bool,
    pub gap: Option<f64>,
    /// outer quotients never increased (trivially true for the direct solve)
    pub monotone: bool,
    pub residual: f64,
}

/// Sweep rows in s order plus the rows that failed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<(f64, String)>,
    pub reference: Option<SteklovRef>,
}

fn interior_length(policy: &MeshPolicy) -> f64 {
    policy.b - policy.a
}

/// K(1−s)·|u|^p over Ω×Ω against ∫_Ω|u'|^p, both for the P1 interpolant.
pub fn bbm_limit_table<F: Fn(f64) -> f64>(u: F, p: f64, s_grid: &[f64], policy: &MeshPolicy) -> Result<CheckTable> {
    let mesh = policy.mesh(None)?;
    let f = mesh.interpolate(&u);
    let target: f64 = mesh
        .cells()
        .enumerate()
        .map(|(i, c)| c.len() * ((f.interior[i + 1] - f.interior[i]) / c.len()).abs().powf(p))
        .sum();
    let mut table = CheckTable::default();
    for &s in s_grid {
        let spec = KernelSpec::one_d(s, p)?;
        let form = GagliardoForm::assemble_interior(&mesh, &spec, &policy.quadrature)?;
        let value = spec.seminorm_scale() * form.energy(&f)?;
        table.push(s, value, target);
    }
    Ok(table)
}

/// The extension check: full K(1−s)[Eu]^p with Eu decaying linearly to
/// zero across the collar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCheck {
    pub table: CheckTable,
    /// K(1−s) times the Ω×Ωᶜ part of the energy, per s
    pub cross_terms: Vec<f64>,
}

pub fn extension_bbm_check<F: Fn(f64) -> f64>(
    u: F,
    p: f64,
    s_grid: &[f64],
    policy: &MeshPolicy,
) -> Result<ExtensionCheck> {
    let mesh = policy.mesh(None)?;
    let (a, b, r) = (policy.a, policy.b, policy.radius);
    let (ua, ub) = (u(a), u(b));
    let ext = |x: f64| {
        if x < a {
            ua * (1.0 - (a - x) / r).max(0.0)
        } else if x > b {
            ub * (1.0 - (x - b) / r).max(0.0)
        } else {
            u(x)
        }
    };
    let f = mesh.interpolate(ext);
    let target: f64 = mesh
        .cells()
        .enumerate()
        .map(|(i, c)| c.len() * ((f.interior[i + 1] - f.interior[i]) / c.len()).abs().powf(p))
        .sum();
    let mut out = ExtensionCheck::default();
    for &s in s_grid {
        let spec = KernelSpec::one_d(s, p)?;
        let ctrl = policy.quadrature;
        let full = GagliardoForm::assemble(&mesh, &spec, &ctrl)?;
        let inner = GagliardoForm::assemble_interior(&mesh, &spec, &ctrl)?;
        let kc = spec.seminorm_scale();
        let e_full = kc * full.energy(&f)?;
        let e_inner = kc * inner.energy(&f)?;
        out.table.push(s, e_full, target);
        out.cross_terms.push(e_full - e_inner);
    }
    Ok(out)
}

/// (1/ε)∫_{Ω_ε}|u|^p against |u(a)|^p + |u(b)|^p.
pub fn strip_limit_table<F: Fn(f64) -> f64>(u: F, p: f64, eps_grid: &[f64], policy: &MeshPolicy) -> Result<CheckTable> {
    let mut table = CheckTable::default();
    let target = u(policy.a).abs().powf(p) + u(policy.b).abs().powf(p);
    for &eps in eps_grid {
        let mesh = policy.mesh(Some(eps))?;
        let f = mesh.interpolate(&u);
        let value = lp_mass(&mesh, &f.interior, Region::Strip(eps), p)? / eps;
        table.push(eps, value, target);
    }
    Ok(table)
}

/// First eigenpair at (s, ε = 1 − s) on the policy mesh.
pub fn solve_point(p: f64, s: f64, policy: &MeshPolicy) -> Result<(CollarMesh1D, GagliardoForm, EigenResult)> {
    let eps = 1.0 - s;
    let spec = KernelSpec::one_d(s, p)?;
    let mesh = policy.mesh(Some(eps))?;
    let form = GagliardoForm::assemble(&mesh, &spec, &policy.quadrature)?;
    let result = if p == 2.0 {
        solve_linear(&form, eps, 2)?.swap_remove(0)
    } else {
        let init = DofFunction::constant(&mesh, 1.0);
        let r = solve_first_p_with(&form, eps, &init, 1e-12, 500, &InnerControl::default())?;
        if !r.converged {
            return Err(Error::NonConvergence(format!("inverse iteration at s = {s}, p = {p}")));
        }
        r
    };
    Ok((mesh, form, result))
}

/// The sweep over s with ε = 1 − s. Rows run concurrently and come back in
/// grid order; a failing row is recorded and the sweep continues.
pub fn convergence_sweep(p: f64, s_grid: &[f64], policy: &MeshPolicy) -> Result<SweepOutcome> {
    if s_grid.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if s_grid.windows(2).any(|w| !(w[0] < w[1])) || s_grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::Argument("s grid must be increasing inside (0, 1)".into()));
    }
    policy.validate()?;
    let reference = steklov_reference(p, interior_length(policy))?;
    let rows = par::map(s_grid, |&s| -> Result<SweepRecord> {
        let start = std::time::Instant::now();
        let (mesh, form, r) = solve_point(p, s, policy)?;
        let eps = 1.0 - s;
        let d = diagnostics(&r, &mesh);
        let one = DofFunction::constant(&mesh, 1.0);
        let upper = crate::eigen::rayleigh_quotient(&form, &one, eps)?;
        let monotone = r.quotient_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10));
        info!("s = {s}: λ = {:.10}, {} nodes, {:.2?}", r.lambda, mesh.num_nodes(), start.elapsed());
        Ok(SweepRecord {
            s,
            eps,
            p,
            lambda: r.lambda,
            reference: reference.lambda,
            abs_err: (r.lambda - reference.lambda).abs(),
            rel_err: (r.lambda - reference.lambda).abs() / reference.lambda,
            dofs: mesh.num_nodes(),
            strip_cells: mesh.strip_cells(eps)?.cells.len(),
            tail_mass: form.tail_mass(),
            upper_bound: upper,
            sign_constant: d.sign_constant,
            normalized: r.normalized,
            gap: d.gap_to_next,
            monotone,
            residual: r.residual,
        })
    });
    let mut out = SweepOutcome { reference: Some(reference), ..Default::default() };
    for (s, row) in s_grid.iter().zip(rows) {
        match row {
            Ok(r) => out.records.push(r),
            Err(e) => out.failures.push((*s, e.to_string())),
        }
    }
    Ok(out)
}

/// Quotient of the tent φ(x − k − 2), supported in [k+1, k+3], with the
/// strip replaced by all of Ωᶜ. Ω = (0, 1).
pub fn zero_infimum_demo(k_grid: &[u32], s: f64, p: f64) -> Result<CheckTable> {
    if k_grid.windows(2).any(|w| w[0] >= w[1]) || k_grid.first().is_some_and(|&k| k == 0) {
        return Err(Error::Argument("k grid must be increasing positive integers".into()));
    }
    let spec = KernelSpec::one_d(s, p)?;
    let sp = s * p;
    // ∫_0^1 |x − y|^{−1−sp} dy for x > 1
    let inner = |x: f64| ((x - 1.0).powf(-sp) - x.powf(-sp)) / sp;
    let rule = gauss::rule(32);
    let mut table = CheckTable::default();
    for &k in k_grid {
        let c = k as f64 + 2.0;
        // u vanishes on Ω, so only the two Ω×Ωᶜ copies contribute
        let energy = 2.0
            * (rule.integrate(c - 1.0, c, |x| (1.0 - (x - c).abs()).powf(p) * inner(x))
                + rule.integrate(c, c + 1.0, |x| (1.0 - (x - c).abs()).powf(p) * inner(x)));
        let denom = rule.integrate(-1.0, 0.0, |t| (1.0 + t).powf(p)) + rule.integrate(0.0, 1.0, |t| (1.0 - t).powf(p));
        table.push(k as f64, spec.seminorm_scale() * energy / denom, 0.0);
    }
    Ok(table)
}

/// Best constant of (K(1−s)|u|^p_{Ω×Ω} + ∫_Ω|u|^p) / (|u(a)|^p + |u(b)|^p).
pub fn trace_constant(s: f64, p: f64, policy: &MeshPolicy) -> Result<f64> {
    let spec = KernelSpec::one_d(s, p)?;
    if s * p <= 1.0 {
        return Err(Error::Domain(format!("the trace needs sp > 1, got sp = {}", s * p)));
    }
    let mesh = policy.mesh(None)?;
    let form = GagliardoForm::assemble_interior(&mesh, &spec, &policy.quadrature)?;
    let n = mesh.num_nodes();
    if p == 2.0 {
        let blocks = form.blocks().ok_or_else(|| Error::Argument("expected p = 2 blocks".into()))?;
        let a = &blocks.ii * spec.seminorm_scale() + mass_matrix(&mesh, Region::Interior)?;
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = 1.0;
        b[(n - 1, n - 1)] = 1.0;
        return Ok(generalized_smallest(a, &b, 2, 1)?[0].0);
    }
    let init = DofFunction::constant(&mesh, 1.0);
    let r = inverse_iteration(&form, Denominator::Boundary, &init, 1e-12, 500, &InnerControl::default())?;
    if !r.converged {
        return Err(Error::NonConvergence(format!("trace constant at s = {s}, p = {p}")));
    }
    Ok(r.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn policy_resolves_strip() {
        let pol = MeshPolicy::default();
        for eps in [0.4, 0.2, 0.05, 0.01] {
            let m = pol.mesh(Some(eps)).unwrap();
            let st = m.strip_cells(eps).unwrap();
            assert!(st.cells.len() >= 2 * pol.strip_cells);
            assert!(st.cells.iter().all(|&i| m.cell(i).len() <= eps / 8.0 * (1.0 + 1e-9)));
        }
        let r = pol.refined();
        assert_eq!(r.strip_cells, 16);
        assert_eq!(r.h, 0.025);
    }

    #[test]
    fn bbm_table_closed_form() {
        let t = bbm_limit_table(|x| x, 2.0, &[0.5, 0.7, 0.9], &MeshPolicy::default()).unwrap();
        for row in &t.rows {
            assert_relative_eq!(row.value, 1.0 / (3.0 - 2.0 * row.param), max_relative = 1e-8);
            assert_relative_eq!(row.target, 1.0, max_relative = 1e-13);
        }
        let z = bbm_limit_table(|_| 1.0, 2.0, &[0.5], &MeshPolicy::default()).unwrap();
        assert!(z.rows[0].value.abs() < 1e-14 && z.rows[0].deviation < 1e-14);
    }

    #[test]
    fn strip_table_closed_form() {
        let t = strip_limit_table(|x| x, 2.0, &[0.2, 0.1, 0.01], &MeshPolicy::default()).unwrap();
        for row in &t.rows {
            let e = row.param;
            assert_relative_eq!(row.value, 1.0 - e + 2.0 * e * e / 3.0, max_relative = 1e-10);
        }
        let one = strip_limit_table(|_| 1.0, 3.0, &[0.3], &MeshPolicy::default()).unwrap();
        assert!(one.rows[0].deviation < 1e-13);
    }

    #[test]
    fn zero_infimum_table() {
        let k: Vec<u32> = (2..=20).collect();
        let t = zero_infimum_demo(&k, 0.5, 2.0).unwrap();
        assert!(t.rows.windows(2).all(|w| w[1].value < w[0].value));
        assert!(t.rows.last().unwrap().value < 0.1 * t.rows[0].value);
    }

    #[test]
    fn trace_rejects_subcritical() {
        assert!(matches!(trace_constant(0.4, 2.0, &MeshPolicy::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn trace_bounded_by_constant_function() {
        let v = trace_constant(0.8, 2.0, &MeshPolicy::default()).unwrap();
        assert!(v > 0.0 && v <= 0.5);
    }

    #[test]
    fn extension_check_vanishing_input() {
        let c = extension_bbm_check(|_| 0.0, 2.0, &[0.5, 0.9], &MeshPolicy::default()).unwrap();
        assert!(c.table.rows.iter().all(|r| r.value == 0.0));
    }
}
