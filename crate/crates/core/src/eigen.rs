//! First eigenpairs of the strip-weighted nonlocal problem.
//!
//! p = 2 is a dense generalized eigenproblem for the pencil
//! (K(1−s)S + M, M_ε/ε) with S the interior form after exterior
//! elimination. General p uses nonlinear inverse iteration, each step a
//! strictly convex minimization over interior and exterior DOFs.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{lp_mass, lp_mass_gradient, lp_mass_hessian, mass_matrix, GagliardoForm, Region};
use crate::mesh::{CollarMesh1D, DofFunction};

/// One eigenpair with its convergence record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub eps: f64,
    pub coefficients: DofFunction,
    /// Max over basis directions of the weak-form residual, divided by its scale.
    pub residual: f64,
    pub iterations: usize,
    /// (1/ε)∫_{Ω_ε}|u|^p = 1 holds to 1e−10.
    pub normalized: bool,
    pub converged: bool,
    /// Rayleigh quotients of the outer iterates (empty for the direct solve).
    pub quotient_history: Vec<f64>,
    /// Next larger eigenvalue, when the solver produced it.
    pub next_eigenvalue: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sign_constant: bool,
    /// Lengths of {u > 0} and {u < 0} in Ω.
    pub nodal_measures: (f64, f64),
    pub sup_norm: f64,
    pub gap_to_next: Option<f64>,
}

/// Inner solver controls for [`solve_first_p`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerControl {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    /// Target for the weak-form residual at outer convergence.
    pub residual_tol: f64,
}

impl Default for InnerControl {
    fn default() -> Self {
        InnerControl { grad_tol: 1e-13, max_iter: 200, armijo: 1e-4, residual_tol: 1e-9 }
    }
}

/// The functional in the denominator of the quotient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Denominator {
    /// (1/ε)∫_{Ω_ε}|u|^p
    Strip(f64),
    /// |u(a)|^p + |u(b)|^p
    Boundary,
}

impl Denominator {
    fn value(&self, mesh: &CollarMesh1D, u: &[f64], p: f64) -> Result<f64> {
        match *self {
            Denominator::Strip(eps) => Ok(lp_mass(mesh, u, strip_region(eps)?, p)? / eps),
            Denominator::Boundary => Ok(u[0].abs().powf(p) + u[u.len() - 1].abs().powf(p)),
        }
    }

    /// Derivative of value/p with respect to the interior coefficients.
    fn gradient(&self, mesh: &CollarMesh1D, u: &[f64], p: f64) -> Result<Vec<f64>> {
        match *self {
            Denominator::Strip(eps) => {
                Ok(lp_mass_gradient(mesh, u, strip_region(eps)?, p)?.into_iter().map(|v| v / eps).collect())
            }
            Denominator::Boundary => {
                let mut g = vec![0.0; u.len()];
                g[0] = crate::forms::signed_pow(u[0], p - 1.0);
                let last = u.len() - 1;
                g[last] = crate::forms::signed_pow(u[last], p - 1.0);
                Ok(g)
            }
        }
    }

    fn eps(&self) -> f64 {
        match *self {
            Denominator::Strip(eps) => eps,
            Denominator::Boundary => f64::NAN,
        }
    }
}

/// Rayleigh quotient against any denominator.
pub fn quotient_with(form: &GagliardoForm, u: &DofFunction, denom: Denominator) -> Result<f64> {
    let mesh = form.mesh();
    let p = form.spec().p;
    let den = denom.value(mesh, &u.interior, p)?;
    if !(den >= 1e-300) {
        return Err(Error::DegenerateDenominator(den));
    }
    let num = form.spec().seminorm_scale() * form.energy(u)? + lp_mass(mesh, &u.interior, Region::Interior, p)?;
    Ok(num / den)
}

fn residual_with(form: &GagliardoForm, u: &DofFunction, lambda: f64, denom: Denominator) -> Result<(f64, f64)> {
    let mesh = form.mesh();
    let p = form.spec().p;
    let kc = form.spec().seminorm_scale();
    let pv = form.pairing_vector(u)?;
    let mg = lp_mass_gradient(mesh, &u.interior, Region::Interior, p)?;
    let sg = denom.gradient(mesh, &u.interior, p)?;
    let n = mesh.num_nodes();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (j, g) in pv.iter().enumerate() {
        let (m, st) = if j < n { (mg[j], lambda * sg[j]) } else { (0.0, 0.0) };
        worst = worst.max((kc * g + m - st).abs());
        scale = scale.max((kc * g).abs()).max(m.abs()).max(st.abs());
    }
    Ok((worst, scale))
}

fn strip_region(eps: f64) -> Result<Region> {
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("ε must be positive, got {eps}")));
    }
    Ok(Region::Strip(eps))
}

/// (K(1−s)H(u,u) + ∫_Ω|u|^p) / ((1/ε)∫_{Ω_ε}|u|^p).
pub fn rayleigh_quotient(form: &GagliardoForm, u: &DofFunction, eps: f64) -> Result<f64> {
    strip_region(eps)?;
    quotient_with(form, u, Denominator::Strip(eps))
}

/// Weak-form residual max_j |K(1−s)H(u,φ_j) + ∫_Ω|u|^{p−2}uφ_j − (λ/ε)∫_{Ω_ε}|u|^{p−2}uφ_j|
/// over all DOFs, and the scale it is measured against.
pub fn eigen_residual(form: &GagliardoForm, u: &DofFunction, lambda: f64, eps: f64) -> Result<(f64, f64)> {
    strip_region(eps)?;
    residual_with(form, u, lambda, Denominator::Strip(eps))
}

/// Scales u so that its interior mean is positive; a zero mean defers to
/// the first nonzero coefficient.
fn normalize_sign(u: &mut DofFunction, mesh: &CollarMesh1D) {
    let mean: f64 = mesh.cells().enumerate().map(|(i, c)| 0.5 * c.len() * (u.interior[i] + u.interior[i + 1])).sum();
    let flip = if mean != 0.0 {
        mean < 0.0
    } else {
        u.interior.iter().chain(&u.exterior).find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
    };
    if flip {
        *u = u.scaled(-1.0);
    }
}

/// The k smallest eigenvalues for p = 2, ascending, with B-orthonormal
/// eigenfunctions whose exterior values are the Neumann extension.
pub fn solve_linear(form: &GagliardoForm, eps: f64, k: usize) -> Result<Vec<EigenResult>> {
    if form.spec().p != 2.0 {
        return Err(Error::Argument("the direct solver needs p = 2".into()));
    }
    if k == 0 {
        return Err(Error::Argument("need at least one eigenvalue".into()));
    }
    let mesh = form.mesh();
    let s_mat =
        form.reduced_quadratic().ok_or_else(|| Error::Argument("form was not assembled as p = 2 blocks".into()))?;
    let a = s_mat * form.spec().seminorm_scale() + mass_matrix(mesh, Region::Interior)?;
    let b = mass_matrix(mesh, strip_region(eps)?)? / eps;
    let rank = strip_rank(mesh, eps)?;
    let pairs = generalized_smallest(a, &b, rank, k + 1).or_else(|_| generalized_smallest_any(form, eps, k))?;
    let mut out = Vec::with_capacity(k);
    for (pos, (lambda, u)) in pairs.iter().take(k).enumerate() {
        let mut f = form.extend(u.as_slice())?;
        normalize_sign(&mut f, mesh);
        let (res, scale) = eigen_residual(form, &f, *lambda, eps)?;
        let norm = lp_mass(mesh, &f.interior, Region::Strip(eps), 2.0)? / eps;
        out.push(EigenResult {
            lambda: *lambda,
            eps,
            coefficients: f,
            residual: if scale > 0.0 { res / scale } else { res },
            iterations: 1,
            normalized: (norm - 1.0).abs() < 1e-10,
            converged: true,
            quotient_history: Vec::new(),
            next_eigenvalue: pairs.get(pos + 1).map(|pair| pair.0),
        });
    }
    Ok(out)
}

// Retries without the extra eigenvalue used for the spectral gap.
fn generalized_smallest_any(form: &GagliardoForm, eps: f64, k: usize) -> Result<Vec<(f64, DVector<f64>)>> {
    let mesh = form.mesh();
    let s_mat =
        form.reduced_quadratic().ok_or_else(|| Error::Argument("form was not assembled as p = 2 blocks".into()))?;
    let a = s_mat * form.spec().seminorm_scale() + mass_matrix(mesh, Region::Interior)?;
    let b = mass_matrix(mesh, strip_region(eps)?)? / eps;
    generalized_smallest(a, &b, strip_rank(mesh, eps)?, k)
}

/// The k smallest finite eigenvalues of A u = λ B u for A symmetric
/// positive definite and B positive semidefinite of the given rank, via
/// A = LLᵀ and the largest eigenvalues μ of L⁻¹BL⁻ᵀ (λ = 1/μ). The
/// eigenvectors satisfy uᵀBu = 1.
pub fn generalized_smallest(
    a: DMatrix<f64>,
    b: &DMatrix<f64>,
    rank: usize,
    k: usize,
) -> Result<Vec<(f64, DVector<f64>)>> {
    let n = a.nrows();
    if b.nrows() != n || b.ncols() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    let chol =
        Cholesky::new(a).ok_or_else(|| Error::Cholesky("energy-plus-mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(b).ok_or_else(|| Error::Cholesky("singular factor".into()))?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or_else(|| Error::Cholesky("singular factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mu_max = eig.eigenvalues[order[0]];
    // beyond the rank of B the spectrum is round-off around zero (infinite λ)
    let available = order.iter().take(rank).filter(|&&i| eig.eigenvalues[i] > 1e-12 * mu_max).count();
    if k > available {
        return Err(Error::TooManyEigenvalues { requested: k, available });
    }
    let lt = l.transpose();
    order
        .iter()
        .take(k)
        .map(|&i| {
            let mu = eig.eigenvalues[i];
            let z = eig.eigenvectors.column(i).into_owned();
            let u = lt.solve_upper_triangular(&z).ok_or_else(|| Error::Cholesky("singular factor".into()))? / mu.sqrt();
            Ok((1.0 / mu, u))
        })
        .collect()
}

fn strip_rank(mesh: &CollarMesh1D, eps: f64) -> Result<usize> {
    let mut nodes: Vec<usize> = mesh.strip_cells(eps)?.cells.iter().flat_map(|&c| [c, c + 1]).collect();
    nodes.dedup();
    Ok(nodes.len())
}

/// Smallest eigenvalue for any p by nonlinear inverse iteration from `init`.
///
/// Step k minimizes F(v) = (1/p)(K(1−s)H(v,v) + ∫_Ω|v|^p) − (1/ε)∫_{Ω_ε}|u_k|^{p−2}u_k v
/// and renormalizes. Stops once successive quotients differ by less than
/// `tol`·λ and the weak-form residual is below the inner target.
pub fn solve_first_p(
    form: &GagliardoForm,
    eps: f64,
    init: &DofFunction,
    tol: f64,
    max_outer: usize,
) -> Result<EigenResult> {
    solve_first_p_with(form, eps, init, tol, max_outer, &InnerControl::default())
}

pub fn solve_first_p_with(
    form: &GagliardoForm,
    eps: f64,
    init: &DofFunction,
    tol: f64,
    max_outer: usize,
    inner: &InnerControl,
) -> Result<EigenResult> {
    strip_region(eps)?;
    inverse_iteration(form, Denominator::Strip(eps), init, tol, max_outer, inner)
}

/// Nonlinear inverse iteration against any denominator.
pub fn inverse_iteration(
    form: &GagliardoForm,
    denom: Denominator,
    init: &DofFunction,
    tol: f64,
    max_outer: usize,
    inner: &InnerControl,
) -> Result<EigenResult> {
    let mesh = form.mesh();
    init.check(mesh)?;
    let p = form.spec().p;
    let n = mesh.num_nodes();

    let normalize = |u: &DofFunction| -> Result<DofFunction> {
        let m = denom.value(mesh, &u.interior, p)?;
        if !(m >= 1e-300) {
            return Err(Error::DegenerateDenominator(m));
        }
        Ok(u.scaled(m.powf(-1.0 / p)))
    };

    let mut u = normalize(init)?;
    let mut q = quotient_with(form, &u, denom)?;
    let mut history = vec![q];
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    for outer in 1..=max_outer {
        iterations = outer;
        let mut rhs = denom.gradient(mesh, &u.interior, p)?;
        rhs.resize(form.num_dofs(), 0.0);
        let v0 = u.scaled(q.powf(-1.0 / (p - 1.0))).to_flat();
        let v = minimize_convex(form, &rhs, v0, inner)?;
        let next = normalize(&DofFunction::from_flat(&v, n))?;
        let q_next = quotient_with(form, &next, denom)?;
        // inverse iteration never increases the quotient; allow round-off only
        if q_next > q * (1.0 + 1e-10) {
            return Err(Error::NonConvergence(format!(
                "Rayleigh quotient increased at outer step {outer}: {q:.16e} -> {q_next:.16e}"
            )));
        }
        history.push(q_next);
        let dq = (q - q_next).abs();
        u = next;
        q = q_next;
        let (res, scale) = residual_with(form, &u, q, denom)?;
        residual = if scale > 0.0 { res / scale } else { res };
        debug!("outer {outer}: quotient {q:.16e}, change {dq:.3e}, residual {residual:.3e}");
        if dq <= tol * q && residual <= inner.residual_tol {
            converged = true;
            break;
        }
    }
    normalize_sign(&mut u, mesh);
    let norm = denom.value(mesh, &u.interior, p)?;
    Ok(EigenResult {
        lambda: q,
        eps: denom.eps(),
        coefficients: u,
        residual,
        iterations,
        normalized: (norm - 1.0).abs() < 1e-10,
        converged,
        quotient_history: history,
        next_eigenvalue: None,
    })
}

/// Damped Newton with Armijo backtracking for
/// F(v) = (1/p)(K(1−s)H(v,v) + ∫_Ω|v|^p) − ⟨rhs, v⟩. Falls back to the
/// gradient direction whenever the Hessian cannot be factored.
fn minimize_convex(form: &GagliardoForm, rhs: &[f64], mut v: Vec<f64>, ctrl: &InnerControl) -> Result<Vec<f64>> {
    let mesh = form.mesh();
    let p = form.spec().p;
    let kc = form.spec().seminorm_scale();
    let n = mesh.num_nodes();
    let dim = v.len();

    let objective = |v: &[f64]| -> Result<f64> {
        let e = form.energy_flat(v);
        let m = lp_mass(mesh, &v[..n], Region::Interior, p)?;
        let lin: f64 = rhs.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok((kc * e + m) / p - lin)
    };
    let gradient = |v: &[f64]| -> Result<Vec<f64>> {
        let mut g = form.pairing_vector_flat(v);
        let mg = lp_mass_gradient(mesh, &v[..n], Region::Interior, p)?;
        for j in 0..dim {
            g[j] = kc * g[j] + if j < n { mg[j] } else { 0.0 } - rhs[j];
        }
        Ok(g)
    };
    let scale = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);

    let mut f = objective(&v)?;
    for _ in 0..ctrl.max_iter {
        let g = gradient(&v)?;
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm <= ctrl.grad_tol * scale {
            return Ok(v);
        }
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let reg = 1e-8 * vmax.max(1e-300);
        let mut h = form.pairing_jacobian_flat(&v, reg) * kc;
        let mh = lp_mass_hessian(mesh, &v[..n], Region::Interior, p, reg)?;
        h.view_mut((0, 0), (n, n)).add_assign(&mh);
        let gv = DVector::from_column_slice(&g);
        let dir = newton_direction(h, &gv).unwrap_or_else(|| -gv.clone());
        let mut slope = dir.dot(&gv);
        let dir = if slope < 0.0 {
            dir
        } else {
            slope = -gv.dot(&gv);
            -gv.clone()
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let ft = objective(&trial)?;
            if ft <= f + ctrl.armijo * t * slope {
                // a step that leaves F unchanged means round-off has been reached
                accepted = ft < f;
                v = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease is representable
            return Ok(v);
        }
    }
    Ok(v)
}

trait AddAssignView {
    fn add_assign(&mut self, other: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, other: &DMatrix<f64>) {
        *self += other;
    }
}

fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let dmax = h.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for ridge in [0.0, 1e-14, 1e-10, 1e-6] {
        let mut hr = h.clone();
        if ridge > 0.0 {
            for i in 0..hr.nrows() {
                hr[(i, i)] += ridge * dmax;
            }
        }
        if let Some(c) = Cholesky::new(hr) {
            let d = -c.solve(g);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
    }
    None
}

/// Sign, nodal measures and size of an eigenfunction.
pub fn diagnostics(result: &EigenResult, mesh: &CollarMesh1D) -> Diagnostics {
    let u = &result.coefficients;
    let sup = u.interior.iter().chain(&u.exterior).fold(0.0f64, |m, x| m.max(x.abs()));
    let min = u.interior.iter().copied().fold(f64::INFINITY, f64::min);
    let max = u.interior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sign_constant = min * max > -1e-10 * sup * sup;
    let (mut pos, mut neg) = (0.0, 0.0);
    for (i, c) in mesh.cells().enumerate() {
        let (u0, u1) = (u.interior[i], u.interior[i + 1]);
        let h = c.len();
        if u0 >= 0.0 && u1 >= 0.0 {
            if u0 > 0.0 || u1 > 0.0 {
                pos += h;
            }
        } else if u0 <= 0.0 && u1 <= 0.0 {
            neg += h;
        } else {
            let t = u0 / (u0 - u1);
            if u0 > 0.0 {
                pos += t * h;
                neg += (1.0 - t) * h;
            } else {
                neg += t * h;
                pos += (1.0 - t) * h;
            }
        }
    }
    Diagnostics {
        sign_constant,
        nodal_measures: (pos, neg),
        sup_norm: sup,
        gap_to_next: result.next_eigenvalue.map(|next| next - result.lambda),
    }
}

impl EigenResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelSpec, QuadratureControl};
    use crate::mesh::{build_collar_mesh, MeshParams};
    use approx::assert_relative_eq;

    fn setup(p: f64, s: f64, eps: f64, h: f64) -> GagliardoForm {
        let m = build_collar_mesh(&MeshParams { a: 0.0, b: 1.0, radius: 1.0, h, gamma: 2.0, strip_eps: Some(eps) })
            .unwrap();
        GagliardoForm::assemble(&m, &KernelSpec::one_d(s, p).unwrap(), &QuadratureControl::default()).unwrap()
    }

    #[test]
    fn constant_quotient_is_half() {
        for p in [2.0, 3.0] {
            let f = setup(p, 0.7, 0.2, 0.1);
            let one = DofFunction::constant(f.mesh(), 1.0);
            assert_relative_eq!(rayleigh_quotient(&f, &one, 0.2).unwrap(), 0.5, max_relative = 1e-13);
            assert_relative_eq!(
                rayleigh_quotient(&f, &one.scaled(2.0), 0.2).unwrap(),
                rayleigh_quotient(&f, &one, 0.2).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn quotient_rejects_zero_strip_mass() {
        let f = setup(2.0, 0.7, 0.2, 0.1);
        let u = f.mesh().interpolate(|x| if (0.3..=0.7).contains(&x) { 1.0 } else { 0.0 });
        assert!(matches!(rayleigh_quotient(&f, &u, 0.2), Err(Error::DegenerateDenominator(_))));
    }

    #[test]
    fn linear_solver_basic_properties() {
        let f = setup(2.0, 0.8, 0.2, 0.05);
        let res = solve_linear(&f, 0.2, 2).unwrap();
        assert!(res[0].lambda > 0.0 && res[0].lambda <= 0.5);
        assert!(res[1].lambda > res[0].lambda);
        assert!(res[0].normalized);
        assert!(res[0].residual < 1e-8, "{}", res[0].residual);
        let d = diagnostics(&res[0], f.mesh());
        assert!(d.sign_constant);
        let d2 = diagnostics(&res[1], f.mesh());
        assert!(d2.nodal_measures.0 > 0.0 && d2.nodal_measures.1 > 0.0);
        let q = rayleigh_quotient(&f, &res[0].coefficients, 0.2).unwrap();
        assert_relative_eq!(q, res[0].lambda, max_relative = 1e-10);
    }

    #[test]
    fn inverse_iteration_matches_direct_solver() {
        let f = setup(2.0, 0.8, 0.2, 0.1);
        let direct = solve_linear(&f, 0.2, 1).unwrap();
        let one = DofFunction::constant(f.mesh(), 1.0);
        let it = solve_first_p(&f, 0.2, &one, 1e-13, 100).unwrap();
        assert!(it.converged);
        assert_relative_eq!(it.lambda, direct[0].lambda, max_relative = 1e-6);
        assert!(it.quotient_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)));
    }

    #[test]
    fn eigenfunction_start_is_a_fixed_point() {
        let f = setup(2.0, 0.8, 0.2, 0.1);
        let direct = solve_linear(&f, 0.2, 1).unwrap();
        let it = solve_first_p(&f, 0.2, &direct[0].coefficients, 1e-10, 100).unwrap();
        assert!(it.iterations <= 2);
    }

    #[test]
    fn p3_iteration_converges() {
        let f = setup(3.0, 0.8, 0.2, 0.1);
        let one = DofFunction::constant(f.mesh(), 1.0);
        let r = solve_first_p(&f, 0.2, &one, 1e-12, 200).unwrap();
        assert!(r.converged, "{:?}", r.quotient_history);
        assert!(r.lambda > 0.0 && r.lambda < 0.5);
        assert!(r.residual < 1e-8);
        assert!(diagnostics(&r, f.mesh()).sign_constant);
    }

    #[test]
    fn constant_function_nodal_measures() {
        let f = setup(2.0, 0.8, 0.2, 0.1);
        let r = EigenResult {
            lambda: 0.5,
            eps: 0.2,
            coefficients: DofFunction::constant(f.mesh(), 1.0),
            residual: 0.0,
            iterations: 0,
            normalized: false,
            converged: true,
            quotient_history: vec![],
            next_eigenvalue: None,
        };
        let d = diagnostics(&r, f.mesh());
        assert_relative_eq!(d.nodal_measures.0, 1.0, max_relative = 1e-14);
        assert_eq!(d.nodal_measures.1, 0.0);
        assert!(d.gap_to_next.is_none());
    }
}
