use approx::assert_relative_eq;
use fracsteklov::eigen::{
    diagnostics, inverse_iteration, rayleigh_quotient, solve_first_p, solve_linear, Denominator, InnerControl,
};
use fracsteklov::forms::{mass_matrix, GagliardoForm, Region};
use fracsteklov::harness::MeshPolicy;
use fracsteklov::kernel::{KernelSpec, QuadratureControl};
use fracsteklov::mesh::{CollarMesh1D, DofFunction};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coarse() -> MeshPolicy {
    MeshPolicy { h: 0.125, strip_cells: 2, ..MeshPolicy::default() }
}

fn setup(s: f64, p: f64, eps: f64, policy: &MeshPolicy) -> (CollarMesh1D, GagliardoForm) {
    let mesh = policy.mesh(Some(eps)).unwrap();
    let form =
        GagliardoForm::assemble(&mesh, &KernelSpec::one_d(s, p).unwrap(), &QuadratureControl::default()).unwrap();
    (mesh, form)
}

fn unit(mesh: &CollarMesh1D, k: usize) -> DofFunction {
    let mut f = DofFunction::constant(mesh, 0.0);
    if k < mesh.num_nodes() {
        f.interior[k] = 1.0;
    } else {
        f.exterior[k - mesh.num_nodes()] = 1.0;
    }
    f
}

// Smallest eigenvalue from the full matrix over all degrees of freedom,
// eliminating every one the denominator does not see.
fn dense_lambda(mesh: &CollarMesh1D, form: &GagliardoForm, eps: f64) -> f64 {
    let n = mesh.num_nodes();
    let total = n + mesh.num_exterior();
    let k = form.spec().seminorm_scale();
    let basis: Vec<DofFunction> = (0..total).map(|i| unit(mesh, i)).collect();
    let mass = mass_matrix(mesh, Region::Interior).unwrap();
    let strip = mass_matrix(mesh, Region::Strip(eps)).unwrap() / eps;
    let mut a = DMatrix::zeros(total, total);
    for i in 0..total {
        for j in 0..total {
            a[(i, j)] = k * form.pairing(&basis[i], &basis[j]).unwrap();
            if i < n && j < n {
                a[(i, j)] += mass[(i, j)];
            }
        }
    }
    let seen: Vec<usize> = (0..n).filter(|&i| strip[(i, i)] > 0.0).collect();
    let hidden: Vec<usize> = (0..total).filter(|i| !seen.contains(i)).collect();
    let pick = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
    let a_ss = pick(&a, &seen, &seen);
    let a_sh = pick(&a, &seen, &hidden);
    let a_hh = pick(&a, &hidden, &hidden);
    let schur = &a_ss - &a_sh * a_hh.cholesky().unwrap().solve(&a_sh.transpose());
    let l = pick(&strip, &seen, &seen).cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * schur * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    c.symmetric_eigenvalues().min()
}

#[test]
fn linear_solver_matches_dense_elimination() {
    for (s, eps) in [(0.6, 0.25), (0.8, 0.2), (0.9, 0.125)] {
        let (mesh, form) = setup(s, 2.0, eps, &coarse());
        let r = solve_linear(&form, eps, 1).unwrap().swap_remove(0);
        assert_relative_eq!(r.lambda, dense_lambda(&mesh, &form, eps), max_relative = 1e-10);
    }
}

#[test]
fn eigenpair_minimizes_the_quotient() {
    let (mesh, form) = setup(0.75, 2.0, 0.25, &coarse());
    let r = solve_linear(&form, 0.25, 1).unwrap().swap_remove(0);
    assert_relative_eq!(rayleigh_quotient(&form, &r.coefficients, 0.25).unwrap(), r.lambda, max_relative = 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut w = r.coefficients.clone();
        for x in w.interior.iter_mut().chain(w.exterior.iter_mut()) {
            *x += 0.05 * rng.gen_range(-1.0..1.0);
        }
        assert!(rayleigh_quotient(&form, &w, 0.25).unwrap() >= r.lambda * (1.0 - 1e-12));
    }
    let d = diagnostics(&r, &mesh);
    assert!(d.sign_constant);
    assert_eq!(d.nodal_measures.1, 0.0);
}

#[test]
fn nonlinear_path_reproduces_linear_solver() {
    let (mesh, form) = setup(0.7, 2.0, 0.25, &coarse());
    let direct = solve_linear(&form, 0.25, 1).unwrap().swap_remove(0);
    let init = DofFunction::constant(&mesh, 1.0);
    let iter = inverse_iteration(&form, Denominator::Strip(0.25), &init, 1e-13, 500, &InnerControl::default()).unwrap();
    assert!(iter.converged);
    assert_relative_eq!(iter.lambda, direct.lambda, max_relative = 1e-9);
}

#[test]
fn p3_quotients_decrease_and_bound_holds() {
    let (mesh, form) = setup(0.8, 3.0, 0.2, &coarse());
    let one = DofFunction::constant(&mesh, 1.0);
    let r = solve_first_p(&form, 0.2, &one, 1e-12, 500).unwrap();
    assert!(r.converged && r.normalized);
    assert!(r.quotient_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)));
    assert!(r.lambda <= rayleigh_quotient(&form, &one, 0.2).unwrap());
    let d = diagnostics(&r, &mesh);
    assert!(d.sign_constant);
    assert!(d.sup_norm < 5.0, "sup {}", d.sup_norm);
}

#[test]
fn refinement_is_stable() {
    let pol = coarse();
    let (_, f0) = setup(0.8, 2.0, 0.2, &pol);
    let (_, f1) = setup(0.8, 2.0, 0.2, &pol.refined());
    let (_, f2) = setup(0.8, 2.0, 0.2, &pol.refined().refined());
    let l: Vec<f64> = [f0, f1, f2].iter().map(|f| solve_linear(f, 0.2, 1).unwrap()[0].lambda).collect();
    assert!((l[2] - l[1]).abs() < (l[1] - l[0]).abs() + 1e-12, "{l:?}");
    assert!((l[2] - l[1]).abs() < 1e-2 * l[2], "{l:?}");
}

#[test]
fn sup_norm_stays_bounded_as_s_grows() {
    let pol = MeshPolicy::default();
    for s in [0.6, 0.8, 0.95] {
        let eps = 1.0 - s;
        let (mesh, form) = setup(s, 2.0, eps, &pol);
        let r = solve_linear(&form, eps, 2).unwrap();
        let d = diagnostics(&r[0], &mesh);
        assert!(d.sup_norm < 2.0, "s = {s}: {}", d.sup_norm);
        assert!(d.gap_to_next.unwrap() > 0.0);
        // the second eigenfunction changes sign
        assert!(!diagnostics(&r[1], &mesh).sign_constant);
    }
}
