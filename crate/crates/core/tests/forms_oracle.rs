use approx::assert_relative_eq;
use fracsteklov::forms::{picone_defect, GagliardoForm};
use fracsteklov::gauss;
use fracsteklov::kernel::{KernelSpec, QuadratureControl};
use fracsteklov::mesh::{build_collar_mesh, CollarMesh1D, DofFunction, MeshParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(h: f64, radius: f64) -> CollarMesh1D {
    build_collar_mesh(&MeshParams { a: 0.0, b: 1.0, radius, h, gamma: 1.0, strip_eps: None }).unwrap()
}

fn graded(h: f64) -> CollarMesh1D {
    build_collar_mesh(&MeshParams { a: 0.0, b: 1.0, radius: 1.0, h, gamma: 2.0, strip_eps: None }).unwrap()
}

/// Direct composite quadrature of H(u, v) for the discrete pair: every
/// mesh cell is cut into `refine` pieces, piece pairs are integrated by
/// tensor Gauss after splitting toward shared corners, identical pieces
/// by the closed form for linear data. Exterior values sit at midpoints.
struct Oracle<'a> {
    mesh: &'a CollarMesh1D,
    s: f64,
    p: f64,
}

impl Oracle<'_> {
    fn kern(&self, r: f64) -> f64 {
        r.abs().powf(-1.0 - self.s * self.p)
    }

    fn phi(&self, d: f64, e: f64) -> f64 {
        if d == 0.0 {
            0.0
        } else {
            d.abs().powf(self.p - 2.0) * d * e
        }
    }

    fn pieces(&self, refine: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for c in self.mesh.cells() {
            for k in 0..refine {
                out.push((c.lo + c.len() * k as f64 / refine as f64, c.lo + c.len() * (k + 1) as f64 / refine as f64));
            }
        }
        out
    }

    fn pair(&self, u: &[f64], v: &[f64], x: (f64, f64), y: (f64, f64), depth: usize) -> f64 {
        let eval = |w: &[f64], t: f64| self.mesh.eval_interior(w, t);
        if x == y {
            // linear on one piece: d_u = a r, d_v = b r
            let h = x.1 - x.0;
            let a = (eval(u, x.1) - eval(u, x.0)) / h;
            let b = (eval(v, x.1) - eval(v, x.0)) / h;
            let beta = self.p - 1.0 - self.s * self.p;
            return self.phi(a, b) * 2.0 * h.powf(beta + 2.0) / ((beta + 1.0) * (beta + 2.0));
        }
        let dist = (y.0 - x.1).max(x.0 - y.1);
        let size = (x.1 - x.0).max(y.1 - y.0);
        if dist >= size || depth == 0 {
            let r = gauss::rule(10);
            let mut acc = 0.0;
            for (xn, xw) in r.nodes.iter().zip(&r.weights) {
                let xx = x.0 + (x.1 - x.0) * xn;
                for (yn, yw) in r.nodes.iter().zip(&r.weights) {
                    let yy = y.0 + (y.1 - y.0) * yn;
                    let du = eval(u, xx) - eval(u, yy);
                    let dv = eval(v, xx) - eval(v, yy);
                    acc += xw * yw * self.phi(du, dv) * self.kern(xx - yy);
                }
            }
            return acc * (x.1 - x.0) * (y.1 - y.0);
        }
        let xm = 0.5 * (x.0 + x.1);
        let ym = 0.5 * (y.0 + y.1);
        let mut acc = 0.0;
        for xs in [(x.0, xm), (xm, x.1)] {
            for ys in [(y.0, ym), (ym, y.1)] {
                acc += self.pair(u, v, xs, ys, depth - 1);
            }
        }
        acc
    }

    fn interior(&self, u: &[f64], v: &[f64], refine: usize) -> f64 {
        let pcs = self.pieces(refine);
        let mut acc = 0.0;
        for &x in &pcs {
            for &y in &pcs {
                acc += self.pair(u, v, x, y, 14);
            }
        }
        acc
    }

    fn exterior(&self, u: &DofFunction, v: &DofFunction, refine: usize) -> f64 {
        let pcs = self.pieces(refine);
        let r = gauss::rule(12);
        let mut acc = 0.0;
        for (m, cell) in self.mesh.exterior_cells().enumerate() {
            let xi = cell.mid();
            for &(y0, y1) in &pcs {
                let mut piece = 0.0;
                for (yn, yw) in r.nodes.iter().zip(&r.weights) {
                    let y = y0 + (y1 - y0) * yn;
                    let du = u.exterior[m] - self.mesh.eval_interior(&u.interior, y);
                    let dv = v.exterior[m] - self.mesh.eval_interior(&v.interior, y);
                    piece += yw * self.phi(du, dv) * self.kern(xi - y);
                }
                acc += 2.0 * cell.len() * piece * (y1 - y0);
            }
        }
        acc
    }

    fn full(&self, u: &DofFunction, v: &DofFunction, refine: usize) -> f64 {
        self.interior(&u.interior, &v.interior, refine) + self.exterior(u, v, refine)
    }
}

#[test]
fn full_energy_matches_brute_force() {
    let mesh = uniform(0.1, 1.0);
    let spec = KernelSpec::one_d(0.3, 2.0).unwrap();
    let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
    let u = form.extend(&mesh.interpolate(|x| x).interior).unwrap();
    let oracle = Oracle { mesh: &mesh, s: 0.3, p: 2.0 };
    let want = oracle.full(&u, &u, 10);
    assert_relative_eq!(form.energy(&u).unwrap(), want, max_relative = 1e-4);
}

#[test]
fn p3_pairing_matches_brute_force() {
    let mesh = uniform(0.1, 1.0);
    let spec = KernelSpec::one_d(0.3, 3.0).unwrap();
    let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
    let u = mesh.interpolate(|x| x);
    let v = mesh.interpolate(|x| (1.0 - (x - 0.5).abs() / 0.1).max(0.0));
    let oracle = Oracle { mesh: &mesh, s: 0.3, p: 3.0 };
    let want = oracle.full(&u, &v, 10);
    assert_relative_eq!(form.pairing(&u, &v).unwrap(), want, max_relative = 1e-6);
}

#[test]
fn graded_energy_matches_brute_force_at_high_s() {
    // sp > 1: the collocated exterior keeps the energy finite
    let mesh = graded(0.125);
    let spec = KernelSpec::one_d(0.8, 2.0).unwrap();
    let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
    let u = form.extend(&mesh.interpolate(|x| (2.0 * x).cos()).interior).unwrap();
    let oracle = Oracle { mesh: &mesh, s: 0.8, p: 2.0 };
    let want = oracle.full(&u, &u, 10);
    assert_relative_eq!(form.energy(&u).unwrap(), want, max_relative = 1e-4);
}

#[test]
fn p2_pairing_is_symmetric() {
    let mesh = graded(0.1);
    let spec = KernelSpec::one_d(0.75, 2.0).unwrap();
    let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let u = random_function(&mesh, &mut rng);
        let v = random_function(&mesh, &mut rng);
        let a = form.pairing(&u, &v).unwrap();
        let b = form.pairing(&v, &u).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

fn random_function(mesh: &CollarMesh1D, rng: &mut ChaCha8Rng) -> DofFunction {
    DofFunction::new(
        (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..mesh.num_exterior()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

#[test]
fn seeded_identities_p3() {
    let mesh = graded(0.1);
    let spec = KernelSpec::one_d(0.7, 3.0).unwrap();
    let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let u = random_function(&mesh, &mut rng);
        let v = random_function(&mesh, &mut rng);
        let r = form.identity_check(&u, &v).unwrap();
        assert!(r.divergence_residual <= 1e-8 * r.scale, "{r:?}");
        assert!(r.parts_residual <= 1e-8 * r.scale, "{r:?}");
    }
}

#[test]
fn neumann_extension_is_minimal_on_seeded_instances() {
    let mesh = graded(0.125);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..10 {
        let p = if i % 2 == 0 { 2.0 } else { 3.0 };
        let spec = KernelSpec::one_d(0.6 + 0.03 * i as f64, p).unwrap();
        let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
        let ui: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = form.extend(&ui).unwrap();
        let e0 = form.energy(&u).unwrap();
        let k = rng.gen_range(0..mesh.num_exterior());
        for d in [1e-4, -1e-4] {
            let mut w = u.clone();
            w.exterior[k] += d;
            assert!(form.energy(&w).unwrap() > e0);
        }
    }
}

#[test]
fn picone_on_seeded_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [1.5, 2.0, 3.0] {
        for _ in 0..1000 {
            let u = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            let v = (rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0));
            let l = picone_defect(u, v, p).unwrap();
            let scale = 1.0 + (u.0 - u.1).abs().powf(p);
            assert!(l >= -1e-14 * scale, "p={p} u={u:?} v={v:?} L={l}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pairing_with_constants_vanishes(seed in 0u64..1000, c in -5.0f64..5.0) {
        let mesh = graded(0.2);
        let spec = KernelSpec::one_d(0.65, 3.0).unwrap();
        let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_function(&mesh, &mut rng);
        let one = DofFunction::constant(&mesh, c);
        let scale = form.energy(&u).unwrap().max(1e-300);
        prop_assert!(form.pairing(&u, &one).unwrap().abs() <= 1e-12 * scale * (1.0 + c.abs()));
    }

    #[test]
    fn picone_equality_for_proportional_pairs(
        v0 in 0.01f64..5.0, v1 in 0.01f64..5.0, k in 0.0f64..4.0, p in 1.1f64..4.0
    ) {
        let l = picone_defect((k * v0, k * v1), (v0, v1), p).unwrap();
        let scale = 1.0 + (k * (v0 - v1)).abs().powf(p);
        prop_assert!(l.abs() <= 1e-12 * scale);
    }

    #[test]
    fn energy_scales_homogeneously(seed in 0u64..1000, c in prop_oneof![Just(2.0f64), Just(-3.0f64), -4.0f64..4.0]) {
        let mesh = graded(0.2);
        let spec = KernelSpec::one_d(0.7, 2.5).unwrap();
        let form = GagliardoForm::assemble(&mesh, &spec, &QuadratureControl::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_function(&mesh, &mut rng);
        let e = form.energy(&u).unwrap();
        let ec = form.energy(&u.scaled(c)).unwrap();
        prop_assert!((ec - c.abs().powf(2.5) * e).abs() <= 1e-10 * ec.abs().max(1e-300));
    }
}
