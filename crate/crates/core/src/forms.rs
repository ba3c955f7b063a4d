//! The nonlocal energy H_{s,p} on ℝ²∖(Ωᶜ)², L^p masses, the nonlocal
//! Neumann extension and the regional identities.
//!
//! The interaction between a pair of cells is reduced to a list of
//! quadrature points, each carrying a linear difference functional
//! d(u) = Σ c_k u_{idx_k} and a kernel-weighted weight W, so that
//! H(u, v) = Σ W |d(u)|^{p−2} d(u) d(v). Identical interior cells use the
//! closed form of ∬|x−y|^β, touching cells the homogeneity of the
//! integrand (one smooth 1D integral per triangle), separated cells tensor
//! Gauss on admissible boxes. Exterior cells interact with Ω only, with the
//! exterior variable collocated at the cell midpoint.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss;
use crate::kernel::{kernel_tail_mass, Interval, KernelSpec, QuadratureControl};
use crate::mesh::{CollarMesh1D, DofFunction};
use crate::par;

const TASK_CHUNK: usize = 4096;
const TERM_CHUNK: usize = 8192;

/// Where an L^p mass is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Interior,
    Strip(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Task {
    Same(u32),
    Adjacent(u32),
    Separated(u32, u32),
    Exterior(u32, u32),
}

/// Quadrature points of one cell-pair interaction.
#[derive(Clone, Debug, Default)]
struct Block {
    idx: [u32; 4],
    len: u8,
    points: Vec<([f64; 4], f64)>,
}

#[derive(Clone, Debug)]
struct BlockHeader {
    idx: [u32; 4],
    len: u8,
    points: Range<usize>,
}

/// Flattened cell-pair quadrature, used for general p.
#[derive(Clone, Debug, Default)]
struct TermCache {
    headers: Vec<BlockHeader>,
    coefs: Vec<[f64; 4]>,
    weights: Vec<f64>,
    /// Header range belonging to each exterior cell.
    exterior_headers: Vec<Range<usize>>,
}

/// Dense blocks of the p = 2 bilinear form.
#[derive(Clone, Debug)]
pub struct QuadraticBlocks {
    /// interior × interior
    pub ii: DMatrix<f64>,
    /// interior × exterior
    pub ie: DMatrix<f64>,
    /// exterior diagonal; there is no exterior × exterior coupling
    pub ee: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Storage {
    Quadratic(QuadraticBlocks),
    Terms(TermCache),
}

/// Assembled nonlocal energy for one mesh and kernel.
#[derive(Clone, Debug)]
pub struct GagliardoForm {
    spec: KernelSpec,
    mesh: CollarMesh1D,
    ctrl: QuadratureControl,
    tail_mass: f64,
    storage: Storage,
}

/// Residuals of the discrete divergence theorem and integration by parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub divergence_residual: f64,
    pub parts_residual: f64,
    pub scale: f64,
}

struct Ctx<'a> {
    mesh: &'a CollarMesh1D,
    spec: KernelSpec,
    tol: f64,
    n_nodes: usize,
    interior_only: bool,
}

impl GagliardoForm {
    /// Assembles the form. For p = 2 the dense blocks are built; for any
    /// other p the cell-pair quadrature is cached.
    pub fn assemble(mesh: &CollarMesh1D, spec: &KernelSpec, ctrl: &QuadratureControl) -> Result<Self> {
        if spec.p == 2.0 {
            Self::build(mesh, spec, ctrl, true, false)
        } else {
            Self::build(mesh, spec, ctrl, false, false)
        }
    }

    /// Always caches the quadrature, also for p = 2.
    pub fn assemble_cached(mesh: &CollarMesh1D, spec: &KernelSpec, ctrl: &QuadratureControl) -> Result<Self> {
        Self::build(mesh, spec, ctrl, false, false)
    }

    /// The Ω×Ω part only; exterior DOFs are present but inert.
    pub fn assemble_interior(mesh: &CollarMesh1D, spec: &KernelSpec, ctrl: &QuadratureControl) -> Result<Self> {
        Self::build(mesh, spec, ctrl, spec.p == 2.0, true)
    }

    fn build(
        mesh: &CollarMesh1D,
        spec: &KernelSpec,
        ctrl: &QuadratureControl,
        quadratic: bool,
        interior_only: bool,
    ) -> Result<Self> {
        ctrl.validate()?;
        if spec.n != 1 {
            return Err(Error::Argument("only one-dimensional forms are supported".into()));
        }
        let ctx = Ctx { mesh, spec: *spec, tol: ctrl.rel_tol * 1e-3, n_nodes: mesh.num_nodes(), interior_only };
        let tasks = task_list(mesh, interior_only);
        let storage = if quadratic {
            Storage::Quadratic(assemble_quadratic(&ctx, &tasks)?)
        } else {
            Storage::Terms(assemble_terms(&ctx, &tasks)?)
        };
        Ok(GagliardoForm {
            spec: *spec,
            mesh: mesh.clone(),
            ctrl: *ctrl,
            tail_mass: kernel_tail_mass(mesh.radius(), spec)?,
            storage,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &CollarMesh1D {
        &self.mesh
    }

    pub fn control(&self) -> &QuadratureControl {
        &self.ctrl
    }

    /// 2/(sp R^{sp}): kernel mass beyond the collar.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes() + self.mesh.num_exterior()
    }

    pub fn blocks(&self) -> Option<&QuadraticBlocks> {
        match &self.storage {
            Storage::Quadratic(b) => Some(b),
            Storage::Terms(_) => None,
        }
    }

    fn flat(&self, u: &DofFunction) -> Result<Vec<f64>> {
        u.check(&self.mesh)?;
        Ok(u.to_flat())
    }

    /// H(u, u) = Σ W |d(u)|^p.
    pub fn energy(&self, u: &DofFunction) -> Result<f64> {
        let uf = self.flat(u)?;
        Ok(self.energy_flat(&uf))
    }

    /// H(u, v) = Σ W |d(u)|^{p−2} d(u) d(v).
    pub fn pairing(&self, u: &DofFunction, v: &DofFunction) -> Result<f64> {
        let uf = self.flat(u)?;
        let vf = self.flat(v)?;
        Ok(self.pairing_flat(&uf, &vf))
    }

    pub(crate) fn energy_flat(&self, u: &[f64]) -> f64 {
        match &self.storage {
            Storage::Quadratic(b) => quadratic_pairing(b, u, u),
            Storage::Terms(t) => {
                let p = self.spec.p;
                t.reduce(|d, w| w * d.abs().powf(p), |_, _| 0.0, u, u)
            }
        }
    }

    pub(crate) fn pairing_flat(&self, u: &[f64], v: &[f64]) -> f64 {
        match &self.storage {
            Storage::Quadratic(b) => quadratic_pairing(b, u, v),
            Storage::Terms(t) => {
                let p = self.spec.p;
                t.reduce(|_, _| 0.0, |du, dv| signed_pow(du, p - 1.0) * dv, u, v)
            }
        }
    }

    /// Σ |W| |d(u)|^{p−1} |d(v)|, the size of H(u, v) before cancellation.
    /// For p = 2 the bound |u|ᵀ|A||v| is used.
    pub(crate) fn abs_pairing_flat(&self, u: &[f64], v: &[f64]) -> f64 {
        match &self.storage {
            Storage::Quadratic(b) => {
                let abs = |x: &[f64]| x.iter().map(|a| a.abs()).collect::<Vec<_>>();
                let ab = QuadraticBlocks { ii: b.ii.abs(), ie: b.ie.abs(), ee: b.ee.iter().map(|a| a.abs()).collect() };
                quadratic_pairing(&ab, &abs(u), &abs(v))
            }
            Storage::Terms(t) => {
                let p = self.spec.p;
                t.reduce(|_, _| 0.0, |du, dv| du.abs().powf(p - 1.0) * dv.abs(), u, v)
            }
        }
    }

    /// The vector (H(u, e_j))_j over all DOFs.
    pub fn pairing_vector(&self, u: &DofFunction) -> Result<Vec<f64>> {
        let uf = self.flat(u)?;
        Ok(self.pairing_vector_flat(&uf))
    }

    pub(crate) fn pairing_vector_flat(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        match &self.storage {
            Storage::Quadratic(b) => {
                let ni = b.ii.nrows();
                let ui = nalgebra::DVector::from_column_slice(&u[..ni]);
                let ue = nalgebra::DVector::from_column_slice(&u[ni..]);
                let gi = &b.ii * &ui + &b.ie * &ue;
                let ge = b.ie.tr_mul(&ui);
                let mut g = gi.as_slice().to_vec();
                g.extend(ge.iter().zip(ue.iter()).zip(&b.ee).map(|((x, y), d)| x + d * y));
                g
            }
            Storage::Terms(t) => {
                let p = self.spec.p;
                let mut g = vec![0.0; n];
                for h in &t.headers {
                    for k in h.points.clone() {
                        let c = &t.coefs[k];
                        let d = dot(&h.idx, c, h.len, u);
                        let f = t.weights[k] * signed_pow(d, p - 1.0);
                        for a in 0..h.len as usize {
                            g[h.idx[a] as usize] += f * c[a];
                        }
                    }
                }
                g
            }
        }
    }

    /// Jacobian of [`pairing_vector`]: (p−1) Σ W |d|^{p−2} c cᵀ. For p < 2
    /// |d| is floored at `reg` to keep the matrix bounded.
    pub(crate) fn pairing_jacobian_flat(&self, u: &[f64], reg: f64) -> DMatrix<f64> {
        let n = u.len();
        match &self.storage {
            Storage::Quadratic(b) => quadratic_full(b),
            Storage::Terms(t) => {
                let p = self.spec.p;
                let mut m = DMatrix::zeros(n, n);
                for h in &t.headers {
                    let len = h.len as usize;
                    for k in h.points.clone() {
                        let c = &t.coefs[k];
                        let d = dot(&h.idx, c, h.len, u).abs();
                        let dd = if p < 2.0 { d.max(reg) } else { d };
                        let f = (p - 1.0) * t.weights[k] * dd.powf(p - 2.0);
                        if f == 0.0 {
                            continue;
                        }
                        for a in 0..len {
                            let ia = h.idx[a] as usize;
                            let fa = f * c[a];
                            for bb in 0..len {
                                m[(ia, h.idx[bb] as usize)] += fa * c[bb];
                            }
                        }
                    }
                }
                m
            }
        }
    }

    /// Interior form after eliminating the exterior DOFs (p = 2 only):
    /// A_II − A_IE A_EE⁻¹ A_EI.
    pub fn reduced_quadratic(&self) -> Option<DMatrix<f64>> {
        let b = self.blocks()?;
        let mut g = b.ie.clone();
        for (m, mut col) in g.column_iter_mut().enumerate() {
            let d = b.ee[m];
            if d > 0.0 {
                col /= d.sqrt();
            } else {
                col.fill(0.0);
            }
        }
        let mut s = b.ii.clone();
        s.gemm(-1.0, &g, &g.transpose(), 1.0);
        // restore exact symmetry lost in the product
        let s2 = (&s + s.transpose()) * 0.5;
        Some(s2)
    }

    /// Exterior values making 𝒩_{s,p}u vanish cell by cell.
    pub fn neumann_extend(&self, u_interior: &[f64]) -> Result<Vec<f64>> {
        if u_interior.len() != self.mesh.num_nodes() {
            return Err(Error::DimensionMismatch { expected: self.mesh.num_nodes(), got: u_interior.len() });
        }
        if u_interior.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("interior coefficients must be finite".into()));
        }
        let n = self.mesh.num_nodes();
        match &self.storage {
            Storage::Quadratic(b) => Ok((0..self.mesh.num_exterior())
                .map(|m| {
                    let num: f64 = (0..n).map(|i| -b.ie[(i, m)] * u_interior[i]).sum();
                    if b.ee[m] > 0.0 {
                        num / b.ee[m]
                    } else {
                        0.0
                    }
                })
                .collect()),
            Storage::Terms(t) => {
                let p = self.spec.p;
                let results = par::map_range(self.mesh.num_exterior(), |m| {
                    let mut values = Vec::new();
                    let mut weights = Vec::new();
                    for h in &t.headers[t.exterior_headers[m].clone()] {
                        for k in h.points.clone() {
                            // coefficient 0 is the exterior DOF itself
                            let c = &t.coefs[k];
                            let y: f64 = (1..h.len as usize).map(|a| -c[a] * u_interior[h.idx[a] as usize]).sum();
                            values.push(y);
                            weights.push(t.weights[k]);
                        }
                    }
                    solve_neumann_scalar(&values, &weights, p).map_err(|_| Error::RootFind { cell: m })
                });
                results.into_iter().collect()
            }
        }
    }

    /// Interior values with their Neumann extension attached.
    pub fn extend(&self, u_interior: &[f64]) -> Result<DofFunction> {
        let ext = self.neumann_extend(u_interior)?;
        Ok(DofFunction::new(u_interior.to_vec(), ext))
    }

    /// Regional split of H(u, ·): the interior part plays ∫_Ω v(−Δ)^s_p u,
    /// the exterior part ∫_{Ωᶜ} v 𝒩_{s,p}u.
    pub fn identity_check(&self, u: &DofFunction, v: &DofFunction) -> Result<IdentityReport> {
        u.check(&self.mesh)?;
        v.check(&self.mesh)?;
        let one = DofFunction::constant(&self.mesh, 1.0);
        let div_int = self.pairing(u, &one.interior_part())?;
        let div_ext = self.pairing(u, &one.exterior_part())?;
        let h = self.pairing(u, v)?;
        let v_int = self.pairing(u, &v.interior_part())?;
        let v_ext = self.pairing(u, &v.exterior_part())?;
        let uf = u.to_flat();
        let magnitude = [one.interior_part(), one.exterior_part(), v.interior_part(), v.exterior_part()]
            .iter()
            .map(|w| self.abs_pairing_flat(&uf, &w.to_flat()))
            .fold(0.0f64, f64::max);
        let scale = [h, v_int, v_ext, div_int, div_ext, magnitude].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(IdentityReport {
            divergence_residual: (div_int + div_ext).abs(),
            parts_residual: (h - v_int - v_ext).abs(),
            scale,
        })
    }

    /// Dense matrix text of the interior×interior and interior×exterior
    /// blocks followed by the exterior diagonal: row-major, one row per
    /// line, 17 significant digits.
    pub fn export_blocks(&self) -> Option<String> {
        let b = self.blocks()?;
        let mut out = String::new();
        let write_matrix = |out: &mut String, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        };
        out.push_str(&format!("# interior x interior {} {}\n", b.ii.nrows(), b.ii.ncols()));
        write_matrix(&mut out, &b.ii);
        out.push_str(&format!("# interior x exterior {} {}\n", b.ie.nrows(), b.ie.ncols()));
        write_matrix(&mut out, &b.ie);
        out.push_str(&format!("# exterior diagonal {}\n", b.ee.len()));
        let row: Vec<String> = b.ee.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
        Some(out)
    }
}

impl TermCache {
    /// Σ over points of energy(d_u, W) + W·pair(d_u, d_v), in chunks whose
    /// partial sums are added in order.
    fn reduce<E, P>(&self, energy: E, pair: P, u: &[f64], v: &[f64]) -> f64
    where
        E: Fn(f64, f64) -> f64 + Sync + Send,
        P: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let n_chunks = self.headers.len().div_ceil(TERM_CHUNK);
        let partial = par::map_range(n_chunks, |c| {
            let mut acc = 0.0;
            for h in &self.headers[c * TERM_CHUNK..((c + 1) * TERM_CHUNK).min(self.headers.len())] {
                for k in h.points.clone() {
                    let coef = &self.coefs[k];
                    let w = self.weights[k];
                    let du = dot(&h.idx, coef, h.len, u);
                    let e = energy(du, w);
                    let dv = dot(&h.idx, coef, h.len, v);
                    acc += e + w * pair(du, dv);
                }
            }
            acc
        });
        par::ordered_sum(&partial)
    }
}

#[inline]
fn dot(idx: &[u32; 4], c: &[f64; 4], len: u8, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..len as usize {
        s += c[a] * u[idx[a] as usize];
    }
    s
}

#[inline]
pub(crate) fn signed_pow(d: f64, e: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.signum() * d.abs().powf(e)
    }
}

fn quadratic_pairing(b: &QuadraticBlocks, u: &[f64], v: &[f64]) -> f64 {
    let n = b.ii.nrows();
    let (ui, ue) = u.split_at(n);
    let (vi, ve) = v.split_at(n);
    let ui = nalgebra::DVector::from_column_slice(ui);
    let vi = nalgebra::DVector::from_column_slice(vi);
    let ue = nalgebra::DVector::from_column_slice(ue);
    let ve = nalgebra::DVector::from_column_slice(ve);
    let mut s = ui.dot(&(&b.ii * &vi));
    s += ui.dot(&(&b.ie * &ve));
    s += ue.dot(&(b.ie.transpose() * &vi));
    s += ue.iter().zip(ve.iter()).zip(&b.ee).map(|((a, c), d)| a * c * d).sum::<f64>();
    s
}

fn quadratic_full(b: &QuadraticBlocks) -> DMatrix<f64> {
    let n = b.ii.nrows();
    let m = b.ee.len();
    let mut full = DMatrix::zeros(n + m, n + m);
    full.view_mut((0, 0), (n, n)).copy_from(&b.ii);
    full.view_mut((0, n), (n, m)).copy_from(&b.ie);
    full.view_mut((n, 0), (m, n)).copy_from(&b.ie.transpose());
    for (k, d) in b.ee.iter().enumerate() {
        full[(n + k, n + k)] = *d;
    }
    full
}

fn task_list(mesh: &CollarMesh1D, interior_only: bool) -> Vec<Task> {
    let nc = mesh.num_cells() as u32;
    let mut tasks: Vec<Task> = (0..nc).map(Task::Same).collect();
    tasks.extend((1..nc).map(Task::Adjacent));
    for k in 0..nc {
        for l in k + 2..nc {
            tasks.push(Task::Separated(k, l));
        }
    }
    if !interior_only {
        for m in 0..mesh.num_exterior() as u32 {
            for i in 0..nc {
                tasks.push(Task::Exterior(m, i));
            }
        }
    }
    tasks
}

fn assemble_quadratic(ctx: &Ctx, tasks: &[Task]) -> Result<QuadraticBlocks> {
    let n = ctx.n_nodes;
    let m = ctx.mesh.num_exterior();
    let mut ii = DMatrix::zeros(n, n);
    let mut ie = DMatrix::zeros(n, m);
    let mut ee = vec![0.0; m];
    for chunk in tasks.chunks(TASK_CHUNK) {
        let locals = par::map(chunk, |task| {
            let block = generate_block(ctx, *task)?;
            let len = block.len as usize;
            let mut loc = [0.0; 16];
            for (c, w) in &block.points {
                for a in 0..len {
                    let wa = w * c[a];
                    for b in 0..len {
                        loc[a * 4 + b] += wa * c[b];
                    }
                }
            }
            Ok::<_, Error>((block.idx, block.len, loc))
        });
        for res in locals {
            let (idx, len, loc) = res?;
            let len = len as usize;
            for a in 0..len {
                let ia = idx[a] as usize;
                for b in 0..len {
                    let ib = idx[b] as usize;
                    let v = loc[a * 4 + b];
                    match (ia < n, ib < n) {
                        (true, true) => ii[(ia, ib)] += v,
                        (true, false) => ie[(ia, ib - n)] += v,
                        (false, true) => {}
                        (false, false) => {
                            debug_assert_eq!(ia, ib);
                            ee[ia - n] += v;
                        }
                    }
                }
            }
        }
    }
    Ok(QuadraticBlocks { ii, ie, ee })
}

fn assemble_terms(ctx: &Ctx, tasks: &[Task]) -> Result<TermCache> {
    let mut cache = TermCache::default();
    let m = ctx.mesh.num_exterior();
    cache.exterior_headers = vec![0..0; m];
    for chunk in tasks.chunks(TASK_CHUNK) {
        let blocks = par::map(chunk, |task| generate_block(ctx, *task));
        for (task, block) in chunk.iter().zip(blocks) {
            let block = block?;
            let start = cache.coefs.len();
            for (c, w) in block.points {
                cache.coefs.push(c);
                cache.weights.push(w);
            }
            let hdr = cache.headers.len();
            cache.headers.push(BlockHeader { idx: block.idx, len: block.len, points: start..cache.coefs.len() });
            if let Task::Exterior(e, _) = task {
                let r = &mut cache.exterior_headers[*e as usize];
                if r.start == r.end {
                    *r = hdr..hdr + 1;
                } else {
                    r.end = hdr + 1;
                }
            }
        }
    }
    Ok(cache)
}

fn generate_block(ctx: &Ctx, task: Task) -> Result<Block> {
    let spec = &ctx.spec;
    let (s, p) = (spec.s, spec.p);
    let sp = s * p;
    let beta = p - 1.0 - sp;
    let mesh = ctx.mesh;
    let mut block = Block::default();
    match task {
        Task::Same(i) => {
            let h = mesh.cell(i as usize).len();
            let w = 2.0 * h.powf(beta + 2.0 - p) / ((beta + 1.0) * (beta + 2.0));
            block.idx = [i + 1, i, 0, 0];
            block.len = 2;
            block.points.push(([1.0, -1.0, 0.0, 0.0], w));
        }
        Task::Adjacent(i) => {
            // cells K = [x_{i−1}, x_i], L = [x_i, x_{i+1}]; factor 2 for K×L and L×K
            let hk = mesh.cell(i as usize - 1).len();
            let hl = mesh.cell(i as usize).len();
            let pre = 2.0 * hk * hl / (beta + 2.0);
            block.idx = [i - 1, i, i + 1, 0];
            block.len = 3;
            let q1 = gauss::order_for_separation(1.0, hk / hl, ctx.tol, 8, gauss::MAX_ORDER);
            let r1 = gauss::rule(q1);
            for (sg, om) in r1.nodes.iter().zip(&r1.weights) {
                let w = pre * om * (hk + hl * sg).powf(-1.0 - sp);
                block.points.push(([-1.0, 1.0 - sg, *sg, 0.0], w));
            }
            let q2 = gauss::order_for_separation(1.0, hl / hk, ctx.tol, 8, gauss::MAX_ORDER);
            let r2 = gauss::rule(q2);
            for (ta, om) in r2.nodes.iter().zip(&r2.weights) {
                let w = pre * om * (hk * ta + hl).powf(-1.0 - sp);
                block.points.push(([-ta, ta - 1.0, 1.0, 0.0], w));
            }
        }
        Task::Separated(k, l) => {
            let ck = mesh.cell(k as usize);
            let cl = mesh.cell(l as usize);
            block.idx = [k, k + 1, l, l + 1];
            block.len = 4;
            separated_points(ctx, ck, cl, ck.lo, ck.hi, cl.lo, cl.hi, 0, &mut block.points)?;
        }
        Task::Exterior(m, i) => {
            let e = mesh.exterior_cell(m as usize);
            let xi = e.mid();
            let c = mesh.cell(i as usize);
            block.idx = [ctx.n_nodes as u32 + m, i, i + 1, 0];
            block.len = 3;
            exterior_points(ctx, xi, 2.0 * e.len(), c, c.lo, c.hi, 0, &mut block.points)?;
        }
    }
    let _ = ctx.interior_only;
    Ok(block)
}

#[allow(clippy::too_many_arguments)]
fn separated_points(
    ctx: &Ctx,
    ck: Interval,
    cl: Interval,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    depth: usize,
    out: &mut Vec<([f64; 4], f64)>,
) -> Result<()> {
    let dist = y0 - x1;
    let side = (x1 - x0).max(y1 - y0);
    if side <= dist {
        let q = gauss::order_for_separation(side, dist, ctx.tol, 2, 24);
        let r = gauss::rule(q);
        let expo = -ctx.spec.exponent();
        for (xn, xw) in r.nodes.iter().zip(&r.weights) {
            let x = x0 + (x1 - x0) * xn;
            let xi = (x - ck.lo) / ck.len();
            for (yn, yw) in r.nodes.iter().zip(&r.weights) {
                let y = y0 + (y1 - y0) * yn;
                let eta = (y - cl.lo) / cl.len();
                let w = 2.0 * xw * yw * (x1 - x0) * (y1 - y0) * (y - x).powf(expo);
                out.push(([1.0 - xi, xi, -(1.0 - eta), -eta], w));
            }
        }
        return Ok(());
    }
    if depth > 60 {
        return Err(Error::QuadratureNonConvergence { levels: depth, context: format!("cells {ck:?} and {cl:?}") });
    }
    let split_x = x1 - x0 >= 0.5 * side;
    let split_y = y1 - y0 >= 0.5 * side;
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let xs: &[(f64, f64)] = if split_x { &[(x0, xm), (xm, x1)] } else { &[(x0, x1)] };
    let ys: &[(f64, f64)] = if split_y { &[(y0, ym), (ym, y1)] } else { &[(y0, y1)] };
    for &(a0, a1) in xs {
        for &(b0, b1) in ys {
            separated_points(ctx, ck, cl, a0, a1, b0, b1, depth + 1, out)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn exterior_points(
    ctx: &Ctx,
    xi: f64,
    factor: f64,
    cell: Interval,
    y0: f64,
    y1: f64,
    depth: usize,
    out: &mut Vec<([f64; 4], f64)>,
) -> Result<()> {
    let piece = Interval::new(y0, y1);
    let dist = piece.distance_to(xi);
    let len = y1 - y0;
    if len <= dist {
        let q = gauss::order_for_separation(len, dist, ctx.tol, 2, 24);
        let r = gauss::rule(q);
        let expo = -ctx.spec.exponent();
        for (yn, yw) in r.nodes.iter().zip(&r.weights) {
            let y = y0 + len * yn;
            let eta = (y - cell.lo) / cell.len();
            let w = factor * yw * len * (xi - y).abs().powf(expo);
            out.push(([1.0, -(1.0 - eta), -eta, 0.0], w));
        }
        return Ok(());
    }
    if depth > 60 || dist <= 0.0 {
        return Err(Error::QuadratureNonConvergence {
            levels: depth,
            context: format!("exterior point {xi} against cell {cell:?}"),
        });
    }
    let ym = 0.5 * (y0 + y1);
    exterior_points(ctx, xi, factor, cell, y0, ym, depth + 1, out)?;
    exterior_points(ctx, xi, factor, cell, ym, y1, depth + 1, out)
}

/// Root of c ↦ Σ w_k |c − y_k|^{p−2}(c − y_k), found by safeguarded
/// Newton inside the bracket [min y, max y].
pub fn solve_neumann_scalar(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Argument("need matching nonempty values and weights".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Argument("kernel weights must have positive mass".into()));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-300 {
        return Ok(lo);
    }
    if p == 2.0 {
        return Ok(values.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / total);
    }
    let scale = hi - lo;
    let f = |c: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for (y, w) in values.iter().zip(weights) {
            let d = c - y;
            g += w * signed_pow(d, p - 1.0);
            if d != 0.0 {
                dg += w * (p - 1.0) * d.abs().powf(p - 2.0);
            }
        }
        (g, dg)
    };
    let mut c = values.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / total;
    for _ in 0..200 {
        let (g, dg) = f(c);
        if g == 0.0 {
            return Ok(c);
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let newton = if dg > 0.0 && dg.is_finite() { c - g / dg } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - c).abs() <= 1e-12 * scale || hi - lo <= 1e-12 * scale {
            return Ok(next);
        }
        c = next;
    }
    Err(Error::NonConvergence("Neumann scalar equation".into()))
}

/// Pointwise Neumann value at an exterior point x: the root of
/// ∫_Ω |v − u(y)|^{p−2}(v − u(y)) |x − y|^{−(1+sp)} dy = 0.
pub fn neumann_value_at(
    mesh: &CollarMesh1D,
    spec: &KernelSpec,
    u_interior: &[f64],
    x: f64,
    ctrl: &QuadratureControl,
) -> Result<f64> {
    if mesh.a() <= x && x <= mesh.b() {
        return Err(Error::Argument(format!("{x} is not exterior to Ω")));
    }
    let ctx = Ctx { mesh, spec: *spec, tol: ctrl.rel_tol * 1e-3, n_nodes: mesh.num_nodes(), interior_only: false };
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (i, cell) in mesh.cells().enumerate() {
        let mut pts = Vec::new();
        exterior_points(&ctx, x, 1.0, cell, cell.lo, cell.hi, 0, &mut pts)?;
        for (c, w) in pts {
            values.push(-c[1] * u_interior[i] - c[2] * u_interior[i + 1]);
            weights.push(w);
        }
    }
    solve_neumann_scalar(&values, &weights, spec.p)
}

/// Picone defect L(u,v)(x,y) = |u(x)−u(y)|^p − |v(x)−v(y)|^{p−2}(v(x)−v(y))
/// (u(x)^p/v(x)^{p−1} − u(y)^p/v(y)^{p−1}).
pub fn picone_defect(u: (f64, f64), v: (f64, f64), p: f64) -> Result<f64> {
    if !(v.0 > 0.0 && v.1 > 0.0) {
        return Err(Error::Domain("v must be positive at both points".into()));
    }
    if u.0 < 0.0 || u.1 < 0.0 {
        return Err(Error::Domain("u must be nonnegative".into()));
    }
    let lhs = (u.0 - u.1).abs().powf(p);
    let ratio = |uu: f64, vv: f64| uu.powf(p) / vv.powf(p - 1.0);
    let rhs = signed_pow(v.0 - v.1, p - 1.0) * (ratio(u.0, v.0) - ratio(u.1, v.1));
    Ok(lhs - rhs)
}

/// ∫_0^h |u|^p for u linear from u0 to u1.
pub fn cell_power(u0: f64, u1: f64, h: f64, p: f64) -> f64 {
    let (a0, a1) = (u0.abs(), u1.abs());
    let big = a0.max(a1);
    if big == 0.0 {
        return 0.0;
    }
    if u0 * u1 < 0.0 {
        // split at the sign change
        return h * (a0.powf(p + 1.0) + a1.powf(p + 1.0)) / ((p + 1.0) * (a0 + a1));
    }
    if (a1 - a0).abs() > 1e-3 * big {
        h * (a1.powf(p + 1.0) - a0.powf(p + 1.0)) / ((p + 1.0) * (a1 - a0))
    } else {
        gauss::rule(8).integrate(0.0, h, |x| (u0 + (u1 - u0) * x / h).abs().powf(p))
    }
}

/// (∫_0^h |u|^{p−2}u φ0, ∫_0^h |u|^{p−2}u φ1) for u linear and the two hat
/// functions of the cell.
pub fn cell_power_grad(u0: f64, u1: f64, h: f64, p: f64) -> (f64, f64) {
    let delta = u1 - u0;
    let big = u0.abs().max(u1.abs());
    if big == 0.0 {
        return (0.0, 0.0);
    }
    if delta.abs() > 1e-2 * big {
        let g = |u: f64| u.abs().powf(p) / p;
        let hh = |u: f64| u.abs().powf(p) * u / (p * (p + 1.0));
        let second = (hh(u1) - hh(u0)) / (delta * delta);
        let g0 = -g(u0) / delta + second;
        let g1 = g(u1) / delta - second;
        (h * g0, h * g1)
    } else {
        let r = gauss::rule(8);
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        for (t, w) in r.nodes.iter().zip(&r.weights) {
            let f = signed_pow(u0 + delta * t, p - 1.0);
            g0 += w * f * (1.0 - t);
            g1 += w * f * t;
        }
        (h * g0, h * g1)
    }
}

/// (p−1)∫|u|^{p−2} φ_a φ_b on a cell, with |u| floored at `reg` when p < 2.
pub fn cell_power_hess(u0: f64, u1: f64, h: f64, p: f64, reg: f64) -> [[f64; 2]; 2] {
    let r = gauss::rule(12);
    let mut m = [[0.0; 2]; 2];
    let mut add = |t0: f64, t1: f64| {
        for (t, w) in r.nodes.iter().zip(&r.weights) {
            let tt = t0 + (t1 - t0) * t;
            let u = (u0 + (u1 - u0) * tt).abs();
            let uu = if p < 2.0 { u.max(reg) } else { u };
            let f = (p - 1.0) * uu.powf(p - 2.0) * w * (t1 - t0);
            let phi = [1.0 - tt, tt];
            for a in 0..2 {
                for b in 0..2 {
                    m[a][b] += f * phi[a] * phi[b];
                }
            }
        }
    };
    if u0 * u1 < 0.0 {
        let root = u0 / (u0 - u1);
        add(0.0, root);
        add(root, 1.0);
    } else {
        add(0.0, 1.0);
    }
    for row in &mut m {
        for v in row.iter_mut() {
            *v *= h;
        }
    }
    m
}

fn region_cells(mesh: &CollarMesh1D, region: Region) -> Result<Vec<usize>> {
    match region {
        Region::Interior => Ok((0..mesh.num_cells()).collect()),
        Region::Strip(eps) => Ok(mesh.strip_cells(eps)?.cells),
    }
}

/// ∫_region |u|^p for the P1 function with nodal values `u_interior`. Not
/// divided by ε for strips.
pub fn lp_mass(mesh: &CollarMesh1D, u_interior: &[f64], region: Region, p: f64) -> Result<f64> {
    if u_interior.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: u_interior.len() });
    }
    let cells = region_cells(mesh, region)?;
    Ok(cells.iter().map(|&i| cell_power(u_interior[i], u_interior[i + 1], mesh.cell(i).len(), p)).sum())
}

/// (∫_region |u|^{p−2}u φ_i)_i over interior nodes.
pub fn lp_mass_gradient(mesh: &CollarMesh1D, u_interior: &[f64], region: Region, p: f64) -> Result<Vec<f64>> {
    if u_interior.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: u_interior.len() });
    }
    let mut g = vec![0.0; mesh.num_nodes()];
    for i in region_cells(mesh, region)? {
        let (g0, g1) = cell_power_grad(u_interior[i], u_interior[i + 1], mesh.cell(i).len(), p);
        g[i] += g0;
        g[i + 1] += g1;
    }
    Ok(g)
}

/// Jacobian of [`lp_mass_gradient`].
pub fn lp_mass_hessian(
    mesh: &CollarMesh1D,
    u_interior: &[f64],
    region: Region,
    p: f64,
    reg: f64,
) -> Result<DMatrix<f64>> {
    let n = mesh.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for i in region_cells(mesh, region)? {
        let loc = cell_power_hess(u_interior[i], u_interior[i + 1], mesh.cell(i).len(), p, reg);
        for a in 0..2 {
            for b in 0..2 {
                m[(i + a, i + b)] += loc[a][b];
            }
        }
    }
    Ok(m)
}

/// Consistent P1 mass matrix ∫_region φ_i φ_j.
pub fn mass_matrix(mesh: &CollarMesh1D, region: Region) -> Result<DMatrix<f64>> {
    let n = mesh.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for i in region_cells(mesh, region)? {
        let h = mesh.cell(i).len();
        m[(i, i)] += h / 3.0;
        m[(i + 1, i + 1)] += h / 3.0;
        m[(i, i + 1)] += h / 6.0;
        m[(i + 1, i)] += h / 6.0;
    }
    Ok(m)
}
