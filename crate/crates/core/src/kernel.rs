//! Fractional kernel |x−y|^{−(n+sp)}, its normalization constant, and
//! quadrature of weakly singular double integrals over pairs of 1D cells.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gauss;

const ABS_FLOOR: f64 = 1e-300;
const MAX_BOX_DEPTH: usize = 60;

/// Spatial dimension and exponents of the fractional kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub n: usize,
    pub s: f64,
    pub p: f64,
}

impl KernelSpec {
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain(format!("dimension must be at least 1, got {n}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s must lie in (0,1), got {s}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        Ok(KernelSpec { n, s, p })
    }

    /// Convenience constructor for the one-dimensional problems.
    pub fn one_d(s: f64, p: f64) -> Result<Self> {
        Self::new(1, s, p)
    }

    /// The kernel exponent n + sp.
    pub fn exponent(&self) -> f64 {
        self.n as f64 + self.s * self.p
    }

    /// |r|^{−(n+sp)}.
    pub fn eval(&self, r: f64) -> f64 {
        r.abs().powf(-self.exponent())
    }

    /// The factor K_{n,p}(1−s) multiplying the seminorm in the Rayleigh quotient.
    pub fn seminorm_scale(&self) -> f64 {
        bbm_constant(self.n, self.p).expect("validated spec") * (1.0 - self.s)
    }
}

/// Controls for the singular double-integral quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureControl {
    /// Gauss–Legendre points per direction on each admissible subcell.
    pub order: usize,
    /// Maximum number of geometric grading levels toward a singular point.
    pub grading_levels: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureControl {
    fn default() -> Self {
        QuadratureControl { order: 10, grading_levels: 40, rel_tol: 1e-10 }
    }
}

impl QuadratureControl {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.order > gauss::MAX_ORDER {
            return Err(Error::Argument(format!("Gauss order must be in 2..={}", gauss::MAX_ORDER)));
        }
        if self.grading_levels > 40 {
            return Err(Error::Argument("grading levels are capped at 40".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Argument("relative tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A closed interval [lo, hi] with lo < hi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Distance from a point outside (or on the boundary of) the interval.
    pub fn distance_to(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }
}

/// K_{n,p} = pΓ((n+p)/2) / (2π^{(n−1)/2} Γ((p+1)/2)).
pub fn bbm_constant(n: usize, p: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("dimension must be at least 1, got {n}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    let nf = n as f64;
    let log_k = p.ln() + ln_gamma(0.5 * (nf + p))
        - 2f64.ln()
        - 0.5 * (nf - 1.0) * std::f64::consts::PI.ln()
        - ln_gamma(0.5 * (p + 1.0));
    Ok(log_k.exp())
}

/// Mass of the 1D kernel beyond radius R: 2∫_R^∞ r^{−(1+sp)} dr = 2/(sp R^{sp}).
pub fn kernel_tail_mass(radius: f64, spec: &KernelSpec) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    let sp = spec.s * spec.p;
    Ok(2.0 / (sp * radius.powf(sp)))
}

/// ∬_{A×B} g(x,y)|x−y|^{w} dx dy.
///
/// Identical and touching cell pairs are graded geometrically (ratio 1/2)
/// toward the diagonal or the shared endpoint, and the level sums are
/// accelerated with Wynn's epsilon algorithm. Separated pairs use tensor
/// Gauss rules on subcells whose size never exceeds their distance to the
/// diagonal.
pub fn singular_double_integral<G>(
    cell_a: Interval,
    cell_b: Interval,
    weight_exponent: f64,
    g: G,
    ctrl: &QuadratureControl,
) -> Result<f64>
where
    G: Fn(f64, f64) -> f64,
{
    ctrl.validate()?;
    if !(cell_a.len() > 0.0 && cell_b.len() > 0.0) {
        return Err(Error::Argument("cells must be nondegenerate".into()));
    }
    let f = |x: f64, y: f64| {
        let gv = g(x, y);
        if gv == 0.0 {
            0.0
        } else {
            gv * (x - y).abs().powf(weight_exponent)
        }
    };

    let pieces_a = split_at(cell_a, &[cell_b.lo, cell_b.hi]);
    let pieces_b = split_at(cell_b, &[cell_a.lo, cell_a.hi]);
    let mut total = 0.0;
    for pa in &pieces_a {
        for pb in &pieces_b {
            total += if pa == pb {
                diagonal(*pa, &f, ctrl)?
            } else if pa.hi == pb.lo || pb.hi == pa.lo {
                corner(*pa, *pb, &f, ctrl)?
            } else {
                let gap = (pb.lo - pa.hi).max(pa.lo - pb.hi);
                separated_box(pa.lo, pa.hi, pb.lo, pb.hi, &|_, _, _, _| gap, &f, ctrl, 0)?
            };
        }
    }
    Ok(total)
}

fn split_at(cell: Interval, cuts: &[f64]) -> Vec<Interval> {
    let mut pts = vec![cell.lo, cell.hi];
    pts.extend(cuts.iter().copied().filter(|&c| c > cell.lo && c < cell.hi));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts.windows(2).map(|w| Interval::new(w[0], w[1])).collect()
}

/// Tensor Gauss on boxes that are refined until each is no larger than its
/// separation from the singular set, as reported by `dist`.
#[allow(clippy::too_many_arguments)]
fn separated_box<F, D>(
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    dist: &D,
    f: &F,
    ctrl: &QuadratureControl,
    depth: usize,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    D: Fn(f64, f64, f64, f64) -> f64,
{
    let (hx, hy) = (x1 - x0, y1 - y0);
    let d = dist(x0, x1, y0, y1);
    let side = hx.max(hy);
    if side <= d {
        let q = ctrl.order.max(gauss::order_for_separation(side, d, ctrl.rel_tol * 1e-2, 2, 32));
        return Ok(tensor_gauss(x0, x1, y0, y1, q, f));
    }
    if depth >= MAX_BOX_DEPTH {
        return Err(Error::QuadratureNonConvergence {
            levels: depth,
            context: format!("box subdivision stalled at [{x0},{x1}]x[{y0},{y1}]"),
        });
    }
    let split_x = hx >= 0.5 * side;
    let split_y = hy >= 0.5 * side;
    let xs: Vec<(f64, f64)> = if split_x { vec![(x0, 0.5 * (x0 + x1)), (0.5 * (x0 + x1), x1)] } else { vec![(x0, x1)] };
    let ys: Vec<(f64, f64)> = if split_y { vec![(y0, 0.5 * (y0 + y1)), (0.5 * (y0 + y1), y1)] } else { vec![(y0, y1)] };
    let mut acc = 0.0;
    for &(a0, a1) in &xs {
        for &(b0, b1) in &ys {
            acc += separated_box(a0, a1, b0, b1, dist, f, ctrl, depth + 1)?;
        }
    }
    Ok(acc)
}

fn tensor_gauss<F: Fn(f64, f64) -> f64>(x0: f64, x1: f64, y0: f64, y1: f64, q: usize, f: &F) -> f64 {
    let r = gauss::rule(q);
    let (hx, hy) = (x1 - x0, y1 - y0);
    let mut acc = 0.0;
    for (xi, wi) in r.nodes.iter().zip(&r.weights) {
        let x = x0 + hx * xi;
        let mut row = 0.0;
        for (yj, wj) in r.nodes.iter().zip(&r.weights) {
            row += wj * f(x, y0 + hy * yj);
        }
        acc += wi * row;
    }
    acc * hx * hy
}

/// I×I via z = |x−y|: ∫_0^h dz ∫_0^{h−z} [f(y+z, y) + f(y, y+z)] dy,
/// graded in z toward 0.
fn diagonal<F: Fn(f64, f64) -> f64>(cell: Interval, f: &F, ctrl: &QuadratureControl) -> Result<f64> {
    let (c, h) = (cell.lo, cell.len());
    let rule = gauss::rule(ctrl.order);
    let inner = |z: f64| {
        let len = h - z;
        if len <= 0.0 {
            return 0.0;
        }
        rule.integrate(0.0, len, |y| f(c + y + z, c + y) + f(c + y, c + y + z))
    };
    graded_levels(ctrl, "diagonal cell", |level| {
        let hi = h * 0.5f64.powi(level as i32);
        rule.integrate(0.5 * hi, hi, inner)
    })
}

/// Two cells sharing one endpoint; singular only at the shared corner.
fn corner<F: Fn(f64, f64) -> f64>(pa: Interval, pb: Interval, f: &F, ctrl: &QuadratureControl) -> Result<f64> {
    // t, r measure distance from the shared point into A and B respectively
    let (shared, a_dir, b_dir) = if pa.hi == pb.lo { (pa.hi, -1.0, 1.0) } else { (pa.lo, 1.0, -1.0) };
    let (ha, hb) = (pa.len(), pb.len());
    let g = |t: f64, r: f64| f(shared + a_dir * t, shared + b_dir * r);
    let m = ha.min(hb);
    let l1 = |t0: f64, _t1: f64, r0: f64, _r1: f64| t0 + r0;

    let mut outer = 0.0;
    if ha > m {
        outer += separated_box(m, ha, 0.0, hb, &l1, &g, ctrl, 0)?;
    }
    if hb > m {
        outer += separated_box(0.0, m, m, hb, &l1, &g, ctrl, 0)?;
    }
    let q = ctrl.order;
    let near = graded_levels(ctrl, "touching cells", |level| {
        let d = m * 0.5f64.powi(level as i32);
        let e = 0.5 * d;
        tensor_gauss(e, d, 0.0, e, q, &g) + tensor_gauss(0.0, e, e, d, q, &g) + tensor_gauss(e, d, e, d, q, &g)
    })?;
    Ok(outer + near)
}

/// Sums geometric-level contributions with Wynn-epsilon acceleration of the
/// partial sums until two successive extrapolants agree to the tolerance.
fn graded_levels<T: FnMut(usize) -> f64>(ctrl: &QuadratureControl, context: &str, mut term: T) -> Result<f64> {
    const MIN_LEVELS: usize = 6;
    let mut partial = Vec::with_capacity(ctrl.grading_levels);
    let mut sum = 0.0;
    let mut last_estimate: Option<f64> = None;
    let mut prev_term = f64::INFINITY;
    for level in 0..ctrl.grading_levels {
        let c = term(level);
        let shrinking = c.abs() < prev_term.abs() || c == 0.0;
        prev_term = c;
        sum += c;
        partial.push(sum);
        if level + 1 < MIN_LEVELS {
            continue;
        }
        let n = partial.len();
        if partial[n - 3..].iter().all(|v| v.abs() <= ABS_FLOOR) {
            return Ok(sum);
        }
        let estimate = wynn_epsilon(&partial);
        if let Some(prev) = last_estimate {
            let scale = estimate.abs().max(ABS_FLOOR);
            if shrinking && (estimate - prev).abs() <= ctrl.rel_tol * scale && (sum - estimate).abs() <= 1e3 * scale {
                return Ok(estimate);
            }
        }
        last_estimate = Some(estimate);
    }
    Err(Error::QuadratureNonConvergence { levels: ctrl.grading_levels, context: context.to_string() })
}

/// Highest even-column entry of the epsilon table built from the last
/// (at most 13) partial sums.
fn wynn_epsilon(partial: &[f64]) -> f64 {
    let start = partial.len().saturating_sub(13);
    let s = &partial[start..];
    let n = s.len();
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = *s.last().unwrap();
    let mut column = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let inv = if diff.abs() < 1e-300 * (1.0 + cur[i].abs()) || !diff.is_finite() {
                f64::INFINITY
            } else {
                1.0 / diff
            };
            next.push(prev[i + 1] + inv);
        }
        column += 1;
        if column % 2 == 0 {
            match next.last() {
                Some(v) if v.is_finite() => best = *v,
                _ => break,
            }
        }
        prev = cur;
        cur = next;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bbm_constant_values() {
        assert!((bbm_constant(1, 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert_relative_eq!(bbm_constant(2, 2.0).unwrap(), 2.0 / std::f64::consts::PI, max_relative = 1e-12);
        assert_relative_eq!(bbm_constant(1, 3.0).unwrap(), 1.5, max_relative = 1e-13);
    }

    #[test]
    fn bbm_constant_rejects_bad_input() {
        assert!(matches!(bbm_constant(1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bbm_constant(0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tail_mass_values() {
        let spec = KernelSpec::one_d(0.5, 2.0).unwrap();
        assert_relative_eq!(kernel_tail_mass(1.0, &spec).unwrap(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(kernel_tail_mass(4.0, &spec).unwrap(), 0.5, max_relative = 1e-15);
        let spec = KernelSpec::one_d(0.9, 2.0).unwrap();
        assert_relative_eq!(kernel_tail_mass(1.0, &spec).unwrap(), 2.0 / 1.8, max_relative = 1e-15);
        assert!(kernel_tail_mass(0.0, &spec).is_err());
    }

    #[test]
    fn tail_mass_monotone() {
        let a = KernelSpec::one_d(0.5, 2.0).unwrap();
        let b = KernelSpec::one_d(0.8, 2.0).unwrap();
        for r in [1.5, 2.0, 3.0] {
            assert!(kernel_tail_mass(r, &a).unwrap() > kernel_tail_mass(r + 0.5, &a).unwrap());
            assert!(kernel_tail_mass(r, &a).unwrap() > kernel_tail_mass(r, &b).unwrap());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::new(1, 0.0, 2.0).is_err());
        assert!(KernelSpec::new(1, 0.5, 1.0).is_err());
        assert!(KernelSpec::new(0, 0.5, 2.0).is_err());
        assert!(KernelSpec::new(3, 0.5, 2.0).unwrap().exponent() > 0.0);
    }

    #[test]
    fn diagonal_net_zero_exponent() {
        let ctrl = QuadratureControl::default();
        let unit = Interval::new(0.0, 1.0);
        let v = singular_double_integral(unit, unit, -2.0, |x, y| (x - y) * (x - y), &ctrl).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn separated_cells_log() {
        let ctrl = QuadratureControl::default();
        let v = singular_double_integral(Interval::new(0.0, 1.0), Interval::new(2.0, 3.0), -2.0, |_, _| 1.0, &ctrl)
            .unwrap();
        assert_relative_eq!(v, (4.0f64 / 3.0).ln(), max_relative = 1e-10);
    }

    #[test]
    fn zero_integrand() {
        let ctrl = QuadratureControl::default();
        let unit = Interval::new(0.0, 1.0);
        assert_eq!(singular_double_integral(unit, unit, -1.5, |_, _| 0.0, &ctrl).unwrap(), 0.0);
    }

    #[test]
    fn weakly_singular_diagonal_closed_form() {
        // ∬_{(0,1)^2} |x−y|^β = 2/((β+1)(β+2))
        let ctrl = QuadratureControl::default();
        let unit = Interval::new(0.0, 1.0);
        for beta in [-0.98, -0.8, -0.4, 0.3, 1.0] {
            let v = singular_double_integral(unit, unit, beta, |_, _| 1.0, &ctrl).unwrap();
            let want = 2.0 / ((beta + 1.0) * (beta + 2.0));
            assert_relative_eq!(v, want, max_relative = 1e-8);
        }
    }

    #[test]
    fn touching_cells_closed_form() {
        // ∫_0^1∫_1^2 (y−x)^β dy dx = (2^{β+2} − 2)/((β+1)(β+2))
        let ctrl = QuadratureControl::default();
        for beta in [-0.9, -0.5, 0.5] {
            let v = singular_double_integral(Interval::new(0.0, 1.0), Interval::new(1.0, 2.0), beta, |_, _| 1.0, &ctrl)
                .unwrap();
            let want = (2f64.powf(beta + 2.0) - 2.0) / ((beta + 1.0) * (beta + 2.0));
            assert_relative_eq!(v, want, max_relative = 1e-8);
        }
    }

    #[test]
    fn overlapping_cells_split() {
        let ctrl = QuadratureControl::default();
        let a = Interval::new(0.0, 1.0);
        let b = Interval::new(0.5, 1.5);
        // ∬ 1 over A×B with zero exponent is the area
        let v = singular_double_integral(a, b, 0.0, |_, _| 1.0, &ctrl).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn non_integrable_reports_failure() {
        let ctrl = QuadratureControl::default();
        let unit = Interval::new(0.0, 1.0);
        let r = singular_double_integral(unit, unit, -2.5, |_, _| 1.0, &ctrl);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
