//! Product integrals along complex-time contours.
//!
//! An [`AnalyticFamily`] continues a Hamiltonian `H(τ)` into a strip of the
//! complex plane. Its eigenframes are continued along contours with an
//! analytic normalization, so the effective generator `Ĥ = H_D − εA`
//! (`A = iΦ⁻¹Φ'`) is analytic away from the complex degeneracies, where the
//! levels are exchanged. Loops around a degeneracy are classified by winding
//! number; the leading geometric factor of a class is `exp(−(i/ε)∮Ĥ dz)`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{contract, PiError, Result};
use crate::linalg::{eig_general, expm, eye, hermitian_eigh, inverse_checked, is_finite, r, CMat, I};
use crate::path::{PathDiscretization, Point};
use crate::pi_engine::{ordered_product_gauss, DomainKind, GeneratorField, MAX_CONDITION};
use crate::spectral_geometry::ParameterizedHamiltonian;
use crate::superadiabatic::{evolve_exact, AdiabaticProblem, MAX_STEP_NORM};

/// Largest accepted Cauchy-Riemann residual on the validation stencils.
pub const CR_TOLERANCE: f64 = 1e-6;
/// Newton iteration budget of [`find_degeneracy`].
pub const MAX_NEWTON: usize = 100;
/// Gap accepted after polishing; see [`find_degeneracy`] for the rounding floor.
pub const GAP_TOLERANCE: f64 = 1e-8;
/// Quadrature nodes on each residue circle.
pub const RESIDUE_NODES: usize = 64;

type FamilyFn = Arc<dyn Fn(Complex64) -> CMat + Send + Sync>;

/// A matrix family `z ↦ H(z)` analytic in the strip `lo < Im z < hi`.
#[derive(Clone)]
pub struct AnalyticFamily {
    dim: usize,
    strip: (f64, f64),
    f: FamilyFn,
}

impl std::fmt::Debug for AnalyticFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticFamily").field("dim", &self.dim).field("strip", &self.strip).finish()
    }
}

impl AnalyticFamily {
    /// Wraps `f` after checking the Cauchy-Riemann equations on a few stencils in the strip.
    pub fn new(dim: usize, strip: (f64, f64), f: impl Fn(Complex64) -> CMat + Send + Sync + 'static) -> Result<Self> {
        if dim == 0 {
            return Err(PiError::TooSmall { dim, min: 1 });
        }
        if !(strip.0 < 0.0 && strip.1 > 0.0) {
            return contract("the strip must contain the real axis");
        }
        let fam = Self { dim, strip, f: Arc::new(f) };
        let h = 1e-4;
        let mut ims: Vec<f64> = [-0.5, 0.0, 0.5, 1.5]
            .into_iter()
            .filter(|y| y - 2.0 * h > strip.0 && y + 2.0 * h < strip.1)
            .collect();
        if ims.is_empty() {
            ims.push(0.0);
        }
        for &y in &ims {
            for x in [-1.3, 0.2, 0.9] {
                let z = Complex64::new(x, y);
                let res = fam.cauchy_riemann_residual(z, h)?;
                if res > CR_TOLERANCE {
                    return contract(format!("family is not analytic at {z}: Cauchy-Riemann residual {res:e}"));
                }
            }
        }
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strip(&self) -> (f64, f64) {
        self.strip
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.im > self.strip.0 && z.im < self.strip.1
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        if !self.contains(z) {
            return contract(format!("{z} lies outside the analyticity strip"));
        }
        let m = (self.f)(z);
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(PiError::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        if !is_finite(&m) {
            return Err(PiError::NonFinite { at: format!("z = {z}") });
        }
        Ok(m)
    }

    /// `‖∂_y H − i ∂_x H‖ / (1 + ‖∂_x H‖)` from central differences of width `h`.
    pub fn cauchy_riemann_residual(&self, z: Complex64, h: f64) -> Result<f64> {
        let dx = (self.eval(z + h)? - self.eval(z - h)?) * r(0.5 / h);
        let dy = (self.eval(z + I * h)? - self.eval(z - I * h)?) * r(0.5 / h);
        Ok((&dy - &dx * I).norm() / (1.0 + dx.norm()))
    }

    /// The restriction to the real axis as a Hermitian-checked parameterized Hamiltonian.
    pub fn on_real_axis(&self) -> ParameterizedHamiltonian {
        let f = self.f.clone();
        ParameterizedHamiltonian::scalar(self.dim, move |t| f(Complex64::new(t, 0.0)))
    }

    fn lab_generator(&self, epsilon: f64) -> GeneratorField {
        let fam = self.clone();
        let d = self.dim;
        GeneratorField::complex(d, move |z| match fam.eval(z) {
            Ok(m) => m * Complex64::new(0.0, -1.0 / epsilon),
            Err(_) => CMat::from_element(d, d, r(f64::NAN)),
        })
    }
}

/// `H(z) = ½(z σ_z + Δ σ_x)`, entire.
pub fn landau_zener(delta: f64) -> AnalyticFamily {
    AnalyticFamily::new(2, (f64::NEG_INFINITY, f64::INFINITY), move |z| {
        CMat::from_row_slice(2, 2, &[z * 0.5, r(0.5 * delta), r(0.5 * delta), -z * 0.5])
    })
    .expect("polynomial family is analytic")
}

/// A complex point where two levels coincide, with its mirror image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegeneratePoint {
    pub z0: Complex64,
    pub pair_conjugate: Complex64,
    pub levels: (usize, usize),
    /// `|E_1 − E_0|` at the polished root.
    pub gap: f64,
}

impl DegeneratePoint {
    pub fn points(&self) -> [Complex64; 2] {
        [self.z0, self.pair_conjugate]
    }
}

fn discriminant(h: &CMat) -> Complex64 {
    let d = h[(0, 0)] - h[(1, 1)];
    d * d + h[(0, 1)] * h[(1, 0)] * 4.0
}

/// Newton iteration on the 2×2 discriminant `(a − d)² + 4bc` from `seed`.
///
/// The root is accepted once the Newton step reaches rounding level. Since the
/// gap is the square root of the discriminant, a root that is not exactly
/// representable leaves a gap of about `√(|D'|·ulp(z0))`; the acceptance test
/// is `gap ≤ max(1e-8, 2√(|D'|·ulp))`.
pub fn find_degeneracy(family: &AnalyticFamily, seed: Complex64) -> Result<DegeneratePoint> {
    if family.dim() != 2 {
        return contract("find_degeneracy supports 2×2 families");
    }
    let disc = |z: Complex64| family.eval(z).map(|h| discriminant(&h));
    let deriv = |z: Complex64| -> Result<Complex64> {
        let h = 1e-6 * z.norm().max(1.0);
        Ok((disc(z + h)? - disc(z - h)?) / (2.0 * h))
    };
    let mut z = seed;
    let mut converged = false;
    for _ in 0..MAX_NEWTON {
        let d = match disc(z) {
            Ok(d) => d,
            Err(_) => break,
        };
        if d == Complex64::new(0.0, 0.0) {
            converged = true;
            break;
        }
        let dp = match deriv(z) {
            Ok(dp) if dp.norm() > 0.0 && dp.is_finite() => dp,
            _ => break,
        };
        let step = d / dp;
        z -= step;
        if !z.is_finite() {
            break;
        }
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PiError::NotFound(format!("Newton from {seed} did not converge in {MAX_NEWTON} iterations")));
    }
    if !family.contains(z) {
        return Err(PiError::NotFound(format!("root {z} lies outside the strip")));
    }
    let gap = disc(z)?.norm().sqrt();
    let floor = 2.0 * (deriv(z)?.norm() * f64::EPSILON * z.norm().max(1.0)).sqrt();
    if gap > GAP_TOLERANCE.max(floor) {
        return Err(PiError::NotConverged(format!("gap {gap:e} at {z} after polishing")));
    }
    Ok(DegeneratePoint { z0: z, pair_conjugate: z.conj(), levels: (0, 1), gap })
}

/// How `Ĥ` is obtained.
#[derive(Clone, Debug)]
pub enum HatSource {
    /// `Ĥ(z)` given directly as a complex-parameter field.
    Explicit(GeneratorField),
    /// `Ĥ = H_D − εA` from eigenframes of the family continued along each contour.
    Adiabatic(AnalyticFamily),
}

/// The effective generator `Ĥ(z) = H_D(z) − εA(z)` together with the
/// singular points contours have to keep clear of.
#[derive(Clone, Debug)]
pub struct EffectiveGenerator {
    pub source: HatSource,
    pub epsilon: f64,
    singular_points: Vec<Complex64>,
    clearance: f64,
}

impl EffectiveGenerator {
    pub fn explicit(h_hat: GeneratorField, epsilon: f64) -> Result<Self> {
        if h_hat.domain_kind() != DomainKind::ComplexContour {
            return contract("an explicit effective generator must be a complex-parameter field");
        }
        Self::with_source(HatSource::Explicit(h_hat), epsilon)
    }

    pub fn adiabatic(family: AnalyticFamily, epsilon: f64) -> Result<Self> {
        Self::with_source(HatSource::Adiabatic(family), epsilon)
    }

    fn with_source(source: HatSource, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return contract("epsilon must be positive");
        }
        Ok(Self { source, epsilon, singular_points: Vec::new(), clearance: 0.0 })
    }

    /// Declares points that contours must stay `clearance` away from.
    pub fn avoiding(mut self, points: &[Complex64], clearance: f64) -> Self {
        self.singular_points.extend_from_slice(points);
        self.clearance = clearance;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            HatSource::Explicit(g) => g.dim(),
            HatSource::Adiabatic(f) => f.dim(),
        }
    }

    pub fn singular_points(&self) -> &[Complex64] {
        &self.singular_points
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    /// `Ĥ` at every sample of `contour`; adiabatic frames are continued from the first sample.
    pub fn hat_along(&self, contour: &PathDiscretization) -> Result<Vec<CMat>> {
        let zs = complex_samples(contour)?;
        match &self.source {
            HatSource::Explicit(g) => zs.iter().map(|&z| g.eval(&Point::Complex(z))).collect(),
            HatSource::Adiabatic(fam) => {
                let mut tr = Tracker::start(fam, zs[0])?;
                let mut out = Vec::with_capacity(zs.len());
                for (k, &z) in zs.iter().enumerate() {
                    if k > 0 {
                        tr.advance(z, k)?;
                    }
                    out.push(tr.hat(self.epsilon, k)?);
                }
                Ok(out)
            }
        }
    }
}

fn complex_samples(contour: &PathDiscretization) -> Result<Vec<Complex64>> {
    contour
        .samples()
        .iter()
        .map(|p| p.as_complex().ok_or_else(|| PiError::Contract("contour samples must be real or complex".into())))
        .collect()
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a) * ab.conj()).re / len2;
    (p - (a + ab * s.clamp(0.0, 1.0))).norm()
}

/// Eigenframes continued along a sequence of points.
///
/// Column `j` is `P_j e_a / √((P_j)_aa)` with `P_j` the spectral projector and
/// `a` an anchor row fixed at the start; the square-root branch follows by
/// continuity. On the real axis of a Hermitian family this is the unit
/// eigenvector with a real positive anchor component, and along any path it
/// is analytic, so `Φ⁻¹` has the rows `e_aᵀ P_j / √((P_j)_aa)`.
struct Tracker<'a> {
    family: &'a AnalyticFamily,
    z: Complex64,
    anchors: Vec<usize>,
    values: Vec<Complex64>,
    roots: Vec<Complex64>,
    frame: CMat,
    inv: CMat,
}

struct FrameAt {
    values: Vec<Complex64>,
    roots: Vec<Complex64>,
    frame: CMat,
    inv: CMat,
}

impl<'a> Tracker<'a> {
    fn start(family: &'a AnalyticFamily, z: Complex64) -> Result<Self> {
        let (vals, v) = eig_general(&family.eval(z)?);
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| vals[i].re.total_cmp(&vals[j].re).then(vals[i].im.total_cmp(&vals[j].im)));
        let anchors: Vec<usize> = order
            .iter()
            .map(|&m| (0..v.nrows()).fold(0, |best, a| if v[(a, m)].norm() > v[(best, m)].norm() * (1.0 + 1e-12) { a } else { best }))
            .collect();
        let vinv = inverse_checked(&v, MAX_CONDITION)?;
        let roots: Vec<Complex64> = order.iter().zip(&anchors).map(|(&m, &a)| (v[(a, m)] * vinv[(m, a)]).sqrt()).collect();
        let mut tr = Self {
            family,
            z,
            anchors,
            values: order.iter().map(|&m| vals[m]).collect(),
            roots,
            frame: CMat::zeros(0, 0),
            inv: CMat::zeros(0, 0),
        };
        let at = tr.continue_to(z, 0)?;
        tr.frame = at.frame;
        tr.inv = at.inv;
        Ok(tr)
    }

    /// The frame at `z`, continued from the current point without moving.
    fn continue_to(&self, z: Complex64, sample: usize) -> Result<FrameAt> {
        let (vals, v) = eig_general(&self.family.eval(z)?);
        let vinv = inverse_checked(&v, MAX_CONDITION)?;
        let n = vals.len();
        let sep = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| (self.values[i] - self.values[j]).norm())
            .fold(f64::INFINITY, f64::min);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for (j, old) in self.values.iter().enumerate() {
            for (m, new) in vals.iter().enumerate() {
                pairs.push(((old - new).norm(), j, m));
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut slot = vec![usize::MAX; n];
        let mut used = vec![false; n];
        for (dist, j, m) in pairs {
            if slot[j] == usize::MAX && !used[m] {
                if dist > 0.5 * sep {
                    return Err(PiError::TrackingLost { sample, overlap: dist / sep });
                }
                slot[j] = m;
                used[m] = true;
            }
        }
        let mut frame = CMat::zeros(n, n);
        let mut inv = CMat::zeros(n, n);
        let mut roots = Vec::with_capacity(n);
        for j in 0..n {
            let (m, a) = (slot[j], self.anchors[j]);
            let p = v[(a, m)] * vinv[(m, a)];
            if p.norm() < 1e-10 {
                return Err(PiError::TrackingLost { sample, overlap: p.norm() });
            }
            let mut s = p.sqrt();
            if (s - self.roots[j]).norm() > (s + self.roots[j]).norm() {
                s = -s;
            }
            frame.set_column(j, &(v.column(m) * (vinv[(m, a)] / s)));
            inv.set_row(j, &(vinv.row(m) * (v[(a, m)] / s)));
            roots.push(s);
        }
        Ok(FrameAt { values: slot.iter().map(|&m| vals[m]).collect(), roots, frame, inv })
    }

    fn advance(&mut self, z: Complex64, sample: usize) -> Result<()> {
        let at = self.continue_to(z, sample)?;
        self.z = z;
        self.values = at.values;
        self.roots = at.roots;
        self.frame = at.frame;
        self.inv = at.inv;
        Ok(())
    }

    /// `Ĥ = H_D − εA` at the current point, `Φ'` by a central difference.
    fn hat(&self, epsilon: f64, sample: usize) -> Result<CMat> {
        let h = 1e-5 * self.z.norm().max(1.0);
        let fwd = self.continue_to(self.z + h, sample)?.frame;
        let bwd = self.continue_to(self.z - h, sample)?.frame;
        let dphi = (fwd - bwd) * r(0.5 / h);
        let a = &self.inv * dphi * I;
        Ok(CMat::from_diagonal(&nalgebra::DVector::from_vec(self.values.clone())) - a * r(epsilon))
    }
}

/// Strict product integral of `−(i/ε)Ĥ` along a complex contour.
///
/// Each path segment is split into `steps` fourth-order Gauss-Magnus factors.
/// For an adiabatic generator the product is evaluated in the lab frame and
/// transformed, `Φ(end)⁻¹ · PI[−(i/ε)H] · Φ(start)`, with the frames
/// continued along the refined contour.
pub fn contour_pi(gen: &EffectiveGenerator, contour: &PathDiscretization, steps: usize) -> Result<CMat> {
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    let fine = contour.refined(steps);
    let zs = complex_samples(&fine)?;
    for w in zs.windows(2) {
        for &p in &gen.singular_points {
            let d = segment_distance(p, w[0], w[1]);
            if d < gen.clearance {
                return Err(PiError::Proximity { distance: d, clearance: gen.clearance });
            }
        }
    }
    let eps = gen.epsilon;
    let lab = match &gen.source {
        HatSource::Explicit(g) => g.scale(Complex64::new(0.0, -1.0 / eps)),
        HatSource::Adiabatic(fam) => fam.lab_generator(eps),
    };
    for w in zs.windows(2) {
        let mid = Point::Complex((w[0] + w[1]) * 0.5);
        let step_norm = lab.eval(&mid)?.norm() * (w[1] - w[0]).norm();
        if step_norm > MAX_STEP_NORM {
            return Err(PiError::Resolution { step_norm, limit: MAX_STEP_NORM });
        }
    }
    let u = ordered_product_gauss(&lab, &fine, 1)?;
    match &gen.source {
        HatSource::Explicit(_) => Ok(u),
        HatSource::Adiabatic(fam) => {
            let mut tr = Tracker::start(fam, zs[0])?;
            let start = tr.frame.clone();
            for (k, &z) in zs.iter().enumerate().skip(1) {
                tr.advance(z, k)?;
            }
            Ok(&tr.inv * u * start)
        }
    }
}

fn check_enclosed(gen: &EffectiveGenerator, z0: &DegeneratePoint, center: Complex64, radius: f64) -> Result<()> {
    let mut others: Vec<Complex64> = gen.singular_points.iter().copied().filter(|p| (p - z0.z0).norm() > 1e-12).collect();
    if z0.pair_conjugate != z0.z0 {
        others.push(z0.pair_conjugate);
    }
    for p in others {
        if (p - center).norm() < radius {
            return contract(format!("singular point {p} lies inside the loop"));
        }
    }
    Ok(())
}

/// Strict PI around the circle of `radius` about `z0`, traversed `n` times
/// (clockwise for negative `n`) from the base point `z0 − i·radius`.
pub fn winding_loop_pi(
    gen: &EffectiveGenerator,
    z0: &DegeneratePoint,
    n: i32,
    radius: f64,
    steps_per_turn: usize,
) -> Result<CMat> {
    if n == 0 {
        return Ok(eye(gen.dim()));
    }
    check_enclosed(gen, z0, z0.z0, radius)?;
    let circle = PathDiscretization::circle(z0.z0, radius, -PI / 2.0, n, steps_per_turn)?;
    contour_pi(gen, &circle, 1)
}

/// `(1/2πi)∮Ĥ dz` with [`RESIDUE_NODES`] trapezoid nodes on the circle of `radius` about `z0`.
pub fn residue_at_radius(h_hat: &GeneratorField, z0: Complex64, radius: f64) -> Result<CMat> {
    let mut acc = CMat::zeros(h_hat.dim(), h_hat.dim());
    for k in 0..RESIDUE_NODES {
        let dz = Complex64::from_polar(radius, TAU * k as f64 / RESIDUE_NODES as f64);
        acc += h_hat.eval(&Point::Complex(z0 + dz))? * dz;
    }
    Ok(acc * r(1.0 / RESIDUE_NODES as f64))
}

/// The residue operator of `Ĥ` at `z0`.
///
/// For an explicit generator, small-circle quadrature with the radius halved
/// until two successive values agree to 1e-10. For an adiabatic generator
/// the levels are exchanged around `z0`, so there is no pole; the generalized
/// residue `(1/2πi)∮Ĥ dz` is taken once around the circle through the real
/// axis (centre `z0`, radius `|Im z0|`), starting at `Re z0`.
pub fn residue(gen: &EffectiveGenerator, z0: &DegeneratePoint) -> Result<CMat> {
    match &gen.source {
        HatSource::Explicit(g) => explicit_residue(gen, g, z0),
        HatSource::Adiabatic(fam) => Ok(loop_integral(gen, fam, z0, 1)? * (1.0 / (TAU * I))),
    }
}

fn explicit_residue(gen: &EffectiveGenerator, g: &GeneratorField, z0: &DegeneratePoint) -> Result<CMat> {
    let mut nearest = gen
        .singular_points
        .iter()
        .map(|p| (p - z0.z0).norm())
        .filter(|&d| d > 1e-12)
        .fold(f64::INFINITY, f64::min);
    if z0.z0.im != 0.0 {
        nearest = nearest.min(2.0 * z0.z0.im.abs());
    }
    let mut radius = if nearest.is_finite() { 0.25 * nearest } else { 0.25 };
    let mut prev = residue_at_radius(g, z0.z0, radius)?;
    for _ in 0..20 {
        radius *= 0.5;
        let next = residue_at_radius(g, z0.z0, radius)?;
        if (&next - &prev).norm() <= 1e-10 * next.norm().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(PiError::NotConverged(format!("residue at {} unstable under radius halving", z0.z0)))
}

/// `∮Ĥ dz` over `n` turns of the real-axis-based circle, by trapezoid sums on
/// `N` and `2N` nodes per turn combined by Richardson extrapolation; `N` is
/// doubled until two extrapolants agree to 1e-9.
fn loop_integral(gen: &EffectiveGenerator, fam: &AnalyticFamily, z0: &DegeneratePoint, n: i32) -> Result<CMat> {
    let radius = z0.z0.im.abs();
    if radius == 0.0 {
        return contract("the degenerate point lies on the real axis");
    }
    check_enclosed(gen, z0, z0.z0, radius * (1.0 - 1e-12))?;
    let start = if z0.z0.im > 0.0 { -PI / 2.0 } else { PI / 2.0 };
    let trapezoid = |per_turn: usize| -> Result<CMat> {
        let circle = PathDiscretization::circle(z0.z0, radius, start, n, per_turn)?;
        let zs = complex_samples(&circle)?;
        let hats = EffectiveGenerator { source: HatSource::Adiabatic(fam.clone()), ..gen.clone() }.hat_along(&circle)?;
        let mut acc = CMat::zeros(fam.dim(), fam.dim());
        for k in 0..zs.len() - 1 {
            acc += (&hats[k] + &hats[k + 1]) * ((zs[k + 1] - zs[k]) * 0.5);
        }
        Ok(acc)
    };
    let mut per_turn = 64;
    let mut coarse = trapezoid(per_turn)?;
    let mut fine = trapezoid(2 * per_turn)?;
    let mut prev = (&fine * r(4.0) - &coarse) * r(1.0 / 3.0);
    while per_turn < 1 << 14 {
        per_turn *= 2;
        coarse = fine;
        fine = trapezoid(2 * per_turn)?;
        let next = (&fine * r(4.0) - &coarse) * r(1.0 / 3.0);
        if (&next - &prev).norm() <= 1e-9 * next.norm().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(PiError::NotConverged(format!("loop integral around {} not stable at {per_turn} nodes per turn", z0.z0)))
}

/// Leading geometric factor of the winding class `n`: `exp(−(i/ε)∮Ĥ dz)`,
/// i.e. `exp((2πn/ε)·Res)` for a simple pole.
pub fn residue_factor(gen: &EffectiveGenerator, z0: &DegeneratePoint, n: i32) -> Result<CMat> {
    if n == 0 {
        return Ok(eye(gen.dim()));
    }
    let integral = match &gen.source {
        HatSource::Explicit(g) => explicit_residue(gen, g, z0)? * (TAU * I * n as f64),
        HatSource::Adiabatic(fam) => loop_integral(gen, fam, z0, n)?,
    };
    let out = expm(&(integral * Complex64::new(0.0, -1.0 / gen.epsilon)));
    if !is_finite(&out) {
        return Err(PiError::NonFinite { at: "residue factor".into() });
    }
    Ok(out)
}

/// Per-step generator norm used by [`lz_transition`].
pub const LZ_STEP_NORM: f64 = 0.05;
/// Step budget for [`lz_transition`]; smaller ε is refused rather than run.
pub const MAX_LZ_STEPS: usize = 20_000_000;

/// Population of the upper adiabatic level after sweeping `H = ½(τσ_z + Δσ_x)`
/// over `span` from the lower adiabatic state, by [`evolve_exact`].
pub fn lz_transition(epsilon: f64, delta: f64, span: (f64, f64)) -> Result<f64> {
    let (t0, t1) = span;
    if !(t0 <= -10.0 * delta.abs() && t1 >= 10.0 * delta.abs() && t0 < 0.0 && t1 > 0.0) {
        return contract("span must cross zero with |τ| ≥ 10Δ at both ends");
    }
    let h = landau_zener(delta).on_real_axis();
    let problem = AdiabaticProblem::in_level(h.clone(), epsilon, span, 0)?;
    let radius = 0.5 * (t0.abs().max(t1.abs()).powi(2) + delta * delta).sqrt();
    let steps = (radius * (t1 - t0) / (epsilon * LZ_STEP_NORM)).ceil();
    if !(steps <= MAX_LZ_STEPS as f64) {
        let step_norm = radius * (t1 - t0) / (epsilon * MAX_LZ_STEPS as f64);
        return Err(PiError::Resolution { step_norm, limit: LZ_STEP_NORM });
    }
    let steps = steps as usize;
    let psi = evolve_exact(&problem, steps)?;
    let (_, v) = hermitian_eigh(&h.eval_scalar(t1)?);
    Ok((v.column(1).adjoint() * psi)[(0, 0)].norm_sqr())
}
