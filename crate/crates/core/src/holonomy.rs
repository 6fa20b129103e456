//! Loop holonomies of connection one-forms, abelian Berry phases, Magnus
//! corrections and the surface-ordered (Schlesinger) form of the holonomy.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{contract, PiError, Result};
use crate::linalg::{expm, eye, r, unitarity_defect, CMat, I};
use crate::path::{PathDiscretization, Point};
use crate::pi_engine::{magnus_terms, ordered_product, GeneratorField};
use crate::spectral_geometry::FieldTensor;

/// Off-diagonal Frobenius mass below which a holonomy is reported as abelian.
pub const ABELIAN_THRESHOLD: f64 = 1e-3;
const UNITARITY_TOL: f64 = 1e-6;

/// A closed loop in parameter space, based at its first sample.
#[derive(Clone, Debug)]
pub struct LoopSpec {
    path: PathDiscretization,
}

impl LoopSpec {
    pub fn new(path: PathDiscretization) -> Result<Self> {
        if !path.is_closed() {
            return contract("loop path must be closed");
        }
        if path.len() < 16 {
            return contract("loop needs at least 16 samples");
        }
        if path.start().as_vector().is_none() {
            return contract("loops live in a real parameter space");
        }
        Ok(Self { path })
    }

    /// Circle of the given radius in the plane spanned by coordinates `i`, `j`
    /// around `center`, counter-clockwise in that plane.
    pub fn circle(center: &[f64], i: usize, j: usize, radius: f64, steps: usize) -> Result<Self> {
        let c = center.to_vec();
        Self::new(PathDiscretization::vector_loop(
            move |s| {
                let mut x = c.clone();
                x[i] += radius * (2.0 * PI * s).cos();
                x[j] += radius * (2.0 * PI * s).sin();
                x
            },
            steps,
        )?)
    }

    /// Latitude circle at polar angle `theta` on the unit sphere in field space,
    /// traversed with increasing azimuth from `phi0`.
    pub fn latitude(theta: f64, phi0: f64, steps: usize) -> Result<Self> {
        Self::new(PathDiscretization::vector_loop(
            move |s| {
                let ph = phi0 + 2.0 * PI * s;
                vec![theta.sin() * ph.cos(), theta.sin() * ph.sin(), theta.cos()]
            },
            steps,
        )?)
    }

    pub fn path(&self) -> &PathDiscretization {
        &self.path
    }

    pub fn base_point(&self) -> &[f64] {
        self.path.start().as_vector().unwrap()
    }

    pub fn reversed(&self) -> Self {
        Self { path: self.path.reversed() }
    }

    pub fn rebased(&self, k: usize) -> Result<Self> {
        Ok(Self { path: self.path.rebased(k)? })
    }

    /// Oriented area bivector `S_ij = ½∮(x_i dx_j − x_j dx_i)`.
    pub fn area_bivector(&self) -> Vec<Vec<f64>> {
        area_bivector(self.path.samples())
    }
}

fn area_bivector(samples: &[Point]) -> Vec<Vec<f64>> {
    let p = samples[0].as_vector().map_or(0, |v| v.len());
    let mut s = vec![vec![0.0; p]; p];
    for w in samples.windows(2) {
        let (a, b) = (w[0].as_vector().unwrap(), w[1].as_vector().unwrap());
        for i in 0..p {
            for j in 0..p {
                s[i][j] += 0.5 * (a[i] * b[j] - a[j] * b[i]);
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HolonomyMethod {
    StrictPi,
    Magnus(usize),
    Schlesinger,
}

#[derive(Clone, Debug)]
pub struct HolonomyResult {
    pub matrix: CMat,
    /// Arguments of the diagonal entries, present only for near-diagonal holonomies.
    pub abelian_phases: Option<Vec<f64>>,
    pub method: HolonomyMethod,
}

impl HolonomyResult {
    fn new(matrix: CMat, method: HolonomyMethod) -> Result<Self> {
        let defect = unitarity_defect(&matrix);
        if !(defect <= UNITARITY_TOL) {
            return contract(format!("holonomy is not unitary (defect {defect:.2e}); is the connection Hermitian?"));
        }
        let offdiag = (&matrix - CMat::from_diagonal(&matrix.diagonal())).norm();
        let abelian_phases =
            (offdiag <= ABELIAN_THRESHOLD).then(|| matrix.diagonal().iter().map(|z| z.arg()).collect());
        Ok(Self { matrix, abelian_phases, method })
    }
}

fn transport_generator(a: &GeneratorField) -> Result<GeneratorField> {
    if a.params() < 1 || a.domain_kind() != crate::pi_engine::DomainKind::MultiparameterPath {
        return contract("holonomies need a connection one-form");
    }
    Ok(a.scale(-I))
}

/// Strict product integral of `−i A·dR` around the loop (`steps` sub-steps per sample interval).
pub fn loop_holonomy(a: &GeneratorField, lp: &LoopSpec, steps: usize) -> Result<HolonomyResult> {
    let w = ordered_product(&transport_generator(a)?, lp.path(), steps)?;
    HolonomyResult::new(w, HolonomyMethod::StrictPi)
}

/// `exp(Σ_{k ≤ order} Ω_k)` for the generator `−i A·Ṙ` along the loop.
pub fn holonomy_magnus(a: &GeneratorField, lp: &LoopSpec, order: usize) -> Result<HolonomyResult> {
    let terms = magnus_terms(&transport_generator(a)?, lp.path(), order)?;
    HolonomyResult::new(expm(&terms.sum()), HolonomyMethod::Magnus(order))
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Abelian Berry phase `−∮ A_ll·dR` of one level, wrapped into (−π, π].
///
/// The line integral uses composite Simpson weights on every sample interval.
pub fn berry_phase(a: &GeneratorField, lp: &LoopSpec, level: usize) -> Result<f64> {
    if level >= a.dim() {
        return contract(format!("level {level} out of range for dimension {}", a.dim()));
    }
    let samples = lp.path().samples();
    let mut total = 0.0;
    for w in samples.windows(2) {
        let mid = w[0].lerp(&w[1], 0.5);
        let f = |p: &Point| -> Result<f64> { Ok(a.density(p, &w[0], &w[1])?[(level, level)].re) };
        total += (f(&w[0])? + 4.0 * f(&mid)? + f(&w[1])?) / 6.0;
    }
    Ok(wrap_phase(-total))
}

/// Smooth map from the rectangle `[ξ₀, ξ₁] × [η₀, η₁]` into parameter space.
#[derive(Clone)]
pub struct SurfaceMap {
    map: Arc<dyn Fn(f64, f64) -> Vec<f64> + Send + Sync>,
    pub xi: (f64, f64),
    pub eta: (f64, f64),
    pub n_xi: usize,
    pub n_eta: usize,
}

impl std::fmt::Debug for SurfaceMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurfaceMap")
            .field("xi", &self.xi)
            .field("eta", &self.eta)
            .field("n_xi", &self.n_xi)
            .field("n_eta", &self.n_eta)
            .finish()
    }
}

impl SurfaceMap {
    pub fn new(
        map: impl Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static,
        xi: (f64, f64),
        eta: (f64, f64),
        n_xi: usize,
        n_eta: usize,
    ) -> Result<Self> {
        if n_xi == 0 || n_eta == 0 || !(xi.1 > xi.0) || !(eta.1 > eta.0) {
            return contract("surface needs a non-empty rectangle and at least one cell per side");
        }
        Ok(Self { map: Arc::new(map), xi, eta, n_xi, n_eta })
    }

    /// The identity embedding of a rectangle in the plane.
    pub fn rectangle(xi: (f64, f64), eta: (f64, f64), n_xi: usize, n_eta: usize) -> Result<Self> {
        Self::new(|x, y| vec![x, y], xi, eta, n_xi, n_eta)
    }

    /// Polar cap of the unit sphere in field space: `ξ` is the polar angle in
    /// `[0, θ]`, `η` the azimuth in `[0, 2π]`. Its boundary runs out along the
    /// `φ = 0` meridian, around the latitude `θ` and back.
    pub fn spherical_cap(theta: f64, n_xi: usize, n_eta: usize) -> Result<Self> {
        Self::new(
            |s, ph| vec![s.sin() * ph.cos(), s.sin() * ph.sin(), s.cos()],
            (0.0, theta),
            (0.0, 2.0 * PI),
            n_xi,
            n_eta,
        )
    }

    pub fn point(&self, xi: f64, eta: f64) -> Vec<f64> {
        (self.map)(xi, eta)
    }

    /// Grid of cell-centre points, indexed `[row η][column ξ]`.
    pub fn grid(&self) -> Vec<Vec<Vec<f64>>> {
        let (dx, dy) = self.cell();
        (0..self.n_eta)
            .map(|j| {
                (0..self.n_xi)
                    .map(|i| self.point(self.xi.0 + (i as f64 + 0.5) * dx, self.eta.0 + (j as f64 + 0.5) * dy))
                    .collect()
            })
            .collect()
    }

    fn cell(&self) -> (f64, f64) {
        (
            (self.xi.1 - self.xi.0) / self.n_xi as f64,
            (self.eta.1 - self.eta.0) / self.n_eta as f64,
        )
    }

    fn tangents(&self, xi: f64, eta: f64) -> (Vec<f64>, Vec<f64>) {
        let hx = 1e-6 * (self.xi.1 - self.xi.0);
        let hy = 1e-6 * (self.eta.1 - self.eta.0);
        let diff = |a: Vec<f64>, b: Vec<f64>, h: f64| a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * h)).collect();
        (
            diff(self.point(xi + hx, eta), self.point(xi - hx, eta), hx),
            diff(self.point(xi, eta + hy), self.point(xi, eta - hy), hy),
        )
    }

    /// Boundary traced counter-clockwise in the rectangle: bottom edge, right
    /// edge, top edge reversed, left edge downwards. Repeated points (where
    /// an edge collapses) are dropped.
    pub fn boundary_loop(&self, steps_per_edge: usize) -> Result<LoopSpec> {
        let n = steps_per_edge.max(4);
        let (x0, x1, y0, y1) = (self.xi.0, self.xi.1, self.eta.0, self.eta.1);
        let lerp = |a: f64, b: f64, k: usize| a + (b - a) * k as f64 / n as f64;
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(4 * n + 1);
        for k in 0..n {
            pts.push(self.point(lerp(x0, x1, k), y0));
        }
        for k in 0..n {
            pts.push(self.point(x1, lerp(y0, y1, k)));
        }
        for k in 0..n {
            pts.push(self.point(lerp(x1, x0, k), y1));
        }
        for k in 0..n {
            pts.push(self.point(x0, lerp(y1, y0, k)));
        }
        let mut trace: Vec<Vec<f64>> = Vec::with_capacity(pts.len() + 1);
        for p in pts {
            let dup = trace
                .last()
                .is_some_and(|q: &Vec<f64>| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
            if !dup {
                trace.push(p);
            }
        }
        while trace.len() > 1 && trace.last().unwrap().iter().zip(&trace[0]).all(|(a, b)| (a - b).abs() < 1e-12) {
            trace.pop();
        }
        trace.push(trace[0].clone());
        LoopSpec::new(PathDiscretization::vector(trace, true)?)
    }
}

/// Callback returning the field tensor at a parameter point.
pub type FieldTensorFn<'a> = &'a dyn Fn(&[f64]) -> Result<FieldTensor>;

/// Surface-ordered holonomy of the surface boundary.
///
/// With `V(ξ, η)` the transport from the corner `(ξ₀, η₀)` up the left edge to
/// height `η` and then along the row to `ξ`, and `F_ξη = Σ_{p<q} F_pq J_pq`
/// the curvature pulled back to the rectangle,
///
/// ```text
/// W = ∏_{rows η, later rows on the left} exp(Δη Σ_{cells ξ in the row} V⁻¹ F_ξη V Δξ)
/// ```
///
/// which equals the product integral of `−i A·dR` around `surface.boundary_loop`.
/// Cells in a row are summed before exponentiating; multiplying per-cell
/// exponentials instead leaves an O(Δη) commutator error per unit area.
/// If `check` is given, its orientation must agree with the surface boundary.
pub fn schlesinger_surface(
    a: &GeneratorField,
    f: FieldTensorFn<'_>,
    surface: &SurfaceMap,
    check: Option<&LoopSpec>,
) -> Result<HolonomyResult> {
    let omega = transport_generator(a)?;
    if let Some(lp) = check {
        let own = surface.boundary_loop(64)?.area_bivector();
        let theirs = lp.area_bivector();
        let dot: f64 = own.iter().flatten().zip(theirs.iter().flatten()).map(|(u, v)| u * v).sum();
        if dot <= 0.0 {
            return contract("surface boundary and loop have opposite orientation");
        }
    }
    let d = a.dim();
    let (dx, dy) = surface.cell();
    let step = |from: Vec<f64>, to: Vec<f64>| -> Result<CMat> {
        Ok(expm(&omega.increment(&Point::Vector(from), &Point::Vector(to))?))
    };
    let mut w = eye(d);
    let mut left = eye(d);
    let mut left_eta = surface.eta.0;
    for j in 0..surface.n_eta {
        let eta = surface.eta.0 + (j as f64 + 0.5) * dy;
        left = step(surface.point(surface.xi.0, left_eta), surface.point(surface.xi.0, eta))? * left;
        left_eta = eta;
        let mut v = left.clone();
        let mut xi_prev = surface.xi.0;
        let mut row = CMat::zeros(d, d);
        for i in 0..surface.n_xi {
            let xi = surface.xi.0 + (i as f64 + 0.5) * dx;
            v = step(surface.point(xi_prev, eta), surface.point(xi, eta))? * v;
            xi_prev = xi;
            let x = surface.point(xi, eta);
            let ft = f(&x)?;
            if ft.params() != x.len() {
                return Err(PiError::DimensionMismatch { expected: x.len(), found: ft.params() });
            }
            let (tx, ty) = surface.tangents(xi, eta);
            let mut pulled = CMat::zeros(d, d);
            for p in 0..x.len() {
                for q in (p + 1)..x.len() {
                    let jac = tx[p] * ty[q] - tx[q] * ty[p];
                    if jac != 0.0 {
                        pulled += ft.get(p, q) * r(jac);
                    }
                }
            }
            row += v.adjoint() * pulled * &v;
        }
        w = expm(&(row * r(dx * dy))) * w;
    }
    HolonomyResult::new(w, HolonomyMethod::Schlesinger)
}

/// A fixed non-abelian 3-level connection on the plane, used as a test bed
/// for the surface formula:
/// `A_x = cos(y) λ₁ + x λ₄`, `A_y = sin(x) λ₂ + x y λ₆ + λ₃/2`
/// with Gell-Mann matrices `λ_k`.
pub fn synthetic_connection() -> GeneratorField {
    let z = r(0.0);
    let one = r(1.0);
    let l1 = CMat::from_row_slice(3, 3, &[z, one, z, one, z, z, z, z, z]);
    let l2 = CMat::from_row_slice(3, 3, &[z, -I, z, I, z, z, z, z, z]);
    let l3 = CMat::from_row_slice(3, 3, &[one, z, z, z, -one, z, z, z, z]);
    let l4 = CMat::from_row_slice(3, 3, &[z, z, one, z, z, z, one, z, z]);
    let l6 = CMat::from_row_slice(3, 3, &[z, z, z, z, z, one, z, one, z]);
    GeneratorField::one_form(3, 2, move |p| {
        let (x, y) = (p[0], p[1]);
        vec![&l1 * r(y.cos()) + &l4 * r(x), &l2 * r(x.sin()) + &l6 * r(x * y) + &l3 * r(0.5)]
    })
}
