//! Gauge-continuous eigenframes of parameter-dependent Hermitian matrices,
//! the matrix-valued gauge potential they induce and its field tensor.
//!
//! Conventions used throughout the crate:
//!
//! * frames hold eigenvectors as columns, `Φ = [|0⟩ |1⟩ …]`, levels ascending;
//! * the gauge potential is `A_m = i Φ† ∂_m Φ`, i.e. `A_jk = i⟨j|∂_m k⟩`;
//! * holonomies are product integrals of `−i A·dR` (later factors on the left),
//!   which transform as `W → U(end) W U(start)†` under
//!   `A → U A U† + i (∂U) U†`;
//! * the curvature that is covariant under that law and enters the surface
//!   formula is `F_mn = −i(∂_m A_n − ∂_n A_m) + [A_m, A_n]`.

use std::sync::Arc;

use crate::error::{contract, PiError, Result};
use crate::linalg::{commutator, hermitian_eigh, hermitian_part, is_finite, norm1, pauli, r, unitarity_defect, CMat, I};
use crate::path::{PathDiscretization, Point};
use crate::pi_engine::GeneratorField;

/// Relative gap tolerance used when callers have no better scale.
pub const DEFAULT_RELATIVE_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Smallest modulus an anchor component may have before the gauge is declared singular.
const ANCHOR_FLOOR: f64 = 1e-6;

type HamFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;

/// `R ↦ H(R)` on a `param_dim`-dimensional real parameter space.
#[derive(Clone)]
pub struct ParameterizedHamiltonian {
    dim: usize,
    param_dim: usize,
    f: HamFn,
}

impl std::fmt::Debug for ParameterizedHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParameterizedHamiltonian")
            .field("dim", &self.dim)
            .field("param_dim", &self.param_dim)
            .finish()
    }
}

impl ParameterizedHamiltonian {
    pub fn new(dim: usize, param_dim: usize, f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> Self {
        Self { dim, param_dim, f: Arc::new(f) }
    }

    /// A Hamiltonian of a single real parameter (usually time).
    pub fn scalar(dim: usize, f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        Self::new(dim, 1, move |x| f(x[0]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// `H(R)`, symmetrized to be exactly Hermitian.
    pub fn eval(&self, x: &[f64]) -> Result<CMat> {
        if x.len() != self.param_dim {
            return Err(PiError::DimensionMismatch { expected: self.param_dim, found: x.len() });
        }
        let h = (self.f)(x);
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(PiError::DimensionMismatch { expected: self.dim, found: h.nrows() });
        }
        if !is_finite(&h) {
            return Err(PiError::NonFinite { at: format!("{x:?}") });
        }
        Ok(hermitian_part(&h))
    }

    pub fn eval_scalar(&self, t: f64) -> Result<CMat> {
        self.eval(&[t])
    }
}

/// Spin-½ in a field of the given magnitude with direction `(θ, φ)`:
/// `H = (|B|/2)(sinθ cosφ σ_x + sinθ sinφ σ_y + cosθ σ_z)`.
pub fn spin_half(magnitude: f64) -> ParameterizedHamiltonian {
    let [sx, sy, sz] = pauli();
    ParameterizedHamiltonian::new(2, 2, move |x| {
        let (th, ph) = (x[0], x[1]);
        (&sx * r(th.sin() * ph.cos()) + &sy * r(th.sin() * ph.sin()) + &sz * r(th.cos())) * r(0.5 * magnitude)
    })
}

/// Spin-½ coupled to a field vector, `H(B) = ½ B·σ`, with `B ∈ ℝ³` as parameters.
pub fn spin_half_field() -> ParameterizedHamiltonian {
    let [sx, sy, sz] = pauli();
    ParameterizedHamiltonian::new(2, 3, move |b| (&sx * r(b[0]) + &sy * r(b[1]) + &sz * r(b[2])) * r(0.5))
}

#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub point: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub frame: CMat,
    pub gap: f64,
}

fn min_gap(values: &[f64]) -> (f64, usize) {
    values
        .windows(2)
        .enumerate()
        .map(|(k, w)| (w[1] - w[0], k))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

fn decompose(h: &CMat, x: &[f64], gap_tol: f64) -> Result<SpectralFrame> {
    let (eigenvalues, frame) = hermitian_eigh(h);
    let (gap, k) = min_gap(&eigenvalues);
    if gap < gap_tol {
        return Err(PiError::NearDegeneracy { lower: k, upper: k + 1, gap, tol: gap_tol });
    }
    Ok(SpectralFrame { point: x.to_vec(), eigenvalues, frame, gap })
}

/// Per column, the index of the largest-modulus component (ties to the lowest index).
pub fn choose_anchors(frame: &CMat) -> Vec<usize> {
    (0..frame.ncols())
        .map(|k| {
            let col = frame.column(k);
            let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            col.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap()
        })
        .collect()
}

/// Rotate each column's phase so its anchor component is real and positive.
pub fn fix_gauge(frame: &mut CMat, anchors: &[usize]) -> Result<()> {
    for (k, &a) in anchors.iter().enumerate() {
        let z = frame[(a, k)];
        if z.norm() < ANCHOR_FLOOR {
            return contract(format!("anchor component {a} of level {k} vanishes; gauge is singular here"));
        }
        let phase = z.conj() / z.norm();
        for v in frame.column_mut(k).iter_mut() {
            *v *= phase;
        }
    }
    Ok(())
}

/// Full eigendecomposition at `R` with each column's largest component made real positive.
pub fn spectral_frame(h: &ParameterizedHamiltonian, x: &[f64], gap_tol: f64) -> Result<SpectralFrame> {
    let mut sf = decompose(&h.eval(x)?, x, gap_tol)?;
    let anchors = choose_anchors(&sf.frame);
    fix_gauge(&mut sf.frame, &anchors)?;
    Ok(sf)
}

/// Eigendecomposition with the gauge fixed by prescribed anchor components.
pub fn spectral_frame_anchored(
    h: &ParameterizedHamiltonian,
    x: &[f64],
    gap_tol: f64,
    anchors: &[usize],
) -> Result<SpectralFrame> {
    let mut sf = decompose(&h.eval(x)?, x, gap_tol)?;
    fix_gauge(&mut sf.frame, anchors)?;
    Ok(sf)
}

fn point_coords(p: &Point) -> Result<Vec<f64>> {
    match p {
        Point::Real(t) => Ok(vec![*t]),
        Point::Vector(v) => Ok(v.clone()),
        Point::Complex(_) => contract("Hermitian families are sampled on real parameters"),
    }
}

/// Frames along a path in the discrete parallel-transport gauge.
///
/// Columns follow the previous frame by maximal overlap; each column's phase
/// makes its overlap with the predecessor real and positive.
pub fn smooth_frames(
    h: &ParameterizedHamiltonian,
    path: &PathDiscretization,
    gap_tol: f64,
) -> Result<Vec<SpectralFrame>> {
    let samples = path.samples();
    let mut frames = vec![spectral_frame(h, &point_coords(&samples[0])?, gap_tol)?];
    for (idx, p) in samples.iter().enumerate().skip(1) {
        let x = point_coords(p)?;
        let raw = decompose(&h.eval(&x)?, &x, gap_tol)?;
        let prev = &frames[idx - 1].frame;
        let overlap = prev.adjoint() * &raw.frame;
        let d = overlap.nrows();
        let mut perm = Vec::with_capacity(d);
        let mut taken = vec![false; d];
        for j in 0..d {
            let (k, best) = (0..d)
                .map(|k| (k, overlap[(j, k)].norm()))
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            if best < 0.5 || taken[k] {
                return Err(PiError::TrackingLost { sample: idx, overlap: best });
            }
            taken[k] = true;
            perm.push(k);
        }
        let mut frame = CMat::zeros(d, d);
        let mut eigenvalues = vec![0.0; d];
        for (j, &k) in perm.iter().enumerate() {
            let o = overlap[(j, k)];
            let phase = o.conj() / o.norm();
            frame.set_column(j, &(raw.frame.column(k) * phase));
            eigenvalues[j] = raw.eigenvalues[k];
        }
        frames.push(SpectralFrame { point: x, eigenvalues, frame, gap: raw.gap });
    }
    Ok(frames)
}

/// Which part of the gauge potential enters a derived quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConnectionPart {
    #[default]
    Full,
    /// Per-level (abelian) potential `diag(A)`.
    Diagonal,
    OffDiagonal,
}

#[derive(Clone, Debug)]
pub struct ConnectionField {
    pub point: Vec<f64>,
    pub a: Vec<CMat>,
    pub split_diag: Vec<CMat>,
    pub split_offdiag: Vec<CMat>,
    /// `A^D_jk = i⟨j|∂H|k⟩/(e_k − e_j)`; absent after a gauge transformation.
    pub dynamical_part: Option<Vec<CMat>>,
}

impl ConnectionField {
    fn from_parts(point: Vec<f64>, a: Vec<CMat>, dynamical_part: Option<Vec<CMat>>) -> Self {
        let split_diag: Vec<CMat> = a.iter().map(diagonal_of).collect();
        let split_offdiag = a.iter().zip(&split_diag).map(|(m, d)| m - d).collect();
        Self { point, a, split_diag, split_offdiag, dynamical_part }
    }

    /// `A^G = A − A^D` in the gauge the connection was computed in.
    pub fn geometric_part(&self) -> Option<Vec<CMat>> {
        let dyn_part = self.dynamical_part.as_ref()?;
        Some(self.a.iter().zip(dyn_part).map(|(a, d)| a - d).collect())
    }

    pub fn part(&self, part: ConnectionPart) -> &[CMat] {
        match part {
            ConnectionPart::Full => &self.a,
            ConnectionPart::Diagonal => &self.split_diag,
            ConnectionPart::OffDiagonal => &self.split_offdiag,
        }
    }
}

fn diagonal_of(m: &CMat) -> CMat {
    CMat::from_diagonal(&m.diagonal())
}

fn shifted(x: &[f64], m: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[m] += h;
    y
}

/// Gauge potential at `R` with the gauge fixed by the given anchors at every stencil point.
pub fn connection_anchored(
    h: &ParameterizedHamiltonian,
    x: &[f64],
    fd_step: f64,
    gap_tol: f64,
    anchors: &[usize],
) -> Result<ConnectionField> {
    if fd_step <= 0.0 || !fd_step.is_finite() {
        return contract("fd_step must be positive");
    }
    let centre = spectral_frame_anchored(h, x, gap_tol, anchors)?;
    let phi_dag = centre.frame.adjoint();
    let e = &centre.eigenvalues;
    let d = h.dim();
    let mut a = Vec::with_capacity(x.len());
    let mut dynamical = Vec::with_capacity(x.len());
    for m in 0..x.len() {
        let plus = spectral_frame_anchored(h, &shifted(x, m, fd_step), gap_tol, anchors)?;
        let minus = spectral_frame_anchored(h, &shifted(x, m, -fd_step), gap_tol, anchors)?;
        let dphi = (plus.frame - minus.frame) * r(0.5 / fd_step);
        a.push(hermitian_part(&(&phi_dag * dphi * I)));

        let dh = (h.eval(&shifted(x, m, fd_step))? - h.eval(&shifted(x, m, -fd_step))?) * r(0.5 / fd_step);
        let proj = &phi_dag * dh * &centre.frame;
        dynamical.push(CMat::from_fn(d, d, |j, k| {
            if j == k {
                Default::default()
            } else {
                proj[(j, k)] * I / (e[k] - e[j])
            }
        }));
    }
    Ok(ConnectionField::from_parts(x.to_vec(), a, Some(dynamical)))
}

/// Gauge potential `A_m = i Φ† ∂_m Φ` at `R` by central differences.
pub fn connection(h: &ParameterizedHamiltonian, x: &[f64], fd_step: f64, gap_tol: f64) -> Result<ConnectionField> {
    let anchors = choose_anchors(&spectral_frame(h, x, gap_tol)?.frame);
    connection_anchored(h, x, fd_step, gap_tol, &anchors)
}

/// The connection of `h` as a one-form field with anchors fixed once (at `base`).
///
/// Evaluation failures (degeneracy, singular gauge) surface as non-finite
/// matrices, which every product integral reports as an error.
pub fn connection_one_form(
    h: &ParameterizedHamiltonian,
    base: &[f64],
    part: ConnectionPart,
    fd_step: f64,
    gap_tol: f64,
) -> Result<GeneratorField> {
    let anchors = choose_anchors(&spectral_frame(h, base, gap_tol)?.frame);
    let h = h.clone();
    let (d, p) = (h.dim(), h.param_dim());
    Ok(GeneratorField::one_form(d, p, move |x| match connection_anchored(&h, x, fd_step, gap_tol, &anchors) {
        Ok(c) => c.part(part).to_vec(),
        Err(_) => vec![CMat::from_element(d, d, r(f64::NAN)); p],
    }))
}

/// `p × p` array of curvature matrices, antisymmetric in the direction pair.
#[derive(Clone, Debug)]
pub struct FieldTensor {
    pub f: Vec<Vec<CMat>>,
}

impl FieldTensor {
    pub fn get(&self, m: usize, n: usize) -> &CMat {
        &self.f[m][n]
    }

    pub fn params(&self) -> usize {
        self.f.len()
    }
}

/// Curvature of an arbitrary one-form field at `R` by central differences.
pub fn curvature(a: &GeneratorField, x: &[f64], fd_step: f64) -> Result<FieldTensor> {
    if fd_step <= 0.0 {
        return contract("fd_step must be positive");
    }
    let p = x.len();
    let d = a.dim();
    let centre = a.eval_form(x)?;
    // derivs[m][n] = ∂_m A_n
    let mut derivs = Vec::with_capacity(p);
    for m in 0..p {
        let plus = a.eval_form(&shifted(x, m, fd_step))?;
        let minus = a.eval_form(&shifted(x, m, -fd_step))?;
        derivs.push(plus.iter().zip(&minus).map(|(u, v)| (u - v) * r(0.5 / fd_step)).collect::<Vec<_>>());
    }
    let mut f = vec![vec![CMat::zeros(d, d); p]; p];
    for m in 0..p {
        for n in (m + 1)..p {
            let fmn = (&derivs[m][n] - &derivs[n][m]) * (-I) + commutator(&centre[m], &centre[n]);
            f[n][m] = -&fmn;
            f[m][n] = fmn;
        }
    }
    Ok(FieldTensor { f })
}

/// Field tensor of the eigenframe connection of `h` at `R`.
pub fn field_tensor(
    h: &ParameterizedHamiltonian,
    x: &[f64],
    fd_step: f64,
    gap_tol: f64,
    part: ConnectionPart,
) -> Result<FieldTensor> {
    // Second differences of a first-difference connection: keep the outer
    // stencil wide enough that cancellation noise stays below the O(h²) bias.
    let outer = fd_step.max(1e-3);
    let a = connection_one_form(h, x, part, fd_step, gap_tol)?;
    curvature(&a, x, outer)
}

fn check_unitary(u: &CMat, at: &[f64]) -> Result<()> {
    let defect = unitarity_defect(u);
    if defect > 1e-10 {
        return contract(format!("gauge matrix at {at:?} is not unitary (defect {defect:.2e})"));
    }
    Ok(())
}

/// `Ã_m = U A_m U† + i (∂_m U) U†` at the connection's point.
pub fn gauge_transform_connection(
    a: &ConnectionField,
    u: impl Fn(&[f64]) -> CMat,
    fd_step: f64,
) -> Result<ConnectionField> {
    if fd_step <= 0.0 {
        return contract("fd_step must be positive");
    }
    let x = &a.point;
    let u0 = u(x);
    check_unitary(&u0, x)?;
    let u0_dag = u0.adjoint();
    let mut out = Vec::with_capacity(a.a.len());
    for (m, am) in a.a.iter().enumerate() {
        let (xp, xm) = (shifted(x, m, fd_step), shifted(x, m, -fd_step));
        let (up, um) = (u(&xp), u(&xm));
        check_unitary(&up, &xp)?;
        check_unitary(&um, &xm)?;
        let du = (up - um) * r(0.5 / fd_step);
        out.push(&u0 * am * &u0_dag + du * &u0_dag * I);
    }
    Ok(ConnectionField::from_parts(x.clone(), out, None))
}

/// The gauge-transformed one-form `R ↦ U A U† + i(∂U)U†`.
pub fn gauge_transform_field(
    a: &GeneratorField,
    u: impl Fn(&[f64]) -> CMat + Send + Sync + 'static,
    fd_step: f64,
) -> GeneratorField {
    let a = a.clone();
    let d = a.dim();
    let u = Arc::new(u);
    let p = a.params();
    GeneratorField::one_form(d, p, move |x| {
        let comps = match a.eval_form(x) {
            Ok(c) => c,
            Err(_) => return vec![CMat::from_element(d, d, r(f64::NAN)); x.len()],
        };
        let u0 = u(x);
        let u0_dag = u0.adjoint();
        comps
            .iter()
            .enumerate()
            .map(|(m, am)| {
                let du = (u(&shifted(x, m, fd_step)) - u(&shifted(x, m, -fd_step))) * r(0.5 / fd_step);
                &u0 * am * &u0_dag + du * &u0_dag * I
            })
            .collect()
    })
}

/// Largest Hermiticity defect among the components of a connection.
pub fn hermiticity_defect(a: &[CMat]) -> f64 {
    a.iter().map(|m| norm1(&(m - m.adjoint()))).fold(0.0, f64::max)
}
