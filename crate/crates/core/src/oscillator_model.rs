//! A heavy coordinate `X` coupled to a harmonic oscillator of frequency
//! `ω(X)`, in a truncated number-state basis.
//!
//! With real oscillator eigenfunctions the connection is purely off-diagonal,
//! `A(X) = i(ω'/4ω)(a² − a†²)`, and together with `H̄_D = ω N1` it lives in
//! the so(2,1) algebra spanned by `N1`, `N2/2`, `N3/2`. The module provides
//! the two-component (`ψ`, covariant `∂ψ`) evolution of the heavy-particle
//! equation and its variation-of-parameters form, and the ingredients of the
//! effective action along a prescribed trajectory `X(t)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{contract, PiError, Result};
use crate::linalg::{commutator, diag, eye, norm1, r, CMat, CVec, I};
use crate::path::PathDiscretization;
use crate::pi_engine::{ordered_product_gauss, GeneratorField};

/// Smallest supported truncation.
pub const MIN_DIM: usize = 6;
/// Default truncation.
pub const DEFAULT_DIM: usize = 40;
/// Highest modes excluded from interior-block comparisons.
pub const QUARANTINE: usize = 4;
/// Per-step bound on `‖G‖₁·ΔX` for the block generator.
pub const MAX_BLOCK_STEP: f64 = 0.5;

/// Ladder and so(2,1) matrices in the first `dim` number states.
#[derive(Clone, Debug, PartialEq)]
pub struct FockTruncation {
    pub dim: usize,
    pub a: CMat,
    pub a_dagger: CMat,
    pub n1: CMat,
    pub n2: CMat,
    pub n3: CMat,
    pub n4: CMat,
    pub n5: CMat,
}

impl FockTruncation {
    /// Top-left block without the `k` highest modes.
    pub fn interior(&self, m: &CMat, k: usize) -> CMat {
        let n = self.dim.saturating_sub(k);
        m.view((0, 0), (n, n)).into_owned()
    }

    /// `[N1, N2/2] − N3`, `[N2/2, N3/2] − 2N1` and `[N3/2, N1] + N2`.
    pub fn commutator_defects(&self) -> [CMat; 3] {
        let (h2, h3) = (&self.n2 * r(0.5), &self.n3 * r(0.5));
        [
            commutator(&self.n1, &h2) - &self.n3,
            commutator(&h2, &h3) - &self.n1 * r(2.0),
            commutator(&h3, &self.n1) + &self.n2,
        ]
    }
}

pub fn build_truncation(d: usize) -> Result<FockTruncation> {
    if d < MIN_DIM {
        return Err(PiError::TooSmall { dim: d, min: MIN_DIM });
    }
    let mut a = CMat::zeros(d, d);
    for j in 1..d {
        a[(j - 1, j)] = r((j as f64).sqrt());
    }
    let ad = a.adjoint();
    let (a2, ad2) = (&a * &a, &ad * &ad);
    let t = FockTruncation {
        dim: d,
        n1: &ad * &a + eye(d) * r(0.5),
        n2: &ad2 + &a2,
        n3: &ad2 - &a2,
        n4: &ad2 * &a2 + &a2 * &ad2,
        n5: &ad2 * &a2 - &a2 * &ad2,
        a,
        a_dagger: ad,
    };
    for (k, defect) in t.commutator_defects().iter().enumerate() {
        let inner = t.interior(defect, 2).norm();
        if inner > 1e-9 {
            return contract(format!("commutator {k} broken on the interior block: {inner:e}"));
        }
    }
    Ok(t)
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Model parameters: heavy mass, heavy potential, frequency and its derivative,
/// trial energy and the truncation.
#[derive(Clone)]
pub struct OscillatorConfig {
    pub mass: f64,
    pub energy: f64,
    pub truncation: FockTruncation,
    potential: ScalarFn,
    omega: ScalarFn,
    domega: ScalarFn,
}

impl std::fmt::Debug for OscillatorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OscillatorConfig")
            .field("mass", &self.mass)
            .field("energy", &self.energy)
            .field("dim", &self.truncation.dim)
            .finish()
    }
}

impl OscillatorConfig {
    /// `V_I ≡ 0`; set a potential with [`OscillatorConfig::with_potential`].
    pub fn new(
        mass: f64,
        energy: f64,
        truncation: FockTruncation,
        omega: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domega: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return contract("mass must be positive");
        }
        Ok(Self { mass, energy, truncation, potential: Arc::new(|_| 0.0), omega: Arc::new(omega), domega: Arc::new(domega) })
    }

    pub fn with_potential(mut self, v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Arc::new(v);
        self
    }

    pub fn dim(&self) -> usize {
        self.truncation.dim
    }

    pub fn potential(&self, x: f64) -> f64 {
        (self.potential)(x)
    }

    pub fn omega(&self, x: f64) -> Result<f64> {
        let w = (self.omega)(x);
        if !(w > 0.0 && w.is_finite()) {
            return contract(format!("frequency {w} at X = {x} is not positive"));
        }
        Ok(w)
    }

    pub fn domega(&self, x: f64) -> f64 {
        (self.domega)(x)
    }

    /// `ω'/(4ω)`.
    fn rate(&self, x: f64) -> Result<f64> {
        Ok(self.domega(x) / (4.0 * self.omega(x)?))
    }

    /// `H̄_{II,D}(X) = ω(X) N1`.
    pub fn diagonal_energy(&self, x: f64) -> Result<CMat> {
        Ok(&self.truncation.n1 * r(self.omega(x)?))
    }
}

/// `A(X) = i(ω'/4ω)(a² − a†²) = −i(ω'/4ω) N3`.
pub fn gauge_potential_osc(config: &OscillatorConfig, x: f64) -> Result<CMat> {
    Ok(&config.truncation.n3 * Complex64::new(0.0, -config.rate(x)?))
}

/// `iA*(X) = −(ω'/4ω) N3`, real.
fn i_a_conj(config: &OscillatorConfig, x: f64) -> Result<CMat> {
    Ok(&config.truncation.n3 * r(-config.rate(x)?))
}

/// The diabatic term and the two readings of its closed form.
#[derive(Clone, Debug)]
pub struct DiabaticTerm {
    /// `W⁻¹ H̄_D(X) W` with `W` the product integral of `iA* dX` from `X0`.
    pub numeric: CMat,
    /// `ω[cosh L N1 − ½ sinh L N2]` with `L = ln(ω(X)/ω(X0))`.
    pub accumulated: CMat,
    /// The same with the pointwise argument `L = ω'(X)/ω(X)`.
    pub pointwise: CMat,
}

/// Extra number states carried while conjugating, so that truncation effects
/// stay out of the returned block.
pub const DIABATIC_PAD: usize = 24;
/// Gauss-Magnus factors in the diabatic product integral.
const DIABATIC_STEPS: usize = 128;

/// `W⁻¹ H̄_D(X) W` with `W = PI exp(iA* dX)` from `X0` to `X`, evaluated with
/// [`DIABATIC_PAD`] extra modes and cut back to the configured truncation.
pub fn diabatic_term(config: &OscillatorConfig, x: f64, x0: f64) -> Result<DiabaticTerm> {
    let t = &config.truncation;
    let d = config.dim();
    let w = config.omega(x)?;
    let closed = |l: f64| (&t.n1 * r(l.cosh()) - &t.n2 * r(0.5 * l.sinh())) * r(w);
    let accumulated = closed((w / config.omega(x0)?).ln());
    let pointwise = closed(config.domega(x) / w);
    if x == x0 {
        return Ok(DiabaticTerm { numeric: config.diagonal_energy(x)?, accumulated, pointwise });
    }
    let big = build_truncation(d + DIABATIC_PAD)?;
    let n3 = big.n3.clone();
    let cfg = config.clone();
    let db = big.dim;
    let gen = GeneratorField::real(db, move |y| match cfg.rate(y) {
        Ok(c) => &n3 * r(-c),
        Err(_) => CMat::from_element(db, db, r(f64::NAN)),
    });
    let wmat = ordered_product_gauss(&gen, &PathDiscretization::uniform(x0, x, DIABATIC_STEPS)?, 1)?;
    let winv = crate::linalg::inverse(&wmat)?;
    let full = winv * (&big.n1 * r(w)) * wmat;
    Ok(DiabaticTerm { numeric: full.view((0, 0), (d, d)).into_owned(), accumulated, pointwise })
}

/// Mode amplitudes `ψ` and their covariant derivative `χ = ψ' − iA*ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoComponentState {
    pub psi: CVec,
    pub dpsi_dx: CVec,
}

impl TwoComponentState {
    pub fn new(psi: CVec, dpsi_dx: CVec) -> Result<Self> {
        if psi.len() != dpsi_dx.len() {
            return Err(PiError::DimensionMismatch { expected: psi.len(), found: dpsi_dx.len() });
        }
        if psi.iter().chain(dpsi_dx.iter()).any(|z| !z.is_finite()) {
            return Err(PiError::NonFinite { at: "two-component state".into() });
        }
        Ok(Self { psi, dpsi_dx })
    }

    fn stacked(&self) -> CVec {
        let d = self.psi.len();
        CVec::from_fn(2 * d, |k, _| if k < d { self.psi[k] } else { self.dpsi_dx[k - d] })
    }

    fn unstack(v: &CVec) -> Result<Self> {
        let d = v.len() / 2;
        Self::new(v.rows(0, d).into_owned(), v.rows(d, d).into_owned())
    }
}

/// `2M(V_I + ω(j + ½) − E)` for every mode.
fn stiffness(config: &OscillatorConfig, x: f64) -> Result<Vec<f64>> {
    let (w, v) = (config.omega(x)?, config.potential(x));
    Ok((0..config.dim()).map(|j| 2.0 * config.mass * (v + w * (j as f64 + 0.5) - config.energy)).collect())
}

/// `[[iA*, I], [2M(V_I + H̄_D − E), iA*]]`.
pub fn block_generator(config: &OscillatorConfig, x: f64) -> Result<CMat> {
    let d = config.dim();
    let b = i_a_conj(config, x)?;
    let k = stiffness(config, x)?;
    let mut g = CMat::zeros(2 * d, 2 * d);
    g.view_mut((0, 0), (d, d)).copy_from(&b);
    g.view_mut((d, d), (d, d)).copy_from(&b);
    for j in 0..d {
        g[(j, d + j)] = r(1.0);
        g[(d + j, j)] = r(k[j]);
    }
    Ok(g)
}

fn check_block_resolution(config: &OscillatorConfig, x0: f64, x1: f64, steps: usize) -> Result<()> {
    let h = (x1 - x0) / steps as f64;
    for k in 0..steps {
        let step_norm = norm1(&block_generator(config, x0 + h * (k as f64 + 0.5))?) * h.abs();
        if step_norm > MAX_BLOCK_STEP {
            return Err(PiError::Resolution { step_norm, limit: MAX_BLOCK_STEP });
        }
    }
    Ok(())
}

/// Strict product integral of the block generator from `x0` to `x1`
/// (`steps` fourth-order Gauss-Magnus factors) applied to the stacked state.
pub fn two_component_evolve(
    config: &OscillatorConfig,
    state0: &TwoComponentState,
    x0: f64,
    x1: f64,
    steps: usize,
) -> Result<TwoComponentState> {
    if state0.psi.len() != config.dim() {
        return Err(PiError::DimensionMismatch { expected: config.dim(), found: state0.psi.len() });
    }
    if x1 == x0 {
        return Ok(state0.clone());
    }
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    check_block_resolution(config, x0, x1, steps)?;
    let cfg = config.clone();
    let d2 = 2 * config.dim();
    let gen = GeneratorField::real(d2, move |x| block_generator(&cfg, x).unwrap_or_else(|_| CMat::from_element(d2, d2, r(f64::NAN))));
    let u = ordered_product_gauss(&gen, &PathDiscretization::uniform(x0, x1, steps)?, 1)?;
    TwoComponentState::unstack(&(u * state0.stacked()))
}

/// Per-mode fundamental solutions of `P'' = k(X) P`, `P1 = 1, P1' = 0`,
/// `P2 = 0, P2' = 1` at `x0`, tabulated on a uniform grid with Gauss-Magnus
/// steps and extended between nodes by one more step.
struct Fundamental {
    config: OscillatorConfig,
    x0: f64,
    h: f64,
    /// Per node, per mode: `[[p1, p2], [p1', p2']]`.
    table: Vec<Vec<[[f64; 2]; 2]>>,
}

fn mode_step(config: &OscillatorConfig, a: f64, b: f64) -> Result<Vec<[[f64; 2]; 2]>> {
    let off = 3f64.sqrt() / 6.0;
    let h = b - a;
    let k1 = stiffness(config, a + h * (0.5 - off))?;
    let k2 = stiffness(config, a + h * (0.5 + off))?;
    Ok(k1
        .iter()
        .zip(&k2)
        .map(|(&k1, &k2)| {
            // exp(h(G1 + G2)/2 + (√3/12)h²[G2, G1]) for G = [[0, 1], [k, 0]].
            let c = 3f64.sqrt() / 12.0 * h * h * (k2 - k1);
            let m = CMat::from_row_slice(2, 2, &[r(-c), r(h), r(0.5 * h * (k1 + k2)), r(c)]);
            let e = crate::linalg::expm(&m);
            [[e[(0, 0)].re, e[(0, 1)].re], [e[(1, 0)].re, e[(1, 1)].re]]
        })
        .collect())
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

impl Fundamental {
    fn new(config: &OscillatorConfig, x0: f64, x1: f64, steps: usize) -> Result<Self> {
        let h = (x1 - x0) / steps as f64;
        let mut table = vec![vec![[[1.0, 0.0], [0.0, 1.0]]; config.dim()]];
        for k in 0..steps {
            let a = x0 + h * k as f64;
            let step = mode_step(config, a, a + h)?;
            let prev = &table[k];
            table.push(step.iter().zip(prev).map(|(s, p)| mat2_mul(s, p)).collect());
        }
        Ok(Self { config: config.clone(), x0, h, table })
    }

    fn at(&self, x: f64) -> Result<Vec<[[f64; 2]; 2]>> {
        let pos = ((x - self.x0) / self.h).floor().clamp(0.0, (self.table.len() - 1) as f64) as usize;
        let node = self.x0 + self.h * pos as f64;
        if x == node {
            return Ok(self.table[pos].clone());
        }
        let step = mode_step(&self.config, node, x)?;
        Ok(step.iter().zip(&self.table[pos]).map(|(s, p)| mat2_mul(s, p)).collect())
    }
}

/// Result of the variation-of-parameters evaluation.
#[derive(Clone, Debug)]
pub struct MehDecomposition {
    pub state: TwoComponentState,
    /// `Q(X1, X0)`, the product integral of the `L` generator.
    pub q: CMat,
    /// Per-mode Wronskians `P1 P2' − P1' P2` at `X1`; exactly 1 at `X0`.
    pub wronskian: Vec<f64>,
    /// Largest `|Wr − 1|` over the grid nodes and modes.
    pub wronskian_drift: f64,
}

/// `(L11, L12; L21, L22)` from the fundamental solutions at one point.
fn l_generator(config: &OscillatorConfig, p: &[[[f64; 2]; 2]], x: f64) -> Result<CMat> {
    let d = config.dim();
    let b = i_a_conj(config, x)?;
    let col = |i: usize, j: usize| -> Vec<Complex64> { p.iter().map(|m| r(m[i][j])).collect() };
    let (p1, p2, dp1, dp2) = (diag(&col(0, 0)), diag(&col(0, 1)), diag(&col(1, 0)), diag(&col(1, 1)));
    let mut wr_inv = Vec::with_capacity(d);
    for m in p {
        let w = m[0][0] * m[1][1] - m[1][0] * m[0][1];
        let scale = (m[0][0] * m[1][1]).abs() + (m[1][0] * m[0][1]).abs();
        if w.abs() < 1e-10 * scale {
            return Err(PiError::IllConditioned { condition: scale / w.abs() });
        }
        wr_inv.push(r(1.0 / w));
    }
    let wi = diag(&wr_inv);
    let l11 = &wi * (&dp2 * &b * &p1 - &p2 * &b * &dp1);
    let l12 = &wi * (&dp2 * &b * &p2 - &p2 * &b * &dp2);
    let l21 = &wi * (&p1 * &b * &dp1 - &dp1 * &b * &p1);
    let l22 = &wi * (&p1 * &b * &dp2 - &dp1 * &b * &p2);
    let mut l = CMat::zeros(2 * d, 2 * d);
    l.view_mut((0, 0), (d, d)).copy_from(&l11);
    l.view_mut((0, d), (d, d)).copy_from(&l12);
    l.view_mut((d, 0), (d, d)).copy_from(&l21);
    l.view_mut((d, d), (d, d)).copy_from(&l22);
    Ok(l)
}

/// `ψ = P1 u + P2 v`, `χ = P1' u + P2' v` with `(u, v)` transported by
/// `Q = PI exp(L dX)`; `P1`, `P2` solve the diagonal equation
/// `P'' = 2M(V_I + H̄_D − E) P` with unit Wronskian.
pub fn meh_superadiabatic_decomposition(
    config: &OscillatorConfig,
    state0: &TwoComponentState,
    x0: f64,
    x1: f64,
    steps: usize,
) -> Result<MehDecomposition> {
    let d = config.dim();
    if state0.psi.len() != d {
        return Err(PiError::DimensionMismatch { expected: d, found: state0.psi.len() });
    }
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    check_block_resolution(config, x0, x1, steps)?;
    let fund = Arc::new(Fundamental::new(config, x0, x1, steps)?);
    let wronskian_drift = fund
        .table
        .iter()
        .flatten()
        .map(|m| (m[0][0] * m[1][1] - m[1][0] * m[0][1] - 1.0).abs())
        .fold(0.0, f64::max);
    let q = if x1 == x0 {
        eye(2 * d)
    } else {
        // Probe for conditioning errors before handing the field to the integrator.
        for node in [x0, 0.5 * (x0 + x1), x1] {
            l_generator(config, &fund.at(node)?, node)?;
        }
        let (cfg, f) = (config.clone(), fund.clone());
        let gen = GeneratorField::real(2 * d, move |x| {
            f.at(x)
                .and_then(|p| l_generator(&cfg, &p, x))
                .unwrap_or_else(|_| CMat::from_element(2 * d, 2 * d, r(f64::NAN)))
        });
        ordered_product_gauss(&gen, &PathDiscretization::uniform(x0, x1, steps)?, 1)?
    };
    // At x0 the fundamental matrix is the identity, so (u, v) = (ψ0, χ0).
    let uv = &q * state0.stacked();
    let p = fund.at(x1)?;
    let entry = |i: usize, j: usize| -> CVec { CVec::from_iterator(d, p.iter().map(|m| r(m[i][j]))) };
    let (u, v) = (uv.rows(0, d).into_owned(), uv.rows(d, d).into_owned());
    let psi = entry(0, 0).component_mul(&u) + entry(0, 1).component_mul(&v);
    let chi = entry(1, 0).component_mul(&u) + entry(1, 1).component_mul(&v);
    Ok(MehDecomposition {
        state: TwoComponentState::new(psi, chi)?,
        q,
        wronskian: p.iter().map(|m| m[0][0] * m[1][1] - m[1][0] * m[0][1]).collect(),
        wronskian_drift,
    })
}

/// A heavy-particle path `X(t)` with velocity, sampled uniformly on `[t0, t1]`.
#[derive(Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
    x: ScalarFn,
    xdot: ScalarFn,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory").field("t0", &self.t0).field("t1", &self.t1).field("samples", &self.samples).finish()
    }
}

impl Trajectory {
    pub fn new(
        t0: f64,
        t1: f64,
        samples: usize,
        x: impl Fn(f64) -> f64 + Send + Sync + 'static,
        xdot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if samples < 2 || !(t1 > t0) {
            return contract("trajectory needs t1 > t0 and at least two samples");
        }
        Ok(Self { t0, t1, samples, x: Arc::new(x), xdot: Arc::new(xdot) })
    }

    /// `X(t) = x0 + v t`.
    pub fn uniform_motion(x0: f64, v: f64, t0: f64, t1: f64, samples: usize) -> Result<Self> {
        Self::new(t0, t1, samples, move |t| x0 + v * t, move |_| v)
    }

    pub fn times(&self) -> Vec<f64> {
        let h = (self.t1 - self.t0) / (self.samples - 1) as f64;
        (0..self.samples).map(|k| self.t0 + h * k as f64).collect()
    }

    pub fn position(&self, t: f64) -> f64 {
        (self.x)(t)
    }

    pub fn velocity(&self, t: f64) -> f64 {
        (self.xdot)(t)
    }
}

/// Sub-cells per sample interval of the phase table.
const PHASE_REFINE: usize = 16;

/// `φ(t) = ∫_{t0}^t ω(X) dt` by the trapezoid rule on a refined grid, linear in between.
#[derive(Clone, Debug)]
struct PhaseTable {
    t0: f64,
    h: f64,
    omega: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PhaseTable {
    fn new(config: &OscillatorConfig, traj: &Trajectory) -> Result<Self> {
        let n = (traj.samples - 1) * PHASE_REFINE;
        let h = (traj.t1 - traj.t0) / n as f64;
        let omega: Vec<f64> = (0..=n).map(|k| config.omega(traj.position(traj.t0 + h * k as f64))).collect::<Result<_>>()?;
        let mut cumulative = vec![0.0; n + 1];
        for k in 0..n {
            cumulative[k + 1] = cumulative[k] + 0.5 * h * (omega[k] + omega[k + 1]);
        }
        Ok(Self { t0: traj.t0, h, omega, cumulative })
    }

    fn at(&self, t: f64) -> f64 {
        let last = self.omega.len() - 1;
        let s = ((t - self.t0) / self.h).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        let frac = s - k as f64;
        let w_t = self.omega[k] + (self.omega[k + 1] - self.omega[k]) * frac;
        self.cumulative[k] + 0.5 * self.h * frac * (self.omega[k] + w_t)
    }
}

/// `f2`, `f3` and the phase `∫ω dt` at the trajectory samples.
#[derive(Clone, Debug)]
pub struct MelFunctions {
    pub times: Vec<f64>,
    pub phase: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

impl MelFunctions {
    /// `Ω(X(t_k), X_i) = (∫ω dt) N1`.
    pub fn frequency_matrix(&self, truncation: &FockTruncation, k: usize) -> CMat {
        &truncation.n1 * r(self.phase[k])
    }
}

pub fn mel_f_functions(config: &OscillatorConfig, traj: &Trajectory) -> Result<MelFunctions> {
    let table = PhaseTable::new(config, traj)?;
    let times = traj.times();
    let mut out = MelFunctions { times: times.clone(), phase: Vec::new(), f2: Vec::new(), f3: Vec::new() };
    for &t in &times {
        let phi = table.at(t);
        let c = config.rate(traj.position(t))?;
        out.phase.push(phi);
        out.f3.push(c * (2.0 * phi).cos());
        out.f2.push(c * (2.0 * phi).sin());
    }
    Ok(out)
}

/// The interaction-picture generator `−i e^{iΩ} Aᵀ Ẋ e^{−iΩ}` as a field of `t`,
/// by direct conjugation with the diagonal `e^{iφN1}`.
pub fn conjugated_generator(config: &OscillatorConfig, traj: &Trajectory) -> Result<GeneratorField> {
    let table = PhaseTable::new(config, traj)?;
    let (cfg, tr) = (config.clone(), traj.clone());
    let d = config.dim();
    Ok(GeneratorField::real(d, move |t| {
        let x = tr.position(t);
        let Ok(a) = gauge_potential_osc(&cfg, x) else {
            return CMat::from_element(d, d, r(f64::NAN));
        };
        let phi = table.at(t);
        let phases: Vec<Complex64> = (0..d).map(|j| Complex64::from_polar(1.0, phi * (j as f64 + 0.5))).collect();
        let u = diag(&phases);
        &u * a.transpose() * u.adjoint() * (-I * tr.velocity(t))
    }))
}

/// `g(X(t_k)) = ¼ ∫_{X_i}^{X} dX1 (ω'1 ω'/(ω1 ω)) sin(2φ(t1) − 2φ(t_k))` by trapezoid in `t1`.
pub fn induced_gauge_g(config: &OscillatorConfig, traj: &Trajectory) -> Result<Vec<f64>> {
    let mel = mel_f_functions(config, traj)?;
    let times = &mel.times;
    let h = times[1] - times[0];
    // ω'/ω · Ẋ at every sample.
    let weight: Vec<f64> = times
        .iter()
        .map(|&t| {
            let x = traj.position(t);
            Ok(config.domega(x) / config.omega(x)? * traj.velocity(t))
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; times.len()];
    for k in 1..times.len() {
        let x = traj.position(times[k]);
        let outer = config.domega(x) / config.omega(x)?;
        let mut acc = 0.0;
        for j in 0..=k {
            let w = if j == 0 || j == k { 0.5 } else { 1.0 };
            acc += w * weight[j] * (2.0 * mel.phase[j] - 2.0 * mel.phase[k]).sin();
        }
        g[k] = 0.25 * outer * acc * h;
    }
    Ok(g)
}

/// Integrands of the effective action at the trajectory samples; the mode
/// dependent entries are indexed `[mode][sample]`.
#[derive(Clone, Debug)]
pub struct EffectiveActionTerms {
    pub times: Vec<f64>,
    /// `½MẊ²`.
    pub kinetic: Vec<f64>,
    /// `−g(X)(j + ½)Ẋ`.
    pub gauge: Vec<Vec<f64>>,
    /// `−V_I(X)`.
    pub potential: Vec<f64>,
    /// `−ω(X)(j + ½)`.
    pub backreaction: Vec<Vec<f64>>,
}

impl EffectiveActionTerms {
    /// Trapezoid integral of the summed integrand for `mode`.
    pub fn action(&self, mode: usize) -> f64 {
        let n = self.times.len();
        let h = self.times[1] - self.times[0];
        (0..n)
            .map(|k| {
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * (self.kinetic[k] + self.gauge[mode][k] + self.potential[k] + self.backreaction[mode][k])
            })
            .sum::<f64>()
            * h
    }
}

pub fn effective_action_terms(config: &OscillatorConfig, traj: &Trajectory) -> Result<EffectiveActionTerms> {
    let times = traj.times();
    let g = induced_gauge_g(config, traj)?;
    let modes = config.dim();
    let mut out = EffectiveActionTerms {
        times: times.clone(),
        kinetic: Vec::new(),
        gauge: vec![Vec::new(); modes],
        potential: Vec::new(),
        backreaction: vec![Vec::new(); modes],
    };
    for (k, &t) in times.iter().enumerate() {
        let (x, v) = (traj.position(t), traj.velocity(t));
        let w = config.omega(x)?;
        out.kinetic.push(0.5 * config.mass * v * v);
        out.potential.push(-config.potential(x));
        for j in 0..modes {
            let n1 = j as f64 + 0.5;
            out.gauge[j].push(-g[k] * n1 * v);
            out.backreaction[j].push(-w * n1);
        }
    }
    Ok(out)
}

/// `(π + g N1)²/2M + V_I + ω N1`, diagonal.
pub fn effective_hamiltonian(config: &OscillatorConfig, x: f64, momentum: f64, g: f64) -> Result<CMat> {
    let w = config.omega(x)?;
    let v = config.potential(x);
    let entries: Vec<Complex64> = (0..config.dim())
        .map(|j| {
            let n1 = j as f64 + 0.5;
            r((momentum + g * n1).powi(2) / (2.0 * config.mass) + v + w * n1)
        })
        .collect();
    Ok(diag(&entries))
}

/// Least-squares coefficients of `m` on `{N1, N2, N3}` over the interior block, and the residual norm.
pub fn so21_projection(truncation: &FockTruncation, m: &CMat, quarantine: usize) -> ([Complex64; 3], f64) {
    let basis = [&truncation.n1, &truncation.n2, &truncation.n3].map(|b| truncation.interior(b, quarantine));
    let target = truncation.interior(m, quarantine);
    // The basis matrices are mutually orthogonal in the Frobenius product.
    let coef: [Complex64; 3] = std::array::from_fn(|i| {
        let b = &basis[i];
        b.iter().zip(target.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>() / b.norm_squared()
    });
    let mut resid = target;
    for (c, b) in coef.iter().zip(&basis) {
        resid -= b * *c;
    }
    (coef, resid.norm())
}
