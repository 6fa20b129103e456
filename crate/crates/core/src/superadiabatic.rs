//! Time-dependent problems `iε ψ' = H(τ) ψ` and their superadiabatic truncations.
//!
//! In the instantaneous eigenframe `Φ(τ)` the amplitudes `c = Φ†ψ` obey
//! `c' = −i(E/ε − A) c` with `A = iΦ†Φ'`. The dynamical phases and the
//! diagonal (Berry) part of `A` are factored out exactly; what is left is the
//! product integral `M` of `i Θ a Θ⁻¹`, where `a` is the off-diagonal part of
//! `A` and `Θ = diag(exp(i θ_j))`, `θ_j = ∫(E_j/ε − A_jj)`.
//!
//! `M` is expanded in powers of ε by a local ansatz `M = S(τ) e^{Γ(τ)} S(τ₀)⁻¹`
//! with `S = Θ (I + Σ εⁿ yₙ) Θ⁻¹`. Writing `ω̃_jk = E_j − E_k − ε(A_jj − A_kk)`
//! and `⊘ω̃` for entrywise division of the off-diagonal entries,
//!
//! ```text
//! y₁     = a ⊘ ω̃
//! gₙ     = diag(i a yₙ)
//! yₙ₊₁   = offdiag(a yₙ + i yₙ' + i Σ_{k=1}^{n−1} y_k g_{n−k}) ⊘ ω̃
//! Γ      = Σ εⁿ ∫ gₙ
//! ```
//!
//! The coefficient of εⁿ in the expanded product is `A_{I,n}(τ, τ₀)`; the
//! coefficients of its logarithm give the exponential form. Derivatives and
//! integrals in τ are taken spectrally on Chebyshev-Lobatto nodes.

use num_complex::Complex64;

use crate::cheb::Cheb;
use crate::error::{contract, PiError, Result};
use crate::linalg::{diag, diag_real, eye, hermitian_part, r, CMat, CVec, I};
use crate::path::PathDiscretization;
use crate::pi_engine::{ordered_product_gauss, sum_rule_factor, GeneratorField};
use crate::spectral_geometry::{
    choose_anchors, spectral_frame, spectral_frame_anchored, ParameterizedHamiltonian, DEFAULT_RELATIVE_GAP_TOL,
};

/// Largest per-step generator norm `evolve_exact` accepts.
pub const MAX_STEP_NORM: f64 = 0.5;
/// Highest truncation order accepted in exponential form.
pub const MAX_EXPONENTIAL_ORDER: usize = 3;
pub const DEFAULT_NODES: usize = 64;

#[derive(Clone, Debug)]
pub struct AdiabaticProblem {
    pub h: ParameterizedHamiltonian,
    pub epsilon: f64,
    pub span: (f64, f64),
    pub initial_state: CVec,
}

impl AdiabaticProblem {
    pub fn new(h: ParameterizedHamiltonian, epsilon: f64, span: (f64, f64), initial_state: CVec) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return contract(format!("epsilon must be positive, got {epsilon}"));
        }
        if h.param_dim() != 1 {
            return contract("adiabatic problems need a Hamiltonian of one time parameter");
        }
        if !(span.0.is_finite() && span.1.is_finite() && span.1 > span.0) {
            return contract(format!("span must be an increasing finite interval, got {span:?}"));
        }
        if initial_state.len() != h.dim() {
            return Err(PiError::DimensionMismatch { expected: h.dim(), found: initial_state.len() });
        }
        if (initial_state.norm() - 1.0).abs() > 1e-12 {
            return contract(format!("initial state norm is {}", initial_state.norm()));
        }
        Ok(Self { h, epsilon, span, initial_state })
    }

    /// The problem started in the eigenvector of `level` at `τ₀` (ascending order).
    pub fn in_level(h: ParameterizedHamiltonian, epsilon: f64, span: (f64, f64), level: usize) -> Result<Self> {
        let sf = spectral_frame(&h, &[span.0], DEFAULT_RELATIVE_GAP_TOL)?;
        if level >= h.dim() {
            return contract(format!("level {level} out of range for dimension {}", h.dim()));
        }
        let psi = sf.frame.column(level).into_owned();
        Self::new(h, epsilon, span, psi)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }
}

/// Strict product integral of `−(i/ε) H` over the span applied to the initial
/// state, with `steps` fourth-order Gauss-Magnus factors.
pub fn evolve_exact(problem: &AdiabaticProblem, steps: usize) -> Result<CVec> {
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    let (t0, t1) = problem.span;
    let dt = (t1 - t0) / steps as f64;
    // Spectral radius sampled at the step boundaries.
    let mut worst: f64 = 0.0;
    for k in 0..=steps {
        let hk = problem.h.eval_scalar(t0 + dt * k as f64)?;
        let (e, _) = crate::linalg::hermitian_eigh(&hk);
        worst = worst.max(e.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    let step_norm = worst * dt / problem.epsilon;
    if step_norm > MAX_STEP_NORM {
        return Err(PiError::Resolution { step_norm, limit: MAX_STEP_NORM });
    }
    let h = problem.h.clone();
    let eps = problem.epsilon;
    let d = problem.dim();
    let gen = GeneratorField::real(d, move |t| match h.eval_scalar(t) {
        Ok(m) => m * Complex64::new(0.0, -1.0 / eps),
        Err(_) => CMat::from_element(d, d, r(f64::NAN)),
    });
    let u = ordered_product_gauss(&gen, &PathDiscretization::uniform(t0, t1, steps)?, 1)?;
    let psi = u * &problem.initial_state;
    if (psi.norm() - 1.0).abs() > 1e-8 {
        return contract(format!("norm drifted to {}", psi.norm()));
    }
    Ok(psi)
}

/// Anchored eigenframes, energies and the connection `A = iΦ†Φ'` on
/// Chebyshev-Lobatto nodes of the span.
#[derive(Clone, Debug)]
pub struct AdiabaticFrames {
    cheb: Cheb,
    pub energies: Vec<Vec<f64>>,
    pub frames: Vec<CMat>,
    pub connection: Vec<CMat>,
}

impl AdiabaticFrames {
    /// `nodes + 1` samples; the gauge anchors are chosen at `τ₀`.
    pub fn new(problem: &AdiabaticProblem, nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return Err(PiError::TooSmall { dim: nodes, min: 8 });
        }
        let cheb = Cheb::new(problem.span.0, problem.span.1, nodes);
        let tol = DEFAULT_RELATIVE_GAP_TOL;
        let anchors = choose_anchors(&spectral_frame(&problem.h, &[problem.span.0], tol)?.frame);
        let mut energies = Vec::with_capacity(nodes + 1);
        let mut frames = Vec::with_capacity(nodes + 1);
        for &t in cheb.nodes() {
            let sf = spectral_frame_anchored(&problem.h, &[t], tol, &anchors)?;
            energies.push(sf.eigenvalues);
            frames.push(sf.frame);
        }
        let dphi = cheb.diff(&frames);
        let connection = frames.iter().zip(&dphi).map(|(f, df)| hermitian_part(&(f.adjoint() * df * I))).collect();
        Ok(Self { cheb, energies, frames, connection })
    }

    pub fn nodes(&self) -> &[f64] {
        self.cheb.nodes()
    }

    pub fn energy_matrix(&self, t: f64) -> CMat {
        let e: Vec<CMat> = self.energies.iter().map(|v| diag_real(v)).collect();
        self.cheb.interp(&e, t)
    }

    pub fn connection_at(&self, t: f64) -> CMat {
        self.cheb.interp(&self.connection, t)
    }

    pub fn frame_at(&self, t: f64) -> CMat {
        self.cheb.interp(&self.frames, t)
    }
}

/// The generator `i A_I(τ)` with `A_I = e^{(i/ε)∫E} A e^{−(i/ε)∫E}`, obtained by
/// factoring `−(i/ε)E` out of `−(i/ε)E + iA` with the sum rule.
pub fn interaction_generator(problem: &AdiabaticProblem, frames: &AdiabaticFrames) -> Result<GeneratorField> {
    let d = problem.dim();
    let eps = problem.epsilon;
    let (t0, t1) = problem.span;
    let fe = frames.clone();
    let gen_i = GeneratorField::real(d, move |t| fe.energy_matrix(t) * Complex64::new(0.0, -1.0 / eps));
    let fa = frames.clone();
    let gen_ii = GeneratorField::real(d, move |t| fa.connection_at(t) * I);
    let spread = frames.energies.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()));
    let segments = ((20.0 * spread * (t1 - t0) / eps).ceil() as usize).max(1024);
    let factor = sum_rule_factor(&gen_i, &gen_ii, &PathDiscretization::uniform(t0, t1, segments)?)?;
    Ok(factor.transformed)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SuperadiabaticForm {
    #[default]
    TExponential,
    Exponential,
}

/// Order-N corrections at the end of the span.
///
/// `correction_terms[n − 1]` is `A_{I,n}(τ₁, τ₀)` (or `Ã_{I,n}` in exponential
/// form). The full amplitude propagator is
/// `Φ(τ₁) diag(e^{i(dynamical + berry)}) (I + Σ εⁿ A_{I,n}) Φ(τ₀)†`.
#[derive(Clone, Debug)]
pub struct SuperadiabaticExpansion {
    pub order: usize,
    pub form: SuperadiabaticForm,
    pub correction_terms: Vec<CMat>,
    /// `−(1/ε) ∫ E_j`.
    pub dynamical_phases: Vec<f64>,
    /// `∫ A_jj`.
    pub berry_phases: Vec<f64>,
}

impl SuperadiabaticExpansion {
    /// The truncated interaction-picture propagator `I + Σ εⁿ A_{I,n}` or `exp(Σ εⁿ Ã_{I,n})`.
    pub fn truncated(&self, epsilon: f64) -> CMat {
        let d = self.dynamical_phases.len();
        let mut sum = CMat::zeros(d, d);
        for (n, term) in self.correction_terms.iter().enumerate() {
            sum += term * r(epsilon.powi(n as i32 + 1));
        }
        match self.form {
            SuperadiabaticForm::TExponential => eye(d) + sum,
            SuperadiabaticForm::Exponential => crate::linalg::expm(&sum),
        }
    }

    /// `diag(e^{i(dynamical + berry)})`.
    pub fn phase_factor(&self) -> CMat {
        let z: Vec<Complex64> = self
            .dynamical_phases
            .iter()
            .zip(&self.berry_phases)
            .map(|(a, b)| Complex64::from_polar(1.0, a + b))
            .collect();
        diag(&z)
    }
}

fn offdiag(m: &CMat) -> CMat {
    let mut out = m.clone();
    out.fill_diagonal(r(0.0));
    out
}

fn diagonal(m: &CMat) -> CMat {
    CMat::from_diagonal(&m.diagonal())
}

fn divide(m: &CMat, w: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |j, k| if j == k { r(0.0) } else { m[(j, k)] / w[(j, k)] })
}

/// Truncated product of two ε-series.
fn series_mul(x: &[CMat], y: &[CMat]) -> Vec<CMat> {
    let n = x.len();
    (0..n)
        .map(|m| {
            let mut acc = CMat::zeros(x[0].nrows(), x[0].ncols());
            for k in 0..=m {
                acc += &x[k] * &y[m - k];
            }
            acc
        })
        .collect()
}

/// Series inverse of `x` with `x[0] = I`.
fn series_inv(x: &[CMat]) -> Vec<CMat> {
    let mut inv = vec![eye(x[0].nrows())];
    for n in 1..x.len() {
        let mut acc = CMat::zeros(x[0].nrows(), x[0].ncols());
        for k in 1..=n {
            acc -= &x[k] * &inv[n - k];
        }
        inv.push(acc);
    }
    inv
}

/// Series of `exp(Σ εⁿ gₙ)` for mutually commuting `gₙ` (`g[0]` ignored).
fn series_exp_commuting(g: &[CMat]) -> Vec<CMat> {
    let mut e = vec![eye(g[0].nrows())];
    for n in 1..g.len() {
        let mut acc = CMat::zeros(g[0].nrows(), g[0].ncols());
        for k in 1..=n {
            acc += &g[k] * &e[n - k] * r(k as f64);
        }
        e.push(acc * r(1.0 / n as f64));
    }
    e
}

/// Series of `log(I + X)` with `X = Σ_{n≥1} εⁿ xₙ`.
fn series_log(x: &[CMat]) -> Vec<CMat> {
    let n = x.len();
    let mut xs = x.to_vec();
    xs[0] = CMat::zeros(x[0].nrows(), x[0].ncols());
    let mut out = vec![CMat::zeros(x[0].nrows(), x[0].ncols()); n];
    let mut power = xs.clone();
    for k in 1..n {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        for m in 0..n {
            out[m] += &power[m] * r(sign / k as f64);
        }
        power = series_mul(&power, &xs);
    }
    out
}

/// The order-`n` corrections at the end of the span.
pub fn superadiabatic_expansion(
    problem: &AdiabaticProblem,
    frames: &AdiabaticFrames,
    n: usize,
    form: SuperadiabaticForm,
) -> Result<SuperadiabaticExpansion> {
    if form == SuperadiabaticForm::Exponential && n > MAX_EXPONENTIAL_ORDER {
        return Err(PiError::UnsupportedOrder { order: n, max: MAX_EXPONENTIAL_ORDER });
    }
    let d = problem.dim();
    let eps = problem.epsilon;
    let cheb = &frames.cheb;
    let count = cheb.nodes().len();
    let last = count - 1;

    let energy: Vec<CMat> = frames.energies.iter().map(|v| diag_real(v)).collect();
    let berry: Vec<CMat> = frames.connection.iter().map(diagonal).collect();
    let theta_rate: Vec<CMat> = energy.iter().zip(&berry).map(|(e, b)| e * r(1.0 / eps) - b).collect();
    let theta = cheb.cumint(&theta_rate);
    let a: Vec<CMat> = frames.connection.iter().map(offdiag).collect();
    let omega: Vec<CMat> = energy
        .iter()
        .zip(&berry)
        .map(|(e, b)| {
            let k = e - b * r(eps);
            CMat::from_fn(d, d, |i, j| k[(i, i)] - k[(j, j)])
        })
        .collect();
    let scale = omega.iter().flat_map(|w| w.iter().map(|z| z.norm())).fold(0.0, f64::max);
    for w in &omega {
        for i in 0..d {
            for j in 0..d {
                if i != j && w[(i, j)].norm() < 1e-3 * scale {
                    return contract("shifted level spacing nearly vanishes; ε is outside the adiabatic regime");
                }
            }
        }
    }

    // y[m][node], g[m][node] for m = 0..=n, with y₀ = I and g₀ = 0.
    let mut y: Vec<Vec<CMat>> = vec![vec![eye(d); count]];
    let mut g: Vec<Vec<CMat>> = vec![vec![CMat::zeros(d, d); count]];
    if n >= 1 {
        y.push(a.iter().zip(&omega).map(|(ak, wk)| divide(ak, wk)).collect());
    }
    for m in 1..=n {
        g.push((0..count).map(|k| diagonal(&(&a[k] * &y[m][k] * I))).collect());
        if m == n {
            break;
        }
        let dy = cheb.diff(&y[m]);
        let next = (0..count)
            .map(|k| {
                let mut rhs = &a[k] * &y[m][k] + &dy[k] * I;
                for j in 1..m {
                    rhs += &y[j][k] * &g[m - j][k] * I;
                }
                divide(&offdiag(&rhs), &omega[k])
            })
            .collect();
        y.push(next);
    }

    let gamma: Vec<CMat> = g.iter().map(|gm| cheb.cumint(gm)[last].clone()).collect();
    let phase: Vec<Complex64> = (0..d).map(|j| Complex64::from_polar(1.0, theta[last][(j, j)].re)).collect();
    let big_theta = diag(&phase);
    let start: Vec<CMat> = y.iter().map(|ym| ym[0].clone()).collect();
    let end: Vec<CMat> = y.iter().map(|ym| &big_theta * &ym[last] * big_theta.adjoint()).collect();
    let series = series_mul(&series_mul(&end, &series_exp_commuting(&gamma)), &series_inv(&start));
    let series = match form {
        SuperadiabaticForm::TExponential => series,
        SuperadiabaticForm::Exponential => series_log(&series),
    };

    let e_int = cheb.cumint(&energy);
    let b_int = cheb.cumint(&berry);
    Ok(SuperadiabaticExpansion {
        order: n,
        form,
        correction_terms: series.into_iter().skip(1).collect(),
        dynamical_phases: (0..d).map(|j| -e_int[last][(j, j)].re / eps).collect(),
        berry_phases: (0..d).map(|j| b_int[last][(j, j)].re).collect(),
    })
}

/// The order-`n` superadiabatic approximation of the state at the end of the span.
pub fn superadiabatic_state_with(
    problem: &AdiabaticProblem,
    frames: &AdiabaticFrames,
    n: usize,
    form: SuperadiabaticForm,
) -> Result<CVec> {
    let ex = superadiabatic_expansion(problem, frames, n, form)?;
    let last = frames.frames.len() - 1;
    let u = &frames.frames[last] * ex.phase_factor() * ex.truncated(problem.epsilon) * frames.frames[0].adjoint();
    Ok(u * &problem.initial_state)
}

/// [`superadiabatic_state_with`] on [`DEFAULT_NODES`] Chebyshev nodes.
pub fn superadiabatic_state(problem: &AdiabaticProblem, n: usize, form: SuperadiabaticForm) -> Result<CVec> {
    let frames = AdiabaticFrames::new(problem, DEFAULT_NODES)?;
    superadiabatic_state_with(problem, &frames, n, form)
}

/// A gapped two-level test model on `τ ∈ [0, 1]` with complex eigenvectors:
/// `H = E₀(τ) n(τ)·σ` with `E₀ = 1 + 0.2τ`, polar angle `0.6 + 0.5s` and
/// azimuth `s`, where `s = τ⁴`. The direction starts from rest, so the
/// coupling and its first two derivatives vanish at `τ = 0`.
pub fn two_level_model() -> ParameterizedHamiltonian {
    let [sx, sy, sz] = crate::linalg::pauli();
    ParameterizedHamiltonian::scalar(2, move |t| {
        let s = t.powi(4);
        let (th, ph) = (0.6 + 0.5 * s, s);
        (&sx * r(th.sin() * ph.cos()) + &sy * r(th.sin() * ph.sin()) + &sz * r(th.cos())) * r(1.0 + 0.2 * t)
    })
}
