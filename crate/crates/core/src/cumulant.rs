//! Moment to cumulant conversion and the diagonal-average cumulant logarithm
//! `log⟨e^O⟩_j ≈ κ1 + κ2/2 + κ3/6 + κ4/24`, where `⟨·⟩_j` takes the `(j, j)`
//! element of a matrix.

use num_complex::Complex64;

use crate::error::{contract, PiError, Result};
use crate::linalg::{eye, r, CMat};
use crate::oscillator_model::{conjugated_generator, effective_action_terms, OscillatorConfig, Trajectory};
use crate::path::PathDiscretization;
use crate::pi_engine::magnus_terms;

/// Highest supported moment.
pub const MAX_MOMENT: usize = 4;

/// `⟨O⟩, ⟨O²⟩, …` for one diagonal index, at most four entries.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSequence {
    moments: Vec<Complex64>,
}

impl MomentSequence {
    pub fn new(moments: Vec<Complex64>) -> Result<Self> {
        if moments.is_empty() {
            return contract("at least one moment is required");
        }
        if moments.len() > MAX_MOMENT {
            return Err(PiError::UnsupportedOrder { order: moments.len(), max: MAX_MOMENT });
        }
        Ok(Self { moments })
    }

    pub fn real(moments: &[f64]) -> Result<Self> {
        Self::new(moments.iter().map(|&m| r(m)).collect())
    }

    /// The `(j, j)` elements of `O¹ … Oⁿ`.
    pub fn diagonal(powers: &[CMat], j: usize) -> Result<Self> {
        Self::new(powers.iter().map(|p| p[(j, j)]).collect())
    }

    pub fn moments(&self) -> &[Complex64] {
        &self.moments
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }
}

/// Which fourth-cumulant formula to apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Kappa4 {
    /// `m4 − 4m1m3 − 3m2² + 12m1²m2 − 6m1⁴`.
    #[default]
    Standard,
    /// The line as printed, `m4 − 4m1m3 − 3m1²m2 + 12m1³m1 − 6m1⁴`.
    Printed,
}

pub fn cumulants(moments: &MomentSequence) -> Vec<Complex64> {
    cumulants_with(moments, Kappa4::Standard)
}

pub fn cumulants_with(moments: &MomentSequence, kappa4: Kappa4) -> Vec<Complex64> {
    let m = &moments.moments;
    let m1 = m[0];
    let mut out = vec![m1];
    if let Some(&m2) = m.get(1) {
        out.push(m2 - m1 * m1);
    }
    if let Some(&m3) = m.get(2) {
        out.push(m3 - m1 * m[1] * 3.0 + m1.powi(3) * 2.0);
    }
    if let Some(&m4) = m.get(3) {
        let m2 = m[1];
        let base = m4 - m1 * m[2] * 4.0 - m1.powi(4) * 6.0;
        out.push(match kappa4 {
            Kappa4::Standard => base - m2 * m2 * 3.0 + m1 * m1 * m2 * 12.0,
            Kappa4::Printed => base - m1 * m1 * m2 * 3.0 + m1.powi(4) * 12.0,
        });
    }
    out
}

/// `[I, O, O², …, Oⁿ]`.
pub fn operator_powers(o: &CMat, n: usize) -> Result<Vec<CMat>> {
    if !o.is_square() {
        return Err(PiError::DimensionMismatch { expected: o.nrows(), found: o.ncols() });
    }
    let mut out = vec![eye(o.nrows())];
    for k in 0..n {
        out.push(&out[k] * o);
    }
    Ok(out)
}

fn check_powers(op_powers: &[CMat], j: usize) -> Result<usize> {
    let Some(first) = op_powers.first() else {
        return contract("operator powers must start with the identity");
    };
    let d = first.nrows();
    if op_powers.len() < 2 {
        return contract("at least O¹ is required");
    }
    if op_powers.len() > MAX_MOMENT + 1 {
        return Err(PiError::UnsupportedOrder { order: op_powers.len() - 1, max: MAX_MOMENT });
    }
    for p in op_powers {
        if p.nrows() != d || p.ncols() != d {
            return Err(PiError::DimensionMismatch { expected: d, found: if p.nrows() != d { p.nrows() } else { p.ncols() } });
        }
    }
    if j >= d {
        return contract(format!("index {j} outside dimension {d}"));
    }
    Ok(d)
}

/// `κ1 … κn` of the diagonal sequence `(O^k)_jj`; `op_powers` starts with `I`.
pub fn diagonal_cumulants(op_powers: &[CMat], j: usize) -> Result<Vec<Complex64>> {
    check_powers(op_powers, j)?;
    Ok(cumulants(&MomentSequence::diagonal(&op_powers[1..], j)?))
}

/// `Σ κ_k/k!`, the truncation of `log⟨e^O⟩_j` at the highest supplied power.
pub fn diagonal_cumulant_log(op_powers: &[CMat], j: usize) -> Result<Complex64> {
    let kappa = diagonal_cumulants(op_powers, j)?;
    let mut fact = 1.0;
    Ok(kappa
        .iter()
        .enumerate()
        .map(|(k, x)| {
            fact *= (k + 1) as f64;
            x / fact
        })
        .sum())
}

/// Per-mode effective action along a trajectory.
#[derive(Clone, Debug)]
pub struct KernelAction {
    /// `∫(½MẊ² − V_I − ω(j + ½)) dt`.
    pub base: Vec<f64>,
    /// `−(j + ½)∫g dX`.
    pub gauge: Vec<f64>,
    /// `κ1 … κ4` of the accumulated Magnus matrix at each mode.
    pub cumulants: Vec<Vec<Complex64>>,
    /// `−i Σ_{k≥2} κ_k/k!`; the first cumulant is the gauge term.
    pub correction: Vec<Complex64>,
}

impl KernelAction {
    pub fn total(&self, mode: usize) -> Complex64 {
        r(self.base[mode] + self.gauge[mode]) + self.correction[mode]
    }
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    values.iter().enumerate().map(|(k, v)| if k == 0 || k == n - 1 { 0.5 * v } else { *v }).sum::<f64>() * h
}

/// The effective action of every mode, with the higher cumulants taken from
/// the Magnus matrix of the conjugated generator up to `magnus_order`.
///
/// Powers of the Magnus matrix spread the cut defect inward, so only modes
/// well below the truncation are meaningful.
pub fn kernel_effective_action(config: &OscillatorConfig, traj: &Trajectory, magnus_order: usize) -> Result<KernelAction> {
    let terms = effective_action_terms(config, traj)?;
    let h = terms.times[1] - terms.times[0];
    let modes = config.dim();
    let mut out = KernelAction { base: Vec::new(), gauge: Vec::new(), cumulants: Vec::new(), correction: Vec::new() };
    let omega = magnus_terms(&conjugated_generator(config, traj)?, &PathDiscretization::real(terms.times.clone())?, magnus_order)?.sum();
    let powers = operator_powers(&omega, MAX_MOMENT)?;
    let light: Vec<f64> = terms.kinetic.iter().zip(&terms.potential).map(|(k, v)| k + v).collect();
    let light = trapezoid(&light, h);
    for j in 0..modes {
        out.base.push(light + trapezoid(&terms.backreaction[j], h));
        out.gauge.push(trapezoid(&terms.gauge[j], h));
        let kappa = diagonal_cumulants(&powers, j)?;
        let mut fact = 1.0;
        let mut corr = Complex64::new(0.0, 0.0);
        for (k, x) in kappa.iter().enumerate() {
            fact *= (k + 1) as f64;
            if k > 0 {
                corr += x / fact;
            }
        }
        out.correction.push(corr * Complex64::new(0.0, -1.0));
        out.cumulants.push(kappa);
    }
    Ok(out)
}
