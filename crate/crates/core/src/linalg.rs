//! Dense complex linear algebra used throughout the crate.
//!
//! The matrix exponential follows the scaling-and-squaring scheme with
//! degree-selected Padé approximants (Higham 2005). Degrees 3 through 9 are
//! chosen for small 1-norms, which is the common case for single product
//! integral steps.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{PiError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn zeros(d: usize) -> CMat {
    CMat::zeros(d, d)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn diag(entries: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_row_slice(entries))
}

pub fn diag_real(entries: &[f64]) -> CMat {
    CMat::from_fn(entries.len(), entries.len(), |i, j| {
        if i == j {
            r(entries[i])
        } else {
            Complex64::default()
        }
    })
}

/// Pauli matrices σ_x, σ_y, σ_z.
pub fn pauli() -> [CMat; 3] {
    let z = Complex64::default();
    let one = r(1.0);
    [
        CMat::from_row_slice(2, 2, &[z, one, one, z]),
        CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        CMat::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * r(0.5)
}

/// Frobenius distance from unitarity, ‖U†U − I‖.
pub fn unitarity_defect(u: &CMat) -> f64 {
    (u.adjoint() * u - eye(u.nrows())).norm()
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or(PiError::IllConditioned { condition: f64::INFINITY })
}

/// Inverse together with the 1-norm condition estimate ‖A‖₁‖A⁻¹‖₁.
pub fn inverse_checked(a: &CMat, max_condition: f64) -> Result<CMat> {
    let inv = inverse(a)?;
    let condition = norm1(a) * norm1(&inv);
    if !condition.is_finite() || condition > max_condition {
        return Err(PiError::IllConditioned { condition });
    }
    Ok(inv)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    if n == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm1(a);
    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coeffs);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * r(0.5f64.powi(s));
    let mut x = pade13(&scaled);
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    let n = a.nrows();
    let id = eye(n);
    let a2 = a * a;
    // Even powers A^0, A^2, A^4, ...
    let mut powers = vec![id.clone()];
    for k in 1..b.len() / 2 {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let mut u = CMat::zeros(n, n);
    let mut v = CMat::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        v += p * r(b[2 * k]);
        u += p * r(b[2 * k + 1]);
    }
    let u = a * u;
    solve_pade(&(&v - &u), &(&v + &u))
}

fn pade13(a: &CMat) -> CMat {
    let b = PADE13;
    let n = a.nrows();
    let id = eye(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * r(b[13]) + &a4 * r(b[11]) + &a2 * r(b[9]))
        + &a6 * r(b[7])
        + &a4 * r(b[5])
        + &a2 * r(b[3])
        + &id * r(b[1]);
    let u = a * u_inner;
    let v = &a6 * (&a6 * r(b[12]) + &a4 * r(b[10]) + &a2 * r(b[8]))
        + &a6 * r(b[6])
        + &a4 * r(b[4])
        + &a2 * r(b[2])
        + &id * r(b[0]);
    solve_pade(&(&v - &u), &(&v + &u))
}

fn solve_pade(q: &CMat, p: &CMat) -> CMat {
    q.clone()
        .lu()
        .solve(p)
        .expect("Padé denominator is nonsingular inside the scaling threshold")
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues ascending.
///
/// The input is symmetrized first so tiny non-Hermitian noise is ignored.
pub fn hermitian_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let sym = hermitian_part(h);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(h.nrows(), h.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a general complex square matrix via the complex Schur form.
pub fn eigenvalues(a: &CMat) -> Vec<Complex64> {
    if a.nrows() == 2 {
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        return vec![(tr - disc) * 0.5, (tr + disc) * 0.5];
    }
    let (_, t) = Schur::new(a.clone()).unpack();
    (0..a.nrows()).map(|k| t[(k, k)]).collect()
}

/// Eigenvalues and unit right eigenvectors (as columns) of a general complex
/// matrix, from the Schur form by back substitution. Defective matrices
/// give nearly parallel columns.
pub fn eig_general(a: &CMat) -> (Vec<Complex64>, CMat) {
    let n = a.nrows();
    let (q, t) = Schur::new(a.clone()).unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let floor = 1e-14 * norm1(a).max(f64::MIN_POSITIVE);
    let mut vectors = CMat::zeros(n, n);
    for k in 0..n {
        let mut y = CVec::zeros(n);
        y[k] = r(1.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in (j + 1)..=k {
                acc += t[(j, m)] * y[m];
            }
            let mut den = t[(j, j)] - values[k];
            if den.norm() < floor {
                den = Complex64::new(floor, 0.0);
            }
            y[j] = -acc / den;
        }
        let v = &q * y;
        let nv = v.norm();
        vectors.set_column(k, &(v / r(nv)));
    }
    (values, vectors)
}

/// Largest distance between two eigenvalue multisets after optimal matching.
///
/// Matching is greedy on the sorted pairwise distances, which is exact for
/// well-separated spectra and adequate for the small dimensions used here.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (dist, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(dist);
        }
    }
    worst
}
