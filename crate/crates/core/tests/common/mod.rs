#![allow(dead_code)]

use num_complex::Complex64;
use prodint::contour_dykhne::{find_degeneracy, landau_zener, DegeneratePoint, EffectiveGenerator};
use prodint::linalg::{c, commutator, expm, hermitian_eigh, pauli, r, CMat, CVec};
use prodint::pi_engine::{ordered_product, GeneratorField};
use prodint::PathDiscretization;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre integral of a matrix function over [a, b].
pub fn gl_integrate(f: &dyn Fn(f64) -> CMat, a: f64, b: f64, n: usize, panels: usize, d: usize) -> CMat {
    let (x, w) = gauss_legendre(n);
    let mut acc = CMat::zeros(d, d);
    if a == b {
        return acc;
    }
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            acc += f(lo + 0.5 * h * (xi + 1.0)) * r(0.5 * h * wi);
        }
    }
    acc
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> CMat {
    CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))) * r(scale)
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> CMat {
    let m = random_matrix(rng, d, scale);
    (&m + m.adjoint()) * r(0.5)
}

/// `t ↦ A + t B + sin(3t) C` with random complex coefficients, scaled so each
/// coefficient has 1-norm below `scale`.
pub fn random_field(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> (GeneratorField, [CMat; 3]) {
    let s = scale / (2.0 * d as f64);
    let coeffs = [random_matrix(rng, d, s), random_matrix(rng, d, s), random_matrix(rng, d, s)];
    let k = coeffs.clone();
    let field = GeneratorField::real(d, move |t| &k[0] + &k[1] * r(t) + &k[2] * r((3.0 * t).sin()));
    (field, coeffs)
}

/// Richardson extrapolation of the midpoint product (error expansion in h²).
pub fn richardson_product(gen: &GeneratorField, path: &PathDiscretization, steps: usize) -> CMat {
    let coarse = ordered_product(gen, path, steps).unwrap();
    let fine = ordered_product(gen, path, 2 * steps).unwrap();
    (fine * r(4.0) - coarse) * r(1.0 / 3.0)
}

/// Least-squares slope of log(err) against log(h).
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Adiabatic-evolution oracle for the spin-½ latitude loop at polar angle `theta`.
///
/// Evolves `iε ψ' = ½ B(τ)·σ ψ` with `B` swept once around the latitude
/// (azimuth eased in and out so the sweep starts and stops smoothly), starting
/// in the lower level, and returns the phase of the final overlap with the
/// initial state after the dynamical phase is removed. This is the phase the
/// state amplitude acquires.
pub fn adiabatic_amplitude_phase(theta: f64, eps: f64, steps: usize) -> f64 {
    use prodint::linalg::{hermitian_eigh, pauli};
    use std::f64::consts::PI;
    let [sx, sy, sz] = pauli();
    let field = move |tau: f64| {
        let ph = 2.0 * PI * (tau - (2.0 * PI * tau).sin() / (2.0 * PI));
        (&sx * r(theta.sin() * ph.cos()) + &sy * r(theta.sin() * ph.sin()) + &sz * r(theta.cos())) * r(0.5)
    };
    let h0 = field(0.0);
    let gen = GeneratorField::real(2, move |tau| field(tau) * c(0.0, -1.0 / eps));
    let path = PathDiscretization::interval(0.0, 1.0).unwrap();
    let u = ordered_product(&gen, &path, steps).unwrap();
    let (e, v) = hermitian_eigh(&h0);
    let psi0 = v.column(0).into_owned();
    let amp = (psi0.adjoint() * (&u * &psi0))[(0, 0)];
    // The lower energy is −½ all along the loop; undo the factor exp(−i e₀/ε).
    let dynamical = num_complex::Complex64::from_polar(1.0, e[0] / eps);
    (amp * dynamical).arg()
}

/// Smallest distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Nested-integral oracle: every inner integral recomputed by Gauss-Legendre on [0, t].
pub struct NestedOracle {
    pub o: Box<dyn Fn(f64) -> CMat>,
    pub d: usize,
    pub n: usize,
}

impl NestedOracle {
    pub fn int(&self, f: &dyn Fn(f64) -> CMat, t: f64) -> CMat {
        gl_integrate(f, 0.0, t, self.n, 1, self.d)
    }
    pub fn p1(&self, t: f64) -> CMat {
        self.int(&|s| (self.o)(s), t)
    }
    pub fn c1(&self, t: f64) -> CMat {
        self.int(&|s| commutator(&self.p1(s), &(self.o)(s)), t)
    }
    pub fn c2a(&self, t: f64) -> CMat {
        self.int(&|s| commutator(&self.c1(s), &(self.o)(s)), t)
    }
    pub fn c2b(&self, t: f64) -> CMat {
        self.int(
            &|s| {
                let p = self.p1(s);
                commutator(&p, &commutator(&p, &(self.o)(s)))
            },
            t,
        )
    }
    pub fn terms(&self, t: f64) -> [CMat; 4] {
        let t0 = self.p1(t);
        let t1 = self.c1(t) * r(-0.5);
        let t2 = self.c2a(t) * r(0.25) + self.c2b(t) * r(1.0 / 12.0);
        let t3 = self.int(
            &|s| {
                let o = (self.o)(s);
                commutator(&self.c2a(s), &o) * r(-1.0 / 8.0) - commutator(&self.c2b(s), &o) * r(1.0 / 24.0)
            },
            t,
        );
        [t0, t1, t2, t3]
    }
}

pub fn lz_gen(delta: f64, eps: f64) -> (EffectiveGenerator, DegeneratePoint) {
    let fam = landau_zener(delta);
    let z0 = find_degeneracy(&fam, c(0.3, 0.8 * delta)).unwrap();
    let gen = EffectiveGenerator::adiabatic(fam, eps).unwrap().avoiding(&z0.points(), 0.05);
    (gen, z0)
}

/// `Ĥ = H0 + C/(z − z0)` with non-commuting `H0`, `C`.
pub fn pole_gen(z0: Complex64, eps: f64) -> (EffectiveGenerator, DegeneratePoint, CMat) {
    let [sx, sy, sz] = pauli();
    let h0 = &sz * r(0.4) + &sx * r(0.3);
    let res = (&sy * r(0.5) + &sz * r(0.2)) * c(0.3, 0.1);
    let (h, k) = (h0.clone(), res.clone());
    let field = GeneratorField::complex(2, move |z| &h + &k * (1.0 / (z - z0)));
    let gen = EffectiveGenerator::explicit(field, eps).unwrap().avoiding(&[z0], 0.05);
    let pt = DegeneratePoint { z0, pair_conjugate: z0, levels: (0, 1), gap: 0.0 };
    (gen, pt, res)
}

pub fn midpoint_transition(eps: f64, delta: f64, t: f64, n: usize) -> Complex64 {
    let [sx, _, sz] = pauli();
    let h = |tau: f64| (&sz * r(tau) + &sx * r(delta)) * r(0.5);
    let (_, v0) = hermitian_eigh(&h(-t));
    let mut psi: CVec = v0.column(0).into();
    let dt = 2.0 * t / n as f64;
    for k in 0..n {
        let mid = -t + dt * (k as f64 + 0.5);
        psi = expm(&(h(mid) * c(0.0, -dt / eps))) * psi;
    }
    let (_, v1) = hermitian_eigh(&h(t));
    // Fix the phase of the overlap by the upper-level eigenvector only; |·|² is gauge free.
    (v1.column(1).adjoint() * psi)[(0, 0)]
}

/// Cumulants from the logarithm of the moment generating function,
/// `κ_n = m_n − Σ_{k<n} C(n−1, k−1) κ_k m_{n−k}`.
pub fn mgf_cumulants(m: &[Complex64]) -> Vec<Complex64> {
    let moment = |k: usize| if k == 0 { r(1.0) } else { m[k - 1] };
    let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let mut kappa: Vec<Complex64> = Vec::new();
    for n in 1..=m.len() {
        let mut v = moment(n);
        for k in 1..n {
            v -= kappa[k - 1] * moment(n - k) * binom(n - 1, k - 1);
        }
        kappa.push(v);
    }
    kappa
}
