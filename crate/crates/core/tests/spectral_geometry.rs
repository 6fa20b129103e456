mod common;

use std::f64::consts::PI;

use common::*;
use prodint::holonomy::{berry_phase, LoopSpec};
use prodint::linalg::{c, diag_real, expm, pauli, r, CMat, I};
use prodint::spectral_geometry::*;
use prodint::PathDiscretization;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Closed-form spin-½ eigenvectors for direction (θ, φ): lower, upper.
fn spin_half_oracle(th: f64, ph: f64) -> (CMat, [f64; 2]) {
    let (ch, sh) = ((th / 2.0).cos(), (th / 2.0).sin());
    let e = num_complex::Complex64::from_polar(1.0, ph);
    // Columns: lower (−e^{−iφ} sin, cos)ᵀ, upper (cos, e^{iφ} sin)ᵀ.
    let m = CMat::from_row_slice(2, 2, &[-e.conj() * sh, r(ch), r(ch), e * sh]);
    (m, [-0.5, 0.5])
}

#[test]
fn spin_half_matches_closed_form() {
    let h = spin_half(2.0);
    for &(th, ph) in &[(0.3, 0.1), (1.2, 2.5), (2.8, -1.0)] {
        let sf = spectral_frame(&h, &[th, ph], 1e-9).unwrap();
        let (vecs, vals) = spin_half_oracle(th, ph);
        for k in 0..2 {
            assert!((sf.eigenvalues[k] - 2.0 * vals[k]).abs() < 1e-13);
            let ov = (vecs.column(k).adjoint() * sf.frame.column(k))[(0, 0)];
            assert!((ov.norm() - 1.0).abs() < 1e-12, "({th}, {ph}) level {k}");
        }
    }
}

#[test]
fn rotating_real_frame_connection() {
    // H(θ) = cosθ σ_z + sinθ σ_x: frames (−sin(θ/2), cos(θ/2)), (cos(θ/2), sin(θ/2)).
    let [sx, _, sz] = pauli();
    let h = ParameterizedHamiltonian::scalar(2, move |t| &sz * r(t.cos()) + &sx * r(t.sin()));
    let th = 0.4;
    let a = connection(&h, &[th], 1e-4, 1e-9).unwrap();
    // Analytic: Φ = [[−s, c], [c, s]] (after anchoring both columns have positive anchors).
    let sf = spectral_frame(&h, &[th], 1e-9).unwrap();
    let sign0 = sf.frame[(1, 0)].re.signum() * (th / 2.0).cos().signum();
    let sign1 = sf.frame[(0, 1)].re.signum();
    let phi = |t: f64| {
        CMat::from_row_slice(2, 2, &[
            r(-sign0 * (t / 2.0).sin()), r(sign1 * (t / 2.0).cos()),
            r(sign0 * (t / 2.0).cos()), r(sign1 * (t / 2.0).sin()),
        ])
    };
    let dphi = CMat::from_row_slice(2, 2, &[
        r(-sign0 * 0.5 * (th / 2.0).cos()), r(-sign1 * 0.5 * (th / 2.0).sin()),
        r(-sign0 * 0.5 * (th / 2.0).sin()), r(sign1 * 0.5 * (th / 2.0).cos()),
    ]);
    let expected = phi(th).adjoint() * dphi * I;
    assert!((&a.a[0] - &expected).norm() < 1e-8, "{} vs {}", a.a[0], expected);
    assert!((a.a[0][(0, 1)].norm() - 0.5).abs() < 1e-8);
    assert!(a.a[0][(0, 0)].norm() < 1e-8);
}

fn random_family(seed: u64) -> ParameterizedHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = diag_real(&[-2.0, 0.0, 2.0]);
    let h1 = random_hermitian(&mut rng, 3, 0.4);
    let h2 = random_hermitian(&mut rng, 3, 0.4);
    ParameterizedHamiltonian::new(3, 2, move |x| &base + &h1 * r(x[0].sin()) + &h2 * r(x[0] * x[1]))
}

#[test]
fn smooth_frames_follow_rotating_field() {
    let h = spin_half(1.0);
    let path = PathDiscretization::vector((0..=1000).map(|k| vec![1.0, 2.0 * PI * k as f64 / 1000.0]).collect(), false).unwrap();
    let frames = smooth_frames(&h, &path, 1e-9).unwrap();
    for w in frames.windows(2) {
        let ov = w[0].frame.adjoint() * &w[1].frame;
        for k in 0..2 {
            assert!(ov[(k, k)].re >= 0.999 && ov[(k, k)].im.abs() < 1e-12);
        }
    }
    // The loop closes in parameter space: the last frame spans the same lines as the first.
    let (first, last) = (&frames[0].frame, &frames[1000].frame);
    let ov = first.adjoint() * last;
    for k in 0..2 {
        assert!((ov[(k, k)].norm() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn smooth_frames_of_constant_family_are_identical() {
    let h = ParameterizedHamiltonian::scalar(2, |_| CMat::from_row_slice(2, 2, &[r(1.0), c(0.0, 0.5), c(0.0, -0.5), r(-1.0)]));
    let frames = smooth_frames(&h, &PathDiscretization::uniform(0.0, 1.0, 20).unwrap(), 1e-9).unwrap();
    for f in &frames {
        assert!((&f.frame - &frames[0].frame).norm() < 1e-14);
    }
}

#[test]
fn coarse_sampling_loses_tracking() {
    // Jump from the standard basis to the discrete Fourier basis: every overlap is 1/√5.
    let n = 5;
    let dft = CMat::from_fn(n, n, |j, k| num_complex::Complex64::from_polar(1.0 / (n as f64).sqrt(), 2.0 * PI * (j * k) as f64 / n as f64));
    let d = diag_real(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let h = ParameterizedHamiltonian::scalar(n, move |t| if t < 0.5 { d.clone() } else { &dft * &d * dft.adjoint() });
    let path = PathDiscretization::real(vec![0.0, 1.0]).unwrap();
    assert!(matches!(smooth_frames(&h, &path, 1e-9), Err(prodint::PiError::TrackingLost { sample: 1, .. })));
}

#[test]
fn abelian_curvature_of_spin_half_at_equator() {
    let h = spin_half(1.0);
    let x = [PI / 2.0, 0.3];
    let f = field_tensor(&h, &x, 1e-4, 1e-9, ConnectionPart::Diagonal).unwrap();
    // Shrinking-loop flux oracle: F_ll = i·(−∮A_ll)/area for small counter-clockwise loops.
    let a = connection_one_form(&h, &x, ConnectionPart::Diagonal, 1e-4, 1e-9).unwrap();
    let mut estimates = Vec::new();
    for radius in [0.08, 0.04, 0.02] {
        let lp = LoopSpec::circle(&x, 0, 1, radius, 64).unwrap();
        let area = PI * radius * radius;
        let phases: Vec<f64> = (0..2).map(|l| berry_phase(&a, &lp, l).unwrap() / area).collect();
        estimates.push(phases);
    }
    for l in 0..2 {
        // Richardson on the last two radii (flux density error is O(r²)).
        let flux = (4.0 * estimates[2][l] - estimates[1][l]) / 3.0;
        let expected = c(0.0, flux);
        assert!((f.get(0, 1)[(l, l)] - expected).norm() < 1e-3, "level {l}: {} vs {expected}", f.get(0, 1)[(l, l)]);
        assert!((f.get(0, 1)[(l, l)].norm() - 0.5).abs() < 1e-3);
    }
    assert_eq!(f.get(1, 0), &(-f.get(0, 1)));
    assert_eq!(f.get(0, 0), &CMat::zeros(2, 2));
}

#[test]
fn field_tensor_of_fixed_frame_vanishes() {
    let h = ParameterizedHamiltonian::new(3, 2, |x| diag_real(&[x[0], 2.0 + x[1], 5.0]));
    let f = field_tensor(&h, &[0.1, 0.2], 1e-4, 1e-9, ConnectionPart::Full).unwrap();
    assert!(f.get(0, 1).norm() < 1e-8);
}

#[test]
fn gauge_transformation_identity_and_constant() {
    let h = random_family(1);
    let a = connection(&h, &[0.3, 0.7], 1e-4, 1e-9).unwrap();
    let same = gauge_transform_connection(&a, |_| CMat::identity(3, 3), 1e-4).unwrap();
    for (u, v) in same.a.iter().zip(&a.a) {
        assert!((u - v).norm() < 1e-15);
    }
    let [_, sy, _] = pauli();
    let mut u = CMat::identity(3, 3);
    u.view_mut((0, 0), (2, 2)).copy_from(&expm(&(sy * c(0.0, 0.8))));
    let u2 = u.clone();
    let rotated = gauge_transform_connection(&a, move |_| u2.clone(), 1e-4).unwrap();
    for (got, orig) in rotated.a.iter().zip(&a.a) {
        assert!((got - &u * orig * u.adjoint()).norm() < 1e-14);
    }
    assert!(gauge_transform_connection(&a, |_| CMat::identity(3, 3) * r(1.1), 1e-4).is_err());
}

#[test]
fn near_degenerate_connection_is_rejected() {
    let [sx, _, sz] = pauli();
    let h = ParameterizedHamiltonian::new(2, 1, move |x| &sz * r(x[0]) + &sx * r(1e-9));
    assert!(matches!(connection(&h, &[0.0], 1e-4, 1e-6), Err(prodint::PiError::NearDegeneracy { .. })));
    assert!(connection(&h, &[1.0], 0.0, 1e-6).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn connection_is_hermitian_and_splits_exactly(seed in 0u64..500, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let h = random_family(seed);
        let a = connection(&h, &[x, y], 1e-4, 1e-6).unwrap();
        prop_assert!(hermiticity_defect(&a.a) <= 1e-8);
        for m in 0..2 {
            prop_assert_eq!(&a.a[m], &(&a.split_diag[m] + &a.split_offdiag[m]));
        }
    }

    #[test]
    fn dynamical_part_matches_off_diagonal_connection(seed in 0u64..500, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let h = random_family(seed);
        let a = connection(&h, &[x, y], 1e-4, 1e-6).unwrap();
        let sf = spectral_frame(&h, &[x, y], 1e-6).unwrap();
        prop_assume!(sf.gap > 0.1);
        let dynamical = a.dynamical_part.as_ref().unwrap();
        for m in 0..2 {
            prop_assert!((&a.split_offdiag[m] - &dynamical[m]).norm() <= 1e-6);
        }
    }

    #[test]
    fn real_symmetric_families_have_no_diagonal_connection(seed in 0u64..500, x in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_hermitian(&mut rng, 3, 0.5).map(|z| r(z.re));
        let h = ParameterizedHamiltonian::scalar(3, move |t| diag_real(&[-1.0, 0.5, 2.0]) + &k * r(t));
        let a = connection(&h, &[x], 1e-4, 1e-6).unwrap();
        prop_assert!(a.split_diag[0].norm() <= 1e-8);
    }

    #[test]
    fn field_tensor_is_covariant(seed in 0u64..500, x in -0.5f64..0.5, y in -0.5f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = [random_hermitian(&mut rng, 3, 0.5), random_hermitian(&mut rng, 3, 0.5)];
        let u = move |p: &[f64]| expm(&((&g[0] * r(p[0]) + &g[1] * r(p[0] * p[1] + p[1])) * I));
        let a = prodint::holonomy::synthetic_connection();
        let defect = |h_step: f64| {
            let f = curvature(&a, &[x, y], h_step).unwrap();
            let at = gauge_transform_field(&a, u.clone(), h_step);
            let ft = curvature(&at, &[x, y], h_step).unwrap();
            let u0 = u(&[x, y]);
            assert_eq!(ft.get(1, 0), &(-ft.get(0, 1)));
            (ft.get(0, 1) - &u0 * f.get(0, 1) * u0.adjoint()).norm()
        };
        let (coarse, fine) = (defect(1e-2), defect(5e-3));
        prop_assert!(coarse <= 10.0 * 1e-4, "{coarse:e}");
        // A convention error would leave an O(1) residue; truncation error quarters.
        prop_assert!(fine < 0.3 * coarse || fine < 1e-9, "{coarse:e} -> {fine:e}");
    }
}
