//! Ordered parameter samples along which product integrals are taken.

use num_complex::Complex64;

use crate::error::{contract, Result};

/// A single parameter value: a real time, a complex time, or a point in a
/// real parameter space.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Real(f64),
    Complex(Complex64),
    Vector(Vec<f64>),
}

impl Point {
    pub fn as_complex(&self) -> Option<Complex64> {
        match self {
            Point::Real(t) => Some(Complex64::new(*t, 0.0)),
            Point::Complex(z) => Some(*z),
            Point::Vector(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Point::Real(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Point::Vector(v) => Some(v),
            _ => None,
        }
    }

    /// Affine interpolation `self + s (other - self)`; both points must be of the same kind.
    pub fn lerp(&self, other: &Point, s: f64) -> Point {
        match (self, other) {
            (Point::Real(a), Point::Real(b)) => Point::Real(a + s * (b - a)),
            (Point::Vector(a), Point::Vector(b)) => {
                Point::Vector(a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect())
            }
            _ => {
                let a = self.as_complex().expect("scalar point");
                let b = other.as_complex().expect("scalar point");
                Point::Complex(a + (b - a) * s)
            }
        }
    }

    fn same_kind(&self, other: &Point) -> bool {
        match (self, other) {
            (Point::Real(_), Point::Real(_)) | (Point::Complex(_), Point::Complex(_)) => true,
            (Point::Vector(a), Point::Vector(b)) => a.len() == b.len(),
            _ => false,
        }
    }
}

/// Ordered samples `s_0, s_1, …, s_n` with a loop flag.
///
/// Invariants: at least two samples, consecutive samples distinct, all of
/// the same kind, and `s_0 == s_n` exactly when the path is closed.
#[derive(Clone, Debug, PartialEq)]
pub struct PathDiscretization {
    samples: Vec<Point>,
    closed: bool,
}

impl PathDiscretization {
    pub fn new(samples: Vec<Point>, closed: bool) -> Result<Self> {
        if samples.len() < 2 {
            return contract("a path needs at least two samples");
        }
        for (k, w) in samples.windows(2).enumerate() {
            if !w[0].same_kind(&w[1]) {
                return contract(format!("sample {} differs in kind from its predecessor", k + 1));
            }
            if w[0] == w[1] {
                return contract(format!("samples {k} and {} coincide", k + 1));
            }
        }
        if closed && samples.first() != samples.last() {
            return contract("closed path must end exactly at its first sample");
        }
        Ok(Self { samples, closed })
    }

    pub fn real(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples.into_iter().map(Point::Real).collect(), false)
    }

    /// The two-sample interval `[a, b]`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::real(vec![a, b])
    }

    /// `[a, b]` split into `steps` equal pieces.
    pub fn uniform(a: f64, b: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return contract("uniform path needs at least one step");
        }
        let h = (b - a) / steps as f64;
        let mut samples: Vec<f64> = (0..steps).map(|k| a + h * k as f64).collect();
        samples.push(b);
        Self::real(samples)
    }

    pub fn complex(samples: Vec<Complex64>, closed: bool) -> Result<Self> {
        Self::new(samples.into_iter().map(Point::Complex).collect(), closed)
    }

    /// Straight complex segment from `a` to `b` with `steps` pieces.
    pub fn complex_segment(a: Complex64, b: Complex64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return contract("segment needs at least one step");
        }
        let mut samples: Vec<Complex64> =
            (0..steps).map(|k| a + (b - a) * (k as f64 / steps as f64)).collect();
        samples.push(b);
        Self::complex(samples, false)
    }

    /// Complex polyline through `vertices`, each edge split into `steps_per_edge` pieces.
    pub fn complex_polyline(vertices: &[Complex64], steps_per_edge: usize) -> Result<Self> {
        if vertices.len() < 2 || steps_per_edge == 0 {
            return contract("polyline needs two vertices and at least one step per edge");
        }
        let mut samples = Vec::new();
        for w in vertices.windows(2) {
            for k in 0..steps_per_edge {
                samples.push(w[0] + (w[1] - w[0]) * (k as f64 / steps_per_edge as f64));
            }
        }
        samples.push(*vertices.last().unwrap());
        let closed = vertices.first() == vertices.last();
        if closed {
            *samples.last_mut().unwrap() = samples[0];
        }
        Self::complex(samples, closed)
    }

    /// Circle about `center` starting at angle `start_angle`, traversed
    /// `turns` times (negative turns run clockwise). Closed by construction.
    pub fn circle(
        center: Complex64,
        radius: f64,
        start_angle: f64,
        turns: i32,
        steps_per_turn: usize,
    ) -> Result<Self> {
        if turns == 0 || radius <= 0.0 || steps_per_turn < 3 {
            return contract("circle needs nonzero turns, positive radius and at least 3 steps per turn");
        }
        let total = steps_per_turn * turns.unsigned_abs() as usize;
        let dir = turns.signum() as f64;
        let mut samples: Vec<Complex64> = (0..total)
            .map(|k| {
                let theta = start_angle + dir * std::f64::consts::TAU * k as f64 / steps_per_turn as f64;
                center + Complex64::from_polar(radius, theta)
            })
            .collect();
        samples.push(samples[0]);
        Self::complex(samples, true)
    }

    pub fn vector(samples: Vec<Vec<f64>>, closed: bool) -> Result<Self> {
        Self::new(samples.into_iter().map(Point::Vector).collect(), closed)
    }

    /// Closed loop `s ↦ curve(s)` for `s ∈ [0, 1)`, sampled at `steps` points.
    pub fn vector_loop(curve: impl Fn(f64) -> Vec<f64>, steps: usize) -> Result<Self> {
        if steps < 3 {
            return contract("loop needs at least 3 steps");
        }
        let mut samples: Vec<Vec<f64>> = (0..steps).map(|k| curve(k as f64 / steps as f64)).collect();
        samples.push(samples[0].clone());
        Self::vector(samples, true)
    }

    pub fn samples(&self) -> &[Point] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn start(&self) -> &Point {
        &self.samples[0]
    }

    pub fn end(&self) -> &Point {
        self.samples.last().unwrap()
    }

    /// Real sample values; `None` unless every sample is real.
    pub fn real_samples(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(Point::as_real).collect()
    }

    /// Same points traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self { samples, closed: self.closed }
    }

    /// Every segment split into `pieces` equal sub-segments.
    pub fn refined(&self, pieces: usize) -> Self {
        if pieces <= 1 {
            return self.clone();
        }
        let mut samples = Vec::with_capacity(self.segments() * pieces + 1);
        for w in self.samples.windows(2) {
            for k in 0..pieces {
                samples.push(w[0].lerp(&w[1], k as f64 / pieces as f64));
            }
        }
        samples.push(self.end().clone());
        Self { samples, closed: self.closed }
    }

    /// This path followed by `next`; `next` must start where this one ends.
    pub fn then(&self, next: &PathDiscretization) -> Result<Self> {
        if self.end() != next.start() {
            return contract("concatenated paths must share the junction sample");
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&next.samples[1..]);
        let closed = samples.first() == samples.last();
        Self::new(samples, closed)
    }

    /// Rotate a closed path so that it starts at sample `k`.
    pub fn rebased(&self, k: usize) -> Result<Self> {
        if !self.closed {
            return contract("only closed paths can be rebased");
        }
        let n = self.segments();
        let mut samples: Vec<Point> = (0..n).map(|j| self.samples[(k + j) % n].clone()).collect();
        samples.push(samples[0].clone());
        Self::new(samples, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_paths() {
        assert!(PathDiscretization::real(vec![0.0]).is_err());
        assert!(PathDiscretization::real(vec![0.0, 0.0, 1.0]).is_err());
        assert!(PathDiscretization::vector(vec![vec![0.0], vec![1.0]], true).is_err());
        assert!(PathDiscretization::new(vec![Point::Real(0.0), Point::Complex(Complex64::new(1.0, 0.0))], false).is_err());
    }

    #[test]
    fn circle_closes_exactly() {
        let p = PathDiscretization::circle(Complex64::new(0.0, 1.0), 0.5, 0.3, 2, 16).unwrap();
        assert!(p.is_closed());
        assert_eq!(p.segments(), 32);
        assert_eq!(p.start(), p.end());
    }

    #[test]
    fn refinement_and_concatenation() {
        let p = PathDiscretization::interval(0.0, 1.0).unwrap().refined(4);
        assert_eq!(p.real_samples().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let q = PathDiscretization::interval(1.0, 2.0).unwrap();
        assert_eq!(p.then(&q).unwrap().segments(), 5);
        assert!(q.then(&p).is_err());
    }

    #[test]
    fn rebasing_keeps_loop_closed() {
        let p = PathDiscretization::vector_loop(|s| vec![s.cos(), s.sin()], 8).unwrap();
        let q = p.rebased(3).unwrap();
        assert_eq!(q.start(), &p.samples()[3]);
        assert!(q.is_closed());
    }
}
