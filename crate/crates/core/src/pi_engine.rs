//! Product integrals of matrix-valued generator fields.
//!
//! Ordering convention: along a path `s_0 → s_n` the factor belonging to a
//! later parameter multiplies on the left, so the result composes like an
//! evolution operator, `U(s_n, s_0) = U(s_n, s_k) U(s_k, s_0)`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{contract, PiError, Result};
use crate::linalg::{commutator, expm, eye, inverse_checked, is_finite, r, CMat};
use crate::path::{PathDiscretization, Point};

/// Condition number above which a frame or propagator is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

type RealFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;
type ComplexFn = Arc<dyn Fn(Complex64) -> CMat + Send + Sync>;
type FormFn = Arc<dyn Fn(&[f64]) -> Vec<CMat> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    RealInterval,
    ComplexContour,
    MultiparameterPath,
}

#[derive(Clone)]
enum FieldFn {
    Real(RealFn),
    Complex(ComplexFn),
    OneForm { params: usize, f: FormFn },
}

/// A d×d matrix-valued function of a real or complex parameter, or a
/// matrix-valued one-form `Σ_m A_m(R) dR_m` on a real parameter space.
#[derive(Clone)]
pub struct GeneratorField {
    dim: usize,
    f: FieldFn,
}

impl std::fmt::Debug for GeneratorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorField")
            .field("dim", &self.dim)
            .field("domain_kind", &self.domain_kind())
            .finish()
    }
}

impl GeneratorField {
    pub fn real(dim: usize, f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        Self { dim, f: FieldFn::Real(Arc::new(f)) }
    }

    /// A field of a complex parameter. It also accepts real paths.
    pub fn complex(dim: usize, f: impl Fn(Complex64) -> CMat + Send + Sync + 'static) -> Self {
        Self { dim, f: FieldFn::Complex(Arc::new(f)) }
    }

    /// A one-form on a `params`-dimensional space; `f(R)` returns one matrix per direction.
    pub fn one_form(
        dim: usize,
        params: usize,
        f: impl Fn(&[f64]) -> Vec<CMat> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, f: FieldFn::OneForm { params, f: Arc::new(f) } }
    }

    pub fn constant(m: CMat) -> Self {
        let dim = m.nrows();
        Self::real(dim, move |_| m.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of parameter directions: 1 for scalar fields.
    pub fn params(&self) -> usize {
        match &self.f {
            FieldFn::OneForm { params, .. } => *params,
            _ => 1,
        }
    }

    pub fn domain_kind(&self) -> DomainKind {
        match self.f {
            FieldFn::Real(_) => DomainKind::RealInterval,
            FieldFn::Complex(_) => DomainKind::ComplexContour,
            FieldFn::OneForm { .. } => DomainKind::MultiparameterPath,
        }
    }

    /// Value at a scalar parameter. One-forms have no scalar value.
    pub fn eval(&self, p: &Point) -> Result<CMat> {
        let m = match (&self.f, p) {
            (FieldFn::Real(f), Point::Real(t)) => f(*t),
            (FieldFn::Complex(f), Point::Real(t)) => f(Complex64::new(*t, 0.0)),
            (FieldFn::Complex(f), Point::Complex(z)) => f(*z),
            _ => return contract(format!("{:?} field cannot be evaluated at {p:?}", self.domain_kind())),
        };
        self.check(m, p)
    }

    /// Components `A_m(R)` of a one-form.
    pub fn eval_form(&self, x: &[f64]) -> Result<Vec<CMat>> {
        let FieldFn::OneForm { params, f } = &self.f else {
            return contract("eval_form needs a one-form field");
        };
        if x.len() != *params {
            return Err(PiError::DimensionMismatch { expected: *params, found: x.len() });
        }
        let comps = f(x);
        if comps.len() != *params {
            return Err(PiError::DimensionMismatch { expected: *params, found: comps.len() });
        }
        let at = Point::Vector(x.to_vec());
        comps.into_iter().map(|m| self.check(m, &at)).collect()
    }

    fn check(&self, m: CMat, at: &Point) -> Result<CMat> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(PiError::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        if !is_finite(&m) {
            return Err(PiError::NonFinite { at: format!("{at:?}") });
        }
        Ok(m)
    }

    /// Generator density at `at` for the straight segment `a → b`, i.e.
    /// `O(at)·(b − a)` or `Σ_m A_m(at)(b_m − a_m)`.
    pub fn density(&self, at: &Point, a: &Point, b: &Point) -> Result<CMat> {
        match &self.f {
            FieldFn::OneForm { .. } => {
                let (Some(x), Some(xa), Some(xb)) = (at.as_vector(), a.as_vector(), b.as_vector()) else {
                    return contract("one-form fields need vector paths");
                };
                let comps = self.eval_form(x)?;
                let mut out = CMat::zeros(self.dim, self.dim);
                for (m, comp) in comps.iter().enumerate() {
                    out += comp * r(xb[m] - xa[m]);
                }
                Ok(out)
            }
            _ => {
                let (Some(za), Some(zb)) = (a.as_complex(), b.as_complex()) else {
                    return contract("scalar fields need scalar paths");
                };
                Ok(self.eval(at)? * (zb - za))
            }
        }
    }

    /// Midpoint increment `O(mid)·Δ` of a single step.
    pub fn increment(&self, a: &Point, b: &Point) -> Result<CMat> {
        self.density(&a.lerp(b, 0.5), a, b)
    }

    /// Pointwise sum of two fields of the same kind and dimension.
    pub fn add(&self, other: &GeneratorField) -> Result<GeneratorField> {
        if self.dim != other.dim {
            return Err(PiError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let f = match (&self.f, &other.f) {
            (FieldFn::Real(a), FieldFn::Real(b)) => {
                let (a, b) = (a.clone(), b.clone());
                FieldFn::Real(Arc::new(move |t| a(t) + b(t)))
            }
            (FieldFn::Complex(a), FieldFn::Complex(b)) => {
                let (a, b) = (a.clone(), b.clone());
                FieldFn::Complex(Arc::new(move |z| a(z) + b(z)))
            }
            (FieldFn::Real(a), FieldFn::Complex(b)) | (FieldFn::Complex(b), FieldFn::Real(a)) => {
                // Only real arguments are meaningful for the sum.
                let (a, b) = (a.clone(), b.clone());
                FieldFn::Real(Arc::new(move |t| a(t) + b(Complex64::new(t, 0.0))))
            }
            (FieldFn::OneForm { params: p, f: a }, FieldFn::OneForm { params: q, f: b }) if p == q => {
                let (a, b) = (a.clone(), b.clone());
                FieldFn::OneForm {
                    params: *p,
                    f: Arc::new(move |x| a(x).into_iter().zip(b(x)).map(|(u, v)| u + v).collect()),
                }
            }
            _ => return contract("cannot add fields of different domain kinds"),
        };
        Ok(GeneratorField { dim: self.dim, f })
    }

    pub fn scale(&self, s: Complex64) -> GeneratorField {
        let f = match &self.f {
            FieldFn::Real(a) => {
                let a = a.clone();
                FieldFn::Real(Arc::new(move |t| a(t) * s))
            }
            FieldFn::Complex(a) => {
                let a = a.clone();
                FieldFn::Complex(Arc::new(move |z| a(z) * s))
            }
            FieldFn::OneForm { params, f } => {
                let a = f.clone();
                FieldFn::OneForm {
                    params: *params,
                    f: Arc::new(move |x| a(x).into_iter().map(|m| m * s).collect()),
                }
            }
        };
        GeneratorField { dim: self.dim, f }
    }
}

#[derive(Clone, Debug)]
pub struct PIResult {
    pub matrix: CMat,
    pub steps_used: usize,
    pub refinement_error: f64,
}

/// Ordered product `∏ exp(O(t*_k) Δ_k)` with `steps` midpoint sub-steps per path segment.
pub fn ordered_product(gen: &GeneratorField, path: &PathDiscretization, steps: usize) -> Result<CMat> {
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    let mut u = eye(gen.dim());
    for w in path.samples().windows(2) {
        for k in 0..steps {
            let a = w[0].lerp(&w[1], k as f64 / steps as f64);
            let b = w[0].lerp(&w[1], (k + 1) as f64 / steps as f64);
            let step = expm(&gen.increment(&a, &b)?);
            u = step * u;
        }
    }
    if !is_finite(&u) {
        return Err(PiError::NonFinite { at: "accumulated product".into() });
    }
    Ok(u)
}

/// Fourth-order Magnus step `a → b` from the two Gauss-Legendre nodes of the segment.
fn gauss_step(gen: &GeneratorField, a: &Point, b: &Point) -> Result<CMat> {
    let off = 3f64.sqrt() / 6.0;
    let d1 = gen.density(&a.lerp(b, 0.5 - off), a, b)?;
    let d2 = gen.density(&a.lerp(b, 0.5 + off), a, b)?;
    Ok(expm(&((&d1 + &d2) * r(0.5) + commutator(&d2, &d1) * r(3f64.sqrt() / 12.0))))
}

/// Like [`ordered_product`] but with fourth-order Gauss-Magnus factors.
pub fn ordered_product_gauss(gen: &GeneratorField, path: &PathDiscretization, steps: usize) -> Result<CMat> {
    if steps == 0 {
        return contract("steps must be at least 1");
    }
    let mut u = eye(gen.dim());
    for w in path.samples().windows(2) {
        for k in 0..steps {
            let a = w[0].lerp(&w[1], k as f64 / steps as f64);
            let b = w[0].lerp(&w[1], (k + 1) as f64 / steps as f64);
            u = gauss_step(gen, &a, &b)? * u;
        }
    }
    if !is_finite(&u) {
        return Err(PiError::NonFinite { at: "accumulated product".into() });
    }
    Ok(u)
}

/// Strict product integral with a refinement estimate from a run at half the step size.
pub fn strict_pi(gen: &GeneratorField, path: &PathDiscretization, steps: usize) -> Result<PIResult> {
    let coarse = ordered_product(gen, path, steps)?;
    let fine = ordered_product(gen, path, 2 * steps)?;
    Ok(PIResult {
        refinement_error: (&fine - &coarse).norm(),
        steps_used: steps * path.segments(),
        matrix: coarse,
    })
}

/// Generator densities at start, midpoint and end of every path segment,
/// each on the unit segment parameter `s ∈ [0, 1]`.
struct Grid {
    segs: Vec<[CMat; 3]>,
    dim: usize,
}

impl Grid {
    fn new(gen: &GeneratorField, path: &PathDiscretization) -> Result<Self> {
        let samples = path.samples();
        // Raw values at a point: one matrix for scalar fields, one per direction for one-forms.
        let raw = |p: &Point| -> Result<Vec<CMat>> {
            match p {
                Point::Vector(x) => gen.eval_form(x),
                _ => Ok(vec![gen.eval(p)?]),
            }
        };
        let contract_with = |vals: &[CMat], a: &Point, b: &Point| -> CMat {
            match (a, b) {
                (Point::Vector(xa), Point::Vector(xb)) => vals
                    .iter()
                    .enumerate()
                    .fold(CMat::zeros(gen.dim(), gen.dim()), |acc, (m, v)| acc + v * r(xb[m] - xa[m])),
                _ => &vals[0] * (b.as_complex().unwrap() - a.as_complex().unwrap()),
            }
        };
        let mut segs = Vec::with_capacity(path.segments());
        let mut left = raw(&samples[0])?;
        for w in samples.windows(2) {
            let mid = raw(&w[0].lerp(&w[1], 0.5))?;
            let right = raw(&w[1])?;
            segs.push([
                contract_with(&left, &w[0], &w[1]),
                contract_with(&mid, &w[0], &w[1]),
                contract_with(&right, &w[0], &w[1]),
            ]);
            left = right;
        }
        Ok(Self { segs, dim: gen.dim() })
    }

    /// Running integral of a pointwise integrand: Simpson per segment,
    /// with the half-segment value from the quadratic through the three samples.
    fn integrate(&self, f: &[[CMat; 3]]) -> Vec<[CMat; 3]> {
        let mut acc = CMat::zeros(self.dim, self.dim);
        f.iter()
            .map(|[f0, fm, f1]| {
                let start = acc.clone();
                let half = &start + (f0 * r(5.0) + fm * r(8.0) - f1) * r(1.0 / 24.0);
                acc = &start + (f0 + fm * r(4.0) + f1) * r(1.0 / 6.0);
                [start, half, acc.clone()]
            })
            .collect()
    }

    fn map2(&self, a: &[[CMat; 3]], op: impl Fn(&CMat, &CMat) -> CMat) -> Vec<[CMat; 3]> {
        a.iter()
            .zip(&self.segs)
            .map(|(x, g)| [op(&x[0], &g[0]), op(&x[1], &g[1]), op(&x[2], &g[2])])
            .collect()
    }
}

fn end_value(x: &[[CMat; 3]]) -> CMat {
    x.last().unwrap()[2].clone()
}

/// Truncated Dyson series `I + Σ_{n ≤ order} ∫…∫ O(t_n)…O(t_1)` with ordered nested integrals.
pub fn dyson_series(gen: &GeneratorField, path: &PathDiscretization, order: usize) -> Result<CMat> {
    let mut total = eye(gen.dim());
    if order == 0 {
        return Ok(total);
    }
    let grid = Grid::new(gen, path)?;
    let id = eye(gen.dim());
    let mut level: Vec<[CMat; 3]> = grid.segs.iter().map(|_| [id.clone(), id.clone(), id.clone()]).collect();
    for _ in 0..order {
        let integrand = grid.map2(&level, |d, g| g * d);
        level = grid.integrate(&integrand);
        total += end_value(&level);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MagnusVariant {
    /// Third-order term with the two nested-commutator families as printed.
    #[default]
    Printed,
    /// Third-order term including the mixed contributions `[Ω₁,[Ω₂,O]] + [Ω₂,[Ω₁,O]]`.
    Complete,
}

pub const MAX_MAGNUS_ORDER: usize = 3;

#[derive(Clone, Debug)]
pub struct MagnusSeries {
    pub terms: Vec<CMat>,
    pub max_order: usize,
}

impl MagnusSeries {
    pub fn sum(&self) -> CMat {
        let d = self.terms[0].nrows();
        self.terms.iter().fold(CMat::zeros(d, d), |acc, t| acc + t)
    }
}

pub fn magnus_terms(gen: &GeneratorField, path: &PathDiscretization, order: usize) -> Result<MagnusSeries> {
    magnus_terms_with(gen, path, order, MagnusVariant::Printed)
}

/// Magnus terms up to `order` (at most 3) by nested quadrature on the path samples.
pub fn magnus_terms_with(
    gen: &GeneratorField,
    path: &PathDiscretization,
    order: usize,
    variant: MagnusVariant,
) -> Result<MagnusSeries> {
    if order > MAX_MAGNUS_ORDER {
        return Err(PiError::UnsupportedOrder { order, max: MAX_MAGNUS_ORDER });
    }
    let grid = Grid::new(gen, path)?;
    let p1 = grid.integrate(&grid.segs);
    let mut terms = vec![end_value(&p1)];
    if order >= 1 {
        let c1 = grid.integrate(&grid.map2(&p1, commutator));
        terms.push(end_value(&c1) * r(-0.5));
        if order >= 2 {
            let c2a = grid.integrate(&grid.map2(&c1, commutator));
            let pp: Vec<[CMat; 3]> = p1
                .iter()
                .zip(&grid.segs)
                .map(|(p, g)| std::array::from_fn(|i| commutator(&p[i], &commutator(&p[i], &g[i]))))
                .collect();
            let c2b = grid.integrate(&pp);
            terms.push(end_value(&c2a) * r(0.25) + end_value(&c2b) * r(1.0 / 12.0));
            if order >= 3 {
                let integrand: Vec<[CMat; 3]> = (0..grid.segs.len())
                    .map(|k| {
                        std::array::from_fn(|i| {
                            let g = &grid.segs[k][i];
                            let mut v = commutator(&c2a[k][i], g) * r(-1.0 / 8.0)
                                - commutator(&c2b[k][i], g) * r(1.0 / 24.0);
                            if variant == MagnusVariant::Complete {
                                let (p, c) = (&p1[k][i], &c1[k][i]);
                                v -= (commutator(p, &commutator(c, g)) + commutator(c, &commutator(p, g)))
                                    * r(1.0 / 24.0);
                            }
                            v
                        })
                    })
                    .collect();
                terms.push(end_value(&grid.integrate(&integrand)));
            }
        }
    }
    Ok(MagnusSeries { terms, max_order: order })
}

/// `exp(Σ_{k ≤ order} Ω_k)` over the whole path.
pub fn magnus_pi(gen: &GeneratorField, path: &PathDiscretization, order: usize) -> Result<CMat> {
    Ok(expm(&magnus_terms(gen, path, order)?.sum()))
}

/// Piecewise Magnus integrator: one truncated Magnus exponential per path
/// segment, each built on `substeps` quadrature pieces. Evaluates the
/// generator `2·substeps + 1` times per segment.
pub fn magnus_pi_stepped(
    gen: &GeneratorField,
    path: &PathDiscretization,
    order: usize,
    substeps: usize,
) -> Result<CMat> {
    if substeps == 0 {
        return contract("substeps must be at least 1");
    }
    let mut u = eye(gen.dim());
    for w in path.samples().windows(2) {
        let piece = PathDiscretization::new(vec![w[0].clone(), w[1].clone()], false)?.refined(substeps);
        u = magnus_pi(gen, &piece, order)? * u;
    }
    Ok(u)
}

/// Propagator table of `gen_I` together with the interaction-picture generator
/// `t ↦ P(t)⁻¹ gen_II(t) P(t)`.
#[derive(Clone)]
pub struct SumRuleFactor {
    table: Arc<PropagatorTable>,
    pub transformed: GeneratorField,
}

struct PropagatorTable {
    gen: GeneratorField,
    nodes: Vec<f64>,
    values: Vec<CMat>,
}

impl PropagatorTable {
    fn at(&self, t: f64) -> CMat {
        let n = self.nodes.len();
        let increasing = self.nodes[n - 1] > self.nodes[0];
        // Index of the last node not beyond t in path direction.
        let k = self
            .nodes
            .partition_point(|&s| if increasing { s <= t } else { s >= t })
            .clamp(1, n)
            - 1;
        let tk = self.nodes[k];
        if t == tk {
            return self.values[k].clone();
        }
        match gauss_step(&self.gen, &Point::Real(tk), &Point::Real(t)) {
            Ok(g) => g * &self.values[k],
            Err(_) => CMat::from_element(self.values[k].nrows(), self.values[k].ncols(), r(f64::NAN)),
        }
    }
}

impl SumRuleFactor {
    /// `P(t)`: strict product integral of `gen_I` from the path start to `t`.
    pub fn p_at(&self, t: f64) -> CMat {
        self.table.at(t)
    }

    pub fn p_end(&self) -> CMat {
        self.table.values.last().unwrap().clone()
    }
}

/// Factor `gen_I` out of `gen_I + gen_II` along a monotone real path.
///
/// The propagator is tabulated at the path samples (one fourth-order Magnus
/// step per segment) and extended between samples by one more such step.
pub fn sum_rule_factor(
    gen_i: &GeneratorField,
    gen_ii: &GeneratorField,
    path: &PathDiscretization,
) -> Result<SumRuleFactor> {
    if gen_i.dim() != gen_ii.dim() {
        return Err(PiError::DimensionMismatch { expected: gen_i.dim(), found: gen_ii.dim() });
    }
    let Some(nodes) = path.real_samples() else {
        return contract("sum rule factoring needs a real interval path");
    };
    let increasing = nodes[1] > nodes[0];
    if nodes.windows(2).any(|w| (w[1] > w[0]) != increasing) {
        return contract("sum rule factoring needs a monotone path");
    }
    let mut values = vec![eye(gen_i.dim())];
    for (k, w) in nodes.windows(2).enumerate() {
        let p = gauss_step(gen_i, &Point::Real(w[0]), &Point::Real(w[1]))? * &values[k];
        inverse_checked(&p, MAX_CONDITION)?;
        values.push(p);
    }
    let table = Arc::new(PropagatorTable { gen: gen_i.clone(), nodes, values });
    let t2 = table.clone();
    let gen_ii = gen_ii.clone();
    let dim = gen_i.dim();
    let transformed = GeneratorField::real(dim, move |t| {
        let p = t2.at(t);
        let o = match gen_ii.eval(&Point::Real(t)) {
            Ok(o) => o,
            Err(_) => return CMat::from_element(dim, dim, r(f64::NAN)),
        };
        match p.clone().lu().solve(&(o * &p)) {
            Some(m) => m,
            None => CMat::from_element(dim, dim, r(f64::NAN)),
        }
    });
    Ok(SumRuleFactor { table, transformed })
}

/// Gauge transform `t ↦ M⁻¹ O M − M⁻¹ Ṁ` of a real-parameter generator.
///
/// Invertibility of the frame is checked at every path sample.
pub fn similarity_transform(
    gen: &GeneratorField,
    frame: impl Fn(f64) -> CMat + Send + Sync + 'static,
    frame_derivative: impl Fn(f64) -> CMat + Send + Sync + 'static,
    path: &PathDiscretization,
) -> Result<GeneratorField> {
    let Some(ts) = path.real_samples() else {
        return contract("similarity transform needs a real interval path");
    };
    for &t in &ts {
        let m = frame(t);
        if m.nrows() != gen.dim() {
            return Err(PiError::DimensionMismatch { expected: gen.dim(), found: m.nrows() });
        }
        inverse_checked(&m, MAX_CONDITION)?;
    }
    let gen = gen.clone();
    let dim = gen.dim();
    Ok(GeneratorField::real(dim, move |t| {
        let m = frame(t);
        let o = match gen.eval(&Point::Real(t)) {
            Ok(o) => o,
            Err(_) => return CMat::from_element(dim, dim, r(f64::NAN)),
        };
        let rhs = o * &m - frame_derivative(t);
        m.lu().solve(&rhs).unwrap_or_else(|| CMat::from_element(dim, dim, r(f64::NAN)))
    }))
}
