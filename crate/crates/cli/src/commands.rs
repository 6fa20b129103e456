use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use prodint::contour_dykhne::{find_degeneracy, landau_zener, lz_transition, residue_factor, EffectiveGenerator};
use prodint::cumulant::kernel_effective_action;
use prodint::holonomy::{berry_phase, loop_holonomy, schlesinger_surface, synthetic_connection, wrap_phase, LoopSpec, SurfaceMap};
use prodint::linalg::{c, eigenvalues, hermitian_eigh, pauli, r, CMat};
use prodint::oscillator_model::{build_truncation, OscillatorConfig, Trajectory};
use prodint::pi_engine::{dyson_series, magnus_pi_stepped, ordered_product, ordered_product_gauss};
use prodint::spectral_geometry::{connection_one_form, curvature, spin_half_field, ConnectionPart, ParameterizedHamiltonian};
use prodint::superadiabatic::{evolve_exact, superadiabatic_state, two_level_model, AdiabaticProblem, SuperadiabaticForm};
use prodint::{GeneratorField, PathDiscretization, Result};

use crate::config::*;
use crate::output::{Cell, Table};

pub fn run(config: &RunConfig) -> Result<Table> {
    match config.command.expect("resolved config") {
        Command::Evolve => evolve(config.evolve.as_ref().unwrap()),
        Command::Holonomy => holonomy(config.holonomy.as_ref().unwrap()),
        Command::BerrySweep => berry_sweep(config.berry_sweep.as_ref().unwrap()),
        Command::StokesCheck => stokes_check(config.stokes_check.as_ref().unwrap()),
        Command::Superadiabatic => superadiabatic(config.superadiabatic.as_ref().unwrap()),
        Command::Dykhne => dykhne(config.dykhne.as_ref().unwrap()),
        Command::Oscillator => oscillator(config.oscillator.as_ref().unwrap()),
        Command::MagnusBench => magnus_bench(config.magnus_bench.as_ref().unwrap(), config.seed),
    }
}

fn spectral_radius(h: &ParameterizedHamiltonian, t: f64) -> Result<f64> {
    let (e, _) = hermitian_eigh(&h.eval_scalar(t)?);
    Ok(e.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn evolve(p: &EvolveParams) -> Result<Table> {
    let h = match p.model {
        EvolveModel::LandauZener => landau_zener(p.delta).on_real_axis(),
        EvolveModel::TwoLevel => two_level_model(),
    };
    let taus: Vec<f64> = (0..p.samples).map(|k| p.tau0 + (p.tau1 - p.tau0) * k as f64 / (p.samples - 1) as f64).collect();
    let mut psi = AdiabaticProblem::in_level(h.clone(), p.epsilon, (p.tau0, p.tau1), 0)?.initial_state;
    let mut table = Table::new(&["tau", "psi0_re", "psi0_im", "psi1_re", "psi1_im", "p_upper"]);
    for (k, &tau) in taus.iter().enumerate() {
        if k > 0 {
            let a = taus[k - 1];
            let rho = [a, 0.5 * (a + tau), tau].iter().map(|&t| spectral_radius(&h, t)).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
            let steps = ((rho * (tau - a) / (p.epsilon * p.max_step_norm)).ceil() as usize).max(1);
            psi = evolve_exact(&AdiabaticProblem::new(h.clone(), p.epsilon, (a, tau), psi)?, steps)?;
        }
        let (_, v) = hermitian_eigh(&h.eval_scalar(tau)?);
        let upper = (v.column(1).adjoint() * &psi)[(0, 0)].norm_sqr();
        table.push(vec![tau.into(), psi[0].re.into(), psi[0].im.into(), psi[1].re.into(), psi[1].im.into(), upper.into()]);
    }
    Ok(table)
}

const NORTH: [f64; 3] = [0.0, 0.0, 1.0];

fn spin_connection() -> Result<GeneratorField> {
    connection_one_form(&spin_half_field(), &NORTH, ConnectionPart::Diagonal, 1e-4, 1e-9)
}

fn holonomy(p: &HolonomyParams) -> Result<Table> {
    let a = spin_connection()?;
    let lp = LoopSpec::latitude(p.theta, 0.0, p.steps)?;
    let cap = SurfaceMap::spherical_cap(p.theta, p.surface_cells, p.surface_cells)?;
    let f = |x: &[f64]| curvature(&a, x, 1e-3);
    let surface = schlesinger_surface(&a, &f, &cap, Some(&lp))?.abelian_phases.unwrap_or_default();
    let solid = PI * (1.0 - p.theta.cos());
    let mut table = Table::new(&["level", "line_phase", "surface_phase", "closed_form"]);
    for level in 0..2 {
        let closed = wrap_phase(if level == 0 { -solid } else { solid });
        let s = surface.get(level).copied().unwrap_or(f64::NAN);
        table.push(vec![level.into(), berry_phase(&a, &lp, level)?.into(), s.into(), closed.into()]);
    }
    Ok(table)
}

fn berry_sweep(p: &BerrySweepParams) -> Result<Table> {
    let a = spin_connection()?;
    let rows: Vec<Vec<Cell>> = p
        .thetas
        .par_iter()
        .map(|&theta| -> Result<Vec<Cell>> {
            let lp = LoopSpec::latitude(theta, 0.0, p.steps)?;
            let closed = wrap_phase(-PI * (1.0 - theta.cos()));
            Ok(vec![theta.into(), berry_phase(&a, &lp, 0)?.into(), berry_phase(&a, &lp, 1)?.into(), closed.into()])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["theta", "phase_lower", "phase_upper", "closed_form_lower"]);
    rows.into_iter().for_each(|row| table.push(row));
    Ok(table)
}

fn stokes_check(p: &StokesParams) -> Result<Table> {
    let a = synthetic_connection();
    let rect = |n: usize| SurfaceMap::rectangle((p.xi[0], p.xi[1]), (p.eta[0], p.eta[1]), n, n);
    let lp = rect(p.grids[0])?.boundary_loop(p.loop_steps)?;
    let line = loop_holonomy(&a, &lp, 4)?.matrix;
    let rows: Vec<Vec<Cell>> = p
        .grids
        .par_iter()
        .map(|&n| -> Result<Vec<Cell>> {
            let f = |x: &[f64]| curvature(&a, x, p.fd_step);
            let surf = schlesinger_surface(&a, &f, &rect(n)?, Some(&lp))?.matrix;
            Ok(vec![n.into(), (surf - &line).norm().into()])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["grid", "error"]);
    rows.into_iter().for_each(|row| table.push(row));
    Ok(table)
}

fn superadiabatic(p: &SuperadiabaticParams) -> Result<Table> {
    let form = match p.form {
        Form::TExponential => SuperadiabaticForm::TExponential,
        Form::Exponential => SuperadiabaticForm::Exponential,
    };
    let blocks: Vec<Vec<Vec<Cell>>> = p
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<Vec<Vec<Cell>>> {
            let problem = AdiabaticProblem::in_level(two_level_model(), eps, (0.0, 1.0), 0)?;
            let exact = evolve_exact(&problem, (400.0 / eps).ceil() as usize)?;
            p.orders
                .iter()
                .map(|&n| Ok(vec![eps.into(), n.into(), (superadiabatic_state(&problem, n, form)? - &exact).norm().into()]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["epsilon", "order", "error"]);
    blocks.into_iter().flatten().for_each(|row| table.push(row));
    Ok(table)
}

fn dykhne(p: &DykhneParams) -> Result<Table> {
    let rows: Vec<Vec<Cell>> = p
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<Vec<Cell>> {
            let prob = lz_transition(eps, p.delta, (-p.span, p.span))?;
            let closed = (-PI * p.delta * p.delta / (2.0 * eps)).exp();
            let mut row: Vec<Cell> = vec![eps.into(), prob.into(), (-eps * prob.ln()).into(), closed.into()];
            if p.residue {
                let fam = landau_zener(p.delta);
                let z0 = find_degeneracy(&fam, c(0.3, 0.8 * p.delta))?;
                let gen = EffectiveGenerator::adiabatic(fam, eps)?.avoiding(&z0.points(), 0.05 * p.delta);
                let f = residue_factor(&gen, &z0, 1)?;
                let lead = eigenvalues(&f).iter().map(|v| v.norm()).fold(0.0, f64::max);
                // The factor acts on amplitudes; twice its exponent compares with −ε ln p.
                row.push((2.0 * eps * lead.ln()).into());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut table = if p.residue {
        Table::new(&["epsilon", "probability", "exponent", "closed_form", "residue_exponent"])
    } else {
        Table::new(&["epsilon", "probability", "exponent", "closed_form"])
    };
    rows.into_iter().for_each(|row| table.push(row));
    Ok(table)
}

fn oscillator(p: &OscillatorParams) -> Result<Table> {
    let (w0, k) = (p.omega0, p.rate);
    let trunc = build_truncation(p.dim)?;
    let cfg = match p.profile {
        Profile::Linear => OscillatorConfig::new(p.mass, p.energy, trunc, move |x| w0 + k * x, move |_| k)?,
        Profile::Exponential => OscillatorConfig::new(p.mass, p.energy, trunc, move |x| w0 * (k * x).exp(), move |x| w0 * k * (k * x).exp())?,
    };
    let stiff = p.stiffness;
    let cfg = cfg.with_potential(move |x| 0.5 * stiff * x * x);
    let traj = Trajectory::uniform_motion(p.x0, p.velocity, 0.0, p.duration, p.samples)?;
    let s = kernel_effective_action(&cfg, &traj, p.magnus_order)?;
    let mut table = Table::new(&["mode", "base", "gauge", "correction_re", "correction_im", "total_re", "total_im"]);
    for j in 0..p.modes {
        let total = s.total(j);
        table.push(vec![
            j.into(),
            s.base[j].into(),
            s.gauge[j].into(),
            s.correction[j].re.into(),
            s.correction[j].im.into(),
            total.re.into(),
            total.im.into(),
        ]);
    }
    Ok(table)
}

type Field = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

fn bench_field(p: &MagnusBenchParams, seed: u64) -> Result<(usize, Field)> {
    let mi = c(0.0, -1.0);
    Ok(match p.model {
        BenchModel::Constant => {
            let [sx, _, sz] = pauli();
            let g = (&sz * r(0.7) + &sx * r(0.3)) * mi;
            (2, Arc::new(move |_| g.clone()))
        }
        BenchModel::TwoLevel => {
            let h = two_level_model();
            let s = mi / p.epsilon;
            (2, Arc::new(move |t| h.eval_scalar(t).map(|m| m * s).unwrap_or_else(|_| CMat::from_element(2, 2, r(f64::NAN)))))
        }
        BenchModel::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 4;
            let mut herm = || {
                let m = CMat::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                (&m + m.adjoint()) * r(0.5 / p.epsilon / d as f64)
            };
            let (a, b, cc) = (herm(), herm(), herm());
            (d, Arc::new(move |t| (&a + &b * r(t) + &cc * r((3.0 * t).sin())) * mi))
        }
    })
}

const REFERENCE_STEPS: usize = 4096;

/// Order-4 Dyson factor per step, later factors on the left.
fn stepped_dyson(gen: &GeneratorField, steps: usize) -> Result<CMat> {
    let mut total = CMat::identity(gen.dim(), gen.dim());
    for k in 0..steps {
        let (a, b) = (k as f64 / steps as f64, (k + 1) as f64 / steps as f64);
        total = dyson_series(gen, &PathDiscretization::uniform(a, b, 1)?, 4)? * total;
    }
    Ok(total)
}

fn magnus_bench(p: &MagnusBenchParams, seed: u64) -> Result<Table> {
    let (d, field) = bench_field(p, seed)?;
    let plain = {
        let f = field.clone();
        GeneratorField::real(d, move |t| f(t))
    };
    let reference = ordered_product_gauss(&plain, &PathDiscretization::uniform(0.0, 1.0, REFERENCE_STEPS)?, 1)?;
    let cases: Vec<(Method, usize)> = p.methods.iter().flat_map(|&m| p.steps.iter().map(move |&s| (m, s))).collect();
    let rows: Vec<Vec<Cell>> = cases
        .par_iter()
        .map(|&(method, steps)| -> Result<Vec<Cell>> {
            let count = Arc::new(AtomicUsize::new(0));
            let (f, n) = (field.clone(), count.clone());
            let gen = GeneratorField::real(d, move |t| {
                n.fetch_add(1, Ordering::Relaxed);
                f(t)
            });
            let path = PathDiscretization::uniform(0.0, 1.0, steps)?;
            let start = Instant::now();
            let (name, m) = match method {
                Method::Strict => ("strict", ordered_product(&gen, &path, 1)?),
                Method::Dyson => ("dyson", stepped_dyson(&gen, steps)?),
                Method::Magnus => ("magnus", magnus_pi_stepped(&gen, &path, 2, 1)?),
            };
            let wall = start.elapsed().as_secs_f64();
            let mut row: Vec<Cell> = vec![name.into(), steps.into(), (m - &reference).norm().into(), count.load(Ordering::Relaxed).into()];
            if p.timing {
                row.push(wall.into());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut table = if p.timing {
        Table::new(&["method", "steps", "error", "evaluations", "wall_seconds"])
    } else {
        Table::new(&["method", "steps", "error", "evaluations"])
    };
    rows.into_iter().for_each(|row| table.push(row));
    Ok(table)
}
