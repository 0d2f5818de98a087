use crate::assembly::{assemble, BilinearForm, SpaceSignature};
use crate::calculus::{div, grad, zero_boundary, Sign};
use crate::error::Result;
use crate::field::{dot, GridFunction};
use crate::grid::Grid;
use crate::linalg::{lu_factor, smallest_generalized_eig, DenseMatrix};
use crate::loss::{pressure_deviation, ProblemSystem, SystemInputs};
use crate::spaces::{
    interior_mask, pressure_mask, select_dofs, CompositeFunctionSpace, DofSet, FunctionSpace,
};
use std::f64::consts::PI;

/// A closed-form solution: per part, the value shape and one evaluator per
/// component.
pub struct ExactSolution {
    parts: Vec<(Vec<usize>, Vec<fn(f64, f64) -> f64>)>,
}

impl ExactSolution {
    pub fn new(parts: Vec<(Vec<usize>, Vec<fn(f64, f64) -> f64>)>) -> ExactSolution {
        for (shape, comps) in &parts {
            assert_eq!(shape.iter().product::<usize>(), comps.len());
        }
        ExactSolution { parts }
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn evaluate(&self, part: usize, component: usize, x: f64, y: f64) -> f64 {
        (self.parts[part].1[component])(x, y)
    }

    /// Samples every component at the grid points of the space.
    pub fn tabulate(&self, space: &CompositeFunctionSpace) -> Result<Vec<GridFunction>> {
        assert_eq!(self.parts.len(), space.num_parts());
        let grid = space.grid();
        self.parts
            .iter()
            .map(|(shape, comps)| {
                let fields: Vec<GridFunction> = comps
                    .iter()
                    .map(|f| GridFunction::from_fn(grid, f))
                    .collect();
                let mut combined = GridFunction::from_components(&fields);
                combined.reshape(shape)?;
                Ok(combined)
            })
            .collect()
    }
}

pub fn laplace_solution(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (3.0 * PI * y).sin()
}

pub fn laplace_forcing(x: f64, y: f64) -> f64 {
    10.0 * PI * PI * laplace_solution(x, y)
}

pub fn stokes_u1(x: f64, y: f64) -> f64 {
    2.0 * x.exp() * (x - 1.0).powi(2) * x * x * y * (y - 1.0) * (2.0 * y - 1.0)
}

pub fn stokes_u2(x: f64, y: f64) -> f64 {
    -x.exp() * (x - 1.0) * x * (x * x + 3.0 * x - 2.0) * (y - 1.0).powi(2) * y * y
}

pub fn stokes_p(x: f64, y: f64) -> f64 {
    -424.0
        + 156.0 * std::f64::consts::E
        + y * (y - 1.0)
            * (-456.0
                + x.exp()
                    * (456.0
                        + x * x * (228.0 - 5.0 * y * y + 5.0 * y)
                        + 2.0 * x * (y * y - y - 228.0)
                        + 2.0 * x.powi(3) * (y * y - y - 36.0)
                        + x.powi(4) * (y * y - y + 12.0)))
}

/// First forcing component, the x-momentum of the manufactured flow.
pub fn stokes_f1(x: f64, y: f64) -> f64 {
    let a = x.powi(4) * (y.powi(4) - 6.0 * y.powi(3) + 19.0 * y * y - 38.0 * y + 12.0)
        + x.powi(3) * (6.0 * y.powi(4) - 36.0 * y.powi(3) + 18.0 * y * y + 60.0 * y - 24.0)
        + x * x * (y.powi(4) - 6.0 * y.powi(3) + 19.0 * y * y - 38.0 * y + 12.0)
        + x * (-8.0 * y.powi(4) + 48.0 * y.powi(3) - 56.0 * y * y + 16.0 * y)
        + 2.0 * y.powi(4)
        - 12.0 * y.powi(3)
        + 14.0 * y * y
        - 4.0 * y;
    x.exp() * a
}

/// Second forcing component, the y-momentum of the manufactured flow.
pub fn stokes_f2(x: f64, y: f64) -> f64 {
    let a = x.powi(4) * (y.powi(4) + 2.0 * y.powi(3) + 7.0 * y * y + 14.0 * y - 10.0)
        + x.powi(3) * (10.0 * y.powi(4) - 12.0 * y.powi(3) + 22.0 * y * y - 164.0 * y + 76.0)
        + x * x * (19.0 * y.powi(4) - 58.0 * y.powi(3) - 11.0 * y * y + 506.0 * y - 238.0)
        + x * (-6.0 * y.powi(4) + 20.0 * y.powi(3) + 6.0 * y * y - 932.0 * y + 460.0)
        - 6.0 * y.powi(4)
        + 12.0 * y.powi(3)
        - 6.0 * y * y
        + 912.0 * y
        - 456.0;
    x.exp() * a - 456.0 * (2.0 * y - 1.0)
}

pub fn stokes_s00(x: f64, y: f64) -> f64 {
    2.0 * x.exp()
        * x
        * (x - 1.0)
        * (x * x + 3.0 * x - 2.0)
        * y
        * (y - 1.0)
        * (2.0 * y - 1.0)
}

pub fn stokes_s01(x: f64, y: f64) -> f64 {
    -x.exp()
        * (x.powi(4) + 6.0 * x.powi(3) + x * x - 8.0 * x + 2.0)
        * y
        * y
        * (y - 1.0).powi(2)
}

pub fn stokes_s10(x: f64, y: f64) -> f64 {
    2.0 * x.exp() * x * x * (x - 1.0).powi(2) * (6.0 * y * y - 6.0 * y + 1.0)
}

pub fn stokes_s11(x: f64, y: f64) -> f64 {
    -stokes_s00(x, y)
}

pub fn laplace_exact_solution() -> ExactSolution {
    ExactSolution::new(vec![(vec![], vec![laplace_solution])])
}

pub fn stokes_exact_solution() -> ExactSolution {
    ExactSolution::new(vec![
        (
            vec![2, 2],
            vec![stokes_s00, stokes_s01, stokes_s10, stokes_s11],
        ),
        (vec![2], vec![stokes_u1, stokes_u2]),
        (vec![], vec![stokes_p]),
    ])
}

fn scalar_signature() -> SpaceSignature {
    SpaceSignature::new(&[("u", &[])])
}

fn stokes_signature() -> SpaceSignature {
    SpaceSignature::new(&[("sigma", &[2, 2]), ("u", &[2]), ("p", &[])])
}

fn laplace_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    dot(&grad(&trial[0], Sign::Plus), &grad(&test[0], Sign::Plus))
}

fn laplace_mass_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    dot(&trial[0], &test[0])
}

fn stokes_operator_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    let (sigma, u, p) = (&trial[0], &trial[1], &trial[2]);
    let (tau, v, q) = (&test[0], &test[1], &test[2]);
    let momentum = dot(&(&grad(p, Sign::Plus) - &div(sigma, Sign::Plus)), v);
    let continuity = dot(&div(u, Sign::Minus), q);
    let constitutive = dot(&(sigma - &grad(u, Sign::Minus)), tau);
    &(&momentum + &continuity) + &constitutive
}

fn stokes_mass_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    let (sigma, u, p) = (&trial[0], &trial[1], &trial[2]);
    let (tau, v, q) = (&test[0], &test[1], &test[2]);
    &(&dot(sigma, tau) + &dot(u, v)) + &dot(p, q)
}

fn stokes_gram_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    let (sigma, u, p) = (&trial[0], &trial[1], &trial[2]);
    let (tau, v, q) = (&test[0], &test[1], &test[2]);
    let head_trial = zero_boundary(&(&div(sigma, Sign::Plus) - &grad(p, Sign::Plus)));
    let head_test = zero_boundary(&(&div(tau, Sign::Plus) - &grad(q, Sign::Plus)));
    let momentum = dot(&head_trial, &head_test);
    let continuity = dot(&div(u, Sign::Minus), &div(v, Sign::Minus));
    let constitutive = dot(
        &(sigma + &grad(u, Sign::Minus)),
        &(tau + &grad(v, Sign::Minus)),
    );
    &(&momentum + &continuity) + &constitutive
}

/// Gradient-gradient form of the scalar problem; doubles as its test and
/// trial Gram.
pub fn laplace_form() -> BilinearForm {
    BilinearForm::new(
        "laplace",
        scalar_signature(),
        scalar_signature(),
        laplace_integrand,
    )
    .with_radius(1)
}

pub fn laplace_mass_form() -> BilinearForm {
    BilinearForm::new(
        "laplace-l2",
        scalar_signature(),
        scalar_signature(),
        laplace_mass_integrand,
    )
    .with_radius(0)
}

/// First-order Stokes saddle operator on (stress, velocity, pressure).
pub fn stokes_operator_form() -> BilinearForm {
    BilinearForm::new(
        "stokes",
        stokes_signature(),
        stokes_signature(),
        stokes_operator_integrand,
    )
    .with_radius(1)
}

pub fn stokes_mass_form() -> BilinearForm {
    BilinearForm::new(
        "stokes-l2",
        stokes_signature(),
        stokes_signature(),
        stokes_mass_integrand,
    )
    .with_radius(0)
}

/// Product of operator images, the test-space Gram of the Stokes loss.
pub fn stokes_gram_form() -> BilinearForm {
    BilinearForm::new(
        "stokes-gram",
        stokes_signature(),
        stokes_signature(),
        stokes_gram_integrand,
    )
    .with_radius(2)
}

fn stokes_space(grid: Grid) -> Result<CompositeFunctionSpace> {
    CompositeFunctionSpace::new(vec![
        ("sigma", FunctionSpace::new(grid, &[2, 2])),
        ("u", FunctionSpace::new(grid, &[2])),
        ("p", FunctionSpace::new(grid, &[])),
    ])
}

fn stokes_bc(space: &CompositeFunctionSpace) -> Result<DofSet> {
    let grid = space.grid();
    let sigma_bc = DofSet::empty(space.part(0).dim());
    let u_bc = select_dofs(space.part(1), &interior_mask(grid), true)?;
    let p_bc = select_dofs(space.part(2), &pressure_mask(grid), true)?;
    space.combine_dofs(&[sigma_bc, u_bc, p_bc])
}

/// Scalar Dirichlet problem with the sine product solution; the test Gram
/// coincides with the operator, so the loss is exactly the energy error.
pub fn build_laplace(grid: Grid) -> Result<ProblemSystem> {
    let space_u = FunctionSpace::new(grid, &[]);
    let space = CompositeFunctionSpace::new(vec![("u", space_u.clone())])?;
    let bc = space.combine_dofs(&[select_dofs(&space_u, &interior_mask(grid), true)?])?;
    let target = laplace_exact_solution().tabulate(&space)?;
    ProblemSystem::build(SystemInputs {
        name: "laplace",
        space: &space,
        operator: &laplace_form(),
        test_gram: &laplace_form(),
        trial_gram: &laplace_form(),
        mass: &laplace_mass_form(),
        forcing: vec![GridFunction::from_fn(grid, laplace_forcing)],
        bc,
        lift: None,
        pressure_part: None,
        target: Some(target),
    })
}

/// First-order Stokes system with the manufactured exponential flow;
/// velocity carries homogeneous Dirichlet data, pressure is pinned on the
/// left edge, bottom edge and far corner, stress is unconstrained.
pub fn build_stokes_manufactured(grid: Grid) -> Result<ProblemSystem> {
    let space = stokes_space(grid)?;
    let bc = stokes_bc(&space)?;
    let forcing = vec![
        GridFunction::zeros(grid, &[2, 2]),
        GridFunction::from_components(&[
            GridFunction::from_fn(grid, stokes_f1),
            GridFunction::from_fn(grid, stokes_f2),
        ]),
        GridFunction::zeros(grid, &[]),
    ];
    let target = stokes_exact_solution().tabulate(&space)?;
    ProblemSystem::build(SystemInputs {
        name: "stokes-mms",
        space: &space,
        operator: &stokes_operator_form(),
        test_gram: &stokes_gram_form(),
        trial_gram: &stokes_mass_form(),
        mass: &stokes_mass_form(),
        forcing,
        bc,
        lift: None,
        pressure_part: Some(2),
        target: Some(target),
    })
}

/// The velocity lift of the cavity problem: horizontal speed one on the
/// whole top row, corners included, nothing anywhere else.
pub fn cavity_lift(grid: Grid) -> GridFunction {
    let mut lift = GridFunction::zeros(grid, &[2]);
    for i in 0..=grid.nx() {
        let idx = grid.index_of(i, grid.ny());
        lift.data_mut()[idx] = 1.0;
    }
    lift
}

/// Lid-driven cavity: zero forcing, unit horizontal velocity on the top
/// boundary entering through a lifting field. No closed form exists; the
/// direct solution doubles as the error reference.
pub fn build_stokes_cavity(grid: Grid) -> Result<ProblemSystem> {
    let space = stokes_space(grid)?;
    let bc = stokes_bc(&space)?;
    let forcing = vec![
        GridFunction::zeros(grid, &[2, 2]),
        GridFunction::zeros(grid, &[2]),
        GridFunction::zeros(grid, &[]),
    ];
    let lift = vec![
        GridFunction::zeros(grid, &[2, 2]),
        cavity_lift(grid),
        GridFunction::zeros(grid, &[]),
    ];
    ProblemSystem::build(SystemInputs {
        name: "cavity",
        space: &space,
        operator: &stokes_operator_form(),
        test_gram: &stokes_gram_form(),
        trial_gram: &stokes_mass_form(),
        mass: &stokes_mass_form(),
        forcing,
        bc,
        lift: Some(lift),
        pressure_part: Some(2),
        target: None,
    })
}

/// Builds a problem by its CLI name.
pub fn build_problem(name: &str, grid: Grid) -> Result<ProblemSystem> {
    match name {
        "laplace" => build_laplace(grid),
        "stokes-mms" => build_stokes_manufactured(grid),
        "cavity" => build_stokes_cavity(grid),
        other => Err(crate::error::Error::Config(format!(
            "unknown problem '{other}', expected laplace, stokes-mms or cavity"
        ))),
    }
}

pub const PROBLEM_NAMES: [&str; 3] = ["laplace", "stokes-mms", "cavity"];

/// Relative mesh-norm errors of a full dof vector, per part and combined,
/// plus the trial-norm distance from the direct discrete solution.
/// Pressure parts are compared over the unpinned dofs with the mean
/// removed there.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub per_part: Vec<(String, f64)>,
    pub composite: f64,
    pub discrete: f64,
}

pub fn error_metrics(sys: &ProblemSystem, v: &[f64]) -> Result<ErrorReport> {
    let space = sys.space();
    let got = space.fields_from_vec(&sys.reconstruct(v))?;
    let want = match sys.target() {
        Some(fields) => fields.to_vec(),
        None => space.fields_from_vec(sys.reference())?,
    };
    let mut per_part = Vec::new();
    let mut num_total = 0.0;
    let mut den_total = 0.0;
    for (idx, (g, w)) in got.iter().zip(&want).enumerate() {
        let (g, w) = if sys.pressure_part() == Some(idx) {
            (pressure_deviation(g), pressure_deviation(w))
        } else {
            (g.clone(), w.clone())
        };
        let d = &g - &w;
        let num = crate::calculus::inner_h(&d, &d);
        let den = crate::calculus::inner_h(&w, &w);
        per_part.push((
            space.part_name(idx).to_string(),
            (num / den.max(f64::MIN_POSITIVE)).sqrt(),
        ));
        num_total += num;
        den_total += den;
    }
    Ok(ErrorReport {
        per_part,
        composite: (num_total / den_total.max(f64::MIN_POSITIVE)).sqrt(),
        discrete: sys.discrete_error(v),
    })
}

fn divergence_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    dot(&div(&trial[0], Sign::Minus), &test[0])
}

/// Pairs velocities against pressure deltas through the backward
/// divergence; rows are pressure points, columns velocity dofs.
pub fn divergence_form() -> BilinearForm {
    BilinearForm::new(
        "divergence",
        SpaceSignature::new(&[("u", &[2])]),
        SpaceSignature::new(&[("q", &[])]),
        divergence_integrand,
    )
    .with_radius(1)
}

fn velocity_gram_integrand(trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
    dot(&grad(&trial[0], Sign::Plus), &grad(&test[0], Sign::Plus))
}

/// Forward-gradient Gram on a two-component velocity space.
pub fn velocity_gram_form() -> BilinearForm {
    BilinearForm::new(
        "velocity-gram",
        SpaceSignature::new(&[("u", &[2])]),
        SpaceSignature::new(&[("v", &[2])]),
        velocity_gram_integrand,
    )
    .with_radius(1)
}

/// The discrete inf-sup constant of the velocity-pressure pairing: the
/// smallest ratio, over mean-free pressures on the unpinned dofs, of the
/// best attainable divergence pairing against the pressure mesh norm,
/// where velocities range over interior dofs measured in the
/// forward-gradient seminorm. Computed as the second-smallest eigenvalue
/// of the Schur pencil, the smallest being the quasi-constant mode.
pub fn infsup_constant(grid: Grid) -> Result<f64> {
    let velocity = FunctionSpace::new(grid, &[2]);
    let pressure = FunctionSpace::new(grid, &[]);
    let u_bc = select_dofs(&velocity, &interior_mask(grid), true)?;
    let q_pinned = select_dofs(&pressure, &pressure_mask(grid), true)?;

    let d_full = assemble(&divergence_form(), grid)?;
    let d = d_full.remove_rows_cols(&q_pinned, &u_bc).to_dense();
    let s_full = assemble(&velocity_gram_form(), grid)?;
    let s = s_full.remove_rows_cols(&u_bc, &u_bc).to_dense();
    let lu = lu_factor(s)?;

    let np = d.rows();
    let mut schur = DenseMatrix::zeros(np, np);
    for k in 0..np {
        let x = lu.solve(d.row(k));
        let col = d.matvec(&x);
        for (i, v) in col.into_iter().enumerate() {
            schur.set(i, k, v);
        }
    }
    let mut schur = schur.symmetrized();

    let cell = grid.hx() * grid.hy();
    let mut mass = DenseMatrix::zeros(np, np);
    for i in 0..np {
        mass.set(i, i, cell);
    }
    let ones = vec![1.0; np];
    let mass_ones = vec![cell; np];
    schur.add_rank_one(1.0 / (cell * np as f64), &mass_ones, &mass_ones);

    let (lo, _) = smallest_generalized_eig(&schur, &mass, Some(&ones))?;
    Ok(lo.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{apply_form, assemble};
    use crate::calculus::{inner_h, norm_h};
    use crate::linalg::vdot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SAMPLE: (f64, f64) = (0.3, 0.7);

    #[test]
    fn closed_forms_match_pinned_high_precision_values() {
        let (x, y) = SAMPLE;
        let cases = [
            (stokes_u1(x, y), -0.01000083393356909179679476),
            (stokes_u2(x, y), -0.01262605284113097839345339),
            (stokes_p(x, y), 0.04755717103562118448500670),
            (stokes_f1(x, y), -0.4758046983180778631470583),
            (stokes_f2(x, y), -0.5105072091738198411859332),
            (stokes_s00(x, y), -0.04809924891859420340363196),
            (stokes_s01(x, y), 0.008328075400632832990307069),
            (stokes_s10(x, y), -0.03095496217533290318055522),
            (stokes_s11(x, y), 0.04809924891859420340363196),
        ];
        for (k, (got, want)) in cases.iter().enumerate() {
            assert!(
                (got - want).abs() <= 1e-12,
                "case {k}: {got} vs {want}"
            );
        }
        let u = laplace_solution(x, y);
        assert!((u - (PI * 0.3).sin() * (3.0 * PI * 0.7).sin()).abs() <= 1e-15);
        assert!((laplace_forcing(x, y) - 10.0 * PI * PI * u).abs() <= 1e-12);
    }

    fn central_first(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (-f(t - 3.0 * h) + 9.0 * f(t - 2.0 * h) - 45.0 * f(t - h) + 45.0 * f(t + h)
            - 9.0 * f(t + 2.0 * h)
            + f(t + 3.0 * h))
            / (60.0 * h)
    }

    fn central_second(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (2.0 * f(t - 3.0 * h) - 27.0 * f(t - 2.0 * h) + 270.0 * f(t - h) - 490.0 * f(t)
            + 270.0 * f(t + h)
            - 27.0 * f(t + 2.0 * h)
            + 2.0 * f(t + 3.0 * h))
            / (180.0 * h * h)
    }

    #[test]
    fn manufactured_velocity_is_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 0.01;
        for _ in 0..1000 {
            let x = rng.gen_range(0.1..0.9);
            let y = rng.gen_range(0.1..0.9);
            assert!((stokes_s00(x, y) + stokes_s11(x, y)).abs() <= 1e-12);
            let dxu1 = central_first(|t| stokes_u1(t, y), x, h);
            let dyu2 = central_first(|t| stokes_u2(x, t), y, h);
            assert!((dxu1 + dyu2).abs() <= 1e-8);
        }
    }

    #[test]
    fn stress_components_are_the_velocity_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let h = 0.01;
        for _ in 0..200 {
            let x = rng.gen_range(0.1..0.9);
            let y = rng.gen_range(0.1..0.9);
            let checks = [
                (stokes_s00(x, y), central_first(|t| stokes_u1(t, y), x, h)),
                (stokes_s01(x, y), central_first(|t| stokes_u2(t, y), x, h)),
                (stokes_s10(x, y), central_first(|t| stokes_u1(x, t), y, h)),
                (stokes_s11(x, y), central_first(|t| stokes_u2(x, t), y, h)),
            ];
            for (got, fd) in checks {
                assert!((got - fd).abs() <= 1e-8 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forcing_agrees_with_an_independent_difference_oracle() {
        // f = -laplace(u) + grad(p), rebuilt from u and p alone
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let h = 0.01;
        for _ in 0..200 {
            let x = rng.gen_range(0.1..0.9);
            let y = rng.gen_range(0.1..0.9);
            let lap_u1 = central_second(|t| stokes_u1(t, y), x, h)
                + central_second(|t| stokes_u1(x, t), y, h);
            let lap_u2 = central_second(|t| stokes_u2(t, y), x, h)
                + central_second(|t| stokes_u2(x, t), y, h);
            let px = central_first(|t| stokes_p(t, y), x, h);
            let py = central_first(|t| stokes_p(x, t), y, h);
            let scale = stokes_f1(x, y).abs().max(stokes_f2(x, y).abs()).max(1.0);
            assert!((stokes_f1(x, y) - (-lap_u1 + px)).abs() <= 1e-7 * scale);
            assert!((stokes_f2(x, y) - (-lap_u2 + py)).abs() <= 1e-7 * scale);
        }
        let u = laplace_solution(0.37, 0.59);
        let lap = central_second(|t| laplace_solution(t, 0.59), 0.37, h)
            + central_second(|t| laplace_solution(0.37, t), 0.59, h);
        assert!((laplace_forcing(0.37, 0.59) - (-lap)).abs() <= 1e-7 * u.abs().max(1.0));
    }

    #[test]
    fn manufactured_velocity_vanishes_on_the_boundary() {
        for n in [3usize, 4, 6] {
            let grid = Grid::new(n, n).unwrap();
            for (i, j) in grid.boundary_indices() {
                let (x, y) = grid.point(i, j);
                assert!(stokes_u1(x, y).abs() <= 1e-13);
                assert!(stokes_u2(x, y).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn exact_solution_tabulates_into_matching_shapes() {
        let grid = Grid::new(4, 4).unwrap();
        let space = stokes_space(grid).unwrap();
        let fields = stokes_exact_solution().tabulate(&space).unwrap();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].value_shape(), &[2, 2]);
        assert_eq!(fields[1].value_shape(), &[2]);
        assert_eq!(fields[2].value_shape(), &[] as &[usize]);
        let (x, y) = grid.point(1, 2);
        assert_eq!(fields[0].at(1, 1, 2), stokes_s01(x, y));
        assert_eq!(fields[0].at(2, 1, 2), stokes_s10(x, y));
        assert_eq!(fields[1].at(1, 1, 2), stokes_u2(x, y));
    }

    #[test]
    fn stokes_mass_matrix_is_the_cell_volume_diagonal() {
        let grid = Grid::new(3, 3).unwrap();
        let m = assemble(&stokes_mass_form(), grid).unwrap();
        let dim = 7 * grid.size();
        assert_eq!(m.rows(), dim);
        assert_eq!(m.nnz(), dim);
        let dense = m.to_dense();
        for r in 0..dim {
            for c in 0..dim {
                let want = if r == c { grid.cell_volume() } else { 0.0 };
                assert_eq!(dense.at(r, c), want);
            }
        }
    }

    #[test]
    fn operator_couples_velocity_and_pressure_adjointly() {
        // testing (0,u,0) against (0,0,q) realizes <div u, q>, which
        // summation by parts turns into -<u, grad q> for interior u
        let grid = Grid::new(5, 5).unwrap();
        let space = stokes_space(grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = grid.size();
        let mut v = vec![0.0; space.dim()];
        let mut u_field = GridFunction::zeros(grid, &[2]);
        for c in 0..2 {
            for (i, j) in grid.indices() {
                if !grid.is_boundary(i, j) {
                    let val = rng.gen_range(-1.0..1.0);
                    u_field.data_mut()[c * n + grid.index_of(i, j)] = val;
                    v[space.offset(1) + c * n + grid.index_of(i, j)] = val;
                }
            }
        }
        let q_field = GridFunction::from_fn(grid, |x, y| (x - 0.4) * (y + 0.2) * (y - 0.9));
        let av = apply_form(&stokes_operator_form(), grid, &v).unwrap();
        let applied_q: f64 = (0..n)
            .map(|k| av[space.offset(2) + k] * q_field.data()[k])
            .sum();
        let direct = inner_h(&div(&u_field, Sign::Minus), &q_field);
        let adjoint = -inner_h(&u_field, &grad(&q_field, Sign::Plus));
        assert!((applied_q - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        assert!((direct - adjoint).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn gram_is_positive_on_random_vectors_with_one_neutral_direction() {
        let grid = Grid::new(4, 4).unwrap();
        let space = stokes_space(grid).unwrap();
        let bc = stokes_bc(&space).unwrap();
        let g = assemble(&stokes_gram_form(), grid)
            .unwrap()
            .remove_rows_cols(&bc, &bc);
        let dim = bc.codim();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..100 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let quad = vdot(&x, &g.matvec(&x));
            assert!(quad > 0.0);
        }
        // the surviving-pressure indicator is flattened by the Gram
        let n = grid.size();
        let mut neutral_full = vec![0.0; space.dim()];
        for k in 0..n {
            neutral_full[space.offset(2) + k] = 1.0;
        }
        let neutral = bc.remove(&neutral_full);
        let gn = g.matvec(&neutral);
        let scale = g.to_dense().max_abs();
        assert!(gn.iter().all(|x| x.abs() <= 1e-12 * scale));
    }

    #[test]
    fn cavity_lift_marks_exactly_the_top_row() {
        let grid = Grid::new(6, 6).unwrap();
        let lift = cavity_lift(grid);
        let nonzero = lift.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 7);
        for i in 0..=6 {
            assert_eq!(lift.at(0, i, 6), 1.0);
            assert_eq!(lift.at(1, i, 6), 0.0);
        }
    }

    #[test]
    fn cavity_rhs_is_linear_in_the_lift() {
        let grid = Grid::new(4, 4).unwrap();
        let space = stokes_space(grid).unwrap();
        let bc = stokes_bc(&space).unwrap();
        let a = assemble(&stokes_operator_form(), grid).unwrap();
        let lift_vec = space
            .vector_of_values(&[
                GridFunction::zeros(grid, &[2, 2]),
                cavity_lift(grid),
                GridFunction::zeros(grid, &[]),
            ])
            .unwrap();
        let rhs_once: Vec<f64> = bc.remove(&a.matvec(&lift_vec)).iter().map(|x| -x).collect();
        let doubled: Vec<f64> = lift_vec.iter().map(|x| 2.0 * x).collect();
        let rhs_twice: Vec<f64> = bc.remove(&a.matvec(&doubled)).iter().map(|x| -x).collect();
        for (a, b) in rhs_once.iter().zip(&rhs_twice) {
            assert_eq!(2.0 * a, *b);
        }
        let sys = build_stokes_cavity(grid).unwrap();
        for (got, want) in sys.rhs().iter().zip(&rhs_once) {
            assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn cavity_direct_solution_turns_the_center_flow_backwards() {
        let grid = Grid::new(8, 8).unwrap();
        let sys = build_stokes_cavity(grid).unwrap();
        let fields = sys.space().fields_from_vec(sys.reference()).unwrap();
        let center_u1 = fields[1].at(0, 4, 4);
        assert!(
            center_u1 < 0.0,
            "return flow at the center should oppose the lid, got {center_u1}"
        );
    }

    #[test]
    fn laplace_direct_solution_converges_under_refinement() {
        let err = |n: usize| {
            let sys = build_laplace(Grid::new(n, n).unwrap()).unwrap();
            sys.relative_target_error(sys.reference()).unwrap()
        };
        let coarse = err(8);
        let fine = err(16);
        assert!(fine < coarse / 1.5, "{coarse} -> {fine}");
    }

    #[test]
    fn stokes_direct_solution_converges_under_refinement() {
        let err = |n: usize| {
            let sys = build_stokes_manufactured(Grid::new(n, n).unwrap()).unwrap();
            sys.relative_target_error(sys.reference()).unwrap()
        };
        let coarse = err(6);
        let fine = err(12);
        assert!(fine < coarse / 1.5, "{coarse} -> {fine}");
    }

    #[test]
    fn error_metrics_vanish_at_the_reference_and_shrug_off_pressure_shifts() {
        let grid = Grid::new(5, 5).unwrap();
        let sys = build_stokes_cavity(grid).unwrap();
        let report = error_metrics(&sys, sys.reference()).unwrap();
        assert!(report.composite <= 1e-12);
        assert!(report.discrete <= 1e-9);
        for (_, e) in &report.per_part {
            assert!(*e <= 1e-9);
        }
        let mut shifted = sys.reference().to_vec();
        let n = grid.size();
        for k in 0..n {
            shifted[sys.space().offset(2) + k] += 3.5;
        }
        let report = error_metrics(&sys, &shifted).unwrap();
        let pressure = report
            .per_part
            .iter()
            .find(|(name, _)| name == "p")
            .unwrap()
            .1;
        assert!(pressure <= 1e-9, "pressure error after shift: {pressure}");
    }

    #[test]
    fn composite_error_is_the_weighted_mean_of_part_errors() {
        let grid = Grid::new(4, 4).unwrap();
        let sys = build_stokes_manufactured(grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let v: Vec<f64> = (0..sys.space().dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let report = error_metrics(&sys, &v).unwrap();
        let want = sys.target().unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (idx, w) in want.iter().enumerate() {
            let w = if sys.pressure_part() == Some(idx) {
                pressure_deviation(w)
            } else {
                w.clone()
            };
            let dsq = norm_h(&w).powi(2);
            let rel = report.per_part[idx].1;
            num += rel * rel * dsq;
            den += dsq;
        }
        let composite = (num / den).sqrt();
        assert!((report.composite - composite).abs() <= 1e-10 * composite);
    }

    #[test]
    fn unknown_problem_names_are_rejected() {
        let grid = Grid::new(4, 4).unwrap();
        assert!(build_problem("laplace", grid).is_ok());
        assert!(build_problem("heat", grid).is_err());
    }

    #[test]
    fn infsup_constant_matches_dense_eigensolver_values() {
        // references from a numpy run over hand-assembled difference
        // matrices, taking the second-smallest Schur eigenvalue directly
        let cases = [
            (3, 0.39674911945919544),
            (4, 0.39387213236895413),
            (5, 0.3873944138590882),
        ];
        for (n, want) in cases {
            let beta = infsup_constant(Grid::new(n, n).unwrap()).unwrap();
            assert!(
                (beta - want).abs() <= 1e-9 * want,
                "n={n}: {beta} vs {want}"
            );
        }
    }

    #[test]
    fn infsup_constant_is_stable_under_refinement() {
        let b4 = infsup_constant(Grid::new(4, 4).unwrap()).unwrap();
        let b8 = infsup_constant(Grid::new(8, 8).unwrap()).unwrap();
        assert!(b4 > 0.0 && b4 < 1.0);
        assert!(b8 > 0.0 && b8 < 1.0);
        assert!((b8 - b4).abs() / b4 < 0.5, "{b4} vs {b8}");
    }
}
