use crate::assembly::{assemble, assemble_dense};
use crate::calculus::{
    diff, inner_h, integrate, norm_h, seminorm_grad_h, shift, zero_boundary, Sign,
};
use crate::field::GridFunction;
use crate::grid::{Grid, AXES};
use crate::linalg::numeric_rank;
use crate::problems::{
    divergence_form, laplace_form, stokes_gram_form, stokes_mass_form, stokes_operator_form,
};
use crate::spaces::{interior_mask, pressure_mask, select_dofs, DofSet, FunctionSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one verification check: the worst deviation seen, the
/// tolerance it was held against, and a human-readable summary.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tolerance: f64, detail: String) -> CheckResult {
        CheckResult {
            name,
            pass: worst <= tolerance,
            worst,
            tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:<28} worst {:>12.3e}  tol {:>8.1e}  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.detail
        )
    }
}

fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    let mut f = GridFunction::zeros(grid, &[]);
    for v in f.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    f
}

fn random_interior_field(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    zero_boundary(&random_field(grid, rng))
}

const IDENTITY_TOL: f64 = 1e-13;

/// The five grid-calculus identities, each evaluated on `pairs` random
/// function pairs per grid size: shift adjointness, the shift between the
/// two one-sided differences, the product rule for both differences, the
/// vanishing mean of forward differences of interior fields, and
/// integration by parts.
pub fn calculus_identities(sizes: &[usize], pairs: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 5];
    for &n in sizes {
        let grid = Grid::new(n, n).unwrap();
        for _ in 0..pairs {
            let u = random_field(grid, &mut rng);
            let v = random_field(grid, &mut rng);
            let u0 = random_interior_field(grid, &mut rng);
            let v0 = random_interior_field(grid, &mut rng);
            for axis in AXES {
                let lhs = inner_h(&shift(&u, axis, Sign::Plus), &v);
                let rhs = inner_h(&u, &shift(&v, axis, Sign::Minus));
                let scale = norm_h(&u) * norm_h(&v);
                worst[0] = worst[0].max((lhs - rhs).abs() / scale.max(1e-300));

                let via_shift = shift(&diff(&u, axis, Sign::Plus), axis, Sign::Minus);
                let direct = diff(&u, axis, Sign::Minus);
                let dev = crate::field::max_abs_diff(&via_shift, &direct);
                let dscale = direct.max_abs().max(1.0);
                worst[1] = worst[1].max(dev / dscale);

                for sign in [Sign::Plus, Sign::Minus] {
                    let product = &u * &v;
                    let lhs = diff(&product, axis, sign);
                    let rhs = &(&diff(&u, axis, sign) * &v)
                        + &(&shift(&u, axis, sign) * &diff(&v, axis, sign));
                    let dev = crate::field::max_abs_diff(&lhs, &rhs);
                    worst[2] = worst[2].max(dev / lhs.max_abs().max(1.0));
                }

                let mean = integrate(&diff(&u0, axis, Sign::Plus));
                let mscale = norm_h(&diff(&u0, axis, Sign::Plus)).max(1e-300);
                worst[3] = worst[3].max(mean.abs() / mscale);

                let lhs = inner_h(&diff(&u, axis, Sign::Plus), &v0);
                let rhs = -inner_h(&u, &diff(&v0, axis, Sign::Minus));
                let scale = norm_h(&u) * seminorm_grad_h(&v0);
                worst[4] = worst[4].max((lhs - rhs).abs() / scale.max(1e-300));
            }
        }
    }
    let detail = format!("{} random pairs per grid, sizes {:?}", pairs, sizes);
    [
        "shift adjointness",
        "difference polarity shift",
        "difference product rule",
        "forward difference mean",
        "integration by parts",
    ]
    .into_iter()
    .zip(worst)
    .map(|(name, w)| CheckResult::new(name, w, IDENTITY_TOL, detail.clone()))
    .collect()
}

/// The mesh norm of interior-supported fields is bounded by twice the
/// forward-difference seminorm, uniformly over the tested sizes.
pub fn poincare_check(sizes: &[usize], samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_ratio = 0.0f64;
    for &n in sizes {
        let grid = Grid::new(n, n).unwrap();
        for _ in 0..samples {
            let u = random_interior_field(grid, &mut rng);
            let denom = seminorm_grad_h(&u);
            if denom > 0.0 {
                worst_ratio = worst_ratio.max(norm_h(&u) / denom);
            }
        }
    }
    CheckResult::new(
        "poincare ratio",
        worst_ratio,
        2.0,
        format!("{} interior fields per grid, sizes {:?}", samples, sizes),
    )
}

/// Verifies that the backward divergence maps interior velocities exactly
/// onto the pressure fields that vanish on the pinned set and have zero
/// mesh mean: every image column satisfies both constraints, and the rank
/// equals the dimension of that target space, so the spaces coincide.
pub fn divergence_image_check(sizes: &[usize]) -> CheckResult {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for &n in sizes {
        let grid = Grid::new(n, n).unwrap();
        let velocity = FunctionSpace::new(grid, &[2]);
        let u_bc = select_dofs(&velocity, &interior_mask(grid), true).unwrap();
        let full = assemble(&divergence_form(), grid).unwrap();
        let d = full.remove_rows_cols(&DofSet::empty(full.rows()), &u_bc);
        let dense = d.to_dense();
        let scale = dense.max_abs();

        let mask = pressure_mask(grid);
        let pinned: Vec<usize> = (0..grid.size()).filter(|&k| mask.data()[k] == 0.0).collect();
        for col in 0..dense.cols() {
            let mut sum = 0.0;
            for row in 0..dense.rows() {
                sum += dense.at(row, col);
            }
            worst = worst.max(sum.abs() / scale);
            for &row in &pinned {
                worst = worst.max(dense.at(row, col).abs() / scale);
            }
        }

        let target_dim = grid.size() - pinned.len() - 1;
        let rank = numeric_rank(&dense, 1e-10);
        if rank != target_dim {
            return CheckResult::new(
                "divergence image",
                f64::INFINITY,
                1e-12,
                format!("rank {} but target dimension {} on {}x{}", rank, target_dim, n, n),
            );
        }
        detail = format!(
            "sizes {:?}, last rank {} = points {} - pinned {} - 1",
            sizes,
            rank,
            grid.size(),
            pinned.len()
        );
    }
    CheckResult::new("divergence image", worst, 1e-12, detail)
}

/// Compares stencil-probe assembly of every shipped form against the dense
/// all-pairs reference, entry by entry.
pub fn assembly_consistency_check(n: usize) -> CheckResult {
    let grid = Grid::new(n, n).unwrap();
    let forms = [
        laplace_form(),
        crate::problems::laplace_mass_form(),
        stokes_operator_form(),
        stokes_mass_form(),
        stokes_gram_form(),
    ];
    let mut worst = 0.0f64;
    for form in &forms {
        let sparse = assemble(form, grid).unwrap().to_dense();
        let dense = assemble_dense(form, grid);
        let scale = dense.max_abs().max(1e-300);
        assert_eq!(sparse.rows(), dense.rows());
        for r in 0..dense.rows() {
            for c in 0..dense.cols() {
                worst = worst.max((sparse.at(r, c) - dense.at(r, c)).abs() / scale);
            }
        }
    }
    CheckResult::new(
        "assembly cross-check",
        worst,
        1e-14,
        format!("{} forms on a {}x{} grid", forms.len(), n, n),
    )
}

/// The default verification suite behind the CLI verify mode.
pub fn run_verification(seed: u64) -> Vec<CheckResult> {
    let mut results = calculus_identities(&[3, 4, 5, 8], 50, seed);
    results.push(poincare_check(&[3, 4, 5, 8], 200, seed + 1));
    results.push(divergence_image_check(&[3, 4, 5, 6]));
    results.push(assembly_consistency_check(3));
    results
}

/// Renders results as one line per check plus a closing verdict.
pub fn report(results: &[CheckResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&r.line());
        out.push('\n');
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        out.push_str(&format!("all {} checks passed\n", results.len()));
    } else {
        out.push_str(&format!("{} of {} checks FAILED\n", failed, results.len()));
    }
    out
}
