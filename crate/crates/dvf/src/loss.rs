use crate::assembly::{assemble, assemble_linear, BilinearForm, SparseMatrix};
use crate::calculus::{inner_h, integrate};
use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::grid::Grid;
use crate::linalg::{lu_factor, smallest_generalized_eig, vdot, DenseMatrix, LuFactorization};
use crate::spaces::{CompositeFunctionSpace, DofSet};
use std::sync::OnceLock;

/// Constants of the two-sided bound relating loss and discrete error:
/// `alpha * ||e|| <= sqrt(loss) <= mu * ||e||` in the trial norm.
#[derive(Clone, Copy, Debug)]
pub struct ErrorBounds {
    pub alpha: f64,
    pub mu: f64,
}

impl ErrorBounds {
    /// Multiplying sqrt(loss) by this bounds the error from below.
    pub fn lower_factor(&self) -> f64 {
        1.0 / self.mu
    }

    /// Multiplying sqrt(loss) by this bounds the error from above.
    pub fn upper_factor(&self) -> f64 {
        1.0 / self.alpha
    }
}

/// Everything needed to build a [`ProblemSystem`]: the three forms, the
/// load, the constrained dofs, and the optional extras (boundary lifting,
/// an analytic target, the index of a pressure part).
pub struct SystemInputs<'a> {
    pub name: &'a str,
    pub space: &'a CompositeFunctionSpace,
    /// The operator form whose residual the loss measures.
    pub operator: &'a BilinearForm,
    /// The test-space product whose inverse weights the residual.
    pub test_gram: &'a BilinearForm,
    /// The trial-space product in which errors are reported and bounded.
    pub trial_gram: &'a BilinearForm,
    /// The L2 product; its matrix turns tabulated forcing into the load.
    pub mass: &'a BilinearForm,
    /// Forcing fields, one per part.
    pub forcing: Vec<GridFunction>,
    pub bc: DofSet,
    /// Non-homogeneous Dirichlet data, one field per part, zero inside.
    pub lift: Option<Vec<GridFunction>>,
    /// Index of the pressure part, for problems whose pressure is determined
    /// only up to a constant on the unpinned dofs.
    pub pressure_part: Option<usize>,
    /// Tabulated closed-form solution, one field per part, if one exists.
    pub target: Option<Vec<GridFunction>>,
}

/// A constrained linear system together with the factorized test-space Gram
/// matrix, the residual-preconditioned loss it induces, and the direct
/// solution used as the error reference.
///
/// When a pressure part is present, the indicator of its unconstrained dofs
/// spans a direction the operator cannot see: it is (up to roundoff) a
/// two-sided kernel of the constrained operator and of the test Gram. The
/// Gram factorization adds a rank-one term along that direction, which
/// leaves the loss untouched because residuals are orthogonal to it, the
/// direct solve pins one extra pressure dof to make the matrix nonsingular,
/// and error norms and bounds project the direction out.
pub struct ProblemSystem {
    name: String,
    space: CompositeFunctionSpace,
    operator: SparseMatrix,
    mass: SparseMatrix,
    gram: SparseMatrix,
    trial_gram: SparseMatrix,
    gram_lu: OnceLock<LuFactorization>,
    rhs: Vec<f64>,
    bc: DofSet,
    lift: Option<Vec<f64>>,
    neutral: Option<Vec<f64>>,
    pin: Option<usize>,
    pressure_part: Option<usize>,
    target: Option<Vec<GridFunction>>,
    solution: Vec<f64>,
    reference: Vec<f64>,
}

impl ProblemSystem {
    pub fn build(inputs: SystemInputs) -> Result<ProblemSystem> {
        let space = inputs.space.clone();
        let grid = space.grid();
        let bc = inputs.bc;

        let a_full = assemble(inputs.operator, grid)?;
        let gram_full = assemble(inputs.test_gram, grid)?;
        let trial_full = assemble(inputs.trial_gram, grid)?;
        let mass_full = assemble(inputs.mass, grid)?;

        let forcing_vec = assemble_linear(&space, &inputs.forcing)?;
        let lift = inputs
            .lift
            .map(|fields| assemble_linear(&space, &fields))
            .transpose()?;
        let mut load = mass_full.matvec(&forcing_vec);
        if let Some(lift_vec) = &lift {
            for (l, a) in load.iter_mut().zip(a_full.matvec(lift_vec)) {
                *l -= a;
            }
        }
        let rhs = bc.remove(&load);

        let operator = a_full.remove_rows_cols(&bc, &bc);
        let gram = gram_full.remove_rows_cols(&bc, &bc);
        let trial_gram = trial_full.remove_rows_cols(&bc, &bc);
        let mass = mass_full.remove_rows_cols(&bc, &bc);

        let neutral = inputs.pressure_part.map(|part| {
            let n = grid.size();
            let lo = space.offset(part);
            let mut full = vec![0.0; space.dim()];
            for k in 0..space.part(part).dim().min(n) {
                full[lo + k] = 1.0;
            }
            bc.remove(&full)
        });
        let pin = neutral
            .as_ref()
            .map(|m| m.iter().position(|&v| v == 1.0).expect("no pressure dof survives"));

        let mut system = ProblemSystem {
            name: inputs.name.to_string(),
            space,
            operator,
            mass,
            gram,
            trial_gram,
            gram_lu: OnceLock::new(),
            rhs,
            bc,
            lift,
            neutral,
            pin,
            pressure_part: inputs.pressure_part,
            target: inputs.target,
            solution: Vec::new(),
            reference: Vec::new(),
        };
        system.solution = system.direct_solve()?;
        system.reference = system.reconstruct(&system.bc.reinsert(&system.solution, 0.0));
        Ok(system)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> Grid {
        self.space.grid()
    }

    pub fn space(&self) -> &CompositeFunctionSpace {
        &self.space
    }

    pub fn bc(&self) -> &DofSet {
        &self.bc
    }

    pub fn constrained_dim(&self) -> usize {
        self.bc.codim()
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn gram(&self) -> &SparseMatrix {
        &self.gram
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn pressure_part(&self) -> Option<usize> {
        self.pressure_part
    }

    pub fn target(&self) -> Option<&[GridFunction]> {
        self.target.as_deref()
    }

    /// The constrained direct solution.
    pub fn solution(&self) -> &[f64] {
        &self.solution
    }

    /// The direct solution in full coordinates, boundary data included.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    fn gram_lu(&self) -> &LuFactorization {
        self.gram_lu.get_or_init(|| {
            let mut g = self.gram.to_dense();
            if let Some(m) = &self.neutral {
                let n = g.rows();
                let mean_diag = (0..n).map(|i| g.at(i, i)).sum::<f64>() / n as f64;
                let c = mean_diag / vdot(m, m);
                g.add_rank_one(c, m, m);
            }
            lu_factor(g).expect("test Gram must factor after regularization")
        })
    }

    /// `r = A v_free - rhs` on the constrained space.
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.space.dim() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), got: v.len() });
        }
        let mut r = self.operator.matvec(&self.bc.remove(v));
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        Ok(r)
    }

    /// `loss = r' G^{-1} r`, the squared dual norm of the residual.
    pub fn loss_value(&self, v: &[f64]) -> Result<f64> {
        let r = self.residual(v)?;
        let x = self.gram_lu().solve(&r);
        Ok(vdot(&r, &x))
    }

    /// Loss derivative with respect to the full dof vector; exactly zero at
    /// constrained dofs.
    pub fn loss_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(v)?.1)
    }

    /// Loss and gradient sharing one Gram solve.
    pub fn loss_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.residual(v)?;
        let x = self.gram_lu().solve(&r);
        let loss = vdot(&r, &x);
        let mut g = self.operator.matvec_transposed(&x);
        for gi in &mut g {
            *gi *= 2.0;
        }
        Ok((loss, self.bc.reinsert(&g, 0.0)))
    }

    /// Solves the constrained system directly. With a pressure part, one
    /// extra pressure dof is pinned to zero first; the pinned square system
    /// is nonsingular and its solution solves the full constrained system
    /// too, because the load is orthogonal to the left kernel.
    pub fn direct_solve(&self) -> Result<Vec<f64>> {
        match self.pin {
            None => {
                let lu = lu_factor(self.operator.to_dense())?;
                Ok(lu.solve(&self.rhs))
            }
            Some(p) => {
                let dim = self.operator.rows();
                let pin_set = DofSet::new(vec![p], dim)?;
                let cut = self.operator.remove_rows_cols(&pin_set, &pin_set);
                let lu = lu_factor(cut.to_dense())?;
                let sol = lu.solve(&pin_set.remove(&self.rhs));
                Ok(pin_set.reinsert(&sol, 0.0))
            }
        }
    }

    /// Free dofs of `v` with boundary data re-applied: the field the loss
    /// actually measures.
    pub fn reconstruct(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.bc.reinsert(&self.bc.remove(v), 0.0);
        if let Some(lift) = &self.lift {
            for (o, l) in out.iter_mut().zip(lift) {
                *o += l;
            }
        }
        out
    }

    /// Trial-norm distance from the direct solution, with the unseen
    /// pressure direction projected out when one exists.
    pub fn discrete_error(&self, v: &[f64]) -> f64 {
        let mut e: Vec<f64> = self
            .bc
            .remove(v)
            .iter()
            .zip(&self.solution)
            .map(|(a, b)| a - b)
            .collect();
        self.deflate(&mut e);
        let te = self.trial_gram.matvec(&e);
        vdot(&e, &te).max(0.0).sqrt()
    }

    fn deflate(&self, e: &mut [f64]) {
        if let Some(m) = &self.neutral {
            let tm = self.trial_gram.matvec(m);
            let c = vdot(&tm, e) / vdot(m, &tm);
            for (ei, mi) in e.iter_mut().zip(m) {
                *ei -= c * mi;
            }
        }
    }

    /// Relative composite mesh-norm error of `v` against the tabulated
    /// closed-form solution when one exists, otherwise against the direct
    /// solution. Pressure parts are compared through
    /// [`pressure_deviation`], since the problem fixes pressure only up to
    /// a constant on the unpinned dofs.
    pub fn relative_target_error(&self, v: &[f64]) -> Result<f64> {
        let got = self.space.fields_from_vec(&self.reconstruct(v))?;
        let want = match &self.target {
            Some(fields) => fields.clone(),
            None => self.space.fields_from_vec(&self.reference)?,
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for (idx, (g, w)) in got.iter().zip(&want).enumerate() {
            let (g, w) = if self.pressure_part == Some(idx) {
                (pressure_deviation(g), pressure_deviation(w))
            } else {
                (g.clone(), w.clone())
            };
            let d = &g - &w;
            num += inner_h(&d, &d);
            den += inner_h(&w, &w);
        }
        Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
    }

    /// Trial norm of a constrained-space vector, after deflation.
    pub fn trial_norm(&self, e: &[f64]) -> f64 {
        let mut e = e.to_vec();
        self.deflate(&mut e);
        let te = self.trial_gram.matvec(&e);
        vdot(&e, &te).max(0.0).sqrt()
    }

    /// Extreme generalized eigenvalues of the loss quadratic form against
    /// the trial Gram, as bound constants: `alpha^2` the smallest, `mu^2`
    /// the largest. Builds the dense normal operator column by column, so
    /// this is meant for the moderate sizes where bounds are verified.
    pub fn error_bounds(&self) -> Result<ErrorBounds> {
        let n = self.operator.rows();
        let lu = self.gram_lu();
        let a_cols = self.operator.to_dense().transpose();
        let mut s = DenseMatrix::zeros(n, n);
        for k in 0..n {
            let x = lu.solve(a_cols.row(k));
            let col = self.operator.matvec_transposed(&x);
            for (i, v) in col.into_iter().enumerate() {
                s.set(i, k, v);
            }
        }
        let mut s = s.symmetrized();
        let t = self.trial_gram.to_dense();
        if let Some(m) = &self.neutral {
            let tm = t.matvec(m);
            let c = 1.0 / vdot(m, &tm);
            s.add_rank_one(c, &tm, &tm);
        }
        let (lo, hi) = smallest_generalized_eig(&s, &t, self.neutral.as_deref())?;
        Ok(ErrorBounds { alpha: lo.max(0.0).sqrt(), mu: hi.max(0.0).sqrt() })
    }
}

/// Shifts a scalar field so its mesh integral vanishes; the comparison
/// normalization for fields defined only up to a constant.
pub fn remove_mean(f: &GridFunction) -> GridFunction {
    let total = integrate(&GridFunction::constant(f.grid(), 1.0));
    let mean = integrate(f) / total;
    f - &GridFunction::constant(f.grid(), mean)
}

/// Restricts a pressure field to the unpinned dofs and removes its mean
/// there. The pinned set never carries pressure information and constants
/// on the surviving set span the unseen direction, so this is the
/// representative every pressure comparison should use.
pub fn pressure_deviation(f: &GridFunction) -> GridFunction {
    let mask = crate::spaces::pressure_mask(f.grid());
    let masked = f * &mask;
    let mean = integrate(&masked) / integrate(&mask);
    &masked - &(&mask * mean)
}
