use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::grid::Grid;
use crate::linalg::DenseMatrix;
use crate::spaces::{CompositeFunctionSpace, DofSet, FunctionSpace};
use std::io::{self, Write};

/// Scalar integrand of a bilinear form, written against one field per trial
/// part and one per test part.
pub type Integrand = fn(&[GridFunction], &[GridFunction]) -> GridFunction;

/// Grid-free description of a composite space: part names and value shapes.
/// Forms carry signatures instead of spaces so the same form can be
/// instantiated on the target grid and on the small guard grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceSignature {
    parts: Vec<(String, Vec<usize>)>,
}

impl SpaceSignature {
    pub fn new(parts: &[(&str, &[usize])]) -> Self {
        Self {
            parts: parts
                .iter()
                .map(|(n, s)| (n.to_string(), s.to_vec()))
                .collect(),
        }
    }

    pub fn of(space: &CompositeFunctionSpace) -> Self {
        let parts = (0..space.num_parts())
            .map(|i| {
                (
                    space.part_name(i).to_string(),
                    space.part(i).value_shape().to_vec(),
                )
            })
            .collect();
        Self { parts }
    }

    pub fn instantiate(&self, grid: Grid) -> CompositeFunctionSpace {
        let parts = self
            .parts
            .iter()
            .map(|(n, s)| (n.as_str(), FunctionSpace::new(grid, s)))
            .collect();
        CompositeFunctionSpace::new(parts).expect("signature parts are consistent")
    }
}

/// A bilinear form given by a pointwise integrand over trial and test
/// fields, together with the coupling radius its sparsity pattern respects.
#[derive(Clone, Debug)]
pub struct BilinearForm {
    name: &'static str,
    trial: SpaceSignature,
    test: SpaceSignature,
    integrand: Integrand,
    radius: usize,
}

impl BilinearForm {
    /// The default radius 2 covers compositions of two first-order
    /// difference operators on either side.
    pub fn new(
        name: &'static str,
        trial: SpaceSignature,
        test: SpaceSignature,
        integrand: Integrand,
    ) -> Self {
        Self { name, trial, test, integrand, radius: 2 }
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = radius;
        self
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn trial_signature(&self) -> &SpaceSignature {
        &self.trial
    }

    pub fn test_signature(&self) -> &SpaceSignature {
        &self.test
    }

    fn evaluate(&self, trial: &[GridFunction], test: &[GridFunction]) -> GridFunction {
        let out = (self.integrand)(trial, test);
        assert!(out.is_scalar(), "form '{}' must produce a scalar integrand", self.name);
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds CSR storage from unordered entries; duplicate positions are a
    /// programming error upstream and panic.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            assert!(
                (w[0].0, w[0].1) != (w[1].0, w[1].1),
                "duplicate matrix entry at ({}, {})",
                w[0].0,
                w[0].1
            );
        }
        let mut row_offsets = vec![0usize; rows + 1];
        for &(r, _, _) in &entries {
            assert!(r < rows, "row index out of range");
            row_offsets[r + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = entries.iter().map(|&(_, c, _)| c).collect::<Vec<_>>();
        assert!(col_indices.iter().all(|&c| c < cols), "column index out of range");
        let values = entries.iter().map(|&(_, _, v)| v).collect();
        Self { rows, cols, row_offsets, col_indices, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        (0..self.rows)
            .map(|r| self.row_entries(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec length mismatch");
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in self.row_entries(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                d.set(r, c, v);
            }
        }
        d
    }

    /// The submatrix with the given test rows and trial columns deleted.
    pub fn remove_rows_cols(&self, rows: &DofSet, cols: &DofSet) -> Self {
        assert_eq!(rows.parent_dim(), self.rows, "row set dimension mismatch");
        assert_eq!(cols.parent_dim(), self.cols, "column set dimension mismatch");
        let row_map = renumber(self.rows, rows);
        let col_map = renumber(self.cols, cols);
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            if let Some(nr) = row_map[r] {
                for (c, v) in self.row_entries(r) {
                    if let Some(nc) = col_map[c] {
                        entries.push((nr, nc, v));
                    }
                }
            }
        }
        Self::from_triplets(rows.codim(), cols.codim(), entries)
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

fn renumber(dim: usize, removed: &DofSet) -> Vec<Option<usize>> {
    let mut map = vec![None; dim];
    let mut next = 0;
    for (k, slot) in map.iter_mut().enumerate() {
        if !removed.contains(k) {
            *slot = Some(next);
            next += 1;
        }
    }
    map
}

/// Assembles the form over `grid` into a sparse matrix with
/// `M[row_j, col_k] = integral of integrand(delta_k, delta_j)`.
///
/// Entries come from comb-shaped probe fields: deltas repeated with stride
/// `2 radius + 1` along both axes, so one integrand evaluation serves many
/// matrix entries at once and the assembly cost does not grow with the
/// number of dofs squared. Before assembling, the same routine runs on a
/// 4x4 guard grid and is compared entry by entry against assembly by
/// definition over all dof pairs; any disagreement aborts with a
/// radius-too-small error, and a bilinearity spot check rejects integrands
/// that are not linear in the trial argument.
pub fn assemble(form: &BilinearForm, grid: Grid) -> Result<SparseMatrix> {
    guard(form)?;
    Ok(assemble_probes(form, grid))
}

/// Assembly by definition: one integrand evaluation per (trial, test) dof
/// pair. Exact but quadratic in the number of dofs; the reference
/// implementation for guards and tests.
pub fn assemble_dense(form: &BilinearForm, grid: Grid) -> DenseMatrix {
    let trial = form.trial.instantiate(grid);
    let test = form.test.instantiate(grid);
    let cell = grid.cell_volume();
    let mut m = DenseMatrix::zeros(test.dim(), trial.dim());
    for col in 0..trial.dim() {
        let trial_fields = unit_fields(&trial, col);
        for row in 0..test.dim() {
            let test_fields = unit_fields(&test, row);
            let integ = form.evaluate(&trial_fields, &test_fields);
            let v = cell * integ.data().iter().sum::<f64>();
            if v != 0.0 {
                m.set(row, col, v);
            }
        }
    }
    m
}

/// The residual vector of the form against concrete trial fields:
/// `out[j] = integral of integrand(trial_fields, delta_j)`; equals
/// `assemble(form) . trial_value`.
pub fn apply_form(form: &BilinearForm, grid: Grid, trial_value: &[f64]) -> Result<Vec<f64>> {
    let trial = form.trial.instantiate(grid);
    let test = form.test.instantiate(grid);
    if trial_value.len() != trial.dim() {
        return Err(Error::DimensionMismatch { expected: trial.dim(), got: trial_value.len() });
    }
    let fields = trial.fields_from_vec(trial_value)?;
    let cell = grid.cell_volume();
    let mut out = Vec::with_capacity(test.dim());
    for row in 0..test.dim() {
        let test_fields = unit_fields(&test, row);
        let integ = form.evaluate(&fields, &test_fields);
        out.push(cell * integ.data().iter().sum::<f64>());
    }
    Ok(out)
}

/// Tabulates one field per composite part into the flat load vector; the
/// mass matrix applied to this vector is the load entering the system.
pub fn assemble_linear(space: &CompositeFunctionSpace, fields: &[GridFunction]) -> Result<Vec<f64>> {
    space.vector_of_values(fields)
}

/// Fields that are zero everywhere except a single 1 at the flat dof index.
fn unit_fields(space: &CompositeFunctionSpace, dof: usize) -> Vec<GridFunction> {
    let mut fields = space.zeros();
    let mut rest = dof;
    for (idx, f) in fields.iter_mut().enumerate() {
        let dim = space.part(idx).dim();
        if rest < dim {
            f.data_mut()[rest] = 1.0;
            break;
        }
        rest -= dim;
    }
    fields
}

fn guard(form: &BilinearForm) -> Result<()> {
    let grid = Grid::new(4, 4).expect("guard grid");
    let probe = assemble_probes(form, grid).to_dense();
    let dense = assemble_dense(form, grid);
    let scale = dense.max_abs().max(1.0);
    let mut deviation = 0.0f64;
    for i in 0..dense.rows() {
        for j in 0..dense.cols() {
            deviation = deviation.max((probe.at(i, j) - dense.at(i, j)).abs());
        }
    }
    if deviation > 1e-13 * scale {
        return Err(Error::CouplingRadiusTooSmall {
            form: form.name,
            radius: form.radius,
            deviation,
        });
    }

    let trial = form.trial.instantiate(grid);
    let mut state = 0x9e37_79b9_u64;
    let mut quasi = |k: usize| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(k as u64 | 1);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let u: Vec<f64> = (0..trial.dim()).map(&mut quasi).collect();
    let w: Vec<f64> = (0..trial.dim()).map(&mut quasi).collect();
    let alpha = 1.0 + quasi(7);
    let mixed: Vec<f64> = u.iter().zip(&w).map(|(a, b)| alpha * a + b).collect();
    let lhs = apply_form(form, grid, &mixed)?;
    let ru = apply_form(form, grid, &u)?;
    let rw = apply_form(form, grid, &w)?;
    let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let deviation = lhs
        .iter()
        .zip(ru.iter().zip(&rw))
        .map(|(l, (a, b))| (l - (alpha * a + b)).abs())
        .fold(0.0f64, f64::max);
    if deviation > 1e-10 * scale {
        return Err(Error::FormNotBilinear { form: form.name, deviation });
    }
    Ok(())
}

fn assemble_probes(form: &BilinearForm, grid: Grid) -> SparseMatrix {
    let trial = form.trial.instantiate(grid);
    let test = form.test.instantiate(grid);
    let stride = 2 * form.radius + 1;
    let radius = form.radius as isize;
    let (ni, nj) = grid.shape();
    let n = grid.size();
    let cell = grid.cell_volume();
    let mut entries = Vec::new();

    let trial_probes = probe_slots(&trial, stride, ni, nj);
    let test_probes = probe_slots(&test, stride, ni, nj);
    for &(pt, ct, at, bt) in &trial_probes {
        let trial_fields = comb_fields(&trial, pt, ct, at, bt, stride);
        for &(ps, cs, as_, bs) in &test_probes {
            let test_fields = comb_fields(&test, ps, cs, as_, bs, stride);
            let integ = form.evaluate(&trial_fields, &test_fields);
            let data = integ.data();
            let row_base = test.offset(ps) + cs * n;
            let col_base = trial.offset(pt) + ct * n;
            for ij in (as_..ni).step_by(stride) {
                for jj in (bs..nj).step_by(stride) {
                    let ik = window_residue(ij as isize, at as isize, radius, stride as isize);
                    let jk = window_residue(jj as isize, bt as isize, radius, stride as isize);
                    let (ik, jk) = match (ik, jk) {
                        (Some(a), Some(b)) if a < ni && b < nj => (a, b),
                        _ => continue,
                    };
                    let mut acc = 0.0;
                    let ilo = (ij as isize - radius).max(0) as usize;
                    let ihi = (ij + form.radius).min(ni - 1);
                    let jlo = (jj as isize - radius).max(0) as usize;
                    let jhi = (jj + form.radius).min(nj - 1);
                    for i in ilo..=ihi {
                        for j in jlo..=jhi {
                            acc += data[i * nj + j];
                        }
                    }
                    let v = cell * acc;
                    if v != 0.0 {
                        entries.push((row_base + grid.index_of(ij, jj), col_base + grid.index_of(ik, jk), v));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(test.dim(), trial.dim(), entries)
}

/// The unique index congruent to `residue` mod `stride` within the window
/// of half-width `radius` around `center`, if it is nonnegative.
fn window_residue(center: isize, residue: isize, radius: isize, stride: isize) -> Option<usize> {
    let lo = center - radius;
    let k = lo + (residue - lo).rem_euclid(stride);
    usize::try_from(k).ok()
}

fn probe_slots(
    space: &CompositeFunctionSpace,
    stride: usize,
    ni: usize,
    nj: usize,
) -> Vec<(usize, usize, usize, usize)> {
    let mut slots = Vec::new();
    for part in 0..space.num_parts() {
        for comp in 0..space.part(part).num_components() {
            for a in 0..stride.min(ni) {
                for b in 0..stride.min(nj) {
                    slots.push((part, comp, a, b));
                }
            }
        }
    }
    slots
}

/// One field per part, zero except for part `part` whose component `comp`
/// carries ones at every point congruent to `(a, b)` mod `stride`.
fn comb_fields(
    space: &CompositeFunctionSpace,
    part: usize,
    comp: usize,
    a: usize,
    b: usize,
    stride: usize,
) -> Vec<GridFunction> {
    let grid = space.grid();
    let (ni, nj) = grid.shape();
    let n = grid.size();
    let mut fields = space.zeros();
    let data = fields[part].data_mut();
    for i in (a..ni).step_by(stride) {
        for j in (b..nj).step_by(stride) {
            data[comp * n + i * nj + j] = 1.0;
        }
    }
    fields
}
