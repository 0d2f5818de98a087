use crate::error::{Error, Result};
use crate::field::GridFunction;
use crate::grid::Grid;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

/// All grid functions over one grid with a fixed value shape, viewed as a
/// flat coefficient vector of length `grid.size() * num_components`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSpace {
    grid: Grid,
    shape: Vec<usize>,
}

impl FunctionSpace {
    pub fn new(grid: Grid, shape: &[usize]) -> Self {
        Self { grid, shape: shape.to_vec() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn value_shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_components(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.grid.size() * self.num_components()
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction::zeros(self.grid, &self.shape)
    }

    /// Wraps a coefficient vector as a field of this space.
    pub fn from_vec(&self, data: Vec<f64>) -> Result<GridFunction> {
        GridFunction::from_array(self.grid, &self.shape, data)
    }

    /// Member check; the coefficient layout of members is already the flat
    /// vector, so conversions are plain copies.
    pub fn contains(&self, f: &GridFunction) -> bool {
        f.grid() == self.grid && f.value_shape() == self.shape
    }
}

/// An ordered list of named function spaces over a common grid, flattened
/// into one coefficient vector part by part.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeFunctionSpace {
    parts: Vec<(String, FunctionSpace)>,
    offsets: Vec<usize>,
    dim: usize,
}

impl CompositeFunctionSpace {
    pub fn new(parts: Vec<(&str, FunctionSpace)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("a composite space needs at least one part".into()));
        }
        let grid = parts[0].1.grid();
        if parts.iter().any(|(_, s)| s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let mut offsets = Vec::with_capacity(parts.len());
        let mut dim = 0;
        for (_, space) in &parts {
            offsets.push(dim);
            dim += space.dim();
        }
        Ok(Self {
            parts: parts.into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
            offsets,
            dim,
        })
    }

    /// The same parts re-instantiated over another grid.
    pub fn with_grid(&self, grid: Grid) -> Self {
        let parts = self
            .parts
            .iter()
            .map(|(n, s)| (n.as_str(), FunctionSpace::new(grid, s.value_shape())))
            .collect();
        Self::new(parts).expect("parts stay consistent under a grid change")
    }

    pub fn grid(&self) -> Grid {
        self.parts[0].1.grid()
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn part(&self, idx: usize) -> &FunctionSpace {
        &self.parts[idx].1
    }

    pub fn part_name(&self, idx: usize) -> &str {
        &self.parts[idx].0
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.parts.iter().position(|(n, _)| n == name)
    }

    /// Start of part `idx` within the flat coefficient vector.
    pub fn offset(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn zeros(&self) -> Vec<GridFunction> {
        self.parts.iter().map(|(_, s)| s.zeros()).collect()
    }

    /// Flattens one field per part into a single coefficient vector.
    pub fn vector_of_values(&self, fields: &[GridFunction]) -> Result<Vec<f64>> {
        if fields.len() != self.parts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.parts.len(),
                got: fields.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dim);
        for ((name, space), f) in self.parts.iter().zip(fields) {
            if !space.contains(f) {
                return Err(Error::InconsistentValueShape(format!(
                    "field does not belong to part {name:?}"
                )));
            }
            out.extend_from_slice(f.data());
        }
        Ok(out)
    }

    /// Splits a flat coefficient vector back into one field per part.
    pub fn fields_from_vec(&self, v: &[f64]) -> Result<Vec<GridFunction>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let mut out = Vec::with_capacity(self.parts.len());
        for (idx, (_, space)) in self.parts.iter().enumerate() {
            let lo = self.offsets[idx];
            out.push(space.from_vec(v[lo..lo + space.dim()].to_vec())?);
        }
        Ok(out)
    }

    /// Merges per-part dof sets into one set over the flat vector.
    pub fn combine_dofs(&self, sets: &[DofSet]) -> Result<DofSet> {
        if sets.len() != self.parts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.parts.len(),
                got: sets.len(),
            });
        }
        let mut indices = Vec::new();
        for (idx, set) in sets.iter().enumerate() {
            let dim = self.parts[idx].1.dim();
            if set.parent_dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: set.parent_dim() });
            }
            indices.extend(set.indices().iter().map(|k| k + self.offsets[idx]));
        }
        DofSet::new(indices, self.dim)
    }
}

/// A sorted set of coefficient indices within a vector of length
/// `parent_dim`, used to carve constrained entries out of vectors and
/// matrices and to put them back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofSet {
    indices: Vec<usize>,
    parent_dim: usize,
}

impl DofSet {
    /// Builds a set from strictly increasing in-range indices.
    pub fn new(indices: Vec<usize>, parent_dim: usize) -> Result<Self> {
        for (pos, &k) in indices.iter().enumerate() {
            let ordered = pos == 0 || indices[pos - 1] < k;
            if !ordered || k >= parent_dim {
                return Err(Error::DofOutOfRange { index: k, dim: parent_dim });
            }
        }
        Ok(Self { indices, parent_dim })
    }

    pub fn empty(parent_dim: usize) -> Self {
        Self { indices: Vec::new(), parent_dim }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parent_dim(&self) -> usize {
        self.parent_dim
    }

    /// Dimension left after removing the set.
    pub fn codim(&self) -> usize {
        self.parent_dim - self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Drops the entries at the set's indices, keeping the rest in order.
    pub fn remove(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.parent_dim, "vector length mismatch");
        let mut out = Vec::with_capacity(self.codim());
        let mut next = self.indices.iter().peekable();
        for (k, &v) in full.iter().enumerate() {
            if next.peek() == Some(&&k) {
                next.next();
            } else {
                out.push(v);
            }
        }
        out
    }

    /// Scatters a reduced vector back to full length, writing `fill` at the
    /// set's indices.
    pub fn reinsert(&self, reduced: &[f64], fill: f64) -> Vec<f64> {
        assert_eq!(reduced.len(), self.codim(), "vector length mismatch");
        let mut out = Vec::with_capacity(self.parent_dim);
        let mut next = self.indices.iter().peekable();
        let mut src = reduced.iter();
        for k in 0..self.parent_dim {
            if next.peek() == Some(&&k) {
                next.next();
                out.push(fill);
            } else {
                out.push(*src.next().expect("reduced vector exhausted"));
            }
        }
        out
    }
}

impl Serialize for DofSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.indices.len()))?;
        for k in &self.indices {
            seq.serialize_element(k)?;
        }
        seq.end()
    }
}

/// Selects the dofs of `space` whose grid point carries mask value 1
/// (or 0 with `invert`), replicated across all value components. The mask
/// must be a scalar 0/1 field on the space's grid.
pub fn select_dofs(space: &FunctionSpace, mask: &GridFunction, invert: bool) -> Result<DofSet> {
    if mask.grid() != space.grid() {
        return Err(Error::GridMismatch);
    }
    if !mask.is_scalar() {
        return Err(Error::InconsistentValueShape("a dof mask must be scalar".into()));
    }
    if let Some((index, &value)) =
        mask.data().iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0)
    {
        return Err(Error::MaskNotBinary { index, value });
    }
    let want = if invert { 0.0 } else { 1.0 };
    let n = space.grid().size();
    let mut indices = Vec::new();
    for c in 0..space.num_components() {
        for (k, &v) in mask.data().iter().enumerate() {
            if v == want {
                indices.push(c * n + k);
            }
        }
    }
    DofSet::new(indices, space.dim())
}

/// Selects the dofs of `space` whose grid point satisfies the predicate,
/// replicated across all value components.
pub fn select_dofs_where(
    space: &FunctionSpace,
    pred: impl Fn(usize, usize) -> bool,
) -> DofSet {
    let grid = space.grid();
    let n = grid.size();
    let mut indices = Vec::new();
    for c in 0..space.num_components() {
        for (k, (i, j)) in grid.indices().enumerate() {
            if pred(i, j) {
                indices.push(c * n + k);
            }
        }
    }
    DofSet::new(indices, space.dim()).expect("enumeration order is sorted and in range")
}

/// Mask that is 1 at interior points and 0 on the boundary.
pub fn interior_mask(grid: Grid) -> GridFunction {
    let mut f = GridFunction::zeros(grid, &[]);
    let data = f.data_mut();
    for (k, (i, j)) in grid.indices().enumerate() {
        if !grid.is_boundary(i, j) {
            data[k] = 1.0;
        }
    }
    f
}

/// Mask that is 0 where a pressure value gets pinned: the left edge, the
/// bottom edge, and the far corner. Removing these from an otherwise
/// unconstrained scalar space leaves one quasi-constant direction that the
/// divergence form cannot see.
pub fn pressure_mask(grid: Grid) -> GridFunction {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut f = GridFunction::constant(grid, 1.0);
    let data = f.data_mut();
    for (k, (i, j)) in grid.indices().enumerate() {
        if i == 0 || j == 0 || (i == nx && j == ny) {
            data[k] = 0.0;
        }
    }
    f
}
