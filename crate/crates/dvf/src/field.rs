use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// Dense samples of a scalar-, vector- or tensor-valued function on a [`Grid`].
///
/// `value_shape` is `[]` for scalars, `[2]` for plane vectors and `[2, 2]`
/// for tensors (leading index first). Storage is component-major: component
/// `c` (its multi-index flattened row-major) occupies the contiguous block
/// `data[c * grid.size() .. (c + 1) * grid.size()]`, each block ordered like
/// `Grid::index_of`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    value_shape: Vec<usize>,
    data: Vec<f64>,
}

/// Sample types accepted by [`GridFunction::from_fn`].
pub trait SampleValue {
    const SHAPE: &'static [usize];
    fn write(self, out: &mut [f64]);
}

impl SampleValue for f64 {
    const SHAPE: &'static [usize] = &[];
    fn write(self, out: &mut [f64]) {
        out[0] = self;
    }
}

impl SampleValue for [f64; 2] {
    const SHAPE: &'static [usize] = &[2];
    fn write(self, out: &mut [f64]) {
        out.copy_from_slice(&self);
    }
}

impl SampleValue for [[f64; 2]; 2] {
    const SHAPE: &'static [usize] = &[2, 2];
    fn write(self, out: &mut [f64]) {
        out[0] = self[0][0];
        out[1] = self[0][1];
        out[2] = self[1][0];
        out[3] = self[1][1];
    }
}

impl GridFunction {
    pub fn zeros(grid: Grid, value_shape: &[usize]) -> GridFunction {
        let n = grid.size() * value_shape.iter().product::<usize>().max(1);
        GridFunction {
            grid,
            value_shape: value_shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> GridFunction {
        let mut f = GridFunction::zeros(grid, &[]);
        f.data.fill(value);
        f
    }

    /// Samples `f` at every grid point. The value shape is fixed by the
    /// return type, so mixed shapes cannot occur.
    pub fn from_fn<V: SampleValue>(grid: Grid, f: impl Fn(f64, f64) -> V) -> GridFunction {
        let n = grid.size();
        let ncomp = V::SHAPE.iter().product::<usize>().max(1);
        let mut data = vec![0.0; ncomp * n];
        let mut buf = vec![0.0; ncomp];
        for (k, (i, j)) in grid.indices().enumerate() {
            let (x, y) = grid.point(i, j);
            f(x, y).write(&mut buf);
            for (c, &v) in buf.iter().enumerate() {
                data[c * n + k] = v;
            }
        }
        GridFunction {
            grid,
            value_shape: V::SHAPE.to_vec(),
            data,
        }
    }

    /// Samples a closure returning a dynamically sized value. A length-1
    /// sample yields a scalar field; inconsistent lengths are rejected.
    pub fn from_fn_dyn(grid: Grid, f: impl Fn(f64, f64) -> Vec<f64>) -> Result<GridFunction> {
        let n = grid.size();
        let mut data: Vec<f64> = Vec::new();
        let mut ncomp = 0usize;
        for (k, (i, j)) in grid.indices().enumerate() {
            let (x, y) = grid.point(i, j);
            let v = f(x, y);
            if k == 0 {
                ncomp = v.len();
                if ncomp == 0 {
                    return Err(Error::InconsistentValueShape(
                        "empty sample value".to_string(),
                    ));
                }
                data = vec![0.0; ncomp * n];
            } else if v.len() != ncomp {
                return Err(Error::InconsistentValueShape(format!(
                    "first sample had {} components, sample at flat index {} has {}",
                    ncomp,
                    k,
                    v.len()
                )));
            }
            for (c, &x) in v.iter().enumerate() {
                data[c * n + k] = x;
            }
        }
        let value_shape = if ncomp == 1 { vec![] } else { vec![ncomp] };
        Ok(GridFunction {
            grid,
            value_shape,
            data,
        })
    }

    /// Wraps an existing component-major tabulation.
    pub fn from_array(grid: Grid, value_shape: &[usize], data: Vec<f64>) -> Result<GridFunction> {
        let expected = grid.size() * value_shape.iter().product::<usize>().max(1);
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(GridFunction {
            grid,
            value_shape: value_shape.to_vec(),
            data,
        })
    }

    /// Stacks equally shaped fields along a new leading value axis.
    pub fn from_components(parts: &[GridFunction]) -> GridFunction {
        assert!(!parts.is_empty(), "no components given");
        let first = &parts[0];
        let mut data = Vec::with_capacity(parts.len() * first.data.len());
        for p in parts {
            assert_eq!(p.grid, first.grid, "components live on different grids");
            assert_eq!(
                p.value_shape, first.value_shape,
                "components have different value shapes"
            );
            data.extend_from_slice(&p.data);
        }
        let mut value_shape = vec![parts.len()];
        value_shape.extend_from_slice(&first.value_shape);
        GridFunction {
            grid: first.grid,
            value_shape,
            data,
        }
    }

    /// The coordinate field `x` or `y`.
    pub fn coordinate(grid: Grid, axis: Axis) -> GridFunction {
        GridFunction::from_fn(grid, |x, y| match axis {
            Axis::X => x,
            Axis::Y => y,
        })
    }

    /// One component of the outward facet normal as a scalar field.
    pub fn facet_normal_component(grid: Grid, axis: Axis) -> GridFunction {
        let mut f = GridFunction::zeros(grid, &[]);
        for (k, (i, j)) in grid.indices().enumerate() {
            let n = grid.facet_normal(i, j);
            f.data[k] = match axis {
                Axis::X => n[0],
                Axis::Y => n[1],
            };
        }
        f
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn value_shape(&self) -> &[usize] {
        &self.value_shape
    }

    pub fn is_scalar(&self) -> bool {
        self.value_shape.is_empty()
    }

    /// Reinterprets the value shape without touching the samples; the
    /// component count must stay the same.
    pub fn reshape(&mut self, shape: &[usize]) -> Result<()> {
        let new_count = shape.iter().product::<usize>().max(1);
        if new_count != self.num_components() {
            return Err(Error::InconsistentValueShape(format!(
                "cannot reshape {:?} into {:?}",
                self.value_shape, shape
            )));
        }
        self.value_shape = shape.to_vec();
        Ok(())
    }

    pub fn num_components(&self) -> usize {
        self.value_shape.iter().product::<usize>().max(1)
    }

    /// Component-major tabulation, component blocks in flat point order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Sample of flat component `c` at point `(i, j)`.
    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[c * self.grid.size() + self.grid.index_of(i, j)]
    }

    /// Sample of a scalar field at point `(i, j)`.
    pub fn scalar_at(&self, i: usize, j: usize) -> f64 {
        assert!(self.is_scalar(), "scalar_at on a non-scalar field");
        self.data[self.grid.index_of(i, j)]
    }

    /// Extracts slice `c` along the leading value axis: a tensor yields a
    /// vector, a vector yields a scalar.
    pub fn component(&self, c: usize) -> GridFunction {
        assert!(
            !self.value_shape.is_empty(),
            "component() on a scalar field"
        );
        let lead = self.value_shape[0];
        assert!(c < lead, "component {} out of range {}", c, lead);
        let rest = &self.value_shape[1..];
        let block = self.data.len() / lead;
        GridFunction {
            grid: self.grid,
            value_shape: rest.to_vec(),
            data: self.data[c * block..(c + 1) * block].to_vec(),
        }
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            value_shape: self.value_shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise quotient; a zero sample in the divisor is an error rather
    /// than a silent infinity.
    pub fn checked_div(&self, rhs: &GridFunction) -> Result<GridFunction> {
        let (a, b) = broadcast_pair(self, rhs);
        for (index, &d) in b.data.iter().enumerate() {
            if d == 0.0 {
                return Err(Error::DivisionByZeroSample { index });
            }
        }
        Ok(zip_fields(&a, &b, |x, y| x / y))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Full contraction of two equally shaped fields into a scalar field.
pub fn dot(a: &GridFunction, b: &GridFunction) -> GridFunction {
    assert_eq!(a.grid, b.grid, "dot: fields live on different grids");
    assert_eq!(
        a.value_shape, b.value_shape,
        "dot: value shapes {:?} vs {:?}",
        a.value_shape, b.value_shape
    );
    let n = a.grid.size();
    let mut out = vec![0.0; n];
    for c in 0..a.num_components() {
        let xa = &a.data[c * n..(c + 1) * n];
        let xb = &b.data[c * n..(c + 1) * n];
        for ((o, &u), &v) in out.iter_mut().zip(xa).zip(xb) {
            *o += u * v;
        }
    }
    GridFunction {
        grid: a.grid,
        value_shape: vec![],
        data: out,
    }
}

pub fn max_abs_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    assert_eq!(a.value_shape, b.value_shape);
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

fn zip_fields(a: &GridFunction, b: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
    GridFunction {
        grid: a.grid,
        value_shape: a.value_shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Broadcasts a scalar operand across the components of the other side.
fn broadcast_pair(a: &GridFunction, b: &GridFunction) -> (GridFunction, GridFunction) {
    assert_eq!(a.grid, b.grid, "fields live on different grids");
    if a.value_shape == b.value_shape {
        return (a.clone(), b.clone());
    }
    if a.is_scalar() {
        return (tile(a, &b.value_shape), b.clone());
    }
    if b.is_scalar() {
        return (a.clone(), tile(b, &a.value_shape));
    }
    panic!(
        "incompatible value shapes {:?} vs {:?}",
        a.value_shape, b.value_shape
    );
}

fn tile(scalar: &GridFunction, shape: &[usize]) -> GridFunction {
    let ncomp = shape.iter().product::<usize>().max(1);
    let mut data = Vec::with_capacity(ncomp * scalar.data.len());
    for _ in 0..ncomp {
        data.extend_from_slice(&scalar.data);
    }
    GridFunction {
        grid: scalar.grid,
        value_shape: shape.to_vec(),
        data,
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&GridFunction> for &GridFunction {
            type Output = GridFunction;
            fn $method(self, rhs: &GridFunction) -> GridFunction {
                let (a, b) = broadcast_pair(self, rhs);
                zip_fields(&a, &b, |x, y| x $op y)
            }
        }

        impl $trait<&GridFunction> for GridFunction {
            type Output = GridFunction;
            fn $method(self, rhs: &GridFunction) -> GridFunction {
                (&self).$method(rhs)
            }
        }

        impl $trait<GridFunction> for GridFunction {
            type Output = GridFunction;
            fn $method(self, rhs: GridFunction) -> GridFunction {
                (&self).$method(&rhs)
            }
        }
    };
}

binary_op!(Add, add, +);
binary_op!(Sub, sub, -);
binary_op!(Mul, mul, *);

impl Div<&GridFunction> for &GridFunction {
    type Output = GridFunction;
    fn div(self, rhs: &GridFunction) -> GridFunction {
        self.checked_div(rhs)
            .expect("pointwise division hit a zero sample")
    }
}

impl Div<GridFunction> for GridFunction {
    type Output = GridFunction;
    fn div(self, rhs: GridFunction) -> GridFunction {
        (&self).div(&rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        self.map(|v| -v)
    }
}

impl Neg for GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        (&self).neg()
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.map(|v| v * rhs)
    }
}

impl Mul<f64> for GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.map(|v| v * rhs)
    }
}

impl Mul<&GridFunction> for f64 {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        rhs.map(|v| self * v)
    }
}

impl Mul<GridFunction> for f64 {
    type Output = GridFunction;
    fn mul(self, rhs: GridFunction) -> GridFunction {
        rhs.map(|v| self * v)
    }
}
