use crate::field::{dot, GridFunction};
use crate::grid::Axis;

/// Direction of one-sided operations: `Plus` looks forward, `Minus` backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Shift by one grid step along `axis`, filling with zero where the shifted
/// index leaves the grid: `(shift_plus f)(i) = f(i+1)` with zero at the far
/// edge, and symmetrically for `Minus`.
pub fn shift(f: &GridFunction, axis: Axis, sign: Sign) -> GridFunction {
    stencil(f, axis, sign, |_, there| there)
}

/// One-sided difference quotient along `axis`, zero where undefined:
///
/// ```text
/// (diff_plus  f)(i) = (f(i+1) - f(i)) / h   for i < n, 0 at i = n
/// (diff_minus f)(i) = (f(i) - f(i-1)) / h   for i > 0, 0 at i = 0
/// ```
///
/// Both signs evaluate the difference as `(right sample - left sample)`, so
/// the backward difference at `i` is bitwise the forward difference at
/// `i - 1`.
pub fn diff(f: &GridFunction, axis: Axis, sign: Sign) -> GridFunction {
    let inv_h = 1.0 / f.grid().spacing(axis);
    match sign {
        Sign::Plus => stencil(f, axis, sign, move |here, there| (there - here) * inv_h),
        Sign::Minus => stencil(f, axis, sign, move |here, there| (here - there) * inv_h),
    }
}

/// Applies `op(f(i), f(i +/- 1))` along `axis`, stepping in the direction of
/// the sign; output samples whose neighbour falls outside the grid are zero.
fn stencil(
    f: &GridFunction,
    axis: Axis,
    sign: Sign,
    op: impl Fn(f64, f64) -> f64,
) -> GridFunction {
    let grid = f.grid();
    let (ni, nj) = grid.shape();
    let n = grid.size();
    let stride = match axis {
        Axis::X => nj,
        Axis::Y => 1,
    };
    let last = match axis {
        Axis::X => ni - 1,
        Axis::Y => nj - 1,
    };
    let mut out = GridFunction::zeros(grid, f.value_shape());
    let src = f.data();
    let dst = out.data_mut();
    for c in 0..f.num_components() {
        let base = c * n;
        for i in 0..ni {
            for j in 0..nj {
                let along = match axis {
                    Axis::X => i,
                    Axis::Y => j,
                };
                let k = base + i * nj + j;
                match sign {
                    Sign::Plus => {
                        if along < last {
                            dst[k] = op(src[k], src[k + stride]);
                        }
                    }
                    Sign::Minus => {
                        if along > 0 {
                            dst[k] = op(src[k], src[k - stride]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// One-sided gradient; prepends a derivative axis of extent 2, so the
/// gradient of a 2-vector is a 2 x 2 tensor ordered `[derivative, component]`.
pub fn grad(f: &GridFunction, sign: Sign) -> GridFunction {
    GridFunction::from_components(&[diff(f, Axis::X, sign), diff(f, Axis::Y, sign)])
}

/// One-sided divergence; contracts the leading extent, which must be 2.
pub fn div(f: &GridFunction, sign: Sign) -> GridFunction {
    assert_eq!(
        f.value_shape().first(),
        Some(&2),
        "div needs a leading extent of 2, got shape {:?}",
        f.value_shape()
    );
    diff(&f.component(0), Axis::X, sign) + diff(&f.component(1), Axis::Y, sign)
}

/// Discrete Laplacian `div_plus(grad_minus(f))`; the classic five-point
/// stencil at interior points.
pub fn laplacian_h(f: &GridFunction) -> GridFunction {
    div(&grad(f, Sign::Minus), Sign::Plus)
}

/// Zeroes all boundary samples, leaving interior samples untouched.
pub fn zero_boundary(f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let n = grid.size();
    let mut out = f.clone();
    let data = out.data_mut();
    for (k, (i, j)) in grid.indices().enumerate() {
        if grid.is_boundary(i, j) {
            for c in 0..f.num_components() {
                data[c * n + k] = 0.0;
            }
        }
    }
    out
}

/// Mesh integral of a scalar field: `hx * hy * sum of samples`.
pub fn integrate(f: &GridFunction) -> f64 {
    assert!(f.is_scalar(), "integrate expects a scalar integrand");
    f.grid().cell_volume() * f.data().iter().sum::<f64>()
}

/// Mesh inner product `<f, g>_h`, contracting all value components.
pub fn inner_h(f: &GridFunction, g: &GridFunction) -> f64 {
    integrate(&dot(f, g))
}

pub fn norm_h(f: &GridFunction) -> f64 {
    inner_h(f, f).sqrt()
}

/// Gradient inner product `<grad_plus f, grad_plus g>_h`.
pub fn inner_grad_h(f: &GridFunction, g: &GridFunction) -> f64 {
    inner_h(&grad(f, Sign::Plus), &grad(g, Sign::Plus))
}

pub fn seminorm_grad_h(f: &GridFunction) -> f64 {
    inner_grad_h(f, f).sqrt()
}

/// Mesh boundary integral of a scalar field. Each boundary point is counted
/// once, weighted by the spacing along its edge: `hy` on the left and right
/// edges (corners included), `hx` on the remaining top and bottom points.
/// With integrands of the form `f * g * n_x` this makes
/// `<diff_plus_x f, g>_h = -<f, diff_minus_x g>_h + boundary_integral(f g n_x)`
/// exact on every grid; the `y` counterpart is exact on square grids.
pub fn boundary_integral(f: &GridFunction) -> f64 {
    assert!(f.is_scalar(), "boundary_integral expects a scalar integrand");
    let grid = f.grid();
    let (hx, hy) = (grid.hx(), grid.hy());
    let nx = grid.nx();
    let data = f.data();
    let mut acc = 0.0;
    for (k, (i, j)) in grid.indices().enumerate() {
        if !grid.is_boundary(i, j) {
            continue;
        }
        let w = if i == 0 || i == nx { hy } else { hx };
        acc += w * data[k];
    }
    acc
}
