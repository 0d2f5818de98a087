use crate::error::{Error, Result};

/// Coordinate axis of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

pub const AXES: [Axis; 2] = [Axis::X, Axis::Y];

/// Uniform collocation grid on the closed unit square.
///
/// `nx` and `ny` count intervals, so the grid carries `(nx+1) * (ny+1)`
/// points with spacings `hx = 1/nx`, `hy = 1/ny`. Point `(i, j)` sits at
/// `(i * hx, j * hy)`; a point is a boundary point when `i` is `0` or `nx`,
/// or `j` is `0` or `ny`.
///
/// The flat point ordering is row-major with the x-index outermost:
/// `index_of(i, j) = i * (ny + 1) + j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// Creates a grid with `nx * ny` cells. Fewer than 2 intervals per axis
    /// leaves no interior point on that axis and is rejected.
    pub fn new(nx: usize, ny: usize) -> Result<Grid> {
        if nx < 2 || ny < 2 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        Ok(Grid {
            nx,
            ny,
            hx: 1.0 / nx as f64,
            hy: 1.0 / ny as f64,
        })
    }

    pub fn square(n: usize) -> Result<Grid> {
        Grid::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hx,
            Axis::Y => self.hy,
        }
    }

    /// Point counts per axis, `(nx + 1, ny + 1)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny + 1)
    }

    /// Total number of grid points.
    pub fn size(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Volume `hx * hy` of one cell; the weight of the mesh inner product.
    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// Coordinates of point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        self.check_index(i, j);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    /// Flat index of point `(i, j)` under the row-major, x-outer ordering.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        i * (self.ny + 1) + j
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        self.check_index(i, j);
        i == 0 || i == self.nx || j == 0 || j == self.ny
    }

    /// Outward facet normal at point `(i, j)`: `-1`/`+1` per axis on the
    /// matching edges, zero in the interior. Corners carry both components.
    pub fn facet_normal(&self, i: usize, j: usize) -> [f64; 2] {
        self.check_index(i, j);
        let nx = if i == 0 {
            -1.0
        } else if i == self.nx {
            1.0
        } else {
            0.0
        };
        let ny = if j == 0 {
            -1.0
        } else if j == self.ny {
            1.0
        } else {
            0.0
        };
        [nx, ny]
    }

    /// All `(i, j)` indices in flat order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> {
        let (ni, nj) = self.shape();
        (0..ni).flat_map(move |i| (0..nj).map(move |j| (i, j)))
    }

    /// Boundary `(i, j)` indices in flat order.
    pub fn boundary_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices().filter(|&(i, j)| self.is_boundary(i, j))
    }

    /// Number of boundary points, `2 * (nx + ny)`.
    pub fn boundary_count(&self) -> usize {
        2 * (self.nx + self.ny)
    }

    fn check_index(&self, i: usize, j: usize) {
        assert!(
            i <= self.nx && j <= self.ny,
            "grid index ({}, {}) out of range for {} x {} intervals",
            i,
            j,
            self.nx,
            self.ny
        );
    }
}
