use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform cell-centred mesh on `[0, 1) x [0, 1]`, periodic in `x`.
///
/// Index `i` runs over processors (`x`), index `j` over stages (`z`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
}

impl Grid {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::Config(format!(
                "grid needs at least 3x3 cells, got {nx}x{nz}"
            )));
        }
        Ok(Grid {
            nx,
            nz,
            dx: 1.0 / nx as f64,
            dz: 1.0 / nz as f64,
        })
    }

    pub fn square(n: usize) -> Result<Self> {
        Grid::new(n, n)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dz
    }

    pub fn x_centres(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn z_centres(&self) -> Vec<f64> {
        (0..self.nz).map(|j| self.z(j)).collect()
    }

    /// Row whose centre is closest to `z`.
    pub fn row_nearest(&self, z: f64) -> usize {
        ((z / self.dz).floor().max(0.0) as usize).min(self.nz - 1)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dz
    }

    #[inline]
    pub(crate) fn right(&self, i: usize) -> usize {
        if i + 1 == self.nx { 0 } else { i + 1 }
    }

    #[inline]
    pub(crate) fn left(&self, i: usize) -> usize {
        if i == 0 { self.nx - 1 } else { i - 1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centres_and_neighbours() {
        let g = Grid::new(4, 5).unwrap();
        assert_eq!(g.x(0), 0.125);
        assert_eq!(g.z(4), 0.9);
        assert_eq!(g.left(0), 3);
        assert_eq!(g.right(3), 0);
        assert_eq!(g.row_nearest(0.5), 2);
        assert_eq!(g.row_nearest(1.0), 4);
        assert_eq!(g.row_nearest(-0.1), 0);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(2, 10).is_err());
        assert!(Grid::new(10, 2).is_err());
    }
}
