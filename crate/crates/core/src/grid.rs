//! Space-time sample grids on the torus `[-1/2, 1/2)^2`.

use serde::{Deserialize, Serialize};

/// A point `(x1, x2, t)`.
pub type Point = [f64; 3];

/// Wraps a coordinate into `[-1/2, 1/2)`.
pub fn wrap(x: f64) -> f64 {
    let y = x - x.round();
    if y >= 0.5 {
        y - 1.0
    } else {
        y
    }
}

/// Cell-centred nodes in space and midpoint nodes in `[t0, t1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t0: f64,
    pub t1: f64,
}

impl SpaceTimeGrid {
    pub fn new(nx: usize, ny: usize, nt: usize, t0: f64, t1: f64) -> Self {
        Self { nx, ny, nt, t0, t1 }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.nt as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 + (i as f64 + 0.5) * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -0.5 + (j as f64 + 0.5) * self.dy()
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + (k as f64 + 0.5) * self.dt()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        [self.x(i), self.y(j), self.t(k)]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index with `t` fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nt + k
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dt()
    }

    /// `(i, j, k, point)` in row-major order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, usize, Point)> + '_ {
        (0..self.nx).flat_map(move |i| {
            (0..self.ny)
                .flat_map(move |j| (0..self.nt).map(move |k| (i, j, k, self.point(i, j, k))))
        })
    }
}
