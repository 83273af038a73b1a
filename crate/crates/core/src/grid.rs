//! Concentration fields on a uniform, periodic 2D grid centred on the origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid sizes must be powers of two and at least {min}, got {nx}x{ny}")]
    BadSize { nx: usize, ny: usize, min: usize },
    #[error("grid extents must be positive and finite")]
    BadExtent,
    #[error("field has {got} values, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("grids differ: {0}")]
    GridMismatch(String),
}

pub const MIN_GRID: usize = 64;

/// Field samples `values[j * nx + i] = u(x_i, y_j)` with
/// `x_i = (i - nx/2) * lx/nx` and likewise for `y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    values: Vec<f64>,
}

/// Sidecar metadata written next to binary snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    #[serde(rename = "nx")]
    pub nx: usize,
    #[serde(rename = "ny")]
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "t")]
    pub t: f64,
}

impl GridField {
    pub fn from_values(nx: usize, ny: usize, lx: f64, ly: f64, values: Vec<f64>) -> Result<Self, GridError> {
        for n in [nx, ny] {
            if n < MIN_GRID || !n.is_power_of_two() {
                return Err(GridError::BadSize { nx, ny, min: MIN_GRID });
            }
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(GridError::BadExtent);
        }
        if values.len() != nx * ny {
            return Err(GridError::BadLength {
                expected: nx * ny,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { nx, ny, lx, ly, values })
    }

    pub fn zeros(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        Self::from_values(nx, ny, lx, ly, vec![0.0; nx * ny])
    }

    /// Samples `f(x, y)` at the grid nodes.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GridError> {
        let mut g = Self::zeros(nx, ny, lx, ly)?;
        for j in 0..ny {
            let y = g.y(j);
            for i in 0..nx {
                g.values[j * nx + i] = f(g.x(i), y);
            }
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(g)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx / 2) as f64) * self.hx()
    }
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny / 2) as f64) * self.hy()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest magnitude on the outermost ring of cells.
    pub fn boundary_max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.nx {
            m = m.max(self.get(i, 0).abs()).max(self.get(i, self.ny - 1).abs());
        }
        for j in 0..self.ny {
            m = m.max(self.get(0, j).abs()).max(self.get(self.nx - 1, j).abs());
        }
        m
    }

    /// Periodic shift by whole cells: the value at `(i, j)` moves to `(i + di, j + dj)`.
    pub fn shifted(&self, di: isize, dj: isize) -> GridField {
        let mut out = self.clone();
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        for j in 0..ny {
            for i in 0..nx {
                let ti = (i + di).rem_euclid(nx) as usize;
                let tj = (j + dj).rem_euclid(ny) as usize;
                out.values[tj * self.nx + ti] = self.values[(j * nx + i) as usize];
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> GridField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn header(&self, t: f64) -> SnapshotHeader {
        SnapshotHeader {
            nx: self.nx,
            ny: self.ny,
            lx: self.lx,
            ly: self.ly,
            t,
        }
    }

    /// Row-major little-endian `f64` bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(header: &SnapshotHeader, bytes: &[u8]) -> Result<Self, GridError> {
        let expected = header.nx * header.ny;
        if bytes.len() != expected * 8 {
            return Err(GridError::BadLength {
                expected,
                got: bytes.len() / 8,
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_values(header.nx, header.ny, header.lx, header.ly, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(GridField::zeros(32, 64, 1.0, 1.0).is_err());
        assert!(GridField::zeros(96, 64, 1.0, 1.0).is_err());
        assert!(GridField::zeros(64, 64, 0.0, 1.0).is_err());
        assert!(GridField::from_values(64, 64, 1.0, 1.0, vec![0.0; 10]).is_err());
    }

    #[test]
    fn origin_is_a_node() {
        let g = GridField::zeros(64, 128, 4.0, 8.0).unwrap();
        assert_eq!(g.x(32), 0.0);
        assert_eq!(g.y(64), 0.0);
        assert_eq!(g.x(0), -2.0);
    }

    #[test]
    fn snapshot_bytes_round_trip() {
        let g = GridField::from_fn(64, 64, 2.0, 2.0, |x, y| x * 3.0 - y).unwrap();
        let h = g.header(0.5);
        let back = GridField::from_le_bytes(&h, &g.to_le_bytes()).unwrap();
        assert_eq!(g, back);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"nx":64,"ny":64,"Lx":2.0,"Ly":2.0,"t":0.5}"#);
    }
}
