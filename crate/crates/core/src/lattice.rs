//! Regular lattice caches with multilinear interpolation and a flat binary
//! persistence format shared by mollifier caches and oracle solutions.
//!
//! File layout (little-endian):
//!   magic  b"LAT1"
//!   dims   3 x u32
//!   bbox   6 x f64  (lo, hi)
//!   level  i64      (mollifier level or -1)
//!   values dims[0]*dims[1]*dims[2] x f64, row-major with z fastest

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point};

const MAGIC: &[u8; 4] = b"LAT1";

#[derive(Debug, Clone)]
pub struct Lattice3 {
    pub bbox: Aabb,
    pub dims: [usize; 3],
    pub level: i64,
    pub values: Vec<f64>,
}

impl Lattice3 {
    pub fn new(bbox: Aabb, dims: [usize; 3], level: i64) -> Self {
        assert!(dims.iter().all(|&d| d >= 2), "need at least 2 nodes per axis");
        Self {
            bbox,
            dims,
            level,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Node counts chosen so the spacing is at most `pitch`.
    pub fn with_pitch(bbox: Aabb, pitch: f64, level: i64) -> Self {
        let mut dims = [0usize; 3];
        for (dim, (lo, hi)) in dims.iter_mut().zip(bbox.lo.iter().zip(&bbox.hi)) {
            *dim = (((hi - lo) / pitch).ceil() as usize + 1).max(2);
        }
        Self::new(bbox, dims, level)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        [
            self.coord(0, i),
            self.coord(1, j),
            self.coord(2, k),
        ]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.dims[axis];
        self.bbox.lo[axis] + (self.bbox.hi[axis] - self.bbox.lo[axis]) * i as f64 / (n - 1) as f64
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bbox.hi[axis] - self.bbox.lo[axis]) / (self.dims[axis] - 1) as f64
    }

    /// Fill all nodes from a function, in parallel, deterministic output.
    pub fn fill<F: Fn(Point) -> f64 + Sync>(&mut self, f: F) {
        use rayon::prelude::*;
        let dims = self.dims;
        let bbox = self.bbox;
        let coord = |axis: usize, i: usize| {
            bbox.lo[axis] + (bbox.hi[axis] - bbox.lo[axis]) * i as f64 / (dims[axis] - 1) as f64
        };
        self.values
            .par_chunks_mut(dims[1] * dims[2])
            .enumerate()
            .for_each(|(i, plane)| {
                let x = coord(0, i);
                for j in 0..dims[1] {
                    let y = coord(1, j);
                    for k in 0..dims[2] {
                        plane[j * dims[2] + k] = f([x, y, coord(2, k)]);
                    }
                }
            });
    }

    pub fn contains(&self, x: Point) -> bool {
        self.bbox.contains(x)
    }

    /// Trilinear interpolation; errors outside the lattice box.
    pub fn interp(&self, x: Point) -> Result<f64> {
        if !self.bbox.contains(x) {
            return Err(Error::OutOfCache { point: x });
        }
        Ok(self.interp_clamped(x))
    }

    /// Trilinear interpolation with clamping to the box (no error path).
    pub fn interp_clamped(&self, x: Point) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let t = ((x[a] - self.bbox.lo[a]) / (self.bbox.hi[a] - self.bbox.lo[a]))
                .clamp(0.0, 1.0)
                * (n - 1) as f64;
            let i = (t.floor() as usize).min(n - 2);
            idx[a] = i;
            frac[a] = t - i as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let v = |di: usize, dj: usize, dk: usize| self.values[self.index(i + di, j + dj, k + dk)];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(v(0, 0, 0), v(1, 0, 0), fx);
        let c10 = lerp(v(0, 1, 0), v(1, 1, 0), fx);
        let c01 = lerp(v(0, 0, 1), v(1, 0, 1), fx);
        let c11 = lerp(v(0, 1, 1), v(1, 1, 1), fx);
        let c0 = lerp(c00, c10, fy);
        let c1 = lerp(c01, c11, fy);
        lerp(c0, c1, fz)
    }

    /// Centered-difference gradient of the interpolated field.
    pub fn gradient(&self, x: Point) -> [f64; 3] {
        let mut g = [0.0; 3];
        for a in 0..3 {
            let h = 0.5 * self.spacing(a);
            let mut xp = x;
            let mut xm = x;
            xp[a] = (x[a] + h).min(self.bbox.hi[a]);
            xm[a] = (x[a] - h).max(self.bbox.lo[a]);
            g[a] = (self.interp_clamped(xp) - self.interp_clamped(xm)) / (xp[a] - xm[a]);
        }
        g
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(4 + 12 + 56 + self.values.len() * 8);
        buf.extend_from_slice(MAGIC);
        for d in self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.bbox.lo.iter().chain(self.bbox.hi.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.level.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let fail = || Error::Config(format!("malformed lattice file {}", path.display()));
        if bytes.len() < 4 + 12 + 56 || &bytes[0..4] != MAGIC {
            return Err(fail());
        }
        let mut off = 4;
        let mut read_u32 = |bytes: &[u8]| {
            let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            off += 4;
            v
        };
        let dims = [
            read_u32(&bytes) as usize,
            read_u32(&bytes) as usize,
            read_u32(&bytes) as usize,
        ];
        let mut read_f64 = |bytes: &[u8]| {
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            v
        };
        let lo = [read_f64(&bytes), read_f64(&bytes), read_f64(&bytes)];
        let hi = [read_f64(&bytes), read_f64(&bytes), read_f64(&bytes)];
        let level = i64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        let count = dims[0] * dims[1] * dims[2];
        if bytes.len() != off + count * 8 {
            return Err(fail());
        }
        let values = bytes[off..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            bbox: Aabb::new(lo, hi),
            dims,
            level,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interp_reproduces_trilinear_functions() {
        let mut lat = Lattice3::new(Aabb::new([0.0; 3], [1.0; 3]), [5, 5, 5], -1);
        lat.fill(|p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[2]);
        let x = [0.31, 0.77, 0.12];
        let want = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2];
        assert!((lat.interp(x).unwrap() - want).abs() < 1e-12);
        let g = lat.gradient(x);
        assert!((g[0] - 2.0).abs() < 1e-10);
        assert!((g[1] + 1.0).abs() < 1e-10);
        assert!((g[2] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn out_of_cache_is_an_error() {
        let lat = Lattice3::new(Aabb::new([0.0; 3], [1.0; 3]), [2, 2, 2], -1);
        assert!(matches!(
            lat.interp([2.0, 0.0, 0.0]),
            Err(Error::OutOfCache { .. })
        ));
    }

    #[test]
    fn binary_roundtrip() {
        let dir = std::env::temp_dir().join("dmc_lattice_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cache.lat");
        let mut lat = Lattice3::new(Aabb::new([-1.0; 3], [1.0; 3]), [4, 3, 5], 6);
        lat.fill(|p| p[0] * p[1] + p[2]);
        lat.save(&path).unwrap();
        let back = Lattice3::load(&path).unwrap();
        assert_eq!(back.dims, lat.dims);
        assert_eq!(back.level, 6);
        assert_eq!(back.values, lat.values);
        std::fs::remove_file(&path).ok();
    }
}
