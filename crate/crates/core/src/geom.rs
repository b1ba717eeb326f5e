//! Small fixed-dimension vector helpers.
//!
//! Everything in this crate works in d = 3; points are plain `[f64; 3]`.

pub type Point = [f64; 3];

pub const DIM: usize = 3;

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(s: f64, a: Point, b: Point) -> Point {
    [s * a[0] + b[0], s * a[1] + b[1], s * a[2] + b[2]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm_sq(a: Point) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Point) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn new(lo: Point, hi: Point) -> Self {
        debug_assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        Self { lo, hi }
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..DIM).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn inflate(&self, pad: f64) -> Aabb {
        Aabb {
            lo: [self.lo[0] - pad, self.lo[1] - pad, self.lo[2] - pad],
            hi: [self.hi[0] + pad, self.hi[1] + pad, self.hi[2] + pad],
        }
    }

    pub fn diameter(&self) -> f64 {
        dist(self.lo, self.hi)
    }

    pub fn center(&self) -> Point {
        scale(add(self.lo, self.hi), 0.5)
    }

    /// Largest distance from `x` to any point of the box.
    pub fn reach_from(&self, x: Point) -> f64 {
        let mut far = [0.0; DIM];
        for i in 0..DIM {
            far[i] = if (x[i] - self.lo[i]).abs() > (x[i] - self.hi[i]).abs() {
                self.lo[i]
            } else {
                self.hi[i]
            };
        }
        dist(x, far)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..DIM {
            lo[i] = lo[i].min(other.lo[i]);
            hi[i] = hi[i].max(other.hi[i]);
        }
        Aabb { lo, hi }
    }
}

/// Closed ball, used both as integration region and as support description.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        debug_assert!(radius > 0.0);
        Self { center, radius }
    }

    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        dist(x, self.center) <= self.radius
    }

    pub fn bbox(&self) -> Aabb {
        Aabb {
            lo: [
                self.center[0] - self.radius,
                self.center[1] - self.radius,
                self.center[2] - self.radius,
            ],
            hi: [
                self.center[0] + self.radius,
                self.center[1] + self.radius,
                self.center[2] + self.radius,
            ],
        }
    }

    /// Parameter interval `t >= 0` where `origin + t * dir` lies in the ball
    /// (`dir` unit). `None` when the ray misses.
    pub fn ray_interval(&self, origin: Point, dir: Point) -> Option<(f64, f64)> {
        let oc = sub(self.center, origin);
        let tm = dot(dir, oc);
        let disc = tm * tm - (norm_sq(oc) - self.radius * self.radius);
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t1 = tm + sq;
        if t1 < 0.0 {
            return None;
        }
        Some(((tm - sq).max(0.0), t1))
    }
}

impl Aabb {
    /// Parameter interval `t >= 0` where `origin + t * dir` lies in the box
    /// (`dir` unit), by the slab method. `None` when the ray misses.
    pub fn ray_interval(&self, origin: Point, dir: Point) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for i in 0..DIM {
            if dir[i].abs() < 1e-300 {
                if origin[i] < self.lo[i] || origin[i] > self.hi[i] {
                    return None;
                }
                continue;
            }
            let a = (self.lo[i] - origin[i]) / dir[i];
            let b = (self.hi[i] - origin[i]) / dir[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if t0 > t1 {
            None
        } else {
            Some((t0, t1))
        }
    }
}

/// Deterministic Fibonacci lattice on the unit sphere; equal-weight nodes.
pub fn fibonacci_sphere(n: usize) -> Vec<Point> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Gauss-Legendre nodes/weights on [-1, 1] for small fixed orders.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    match order {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0_f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0_f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0_f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30.0_f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0_f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        8 => {
            let x = [
                0.183_434_642_495_649_8,
                0.525_532_409_916_329,
                0.796_666_477_413_626_7,
                0.960_289_856_497_536_2,
            ];
            let w = [
                0.362_683_783_378_362,
                0.313_706_645_877_887_29,
                0.222_381_034_453_374_47,
                0.101_228_536_290_376_26,
            ];
            let mut nodes = Vec::with_capacity(8);
            let mut weights = Vec::with_capacity(8);
            for i in (0..4).rev() {
                nodes.push(-x[i]);
                weights.push(w[i]);
            }
            for i in 0..4 {
                nodes.push(x[i]);
                weights.push(w[i]);
            }
            (nodes, weights)
        }
        _ => {
            // Composite of order-4 panels for anything else.
            let panels = order.div_ceil(4).max(1);
            let (base_n, base_w) = gauss_legendre(4);
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            let width = 2.0 / panels as f64;
            for p in 0..panels {
                let lo = -1.0 + p as f64 * width;
                for (n, w) in base_n.iter().zip(&base_w) {
                    nodes.push(lo + 0.5 * width * (n + 1.0));
                    weights.push(w * 0.5 * width);
                }
            }
            (nodes, weights)
        }
    }
}

/// Gauss rule mapped to [a, b].
pub fn gauss_on(a: f64, b: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (n, w) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        n.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| t * half).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials() {
        let (n, w) = gauss_on(0.0, 1.0, 4);
        let int: f64 = n.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((int - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn fibonacci_sphere_averages_constants() {
        let pts = fibonacci_sphere(128);
        for p in &pts {
            assert!((norm(*p) - 1.0).abs() < 1e-12);
        }
        // First moment of the uniform sphere vanishes.
        let mean = pts.iter().fold([0.0; 3], |acc, p| add(acc, *p));
        assert!(norm(mean) / 128.0 < 0.02);
    }

    #[test]
    fn aabb_reach() {
        let b = Aabb::new([0.0; 3], [1.0; 3]);
        assert!((b.reach_from([0.0; 3]) - 3.0_f64.sqrt()).abs() < 1e-12);
        assert!(b.contains([0.5, 0.5, 0.5]));
        assert!(!b.contains([1.5, 0.5, 0.5]));
    }
}
