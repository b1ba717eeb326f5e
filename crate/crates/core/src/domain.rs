//! Bounded domain geometry: membership, signed distance, boundary
//! projection, and segment-exit detection for discrete paths.

use std::fmt;
use std::sync::Arc;

use crate::geom::{self, dist, lerp, norm, sub, Aabb, Ball, Point};

pub type SdfFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Domain {
    Ball(Ball),
    Box(Aabb),
    /// User-supplied signed distance, assumed 1-Lipschitz-accurate near the
    /// boundary; `bbox` bounds the domain.
    SmoothSdf {
        name: String,
        sdf: SdfFn,
        bbox: Aabb,
    },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Ball(b) => write!(f, "Ball({:?}, {})", b.center, b.radius),
            Domain::Box(b) => write!(f, "Box({:?}, {:?})", b.lo, b.hi),
            Domain::SmoothSdf { name, .. } => write!(f, "SmoothSdf({name})"),
        }
    }
}

const BISECT_TOL: f64 = 1e-10;

impl Domain {
    pub fn ball(center: Point, radius: f64) -> Self {
        Domain::Ball(Ball::new(center, radius))
    }

    pub fn cuboid(lo: Point, hi: Point) -> Self {
        Domain::Box(Aabb::new(lo, hi))
    }

    /// Negative inside, positive outside, zero on the boundary.
    pub fn signed_distance(&self, x: Point) -> f64 {
        match self {
            Domain::Ball(b) => dist(x, b.center) - b.radius,
            Domain::Box(b) => {
                let mut outside2 = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for (xi, (lo, hi)) in x.iter().zip(b.lo.iter().zip(&b.hi)) {
                    let d_lo = lo - xi;
                    let d_hi = xi - hi;
                    let d = d_lo.max(d_hi);
                    if d > 0.0 {
                        outside2 += d * d;
                    }
                    inside = inside.max(d);
                }
                if outside2 > 0.0 {
                    outside2.sqrt()
                } else {
                    inside
                }
            }
            Domain::SmoothSdf { sdf, .. } => sdf(x),
        }
    }

    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Distance from an interior point to the boundary.
    #[inline]
    pub fn boundary_distance(&self, x: Point) -> f64 {
        (-self.signed_distance(x)).max(0.0)
    }

    pub fn bbox(&self) -> Aabb {
        match self {
            Domain::Ball(b) => b.bbox(),
            Domain::Box(b) => *b,
            Domain::SmoothSdf { bbox, .. } => *bbox,
        }
    }

    /// Domain diameter R0.
    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Ball(b) => 2.0 * b.radius,
            Domain::Box(b) => b.diameter(),
            Domain::SmoothSdf { bbox, .. } => bbox.diameter(),
        }
    }

    /// Closest boundary point (exact for ball/box, gradient descent on the
    /// signed distance otherwise).
    pub fn boundary_project(&self, x: Point) -> Point {
        match self {
            Domain::Ball(b) => {
                let d = sub(x, b.center);
                let n = norm(d);
                if n < 1e-14 {
                    let mut p = b.center;
                    p[0] += b.radius;
                    p
                } else {
                    geom::axpy(b.radius / n, d, b.center)
                }
            }
            Domain::Box(b) => {
                if !b.contains(x) {
                    let mut p = x;
                    for (pi, (lo, hi)) in p.iter_mut().zip(b.lo.iter().zip(&b.hi)) {
                        *pi = pi.clamp(*lo, *hi);
                    }
                    p
                } else {
                    // Push to the nearest face.
                    let mut best_axis = 0;
                    let mut best_val = f64::INFINITY;
                    let mut target = 0.0;
                    for (i, xi) in x.iter().enumerate() {
                        let to_lo = xi - b.lo[i];
                        let to_hi = b.hi[i] - xi;
                        if to_lo < best_val {
                            best_val = to_lo;
                            best_axis = i;
                            target = b.lo[i];
                        }
                        if to_hi < best_val {
                            best_val = to_hi;
                            best_axis = i;
                            target = b.hi[i];
                        }
                    }
                    let mut p = x;
                    p[best_axis] = target;
                    p
                }
            }
            Domain::SmoothSdf { sdf, .. } => {
                let mut p = x;
                for _ in 0..5 {
                    let d = sdf(p);
                    if d.abs() < 1e-9 {
                        break;
                    }
                    let g = fd_gradient(sdf, p);
                    let gn = norm(g).max(1e-12);
                    p = geom::axpy(-d / (gn * gn), g, p);
                }
                p
            }
        }
    }

    /// First crossing of the segment a -> b out of the domain, if any.
    /// Requires `contains(a)`.
    pub fn segment_exit(&self, a: Point, b: Point) -> Option<(f64, Point)> {
        debug_assert!(self.contains(a), "segment_exit requires an interior start");
        match self {
            Domain::Ball(ball) => {
                // |a + t d - c|^2 = r^2, smallest positive root.
                let d = sub(b, a);
                let f = sub(a, ball.center);
                let aa = geom::norm_sq(d);
                if aa == 0.0 {
                    return None;
                }
                let bb = 2.0 * geom::dot(f, d);
                let cc = geom::norm_sq(f) - ball.radius * ball.radius;
                let disc = bb * bb - 4.0 * aa * cc;
                if disc < 0.0 {
                    return None;
                }
                let t = (-bb + disc.sqrt()) / (2.0 * aa);
                if (0.0..=1.0).contains(&t) {
                    Some((t, lerp(a, b, t)))
                } else {
                    None
                }
            }
            Domain::Box(bx) => {
                // Convex: the segment exits iff b is not interior.
                if self.contains(b) {
                    return None;
                }
                let mut t_exit = f64::INFINITY;
                for i in 0..3 {
                    let di = b[i] - a[i];
                    if di > 0.0 {
                        t_exit = t_exit.min((bx.hi[i] - a[i]) / di);
                    } else if di < 0.0 {
                        t_exit = t_exit.min((bx.lo[i] - a[i]) / di);
                    }
                }
                if t_exit <= 1.0 {
                    let hit = lerp(a, b, t_exit);
                    Some((t_exit, self.boundary_project(hit)))
                } else {
                    None
                }
            }
            Domain::SmoothSdf { .. } => {
                // Sample interior points, then bisect the first sign change.
                let samples = 8;
                let mut t_prev = 0.0;
                let mut found = None;
                for s in 1..=samples + 1 {
                    let t = s as f64 / (samples + 1) as f64;
                    if self.signed_distance(lerp(a, b, t)) >= 0.0 {
                        found = Some((t_prev, t));
                        break;
                    }
                    t_prev = t;
                }
                let (mut lo, mut hi) = found?;
                while hi - lo > BISECT_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.signed_distance(lerp(a, b, mid)) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let hit = self.boundary_project(lerp(a, b, hi));
                Some((hi, hit))
            }
        }
    }

    /// Probability that a Brownian bridge from `a` to `b` over time `h`
    /// leaves the domain, by the half-space reflection formula.
    pub fn bridge_exit_probability(&self, a: Point, b: Point, h: f64) -> f64 {
        let da = self.boundary_distance(a);
        let db = self.boundary_distance(b);
        (-2.0 * da * db / h).exp()
    }
}

fn fd_gradient(sdf: &SdfFn, x: Point) -> Point {
    let h = 1e-6;
    let mut g = [0.0; 3];
    for i in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (sdf(xp) - sdf(xm)) / (2.0 * h);
    }
    g
}

/// Named signed-distance functions selectable from run configs.
pub fn sdf_registry(name: &str, params: &[f64]) -> Option<Domain> {
    match name {
        // params: [a, b, c] semi-axes. Scaled-distance approximation,
        // accurate near the boundary for mild eccentricity.
        "ellipsoid" => {
            let (a, b, c) = (params[0], params[1], params[2]);
            let min_axis = a.min(b).min(c);
            let sdf: SdfFn = Arc::new(move |x: Point| {
                let q = ((x[0] / a).powi(2) + (x[1] / b).powi(2) + (x[2] / c).powi(2)).sqrt();
                (q - 1.0) * min_axis
            });
            Some(Domain::SmoothSdf {
                name: "ellipsoid".into(),
                sdf,
                bbox: Aabb::new([-a, -b, -c], [a, b, c]),
            })
        }
        // params: [hx, hy, hz, rounding]; exact SDF.
        "rounded-box" => {
            let (hx, hy, hz, rr) = (params[0], params[1], params[2], params[3]);
            let sdf: SdfFn = Arc::new(move |x: Point| {
                let q = [x[0].abs() - hx, x[1].abs() - hy, x[2].abs() - hz];
                let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
                norm(outside) + q[0].max(q[1]).max(q[2]).min(0.0) - rr
            });
            let pad = rr;
            Some(Domain::SmoothSdf {
                name: "rounded-box".into(),
                sdf,
                bbox: Aabb::new([-hx - pad, -hy - pad, -hz - pad], [hx + pad, hy + pad, hz + pad]),
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_ball() -> Domain {
        Domain::ball([0.0; 3], 1.0)
    }

    #[test]
    fn membership() {
        let d = unit_ball();
        assert!(d.contains([0.0; 3]));
        assert!(!d.contains([2.0, 0.0, 0.0]));
        let b = Domain::cuboid([0.0; 3], [1.0; 3]);
        assert!(b.contains([0.5, 0.5, 0.5]));
    }

    #[test]
    fn segment_exit_examples() {
        let d = unit_ball();
        let (t, hit) = d.segment_exit([0.0; 3], [2.0, 0.0, 0.0]).unwrap();
        assert!((t - 0.5).abs() < 1e-10);
        assert!(dist(hit, [1.0, 0.0, 0.0]) < 1e-10);
        assert!(d.segment_exit([0.0; 3], [0.5, 0.0, 0.0]).is_none());

        let b = Domain::cuboid([0.0; 3], [1.0; 3]);
        let (t, hit) = b
            .segment_exit([0.5, 0.5, 0.5], [1.5, 0.5, 0.5])
            .unwrap();
        assert!((t - 0.5).abs() < 1e-10);
        assert!(dist(hit, [1.0, 0.5, 0.5]) < 1e-10);
    }

    #[test]
    fn bridge_probability_limits() {
        let d = unit_ball();
        // Start on the boundary: certain exit.
        let a = [1.0, 0.0, 0.0];
        assert!((d.bridge_exit_probability(a, [0.9, 0.0, 0.0], 0.01) - 1.0).abs() < 1e-12);
        // Deep interior, tiny step: negligible.
        assert!(d.bridge_exit_probability([0.0; 3], [0.0; 3], 1e-4) < 1e-300);
        // Half-space value e^{-2}.
        let x = [0.9, 0.0, 0.0];
        let p = d.bridge_exit_probability(x, x, 0.01);
        assert!((p - (-2.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn sdf_domains_project_to_boundary() {
        let e = sdf_registry("ellipsoid", &[1.0, 0.8, 0.6]).unwrap();
        let p = e.boundary_project([0.3, 0.1, 0.05]);
        assert!(e.signed_distance(p).abs() < 1e-7);

        let rb = sdf_registry("rounded-box", &[0.5, 0.5, 0.5, 0.1]).unwrap();
        let p = rb.boundary_project([0.2, -0.1, 0.3]);
        assert!(rb.signed_distance(p).abs() < 1e-7);

        let (t, hit) = rb.segment_exit([0.0; 3], [2.0, 0.0, 0.0]).unwrap();
        assert!(t > 0.0 && t < 1.0);
        assert!(rb.signed_distance(hit).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn projection_idempotent(x in prop::array::uniform3(-0.99f64..0.99)) {
            let d = unit_ball();
            let p = d.boundary_project(x);
            let pp = d.boundary_project(p);
            prop_assert!(dist(p, pp) < 1e-10);
            prop_assert!(d.signed_distance(p).abs() < 1e-10);
        }

        #[test]
        fn ball_exit_matches_closed_form(
            a in prop::array::uniform3(-0.4f64..0.4),
            dir in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let d = unit_ball();
            prop_assume!(norm(dir) > 1e-3);
            let b = geom::axpy(3.0 / norm(dir), dir, a);
            let (t, hit) = d.segment_exit(a, b).unwrap();
            prop_assert!((norm(hit) - 1.0).abs() < 1e-10);
            let interior = lerp(a, b, t * 0.999);
            prop_assert!(d.contains(interior));
        }
    }
}
