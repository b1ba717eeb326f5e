//! Signed Radon measures on R^3 and their Kato-class norm estimators.
//!
//! The admissible coefficient class is controlled by the norm
//! `M_pi^alpha(r) = sup_x int_{B_r(x)} |x-y|^{alpha-3} |pi|(dy)`; a measure is
//! a Kato candidate when the estimated norms trend to zero as r -> 0. All
//! integrals here go through [`integrate_kernel`], which grades the quadrature
//! radially toward the kernel singularity and integrates singular density
//! fibers with exact power-law cell masses.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, dist, fibonacci_sphere, gauss_legendre, Aabb, Ball, Point};

/// Pointwise density, selectable from a small named registry so that run
/// configs stay declarative.
#[derive(Clone)]
pub enum Density {
    Constant(f64),
    GaussianBump {
        center: Point,
        width: f64,
        amplitude: f64,
    },
    Polynomial {
        constant: f64,
        linear: [f64; 3],
        quadratic: [f64; 3],
    },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl Density {
    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Density::Constant(c) => *c,
            Density::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let d2 = geom::norm_sq(geom::sub(x, *center));
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }
            Density::Polynomial {
                constant,
                linear,
                quadratic,
            } => {
                constant
                    + linear[0] * x[0]
                    + linear[1] * x[1]
                    + linear[2] * x[2]
                    + quadratic[0] * x[0] * x[0]
                    + quadratic[1] * x[1] * x[1]
                    + quadratic[2] * x[2] * x[2]
            }
            Density::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant(c) => write!(f, "Constant({c})"),
            Density::GaussianBump { center, width, .. } => {
                write!(f, "GaussianBump(center={center:?}, width={width})")
            }
            Density::Polynomial { .. } => write!(f, "Polynomial"),
            Density::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Graph function for the band-singular density kind.
#[derive(Clone)]
pub enum GraphFn {
    Zero,
    Plane { slope: [f64; 2], offset: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl GraphFn {
    #[inline]
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            GraphFn::Zero => 0.0,
            GraphFn::Plane { slope, offset } => slope[0] * x1 + slope[1] * x2 + offset,
            GraphFn::Custom(f) => f(x1, x2),
        }
    }
}

impl fmt::Debug for GraphFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFn::Zero => write!(f, "Zero"),
            GraphFn::Plane { slope, offset } => write!(f, "Plane({slope:?}, {offset})"),
            GraphFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Support restriction for absolutely continuous measures.
#[derive(Debug, Clone)]
pub enum Support {
    Ball(Ball),
    Box(Aabb),
}

impl Support {
    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        match self {
            Support::Ball(b) => b.contains(x),
            Support::Box(b) => b.contains(x),
        }
    }

    pub fn bbox(&self) -> Aabb {
        match self {
            Support::Ball(b) => b.bbox(),
            Support::Box(b) => *b,
        }
    }

    /// True when the ball of radius `pad` around `x` lies inside the support.
    pub fn contains_ball(&self, x: Point, pad: f64) -> bool {
        match self {
            Support::Ball(b) => dist(x, b.center) + pad <= b.radius,
            Support::Box(b) => (0..3).all(|i| x[i] - pad >= b.lo[i] && x[i] + pad <= b.hi[i]),
        }
    }

    /// Radial interval of the ray `origin + t dir` inside the support.
    pub fn ray_interval(&self, origin: Point, dir: Point) -> Option<(f64, f64)> {
        match self {
            Support::Ball(b) => b.ray_interval(origin, dir),
            Support::Box(b) => b.ray_interval(origin, dir),
        }
    }
}

/// A signed Radon measure on R^3.
#[derive(Debug, Clone)]
pub enum SignedMeasure {
    /// Bounded density against Lebesgue measure, restricted to a support set.
    SmoothDensity { density: Density, support: Support },
    /// `a |x3 - g(x1,x2)|^{gamma-1}` on the band `|x3 - g| < delta`, boxed.
    GraphSingularDensity {
        graph: GraphFn,
        gamma: f64,
        half_width: f64,
        amplitude: f64,
        bbox: Aabb,
    },
    /// Surface measure `w(y) dsigma` on the hyperplane `{x3 = level}`, boxed.
    HyperplaneSurface {
        level: f64,
        weight: Density,
        bbox: Aabb,
    },
    LinearCombination(Vec<(f64, SignedMeasure)>),
}

/// Which Jordan component of the measure an integral targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Signed,
    Abs,
    Plus,
    Minus,
}

impl Part {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Part::Signed => v,
            Part::Abs => v.abs(),
            Part::Plus => v.max(0.0),
            Part::Minus => (-v).max(0.0),
        }
    }
}

/// Quadrature controls for the measure integrals.
///
/// Sup-type norms scan a finite candidate grid; singular inner integrals use
/// dyadic radial shells toward the kernel singularity with a fixed small Gauss
/// rule per shell, refined until successive shells are below `rel_tol` of the
/// running total and declared divergent after `max_shell_levels` levels
/// without Cauchy behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Candidate points per axis for the sup scan (grid over the support
    /// bounding box inflated by the ball radius).
    pub sup_grid_n: usize,
    /// Fibonacci-sphere nodes for volumetric shells.
    pub sphere_points: usize,
    /// Gauss nodes per radial shell.
    pub radial_per_shell: usize,
    /// Angular nodes for planar (polar) shells.
    pub plane_theta: usize,
    /// Dyadic cells per side when grading a singular fiber toward the graph.
    pub fiber_levels: usize,
    /// Equal subcells inside each dyadic fiber cell.
    pub fiber_sub: usize,
    /// Dyadic shell cap before an integral is declared divergent.
    pub max_shell_levels: usize,
    /// Relative Cauchy tolerance for shell refinement.
    pub rel_tol: f64,
    /// `classify_kato` accepts when the final norm is below this fraction of
    /// the initial one.
    pub trend_threshold: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            sup_grid_n: 33,
            sphere_points: 128,
            radial_per_shell: 2,
            plane_theta: 16,
            fiber_levels: 14,
            fiber_sub: 3,
            max_shell_levels: 40,
            rel_tol: 1e-4,
            trend_threshold: 0.2,
        }
    }
}

impl QuadratureSpec {
    /// Coarser settings for test-scale scans.
    pub fn coarse() -> Self {
        Self {
            sup_grid_n: 7,
            sphere_points: 96,
            ..Self::default()
        }
    }
}

impl SignedMeasure {
    pub fn bbox(&self) -> Aabb {
        match self {
            SignedMeasure::SmoothDensity { support, .. } => support.bbox(),
            SignedMeasure::GraphSingularDensity { bbox, .. } => *bbox,
            SignedMeasure::HyperplaneSurface { level, bbox, .. } => {
                let mut b = *bbox;
                b.lo[2] = *level;
                b.hi[2] = *level;
                b
            }
            SignedMeasure::LinearCombination(terms) => {
                let mut it = terms.iter();
                let first = it
                    .next()
                    .map(|(_, m)| m.bbox())
                    .unwrap_or(Aabb::new([0.0; 3], [0.0; 3]));
                it.fold(first, |acc, (_, m)| acc.union(&m.bbox()))
            }
        }
    }

    pub fn scaled(&self, c: f64) -> SignedMeasure {
        SignedMeasure::LinearCombination(vec![(c, self.clone())])
    }

    /// Nonnegative measure carrying the positive Jordan component.
    pub fn positive_part(&self) -> SignedMeasure {
        self.jordan(Part::Plus)
    }

    /// Nonnegative measure carrying the negative Jordan component.
    pub fn negative_part(&self) -> SignedMeasure {
        self.jordan(Part::Minus)
    }

    /// Total-variation measure |m| = m+ + m-.
    pub fn total_variation_measure(&self) -> SignedMeasure {
        self.jordan(Part::Abs)
    }

    fn jordan(&self, part: Part) -> SignedMeasure {
        match self {
            SignedMeasure::SmoothDensity { density, support } => {
                // Constants stay constants so the Jordan parts keep the same
                // (exact) evaluation path as the signed field.
                let density = match density {
                    Density::Constant(c) => Density::Constant(part.apply(*c)),
                    other => {
                        let inner = other.clone();
                        Density::Custom(Arc::new(move |x| part.apply(inner.eval(x))))
                    }
                };
                SignedMeasure::SmoothDensity {
                    density,
                    support: support.clone(),
                }
            }
            SignedMeasure::GraphSingularDensity {
                graph,
                gamma,
                half_width,
                amplitude,
                bbox,
            } => SignedMeasure::GraphSingularDensity {
                graph: graph.clone(),
                gamma: *gamma,
                half_width: *half_width,
                amplitude: part.apply(*amplitude),
                bbox: *bbox,
            },
            SignedMeasure::HyperplaneSurface {
                level,
                weight,
                bbox,
            } => {
                let inner = weight.clone();
                SignedMeasure::HyperplaneSurface {
                    level: *level,
                    weight: Density::Custom(Arc::new(move |x| part.apply(inner.eval(x)))),
                    bbox: *bbox,
                }
            }
            SignedMeasure::LinearCombination(terms) => SignedMeasure::LinearCombination(
                terms
                    .iter()
                    .map(|(c, m)| {
                        let sub = match (part, *c >= 0.0) {
                            (Part::Signed, _) => Part::Signed,
                            (Part::Abs, _) => Part::Abs,
                            (Part::Plus, true) | (Part::Minus, false) => Part::Plus,
                            (Part::Plus, false) | (Part::Minus, true) => Part::Minus,
                        };
                        let coeff = if part == Part::Signed { *c } else { c.abs() };
                        (coeff, m.jordan(sub))
                    })
                    .collect(),
            ),
        }
    }
}

/// Signed Lebesgue density at a point; errors for surface measures.
pub fn eval_density(m: &SignedMeasure, x: Point) -> Result<f64> {
    match m {
        SignedMeasure::SmoothDensity { density, support } => Ok(if support.contains(x) {
            density.eval(x)
        } else {
            0.0
        }),
        SignedMeasure::GraphSingularDensity {
            graph,
            gamma,
            half_width,
            amplitude,
            bbox,
        } => {
            if !bbox.contains(x) {
                return Ok(0.0);
            }
            let u = x[2] - graph.eval(x[0], x[1]);
            if u.abs() >= *half_width || u == 0.0 {
                Ok(0.0)
            } else {
                Ok(amplitude * u.abs().powf(gamma - 1.0))
            }
        }
        SignedMeasure::HyperplaneSurface { .. } => Err(Error::UnsupportedKind),
        SignedMeasure::LinearCombination(terms) => {
            let mut acc = 0.0;
            for (c, m) in terms {
                acc += c * eval_density(m, x)?;
            }
            Ok(acc)
        }
    }
}

// ---------------------------------------------------------------------------
// Generic kernel integration
// ---------------------------------------------------------------------------

struct ShellAccumulator {
    total: f64,
    last: f64,
    prev: f64,
    settled: usize,
}

impl ShellAccumulator {
    fn new() -> Self {
        Self {
            total: 0.0,
            last: f64::NAN,
            prev: f64::NAN,
            settled: 0,
        }
    }

    /// Feed the contribution of the next (shrinking) shell. Returns true when
    /// refinement can stop.
    fn push(&mut self, contribution: f64, rel_tol: f64) -> bool {
        self.total += contribution;
        self.prev = self.last;
        self.last = contribution;
        let scale = self.total.abs().max(1e-300);
        if contribution.abs() <= rel_tol * scale {
            self.settled += 1;
        } else {
            self.settled = 0;
        }
        self.settled >= 2
    }

    /// Geometric tail extrapolation for the untouched innermost ball.
    fn finish(mut self, max_levels_hit: bool) -> Result<f64> {
        // Shells at round-off scale are noise, not evidence of divergence.
        let noise = 1e-12 * self.total.abs().max(1.0);
        if max_levels_hit && self.last.abs() > noise {
            // Refinement never settled: accept only a clearly geometric decay,
            // whose tail the extrapolation below recovers.
            let ratio = (self.last / self.prev).abs();
            if ratio >= 0.95 || ratio.is_nan() {
                return Err(Error::DivergentIntegral);
            }
        }
        if self.prev.is_finite() && self.prev != 0.0 {
            let q = (self.last / self.prev).abs();
            if q < 0.95 {
                self.total += self.last * q / (1.0 - q);
            }
        }
        Ok(self.total)
    }
}

/// Integrate `kernel(y)` against the chosen Jordan part of `m` over the ball
/// `region`, grading the quadrature toward `singular_at` (where the kernel is
/// allowed to blow up at an integrable rate).
pub fn integrate_kernel(
    m: &SignedMeasure,
    part: Part,
    region: &Ball,
    singular_at: Point,
    kernel: &(dyn Fn(Point) -> f64 + Sync),
    quad: &QuadratureSpec,
) -> Result<f64> {
    match m {
        SignedMeasure::SmoothDensity { density, support } => smooth_region_integral(
            &|y| part.apply(density.eval(y)),
            support,
            region,
            singular_at,
            kernel,
            quad,
        ),
        SignedMeasure::GraphSingularDensity {
            graph,
            gamma,
            half_width,
            amplitude,
            bbox,
        } => graph_region_integral(
            graph,
            *gamma,
            *half_width,
            part.apply(*amplitude),
            bbox,
            region,
            singular_at,
            kernel,
            quad,
        ),
        SignedMeasure::HyperplaneSurface {
            level,
            weight,
            bbox,
        } => plane_region_integral(
            *level,
            &|y| part.apply(weight.eval(y)),
            bbox,
            region,
            singular_at,
            kernel,
            quad,
        ),
        SignedMeasure::LinearCombination(terms) => {
            let mut acc = 0.0;
            for (c, sub) in terms {
                let (coeff, sub_part) = match (part, *c >= 0.0) {
                    (Part::Signed, _) => (*c, Part::Signed),
                    (Part::Abs, _) => (c.abs(), Part::Abs),
                    (Part::Plus, true) => (*c, Part::Plus),
                    (Part::Plus, false) => (-*c, Part::Minus),
                    (Part::Minus, true) => (*c, Part::Minus),
                    (Part::Minus, false) => (-*c, Part::Plus),
                };
                acc += coeff * integrate_kernel(sub, sub_part, region, singular_at, kernel, quad)?;
            }
            Ok(acc)
        }
    }
}

/// Integrate several kernels against the same measure in one pass when the
/// measure is density-type; falls back to per-kernel integration otherwise.
pub fn integrate_kernels(
    m: &SignedMeasure,
    part: Part,
    region: &Ball,
    singular_at: Point,
    kernels: &[&(dyn Fn(Point) -> f64 + Sync)],
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    match m {
        SignedMeasure::SmoothDensity { density, support } => {
            let ks: Vec<&dyn Fn(Point) -> f64> =
                kernels.iter().map(|k| *k as &dyn Fn(Point) -> f64).collect();
            smooth_region_integral_multi(
                &|y| part.apply(density.eval(y)),
                support,
                region,
                singular_at,
                &ks,
                quad,
            )
        }
        _ => kernels
            .iter()
            .map(|k| integrate_kernel(m, part, region, singular_at, *k, quad))
            .collect(),
    }
}

fn smooth_region_integral(
    density: &dyn Fn(Point) -> f64,
    support: &Support,
    region: &Ball,
    singular_at: Point,
    kernel: &dyn Fn(Point) -> f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    Ok(smooth_region_integral_multi(density, support, region, singular_at, &[kernel], quad)?[0])
}

/// Several kernels against the same density, sharing one quadrature pass.
fn smooth_region_integral_multi(
    density: &dyn Fn(Point) -> f64,
    support: &Support,
    region: &Ball,
    singular_at: Point,
    kernels: &[&dyn Fn(Point) -> f64],
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let nk = kernels.len();
    let outer = dist(singular_at, region.center) + region.radius;
    if outer <= 0.0 {
        return Ok(vec![0.0; nk]);
    }
    // Antipodally symmetric direction set: odd angular moments cancel exactly,
    // so vector kernels (gradients) do not pick up lattice anisotropy.
    let mut sphere = fibonacci_sphere(quad.sphere_points.div_ceil(2));
    let antipodes: Vec<Point> = sphere.iter().map(|d| geom::scale(*d, -1.0)).collect();
    sphere.extend(antipodes);
    let ang_w = 4.0 * PI / sphere.len() as f64;
    let (gn, gw) = gauss_legendre(quad.radial_per_shell);

    // Exact radial clip of each ray against region and support, so the shell
    // quadrature never sees the jump at either boundary.
    let clips: Vec<Option<(f64, f64)>> = sphere
        .iter()
        .map(|dir| {
            let a = region.ray_interval(singular_at, *dir)?;
            let b = support.ray_interval(singular_at, *dir)?;
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            (lo < hi).then_some((lo, hi))
        })
        .collect();

    // One control accumulator on the combined magnitude; per-kernel running
    // totals with their own geometric tail extrapolation.
    let mut totals = vec![0.0; nk];
    let mut last = vec![f64::NAN; nk];
    let mut prev = vec![f64::NAN; nk];
    let mut ctrl = ShellAccumulator::new();
    let mut hit_cap = true;
    let mut contribution = vec![0.0; nk];
    for k in 0..quad.max_shell_levels {
        let hi = outer * 0.5_f64.powi(k as i32);
        let lo = hi * 0.5;
        contribution.fill(0.0);
        for (dir, clip) in sphere.iter().zip(&clips) {
            let Some((c0, c1)) = clip else { continue };
            let a = lo.max(*c0);
            let b = hi.min(*c1);
            if a >= b {
                continue;
            }
            for (t, w) in gn.iter().zip(&gw) {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let wr = 0.5 * (b - a) * w * s * s;
                let y = geom::axpy(s, *dir, singular_at);
                let base = wr * ang_w * density(y);
                if base == 0.0 {
                    continue;
                }
                for (c, kf) in contribution.iter_mut().zip(kernels) {
                    *c += base * kf(y);
                }
            }
        }
        for (t, c) in totals.iter_mut().zip(&contribution) {
            *t += c;
        }
        prev.copy_from_slice(&last);
        last.copy_from_slice(&contribution);
        let combined: f64 = contribution.iter().map(|c| c.abs()).sum();
        if ctrl.push(combined, quad.rel_tol) {
            hit_cap = false;
            break;
        }
    }
    ctrl.finish(hit_cap)?;
    for i in 0..nk {
        if prev[i].is_finite() && prev[i] != 0.0 {
            let q = (last[i] / prev[i]).abs();
            if q < 0.95 {
                totals[i] += last[i] * q / (1.0 - q);
            }
        }
    }
    Ok(totals)
}

#[allow(clippy::too_many_arguments)]
fn graph_region_integral(
    graph: &GraphFn,
    gamma: f64,
    half_width: f64,
    amplitude: f64,
    bbox: &Aabb,
    region: &Ball,
    singular_at: Point,
    kernel: &dyn Fn(Point) -> f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if amplitude == 0.0 {
        return Ok(0.0);
    }
    let xp = [singular_at[0], singular_at[1]];
    let cp = [region.center[0], region.center[1]];
    let planar = ((xp[0] - cp[0]).powi(2) + (xp[1] - cp[1]).powi(2)).sqrt();
    let outer = planar + region.radius;
    if outer <= 0.0 {
        return Ok(0.0);
    }
    let (gn, gw) = gauss_legendre(quad.radial_per_shell);
    let n_theta = quad.plane_theta;
    let theta_w = 2.0 * PI / n_theta as f64;

    // Exact planar clip of each theta-ray against the region's disk shadow
    // and the lateral bbox rectangle, so radial cells never straddle either
    // boundary. The vertical chord vanishes like sqrt(distance to the disk
    // edge), so radial cells touching a *disk* endpoint are additionally
    // graded toward it below; integrating straight across that edge leaves a
    // resolution-independent bias.
    struct ClippedRay {
        lo: f64,
        hi: f64,
        dir: [f64; 2],
        lo_is_edge: bool,
        hi_is_edge: bool,
    }
    let p0 = [xp[0] - cp[0], xp[1] - cp[1]];
    let rays: Vec<Option<ClippedRay>> = (0..n_theta)
        .map(|j| {
            let theta = theta_w * (j as f64 + 0.5);
            let e = [theta.cos(), theta.sin()];
            let beta = p0[0] * e[0] + p0[1] * e[1];
            let disc = beta * beta - (p0[0] * p0[0] + p0[1] * p0[1])
                + region.radius * region.radius;
            if disc <= 0.0 {
                return None;
            }
            let disk_lo = (-beta - disc.sqrt()).max(0.0);
            let disk_hi = -beta + disc.sqrt();
            let (mut lo, mut hi) = (disk_lo, disk_hi);
            for i in 0..2 {
                if e[i] == 0.0 {
                    if xp[i] < bbox.lo[i] || xp[i] > bbox.hi[i] {
                        return None;
                    }
                    continue;
                }
                let (t0, t1) = (
                    (bbox.lo[i] - xp[i]) / e[i],
                    (bbox.hi[i] - xp[i]) / e[i],
                );
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
            (lo < hi).then_some(ClippedRay {
                lo,
                hi,
                dir: e,
                lo_is_edge: lo == disk_lo && disk_lo > 0.0,
                hi_is_edge: hi == disk_hi,
            })
        })
        .collect();

    let mut acc = ShellAccumulator::new();
    let mut hit_cap = true;
    for k in 0..quad.max_shell_levels {
        let shell_hi = outer * 0.5_f64.powi(k as i32);
        let shell_lo = shell_hi * 0.5;
        let mut contribution = 0.0;
        for ray in &rays {
            let Some(ray) = ray else { continue };
            let e = &ray.dir;
            let a = shell_lo.max(ray.lo);
            let b = shell_hi.min(ray.hi);
            if a >= b {
                continue;
            }
            // Dyadic sub-cells toward whichever disk-edge endpoints fall in
            // this cell (chord ~ sqrt there); a plain cell otherwise.
            let mut cells: Vec<(f64, f64)> = Vec::new();
            let grade_hi = b == ray.hi && ray.hi_is_edge;
            let grade_lo = a == ray.lo && ray.lo_is_edge;
            if grade_hi || grade_lo {
                let edge_levels = 12;
                let mut push_graded = |from: f64, to: f64, edge: f64| {
                    // Cells accumulate toward `edge`, which is `to` if
                    // edge > from, else `from`.
                    let len = to - from;
                    let mut remaining = (from, to);
                    for _ in 0..edge_levels {
                        let (f0, t0) = remaining;
                        let half = 0.5 * (t0 - f0);
                        if half <= 1e-14 * len.max(1.0) {
                            break;
                        }
                        if edge >= t0 {
                            cells.push((f0, f0 + half));
                            remaining = (f0 + half, t0);
                        } else {
                            cells.push((t0 - half, t0));
                            remaining = (f0, t0 - half);
                        }
                    }
                    cells.push(remaining);
                };
                match (grade_lo, grade_hi) {
                    (true, true) => {
                        let mid = 0.5 * (a + b);
                        push_graded(a, mid, a);
                        push_graded(mid, b, b);
                    }
                    (true, false) => push_graded(a, b, a),
                    _ => push_graded(a, b, b),
                }
            } else {
                cells.push((a, b));
            }
            for (a, b) in cells {
                for (t, w) in gn.iter().zip(&gw) {
                    let rho = 0.5 * (a + b) + 0.5 * (b - a) * t;
                    let wr = 0.5 * (b - a) * w * rho * theta_w;
                    let y1 = xp[0] + rho * e[0];
                    let y2 = xp[1] + rho * e[1];
                    if y1 < bbox.lo[0] || y1 > bbox.hi[0] || y2 < bbox.lo[1] || y2 > bbox.hi[1]
                    {
                        continue;
                    }
                    // Vertical extent allowed by the spherical region.
                    let pd2 = (y1 - cp[0]).powi(2) + (y2 - cp[1]).powi(2);
                    let h2 = region.radius * region.radius - pd2;
                    if h2 <= 0.0 {
                        continue;
                    }
                    let h = h2.sqrt();
                    let g = graph.eval(y1, y2);
                    let z_lo = (region.center[2] - h).max(bbox.lo[2]);
                    let z_hi = (region.center[2] + h).min(bbox.hi[2]);
                    // Fiber in u = y3 - g, restricted to the band |u| < delta.
                    let u_lo = (z_lo - g).max(-half_width);
                    let u_hi = (z_hi - g).min(half_width);
                    if u_lo >= u_hi {
                        continue;
                    }
                    // The kernel may have its own singularity on this fiber,
                    // at u = x3 - g, resolvable down to the planar offset rho.
                    let fiber = fiber_integral(
                        u_lo,
                        u_hi,
                        gamma,
                        singular_at[2] - g,
                        rho,
                        quad,
                        &mut |u| kernel([y1, y2, g + u]),
                    );
                    contribution += wr * amplitude * fiber;
                }
            }
        }
        if acc.push(contribution, quad.rel_tol) {
            hit_cap = false;
            break;
        }
    }
    acc.finish(hit_cap)
}

/// `int_{u_lo}^{u_hi} |u|^{gamma-1} f(u) du` with exact power-law cell masses,
/// dyadically graded toward u = 0. Cells near `ker_at` (where `f` itself may
/// blow up) are bisected further, down to width `ker_scale`.
fn fiber_integral(
    u_lo: f64,
    u_hi: f64,
    gamma: f64,
    ker_at: f64,
    ker_scale: f64,
    quad: &QuadratureSpec,
    f: &mut dyn FnMut(f64) -> f64,
) -> f64 {
    // One radial cell [c0, c1] at u = sign * c; exact power mass, kernel at
    // the cell midpoint, refined dyadically while the kernel point is within
    // a cell width and the cell is still wider than the kernel scale.
    #[allow(clippy::too_many_arguments)]
    fn cell(
        c0: f64,
        c1: f64,
        sign: f64,
        gamma: f64,
        ker_at: f64,
        ker_scale: f64,
        depth: usize,
        f: &mut dyn FnMut(f64) -> f64,
    ) -> f64 {
        let width = c1 - c0;
        let u0 = sign * c0;
        let u1 = sign * c1;
        let (ulo, uhi) = if u0 < u1 { (u0, u1) } else { (u1, u0) };
        let near = ker_at > ulo - width && ker_at < uhi + width;
        if !near || width <= ker_scale || depth == 0 {
            let mass = (c1.powf(gamma) - c0.powf(gamma)) / gamma;
            return mass * f(sign * 0.5 * (c0 + c1));
        }
        let cm = 0.5 * (c0 + c1);
        cell(c0, cm, sign, gamma, ker_at, ker_scale, depth - 1, f)
            + cell(cm, c1, sign, gamma, ker_at, ker_scale, depth - 1, f)
    }
    let ker_scale = ker_scale.max(1e-14);
    let mut total = 0.0;
    let mut side = |a: f64, b: f64, sign: f64| {
        // Integrates over [a, b] with 0 <= a < b; u = sign * radial coord.
        if b <= 0.0 || b <= a {
            return;
        }
        let a = a.max(0.0);
        let levels = quad.fiber_levels;
        let mut hi = b;
        for k in 0..levels {
            let lo = (b * 0.5_f64.powi(k as i32 + 1)).max(a);
            if lo >= hi {
                break;
            }
            let sub = quad.fiber_sub.max(1);
            let step = (hi - lo) / sub as f64;
            for j in 0..sub {
                let c0 = lo + j as f64 * step;
                let c1 = c0 + step;
                total += cell(c0, c1, sign, gamma, ker_at, ker_scale, 64, f);
            }
            hi = lo;
            if lo == a {
                return;
            }
        }
        // Innermost cell [a, hi]: exact mass, kernel at the mass centroid.
        if hi > a {
            let mass = (hi.powf(gamma) - a.powf(gamma)) / gamma;
            let centroid = if a == 0.0 {
                hi * gamma / (gamma + 1.0)
            } else {
                0.5 * (a + hi)
            };
            total += mass * f(sign * centroid);
        }
    };
    if u_hi > 0.0 {
        side(u_lo.max(0.0), u_hi, 1.0);
    }
    if u_lo < 0.0 {
        side((-u_hi).max(0.0), -u_lo, -1.0);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn plane_region_integral(
    level: f64,
    weight: &dyn Fn(Point) -> f64,
    bbox: &Aabb,
    region: &Ball,
    singular_at: Point,
    kernel: &dyn Fn(Point) -> f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let dz = level - region.center[2];
    let disc2 = region.radius * region.radius - dz * dz;
    if disc2 <= 0.0 {
        return Ok(0.0);
    }
    let disc_r = disc2.sqrt();
    let cp = [region.center[0], region.center[1]];
    let xp = [singular_at[0], singular_at[1]];
    let planar = ((xp[0] - cp[0]).powi(2) + (xp[1] - cp[1]).powi(2)).sqrt();
    let outer = planar + disc_r;
    if outer <= 0.0 {
        return Ok(0.0);
    }
    let (gn, gw) = gauss_legendre(quad.radial_per_shell);
    let n_theta = quad.plane_theta;
    let theta_w = 2.0 * PI / n_theta as f64;

    // Exact planar clip of each theta-ray against the region's disk section
    // and the bbox rectangle, so the radial rule never integrates across the
    // jump at either boundary.
    let p0 = [xp[0] - cp[0], xp[1] - cp[1]];
    let rays: Vec<Option<(f64, f64, [f64; 2])>> = (0..n_theta)
        .map(|j| {
            let theta = theta_w * (j as f64 + 0.5);
            let e = [theta.cos(), theta.sin()];
            let beta = p0[0] * e[0] + p0[1] * e[1];
            let disc = beta * beta - (p0[0] * p0[0] + p0[1] * p0[1]) + disc2;
            if disc <= 0.0 {
                return None;
            }
            let mut lo = (-beta - disc.sqrt()).max(0.0);
            let mut hi = -beta + disc.sqrt();
            for i in 0..2 {
                if e[i] == 0.0 {
                    if xp[i] < bbox.lo[i] || xp[i] > bbox.hi[i] {
                        return None;
                    }
                    continue;
                }
                let (t0, t1) = (
                    (bbox.lo[i] - xp[i]) / e[i],
                    (bbox.hi[i] - xp[i]) / e[i],
                );
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
            (lo < hi).then_some((lo, hi, e))
        })
        .collect();

    let mut acc = ShellAccumulator::new();
    let mut hit_cap = true;
    for k in 0..quad.max_shell_levels {
        let shell_hi = outer * 0.5_f64.powi(k as i32);
        let shell_lo = shell_hi * 0.5;
        let mut contribution = 0.0;
        for ray in &rays {
            let Some((ray_lo, ray_hi, e)) = ray else { continue };
            let a = shell_lo.max(*ray_lo);
            let b = shell_hi.min(*ray_hi);
            if a >= b {
                continue;
            }
            for (t, w) in gn.iter().zip(&gw) {
                let rho = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let wr = 0.5 * (b - a) * w * rho * theta_w;
                let y = [xp[0] + rho * e[0], xp[1] + rho * e[1], level];
                if y[0] < bbox.lo[0] || y[0] > bbox.hi[0] || y[1] < bbox.lo[1] || y[1] > bbox.hi[1]
                {
                    continue;
                }
                contribution += wr * weight(y) * kernel(y);
            }
        }
        if acc.push(contribution, quad.rel_tol) {
            hit_cap = false;
            break;
        }
    }
    acc.finish(hit_cap)
}

// ---------------------------------------------------------------------------
// Kato norms
// ---------------------------------------------------------------------------

/// Candidate points for the sup scan: a regular grid over `bbox`.
pub fn sup_grid(bbox: &Aabb, n: usize) -> Vec<Point> {
    let n = n.max(1);
    let coord = |i: usize, lo: f64, hi: f64| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push([
                    coord(i, bbox.lo[0], bbox.hi[0]),
                    coord(j, bbox.lo[1], bbox.hi[1]),
                    coord(k, bbox.lo[2], bbox.hi[2]),
                ]);
            }
        }
    }
    pts
}

#[inline]
fn kato_kernel(x: Point, alpha: f64) -> impl Fn(Point) -> f64 + Sync {
    move |y: Point| {
        let d = dist(x, y).max(1e-300);
        d.powf(alpha - 3.0)
    }
}

/// Lower-biased estimate of `M_pi^alpha(r)`; sup over a finite candidate grid.
#[allow(non_snake_case)]
pub fn kato_norm_M(m: &SignedMeasure, alpha: f64, r: f64, quad: &QuadratureSpec) -> Result<f64> {
    assert!(alpha > 0.0 && alpha <= 2.0, "alpha must be in (0, 2]");
    assert!(r > 0.0);
    let grid = sup_grid(&m.bbox().inflate(r), quad.sup_grid_n);
    let mut best = 0.0_f64;
    for x in grid {
        let v = integrate_kernel(m, Part::Abs, &Ball::new(x, r), x, &kato_kernel(x, alpha), quad)?;
        best = best.max(v);
    }
    Ok(best)
}

/// Estimate of the heat-kernel style norm
/// `N_pi^{alpha,c}(t) = sup_x int_0^t int s^{-(5-alpha)/2} e^{-c|x-y|^2/(2s)} |pi|(dy) ds`.
#[allow(non_snake_case)]
pub fn kato_norm_N(
    m: &SignedMeasure,
    alpha: f64,
    c: f64,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    assert!(alpha > 0.0 && alpha <= 2.0);
    assert!(c > 0.0 && t > 0.0);
    let bbox = m.bbox();
    let pad = (2.0 * t / c).sqrt() * 4.0;
    let grid = sup_grid(&bbox.inflate(pad.min(bbox.diameter().max(0.1))), quad.sup_grid_n);
    let (gn, gw) = gauss_legendre(quad.radial_per_shell);
    let mut best = 0.0_f64;
    for x in grid {
        let reach = bbox.reach_from(x).max(1e-6);
        let mut acc = ShellAccumulator::new();
        let mut hit_cap = true;
        for k in 0..quad.max_shell_levels {
            let hi = t * 0.5_f64.powi(k as i32);
            let lo = hi * 0.5;
            let mut contribution = 0.0;
            for (tn, tw) in gn.iter().zip(&gw) {
                let s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * tn;
                let ws = 0.5 * (hi - lo) * tw;
                let kern = move |y: Point| {
                    let d2 = geom::norm_sq(geom::sub(x, y));
                    (-c * d2 / (2.0 * s)).exp()
                };
                let space =
                    integrate_kernel(m, Part::Abs, &Ball::new(x, reach), x, &kern, quad)?;
                contribution += ws * s.powf(-(5.0 - alpha) / 2.0) * space;
            }
            if acc.push(contribution, quad.rel_tol) {
                hit_cap = false;
                break;
            }
        }
        best = best.max(acc.finish(hit_cap)?);
    }
    Ok(best)
}

/// Verdict of the Kato-class trend test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KatoVerdict {
    KatoCandidate,
    Rejected,
    Inconclusive,
}

/// Trend report for the membership heuristic. The verdict is a numerical
/// diagnostic, not a proof: the limit r -> 0 is unattainable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KatoReport {
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub norms: Vec<f64>,
    pub trend: f64,
    pub verdict: KatoVerdict,
}

/// Estimate `M_pi^alpha` along decreasing radii and classify the trend.
pub fn classify_kato(
    m: &SignedMeasure,
    alpha: f64,
    radii: &[f64],
    quad: &QuadratureSpec,
) -> KatoReport {
    assert!(radii.len() >= 4, "need at least 4 radii");
    assert!(
        radii.windows(2).all(|w| w[0] > w[1]),
        "radii must be strictly decreasing"
    );
    let mut norms = Vec::with_capacity(radii.len());
    let mut diverged = false;
    for &r in radii {
        match kato_norm_M(m, alpha, r, quad) {
            Ok(v) => norms.push(v),
            Err(_) => {
                norms.push(f64::INFINITY);
                diverged = true;
            }
        }
    }
    let trend = log_log_slope(radii, &norms);
    let verdict = if diverged {
        KatoVerdict::Rejected
    } else {
        let first = norms[0];
        let last = *norms.last().unwrap();
        let monotone = norms
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-12);
        if first <= 0.0 {
            // Zero measure: trivially a candidate.
            KatoVerdict::KatoCandidate
        } else if monotone && last < quad.trend_threshold * first {
            KatoVerdict::KatoCandidate
        } else if monotone {
            KatoVerdict::Inconclusive
        } else {
            KatoVerdict::Rejected
        }
    };
    KatoReport {
        alpha,
        radii: radii.to_vec(),
        norms,
        trend,
        verdict,
    }
}

fn log_log_slope(radii: &[f64], norms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(norms)
        .filter(|(r, n)| n.is_finite() && **n > 0.0 && **r > 0.0)
        .map(|(r, n)| (r.ln(), n.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Shifted-ball bound: for every candidate x and every shifted center x1,
/// `int_{B_r(x1)} |x-y|^{alpha-3} |pi|(dy) <= 2 M_pi^alpha(r)` up to tolerance.
pub fn shifted_ball_bound_check(
    m: &SignedMeasure,
    alpha: f64,
    r: f64,
    centers: &[Point],
    quad: &QuadratureSpec,
) -> Result<bool> {
    let bound = 2.0 * kato_norm_M(m, alpha, r, quad)? * 1.01 + 1e-12;
    let grid = sup_grid(&m.bbox().inflate(r), quad.sup_grid_n);
    for x in grid {
        for x1 in centers {
            let v = integrate_kernel(
                m,
                Part::Abs,
                &Ball::new(*x1, r),
                x,
                &kato_kernel(x, alpha),
                quad,
            )?;
            if v > bound {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_density_box(half: f64) -> SignedMeasure {
        SignedMeasure::SmoothDensity {
            density: Density::Constant(1.0),
            support: Support::Box(Aabb::new([-half; 3], [half; 3])),
        }
    }

    fn graph_example(amplitude: f64) -> SignedMeasure {
        SignedMeasure::GraphSingularDensity {
            graph: GraphFn::Zero,
            gamma: 0.7,
            half_width: 1.0,
            amplitude,
            bbox: Aabb::new([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]),
        }
    }

    #[test]
    fn density_examples() {
        let m = SignedMeasure::SmoothDensity {
            density: Density::Constant(1.0),
            support: Support::Box(Aabb::new([-2.0; 3], [2.0; 3])),
        };
        assert_eq!(eval_density(&m, [0.1, 0.0, 0.0]).unwrap(), 1.0);

        let g = graph_example(1.0);
        let v = eval_density(&g, [0.0, 0.0, 0.25]).unwrap();
        assert!((v - 0.25_f64.powf(-0.3)).abs() < 1e-12);
        assert!((v - 1.5157).abs() < 1e-3);

        let surf = SignedMeasure::HyperplaneSurface {
            level: 0.0,
            weight: Density::Constant(1.0),
            bbox: Aabb::new([-1.0; 3], [1.0; 3]),
        };
        assert!(matches!(
            eval_density(&surf, [0.0; 3]),
            Err(Error::UnsupportedKind)
        ));
    }

    #[test]
    fn kato_norm_constant_density() {
        // f == 1 on a big box: M^1(r) = int_{B_r} |z|^{-2} dz = 4 pi r.
        let m = unit_density_box(3.0);
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 3;
        let v = kato_norm_M(&m, 1.0, 0.5, &quad).unwrap();
        assert!(
            (v - 2.0 * PI).abs() / (2.0 * PI) < 0.02,
            "got {v}, want {}",
            2.0 * PI
        );
    }

    #[test]
    fn kato_norm_zero_measure() {
        let m = SignedMeasure::SmoothDensity {
            density: Density::Constant(0.0),
            support: Support::Box(Aabb::new([-1.0; 3], [1.0; 3])),
        };
        let quad = QuadratureSpec::coarse();
        assert_eq!(kato_norm_M(&m, 1.0, 0.5, &quad).unwrap(), 0.0);
    }

    #[test]
    fn hyperplane_diverges_at_alpha_one() {
        let m = SignedMeasure::HyperplaneSurface {
            level: 0.0,
            weight: Density::Constant(1.0),
            bbox: Aabb::new([-1.0; 3], [1.0; 3]),
        };
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 3;
        assert!(matches!(
            kato_norm_M(&m, 1.0, 0.5, &quad),
            Err(Error::DivergentIntegral)
        ));
    }

    #[test]
    fn monotone_in_radius() {
        let m = graph_example(1.0);
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 5;
        let small = kato_norm_M(&m, 0.6, 0.25, &quad).unwrap();
        let large = kato_norm_M(&m, 0.6, 0.5, &quad).unwrap();
        assert!(small <= large * (1.0 + 1e-9), "{small} vs {large}");
    }

    #[test]
    fn scaling_linearity() {
        let m = unit_density_box(1.0);
        let scaled = m.scaled(-2.5);
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 3;
        let a = kato_norm_M(&m, 1.0, 0.3, &quad).unwrap();
        let b = kato_norm_M(&scaled, 1.0, 0.3, &quad).unwrap();
        assert!((b - 2.5 * a).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn classify_trends() {
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 3;
        // Bounded density: M^1(r) ~ 4 pi r -> candidate.
        let smooth = unit_density_box(2.0);
        let radii = [0.4, 0.2, 0.1, 0.05, 0.02];
        let rep = classify_kato(&smooth, 1.0, &radii, &quad);
        assert_eq!(rep.verdict, KatoVerdict::KatoCandidate);
        assert!((rep.trend - 1.0).abs() < 0.15, "trend {}", rep.trend);

        // Codim-1 surface at alpha = 1: log-divergent.
        let surf = SignedMeasure::HyperplaneSurface {
            level: 0.0,
            weight: Density::Constant(1.0),
            bbox: Aabb::new([-1.0; 3], [1.0; 3]),
        };
        let rep = classify_kato(&surf, 1.0, &radii, &quad);
        assert_eq!(rep.verdict, KatoVerdict::Rejected);

        // Same surface at alpha = 1.5: M ~ r^{1/2}, a candidate over a wide span.
        let wide = [0.5, 0.125, 0.03125, 0.0078125, 0.002];
        let rep = classify_kato(&surf, 1.5, &wide, &quad);
        assert_eq!(rep.verdict, KatoVerdict::KatoCandidate, "norms {:?}", rep.norms);
    }

    #[test]
    fn class_nesting_on_graph_example() {
        // Accepted at alpha = 0.6 implies accepted at larger alpha.
        let m = graph_example(1.0);
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 5;
        let radii = [0.512, 0.128, 0.032, 0.008, 0.002, 0.0005];
        let low = classify_kato(&m, 0.6, &radii, &quad);
        assert_eq!(low.verdict, KatoVerdict::KatoCandidate, "norms {:?}", low.norms);
        let high = classify_kato(&m, 1.0, &radii, &quad);
        assert_eq!(high.verdict, KatoVerdict::KatoCandidate);
    }

    #[test]
    fn shifted_ball_bound_holds() {
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 4;
        let centers = [[0.1, -0.2, 0.05], [0.3, 0.3, -0.3], [0.0, 0.0, 0.0]];
        let m = unit_density_box(1.0);
        assert!(shifted_ball_bound_check(&m, 1.0, 0.3, &centers, &quad).unwrap());
        let g = graph_example(1.0);
        assert!(shifted_ball_bound_check(&g, 0.6, 0.3, &centers, &quad).unwrap());
        let zero = SignedMeasure::SmoothDensity {
            density: Density::Constant(0.0),
            support: Support::Box(Aabb::new([-1.0; 3], [1.0; 3])),
        };
        assert!(shifted_ball_bound_check(&zero, 1.0, 0.3, &centers, &quad).unwrap());
    }

    #[test]
    fn jordan_parts_split() {
        // f(x) = x1 on a box: plus and minus parts are nonnegative and recombine.
        let m = SignedMeasure::SmoothDensity {
            density: Density::Polynomial {
                constant: 0.0,
                linear: [1.0, 0.0, 0.0],
                quadratic: [0.0; 3],
            },
            support: Support::Box(Aabb::new([-1.0; 3], [1.0; 3])),
        };
        let plus = m.positive_part();
        let minus = m.negative_part();
        let quad = QuadratureSpec::coarse();
        let region = Ball::new([0.0; 3], 1.5);
        let one = |_: Point| 1.0;
        let ip = integrate_kernel(&plus, Part::Signed, &region, [0.0; 3], &one, &quad).unwrap();
        let im = integrate_kernel(&minus, Part::Signed, &region, [0.0; 3], &one, &quad).unwrap();
        let is = integrate_kernel(&m, Part::Signed, &region, [0.0; 3], &one, &quad).unwrap();
        assert!(ip >= 0.0 && im >= 0.0);
        assert!((is - (ip - im)).abs() < 1e-3);
    }

    #[test]
    fn n_norm_monotone_and_trending() {
        let mut quad = QuadratureSpec::coarse();
        quad.sup_grid_n = 3;
        let m = unit_density_box(1.0);
        let big = kato_norm_N(&m, 1.0, 1.0, 0.2, &quad).unwrap();
        let small = kato_norm_N(&m, 1.0, 1.0, 0.1, &quad).unwrap();
        assert!(small < big, "{small} vs {big}");

        let g = graph_example(1.0);
        let n1 = kato_norm_N(&g, 0.6, 1.0, 0.1, &quad).unwrap();
        let n2 = kato_norm_N(&g, 0.6, 1.0, 0.025, &quad).unwrap();
        let n3 = kato_norm_N(&g, 0.6, 1.0, 0.00625, &quad).unwrap();
        assert!(n3 < n2 && n2 < n1, "{n1} {n2} {n3}");
    }
}
