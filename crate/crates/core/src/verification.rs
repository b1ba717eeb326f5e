//! Independent oracles and residual checks: a finite-difference reference
//! solver for smooth-coefficient box instances, the weak-form residual
//! `Q(u, phi) - int phi d rho`, level-coupled convergence studies, and the
//! lattice-sampled Monte Carlo field used for residual testing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::feynman_kac::{estimate_u, BoundaryData, Estimate};
use crate::geom::{self, gauss_on, Aabb, Ball, Point};
use crate::lattice::Lattice3;
use crate::measures::{integrate_kernel, Part, QuadratureSpec, SignedMeasure};
use crate::sde::{Coefficients, SimConfig};

// ---------------------------------------------------------------------------
// Test functions for the weak form
// ---------------------------------------------------------------------------

/// Smooth compactly supported bump `exp(-1/(1 - |x-c|^2/s^2))` on
/// `|x-c| < s`, with analytic gradient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Point,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(center: Point, scale: f64) -> Self {
        assert!(scale > 0.0);
        Self { center, scale }
    }

    pub fn support(&self) -> Ball {
        Ball::new(self.center, self.scale)
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        let t = geom::norm_sq(geom::sub(x, self.center)) / (self.scale * self.scale);
        if t >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t)).exp()
        }
    }

    #[inline]
    pub fn grad(&self, x: Point) -> Point {
        let d = geom::sub(x, self.center);
        let s2 = self.scale * self.scale;
        let t = geom::norm_sq(d) / s2;
        if t >= 1.0 {
            return [0.0; 3];
        }
        let v = (-1.0 / (1.0 - t)).exp();
        let factor = -2.0 * v / (s2 * (1.0 - t) * (1.0 - t));
        geom::scale(d, factor)
    }
}

/// Default basket: five bumps at varied centers and scales, all strictly
/// inside the domain.
pub fn default_basket(domain: &Domain) -> Vec<TestFunction> {
    let bbox = domain.bbox();
    let c = bbox.center();
    let r = domain.diameter() / 2.0;
    let candidates = [
        (c, 0.55 * r),
        (geom::axpy(0.35 * r, [1.0, 0.0, 0.0], c), 0.3 * r),
        (geom::axpy(0.35 * r, [0.0, 1.0, 0.0], c), 0.3 * r),
        (geom::axpy(0.3 * r, [0.0, 0.0, -1.0], c), 0.3 * r),
        (geom::axpy(0.25 * r, [-0.6, -0.6, 0.3], c), 0.25 * r),
    ];
    candidates
        .into_iter()
        .filter(|(center, scale)| domain.boundary_distance(*center) > *scale)
        .map(|(center, scale)| TestFunction::new(center, scale))
        .collect()
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Second-order central-difference solve of
/// `Delta u / 2 + b . grad u + q u = -f` on a box with Dirichlet data `phi`,
/// by SOR iteration to an absolute residual of `tol`.
///
/// Strictly for smooth callable coefficients; this is the reference the
/// measure-coefficient solver is compared against on smooth instances.
#[allow(clippy::too_many_arguments)]
pub fn fd_oracle_solve(
    bbox: Aabb,
    b: &dyn Fn(Point) -> [f64; 3],
    q: &dyn Fn(Point) -> f64,
    f: &dyn Fn(Point) -> f64,
    phi: &dyn Fn(Point) -> f64,
    grid_n: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<Lattice3> {
    assert!((3..=129).contains(&grid_n), "grid_n within [3, 129]");
    let mut u = Lattice3::new(bbox, [grid_n; 3], -1);
    let n = grid_n;
    let h = [u.spacing(0), u.spacing(1), u.spacing(2)];

    // Precompute per-node stencil data so the sweeps are pure arithmetic.
    let mut diag = vec![0.0; u.values.len()];
    let mut cp = vec![[0.0; 3]; u.values.len()];
    let mut cm = vec![[0.0; 3]; u.values.len()];
    let mut rhs = vec![0.0; u.values.len()];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = u.index(i, j, k);
                let x = u.node(i, j, k);
                if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                    u.values[idx] = phi(x);
                    continue;
                }
                let bv = b(x);
                let mut d = q(x);
                for a in 0..3 {
                    let inv2 = 1.0 / (h[a] * h[a]);
                    cp[idx][a] = 0.5 * inv2 + bv[a] / (2.0 * h[a]);
                    cm[idx][a] = 0.5 * inv2 - bv[a] / (2.0 * h[a]);
                    d -= inv2;
                }
                diag[idx] = d;
                rhs[idx] = -f(x);
                u.values[idx] = phi(x); // harmless warm start
            }
        }
    }

    let stride = [u.dims[1] * u.dims[2], u.dims[2], 1];
    // Over-relaxation tuned to the Poisson optimum for this grid.
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / (n as f64 - 1.0)).sin());

    let mut sweeps = 0;
    loop {
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let idx = u.index(i, j, k);
                    let mut acc = rhs[idx];
                    for a in 0..3 {
                        acc -= cp[idx][a] * u.values[idx + stride[a]]
                            + cm[idx][a] * u.values[idx - stride[a]];
                    }
                    let new = acc / diag[idx];
                    u.values[idx] += omega * (new - u.values[idx]);
                }
            }
        }
        sweeps += 1;
        if sweeps % 20 == 0 || sweeps >= max_sweeps {
            // True residual of the discrete equation.
            let mut res = 0.0f64;
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    for k in 1..n - 1 {
                        let idx = u.index(i, j, k);
                        let mut acc = diag[idx] * u.values[idx] - rhs[idx];
                        for a in 0..3 {
                            acc += cp[idx][a] * u.values[idx + stride[a]]
                                + cm[idx][a] * u.values[idx - stride[a]];
                        }
                        res = res.max(acc.abs());
                    }
                }
            }
            // Scale by the stencil magnitude: tol is on the solution scale.
            let scaled = res * h[0] * h[0];
            if scaled <= tol {
                return Ok(u);
            }
            if sweeps >= max_sweeps {
                return Err(Error::NonConvergence {
                    residual: scaled,
                    iters: sweeps,
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Weak residual
// ---------------------------------------------------------------------------

/// Gauss order per axis for the smooth volume integrals.
const VOLUME_ORDER: usize = 24;

/// Residuals `Q(u, phi_j) - int phi_j d rho` for each test function, where
/// `Q(u, v) = 1/2 int grad u . grad v dx - sum_i int d_i(u) v mu_i(dx)
///          - int u v nu(dx)`.
#[allow(clippy::too_many_arguments)]
pub fn weak_residual(
    u: &(dyn Fn(Point) -> f64 + Sync),
    u_grad: &(dyn Fn(Point) -> Point + Sync),
    mu: &[Option<SignedMeasure>; 3],
    nu: Option<&SignedMeasure>,
    rho: Option<&SignedMeasure>,
    tests: &[TestFunction],
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    // The measure-term integrands (bump times solution) are smooth but far
    // from polynomial; refine the radial rule beyond the sup-scan default.
    let mut quad = quad.clone();
    quad.radial_per_shell = quad.radial_per_shell.max(8);
    quad.sphere_points = quad.sphere_points.max(192);
    quad.rel_tol = quad.rel_tol.min(1e-6);
    let quad = &quad;
    let mut out = Vec::with_capacity(tests.len());
    for t in tests {
        let support = t.support();
        let bbox = support.bbox();

        // Dirichlet energy term by tensor Gauss over the support box.
        let (nx, wx) = gauss_on(bbox.lo[0], bbox.hi[0], VOLUME_ORDER);
        let (ny, wy) = gauss_on(bbox.lo[1], bbox.hi[1], VOLUME_ORDER);
        let (nz, wz) = gauss_on(bbox.lo[2], bbox.hi[2], VOLUME_ORDER);
        let energy: f64 = nx
            .par_iter()
            .zip(&wx)
            .map(|(x0, w0)| {
                let mut acc = 0.0;
                for (x1, w1) in ny.iter().zip(&wy) {
                    for (x2, w2) in nz.iter().zip(&wz) {
                        let x = [*x0, *x1, *x2];
                        let tg = t.grad(x);
                        if tg == [0.0; 3] {
                            continue;
                        }
                        acc += w1 * w2 * geom::dot(u_grad(x), tg);
                    }
                }
                w0 * acc
            })
            .sum();
        let mut residual = 0.5 * energy;

        // Measure terms integrate the raw measures (fiber-analytic rules for
        // singular kinds), graded toward the test center for uniformity.
        for (a, m) in mu.iter().enumerate() {
            if let Some(m) = m {
                let kernel = move |y: Point| {
                    let tv = t.eval(y);
                    if tv == 0.0 {
                        0.0
                    } else {
                        u_grad(y)[a] * tv
                    }
                };
                residual -=
                    integrate_kernel(m, Part::Signed, &support, t.center, &kernel, quad)?;
            }
        }
        if let Some(nu) = nu {
            let kernel = move |y: Point| {
                let tv = t.eval(y);
                if tv == 0.0 {
                    0.0
                } else {
                    u(y) * tv
                }
            };
            residual -= integrate_kernel(nu, Part::Signed, &support, t.center, &kernel, quad)?;
        }
        if let Some(rho) = rho {
            let kernel = move |y: Point| t.eval(y);
            residual -= integrate_kernel(rho, Part::Signed, &support, t.center, &kernel, quad)?;
        }
        out.push(residual);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelSpec {
    pub h: f64,
    pub level: u32,
    pub n_paths: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub level: u32,
    pub n_paths: u64,
    pub value: f64,
    pub stderr: f64,
    /// Difference to the previous (coarser) row.
    pub diff: Option<f64>,
}

/// Estimate the same point across refinement levels, with the Brownian paths
/// coupled through shared fine-scale increments (the coarse step consumes the
/// same Gaussian stream as the finest one via `substeps`). The bridge
/// correction is disabled here: its extra uniform draws would desynchronize
/// the streams between levels and break the coupling.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    x0: Point,
    domain: &Domain,
    mu: &[Option<SignedMeasure>; 3],
    nu: Option<&SignedMeasure>,
    rho: Option<&SignedMeasure>,
    phi: &BoundaryData,
    base_cfg: &SimConfig,
    levels: &[LevelSpec],
) -> Result<Vec<StudyRow>> {
    assert!(!levels.is_empty());
    let h_min = levels
        .iter()
        .map(|l| l.h)
        .fold(f64::INFINITY, f64::min);
    let mut rows: Vec<StudyRow> = Vec::with_capacity(levels.len());
    for spec in levels {
        let ratio = (spec.h / h_min).round();
        assert!(
            (spec.h / h_min - ratio).abs() < 1e-9 && ratio >= 1.0,
            "level steps must be integer multiples of the finest step"
        );
        let cfg = SimConfig {
            h: spec.h,
            level: Some(spec.level),
            substeps: ratio as u32,
            bridge: false,
            ..base_cfg.clone()
        };
        let coeffs = Coefficients::build(mu, nu, rho, &cfg);
        let est = estimate_u(x0, domain, &coeffs, phi, &cfg, spec.n_paths)?;
        let diff = rows.last().map(|prev: &StudyRow| est.value - prev.value);
        rows.push(StudyRow {
            h: spec.h,
            level: spec.level,
            n_paths: spec.n_paths,
            value: est.value,
            stderr: est.stderr,
            diff,
        });
    }
    Ok(rows)
}

/// Plot-ready CSV for study rows.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("h,level,N,value,stderr,diff\n");
    for r in rows {
        let diff = r.diff.map(|d| format!("{d:.9e}")).unwrap_or_default();
        out.push_str(&format!(
            "{:.9e},{},{},{:.9e},{:.9e},{}\n",
            r.h, r.level, r.n_paths, r.value, r.stderr, diff
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Lattice-sampled MC field
// ---------------------------------------------------------------------------

/// Estimate the solution at every lattice node inside the domain (parallel
/// per node, per-node seeds derived from the base seed), then apply one
/// [1,2,1]^3 smoothing pass over interior nodes.
#[allow(clippy::too_many_arguments)]
pub fn mc_field_on_lattice(
    domain: &Domain,
    coeffs: &Coefficients,
    phi: &BoundaryData,
    cfg: &SimConfig,
    dims: [usize; 3],
    paths_per_node: u64,
) -> Result<(Lattice3, Vec<Estimate>)> {
    let mut lat = Lattice3::new(domain.bbox(), dims, -1);
    let probe = lat.clone();
    let n_nodes = dims[0] * dims[1] * dims[2];
    let node_results: Result<Vec<Option<Estimate>>> = (0..n_nodes)
        .into_par_iter()
        .map(|flat| {
            let i = flat / (dims[1] * dims[2]);
            let j = (flat / dims[2]) % dims[1];
            let k = flat % dims[2];
            let x = probe.node(i, j, k);
            if !domain.contains(x) {
                return Ok(None);
            }
            let node_cfg = SimConfig {
                seed: cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(flat as u64 + 1)),
                ..cfg.clone()
            };
            estimate_u(x, domain, coeffs, phi, &node_cfg, paths_per_node).map(Some)
        })
        .collect();
    let node_results = node_results?;
    let mut estimates = Vec::new();
    for (flat, est) in node_results.into_iter().enumerate() {
        if let Some(est) = est {
            lat.values[flat] = est.value;
            estimates.push(est);
        }
    }

    // One binomial smoothing pass; boundary-adjacent nodes keep raw values.
    let raw = lat.values.clone();
    let weights_1d = [1.0, 2.0, 1.0];
    for i in 1..dims[0] - 1 {
        for j in 1..dims[1] - 1 {
            for k in 1..dims[2] - 1 {
                let x = lat.node(i, j, k);
                if !domain.contains(x) {
                    continue;
                }
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (di, wi) in weights_1d.iter().enumerate() {
                    for (dj, wj) in weights_1d.iter().enumerate() {
                        for (dk, wk) in weights_1d.iter().enumerate() {
                            let ni = i + di - 1;
                            let nj = j + dj - 1;
                            let nk = k + dk - 1;
                            if !domain.contains(lat.node(ni, nj, nk)) {
                                continue;
                            }
                            let w = wi * wj * wk;
                            acc += w * raw[lat.index(ni, nj, nk)];
                            wsum += w;
                        }
                    }
                }
                if wsum > 0.0 {
                    let idx = lat.index(i, j, k);
                    lat.values[idx] = acc / wsum;
                }
            }
        }
    }
    Ok((lat, estimates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Density, Support};

    #[test]
    fn test_function_gradient_matches_fd() {
        let t = TestFunction::new([0.1, -0.2, 0.0], 0.6);
        let x = [0.3, 0.0, 0.1];
        let g = t.grad(x);
        let h = 1e-6;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (t.eval(xp) - t.eval(xm)) / (2.0 * h);
            assert!((g[a] - fd).abs() < 1e-6, "axis {a}: {} vs {fd}", g[a]);
        }
        // Vanishes with gradient outside the support.
        assert_eq!(t.eval([1.0, 1.0, 1.0]), 0.0);
        assert_eq!(t.grad([1.0, 1.0, 1.0]), [0.0; 3]);
    }

    #[test]
    fn fd_linear_in_kernel() {
        // Laplace with phi(x) = x1: linear functions solve the discrete
        // equations exactly.
        let bbox = Aabb::new([0.0; 3], [1.0; 3]);
        let u = fd_oracle_solve(
            bbox,
            &|_| [0.0; 3],
            &|_| 0.0,
            &|_| 0.0,
            &|x| x[0],
            17,
            1e-10,
            20_000,
        )
        .unwrap();
        for x in [[0.5; 3], [0.25, 0.75, 0.5]] {
            assert!((u.interp_clamped(x) - x[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn fd_poisson_self_convergence() {
        // Delta u / 2 = -1, phi = 0 on the unit cube: second-order
        // self-convergence of the center value.
        let bbox = Aabb::new([0.0; 3], [1.0; 3]);
        let mut centers = Vec::new();
        for grid_n in [9, 17, 33] {
            let u = fd_oracle_solve(
                bbox,
                &|_| [0.0; 3],
                &|_| 0.0,
                &|_| 1.0,
                &|_| 0.0,
                grid_n,
                1e-10,
                20_000,
            )
            .unwrap();
            centers.push(u.interp_clamped([0.5; 3]));
        }
        let d1 = (centers[1] - centers[0]).abs();
        let d2 = (centers[2] - centers[1]).abs();
        let ratio = d1 / d2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}, {centers:?}");
    }

    #[test]
    fn fd_killing_maximum_principle() {
        // q = -1, f = 0, phi = 1: center value strictly inside (0, 1).
        let bbox = Aabb::new([0.0; 3], [1.0; 3]);
        let u = fd_oracle_solve(
            bbox,
            &|_| [0.0; 3],
            &|_| -1.0,
            &|_| 0.0,
            &|_| 1.0,
            33,
            1e-10,
            20_000,
        )
        .unwrap();
        let c = u.interp_clamped([0.5; 3]);
        assert!(c > 0.0 && c < 1.0, "{c}");
    }

    #[test]
    fn weak_residual_harmonic() {
        // u = x1, all measures zero: residuals vanish by integration by
        // parts against compact tests.
        let tests = vec![
            TestFunction::new([0.0; 3], 0.5),
            TestFunction::new([0.2, 0.1, -0.1], 0.3),
        ];
        let res = weak_residual(
            &|x: Point| x[0],
            &|_| [1.0, 0.0, 0.0],
            &[None, None, None],
            None,
            None,
            &tests,
            &QuadratureSpec::coarse(),
        )
        .unwrap();
        for r in res {
            assert!(r.abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn weak_residual_poisson() {
        // u = (1 - |x|^2)/3, rho = dx on the unit ball: Q(u, phi) equals
        // int phi dx for interior tests.
        let rho = SignedMeasure::SmoothDensity {
            density: Density::Constant(1.0),
            support: Support::Ball(Ball::new([0.0; 3], 1.0)),
        };
        let tests = vec![
            TestFunction::new([0.0; 3], 0.6),
            TestFunction::new([0.25, 0.0, 0.1], 0.35),
        ];
        let res = weak_residual(
            &|x: Point| (1.0 - geom::norm_sq(x)) / 3.0,
            &|x: Point| geom::scale(x, -2.0 / 3.0),
            &[None, None, None],
            None,
            Some(&rho),
            &tests,
            &QuadratureSpec::coarse(),
        )
        .unwrap();
        for r in res {
            assert!(r.abs() < 1e-4, "{r}");
        }
    }

    #[test]
    fn weak_residual_drift_closed_form() {
        // u = exp(-2 b . x) with mu = b dx solves the pure drift problem.
        let b = [0.5, 0.0, 0.0];
        let mu = SignedMeasure::SmoothDensity {
            density: Density::Constant(b[0]),
            support: Support::Ball(Ball::new([0.0; 3], 1.0)),
        };
        let u = move |x: Point| (-2.0 * geom::dot(b, x)).exp();
        let grad = move |x: Point| geom::scale(b, -2.0 * u(x));
        let tests = vec![TestFunction::new([0.0; 3], 0.5)];
        let res = weak_residual(
            &u,
            &grad,
            &[Some(mu), None, None],
            None,
            None,
            &tests,
            &QuadratureSpec::coarse(),
        )
        .unwrap();
        assert!(res[0].abs() < 1e-4, "{}", res[0]);
    }

    #[test]
    fn study_rows_and_csv() {
        let domain = Domain::ball([0.0; 3], 1.0);
        let phi = BoundaryData::named("coordinate", &[0.0]).unwrap();
        let base = SimConfig {
            seed: 5,
            ..SimConfig::default()
        };
        let rows = convergence_study(
            [0.2, 0.0, 0.0],
            &domain,
            &[None, None, None],
            None,
            None,
            &phi,
            &base,
            &[
                LevelSpec {
                    h: 0.04,
                    level: 2,
                    n_paths: 400,
                },
                LevelSpec {
                    h: 0.01,
                    level: 3,
                    n_paths: 400,
                },
            ],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].diff.is_none() && rows[1].diff.is_some());
        // Driftless harmonic instance: levels agree within CIs.
        let gap = rows[1].diff.unwrap().abs();
        assert!(
            gap <= 3.0 * (rows[0].stderr + rows[1].stderr) + 0.05,
            "gap {gap}"
        );
        let csv = study_csv(&rows);
        assert!(csv.starts_with("h,level,N,value,stderr,diff\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
