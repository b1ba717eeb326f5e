//! Deterministic small-ball oracle: the closed-form Green function of
//! `Delta/2` on a ball, the potential operator `R pi` and its gradient, the
//! weighted operator `B: pi -> (grad R pi) . mu`, and the Neumann-series
//! contraction solver for `Delta u / 2 + grad(u) . mu = -rhs` with zero
//! boundary data.
//!
//! Normalization: `R pi = int_0^infty q(t,x,y) pi(dy) dt` with `q` the killed
//! kernel of `Delta/2`, which is twice the classical Laplacian Green
//! function. In d = 3 with the image charge `y* = c + r^2 (y-c)/|y-c|^2`:
//!
//!   G(x,y) = (1/2pi) ( 1/|x-y| - r / (|y-c| |x-y*|) )
//!
//! The Poisson pin `R[1_{B_1} dx](0) = 1/3` fixes the constant.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, dist, norm, sub, Ball, Point};
use crate::lattice::Lattice3;
use crate::measures::{
    eval_density, integrate_kernel, integrate_kernels, kato_norm_M, Density, Part, QuadratureSpec,
    SignedMeasure, Support,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Coincidence guard for Green evaluations.
const SINGULAR_EPS: f64 = 1e-12;
/// Treat the pole as central below this offset (image charge degenerates).
const CENTRAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct BallGreen {
    pub center: Point,
    pub radius: f64,
}

impl BallGreen {
    pub fn new(center: Point, radius: f64) -> Self {
        assert!(radius > 0.0);
        Self { center, radius }
    }

    pub fn ball(&self) -> Ball {
        Ball::new(self.center, self.radius)
    }

    /// Image point of the pole `y`, and the accompanying charge scale
    /// `r / |y - c|`.
    fn image(&self, y: Point) -> Option<(Point, f64)> {
        let v = sub(y, self.center);
        let n = norm(v);
        if n < CENTRAL_EPS {
            return None;
        }
        let s = self.radius * self.radius / (n * n);
        Some((geom::axpy(s, v, self.center), self.radius / n))
    }

    /// `G(x, y)`; errors on (near-)coincident arguments.
    pub fn eval(&self, x: Point, y: Point) -> Result<f64> {
        let d = dist(x, y);
        if d < SINGULAR_EPS {
            return Err(Error::SingularPoint);
        }
        let image_term = match self.image(y) {
            Some((y_star, charge)) => charge / dist(x, y_star),
            // Central pole: the image term degenerates to the constant 1/r.
            None => 1.0 / self.radius,
        };
        Ok((1.0 / d - image_term) / TWO_PI)
    }

    /// Gradient of `G` in the first argument.
    pub fn grad_x(&self, x: Point, y: Point) -> Result<Point> {
        let d = dist(x, y);
        if d < SINGULAR_EPS {
            return Err(Error::SingularPoint);
        }
        let direct = geom::scale(sub(x, y), -1.0 / (d * d * d));
        let image = match self.image(y) {
            Some((y_star, charge)) => {
                let ds = dist(x, y_star);
                geom::scale(sub(x, y_star), -charge / (ds * ds * ds))
            }
            None => [0.0; 3],
        };
        Ok([
            (direct[0] - image[0]) / TWO_PI,
            (direct[1] - image[1]) / TWO_PI,
            (direct[2] - image[2]) / TWO_PI,
        ])
    }
}

/// Region ball from `x` covering the Green ball.
fn region_from(g: &BallGreen, x: Point) -> Ball {
    Ball::new(x, dist(x, g.center) + g.radius)
}

/// `R pi (x) = int_{B} G(x,y) pi(dy)`; the measure is restricted to the ball.
pub fn r_apply(g: &BallGreen, m: &SignedMeasure, x: Point, quad: &QuadratureSpec) -> Result<f64> {
    let ball = g.ball();
    let gg = *g;
    let kernel = move |y: Point| {
        if !ball.contains(y) {
            return 0.0;
        }
        gg.eval(x, y).unwrap_or(0.0)
    };
    integrate_kernel(m, Part::Signed, &region_from(g, x), x, &kernel, quad)
}

/// Gradient of the potential, all components in one quadrature pass.
pub fn r_grad(g: &BallGreen, m: &SignedMeasure, x: Point, quad: &QuadratureSpec) -> Result<Point> {
    let v = r_value_and_grad(g, m, x, quad)?;
    Ok([v[1], v[2], v[3]])
}

/// `[R pi, d1 R pi, d2 R pi, d3 R pi]` at `x`, sharing the quadrature pass.
pub fn r_value_and_grad(
    g: &BallGreen,
    m: &SignedMeasure,
    x: Point,
    quad: &QuadratureSpec,
) -> Result<[f64; 4]> {
    let ball = g.ball();
    let gg = *g;
    let value = move |y: Point| {
        if !ball.contains(y) {
            return 0.0;
        }
        gg.eval(x, y).unwrap_or(0.0)
    };
    let grad_i = |i: usize| {
        move |y: Point| {
            if !ball.contains(y) {
                return 0.0;
            }
            gg.grad_x(x, y).map(|v| v[i]).unwrap_or(0.0)
        }
    };
    let (g0, g1, g2) = (grad_i(0), grad_i(1), grad_i(2));
    let out = integrate_kernels(
        m,
        Part::Signed,
        &region_from(g, x),
        x,
        &[&value, &g0, &g1, &g2],
        quad,
    )?;
    Ok([out[0], out[1], out[2], out[3]])
}

/// Restriction `1_B(x) m(dx)` for density-type measures.
pub fn restrict_to_ball(m: &SignedMeasure, ball: Ball) -> Result<SignedMeasure> {
    // Surface kinds have no pointwise density to gate; reject early.
    eval_density(m, ball.center)?;
    let inner = m.clone();
    Ok(SignedMeasure::SmoothDensity {
        density: Density::Custom(Arc::new(move |x| {
            if ball.contains(x) {
                eval_density(&inner, x).unwrap_or(0.0)
            } else {
                0.0
            }
        })),
        support: Support::Ball(ball),
    })
}

/// Lattice-backed potential `R pi` with gradient, filled node-by-node by
/// deterministic quadrature (parallel over nodes).
#[derive(Debug, Clone)]
pub struct GreenPotential {
    pub value: Lattice3,
    pub grad: [Lattice3; 3],
    pub ball: Ball,
}

impl GreenPotential {
    pub fn build(
        g: &BallGreen,
        m: &SignedMeasure,
        pitch: f64,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        let ball = g.ball();
        let bbox = ball.bbox();
        let mut value = Lattice3::with_pitch(bbox, pitch, -1);
        let mut grad = [
            Lattice3::with_pitch(bbox, pitch, -1),
            Lattice3::with_pitch(bbox, pitch, -1),
            Lattice3::with_pitch(bbox, pitch, -1),
        ];
        let dims = value.dims;
        let n_nodes = dims[0] * dims[1] * dims[2];
        let probe = value.clone();
        let rows: Result<Vec<(f64, Point)>> = (0..n_nodes)
            .into_par_iter()
            .map(|flat| {
                let i = flat / (dims[1] * dims[2]);
                let j = (flat / dims[2]) % dims[1];
                let k = flat % dims[2];
                let x = probe.node(i, j, k);
                if !ball.contains(x) {
                    return Ok((0.0, [0.0; 3]));
                }
                let vg = r_value_and_grad(g, m, x, quad)?;
                Ok((vg[0], [vg[1], vg[2], vg[3]]))
            })
            .collect();
        let rows = rows?;
        for (flat, (v, gr)) in rows.into_iter().enumerate() {
            value.values[flat] = v;
            for a in 0..3 {
                grad[a].values[flat] = gr[a];
            }
        }
        Ok(Self { value, grad, ball })
    }

    pub fn eval(&self, x: Point) -> f64 {
        if self.ball.contains(x) {
            self.value.interp_clamped(x)
        } else {
            0.0
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        if !self.ball.contains(x) {
            return [0.0; 3];
        }
        [
            self.grad[0].interp_clamped(x),
            self.grad[1].interp_clamped(x),
            self.grad[2].interp_clamped(x),
        ]
    }

    /// Max gradient magnitude over interior lattice nodes.
    pub fn sup_grad(&self) -> f64 {
        let dims = self.value.dims;
        let mut best = 0.0f64;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let x = self.value.node(i, j, k);
                    if !self.ball.contains(x) {
                        continue;
                    }
                    let flat = self.value.index(i, j, k);
                    let g = [
                        self.grad[0].values[flat],
                        self.grad[1].values[flat],
                        self.grad[2].values[flat],
                    ];
                    best = best.max(norm(g));
                }
            }
        }
        best
    }
}

/// `B pi = (grad R pi) . mu` restricted to the ball, as a density measure.
/// Requires every drift component to be of density type.
pub fn bb_apply(
    g: &BallGreen,
    mu: &[Option<SignedMeasure>; 3],
    potential: &GreenPotential,
) -> Result<SignedMeasure> {
    for m in mu.iter().flatten() {
        eval_density(m, g.center)?;
    }
    let pot = potential.clone();
    let mu = mu.clone();
    let ball = g.ball();
    Ok(SignedMeasure::SmoothDensity {
        density: Density::Custom(Arc::new(move |x| {
            if !ball.contains(x) {
                return 0.0;
            }
            let grad = pot.gradient(x);
            let mut acc = 0.0;
            for (a, m) in mu.iter().enumerate() {
                if let Some(m) = m {
                    let d = eval_density(m, x).unwrap_or(0.0);
                    if d != 0.0 {
                        acc += grad[a] * d;
                    }
                }
            }
            acc
        })),
        support: Support::Ball(ball),
    })
}

/// Measured contraction behavior of `B` across probe radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub radii: Vec<f64>,
    /// `kappa(r) = M^1_{B pi}(r) / M^1_{pi}(r)` for the probe measure.
    pub kappas: Vec<f64>,
    /// Largest probed radius with `kappa <= 1/2`.
    pub r0_estimate: Option<f64>,
}

/// Lattice pitch for potentials, as a fraction of the ball radius.
const POTENTIAL_PITCH_FRAC: f64 = 1.0 / 32.0;

pub fn contraction_factor(
    center: Point,
    mu: &[Option<SignedMeasure>; 3],
    probe: &SignedMeasure,
    r_list: &[f64],
    quad: &QuadratureSpec,
) -> Result<ContractionReport> {
    let mut kappas = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let g = BallGreen::new(center, r);
        let probe_r = restrict_to_ball(probe, g.ball())?;
        let base = kato_norm_M(&probe_r, 1.0, r, quad)?;
        if base == 0.0 {
            kappas.push(0.0);
            continue;
        }
        let pot = GreenPotential::build(&g, &probe_r, r * POTENTIAL_PITCH_FRAC, quad)?;
        let weighted = bb_apply(&g, mu, &pot)?;
        let top = kato_norm_M(&weighted, 1.0, r, quad)?;
        kappas.push(top / base);
    }
    let r0_estimate = r_list
        .iter()
        .zip(&kappas)
        .filter(|(_, k)| **k <= 0.5)
        .map(|(r, _)| *r)
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a: f64| a.max(r)))
        });
    Ok(ContractionReport {
        radii: r_list.to_vec(),
        kappas,
        r0_estimate,
    })
}

/// Neumann-series solution of `Delta u / 2 + grad(u) . mu = -rhs` with zero
/// boundary values on the ball.
#[derive(Debug, Clone)]
pub struct ContractionSolution {
    pub value: Lattice3,
    pub ball: Ball,
    /// Sup-gradient of each series term (geometric decay diagnostic).
    pub term_sup_grads: Vec<f64>,
}

impl ContractionSolution {
    pub fn eval(&self, x: Point) -> f64 {
        if self.ball.contains(x) {
            self.value.interp_clamped(x)
        } else {
            0.0
        }
    }
}

pub fn contraction_solve(
    g: &BallGreen,
    mu: &[Option<SignedMeasure>; 3],
    rhs: &SignedMeasure,
    tol: f64,
    max_iter: usize,
    quad: &QuadratureSpec,
) -> Result<ContractionSolution> {
    let ball = g.ball();
    let pitch = g.radius * POTENTIAL_PITCH_FRAC;
    let mut term = restrict_to_ball(rhs, ball)?;
    let mut value: Option<Lattice3> = None;
    let mut term_sup_grads = Vec::new();

    for _ in 0..max_iter {
        let pot = GreenPotential::build(g, &term, pitch, quad)?;
        match &mut value {
            Some(acc) => {
                for (a, v) in acc.values.iter_mut().zip(&pot.value.values) {
                    *a += v;
                }
            }
            None => value = Some(pot.value.clone()),
        }
        let sup = pot.sup_grad();
        term_sup_grads.push(sup);
        if sup < tol {
            return Ok(ContractionSolution {
                value: value.unwrap(),
                ball,
                term_sup_grads,
            });
        }
        if term_sup_grads.len() >= 3 {
            let n = term_sup_grads.len();
            let ratio = term_sup_grads[n - 1] / term_sup_grads[n - 2].max(1e-300);
            if ratio >= 1.0 {
                return Err(Error::NoContraction {
                    kappa: ratio,
                    radius: g.radius,
                });
            }
        }
        term = bb_apply(g, mu, &pot)?;
    }
    // Ran out of terms: accept if the tail is already contracting fast.
    let n = term_sup_grads.len();
    let ratio = term_sup_grads[n - 1] / term_sup_grads[n - 2].max(1e-300);
    if ratio < 0.8 {
        Ok(ContractionSolution {
            value: value.unwrap(),
            ball,
            term_sup_grads,
        })
    } else {
        Err(Error::NoContraction {
            kappa: ratio,
            radius: g.radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_green() -> BallGreen {
        BallGreen::new([0.0; 3], 1.0)
    }

    fn unit_density() -> SignedMeasure {
        SignedMeasure::SmoothDensity {
            density: Density::Constant(1.0),
            support: Support::Ball(Ball::new([0.0; 3], 1.0)),
        }
    }

    #[test]
    fn central_pole_value() {
        // G(x, 0) = (1/2pi)(1/|x| - 1), here 1/(2pi) at |x| = 1/2.
        let g = unit_green();
        let v = g.eval([0.5, 0.0, 0.0], [0.0; 3]).unwrap();
        assert!((v - 1.0 / TWO_PI).abs() < 1e-12, "{v}");
    }

    #[test]
    fn boundary_vanishing_and_positivity() {
        let g = unit_green();
        let y = [0.3, 0.1, -0.2];
        let mut prev = f64::INFINITY;
        for k in 1..=9 {
            let x = [0.55 + 0.05 * k as f64, 0.0, 0.0];
            let v = g.eval(x, y).unwrap();
            assert!(v > 0.0 && v < prev, "x {x:?} v {v}");
            prev = v;
        }
        let near = g.eval([0.999999, 0.0, 0.0], y).unwrap();
        assert!(near < 1e-4, "{near}");
    }

    #[test]
    fn singular_point_rejected() {
        let g = unit_green();
        assert!(matches!(
            g.eval([0.2; 3], [0.2; 3]),
            Err(Error::SingularPoint)
        ));
    }

    #[test]
    fn grad_matches_finite_differences() {
        let g = unit_green();
        let x = [0.3, -0.2, 0.1];
        let y = [-0.1, 0.4, 0.2];
        let grad = g.grad_x(x, y).unwrap();
        let h = 1e-5;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (g.eval(xp, y).unwrap() - g.eval(xm, y).unwrap()) / (2.0 * h);
            let rel = (grad[a] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-6, "axis {a} grad {} fd {fd}", grad[a]);
        }
    }

    #[test]
    fn poisson_pin() {
        // R[1_{B_1} dx](0) = 1/3, the central value of (1 - |x|^2)/3.
        let g = unit_green();
        let v = r_apply(&g, &unit_density(), [0.0; 3], &QuadratureSpec::coarse()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 2e-3, "{v}");
        // Off-center check against the same closed form.
        let x = [0.4, 0.0, 0.0];
        let v = r_apply(&g, &unit_density(), x, &QuadratureSpec::coarse()).unwrap();
        assert!((v - (1.0 - 0.16) / 3.0).abs() < 2e-3, "{v}");
    }

    #[test]
    fn radial_gradient_vanishes_at_center() {
        let g = unit_green();
        let grad = r_grad(&g, &unit_density(), [0.0; 3], &QuadratureSpec::coarse()).unwrap();
        assert!(norm(grad) < 2e-3, "{grad:?}");
        // And matches -2x/3 off center.
        let x = [0.4, 0.0, 0.0];
        let grad = r_grad(&g, &unit_density(), x, &QuadratureSpec::coarse()).unwrap();
        assert!((grad[0] + 2.0 * 0.4 / 3.0).abs() < 5e-3, "{grad:?}");
        assert!(grad[1].abs() < 2e-3 && grad[2].abs() < 2e-3);
    }

    #[test]
    fn zero_measure_everything_zero() {
        let g = unit_green();
        let zero = SignedMeasure::SmoothDensity {
            density: Density::Constant(0.0),
            support: Support::Ball(Ball::new([0.0; 3], 1.0)),
        };
        assert_eq!(
            r_apply(&g, &zero, [0.2, 0.0, 0.0], &QuadratureSpec::coarse()).unwrap(),
            0.0
        );
        let report = contraction_factor(
            [0.0; 3],
            &[None, None, None],
            &unit_density(),
            &[0.5],
            &QuadratureSpec::coarse(),
        )
        .unwrap();
        assert_eq!(report.kappas, vec![0.0]);
    }

    #[test]
    fn contraction_solve_poisson() {
        // mu = 0, rhs = dx on the unit ball: u(x) = (1 - |x|^2)/3.
        let g = unit_green();
        let sol = contraction_solve(
            &g,
            &[None, None, None],
            &unit_density(),
            1e-9,
            3,
            &QuadratureSpec::coarse(),
        )
        .unwrap();
        // mu = 0 terminates after the first term (B rhs = 0).
        assert!(sol.term_sup_grads.len() <= 2);
        for x in [[0.0; 3], [0.3, 0.0, 0.0], [0.0, -0.5, 0.2]] {
            let want = (1.0 - geom::norm_sq(x)) / 3.0;
            let got = sol.eval(x);
            assert!((got - want).abs() < 5e-3, "{x:?}: {got} vs {want}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn symmetry(
            x in prop::array::uniform3(-0.6f64..0.6),
            y in prop::array::uniform3(-0.6f64..0.6),
        ) {
            prop_assume!(dist(x, y) > 1e-3);
            let g = unit_green();
            let a = g.eval(x, y).unwrap();
            let b = g.eval(y, x).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            prop_assert!(a > 0.0);
        }
    }
}
