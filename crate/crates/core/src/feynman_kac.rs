//! Path-payoff assembly: the solution estimator
//! `u(x) = E_x[e^{L_tau} phi(X_tau) + int_0^tau e^{L_s} dV_s]`,
//! the gauge `E_x[e^{L_tau}]`, and the Khasminskii moment diagnostics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::Result;
use crate::geom::Point;
use crate::sde::{simulate_many, Coefficients, PathRecord, SimConfig};

/// Boundary data phi, selectable from a named registry so run configs stay
/// declarative.
#[derive(Clone)]
pub struct BoundaryData {
    pub name: String,
    f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoundaryData({})", self.name)
    }
}

impl BoundaryData {
    pub fn new(name: impl Into<String>, f: Arc<dyn Fn(Point) -> f64 + Send + Sync>) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }

    /// Registry: `zero`, `one`, `coordinate` (params: [axis]),
    /// `exp-linear` (params: [a1,a2,a3] -> exp(a.x)).
    pub fn named(name: &str, params: &[f64]) -> Option<Self> {
        match name {
            "zero" => Some(Self::new("zero", Arc::new(|_| 0.0))),
            "one" => Some(Self::new("one", Arc::new(|_| 1.0))),
            "coordinate" => {
                let axis = params.first().copied().unwrap_or(0.0) as usize;
                if axis > 2 {
                    return None;
                }
                Some(Self::new("coordinate", Arc::new(move |x: Point| x[axis])))
            }
            "exp-linear" => {
                if params.len() != 3 {
                    return None;
                }
                let a = [params[0], params[1], params[2]];
                Some(Self::new(
                    "exp-linear",
                    Arc::new(move |x: Point| (a[0] * x[0] + a[1] * x[1] + a[2] * x[2]).exp()),
                ))
            }
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        (self.f)(x)
    }
}

/// Monte Carlo mean with uncertainty and the config echo needed to reproduce
/// it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub n_capped: u64,
    pub h: f64,
    pub level: u32,
    pub seed: u64,
    /// Heavy-tail flag: relative stderr of the payoff exceeded 0.5,
    /// suggesting the gauge may not be finite.
    pub gauge_warning: bool,
}

fn reduce(payoffs: &[f64], records: &[PathRecord], cfg: &SimConfig) -> Estimate {
    let n = payoffs.len() as f64;
    // Index-ordered reduction keeps sums bit-stable across worker counts.
    let mean = payoffs.iter().sum::<f64>() / n;
    let var = if payoffs.len() > 1 {
        payoffs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let stderr = (var / n).sqrt();
    Estimate {
        value: mean,
        stderr,
        n_paths: payoffs.len() as u64,
        n_capped: records.iter().filter(|r| r.capped).count() as u64,
        h: cfg.h,
        level: cfg.resolved_level(),
        seed: cfg.seed,
        gauge_warning: stderr > 0.5 * mean.abs().max(1e-300),
    }
}

/// Per-path payoff of the full representation.
#[inline]
pub fn payoff(rec: &PathRecord, phi: &BoundaryData, has_nu: bool) -> f64 {
    let boundary = phi.eval(rec.exit_point);
    if has_nu {
        rec.l_at_exit.exp() * boundary + rec.v_weighted
    } else {
        // nu = 0 reduction: phi(X_tau) + V_tau, no exponential weight.
        boundary + rec.v_weighted
    }
}

pub fn estimate_u(
    x0: Point,
    domain: &Domain,
    coeffs: &Coefficients,
    phi: &BoundaryData,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Estimate> {
    let records = simulate_many(x0, domain, coeffs, cfg, n_paths, 0)?;
    let has_nu = coeffs.nu.is_some();
    let payoffs: Vec<f64> = records.iter().map(|r| payoff(r, phi, has_nu)).collect();
    Ok(reduce(&payoffs, &records, cfg))
}

/// Gauge and Khasminskii diagnostics at a point, with beta estimated over a
/// probe grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeReport {
    pub gauge: Estimate,
    /// `max over probes of E_x[|L|_tau]` (lower estimate of the true sup).
    pub beta: f64,
    pub beta_stderr: f64,
    /// `1/(1-beta)` when `beta < 1`.
    pub khasminskii_bound: f64,
    pub bound_holds: bool,
}

/// Interior probe grid: `per_axis` candidates per axis over the bounding box,
/// kept when safely inside the domain.
pub fn probe_grid(domain: &Domain, per_axis: usize) -> Vec<Point> {
    let bbox = domain.bbox();
    let mut out = Vec::new();
    let margin = 1e-6 * domain.diameter();
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                let f = |a: usize, t: usize| {
                    bbox.lo[a]
                        + (bbox.hi[a] - bbox.lo[a]) * (t as f64 + 0.5) / per_axis as f64
                };
                let x = [f(0, i), f(1, j), f(2, k)];
                if domain.boundary_distance(x) > margin {
                    out.push(x);
                }
            }
        }
    }
    out
}

pub fn estimate_gauge(
    x0: Point,
    domain: &Domain,
    coeffs: &Coefficients,
    cfg: &SimConfig,
    n_paths: u64,
    probes: &[Point],
    probe_paths: u64,
) -> Result<GaugeReport> {
    let records = simulate_many(x0, domain, coeffs, cfg, n_paths, 0)?;
    let weights: Vec<f64> = records.iter().map(|r| r.l_at_exit.exp()).collect();
    let gauge = reduce(&weights, &records, cfg);

    // beta = sup E_x[|L|_tau], scanned over the probes plus x0 itself.
    let mut beta = 0.0f64;
    let mut beta_stderr = 0.0f64;
    let mut scan = |x: Point| -> Result<()> {
        let recs = simulate_many(x, domain, coeffs, cfg, probe_paths, 0)?;
        let abs: Vec<f64> = recs.iter().map(|r| r.abs_l).collect();
        let n = abs.len() as f64;
        let mean = abs.iter().sum::<f64>() / n;
        if mean > beta {
            beta = mean;
            let var = abs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            beta_stderr = (var / n).sqrt();
        }
        Ok(())
    };
    scan(x0)?;
    for &x in probes {
        scan(x)?;
    }

    let khasminskii_bound = if beta < 1.0 {
        1.0 / (1.0 - beta)
    } else {
        f64::INFINITY
    };
    // One-sided check: beta is a lower estimate of the sup, so the bound
    // 1/(1-beta) it implies is itself conservative to exceed.
    let exp_abs: Vec<f64> = records.iter().map(|r| r.abs_l.exp()).collect();
    let mean_exp = exp_abs.iter().sum::<f64>() / exp_abs.len() as f64;
    let bound_holds = beta < 1.0 && mean_exp <= khasminskii_bound * 1.02;
    Ok(GaugeReport {
        gauge,
        beta,
        beta_stderr,
        khasminskii_bound,
        bound_holds,
    })
}

/// Check `E[|L|_tau^k] <= k! beta^k (1 + 3 rel-stderr)` for `k = 1..=max_k`
/// from simulated paths.
pub fn khasminskii_moment_check(records: &[PathRecord], beta: f64, max_k: u32) -> bool {
    assert!(max_k <= 6);
    let n = records.len() as f64;
    let mut factorial = 1.0;
    for k in 1..=max_k {
        factorial *= k as f64;
        let moments: Vec<f64> = records.iter().map(|r| r.abs_l.powi(k as i32)).collect();
        let mean = moments.iter().sum::<f64>() / n;
        let var = moments.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let rel_stderr = (var / n).sqrt() / mean.abs().max(1e-300);
        let bound = factorial * beta.powi(k as i32) * (1.0 + 3.0 * rel_stderr);
        if mean > bound {
            return false;
        }
    }
    true
}
