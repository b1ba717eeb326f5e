//! Declarative run configuration: strict TOML parsing into typed specs, the
//! registries that turn specs into runtime objects, and the built-in
//! instance catalog used by the verification commands.

use serde::{Deserialize, Serialize};

use crate::domain::{sdf_registry, Domain};
use crate::error::{Error, Result};
use crate::feynman_kac::BoundaryData;
use crate::geom::{Aabb, Ball, Point};
use crate::measures::{Density, GraphFn, QuadratureSpec, SignedMeasure, Support};
use crate::sde::{CafRule, SimConfig};
use crate::verification::LevelSpec;

// ---------------------------------------------------------------------------
// Spec blocks (serde mirrors of the runtime types)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Constant {
        value: f64,
    },
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
}

impl DensitySpec {
    pub fn build(&self) -> Density {
        match self {
            DensitySpec::Constant { value } => Density::Constant(*value),
            DensitySpec::GaussianBump {
                center,
                width,
                amplitude,
            } => Density::GaussianBump {
                center: *center,
                width: *width,
                amplitude: *amplitude,
            },
            DensitySpec::Polynomial {
                constant,
                linear,
                quadratic,
            } => Density::Polynomial {
                constant: *constant,
                linear: *linear,
                quadratic: *quadratic,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SupportSpec {
    Ball { center: Point, radius: f64 },
    Box { lo: Point, hi: Point },
}

impl SupportSpec {
    pub fn build(&self) -> Support {
        match self {
            SupportSpec::Ball { center, radius } => Support::Ball(Ball::new(*center, *radius)),
            SupportSpec::Box { lo, hi } => Support::Box(Aabb::new(*lo, *hi)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    SmoothDensity {
        density: DensitySpec,
        support: SupportSpec,
    },
    /// `a |x3 - (slope . (x1,x2) + offset)|^{gamma-1}` on a band.
    GraphSingular {
        slope: [f64; 2],
        offset: f64,
        gamma: f64,
        half_width: f64,
        amplitude: f64,
        lo: Point,
        hi: Point,
    },
    HyperplaneSurface {
        level: f64,
        weight: DensitySpec,
        lo: Point,
        hi: Point,
    },
    Combination {
        terms: Vec<MeasureTerm>,
    },
    /// Atoms are never in the admissible class for d >= 3; parsing one is a
    /// configuration error.
    PointMass { at: Point, mass: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureTerm {
    pub coeff: f64,
    pub measure: MeasureSpec,
}

impl MeasureSpec {
    pub fn build(&self) -> Result<SignedMeasure> {
        match self {
            MeasureSpec::SmoothDensity { density, support } => Ok(SignedMeasure::SmoothDensity {
                density: density.build(),
                support: support.build(),
            }),
            MeasureSpec::GraphSingular {
                slope,
                offset,
                gamma,
                half_width,
                amplitude,
                lo,
                hi,
            } => {
                if !(*gamma > 0.0 && *gamma < 0.5) {
                    return Err(Error::Config(format!(
                        "graph-singular exponent gamma must lie in (0, 1/2), got {gamma}"
                    )));
                }
                let graph = if *slope == [0.0; 2] && *offset == 0.0 {
                    GraphFn::Zero
                } else {
                    GraphFn::Plane {
                        slope: *slope,
                        offset: *offset,
                    }
                };
                Ok(SignedMeasure::GraphSingularDensity {
                    graph,
                    gamma: *gamma,
                    half_width: *half_width,
                    amplitude: *amplitude,
                    bbox: Aabb::new(*lo, *hi),
                })
            }
            MeasureSpec::HyperplaneSurface {
                level,
                weight,
                lo,
                hi,
            } => Ok(SignedMeasure::HyperplaneSurface {
                level: *level,
                weight: weight.build(),
                bbox: Aabb::new(*lo, *hi),
            }),
            MeasureSpec::Combination { terms } => {
                let mut out = Vec::with_capacity(terms.len());
                for t in terms {
                    out.push((t.coeff, t.measure.build()?));
                }
                Ok(SignedMeasure::LinearCombination(out))
            }
            MeasureSpec::PointMass { at, .. } => Err(Error::Config(format!(
                "point mass at {at:?} rejected: atoms are outside the admissible coefficient class in d = 3"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball { center: Point, radius: f64 },
    Box { lo: Point, hi: Point },
    Sdf { name: String, params: Vec<f64> },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Ball { center, radius } => Ok(Domain::ball(*center, *radius)),
            DomainSpec::Box { lo, hi } => Ok(Domain::cuboid(*lo, *hi)),
            DomainSpec::Sdf { name, params } => sdf_registry(name, params)
                .ok_or_else(|| Error::Config(format!("unknown sdf domain {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl BoundarySpec {
    pub fn build(&self) -> Result<BoundaryData> {
        BoundaryData::named(&self.name, &self.params)
            .ok_or_else(|| Error::Config(format!("unknown boundary data {:?}", self.name)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsSpec {
    pub mu1: Option<MeasureSpec>,
    pub mu2: Option<MeasureSpec>,
    pub mu3: Option<MeasureSpec>,
    pub nu: Option<MeasureSpec>,
    pub rho: Option<MeasureSpec>,
}

fn default_h() -> f64 {
    1e-3
}
fn default_coupling() -> f64 {
    1.0
}
fn default_t_max() -> f64 {
    200.0
}
fn default_bridge() -> bool {
    true
}
fn default_n_paths() -> u64 {
    100_000
}
fn default_caf_rule() -> CafRule {
    CafRule::Midpoint
}
fn default_substeps() -> u32 {
    1
}

/// Simulation block; the seed is mandatory so every run is reproducible from
/// its config alone.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_h")]
    pub h: f64,
    pub level: Option<u32>,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_bridge")]
    pub bridge: bool,
    #[serde(default = "default_caf_rule")]
    pub caf_rule: CafRule,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    #[serde(default)]
    pub cache_fields: bool,
}

impl SimSpec {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            h: self.h,
            level: self.level,
            coupling: self.coupling,
            t_max: self.t_max,
            bridge: self.bridge,
            seed: self.seed,
            caf_rule: self.caf_rule,
            substeps: self.substeps,
            cache_fields: self.cache_fields,
            cache_pitch: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KatoSpec {
    pub alpha: f64,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    #[serde(default = "default_probe_per_axis")]
    pub probe_per_axis: usize,
    #[serde(default = "default_probe_paths")]
    pub probe_paths: u64,
}

fn default_probe_per_axis() -> usize {
    7
}
fn default_probe_paths() -> u64 {
    2_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Contraction factors across radii, then a Neumann-series solve at the
    /// largest contracting radius.
    Contraction {
        r_list: Vec<f64>,
        #[serde(default = "default_oracle_tol")]
        tol: f64,
        #[serde(default = "default_oracle_iters")]
        max_iter: usize,
    },
    /// Finite-difference reference on the (box) domain with smooth stand-ins
    /// for the coefficients.
    Fd {
        grid_n: usize,
    },
}

fn default_oracle_tol() -> f64 {
    1e-4
}
fn default_oracle_iters() -> usize {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub levels: Vec<LevelStage>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LevelStage {
    pub h: f64,
    pub level: u32,
    pub n_paths: u64,
}

impl LevelStage {
    pub fn to_level_spec(self) -> LevelSpec {
        LevelSpec {
            h: self.h,
            level: self.level,
            n_paths: self.n_paths,
        }
    }
}

// ---------------------------------------------------------------------------
// Top-level config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in instance name; explicit blocks below override its parts.
    pub instance: Option<String>,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub coefficients: CoefficientsSpec,
    pub boundary: Option<BoundarySpec>,
    pub sim: SimSpec,
    /// Probe points for `solve`.
    #[serde(default)]
    pub probes: Vec<Point>,
    pub kato: Option<KatoSpec>,
    pub gauge: Option<GaugeSpec>,
    pub oracle: Option<OracleSpec>,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Materialize the runtime problem: built-in base (if named) overlaid
    /// with the explicit blocks.
    pub fn resolve(&self) -> Result<Instance> {
        let mut base = match &self.instance {
            Some(name) => builtin_instance(name)
                .ok_or_else(|| Error::Config(format!("unknown built-in instance {name:?}")))?,
            None => Instance::empty()?,
        };
        if let Some(d) = &self.domain {
            base.domain = d.build()?;
        }
        let c = &self.coefficients;
        for (slot, spec) in base
            .mu
            .iter_mut()
            .zip([&c.mu1, &c.mu2, &c.mu3])
        {
            if let Some(spec) = spec {
                *slot = Some(spec.build()?);
            }
        }
        if let Some(spec) = &c.nu {
            base.nu = Some(spec.build()?);
        }
        if let Some(spec) = &c.rho {
            base.rho = Some(spec.build()?);
        }
        if let Some(bspec) = &self.boundary {
            base.phi = bspec.build()?;
        }
        Ok(base)
    }
}

/// Fully materialized problem statement.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub domain: Domain,
    pub mu: [Option<SignedMeasure>; 3],
    pub nu: Option<SignedMeasure>,
    pub rho: Option<SignedMeasure>,
    pub phi: BoundaryData,
}

impl Instance {
    fn empty() -> Result<Self> {
        Ok(Self {
            name: "custom".into(),
            domain: Domain::ball([0.0; 3], 1.0),
            mu: [None, None, None],
            nu: None,
            rho: None,
            phi: BoundaryData::named("zero", &[]).unwrap(),
        })
    }
}

fn unit_ball_constant(c: f64) -> SignedMeasure {
    SignedMeasure::SmoothDensity {
        density: Density::Constant(c),
        support: Support::Ball(Ball::new([0.0; 3], 1.0)),
    }
}

/// Built-in instance catalog, so the verification commands are config-only.
///
/// - `harmonic-ball`: unit ball, phi = x1, no coefficients.
/// - `poisson-ball`: unit ball, rho = dx, phi = 0.
/// - `drift-exp`: unit ball, mu = (1/2, 0, 0) dx, phi = exp(-x1).
/// - `killing-ball`: unit ball, nu = -dx, phi = 1.
/// - `singular-graph-drift`: ball of radius 1/2, mu3 a band density
///   `|x3|^{gamma-1}` with gamma = 0.7, phi = x3.
pub fn builtin_instance(name: &str) -> Option<Instance> {
    let inst = match name {
        "harmonic-ball" => Instance {
            name: name.into(),
            domain: Domain::ball([0.0; 3], 1.0),
            mu: [None, None, None],
            nu: None,
            rho: None,
            phi: BoundaryData::named("coordinate", &[0.0]).unwrap(),
        },
        "poisson-ball" => Instance {
            name: name.into(),
            domain: Domain::ball([0.0; 3], 1.0),
            mu: [None, None, None],
            nu: None,
            rho: Some(unit_ball_constant(1.0)),
            phi: BoundaryData::named("zero", &[]).unwrap(),
        },
        "drift-exp" => Instance {
            name: name.into(),
            domain: Domain::ball([0.0; 3], 1.0),
            mu: [Some(unit_ball_constant(0.5)), None, None],
            nu: None,
            rho: None,
            phi: BoundaryData::named("exp-linear", &[-1.0, 0.0, 0.0]).unwrap(),
        },
        "killing-ball" => Instance {
            name: name.into(),
            domain: Domain::ball([0.0; 3], 1.0),
            mu: [None, None, None],
            nu: Some(unit_ball_constant(-1.0)),
            rho: None,
            phi: BoundaryData::named("one", &[]).unwrap(),
        },
        "singular-graph-drift" => Instance {
            name: name.into(),
            domain: Domain::ball([0.0; 3], 0.5),
            mu: [
                None,
                None,
                Some(SignedMeasure::GraphSingularDensity {
                    graph: GraphFn::Zero,
                    gamma: 0.7,
                    half_width: 0.3,
                    amplitude: 0.5,
                    bbox: Aabb::new([-0.5; 3], [0.5; 3]),
                }),
            ],
            nu: None,
            rho: None,
            phi: BoundaryData::named("coordinate", &[2.0]).unwrap(),
        },
        _ => return None,
    };
    Some(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[sim]
seed = 42
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.sim.seed, 42);
        assert_eq!(cfg.sim.h, 1e-3);
        assert!(cfg.sim.bridge);
        assert_eq!(cfg.sim.n_paths, 100_000);
        let inst = cfg.resolve().unwrap();
        assert_eq!(inst.name, "custom");
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_toml_str("[sim]\nh = 0.001\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[sim]\nseed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::from_toml_str("[sim]\nseed = 1\n\n[typo]\nx = 1\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
instance = "poisson-ball"
probes = [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]]

[sim]
seed = 7
h = 0.002
n_paths = 1000

[kato]
alpha = 1.0
radii = [0.5, 0.25, 0.125, 0.0625]
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let round = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, round);
    }

    #[test]
    fn point_mass_rejected_at_build() {
        let text = r#"
[sim]
seed = 1

[coefficients.nu]
kind = "point-mass"
at = [0.0, 0.0, 0.0]
mass = 1.0
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn builtins_resolve() {
        for name in [
            "harmonic-ball",
            "poisson-ball",
            "drift-exp",
            "killing-ball",
            "singular-graph-drift",
        ] {
            let inst = builtin_instance(name).unwrap();
            assert_eq!(inst.name, name);
        }
        assert!(builtin_instance("missing").is_none());

        let inst = builtin_instance("drift-exp").unwrap();
        assert!(inst.mu[0].is_some() && inst.mu[1].is_none());
        assert!((inst.phi.eval([1.0, 0.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn overlay_replaces_builtin_parts() {
        let text = r#"
instance = "harmonic-ball"

[domain]
kind = "ball"
center = [0.0, 0.0, 0.0]
radius = 0.5

[boundary]
name = "one"

[sim]
seed = 3
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        let inst = cfg.resolve().unwrap();
        assert!((inst.domain.diameter() - 1.0).abs() < 1e-12);
        assert_eq!(inst.phi.eval([0.5, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn measure_specs_build() {
        let smooth = MeasureSpec::SmoothDensity {
            density: DensitySpec::Constant { value: 2.0 },
            support: SupportSpec::Ball {
                center: [0.0; 3],
                radius: 1.0,
            },
        };
        assert!(smooth.build().is_ok());

        let bad_gamma = MeasureSpec::GraphSingular {
            slope: [0.0; 2],
            offset: 0.0,
            gamma: 0.8,
            half_width: 0.3,
            amplitude: 1.0,
            lo: [-1.0; 3],
            hi: [1.0; 3],
        };
        assert!(bad_gamma.build().is_err());
    }
}
