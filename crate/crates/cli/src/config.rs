use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use gpdm_core::boundary_geometry::SamplingMode;
use gpdm_core::experiments::{sampling_mode_from_str, EpsChoice, Method};
use gpdm_core::manifolds::{
    legendre_problem, semi_circle, semi_ellipse_with, semi_torus_l2_problem, semi_torus_l3_problem,
    CircleBc, EllipseTest, Fixture,
};
use gpdm_core::operators::{OperatorKind, OperatorSpec, OperatorTag};
use gpdm_core::pde_solver::BvpSpec;
use gpdm_core::pointcloud::{load_cloud, PointCloud};
use gpdm_core::GpdmError;
use serde::{Deserialize, Serialize};

/// Semi-axis of the semi-ellipse fixture along x.
pub const ELLIPSE_AXIS: f64 = 3.0;

/// Parameters shared by every subcommand. Each flag overrides the matching key of `--config`.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Cloud CSV, one point per row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    /// Boundary JSON: {"boundary_ids": [...], "d": 2}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<PathBuf>,
    /// semi-ellipse, semi-circle, legendre, semi-torus-l3 or semi-torus-l2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    /// Fixture size N (a perfect square for the semi-torus).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// dm or gpdm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// l1, l2 or l3; checked against the fixture.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    /// Bandwidth, or "auto".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ghost_layers: Option<usize>,
    /// well or random.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// dirichlet, neumann, robin or mixed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<String>,
    /// Comma-separated list of N.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Number of eigenpairs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// fe or ie, for convergence sweeps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    /// Bandwidth grid as log2 bounds and steps per octave: LO,HI,STEPS.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    /// Constant data for file-based solves: f, g, beta1, beta2 and the shift a.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<Constants>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default)]
    pub f: f64,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default = "one")]
    pub beta2: f64,
    #[serde(default)]
    pub a: f64,
}

fn one() -> f64 {
    1.0
}

fn usage(msg: impl Into<String>) -> GpdmError {
    GpdmError::InvalidArgument(msg.into())
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),+) => {
        $(if $over.$field.is_some() { $base.$field = $over.$field.clone(); })+
    };
}

impl ExperimentConfig {
    /// Reads `path` (if any) and applies the flags on top.
    pub fn resolve(flags: &ExperimentConfig, path: Option<&Path>) -> Result<Self, GpdmError> {
        let mut base = match path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| GpdmError::Parse(format!("{}: {e}", p.display())))?,
            None => ExperimentConfig::default(),
        };
        overlay!(
            base,
            flags,
            cloud,
            boundary,
            fixture,
            n,
            method,
            operator,
            eps,
            k,
            ghost_layers,
            mode,
            bc,
            sweep,
            seed,
            out,
            modes,
            metric,
            grid,
            constants
        );
        Ok(base)
    }

    pub fn method(&self) -> Result<Method, GpdmError> {
        self.method.as_deref().unwrap_or("gpdm").parse()
    }

    pub fn eps(&self) -> Result<EpsChoice, GpdmError> {
        self.eps.as_deref().unwrap_or("auto").parse()
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(50)
    }

    pub fn layers(&self) -> Result<usize, GpdmError> {
        let k = self.ghost_layers.unwrap_or(6);
        if !(1..=gpdm_core::boundary_geometry::MAX_GHOST_LAYERS).contains(&k) {
            return Err(usage(format!("--ghost-layers must be in 1..=10, got {k}")));
        }
        Ok(k)
    }

    pub fn mode(&self) -> Result<SamplingMode, GpdmError> {
        sampling_mode_from_str(self.mode.as_deref().unwrap_or("well"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn modes(&self) -> usize {
        self.modes.unwrap_or(10)
    }

    pub fn require_n(&self) -> Result<usize, GpdmError> {
        self.n
            .ok_or_else(|| usage("--n is required with --fixture"))
    }

    pub fn fixture_name(&self) -> Result<&str, GpdmError> {
        self.fixture
            .as_deref()
            .ok_or_else(|| usage("--fixture is required for this command"))
    }

    /// Builds the named fixture at size `n`.
    pub fn fixture_at(&self, n: usize) -> Result<Fixture, GpdmError> {
        let name = self.fixture_name()?;
        let mode = self.mode()?;
        let bc = self.bc.as_deref();
        if mode == SamplingMode::Random && !name.starts_with("semi-torus") {
            return Err(usage(format!("{name} only supports --mode well")));
        }
        let fixture = match name {
            "semi-ellipse" => {
                let test = match bc.unwrap_or("robin") {
                    "robin" => EllipseTest::Robin,
                    "dirichlet" => EllipseTest::Dirichlet,
                    "neumann" => EllipseTest::Neumann,
                    other => return Err(usage(format!("semi-ellipse has no '{other}' test"))),
                };
                semi_ellipse_with(n, ELLIPSE_AXIS, test)?
            }
            "semi-circle" => {
                let bc = match bc.unwrap_or("dirichlet") {
                    "dirichlet" => CircleBc::Dirichlet,
                    "robin" => CircleBc::Robin,
                    other => return Err(usage(format!("semi-circle has no '{other}' condition"))),
                };
                semi_circle(n, bc, self.modes().max(1))?
            }
            "legendre" => legendre_problem(n, self.modes().max(1))?,
            "semi-torus-l3" | "semi-torus-l2" => {
                if !matches!(bc, None | Some("mixed")) {
                    return Err(usage("the semi-torus problems use --bc mixed"));
                }
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(usage(format!(
                        "semi-torus N must be a perfect square, got {n}"
                    )));
                }
                if name == "semi-torus-l3" {
                    semi_torus_l3_problem(side, side, mode, self.seed())?
                } else {
                    semi_torus_l2_problem(side, side, mode, self.seed())?
                }
            }
            other => return Err(usage(format!("unknown fixture '{other}'"))),
        };
        if let Some(op) = &self.operator {
            let tag = parse_operator(op)?;
            if tag != fixture.operator.tag() {
                return Err(usage(format!(
                    "fixture {name} uses {:?}, not {op}",
                    fixture.operator.tag()
                )));
            }
        }
        Ok(fixture)
    }

    pub fn has_files(&self) -> bool {
        self.cloud.is_some() || self.boundary.is_some()
    }

    pub fn load_files(&self) -> Result<PointCloud, GpdmError> {
        match (&self.cloud, &self.boundary) {
            (Some(c), Some(b)) => load_cloud(c, b),
            _ => Err(usage("--cloud and --boundary must be given together")),
        }
    }

    /// Constant-coefficient L1 problem on file input.
    pub fn file_problem(&self) -> Result<impl Fn(f64) -> Result<BvpSpec, GpdmError>, GpdmError> {
        if let Some(op) = &self.operator {
            if parse_operator(op)? != OperatorTag::L1 {
                return Err(usage("file-based solves support --operator l1 only"));
            }
        }
        let c = self
            .constants
            .clone()
            .ok_or_else(|| usage("file-based solves need a \"constants\" block in --config"))?;
        let (b1, b2) = match self.bc.as_deref() {
            Some("dirichlet") => (0.0, 1.0),
            Some("neumann") => (1.0, 0.0),
            Some("robin") | None => (c.beta1, c.beta2),
            Some(other) => return Err(usage(format!("--bc {other} is not available for files"))),
        };
        let k = self.k();
        Ok(move |eps: f64| {
            Ok(BvpSpec {
                operator: OperatorSpec::new(OperatorKind::L1, eps, k)?,
                f: Arc::new(move |_: &[f64]| c.f),
                g: Arc::new(move |_: &[f64]| c.g),
                beta1: Arc::new(move |_: &[f64]| b1),
                beta2: Arc::new(move |_: &[f64]| b2),
                a: (c.a != 0.0).then(|| {
                    let a = c.a;
                    Arc::new(move |_: &[f64]| a) as gpdm_core::operators::ScalarField
                }),
            })
        })
    }
}

fn parse_operator(s: &str) -> Result<OperatorTag, GpdmError> {
    match s {
        "l1" => Ok(OperatorTag::L1),
        "l2" => Ok(OperatorTag::L2),
        "l3" => Ok(OperatorTag::L3),
        other => Err(usage(format!("unknown operator '{other}'"))),
    }
}
