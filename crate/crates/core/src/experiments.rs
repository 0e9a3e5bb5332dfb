//! End-to-end pipelines shared by the command-line driver and the acceptance suite.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boundary_geometry::{
    build_ghosts, estimate_boundary, BoundaryData, GhostSet, NormalOptions, SamplingMode,
};
use crate::eig_solver::{dm_eigs, eigs_with_boundary_rows, gpdm_eigs, EigReport};
use crate::error::{invalid, GpdmError, Result};
use crate::gpdm::{
    build_extrapolation_with, build_gpdm, ray_leaders, ExtrapolationSystem, GpdmOperator,
    RANDOM_MERGE_FRACTION,
};
use crate::linalg::loglog_slope;
use crate::manifolds::Fixture;
use crate::operators::{
    assemble, assemble_augmented, DmMatrix, OperatorKind, OperatorSpec, ScalarField,
};
use crate::pde_solver::{
    discretize_bc, solve_dirichlet, solve_dm_baseline, solve_robin_neumann, BvpSpec, SolveReport,
};
use crate::pointcloud::{
    build_index, default_eps_grid, tune_bandwidth, BandwidthReport, PointCloud, TuningRule,
};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dm,
    Gpdm,
}

impl FromStr for Method {
    type Err = GpdmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dm" => Ok(Method::Dm),
            "gpdm" => Ok(Method::Gpdm),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsChoice {
    Auto,
    Fixed(f64),
}

impl FromStr for EpsChoice {
    type Err = GpdmError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(EpsChoice::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| invalid(format!("eps must be 'auto' or a number, got '{s}'")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid("eps must be positive"));
        }
        Ok(EpsChoice::Fixed(v))
    }
}

/// Auto-tuned bandwidth for a point set, using d/2 as the target slope when d is known.
pub fn tune_for(points: &PointCloud, k: usize) -> Result<BandwidthReport> {
    let index = build_index(points, k)?;
    let rule = points
        .intrinsic_dim()
        .map_or(TuningRule::MaxSlope, TuningRule::ClosestToHalfDim);
    tune_bandwidth(&index, &default_eps_grid(), rule)
}

fn resolve_eps(eps: EpsChoice, points: &PointCloud, k: usize) -> Result<f64> {
    match eps {
        EpsChoice::Fixed(v) => Ok(v),
        EpsChoice::Auto => Ok(tune_for(points, k)?.eps_star),
    }
}

/// Boundary estimate, ghosts and the augmented estimator for one fixture.
pub struct GpdmSetup {
    pub boundary: BoundaryData,
    pub ghosts: GhostSet,
    pub manifold: PointCloud,
    pub lh: DmMatrix,
    pub warnings: Vec<String>,
    /// Boundary points closer than this fraction of h to an earlier one follow its ghost ray.
    pub merge_fraction: f64,
}

pub fn prepare_gpdm(
    fixture: &Fixture,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<GpdmSetup> {
    prepare_gpdm_on(
        &fixture.cloud,
        fixture.mode,
        &fixture.operator,
        k,
        layers,
        eps,
    )
}

/// As [`prepare_gpdm`], for a bare cloud and operator.
pub fn prepare_gpdm_on(
    cloud: &PointCloud,
    mode: SamplingMode,
    operator: &OperatorKind,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<GpdmSetup> {
    let boundary = estimate_boundary(cloud, mode, &NormalOptions::default())?;
    let (ghosts, warnings) = build_ghosts(cloud, &boundary, layers)?;
    let augmented = ghosts.augmented_cloud(cloud)?;
    let eps = resolve_eps(eps, &augmented, k)?;
    let spec = OperatorSpec::new(operator.clone(), eps, k)?;
    let lh = assemble_augmented(cloud, &ghosts, &spec)?;
    let manifold = ghosts.manifold_cloud(cloud)?;
    Ok(GpdmSetup {
        boundary,
        ghosts,
        manifold,
        lh,
        warnings,
        merge_fraction: match mode {
            SamplingMode::WellSampled => 0.0,
            SamplingMode::Random => RANDOM_MERGE_FRACTION,
        },
    })
}

impl GpdmSetup {
    /// Extrapolation and affine operator for the boundary values of `f` and the optional shift.
    pub fn operator(
        &self,
        f: &dyn Fn(&[f64]) -> f64,
        shift: Option<&ScalarField>,
    ) -> Result<(ExtrapolationSystem, GpdmOperator)> {
        let at_boundary = |h: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            self.ghosts
                .boundary_ids()
                .iter()
                .map(|&b| h(self.manifold.point(b)))
                .collect()
        };
        let f_b = at_boundary(f);
        let a_b = match shift {
            Some(a) => at_boundary(&**a),
            None => vec![0.0; f_b.len()],
        };
        let leaders = ray_leaders(
            &self.ghosts,
            self.manifold.coords(),
            self.manifold.ambient_dim(),
            self.merge_fraction,
        );
        let system = build_extrapolation_with(&self.lh, &self.ghosts, &f_b, &leaders, &a_b)?;
        let op = build_gpdm(&self.lh, &self.ghosts, &system)?;
        Ok((system, op))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardErrorReport {
    pub method: Method,
    pub n: usize,
    pub eps: f64,
    pub k: usize,
    pub layers: usize,
    pub fe_inf: f64,
    /// |L-hat u - L u| per original sample.
    #[serde(skip)]
    pub pointwise: Vec<f64>,
    pub wall_time_s: f64,
}

/// Sup-norm of L-hat u - L u over the original samples.
pub fn forward_error(
    fixture: &Fixture,
    method: Method,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<ForwardErrorReport> {
    let start = Instant::now();
    let n = fixture.cloud.len();
    let (estimate, eps_used, layers) = match method {
        Method::Dm => {
            let eps = resolve_eps(eps, &fixture.cloud, k)?;
            let spec = OperatorSpec::new(fixture.operator.clone(), eps, k)?;
            let l = assemble(&fixture.cloud, n, &spec)?;
            (l.matrix.matvec(&fixture.truth_on(&fixture.cloud)), eps, 0)
        }
        Method::Gpdm => {
            let setup = prepare_gpdm(fixture, k, layers, eps)?;
            let (_, op) = setup.operator(&*fixture.truth_lu, None)?;
            (op.apply(&fixture.truth_on(&setup.manifold)), op.eps, layers)
        }
    };
    let truth = fixture.truth_lu_on(&fixture.cloud);
    let pointwise: Vec<f64> = (0..n).map(|i| (estimate[i] - truth[i]).abs()).collect();
    let fe_inf = pointwise.iter().copied().fold(0.0, f64::max);
    Ok(ForwardErrorReport {
        method,
        n,
        eps: eps_used,
        k,
        layers,
        fe_inf,
        pointwise,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Solves the fixture's boundary-value problem and records the inverse error on the original samples.
pub fn solve_fixture(
    fixture: &Fixture,
    method: Method,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<SolveReport> {
    let mut report = solve_bvp(
        &fixture.cloud,
        fixture.mode,
        &fixture.operator,
        &|eps| fixture.bvp(eps, k),
        method,
        k,
        layers,
        eps,
    )?;
    let truth = fixture.truth_on(&fixture.cloud);
    report.set_truth(&truth, fixture.cloud.len());
    Ok(report)
}

/// Solves the problem built by `make_spec(eps)` on `cloud`. For GPDM, `u_hat` also carries
/// the appended interior ghosts after the original samples.
#[allow(clippy::too_many_arguments)]
pub fn solve_bvp(
    cloud: &PointCloud,
    mode: SamplingMode,
    operator: &OperatorKind,
    make_spec: &dyn Fn(f64) -> Result<BvpSpec>,
    method: Method,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<SolveReport> {
    match method {
        Method::Dm => {
            let eps = resolve_eps(eps, cloud, k)?;
            let spec = make_spec(eps)?;
            let boundary = estimate_boundary(cloud, mode, &NormalOptions::default())?;
            solve_dm_baseline(&spec, cloud, &boundary)
        }
        Method::Gpdm => {
            let setup = prepare_gpdm_on(cloud, mode, operator, k, layers, eps)?;
            let spec = make_spec(setup.lh.eps)?;
            let (_, op) = setup.operator(&*spec.f, spec.a.as_ref())?;
            let bc = discretize_bc(&spec, &setup.manifold, &setup.ghosts)?;
            let mut report = if bc.is_dirichlet() {
                solve_dirichlet(&op, &spec, &setup.manifold, &bc, layers)?
            } else {
                solve_robin_neumann(&op, &spec, &setup.manifold, &bc, layers)?
            };
            report.warnings.splice(0..0, setup.warnings);
            Ok(report)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fe,
    Ie,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub eps: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub method: Method,
    pub metric: Metric,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log(value) against log(N).
    pub slope: f64,
}

/// Runs `metric` for each fixture produced by `make(N)` and fits the log-log rate in N.
pub fn convergence(
    sizes: &[usize],
    make: impl Fn(usize) -> Result<Fixture>,
    method: Method,
    metric: Metric,
    k: usize,
    layers: usize,
    eps: EpsChoice,
) -> Result<ConvergenceReport> {
    if sizes.len() < 2 {
        return Err(invalid("a convergence sweep needs at least two sizes"));
    }
    let rows: Result<Vec<ConvergenceRow>> = sizes
        .iter()
        .map(|&n| {
            let fixture = make(n)?;
            Ok(match metric {
                Metric::Fe => {
                    let r = forward_error(&fixture, method, k, layers, eps)?;
                    ConvergenceRow {
                        n: r.n,
                        eps: r.eps,
                        value: r.fe_inf,
                    }
                }
                Metric::Ie => {
                    let r = solve_fixture(&fixture, method, k, layers, eps)?;
                    ConvergenceRow {
                        n: r.n,
                        eps: r.eps_used,
                        value: r.ie_inf.unwrap_or(f64::NAN),
                    }
                }
            })
        })
        .collect();
    let rows = rows?;
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(ConvergenceReport {
        method,
        metric,
        slope: loglog_slope(&x, &y),
        rows,
    })
}

/// Cloud-only entry point: boundary, ghosts and estimator from files rather than a fixture.
pub fn sampling_mode_from_str(s: &str) -> Result<SamplingMode> {
    match s {
        "well" | "well-sampled" => Ok(SamplingMode::WellSampled),
        "random" => Ok(SamplingMode::Random),
        other => Err(invalid(format!("unknown sampling mode '{other}'"))),
    }
}

/// Eigenpairs of a fixture's operator under its homogeneous boundary condition.
pub fn fixture_eigs(
    fixture: &Fixture,
    method: Method,
    k: usize,
    layers: usize,
    eps: EpsChoice,
    count: usize,
) -> Result<EigReport> {
    let boundary = estimate_boundary(&fixture.cloud, fixture.mode, &NormalOptions::default())?;
    match method {
        Method::Dm => {
            let eps = resolve_eps(eps, &fixture.cloud, k)?;
            dm_eigs(&fixture.cloud, &boundary, &fixture.bvp(eps, k)?, count)
        }
        Method::Gpdm => {
            let (ghosts, _) = build_ghosts(&fixture.cloud, &boundary, layers)?;
            let eps = resolve_eps(eps, &ghosts.augmented_cloud(&fixture.cloud)?, k)?;
            gpdm_eigs(&fixture.cloud, &ghosts, &fixture.bvp(eps, k)?, count)
        }
    }
}

/// Legendre-type problem: at the ends the equation reduces to -2 x u' = lambda u, discretized by
/// the one-sided difference along the estimated normal.
pub fn legendre_eigs(
    fixture: &Fixture,
    method: Method,
    k: usize,
    layers: usize,
    eps: EpsChoice,
    count: usize,
) -> Result<EigReport> {
    let cloud = &fixture.cloud;
    let boundary = estimate_boundary(cloud, SamplingMode::WellSampled, &NormalOptions::default())?;
    let first_order_rows = |adjacent: &dyn Fn(usize) -> usize, n: usize| -> Result<CsrMatrix> {
        let rows = boundary
            .ids
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let coef = 2.0 * cloud.point(b)[0].abs() / boundary.spacing[j];
                vec![(b, -coef), (adjacent(j), coef)]
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    };
    match method {
        Method::Dm => {
            let eps = resolve_eps(eps, cloud, k)?;
            let spec = OperatorSpec::new(fixture.operator.clone(), eps, k)?;
            let l = assemble(cloud, cloud.len(), &spec)?;
            let adjacent = |j: usize| boundary.adjacent[j].expect("well-sampled neighbor");
            let rows = first_order_rows(&adjacent, cloud.len())?;
            eigs_with_boundary_rows(&l, None, &boundary.ids, &rows, count)
        }
        Method::Gpdm => {
            let (ghosts, _) = build_ghosts(cloud, &boundary, layers)?;
            let eps = resolve_eps(eps, &ghosts.augmented_cloud(cloud)?, k)?;
            let spec = OperatorSpec::new(fixture.operator.clone(), eps, k)?;
            let lh = assemble_augmented(cloud, &ghosts, &spec)?;
            let adjacent = |j: usize| ghosts.g0_id(j);
            let rows = first_order_rows(&adjacent, ghosts.n_manifold())?;
            eigs_with_boundary_rows(&lh, Some(&ghosts), &boundary.ids, &rows, count)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumComparison {
    pub computed: Vec<f64>,
    pub analytic: Vec<f64>,
    /// |lambda - lambda_true| / max(|lambda_true|, 1).
    pub relative_errors: Vec<f64>,
    /// Max-norm error of each eigenvector against the sign-matched, max-normalized truth.
    pub eigenfunction_errors: Vec<f64>,
}

pub fn compare_spectrum(
    report: &EigReport,
    fixture: &Fixture,
    points: &PointCloud,
) -> Result<SpectrumComparison> {
    let analytic = fixture
        .analytic_eigs
        .clone()
        .ok_or_else(|| invalid("fixture has no analytic spectrum"))?;
    let count = report.len().min(analytic.len());
    let relative_errors = (0..count)
        .map(|i| (report.lambdas[i] - analytic[i]).abs() / analytic[i].abs().max(1.0))
        .collect();
    let eigenfunction_errors = match &fixture.eigenfunction {
        Some(psi) => (0..count)
            .map(|i| {
                let truth: Vec<f64> = report
                    .unknown_ids
                    .iter()
                    .map(|&p| psi(i, points.point(p)))
                    .collect();
                let scale = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let err = |sign: f64| {
                    truth
                        .iter()
                        .zip(&report.psis[i])
                        .map(|(t, v)| (sign * t / scale - v).abs())
                        .fold(0.0, f64::max)
                };
                err(1.0).min(err(-1.0))
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(SpectrumComparison {
        computed: report.lambdas[..count].to_vec(),
        analytic: analytic[..count].to_vec(),
        relative_errors,
        eigenfunction_errors,
    })
}
