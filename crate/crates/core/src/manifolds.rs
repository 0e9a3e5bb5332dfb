//! Analytic fixtures: samplers, coefficient fields, manufactured solutions and reference spectra.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary_geometry::SamplingMode;
use crate::error::{invalid, Result};
use crate::operators::{MatrixField, OperatorKind, OperatorSpec, ScalarField, VectorField};
use crate::pde_solver::BvpSpec;
use crate::pointcloud::PointCloud;

/// Eigenfunction number `idx` (position in `analytic_eigs`) evaluated at a point.
pub type Eigenfunction = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Fixture {
    pub name: String,
    pub cloud: PointCloud,
    pub mode: SamplingMode,
    pub seed: Option<u64>,
    pub operator: OperatorKind,
    pub truth_u: ScalarField,
    /// Analytic L u (no shift).
    pub truth_lu: ScalarField,
    pub beta1: ScalarField,
    pub beta2: ScalarField,
    pub g: ScalarField,
    pub shift: Option<ScalarField>,
    pub normal: Option<VectorField>,
    pub analytic_eigs: Option<Vec<f64>>,
    pub eigenfunction: Option<Eigenfunction>,
}

impl Fixture {
    /// Boundary-value problem (-a + L) u = f with f built from the manufactured solution.
    pub fn bvp(&self, eps: f64, k: usize) -> Result<BvpSpec> {
        let (u, lu) = (self.truth_u.clone(), self.truth_lu.clone());
        let f: ScalarField = match self.shift.clone() {
            Some(a) => Arc::new(move |x: &[f64]| lu(x) - a(x) * u(x)),
            None => lu,
        };
        Ok(BvpSpec {
            operator: OperatorSpec::new(self.operator.clone(), eps, k)?,
            f,
            g: self.g.clone(),
            beta1: self.beta1.clone(),
            beta2: self.beta2.clone(),
            a: self.shift.clone(),
        })
    }

    pub fn truth_on(&self, cloud: &PointCloud) -> Vec<f64> {
        (0..cloud.len())
            .map(|i| (self.truth_u)(cloud.point(i)))
            .collect()
    }

    pub fn truth_lu_on(&self, cloud: &PointCloud) -> Vec<f64> {
        (0..cloud.len())
            .map(|i| (self.truth_lu)(cloud.point(i)))
            .collect()
    }
}

fn constant(v: f64) -> ScalarField {
    Arc::new(move |_| v)
}

fn check_1d_size(n: usize) -> Result<()> {
    if n < 5 {
        return Err(invalid(format!(
            "a 1D grid needs at least 5 points, got {n}"
        )));
    }
    Ok(())
}

/// Angle of a point near the ellipse (cos t, a sin t), continued past both ends of [0, pi].
pub fn ellipse_angle(x: &[f64], a: f64) -> f64 {
    let t = (x[1] / a).atan2(x[0]);
    if t < -std::f64::consts::FRAC_PI_2 {
        t + TAU
    } else {
        t
    }
}

/// Upper half-ellipse samples at equal parameter spacing, interior first, ends last.
fn ellipse_cloud(n: usize, a: f64) -> Result<PointCloud> {
    check_1d_size(n)?;
    let step = PI / (n - 1) as f64;
    let order: Vec<usize> = (1..n - 1).chain([0, n - 1]).collect();
    let rows: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| vec![(i as f64 * step).cos(), a * (i as f64 * step).sin()])
        .collect();
    PointCloud::from_rows(&rows, Some(1), vec![n - 2, n - 1])
}

/// 1D weighted Laplacian on the ellipse: [kappa' u' + kappa u''] / g - kappa u' g' / (2 g^2),
/// with g the metric sin^2 t + a^2 cos^2 t.
pub fn ellipse_weighted_laplacian(
    a: f64,
    t: f64,
    kappa: f64,
    dkappa: f64,
    du: f64,
    d2u: f64,
) -> f64 {
    let g = t.sin().powi(2) + a * a * t.cos().powi(2);
    let dg = 2.0 * (1.0 - a * a) * t.sin() * t.cos();
    (dkappa * du + kappa * d2u) / g - kappa * du * dg / (2.0 * g * g)
}

/// Test functions on the semi-ellipse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllipseTest {
    /// cos(3t/2 - pi/4) with beta1 = 1, beta2 = 3/(2a), g = 0.
    Robin,
    /// sin t with homogeneous Dirichlet data.
    Dirichlet,
    /// cos 2t with homogeneous Neumann data and shift a = 1.
    Neumann,
}

pub fn semi_ellipse(n: usize, a: f64) -> Result<Fixture> {
    semi_ellipse_with(n, a, EllipseTest::Robin)
}

pub fn semi_ellipse_with(n: usize, a: f64, test: EllipseTest) -> Result<Fixture> {
    if !(a > 0.0) {
        return Err(invalid("ellipse axis must be positive"));
    }
    let cloud = ellipse_cloud(n, a)?;
    type Jet = fn(f64) -> (f64, f64, f64);
    let jet: Jet = match test {
        EllipseTest::Robin => |t| {
            let s = 1.5 * t - FRAC_PI_4;
            (s.cos(), -1.5 * s.sin(), -2.25 * s.cos())
        },
        EllipseTest::Dirichlet => |t| (t.sin(), t.cos(), -t.sin()),
        EllipseTest::Neumann => |t| {
            (
                (2.0 * t).cos(),
                -2.0 * (2.0 * t).sin(),
                -4.0 * (2.0 * t).cos(),
            )
        },
    };
    let kappa: ScalarField = Arc::new(move |x: &[f64]| 1.1 + x[1] / a);
    let truth_u: ScalarField = Arc::new(move |x: &[f64]| jet(ellipse_angle(x, a)).0);
    let truth_lu: ScalarField = Arc::new(move |x: &[f64]| {
        let t = ellipse_angle(x, a);
        let (_, du, d2u) = jet(t);
        ellipse_weighted_laplacian(a, t, 1.1 + t.sin(), t.cos(), du, d2u)
    });
    let (beta1, beta2, shift) = match test {
        EllipseTest::Robin => (constant(1.0), constant(1.5 / a), None),
        EllipseTest::Dirichlet => (constant(0.0), constant(1.0), None),
        EllipseTest::Neumann => (constant(1.0), constant(0.0), Some(constant(1.0))),
    };
    let normal: VectorField = Arc::new(|_: &[f64]| vec![0.0, -1.0]);
    Ok(Fixture {
        name: format!("semi-ellipse-{test:?}").to_lowercase(),
        cloud,
        mode: SamplingMode::WellSampled,
        seed: None,
        operator: OperatorKind::weighted(kappa),
        truth_u,
        truth_lu,
        beta1,
        beta2,
        g: constant(0.0),
        shift,
        normal: Some(normal),
        analytic_eigs: None,
        eigenfunction: None,
    })
}

/// Boundary conditions for the semicircle eigenproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircleBc {
    Dirichlet,
    /// (-d/dnu + 1) u = 0 at t = 0, (d/dnu + 1) u = 0 at t = pi.
    Robin,
}

/// Unit upper semicircle, Laplace-Beltrami operator.
pub fn semi_circle(n: usize, bc: CircleBc, modes: usize) -> Result<Fixture> {
    let cloud = ellipse_cloud(n, 1.0)?;
    let angle = |x: &[f64]| ellipse_angle(x, 1.0);
    let (truth_u, truth_lu, beta1, eigs, eigenfunction): (
        ScalarField,
        ScalarField,
        ScalarField,
        Vec<f64>,
        Eigenfunction,
    ) = match bc {
        CircleBc::Dirichlet => (
            Arc::new(move |x| angle(x).sin()),
            Arc::new(move |x| -angle(x).sin()),
            constant(0.0),
            (1..=modes).map(|k| -((k * k) as f64)).collect(),
            Arc::new(move |i, x| ((i + 1) as f64 * angle(x)).sin()),
        ),
        CircleBc::Robin => (
            Arc::new(move |x| (-angle(x)).exp()),
            Arc::new(move |x| (-angle(x)).exp()),
            Arc::new(|x: &[f64]| if x[0] > 0.0 { -1.0 } else { 1.0 }),
            (1..=modes)
                .map(|k| {
                    if k == 1 {
                        1.0
                    } else {
                        -(((k - 1) * (k - 1)) as f64)
                    }
                })
                .collect(),
            Arc::new(move |i, x| {
                let t = angle(x);
                if i == 0 {
                    (-t).exp()
                } else {
                    let m = i as f64;
                    m * (m * t).cos() - (m * t).sin()
                }
            }),
        ),
    };
    Ok(Fixture {
        name: format!("semi-circle-{bc:?}").to_lowercase(),
        cloud,
        mode: SamplingMode::WellSampled,
        seed: None,
        operator: OperatorKind::L1,
        truth_u,
        truth_lu,
        beta1,
        beta2: constant(1.0),
        g: constant(0.0),
        shift: None,
        normal: Some(Arc::new(|_: &[f64]| vec![0.0, -1.0])),
        analytic_eigs: Some(eigs),
        eigenfunction: Some(eigenfunction),
    })
}

/// Legendre polynomial P_k by the three-term recurrence.
pub fn legendre_poly(k: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return p0;
    }
    for j in 1..k {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Coefficient 1 - x^2 on [-1, 1], continued past the ends by even reflection so ghost
/// points see a positive weight.
pub fn legendre_kappa(x: f64) -> f64 {
    let y = if x > 1.0 {
        2.0 - x
    } else if x < -1.0 {
        -2.0 - x
    } else {
        x
    };
    1.0 - y * y
}

/// div((1 - x^2) u') on equispaced [-1, 1]; the ends carry the reduced first-order operator.
pub fn legendre_problem(n: usize, modes: usize) -> Result<Fixture> {
    check_1d_size(n)?;
    let step = 2.0 / (n - 1) as f64;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![-1.0 + i as f64 * step]).collect();
    let cloud = PointCloud::from_rows(&rows, Some(1), vec![0, n - 1])?;
    let kappa: ScalarField = Arc::new(|x: &[f64]| legendre_kappa(x[0]));
    Ok(Fixture {
        name: "legendre".into(),
        cloud,
        mode: SamplingMode::WellSampled,
        seed: None,
        operator: OperatorKind::L2 {
            kappa,
            allow_degenerate: true,
        },
        truth_u: Arc::new(|x: &[f64]| x[0]),
        truth_lu: Arc::new(|x: &[f64]| -2.0 * x[0]),
        beta1: constant(1.0),
        beta2: constant(0.0),
        g: constant(0.0),
        shift: None,
        normal: Some(Arc::new(|x: &[f64]| vec![x[0].signum()])),
        analytic_eigs: Some((0..modes).map(|k| -((k * (k + 1)) as f64)).collect()),
        eigenfunction: Some(Arc::new(|k, x| legendre_poly(k, x[0]))),
    })
}

/// Tube radius 1 around a circle of radius `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Torus {
    pub a: f64,
}

impl Torus {
    pub fn embed(&self, theta: f64, phi: f64) -> [f64; 3] {
        let r = self.a + theta.cos();
        [r * phi.cos(), r * phi.sin(), theta.sin()]
    }

    /// Angles of a point near the half-torus; phi is continued past both ends of [0, pi].
    pub fn angles(&self, x: &[f64]) -> (f64, f64) {
        let rho = x[0].hypot(x[1]);
        let theta = x[2].atan2(rho - self.a);
        let mut phi = x[1].atan2(x[0]);
        if phi < -std::f64::consts::FRAC_PI_2 {
            phi += TAU;
        }
        (theta, phi)
    }

    /// Columns d/dtheta and d/dphi of the embedding Jacobian, from ambient coordinates:
    /// cos(theta) = rho - a, sin(theta) = x3, cos(phi) = x1/rho, sin(phi) = x2/rho.
    pub fn jacobian(&self, x: &[f64]) -> [[f64; 3]; 2] {
        let rho = x[0].hypot(x[1]);
        let (ct, st) = (rho - self.a, x[2]);
        let (cp, sp) = (x[0] / rho, x[1] / rho);
        [[-st * cp, -st * sp, ct], [-rho * sp, rho * cp, 0.0]]
    }

    /// Christoffel symbols Gamma^theta_{phi phi} and Gamma^phi_{theta phi}.
    pub fn christoffel(&self, theta: f64) -> (f64, f64) {
        let w = self.a + theta.cos();
        (w * theta.sin(), -theta.sin() / w)
    }
}

/// Samples of the half-torus phi in [0, pi]; boundary circles phi = 0 and phi = pi.
/// Well-sampled: an n_theta x n_phi grid. Random: n_theta * n_phi points, uniform in
/// (theta, phi), with about 2 sqrt(N) of them placed uniformly on the two boundary circles.
pub fn semi_torus_cloud(
    n_theta: usize,
    n_phi: usize,
    a: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<PointCloud> {
    if n_theta < 4 || n_phi < 3 {
        return Err(invalid(format!("torus grid {n_theta} x {n_phi} too small")));
    }
    let torus = Torus { a };
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    match mode {
        SamplingMode::WellSampled => {
            let dt = TAU / n_theta as f64;
            let dp = PI / (n_phi - 1) as f64;
            for j in 0..n_phi {
                for i in 0..n_theta {
                    let p = torus.embed(i as f64 * dt, j as f64 * dp).to_vec();
                    if j == 0 || j == n_phi - 1 {
                        boundary.push(p);
                    } else {
                        interior.push(p);
                    }
                }
            }
        }
        SamplingMode::Random => {
            let n = n_theta * n_phi;
            let per_circle = (n as f64).sqrt().round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n - 2 * per_circle {
                let theta = rng.random::<f64>() * TAU;
                let phi = loop {
                    let phi = PI * rng.random::<f64>();
                    if phi > 0.0 {
                        break phi;
                    }
                };
                interior.push(torus.embed(theta, phi).to_vec());
            }
            for phi in [0.0, PI] {
                for _ in 0..per_circle {
                    boundary.push(torus.embed(rng.random::<f64>() * TAU, phi).to_vec());
                }
            }
        }
    }
    let ni = interior.len();
    let ids = (ni..ni + boundary.len()).collect();
    interior.extend(boundary);
    PointCloud::from_rows(&interior, Some(2), ids)
}

#[allow(clippy::too_many_arguments)]
fn torus_fixture_common(
    name: &str,
    cloud: PointCloud,
    mode: SamplingMode,
    seed: Option<u64>,
    operator: OperatorKind,
    u: ScalarField,
    lu: ScalarField,
    robin_g: ScalarField,
) -> Fixture {
    let u_dirichlet = u.clone();
    Fixture {
        name: name.into(),
        cloud,
        mode,
        seed,
        operator,
        truth_u: u,
        truth_lu: lu,
        // Dirichlet on the phi = 0 circle (x1 > 0), Robin with beta1 = beta2 = 1 on phi = pi.
        beta1: Arc::new(|x: &[f64]| if x[0] > 0.0 { 0.0 } else { 1.0 }),
        beta2: constant(1.0),
        g: Arc::new(move |x: &[f64]| {
            if x[0] > 0.0 {
                u_dirichlet(x)
            } else {
                robin_g(x)
            }
        }),
        shift: None,
        normal: Some(Arc::new(|_: &[f64]| vec![0.0, -1.0, 0.0])),
        analytic_eigs: None,
        eigenfunction: None,
    }
}

/// (sin 2phi - 2 cos 2phi / (2 + cos theta)) cos theta and its derivatives
/// (u, u_t, u_p, u_tt, u_tp, u_pp).
pub fn torus_l3_solution(theta: f64, phi: f64) -> [f64; 6] {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = (2.0 * phi).sin_cos();
    let w = 2.0 + ct;
    let p = ct / w;
    let dp = -2.0 * st / (w * w);
    let d2p = -2.0 * ct / (w * w) - 4.0 * st * st / (w * w * w);
    [
        sa * ct - 2.0 * ca * p,
        -sa * st - 2.0 * ca * dp,
        2.0 * ca * ct + 4.0 * sa * p,
        -sa * ct - 2.0 * ca * d2p,
        -2.0 * ca * st + 4.0 * sa * dp,
        -4.0 * sa * ct + 8.0 * ca * p,
    ]
}

/// Intrinsic drift (2 + sin theta, 2 + cos theta) and diffusion [[3 + cos phi, 1/10], [1/10, 2]].
pub fn torus_l3_coefficients(theta: f64, phi: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    (
        [2.0 + theta.sin(), 2.0 + theta.cos()],
        [[3.0 + phi.cos(), 0.1], [0.1, 2.0]],
    )
}

/// b . grad u + (1/2) c^{ij} (d_ij u - Gamma^k_ij d_k u) on the torus with a = 2.
pub fn torus_l3_action(theta: f64, phi: f64, jet: &[f64; 6]) -> f64 {
    let torus = Torus { a: 2.0 };
    let (b, c) = torus_l3_coefficients(theta, phi);
    let (g1_22, g2_12) = torus.christoffel(theta);
    let [_, ut, up, utt, utp, upp] = *jet;
    b[0] * ut
        + b[1] * up
        + 0.5 * c[0][0] * utt
        + c[0][1] * (utp - g2_12 * up)
        + 0.5 * c[1][1] * (upp - g1_22 * ut)
}

pub fn semi_torus_l3_problem(
    n_theta: usize,
    n_phi: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Fixture> {
    let torus = Torus { a: 2.0 };
    let cloud = semi_torus_cloud(n_theta, n_phi, torus.a, mode, seed)?;
    let drift: VectorField = Arc::new(move |x: &[f64]| {
        let rho = x[0].hypot(x[1]);
        let b = [2.0 + x[2], rho];
        let jac = torus.jacobian(x);
        (0..3)
            .map(|r| b[0] * jac[0][r] + b[1] * jac[1][r])
            .collect()
    });
    let diffusion: MatrixField = Arc::new(move |x: &[f64]| {
        let rho = x[0].hypot(x[1]);
        let c = [[3.0 + x[0] / rho, 0.1], [0.1, 2.0]];
        let jac = torus.jacobian(x);
        let mut out = vec![0.0; 9];
        for r in 0..3 {
            for s in 0..3 {
                out[r * 3 + s] = (0..2)
                    .flat_map(|p| (0..2).map(move |q| (p, q)))
                    .map(|(p, q)| jac[p][r] * c[p][q] * jac[q][s])
                    .sum();
            }
        }
        out
    });
    let u: ScalarField = Arc::new(move |x: &[f64]| {
        let (t, p) = torus.angles(x);
        torus_l3_solution(t, p)[0]
    });
    let lu: ScalarField = Arc::new(move |x: &[f64]| {
        let (t, p) = torus.angles(x);
        torus_l3_action(t, p, &torus_l3_solution(t, p))
    });
    Ok(torus_fixture_common(
        "semi-torus-l3",
        cloud,
        mode,
        (mode == SamplingMode::Random).then_some(seed),
        OperatorKind::L3 { drift, diffusion },
        u,
        lu,
        constant(0.0),
    ))
}

/// kappa = 1.1 + sin^2 theta cos^2 phi.
pub fn torus_l2_kappa(theta: f64, phi: f64) -> f64 {
    1.1 + (theta.sin() * phi.cos()).powi(2)
}

/// div(kappa grad u) for u = sin phi sin theta on the torus with a = 2.
pub fn torus_l2_action(theta: f64, phi: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let w = 2.0 + ct;
    let kappa = torus_l2_kappa(theta, phi);
    let k_t = 2.0 * st * ct * cp * cp;
    let k_p = -2.0 * st * st * sp * cp;
    let (u_t, u_tt) = (sp * ct, -sp * st);
    let (u_p, u_pp) = (cp * st, -sp * st);
    k_t * u_t + kappa * (-st / w) * u_t + kappa * u_tt + (k_p * u_p + kappa * u_pp) / (w * w)
}

pub fn semi_torus_l2_problem(
    n_theta: usize,
    n_phi: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Fixture> {
    let torus = Torus { a: 2.0 };
    let cloud = semi_torus_cloud(n_theta, n_phi, torus.a, mode, seed)?;
    let kappa: ScalarField = Arc::new(|x: &[f64]| {
        let rho2 = x[0] * x[0] + x[1] * x[1];
        1.1 + x[2] * x[2] * x[0] * x[0] / rho2
    });
    let u: ScalarField = Arc::new(move |x: &[f64]| {
        let (t, p) = torus.angles(x);
        p.sin() * t.sin()
    });
    let lu: ScalarField = Arc::new(move |x: &[f64]| {
        let (t, p) = torus.angles(x);
        torus_l2_action(t, p)
    });
    // d/dnu u + u at phi = pi: cos(phi) sin(theta) / (2 + cos theta).
    let robin_g: ScalarField = Arc::new(move |x: &[f64]| {
        let (t, _) = torus.angles(x);
        -t.sin() / (2.0 + t.cos())
    });
    Ok(torus_fixture_common(
        "semi-torus-l2",
        cloud,
        mode,
        (mode == SamplingMode::Random).then_some(seed),
        OperatorKind::weighted(kappa),
        u,
        lu,
        robin_g,
    ))
}
