use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gpdm_core::experiments::{
    compare_spectrum, convergence, fixture_eigs, forward_error, legendre_eigs, solve_bvp,
    solve_fixture, Metric, SpectrumComparison,
};
use gpdm_core::pointcloud::{
    build_index, default_eps_grid, log2_grid, tune_bandwidth, PointCloud, TuningRule,
};
use gpdm_core::GpdmError;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

fn usage(msg: impl Into<String>) -> GpdmError {
    GpdmError::InvalidArgument(msg.into())
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), GpdmError> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn write_csv(dir: &Path, name: &str, header: &str, body: String) -> Result<(), GpdmError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), format!("{header}\n{body}"))?;
    Ok(())
}

fn coord_header(dim: usize) -> String {
    (0..dim)
        .map(|c| format!("x{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn coords(cloud: &PointCloud, i: usize) -> String {
    cloud
        .point(i)
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn tune(cfg: &ExperimentConfig) -> Result<Value, GpdmError> {
    let cloud = if cfg.has_files() {
        cfg.load_files()?
    } else {
        cfg.fixture_at(cfg.require_n()?)?.cloud
    };
    let grid = match &cfg.grid {
        None => default_eps_grid(),
        Some(g) => match g[..] {
            [lo, hi, steps] if steps >= 1.0 && steps.fract() == 0.0 => {
                log2_grid(lo, hi, steps as usize)
            }
            _ => return Err(usage("--grid takes LO,HI,STEPS with integer STEPS >= 1")),
        },
    };
    let k = cfg.k();
    let index = build_index(&cloud, k)?;
    let rule = cloud
        .intrinsic_dim()
        .map_or(TuningRule::MaxSlope, TuningRule::ClosestToHalfDim);
    let report = tune_bandwidth(&index, &grid, rule)?;
    let mut body = String::new();
    for (c, eps) in report.eps_grid.iter().enumerate() {
        let slope = report
            .slope
            .get(c)
            .map_or(String::new(), |s| format!("{s:e}"));
        writeln!(body, "{eps:e},{:e},{slope}", report.log_s[c]).unwrap();
    }
    let dir = cfg.out_dir();
    write_csv(&dir, "tune.csv", "eps,log_s,slope", body)?;
    Ok(json!({
        "n": cloud.len(),
        "k": k,
        "eps_star": report.eps_star,
        "d_est": report.d_est,
        "max_slope": report.max_slope,
    }))
}

pub fn forward_error_cmd(cfg: &ExperimentConfig) -> Result<Value, GpdmError> {
    let (method, eps, k, layers) = (cfg.method()?, cfg.eps()?, cfg.k(), cfg.layers()?);
    let dir = cfg.out_dir();
    if cfg.sweep.is_some() {
        return sweep(cfg, Metric::Fe, "forward_error.csv");
    }
    let fixture = cfg.fixture_at(cfg.require_n()?)?;
    let report = forward_error(&fixture, method, k, layers, eps)?;
    let cloud = &fixture.cloud;
    let mut body = String::new();
    for (i, e) in report.pointwise.iter().enumerate() {
        writeln!(body, "{i},{},{e:e}", coords(cloud, i)).unwrap();
    }
    let header = format!("id,{},abs_error", coord_header(cloud.ambient_dim()));
    write_csv(&dir, "forward_error.csv", &header, body)?;
    let mut v = to_value(&report);
    v["fixture"] = json!(fixture.name);
    Ok(v)
}

fn sweep(cfg: &ExperimentConfig, metric: Metric, csv: &str) -> Result<Value, GpdmError> {
    let sizes = cfg
        .sweep
        .clone()
        .ok_or_else(|| usage("--sweep is required"))?;
    let report = convergence(
        &sizes,
        |n| cfg.fixture_at(n),
        cfg.method()?,
        metric,
        cfg.k(),
        cfg.layers()?,
        cfg.eps()?,
    )?;
    let mut body = String::new();
    for r in &report.rows {
        writeln!(body, "{},{:e},{:e}", r.n, r.eps, r.value).unwrap();
    }
    write_csv(&cfg.out_dir(), csv, "n,eps,value", body)?;
    let mut v = to_value(&report);
    v["fixture"] = json!(cfg.fixture_name()?);
    Ok(v)
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Value, GpdmError> {
    let (method, eps, k, layers) = (cfg.method()?, cfg.eps()?, cfg.k(), cfg.layers()?);
    let (cloud, report, truth, name) = if cfg.has_files() {
        let cloud = cfg.load_files()?;
        let make = cfg.file_problem()?;
        let report = solve_bvp(
            &cloud,
            cfg.mode()?,
            &gpdm_core::operators::OperatorKind::L1,
            &make,
            method,
            k,
            layers,
            eps,
        )?;
        (cloud, report, None, "files".to_string())
    } else {
        let fixture = cfg.fixture_at(cfg.require_n()?)?;
        let report = solve_fixture(&fixture, method, k, layers, eps)?;
        let truth = fixture.truth_on(&fixture.cloud);
        (fixture.cloud, report, Some(truth), fixture.name)
    };
    let mut body = String::new();
    for i in 0..cloud.len() {
        let u = report.u_hat[i];
        match &truth {
            Some(t) => writeln!(
                body,
                "{i},{},{u:e},{:e},{:e}",
                coords(&cloud, i),
                t[i],
                (u - t[i]).abs()
            ),
            None => writeln!(body, "{i},{},{u:e},,", coords(&cloud, i)),
        }
        .unwrap();
    }
    let header = format!(
        "id,{},u_hat,truth,abs_error",
        coord_header(cloud.ambient_dim())
    );
    write_csv(&cfg.out_dir(), "solution.csv", &header, body)?;
    let mut v = to_value(&report);
    v["fixture"] = json!(name);
    v["method"] = to_value(&method);
    Ok(v)
}

pub fn eigs(cfg: &ExperimentConfig) -> Result<Value, GpdmError> {
    let (method, eps, k, layers) = (cfg.method()?, cfg.eps()?, cfg.k(), cfg.layers()?);
    let fixture = cfg.fixture_at(cfg.require_n()?)?;
    let count = cfg.modes();
    let report = if fixture.name == "legendre" {
        legendre_eigs(&fixture, method, k, layers, eps, count)?
    } else {
        fixture_eigs(&fixture, method, k, layers, eps, count)?
    };
    let comparison: Option<SpectrumComparison> = match &fixture.analytic_eigs {
        Some(_) => Some(compare_spectrum(&report, &fixture, &fixture.cloud)?),
        None => None,
    };
    let mut body = String::new();
    for i in 0..report.len() {
        let (analytic, rel) = comparison.as_ref().filter(|c| i < c.analytic.len()).map_or(
            (String::new(), String::new()),
            |c| {
                (
                    format!("{:e}", c.analytic[i]),
                    format!("{:e}", c.relative_errors[i]),
                )
            },
        );
        writeln!(
            body,
            "{i},{:e},{:e},{:e},{analytic},{rel}",
            report.lambdas[i], report.imag[i], report.residuals[i]
        )
        .unwrap();
    }
    let dir = cfg.out_dir();
    write_csv(
        &dir,
        "eigenvalues.csv",
        "index,lambda,imag,residual,analytic,relative_error",
        body,
    )?;
    // eigenvector entries live on manifold-side ids; keep those that are original samples
    let cloud = &fixture.cloud;
    let mut body = String::new();
    for (row, &id) in report.unknown_ids.iter().enumerate() {
        if id >= cloud.len() {
            continue;
        }
        let values: Vec<String> = report
            .psis
            .iter()
            .map(|p| format!("{:e}", p[row]))
            .collect();
        writeln!(body, "{id},{},{}", coords(cloud, id), values.join(",")).unwrap();
    }
    let psi_header: Vec<String> = (0..report.len()).map(|i| format!("psi{i}")).collect();
    let header = format!(
        "id,{},{}",
        coord_header(cloud.ambient_dim()),
        psi_header.join(",")
    );
    write_csv(&dir, "eigenfunctions.csv", &header, body)?;
    let mut v = to_value(&report);
    v["fixture"] = json!(fixture.name);
    v["comparison"] = comparison.as_ref().map_or(Value::Null, to_value);
    Ok(v)
}

pub fn convergence_cmd(cfg: &ExperimentConfig) -> Result<Value, GpdmError> {
    let metric = match cfg.metric.as_deref().unwrap_or("ie") {
        "fe" => Metric::Fe,
        "ie" => Metric::Ie,
        other => return Err(usage(format!("unknown metric '{other}'"))),
    };
    sweep(cfg, metric, "convergence.csv")
}
