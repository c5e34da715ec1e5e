//! Experiment execution and artifact writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use nds_core::conjugacy;
use nds_core::entropy;
use nds_core::expansivity::{self, MetricMatrix};
use nds_core::metrics;
use nds_core::pressure;
use nds_core::transfer;
use nds_core::NdsError;

use crate::config::{
    self, ConjugacyParams, EntropyParams, ExpansivityParams, ExperimentConfig, FrinkParams,
    MemorylossParams, PressureParams, ValidationError, VolumeParams,
};

/// Failure modes mapped onto process exit codes.
#[derive(Debug)]
pub enum RunError {
    /// Exit 2: the configuration violates a module precondition.
    Validation(ValidationError),
    /// Exit 3: a numeric operation failed; the error object is serialized.
    Numeric(NdsError),
    /// Exit 1: filesystem trouble.
    Io(std::io::Error),
}

impl From<ValidationError> for RunError {
    fn from(e: ValidationError) -> Self {
        RunError::Validation(e)
    }
}

impl From<NdsError> for RunError {
    fn from(e: NdsError) -> Self {
        RunError::Numeric(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 1,
        }
    }

    /// Machine-readable error object.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            RunError::Validation(e) => json!({"error": "Validation", "message": e.to_string()}),
            RunError::Numeric(e) => json!({"error": e.kind(), "message": e.to_string()}),
            RunError::Io(e) => json!({"error": "Io", "message": e.to_string()}),
        }
    }
}

/// Worker-thread cap from NDS_LAB_THREADS (default: all available).
pub fn thread_cap() -> usize {
    match std::env::var("NDS_LAB_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// Runs one closure per item on at most `cap` worker threads, preserving
/// input order in the output (deterministic regardless of scheduling).
pub fn run_columns<T, R, F>(items: Vec<T>, cap: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let cap = cap.max(1);
    let mut results: Vec<Option<R>> = Vec::new();
    results.resize_with(items.len(), || None);
    for chunk in (0..items.len()).collect::<Vec<_>>().chunks(cap) {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &idx in chunk {
                let item = &items[idx];
                handles.push((idx, scope.spawn(|| f(item))));
            }
            for (idx, handle) in handles {
                results[idx] = Some(handle.join().expect("worker panicked"));
            }
        });
    }
    results.into_iter().map(Option::unwrap).collect()
}

struct OutDir {
    path: PathBuf,
}

impl OutDir {
    fn create(path: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(path)?;
        Ok(OutDir {
            path: path.to_path_buf(),
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).expect("serializable report");
        let mut file = fs::File::create(self.path.join(name))?;
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &[&str]) -> Result<csv::Writer<fs::File>, RunError> {
        let mut writer = csv::Writer::from_writer(fs::File::create(self.path.join(name))?);
        writer
            .write_record(header)
            .map_err(|e| RunError::Io(std::io::Error::other(e)))?;
        Ok(writer)
    }
}

fn write_row(
    writer: &mut csv::Writer<fs::File>,
    fields: &[String],
) -> Result<(), RunError> {
    writer
        .write_record(fields)
        .map_err(|e| RunError::Io(std::io::Error::other(e)))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Dispatch a parsed configuration; `subcommand` must match the config.
pub fn run_experiment(
    subcommand: &str,
    config: &ExperimentConfig,
    out_override: Option<&Path>,
) -> Result<PathBuf, RunError> {
    if config.experiment != subcommand {
        return Err(ValidationError(format!(
            "config is for experiment '{}', invoked subcommand is '{subcommand}'",
            config.experiment
        ))
        .into());
    }
    let out_path = match out_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(
            config
                .out_dir
                .clone()
                .unwrap_or_else(|| format!("out/{}", config.experiment)),
        ),
    };
    let out = OutDir::create(&out_path)?;
    out.write_json("config.json", config)?;

    match subcommand {
        "entropy" => run_entropy(config, &out)?,
        "pressure" => run_pressure(config, &out)?,
        "memoryloss" => run_memoryloss(config, &out)?,
        "conjugacy" => run_conjugacy(config, &out)?,
        "expansivity" => run_expansivity(config, &out)?,
        "frink" => run_frink(config, &out)?,
        "volume" => run_volume(config, &out)?,
        other => {
            return Err(ValidationError(format!("unknown experiment '{other}'")).into());
        }
    }
    Ok(out_path)
}

fn run_entropy(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: EntropyParams = config.params()?;
    let seq = config.system.build_expanding()?;
    config::validate_counting(&params.eps_list, params.resolution, params.n_max)?;
    if params.quad_points < 128 {
        return Err(ValidationError("quad_points must be at least 128".into()).into());
    }
    let density = params.density.build(params.density_grid)?;
    let parts = params.partition.build()?;

    let metric_formula =
        entropy::metric_entropy_formula(&seq, params.n_max, params.quad_points, params.window_frac);
    let top_formula =
        entropy::top_entropy_formula(&seq, params.n_max, params.quad_points, params.window_frac);
    let metric_estimate =
        entropy::metric_entropy_estimate(&seq, &parts, &density, params.n_max, &params.refinement())?;

    // radius columns are independent tasks
    let tables = run_columns(params.eps_list.clone(), thread_cap(), |&eps| {
        entropy::top_entropy_separated(&seq, &[eps], params.n_max, params.resolution)
    });

    let mut counts = out.csv("counts.csv", &["n", "eps", "count", "value"])?;
    for table in &tables {
        for row in &table.rows {
            write_row(
                &mut counts,
                &[
                    row.n.to_string(),
                    fmt(row.eps),
                    row.count.to_string(),
                    fmt(row.value),
                ],
            )?;
        }
    }

    let mut traces = out.csv("traces.csv", &["estimator", "n", "value"])?;
    for (name, trace) in [
        ("metric_entropy_formula", &metric_formula),
        ("top_entropy_formula", &top_formula),
        ("metric_entropy_estimate", &metric_estimate),
    ] {
        for (n, v) in &trace.per_n {
            write_row(&mut traces, &[name.to_string(), n.to_string(), fmt(*v)])?;
        }
    }

    let separated: Vec<_> = tables
        .iter()
        .flat_map(|t| t.estimates.iter().cloned())
        .collect();
    out.write_json(
        "summary.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "top_entropy_separated": separated,
            "top_entropy_formula": {"estimate": top_formula.estimate, "window": top_formula.window},
            "metric_entropy_formula": {"estimate": metric_formula.estimate, "window": metric_formula.window},
            "metric_entropy_estimate": {"estimate": metric_estimate.estimate, "window": metric_estimate.window},
        }),
    )
}

fn run_pressure(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: PressureParams = config.params()?;
    let seq = config.system.build_expanding()?;
    config::validate_counting(&params.eps_list, params.resolution, params.n_max)?;
    let pot = params.potential.build(&seq, params.potential_grid)?;
    let density = params.density.build(params.density_grid)?;
    let parts = params.partition.build()?;

    let tables = run_columns(params.eps_list.clone(), thread_cap(), |&eps| {
        pressure::top_pressure_estimate(&seq, &pot, &[eps], params.n_max, params.resolution)
    });
    let smallest_eps = params
        .eps_list
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let headline = tables
        .iter()
        .zip(&params.eps_list)
        .find(|(_, &eps)| eps == smallest_eps)
        .map(|(t, _)| t.headline)
        .unwrap();

    let metric = pressure::metric_pressure(
        &seq,
        &pot,
        &density,
        &parts,
        params.n_max,
        &params.refinement(),
    )?;
    let gap = headline - metric.value;

    let mut table = out.csv("table.csv", &["n", "eps", "log_s", "log_r"])?;
    for t in &tables {
        for row in &t.rows {
            write_row(
                &mut table,
                &[
                    row.n.to_string(),
                    fmt(row.eps),
                    fmt(row.log_s),
                    fmt(row.log_r),
                ],
            )?;
        }
    }

    let power_check = match params.power_k {
        Some(k) if k >= 1 => {
            let (pseq, ppot) = pressure::power_system(&seq, &pot, k)?;
            let pn = (params.n_max / k).max(2);
            let ptable =
                pressure::top_pressure_estimate(&pseq, &ppot, &[smallest_eps], pn, params.resolution);
            Some(json!({
                "k": k,
                "power_headline": ptable.headline,
                "base_headline": headline,
                "scaled_base": k as f64 * headline,
            }))
        }
        _ => None,
    };

    out.write_json(
        "summary.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "p_top_est": headline,
            "p_metric_est": metric.value,
            "gap": gap,
            "metric_entropy_part": metric.entropy.estimate,
            "metric_average_part": metric.average.estimate,
            "partition_restricted": metric.partition_restricted,
            "power_check": power_check,
        }),
    )
}

fn run_memoryloss(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: MemorylossParams = config.params()?;
    let seq = config.system.build_expanding()?;
    if params.n_max < 8 {
        return Err(ValidationError("memoryloss n_max must be at least 8".into()).into());
    }
    let phi = params.density_a.build(params.grid)?;
    let psi = params.density_b.build(params.grid)?;

    let report = transfer::loss_of_memory(&seq, &phi, &psi, params.n_max)?;
    let mut trace = out.csv("l1_trace.csv", &["n", "distance"])?;
    for (n, d) in report.l1_trace.iter().enumerate() {
        write_row(&mut trace, &[n.to_string(), fmt(*d)])?;
    }

    // density-class diagnostics along the evolution
    let evolved = transfer::evolve(&seq, &phi, params.n_max.min(10))?;
    let observed_min = evolved
        .densities
        .iter()
        .map(|d| d.min_value())
        .fold(f64::INFINITY, f64::min);
    let kappa = params.kappa.unwrap_or(0.9 * observed_min);
    let renormalized = transfer::renormalize(evolved.densities.last().unwrap(), kappa)?;

    let diagnostics = if params.diagnostics {
        let map = seq.map_at(0).clone();
        let (slope, rows) = transfer::mass_defect_slope(
            &map,
            |x| {
                1.0 + 0.5 * (std::f64::consts::TAU * x + 0.7).sin()
                    + 0.2 * (2.0 * std::f64::consts::TAU * x + 1.1).cos()
            },
            &[512, 1024, 2048, 4096],
        )?;
        let phi_d = nds_core::GridDensity::from_fn(4096, |x| {
            1.0 + 0.4 * (std::f64::consts::TAU * x + 0.3).sin()
        })?;
        let duality: Vec<f64> = [1u32, 2, 3]
            .iter()
            .map(|&k| {
                transfer::duality_residual(&map, &phi_d, |x| {
                    (std::f64::consts::TAU * k as f64 * x).sin()
                })
            })
            .collect::<Result<_, _>>()?;
        Some(json!({
            "mass_defect_slope": slope,
            "mass_defect_rows": rows,
            "duality_residuals": duality,
        }))
    } else {
        None
    };

    out.write_json(
        "report.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "rate": report.fitted_rate,
            "r2": report.r_squared,
            "window": report.window,
            "noise_floor": report.noise_floor,
            "degenerate": report.degenerate,
            "mass_defects": evolved.mass_defects,
            "kappa": kappa,
            "renormalized_min": renormalized.min_value(),
            "diagnostics": diagnostics,
        }),
    )
}

fn run_conjugacy(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: ConjugacyParams = config.params()?;
    let seq = config.system.build_expanding()?;
    let target = params.target.build()?;
    if params.samples == 0 {
        return Err(ValidationError("samples must be positive".into()).into());
    }

    let solution = conjugacy::solve_equiconjugacy(
        &seq,
        &target,
        params.horizon,
        params.tol,
        params.max_iter,
        params.grid,
    )?;
    let residual =
        conjugacy::conjugacy_residual(&solution.homeos, &seq, &target, params.samples);

    for (k, homeo) in solution.homeos.iter().enumerate() {
        let mut file = out.csv(&format!("pi_{k:03}.csv"), &["x", "value"])?;
        for j in 0..params.samples {
            let x = j as f64 / params.samples as f64;
            write_row(&mut file, &[fmt(x), fmt(homeo.eval_circle(x))])?;
        }
    }

    out.write_json(
        "report.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "iterations": solution.report.iterations,
            "residual": residual,
            "contraction_trace": solution.report.contraction_trace,
            "tol": solution.report.tol,
            "grid": solution.report.grid,
        }),
    )
}

fn run_expansivity(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: ExpansivityParams = config.params()?;
    let seq = config.system.build()?;
    if !(params.eps > 0.0 && params.eps < params.delta && params.delta <= 0.5) {
        return Err(ValidationError("need 0 < eps < delta <= 1/2".into()).into());
    }
    if params.net_size < 2 {
        return Err(ValidationError("net_size must be at least 2".into()).into());
    }
    let outcome = expansivity::sue_horizon(
        &seq,
        params.delta,
        params.eps,
        params.n_max,
        params.time_window,
        params.net_size,
    );
    let cover = expansivity::uniform_total_boundedness(params.eps, params.time_window + 1);
    out.write_json(
        "report.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "outcome": outcome,
            "cover_counts": cover.cover_counts,
        }),
    )
}

fn write_matrix(out: &OutDir, name: &str, net: &[f64], matrix: &MetricMatrix) -> Result<(), RunError> {
    let mut header = vec!["point".to_string()];
    header.extend(net.iter().map(|x| fmt(*x)));
    let mut writer = out.csv(
        name,
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
    )?;
    for (i, x) in net.iter().enumerate() {
        let mut row = vec![fmt(*x)];
        for j in 0..net.len() {
            row.push(fmt(matrix.get(i, j)));
        }
        write_row(&mut writer, &row)?;
    }
    Ok(())
}

fn run_frink(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: FrinkParams = config.params()?;
    let seq = config.system.build()?;
    if !(params.delta > 0.0 && params.delta <= 0.5) {
        return Err(ValidationError("delta must lie in (0, 1/2]".into()).into());
    }
    if params.net_size < 8 || params.net_size > 4096 {
        return Err(ValidationError("net_size must lie in [8, 4096]".into()).into());
    }
    let report = expansivity::frink_pipeline(&seq, params.net_size, params.depth, params.delta)?;
    write_matrix(out, "rho.csv", &report.net.points, &report.net.rho)?;
    write_matrix(out, "rho_prime.csv", &report.net.points, &report.net.rho_prime)?;
    out.write_json(
        "report.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "big_n": report.big_n,
            "mu": report.mu,
            "sandwich_levels": report.sandwich_levels,
            "projection_slack": report.projection_slack,
            "expansion": report.expansion,
        }),
    )
}

fn run_volume(config: &ExperimentConfig, out: &OutDir) -> Result<(), RunError> {
    let params: VolumeParams = config.params()?;
    let seq = config.system.build_expanding()?;
    if params.samples == 0 {
        return Err(ValidationError("samples must be positive".into()).into());
    }
    let report =
        metrics::volume_lemma_check(&seq, params.eps, params.n_max, params.samples, config.seed)?;

    let mut rows = out.csv("volume.csv", &["n", "eps", "count", "product_min", "product_max"])?;
    for row in &report.rows {
        write_row(
            &mut rows,
            &[
                row.n.to_string(),
                fmt(params.eps),
                params.samples.to_string(),
                fmt(row.min_product),
                fmt(row.max_product),
            ],
        )?;
    }

    let c0 = metrics::distortion_constant(&seq).ok();
    out.write_json(
        "summary.json",
        &json!({
            "schema_version": config::SCHEMA_VERSION,
            "min_product": report.min_product,
            "max_product": report.max_product,
            "spread_ratio": report.max_product / report.min_product,
            "distortion_constant": c0,
            "distortion_bound": c0.map(|c| (2.0 * c * params.eps).exp()),
        }),
    )
}

/// Convenience used by tests and `run`: load a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path)?;
    Ok(ExperimentConfig::parse(&text)?)
}

/// Run a config by path the way the binary does.
pub fn run_config_file(
    subcommand: &str,
    path: &Path,
    out_override: Option<&Path>,
) -> Result<PathBuf, RunError> {
    let config = load_config(path)?;
    run_experiment(subcommand, &config, out_override)
}
