use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qllg::observables::{BoundObservable, ObservableSpec};
use qllg::oracle::{self, Method, Reference};
use qllg::spin::{self, Axis};
use qllg::{integrate, Observer, QllgContext, QllgError};
use serde_json::json;

use crate::config::{initial_density, Resolved, RunConfig, SweepParam};
use crate::error::CliError;
use crate::output::{self, build_id, number, sibling, write_atomic, write_json};

struct Model {
    ctx: QllgContext,
    observers: Vec<BoundObservable>,
}

fn model(resolved: &Resolved) -> Result<Model, CliError> {
    let spec = &resolved.hamiltonian;
    let config_error = |e: QllgError| CliError::Config { key: "hamiltonian".into(), message: e.to_string() };
    let ops = spin::build_spin_operators(resolved.sites(), &spec.constants).map_err(config_error)?;
    let bonds = spec.bonds().map_err(config_error)?;
    let hamiltonian = spin::build_hamiltonian(spec, &ops, &bonds).map_err(config_error)?;

    let mut specs = vec![
        ObservableSpec::Energy,
        ObservableSpec::Magnetization(Axis::X),
        ObservableSpec::Magnetization(Axis::Y),
        ObservableSpec::Magnetization(Axis::Z),
    ];
    specs.extend(resolved.concurrence_pairs.iter().map(|&(k, l)| ObservableSpec::Concurrence(k, l)));
    let observers = specs
        .iter()
        .map(|s| s.bind(&hamiltonian, &ops))
        .collect::<qllg::Result<Vec<_>>>()
        .map_err(|e| CliError::Config { key: "observables".into(), message: e.to_string() })?;

    let ctx = QllgContext::new(hamiltonian, resolved.kappa, spec.constants.hbar)?;
    Ok(Model { ctx, observers })
}

pub struct RunSummary {
    pub rows: usize,
    pub wall_time_s: f64,
}

/// Runs one trajectory and writes its CSV. A blow-up still writes the
/// samples recorded before it.
fn run_to_csv(cfg: &RunConfig, csv: &Path) -> Result<RunSummary, CliError> {
    let resolved = cfg.resolve()?;
    let rho0 = initial_density(&resolved)?;
    let model = model(&resolved)?;
    let observers: Vec<&dyn Observer> = model.observers.iter().map(|o| o as &dyn Observer).collect();

    let start = Instant::now();
    let outcome = integrate(&rho0, &model.ctx, &resolved.integrator, &observers);
    let wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(record) => {
            write_atomic(csv, output::trajectory_csv(&record).as_bytes())?;
            Ok(RunSummary { rows: record.len(), wall_time_s })
        }
        Err(QllgError::NumericalBlowup { time, reason, partial }) => {
            write_atomic(csv, output::trajectory_csv(&partial).as_bytes())?;
            Err(CliError::Numerical(format!("blow-up at t = {time} ps: {reason}")))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let csv = sibling(&cfg.output.path, out_dir, ".csv");
    let sidecar = sibling(&cfg.output.path, out_dir, ".json");
    cfg.resolve()?;

    let result = run_to_csv(cfg, &csv);
    let mut meta = json!({
        "resolved_config": cfg,
        "build": build_id(),
        "csv": csv.file_name().map(|s| s.to_string_lossy()),
    });
    match &result {
        Ok(summary) => {
            meta["status"] = json!("ok");
            meta["rows"] = json!(summary.rows);
            meta["wall_time_s"] = json!(summary.wall_time_s);
        }
        Err(e) => {
            meta["status"] = json!("failed");
            meta["error"] = json!(e.to_string());
        }
    }
    if !matches!(result, Err(CliError::Config { .. })) {
        write_json(&sidecar, &meta)?;
    }
    result.map(|_| csv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Conservative,
    Standard,
    Both,
}

pub struct ConvergeRequest {
    pub step_sizes: Vec<f64>,
    pub reference: Reference,
    pub methods: Vec<String>,
    pub family: Option<Family>,
}

fn optional(x: Option<f64>) -> serde_json::Value {
    x.map_or(serde_json::Value::Null, |v| json!(v))
}

pub fn converge(cfg: &RunConfig, request: &ConvergeRequest, out_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let resolved = cfg.resolve()?;
    let rho0 = initial_density(&resolved)?;
    if request.reference == Reference::ExactRank1 && !resolved.initial_state.is_pure() {
        return Err(CliError::Config {
            key: "initial_state.p".into(),
            message: "the exact reference needs a pure initial state".into(),
        });
    }
    let t_final = resolved.integrator.t_final;
    if t_final <= 0.0 {
        return Err(CliError::Config { key: "dynamics.t_final_ps".into(), message: "must be positive".into() });
    }

    let mut hs = request.step_sizes.clone();
    hs.sort_by(|a, b| b.total_cmp(a));
    if hs.is_empty()
        || hs.windows(2).any(|w| w[0] == w[1])
        || hs.iter().any(|&h| !(h.is_finite() && h > 0.0 && h <= t_final))
    {
        return Err(CliError::Config {
            key: "--h".into(),
            message: format!("need distinct step sizes in (0, {t_final}]"),
        });
    }

    let families: &[bool] = match request.family.unwrap_or(if resolved.integrator.conservative {
        Family::Conservative
    } else {
        Family::Standard
    }) {
        Family::Conservative => &[true],
        Family::Standard => &[false],
        Family::Both => &[false, true],
    };
    let mut methods = Vec::new();
    for &conservative in families {
        for name in &request.methods {
            methods.push(
                Method::preset(name, conservative)
                    .map_err(|e| CliError::Config { key: "--methods".into(), message: e.to_string() })?,
            );
        }
    }

    let ctx = model(&resolved)?.ctx;
    let start = Instant::now();
    let report = oracle::convergence_study(&rho0, &ctx, &methods, &hs, t_final, request.reference)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut csv = String::from("method,conservative,h,error_frobenius,pairwise_order\n");
    for m in &report.methods {
        for ((h, e), order) in hs.iter().zip(&m.errors).zip(&m.pairwise_orders) {
            let order = order.map(number).unwrap_or_default();
            csv.push_str(&format!("{},{},{},{},{order}\n", m.method, m.conservative, number(*h), number(*e)));
        }
    }
    let csv_path = sibling(&cfg.output.path, out_dir, "_convergence.csv");
    write_atomic(&csv_path, csv.as_bytes())?;

    let summary: Vec<_> = report
        .methods
        .iter()
        .map(|m| {
            json!({
                "method": m.method,
                "conservative": m.conservative,
                "nominal_order": m.nominal_order,
                "slope": optional(m.slope),
                "conserved": m.conserved,
            })
        })
        .collect();
    let meta = json!({
        "resolved_config": cfg,
        "build": build_id(),
        "reference": match request.reference { Reference::ExactRank1 => "exact", Reference::FineRk4 => "fine" },
        "t_final_ps": t_final,
        "step_sizes_ps": hs,
        "methods": summary,
        "wall_time_s": wall_time_s,
    });
    write_json(&sibling(&cfg.output.path, out_dir, "_convergence.json"), &meta)?;
    Ok(csv_path)
}

/// Worker count for sweeps: `QLLG_THREADS` if set, else the available cores.
pub fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var("QLLG_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config {
                key: "QLLG_THREADS".into(),
                message: format!("expected a positive integer, got `{s}`"),
            }),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, usize::from)),
    }
}

struct SweepEntry {
    value: f64,
    file: PathBuf,
    result: Result<RunSummary, CliError>,
}

/// Runs one trajectory per value on a bounded pool. Failures are recorded
/// and do not stop the other values.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], out_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    if values.is_empty() {
        return Err(CliError::Config { key: "--values".into(), message: "no sweep values given".into() });
    }
    let runs: Vec<(f64, RunConfig, PathBuf)> = values
        .iter()
        .map(|&v| {
            let run = param.apply(cfg, v);
            run.resolve().map_err(|e| match e {
                CliError::Config { key, message } => {
                    CliError::Config { key, message: format!("{message} (with {} = {v})", param.name()) }
                }
                other => other,
            })?;
            let file = sibling(&cfg.output.path, out_dir, &format!("_{}={v}.csv", param.name()));
            Ok((v, run, file))
        })
        .collect::<Result<_, CliError>>()?;
    let workers = sweep_threads()?.min(runs.len());
    faer::set_global_parallelism(faer::Par::Seq);

    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<Option<SweepEntry>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((value, run, file)) = runs.get(k) else { break };
                let result = run_to_csv(run, file);
                done.lock().unwrap()[k] = Some(SweepEntry { value: *value, file: file.clone(), result });
            });
        }
    });
    let entries: Vec<SweepEntry> =
        done.into_inner().unwrap().into_iter().map(|e| e.expect("every value runs")).collect();

    let failed = entries.iter().filter(|e| e.result.is_err()).count();
    let records: Vec<_> = entries
        .iter()
        .map(|e| {
            let file = e.file.file_name().map(|s| s.to_string_lossy().into_owned());
            match &e.result {
                Ok(s) => json!({"value": e.value, "file": file, "status": "ok", "rows": s.rows, "wall_time_s": s.wall_time_s}),
                Err(err) => json!({"value": e.value, "file": file, "status": "failed", "error": err.to_string()}),
            }
        })
        .collect();
    let manifest = json!({
        "resolved_config": cfg,
        "build": build_id(),
        "param": param.name(),
        "values": values,
        "threads": workers,
        "runs": records,
    });
    let manifest_path = sibling(&cfg.output.path, out_dir, "_sweep.json");
    write_json(&manifest_path, &manifest)?;
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} sweep values failed; see {}",
            entries.len(),
            manifest_path.display()
        )));
    }
    Ok(manifest_path)
}
