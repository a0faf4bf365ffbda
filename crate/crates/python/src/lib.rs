//! Python bindings. Configurations are passed as JSON strings with the same
//! schema as the command-line tool; results come back as dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pairsource::analysis::counting::{g2_heralded as g2_h, HeraldedCounts};
use pairsource::analysis::fit::{fit_brightness as fit, PowerPoint, PowerSeries, Weighting, PARAMETER_NAMES};
use pairsource::analysis::heralding::{back_propagate as back_prop, LossBudget, LossEntry};
use pairsource::cli::{execute, Command, Run};
use pairsource::config::RunConfig;
use pairsource::molecule::{find_resonances, transmission_spectrum};
use pairsource::optimizer::DesignEvaluator;
use pairsource::sfwm::{
    jsi_purity_gap, maximize_purity_over_pump, relative_brightness, schmidt_decompose_real, schmidt_purity,
};
use pairsource::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Singular { .. } | Error::Fit { .. } | Error::Data(_) | Error::NotFound(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn load(config_json: Option<&str>) -> PyResult<RunConfig> {
    RunConfig::from_json(config_json.unwrap_or("{}")).map_err(to_py)
}

/// The full default configuration as pretty-printed JSON.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&RunConfig::default()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Through-port power transmission on the `spectrum` grid of the config.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn spectrum<'py>(py: Python<'py>, config_json: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let c = load(config_json)?;
    let grid = c.spectrum.grid().map_err(to_py)?;
    let s = transmission_spectrum(&c.device, &grid).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("wavelength_nm", grid.to_vec())?;
    d.set_item("transmission", s.values().to_vec())?;
    let res: Vec<(f64, f64, f64)> = find_resonances(&s)
        .iter()
        .map(|r| (r.center_nm, r.fwhm_pm, r.extinction_db))
        .collect();
    d.set_item("resonances", res)?;
    Ok(d)
}

/// Purity, |JSA| gap and relative brightness of the configured device.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn jsa_summary<'py>(py: Python<'py>, config_json: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let c = load(config_json)?;
    let eval = DesignEvaluator::new(&c.device, &c.pump, &c.jsa).map_err(to_py)?;
    let j = eval.jsa(c.device.kappa2_sq, c.device.kappa_mzi_sq).map_err(to_py)?;
    let s = schmidt_purity(&j).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("purity", s.purity)?;
    d.set_item("schmidt_number", s.schmidt_number)?;
    d.set_item(
        "schmidt_probs",
        s.schmidt_probs
            .iter()
            .take(c.jsa_run.schmidt_modes)
            .copied()
            .collect::<Vec<_>>(),
    )?;
    d.set_item("jsi_purity_gap", jsi_purity_gap(&j).map_err(to_py)?)?;
    d.set_item(
        "relative_brightness",
        relative_brightness(&j, &eval.reference).map_err(to_py)?,
    )?;
    Ok(d)
}

/// Highest purity over pump bandwidth: returns (fwhm_pm, purity).
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn best_pump(config_json: Option<&str>) -> PyResult<(f64, f64)> {
    let c = load(config_json)?;
    let o = maximize_purity_over_pump(&c.device, &c.pump, &c.jsa).map_err(to_py)?;
    Ok((o.fwhm_pm, o.purity))
}

/// Purity of a real amplitude matrix given as a list of rows.
#[pyfunction]
fn purity(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
    }
    let a = nalgebra::DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    Ok(schmidt_decompose_real(&a).map_err(to_py)?.purity)
}

/// Brightness fit of rate columns; `acc_hz` may be omitted.
#[pyfunction]
#[pyo3(signature = (p_mw, cs_hz, ci_hz, ccc_hz, acc_hz=None, coincidence_window_s=1e-9, weighting="poisson"))]
#[allow(clippy::too_many_arguments)]
fn fit_brightness<'py>(
    py: Python<'py>,
    p_mw: Vec<f64>,
    cs_hz: Vec<f64>,
    ci_hz: Vec<f64>,
    ccc_hz: Vec<f64>,
    acc_hz: Option<Vec<f64>>,
    coincidence_window_s: f64,
    weighting: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let n = p_mw.len();
    if [cs_hz.len(), ci_hz.len(), ccc_hz.len()].iter().any(|&l| l != n) || acc_hz.as_ref().is_some_and(|a| a.len() != n)
    {
        return Err(PyValueError::new_err("all columns must have the same length"));
    }
    let weighting: Weighting = serde_json::from_value(serde_json::Value::String(weighting.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown weighting `{weighting}`")))?;
    let rows = (0..n)
        .map(|i| PowerPoint {
            p_mw: p_mw[i],
            cs_hz: cs_hz[i],
            ci_hz: ci_hz[i],
            ccc_hz: ccc_hz[i],
            acc_hz: acc_hz.as_ref().map(|a| a[i]),
        })
        .collect();
    let data = PowerSeries::new(rows, coincidence_window_s).map_err(to_py)?;
    let f = fit(&data, weighting).map_err(to_py)?;
    let d = PyDict::new(py);
    for (k, (name, v)) in PARAMETER_NAMES.iter().zip(f.values()).enumerate() {
        d.set_item(*name, v)?;
        d.set_item(format!("{name}_err"), f.std_error(k))?;
    }
    d.set_item("reduced_chi2", f.reduced_chi2)?;
    d.set_item("condition_number", f.condition_number)?;
    d.set_item("warnings", f.warnings.clone())?;
    Ok(d)
}

/// Source-referred efficiency from a fitted η and a list of (label, loss_dB, err_dB).
#[pyfunction]
fn back_propagate<'py>(
    py: Python<'py>,
    eta: f64,
    eta_err: f64,
    losses: Vec<(String, f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let budget =
        LossBudget::new(losses.iter().map(|(l, db, e)| LossEntry::new(l, *db, *e)).collect()).map_err(to_py)?;
    let e = back_prop(eta, eta_err, &budget).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("eta_src", e.eta_src)?;
    d.set_item("err", e.err)?;
    d.set_item("err_fit", e.err_fit)?;
    d.set_item("err_budget", e.err_budget)?;
    d.set_item("warning", e.warning)?;
    Ok(d)
}

#[pyfunction]
fn g2_heralded(n_h: u64, n_ha: u64, n_hb: u64, n_hab: u64) -> PyResult<f64> {
    g2_h(&HeraldedCounts { n_h, n_ha, n_hb, n_hab }).map_err(to_py)
}

/// Runs a command-line command and returns the written paths.
#[pyfunction]
#[pyo3(signature = (command, config_path=None, out_dir="out", seed=None, threads=None))]
fn run(
    command: &str,
    config_path: Option<PathBuf>,
    out_dir: &str,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Vec<String>> {
    let cmd = match command {
        "spectrum" => Command::Spectrum,
        "jsa" => Command::Jsa,
        "sweep" => Command::Sweep,
        "coupler-scan" => Command::CouplerScan,
        "analyze" => Command::Analyze,
        other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
    };
    let config = match &config_path {
        Some(p) => RunConfig::load(p).map_err(to_py)?,
        None => RunConfig::default(),
    };
    let run = Run {
        seed: seed.unwrap_or(config.io.seed),
        threads: threads.or(config.io.threads),
        out_dir: PathBuf::from(out_dir),
        config,
    };
    let files = execute(cmd, &run).map_err(to_py)?;
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn pairsource_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(jsa_summary, m)?)?;
    m.add_function(wrap_pyfunction!(best_pump, m)?)?;
    m.add_function(wrap_pyfunction!(purity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_brightness, m)?)?;
    m.add_function(wrap_pyfunction!(back_propagate, m)?)?;
    m.add_function(wrap_pyfunction!(g2_heralded, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
