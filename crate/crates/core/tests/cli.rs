use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use pairsource::analysis::heralding::LossBudget;
use pairsource::io::write_power_series;
use pairsource::sim::{synthetic_power_series, BrightnessTruth};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, json: &str) -> PathBuf {
        let p = self.path("run.json");
        std::fs::write(&p, json).unwrap();
        p
    }

    fn run(&self, command: &str, config: Option<&Path>) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_pairsource"));
        c.arg(command).arg("--out").arg(self.path("out"));
        if let Some(p) = config {
            c.arg("--config").arg(p);
        }
        c.output().unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path("out").join(name)).unwrap()).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn malformed_config_exits_2_naming_key() {
    let ws = Workspace::new();
    let cfg = ws.config(r#"{"device": {"kappa1_sq": 0.23, "kappa3_sq": 0.1}}"#);
    let o = ws.run("spectrum", Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kappa3_sq"), "{}", stderr(&o));

    let cfg = ws.config(r#"{"pump": {"fwhm_pm": -3}}"#);
    let o = ws.run("jsa", Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pump"));

    let cfg = ws.config("{ not json");
    assert_eq!(ws.run("spectrum", Some(&cfg)).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let ws = Workspace::new();
    assert_eq!(ws.run("frobnicate", None).status.code(), Some(2));
    assert_eq!(
        ws.run("spectrum", Some(&ws.path("missing.json"))).status.code(),
        Some(2)
    );
    assert_eq!(ws.run("analyze", None).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_pairsource"))
        .args(["spectrum", "--threads", "0", "--out"])
        .arg(ws.path("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_default_triplet() {
    let ws = Workspace::new();
    let o = ws.run("spectrum", None);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ws.json("resonances.json");
    let t = &r["triplet"];
    let (pump, signal, idler) = (
        f(&t["pump"]["fwhm_pm"]),
        f(&t["signal"]["fwhm_pm"]),
        f(&t["idler"]["fwhm_pm"]),
    );
    assert!(pump > 3.0 * signal && pump > 3.0 * idler, "{pump} {signal} {idler}");
    assert_eq!(r["resonances"].as_array().unwrap().len(), 3);

    let csv = std::fs::read_to_string(ws.path("out").join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("wavelength_nm,re_Eout,im_Eout,abs2_Eout,abs2_Eins1,abs2_Eins2\n"));
    assert_eq!(csv.lines().count(), 5002);
}

#[test]
fn decoupled_spectrum_is_single_ring() {
    let ws = Workspace::new();
    let cfg = ws.config(r#"{"device": {"kappa2_sq": 0.0}}"#);
    assert!(ws.run("spectrum", Some(&cfg)).status.success());
    let t = &ws.json("resonances.json")["triplet"];
    let (pump, signal) = (f(&t["pump"]["fwhm_pm"]), f(&t["signal"]["fwhm_pm"]));
    assert!((pump / signal - 1.0).abs() < 0.01, "{pump} {signal}");
    // With the auxiliary ring decoupled no field reaches it.
    let csv = std::fs::read_to_string(ws.path("out").join("spectrum.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0.0")));
}

#[test]
fn jsa_design_and_single_ring_optimum() {
    let ws = Workspace::new();
    assert!(ws.run("jsa", None).status.success());
    let r = ws.json("purity.json");
    assert!(f(&r["purity"]) >= 0.99);
    assert!(f(&r["jsi_purity_gap"]) <= 1e-3);
    assert!((f(&r["purity"]) - f(&r["purity_trace"])).abs() < 1e-12);
    let probs: Vec<f64> = r["schmidt_probs"].as_array().unwrap().iter().map(f).collect();
    assert_eq!(probs.len(), 8);
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));

    let cfg = ws.config(r#"{"device": {"kappa2_sq": 0, "kappa_mzi_sq": 0}, "jsa_run": {"optimize_pump": true}}"#);
    assert!(ws.run("jsa", Some(&cfg)).status.success());
    let r = ws.json("purity.json");
    assert!((f(&r["purity"]) - 0.917).abs() <= 0.005, "{}", r["purity"]);
    // The decoupled device is its own brightness reference.
    assert!((f(&r["relative_brightness"]) - 1.0).abs() < 1e-12);
}

#[test]
fn one_cell_sweep_matches_jsa() {
    let ws = Workspace::new();
    let cfg = ws.config(
        r#"{"device": {"kappa2_sq": 0.3, "kappa_mzi_sq": 0.12},
            "sweep": {"kappa2_sq": {"values": [0.3]}, "kappa_mzi_sq": {"values": [0.12]}, "min_purity": 0}}"#,
    );
    assert!(ws.run("jsa", Some(&cfg)).status.success());
    let jsa = ws.json("purity.json");
    assert!(ws.run("sweep", Some(&cfg)).status.success());
    let sel = &ws.json("selection.json")["selected"];
    assert!((f(&sel["purity"]) - f(&jsa["purity"])).abs() < 1e-12);
    assert!((f(&sel["relative_brightness"]) - f(&jsa["relative_brightness"])).abs() < 1e-12);
}

#[test]
fn sweep_selection_respects_threshold() {
    let ws = Workspace::new();
    let cfg = ws.config(
        r#"{"sweep": {"kappa2_sq": {"min": 0.05, "max": 0.6, "points": 5, "spacing": "log"},
                      "kappa_mzi_sq": {"min": 0.05, "max": 0.6, "points": 5, "spacing": "log"},
                      "min_purity": 0.97}}"#,
    );
    let o = ws.run("sweep", Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let sel = ws.json("selection.json");
    let best = f(&sel["selected"]["relative_brightness"]);
    assert!(f(&sel["selected"]["purity"]) >= 0.97);

    let mut rdr = csv::Reader::from_path(ws.path("out").join("sweep.csv")).unwrap();
    let h = rdr.headers().unwrap().clone();
    assert_eq!(
        h.iter().collect::<Vec<_>>(),
        [
            "kappa2_sq",
            "kappa_mzi_sq",
            "purity",
            "relative_brightness",
            "pump_fwhm_sim_pm",
            "signal_fwhm_sim_pm",
            "error"
        ]
    );
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (p, b): (f64, f64) = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
        if p >= 0.97 {
            assert!(b <= best);
        }
        rows += 1;
    }
    assert_eq!(rows, 25);
}

#[test]
fn unreachable_purity_exits_3_after_writing() {
    let ws = Workspace::new();
    let cfg = ws
        .config(r#"{"sweep": {"kappa2_sq": {"values": [0.2]}, "kappa_mzi_sq": {"values": [0.2]}, "min_purity": 1.0}}"#);
    assert_eq!(ws.run("sweep", Some(&cfg)).status.code(), Some(3));
    assert!(ws.json("selection.json")["selected"].is_null());
}

#[test]
fn coupler_scan_empty_range_exits_2() {
    let ws = Workspace::new();
    let cfg = ws.config(r#"{"coupler_scan": {"L_s_um": {"values": []}}}"#);
    assert_eq!(ws.run("coupler-scan", Some(&cfg)).status.code(), Some(2));
    assert!(ws.run("coupler-scan", None).status.success());
    let tol = ws.json("coupler_tolerant.json");
    assert!(!tol["tolerant"].as_array().unwrap().is_empty());
}

#[test]
fn analyze_missing_column_exits_2() {
    let ws = Workspace::new();
    std::fs::write(ws.path("p.csv"), "P_mW,Cs_Hz,Ccc_Hz\n0.1,1,1\n").unwrap();
    let cfg = ws.config(r#"{"analysis": {"power_series_csv": "p.csv"}}"#);
    let o = ws.run("analyze", Some(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Ci_Hz"), "{}", stderr(&o));
}

fn write_truth_series(ws: &Workspace) {
    let powers: Vec<f64> = (1..=16).map(|i| 0.01 * i as f64).collect();
    let data = synthetic_power_series(&BrightnessTruth::default(), &powers, 1e-9, 0.0, None, 0).unwrap();
    write_power_series(&ws.path("p.csv"), &data).unwrap();
}

#[test]
fn analyze_round_trip_and_reference_budget() {
    let ws = Workspace::new();
    write_truth_series(&ws);
    let cfg = ws.config(r#"{"analysis": {"power_series_csv": "p.csv"}}"#);
    let o = ws.run("analyze", Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ws.json("analysis.json");
    let t = BrightnessTruth::default();
    let b = &r["brightness"];
    assert!((f(&b["gamma_eff_Hz_mW2"]) / t.gamma_eff - 1.0).abs() < 1e-6);
    assert!((f(&b["eta_s"]) / t.eta_s - 1.0).abs() < 1e-6);
    assert!((f(&b["eta_i"]) / t.eta_i - 1.0).abs() < 1e-6);
    assert!((f(&r["heralding"]["idler"]["eta_src"]) - 0.940).abs() < 0.03);
    assert!((f(&r["heralding"]["signal"]["eta_src"]) - 0.921).abs() < 0.03);
    assert!(r["car"]["knee_mW"].is_null());
    assert!(r["jsi"].is_null());
}

#[test]
fn analyze_zero_budget_passes_through() {
    let ws = Workspace::new();
    write_truth_series(&ws);
    let cfg = ws.config(r#"{"analysis": {"power_series_csv": "p.csv", "budget_signal": [], "budget_idler": []}}"#);
    assert!(ws.run("analyze", Some(&cfg)).status.success());
    let r = ws.json("analysis.json");
    assert!((f(&r["heralding"]["signal"]["eta_src"]) - f(&r["brightness"]["eta_s"])).abs() < 1e-15);
    assert!((f(&r["heralding"]["idler"]["eta_src"]) - f(&r["brightness"]["eta_i"])).abs() < 1e-15);
    assert!(LossBudget::default().entries.is_empty());
}
