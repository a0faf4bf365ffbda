//! Writes a synthetic power series and a noisy JSI for trying `analyze`.
//!
//!     cargo run --example synth_data -- configs/data

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pairsource::analysis::jsi::MeasuredJsi;
use pairsource::io::{write_jsi, write_power_series};
use pairsource::molecule::MoleculeParams;
use pairsource::sfwm::{JsaSettings, PumpPulse};
use pairsource::sim::{add_multiplicative_noise, synthetic_jsi, synthetic_power_series, BrightnessTruth, TpaModel};

fn main() -> pairsource::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir).map_err(|source| pairsource::Error::Io {
        path: dir.clone(),
        source,
    })?;

    let powers: Vec<f64> = (1..=20).map(|i| 0.01 * i as f64).collect();
    let tpa = TpaModel {
        knee_mw: 0.17,
        strength_per_mw: 4.0,
    };
    let series = synthetic_power_series(&BrightnessTruth::default(), &powers, 1e-9, 0.01, Some(tpa), 11)?;
    write_power_series(&dir.join("power_series.csv"), &series)?;

    let clean = synthetic_jsi(
        &MoleculeParams::designed(),
        &PumpPulse::default(),
        &JsaSettings::default(),
        60.0,
        1.0,
        0.5,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let intensity = add_multiplicative_noise(&clean.intensity, 0.03, &mut rng);
    let noisy = MeasuredJsi::new(clean.signal_nm, clean.idler_nm, intensity)?;
    write_jsi(&dir.join("jsi.csv"), &noisy)?;
    println!("{}", dir.display());
    Ok(())
}
