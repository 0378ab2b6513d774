//! File output. Every file is written to a temporary sibling and renamed
//! into place, so a failed command never leaves a partial file.

use std::io::Write;
use std::path::Path;

use cuspwave::background::BackgroundParams;
use cuspwave::energies::EnergyReport;
use cuspwave::evolve::FieldState;
use cuspwave::grid::Grid;
use serde::Serialize;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Time series with the fixed column order of [`EnergyReport::COLUMNS`].
pub fn reports_csv(reports: &[EnergyReport]) -> String {
    let mut s = EnergyReport::csv_header();
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn constraints_csv(reports: &[EnergyReport]) -> String {
    let mut s = String::from("t,res_momentum,res_hamiltonian,curl_residual\n");
    for r in reports {
        let row = [r.t, r.res_momentum, r.res_hamiltonian, r.curl_residual].map(fmt);
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Long-format snapshots: full `W, q` and their perturbations per point.
pub fn snapshots_csv(bg: &BackgroundParams, grid: &Grid, snapshots: &[FieldState]) -> String {
    let mut s = String::from("t,x,W,q,dW,dq\n");
    for snap in snapshots {
        for (i, &x) in grid.x().iter().enumerate() {
            let (dw, dq) = (snap.dw[i], snap.dq[i]);
            let row = [snap.t, x, bg.w(x) + dw, bg.q0 + dq, dw, dq].map(fmt);
            s.push_str(&row.join(","));
            s.push('\n');
        }
    }
    s
}

pub fn json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
