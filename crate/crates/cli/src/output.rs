//! Output layout, table schemas, and plot-script emission.
//!
//! Every table goes through the deterministic CSV writer in the engine's
//! `io` module, so reruns with identical inputs produce byte-identical
//! files. Plot scripts are standalone gnuplot text referencing the CSVs by
//! relative path.

use std::fs;
use std::path::{Path, PathBuf};

use cavidyn::efactor::TdpesFrame;
use cavidyn::io::{atomic_write, write_csv};
use cavidyn::propagator::ObservableSeries;
use cavidyn::Result;

/// `step_00001234.bin` — snapshot file name for a step index.
pub fn snapshot_file_name(step: usize) -> String {
    format!("step_{step:08}.bin")
}

/// `t3.39fs` — file-name tag for a time in fs (two decimals).
pub fn time_tag(t_fs: f64) -> String {
    format!("t{t_fs:.2}fs")
}

/// Create (if needed) and return `out_dir/<label>`.
pub fn run_dir(out_dir: &Path, label: &str) -> Result<PathBuf> {
    let dir = out_dir.join(label);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Write an observable time series.
///
/// Columns: `time_fs, time_au, norm, energy_au, electron_pos, nuclear_pos`
/// then `mean_photons` (in-cavity runs only) and `pop_0..pop_{k-1}`.
pub fn write_observables(path: &Path, series: &ObservableSeries, with_photons: bool) -> Result<()> {
    let n_pop = series.records.first().map_or(0, |r| r.bo_populations.len());
    let mut header: Vec<String> = ["time_fs", "time_au", "norm", "energy_au", "electron_pos", "nuclear_pos"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_photons {
        header.push("mean_photons".to_string());
    }
    for i in 0..n_pop {
        header.push(format!("pop_{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = series
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.time_fs(),
                r.time_au,
                r.norm,
                r.energy,
                r.electron_position,
                r.nuclear_position,
            ];
            if with_photons {
                row.push(r.mean_photons.unwrap_or(f64::NAN));
            }
            row.extend(&r.bo_populations);
            row
        })
        .collect();
    write_csv(path, &header_refs, &rows)
}

/// Columns of a potential-surface frame table (one row per nuclear grid
/// point). `phase` is the nuclear-phase `S(R)`; `mask` is 1 where the
/// density is high enough to invert and 0 elsewhere (masked columns are 0
/// there).
pub const FRAME_COLUMNS: [&str; 11] = [
    "r_nuc",
    "density",
    "phase",
    "eps_wpol",
    "eps_gd",
    "eps_kin",
    "eps_total",
    "force_wpol",
    "force_gd",
    "force_total",
    "mask",
];

/// Rows of the frame table for one extracted frame; optionally append the
/// first `n_weights` squared surface-projection columns `w_0..`.
pub fn frame_rows(frame: &TdpesFrame, n_weights: usize) -> Vec<Vec<f64>> {
    let rec = &frame.record;
    let points = rec.grid.points();
    let n_states = frame.polaritonic_weights.ncols();
    let k = n_weights.min(n_states);
    points
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut row = vec![
                x,
                frame.nuclear.density[j],
                frame.nuclear.phase[j],
                rec.eps_wpol[j],
                rec.eps_gd[j],
                rec.eps_kin[j],
                rec.eps_total[j],
                rec.force_wpol[j],
                rec.force_gd[j],
                rec.force_total[j],
                if rec.mask.valid[j] { 1.0 } else { 0.0 },
            ];
            for s in 0..k {
                row.push(frame.polaritonic_weights[[j, s]]);
            }
            row
        })
        .collect()
}

/// Write one frame table; `n_weights > 0` appends surface-projection columns.
pub fn write_frame_csv(path: &Path, frame: &TdpesFrame, n_weights: usize) -> Result<()> {
    let mut header: Vec<String> = FRAME_COLUMNS.iter().map(|s| s.to_string()).collect();
    let k = n_weights.min(frame.polaritonic_weights.ncols());
    for s in 0..k {
        header.push(format!("w_{s}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header_refs, &frame_rows(frame, k))
}

/// Per-frame diagnostics index.
///
/// Columns: frame number, timestamps, the time-stencil adequacy ratio,
/// dual-route agreement of the surface-projected potential, the
/// core-density gauge residual, partial-norm and reconstruction errors, and
/// whether the density mask was fragmented (0/1).
pub fn write_frame_index(path: &Path, frames: &[TdpesFrame]) -> Result<()> {
    let header = [
        "frame",
        "time_au",
        "time_fs",
        "stencil_ratio",
        "route_gap",
        "gauge_residual",
        "partial_norm_err",
        "reconstruction_err",
        "fragmented",
    ];
    let rows: Vec<Vec<f64>> = frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            vec![
                k as f64,
                f.nuclear.time_au,
                f.nuclear.time_au / cavidyn::AU_PER_FS,
                f.stencil_ratio,
                f.wpol_route_gap,
                f.gauge_residual_max,
                f.partial_norm_max_err,
                f.reconstruction_max_err,
                if f.fragmented { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Emit a standalone gnuplot script (plain text, atomic write).
pub fn write_plot_script(path: &Path, script: &str) -> Result<()> {
    atomic_write(path, script.as_bytes())
}

/// Script plotting static surfaces: adiabatic (dashed) under hybrid
/// light–matter surfaces (solid).
pub fn surfaces_plot_script(n_bo: usize, n_pol: usize) -> String {
    let mut s = String::from(
        "# Static surfaces: adiabatic electronic (dashed) and hybrid light-matter (solid).\n\
         # Run:  gnuplot plot_surfaces.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 'surfaces.png'\n\
         set xlabel 'R (a.u.)'\n\
         set ylabel 'energy (a.u.)'\n\
         set key outside\n\
         plot \\\n",
    );
    for i in 0..n_bo {
        s.push_str(&format!(
            "  'bo_surfaces.csv' using 1:{} with lines dashtype 2 lw 1.5 title 'BO {i}', \\\n",
            i + 2
        ));
    }
    for k in 0..n_pol {
        let sep = if k + 1 == n_pol { "\n" } else { ", \\\n" };
        s.push_str(&format!(
            "  'polaritonic_surfaces.csv' using 1:{} with lines lw 1.5 title 'surface {k}'{sep}",
            k + 2
        ));
    }
    s
}

/// Script plotting one dipole/population observable from each run of a batch.
pub fn observables_plot_script(labels: &[String]) -> String {
    let mut s = String::from(
        "# Mean nuclear position of each scenario against time.\n\
         # Run:  gnuplot plot_observables.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 'nuclear_position.png'\n\
         set xlabel 'time (fs)'\n\
         set ylabel '<R> (a.u.)'\n\
         set key left bottom\n\
         plot \\\n",
    );
    for (k, label) in labels.iter().enumerate() {
        let sep = if k + 1 == labels.len() { "\n" } else { ", \\\n" };
        s.push_str(&format!(
            "  '{label}/observables.csv' using 1:6 with lines lw 2 title '{label}'{sep}"
        ));
    }
    s
}

/// Script plotting extracted potential-surface snapshots with the density.
pub fn tdpes_plot_script(analysis_tags: &[String]) -> String {
    let mut s = String::from(
        "# Extracted potential surface and nuclear density at the analysis times.\n\
         # Run:  gnuplot plot_tdpes.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 1200,800\n\
         set output 'tdpes.png'\n\
         set xlabel 'R (a.u.)'\n",
    );
    let n = analysis_tags.len().max(1);
    let cols = n.min(3);
    let rows = n.div_ceil(cols);
    s.push_str(&format!("set multiplot layout {rows},{cols}\n"));
    for tag in analysis_tags {
        s.push_str(&format!(
            "set title '{tag}'\n\
             plot 'tdpes_{tag}.csv' using 1:($11 > 0.5 ? $7 : 1/0) with lines lw 2 title 'total', \\\n\
             \x20    'tdpes_{tag}.csv' using 1:($11 > 0.5 ? $4 : 1/0) with lines lw 1 title 'projected', \\\n\
             \x20    'tdpes_{tag}.csv' using 1:2 with lines lw 1 title 'density'\n"
        ));
    }
    s.push_str("unset multiplot\n");
    s
}

/// Script comparing exact density with the trajectory histograms.
pub fn qcl_plot_script(tags: &[String], has_full: bool, has_wpol: bool) -> String {
    let mut s = String::from(
        "# Exact nuclear density against quasiclassical densities.\n\
         # Run:  gnuplot plot_qcl.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 1200,800\n\
         set output 'qcl.png'\n\
         set xlabel 'R (a.u.)'\n\
         set ylabel 'density'\n",
    );
    let n = tags.len().max(1);
    let cols = n.min(3);
    let rows = n.div_ceil(cols);
    s.push_str(&format!("set multiplot layout {rows},{cols}\n"));
    for tag in tags {
        s.push_str(&format!("set title '{tag}'\nplot 'qcl_{tag}.csv' using 1:2 with lines lw 2 title 'exact'"));
        let mut col = 3;
        if has_full {
            s.push_str(&format!(", \\\n     'qcl_{tag}.csv' using 1:{col} with lines lw 1 title 'full surface'"));
            col += 1;
        }
        if has_wpol {
            s.push_str(&format!(
                ", \\\n     'qcl_{tag}.csv' using 1:{col} with lines lw 1 title 'projected surface'"
            ));
        }
        s.push('\n');
    }
    s.push_str("unset multiplot\n");
    s
}
