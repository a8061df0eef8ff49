//! Replicated runs, sweeps and their CSV artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dccsim_core::metrics::{
    fmt_sig6, link_stats, state_timeline, write_cbr_csv, write_link_pdr_csv, write_pdr_curve_csv, PdrCurve,
};
use dccsim_core::scenarios::sweep;
use dccsim_core::{run, RunOutput, SimConfig, Verdict};
use rayon::prelude::*;

use crate::config::{RunFile, SweepAxis};

/// Runs every replication; results come back ordered by seed whatever the
/// completion order.
pub fn run_replications(file: &RunFile) -> Result<Vec<RunOutput>> {
    let seeds: Vec<u64> = file.seeds().collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig { seed, ..file.sim.clone() };
            run(&cfg).with_context(|| format!("replication with seed {seed} failed"))
        })
        .collect()
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> dccsim_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Appends a per-replication CSV to a merged one with a leading seed column.
fn append_with_seed(merged: &mut Vec<u8>, seed: u64, csv: &[u8]) {
    let text = String::from_utf8_lossy(csv);
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if merged.is_empty() {
        merged.extend_from_slice(format!("seed,{header}\n").as_bytes());
    }
    for line in lines {
        merged.extend_from_slice(format!("{seed},{line}\n").as_bytes());
    }
}

fn state_intervals_csv(out: &RunOutput) -> Vec<u8> {
    let mut s = String::from("vehicle_id,state,start_s,end_s,truncated\n");
    for &id in &out.observed {
        for i in state_timeline(&out.cbr_samples, id) {
            s.push_str(&format!("{id},{},{},{},{}\n", i.state, fmt_sig6(i.start_s), fmt_sig6(i.end_s), i.truncated));
        }
    }
    s.into_bytes()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_sig6)
}

/// Writes the manifest, per-replication directories and merged CSVs.
pub fn write_run(dir: &Path, file: &RunFile, outputs: &[RunOutput]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut manifest = file.clone();
    manifest.output_dir = Some(dir.to_path_buf());
    create(&dir.join("manifest.toml"))?.write_all(manifest.to_manifest()?.as_bytes())?;

    let mut merged_cbr = Vec::new();
    let mut merged_links = Vec::new();
    let mut merged_states = Vec::new();
    let mut merged_curve = PdrCurve::new(file.sim.record.distance_bin_m)?;
    let mut summary = String::from(
        "seed,frames_sent,receptions_in_scope,ambient_cbr,delivered,below_sensitivity,sinr_failure,rx_busy_transmitting\n",
    );
    for out in outputs {
        let sub = dir.join(format!("seed_{}", out.seed));
        fs::create_dir_all(&sub)?;
        let cbr = to_bytes(|b| write_cbr_csv(b, &out.cbr_samples))?;
        let stats = link_stats(&out.frames, file.link_bucket_s)?;
        let links = to_bytes(|b| write_link_pdr_csv(b, &stats))?;
        let curve = to_bytes(|b| write_pdr_curve_csv(b, &out.pdr_curve))?;
        let states = state_intervals_csv(out);
        create(&sub.join("cbr_timeseries.csv"))?.write_all(&cbr)?;
        create(&sub.join("link_pdr.csv"))?.write_all(&links)?;
        create(&sub.join("pdr_vs_distance.csv"))?.write_all(&curve)?;
        create(&sub.join("state_intervals.csv"))?.write_all(&states)?;
        append_with_seed(&mut merged_cbr, out.seed, &cbr);
        append_with_seed(&mut merged_links, out.seed, &links);
        append_with_seed(&mut merged_states, out.seed, &states);
        merged_curve.merge(&out.pdr_curve)?;
        let v = &out.verdict_totals;
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            out.seed,
            out.frames_sent,
            out.receptions_in_scope,
            fmt_opt(out.ambient_cbr(file.sim.discard_first_s)),
            v.get(Verdict::Delivered),
            v.get(Verdict::BelowSensitivity),
            v.get(Verdict::SinrFailure),
            v.get(Verdict::RxBusyTransmitting),
        ));
    }
    create(&dir.join("cbr_timeseries.csv"))?.write_all(&merged_cbr)?;
    create(&dir.join("link_pdr.csv"))?.write_all(&merged_links)?;
    create(&dir.join("state_intervals.csv"))?.write_all(&merged_states)?;
    create(&dir.join("pdr_vs_distance.csv"))?.write_all(&to_bytes(|b| write_pdr_curve_csv(b, &merged_curve))?)?;
    create(&dir.join("summary.csv"))?.write_all(summary.as_bytes())?;
    Ok(())
}

/// One point of a (possibly multi-axis) sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub values: Vec<f64>,
    pub config: SimConfig,
}

/// Cartesian product of the axes, first axis outermost.
pub fn sweep_points(base: &SimConfig, axes: &[SweepAxis]) -> Result<Vec<SweepPoint>> {
    let mut points = vec![SweepPoint { values: Vec::new(), config: base.clone() }];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for (v, cfg) in sweep(&p.config, axis.parameter, &axis.values)? {
                let mut values = p.values.clone();
                values.push(v);
                next.push(SweepPoint { values, config: cfg });
            }
        }
        points = next;
    }
    Ok(points)
}

pub fn point_dir_name(axes: &[SweepAxis], values: &[f64]) -> String {
    axes.iter()
        .zip(values)
        .map(|(a, v)| format!("{}_{}", a.parameter.as_str(), fmt_sig6(*v)))
        .collect::<Vec<_>>()
        .join("__")
}

/// Runs every sweep point with the file's replications and writes one
/// run directory per point plus `summary.csv`.
pub fn run_sweep(dir: &Path, file: &RunFile, axes: &[SweepAxis]) -> Result<PathBuf> {
    let points = sweep_points(&file.sim, axes)?;
    let results: Vec<(SweepPoint, Vec<RunOutput>)> = points
        .into_par_iter()
        .map(|p| {
            let point_file = RunFile { sim: p.config.clone(), sweep: Vec::new(), ..file.clone() };
            let outs = run_replications(&point_file)?;
            Ok((p, outs))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut manifest = file.clone();
    manifest.output_dir = Some(dir.to_path_buf());
    manifest.sweep = axes.to_vec();
    create(&dir.join("manifest.toml"))?.write_all(manifest.to_manifest()?.as_bytes())?;

    let mut summary = String::new();
    for a in axes {
        summary.push_str(a.parameter.as_str());
        summary.push(',');
    }
    summary.push_str("mean_cbr,tx_id,rx_id,sent,delivered,pdr\n");
    for (point, outs) in &results {
        let point_file = RunFile { sim: point.config.clone(), sweep: Vec::new(), ..file.clone() };
        write_run(&dir.join(point_dir_name(axes, &point.values)), &point_file, outs)?;
        let prefix: String = point.values.iter().map(|v| format!("{},", fmt_sig6(*v))).collect();
        let cbrs: Vec<f64> = outs.iter().filter_map(|o| o.ambient_cbr(file.sim.discard_first_s)).collect();
        let mean_cbr = (!cbrs.is_empty()).then(|| cbrs.iter().sum::<f64>() / cbrs.len() as f64);
        let observed = outs.first().map(|o| o.observed.clone()).unwrap_or_default();
        let mut wrote = false;
        for &tx in &observed {
            for &rx in &observed {
                if tx == rx {
                    continue;
                }
                let (mut sent, mut delivered) = (0u64, 0u64);
                for o in outs {
                    for f in o.link_frames(tx, rx) {
                        sent += 1;
                        delivered += u64::from(f.verdict == Verdict::Delivered);
                    }
                }
                if sent == 0 {
                    continue;
                }
                let pdr = delivered as f64 / sent as f64;
                summary.push_str(&format!(
                    "{prefix}{},{tx},{rx},{sent},{delivered},{}\n",
                    fmt_opt(mean_cbr),
                    fmt_sig6(pdr)
                ));
                wrote = true;
            }
        }
        if !wrote {
            summary.push_str(&format!("{prefix}{},NA,NA,0,0,NA\n", fmt_opt(mean_cbr)));
        }
    }
    let path = dir.join("summary.csv");
    create(&path)?.write_all(summary.as_bytes())?;
    Ok(path)
}
