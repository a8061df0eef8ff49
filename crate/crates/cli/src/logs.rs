//! Field-log analysis and standalone curve fitting.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use dccsim_core::fieldlog::{match_and_tabulate, read_rx_log, read_tx_log, LogTable, RejectCounts};
use dccsim_core::metrics::{fit_power_curve_dbm, fmt_sig6, write_fit_csv, write_pdr_curve_csv, PowerCurveFit};
use serde::Deserialize;

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AnalyzeLogsArgs {
    /// Transmit-side log (time_s,seq,lat_deg,lon_deg).
    pub tx: PathBuf,
    /// Receive-side log (time_s,seq,rssi,lat_deg,lon_deg).
    pub rx: PathBuf,
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2.5)]
    pub bin_width: f64,
    /// Sensitivity at which the fitted curve's crossover is reported.
    #[arg(long, default_value_t = -77.0)]
    pub sens: f64,
    /// Receiver position for lost beacons when the rx log has no records.
    #[arg(long, num_args = 2, value_names = ["LAT", "LON"])]
    pub rx_position: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitCurveArgs {
    /// CSV with columns distance_m,rx_power_dbm.
    pub points: PathBuf,
    #[arg(long, default_value_t = -77.0)]
    pub sens: f64,
    #[arg(long, default_value = "fit.csv")]
    pub out: PathBuf,
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn report_rejects(r: &RejectCounts) {
    if r.total() > 0 {
        eprintln!(
            "rejected: malformed {}, rssi out of range {}, invalid coordinates {}, duplicate sequence {}, \
             unmatched rx {}, unlocated tx {}",
            r.malformed, r.rssi_out_of_range, r.invalid_coordinates, r.duplicate_sequence, r.unmatched_rx, r.unlocated_tx
        );
    }
}

/// `distance_m,sent,received,pdr_percent` over the bins that saw traffic.
pub fn pdr_table_csv(table: &LogTable) -> String {
    let mut s = String::from("distance_m,sent,received,pdr_percent\n");
    for b in table.curve.bins().iter().filter(|b| b.sent() > 0) {
        let pct = 100.0 * b.delivered() as f64 / b.sent() as f64;
        s.push_str(&format!("{},{},{},{pct:.1}\n", fmt_sig6(b.low_m), b.sent(), b.delivered()));
    }
    s
}

fn write_fit(path: &Path, fit: &PowerCurveFit) -> Result<()> {
    let mut buf = Vec::new();
    write_fit_csv(&mut buf, fit)?;
    fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))
}

fn print_fit(fit: &PowerCurveFit, sens: f64) {
    println!("fit: y = {} * d^{} mW, sse {}", fmt_sig6(fit.a), fmt_sig6(fit.b), fmt_sig6(fit.sse));
    match fit.crossover_at_sensitivity_m {
        Some(d) => println!("crossover at {} dBm: {} m", fmt_sig6(sens), fmt_sig6(d)),
        None => println!("crossover at {} dBm: none", fmt_sig6(sens)),
    }
}

pub fn analyze(args: &AnalyzeLogsArgs) -> Result<()> {
    let tx = read_tx_log(open(&args.tx)?)?;
    let rx = read_rx_log(open(&args.rx)?)?;
    if tx.records.is_empty() && rx.records.is_empty() {
        report_rejects(&tx.rejects);
        report_rejects(&rx.rejects);
        bail!("no valid rows in {} or {}", args.tx.display(), args.rx.display());
    }
    let fallback = args.rx_position.as_ref().map(|p| (p[0], p[1]));
    let mut table = match_and_tabulate(&tx.records, &rx.records, args.bin_width, fallback)?;
    table.add_parse_rejects(&tx.rejects);
    table.add_parse_rejects(&rx.rejects);
    report_rejects(&table.rejects);

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut curve = Vec::new();
    write_pdr_curve_csv(&mut curve, &table.curve)?;
    fs::write(args.out.join("pdr_vs_distance.csv"), curve)?;
    fs::write(args.out.join("pdr_table.csv"), pdr_table_csv(&table))?;
    let mut scatter = String::from("distance_m,rx_power_dbm\n");
    for (d, p) in &table.scatter {
        scatter.push_str(&format!("{},{}\n", fmt_sig6(*d), fmt_sig6(*p)));
    }
    fs::write(args.out.join("scatter.csv"), scatter)?;
    println!("sent {}, received {}", table.sent, table.received);
    match fit_power_curve_dbm(&table.scatter, args.sens) {
        Ok(fit) => {
            write_fit(&args.out.join("fit.csv"), &fit)?;
            print_fit(&fit, args.sens);
        }
        Err(e) => eprintln!("no power-curve fit: {e}"),
    }
    Ok(())
}

#[derive(Deserialize)]
struct Point {
    distance_m: f64,
    rx_power_dbm: f64,
}

pub fn fit_curve(args: &FitCurveArgs) -> Result<()> {
    let mut reader = csv::Reader::from_reader(open(&args.points)?);
    let points = reader
        .deserialize::<Point>()
        .map(|r| r.map(|p| (p.distance_m, p.rx_power_dbm)))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("malformed point in {}", args.points.display()))?;
    let fit = fit_power_curve_dbm(&points, args.sens)?;
    write_fit(&args.out, &fit)?;
    print_fit(&fit, args.sens);
    Ok(())
}
