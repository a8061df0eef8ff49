//! Deterministic link budgets.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use dccsim_core::metrics::fmt_sig6;
use dccsim_core::propagation::{crossover_distance_m, rx_power_dbm, LinkBudget, RadioEnvironment};

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct LinkBudgetArgs {
    /// Transmit power in dBm.
    #[arg(long)]
    pub tx: f64,
    /// Antenna gain per end in dBi.
    #[arg(long, default_value_t = 0.0)]
    pub gain: f64,
    /// Receiver antenna gain in dBi; defaults to --gain.
    #[arg(long)]
    pub rx_gain: Option<f64>,
    #[arg(long, default_value_t = 5900.0)]
    pub frequency: f64,
    /// Receiver sensitivity in dBm.
    #[arg(long, default_value_t = -77.0)]
    pub sens: f64,
    #[arg(long, default_value_t = 1.5)]
    pub antenna_height: f64,
    /// Distances to tabulate; defaults to a grid up to --max-distance.
    #[arg(long, value_delimiter = ',')]
    pub distance: Vec<f64>,
    #[arg(long, default_value_t = 40.0)]
    pub max_distance: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Tabulate several per-end gains at once.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_missing_value = "0,3,5")]
    pub sweep_gain: Option<Vec<f64>>,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Three significant digits, the precision of a figure read.
pub fn sig3(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let decimals = (2 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn run(args: &LinkBudgetArgs) -> Result<()> {
    let env = RadioEnvironment {
        frequency_mhz: args.frequency,
        tx_antenna_height_m: args.antenna_height,
        rx_antenna_height_m: args.antenna_height,
        ..RadioEnvironment::default()
    };
    env.validate()?;
    let distances: Vec<f64> = if args.distance.is_empty() {
        anyhow::ensure!(args.step > 0.0 && args.max_distance > 0.0, "--step and --max-distance must be positive");
        let n = (args.max_distance / args.step).floor() as usize;
        (1..=n).map(|i| i as f64 * args.step).collect()
    } else {
        args.distance.clone()
    };
    let gains: Vec<(f64, f64)> = match &args.sweep_gain {
        Some(g) if !g.is_empty() => g.iter().map(|&g| (g, g)).collect(),
        _ => vec![(args.gain, args.rx_gain.unwrap_or(args.gain))],
    };

    let mut csv = String::from("tx_gain_dbi,rx_gain_dbi,distance_m,rx_power_dbm\n");
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{:>12}", "distance_m")?;
    for (gt, gr) in &gains {
        write!(stdout, " {:>16}", format!("rx_dbm@{gt}+{gr}dBi"))?;
    }
    writeln!(stdout)?;
    let mut rows = vec![Vec::new(); distances.len()];
    for &(gt, gr) in &gains {
        for (i, &d) in distances.iter().enumerate() {
            let budget = LinkBudget { tx_power_dbm: args.tx, tx_gain_dbi: gt, rx_gain_dbi: gr, distance_m: d };
            let p = rx_power_dbm(&budget, &env)?;
            rows[i].push(p);
            csv.push_str(&format!("{},{},{},{}\n", fmt_sig6(gt), fmt_sig6(gr), fmt_sig6(d), fmt_sig6(p)));
        }
    }
    for (d, row) in distances.iter().zip(&rows) {
        write!(stdout, "{:>12}", fmt_sig6(*d))?;
        for p in row {
            write!(stdout, " {:>16.2}", p)?;
        }
        writeln!(stdout)?;
    }
    for &(gt, gr) in &gains {
        let c = crossover_distance_m(args.tx, gt + gr, args.sens, &env)?;
        writeln!(stdout, "crossover at {} dBm with {gt}+{gr} dBi: {} m", fmt_sig6(args.sens), sig3(c))?;
    }
    if let Some(path) = &args.out {
        std::fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_significant_digits() {
        assert_eq!(sig3(9.0612), "9.06");
        assert_eq!(sig3(18.127), "18.1");
        assert_eq!(sig3(556.04), "556");
        assert_eq!(sig3(1234.5), "1234");
        assert_eq!(sig3(0.01234), "0.0123");
    }
}
