//! Aggregation of engine records into curves, time series and fits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dcc::DccState;
use crate::engine::{CbrSample, FrameRecord};
use crate::error::{Error, Result};
use crate::phy_mac::{VehicleId, Verdict};
use crate::units::{dbm_to_mw, mw_to_dbm};

pub const DEFAULT_BIN_WIDTH_M: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts(pub [u64; 4]);

impl VerdictCounts {
    pub fn add(&mut self, verdict: Verdict) {
        self.0[verdict.index()] += 1;
    }

    pub fn get(&self, verdict: Verdict) -> u64 {
        self.0[verdict.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn merge(&mut self, other: &VerdictCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdrBin {
    pub low_m: f64,
    pub high_m: f64,
    pub verdicts: VerdictCounts,
}

impl PdrBin {
    pub fn sent(&self) -> u64 {
        self.verdicts.total()
    }

    pub fn delivered(&self) -> u64 {
        self.verdicts.get(Verdict::Delivered)
    }

    /// `None` for an empty bin.
    pub fn pdr(&self) -> Option<f64> {
        let sent = self.sent();
        (sent > 0).then(|| self.delivered() as f64 / sent as f64)
    }
}

/// Delivery counts in `[low, high)` distance bins starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrCurve {
    bin_width_m: f64,
    bins: Vec<VerdictCounts>,
}

impl PdrCurve {
    pub fn new(bin_width_m: f64) -> Result<Self> {
        if !(bin_width_m > 0.0 && bin_width_m.is_finite()) {
            return Err(Error::config(format!("bin width must be positive, got {bin_width_m}")));
        }
        Ok(Self { bin_width_m, bins: Vec::new() })
    }

    pub fn bin_width_m(&self) -> f64 {
        self.bin_width_m
    }

    pub fn bin_index(&self, distance_m: f64) -> usize {
        (distance_m / self.bin_width_m).floor().max(0.0) as usize
    }

    pub fn add(&mut self, distance_m: f64, verdict: Verdict) {
        self.add_counts(distance_m, |c| c.add(verdict));
    }

    /// Count `sent` frames of which `delivered` arrived; undelivered ones are
    /// booked as below-sensitivity (the only loss visible in field logs).
    pub fn add_counts_at(&mut self, distance_m: f64, sent: u64, delivered: u64) {
        self.add_counts(distance_m, |c| {
            c.0[Verdict::Delivered.index()] += delivered;
            c.0[Verdict::BelowSensitivity.index()] += sent.saturating_sub(delivered);
        });
    }

    fn add_counts(&mut self, distance_m: f64, f: impl FnOnce(&mut VerdictCounts)) {
        let i = self.bin_index(distance_m);
        if self.bins.len() <= i {
            self.bins.resize(i + 1, VerdictCounts::default());
        }
        f(&mut self.bins[i]);
    }

    pub fn merge(&mut self, other: &PdrCurve) -> Result<()> {
        if other.bin_width_m != self.bin_width_m {
            return Err(Error::config("cannot merge curves with different bin widths"));
        }
        if self.bins.len() < other.bins.len() {
            self.bins.resize(other.bins.len(), VerdictCounts::default());
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
        Ok(())
    }

    /// Every bin from zero up to the last non-empty one.
    pub fn bins(&self) -> Vec<PdrBin> {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, v)| PdrBin {
                low_m: i as f64 * self.bin_width_m,
                high_m: (i + 1) as f64 * self.bin_width_m,
                verdicts: *v,
            })
            .collect()
    }

    pub fn bin_at(&self, distance_m: f64) -> PdrBin {
        let i = self.bin_index(distance_m);
        PdrBin {
            low_m: i as f64 * self.bin_width_m,
            high_m: (i + 1) as f64 * self.bin_width_m,
            verdicts: self.bins.get(i).copied().unwrap_or_default(),
        }
    }

    pub fn total_sent(&self) -> u64 {
        self.bins.iter().map(VerdictCounts::total).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_sent() == 0
    }
}

/// Bin `(distance, verdict)` records.
pub fn pdr_vs_distance<I>(records: I, bin_width_m: f64) -> Result<PdrCurve>
where
    I: IntoIterator<Item = (f64, Verdict)>,
{
    let mut curve = PdrCurve::new(bin_width_m)?;
    for (d, v) in records {
        curve.add(d, v);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub tx_id: VehicleId,
    pub rx_id: VehicleId,
    pub time_bucket_s: f64,
    pub verdicts: VerdictCounts,
    pub mean_distance_m: f64,
}

impl LinkStats {
    pub fn sent(&self) -> u64 {
        self.verdicts.total()
    }

    pub fn delivered(&self) -> u64 {
        self.verdicts.get(Verdict::Delivered)
    }

    pub fn pdr(&self) -> Option<f64> {
        let sent = self.sent();
        (sent > 0).then(|| self.delivered() as f64 / sent as f64)
    }
}

/// Per-link counts in `bucket_s` buckets of frame start time, ordered by
/// `(bucket, tx, rx)`.
pub fn link_stats(frames: &[FrameRecord], bucket_s: f64) -> Result<Vec<LinkStats>> {
    if !(bucket_s > 0.0) {
        return Err(Error::config("bucket length must be positive"));
    }
    let mut acc: BTreeMap<(i64, VehicleId, VehicleId), (VerdictCounts, f64)> = BTreeMap::new();
    for f in frames {
        let bucket = (f.start_s / bucket_s).floor() as i64;
        let e = acc.entry((bucket, f.tx_id, f.rx_id)).or_default();
        e.0.add(f.verdict);
        e.1 += f.distance_m;
    }
    Ok(acc
        .into_iter()
        .map(|((bucket, tx_id, rx_id), (verdicts, dsum))| LinkStats {
            tx_id,
            rx_id,
            time_bucket_s: bucket as f64 * bucket_s,
            mean_distance_m: dsum / verdicts.total() as f64,
            verdicts,
        })
        .collect())
}

/// `y = a·d^b` in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurveFit {
    pub a: f64,
    pub b: f64,
    pub sse: f64,
    /// Distance where the curve crosses the requested sensitivity.
    pub crossover_at_sensitivity_m: Option<f64>,
}

impl PowerCurveFit {
    pub fn predict_mw(&self, distance_m: f64) -> f64 {
        self.a * distance_m.powf(self.b)
    }

    pub fn predict_dbm(&self, distance_m: f64) -> f64 {
        mw_to_dbm(self.predict_mw(distance_m))
    }

    pub fn crossover_m(&self, sensitivity_dbm: f64) -> Option<f64> {
        if !(self.a > 0.0) || self.b == 0.0 {
            return None;
        }
        let d = (dbm_to_mw(sensitivity_dbm) / self.a).powf(1.0 / self.b);
        (d.is_finite() && d > 0.0).then_some(d)
    }
}

/// Least-squares power-law fit in the linear power domain.
///
/// For a fixed exponent the optimal coefficient is closed form, so only
/// the exponent is searched: a grid around the log–log regression estimate
/// followed by golden-section refinement.
pub fn fit_power_curve(points: &[(f64, f64)], sensitivity_dbm: f64) -> Result<PowerCurveFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(d, y)| !(d > 0.0 && d.is_finite() && y.is_finite())) {
        return Err(Error::Fit("distances must be positive and powers finite".into()));
    }
    let first = points[0].0;
    if points.iter().all(|&(d, _)| d == first) {
        return Err(Error::Fit("need at least 2 distinct distances".into()));
    }
    let b0 = loglog_slope(points).unwrap_or(-2.0);
    let sse_at = |b: f64| sse_for_exponent(points, b).1;

    const SPAN: f64 = 6.0;
    const STEPS: usize = 600;
    let step = 2.0 * SPAN / STEPS as f64;
    let grid = (0..=STEPS).map(|i| b0 - SPAN + i as f64 * step);
    let (best_b, _) = grid
        .map(|b| (b, sse_at(b)))
        .fold((b0, f64::INFINITY), |acc, (b, s)| if s < acc.1 { (b, s) } else { acc });
    let refined = golden_section(sse_at, best_b - step, best_b + step, 1e-13);
    let b = [b0, best_b, refined]
        .into_iter()
        .min_by(|x, y| sse_at(*x).total_cmp(&sse_at(*y)))
        .unwrap_or(refined);
    let (a, sse) = sse_for_exponent(points, b);
    let mut fit = PowerCurveFit { a, b, sse, crossover_at_sensitivity_m: None };
    fit.crossover_at_sensitivity_m = fit.crossover_m(sensitivity_dbm);
    Ok(fit)
}

/// Same fit with powers given in dBm.
pub fn fit_power_curve_dbm(points_dbm: &[(f64, f64)], sensitivity_dbm: f64) -> Result<PowerCurveFit> {
    let mw: Vec<(f64, f64)> = points_dbm.iter().map(|&(d, p)| (d, dbm_to_mw(p))).collect();
    fit_power_curve(&mw, sensitivity_dbm)
}

fn sse_for_exponent(points: &[(f64, f64)], b: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, y) in points {
        let x = d.powf(b);
        num += y * x;
        den += x * x;
    }
    let a = if den > 0.0 { num / den } else { 0.0 };
    let sse = points.iter().map(|&(d, y)| (y - a * d.powf(b)).powi(2)).sum();
    (a, sse)
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 > 0.0).map(|&(d, y)| (d.ln(), y.ln())).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Time- and vehicle-averaged CBR of samples taken at or after
/// `discard_first_s`, optionally restricted to `vehicles`.
pub fn ambient_cbr(samples: &[CbrSample], discard_first_s: f64, vehicles: Option<&[VehicleId]>) -> Option<f64> {
    let keep = |s: &&CbrSample| {
        s.time_s >= discard_first_s && vehicles.map_or(true, |v| v.contains(&s.vehicle_id))
    };
    let (n, sum) = samples.iter().filter(keep).fold((0usize, 0.0), |(n, sum), s| (n + 1, sum + s.cbr));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientCbr {
    pub value: f64,
    pub mean_cbr: Option<f64>,
}

/// Mean CBR per swept value.
pub fn ambient_cbr_summary<'a, I>(groups: I, discard_first_s: f64) -> Vec<AmbientCbr>
where
    I: IntoIterator<Item = (f64, &'a [CbrSample])>,
{
    groups
        .into_iter()
        .map(|(value, samples)| AmbientCbr { value, mean_cbr: ambient_cbr(samples, discard_first_s, None) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    pub state: DccState,
    pub start_s: f64,
    pub end_s: f64,
    /// The observation ended while the vehicle was still in this state.
    pub truncated: bool,
}

impl StateInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Run-length encode one vehicle's states over the sampled window.
pub fn state_timeline(samples: &[CbrSample], vehicle_id: VehicleId) -> Vec<StateInterval> {
    let mut out: Vec<StateInterval> = Vec::new();
    let mut last_t = None;
    for s in samples.iter().filter(|s| s.vehicle_id == vehicle_id) {
        match out.last_mut() {
            Some(cur) if cur.state == s.state => cur.end_s = s.time_s,
            Some(cur) => {
                cur.end_s = s.time_s;
                out.push(StateInterval { state: s.state, start_s: s.time_s, end_s: s.time_s, truncated: false });
            }
            None => out.push(StateInterval { state: s.state, start_s: s.time_s, end_s: s.time_s, truncated: false }),
        }
        last_t = Some(s.time_s);
    }
    if let (Some(last), Some(_)) = (out.last_mut(), last_t) {
        last.truncated = true;
    }
    out
}

/// Intervals during which both timelines are in `state`.
pub fn co_state_intervals(a: &[StateInterval], b: &[StateInterval], state: DccState) -> Vec<(f64, f64)> {
    let pick = |t: &[StateInterval]| -> Vec<(f64, f64)> {
        t.iter().filter(|i| i.state == state).map(|i| (i.start_s, i.end_s)).collect()
    };
    let (xa, xb) = (pick(a), pick(b));
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < xa.len() && j < xb.len() {
        let lo = xa[i].0.max(xb[j].0);
        let hi = xa[i].1.min(xb[j].1);
        if hi > lo {
            out.push((lo, hi));
        }
        if xa[i].1 < xb[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NA".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_sig6)
}

pub fn write_pdr_curve_csv<W: Write>(mut w: W, curve: &PdrCurve) -> Result<()> {
    writeln!(w, "bin_low_m,bin_high_m,sent,delivered,pdr")?;
    for b in curve.bins() {
        writeln!(w, "{},{},{},{},{}", fmt_sig6(b.low_m), fmt_sig6(b.high_m), b.sent(), b.delivered(), fmt_opt(b.pdr()))?;
    }
    Ok(())
}

pub fn write_cbr_csv<W: Write>(mut w: W, samples: &[CbrSample]) -> Result<()> {
    writeln!(w, "time_s,vehicle_id,cbr,state")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", fmt_sig6(s.time_s), s.vehicle_id, fmt_sig6(s.cbr), s.state)?;
    }
    Ok(())
}

pub fn write_link_pdr_csv<W: Write>(mut w: W, stats: &[LinkStats]) -> Result<()> {
    writeln!(w, "time_s,tx_id,rx_id,distance_m,sent,delivered,pdr")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_sig6(s.time_bucket_s),
            s.tx_id,
            s.rx_id,
            fmt_sig6(s.mean_distance_m),
            s.sent(),
            s.delivered(),
            fmt_opt(s.pdr())
        )?;
    }
    Ok(())
}

pub fn write_fit_csv<W: Write>(mut w: W, fit: &PowerCurveFit) -> Result<()> {
    writeln!(w, "a,b,sse,crossover_m")?;
    writeln!(w, "{},{},{},{}", fmt_sig6(fit.a), fmt_sig6(fit.b), fmt_sig6(fit.sse), fmt_opt(fit.crossover_at_sensitivity_m))?;
    Ok(())
}
