use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::scheduler::{DualState, SlotResult};
use crate::{Error, Result};

/// One CSV row. Multipliers are post-update and in `1/rate_unit`; both are
/// zero, as is `s_star`, for the PF schedulers.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub slot: u64,
    /// `B(t)` at the start of the slot, J.
    pub battery: f64,
    pub consumed: f64,
    pub harvested: f64,
    pub outage: bool,
    pub dropped_voice: usize,
    pub converged: bool,
    pub s_star: f64,
    pub rates: Vec<f64>,
    /// `(1/(t+1))·Σ_{τ≤t} r(τ)`
    pub avg_rates: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Cumulative bits delivered.
    pub served_bits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub users: usize,
    pub slot_duration: f64,
    pub rows: Vec<SlotRow>,
    rate_sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_avg_rates: Vec<f64>,
    pub jain: f64,
    pub sum_avg_rate: f64,
    pub min_avg_rate: f64,
    pub max_avg_rate: f64,
    pub dropped_voice_total: usize,
    pub outage_slots: usize,
    pub unconverged_slots: usize,
    /// Averages over the trailing `tail_fraction` of slots.
    pub tail_battery: f64,
    pub tail_lambda: Vec<f64>,
    pub tail_mu: Vec<f64>,
}

/// `(Σr)²/(K·Σr²)`.
pub fn jain_index(rates: &[f64]) -> Result<f64> {
    if rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument("Jain index needs nonnegative rates".into()));
    }
    let sum: f64 = rates.iter().sum();
    if sum == 0.0 {
        return Err(Error::AllZeroRates);
    }
    let squares: f64 = rates.iter().map(|r| r * r).sum();
    Ok(sum * sum / (rates.len() as f64 * squares))
}

impl MetricsLog {
    pub fn new(users: usize, slot_duration: f64) -> Self {
        MetricsLog {
            users,
            slot_duration,
            rows: Vec::new(),
            rate_sums: vec![0.0; users],
        }
    }

    pub(crate) fn push(&mut self, result: &SlotResult, duals: Option<&DualState>) {
        let t = self.rows.len() as f64 + 1.0;
        for (s, r) in self.rate_sums.iter_mut().zip(&result.rates) {
            *s += r;
        }
        let avg_rates = self.rate_sums.iter().map(|s| s / t).collect();
        let previous = self.rows.last().map(|r| r.served_bits.clone());
        let served_bits = result
            .rates
            .iter()
            .enumerate()
            .map(|(k, r)| previous.as_ref().map_or(0.0, |p| p[k]) + r * self.slot_duration)
            .collect();
        let (lambda, mu) = match duals {
            Some(d) => (d.lambda.clone(), d.mu.clone()),
            None => (vec![0.0; self.users], vec![0.0; self.users]),
        };
        self.rows.push(SlotRow {
            slot: result.slot,
            battery: result.battery_before,
            consumed: result.consumed,
            harvested: result.harvested,
            outage: result.outage,
            dropped_voice: result.dropped_voice.len(),
            converged: result.data.converged,
            s_star: result.s_star,
            rates: result.rates.clone(),
            avg_rates,
            lambda,
            mu,
            served_bits,
        });
    }

    pub fn final_avg_rates(&self) -> &[f64] {
        self.rows.last().map_or(&[], |r| &r.avg_rates)
    }

    pub fn summary(&self, tail_fraction: f64) -> Result<RunSummary> {
        let Some(last) = self.rows.last() else {
            return Err(Error::MalformedMetrics("empty log".into()));
        };
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail fraction {tail_fraction} out of (0,1]"
            )));
        }
        let tail_len = ((self.rows.len() as f64 * tail_fraction).ceil() as usize).max(1);
        let tail = &self.rows[self.rows.len() - tail_len..];
        let n = tail.len() as f64;
        let mean_of = |f: &dyn Fn(&SlotRow) -> &Vec<f64>| -> Vec<f64> {
            (0..self.users)
                .map(|k| tail.iter().map(|r| f(r)[k]).sum::<f64>() / n)
                .collect()
        };
        let avg = last.avg_rates.clone();
        Ok(RunSummary {
            jain: jain_index(&avg).unwrap_or(0.0),
            sum_avg_rate: avg.iter().sum(),
            min_avg_rate: avg.iter().copied().fold(f64::INFINITY, f64::min),
            max_avg_rate: avg.iter().copied().fold(0.0, f64::max),
            dropped_voice_total: self.rows.iter().map(|r| r.dropped_voice).sum(),
            outage_slots: self.rows.iter().filter(|r| r.outage).count(),
            unconverged_slots: self.rows.iter().filter(|r| !r.converged).count(),
            tail_battery: tail.iter().map(|r| r.battery).sum::<f64>() / n,
            tail_lambda: mean_of(&|r| &r.lambda),
            tail_mu: mean_of(&|r| &r.mu),
            final_avg_rates: avg,
        })
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "slot",
            "battery",
            "consumed",
            "harvested",
            "outage",
            "dropped_voice",
            "converged",
            "s_star",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for prefix in ["rate", "avg_rate", "lambda", "mu", "served_bits"] {
            cols.extend((1..=self.users).map(|k| format!("{prefix}_{k}")));
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = vec![
                row.slot.to_string(),
                fmt_float(row.battery),
                fmt_float(row.consumed),
                fmt_float(row.harvested),
                u8::from(row.outage).to_string(),
                row.dropped_voice.to_string(),
                u8::from(row.converged).to_string(),
                fmt_float(row.s_star),
            ];
            for col in [&row.rates, &row.avg_rates, &row.lambda, &row.mu, &row.served_bits] {
                rec.extend(col.iter().map(|&v| fmt_float(v)));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Parses a CSV written by [`MetricsLog::write_csv`].
    pub fn from_csv<R: Read>(input: R, slot_duration: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let fixed = 8;
        if header.len() < fixed || !(header.len() - fixed).is_multiple_of(5) {
            return Err(Error::MalformedMetrics(format!(
                "unexpected column count {}",
                header.len()
            )));
        }
        let users = (header.len() - fixed) / 5;
        let mut log = MetricsLog::new(users, slot_duration);
        if log.header() != header {
            return Err(Error::MalformedMetrics(
                "header does not match the metrics schema".into(),
            ));
        }
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::MalformedMetrics(format!("row {}: bad field {}", line + 1, header[i])))
            };
            let flag = |i: usize| -> Result<bool> {
                match rec.get(i) {
                    Some("0") => Ok(false),
                    Some("1") => Ok(true),
                    _ => Err(Error::MalformedMetrics(format!(
                        "row {}: bad flag {}",
                        line + 1,
                        header[i]
                    ))),
                }
            };
            let block = |b: usize| -> Result<Vec<f64>> { (0..users).map(|k| field(fixed + b * users + k)).collect() };
            let row = SlotRow {
                slot: rec
                    .get(0)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::MalformedMetrics(format!("row {}: bad slot", line + 1)))?,
                battery: field(1)?,
                consumed: field(2)?,
                harvested: field(3)?,
                outage: flag(4)?,
                dropped_voice: field(5)? as usize,
                converged: flag(6)?,
                s_star: field(7)?,
                rates: block(0)?,
                avg_rates: block(1)?,
                lambda: block(2)?,
                mu: block(3)?,
                served_bits: block(4)?,
            };
            for (s, r) in log.rate_sums.iter_mut().zip(&row.rates) {
                *s += r;
            }
            log.rows.push(row);
        }
        Ok(log)
    }

    /// Largest relative gap between stored running averages and averages
    /// recomputed from the instantaneous rates.
    pub fn running_average_error(&self) -> f64 {
        let mut sums = vec![0.0; self.users];
        let mut worst: f64 = 0.0;
        for (t, row) in self.rows.iter().enumerate() {
            for k in 0..self.users {
                sums[k] += row.rates[k];
                let recomputed = sums[k] / (t + 1) as f64;
                let gap = (recomputed - row.avg_rates[k]).abs();
                let scale = recomputed.abs().max(row.avg_rates[k].abs());
                if scale > 0.0 {
                    worst = worst.max(gap / scale);
                }
            }
        }
        worst
    }
}

pub fn read_metrics_csv(path: &Path, slot_duration: f64) -> Result<MetricsLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    MetricsLog::from_csv(file, slot_duration)
}

/// Shortest decimal that parses back to the same value.
fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
