//! CSV output and run summaries.

use std::io::Write;

use crate::error::Result;
use crate::harness::{AggregatedSeries, RunResult};

pub const CSV_HEADER: &str =
    "scenario,algo,rep,seed,t,cum_regret,cum_real_clicks,cum_fake_rounds,cum_total_clicks";

/// Formats like C's `%.9g`.
pub fn format_g9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= PRECISION {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One row per checkpoint of every run. Runs must already be sorted by
/// `(algo, rep)`.
pub fn write_csv<W: Write>(out: &mut W, scenario: &str, runs: &[RunResult]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for run in runs {
        let trace = &run.trace;
        for k in 0..trace.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                scenario,
                run.algo,
                run.rep,
                run.seed,
                trace.checkpoints[k],
                format_g9(trace.cum_regret[k]),
                trace.cum_real_clicks[k],
                trace.cum_fake_rounds[k],
                trace.cum_total_clicks[k],
            )?;
        }
    }
    Ok(())
}

/// Final mean regret with its 95% band, one line per algorithm.
pub fn summary_lines(series: &[AggregatedSeries]) -> Vec<String> {
    series
        .iter()
        .filter_map(|s| {
            let k = s.checkpoints.len().checked_sub(1)?;
            Some(format!(
                "{:<12} t={:<9} mean regret {:>12}  band [{}, {}]",
                s.algo,
                s.checkpoints[k],
                format_g9(s.mean[k]),
                format_g9(s.lower[k]),
                format_g9(s.upper[k]),
            ))
        })
        .collect()
}
