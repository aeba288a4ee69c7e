//! CSV emission for runs, sweeps, and grids.
//!
//! Per-segment CSV columns, in order:
//! `segment_index, t_end, indicator_bits, update_interval, mode, fp_ratio,
//! fn_ratio, bw_attempted_per_req, bw_delivered_per_req, hit_ratio,
//! avg_cost_segment, dropped_updates`. Floats carry 6 significant digits
//! with a `.` decimal separator; lines end with `\n`.

use crate::sim::{GridSearchOutcome, RunResult, Scenario, SegmentRow};
use std::io::{self, Write};

/// Format with 6 significant digits in plain decimal notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if magnitude >= 6 {
        // Integral part already carries 6+ digits; round away the rest.
        let scale = 10f64.powi(magnitude - 5);
        return format!("{:.0}", (x / scale).round() * scale);
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const SEGMENT_HEADER: &str = "segment_index,t_end,indicator_bits,update_interval,mode,\
fp_ratio,fn_ratio,bw_attempted_per_req,bw_delivered_per_req,hit_ratio,avg_cost_segment,\
dropped_updates";

fn mode_label(row: &SegmentRow) -> String {
    match row.mode {
        Some(mode) => mode.index().to_string(),
        None => "-".to_string(),
    }
}

pub fn write_segment_row<W: Write>(out: &mut W, row: &SegmentRow) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        row.index,
        row.t_end,
        row.indicator_bits,
        row.update_interval,
        mode_label(row),
        sig6(row.fp_ratio()),
        sig6(row.fn_ratio()),
        sig6(row.bw_attempted()),
        sig6(row.bw_delivered()),
        sig6(row.hit_ratio()),
        sig6(row.avg_cost()),
        row.dropped_updates,
    )
}

pub fn write_segments<W: Write>(out: &mut W, result: &RunResult) -> io::Result<()> {
    writeln!(out, "{SEGMENT_HEADER}")?;
    for row in &result.segments {
        write_segment_row(out, row)?;
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str = "policy,cache,budget,miss_penalty,alpha,u_min,i_min_bits,\
i_max_bits,seed,workload,adv,requests,hit_ratio,fp_ratio,fn_ratio,avg_cost_total";

/// Quote a field whose value may contain commas (RFC 4180 style).
fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// One summary row per run, echoing the effective configuration.
pub fn write_summary_row<W: Write>(
    out: &mut W,
    scenario: &Scenario,
    adv_label: &str,
    result: &RunResult,
) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        scenario.policy.name(),
        scenario.capacity,
        scenario.budget,
        scenario.miss_penalty,
        scenario.alpha,
        scenario.min_interval,
        scenario.min_bits,
        scenario.max_bits,
        scenario.seed,
        csv_field(&scenario.workload.to_string()),
        csv_field(adv_label),
        result.requests,
        sig6(result.hit_ratio()),
        sig6(result.fp as f64 / result.requests as f64),
        sig6(result.fn_ as f64 / result.requests as f64),
        sig6(result.avg_cost),
    )
}

pub const GRID_HEADER: &str =
    "indicator_bits,update_interval,feasible,avg_cost,hit_ratio,attempted_bits,dropped_updates";

pub fn write_grid<W: Write>(out: &mut W, grid: &GridSearchOutcome) -> io::Result<()> {
    writeln!(out, "{GRID_HEADER}")?;
    for cell in &grid.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell.config.indicator_bits,
            cell.config.update_interval,
            cell.feasible,
            sig6(cell.avg_cost),
            sig6(cell.hit_ratio),
            cell.attempted_bits,
            cell.dropped_updates,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_examples() {
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(2.5), "2.50000");
        assert_eq!(sig6(0.0743521), "0.0743521");
        assert_eq!(sig6(0.30325117), "0.303251");
        assert_eq!(sig6(163840.0), "163840");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(12345678.0), "12345700");
        assert_eq!(sig6(-0.001234567), "-0.00123457");
    }

    #[test]
    fn segment_csv_shape() {
        let row = SegmentRow {
            index: 3,
            t_end: 655360,
            indicator_bits: 40960,
            update_interval: 10,
            mode: Some(crate::advertiser::Mode::Delta),
            requests: 163840,
            fp_count: 1638,
            fn_count: 164,
            hits: 81920,
            bits_attempted: 3276800,
            bits_delivered: 3276800,
            cost_sum: 327680,
            dropped_updates: 0,
            full_update_sent: false,
        };
        let mut buf = Vec::new();
        write_segment_row(&mut buf, &row).unwrap();
        let line = String::from_utf8(buf).unwrap();
        // fp_ratio = 1638 / 163840 = 0.00999756 to 6 significant digits.
        assert_eq!(
            line,
            "3,655360,40960,10,2,0.00999756,0.00100098,20.0000,20.0000,0.500000,2.00000,0\n"
        );
        assert_eq!(line.trim_end().split(',').count(), 12);
        assert_eq!(SEGMENT_HEADER.split(',').count(), 12);
    }
}
