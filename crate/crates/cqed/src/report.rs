//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting so
//! output bytes depend only on the values; NaN is written as `nan`.

use std::io::Write;

use cqed_core::calibration::GateTimeRow;
use cqed_core::dynamics::CurveRow;
use cqed_core::rb::{DecayFit, LeakageFit, RbOutcome};
use cqed_core::spectrum::SweepRow;
use serde::Serialize;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::from("nan")
    } else if x.is_infinite() {
        String::from(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| String::from("nan"), num)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow], with_reference: bool) -> csv::Result<()> {
    let mut out = writer(w);
    let mut header = vec![
        "mean_freq_ghz",
        "detuning_mhz",
        "zz_khz",
        "jeff_mhz",
        "ratio",
    ];
    if with_reference {
        header.extend(["reference_zz_khz", "reference_j_mhz"]);
    }
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            num(r.mean_freq_ghz),
            num(r.detuning_mhz),
            num(r.zz_khz),
            num(r.jeff_mhz),
            num(r.ratio),
        ];
        if with_reference {
            rec.push(opt(r.reference_zz_khz));
            rec.push(opt(r.reference_j_mhz));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(w: W, rows: &[CurveRow]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record([
        "omega_mhz",
        "zx_mhz",
        "zy_mhz",
        "zi_mhz",
        "ix_mhz",
        "iy_mhz",
        "iz_mhz",
    ])?;
    for r in rows {
        let c = &r.rates;
        out.write_record([r.omega_mhz, c.zx, c.zy, c.zi, c.ix, c.iy, c.iz].map(num))?;
    }
    out.flush()?;
    Ok(())
}

/// `(omega_mhz, zi_mhz)` pairs.
pub fn write_stark<W: Write>(w: W, rows: &[(f64, f64)]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["omega_mhz", "zi_mhz"])?;
    for &(o, zi) in rows {
        out.write_record([num(o), num(zi)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rb<W: Write>(w: W, outcomes: &[RbOutcome]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["variant", "length", "mean", "stderr", "samples", "seed"])?;
    for o in outcomes {
        let label = o.label();
        for p in &o.points {
            out.write_record([
                label.clone(),
                p.length.to_string(),
                num(p.mean),
                num(p.stderr),
                p.samples.to_string(),
                o.seed.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_gate_times<W: Write>(w: W, rows: &[GateTimeRow]) -> csv::Result<()> {
    let mut out = writer(w);
    out.write_record(["gate_time_ns", "epg_upper", "coherence_limit_epg"])?;
    for r in rows {
        out.write_record([
            num(r.gate_time_ns),
            opt(r.epg_upper),
            num(r.coherence_limit_epg),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Fit summary written next to the RB CSV.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FitEntry {
    Decay { label: String, fit: DecayFit },
    Leakage { label: String, fit: LeakageFit },
    Failed { label: String, error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RbFitReport {
    pub fits: Vec<FitEntry>,
    /// Error per CNOT from the CNOT-interleaved decay, `[value, uncertainty]`.
    pub interleaved_epg: Option<[f64; 2]>,
    /// EPC divided by the CNOTs per Clifford.
    pub epg_upper: Option<f64>,
    pub cnot_per_clifford: f64,
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(-2.0), "-2");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn sweep_header_and_nan() {
        let row = SweepRow {
            mean_freq_ghz: 5.0,
            detuning_mhz: 60.0,
            zz_khz: 0.0,
            jeff_mhz: 1.5,
            ratio: f64::NAN,
            flagged: true,
            reference_zz_khz: None,
            reference_j_mhz: None,
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &[row], false).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "mean_freq_ghz,detuning_mhz,zz_khz,jeff_mhz,ratio\n5,60,0,1.5,nan\n"
        );
    }
}
