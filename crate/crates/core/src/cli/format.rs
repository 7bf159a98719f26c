use std::io::{self, Write};

use super::Alg;
use crate::closed_form::StructuralCheck;
use crate::model::{DecomposedSchedule, SystemParams};
use crate::report::SolveReport;

const SIG_DIGITS: usize = 12;

/// Formats `v` with 12 significant digits in the style of C's `%.12g`.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt_sig(v))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(super) fn write_solve_text(
    out: &mut dyn Write,
    params: &SystemParams,
    alg: Alg,
    report: &SolveReport,
    dec: &DecomposedSchedule,
    checks: &[StructuralCheck],
) -> io::Result<()> {
    writeln!(
        out,
        "params      B={} N={} gamma1={} gamma2={} beta={} P10={} P20={}",
        fmt_sig(params.bandwidth),
        params.phases,
        fmt_sig(params.snr1),
        fmt_sig(params.snr2),
        fmt_sig(params.harvest),
        fmt_sig(params.initial1),
        fmt_sig(params.initial2),
    )?;
    writeln!(out, "algorithm   {} ({})", alg.label(), report.algorithm)?;
    writeln!(out, "regime      {}", report.regime.kind)?;
    if let Some(k) = report.regime.threshold(params) {
        writeln!(out, "threshold   {}", fmt_sig(k))?;
    }
    writeln!(out, "status      {}", report.status().label())?;
    writeln!(out, "throughput  {}", fmt_sig(report.throughput))?;
    writeln!(out, "P1          {}", join(&report.schedule.source))?;
    writeln!(out, "P2          {}", join(&report.schedule.relay))?;
    writeln!(out, "data1       {}", join(&dec.data_source))?;
    writeln!(out, "data2       {}", join(&dec.data_relay))?;
    writeln!(out, "supp1       {}", join(&dec.supp_source))?;
    writeln!(out, "supp2       {}", join(&dec.supp_relay))?;
    if let Some(eq) = &report.equivalent {
        writeln!(
            out,
            "equivalent  p=[{}] alpha1={} alpha2={}",
            join(&eq.data),
            fmt_sig(eq.alpha1),
            fmt_sig(eq.alpha2)
        )?;
    }
    writeln!(out, "slack1      {}", join(&report.feasibility.slack1))?;
    writeln!(out, "slack2      {}", join(&report.feasibility.slack2))?;
    writeln!(out, "feasible    {}", report.feasibility.feasible)?;
    if let Some(d) = &report.diagnostics {
        writeln!(
            out,
            "solver      iterations={} residual={}",
            d.iterations,
            fmt_sig(d.stationarity_residual)
        )?;
    }
    for c in checks {
        let verdict = if c.holds { "holds" } else { "FAILS" };
        match c.witness {
            Some(w) => writeln!(out, "check {:<5} {verdict} (phase {w})", c.id.label())?,
            None => writeln!(out, "check {:<5} {verdict}", c.id.label())?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn matches_printf_g() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.05), "0.05");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(123456.789), "123456.789");
        assert_eq!(fmt_sig(1e-5), "1e-05");
        assert_eq!(fmt_sig(1.5e13), "1.5e+13");
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }
}
