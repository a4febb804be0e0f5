use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::Format;
use crate::error::CliError;

/// `%.12g`: twelve significant digits, trailing zeros trimmed, exponent
/// form outside `[1e-5, 1e12)`.
pub fn sig12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A table row with a fixed CSV column order.
pub trait Row: Serialize {
    fn cells(&self) -> Vec<String>;
}

#[derive(Serialize)]
struct TableDoc<'a, R> {
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    rows: &'a [R],
}

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes `rows`; `failure` marks the table as cut short.
///
/// CSV output ends with a `# incomplete: …` line in that case; JSON gets
/// `complete: false` and the error text.
pub fn write_table<R: Row>(
    out: &mut dyn Write,
    format: Format,
    header: Vec<&'static str>,
    rows: &[R],
    failure: Option<&CliError>,
) -> Result<(), CliError> {
    match format {
        Format::Json => {
            let doc = TableDoc {
                complete: failure.is_none(),
                error: failure.map(ToString::to_string),
                rows,
            };
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => {
            {
                let mut w = csv::Writer::from_writer(&mut *out);
                w.write_record(&header)?;
                for r in rows {
                    w.write_record(r.cells())?;
                }
                w.flush()?;
            }
            if let Some(e) = failure {
                writeln!(out, "# incomplete: {e}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.1 + 0.2), "0.3");
        assert_eq!(sig12(std::f64::consts::PI), "3.14159265359");
        assert_eq!(sig12(-0.395599), "-0.395599");
        assert_eq!(sig12(1.0 / 3.0 * 1e-7), "3.33333333333e-8");
        assert_eq!(sig12(123456789012345.0), "1.23456789012e14");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(2.5e-6), "2.5e-6");
        assert_eq!(sig12(12345.678), "12345.678");
    }
}
