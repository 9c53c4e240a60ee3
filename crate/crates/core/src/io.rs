//! Reproducible number formatting for CSV and JSON output.
//!
//! Every float is written with 17 significant digits in scientific
//! notation; non-finite values are written as `inf`, `-inf` or `nan` (as
//! strings in JSON).

use std::io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// 17 significant digits, `.` decimal point, no grouping.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_num(s: &str) -> Result<f64> {
    let t = s.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => t.parse::<f64>().map_err(|e| Error::Format(format!("`{t}`: {e}"))),
    }
}

/// serde adapter for floats that may be infinite: finite values stay
/// numbers, the rest become strings.
pub mod extended_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&fmt_num(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Num(f64),
            Text(String),
        }
        match Either::deserialize(d)? {
            Either::Num(x) => Ok(x),
            Either::Text(t) => parse_num(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// The same adapter for `Option<f64>`.
pub mod extended_f64_opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct W(#[serde(with = "super::extended_f64")] f64);
        x.map(W).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct W(#[serde(with = "super::extended_f64")] f64);
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

/// The same adapter for a list of `(x, y)` pairs.
pub mod extended_pairs {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "super::extended_f64")] f64, #[serde(with = "super::extended_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&(a, b)| W(a, b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(f64, f64)>, D::Error> {
        Ok(Vec::<W>::deserialize(d)?.into_iter().map(|w| (w.0, w.1)).collect())
    }
}

/// JSON formatter that prints floats with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedPrecision;

impl serde_json::ser::Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_num(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as JSON with [`FixedPrecision`] floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecision);
    value.serialize(&mut ser).map_err(|e| Error::Format(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

/// Writes a numeric table with a header row.
pub fn write_csv<W: io::Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_num(*x))).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Reads a numeric table; returns the header and the rows.
pub fn read_csv<R: io::Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let fail = |e: csv::Error| Error::Format(e.to_string());
    let header = r.headers().map_err(fail)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(fail)?;
        rows.push(rec.iter().map(parse_num).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}
