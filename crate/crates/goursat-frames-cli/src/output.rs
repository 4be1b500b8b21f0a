//! Deterministic JSON and CSV rendering.
//!
//! Every float goes through [`number`], so both formats carry the same 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// `x` with 17 significant digits in exponent form, or `None` when not finite.
pub fn number(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

/// Pretty JSON with fixed-precision floats.
struct Fixed<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        match number(v) {
            Some(s) => w.write_all(s.as_bytes()),
            None => w.write_all(b"null"),
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// One CSV cell: a number, text, or empty.
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => number(*x).unwrap_or_default(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn to_csv(header: &[String], rows: &[Vec<Cell>]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(Cell::render))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(number(0.1).unwrap(), "1.0000000000000001e-1");
        assert_eq!(number(-2.0).unwrap(), "-2.0000000000000000e0");
        assert_eq!(number(f64::NAN), None);
        for x in [0.1, 1.0 / 3.0, -7.25e-300, 6.02e23] {
            assert_eq!(number(x).unwrap().parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_uses_fixed_floats_and_null() {
        let s = to_json(&serde_json::json!({"a": [0.5, f64::NAN], "b": 3})).unwrap();
        assert!(s.contains("5.0000000000000000e-1"), "{s}");
        assert!(s.contains("null"));
        assert!(s.contains("\"b\": 3"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.5));
    }

    #[test]
    fn csv_quotes_and_matches_json() {
        let s = to_csv(
            &["t".into(), "flags".into()],
            &[vec![Cell::Num(0.1), Cell::Text("a, \"b\"".into())]],
        )
        .unwrap();
        assert_eq!(s, "t,flags\n1.0000000000000001e-1,\"a, \"\"b\"\"\"\n");
    }
}
