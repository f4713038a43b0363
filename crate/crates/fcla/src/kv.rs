//! Flat `key = value` text format used for scenario files, solution files,
//! experiment configs, and metadata sidecars.
//!
//! Grammar, one record per line:
//!
//! ```text
//! # comment (also after a value)
//! key = value
//! ```
//!
//! * keys: `[A-Za-z0-9_.\[\]-]+`
//! * scalars: integers, floats (`1.5e-3`), or bare strings without commas
//! * arrays: comma-separated scalars, e.g. `0.1,0.2,0.3`
//! * complex numbers: `re+imi` or `re-imi` with a trailing `i`, e.g.
//!   `1.5e-3-2.0e-4i`; both parts always present
//!
//! Writers emit keys in insertion order with floats at 17 significant
//! digits so round-trips are exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {0}: missing '=' separator")]
    MissingSeparator(usize),
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("missing key '{0}'")]
    MissingKey(String),
    #[error("key '{key}': {msg}")]
    Parse { key: String, msg: String },
}

/// Ordered key-value document.
#[derive(Debug, Default, Clone)]
pub struct KvDoc {
    order: Vec<String>,
    map: HashMap<String, String>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let eq = line.find('=').ok_or(KvError::MissingSeparator(ln + 1))?;
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if doc.map.insert(key.clone(), value).is_some() {
                return Err(KvError::DuplicateKey(key));
            }
            doc.order.push(key);
        }
        Ok(doc)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in &self.order {
            let _ = writeln!(s, "{} = {}", k, self.map[k]);
        }
        s
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.order.iter()
    }

    fn raw(&self, key: &str) -> Result<&str, KvError> {
        self.map
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| KvError::MissingKey(key.to_string()))
    }

    pub fn set_str(&mut self, key: &str, value: &str) {
        if !self.map.contains_key(key) {
            self.order.push(key.to_string());
        }
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn set_usize(&mut self, key: &str, v: usize) {
        self.set_str(key, &v.to_string());
    }

    pub fn set_u64(&mut self, key: &str, v: u64) {
        self.set_str(key, &v.to_string());
    }

    pub fn set_f64(&mut self, key: &str, v: f64) {
        self.set_str(key, &fmt_f64(v));
    }

    pub fn set_f64_slice(&mut self, key: &str, vs: &[f64]) {
        let joined: Vec<String> = vs.iter().map(|v| fmt_f64(*v)).collect();
        self.set_str(key, &joined.join(","));
    }

    pub fn set_c64_slice(&mut self, key: &str, vs: &[Complex64]) {
        let joined: Vec<String> = vs.iter().map(|v| fmt_c64(*v)).collect();
        self.set_str(key, &joined.join(","));
    }

    pub fn get_str(&self, key: &str) -> Result<&str, KvError> {
        self.raw(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, KvError> {
        self.raw(key)?.parse().map_err(|e| KvError::Parse {
            key: key.into(),
            msg: format!("{e}"),
        })
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, KvError> {
        self.raw(key)?.parse().map_err(|e| KvError::Parse {
            key: key.into(),
            msg: format!("{e}"),
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, KvError> {
        self.raw(key)?.parse().map_err(|e| KvError::Parse {
            key: key.into(),
            msg: format!("{e}"),
        })
    }

    pub fn get_f64_slice(&self, key: &str) -> Result<Vec<f64>, KvError> {
        let raw = self.raw(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse().map_err(|e| KvError::Parse {
                    key: key.into(),
                    msg: format!("'{s}': {e}"),
                })
            })
            .collect()
    }

    pub fn get_c64_slice(&self, key: &str) -> Result<Vec<Complex64>, KvError> {
        let raw = self.raw(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                parse_c64(s.trim()).ok_or_else(|| KvError::Parse {
                    key: key.into(),
                    msg: format!("bad complex '{s}'"),
                })
            })
            .collect()
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_c64(v: Complex64) -> String {
    if v.im >= 0.0 || v.im.is_nan() {
        format!("{}+{}i", fmt_f64(v.re), fmt_f64(v.im))
    } else {
        format!("{}-{}i", fmt_f64(v.re), fmt_f64(-v.im))
    }
}

/// Parses `re+imi` / `re-imi`. The split point is the last sign that is not
/// part of an exponent.
pub fn parse_c64(s: &str) -> Option<Complex64> {
    let body = s.strip_suffix('i')?;
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i];
        if (c == b'+' || c == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'E' {
            split = Some(i);
            break;
        }
    }
    let split = split?;
    let re: f64 = body[..split].trim().parse().ok()?;
    let sign = if bytes[split] == b'-' { -1.0 } else { 1.0 };
    let im: f64 = body[split + 1..].trim().parse().ok()?;
    Some(Complex64::new(re, sign * im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = "# header\na = 3\nb.c = 1.5e-3, 2.5 ,NaN # tail\nw = 0.5-1.25e-2i,1+0i\n";
        let doc = KvDoc::parse(text).unwrap();
        assert_eq!(doc.get_usize("a").unwrap(), 3);
        let arr = doc.get_f64_slice("b.c").unwrap();
        assert_eq!(arr[0], 1.5e-3);
        assert!(arr[2].is_nan());
        let ws = doc.get_c64_slice("w").unwrap();
        assert_eq!(ws[0], Complex64::new(0.5, -1.25e-2));
        assert_eq!(ws[1], Complex64::new(1.0, 0.0));

        let mut out = KvDoc::new();
        out.set_f64("x", -1.234567890123456e-7);
        out.set_c64_slice("z", &ws);
        let reparsed = KvDoc::parse(&out.to_text()).unwrap();
        assert_eq!(reparsed.get_f64("x").unwrap(), -1.234567890123456e-7);
        assert_eq!(reparsed.get_c64_slice("z").unwrap(), ws);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(
            KvDoc::parse("novalue\n"),
            Err(KvError::MissingSeparator(1))
        ));
        assert!(matches!(
            KvDoc::parse("a = 1\na = 2\n"),
            Err(KvError::DuplicateKey(_))
        ));
        let doc = KvDoc::parse("a = x\n").unwrap();
        assert!(doc.get_f64("a").is_err());
        assert!(doc.get_f64("missing").is_err());
    }

    #[test]
    fn negative_exponent_complex_forms() {
        for s in ["1e-3+2e-4i", "-1E-3-2E-4i", "0+0i", "3-4i"] {
            let c = parse_c64(s).unwrap();
            let back = parse_c64(&fmt_c64(c)).unwrap();
            assert_eq!(c, back);
        }
        assert!(parse_c64("1.0").is_none());
        assert!(parse_c64("i").is_none());
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f64_array_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 1..20)) {
            let mut doc = KvDoc::new();
            doc.set_f64_slice("vals", &values);
            let back = KvDoc::parse(&doc.to_text()).unwrap();
            prop_assert_eq!(back.get_f64_slice("vals").unwrap(), values);
        }

        #[test]
        fn complex_round_trip(re in -1e9f64..1e9, im in -1e9f64..1e9) {
            let c = Complex64::new(re, im);
            prop_assert_eq!(parse_c64(&fmt_c64(c)).unwrap(), c);
        }
    }
}
