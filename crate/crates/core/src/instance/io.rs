//! JSON-shaped instance documents.
//!
//! Numbers are decimal literals or `"p/q"` strings. [`save`] writes fields
//! in a fixed order, one matrix row per line, using the shortest decimal
//! that reads back to the same `f64`, so `load(save(i)) == i` bit for bit.

use std::fmt::Write as _;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use super::{ExtensionBlock, MibpsdInstance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumberFormat {
    /// Shortest round-trip decimal for every entry.
    #[default]
    Decimal,
    /// `"p/q"` whenever a small fraction reproduces the value exactly.
    Rational,
}

struct Num(f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct NumVisitor;

        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or a \"p/q\" string")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Num, E> {
                parse_fraction(s)
                    .map(Num)
                    .ok_or_else(|| E::custom(format!("malformed fraction {s:?}")))
            }
        }

        de.deserialize_any(NumVisitor)
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s.trim(), "1"),
    };
    let p: i64 = p.parse().ok()?;
    let q: i64 = q.parse().ok()?;
    if q <= 0 {
        return None;
    }
    Some(p as f64 / q as f64)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExtension {
    q: usize,
    #[serde(rename = "G_xpsi")]
    g_xpsi: Vec<Vec<Num>>,
    #[serde(rename = "G_psi")]
    g_psi: Vec<Vec<Num>>,
    h_psi: Vec<Num>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    n1: usize,
    n2: usize,
    m: usize,
    p: usize,
    binary_indices: Vec<usize>,
    c_x: Vec<Num>,
    c_y: Vec<Num>,
    d: Vec<Num>,
    #[serde(rename = "A")]
    a: Vec<Vec<Num>>,
    #[serde(rename = "B")]
    b_mat: Vec<Vec<Num>>,
    b: Vec<Num>,
    #[serde(rename = "G_xy")]
    g_xy: Vec<Vec<Num>>,
    #[serde(rename = "G_y")]
    g_y: Vec<Vec<Num>>,
    h_y: Vec<Num>,
    #[serde(default)]
    extension: Option<RawExtension>,
    #[serde(default)]
    psi_bound: Option<Vec<Num>>,
}

fn vector(name: &str, v: Vec<Num>, len: usize) -> Result<Vec<f64>> {
    if v.len() != len {
        return Err(Error::Dimension(format!(
            "{name} has {} entries but the declared size is {len}",
            v.len()
        )));
    }
    Ok(v.into_iter().map(|n| n.0).collect())
}

fn matrix(name: &str, rows: Vec<Vec<Num>>, nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows {
        return Err(Error::Dimension(format!(
            "{name} has {} rows but the declared size is {nrows}",
            rows.len()
        )));
    }
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|n| n.0).collect())
        .collect();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "row {i} of {name} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(Matrix::from_rows(ncols, &rows).expect("row lengths checked"))
}

/// Parses an instance document.
pub fn load(text: &str) -> Result<MibpsdInstance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let extension = match raw.extension {
        None => None,
        Some(e) => Some(ExtensionBlock {
            g_xpsi: matrix("G_xpsi", e.g_xpsi, e.q, raw.n1)?,
            g_psi: matrix("G_psi", e.g_psi, e.q, raw.m)?,
            h_psi: vector("h_psi", e.h_psi, e.q)?,
        }),
    };
    let inst = MibpsdInstance {
        n1: raw.n1,
        n2: raw.n2,
        m: raw.m,
        p: raw.p,
        binary_indices: raw.binary_indices,
        c_x: vector("c_x", raw.c_x, raw.n1)?,
        c_y: vector("c_y", raw.c_y, raw.n2)?,
        d: vector("d", raw.d, raw.n2)?,
        a: matrix("A", raw.a, raw.m, raw.n1)?,
        b_mat: matrix("B", raw.b_mat, raw.m, raw.n2)?,
        b: vector("b", raw.b, raw.m)?,
        g_xy: matrix("G_xy", raw.g_xy, raw.p, raw.n1)?,
        g_y: matrix("G_y", raw.g_y, raw.p, raw.n2)?,
        h_y: vector("h_y", raw.h_y, raw.p)?,
        extension,
        psi_bound: raw.psi_bound.map(|v| vector("psi_bound", v, raw.m)).transpose()?,
    };
    inst.check_dimensions()?;
    Ok(inst)
}

/// Writes `instance` with shortest round-trip decimals.
pub fn save(instance: &MibpsdInstance) -> String {
    save_with(instance, NumberFormat::Decimal)
}

pub fn save_with(instance: &MibpsdInstance, format: NumberFormat) -> String {
    let num = |v: f64| format_number(v, format);
    let vec = |v: &[f64]| {
        let items: Vec<String> = v.iter().map(|&x| num(x)).collect();
        format!("[{}]", items.join(", "))
    };
    let mat = |m: &Matrix, indent: &str| {
        if m.rows() == 0 {
            return "[]".to_string();
        }
        let rows: Vec<String> = (0..m.rows())
            .map(|i| format!("{indent}  {}", vec(m.row(i))))
            .collect();
        format!("[\n{}\n{indent}]", rows.join(",\n"))
    };
    let i = instance;
    let mut fields = vec![
        format!("\"n1\": {}", i.n1),
        format!("\"n2\": {}", i.n2),
        format!("\"m\": {}", i.m),
        format!("\"p\": {}", i.p),
        format!(
            "\"binary_indices\": [{}]",
            i.binary_indices
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
        format!("\"c_x\": {}", vec(&i.c_x)),
        format!("\"c_y\": {}", vec(&i.c_y)),
        format!("\"d\": {}", vec(&i.d)),
        format!("\"A\": {}", mat(&i.a, "  ")),
        format!("\"B\": {}", mat(&i.b_mat, "  ")),
        format!("\"b\": {}", vec(&i.b)),
        format!("\"G_xy\": {}", mat(&i.g_xy, "  ")),
        format!("\"G_y\": {}", mat(&i.g_y, "  ")),
        format!("\"h_y\": {}", vec(&i.h_y)),
    ];
    if let Some(e) = &i.extension {
        let mut s = String::from("\"extension\": {\n");
        let _ = writeln!(s, "    \"q\": {},", e.q());
        let _ = writeln!(s, "    \"G_xpsi\": {},", mat(&e.g_xpsi, "    "));
        let _ = writeln!(s, "    \"G_psi\": {},", mat(&e.g_psi, "    "));
        let _ = writeln!(s, "    \"h_psi\": {}", vec(&e.h_psi));
        s.push_str("  }");
        fields.push(s);
    }
    if let Some(pb) = &i.psi_bound {
        fields.push(format!("\"psi_bound\": {}", vec(pb)));
    }
    format!("{{\n  {}\n}}\n", fields.join(",\n  "))
}

fn format_number(v: f64, format: NumberFormat) -> String {
    if format == NumberFormat::Rational {
        if let Some((p, q)) = small_fraction(v) {
            if q > 1 {
                return format!("\"{p}/{q}\"");
            }
        }
    }
    // `Debug` prints the shortest string that parses back to the same bits
    // and keeps the sign of negative zero.
    format!("{v:?}")
}

/// Continued-fraction search for `p/q` with `q ≤ 10⁶` such that the float
/// division `p as f64 / q as f64` reproduces `v` exactly.
fn small_fraction(v: f64) -> Option<(i64, i64)> {
    const MAX_DEN: i64 = 1_000_000;
    if !v.is_finite() || v.abs() > 2f64.powi(52) {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = v;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 2f64.powi(52) {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DEN {
            return None;
        }
        if h2 as f64 / k2 as f64 == v {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::t1;

    #[test]
    fn t1_round_trips() {
        let t = t1();
        let doc = save(&t);
        assert_eq!(load(&doc).unwrap(), t);
        assert!(!doc.contains("extension"));
        assert!(!doc.contains("psi_bound"));
    }

    #[test]
    fn extension_and_bound_survive() {
        let mut t = t1();
        t.extension = Some(ExtensionBlock {
            g_xpsi: Matrix::from_rows(1, &[vec![0.0]]).unwrap(),
            g_psi: Matrix::from_rows(1, &[vec![-1.0]]).unwrap(),
            h_psi: vec![-0.5],
        });
        t.psi_bound = Some(vec![3.0]);
        let back = load(&save(&t)).unwrap();
        assert!(back.extension.is_some());
        assert_eq!(back, t);
    }

    #[test]
    fn third_written_as_fraction() {
        let mut t = t1();
        t.h_y = vec![1.0 / 3.0];
        let doc = save_with(&t, NumberFormat::Rational);
        assert!(doc.contains("\"1/3\""), "{doc}");
        assert_eq!(load(&doc).unwrap(), t);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut t = t1();
        t.c_y = vec![-0.0];
        t.h_y = vec![0.1 + 0.2];
        t.d = vec![1e-300];
        t.b = vec![1.234_567_891_234_567_8e208];
        for f in [NumberFormat::Decimal, NumberFormat::Rational] {
            let back = load(&save_with(&t, f)).unwrap();
            assert_eq!(back.c_y[0].to_bits(), t.c_y[0].to_bits());
            assert_eq!(back, t);
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let doc = save(&t1()).replacen("\"d\": [1.0]", "\"d\": [1.0,,]", 1);
        match load(&doc) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 9);
                assert!(column > 0);
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_fraction_is_a_parse_error() {
        let doc = save(&t1()).replacen("\"d\": [1.0]", "\"d\": [\"1/0\"]", 1);
        assert!(matches!(load(&doc), Err(Error::Parse { .. })));
    }

    #[test]
    fn size_conflict_is_a_dimension_error() {
        let doc = save(&t1()).replacen("\"b\": [1.0]", "\"b\": [1.0, 2.0]", 1);
        assert!(matches!(load(&doc), Err(Error::Dimension(_))));
    }

    #[test]
    fn missing_bound_stays_absent() {
        let doc = save(&t1());
        assert_eq!(load(&doc).unwrap().psi_bound, None);
    }
}
