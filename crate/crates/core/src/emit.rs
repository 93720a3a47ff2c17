//! Deterministic artifact encoding: floats at 17 significant digits and a
//! JSON writer that uses them.
//!
//! 17 significant digits round-trip any f64 exactly, so artifacts are both
//! byte-deterministic and lossless. JSON has no literal for infinities;
//! score fields that can be infinite (extended-real payouts under the
//! no-floor policy) are encoded through [`score_serde`] as the strings
//! `"inf"` / `"-inf"`, everything else as plain numbers.

use std::io::{self, Write};

use serde::Serialize;

/// A float at 17 significant digits, scientific notation.
pub fn fmt_sig17(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x == f64::INFINITY {
        return "inf".to_string();
    }
    if x == f64::NEG_INFINITY {
        return "-inf".to_string();
    }
    format!("{x:.16e}")
}

struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_sig17(value).as_bytes())
    }
}

/// Serializes to compact JSON with all finite floats at 17 significant
/// digits. Field order is declaration order, so output is byte-deterministic.
pub fn to_json_sig17<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serializer emits utf-8"))
}

/// Serde adapter for a single extended-real score: numbers when finite,
/// the strings `"inf"` / `"-inf"` otherwise.
pub mod score_serde {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(score: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if score.is_finite() {
            ser.serialize_f64(*score)
        } else if *score == f64::INFINITY {
            ser.serialize_str("inf")
        } else if *score == f64::NEG_INFINITY {
            ser.serialize_str("-inf")
        } else {
            ser.serialize_str("nan")
        }
    }

    struct ScoreVisitor;

    impl<'de> Visitor<'de> for ScoreVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or \"inf\"/\"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("unknown score literal {other}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        de.deserialize_any(ScoreVisitor)
    }
}

/// Same adapter for vectors of scores (payout lists).
pub mod score_vec_serde {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Serialize, serde::Deserialize)]
    struct Wrap(#[serde(with = "super::score_serde")] f64);

    pub fn serialize<S: Serializer>(scores: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(scores.len()))?;
        for &s in scores {
            seq.serialize_element(&Wrap(s))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Wrap>::deserialize(de)?
            .into_iter()
            .map(|w| w.0)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[test]
    fn sig17_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            let s = fmt_sig17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn json_floats_are_sig17() {
        #[derive(Serialize)]
        struct Row {
            a: f64,
            b: Vec<f64>,
        }
        let json = to_json_sig17(&Row {
            a: 0.1,
            b: vec![0.5],
        })
        .unwrap();
        assert_eq!(
            json,
            "{\"a\":1.0000000000000001e-1,\"b\":[5.0000000000000000e-1]}"
        );
    }

    #[test]
    fn score_fields_encode_infinities() {
        #[derive(Serialize, Deserialize)]
        struct Payouts {
            #[serde(with = "score_vec_serde")]
            values: Vec<f64>,
        }
        let p = Payouts {
            values: vec![1.5, f64::INFINITY, f64::NEG_INFINITY],
        };
        let json = to_json_sig17(&p).unwrap();
        assert_eq!(json, "{\"values\":[1.5000000000000000e0,\"inf\",\"-inf\"]}");
        let back: Payouts = serde_json::from_str(&json).unwrap();
        assert_eq!(back.values[0], 1.5);
        assert_eq!(back.values[1], f64::INFINITY);
        assert_eq!(back.values[2], f64::NEG_INFINITY);
    }
}
