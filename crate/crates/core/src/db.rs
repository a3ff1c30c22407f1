//! Decibel conversions shared across modules.

/// Smallest linear power represented; keeps dB values finite.
pub const MIN_POWER: f64 = 1e-30;

#[inline]
pub fn pow_to_db(p: f64) -> f64 {
    10.0 * p.max(MIN_POWER).log10()
}

#[inline]
pub fn db_to_pow(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Rounds to two decimals, the reporting precision for dB and ns values.
#[inline]
pub fn round2(x: f64) -> f64 {
    // beyond 2^53 / 100 every value is already a whole number
    if !x.is_finite() || x.abs() >= 1e13 {
        return x;
    }
    (x * 100.0).round() / 100.0
}

#[inline]
pub fn round4(x: f64) -> f64 {
    if !x.is_finite() || x.abs() >= 1e11 {
        return x;
    }
    (x * 10_000.0).round() / 10_000.0
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}


/// Serde adapter for `f64` fields that may hold `±inf`, which JSON cannot
/// represent. Infinities are written as the strings `"inf"` / `"-inf"`.
pub mod serde_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("expected number, got {other:?}"))),
            },
        }
    }
}
