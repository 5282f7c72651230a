//! Deterministic text encoding shared by graph dumps and fusion messages.
//!
//! Floats are written with 17 significant digits in scientific notation, which
//! round-trips every `f64` exactly and does not depend on locale.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{Subject, Timestep, VariableKey};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_vector(v: &DVector<f64>) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

pub fn fmt_row(m: &DMatrix<f64>, row: usize) -> String {
    (0..m.ncols())
        .map(|c| fmt_f64(m[(row, c)]))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad float `{tok}`: {e}")))
        })
        .collect()
}

impl FromStr for Subject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Parse(format!("bad subject `{s}`")))?;
        let id: u32 = rest
            .strip_suffix(')')
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad subject id in `{s}`")))?;
        match name {
            "target" => Ok(Subject::Target(id)),
            "bias" => Ok(Subject::Bias(id)),
            "label" => Ok(Subject::Label(id)),
            _ => Err(Error::Parse(format!("unknown subject kind `{name}`"))),
        }
    }
}

impl FromStr for Timestep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "static" {
            return Ok(Timestep::Static);
        }
        s.parse()
            .map(Timestep::At)
            .map_err(|_| Error::Parse(format!("bad timestep `{s}`")))
    }
}

impl FromStr for VariableKey {
    type Err = Error;

    /// Parses the `Display` form, e.g. `target(2)@5[4]`.
    fn from_str(s: &str) -> Result<Self> {
        let (subject, rest) = s
            .split_once('@')
            .ok_or_else(|| Error::Parse(format!("bad variable key `{s}`")))?;
        let (timestep, dim) = rest
            .strip_suffix(']')
            .and_then(|r| r.split_once('['))
            .ok_or_else(|| Error::Parse(format!("bad variable key `{s}`")))?;
        let dim: usize = dim
            .parse()
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::Parse(format!("bad dimension in `{s}`")))?;
        Ok(VariableKey::new(subject.parse()?, timestep.parse()?, dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0] {
            let back = parse_floats(&fmt_f64(x)).unwrap()[0];
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn keys_parse_their_display() {
        for key in [
            VariableKey::target(3, 17, 4),
            VariableKey::bias(2, 2),
            VariableKey::label(9, Timestep::At(0), 1),
        ] {
            let parsed: VariableKey = key.to_string().parse().unwrap();
            assert_eq!(parsed, key);
            assert_eq!(parsed.dim, key.dim);
        }
        assert!("target(1)@2".parse::<VariableKey>().is_err());
        assert!("robot(1)@2[1]".parse::<VariableKey>().is_err());
    }
}
