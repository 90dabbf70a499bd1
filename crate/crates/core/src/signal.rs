//! Input signals written as expressions in `t`, one per channel,
//! separated by `;`. Supports `sin`, `cos`, `exp`, `pi`, `+ - * / ^`
//! and the other functions of `exmex`.
//!
//! ```text
//! 50*(sin(20*t)+1); 50*sin(t)*exp(-0.1*t)
//! ```

use std::fmt;
use std::str::FromStr;

use exmex::{Express, FlatEx};
use nalgebra::DVector;

use crate::error::{MorError, Result};

type Channel = FlatEx<f64>;

#[derive(Clone, Debug)]
pub struct Signal {
    sources: Vec<String>,
    exprs: Vec<Channel>,
}

fn eval_channel(e: &Channel, t: f64) -> f64 {
    let vals: Vec<f64> = e.var_names().iter().map(|v| if v == "t" { t } else { std::f64::consts::PI }).collect();
    e.eval(&vals).unwrap_or(f64::NAN)
}

impl Signal {
    pub fn channels(&self) -> usize {
        self.exprs.len()
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Zero input on `m` channels.
    pub fn zero(m: usize) -> Self {
        vec!["0"; m].join(";").parse().expect("literal zero parses")
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.exprs.len(), self.exprs.iter().map(|e| eval_channel(e, t)))
    }

    /// Closure returning `u(t)`.
    pub fn evaluator(&self) -> Result<impl Fn(f64) -> DVector<f64> + Sync + '_> {
        Ok(move |t: f64| self.eval(t))
    }
}

impl FromStr for Signal {
    type Err = MorError;

    fn from_str(s: &str) -> Result<Self> {
        let mut sources = Vec::new();
        let mut exprs = Vec::new();
        let mut offset = 0;
        for part in s.split(';') {
            let src = part.trim();
            if src.is_empty() {
                return Err(MorError::Parse { pos: offset, msg: "empty signal channel".into() });
            }
            let e: Channel = exmex::parse(src).map_err(|err| MorError::Parse { pos: offset, msg: format!("{err}") })?;
            if let Some(v) = e.var_names().iter().find(|v| *v != "t" && *v != "pi") {
                return Err(MorError::Parse { pos: offset, msg: format!("unknown variable `{v}`, signals depend on t only") });
            }
            sources.push(src.to_string());
            exprs.push(e);
            offset += part.len() + 1;
        }
        Ok(Signal { sources, exprs })
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sources.join("; "))
    }
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        self.sources == other.sources
    }
}

impl serde::Serialize for Signal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Signal {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        <String as serde::Deserialize>::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}
