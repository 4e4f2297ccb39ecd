//! Atomic predicates `(feature, operator, value)` and their conjunctions.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::format::fixed6;

/// A single cell of a feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Cat(String),
    Num(f64),
}

impl Cell {
    /// JSON form sent to external predictors.
    pub fn to_json(&self) -> Json {
        match self {
            Cell::Cat(s) => match s.parse::<f64>() {
                Ok(x) if x.is_finite() => json_number(x),
                _ => Json::String(s.clone()),
            },
            Cell::Num(x) => json_number(*x),
        }
    }
}

fn json_number(x: f64) -> Json {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Json::from(x as i64)
    } else {
        serde_json::Number::from_f64(x)
            .map(Json::Number)
            .unwrap_or(Json::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Eq,
    Ge,
    Lt,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Ge => ">=",
            Op::Lt => "<",
        }
    }

    pub fn parse(s: &str) -> Option<Op> {
        match s {
            "==" => Some(Op::Eq),
            ">=" => Some(Op::Ge),
            "<" => Some(Op::Lt),
            _ => None,
        }
    }
}

/// Operator together with its operand. `==` only takes categories and the
/// threshold operators only take numbers, so mixed forms are unrepresentable.
#[derive(Debug, Clone)]
pub enum Condition {
    Eq(String),
    Ge(f64),
    Lt(f64),
}

impl Condition {
    pub fn op(&self) -> Op {
        match self {
            Condition::Eq(_) => Op::Eq,
            Condition::Ge(_) => Op::Ge,
            Condition::Lt(_) => Op::Lt,
        }
    }

    pub fn matches(&self, cell: &Cell) -> bool {
        match (self, cell) {
            (Condition::Eq(v), Cell::Cat(s)) => v == s,
            (Condition::Ge(t), Cell::Num(x)) => x >= t,
            (Condition::Lt(t), Cell::Num(x)) => x < t,
            _ => false,
        }
    }

    fn threshold_bits(t: f64) -> u64 {
        // -0.0 and 0.0 compare equal, so they must hash equal
        if t == 0.0 {
            0
        } else {
            t.to_bits()
        }
    }
}

impl PartialEq for Condition {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Condition {}

impl PartialOrd for Condition {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Condition {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Condition::Eq(a), Condition::Eq(b)) => a.cmp(b),
            (Condition::Ge(a), Condition::Ge(b)) | (Condition::Lt(a), Condition::Lt(b)) => {
                if a == b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            _ => self.op().cmp(&other.op()),
        }
    }
}

impl Hash for Condition {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.op().hash(state);
        match self {
            Condition::Eq(v) => v.hash(state),
            Condition::Ge(t) | Condition::Lt(t) => Condition::threshold_bits(*t).hash(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Predicate {
    pub feature: String,
    pub cond: Condition,
}

impl Predicate {
    pub fn eq(feature: impl Into<String>, value: impl Into<String>) -> Self {
        Predicate {
            feature: feature.into(),
            cond: Condition::Eq(value.into()),
        }
    }

    pub fn ge(feature: impl Into<String>, threshold: f64) -> Self {
        Predicate {
            feature: feature.into(),
            cond: Condition::Ge(threshold),
        }
    }

    pub fn lt(feature: impl Into<String>, threshold: f64) -> Self {
        Predicate {
            feature: feature.into(),
            cond: Condition::Lt(threshold),
        }
    }

    pub fn op(&self) -> Op {
        self.cond.op()
    }

    /// Whether both predicates can never hold together on one instance.
    pub fn contradicts(&self, other: &Predicate) -> bool {
        if self.feature != other.feature {
            return false;
        }
        match (&self.cond, &other.cond) {
            (Condition::Eq(a), Condition::Eq(b)) => a != b,
            (Condition::Ge(lo), Condition::Lt(hi)) | (Condition::Lt(hi), Condition::Ge(lo)) => {
                hi <= lo
            }
            (Condition::Eq(_), _) | (_, Condition::Eq(_)) => true,
            _ => false,
        }
    }

    /// Evaluate against a JSON instance object, e.g. `{"Old": 1, "age": 43.5}`.
    pub fn eval_json(&self, instance: &serde_json::Map<String, Json>) -> Result<bool> {
        let v = instance
            .get(&self.feature)
            .ok_or_else(|| Error::Instance(format!("missing feature '{}'", self.feature)))?;
        let cell = match &self.cond {
            Condition::Eq(_) => Cell::Cat(json_category(v).ok_or_else(|| {
                Error::Instance(format!("feature '{}': expected a category, got {v}", self.feature))
            })?),
            Condition::Ge(_) | Condition::Lt(_) => {
                let x = match v {
                    Json::Number(n) => n.as_f64(),
                    Json::String(s) => s.trim().parse::<f64>().ok(),
                    _ => None,
                };
                Cell::Num(x.ok_or_else(|| {
                    Error::Instance(format!("feature '{}': expected a number, got {v}", self.feature))
                })?)
            }
        };
        Ok(self.cond.matches(&cell))
    }
}

/// Canonical category string for a JSON scalar (`1` and `"1"` both map to `"1"`).
pub fn json_category(v: &Json) -> Option<String> {
    match v {
        Json::String(s) => Some(s.trim().to_string()),
        Json::Bool(b) => Some(b.to_string()),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(i.to_string())
            } else if let Some(u) = n.as_u64() {
                Some(u.to_string())
            } else {
                let x = n.as_f64()?;
                if x.fract() == 0.0 && x.abs() < 9.0e15 {
                    Some((x as i64).to_string())
                } else {
                    Some(x.to_string())
                }
            }
        }
        _ => None,
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cond {
            Condition::Eq(v) => write!(f, "{} == {}", self.feature, v),
            Condition::Ge(t) => write!(f, "{} >= {}", self.feature, t),
            Condition::Lt(t) => write!(f, "{} < {}", self.feature, t),
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(3))?;
        map.serialize_entry("feature", &self.feature)?;
        map.serialize_entry("op", self.op().symbol())?;
        match &self.cond {
            Condition::Eq(v) => map.serialize_entry("value", v)?,
            Condition::Ge(t) | Condition::Lt(t) => map.serialize_entry("value", &fixed6(*t))?,
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            feature: String,
            op: String,
            value: Json,
        }
        let raw = Raw::deserialize(deserializer)?;
        let op = Op::parse(&raw.op)
            .ok_or_else(|| D::Error::custom(format!("unknown operator '{}'", raw.op)))?;
        let cond = match op {
            Op::Eq => Condition::Eq(
                json_category(&raw.value)
                    .ok_or_else(|| D::Error::custom("'==' needs a scalar value"))?,
            ),
            Op::Ge | Op::Lt => {
                let t = raw
                    .value
                    .as_f64()
                    .ok_or_else(|| D::Error::custom("threshold operators need a number"))?;
                if op == Op::Ge {
                    Condition::Ge(t)
                } else {
                    Condition::Lt(t)
                }
            }
        };
        Ok(Predicate {
            feature: raw.feature,
            cond,
        })
    }
}

/// A satisfiable, non-empty AND of distinct predicates, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Conjunction {
    preds: Vec<Predicate>,
}

impl Conjunction {
    pub fn new(preds: impl IntoIterator<Item = Predicate>) -> Result<Self> {
        let mut preds: Vec<Predicate> = preds.into_iter().collect();
        preds.sort();
        preds.dedup();
        if preds.is_empty() {
            return Err(Error::InvalidConjunction("width must be at least 1".into()));
        }
        for (i, a) in preds.iter().enumerate() {
            for b in &preds[i + 1..] {
                if a.contradicts(b) {
                    return Err(Error::InvalidConjunction(format!(
                        "'{a}' contradicts '{b}'"
                    )));
                }
            }
        }
        Ok(Conjunction { preds })
    }

    pub fn single(p: Predicate) -> Self {
        Conjunction { preds: vec![p] }
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.preds
    }

    pub fn width(&self) -> usize {
        self.preds.len()
    }

    /// Distinct feature names mentioned.
    pub fn features(&self) -> BTreeSet<&str> {
        self.preds.iter().map(|p| p.feature.as_str()).collect()
    }

    pub fn eval_json(&self, instance: &serde_json::Map<String, Json>) -> Result<bool> {
        for p in &self.preds {
            if !p.eval_json(instance)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.preds.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl Serialize for Conjunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.preds.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Conjunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let preds = Vec::<Predicate>::deserialize(deserializer)?;
        Conjunction::new(preds).map_err(D::Error::custom)
    }
}
