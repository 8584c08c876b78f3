use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// Identifies one time series: a sensor on a node. Serialized as `node.sensor`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeriesKey {
    pub node: String,
    pub sensor: String,
}

impl SeriesKey {
    pub fn new(node: impl Into<String>, sensor: impl Into<String>) -> Self {
        SeriesKey { node: node.into(), sensor: sensor.into() }
    }
}

/// Rendered as `node.sensor`.
impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.sensor)
    }
}

impl FromStr for SeriesKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (node, sensor) = s.split_once('.').ok_or_else(|| format!("series {s:?} is not node.sensor"))?;
        if !crate::hydro::is_identifier(node) || !crate::hydro::is_identifier(sensor) {
            return Err(format!("series {s:?} has invalid characters"));
        }
        Ok(SeriesKey::new(node, sensor))
    }
}

impl TryFrom<String> for SeriesKey {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SeriesKey> for String {
    fn from(k: SeriesKey) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub series: SeriesKey,
    pub timestamp: Timestamp,
    pub value: f64,
}

impl Point {
    pub fn new(node: &str, sensor: &str, timestamp: Timestamp, value: f64) -> Self {
        Point { series: SeriesKey::new(node, sensor), timestamp, value }
    }
}
