use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Window length on an ordered axis. `Full` covers the whole causal prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    Finite(usize),
    Full,
}

impl Window {
    pub fn validate(self, name: &'static str) -> Result<Self> {
        match self {
            Window::Finite(0) => Err(Error::param(name, "window size must be at least 1")),
            w => Ok(w),
        }
    }

    /// Number of positions visible from index `i`: `min(w, i + 1)`.
    pub fn span(self, i: usize) -> usize {
        match self {
            Window::Finite(w) => w.min(i + 1),
            Window::Full => i + 1,
        }
    }

    /// First visible index from `i`: `max(0, i − w + 1)`.
    pub fn start(self, i: usize) -> usize {
        i + 1 - self.span(i)
    }

    pub fn as_option(self) -> Option<usize> {
        match self {
            Window::Finite(w) => Some(w),
            Window::Full => None,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Finite(w) => write!(f, "{w}"),
            Window::Full => f.write_str("full"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(Window::Full);
        }
        let w: usize = s.parse().map_err(|_| {
            Error::param(
                "window",
                format!("expected a positive integer or `full`, got `{s}`"),
            )
        })?;
        Window::Finite(w).validate("window")
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Window::Finite(w) => s.serialize_u64(*w as u64),
            Window::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Window::Finite(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Sequence,
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub size: Window,
    pub axis: Axis,
}

impl WindowSpec {
    pub fn sequence(size: Window) -> Self {
        Self {
            size,
            axis: Axis::Sequence,
        }
    }

    pub fn depth(size: Window) -> Self {
        Self {
            size,
            axis: Axis::Depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans() {
        assert_eq!(Window::Finite(3).span(0), 1);
        assert_eq!(Window::Finite(3).span(10), 3);
        assert_eq!(Window::Finite(3).start(10), 8);
        assert_eq!(Window::Full.start(10), 0);
    }

    #[test]
    fn parse_and_serde() {
        assert_eq!("full".parse::<Window>().unwrap(), Window::Full);
        assert_eq!("4".parse::<Window>().unwrap(), Window::Finite(4));
        assert!("0".parse::<Window>().is_err());
        assert!("x".parse::<Window>().is_err());
        assert_eq!(serde_json::to_string(&Window::Full).unwrap(), "\"full\"");
        let w: Window = serde_json::from_str("7").unwrap();
        assert_eq!(w, Window::Finite(7));
    }
}
