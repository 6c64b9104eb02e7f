use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tone label of one aligned unit. `T0` marks an initial, which carries no
/// lexical tone; `T5` is the neutral tone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tone {
    T0,
    T1,
    T2,
    T3,
    T4,
    T5,
}

pub const N_TONES: usize = 6;

impl Tone {
    pub const ALL: [Tone; N_TONES] = [Tone::T0, Tone::T1, Tone::T2, Tone::T3, Tone::T4, Tone::T5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tone> {
        Tone::ALL.get(i).copied()
    }

    pub fn is_initial(self) -> bool {
        self == Tone::T0
    }

    pub fn as_str(self) -> &'static str {
        ["T0", "T1", "T2", "T3", "T4", "T5"][self.index()]
    }
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tone::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| Error::BadPattern(format!("unknown tone {s:?}")))
    }
}

/// Parse a dash-separated tone pattern such as `T4-T3-T4`.
pub fn parse_pattern(s: &str) -> Result<Vec<Tone>> {
    if s.trim().is_empty() {
        return Err(Error::BadPattern("empty pattern".into()));
    }
    s.split('-').map(str::parse).collect()
}

pub fn pattern_name(pattern: &[Tone]) -> String {
    pattern.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_name_patterns() {
        let p = parse_pattern("T4-T3-T4").unwrap();
        assert_eq!(p, vec![Tone::T4, Tone::T3, Tone::T4]);
        assert_eq!(pattern_name(&p), "T4-T3-T4");
        assert!(parse_pattern("").is_err());
        assert!(parse_pattern("T4-T9").is_err());
    }
}
