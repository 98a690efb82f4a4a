use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five gait classes, in the fixed output order of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitClass {
    Diplegic,
    Hemiplegic,
    Neuropathic,
    Normal,
    Parkinsonian,
}

pub const NUM_CLASSES: usize = 5;

impl GaitClass {
    pub const ALL: [GaitClass; NUM_CLASSES] = [
        GaitClass::Diplegic,
        GaitClass::Hemiplegic,
        GaitClass::Neuropathic,
        GaitClass::Normal,
        GaitClass::Parkinsonian,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("class index {i} outside 0..5")))
    }

    pub fn name(self) -> &'static str {
        match self {
            GaitClass::Diplegic => "diplegic",
            GaitClass::Hemiplegic => "hemiplegic",
            GaitClass::Neuropathic => "neuropathic",
            GaitClass::Normal => "normal",
            GaitClass::Parkinsonian => "parkinsonian",
        }
    }

    pub fn names() -> [&'static str; NUM_CLASSES] {
        Self::ALL.map(Self::name)
    }
}

impl fmt::Display for GaitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GaitClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gait class {s:?}")))
    }
}

/// Severity of a simulated pathology; carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Sev1,
    Sev2,
    Na,
}

impl Severity {
    pub fn tag(self) -> &'static str {
        match self {
            Severity::Sev1 => "sev1",
            Severity::Sev2 => "sev2",
            Severity::Na => "na",
        }
    }

    pub fn level(self) -> u8 {
        match self {
            Severity::Sev1 | Severity::Na => 1,
            Severity::Sev2 => 2,
        }
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sev1" => Ok(Severity::Sev1),
            "sev2" => Ok(Severity::Sev2),
            "na" => Ok(Severity::Na),
            _ => Err(Error::InvalidArgument(format!("unknown severity {s:?}"))),
        }
    }
}

/// Which energy image a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Gei,
    Sei,
}

impl Representation {
    pub fn code(self) -> u8 {
        match self {
            Representation::Gei => 0,
            Representation::Sei => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Representation::Gei),
            1 => Ok(Representation::Sei),
            _ => Err(Error::ModelFormat(format!("unknown representation code {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Gei => "gei",
            Representation::Sei => "sei",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gei" => Ok(Representation::Gei),
            "sei" => Ok(Representation::Sei),
            _ => Err(Error::InvalidArgument(format!("unknown representation {s:?}"))),
        }
    }
}
