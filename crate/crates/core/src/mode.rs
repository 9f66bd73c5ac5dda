use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How the demonstrated cause→effect relationships relate to the tested one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneralizationMode {
    InDomain,
    CommonCause,
    CommonEffect,
    Inductive,
    DeductiveCauseBased,
    DeductiveEffectBased,
}

impl GeneralizationMode {
    pub const ALL: [GeneralizationMode; 6] = [
        GeneralizationMode::InDomain,
        GeneralizationMode::CommonCause,
        GeneralizationMode::CommonEffect,
        GeneralizationMode::Inductive,
        GeneralizationMode::DeductiveCauseBased,
        GeneralizationMode::DeductiveEffectBased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneralizationMode::InDomain => "in-domain",
            GeneralizationMode::CommonCause => "common-cause",
            GeneralizationMode::CommonEffect => "common-effect",
            GeneralizationMode::Inductive => "inductive",
            GeneralizationMode::DeductiveCauseBased => "deductive-cause",
            GeneralizationMode::DeductiveEffectBased => "deductive-effect",
        }
    }
}

impl fmt::Display for GeneralizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneralizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown generalization mode `{s}` (expected one of {})", names.join(", "))
            })
    }
}
