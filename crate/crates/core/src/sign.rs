//! The three sign axes and their severity lattice.
//!
//! Every axis is a small total order running from the least exposing value to
//! the most exposing one. The derived `Ord` on each enum *is* the severity
//! order, so `max` over an axis yields the most restrictive sign.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Personal-data handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrivacySign {
    #[serde(rename = "not gathered")]
    NotGathered,
    #[serde(rename = "may be stored")]
    StoredUsed,
    #[serde(rename = "may be exploited")]
    Distributed,
}

/// Availability of AI source code and the data used to fit or run it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeDataSign {
    Open,
    Public,
    Opaque,
}

/// Whether outputs may depend on who the user is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectivitySign {
    Indistinct,
    Personalised,
}

impl PrivacySign {
    pub const ALL: [PrivacySign; 3] = [Self::NotGathered, Self::StoredUsed, Self::Distributed];

    /// Wire value used by the `X-Personal-Data` header.
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NotGathered => "not gathered",
            Self::StoredUsed => "may be stored",
            Self::Distributed => "may be exploited",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl CodeDataSign {
    pub const ALL: [CodeDataSign; 3] = [Self::Open, Self::Public, Self::Opaque];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Open => "open",
            Self::Public => "public",
            Self::Opaque => "opaque",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl ObjectivitySign {
    pub const ALL: [ObjectivitySign; 2] = [Self::Indistinct, Self::Personalised];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Indistinct => "indistinct",
            Self::Personalised => "personalised",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for PrivacySign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for CodeDataSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for ObjectivitySign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Privacy,
    CodeData,
    Objectivity,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Privacy => "privacy",
            Axis::CodeData => "code/data",
            Axis::Objectivity => "objectivity",
        })
    }
}

/// A sign value on some axis, for callers that handle axes generically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignValue {
    Privacy(PrivacySign),
    CodeData(CodeDataSign),
    Objectivity(ObjectivitySign),
}

impl SignValue {
    pub fn axis(self) -> Axis {
        match self {
            SignValue::Privacy(_) => Axis::Privacy,
            SignValue::CodeData(_) => Axis::CodeData,
            SignValue::Objectivity(_) => Axis::Objectivity,
        }
    }

    /// Position in the axis' severity order, starting at zero.
    pub fn rank(self) -> u8 {
        match self {
            SignValue::Privacy(v) => v as u8,
            SignValue::CodeData(v) => v as u8,
            SignValue::Objectivity(v) => v as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sign value {value:?} does not belong to the {axis} axis")]
pub struct MismatchedAxis {
    pub axis: Axis,
    pub value: SignValue,
}

/// Compares two sign values under the severity order of `axis`.
pub fn severity_compare(
    axis: Axis,
    a: SignValue,
    b: SignValue,
) -> Result<Ordering, MismatchedAxis> {
    for v in [a, b] {
        if v.axis() != axis {
            return Err(MismatchedAxis { axis, value: v });
        }
    }
    Ok(a.rank().cmp(&b.rank()))
}

/// The three-axis transparency state of a service or system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignTriplet {
    pub privacy: PrivacySign,
    pub code_data: CodeDataSign,
    pub objectivity: ObjectivitySign,
}

/// The triplet of a system with no personal data use and no AI component.
pub const NO_AI_TRIPLET: SignTriplet = SignTriplet {
    privacy: PrivacySign::NotGathered,
    code_data: CodeDataSign::Open,
    objectivity: ObjectivitySign::Indistinct,
};

pub const INDISTINCT_RULE: &str = "indistinct requires not-gathered or open";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TripletValidation {
    Valid,
    Violation(&'static str),
}

impl TripletValidation {
    pub fn is_valid(&self) -> bool {
        matches!(self, TripletValidation::Valid)
    }
}

impl SignTriplet {
    pub const fn new(
        privacy: PrivacySign,
        code_data: CodeDataSign,
        objectivity: ObjectivitySign,
    ) -> Self {
        Self {
            privacy,
            code_data,
            objectivity,
        }
    }

    /// All 18 combinations, in lexicographic severity order.
    pub fn all() -> impl Iterator<Item = SignTriplet> {
        PrivacySign::ALL.into_iter().flat_map(|p| {
            CodeDataSign::ALL.into_iter().flat_map(move |c| {
                ObjectivitySign::ALL
                    .into_iter()
                    .map(move |o| SignTriplet::new(p, c, o))
            })
        })
    }

    /// Per-axis maximum.
    pub fn join(self, other: SignTriplet) -> SignTriplet {
        SignTriplet {
            privacy: self.privacy.max(other.privacy),
            code_data: self.code_data.max(other.code_data),
            objectivity: self.objectivity.max(other.objectivity),
        }
    }

    pub fn is_valid(&self) -> bool {
        validate_triplet(self).is_valid()
    }
}

impl fmt::Display for SignTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} / {} / {}",
            self.privacy, self.code_data, self.objectivity
        )
    }
}

/// Checks the combination rule: an indistinct sign can only be shown when
/// no personal data is gathered or when code and data are fully open.
pub fn validate_triplet(t: &SignTriplet) -> TripletValidation {
    if t.objectivity == ObjectivitySign::Indistinct
        && t.privacy != PrivacySign::NotGathered
        && t.code_data != CodeDataSign::Open
    {
        TripletValidation::Violation(INDISTINCT_RULE)
    } else {
        TripletValidation::Valid
    }
}
