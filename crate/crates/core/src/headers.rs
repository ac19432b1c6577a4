//! The transparency header protocol.
//!
//! Three response headers carry the system signs:
//!
//! | Header                       | Values                                          |
//! | ---------------------------- | ----------------------------------------------- |
//! | `X-Personal-Data`            | `not gathered`, `may be stored`, `may be exploited` |
//! | `X-Transparency-Code-Data`   | `open`, `public`, `opaque`                      |
//! | `X-Transparency-Objectivity` | `indistinct`, `personalised`                    |
//!
//! Names are matched case-insensitively on parse; values must match exactly
//! once surrounding whitespace is trimmed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sign::{CodeDataSign, ObjectivitySign, PrivacySign, SignTriplet};
use crate::signs::SystemSigns;

pub const PERSONAL_DATA: &str = "X-Personal-Data";
pub const CODE_DATA: &str = "X-Transparency-Code-Data";
pub const OBJECTIVITY: &str = "X-Transparency-Objectivity";

pub const HEADER_NAMES: [&str; 3] = [PERSONAL_DATA, CODE_DATA, OBJECTIVITY];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeaderSet(pub Vec<(String, String)>);

impl HeaderSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, value: &str) {
        self.0.push((name.to_owned(), value.to_owned()));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    /// `Name: value` lines in emission order.
    pub fn render(&self) -> String {
        self.iter().map(|(n, v)| format!("{n}: {v}\n")).collect()
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for HeaderSet {
    fn from_iter<T: IntoIterator<Item = (&'a str, &'a str)>>(iter: T) -> Self {
        HeaderSet(
            iter.into_iter()
                .map(|(n, v)| (n.to_owned(), v.to_owned()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeaderError {
    #[error("missing header {0}")]
    MissingHeader(&'static str),
    #[error("header {0} appears more than once")]
    DuplicateHeader(&'static str),
    #[error("header {name} has unknown value {value:?}")]
    UnknownValue { name: &'static str, value: String },
    #[error("header values combine to an invalid sign triplet {0}")]
    InvalidCombination(SignTriplet),
}

pub fn encode_sign_headers(s: &SystemSigns) -> HeaderSet {
    let t = &s.triplet;
    let mut h = HeaderSet::new();
    h.push(PERSONAL_DATA, t.privacy.as_str());
    h.push(CODE_DATA, t.code_data.as_str());
    h.push(OBJECTIVITY, t.objectivity.as_str());
    h
}

fn single<'a>(h: &'a HeaderSet, name: &'static str) -> Result<&'a str, HeaderError> {
    let mut found = h
        .iter()
        .filter(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.trim());
    let first = found.next().ok_or(HeaderError::MissingHeader(name))?;
    if found.next().is_some() {
        return Err(HeaderError::DuplicateHeader(name));
    }
    Ok(first)
}

/// Inverse of [`encode_sign_headers`]. The protocol cannot express the
/// absence of AI services, so the result always has `has_ai_services` set.
pub fn parse_sign_headers(h: &HeaderSet) -> Result<SystemSigns, HeaderError> {
    let unknown = |name: &'static str, v: &str| HeaderError::UnknownValue {
        name,
        value: v.to_owned(),
    };

    let p = single(h, PERSONAL_DATA)?;
    let privacy = PrivacySign::from_wire(p).ok_or_else(|| unknown(PERSONAL_DATA, p))?;
    let c = single(h, CODE_DATA)?;
    let code_data = CodeDataSign::from_wire(c).ok_or_else(|| unknown(CODE_DATA, c))?;
    let o = single(h, OBJECTIVITY)?;
    let objectivity = ObjectivitySign::from_wire(o).ok_or_else(|| unknown(OBJECTIVITY, o))?;

    let triplet = SignTriplet {
        privacy,
        code_data,
        objectivity,
    };
    if !triplet.is_valid() {
        return Err(HeaderError::InvalidCombination(triplet));
    }
    Ok(SystemSigns {
        triplet,
        has_ai_services: true,
        objectivity_coerced: false,
    })
}
