//! Per-service sign derivation and system-wide aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{structural_violations, AIServiceDescriptor, AccessorKind, Violation};
use crate::sign::{CodeDataSign, ObjectivitySign, PrivacySign, SignTriplet, NO_AI_TRIPLET};

/// Signs published for a whole system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSigns {
    pub triplet: SignTriplet,
    pub has_ai_services: bool,
    /// Set when the per-axis maximum broke the combination rule and the
    /// objectivity sign was raised to personalised.
    #[serde(default)]
    pub objectivity_coerced: bool,
}

impl SystemSigns {
    pub fn no_ai() -> Self {
        Self {
            triplet: NO_AI_TRIPLET,
            has_ai_services: false,
            objectivity_coerced: false,
        }
    }

    /// Code/data label for display; systems without AI show "no AI".
    pub fn code_data_label(&self) -> &'static str {
        if self.has_ai_services {
            self.triplet.code_data.as_str()
        } else {
            "no AI"
        }
    }

    /// One line per axis, e.g. `privacy: may be exploited`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "privacy: {}", self.triplet.privacy);
        let _ = writeln!(out, "code/data: {}", self.code_data_label());
        let _ = writeln!(out, "objectivity: {}", self.triplet.objectivity);
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{} / {} / {}",
            self.triplet.privacy,
            self.code_data_label(),
            self.triplet.objectivity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("descriptor {service} is invalid: {violations:?}")]
    InvalidDescriptor {
        service: String,
        violations: Vec<Violation>,
    },
    #[error("input triplet {0} breaks the combination rule")]
    InvalidInput(SignTriplet),
}

pub fn derive_service_signs(d: &AIServiceDescriptor) -> Result<SignTriplet, SignError> {
    let violations = structural_violations(d);
    if !violations.is_empty() {
        return Err(SignError::InvalidDescriptor {
            service: d.id.clone(),
            violations,
        });
    }

    let privacy = if d.data_categories.is_empty() {
        PrivacySign::NotGathered
    } else if d
        .accessors
        .iter()
        .all(|a| a.kind == AccessorKind::SystemItself)
    {
        PrivacySign::StoredUsed
    } else {
        PrivacySign::Distributed
    };

    let code_data = match (d.code_available, d.training_data_available) {
        (true, true) => CodeDataSign::Open,
        (true, false) => CodeDataSign::Public,
        _ => CodeDataSign::Opaque,
    };

    // Touching personal data is only compatible with an indistinct claim
    // when everything is open for audit.
    let indistinct =
        d.data_categories.is_empty() || (d.declared_objective && code_data == CodeDataSign::Open);
    let objectivity = if indistinct {
        ObjectivitySign::Indistinct
    } else {
        ObjectivitySign::Personalised
    };

    let t = SignTriplet {
        privacy,
        code_data,
        objectivity,
    };
    debug_assert!(t.is_valid());
    Ok(t)
}

pub fn aggregate_system_signs<'a, I>(triplets: I) -> Result<SystemSigns, SignError>
where
    I: IntoIterator<Item = &'a SignTriplet>,
{
    let mut acc: Option<SignTriplet> = None;
    for t in triplets {
        if !t.is_valid() {
            return Err(SignError::InvalidInput(*t));
        }
        acc = Some(match acc {
            None => *t,
            Some(a) => a.join(*t),
        });
    }
    let Some(mut triplet) = acc else {
        return Ok(SystemSigns::no_ai());
    };
    let mut coerced = false;
    if !triplet.is_valid() {
        triplet.objectivity = ObjectivitySign::Personalised;
        coerced = true;
    }
    Ok(SystemSigns {
        triplet,
        has_ai_services: true,
        objectivity_coerced: coerced,
    })
}
