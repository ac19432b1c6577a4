//! Bearer-token authentication. Token issuance happens elsewhere; the
//! gateway only asks a verifier which user a token belongs to.

use std::collections::BTreeMap;

pub trait TokenVerifier: Send + Sync {
    /// The user id the token authenticates, if any.
    fn verify(&self, token: &str) -> Option<String>;
}

/// A fixed token table, as read from the configuration.
#[derive(Debug, Clone, Default)]
pub struct StaticTokens(BTreeMap<String, String>);

impl StaticTokens {
    pub fn new(tokens: BTreeMap<String, String>) -> Self {
        Self(tokens)
    }
}

impl<const N: usize> From<[(&str, &str); N]> for StaticTokens {
    fn from(pairs: [(&str, &str); N]) -> Self {
        Self(
            pairs
                .iter()
                .map(|(t, u)| (t.to_string(), u.to_string()))
                .collect(),
        )
    }
}

impl TokenVerifier for StaticTokens {
    fn verify(&self, token: &str) -> Option<String> {
        self.0.get(token).cloned()
    }
}

/// Extracts the token from an `Authorization: Bearer <token>` value.
pub fn bearer(value: &str) -> Option<&str> {
    let (scheme, token) = value.trim().split_once(' ')?;
    let token = token.trim();
    (scheme.eq_ignore_ascii_case("bearer") && !token.is_empty()).then_some(token)
}
