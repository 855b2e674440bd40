//! The TOML case format: a direct serialization of [`RawCase`].

use super::{CaseError, RawCase};

pub(super) fn parse(text: &str) -> Result<RawCase, CaseError> {
    toml::from_str(text).map_err(|e| CaseError::Native(e.to_string()))
}

/// Serializes a case to the TOML format accepted by [`super::parse_case`].
pub fn to_native(case: &RawCase) -> String {
    toml::to_string(case).expect("case serializes to TOML")
}
