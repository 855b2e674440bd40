//! Cases shipped with the crate, addressable by name.

use std::path::Path;

use super::{parse_case, CaseError, RawCase};

const BUILTIN: &[(&str, &str)] = &[
    ("tri3", include_str!("../../data/tri3.toml")),
    ("mixed4", include_str!("../../data/mixed4.toml")),
    ("ring5", include_str!("../../data/ring5.toml")),
    ("ieee14", include_str!("../../data/case14.m")),
    ("ieee30", include_str!("../../data/case30.m")),
    ("ne39", include_str!("../../data/case39.m")),
    ("ieee57", include_str!("../../data/case57.m")),
];

const ALIASES: &[(&str, &str)] = &[("case14", "ieee14"), ("case30", "ieee30"), ("case39", "ne39"), ("case57", "ieee57")];

/// Names accepted by [`builtin_case`].
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Source text of a bundled case.
pub fn builtin_text(name: &str) -> Option<&'static str> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, n)| n);
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn builtin_case(name: &str) -> Option<RawCase> {
    let text = builtin_text(name)?;
    let mut case = parse_case(text).expect("bundled case parses");
    case.name = Some(name.to_string());
    Some(case)
}

/// Resolves a bundled case name, or else reads the argument as a path.
pub fn load_case(name_or_path: &str) -> Result<RawCase, CaseError> {
    if let Some(case) = builtin_case(name_or_path) {
        return Ok(case);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io(format!("{}: {e}", path.display())))?;
    let mut case = parse_case(&text)?;
    if case.name.is_none() {
        case.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cases_have_expected_sizes() {
        let sizes = [("tri3", 3, 3, 2), ("mixed4", 4, 4, 2), ("ring5", 5, 6, 3), ("ieee14", 14, 20, 5),
            ("ieee30", 30, 41, 6), ("ne39", 39, 46, 10), ("ieee57", 57, 80, 7)];
        for (name, n, m, g) in sizes {
            let c = builtin_case(name).unwrap();
            assert_eq!((c.buses.len(), c.active_branches().count(), c.active_generators().count()), (n, m, g), "{name}");
        }
        assert_eq!(builtin_case("case39").unwrap().buses.len(), 39);
        assert!(builtin_case("nope").is_none());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(load_case("/nonexistent/case.m"), Err(CaseError::Io(_))));
    }
}
