//! Attack-bound files: comma-separated rows of either
//! `bus_id, delta_max_mw` or `bus_id, pd_min_mw, pd_max_mw`.
//! Lines starting with `#` and a leading header row are ignored.

use super::CaseError;

#[derive(Clone, Debug, PartialEq)]
pub enum AttackFile {
    /// Symmetric per-bus deviation limits in MW.
    Delta(Vec<(u32, f64)>),
    /// Per-bus demand envelopes `(bus, min, max)` in MW.
    Envelope(Vec<(u32, f64, f64)>),
}

pub fn parse_attack_bounds(text: &str) -> Result<AttackFile, CaseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut delta = Vec::new();
    let mut env = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CaseError::Bounds(e.to_string()))?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        let nums: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let nums = match nums {
            Ok(v) => v,
            Err(_) if delta.is_empty() && env.is_empty() && k == 0 => continue,
            Err(_) => return Err(CaseError::Syntax { line, msg: "non-numeric attack-bound field".into() }),
        };
        let bus = nums[0];
        if !(bus >= 0.0 && bus.fract() == 0.0) {
            return Err(CaseError::Syntax { line, msg: format!("invalid bus id {bus}") });
        }
        let bus = bus as u32;
        match nums.len() {
            2 if nums[1] >= 0.0 => delta.push((bus, nums[1])),
            2 => return Err(CaseError::Syntax { line, msg: "negative deviation bound".into() }),
            3 if nums[1] <= nums[2] => env.push((bus, nums[1], nums[2])),
            3 => return Err(CaseError::Syntax { line, msg: "envelope minimum above maximum".into() }),
            n => return Err(CaseError::Syntax { line, msg: format!("expected 2 or 3 fields, found {n}") }),
        }
    }
    match (delta.is_empty(), env.is_empty()) {
        (false, false) => Err(CaseError::Bounds("file mixes deviation and envelope rows".into())),
        (_, true) => Ok(AttackFile::Delta(delta)),
        (true, false) => Ok(AttackFile::Envelope(env)),
    }
}
