//! Reader for the subset of the MATPOWER case format used by the standard
//! test systems.

use super::{CaseError, RawBranch, RawBus, RawCase, RawGen};

struct Table {
    rows: Vec<Vec<f64>>,
    /// Source line of each row, for error messages.
    lines: Vec<usize>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    tok.parse::<f64>().map_err(|_| CaseError::Syntax { line, msg: format!("invalid number `{tok}`") })
}

/// Reads the matrix assigned to `mpc.<name>`, if present.
fn table(text: &str, name: &str) -> Result<Option<Table>, CaseError> {
    let head = format!("mpc.{name}");
    let mut lines = text.lines().enumerate();
    let (start, rest) = loop {
        let Some((i, raw)) = lines.next() else { return Ok(None) };
        let line = strip_comment(raw).trim();
        let Some(after) = line.strip_prefix(&head) else { continue };
        let after = after.trim_start();
        let Some(after) = after.strip_prefix('=') else { continue };
        let after = after.trim_start();
        let Some(body) = after.strip_prefix('[') else {
            return Err(CaseError::Syntax { line: i + 1, msg: format!("expected `[` after `{head} =`") });
        };
        break (i + 1, body.to_string());
    };
    let mut table = Table { rows: Vec::new(), lines: Vec::new() };
    let mut current: Vec<f64> = Vec::new();
    let mut current_line = start;
    let mut feed = |chunk: &str, line: usize, table: &mut Table, current: &mut Vec<f64>| -> Result<bool, CaseError> {
        let (chunk, done) = match chunk.find(']') {
            Some(i) => (&chunk[..i], true),
            None => (chunk, false),
        };
        for (k, piece) in chunk.split(';').enumerate() {
            if k > 0 && !current.is_empty() {
                table.rows.push(std::mem::take(current));
                table.lines.push(current_line);
            }
            for tok in piece.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                if current.is_empty() {
                    current_line = line;
                }
                current.push(parse_number(tok, line)?);
            }
        }
        // A newline also ends a row.
        if !current.is_empty() {
            table.rows.push(std::mem::take(current));
            table.lines.push(current_line);
        }
        Ok(done)
    };
    if feed(strip_comment(&rest), start, &mut table, &mut current)? {
        return Ok(Some(table));
    }
    for (i, raw) in lines {
        if feed(strip_comment(raw), i + 1, &mut table, &mut current)? {
            return Ok(Some(table));
        }
    }
    Err(CaseError::Syntax { line: start, msg: format!("unterminated `{head}` matrix") })
}

fn scalar(text: &str, name: &str) -> Result<Option<f64>, CaseError> {
    let head = format!("mpc.{name}");
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        let Some(after) = line.strip_prefix(&head) else { continue };
        let Some(value) = after.trim_start().strip_prefix('=') else { continue };
        let value = value.trim().trim_end_matches(';').trim();
        return parse_number(value, i + 1).map(Some);
    }
    Ok(None)
}

fn need(table: &Table, row: usize, cols: usize) -> Result<&[f64], CaseError> {
    let r = &table.rows[row];
    if r.len() < cols {
        return Err(CaseError::Syntax {
            line: table.lines[row],
            msg: format!("expected at least {cols} columns, found {}", r.len()),
        });
    }
    Ok(r)
}

fn as_id(v: f64, line: usize) -> Result<u32, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(CaseError::Syntax { line, msg: format!("invalid bus id {v}") })
    }
}

fn case_name(text: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let l = l.trim();
        let rest = l.strip_prefix("function")?;
        let (_, name) = rest.split_once('=')?;
        let name = name.trim();
        (!name.is_empty()).then(|| name.to_string())
    })
}

pub(super) fn parse(text: &str) -> Result<RawCase, CaseError> {
    let base_mva = scalar(text, "baseMVA")?.ok_or(CaseError::MissingTable("mpc.baseMVA"))?;
    let bus = table(text, "bus")?.ok_or(CaseError::MissingTable("mpc.bus"))?;
    let gen = table(text, "gen")?.ok_or(CaseError::MissingTable("mpc.gen"))?;
    let branch = table(text, "branch")?.ok_or(CaseError::MissingTable("mpc.branch"))?;
    let gencost = table(text, "gencost")?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    for i in 0..bus.rows.len() {
        let r = need(&bus, i, 3)?;
        buses.push(RawBus { id: as_id(r[0], bus.lines[i])?, pd_mw: r[2], slack: r[1] == 3.0 });
    }

    let mut generators = Vec::with_capacity(gen.rows.len());
    for i in 0..gen.rows.len() {
        let r = need(&gen, i, 10)?;
        let cost = match &gencost {
            None => Vec::new(),
            Some(gc) if i < gc.rows.len() => {
                let c = need(gc, i, 4)?;
                let line = gc.lines[i];
                if c[0] != 2.0 {
                    return Err(CaseError::Syntax { line, msg: "only polynomial (model 2) costs are supported".into() });
                }
                let ncost = c[3];
                if !(ncost >= 0.0 && ncost.fract() == 0.0) || c.len() < 4 + ncost as usize {
                    return Err(CaseError::Syntax { line, msg: format!("bad coefficient count {ncost}") });
                }
                c[4..4 + ncost as usize].to_vec()
            }
            Some(gc) => {
                return Err(CaseError::Syntax {
                    line: gc.lines.last().copied().unwrap_or(0),
                    msg: format!("gencost has no row for generator {}", i + 1),
                })
            }
        };
        generators.push(RawGen {
            bus: as_id(r[0], gen.lines[i])?,
            pg_mw: r[1],
            pmax_mw: r[8],
            pmin_mw: r[9],
            cost,
            in_service: r[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch.rows.len());
    for i in 0..branch.rows.len() {
        let r = need(&branch, i, 4)?;
        let line = branch.lines[i];
        let rate = r.get(5).copied();
        branches.push(RawBranch {
            from: as_id(r[0], line)?,
            to: as_id(r[1], line)?,
            x_pu: r[3],
            rate_mw: rate.map(|v| if v == 0.0 { f64::INFINITY } else { v }),
            in_service: r.get(10).is_none_or(|&s| s > 0.0),
        });
    }

    Ok(RawCase { name: case_name(text), base_mva, buses, generators, branches })
}
