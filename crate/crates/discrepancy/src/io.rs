//! Flat-file formats.
//!
//! Set systems: line 1 `n m`, then `m` lines `k j_1 ... j_k` (0-based).
//! Weighted systems: line 1 `n m nnz`, then `nnz` lines `i j a_ij`.
//! Assignments: one line of space-separated `1` / `-1`.
//! Fraction vectors: one value per line, decimal in `[0, 1]` or `0x`-prefixed
//! hex numerators of `value / 2^bits`.
//! JSON mirrors of the instance types use their serde derives.

use crate::error::{Error, Result};
use crate::instance::{Assignment, SetSystem, WeightedSystem};

fn parse_tokens<T: std::str::FromStr>(line: &str, lineno: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad token {t:?}"),
            })
        })
        .collect()
}

pub fn parse_set_system(text: &str) -> Result<SetSystem> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (lineno, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let head: Vec<usize> = parse_tokens(header, lineno + 1)?;
    if head.len() != 2 {
        return Err(Error::Parse { line: lineno + 1, msg: "expected `n m`".into() });
    }
    let (n, m) = (head[0], head[1]);
    let mut sets = Vec::with_capacity(m);
    for _ in 0..m {
        let (lineno, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("expected {m} set lines"),
        })?;
        let row: Vec<usize> = parse_tokens(line, lineno + 1)?;
        if row.is_empty() {
            return Err(Error::Parse { line: lineno + 1, msg: "expected `k j_1 ... j_k`".into() });
        }
        let (k, elems) = (row[0], &row[1..]);
        if elems.len() != k {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("declared {k} elements, found {}", elems.len()),
            });
        }
        sets.push(elems.to_vec());
    }
    SetSystem::new(n, sets)
}

pub fn format_set_system(sys: &SetSystem) -> String {
    let mut out = format!("{} {}\n", sys.n, sys.m());
    for row in &sys.sets {
        out.push_str(&row.len().to_string());
        for j in row {
            out.push(' ');
            out.push_str(&j.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_weighted_system(text: &str) -> Result<WeightedSystem> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (lineno, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let head: Vec<usize> = parse_tokens(header, lineno + 1)?;
    if head.len() != 3 {
        return Err(Error::Parse { line: lineno + 1, msg: "expected `n m nnz`".into() });
    }
    let (n, m, nnz) = (head[0], head[1], head[2]);
    let mut triples = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (lineno, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("expected {nnz} entry lines"),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse { line: lineno + 1, msg: "expected `i j a`".into() });
        }
        let i: usize = toks[0].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad row index {:?}", toks[0]),
        })?;
        let j: usize = toks[1].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad column index {:?}", toks[1]),
        })?;
        let a: f64 = toks[2].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad value {:?}", toks[2]),
        })?;
        triples.push((i, j, a));
    }
    WeightedSystem::from_triples(n, m, &triples)
}

pub fn format_weighted_system(sys: &WeightedSystem) -> String {
    let mut out = format!("{} {} {}\n", sys.n, sys.m, sys.nnz());
    for (i, row) in sys.rows.iter().enumerate() {
        for &(j, a) in row {
            out.push_str(&format!("{i} {j} {a}\n"));
        }
    }
    out
}

pub fn parse_assignment(text: &str) -> Result<Assignment> {
    let mut chi = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<i8> = parse_tokens(line, lineno + 1)?;
        chi.extend(vals);
    }
    Assignment::new(chi)
}

pub fn format_assignment(chi: &Assignment) -> String {
    let mut out = String::with_capacity(chi.len() * 3);
    for (k, &c) in chi.chi.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        out.push_str(if c == 1 { "1" } else { "-1" });
    }
    out.push('\n');
    out
}

/// Fraction vector: decimal values per line, or `0x` hex numerators over
/// `2^bits`.
pub fn parse_fraction_vector(text: &str, bits: u32) -> Result<Vec<f64>> {
    let mut vals = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = if let Some(hex) = t.strip_prefix("0x") {
            let num = u128::from_str_radix(hex, 16).map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad hex numerator {t:?}"),
            })?;
            num as f64 / (2f64).powi(bits as i32)
        } else {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad value {t:?}"),
            })?
        };
        vals.push(v);
    }
    Ok(vals)
}

pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<usize> = parse_tokens(t, lineno + 1)?;
        if toks.len() != 2 {
            return Err(Error::Parse { line: lineno + 1, msg: "expected `u v`".into() });
        }
        edges.push((toks[0], toks[1]));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_system_round_trip() {
        let sys = SetSystem::new(5, vec![vec![0, 2, 4], vec![1]]).unwrap();
        let text = format_set_system(&sys);
        assert_eq!(parse_set_system(&text).unwrap(), sys);
    }

    #[test]
    fn weighted_round_trip() {
        let sys = WeightedSystem::from_triples(4, 2, &[(0, 1, -2.5), (1, 3, 0.125)]).unwrap();
        let text = format_weighted_system(&sys);
        assert_eq!(parse_weighted_system(&text).unwrap(), sys);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_set_system("2 1\n2 0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assignment_round_trip_and_validation() {
        let a = Assignment::new(vec![1, -1, 1]).unwrap();
        assert_eq!(parse_assignment(&format_assignment(&a)).unwrap(), a);
        assert!(parse_assignment("1 0 1").is_err());
    }

    #[test]
    fn fraction_hex_and_decimal() {
        let v = parse_fraction_vector("0.5\n0x8\n", 4).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
    }
}
