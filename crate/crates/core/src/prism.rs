//! Explicit interval-MDP export in the PRISM style: a states file with
//! labels and a transitions file with `src act dst [lo,hi] label` lines.
//!
//! Bounds are written with six significant digits, lower bounds rounded
//! down and upper bounds rounded up, so the exported model never admits
//! less than the in-memory one.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::abstraction::{Imdp, StateId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrismState {
    pub index: usize,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrismTransition {
    pub src: usize,
    pub act: usize,
    pub dst: usize,
    pub lo: f64,
    pub hi: f64,
    pub label: String,
}

/// Flat explicit model, as written to or read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PrismModel {
    pub states: Vec<PrismState>,
    pub choices: usize,
    pub transitions: Vec<PrismTransition>,
}

/// Six significant digits, rounded towards `-inf` (`up = false`) or `+inf`.
pub fn format_bound(x: f64, up: bool) -> String {
    if x <= 0.0 {
        return "0".into();
    }
    if x >= 1.0 {
        return "1".into();
    }
    let sci = format!("{x:e}");
    let mut exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    let mantissa = x / 10f64.powi(exp) * 1e5;
    let mut digits = if up { (mantissa - 1e-6).ceil() } else { (mantissa + 1e-6).floor() } as u64;
    if digits >= 1_000_000 {
        digits /= 10;
        exp += 1;
    }
    if digits < 100_000 {
        digits = 100_000;
    }
    if up && exp >= 0 {
        return "1".into();
    }
    format!("{}.{:05}e{}", digits / 100_000, digits % 100_000, exp)
}

fn action_label(imdp: &Imdp, state: usize, choice: usize) -> String {
    match imdp.choices(state)[choice].action {
        Some(a) => format!("a{}_{}", a.target, a.rate),
        None => "deadlock".into(),
    }
}

/// Flattens `imdp` with deterministic ordering (source, action, target
/// ascending) and bounds already rounded to their written precision.
pub fn to_prism(imdp: &Imdp) -> PrismModel {
    let mut states = Vec::with_capacity(imdp.num_states());
    for s in 0..imdp.num_states() {
        let labels = match imdp.state_id(s) {
            StateId::Absorbing => vec!["absorbing".to_string()],
            StateId::Goal => vec!["goal".to_string()],
            StateId::Critical => vec!["critical".to_string()],
            StateId::Region { layer: 0, .. } => vec!["init".to_string()],
            StateId::Region { .. } => Vec::new(),
        };
        states.push(PrismState { index: s, labels });
    }
    let mut transitions = Vec::new();
    let mut choices = 0;
    for s in 0..imdp.num_states() {
        for (a, c) in imdp.choices(s).iter().enumerate() {
            choices += 1;
            let row = imdp.row(c.row);
            let label = action_label(imdp, s, a);
            let mut lines: Vec<PrismTransition> = row
                .entries
                .iter()
                .map(|&(succ, p)| PrismTransition {
                    src: s,
                    act: a,
                    dst: imdp.successor_index(row, succ),
                    lo: parse_num(&format_bound(p.lo, false)),
                    hi: parse_num(&format_bound(p.hi, true)),
                    label: label.clone(),
                })
                .collect();
            lines.sort_by_key(|t| t.dst);
            transitions.extend(lines);
        }
    }
    PrismModel { states, choices, transitions }
}

fn parse_num(s: &str) -> f64 {
    s.parse().expect("formatted bound parses")
}

impl PrismModel {
    pub fn write_states(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{}", self.states.len())?;
        for s in &self.states {
            if s.labels.is_empty() {
                writeln!(out, "{}", s.index)?;
            } else {
                writeln!(out, "{} {}", s.index, s.labels.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn write_transitions(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{} {} {}", self.states.len(), self.choices, self.transitions.len())?;
        for t in &self.transitions {
            writeln!(
                out,
                "{} {} {} [{},{}] {}",
                t.src,
                t.act,
                t.dst,
                format_bound(t.lo, false),
                format_bound(t.hi, true),
                t.label
            )?;
        }
        Ok(())
    }

    pub fn read(states: impl BufRead, transitions: impl BufRead) -> Result<Self> {
        let mut lines = states.lines().enumerate();
        let count = match lines.next() {
            Some((_, l)) => parse_field::<usize>(&l?, 1, "state count")?,
            None => return Err(Error::Parse { line: 1, msg: "empty states file".into() }),
        };
        let mut parsed = Vec::with_capacity(count);
        for (i, line) in lines {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(idx) = fields.next() else { continue };
            let index = parse_field::<usize>(idx, i + 1, "state index")?;
            if index != parsed.len() {
                return Err(Error::Parse { line: i + 1, msg: format!("expected state {}, found {index}", parsed.len()) });
            }
            parsed.push(PrismState { index, labels: fields.map(str::to_string).collect() });
        }
        if parsed.len() != count {
            return Err(Error::Parse { line: 1, msg: format!("header announces {count} states, found {}", parsed.len()) });
        }

        let mut lines = transitions.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Parse { line: 1, msg: "empty transitions file".into() }),
        };
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|f| parse_field::<usize>(f, 1, "header count"))
            .collect::<Result<_>>()?;
        let [n_states, choices, n_trans] = head[..] else {
            return Err(Error::Parse { line: 1, msg: "header must hold three counts".into() });
        };
        if n_states != count {
            return Err(Error::Parse { line: 1, msg: "state counts of the two files differ".into() });
        }
        let mut trans = Vec::with_capacity(n_trans);
        for (i, line) in lines {
            let line = line?;
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 5 {
                return Err(Error::Parse { line: line_no, msg: format!("expected 5 fields, found {}", fields.len()) });
            }
            let bounds = fields[3]
                .strip_prefix('[')
                .and_then(|b| b.strip_suffix(']'))
                .and_then(|b| b.split_once(','))
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("malformed interval {}", fields[3]) })?;
            let t = PrismTransition {
                src: parse_field(fields[0], line_no, "source")?,
                act: parse_field(fields[1], line_no, "action")?,
                dst: parse_field(fields[2], line_no, "target")?,
                lo: parse_field(bounds.0, line_no, "lower bound")?,
                hi: parse_field(bounds.1, line_no, "upper bound")?,
                label: fields[4].to_string(),
            };
            if t.src >= count || t.dst >= count || !(0.0 <= t.lo && t.lo <= t.hi && t.hi <= 1.0) {
                return Err(Error::Parse { line: line_no, msg: "transition out of range".into() });
            }
            trans.push(t);
        }
        if trans.len() != n_trans {
            return Err(Error::Parse { line: 1, msg: format!("header announces {n_trans} transitions, found {}", trans.len()) });
        }
        Ok(Self { states: parsed, choices, transitions: trans })
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid {what} '{s}'") })
}

/// Writes `<prefix>.sta` and `<prefix>.tra` into `dir`.
pub fn export_prism(imdp: &Imdp, dir: &Path, prefix: &str) -> Result<(PathBuf, PathBuf)> {
    let model = to_prism(imdp);
    let sta = dir.join(format!("{prefix}.sta"));
    let tra = dir.join(format!("{prefix}.tra"));
    let mut buf = Vec::new();
    model.write_states(&mut buf)?;
    fs::write(&sta, &buf)?;
    buf.clear();
    model.write_transitions(&mut buf)?;
    fs::write(&tra, &buf)?;
    Ok((sta, tra))
}

pub fn import_prism(states: &Path, transitions: &Path) -> Result<PrismModel> {
    let s = BufReader::new(fs::File::open(states)?);
    let t = BufReader::new(fs::File::open(transitions)?);
    PrismModel::read(s, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed_rounding() {
        assert_eq!(format_bound(0.1234564, false), "1.23456e-1");
        assert_eq!(format_bound(0.1234564, true), "1.23457e-1");
        assert_eq!(format_bound(0.5, true), "5.00000e-1");
        assert_eq!(format_bound(0.9999999, true), "1");
        assert_eq!(format_bound(0.0999999999, true), "1.00000e-1");
        assert_eq!(format_bound(0.0, false), "0");
        assert_eq!(format_bound(1.0, true), "1");
        assert_eq!(format_bound(3.2e-7, false), "3.20000e-7");
    }

    #[test]
    fn formatting_is_idempotent() {
        for i in 1..2000 {
            let x = (i as f64 * 0.618_033_988_75).fract().powi(3);
            for up in [false, true] {
                let s = format_bound(x, up);
                assert_eq!(format_bound(s.parse().unwrap(), up), s);
            }
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        let sta = "1\n0 goal\n";
        let tra = "1 1 1\n0 0 0 [0.5;0.6] a\n";
        let err = PrismModel::read(sta.as_bytes(), tra.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
