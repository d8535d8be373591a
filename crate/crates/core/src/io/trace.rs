use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::domain::{BranchKind, BranchRecord, Tid};
use crate::error::{Error, Result};

/// One thread's dynamic branch stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub name: String,
    pub records: Vec<BranchRecord>,
}

impl Trace {
    pub fn new(name: impl Into<String>, records: Vec<BranchRecord>) -> Self {
        Trace {
            name: name.into(),
            records,
        }
    }

    /// Branches plus the non-branch instructions between them.
    pub fn instruction_count(&self) -> u64 {
        self.records.iter().map(|r| r.instructions()).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Serializes to the line format `pc,kind,taken,target,inst_gap`.
pub fn format_trace(trace: &Trace) -> String {
    let mut out = String::with_capacity(trace.records.len() * 24);
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{:x},{},{},{:x},{}",
            r.pc,
            r.kind.token(),
            r.taken as u8,
            r.target,
            r.inst_gap
        );
    }
    out
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    fs::write(path, format_trace(trace)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trace_str(&text, path, name)
}

/// Parses trace text; `origin` only labels errors.
pub fn parse_trace_str(text: &str, origin: &Path, name: impl Into<String>) -> Result<Trace> {
    let mut records = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: PathBuf::from(origin),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [pc, kind, taken, target, gap] = fields[..] else {
            return Err(err(format!("expected 5 comma-separated fields, found {}", fields.len())));
        };
        let hex = |s: &str, what: &str| {
            u64::from_str_radix(s, 16).map_err(|_| err(format!("{what} '{s}' is not a hex number")))
        };
        let pc = hex(pc, "pc")?;
        let target = hex(target, "target")?;
        let kind = BranchKind::from_token(kind)
            .ok_or_else(|| err(format!("unknown branch kind '{kind}' (valid: cond, ind, call, ret)")))?;
        let taken = match taken {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("taken flag must be 0 or 1, got '{other}'"))),
        };
        let inst_gap = gap
            .parse::<u32>()
            .map_err(|_| err(format!("inst_gap '{gap}' is not a non-negative integer")))?;
        records.push(BranchRecord {
            pc,
            kind,
            taken,
            target,
            inst_gap,
            tid: Tid(0),
        });
    }
    Ok(Trace::new(name, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Trace> {
        parse_trace_str(text, Path::new("t.trace"), "t")
    }

    #[test]
    fn parses_documented_line() {
        let t = parse("400100,cond,1,0,3\n").unwrap();
        let r = t.records[0];
        assert_eq!((r.pc, r.kind, r.taken, r.target, r.inst_gap), (0x400100, BranchKind::Conditional, true, 0, 3));
        assert_eq!(t.instruction_count(), 4);
    }

    #[test]
    fn empty_input() {
        let t = parse("").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.instruction_count(), 0);
    }

    #[test]
    fn bad_hex_names_line() {
        let e = parse("zz,cond,1,0,3").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        let e = parse("# header\n10,cond,1,0,3\n10,jmp,1,0,3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        assert!(e.to_string().contains("jmp"));
    }

    #[test]
    fn crlf_and_comments() {
        let t = parse("# c\r\n10,ret,1,20,0\r\n\r\n14,ind,1,30,2\r\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.records[1].kind, BranchKind::Indirect);
    }

    #[test]
    fn round_trip() {
        let t = parse("400100,cond,0,400200,3\nffff800000000000,call,1,dead0,0\n").unwrap();
        assert_eq!(parse(&format_trace(&t)).unwrap(), t);
    }
}
