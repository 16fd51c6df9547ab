//! Text trace format: one request per line.
//!
//! ```text
//! # comment
//! R 0x400
//! W 800 deadbeef
//! ```
//!
//! Addresses and patterns are hexadecimal; the `0x` prefix is optional. A
//! write pattern is repeated cyclically to fill the whole target row.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Read,
    Write(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Request {
    pub op: Op,
    pub addr: u64,
}

impl Request {
    pub fn read(addr: u64) -> Self {
        Request { op: Op::Read, addr }
    }

    pub fn write(addr: u64, pattern: Vec<u8>) -> Self {
        Request {
            op: Op::Write(pattern),
            addr,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self.op, Op::Write(_))
    }
}

fn strip_hex_prefix(s: &str) -> &str {
    s.strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s)
}

pub fn parse_hex_u64(s: &str) -> Option<u64> {
    let digits = strip_hex_prefix(s);
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

/// Decode a non-empty hex byte string such as `"deadbeef"`.
pub fn parse_hex_bytes(s: &str) -> Option<Vec<u8>> {
    let digits = strip_hex_prefix(s).as_bytes();
    if digits.is_empty() || !digits.len().is_multiple_of(2) {
        return None;
    }
    digits
        .chunks(2)
        .map(|pair| {
            let pair = std::str::from_utf8(pair).ok()?;
            u8::from_str_radix(pair, 16).ok()
        })
        .collect()
}

pub fn hex_bytes(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn parse_trace(text: &str) -> Result<Vec<Request>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::TraceFormat { line, msg };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let addr = |s: &str| parse_hex_u64(s).ok_or_else(|| err(format!("bad hex address {s:?}")));
        let req = match fields.as_slice() {
            ["R" | "r", a] => Request::read(addr(a)?),
            ["W" | "w", a, pattern] => {
                let bytes = parse_hex_bytes(pattern)
                    .ok_or_else(|| err(format!("bad hex byte pattern {pattern:?}")))?;
                Request::write(addr(a)?, bytes)
            }
            ["R" | "r", ..] => return Err(err("expected `R <hex-addr>`".into())),
            ["W" | "w", ..] => return Err(err("expected `W <hex-addr> <hex-byte-pattern>`".into())),
            [other, ..] => return Err(err(format!("unknown operation {other:?}"))),
            [] => unreachable!(),
        };
        out.push(req);
    }
    Ok(out)
}

pub fn format_trace(requests: &[Request]) -> String {
    let mut s = String::new();
    for r in requests {
        match &r.op {
            Op::Read => writeln!(s, "R {:#x}", r.addr),
            Op::Write(p) => writeln!(s, "W {:#x} {}", r.addr, hex_bytes(p)),
        }
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_reads_writes_and_comments() {
        let text = "# header\n\nR 0x400\n  w 800 DEADbeef  \nR 0\n";
        let t = parse_trace(text).unwrap();
        assert_eq!(
            t,
            vec![
                Request::read(0x400),
                Request::write(0x800, vec![0xde, 0xad, 0xbe, 0xef]),
                Request::read(0),
            ]
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("R 0\nX 10\n", 2),
            ("# c\nR\n", 2),
            ("R zz\n", 1),
            ("R 0\nR 1\nW 10 abc\n", 3),
            ("W 10\n", 1),
            ("R 10 11\n", 1),
        ];
        for (text, line) in cases {
            match parse_trace(text) {
                Err(Error::TraceFormat { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn format_then_parse_is_identity(reqs in prop::collection::vec(
            (any::<u64>(), prop::option::of(prop::collection::vec(any::<u8>(), 1..8))),
            0..40,
        )) {
            let reqs: Vec<Request> = reqs
                .into_iter()
                .map(|(a, p)| match p {
                    Some(p) => Request::write(a, p),
                    None => Request::read(a),
                })
                .collect();
            prop_assert_eq!(parse_trace(&format_trace(&reqs)).unwrap(), reqs);
        }
    }
}
