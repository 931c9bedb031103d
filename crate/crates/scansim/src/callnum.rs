//! Library of Congress call numbers: parsing, canonical formatting, and the
//! total order that puts books on shelves.
//!
//! Grammar: `LETTERS NUMBER [ "." CUTTER [ CUTTER ] ] [ YEAR ]`, whitespace
//! tolerant between components. `LETTERS` is 1-3 uppercase letters, `NUMBER`
//! is an integer 1-9999 with an optional decimal fraction, a cutter is one
//! uppercase letter followed by digits that compare as a decimal fraction,
//! and `YEAR` is four digits.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One cutter: a letter plus digits read as a decimal fraction
/// (`S5` sorts before `S52` because 0.5 < 0.52).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cutter {
    pub letter: char,
    pub digits: String,
}

impl Cutter {
    pub fn new(letter: char, digits: &str) -> Self {
        Cutter {
            letter,
            digits: digits.to_string(),
        }
    }
}

/// A parsed, totally ordered call number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallNumber {
    /// 1-3 uppercase class letters, e.g. `DS`.
    pub class_letters: String,
    /// Integer part of the class number, 1-9999.
    pub class_int: u32,
    /// Fractional digits of the class number, trailing zeros stripped.
    /// Empty when the class number is an integer.
    pub class_frac: String,
    /// Up to two cutters.
    pub cutters: Vec<Cutter>,
    /// Optional four-digit year.
    pub year: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed call number at position {position}: {reason}")]
pub struct MalformedCallNumber {
    pub position: usize,
    pub reason: String,
}

impl MalformedCallNumber {
    fn new(position: usize, reason: impl Into<String>) -> Self {
        MalformedCallNumber {
            position,
            reason: reason.into(),
        }
    }
}

/// Compare digit strings as decimal fractions. Lexicographic comparison is
/// exactly decimal-fraction order once trailing zeros are stripped, and
/// breaks `"5"` vs `"50"` style ties deterministically (shorter first).
fn cmp_fraction(a: &str, b: &str) -> Ordering {
    a.cmp(b)
}

impl CallNumber {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.class_letters
            .cmp(&other.class_letters)
            .then_with(|| self.class_int.cmp(&other.class_int))
            .then_with(|| cmp_fraction(&self.class_frac, &other.class_frac))
            .then_with(|| {
                for (a, b) in self.cutters.iter().zip(other.cutters.iter()) {
                    let c = a
                        .letter
                        .cmp(&b.letter)
                        .then_with(|| cmp_fraction(&a.digits, &b.digits));
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                self.cutters.len().cmp(&other.cutters.len())
            })
            // missing year sorts before any year
            .then_with(|| self.year.cmp(&other.year))
    }
}

impl Ord for CallNumber {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl PartialOrd for CallNumber {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Three-way comparison of call numbers.
pub fn compare_call_numbers(a: &CallNumber, b: &CallNumber) -> Ordering {
    a.cmp(b)
}

struct Scanner<'a> {
    chars: Vec<char>,
    pos: usize,
    _text: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            chars: text.chars().collect(),
            pos: 0,
            _text: text,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if pred(c)) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }
}

/// Parse a call number from text.
pub fn parse_call_number(text: &str) -> Result<CallNumber, MalformedCallNumber> {
    let mut s = Scanner::new(text);
    s.skip_ws();
    if s.peek().is_none() {
        return Err(MalformedCallNumber::new(0, "empty input"));
    }

    let letters = s.take_while(|c| c.is_ascii_uppercase());
    if letters.is_empty() {
        return Err(MalformedCallNumber::new(
            s.pos,
            "expected 1-3 uppercase class letters",
        ));
    }
    if letters.len() > 3 {
        return Err(MalformedCallNumber::new(
            s.pos,
            "class letters longer than 3",
        ));
    }

    s.skip_ws();
    let int_digits = s.take_while(|c| c.is_ascii_digit());
    if int_digits.is_empty() {
        return Err(MalformedCallNumber::new(
            s.pos,
            "expected class number after letters",
        ));
    }
    let class_int: u32 = int_digits
        .parse()
        .map_err(|_| MalformedCallNumber::new(s.pos, "class number out of range"))?;
    if !(1..=9999).contains(&class_int) {
        return Err(MalformedCallNumber::new(
            s.pos,
            "class number must be 1-9999",
        ));
    }

    // A dot directly followed by a digit is the class fraction; followed by a
    // letter it introduces the first cutter.
    let mut class_frac = String::new();
    if s.peek() == Some('.') {
        if let Some(c) = s.chars.get(s.pos + 1) {
            if c.is_ascii_digit() {
                s.bump();
                class_frac = s.take_while(|c| c.is_ascii_digit());
            }
        } else {
            return Err(MalformedCallNumber::new(s.pos, "trailing dot"));
        }
    }
    // canonical form has no trailing zeros in the fraction
    while class_frac.ends_with('0') {
        class_frac.pop();
    }

    let mut cutters = Vec::new();
    s.skip_ws();
    if s.peek() == Some('.') {
        s.bump();
        s.skip_ws();
        cutters.push(parse_cutter(&mut s)?);
        s.skip_ws();
        // optional second cutter, no dot
        if matches!(s.peek(), Some(c) if c.is_ascii_uppercase()) {
            cutters.push(parse_cutter(&mut s)?);
            s.skip_ws();
        }
    }

    let mut year = None;
    s.skip_ws();
    if matches!(s.peek(), Some(c) if c.is_ascii_digit()) {
        let digits = s.take_while(|c| c.is_ascii_digit());
        if digits.len() != 4 {
            return Err(MalformedCallNumber::new(s.pos, "year must be 4 digits"));
        }
        year = Some(digits.parse().unwrap());
    }

    s.skip_ws();
    if let Some(c) = s.peek() {
        return Err(MalformedCallNumber::new(
            s.pos,
            format!("unexpected character {c:?}"),
        ));
    }

    Ok(CallNumber {
        class_letters: letters,
        class_int,
        class_frac,
        cutters,
        year,
    })
}

fn parse_cutter(s: &mut Scanner) -> Result<Cutter, MalformedCallNumber> {
    let letter = match s.bump() {
        Some(c) if c.is_ascii_uppercase() => c,
        _ => {
            return Err(MalformedCallNumber::new(
                s.pos,
                "expected cutter letter",
            ))
        }
    };
    let digits = s.take_while(|c| c.is_ascii_digit());
    if digits.is_empty() {
        return Err(MalformedCallNumber::new(s.pos, "expected cutter digits"));
    }
    Ok(Cutter { letter, digits })
}

/// Canonical text form: letters, number, ` .CUTTER [CUTTER]`, ` YEAR`.
pub fn format_call_number(c: &CallNumber) -> String {
    c.to_string()
}

impl fmt::Display for CallNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class_letters, self.class_int)?;
        if !self.class_frac.is_empty() {
            write!(f, ".{}", self.class_frac)?;
        }
        for (i, cutter) in self.cutters.iter().enumerate() {
            if i == 0 {
                write!(f, " .{}{}", cutter.letter, cutter.digits)?;
            } else {
                write!(f, " {}{}", cutter.letter, cutter.digits)?;
            }
        }
        if let Some(y) = self.year {
            write!(f, " {y:04}")?;
        }
        Ok(())
    }
}

impl FromStr for CallNumber {
    type Err = MalformedCallNumber;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_call_number(s)
    }
}
