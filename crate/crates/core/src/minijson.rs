//! Minimal recursive-descent JSON parser with token accounting.
//!
//! Supports objects, arrays, strings (escapes passed through verbatim),
//! integers, booleans, and null — the subset a fee-metered in-contract
//! parser would implement. No floats, no unicode-escape decoding. The
//! token count mirrors the per-operation cost a contract platform would
//! charge for parsing.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    Array(Vec<JsonValue>),
    Object(BTreeMap<String, JsonValue>),
}

impl JsonValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            JsonValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            JsonValue::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&JsonValue> {
        match self {
            JsonValue::Object(m) => m.get(key),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input at byte {0}")]
    UnexpectedEnd(usize),
    #[error("unexpected byte {byte:?} at offset {offset}")]
    UnexpectedByte { byte: u8, offset: usize },
    #[error("invalid utf-8 in string at offset {0}")]
    BadUtf8(usize),
    #[error("integer overflow at offset {0}")]
    IntOverflow(usize),
    #[error("trailing garbage at offset {0}")]
    TrailingGarbage(usize),
    #[error("duplicate object key {0:?}")]
    DuplicateKey(String),
}

/// Parses a complete JSON document, returning the value and the number of
/// lexical tokens consumed.
pub fn parse(input: &[u8]) -> Result<(JsonValue, u64), ParseError> {
    let mut p = Parser {
        input,
        pos: 0,
        tokens: 0,
    };
    p.skip_ws();
    let value = p.value()?;
    p.skip_ws();
    if p.pos != p.input.len() {
        return Err(ParseError::TrailingGarbage(p.pos));
    }
    Ok((value, p.tokens))
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    tokens: u64,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while let Some(&b) = self.input.get(self.pos) {
            if matches!(b, b' ' | b'\t' | b'\n' | b'\r') {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Result<u8, ParseError> {
        self.input
            .get(self.pos)
            .copied()
            .ok_or(ParseError::UnexpectedEnd(self.pos))
    }

    fn bump_token(&mut self, len: usize) {
        self.pos += len;
        self.tokens += 1;
    }

    fn expect(&mut self, byte: u8) -> Result<(), ParseError> {
        let b = self.peek()?;
        if b != byte {
            return Err(ParseError::UnexpectedByte {
                byte: b,
                offset: self.pos,
            });
        }
        self.bump_token(1);
        Ok(())
    }

    fn value(&mut self) -> Result<JsonValue, ParseError> {
        match self.peek()? {
            b'{' => self.object(),
            b'[' => self.array(),
            b'"' => self.string().map(JsonValue::Str),
            b't' => self.literal(b"true", JsonValue::Bool(true)),
            b'f' => self.literal(b"false", JsonValue::Bool(false)),
            b'n' => self.literal(b"null", JsonValue::Null),
            b'-' | b'0'..=b'9' => self.integer(),
            byte => Err(ParseError::UnexpectedByte {
                byte,
                offset: self.pos,
            }),
        }
    }

    fn literal(&mut self, text: &[u8], value: JsonValue) -> Result<JsonValue, ParseError> {
        if self.input[self.pos..].starts_with(text) {
            self.bump_token(text.len());
            Ok(value)
        } else {
            Err(ParseError::UnexpectedByte {
                byte: self.input[self.pos],
                offset: self.pos,
            })
        }
    }

    fn integer(&mut self) -> Result<JsonValue, ParseError> {
        let start = self.pos;
        let negative = self.peek()? == b'-';
        if negative {
            self.pos += 1;
        }
        let mut value: i64 = 0;
        let mut digits = 0;
        while let Some(&b) = self.input.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as i64))
                .ok_or(ParseError::IntOverflow(start))?;
            self.pos += 1;
            digits += 1;
        }
        if digits == 0 {
            return Err(ParseError::UnexpectedEnd(self.pos));
        }
        // Floats and exponents are outside the supported subset.
        if let Some(&b) = self.input.get(self.pos) {
            if matches!(b, b'.' | b'e' | b'E') {
                return Err(ParseError::UnexpectedByte {
                    byte: b,
                    offset: self.pos,
                });
            }
        }
        self.tokens += 1;
        Ok(JsonValue::Int(if negative { -value } else { value }))
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        self.pos += 1; // opening quote
        let start = self.pos;
        loop {
            match self.input.get(self.pos) {
                None => return Err(ParseError::UnexpectedEnd(self.pos)),
                Some(b'"') => break,
                Some(b'\\') => {
                    // Pass escapes through verbatim; only skip the escaped byte.
                    if self.pos + 1 >= self.input.len() {
                        return Err(ParseError::UnexpectedEnd(self.pos));
                    }
                    self.pos += 2;
                }
                Some(b) if *b < 0x20 => {
                    return Err(ParseError::UnexpectedByte {
                        byte: *b,
                        offset: self.pos,
                    })
                }
                Some(_) => self.pos += 1,
            }
        }
        let raw = &self.input[start..self.pos];
        let s = std::str::from_utf8(raw)
            .map_err(|_| ParseError::BadUtf8(open))?
            .to_string();
        self.pos += 1; // closing quote
        self.tokens += 1;
        Ok(s)
    }

    fn object(&mut self) -> Result<JsonValue, ParseError> {
        self.expect(b'{')?;
        let mut map = BTreeMap::new();
        self.skip_ws();
        if self.peek()? == b'}' {
            self.bump_token(1);
            return Ok(JsonValue::Object(map));
        }
        loop {
            self.skip_ws();
            if self.peek()? != b'"' {
                return Err(ParseError::UnexpectedByte {
                    byte: self.peek()?,
                    offset: self.pos,
                });
            }
            let key = self.string()?;
            self.skip_ws();
            self.expect(b':')?;
            self.skip_ws();
            let value = self.value()?;
            if map.insert(key.clone(), value).is_some() {
                return Err(ParseError::DuplicateKey(key));
            }
            self.skip_ws();
            match self.peek()? {
                b',' => {
                    self.bump_token(1);
                }
                b'}' => {
                    self.bump_token(1);
                    return Ok(JsonValue::Object(map));
                }
                byte => {
                    return Err(ParseError::UnexpectedByte {
                        byte,
                        offset: self.pos,
                    })
                }
            }
        }
    }

    fn array(&mut self) -> Result<JsonValue, ParseError> {
        self.expect(b'[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek()? == b']' {
            self.bump_token(1);
            return Ok(JsonValue::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value()?);
            self.skip_ws();
            match self.peek()? {
                b',' => {
                    self.bump_token(1);
                }
                b']' => {
                    self.bump_token(1);
                    return Ok(JsonValue::Array(items));
                }
                byte => {
                    return Err(ParseError::UnexpectedByte {
                        byte,
                        offset: self.pos,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_document() {
        let (v, tokens) = parse(br#"{"a": [1, -2, "x"], "b": {"c": true}}"#).unwrap();
        assert_eq!(v.get("a").unwrap(),
            &JsonValue::Array(vec![
                JsonValue::Int(1),
                JsonValue::Int(-2),
                JsonValue::Str("x".into())
            ]));
        assert_eq!(v.get("b").unwrap().get("c"), Some(&JsonValue::Bool(true)));
        assert!(tokens > 10);
    }

    #[test]
    fn token_count_is_stable() {
        let doc = br#"{"id":"341576","localGoals":4}"#;
        let (_, t1) = parse(doc).unwrap();
        let (_, t2) = parse(doc).unwrap();
        assert_eq!(t1, t2);
        // { "id" : "341576" , "localGoals" : 4 } -> 9 tokens
        assert_eq!(t1, 9);
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert_eq!(parse(b"{} x"), Err(ParseError::TrailingGarbage(3)));
    }

    #[test]
    fn rejects_floats() {
        assert!(matches!(
            parse(b"1.5"),
            Err(ParseError::UnexpectedByte { byte: b'.', .. })
        ));
    }

    #[test]
    fn rejects_truncation() {
        assert!(parse(br#"{"a""#).is_err());
        assert!(parse(br#"["#).is_err());
        assert!(parse(br#""abc"#).is_err());
    }
}
