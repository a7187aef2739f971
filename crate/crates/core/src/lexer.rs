use std::fmt;

use crate::parser::SyntaxError;

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    /// A bare or back-quoted word. Keywords are recognised by the parser.
    Word(String),
    Number(String),
    Str {
        text: String,
        quote: char,
    },
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Semicolon,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Word(w) => write!(f, "`{w}`"),
            TokenKind::Number(n) => write!(f, "number {n}"),
            TokenKind::Str { text, quote } => write!(f, "string {quote}{text}{quote}"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Star => f.write_str("`*`"),
            TokenKind::Plus => f.write_str("`+`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Slash => f.write_str("`/`"),
            TokenKind::Eq => f.write_str("`=`"),
            TokenKind::Ne => f.write_str("`!=`"),
            TokenKind::Lt => f.write_str("`<`"),
            TokenKind::Gt => f.write_str("`>`"),
            TokenKind::Le => f.write_str("`<=`"),
            TokenKind::Ge => f.write_str("`>=`"),
            TokenKind::Semicolon => f.write_str("`;`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset into the source text.
    pub pos: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                TokenKind::Dot
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b'*' => {
                i += 1;
                TokenKind::Star
            }
            b'+' => {
                i += 1;
                TokenKind::Plus
            }
            b'-' => {
                i += 1;
                TokenKind::Minus
            }
            b'/' => {
                i += 1;
                TokenKind::Slash
            }
            b';' => {
                i += 1;
                TokenKind::Semicolon
            }
            b'=' => {
                i += if bytes.get(i + 1) == Some(&b'=') {
                    2
                } else {
                    1
                };
                TokenKind::Eq
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                TokenKind::Ne
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    TokenKind::Le
                }
                Some(b'>') => {
                    i += 2;
                    TokenKind::Ne
                }
                _ => {
                    i += 1;
                    TokenKind::Lt
                }
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    TokenKind::Ge
                } else {
                    i += 1;
                    TokenKind::Gt
                }
            }
            b'"' | b'\'' => {
                let quote = c;
                i += 1;
                let body_start = i;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(SyntaxError::new(
                                start,
                                "unterminated string literal",
                                &["closing quote"],
                            ))
                        }
                        Some(&b) if b == quote => {
                            // doubled quote is an escaped quote
                            if bytes.get(i + 1) == Some(&quote) {
                                i += 2;
                                continue;
                            }
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                let text = src[body_start..i].to_string();
                i += 1;
                TokenKind::Str {
                    text,
                    quote: quote as char,
                }
            }
            b'`' => {
                i += 1;
                let body_start = i;
                while i < bytes.len() && bytes[i] != b'`' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(SyntaxError::new(
                        start,
                        "unterminated quoted identifier",
                        &["`"],
                    ));
                }
                let word = src[body_start..i].to_string();
                i += 1;
                TokenKind::Word(word)
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                TokenKind::Number(src[start..i].to_string())
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                TokenKind::Word(src[start..i].to_string())
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(SyntaxError::new(
                    start,
                    format!("unexpected character `{ch}`"),
                    &[],
                ));
            }
        };
        out.push(Token { kind, pos: start });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn splits_qualified_names_and_operators() {
        assert_eq!(
            kinds("T1.Name>=3.5"),
            vec![
                TokenKind::Word("T1".into()),
                TokenKind::Dot,
                TokenKind::Word("Name".into()),
                TokenKind::Ge,
                TokenKind::Number("3.5".into()),
            ]
        );
        assert_eq!(kinds("a<>b")[1], TokenKind::Ne);
    }

    #[test]
    fn keeps_string_contents_verbatim() {
        assert_eq!(
            kinds(r#"'it''s' "Alberta""#),
            vec![
                TokenKind::Str {
                    text: "it''s".into(),
                    quote: '\''
                },
                TokenKind::Str {
                    text: "Alberta".into(),
                    quote: '"'
                },
            ]
        );
        assert!(tokenize("'open").is_err());
    }
}
