use crate::condition::CmpOp;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Word(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Arrow,
    Op(CmpOp),
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(_) => "string".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Arrow => "`->`".to_string(),
            Tok::Op(op) => format!("`{op}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    /// 1-based character column
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub column: usize,
    pub length: usize,
    pub message: String,
}

/// Splits one source line into tokens, dropping a trailing `#` comment.
pub fn lex_line(line: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => {
                            return Err(LexError {
                                column: start + 1,
                                length: chars.len() - start,
                                message: "unterminated string".into(),
                            })
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => match chars.get(i + 1) {
                            Some(e @ ('"' | '\\')) => {
                                s.push(*e);
                                i += 2;
                            }
                            _ => {
                                return Err(LexError {
                                    column: i + 1,
                                    length: 2,
                                    message: "invalid escape in string".into(),
                                })
                            }
                        },
                        Some(ch) => {
                            s.push(*ch);
                            i += 1;
                        }
                    }
                }
                Tok::Str(s)
            }
            '=' | '!' | '<' | '>' => {
                let next = chars.get(i + 1).copied();
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (CmpOp::Eq, 2),
                    ('!', Some('=')) => (CmpOp::Ne, 2),
                    ('<', Some('=')) => (CmpOp::Le, 2),
                    ('>', Some('=')) => (CmpOp::Ge, 2),
                    ('<', _) => (CmpOp::Lt, 1),
                    ('>', _) => (CmpOp::Gt, 1),
                    _ => {
                        return Err(LexError {
                            column: start + 1,
                            length: 1,
                            message: format!("unexpected character `{c}`"),
                        })
                    }
                };
                i += len;
                Tok::Op(op)
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 2;
                Tok::Arrow
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<f64>() {
                    Ok(n) if n.is_finite() && !text.ends_with('.') => Tok::Number(n),
                    _ => {
                        return Err(LexError {
                            column: start + 1,
                            length: i - start,
                            message: format!("malformed number `{text}`"),
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            }
            other => {
                return Err(LexError {
                    column: start + 1,
                    length: 1,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Token { tok, column: start + 1, length: i - start });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(line: &str) -> Vec<Tok> {
        lex_line(line).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_line() {
        assert_eq!(
            toks(r#"action A1 "MAX SPEED # 177" detect (IAS <= 177) # trailing"#),
            vec![
                Tok::Word("action".into()),
                Tok::Word("A1".into()),
                Tok::Str("MAX SPEED # 177".into()),
                Tok::Word("detect".into()),
                Tok::LParen,
                Tok::Word("IAS".into()),
                Tok::Op(CmpOp::Le),
                Tok::Number(177.0),
                Tok::RParen,
            ]
        );
    }

    #[test]
    fn arrow_and_negative() {
        assert_eq!(
            toks("abnormal (X != -3.5) -> P"),
            vec![
                Tok::Word("abnormal".into()),
                Tok::LParen,
                Tok::Word("X".into()),
                Tok::Op(CmpOp::Ne),
                Tok::Number(-3.5),
                Tok::RParen,
                Tok::Arrow,
                Tok::Word("P".into()),
            ]
        );
    }

    #[test]
    fn escapes() {
        assert_eq!(toks(r#""a \"b\" \\""#), vec![Tok::Str(r#"a "b" \"#.into())]);
    }

    #[test]
    fn errors_carry_columns() {
        let e = lex_line("title \"open").unwrap_err();
        assert_eq!(e.column, 7);
        let e = lex_line("goal (A = B)").unwrap_err();
        assert_eq!(e.column, 9);
        let e = lex_line("x 1.2.3").unwrap_err();
        assert_eq!(e.column, 3);
    }
}
