//! Hand-written lexer. Comments run from `#` to end of line; numeric
//! literals are Int by default, Long with the `_L` suffix, Double with a
//! decimal point.

use std::fmt;

use thiserror::Error;

/// 1-based source position of a token's first character (byte column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Pos {
        Pos { line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntLiteral,
    LongLiteral,
    DoubleLiteral,
    StringLiteral,
    Operator,
    Punctuation,
    Eof,
}

impl TokenKind {
    pub fn label(self) -> &'static str {
        match self {
            TokenKind::Keyword => "keyword",
            TokenKind::Identifier => "identifier",
            TokenKind::IntLiteral => "int-literal",
            TokenKind::LongLiteral => "long-literal",
            TokenKind::DoubleLiteral => "double-literal",
            TokenKind::StringLiteral => "string-literal",
            TokenKind::Operator => "operator",
            TokenKind::Punctuation => "punctuation",
            TokenKind::Eof => "eof",
        }
    }
}

/// Lexemes are exact source slices; a long literal's lexeme keeps the `_L`
/// suffix even though its numeric payload excludes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {message}")]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

const KEYWORDS: &[&str] = &[
    "module", "import", "struct", "augment", "function", "local", "let", "var", "if", "else",
    "while", "return", "true", "false", "null", "and", "or", "not", "list",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

struct Lexer<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.at + 1).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.at += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn error(&self, pos: Pos, message: impl Into<String>) -> LexError {
        LexError {
            pos,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b' ' | b'\t' | b'\r' | b'\n') => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn lex_number(&mut self, start: usize, pos: Pos) -> Result<Token, LexError> {
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        let mut kind = TokenKind::IntLiteral;
        if self.peek() == Some(b'.') && matches!(self.peek2(), Some(b'0'..=b'9')) {
            self.bump();
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.bump();
            }
            kind = TokenKind::DoubleLiteral;
        }
        if self.peek() == Some(b'_') {
            if kind == TokenKind::IntLiteral && self.peek2() == Some(b'L') {
                self.bump();
                self.bump();
                kind = TokenKind::LongLiteral;
            } else {
                return Err(self.error(pos, "malformed numeric literal"));
            }
        }
        // Reject a literal running straight into identifier characters
        // ("10abc", "1.5_L").
        if matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            return Err(self.error(pos, "malformed numeric literal"));
        }
        let lexeme = std::str::from_utf8(&self.src[start..self.at])
            .unwrap()
            .to_string();
        match kind {
            TokenKind::IntLiteral => {
                if lexeme.parse::<i32>().is_err() {
                    return Err(self.error(pos, format!("int literal out of range: {lexeme}")));
                }
            }
            TokenKind::LongLiteral => {
                if lexeme[..lexeme.len() - 2].parse::<i64>().is_err() {
                    return Err(self.error(pos, format!("long literal out of range: {lexeme}")));
                }
            }
            TokenKind::DoubleLiteral => match lexeme.parse::<f64>() {
                Ok(d) if d.is_finite() => {}
                _ => {
                    return Err(self.error(pos, format!("double literal out of range: {lexeme}")))
                }
            },
            _ => unreachable!(),
        }
        Ok(Token { kind, lexeme, pos })
    }

    fn lex_string(&mut self, start: usize, pos: Pos) -> Result<Token, LexError> {
        loop {
            match self.peek() {
                None | Some(b'\n') => return Err(self.error(pos, "unterminated string literal")),
                Some(b'"') => {
                    self.bump();
                    break;
                }
                Some(b'\\') => {
                    self.bump();
                    match self.peek() {
                        Some(b'n' | b't' | b'r' | b'\\' | b'"') => {
                            self.bump();
                        }
                        Some(other) => {
                            let pos = self.pos();
                            return Err(
                                self.error(pos, format!("invalid escape: \\{}", other as char))
                            );
                        }
                        None => return Err(self.error(pos, "unterminated string literal")),
                    }
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        let lexeme = std::str::from_utf8(&self.src[start..self.at])
            .map_err(|_| self.error(pos, "invalid UTF-8 in string literal"))?
            .to_string();
        Ok(Token {
            kind: TokenKind::StringLiteral,
            lexeme,
            pos,
        })
    }
}

/// Decodes the payload text of a validated string-literal lexeme.
pub fn unescape_string(lexeme: &str) -> String {
    let inner = &lexeme[1..lexeme.len() - 1];
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('\\') => out.push('\\'),
                Some('"') => out.push('"'),
                _ => unreachable!("lexer validated escapes"),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// One token per line: `<line>:<col> <kind> <lexeme>`, the `--emit tokens`
/// format. The eof line carries no lexeme.
pub fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        if t.lexeme.is_empty() {
            out.push_str(&format!("{} {}\n", t.pos, t.kind.label()));
        } else {
            out.push_str(&format!("{} {} {}\n", t.pos, t.kind.label(), t.lexeme));
        }
    }
    out
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        src: source.as_bytes(),
        at: 0,
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();
    loop {
        lx.skip_trivia();
        let pos = lx.pos();
        let start = lx.at;
        let Some(c) = lx.peek() else {
            tokens.push(Token {
                kind: TokenKind::Eof,
                lexeme: String::new(),
                pos,
            });
            return Ok(tokens);
        };
        let token = match c {
            b'0'..=b'9' => {
                lx.bump();
                lx.lex_number(start, pos)?
            }
            b'"' => {
                lx.bump();
                lx.lex_string(start, pos)?
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while matches!(lx.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    lx.bump();
                }
                let word = std::str::from_utf8(&lx.src[start..lx.at]).unwrap();
                Token {
                    kind: if is_keyword(word) {
                        TokenKind::Keyword
                    } else {
                        TokenKind::Identifier
                    },
                    lexeme: word.to_string(),
                    pos,
                }
            }
            b'+' | b'*' | b'/' | b'%' => {
                lx.bump();
                Token {
                    kind: TokenKind::Operator,
                    lexeme: (c as char).to_string(),
                    pos,
                }
            }
            b'-' => {
                lx.bump();
                if lx.peek() == Some(b'>') {
                    lx.bump();
                    Token {
                        kind: TokenKind::Punctuation,
                        lexeme: "->".to_string(),
                        pos,
                    }
                } else {
                    Token {
                        kind: TokenKind::Operator,
                        lexeme: "-".to_string(),
                        pos,
                    }
                }
            }
            b'=' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Token {
                        kind: TokenKind::Operator,
                        lexeme: "==".to_string(),
                        pos,
                    }
                } else {
                    Token {
                        kind: TokenKind::Punctuation,
                        lexeme: "=".to_string(),
                        pos,
                    }
                }
            }
            b'!' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Token {
                        kind: TokenKind::Operator,
                        lexeme: "!=".to_string(),
                        pos,
                    }
                } else {
                    return Err(lx.error(pos, "unexpected character: !"));
                }
            }
            b'<' | b'>' => {
                lx.bump();
                let mut lexeme = (c as char).to_string();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    lexeme.push('=');
                }
                Token {
                    kind: TokenKind::Operator,
                    lexeme,
                    pos,
                }
            }
            b'(' | b')' | b'{' | b'}' | b'[' | b']' | b',' | b'|' | b':' | b'.' => {
                lx.bump();
                Token {
                    kind: TokenKind::Punctuation,
                    lexeme: (c as char).to_string(),
                    pos,
                }
            }
            other => {
                return Err(lx.error(pos, format!("unexpected character: {}", other as char)));
            }
        };
        tokens.push(token);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds_and_lexemes(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.lexeme))
            .collect()
    }

    #[test]
    fn mixed_int_long_expression() {
        assert_eq!(
            kinds_and_lexemes("10 + 10_L"),
            vec![
                (TokenKind::IntLiteral, "10".to_string()),
                (TokenKind::Operator, "+".to_string()),
                (TokenKind::LongLiteral, "10_L".to_string()),
                (TokenKind::Eof, String::new()),
            ]
        );
    }

    #[test]
    fn long_literal_keeps_suffix_in_lexeme() {
        let tokens = tokenize("120_L").unwrap();
        assert_eq!(tokens[0].kind, TokenKind::LongLiteral);
        assert_eq!(tokens[0].lexeme, "120_L");
        assert_eq!(tokens.len(), 2);
    }

    #[test]
    fn empty_source_is_just_eof() {
        let tokens = tokenize("").unwrap();
        assert_eq!(tokens.len(), 1);
        assert_eq!(tokens[0].kind, TokenKind::Eof);
        assert_eq!(tokens[0].pos, Pos::new(1, 1));
    }

    #[test]
    fn positions_point_at_first_character() {
        let src = "let x = 1\nx = x + 2";
        let tokens = tokenize(src).unwrap();
        let lines: Vec<&str> = src.lines().collect();
        for t in &tokens {
            if t.kind == TokenKind::Eof {
                continue;
            }
            let line = lines[(t.pos.line - 1) as usize];
            let at = (t.pos.col - 1) as usize;
            assert!(line[at..].starts_with(&t.lexeme), "token {t:?}");
        }
    }

    #[test]
    fn comments_and_doubles() {
        let tokens = tokenize("1.5 # comment\n 2").unwrap();
        assert_eq!(tokens[0].kind, TokenKind::DoubleLiteral);
        assert_eq!(tokens[1].kind, TokenKind::IntLiteral);
        assert_eq!(tokens[1].pos, Pos::new(2, 2));
    }

    #[test]
    fn malformed_numbers_error() {
        assert!(tokenize("10_x").is_err());
        assert!(tokenize("1.5_L").is_err());
        assert!(tokenize("10abc").is_err());
        assert!(tokenize("2147483648").is_err());
        assert!(tokenize("9223372036854775808_L").is_err());
    }

    #[test]
    fn unterminated_string_errors_with_position() {
        let err = tokenize("let s = \"abc").unwrap_err();
        assert_eq!(err.pos, Pos::new(1, 9));
        assert!(err.message.contains("unterminated"));
    }

    #[test]
    fn string_escapes() {
        let tokens = tokenize(r#""a\nb""#).unwrap();
        assert_eq!(unescape_string(&tokens[0].lexeme), "a\nb");
        assert!(tokenize(r#""a\qb""#).is_err());
    }

    #[test]
    fn arrow_vs_minus() {
        assert_eq!(
            kinds_and_lexemes("a - b -> c")
                .iter()
                .map(|(_, l)| l.as_str())
                .collect::<Vec<_>>(),
            vec!["a", "-", "b", "->", "c", ""]
        );
    }
}
