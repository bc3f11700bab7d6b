//! Minimal SQL tokenizer used for span-preserving text rewrites.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    Comment,
    /// Bare or quoted identifier, or keyword.
    Word,
    Str,
    Number,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, sql: &'a str) -> &'a str {
        &sql[self.start..self.end]
    }

    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Whitespace | TokenKind::Comment)
    }

    /// Identifier text with quoting removed.
    pub fn word<'a>(&self, sql: &'a str) -> &'a str {
        let t = self.text(sql);
        if t.len() >= 2 && matches!(t.as_bytes()[0], b'"' | b'`' | b'[') {
            &t[1..t.len() - 1]
        } else {
            t
        }
    }
}

fn scan_quoted(bytes: &[u8], start: usize, close: u8) -> usize {
    let mut i = start + 1;
    while i < bytes.len() {
        if bytes[i] == close {
            if close != b']' && bytes.get(i + 1) == Some(&close) {
                i += 2;
                continue;
            }
            return i + 1;
        }
        i += 1;
    }
    bytes.len()
}

/// Splits `sql` into tokens covering every byte. Unterminated strings and
/// comments run to the end of input.
pub fn tokenize(sql: &str) -> Vec<Token> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let (kind, end) = if c.is_ascii_whitespace() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            (TokenKind::Whitespace, j)
        } else if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            let j = sql[i..].find('\n').map_or(bytes.len(), |p| i + p);
            (TokenKind::Comment, j)
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let j = sql[i + 2..]
                .find("*/")
                .map_or(bytes.len(), |p| i + 2 + p + 2);
            (TokenKind::Comment, j)
        } else if c == b'\'' {
            (TokenKind::Str, scan_quoted(bytes, i, b'\''))
        } else if c == b'"' || c == b'`' {
            (TokenKind::Word, scan_quoted(bytes, i, c))
        } else if c == b'[' {
            (TokenKind::Word, scan_quoted(bytes, i, b']'))
        } else if c.is_ascii_digit()
            || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'.') {
                j += 1;
            }
            (TokenKind::Number, j)
        } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            let mut j = i;
            while j < bytes.len()
                && (bytes[j].is_ascii_alphanumeric()
                    || bytes[j] == b'_'
                    || bytes[j] == b'$'
                    || bytes[j] >= 0x80)
            {
                j += 1;
            }
            (TokenKind::Word, j)
        } else {
            let two = &sql.as_bytes()[i..(i + 2).min(bytes.len())];
            let len = if matches!(
                two,
                b"<>" | b"!=" | b"<=" | b">=" | b"==" | b"||" | b"<<" | b">>"
            ) {
                2
            } else {
                1
            };
            (TokenKind::Punct, i + len)
        };
        out.push(Token {
            kind,
            start: i,
            end,
        });
        i = end;
    }
    out
}

/// Byte offset just past the last token that is not whitespace, a comment
/// or a statement terminator.
pub fn significant_end(sql: &str) -> usize {
    tokenize(sql)
        .iter()
        .rev()
        .find(|t| !t.is_trivia() && !(t.kind == TokenKind::Punct && t.text(sql) == ";"))
        .map_or(0, |t| t.end)
}
