use super::SubjectError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

const SYMBOLS: [&str; 27] = [
    "->", "&&", "||", "==", "!=", "<=", ">=", "[]", "{", "}", "(", ")", "[", "]", ";", ":", ",", ".",
    "=", "<", ">", "+", "-", "*", "/", "%", "!",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SubjectError> {
    let mut out = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx as u32 + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i as u32 + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line,
                    col,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<i64>().map_err(|_| SubjectError::Syntax {
                    line,
                    col,
                    message: format!("integer literal `{text}` out of range"),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    line,
                    col,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = SYMBOLS
                .iter()
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| SubjectError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character `{c}`"),
                })?;
            out.push(Token {
                tok: Tok::Sym(sym),
                line,
                col,
            });
            i += sym.len();
        }
    }
    let last_line = src.lines().count() as u32 + 1;
    out.push(Token {
        tok: Tok::Eof,
        line: last_line,
        col: 1,
    });
    Ok(out)
}
