use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Word(String),
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Arrow,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("'{w}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Comma => "','".into(),
            Tok::Colon => "':'".into(),
            Tok::Semi => "';'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, '{' | '}' | ',' | ':' | ';' | '#')
}

/// Splits source text into tokens with 1-based line/column positions.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                let d = chars[i];
                advance(&mut i, &mut line, &mut col, d);
            }
            continue;
        }
        let (l0, c0) = (line, col);
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            advance(&mut i, &mut line, &mut col, c);
            out.push(Token { tok, line: l0, col: c0 });
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            advance(&mut i, &mut line, &mut col, c);
            advance(&mut i, &mut line, &mut col, '>');
            out.push(Token {
                tok: Tok::Arrow,
                line: l0,
                col: c0,
            });
            continue;
        }
        let mut word = String::new();
        while i < chars.len() {
            let c = chars[i];
            if c == '(' {
                // a parenthesized tuple is one word, commas included
                let (pl, pc) = (line, col);
                loop {
                    let Some(&d) = chars.get(i) else {
                        return Err(ParseError::new(pl, pc, vec!["')'".into()], "unterminated '('"));
                    };
                    if d == '\n' || d == '{' || d == '}' {
                        return Err(ParseError::new(pl, pc, vec!["')'".into()], "unterminated '('"));
                    }
                    word.push(d);
                    advance(&mut i, &mut line, &mut col, d);
                    if d == ')' {
                        break;
                    }
                }
                continue;
            }
            if is_delim(c) || (c == '-' && chars.get(i + 1) == Some(&'>') && !word.is_empty()) {
                break;
            }
            word.push(c);
            advance(&mut i, &mut line, &mut col, c);
        }
        out.push(Token {
            tok: Tok::Word(word),
            line: l0,
            col: c0,
        });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
