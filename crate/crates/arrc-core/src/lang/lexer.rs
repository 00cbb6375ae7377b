use super::ast::Span;
use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(usize),
    // keywords
    Fun,
    Let,
    In,
    New,
    Unique,
    Borrowed,
    Buried,
    Var,
    Val,
    Bool,
    True,
    False,
    Null,
    Finish,
    Async,
    Borrow,
    As,
    Read,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Assign,
    PlusPlus,
    Arrow,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tok::Ident(name) => return write!(f, "identifier `{name}`"),
            Tok::Int(n) => return write!(f, "integer `{n}`"),
            Tok::Fun => "fun",
            Tok::Let => "let",
            Tok::In => "in",
            Tok::New => "new",
            Tok::Unique => "unique",
            Tok::Borrowed => "borrowed",
            Tok::Buried => "buried",
            Tok::Var => "var",
            Tok::Val => "val",
            Tok::Bool => "bool",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Null => "null",
            Tok::Finish => "finish",
            Tok::Async => "async",
            Tok::Borrow => "borrow",
            Tok::As => "as",
            Tok::Read => "read",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Assign => "=",
            Tok::PlusPlus => "++",
            Tok::Arrow => "->",
            Tok::Eof => "end of input",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone)]
pub struct Lexeme {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(text: &str) -> Result<Vec<Lexeme>, Diagnostic> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($tok:expr, $span:expr) => {
            out.push(Lexeme { tok: $tok, span: $span })
        };
    }

    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    for c in chars.by_ref() {
                        if c == '\n' {
                            line += 1;
                            col = 1;
                            break;
                        }
                    }
                } else {
                    return Err(Diagnostic::new(span, "PARSE", "stray `/`; comments start with `//`"));
                }
            }
            '0'..='9' => {
                let mut n: usize = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(digit) = d.to_digit(10) {
                        n = n * 10 + digit as usize;
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Int(n), span);
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        word.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let tok = match word.as_str() {
                    "fun" => Tok::Fun,
                    "let" => Tok::Let,
                    "in" => Tok::In,
                    "new" => Tok::New,
                    "unique" => Tok::Unique,
                    "borrowed" => Tok::Borrowed,
                    "buried" => Tok::Buried,
                    "var" => Tok::Var,
                    "val" => Tok::Val,
                    "bool" => Tok::Bool,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "null" => Tok::Null,
                    "finish" => Tok::Finish,
                    "async" => Tok::Async,
                    "borrow" => Tok::Borrow,
                    "as" => Tok::As,
                    "read" => Tok::Read,
                    _ => Tok::Ident(word),
                };
                push!(tok, span);
            }
            '(' | ')' | '{' | '}' | '[' | ']' | ':' | ';' | ',' => {
                chars.next();
                col += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    _ => Tok::Comma,
                };
                push!(tok, span);
            }
            '=' => {
                chars.next();
                col += 1;
                push!(Tok::Assign, span);
            }
            '+' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'+') {
                    chars.next();
                    col += 1;
                    push!(Tok::PlusPlus, span);
                } else {
                    return Err(Diagnostic::new(span, "PARSE", "stray `+`; the merge operator is `++`"));
                }
            }
            '-' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'>') {
                    chars.next();
                    col += 1;
                    push!(Tok::Arrow, span);
                } else {
                    return Err(Diagnostic::new(span, "PARSE", "stray `-`; expected `->`"));
                }
            }
            other => {
                return Err(Diagnostic::new(
                    span,
                    "PARSE",
                    format!("unexpected character {other:?}"),
                ));
            }
        }
    }
    out.push(Lexeme {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}
