use std::collections::HashSet;

use super::ast::*;
use super::lexer::{lex, Lexeme, Tok};
use super::Diagnostic;
use crate::sigma::IndexMap;

/// A parsed program plus non-fatal notes (e.g. alpha-renamed duplicate
/// binders).
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub program: Program,
    pub notes: Vec<Diagnostic>,
}

pub fn parse(text: &str) -> Result<ParseOutcome, Diagnostic> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let mut functions = Vec::new();
    while parser.peek() != &Tok::Eof {
        functions.push(parser.fun_decl()?);
    }
    let mut notes = Vec::new();
    for f in &mut functions {
        alpha_rename(f, &mut notes);
    }
    Ok(ParseOutcome {
        program: Program { functions },
        notes,
    })
}

struct Parser {
    toks: Vec<Lexeme>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn advance(&mut self) -> Lexeme {
        let lexeme = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        lexeme
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, Diagnostic> {
        if self.peek() == &tok {
            Ok(self.advance().span)
        } else {
            Err(self.unexpected(&format!("expected {tok}")))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Span), Diagnostic> {
        match self.peek() {
            Tok::Ident(_) => {
                let lexeme = self.advance();
                match lexeme.tok {
                    Tok::Ident(name) => Ok((name, lexeme.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected("expected an identifier")),
        }
    }

    fn expect_int(&mut self) -> Result<(usize, Span), Diagnostic> {
        match self.peek() {
            Tok::Int(_) => {
                let lexeme = self.advance();
                match lexeme.tok {
                    Tok::Int(n) => Ok((n, lexeme.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected("expected an integer")),
        }
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        Diagnostic::new(
            self.span(),
            "PARSE",
            format!("{expected}, found {}", self.peek()),
        )
    }

    fn fun_decl(&mut self) -> Result<FunDecl, Diagnostic> {
        let span = self.expect(Tok::Fun)?;
        let (name, _) = self.expect_ident()?;
        self.expect(Tok::LParen)?;
        let (param, _) = self.expect_ident()?;
        self.expect(Tok::Colon)?;
        let param_type = self.type_expr()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Colon)?;
        let return_type = self.type_expr()?;
        let body = self.expr()?;
        Ok(FunDecl {
            name,
            param,
            param_type,
            return_type,
            body,
            span,
        })
    }

    fn type_expr(&mut self) -> Result<TypeExpr, Diagnostic> {
        match self.peek().clone() {
            Tok::Bool => {
                self.advance();
                Ok(TypeExpr::Bool)
            }
            Tok::LParen => {
                self.advance();
                let t = self.type_expr()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Unique | Tok::Borrowed | Tok::Buried => {
                let annotation = match self.advance().tok {
                    Tok::Unique => Annotation::Unique,
                    Tok::Borrowed => Annotation::Borrowed,
                    _ => Annotation::Buried,
                };
                self.expect(Tok::LBracket)?;
                let modifier = match self.peek() {
                    Tok::Var => {
                        self.advance();
                        Modifier::Var
                    }
                    Tok::Val => {
                        self.advance();
                        Modifier::Val
                    }
                    _ => return Err(self.unexpected("expected `var` or `val`")),
                };
                let element = self.type_expr()?;
                self.expect(Tok::RBracket)?;
                Ok(TypeExpr::array(annotation, modifier, element))
            }
            _ => Err(self.unexpected("expected a type")),
        }
    }

    fn at_sigma_literal(&self) -> bool {
        match self.peek() {
            Tok::LBrace => true,
            Tok::Ident(name) => {
                (name == "seq" || name == "stride") && self.peek2() == &Tok::LParen
            }
            _ => false,
        }
    }

    fn sigma_literal(&mut self) -> Result<IndexMap, Diagnostic> {
        let span = self.span();
        let fail = |span, msg: String| Diagnostic::new(span, "PARSE", msg);
        match self.peek().clone() {
            Tok::LBrace => {
                self.advance();
                let mut pairs = Vec::new();
                if self.peek() != &Tok::RBrace {
                    loop {
                        let (from, _) = self.expect_int()?;
                        self.expect(Tok::Arrow)?;
                        let (to, _) = self.expect_int()?;
                        pairs.push((from, to));
                        if self.peek() == &Tok::Comma {
                            self.advance();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace)?;
                let mut targets = vec![None; pairs.len()];
                for (from, to) in pairs {
                    if from >= targets.len() || targets[from].is_some() {
                        return Err(fail(
                            span,
                            format!("index map domain must be exactly [0, {})", targets.len()),
                        ));
                    }
                    targets[from] = Some(to);
                }
                IndexMap::new(targets.into_iter().map(|t| t.unwrap()).collect())
                    .map_err(|e| fail(span, e.to_string()))
            }
            Tok::Ident(name) if name == "seq" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let (lo, _) = self.expect_int()?;
                self.expect(Tok::Comma)?;
                let (hi, _) = self.expect_int()?;
                self.expect(Tok::RParen)?;
                if hi < lo {
                    return Err(fail(span, format!("seq({lo}, {hi}) is a reversed range")));
                }
                Ok(IndexMap::from_targets_unchecked((lo..hi).collect()))
            }
            Tok::Ident(name) if name == "stride" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let (start, _) = self.expect_int()?;
                self.expect(Tok::Comma)?;
                let (step, _) = self.expect_int()?;
                self.expect(Tok::Comma)?;
                let (count, _) = self.expect_int()?;
                self.expect(Tok::RParen)?;
                IndexMap::new((0..count).map(|i| start + i * step).collect())
                    .map_err(|e| fail(span, e.to_string()))
            }
            _ => Err(self.unexpected("expected an index map literal")),
        }
    }

    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Let => {
                self.advance();
                let (name, _) = self.expect_ident()?;
                if self.at_sigma_literal() {
                    let left_sigma = self.sigma_literal()?;
                    self.expect(Tok::PlusPlus)?;
                    let (right, _) = self.expect_ident()?;
                    let right_sigma = self.sigma_literal()?;
                    self.expect(Tok::Assign)?;
                    let (source, _) = self.expect_ident()?;
                    self.expect(Tok::In)?;
                    let body = self.expr()?;
                    Ok(Expr::SplitLet {
                        left: name,
                        left_sigma,
                        right,
                        right_sigma,
                        source,
                        body: Box::new(body),
                        span,
                        ty: None,
                    })
                } else {
                    self.expect(Tok::Assign)?;
                    let bound = self.expr()?;
                    self.expect(Tok::In)?;
                    let body = self.expr()?;
                    Ok(Expr::Let {
                        name,
                        bound: Box::new(bound),
                        body: Box::new(body),
                        span,
                        ty: None,
                    })
                }
            }
            Tok::New => {
                self.advance();
                let ty = self.type_expr()?;
                self.expect(Tok::LParen)?;
                let (len, _) = self.expect_int()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::New { ty, len, span })
            }
            Tok::Finish => {
                self.advance();
                self.expect(Tok::LBrace)?;
                self.expect(Tok::Async)?;
                self.expect(Tok::LBrace)?;
                let left = self.expr()?;
                self.expect(Tok::RBrace)?;
                self.expect(Tok::Async)?;
                self.expect(Tok::LBrace)?;
                let right = self.expr()?;
                self.expect(Tok::RBrace)?;
                self.expect(Tok::RBrace)?;
                self.expect(Tok::Semi)?;
                let after = self.expr()?;
                Ok(Expr::FinishAsync {
                    left: Box::new(left),
                    right: Box::new(right),
                    after: Box::new(after),
                    span,
                })
            }
            Tok::Borrow => {
                self.advance();
                let (source, _) = self.expect_ident()?;
                self.expect(Tok::As)?;
                let as_read = if self.peek() == &Tok::Read {
                    self.advance();
                    true
                } else {
                    false
                };
                let (alias, _) = self.expect_ident()?;
                self.expect(Tok::In)?;
                let body = self.expr()?;
                Ok(Expr::Borrow {
                    source,
                    as_read,
                    alias,
                    body: Box::new(body),
                    span,
                    source_ty: None,
                    alias_ty: None,
                })
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Value {
                    value: Value::True,
                    span,
                    ty: None,
                })
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Value {
                    value: Value::False,
                    span,
                    ty: None,
                })
            }
            Tok::Null => {
                self.advance();
                Ok(Expr::Value {
                    value: Value::Null,
                    span,
                    ty: None,
                })
            }
            Tok::Ident(_) => {
                let (name, _) = self.expect_ident()?;
                match self.peek() {
                    Tok::LParen => {
                        self.advance();
                        let arg = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::Call {
                            func: name,
                            arg: Box::new(arg),
                            span,
                        })
                    }
                    Tok::LBracket => {
                        self.advance();
                        let (index, _) = self.expect_int()?;
                        self.expect(Tok::RBracket)?;
                        if self.peek() == &Tok::Assign {
                            self.advance();
                            let value = self.expr()?;
                            Ok(Expr::Assign {
                                name,
                                index,
                                value: Box::new(value),
                                span,
                                ty: None,
                            })
                        } else {
                            Ok(Expr::Lookup {
                                name,
                                index,
                                span,
                                ty: None,
                            })
                        }
                    }
                    Tok::PlusPlus => {
                        self.advance();
                        let (right, _) = self.expect_ident()?;
                        Ok(Expr::Merge {
                            left: name,
                            right,
                            span,
                            ty: None,
                        })
                    }
                    _ => Ok(Expr::Var {
                        name,
                        span,
                        ty: None,
                    }),
                }
            }
            _ => Err(self.unexpected("expected an expression")),
        }
    }
}

/// Enforces per-function binder uniqueness by renaming later duplicate
/// binders, recording each rename as a note.
fn alpha_rename(f: &mut FunDecl, notes: &mut Vec<Diagnostic>) {
    let mut taken: HashSet<String> = HashSet::new();
    taken.insert(f.param.clone());
    let mut scope: Vec<(String, String)> = vec![(f.param.clone(), f.param.clone())];
    rename_expr(&mut f.body, &mut taken, &mut scope, notes);
}

fn rename_expr(
    e: &mut Expr,
    taken: &mut HashSet<String>,
    scope: &mut Vec<(String, String)>,
    notes: &mut Vec<Diagnostic>,
) {
    fn resolve(scope: &[(String, String)], name: &mut String) {
        if let Some((_, current)) = scope.iter().rev().find(|(orig, _)| orig == name) {
            *name = current.clone();
        }
    }

    fn bind(
        name: &mut String,
        span: Span,
        taken: &mut HashSet<String>,
        scope: &mut Vec<(String, String)>,
        notes: &mut Vec<Diagnostic>,
    ) {
        let orig = name.clone();
        if taken.contains(&orig) {
            let mut n = 2;
            let mut fresh = format!("{orig}_{n}");
            while taken.contains(&fresh) {
                n += 1;
                fresh = format!("{orig}_{n}");
            }
            notes.push(Diagnostic::new(
                span,
                "RENAME",
                format!("duplicate binder `{orig}` renamed to `{fresh}`"),
            ));
            *name = fresh;
        }
        taken.insert(name.clone());
        scope.push((orig, name.clone()));
    }

    match e {
        Expr::Var { name, .. } => resolve(scope, name),
        Expr::Value { .. } | Expr::New { .. } => {}
        Expr::Call { arg, .. } => rename_expr(arg, taken, scope, notes),
        Expr::Let {
            name, bound, body, span, ..
        } => {
            rename_expr(bound, taken, scope, notes);
            bind(name, *span, taken, scope, notes);
            rename_expr(body, taken, scope, notes);
            scope.pop();
        }
        Expr::Lookup { name, .. } => resolve(scope, name),
        Expr::Assign { name, value, .. } => {
            resolve(scope, name);
            rename_expr(value, taken, scope, notes);
        }
        Expr::SplitLet {
            left,
            right,
            source,
            body,
            span,
            ..
        } => {
            resolve(scope, source);
            bind(left, *span, taken, scope, notes);
            bind(right, *span, taken, scope, notes);
            rename_expr(body, taken, scope, notes);
            scope.pop();
            scope.pop();
        }
        Expr::Merge { left, right, .. } => {
            resolve(scope, left);
            resolve(scope, right);
        }
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            rename_expr(left, taken, scope, notes);
            rename_expr(right, taken, scope, notes);
            rename_expr(after, taken, scope, notes);
        }
        Expr::Borrow {
            source, alias, body, span, ..
        } => {
            resolve(scope, source);
            bind(alias, *span, taken, scope, notes);
            rename_expr(body, taken, scope, notes);
            scope.pop();
        }
        Expr::BorrowFrame { inner, .. } => rename_expr(inner, taken, scope, notes),
    }
}
