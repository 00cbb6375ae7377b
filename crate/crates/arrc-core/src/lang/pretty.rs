use std::fmt::Write;

use super::ast::*;

/// Renders a program in canonical concrete syntax; parsing the result
/// yields a structurally equal AST.
pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "fun {}({}: {}): {}",
            f.name, f.param, f.param_type, f.return_type
        );
        out.push_str("  ");
        write_expr(&f.body, &mut out, 1);
        out.push('\n');
    }
    out
}

/// Renders one expression on a single line.
#[allow(dead_code)]
pub fn pretty_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_inline(e, &mut out);
    out
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

fn write_expr(e: &Expr, out: &mut String, indent: usize) {
    match e {
        Expr::Let { name, bound, body, .. } => {
            let _ = write!(out, "let {name} = ");
            write_inline(bound, out);
            out.push_str(" in\n");
            pad(out, indent);
            write_expr(body, out, indent);
        }
        Expr::SplitLet {
            left,
            left_sigma,
            right,
            right_sigma,
            source,
            body,
            ..
        } => {
            let _ = write!(out, "let {left}{left_sigma} ++ {right}{right_sigma} = {source} in\n");
            pad(out, indent);
            write_expr(body, out, indent);
        }
        Expr::Borrow {
            source,
            as_read,
            alias,
            body,
            ..
        } => {
            let mode = if *as_read { "read " } else { "" };
            let _ = write!(out, "borrow {source} as {mode}{alias} in\n");
            pad(out, indent);
            write_expr(body, out, indent);
        }
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            out.push_str("finish {\n");
            pad(out, indent + 1);
            out.push_str("async { ");
            write_inline(left, out);
            out.push_str(" }\n");
            pad(out, indent + 1);
            out.push_str("async { ");
            write_inline(right, out);
            out.push_str(" }\n");
            pad(out, indent);
            out.push_str("};\n");
            pad(out, indent);
            write_expr(after, out, indent);
        }
        other => write_inline(other, out),
    }
}

fn write_inline(e: &Expr, out: &mut String) {
    match e {
        Expr::Var { name, .. } => out.push_str(name),
        Expr::Value { value, .. } => {
            let _ = write!(out, "{value}");
        }
        Expr::Call { func, arg, .. } => {
            let _ = write!(out, "{func}(");
            write_inline(arg, out);
            out.push(')');
        }
        Expr::Let { name, bound, body, .. } => {
            let _ = write!(out, "let {name} = ");
            write_inline(bound, out);
            out.push_str(" in ");
            write_inline(body, out);
        }
        Expr::Lookup { name, index, .. } => {
            let _ = write!(out, "{name}[{index}]");
        }
        Expr::Assign {
            name, index, value, ..
        } => {
            let _ = write!(out, "{name}[{index}] = ");
            write_inline(value, out);
        }
        Expr::SplitLet {
            left,
            left_sigma,
            right,
            right_sigma,
            source,
            body,
            ..
        } => {
            let _ = write!(out, "let {left}{left_sigma} ++ {right}{right_sigma} = {source} in ");
            write_inline(body, out);
        }
        Expr::Merge { left, right, .. } => {
            let _ = write!(out, "{left} ++ {right}");
        }
        Expr::New { ty, len, .. } => {
            let _ = write!(out, "new {ty}({len})");
        }
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            out.push_str("finish { async { ");
            write_inline(left, out);
            out.push_str(" } async { ");
            write_inline(right, out);
            out.push_str(" } }; ");
            write_inline(after, out);
        }
        Expr::Borrow {
            source,
            as_read,
            alias,
            body,
            ..
        } => {
            let mode = if *as_read { "read " } else { "" };
            let _ = write!(out, "borrow {source} as {mode}{alias} in ");
            write_inline(body, out);
        }
        Expr::BorrowFrame { inner, .. } => {
            out.push_str("B(");
            write_inline(inner, out);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse;
    use super::*;

    /// Strips spans so that layout differences between original and
    /// pretty-printed source do not affect structural comparison.
    fn strip(p: &Program) -> Program {
        fn strip_expr(e: &Expr) -> Expr {
            let mut e = e.clone();
            match &mut e {
                Expr::Var { span, .. }
                | Expr::Value { span, .. }
                | Expr::Lookup { span, .. }
                | Expr::Merge { span, .. }
                | Expr::New { span, .. } => *span = Span::default(),
                Expr::Call { arg, span, .. } => {
                    *span = Span::default();
                    **arg = strip_expr(arg);
                }
                Expr::Let { bound, body, span, .. } => {
                    *span = Span::default();
                    **bound = strip_expr(bound);
                    **body = strip_expr(body);
                }
                Expr::Assign { value, span, .. } => {
                    *span = Span::default();
                    **value = strip_expr(value);
                }
                Expr::SplitLet { body, span, .. } => {
                    *span = Span::default();
                    **body = strip_expr(body);
                }
                Expr::FinishAsync {
                    left, right, after, span,
                } => {
                    *span = Span::default();
                    **left = strip_expr(left);
                    **right = strip_expr(right);
                    **after = strip_expr(after);
                }
                Expr::Borrow { body, span, .. } => {
                    *span = Span::default();
                    **body = strip_expr(body);
                }
                Expr::BorrowFrame { inner, span } => {
                    *span = Span::default();
                    **inner = strip_expr(inner);
                }
            }
            e
        }
        Program {
            functions: p
                .functions
                .iter()
                .map(|f| FunDecl {
                    span: Span::default(),
                    body: strip_expr(&f.body),
                    ..f.clone()
                })
                .collect(),
        }
    }

    fn roundtrip(src: &str) {
        let p = parse(src).expect("parse").program;
        let printed = pretty(&p);
        let q = parse(&printed)
            .unwrap_or_else(|e| panic!("re-parse of {printed:?} failed: {e}"))
            .program;
        assert_eq!(strip(&p), strip(&q), "printed:\n{printed}");
    }

    #[test]
    fn smallest_program() {
        let p = parse("fun main(x: bool): bool true").unwrap().program;
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.main().unwrap().param, "x");
        roundtrip("fun main(x: bool): bool true");
    }

    #[test]
    fn new_let_lookup() {
        let src = "fun main(x: bool): bool let a = new unique [var bool](4) in a[0]";
        let p = parse(src).unwrap().program;
        let body = &p.main().unwrap().body;
        match body {
            Expr::Let { name, bound, body, .. } => {
                assert_eq!(name, "a");
                assert!(matches!(**bound, Expr::New { len: 4, .. }));
                assert!(matches!(**body, Expr::Lookup { index: 0, .. }));
            }
            other => panic!("unexpected shape: {other:?}"),
        }
        roundtrip(src);
    }

    #[test]
    fn split_let_with_sigma_literals() {
        let src = "fun main(x: unique [var bool]): bool \
                   let y{0->0} ++ z{0->1} = x in z[0]";
        let p = parse(src).unwrap().program;
        match &p.main().unwrap().body {
            Expr::SplitLet {
                left,
                right,
                source,
                left_sigma,
                right_sigma,
                ..
            } => {
                assert_eq!((left.as_str(), right.as_str(), source.as_str()), ("y", "z", "x"));
                assert_eq!(left_sigma.targets(), &[0]);
                assert_eq!(right_sigma.targets(), &[1]);
            }
            other => panic!("unexpected shape: {other:?}"),
        }
        roundtrip(src);
    }

    #[test]
    fn seq_and_stride_literals() {
        let src = "fun main(x: unique [var bool]): bool \
                   let y seq(0, 2) ++ z stride(2, 1, 3) = x in true";
        roundtrip(src);
    }

    #[test]
    fn borrow_finish_merge_assign() {
        let src = "fun helper(a: unique [var bool]): bool a[0]\n\
                   fun main(x: bool): bool\n\
                   let a = new unique [var bool](4) in\n\
                   borrow a as read b in\n\
                   finish { async { b[0] } async { true } };\n\
                   let c = new unique [var bool](2) in\n\
                   let l{0->0} ++ r{0->1} = c in\n\
                   let m = l ++ r in m[1] = helper(m)";
        roundtrip(src);
    }

    #[test]
    fn duplicate_binders_are_renamed() {
        let src = "fun main(x: bool): bool let a = true in let a = false in a";
        let outcome = parse(src).unwrap();
        assert_eq!(outcome.notes.len(), 1);
        assert_eq!(outcome.notes[0].rule, "RENAME");
        match &outcome.program.main().unwrap().body {
            Expr::Let { name, body, .. } => {
                assert_eq!(name, "a");
                match &**body {
                    Expr::Let { name, body, .. } => {
                        assert_eq!(name, "a_2");
                        assert!(matches!(&**body, Expr::Var { name, .. } if name == "a_2"));
                    }
                    other => panic!("unexpected shape: {other:?}"),
                }
            }
            other => panic!("unexpected shape: {other:?}"),
        }
    }

    #[test]
    fn sigma_literal_prints_canonically() {
        let src = "fun main(x: unique [var bool]): bool let y{1->4, 0->3} ++ z{0->0} = x in true";
        let p = parse(src).unwrap().program;
        let printed = pretty(&p);
        assert!(printed.contains("y{0->3, 1->4}"), "printed:\n{printed}");
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = parse("fun main(x: bool): bool (").unwrap_err();
        assert_eq!(err.rule, "PARSE");
        assert_eq!(err.line, 1);
        let err = parse("fun main(x: bool): bool\nlet y = ! in y").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn bad_sigma_literals_rejected() {
        assert!(parse("fun main(x: bool): bool let y{0->1, 0->2} ++ z{0->0} = x in true").is_err());
        assert!(parse("fun main(x: bool): bool let y{1->1} ++ z{0->0} = x in true").is_err());
        assert!(parse("fun main(x: bool): bool let y{0->1, 1->1} ++ z{0->0} = x in true").is_err());
    }
}
