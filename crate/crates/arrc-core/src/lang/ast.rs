//! Abstract syntax.
//!
//! Expression nodes carry optional static-type annotations, filled in by
//! the checker's elaboration pass, which the evaluator consults to decide
//! destructive reads and to reconstruct type environments from stacks.

use std::collections::BTreeSet;
use std::fmt;

use crate::kernel::ArrayId;
use crate::sigma::IndexMap;

/// Source position (1-based) of a syntax node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Annotation {
    Unique,
    Borrowed,
    Buried,
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Annotation::Unique => write!(f, "unique"),
            Annotation::Borrowed => write!(f, "borrowed"),
            Annotation::Buried => write!(f, "buried"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modifier {
    Var,
    Val,
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modifier::Var => write!(f, "var"),
            Modifier::Val => write!(f, "val"),
        }
    }
}

/// `t ::= α [mod t] | bool` — the innermost type is always `bool`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeExpr {
    Bool,
    Array {
        annotation: Annotation,
        modifier: Modifier,
        element: Box<TypeExpr>,
    },
}

impl TypeExpr {
    pub fn array(annotation: Annotation, modifier: Modifier, element: TypeExpr) -> Self {
        TypeExpr::Array {
            annotation,
            modifier,
            element: Box::new(element),
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self, TypeExpr::Array { .. })
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Bool => write!(f, "bool"),
            TypeExpr::Array {
                annotation,
                modifier,
                element,
            } => {
                if element.is_array() {
                    write!(f, "{annotation} [{modifier} ({element})]")
                } else {
                    write!(f, "{annotation} [{modifier} {element}]")
                }
            }
        }
    }
}

/// Calculus values. Array references only appear during evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    ArrayRef { array: ArrayId, sigma: IndexMap },
    Null,
    True,
    False,
}

impl Value {
    pub fn is_array_ref(&self) -> bool {
        matches!(self, Value::ArrayRef { .. })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::ArrayRef { array, sigma } => write!(f, "{array}{sigma}"),
            Value::Null => write!(f, "null"),
            Value::True => write!(f, "true"),
            Value::False => write!(f, "false"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Variable occurrence; `ty` is its static type after elaboration.
    Var {
        name: String,
        span: Span,
        ty: Option<TypeExpr>,
    },
    /// A value; `ty` resolves `null`'s type and ascribes runtime
    /// references.
    Value {
        value: Value,
        span: Span,
        ty: Option<TypeExpr>,
    },
    Call {
        func: String,
        arg: Box<Expr>,
        span: Span,
    },
    /// `let name = bound in body`; `ty` is the binder's type.
    Let {
        name: String,
        bound: Box<Expr>,
        body: Box<Expr>,
        span: Span,
        ty: Option<TypeExpr>,
    },
    /// `name[index]`; `ty` is the array variable's type.
    Lookup {
        name: String,
        index: usize,
        span: Span,
        ty: Option<TypeExpr>,
    },
    /// `name[index] = value`; `ty` is the array variable's type.
    Assign {
        name: String,
        index: usize,
        value: Box<Expr>,
        span: Span,
        ty: Option<TypeExpr>,
    },
    /// `let left{σ1} ++ right{σ2} = source in body`; `ty` is the shared
    /// type of source and both binders.
    SplitLet {
        left: String,
        left_sigma: IndexMap,
        right: String,
        right_sigma: IndexMap,
        source: String,
        body: Box<Expr>,
        span: Span,
        ty: Option<TypeExpr>,
    },
    /// `left ++ right`; `ty` is the shared operand type.
    Merge {
        left: String,
        right: String,
        span: Span,
        ty: Option<TypeExpr>,
    },
    New {
        ty: TypeExpr,
        len: usize,
        span: Span,
    },
    /// `finish { async{left} async{right} }; after`
    FinishAsync {
        left: Box<Expr>,
        right: Box<Expr>,
        after: Box<Expr>,
        span: Span,
    },
    /// `borrow source as [read] alias in body`; `source_ty` is the
    /// source's pre-burial type, `alias_ty` the alias's borrowed type.
    Borrow {
        source: String,
        as_read: bool,
        alias: String,
        body: Box<Expr>,
        span: Span,
        source_ty: Option<TypeExpr>,
        alias_ty: Option<TypeExpr>,
    },
    /// Borrow-scope wrapper; only appears during evaluation, never in
    /// parsed source.
    BorrowFrame { inner: Box<Expr>, span: Span },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Var { span, .. }
            | Expr::Value { span, .. }
            | Expr::Call { span, .. }
            | Expr::Let { span, .. }
            | Expr::Lookup { span, .. }
            | Expr::Assign { span, .. }
            | Expr::SplitLet { span, .. }
            | Expr::Merge { span, .. }
            | Expr::New { span, .. }
            | Expr::FinishAsync { span, .. }
            | Expr::Borrow { span, .. }
            | Expr::BorrowFrame { span, .. } => *span,
        }
    }

    pub fn value(v: Value) -> Expr {
        Expr::Value {
            value: v,
            span: Span::default(),
            ty: None,
        }
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Expr::Value { .. })
    }
}

/// Free variables of an expression. `borrow x as y in e` binds `y` and
/// mentions `x`; the split-let binds both targets and mentions its source.
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_free(e, &mut Vec::new(), &mut out);
    out
}

fn collect_free(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    let mention = |name: &str, bound: &[String], out: &mut BTreeSet<String>| {
        if !bound.iter().any(|b| b == name) {
            out.insert(name.to_string());
        }
    };
    match e {
        Expr::Var { name, .. } => mention(name, bound, out),
        Expr::Value { .. } | Expr::New { .. } => {}
        Expr::Call { arg, .. } => collect_free(arg, bound, out),
        Expr::Let { name, bound: b, body, .. } => {
            collect_free(b, bound, out);
            bound.push(name.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Expr::Lookup { name, .. } => mention(name, bound, out),
        Expr::Assign { name, value, .. } => {
            mention(name, bound, out);
            collect_free(value, bound, out);
        }
        Expr::SplitLet {
            left,
            right,
            source,
            body,
            ..
        } => {
            mention(source, bound, out);
            bound.push(left.clone());
            bound.push(right.clone());
            collect_free(body, bound, out);
            bound.pop();
            bound.pop();
        }
        Expr::Merge { left, right, .. } => {
            mention(left, bound, out);
            mention(right, bound, out);
        }
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            collect_free(left, bound, out);
            collect_free(right, bound, out);
            collect_free(after, bound, out);
        }
        Expr::Borrow {
            source, alias, body, ..
        } => {
            mention(source, bound, out);
            bound.push(alias.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Expr::BorrowFrame { inner, .. } => collect_free(inner, bound, out),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunDecl {
    pub name: String,
    pub param: String,
    pub param_type: TypeExpr,
    pub return_type: TypeExpr,
    pub body: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Program {
    pub functions: Vec<FunDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn main(&self) -> Option<&FunDecl> {
        self.function("main")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(name: &str) -> Expr {
        Expr::Var {
            name: name.into(),
            span: Span::default(),
            ty: None,
        }
    }

    #[test]
    fn free_vars_of_binders() {
        let borrow = Expr::Borrow {
            source: "x".into(),
            as_read: true,
            alias: "y".into(),
            body: Box::new(var("y")),
            span: Span::default(),
            source_ty: None,
            alias_ty: None,
        };
        assert_eq!(free_vars(&borrow).into_iter().collect::<Vec<_>>(), vec!["x"]);

        let split = Expr::SplitLet {
            left: "a".into(),
            left_sigma: IndexMap::identity(1),
            right: "b".into(),
            right_sigma: IndexMap::identity(1),
            source: "x".into(),
            body: Box::new(Expr::Merge {
                left: "a".into(),
                right: "z".into(),
                span: Span::default(),
                ty: None,
            }),
            span: Span::default(),
            ty: None,
        };
        let fv: Vec<String> = free_vars(&split).into_iter().collect();
        assert_eq!(fv, vec!["x", "z"]);

        let l = Expr::Let {
            name: "w".into(),
            bound: Box::new(var("w")),
            body: Box::new(var("w")),
            span: Span::default(),
            ty: None,
        };
        assert_eq!(free_vars(&l).into_iter().collect::<Vec<_>>(), vec!["w"]);
    }

    #[test]
    fn type_display_nests_with_parens() {
        let t = TypeExpr::array(
            Annotation::Unique,
            Modifier::Var,
            TypeExpr::array(Annotation::Unique, Modifier::Val, TypeExpr::Bool),
        );
        assert_eq!(t.to_string(), "unique [var (unique [val bool])]");
    }
}
