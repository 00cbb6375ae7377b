//! Static semantics: type environments, the syntax-directed typing
//! judgment, well-formedness predicates, and the elaboration pass that
//! annotates variable occurrences with their static types so the
//! evaluator can decide destructive reads.
//!
//! Failed premises produce diagnostics naming the violated rule
//! (e.g. `E-ARRAY-ASSIGN`), which tests and tooling match on.

use std::collections::BTreeMap;

use crate::kernel::ArrayId;
use crate::lang::ast::{free_vars, Annotation, Expr, Modifier, Span, TypeExpr, Value};
use crate::lang::{Diagnostic, Program};

/// Γ: ordered entries; `Marked` corresponds to the `Γ • x : t` block
/// separator introduced by borrowing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvEntry {
    Plain { name: String, ty: TypeExpr },
    Marked { name: String, ty: TypeExpr },
}

impl EnvEntry {
    pub fn name(&self) -> &str {
        match self {
            EnvEntry::Plain { name, .. } | EnvEntry::Marked { name, .. } => name,
        }
    }

    pub fn ty(&self) -> &TypeExpr {
        match self {
            EnvEntry::Plain { ty, .. } | EnvEntry::Marked { ty, .. } => ty,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeEnv {
    entries: Vec<EnvEntry>,
}

impl TypeEnv {
    pub fn new() -> Self {
        TypeEnv::default()
    }

    pub fn push_plain(&mut self, name: impl Into<String>, ty: TypeExpr) {
        self.entries.push(EnvEntry::Plain {
            name: name.into(),
            ty,
        });
    }

    pub fn push_marked(&mut self, name: impl Into<String>, ty: TypeExpr) {
        self.entries.push(EnvEntry::Marked {
            name: name.into(),
            ty,
        });
    }

    pub fn pop(&mut self) {
        self.entries.pop();
    }

    /// Rightmost binding wins.
    pub fn lookup(&self, name: &str) -> Option<&TypeExpr> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.name() == name)
            .map(|e| e.ty())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    pub fn entries(&self) -> &[EnvEntry] {
        &self.entries
    }
}

/// Δ: array locations to their types. Empty during static checking;
/// reconstructed from heap tags when checking runtime configurations.
pub type RuntimeTypeEnv = BTreeMap<ArrayId, TypeExpr>;

// ---------------------------------------------------------------------
// Type predicates
// ---------------------------------------------------------------------

/// A type is read-only if it is `bool` or an array type with `val`
/// modifiers at every level.
pub fn read_only(t: &TypeExpr) -> bool {
    match t {
        TypeExpr::Bool => true,
        TypeExpr::Array {
            modifier, element, ..
        } => *modifier == Modifier::Val && read_only(element),
    }
}

/// Like [`read_only`] on an array's element type; the outermost array may
/// itself be `var`.
pub fn read_only_elems(t: &TypeExpr) -> bool {
    match t {
        TypeExpr::Bool => true,
        TypeExpr::Array { element, .. } => read_only(element),
    }
}

pub fn is_array(t: &TypeExpr) -> bool {
    t.is_array()
}

pub fn is_borrowed(t: &TypeExpr) -> bool {
    matches!(
        t,
        TypeExpr::Array {
            annotation: Annotation::Borrowed,
            ..
        }
    )
}

pub fn is_buried(t: &TypeExpr) -> bool {
    matches!(
        t,
        TypeExpr::Array {
            annotation: Annotation::Buried,
            ..
        }
    )
}

/// Used by the disjointness property: a capability type counts as `read`
/// when its outermost modifier is `val`, which rules out all mutation
/// through it.
pub fn is_read(t: &TypeExpr) -> bool {
    matches!(
        t,
        TypeExpr::Array {
            modifier: Modifier::Val,
            ..
        }
    )
}

/// R(t): recursively turns every modifier into `val`, preserving
/// annotations.
pub fn weaken_read(t: &TypeExpr) -> TypeExpr {
    match t {
        TypeExpr::Bool => TypeExpr::Bool,
        TypeExpr::Array {
            annotation, element, ..
        } => TypeExpr::Array {
            annotation: *annotation,
            modifier: Modifier::Val,
            element: Box::new(weaken_read(element)),
        },
    }
}

// ---------------------------------------------------------------------
// Well-formedness judgments
// ---------------------------------------------------------------------

/// Every type the grammar can produce is well-formed; the judgment exists
/// for the metatheory harness.
pub fn wf_type(_t: &TypeExpr) -> bool {
    true
}

/// Plain entries must introduce fresh names; marked entries must re-name
/// an existing one.
pub fn wf_env(env: &TypeEnv) -> bool {
    let mut seen: Vec<&str> = Vec::new();
    for entry in env.entries() {
        match entry {
            EnvEntry::Plain { name, .. } => {
                if seen.contains(&name.as_str()) {
                    return false;
                }
                seen.push(name);
            }
            EnvEntry::Marked { name, .. } => {
                if !seen.contains(&name.as_str()) {
                    return false;
                }
            }
        }
    }
    true
}

/// Δ is a map, so id uniqueness holds by construction.
pub fn wf_runtime_env(_delta: &RuntimeTypeEnv) -> bool {
    true
}

// ---------------------------------------------------------------------
// Value/type consistency at runtime
// ---------------------------------------------------------------------

/// Whether a runtime value can be ascribed type `t` under Δ.
///
/// For array references the ascribed view type may differ from the heap
/// tag in its annotations (borrowing re-annotates the outside) and may
/// weaken `var` modifiers to `val` (read-only borrows); element structure
/// must match.
pub fn value_has_type(delta: &RuntimeTypeEnv, v: &Value, t: &TypeExpr) -> bool {
    match v {
        Value::True | Value::False => *t == TypeExpr::Bool,
        Value::Null => is_array(t),
        Value::ArrayRef { array, .. } => match delta.get(array) {
            Some(tag) => is_array(t) && view_compatible(t, tag),
            None => false,
        },
    }
}

fn view_compatible(view: &TypeExpr, heap: &TypeExpr) -> bool {
    match (view, heap) {
        (TypeExpr::Bool, TypeExpr::Bool) => true,
        (
            TypeExpr::Array {
                modifier: mv,
                element: ev,
                ..
            },
            TypeExpr::Array {
                modifier: mh,
                element: eh,
                ..
            },
        ) => (mv == mh || *mv == Modifier::Val) && view_compatible(ev, eh),
        _ => false,
    }
}

// ---------------------------------------------------------------------
// The checker
// ---------------------------------------------------------------------

/// Type-checks a program and returns an annotated copy: every variable
/// occurrence, binder and resolved `null` carries its static type.
pub fn check_program(p: &Program) -> Result<Program, Vec<Diagnostic>> {
    let mut annotated = p.clone();
    let mut diags = Vec::new();

    let mut names: Vec<&str> = Vec::new();
    for f in &p.functions {
        if names.contains(&f.name.as_str()) {
            diags.push(Diagnostic::new(
                f.span,
                "WF-PROGRAM",
                format!("duplicate function `{}`", f.name),
            ));
        }
        names.push(&f.name);
    }
    if p.main().is_none() {
        diags.push(Diagnostic::new(
            Span::default(),
            "WF-PROGRAM",
            "program has no `main` function",
        ));
    }

    let delta = RuntimeTypeEnv::new();
    for f in &mut annotated.functions {
        let mut env = TypeEnv::new();
        env.push_plain(f.param.clone(), f.param_type.clone());
        let expected = f.return_type.clone();
        if let Err(d) = check_expr(
            p,
            &delta,
            &mut env,
            &mut f.body,
            Some((&expected, "WF-FUNCTION")),
        ) {
            diags.push(d);
        }
    }

    if diags.is_empty() {
        Ok(annotated)
    } else {
        Err(diags)
    }
}

/// Infers the type of `e` under Δ and Γ, annotating it in place.
pub fn infer(
    program: &Program,
    delta: &RuntimeTypeEnv,
    env: &mut TypeEnv,
    e: &mut Expr,
) -> Result<TypeExpr, Diagnostic> {
    check_expr(program, delta, env, e, None)
}

fn var_type(env: &TypeEnv, name: &str, span: Span) -> Result<TypeExpr, Diagnostic> {
    match env.lookup(name) {
        None => Err(Diagnostic::new(
            span,
            "E-VAR",
            format!("variable `{name}` is not bound"),
        )),
        Some(t) if is_buried(t) => Err(Diagnostic::new(
            span,
            "E-VAR",
            format!("variable `{name}` is buried by an enclosing borrow"),
        )),
        Some(t) => Ok(t.clone()),
    }
}

fn check_expr(
    program: &Program,
    delta: &RuntimeTypeEnv,
    env: &mut TypeEnv,
    e: &mut Expr,
    expected: Option<(&TypeExpr, &str)>,
) -> Result<TypeExpr, Diagnostic> {
    let span = e.span();
    let actual = match e {
        Expr::Var { name, ty, .. } => {
            let t = var_type(env, name, span)?;
            *ty = Some(t.clone());
            t
        }
        Expr::Value { value, ty, .. } => match value {
            Value::True | Value::False => TypeExpr::Bool,
            Value::Null => match expected {
                Some((t, _)) if is_array(t) => {
                    *ty = Some(t.clone());
                    t.clone()
                }
                Some((t, rule)) => {
                    return Err(Diagnostic::new(
                        span,
                        rule,
                        format!("null is an array value but `{t}` was expected"),
                    ))
                }
                None => match ty {
                    // already resolved by a previous elaboration
                    Some(t) => t.clone(),
                    None => {
                        return Err(Diagnostic::new(
                            span,
                            "E-NULL",
                            "cannot determine the array type of null here",
                        ))
                    }
                },
            },
            Value::ArrayRef { array, .. } => {
                // only reachable when re-checking runtime expressions
                let array = *array;
                let Some(t) = ty.clone() else {
                    return Err(Diagnostic::new(
                        span,
                        "E-ARRAY",
                        "array reference lacks a type ascription",
                    ));
                };
                if !value_has_type(delta, value, &t) {
                    return Err(Diagnostic::new(
                        span,
                        "E-ARRAY",
                        format!("reference to {array} is not compatible with `{t}`"),
                    ));
                }
                t
            }
        },
        Expr::Call { func, arg, .. } => {
            let Some(decl) = program.function(func) else {
                return Err(Diagnostic::new(
                    span,
                    "E-CALL",
                    format!("unknown function `{func}`"),
                ));
            };
            let param_type = decl.param_type.clone();
            let return_type = decl.return_type.clone();
            check_expr(program, delta, env, arg, Some((&param_type, "E-CALL")))?;
            return_type
        }
        Expr::Let {
            name, bound, body, ty, ..
        } => {
            let bound_t = check_expr(program, delta, env, bound, None)?;
            if env.contains(name) {
                return Err(Diagnostic::new(
                    span,
                    "WF-VAR",
                    format!("`{name}` is already bound"),
                ));
            }
            *ty = Some(bound_t.clone());
            env.push_plain(name.clone(), bound_t);
            let body_t = check_expr(program, delta, env, body, expected);
            env.pop();
            return body_t;
        }
        Expr::Lookup { name, ty, .. } => {
            let t = var_type(env, name, span)?;
            let TypeExpr::Array {
                modifier, element, ..
            } = &t
            else {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-LOOKUP",
                    format!("`{name}` is not an array"),
                ));
            };
            if !read_only(element) && *modifier == Modifier::Val {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-LOOKUP",
                    format!("cannot extract a mutable element through the val array `{name}`"),
                ));
            }
            let elem = (**element).clone();
            *ty = Some(t.clone());
            elem
        }
        Expr::Assign {
            name, value, ty, ..
        } => {
            let t = var_type(env, name, span)?;
            let TypeExpr::Array {
                modifier, element, ..
            } = &t
            else {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-ASSIGN",
                    format!("`{name}` is not an array"),
                ));
            };
            if *modifier != Modifier::Var {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-ASSIGN",
                    format!("cannot assign through the val array `{name}`"),
                ));
            }
            if is_borrowed(element) {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-ASSIGN",
                    "cannot store a borrowed value in an array",
                ));
            }
            let elem = (**element).clone();
            check_expr(program, delta, env, value, Some((&elem, "E-ARRAY-ASSIGN")))?;
            *ty = Some(t);
            TypeExpr::Bool
        }
        Expr::SplitLet {
            left,
            left_sigma,
            right,
            right_sigma,
            source,
            body,
            ty,
            ..
        } => {
            let t = var_type(env, source, span)?;
            if !is_array(&t) {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-SPLIT",
                    format!("`{source}` is not an array"),
                ));
            }
            if !crate::sigma::IndexMap::disjoint(left_sigma, right_sigma) {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-SPLIT",
                    "the split's index maps overlap",
                ));
            }
            for name in [&*left, &*right] {
                if env.contains(name) {
                    return Err(Diagnostic::new(
                        span,
                        "WF-VAR",
                        format!("`{name}` is already bound"),
                    ));
                }
            }
            *ty = Some(t.clone());
            env.push_plain(left.clone(), t.clone());
            env.push_plain(right.clone(), t);
            let body_t = check_expr(program, delta, env, body, expected);
            env.pop();
            env.pop();
            return body_t;
        }
        Expr::Merge {
            left, right, ty, ..
        } => {
            let lt = var_type(env, left, span)?;
            let rt = var_type(env, right, span)?;
            if lt != rt {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-MERGE",
                    format!("merge operands have different types `{lt}` and `{rt}`"),
                ));
            }
            if !is_array(&lt) {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-MERGE",
                    "merge operands must be arrays",
                ));
            }
            *ty = Some(lt.clone());
            lt
        }
        Expr::New { ty, .. } => {
            if !matches!(
                ty,
                TypeExpr::Array {
                    annotation: Annotation::Unique,
                    ..
                }
            ) {
                return Err(Diagnostic::new(
                    span,
                    "E-ARRAY-NEW",
                    format!("new requires a unique array type, got `{ty}`"),
                ));
            }
            ty.clone()
        }
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            check_expr(program, delta, env, left, None)?;
            check_expr(program, delta, env, right, None)?;
            let shared: Vec<String> = free_vars(left)
                .intersection(&free_vars(right))
                .cloned()
                .collect();
            if let Some(name) = shared.first() {
                return Err(Diagnostic::new(
                    span,
                    "E-FINISH-ASYNC",
                    format!("async blocks share the free variable `{name}`"),
                ));
            }
            return check_expr(program, delta, env, after, expected);
        }
        Expr::Borrow {
            source,
            as_read,
            alias,
            body,
            source_ty,
            alias_ty,
            ..
        } => {
            let t = var_type(env, source, span)?;
            let TypeExpr::Array {
                modifier, element, ..
            } = &t
            else {
                return Err(Diagnostic::new(
                    span,
                    "E-BORROW",
                    format!("`{source}` is not an array"),
                ));
            };
            let buried_t = TypeExpr::array(Annotation::Buried, *modifier, (**element).clone());
            let alias_t = if *as_read {
                TypeExpr::array(Annotation::Borrowed, Modifier::Val, weaken_read(element))
            } else {
                TypeExpr::array(Annotation::Borrowed, *modifier, (**element).clone())
            };
            if env.contains(alias) {
                return Err(Diagnostic::new(
                    span,
                    "WF-VAR",
                    format!("`{alias}` is already bound"),
                ));
            }
            *source_ty = Some(buried_t.clone());
            *alias_ty = Some(alias_t.clone());
            env.push_marked(source.clone(), buried_t);
            env.push_plain(alias.clone(), alias_t);
            let body_t = check_expr(program, delta, env, body, expected);
            env.pop();
            env.pop();
            return body_t;
        }
        Expr::BorrowFrame { inner, .. } => {
            return check_expr(program, delta, env, inner, expected)
        }
    };

    if let Some((exp, rule)) = expected {
        if actual != *exp {
            // runtime references may be ascribed a weaker view than Δ's tag
            let compatible = matches!(
                e,
                Expr::Value {
                    value: Value::ArrayRef { .. },
                    ..
                }
            ) && is_array(exp)
                && view_compatible(exp, &actual);
            if !compatible {
                return Err(Diagnostic::new(
                    span,
                    rule,
                    format!("expected `{exp}`, found `{actual}`"),
                ));
            }
        }
    }
    Ok(actual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn unique(m: Modifier, elem: TypeExpr) -> TypeExpr {
        TypeExpr::array(Annotation::Unique, m, elem)
    }

    fn checked(src: &str) -> Result<Program, Vec<Diagnostic>> {
        check_program(&parse(src).expect("parse").program)
    }

    fn reject_with(src: &str, rule: &str) {
        let diags = checked(src).expect_err("program should be rejected");
        assert!(
            diags.iter().any(|d| d.rule == rule),
            "expected a {rule} diagnostic, got {diags:?}"
        );
    }

    #[test]
    fn read_only_examples() {
        let t = unique(Modifier::Val, unique(Modifier::Val, TypeExpr::Bool));
        assert!(read_only(&t));
        let t = unique(Modifier::Val, unique(Modifier::Var, TypeExpr::Bool));
        assert!(!read_only(&t));
        assert!(read_only(&TypeExpr::Bool));
        assert!(read_only_elems(&unique(Modifier::Var, TypeExpr::Bool)));
        assert!(!read_only_elems(&unique(
            Modifier::Var,
            unique(Modifier::Var, TypeExpr::Bool)
        )));
    }

    #[test]
    fn weaken_read_recursively_vals() {
        let t = unique(Modifier::Var, unique(Modifier::Var, TypeExpr::Bool));
        assert_eq!(
            weaken_read(&t),
            unique(Modifier::Val, unique(Modifier::Val, TypeExpr::Bool))
        );
    }

    #[test]
    fn wf_env_examples() {
        let t = unique(Modifier::Var, TypeExpr::Bool);
        let mut env = TypeEnv::new();
        env.push_plain("x", t.clone());
        env.push_marked("x", TypeExpr::array(Annotation::Buried, Modifier::Var, TypeExpr::Bool));
        assert!(wf_env(&env));

        let mut env = TypeEnv::new();
        env.push_plain("x", t.clone());
        env.push_plain("x", t.clone());
        assert!(!wf_env(&env));

        let mut env = TypeEnv::new();
        env.push_marked("x", t);
        assert!(!wf_env(&env));

        assert!(wf_type(&TypeExpr::Bool));
    }

    #[test]
    fn smoke_program_is_accepted() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](4) in\n\
                   let ignored = a[1] = true in\n\
                   let y seq(0, 2) ++ z seq(2, 4) = a in\n\
                   let m = y ++ z in m[1]";
        let annotated = checked(src).expect("accepted");
        // elaboration attached the variable's type at its lookup occurrence
        fn find_lookup(e: &Expr) -> Option<&Expr> {
            match e {
                Expr::Lookup { .. } => Some(e),
                Expr::Let { bound, body, .. } => find_lookup(bound).or_else(|| find_lookup(body)),
                Expr::SplitLet { body, .. } => find_lookup(body),
                _ => None,
            }
        }
        let main = annotated.main().unwrap();
        let lookup = find_lookup(&main.body).expect("has a lookup");
        match lookup {
            Expr::Lookup { ty: Some(t), .. } => assert!(is_array(t)),
            other => panic!("missing annotation: {other:?}"),
        }
    }

    #[test]
    fn elaboration_is_idempotent() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](2) in\n\
                   borrow a as read b in b[0]";
        let once = checked(src).unwrap();
        let twice = check_program(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn assign_of_borrowed_element_is_rejected() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var (borrowed [var bool])](2) in\n\
                   let b = new unique [var bool](1) in\n\
                   borrow b as c in a[0] = c";
        reject_with(src, "E-ARRAY-ASSIGN");
    }

    #[test]
    fn finish_async_sharing_a_variable_is_rejected() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](2) in\n\
                   finish { async { a[0] } async { a[1] } }; true";
        reject_with(src, "E-FINISH-ASYNC");
    }

    #[test]
    fn overlapping_split_literals_are_rejected() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](2) in\n\
                   let y{0->0, 1->1} ++ z{0->1} = a in true";
        reject_with(src, "E-ARRAY-SPLIT");
    }

    #[test]
    fn buried_variable_reads_are_rejected() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](2) in\n\
                   borrow a as b in a[0]";
        reject_with(src, "E-VAR");
    }

    #[test]
    fn val_array_mutable_element_extraction_is_rejected() {
        let src = "fun main(x: unique [val (unique [var bool])]): bool\n\
                   let e = x[0] in true";
        reject_with(src, "E-ARRAY-LOOKUP");
    }

    #[test]
    fn assignment_through_val_array_is_rejected() {
        let src = "fun main(x: unique [val bool]): bool x[0] = true";
        reject_with(src, "E-ARRAY-ASSIGN");
    }

    #[test]
    fn new_must_be_unique() {
        reject_with(
            "fun main(x: bool): bool let a = new borrowed [var bool](2) in true",
            "E-ARRAY-NEW",
        );
    }

    #[test]
    fn null_adopts_expected_array_types_only() {
        let ok = "fun id(y: unique [var bool]): unique [var bool] y\n\
                  fun main(x: bool): bool let r = id(null) in true";
        assert!(checked(ok).is_ok());
        reject_with("fun main(x: bool): bool let a = null in true", "E-NULL");
        reject_with("fun f(y: bool): bool y\nfun main(x: bool): bool f(null)", "E-CALL");
    }

    #[test]
    fn merge_requires_equal_array_types() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var bool](2) in\n\
                   let b = new unique [val bool](2) in\n\
                   let m = a ++ b in true";
        reject_with(src, "E-ARRAY-MERGE");
        reject_with("fun main(x: bool): bool x ++ x", "E-ARRAY-MERGE");
    }

    #[test]
    fn call_argument_type_must_match() {
        let src = "fun f(y: unique [var bool]): bool true\n\
                   fun main(x: bool): bool f(true)";
        reject_with(src, "E-CALL");
    }

    #[test]
    fn function_body_must_match_return_type() {
        reject_with("fun main(x: bool): unique [var bool] true", "WF-FUNCTION");
    }

    #[test]
    fn main_is_required_and_functions_unique() {
        reject_with("fun f(x: bool): bool true", "WF-PROGRAM");
        reject_with(
            "fun main(x: bool): bool true\nfun main(y: bool): bool false",
            "WF-PROGRAM",
        );
    }

    #[test]
    fn borrow_annotates_alias_and_buried_types() {
        let src = "fun main(x: bool): bool\n\
                   let a = new unique [var (unique [var bool])](1) in\n\
                   borrow a as read b in true";
        let p = checked(src).unwrap();
        fn find_borrow(e: &Expr) -> Option<&Expr> {
            match e {
                Expr::Borrow { .. } => Some(e),
                Expr::Let { body, .. } => find_borrow(body),
                _ => None,
            }
        }
        match find_borrow(&p.main().unwrap().body).unwrap() {
            Expr::Borrow {
                source_ty: Some(s),
                alias_ty: Some(a),
                ..
            } => {
                assert_eq!(s.to_string(), "buried [var (unique [var bool])]");
                assert_eq!(a.to_string(), "borrowed [val (unique [val bool])]");
            }
            other => panic!("missing annotations: {other:?}"),
        }
    }

    #[test]
    fn value_type_compatibility() {
        let mut delta = RuntimeTypeEnv::new();
        let tag = unique(Modifier::Var, TypeExpr::Bool);
        delta.insert(ArrayId(0), tag.clone());
        let v = Value::ArrayRef {
            array: ArrayId(0),
            sigma: crate::sigma::IndexMap::identity(2),
        };
        assert!(value_has_type(&delta, &v, &tag));
        // borrowed & read-weakened views are compatible
        let weak = TypeExpr::array(Annotation::Borrowed, Modifier::Val, TypeExpr::Bool);
        assert!(value_has_type(&delta, &v, &weak));
        // structure mismatches are not
        let nested = unique(Modifier::Var, unique(Modifier::Var, TypeExpr::Bool));
        assert!(!value_has_type(&delta, &v, &nested));
        // var view of a val heap array is not allowed either
        let mut delta_val = RuntimeTypeEnv::new();
        delta_val.insert(ArrayId(0), unique(Modifier::Val, TypeExpr::Bool));
        assert!(!value_has_type(&delta_val, &v, &tag));
        assert!(value_has_type(&delta, &Value::Null, &tag));
        assert!(!value_has_type(&delta, &Value::True, &tag));
    }
}
