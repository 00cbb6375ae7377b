//! Type-directed generation of well-typed programs.
//!
//! Generation tracks a symbolic environment: each variable's static type,
//! whether its value has been moved or buried, its view length when
//! statically known, and which runtime array it aliases (so merges can be
//! kept to genuine siblings). Safe mode keeps every index and index-map
//! literal within tracked lengths and never touches moved bindings, so no
//! run can reach the error state; wild mode deliberately violates bounds
//! and liveness to exercise the error rules.
//!
//! Two generation fences keep the disjointness multiset sound across
//! forks, where the spawn rule copies mentioned bindings into children
//! while the parent retains them:
//!
//! - capabilities inherited into an async body are used for boolean
//!   element access only; splitting, merging, borrowing or re-binding
//!   them would derive occurrences the fork subtraction cannot cancel.
//!   Capability surgery inside asyncs happens on arrays the async
//!   allocates itself.
//! - asyncs never store capabilities into arrays; a stored copy would
//!   survive the join next to the parent's retained binding.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lang::ast::{Annotation, Expr, FunDecl, Modifier, Span, TypeExpr, Value};
use crate::lang::Program;
use crate::sigma::IndexMap;
use crate::typecheck::{check_program, read_only};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// No run can reach the error state.
    Safe,
    /// Bounds and liveness may be violated.
    Wild,
}

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub mode: GenMode,
    pub size_budget: usize,
    /// Guarantee at least one finish/async in main.
    pub require_fork: bool,
}

impl GenOptions {
    pub fn new(mode: GenMode, size_budget: usize) -> Self {
        GenOptions {
            mode,
            size_budget,
            require_fork: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("could not close a well-typed program within the budget")]
pub struct GenError;

/// Generates a program accepted by the checker.
pub fn generate(seed: u64, opts: GenOptions) -> Result<Program, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..40 {
        let mut gen = Gen {
            rng: ChaCha8Rng::seed_from_u64(rng.gen::<u64>() ^ attempt),
            mode: opts.mode,
            budget: opts.size_budget,
            next_name: 0,
            next_origin: 0,
            helpers: Vec::new(),
            fork_depth: 0,
            boost_forks: opts.require_fork,
            vars: Vec::new(),
        };
        let program = gen.program();
        if opts.require_fork && !contains_fork(&program.main().unwrap().body) {
            continue;
        }
        if check_program(&program).is_ok() {
            return Ok(program);
        }
    }
    Err(GenError)
}

fn contains_fork(e: &Expr) -> bool {
    match e {
        Expr::FinishAsync { .. } => true,
        Expr::Let { bound, body, .. } => contains_fork(bound) || contains_fork(body),
        Expr::Call { arg, .. } => contains_fork(arg),
        Expr::Assign { value, .. } => contains_fork(value),
        Expr::SplitLet { body, .. } | Expr::Borrow { body, .. } => contains_fork(body),
        Expr::BorrowFrame { inner, .. } => contains_fork(inner),
        _ => false,
    }
}

#[derive(Debug, Clone)]
struct VarInfo {
    name: String,
    ty: TypeExpr,
    moved: bool,
    buried: bool,
    /// Inherited into an async body: boolean element access only.
    fenced: bool,
    known_len: Option<usize>,
    /// Symbolic identity of the underlying array; merges require equality.
    origin: Option<usize>,
}

struct Gen {
    rng: ChaCha8Rng,
    mode: GenMode,
    budget: usize,
    next_name: usize,
    next_origin: usize,
    helpers: Vec<(String, TypeExpr)>, // name, return type (params are bool)
    fork_depth: usize,
    boost_forks: bool,
    vars: Vec<VarInfo>,
}

fn bool_array(m: Modifier) -> TypeExpr {
    TypeExpr::array(Annotation::Unique, m, TypeExpr::Bool)
}

fn nested_array(outer: Modifier, inner: Modifier) -> TypeExpr {
    TypeExpr::array(Annotation::Unique, outer, bool_array(inner))
}

impl Gen {
    fn fresh(&mut self) -> String {
        let name = format!("v{}", self.next_name);
        self.next_name += 1;
        name
    }

    fn origin(&mut self) -> usize {
        self.next_origin += 1;
        self.next_origin
    }

    fn spend(&mut self) -> bool {
        if self.budget == 0 {
            return false;
        }
        self.budget -= 1;
        true
    }

    fn wildly(&mut self, p: f64) -> bool {
        self.mode == GenMode::Wild && self.rng.gen_bool(p)
    }

    fn program(&mut self) -> Program {
        let mut functions = Vec::new();
        let n_helpers = self.rng.gen_range(0..=2usize);
        for _ in 0..n_helpers {
            let name = format!("h{}", self.helpers.len());
            let saved_budget = self.budget.min(8);
            let outer_budget = self.budget - saved_budget;
            self.budget = saved_budget;
            let param = self.fresh();
            self.vars.push(VarInfo {
                name: param.clone(),
                ty: TypeExpr::Bool,
                moved: false,
                buried: false,
                fenced: false,
                known_len: None,
                origin: None,
            });
            let body = self.gen_bool();
            self.vars.clear();
            self.budget += outer_budget;
            self.helpers.push((name.clone(), TypeExpr::Bool));
            functions.push(FunDecl {
                name,
                param,
                param_type: TypeExpr::Bool,
                return_type: TypeExpr::Bool,
                body,
                span: Span::default(),
            });
        }

        let param = self.fresh();
        self.vars.push(VarInfo {
            name: param.clone(),
            ty: TypeExpr::Bool,
            moved: false,
            buried: false,
            fenced: false,
            known_len: None,
            origin: None,
        });
        let body = self.gen_bool();
        self.vars.clear();
        functions.push(FunDecl {
            name: "main".into(),
            param,
            param_type: TypeExpr::Bool,
            return_type: TypeExpr::Bool,
            body,
            span: Span::default(),
        });
        Program { functions }
    }

    fn lit(&mut self) -> Expr {
        if self.rng.gen_bool(0.5) {
            Expr::value(Value::True)
        } else {
            Expr::value(Value::False)
        }
    }

    fn in_async(&self) -> bool {
        self.fork_depth > 0
    }

    // candidate variable indices, by role
    fn available(&self, f: impl Fn(&VarInfo) -> bool) -> Vec<usize> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.moved && !v.buried && f(v))
            .map(|(i, _)| i)
            .collect()
    }

    fn bool_elem_arrays(&self) -> Vec<usize> {
        self.available(|v| {
            matches!(&v.ty, TypeExpr::Array { element, .. } if **element == TypeExpr::Bool)
        })
    }

    fn writable_bool_arrays(&self) -> Vec<usize> {
        self.available(|v| {
            matches!(&v.ty, TypeExpr::Array { modifier: Modifier::Var, element, .. }
                if **element == TypeExpr::Bool)
        })
    }

    /// Arrays open to capability surgery: not fenced by an async.
    fn surgery_arrays(&self) -> Vec<usize> {
        self.available(|v| v.ty.is_array() && !v.fenced)
    }

    fn gen_bool(&mut self) -> Expr {
        if !self.spend() {
            return self.lit();
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Form {
            Lit,
            BoolVar,
            Lookup,
            AssignBool,
            LetBool,
            LetArray,
            Split,
            Borrow,
            Fork,
            Call,
            StoreArray,
        }
        let mut forms: Vec<(Form, u32)> = vec![(Form::Lit, 2)];
        if !self
            .available(|v| v.ty == TypeExpr::Bool)
            .is_empty()
        {
            forms.push((Form::BoolVar, 2));
        }
        if !self.bool_elem_arrays().is_empty() {
            forms.push((Form::Lookup, 4));
        }
        if !self.writable_bool_arrays().is_empty() {
            forms.push((Form::AssignBool, 4));
        }
        if self.budget >= 2 {
            forms.push((Form::LetBool, 2));
            forms.push((Form::LetArray, 5));
        }
        if self.budget >= 2 && !self.surgery_arrays().is_empty() {
            forms.push((Form::Split, 4));
            forms.push((Form::Borrow, 3));
        }
        if self.budget >= 3 && self.fork_depth < 2 {
            forms.push((Form::Fork, if self.boost_forks { 12 } else { 3 }));
        }
        if !self.helpers.is_empty() {
            forms.push((Form::Call, 2));
        }
        if !self.in_async() && self.budget >= 2 && !self.array_store_targets().is_empty() {
            forms.push((Form::StoreArray, 3));
        }

        let total: u32 = forms.iter().map(|(_, w)| w).sum();
        let mut pick = self.rng.gen_range(0..total);
        let form = forms
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap()
            .0;

        match form {
            Form::Lit => self.lit(),
            Form::BoolVar => {
                let candidates = self.available(|v| v.ty == TypeExpr::Bool);
                let i = *candidates.choose(&mut self.rng).unwrap();
                Expr::Var {
                    name: self.vars[i].name.clone(),
                    span: Span::default(),
                    ty: None,
                }
            }
            Form::Lookup => {
                let candidates = self.bool_elem_arrays();
                let i = *candidates.choose(&mut self.rng).unwrap();
                let index = self.pick_index(i);
                Expr::Lookup {
                    name: self.vars[i].name.clone(),
                    index,
                    span: Span::default(),
                    ty: None,
                }
            }
            Form::AssignBool => {
                let value = self.gen_bool();
                // choose the target after the rhs so the rhs cannot have
                // moved it
                let candidates = self.writable_bool_arrays();
                match candidates.choose(&mut self.rng) {
                    Some(&i) => {
                        let index = self.pick_index(i);
                        Expr::Assign {
                            name: self.vars[i].name.clone(),
                            index,
                            value: Box::new(value),
                            span: Span::default(),
                            ty: None,
                        }
                    }
                    None => value,
                }
            }
            Form::LetBool => {
                let bound = self.gen_bool();
                self.bind_and_continue(bound, TypeExpr::Bool, None, None)
            }
            Form::LetArray => {
                let ty = self.pick_array_type();
                match self.gen_array(&ty) {
                    Some(gv) => {
                        self.bind_and_continue(gv.expr, ty, gv.known_len, gv.origin)
                    }
                    None => self.lit(),
                }
            }
            Form::Split => self.gen_split(),
            Form::Borrow => self.gen_borrow(),
            Form::Fork => self.gen_fork(),
            Form::Call => {
                let (name, _) = self.helpers.choose(&mut self.rng).unwrap().clone();
                let arg = if self.wildly(0.1) {
                    // runtime-harmless: bool params never dereference
                    self.lit()
                } else {
                    self.gen_bool()
                };
                Expr::Call {
                    func: name,
                    arg: Box::new(arg),
                    span: Span::default(),
                }
            }
            Form::StoreArray => self.gen_array_store(),
        }
    }

    fn pick_array_type(&mut self) -> TypeExpr {
        let pool = [
            bool_array(Modifier::Var),
            bool_array(Modifier::Var),
            bool_array(Modifier::Var),
            bool_array(Modifier::Val),
            nested_array(Modifier::Var, Modifier::Var),
        ];
        pool.choose(&mut self.rng).unwrap().clone()
    }

    fn pick_index(&mut self, var: usize) -> usize {
        let len = self.vars[var].known_len;
        match len {
            Some(n) if n > 0 => {
                if self.wildly(0.25) {
                    n + self.rng.gen_range(0..3)
                } else {
                    self.rng.gen_range(0..n)
                }
            }
            _ => {
                if self.mode == GenMode::Safe {
                    0
                } else {
                    self.rng.gen_range(0..4)
                }
            }
        }
    }

    fn bind_and_continue(
        &mut self,
        bound: Expr,
        ty: TypeExpr,
        known_len: Option<usize>,
        origin: Option<usize>,
    ) -> Expr {
        let name = self.fresh();
        self.vars.push(VarInfo {
            name: name.clone(),
            ty,
            moved: false,
            buried: false,
            fenced: false,
            known_len,
            origin,
        });
        let body = self.gen_bool();
        self.vars.pop();
        Expr::Let {
            name,
            bound: Box::new(bound),
            body: Box::new(body),
            span: Span::default(),
            ty: None,
        }
    }

    fn gen_split(&mut self) -> Expr {
        let candidates: Vec<usize> = self
            .surgery_arrays()
            .into_iter()
            .filter(|&i| {
                self.vars[i].known_len.map_or(self.mode == GenMode::Wild, |n| n >= 2)
            })
            .collect();
        let Some(&i) = candidates.choose(&mut self.rng) else {
            return self.lit();
        };
        let len = self.vars[i].known_len.unwrap_or(2);
        let (left_sigma, right_sigma) = self.pick_split_sigmas(len);
        let source = self.vars[i].name.clone();
        let ty = self.vars[i].ty.clone();
        let origin = self.vars[i].origin;
        self.vars[i].moved = true;

        let left = self.fresh();
        let right = self.fresh();
        let depth = self.vars.len();
        for (name, sigma) in [(&left, &left_sigma), (&right, &right_sigma)] {
            self.vars.push(VarInfo {
                name: name.clone(),
                ty: ty.clone(),
                moved: false,
                buried: false,
                fenced: false,
                known_len: Some(sigma.len()),
                origin,
            });
        }
        let body = self.gen_bool();
        self.vars.truncate(depth);
        Expr::SplitLet {
            left,
            left_sigma,
            right,
            right_sigma,
            source,
            body: Box::new(body),
            span: Span::default(),
            ty: None,
        }
    }

    fn pick_split_sigmas(&mut self, len: usize) -> (IndexMap, IndexMap) {
        if self.wildly(0.2) {
            // reach beyond the view to exercise the split failure
            let a = IndexMap::new(vec![0]).unwrap();
            let b = IndexMap::new(vec![len + self.rng.gen_range(1..4)]).unwrap();
            return (a, b);
        }
        match self.rng.gen_range(0..3) {
            0 => {
                let at = self.rng.gen_range(1..len);
                let parts = IndexMap::split_at(len, at).unwrap();
                (parts.0, parts.1)
            }
            1 => {
                let parts = IndexMap::split_strided(len, 2).unwrap();
                (parts[0].clone(), parts[1].clone())
            }
            _ => {
                // a forgetting split over two disjoint samples
                let mut pool: Vec<usize> = (0..len).collect();
                pool.shuffle(&mut self.rng);
                let k1 = self.rng.gen_range(1..len);
                let k2 = self.rng.gen_range(1..=(len - k1));
                let a: Vec<usize> = pool[..k1].to_vec();
                let b: Vec<usize> = pool[k1..k1 + k2].to_vec();
                (IndexMap::new(a).unwrap(), IndexMap::new(b).unwrap())
            }
        }
    }

    fn gen_borrow(&mut self) -> Expr {
        let candidates = self.surgery_arrays();
        let Some(&i) = candidates.choose(&mut self.rng) else {
            return self.lit();
        };
        let as_read = self.rng.gen_bool(0.5);
        let source = self.vars[i].name.clone();
        let (known_len, origin) = (self.vars[i].known_len, self.vars[i].origin);
        let TypeExpr::Array {
            modifier, element, ..
        } = self.vars[i].ty.clone()
        else {
            unreachable!()
        };
        let alias_ty = if as_read {
            TypeExpr::Array {
                annotation: Annotation::Borrowed,
                modifier: Modifier::Val,
                element: Box::new(crate::typecheck::weaken_read(&element)),
            }
        } else {
            TypeExpr::Array {
                annotation: Annotation::Borrowed,
                modifier,
                element,
            }
        };

        self.vars[i].buried = true;
        let alias = self.fresh();
        let depth = self.vars.len();
        self.vars.push(VarInfo {
            name: alias.clone(),
            ty: alias_ty,
            moved: false,
            buried: false,
            fenced: false,
            known_len,
            origin,
        });
        let body = self.gen_bool();
        self.vars.truncate(depth);
        self.vars[i].buried = false;
        Expr::Borrow {
            source,
            as_read,
            alias,
            body: Box::new(body),
            span: Span::default(),
            source_ty: None,
            alias_ty: None,
        }
    }

    fn gen_fork(&mut self) -> Expr {
        // partition the visible variables between the two asyncs; children
        // receive copies, so their moves do not affect the parent state
        let saved = self.vars.clone();
        let mut left_vars = Vec::new();
        let mut right_vars = Vec::new();
        for v in &saved {
            let mut child = v.clone();
            if child.ty.is_array() {
                child.fenced = true;
            }
            match self.rng.gen_range(0..3) {
                0 => left_vars.push(child),
                1 => right_vars.push(child),
                _ => {}
            }
        }

        let child_budget = self.budget.min(8);
        self.fork_depth += 1;

        let outer = self.budget;
        self.budget = child_budget;
        self.vars = left_vars;
        let left = self.gen_bool();
        let spent_left = child_budget - self.budget;

        self.budget = child_budget.min(outer.saturating_sub(spent_left));
        self.vars = right_vars;
        let right = self.gen_bool();
        let spent_right = child_budget.min(outer.saturating_sub(spent_left)) - self.budget;

        self.fork_depth -= 1;
        self.vars = saved;
        self.budget = outer.saturating_sub(spent_left + spent_right);

        let after = self.gen_bool();
        Expr::FinishAsync {
            left: Box::new(left),
            right: Box::new(right),
            after: Box::new(after),
            span: Span::default(),
        }
    }

    /// Targets for storing a capability into an array: nested writable
    /// arrays, outside any async.
    fn array_store_targets(&self) -> Vec<usize> {
        self.available(|v| {
            matches!(&v.ty, TypeExpr::Array { modifier: Modifier::Var, element, .. }
                if element.is_array() && !matches!(**element, TypeExpr::Array { annotation: Annotation::Borrowed, .. }))
        })
    }

    fn gen_array_store(&mut self) -> Expr {
        let candidates = self.array_store_targets();
        let Some(&i) = candidates.choose(&mut self.rng) else {
            return self.lit();
        };
        let TypeExpr::Array { element, .. } = self.vars[i].ty.clone() else {
            unreachable!()
        };
        let value = if self.wildly(0.15) {
            Some(GenValue {
                expr: Expr::value(Value::Null),
                known_len: None,
                origin: None,
            })
        } else {
            self.gen_array(&element)
        };
        let Some(gv) = value else {
            return self.lit();
        };
        // re-check the target: generating the value may have moved it
        if self.vars[i].moved || self.vars[i].buried {
            return self.lit();
        }
        let index = self.pick_index(i);
        Expr::Assign {
            name: self.vars[i].name.clone(),
            index,
            value: Box::new(gv.expr),
            span: Span::default(),
            ty: None,
        }
    }

    fn gen_array(&mut self, target: &TypeExpr) -> Option<GenValue> {
        self.spend();
        #[derive(Clone, Copy)]
        enum Form {
            MoveVar,
            New,
            Merge,
            MovedVar, // wild: use a moved binding, yielding null at runtime
        }
        let movable = self.available(|v| v.ty == *target && !v.fenced);
        let mergeable = self.merge_pairs(target);
        let can_new = matches!(
            target,
            TypeExpr::Array {
                annotation: Annotation::Unique,
                ..
            }
        );
        let mut forms: Vec<(Form, u32)> = Vec::new();
        if can_new {
            forms.push((Form::New, 4));
        }
        if !movable.is_empty() {
            forms.push((Form::MoveVar, 3));
        }
        if !mergeable.is_empty() {
            forms.push((Form::Merge, 4));
        }
        if self.mode == GenMode::Wild {
            let dead = self
                .vars
                .iter()
                .enumerate()
                .filter(|(_, v)| v.ty == *target && v.moved)
                .map(|(i, _)| i)
                .collect::<Vec<_>>();
            if !dead.is_empty() {
                forms.push((Form::MovedVar, 2));
            }
        }
        if forms.is_empty() {
            return None;
        }
        let total: u32 = forms.iter().map(|(_, w)| w).sum();
        let mut pick = self.rng.gen_range(0..total);
        let form = forms
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .unwrap()
            .0;

        match form {
            Form::New => {
                let len = self.rng.gen_range(1..=6);
                let origin = self.origin();
                Some(GenValue {
                    expr: Expr::New {
                        ty: target.clone(),
                        len,
                        span: Span::default(),
                    },
                    known_len: Some(len),
                    origin: Some(origin),
                })
            }
            Form::MoveVar => {
                let i = *movable.choose(&mut self.rng).unwrap();
                let info = self.vars[i].clone();
                if !read_only(&info.ty) {
                    self.vars[i].moved = true;
                }
                Some(GenValue {
                    expr: Expr::Var {
                        name: info.name,
                        span: Span::default(),
                        ty: None,
                    },
                    known_len: info.known_len,
                    origin: info.origin,
                })
            }
            Form::Merge => {
                let (i, j) = *mergeable.choose(&mut self.rng).unwrap();
                let (left, right) = (self.vars[i].name.clone(), self.vars[j].name.clone());
                let origin = self.vars[i].origin;
                let len = match (self.vars[i].known_len, self.vars[j].known_len) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                };
                self.vars[i].moved = true;
                self.vars[j].moved = true;
                Some(GenValue {
                    expr: Expr::Merge {
                        left,
                        right,
                        span: Span::default(),
                        ty: None,
                    },
                    known_len: len,
                    origin,
                })
            }
            Form::MovedVar => {
                let dead: Vec<usize> = self
                    .vars
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.ty == *target && v.moved)
                    .map(|(i, _)| i)
                    .collect();
                let i = *dead.choose(&mut self.rng).unwrap();
                Some(GenValue {
                    expr: Expr::Var {
                        name: self.vars[i].name.clone(),
                        span: Span::default(),
                        ty: None,
                    },
                    known_len: None,
                    origin: None,
                })
            }
        }
    }

    /// Pairs of distinct live same-typed variables aliasing the same
    /// array (plus, in wild mode, deliberate cross-array pairs).
    fn merge_pairs(&mut self, target: &TypeExpr) -> Vec<(usize, usize)> {
        let candidates = self.available(|v| v.ty == *target && !v.fenced);
        let mut pairs = Vec::new();
        for (a, &i) in candidates.iter().enumerate() {
            for &j in &candidates[a + 1..] {
                let same_origin = match (self.vars[i].origin, self.vars[j].origin) {
                    (Some(x), Some(y)) => x == y,
                    _ => false,
                };
                if same_origin || self.wildly(0.3) {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

struct GenValue {
    expr: Expr,
    known_len: Option<usize>,
    origin: Option<usize>,
}
