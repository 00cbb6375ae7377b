//! Small-step operational semantics: configurations, activity trees,
//! stacks with borrow markers, every reduction rule including the error
//! rules, and a pluggable scheduler.
//!
//! Concurrency is modeled, not executed: a configuration holds a tree of
//! activities and each step picks one enabled redex, so a driver can
//! enumerate or randomize interleavings.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernel::ArrayId;
use crate::lang::ast::{free_vars, Expr, TypeExpr, Value};
use crate::lang::Program;
use crate::sigma::IndexMap;
use crate::typecheck::{self, read_only, read_only_elems, RuntimeTypeEnv, TypeEnv};

pub type RuntimeValue = Value;

/// One stack binding; `marked` means a borrow marker (`•`) sits
/// immediately before it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StackEntry {
    pub marked: bool,
    pub name: String,
    pub ty: TypeExpr,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Stack {
    entries: Vec<StackEntry>,
}

impl Stack {
    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: StackEntry) {
        self.entries.push(entry);
    }

    /// Rightmost binding wins.
    pub fn lookup(&self, name: &str) -> Option<&Value> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.name == name)
            .map(|e| &e.value)
    }

    fn update(&mut self, name: &str, value: Value) {
        if let Some(entry) = self.entries.iter_mut().rev().find(|e| e.name == name) {
            entry.value = value;
        }
    }

    /// Drops the rightmost marked entry and everything after it. Returns
    /// false when no marker exists.
    fn drop_borrow_suffix(&mut self) -> bool {
        match self.entries.iter().rposition(|e| e.marked) {
            Some(i) => {
                self.entries.truncate(i);
                true
            }
            None => false,
        }
    }

    pub fn marker_count(&self) -> usize {
        self.entries.iter().filter(|e| e.marked).count()
    }
}

/// One heap array, tagged with the declared type of the `new` expression
/// that allocated it (used to reconstruct Δ).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeapArray {
    pub values: Vec<Value>,
    pub ty: TypeExpr,
}

/// Append-only array heap; ids are indices and are never reused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Heap {
    arrays: Vec<HeapArray>,
}

impl Heap {
    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn get(&self, id: ArrayId) -> Option<&HeapArray> {
        self.arrays.get(id.0)
    }

    pub fn arrays(&self) -> impl Iterator<Item = (ArrayId, &HeapArray)> {
        self.arrays.iter().enumerate().map(|(i, a)| (ArrayId(i), a))
    }

    fn alloc(&mut self, values: Vec<Value>, ty: TypeExpr) -> ArrayId {
        let id = ArrayId(self.arrays.len());
        self.arrays.push(HeapArray { values, ty });
        id
    }

    /// Δ, reconstructed from the allocation tags.
    pub fn delta(&self) -> RuntimeTypeEnv {
        self.arrays
            .iter()
            .enumerate()
            .map(|(i, a)| (ArrayId(i), a.ty.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Activity {
    Leaf {
        stack: Stack,
        expr: Expr,
    },
    Fork {
        left: Box<Activity>,
        right: Box<Activity>,
        waiting_stack: Stack,
        waiting_expr: Expr,
    },
    ErrorState,
}

impl Activity {
    fn is_value_leaf(&self) -> bool {
        matches!(self, Activity::Leaf { expr, .. } if expr.is_value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Config {
    pub heap: Heap,
    pub activity: Activity,
}

impl Config {
    /// Terminal: a value at the root, or the error state.
    pub fn is_terminal(&self) -> bool {
        matches!(self.activity, Activity::ErrorState) || self.activity.is_value_leaf()
    }

    pub fn is_error(&self) -> bool {
        matches!(self.activity, Activity::ErrorState)
    }

    pub fn final_value(&self) -> Option<&Value> {
        match &self.activity {
            Activity::Leaf { expr: Expr::Value { value, .. }, .. } => Some(value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChoiceAction {
    /// Step the leaf at the end of the path.
    Step,
    /// Collapse a fork whose left child is the error state.
    CollapseLeft,
    /// Collapse a fork whose right child is the error state.
    CollapseRight,
    /// Join a fork whose children are both values.
    Finish,
}

/// Selects one enabled redex: a path of scheduling decisions down the
/// activity tree plus the action at its end.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleChoice {
    pub path: Vec<Branch>,
    pub action: ChoiceAction,
}

impl fmt::Display for ScheduleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "root")?;
        } else {
            for (i, b) in self.path.iter().enumerate() {
                if i > 0 {
                    write!(f, ".")?;
                }
                match b {
                    Branch::L => write!(f, "L")?,
                    Branch::R => write!(f, "R")?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("the chosen redex is not enabled")]
    ChoiceNotEnabled,
    #[error("configuration is stuck: no rule applies")]
    Stuck,
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub index: usize,
    pub rule: &'static str,
    pub path: String,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {} @{}", self.index, self.rule, self.path)
    }
}

// ---------------------------------------------------------------------
// The step relation
// ---------------------------------------------------------------------

/// Fires exactly one rule at the redex selected by `choice`.
pub fn step(
    program: &Program,
    cfg: &Config,
    choice: &ScheduleChoice,
) -> Result<(Config, &'static str), StepError> {
    let mut heap = cfg.heap.clone();
    let (activity, rule) = step_activity(
        program,
        &mut heap,
        &cfg.activity,
        &choice.path,
        choice.action,
    )?;
    Ok((Config { heap, activity }, rule))
}

fn step_activity(
    program: &Program,
    heap: &mut Heap,
    act: &Activity,
    path: &[Branch],
    action: ChoiceAction,
) -> Result<(Activity, &'static str), StepError> {
    match act {
        Activity::ErrorState => Err(StepError::ChoiceNotEnabled),
        Activity::Leaf { stack, expr } => {
            if !path.is_empty() || action != ChoiceAction::Step || expr.is_value() {
                return Err(StepError::ChoiceNotEnabled);
            }
            let mut stack = stack.clone();
            match step_expr(program, heap, &mut stack, expr)? {
                LeafOutcome::Leaf(expr, rule) => Ok((Activity::Leaf { stack, expr }, rule)),
                LeafOutcome::Spawn {
                    left,
                    right,
                    waiting,
                    rule,
                } => Ok((
                    Activity::Fork {
                        left: Box::new(Activity::Leaf {
                            stack: left.0,
                            expr: left.1,
                        }),
                        right: Box::new(Activity::Leaf {
                            stack: right.0,
                            expr: right.1,
                        }),
                        waiting_stack: stack,
                        waiting_expr: waiting,
                    },
                    rule,
                )),
                LeafOutcome::Error(rule) => Ok((Activity::ErrorState, rule)),
            }
        }
        Activity::Fork {
            left,
            right,
            waiting_stack,
            waiting_expr,
        } => match path.split_first() {
            Some((Branch::L, rest)) => {
                let (stepped, rule) = step_activity(program, heap, left, rest, action)?;
                Ok((
                    Activity::Fork {
                        left: Box::new(stepped),
                        right: right.clone(),
                        waiting_stack: waiting_stack.clone(),
                        waiting_expr: waiting_expr.clone(),
                    },
                    rule,
                ))
            }
            Some((Branch::R, rest)) => {
                let (stepped, rule) = step_activity(program, heap, right, rest, action)?;
                Ok((
                    Activity::Fork {
                        left: left.clone(),
                        right: Box::new(stepped),
                        waiting_stack: waiting_stack.clone(),
                        waiting_expr: waiting_expr.clone(),
                    },
                    rule,
                ))
            }
            None => match action {
                ChoiceAction::CollapseLeft if matches!(**left, Activity::ErrorState) => {
                    Ok((Activity::ErrorState, "DYN-SCHED-L-FAIL"))
                }
                ChoiceAction::CollapseRight if matches!(**right, Activity::ErrorState) => {
                    Ok((Activity::ErrorState, "DYN-SCHED-R-FAIL"))
                }
                ChoiceAction::Finish if left.is_value_leaf() && right.is_value_leaf() => Ok((
                    Activity::Leaf {
                        stack: waiting_stack.clone(),
                        expr: waiting_expr.clone(),
                    },
                    "DYN-FINISH",
                )),
                _ => Err(StepError::ChoiceNotEnabled),
            },
        },
    }
}

enum LeafOutcome {
    Leaf(Expr, &'static str),
    Spawn {
        left: (Stack, Expr),
        right: (Stack, Expr),
        waiting: Expr,
        rule: &'static str,
    },
    Error(&'static str),
}

fn ascribed(value: Value, ty: &TypeExpr) -> Expr {
    Expr::Value {
        value,
        span: Default::default(),
        ty: Some(ty.clone()),
    }
}

fn annotation(ty: &Option<TypeExpr>) -> Result<&TypeExpr, StepError> {
    // a missing annotation means the program skipped elaboration
    ty.as_ref().ok_or(StepError::Stuck)
}

/// Steps the unique redex inside a leaf's expression, reading and writing
/// the leaf's stack and the shared heap.
fn step_expr(
    program: &Program,
    heap: &mut Heap,
    stack: &mut Stack,
    e: &Expr,
) -> Result<LeafOutcome, StepError> {
    // evaluation contexts: let-bound, assignment rhs, call argument and
    // the borrow frame recurse; everything else is an immediate redex
    match e {
        Expr::Value { .. } => Err(StepError::Stuck),

        Expr::Let {
            name,
            bound,
            body,
            span,
            ty,
        } => {
            if bound.is_value() {
                let Expr::Value { value, .. } = bound.as_ref() else {
                    unreachable!()
                };
                stack.push(StackEntry {
                    marked: false,
                    name: name.clone(),
                    ty: annotation(ty)?.clone(),
                    value: value.clone(),
                });
                Ok(LeafOutcome::Leaf((**body).clone(), "DYN-LET"))
            } else {
                rewrap(step_expr(program, heap, stack, bound)?, |inner| Expr::Let {
                    name: name.clone(),
                    bound: Box::new(inner),
                    body: body.clone(),
                    span: *span,
                    ty: ty.clone(),
                })
            }
        }

        Expr::Call { func, arg, span } => {
            if arg.is_value() {
                let Expr::Value { value, .. } = arg.as_ref() else {
                    unreachable!()
                };
                let decl = program.function(func).ok_or(StepError::Stuck)?;
                stack.push(StackEntry {
                    marked: false,
                    name: decl.param.clone(),
                    ty: decl.param_type.clone(),
                    value: value.clone(),
                });
                Ok(LeafOutcome::Leaf(decl.body.clone(), "DYN-CALL"))
            } else {
                rewrap(step_expr(program, heap, stack, arg)?, |inner| Expr::Call {
                    func: func.clone(),
                    arg: Box::new(inner),
                    span: *span,
                })
            }
        }

        Expr::Assign {
            name,
            index,
            value,
            span,
            ty,
        } => {
            if value.is_value() {
                let Expr::Value { value: v, .. } = value.as_ref() else {
                    unreachable!()
                };
                match stack.lookup(name) {
                    Some(Value::Null) => Ok(LeafOutcome::Error("DYN-ARRAY-ASSIGN-NULL")),
                    Some(Value::ArrayRef { array, sigma }) => match sigma.apply(*index) {
                        None => Ok(LeafOutcome::Error("DYN-ARRAY-ASSIGN-FAIL")),
                        Some(phys) => {
                            let (array, v) = (*array, v.clone());
                            heap.arrays[array.0].values[phys] = v;
                            Ok(LeafOutcome::Leaf(
                                ascribed(Value::True, &TypeExpr::Bool),
                                "DYN-ARRAY-ASSIGN",
                            ))
                        }
                    },
                    _ => Err(StepError::Stuck),
                }
            } else {
                rewrap(step_expr(program, heap, stack, value)?, |inner| {
                    Expr::Assign {
                        name: name.clone(),
                        index: *index,
                        value: Box::new(inner),
                        span: *span,
                        ty: ty.clone(),
                    }
                })
            }
        }

        Expr::BorrowFrame { inner, span } => {
            if inner.is_value() {
                if !stack.drop_borrow_suffix() {
                    return Err(StepError::Stuck);
                }
                Ok(LeafOutcome::Leaf(
                    ascribed(Value::True, &TypeExpr::Bool),
                    "DYN-BORROW-DONE",
                ))
            } else {
                rewrap(step_expr(program, heap, stack, inner)?, |e| {
                    Expr::BorrowFrame {
                        inner: Box::new(e),
                        span: *span,
                    }
                })
            }
        }

        Expr::Var { name, ty, .. } => {
            let ty = annotation(ty)?;
            let value = stack.lookup(name).ok_or(StepError::Stuck)?.clone();
            if read_only(ty) {
                Ok(LeafOutcome::Leaf(ascribed(value, ty), "DYN-VAR-LOOKUP"))
            } else {
                stack.update(name, Value::Null);
                Ok(LeafOutcome::Leaf(ascribed(value, ty), "DYN-VAR-LOOKUP-DEST"))
            }
        }

        Expr::Lookup { name, index, ty, .. } => {
            let ty = annotation(ty)?;
            match stack.lookup(name) {
                Some(Value::Null) => Ok(LeafOutcome::Error("DYN-ARRAY-LOOKUP-NULL")),
                Some(Value::ArrayRef { array, sigma }) => match sigma.apply(*index) {
                    None => Ok(LeafOutcome::Error("DYN-ARRAY-LOOKUP-FAIL")),
                    Some(phys) => {
                        let array = *array;
                        let TypeExpr::Array { element, .. } = ty else {
                            return Err(StepError::Stuck);
                        };
                        let value = heap.arrays[array.0].values[phys].clone();
                        if read_only_elems(ty) {
                            Ok(LeafOutcome::Leaf(ascribed(value, element), "DYN-ARRAY-LOOKUP"))
                        } else {
                            heap.arrays[array.0].values[phys] = Value::Null;
                            Ok(LeafOutcome::Leaf(
                                ascribed(value, element),
                                "DYN-ARRAY-LOOKUP-UNIQUE",
                            ))
                        }
                    }
                },
                _ => Err(StepError::Stuck),
            }
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
            let ty = annotation(ty)?;
            match stack.lookup(source) {
                Some(Value::Null) => Ok(LeafOutcome::Error("DYN-ARRAY-SPLIT-NULL")),
                Some(Value::ArrayRef { array, sigma }) => {
                    let array = *array;
                    let composed = (
                        IndexMap::compose(sigma, left_sigma),
                        IndexMap::compose(sigma, right_sigma),
                    );
                    // a literal that reaches beyond the source view is an
                    // out-of-bounds access
                    let (Ok(ls), Ok(rs)) = composed else {
                        return Ok(LeafOutcome::Error("DYN-ARRAY-SPLIT-FAIL"));
                    };
                    stack.update(source, Value::Null);
                    for (name, sigma) in [(left, ls), (right, rs)] {
                        stack.push(StackEntry {
                            marked: false,
                            name: name.clone(),
                            ty: ty.clone(),
                            value: Value::ArrayRef { array, sigma },
                        });
                    }
                    Ok(LeafOutcome::Leaf((**body).clone(), "DYN-ARRAY-SPLIT"))
                }
                _ => Err(StepError::Stuck),
            }
        }

        Expr::Merge {
            left, right, ty, ..
        } => {
            let ty = annotation(ty)?;
            let (lv, rv) = (stack.lookup(left), stack.lookup(right));
            match (lv, rv) {
                (Some(Value::Null), Some(_)) | (Some(_), Some(Value::Null)) => {
                    Ok(LeafOutcome::Error("DYN-ARRAY-MERGE-NULL"))
                }
                (
                    Some(Value::ArrayRef { array: la, sigma: ls }),
                    Some(Value::ArrayRef { array: ra, sigma: rs }),
                ) => {
                    if la != ra {
                        return Ok(LeafOutcome::Error("DYN-ARRAY-MERGE-FAIL"));
                    }
                    // the union view concatenates the two translation
                    // functions; read-only views may overlap, so no
                    // injectivity check here
                    let mut targets = ls.targets().to_vec();
                    targets.extend_from_slice(rs.targets());
                    let merged = Value::ArrayRef {
                        array: *la,
                        sigma: IndexMap::from_targets_unchecked(targets),
                    };
                    stack.update(left, Value::Null);
                    stack.update(right, Value::Null);
                    Ok(LeafOutcome::Leaf(ascribed(merged, ty), "DYN-ARRAY-MERGE"))
                }
                _ => Err(StepError::Stuck),
            }
        }

        Expr::New { ty, len, .. } => {
            let TypeExpr::Array { element, .. } = ty else {
                return Err(StepError::Stuck);
            };
            let default = if **element == TypeExpr::Bool {
                Value::False
            } else {
                Value::Null
            };
            let array = heap.alloc(vec![default; *len], ty.clone());
            let value = Value::ArrayRef {
                array,
                sigma: IndexMap::identity(*len),
            };
            Ok(LeafOutcome::Leaf(ascribed(value, ty), "DYN-ARRAY-NEW"))
        }

        Expr::FinishAsync {
            left, right, after, ..
        } => {
            // keep only the rightmost binding of each mentioned name,
            // preserving stack order
            let spawn_stack = |fv: &BTreeSet<String>| -> Stack {
                let mut sub = Stack::default();
                for (i, entry) in stack.entries.iter().enumerate() {
                    if fv.contains(&entry.name)
                        && stack.entries.iter().rposition(|e| e.name == entry.name) == Some(i)
                    {
                        sub.push(StackEntry {
                            marked: false,
                            ..entry.clone()
                        });
                    }
                }
                sub
            };
            let s1 = spawn_stack(&free_vars(left));
            let s2 = spawn_stack(&free_vars(right));
            Ok(LeafOutcome::Spawn {
                left: (s1, (**left).clone()),
                right: (s2, (**right).clone()),
                waiting: (**after).clone(),
                rule: "DYN-SPAWN",
            })
        }

        Expr::Borrow {
            source,
            alias,
            body,
            span,
            source_ty,
            alias_ty,
            ..
        } => {
            let value = stack.lookup(source).ok_or(StepError::Stuck)?.clone();
            stack.push(StackEntry {
                marked: true,
                name: source.clone(),
                ty: annotation(source_ty)?.clone(),
                value: Value::Null,
            });
            stack.push(StackEntry {
                marked: false,
                name: alias.clone(),
                ty: annotation(alias_ty)?.clone(),
                value,
            });
            Ok(LeafOutcome::Leaf(
                Expr::BorrowFrame {
                    inner: body.clone(),
                    span: *span,
                },
                "DYN-BORROW",
            ))
        }
    }
}

/// Plugs a stepped subexpression back into its evaluation context. A
/// spawn bubbling out of a context wraps the waiting expression instead;
/// an error swallows the context.
fn rewrap(outcome: LeafOutcome, ctx: impl FnOnce(Expr) -> Expr) -> Result<LeafOutcome, StepError> {
    Ok(match outcome {
        LeafOutcome::Leaf(inner, rule) => LeafOutcome::Leaf(ctx(inner), rule),
        LeafOutcome::Spawn {
            left,
            right,
            waiting,
            rule,
        } => LeafOutcome::Spawn {
            left,
            right,
            waiting: ctx(waiting),
            rule,
        },
        err @ LeafOutcome::Error(_) => err,
    })
}

// ---------------------------------------------------------------------
// Enabled choices and the driver
// ---------------------------------------------------------------------

/// All currently enabled schedule choices; empty iff the configuration is
/// terminal or stuck.
pub fn enabled_choices(program: &Program, cfg: &Config) -> Vec<ScheduleChoice> {
    let mut out = Vec::new();
    collect_choices(program, &cfg.heap, &cfg.activity, &mut Vec::new(), &mut out);
    out
}

fn collect_choices(
    program: &Program,
    heap: &Heap,
    act: &Activity,
    path: &mut Vec<Branch>,
    out: &mut Vec<ScheduleChoice>,
) {
    match act {
        Activity::ErrorState => {}
        Activity::Leaf { stack, expr } => {
            if expr.is_value() {
                return;
            }
            let mut heap = heap.clone();
            let mut stack = stack.clone();
            if step_expr(program, &mut heap, &mut stack, expr).is_ok() {
                out.push(ScheduleChoice {
                    path: path.clone(),
                    action: ChoiceAction::Step,
                });
            }
        }
        Activity::Fork { left, right, .. } => {
            if matches!(**left, Activity::ErrorState) {
                out.push(ScheduleChoice {
                    path: path.clone(),
                    action: ChoiceAction::CollapseLeft,
                });
            } else {
                path.push(Branch::L);
                collect_choices(program, heap, left, path, out);
                path.pop();
            }
            if matches!(**right, Activity::ErrorState) {
                out.push(ScheduleChoice {
                    path: path.clone(),
                    action: ChoiceAction::CollapseRight,
                });
            } else {
                path.push(Branch::R);
                collect_choices(program, heap, right, path, out);
                path.pop();
            }
            if left.is_value_leaf() && right.is_value_leaf() {
                out.push(ScheduleChoice {
                    path: path.clone(),
                    action: ChoiceAction::Finish,
                });
            }
        }
    }
}

/// The initial configuration: main's body with its parameter bound to the
/// default value of its type (`false` for bool, `null` for arrays).
pub fn initial_config(program: &Program) -> Option<Config> {
    let main = program.main()?;
    let default = match main.param_type {
        TypeExpr::Bool => Value::False,
        TypeExpr::Array { .. } => Value::Null,
    };
    let mut stack = Stack::default();
    stack.push(StackEntry {
        marked: false,
        name: main.param.clone(),
        ty: main.param_type.clone(),
        value: default,
    });
    Some(Config {
        heap: Heap::default(),
        activity: Activity::Leaf {
            stack,
            expr: main.body.clone(),
        },
    })
}

#[derive(Debug, Clone)]
pub enum Scheduler {
    /// Uniform random choice among enabled redexes, from a seeded stream.
    SeededRandom(u64),
    /// Replays a fixed sequence of choices.
    FixedSequence(Vec<ScheduleChoice>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Value(Value),
    Error,
    BudgetExceeded,
    /// Non-terminal but no rule applies; unreachable from well-typed
    /// programs if progress holds.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: Config,
    pub trace: Vec<TraceStep>,
    pub outcome: Outcome,
}

pub const DEFAULT_STEP_BUDGET: usize = 100_000;

/// Runs a checked (annotated) program to a terminal configuration or
/// until the step budget is exhausted.
pub fn run(program: &Program, scheduler: Scheduler, max_steps: usize) -> RunResult {
    let mut cfg = initial_config(program).expect("checked programs have a main function");
    let mut trace = Vec::new();
    let mut rng = match &scheduler {
        Scheduler::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        Scheduler::FixedSequence(_) => None,
    };
    let mut fixed = match scheduler {
        Scheduler::FixedSequence(choices) => Some(choices.into_iter()),
        _ => None,
    };

    for index in 1..=max_steps {
        if cfg.is_terminal() {
            break;
        }
        let choices = enabled_choices(program, &cfg);
        if choices.is_empty() {
            return RunResult {
                config: cfg,
                trace,
                outcome: Outcome::Stuck,
            };
        }
        let choice = match (&mut rng, &mut fixed) {
            (Some(rng), _) => choices.choose(rng).unwrap().clone(),
            (_, Some(seq)) => match seq.next() {
                Some(c) => c,
                None => break,
            },
            _ => unreachable!(),
        };
        match step(program, &cfg, &choice) {
            Ok((next, rule)) => {
                trace.push(TraceStep {
                    index,
                    rule,
                    path: choice.to_string(),
                });
                cfg = next;
            }
            Err(_) => {
                return RunResult {
                    config: cfg,
                    trace,
                    outcome: Outcome::Stuck,
                }
            }
        }
    }

    let outcome = if cfg.is_error() {
        Outcome::Error
    } else if let Some(v) = cfg.final_value() {
        Outcome::Value(v.clone())
    } else {
        Outcome::BudgetExceeded
    };
    RunResult {
        config: cfg,
        trace,
        outcome,
    }
}

// ---------------------------------------------------------------------
// Configuration well-formedness (the preservation probe)
// ---------------------------------------------------------------------

/// The reconstructed typing evidence for a configuration.
#[derive(Debug, Clone)]
pub struct WfReport {
    pub ok: bool,
    /// First failure, for diagnostics.
    pub failure: Option<String>,
    pub delta: RuntimeTypeEnv,
    /// Mirrored Γ per thread, keyed by activity path.
    pub gammas: Vec<(String, TypeEnv)>,
}

/// Checks the well-formedness judgment on a runtime configuration:
/// heap values match their arrays' element types, each stack binding's
/// value matches its recorded type, marked bindings hold `null` at buried
/// types, every thread's expression types under the mirrored Γ, borrow
/// markers balance borrow frames, and every array reference is within
/// the bounds of its array.
pub fn wf_config(program: &Program, cfg: &Config) -> WfReport {
    let delta = cfg.heap.delta();
    let mut report = WfReport {
        ok: true,
        failure: None,
        delta: delta.clone(),
        gammas: Vec::new(),
    };

    let fail = |report: &mut WfReport, why: String| {
        if report.ok {
            report.ok = false;
            report.failure = Some(why);
        }
    };

    for (id, array) in cfg.heap.arrays() {
        let TypeExpr::Array { element, .. } = &array.ty else {
            fail(&mut report, format!("{id} has a non-array tag"));
            continue;
        };
        for (i, v) in array.values.iter().enumerate() {
            if !typecheck::value_has_type(&delta, v, element) {
                fail(
                    &mut report,
                    format!("{id}[{i}] holds {v}, incompatible with `{element}`"),
                );
            }
            if !ref_in_bounds(&cfg.heap, v) {
                fail(&mut report, format!("{id}[{i}] holds an out-of-range reference"));
            }
        }
    }

    check_activity(program, cfg, &delta, &cfg.activity, String::from("root"), &mut report);
    report
}

fn ref_in_bounds(heap: &Heap, v: &Value) -> bool {
    match v {
        Value::ArrayRef { array, sigma } => match heap.get(*array) {
            Some(rec) => sigma.max_target_excl() <= rec.values.len(),
            None => false,
        },
        _ => true,
    }
}

fn check_activity(
    program: &Program,
    cfg: &Config,
    delta: &RuntimeTypeEnv,
    act: &Activity,
    path: String,
    report: &mut WfReport,
) {
    let fail = |report: &mut WfReport, why: String| {
        if report.ok {
            report.ok = false;
            report.failure = Some(why);
        }
    };
    match act {
        // error states are always well-formed
        Activity::ErrorState => {}
        Activity::Leaf { stack, expr } => {
            check_thread(program, cfg, delta, stack, expr, &path, report);
        }
        Activity::Fork {
            left,
            right,
            waiting_stack,
            waiting_expr,
        } => {
            check_activity(program, cfg, delta, left, format!("{path}.L"), report);
            check_activity(program, cfg, delta, right, format!("{path}.R"), report);
            check_thread(program, cfg, delta, waiting_stack, waiting_expr, &path, report);
            if let (Activity::Leaf { stack: s1, .. }, Activity::Leaf { stack: s2, .. }) =
                (&**left, &**right)
            {
                let n1: BTreeSet<&str> = s1.entries().iter().map(|e| e.name.as_str()).collect();
                let n2: BTreeSet<&str> = s2.entries().iter().map(|e| e.name.as_str()).collect();
                if n1.intersection(&n2).next().is_some() {
                    fail(report, format!("{path}: spawned stacks share a variable"));
                }
            }
        }
    }
}

fn check_thread(
    program: &Program,
    cfg: &Config,
    delta: &RuntimeTypeEnv,
    stack: &Stack,
    expr: &Expr,
    path: &str,
    report: &mut WfReport,
) {
    let fail = |report: &mut WfReport, why: String| {
        if report.ok {
            report.ok = false;
            report.failure = Some(why);
        }
    };

    let mut gamma = TypeEnv::new();
    for entry in stack.entries() {
        if entry.marked {
            if entry.value != Value::Null || !typecheck::is_buried(&entry.ty) {
                fail(
                    report,
                    format!("{path}: marked binding `{}` is not a buried null", entry.name),
                );
            }
            gamma.push_marked(entry.name.clone(), entry.ty.clone());
        } else {
            gamma.push_plain(entry.name.clone(), entry.ty.clone());
        }
        if !typecheck::value_has_type(delta, &entry.value, &entry.ty) {
            fail(
                report,
                format!(
                    "{path}: `{}` holds {} at incompatible type `{}`",
                    entry.name, entry.value, entry.ty
                ),
            );
        }
        if !ref_in_bounds(&cfg.heap, &entry.value) {
            fail(
                report,
                format!("{path}: `{}` holds an out-of-range reference", entry.name),
            );
        }
    }

    let frames = count_borrow_frames(expr);
    if stack.marker_count() != frames {
        fail(
            report,
            format!(
                "{path}: {} borrow markers but {} borrow frames",
                stack.marker_count(),
                frames
            ),
        );
    }

    let mut expr = expr.clone();
    if let Err(d) = typecheck::infer(program, delta, &mut gamma, &mut expr) {
        fail(report, format!("{path}: expression ill-typed: {d}"));
    }
    report.gammas.push((path.to_string(), gamma));
}

fn count_borrow_frames(e: &Expr) -> usize {
    match e {
        Expr::BorrowFrame { inner, .. } => 1 + count_borrow_frames(inner),
        Expr::Let { bound, body, .. } => count_borrow_frames(bound) + count_borrow_frames(body),
        Expr::Call { arg, .. } => count_borrow_frames(arg),
        Expr::Assign { value, .. } => count_borrow_frames(value),
        Expr::SplitLet { body, .. } => count_borrow_frames(body),
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            count_borrow_frames(left) + count_borrow_frames(right) + count_borrow_frames(after)
        }
        Expr::Borrow { body, .. } => count_borrow_frames(body),
        _ => 0,
    }
}

// ---------------------------------------------------------------------
// Final-state dump
// ---------------------------------------------------------------------

/// Heap and capability dump in the kernel's debug format.
pub fn dump_config(cfg: &Config) -> String {
    let mut caps: Vec<(ArrayId, IndexMap, TypeExpr)> = Vec::new();
    collect_refs(&cfg.activity, &mut caps);

    let mut out = String::new();
    for (id, array) in cfg.heap.arrays() {
        let values: Vec<String> = array.values.iter().map(|v| v.to_string()).collect();
        let count = caps.iter().filter(|(a, _, _)| *a == id).count();
        out.push_str(&format!("{id}: [{}] caps={count}\n", values.join(", ")));
    }
    for (id, sigma, ty) in &caps {
        let mode = if typecheck::is_read(ty) { "read" } else { "unique" };
        out.push_str(&format!(
            "cap({id}, σ={sigma}, mode={mode}, borrowed={})\n",
            typecheck::is_borrowed(ty)
        ));
    }
    if cfg.is_error() {
        out.push_str("Error\n");
    }
    out
}

fn collect_refs(act: &Activity, out: &mut Vec<(ArrayId, IndexMap, TypeExpr)>) {
    fn from_expr(e: &Expr, out: &mut Vec<(ArrayId, IndexMap, TypeExpr)>) {
        if let Expr::Value {
            value: Value::ArrayRef { array, sigma },
            ty,
            ..
        } = e
        {
            let ty = ty.clone().unwrap_or(TypeExpr::Bool);
            out.push((*array, sigma.clone(), ty));
        }
        match e {
            Expr::Let { bound, body, .. } => {
                from_expr(bound, out);
                from_expr(body, out);
            }
            Expr::Call { arg, .. } => from_expr(arg, out),
            Expr::Assign { value, .. } => from_expr(value, out),
            Expr::SplitLet { body, .. } => from_expr(body, out),
            Expr::FinishAsync {
                left, right, after, ..
            } => {
                from_expr(left, out);
                from_expr(right, out);
                from_expr(after, out);
            }
            Expr::Borrow { body, .. } => from_expr(body, out),
            Expr::BorrowFrame { inner, .. } => from_expr(inner, out),
            _ => {}
        }
    }
    match act {
        Activity::ErrorState => {}
        Activity::Leaf { stack, expr } => {
            for entry in stack.entries() {
                if let Value::ArrayRef { array, sigma } = &entry.value {
                    out.push((*array, sigma.clone(), entry.ty.clone()));
                }
            }
            from_expr(expr, out);
        }
        Activity::Fork {
            left,
            right,
            waiting_stack,
            waiting_expr,
        } => {
            collect_refs(left, out);
            collect_refs(right, out);
            for entry in waiting_stack.entries() {
                if let Value::ArrayRef { array, sigma } = &entry.value {
                    out.push((*array, sigma.clone(), entry.ty.clone()));
                }
            }
            from_expr(waiting_expr, out);
        }
    }
}
