//! Machine-checking of the calculus's metatheory: capability extraction,
//! the array-disjointness invariant, progress and preservation probes, a
//! well-typed program generator, and exhaustive schedule exploration for
//! the data-race-freedom corollary.

pub mod generate;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::eval::{
    enabled_choices, initial_config, step, wf_config, Activity, Config, Heap, Stack,
};
use crate::kernel::ArrayId;
use crate::lang::ast::{Expr, TypeExpr, Value};
use crate::lang::Program;
use crate::sigma::IndexMap;
use crate::typecheck::is_read;

pub use generate::{generate, GenError, GenMode};

/// One occurrence of an array capability in a configuration: location,
/// translation function and ascribed type. Collected as a multiset;
/// duplicates are significant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CapOccurrence {
    pub array: ArrayId,
    pub sigma: IndexMap,
    pub ty: TypeExpr,
}

impl fmt::Display for CapOccurrence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.array, self.sigma, self.ty)
    }
}

pub type CapMultiset = BTreeMap<CapOccurrence, usize>;

fn insert(ms: &mut CapMultiset, occ: CapOccurrence) {
    *ms.entry(occ).or_insert(0) += 1;
}

fn union(mut a: CapMultiset, b: CapMultiset) -> CapMultiset {
    for (occ, n) in b {
        *a.entry(occ).or_insert(0) += n;
    }
    a
}

fn subtract(mut a: CapMultiset, b: &CapMultiset) -> CapMultiset {
    for (occ, n) in b {
        if let Some(count) = a.get_mut(occ) {
            *count = count.saturating_sub(*n);
            if *count == 0 {
                a.remove(occ);
            }
        }
    }
    a
}

/// `a ⊆ b` as multisets.
pub fn multiset_subset(a: &CapMultiset, b: &CapMultiset) -> bool {
    a.iter().all(|(occ, n)| b.get(occ).copied().unwrap_or(0) >= *n)
}

/// Extracts the multiset of all accessible array capabilities in a
/// configuration: non-buried stack bindings, references inside
/// expressions, and array elements reachable through each reference. At
/// a fork, occurrences the running children already hold are subtracted
/// from the waiting thread's contribution (benign aliasing).
pub fn caps(cfg: &Config) -> CapMultiset {
    caps_activity(&cfg.heap, &cfg.activity)
}

fn caps_activity(heap: &Heap, act: &Activity) -> CapMultiset {
    match act {
        Activity::ErrorState => CapMultiset::new(),
        Activity::Leaf { stack, expr } => {
            union(caps_stack(heap, stack), caps_expr(heap, expr))
        }
        Activity::Fork {
            left,
            right,
            waiting_stack,
            waiting_expr,
        } => {
            let children = union(caps_activity(heap, left), caps_activity(heap, right));
            let waiting = union(
                caps_stack(heap, waiting_stack),
                caps_expr(heap, waiting_expr),
            );
            let remainder = subtract(waiting, &children);
            union(children, remainder)
        }
    }
}

fn caps_stack(heap: &Heap, stack: &Stack) -> CapMultiset {
    let mut out = CapMultiset::new();
    let mut buried: BTreeSet<&str> = BTreeSet::new();
    for entry in stack.entries().iter().rev() {
        if entry.marked {
            buried.insert(&entry.name);
            continue;
        }
        if buried.contains(entry.name.as_str()) {
            continue;
        }
        if let Value::ArrayRef { array, sigma } = &entry.value {
            caps_value(heap, *array, sigma, &entry.ty, &mut out);
        }
    }
    out
}

fn caps_expr(heap: &Heap, e: &Expr) -> CapMultiset {
    let mut out = CapMultiset::new();
    collect_expr(heap, e, &mut out);
    out
}

fn collect_expr(heap: &Heap, e: &Expr, out: &mut CapMultiset) {
    if let Expr::Value {
        value: Value::ArrayRef { array, sigma },
        ty,
        ..
    } = e
    {
        // evaluator-produced values always carry their ascription
        if let Some(ty) = ty {
            caps_value(heap, *array, sigma, ty, out);
        }
    }
    match e {
        Expr::Let { bound, body, .. } => {
            collect_expr(heap, bound, out);
            collect_expr(heap, body, out);
        }
        Expr::Call { arg, .. } => collect_expr(heap, arg, out),
        Expr::Assign { value, .. } => collect_expr(heap, value, out),
        Expr::SplitLet { body, .. } => collect_expr(heap, body, out),
        Expr::FinishAsync {
            left, right, after, ..
        } => {
            collect_expr(heap, left, out);
            collect_expr(heap, right, out);
            collect_expr(heap, after, out);
        }
        Expr::Borrow { body, .. } => collect_expr(heap, body, out),
        Expr::BorrowFrame { inner, .. } => collect_expr(heap, inner, out),
        _ => {}
    }
}

/// Records one capability occurrence, then recurses into the array
/// elements reachable through its translation function, ascribing them
/// the view's element type.
fn caps_value(heap: &Heap, array: ArrayId, sigma: &IndexMap, ty: &TypeExpr, out: &mut CapMultiset) {
    insert(
        out,
        CapOccurrence {
            array,
            sigma: sigma.clone(),
            ty: ty.clone(),
        },
    );
    let TypeExpr::Array { element, .. } = ty else {
        return;
    };
    if !element.is_array() {
        return;
    }
    let Some(record) = heap.get(array) else {
        return;
    };
    for i in 0..sigma.len() {
        let Some(phys) = sigma.apply(i) else { continue };
        let Some(Value::ArrayRef {
            array: inner,
            sigma: inner_sigma,
        }) = record.values.get(phys)
        else {
            continue;
        };
        caps_value(heap, *inner, inner_sigma, element, out);
    }
}

/// Evaluates the disjointness formula over all unordered pairs of
/// distinct multiset occurrences: any two capabilities must reference
/// different arrays, disjoint ranges, or both be read-only.
pub fn array_disjointness(cfg: &Config) -> Result<(), (CapOccurrence, CapOccurrence)> {
    let ms = caps(cfg);
    let occurrences: Vec<(&CapOccurrence, usize)> = ms.iter().map(|(o, n)| (o, *n)).collect();
    for (i, (a, count_a)) in occurrences.iter().enumerate() {
        // a doubly-occurring mutable capability overlaps itself
        if *count_a > 1 && !disjoint_pair(a, a) {
            return Err(((*a).clone(), (*a).clone()));
        }
        for (b, _) in &occurrences[i + 1..] {
            if !disjoint_pair(a, b) {
                return Err(((*a).clone(), (*b).clone()));
            }
        }
    }
    Ok(())
}

fn disjoint_pair(a: &CapOccurrence, b: &CapOccurrence) -> bool {
    a.array != b.array
        || IndexMap::disjoint(&a.sigma, &b.sigma)
        || (is_read(&a.ty) && is_read(&b.ty))
}

// ---------------------------------------------------------------------
// Theorem probes
// ---------------------------------------------------------------------

/// Progress: a well-formed configuration is terminal or can step.
pub fn check_progress(program: &Program, cfg: &Config) -> bool {
    cfg.is_terminal() || !enabled_choices(program, cfg).is_empty()
}

/// Preservation: the successor is well-formed and the heap-type map only
/// grew.
pub fn check_preservation(program: &Program, before: &Config, after: &Config) -> bool {
    if !wf_config(program, after).ok {
        return false;
    }
    let (d0, d1) = (before.heap.delta(), after.heap.delta());
    d0.iter().all(|(id, ty)| d1.get(id) == Some(ty))
}

/// Rules that only move values between stack, heap and expression; for
/// these, caps must not grow.
pub const MOVE_RULES: &[&str] = &[
    "DYN-LET",
    "DYN-CALL",
    "DYN-VAR-LOOKUP-DEST",
    "DYN-ARRAY-ASSIGN",
    "DYN-FINISH",
];

// ---------------------------------------------------------------------
// The stepwise gauntlet
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunVerdict {
    Value,
    Error,
    BudgetExceeded,
    Stuck,
}

impl fmt::Display for RunVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunVerdict::Value => write!(f, "value"),
            RunVerdict::Error => write!(f, "error"),
            RunVerdict::BudgetExceeded => write!(f, "budget"),
            RunVerdict::Stuck => write!(f, "stuck"),
        }
    }
}

/// Result of running one program with every invariant checked at every
/// step.
#[derive(Debug, Clone)]
pub struct GauntletReport {
    pub steps: usize,
    pub verdict: RunVerdict,
    /// `(probe, step index, details)` of the first violation, if any.
    pub violation: Option<(String, usize, String)>,
}

impl GauntletReport {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Runs a checked program under a seeded scheduler, asserting
/// well-formedness, progress and array disjointness at every
/// configuration, preservation and Δ-monotonicity across every step, and
/// the caps subset property for value-moving rules.
pub fn gauntlet(program: &Program, seed: u64, max_steps: usize) -> GauntletReport {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut cfg = initial_config(program).expect("checked program");
    let mut violation: Option<(String, usize, String)> = None;
    let mut steps = 0;

    let mut record = |v: &mut Option<(String, usize, String)>, probe: &str, at: usize, why: String| {
        if v.is_none() {
            *v = Some((probe.to_string(), at, why));
        }
    };

    let verdict = loop {
        let report = wf_config(program, &cfg);
        if !report.ok {
            record(
                &mut violation,
                "wf_config",
                steps,
                report.failure.unwrap_or_default(),
            );
        }
        if !check_progress(program, &cfg) {
            record(&mut violation, "progress", steps, "stuck non-terminal".into());
        }
        if let Err((a, b)) = array_disjointness(&cfg) {
            record(
                &mut violation,
                "array_disjointness",
                steps,
                format!("{a} overlaps {b}"),
            );
        }

        if cfg.is_terminal() {
            break if cfg.is_error() {
                RunVerdict::Error
            } else {
                RunVerdict::Value
            };
        }
        if steps >= max_steps {
            break RunVerdict::BudgetExceeded;
        }
        let choices = enabled_choices(program, &cfg);
        let Some(choice) = choices.choose(&mut rng) else {
            break RunVerdict::Stuck;
        };
        let Ok((next, rule)) = step(program, &cfg, choice) else {
            break RunVerdict::Stuck;
        };
        steps += 1;

        if !check_preservation(program, &cfg, &next) {
            let why = wf_config(program, &next)
                .failure
                .unwrap_or_else(|| "heap-type map shrank".into());
            record(&mut violation, "preservation", steps, why);
        }
        if MOVE_RULES.contains(&rule) && !multiset_subset(&caps(&next), &caps(&cfg)) {
            record(
                &mut violation,
                "caps_subset",
                steps,
                format!("caps grew across {rule}"),
            );
        }
        cfg = next;
    };

    GauntletReport {
        steps,
        verdict,
        violation,
    }
}

// ---------------------------------------------------------------------
// Exhaustive schedule exploration
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExploreReport {
    /// Canonical renderings of all distinct terminal configurations.
    pub outcomes: BTreeSet<String>,
    pub states_visited: usize,
    /// True when a bound cut the search short.
    pub bound_exceeded: bool,
}

/// Enumerates every schedule up to the bounds, deduplicating
/// configurations, and canonicalizes each terminal state by renaming
/// array ids in first-reached order so allocation order is neutralized.
pub fn explore(
    program: &Program,
    max_steps: usize,
    max_states: usize,
) -> ExploreReport {
    let initial = initial_config(program).expect("checked program");
    let mut outcomes = BTreeSet::new();
    let mut seen: HashSet<Config> = HashSet::new();
    let mut queue: VecDeque<(Config, usize)> = VecDeque::new();
    let mut bound_exceeded = false;

    seen.insert(initial.clone());
    queue.push_back((initial, 0));

    while let Some((cfg, depth)) = queue.pop_front() {
        if cfg.is_terminal() {
            outcomes.insert(canonicalize(&cfg));
            continue;
        }
        if depth >= max_steps {
            bound_exceeded = true;
            continue;
        }
        for choice in enabled_choices(program, &cfg) {
            let (next, _) = step(program, &cfg, &choice).expect("enabled choice steps");
            if seen.len() >= max_states {
                bound_exceeded = true;
                break;
            }
            if seen.insert(next.clone()) {
                queue.push_back((next, depth + 1));
            }
        }
    }

    ExploreReport {
        outcomes,
        states_visited: seen.len(),
        bound_exceeded,
    }
}

/// Renders a terminal configuration with array ids renamed in
/// first-reached order: root stack left-to-right, then the final value,
/// then transitively the heap contents of each reached array.
/// Unreachable arrays are dropped.
pub fn canonicalize(cfg: &Config) -> String {
    let Activity::Leaf { stack, expr } = &cfg.activity else {
        return "Error".to_string();
    };

    let mut order: Vec<ArrayId> = Vec::new();
    let mut index: BTreeMap<ArrayId, usize> = BTreeMap::new();
    let mut queue: VecDeque<ArrayId> = VecDeque::new();

    let mut reach = |id: ArrayId,
                     order: &mut Vec<ArrayId>,
                     index: &mut BTreeMap<ArrayId, usize>,
                     queue: &mut VecDeque<ArrayId>| {
        if !index.contains_key(&id) {
            index.insert(id, order.len());
            order.push(id);
            queue.push_back(id);
        }
    };

    for entry in stack.entries() {
        if let Value::ArrayRef { array, .. } = &entry.value {
            reach(*array, &mut order, &mut index, &mut queue);
        }
    }
    if let Expr::Value {
        value: Value::ArrayRef { array, .. },
        ..
    } = expr
    {
        reach(*array, &mut order, &mut index, &mut queue);
    }
    while let Some(id) = queue.pop_front() {
        if let Some(record) = cfg.heap.get(id) {
            for v in &record.values {
                if let Value::ArrayRef { array, .. } = v {
                    reach(*array, &mut order, &mut index, &mut queue);
                }
            }
        }
    }

    let rename = |v: &Value| -> String {
        match v {
            Value::ArrayRef { array, sigma } => {
                format!("ι{}{}", index[array], sigma)
            }
            other => other.to_string(),
        }
    };

    let mut out = String::new();
    for entry in stack.entries() {
        let marker = if entry.marked { "• " } else { "" };
        out.push_str(&format!("{marker}{} = {}\n", entry.name, rename(&entry.value)));
    }
    if let Expr::Value { value, .. } = expr {
        out.push_str(&format!("value = {}\n", rename(value)));
    }
    for id in &order {
        let record = cfg.heap.get(*id).expect("reached arrays exist");
        let rendered: Vec<String> = record.values.iter().map(&rename).collect();
        out.push_str(&format!("ι{}: [{}]\n", index[id], rendered.join(", ")));
    }
    out
}
