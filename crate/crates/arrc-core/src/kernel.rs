//! Runtime store of physical arrays plus the capability API.
//!
//! A [`Capability`] is a handle granting access to a logical view of one
//! stored array: it carries an index translation function, an access mode
//! and a borrowed flag. The store validates every operation against its
//! own record of which capabilities are still alive, so consumption
//! (move-out on split/merge) and burying (during borrows) are enforced
//! dynamically even when the kernel is used as a plain library.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::sigma::{IndexMap, SigmaError};

/// Identity of a stored array (ι). Ids are never reused within a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArrayId(pub usize);

impl fmt::Display for ArrayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ι{}", self.0)
    }
}

/// Validity stamp of a capability. A consumed capability's stamp is
/// forgotten by the store and every later operation on it fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CapId(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScopeId(u64);

/// Access mode of a capability. The formal treatment covers `unique` and
/// `read`; locked and local modes exist in the wider design but no
/// operation here accepts them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Unique,
    Read,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Unique => write!(f, "unique"),
            Mode::Read => write!(f, "read"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("index {index} out of bounds for capability of length {len}")]
    OutOfBounds { index: usize, len: usize },
    #[error("capability has been consumed")]
    Consumed,
    #[error("capability is buried by an open borrow")]
    Buried,
    #[error("capability is read-only")]
    ReadOnly,
    #[error("cannot split {n} elements into {k} parts")]
    InvalidSplit { n: usize, k: usize },
    #[error("index map ranges overlap")]
    Overlap,
    #[error("index map range exceeds the capability's domain")]
    OutOfDomain,
    #[error("merged capabilities reference different arrays")]
    DifferentArrays,
    #[error("merged capabilities have different modes or borrow flags")]
    ModeMismatch,
    #[error("capability has live siblings")]
    HasSiblings,
    #[error("capability does not cover the whole array")]
    Partial,
    #[error("merge needs at least one capability")]
    EmptyMerge,
}

impl From<SigmaError> for KernelError {
    fn from(e: SigmaError) -> Self {
        match e {
            SigmaError::OutOfDomain { .. } => KernelError::OutOfDomain,
            SigmaError::InvalidSplit { n, k } => KernelError::InvalidSplit { n, k },
            SigmaError::Overlap { .. } => KernelError::Overlap,
            SigmaError::Parse(_) => KernelError::OutOfDomain,
        }
    }
}

/// An unforgeable handle on a logical view of one array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capability {
    id: CapId,
    array: ArrayId,
    sigma: IndexMap,
    mode: Mode,
    borrowed: bool,
}

impl Capability {
    pub fn array_id(&self) -> ArrayId {
        self.array
    }

    pub fn sigma(&self) -> &IndexMap {
        &self.sigma
    }

    /// Logical length of the view.
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_borrowed(&self) -> bool {
        self.borrowed
    }
}

/// Token for an open borrow. Ending it revokes every capability issued
/// inside the scope and reinstates the buried original.
#[derive(Debug)]
pub struct BorrowScope {
    scope: ScopeId,
    original: CapId,
}

#[derive(Debug, Clone)]
struct CapMeta {
    array: ArrayId,
    sigma: IndexMap,
    mode: Mode,
    borrowed: bool,
    buried: bool,
    scope: Option<ScopeId>,
}

#[derive(Debug)]
struct ArrayRecord<T> {
    payload: Vec<T>,
    live: usize,
    buried: usize,
}

/// The array store: physical payloads plus capability bookkeeping.
#[derive(Debug)]
pub struct ArrayStore<T> {
    arrays: Vec<ArrayRecord<T>>,
    caps: HashMap<CapId, CapMeta>,
    next_cap: u64,
    scopes: Vec<ScopeId>,
    next_scope: u64,
    debug_checks: bool,
}

impl<T> Default for ArrayStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> ArrayStore<T> {
    pub fn new() -> Self {
        ArrayStore {
            arrays: Vec::new(),
            caps: HashMap::new(),
            next_cap: 0,
            scopes: Vec::new(),
            next_scope: 0,
            debug_checks: false,
        }
    }

    /// With debug checks on, every mutating operation re-verifies the
    /// store-wide disjointness invariant and panics if it is broken.
    pub fn with_debug_checks() -> Self {
        let mut s = Self::new();
        s.debug_checks = true;
        s
    }

    pub fn set_debug_checks(&mut self, on: bool) {
        self.debug_checks = on;
    }

    /// Allocates raw storage without issuing a capability. The calculus
    /// evaluator manages access on its own and only needs slots.
    pub fn alloc_raw(&mut self, payload: Vec<T>) -> ArrayId {
        let id = ArrayId(self.arrays.len());
        self.arrays.push(ArrayRecord {
            payload,
            live: 0,
            buried: 0,
        });
        id
    }

    pub fn array_len(&self, id: ArrayId) -> usize {
        self.arrays[id.0].payload.len()
    }

    pub fn payload(&self, id: ArrayId) -> &[T] {
        &self.arrays[id.0].payload
    }

    pub fn read_slot(&self, id: ArrayId, phys: usize) -> &T {
        &self.arrays[id.0].payload[phys]
    }

    pub fn write_slot(&mut self, id: ArrayId, phys: usize, v: T) {
        self.arrays[id.0].payload[phys] = v;
    }

    pub fn array_ids(&self) -> impl Iterator<Item = ArrayId> {
        (0..self.arrays.len()).map(ArrayId)
    }

    /// Number of valid, non-buried capabilities on `id`.
    pub fn live_caps(&self, id: ArrayId) -> usize {
        self.arrays[id.0].live
    }

    fn issue(
        &mut self,
        array: ArrayId,
        sigma: IndexMap,
        mode: Mode,
        borrowed: bool,
        scope: Option<ScopeId>,
    ) -> Capability {
        let id = CapId(self.next_cap);
        self.next_cap += 1;
        self.caps.insert(
            id,
            CapMeta {
                array,
                sigma: sigma.clone(),
                mode,
                borrowed,
                buried: false,
                scope,
            },
        );
        self.arrays[array.0].live += 1;
        Capability {
            id,
            array,
            sigma,
            mode,
            borrowed,
        }
    }

    fn validate(&self, cap: &Capability) -> Result<&CapMeta, KernelError> {
        let meta = self.caps.get(&cap.id).ok_or(KernelError::Consumed)?;
        if meta.buried {
            return Err(KernelError::Buried);
        }
        Ok(meta)
    }

    fn consume(&mut self, id: CapId) {
        if let Some(meta) = self.caps.remove(&id) {
            let rec = &mut self.arrays[meta.array.0];
            if meta.buried {
                rec.buried -= 1;
            } else {
                rec.live -= 1;
            }
        }
    }

    /// Explicitly discards a capability that is no longer needed.
    pub fn release(&mut self, cap: Capability) {
        self.consume(cap.id);
    }

    fn after_mutation(&self) {
        if self.debug_checks {
            if let Err((a, b)) = self.check_disjointness() {
                panic!("kernel disjointness violated: {a:?} vs {b:?}");
            }
        }
    }

    /// Verifies that any two live capabilities reference different arrays,
    /// disjoint ranges, or are both read-only.
    pub fn check_disjointness(&self) -> Result<(), (CapId, CapId)> {
        let mut by_array: HashMap<ArrayId, Vec<(&CapId, &CapMeta)>> = HashMap::new();
        for (id, meta) in &self.caps {
            if !meta.buried {
                by_array.entry(meta.array).or_default().push((id, meta));
            }
        }
        for caps in by_array.values() {
            for (i, (ida, a)) in caps.iter().enumerate() {
                for (idb, b) in &caps[i + 1..] {
                    let both_read = a.mode == Mode::Read && b.mode == Mode::Read;
                    if !both_read && !IndexMap::disjoint(&a.sigma, &b.sigma) {
                        return Err((**ida, **idb));
                    }
                }
            }
        }
        Ok(())
    }
}

impl<T: Clone> ArrayStore<T> {
    /// Creates a fresh array of `len` copies of `init` and returns a
    /// unique capability with the identity translation function.
    pub fn new_array(&mut self, len: usize, init: T) -> Capability {
        let id = self.alloc_raw(vec![init; len]);
        let cap = self.issue(id, IndexMap::identity(len), Mode::Unique, false, None);
        self.after_mutation();
        cap
    }

    pub fn get(&self, cap: &Capability, i: usize) -> Result<T, KernelError> {
        let meta = self.validate(cap)?;
        let phys = meta.sigma.apply(i).ok_or(KernelError::OutOfBounds {
            index: i,
            len: meta.sigma.len(),
        })?;
        Ok(self.arrays[meta.array.0].payload[phys].clone())
    }

    pub fn set(&mut self, cap: &Capability, i: usize, v: T) -> Result<(), KernelError> {
        let meta = self.validate(cap)?;
        if meta.mode == Mode::Read {
            return Err(KernelError::ReadOnly);
        }
        let phys = meta.sigma.apply(i).ok_or(KernelError::OutOfBounds {
            index: i,
            len: meta.sigma.len(),
        })?;
        let array = meta.array;
        self.arrays[array.0].payload[phys] = v;
        Ok(())
    }

    /// Consumes `cap` and returns `k` sibling capabilities over disjoint
    /// parts of its range. Mode and borrow flag are inherited.
    pub fn split(
        &mut self,
        cap: Capability,
        k: usize,
        strided: bool,
    ) -> Result<Vec<Capability>, KernelError> {
        let meta = self.validate(&cap)?.clone();
        let parts = if strided {
            IndexMap::split_strided(meta.sigma.len(), k)?
        } else {
            IndexMap::split_consecutive(meta.sigma.len(), k)?
        };
        self.split_into(cap, meta, parts)
    }

    /// Splits along caller-provided translation functions, which may
    /// forget indexes of the source view.
    pub fn split_with(
        &mut self,
        cap: Capability,
        parts: &[IndexMap],
    ) -> Result<Vec<Capability>, KernelError> {
        let meta = self.validate(&cap)?.clone();
        for (i, a) in parts.iter().enumerate() {
            if a.max_target_excl() > meta.sigma.len() {
                return Err(KernelError::OutOfDomain);
            }
            for b in &parts[i + 1..] {
                if !IndexMap::disjoint(a, b) {
                    return Err(KernelError::Overlap);
                }
            }
        }
        self.split_into(cap, meta, parts.to_vec())
    }

    fn split_into(
        &mut self,
        cap: Capability,
        meta: CapMeta,
        parts: Vec<IndexMap>,
    ) -> Result<Vec<Capability>, KernelError> {
        let composed: Vec<IndexMap> = parts
            .iter()
            .map(|p| IndexMap::compose(&meta.sigma, p))
            .collect::<Result<_, _>>()?;
        self.consume(cap.id);
        let siblings = composed
            .into_iter()
            .map(|s| self.issue(meta.array, s, meta.mode, meta.borrowed, meta.scope))
            .collect();
        self.after_mutation();
        Ok(siblings)
    }

    /// Consumes the given sibling capabilities and returns one capability
    /// whose translation function is their concatenation (or pairwise
    /// interleaving).
    pub fn merge(
        &mut self,
        caps: Vec<Capability>,
        concat: bool,
    ) -> Result<Capability, KernelError> {
        let first = caps.first().ok_or(KernelError::EmptyMerge)?;
        let head = self.validate(first)?.clone();
        let mut scope = head.scope;
        for cap in &caps {
            let meta = self.validate(cap)?;
            if meta.array != head.array {
                return Err(KernelError::DifferentArrays);
            }
            if meta.mode != head.mode || meta.borrowed != head.borrowed {
                return Err(KernelError::ModeMismatch);
            }
            // innermost scope wins, so the merged capability dies with it
            match (scope, meta.scope) {
                (Some(a), Some(b)) if b.0 > a.0 => scope = Some(b),
                (None, s @ Some(_)) => scope = s,
                _ => {}
            }
        }
        let mut sigma = self.caps[&caps[0].id].sigma.clone();
        for cap in &caps[1..] {
            let other = &self.caps[&cap.id].sigma;
            sigma = if concat {
                IndexMap::concat(&sigma, other)?
            } else {
                IndexMap::interleave(&sigma, other)?
            };
        }
        for cap in &caps {
            self.consume(cap.id);
        }
        let merged = self.issue(head.array, sigma, head.mode, head.borrowed, scope);
        self.after_mutation();
        Ok(merged)
    }

    /// Permutes the physical payload to match the capability's logical
    /// order and returns a capability with the identity translation
    /// function. Requires the capability to be the only one on its array
    /// (buried originals block alignment too) and to cover the whole
    /// array.
    pub fn align(&mut self, cap: Capability) -> Result<Capability, KernelError> {
        let meta = self.validate(&cap)?.clone();
        let rec = &self.arrays[meta.array.0];
        if rec.live != 1 || rec.buried != 0 {
            return Err(KernelError::HasSiblings);
        }
        if !meta.sigma.covers_range(rec.payload.len()) {
            return Err(KernelError::Partial);
        }
        permute_in_place(&mut self.arrays[meta.array.0].payload, &meta.sigma);
        self.consume(cap.id);
        let aligned = self.issue(
            meta.array,
            IndexMap::identity(meta.sigma.len()),
            meta.mode,
            meta.borrowed,
            meta.scope,
        );
        self.after_mutation();
        Ok(aligned)
    }

    /// Buries `cap` and returns an alias tied to a new borrow scope. With
    /// `as_read` the alias is weakened to read-only.
    pub fn borrow(
        &mut self,
        cap: &Capability,
        as_read: bool,
    ) -> Result<(BorrowScope, Capability), KernelError> {
        let meta = self.validate(cap)?.clone();
        let entry = self.caps.get_mut(&cap.id).unwrap();
        entry.buried = true;
        let rec = &mut self.arrays[meta.array.0];
        rec.live -= 1;
        rec.buried += 1;

        let scope = ScopeId(self.next_scope);
        self.next_scope += 1;
        self.scopes.push(scope);
        let mode = if as_read { Mode::Read } else { meta.mode };
        let alias = self.issue(meta.array, meta.sigma, mode, true, Some(scope));
        self.after_mutation();
        Ok((
            BorrowScope {
                scope,
                original: cap.id,
            },
            alias,
        ))
    }

    /// Closes a borrow scope: revokes every capability issued inside it
    /// (including split/merge descendants and scopes nested within) and
    /// reinstates the buried original.
    pub fn end_borrow(&mut self, scope: BorrowScope) -> Capability {
        if self.scopes.contains(&scope.scope) {
            while let Some(top) = self.scopes.pop() {
                let doomed: Vec<CapId> = self
                    .caps
                    .iter()
                    .filter(|(_, m)| m.scope == Some(top))
                    .map(|(id, _)| *id)
                    .collect();
                for id in doomed {
                    self.consume(id);
                }
                if top == scope.scope {
                    break;
                }
            }
        }
        let handle = match self.caps.get_mut(&scope.original) {
            Some(meta) => {
                if meta.buried {
                    meta.buried = false;
                    let rec = &mut self.arrays[meta.array.0];
                    rec.buried -= 1;
                    rec.live += 1;
                }
                Capability {
                    id: scope.original,
                    array: meta.array,
                    sigma: meta.sigma.clone(),
                    mode: meta.mode,
                    borrowed: meta.borrowed,
                }
            }
            // the original itself belonged to an enclosing scope that has
            // already been unwound; hand back a dead handle
            None => Capability {
                id: scope.original,
                array: ArrayId(0),
                sigma: IndexMap::empty(),
                mode: Mode::Unique,
                borrowed: false,
            },
        };
        self.after_mutation();
        handle
    }
}

impl<T: fmt::Display> ArrayStore<T> {
    /// One line per array, then one line per live capability.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, rec) in self.arrays.iter().enumerate() {
            let values: Vec<String> = rec.payload.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{}: [{}] caps={}\n",
                ArrayId(i),
                values.join(", "),
                rec.live
            ));
        }
        let mut ids: Vec<&CapId> = self.caps.keys().collect();
        ids.sort();
        for id in ids {
            let meta = &self.caps[id];
            if meta.buried {
                continue;
            }
            out.push_str(&format!(
                "cap({}, σ={}, mode={}, borrowed={})\n",
                meta.array, meta.sigma, meta.mode, meta.borrowed
            ));
        }
        out
    }
}

/// Applies `payload'[i] = payload[sigma(i)]` in place by walking the
/// permutation's cycles.
fn permute_in_place<T: Clone>(payload: &mut [T], sigma: &IndexMap) {
    let n = payload.len();
    let mut visited = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut i = start;
        let first = payload[start].clone();
        loop {
            let j = sigma.apply(i).expect("sigma covers the array");
            if j == start {
                payload[i] = first;
                break;
            }
            payload[i] = payload[j].clone();
            visited[j] = true;
            i = j;
        }
    }
}

/// A store shareable between threads. Every operation takes the store
/// lock, so capability bookkeeping stays consistent no matter how tasks
/// interleave; capabilities with disjoint ranges still cannot observe
/// each other's element accesses.
#[derive(Debug)]
pub struct SharedStore<T>(Arc<Mutex<ArrayStore<T>>>);

impl<T> Clone for SharedStore<T> {
    fn clone(&self) -> Self {
        SharedStore(Arc::clone(&self.0))
    }
}

impl<T> Default for SharedStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> SharedStore<T> {
    pub fn new() -> Self {
        SharedStore(Arc::new(Mutex::new(ArrayStore::new())))
    }

    pub fn with_debug_checks() -> Self {
        SharedStore(Arc::new(Mutex::new(ArrayStore::with_debug_checks())))
    }

    pub fn with_store<R>(&self, f: impl FnOnce(&mut ArrayStore<T>) -> R) -> R {
        f(&mut self.0.lock().unwrap())
    }
}

impl<T: Clone> SharedStore<T> {
    pub fn new_array(&self, len: usize, init: T) -> Capability {
        self.0.lock().unwrap().new_array(len, init)
    }

    pub fn get(&self, cap: &Capability, i: usize) -> Result<T, KernelError> {
        self.0.lock().unwrap().get(cap, i)
    }

    pub fn set(&self, cap: &Capability, i: usize, v: T) -> Result<(), KernelError> {
        self.0.lock().unwrap().set(cap, i, v)
    }

    pub fn split(
        &self,
        cap: Capability,
        k: usize,
        strided: bool,
    ) -> Result<Vec<Capability>, KernelError> {
        self.0.lock().unwrap().split(cap, k, strided)
    }

    pub fn split_with(
        &self,
        cap: Capability,
        parts: &[IndexMap],
    ) -> Result<Vec<Capability>, KernelError> {
        self.0.lock().unwrap().split_with(cap, parts)
    }

    pub fn merge(&self, caps: Vec<Capability>, concat: bool) -> Result<Capability, KernelError> {
        self.0.lock().unwrap().merge(caps, concat)
    }

    pub fn align(&self, cap: Capability) -> Result<Capability, KernelError> {
        self.0.lock().unwrap().align(cap)
    }

    pub fn borrow(
        &self,
        cap: &Capability,
        as_read: bool,
    ) -> Result<(BorrowScope, Capability), KernelError> {
        self.0.lock().unwrap().borrow(cap, as_read)
    }

    pub fn end_borrow(&self, scope: BorrowScope) -> Capability {
        self.0.lock().unwrap().end_borrow(scope)
    }

    pub fn release(&self, cap: Capability) {
        self.0.lock().unwrap().release(cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(store: &mut ArrayStore<i64>, values: &[i64]) -> Capability {
        let cap = store.new_array(values.len(), 0);
        for (i, &v) in values.iter().enumerate() {
            store.set(&cap, i, v).unwrap();
        }
        cap
    }

    #[test]
    fn new_array_basics() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = store.new_array(3, 0);
        assert_eq!(cap.len(), 3);
        for i in 0..3 {
            assert_eq!(store.get(&cap, i).unwrap(), 0);
        }
        let empty = store.new_array(0, 7);
        assert_eq!(empty.len(), 0);
        assert_ne!(cap.array_id(), empty.array_id());
    }

    #[test]
    fn get_and_set_errors() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2]);
        assert!(matches!(
            store.get(&cap, 2),
            Err(KernelError::OutOfBounds { index: 2, len: 2 })
        ));
        let parts = store.split(cap.clone(), 2, false).unwrap();
        assert_eq!(store.get(&cap, 0), Err(KernelError::Consumed));
        assert_eq!(store.set(&cap, 0, 9), Err(KernelError::Consumed));
        drop(parts);
    }

    #[test]
    fn consecutive_split_translates_indices() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[10, 20, 30, 40, 50]);
        let parts = store.split(cap, 2, false).unwrap();
        assert_eq!(parts[0].len(), 3);
        assert_eq!(parts[1].len(), 2);
        // index i of the second part translates to i + 3
        assert_eq!(store.get(&parts[1], 0).unwrap(), 40);
        assert_eq!(store.get(&parts[1], 1).unwrap(), 50);
    }

    #[test]
    fn one_way_split_is_a_move() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3]);
        let sigma = cap.sigma().clone();
        let parts = store.split(cap.clone(), 1, true).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].sigma(), &sigma);
        assert_eq!(store.get(&cap, 0), Err(KernelError::Consumed));
    }

    #[test]
    fn strided_split_set_writes_the_right_slot() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[0, 0, 0, 0]);
        let parts = store.split(cap, 2, true).unwrap();
        store.set(&parts[1], 0, 9).unwrap();
        assert_eq!(store.payload(parts[1].array_id()), &[0, 9, 0, 0]);
    }

    #[test]
    fn split_with_forgets_indices() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3, 4, 5]);
        let parts = store
            .split_with(
                cap,
                &[
                    IndexMap::new(vec![0, 1]).unwrap(),
                    IndexMap::new(vec![4]).unwrap(),
                ],
            )
            .unwrap();
        assert_eq!(parts[0].len(), 2);
        assert_eq!(parts[1].len(), 1);
        assert_eq!(store.get(&parts[1], 0).unwrap(), 5);

        let whole = store.new_array(4, 0);
        let overlapping = [
            IndexMap::new(vec![0, 1]).unwrap(),
            IndexMap::new(vec![1, 2]).unwrap(),
        ];
        assert_eq!(
            store.split_with(whole, &overlapping),
            Err(KernelError::Overlap)
        );
    }

    #[test]
    fn split_with_identity_aliases_whole_view() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3]);
        let id = cap.array_id();
        let parts = store.split_with(cap.clone(), &[IndexMap::identity(3)]).unwrap();
        assert_eq!(parts[0].array_id(), id);
        assert!(parts[0].sigma().is_identity());
        assert_eq!(store.get(&cap, 0), Err(KernelError::Consumed));
    }

    #[test]
    fn merge_concat_and_interleave() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3, 4, 5]); // A..E as ints
        let parts = store.split(cap, 2, true).unwrap();
        let logical = |store: &ArrayStore<i64>, c: &Capability| -> Vec<i64> {
            (0..c.len()).map(|i| store.get(c, i).unwrap()).collect()
        };
        assert_eq!(logical(&store, &parts[0]), vec![1, 3, 5]);
        assert_eq!(logical(&store, &parts[1]), vec![2, 4]);

        let merged = store.merge(parts, true).unwrap();
        assert_eq!(logical(&store, &merged), vec![1, 3, 5, 2, 4]);

        // split again and restore the original order by interleaving
        let parts = store.split_with(
            merged,
            &[
                IndexMap::new(vec![0, 1, 2]).unwrap(),
                IndexMap::new(vec![3, 4]).unwrap(),
            ],
        )
        .unwrap();
        let merged = store.merge(parts, false).unwrap();
        assert_eq!(logical(&store, &merged), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn merge_rejects_different_arrays() {
        let mut store = ArrayStore::with_debug_checks();
        let a = store.new_array(2, 0);
        let b = store.new_array(2, 0);
        assert_eq!(store.merge(vec![a, b], true), Err(KernelError::DifferentArrays));
    }

    #[test]
    fn split_merge_roundtrip_exhaustive() {
        for n in 1..=12usize {
            for k in 1..=n {
                let mut store = ArrayStore::with_debug_checks();
                let cap = store.new_array(n, 0i64);
                let array = cap.array_id();
                let sigma = cap.sigma().clone();
                let parts = store.split(cap, k, false).unwrap();
                let merged = store.merge(parts, true).unwrap();
                assert_eq!(merged.array_id(), array);
                assert_eq!(merged.sigma(), &sigma, "consecutive n={n} k={k}");
            }
            if n >= 2 {
                let mut store = ArrayStore::with_debug_checks();
                let cap = store.new_array(n, 0i64);
                let sigma = cap.sigma().clone();
                let parts = store.split(cap, 2, true).unwrap();
                let merged = store.merge(parts, false).unwrap();
                assert_eq!(merged.sigma(), &sigma, "strided n={n}");
            }
        }
    }

    #[test]
    fn align_rewrites_physical_order() {
        let mut store = ArrayStore::with_debug_checks();
        // logical [A,C,E,B,D] over physical [A,B,C,D,E]
        let cap = filled(&mut store, &[1, 2, 3, 4, 5]);
        let parts = store.split(cap, 2, true).unwrap();
        let merged = store.merge(parts, true).unwrap();
        let before: Vec<i64> = (0..5).map(|i| store.get(&merged, i).unwrap()).collect();
        assert_eq!(before, vec![1, 3, 5, 2, 4]);

        let aligned = store.align(merged).unwrap();
        assert!(aligned.sigma().is_identity());
        assert_eq!(store.payload(aligned.array_id()), &[1, 3, 5, 2, 4]);
        let after: Vec<i64> = (0..5).map(|i| store.get(&aligned, i).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn align_with_identity_changes_nothing() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3]);
        let aligned = store.align(cap).unwrap();
        assert_eq!(store.payload(aligned.array_id()), &[1, 2, 3]);
    }

    #[test]
    fn align_preconditions() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = store.new_array(4, 0);
        let parts = store.split(cap, 2, false).unwrap();
        let [left, _right] = <[Capability; 2]>::try_from(parts).unwrap();
        assert!(matches!(store.align(left), Err(KernelError::HasSiblings)));

        // sole capability but a partial range
        let mut store = ArrayStore::with_debug_checks();
        let cap = store.new_array(4, 0);
        let parts = store
            .split_with(cap, &[IndexMap::new(vec![0, 1]).unwrap()])
            .unwrap();
        let [part] = <[Capability; 1]>::try_from(parts).unwrap();
        assert!(matches!(store.align(part), Err(KernelError::Partial)));

        // a buried original also blocks alignment
        let mut store = ArrayStore::with_debug_checks();
        let cap = store.new_array(4, 0);
        let (scope, alias) = store.borrow(&cap, false).unwrap();
        assert!(matches!(store.align(alias), Err(KernelError::HasSiblings)));
        store.end_borrow(scope);
    }

    #[test]
    fn align_preserves_logical_contents_for_random_coverages() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=12usize {
            for _ in 0..8 {
                let mut store = ArrayStore::with_debug_checks();
                let values: Vec<i64> = (0..n as i64).map(|v| v * 10).collect();
                let cap = filled(&mut store, &values);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let parts: Vec<IndexMap> = perm
                    .iter()
                    .map(|&t| IndexMap::new(vec![t]).unwrap())
                    .collect();
                let singles = store.split_with(cap, &parts).unwrap();
                let merged = store.merge(singles, true).unwrap();
                let before: Vec<i64> = (0..n).map(|i| store.get(&merged, i).unwrap()).collect();
                // oracle: the aligned physical payload is the logical view
                let aligned = store.align(merged).unwrap();
                assert_eq!(store.payload(aligned.array_id()), &before[..]);
                let after: Vec<i64> = (0..n).map(|i| store.get(&aligned, i).unwrap()).collect();
                assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn borrow_buries_the_original() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2]);
        let (scope, alias) = store.borrow(&cap, false).unwrap();
        assert_eq!(store.get(&cap, 0), Err(KernelError::Buried));
        assert_eq!(store.get(&alias, 0), Ok(1));
        store.set(&alias, 0, 9).unwrap();
        let restored = store.end_borrow(scope);
        assert_eq!(store.get(&restored, 0), Ok(9));
        assert_eq!(store.get(&alias, 0), Err(KernelError::Consumed));
    }

    #[test]
    fn read_borrow_weakens_and_restores_write_access() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2]);
        let (scope, alias) = store.borrow(&cap, true).unwrap();
        assert_eq!(alias.mode(), Mode::Read);
        assert!(alias.is_borrowed());
        assert_eq!(store.set(&alias, 0, 9), Err(KernelError::ReadOnly));
        let restored = store.end_borrow(scope);
        assert_eq!(restored.mode(), Mode::Unique);
        store.set(&restored, 0, 9).unwrap();
    }

    #[test]
    fn end_borrow_revokes_descendants() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3, 4]);
        let (scope, alias) = store.borrow(&cap, false).unwrap();
        let parts = store.split(alias, 4, false).unwrap();
        assert!(parts.iter().all(|p| p.is_borrowed()));
        let restored = store.end_borrow(scope);
        assert_eq!(restored.len(), 4);
        assert!(restored.sigma().is_identity());
        for p in &parts {
            assert_eq!(store.get(p, 0), Err(KernelError::Consumed));
        }
    }

    #[test]
    fn nested_borrows_unwind_innermost_first() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2]);
        let (outer, alias1) = store.borrow(&cap, false).unwrap();
        let (inner, alias2) = store.borrow(&alias1, true).unwrap();
        assert_eq!(store.get(&alias1, 0), Err(KernelError::Buried));
        let alias1 = store.end_borrow(inner);
        assert_eq!(store.get(&alias2, 0), Err(KernelError::Consumed));
        assert_eq!(store.get(&alias1, 0), Ok(1));
        let cap = store.end_borrow(outer);
        assert_eq!(store.get(&alias1, 0), Err(KernelError::Consumed));
        assert_eq!(store.get(&cap, 0), Ok(1));
    }

    #[test]
    fn ending_outer_scope_first_revokes_inner_too() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2]);
        let (outer, alias1) = store.borrow(&cap, false).unwrap();
        let (_inner, alias2) = store.borrow(&alias1, false).unwrap();
        let cap = store.end_borrow(outer);
        assert_eq!(store.get(&alias1, 0), Err(KernelError::Consumed));
        assert_eq!(store.get(&alias2, 0), Err(KernelError::Consumed));
        assert_eq!(store.get(&cap, 0), Ok(1));
    }

    #[test]
    fn dump_format() {
        let mut store = ArrayStore::new();
        let cap = filled(&mut store, &[1, 2, 3]);
        let parts = store.split(cap, 2, false).unwrap();
        let dump = store.dump();
        assert_eq!(
            dump,
            "ι0: [1, 2, 3] caps=2\n\
             cap(ι0, σ={0->0, 1->1}, mode=unique, borrowed=false)\n\
             cap(ι0, σ={0->2}, mode=unique, borrowed=false)\n"
        );
        drop(parts);
    }

    #[test]
    fn disjointness_check_passes_across_operations() {
        let mut store = ArrayStore::with_debug_checks();
        let cap = filled(&mut store, &[1, 2, 3, 4, 5, 6]);
        let parts = store.split(cap, 3, true).unwrap();
        let merged = store.merge(parts, true).unwrap();
        let (scope, alias) = store.borrow(&merged, true).unwrap();
        let halves = store.split(alias, 2, false).unwrap();
        assert!(store.check_disjointness().is_ok());
        drop(halves);
        store.end_borrow(scope);
        assert!(store.check_disjointness().is_ok());
    }
}
