//! Parallel array algorithms written against the capability kernel:
//! divide-and-conquer sorting, 5-point stencil application, phased
//! parallel reduction and matrix rotation. Each algorithm moves owned
//! capabilities into its tasks and relies on borrowing to reassemble the
//! original capability when the recursion is done.
//!
//! Tasks run on a [`TaskPool`]: a simulated pool executes join groups
//! sequentially in a seeded order (so tests can vary the interleaving),
//! the threaded pool runs them on real OS threads. Results must not
//! depend on the choice.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::{Capability, KernelError, SharedStore};
use crate::sigma::IndexMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("payload length {len} does not match {rows}x{cols}")]
    DimensionMismatch { len: usize, rows: usize, cols: usize },
    #[error("reduction needs a power-of-two length, got {0}")]
    NotPowerOfTwo(usize),
}

type Task<'env> = Box<dyn FnOnce() + Send + 'env>;

/// Fork-join execution of task groups. A join group completes only when
/// all member tasks have completed.
pub enum TaskPool {
    /// Runs each join group to completion on the calling thread, in a
    /// seed-shuffled order.
    Sequential(Mutex<ChaCha8Rng>),
    /// Real scoped threads.
    Threads,
}

impl TaskPool {
    pub fn sequential(seed: u64) -> Self {
        TaskPool::Sequential(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn threads() -> Self {
        TaskPool::Threads
    }

    pub fn join_all(&self, tasks: Vec<Task<'_>>) {
        match self {
            TaskPool::Sequential(rng) => {
                let mut order: Vec<usize> = (0..tasks.len()).collect();
                order.shuffle(&mut *rng.lock().unwrap());
                let mut slots: Vec<Option<Task<'_>>> = tasks.into_iter().map(Some).collect();
                for i in order {
                    (slots[i].take().unwrap())();
                }
            }
            TaskPool::Threads => {
                std::thread::scope(|scope| {
                    for task in tasks {
                        scope.spawn(task);
                    }
                });
            }
        }
    }

    pub fn join2<'env>(
        &self,
        a: impl FnOnce() + Send + 'env,
        b: impl FnOnce() + Send + 'env,
    ) {
        self.join_all(vec![Box::new(a), Box::new(b)]);
    }
}

fn seq(lo: usize, hi: usize) -> IndexMap {
    IndexMap::from_targets_unchecked((lo..hi).collect())
}

// ---------------------------------------------------------------------
// Quicksort
// ---------------------------------------------------------------------

/// Sorts the capability's logical contents ascending. The capability is
/// intact afterwards: the recursion splits a borrowed alias and the
/// borrow scope reinstates it.
pub fn quicksort(store: &SharedStore<i64>, pool: &TaskPool, cap: &Capability) -> Result<(), AlgoError> {
    let (scope, alias) = store.borrow(cap, false)?;
    qs_rec(store, pool, alias);
    store.end_borrow(scope);
    Ok(())
}

fn qs_rec(store: &SharedStore<i64>, pool: &TaskPool, cap: Capability) {
    let n = cap.len();
    if n <= 1 {
        store.release(cap);
        return;
    }
    // Lomuto partition, pivot at the first index
    let pivot = store.get(&cap, 0).unwrap();
    let mut boundary = 1;
    for j in 1..n {
        let v = store.get(&cap, j).unwrap();
        if v < pivot {
            let w = store.get(&cap, boundary).unwrap();
            store.set(&cap, boundary, v).unwrap();
            store.set(&cap, j, w).unwrap();
            boundary += 1;
        }
    }
    let piv_pos = boundary - 1;
    let low = store.get(&cap, piv_pos).unwrap();
    store.set(&cap, piv_pos, pivot).unwrap();
    store.set(&cap, 0, low).unwrap();

    // split around the pivot, forgetting its slot entirely
    let parts = store
        .split_with(cap, &[seq(0, piv_pos), seq(piv_pos + 1, n)])
        .unwrap();
    let mut parts = parts.into_iter();
    let (left, right) = (parts.next().unwrap(), parts.next().unwrap());
    pool.join2(
        move || qs_rec(store, pool, left),
        move || qs_rec(store, pool, right),
    );
}

// ---------------------------------------------------------------------
// Mergesort
// ---------------------------------------------------------------------

/// Sorts ascending by consecutive 2-split recursion; each level merges
/// the two sorted halves through the parent capability once the borrow
/// of the halves ends.
pub fn mergesort(store: &SharedStore<i64>, pool: &TaskPool, cap: &Capability) -> Result<(), AlgoError> {
    let (scope, alias) = store.borrow(cap, false)?;
    ms_rec(store, pool, alias);
    store.end_borrow(scope);
    Ok(())
}

fn ms_rec(store: &SharedStore<i64>, pool: &TaskPool, cap: Capability) {
    let n = cap.len();
    if n <= 1 {
        store.release(cap);
        return;
    }
    let (scope, alias) = store.borrow(&cap, false).unwrap();
    let halves = store.split(alias, 2, false).unwrap();
    let mut halves = halves.into_iter();
    let (left, right) = (halves.next().unwrap(), halves.next().unwrap());
    pool.join2(
        move || ms_rec(store, pool, left),
        move || ms_rec(store, pool, right),
    );
    let whole = store.end_borrow(scope);

    // merge the sorted halves through the reassembled view
    let mid = n - n / 2;
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid || j < n {
        let take_left = j >= n
            || (i < mid && store.get(&whole, i).unwrap() <= store.get(&whole, j).unwrap());
        if take_left {
            merged.push(store.get(&whole, i).unwrap());
            i += 1;
        } else {
            merged.push(store.get(&whole, j).unwrap());
            j += 1;
        }
    }
    for (k, v) in merged.into_iter().enumerate() {
        store.set(&whole, k, v).unwrap();
    }
    store.release(cap);
}

// ---------------------------------------------------------------------
// 5-point stencil
// ---------------------------------------------------------------------

/// One stencil phase: `to[x][y]` becomes the sum of the plus-shaped
/// 5-point neighbourhood of `from` at `(x, y)` with toroidal wraparound.
/// `from` is borrowed read-only (shareable across tasks), `to` writable;
/// the recursion splits `to` into row blocks of (rows+1)/2 and rows/2.
pub fn stencil_step(
    store: &SharedStore<i64>,
    pool: &TaskPool,
    from: &Capability,
    to: &Capability,
    rows: usize,
    cols: usize,
) -> Result<(), AlgoError> {
    for cap in [from, to] {
        if cap.len() != rows * cols {
            return Err(AlgoError::DimensionMismatch {
                len: cap.len(),
                rows,
                cols,
            });
        }
    }
    let (from_scope, from_alias) = store.borrow(from, true)?;
    let (to_scope, to_alias) = store.borrow(to, false)?;
    stencil_rec(store, pool, &from_alias, to_alias, rows, cols, 0, rows);
    store.end_borrow(to_scope);
    store.end_borrow(from_scope);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stencil_rec(
    store: &SharedStore<i64>,
    pool: &TaskPool,
    from: &Capability,
    to: Capability,
    rows: usize,
    cols: usize,
    row: usize,
    total_rows: usize,
) {
    if rows > 1 {
        let upper = (rows + 1) / 2;
        let parts = store
            .split_with(to, &[seq(0, upper * cols), seq(upper * cols, rows * cols)])
            .unwrap();
        let mut parts = parts.into_iter();
        let (top, bottom) = (parts.next().unwrap(), parts.next().unwrap());
        pool.join2(
            move || stencil_rec(store, pool, from, top, upper, cols, row, total_rows),
            move || {
                stencil_rec(
                    store,
                    pool,
                    from,
                    bottom,
                    rows - upper,
                    cols,
                    row + upper,
                    total_rows,
                )
            },
        );
    } else {
        for y in 0..cols {
            let v = read_stencil(store, from, row, y, total_rows, cols);
            store.set(&to, y, v).unwrap();
        }
        store.release(to);
    }
}

/// Reads the plus-shaped neighbourhood, wrapping around for out-of-bounds
/// indexes.
fn read_stencil(
    store: &SharedStore<i64>,
    from: &Capability,
    x: usize,
    y: usize,
    rows: usize,
    cols: usize,
) -> i64 {
    let at = |r: usize, c: usize| store.get(from, r * cols + c).unwrap();
    at(x, y)
        + at((x + rows - 1) % rows, y)
        + at((x + 1) % rows, y)
        + at(x, (y + cols - 1) % cols)
        + at(x, (y + 1) % cols)
}

// ---------------------------------------------------------------------
// Parallel reduction
// ---------------------------------------------------------------------

/// Phased parallel reduction of a power-of-two-length array: phase `p`
/// borrows the array, splits it into n/2^(p+1) parts and spawns one task
/// per part; each task focuses on the first of 2^p sub-parts (split with
/// the opposite stride flag), sums it, and stores the sum at its first
/// element. The total lands at logical index 0 and the array is intact
/// afterwards.
pub fn parallel_reduce(
    store: &SharedStore<i64>,
    pool: &TaskPool,
    cap: &Capability,
    strided: bool,
) -> Result<i64, AlgoError> {
    let n = cap.len();
    if !n.is_power_of_two() {
        return Err(AlgoError::NotPowerOfTwo(n));
    }
    let phases = n.trailing_zeros() as usize;
    for p in 0..phases {
        let splits = n >> (p + 1);
        let focus_parts = 1 << p;
        let (scope, alias) = store.borrow(cap, false)?;
        let parts = store.split(alias, splits, strided)?;
        let tasks: Vec<Task<'_>> = parts
            .into_iter()
            .map(|part| {
                let task: Task<'_> =
                    Box::new(move || reduce_task(store, part, focus_parts, !strided));
                task
            })
            .collect();
        pool.join_all(tasks);
        store.end_borrow(scope);
    }
    Ok(store.get(cap, 0)?)
}

fn reduce_task(store: &SharedStore<i64>, part: Capability, splits: usize, strided: bool) {
    let mut parts = store.split(part, splits, strided).unwrap().into_iter();
    let focus = parts.next().unwrap();
    for rest in parts {
        store.release(rest);
    }
    let sum: i64 = (0..focus.len()).map(|i| store.get(&focus, i).unwrap()).sum();
    store.set(&focus, 0, sum).unwrap();
    store.release(focus);
}

// ---------------------------------------------------------------------
// Matrix rotation
// ---------------------------------------------------------------------

/// Rotates a row-major rows x cols matrix to column-major order by a
/// cols-way strided split followed by a concatenating merge. With
/// `physical` the underlying storage is permuted to match and the
/// returned capability's translation function is the identity; this
/// requires the capability to be the only one on its array.
pub fn rotate_matrix(
    store: &SharedStore<i64>,
    cap: Capability,
    rows: usize,
    cols: usize,
    physical: bool,
) -> Result<Capability, AlgoError> {
    if cap.len() != rows * cols {
        return Err(AlgoError::DimensionMismatch {
            len: cap.len(),
            rows,
            cols,
        });
    }
    let columns = store.split(cap, cols, true)?;
    let merged = store.merge(columns, true)?;
    if physical {
        Ok(store.align(merged)?)
    } else {
        Ok(merged)
    }
}
