//! Hash table mapping exact probability values to dense group ids.

use crate::num::Probability;

/// Default number of buckets.
pub const DEFAULT_TABLE_SIZE: usize = 10_000;

const NIL: u32 = u32::MAX;

/// Bucket function used by [`ProbTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashScheme {
    /// `⌊10^(4+k)·v⌋`: the first four significant decimal digits.
    Digits,
    /// `⌊|Act|·10^k·v⌋`, for a table with `|Act|` buckets.
    ActionScaled,
}

/// Number of zeros between the decimal point and the first nonzero digit of
/// `v ∈ (0, 1)`; zero for `v >= 0.1`.
fn leading_decimal_zeros(v: f64) -> i32 {
    let mut k = (-v.log10()).floor().max(0.0) as i32;
    // log10 can be off by one ulp around powers of ten.
    while k > 0 && v * 10f64.powi(k) >= 1.0 {
        k -= 1;
    }
    while v * 10f64.powi(k + 1) < 1.0 {
        k += 1;
    }
    k
}

/// Values below this map to bucket 0.
const TINY: f64 = 1e-300;

/// Pre-modulo hash of a probability: `⌊10^(4+k)·v⌋`, with `h(0) = 0`.
///
/// For `v ∈ (0, 1)` the result keeps the first four significant digits and
/// lies in `[1000, 10000]`.
pub fn hash_probability(v: f64) -> u64 {
    if v < TINY {
        return 0;
    }
    let k = if v >= 1.0 { 0 } else { leading_decimal_zeros(v) };
    (10f64.powi(4 + k) * v).floor() as u64
}

/// Pre-modulo hash for the `|Act|`-sized table: `⌊|Act|·10^k·v⌋`.
pub fn hash_probability_scaled(v: f64, num_actions: usize) -> u64 {
    if v < TINY {
        return 0;
    }
    let k = if v >= 1.0 { 0 } else { leading_decimal_zeros(v) };
    (num_actions as f64 * 10f64.powi(k) * v).floor() as u64
}

#[derive(Debug, Clone, Copy)]
struct Node {
    key: u64,
    group: u32,
    next: u32,
}

/// Chained hash table of exact probability values.
///
/// Each call to [`ProbTable::begin_epoch`] logically empties the table in
/// O(1): bucket heads carry the epoch they were written in, and the node
/// arena is truncated.
#[derive(Debug, Clone)]
pub struct ProbTable<P> {
    scheme: HashScheme,
    heads: Vec<u32>,
    head_epoch: Vec<u32>,
    nodes: Vec<Node>,
    values: Vec<P>,
    epoch: u32,
    collisions: u64,
}

impl<P: Probability> ProbTable<P> {
    pub fn new(size: usize) -> Self {
        Self::with_scheme(HashScheme::Digits, size)
    }

    /// Table with `size` buckets. For [`HashScheme::ActionScaled`], `size`
    /// should be the model's action count.
    pub fn with_scheme(scheme: HashScheme, size: usize) -> Self {
        let size = size.max(1);
        Self {
            scheme,
            heads: vec![NIL; size],
            head_epoch: vec![0; size],
            nodes: Vec::new(),
            values: Vec::new(),
            epoch: 1,
            collisions: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.heads.len()
    }

    pub fn scheme(&self) -> HashScheme {
        self.scheme
    }

    /// Chain comparisons against a different value, over the table's lifetime.
    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Starts a new epoch; all previously inserted values are forgotten.
    pub fn begin_epoch(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.head_epoch.iter_mut().for_each(|e| *e = 0);
            self.epoch = 1;
        }
    }

    pub fn bucket(&self, v: P) -> usize {
        let x = v.to_f64().unwrap_or(0.0);
        let pre = match self.scheme {
            HashScheme::Digits => hash_probability(x),
            HashScheme::ActionScaled => hash_probability_scaled(x, self.heads.len()),
        };
        (pre % self.heads.len() as u64) as usize
    }

    /// Dense group id of `v` within the current epoch, inserting it if new.
    pub fn group_of(&mut self, v: P) -> u32 {
        let b = self.bucket(v);
        let key = v.exact_key();
        if self.head_epoch[b] != self.epoch {
            self.head_epoch[b] = self.epoch;
            self.heads[b] = NIL;
        }
        let mut cur = self.heads[b];
        while cur != NIL {
            let node = self.nodes[cur as usize];
            if node.key == key {
                return node.group;
            }
            self.collisions += 1;
            cur = node.next;
        }
        let group = self.values.len() as u32;
        self.values.push(v);
        self.nodes.push(Node {
            key,
            group,
            next: self.heads[b],
        });
        self.heads[b] = (self.nodes.len() - 1) as u32;
        group
    }

    /// Number of distinct values in the current epoch.
    pub fn num_groups(&self) -> usize {
        self.values.len()
    }

    /// Value owning `group` in the current epoch.
    pub fn value(&self, group: u32) -> P {
        self.values[group as usize]
    }
}
