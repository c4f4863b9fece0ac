//! Order-statistic index over particle positions.
//!
//! Entries are ordered by `(position, id)`; the id breaks exact float ties so
//! that every entry has a well-defined place in the order. Queries are phrased
//! from the top: `kth_largest(1)` is the rightmost entry. Backed by an
//! arena-allocated treap with subtree sizes, so every query and update is
//! `O(log n)` expected.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::seed::splitmix64;

const NIL: u32 = u32::MAX;

/// One indexed entry: a position and the id that breaks ties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub id: u64,
    pub position: f64,
}

impl Entry {
    /// Total order used throughout: position first, then id.
    #[inline]
    pub fn cmp_key(&self, other: &Entry) -> Ordering {
        self.position
            .total_cmp(&other.position)
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone)]
struct Node {
    entry: Entry,
    priority: u64,
    left: u32,
    right: u32,
    size: u32,
}

#[derive(Debug, Clone)]
pub struct RankIndex {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    positions: HashMap<u64, f64>,
    prio_state: u64,
}

impl Default for RankIndex {
    fn default() -> Self {
        Self::new()
    }
}

impl RankIndex {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            free: Vec::new(),
            root: NIL,
            positions: HashMap::new(),
            prio_state: 0x1234_5678_9ABC_DEF0,
        }
    }

    /// Builds an index from arbitrary entries in `O(n log n)`.
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let mut index = Self::new();
        index.rebuild(entries)?;
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.positions.contains_key(&id)
    }

    pub fn position_of(&self, id: u64) -> Option<f64> {
        self.positions.get(&id).copied()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.free.clear();
        self.positions.clear();
        self.root = NIL;
    }

    /// Replaces the contents with `entries`, building the treap bottom-up
    /// from the sorted keys.
    pub fn rebuild(&mut self, entries: &[Entry]) -> Result<()> {
        self.clear();
        let mut sorted = entries.to_vec();
        for e in &sorted {
            check_position(e.position)?;
            if self.positions.insert(e.id, e.position).is_some() {
                self.positions.clear();
                return Err(Error::InvalidInput(format!("duplicate entry id {}", e.id)));
            }
        }
        sorted.sort_unstable_by(|a, b| a.cmp_key(b));

        // Cartesian-tree construction over the sorted keys.
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        for e in sorted {
            let idx = self.alloc(e);
            let mut last = NIL;
            while let Some(&top) = stack.last() {
                if self.nodes[top as usize].priority < self.nodes[idx as usize].priority {
                    last = stack.pop().unwrap();
                    self.pull(last);
                } else {
                    break;
                }
            }
            self.nodes[idx as usize].left = last;
            if let Some(&top) = stack.last() {
                self.nodes[top as usize].right = idx;
            }
            stack.push(idx);
        }
        while let Some(top) = stack.pop() {
            self.pull(top);
        }
        self.root = if self.nodes.is_empty() { NIL } else { self.find_root() };
        Ok(())
    }

    fn find_root(&self) -> u32 {
        // The root is the node with maximal priority.
        let mut best = 0u32;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.priority > self.nodes[best as usize].priority {
                best = i as u32;
            }
        }
        best
    }

    pub fn insert(&mut self, id: u64, position: f64) -> Result<()> {
        check_position(position)?;
        if self.positions.contains_key(&id) {
            return Err(Error::InvalidInput(format!("duplicate entry id {id}")));
        }
        self.positions.insert(id, position);
        let entry = Entry { id, position };
        let node = self.alloc(entry);
        let (l, r) = self.split(self.root, &entry);
        let lm = self.merge(l, node);
        self.root = self.merge(lm, r);
        Ok(())
    }

    /// Removes an entry, returning its position.
    pub fn remove(&mut self, id: u64) -> Result<f64> {
        let position = self
            .positions
            .remove(&id)
            .ok_or_else(|| Error::NotFound(format!("entry id {id}")))?;
        let key = Entry { id, position };
        self.root = self.erase(self.root, &key);
        Ok(position)
    }

    /// Moves an entry; equivalent to `remove` followed by `insert`.
    pub fn update_position(&mut self, id: u64, new_position: f64) -> Result<()> {
        check_position(new_position)?;
        let old = self
            .position_of(id)
            .ok_or_else(|| Error::NotFound(format!("entry id {id}")))?;
        if old.to_bits() == new_position.to_bits() {
            return Ok(());
        }
        self.remove(id)?;
        self.insert(id, new_position)
    }

    /// Position of the `k`-th largest entry, `1 ≤ k ≤ len`.
    pub fn kth_largest(&self, k: usize) -> Result<f64> {
        self.kth_entry(k).map(|e| e.position)
    }

    pub fn kth_entry(&self, k: usize) -> Result<Entry> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::OutOfRange(format!("k = {k} with {n} entries")));
        }
        // k-th largest is the (n - k)-th smallest, zero based.
        let mut target = (n - k) as u32;
        let mut cur = self.root;
        loop {
            let node = &self.nodes[cur as usize];
            let left_size = self.size(node.left);
            match target.cmp(&left_size) {
                Ordering::Less => cur = node.left,
                Ordering::Equal => return Ok(node.entry),
                Ordering::Greater => {
                    target -= left_size + 1;
                    cur = node.right;
                }
            }
        }
    }

    /// Smallest entry under the total order.
    pub fn min_entry(&self) -> Option<Entry> {
        if self.root == NIL {
            return None;
        }
        let mut cur = self.root;
        while self.nodes[cur as usize].left != NIL {
            cur = self.nodes[cur as usize].left;
        }
        Some(self.nodes[cur as usize].entry)
    }

    /// Rank with inclusive ties: the number of entries whose position is
    /// `>=` the position of `id` (the entry itself included).
    pub fn rank_of(&self, id: u64) -> Result<usize> {
        let position = self
            .position_of(id)
            .ok_or_else(|| Error::NotFound(format!("entry id {id}")))?;
        Ok(self.count_at_least(position))
    }

    /// Rank under the `(position, id)` total order; distinct for every entry.
    pub fn order_rank_of(&self, id: u64) -> Result<usize> {
        let position = self
            .position_of(id)
            .ok_or_else(|| Error::NotFound(format!("entry id {id}")))?;
        let key = Entry { id, position };
        let mut greater = 0usize;
        let mut cur = self.root;
        while cur != NIL {
            let node = &self.nodes[cur as usize];
            match node.entry.cmp_key(&key) {
                Ordering::Greater => {
                    greater += 1 + self.size(node.right) as usize;
                    cur = node.left;
                }
                Ordering::Less => cur = node.right,
                Ordering::Equal => {
                    greater += self.size(node.right) as usize;
                    break;
                }
            }
        }
        Ok(greater + 1)
    }

    /// Number of entries with position `>= x`.
    pub fn count_at_least(&self, x: f64) -> usize {
        let mut count = 0usize;
        let mut cur = self.root;
        while cur != NIL {
            let node = &self.nodes[cur as usize];
            if node.entry.position >= x {
                count += 1 + self.size(node.right) as usize;
                cur = node.left;
            } else {
                cur = node.right;
            }
        }
        count
    }

    /// Entries in descending order.
    pub fn entries_descending(&self) -> Vec<Entry> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = Vec::new();
        let mut cur = self.root;
        while cur != NIL || !stack.is_empty() {
            while cur != NIL {
                stack.push(cur);
                cur = self.nodes[cur as usize].right;
            }
            let top = stack.pop().unwrap();
            out.push(self.nodes[top as usize].entry);
            cur = self.nodes[top as usize].left;
        }
        out
    }

    #[inline]
    fn size(&self, idx: u32) -> u32 {
        if idx == NIL {
            0
        } else {
            self.nodes[idx as usize].size
        }
    }

    #[inline]
    fn pull(&mut self, idx: u32) {
        let (l, r) = {
            let n = &self.nodes[idx as usize];
            (n.left, n.right)
        };
        self.nodes[idx as usize].size = 1 + self.size(l) + self.size(r);
    }

    fn alloc(&mut self, entry: Entry) -> u32 {
        let priority = splitmix64(&mut self.prio_state);
        let node = Node {
            entry,
            priority,
            left: NIL,
            right: NIL,
            size: 1,
        };
        if let Some(idx) = self.free.pop() {
            self.nodes[idx as usize] = node;
            idx
        } else {
            self.nodes.push(node);
            (self.nodes.len() - 1) as u32
        }
    }

    /// Splits into (keys < key, keys >= key).
    fn split(&mut self, t: u32, key: &Entry) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        if self.nodes[t as usize].entry.cmp_key(key) == Ordering::Less {
            let (l, r) = self.split(self.nodes[t as usize].right, key);
            self.nodes[t as usize].right = l;
            self.pull(t);
            (t, r)
        } else {
            let (l, r) = self.split(self.nodes[t as usize].left, key);
            self.nodes[t as usize].left = r;
            self.pull(t);
            (l, t)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].priority > self.nodes[b as usize].priority {
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            self.pull(a);
            a
        } else {
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            self.pull(b);
            b
        }
    }

    fn erase(&mut self, t: u32, key: &Entry) -> u32 {
        debug_assert!(t != NIL, "erase of a key that is not in the tree");
        match self.nodes[t as usize].entry.cmp_key(key) {
            Ordering::Equal => {
                let (l, r) = (self.nodes[t as usize].left, self.nodes[t as usize].right);
                self.free.push(t);
                self.merge(l, r)
            }
            Ordering::Greater => {
                let l = self.erase(self.nodes[t as usize].left, key);
                self.nodes[t as usize].left = l;
                self.pull(t);
                t
            }
            Ordering::Less => {
                let r = self.erase(self.nodes[t as usize].right, key);
                self.nodes[t as usize].right = r;
                self.pull(t);
                t
            }
        }
    }
}

fn check_position(x: f64) -> Result<()> {
    if x.is_nan() {
        Err(Error::InvalidInput("NaN position".into()))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sort-based oracle: every query answered from a freshly sorted vector.
    struct SortOracle {
        entries: Vec<Entry>,
    }

    impl SortOracle {
        fn sorted_desc(&self) -> Vec<Entry> {
            let mut v = self.entries.clone();
            v.sort_by(|a, b| b.cmp_key(a));
            v
        }
        fn kth_largest(&self, k: usize) -> f64 {
            self.sorted_desc()[k - 1].position
        }
        fn rank_of(&self, id: u64) -> usize {
            let x = self.entries.iter().find(|e| e.id == id).unwrap().position;
            self.entries.iter().filter(|e| e.position >= x).count()
        }
        fn set(&mut self, id: u64, x: f64) {
            self.entries.iter_mut().find(|e| e.id == id).unwrap().position = x;
        }
    }

    fn build(xs: &[f64]) -> RankIndex {
        let mut idx = RankIndex::new();
        for (i, &x) in xs.iter().enumerate() {
            idx.insert(i as u64, x).unwrap();
        }
        idx
    }

    #[test]
    fn kth_largest_small_examples() {
        let idx = build(&[3.0, 1.0, 2.0]);
        assert_eq!(idx.kth_largest(2).unwrap(), 2.0);
        assert_eq!(idx.kth_largest(1).unwrap(), 3.0);
        assert_eq!(idx.kth_largest(3).unwrap(), 1.0);
        let single = build(&[-4.5]);
        assert_eq!(single.kth_largest(1).unwrap(), -4.5);
    }

    #[test]
    fn ties_resolved_by_larger_id() {
        let mut idx = RankIndex::new();
        idx.insert(10, 2.0).unwrap();
        idx.insert(20, 2.0).unwrap();
        assert_eq!(idx.kth_entry(1).unwrap().id, 20);
        assert_eq!(idx.kth_entry(2).unwrap().id, 10);
        // inclusive rank counts both
        assert_eq!(idx.rank_of(10).unwrap(), 2);
        assert_eq!(idx.rank_of(20).unwrap(), 2);
        assert_eq!(idx.order_rank_of(20).unwrap(), 1);
        assert_eq!(idx.order_rank_of(10).unwrap(), 2);
    }

    #[test]
    fn rank_of_examples() {
        let idx = build(&[3.0, 1.0, 2.0]);
        assert_eq!(idx.rank_of(2).unwrap(), 2);
        assert_eq!(idx.rank_of(1).unwrap(), 3);
        assert_eq!(build(&[0.0]).rank_of(0).unwrap(), 1);
    }

    #[test]
    fn range_and_missing_errors() {
        let mut idx = build(&[1.0, 2.0]);
        assert!(matches!(idx.kth_largest(0), Err(Error::OutOfRange(_))));
        assert!(matches!(idx.kth_largest(3), Err(Error::OutOfRange(_))));
        assert!(matches!(idx.rank_of(99), Err(Error::NotFound(_))));
        assert!(matches!(idx.update_position(99, 0.0), Err(Error::NotFound(_))));
        assert!(matches!(idx.remove(99), Err(Error::NotFound(_))));
        assert!(matches!(idx.insert(0, 5.0), Err(Error::InvalidInput(_))));
        assert!(matches!(idx.insert(7, f64::NAN), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn moving_max_below_min() {
        let mut idx = build(&[5.0, 4.0, 3.0, 1.0]);
        idx.update_position(0, 0.0).unwrap();
        assert_eq!(idx.kth_largest(1).unwrap(), 4.0);
        assert_eq!(idx.kth_largest(4).unwrap(), 0.0);
        assert_eq!(idx.rank_of(0).unwrap(), 4);
    }

    #[test]
    fn noop_move_keeps_queries() {
        let mut idx = build(&[5.0, 4.0, 3.0]);
        let before = idx.entries_descending();
        idx.update_position(1, 4.0).unwrap();
        assert_eq!(idx.entries_descending(), before);
    }

    #[test]
    fn rebuild_matches_incremental() {
        let xs = [0.3, -1.0, 7.5, 7.5, 2.0, 0.0];
        let entries: Vec<Entry> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| Entry { id: i as u64, position: x })
            .collect();
        let a = RankIndex::from_entries(&entries).unwrap();
        let b = build(&xs);
        assert_eq!(a.entries_descending(), b.entries_descending());
        assert_eq!(a.min_entry().unwrap().position, -1.0);
        assert!(RankIndex::from_entries(&[entries[0], entries[0]]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn agrees_with_sort_oracle(
            init in prop::collection::vec(-50.0f64..50.0, 1..200),
            moves in prop::collection::vec((0usize..1000, -60.0f64..60.0, any::<bool>()), 0..1000),
        ) {
            let mut idx = build(&init);
            let mut oracle = SortOracle {
                entries: init.iter().enumerate()
                    .map(|(i, &x)| Entry { id: i as u64, position: x }).collect(),
            };
            let n = init.len();
            for (m, (which, x, snap)) in moves.into_iter().enumerate() {
                let id = (which % n) as u64;
                // Snapping onto a grid produces frequent exact ties.
                let x = if snap { x.round() } else { x };
                idx.update_position(id, x).unwrap();
                oracle.set(id, x);
                if m % 37 == 0 {
                    let sorted = oracle.sorted_desc();
                    prop_assert_eq!(idx.entries_descending(), sorted);
                }
                let k = 1 + (m * 7919) % n;
                prop_assert_eq!(idx.kth_largest(k).unwrap(), oracle.kth_largest(k));
                prop_assert_eq!(idx.rank_of(id).unwrap(), oracle.rank_of(id));
            }
            for k in 1..=n {
                let e = idx.kth_entry(k).unwrap();
                prop_assert_eq!(idx.order_rank_of(e.id).unwrap(), k);
            }
        }

        #[test]
        fn translation_preserves_ranks(raw in prop::collection::vec(-80i32..80, 1..50), shift in -100i32..100) {
            // Eighths and integer shifts keep the arithmetic exact.
            let xs: Vec<f64> = raw.iter().map(|&r| r as f64 / 8.0).collect();
            let a = build(&xs);
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift as f64).collect();
            let b = build(&shifted);
            for i in 0..xs.len() as u64 {
                prop_assert_eq!(a.order_rank_of(i).unwrap(), b.order_rank_of(i).unwrap());
                prop_assert_eq!(a.rank_of(i).unwrap(), b.rank_of(i).unwrap());
            }
        }
    }
}
