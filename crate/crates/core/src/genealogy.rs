//! Ulam–Harris genealogy and ancestral-lineage queries.
//!
//! Every particle ever created is a node. Initial particles are roots labelled
//! `1..=N0`; a branching node `i` closes its alive interval and opens two
//! children `i.1` and `i.2`. Alive intervals are half-open, `[birth, branch)`,
//! so at the branch instant the children are alive and the parent is not.
//!
//! Position snapshots are stored per recorded time; lineage queries read the
//! ancestor's position from the snapshot nearest to the requested time.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{histogram, Histogram, HistogramSpec};
use crate::error::{Error, Result};

pub type NodeId = u32;

/// Ulam–Harris address: root index followed by branch digits in `{1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    root: u32,
    digits: Vec<u8>,
}

impl Label {
    pub fn root(index: u32) -> Self {
        Self {
            root: index,
            digits: Vec::new(),
        }
    }

    pub fn root_index(&self) -> u32 {
        self.root
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn generation(&self) -> usize {
        self.digits.len()
    }

    pub fn child(&self, digit: u8) -> Self {
        debug_assert!(digit == 1 || digit == 2);
        let mut digits = self.digits.clone();
        digits.push(digit);
        Self {
            root: self.root,
            digits,
        }
    }

    pub fn parent(&self) -> Option<Self> {
        if self.digits.is_empty() {
            return None;
        }
        let mut digits = self.digits.clone();
        digits.pop();
        Some(Self {
            root: self.root,
            digits,
        })
    }

    /// All prefixes from the root up to and including `self`.
    pub fn prefixes(&self) -> Vec<Label> {
        (0..=self.digits.len())
            .map(|n| Label {
                root: self.root,
                digits: self.digits[..n].to_vec(),
            })
            .collect()
    }

    pub fn is_prefix_of(&self, other: &Label) -> bool {
        self.root == other.root
            && self.digits.len() <= other.digits.len()
            && other.digits[..self.digits.len()] == self.digits[..]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        for d in &self.digits {
            write!(f, ".{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('.');
        let bad = || Error::InvalidInput(format!("malformed label {s:?}"));
        let root: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if root == 0 {
            return Err(bad());
        }
        let mut digits = Vec::new();
        for p in parts {
            match p {
                "1" => digits.push(1),
                "2" => digits.push(2),
                _ => return Err(bad()),
            }
        }
        Ok(Self { root, digits })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub parent: Option<NodeId>,
    pub children: Option<[NodeId; 2]>,
    pub birth_time: f64,
    pub branch_time: Option<f64>,
    root: u32,
    digit: u8,
}

impl NodeRecord {
    pub fn alive_at(&self, tau: f64) -> bool {
        self.birth_time <= tau && self.branch_time.is_none_or(|b| tau < b)
    }
}

/// Population state recorded at one time point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub n: usize,
    /// Position of the K-th largest particle, when `n >= K`.
    pub xi: Option<f64>,
    /// `(node, position)` sorted by node id; `None` when positions were not
    /// recorded at this time.
    pub entries: Option<Vec<(NodeId, f64)>>,
}

impl Snapshot {
    pub fn position_of(&self, node: NodeId) -> Option<f64> {
        let entries = self.entries.as_ref()?;
        entries
            .binary_search_by_key(&node, |&(id, _)| id)
            .ok()
            .map(|i| entries[i].1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineageSample {
    pub target: Label,
    pub t: f64,
    pub s_grid: Vec<f64>,
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    /// Ancestor label used for each lookback.
    pub ancestors: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncestralDistribution {
    pub t: f64,
    pub s: f64,
    pub selection_size: usize,
    pub distinct_ancestors: usize,
    /// Centered ancestor position for every selected particle.
    pub y_hat: Vec<f64>,
    /// Centered position of every selected particle at `t`.
    pub z_now: Vec<f64>,
}

impl AncestralDistribution {
    pub fn histogram(&self, bin_width: f64, lo: f64, hi: f64) -> Result<Histogram> {
        histogram(
            &self.y_hat,
            &HistogramSpec {
                bin_width,
                lo,
                hi,
                center: 0.0,
            },
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenealogyStore {
    nodes: Vec<NodeRecord>,
    snapshots: Vec<Snapshot>,
    now: f64,
}

impl GenealogyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(id as usize)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn set_now(&mut self, t: f64) {
        debug_assert!(t >= self.now);
        self.now = t;
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Adds the next root; roots are labelled `1, 2, ...` in insertion order.
    pub fn add_root(&mut self, birth_time: f64) -> Result<NodeId> {
        if let Some(last) = self.nodes.last() {
            if last.parent.is_some() {
                return Err(Error::InvalidInput(
                    "roots must be added before any branching".into(),
                ));
            }
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(NodeRecord {
            parent: None,
            children: None,
            birth_time,
            branch_time: None,
            root: id + 1,
            digit: 0,
        });
        Ok(id)
    }

    /// Retires `parent` at `time` and opens its two children.
    pub fn branch(&mut self, parent: NodeId, time: f64) -> Result<[NodeId; 2]> {
        let rec = self
            .nodes
            .get(parent as usize)
            .ok_or_else(|| Error::NotFound(format!("node {parent}")))?;
        if rec.branch_time.is_some() {
            return Err(Error::InvalidInput(format!("node {parent} already branched")));
        }
        if time < rec.birth_time {
            return Err(Error::InvalidInput(format!(
                "branch time {time} precedes birth {}",
                rec.birth_time
            )));
        }
        let root = rec.root;
        let first = self.nodes.len() as NodeId;
        let children = [first, first + 1];
        for digit in [1u8, 2] {
            self.nodes.push(NodeRecord {
                parent: Some(parent),
                children: None,
                birth_time: time,
                branch_time: None,
                root,
                digit,
            });
        }
        let rec = &mut self.nodes[parent as usize];
        rec.branch_time = Some(time);
        rec.children = Some(children);
        Ok(children)
    }

    pub fn label(&self, id: NodeId) -> Label {
        let mut digits = Vec::new();
        let mut cur = id;
        loop {
            let rec = &self.nodes[cur as usize];
            match rec.parent {
                Some(p) => {
                    digits.push(rec.digit);
                    cur = p;
                }
                None => {
                    digits.reverse();
                    return Label {
                        root: rec.root,
                        digits,
                    };
                }
            }
        }
    }

    pub fn node_of(&self, label: &Label) -> Result<NodeId> {
        let missing = || Error::NotFound(format!("label {label}"));
        if label.root == 0 || label.root as usize > self.nodes.len() {
            return Err(missing());
        }
        let mut cur = label.root - 1;
        if self.nodes[cur as usize].parent.is_some() {
            return Err(missing());
        }
        for &d in &label.digits {
            let children = self.nodes[cur as usize].children.ok_or_else(missing)?;
            cur = children[(d - 1) as usize];
        }
        Ok(cur)
    }

    pub fn record_snapshot(&mut self, snapshot: Snapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.time < last.time {
                return Err(Error::InvalidInput(format!(
                    "snapshot at {} recorded after {}",
                    snapshot.time, last.time
                )));
            }
        }
        if snapshot.time > self.now {
            self.now = snapshot.time;
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    /// The unique ancestor (prefix) of `node` alive at `tau`.
    pub fn ancestor_node_at(&self, node: NodeId, tau: f64) -> Result<NodeId> {
        let rec = self
            .nodes
            .get(node as usize)
            .ok_or_else(|| Error::NotFound(format!("node {node}")))?;
        if tau > self.now {
            return Err(Error::OutOfRange(format!(
                "tau = {tau} is after the current time {}",
                self.now
            )));
        }
        if let Some(b) = rec.branch_time {
            if tau >= b {
                return Err(Error::OutOfRange(format!(
                    "node {node} branched at {b}, before tau = {tau}"
                )));
            }
        }
        let mut cur = node;
        loop {
            let r = &self.nodes[cur as usize];
            if r.birth_time <= tau {
                return Ok(cur);
            }
            match r.parent {
                Some(p) => cur = p,
                None => {
                    return Err(Error::OutOfRange(format!(
                        "tau = {tau} precedes root birth {}",
                        r.birth_time
                    )))
                }
            }
        }
    }

    pub fn ancestor_at(&self, label: &Label, tau: f64) -> Result<Label> {
        let node = self.node_of(label)?;
        self.ancestor_node_at(node, tau).map(|a| self.label(a))
    }

    /// Index of the snapshot with positions nearest to `tau`.
    fn nearest_positional(&self, tau: f64) -> Result<usize> {
        let tol = 1e-9 * tau.abs().max(1.0);
        let mut best: Option<(usize, f64)> = None;
        let mut first = f64::INFINITY;
        let mut last = f64::NEG_INFINITY;
        for (i, s) in self.snapshots.iter().enumerate() {
            if s.entries.is_none() {
                continue;
            }
            first = first.min(s.time);
            last = last.max(s.time);
            let d = (s.time - tau).abs();
            // Later snapshot wins an exact distance tie.
            if best.is_none_or(|(_, bd)| d <= bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) if tau >= first - tol && tau <= last + tol => Ok(i),
            _ => Err(Error::Coverage(format!(
                "no positional snapshot covers time {tau} (covered: [{first}, {last}])"
            ))),
        }
    }

    /// Snapshot nearest to `tau` among those that stored positions.
    pub fn nearest_snapshot(&self, tau: f64) -> Result<&Snapshot> {
        self.nearest_positional(tau).map(|i| &self.snapshots[i])
    }

    /// Ancestral positions `Y_{s,t}` and their moving-frame version
    /// `Ŷ_{s,t} = Y_{s,t} − ξ_{t−s}` for each lookback `s`.
    ///
    /// The ancestor is resolved at the time of the snapshot nearest to `t − s`
    /// so that it is guaranteed to appear in that snapshot.
    pub fn lineage_positions(&self, label: &Label, t: f64, s_grid: &[f64]) -> Result<LineageSample> {
        let node = self.node_of(label)?;
        let mut y = Vec::with_capacity(s_grid.len());
        let mut y_hat = Vec::with_capacity(s_grid.len());
        let mut ancestors = Vec::with_capacity(s_grid.len());
        for &s in s_grid {
            if s < 0.0 {
                return Err(Error::InvalidInput(format!("negative lookback {s}")));
            }
            let snap = &self.snapshots[self.nearest_positional(t - s)?];
            let anc = self.ancestor_node_at(node, snap.time)?;
            let x = snap.position_of(anc).ok_or_else(|| {
                Error::Coverage(format!("node {anc} missing from snapshot at {}", snap.time))
            })?;
            let xi = snap.xi.ok_or_else(|| {
                Error::Coverage(format!("no K-th particle recorded at {}", snap.time))
            })?;
            y.push(x);
            y_hat.push(x - xi);
            ancestors.push(self.label(anc));
        }
        Ok(LineageSample {
            target: label.clone(),
            t,
            s_grid: s_grid.to_vec(),
            y,
            y_hat,
            ancestors,
        })
    }

    /// Ancestral positions, `s` time units back, of every particle whose
    /// centered position at `t` lies in `[window.0, window.1]`.
    pub fn ancestral_distribution(&self, t: f64, window: (f64, f64), s: f64) -> Result<AncestralDistribution> {
        if s < 0.0 {
            return Err(Error::InvalidInput(format!("negative lookback {s}")));
        }
        let now = &self.snapshots[self.nearest_positional(t)?];
        let xi_now = now
            .xi
            .ok_or_else(|| Error::Coverage(format!("no K-th particle recorded at {}", now.time)))?;
        let past = &self.snapshots[self.nearest_positional(t - s)?];
        let xi_past = past
            .xi
            .ok_or_else(|| Error::Coverage(format!("no K-th particle recorded at {}", past.time)))?;

        let mut y_hat = Vec::new();
        let mut z_now = Vec::new();
        let mut distinct = HashSet::new();
        for &(node, x) in now.entries.as_deref().unwrap_or_default() {
            let z = x - xi_now;
            if z < window.0 || z > window.1 {
                continue;
            }
            let anc = self.ancestor_node_at(node, past.time)?;
            let xa = past.position_of(anc).ok_or_else(|| {
                Error::Coverage(format!("node {anc} missing from snapshot at {}", past.time))
            })?;
            z_now.push(z);
            y_hat.push(xa - xi_past);
            distinct.insert(anc);
        }
        Ok(AncestralDistribution {
            t: now.time,
            s: now.time - past.time,
            selection_size: y_hat.len(),
            distinct_ancestors: distinct.len(),
            y_hat,
            z_now,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn label_display_roundtrip() {
        let l = Label::root(7).child(1).child(2);
        assert_eq!(l.to_string(), "7.1.2");
        assert_eq!("7.1.2".parse::<Label>().unwrap(), l);
        assert!("0".parse::<Label>().is_err());
        assert!("3.4".parse::<Label>().is_err());
        assert!("x".parse::<Label>().is_err());
        assert_eq!(l.parent().unwrap().to_string(), "7.1");
        assert!(Label::root(7).is_prefix_of(&l));
        assert!(!Label::root(7).child(2).is_prefix_of(&l));
        assert_eq!(l.prefixes().len(), 3);
    }

    fn store_with_roots(n: u32) -> GenealogyStore {
        let mut g = GenealogyStore::new();
        for _ in 0..n {
            g.add_root(0.0).unwrap();
        }
        g
    }

    #[test]
    fn ancestor_of_unbranched_label_is_itself() {
        let mut g = store_with_roots(3);
        g.set_now(5.0);
        let l = Label::root(2);
        for tau in [0.0, 1.0, 4.99, 5.0] {
            assert_eq!(g.ancestor_at(&l, tau).unwrap(), l);
        }
    }

    #[test]
    fn child_queried_before_birth_maps_to_parent() {
        let mut g = store_with_roots(7);
        let seven = g.node_of(&Label::root(7)).unwrap();
        let [c1, _] = g.branch(seven, 2.0).unwrap();
        g.set_now(3.0);
        let child = g.label(c1);
        assert_eq!(child.to_string(), "7.1");
        assert_eq!(g.ancestor_at(&child, 1.999).unwrap().to_string(), "7");
        // half-open intervals: at the branch instant the child is alive
        assert_eq!(g.ancestor_at(&child, 2.0).unwrap(), child);
        assert!(matches!(g.ancestor_at(&Label::root(7), 2.0), Err(Error::OutOfRange(_))));
        assert!(matches!(g.ancestor_at(&child, -0.5), Err(Error::OutOfRange(_))));
        assert!(matches!(g.ancestor_at(&child, 3.5), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn branching_twice_is_rejected() {
        let mut g = store_with_roots(1);
        g.branch(0, 1.0).unwrap();
        assert!(g.branch(0, 2.0).is_err());
        assert!(g.add_root(0.0).is_err());
        assert!(g.node_of(&"1.1.1".parse().unwrap()).is_err());
    }

    /// Random tree plus snapshots; returns the store and, for every snapshot,
    /// a label-keyed map of the alive population.
    fn random_history(seed: u64, steps: usize) -> (GenealogyStore, Vec<HashMap<String, f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = store_with_roots(5);
        let mut alive: Vec<(NodeId, f64)> = (0..5).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
        let mut by_label = Vec::new();
        for step in 0..=steps {
            let t = step as f64 * 0.5;
            if step > 0 {
                for a in alive.iter_mut() {
                    a.1 += rng.random_range(-0.3..0.3);
                }
                let births = rng.random_range(0..4);
                for _ in 0..births {
                    let i = rng.random_range(0..alive.len());
                    let (p, x) = alive.swap_remove(i);
                    let [c1, c2] = g.branch(p, t).unwrap();
                    alive.push((c1, x));
                    alive.push((c2, x));
                }
            }
            g.set_now(t);
            let xi = alive.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
            let mut entries = alive.clone();
            entries.sort_by_key(|e| e.0);
            by_label.push(entries.iter().map(|&(id, x)| (g.label(id).to_string(), x)).collect());
            g.record_snapshot(Snapshot {
                time: t,
                n: entries.len(),
                xi: Some(xi),
                entries: Some(entries),
            })
            .unwrap();
        }
        (g, by_label)
    }

    #[test]
    fn prefix_uniqueness_under_random_queries() {
        let (g, snaps) = random_history(11, 500);
        assert!(g.node_count() > 1000);
        let last = g.snapshots().last().unwrap();
        let alive: Vec<NodeId> = last.entries.as_ref().unwrap().iter().map(|e| e.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let node = alive[rng.random_range(0..alive.len())];
            let tau = rng.random_range(0.0..g.now());
            let label = g.label(node);
            let alive_prefixes: Vec<Label> = label
                .prefixes()
                .into_iter()
                .filter(|p| g.node(g.node_of(p).unwrap()).unwrap().alive_at(tau))
                .collect();
            assert_eq!(alive_prefixes.len(), 1);
            assert_eq!(g.ancestor_at(&label, tau).unwrap(), alive_prefixes[0]);
        }
        drop(snaps);
    }

    #[test]
    fn lineage_matches_brute_force_prefix_walk() {
        let (g, snaps) = random_history(5, 200);
        let t = g.now();
        let last = g.snapshots().last().unwrap();
        let s_grid: Vec<f64> = (0..=40).map(|i| i as f64 * 2.5).collect();
        for &(node, _) in last.entries.as_ref().unwrap().iter().step_by(7) {
            let label = g.label(node);
            let sample = g.lineage_positions(&label, t, &s_grid).unwrap();
            assert_eq!(sample.y.len(), s_grid.len());
            for (j, &s) in s_grid.iter().enumerate() {
                // brute force: the one prefix whose string is present in the
                // snapshot at t - s
                let idx = ((t - s) / 0.5).round() as usize;
                let present: Vec<f64> = label
                    .prefixes()
                    .iter()
                    .filter_map(|p| snaps[idx].get(&p.to_string()).copied())
                    .collect();
                assert_eq!(present.len(), 1, "label {label} s {s}");
                assert_eq!(sample.y[j], present[0]);
                let xi = g.snapshots()[idx].xi.unwrap();
                assert_eq!(sample.y_hat[j], present[0] - xi);
            }
            assert_eq!(sample.y[0], last.position_of(node).unwrap());
        }
    }

    #[test]
    fn lineage_jumps_only_at_branch_times() {
        let (g, _) = random_history(9, 120);
        let t = g.now();
        let last = g.snapshots().last().unwrap();
        let node = last.entries.as_ref().unwrap()[0].0;
        let label = g.label(node);
        let s_grid: Vec<f64> = (0..=120).map(|i| i as f64 * 0.5).collect();
        let sample = g.lineage_positions(&label, t, &s_grid).unwrap();
        for w in sample.ancestors.windows(2) {
            // going back in s, the ancestor label can only shorten
            assert!(w[1].is_prefix_of(&w[0]));
        }
    }

    #[test]
    fn lineage_coverage_errors() {
        let (g, _) = random_history(1, 10);
        let last = g.snapshots().last().unwrap();
        let label = g.label(last.entries.as_ref().unwrap()[0].0);
        let err = g.lineage_positions(&label, g.now(), &[100.0]).unwrap_err();
        assert!(matches!(err, Error::Coverage(_)));
    }

    #[test]
    fn ancestral_distribution_basics() {
        let (g, _) = random_history(21, 100);
        let t = g.now();
        let empty = g.ancestral_distribution(t, (1e6, 2e6), 10.0).unwrap();
        assert_eq!(empty.selection_size, 0);
        assert_eq!(empty.distinct_ancestors, 0);

        let now = g.ancestral_distribution(t, (-1e9, 1e9), 0.0).unwrap();
        assert_eq!(now.y_hat, now.z_now);
        assert_eq!(now.distinct_ancestors, now.selection_size);

        let mut prev = usize::MAX;
        for s in [0.0, 5.0, 10.0, 20.0, 40.0, 50.0] {
            let d = g.ancestral_distribution(t, (-1e9, 1e9), s).unwrap();
            assert!(d.distinct_ancestors <= prev);
            prev = d.distinct_ancestors;
        }
    }
}
