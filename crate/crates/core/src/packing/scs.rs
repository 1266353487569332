//! Greedy shortest-common-superstring arrangement of zero-padded filters.
//!
//! A depthwise filter `i` of a block of `C` channels, viewed as a standard
//! filter, is the slot string `0^(C-1-i) W_i 0^i`: one nonzero slot flanked
//! by zero channels. Two such strings can overlap only where both are zero,
//! so the overlap-graph edge weight from `u` to `v` is
//! `min(trailing_zeros(u), leading_zeros(v))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero structure of one padded filter: `lead` zero slots, the filter, `trail` zero slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroPattern {
    pub lead: usize,
    pub trail: usize,
}

impl ZeroPattern {
    pub fn len(&self) -> usize {
        self.lead + 1 + self.trail
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The patterns `0^(C-1-i) W_i 0^i` for `i in 0..C`.
pub fn depthwise_patterns(c: usize) -> Vec<ZeroPattern> {
    (0..c)
        .map(|i| ZeroPattern {
            lead: c - 1 - i,
            trail: i,
        })
        .collect()
}

/// Where each filter ended up in the superstring.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterArrangement {
    /// Filters in superstring order (by position of their nonzero slot).
    pub order: Vec<usize>,
    /// Slot at which filter `i`'s padded window begins.
    pub start_slot: Vec<usize>,
    /// Untruncated superstring length in slots.
    pub total_slots: usize,
    patterns: Vec<ZeroPattern>,
}

impl FilterArrangement {
    /// Slot holding filter `i`'s nonzero channel.
    pub fn weight_slot(&self, i: usize) -> usize {
        self.start_slot[i] + self.patterns[i].lead
    }

    /// Leading zero slots of the whole superstring, which a packer may drop.
    pub fn leading_zeros(&self) -> usize {
        (0..self.patterns.len()).map(|i| self.weight_slot(i)).min().unwrap_or(0)
    }

    pub fn patterns(&self) -> &[ZeroPattern] {
        &self.patterns
    }

    /// Slot string with `Some(i)` at filter `i`'s nonzero channel.
    pub fn render(&self) -> Vec<Option<usize>> {
        let mut s = vec![None; self.total_slots];
        for i in 0..self.patterns.len() {
            s[self.weight_slot(i)] = Some(i);
        }
        s
    }

    /// True when every pattern embeds at its start slot and no two nonzero slots coincide.
    pub fn is_valid(&self) -> bool {
        let mut owner = vec![None; self.total_slots];
        for (i, p) in self.patterns.iter().enumerate() {
            if self.start_slot[i] + p.len() > self.total_slots {
                return false;
            }
            let w = self.weight_slot(i);
            if owner[w].is_some() {
                return false;
            }
            owner[w] = Some(i);
        }
        self.patterns.iter().enumerate().all(|(i, p)| {
            let start = self.start_slot[i];
            (start..start + p.len()).all(|slot| slot == self.weight_slot(i) || owner[slot].is_none())
        })
    }
}

/// A partially merged superstring: member filters and their offsets in it.
#[derive(Clone, Debug)]
struct Node {
    len: usize,
    lead: usize,
    trail: usize,
    members: Vec<(usize, usize)>,
}

/// Greedy overlap merging: repeatedly merge the heaviest edge, ties going to
/// the lexicographically smallest `(source, dest)` node index pair. The merged
/// node keeps the source's index. Once no edge has positive weight the
/// remaining nodes are concatenated ordered by their smallest member filter.
pub fn greedy_scs_arrange(patterns: &[ZeroPattern]) -> Result<FilterArrangement> {
    if patterns.is_empty() {
        return Err(Error::EmptyFilters);
    }
    let mut nodes: Vec<Option<Node>> = patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Some(Node {
                len: p.len(),
                lead: p.lead,
                trail: p.trail,
                members: vec![(i, 0)],
            })
        })
        .collect();

    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for (u, nu) in nodes.iter().enumerate() {
            let Some(nu) = nu else { continue };
            for (v, nv) in nodes.iter().enumerate() {
                let Some(nv) = nv else { continue };
                if u == v {
                    continue;
                }
                let w = nu.trail.min(nv.lead);
                if w > 0 && best.is_none_or(|(bw, _, _)| w > bw) {
                    best = Some((w, u, v));
                }
            }
        }
        let Some((overlap, u, v)) = best else { break };
        let dest = nodes[v].take().expect("live node");
        let src = nodes[u].as_mut().expect("live node");
        let shift = src.len - overlap;
        src.members
            .extend(dest.members.into_iter().map(|(f, off)| (f, off + shift)));
        src.len = shift + dest.len;
        src.trail = dest.trail;
    }

    let mut remaining: Vec<Node> = nodes.into_iter().flatten().collect();
    remaining.sort_by_key(|n| n.members.iter().map(|&(f, _)| f).min());
    let mut start_slot = vec![0; patterns.len()];
    let mut total = 0;
    for node in remaining {
        for (f, off) in node.members {
            start_slot[f] = total + off;
        }
        total += node.len;
    }
    let mut order: Vec<usize> = (0..patterns.len()).collect();
    order.sort_by_key(|&i| start_slot[i] + patterns[i].lead);
    Ok(FilterArrangement {
        order,
        start_slot,
        total_slots: total,
        patterns: patterns.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_filter() {
        let a = greedy_scs_arrange(&depthwise_patterns(1)).unwrap();
        assert_eq!(a.total_slots, 1);
        assert_eq!(a.weight_slot(0), 0);
    }

    #[test]
    fn four_filters_share_zero_channels() {
        let a = greedy_scs_arrange(&depthwise_patterns(4)).unwrap();
        assert_eq!(a.total_slots, 11);
        let rendered = a.render();
        let expect = [
            Some(3),
            None,
            None,
            None,
            Some(0),
            None,
            Some(2),
            None,
            None,
            Some(1),
            None,
        ];
        assert_eq!(rendered, expect);
        assert!(a.is_valid());
    }

    #[test]
    fn empty_list_is_an_error() {
        assert_eq!(greedy_scs_arrange(&[]), Err(Error::EmptyFilters));
    }

    #[test]
    fn deterministic() {
        let p = depthwise_patterns(9);
        assert_eq!(greedy_scs_arrange(&p).unwrap(), greedy_scs_arrange(&p).unwrap());
    }
}
