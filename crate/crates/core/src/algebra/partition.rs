//! Index-set partitions.
//!
//! Two enumeration primitives drive every recursion in the crate: the
//! split of an index set into a chosen subset and its remainder (the inner
//! sum of the mean-product and moment/cumulant recursions), and the full
//! list of set partitions of a slot range (the rows and columns of the
//! multiplicity matrices).

use crate::error::{Error, Result};
use crate::vars::Var;
use std::cmp::Ordering;

/// A partition of a slot-index range into disjoint blocks.
///
/// Canonical form sorts each block ascending and orders blocks by size
/// descending, then by smallest element.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SlotPartition {
    blocks: Vec<Vec<usize>>,
}

impl SlotPartition {
    /// Builds a partition of `0..range`, validating disjointness and cover.
    pub fn new(blocks: Vec<Vec<usize>>, range: usize) -> Result<Self> {
        let mut seen = vec![false; range];
        let mut count = 0;
        for b in &blocks {
            for &i in b {
                if i >= range || seen[i] {
                    return Err(Error::InconsistentConditions(format!(
                        "blocks do not partition 0..{range}"
                    )));
                }
                seen[i] = true;
                count += 1;
            }
        }
        if count != range {
            return Err(Error::InconsistentConditions(format!(
                "blocks do not cover 0..{range}"
            )));
        }
        let mut blocks = blocks;
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
        Ok(SlotPartition { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// True when every block of `self` is contained in a block of `other`.
    pub fn refines(&self, other: &SlotPartition) -> bool {
        self.blocks.iter().all(|b| {
            other
                .blocks
                .iter()
                .any(|ob| b.iter().all(|i| ob.contains(i)))
        })
    }
}

/// All ways to split `indices` into a chosen set of size `nu` and the
/// remainder, in lexicographic order of the chosen set. Returns exactly
/// `C(|indices|, nu)` pairs.
pub fn subset_splits(indices: &[usize], nu: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if nu > indices.len() {
        return Err(Error::SubsetSizeOutOfRange {
            nu,
            len: indices.len(),
        });
    }
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(nu);
    fn rec(
        indices: &[usize],
        start: usize,
        nu: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        if chosen.len() == nu {
            let rest: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|i| !chosen.contains(i))
                .collect();
            out.push((chosen.clone(), rest));
            return;
        }
        for k in start..indices.len() {
            chosen.push(indices[k]);
            rec(indices, k + 1, nu, chosen, out);
            chosen.pop();
        }
    }
    rec(indices, 0, nu, &mut chosen, &mut out);
    Ok(out)
}

/// All set partitions of `0..n` in canonical order.
pub fn set_partitions(n: usize) -> Vec<SlotPartition> {
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    fn rec(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<SlotPartition>) {
        if i == n {
            out.push(SlotPartition::new(blocks.clone(), n).expect("valid by construction"));
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, n, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, n, blocks, out);
        blocks.pop();
    }
    rec(0, n, &mut blocks, &mut out);
    out.sort_by(|a, b| canonical_cmp_usize(&a.blocks, &b.blocks));
    out
}

fn canonical_cmp_usize(a: &[Vec<usize>], b: &[Vec<usize>]) -> Ordering {
    let asz: Vec<usize> = a.iter().map(Vec::len).collect();
    let bsz: Vec<usize> = b.iter().map(Vec::len).collect();
    for (x, y) in asz.iter().zip(&bsz) {
        match y.cmp(x) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    asz.len().cmp(&bsz.len()).then_with(|| a.cmp(b))
}

/// Canonicalizes label blocks in place: each block sorted, blocks ordered
/// by size descending then lexicographically by label sequence.
pub fn canonicalize_blocks(blocks: &mut Vec<Vec<Var>>) {
    blocks.retain(|b| !b.is_empty());
    for b in blocks.iter_mut() {
        b.sort_unstable();
    }
    blocks.sort_by(|a, b| canonical_block_cmp(a, b));
}

fn canonical_block_cmp(a: &[Var], b: &[Var]) -> Ordering {
    b.len().cmp(&a.len()).then_with(|| a.cmp(b))
}

/// Total order on canonical block lists: coarser partitions (larger
/// leading blocks) come first, matching the row order of the paper's
/// multiplicity matrices.
pub fn canonical_cmp(a: &[Vec<Var>], b: &[Vec<Var>]) -> Ordering {
    let asz: Vec<usize> = a.iter().map(Vec::len).collect();
    let bsz: Vec<usize> = b.iter().map(Vec::len).collect();
    for (x, y) in asz.iter().zip(&bsz) {
        match y.cmp(x) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    asz.len()
        .cmp(&bsz.len())
        .then_with(|| a.iter().map(|b| b.as_slice()).cmp(b.iter().map(|b| b.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut r = 1usize;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    }

    #[test]
    fn split_pairs_listed_exhaustively() {
        let splits = subset_splits(&[2, 3], 1).unwrap();
        assert_eq!(splits, vec![(vec![2], vec![3]), (vec![3], vec![2])]);
    }

    #[test]
    fn empty_choice_keeps_everything() {
        let splits = subset_splits(&[2, 3, 4], 0).unwrap();
        assert_eq!(splits, vec![(vec![], vec![2, 3, 4])]);
    }

    #[test]
    fn empty_set_has_the_empty_split() {
        let splits = subset_splits(&[], 0).unwrap();
        assert_eq!(splits, vec![(vec![], vec![])]);
    }

    #[test]
    fn out_of_range_nu_rejected() {
        assert!(subset_splits(&[1, 2], 3).is_err());
    }

    #[test]
    fn split_counts_match_binomials() {
        for n in 0..=8usize {
            let indices: Vec<usize> = (0..n).collect();
            for nu in 0..=n {
                let splits = subset_splits(&indices, nu).unwrap();
                assert_eq!(splits.len(), binom(n, nu), "n={n} nu={nu}");
                for (chosen, rest) in &splits {
                    assert_eq!(chosen.len() + rest.len(), n);
                }
            }
        }
    }

    #[test]
    fn bell_numbers() {
        let bell = [1usize, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), b, "n={n}");
        }
    }

    #[test]
    fn partition_canonical_order_is_coarsest_first() {
        let parts = set_partitions(3);
        let shapes: Vec<Vec<usize>> = parts
            .iter()
            .map(|p| p.blocks().iter().map(Vec::len).collect())
            .collect();
        assert_eq!(
            shapes,
            vec![vec![3], vec![2, 1], vec![2, 1], vec![2, 1], vec![1, 1, 1]]
        );
        // The three 2+1 partitions sort by their pair block: {0,1},{0,2},{1,2}.
        assert_eq!(parts[1].blocks()[0], vec![0, 1]);
        assert_eq!(parts[2].blocks()[0], vec![0, 2]);
        assert_eq!(parts[3].blocks()[0], vec![1, 2]);
    }

    #[test]
    fn refinement_is_respected_by_order() {
        let parts = set_partitions(4);
        for (i, p) in parts.iter().enumerate() {
            for (j, q) in parts.iter().enumerate() {
                if i < j {
                    // q comes later, so q must not be strictly coarser than p.
                    assert!(!(p.refines(q) && p != q), "order violates refinement");
                }
            }
        }
    }

    #[test]
    fn invalid_partitions_rejected() {
        assert!(SlotPartition::new(vec![vec![0], vec![0]], 2).is_err());
        assert!(SlotPartition::new(vec![vec![0]], 2).is_err());
        assert!(SlotPartition::new(vec![vec![0, 2]], 2).is_err());
    }
}
