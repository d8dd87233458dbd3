//! Two-colored rooted trees and the degree-count audit for derivations of
//! the cylinder operad on the doubly-desuspended cocommutative cooperad.
//!
//! The cylinder operad is free on three families of corollas: two
//! suspension-bearing families (all inputs and the output of the first
//! color, respectively all of the second color; arity ≥ 2, degree `3 − 2n`)
//! and a mixed family (inputs of the first color, output of the second;
//! arity ≥ 1, degree `2 − 2n`).  A derivation vanishing on the two pure
//! families sends a mixed generator to a sum of trees built from these
//! corollas with ≥ 2 internal vertices.  The audit enumerates all such
//! trees at small size, recomputes the derivation degree of each from the
//! corolla degree table and the edge-count identity, and confirms the
//! dichotomy behind positivity: the degree always equals the number of
//! suspension-bearing corollas, and no multi-vertex tree avoids them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

/// The three corolla families of the cylinder operad's generating
/// collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CorollaKind {
    /// All inputs and the output carry the first color; arity ≥ 2.
    Alpha,
    /// All inputs and the output carry the second color; arity ≥ 2.
    Beta,
    /// Inputs carry the first color, the output the second; arity ≥ 1.
    Mixed,
}

impl CorollaKind {
    /// Whether the corolla comes from the suspended (cokernel) family.
    pub fn suspension_bearing(self) -> bool {
        matches!(self, CorollaKind::Alpha | CorollaKind::Beta)
    }

    pub fn min_arity(self) -> usize {
        match self {
            CorollaKind::Alpha | CorollaKind::Beta => 2,
            CorollaKind::Mixed => 1,
        }
    }

    /// Output color: `true` for the first color.
    pub fn output_is_first_color(self) -> bool {
        matches!(self, CorollaKind::Alpha)
    }

    /// Input color: `true` for the first color.
    pub fn input_is_first_color(self) -> bool {
        matches!(self, CorollaKind::Alpha | CorollaKind::Mixed)
    }
}

/// Degrees of the generating corollas, parameterized by the two constant
/// shifts of the table `suspended family ↦ s − 2n`, `plain family ↦ p − 2n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorollaDegreeTable {
    pub suspended_shift: i64,
    pub plain_shift: i64,
}

impl Default for CorollaDegreeTable {
    fn default() -> Self {
        CorollaDegreeTable {
            suspended_shift: 3,
            plain_shift: 2,
        }
    }
}

impl CorollaDegreeTable {
    pub fn degree(&self, kind: CorollaKind, arity: usize) -> i64 {
        let shift = if kind.suspension_bearing() {
            self.suspended_shift
        } else {
            self.plain_shift
        };
        shift - 2 * arity as i64
    }
}

/// A node of a two-colored tree: a labeled leaf (first color) or an
/// internal vertex of one of the three corolla kinds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TreeNode {
    Leaf(usize),
    Vertex(CorollaKind, Vec<TreeNode>),
}

impl TreeNode {
    /// Color of the edge above this node: `true` for the first color.
    pub fn output_is_first_color(&self) -> bool {
        match self {
            TreeNode::Leaf(_) => true,
            TreeNode::Vertex(kind, _) => kind.output_is_first_color(),
        }
    }

    /// Canonical text form; children are listed in canonical order.
    pub fn serialize(&self) -> String {
        match self {
            TreeNode::Leaf(l) => format!("L{l}"),
            TreeNode::Vertex(kind, children) => {
                let tag = match kind {
                    CorollaKind::Alpha => 'A',
                    CorollaKind::Beta => 'B',
                    CorollaKind::Mixed => 'M',
                };
                let inner: Vec<String> = children.iter().map(|c| c.serialize()).collect();
                format!("{tag}({})", inner.join(" "))
            }
        }
    }

    fn canonicalize(&mut self) {
        if let TreeNode::Vertex(_, children) = self {
            for c in children.iter_mut() {
                c.canonicalize();
            }
            children.sort_by_key(|c| c.serialize());
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            TreeNode::Leaf(l) => {
                if *l == 0 {
                    Err("leaf labels start at 1".into())
                } else {
                    Ok(())
                }
            }
            TreeNode::Vertex(kind, children) => {
                if children.len() < kind.min_arity() {
                    return Err(format!(
                        "{kind:?} corolla needs at least {} inputs, found {}",
                        kind.min_arity(),
                        children.len()
                    ));
                }
                for c in children {
                    if c.output_is_first_color() != kind.input_is_first_color() {
                        return Err(format!(
                            "{kind:?} corolla received an input of the wrong color from {}",
                            c.serialize()
                        ));
                    }
                    c.validate()?;
                }
                Ok(())
            }
        }
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            TreeNode::Leaf(l) => out.push(*l),
            TreeNode::Vertex(_, children) => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    fn collect_corollas(&self, out: &mut Vec<(CorollaKind, usize)>) {
        if let TreeNode::Vertex(kind, children) = self {
            out.push((*kind, children.len()));
            for c in children {
                c.collect_corollas(out);
            }
        }
    }
}

/// A validated two-colored tree: root edge of the second color, leaves
/// labeled exactly `1..=n`, corolla arities and edge colors consistent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TwoColoredTree {
    root: TreeNode,
}

impl TwoColoredTree {
    pub fn new(mut root: TreeNode) -> Result<TwoColoredTree, String> {
        if root.output_is_first_color() {
            return Err("the root edge must carry the second color".into());
        }
        root.validate()?;
        let mut leaves = Vec::new();
        root.collect_leaves(&mut leaves);
        leaves.sort_unstable();
        let n = leaves.len();
        if leaves != (1..=n).collect::<Vec<_>>() {
            return Err(format!(
                "leaf labels must be exactly 1..={n}, found {leaves:?}"
            ));
        }
        root.canonicalize();
        Ok(TwoColoredTree { root })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Number of leaves.
    pub fn leaf_count(&self) -> usize {
        let mut leaves = Vec::new();
        self.root.collect_leaves(&mut leaves);
        leaves.len()
    }

    /// Number of internal vertices.
    pub fn vertex_count(&self) -> usize {
        self.corollas().len()
    }

    /// The internal vertices as `(kind, arity)` pairs in pre-order.
    pub fn corollas(&self) -> Vec<(CorollaKind, usize)> {
        let mut out = Vec::new();
        self.root.collect_corollas(&mut out);
        out
    }

    /// Canonical identifier.
    pub fn id(&self) -> String {
        self.root.serialize()
    }
}

/// All trees of the first color on the given leaf set: a bare leaf, or an
/// arity-≥ 2 corolla of the first kind over a set partition.
fn first_color_trees(leaves: &[usize]) -> Vec<TreeNode> {
    let mut out = Vec::new();
    if leaves.len() == 1 {
        out.push(TreeNode::Leaf(leaves[0]));
    }
    if leaves.len() >= 2 {
        for blocks in set_partitions(leaves) {
            if blocks.len() < 2 {
                continue;
            }
            let choices: Vec<Vec<TreeNode>> =
                blocks.iter().map(|b| first_color_trees(b)).collect();
            for combo in cartesian(&choices) {
                out.push(TreeNode::Vertex(CorollaKind::Alpha, combo));
            }
        }
    }
    out
}

/// All trees of the second color on the given leaf set: a mixed corolla
/// over first-color trees, or an arity-≥ 2 corolla of the second kind over
/// second-color trees.
fn second_color_trees(leaves: &[usize]) -> Vec<TreeNode> {
    let mut out = Vec::new();
    for blocks in set_partitions(leaves) {
        let first: Vec<Vec<TreeNode>> = blocks.iter().map(|b| first_color_trees(b)).collect();
        for combo in cartesian(&first) {
            out.push(TreeNode::Vertex(CorollaKind::Mixed, combo));
        }
        if blocks.len() >= 2 {
            let second: Vec<Vec<TreeNode>> =
                blocks.iter().map(|b| second_color_trees(b)).collect();
            for combo in cartesian(&second) {
                out.push(TreeNode::Vertex(CorollaKind::Beta, combo));
            }
        }
    }
    out
}

/// Unordered set partitions into nonempty blocks, each block ascending,
/// generated by restricted growth strings for a duplicate-free pass.
fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let n = items.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut assignment = vec![0usize; n];
    fn rec(
        items: &[usize],
        assignment: &mut Vec<usize>,
        pos: usize,
        used: usize,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if pos == items.len() {
            let mut blocks = vec![Vec::new(); used];
            for (i, &b) in assignment.iter().enumerate() {
                blocks[b].push(items[i]);
            }
            out.push(blocks);
            return;
        }
        for b in 0..=used.min(pos) {
            assignment[pos] = b;
            let new_used = used.max(b + 1);
            rec(items, assignment, pos + 1, new_used, out);
        }
    }
    rec(items, &mut assignment, 0, 0, &mut out);
    out
}

fn cartesian(choices: &[Vec<TreeNode>]) -> Vec<Vec<TreeNode>> {
    let mut out: Vec<Vec<TreeNode>> = vec![Vec::new()];
    for c in choices {
        let mut next = Vec::with_capacity(out.len() * c.len());
        for prefix in &out {
            for item in c {
                let mut row = prefix.clone();
                row.push(item.clone());
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// Exhaustive, duplicate-free list of two-colored trees with `n` labeled
/// leaves and exactly `k` internal vertices, in canonical order.
pub fn enumerate_two_colored_trees(n: usize, k: usize) -> Vec<TwoColoredTree> {
    assert!(n >= 1, "at least one leaf");
    assert!(k >= 1, "at least one internal vertex");
    let leaves: Vec<usize> = (1..=n).collect();
    let mut out: Vec<TwoColoredTree> = second_color_trees(&leaves)
        .into_iter()
        .map(|root| TwoColoredTree::new(root).expect("generated trees are valid"))
        .filter(|t| t.vertex_count() == k)
        .collect();
    out.sort_by_key(|t| t.id());
    out.dedup_by_key(|t| t.id());
    out
}

/// Independent count of the same trees by pure arithmetic: a block-by-block
/// recursion over the block containing the smallest remaining leaf, with
/// binomial weights.  Shares no code with the tree generator.
pub fn oracle_tree_count(n: usize, k: usize) -> u64 {
    fn binom(n: usize, r: usize) -> u64 {
        if r > n {
            return 0;
        }
        let mut out = 1u64;
        for i in 0..r {
            out = out * (n - i) as u64 / (i + 1) as u64;
        }
        out
    }
    // partition_count[f](n, m, k): ways to split an n-set into m unordered
    // blocks carrying f-structures with k internal vertices in total.
    fn partition_count(
        f: &dyn Fn(usize, usize) -> u64,
        n: usize,
        m: usize,
        k: usize,
    ) -> u64 {
        if n == 0 || m == 0 {
            return (n == 0 && m == 0 && k == 0) as u64;
        }
        let mut total = 0;
        for s in 1..=n {
            for j in 0..=k {
                let inner = f(s, j);
                if inner == 0 {
                    continue;
                }
                total += binom(n - 1, s - 1) * inner * partition_count(f, n - s, m - 1, k - j);
            }
        }
        total
    }
    fn first_count(n: usize, k: usize) -> u64 {
        if n == 1 {
            return (k == 0) as u64;
        }
        if k == 0 {
            return 0;
        }
        (2..=n)
            .map(|m| partition_count(&first_count, n, m, k - 1))
            .sum()
    }
    fn second_count(n: usize, k: usize) -> u64 {
        if k == 0 {
            return 0;
        }
        let mixed: u64 = (1..=n)
            .map(|m| partition_count(&first_count, n, m, k - 1))
            .sum();
        let pure: u64 = (2..=n)
            .map(|m| partition_count(&second_count, n, m, k - 1))
            .sum();
        mixed + pure
    }
    second_count(n, k)
}

/// Per-tree degree bookkeeping for one derivation summand.
#[derive(Debug, Clone)]
pub struct DegreeReport {
    pub tree_id: String,
    pub leaf_count: usize,
    pub vertex_count: usize,
    /// Number of suspension-bearing corollas.
    pub k1: usize,
    /// Number of mixed corollas.
    pub k2: usize,
    /// Derivation degree computed from the corolla degree table.
    pub degree: i64,
    /// The structural identity `Σ(nᵥ − 1) = n − 1`.
    pub edge_identity: bool,
    /// The tree consists solely of mixed corollas.
    pub all_mixed: bool,
    /// `degree == k1`.
    pub pass: bool,
}

/// Recomputes the derivation degree of one tree summand from the corolla
/// degree table: the sum of corolla degrees minus the degree of the mixed
/// generator being differentiated, which the edge-count identity reduces to
/// the number of suspension-bearing corollas.
pub fn degree_identity_check(t: &TwoColoredTree, degs: &CorollaDegreeTable) -> DegreeReport {
    let corollas = t.corollas();
    let n = t.leaf_count();
    let k1 = corollas
        .iter()
        .filter(|(kind, _)| kind.suspension_bearing())
        .count();
    let k2 = corollas.len() - k1;
    let generator_degree = degs.degree(CorollaKind::Mixed, n);
    let degree: i64 = corollas
        .iter()
        .map(|&(kind, arity)| degs.degree(kind, arity))
        .sum::<i64>()
        - generator_degree;
    let edge_sum: i64 = corollas.iter().map(|&(_, arity)| arity as i64 - 1).sum();
    DegreeReport {
        tree_id: t.id(),
        leaf_count: n,
        vertex_count: corollas.len(),
        k1,
        k2,
        degree,
        edge_identity: edge_sum == n as i64 - 1,
        all_mixed: k1 == 0,
        pass: degree == k1 as i64,
    }
}

/// One line of the enumerator cross-check.
#[derive(Debug, Clone)]
pub struct CountRow {
    pub leaf_count: usize,
    pub vertex_count: usize,
    pub primary: u64,
    pub oracle: u64,
}

/// Outcome of the exhaustive audit over a leaf/vertex range.
#[derive(Debug, Clone)]
pub struct CylAuditReport {
    pub n_max: usize,
    pub k_max: usize,
    pub rows: Vec<DegreeReport>,
    pub counts: Vec<CountRow>,
    /// Trees whose recomputed degree differs from the suspension count.
    pub degree_violations: usize,
    /// Trees failing the structural edge-count identity.
    pub edge_violations: usize,
    /// Trees with ≥ 2 vertices built solely from mixed corollas (the
    /// positivity argument requires that none exist).
    pub all_mixed_multi_vertex: usize,
    /// Multi-vertex trees whose degree fails to be ≥ 1.
    pub nonpositive_multi_vertex: usize,
    /// Count rows where the two enumerators disagree.
    pub enumerator_mismatches: usize,
}

impl CylAuditReport {
    pub fn pass(&self) -> bool {
        self.degree_violations == 0
            && self.edge_violations == 0
            && self.all_mixed_multi_vertex == 0
            && self.nonpositive_multi_vertex == 0
            && self.enumerator_mismatches == 0
    }

    /// CSV listing: one line per enumerated tree.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tree_id,n,k,k1,degree,pass\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.tree_id, r.leaf_count, r.vertex_count, r.k1, r.degree, r.pass
            )
            .unwrap();
        }
        out
    }

    /// CSV cross-check table: one line per (leaves, vertices) cell.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("n,k,primary,oracle\n");
        for c in &self.counts {
            writeln!(
                out,
                "{},{},{},{}",
                c.leaf_count, c.vertex_count, c.primary, c.oracle
            )
            .unwrap();
        }
        out
    }
}

/// Exhaustive audit: enumerates every two-colored tree with up to `n_max`
/// leaves and `k_max` internal vertices, recomputes all degrees, verifies
/// the positivity dichotomy (multi-vertex trees always carry a
/// suspension-bearing corolla and hence degree ≥ 1), and cross-checks the
/// enumeration against the independent arithmetic count.
pub fn no_nonpositive_derivations(n_max: usize, k_max: usize) -> CylAuditReport {
    let degs = CorollaDegreeTable::default();
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    let mut degree_violations = 0;
    let mut edge_violations = 0;
    let mut all_mixed_multi_vertex = 0;
    let mut nonpositive_multi_vertex = 0;
    let mut enumerator_mismatches = 0;
    for n in 1..=n_max {
        for k in 1..=k_max {
            let trees = enumerate_two_colored_trees(n, k);
            let ids: BTreeSet<String> = trees.iter().map(|t| t.id()).collect();
            assert_eq!(ids.len(), trees.len(), "enumeration must be duplicate-free");
            let oracle = oracle_tree_count(n, k);
            if trees.len() as u64 != oracle {
                enumerator_mismatches += 1;
            }
            counts.push(CountRow {
                leaf_count: n,
                vertex_count: k,
                primary: trees.len() as u64,
                oracle,
            });
            for t in &trees {
                let r = degree_identity_check(t, &degs);
                if !r.pass {
                    degree_violations += 1;
                }
                if !r.edge_identity {
                    edge_violations += 1;
                }
                if k >= 2 {
                    if r.all_mixed {
                        all_mixed_multi_vertex += 1;
                    }
                    if r.degree < 1 {
                        nonpositive_multi_vertex += 1;
                    }
                }
                rows.push(r);
            }
        }
    }
    CylAuditReport {
        n_max,
        k_max,
        rows,
        counts,
        degree_violations,
        edge_violations,
        all_mixed_multi_vertex,
        nonpositive_multi_vertex,
        enumerator_mismatches,
    }
}
