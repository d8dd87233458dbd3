//! Brace trees: planted planar trees with labeled and neutral vertices,
//! their degree, operadic composition, and differential.
//!
//! A tree stores the unique child of the (implicit) root.  Every neutral
//! vertex has at least two children.  With ν neutral vertices and E edges
//! (one per non-root vertex), a tree has degree 2ν − E + 1.
//!
//! Signs come from an orientation-word calculus: every edge is an odd cell,
//! identified with the vertex below it, and the canonical orientation lists
//! edges in planar depth-first order.  The differential inserts one neutral
//! vertex (either capturing a consecutive block of some vertex's children
//! from below, or splitting a labeled vertex from above), writes the new
//! edge first, and reorders to canonical.  Composition grafts the replaced
//! vertex's children onto the plugged tree in all planar-compatible ways and
//! concatenates the orientation words (the plugged tree loses its root edge;
//! the host tree's edge into the replaced slot becomes the edge into the
//! plugged tree's top vertex), then reorders to canonical.  Unit, d² = 0,
//! true-degree derivation, and equivariance certificates are below; the
//! remaining global freedom is pinned by the action compatibility tests.

use crate::graded::{Degree, Permutation};
use crate::scalar::{int, is_zero, one, scalar_to_string, Scalar};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BraceNode {
    Labeled { label: usize, children: Vec<BraceNode> },
    Neutral { children: Vec<BraceNode> },
}

impl BraceNode {
    pub fn lab(label: usize, children: Vec<BraceNode>) -> Self {
        BraceNode::Labeled { label, children }
    }

    pub fn nu(children: Vec<BraceNode>) -> Self {
        BraceNode::Neutral { children }
    }

    pub fn children(&self) -> &[BraceNode] {
        match self {
            BraceNode::Labeled { children, .. } | BraceNode::Neutral { children } => children,
        }
    }
}

/// A brace tree, stored as the unique child of the planted root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BraceTree {
    pub top: BraceNode,
}

impl BraceTree {
    pub fn new(top: BraceNode) -> Result<Self, String> {
        let t = BraceTree { top };
        t.validate()?;
        Ok(t)
    }

    /// Checks Condition 1 (neutral in-degree ≥ 2) and that labels form a
    /// bijection with 1..=n.
    pub fn validate(&self) -> Result<usize, String> {
        let mut labels = Vec::new();
        fn walk(node: &BraceNode, labels: &mut Vec<usize>) -> Result<(), String> {
            match node {
                BraceNode::Labeled { label, children } => {
                    labels.push(*label);
                    for c in children {
                        walk(c, labels)?;
                    }
                }
                BraceNode::Neutral { children } => {
                    if children.len() < 2 {
                        return Err("neutral vertex with fewer than 2 children".into());
                    }
                    for c in children {
                        walk(c, labels)?;
                    }
                }
            }
            Ok(())
        }
        walk(&self.top, &mut labels)?;
        let n = labels.len();
        let set: BTreeSet<usize> = labels.iter().copied().collect();
        if set.len() != n || set != (1..=n).collect() {
            return Err(format!("labels must be a bijection with 1..{n}: {labels:?}"));
        }
        Ok(n)
    }

    pub fn arity(&self) -> usize {
        fn count(node: &BraceNode) -> usize {
            let own = matches!(node, BraceNode::Labeled { .. }) as usize;
            own + node.children().iter().map(count).sum::<usize>()
        }
        count(&self.top)
    }

    pub fn neutral_count(&self) -> usize {
        fn count(node: &BraceNode) -> usize {
            let own = matches!(node, BraceNode::Neutral { .. }) as usize;
            own + node.children().iter().map(count).sum::<usize>()
        }
        count(&self.top)
    }

    /// One edge per non-root vertex.
    pub fn edge_count(&self) -> usize {
        self.arity() + self.neutral_count() - 1
    }

    /// Each neutral vertex contributes +2, each edge -1.
    pub fn degree(&self) -> Degree {
        2 * self.neutral_count() as Degree - self.edge_count() as Degree
    }

    pub fn map_labels(&self, f: &impl Fn(usize) -> usize) -> BraceTree {
        fn walk(node: &BraceNode, f: &impl Fn(usize) -> usize) -> BraceNode {
            match node {
                BraceNode::Labeled { label, children } => BraceNode::Labeled {
                    label: f(*label),
                    children: children.iter().map(|c| walk(c, f)).collect(),
                },
                BraceNode::Neutral { children } => BraceNode::Neutral {
                    children: children.iter().map(|c| walk(c, f)).collect(),
                },
            }
        }
        BraceTree {
            top: walk(&self.top, f),
        }
    }

    /// Compact form: `1(2)` for the chain, `*(1,2)` for the cup tree.
    pub fn render(&self) -> String {
        fn walk(node: &BraceNode, out: &mut String) {
            match node {
                BraceNode::Labeled { label, children } => {
                    out.push_str(&label.to_string());
                    render_children(children, out);
                }
                BraceNode::Neutral { children } => {
                    out.push('*');
                    render_children(children, out);
                }
            }
        }
        fn render_children(children: &[BraceNode], out: &mut String) {
            if children.is_empty() {
                return;
            }
            out.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                walk(c, out);
            }
            out.push(')');
        }
        let mut s = String::new();
        walk(&self.top, &mut s);
        s
    }

    /// Multi-line tree drawing, root at the top.
    pub fn render_ascii(&self) -> String {
        fn walk(node: &BraceNode, prefix: &str, is_last: bool, out: &mut String) {
            let tag = match node {
                BraceNode::Labeled { label, .. } => label.to_string(),
                BraceNode::Neutral { .. } => "*".to_string(),
            };
            let branch = if is_last { "`-- " } else { "|-- " };
            out.push_str(prefix);
            out.push_str(branch);
            out.push_str(&tag);
            out.push('\n');
            let ext = if is_last { "    " } else { "|   " };
            let child_prefix = format!("{prefix}{ext}");
            let children = node.children();
            for (i, c) in children.iter().enumerate() {
                walk(c, &child_prefix, i + 1 == children.len(), out);
            }
        }
        let mut s = String::from("o\n");
        walk(&self.top, "", true, &mut s);
        s
    }

    pub fn to_json(&self) -> Value {
        fn node_json(node: &BraceNode) -> Value {
            match node {
                BraceNode::Labeled { label, children } => json!({
                    "kind": "lab",
                    "label": label,
                    "children": children.iter().map(node_json).collect::<Vec<_>>(),
                }),
                BraceNode::Neutral { children } => json!({
                    "kind": "nu",
                    "children": children.iter().map(node_json).collect::<Vec<_>>(),
                }),
            }
        }
        json!({
            "kind": "root",
            "children": [node_json(&self.top)],
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        fn node_from(v: &Value) -> Result<BraceNode, String> {
            let kind = v
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or("vertex needs a kind")?;
            let children: Vec<BraceNode> = match v.get("children") {
                None => Vec::new(),
                Some(c) => c
                    .as_array()
                    .ok_or("children must be an array")?
                    .iter()
                    .map(node_from)
                    .collect::<Result<_, _>>()?,
            };
            match kind {
                "lab" => {
                    let label = v
                        .get("label")
                        .and_then(|l| l.as_u64())
                        .ok_or("labeled vertex needs a label")? as usize;
                    Ok(BraceNode::Labeled { label, children })
                }
                "nu" => Ok(BraceNode::Neutral { children }),
                other => Err(format!("unexpected vertex kind {other:?}")),
            }
        }
        if v.get("kind").and_then(|k| k.as_str()) != Some("root") {
            return Err("top-level vertex must have kind \"root\"".into());
        }
        let children = v
            .get("children")
            .and_then(|c| c.as_array())
            .ok_or("root needs children")?;
        if children.len() != 1 {
            return Err("root must have exactly one child".into());
        }
        BraceTree::new(node_from(&children[0])?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BraceElement {
    pub arity: usize,
    terms: BTreeMap<BraceTree, Scalar>,
}

impl BraceElement {
    pub fn zero(arity: usize) -> Self {
        BraceElement {
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn tree(t: BraceTree) -> Self {
        let arity = t.validate().expect("valid brace tree");
        let mut e = BraceElement::zero(arity);
        e.add_term(t, one());
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BraceTree, &Scalar)> {
        self.terms.iter()
    }

    pub fn coeff(&self, t: &BraceTree) -> Scalar {
        self.terms.get(t).cloned().unwrap_or_else(crate::scalar::zero)
    }

    pub fn add_term(&mut self, t: BraceTree, c: Scalar) {
        debug_assert_eq!(t.validate().ok(), Some(self.arity));
        if is_zero(&c) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(t) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if is_zero(e.get()) {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    pub fn add(&self, other: &BraceElement) -> BraceElement {
        assert_eq!(self.arity, other.arity);
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(t.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &BraceElement) -> BraceElement {
        self.add(&other.scale(&int(-1)))
    }

    pub fn scale(&self, s: &Scalar) -> BraceElement {
        if is_zero(s) {
            return BraceElement::zero(self.arity);
        }
        BraceElement {
            arity: self.arity,
            terms: self.terms.iter().map(|(t, c)| (t.clone(), c * s)).collect(),
        }
    }

    /// Homogeneous degree, if all terms share one.
    pub fn degree(&self) -> Option<Degree> {
        let mut it = self.terms.keys();
        let first = it.next()?.degree();
        it.all(|t| t.degree() == first).then_some(first)
    }

    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, (t, c)) in self.terms.iter().enumerate() {
            let cs = scalar_to_string(c);
            let body = t.render();
            let part = if cs == "1" {
                body
            } else if cs == "-1" {
                format!("-{body}")
            } else {
                format!("{cs}*{body}")
            };
            if k == 0 {
                s.push_str(&part);
            } else if let Some(rest) = part.strip_prefix('-') {
                s.push_str(" - ");
                s.push_str(rest);
            } else {
                s.push_str(" + ");
                s.push_str(&part);
            }
        }
        s
    }
}

/// Relabels labeled vertices: label j becomes σ(j) (1-based).  The action is
/// sign-free since orientation words only involve edges.
pub fn act(perm: &Permutation, e: &BraceElement) -> BraceElement {
    let mut out = BraceElement::zero(e.arity);
    for (t, c) in e.terms() {
        out.add_term(t.map_labels(&|j| perm.image(j - 1) + 1), c.clone());
    }
    out
}

/// All brace trees with n labeled vertices and at most `max_neutral` neutral
/// vertices, sorted by neutral count then structurally.
pub fn enumerate_brace_trees(n: usize, max_neutral: usize) -> Vec<BraceTree> {
    assert!(n >= 1, "arity must be positive");
    let labels: Vec<usize> = (1..=n).collect();
    let mut out = Vec::new();
    for k in 0..=max_neutral {
        for node in node_options(&labels, k) {
            out.push(BraceTree { top: node });
        }
    }
    out.sort_by_key(|t| (t.neutral_count(), t.clone()));
    for t in &out {
        debug_assert_eq!(t.validate().ok(), Some(n));
    }
    out
}

/// All single vertices-with-forests using exactly `labels` and `neutrals`.
fn node_options(labels: &[usize], neutrals: usize) -> Vec<BraceNode> {
    let mut out = Vec::new();
    // Labeled top vertex.
    for (idx, &l) in labels.iter().enumerate() {
        let mut rest = labels.to_vec();
        rest.remove(idx);
        for forest in forest_options(&rest, neutrals, 0) {
            out.push(BraceNode::Labeled {
                label: l,
                children: forest,
            });
        }
    }
    // Neutral top vertex: needs at least 2 children.
    if neutrals >= 1 {
        for forest in forest_options(labels, neutrals - 1, 2) {
            out.push(BraceNode::Neutral { children: forest });
        }
    }
    out
}

/// Ordered forests on exactly `labels` and `neutrals`, length ≥ `min_trees`.
/// Every tree needs at least one label (leaves cannot be neutral).
fn forest_options(labels: &[usize], neutrals: usize, min_trees: usize) -> Vec<Vec<BraceNode>> {
    let mut out = Vec::new();
    if labels.is_empty() {
        if neutrals == 0 && min_trees == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    // Choose the label set of the first tree: any nonempty subset, by bitmask.
    let m = labels.len();
    for mask in 1u32..(1 << m) {
        let first: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).map(|j| labels[j]).collect();
        let rest: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) == 0).map(|j| labels[j]).collect();
        for k1 in 0..=neutrals {
            let heads = node_options(&first, k1);
            if heads.is_empty() {
                continue;
            }
            let tails = forest_options(&rest, neutrals - k1, min_trees.saturating_sub(1));
            for head in &heads {
                for tail in &tails {
                    let mut forest = vec![head.clone()];
                    forest.extend(tail.iter().cloned());
                    out.push(forest);
                }
            }
        }
    }
    out
}

/// Mutable tree with stable vertex ids; edge = vertex's parent edge, so the
/// orientation word is the depth-first id sequence.
#[derive(Clone)]
struct Arena {
    kinds: Vec<Option<usize>>, // Some(label) or None for neutral
    children: Vec<Vec<usize>>,
    top: usize,
}

impl Arena {
    fn from_tree(t: &BraceTree) -> Arena {
        let mut a = Arena {
            kinds: Vec::new(),
            children: Vec::new(),
            top: 0,
        };
        fn insert(a: &mut Arena, node: &BraceNode) -> usize {
            let id = a.kinds.len();
            a.kinds.push(match node {
                BraceNode::Labeled { label, .. } => Some(*label),
                BraceNode::Neutral { .. } => None,
            });
            a.children.push(Vec::new());
            for c in node.children() {
                let cid = insert(a, c);
                a.children[id].push(cid);
            }
            id
        }
        a.top = insert(&mut a, &t.top);
        a
    }

    fn to_tree(&self) -> BraceTree {
        fn build(a: &Arena, id: usize) -> BraceNode {
            let children = a.children[id].iter().map(|&c| build(a, c)).collect();
            match a.kinds[id] {
                Some(label) => BraceNode::Labeled { label, children },
                None => BraceNode::Neutral { children },
            }
        }
        BraceTree {
            top: build(self, self.top),
        }
    }

    fn dfs_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        fn walk(a: &Arena, id: usize, out: &mut Vec<usize>) {
            out.push(id);
            for &c in &a.children[id] {
                walk(a, c, out);
            }
        }
        walk(self, self.top, &mut out);
        out
    }

    fn parent_slot(&self, id: usize) -> Option<(usize, usize)> {
        for (p, cs) in self.children.iter().enumerate() {
            if let Some(pos) = cs.iter().position(|&c| c == id) {
                return Some((p, pos));
            }
        }
        None
    }

    fn find_label(&self, label: usize) -> usize {
        self.kinds
            .iter()
            .position(|k| *k == Some(label))
            .expect("label present")
    }

    /// Contour-ordered insertion slots over the subtree at `start`:
    /// (vertex, position) pairs where new children may be attached.
    fn contour_gaps(&self, start: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        fn walk(a: &Arena, id: usize, out: &mut Vec<(usize, usize)>) {
            out.push((id, 0));
            for (j, &c) in a.children[id].iter().enumerate() {
                walk(a, c, out);
                out.push((id, j + 1));
            }
        }
        walk(self, start, &mut out);
        out
    }
}

/// Parity (as ±1) of the permutation taking `word` to `canonical`.
fn reorder_sign(word: &[usize], canonical: &[usize]) -> i64 {
    assert_eq!(word.len(), canonical.len());
    let pos: BTreeMap<usize, usize> = canonical.iter().copied().zip(0..).collect();
    let perm: Vec<usize> = word.iter().map(|id| pos[id]).collect();
    let mut inversions = 0usize;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// The differential: one term per way of expanding a tree by a single
/// neutral vertex so that contracting the new edge gives the tree back.
/// For each vertex v with children d₁…d_s, a new neutral vertex either
/// captures a consecutive block of ≥ 2 children from below (a neutral v
/// must keep ≥ 1 child), or — for labeled v only, since for a neutral v
/// this would expand the same edge twice — takes v's place while v descends
/// into it keeping a consecutive block d_{a+1}…d_b (the new vertex needs
/// ≥ 1 child besides v).  The new edge is written first in the orientation
/// word; in the splitting case the persisting parent-slot edge is the one
/// into the new vertex, and the new edge is the one into v.
pub fn brace_differential(e: &BraceElement) -> BraceElement {
    let mut out = BraceElement::zero(e.arity);
    for (t, coeff) in e.terms() {
        let base = Arena::from_tree(t);
        let old_word = base.dfs_order();
        for v in 0..base.kinds.len() {
            let s = base.children[v].len();
            let v_neutral = base.kinds[v].is_none();
            // Block capture below v: new edge is the one into w.
            for l in 0..s {
                for r in (l + 2)..=s {
                    if v_neutral && r - l == s {
                        continue;
                    }
                    let mut a = base.clone();
                    let w = a.kinds.len();
                    a.kinds.push(None);
                    let block: Vec<usize> = a.children[v][l..r].to_vec();
                    a.children.push(block);
                    a.children[v].splice(l..r, [w]);
                    let mut word = Vec::with_capacity(old_word.len() + 1);
                    word.push(w);
                    word.extend_from_slice(&old_word);
                    add_signed(&mut out, &a, word, coeff);
                }
            }
            if v_neutral {
                continue;
            }
            // Splitting from above: new neutral w replaces v, with children
            // d₁…d_a, v, d_{b+1}…d_s; v keeps d_{a+1}…d_b.  The edge that
            // used to point at v now points at w; the edge into v is new.
            for a_cut in 0..=s {
                for b_cut in a_cut..=s {
                    if a_cut + (s - b_cut) == 0 {
                        continue;
                    }
                    let mut a = base.clone();
                    let w = a.kinds.len();
                    a.kinds.push(None);
                    let kids = a.children[v].clone();
                    let mut w_children: Vec<usize> = kids[..a_cut].to_vec();
                    w_children.push(v);
                    w_children.extend_from_slice(&kids[b_cut..]);
                    a.children.push(w_children);
                    a.children[v] = kids[a_cut..b_cut].to_vec();
                    match base.parent_slot(v) {
                        Some((p, pos)) => a.children[p][pos] = w,
                        None => a.top = w,
                    }
                    let mut word = Vec::with_capacity(old_word.len() + 1);
                    word.push(v);
                    word.extend(old_word.iter().map(|&id| if id == v { w } else { id }));
                    add_signed(&mut out, &a, word, coeff);
                }
            }
        }
    }
    out
}

fn add_signed(out: &mut BraceElement, arena: &Arena, word: Vec<usize>, coeff: &Scalar) {
    let canonical = arena.dfs_order();
    let sign = reorder_sign(&word, &canonical);
    out.add_term(arena.to_tree(), coeff * int(sign));
}

/// Operadic composition a ∘ᵢ b (arities m, k): the vertex labeled i of each
/// a-tree is replaced by each b-tree, its children grafted onto the b-part in
/// every planar-compatible way.  See the module docs for the sign rule.
pub fn brace_compose(a: &BraceElement, i: usize, b: &BraceElement) -> BraceElement {
    let (m, k) = (a.arity, b.arity);
    assert!((1..=m).contains(&i), "slot {i} out of range 1..={m}");
    let mut out = BraceElement::zero(m + k - 1);
    for (ta, ca) in a.terms() {
        let ta = ta.map_labels(&|j| if j > i { j + k - 1 } else { j });
        for (tb, cb) in b.terms() {
            let tb = tb.map_labels(&|j| j + i - 1);
            let coeff = ca * cb;
            graft_all(&ta, i, &tb, &coeff, &mut out);
        }
    }
    out
}

fn graft_all(ta: &BraceTree, slot: usize, tb: &BraceTree, coeff: &Scalar, out: &mut BraceElement) {
    let arena_a = Arena::from_tree(ta);
    let arena_b = Arena::from_tree(tb);
    let vi = arena_a.find_label(slot);
    let orphans: Vec<usize> = arena_a.children[vi].clone();

    // Merge arenas; b's ids get offset.
    let offset = arena_a.kinds.len();
    let mut merged = arena_a.clone();
    merged
        .kinds
        .extend(arena_b.kinds.iter().cloned());
    merged.children.extend(
        arena_b
            .children
            .iter()
            .map(|cs| cs.iter().map(|c| c + offset).collect::<Vec<_>>()),
    );
    let top_b = arena_b.top + offset;
    match merged.parent_slot(vi) {
        Some((p, pos)) => merged.children[p][pos] = top_b,
        None => merged.top = top_b,
    }
    merged.children[vi].clear();

    // Orientation word: a's word with the slot edge replaced by the edge
    // into b's top vertex, then b's word without its root edge.
    let mut word: Vec<usize> = arena_a
        .dfs_order()
        .into_iter()
        .map(|id| if id == vi { top_b } else { id })
        .collect();
    let word_b = arena_b.dfs_order();
    debug_assert_eq!(word_b[0] + offset, top_b);
    word.extend(word_b[1..].iter().map(|id| id + offset));

    // Attach the orphans to the b-part in all planar-compatible ways.
    let gaps = merged.contour_gaps(top_b);
    let mut choice = vec![0usize; orphans.len()];
    loop {
        let mut candidate = merged.clone();
        // Insert per gap from the rightmost gap index so positions stay valid.
        for g in (0..gaps.len()).rev() {
            let block: Vec<usize> = choice
                .iter()
                .zip(&orphans)
                .filter(|&(&c, _)| c == g)
                .map(|(_, &o)| o)
                .collect();
            if block.is_empty() {
                continue;
            }
            let (vertex, pos) = gaps[g];
            let target = &mut candidate.children[vertex];
            target.splice(pos..pos, block);
        }
        let canonical = candidate.dfs_order();
        let sign = reorder_sign(&word, &canonical);
        out.add_term(candidate.to_tree(), coeff * int(sign));

        // Next weakly increasing assignment.
        let mut idx = orphans.len();
        loop {
            if idx == 0 {
                return;
            }
            idx -= 1;
            if choice[idx] + 1 < gaps.len() {
                choice[idx] += 1;
                for j in idx + 1..orphans.len() {
                    choice[j] = choice[idx];
                }
                break;
            }
        }
    }
}

/// Trees with d²(T) ≠ 0 among the enumerated basis (expected: none).
pub fn check_d_squared(n: usize, max_neutral: usize) -> Vec<BraceTree> {
    enumerate_brace_trees(n, max_neutral)
        .into_iter()
        .filter(|t| {
            let dd = brace_differential(&brace_differential(&BraceElement::tree(t.clone())));
            !dd.is_zero()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn t_id() -> BraceTree {
        BraceTree::new(BraceNode::lab(1, vec![])).unwrap()
    }

    fn t_chain() -> BraceTree {
        // root -> 1 -> 2
        BraceTree::new(BraceNode::lab(1, vec![BraceNode::lab(2, vec![])])).unwrap()
    }

    fn t_chain_21() -> BraceTree {
        BraceTree::new(BraceNode::lab(2, vec![BraceNode::lab(1, vec![])])).unwrap()
    }

    fn t_cup() -> BraceTree {
        BraceTree::new(BraceNode::nu(vec![
            BraceNode::lab(1, vec![]),
            BraceNode::lab(2, vec![]),
        ]))
        .unwrap()
    }

    fn t_cup_opp() -> BraceTree {
        BraceTree::new(BraceNode::nu(vec![
            BraceNode::lab(2, vec![]),
            BraceNode::lab(1, vec![]),
        ]))
        .unwrap()
    }

    #[test]
    fn enumeration_small_cases() {
        assert_eq!(enumerate_brace_trees(1, 0), vec![t_id()]);
        assert_eq!(enumerate_brace_trees(1, 3), vec![t_id()]);
        assert_eq!(enumerate_brace_trees(2, 0), vec![t_chain(), t_chain_21()]);
        let n2 = enumerate_brace_trees(2, 1);
        assert_eq!(n2.len(), 4);
        assert!(n2.contains(&t_cup()));
        assert!(n2.contains(&t_cup_opp()));
        // All labeled, n=3: six chains and six cherries.
        assert_eq!(enumerate_brace_trees(3, 0).len(), 12);
    }

    #[test]
    fn enumeration_is_valid_and_distinct() {
        for (n, cap) in [(2, 2), (3, 2), (4, 1)] {
            let trees = enumerate_brace_trees(n, cap);
            let set: BTreeSet<BraceTree> = trees.iter().cloned().collect();
            assert_eq!(set.len(), trees.len(), "duplicates at n={n} cap={cap}");
            for t in &trees {
                assert_eq!(t.validate().unwrap(), n);
                assert!(t.neutral_count() <= cap);
                assert_eq!(t.edge_count(), n + t.neutral_count() - 1);
            }
        }
    }

    #[test]
    fn degrees_of_reference_trees() {
        assert_eq!(t_chain().degree(), -1);
        assert_eq!(t_chain_21().degree(), -1);
        assert_eq!(t_cup().degree(), 0);
        assert_eq!(t_cup_opp().degree(), 0);
        assert_eq!(t_id().degree(), 0);
    }

    #[test]
    fn differential_of_identity_vanishes() {
        assert!(brace_differential(&BraceElement::tree(t_id())).is_zero());
    }

    #[test]
    fn differential_of_chain_is_cup_difference() {
        let d = brace_differential(&BraceElement::tree(t_chain()));
        let mut want = BraceElement::zero(2);
        want.add_term(t_cup_opp(), int(1));
        want.add_term(t_cup(), int(-1));
        assert_eq!(d, want);
        // The symmetric combination is a cycle.
        let sym = BraceElement::tree(t_chain()).add(&BraceElement::tree(t_chain_21()));
        assert!(brace_differential(&sym).is_zero());
    }

    #[test]
    fn differential_raises_degree_by_one() {
        for t in enumerate_brace_trees(3, 1) {
            let d = brace_differential(&BraceElement::tree(t.clone()));
            for (u, _) in d.terms() {
                assert_eq!(u.degree(), t.degree() + 1, "tree {}", t.render());
                u.validate().unwrap();
            }
        }
    }

    #[test]
    fn d_squared_vanishes_up_to_arity_three() {
        for n in 1..=3 {
            let violations = check_d_squared(n, 2);
            assert!(
                violations.is_empty(),
                "d² ≠ 0 on {:?}",
                violations.iter().map(|t| t.render()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn composition_with_unit_is_identity() {
        for t in enumerate_brace_trees(3, 1) {
            let e = BraceElement::tree(t.clone());
            let unit = BraceElement::tree(t_id());
            for i in 1..=3 {
                assert_eq!(brace_compose(&e, i, &unit), e, "t ∘{i} id");
            }
            assert_eq!(brace_compose(&unit, 1, &e), e, "id ∘1 t");
        }
    }

    #[test]
    fn composition_degree_is_additive() {
        for ta in enumerate_brace_trees(2, 1) {
            for tb in enumerate_brace_trees(2, 1) {
                for i in 1..=2 {
                    let c = brace_compose(
                        &BraceElement::tree(ta.clone()),
                        i,
                        &BraceElement::tree(tb.clone()),
                    );
                    for (u, _) in c.terms() {
                        assert_eq!(u.degree(), ta.degree() + tb.degree());
                        u.validate().unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn chain_composed_with_itself_has_three_terms() {
        // The brace identity (x{y}){z} = x{z,y} + x{y{z}} + x{y,z} at tree level.
        let c = brace_compose(&BraceElement::tree(t_chain()), 1, &BraceElement::tree(t_chain()));
        assert_eq!(c.num_terms(), 3);
        for (t, coeff) in c.terms() {
            assert_eq!(t.degree(), -2);
            assert!(coeff == &int(1) || coeff == &int(-1));
        }
    }

    #[test]
    fn differential_is_a_derivation() {
        let mut rng = StdRng::seed_from_u64(31);
        let pool2: Vec<BraceTree> = enumerate_brace_trees(2, 1);
        for _ in 0..12 {
            let ta = pool2[rng.gen_range(0..pool2.len())].clone();
            let tb = pool2[rng.gen_range(0..pool2.len())].clone();
            let a = BraceElement::tree(ta.clone());
            let b = BraceElement::tree(tb.clone());
            for i in 1..=2 {
                let lhs = brace_differential(&brace_compose(&a, i, &b));
                let rhs = brace_compose(&brace_differential(&a), i, &b).add(
                    &brace_compose(&a, i, &brace_differential(&b))
                        .scale(&crate::scalar::sign_pow(ta.degree())),
                );
                assert_eq!(
                    lhs,
                    rhs,
                    "derivation failed for {} ∘{i} {}",
                    ta.render(),
                    tb.render()
                );
            }
        }
    }

    #[test]
    fn composition_satisfies_operad_axioms() {
        let mut rng = StdRng::seed_from_u64(33);
        let pool2 = enumerate_brace_trees(2, 1);
        for _ in 0..10 {
            let a = BraceElement::tree(pool2[rng.gen_range(0..pool2.len())].clone());
            let b = BraceElement::tree(pool2[rng.gen_range(0..pool2.len())].clone());
            let c = BraceElement::tree(pool2[rng.gen_range(0..pool2.len())].clone());
            // Nested: (a ∘ᵢ b) ∘_{i+j-1} c = a ∘ᵢ (b ∘ⱼ c).
            for i in 1..=2 {
                for j in 1..=2 {
                    let lhs = brace_compose(&brace_compose(&a, i, &b), i + j - 1, &c);
                    let rhs = brace_compose(&a, i, &brace_compose(&b, j, &c));
                    assert_eq!(lhs, rhs, "nested i={i} j={j}");
                }
            }
            // Parallel (j < i): (a ∘ᵢ b) ∘ⱼ c = (-1)^{|b||c|} (a ∘ⱼ c) ∘_{i+k-1} b.
            let (i, j, k) = (2usize, 1usize, 2usize);
            let lhs = brace_compose(&brace_compose(&a, i, &b), j, &c);
            let sign = crate::scalar::sign_pow(
                b.degree().unwrap() * c.degree().unwrap(),
            );
            let rhs = brace_compose(&brace_compose(&a, j, &c), i + k - 1, &b).scale(&sign);
            assert_eq!(lhs, rhs, "parallel");
        }
    }

    #[test]
    fn composition_is_equivariant() {
        // act(σ, T) ∘ᵢ T' equals a relabeling of T ∘_{σ⁻¹(i)} T'.
        let mut rng = StdRng::seed_from_u64(32);
        let pool = enumerate_brace_trees(3, 1);
        let pool2 = enumerate_brace_trees(2, 1);
        for _ in 0..10 {
            let t = pool[rng.gen_range(0..pool.len())].clone();
            let t2 = pool2[rng.gen_range(0..pool2.len())].clone();
            let (m, k) = (3usize, 2usize);
            for sigma in Permutation::all(m) {
                for i in 1..=m {
                    let lhs = brace_compose(
                        &act(&sigma, &BraceElement::tree(t.clone())),
                        i,
                        &BraceElement::tree(t2.clone()),
                    );
                    let p = sigma.inverse().image(i - 1) + 1; // σ(p) = i
                    let inner = brace_compose(
                        &BraceElement::tree(t.clone()),
                        p,
                        &BraceElement::tree(t2.clone()),
                    );
                    // Labels of T ∘_p T': T-labels j≠p appear as j (j<p) or
                    // j+k-1 (j>p); T'-labels j appear as j+p-1.  The outer
                    // relabeling must send them where the LHS puts them.
                    let mut tau = vec![0usize; m + k - 1];
                    for j in 1..=m {
                        if j == p {
                            continue;
                        }
                        let from = if j < p { j } else { j + k - 1 };
                        let sj = sigma.image(j - 1) + 1;
                        let to = if sj < i { sj } else { sj + k - 1 };
                        tau[from - 1] = to - 1;
                    }
                    for j in 1..=k {
                        tau[j + p - 2] = j + i - 2;
                    }
                    let tau = Permutation::new(tau).unwrap();
                    assert_eq!(lhs, act(&tau, &inner), "σ={sigma:?} i={i}");
                }
            }
        }
    }

    #[test]
    fn json_round_trip_and_shape() {
        let t = t_cup();
        let v = t.to_json();
        assert_eq!(v["kind"], "root");
        assert_eq!(v["children"][0]["kind"], "nu");
        assert_eq!(v["children"][0]["children"][0]["label"], 1);
        assert_eq!(BraceTree::from_json(&v).unwrap(), t);
        for tree in enumerate_brace_trees(3, 1) {
            assert_eq!(BraceTree::from_json(&tree.to_json()).unwrap(), tree);
        }
    }

    #[test]
    fn renderings() {
        assert_eq!(t_chain().render(), "1(2)");
        assert_eq!(t_cup().render(), "*(1,2)");
        let art = t_cup().render_ascii();
        assert!(art.contains("`-- *"));
        assert!(art.contains("|-- 1"));
    }

    #[test]
    fn condition_one_rejects_small_neutral() {
        assert!(BraceTree::new(BraceNode::nu(vec![BraceNode::lab(1, vec![])])).is_err());
    }
}
