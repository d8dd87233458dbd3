//! Free Gerstenhaber-type algebra on generators b₁, b₂, … of degree 0, with
//! a commutative product of degree +2 and a symmetric bracket of degree +1:
//!
//! * uv = (-1)^{|u||v|} vu,
//! * {u,v} = (-1)^{|u||v|} {v,u},
//! * {{u,v},w} + (-1)^{|v||w|} {{u,w},v} + (-1)^{|u|(|v|+|w|)} {{v,w},u} = 0,
//! * {u,vw} = {u,v}w + (-1)^{(|u|+1)|v|} v{u,w}.
//!
//! The multilinear component on b₁,…,bₙ has dimension n!.  Normal-form
//! monomials are products of bracket words: each word lists its labels with
//! the largest label last (a right-nested bracket), and the factors of a
//! product are sorted by their largest label.
//!
//! Normalization routes every bracket word through the free associative
//! superalgebra on odd letters cᵢ via {u,v} ↦ (-1)^{len u + 1}·[U,V], the
//! standard degree-shift embedding.  Coordinates on combed words are read off
//! the associative words ending in the largest letter (the transition matrix
//! is the identity there), and the remainder is asserted to vanish, so every
//! call cross-checks itself.

use crate::graded::{koszul_sign, sort_with_koszul, Degree, Permutation};
use crate::linalg::ExactMatrix;
use crate::scalar::{int, is_zero, one, parse_scalar, scalar_to_string, Scalar};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

/// Expression in generators: leaves are 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GerExpr {
    Gen(usize),
    Prod(Box<GerExpr>, Box<GerExpr>),
    Br(Box<GerExpr>, Box<GerExpr>),
}

impl GerExpr {
    pub fn gen(i: usize) -> Self {
        GerExpr::Gen(i)
    }

    pub fn prod(u: GerExpr, v: GerExpr) -> Self {
        GerExpr::Prod(Box::new(u), Box::new(v))
    }

    pub fn br(u: GerExpr, v: GerExpr) -> Self {
        GerExpr::Br(Box::new(u), Box::new(v))
    }

    pub fn degree(&self) -> Degree {
        match self {
            GerExpr::Gen(_) => 0,
            GerExpr::Prod(u, v) => u.degree() + v.degree() + 2,
            GerExpr::Br(u, v) => u.degree() + v.degree() + 1,
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut Vec<usize>) {
        match self {
            GerExpr::Gen(i) => out.push(*i),
            GerExpr::Prod(u, v) | GerExpr::Br(u, v) => {
                u.collect_labels(out);
                v.collect_labels(out);
            }
        }
    }

    fn map_labels(&self, f: &impl Fn(usize) -> usize) -> GerExpr {
        match self {
            GerExpr::Gen(i) => GerExpr::Gen(f(*i)),
            GerExpr::Prod(u, v) => GerExpr::prod(u.map_labels(f), v.map_labels(f)),
            GerExpr::Br(u, v) => GerExpr::br(u.map_labels(f), v.map_labels(f)),
        }
    }

    fn contains_label(&self, target: usize) -> bool {
        match self {
            GerExpr::Gen(i) => *i == target,
            GerExpr::Prod(u, v) | GerExpr::Br(u, v) => {
                u.contains_label(target) || v.contains_label(target)
            }
        }
    }

    /// Replaces the leaf labeled `target` by `replacement`.
    fn substitute(&self, target: usize, replacement: &GerExpr) -> GerExpr {
        match self {
            GerExpr::Gen(i) => {
                if *i == target {
                    replacement.clone()
                } else {
                    GerExpr::Gen(*i)
                }
            }
            GerExpr::Prod(u, v) => GerExpr::prod(
                u.substitute(target, replacement),
                v.substitute(target, replacement),
            ),
            GerExpr::Br(u, v) => GerExpr::br(
                u.substitute(target, replacement),
                v.substitute(target, replacement),
            ),
        }
    }
}

/// Normal-form monomial: bracket words (labels, largest last) sorted by
/// largest label.  A word (g₁,…,g_p) denotes {b_{g₁},{…,{b_{g_{p-1}},b_{g_p}}…}}.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GerMonomial(Vec<Vec<usize>>);

impl GerMonomial {
    pub fn new(factors: Vec<Vec<usize>>) -> Result<Self, String> {
        let m = GerMonomial(factors);
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), String> {
        if self.0.is_empty() {
            return Err("monomial needs at least one factor".into());
        }
        let mut seen = BTreeSet::new();
        let mut prev_last = 0usize;
        for w in &self.0 {
            let Some(&last) = w.last() else {
                return Err("empty factor word".into());
            };
            if w.iter().any(|&g| g > last) {
                return Err(format!("word {w:?} must end in its largest label"));
            }
            for &g in w {
                if g == 0 || !seen.insert(g) {
                    return Err(format!("label {g} repeated or zero"));
                }
            }
            if last <= prev_last {
                return Err("factors must be sorted by largest label".into());
            }
            prev_last = last;
        }
        Ok(())
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.0
    }

    /// Number of generators.
    pub fn weight(&self) -> usize {
        self.0.iter().map(|w| w.len()).sum()
    }

    pub fn bracket_count(&self) -> usize {
        self.weight() - self.0.len()
    }

    /// n generators in t factors carry degree n + t - 2.
    pub fn degree(&self) -> Degree {
        (self.weight() + self.0.len()) as Degree - 2
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn to_expr(&self) -> GerExpr {
        let mut factors = self.0.iter().map(|w| word_to_expr(w));
        let first = factors.next().expect("nonempty monomial");
        factors.fold(first, GerExpr::prod)
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|w| render_word(w))
            .collect::<Vec<_>>()
            .join("*")
    }

    pub fn to_json(&self) -> Value {
        Value::Array(self.0.iter().map(|w| word_to_json(w)).collect())
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let arr = v.as_array().ok_or("monomial must be an array")?;
        let mut factors = Vec::new();
        for f in arr {
            factors.push(word_from_json(f)?);
        }
        GerMonomial::new(factors)
    }
}

fn word_to_expr(w: &[usize]) -> GerExpr {
    let mut it = w.iter().rev();
    let mut expr = GerExpr::Gen(*it.next().expect("nonempty word"));
    for &g in it {
        expr = GerExpr::br(GerExpr::Gen(g), expr);
    }
    expr
}

fn render_word(w: &[usize]) -> String {
    if w.len() == 1 {
        return format!("b{}", w[0]);
    }
    let mut s = format!("b{}", w[w.len() - 1]);
    for &g in w[..w.len() - 1].iter().rev() {
        s = format!("{{b{g},{s}}}");
    }
    s
}

fn word_to_json(w: &[usize]) -> Value {
    fn tail(rest: &[usize]) -> Value {
        if rest.len() == 1 {
            json!(rest[0])
        } else {
            json!(["br", [rest[0], tail(&rest[1..])]])
        }
    }
    if w.len() == 1 {
        json!(["b", [w[0]]])
    } else {
        json!(["br", [w[0], tail(&w[1..])]])
    }
}

fn word_from_json(v: &Value) -> Result<Vec<usize>, String> {
    fn tail(v: &Value, out: &mut Vec<usize>) -> Result<(), String> {
        if let Some(n) = v.as_u64() {
            out.push(n as usize);
            return Ok(());
        }
        let arr = v.as_array().ok_or("bad bracket word")?;
        if arr.len() != 2 || arr[0] != json!("br") {
            return Err(format!("bad bracket word: {v}"));
        }
        let pair = arr[1].as_array().ok_or("bad bracket word")?;
        if pair.len() != 2 {
            return Err("bracket takes two arguments".into());
        }
        let head = pair[0]
            .as_u64()
            .ok_or("bracket head must be a label in a combed word")?;
        out.push(head as usize);
        tail(&pair[1], out)
    }
    let arr = v.as_array().ok_or("factor must be an array")?;
    if arr.len() == 2 && arr[0] == json!("b") {
        let lab = arr[1]
            .as_array()
            .and_then(|a| a.first())
            .and_then(|x| x.as_u64())
            .ok_or("bad generator factor")?;
        return Ok(vec![lab as usize]);
    }
    let mut out = Vec::new();
    tail(v, &mut out)?;
    Ok(out)
}

/// Linear combination of normal-form monomials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GerElement {
    terms: BTreeMap<GerMonomial, Scalar>,
}

impl GerElement {
    pub fn zero() -> Self {
        GerElement::default()
    }

    pub fn monomial(q: GerMonomial, c: Scalar) -> Self {
        let mut e = GerElement::zero();
        e.add_term(q, c);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&GerMonomial, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, q: &GerMonomial) -> Scalar {
        self.terms.get(q).cloned().unwrap_or_else(crate::scalar::zero)
    }

    pub fn add_term(&mut self, q: GerMonomial, c: Scalar) {
        if is_zero(&c) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(q) {
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

    pub fn add(&self, other: &GerElement) -> GerElement {
        let mut out = self.clone();
        for (q, c) in &other.terms {
            out.add_term(q.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &GerElement) -> GerElement {
        self.add(&other.scale(&int(-1)))
    }

    pub fn scale(&self, s: &Scalar) -> GerElement {
        if is_zero(s) {
            return GerElement::zero();
        }
        GerElement {
            terms: self.terms.iter().map(|(q, c)| (q.clone(), c * s)).collect(),
        }
    }

    /// Common label set of all monomials; operad elements use labels 1..=n.
    pub fn arity(&self) -> Option<usize> {
        let mut labels: Option<BTreeSet<usize>> = None;
        for q in self.terms.keys() {
            let l = q.labels();
            match &labels {
                None => labels = Some(l),
                Some(prev) => {
                    if *prev != l {
                        return None;
                    }
                }
            }
        }
        let labels = labels?;
        let n = labels.len();
        (labels == (1..=n).collect()).then_some(n)
    }

    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (k, (q, c)) in self.terms.iter().enumerate() {
            let cs = scalar_to_string(c);
            let body = q.render();
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

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(q, c)| {
                    json!({
                        "coeff": scalar_to_string(c),
                        "monomial": q.to_json(),
                    })
                })
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let arr = v.as_array().ok_or("element must be an array")?;
        let mut out = GerElement::zero();
        for t in arr {
            let c = t
                .get("coeff")
                .and_then(|x| x.as_str())
                .ok_or("term needs a coeff string")?;
            let q = t.get("monomial").ok_or("term needs a monomial")?;
            out.add_term(GerMonomial::from_json(q)?, parse_scalar(c)?);
        }
        Ok(out)
    }
}

/// Bracket word as a binary tree (intermediate form during normalization).
#[derive(Debug, Clone)]
enum Word {
    Leaf(usize),
    Br(Box<Word>, Box<Word>),
}

impl Word {
    fn len(&self) -> usize {
        match self {
            Word::Leaf(_) => 1,
            Word::Br(u, v) => u.len() + v.len(),
        }
    }

    fn degree(&self) -> Degree {
        self.len() as Degree - 1
    }

    fn combed(labels: &[usize]) -> Word {
        let mut it = labels.iter().rev();
        let mut w = Word::Leaf(*it.next().expect("nonempty word"));
        for &g in it {
            w = Word::Br(Box::new(Word::Leaf(g)), Box::new(w));
        }
        w
    }
}

fn list_degree(l: &[Word]) -> Degree {
    l.iter().map(|w| w.degree()).sum::<Degree>() + 2 * (l.len() as Degree - 1)
}

/// Expansion in the free associative superalgebra on odd letters: maps each
/// associative word (label sequence) to its coefficient.
fn u_expand(w: &Word) -> BTreeMap<Vec<usize>, Scalar> {
    match w {
        Word::Leaf(i) => {
            let mut m = BTreeMap::new();
            m.insert(vec![*i], one());
            m
        }
        Word::Br(u, v) => {
            let eu = u_expand(u);
            let ev = u_expand(v);
            let (lu, lv) = (u.len() as i64, v.len() as i64);
            let outer = crate::scalar::sign_pow(lu + 1);
            let inner = crate::scalar::sign_pow(lu * lv);
            let mut out: BTreeMap<Vec<usize>, Scalar> = BTreeMap::new();
            for (wu, cu) in &eu {
                for (wv, cv) in &ev {
                    let mut uv = wu.clone();
                    uv.extend_from_slice(wv);
                    add_word(&mut out, uv, cu * cv * &outer);
                    let mut vu = wv.clone();
                    vu.extend_from_slice(wu);
                    add_word(&mut out, vu, cu * cv * &outer * &inner * int(-1));
                }
            }
            out
        }
    }
}

fn add_word(map: &mut BTreeMap<Vec<usize>, Scalar>, w: Vec<usize>, c: Scalar) {
    if is_zero(&c) {
        return;
    }
    use std::collections::btree_map::Entry;
    match map.entry(w) {
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

/// Rewrites a bracket word as a combination of combed words.  Coordinates are
/// the coefficients of associative words ending in the largest label; the
/// expansion of a combed word has coefficient 1 on its own word and 0 on the
/// other words ending in the largest label, so this is exact.  The remainder
/// check below re-verifies that on every call.
fn comb(w: &Word) -> Vec<(Scalar, Vec<usize>)> {
    let expansion = u_expand(w);
    let max = expansion
        .keys()
        .next()
        .and_then(|word| word.iter().max())
        .copied();
    let Some(max) = max else {
        return Vec::new();
    };
    let mut coords = Vec::new();
    let mut remainder = expansion.clone();
    for (word, c) in &expansion {
        if *word.last().expect("nonempty word") == max {
            coords.push((c.clone(), word.clone()));
        }
    }
    for (c, word) in &coords {
        for (aw, ac) in u_expand(&Word::combed(word)) {
            add_word(&mut remainder, aw, -c * ac);
        }
    }
    assert!(
        remainder.is_empty(),
        "bracket word outside the combed-word span: {w:?}"
    );
    coords
}

/// Expands an expression into coefficient × ordered factor lists, applying
/// the Leibniz rules to remove products from inside brackets.
fn expand(e: &GerExpr) -> Vec<(Scalar, Vec<Word>)> {
    match e {
        GerExpr::Gen(i) => vec![(one(), vec![Word::Leaf(*i)])],
        GerExpr::Prod(u, v) => {
            let eu = expand(u);
            let ev = expand(v);
            let mut out = Vec::new();
            for (cu, lu) in &eu {
                for (cv, lv) in &ev {
                    let mut l = lu.clone();
                    l.extend(lv.iter().cloned());
                    out.push((cu * cv, l));
                }
            }
            out
        }
        GerExpr::Br(u, v) => {
            let eu = expand(u);
            let ev = expand(v);
            let mut out = Vec::new();
            for (cu, lu) in &eu {
                for (cv, lv) in &ev {
                    for (sign, l) in bracket_lists(lu, lv) {
                        out.push((cu * cv * int(sign), l));
                    }
                }
            }
            out
        }
    }
}

/// Bracket of two products of factors, reduced by
///   {u, vw} = {u,v}w + (-1)^{(|u|+1)|v|} v{u,w}
///   {uv, w} = (-1)^{|v||w|} {u,w}v + (-1)^{|u|} u{v,w}
/// until both arguments are single words.
fn bracket_lists(f: &[Word], g: &[Word]) -> Vec<(i64, Vec<Word>)> {
    if f.len() == 1 && g.len() == 1 {
        return vec![(
            1,
            vec![Word::Br(Box::new(f[0].clone()), Box::new(g[0].clone()))],
        )];
    }
    let mut out = Vec::new();
    if g.len() > 1 {
        let v = &g[..1];
        let w = &g[1..];
        for (s, l) in bracket_lists(f, v) {
            let mut l2 = l;
            l2.extend(w.iter().cloned());
            out.push((s, l2));
        }
        let sign = if ((list_degree(f) + 1) * list_degree(v)) % 2 == 0 {
            1
        } else {
            -1
        };
        for (s, l) in bracket_lists(f, w) {
            let mut l2 = vec![g[0].clone()];
            l2.extend(l);
            out.push((sign * s, l2));
        }
    } else {
        let u = &f[..1];
        let v = &f[1..];
        let sign1 = if (list_degree(v) * list_degree(g)) % 2 == 0 {
            1
        } else {
            -1
        };
        for (s, l) in bracket_lists(u, g) {
            let mut l2 = l;
            l2.extend(v.iter().cloned());
            out.push((sign1 * s, l2));
        }
        let sign2 = if list_degree(u) % 2 == 0 { 1 } else { -1 };
        for (s, l) in bracket_lists(v, g) {
            let mut l2 = vec![f[0].clone()];
            l2.extend(l);
            out.push((sign2 * s, l2));
        }
    }
    out
}

/// Normal form of a multilinear expression (no repeated labels per term).
pub fn normalize(e: &GerExpr) -> GerElement {
    let mut labels = e.labels();
    labels.sort_unstable();
    let distinct = labels.windows(2).all(|w| w[0] != w[1]);
    assert!(distinct, "normalize requires distinct labels, got {labels:?}");

    let mut out = GerElement::zero();
    for (c, factor_list) in expand(e) {
        // Comb each factor, then distribute.
        let combed: Vec<Vec<(Scalar, Vec<usize>)>> =
            factor_list.iter().map(comb).collect();
        distribute(&combed, 0, &c, &mut Vec::new(), &mut out);
    }
    out
}

fn distribute(
    combed: &[Vec<(Scalar, Vec<usize>)>],
    idx: usize,
    coeff: &Scalar,
    picked: &mut Vec<Vec<usize>>,
    out: &mut GerElement,
) {
    if idx == combed.len() {
        // Sort factors by largest (= last) label; swaps cost Koszul signs in
        // the word degrees len-1.
        let items: Vec<(usize, Degree, Vec<usize>)> = picked
            .iter()
            .map(|w| (*w.last().expect("nonempty"), w.len() as Degree - 1, w.clone()))
            .collect();
        let (sign, sorted) = sort_with_koszul(&items);
        let q = GerMonomial::new(sorted).expect("combed factors form a monomial");
        out.add_term(q, coeff * int(sign));
        return;
    }
    for (c, word) in &combed[idx] {
        picked.push(word.clone());
        distribute(combed, idx + 1, &(coeff * c), picked, out);
        picked.pop();
    }
}

/// Basis of the multilinear component on labels 1..=n: one monomial per set
/// partition of {1,…,n} with an ordering of each block's non-maximal labels.
/// Listed by ascending bracket count, then lexicographically.
pub fn basis(n: usize) -> Vec<GerMonomial> {
    assert!(n >= 1);
    let mut partitions = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    collect_partitions(1, n, &mut blocks, &mut partitions);
    let mut out = Vec::new();
    for partition in &partitions {
        let per_block: Vec<Vec<Vec<usize>>> = partition.iter().map(|b| block_words(b)).collect();
        let mut current: Vec<Vec<usize>> = Vec::new();
        distribute_blocks(&per_block, 0, &mut current, &mut out);
    }
    for q in &mut out {
        q.0.sort_by_key(|w| *w.last().expect("nonempty"));
    }
    out.sort_by_key(|q| (q.bracket_count(), q.clone()));
    out
}

fn collect_partitions(
    next: usize,
    n: usize,
    blocks: &mut Vec<Vec<usize>>,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    if next > n {
        out.push(blocks.clone());
        return;
    }
    for i in 0..blocks.len() {
        blocks[i].push(next);
        collect_partitions(next + 1, n, blocks, out);
        blocks[i].pop();
    }
    blocks.push(vec![next]);
    collect_partitions(next + 1, n, blocks, out);
    blocks.pop();
}

/// All combed words on a block: orderings of the non-maximal labels, max last.
fn block_words(block: &[usize]) -> Vec<Vec<usize>> {
    let max = *block.iter().max().expect("nonempty block");
    let rest: Vec<usize> = block.iter().copied().filter(|&g| g != max).collect();
    let mut out = Vec::new();
    for p in Permutation::all(rest.len()) {
        let mut w = p.apply(&rest);
        w.push(max);
        out.push(w);
    }
    out
}

fn distribute_blocks(
    per_block: &[Vec<Vec<usize>>],
    idx: usize,
    current: &mut Vec<Vec<usize>>,
    out: &mut Vec<GerMonomial>,
) {
    if idx == per_block.len() {
        out.push(GerMonomial(current.clone()));
        return;
    }
    for w in &per_block[idx] {
        current.push(w.clone());
        distribute_blocks(per_block, idx + 1, current, out);
        current.pop();
    }
}

/// Koszul exponent for plugging an element of degree `xdeg` into the leaf
/// labeled `target`: evaluating node(α, β) as op ∘ (α ⊗ β), the map β moves
/// past α's arguments, so a plug inside α passes β and contributes
/// xdeg · deg(β).
fn plug_sign_exponent(e: &GerExpr, target: usize, xdeg: Degree) -> Degree {
    match e {
        GerExpr::Gen(_) => 0,
        GerExpr::Prod(u, v) | GerExpr::Br(u, v) => {
            if u.contains_label(target) {
                xdeg * v.degree() + plug_sign_exponent(u, target, xdeg)
            } else {
                plug_sign_exponent(v, target, xdeg)
            }
        }
    }
}

/// Operadic partial composition a ∘ᵢ b: substitutes b for label i of a and
/// shifts the remaining labels.  `m` and `k` are the arities of a and b.
/// The substitution carries the Koszul sign of `plug_sign_exponent`; the
/// other slots hold degree-0 generators and contribute nothing.
pub fn compose(a: &GerElement, m: usize, i: usize, b: &GerElement, k: usize) -> GerElement {
    assert!((1..=m).contains(&i), "slot {i} out of range 1..={m}");
    let mut out = GerElement::zero();
    for (qa, ca) in a.terms() {
        // Shift labels above i up by k-1 so the plug fits in i..i+k-1.
        let ea = qa
            .to_expr()
            .map_labels(&|j| if j > i { j + k - 1 } else { j });
        for (qb, cb) in b.terms() {
            let eb = qb.to_expr().map_labels(&|j| j + i - 1);
            let sign = crate::scalar::sign_pow(plug_sign_exponent(&ea, i, qb.degree()));
            let plugged = ea.substitute(i, &eb);
            out = out.add(&normalize(&plugged).scale(&(ca * cb * sign)));
        }
    }
    out
}

/// Relabeling action: label j becomes σ(j) (1-based), then renormalize.
/// Koszul signs appear through normalization.
pub fn act(perm: &Permutation, e: &GerElement) -> GerElement {
    let mut out = GerElement::zero();
    for (q, c) in e.terms() {
        let relabeled = q.to_expr().map_labels(&|j| perm.image(j - 1) + 1);
        out = out.add(&normalize(&relabeled).scale(c));
    }
    out
}

/// Memoized bases and composition matrices.
#[derive(Default)]
pub struct GerCache {
    bases: BTreeMap<usize, Vec<GerMonomial>>,
    indexes: BTreeMap<usize, BTreeMap<GerMonomial, usize>>,
    comp: BTreeMap<(usize, usize, usize), ExactMatrix>,
}

impl GerCache {
    pub fn new() -> Self {
        GerCache::default()
    }

    pub fn basis(&mut self, n: usize) -> &[GerMonomial] {
        self.bases.entry(n).or_insert_with(|| basis(n));
        &self.bases[&n]
    }

    pub fn index(&mut self, n: usize, q: &GerMonomial) -> usize {
        if !self.indexes.contains_key(&n) {
            let map: BTreeMap<GerMonomial, usize> = self
                .basis(n)
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, q)| (q, i))
                .collect();
            self.indexes.insert(n, map);
        }
        *self.indexes[&n]
            .get(q)
            .unwrap_or_else(|| panic!("monomial {q:?} not in basis({n})"))
    }

    /// Matrix of ∘ᵢ : basis(m) ⊗ basis(k) → basis(m+k-1); column index is
    /// (row index in basis(m)) * |basis(k)| + (row index in basis(k)).
    pub fn compose_matrix(&mut self, m: usize, i: usize, k: usize) -> &ExactMatrix {
        if !self.comp.contains_key(&(m, i, k)) {
            let rows = self.basis(m + k - 1).len();
            let cols = self.basis(m).len() * self.basis(k).len();
            let basis_m = self.basis(m).to_vec();
            let basis_k = self.basis(k).to_vec();
            let mut mat = ExactMatrix::new(rows, cols);
            for (ia, qa) in basis_m.iter().enumerate() {
                let ea = GerElement::monomial(qa.clone(), one());
                for (ib, qb) in basis_k.iter().enumerate() {
                    let eb = GerElement::monomial(qb.clone(), one());
                    let result = compose(&ea, m, i, &eb, k);
                    let col = ia * basis_k.len() + ib;
                    for (q, c) in result.terms() {
                        let row = self.index(m + k - 1, q);
                        mat.set(row, col, c.clone());
                    }
                }
            }
            self.comp.insert((m, i, k), mat);
        }
        &self.comp[&(m, i, k)]
    }
}

/// Parses expressions like `{b1,{b2,b3}}*b4 - 2*b2*{b1,b3}` into normal form.
/// Grammar: sum of terms; a term is an optional rational coefficient and a
/// `*`-chain of atoms; an atom is `bN`, `{expr,expr}`, or `(expr)`.
pub fn parse_element(input: &str) -> Result<GerElement, String> {
    let mut p = Parser {
        chars: input.chars().collect(),
        pos: 0,
    };
    let e = p.parse_sum()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(format!("unexpected input at byte {}", p.pos));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        self.skip_ws();
        let c = self.chars.get(self.pos).copied();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        match self.bump() {
            Some(got) if got == c => Ok(()),
            got => Err(format!("expected '{c}', got {got:?}")),
        }
    }

    fn parse_sum(&mut self) -> Result<GerElement, String> {
        let mut acc = GerElement::zero();
        let mut sign = one();
        match self.peek() {
            Some('-') => {
                self.bump();
                sign = -one();
            }
            Some('+') => {
                self.bump();
            }
            _ => {}
        }
        loop {
            let term = self.parse_term()?;
            acc = acc.add(&term.scale(&sign));
            match self.peek() {
                Some('+') => {
                    self.bump();
                    sign = one();
                }
                Some('-') => {
                    self.bump();
                    sign = -one();
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<GerElement, String> {
        let mut coeff = one();
        if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            coeff = self.parse_number()?;
            if self.peek() == Some('*') {
                self.bump();
            } else {
                // Bare scalar term is not meaningful in the operad component.
                return Err("a coefficient must multiply at least one atom".into());
            }
        }
        let mut elem = self.parse_atom()?;
        while self.peek() == Some('*') {
            self.bump();
            let rhs = self.parse_atom()?;
            elem = element_product(&elem, &rhs);
        }
        Ok(elem.scale(&coeff))
    }

    fn parse_number(&mut self) -> Result<Scalar, String> {
        self.skip_ws();
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == '/')
        {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        parse_scalar(&text)
    }

    fn parse_atom(&mut self) -> Result<GerElement, String> {
        match self.peek() {
            Some('b') => {
                self.bump();
                self.skip_ws();
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err("expected a label after 'b'".into());
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                let lab: usize = text.parse().map_err(|e| format!("bad label: {e}"))?;
                if lab == 0 {
                    return Err("labels are 1-based".into());
                }
                Ok(normalize(&GerExpr::Gen(lab)))
            }
            Some('{') => {
                self.bump();
                let u = self.parse_sum()?;
                self.expect(',')?;
                let v = self.parse_sum()?;
                self.expect('}')?;
                Ok(element_bracket(&u, &v))
            }
            Some('(') => {
                self.bump();
                let e = self.parse_sum()?;
                self.expect(')')?;
                Ok(e)
            }
            got => Err(format!("expected an atom, got {got:?}")),
        }
    }
}

/// Product of elements, distributing over terms.
pub fn element_product(a: &GerElement, b: &GerElement) -> GerElement {
    let mut out = GerElement::zero();
    for (qa, ca) in a.terms() {
        for (qb, cb) in b.terms() {
            let e = GerExpr::prod(qa.to_expr(), qb.to_expr());
            out = out.add(&normalize(&e).scale(&(ca * cb)));
        }
    }
    out
}

/// Bracket of elements, distributing over terms.
pub fn element_bracket(a: &GerElement, b: &GerElement) -> GerElement {
    let mut out = GerElement::zero();
    for (qa, ca) in a.terms() {
        for (qb, cb) in b.terms() {
            let e = GerExpr::br(qa.to_expr(), qb.to_expr());
            out = out.add(&normalize(&e).scale(&(ca * cb)));
        }
    }
    out
}

/// Koszul sign for permuting labeled arguments of given degrees; exposed for
/// equivariance checks.
pub fn koszul_for(perm: &Permutation, degs: &[Degree]) -> i64 {
    koszul_sign(perm, degs)
}
