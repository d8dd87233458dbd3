//! Convolution calculus for equivariant operator collections.
//!
//! An element assigns to every Gerstenhaber word of arity `n` a
//! polydifferential operator on polyvectors with `n` inputs; the whole
//! collection is required to be symmetric-group equivariant.  This module
//! provides the composition product and Lie bracket of such collections,
//! the multi-brackets of the associated homotopy Lie algebras (in two
//! flavours: the commutator algebra of coderivations front and the
//! morphism-pair convolution algebra), Maurer-Cartan residuals, polynomial
//! one-cells, and the filtration-respecting adjustment recursion.
//!
//! All arithmetic is exact and every enumeration is deterministic.

use crate::ger::{self, GerElement, GerMonomial};
use crate::graded::{koszul_sign, shuffles, Degree, Permutation};
use crate::poly::{AffineContext, PolyOp};
use crate::scalar::{int, is_zero, one, sign_pow, Scalar};
use crate::superpoly::{Mono, SuperPoly};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// Shared tables for convolution computations: the affine context plus
/// Gerstenhaber word bases (with index lookup) for every arity up to the cap.
pub struct ConvContext {
    pub affine: AffineContext,
    pub arity_cap: usize,
    bases: Vec<Vec<GerMonomial>>,
    index: Vec<BTreeMap<GerMonomial, usize>>,
}

impl ConvContext {
    pub fn new(affine: AffineContext, arity_cap: usize) -> ConvContext {
        assert!(arity_cap >= 1, "arity cap must be positive");
        let mut bases = vec![Vec::new()];
        let mut index = vec![BTreeMap::new()];
        for n in 1..=arity_cap {
            let b = ger::basis(n);
            let mut ix = BTreeMap::new();
            for (i, q) in b.iter().enumerate() {
                ix.insert(q.clone(), i);
            }
            bases.push(b);
            index.push(ix);
        }
        ConvContext {
            affine,
            arity_cap,
            bases,
            index,
        }
    }

    pub fn basis(&self, n: usize) -> &[GerMonomial] {
        assert!(n >= 1 && n <= self.arity_cap, "arity {n} out of range");
        &self.bases[n]
    }

    pub fn basis_index(&self, n: usize, q: &GerMonomial) -> usize {
        *self.index[n]
            .get(q)
            .unwrap_or_else(|| panic!("word {} not in arity-{n} basis", q.render()))
    }

    fn word(&self, n: usize, i: usize) -> &GerMonomial {
        &self.bases[n][i]
    }
}

/// Equivariant collection: finitely many components `(arity, word index) ↦
/// operator`.  Zero operators are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConvElement {
    comps: BTreeMap<(usize, usize), PolyOp>,
}

impl ConvElement {
    pub fn zero() -> ConvElement {
        ConvElement {
            comps: BTreeMap::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn components(&self) -> impl Iterator<Item = (&(usize, usize), &PolyOp)> {
        self.comps.iter()
    }

    pub fn component(&self, arity: usize, word: usize) -> Option<&PolyOp> {
        self.comps.get(&(arity, word))
    }

    pub fn add_component(&mut self, arity: usize, word: usize, op: &PolyOp) {
        assert_eq!(op.arity, arity, "operator arity must match the component");
        let entry = self
            .comps
            .remove(&(arity, word))
            .map(|o| o.add(op))
            .unwrap_or_else(|| op.clone());
        if !entry.is_zero() {
            self.comps.insert((arity, word), entry);
        }
    }

    pub fn add(&self, other: &ConvElement) -> ConvElement {
        let mut out = self.clone();
        for (&(n, w), op) in &other.comps {
            out.add_component(n, w, op);
        }
        out
    }

    pub fn sub(&self, other: &ConvElement) -> ConvElement {
        self.add(&other.scale(&int(-1)))
    }

    pub fn scale(&self, s: &Scalar) -> ConvElement {
        let mut out = ConvElement::zero();
        if is_zero(s) {
            return out;
        }
        for (&(n, w), op) in &self.comps {
            out.comps.insert((n, w), op.scale(s));
        }
        out
    }

    /// Smallest arity carrying a component (`None` for the zero element).
    pub fn min_arity(&self) -> Option<usize> {
        self.comps.keys().next().map(|&(n, _)| n)
    }

    pub fn max_arity(&self) -> Option<usize> {
        self.comps.keys().next_back().map(|&(n, _)| n)
    }

    /// Membership in the arity filtration: every component lives in
    /// arity ≥ `level`.
    pub fn in_filtration(&self, level: usize) -> bool {
        self.min_arity().map_or(true, |n| n >= level)
    }

    /// Drops all components of arity > `cap`.
    pub fn truncate_arity(&self, cap: usize) -> ConvElement {
        ConvElement {
            comps: self
                .comps
                .iter()
                .filter(|(&(n, _), _)| n <= cap)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Keeps only the arity-`n` slice.
    pub fn arity_slice(&self, n: usize) -> ConvElement {
        ConvElement {
            comps: self
                .comps
                .iter()
                .filter(|(&(m, _), _)| m == n)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Total degree of a component pair: operator map degree plus word degree.
    /// Returns `None` when components are not all of one degree.
    pub fn degree(&self, ctx: &ConvContext) -> Option<Degree> {
        let mut deg: Option<Degree> = None;
        for (&(n, w), op) in &self.comps {
            let d = op.map_degree()? + ctx.word(n, w).degree();
            match deg {
                None => deg = Some(d),
                Some(existing) if existing == d => {}
                _ => return None,
            }
        }
        deg
    }

    /// Splits into pieces of homogeneous total degree.
    pub fn degree_components(&self, ctx: &ConvContext) -> BTreeMap<Degree, ConvElement> {
        let mut out: BTreeMap<Degree, ConvElement> = BTreeMap::new();
        for (&(n, w), op) in &self.comps {
            let qd = ctx.word(n, w).degree();
            for (d, piece) in op.homogeneous_components() {
                out.entry(d + qd)
                    .or_insert_with(ConvElement::zero)
                    .add_component(n, w, &piece);
            }
        }
        out.retain(|_, e| !e.is_zero());
        out
    }

    /// Applies a permutation diagonally: the word is relabelled and the
    /// operator slots are rerouted, each with its own Koszul sign.
    pub fn act(&self, ctx: &ConvContext, perm: &Permutation) -> ConvElement {
        let n = perm.len();
        let mut out = ConvElement::zero();
        for (&(m, w), op) in &self.comps {
            if m != n {
                out.add_component(m, w, op);
                continue;
            }
            let moved = ger::act(perm, &GerElement::monomial(ctx.word(n, w).clone(), one()));
            let op_moved = op.act_slots(perm);
            for (q2, c) in moved.terms() {
                out.add_component(n, ctx.basis_index(n, q2), &op_moved.scale(c));
            }
        }
        out
    }

    /// Projects onto the equivariant part: the average of all diagonal
    /// symmetric-group actions, arity by arity.
    pub fn symmetrized(&self, ctx: &ConvContext) -> ConvElement {
        let mut out = ConvElement::zero();
        let arities: Vec<usize> = {
            let mut v: Vec<usize> = self.comps.keys().map(|&(n, _)| n).collect();
            v.dedup();
            v
        };
        for n in arities {
            let slice = self.arity_slice(n);
            let mut acc = ConvElement::zero();
            let perms = Permutation::all(n);
            for p in &perms {
                acc = acc.add(&slice.act(ctx, p));
            }
            let inv = one() / int(perms.len() as i64);
            out = out.add(&acc.scale(&inv));
        }
        out
    }

    /// Equivariance audit: the element must be fixed by every diagonal action.
    pub fn is_equivariant(&self, ctx: &ConvContext) -> bool {
        let arities: Vec<usize> = {
            let mut v: Vec<usize> = self.comps.keys().map(|&(n, _)| n).collect();
            v.dedup();
            v
        };
        for n in arities {
            let slice = self.arity_slice(n);
            for p in Permutation::all(n) {
                if slice.act(ctx, &p) != slice {
                    return false;
                }
            }
        }
        true
    }

    pub fn render(&self, ctx: &ConvContext) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut lines = Vec::new();
        for (&(n, w), op) in &self.comps {
            lines.push(format!(
                "[{}] {} : {}",
                n,
                ctx.word(n, w).render(),
                op.render()
            ));
        }
        lines.join("\n")
    }

    /// Table dump: for every component and every tuple of basis monomial
    /// inputs (total exponent ≤ `max_exp` each), the evaluated value.
    pub fn to_json(&self, ctx: &ConvContext, max_exp: u64) -> Value {
        let monos = ctx.affine.polyvector_basis(max_exp);
        let vars = &ctx.affine.va_world.vars;
        let mut rows = Vec::new();
        for (&(n, w), op) in &self.comps {
            let mut tuple = vec![0usize; n];
            loop {
                let args: Vec<SuperPoly> = tuple
                    .iter()
                    .map(|&i| SuperPoly::monomial(monos[i].clone(), one()))
                    .collect();
                let val = op.eval(&args);
                if !val.is_zero() {
                    rows.push(json!({
                        "arity": n,
                        "word_index": w,
                        "word": ctx.word(n, w).render(),
                        "inputs": tuple
                            .iter()
                            .map(|&i| {
                                SuperPoly::monomial(monos[i].clone(), one()).render(vars)
                            })
                            .collect::<Vec<_>>(),
                        "value": val.to_json(vars),
                    }));
                }
                // Advance the tuple odometer.
                let mut j = 0;
                while j < n {
                    tuple[j] += 1;
                    if tuple[j] < monos.len() {
                        break;
                    }
                    tuple[j] = 0;
                    j += 1;
                }
                if j == n {
                    break;
                }
            }
        }
        json!({ "components": rows })
    }
}

fn word_element(q: &GerMonomial) -> GerElement {
    GerElement::monomial(q.clone(), one())
}

/// The two-slot operator implementing the odd Poisson bracket on polyvectors
/// in the plainly symmetric convention: the sum over i of
/// `(u, v) ↦ (∂u/∂θᵢ)(∂v/∂xⁱ)` together with its slot transposition.
/// It is fixed by the slot swap, has map degree −1, and pairs as
/// `(θᵢ, x^j) ↦ δᵢ^j`.
pub fn schouten_op(ctx: &ConvContext) -> PolyOp {
    let w = &ctx.affine.va_world;
    let mut t = PolyOp::zero(w, 2);
    for i in 0..ctx.affine.dims {
        t.add_term(
            (
                Mono::unit(),
                vec![
                    Mono::var(ctx.affine.theta(i)),
                    Mono::var(ctx.affine.x(i)),
                ],
            ),
            one(),
        );
    }
    let swap = Permutation::new(vec![1, 0]).unwrap();
    t.add(&t.act_slots(&swap))
}

/// The structure element of the standard polyvector algebra: the wedge
/// product paired with the bracket word, and the odd Poisson bracket paired
/// with the product word.  Its total degree is 1 and it is equivariant.
pub fn alpha_element(ctx: &ConvContext) -> ConvElement {
    let prod_word = GerMonomial::new(vec![vec![1], vec![2]]).unwrap();
    let bracket_word = GerMonomial::new(vec![vec![1, 2]]).unwrap();
    let mut out = ConvElement::zero();
    out.add_component(
        2,
        ctx.basis_index(2, &bracket_word),
        &PolyOp::mu(&ctx.affine.va_world),
    );
    out.add_component(2, ctx.basis_index(2, &prod_word), &schouten_op(ctx));
    out
}

/// The identity collection: the one-slot identity operator on the arity-1 word.
pub fn identity_element(ctx: &ConvContext) -> ConvElement {
    let b1 = GerMonomial::new(vec![vec![1]]).unwrap();
    let mut out = ConvElement::zero();
    out.add_component(
        1,
        ctx.basis_index(1, &b1),
        &PolyOp::identity(&ctx.affine.va_world),
    );
    out
}

/// The θ-counting derivation placed on the arity-1 word.
pub fn euler_element(ctx: &ConvContext) -> ConvElement {
    let b1 = GerMonomial::new(vec![vec![1]]).unwrap();
    let mut out = ConvElement::zero();
    out.add_component(1, ctx.basis_index(1, &b1), &ctx.affine.euler_op());
    out
}

/// Wraps a single operator as a collection supported on one word.
pub fn single(ctx: &ConvContext, arity: usize, word: &GerMonomial, op: &PolyOp) -> ConvElement {
    let mut out = ConvElement::zero();
    out.add_component(arity, ctx.basis_index(arity, word), op);
    out
}

/// Splits an operator into its even and odd map-degree parts, returning
/// `(parity, piece)` pairs.
fn parity_split(op: &PolyOp) -> Vec<(i64, PolyOp)> {
    let mut even = PolyOp::zero(&op.world, op.arity);
    let mut odd = PolyOp::zero(&op.world, op.arity);
    for (d, piece) in op.homogeneous_components() {
        if d.rem_euclid(2) == 0 {
            even = even.add(&piece);
        } else {
            odd = odd.add(&piece);
        }
    }
    let mut out = Vec::new();
    if !even.is_zero() {
        out.push((0, even));
    }
    if !odd.is_zero() {
        out.push((1, odd));
    }
    out
}

/// Builds the routing permutation that sends the contiguous composite
/// (inner block occupying slots `i0..i0+k` after position `i0` of the outer
/// remainder) to the final labels: the inner block lands on the subset `s`
/// (ascending) and the outer remainder on the complement (ascending).
/// Returns the permutation together with the 1-based outer slot index.
fn routing(n: usize, s: &[usize]) -> (Permutation, usize) {
    let in_s = {
        let mut f = vec![false; n];
        for &v in s {
            f[v] = true;
        }
        f
    };
    let rest: Vec<usize> = (0..n).filter(|&v| !in_s[v]).collect();
    let i0 = rest.iter().filter(|&&a| a < s[0]).count();
    let mut images = Vec::with_capacity(n);
    images.extend_from_slice(&rest[..i0]);
    images.extend_from_slice(s);
    images.extend_from_slice(&rest[i0..]);
    (Permutation::new(images).unwrap(), i0 + 1)
}

/// Composition product of collections: substitutes every component of `g`
/// into every slot-subset of every component of `f`, rerouting labels over
/// all subsets of the final inputs.  The constant sign twist is
/// `(−1)^{(‖N‖+|r|)·|p|}` for an inner piece `N ⊗ r` entering an outer word
/// `p`; all input-dependent signs are carried by the operator composition
/// and the slot action.
pub fn star(ctx: &ConvContext, f: &ConvElement, g: &ConvElement) -> ConvElement {
    let mut out = ConvElement::zero();
    for (&(m, pw), mop) in &f.comps {
        let p = ctx.word(m, pw);
        let p_deg = p.degree();
        let p_elt = word_element(p);
        for (&(k, rw), nop) in &g.comps {
            let n = m + k - 1;
            if n > ctx.arity_cap {
                continue;
            }
            let r = ctx.word(k, rw);
            let r_deg = r.degree();
            let r_elt = word_element(r);
            for subset in crate::graded::combinations(&(0..n).collect::<Vec<_>>(), k) {
                let (route, slot) = routing(n, &subset);
                let ger_part = ger::act(&route, &ger::compose(&p_elt, m, slot, &r_elt, k));
                if ger_part.is_zero() {
                    continue;
                }
                for (npar, npiece) in parity_split(nop) {
                    let kappa = sign_pow((npar + r_deg) * p_deg);
                    let end_part = mop.compose_at(slot, &npiece).act_slots(&route);
                    if end_part.is_zero() {
                        continue;
                    }
                    for (q2, c) in ger_part.terms() {
                        out.add_component(
                            n,
                            ctx.basis_index(n, q2),
                            &end_part.scale(&(c * &kappa)),
                        );
                    }
                }
            }
        }
    }
    out
}

/// Lie bracket of the composition product in the intrinsic (storage) grading.
pub fn conv_lie_bracket(ctx: &ConvContext, f: &ConvElement, g: &ConvElement) -> ConvElement {
    let df = f.degree(ctx).expect("bracket needs homogeneous arguments");
    let dg = g.degree(ctx).expect("bracket needs homogeneous arguments");
    star(ctx, f, g).sub(&star(ctx, g, f).scale(&sign_pow(df * dg)))
}

/// The differential of the equivariant-collection complex for the standard
/// structure: the Lie bracket with the structure element.  Raises arity by
/// exactly one and squares to zero.
pub fn conv_diff(ctx: &ConvContext, x: &ConvElement) -> ConvElement {
    let alpha = alpha_element(ctx);
    let mut out = ConvElement::zero();
    for (_, piece) in x.degree_components(ctx) {
        out = out.add(&conv_lie_bracket(ctx, &alpha, &piece));
    }
    out
}

/// Degree-1 multi-bracket of the morphism-pair convolution algebra: the
/// target structure component of matching arity is evaluated on the blocks
/// produced by the arguments, summed over all ordered block routings.
///
/// For `q` the structure collection and arguments `f₁,…,f_m`, the output
/// component at arity `n = Σ n_j` collects, for every arity-`m` component
/// `Q_p ⊗ p` of `q`, every choice of argument components `M_j ⊗ r_j`, and
/// every `(n₁,…,n_m)`-shuffle σ, the pair
/// `(Q_p ∘ (M₁,…,M_m))·σ  ⊗  σ·(p ∘ (r₁,…,r_m))`
/// with the constant twist `(−1)^{Σ_j (‖M_j‖+|r_j|)(|p| + Σ_{i<j} |r_i|)}`.
pub fn multi_bracket(ctx: &ConvContext, q: &ConvElement, fs: &[&ConvElement]) -> ConvElement {
    let m = fs.len();
    assert!(m >= 1, "need at least one argument");
    let mut out = ConvElement::zero();
    for (&(qm, pw), qop) in &q.comps {
        if qm != m {
            continue;
        }
        let p = ctx.word(m, pw);
        let p_deg = p.degree();
        // Iterate over one component choice per argument.
        let comp_lists: Vec<Vec<(&(usize, usize), &PolyOp)>> =
            fs.iter().map(|f| f.comps.iter().collect()).collect();
        if comp_lists.iter().any(|l| l.is_empty()) {
            continue;
        }
        let mut pick = vec![0usize; m];
        loop {
            let chosen: Vec<(usize, usize, &PolyOp)> = pick
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let (&(nj, rw), op) = comp_lists[j][c];
                    (nj, rw, op)
                })
                .collect();
            let n: usize = chosen.iter().map(|&(nj, _, _)| nj).sum();
            if n <= ctx.arity_cap {
                // Contiguous word composite, plugging right-to-left so the
                // earlier slot labels stay valid.
                let mut ger_acc = word_element(p);
                let mut acc_arity = m;
                for j in (0..m).rev() {
                    let (nj, rw, _) = chosen[j];
                    ger_acc = ger::compose(
                        &ger_acc,
                        acc_arity,
                        j + 1,
                        &word_element(ctx.word(nj, rw)),
                        nj,
                    );
                    acc_arity += nj - 1;
                }
                if !ger_acc.is_zero() {
                    // Parity decompositions of each argument operator.
                    let splits: Vec<Vec<(i64, PolyOp)>> = chosen
                        .iter()
                        .map(|&(_, _, op)| parity_split(op))
                        .collect();
                    let block_sizes: Vec<usize> =
                        chosen.iter().map(|&(nj, _, _)| nj).collect();
                    let routes = shuffles(&block_sizes);
                    let mut sel = vec![0usize; m];
                    'parity: loop {
                        if splits.iter().any(|s| s.is_empty()) {
                            break 'parity;
                        }
                        // Twist for routing each argument past the outer
                        // word and the earlier blocks, combined with the
                        // conversion of the iterated word composite to the
                        // simultaneous one; the cross terms in the word
                        // degrees cancel modulo 2.
                        let mut exponent = 0i64;
                        let mut prefix_r = 0i64;
                        for j in 0..m {
                            let (_, rw, _) = chosen[j];
                            let rj_deg = ctx.word(block_sizes[j], rw).degree();
                            let (par, _) = splits[j][sel[j]];
                            exponent += par * (p_deg + prefix_r) + rj_deg * p_deg;
                            prefix_r += rj_deg;
                        }
                        let kappa = sign_pow(exponent);
                        let inserts: Vec<(usize, &PolyOp)> = (0..m)
                            .map(|j| (j + 1, &splits[j][sel[j]].1))
                            .collect();
                        let end_contig = qop.compose_many(&inserts);
                        if !end_contig.is_zero() {
                            for route in &routes {
                                let end_part = end_contig.act_slots(route);
                                if end_part.is_zero() {
                                    continue;
                                }
                                let ger_part = ger::act(route, &ger_acc);
                                for (q2, c) in ger_part.terms() {
                                    out.add_component(
                                        n,
                                        ctx.basis_index(n, q2),
                                        &end_part.scale(&(c * &kappa)),
                                    );
                                }
                            }
                        }
                        // Advance parity selection odometer.
                        let mut j = 0;
                        while j < m {
                            sel[j] += 1;
                            if sel[j] < splits[j].len() {
                                break;
                            }
                            sel[j] = 0;
                            j += 1;
                        }
                        if j == m {
                            break 'parity;
                        }
                    }
                }
            }
            // Advance component choice odometer.
            let mut j = 0;
            while j < m {
                pick[j] += 1;
                if pick[j] < comp_lists[j].len() {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
            if j == m {
                break;
            }
        }
    }
    out
}

/// Composition of morphism data: the blocks of the inner collection are fed
/// through the components of the outer one, summed over block counts with
/// the factorial normalization compensating the ordered routing.
pub fn infty_compose(ctx: &ConvContext, outer: &ConvElement, inner: &ConvElement) -> ConvElement {
    let mut out = ConvElement::zero();
    let max_m = outer.max_arity().unwrap_or(0);
    for m in 1..=max_m {
        let args: Vec<&ConvElement> = (0..m).map(|_| inner).collect();
        let term = multi_bracket(ctx, outer, &args);
        out = out.add(&term.scale(&(one() / factorial(m))));
    }
    out
}

fn factorial(k: usize) -> Scalar {
    let mut f = one();
    for i in 2..=k {
        f = f * int(i as i64);
    }
    f
}

/// A homotopy Lie algebra structure on equivariant collections.
#[derive(Debug, Clone)]
pub enum LinftyAlgebra {
    /// Commutator picture: zero differential and the binary bracket obtained
    /// from the composition-product Lie bracket; an element of intrinsic
    /// degree `d` has homotopy degree `d − 1`.
    Commutator,
    /// Convolution algebra of a morphism pair: the differential composes
    /// with the source structure, the multi-brackets run through the target
    /// structure; homotopy degree equals intrinsic degree.
    MorphismPair {
        source: ConvElement,
        target: ConvElement,
    },
}

impl LinftyAlgebra {
    /// Standard pair: both sides carry the standard structure element.
    pub fn standard_pair(ctx: &ConvContext) -> LinftyAlgebra {
        let a = alpha_element(ctx);
        LinftyAlgebra::MorphismPair {
            source: a.clone(),
            target: a,
        }
    }

    /// Homotopy degree of a homogeneous element.
    pub fn ell_degree(&self, ctx: &ConvContext, f: &ConvElement) -> Option<Degree> {
        let d = f.degree(ctx)?;
        Some(match self {
            LinftyAlgebra::Commutator => d - 1,
            LinftyAlgebra::MorphismPair { .. } => d,
        })
    }

    /// The differential.
    pub fn diff(&self, ctx: &ConvContext, f: &ConvElement) -> ConvElement {
        match self {
            LinftyAlgebra::Commutator => ConvElement::zero(),
            LinftyAlgebra::MorphismPair { source, .. } => {
                let mut out = ConvElement::zero();
                for (d, piece) in f.degree_components(ctx) {
                    out = out.add(&star(ctx, &piece, source).scale(&sign_pow(d + 1)));
                }
                out
            }
        }
    }

    /// The degree-1 multi-bracket on `m = fs.len()` arguments.
    pub fn bracket(&self, ctx: &ConvContext, fs: &[&ConvElement]) -> ConvElement {
        match self {
            LinftyAlgebra::Commutator => {
                assert_eq!(fs.len(), 2, "the commutator algebra is binary");
                let mut out = ConvElement::zero();
                for (dx, x) in fs[0].degree_components(ctx) {
                    for (_, y) in fs[1].degree_components(ctx) {
                        out = out
                            .add(&conv_lie_bracket(ctx, &x, &y).scale(&sign_pow(dx + 1)));
                    }
                }
                out
            }
            LinftyAlgebra::MorphismPair { target, .. } => multi_bracket(ctx, target, fs),
        }
    }

    /// Largest bracket arity that can be non-zero.
    pub fn max_bracket_size(&self) -> usize {
        match self {
            LinftyAlgebra::Commutator => 2,
            LinftyAlgebra::MorphismPair { target, .. } => target.max_arity().unwrap_or(0),
        }
    }

    /// Maurer-Cartan residual `∂γ + Σ_{m≥2} (1/m!){γ,…,γ}_m`, truncated at
    /// the arity cap.
    pub fn mc_residual(&self, ctx: &ConvContext, gamma: &ConvElement) -> ConvElement {
        let mut out = self.diff(ctx, gamma);
        for m in 2..=self.max_bracket_size() {
            let args: Vec<&ConvElement> = (0..m).map(|_| gamma).collect();
            let term = self.bracket(ctx, &args);
            out = out.add(&term.scale(&(one() / factorial(m))));
        }
        out
    }
}

/// Polynomial coefficient list in a formal parameter; index = power of t.
pub type TPoly = Vec<ConvElement>;

fn tpoly_coeff(p: &TPoly, k: usize) -> ConvElement {
    p.get(k).cloned().unwrap_or_else(ConvElement::zero)
}

fn tpoly_trim(mut p: TPoly) -> TPoly {
    while p.last().map_or(false, |c| c.is_zero()) {
        p.pop();
    }
    p
}

pub fn tpoly_add(a: &TPoly, b: &TPoly) -> TPoly {
    let len = a.len().max(b.len());
    tpoly_trim(
        (0..len)
            .map(|k| tpoly_coeff(a, k).add(&tpoly_coeff(b, k)))
            .collect(),
    )
}

pub fn tpoly_scale(a: &TPoly, s: &Scalar) -> TPoly {
    tpoly_trim(a.iter().map(|c| c.scale(s)).collect())
}

pub fn tpoly_is_zero(a: &TPoly) -> bool {
    a.iter().all(|c| c.is_zero())
}

/// d/dt on coefficient lists.
pub fn tpoly_derivative(a: &TPoly) -> TPoly {
    if a.len() <= 1 {
        return Vec::new();
    }
    tpoly_trim(
        (1..a.len())
            .map(|k| a[k].scale(&int(k as i64)))
            .collect(),
    )
}

/// Definite integral from 0: `tᵏ ↦ t^{k+1}/(k+1)`.
pub fn tpoly_integral(a: &TPoly) -> TPoly {
    let mut out = vec![ConvElement::zero()];
    for (k, c) in a.iter().enumerate() {
        out.push(c.scale(&(one() / int((k + 1) as i64))));
    }
    tpoly_trim(out)
}

/// Evaluation at a scalar parameter value.
pub fn tpoly_eval(a: &TPoly, t: &Scalar) -> ConvElement {
    let mut out = ConvElement::zero();
    let mut power = one();
    for c in a {
        out = out.add(&c.scale(&power));
        power = &power * t;
    }
    out
}

/// Extends the differential coefficient-wise.
pub fn tpoly_diff(ctx: &ConvContext, alg: &LinftyAlgebra, a: &TPoly) -> TPoly {
    tpoly_trim(a.iter().map(|c| alg.diff(ctx, c)).collect())
}

/// Extends an m-bracket multilinearly over polynomial coefficients.
pub fn tpoly_bracket(ctx: &ConvContext, alg: &LinftyAlgebra, args: &[&TPoly]) -> TPoly {
    let m = args.len();
    let mut out: TPoly = Vec::new();
    let mut idx = vec![0usize; m];
    if args.iter().any(|a| a.is_empty()) {
        return out;
    }
    loop {
        let total: usize = idx.iter().sum();
        let coeffs: Vec<&ConvElement> = idx.iter().enumerate().map(|(j, &k)| &args[j][k]).collect();
        if coeffs.iter().all(|c| !c.is_zero()) {
            let term = alg.bracket(ctx, &coeffs);
            while out.len() <= total {
                out.push(ConvElement::zero());
            }
            out[total] = out[total].add(&term);
        }
        let mut j = 0;
        while j < m {
            idx[j] += 1;
            if idx[j] < args[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == m {
            break;
        }
    }
    tpoly_trim(out)
}

/// Maurer-Cartan residual of a polynomial family, coefficient-exact in t.
pub fn tpoly_mc_residual(ctx: &ConvContext, alg: &LinftyAlgebra, a: &TPoly) -> TPoly {
    let mut out = tpoly_diff(ctx, alg, a);
    for m in 2..=alg.max_bracket_size() {
        let args: Vec<&TPoly> = (0..m).map(|_| a).collect();
        let term = tpoly_bracket(ctx, alg, &args);
        out = tpoly_add(&out, &tpoly_scale(&term, &(one() / factorial(m))));
    }
    out
}

/// A polynomial one-cell: main part plus a dt-part, both polynomial in t.
#[derive(Debug, Clone)]
pub struct PolyPath {
    pub main: TPoly,
    pub dt: TPoly,
}

impl PolyPath {
    pub fn constant(value: ConvElement) -> PolyPath {
        PolyPath {
            main: vec![value],
            dt: Vec::new(),
        }
    }

    pub fn eval_main(&self, t: &Scalar) -> ConvElement {
        tpoly_eval(&self.main, t)
    }
}

/// Flatness report for a polynomial one-cell: the main part must satisfy the
/// Maurer-Cartan equation for every t, and its t-derivative must match the
/// structure maps applied to the dt-part.
#[derive(Debug, Clone)]
pub struct OneCellReport {
    /// (arity, t-power) slices where the Maurer-Cartan residual is non-zero.
    pub mc_failures: Vec<(usize, usize)>,
    /// (arity, t-power) slices where the velocity equation fails.
    pub velocity_failures: Vec<(usize, usize)>,
}

impl OneCellReport {
    pub fn pass(&self) -> bool {
        self.mc_failures.is_empty() && self.velocity_failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "pass": self.pass(),
            "mc_failures": self.mc_failures,
            "velocity_failures": self.velocity_failures,
        })
    }
}

fn tpoly_failures(ts: &TPoly) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, c) in ts.iter().enumerate() {
        let mut arities: Vec<usize> = c.components().map(|(&(n, _), _)| n).collect();
        arities.dedup();
        for n in arities {
            out.push((n, k));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Verifies the two one-cell equations exactly as polynomial identities.
pub fn one_cell_check(ctx: &ConvContext, alg: &LinftyAlgebra, path: &PolyPath) -> OneCellReport {
    let mc = tpoly_mc_residual(ctx, alg, &path.main);
    // Velocity: d/dt main = ∂(dt) + Σ_{m≥1} (1/m!) {main,…,main, dt}_{m+1}.
    let mut rhs = tpoly_diff(ctx, alg, &path.dt);
    let max_m = alg.max_bracket_size();
    for m in 1..max_m.max(1) {
        if m + 1 > max_m {
            break;
        }
        let mut args: Vec<&TPoly> = (0..m).map(|_| &path.main).collect();
        args.push(&path.dt);
        let term = tpoly_bracket(ctx, alg, &args);
        rhs = tpoly_add(&rhs, &tpoly_scale(&term, &(one() / factorial(m))));
    }
    let velocity = tpoly_add(&tpoly_derivative(&path.main), &tpoly_scale(&rhs, &int(-1)));
    OneCellReport {
        mc_failures: tpoly_failures(&mc),
        velocity_failures: tpoly_failures(&velocity),
    }
}

/// Result of the adjustment recursion.
#[derive(Debug, Clone)]
pub struct AdjustOutcome {
    pub path: PolyPath,
    pub endpoint: ConvElement,
    pub iterations: usize,
}

/// Filtration-respecting adjustment: starting from a Maurer-Cartan element
/// `base` and a direction `xi` of homotopy degree −1 supported in arity ≥
/// `level`, iterates
/// `main ← base + ∫₀ᵗ (∂ξ + Σ_{m≥1} (1/m!){main,…,main,ξ}_{m+1}) dt`
/// to its (guaranteed) fixed point modulo the arity cap and returns the
/// one-cell together with its endpoint at t = 1.
///
/// Postconditions verified here:
/// * every coefficient of `main − base` lies in arity ≥ `level`;
/// * `endpoint − base − ∂ξ` lies in arity ≥ `level + 1`;
/// * when additionally `∂ξ` lies in arity ≥ `level + 1`: `main − base` does
///   too, and `endpoint − base − ∂ξ − {base, ξ}₂` lies in arity ≥ `level+2`.
pub fn mc_adjust(
    ctx: &ConvContext,
    alg: &LinftyAlgebra,
    base: &ConvElement,
    xi: &ConvElement,
    level: usize,
    max_depth: usize,
) -> Result<AdjustOutcome, String> {
    if !xi.in_filtration(level) {
        return Err(format!(
            "direction not supported in arity >= {level} (min arity {:?})",
            xi.min_arity()
        ));
    }
    if alg.ell_degree(ctx, xi).filter(|&d| d == -1).is_none() && !xi.is_zero() {
        return Err("direction must have homotopy degree -1".into());
    }
    let dxi = alg.diff(ctx, xi);
    let xi_poly: TPoly = vec![xi.clone()];
    let mut main: TPoly = vec![base.clone()];
    let mut iterations = 0usize;
    loop {
        // Integrand: ∂ξ + Σ_{m≥1} (1/m!) {main,…,main, ξ}_{m+1}.
        let mut integrand: TPoly = vec![dxi.clone()];
        let max_m = alg.max_bracket_size();
        for m in 1..max_m.max(1) {
            if m + 1 > max_m {
                break;
            }
            let mut args: Vec<&TPoly> = (0..m).map(|_| &main).collect();
            args.push(&xi_poly);
            let term = tpoly_bracket(ctx, alg, &args);
            integrand = tpoly_add(&integrand, &tpoly_scale(&term, &(one() / factorial(m))));
        }
        let next = tpoly_add(&vec![base.clone()], &tpoly_integral(&integrand));
        iterations += 1;
        let stable = next.len() == main.len()
            && next.iter().zip(main.iter()).all(|(a, b)| a == b);
        main = next;
        if stable {
            break;
        }
        if iterations > max_depth {
            return Err(format!("no fixed point within {max_depth} iterations"));
        }
    }
    let endpoint = tpoly_eval(&main, &one());
    // Filtration postconditions.
    let delta = tpoly_add(&main, &vec![base.scale(&int(-1))]);
    for c in &delta {
        if !c.in_filtration(level) {
            return Err("adjusted family escapes the stated filtration level".into());
        }
    }
    let drift = endpoint.sub(base).sub(&dxi);
    if !drift.in_filtration(level + 1) {
        return Err("endpoint drift not one filtration step deeper".into());
    }
    // The sharper conclusions are provable from level 2 on (the general
    // statement assumes the filtration starts one arity above the smallest).
    if level >= 2 && dxi.in_filtration(level + 1) {
        for c in &delta {
            if !c.in_filtration(level + 1) {
                return Err("family should stay one level deeper when ∂ξ does".into());
            }
        }
        let correction = alg.bracket(ctx, &[base, xi]);
        if !drift.sub(&correction).in_filtration(level + 2) {
            return Err("second-order endpoint drift mismatch".into());
        }
    }
    Ok(AdjustOutcome {
        path: PolyPath {
            main,
            dt: xi_poly,
        },
        endpoint,
        iterations,
    })
}

/// Homotopy-Lie relation defect for `m` arguments:
/// `∂{v₁…v_m} + Σ_i ±{v₁,…,∂v_i,…,v_m} + Σ_{k} Σ_{σ∈Sh(k,m−k)} ±{{v_σ…}_k, …}`
/// — identically zero when the structure maps satisfy the homotopy Jacobi
/// relations.  Arguments must be homogeneous.
pub fn llie_defect(
    ctx: &ConvContext,
    alg: &LinftyAlgebra,
    vs: &[&ConvElement],
) -> ConvElement {
    let m = vs.len();
    let degs: Vec<Degree> = vs
        .iter()
        .map(|v| {
            alg.ell_degree(ctx, v)
                .expect("relation check needs homogeneous arguments")
        })
        .collect();
    let mut total = ConvElement::zero();
    // ∂ of the top bracket (only defined when the bracket size is available).
    if m <= alg.max_bracket_size() && m >= 2 {
        total = total.add(&alg.diff(ctx, &alg.bracket(ctx, vs)));
    }
    // Brackets of differentials.
    if m >= 2 && m <= alg.max_bracket_size() {
        for i in 0..m {
            let dvi = alg.diff(ctx, vs[i]);
            if dvi.is_zero() {
                continue;
            }
            let sign = sign_pow(degs[..i].iter().sum::<Degree>());
            let mut args: Vec<&ConvElement> = vs.to_vec();
            args[i] = &dvi;
            total = total.add(&alg.bracket(ctx, &args).scale(&sign));
        }
    }
    // Nested brackets over (k, m−k)-shuffles, 2 ≤ k ≤ m−1.
    for k in 2..m {
        if k > alg.max_bracket_size() || m - k + 1 > alg.max_bracket_size() {
            continue;
        }
        for sh in shuffles(&[k, m - k]) {
            let eps = koszul_sign(&sh, &degs);
            let inner_args: Vec<&ConvElement> = (0..k).map(|j| vs[sh.image(j)]).collect();
            let inner = alg.bracket(ctx, &inner_args);
            if inner.is_zero() {
                continue;
            }
            let mut outer_args: Vec<&ConvElement> = vec![&inner];
            for j in k..m {
                outer_args.push(vs[sh.image(j)]);
            }
            total = total.add(&alg.bracket(ctx, &outer_args).scale(&int(eps)));
        }
    }
    total
}

/// Defect of the differential-bracket compatibility ("Bianchi" shape) for a
/// homogeneous degree-0 element `f`:
/// `Σ_{k≥2} (1/k!) ∂{f^k} + Σ_{k≥1} (1/k!) {f^k, ∂f} + Σ_{k≥2,t≥1} (1/k!t!) {f^t, {f^k}}`.
pub fn bianchi_defect(ctx: &ConvContext, alg: &LinftyAlgebra, f: &ConvElement) -> ConvElement {
    let max_m = alg.max_bracket_size();
    let mut total = ConvElement::zero();
    for k in 2..=max_m {
        let args: Vec<&ConvElement> = (0..k).map(|_| f).collect();
        let br = alg.bracket(ctx, &args);
        total = total.add(&alg.diff(ctx, &br).scale(&(one() / factorial(k))));
    }
    let df = alg.diff(ctx, f);
    for k in 1..max_m.max(1) {
        if k + 1 > max_m {
            break;
        }
        let mut args: Vec<&ConvElement> = (0..k).map(|_| f).collect();
        args.push(&df);
        let br = alg.bracket(ctx, &args);
        total = total.add(&br.scale(&(one() / factorial(k))));
    }
    for k in 2..=max_m {
        let inner_args: Vec<&ConvElement> = (0..k).map(|_| f).collect();
        let inner = alg.bracket(ctx, &inner_args);
        if inner.is_zero() {
            continue;
        }
        for t in 1..max_m.max(1) {
            if t + 1 > max_m {
                break;
            }
            let mut args: Vec<&ConvElement> = (0..t).map(|_| f).collect();
            args.push(&inner);
            let br = alg.bracket(ctx, &args);
            total = total.add(&br.scale(&(one() / (factorial(k) * factorial(t)))));
        }
    }
    total
}
