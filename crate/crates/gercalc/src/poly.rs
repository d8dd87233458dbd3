//! Polydifferential operators over graded polynomial coefficients, the
//! Hochschild cochain calculus of a (graded) affine space, the polyvector
//! embedding, and the evaluation of brace trees on cochains.
//!
//! An operator is stored as a sum of terms `c · A ⊗ D₁ ⊗ … ⊗ Dₙ` where `A` is
//! a coefficient monomial and `Dⱼ` a word of partial derivatives applied to
//! the j-th argument.  Evaluation follows the tensor-product rule: a factor
//! `Dⱼ` passing an earlier input costs the Koszul sign of the input parity
//! (shifted by `World::shift`) against the parity of the derivative word.
//!
//! Composition and the slot action are computed mechanically.  Every
//! derivation is pushed through an ordered factor list while a sign tracker
//! accumulates the exponent as a polynomial (constant, linear, quadratic) in
//! the formal input parities.  Over a coefficient world whose variables are
//! all even the input parities are constants and fold into the sign; over a
//! genuinely graded world the residual input dependence must cancel exactly,
//! and the tracker panics when it does not, so a sign error in the calculus
//! cannot pass silently.
//!
//! Closure boundary: at shift 0 the term span is closed under composition
//! and the slot action for arbitrary variable degrees.  At odd shift the
//! operations produce signs depending linearly on input parities, which fold
//! away exactly when every variable is even; shift-1 calculus over
//! odd-degree coordinates is therefore rejected by the tracker rather than
//! supported incorrectly.
//!
//! Hochschild cochains use `shift = 1`: slots consume degree-shifted
//! arguments, which makes brace insertions, the cup product, the Gerstenhaber
//! bracket and the differential `[μ, ·]` plain operadic compositions in this
//! engine.  The brace-tree action routes operators to labeled vertices in
//! planar depth-first order, with the Koszul reordering sign taken in shifted
//! degrees; neutral vertices act by the product cochain, so a neutral vertex
//! with more than two children evaluates to zero because the product has
//! only two slots.

use crate::brace::{BraceElement, BraceNode, BraceTree};
use crate::graded::{combinations, koszul_sign, Degree, Permutation};
use crate::scalar::{int, is_zero, one, scalar_to_string, Scalar};
use crate::superpoly::{enumerate_monomials, Mono, SuperPoly, VarInfo, VarTable};
use serde_json::{json, Value};
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::rc::Rc;

/// A graded polynomial coefficient world together with its derivative
/// symbols and the degree shift applied to operator inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    pub vars: Rc<VarTable>,
    pub duals: Rc<VarTable>,
    pub shift: Degree,
}

impl World {
    pub fn new(infos: Vec<VarInfo>, shift: Degree) -> World {
        let duals = infos
            .iter()
            .map(|v| VarInfo {
                name: format!("d{}", v.name),
                degree: -v.degree,
            })
            .collect();
        World {
            vars: Rc::new(VarTable::new(infos)),
            duals: Rc::new(VarTable::new(duals)),
            shift,
        }
    }

    /// True when every variable is even, so every element of the world has
    /// even parity and the formal input parities fold into constants.
    pub fn all_even(&self) -> bool {
        (0..self.vars.len()).all(|i| self.vars.parity(i) == 0)
    }

    fn compatible(&self, other: &World) -> bool {
        self.shift == other.shift && self.vars == other.vars
    }
}

/// Exponent of a sign, kept as a polynomial in the formal shifted input
/// parities ν₀, …, ν_{n−1}: `c + Σ lin[s]·ν_s + Σ quad[(a,b)]·ν_a·ν_b`.
#[derive(Debug, Clone, Default)]
struct SignTracker {
    c: i64,
    lin: BTreeMap<usize, i64>,
    quad: BTreeMap<(usize, usize), i64>,
}

/// Degree of a factor, linear in the formal input parities.
#[derive(Debug, Clone, Default)]
struct FDeg {
    c: i64,
    lin: BTreeMap<usize, i64>,
}

impl FDeg {
    fn constant(c: i64) -> FDeg {
        FDeg {
            c,
            lin: BTreeMap::new(),
        }
    }

    fn add(&mut self, other: &FDeg) {
        self.c += other.c;
        for (&s, &k) in &other.lin {
            *self.lin.entry(s).or_insert(0) += k;
        }
    }
}

impl SignTracker {
    fn new() -> SignTracker {
        SignTracker::default()
    }

    fn add_const(&mut self, k: i64) {
        self.c += k;
    }

    fn add_lin(&mut self, slot: usize, k: i64) {
        *self.lin.entry(slot).or_insert(0) += k;
    }

    fn add_quad(&mut self, a: usize, b: usize, k: i64) {
        if a == b {
            // ν² ≡ ν for a parity.
            self.add_lin(a, k);
        } else {
            let key = (a.min(b), a.max(b));
            *self.quad.entry(key).or_insert(0) += k;
        }
    }

    /// Adds the product of two factor degrees to the exponent.
    fn cross(&mut self, x: &FDeg, y: &FDeg) {
        self.c += x.c * y.c;
        for (&s, &k) in &y.lin {
            self.add_lin(s, x.c * k);
        }
        for (&s, &k) in &x.lin {
            self.add_lin(s, y.c * k);
        }
        for (&a, &ka) in &x.lin {
            for (&b, &kb) in &y.lin {
                self.add_quad(a, b, ka * kb);
            }
        }
    }

    /// Resolves the exponent to a sign.  Over an all-even world the formal
    /// parities equal the shift parity; otherwise every formal coefficient
    /// must vanish mod 2.
    fn finalize(&self, world: &World, context: &str) -> i64 {
        let mut c = self.c;
        if world.all_even() {
            let s = world.shift.rem_euclid(2);
            for &k in self.lin.values() {
                c += k * s;
            }
            for &k in self.quad.values() {
                c += k * s * s;
            }
        } else {
            for (&slot, &k) in &self.lin {
                assert!(
                    k.rem_euclid(2) == 0,
                    "{context}: residual linear parity dependence on input {slot}"
                );
            }
            for (&(a, b), &k) in &self.quad {
                assert!(
                    k.rem_euclid(2) == 0,
                    "{context}: residual quadratic parity dependence on inputs {a},{b}"
                );
            }
        }
        if c.rem_euclid(2) == 0 {
            1
        } else {
            -1
        }
    }
}

/// One multiplicand in a partially reassembled operator term.
#[derive(Debug, Clone)]
enum Fac {
    /// Coefficient monomial in the world variables.
    World(Mono),
    /// Derivative word applied to the input of the given final slot.
    Slot(usize, Mono),
}

type OpTerm = (Mono, Vec<Mono>);

#[derive(Debug, Clone)]
struct CState {
    coeff: Scalar,
    tr: SignTracker,
    facs: Vec<Fac>,
}

/// Polydifferential operator: finitely many terms `c · A ⊗ D₁ ⊗ … ⊗ Dₙ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyOp {
    pub world: World,
    pub arity: usize,
    terms: BTreeMap<OpTerm, Scalar>,
}

impl PolyOp {
    pub fn zero(world: &World, arity: usize) -> PolyOp {
        PolyOp {
            world: world.clone(),
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms(world: &World, arity: usize, terms: Vec<(OpTerm, Scalar)>) -> PolyOp {
        let mut out = PolyOp::zero(world, arity);
        for (t, c) in terms {
            out.add_term(t, c);
        }
        out
    }

    /// The identity operator v ↦ v.
    pub fn identity(world: &World) -> PolyOp {
        PolyOp::from_terms(world, 1, vec![((Mono::unit(), vec![Mono::unit()]), one())])
    }

    /// The binary multiplication operator (v, w) ↦ v·w.
    pub fn mu(world: &World) -> PolyOp {
        PolyOp::from_terms(
            world,
            2,
            vec![((Mono::unit(), vec![Mono::unit(), Mono::unit()]), one())],
        )
    }

    /// The arity-0 operator with constant value `a`.
    pub fn constant(world: &World, a: &SuperPoly) -> PolyOp {
        let mut out = PolyOp::zero(world, 0);
        for (m, c) in a.terms() {
            out.add_term((m.clone(), Vec::new()), c.clone());
        }
        out
    }

    pub fn add_term(&mut self, t: OpTerm, c: Scalar) {
        assert_eq!(t.1.len(), self.arity, "slot count must match arity");
        if is_zero(&c) {
            return;
        }
        match self.terms.entry(t) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = o.get() + &c;
                if is_zero(&s) {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&OpTerm, &Scalar)> {
        self.terms.iter()
    }

    pub fn add(&self, other: &PolyOp) -> PolyOp {
        assert!(self.world.compatible(&other.world));
        assert_eq!(self.arity, other.arity);
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(t.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &PolyOp) -> PolyOp {
        self.add(&other.scale(&int(-1)))
    }

    pub fn scale(&self, s: &Scalar) -> PolyOp {
        let mut out = PolyOp::zero(&self.world, self.arity);
        if is_zero(s) {
            return out;
        }
        for (t, c) in &self.terms {
            out.terms.insert(t.clone(), c * s);
        }
        out
    }

    fn term_map_degree(&self, t: &OpTerm) -> Degree {
        let mut d = t.0.degree(&self.world.vars);
        for w in &t.1 {
            d += w.degree(&self.world.duals);
        }
        d
    }

    /// Degree as a map of graded vector spaces (no shift bookkeeping).
    pub fn map_degree(&self) -> Option<Degree> {
        let mut result = None;
        for t in self.terms.keys() {
            let d = self.term_map_degree(t);
            match result {
                None => result = Some(d),
                Some(r) => assert_eq!(r, d, "operator is not homogeneous"),
            }
        }
        result
    }

    /// Degree as a map between shifted spaces: map degree + shift·(arity−1).
    pub fn shifted_degree(&self) -> Option<Degree> {
        self.map_degree()
            .map(|d| d + self.world.shift * (self.arity as Degree - 1))
    }

    /// Total cochain degree: map degree + shift·arity.
    pub fn cochain_degree(&self) -> Option<Degree> {
        self.map_degree()
            .map(|d| d + self.world.shift * self.arity as Degree)
    }

    /// Splits into components homogeneous of fixed shifted degree.
    pub fn homogeneous_components(&self) -> BTreeMap<Degree, PolyOp> {
        let mut out: BTreeMap<Degree, PolyOp> = BTreeMap::new();
        for (t, c) in &self.terms {
            let d = self.term_map_degree(t) + self.world.shift * (self.arity as Degree - 1);
            out.entry(d)
                .or_insert_with(|| PolyOp::zero(&self.world, self.arity))
                .add_term(t.clone(), c.clone());
        }
        out
    }

    /// Applies a derivative word to a polynomial; the word is stored in
    /// ascending symbol order and applied with the leftmost symbol outermost.
    fn apply_word(&self, word: &Mono, arg: &SuperPoly) -> SuperPoly {
        let mut cur = arg.clone();
        for &(g, e) in word.exps().iter().rev() {
            for _ in 0..e {
                cur = cur.left_partial(g, &self.world.vars);
            }
        }
        cur
    }

    /// Evaluates on homogeneous arguments of the given degrees.
    fn eval_homog(&self, args: &[(Degree, &SuperPoly)]) -> SuperPoly {
        assert_eq!(args.len(), self.arity);
        let vars = &self.world.vars;
        let mut out = SuperPoly::zero();
        for (t, c) in &self.terms {
            let word_parity: Vec<i64> = t
                .1
                .iter()
                .map(|w| w.degree(&self.world.duals).rem_euclid(2))
                .collect();
            let mut exp = 0i64;
            for (j, &(d, _)) in args.iter().enumerate() {
                let nu = (d + self.world.shift).rem_euclid(2);
                let suffix: i64 = word_parity[j + 1..].iter().sum();
                exp += nu * suffix;
            }
            let mut value = SuperPoly::monomial(t.0.clone(), c.clone());
            if exp.rem_euclid(2) == 1 {
                value = value.neg();
            }
            for (j, word) in t.1.iter().enumerate() {
                if value.is_zero() {
                    break;
                }
                let factor = self.apply_word(word, args[j].1);
                value = value.mul(&factor, vars);
            }
            out = out.add(&value);
        }
        out
    }

    /// Evaluates the operator on arbitrary polynomial arguments.
    pub fn eval(&self, args: &[SuperPoly]) -> SuperPoly {
        assert_eq!(args.len(), self.arity);
        if self.arity == 0 {
            return self.eval_homog(&[]);
        }
        if args.iter().any(|a| a.is_zero()) {
            return SuperPoly::zero();
        }
        let comps: Vec<Vec<(Degree, SuperPoly)>> = args
            .iter()
            .map(|a| {
                a.homogeneous_components(&self.world.vars)
                    .into_iter()
                    .collect()
            })
            .collect();
        let mut out = SuperPoly::zero();
        let mut idx = vec![0usize; self.arity];
        loop {
            let tuple: Vec<(Degree, &SuperPoly)> = idx
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let (d, p) = &comps[j][k];
                    (*d, p)
                })
                .collect();
            out = out.add(&self.eval_homog(&tuple));
            let mut j = 0;
            while j < self.arity {
                idx[j] += 1;
                if idx[j] < comps[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == self.arity {
                return out;
            }
        }
    }

    fn fac_fdeg(&self, f: &Fac) -> FDeg {
        match f {
            Fac::World(m) => FDeg::constant(m.degree(&self.world.vars).rem_euclid(2)),
            Fac::Slot(l, d) => {
                let mut fd = FDeg::constant(
                    (d.degree(&self.world.duals) + self.world.shift).rem_euclid(2),
                );
                fd.lin.insert(*l, 1);
                fd
            }
        }
    }

    /// Applies a derivative word (innermost symbol first) as a graded
    /// derivation over the tail of the factor list, branching over targets.
    fn apply_word_over_tail(&self, word: &Mono, start: usize, states: Vec<CState>) -> Vec<CState> {
        let mut states = states;
        for &(g, e) in word.exps().iter().rev() {
            for _ in 0..e {
                let dg_parity = self.world.duals.parity(g);
                let mut next: Vec<CState> = Vec::new();
                for st in &states {
                    let mut passed = FDeg::constant(0);
                    for target in start..st.facs.len() {
                        let mut tr = st.tr.clone();
                        tr.cross(&FDeg::constant(dg_parity), &passed);
                        match &st.facs[target] {
                            Fac::World(a) => {
                                let da = SuperPoly::monomial(a.clone(), one())
                                    .left_partial(g, &self.world.vars);
                                for (m2, c2) in da.terms() {
                                    let mut facs = st.facs.clone();
                                    facs[target] = Fac::World(m2.clone());
                                    next.push(CState {
                                        coeff: &st.coeff * c2,
                                        tr: tr.clone(),
                                        facs,
                                    });
                                }
                            }
                            Fac::Slot(l, d) => {
                                if let Some((sgn, d2)) = Mono::var(g).mul(d, &self.world.duals) {
                                    let mut facs = st.facs.clone();
                                    facs[target] = Fac::Slot(*l, d2);
                                    next.push(CState {
                                        coeff: &st.coeff * &int(sgn),
                                        tr,
                                        facs,
                                    });
                                }
                            }
                        }
                        passed.add(&self.fac_fdeg(&st.facs[target]));
                    }
                }
                states = next;
            }
        }
        states
    }

    /// Simultaneous operadic composition: substitutes `inserts[j].1` into
    /// slot `inserts[j].0` (1-based, distinct positions).  Signs follow the
    /// tensor-product rule in shifted degrees.
    pub fn compose_many(&self, inserts: &[(usize, &PolyOp)]) -> PolyOp {
        if inserts.is_empty() {
            return self.clone();
        }
        let mut ins: Vec<(usize, &PolyOp)> = inserts.to_vec();
        ins.sort_by_key(|&(p, _)| p);
        for w in ins.windows(2) {
            assert!(w[0].0 < w[1].0, "insert positions must be distinct");
        }
        for &(p, n) in &ins {
            assert!(p >= 1 && p <= self.arity, "insert position out of range");
            assert!(self.world.compatible(&n.world), "worlds must match");
        }
        #[derive(Clone, Copy)]
        enum Plan {
            Unit(usize),
            Ins(usize),
        }
        let mut plan: Vec<Plan> = Vec::with_capacity(self.arity);
        let mut offsets = vec![0usize; ins.len()];
        let mut fin = 0usize;
        for s in 1..=self.arity {
            if let Some(j) = ins.iter().position(|&(p, _)| p == s) {
                offsets[j] = fin;
                plan.push(Plan::Ins(j));
                fin += ins[j].1.arity;
            } else {
                plan.push(Plan::Unit(fin));
                fin += 1;
            }
        }
        let final_arity = fin;
        let mut out = PolyOp::zero(&self.world, final_arity);

        let ins_terms: Vec<Vec<(&OpTerm, &Scalar)>> =
            ins.iter().map(|(_, n)| n.terms.iter().collect()).collect();
        if ins_terms.iter().any(|v| v.is_empty()) {
            return out;
        }

        for (mterm, mc) in &self.terms {
            let m_word_parity: Vec<i64> = mterm
                .1
                .iter()
                .map(|w| w.degree(&self.world.duals).rem_euclid(2))
                .collect();
            let mut pick = vec![0usize; ins.len()];
            loop {
                let chosen: Vec<(&OpTerm, &Scalar)> = pick
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| ins_terms[j][k])
                    .collect();
                let mut coeff = mc.clone();
                for &(_, c) in &chosen {
                    coeff = &coeff * c;
                }
                let mut tr = SignTracker::new();
                // Shifted degree parity of each chosen inserted term.
                let nj_deg: Vec<i64> = chosen
                    .iter()
                    .enumerate()
                    .map(|(j, (t, _))| {
                        let n = ins[j].1;
                        let mut d = t.0.degree(&n.world.vars);
                        for w in &t.1 {
                            d += w.degree(&n.world.duals);
                        }
                        (d + self.world.shift * (n.arity as Degree - 1)).rem_euclid(2)
                    })
                    .collect();
                // (1) Composition prefactor: ‖N_j‖ · Σ_{l<off_j} ν_l.
                for (j, &d) in nj_deg.iter().enumerate() {
                    if d != 0 {
                        for l in 0..offsets[j] {
                            tr.add_lin(l, d);
                        }
                    }
                }
                // (2) The outer evaluation profile at intermediate inputs,
                // expanded in final input parities.
                for (s, p) in plan.iter().enumerate() {
                    let suffix: i64 = m_word_parity[s + 1..].iter().sum();
                    if suffix == 0 {
                        continue;
                    }
                    match *p {
                        Plan::Unit(f) => tr.add_lin(f, suffix),
                        Plan::Ins(j) => {
                            tr.add_const(nj_deg[j] * suffix);
                            for t in 0..ins[j].1.arity {
                                tr.add_lin(offsets[j] + t, suffix);
                            }
                        }
                    }
                }
                // (3) Each inserted term's own evaluation profile.
                for (j, (t, _)) in chosen.iter().enumerate() {
                    let wp: Vec<i64> = t
                        .1
                        .iter()
                        .map(|w| w.degree(&self.world.duals).rem_euclid(2))
                        .collect();
                    for ti in 0..t.1.len() {
                        let suffix: i64 = wp[ti + 1..].iter().sum();
                        if suffix != 0 {
                            tr.add_lin(offsets[j] + ti, suffix);
                        }
                    }
                }
                // (4) Build the factor list, applying outer words to the
                // inserted expansions.
                let mut states = vec![CState {
                    coeff,
                    tr,
                    facs: vec![Fac::World(mterm.0.clone())],
                }];
                for (s, p) in plan.iter().enumerate() {
                    match *p {
                        Plan::Unit(f) => {
                            for st in &mut states {
                                st.facs.push(Fac::Slot(f, mterm.1[s].clone()));
                            }
                        }
                        Plan::Ins(j) => {
                            let (t, _) = chosen[j];
                            let mut next = Vec::new();
                            for st in &states {
                                let tail = st.facs.len();
                                let mut st2 = st.clone();
                                st2.facs.push(Fac::World(t.0.clone()));
                                for (ti, w) in t.1.iter().enumerate() {
                                    st2.facs.push(Fac::Slot(offsets[j] + ti, w.clone()));
                                }
                                next.extend(self.apply_word_over_tail(
                                    &mterm.1[s],
                                    tail,
                                    vec![st2],
                                ));
                            }
                            states = next;
                        }
                    }
                }
                for st in states {
                    self.push_canonical(st, final_arity, &mut out);
                }
                // Advance the odometer over inserted terms.
                let mut j = 0;
                while j < ins.len() {
                    pick[j] += 1;
                    if pick[j] < ins_terms[j].len() {
                        break;
                    }
                    pick[j] = 0;
                    j += 1;
                }
                if j == ins.len() {
                    break;
                }
            }
        }
        out
    }

    /// Single-slot composition.
    pub fn compose_at(&self, pos: usize, other: &PolyOp) -> PolyOp {
        self.compose_many(&[(pos, other)])
    }

    /// Moves coefficient monomials to the front, merges them, subtracts the
    /// stored-form evaluation profile and records the term.
    fn push_canonical(&self, st: CState, final_arity: usize, out: &mut PolyOp) {
        let mut tr = st.tr;
        let mut coeff = st.coeff;
        let mut world_mono = Mono::unit();
        let mut slot_prefix = FDeg::constant(0);
        let mut slots: Vec<Option<Mono>> = vec![None; final_arity];
        for fac in &st.facs {
            match fac {
                Fac::World(a) => {
                    tr.cross(&self.fac_fdeg(fac), &slot_prefix);
                    match world_mono.mul(a, &self.world.vars) {
                        None => return,
                        Some((sgn, m)) => {
                            coeff = &coeff * &int(sgn);
                            world_mono = m;
                        }
                    }
                }
                Fac::Slot(l, d) => {
                    slot_prefix.add(&self.fac_fdeg(fac));
                    assert!(slots[*l].is_none(), "slot filled twice");
                    slots[*l] = Some(d.clone());
                }
            }
        }
        let ds: Vec<Mono> = slots
            .into_iter()
            .map(|s| s.expect("every final slot must be filled"))
            .collect();
        let wp: Vec<i64> = ds
            .iter()
            .map(|w| w.degree(&self.world.duals).rem_euclid(2))
            .collect();
        for j in 0..final_arity {
            let suffix: i64 = wp[j + 1..].iter().sum();
            if suffix != 0 {
                tr.add_lin(j, -suffix);
            }
        }
        let sign = tr.finalize(&self.world, "compose");
        out.add_term((world_mono, ds), &coeff * &int(sign));
    }

    /// Right action of a permutation on the slots:
    /// `(O·σ)(v⃗) = κ(σ; ν) · O(v_{σ(1)},…,v_{σ(n)})` with the Koszul sign in
    /// shifted input parities.
    pub fn act_slots(&self, perm: &Permutation) -> PolyOp {
        assert_eq!(perm.len(), self.arity);
        let mut out = PolyOp::zero(&self.world, self.arity);
        for (t, c) in &self.terms {
            let mut tr = SignTracker::new();
            let wp: Vec<i64> = t
                .1
                .iter()
                .map(|w| w.degree(&self.world.duals).rem_euclid(2))
                .collect();
            // Evaluation profile of the original term at permuted inputs.
            for j in 0..self.arity {
                let suffix: i64 = wp[j + 1..].iter().sum();
                if suffix != 0 {
                    tr.add_lin(perm.image(j), suffix);
                }
            }
            // Koszul sign of the permutation on the shifted input tensor.
            for i in 0..self.arity {
                for j in (i + 1)..self.arity {
                    if perm.image(i) > perm.image(j) {
                        tr.add_quad(perm.image(i), perm.image(j), 1);
                    }
                }
            }
            // Sort the slot factors into ascending final position.
            let mut facs: Vec<(usize, Mono)> = (0..self.arity)
                .map(|j| (perm.image(j), t.1[j].clone()))
                .collect();
            let mut swapped = true;
            while swapped {
                swapped = false;
                for k in 0..facs.len().saturating_sub(1) {
                    if facs[k].0 > facs[k + 1].0 {
                        let fa = self.fac_fdeg(&Fac::Slot(facs[k].0, facs[k].1.clone()));
                        let fb = self.fac_fdeg(&Fac::Slot(facs[k + 1].0, facs[k + 1].1.clone()));
                        tr.cross(&fa, &fb);
                        facs.swap(k, k + 1);
                        swapped = true;
                    }
                }
            }
            let ds: Vec<Mono> = facs.iter().map(|(_, d)| d.clone()).collect();
            let wp2: Vec<i64> = ds
                .iter()
                .map(|w| w.degree(&self.world.duals).rem_euclid(2))
                .collect();
            for j in 0..self.arity {
                let suffix: i64 = wp2[j + 1..].iter().sum();
                if suffix != 0 {
                    tr.add_lin(j, -suffix);
                }
            }
            let sign = tr.finalize(&self.world, "slot action");
            out.add_term((t.0.clone(), ds), c * &int(sign));
        }
        out
    }

    /// Symmetrization: the sum of all slot actions.
    pub fn symmetrize(&self) -> PolyOp {
        let mut out = PolyOp::zero(&self.world, self.arity);
        for p in Permutation::all(self.arity) {
            out = out.add(&self.act_slots(&p));
        }
        out
    }

    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(t, c)| {
                let slots: Vec<String> = t
                    .1
                    .iter()
                    .map(|w| mono_str(w, &self.world.duals))
                    .collect();
                format!(
                    "({}) {} ⊗ [{}]",
                    scalar_to_string(c),
                    mono_str(&t.0, &self.world.vars),
                    slots.join(", ")
                )
            })
            .collect();
        parts.join(" + ")
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(t, c)| {
                json!({
                    "coeff": scalar_to_string(c),
                    "monomial": mono_str(&t.0, &self.world.vars),
                    "slots": t.1.iter().map(|w| mono_str(w, &self.world.duals)).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({ "arity": self.arity, "terms": terms })
    }
}

fn mono_str(m: &Mono, table: &VarTable) -> String {
    if m.is_unit() {
        return "1".to_string();
    }
    m.exps()
        .iter()
        .map(|&(i, e)| {
            if e == 1 {
                table.name(i).to_string()
            } else {
                format!("{}^{}", table.name(i), e)
            }
        })
        .collect::<Vec<_>>()
        .join("·")
}

/// Brace insertion `x{y₁,…,y_k}`: the sum over strictly increasing slot
/// tuples of simultaneous compositions, with the engine's shifted-degree
/// signs.
pub fn op_brace(x: &PolyOp, ys: &[&PolyOp]) -> PolyOp {
    let k = ys.len();
    let total: usize = ys.iter().map(|y| y.arity).sum();
    let final_arity = x.arity + total - k;
    let mut out = PolyOp::zero(&x.world, final_arity);
    if k > x.arity {
        return out;
    }
    let pool: Vec<usize> = (1..=x.arity).collect();
    for positions in combinations(&pool, k) {
        let inserts: Vec<(usize, &PolyOp)> = positions
            .iter()
            .zip(ys.iter())
            .map(|(&p, &y)| (p, y))
            .collect();
        out = out.add(&x.compose_many(&inserts));
    }
    out
}

/// The Gerstenhaber bracket `[x,y] = x{y} − (−1)^{‖x‖‖y‖} y{x}` in shifted
/// degrees, extended bilinearly over homogeneous components.
pub fn op_bracket(x: &PolyOp, y: &PolyOp) -> PolyOp {
    assert!(x.arity + y.arity >= 1, "bracket of two 0-cochains is undefined");
    let mut out = PolyOp::zero(&x.world, x.arity + y.arity - 1);
    for (dx, xc) in x.homogeneous_components() {
        for (dy, yc) in y.homogeneous_components() {
            let sign = if (dx * dy).rem_euclid(2) == 0 { 1 } else { -1 };
            out = out
                .add(&op_brace(&xc, &[&yc]))
                .sub(&op_brace(&yc, &[&xc]).scale(&int(sign)));
        }
    }
    out
}

/// A graded affine space: coefficients A = K[x¹..x^d] with |xⁱ| = tᵢ, and
/// polyvectors V_A = K[x,θ] with |θᵢ| = 1 − tᵢ.
#[derive(Debug, Clone)]
pub struct AffineContext {
    pub dims: usize,
    pub t_degs: Vec<Degree>,
    pub degcap: u32,
    pub arity_cap: usize,
    /// Coefficient world of Hochschild cochains (inputs shifted by 1).
    pub a_world: World,
    /// Polyvector world (unshifted).
    pub va_world: World,
}

impl AffineContext {
    pub fn new(dims: usize, t_degs: Vec<Degree>, degcap: u32, arity_cap: usize) -> AffineContext {
        assert_eq!(t_degs.len(), dims);
        let a_vars: Vec<VarInfo> = (0..dims)
            .map(|i| VarInfo {
                name: format!("x{}", i + 1),
                degree: t_degs[i],
            })
            .collect();
        let mut va_vars = a_vars.clone();
        for (i, t) in t_degs.iter().enumerate() {
            va_vars.push(VarInfo {
                name: format!("th{}", i + 1),
                degree: 1 - t,
            });
        }
        AffineContext {
            dims,
            t_degs,
            degcap,
            arity_cap,
            a_world: World::new(a_vars, 1),
            va_world: World::new(va_vars, 0),
        }
    }

    pub fn ungraded(dims: usize, degcap: u32, arity_cap: usize) -> AffineContext {
        AffineContext::new(dims, vec![0; dims], degcap, arity_cap)
    }

    /// Index of xⁱ (0-based i) in either world.
    pub fn x(&self, i: usize) -> usize {
        i
    }

    /// Index of θᵢ (0-based i) in the polyvector world.
    pub fn theta(&self, i: usize) -> usize {
        self.dims + i
    }

    /// Product of polyvectors.
    pub fn wedge(&self, u: &SuperPoly, v: &SuperPoly) -> SuperPoly {
        u.mul(v, &self.va_world.vars)
    }

    /// The second-order operator Δ = Σᵢ ∂²/∂xⁱ∂θᵢ generating the Schouten
    /// bracket; Δ² = 0.
    pub fn delta_op(&self) -> PolyOp {
        let mut terms = Vec::new();
        for i in 0..self.dims {
            let word = Mono::from_pairs(&[(self.x(i), 1), (self.theta(i), 1)]);
            terms.push(((Mono::unit(), vec![word]), one()));
        }
        PolyOp::from_terms(&self.va_world, 1, terms)
    }

    /// Schouten bracket of two polyvectors: the degree −1 bracket generated
    /// by Δ in the convention
    /// {u,v} = −(−1)^{|u|} (Δ(uv) − Δ(u)·v − (−1)^{|u|} u·Δ(v)),
    /// normalized so that {θᵢ, x^j} = δᵢ^j;
    /// {u,v} = −(−1)^{(|u|−1)(|v|−1)} {v,u}.
    pub fn schouten(&self, u: &SuperPoly, v: &SuperPoly) -> SuperPoly {
        let vars = &self.va_world.vars;
        let delta = self.delta_op();
        let mut out = SuperPoly::zero();
        for (du, uc) in u.homogeneous_components(vars) {
            let sign_u = if du.rem_euclid(2) == 1 { -1 } else { 1 };
            for (_, vc) in v.homogeneous_components(vars) {
                let t1 = delta.eval(&[uc.mul(&vc, vars)]);
                let t2 = delta.eval(&[uc.clone()]).mul(&vc, vars);
                let t3 = uc
                    .mul(&delta.eval(&[vc.clone()]), vars)
                    .scale(&int(sign_u));
                let s = t1.sub(&t2).sub(&t3);
                out = out.add(&s.scale(&int(-sign_u)));
            }
        }
        out
    }

    /// The Euler derivation v ↦ Σᵢ θᵢ ∂v/∂θᵢ counting θ-factors.
    pub fn euler_op(&self) -> PolyOp {
        let mut terms = Vec::new();
        for i in 0..self.dims {
            terms.push((
                (Mono::var(self.theta(i)), vec![Mono::var(self.theta(i))]),
                one(),
            ));
        }
        PolyOp::from_terms(&self.va_world, 1, terms)
    }

    /// The product cochain of A.
    pub fn mu(&self) -> PolyOp {
        PolyOp::mu(&self.a_world)
    }

    /// Hochschild differential `[μ, ·]`.
    pub fn hochschild_diff(&self, o: &PolyOp) -> PolyOp {
        op_bracket(&self.mu(), o)
    }

    /// Cup product: μ composed with the two cochains side by side.
    pub fn cup(&self, a: &PolyOp, b: &PolyOp) -> PolyOp {
        self.mu().compose_many(&[(1, a), (2, b)])
    }

    pub fn gerstenhaber_bracket(&self, a: &PolyOp, b: &PolyOp) -> PolyOp {
        op_bracket(a, b)
    }

    /// Embeds a polyvector with k θ-factors as an arity-k cochain: the
    /// alternating sum over slot orders of first-order derivative operators,
    /// normalized so that hkr(θᵢ) = ∂/∂xⁱ (no 1/k! factor).
    pub fn hkr(&self, u: &SuperPoly) -> PolyOp {
        let mut arity = None;
        for (m, _) in u.terms() {
            let k: u64 = m
                .exps()
                .iter()
                .filter(|&&(i, _)| i >= self.dims)
                .map(|&(_, e)| e as u64)
                .sum();
            match arity {
                None => arity = Some(k as usize),
                Some(a) => assert_eq!(a, k as usize, "polyvector must have a uniform θ-count"),
            }
        }
        let k = arity.unwrap_or(0);
        let mut out = PolyOp::zero(&self.a_world, k);
        for (m, c) in u.terms() {
            let mut x_part: Vec<(usize, u32)> = Vec::new();
            let mut thetas: Vec<usize> = Vec::new();
            for &(i, e) in m.exps() {
                if i < self.dims {
                    x_part.push((i, e));
                } else {
                    for _ in 0..e {
                        thetas.push(i - self.dims);
                    }
                }
            }
            let coeff_mono = Mono::from_pairs(&x_part);
            let theta_degs: Vec<Degree> =
                thetas.iter().map(|&i| 1 - self.t_degs[i]).collect();
            for p in Permutation::all(k) {
                let sign = koszul_sign(&p, &theta_degs);
                let slots: Vec<Mono> = (0..k)
                    .map(|j| Mono::var(self.x(thetas[p.image(j)])))
                    .collect();
                out.add_term((coeff_mono.clone(), slots), c * &int(sign));
            }
        }
        out
    }

    /// Evaluates a brace tree on cochains: labeled vertices receive the
    /// operators routed in planar depth-first order, neutral vertices act
    /// by μ.  The routing carries the sign representation times the Koszul
    /// sign of the routing permutation in shifted degrees; this is the
    /// convention under which the two chain trees sum to the Gerstenhaber
    /// bracket and the evaluation is equivariant for relabeling.
    pub fn brace_eval(&self, tree: &BraceTree, ops: &[PolyOp]) -> PolyOp {
        let n = tree.arity();
        assert_eq!(ops.len(), n, "operator count must match tree arity");
        // Split the inputs into shifted-homogeneous components.
        let comps: Vec<Vec<(Degree, PolyOp)>> = ops
            .iter()
            .map(|o| o.homogeneous_components().into_iter().collect())
            .collect();
        if comps.iter().any(|c| c.is_empty()) {
            let arity = total_result_arity(tree, ops);
            return PolyOp::zero(&self.a_world, arity);
        }
        let labels = dfs_labels(&tree.top);
        let mut out: Option<PolyOp> = None;
        let mut idx = vec![0usize; n];
        loop {
            let chosen: Vec<&(Degree, PolyOp)> =
                idx.iter().enumerate().map(|(j, &k)| &comps[j][k]).collect();
            let degs: Vec<Degree> = chosen.iter().map(|c| c.0).collect();
            let perm_images: Vec<usize> = labels.iter().map(|&l| l - 1).collect();
            let perm = Permutation::new(perm_images).expect("labels form a permutation");
            // Routing uses the Koszul sign in shifted degrees twisted by the
            // sign representation: the identity-labeled chain trees must sum
            // to the Gerstenhaber bracket, which fixes this convention.
            let sign = koszul_sign(&perm, &degs) * perm.sign();
            let picked: Vec<&PolyOp> = chosen.iter().map(|c| &c.1).collect();
            let val = self
                .eval_node(&tree.top, &picked)
                .scale(&int(sign));
            out = Some(match out {
                None => val,
                Some(acc) => acc.add(&val),
            });
            let mut j = 0;
            while j < n {
                idx[j] += 1;
                if idx[j] < comps[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == n {
                break;
            }
        }
        out.unwrap()
    }

    fn eval_node(&self, node: &BraceNode, ops: &[&PolyOp]) -> PolyOp {
        let children = node.children();
        let vals: Vec<PolyOp> = children.iter().map(|c| self.eval_node(c, ops)).collect();
        let base = match node {
            BraceNode::Labeled { label, .. } => ops[label - 1].clone(),
            BraceNode::Neutral { .. } => self.mu(),
        };
        if vals.is_empty() {
            base
        } else {
            let refs: Vec<&PolyOp> = vals.iter().collect();
            op_brace(&base, &refs)
        }
    }

    /// Linear extension of `brace_eval` to brace-tree sums.
    pub fn brace_eval_element(&self, e: &BraceElement, ops: &[PolyOp]) -> PolyOp {
        let arity = if let Some((tree, _)) = e.terms().next() {
            total_result_arity(tree, ops)
        } else {
            0
        };
        let mut out = PolyOp::zero(&self.a_world, arity);
        for (tree, c) in e.terms() {
            out = out.add(&self.brace_eval(tree, ops).scale(c));
        }
        out
    }

    /// Monomial basis of polyvectors up to a total exponent bound.
    pub fn polyvector_basis(&self, max_total_exp: u64) -> Vec<Mono> {
        enumerate_monomials(&self.va_world.vars, max_total_exp)
    }

    /// Monomial basis of coefficients up to a total exponent bound.
    pub fn a_basis(&self, max_total_exp: u64) -> Vec<Mono> {
        enumerate_monomials(&self.a_world.vars, max_total_exp)
    }
}

fn dfs_labels(node: &BraceNode) -> Vec<usize> {
    let mut out = Vec::new();
    fn walk(n: &BraceNode, out: &mut Vec<usize>) {
        if let BraceNode::Labeled { label, .. } = n {
            out.push(*label);
        }
        for c in n.children() {
            walk(c, out);
        }
    }
    walk(node, &mut out);
    out
}

/// Arity of the operator produced by evaluating a tree on the given inputs:
/// each vertex contributes its operator's slots minus one per child.
fn total_result_arity(tree: &BraceTree, ops: &[PolyOp]) -> usize {
    fn walk(n: &BraceNode, ops: &[PolyOp]) -> i64 {
        let own = match n {
            BraceNode::Labeled { label, .. } => ops[label - 1].arity as i64,
            BraceNode::Neutral { .. } => 2,
        };
        let mut total = own;
        for c in n.children() {
            total += walk(c, ops) - 1;
        }
        total
    }
    walk(&tree.top, ops).max(0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lab(label: usize, children: Vec<BraceNode>) -> BraceNode {
        BraceNode::lab(label, children)
    }

    fn nu(children: Vec<BraceNode>) -> BraceNode {
        BraceNode::nu(children)
    }

    fn va_ctx() -> AffineContext {
        AffineContext::ungraded(2, 3, 4)
    }

    /// Equality that tolerates differing arity fields on the zero operator.
    fn ops_equal(a: &PolyOp, b: &PolyOp) -> bool {
        (a.is_zero() && b.is_zero()) || a == b
    }

    fn sp(m: Mono) -> SuperPoly {
        SuperPoly::monomial(m, one())
    }

    /// Random polydifferential operator over the given world.
    fn rand_op(world: &World, arity: usize, rng: &mut ChaCha8Rng, terms: usize) -> PolyOp {
        let nv = world.vars.len();
        let mut out = PolyOp::zero(world, arity);
        for _ in 0..terms {
            let mono = random_mono(nv, world, rng, 2);
            let slots: Vec<Mono> = (0..arity)
                .map(|_| random_dual(nv, world, rng))
                .collect();
            let c = int(rng.gen_range(-3..=3));
            out.add_term((mono, slots), c);
        }
        out
    }

    fn random_mono(nv: usize, world: &World, rng: &mut ChaCha8Rng, cap: u32) -> Mono {
        let mut pairs = Vec::new();
        for i in 0..nv {
            let max = if world.vars.parity(i) == 1 { 1 } else { cap };
            let e = rng.gen_range(0..=max);
            if e > 0 {
                pairs.push((i, e));
            }
        }
        Mono::from_pairs(&pairs)
    }

    fn random_dual(nv: usize, world: &World, rng: &mut ChaCha8Rng) -> Mono {
        let mut pairs = Vec::new();
        for i in 0..nv {
            let max = if world.duals.parity(i) == 1 { 1 } else { 2 };
            let e = rng.gen_range(0..=max);
            if e > 0 {
                pairs.push((i, e));
            }
        }
        Mono::from_pairs(&pairs)
    }

    fn random_poly(world: &World, rng: &mut ChaCha8Rng) -> SuperPoly {
        let nv = world.vars.len();
        let mut p = SuperPoly::zero();
        for _ in 0..3 {
            let m = random_mono(nv, world, rng, 2);
            p.add_term(m, int(rng.gen_range(-2..=2)));
        }
        p
    }

    #[test]
    fn evaluation_of_basic_operators() {
        let ctx = va_ctx();
        let mu = PolyOp::mu(&ctx.va_world);
        let th1 = sp(Mono::var(ctx.theta(0)));
        let x1 = sp(Mono::var(ctx.x(0)));
        assert_eq!(
            mu.eval(&[th1.clone(), x1.clone()]),
            th1.mul(&x1, &ctx.va_world.vars)
        );
        let id = PolyOp::identity(&ctx.va_world);
        assert_eq!(id.eval(&[x1.clone()]), x1);

        let euler = ctx.euler_op();
        assert_eq!(euler.eval(&[th1.clone()]), th1);
        assert!(euler.eval(&[x1.clone()]).is_zero());
        let th1th2 = sp(Mono::from_pairs(&[(ctx.theta(0), 1), (ctx.theta(1), 1)]));
        assert_eq!(
            euler.eval(&[th1th2.clone()]),
            th1th2.scale(&int(2))
        );
    }

    #[test]
    fn schouten_normalization_and_symmetry() {
        let ctx = va_ctx();
        let th1 = sp(Mono::var(ctx.theta(0)));
        let x1 = sp(Mono::var(ctx.x(0)));
        let x2 = sp(Mono::var(ctx.x(1)));
        assert_eq!(ctx.schouten(&th1, &x1), SuperPoly::unit());
        assert!(ctx.schouten(&th1, &x2).is_zero());
        assert!(ctx.schouten(&x1, &x2).is_zero());
        // Odd antisymmetry: {u,v} = −(−1)^{(|u|−1)(|v|−1)} {v,u}.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = random_poly(&ctx.va_world, &mut rng);
            let v = random_poly(&ctx.va_world, &mut rng);
            for (du, uc) in u.homogeneous_components(&ctx.va_world.vars) {
                for (dv, vc) in v.homogeneous_components(&ctx.va_world.vars) {
                    let lhs = ctx.schouten(&uc, &vc);
                    let sign = if ((du - 1) * (dv - 1)).rem_euclid(2) == 0 {
                        -1
                    } else {
                        1
                    };
                    let rhs = ctx.schouten(&vc, &uc).scale(&int(sign));
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn schouten_is_a_biderivation_with_jacobi() {
        let ctx = va_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vars = &ctx.va_world.vars;
        for _ in 0..12 {
            let u = random_poly(&ctx.va_world, &mut rng);
            let v = random_poly(&ctx.va_world, &mut rng);
            let w = random_poly(&ctx.va_world, &mut rng);
            // Leibniz in the second argument, per homogeneous u and v.
            for (du, uc) in u.homogeneous_components(vars) {
                for (dv, vc) in v.homogeneous_components(vars) {
                    let lhs = ctx.schouten(&uc, &vc.mul(&w, vars));
                    let sign = if ((du + 1) * dv).rem_euclid(2) == 0 { 1 } else { -1 };
                    let rhs = ctx
                        .schouten(&uc, &vc)
                        .mul(&w, vars)
                        .add(&vc.mul(&ctx.schouten(&uc, &w), vars).scale(&int(sign)));
                    assert_eq!(lhs, rhs, "Leibniz fails");
                }
            }
            // Graded Jacobi with degree −1 conventions.
            for (du, uc) in u.homogeneous_components(vars) {
                for (dv, vc) in v.homogeneous_components(vars) {
                    let lhs = ctx.schouten(&uc, &ctx.schouten(&vc, &w));
                    let sign = if ((du - 1) * (dv - 1)).rem_euclid(2) == 0 {
                        1
                    } else {
                        -1
                    };
                    let rhs = ctx
                        .schouten(&ctx.schouten(&uc, &vc), &w)
                        .add(&ctx.schouten(&vc, &ctx.schouten(&uc, &w)).scale(&int(sign)));
                    assert_eq!(lhs, rhs, "Jacobi fails");
                }
            }
        }
    }

    #[test]
    fn composition_matches_evaluation_oracle() {
        // The composite's evaluation must equal the nested evaluation with
        // the tensor-product prefactor, over a graded shift-0 world and a
        // graded shift-1 world alike.
        let worlds = [
            va_ctx().va_world,
            AffineContext::new(2, vec![2, 4], 3, 4).a_world,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for world in &worlds {
            for case in 0..40 {
                let m_arity = rng.gen_range(1..=2);
                let n_arity = rng.gen_range(0..=2);
                let m = rand_op(world, m_arity, &mut rng, 2);
                let n = rand_op(world, n_arity, &mut rng, 2);
                let pos = rng.gen_range(1..=m_arity);
                let comp = m.compose_many(&[(pos, &n)]);
                let args: Vec<SuperPoly> = (0..comp.arity)
                    .map(|_| random_poly(world, &mut rng))
                    .collect();
                // Nested evaluation, one homogeneous piece of n at a time.
                let mut expected = SuperPoly::zero();
                for (dn, nc) in n.homogeneous_components() {
                    let block: Vec<SuperPoly> = args[pos - 1..pos - 1 + n_arity].to_vec();
                    let inner = nc.eval(&block);
                    let mut outer_args: Vec<SuperPoly> = Vec::new();
                    outer_args.extend_from_slice(&args[..pos - 1]);
                    outer_args.push(inner);
                    outer_args.extend_from_slice(&args[pos - 1 + n_arity..]);
                    // Prefactor (−1)^{‖n‖·Σ_{l<pos} ν_l} over homogeneous
                    // leading arguments.
                    let mut term = SuperPoly::zero();
                    for combo in split_homog(&outer_args[..pos - 1], &world.vars) {
                        let exp: i64 = combo
                            .iter()
                            .map(|(d, _)| (d + world.shift).rem_euclid(2))
                            .sum::<i64>()
                            * dn.rem_euclid(2);
                        let mut full: Vec<SuperPoly> =
                            combo.iter().map(|(_, p)| p.clone()).collect();
                        full.extend_from_slice(&outer_args[pos - 1..]);
                        let v = m.eval(&full);
                        term = term.add(&if exp.rem_euclid(2) == 1 { v.neg() } else { v });
                    }
                    expected = expected.add(&term);
                }
                assert_eq!(comp.eval(&args), expected, "case {case}");
            }
        }
    }

    /// All ways of replacing each polynomial by one homogeneous component.
    fn split_homog(
        polys: &[SuperPoly],
        table: &VarTable,
    ) -> Vec<Vec<(Degree, SuperPoly)>> {
        let mut out: Vec<Vec<(Degree, SuperPoly)>> = vec![Vec::new()];
        for p in polys {
            let comps: Vec<(Degree, SuperPoly)> =
                p.homogeneous_components(table).into_iter().collect();
            let mut next = Vec::new();
            for prefix in &out {
                for c in &comps {
                    let mut row = prefix.clone();
                    row.push(c.clone());
                    next.push(row);
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn composition_oracle_over_shifted_even_world() {
        // Over the shift-1 coefficient world all inputs are even, so the
        // prefactor is (−1)^{‖n‖·(number of earlier slots)}.
        let ctx = va_ctx();
        let world = &ctx.a_world;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let m_arity = rng.gen_range(1..=3);
            let n_arity = rng.gen_range(0..=2);
            let m = rand_op(world, m_arity, &mut rng, 2);
            let n = rand_op(world, n_arity, &mut rng, 2);
            let pos = rng.gen_range(1..=m_arity);
            let comp = m.compose_many(&[(pos, &n)]);
            let args: Vec<SuperPoly> = (0..comp.arity)
                .map(|_| random_poly(world, &mut rng))
                .collect();
            let block: Vec<SuperPoly> = args[pos - 1..pos - 1 + n_arity].to_vec();
            let inner = n.eval(&block);
            let mut outer_args: Vec<SuperPoly> = Vec::new();
            outer_args.extend_from_slice(&args[..pos - 1]);
            outer_args.push(inner);
            outer_args.extend_from_slice(&args[pos - 1 + n_arity..]);
            let shifted = n.shifted_degree().unwrap_or(0);
            let exp = shifted.rem_euclid(2) * (pos as i64 - 1);
            let direct = m.eval(&outer_args);
            let expected = if exp.rem_euclid(2) == 1 {
                direct.neg()
            } else {
                direct
            };
            assert_eq!(comp.eval(&args), expected);
        }
    }

    #[test]
    fn slot_action_matches_evaluation_oracle() {
        let worlds = [
            va_ctx().va_world,
            AffineContext::new(2, vec![2, 4], 3, 4).a_world,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for world in &worlds {
            for _ in 0..30 {
                let arity = rng.gen_range(1..=3);
                let o = rand_op(world, arity, &mut rng, 2);
                let perms = Permutation::all(arity);
                let perm = &perms[rng.gen_range(0..perms.len())];
                let acted = o.act_slots(perm);
                let args: Vec<SuperPoly> = (0..arity)
                    .map(|_| random_poly(world, &mut rng))
                    .collect();
                let mut expected = SuperPoly::zero();
                for combo in split_homog(&args, &world.vars) {
                    let degs: Vec<Degree> =
                        combo.iter().map(|(d, _)| d + world.shift).collect();
                    let sign = koszul_sign(perm, &degs);
                    let permuted: Vec<SuperPoly> = (0..arity)
                        .map(|j| combo[perm.image(j)].1.clone())
                        .collect();
                    let v = o.eval(&permuted).scale(&int(sign));
                    expected = expected.add(&v);
                }
                assert_eq!(acted.eval(&args), expected);
            }
        }
    }

    #[test]
    fn slot_action_composes() {
        let ctx = va_ctx();
        let world = &ctx.va_world;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let o = rand_op(world, 3, &mut rng, 3);
        for s in Permutation::all(3) {
            for t in Permutation::all(3) {
                let lhs = o.act_slots(&s).act_slots(&t);
                let rhs = o.act_slots(&t.compose(&s));
                assert_eq!(lhs, rhs);
            }
        }
    }

    /// At shift 1 over a world with odd-degree variables, composites pick up
    /// a sign depending linearly on input parities, which this term
    /// representation cannot absorb; the sign tracker must refuse loudly
    /// rather than mис-sign the result.
    #[test]
    #[should_panic(expected = "residual linear parity dependence")]
    fn shifted_composition_over_odd_coordinates_is_rejected() {
        let ctx = AffineContext::new(1, vec![1], 2, 3);
        let m = PolyOp::mu(&ctx.a_world);
        let f = PolyOp::from_terms(
            &ctx.a_world,
            2,
            vec![((Mono::var(0), vec![Mono::unit(), Mono::unit()]), one())],
        );
        let _ = m.compose_many(&[(2, &f)]);
    }

    #[test]
    fn product_cochain_is_associative_in_the_brace_sense() {
        let ctx = va_ctx();
        let mu = ctx.mu();
        assert!(op_brace(&mu, &[&mu]).is_zero());
    }

    #[test]
    fn hochschild_differential_matches_simplicial_formula() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let world = &ctx.a_world;
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let f = rand_op(world, 1, &mut rng, 2);
            let df = ctx.hochschild_diff(&f);
            let a = random_poly(world, &mut rng);
            let b = random_poly(world, &mut rng);
            let vars = &world.vars;
            let expected = a
                .mul(&f.eval(&[b.clone()]), vars)
                .sub(&f.eval(&[a.mul(&b, vars)]))
                .add(&f.eval(&[a.clone()]).mul(&b, vars));
            assert_eq!(df.eval(&[a, b]), expected);
        }
    }

    #[test]
    fn hochschild_differential_squares_to_zero() {
        for ctx in [
            AffineContext::ungraded(2, 3, 4),
            AffineContext::new(2, vec![2, 4], 3, 4),
        ] {
            let world = &ctx.a_world;
            let mut rng = ChaCha8Rng::seed_from_u64(59);
            for arity in 0..=2 {
                for _ in 0..6 {
                    let o = rand_op(world, arity, &mut rng, 2);
                    let ddo = ctx.hochschild_diff(&ctx.hochschild_diff(&o));
                    assert!(ddo.is_zero(), "d² ≠ 0 at arity {arity}");
                }
            }
        }
    }

    #[test]
    fn hkr_normalization_and_cocycles() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let th1 = sp(Mono::var(ctx.theta(0)));
        let h = ctx.hkr(&th1);
        let a = sp(Mono::from_pairs(&[(0, 2), (1, 1)]));
        assert_eq!(
            h.eval(&[a.clone()]),
            a.left_partial(0, &ctx.va_world.vars)
        );
        assert!(ctx.hochschild_diff(&h).is_zero());
        // Every polyvector basis monomial maps to a distinct cocycle.
        let mut seen = Vec::new();
        for m in ctx.polyvector_basis(2) {
            let op = ctx.hkr(&sp(m.clone()));
            assert!(
                ctx.hochschild_diff(&op).is_zero(),
                "hkr({}) is not a cocycle",
                mono_str(&m, &ctx.va_world.vars)
            );
            assert!(!seen.contains(&op), "hkr is not injective");
            seen.push(op);
        }
    }

    #[test]
    fn hkr_of_unit_is_unit_cochain() {
        let ctx = AffineContext::ungraded(1, 2, 3);
        let h = ctx.hkr(&SuperPoly::unit());
        assert_eq!(h.arity, 0);
        assert_eq!(h.eval(&[]), SuperPoly::unit());
    }

    #[test]
    fn hkr_intertwines_schouten_and_gerstenhaber() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let th1 = sp(Mono::var(ctx.theta(0)));
        let x1th1 = sp(Mono::from_pairs(&[(ctx.x(0), 1), (ctx.theta(0), 1)]));
        let lhs = ctx.gerstenhaber_bracket(&ctx.hkr(&th1), &ctx.hkr(&x1th1));
        let rhs = ctx.hkr(&ctx.schouten(&th1, &x1th1));
        assert_eq!(lhs, rhs);
        // Two-θ pairs: one with a vanishing bracket, one without.
        let th1th2 = sp(Mono::from_pairs(&[(ctx.theta(0), 1), (ctx.theta(1), 1)]));
        for xvar in 0..2 {
            let w = sp(Mono::from_pairs(&[(ctx.x(xvar), 1), (ctx.theta(0), 1)]));
            let lhs2 = ctx.gerstenhaber_bracket(&ctx.hkr(&th1th2), &ctx.hkr(&w));
            let rhs2 = ctx.hkr(&ctx.schouten(&th1th2, &w));
            assert!(
                ops_equal(&lhs2, &rhs2),
                "bracket intertwining fails on x{}θ₁",
                xvar + 1
            );
            assert!(xvar == 1 || !lhs2.is_zero(), "expected a nonzero bracket");
        }
    }

    #[test]
    fn cup_of_vector_fields_antisymmetrizes_to_hkr() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let th1 = sp(Mono::var(ctx.theta(0)));
        let th2 = sp(Mono::var(ctx.theta(1)));
        let h1 = ctx.hkr(&th1);
        let h2 = ctx.hkr(&th2);
        let anti = ctx.cup(&h1, &h2).sub(&ctx.cup(&h2, &h1));
        let wedge = ctx.hkr(&ctx.wedge(&th1, &th2));
        assert_eq!(anti, wedge);
        // The symmetric defect is a Hochschild coboundary.
        let defect = ctx.cup(&h1, &h2).add(&ctx.cup(&h2, &h1));
        let primitive = PolyOp::from_terms(
            &ctx.a_world,
            1,
            vec![(
                (Mono::unit(), vec![Mono::from_pairs(&[(0, 1), (1, 1)])]),
                int(-1),
            )],
        );
        assert_eq!(defect, ctx.hochschild_diff(&primitive));
    }

    #[test]
    fn brace_eval_of_reference_trees() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let t_id = BraceTree::new(lab(1, vec![])).unwrap();
        let t = BraceTree::new(lab(1, vec![lab(2, vec![])])).unwrap();
        let t21 = BraceTree::new(lab(2, vec![lab(1, vec![])])).unwrap();
        let tcup = BraceTree::new(nu(vec![lab(1, vec![]), lab(2, vec![])])).unwrap();
        let tcup_opp = BraceTree::new(nu(vec![lab(2, vec![]), lab(1, vec![])])).unwrap();
        for _ in 0..12 {
            let p = rand_op(&ctx.a_world, rng.gen_range(1..=2), &mut rng, 2);
            let q = rand_op(&ctx.a_world, rng.gen_range(1..=2), &mut rng, 2);
            assert_eq!(ctx.brace_eval(&t_id, &[p.clone()]), p);
            // Sum of the two chain trees is the Gerstenhaber bracket.
            let sum = ctx
                .brace_eval(&t, &[p.clone(), q.clone()])
                .add(&ctx.brace_eval(&t21, &[p.clone(), q.clone()]));
            assert_eq!(sum, ctx.gerstenhaber_bracket(&p, &q));
            // The two-child neutral trees give the cup product both ways.
            assert_eq!(
                ctx.brace_eval(&tcup, &[p.clone(), q.clone()]),
                ctx.cup(&p, &q)
            );
            // Swapping the two children picks up the sign-twisted Koszul
            // factor -(-1)^{dp*dq} in shifted degrees.
            let dp = p.shifted_degree().unwrap_or(0);
            let dq = q.shifted_degree().unwrap_or(0);
            let sign = if (dp * dq).rem_euclid(2) == 0 { -1 } else { 1 };
            assert_eq!(
                ctx.brace_eval(&tcup_opp, &[p.clone(), q.clone()]),
                ctx.cup(&q, &p).scale(&int(sign))
            );
        }
    }

    #[test]
    fn brace_eval_sends_big_neutral_vertices_to_zero() {
        let ctx = AffineContext::ungraded(1, 2, 4);
        let tree = BraceTree::new(nu(vec![lab(1, vec![]), lab(2, vec![]), lab(3, vec![])]))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let ops: Vec<PolyOp> = (0..3)
            .map(|_| rand_op(&ctx.a_world, 1, &mut rng, 2))
            .collect();
        assert!(ctx.brace_eval(&tree, &ops).is_zero());
    }

    #[test]
    fn brace_eval_degree_matches_tree_degree() {
        let ctx = AffineContext::ungraded(2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for tree in crate::brace::enumerate_brace_trees(2, 1) {
            let ops: Vec<PolyOp> = (0..2)
                .map(|_| rand_op(&ctx.a_world, rng.gen_range(1..=2), &mut rng, 1))
                .collect();
            let val = ctx.brace_eval(&tree, &ops);
            if val.is_zero() {
                continue;
            }
            let expected: Degree = tree.degree()
                + ops
                    .iter()
                    .map(|o| o.cochain_degree().unwrap_or(0))
                    .sum::<Degree>();
            assert_eq!(val.cochain_degree(), Some(expected));
        }
    }

    #[test]
    fn brace_eval_is_sign_equivariant() {
        // Relabeling a tree by a permutation matches permuting the inputs,
        // up to the sign representation times the Koszul sign of the
        // permutation in shifted degrees -- the same twist the routing uses.
        let ctx = AffineContext::ungraded(2, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for n in 2..=3usize {
            let trees = crate::brace::enumerate_brace_trees(n, 1);
            for sigma in Permutation::all(n) {
                for tree in trees.iter().take(8) {
                    let relabeled = tree.map_labels(&|j| sigma.image(j - 1) + 1);
                    for _ in 0..2 {
                        let q: Vec<PolyOp> = (0..n)
                            .map(|_| rand_op(&ctx.a_world, rng.gen_range(1..=2), &mut rng, 1))
                            .collect();
                        let dq: Vec<Degree> = q
                            .iter()
                            .map(|o| o.shifted_degree().unwrap_or(0))
                            .collect();
                        let lhs = ctx.brace_eval(&relabeled, &q);
                        let permuted: Vec<PolyOp> =
                            (0..n).map(|l| q[sigma.image(l)].clone()).collect();
                        let rhs = ctx.brace_eval(tree, &permuted);
                        let sign = koszul_sign(&sigma, &dq) * sigma.sign();
                        assert!(
                            ops_equal(&lhs, &rhs.scale(&int(sign))),
                            "equivariance failed: sigma={:?} tree={}",
                            sigma.images(),
                            tree.render()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn circle_product_homotopy_matches_cup_commutator() {
        // The coboundary of a single brace x{y} decomposes over (dx){y},
        // x{dy} and the two cup products.  The four signs depend only on the
        // shifted-degree parities of x and y; each parity class is
        // calibrated by its first constraining sample and must stay fixed.
        let ctx = AffineContext::ungraded(2, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let mut fixed: [Option<[i64; 4]>; 4] = [None; 4];
        for rep in 0..24 {
            let ax = 1 + (rep % 2);
            let ay = 1 + ((rep / 2) % 2);
            let x = rand_op(&ctx.a_world, ax, &mut rng, 2);
            let y = rand_op(&ctx.a_world, ay, &mut rng, 2);
            let lhs = ctx.hochschild_diff(&op_brace(&x, &[&y]));
            let parts = [
                op_brace(&ctx.hochschild_diff(&x), &[&y]),
                op_brace(&x, &[&ctx.hochschild_diff(&y)]),
                ctx.cup(&x, &y),
                ctx.cup(&y, &x),
            ];
            let combo = |s: &[i64; 4]| {
                let mut out = PolyOp::zero(&ctx.a_world, ax + ay);
                for (c, part) in s.iter().zip(&parts) {
                    out = out.add(&part.scale(&int(*c)));
                }
                out
            };
            let class = (ax - 1) * 2 + (ay - 1);
            if let Some(s) = fixed[class] {
                assert!(
                    ops_equal(&lhs, &combo(&s)),
                    "sign tuple for parity class {class} drifted"
                );
            } else {
                let mut fits: Vec<[i64; 4]> = Vec::new();
                for mask in 0..16u32 {
                    let s = [
                        if mask & 1 == 0 { 1 } else { -1 },
                        if mask & 2 == 0 { 1 } else { -1 },
                        if mask & 4 == 0 { 1 } else { -1 },
                        if mask & 8 == 0 { 1 } else { -1 },
                    ];
                    if ops_equal(&lhs, &combo(&s)) {
                        fits.push(s);
                    }
                }
                if fits.len() == 1 {
                    fixed[class] = Some(fits[0]);
                }
            }
        }
        // Measured law: d(x{y}) = (dx){y} + (-1)^{n_x} x{dy}
        //                         - cup(x,y) - (-1)^{n_x n_y} cup(y,x),
        // so the single brace is a homotopy for the Koszul-symmetrized cup.
        for (class, s) in fixed.iter().enumerate() {
            let (nx, ny) = ((class / 2) as i64, (class % 2) as i64);
            let sx = 1 - 2 * (nx % 2);
            let sxy = 1 - 2 * ((nx * ny) % 2);
            assert_eq!(
                *s,
                Some([1, sx, -1, -sxy]),
                "measured homotopy signs for parity class {class}: {fixed:?}"
            );
        }
    }
}
