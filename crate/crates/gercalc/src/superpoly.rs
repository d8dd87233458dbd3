//! Free graded-commutative polynomial algebra on a finite variable table.
//!
//! A variable carries an integer degree; only its parity affects signs.
//! Odd variables square to zero, even variables have unrestricted exponents.
//! Monomials store their factors in ascending variable order, and every sign
//! produced here comes from resorting factor lists with the Koszul rule.

use crate::graded::Degree;
use crate::scalar::{is_zero, one, zero, Scalar};
use serde_json::{json, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub degree: Degree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarTable {
    vars: Vec<VarInfo>,
}

impl VarTable {
    pub fn new(vars: Vec<VarInfo>) -> Self {
        let mut names: Vec<&str> = vars.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), vars.len(), "duplicate variable names");
        VarTable { vars }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn degree(&self, i: usize) -> Degree {
        self.vars[i].degree
    }

    pub fn parity(&self, i: usize) -> i64 {
        self.vars[i].degree.rem_euclid(2)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }
}

/// Monomial: factors sorted by ascending variable index, exponents positive,
/// odd variables at most once.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Mono(Vec<(usize, u32)>);

impl Mono {
    pub fn unit() -> Self {
        Mono(Vec::new())
    }

    pub fn var(i: usize) -> Self {
        Mono(vec![(i, 1)])
    }

    pub fn from_pairs(pairs: &[(usize, u32)]) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for &(i, e) in pairs {
            if e > 0 {
                *merged.entry(i).or_insert(0) += e;
            }
        }
        Mono(merged.into_iter().collect())
    }

    pub fn exps(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn exponent_of(&self, var: usize) -> u32 {
        self.0
            .iter()
            .find(|&&(i, _)| i == var)
            .map_or(0, |&(_, e)| e)
    }

    pub fn degree(&self, table: &VarTable) -> Degree {
        self.0
            .iter()
            .map(|&(i, e)| table.degree(i) * e as Degree)
            .sum()
    }

    pub fn total_exponent(&self) -> u64 {
        self.0.iter().map(|&(_, e)| e as u64).sum()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies monomials, tracking the Koszul sign of resorting factors.
    /// Returns None when an odd variable would appear twice.
    pub fn mul(&self, other: &Mono, table: &VarTable) -> Option<(i64, Mono)> {
        let mut exp_sum: i64 = 0;
        for &(ia, ea) in &self.0 {
            let pa = table.parity(ia) * ea as i64;
            if pa == 0 {
                continue;
            }
            for &(ib, eb) in &other.0 {
                if ib < ia {
                    exp_sum += pa * table.parity(ib) * eb as i64;
                }
            }
        }
        let mut merged: BTreeMap<usize, u32> = self.0.iter().copied().collect();
        for &(i, e) in &other.0 {
            let slot = merged.entry(i).or_insert(0);
            *slot += e;
            if table.parity(i) == 1 && *slot > 1 {
                return None;
            }
        }
        let sign = if exp_sum % 2 == 0 { 1 } else { -1 };
        Some((sign, Mono(merged.into_iter().collect())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SuperPoly {
    terms: BTreeMap<Mono, Scalar>,
}

impl SuperPoly {
    pub fn zero() -> Self {
        SuperPoly::default()
    }

    pub fn unit() -> Self {
        SuperPoly::monomial(Mono::unit(), one())
    }

    pub fn var(i: usize) -> Self {
        SuperPoly::monomial(Mono::var(i), one())
    }

    pub fn monomial(m: Mono, c: Scalar) -> Self {
        let mut p = SuperPoly::default();
        p.add_term(m, c);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Scalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Mono) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(zero)
    }

    pub fn add_term(&mut self, m: Mono, c: Scalar) {
        if is_zero(&c) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
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

    pub fn add(&self, other: &SuperPoly) -> SuperPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &SuperPoly) -> SuperPoly {
        self.add(&other.scale(&-one()))
    }

    pub fn scale(&self, s: &Scalar) -> SuperPoly {
        if is_zero(s) {
            return SuperPoly::zero();
        }
        SuperPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * s))
                .collect(),
        }
    }

    pub fn neg(&self) -> SuperPoly {
        self.scale(&-one())
    }

    pub fn mul(&self, other: &SuperPoly, table: &VarTable) -> SuperPoly {
        let mut out = SuperPoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some((sign, m)) = ma.mul(mb, table) {
                    out.add_term(m, ca * cb * crate::scalar::int(sign));
                }
            }
        }
        out
    }

    /// Left partial derivative with respect to variable `v`:
    /// ∂(fg) = (∂f)g + (-1)^{|v||f|} f(∂g).
    pub fn left_partial(&self, v: usize, table: &VarTable) -> SuperPoly {
        let pv = table.parity(v);
        let mut out = SuperPoly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent_of(v);
            if e == 0 {
                continue;
            }
            // Parity of the factors standing to the left of v.
            let prefix_parity: i64 = m
                .exps()
                .iter()
                .filter(|&&(i, _)| i < v)
                .map(|&(i, ee)| table.parity(i) * ee as i64)
                .sum();
            let sign = if (pv * prefix_parity) % 2 == 0 { 1 } else { -1 };
            let reduced = Mono::from_pairs(
                &m.exps()
                    .iter()
                    .map(|&(i, ee)| if i == v { (i, ee - 1) } else { (i, ee) })
                    .collect::<Vec<_>>(),
            );
            out.add_term(
                reduced,
                c * crate::scalar::int(sign * e as i64),
            );
        }
        out
    }

    /// Homogeneous degree: `Some(d)` when all terms share degree d, `None`
    /// for the zero polynomial, panic on mixed terms.
    pub fn degree(&self, table: &VarTable) -> Option<Degree> {
        let mut it = self.terms.keys();
        let first = it.next()?.degree(table);
        for m in it {
            assert_eq!(m.degree(table), first, "inhomogeneous polynomial");
        }
        Some(first)
    }

    pub fn is_homogeneous_of(&self, d: Degree, table: &VarTable) -> bool {
        self.terms.keys().all(|m| m.degree(table) == d)
    }

    /// Splits into degree-homogeneous components, ascending by degree.
    pub fn homogeneous_components(&self, table: &VarTable) -> BTreeMap<Degree, SuperPoly> {
        let mut out: BTreeMap<Degree, SuperPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.degree(table))
                .or_insert_with(SuperPoly::zero)
                .add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn render(&self, table: &VarTable) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (m, c) in &self.terms {
            parts.push(render_term(m, c, table));
        }
        let mut s = String::new();
        for (k, p) in parts.iter().enumerate() {
            if k == 0 {
                s.push_str(p);
            } else if let Some(rest) = p.strip_prefix('-') {
                s.push_str(" - ");
                s.push_str(rest);
            } else {
                s.push_str(" + ");
                s.push_str(p);
            }
        }
        s
    }

    pub fn to_json(&self, table: &VarTable) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mono: Vec<Value> = m
                    .exps()
                    .iter()
                    .map(|&(i, e)| json!([table.name(i), e]))
                    .collect();
                json!({
                    "coeff": crate::scalar::scalar_to_string(c),
                    "mono": mono,
                })
            })
            .collect();
        Value::Array(terms)
    }
}

fn render_term(m: &Mono, c: &Scalar, table: &VarTable) -> String {
    let mono_str = if m.is_unit() {
        String::new()
    } else {
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
            .join("*")
    };
    let coeff_str = crate::scalar::scalar_to_string(c);
    if mono_str.is_empty() {
        coeff_str
    } else if coeff_str == "1" {
        mono_str
    } else if coeff_str == "-1" {
        format!("-{mono_str}")
    } else {
        format!("{coeff_str}*{mono_str}")
    }
}

/// All monomials with total exponent at most `max_total_exp`, ascending in
/// the monomial order (deterministic).
pub fn enumerate_monomials(table: &VarTable, max_total_exp: u64) -> Vec<Mono> {
    let mut out = Vec::new();
    let mut cur: Vec<(usize, u32)> = Vec::new();
    fn rec(
        table: &VarTable,
        var: usize,
        budget: u64,
        cur: &mut Vec<(usize, u32)>,
        out: &mut Vec<Mono>,
    ) {
        if var == table.len() {
            out.push(Mono::from_pairs(cur));
            return;
        }
        let cap = if table.parity(var) == 1 {
            1.min(budget)
        } else {
            budget
        };
        for e in 0..=cap {
            if e > 0 {
                cur.push((var, e as u32));
            }
            rec(table, var + 1, budget - e, cur, out);
            if e > 0 {
                cur.pop();
            }
        }
    }
    rec(table, 0, max_total_exp, &mut cur, &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::int;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn xt_table() -> VarTable {
        // One even and two odd variables.
        VarTable::new(vec![
            VarInfo { name: "x".into(), degree: 0 },
            VarInfo { name: "th1".into(), degree: 1 },
            VarInfo { name: "th2".into(), degree: 1 },
        ])
    }

    fn random_poly(rng: &mut StdRng, table: &VarTable) -> SuperPoly {
        let monos = enumerate_monomials(table, 3);
        let mut p = SuperPoly::zero();
        for _ in 0..4 {
            let m = monos[rng.gen_range(0..monos.len())].clone();
            let c = int(rng.gen_range(-3..=3));
            p.add_term(m, c);
        }
        p
    }

    #[test]
    fn odd_variables_square_to_zero() {
        let t = xt_table();
        let th1 = SuperPoly::var(1);
        assert!(th1.mul(&th1, &t).is_zero());
    }

    #[test]
    fn odd_variables_anticommute() {
        let t = xt_table();
        let th1 = SuperPoly::var(1);
        let th2 = SuperPoly::var(2);
        let a = th1.mul(&th2, &t);
        let b = th2.mul(&th1, &t);
        assert_eq!(a, b.neg());
        assert!(!a.is_zero());
    }

    #[test]
    fn even_variable_is_central() {
        let t = xt_table();
        let x = SuperPoly::var(0);
        let th1 = SuperPoly::var(1);
        assert_eq!(x.mul(&th1, &t), th1.mul(&x, &t));
    }

    #[test]
    fn multiplication_is_associative() {
        let t = xt_table();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..60 {
            let a = random_poly(&mut rng, &t);
            let b = random_poly(&mut rng, &t);
            let c = random_poly(&mut rng, &t);
            assert_eq!(a.mul(&b, &t).mul(&c, &t), a.mul(&b.mul(&c, &t), &t));
        }
    }

    #[test]
    fn homogeneous_supercommutativity() {
        let t = xt_table();
        let monos = enumerate_monomials(&t, 3);
        for ma in &monos {
            for mb in &monos {
                let a = SuperPoly::monomial(ma.clone(), int(1));
                let b = SuperPoly::monomial(mb.clone(), int(1));
                let ab = a.mul(&b, &t);
                let ba = b.mul(&a, &t);
                let sign = if (ma.degree(&t) * mb.degree(&t)) % 2 == 0 {
                    int(1)
                } else {
                    int(-1)
                };
                assert_eq!(ab, ba.scale(&sign), "failed on {ma:?} * {mb:?}");
            }
        }
    }

    #[test]
    fn left_partial_satisfies_leibniz() {
        let t = xt_table();
        let monos = enumerate_monomials(&t, 2);
        for v in 0..t.len() {
            for ma in &monos {
                for mb in &monos {
                    let f = SuperPoly::monomial(ma.clone(), int(1));
                    let g = SuperPoly::monomial(mb.clone(), int(1));
                    let fg = f.mul(&g, &t);
                    let lhs = fg.left_partial(v, &t);
                    let sign = if (t.degree(v) * ma.degree(&t)) % 2 == 0 {
                        int(1)
                    } else {
                        int(-1)
                    };
                    let rhs = f
                        .left_partial(v, &t)
                        .mul(&g, &t)
                        .add(&f.mul(&g.left_partial(v, &t), &t).scale(&sign));
                    assert_eq!(lhs, rhs, "Leibniz failed for v={v} {ma:?} {mb:?}");
                }
            }
        }
    }

    #[test]
    fn mixed_partials_supercommute() {
        let t = xt_table();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..40 {
            let p = random_poly(&mut rng, &t);
            // Odd/odd partials anticommute, even/odd commute.
            for u in 0..t.len() {
                for v in 0..t.len() {
                    let uv = p.left_partial(v, &t).left_partial(u, &t);
                    let vu = p.left_partial(u, &t).left_partial(v, &t);
                    let sign = if (t.degree(u) * t.degree(v)) % 2 == 0 {
                        int(1)
                    } else {
                        int(-1)
                    };
                    assert_eq!(uv, vu.scale(&sign));
                }
            }
        }
    }

    #[test]
    fn second_odd_partial_vanishes() {
        let t = xt_table();
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..20 {
            let p = random_poly(&mut rng, &t);
            assert!(p.left_partial(1, &t).left_partial(1, &t).is_zero());
        }
    }

    #[test]
    fn monomial_enumeration_counts() {
        let t = xt_table();
        // Budget 2 over (even x, odd th1, odd th2):
        // 1, x, x^2, th1, th2, x*th1, x*th2, th1*th2  -> 8.
        assert_eq!(enumerate_monomials(&t, 2).len(), 8);
        assert_eq!(enumerate_monomials(&t, 0).len(), 1);
    }

    #[test]
    fn degree_and_render() {
        let t = xt_table();
        let p = SuperPoly::monomial(Mono::from_pairs(&[(0, 2), (1, 1)]), int(-3));
        assert_eq!(p.degree(&t), Some(1));
        assert_eq!(p.render(&t), "-3*x^2*th1");
        assert_eq!(SuperPoly::zero().render(&t), "0");
        let q = SuperPoly::unit().sub(&SuperPoly::var(0));
        assert_eq!(q.render(&t), "1 - x");
    }
}
