//! Noncommutative polynomials over projective-measurement symbols.
//!
//! Words are products of projectors `Π_a^x` (Alice) and `Π_b^y` (Bob). The
//! built-in rewrite system is
//!
//! * idempotence: `Π_a^x Π_a^x = Π_a^x`,
//! * orthogonality: `Π_a^x Π_{a'}^x = 0` for `a != a'`,
//! * commutation of Alice and Bob symbols.
//!
//! Canonical words list all Alice symbols before all Bob symbols and never
//! contain two adjacent symbols of the same party and setting. The rules are
//! local and never lengthen a word, so the canonical form is unique.
//!
//! With completeness elimination enabled the last outcome of every setting is
//! not a symbol of its own: [`RuleSet::projector`] expands it as `1 - Σ others`.
//! Extra operator identities are carried along but never used for rewriting;
//! the relaxation turns them into moment equalities.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// One projector `Π_outcome^setting` of one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorSymbol {
    pub party: Party,
    pub setting: u8,
    pub outcome: u8,
}

impl OperatorSymbol {
    pub const fn alice(setting: u8, outcome: u8) -> Self {
        Self { party: Party::Alice, setting, outcome }
    }

    pub const fn bob(setting: u8, outcome: u8) -> Self {
        Self { party: Party::Bob, setting, outcome }
    }
}

impl fmt::Display for OperatorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.party {
            Party::Alice => 'A',
            Party::Bob => 'B',
        };
        write!(f, "{p}({},{})", self.setting, self.outcome)
    }
}

/// Input and output alphabet sizes of a bipartite scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cardinalities {
    pub alice_inputs: usize,
    pub bob_inputs: usize,
    pub alice_outputs: usize,
    pub bob_outputs: usize,
}

impl Cardinalities {
    pub const fn new(alice_inputs: usize, bob_inputs: usize, alice_outputs: usize, bob_outputs: usize) -> Self {
        Self { alice_inputs, bob_inputs, alice_outputs, bob_outputs }
    }

    /// The 2-input 2-output scenario.
    pub const fn chsh() -> Self {
        Self::new(2, 2, 2, 2)
    }

    pub fn inputs(&self, party: Party) -> usize {
        match party {
            Party::Alice => self.alice_inputs,
            Party::Bob => self.bob_inputs,
        }
    }

    pub fn outputs(&self, party: Party) -> usize {
        match party {
            Party::Alice => self.alice_outputs,
            Party::Bob => self.bob_outputs,
        }
    }

    /// Number of entries of a table indexed `(a, b, x, y)`.
    pub fn table_len(&self) -> usize {
        self.alice_outputs * self.bob_outputs * self.alice_inputs * self.bob_inputs
    }

    /// Flat index of `(a, b, x, y)`; `a` is the slowest axis.
    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((a * self.bob_outputs + b) * self.alice_inputs + x) * self.bob_inputs + y
    }
}

/// A canonical word. The empty word is the identity.
///
/// Ordering is graded lexicographic: shorter words first, then symbol by
/// symbol with Alice before Bob.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<OperatorSymbol>);

impl Monomial {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn symbols(&self) -> &[OperatorSymbol] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of symbols belonging to `party`.
    pub fn party_len(&self, party: Party) -> usize {
        self.0.iter().filter(|s| s.party == party).count()
    }

    /// Split into the Alice part and the Bob part.
    pub fn split(&self) -> (&[OperatorSymbol], &[OperatorSymbol]) {
        let k = self.0.iter().position(|s| s.party == Party::Bob).unwrap_or(self.0.len());
        self.0.split_at(k)
    }

    /// Adjoint of a canonical word: each party's part is reversed.
    pub fn adjoint(&self) -> Monomial {
        let (a, b) = self.split();
        let mut w = Vec::with_capacity(self.0.len());
        w.extend(a.iter().rev());
        w.extend(b.iter().rev());
        Monomial(w)
    }

    /// Assumes the symbols are already canonical.
    pub(crate) fn from_canonical(symbols: Vec<OperatorSymbol>) -> Self {
        Self(symbols)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Rewrite rules plus the identities asserted for characterized devices.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub card: Cardinalities,
    pub elimination: bool,
    pub extra_identities: Vec<Polynomial>,
}

impl RuleSet {
    pub fn new(card: Cardinalities, elimination: bool) -> Self {
        Self { card, elimination, extra_identities: Vec::new() }
    }

    pub fn with_identities(mut self, identities: Vec<Polynomial>) -> Self {
        self.extra_identities = identities;
        self
    }

    /// Outcomes that are represented by their own symbol.
    pub fn explicit_outcomes(&self, party: Party) -> usize {
        let n = self.card.outputs(party);
        if self.elimination {
            n.saturating_sub(1)
        } else {
            n
        }
    }

    pub fn check_symbol(&self, s: OperatorSymbol) -> Result<()> {
        let inputs = self.card.inputs(s.party);
        if s.setting as usize >= inputs {
            return domain(format!("{s}: setting out of range (party has {inputs} settings)"));
        }
        let outs = self.explicit_outcomes(s.party);
        if s.outcome as usize >= outs {
            return domain(format!("{s}: outcome out of range ({outs} explicit outcomes)"));
        }
        Ok(())
    }

    /// The projector of `(party, setting, outcome)` as a polynomial. Under
    /// completeness elimination the last outcome becomes `1 - Σ others`.
    pub fn projector(&self, party: Party, setting: usize, outcome: usize) -> Result<Polynomial> {
        if setting >= self.card.inputs(party) || outcome >= self.card.outputs(party) {
            return domain(format!("projector {party:?}({setting},{outcome}) out of range"));
        }
        let sym = |a: usize| OperatorSymbol { party, setting: setting as u8, outcome: a as u8 };
        if self.elimination && outcome + 1 == self.card.outputs(party) {
            let mut p = Polynomial::identity();
            for a in 0..outcome {
                p.add_term(Monomial(vec![sym(a)]), Complex64::new(-1.0, 0.0));
            }
            Ok(p)
        } else {
            Ok(Polynomial::monomial(Monomial(vec![sym(outcome)])))
        }
    }

    /// Expand a raw word that may mention eliminated outcomes into a canonical
    /// polynomial.
    pub fn expand_word(&self, word: &[OperatorSymbol]) -> Result<Polynomial> {
        let mut acc = Polynomial::identity();
        for s in word {
            let p = self.projector(s.party, s.setting as usize, s.outcome as usize)?;
            acc = multiply(&acc, &p, self);
        }
        Ok(acc)
    }
}

/// Canonicalize a product of symbols. Returns `None` when two orthogonal
/// projectors meet.
pub fn canonicalize(word: &[OperatorSymbol], rules: &RuleSet) -> Result<Option<Monomial>> {
    for &s in word {
        rules.check_symbol(s)?;
    }
    Ok(canonical_symbols(word).map(Monomial))
}

/// Rewrite without validating symbol ranges.
pub(crate) fn canonical_symbols(word: &[OperatorSymbol]) -> Option<Vec<OperatorSymbol>> {
    let mut out: Vec<OperatorSymbol> = Vec::with_capacity(word.len());
    let mut n_alice = 0usize;
    for party in [Party::Alice, Party::Bob] {
        for &s in word.iter().filter(|s| s.party == party) {
            let last = if party == Party::Alice || out.len() > n_alice { out.last() } else { None };
            match last {
                Some(t) if t.setting == s.setting => {
                    if t.outcome != s.outcome {
                        return None;
                    }
                }
                _ => out.push(s),
            }
        }
        if party == Party::Alice {
            n_alice = out.len();
        }
    }
    Some(out)
}

/// Canonical product of two canonical words.
pub(crate) fn product(u: &Monomial, v: &Monomial) -> Option<Monomial> {
    let (ua, ub) = u.split();
    let (va, vb) = v.split();
    let mut out = Vec::with_capacity(u.len() + v.len());
    out.extend_from_slice(ua);
    if !join(&mut out, va) {
        return None;
    }
    let mark = out.len();
    out.extend_from_slice(ub);
    if out.len() == mark {
        out.extend_from_slice(vb);
    } else if !join(&mut out, vb) {
        return None;
    }
    Some(Monomial(out))
}

/// Append `tail` to a party segment ending at `out`, merging at the seam.
fn join(out: &mut Vec<OperatorSymbol>, tail: &[OperatorSymbol]) -> bool {
    let Some(first) = tail.first() else { return true };
    match out.last() {
        Some(t) if t.party == first.party && t.setting == first.setting => {
            if t.outcome != first.outcome {
                return false;
            }
            out.extend_from_slice(&tail[1..]);
        }
        _ => out.extend_from_slice(tail),
    }
    true
}

/// A finite sum of canonical words with complex coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, Complex64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::monomial(Monomial::identity())
    }

    pub fn monomial(m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(m, Complex64::new(1.0, 0.0));
        Self { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Complex64)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, m: Monomial, c: Complex64) {
        if c == Complex64::default() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == Complex64::default() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut p = self.clone();
        for (m, c) in &other.terms {
            p.add_term(m.clone(), *c);
        }
        p
    }

    pub fn scale(&self, s: Complex64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), c * s)))
    }

    /// Drop terms whose magnitude is below `rel` times the largest one.
    pub fn prune(&mut self, rel: f64) -> usize {
        let max = self.terms.values().map(|c| c.norm()).fold(0.0, f64::max);
        let before = self.terms.len();
        self.terms.retain(|_, c| c.norm() > rel * max);
        before - self.terms.len()
    }

    /// True when `self` equals its adjoint up to `tol` per coefficient.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let adj = adjoint(self);
        let diff = self.add(&adj.scale(Complex64::new(-1.0, 0.0)));
        diff.terms.values().all(|c| c.norm() <= tol)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}*{m}", c.re)?;
            } else {
                write!(f, "({}{:+}i)*{m}", c.re, c.im)?;
            }
        }
        Ok(())
    }
}

/// Distribute, canonicalize every product word, and merge coefficients.
pub fn multiply(p: &Polynomial, q: &Polynomial, _rules: &RuleSet) -> Polynomial {
    let mut out = Polynomial::zero();
    for (u, cu) in &p.terms {
        for (v, cv) in &q.terms {
            if let Some(w) = product(u, v) {
                out.add_term(w, cu * cv);
            }
        }
    }
    out
}

/// Reverse every word and conjugate every coefficient.
pub fn adjoint(p: &Polynomial) -> Polynomial {
    Polynomial::from_terms(p.terms.iter().map(|(m, c)| (m.adjoint(), c.conj())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(elim: bool) -> RuleSet {
        RuleSet::new(Cardinalities::chsh(), elim)
    }

    fn a(x: u8, o: u8) -> OperatorSymbol {
        OperatorSymbol::alice(x, o)
    }

    fn b(y: u8, o: u8) -> OperatorSymbol {
        OperatorSymbol::bob(y, o)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn idempotence() {
        let m = canonicalize(&[a(0, 0), a(0, 0)], &rules(false)).unwrap().unwrap();
        assert_eq!(m.symbols(), &[a(0, 0)]);
    }

    #[test]
    fn orthogonal_outcomes_vanish() {
        assert_eq!(canonicalize(&[a(0, 0), a(0, 1)], &rules(false)).unwrap(), None);
    }

    #[test]
    fn parties_commute() {
        let m = canonicalize(&[b(0, 0), a(1, 0)], &rules(false)).unwrap().unwrap();
        assert_eq!(m.symbols(), &[a(1, 0), b(0, 0)]);
    }

    #[test]
    fn commutation_exposes_bob_merge() {
        // B0 A1 B0 -> A1 B0 B0 -> A1 B0
        let m = canonicalize(&[b(0, 0), a(1, 0), b(0, 0)], &rules(false)).unwrap().unwrap();
        assert_eq!(m.symbols(), &[a(1, 0), b(0, 0)]);
        assert_eq!(canonicalize(&[b(0, 0), a(1, 0), b(0, 1)], &rules(false)).unwrap(), None);
    }

    #[test]
    fn invalid_symbols_rejected() {
        assert!(canonicalize(&[a(2, 0)], &rules(false)).is_err());
        assert!(canonicalize(&[a(0, 2)], &rules(false)).is_err());
        // Last outcome has no symbol of its own under elimination.
        assert!(canonicalize(&[a(0, 1)], &rules(true)).is_err());
    }

    #[test]
    fn identity_is_neutral() {
        let r = rules(false);
        let p = Polynomial::from_terms([
            (Monomial(vec![a(0, 0), b(1, 1)]), c(2.0, -1.0)),
            (Monomial(vec![a(1, 0)]), c(0.5, 0.0)),
        ]);
        assert_eq!(multiply(&Polynomial::identity(), &p, &r), p);
        assert_eq!(multiply(&p, &Polynomial::identity(), &r), p);
    }

    #[test]
    fn orthogonal_product_is_zero() {
        let r = rules(false);
        let p = Polynomial::monomial(Monomial(vec![a(0, 0)]));
        let q = Polynomial::monomial(Monomial(vec![a(0, 1)]));
        assert!(multiply(&p, &q, &r).is_zero());
    }

    #[test]
    fn completeness_sum() {
        let r = rules(false);
        let sum = r.projector(Party::Alice, 0, 0).unwrap().add(&r.projector(Party::Alice, 0, 1).unwrap());
        let bob = Polynomial::monomial(Monomial(vec![b(0, 0)]));
        let prod = multiply(&sum, &bob, &r);
        assert_eq!(prod.len(), 2);
        assert_eq!(prod.coefficient(&Monomial(vec![a(0, 0), b(0, 0)])), c(1.0, 0.0));
        assert_eq!(prod.coefficient(&Monomial(vec![a(0, 1), b(0, 0)])), c(1.0, 0.0));

        let r = rules(true);
        let sum = r.projector(Party::Alice, 0, 0).unwrap().add(&r.projector(Party::Alice, 0, 1).unwrap());
        assert_eq!(sum, Polynomial::identity());
        assert_eq!(multiply(&sum, &bob, &r), bob);
    }

    #[test]
    fn adjoint_examples() {
        let p = Polynomial::from_terms([(Monomial(vec![a(0, 0), b(0, 0)]), c(1.0, 2.0))]);
        let q = adjoint(&p);
        assert_eq!(q.coefficient(&Monomial(vec![a(0, 0), b(0, 0)])), c(1.0, -2.0));

        let p = Polynomial::monomial(Monomial(vec![a(0, 0), a(1, 0)]));
        assert_eq!(adjoint(&p), Polynomial::monomial(Monomial(vec![a(1, 0), a(0, 0)])));

        let m = Monomial(vec![a(0, 0), a(1, 0), b(1, 0)]);
        let h = Polynomial::from_terms([
            (m.clone(), c(0.3, 0.7)),
            (m.adjoint(), c(0.3, -0.7)),
            (Monomial::identity(), c(2.0, 0.0)),
        ]);
        assert!(h.is_hermitian(0.0));
        assert_eq!(adjoint(&h), h);
    }

    #[test]
    fn expand_word_eliminates_last_outcome() {
        let r = rules(true);
        // Π_1^0 Π_0^0 = (1 - Π_0^0) Π_0^0 = 0
        assert!(r.expand_word(&[a(0, 1), a(0, 0)]).unwrap().is_zero());
        // Π_1^0 Π_1^1 = 1 - A0 - A1 + A0 A1
        let p = r.expand_word(&[a(0, 1), a(1, 1)]).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.coefficient(&Monomial(vec![a(0, 0), a(1, 0)])), c(1.0, 0.0));
        assert_eq!(p.coefficient(&Monomial::identity()), c(1.0, 0.0));
    }

    #[test]
    fn graded_order() {
        let mut v = [Monomial(vec![b(0, 0)]),
            Monomial(vec![a(0, 0), b(0, 0)]),
            Monomial::identity(),
            Monomial(vec![a(1, 0)])];
        v.sort();
        assert_eq!(v[0], Monomial::identity());
        assert_eq!(v[1], Monomial(vec![a(1, 0)]));
        assert_eq!(v[2], Monomial(vec![b(0, 0)]));
    }
}
