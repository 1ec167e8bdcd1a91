//! Moment relaxations of polynomial optimization over quantum realizations.
//!
//! A basis of words `u` defines the moment matrix `Γ_uv = ⟨u† v⟩`. Entries
//! are keyed by the canonical word of `u† v`; since all functionals used here
//! have real coefficients, `⟨w⟩` and `⟨w†⟩` share one real variable keyed by
//! the smaller of the two words.
//!
//! A relaxation may carry several moment groups (one per guessed outcome in
//! the guessing-probability problem). Every group has its own variables and
//! its own copy of the moment matrix; normalization and behavior constraints
//! act on the sum over groups.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kfactory::{ConstraintSet, KPolynomial, Pinching};
use crate::opalg::{adjoint, canonicalize, multiply, product, Monomial, OperatorSymbol, Party, Polynomial, RuleSet};
use crate::sdp::{Entry, Equality, SdpProblem, Sense};

/// Per-party word depths of the basis plus optional explicit words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub alice_depth: usize,
    pub bob_depth: usize,
    #[serde(skip)]
    pub extra_words: Vec<Monomial>,
}

impl BasisSpec {
    pub fn new(alice_depth: usize, bob_depth: usize) -> Self {
        Self { alice_depth, bob_depth, extra_words: Vec::new() }
    }

    pub fn with_extra_words(mut self, words: Vec<Monomial>) -> Self {
        self.extra_words = words;
        self
    }
}

/// Canonical single-party words up to length `depth`.
fn party_words(rules: &RuleSet, party: Party, depth: usize) -> Vec<Vec<OperatorSymbol>> {
    let settings = rules.card.inputs(party);
    let outcomes = rules.explicit_outcomes(party);
    let mut all = vec![Vec::new()];
    let mut frontier = vec![Vec::<OperatorSymbol>::new()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &frontier {
            for x in 0..settings {
                if w.last().is_some_and(|s: &OperatorSymbol| s.setting as usize == x) {
                    continue;
                }
                for a in 0..outcomes {
                    let mut v = w.clone();
                    v.push(OperatorSymbol { party, setting: x as u8, outcome: a as u8 });
                    next.push(v);
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// All canonical words `(Alice word)·(Bob word)` within the depths, plus the
/// explicit extra words and all of their suffixes, in graded order.
pub fn generate_basis(spec: &BasisSpec, rules: &RuleSet) -> Result<Vec<Monomial>> {
    let mut set = BTreeSet::new();
    let aw = party_words(rules, Party::Alice, spec.alice_depth);
    let bw = party_words(rules, Party::Bob, spec.bob_depth);
    for a in &aw {
        for b in &bw {
            let mut w = a.clone();
            w.extend_from_slice(b);
            set.insert(Monomial::from_canonical(w));
        }
    }
    for w in &spec.extra_words {
        let c = canonicalize(w.symbols(), rules)?.ok_or_else(|| Error::Domain(format!("extra word {w} is zero")))?;
        let mut s = c.symbols().to_vec();
        loop {
            set.insert(Monomial::from_canonical(s.clone()));
            if s.is_empty() {
                break;
            }
            s.remove(0);
        }
    }
    Ok(set.into_iter().collect())
}

/// Identifies one real moment variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MomentKey {
    pub group: usize,
    pub word: Monomial,
}

fn key_word(w: Monomial) -> Monomial {
    let a = w.adjoint();
    if a < w {
        a
    } else {
        w
    }
}

/// Moment matrix of one group: `entries[r * n + c]` is the moment id of
/// `⟨basis[r]† basis[c]⟩`, or `None` where the product vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBlock {
    pub group: usize,
    pub basis: Vec<Monomial>,
    pub entries: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRelaxation {
    pub groups: usize,
    pub blocks: Vec<MomentBlock>,
    pub moments: Vec<MomentKey>,
    index: HashMap<MomentKey, usize>,
    pub equalities: Vec<Equality>,
    /// Equality row of each behavior constraint `j`.
    pub constraint_rows: Vec<usize>,
    pub objective: Vec<(usize, f64)>,
    /// Identity equalities dropped because a product left the moment set.
    pub skipped_identity_pairs: usize,
    pub identity_equalities: usize,
}

impl MomentRelaxation {
    /// Moment matrices for `groups` copies of `basis`, without constraints.
    pub fn assemble(groups: usize, basis: &[Monomial]) -> Self {
        let n = basis.len();
        let adj: Vec<Monomial> = basis.iter().map(|u| u.adjoint()).collect();
        let mut words: Vec<Option<Monomial>> = Vec::with_capacity(n * n);
        for ua in &adj {
            for v in basis {
                words.push(product(ua, v).map(key_word));
            }
        }
        let distinct: BTreeSet<&Monomial> = words.iter().flatten().collect();
        let mut moments = Vec::with_capacity(groups * distinct.len());
        for g in 0..groups {
            for w in &distinct {
                moments.push(MomentKey { group: g, word: (*w).clone() });
            }
        }
        let index: HashMap<MomentKey, usize> = moments.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let blocks = (0..groups)
            .map(|g| MomentBlock {
                group: g,
                basis: basis.to_vec(),
                entries: words
                    .iter()
                    .map(|w| w.as_ref().map(|w| index[&MomentKey { group: g, word: w.clone() }]))
                    .collect(),
            })
            .collect();
        Self {
            groups,
            blocks,
            moments,
            index,
            equalities: Vec::new(),
            constraint_rows: Vec::new(),
            objective: Vec::new(),
            skipped_identity_pairs: 0,
            identity_equalities: 0,
        }
    }

    pub fn num_moments(&self) -> usize {
        self.moments.len()
    }

    pub fn moment_id(&self, group: usize, word: &Monomial) -> Option<usize> {
        self.index.get(&MomentKey { group, word: key_word(word.clone()) }).copied()
    }

    fn require(&self, group: usize, word: &Monomial) -> Result<usize> {
        self.moment_id(group, word).ok_or_else(|| Error::IncreaseLevel { word: word.to_string() })
    }

    /// Real linear functional of the moments equal to `⟨p⟩` in group `group`.
    pub fn linear_form(&self, group: usize, p: &Polynomial) -> Result<Vec<(usize, f64)>> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (m, c) in p.terms() {
            *acc.entry(self.require(group, m)?).or_default() += c.re;
        }
        let mut v: Vec<(usize, f64)> = acc.into_iter().filter(|t| t.1 != 0.0).collect();
        v.sort_by_key(|t| t.0);
        Ok(v)
    }

    /// Moment ids of the given words in group `group`.
    pub fn word_ids(&self, group: usize, words: &[Monomial]) -> Result<Vec<usize>> {
        words.iter().map(|w| self.require(group, w)).collect()
    }

    fn summed_form(&self, p: &Polynomial) -> Result<Vec<(usize, f64)>> {
        let mut v = Vec::new();
        for g in 0..self.groups {
            v.extend(self.linear_form(g, p)?);
        }
        v.sort_by_key(|t| t.0);
        Ok(v)
    }

    /// `Σ_g ⟨1⟩_g = 1`.
    pub fn add_normalization(&mut self) -> Result<()> {
        let terms = self.summed_form(&Polynomial::identity())?;
        self.equalities.push(Equality { terms, rhs: 1.0 });
        Ok(())
    }

    /// `Σ_g ⟨L_j⟩_g = l_j` for every functional.
    pub fn add_constraints(&mut self, cs: &ConstraintSet, rules: &RuleSet) -> Result<()> {
        for j in 0..cs.len() {
            let terms = self.summed_form(&cs.functional(j, rules)?)?;
            self.constraint_rows.push(self.equalities.len());
            self.equalities.push(Equality { terms, rhs: cs.targets[j] });
        }
        Ok(())
    }

    /// Update the targets of the behavior constraints in place.
    pub fn set_targets(&mut self, targets: &[f64]) -> Result<()> {
        if targets.len() != self.constraint_rows.len() {
            return domain("target count differs from the constraint count");
        }
        for (&row, &t) in self.constraint_rows.iter().zip(targets) {
            self.equalities[row].rhs = t;
        }
        Ok(())
    }

    /// `⟨u† I v⟩ = 0` for each extra identity `I` and basis pair `u <= v`
    /// whose product words are all moments. Other pairs are counted as
    /// skipped.
    pub fn add_identities(&mut self, rules: &RuleSet) -> Result<()> {
        if rules.extra_identities.is_empty() {
            return Ok(());
        }
        for ident in &rules.extra_identities {
            if ident.max_abs_imag() > 0.0 {
                return domain("extra identities must have real coefficients");
            }
        }
        let mut seen: HashSet<Vec<(usize, u64)>> = HashSet::new();
        let mut new_rows = Vec::new();
        let mut skipped = 0;
        for block in self.blocks.clone() {
            let basis = &block.basis;
            for (i, u) in basis.iter().enumerate() {
                let ud = adjoint(&Polynomial::monomial(u.clone()));
                for v in &basis[i..] {
                    for ident in &rules.extra_identities {
                        let p = multiply(&multiply(&ud, ident, rules), &Polynomial::monomial(v.clone()), rules);
                        if p.is_zero() {
                            continue;
                        }
                        match self.linear_form(block.group, &p) {
                            Ok(terms) => {
                                let max = terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs()));
                                let terms: Vec<(usize, f64)> =
                                    terms.into_iter().filter(|t| t.1.abs() > 1e-13 * max).collect();
                                if terms.is_empty() {
                                    continue;
                                }
                                let lead = terms[0].1;
                                let sig: Vec<(usize, u64)> =
                                    terms.iter().map(|t| (t.0, ((t.1 / lead) * 1e9).round() as i64 as u64)).collect();
                                if seen.insert(sig) {
                                    new_rows.push(Equality { terms, rhs: 0.0 });
                                }
                            }
                            Err(Error::IncreaseLevel { .. }) => skipped += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        self.identity_equalities += new_rows.len();
        self.skipped_identity_pairs += skipped;
        self.equalities.extend(new_rows);
        Ok(())
    }

    /// Replace the objective by `Σ_(g, p) ⟨p⟩_g`.
    pub fn set_objective(&mut self, parts: &[(usize, Polynomial)]) -> Result<()> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (g, p) in parts {
            for (id, c) in self.linear_form(*g, p)? {
                *acc.entry(id).or_default() += c;
            }
        }
        let mut v: Vec<(usize, f64)> = acc.into_iter().collect();
        v.sort_by_key(|t| t.0);
        self.objective = v;
        Ok(())
    }

    /// Per-group trace bound `Σ_g n` used by certification.
    fn trace_bound(&self) -> f64 {
        self.blocks.iter().map(|b| b.basis.len() as f64).sum()
    }
}

/// Moment relaxation of `sup ⟨objective⟩` subject to the behavior
/// constraints and the identities of `rules`.
pub fn build_polynomial_relaxation(
    objective: &Polynomial,
    cs: &ConstraintSet,
    spec: &BasisSpec,
    rules: &RuleSet,
) -> Result<MomentRelaxation> {
    if cs.card != rules.card {
        return domain("constraint set and rule set disagree on cardinalities");
    }
    let basis = generate_basis(spec, rules)?;
    let mut rel = MomentRelaxation::assemble(1, &basis);
    rel.add_normalization()?;
    rel.add_constraints(cs, rules)?;
    rel.add_identities(rules)?;
    rel.set_objective(&[(0, objective.clone())])?;
    Ok(rel)
}

/// Relaxation of the inner problem `sup ⟨K⟩` for the entropy bound.
pub fn build_relaxation(k: &KPolynomial, cs: &ConstraintSet, spec: &BasisSpec, rules: &RuleSet) -> Result<MomentRelaxation> {
    build_polynomial_relaxation(&k.poly, cs, spec, rules)
}

/// Guessing-probability relaxation: one sub-normalized moment block per
/// guessed key value, behavior constraints on the sum, objective
/// `Σ_g ⟨Π_g⟩_g` for the key projector(s) `Π_g`.
pub fn build_guessing_relaxation(
    target: Pinching,
    cs: &ConstraintSet,
    spec: &BasisSpec,
    rules: &RuleSet,
) -> Result<MomentRelaxation> {
    if cs.card != rules.card {
        return domain("constraint set and rule set disagree on cardinalities");
    }
    let card = rules.card;
    let guesses: Vec<Polynomial> = match target {
        Pinching::OneParty { alice_key } => {
            (0..card.alice_outputs).map(|a| rules.projector(Party::Alice, alice_key, a)).collect::<Result<_>>()?
        }
        Pinching::TwoParty { alice_key, bob_key } => {
            let mut v = Vec::new();
            for a in 0..card.alice_outputs {
                for b in 0..card.bob_outputs {
                    let pa = rules.projector(Party::Alice, alice_key, a)?;
                    let pb = rules.projector(Party::Bob, bob_key, b)?;
                    v.push(multiply(&pa, &pb, rules));
                }
            }
            v
        }
    };
    let basis = generate_basis(spec, rules)?;
    let mut rel = MomentRelaxation::assemble(guesses.len(), &basis);
    rel.add_normalization()?;
    rel.add_constraints(cs, rules)?;
    rel.add_identities(rules)?;
    let parts: Vec<(usize, Polynomial)> = guesses.into_iter().enumerate().collect();
    rel.set_objective(&parts)?;
    Ok(rel)
}

/// Linear matrix inequality form with one variable per moment.
pub fn to_sdp(rel: &MomentRelaxation, sense: Sense) -> SdpProblem {
    let sizes: Vec<usize> = rel.blocks.iter().map(|b| b.basis.len()).collect();
    let mut p = SdpProblem::new(sense, sizes, rel.num_moments());
    for (bi, block) in rel.blocks.iter().enumerate() {
        let n = block.basis.len();
        for r in 0..n {
            for c in r..n {
                if let Some(id) = block.entries[r * n + c] {
                    p.coefficients[id].push(Entry { block: bi, row: r, col: c, value: 1.0 });
                }
            }
        }
    }
    for &(id, c) in &rel.objective {
        p.objective[id] += c;
    }
    p.equalities = rel.equalities.clone();
    p.var_bound = 1.0;
    p.trace_bound = rel.trace_bound();
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::Cardinalities;
    use crate::sdp::{certify_upper_bound, solve, SolverOptions, Status};

    fn rules() -> RuleSet {
        RuleSet::new(Cardinalities::chsh(), true)
    }

    #[test]
    fn basis_sizes() {
        let r = rules();
        let b = generate_basis(&BasisSpec::new(1, 1), &r).unwrap();
        assert_eq!(b.len(), 9);
        assert_eq!(b[0], Monomial::identity());
        let names: Vec<String> = b.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["1", "A(0,0)", "A(1,0)", "B(0,0)", "B(1,0)", "A(0,0)B(0,0)", "A(0,0)B(1,0)", "A(1,0)B(0,0)", "A(1,0)B(1,0)"]);
        assert_eq!(generate_basis(&BasisSpec::new(0, 0), &r).unwrap(), vec![Monomial::identity()]);
        assert_eq!(generate_basis(&BasisSpec::new(5, 4), &r).unwrap().len(), 99);
    }

    #[test]
    fn extra_words_are_suffix_closed() {
        let r = rules();
        let w = canonicalize(&[OperatorSymbol::alice(0, 0), OperatorSymbol::alice(1, 0), OperatorSymbol::bob(0, 0)], &r)
            .unwrap()
            .unwrap();
        let b = generate_basis(&BasisSpec::new(0, 0).with_extra_words(vec![w]), &r).unwrap();
        let names: Vec<String> = b.iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["1", "B(0,0)", "A(1,0)B(0,0)", "A(0,0)A(1,0)B(0,0)"]);
    }

    #[test]
    fn moment_matrix_is_symmetric() {
        let r = rules();
        let rel = build_polynomial_relaxation(&Polynomial::identity(), &ConstraintSet::empty(r.card), &BasisSpec::new(2, 2), &r)
            .unwrap();
        let b = &rel.blocks[0];
        let n = b.basis.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(b.entries[i * n + j], b.entries[j * n + i]);
            }
        }
        assert_eq!(b.entries[0], rel.moment_id(0, &Monomial::identity()));
    }

    fn chsh_polynomial(r: &RuleSet) -> Polynomial {
        let mut p = Polynomial::zero();
        for x in 0..2 {
            for y in 0..2 {
                let sign = if x * y == 1 { -1.0 } else { 1.0 };
                for a in 0..2 {
                    for b in 0..2 {
                        let s = if a == b { 1.0 } else { -1.0 };
                        let t = multiply(&r.projector(Party::Alice, x, a).unwrap(), &r.projector(Party::Bob, y, b).unwrap(), r);
                        p = p.add(&t.scale(num_complex::Complex64::new(sign * s, 0.0)));
                    }
                }
            }
        }
        p
    }

    #[test]
    fn tsirelson() {
        let r = rules();
        let rel = build_polynomial_relaxation(&chsh_polynomial(&r), &ConstraintSet::empty(r.card), &BasisSpec::new(1, 1), &r)
            .unwrap();
        let p = to_sdp(&rel, Sense::Maximize);
        assert_eq!(p.blocks, vec![9]);
        assert_eq!(p.equalities.len(), 1);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        let t = 2.0 * std::f64::consts::SQRT_2;
        assert!((s.primal_objective - t).abs() < 1e-6, "{}", s.primal_objective);
        let c = certify_upper_bound(&p, &s).unwrap();
        assert!(c.bound >= t && c.bound <= t + 1e-5, "{c:?}");
    }

    #[test]
    fn identity_objective_has_optimum_one() {
        let r = rules();
        let rel = build_polynomial_relaxation(&Polynomial::identity(), &ConstraintSet::empty(r.card), &BasisSpec::new(1, 1), &r)
            .unwrap();
        let p = to_sdp(&rel, Sense::Maximize);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let c = certify_upper_bound(&p, &s).unwrap();
        assert!((c.bound - 1.0).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn missing_word_asks_for_a_higher_level() {
        let r = rules();
        let w = canonicalize(&[OperatorSymbol::alice(0, 0), OperatorSymbol::alice(1, 0), OperatorSymbol::alice(0, 0)], &r)
            .unwrap()
            .unwrap();
        let e = build_polynomial_relaxation(&Polynomial::monomial(w), &ConstraintSet::empty(r.card), &BasisSpec::new(1, 1), &r)
            .unwrap_err();
        assert!(matches!(e, Error::IncreaseLevel { ref word } if word == "A(0,0)A(1,0)A(0,0)"), "{e}");
    }

    #[test]
    fn guessing_blocks() {
        let r = rules();
        let rel = build_guessing_relaxation(Pinching::OneParty { alice_key: 0 }, &ConstraintSet::empty(r.card), &BasisSpec::new(1, 1), &r)
            .unwrap();
        let p = to_sdp(&rel, Sense::Maximize);
        assert_eq!(p.blocks, vec![9, 9]);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let c = certify_upper_bound(&p, &s).unwrap();
        assert!((c.bound - 1.0).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn export_round_trip() {
        let r = rules();
        let rel = build_polynomial_relaxation(&chsh_polynomial(&r), &ConstraintSet::empty(r.card), &BasisSpec::new(1, 1), &r)
            .unwrap();
        let p = to_sdp(&rel, Sense::Maximize);
        assert_eq!(SdpProblem::from_text(&p.to_text()).unwrap(), p);
    }
}
