//! Construction of the operator polynomial `K` whose expectation controls the
//! entropy bound.
//!
//! For weights `w_abxy = Σ_j λ_j c^(j)_abxy` the integrand is
//!
//! ```text
//! |P(t)|² = P(t)† P(t),   P(t) = Π_{(x,y) in order} Σ_ab exp((1+it) w_abxy / 2) Π_a^x Π_b^y
//! ```
//!
//! Expanding `P` into terms `s` (one `(a, b)` choice per factor) with total
//! weight `W_s`, a pair `(s, s')` of an adjoint term and a direct term carries
//! `exp((1-it) W_s / 2 + (1+it) W_s' / 2)`. Integrating against
//! `β(t) = (π/2) / (cosh(πt) + 1)` gives the real coefficient
//! [`pair_coefficient`]`(W_s, W_s')`. The pinching map then conjugates every
//! pair word with the key projectors.
//!
//! The word structure depends only on the cardinalities, the factor order and
//! the pinching; [`KStructure`] precomputes it once so that re-weighting for a
//! new `λ` is a single pass over the pair list.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::opalg::{canonical_symbols, Cardinalities, Monomial, OperatorSymbol, Party, Polynomial, RuleSet};
use crate::par;

/// Relative magnitude below which K coefficients are dropped.
pub const PRUNE_REL: f64 = 1e-15;

/// Bell-type functionals `L_j = Σ c^(j)_abxy Π_a^x Π_b^y` with targets `l_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub card: Cardinalities,
    /// Row-major `(j, a, b, x, y)`, see [`Cardinalities::index`].
    pub coefficients: Vec<f64>,
    pub targets: Vec<f64>,
    pub labels: Vec<String>,
}

impl ConstraintSet {
    pub fn new(card: Cardinalities, coefficients: Vec<f64>, targets: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if coefficients.len() != targets.len() * card.table_len() {
            return domain(format!(
                "coefficient table has {} entries, expected {} x {}",
                coefficients.len(),
                targets.len(),
                card.table_len()
            ));
        }
        if labels.len() != targets.len() {
            return domain("one label per constraint required");
        }
        if coefficients.iter().chain(&targets).any(|v| !v.is_finite()) {
            return domain("non-finite coefficient or target");
        }
        Ok(Self { card, coefficients, targets, labels })
    }

    pub fn empty(card: Cardinalities) -> Self {
        Self { card, coefficients: Vec::new(), targets: Vec::new(), labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn table(&self, j: usize) -> &[f64] {
        let n = self.card.table_len();
        &self.coefficients[j * n..(j + 1) * n]
    }

    pub fn coefficient(&self, j: usize, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.table(j)[self.card.index(a, b, x, y)]
    }

    /// Input pairs `(x, y)` on which some functional has a nonzero coefficient.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let c = self.card;
        let mut out = Vec::new();
        for x in 0..c.alice_inputs {
            for y in 0..c.bob_inputs {
                let used = (0..self.len()).any(|j| {
                    (0..c.alice_outputs)
                        .any(|a| (0..c.bob_outputs).any(|b| self.coefficient(j, a, b, x, y) != 0.0))
                });
                if used {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// `Σ_j λ_j l_j`.
    pub fn lambda_dot_targets(&self, lambda: &LambdaVector) -> f64 {
        lambda.0.iter().zip(&self.targets).map(|(l, t)| l * t).sum()
    }

    /// The functional `L_j` as a polynomial under `rules`.
    pub fn functional(&self, j: usize, rules: &RuleSet) -> Result<Polynomial> {
        let c = self.card;
        let mut p = Polynomial::zero();
        for a in 0..c.alice_outputs {
            for b in 0..c.bob_outputs {
                for x in 0..c.alice_inputs {
                    for y in 0..c.bob_inputs {
                        let v = self.coefficient(j, a, b, x, y);
                        if v == 0.0 {
                            continue;
                        }
                        let pa = rules.projector(Party::Alice, x, a)?;
                        let pb = rules.projector(Party::Bob, y, b)?;
                        let term = crate::opalg::multiply(&pa, &pb, rules);
                        p = p.add(&term.scale(Complex64::new(v, 0.0)));
                    }
                }
            }
        }
        Ok(p)
    }
}

/// Dual weights `λ_j`, one per functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaVector(pub Vec<f64>);

impl LambdaVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

/// `w_abxy = Σ_j λ_j c^(j)_abxy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub card: Cardinalities,
    pub values: Vec<f64>,
}

impl WeightTable {
    pub fn zeros(card: Cardinalities) -> Self {
        Self { card, values: vec![0.0; card.table_len()] }
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.values[self.card.index(a, b, x, y)]
    }

    pub fn set(&mut self, a: usize, b: usize, x: usize, y: usize, v: f64) {
        let i = self.card.index(a, b, x, y);
        self.values[i] = v;
    }
}

pub fn weights(lambda: &LambdaVector, cs: &ConstraintSet) -> Result<WeightTable> {
    if lambda.0.len() != cs.len() {
        return domain(format!("lambda has {} entries for {} constraints", lambda.0.len(), cs.len()));
    }
    if lambda.0.iter().any(|v| !v.is_finite()) {
        return domain("lambda has non-finite entries");
    }
    let mut w = WeightTable::zeros(cs.card);
    for (j, l) in lambda.0.iter().enumerate() {
        if *l == 0.0 {
            continue;
        }
        for (wi, ci) in w.values.iter_mut().zip(cs.table(j)) {
            *wi += l * ci;
        }
    }
    Ok(w)
}

/// `∫ β(t) e^{iθt} dt = θ / sinh θ`, with value 1 at `θ = 0`.
pub fn fourier_beta(theta: f64) -> f64 {
    let a = theta.abs();
    if a < 1e-4 {
        let t2 = a * a;
        1.0 - t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else if a < 20.0 {
        a / a.sinh()
    } else {
        // θ/sinh θ = 2θ e^{-θ} / (1 - e^{-2θ})
        2.0 * a * (-a).exp() / (1.0 - (-2.0 * a).exp())
    }
}

/// Integrated coefficient of an adjoint term of weight `w1` paired with a
/// direct term of weight `w2`.
pub fn pair_coefficient(w1: f64, w2: f64) -> f64 {
    (0.5 * (w1 + w2)).exp() * fourier_beta(0.5 * (w2 - w1))
}

/// Which key registers the pinching channel measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pinching {
    OneParty { alice_key: usize },
    TwoParty { alice_key: usize, bob_key: usize },
}

impl Pinching {
    /// The projector words `Π_key` whose conjugations are summed.
    fn key_words(&self, card: &Cardinalities) -> Vec<Vec<OperatorSymbol>> {
        match *self {
            Pinching::OneParty { alice_key } => (0..card.alice_outputs)
                .map(|a| vec![OperatorSymbol::alice(alice_key as u8, a as u8)])
                .collect(),
            Pinching::TwoParty { alice_key, bob_key } => {
                let mut v = Vec::new();
                for a in 0..card.alice_outputs {
                    for b in 0..card.bob_outputs {
                        v.push(vec![OperatorSymbol::alice(alice_key as u8, a as u8), OperatorSymbol::bob(bob_key as u8, b as u8)]);
                    }
                }
                v
            }
        }
    }

    fn check(&self, card: &Cardinalities) -> Result<()> {
        let (ak, bk) = match *self {
            Pinching::OneParty { alice_key } => (alice_key, 0),
            Pinching::TwoParty { alice_key, bob_key } => (alice_key, bob_key),
        };
        if ak >= card.alice_inputs || bk >= card.bob_inputs.max(1) {
            return domain("pinching key setting out of range");
        }
        Ok(())
    }
}

/// Ordered list of `(x, y)` factors of the product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorOrder(pub Vec<(usize, usize)>);

impl FactorOrder {
    pub fn lexicographic(card: &Cardinalities) -> Self {
        let mut v = Vec::new();
        for x in 0..card.alice_inputs {
            for y in 0..card.bob_inputs {
                v.push((x, y));
            }
        }
        Self(v)
    }

    /// Lexicographic order restricted to the pairs a constraint set touches.
    /// Factors outside the support are the identity and are skipped.
    pub fn support_of(cs: &ConstraintSet) -> Self {
        Self(cs.support())
    }
}

/// The pinched, integrated polynomial together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KPolynomial {
    pub poly: Polynomial,
    pub pinching: Pinching,
    pub order: FactorOrder,
    pub dropped_terms: usize,
}

/// λ-independent word structure of `K`.
#[derive(Debug, Clone)]
pub struct KStructure {
    card: Cardinalities,
    pinching: Pinching,
    order: FactorOrder,
    /// Per term of `P`: the `(a, b)` choice of each factor as table indices.
    term_cells: Vec<Vec<usize>>,
    /// `(s, s', full-word id)` for every non-vanishing pinched pair word.
    pairs: Vec<(u32, u32, u32)>,
    /// Output words (after completeness elimination when enabled).
    words: Vec<Monomial>,
    /// Full-word id -> sparse combination of output words.
    expansion: Vec<Vec<(u32, f64)>>,
}

const PAIR_CHUNK: usize = 4096;

impl KStructure {
    pub fn new(card: Cardinalities, pinching: Pinching, order: &FactorOrder, rules: &RuleSet) -> Result<Self> {
        if order.0.is_empty() {
            return domain("factor order is empty");
        }
        if rules.card != card {
            return domain("rule set cardinalities differ from the weight table");
        }
        pinching.check(&card)?;
        for &(x, y) in &order.0 {
            if x >= card.alice_inputs || y >= card.bob_inputs {
                return domain(format!("factor ({x},{y}) out of range"));
            }
        }

        // Terms of the direct product P, built factor by factor.
        let mut terms: Vec<(Vec<usize>, Vec<OperatorSymbol>)> = vec![(Vec::new(), Vec::new())];
        for &(x, y) in &order.0 {
            let mut next = Vec::with_capacity(terms.len() * card.alice_outputs * card.bob_outputs);
            for (cells, word) in &terms {
                for a in 0..card.alice_outputs {
                    for b in 0..card.bob_outputs {
                        let mut w = word.clone();
                        w.push(OperatorSymbol::alice(x as u8, a as u8));
                        w.push(OperatorSymbol::bob(y as u8, b as u8));
                        if let Some(cw) = canonical_symbols(&w) {
                            let mut c = cells.clone();
                            c.push(card.index(a, b, x, y));
                            next.push((c, cw));
                        }
                    }
                }
            }
            terms = next;
        }
        let adjoints: Vec<Vec<OperatorSymbol>> =
            terms.iter().map(|(_, w)| Monomial::from_canonical(w.clone()).adjoint().symbols().to_vec()).collect();
        let keys = pinching.key_words(&card);

        // Pinched pair words, computed per adjoint term in parallel.
        let per_s: Vec<Vec<(u32, Vec<OperatorSymbol>)>> = par::map_range(terms.len(), |s| {
            let mut out = Vec::new();
            let mut buf = Vec::new();
            for (sp, (_, direct)) in terms.iter().enumerate() {
                for key in &keys {
                    buf.clear();
                    buf.extend_from_slice(key);
                    buf.extend_from_slice(&adjoints[s]);
                    buf.extend_from_slice(direct);
                    buf.extend_from_slice(key);
                    if let Some(w) = canonical_symbols(&buf) {
                        out.push((sp as u32, w));
                    }
                }
            }
            out
        });

        let mut full: Vec<Vec<OperatorSymbol>> = per_s.iter().flat_map(|v| v.iter().map(|(_, w)| w.clone())).collect();
        full.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        full.dedup();
        let full_id: HashMap<&[OperatorSymbol], u32> =
            full.iter().enumerate().map(|(i, w)| (w.as_slice(), i as u32)).collect();
        let mut pairs = Vec::new();
        for (s, v) in per_s.iter().enumerate() {
            for (sp, w) in v {
                pairs.push((s as u32, *sp, full_id[w.as_slice()]));
            }
        }

        // Map full words to the output representation.
        let expanded: Vec<Polynomial> = if rules.elimination {
            let r: Vec<Result<Polynomial>> = par::map(&full, |w| rules.expand_word(w));
            r.into_iter().collect::<Result<_>>()?
        } else {
            full.iter().map(|w| Polynomial::monomial(Monomial::from_canonical(w.clone()))).collect()
        };
        let mut words: Vec<Monomial> = expanded.iter().flat_map(|p| p.terms().map(|(m, _)| m.clone())).collect();
        words.sort();
        words.dedup();
        let word_id: HashMap<&Monomial, u32> = words.iter().enumerate().map(|(i, m)| (m, i as u32)).collect();
        let expansion = expanded
            .iter()
            .map(|p| p.terms().map(|(m, c)| (word_id[m], c.re)).collect())
            .collect();

        Ok(Self {
            card,
            pinching,
            order: order.clone(),
            term_cells: terms.into_iter().map(|(c, _)| c).collect(),
            pairs,
            words,
            expansion,
        })
    }

    pub fn card(&self) -> Cardinalities {
        self.card
    }

    pub fn pinching(&self) -> Pinching {
        self.pinching
    }

    pub fn order(&self) -> &FactorOrder {
        &self.order
    }

    /// Output words that can appear in `K`, in graded order.
    pub fn words(&self) -> &[Monomial] {
        &self.words
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Coefficients of [`Self::words`] for the given weights, before pruning.
    pub fn coefficients(&self, w: &WeightTable) -> Result<Vec<f64>> {
        if w.card != self.card {
            return domain("weight table cardinalities differ from the structure");
        }
        let totals: Vec<f64> = self.term_cells.iter().map(|cells| cells.iter().map(|&i| w.values[i]).sum()).collect();
        let n_full = self.expansion.len();
        let chunks = self.pairs.len().div_ceil(PAIR_CHUNK);
        // Fixed chunking keeps the summation order independent of the pool size.
        let partial: Vec<Vec<f64>> = par::map_range(chunks, |k| {
            let mut acc = vec![0.0; n_full];
            let lo = k * PAIR_CHUNK;
            let hi = (lo + PAIR_CHUNK).min(self.pairs.len());
            for &(s, sp, id) in &self.pairs[lo..hi] {
                acc[id as usize] += pair_coefficient(totals[s as usize], totals[sp as usize]);
            }
            acc
        });
        let mut full = vec![0.0; n_full];
        for p in &partial {
            for (f, v) in full.iter_mut().zip(p) {
                *f += v;
            }
        }
        let mut out = vec![0.0; self.words.len()];
        for (f, exp) in full.iter().zip(&self.expansion) {
            for &(id, c) in exp {
                out[id as usize] += f * c;
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, w: &WeightTable) -> Result<KPolynomial> {
        let coeffs = self.coefficients(w)?;
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut dropped = 0;
        let poly = Polynomial::from_terms(self.words.iter().zip(&coeffs).filter_map(|(m, &c)| {
            if c.abs() <= PRUNE_REL * max {
                if c != 0.0 {
                    dropped += 1;
                }
                None
            } else {
                Some((m.clone(), Complex64::new(c, 0.0)))
            }
        }));
        Ok(KPolynomial { poly, pinching: self.pinching, order: self.order.clone(), dropped_terms: dropped })
    }
}

pub fn build_k(w: &WeightTable, pinching: Pinching, order: &FactorOrder, rules: &RuleSet) -> Result<KPolynomial> {
    KStructure::new(w.card, pinching, order, rules)?.evaluate(w)
}

/// Per-party depths such that every monomial of `k` splits as `u† v` with
/// `u`, `v` within those depths.
pub fn required_basis(k: &KPolynomial) -> (usize, usize) {
    words_depth(k.poly.terms().map(|(m, _)| m))
}

pub(crate) fn words_depth<'a>(words: impl Iterator<Item = &'a Monomial>) -> (usize, usize) {
    words.fold((0, 0), |(da, db), m| {
        (da.max(m.party_len(Party::Alice).div_ceil(2)), db.max(m.party_len(Party::Bob).div_ceil(2)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{adjoint, canonicalize};
    use crate::quad;

    fn beta(t: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 / ((std::f64::consts::PI * t).cosh() + 1.0)
    }

    fn beta_transform_by_quadrature(theta: f64) -> f64 {
        // β(t) < π e^{-π|t|}, so the tail beyond |t| = 12 is below 1e-15.
        quad::integrate(|t| beta(t) * (theta * t).cos(), -12.0, 12.0, 1e-14, 0.0).unwrap().value
    }

    fn chsh_cs() -> ConstraintSet {
        let card = Cardinalities::chsh();
        let mut c = vec![0.0; card.table_len()];
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        c[card.index(a, b, x, y)] = if (a ^ b ^ (x * y)) == 0 { 1.0 } else { -1.0 };
                    }
                }
            }
        }
        ConstraintSet::new(card, c, vec![2.0 * 2f64.sqrt()], vec!["chsh".into()]).unwrap()
    }

    #[test]
    fn weights_examples() {
        let cs = chsh_cs();
        let w = weights(&LambdaVector(vec![0.0]), &cs).unwrap();
        assert!(w.values.iter().all(|&v| v == 0.0));
        let w = weights(&LambdaVector(vec![1.0]), &cs).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        let expect = if (a ^ b ^ (x * y)) % 2 == 0 { 1.0 } else { -1.0 };
                        assert_eq!(w.get(a, b, x, y), expect);
                    }
                }
            }
        }
        let card = Cardinalities::chsh();
        let ones = ConstraintSet::new(card, vec![1.0; 16], vec![1.0], vec!["one".into()]).unwrap();
        let w = weights(&LambdaVector(vec![2.0]), &ones).unwrap();
        assert!(w.values.iter().all(|&v| v == 2.0));
        assert!(weights(&LambdaVector(vec![1.0, 2.0]), &ones).is_err());
    }

    #[test]
    fn fourier_beta_matches_quadrature() {
        for k in -100..=100 {
            let theta = k as f64 * 0.1;
            let q = beta_transform_by_quadrature(theta);
            assert!((fourier_beta(theta) - q).abs() < 1e-10, "theta {theta}: {} vs {q}", fourier_beta(theta));
        }
    }

    #[test]
    fn fourier_beta_examples() {
        assert_eq!(fourier_beta(0.0), 1.0);
        assert!((fourier_beta(2.0) - 0.551_441_129_543_566_4).abs() < 1e-12);
        assert!((beta_transform_by_quadrature(2.0) - 0.551_441_129_543_566_4).abs() < 1e-10);
        for t in [0.3, 1.7, 25.0, 400.0] {
            assert_eq!(fourier_beta(-t), fourier_beta(t));
        }
        // Branch seams are continuous.
        for t in [1e-4, 20.0] {
            assert!((fourier_beta(t * (1.0 - 1e-12)) - fourier_beta(t * (1.0 + 1e-12))).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_coefficient_examples() {
        assert_eq!(pair_coefficient(0.0, 0.0), 1.0);
        assert!((pair_coefficient(1.3, 1.3) - 1.3f64.exp()).abs() < 1e-15);
        let expect = std::f64::consts::E * beta_transform_by_quadrature(1.0);
        assert!((pair_coefficient(0.0, 2.0) - expect).abs() < 1e-10);
        assert_eq!(pair_coefficient(0.4, -1.1), pair_coefficient(-1.1, 0.4));
    }

    #[test]
    fn zero_weights_give_identity() {
        let card = Cardinalities::chsh();
        let rules = RuleSet::new(card, true);
        let k = build_k(&WeightTable::zeros(card), Pinching::OneParty { alice_key: 0 }, &FactorOrder::lexicographic(&card), &rules)
            .unwrap();
        assert_eq!(k.poly.len(), 1);
        assert!((k.poly.coefficient(&Monomial::identity()).re - 1.0).abs() < 1e-12);
        assert_eq!(required_basis(&k), (0, 0));

        let k2 = build_k(
            &WeightTable::zeros(card),
            Pinching::TwoParty { alice_key: 0, bob_key: 0 },
            &FactorOrder::lexicographic(&card),
            &rules,
        )
        .unwrap();
        assert_eq!(k2.poly.len(), 1);
    }

    #[test]
    fn single_factor_matches_hand_expansion() {
        // One setting per party; w_ab = s δ_a0 δ_b0. The 16 adjoint/direct
        // pairs are listed explicitly and canonicalized one by one.
        let card = Cardinalities::new(1, 1, 2, 2);
        let rules = RuleSet::new(card, false);
        let s = 0.7;
        let mut w = WeightTable::zeros(card);
        w.set(0, 0, 0, 0, s);
        let k = build_k(&w, Pinching::OneParty { alice_key: 0 }, &FactorOrder(vec![(0, 0)]), &rules).unwrap();

        let mut hand = Polynomial::zero();
        for key in 0..2u8 {
            for a1 in 0..2u8 {
                for b1 in 0..2u8 {
                    for a2 in 0..2u8 {
                        for b2 in 0..2u8 {
                            let w1 = if a1 == 0 && b1 == 0 { s } else { 0.0 };
                            let w2 = if a2 == 0 && b2 == 0 { s } else { 0.0 };
                            let word = [
                                OperatorSymbol::alice(0, key),
                                OperatorSymbol::bob(0, b1),
                                OperatorSymbol::alice(0, a1),
                                OperatorSymbol::alice(0, a2),
                                OperatorSymbol::bob(0, b2),
                                OperatorSymbol::alice(0, key),
                            ];
                            if let Some(m) = canonicalize(&word, &rules).unwrap() {
                                hand.add_term(m, Complex64::new(pair_coefficient(w1, w2), 0.0));
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(hand.len(), 4);
        for (m, c) in hand.terms() {
            assert!((k.poly.coefficient(m) - c).norm() < 1e-14, "{m}");
        }
        assert_eq!(k.poly.len(), hand.len());
        // Closed form of the same expansion: e^s A0B0 + A0B1 + A1B0 + A1B1.
        let m00 = canonicalize(&[OperatorSymbol::alice(0, 0), OperatorSymbol::bob(0, 0)], &rules).unwrap().unwrap();
        assert!((k.poly.coefficient(&m00).re - s.exp()).abs() < 1e-14);
    }

    #[test]
    fn hermitian_and_pinched() {
        let card = Cardinalities::chsh();
        let rules = RuleSet::new(card, false);
        let cs = chsh_cs();
        let w = weights(&LambdaVector(vec![0.37]), &cs).unwrap();
        let k = build_k(&w, Pinching::OneParty { alice_key: 0 }, &FactorOrder::lexicographic(&card), &rules).unwrap();
        assert!(k.poly.is_hermitian(1e-12 * 50.0));
        assert_eq!(k.poly.max_abs_imag(), 0.0);
        for (m, _) in k.poly.terms() {
            let (al, _) = m.split();
            assert_eq!(al.first().unwrap().setting, 0);
            assert_eq!(al.first(), al.last());
        }
        assert_eq!(adjoint(&k.poly).len(), k.poly.len());
    }

    #[test]
    fn required_depths_chsh() {
        let card = Cardinalities::chsh();
        let rules = RuleSet::new(card, true);
        let cs = chsh_cs();
        let w = weights(&LambdaVector(vec![0.9]), &cs).unwrap();
        let order = FactorOrder::lexicographic(&card);
        let k1 = build_k(&w, Pinching::OneParty { alice_key: 0 }, &order, &rules).unwrap();
        assert_eq!(required_basis(&k1), (3, 4));
        let k2 = build_k(&w, Pinching::TwoParty { alice_key: 0, bob_key: 0 }, &order, &rules).unwrap();
        assert_eq!(required_basis(&k2), (3, 5));
    }

    #[test]
    fn empty_order_rejected() {
        let card = Cardinalities::chsh();
        let rules = RuleSet::new(card, true);
        assert!(build_k(&WeightTable::zeros(card), Pinching::OneParty { alice_key: 0 }, &FactorOrder(vec![]), &rules).is_err());
    }
}
