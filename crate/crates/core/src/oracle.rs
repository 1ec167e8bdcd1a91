//! Brute-force evaluation on explicit finite-dimensional realizations.
//!
//! Everything here works with dense matrices on `C^dA ⊗ C^dB` and is meant as
//! an independent check of the symbolic and SDP machinery.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kfactory::{build_k, ConstraintSet, FactorOrder, LambdaVector, Pinching, WeightTable};
use crate::linalg::{bloch_projectors, c, check_density, entropy_of, hermitian_eigenvalues, kron, trace_product, CMat};
use crate::opalg::{Monomial, Party, Polynomial, RuleSet};
use crate::quad::integrate;
use crate::scenarios::QubitRealization;

/// Tolerance on projector idempotence, Hermiticity and completeness.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// Integration window for the `t` integral; `β` decays like `e^{-π|t|}`.
pub const T_WINDOW: f64 = 30.0;

/// `ρ_AB` with explicit projectors `alice[x][a]`, `bob[y][b]` acting on the
/// local factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitRealization {
    #[serde(with = "crate::io::cmat")]
    pub rho: CMat,
    #[serde(with = "projector_lists")]
    pub alice: Vec<Vec<CMat>>,
    #[serde(with = "projector_lists")]
    pub bob: Vec<Vec<CMat>>,
    pub key: (usize, usize),
}

mod projector_lists {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "crate::io::cmat")] CMat);

    pub fn serialize<S: Serializer>(v: &[Vec<CMat>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let w: Vec<Vec<Wrapped>> = v.iter().map(|row| row.iter().map(|m| Wrapped(m.clone())).collect()).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<CMat>>, D::Error> {
        let w: Vec<Vec<Wrapped>> = Vec::deserialize(d)?;
        Ok(w.into_iter().map(|row| row.into_iter().map(|m| m.0).collect()).collect())
    }
}

impl ExplicitRealization {
    pub fn dims(&self) -> (usize, usize) {
        let d = |ops: &[Vec<CMat>]| ops.first().and_then(|s| s.first()).map_or(0, |m| m.nrows());
        (d(&self.alice), d(&self.bob))
    }

    pub fn validate(&self) -> Result<()> {
        let (da, db) = self.dims();
        if da == 0 || db == 0 {
            return domain("each party needs at least one setting");
        }
        if self.rho.nrows() != da * db {
            return domain(format!("state has dimension {}, expected {}", self.rho.nrows(), da * db));
        }
        check_density(&self.rho, PROJECTOR_TOL)?;
        for (name, ops, d) in [("Alice", &self.alice, da), ("Bob", &self.bob, db)] {
            for (x, setting) in ops.iter().enumerate() {
                let mut sum = CMat::zeros(d, d);
                for (a, p) in setting.iter().enumerate() {
                    if p.nrows() != d || p.ncols() != d {
                        return domain(format!("{name} projector ({x},{a}) has the wrong size"));
                    }
                    let herm = (p - p.adjoint()).iter().all(|z| z.norm() <= PROJECTOR_TOL);
                    let idem = (p * p - p).iter().all(|z| z.norm() <= PROJECTOR_TOL);
                    if !herm || !idem {
                        return domain(format!("{name} operator ({x},{a}) is not a projector"));
                    }
                    sum += p;
                }
                if (sum - CMat::identity(d, d)).iter().any(|z| z.norm() > PROJECTOR_TOL) {
                    return domain(format!("{name} setting {x} is not complete"));
                }
            }
        }
        if self.key.0 >= self.alice.len() || self.key.1 >= self.bob.len() {
            return domain("key settings out of range");
        }
        Ok(())
    }

    /// Alice's projector lifted to the joint space.
    pub fn alice_op(&self, x: usize, a: usize) -> CMat {
        let (_, db) = self.dims();
        kron(&self.alice[x][a], &CMat::identity(db, db))
    }

    pub fn bob_op(&self, y: usize, b: usize) -> CMat {
        let (da, _) = self.dims();
        kron(&CMat::identity(da, da), &self.bob[y][b])
    }

    /// Joint-space projectors `Π_k` of the pinching.
    pub fn key_projectors(&self, pinching: Pinching) -> Result<Vec<CMat>> {
        match pinching {
            Pinching::OneParty { alice_key } => {
                if alice_key >= self.alice.len() {
                    return domain("pinching key out of range");
                }
                Ok((0..self.alice[alice_key].len()).map(|a| self.alice_op(alice_key, a)).collect())
            }
            Pinching::TwoParty { alice_key, bob_key } => {
                if alice_key >= self.alice.len() || bob_key >= self.bob.len() {
                    return domain("pinching key out of range");
                }
                let mut v = Vec::new();
                for a in 0..self.alice[alice_key].len() {
                    for b in 0..self.bob[bob_key].len() {
                        v.push(kron(&self.alice[alice_key][a], &self.bob[bob_key][b]));
                    }
                }
                Ok(v)
            }
        }
    }

    /// `Pr(ab|xy)`.
    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        trace_product(&self.rho, &kron(&self.alice[x][a], &self.bob[y][b])).re
    }

    /// `tr(ρ m)` for an operator word.
    pub fn expectation(&self, m: &Monomial) -> Result<Complex64> {
        let (da, db) = self.dims();
        let mut op = CMat::identity(da * db, da * db);
        for s in m.symbols() {
            let (x, o) = (s.setting as usize, s.outcome as usize);
            let p = match s.party {
                Party::Alice => self.alice.get(x).and_then(|v| v.get(o)).map(|_| self.alice_op(x, o)),
                Party::Bob => self.bob.get(x).and_then(|v| v.get(o)).map(|_| self.bob_op(x, o)),
            };
            let Some(p) = p else {
                return domain(format!("symbol {s:?} not in the realization"));
            };
            op *= p;
        }
        Ok(trace_product(&self.rho, &op))
    }

    pub fn poly_expectation(&self, p: &Polynomial) -> Result<Complex64> {
        let mut acc = Complex64::default();
        for (m, coeff) in p.terms() {
            acc += coeff * self.expectation(m)?;
        }
        Ok(acc)
    }
}

impl TryFrom<&QubitRealization> for ExplicitRealization {
    type Error = crate::error::Error;

    fn try_from(r: &QubitRealization) -> Result<Self> {
        r.validate()?;
        let lift = |ns: &[[f64; 3]]| ns.iter().map(|n| bloch_projectors(*n).to_vec()).collect();
        let e = Self { rho: r.state.clone(), alice: lift(&r.alice), bob: lift(&r.bob), key: r.key };
        e.validate()?;
        Ok(e)
    }
}

fn pinch(rho: &CMat, keys: &[CMat]) -> CMat {
    let n = rho.nrows();
    keys.iter().fold(CMat::zeros(n, n), |acc, k| acc + k * rho * k)
}

/// `H(T[ρ]) - H(ρ)` in nats.
pub fn entropy_production(r: &ExplicitRealization, pinching: Pinching) -> Result<f64> {
    r.validate()?;
    let keys = r.key_projectors(pinching)?;
    let after = entropy_of(&hermitian_eigenvalues(&pinch(&r.rho, &keys)))?;
    let before = entropy_of(&hermitian_eigenvalues(&r.rho))?;
    Ok(after - before)
}

/// `H(K|E)` in nats computed on an explicit purification `|Ψ⟩_ABE`, where `K`
/// is the outcome of the pinching measurement.
pub fn purification_crosscheck(r: &ExplicitRealization, pinching: Pinching) -> Result<f64> {
    r.validate()?;
    let n = r.rho.nrows();
    if n > 16 {
        return domain("purification check limited to dimension 16");
    }
    let h = (&r.rho + r.rho.adjoint()) * c(0.5);
    let eig = h.symmetric_eigen();
    // Ψ as an n×n array: Ψ[i, e] = Σ_k sqrt(p_k) v_k[i] δ_{k e}.
    let psi = CMat::from_fn(n, n, |i, e| eig.eigenvectors[(i, e)] * c(eig.eigenvalues[e].max(0.0).sqrt()));
    let keys = r.key_projectors(pinching)?;
    let mut joint = Vec::new();
    let mut rho_e = CMat::zeros(n, n);
    for k in &keys {
        // σ_E^k = Tr_AB[(Π_k ⊗ 1) |Ψ⟩⟨Ψ|] = (Π_k Ψ)^T conj(Π_k Ψ).
        let kp = k * &psi;
        let sigma = kp.transpose() * kp.map(|z| z.conj());
        joint.extend(hermitian_eigenvalues(&sigma));
        rho_e += sigma;
    }
    Ok(entropy_of(&joint)? - entropy_of(&hermitian_eigenvalues(&rho_e))?)
}

/// `β(t) = (π/2) / (cosh(πt) + 1)`.
pub fn beta(t: f64) -> f64 {
    let u = std::f64::consts::PI * t.abs();
    // (π/2)/(cosh u + 1) = π e^{-u} / (1 + e^{-u})²
    let e = (-u).exp();
    std::f64::consts::PI * e / ((1.0 + e) * (1.0 + e))
}

/// `P(t) = Π_{(x,y) in order} Σ_ab e^{(1+it) w_abxy / 2} Π_a^x ⊗ Π_b^y`.
fn p_of_t(r: &ExplicitRealization, w: &WeightTable, order: &FactorOrder, t: f64) -> CMat {
    let n = r.rho.nrows();
    let mut p = CMat::identity(n, n);
    let z = Complex64::new(1.0, t) * 0.5;
    for &(x, y) in &order.0 {
        let mut f = CMat::zeros(n, n);
        for a in 0..w.card.alice_outputs {
            for b in 0..w.card.bob_outputs {
                f += kron(&r.alice[x][a], &r.bob[y][b]) * (z * w.get(a, b, x, y)).exp();
            }
        }
        p *= f;
    }
    p
}

/// `⟨K⟩_ρ` by adaptive quadrature of `∫ β(t) tr(T[ρ] P(t)† P(t)) dt` over
/// `[-T_WINDOW, T_WINDOW]`. The discarded tail is below `e^{-30π}` times the
/// integrand bound.
pub fn quadrature_k_value(r: &ExplicitRealization, w: &WeightTable, pinching: Pinching, order: &FactorOrder) -> Result<f64> {
    r.validate()?;
    for &(x, y) in &order.0 {
        if x >= w.card.alice_inputs || y >= w.card.bob_inputs || x >= r.alice.len() || y >= r.bob.len() {
            return domain(format!("factor ({x},{y}) out of range"));
        }
    }
    let pinched = pinch(&r.rho, &r.key_projectors(pinching)?);
    let f = |t: f64| {
        let p = p_of_t(r, w, order, t);
        beta(t) * trace_product(&pinched, &(p.adjoint() * p)).re
    };
    // β is even; the integrand is not when the projectors are complex.
    let half = integrate(|t| f(t) + f(-t), 0.0, T_WINDOW, 1e-14, 1e-13)?;
    Ok(half.value)
}

/// `⟨K⟩_ρ` from the symbolic polynomial.
pub fn symbolic_k_value(r: &ExplicitRealization, w: &WeightTable, pinching: Pinching, order: &FactorOrder, rules: &RuleSet) -> Result<f64> {
    let k = build_k(w, pinching, order, rules)?;
    Ok(r.poly_expectation(&k.poly)?.re)
}

/// Both sides of `H(T[ρ]) - H(ρ) >= Σ_j λ_j ⟨L_j⟩_ρ - ln ⟨K⟩_ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda_dot_l: f64,
    pub k_value: f64,
    /// `lhs - rhs`.
    pub gap: f64,
    pub holds: bool,
}

/// Slack allowed on the inequality.
pub const INEQUALITY_TOL: f64 = 1e-7;

pub fn verify_theorem_inequality(
    r: &ExplicitRealization,
    cs: &ConstraintSet,
    lambda: &LambdaVector,
    pinching: Pinching,
    order: &FactorOrder,
) -> Result<InequalityReport> {
    let card = cs.card;
    if r.alice.len() < card.alice_inputs || r.bob.len() < card.bob_inputs {
        return domain("realization has fewer settings than the constraint set");
    }
    let w = crate::kfactory::weights(lambda, cs)?;
    let rules = RuleSet::new(card, false);
    let k_value = symbolic_k_value(r, &w, pinching, order, &rules)?;
    let mut lambda_dot_l = 0.0;
    for a in 0..card.alice_outputs {
        for b in 0..card.bob_outputs {
            for x in 0..card.alice_inputs {
                for y in 0..card.bob_inputs {
                    let wv = w.get(a, b, x, y);
                    if wv != 0.0 {
                        lambda_dot_l += wv * r.prob(a, b, x, y);
                    }
                }
            }
        }
    }
    if !(k_value > 0.0) {
        return domain(format!("⟨K⟩ = {k_value} is not positive"));
    }
    let lhs = entropy_production(r, pinching)?;
    let rhs = lambda_dot_l - k_value.ln();
    let gap = lhs - rhs;
    Ok(InequalityReport { lhs, rhs, lambda_dot_l, k_value, gap, holds: gap >= -INEQUALITY_TOL })
}

/// Random unit vector in `R^3`.
fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Two-qubit realization with a random rank-`rank` state (Ginibre) and
/// random projective measurements, two settings per party.
pub fn random_realization(seed: u64, rank: usize) -> ExplicitRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = rank.clamp(1, 4);
    let g = CMat::from_fn(4, rank, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho /= c(tr);
    let alice = (0..2).map(|_| bloch_projectors(random_direction(&mut rng)).to_vec()).collect();
    let bob = (0..2).map(|_| bloch_projectors(random_direction(&mut rng)).to_vec()).collect();
    ExplicitRealization { rho, alice, bob, key: (0, 0) }
}

/// Outcome of a randomized inequality suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cases: usize,
    pub violations: usize,
    /// Smallest `lhs - rhs` over all cases.
    pub worst_gap: f64,
    /// Largest `|⟨K⟩_quadrature - ⟨K⟩_symbolic| / ⟨K⟩` over checked cases.
    pub max_k_mismatch: f64,
}

/// Random 2×2 constraint tables (one per functional) and λ for case `seed`.
fn random_case(seed: u64) -> (ExplicitRealization, ConstraintSet, LambdaVector, Pinching) {
    let r = random_realization(seed, 1 + (seed % 4) as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let card = crate::opalg::Cardinalities::chsh();
    let n = 1 + (seed % 3) as usize;
    let mut coefficients = Vec::new();
    for _ in 0..n {
        coefficients.extend((0..card.table_len()).map(|_| rng.gen_range(-1.0..1.0)));
    }
    let lambda = LambdaVector((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
    let labels = (0..n).map(|j| format!("L{j}")).collect();
    let cs = ConstraintSet::new(card, coefficients, vec![0.0; n], labels).expect("well-formed constraint set");
    let pinching = if seed.is_multiple_of(2) { Pinching::OneParty { alice_key: (seed / 2 % 2) as usize } } else { Pinching::TwoParty { alice_key: 0, bob_key: 1 } };
    (r, cs, lambda, pinching)
}

/// Check the inequality on `cases` seeded random instances; every
/// `quad_every`-th case also compares quadrature and symbolic `⟨K⟩`.
pub fn inequality_suite(cases: usize, seed: u64, quad_every: usize) -> Result<SuiteReport> {
    let results = crate::par::map_range(cases, |i| -> Result<(f64, f64)> {
        let case_seed = seed.wrapping_add(i as u64);
        let (r, cs, lambda, pinching) = random_case(case_seed);
        let order = FactorOrder::lexicographic(&cs.card);
        let rep = verify_theorem_inequality(&r, &cs, &lambda, pinching, &order)?;
        let mismatch = if quad_every > 0 && i % quad_every == 0 {
            let w = crate::kfactory::weights(&lambda, &cs)?;
            let q = quadrature_k_value(&r, &w, pinching, &order)?;
            ((q - rep.k_value) / rep.k_value).abs()
        } else {
            0.0
        };
        Ok((rep.gap, mismatch))
    });
    let mut report = SuiteReport { cases, violations: 0, worst_gap: f64::INFINITY, max_k_mismatch: 0.0 };
    for r in results {
        let (gap, mismatch) = r?;
        if gap < -INEQUALITY_TOL {
            report.violations += 1;
        }
        report.worst_gap = report.worst_gap.min(gap);
        report.max_k_mismatch = report.max_k_mismatch.max(mismatch);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::scenarios::werner_chsh;
    use std::f64::consts::LN_2;

    fn werner(q: f64) -> ExplicitRealization {
        let (r, _) = werner_chsh(q).unwrap();
        ExplicitRealization::try_from(&r).unwrap()
    }

    #[test]
    fn beta_is_normalized() {
        let v = integrate(beta, -T_WINDOW, T_WINDOW, 1e-15, 1e-14).unwrap().value;
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_maximally_entangled_gives_one_bit() {
        let r = werner(0.0);
        let h = entropy_production(&r, Pinching::OneParty { alice_key: 0 }).unwrap();
        assert!((h - LN_2).abs() < 1e-12);
        let p = purification_crosscheck(&r, Pinching::OneParty { alice_key: 0 }).unwrap();
        assert!((p - LN_2).abs() < 1e-9);
    }

    #[test]
    fn maximally_mixed_gives_zero() {
        let mut r = werner(0.5);
        r.rho = CMat::identity(4, 4) * c(0.25);
        for pin in [Pinching::OneParty { alice_key: 1 }, Pinching::TwoParty { alice_key: 0, bob_key: 1 }] {
            assert!(entropy_production(&r, pin).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_unit_k() {
        let r = werner(0.1);
        let w = WeightTable::zeros(crate::opalg::Cardinalities::chsh());
        let order = FactorOrder::lexicographic(&w.card);
        let k = quadrature_k_value(&r, &w, Pinching::OneParty { alice_key: 0 }, &order).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_projectors() {
        let mut r = werner(0.0);
        r.alice[0][0] = r.alice[0][0].clone() * c(0.9);
        assert!(r.validate().is_err());
    }
}
