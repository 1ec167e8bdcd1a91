//! Two-qubit simulator for the studied scenarios and conversion of behaviors
//! into constraint sets.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kfactory::ConstraintSet;
use crate::linalg::{bloch_projectors, c, check_density, kron, CMat};
use crate::opalg::Cardinalities;
use crate::optim::NelderMead;

/// Normalization tolerance per `(x, y)` slice.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Tolerance on no-signaling marginals.
pub const NO_SIGNALING_TOL: f64 = 1e-10;

/// A two-qubit state measured along Bloch directions. Outcome 0 is the `+1`
/// eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitRealization {
    #[serde(with = "crate::io::cmat")]
    pub state: CMat,
    pub alice: Vec<[f64; 3]>,
    pub bob: Vec<[f64; 3]>,
    /// Key-generation settings `(x, y)`.
    pub key: (usize, usize),
    /// Number of parameter-estimation settings of each party (the first ones).
    pub pe_inputs: (usize, usize),
}

impl QubitRealization {
    pub fn validate(&self) -> Result<()> {
        if self.state.nrows() != 4 {
            return domain("qubit realization needs a 4x4 state");
        }
        check_density(&self.state, NORMALIZATION_TOL)?;
        for n in self.alice.iter().chain(&self.bob) {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return domain(format!("Bloch vector {n:?} is not a unit vector"));
            }
        }
        if self.key.0 >= self.alice.len() || self.key.1 >= self.bob.len() {
            return domain("key setting out of range");
        }
        if self.pe_inputs.0 > self.alice.len() || self.pe_inputs.1 > self.bob.len() {
            return domain("parameter-estimation settings out of range");
        }
        Ok(())
    }

    pub fn card(&self) -> Cardinalities {
        Cardinalities::new(self.alice.len(), self.bob.len(), 2, 2)
    }
}

/// `Pr(ab|xy)` with the settings bookkeeping needed downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub card: Cardinalities,
    pub table: Vec<f64>,
    pub pe_inputs: (usize, usize),
    pub key: (usize, usize),
}

impl Behavior {
    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.table[self.card.index(a, b, x, y)]
    }

    /// Checks shape, nonnegativity, normalization and no-signaling. The error
    /// names the violated check.
    pub fn validate(&self) -> Result<()> {
        let c = self.card;
        if self.table.len() != c.table_len() {
            return domain(format!("table has {} entries, expected {}", self.table.len(), c.table_len()));
        }
        if self.key.0 >= c.alice_inputs || self.key.1 >= c.bob_inputs {
            return domain("key setting out of range");
        }
        if self.pe_inputs.0 > c.alice_inputs || self.pe_inputs.1 > c.bob_inputs || self.pe_inputs.0 == 0 || self.pe_inputs.1 == 0 {
            return domain("parameter-estimation settings out of range");
        }
        if let Some(v) = self.table.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return domain(format!("nonnegativity violated: entry {v}"));
        }
        for x in 0..c.alice_inputs {
            for y in 0..c.bob_inputs {
                let s: f64 = (0..c.alice_outputs).flat_map(|a| (0..c.bob_outputs).map(move |b| (a, b))).map(|(a, b)| self.prob(a, b, x, y)).sum();
                if (s - 1.0).abs() > NORMALIZATION_TOL {
                    return domain(format!("normalization violated at (x,y)=({x},{y}): sum {s}"));
                }
            }
        }
        for x in 0..c.alice_inputs {
            for a in 0..c.alice_outputs {
                let m: Vec<f64> = (0..c.bob_inputs).map(|y| (0..c.bob_outputs).map(|b| self.prob(a, b, x, y)).sum()).collect();
                if m.iter().any(|v| (v - m[0]).abs() > NO_SIGNALING_TOL) {
                    return domain(format!("no-signaling violated: Alice marginal of (a,x)=({a},{x}) depends on y"));
                }
            }
        }
        for y in 0..c.bob_inputs {
            for b in 0..c.bob_outputs {
                let m: Vec<f64> = (0..c.alice_inputs).map(|x| (0..c.alice_outputs).map(|a| self.prob(a, b, x, y)).sum()).collect();
                if m.iter().any(|v| (v - m[0]).abs() > NO_SIGNALING_TOL) {
                    return domain(format!("no-signaling violated: Bob marginal of (b,y)=({b},{y}) depends on x"));
                }
            }
        }
        Ok(())
    }

    /// `⟨A_x B_y⟩` for two-outcome settings.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let mut e = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let s = if a == b { 1.0 } else { -1.0 };
                e += s * self.prob(a, b, x, y);
            }
        }
        e
    }

    /// `⟨A_x⟩` for a two-outcome Alice setting, read from the `y = 0` slice.
    pub fn alice_mean(&self, x: usize) -> f64 {
        (0..2).map(|b| self.prob(0, b, x, 0) - self.prob(1, b, x, 0)).sum()
    }

    /// CHSH value over settings `x, y ∈ {0, 1}`.
    pub fn chsh(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0) - self.correlator(1, 1)
    }
}

/// Born-rule behavior of a qubit realization.
pub fn behavior_from_realization(r: &QubitRealization) -> Result<Behavior> {
    r.validate()?;
    let card = r.card();
    let pa: Vec<[CMat; 2]> = r.alice.iter().map(|n| bloch_projectors(*n)).collect();
    let pb: Vec<[CMat; 2]> = r.bob.iter().map(|n| bloch_projectors(*n)).collect();
    let mut table = vec![0.0; card.table_len()];
    for (x, px) in pa.iter().enumerate() {
        for (y, py) in pb.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    let op = kron(&px[a], &py[b]);
                    let p = (&r.state * op).trace().re;
                    table[card.index(a, b, x, y)] = p.max(0.0);
                }
            }
        }
    }
    Ok(Behavior { card, table, pe_inputs: r.pe_inputs, key: r.key })
}

fn phi_plus() -> CMat {
    let s = 0.5;
    let mut m = CMat::zeros(4, 4);
    for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[(i, j)] = c(s);
    }
    m
}

/// `(1 - 2q)|Φ+⟩⟨Φ+| + (q/2) 1`.
pub fn werner_state(q: f64) -> CMat {
    phi_plus() * c(1.0 - 2.0 * q) + CMat::identity(4, 4) * c(q / 2.0)
}

const Z: [f64; 3] = [0.0, 0.0, 1.0];
const X: [f64; 3] = [1.0, 0.0, 0.0];
const Y: [f64; 3] = [0.0, 1.0, 0.0];

/// Ideal CHSH measurements on the Werner state. Bob's third setting is the
/// key measurement `Z`.
pub fn werner_chsh(q: f64) -> Result<(QubitRealization, Behavior)> {
    if !(0.0..=0.5).contains(&q) {
        return domain(format!("noise parameter q = {q} outside [0, 1/2]"));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = QubitRealization {
        state: werner_state(q),
        alice: vec![Z, X],
        bob: vec![[h, 0.0, h], [-h, 0.0, h], Z],
        key: (0, 2),
        pe_inputs: (2, 2),
    };
    let b = behavior_from_realization(&r)?;
    Ok((r, b))
}

/// Each party independently reports outcome 1 as 0 with probability `1 - η`.
pub fn detection_efficiency(eta: f64, r: &QubitRealization) -> Result<Behavior> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("efficiency {eta} outside [0, 1]"));
    }
    flip_outcomes(eta, &behavior_from_realization(r)?)
}

/// The η post-processing applied to an arbitrary two-outcome behavior.
pub fn flip_outcomes(eta: f64, b: &Behavior) -> Result<Behavior> {
    if b.card.alice_outputs != 2 || b.card.bob_outputs != 2 {
        return domain("detection-efficiency model needs two outcomes");
    }
    // t[out][in]
    let t = [[1.0, 1.0 - eta], [0.0, eta]];
    let card = b.card;
    let mut table = vec![0.0; card.table_len()];
    for x in 0..card.alice_inputs {
        for y in 0..card.bob_inputs {
            for a2 in 0..2 {
                for b2 in 0..2 {
                    let mut s = 0.0;
                    for a in 0..2 {
                        for bb in 0..2 {
                            s += t[a2][a] * t[b2][bb] * b.prob(a, bb, x, y);
                        }
                    }
                    table[card.index(a2, b2, x, y)] = s;
                }
            }
        }
    }
    Ok(Behavior { table, ..b.clone() })
}

fn zx(angle: f64) -> [f64; 3] {
    [angle.sin(), 0.0, angle.cos()]
}

fn partially_entangled(theta: f64) -> CMat {
    let mut v = CMat::zeros(4, 1);
    v[(0, 0)] = c(theta.cos());
    v[(3, 0)] = c(theta.sin());
    &v * v.adjoint()
}

/// `cos θ|00⟩ + sin θ|11⟩` with Z-X plane settings. Parameters are
/// `[θ, α0, α1, β0, β1]`; Bob's key setting is aligned with `α0`.
pub fn zx_realization(params: &[f64; 5]) -> QubitRealization {
    let [theta, a0, a1, b0, b1] = *params;
    QubitRealization {
        state: partially_entangled(theta),
        alice: vec![zx(a0), zx(a1)],
        bob: vec![zx(b0), zx(b1), zx(a0)],
        key: (0, 2),
        pe_inputs: (2, 2),
    }
}

/// CHSH value of the η-processed Z-X plane realization, computed directly
/// from correlators.
pub fn chsh_with_efficiency(params: &[f64; 5], eta: f64) -> f64 {
    let [theta, a0, a1, b0, b1] = *params;
    let s2 = (2.0 * theta).sin();
    let cz = (2.0 * theta).cos();
    // For cos θ|00⟩ + sin θ|11⟩: ⟨Z⊗1⟩ = ⟨1⊗Z⟩ = cos 2θ, ⟨ZZ⟩ = 1, ⟨XX⟩ = sin 2θ.
    let e = |a: f64, b: f64| a.cos() * b.cos() + s2 * a.sin() * b.sin();
    let m = |a: f64| cz * a.cos();
    // Flipping 1 -> 0 with probability 1-η maps A to ηA + (1-η).
    let corr = |a: f64, b: f64| eta * eta * e(a, b) + eta * (1.0 - eta) * (m(a) + m(b)) + (1.0 - eta) * (1.0 - eta);
    corr(a0, b0) + corr(a0, b1) + corr(a1, b0) - corr(a1, b1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshOptimum {
    pub realization: QubitRealization,
    pub params: [f64; 5],
    pub chsh: f64,
    pub evaluations: usize,
}

pub const CHSH_STARTS: usize = 20;
pub const CHSH_BUDGET: usize = 2000;

/// Multi-start simplex search for the CHSH-maximizing partially entangled
/// state and Z-X plane settings under detection efficiency `η`.
pub fn optimize_chsh_realization(eta: f64) -> Result<ChshOptimum> {
    if !(eta > 2.0 / 3.0 && eta <= 1.0) {
        return domain(format!("no quantum violation attainable at efficiency {eta} (threshold 2/3)"));
    }
    let nm = NelderMead { step: 0.4, max_evals: CHSH_BUDGET, f_tol: 1e-15 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c45);
    let pi = std::f64::consts::PI;
    let starts: Vec<[f64; 5]> = (0..CHSH_STARTS)
        .map(|k| {
            if k == 0 {
                [pi / 4.0, 0.0, pi / 2.0, pi / 4.0, -pi / 4.0]
            } else {
                [rng.gen_range(0.0..pi / 4.0), rng.gen_range(-pi..pi), rng.gen_range(-pi..pi), rng.gen_range(-pi..pi), rng.gen_range(-pi..pi)]
            }
        })
        .collect();
    let runs = crate::par::map(&starts, |s| {
        nm.minimize(|p| -chsh_with_efficiency(&[p[0], p[1], p[2], p[3], p[4]], eta), s)
    });
    let evaluations = runs.iter().map(|m| m.evaluations).sum();
    let best = runs.into_iter().fold(None::<crate::optim::Minimum>, |b, m| match b {
        Some(b) if b.value <= m.value => Some(b),
        _ => Some(m),
    });
    let best = best.expect("at least one start");
    let params = [best.x[0], best.x[1], best.x[2], best.x[3], best.x[4]];
    let realization = zx_realization(&params);
    let chsh = flip_outcomes(eta, &behavior_from_realization(&realization)?)?.chsh();
    Ok(ChshOptimum { realization, params, chsh, evaluations })
}

/// Six-state measurements on a Werner state with QBER `q`: Alice measures
/// Z, X, Y; Bob measures Z, X, -Y so that every matched pair is correlated.
pub fn six_state(q: f64) -> Result<(QubitRealization, Behavior)> {
    if !(0.0..=0.5).contains(&q) {
        return domain(format!("QBER {q} outside [0, 1/2]"));
    }
    let r = QubitRealization {
        state: werner_state(q),
        alice: vec![Z, X, Y],
        bob: vec![Z, X, [0.0, -1.0, 0.0]],
        key: (0, 0),
        pe_inputs: (3, 3),
    };
    let b = behavior_from_realization(&r)?;
    Ok((r, b))
}

/// Which functionals of the behavior are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Joint `Pr(00|xy)` plus both marginals, per parameter-estimation pair.
    Full,
    ChshOnly,
    /// `α⟨A0⟩ + CHSH`.
    TiltedChsh(f64),
    /// Joint `Pr(00|kk)` plus marginals on matched settings only.
    MatchedBases,
}

/// Convert a behavior into a constraint set over its parameter-estimation
/// settings.
///
/// `Full` emits, for every pair `(x, y)`, the joint `Pr(00|xy)`, Alice's
/// marginal `Pr(0|x)` written on the `(x, y)` slice and Bob's marginal
/// `Pr(0|y)` written on the same slice. Repeated marginals are linearly
/// dependent and are removed by the solver's preprocessing; keeping one copy
/// per slice lets every per-slice weight table be reached by `λ`.
pub fn constraints_from_behavior(b: &Behavior, mode: ConstraintMode) -> Result<ConstraintSet> {
    b.validate()?;
    let (nx, ny) = b.pe_inputs;
    let card = Cardinalities::new(nx, ny, b.card.alice_outputs, b.card.bob_outputs);
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let table = |f: &dyn Fn(usize, usize, usize, usize) -> f64| -> Vec<f64> {
        let mut t = vec![0.0; card.table_len()];
        for a in 0..card.alice_outputs {
            for bb in 0..card.bob_outputs {
                for x in 0..nx {
                    for y in 0..ny {
                        t[card.index(a, bb, x, y)] = f(a, bb, x, y);
                    }
                }
            }
        }
        t
    };
    let chsh_row = |alpha: f64| -> Result<Vec<f64>> {
        if nx < 2 || ny < 2 || card.alice_outputs != 2 || card.bob_outputs != 2 {
            return domain("CHSH functional needs two settings and two outcomes per party");
        }
        Ok(table(&|a, bb, x, y| {
            if x > 1 || y > 1 {
                return 0.0;
            }
            let s = if (a + bb + x * y) % 2 == 0 { 1.0 } else { -1.0 };
            let tilt = if x == 0 { alpha * 0.5 * if a == 0 { 1.0 } else { -1.0 } } else { 0.0 };
            s + tilt
        }))
    };
    let pairs: Vec<(usize, usize)> = match mode {
        ConstraintMode::MatchedBases => (0..nx.min(ny)).map(|k| (k, k)).collect(),
        _ => (0..nx).flat_map(|x| (0..ny).map(move |y| (x, y))).collect(),
    };
    match mode {
        ConstraintMode::Full | ConstraintMode::MatchedBases => {
            for &(x, y) in &pairs {
                rows.push((format!("P(00|{x}{y})"), table(&|a, bb, x2, y2| f64::from(u8::from(a == 0 && bb == 0 && x2 == x && y2 == y)))));
            }
            for &(x, y) in &pairs {
                rows.push((format!("PA(0|{x})@{y}"), table(&|a, _, x2, y2| f64::from(u8::from(a == 0 && x2 == x && y2 == y)))));
            }
            for &(x, y) in &pairs {
                rows.push((format!("PB(0|{y})@{x}"), table(&|_, bb, x2, y2| f64::from(u8::from(bb == 0 && x2 == x && y2 == y)))));
            }
        }
        ConstraintMode::ChshOnly => rows.push(("CHSH".into(), chsh_row(0.0)?)),
        ConstraintMode::TiltedChsh(alpha) => {
            let label = if alpha == 0.0 { "CHSH".to_string() } else { format!("tilted CHSH({alpha})") };
            rows.push((label, chsh_row(alpha)?));
        }
    }
    let mut coefficients = Vec::new();
    let mut targets = Vec::new();
    let mut labels = Vec::new();
    for (label, t) in rows {
        let mut v = 0.0;
        for a in 0..card.alice_outputs {
            for bb in 0..card.bob_outputs {
                for x in 0..nx {
                    for y in 0..ny {
                        v += t[card.index(a, bb, x, y)] * b.prob(a, bb, x, y);
                    }
                }
            }
        }
        coefficients.extend(t);
        targets.push(v);
        labels.push(label);
    }
    ConstraintSet::new(card, coefficients, targets, labels)
}

/// Complex helper for tests and oracles: `|ψ⟩⟨ψ|` of a normalized vector.
pub fn pure_state(v: &[Complex64]) -> CMat {
    let m = CMat::from_column_slice(v.len(), 1, v);
    let n = m.norm();
    let m = m / c(n);
    &m * m.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn product_state_z() {
        let mut rho = CMat::zeros(4, 4);
        rho[(0, 0)] = c(1.0);
        let r = QubitRealization { state: rho, alice: vec![Z], bob: vec![Z], key: (0, 0), pe_inputs: (1, 1) };
        let b = behavior_from_realization(&r).unwrap();
        assert!((b.prob(0, 0, 0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let r = QubitRealization { state: CMat::identity(4, 4) * c(0.25), alice: vec![Z, X], bob: vec![X, Y], key: (0, 0), pe_inputs: (2, 2) };
        let b = behavior_from_realization(&r).unwrap();
        assert!(b.table.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn werner_values() {
        let (_, b) = werner_chsh(0.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for x in 0..2 {
            for y in 0..2 {
                let want = if x * y == 1 { -h } else { h };
                assert!((b.correlator(x, y) - want).abs() < 1e-14);
            }
        }
        assert!((b.chsh() - T).abs() < 1e-14);
        let (_, half) = werner_chsh(0.5).unwrap();
        assert!(half.table.iter().all(|p| (p - 0.25).abs() < 1e-15));
        for q in [0.01, 0.1, 0.3] {
            let (_, b) = werner_chsh(q).unwrap();
            assert!((b.chsh() - T * (1.0 - 2.0 * q)).abs() < 1e-13);
            b.validate().unwrap();
        }
        assert!(werner_chsh(0.6).is_err());
        assert!(werner_chsh(-0.1).is_err());
    }

    #[test]
    fn efficiency_post_processing() {
        let (r, b) = werner_chsh(0.05).unwrap();
        let same = detection_efficiency(1.0, &r).unwrap();
        assert_eq!(same.table, b.table);
        let e = detection_efficiency(0.8, &r).unwrap();
        for x in 0..2 {
            for y in 0..3 {
                assert!((e.prob(1, 1, x, y) - 0.64 * b.prob(1, 1, x, y)).abs() < 1e-15);
            }
        }
        e.validate().unwrap();
        let zero = detection_efficiency(0.0, &r).unwrap();
        for x in 0..2 {
            for y in 0..3 {
                assert!((zero.prob(0, 0, x, y) - 1.0).abs() < 1e-15);
            }
        }
        assert!(detection_efficiency(1.1, &r).is_err());
    }

    #[test]
    fn closed_form_chsh_matches_born_rule() {
        let params = [0.3, 0.2, 1.3, -0.4, 0.9];
        for eta in [1.0, 0.9, 0.7] {
            let b = flip_outcomes(eta, &behavior_from_realization(&zx_realization(&params)).unwrap()).unwrap();
            assert!((b.chsh() - chsh_with_efficiency(&params, eta)).abs() < 1e-13);
        }
    }

    #[test]
    fn optimizer_unit_efficiency() {
        let o = optimize_chsh_realization(1.0).unwrap();
        assert!(o.chsh >= T - 1e-4, "{}", o.chsh);
        assert!(o.chsh <= T + 1e-12);
        assert!(((2.0 * o.params[0]).sin().abs() - 1.0).abs() < 1e-3);
        assert!(optimize_chsh_realization(2.0 / 3.0).is_err());
        assert!(optimize_chsh_realization(0.66).is_err());
    }

    /// Dense grid over the five parameters as an independent reference.
    fn grid_max(eta: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let n = 24;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=12 {
            let theta = pi / 4.0 * i as f64 / 12.0;
            for a0 in 0..n {
                for a1 in 0..n {
                    for b0 in 0..n {
                        for b1 in 0..n {
                            let ang = |k: usize| -pi + 2.0 * pi * k as f64 / n as f64;
                            best = best.max(chsh_with_efficiency(&[theta, ang(a0), ang(a1), ang(b0), ang(b1)], eta));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn optimizer_matches_grid() {
        for eta in [0.7, 0.85, 0.95] {
            let o = optimize_chsh_realization(eta).unwrap();
            let g = grid_max(eta);
            assert!(o.chsh >= g - 1e-9, "eta {eta}: {} < grid {}", o.chsh, g);
            assert!(o.chsh - g < 0.05, "eta {eta}: grid too coarse? {} vs {}", o.chsh, g);
        }
        let low = optimize_chsh_realization(0.7).unwrap();
        assert!(low.chsh > 2.0);
        assert!((2.0 * low.params[0]).sin().abs() < 0.9, "{:?}", low.params);
    }

    #[test]
    fn constraint_modes() {
        let (_, b) = werner_chsh(0.0).unwrap();
        let full = constraints_from_behavior(&b, ConstraintMode::Full).unwrap();
        assert_eq!(full.len(), 12);
        assert_eq!(full.card, Cardinalities::chsh());
        let chsh = constraints_from_behavior(&b, ConstraintMode::ChshOnly).unwrap();
        assert_eq!(chsh.len(), 1);
        assert!((chsh.targets[0] - T).abs() < 1e-14);
        let tilted = constraints_from_behavior(&b, ConstraintMode::TiltedChsh(0.0)).unwrap();
        assert_eq!(tilted.coefficients, chsh.coefficients);
        assert_eq!(tilted.targets, chsh.targets);
        let t = constraints_from_behavior(&b, ConstraintMode::TiltedChsh(0.5)).unwrap();
        assert!((t.targets[0] - (T + 0.5 * b.alice_mean(0))).abs() < 1e-14);
    }

    #[test]
    fn signaling_behavior_rejected() {
        let (_, mut b) = werner_chsh(0.1).unwrap();
        let i = b.card.index(0, 0, 0, 0);
        let j = b.card.index(0, 1, 0, 0);
        let k = b.card.index(1, 0, 0, 0);
        let l = b.card.index(1, 1, 0, 0);
        b.table[i] += 0.01;
        b.table[l] += 0.01;
        b.table[j] -= 0.01;
        b.table[k] -= 0.01;
        b.validate().unwrap();
        b.table[i] += 0.01;
        b.table[k] -= 0.01;
        let e = b.validate().unwrap_err().to_string();
        assert!(e.contains("no-signaling"), "{e}");
    }

    #[test]
    fn six_state_correlations() {
        let (_, b) = six_state(0.05).unwrap();
        for k in 0..3 {
            assert!((b.prob(0, 1, k, k) + b.prob(1, 0, k, k) - 0.05).abs() < 1e-14);
        }
        let cs = constraints_from_behavior(&b, ConstraintMode::MatchedBases).unwrap();
        assert_eq!(cs.len(), 9);
    }
}
