//! Entropy bounds, λ search, baselines and key rates.

use std::f64::consts::LN_2;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::kfactory::{weights, ConstraintSet, FactorOrder, KStructure, LambdaVector, Pinching};
use crate::linalg::binary_entropy;
use crate::opalg::{canonicalize, multiply, Cardinalities, Party, Polynomial, RuleSet};
use crate::optim::{golden_section, NelderMead};
use crate::par;
use crate::relax::{build_guessing_relaxation, generate_basis, to_sdp, BasisSpec, MomentRelaxation};
use crate::io::{ConstraintChoice, PinchingMode, RateRow, RunConfig, Scenario};
use crate::scenarios::{
    constraints_from_behavior, detection_efficiency, optimize_chsh_realization, six_state, werner_chsh, Behavior, ConstraintMode,
};
use crate::sdp::{certify_upper_bound, solve, Presolved, SdpProblem, Sense, SolverOptions, Status};

/// Summary of the dual certificate behind a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    /// Certified upper bound on `sup ⟨K⟩`.
    pub upper_bound: f64,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub shift: f64,
    pub residual_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub k_words: usize,
    pub k_pairs: usize,
    pub dropped_terms: usize,
    pub basis_size: usize,
    pub moments: usize,
    pub equalities: usize,
    pub iterations: usize,
    pub solve_seconds: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub nats: f64,
    pub bits: f64,
    pub lambda: LambdaVector,
    pub level: BasisSpec,
    pub certificate: CertificateSummary,
    pub diagnostics: Diagnostics,
}

/// Cached K structure and relaxation for one constraint set and pinching.
/// Only the objective changes between λ evaluations.
#[derive(Debug, Clone)]
pub struct BoundEngine {
    cs: ConstraintSet,
    structure: KStructure,
    relaxation: MomentRelaxation,
    template: SdpProblem,
    word_ids: Vec<usize>,
    level: BasisSpec,
    solver: SolverOptions,
    presolved: Option<Presolved>,
}

/// Smallest per-party depths that admit every word K can contain.
pub fn minimal_level(structure: &KStructure) -> BasisSpec {
    let (a, b) = crate::kfactory::words_depth(structure.words().iter());
    BasisSpec::new(a.max(1), b.max(1))
}

/// Level 1 plus, for every word `w` of K, a pair `u`, `v` with `u†v = w`.
/// Much smaller than the full level when there are many settings.
pub fn k_driven_level(structure: &KStructure, rules: &RuleSet) -> Result<BasisSpec> {
    let mut halves = std::collections::BTreeSet::new();
    for w in structure.words() {
        let (a, b) = w.split();
        let (ka, kb) = (a.len() / 2, b.len().div_ceil(2));
        let mut u: Vec<_> = a[..ka].iter().rev().copied().collect();
        u.extend(b[..kb].iter().rev());
        let mut v = a[ka..].to_vec();
        v.extend_from_slice(&b[kb..]);
        for half in [u, v] {
            if let Some(m) = canonicalize(&half, rules)? {
                halves.insert(m);
            }
        }
    }
    Ok(BasisSpec::new(1, 1).with_extra_words(halves.into_iter().collect()))
}

/// `"a,b"`, with the number of extra words appended when there are any.
pub fn level_label(level: &BasisSpec) -> String {
    if level.extra_words.is_empty() {
        format!("{},{}", level.alice_depth, level.bob_depth)
    } else {
        format!("{},{}+{}", level.alice_depth, level.bob_depth, level.extra_words.len())
    }
}

impl BoundEngine {
    /// `level = None` selects the minimal level admitting K, or the K-driven
    /// basis when that level exceeds the solver's block cap. A requested level
    /// below the minimum is raised.
    pub fn new(cs: &ConstraintSet, rules: &RuleSet, pinching: Pinching, level: Option<BasisSpec>, solver: SolverOptions) -> Result<Self> {
        let order = FactorOrder::support_of(cs);
        if order.0.is_empty() {
            return domain("constraint set has empty support");
        }
        let structure = KStructure::new(cs.card, pinching, &order, rules)?;
        let min = minimal_level(&structure);
        let level = match level {
            None if generate_basis(&min, rules)?.len() > solver.block_cap => k_driven_level(&structure, rules)?,
            None => min,
            Some(l) => BasisSpec { alice_depth: l.alice_depth.max(min.alice_depth), bob_depth: l.bob_depth.max(min.bob_depth), extra_words: l.extra_words },
        };
        Self::with_level(cs, rules, structure, level, solver)
    }

    /// Use exactly `level`; fails with an increase-level error if K does not fit.
    pub fn with_level(cs: &ConstraintSet, rules: &RuleSet, structure: KStructure, level: BasisSpec, solver: SolverOptions) -> Result<Self> {
        let basis = generate_basis(&level, rules)?;
        let mut relaxation = MomentRelaxation::assemble(1, &basis);
        relaxation.add_normalization()?;
        relaxation.add_constraints(cs, rules)?;
        relaxation.add_identities(rules)?;
        let word_ids = relaxation.word_ids(0, structure.words())?;
        let template = to_sdp(&relaxation, Sense::Maximize);
        // Inconsistent equalities are left to `solve`, which reports them.
        let presolved = Presolved::new(&template).ok();
        Ok(Self { cs: cs.clone(), structure, relaxation, template, word_ids, level, solver, presolved })
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.cs
    }

    pub fn level(&self) -> &BasisSpec {
        &self.level
    }

    pub fn relaxation(&self) -> &MomentRelaxation {
        &self.relaxation
    }

    pub fn structure(&self) -> &KStructure {
        &self.structure
    }

    /// The SDP whose optimum is `sup ⟨K⟩` for this λ.
    pub fn problem(&self, lambda: &LambdaVector) -> Result<(SdpProblem, usize)> {
        let w = weights(lambda, &self.cs)?;
        let coeffs = self.structure.coefficients(&w)?;
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut p = self.template.clone();
        let mut dropped = 0;
        for (&id, &c) in self.word_ids.iter().zip(&coeffs) {
            if c.abs() <= crate::kfactory::PRUNE_REL * max {
                if c != 0.0 {
                    dropped += 1;
                }
                continue;
            }
            p.objective[id] += c;
        }
        Ok((p, dropped))
    }

    /// Certified `Σ λ_j l_j - ln sup⟨K⟩` for this λ.
    pub fn entropy_bound(&self, lambda: &LambdaVector) -> Result<BoundResult> {
        let start = Instant::now();
        let (p, dropped) = self.problem(lambda)?;
        let sol = match &self.presolved {
            Some(pre) => pre.solve(&p, &self.solver)?,
            None => solve(&p, &self.solver)?,
        };
        if let Status::Infeasible { certified } = sol.status {
            return Err(Error::Infeasible { certified });
        }
        let cert = match &self.presolved {
            Some(pre) => pre.certify_upper_bound(&p, &sol)?,
            None => certify_upper_bound(&p, &sol)?,
        };
        if !(cert.bound > 0.0) {
            return Err(Error::Certification { delta: cert.bound, threshold: 0.0 });
        }
        let nats = self.cs.lambda_dot_targets(lambda) - cert.bound.ln();
        Ok(BoundResult {
            nats,
            bits: nats / LN_2,
            lambda: lambda.clone(),
            level: self.level.clone(),
            certificate: CertificateSummary {
                upper_bound: cert.bound,
                dual_objective: cert.dual_objective,
                primal_objective: sol.primal_objective,
                shift: cert.shift,
                residual_penalty: cert.residual_penalty,
            },
            diagnostics: Diagnostics {
                k_words: self.structure.words().len(),
                k_pairs: self.structure.pair_count(),
                dropped_terms: dropped,
                basis_size: self.relaxation.blocks[0].basis.len(),
                moments: self.relaxation.num_moments(),
                equalities: self.relaxation.equalities.len(),
                iterations: sol.iterations,
                solve_seconds: start.elapsed().as_secs_f64(),
                evaluations: 1,
            },
        })
    }
}

impl BoundEngine {
    /// Maximize the certified bound over λ with at most `budget` bound
    /// evaluations. The first evaluation is at `init` (zero when absent).
    pub fn optimize(&self, budget: usize, init: Option<&LambdaVector>) -> Result<BoundResult> {
        if budget == 0 {
            return domain("budget must be at least 1");
        }
        let n = self.cs.len();
        let x0 = init.map(|l| l.0.clone()).unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return domain(format!("initial lambda has {} entries for {} constraints", x0.len(), n));
        }
        let mut search = Search { engine: self, budget, used: 0, best: None };
        search.eval(&[x0]);

        // Line search along the correlation direction.
        if let Some(dir) = correlation_direction(&self.cs) {
            let grid: Vec<Vec<f64>> = LINE_GRID.iter().map(|&t| dir.iter().map(|d| t * d).collect()).collect();
            let vals = search.eval(&grid);
            let (k, v) = vals.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
            if v.is_finite() {
                let lo = if k == 0 { LINE_GRID[0] * 2.0 } else { LINE_GRID[k - 1] };
                let hi = if k + 1 == LINE_GRID.len() { LINE_GRID[k] * 2.0 } else { LINE_GRID[k + 1] };
                let evals = LINE_EVALS.min(search.remaining());
                if evals >= 2 {
                    golden_section(|t| search.eval(&[dir.iter().map(|d| t * d).collect()])[0], lo, hi, evals);
                }
            }
        }

        // Simplex restarts around the incumbent with shrinking steps.
        let mut step = 0.0;
        while search.remaining() > n + 1 {
            let Some(best) = search.best.as_ref() else { break };
            let x = best.lambda.0.clone();
            if step == 0.0 {
                step = 0.25 * x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(0.4);
            }
            let before = best.nats;
            let nm = NelderMead { step, max_evals: search.remaining(), f_tol: 1e-8 };
            nm.minimize_batched(|pts| search.eval(pts), &x);
            let after = search.best.as_ref().map_or(before, |b| b.nats);
            step *= if after > before + 1e-6 { 0.7 } else { 0.35 };
            if step < 1e-4 {
                break;
            }
        }

        let used = search.used;
        let mut best = match search.best {
            Some(b) => b,
            None => return self.entropy_bound(&LambdaVector::zeros(n)),
        };
        best.diagnostics.evaluations = used;
        Ok(best)
    }
}

/// Multiples of the correlation direction tried before the simplex search.
const LINE_GRID: [f64; 5] = [-0.5, 0.25, 0.5, 1.0, 2.0];
/// Golden-section evaluations refining the best grid point.
const LINE_EVALS: usize = 8;

struct Search<'a> {
    engine: &'a BoundEngine,
    budget: usize,
    used: usize,
    best: Option<BoundResult>,
}

impl Search<'_> {
    fn remaining(&self) -> usize {
        self.budget - self.used
    }

    /// `-nats` for each point; failed or over-budget evaluations give `+inf`.
    fn eval(&mut self, pts: &[Vec<f64>]) -> Vec<f64> {
        let take = pts.len().min(self.remaining());
        let engine = self.engine;
        let results = par::map(&pts[..take], |x| engine.entropy_bound(&LambdaVector(x.clone())).ok());
        self.used += take;
        let mut out = vec![f64::INFINITY; pts.len()];
        for (slot, r) in out.iter_mut().zip(results) {
            if let Some(r) = r {
                *slot = -r.nats;
                if self.best.as_ref().is_none_or(|b| r.nats > b.nats) {
                    self.best = Some(r);
                }
            }
        }
        out
    }
}

/// Least-squares λ whose weight table matches `target` up to a constant per
/// input pair (such constants leave the bound unchanged).
pub fn fit_lambda(cs: &ConstraintSet, target: &[f64]) -> Result<LambdaVector> {
    let card = cs.card;
    if target.len() != card.table_len() {
        return domain("target table has the wrong length");
    }
    let pairs = cs.support();
    let cols = cs.len() + pairs.len();
    let rows = card.table_len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    for j in 0..cs.len() {
        for (i, v) in cs.table(j).iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    for (k, &(x, y)) in pairs.iter().enumerate() {
        for aa in 0..card.alice_outputs {
            for b in 0..card.bob_outputs {
                a[(card.index(aa, b, x, y), cs.len() + k)] = 1.0;
            }
        }
    }
    let rhs = DVector::from_column_slice(target);
    let sol = a.svd(true, true).solve(&rhs, 1e-10).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(LambdaVector(sol.iter().take(cs.len()).copied().collect()))
}

/// λ reproducing `lambda` of `from` as closely as `to` allows.
pub fn transfer_lambda(from: &ConstraintSet, lambda: &LambdaVector, to: &ConstraintSet) -> Result<LambdaVector> {
    if from.card != to.card {
        return domain("constraint sets have different cardinalities");
    }
    fit_lambda(to, &weights(lambda, from)?.values)
}

/// Signed correlation table: CHSH when two binary settings per party are
/// constrained, otherwise `Σ_x (-1)^(a+b)` over matched settings.
fn correlation_table(card: &Cardinalities, support: &[(usize, usize)]) -> Vec<f64> {
    let mut t = vec![0.0; card.table_len()];
    let chsh = card.alice_outputs == 2
        && card.bob_outputs == 2
        && [(0, 0), (0, 1), (1, 0), (1, 1)].iter().all(|p| support.contains(p));
    for &(x, y) in support {
        for a in 0..card.alice_outputs {
            for b in 0..card.bob_outputs {
                let sign = if a == b { 1.0 } else { -1.0 };
                let v = if chsh {
                    if x < 2 && y < 2 {
                        sign * if x * y == 1 { -1.0 } else { 1.0 }
                    } else {
                        0.0
                    }
                } else if x == y {
                    sign
                } else {
                    0.0
                };
                t[card.index(a, b, x, y)] = v;
            }
        }
    }
    t
}

fn correlation_direction(cs: &ConstraintSet) -> Option<Vec<f64>> {
    let t = correlation_table(&cs.card, &cs.support());
    let l = fit_lambda(cs, &t).ok()?;
    let w = weights(&l, cs).ok()?;
    (w.values.iter().any(|v| v.abs() > 1e-9)).then_some(l.0)
}

/// Certified bound maximized over λ with at most `budget` evaluations.
pub fn optimize_lambda(cs: &ConstraintSet, pinching: Pinching, level: Option<BasisSpec>, budget: usize, rules: &RuleSet) -> Result<BoundResult> {
    BoundEngine::new(cs, rules, pinching, level, SolverOptions::default())?.optimize(budget, None)
}

/// Key rate with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub rate: f64,
    pub hae: BoundResult,
    /// `H(A0|B0)` in bits.
    pub hab: f64,
}

impl RateResult {
    pub fn new(hae: BoundResult, hab: f64) -> Self {
        Self { rate: devetak_winter(hae.bits, hab), hae, hab }
    }
}

/// `max{H(A0|E) - H(A0|B0), 0}`.
pub fn devetak_winter(hae_bits: f64, hab_bits: f64) -> f64 {
    (hae_bits - hab_bits).max(0.0)
}

/// `H(A|B)` in bits of the outcome distribution at the key settings `(x, y)`.
pub fn cond_shannon(b: &Behavior, key: (usize, usize)) -> Result<f64> {
    let (x, y) = key;
    if x >= b.card.alice_inputs || y >= b.card.bob_inputs {
        return domain("key settings out of range");
    }
    let plogp = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    let mut h = 0.0;
    for bb in 0..b.card.bob_outputs {
        let mut pb = 0.0;
        for a in 0..b.card.alice_outputs {
            let p = b.prob(a, bb, x, y).max(0.0);
            h += plogp(p);
            pb += p;
        }
        h -= plogp(pb);
    }
    Ok(h.max(0.0))
}

/// Default basis for guessing-probability relaxations.
pub fn guessing_level() -> BasisSpec {
    BasisSpec::new(1, 1)
}

/// Certified upper bound on the guessing probability of the `target` key.
pub fn guessing_probability(cs: &ConstraintSet, target: Pinching, level: Option<BasisSpec>, rules: &RuleSet) -> Result<f64> {
    let level = level.unwrap_or_else(guessing_level);
    if level.alice_depth + level.bob_depth == 0 {
        return domain("guessing probability needs level at least 1");
    }
    let rel = build_guessing_relaxation(target, cs, &level, rules)?;
    let p = to_sdp(&rel, Sense::Maximize);
    let sol = solve(&p, &SolverOptions::default())?;
    if let Status::Infeasible { certified } = sol.status {
        return Err(Error::Infeasible { certified });
    }
    Ok(certify_upper_bound(&p, &sol)?.bound.min(1.0))
}

/// `(-log2 pg, 2(1 - pg))` in bits; the second value only applies to
/// uniform binary marginals.
pub fn baseline_bounds(pg: f64, marginal_uniform_binary: bool) -> (f64, Option<f64>) {
    let pg = pg.clamp(f64::MIN_POSITIVE, 1.0);
    let min_entropy = (-pg.log2()).max(0.0);
    let briet = marginal_uniform_binary.then(|| (2.0 * (1.0 - pg)).max(0.0));
    (min_entropy + 0.0, briet.map(|v| v + 0.0))
}

/// Analytic CHSH curve `1 - h(1/2 + sqrt((S/2)^2 - 1)/2)` for plots.
pub fn pironio_reference(s: f64) -> Result<f64> {
    let tsirelson = 2.0 * std::f64::consts::SQRT_2;
    if !(2.0..=tsirelson + 1e-12).contains(&s) {
        return domain(format!("CHSH value {s} outside [2, 2√2]"));
    }
    let r = ((s / 2.0).powi(2) - 1.0).max(0.0).sqrt();
    Ok(1.0 - binary_entropy(0.5 + r / 2.0))
}

/// `H(A0|E)` bound and Devetak-Winter rate for a behavior.
pub fn key_rate(b: &Behavior, mode: ConstraintMode, level: Option<BasisSpec>, budget: usize) -> Result<RateResult> {
    let cs = constraints_from_behavior(b, mode)?;
    let rules = RuleSet::new(cs.card, true);
    let hae = optimize_lambda(&cs, Pinching::OneParty { alice_key: b.key.0 }, level, budget, &rules)?;
    Ok(RateResult::new(hae, cond_shannon(b, b.key)?))
}

/// `H(A0B0|E)` bound with the parameter-estimation pair `(0, 0)` as key.
pub fn two_party_bound(b: &Behavior, mode: ConstraintMode, level: Option<BasisSpec>, budget: usize) -> Result<BoundResult> {
    let cs = constraints_from_behavior(b, mode)?;
    let rules = RuleSet::new(cs.card, true);
    optimize_lambda(&cs, Pinching::TwoParty { alice_key: 0, bob_key: 0 }, level, budget, &rules)
}

/// `O_x O_x' + O_x' O_x = 0` with `O = 2Π_0 - 1` for each pair of Alice's
/// settings, written as `2PQ + 2QP - 2P - 2Q + 1`.
pub fn anticommutation_identities(rules: &RuleSet) -> Result<Vec<Polynomial>> {
    if rules.card.alice_outputs != 2 {
        return domain("anticommutation identities need binary outcomes");
    }
    let n = rules.card.alice_inputs;
    let mut out = Vec::new();
    for x in 0..n {
        for x2 in x + 1..n {
            let p = rules.projector(Party::Alice, x, 0)?;
            let q = rules.projector(Party::Alice, x2, 0)?;
            let two = num_complex::Complex64::new(2.0, 0.0);
            let m2 = num_complex::Complex64::new(-2.0, 0.0);
            let poly = multiply(&p, &q, rules)
                .scale(two)
                .add(&multiply(&q, &p, rules).scale(two))
                .add(&p.scale(m2))
                .add(&q.scale(m2))
                .add(&Polynomial::identity());
            out.push(poly);
        }
    }
    Ok(out)
}

/// One-sided DI bound: Alice's settings are mutually unbiased qubit
/// measurements, Bob is uncharacterized.
pub fn one_sided_bound(b: &Behavior, level: Option<BasisSpec>, budget: usize) -> Result<BoundResult> {
    let cs = constraints_from_behavior(b, ConstraintMode::MatchedBases)?;
    let plain = RuleSet::new(cs.card, true);
    let rules = RuleSet::new(cs.card, true).with_identities(anticommutation_identities(&plain)?);
    let engine = BoundEngine::new(&cs, &rules, Pinching::OneParty { alice_key: b.key.0 }, level, SolverOptions::default())?;
    engine.optimize(budget, None)
}

/// Behavior of `scenario` at grid value `param`.
pub fn scenario_behavior(scenario: Scenario, param: f64) -> Result<Behavior> {
    match scenario {
        Scenario::Werner => Ok(werner_chsh(param)?.1),
        Scenario::Efficiency => detection_efficiency(param, &optimize_chsh_realization(param)?.realization),
        Scenario::SixState => Ok(six_state(param)?.1),
    }
}

fn constraint_mode(scenario: Scenario, choice: ConstraintChoice) -> ConstraintMode {
    match (scenario, choice) {
        (Scenario::SixState, ConstraintChoice::Full) => ConstraintMode::MatchedBases,
        (_, ConstraintChoice::Full) => ConstraintMode::Full,
        (_, ConstraintChoice::Chsh) => ConstraintMode::ChshOnly,
        (_, ConstraintChoice::Tilted(a)) => ConstraintMode::TiltedChsh(a),
    }
}

/// Everything needed to evaluate one configuration on a behavior.
pub struct PointSetup {
    pub behavior: Behavior,
    pub constraints: ConstraintSet,
    pub rules: RuleSet,
    pub pinching: Pinching,
    pub level: Option<BasisSpec>,
    pub solver: SolverOptions,
}

impl PointSetup {
    pub fn new(cfg: &RunConfig, behavior: Behavior) -> Result<Self> {
        let constraints = constraints_from_behavior(&behavior, constraint_mode(cfg.scenario, cfg.constraints))?;
        let plain = RuleSet::new(constraints.card, true);
        let rules = if cfg.onesided { plain.clone().with_identities(anticommutation_identities(&plain)?) } else { plain };
        let pinching = match cfg.pinching {
            PinchingMode::One => Pinching::OneParty { alice_key: behavior.key.0 },
            PinchingMode::Two => Pinching::TwoParty { alice_key: 0, bob_key: 0 },
        };
        if pinching_key(pinching) >= constraints.card.alice_inputs {
            return domain("the key setting is not a parameter-estimation setting");
        }
        let level = cfg.level.map(|(a, b)| BasisSpec::new(a, b));
        Ok(Self { behavior, constraints, rules, pinching, level, solver: SolverOptions::with_tol(cfg.tol) })
    }

    pub fn engine(&self) -> Result<BoundEngine> {
        BoundEngine::new(&self.constraints, &self.rules, self.pinching, self.level.clone(), self.solver)
    }
}

fn pinching_key(p: Pinching) -> usize {
    match p {
        Pinching::OneParty { alice_key } | Pinching::TwoParty { alice_key, .. } => alice_key,
    }
}

fn fmt_lambda(l: &LambdaVector) -> String {
    l.0.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

/// One sweep row; failures are recorded in `status`.
pub fn run_point(cfg: &RunConfig, param: f64) -> RateRow {
    let mut row = RateRow {
        parameter: param,
        chsh: None,
        bound_bits: None,
        h_ab_bits: None,
        dw_rate: None,
        pg: None,
        min_entropy_bits: None,
        briet_bits: None,
        pironio_bits: None,
        lambda: String::new(),
        level: String::new(),
        evaluations: 0,
        iterations: 0,
        solve_seconds: 0.0,
        status: "ok".into(),
    };
    if let Err(e) = fill_row(cfg, param, &mut row) {
        row.status = e.to_string();
    }
    row
}

fn fill_row(cfg: &RunConfig, param: f64, row: &mut RateRow) -> Result<()> {
    let b = scenario_behavior(cfg.scenario, param)?;
    let card = b.card;
    if card.alice_inputs >= 2 && card.bob_inputs >= 2 && card.alice_outputs == 2 && card.bob_outputs == 2 {
        let s = b.chsh();
        row.chsh = Some(s);
        row.pironio_bits = pironio_reference(s.min(2.0 * std::f64::consts::SQRT_2)).ok();
    }
    row.h_ab_bits = Some(cond_shannon(&b, b.key)?);
    let setup = PointSetup::new(cfg, b)?;
    let start = Instant::now();
    let engine = setup.engine()?;
    row.level = level_label(engine.level());
    let best = engine.optimize(cfg.lambda_budget, None)?;
    row.bound_bits = Some(best.bits);
    row.dw_rate = Some(devetak_winter(best.bits, row.h_ab_bits.unwrap_or(0.0)));
    row.lambda = fmt_lambda(&best.lambda);
    row.evaluations = best.diagnostics.evaluations;
    row.iterations = best.diagnostics.iterations;
    let pg = guessing_probability(&setup.constraints, setup.pinching, None, &setup.rules)?;
    let binary = matches!(setup.pinching, Pinching::OneParty { .. }) && card.alice_outputs == 2 && {
        let p0: f64 = (0..card.bob_outputs).map(|bb| setup.behavior.prob(0, bb, setup.behavior.key.0, 0)).sum();
        (p0 - 0.5).abs() < 1e-9
    };
    let (hmin, briet) = baseline_bounds(pg, binary);
    row.pg = Some(pg);
    row.min_entropy_bits = Some(hmin);
    row.briet_bits = briet;
    row.solve_seconds = start.elapsed().as_secs_f64();
    Ok(())
}

/// All rows of a sweep, in grid order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    Ok(par::map(&cfg.grid, |&p| run_point(cfg, p)))
}

/// One-shot certified bound (builds a fresh engine).
pub fn entropy_bound(cs: &ConstraintSet, lambda: &LambdaVector, pinching: Pinching, level: Option<BasisSpec>, rules: &RuleSet) -> Result<BoundResult> {
    BoundEngine::new(cs, rules, pinching, level, SolverOptions::default())?.entropy_bound(lambda)
}
