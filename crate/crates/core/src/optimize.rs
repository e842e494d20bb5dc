//! Exact two-copy optimisation.
//!
//! The CHSH value of a composed box is linear in Alice's effects and splits
//! into one block per Alice input symbol, so for a fixed Bob wiring pair the
//! optimum is the sum of two independent 32-variable linear programs. Bob's
//! side is swept over all 82² catalog pairs.

use std::io::Write;
use std::sync::OnceLock;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::boxes::{Behaviour, ExtremalIndex};
use crate::error::{Error, Result};
use crate::simplex::{Constraint, FeasibleBasis, LinearProgram, LpSolution, Relation};
use crate::wirings::{
    catalog, dot32, PairContext, WiringEffect, WiringLabel, WiringPair, CATALOG_SIZE,
};

/// Tolerance for ties and label identification.
pub const TIE_TOL: f64 = 1e-9;

/// Entrywise tolerance for the PR-preservation census.
pub const PR_TOL: f64 = 1e-12;

/// CHSH sign of the `(x, y)` correlator.
#[inline]
fn chsh_sign(x: usize, y: usize) -> f64 {
    if x == 1 && y == 1 {
        -1.0
    } else {
        1.0
    }
}

fn extremal_tables() -> Vec<[f64; 16]> {
    ExtremalIndex::all()
        .map(|e| *e.behaviour().as_array())
        .collect()
}

/// The full coupler LP over both of Alice's input symbols: 64 variables,
/// lower and upper output bounds for every extremal box, output and input
/// symbol, and normalisation per extremal box and input symbol.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub program: LinearProgram,
}

impl LpProblem {
    pub const N_VARS: usize = 64;

    pub fn new(objective: [f64; 64]) -> Self {
        let ext = extremal_tables();
        let mut constraints = Vec::with_capacity(240);
        for x in 0..2 {
            for q in &ext {
                for a in 0..2 {
                    let mut row = vec![0.0; 64];
                    for k in 0..16 {
                        row[32 * x + 16 * a + k] = q[k];
                    }
                    constraints.push(Constraint::new(row.clone(), Relation::GreaterEq, 0.0));
                    constraints.push(Constraint::new(row, Relation::LessEq, 1.0));
                }
            }
        }
        for x in 0..2 {
            for q in &ext {
                let mut row = vec![0.0; 64];
                for a in 0..2 {
                    for k in 0..16 {
                        row[32 * x + 16 * a + k] = q[k];
                    }
                }
                constraints.push(Constraint::new(row, Relation::Equal, 1.0));
            }
        }
        Self {
            program: LinearProgram {
                objective: objective.to_vec(),
                constraints,
            },
        }
    }

    /// Objective maximising the CHSH value of the composition under `bob`.
    pub fn for_bob(ctx: &PairContext, bob: &WiringPair) -> Self {
        let c = alice_objectives(&[
            ctx.chsh_weights(&bob.effects[0]),
            ctx.chsh_weights(&bob.effects[1]),
        ]);
        let mut obj = [0.0; 64];
        obj[..32].copy_from_slice(&c[0]);
        obj[32..].copy_from_slice(&c[1]);
        Self::new(obj)
    }

    pub fn inequality_rows(&self) -> usize {
        self.program
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Equal)
            .count()
    }

    pub fn equality_rows(&self) -> usize {
        self.program
            .constraints
            .iter()
            .filter(|c| c.relation == Relation::Equal)
            .count()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Ok(self.program.maximize()?)
    }
}

/// Per-symbol objectives `c_x = Σ_y s_xy D(ξ_y)`.
fn alice_objectives(d: &[[f64; 32]; 2]) -> [[f64; 32]; 2] {
    let mut c = [[0.0; 32]; 2];
    for (x, cx) in c.iter_mut().enumerate() {
        for (y, dy) in d.iter().enumerate() {
            let s = chsh_sign(x, y);
            for k in 0..32 {
                cx[k] += s * dy[k];
            }
        }
    }
    c
}

/// Feasible basis of the single-symbol coupler system `χ ≥ 0` with one
/// normalisation row per extremal box. Non-negativity of `χ` together with
/// normalisation implies the output bounds.
fn coupler_basis() -> &'static FeasibleBasis {
    static BASIS: OnceLock<FeasibleBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let rows: Vec<Constraint> = extremal_tables()
            .iter()
            .map(|q| {
                let mut row = vec![0.0; 32];
                for a in 0..2 {
                    row[16 * a..16 * a + 16].copy_from_slice(q);
                }
                Constraint::new(row, Relation::Equal, 1.0)
            })
            .collect();
        FeasibleBasis::find(32, &rows).expect("catalog effects make the coupler system feasible")
    })
}

/// Optimum of one input symbol's block.
#[derive(Clone, Copy, Debug)]
pub struct SymbolOptimum {
    pub value: f64,
    pub effect: WiringEffect,
    pub label: Option<WiringLabel>,
}

fn best_catalog(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Lowest catalog label whose value is within [`TIE_TOL`] of `target`.
fn lowest_within(values: impl Iterator<Item = f64>, target: f64) -> Option<usize> {
    values
        .enumerate()
        .find(|(_, v)| *v >= target - TIE_TOL)
        .map(|(i, _)| i)
}

fn solve_symbol(c: &[f64; 32]) -> Result<SymbolOptimum> {
    let sol = coupler_basis().maximize(c)?;
    let cat = catalog();
    match lowest_within(cat.iter().map(|e| dot32(c, e.as_array())), sol.value) {
        Some(i) => Ok(SymbolOptimum {
            value: sol.value,
            effect: cat[i],
            label: Some(WiringLabel::new(i as u8 + 1)?),
        }),
        None => {
            warn!(
                "two-copy optimum at a non-catalog effect (value {})",
                sol.value
            );
            let mut chi = [0.0; 32];
            chi.copy_from_slice(&sol.x);
            let effect = WiringEffect::new(chi)
                .map_err(|e| Error::InvalidWiring(format!("LP returned {e}")))?;
            Ok(SymbolOptimum {
                value: sol.value,
                effect,
                label: None,
            })
        }
    }
}

/// Alice's optimal effects against a fixed Bob wiring pair.
#[derive(Clone, Copy, Debug)]
pub struct AliceOptimum {
    pub value: f64,
    pub symbols: [SymbolOptimum; 2],
}

impl AliceOptimum {
    pub fn pair(&self) -> WiringPair {
        WiringPair {
            effects: [self.symbols[0].effect, self.symbols[1].effect],
            labels: [self.symbols[0].label, self.symbols[1].label],
        }
    }
}

fn optimize_with_weights(d0: &[f64; 32], d1: &[f64; 32]) -> Result<AliceOptimum> {
    let c = alice_objectives(&[*d0, *d1]);
    let s0 = solve_symbol(&c[0])?;
    let s1 = solve_symbol(&c[1])?;
    Ok(AliceOptimum {
        value: s0.value + s1.value,
        symbols: [s0, s1],
    })
}

/// Maximal CHSH of `compose2(q1, q2, ·, bob)` over all valid Alice effects.
pub fn lp_optimize_alice(q1: &Behaviour, q2: &Behaviour, bob: &WiringPair) -> Result<AliceOptimum> {
    let ctx = PairContext::new(*q1, *q2);
    optimize_with_weights(
        &ctx.chsh_weights(&bob.effects[0]),
        &ctx.chsh_weights(&bob.effects[1]),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BobEntry {
    pub bob: [u8; 2],
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub value: f64,
    pub alice: WiringPair,
    pub bob: WiringPair,
    pub per_bob: Option<Vec<BobEntry>>,
}

fn labels_json(pair: &WiringPair) -> serde_json::Value {
    serde_json::Value::Array(
        pair.labels
            .iter()
            .map(|l| match l {
                Some(l) => serde_json::json!(l.get()),
                None => serde_json::json!("LP"),
            })
            .collect(),
    )
}

impl SweepResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "value": self.value,
            "alice": labels_json(&self.alice),
            "bob": labels_json(&self.bob),
        });
        if self.alice.labels.iter().any(Option::is_none) {
            v["alice_effects"] = serde_json::json!(self
                .alice
                .effects
                .iter()
                .map(|e| e.as_array().to_vec())
                .collect::<Vec<_>>());
        }
        v
    }

    /// Per-Bob table as CSV with columns `bob_l0,bob_l1,value`.
    pub fn write_per_bob_csv<W: Write>(&self, out: W) -> Result<()> {
        let table = self
            .per_bob
            .as_ref()
            .ok_or_else(|| Error::Argument("sweep ran without a per-Bob table".into()))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bob_l0", "bob_l1", "value"])?;
        for e in table {
            w.write_record([
                e.bob[0].to_string(),
                e.bob[1].to_string(),
                e.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// CHSH weights of every catalog Bob effect for the given boxes.
fn bob_weights(ctx: &PairContext) -> Vec<[f64; 32]> {
    catalog().par_iter().map(|e| ctx.chsh_weights(e)).collect()
}

/// Picks the first entry (in Bob-label order) within [`TIE_TOL`] of the maximum.
fn select(values: &[f64]) -> (usize, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = values
        .iter()
        .position(|v| *v >= max - TIE_TOL)
        .expect("non-empty sweep");
    (i, max)
}

fn bob_pair(i: usize) -> WiringPair {
    WiringPair::from_labels(
        WiringLabel::new((i / CATALOG_SIZE) as u8 + 1).expect("in range"),
        WiringLabel::new((i % CATALOG_SIZE) as u8 + 1).expect("in range"),
    )
}

fn table_of(values: &[f64]) -> Vec<BobEntry> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| BobEntry {
            bob: [(i / CATALOG_SIZE) as u8 + 1, (i % CATALOG_SIZE) as u8 + 1],
            value: *v,
        })
        .collect()
}

/// Optimal two-copy wiring: an Alice LP for each of the 82² Bob pairs.
pub fn sweep_two_copy(q1: &Behaviour, q2: &Behaviour) -> Result<SweepResult> {
    sweep_two_copy_with(q1, q2, false)
}

pub fn sweep_two_copy_with(
    q1: &Behaviour,
    q2: &Behaviour,
    keep_table: bool,
) -> Result<SweepResult> {
    let ctx = PairContext::new(*q1, *q2);
    let d = bob_weights(&ctx);
    let values: Vec<f64> = (0..CATALOG_SIZE * CATALOG_SIZE)
        .into_par_iter()
        .map(|i| optimize_with_weights(&d[i / CATALOG_SIZE], &d[i % CATALOG_SIZE]).map(|o| o.value))
        .collect::<Result<_>>()?;
    let (i, value) = select(&values);
    let (b0, b1) = (i / CATALOG_SIZE, i % CATALOG_SIZE);
    let alice = optimize_with_weights(&d[b0], &d[b1])?.pair();
    Ok(SweepResult {
        value,
        alice,
        bob: bob_pair(i),
        per_bob: keep_table.then(|| table_of(&values)),
    })
}

/// Oracle: maximum over all catalog effects for both parties, using the
/// per-symbol split (82 candidates per Alice symbol per Bob pair).
pub fn brute_force_two_copy(q1: &Behaviour, q2: &Behaviour) -> SweepResult {
    let ctx = PairContext::new(*q1, *q2);
    let d = bob_weights(&ctx);
    let cat = catalog();
    // v[β][α] = D_β · χ_α
    let v: Vec<Vec<f64>> = d
        .iter()
        .map(|db| cat.iter().map(|e| dot32(db, e.as_array())).collect())
        .collect();
    let best = |b0: usize, b1: usize| -> ((usize, f64), (usize, f64)) {
        let plus = best_catalog((0..CATALOG_SIZE).map(|a| v[b0][a] + v[b1][a]));
        let minus = best_catalog((0..CATALOG_SIZE).map(|a| v[b0][a] - v[b1][a]));
        (plus, minus)
    };
    let values: Vec<f64> = (0..CATALOG_SIZE * CATALOG_SIZE)
        .into_par_iter()
        .map(|i| {
            let (p, m) = best(i / CATALOG_SIZE, i % CATALOG_SIZE);
            p.1 + m.1
        })
        .collect();
    let (i, value) = select(&values);
    let (b0, b1) = (i / CATALOG_SIZE, i % CATALOG_SIZE);
    let (p, m) = best(b0, b1);
    let a0 = lowest_within((0..CATALOG_SIZE).map(|a| v[b0][a] + v[b1][a]), p.1).unwrap_or(p.0);
    let a1 = lowest_within((0..CATALOG_SIZE).map(|a| v[b0][a] - v[b1][a]), m.1).unwrap_or(m.0);
    SweepResult {
        value,
        alice: WiringPair::from_label_numbers(a0 as u8 + 1, a1 as u8 + 1).expect("in range"),
        bob: bob_pair(i),
        per_bob: None,
    }
}

/// Whether composing two PR boxes under the pairs returns the PR box.
pub fn is_pr_preserving(alice: &WiringPair, bob: &WiringPair) -> bool {
    let pr = crate::boxes::pr_box();
    crate::wirings::compose2(&pr, &pr, alice, bob).max_abs_diff(&pr) <= PR_TOL
}

/// Number of catalog quadruples `(Alice l0, l1, Bob l0, l1)` mapping two PR
/// boxes to the PR box.
pub fn count_pr_preserving() -> u64 {
    let pr = crate::boxes::pr_box();
    let ctx = PairContext::new(pr, pr);
    let cat = catalog();
    let steer: Vec<[[f64; 16]; 2]> = cat.iter().map(|e| ctx.steer(e)).collect();
    // good[xy][α][β]: the (x, y) block of the composition is the PR block.
    let good: Vec<Vec<Vec<bool>>> = (0..2)
        .map(|xy| {
            cat.iter()
                .map(|alpha| {
                    steer
                        .iter()
                        .map(|m| {
                            (0..2).all(|a| {
                                (0..2).all(|b| {
                                    let p: f64 = (0..16)
                                        .map(|k| alpha.as_array()[16 * a + k] * m[b][k])
                                        .sum();
                                    let want = if a ^ b == xy { 0.5 } else { 0.0 };
                                    (p - want).abs() <= PR_TOL
                                })
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    // Blocks (0,0), (0,1), (1,0) share the target a⊕b = 0; block (1,1) needs a⊕b = 1.
    let (g0, g1) = (&good[0], &good[1]);
    (0..CATALOG_SIZE)
        .into_par_iter()
        .map(|a0| {
            let mut total = 0u64;
            for a1 in 0..CATALOG_SIZE {
                let via_b0 = (0..CATALOG_SIZE)
                    .filter(|&b| g0[a0][b] && g0[a1][b])
                    .count() as u64;
                if via_b0 == 0 {
                    continue;
                }
                let via_b1 = (0..CATALOG_SIZE)
                    .filter(|&b| g0[a0][b] && g1[a1][b])
                    .count() as u64;
                total += via_b0 * via_b1;
            }
            total
        })
        .sum()
}

/// `true` if the sweep value beats the initial CHSH by more than [`TIE_TOL`].
pub fn is_distillable(initial: f64, after: f64) -> bool {
    after > initial + TIE_TOL
}

#[doc(hidden)]
pub fn coupler_rank() -> usize {
    coupler_basis().rank()
}
