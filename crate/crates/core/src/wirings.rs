//! Two-copy wirings: the 82-element extremal catalog, effect validity and
//! composition of two boxes under a pair of local wirings.
//!
//! A [`WiringEffect`] is one party's wiring for a single value of its input.
//! Entry `χ(a, x1, x2 | a1, a2)` sits at index `16a + 8x1 + 4x2 + 2a1 + a2`;
//! the low four bits coincide with the flat index of a [`Behaviour`] read as
//! a two-box pair behaviour `Q(a1 a2 | x1 x2)`.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::boxes::{Behaviour, ExtremalIndex};
use crate::error::{Error, Result};

/// Tolerance for effect validity checks.
pub const EPS_LP: f64 = 1e-9;

pub const CATALOG_SIZE: usize = 82;

#[inline]
const fn eidx(a: usize, x1: usize, x2: usize, a1: usize, a2: usize) -> usize {
    16 * a + 8 * x1 + 4 * x2 + 2 * a1 + a2
}

fn extremal_pair_behaviours() -> &'static [[f64; 16]; 24] {
    static EXT: OnceLock<[[f64; 16]; 24]> = OnceLock::new();
    EXT.get_or_init(|| {
        let mut out = [[0.0; 16]; 24];
        for (slot, e) in out.iter_mut().zip(ExtremalIndex::all()) {
            *slot = *e.behaviour().as_array();
        }
        out
    })
}

/// Worst violation of the effect constraints over the 24 extremal boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectCheck {
    pub valid: bool,
    pub worst_violation: f64,
}

/// Checks `0 ≤ Σ χ(a,·)·Q ≤ 1` per output and `Σ_a Σ χ(a,·)·Q = 1` for every
/// extremal no-signalling `Q`.
pub fn validate_effect(chi: &[f64; 32]) -> EffectCheck {
    let mut worst: f64 = 0.0;
    for q in extremal_pair_behaviours() {
        let mut total = 0.0;
        for a in 0..2 {
            let s: f64 = (0..16).map(|k| chi[16 * a + k] * q[k]).sum();
            worst = worst.max(-s).max(s - 1.0);
            total += s;
        }
        worst = worst.max((total - 1.0).abs());
    }
    EffectCheck {
        valid: worst <= EPS_LP,
        worst_violation: worst,
    }
}

#[derive(Clone, Copy, PartialEq)]
pub struct WiringEffect {
    chi: [f64; 32],
}

impl fmt::Debug for WiringEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.catalog_label() {
            Some(l) => write!(f, "WiringEffect(#{})", l.get()),
            None => f
                .debug_struct("WiringEffect")
                .field("chi", &self.chi)
                .finish(),
        }
    }
}

impl WiringEffect {
    pub fn new(chi: [f64; 32]) -> Result<Self> {
        let check = validate_effect(&chi);
        if check.valid {
            Ok(Self { chi })
        } else {
            Err(Error::InvalidWiring(format!(
                "effect violates coupler constraints by {:.3e}",
                check.worst_violation
            )))
        }
    }

    /// 0/1 effect of the deterministic wiring whose indicator is `rule(a, x1, x2, a1, a2)`.
    fn from_indicator(rule: impl Fn(u8, u8, u8, u8, u8) -> bool) -> Self {
        let mut chi = [0.0; 32];
        for a in 0..2u8 {
            for x1 in 0..2u8 {
                for x2 in 0..2u8 {
                    for a1 in 0..2u8 {
                        for a2 in 0..2u8 {
                            if rule(a, x1, x2, a1, a2) {
                                chi[eidx(
                                    a as usize,
                                    x1 as usize,
                                    x2 as usize,
                                    a1 as usize,
                                    a2 as usize,
                                )] = 1.0;
                            }
                        }
                    }
                }
            }
        }
        Self { chi }
    }

    /// Deterministic adaptive wiring: query box `first` (0 or 1) with
    /// `first_input`, then the other box with `second_input(outcome of first)`,
    /// and output `output(a1, a2)`.
    pub fn sequential(
        first: usize,
        first_input: u8,
        second_input: impl Fn(u8) -> u8,
        output: impl Fn(u8, u8) -> u8,
    ) -> Result<Self> {
        if first > 1 {
            return Err(Error::InvalidWiring(format!(
                "box index {first} out of range"
            )));
        }
        Ok(Self::from_indicator(|a, x1, x2, a1, a2| {
            let (xf, xs, af) = if first == 0 {
                (x1, x2, a1)
            } else {
                (x2, x1, a2)
            };
            xf == first_input & 1 && xs == second_input(af) & 1 && a == output(a1, a2) & 1
        }))
    }

    #[inline]
    pub fn entry(&self, a: usize, x1: usize, x2: usize, a1: usize, a2: usize) -> f64 {
        self.chi[eidx(a, x1, x2, a1, a2)]
    }

    #[inline]
    pub fn as_array(&self) -> &[f64; 32] {
        &self.chi
    }

    pub fn check(&self) -> EffectCheck {
        validate_effect(&self.chi)
    }

    /// Output distribution on each extremal pair behaviour: `[a][extremal]`.
    pub fn functional(&self) -> [[f64; 24]; 2] {
        let mut out = [[0.0; 24]; 2];
        for (e, q) in extremal_pair_behaviours().iter().enumerate() {
            for (a, row) in out.iter_mut().enumerate() {
                row[e] = (0..16).map(|k| self.chi[16 * a + k] * q[k]).sum();
            }
        }
        out
    }

    /// Lowest catalog label with the same tensor, or failing that the same
    /// action on every no-signalling box.
    pub fn catalog_label(&self) -> Option<WiringLabel> {
        let cat = catalog();
        if let Some(i) = cat.iter().position(|e| e.chi == self.chi) {
            return Some(WiringLabel(i as u8 + 1));
        }
        let f = self.functional();
        cat.iter()
            .position(|e| {
                let g = e.functional();
                (0..2).all(|a| (0..24).all(|k| (f[a][k] - g[a][k]).abs() <= EPS_LP))
            })
            .map(|i| WiringLabel(i as u8 + 1))
    }

    /// Convex combination `w·self + (1-w)·other`.
    pub fn blend(&self, other: &WiringEffect, w: f64) -> WiringEffect {
        let mut chi = [0.0; 32];
        for (k, c) in chi.iter_mut().enumerate() {
            *c = w * self.chi[k] + (1.0 - w) * other.chi[k];
        }
        WiringEffect { chi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WiringClass {
    Constant,
    OneSided,
    XorGated,
    AndGated,
    Sequential,
}

impl WiringClass {
    const fn base(self) -> u8 {
        match self {
            Self::Constant => 1,
            Self::OneSided => 3,
            Self::XorGated => 11,
            Self::AndGated => 19,
            Self::Sequential => 51,
        }
    }
}

/// Catalog label, `1..=82`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct WiringLabel(u8);

impl TryFrom<u8> for WiringLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        WiringLabel::new(v)
    }
}

impl From<WiringLabel> for u8 {
    fn from(l: WiringLabel) -> u8 {
        l.0
    }
}

impl WiringLabel {
    pub fn new(label: u8) -> Result<Self> {
        if (1..=CATALOG_SIZE as u8).contains(&label) {
            Ok(Self(label))
        } else {
            Err(Error::Argument(format!(
                "wiring label {label} outside 1..=82"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = WiringLabel> {
        (1..=CATALOG_SIZE as u8).map(WiringLabel)
    }

    pub fn class(self) -> WiringClass {
        match self.0 {
            1..=2 => WiringClass::Constant,
            3..=10 => WiringClass::OneSided,
            11..=18 => WiringClass::XorGated,
            19..=50 => WiringClass::AndGated,
            _ => WiringClass::Sequential,
        }
    }

    /// The label whose output is the complement of this one's. In every class
    /// the lowest bit of the in-class offset is the final output flip.
    pub fn complement(self) -> WiringLabel {
        let base = self.class().base();
        WiringLabel(base + ((self.0 - base) ^ 1))
    }

    pub fn effect(self) -> &'static WiringEffect {
        &catalog()[self.0 as usize - 1]
    }
}

impl fmt::Display for WiringLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn build_catalog() -> [WiringEffect; CATALOG_SIZE] {
    let mut out = [WiringEffect { chi: [0.0; 32] }; CATALOG_SIZE];
    let mut put = |label: u8, e: WiringEffect| out[label as usize - 1] = e;
    for mu in 0..2u8 {
        // Constant class with the unused inputs pinned to (0, 0).
        put(
            mu + 1,
            WiringEffect::from_indicator(|a, x1, x2, _, _| x1 == 0 && x2 == 0 && a == mu),
        );
    }
    for mu in 0..2u8 {
        for nu in 0..2u8 {
            for sigma in 0..2u8 {
                let off = 4 * mu + 2 * nu + sigma;
                put(
                    off + 3,
                    WiringEffect::from_indicator(|a, x1, x2, a1, a2| {
                        let pick = if nu == 0 { a1 } else { a2 };
                        x1 == mu && x2 == mu && a == pick ^ sigma
                    }),
                );
                put(
                    off + 11,
                    WiringEffect::from_indicator(|a, x1, x2, a1, a2| {
                        x1 == mu && x2 == nu && a == a1 ^ a2 ^ sigma
                    }),
                );
            }
        }
    }
    for mu in 0..2u8 {
        for nu in 0..2u8 {
            for sigma in 0..2u8 {
                for delta in 0..2u8 {
                    for eps in 0..2u8 {
                        let off = 16 * mu + 8 * nu + 4 * sigma + 2 * delta + eps;
                        put(
                            off + 19,
                            WiringEffect::from_indicator(|a, x1, x2, a1, a2| {
                                x1 == mu && x2 == nu && a == ((a1 ^ sigma) & (a2 ^ delta)) ^ eps
                            }),
                        );
                        put(
                            off + 51,
                            WiringEffect::from_indicator(|a, x1, x2, a1, a2| {
                                // box μ+1 first with input ν, then the other box
                                let (xf, xs, af, as_) = if mu == 0 {
                                    (x1, x2, a1, a2)
                                } else {
                                    (x2, x1, a2, a1)
                                };
                                xf == nu && xs == af ^ sigma && a == as_ ^ (delta & af) ^ eps
                            }),
                        );
                    }
                }
            }
        }
    }
    out
}

/// All 82 extremal effects, index `label - 1`.
pub fn catalog() -> &'static [WiringEffect; CATALOG_SIZE] {
    static CATALOG: OnceLock<[WiringEffect; CATALOG_SIZE]> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn catalog_effect(label: WiringLabel) -> &'static WiringEffect {
    label.effect()
}

/// One party's wiring: an effect for each of its two inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WiringPair {
    pub effects: [WiringEffect; 2],
    pub labels: [Option<WiringLabel>; 2],
}

impl WiringPair {
    pub fn from_labels(l0: WiringLabel, l1: WiringLabel) -> Self {
        Self {
            effects: [*l0.effect(), *l1.effect()],
            labels: [Some(l0), Some(l1)],
        }
    }

    pub fn from_label_numbers(l0: u8, l1: u8) -> Result<Self> {
        Ok(Self::from_labels(
            WiringLabel::new(l0)?,
            WiringLabel::new(l1)?,
        ))
    }

    /// Labels are recovered from the catalog when the effects match one.
    pub fn from_effects(e0: WiringEffect, e1: WiringEffect) -> Self {
        Self {
            labels: [e0.catalog_label(), e1.catalog_label()],
            effects: [e0, e1],
        }
    }

    pub fn label_numbers(&self) -> Option<[u8; 2]> {
        match self.labels {
            [Some(a), Some(b)] => Some([a.get(), b.get()]),
            _ => None,
        }
    }

    /// Both effects with their outputs complemented.
    pub fn complemented(&self) -> Option<WiringPair> {
        match self.labels {
            [Some(a), Some(b)] => Some(WiringPair::from_labels(a.complement(), b.complement())),
            _ => None,
        }
    }
}

impl fmt::Display for WiringPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |l: Option<WiringLabel>| l.map_or_else(|| "LP".to_string(), |l| l.to_string());
        write!(f, "({},{})", show(self.labels[0]), show(self.labels[1]))
    }
}

/// `A(l0,l1)/B(l0,l1)`.
pub fn format_wiring_quadruple(alice: &WiringPair, bob: &WiringPair) -> String {
    format!("A{alice}/B{bob}")
}

pub fn parse_wiring_quadruple(text: &str) -> Result<(WiringPair, WiringPair)> {
    let bad = || Error::Parse(format!("expected A(l0,l1)/B(l0,l1), got {text:?}"));
    let (a, b) = text.trim().split_once('/').ok_or_else(bad)?;
    let side = |s: &str, tag: char| -> Result<WiringPair> {
        let inner = s
            .trim()
            .strip_prefix(tag)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (l0, l1) = inner.split_once(',').ok_or_else(bad)?;
        let l0: u8 = l0.trim().parse().map_err(|_| bad())?;
        let l1: u8 = l1.trim().parse().map_err(|_| bad())?;
        WiringPair::from_label_numbers(l0, l1)
    };
    Ok((side(a, 'A')?, side(b, 'B')?))
}

/// Two boxes shared between the parties, with Bob's side steering cached
/// per Bob effect.
#[derive(Clone, Copy, Debug)]
pub struct PairContext {
    pub q1: Behaviour,
    pub q2: Behaviour,
}

impl PairContext {
    pub fn new(q1: Behaviour, q2: Behaviour) -> Self {
        Self { q1, q2 }
    }

    /// `M[b][k] = Σ Q1(a1 b1|x1 y1) Q2(a2 b2|x2 y2) ξ(b y1 y2|b1 b2)` with
    /// `k = 8x1 + 4x2 + 2a1 + a2`. Composition is then `P(ab|xy) = Σ_k χ_x(a,k) M_{ξ_y}[b][k]`.
    pub fn steer(&self, xi: &WiringEffect) -> [[f64; 16]; 2] {
        let q1 = self.q1.as_array();
        let q2 = self.q2.as_array();
        let mut m = [[0.0; 16]; 2];
        for (n, &w) in xi.chi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (b, y1, y2, b1, b2) = (n >> 4, (n >> 3) & 1, (n >> 2) & 1, (n >> 1) & 1, n & 1);
            let row = &mut m[b];
            for x1 in 0..2 {
                for a1 in 0..2 {
                    let p1 = q1[8 * x1 + 4 * y1 + 2 * a1 + b1];
                    if p1 == 0.0 {
                        continue;
                    }
                    for x2 in 0..2 {
                        for a2 in 0..2 {
                            row[8 * x1 + 4 * x2 + 2 * a1 + a2] +=
                                w * p1 * q2[8 * x2 + 4 * y2 + 2 * a2 + b2];
                        }
                    }
                }
            }
        }
        m
    }

    /// CHSH-weighted steering, `D(a,k) = Σ_b (-1)^{a⊕b} M[b][k]`, as a
    /// 32-vector in effect layout. The CHSH of the composed box is
    /// `Σ_{x,y} s_xy χ_x·D(ξ_y)` with `s_11 = -1` and `s_xy = 1` otherwise.
    pub fn chsh_weights(&self, xi: &WiringEffect) -> [f64; 32] {
        let m = self.steer(xi);
        let mut d = [0.0; 32];
        for k in 0..16 {
            d[k] = m[0][k] - m[1][k];
            d[16 + k] = m[1][k] - m[0][k];
        }
        d
    }

    pub fn compose(&self, alice: &WiringPair, bob: &WiringPair) -> Behaviour {
        let mut p = [0.0; 16];
        for y in 0..2 {
            let m = self.steer(&bob.effects[y]);
            for x in 0..2 {
                let chi = &alice.effects[x].chi;
                for a in 0..2 {
                    for b in 0..2 {
                        let v: f64 = (0..16).map(|k| chi[16 * a + k] * m[b][k]).sum();
                        p[8 * x + 4 * y + 2 * a + b] = v;
                    }
                }
            }
        }
        Behaviour::from_composed(p)
    }
}

/// Composes two boxes under Alice's and Bob's wiring pairs.
pub fn compose2(q1: &Behaviour, q2: &Behaviour, alice: &WiringPair, bob: &WiringPair) -> Behaviour {
    PairContext::new(*q1, *q2).compose(alice, bob)
}

#[inline]
pub(crate) fn dot32(u: &[f64; 32], v: &[f64; 32]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Named two-copy protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwoCopyProtocol {
    Fww,
    Abl1,
    Abl2,
}

impl TwoCopyProtocol {
    pub const ALL: [TwoCopyProtocol; 3] = [Self::Fww, Self::Abl1, Self::Abl2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fww => "FWW",
            Self::Abl1 => "ABL1",
            Self::Abl2 => "ABL2",
        }
    }
}

/// Alice's and Bob's wiring pairs for a named two-copy protocol.
///
/// * FWW: `x1 = x2 = x`, `a = a1 ⊕ a2` (Bob alike).
/// * ABL⁺1: `x1 = x`, `x2 = x ⊕ a1 ⊕ 1`, `a = a1 ⊕ a2 ⊕ 1`;
///   `y1 = y`, `y2 = y·b1`, `b = b1 ⊕ b2 ⊕ 1`.
/// * ABL⁺2: `x1 = x2 = x`, `a = a1·a2` (Bob alike).
pub fn named_two_copy(name: TwoCopyProtocol) -> (WiringPair, WiringPair) {
    let pair = |f: &dyn Fn(u8) -> WiringEffect| WiringPair::from_effects(f(0), f(1));
    let build = |r: Result<WiringEffect>| r.expect("named protocol rules are well formed");
    match name {
        TwoCopyProtocol::Fww => {
            let side = |x: u8| build(WiringEffect::sequential(0, x, |_| x, |a1, a2| a1 ^ a2));
            (pair(&side), pair(&side))
        }
        TwoCopyProtocol::Abl1 => {
            let alice = |x: u8| {
                build(WiringEffect::sequential(
                    0,
                    x,
                    |a1| x ^ a1 ^ 1,
                    |a1, a2| a1 ^ a2 ^ 1,
                ))
            };
            let bob = |y: u8| {
                build(WiringEffect::sequential(
                    0,
                    y,
                    |b1| y & b1,
                    |b1, b2| b1 ^ b2 ^ 1,
                ))
            };
            (pair(&alice), pair(&bob))
        }
        TwoCopyProtocol::Abl2 => {
            let side = |x: u8| build(WiringEffect::sequential(0, x, |_| x, |a1, a2| a1 & a2));
            (pair(&side), pair(&side))
        }
    }
}
