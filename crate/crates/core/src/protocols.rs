//! Deterministic adaptive wirings on `n` boxes and the named protocols.
//!
//! An [`NCopyWiring`] is stored as lookup tables keyed by the party's input
//! and the outcomes seen so far, in query order: key `x | hist << 1` where
//! bit `i` of `hist` is the outcome of the `i`-th queried box.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::boxes::{Behaviour, CrossSectionPoint};
use crate::error::{Error, Result};
use crate::wirings::{compose2, named_two_copy, TwoCopyProtocol, WiringEffect, WiringPair};

/// Largest supported copy count; tables grow as `2^(n+1)`.
pub const MAX_COPIES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NCopyWiring {
    n: usize,
    box_choice: Vec<Vec<u8>>,
    input_choice: Vec<Vec<u8>>,
    output: Vec<u8>,
}

/// One fully resolved run of a wiring: which box was queried at each step,
/// with what input, and the final output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WiringPath {
    pub x: u8,
    pub outcomes: Vec<u8>,
    pub boxes: Vec<u8>,
    pub inputs: Vec<u8>,
    pub output: u8,
}

impl NCopyWiring {
    pub fn new(
        n: usize,
        box_choice: Vec<Vec<u8>>,
        input_choice: Vec<Vec<u8>>,
        output: Vec<u8>,
    ) -> Result<Self> {
        let w = Self {
            n,
            box_choice,
            input_choice,
            output,
        };
        w.validate()?;
        Ok(w)
    }

    /// Queries boxes `1..=n` in order. `input(x, prev)` receives the outcomes
    /// of the boxes already queried; `output(x, all)` receives all `n`.
    pub fn fixed_order(
        n: usize,
        input: impl Fn(u8, &[u8]) -> u8,
        output: impl Fn(u8, &[u8]) -> u8,
    ) -> Result<Self> {
        if n == 0 || n > MAX_COPIES {
            return Err(Error::InvalidWiring(format!(
                "copy count {n} outside 1..={MAX_COPIES}"
            )));
        }
        let mut box_choice = Vec::with_capacity(n);
        let mut input_choice = Vec::with_capacity(n);
        for step in 0..n {
            let size = 2usize << step;
            box_choice.push(vec![step as u8; size]);
            input_choice.push(
                (0..size)
                    .map(|key| {
                        let hist = bits(key >> 1, step);
                        input((key & 1) as u8, &hist)
                    })
                    .collect(),
            );
        }
        let output = (0..2usize << n)
            .map(|key| output((key & 1) as u8, &bits(key >> 1, n)))
            .collect();
        Self::new(n, box_choice, input_choice, output)
    }

    /// Flattens a deterministic two-copy wiring pair into lookup tables.
    pub fn from_pair(pair: &WiringPair) -> Result<Self> {
        let mut box_choice = vec![vec![0u8; 2], vec![0u8; 4]];
        let mut input_choice = vec![vec![0u8; 2], vec![0u8; 4]];
        let mut output = vec![0u8; 8];
        for x in 0..2u8 {
            let rule = deterministic_rule(&pair.effects[x as usize]).ok_or_else(|| {
                Error::InvalidWiring(format!(
                    "effect for input {x} is not a deterministic wiring"
                ))
            })?;
            let xi = x as usize;
            box_choice[0][xi] = rule.first;
            input_choice[0][xi] = rule.first_input;
            for h in 0..2usize {
                box_choice[1][xi | h << 1] = 1 - rule.first;
                input_choice[1][xi | h << 1] = rule.second_input[h];
                for h2 in 0..2usize {
                    // query order (first, other) back to box order (a1, a2)
                    let (a1, a2) = if rule.first == 0 { (h, h2) } else { (h2, h) };
                    output[xi | (h | h2 << 1) << 1] = rule.output[a1][a2];
                }
            }
        }
        Self::new(2, box_choice, input_choice, output)
    }

    /// Relabels box `j` as box `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n
            || !perm
                .iter()
                .all(|&p| p < self.n && !std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Argument(format!(
                "{perm:?} is not a permutation of 0..{}",
                self.n
            )));
        }
        let box_choice = self
            .box_choice
            .iter()
            .map(|t| t.iter().map(|&j| perm[j as usize] as u8).collect())
            .collect();
        Self::new(
            self.n,
            box_choice,
            self.input_choice.clone(),
            self.output.clone(),
        )
    }

    #[inline]
    pub fn copies(&self) -> usize {
        self.n
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWiring(m));
        if self.n == 0 || self.n > MAX_COPIES {
            return bad(format!("copy count {} outside 1..={MAX_COPIES}", self.n));
        }
        if self.box_choice.len() != self.n || self.input_choice.len() != self.n {
            return bad("one table per query step is required".into());
        }
        for step in 0..self.n {
            let size = 2usize << step;
            if self.box_choice[step].len() != size || self.input_choice[step].len() != size {
                return bad(format!("step {step} tables must have {size} entries"));
            }
            if self.box_choice[step].iter().any(|&j| j as usize >= self.n) {
                return bad(format!("step {step} selects a box outside 0..{}", self.n));
            }
            if self.input_choice[step].iter().any(|&v| v > 1) {
                return bad(format!("step {step} input table holds a non-bit"));
            }
        }
        if self.output.len() != 2usize << self.n || self.output.iter().any(|&v| v > 1) {
            return bad("output table must hold 2^(n+1) bits".into());
        }
        for x in 0..2u8 {
            for hist in 0..1usize << self.n {
                let mut used = vec![false; self.n];
                for step in 0..self.n {
                    let j = self.box_choice[step][x as usize | (hist & ((1 << step) - 1)) << 1]
                        as usize;
                    if std::mem::replace(&mut used[j], true) {
                        return bad(format!("box {} queried twice on input {x}", j + 1));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves the run for input `x` and query-order outcome string `hist`.
    pub fn path(&self, x: u8, hist: usize) -> WiringPath {
        let mut boxes = Vec::with_capacity(self.n);
        let mut inputs = Vec::with_capacity(self.n);
        for step in 0..self.n {
            let key = x as usize | (hist & ((1 << step) - 1)) << 1;
            boxes.push(self.box_choice[step][key]);
            inputs.push(self.input_choice[step][key]);
        }
        WiringPath {
            x,
            outcomes: bits(hist, self.n),
            boxes,
            inputs,
            output: self.output[x as usize | hist << 1],
        }
    }

    /// Every run, ordered by `(x, hist)`.
    pub fn truth_table(&self) -> Vec<WiringPath> {
        (0..2u8)
            .flat_map(|x| (0..1usize << self.n).map(move |h| (x, h)))
            .map(|(x, h)| self.path(x, h))
            .collect()
    }
}

fn bits(v: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((v >> i) & 1) as u8).collect()
}

struct DeterministicRule {
    first: u8,
    first_input: u8,
    second_input: [u8; 2],
    output: [[u8; 2]; 2],
}

fn deterministic_rule(e: &WiringEffect) -> Option<DeterministicRule> {
    for first in 0..2u8 {
        for first_input in 0..2u8 {
            for s in 0..4u8 {
                let second_input = [s & 1, s >> 1];
                for o in 0..16u8 {
                    let output = [[o & 1, (o >> 1) & 1], [(o >> 2) & 1, o >> 3]];
                    let cand = WiringEffect::sequential(
                        first as usize,
                        first_input,
                        |af| second_input[af as usize],
                        |a1, a2| output[a1 as usize][a2 as usize],
                    )
                    .ok()?;
                    if cand.as_array() == e.as_array() {
                        return Some(DeterministicRule {
                            first,
                            first_input,
                            second_input,
                            output,
                        });
                    }
                }
            }
        }
    }
    None
}

/// Per-box inputs and outcomes for each resolved run of one party.
struct Legs {
    // [x][hist] -> (per-box input, per-box outcome, output)
    runs: [Vec<(Vec<u8>, Vec<u8>, u8)>; 2],
}

impl Legs {
    fn new(w: &NCopyWiring) -> Self {
        let make = |x: u8| {
            (0..1usize << w.n)
                .map(|h| {
                    let p = w.path(x, h);
                    let mut inp = vec![0u8; w.n];
                    let mut out = vec![0u8; w.n];
                    for step in 0..w.n {
                        inp[p.boxes[step] as usize] = p.inputs[step];
                        out[p.boxes[step] as usize] = p.outcomes[step];
                    }
                    (inp, out, p.output)
                })
                .collect()
        };
        Self {
            runs: [make(0), make(1)],
        }
    }
}

/// `P(ab|xy)` as the sum over all internal outcome strings of the product of
/// per-box probabilities along both parties' adaptive paths.
pub fn apply_ncopy(
    boxes: &[Behaviour],
    alice: &NCopyWiring,
    bob: &NCopyWiring,
) -> Result<Behaviour> {
    let n = boxes.len();
    if alice.n != n || bob.n != n {
        return Err(Error::Argument(format!(
            "wirings act on {}/{} boxes but {n} were supplied",
            alice.n, bob.n
        )));
    }
    let (la, lb) = (Legs::new(alice), Legs::new(bob));
    let mut p = [0.0; 16];
    for x in 0..2 {
        for y in 0..2 {
            for (xa, oa, a) in &la.runs[x] {
                for (yb, ob, b) in &lb.runs[y] {
                    let mut w = 1.0;
                    for (j, q) in boxes.iter().enumerate() {
                        w *= q.prob(
                            oa[j] as usize,
                            ob[j] as usize,
                            xa[j] as usize,
                            yb[j] as usize,
                        );
                        if w == 0.0 {
                            break;
                        }
                    }
                    p[8 * x + 4 * y + 2 * *a as usize + *b as usize] += w;
                }
            }
        }
    }
    Ok(Behaviour::from_composed(p))
}

/// Named protocols, CLI identifiers in [`Protocol::name`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    Fww,
    Abl1,
    Abl2,
    Eq2,
    Eq3,
    Eq4,
    /// EQ4 with Bob's third input `y·b2 ∨ b̄1` taken literally, ungated by `y`.
    Eq4Ungated,
    Hr,
}

impl Protocol {
    pub const ALL: [Protocol; 8] = [
        Self::Fww,
        Self::Abl1,
        Self::Abl2,
        Self::Eq2,
        Self::Eq3,
        Self::Eq4,
        Self::Eq4Ungated,
        Self::Hr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fww => "FWW",
            Self::Abl1 => "ABL1",
            Self::Abl2 => "ABL2",
            Self::Eq2 => "EQ2",
            Self::Eq3 => "EQ3",
            Self::Eq4 => "EQ4",
            Self::Eq4Ungated => "EQ4U",
            Self::Hr => "HR",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|p| p.name() == t)
            .ok_or_else(|| Error::Argument(format!("unknown protocol {text:?}")))
    }

    pub fn copies(self) -> usize {
        match self.two_copy() {
            Some(_) => 2,
            None => 3,
        }
    }

    pub fn two_copy(self) -> Option<TwoCopyProtocol> {
        match self {
            Self::Fww => Some(TwoCopyProtocol::Fww),
            Self::Abl1 => Some(TwoCopyProtocol::Abl1),
            Self::Abl2 => Some(TwoCopyProtocol::Abl2),
            _ => None,
        }
    }

    /// Alice's and Bob's lookup-table wirings.
    pub fn wirings(self) -> &'static (NCopyWiring, NCopyWiring) {
        static TABLES: OnceLock<Vec<(NCopyWiring, NCopyWiring)>> = OnceLock::new();
        let all = TABLES.get_or_init(|| {
            Protocol::ALL
                .iter()
                .map(|p| build_named(*p).expect("named protocol tables are well formed"))
                .collect()
        });
        &all[Protocol::ALL.iter().position(|p| *p == self).unwrap()]
    }

    /// Applies the protocol to the given boxes, one per copy.
    pub fn apply_to(self, boxes: &[Behaviour]) -> Result<Behaviour> {
        if boxes.len() != self.copies() {
            return Err(Error::Argument(format!(
                "{} needs {} boxes, got {}",
                self.name(),
                self.copies(),
                boxes.len()
            )));
        }
        if let Some(tc) = self.two_copy() {
            let (a, b) = named_two_copy(tc);
            return Ok(compose2(&boxes[0], &boxes[1], &a, &b));
        }
        let (a, b) = self.wirings();
        apply_ncopy(boxes, a, b)
    }

    /// Applies the protocol to identical copies of `p`.
    pub fn apply(self, p: &Behaviour) -> Behaviour {
        let copies = vec![*p; self.copies()];
        self.apply_to(&copies).expect("copy count matches")
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn build_named(p: Protocol) -> Result<(NCopyWiring, NCopyWiring)> {
    if let Some(tc) = p.two_copy() {
        let (a, b) = named_two_copy(tc);
        return Ok((NCopyWiring::from_pair(&a)?, NCopyWiring::from_pair(&b)?));
    }
    let nb = |v: u8| v ^ 1;
    let xor3 = |_: u8, o: &[u8]| o[0] ^ o[1] ^ o[2];
    match p {
        Protocol::Eq2 => Ok((
            NCopyWiring::fixed_order(
                3,
                |x, o| match o.len() {
                    0 => x,
                    1 => x ^ nb(o[0]),
                    _ => x & (1 ^ o[0] ^ o[1]),
                },
                xor3,
            )?,
            NCopyWiring::fixed_order(
                3,
                |y, o| match o.len() {
                    0 => y,
                    1 => y & o[0],
                    _ => y ^ o[0] ^ o[1],
                },
                xor3,
            )?,
        )),
        Protocol::Eq3 => Ok((
            NCopyWiring::fixed_order(
                3,
                |x, o| match o.len() {
                    0 | 1 => nb(x),
                    _ => (nb(x) & o[0]) | (nb(x) & o[1]),
                },
                |_, o| (o[0] & o[2]) | (o[1] & o[2]) | (nb(o[0]) & nb(o[1]) & nb(o[2])),
            )?,
            NCopyWiring::fixed_order(
                3,
                |y, o| match o.len() {
                    0 | 1 => y,
                    _ => (y & o[0]) | (y & o[1]) | (nb(y) & nb(o[0]) & nb(o[1])),
                },
                |y, o| {
                    let (b1, b2, b3, yb) = (o[0], o[1], o[2], nb(y));
                    (yb & b1 & b3)
                        | (yb & b2 & b3)
                        | (y & b1 & nb(b3))
                        | (y & b2 & nb(b3))
                        | (yb & nb(b1) & nb(b2) & nb(b3))
                        | (y & nb(b1) & nb(b2) & b3)
                },
            )?,
        )),
        Protocol::Eq4 | Protocol::Eq4Ungated => {
            let gated = p == Protocol::Eq4;
            let out =
                |_: u8, o: &[u8]| (o[2] & o[1]) | (o[2] & nb(o[0])) | (nb(o[2]) & nb(o[1]) & o[0]);
            Ok((
                NCopyWiring::fixed_order(
                    3,
                    |x, o| match o.len() {
                        0 | 1 => x,
                        _ => (x & o[1]) | (x & nb(o[0])) | (nb(x) & nb(o[1]) & o[0]),
                    },
                    out,
                )?,
                NCopyWiring::fixed_order(
                    3,
                    |y, o| match o.len() {
                        0 | 1 => y,
                        _ if gated => (y & o[1]) | (y & nb(o[0])),
                        _ => (y & o[1]) | nb(o[0]),
                    },
                    out,
                )?,
            ))
        }
        Protocol::Hr => Ok((
            NCopyWiring::fixed_order(
                3,
                |x, o| match o.len() {
                    0 => x,
                    1 => x ^ o[0],
                    _ => (o[1] & nb(o[0])) ^ (x & (o[0] ^ o[1] ^ (o[0] & o[1]))),
                },
                xor3,
            )?,
            NCopyWiring::fixed_order(
                3,
                |y, o| match o.len() {
                    0 => y,
                    1 => y & nb(o[0]),
                    _ => nb(o[0]) ^ (o[1] & nb(o[0])) ^ (y & (nb(o[1]) ^ (o[0] & o[1]))),
                },
                xor3,
            )?,
        )),
        _ => unreachable!("two-copy protocols handled above"),
    }
}

/// The two stages of EQ2 as two-copy wiring pairs: stage one wires boxes
/// 1 and 2, stage two wires that result with box 3.
pub fn eq2_stages() -> [(WiringPair, WiringPair); 2] {
    let pair = |f: &dyn Fn(u8) -> Result<WiringEffect>| -> WiringPair {
        WiringPair::from_effects(f(0).expect("valid rule"), f(1).expect("valid rule"))
    };
    let s1a = pair(&|x| WiringEffect::sequential(0, x, |a1| x ^ a1 ^ 1, |a1, a2| a1 ^ a2));
    let s1b = pair(&|y| WiringEffect::sequential(0, y, |b1| y & b1, |b1, b2| b1 ^ b2));
    let s2a = pair(&|x| WiringEffect::sequential(0, x, |a| x & (a ^ 1), |a, a3| a ^ a3));
    let s2b = pair(&|y| WiringEffect::sequential(0, y, |b| y ^ b, |b, b3| b ^ b3));
    [(s1a, s1b), (s2a, s2b)]
}

/// `(2 + 2ω, CHSH after the protocol)` on identical copies of the point's box.
pub fn protocol_gain(pt: &CrossSectionPoint, protocol: Protocol) -> (f64, f64) {
    (pt.chsh_init(), protocol.apply(&pt.behaviour()).chsh())
}
