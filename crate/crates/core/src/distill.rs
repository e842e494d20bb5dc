//! Iterated distillation: serial and parallel architectures driven by the
//! optimal two-copy sweep, blind repetition of a fixed protocol, and
//! certification of trivial communication complexity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boxes::Behaviour;
use crate::error::{Error, Result};
use crate::optimize::sweep_two_copy;
use crate::protocols::Protocol;
use crate::wirings::{compose2, named_two_copy, WiringPair};

pub const DEFAULT_MAX_ROUNDS: usize = 50;
pub const DEFAULT_IMPROVEMENT_TOL: f64 = 1e-9;

/// `4·√(2/3)`: boxes with a larger CHSH value make communication complexity trivial.
pub fn trivial_cc_threshold() -> f64 {
    4.0 * (2.0f64 / 3.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "protocol")]
pub enum Architecture {
    Serial,
    Parallel,
    FixedRepeat(Protocol),
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Serial => f.write_str("serial"),
            Self::Parallel => f.write_str("parallel"),
            Self::FixedRepeat(p) => write!(f, "repeat:{p}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub architecture: Architecture,
    pub max_rounds: usize,
    pub improvement_tol: f64,
    /// Stop as soon as the CHSH value exceeds this.
    pub target: Option<f64>,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Serial,
            max_rounds: DEFAULT_MAX_ROUNDS,
            improvement_tol: DEFAULT_IMPROVEMENT_TOL,
            target: None,
        }
    }
}

impl AlgorithmConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            ..Self::default()
        }
    }

    pub fn with_max_rounds(mut self, max_rounds: usize) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn with_target(mut self, target: Option<f64>) -> Self {
        self.target = target;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::Argument("max_rounds must be at least 1".into()));
        }
        if !(self.improvement_tol > 0.0) {
            return Err(Error::Argument("improvement_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RoundCap,
    NoImprovement,
    ThresholdReached,
}

/// A catalog label, or a non-catalog marker (`"LP"` or a protocol name).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoundLabel {
    Catalog(u8),
    Other(String),
}

fn round_labels(pair: &WiringPair) -> Vec<RoundLabel> {
    pair.labels
        .iter()
        .map(|l| match l {
            Some(l) => RoundLabel::Catalog(l.get()),
            None => RoundLabel::Other("LP".into()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub k: usize,
    pub chsh: f64,
    pub alice: Vec<RoundLabel>,
    pub bob: Vec<RoundLabel>,
}

impl Round {
    /// `A(l0,l1)/B(l0,l1)`.
    pub fn wiring_text(&self) -> String {
        let show = |v: &[RoundLabel]| {
            v.iter()
                .map(|l| match l {
                    RoundLabel::Catalog(n) => n.to_string(),
                    RoundLabel::Other(s) => s.clone(),
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("A({})/B({})", show(&self.alice), show(&self.bob))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillationTranscript {
    pub architecture: Architecture,
    pub initial_chsh: f64,
    pub rounds: Vec<Round>,
    pub stop_reason: StopReason,
    pub copies_used: u128,
    #[serde(skip)]
    pub initial_box: Option<Behaviour>,
    #[serde(skip)]
    pub final_box: Option<Behaviour>,
}

impl DistillationTranscript {
    pub fn final_chsh(&self) -> f64 {
        self.rounds.last().map_or(self.initial_chsh, |r| r.chsh)
    }

    pub fn values(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.chsh).collect()
    }

    /// Copies of the original box consumed to produce round `k` (0 = the box itself).
    pub fn copies_at(&self, k: usize) -> u128 {
        copies_after(self.architecture, k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn copies_after(arch: Architecture, rounds: usize) -> u128 {
    match arch {
        Architecture::Serial => rounds as u128 + 1,
        Architecture::Parallel => 1u128.checked_shl(rounds as u32).unwrap_or(u128::MAX),
        Architecture::FixedRepeat(p) => (p.copies() as u128)
            .checked_pow(rounds as u32)
            .unwrap_or(u128::MAX),
    }
}

/// One round: the next box and the labels that produced it.
fn step(
    arch: Architecture,
    original: &Behaviour,
    current: &Behaviour,
) -> Result<(Behaviour, Vec<RoundLabel>, Vec<RoundLabel>)> {
    match arch {
        Architecture::Serial | Architecture::Parallel => {
            let partner = if arch == Architecture::Serial {
                original
            } else {
                current
            };
            let sweep = sweep_two_copy(current, partner)?;
            let next = compose2(current, partner, &sweep.alice, &sweep.bob);
            Ok((next, round_labels(&sweep.alice), round_labels(&sweep.bob)))
        }
        Architecture::FixedRepeat(p) => {
            let next = p.apply(current);
            match p.two_copy() {
                Some(tc) => {
                    let (a, b) = named_two_copy(tc);
                    Ok((next, round_labels(&a), round_labels(&b)))
                }
                None => {
                    let name = vec![RoundLabel::Other(p.name().into())];
                    Ok((next, name.clone(), name))
                }
            }
        }
    }
}

/// Runs the configured architecture from `p`.
pub fn distill(p: &Behaviour, cfg: &AlgorithmConfig) -> Result<DistillationTranscript> {
    cfg.validate()?;
    let initial_chsh = p.chsh();
    let mut current = *p;
    let mut value = initial_chsh;
    let mut rounds = Vec::new();
    let above = |v: f64| cfg.target.is_some_and(|t| v > t);
    let mut stop = StopReason::RoundCap;
    if above(value) {
        stop = StopReason::ThresholdReached;
    } else {
        for k in 1..=cfg.max_rounds {
            let (next, alice, bob) = step(cfg.architecture, p, &current)?;
            let v = next.chsh();
            if v <= value + cfg.improvement_tol {
                stop = StopReason::NoImprovement;
                break;
            }
            rounds.push(Round {
                k,
                chsh: v,
                alice,
                bob,
            });
            current = next;
            value = v;
            if above(v) {
                stop = StopReason::ThresholdReached;
                break;
            }
        }
    }
    Ok(DistillationTranscript {
        architecture: cfg.architecture,
        initial_chsh,
        copies_used: copies_after(cfg.architecture, rounds.len()),
        rounds,
        stop_reason: stop,
        initial_box: Some(*p),
        final_box: Some(current),
    })
}

/// Serial architecture: round `k` wires the previous result with a fresh copy of `p`.
pub fn serial_distill(p: &Behaviour, cfg: &AlgorithmConfig) -> Result<DistillationTranscript> {
    distill(
        p,
        &AlgorithmConfig {
            architecture: Architecture::Serial,
            ..*cfg
        },
    )
}

/// Parallel architecture: round `k` wires two copies of the previous result.
pub fn parallel_distill(p: &Behaviour, cfg: &AlgorithmConfig) -> Result<DistillationTranscript> {
    distill(
        p,
        &AlgorithmConfig {
            architecture: Architecture::Parallel,
            ..*cfg
        },
    )
}

/// Applies `protocol` to copies of the current box each round.
pub fn fixed_repeat(
    p: &Behaviour,
    protocol: Protocol,
    cfg: &AlgorithmConfig,
) -> Result<DistillationTranscript> {
    distill(
        p,
        &AlgorithmConfig {
            architecture: Architecture::FixedRepeat(protocol),
            ..*cfg
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrivialCertificate {
    pub trivial: bool,
    /// Copies of the original box needed to cross the threshold.
    pub copies_used: Option<u128>,
    pub transcript: DistillationTranscript,
}

/// Runs the configured architecture until the CHSH value strictly exceeds
/// [`trivial_cc_threshold`].
pub fn certify_trivial_cc(p: &Behaviour, cfg: &AlgorithmConfig) -> Result<TrivialCertificate> {
    let threshold = trivial_cc_threshold();
    let transcript = distill(p, &cfg.with_target(Some(threshold)))?;
    let trivial = transcript.final_chsh() > threshold;
    Ok(TrivialCertificate {
        trivial,
        copies_used: trivial.then_some(transcript.copies_used),
        transcript,
    })
}
