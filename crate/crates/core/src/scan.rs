//! Region scans over cross-sections, analytic distillation boundaries and
//! closed-form CHSH values of the two-copy protocols, CSV emission and run
//! manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{CrossSection, CrossSectionPoint};
use crate::distill::{certify_trivial_cc, AlgorithmConfig, Architecture};
use crate::error::{Error, Result};
use crate::numfmt::format_significant;
use crate::optimize::{is_distillable, sweep_two_copy, TIE_TOL};
use crate::protocols::Protocol;

pub const CSV_DIGITS: usize = 12;
pub const DEFAULT_RESOLUTION: usize = 201;

/// Analytic curves in the `(η, ω)` plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Curve {
    #[serde(rename = "FWW_I")]
    FwwI,
    #[serde(rename = "ABL1_I")]
    Abl1I,
    #[serde(rename = "ABL2_II")]
    Abl2II,
    #[serde(rename = "ABL1_II")]
    Abl1II,
    #[serde(rename = "CHORD_I")]
    ChordI,
    #[serde(rename = "CHORD_II")]
    ChordII,
}

impl Curve {
    pub const ALL: [Curve; 6] = [
        Self::FwwI,
        Self::Abl1I,
        Self::Abl2II,
        Self::Abl1II,
        Self::ChordI,
        Self::ChordII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FwwI => "FWW_I",
            Self::Abl1I => "ABL1_I",
            Self::Abl2II => "ABL2_II",
            Self::Abl1II => "ABL1_II",
            Self::ChordI => "CHORD_I",
            Self::ChordII => "CHORD_II",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| Error::Argument(format!("unknown curve {text:?}")))
    }

    /// Closed interval of `η` on which the curve is defined.
    pub fn domain(self) -> (f64, f64) {
        match self {
            Self::FwwI => (0.5, 1.0),
            Self::Abl1I | Self::Abl1II => (0.0, 1.0),
            Self::Abl2II => (1.0 / 3.0, 1.0),
            Self::ChordI => (0.5 * (1.0 + 1.0 / 13f64.sqrt()), 2.0 / 3.0),
            Self::ChordII => ((9.0 + 6f64.sqrt()) / 25.0, 1.0),
        }
    }

    pub fn cross_section(self) -> CrossSection {
        match self {
            Self::FwwI | Self::Abl1I | Self::ChordI => CrossSection::I,
            _ => CrossSection::II,
        }
    }

    /// The protocol whose distilled CHSH value the curve's closed form gives.
    pub fn protocol(self) -> Option<Protocol> {
        match self {
            Self::FwwI => Some(Protocol::Fww),
            Self::Abl1I | Self::Abl1II => Some(Protocol::Abl1),
            Self::Abl2II => Some(Protocol::Abl2),
            Self::ChordI | Self::ChordII => None,
        }
    }

    /// The two closed forms that coincide along a chord.
    pub fn chord_pair(self) -> Option<(Curve, Curve)> {
        match self {
            Self::ChordI => Some((Self::FwwI, Self::Abl1I)),
            Self::ChordII => Some((Self::Abl2II, Self::Abl1II)),
            _ => None,
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Slack on domain endpoints, so that sampled endpoints computed in floating
/// point are accepted.
const DOMAIN_SLACK: f64 = 1e-12;

/// `ω` on the curve at `η`.
pub fn boundary(curve: Curve, eta: f64) -> Result<f64> {
    let (lo, hi) = curve.domain();
    if !(eta >= lo - DOMAIN_SLACK && eta <= hi + DOMAIN_SLACK) {
        return Err(Error::Argument(format!(
            "eta = {eta} outside the {curve} domain [{lo}, {hi}]"
        )));
    }
    let e = eta;
    Ok(match curve {
        Curve::FwwI => 1.0 - 3.0 * e + 2.0 * (1.0 - 3.0 * e + 3.0 * e * e).sqrt(),
        Curve::Abl1I => -e + (3.0 - 4.0 * e + 4.0 * e * e).sqrt() / 3f64.sqrt(),
        Curve::Abl2II => 3.0 - 11.0 * e + 2.0 * (3.0 - 18.0 * e + 31.0 * e * e).max(0.0).sqrt(),
        Curve::Abl1II => -(4.0 / 3.0) * e + (9.0 - 18.0 * e + 25.0 * e * e).sqrt() / 3.0,
        Curve::ChordI => 5.0 * e - 3.0,
        Curve::ChordII => -((2.0 * 6f64.sqrt() - 3.0) / 5.0) * (e - 1.0),
    })
}

/// Distilled CHSH value of the curve's protocol on two copies of the
/// cross-section box at `(η, ω)`.
pub fn closed_form_chsh(curve: Curve, eta: f64, omega: f64) -> Result<f64> {
    let (e, w) = (eta, omega);
    match curve {
        Curve::FwwI => Ok(0.5 * ((1.0 + w).powi(2) - 3.0 * e * e + 6.0 * e * (1.0 + w))),
        Curve::Abl1I => Ok(0.25 * (3.0 * w * w + 8.0 * w - e * e + e * (4.0 + 6.0 * w) + 5.0)),
        Curve::Abl2II => Ok(0.125 * (w * w + 10.0 * w - 3.0 * e * e + e * (6.0 + 22.0 * w) + 13.0)),
        Curve::Abl1II => {
            Ok(0.25 * (3.0 * w * w + 8.0 * w - 3.0 * e * e + e * (6.0 + 8.0 * w) + 5.0))
        }
        Curve::ChordI | Curve::ChordII => Err(Error::Argument(format!(
            "{curve} has no closed-form CHSH value"
        ))),
    }
}

fn samples_in(curve: Curve, samples: usize) -> Vec<f64> {
    let (lo, hi) = curve.domain();
    if samples == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect()
}

/// Largest residual over `samples` points of the curve. For protocol
/// boundaries this is the gap between the distilled and initial CHSH values;
/// for chords it is the gap between the two protocols' distilled values.
pub fn boundary_zero_gain_check(curve: Curve, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Argument("at least one sample is required".into()));
    }
    let mut worst: f64 = 0.0;
    for eta in samples_in(curve, samples) {
        let omega = boundary(curve, eta)?;
        let r = match curve.chord_pair() {
            Some((p, q)) => closed_form_chsh(p, eta, omega)? - closed_form_chsh(q, eta, omega)?,
            None => closed_form_chsh(curve, eta, omega)? - (2.0 + 2.0 * omega),
        };
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// A column group in a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanProtocol {
    /// A named protocol applied once to identical copies.
    Named { protocol: Protocol },
    /// The optimal two-copy wiring.
    Sweep2,
    /// Serial distillation; the flag certifies trivial communication complexity.
    Serial { max_rounds: usize },
    /// Blind repetition of a named protocol; the flag certifies trivial
    /// communication complexity.
    Repeat {
        protocol: Protocol,
        max_rounds: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    Distillable,
    TrivialCc,
}

impl ScanProtocol {
    /// Parses `EQ2`, `SWEEP2`, `SERIAL:30` or `REPEAT:ABL1:30`
    /// (parentheses and commas are accepted in place of colons).
    pub fn parse(text: &str) -> Result<Self> {
        let norm: String = text
            .trim()
            .to_ascii_uppercase()
            .chars()
            .map(|c| if matches!(c, '(' | ',' | ' ') { ':' } else { c })
            .filter(|c| *c != ')')
            .collect();
        let parts: Vec<&str> = norm.split(':').filter(|s| !s.is_empty()).collect();
        let rounds = |s: &str| -> Result<usize> {
            s.parse()
                .ok()
                .filter(|r: &usize| *r >= 1)
                .ok_or_else(|| Error::Argument(format!("bad round cap {s:?} in {text:?}")))
        };
        match parts.as_slice() {
            ["SWEEP2"] => Ok(Self::Sweep2),
            ["SERIAL", r] => Ok(Self::Serial {
                max_rounds: rounds(r)?,
            }),
            ["REPEAT", p, r] => Ok(Self::Repeat {
                protocol: Protocol::parse(p)?,
                max_rounds: rounds(r)?,
            }),
            [p] => Ok(Self::Named {
                protocol: Protocol::parse(p)?,
            }),
            _ => Err(Error::Argument(format!(
                "unrecognised scan protocol {text:?}"
            ))),
        }
    }

    pub fn flag_kind(self) -> FlagKind {
        match self {
            Self::Named { .. } | Self::Sweep2 => FlagKind::Distillable,
            Self::Serial { .. } | Self::Repeat { .. } => FlagKind::TrivialCc,
        }
    }

    /// Column stem, e.g. `EQ2`, `SWEEP2`, `SERIAL30`, `REPEAT_ABL1_30`.
    pub fn column_stem(self) -> String {
        match self {
            Self::Named { protocol } => protocol.name().to_string(),
            Self::Sweep2 => "SWEEP2".into(),
            Self::Serial { max_rounds } => format!("SERIAL{max_rounds}"),
            Self::Repeat {
                protocol,
                max_rounds,
            } => format!("REPEAT_{}_{max_rounds}", protocol.name()),
        }
    }

    fn columns(self) -> [String; 2] {
        let stem = self.column_stem();
        let flag = match self.flag_kind() {
            FlagKind::Distillable => "distillable",
            FlagKind::TrivialCc => "trivial_cc",
        };
        [format!("{stem}_after"), format!("{stem}_{flag}")]
    }

    /// `(CHSH after, flag)` at one point.
    pub fn evaluate(self, pt: &CrossSectionPoint) -> Result<(f64, bool)> {
        let p = pt.behaviour();
        let init = pt.chsh_init();
        match self {
            Self::Named { protocol } => {
                let after = protocol.apply(&p).chsh();
                Ok((after, is_distillable(init, after)))
            }
            Self::Sweep2 => {
                let after = sweep_two_copy(&p, &p)?.value;
                Ok((after, is_distillable(init, after)))
            }
            Self::Serial { max_rounds } | Self::Repeat { max_rounds, .. } => {
                let architecture = match self {
                    Self::Repeat { protocol, .. } => Architecture::FixedRepeat(protocol),
                    _ => Architecture::Serial,
                };
                let cfg = AlgorithmConfig::new(architecture).with_max_rounds(max_rounds);
                let cert = certify_trivial_cc(&p, &cfg)?;
                Ok((cert.transcript.final_chsh(), cert.trivial))
            }
        }
    }
}

impl fmt::Display for ScanProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Named { protocol } => write!(f, "{protocol}"),
            Self::Sweep2 => f.write_str("SWEEP2"),
            Self::Serial { max_rounds } => write!(f, "SERIAL:{max_rounds}"),
            Self::Repeat {
                protocol,
                max_rounds,
            } => write!(f, "REPEAT:{protocol}:{max_rounds}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRequest {
    pub cs: CrossSection,
    /// Grid points per axis; `η_i = i/(N-1)`, `ω_j = j/(N-1)`.
    pub resolution: usize,
    pub protocols: Vec<ScanProtocol>,
    pub include_chsh2: bool,
}

impl ScanRequest {
    pub fn new(cs: CrossSection, resolution: usize, protocols: Vec<ScanProtocol>) -> Self {
        Self {
            cs,
            resolution,
            protocols,
            include_chsh2: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Argument("resolution must be at least 2".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::Argument("at least one protocol is required".into()));
        }
        Ok(())
    }

    pub fn grid_value(&self, i: usize) -> f64 {
        i as f64 / (self.resolution - 1) as f64
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = ["cs", "eta", "omega", "chsh_init"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for p in &self.protocols {
            cols.extend(p.columns());
        }
        if self.include_chsh2 {
            cols.push("chsh2".into());
        }
        cols.push("in_simplex".into());
        cols
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub i: usize,
    pub j: usize,
    pub eta: f64,
    pub omega: f64,
    pub in_simplex: bool,
    pub chsh_init: f64,
    /// One `(after, flag)` per protocol; empty outside the simplex.
    pub results: Vec<(f64, bool)>,
    pub chsh2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanTable {
    pub request: ScanRequest,
    pub rows: Vec<ScanRow>,
}

/// Evaluates every grid point, `η` outer and `ω` inner; points with
/// `η + ω > 1` are kept and masked.
pub fn scan_region(req: &ScanRequest) -> Result<ScanTable> {
    req.validate()?;
    let n = req.resolution;
    let rows = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let (eta, omega) = (req.grid_value(i), req.grid_value(j));
            let pt = CrossSectionPoint::new(req.cs, eta, omega).ok();
            let mut row = ScanRow {
                i,
                j,
                eta,
                omega,
                in_simplex: pt.is_some(),
                chsh_init: 2.0 + 2.0 * omega,
                results: Vec::new(),
                chsh2: None,
            };
            if let Some(pt) = pt {
                row.results = req
                    .protocols
                    .iter()
                    .map(|p| p.evaluate(&pt))
                    .collect::<Result<_>>()?;
                if req.include_chsh2 {
                    row.chsh2 = Some(pt.behaviour().chsh2());
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanTable {
        request: req.clone(),
        rows,
    })
}

impl ScanTable {
    /// Writes the table as CSV with [`CSV_DIGITS`] significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.request.columns())?;
        let num = |v: f64| format_significant(v, CSV_DIGITS);
        for r in &self.rows {
            let mut rec = vec![
                self.request.cs.to_string(),
                num(r.eta),
                num(r.omega),
                num(r.chsh_init),
            ];
            if r.in_simplex {
                for (after, flag) in &r.results {
                    rec.push(num(*after));
                    rec.push(u8::from(*flag).to_string());
                }
            } else {
                rec.extend(std::iter::repeat_n(String::new(), 2 * self.request.protocols.len()));
            }
            if self.request.include_chsh2 {
                rec.push(r.chsh2.map(num).unwrap_or_default());
            }
            rec.push(u8::from(r.in_simplex).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Rows inside the simplex where protocol `k` raises its flag.
    pub fn flagged(&self, k: usize) -> impl Iterator<Item = &ScanRow> {
        self.rows
            .iter()
            .filter(move |r| r.in_simplex && r.results[k].1)
    }

    /// Per `η` row, the first `ω` cell where protocol `k`'s flag switches from
    /// unset to set: `(η, ω below, ω above)`.
    pub fn flag_crossings(&self, k: usize) -> Vec<(f64, f64, f64)> {
        let n = self.request.resolution;
        let mut out = Vec::new();
        for i in 0..n {
            let row = &self.rows[i * n..(i + 1) * n];
            for w in row.windows(2) {
                if w[0].in_simplex && w[1].in_simplex && !w[0].results[k].1 && w[1].results[k].1 {
                    out.push((w[0].eta, w[0].omega, w[1].omega));
                    break;
                }
            }
        }
        out
    }
}

/// Reproducibility record written next to every data output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Vec<String>,
    pub parameters: serde_json::Value,
    pub tolerances: BTreeMap<String, f64>,
    pub version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Tolerances in force for every computation.
pub fn tolerances() -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("effect_validity".to_string(), crate::wirings::EPS_LP),
        ("lp".to_string(), crate::simplex::LP_TOL),
        ("tie".to_string(), TIE_TOL),
        (
            "improvement".to_string(),
            crate::distill::DEFAULT_IMPROVEMENT_TOL,
        ),
        ("probability".to_string(), crate::boxes::EPS_PROB),
        ("pr_census".to_string(), crate::optimize::PR_TOL),
    ])
}

impl Manifest {
    pub fn new(
        command: Vec<String>,
        parameters: serde_json::Value,
        started: Instant,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            command,
            parameters,
            tolerances: tolerances(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: started.elapsed().as_secs_f64(),
            outputs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
