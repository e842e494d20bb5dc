//! Two-input/two-output bipartite boxes `P(ab|xy)`.
//!
//! Entries are stored in `(x, y, a, b)` lexicographic order, so the flat
//! index is `8x + 4y + 2a + b`. Rows of the external JSON form are `2x + y`
//! and columns `2a + b`, which is the same layout split into 4×4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::format_significant;

/// Tolerance for positivity, normalisation and no-signalling checks.
pub const EPS_PROB: f64 = 1e-9;

/// Per-(x,y) normalisation drift above which composed boxes are rescaled.
pub const RENORMALIZE_DRIFT: f64 = 1e-12;

#[inline]
pub(crate) const fn idx(x: usize, y: usize, a: usize, b: usize) -> usize {
    8 * x + 4 * y + 2 * a + b
}

/// A valid no-signalling box. Construction through [`Behaviour::new`] checks
/// every invariant within [`EPS_PROB`].
#[derive(Clone, Copy, PartialEq)]
pub struct Behaviour {
    p: [f64; 16],
}

impl fmt::Debug for Behaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Behaviour")
            .field("rows", &self.rows())
            .finish()
    }
}

impl Behaviour {
    pub fn new(p: [f64; 16]) -> Result<Self> {
        let report = validate_table(&p);
        if report.is_valid() {
            Ok(Self { p })
        } else {
            Err(Error::InvalidBox(report.summary()))
        }
    }

    /// Builds a box from `f(a, b, x, y)`.
    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut p = [0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        p[idx(x, y, a, b)] = f(a, b, x, y);
                    }
                }
            }
        }
        Self::new(p)
    }

    /// For tables that are valid by construction (compositions of valid boxes
    /// under valid effects). Float dust in the normalisation is removed.
    pub(crate) fn from_composed(mut p: [f64; 16]) -> Self {
        for xy in 0..4 {
            let row = &mut p[4 * xy..4 * xy + 4];
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > RENORMALIZE_DRIFT && total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
        debug_assert!(validate_table(&p).max_violation() < 1e-7);
        Self { p }
    }

    #[inline]
    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[idx(x, y, a, b)]
    }

    /// Raw table in `(x, y, a, b)` order.
    #[inline]
    pub fn as_array(&self) -> &[f64; 16] {
        &self.p
    }

    /// `rows()[2x + y][2a + b]`.
    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            row.copy_from_slice(&self.p[4 * r..4 * r + 4]);
        }
        out
    }

    /// Correlator `E_xy = P(a=b|xy) - P(a≠b|xy)`.
    #[inline]
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let r = &self.p[4 * (2 * x + y)..];
        r[0] + r[3] - r[1] - r[2]
    }

    /// `E00 + E01 + E10 - E11`.
    pub fn chsh(&self) -> f64 {
        self.correlator(0, 0) + self.correlator(0, 1) + self.correlator(1, 0)
            - self.correlator(1, 1)
    }

    /// `E00 - E01 + E10 + E11`, used as a second plot coordinate.
    pub fn chsh2(&self) -> f64 {
        self.correlator(0, 0) - self.correlator(0, 1)
            + self.correlator(1, 0)
            + self.correlator(1, 1)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_table(&self.p)
    }

    /// Largest entrywise difference to another box.
    pub fn max_abs_diff(&self, other: &Behaviour) -> f64 {
        self.p
            .iter()
            .zip(other.p.iter())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        let rows = self.rows();
        let body: Vec<String> = rows
            .iter()
            .map(|row| {
                let cells: Vec<String> = row.iter().map(|v| format_significant(*v, 17)).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        format!("{{\"p\": [{}], \"order\": \"xy-ab\"}}", body.join(", "))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: BoxWire = serde_json::from_str(text)?;
        if wire.order != "xy-ab" {
            return Err(Error::Parse(format!(
                "unsupported box order {:?}, expected \"xy-ab\"",
                wire.order
            )));
        }
        let mut p = [0.0; 16];
        for (r, row) in wire.p.iter().enumerate() {
            p[4 * r..4 * r + 4].copy_from_slice(row);
        }
        Self::new(p)
    }
}

#[derive(Serialize, Deserialize)]
struct BoxWire {
    p: [[f64; 4]; 4],
    order: String,
}

/// Outcome of one invariant check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub violation: f64,
}

impl Check {
    fn from_violation(violation: f64) -> Self {
        Self {
            pass: violation <= EPS_PROB,
            violation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub positivity: Check,
    pub normalization: Check,
    /// Alice's marginal independent of `y`.
    pub no_signalling_alice: Check,
    /// Bob's marginal independent of `x`.
    pub no_signalling_bob: Check,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.positivity.pass
            && self.normalization.pass
            && self.no_signalling_alice.pass
            && self.no_signalling_bob.pass
    }

    pub fn max_violation(&self) -> f64 {
        self.positivity
            .violation
            .max(self.normalization.violation)
            .max(self.no_signalling_alice.violation)
            .max(self.no_signalling_bob.violation)
    }

    fn summary(&self) -> String {
        let mut failed = Vec::new();
        for (name, c) in [
            ("positivity", self.positivity),
            ("normalization", self.normalization),
            ("no-signalling (Alice)", self.no_signalling_alice),
            ("no-signalling (Bob)", self.no_signalling_bob),
        ] {
            if !c.pass {
                failed.push(format!("{name} violated by {:.3e}", c.violation));
            }
        }
        failed.join("; ")
    }
}

/// Checks a raw `(x, y, a, b)` table without requiring it to be valid.
pub fn validate_table(p: &[f64; 16]) -> ValidationReport {
    let positivity = p.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let mut normalization: f64 = 0.0;
    for xy in 0..4 {
        let total: f64 = p[4 * xy..4 * xy + 4].iter().sum();
        normalization = normalization.max((total - 1.0).abs());
    }
    let mut ns_alice: f64 = 0.0;
    let mut ns_bob: f64 = 0.0;
    for x in 0..2 {
        for a in 0..2 {
            let m = |y: usize| p[idx(x, y, a, 0)] + p[idx(x, y, a, 1)];
            ns_alice = ns_alice.max((m(0) - m(1)).abs());
        }
    }
    for y in 0..2 {
        for b in 0..2 {
            let m = |x: usize| p[idx(x, y, 0, b)] + p[idx(x, y, 1, b)];
            ns_bob = ns_bob.max((m(0) - m(1)).abs());
        }
    }
    ValidationReport {
        positivity: Check::from_violation(positivity),
        normalization: Check::from_violation(normalization),
        no_signalling_alice: Check::from_violation(ns_alice),
        no_signalling_bob: Check::from_violation(ns_bob),
    }
}

/// Index of one of the 24 extremal no-signalling boxes (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtremalIndex {
    /// `P^L_i`, `i = 1 + τ + 2σ + 4ν + 8μ`, `1..=16`.
    Local(u8),
    /// `P^NL_i`, `i = 1 + σ + 2ν + 4μ`, `1..=8`.
    Nonlocal(u8),
}

impl ExtremalIndex {
    pub fn local(index: u8) -> Result<Self> {
        if (1..=16).contains(&index) {
            Ok(Self::Local(index))
        } else {
            Err(Error::Argument(format!(
                "local extremal index {index} outside 1..=16"
            )))
        }
    }

    pub fn nonlocal(index: u8) -> Result<Self> {
        if (1..=8).contains(&index) {
            Ok(Self::Nonlocal(index))
        } else {
            Err(Error::Argument(format!(
                "nonlocal extremal index {index} outside 1..=8"
            )))
        }
    }

    /// All 24, locals first.
    pub fn all() -> impl Iterator<Item = ExtremalIndex> {
        (1..=16)
            .map(ExtremalIndex::Local)
            .chain((1..=8).map(ExtremalIndex::Nonlocal))
    }

    /// Local: `(μ, ν, σ, τ)`; nonlocal: `(μ, ν, σ, 0)`.
    pub fn bits(self) -> (u8, u8, u8, u8) {
        match self {
            Self::Local(i) => {
                let k = i - 1;
                ((k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1)
            }
            Self::Nonlocal(i) => {
                let k = i - 1;
                ((k >> 2) & 1, (k >> 1) & 1, k & 1, 0)
            }
        }
    }

    pub fn behaviour(self) -> Behaviour {
        match self {
            Self::Local(_) => {
                let (m, n, s, t) = self.bits();
                local_extremal(m, n, s, t)
            }
            Self::Nonlocal(_) => {
                let (m, n, s, _) = self.bits();
                nonlocal_extremal(m, n, s)
            }
        }
    }

    /// Parses `L6`, `NL1`, ...
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_uppercase();
        let bad = || {
            Error::Argument(format!(
                "cannot parse extremal box {text:?} (expected L1..L16 or NL1..NL8)"
            ))
        };
        if let Some(rest) = t.strip_prefix("NL") {
            Self::nonlocal(rest.parse().map_err(|_| bad())?)
        } else if let Some(rest) = t.strip_prefix('L') {
            Self::local(rest.parse().map_err(|_| bad())?)
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for ExtremalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local(i) => write!(f, "L{i}"),
            Self::Nonlocal(i) => write!(f, "NL{i}"),
        }
    }
}

/// Local deterministic box `a = μx ⊕ ν`, `b = σy ⊕ τ`.
pub fn local_extremal(mu: u8, nu: u8, sigma: u8, tau: u8) -> Behaviour {
    let (mu, nu, sigma, tau) = (mu & 1, nu & 1, sigma & 1, tau & 1);
    let mut p = [0.0; 16];
    for x in 0..2u8 {
        for y in 0..2u8 {
            let a = (mu * x) ^ nu;
            let b = (sigma * y) ^ tau;
            p[idx(x as usize, y as usize, a as usize, b as usize)] = 1.0;
        }
    }
    Behaviour { p }
}

/// Extremal nonlocal box with uniform marginals and `a ⊕ b = xy ⊕ μx ⊕ νy ⊕ σ`.
pub fn nonlocal_extremal(mu: u8, nu: u8, sigma: u8) -> Behaviour {
    let (mu, nu, sigma) = (mu & 1, nu & 1, sigma & 1);
    let mut p = [0.0; 16];
    for x in 0..2u8 {
        for y in 0..2u8 {
            let parity = (x * y) ^ (mu * x) ^ (nu * y) ^ sigma;
            for a in 0..2u8 {
                let b = a ^ parity;
                p[idx(x as usize, y as usize, a as usize, b as usize)] = 0.5;
            }
        }
    }
    Behaviour { p }
}

/// The PR box `P^NL_1`.
pub fn pr_box() -> Behaviour {
    nonlocal_extremal(0, 0, 0)
}

/// `P^O = ¾ P^NL_1 + ¼ P^NL_2`, a local box with CHSH 2.
pub fn isotropic_local() -> Behaviour {
    let mut p = [0.0; 16];
    let pr = nonlocal_extremal(0, 0, 0);
    let anti = nonlocal_extremal(0, 0, 1);
    for (i, v) in p.iter_mut().enumerate() {
        *v = 0.75 * pr.p[i] + 0.25 * anti.p[i];
    }
    Behaviour { p }
}

/// Convex combination of boxes.
pub fn mix(boxes: &[Behaviour], weights: &[f64]) -> Result<Behaviour> {
    if boxes.len() != weights.len() {
        return Err(Error::Argument(format!(
            "{} boxes but {} weights",
            boxes.len(),
            weights.len()
        )));
    }
    if boxes.is_empty() {
        return Err(Error::Argument("mixture of zero boxes".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= -EPS_PROB)) {
        return Err(Error::Argument(format!("negative mixture weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > EPS_PROB {
        return Err(Error::Argument(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    let mut p = [0.0; 16];
    for (bx, w) in boxes.iter().zip(weights) {
        for (acc, v) in p.iter_mut().zip(bx.p.iter()) {
            *acc += w * v;
        }
    }
    Behaviour::new(p)
}

/// The three two-parameter slices through the no-signalling polytope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrossSection {
    I,
    II,
    III,
}

impl CrossSection {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            _ => Err(Error::Argument(format!("unknown cross-section {text:?}"))),
        }
    }

    /// The local boxes sharing weight `η`.
    ///
    /// CS II uses `P^L_6` (a = b = 1); with this choice the CS II closed forms
    /// of ABL⁺1 and ABL⁺2 hold for the literal protocol wirings.
    pub fn eta_components(self) -> &'static [ExtremalIndex] {
        const I: [ExtremalIndex; 2] = [ExtremalIndex::Local(1), ExtremalIndex::Local(6)];
        const II: [ExtremalIndex; 1] = [ExtremalIndex::Local(6)];
        const III: [ExtremalIndex; 2] = [ExtremalIndex::Local(1), ExtremalIndex::Local(9)];
        match self {
            Self::I => &I,
            Self::II => &II,
            Self::III => &III,
        }
    }
}

impl fmt::Display for CrossSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        })
    }
}

/// `(η, ω)` in one cross-section, with `η, ω ≥ 0` and `η + ω ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionPoint {
    pub cs: CrossSection,
    pub eta: f64,
    pub omega: f64,
}

impl CrossSectionPoint {
    pub fn new(cs: CrossSection, eta: f64, omega: f64) -> Result<Self> {
        if !(eta >= 0.0 && omega >= 0.0) {
            return Err(Error::Argument(format!(
                "cross-section parameters must be non-negative (eta={eta}, omega={omega})"
            )));
        }
        if eta + omega > 1.0 + 1e-12 {
            return Err(Error::Argument(format!(
                "eta + omega = {} exceeds 1",
                eta + omega
            )));
        }
        Ok(Self { cs, eta, omega })
    }

    /// Initial CHSH value, `2 + 2ω`.
    pub fn chsh_init(&self) -> f64 {
        2.0 + 2.0 * self.omega
    }

    pub fn behaviour(&self) -> Behaviour {
        cs_point(self)
    }
}

/// `ω P^NL_1 + η·(local part) + (1 − ω − η) P^O`.
pub fn cs_point(pt: &CrossSectionPoint) -> Behaviour {
    let rest = (1.0 - pt.omega - pt.eta).max(0.0);
    let locals = pt.cs.eta_components();
    let share = pt.eta / locals.len() as f64;
    let mut boxes = vec![pr_box(), isotropic_local()];
    let mut weights = vec![pt.omega, rest];
    for l in locals {
        boxes.push(l.behaviour());
        weights.push(share);
    }
    let mut p = [0.0; 16];
    for (bx, w) in boxes.iter().zip(&weights) {
        for (acc, v) in p.iter_mut().zip(bx.p.iter()) {
            *acc += w * v;
        }
    }
    Behaviour::from_composed(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn local_extremal_examples() {
        let l1 = local_extremal(0, 0, 0, 0);
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(l1.prob(0, 0, x, y), 1.0);
            }
        }
        let l6 = local_extremal(0, 1, 0, 1);
        assert_eq!(l6.prob(1, 1, 1, 0), 1.0);
        assert_eq!(ExtremalIndex::Local(6).bits(), (0, 1, 0, 1));
        let l9 = ExtremalIndex::Local(9).behaviour();
        assert_eq!(l9, local_extremal(1, 0, 0, 0));
        assert_eq!(l9.prob(1, 0, 1, 1), 1.0);
        assert_eq!(l9.prob(0, 0, 0, 1), 1.0);
    }

    #[test]
    fn nonlocal_extremal_examples() {
        assert_eq!(pr_box().chsh(), 4.0);
        let nl2 = nonlocal_extremal(0, 0, 1);
        assert_eq!(ExtremalIndex::Nonlocal(2).behaviour(), nl2);
        assert_eq!(nl2.chsh(), -4.0);
        assert_eq!(nl2.correlator(1, 1), 1.0);
    }

    #[test]
    fn chsh_examples() {
        assert_eq!(local_extremal(0, 0, 0, 0).chsh(), 2.0);
        assert!(close(isotropic_local().chsh(), 2.0, 1e-15));
    }

    #[test]
    fn chsh2_examples() {
        // E00 = E01 = E10 = 1, E11 = -1 for the PR box.
        assert_eq!(pr_box().chsh2(), 0.0);
        assert_eq!(local_extremal(0, 0, 0, 0).chsh2(), 2.0);
        assert_eq!(local_extremal(0, 0, 0, 1).chsh2(), -2.0);
    }

    #[test]
    fn every_extremal_box_is_exactly_valid() {
        for e in ExtremalIndex::all() {
            let r = e.behaviour().validate();
            assert!(r.is_valid(), "{e}");
            assert_eq!(r.max_violation(), 0.0, "{e}");
        }
    }

    #[test]
    fn index_round_trip() {
        for m in 0..2 {
            for n in 0..2 {
                for s in 0..2 {
                    for t in 0..2 {
                        let i = 1 + t + 2 * s + 4 * n + 8 * m;
                        assert_eq!(ExtremalIndex::Local(i).bits(), (m, n, s, t));
                        assert_eq!(
                            ExtremalIndex::Local(i).behaviour(),
                            local_extremal(m, n, s, t)
                        );
                    }
                    let i = 1 + s + 2 * n + 4 * m;
                    assert_eq!(ExtremalIndex::Nonlocal(i).bits(), (m, n, s, 0));
                }
            }
        }
        assert!(ExtremalIndex::local(17).is_err());
        assert!(ExtremalIndex::nonlocal(0).is_err());
        assert_eq!(
            ExtremalIndex::parse("nl3").unwrap(),
            ExtremalIndex::Nonlocal(3)
        );
        assert_eq!(ExtremalIndex::parse("L16").unwrap().to_string(), "L16");
    }

    #[test]
    fn mix_examples() {
        let pr = pr_box();
        assert_eq!(mix(&[pr], &[1.0]).unwrap(), pr);
        let po = mix(&[pr, nonlocal_extremal(0, 0, 1)], &[0.75, 0.25]).unwrap();
        assert!(po.max_abs_diff(&isotropic_local()) < 1e-15);
        assert!(mix(&[pr], &[0.5]).is_err());
        assert!(mix(&[pr, pr], &[1.5, -0.5]).is_err());
        assert!(mix(&[pr], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cs_point_examples() {
        let p = CrossSectionPoint::new(CrossSection::I, 0.888, 0.1).unwrap();
        assert!(close(p.behaviour().chsh(), 2.2, 1e-12));
        let p = CrossSectionPoint::new(CrossSection::I, 0.0, 1.0).unwrap();
        assert!(p.behaviour().max_abs_diff(&pr_box()) < 1e-15);
        let p = CrossSectionPoint::new(CrossSection::I, 0.575, 0.375).unwrap();
        assert!(close(p.behaviour().chsh(), 2.75, 1e-12));
        assert!(CrossSectionPoint::new(CrossSection::II, 0.6, 0.5).is_err());
        assert!(CrossSectionPoint::new(CrossSection::II, -0.1, 0.5).is_err());
    }

    #[test]
    fn cs_chsh_identity_on_grid() {
        for cs in [CrossSection::I, CrossSection::II, CrossSection::III] {
            for i in 0..=20 {
                for j in 0..=(20 - i) {
                    let pt = CrossSectionPoint::new(cs, i as f64 / 20.0, j as f64 / 20.0).unwrap();
                    let b = pt.behaviour();
                    assert!(b.validate().is_valid());
                    assert!(close(b.chsh(), pt.chsh_init(), 1e-12));
                }
            }
        }
    }

    #[test]
    fn validate_examples() {
        let r = pr_box().validate();
        assert!(r.is_valid());
        assert_eq!(r.max_violation(), 0.0);

        let mut p = *pr_box().as_array();
        p[idx(0, 0, 0, 0)] += 0.1;
        let r = validate_table(&p);
        assert!(!r.normalization.pass);
        assert!(close(r.normalization.violation, 0.1, 1e-15));
        assert!(Behaviour::new(p).is_err());

        // b = x: Bob's output reveals Alice's input.
        let mut p = [0.0; 16];
        for x in 0..2 {
            for y in 0..2 {
                p[idx(x, y, 0, x)] = 1.0;
            }
        }
        let r = validate_table(&p);
        assert!(r.positivity.pass && r.normalization.pass && r.no_signalling_alice.pass);
        assert!(!r.no_signalling_bob.pass);
        assert_eq!(r.no_signalling_bob.violation, 1.0);
    }

    #[test]
    fn json_round_trip_and_layout() {
        let b = CrossSectionPoint::new(CrossSection::III, 0.3, 0.2)
            .unwrap()
            .behaviour();
        let text = b.to_json();
        assert!(text.contains("\"order\": \"xy-ab\""));
        let back = Behaviour::from_json(&text).unwrap();
        assert_eq!(back, b);
        // Row 2x+y = 1 is (x,y) = (0,1); column 2a+b = 3 is (a,b) = (1,1).
        let l6 = local_extremal(0, 1, 0, 1).to_json();
        assert!(l6.starts_with("{\"p\": [[0.0000000000000000, 0.0000000000000000, 0.0000000000000000, 1.0000000000000000]"));
        assert!(Behaviour::from_json(
            "{\"p\": [[1,0,0,0],[1,0,0,0],[1,0,0,0],[1,0,0,0]], \"order\": \"ab-xy\"}"
        )
        .is_err());
    }
}
