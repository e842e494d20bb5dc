//! Acceptance suite: one PASS/FAIL line per criterion, with tolerances and
//! runtime budgets pinned below. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nlwire_core::boxes::{
    local_extremal, mix, Behaviour, CrossSection, CrossSectionPoint, ExtremalIndex,
};
use nlwire_core::distill::{
    fixed_repeat, serial_distill, trivial_cc_threshold, AlgorithmConfig, StopReason,
};
use nlwire_core::optimize::{brute_force_two_copy, count_pr_preserving, sweep_two_copy};
use nlwire_core::protocols::{apply_ncopy, eq2_stages, protocol_gain, NCopyWiring, Protocol};
use nlwire_core::scan::{
    boundary_zero_gain_check, closed_form_chsh, scan_region, Curve, ScanProtocol, ScanRequest,
};
use nlwire_core::wirings::{
    catalog, compose2, named_two_copy, PairContext, WiringLabel, WiringPair,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Table tolerance for printed four-decimal values.
const TABLE_TOL: f64 = 2e-4;
/// Closed-form and residual tolerance.
const EXACT_TOL: f64 = 1e-9;
/// Structural tolerance for compositions.
const STRUCT_TOL: f64 = 1e-12;
/// LP versus vertex maximum.
const LP_TOL: f64 = 1e-7;
/// Gain counted as distillation.
const GAIN_TOL: f64 = 1e-9;
/// Round cap for repeated-protocol certification.
const REPEAT_CAP: usize = 30;

type Outcome = Result<String, String>;

fn cs(cs: CrossSection, eta: f64, omega: f64) -> Behaviour {
    CrossSectionPoint::new(cs, eta, omega).unwrap().behaviour()
}

fn random_box(rng: &mut StdRng) -> Behaviour {
    let ext: Vec<Behaviour> = ExtremalIndex::all().map(|e| e.behaviour()).collect();
    let mut w: Vec<f64> = (0..24).map(|_| rng.gen::<f64>().powi(3)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    mix(&ext, &w).unwrap()
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sequence_at_least(got: &[f64], want: &[f64]) -> Result<(), String> {
    check(
        got.len() >= want.len(),
        format!("only {} rounds recorded", got.len()),
    )?;
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        check(
            *g >= w - TABLE_TOL,
            format!("round {}: {g:.6} < {w} - {TABLE_TOL}", k + 1),
        )?;
    }
    Ok(())
}

fn sequence_matches(got: &[f64], want: &[f64]) -> Result<(), String> {
    check(
        got.len() == want.len(),
        format!(
            "{} rounds recorded, expected {}: {got:?}",
            got.len(),
            want.len()
        ),
    )?;
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        check(
            (g - w).abs() <= TABLE_TOL,
            format!("round {}: {g:.6} vs {w}", k + 1),
        )?;
    }
    Ok(())
}

fn c1_catalog() -> Outcome {
    let cat = catalog();
    check(cat.len() == 82, "catalog size")?;
    let mut counts = [0usize; 5];
    for l in WiringLabel::all() {
        counts[l.class() as usize] += 1;
    }
    check(
        counts == [2, 8, 8, 32, 32],
        format!("class counts {counts:?}"),
    )?;
    let worst = cat
        .iter()
        .map(|e| e.check().worst_violation)
        .fold(0.0, f64::max);
    check(worst <= EXACT_TOL, format!("worst violation {worst:e}"))?;
    let mut distinct: Vec<Vec<u64>> = cat
        .iter()
        .map(|e| e.as_array().iter().map(|v| v.to_bits()).collect())
        .collect();
    distinct.sort();
    distinct.dedup();
    check(distinct.len() == 82, "duplicate effects")?;
    Ok(format!(
        "82 effects, classes 2/8/8/32/32, worst violation {worst:e}"
    ))
}

fn c2_closed_forms() -> Outcome {
    let n = 50;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for i in 0..n {
        for j in 0..n - i {
            let (eta, omega) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
            for curve in [Curve::FwwI, Curve::Abl1I, Curve::Abl2II, Curve::Abl1II] {
                let p = cs(curve.cross_section(), eta, omega);
                let (a, b) = named_two_copy(curve.protocol().unwrap().two_copy().unwrap());
                let numeric = compose2(&p, &p, &a, &b).chsh();
                worst = worst.max((numeric - closed_form_chsh(curve, eta, omega).unwrap()).abs());
            }
            points += 1;
        }
    }
    check(
        worst <= EXACT_TOL,
        format!("closed-form mismatch {worst:e}"),
    )?;
    let mut residual: f64 = 0.0;
    for curve in Curve::ALL {
        let r = boundary_zero_gain_check(curve, 100).map_err(|e| e.to_string())?;
        check(r <= EXACT_TOL, format!("{curve} residual {r:e}"))?;
        residual = residual.max(r);
    }
    Ok(format!(
        "{points} grid points x 4 protocols, max |numeric - closed form| {worst:.1e}; boundary and chord residuals <= {residual:.1e}"
    ))
}

fn c3_census() -> Outcome {
    let n = count_pr_preserving();
    check(n == 3152, format!("census {n}"))?;
    Ok(format!("{n} PR-preserving quadruples"))
}

fn c4_two_copy() -> Outcome {
    let p = cs(CrossSection::I, 0.888, 0.1);
    let v1 = sweep_two_copy(&p, &p).map_err(|e| e.to_string())?.value;
    check(
        (v1 - 2.3525).abs() <= TABLE_TOL,
        format!("(0.888, 0.1): {v1}"),
    )?;
    let q = cs(CrossSection::I, 0.575, 0.375);
    let v2 = sweep_two_copy(&q, &q).map_err(|e| e.to_string())?.value;
    check(
        (v2 - 2.9212).abs() <= TABLE_TOL,
        format!("(0.575, 0.375): {v2}"),
    )?;
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (q1, q2) = (random_box(&mut rng), random_box(&mut rng));
        let lp = sweep_two_copy(&q1, &q2).map_err(|e| e.to_string())?;
        let bf = brute_force_two_copy(&q1, &q2);
        worst = worst.max((lp.value - bf.value).abs());
    }
    check(worst <= LP_TOL, format!("LP vs vertex maximum {worst:e}"))?;
    Ok(format!(
        "sweeps {v1:.6}, {v2:.6}; 100 random pairs LP = vertex max within {worst:.1e}"
    ))
}

fn first_crossing_copies(values: &[f64]) -> Option<usize> {
    let t = trivial_cc_threshold();
    values.iter().position(|v| *v > t).map(|k| k + 2)
}

fn c5_serial() -> Outcome {
    let cfg = AlgorithmConfig::default();
    let a = serial_distill(&cs(CrossSection::I, 0.888, 0.1), &cfg).map_err(|e| e.to_string())?;
    sequence_at_least(
        &a.values(),
        &[
            2.3525, 2.4681, 2.5546, 2.6186, 2.6729, 2.7236, 2.7706, 2.8143,
        ],
    )?;
    let r41 = a.rounds.get(40).map(|r| r.chsh).unwrap_or(f64::NAN);
    check(r41 >= 3.2730 - TABLE_TOL, format!("round 41: {r41}"))?;
    let ca =
        first_crossing_copies(&a.values()).ok_or("(0.888, 0.1) never crosses the threshold")?;
    check(ca <= 37, format!("(0.888, 0.1) crosses with {ca} copies"))?;

    let b = serial_distill(&cs(CrossSection::I, 0.575, 0.375), &cfg).map_err(|e| e.to_string())?;
    sequence_at_least(
        &b.values(),
        &[
            2.9212, 3.0452, 3.1327, 3.1930, 3.2324, 3.2562, 3.2683, 3.2718,
        ],
    )?;
    let cb =
        first_crossing_copies(&b.values()).ok_or("(0.575, 0.375) never crosses the threshold")?;
    check(cb <= 8, format!("(0.575, 0.375) crosses with {cb} copies"))?;
    Ok(format!(
        "{} rounds to {:.6} ({:?}); threshold crossed with {ca} and {cb} copies",
        a.rounds.len(),
        a.final_chsh(),
        a.stop_reason
    ))
}

fn c6_fixed_repeat() -> Outcome {
    let p = cs(CrossSection::I, 0.888, 0.1);
    let cfg = AlgorithmConfig::default();
    let abl = fixed_repeat(&p, Protocol::Abl1, &cfg).map_err(|e| e.to_string())?;
    sequence_matches(&abl.values(), &[2.2815, 2.3837, 2.4964, 2.5885, 2.5927])?;
    check(
        abl.stop_reason == StopReason::NoImprovement,
        "ABL1 stopped by the round cap",
    )?;
    let fww = fixed_repeat(&p, Protocol::Fww, &cfg).map_err(|e| e.to_string())?;
    sequence_matches(&fww.values(), &[2.3525, 2.5546, 2.7191])?;
    check(
        fww.stop_reason == StopReason::NoImprovement,
        "FWW stopped by the round cap",
    )?;
    let show = |v: Vec<f64>| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(format!(
        "ABL1 {{{}}}, FWW {{{}}}, both then stop",
        show(abl.values()),
        show(fww.values())
    ))
}

fn c7_two_copy_impossibility() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut points = 0;
    // Interior of the 101 x 101 grid: η, ω > 0 and η + ω < 1.
    for i in 1..100 {
        for j in 1..100 - i {
            let pt = CrossSectionPoint::new(CrossSection::III, i as f64 / 100.0, j as f64 / 100.0)
                .unwrap();
            let p = pt.behaviour();
            let v = sweep_two_copy(&p, &p).map_err(|e| e.to_string())?.value;
            worst = worst.max(v - pt.chsh_init());
            points += 1;
        }
    }
    check(worst <= GAIN_TOL, format!("CS III gain {worst:e}"))?;
    let star = CrossSectionPoint::new(
        CrossSection::I,
        3.0 / 32.0,
        (2.0 * 227f64.sqrt() - 3.0) / 32.0,
    )
    .unwrap();
    let p = star.behaviour();
    let sweep_gain = sweep_two_copy(&p, &p).map_err(|e| e.to_string())?.value - star.chsh_init();
    check(
        sweep_gain <= GAIN_TOL,
        format!("star point sweep gain {sweep_gain:e}"),
    )?;
    let (before, after) = protocol_gain(&star, Protocol::Hr);
    check(
        after - before > 1e-6,
        format!("star point HR gain {:e}", after - before),
    )?;
    Ok(format!(
        "{points} CS III points, max gain {worst:.1e}; star point sweep gain {sweep_gain:.1e}, HR gain {:.6}",
        after - before
    ))
}

fn c8_three_copy() -> Outcome {
    let named = |p| ScanProtocol::Named { protocol: p };
    let t2 = scan_region(&ScanRequest::new(
        CrossSection::II,
        101,
        vec![named(Protocol::Eq2), named(Protocol::Hr)],
    ))
    .map_err(|e| e.to_string())?;
    let (mut hr, mut eq2, mut subset, mut pointwise) = (0, 0, 0, 0);
    for r in t2.rows.iter().filter(|r| r.in_simplex) {
        let ((e_after, e_flag), (h_after, h_flag)) = (r.results[0], r.results[1]);
        eq2 += e_flag as usize;
        hr += h_flag as usize;
        subset += (h_flag && !e_flag) as usize;
        pointwise += (e_after < h_after - STRUCT_TOL) as usize;
    }
    check(hr > 0, "HR distils nowhere in CS II")?;
    check(
        subset == 0,
        format!("{subset} CS II points distilled by HR but not EQ2"),
    )?;
    check(
        pointwise == 0,
        format!("{pointwise} CS II points where HR beats EQ2"),
    )?;

    let t3 = scan_region(&ScanRequest::new(
        CrossSection::III,
        101,
        vec![named(Protocol::Eq3)],
    ))
    .map_err(|e| e.to_string())?;
    let eq3 = t3.flagged(0).count();
    check(eq3 > 0, "EQ3 distils nowhere in CS III")?;

    let repeat = |p| ScanProtocol::Repeat {
        protocol: p,
        max_rounds: REPEAT_CAP,
    };
    let t1 = scan_region(&ScanRequest::new(
        CrossSection::I,
        41,
        vec![
            repeat(Protocol::Eq4),
            repeat(Protocol::Abl1),
            repeat(Protocol::Hr),
        ],
    ))
    .map_err(|e| e.to_string())?;
    let only_eq4: Vec<(f64, f64)> = t1
        .rows
        .iter()
        .filter(|r| r.in_simplex && r.results[0].1 && !r.results[1].1 && !r.results[2].1)
        .map(|r| (r.eta, r.omega))
        .collect();
    check(
        !only_eq4.is_empty(),
        "no point certified by repeated EQ4 alone",
    )?;
    Ok(format!(
        "CS II: HR {hr} subset of EQ2 {eq2}, dominance everywhere; CS III: EQ3 distils {eq3} points; EQ4-only certified at {only_eq4:?}"
    ))
}

fn c9_structure() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0009);
    let cat = catalog();
    let mut worst_ns: f64 = 0.0;
    for _ in 0..2 {
        let (q1, q2) = (random_box(&mut rng), random_box(&mut rng));
        let ctx = PairContext::new(q1, q2);
        for a0 in WiringLabel::all() {
            for a1 in WiringLabel::all() {
                let alice = WiringPair::from_labels(a0, a1);
                let b0 = WiringLabel::new(rng.gen_range(1..=82)).unwrap();
                let b1 = WiringLabel::new(rng.gen_range(1..=82)).unwrap();
                let out = ctx.compose(&alice, &WiringPair::from_labels(b0, b1));
                worst_ns = worst_ns.max(out.validate().max_violation());
            }
        }
        for p in Protocol::ALL {
            let boxes: Vec<Behaviour> = (0..p.copies()).map(|_| random_box(&mut rng)).collect();
            worst_ns = worst_ns.max(p.apply_to(&boxes).unwrap().validate().max_violation());
        }
    }
    check(
        worst_ns <= STRUCT_TOL,
        format!("no-signalling violation {worst_ns:e}"),
    )?;

    let locals: Vec<Behaviour> = (0..16u8)
        .map(|b| local_extremal(b >> 3 & 1, b >> 2 & 1, b >> 1 & 1, b & 1))
        .collect();
    let mut worst_local: f64 = 0.0;
    for q1 in &locals {
        for q2 in &locals {
            for _ in 0..64 {
                let pick = |rng: &mut StdRng| WiringLabel::new(rng.gen_range(1..=82)).unwrap();
                let a = WiringPair::from_labels(pick(&mut rng), pick(&mut rng));
                let b = WiringPair::from_labels(pick(&mut rng), pick(&mut rng));
                worst_local = worst_local.max(compose2(q1, q2, &a, &b).chsh().abs());
            }
            for q3 in &locals {
                for p in [
                    Protocol::Eq2,
                    Protocol::Eq3,
                    Protocol::Eq4,
                    Protocol::Eq4Ungated,
                    Protocol::Hr,
                ] {
                    worst_local =
                        worst_local.max(p.apply_to(&[*q1, *q2, *q3]).unwrap().chsh().abs());
                }
            }
        }
    }
    check(
        worst_local <= 2.0 + EXACT_TOL,
        format!("local closure |CHSH| {worst_local}"),
    )?;

    let (q1, q2) = (random_box(&mut rng), random_box(&mut rng));
    let mut worst_flat: f64 = 0.0;
    for (i, e) in cat.iter().enumerate() {
        let l = WiringLabel::new(i as u8 + 1).unwrap();
        let m = WiringLabel::new(82 - i as u8).unwrap();
        let a = WiringPair::from_labels(l, m);
        let b = WiringPair::from_labels(m, l.complement());
        debug_assert_eq!(a.effects[0], *e);
        let flat = apply_ncopy(
            &[q1, q2],
            &NCopyWiring::from_pair(&a).unwrap(),
            &NCopyWiring::from_pair(&b).unwrap(),
        )
        .unwrap();
        worst_flat = worst_flat.max(flat.max_abs_diff(&compose2(&q1, &q2, &a, &b)));
    }
    check(
        worst_flat <= STRUCT_TOL,
        format!("n-copy vs compose2 {worst_flat:e}"),
    )?;

    let [(s1a, s1b), (s2a, s2b)] = eq2_stages();
    let mut worst_eq2: f64 = 0.0;
    for _ in 0..200 {
        let qs = [
            random_box(&mut rng),
            random_box(&mut rng),
            random_box(&mut rng),
        ];
        let staged = compose2(&compose2(&qs[0], &qs[1], &s1a, &s1b), &qs[2], &s2a, &s2b);
        worst_eq2 = worst_eq2.max(staged.max_abs_diff(&Protocol::Eq2.apply_to(&qs).unwrap()));
    }
    check(
        worst_eq2 <= STRUCT_TOL,
        format!("EQ2 two-stage mismatch {worst_eq2:e}"),
    )?;
    Ok(format!(
        "no-signalling {worst_ns:.1e}, local |CHSH| <= {worst_local}, n-copy vs compose2 {worst_flat:.1e}, EQ2 stages {worst_eq2:.1e}"
    ))
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "catalog integrity",
            budget: Duration::from_secs(1),
            run: c1_catalog,
        },
        Criterion {
            id: 2,
            name: "closed-form reproduction",
            budget: Duration::from_secs(10),
            run: c2_closed_forms,
        },
        Criterion {
            id: 3,
            name: "PR-preservation census",
            budget: Duration::from_secs(600),
            run: c3_census,
        },
        Criterion {
            id: 4,
            name: "two-copy optimality",
            budget: Duration::from_secs(60 * 102),
            run: c4_two_copy,
        },
        Criterion {
            id: 5,
            name: "serial transcripts",
            budget: Duration::from_secs(1800),
            run: c5_serial,
        },
        Criterion {
            id: 6,
            name: "fixed repetition columns",
            budget: Duration::from_secs(1),
            run: c6_fixed_repeat,
        },
        Criterion {
            id: 7,
            name: "two-copy impossibility",
            budget: Duration::from_secs(1800),
            run: c7_two_copy_impossibility,
        },
        Criterion {
            id: 8,
            name: "three-copy regions",
            budget: Duration::from_secs(1800),
            run: c8_three_copy,
        },
        Criterion {
            id: 9,
            name: "structural properties",
            budget: Duration::from_secs(60),
            run: c9_structure,
        },
    ];
    // Warm shared tables so the one-second budgets time the criterion itself.
    let _ = (catalog(), Protocol::Hr.wirings());
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.budget => Err(format!(
                "{detail}; over budget ({:.2?} > {:.0?})",
                took, c.budget
            )),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {} PASS {} ({:.2?}): {detail}",
                c.id, c.name, took
            ),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {} ({:.2?}): {why}", c.id, c.name, took);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
