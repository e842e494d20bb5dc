//! Non-locality distillation with local wirings of no-signalling boxes.
//!
//! Boxes are two-input, two-output bipartite behaviours `P(ab|xy)`. The crate
//! provides the extremal two-copy wiring catalog, exact two-copy optimisation
//! by linear programming, named three-copy protocols, iterated distillation
//! and region scans over planar cross-sections of the no-signalling polytope.

pub mod boxes;
pub mod distill;
pub mod error;
pub mod numfmt;
pub mod optimize;
pub mod protocols;
pub mod scan;
pub mod simplex;
pub mod wirings;

pub use boxes::{
    cs_point, isotropic_local, local_extremal, mix, nonlocal_extremal, pr_box, Behaviour,
    CrossSection, CrossSectionPoint, ExtremalIndex, ValidationReport,
};
pub use distill::{
    certify_trivial_cc, fixed_repeat, parallel_distill, serial_distill, trivial_cc_threshold,
    AlgorithmConfig, Architecture, DistillationTranscript, StopReason,
};
pub use error::{Error, Result};
pub use optimize::{
    brute_force_two_copy, count_pr_preserving, lp_optimize_alice, sweep_two_copy, SweepResult,
};
pub use protocols::{apply_ncopy, protocol_gain, NCopyWiring, Protocol};
pub use scan::{
    boundary, boundary_zero_gain_check, closed_form_chsh, scan_region, Curve, Manifest,
    ScanProtocol, ScanRequest, ScanTable,
};
pub use wirings::{
    catalog, catalog_effect, compose2, named_two_copy, validate_effect, TwoCopyProtocol,
    WiringEffect, WiringLabel, WiringPair,
};
