use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nlwire_core::boxes::{Behaviour, CrossSection, CrossSectionPoint, ExtremalIndex};
use nlwire_core::distill::{
    certify_trivial_cc, distill, AlgorithmConfig, Architecture, DEFAULT_MAX_ROUNDS,
};
use nlwire_core::optimize::{count_pr_preserving, sweep_two_copy_with};
use nlwire_core::protocols::Protocol;
use nlwire_core::scan::{
    boundary, boundary_zero_gain_check, scan_region, Curve, Manifest, ScanProtocol, ScanRequest,
};
use serde_json::{json, Value};

mod config;

/// Non-locality distillation with wirings of no-signalling boxes.
#[derive(Parser, Debug)]
#[command(name = "nlwire", version)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct a box, validate it and report its CHSH values.
    Box(BoxCmd),
    /// List the named protocols or show one's truth tables.
    Protocols {
        #[command(subcommand)]
        action: ProtocolsCmd,
    },
    /// Apply a named protocol to identical copies of a box.
    Apply(ApplyCmd),
    /// Optimal two-copy wiring for a box (or a pair of boxes).
    Optimize2(OptimizeCmd),
    /// Serial distillation: previous result wired with a fresh copy each round.
    Serial(DistillCmd),
    /// Parallel distillation: two copies of the previous result each round.
    Parallel(DistillCmd),
    /// Blind repetition of a named protocol.
    Repeat(RepeatCmd),
    /// Region scan over a cross-section, written as CSV.
    Scan(ScanCmd),
    /// Count catalog wirings mapping two PR boxes to the PR box.
    Census,
    /// Evaluate an analytic boundary curve.
    Boundary(BoundaryCmd),
    /// Re-run the command recorded in a manifest and compare outputs byte for byte.
    Replay { manifest: PathBuf },
}

#[derive(Subcommand, Debug)]
enum ProtocolsCmd {
    List,
    Show { name: String },
}

#[derive(Args, Debug, Clone)]
struct BoxSource {
    /// Cross-section (I, II or III).
    #[arg(long)]
    cs: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Extremal box such as L6 or NL1.
    #[arg(long, conflicts_with_all = ["cs", "box_file"])]
    extremal: Option<String>,
    /// Box JSON file.
    #[arg(long = "box", value_name = "FILE", conflicts_with = "cs")]
    box_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoxCmd {
    #[command(flatten)]
    source: BoxSource,
    /// Write the box JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ApplyCmd {
    #[arg(long)]
    protocol: String,
    #[command(flatten)]
    source: BoxSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptimizeCmd {
    #[command(flatten)]
    source: BoxSource,
    /// Second box JSON file; defaults to a copy of the first box.
    #[arg(long = "box2", value_name = "FILE")]
    box2: Option<PathBuf>,
    /// Write the per-Bob table (bob_l0, bob_l1, value) as CSV.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    max_rounds: usize,
    #[arg(long, default_value_t = nlwire_core::distill::DEFAULT_IMPROVEMENT_TOL)]
    tol: f64,
    /// Stop once the CHSH value exceeds this.
    #[arg(long, conflicts_with = "certify")]
    target: Option<f64>,
    /// Stop at the trivial-communication-complexity threshold and report copies used.
    #[arg(long)]
    certify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DistillCmd {
    #[command(flatten)]
    source: BoxSource,
    #[command(flatten)]
    run: DistillArgs,
}

#[derive(Args, Debug)]
struct RepeatCmd {
    #[arg(long)]
    protocol: String,
    #[command(flatten)]
    source: BoxSource,
    #[command(flatten)]
    run: DistillArgs,
}

#[derive(Args, Debug)]
struct ScanCmd {
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cs: Option<String>,
    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Comma-separated: EQ2, SWEEP2, SERIAL:30, REPEAT:ABL1:4, ...
    #[arg(long)]
    protocols: Option<String>,
    /// Add the chsh2 column.
    #[arg(long)]
    chsh2: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundaryCmd {
    #[arg(long)]
    curve: String,
    #[arg(long, conflicts_with = "samples")]
    eta: Option<f64>,
    /// Report the maximal zero-gain residual over this many samples instead.
    #[arg(long)]
    samples: Option<usize>,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<nlwire_core::Error>(),
                Some(nlwire_core::Error::Argument(_) | nlwire_core::Error::Parse(_))
            )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, argv[1..].to_vec()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // Fails only if already built, i.e. inside `replay`; the outer setting wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let started = Instant::now();
    match cli.command {
        Command::Box(cmd) => cmd_box(cmd, &args, started),
        Command::Protocols { action } => cmd_protocols(action),
        Command::Apply(cmd) => cmd_apply(cmd, &args, started),
        Command::Optimize2(cmd) => cmd_optimize(cmd, &args, started),
        Command::Serial(cmd) => {
            cmd_distill(Architecture::Serial, cmd.source, cmd.run, &args, started)
        }
        Command::Parallel(cmd) => {
            cmd_distill(Architecture::Parallel, cmd.source, cmd.run, &args, started)
        }
        Command::Repeat(cmd) => {
            let p = Protocol::parse(&cmd.protocol)?;
            cmd_distill(
                Architecture::FixedRepeat(p),
                cmd.source,
                cmd.run,
                &args,
                started,
            )
        }
        Command::Scan(cmd) => cmd_scan(cmd, &args, started),
        Command::Census => stdout(format!("{}\n", count_pr_preserving()).as_bytes()),
        Command::Boundary(cmd) => cmd_boundary(cmd),
        Command::Replay { manifest } => cmd_replay(&manifest),
    }
}

fn load_box(source: &BoxSource) -> Result<(Behaviour, Value)> {
    if let Some(name) = &source.extremal {
        let e = ExtremalIndex::parse(name)?;
        return Ok((e.behaviour(), json!({"extremal": e.to_string()})));
    }
    if let Some(path) = &source.box_file {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading box {}", path.display()))?;
        let b =
            Behaviour::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        return Ok((b, json!({"box_file": path})));
    }
    let (Some(cs), Some(eta), Some(omega)) = (&source.cs, source.eta, source.omega) else {
        return Err(usage("give --cs/--eta/--omega, --extremal or --box"));
    };
    let pt = CrossSectionPoint::new(CrossSection::parse(cs)?, eta, omega)?;
    Ok((
        pt.behaviour(),
        json!({"cs": pt.cs, "eta": eta, "omega": omega}),
    ))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn stdout(bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut lock = std::io::stdout().lock();
    match lock.write_all(bytes).and_then(|_| lock.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    stdout(text.as_bytes())
}

fn box_value(b: &Behaviour) -> Result<Value> {
    Ok(serde_json::from_str(&b.to_json())?)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_with_manifest(
    out: &Path,
    data: &[u8],
    manifest: Option<&Path>,
    args: &[String],
    parameters: Value,
    started: Instant,
    extra_outputs: &[&Path],
) -> Result<()> {
    fs::write(out, data).with_context(|| format!("writing {}", out.display()))?;
    let mut outputs = vec![out.display().to_string()];
    outputs.extend(extra_outputs.iter().map(|p| p.display().to_string()));
    let m = Manifest::new(args.to_vec(), parameters, started, outputs);
    let path = manifest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest_path(out));
    fs::write(&path, m.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(
    v: Value,
    out: Option<&Path>,
    args: &[String],
    parameters: Value,
    started: Instant,
) -> Result<()> {
    match out {
        Some(path) => {
            let mut text = serde_json::to_string_pretty(&v)?;
            text.push('\n');
            write_with_manifest(path, text.as_bytes(), None, args, parameters, started, &[])
        }
        None => print_json(&v),
    }
}

fn cmd_box(cmd: BoxCmd, args: &[String], started: Instant) -> Result<()> {
    let (b, params) = load_box(&cmd.source)?;
    if let Some(out) = &cmd.out {
        let mut text = b.to_json();
        text.push('\n');
        return write_with_manifest(out, text.as_bytes(), None, args, params, started, &[]);
    }
    let report = b.validate();
    print_json(&json!({
        "box": box_value(&b)?,
        "chsh": b.chsh(),
        "chsh2": b.chsh2(),
        "valid": report.is_valid(),
        "max_violation": report.max_violation(),
    }))
}

fn cmd_protocols(action: ProtocolsCmd) -> Result<()> {
    match action {
        ProtocolsCmd::List => {
            let text: String = Protocol::ALL
                .iter()
                .map(|p| format!("{}\t{} copies\n", p.name(), p.copies()))
                .collect();
            stdout(text.as_bytes())
        }
        ProtocolsCmd::Show { name } => {
            let p = Protocol::parse(&name)?;
            let (a, b) = p.wirings();
            print_json(&json!({
                "protocol": p.name(),
                "copies": p.copies(),
                "alice": a.truth_table(),
                "bob": b.truth_table(),
            }))
        }
    }
}

fn cmd_apply(cmd: ApplyCmd, args: &[String], started: Instant) -> Result<()> {
    let p = Protocol::parse(&cmd.protocol)?;
    let (b, mut params) = load_box(&cmd.source)?;
    params["protocol"] = json!(p.name());
    let after = p.apply(&b);
    let v = json!({
        "protocol": p.name(),
        "chsh_before": b.chsh(),
        "chsh_after": after.chsh(),
        "box": box_value(&after)?,
    });
    emit(v, cmd.out.as_deref(), args, params, started)
}

fn cmd_optimize(cmd: OptimizeCmd, args: &[String], started: Instant) -> Result<()> {
    let (q1, mut params) = load_box(&cmd.source)?;
    let q2 = match &cmd.box2 {
        Some(path) => {
            params["box2_file"] = json!(path);
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading box {}", path.display()))?;
            Behaviour::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => q1,
    };
    let r = sweep_two_copy_with(&q1, &q2, cmd.table.is_some())?;
    if let Some(table) = &cmd.table {
        let mut buf = Vec::new();
        r.write_per_bob_csv(&mut buf)?;
        write_with_manifest(table, &buf, None, args, params.clone(), started, &[])?;
    }
    emit(r.to_json_value(), cmd.out.as_deref(), args, params, started)
}

fn cmd_distill(
    arch: Architecture,
    source: BoxSource,
    run: DistillArgs,
    args: &[String],
    started: Instant,
) -> Result<()> {
    let (b, mut params) = load_box(&source)?;
    let cfg = AlgorithmConfig {
        architecture: arch,
        max_rounds: run.max_rounds,
        improvement_tol: run.tol,
        target: run.target,
    };
    cfg.validate()?;
    params["config"] = serde_json::to_value(cfg)?;
    let v = if run.certify {
        serde_json::to_value(certify_trivial_cc(&b, &cfg)?)?
    } else {
        serde_json::to_value(distill(&b, &cfg)?)?
    };
    emit(v, run.out.as_deref(), args, params, started)
}

fn cmd_scan(cmd: ScanCmd, args: &[String], started: Instant) -> Result<()> {
    let file = match &cmd.config {
        Some(path) => config::read_config(path).map_err(|e| usage(format!("{e:#}")))?,
        None => Default::default(),
    };
    for key in file.keys() {
        if !["cs", "resolution", "protocols", "chsh2", "out", "manifest"].contains(&key.as_str()) {
            return Err(usage(format!("unknown config key {key:?}")));
        }
    }
    let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
    let cs = CrossSection::parse(&pick(cmd.cs, "cs").ok_or_else(|| usage("scan needs --cs"))?)?;
    let resolution = match pick(cmd.resolution.map(|r| r.to_string()), "resolution") {
        Some(r) => r
            .parse()
            .map_err(|_| usage(format!("bad resolution {r:?}")))?,
        None => nlwire_core::scan::DEFAULT_RESOLUTION,
    };
    let protocols =
        pick(cmd.protocols, "protocols").ok_or_else(|| usage("scan needs --protocols"))?;
    let protocols = protocols
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ScanProtocol::parse)
        .collect::<nlwire_core::Result<Vec<_>>>()?;
    let chsh2 = cmd.chsh2
        || match file.get("chsh2").map(|s| s.to_ascii_lowercase()) {
            None => false,
            Some(s) if ["1", "true", "yes"].contains(&s.as_str()) => true,
            Some(s) if ["0", "false", "no"].contains(&s.as_str()) => false,
            Some(s) => return Err(usage(format!("bad chsh2 value {s:?}"))),
        };
    let out = pick(cmd.out.map(|p| p.display().to_string()), "out").map(PathBuf::from);
    let manifest =
        pick(cmd.manifest.map(|p| p.display().to_string()), "manifest").map(PathBuf::from);

    let mut req = ScanRequest::new(cs, resolution, protocols);
    req.include_chsh2 = chsh2;
    req.validate()?;
    let table = scan_region(&req)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    match out {
        Some(path) => write_with_manifest(
            &path,
            &buf,
            manifest.as_deref(),
            args,
            serde_json::to_value(&req)?,
            started,
            &[],
        ),
        None => stdout(&buf),
    }
}

fn cmd_boundary(cmd: BoundaryCmd) -> Result<()> {
    let curve = Curve::parse(&cmd.curve)?;
    match (cmd.eta, cmd.samples) {
        (Some(eta), None) => {
            print_json(&json!({"curve": curve.name(), "eta": eta, "omega": boundary(curve, eta)?}))
        }
        (None, Some(samples)) => print_json(&json!({
            "curve": curve.name(),
            "samples": samples,
            "max_residual": boundary_zero_gain_check(curve, samples)?,
        })),
        _ => Err(usage("give exactly one of --eta or --samples")),
    }
}

/// Output flags whose values name files a command writes.
const OUTPUT_FLAGS: [&str; 3] = ["--out", "--table", "--manifest"];

fn cmd_replay(path: &Path) -> Result<()> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let m = Manifest::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if m.command.first().map(String::as_str) == Some("replay") {
        bail!("refusing to replay a replay");
    }
    // Re-run with every output redirected to a sibling `.replay` file.
    let mut argv = vec!["nlwire".to_string()];
    let mut redirected = Vec::new();
    let mut it = m.command.iter().peekable();
    while let Some(a) = it.next() {
        let (flag, inline) = match a.split_once('=') {
            Some((f, v)) if OUTPUT_FLAGS.contains(&f) => (f.to_string(), Some(v.to_string())),
            _ => (a.clone(), None),
        };
        if OUTPUT_FLAGS.contains(&flag.as_str()) {
            let value = match inline {
                Some(v) => v,
                None => it
                    .next()
                    .cloned()
                    .ok_or_else(|| anyhow!("{flag} without a value in manifest"))?,
            };
            let target = format!("{value}.replay");
            if flag != "--manifest" {
                redirected.push((PathBuf::from(&value), PathBuf::from(&target)));
            }
            argv.push(flag);
            argv.push(target);
        } else {
            argv.push(a.clone());
        }
    }
    // An output named only in a --config file is not on the command line; pin it.
    let has_out = m
        .command
        .iter()
        .any(|a| a == "--out" || a.starts_with("--out="));
    if !has_out
        && m.command
            .iter()
            .any(|a| a == "--config" || a.starts_with("--config="))
    {
        if let Some(out) = m.outputs.first() {
            let target = format!("{out}.replay");
            redirected.push((PathBuf::from(out), PathBuf::from(&target)));
            argv.push("--out".into());
            argv.push(target);
        }
    }
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| usage(format!("manifest command does not parse: {e}")))?;
    run(cli, argv[1..].to_vec())?;
    let mut report = Vec::new();
    let mut all_same = true;
    for (orig, replay) in &redirected {
        let a = fs::read(orig).with_context(|| format!("reading {}", orig.display()))?;
        let b = fs::read(replay).with_context(|| format!("reading {}", replay.display()))?;
        let same = a == b;
        all_same &= same;
        report.push(json!({"output": orig, "replay": replay, "identical": same}));
        if same {
            let _ = fs::remove_file(replay);
            let _ = fs::remove_file(manifest_path(replay));
        }
    }
    print_json(&json!({"manifest": path, "outputs": report, "identical": all_same}))?;
    if !all_same {
        bail!("replayed outputs differ from the recorded ones");
    }
    Ok(())
}
