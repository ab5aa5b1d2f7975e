//! The `prnet` command line.
//!
//! Exit codes: `0` success, `1` verification failure, `2` usage or I/O
//! error. Exact results are printed as fractions and float results with 7
//! significant digits. Every run emits a JSON manifest, written to
//! `manifest.json` in the output directory or to standard error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::behavior::{
    check_no_signaling, format_sig, induced_behavior_compiled, simulate_rounds, Behavior, Prob, RNG_ALGORITHM,
};
use crate::bell::{check_inequality, quantum_behavior, QuantumModel};
use crate::joint::{audit_laws, build_joint_compiled, JointDistribution, PartyOrdering, SettingTriple};
use crate::lp::{fixed_output_bound, fixed_output_program, expected_f_program, min_expected_f_over_ns, solve};
use crate::search::{minimize_ef, SearchConfig, SearchError, SearchMode};
use crate::strategy::{sample_random_network, BoxCounts, NetworkStrategy, Outcome, StrategyError};
use crate::transform::verify_chain;

#[derive(Parser, Debug)]
#[command(name = "prnet", version, about = "Exact simulation of tripartite PR-box networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BehaviorMode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SearchKind {
    Exhaustive,
    Random,
    Local,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a strategy file for well-formedness.
    Validate { file: PathBuf },
    /// Compute the behavior of a network (or the quantum behavior) and its E(F).
    Behavior {
        file: Option<PathBuf>,
        #[arg(long)]
        quantum: bool,
        #[arg(long, default_value = "ABC")]
        ordering: String,
        #[arg(long, value_enum, default_value = "exact")]
        mode: BehaviorMode,
        #[arg(long, default_value_t = 1_000_000)]
        rounds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict written (or, without --out, printed) data to one format.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        check_orderings: bool,
    },
    /// Run every check on a network; exit 0 iff all pass.
    Verify {
        file: Option<PathBuf>,
        /// Only solve the fixed-output programs.
        #[arg(long)]
        lp_only: bool,
        #[arg(long)]
        quantum: bool,
        /// Audit a joint distribution CSV instead of a network.
        #[arg(long)]
        joint: Option<PathBuf>,
        /// Settings of the joint CSV, e.g. ab'c.
        #[arg(long, default_value = "abc")]
        settings: String,
    },
    /// Apply the derandomizing and fixed-output surgeries and report them.
    Transform {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for networks with small E(F).
    Search {
        #[arg(long, default_value = "1,1,1")]
        counts: String,
        #[arg(long, value_enum, default_value = "exhaustive")]
        mode: SearchKind,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start local search at the all-'+' network.
        #[arg(long)]
        from_trivial: bool,
        #[arg(long)]
        no_symmetry_reduction: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the no-signaling linear programs.
    Lp {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a random (or the all-'+') network as strategy JSON.
    Sample {
        #[arg(long, default_value = "1,1,1")]
        counts: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trivial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Exit 1.
    Verification(String),
    /// Exit 2.
    Usage(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

struct Run<'a> {
    out: &'a mut dyn Write,
    manifest: Value,
    out_dir: Option<PathBuf>,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn say(&mut self, line: impl AsRef<str>) -> CmdResult {
        writeln!(self.out, "{}", line.as_ref())?;
        Ok(())
    }

    fn write_file(&mut self, name: &str, contents: &[u8]) -> CmdResult {
        let dir = self.out_dir.clone().expect("file output needs --out");
        fs::create_dir_all(&dir)?;
        let path = dir.join(name);
        fs::write(&path, contents)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Usage(format!("file not found: {}", path.display())),
        _ => Failure::Usage(format!("cannot read {}: {e}", path.display())),
    })
}

fn load_network(path: &Path) -> Result<NetworkStrategy, Failure> {
    let text = read_file(path)?;
    NetworkStrategy::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_valid(path: &Path) -> Result<NetworkStrategy, Failure> {
    let network = load_network(path)?;
    let report = network.validate();
    if !report.is_valid() {
        return Err(Failure::Verification(format!("invalid strategy:\n{report}")));
    }
    Ok(network)
}

fn parse_counts(s: &str) -> Result<BoxCounts, Failure> {
    s.parse().map_err(|e: StrategyError| Failure::Usage(format!("--counts: {e}")))
}

fn verdict<T: Prob>(b: &Behavior<T>) -> (String, bool) {
    let check = check_inequality(b);
    let v = if check.tight {
        "bound satisfied (tight)"
    } else if check.satisfies_bound {
        "bound satisfied"
    } else {
        "bound VIOLATED"
    };
    (format!("E(F) = {}\n{v}", check.value.render()), check.satisfies_bound)
}

fn emit_behavior<T: Prob>(run: &mut Run, b: &Behavior<T>, format: Option<Format>) -> CmdResult {
    let json = serde_json::to_string_pretty(&b.to_json()).expect("behavior serializes") + "\n";
    let mut csv = Vec::new();
    b.write_csv(&mut csv).map_err(|e| Failure::Usage(e.to_string()))?;
    if run.out_dir.is_some() {
        if format != Some(Format::Csv) {
            run.write_file("behavior.json", json.as_bytes())?;
        }
        if format != Some(Format::Json) {
            run.write_file("behavior.csv", &csv)?;
        }
    } else {
        match format {
            Some(Format::Json) => write!(run.out, "{json}")?,
            Some(Format::Csv) => run.out.write_all(&csv)?,
            None => {}
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_behavior(
    run: &mut Run,
    file: Option<PathBuf>,
    quantum: bool,
    ordering: &str,
    mode: BehaviorMode,
    rounds: u64,
    seed: u64,
    format: Option<Format>,
    check_orderings: bool,
) -> CmdResult {
    let ordering: PartyOrdering = ordering.parse().map_err(|e| Failure::Usage(format!("--ordering: {e}")))?;
    if quantum {
        if file.is_some() {
            return Err(Failure::Usage("--quantum takes no strategy file".into()));
        }
        let b = quantum_behavior();
        if format.is_none() || run.out_dir.is_some() {
            run.say(b.render_table())?;
        }
        let (text, _) = verdict(&b);
        run.say(text)?;
        let q = QuantumModel::default();
        run.say(format!("E_Q(B) = 2S = {}", format_sig(2.0 * q.s, 7)))?;
        return emit_behavior(run, &b, format);
    }
    let path = file.ok_or_else(|| Failure::Usage("a strategy file or --quantum is required".into()))?;
    let network = load_valid(&path)?;
    let net = network.compile().map_err(|e| Failure::Verification(e.to_string()))?;
    let exact = induced_behavior_compiled(&net, ordering);
    let print_table = format.is_none() || run.out_dir.is_some();
    let ok = match mode {
        BehaviorMode::Exact => {
            if print_table {
                run.say(exact.render_table())?;
            }
            let (text, ok) = verdict(&exact);
            run.say(text)?;
            emit_behavior(run, &exact, format)?;
            ok
        }
        BehaviorMode::Mc => {
            let emp = simulate_rounds(&network, ordering, rounds, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            let b = emp.to_behavior().map_err(|e| Failure::Usage(e.to_string()))?;
            if print_table {
                run.say(b.render_table())?;
            }
            let (text, _) = verdict(&b);
            run.say(format!("{rounds} rounds, seed {seed}\n{text}"))?;
            let (exact_text, ok) = verdict(&exact);
            run.say(format!("exact: {}", exact_text.replace('\n', ", ")))?;
            emit_behavior(run, &b, format)?;
            ok
        }
    };
    if check_orderings {
        let all = PartyOrdering::all();
        let identical = all
            .iter()
            .filter(|o| {
                SettingTriple::all().all(|s| {
                    build_joint_compiled(&net, s, **o).support == build_joint_compiled(&net, s, all[0]).support
                })
            })
            .count();
        run.say(format!("{identical}/6 orderings identical"))?;
        if identical != 6 {
            return Err(Failure::Verification("joint distribution depends on the ordering".into()));
        }
    }
    if !ok {
        return Err(Failure::Verification("E(F) below 1/8".into()));
    }
    Ok(())
}

fn lp_only(run: &mut Run) -> Result<bool, Failure> {
    let mut ok = true;
    for k in Outcome::ALL {
        match fixed_output_bound(k) {
            Ok(sol) => {
                let exact_one = sol.value == num_rational::BigRational::from_integer(1.into());
                ok &= exact_one;
                run.say(format!("fixed-output optimum (A = {k} at a): {} (exact)", sol.value))?;
            }
            Err(e) => {
                ok = false;
                run.say(format!("fixed-output optimum (A = {k} at a): {e}"))?;
            }
        }
    }
    Ok(ok)
}

fn check_line(run: &mut Run, ok: bool, name: &str, detail: &str) -> CmdResult {
    let tag = if ok { "ok" } else { "FAIL" };
    if detail.is_empty() {
        run.say(format!("[{tag}] {name}"))
    } else {
        run.say(format!("[{tag}] {name}: {detail}"))
    }
}

fn audit_joint(run: &mut Run, joint: &JointDistribution) -> Result<bool, Failure> {
    let violations = audit_laws(joint);
    for v in &violations {
        check_line(run, false, &format!("{} at {}", v.law, joint.settings), &v.detail)?;
    }
    Ok(violations.is_empty())
}

fn cmd_verify(run: &mut Run, file: Option<PathBuf>, lp: bool, quantum: bool, joint: Option<PathBuf>, settings: &str) -> CmdResult {
    if quantum {
        return Err(Failure::Usage("network required: the quantum behavior has no strategy to verify".into()));
    }
    if lp {
        return if lp_only(run)? { Ok(()) } else { Err(Failure::Verification("fixed-output optimum is not 1".into())) };
    }
    if let Some(path) = joint {
        let settings: SettingTriple = settings.parse().map_err(|e| Failure::Usage(format!("--settings: {e}")))?;
        let text = read_file(&path)?;
        let j = JointDistribution::read_csv(text.as_bytes(), settings)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        return if audit_joint(run, &j)? {
            run.say("[ok] joint distribution laws")
        } else {
            Err(Failure::Verification("joint distribution laws violated".into()))
        };
    }
    let path = file.ok_or_else(|| Failure::Usage("network required".into()))?;
    let network = load_valid(&path)?;
    let net = network.compile().map_err(|e| Failure::Verification(e.to_string()))?;
    let mut all_ok = true;

    let mut laws_ok = true;
    let mut orderings_ok = true;
    for s in SettingTriple::all() {
        let reference = build_joint_compiled(&net, s, PartyOrdering::ABC);
        laws_ok &= audit_joint(run, &reference)?;
        for o in &PartyOrdering::all()[1..] {
            if build_joint_compiled(&net, s, *o).support != reference.support {
                orderings_ok = false;
                check_line(run, false, "ordering invariance", &format!("{o} differs from ABC at {s}"))?;
            }
        }
    }
    if laws_ok {
        check_line(run, true, "joint distribution laws", "8 settings")?;
    }
    if orderings_ok {
        check_line(run, true, "ordering invariance", "6/6 orderings identical")?;
    }
    all_ok &= laws_ok && orderings_ok;

    let b = induced_behavior_compiled(&net, PartyOrdering::ABC);
    let ns = check_no_signaling(&b);
    for v in &ns.violations {
        check_line(run, false, "no-signaling", &v.to_string())?;
    }
    if ns.passes() {
        check_line(run, true, "no-signaling", &format!("{} equalities", ns.checked))?;
    }
    all_ok &= ns.passes();

    let check = check_inequality(&b);
    check_line(run, check.satisfies_bound, "E(F) >= 1/8", &format!("E(F) = {}", check.value))?;
    all_ok &= check.satisfies_bound;

    match verify_chain(&network) {
        Ok(chain) => {
            for c in &chain.checks {
                check_line(run, c.holds, &c.law, &c.detail)?;
            }
            for f in &chain.flags {
                run.say(format!("[note] {f}"))?;
            }
            all_ok &= chain.all_hold();
        }
        Err(e) => {
            check_line(run, false, "transform chain", &e.to_string())?;
            all_ok = false;
        }
    }
    all_ok &= lp_only(run)?;
    if all_ok {
        run.say("all checks passed")
    } else {
        Err(Failure::Verification("verification failed".into()))
    }
}

fn cmd_transform(run: &mut Run, file: &Path) -> CmdResult {
    let network = load_valid(file)?;
    let chain = verify_chain(&network).map_err(|e| Failure::Verification(e.to_string()))?;
    let report = serde_json::to_string_pretty(&chain.surgery.to_json()).expect("report serializes") + "\n";
    if run.out_dir.is_some() {
        run.write_file("surgery.json", report.as_bytes())?;
        run.write_file("derandomized.json", (chain.derandomized.to_json() + "\n").as_bytes())?;
        run.write_file("fixed.json", (chain.fixed.to_json() + "\n").as_bytes())?;
        let full = serde_json::to_string_pretty(&chain.to_json()).expect("report serializes") + "\n";
        run.write_file("chain.json", full.as_bytes())?;
    }
    write!(run.out, "{report}")?;
    if !chain.all_hold() {
        let failed: Vec<String> = chain.failures().map(|c| c.to_string()).collect();
        return Err(Failure::Verification(failed.join("\n")));
    }
    Ok(())
}

fn cmd_search(run: &mut Run, config: SearchConfig) -> CmdResult {
    let result = match minimize_ef(&config) {
        Ok(r) => r,
        Err(e @ SearchError::BoundViolated { .. }) => return Err(Failure::Verification(e.to_string())),
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    run.say(format!("{}: best E(F) = {}", result.label, result.best_value))?;
    run.say(format!("evaluated {}", result.evaluated))?;
    for (k, v) in &result.stats {
        run.say(format!("{k}: {v}"))?;
    }
    let behavior = crate::behavior::induced_behavior(&result.best_network).map_err(|e| Failure::Usage(e.to_string()))?;
    if run.out_dir.is_some() {
        run.write_file("best_network.json", (result.best_network.to_json() + "\n").as_bytes())?;
        let bj = serde_json::to_string_pretty(&behavior.to_json()).expect("behavior serializes") + "\n";
        run.write_file("best_behavior.json", bj.as_bytes())?;
        run.write_file("histogram.csv", result.histogram_csv().as_bytes())?;
    } else {
        write!(run.out, "{}", result.histogram_csv())?;
        run.say(result.best_network.to_json())?;
    }
    Ok(())
}

fn cmd_lp(run: &mut Run) -> CmdResult {
    let mut ok = lp_only(run)?;
    let free = solve(&fixed_output_program(None)).map_err(|e| Failure::Verification(e.to_string()))?;
    run.say(format!("optimum without the fixed-output constraint: {} (exact)", free.value))?;
    let min_f = min_expected_f_over_ns().map_err(|e| Failure::Verification(e.to_string()))?;
    run.say(format!("minimum E(F) over the no-signaling polytope: {} (exact)", min_f.value))?;
    ok &= free.verify(&fixed_output_program(None)).is_ok() && min_f.verify(&expected_f_program()).is_ok();
    if run.out_dir.is_some() {
        for (name, fixed) in [("lp_fixed_plus.json", Some(Outcome::Plus)), ("lp_fixed_zero.json", Some(Outcome::Zero)), ("lp_free.json", None)] {
            let program = fixed_output_program(fixed);
            let sol = solve(&program).map_err(|e| Failure::Verification(e.to_string()))?;
            let text = serde_json::to_string_pretty(&json!({"program": program.to_json(), "solution": sol.to_json(&program)}))
                .expect("lp serializes");
            run.write_file(name, (text + "\n").as_bytes())?;
        }
        let program = expected_f_program();
        let text = serde_json::to_string_pretty(&json!({"program": program.to_json(), "solution": min_f.to_json(&program)}))
            .expect("lp serializes");
        run.write_file("lp_min_expected_f.json", (text + "\n").as_bytes())?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification("linear program certificates failed".into()))
    }
}

fn cmd_sample(run: &mut Run, counts: &str, seed: u64, trivial: bool, out: Option<PathBuf>) -> CmdResult {
    let counts = parse_counts(counts)?;
    let network = if trivial {
        counts.check_cap().map_err(|e| Failure::Usage(e.to_string()))?;
        NetworkStrategy::trivial(counts, Outcome::Plus)
    } else {
        sample_random_network(counts, seed).map_err(|e| Failure::Usage(e.to_string()))?
    };
    let text = network.to_json() + "\n";
    match out {
        Some(path) => {
            fs::write(&path, text)?;
            run.outputs.push(path.display().to_string());
            Ok(())
        }
        None => {
            write!(run.out, "{text}")?;
            Ok(())
        }
    }
}

fn dispatch(run: &mut Run, command: Command) -> CmdResult {
    match command {
        Command::Validate { file } => {
            let network = load_network(&file)?;
            let report = network.validate();
            if report.is_valid() {
                run.say(format!("valid: counts {}", network.counts))
            } else {
                run.say(report.to_string())?;
                Err(Failure::Verification("invalid strategy".into()))
            }
        }
        Command::Behavior { file, quantum, ordering, mode, rounds, seed, out: _, format, check_orderings } => {
            cmd_behavior(run, file, quantum, &ordering, mode, rounds, seed, format, check_orderings)
        }
        Command::Verify { file, lp_only, quantum, joint, settings } => {
            cmd_verify(run, file, lp_only, quantum, joint, &settings)
        }
        Command::Transform { file, out: _ } => cmd_transform(run, &file),
        Command::Search { counts, mode, budget, seed, from_trivial, no_symmetry_reduction, out: _ } => {
            let mode = match mode {
                SearchKind::Exhaustive => SearchMode::Exhaustive,
                SearchKind::Random => SearchMode::Random,
                SearchKind::Local => SearchMode::LocalSearch { from_trivial },
            };
            let config = SearchConfig {
                counts: parse_counts(&counts)?,
                mode,
                budget,
                seed,
                symmetry_reduction: !no_symmetry_reduction,
            };
            cmd_search(run, config)
        }
        Command::Lp { out: _ } => cmd_lp(run),
        Command::Sample { counts, seed, trivial, out } => cmd_sample(run, &counts, seed, trivial, out),
    }
}

fn describe(command: &Command) -> (&'static str, Value, Option<u64>, Vec<String>, Option<PathBuf>) {
    let path = |p: &Option<PathBuf>| p.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
    match command {
        Command::Validate { file } => ("validate", json!({}), None, vec![file.display().to_string()], None),
        Command::Behavior { file, quantum, ordering, mode, rounds, seed, out, format, check_orderings } => (
            "behavior",
            json!({
                "quantum": quantum,
                "ordering": ordering,
                "mode": format!("{mode:?}").to_lowercase(),
                "rounds": (*mode == BehaviorMode::Mc).then_some(rounds),
                "format": format.map(|f| format!("{f:?}").to_lowercase()),
                "check_orderings": check_orderings,
            }),
            (*mode == BehaviorMode::Mc).then_some(*seed),
            path(file),
            out.clone(),
        ),
        Command::Verify { file, lp_only, quantum, joint, settings } => (
            "verify",
            json!({"lp_only": lp_only, "quantum": quantum, "settings": joint.as_ref().map(|_| settings)}),
            None,
            path(file).into_iter().chain(path(joint)).collect(),
            None,
        ),
        Command::Transform { file, out } => ("transform", json!({}), None, vec![file.display().to_string()], out.clone()),
        Command::Search { counts, mode, budget, seed, from_trivial, no_symmetry_reduction, out } => (
            "search",
            json!({
                "counts": counts,
                "mode": format!("{mode:?}").to_lowercase(),
                "budget": budget,
                "from_trivial": from_trivial,
                "symmetry_reduction": !no_symmetry_reduction,
            }),
            Some(*seed),
            vec![],
            out.clone(),
        ),
        Command::Lp { out } => ("lp", json!({}), None, vec![], out.clone()),
        Command::Sample { counts, seed, trivial, .. } => {
            ("sample", json!({"counts": counts, "trivial": trivial}), (!trivial).then_some(*seed), vec![], None)
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Data goes to `out`; diagnostics and the manifest (when there is no
/// output directory) go to `err`.
pub fn run_with_io<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let (name, config, seed, inputs, out_dir) = describe(&cli.command);
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "command": name,
        "config": config,
        "seed": seed,
        "versions": {"prnet": env!("CARGO_PKG_VERSION"), "rng": RNG_ALGORITHM},
        "inputs": inputs,
        "timestamp": timestamp,
    });
    log::info!("running {name}");
    let mut run = Run { out, manifest, out_dir, outputs: Vec::new() };
    let result = dispatch(&mut run, cli.command);
    let code = match &result {
        Ok(()) => 0,
        Err(Failure::Verification(m)) => {
            let _ = writeln!(err, "verification failed: {m}");
            1
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
    };
    run.manifest["outputs"] = json!(run.outputs);
    run.manifest["exit_code"] = json!(code);
    let text = serde_json::to_string_pretty(&run.manifest).expect("manifest serializes") + "\n";
    let written = match &run.out_dir {
        Some(dir) if code != 2 => fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("manifest.json"), &text)).is_ok(),
        _ => false,
    };
    if !written {
        let _ = write!(err, "{text}");
    }
    code
}
