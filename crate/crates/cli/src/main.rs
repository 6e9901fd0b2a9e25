//! `liftlab`: one subcommand per pipeline, file I/O in the formats of the
//! library, and reports in both aligned text and flat `key=value` form.
//!
//! Exit codes: 0 pass, 1 semantic reject, 2 input error, 3 guard tripped.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use liftlab_core::counterexample::{
    self, CounterexampleError, CounterexampleGadget, CounterexampleParams,
};
use liftlab_core::dtree::{DecisionTree, Label, LiftedVars, ParityDecisionTree, PdtVars};
use liftlab_core::entropy::{self, EntropyError, PointerSet};
use liftlab_core::proofcnf::{
    check_resplus, lift_cnf, lift_dt_to_pdt, pdt_solves_search, pdt_to_resplus, resplus_to_pdt,
    Cnf, ProofCnfError, ResPlusProof, Verdict,
};
use liftlab_core::protocol::ProtocolTree;
use liftlab_core::simulation::{
    extract_decision_tree, pdt_simulate, simulate, AlicePolicy, SimError,
};

const EXIT_PASS: u8 = 0;
const EXIT_REJECT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Parser)]
#[command(name = "liftlab", version, about = "Lifting toolkit: counterexamples, simulation, CNF lifting, proof checking")]
struct Cli {
    /// Omit the timestamp header (for byte-identical reports).
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Override cost guards (equivalent to LIFTLAB_GUARD_OVERRIDE=1).
    #[arg(long, global = true)]
    force: bool,
    /// Cap the worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and verify a disperser counterexample family.
    Counterexample(CounterexampleArgs),
    /// Run the protocol-to-decision-tree simulation.
    Simulate(SimulateArgs),
    /// Lift a CNF through the Index gadget.
    LiftCnf(LiftCnfArgs),
    /// Verify a tree-Res(+) refutation.
    CheckProof(CheckProofArgs),
    /// Parity-decision-tree pipelines.
    #[command(subcommand)]
    Pdt(PdtCmd),
    /// Deficiency and min-entropy rate of an explicit pointer set.
    Entropy(EntropyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GadgetArg {
    Ind,
    Ip,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long, value_enum)]
    gadget: GadgetArg,
    /// Gadget size: pointer alphabet bits for ind, vector length for ip.
    #[arg(long)]
    m: usize,
    /// Number of blocks.
    #[arg(long = "N")]
    n: usize,
    /// Slack parameter K, as an integer or p/q.
    #[arg(long = "K", value_parser = parse_ratio)]
    k: num_rational::Ratio<u64>,
    #[arg(long)]
    delta: usize,
    /// Run the full exhaustive verification, not just the closed-form counts.
    #[arg(long)]
    exhaustive: bool,
    /// Write the report to a file as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StarParity,
    ParityParity,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long = "N")]
    n: usize,
    /// Input bits, e.g. 101.
    #[arg(long, conflicts_with = "all_z")]
    z: Option<String>,
    /// Explore every input by answering queries both ways.
    #[arg(long)]
    all_z: bool,
    /// Write the extracted decision tree.
    #[arg(long)]
    emit_dt: Option<PathBuf>,
    /// Write the per-step trace (tab-separated).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "star-parity")]
    mode: ModeArg,
}

#[derive(Args)]
struct LiftCnfArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    out: PathBuf,
    /// Variable map file.
    #[arg(long)]
    map: PathBuf,
}

#[derive(Args)]
struct CheckProofArgs {
    #[arg(long)]
    cnf: PathBuf,
    #[arg(long)]
    proof: PathBuf,
    /// Additionally require tree shape (each line used at most once).
    #[arg(long)]
    tree: bool,
}

#[derive(Subcommand)]
enum PdtCmd {
    /// Check that a PDT solves the falsified-clause search problem.
    Verify {
        #[arg(long)]
        pdt: PathBuf,
        #[arg(long)]
        cnf: PathBuf,
    },
    /// Convert a search PDT into a tree-Res(+) refutation.
    ToProof {
        #[arg(long)]
        pdt: PathBuf,
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild a PDT from a tree-Res(+) refutation.
    FromProof {
        #[arg(long)]
        proof: PathBuf,
        /// Blocks (lifted) or variables (plain).
        #[arg(long = "N")]
        n: usize,
        /// Pointer alphabet; omit for a plain variable layout.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lift a decision tree to a PDT, simulate it back, and compare measures.
    LiftSimulate {
        /// Base decision tree file.
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        m: usize,
        /// Base CNF, when the tree solves a search problem.
        #[arg(long)]
        cnf: Option<PathBuf>,
        /// Write the simulated decision tree.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EntropyArgs {
    /// One member per line: block pointer values separated by whitespace.
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long = "N")]
    n: usize,
    /// Blocks to exclude, 1-based, comma-separated.
    #[arg(long)]
    excluded: Option<String>,
}

fn parse_ratio(s: &str) -> Result<num_rational::Ratio<u64>, String> {
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p, q),
        None => (s, "1"),
    };
    let p: u64 = p.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
    let q: u64 = q.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
    if q == 0 {
        return Err("zero denominator".into());
    }
    Ok(num_rational::Ratio::new(p, q))
}

/// A report accumulates aligned text plus flat machine lines.
struct Report {
    rows: Vec<(String, String)>,
    prefix: &'static str,
}

impl Report {
    fn new(prefix: &'static str) -> Self {
        Report { rows: Vec::new(), prefix }
    }

    fn row(&mut self, key: &str, value: impl ToString) {
        self.rows.push((key.to_string(), value.to_string()));
    }

    fn render(&self, timestamp: bool) -> String {
        let mut out = String::new();
        if timestamp {
            let secs =
                SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            out.push_str(&format!("generated unix={secs}\n"));
        }
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.rows {
            out.push_str(&format!("{k:width$}  {v}\n"));
        }
        out.push('\n');
        for (k, v) in &self.rows {
            out.push_str(&format!("{}.{}={}\n", self.prefix, k.replace(' ', "_"), v));
        }
        out
    }
}

enum Failure {
    Reject(String),
    Input(String),
    Guard(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Reject(_) => EXIT_REJECT,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Guard(_) => EXIT_GUARD,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Reject(m) | Failure::Input(m) | Failure::Guard(m) => m,
        }
    }
}

impl From<CounterexampleError> for Failure {
    fn from(e: CounterexampleError) -> Self {
        match e {
            CounterexampleError::ParamViolation(_) => Failure::Input(e.to_string()),
            CounterexampleError::GuardExceeded(_) => Failure::Guard(e.to_string()),
        }
    }
}

impl From<EntropyError> for Failure {
    fn from(e: EntropyError) -> Self {
        match e {
            EntropyError::EmptySet => Failure::Input(e.to_string()),
            EntropyError::GuardExceeded(_) => Failure::Guard(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::DepthGuard { .. } => Failure::Guard(e.to_string()),
            SimError::Entropy(EntropyError::GuardExceeded(_)) => Failure::Guard(e.to_string()),
            SimError::SmallM(_) | SimError::NotPowerOfTwo(_) | SimError::NotLifted => {
                Failure::Input(e.to_string())
            }
            other => Failure::Reject(other.to_string()),
        }
    }
}

impl From<ProofCnfError> for Failure {
    fn from(e: ProofCnfError) -> Self {
        match e {
            ProofCnfError::GuardExceeded(_) | ProofCnfError::WidthOverflow(_) => {
                Failure::Guard(e.to_string())
            }
            ProofCnfError::SourceInvalid(_) => Failure::Reject(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &PathBuf, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Best-effort: later calls are no-ops if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let force = cli.force || std::env::var("LIFTLAB_GUARD_OVERRIDE").as_deref() == Ok("1");
    let timestamp = !cli.no_timestamp;
    let outcome = match &cli.cmd {
        Cmd::Counterexample(args) => run_counterexample(args, timestamp),
        Cmd::Simulate(args) => run_simulate(args, force, timestamp),
        Cmd::LiftCnf(args) => run_lift_cnf(args, timestamp),
        Cmd::CheckProof(args) => run_check_proof(args, timestamp),
        Cmd::Pdt(cmd) => run_pdt(cmd, force, timestamp),
        Cmd::Entropy(args) => run_entropy(args, force, timestamp),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run_counterexample(args: &CounterexampleArgs, timestamp: bool) -> Result<u8, Failure> {
    let params = CounterexampleParams {
        gadget: match args.gadget {
            GadgetArg::Ind => CounterexampleGadget::Index,
            GadgetArg::Ip => CounterexampleGadget::InnerProduct,
        },
        m: args.m,
        n_blocks: args.n,
        k_bound: args.k,
        delta: args.delta,
    };
    let family = counterexample::build(&params)?;
    let mut report = Report::new("counterexample");
    report.row("gadget", match args.gadget { GadgetArg::Ind => "index", GadgetArg::Ip => "inner-product" });
    report.row("m", args.m);
    report.row("N", args.n);
    report.row("K", args.k);
    report.row("delta", args.delta);
    report.row("cardinality", family.cardinality());
    let code = if args.exhaustive {
        let v = counterexample::verify(&params, &family)?;
        report.row("deficiency", format!("{:.6}", v.deficiency));
        report.row("min_entropy_rate", format!("{:.6}", v.min_entropy_rate));
        report.row("rate_equals_bound", v.rate_equals_bound);
        report.row("checked_i_sets", v.checked_i_sets);
        report.row("forbidden_string", if v.forbidden_string { "all-1" } else { "all-0" });
        for c in &v.checks {
            report.row(&format!("check {}", c.name), format!(
                "{} ({})",
                if c.pass { "PASS" } else { "FAIL" },
                c.detail
            ));
        }
        report.row("verdict", if v.all_pass() { "PASS" } else { "FAIL" });
        if v.all_pass() { EXIT_PASS } else { EXIT_REJECT }
    } else {
        let bits = args.n * args.m;
        report.row(
            "deficiency_at_most_delta",
            entropy::deficiency_at_most(&family.cardinality(), bits as u32, args.delta as u32),
        );
        report.row("verdict", "BUILT");
        EXIT_PASS
    };
    let text = report.render(timestamp);
    print!("{text}");
    if let Some(path) = &args.out {
        write(path, &text)?;
    }
    Ok(code)
}

fn run_simulate(args: &SimulateArgs, force: bool, timestamp: bool) -> Result<u8, Failure> {
    let proto = ProtocolTree::parse(&read(&args.protocol)?)
        .map_err(|e| Failure::Input(e.to_string()))?;
    if proto.n_blocks != args.n || proto.m != args.m {
        return Err(Failure::Input(format!(
            "protocol is over N={} m={}, arguments say N={} m={}",
            proto.n_blocks, proto.m, args.n, args.m
        )));
    }
    let policy = match args.mode {
        ModeArg::StarParity => AlicePolicy::Majority,
        ModeArg::ParityParity => AlicePolicy::SmallerSubtree,
    };
    let mut report = Report::new("simulate");
    report.row("N", args.n);
    report.row("m", args.m);
    report.row("depth", proto.depth());
    report.row("leaves", proto.leaves());
    if let Some(zstr) = &args.z {
        let z: Vec<bool> = zstr
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Failure::Input(format!("bad bit `{c}` in z"))),
            })
            .collect::<Result<_, _>>()?;
        if z.len() != args.n {
            return Err(Failure::Input(format!("z has {} bits, N = {}", z.len(), args.n)));
        }
        let out = simulate(&proto, &z, policy, force)?;
        report.row("z", zstr);
        report.row("label", &out.label);
        report.row("queried", out.queried.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","));
        report.row("i_count", out.queried.len());
        report.row("a_plus_b", out.a_bits + out.b_bits);
        let ell = args.m.trailing_zeros() as usize;
        let bound = out.queried.len() * ell <= 2 * (out.a_bits + out.b_bits);
        report.row("bound_half_i_logm_le_ab", bound);
        if let Some(path) = &args.trace {
            write(path, &out.trace.tsv(ell))?;
        }
    } else if args.all_z {
        let (tree, outs) = extract_decision_tree(&proto, policy, force)?;
        report.row("dt_height", tree.height());
        report.row("dt_leaves", tree.leaves());
        let ell = args.m.trailing_zeros() as usize;
        let bound = outs
            .iter()
            .all(|o| o.queried.len() * ell <= 2 * (o.a_bits + o.b_bits));
        report.row("bound_half_i_logm_le_ab", bound);
        for (i, o) in outs.iter().enumerate() {
            report.row(
                &format!("run {i}"),
                format!("label={} |I|={} a+b={}", o.label, o.queried.len(), o.a_bits + o.b_bits),
            );
        }
        if let Some(path) = &args.emit_dt {
            write(path, &tree.emit())?;
        }
    } else {
        return Err(Failure::Input("pass --z BITS or --all-z".into()));
    }
    print!("{}", report.render(timestamp));
    Ok(EXIT_PASS)
}

fn run_lift_cnf(args: &LiftCnfArgs, timestamp: bool) -> Result<u8, Failure> {
    let base = Cnf::parse_dimacs(&read(&args.input)?).map_err(|e| Failure::Input(e.to_string()))?;
    let lifted = lift_cnf(&base, args.m)?;
    write(&args.out, &lifted.lifted.emit_dimacs())?;
    write(&args.map, &lifted.map_file())?;
    let mut report = Report::new("lift_cnf");
    report.row("m", args.m);
    report.row("base_vars", base.n_vars);
    report.row("base_clauses", base.clauses.len());
    report.row("lifted_vars", lifted.lifted.n_vars);
    report.row("lifted_clauses", lifted.lifted.clauses.len());
    print!("{}", report.render(timestamp));
    Ok(EXIT_PASS)
}

fn verdict_report(report: &mut Report, verdict: &Verdict) -> u8 {
    match verdict {
        Verdict::Accept => {
            report.row("verdict", "ACCEPT");
            EXIT_PASS
        }
        Verdict::Reject { line, reason, witness } => {
            report.row("verdict", "REJECT");
            if let Some(line) = line {
                report.row("line", line + 1);
            }
            report.row("reason", reason);
            if let Some(w) = witness {
                report.row(
                    "witness",
                    w.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>(),
                );
            }
            EXIT_REJECT
        }
    }
}

fn run_check_proof(args: &CheckProofArgs, timestamp: bool) -> Result<u8, Failure> {
    let cnf = Cnf::parse_dimacs(&read(&args.cnf)?).map_err(|e| Failure::Input(e.to_string()))?;
    let proof =
        ResPlusProof::parse(&read(&args.proof)?).map_err(|e| Failure::Input(e.to_string()))?;
    let verdict = check_resplus(&cnf, &proof, args.tree)?;
    let mut report = Report::new("check_proof");
    report.row("lines", proof.lines.len());
    report.row("tree_shape_required", args.tree);
    let code = verdict_report(&mut report, &verdict);
    print!("{}", report.render(timestamp));
    Ok(code)
}

fn run_pdt(cmd: &PdtCmd, force: bool, timestamp: bool) -> Result<u8, Failure> {
    match cmd {
        PdtCmd::Verify { pdt, cnf } => {
            let t = ParityDecisionTree::parse(&read(pdt)?)
                .map_err(|e| Failure::Input(e.to_string()))?;
            let cnf =
                Cnf::parse_dimacs(&read(cnf)?).map_err(|e| Failure::Input(e.to_string()))?;
            let verdict = pdt_solves_search(&t, &cnf, force)?;
            let mut report = Report::new("pdt_verify");
            report.row("height", t.height());
            report.row("leaves", t.leaves());
            let code = verdict_report(&mut report, &verdict);
            print!("{}", report.render(timestamp));
            Ok(code)
        }
        PdtCmd::ToProof { pdt, cnf, out } => {
            let t = ParityDecisionTree::parse(&read(pdt)?)
                .map_err(|e| Failure::Input(e.to_string()))?;
            let cnf =
                Cnf::parse_dimacs(&read(cnf)?).map_err(|e| Failure::Input(e.to_string()))?;
            let proof = pdt_to_resplus(&t, &cnf)?;
            write(out, &proof.emit())?;
            let mut report = Report::new("pdt_to_proof");
            report.row("lines", proof.lines.len());
            print!("{}", report.render(timestamp));
            Ok(EXIT_PASS)
        }
        PdtCmd::FromProof { proof, n, m, out } => {
            let proof =
                ResPlusProof::parse(&read(proof)?).map_err(|e| Failure::Input(e.to_string()))?;
            let vars = match m {
                Some(m) => {
                    if !m.is_power_of_two() || *m < 2 {
                        return Err(Failure::Input(format!("bad alphabet {m}")));
                    }
                    PdtVars::Lifted(LiftedVars::new(*n, *m))
                }
                None => PdtVars::Plain { n: *n },
            };
            let t = resplus_to_pdt(&proof, vars)?;
            write(out, &t.emit())?;
            let mut report = Report::new("pdt_from_proof");
            report.row("height", t.height());
            report.row("leaves", t.leaves());
            print!("{}", report.render(timestamp));
            Ok(EXIT_PASS)
        }
        PdtCmd::LiftSimulate { tree, m, cnf, out } => {
            let dt =
                DecisionTree::parse(&read(tree)?).map_err(|e| Failure::Input(e.to_string()))?;
            let base = match cnf {
                Some(path) => Some(
                    Cnf::parse_dimacs(&read(path)?).map_err(|e| Failure::Input(e.to_string()))?,
                ),
                None => None,
            };
            let lifted = match &base {
                Some(b) => Some(lift_cnf(b, *m)?),
                None => None,
            };
            let t = lift_dt_to_pdt(&dt, *m, lifted.as_ref())?;
            let clause_map = lifted.as_ref().map(|l| l.clause_map.clone());
            let map = move |lab: &Label| match (lab, &clause_map) {
                (Label::Clause(c), Some(cm)) => Label::Clause(cm[*c]),
                (other, _) => other.clone(),
            };
            let simulated = pdt_simulate(&t, &map)?;
            let mut report = Report::new("pdt_lift_simulate");
            report.row("base_height", dt.height());
            report.row("base_leaves", dt.leaves());
            report.row("pdt_height", t.height());
            report.row("pdt_leaves", t.leaves());
            report.row("simulated_height", simulated.height());
            report.row("simulated_leaves", simulated.leaves());
            if let Some(path) = out {
                write(path, &simulated.emit())?;
            }
            print!("{}", report.render(timestamp));
            Ok(EXIT_PASS)
        }
    }
}

fn run_entropy(args: &EntropyArgs, force: bool, timestamp: bool) -> Result<u8, Failure> {
    let text = read(&args.set)?;
    let mut members = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let row: Vec<u16> = line
            .split_whitespace()
            .map(|t| t.parse::<u16>().map_err(|_| Failure::Input(format!("bad pointer `{t}`"))))
            .collect::<Result<_, _>>()?;
        if row.len() != args.n {
            return Err(Failure::Input(format!(
                "member has {} blocks, N = {}",
                row.len(),
                args.n
            )));
        }
        if let Some(&v) = row.iter().find(|&&v| v as usize >= args.m) {
            return Err(Failure::Input(format!("pointer {v} outside [0, {})", args.m)));
        }
        members.push(row);
    }
    if members.is_empty() {
        return Err(Failure::Input("empty set".into()));
    }
    let excluded: BTreeSet<usize> = match &args.excluded {
        None => BTreeSet::new(),
        Some(list) => list
            .split(',')
            .map(|t| {
                let i: usize = t
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Input(format!("bad block index `{t}`")))?;
                if i == 0 || i > args.n {
                    return Err(Failure::Input(format!("block {i} outside 1..={}", args.n)));
                }
                Ok(i - 1)
            })
            .collect::<Result<_, _>>()?,
    };
    let set = PointerSet::new(args.n, args.m, members);
    let r = entropy::min_entropy_rate(&set, &excluded, force)?;
    let mut report = Report::new("entropy");
    report.row("members", set.len());
    report.row("deficiency", format!("{:.6}", r.deficiency));
    report.row("rate", format!("{:.6}", r.rate));
    report.row(
        "witness_set",
        if r.witness_set.is_empty() {
            "-".to_string()
        } else {
            r.witness_set.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
        },
    );
    report.row(
        "witness_assignment",
        if r.witness_assignment.is_empty() {
            "-".to_string()
        } else {
            r.witness_assignment.iter().map(u16::to_string).collect::<Vec<_>>().join(",")
        },
    );
    report.row("witness_count", r.witness_count);
    print!("{}", report.render(timestamp));
    Ok(EXIT_PASS)
}
