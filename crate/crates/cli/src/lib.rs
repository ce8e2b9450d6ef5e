//! Command surface for `poison-cert`: ingestion, subcommands and report
//! output. `main.rs` only parses arguments and maps errors to exit codes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poison_cert::bound::tolerable_budget_exact_with_cap;
use poison_cert::hash_bagging::records_from_lines;
use poison_cert::report::{self, Method, SweepPoint};
use poison_cert::synthetic::{p1_corpus, p2_corpus};
use poison_cert::{
    brute_force_p1, brute_force_p2, certify, subsample, tolerable_budget_greedy, AttackStructure,
    Budget, CertError, CertifyConfig, Membership, OracleResult, PairStructure, VoteMatrix,
};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    TooLarge(String),
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::TooLarge(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::TooLarge(m) | CliError::Mismatch(m) => f.write_str(m),
        }
    }
}

impl From<CertError> for CliError {
    fn from(e: CertError) -> Self {
        match e {
            CertError::TooLarge(_) => CliError::TooLarge(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "poison-cert",
    version,
    about = "Collective robustness certificates for bagged ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Hash-bag a line-delimited dataset into G sub-trainsets.
    Subsample(SubsampleArgs),
    /// Certify a vote matrix under a poisoning budget.
    Certify(CertifyArgs),
    /// Certify over a grid of budgets and write a CSV report.
    Sweep(SweepArgs),
    /// Upper bound on the tolerable number of poisoned samples.
    Bound(BoundArgs),
    /// Brute-force optimum for small instances.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct SubsampleArgs {
    /// One sample per line.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(short = 'G', long = "classifiers")]
    pub num_classifiers: usize,
    /// Expected sub-trainset size.
    #[arg(short = 'K', long = "subset-size")]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VotesArgs {
    /// CSV with one row per test sample and one column per sub-classifier.
    #[arg(long)]
    pub votes: PathBuf,
    /// Skip the first line of the votes file.
    #[arg(long)]
    pub header: bool,
    /// Number of classes; defaults to the largest vote + 1 (at least 2).
    #[arg(long)]
    pub num_classes: Option<usize>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct StructureArgs {
    /// Membership JSON written by `subsample` (or any vanilla membership).
    #[arg(long)]
    pub membership: Option<PathBuf>,
    /// Hash bagging with this many sub-classifiers per trainset-hash pair.
    #[arg(long, value_name = "G_HAT")]
    pub pairs: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct BudgetArgs {
    #[arg(long, conflicts_with = "r_ins_frac")]
    pub r_ins: Option<usize>,
    /// Insertions as a fraction of G.
    #[arg(long)]
    pub r_ins_frac: Option<f64>,
    #[arg(long, conflicts_with = "r_del_frac")]
    pub r_del: Option<usize>,
    #[arg(long)]
    pub r_del_frac: Option<f64>,
    #[arg(long, conflicts_with = "r_mod_frac")]
    pub r_mod: Option<usize>,
    #[arg(long)]
    pub r_mod_frac: Option<f64>,
}

fn frac_to_count(frac: f64, g: usize, flag: &str) -> CliResult<usize> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(CliError::Input(format!(
            "{flag} must lie in [0, 1], got {frac}"
        )));
    }
    Ok((frac * g as f64).round() as usize)
}

impl BudgetArgs {
    pub fn resolve(&self, g: usize) -> CliResult<Budget> {
        let pick = |abs: Option<usize>, frac: Option<f64>, flag: &str| match frac {
            Some(f) => frac_to_count(f, g, flag),
            None => Ok(abs.unwrap_or(0)),
        };
        Ok(Budget::new(
            pick(self.r_ins, self.r_ins_frac, "--r-ins-frac")?,
            pick(self.r_del, self.r_del_frac, "--r-del-frac")?,
            pick(self.r_mod, self.r_mod_frac, "--r-mod-frac")?,
        ))
    }
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Seconds of search per target row.
    #[arg(long, default_value_t = 2.0)]
    pub time_per_sample: f64,
    /// Search until optimal.
    #[arg(long, conflicts_with = "time_per_sample")]
    pub no_time_limit: bool,
    /// Cap on branch-and-bound nodes per solve.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Keep rows that cannot break within the budget.
    #[arg(long)]
    pub no_omega_filter: bool,
    #[arg(long, env = "POISON_CERT_THREADS")]
    pub threads: Option<usize>,
}

impl SolverArgs {
    pub fn config(&self) -> CliResult<CertifyConfig> {
        let time_per_sample = if self.no_time_limit {
            None
        } else if self.time_per_sample.is_finite() && self.time_per_sample >= 0.0 {
            Some(Duration::from_secs_f64(self.time_per_sample))
        } else {
            return Err(CliError::Input(format!(
                "invalid --time-per-sample {}",
                self.time_per_sample
            )));
        };
        if self.threads == Some(0) {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        Ok(CertifyConfig {
            time_per_sample,
            node_limit: self.node_limit,
            omega_filter: !self.no_omega_filter,
            threads: self.threads,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Samplewise,
    Collective,
    Decomposed,
}

impl From<Mode> for Method {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Samplewise => Method::SampleWise,
            Mode::Collective => Method::Collective,
            Mode::Decomposed => Method::Decomposed,
        }
    }
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub votes: VotesArgs,
    #[command(flatten)]
    pub structure: StructureArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, value_enum, default_value_t = Mode::Collective)]
    pub mode: Mode,
    /// Sub-testset size for `--mode decomposed`.
    #[arg(long, default_value_t = 5)]
    pub delta: usize,
    /// Ground-truth labels, one integer per test sample.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub votes: VotesArgs,
    #[command(flatten)]
    pub structure: StructureArgs,
    /// Budgets as fractions of G, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "caps",
        conflicts_with = "caps"
    )]
    pub fractions: Vec<f64>,
    /// Budgets as absolute per-pair caps, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub caps: Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "samplewise,collective"
    )]
    pub methods: Vec<Mode>,
    #[arg(long, default_value_t = 5)]
    pub delta: usize,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long)]
    pub membership: PathBuf,
    /// Exact search (default).
    #[arg(long, conflicts_with = "greedy")]
    pub exact: bool,
    /// Greedy cover, an upper estimate.
    #[arg(long)]
    pub greedy: bool,
    /// Largest number of distinct patterns the exact search accepts.
    #[arg(long, default_value_t = poison_cert::bound::DEFAULT_EXACT_PATTERN_CAP)]
    pub pattern_cap: usize,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, required_unless_present = "random")]
    pub votes: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, conflicts_with = "pairs")]
    pub membership: Option<PathBuf>,
    #[arg(long, value_name = "G_HAT")]
    pub pairs: Option<usize>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Also run the exact solver and fail (exit 4) if it disagrees.
    #[arg(long)]
    pub cross_check: bool,
    /// Cross-check this many seeded random instances instead of a file.
    #[arg(long, conflicts_with_all = ["votes", "membership", "pairs"])]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}")))
        }
    }
}

fn parse_int_rows(path: &Path, header: bool) -> CliResult<Vec<Vec<usize>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<usize>().map_err(|_| {
                    CliError::Input(format!(
                        "{}: row {}, column {}: {field:?} is not a non-negative integer",
                        path.display(),
                        line + 1,
                        col + 1
                    ))
                })
            })
            .collect::<CliResult<Vec<usize>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn read_votes(path: &Path, header: bool, num_classes: Option<usize>) -> CliResult<VoteMatrix> {
    let rows = parse_int_rows(path, header)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no vote rows", path.display())));
    }
    Ok(match num_classes {
        Some(c) => VoteMatrix::new(rows[0].len(), c, rows)?,
        None => VoteMatrix::infer(rows, 2)?,
    })
}

pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    Ok(parse_int_rows(path, false)?.into_iter().flatten().collect())
}

fn structure_for(
    membership: Option<&Path>,
    pairs: Option<usize>,
    g: usize,
) -> CliResult<AttackStructure> {
    match (membership, pairs) {
        (Some(path), _) => Ok(AttackStructure::from_membership(Membership::from_json(
            &read_text(path)?,
        )?)),
        (None, Some(g_hat)) => Ok(AttackStructure::Hash(PairStructure::new(g, g_hat)?)),
        (None, None) => Err(CliError::Input(
            "one of --membership or --pairs is required".into(),
        )),
    }
}

fn run_subsample(args: &SubsampleArgs) -> CliResult<()> {
    let text = read_text(&args.dataset)?;
    let records = records_from_lines(text.lines());
    let membership = subsample(&records, args.num_classifiers, args.k)?;
    let mut json = membership.to_json();
    json.push('\n');
    write_output(Some(&args.out), &json)?;
    let pairs = membership
        .pair_structure()
        .expect("hash bagging records its pair structure");
    let sizes = membership.subtrainset_sizes();
    println!(
        "g_hat={} pairs={} min_size={} max_size={}",
        pairs.g_hat(),
        pairs.num_pairs(),
        sizes.iter().min().copied().unwrap_or(0),
        sizes.iter().max().copied().unwrap_or(0)
    );
    Ok(())
}

fn run_certify(args: &CertifyArgs) -> CliResult<()> {
    let votes = read_votes(&args.votes.votes, args.votes.header, args.votes.num_classes)?;
    let g = votes.num_classifiers();
    let structure = structure_for(
        args.structure.membership.as_deref(),
        args.structure.pairs,
        g,
    )?;
    let budget = args.budget.resolve(g)?;
    let labels = args.labels.as_deref().map(read_labels).transpose()?;
    let config = args.solver.config()?;
    let cert = report::run_method(
        &votes,
        &structure,
        budget,
        labels.as_deref(),
        args.mode.into(),
        args.delta,
        &config,
    )?;
    let mut json = serde_json::to_string_pretty(&cert).expect("certificate serializes");
    json.push('\n');
    write_output(args.out.as_deref(), &json)
}

fn run_sweep(args: &SweepArgs) -> CliResult<()> {
    let votes = read_votes(&args.votes.votes, args.votes.header, args.votes.num_classes)?;
    let g = votes.num_classifiers();
    let structure = structure_for(
        args.structure.membership.as_deref(),
        args.structure.pairs,
        g,
    )?;
    let labels = args.labels.as_deref().map(read_labels).transpose()?;
    let config = args.solver.config()?;
    let points: Vec<SweepPoint> = if args.caps.is_empty() {
        args.fractions
            .iter()
            .map(|&f| frac_to_count(f, g, "--fractions").map(|cap| SweepPoint { fraction: f, cap }))
            .collect::<CliResult<_>>()?
    } else {
        args.caps
            .iter()
            .map(|&c| SweepPoint::from_cap(c, g))
            .collect()
    };
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let rows = report::sweep(
        &votes,
        &structure,
        labels.as_deref(),
        &points,
        &methods,
        args.delta,
        &config,
    )?;
    write_output(args.out.as_deref(), &report::to_csv(&rows))
}

fn run_bound(args: &BoundArgs) -> CliResult<()> {
    let membership = Membership::from_json(&read_text(&args.membership)?)?;
    let bound = if args.greedy {
        tolerable_budget_greedy(&membership)
    } else {
        tolerable_budget_exact_with_cap(&membership, args.pattern_cap)?
    };
    let mut out = String::new();
    if let Some(r) = bound.r_bar {
        out.push_str(&format!("r_bar: {r}\n"));
    }
    out.push_str(&format!("r_bar_upper: {}\n", bound.r_bar_upper));
    let witness: Vec<String> = bound.witness.iter().map(ToString::to_string).collect();
    out.push_str(&format!("witness: [{}]\n", witness.join(", ")));
    write_output(None, &out)
}

fn oracle_for(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
) -> CliResult<OracleResult> {
    Ok(match structure {
        AttackStructure::Hash(ps) => brute_force_p2(votes, ps, budget)?,
        AttackStructure::Vanilla(m) => {
            if budget.r_ins > 0 || budget.r_del > 0 {
                return Err(CliError::Input(
                    "vanilla bagging models modifications only; r_ins and r_del must be 0".into(),
                ));
            }
            brute_force_p1(votes, m, budget.r_mod)?
        }
    })
}

/// Exact solver against the oracle on one instance; `Err(Mismatch)` on
/// disagreement.
fn cross_check(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    oracle: usize,
) -> CliResult<()> {
    let cert = certify(votes, structure, budget, None, &CertifyConfig::unlimited())?;
    if cert.attacked_ub != oracle || cert.attacked_incumbent != oracle {
        return Err(CliError::Mismatch(format!(
            "solver reports {} (incumbent {}), oracle {oracle}",
            cert.attacked_ub, cert.attacked_incumbent
        )));
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs) -> CliResult<()> {
    if let Some(n) = args.random {
        let p2_count = n - n / 2;
        let mut cases: Vec<(VoteMatrix, AttackStructure, Budget)> =
            p2_corpus(args.seed, p2_count, 10, 6, 3)
                .into_iter()
                .map(|i| (i.votes, AttackStructure::Hash(i.pairs), i.budget))
                .collect();
        cases.extend(
            p1_corpus(args.seed.wrapping_add(1), n / 2, 10, 6, 12)
                .into_iter()
                .map(|i| {
                    (
                        i.votes,
                        AttackStructure::Vanilla(i.membership),
                        Budget::modifications(i.r_mod),
                    )
                }),
        );
        for (k, (votes, structure, budget)) in cases.iter().enumerate() {
            let oracle = oracle_for(votes, structure, *budget)?.max_changed;
            cross_check(votes, structure, *budget, oracle).map_err(|e| {
                CliError::Mismatch(format!("instance {k} (seed {}): {e}", args.seed))
            })?;
        }
        return write_output(
            None,
            &format!("cross-checked {n} instances: 0 mismatches\n"),
        );
    }

    let path = args
        .votes
        .as_deref()
        .expect("clap requires --votes without --random");
    let votes = read_votes(path, args.header, args.num_classes)?;
    let g = votes.num_classifiers();
    let structure = structure_for(args.membership.as_deref(), args.pairs, g)?;
    let budget = args.budget.resolve(g)?;
    let result = oracle_for(&votes, &structure, budget)?;
    let what = match structure {
        AttackStructure::Hash(_) => "control sub-classifiers",
        AttackStructure::Vanilla(_) => "modify training samples",
    };
    let witness: Vec<String> = result.witness.iter().map(ToString::to_string).collect();
    write_output(
        None,
        &format!(
            "max_changed: {}\nwitness: {what} [{}]\n",
            result.max_changed,
            witness.join(", ")
        ),
    )?;
    if args.cross_check {
        cross_check(&votes, &structure, budget, result.max_changed)?;
        write_output(None, "cross-check: solver agrees\n")?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Subsample(a) => run_subsample(a),
        Command::Certify(a) => run_certify(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Bound(a) => run_bound(a),
        Command::Oracle(a) => run_oracle(a),
    }
}
