//! Command line and config-file handling for `udg run`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use udg_core::harness::{assemble_level, run_case, CaseDefinition, CaseName, ErrorReport, RunOptions, SolverKind};
use udg_core::patches::build_patches;
use udg_core::{ConstraintDomain, CutMesh, SpaceKind, Stabilisation};

#[derive(Parser, Debug)]
#[command(name = "udg", version, about = "Unfitted DG and Trefftz DG solvers on level-set geometries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one experiment on a sequence of uniformly refined meshes and report errors and rates.
    Run(RunArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Experiment to run [default: example1]
    #[arg(long, value_parser = ["example1", "example3", "example4", "patch-test"])]
    pub case: Option<String>,

    /// Ansatz space(s), comma separated [default: dg]
    #[arg(long, value_delimiter = ',', value_parser = ["dg", "trefftz"])]
    pub space: Option<Vec<String>>,

    /// Cut stabilisation(s), comma separated [default: gp]
    #[arg(long, value_delimiter = ',', value_parser = ["gp", "wgp", "agg"])]
    pub stab: Option<Vec<String>>,

    /// Polynomial degree [default: 3 for example1, 2 for example3 and patch-test, 4 for example4]
    #[arg(long)]
    pub k: Option<usize>,

    /// Number of meshes, each halving h [default: 4, or 2 for example4, 1 for patch-test]
    #[arg(long)]
    pub levels: Option<usize>,

    /// Subdivisions per axis of the coarsest mesh [default: 8, or 16 for example4]
    #[arg(long)]
    pub base_n: Option<usize>,

    /// Nitsche and interior penalty parameter [default: 10k²]
    #[arg(long)]
    pub beta: Option<f64>,

    /// Ghost-penalty scaling [default: 0.01; 0.001(α + 2h) for example4; not allowed with agg]
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Quadrature order for assembly and error norms [default: 2k+2]
    #[arg(long)]
    pub quad_order: Option<usize>,

    /// Linear solver [default: direct]
    #[arg(long, value_parser = ["direct", "iterative"])]
    pub solver: Option<String>,

    /// Region for element-local Trefftz constraints [default: full]
    #[arg(long, value_parser = ["full", "cut"])]
    pub constraint_domain: Option<String>,

    /// CSV output file, `-` for standard output [default: none]
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Worker threads; 1 runs serially [default: number of cores]
    #[arg(long)]
    pub threads: Option<usize>,

    /// Record wall times in the seconds column; otherwise it is 0 [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,

    /// Write the finest background mesh as `v x y` / `t i j k` lines [default: none]
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,

    /// Write the finest aggregation patches as CSV [default: none]
    #[arg(long)]
    pub dump_patches: Option<PathBuf>,

    /// Write the finest (reduced) system matrix as `i j value` lines [default: none]
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,

    /// key=value file with the same keys as the long flags; flags take precedence [default: none]
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub case: CaseName,
    pub spaces: Vec<SpaceKind>,
    pub stabs: Vec<Stabilisation>,
    pub k: usize,
    pub levels: usize,
    pub base_n: Option<usize>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub quad_order: Option<usize>,
    pub solver: SolverKind,
    pub constraint_domain: ConstraintDomain,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub timing: bool,
    pub dump_mesh: Option<PathBuf>,
    pub dump_patches: Option<PathBuf>,
    pub dump_matrix: Option<PathBuf>,
}

#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Core(udg_core::Error),
    Io(io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(m) => f.write_str(m),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<udg_core::Error> for RunError {
    fn from(e: udg_core::Error) -> Self {
        match e {
            udg_core::Error::InvalidArgument(m) => RunError::Usage(m),
            udg_core::Error::Run { source, .. } if matches!(*source, udg_core::Error::InvalidArgument(_)) => {
                RunError::from(*source)
            }
            other => RunError::Core(other),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

const KEYS: [&str; 17] = [
    "case",
    "space",
    "stab",
    "k",
    "levels",
    "base-n",
    "beta",
    "gamma",
    "quad-order",
    "solver",
    "constraint-domain",
    "output",
    "threads",
    "timing",
    "dump-mesh",
    "dump-patches",
    "dump-matrix",
];

/// Parse `key = value` lines. `#` starts a comment; values may be JSON
/// literals (quoted strings, numbers, booleans, `null`, string arrays).
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        let key = key.trim().trim_matches('"').replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("config line {}: unknown key '{key}'", lineno + 1));
        }
        let value = normalise_value(value.trim());
        if value != "null" {
            out.insert(key, value);
        }
    }
    Ok(out)
}

fn normalise_value(v: &str) -> String {
    let v = v.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(v);
    v.split(',')
        .map(|item| item.trim().trim_matches('"').to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("invalid value '{v}' for {key}: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, items: &[String]) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if items.is_empty() {
        return Err(format!("{key} must not be empty"));
    }
    items.iter().map(|s| parse_value(key, s)).collect()
}

fn split(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl RunConfig {
    /// Merge flags over the config file (if any) over the defaults.
    pub fn resolve(args: &RunArgs) -> Result<Self, String> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        Self::merge(args, &file)
    }

    pub fn merge(args: &RunArgs, file: &BTreeMap<String, String>) -> Result<Self, String> {
        fn pick<T: std::str::FromStr>(flag: &Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String>
        where
            T: Clone,
            T::Err: fmt::Display,
        {
            match (flag, file.get(key)) {
                (Some(v), _) => Ok(Some(v.clone())),
                (None, Some(s)) => parse_value(key, s).map(Some),
                (None, None) => Ok(None),
            }
        }
        let list = |flag: &Option<Vec<String>>, key: &str| -> Option<Vec<String>> {
            flag.clone().or_else(|| file.get(key).map(|v| split(v)))
        };

        let case: CaseName = parse_value(
            "case",
            args.case.as_deref().or(file.get("case").map(String::as_str)).unwrap_or("example1"),
        )?;
        let defaults = CaseDefinition::new(case);
        let spaces = parse_list("space", &list(&args.space, "space").unwrap_or_else(|| vec!["dg".into()]))?;
        let stabs: Vec<Stabilisation> = parse_list("stab", &list(&args.stab, "stab").unwrap_or_else(|| vec!["gp".into()]))?;
        let k = pick(&args.k, file, "k")?.unwrap_or(defaults.default_k);
        let levels = pick(&args.levels, file, "levels")?.unwrap_or(defaults.default_levels);
        let gamma = pick(&args.gamma, file, "gamma")?;
        let solver = pick(&args.solver, file, "solver")?.unwrap_or_else(|| "direct".into());
        let constraint_domain = match pick(&args.constraint_domain, file, "constraint-domain")?.as_deref() {
            None | Some("full") => ConstraintDomain::FullElement,
            Some("cut") => ConstraintDomain::CutElement,
            Some(other) => return Err(format!("invalid value '{other}' for constraint-domain: expected full or cut")),
        };
        let config = RunConfig {
            case,
            spaces,
            stabs,
            k,
            levels,
            base_n: pick(&args.base_n, file, "base-n")?,
            beta: pick(&args.beta, file, "beta")?,
            gamma,
            quad_order: pick(&args.quad_order, file, "quad-order")?,
            solver: parse_value("solver", &solver)?,
            constraint_domain,
            output: pick(&args.output, file, "output")?,
            threads: pick(&args.threads, file, "threads")?,
            timing: pick(&args.timing, file, "timing")?.unwrap_or(false),
            dump_mesh: pick(&args.dump_mesh, file, "dump-mesh")?,
            dump_patches: pick(&args.dump_patches, file, "dump-patches")?,
            dump_matrix: pick(&args.dump_matrix, file, "dump-matrix")?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        if self.stabs.contains(&Stabilisation::Ag) && self.gamma.is_some_and(|g| g != 0.0) {
            return Err("--stab agg has no ghost penalty in the system matrix; --gamma must not be set".into());
        }
        if self.threads == Some(0) {
            return Err("--threads must be at least 1".into());
        }
        if self.base_n == Some(0) {
            return Err("--base-n must be at least 1".into());
        }
        if self.beta.is_some_and(|b| !(b > 0.0)) {
            return Err("--beta must be positive".into());
        }
        if self.gamma.is_some_and(|g| !(g >= 0.0)) {
            return Err("--gamma must be non-negative".into());
        }
        for opts in self.run_options() {
            opts.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// One option set per (space, stabilisation) combination.
    pub fn run_options(&self) -> Vec<RunOptions> {
        let mut out = Vec::new();
        for &space in &self.spaces {
            for &stab in &self.stabs {
                let mut o = RunOptions::new(space, stab, self.k, self.levels);
                o.base_n = self.base_n;
                o.beta = self.beta;
                o.gamma = self.gamma;
                o.quad_order = self.quad_order;
                o.solver_kind = self.solver;
                o.constraint_domain = self.constraint_domain;
                o.timing = self.timing;
                out.push(o);
            }
        }
        out
    }

    pub fn case_definition(&self) -> CaseDefinition {
        match self.case {
            CaseName::PatchTest => CaseDefinition::patch_test(if self.k >= 3 { 3 } else { 2 }),
            other => CaseDefinition::new(other),
        }
    }
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_dumps(config: &RunConfig, case: &CaseDefinition, opts: &RunOptions) -> Result<(), RunError> {
    if config.dump_mesh.is_none() && config.dump_patches.is_none() && config.dump_matrix.is_none() {
        return Ok(());
    }
    let n = opts.base_n.unwrap_or(case.base_n) << (opts.levels - 1);
    let system = assemble_level(case, opts, n)?;
    if let Some(path) = &config.dump_mesh {
        let mut w = create(path)?;
        system.mesh.write_text(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &config.dump_patches {
        let cut = CutMesh::new(&system.mesh, &system.topology);
        let patches = build_patches(&cut)?;
        let mut w = create(path)?;
        patches.write_csv(&cut, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &config.dump_matrix {
        let mut w = create(path)?;
        system.matrix.to_csr().write_coordinate(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run_all(config: &RunConfig) -> Result<(), RunError> {
    let case = config.case_definition();
    let all_opts = config.run_options();
    let mut report = ErrorReport::default();
    for opts in &all_opts {
        report.extend(run_case(&case, opts)?);
    }
    if let Some(first) = all_opts.first() {
        write_dumps(config, &case, first)?;
    }

    let to_stdout = config.output.as_deref() == Some(Path::new("-"));
    let table = report.table();
    if to_stdout {
        eprint!("{table}");
    } else {
        print!("{table}");
    }
    if config.case == CaseName::PatchTest {
        let max = report.rows.iter().map(|r| r.l2).fold(0.0, f64::max);
        let line = format!("max L2 error: {max:.3e}");
        if to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    match &config.output {
        Some(_) if to_stdout => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write_csv(&mut lock, true)?;
            lock.flush()?;
        }
        Some(path) => {
            let mut w = create(path)?;
            report.write_csv(&mut w, true)?;
            w.flush()?;
        }
        None => {}
    }
    Ok(())
}

pub fn execute(config: &RunConfig) -> Result<(), RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::Usage(format!("cannot start {} threads: {e}", config.threads.unwrap_or(0))))?;
    pool.install(|| run_all(config))
}
