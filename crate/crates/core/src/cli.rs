//! Dataset application, benchmark tables and the `omt` command line.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselinePolicy};
use crate::error::{OmtError, Result};
use crate::eval;
use crate::maximin::{self, MaximinSpec};
use crate::model::{ErrorMeasure, PVector, PowerKind, ProblemSpec};
use crate::normal;
use crate::policy::{DecisionRule, OmtPolicy, PolicyFile};
use crate::quad::QuadConfig;
use crate::solver::{self, SearchConfig, Tolerances};

// ---------------------------------------------------------------- datasets

/// One row of p-values (or z-scores converted by `p = Phi(z)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based line in the input, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub k: usize,
    pub rows: Vec<DatasetRow>,
    pub skipped: Vec<SkippedRow>,
}

/// Reads `id,p1,...,pK` or `id,z1,...,zK`; the header decides which.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().skip(1).collect();
    let z_scores = match cols.first().map(|c| c.to_ascii_lowercase()) {
        Some(c) if c.starts_with('p') => false,
        Some(c) if c.starts_with('z') => true,
        _ => return Err(OmtError::invalid("header must be id,p1,...,pK or id,z1,...,zK")),
    };
    let k = cols.len();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedRow { line, reason: e.to_string() });
                continue;
            }
        };
        if rec.len() != k + 1 {
            skipped.push(SkippedRow { line, reason: format!("expected {} fields, found {}", k + 1, rec.len()) });
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, String> = rec
            .iter()
            .skip(1)
            .map(|s| {
                let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
                let p = if z_scores { normal::cdf(v) } else { v };
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    return Err(format!("p-value {p} outside [0, 1]"));
                }
                Ok(p)
            })
            .collect();
        match parsed {
            Ok(p) => rows.push(DatasetRow { id: rec[0].to_string(), p }),
            Err(reason) => skipped.push(SkippedRow { line, reason }),
        }
    }
    Ok(Dataset { k, rows, skipped })
}

/// A named decision rule.
pub struct Procedure {
    pub name: String,
    pub rule: Box<dyn DecisionRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDecision {
    pub id: String,
    /// 1-based rejected indices, one list per procedure.
    pub rejected: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSummary {
    pub procedure: String,
    pub mean_discoveries: f64,
    pub fraction_any: f64,
    /// `histogram[c]`: rows with `c` discoveries.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosstab {
    pub row_procedure: String,
    pub col_procedure: String,
    /// `counts[a][b]`: rows with `a` discoveries by the first and `b` by the
    /// second procedure.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub format: u32,
    pub k: usize,
    pub procedures: Vec<String>,
    pub rows: Vec<RowDecision>,
    pub skipped: Vec<SkippedRow>,
    pub summary: Vec<ProcedureSummary>,
    pub crosstabs: Vec<Crosstab>,
}

/// Six significant digits, so reports are byte-stable across platforms.
fn sig6(x: f64) -> f64 {
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Applies every procedure to every row and tabulates the discoveries.
pub fn apply(data: &Dataset, procedures: &[Procedure]) -> Result<DiscoveryReport> {
    if procedures.is_empty() {
        return Err(OmtError::invalid("no procedures given"));
    }
    let k = data.k;
    if let Some(p) = procedures.iter().find(|p| p.rule.k() != k) {
        return Err(OmtError::invalid(format!("{} expects k = {}, the data has k = {k}", p.name, p.rule.k())));
    }
    let rows: Vec<RowDecision> = data
        .rows
        .par_iter()
        .map(|row| {
            let u = PVector::new(row.p.clone())?;
            let rejected = procedures.iter().map(|p| p.rule.decide_full(&u).indices().iter().map(|i| i + 1).collect()).collect();
            Ok(RowDecision { id: row.id.clone(), rejected })
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let counts = |j: usize| rows.iter().map(move |r| r.rejected[j].len());
    let summary = procedures
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mut histogram = vec![0; k + 1];
            counts(j).for_each(|c| histogram[c] += 1);
            let total: usize = counts(j).sum();
            let any = n - histogram[0];
            let frac = |x: usize| if n == 0 { 0.0 } else { sig6(x as f64 / n as f64) };
            ProcedureSummary { procedure: p.name.clone(), mean_discoveries: frac(total), fraction_any: frac(any), histogram }
        })
        .collect();
    let mut crosstabs = Vec::new();
    for a in 0..procedures.len() {
        for b in a + 1..procedures.len() {
            let mut t = vec![vec![0; k + 1]; k + 1];
            for r in &rows {
                t[r.rejected[a].len()][r.rejected[b].len()] += 1;
            }
            crosstabs.push(Crosstab {
                row_procedure: procedures[a].name.clone(),
                col_procedure: procedures[b].name.clone(),
                counts: t,
            });
        }
    }
    Ok(DiscoveryReport {
        format: 1,
        k,
        procedures: procedures.iter().map(|p| p.name.clone()).collect(),
        rows,
        skipped: data.skipped.clone(),
        summary,
        crosstabs,
    })
}

impl DiscoveryReport {
    /// `id` then one discovery count per procedure.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(self.procedures.iter().cloned());
        csv.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone()];
            rec.extend(r.rejected.iter().map(|x| x.len().to_string()));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// ------------------------------------------------------------------- bench

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
pub enum BenchTable {
    /// FWER, three hypotheses: Holm and the two OMT policies, each scored on
    /// average and minimal power.
    Fwer3,
    /// FDR, three hypotheses: BH, MABH and OMT on average power.
    Fdr3,
    /// Two hypotheses: Holm / OMT / maximin under FWER, MABH / OMT / maximin
    /// under FDR.
    Maximin2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub theta: f64,
    pub column: String,
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl BenchTable {
    pub fn thetas(self) -> &'static [f64] {
        match self {
            BenchTable::Fwer3 => &[-0.5, -1.33, -2.0],
            BenchTable::Fdr3 => &[-0.35, -0.5, -2.0],
            BenchTable::Maximin2 => &[-0.5, -1.0, -2.0],
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            BenchTable::Fwer3 => &["holm:avg", "omt-avg:avg", "omt-any:avg", "holm:any", "omt-avg:any", "omt-any:any"],
            BenchTable::Fdr3 => &["bh:avg", "mabh:avg", "omt-avg:avg"],
            BenchTable::Maximin2 => &["holm", "omt-fwer", "maximin-fwer", "mabh", "omt-fdr", "maximin-fdr"],
        }
    }
}

fn bench_row(table: BenchTable, theta: f64, alpha: f64, cfg: &QuadConfig, search: &SearchConfig) -> Result<Vec<f64>> {
    let solve = |spec: ProblemSpec| -> Result<OmtPolicy> { Ok(solver::solve_mu(&spec, cfg, search)?.policy()) };
    let scores = |rule: &dyn DecisionRule| -> Result<(f64, f64)> {
        let r = eval::power(rule, &vec![theta; rule.k()], cfg)?;
        Ok((r.avg_power, r.any_power))
    };
    match table {
        BenchTable::Fwer3 => {
            let holm = scores(&BaselinePolicy::new(BaselineKind::Holm, 3, alpha)?)?;
            let avg = scores(&solve(ProblemSpec::avg(3, alpha, ErrorMeasure::Fwer, theta))?)?;
            let any = scores(&solve(ProblemSpec::any(3, alpha, ErrorMeasure::Fwer, theta))?)?;
            Ok(vec![holm.0, avg.0, any.0, holm.1, avg.1, any.1])
        }
        BenchTable::Fdr3 => {
            let bh = scores(&BaselinePolicy::new(BaselineKind::BH, 3, alpha)?)?;
            let mabh = scores(&BaselinePolicy::new(BaselineKind::MABH, 3, alpha)?)?;
            let omt = solver::solve_mu(&ProblemSpec::avg(3, alpha, ErrorMeasure::Fdr, theta), cfg, search)?;
            Ok(vec![bh.0, mabh.0, omt.objective])
        }
        BenchTable::Maximin2 => {
            let mut out = Vec::with_capacity(6);
            for (measure, base) in [(ErrorMeasure::Fwer, BaselineKind::Holm), (ErrorMeasure::Fdr, BaselineKind::MABH)] {
                out.push(scores(&BaselinePolicy::new(base, 2, alpha)?)?.0);
                let spec = ProblemSpec::avg(2, alpha, measure, theta);
                out.push(solver::solve_mu(&spec, cfg, search)?.objective);
                let (_, curve) = maximin::find_theta_a(&MaximinSpec::new(spec)?, cfg, search)?;
                out.push(curve.iter().map(|p| p.power).fold(f64::INFINITY, f64::min));
            }
            Ok(out)
        }
    }
}

/// Computes one benchmark table. A failing row is recorded in its cells and
/// the run continues.
pub fn bench(table: BenchTable, alpha: f64, cfg: &QuadConfig, search: &SearchConfig) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &theta in table.thetas() {
        let row = bench_row(table, theta, alpha, cfg, search);
        for (j, col) in table.columns().iter().enumerate() {
            let (value, error) = match &row {
                Ok(v) => (Some(v[j]), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(BenchCell { theta, column: col.to_string(), value, error });
        }
    }
    cells
}

/// The table laid out one row per theta.
pub fn write_bench_csv<W: Write>(table: BenchTable, cells: &[BenchCell], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["theta".to_string()];
    header.extend(table.columns().iter().map(|c| c.to_string()));
    csv.write_record(&header)?;
    let mut by_theta: BTreeMap<i64, Vec<&BenchCell>> = BTreeMap::new();
    for c in cells {
        by_theta.entry((-c.theta * 1e6).round() as i64).or_default().push(c);
    }
    for row in by_theta.values() {
        let mut rec = vec![row[0].theta.to_string()];
        rec.extend(row.iter().map(|c| c.value.map_or("NA".to_string(), |v| format!("{v:.4}"))));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

// --------------------------------------------------------------------- CLI

#[derive(Debug, Parser)]
#[command(name = "omt", version, about = "Optimal multiple testing for exchangeable normal means")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuadArg {
    Line,
    Grid,
    Qmc,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorArg {
    Fwer,
    Fdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerArg {
    Avg,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcedureArg {
    Omt,
    Maximin,
    Holm,
    Sidak,
    Bh,
    Mabh,
    ClosedStouffer,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "fwer")]
    pub error: ErrorArg,
    #[arg(long, value_enum, default_value = "avg")]
    pub power: PowerArg,
    /// Number of false nulls in the average-power objective (default k).
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub theta_obj: f64,
    /// Signal in the constraints (default: same as the objective).
    #[arg(long, allow_negative_numbers = true)]
    pub theta_con: Option<f64>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "line")]
    pub quad: QuadArg,
    /// Nodes per axis for line and grid quadrature.
    #[arg(long, default_value_t = 128)]
    pub grid_n: usize,
    /// Samples for qmc and mc.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feasibility and slackness tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    pub fn spec(&self) -> ProblemSpec {
        let error = match self.error {
            ErrorArg::Fwer => ErrorMeasure::Fwer,
            ErrorArg::Fdr => ErrorMeasure::Fdr,
        };
        let power = match self.power {
            PowerArg::Avg => PowerKind::Avg,
            PowerArg::Any => PowerKind::Any,
        };
        ProblemSpec {
            k: self.k,
            alpha: self.alpha,
            error,
            power,
            l: self.l,
            theta_obj: self.theta_obj,
            theta_con: self.theta_con.unwrap_or(self.theta_obj),
        }
    }

    pub fn quad(&self) -> QuadConfig {
        let seed = self.seed.unwrap_or(0);
        match self.quad {
            QuadArg::Line => QuadConfig::line(self.grid_n),
            QuadArg::Grid => QuadConfig::grid(self.grid_n),
            QuadArg::Qmc => QuadConfig::qmc(self.mc_n, seed),
            QuadArg::Mc => QuadConfig::mc(self.mc_n, seed),
        }
    }

    pub fn search(&self) -> SearchConfig {
        let mut s = SearchConfig::default();
        if let Some(t) = self.tol {
            s.tol = Tolerances { feas: t, solve: t, ..s.tol };
        }
        s.seed = self.seed;
        s
    }
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    /// Procedure to evaluate; omt and maximin read --policy.
    #[arg(long, value_enum, default_value = "omt")]
    pub procedure: ProcedureArg,
    /// Policy JSON written by `solve` or `maximin`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal multipliers; writes the report and the policy.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Search the maximin constraint signal and certify the policy.
    Maximin {
        #[command(flatten)]
        common: Common,
    },
    /// Power and error rates of a procedure.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rule: RuleArgs,
        /// Shift of every false null; overrides --theta-obj.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        thetas: Option<Vec<f64>>,
    },
    /// Rejection counts on the plane through the smallest p-value.
    Slice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        u1: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
    },
    /// Apply procedures to a CSV of p-values or z-scores.
    Apply {
        #[command(flatten)]
        common: Common,
        /// Input CSV with header id,p1,...,pK or id,z1,...,zK.
        #[arg(long)]
        data: PathBuf,
        /// Procedures, comma separated.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "holm,closed-stouffer")]
        procedures: Vec<ProcedureArg>,
        /// Policy JSON for omt/maximin entries.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Reproduce a benchmark table as CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        table: BenchTable,
    },
}

fn load_policy(path: Option<&Path>) -> Result<OmtPolicy> {
    let path = path.ok_or_else(|| OmtError::invalid("--policy is required for omt and maximin"))?;
    PolicyFile::load(path)?.policy()
}

fn procedure(arg: ProcedureArg, k: usize, alpha: f64, policy: Option<&Path>) -> Result<Procedure> {
    let base = |kind: BaselineKind| -> Result<Procedure> { Ok(Procedure { name: kind.to_string(), rule: Box::new(BaselinePolicy::new(kind, k, alpha)?) }) };
    match arg {
        ProcedureArg::Omt | ProcedureArg::Maximin => {
            let p = load_policy(policy)?;
            let name = if arg == ProcedureArg::Maximin { "maximin".to_string() } else { "omt".to_string() };
            Ok(Procedure { name, rule: Box::new(p) })
        }
        ProcedureArg::Holm => base(BaselineKind::Holm),
        ProcedureArg::Sidak => base(BaselineKind::SidakStepDown),
        ProcedureArg::Bh => base(BaselineKind::BH),
        ProcedureArg::Mabh => base(BaselineKind::MABH),
        ProcedureArg::ClosedStouffer => base(BaselineKind::ClosedStouffer),
    }
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) if dir.is_dir() => std::fs::write(dir.join(name), text)?,
        Some(file) => std::fs::write(file, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Runs the command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { common } => {
            init_threads(&common);
            let report = solver::solve_mu(&common.spec(), &common.quad(), &common.search())?;
            let out = common.out.as_deref();
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("policy.json"), report.policy().to_file(report.solver_meta()).to_json()?)?;
                std::fs::write(dir.join("report.json"), report.to_json()?)?;
            } else {
                println!("{}", report.to_json()?);
            }
            eprintln!(
                "mu = {:?}, objective = {:.5}, gap = {:.2e}, residual = {:.2e}",
                report.mu_star.as_slice(),
                report.objective,
                report.duality_gap,
                report.residual_norm
            );
            if !(report.duality_gap <= report.tolerances.gap) {
                return Err(OmtError::Certificate(format!(
                    "duality gap {:.3e} above {:.1e}",
                    report.duality_gap, report.tolerances.gap
                )));
            }
            Ok(0)
        }
        Command::Maximin { common } => {
            init_threads(&common);
            let spec = MaximinSpec::new(common.spec())?;
            let report = maximin::maximin(&spec, &common.quad(), &common.search())?;
            if let Some(dir) = common.out.as_deref() {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("maximin.json"), report.to_json()?)?;
                std::fs::write(dir.join("policy.json"), report.policy_file()?.to_json()?)?;
            } else {
                println!("{}", report.to_json()?);
            }
            eprintln!("theta_A = {:.4}, power = {:.5}, certified = {}", report.theta_a, report.min_power, report.certified);
            if !report.certified {
                return Err(OmtError::Certificate("verification grids found a violation".into()));
            }
            Ok(0)
        }
        Command::Eval { common, rule, thetas } => {
            init_threads(&common);
            let p = procedure(rule.procedure, common.k, common.alpha, rule.policy.as_deref())?;
            let thetas = thetas.unwrap_or_else(|| vec![common.theta_obj; p.rule.k()]);
            let report = eval::power(p.rule.as_ref(), &thetas, &common.quad())?;
            emit(common.out.as_deref(), "eval.json", &serde_json::to_string_pretty(&report)?)?;
            Ok(0)
        }
        Command::Slice { common, rule, u1, n } => {
            init_threads(&common);
            let p = procedure(rule.procedure, common.k, common.alpha, rule.policy.as_deref())?;
            let slice = eval::region_slice(p.rule.as_ref(), u1, n)?;
            let mut buf = Vec::new();
            slice.write_csv(&mut buf)?;
            emit(common.out.as_deref(), "slice.csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
            Ok(0)
        }
        Command::Apply { common, data, procedures, policy } => {
            init_threads(&common);
            let ds = read_dataset(std::fs::File::open(&data)?)?;
            let procs = procedures
                .iter()
                .map(|&a| procedure(a, ds.k, common.alpha, policy.as_deref()))
                .collect::<Result<Vec<_>>>()?;
            let report = apply(&ds, &procs)?;
            match common.out.as_deref() {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("discoveries.json"), report.to_json()?)?;
                    report.write_csv(std::fs::File::create(dir.join("discoveries.csv"))?)?;
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
            for s in &report.summary {
                eprintln!("{}: mean discoveries {}, any {}", s.procedure, s.mean_discoveries, s.fraction_any);
            }
            if !report.skipped.is_empty() {
                eprintln!("skipped {} malformed rows", report.skipped.len());
            }
            Ok(0)
        }
        Command::Bench { common, table } => {
            init_threads(&common);
            let cells = bench(table, common.alpha, &common.quad(), &common.search());
            let mut buf = Vec::new();
            write_bench_csv(table, &cells, &mut buf)?;
            emit(common.out.as_deref(), "bench.csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
            for c in cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("theta {} {}: {}", c.theta, c.column, c.error.as_deref().unwrap_or_default());
            }
            Ok(0)
        }
    }
}

fn init_threads(common: &Common) {
    if let Some(n) = common.threads {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Entry point shared by the binary: parses, runs and maps errors to exit
/// codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_p_and_z_files() {
        let d = read_dataset("id,p1,p2,p3\na,0.01,0.2,0.5\nb,0.1,x,0.3\nc,0.1,0.2\n".as_bytes()).unwrap();
        assert_eq!(d.k, 3);
        assert_eq!(d.rows.len(), 1);
        assert_eq!(d.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), vec![3, 4]);
        let z = read_dataset("id,z1,z2\nr,0,-1.6448536269514729\n".as_bytes()).unwrap();
        assert!((z.rows[0].p[0] - 0.5).abs() < 1e-15 && (z.rows[0].p[1] - 0.05).abs() < 1e-12);
        assert!(read_dataset("id,q1\nr,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn apply_margins_match_histograms() {
        let mut text = String::from("id,p1,p2,p3\n");
        for i in 0..200 {
            let f = |j: usize| ((i * 37 + j * 101) % 997) as f64 / 997.0 * 0.2 + 1e-4;
            text += &format!("r{i},{},{},{}\n", f(0), f(1), f(2));
        }
        let ds = read_dataset(text.as_bytes()).unwrap();
        let procs: Vec<Procedure> = [BaselineKind::Holm, BaselineKind::BH, BaselineKind::ClosedStouffer]
            .into_iter()
            .map(|b| Procedure { name: b.to_string(), rule: Box::new(BaselinePolicy::new(b, 3, 0.05).unwrap()) })
            .collect();
        let rep = apply(&ds, &procs).unwrap();
        assert_eq!(rep.crosstabs.len(), 3);
        for t in &rep.crosstabs {
            let a = rep.procedures.iter().position(|p| *p == t.row_procedure).unwrap();
            let b = rep.procedures.iter().position(|p| *p == t.col_procedure).unwrap();
            let rows: Vec<usize> = t.counts.iter().map(|r| r.iter().sum()).collect();
            let cols: Vec<usize> = (0..4).map(|j| t.counts.iter().map(|r| r[j]).sum()).collect();
            assert_eq!(rows, rep.summary[a].histogram);
            assert_eq!(cols, rep.summary[b].histogram);
            assert_eq!(rows.iter().sum::<usize>(), 200);
        }
    }

    #[test]
    fn null_row_has_no_discoveries() {
        let ds = read_dataset("id,p1,p2,p3\nx,0.5,0.5,0.5\n".as_bytes()).unwrap();
        let procs: Vec<Procedure> = BaselineKind::ALL
            .into_iter()
            .map(|b| Procedure { name: b.to_string(), rule: Box::new(BaselinePolicy::new(b, 3, 0.05).unwrap()) })
            .collect();
        let rep = apply(&ds, &procs).unwrap();
        assert!(rep.rows[0].rejected.iter().all(|r| r.is_empty()));
    }

    #[test]
    fn k_mismatch_is_fatal() {
        let ds = read_dataset("id,p1,p2\nx,0.5,0.5\n".as_bytes()).unwrap();
        let procs = vec![Procedure { name: "holm".into(), rule: Box::new(BaselinePolicy::new(BaselineKind::Holm, 3, 0.05).unwrap()) }];
        assert!(apply(&ds, &procs).is_err());
        assert!(apply(&ds, &[]).is_err());
    }

    #[test]
    fn parses_shared_flags() {
        let cli = Cli::try_parse_from(["omt", "solve", "--k", "2", "--error", "fdr", "--theta-obj", "-1", "--theta-con", "-1.5"]).unwrap();
        let Command::Solve { common } = cli.command else { panic!("wrong subcommand") };
        let s = common.spec();
        assert_eq!((s.k, s.error, s.theta_obj, s.theta_con), (2, ErrorMeasure::Fdr, -1.0, -1.5));
        assert!(Cli::try_parse_from(["omt", "bench"]).is_err());
    }
}
