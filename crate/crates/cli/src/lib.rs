//! Command-line front end for `urn-search`.
//!
//! [`run`] parses arguments and executes one command, returning the exit
//! code and everything to print. `main` only forwards to it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use urn_search::optimizer::{
    optimal_block_enum, optimal_full_enum, optimize_auto, rank_policies, OptimizationResult,
};
use urn_search::{
    expected_cost, simulate, trace, AtomicOutcome, BlockPolicy, Error, Policy, PriorKind, Problem,
    ProblemFile, UrnSet, ValidProblem, DEFAULT_BLOCK_CAP, DEFAULT_FULL_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAP: i32 = 3;

/// Result of one command: exit code, stdout text and stderr text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutcome {
    fn ok(stdout: String) -> Self {
        CommandOutcome {
            exit_code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(exit_code: i32, stderr: String) -> Self {
        CommandOutcome {
            exit_code,
            stdout: String::new(),
            stderr,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "urnsearch",
    version,
    about = "Optimal search over urns with correlated priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a problem file for prior consistency.
    Validate(Common),
    /// Exact expected cost of a policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Find an optimal block policy.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        /// Maximum number of candidates to enumerate.
        #[arg(long)]
        cap: Option<u128>,
    },
    /// Posterior summaries at every stage of a policy.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Monte Carlo estimate of a policy's cost.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank every interleaved policy and check that a block policy is optimal.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Only list the best `k` policies.
        #[arg(long)]
        top: Option<usize>,
        /// Maximum number of policies to enumerate.
        #[arg(long)]
        cap: Option<u128>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Problem file (JSON).
    file: PathBuf,
    /// Print a machine-readable JSON document instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Comma-separated urn ids: a block order, or a full draw sequence with --full.
    #[arg(long)]
    policy: String,
    /// Read --policy as a full draw sequence.
    #[arg(long)]
    full: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Auto,
    Sorted,
    BlockEnum,
    FullEnum,
}

/// A failed command: exit code and message.
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CapExceeded { .. } => EXIT_CAP,
            Error::InvalidModel(_) => EXIT_INVALID,
            _ => EXIT_USAGE,
        };
        Failure(code, e.to_string())
    }
}

/// Exit code and stdout text of a command that ran to completion.
type CmdResult = Result<(i32, String), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                CommandOutcome::fail(EXIT_USAGE, text)
            } else {
                CommandOutcome::ok(text)
            };
        }
    };
    let result = match cli.command {
        Command::Validate(common) => cmd_validate(&common),
        Command::Eval { common, policy } => cmd_eval(&common, &policy),
        Command::Optimize {
            common,
            method,
            cap,
        } => cmd_optimize(&common, method, cap),
        Command::Trace { common, policy } => cmd_trace(&common, &policy),
        Command::Simulate {
            common,
            policy,
            trials,
            seed,
        } => cmd_simulate(&common, &policy, trials, seed),
        Command::Oracle { common, top, cap } => cmd_oracle(&common, top, cap),
    };
    match result {
        Ok((exit_code, stdout)) => CommandOutcome {
            exit_code,
            stdout,
            stderr: String::new(),
        },
        Err(Failure(code, msg)) => CommandOutcome::fail(code, format!("error: {msg}\n")),
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn load(path: &Path) -> Result<Problem, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))?;
    let file = ProblemFile::from_json(&text)
        .map_err(|e| Failure(EXIT_USAGE, format!("malformed problem file: {e}")))?;
    Ok(file.build()?)
}

fn load_valid(path: &Path) -> Result<ValidProblem, Failure> {
    let problem = load(path)?;
    let report = problem.validate();
    if !report.is_valid() {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("  {}", v.describe(&problem)))
            .collect();
        return Err(Failure(
            EXIT_INVALID,
            format!("prior model is inconsistent:\n{}", lines.join("\n")),
        ));
    }
    Ok(problem.validated()?)
}

fn parse_policy(problem: &ValidProblem, args: &PolicyArgs) -> Result<Policy, Failure> {
    if args.full {
        Ok(Policy::parse(problem, &args.policy)?)
    } else {
        Ok(BlockPolicy::parse(problem, &args.policy)?.expand(problem))
    }
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn labels<'a>(problem: &'a Problem, sequence: &[usize]) -> Vec<&'a str> {
    sequence.iter().map(|&u| problem.label(u)).collect()
}

fn set_labels(problem: &Problem, set: UrnSet) -> Vec<&str> {
    set.iter().map(|u| problem.label(u)).collect()
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Left-aligned first column, right-aligned rest.
fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, &w))| {
                if k == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn warnings_text(warnings: &[String]) -> String {
    warnings.iter().map(|w| format!("warning: {w}\n")).collect()
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_validate(common: &Common) -> CmdResult {
    let problem = load(&common.file)?;
    let report = problem.validate();
    let violations: Vec<String> = report
        .violations
        .iter()
        .map(|v| v.describe(&problem))
        .collect();
    let warnings: Vec<String> = report
        .warnings
        .iter()
        .map(|w| w.describe(&problem))
        .collect();
    let valid = report.is_valid();
    let atomic: Vec<AtomicOutcome> = if valid {
        problem.clone().validated()?.atomic_outcomes()
    } else {
        Vec::new()
    };

    let out = if common.json {
        let atomic: Vec<Value> = atomic
            .iter()
            .map(|a| json!({"urns": set_labels(&problem, a.subset), "probability": a.probability}))
            .collect();
        pretty(&json!({
            "valid": valid,
            "violations": violations,
            "warnings": warnings,
            "atomic": atomic,
        }))
    } else if valid {
        let rows: Vec<Vec<String>> = atomic
            .iter()
            .map(|a| vec![problem.describe_set(a.subset), num(a.probability)])
            .collect();
        let header = ["placement".to_string(), "probability".to_string()];
        format!(
            "valid\n{}{}",
            warnings_text(&warnings),
            table(&header, &rows)
        )
    } else {
        let mut s = String::from("invalid\n");
        for v in &violations {
            s.push_str(&format!("violation: {v}\n"));
        }
        s.push_str(&warnings_text(&warnings));
        s
    };
    Ok((if valid { EXIT_OK } else { EXIT_INVALID }, out))
}

fn cmd_eval(common: &Common, args: &PolicyArgs) -> CmdResult {
    let problem = load_valid(&common.file)?;
    let policy = parse_policy(&problem, args)?;
    let report = expected_cost(&problem, &policy)?;
    let seq = policy.sequence();
    if common.json {
        return Ok((
            EXIT_OK,
            pretty(&json!({
                "policy": labels(&problem, seq),
                "block": policy.is_block(),
                "expected_cost": report.expected_cost,
                "survival_curve": report.survival_curve,
                "stage_red_probs": report.stage_red_probs,
                "unreachable_from": report.unreachable_from,
            })),
        ));
    }
    let rows: Vec<Vec<String>> = seq
        .iter()
        .enumerate()
        .map(|(t, &u)| {
            vec![
                t.to_string(),
                problem.label(u).to_string(),
                num(report.stage_red_probs[t]),
                num(report.survival_curve[t]),
            ]
        })
        .collect();
    let header = ["stage", "urn", "p_red", "survival"].map(String::from);
    let mut out = format!(
        "policy: {}{}\nexpected cost: {}\n",
        policy.to_text(&problem),
        if policy.is_block() { " (block)" } else { "" },
        num(report.expected_cost)
    );
    if let Some(t) = report.unreachable_from {
        out.push_str(&format!(
            "a red marble is certain to be found before stage {t}\n"
        ));
    }
    out.push_str(&table(&header, &rows));
    Ok((EXIT_OK, out))
}

fn cmd_optimize(common: &Common, method: MethodArg, cap: Option<u128>) -> CmdResult {
    let problem = load_valid(&common.file)?;
    let block_cap = cap.unwrap_or(DEFAULT_BLOCK_CAP);
    let result: OptimizationResult = match method {
        MethodArg::Auto => optimize_auto(&problem, block_cap)?,
        MethodArg::Sorted => match problem.kind() {
            PriorKind::General => {
                return Err(Failure(
                    EXIT_USAGE,
                    "the sorted method needs an independent or single-marble prior".into(),
                ))
            }
            _ => optimize_auto(&problem, block_cap)?,
        },
        MethodArg::BlockEnum => optimal_block_enum(&problem, block_cap)?,
        MethodArg::FullEnum => optimal_full_enum(&problem, cap.unwrap_or(DEFAULT_FULL_CAP))?,
    };
    let policy_text = match &result.best_block {
        Some(b) => b.to_text(&problem),
        None => result.best_policy.to_text(&problem),
    };
    if common.json {
        return Ok((
            EXIT_OK,
            pretty(&json!({
                "ordering": result.best_block.as_ref().map(|b| labels(&problem, b.order())),
                "policy": labels(&problem, result.best_policy.sequence()),
                "expected_cost": result.expected_cost,
                "method": result.method.as_str(),
                "ties": result.ties,
                "ties_exact": result.ties_exact,
                "block_certified": result.block_certified,
                "warnings": result.warnings,
            })),
        ));
    }
    let mut out = format!(
        "ordering: {policy_text}\nexpected cost: {}\nmethod: {}\nties: {}{}\n",
        num(result.expected_cost),
        result.method,
        result.ties,
        if result.ties_exact { "" } else { " (at least)" }
    );
    if let Some(certified) = result.block_certified {
        out.push_str(&format!(
            "block policy optimal: {}\n",
            if certified { "yes" } else { "no" }
        ));
    }
    out.push_str(&warnings_text(&result.warnings));
    Ok((EXIT_OK, out))
}

fn cmd_trace(common: &Common, args: &PolicyArgs) -> CmdResult {
    let problem = load_valid(&common.file)?;
    let policy = parse_policy(&problem, args)?;
    let rows = trace(&problem, &policy)?;
    let n = problem.urn_count();
    if common.json {
        let rows: Vec<Value> = rows
            .iter()
            .map(|r| {
                let pairs = r.pair_joints.as_ref().map(|ps| {
                    ps.iter()
                        .map(|&(i, j, p)| {
                            json!({"urns": [problem.label(i), problem.label(j)], "probability": p})
                        })
                        .collect::<Vec<_>>()
                });
                json!({
                    "stage": r.stage,
                    "drawn": r.drawn,
                    "survival": r.survival,
                    "marginals": r.marginals,
                    "pair_joints": pairs,
                    "next_urn": r.next_urn.map(|u| problem.label(u)),
                    "p_red": r.p_red,
                })
            })
            .collect();
        return Ok((
            EXIT_OK,
            pretty(&json!({
                "policy": labels(&problem, policy.sequence()),
                "urns": (0..n).map(|i| problem.label(i)).collect::<Vec<_>>(),
                "rows": rows,
            })),
        ));
    }
    let mut header = vec!["stage".to_string(), "drawn".into(), "survival".into()];
    header.extend((0..n).map(|i| format!("P({})", problem.label(i))));
    let pair_names: Vec<String> = rows
        .iter()
        .find_map(|r| r.pair_joints.as_ref())
        .map(|ps| {
            ps.iter()
                .map(|&(i, j, _)| format!("P({},{})", problem.label(i), problem.label(j)))
                .collect()
        })
        .unwrap_or_default();
    header.extend(pair_names.iter().cloned());
    header.push("next".into());
    header.push("p_red".into());
    let dash = || "-".to_string();
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let drawn: Vec<String> = r.drawn.iter().map(u32::to_string).collect();
            let mut row = vec![r.stage.to_string(), drawn.join(","), num(r.survival)];
            match &r.marginals {
                Some(m) => row.extend(m.iter().map(|&p| num(p))),
                None => row.extend((0..n).map(|_| dash())),
            }
            match &r.pair_joints {
                Some(ps) => row.extend(ps.iter().map(|&(_, _, p)| num(p))),
                None => row.extend(pair_names.iter().map(|_| dash())),
            }
            row.push(
                r.next_urn
                    .map_or_else(dash, |u| problem.label(u).to_string()),
            );
            row.push(r.p_red.map_or_else(dash, num));
            row
        })
        .collect();
    Ok((
        EXIT_OK,
        format!(
            "policy: {}\n{}",
            policy.to_text(&problem),
            table(&header, &table_rows)
        ),
    ))
}

fn cmd_simulate(common: &Common, args: &PolicyArgs, trials: u64, seed: u64) -> CmdResult {
    let problem = load_valid(&common.file)?;
    let policy = parse_policy(&problem, args)?;
    let analytic = expected_cost(&problem, &policy)?.expected_cost;
    let report = simulate(&problem, &policy, trials, seed)?;
    let gap = report.mean_cost - analytic;
    let z = if report.std_error > 0.0 {
        Some(gap / report.std_error)
    } else if gap == 0.0 {
        Some(0.0)
    } else {
        None
    };
    if common.json {
        let histogram: Vec<Value> = report
            .histogram
            .iter()
            .map(|(&cost, &count)| json!({"cost": cost, "count": count}))
            .collect();
        return Ok((
            EXIT_OK,
            pretty(&json!({
                "policy": labels(&problem, policy.sequence()),
                "trials": report.trials,
                "seed": report.seed,
                "mean_cost": report.mean_cost,
                "std_error": report.std_error,
                "found_rate": report.found_rate,
                "histogram": histogram,
                "analytic_cost": analytic,
                "z_score": z,
            })),
        ));
    }
    let rows: Vec<Vec<String>> = report
        .histogram
        .iter()
        .map(|(&cost, &count)| {
            vec![
                cost.to_string(),
                count.to_string(),
                num(count as f64 / trials as f64),
            ]
        })
        .collect();
    let header = ["cost", "trials", "fraction"].map(String::from);
    Ok((EXIT_OK, format!(
        "policy: {}\ntrials: {}\nseed: {}\nmean cost: {}\nstd error: {}\nfound rate: {}\nanalytic cost: {}\nz-score: {}\n{}",
        policy.to_text(&problem),
        report.trials,
        report.seed,
        num(report.mean_cost),
        num(report.std_error),
        num(report.found_rate),
        num(analytic),
        z.map_or_else(|| "undefined".to_string(), |z| format!("{z:.3}")),
        table(&header, &rows)
    )))
}

fn cmd_oracle(common: &Common, top: Option<usize>, cap: Option<u128>) -> CmdResult {
    let problem = load_valid(&common.file)?;
    let ranked = rank_policies(&problem, cap.unwrap_or(DEFAULT_FULL_CAP))?;
    let certified = ranked.first().is_some_and(|r| r.is_block);
    let total = ranked.len();
    let shown = &ranked[..top.unwrap_or(total).min(total)];
    let out = if common.json {
        let rows: Vec<Value> = shown
            .iter()
            .enumerate()
            .map(|(k, r)| {
                json!({
                    "rank": k + 1,
                    "policy": labels(&problem, r.policy.sequence()),
                    "expected_cost": r.expected_cost,
                    "block": r.is_block,
                    "optimal": r.optimal,
                })
            })
            .collect();
        pretty(&json!({
            "policies": total,
            "block_optimal": certified,
            "ranked": rows,
        }))
    } else {
        let rows: Vec<Vec<String>> = shown
            .iter()
            .enumerate()
            .map(|(k, r)| {
                vec![
                    (k + 1).to_string(),
                    r.policy.to_text(&problem),
                    num(r.expected_cost),
                    if r.is_block { "yes" } else { "no" }.to_string(),
                    if r.optimal { "*" } else { "" }.to_string(),
                ]
            })
            .collect();
        let header = ["rank", "policy", "cost", "block", "optimal"].map(String::from);
        format!(
            "{total} {} enumerated\n{}block policy optimal: {}\n",
            if total == 1 { "policy" } else { "policies" },
            table(&header, &rows),
            if certified { "yes" } else { "no" }
        )
    };
    Ok((if certified { EXIT_OK } else { EXIT_INVALID }, out))
}
