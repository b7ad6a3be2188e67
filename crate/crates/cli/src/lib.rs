//! The `sim` command: run, compare, audit, and validate scenario files.

use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use prepaid_core::report::{
    audit_comparison_text, comparison_csv, comparison_text, ledger_csv, run_report_csv,
    run_report_text, trace_csv,
};
use prepaid_core::scenario::{parse_scenario, Diagnostic, Scenario};
use prepaid_core::schemes::SchemeKind;
use prepaid_core::simulation::{
    audit_policies, compare_schemes, run_scenario, RunOptions, SetupError,
};
use prepaid_core::topup::parse_voucher_batch;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCENARIO: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sim", version, about = "Prepaid mobile charging simulator")]
pub struct Cli {
    /// Override the random workload seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Tab-separated voucher batch (CODE<TAB>FACE_VALUE) to issue before the run.
    #[arg(long, global = true, value_name = "FILE")]
    pub vouchers: Option<PathBuf>,
    /// Seconds between a hot-billing call ending and its CDR being charged.
    #[arg(long, global = true, default_value_t = 0)]
    pub cdr_latency: u64,
    /// MSISDN whose SIM skips decrements (repeatable).
    #[arg(long = "tamper", global = true, value_name = "MSISDN")]
    pub tampered: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write cdrs.csv, ledger.csv, report.txt, report.csv, trace.csv.
    Run {
        file: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
        /// Put every call on one scheme (IN, SN, HB, HS).
        #[arg(long)]
        scheme: Option<SchemeKind>,
    },
    /// Run the workload once per charging scheme and tabulate the results.
    Compare {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run with the ID requirement off and then on.
    Audit { file: PathBuf },
    /// Parse and check references without simulating.
    Validate { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Self {
        let color = std::env::var_os("SIM_NO_COLOR").is_none() && io::stdout().is_terminal();
        Self { color }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_owned()
        }
    }

    fn bold(&self, text: &str) -> String {
        self.paint("1", text)
    }

    fn red(&self, text: &str) -> String {
        self.paint("31", text)
    }
}

/// A failed command: exit code plus what to print on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub lines: Vec<String>,
}

impl Failure {
    fn scenario(lines: Vec<String>) -> Self {
        Self {
            code: EXIT_SCENARIO,
            lines,
        }
    }
}

fn diagnostics(path: &Path, diags: &[Diagnostic]) -> Vec<String> {
    diags
        .iter()
        .map(|d| format!("{}: {d}", path.display()))
        .collect()
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::scenario(vec![format!("{}: {e}", path.display())]))
}

fn setup_failure(path: &Path, e: SetupError) -> Failure {
    match e {
        SetupError::Invalid(d) => Failure::scenario(diagnostics(path, &d)),
        other => Failure::scenario(vec![format!("{}: error: {other}", path.display())]),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario, Failure> {
    let mut scenario =
        parse_scenario(&read(path)?).map_err(|d| Failure::scenario(diagnostics(path, &d)))?;
    if let Some(seed) = cli.seed {
        scenario.override_seed(seed);
    }
    if let Some(batch) = &cli.vouchers {
        let parsed = parse_voucher_batch(&read(batch)?).map_err(|errs| {
            Failure::scenario(
                errs.iter()
                    .map(|e| format!("{}: line {}: error: {}", batch.display(), e.line, e.message))
                    .collect(),
            )
        })?;
        scenario.vouchers.extend(parsed);
    }
    Ok(scenario)
}

fn options(cli: &Cli) -> RunOptions {
    RunOptions {
        cdr_latency: cli.cdr_latency,
        tampered_sims: cli.tampered.clone(),
        ..RunOptions::default()
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::scenario(vec![format!("{}: {e}", path.display())]))
}

fn violation_failure(style: &Style, violations: Vec<String>) -> Failure {
    let mut lines = vec![style.red("invariant violations:")];
    lines.extend(violations.into_iter().map(|v| format!("  {v}")));
    Failure {
        code: EXIT_INVARIANT,
        lines,
    }
}

fn cmd_run(
    cli: &Cli,
    style: &Style,
    out: &mut dyn Write,
    file: &Path,
    dir: &Path,
    scheme: Option<SchemeKind>,
) -> Result<(), Failure> {
    let scenario = load(cli, file)?;
    let opts = RunOptions {
        scheme_override: scheme,
        record_trace: true,
        ..options(cli)
    };
    let outcome = run_scenario(&scenario, &opts).map_err(|e| setup_failure(file, e))?;
    fs::create_dir_all(dir)
        .map_err(|e| Failure::scenario(vec![format!("{}: {e}", dir.display())]))?;
    write_file(dir, "cdrs.csv", &outcome.cdr_csv())?;
    write_file(dir, "ledger.csv", &ledger_csv(&outcome))?;
    write_file(dir, "report.txt", &run_report_text(&outcome))?;
    write_file(dir, "report.csv", &run_report_csv(&outcome))?;
    write_file(dir, "trace.csv", &trace_csv(&outcome))?;
    let _ = writeln!(out, "{}", style.bold(&format!("run {}", file.display())));
    let _ = write!(out, "{}", run_report_text(&outcome));
    let _ = writeln!(out, "wrote {}", dir.display());
    let violations = outcome.invariant_violations();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violation_failure(style, violations))
    }
}

fn cmd_compare(
    cli: &Cli,
    style: &Style,
    out: &mut dyn Write,
    file: &Path,
    format: Format,
) -> Result<(), Failure> {
    let scenario = load(cli, file)?;
    let report = compare_schemes(&scenario, &options(cli)).map_err(|e| setup_failure(file, e))?;
    match format {
        Format::Text => {
            let text = comparison_text(&report);
            let mut lines = text.lines();
            if let Some(header) = lines.next() {
                let _ = writeln!(out, "{}", style.bold(header));
            }
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
        }
        Format::Csv => {
            let _ = write!(out, "{}", comparison_csv(&report));
        }
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(violation_failure(style, report.violations))
    }
}

fn cmd_audit(cli: &Cli, style: &Style, out: &mut dyn Write, file: &Path) -> Result<(), Failure> {
    let scenario = load(cli, file)?;
    let mut opts = options(cli);
    if !scenario.unassigned_scheme_lines().is_empty() {
        opts.scheme_override = Some(SchemeKind::IntelligentNetwork);
    }
    let report = audit_policies(&scenario, &opts).map_err(|e| setup_failure(file, e))?;
    let text = audit_comparison_text(&report);
    let mut lines = text.lines();
    if let Some(header) = lines.next() {
        let _ = writeln!(out, "{}", style.bold(header));
    }
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, out: &mut dyn Write, file: &Path) -> Result<(), Failure> {
    let scenario = load(cli, file)?;
    let _ = writeln!(
        out,
        "{}: ok ({} tariffs, {} accounts, {} scripted calls, {} top-ups, {} transfers, horizon {})",
        file.display(),
        scenario.tariffs.len(),
        scenario.accounts.len(),
        scenario.workload.scripted_calls.len(),
        scenario.topups.len(),
        scenario.transfers.len(),
        scenario.horizon
    );
    Ok(())
}

/// Runs a parsed command line, returning the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let style = Style::detect();
    let result = match &cli.command {
        Command::Run {
            file,
            output,
            scheme,
        } => cmd_run(cli, &style, out, file, output, *scheme),
        Command::Compare { file, format } => cmd_compare(cli, &style, out, file, *format),
        Command::Audit { file } => cmd_audit(cli, &style, out, file),
        Command::Validate { file } => cmd_validate(cli, out, file),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            for l in &f.lines {
                let _ = writeln!(err, "{l}");
            }
            f.code
        }
    }
}
