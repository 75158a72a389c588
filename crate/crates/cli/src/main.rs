//! `fluxtorsion` command-line driver.
//!
//! Exit codes: 0 when every asserted residual is within bounds, 1 for usage or
//! input errors, 2 when a verification fails (the report is still written).

mod config;
mod output;
mod suites;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fluxtorsion::superconnection::{conjecture_batch, BatchKind};
use fluxtorsion::tolerance::bounds;
use fluxtorsion::torsion::{torsion_report, Conventions};

use config::{parse_seed_range, setup, CliResult, Common, Format};
use output::{csv_header, emit, Outcome};
use suites::Suite;

#[derive(Debug, Parser)]
#[command(name = "fluxtorsion", version, about = "Twisted analytic torsion on finite models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a verification suite and write a report.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Track the eigenvalue branches of Q_t and classify their germs.
    Deform {
        #[command(flatten)]
        common: Common,
    },
    /// Superconnection conjecture batch over a seed range.
    Conjecture(ConjectureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Random models with A[0] = 0 (residual asserted).
    Proven,
    /// Random models with every filtration shift (exploratory).
    General,
}

#[derive(Debug, Args)]
struct ConjectureArgs {
    /// Half-open seed range, e.g. 0..100.
    #[arg(long, default_value = "0..100")]
    seeds: String,
    #[arg(long, value_enum, default_value = "general")]
    kind: Kind,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = match &cli.command {
        Command::Verify { common, .. } | Command::Deform { common } => common.threads,
        Command::Conjecture(a) => a.threads,
    };
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Verify { suite, common } => verify(suite, &common),
        Command::Deform { common } => deform(&common),
        Command::Conjecture(a) => conjecture(&a),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn verify(suite: Suite, c: &Common) -> CliResult<Outcome> {
    let s = setup(c)?;
    let outcomes = suites::run(&s, suite)?;
    let report = torsion_report(&s.family, &s.grid, &s.flux_desc, s.flux_seed)
        .map_err(|e| format!("model {} (flux {}): {e}", s.model_name(), s.flux_desc))?;

    let seed_note = s.flux_seed.map_or_else(|| "none".to_string(), |x| x.to_string());
    let mut failure = outcomes.iter().find_map(|o| {
        o.first_violation().map(|v| {
            format!(
                "model {}, flux {} (seed {seed_note}): {} violated {} ({:e} vs bound {:e})",
                s.model_name(),
                s.flux_desc,
                o.suite,
                v.name,
                v.value,
                v.bound
            )
        })
    });
    if failure.is_none() && !report.is_finite() {
        failure = Some(format!(
            "model {}, flux {} (seed {seed_note}): non-finite value in torsion report",
            s.model_name(),
            s.flux_desc
        ));
    }
    let passed = failure.is_none();

    let text = match c.format {
        Format::Json => output::json(&json!({
            "conventions": Conventions::default(),
            "command": "verify",
            "suite": suite,
            "passed": passed,
            "suites": outcomes,
            "report": report,
        }))?,
        Format::Csv => {
            let mut t = csv_header(&report.metadata);
            t.push_str("suite,check,value,bound,passed\n");
            for o in &outcomes {
                if let Some(why) = &o.skipped {
                    t.push_str(&format!("{},skipped: {},,,true\n", o.suite, why.replace(',', ";")));
                }
                for ch in &o.checks {
                    t.push_str(&format!("{},{},{:e},{:e},{}\n", o.suite, ch.name.replace(',', ";"), ch.value, ch.bound, ch.passed));
                }
            }
            t
        }
    };
    emit(c.out.as_deref(), &text)?;
    Ok(failure.map_or(Outcome::Pass, Outcome::Fail))
}

fn deform(c: &Common) -> CliResult<Outcome> {
    let s = setup(c)?;
    let ctx = |e: fluxtorsion::Error| format!("model {} (flux {}): {e}", s.model_name(), s.flux_desc);
    s.grid.check_germ_ready().map_err(ctx)?;
    let branches = s.family.all_branches(&s.grid).map_err(ctx)?;
    let chi0 = s.family.chi0(&s.grid).map_err(ctx)?;
    let summary = fluxtorsion::deformation::summarize(&branches, chi0.chi0);
    let finite = branches
        .iter()
        .flatten()
        .all(|b| b.samples.iter().all(|&(t, v)| t.is_finite() && v.is_finite()) && b.leading.is_none_or(f64::is_finite))
        && summary.log_theta.iter().all(|v| v.is_finite());
    let pts = s.grid.points();
    let metadata = fluxtorsion::torsion::Metadata {
        model: s.model_name().to_string(),
        flux: s.flux_desc.clone(),
        seed: s.flux_seed,
        tolerances: s.tol,
        t_grid: (pts[0], pts[pts.len() - 1], pts.len()),
    };
    let text = match c.format {
        Format::Json => output::json(&json!({
            "conventions": Conventions::default(),
            "command": "deform",
            "metadata": metadata,
            "summary": summary,
            "chi0": chi0,
            "branches": branches,
        }))?,
        Format::Csv => {
            let mut t = csv_header(&metadata);
            t.push_str("branch,parity,type,nu,leading");
            for p in pts {
                t.push_str(&format!(",t={p:e}"));
            }
            t.push('\n');
            for (id, b) in branches.iter().flatten().enumerate() {
                t.push_str(&format!(
                    "{id},{},{},{},{}",
                    b.parity,
                    b.kind.type_number(),
                    b.nu.map_or(String::new(), |n| n.to_string()),
                    b.leading.map_or(String::new(), |l| format!("{l:e}"))
                ));
                for &(_, v) in &b.samples {
                    t.push_str(&format!(",{v:e}"));
                }
                t.push('\n');
            }
            t
        }
    };
    emit(c.out.as_deref(), &text)?;
    Ok(if finite {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("model {}, flux {}: non-finite value in branch table", s.model_name(), s.flux_desc))
    })
}

fn conjecture(a: &ConjectureArgs) -> CliResult<Outcome> {
    let seeds = parse_seed_range(&a.seeds)?;
    let kind = match a.kind {
        Kind::Proven => BatchKind::Proven,
        Kind::General => BatchKind::General,
    };
    let batch = conjecture_batch(kind, seeds.clone()).map_err(|e| format!("conjecture batch {}: {e}", a.seeds))?;
    let finite = batch
        .records
        .iter()
        .all(|r| r.residual.is_finite() && r.fibre_term.is_finite() && r.fibre_corrected.is_finite());
    let text = match a.format {
        Format::Json => output::json(&json!({
            "conventions": Conventions::default(),
            "command": "conjecture",
            "kind": kind,
            "seeds": [seeds.start, seeds.end],
            "asserted": kind == BatchKind::Proven,
            "summary": batch.summary,
            "records": batch.records,
        }))?,
        Format::Csv => {
            let mut t = output::conventions_header();
            t.push_str(&format!("# kind: {kind:?}\n# seeds: {}..{}\n", seeds.start, seeds.end));
            t.push_str("seed,dim_even,dim_odd,residual,fibre_term,fibre_corrected,pages\n");
            for r in &batch.records {
                let pages: Vec<String> = r.pages.iter().map(|p| format!("{}/{}", p[0], p[1])).collect();
                t.push_str(&format!(
                    "{},{},{},{:e},{:e},{:e},{}\n",
                    r.seed,
                    r.dims[0],
                    r.dims[1],
                    r.residual,
                    r.fibre_term,
                    r.fibre_corrected,
                    pages.join(";")
                ));
            }
            t
        }
    };
    emit(a.out.as_deref(), &text)?;
    if !finite {
        return Ok(Outcome::Fail(format!("conjecture batch {}: non-finite residual", a.seeds)));
    }
    if kind == BatchKind::Proven {
        if let Some(r) = batch.records.iter().find(|r| r.residual.is_nan() || r.residual >= bounds::CONJECTURE) {
            return Ok(Outcome::Fail(format!(
                "superconnection seed {}: conjecture residual {:e} exceeds {:e} with A[0] = 0",
                r.seed,
                r.residual,
                bounds::CONJECTURE
            )));
        }
    }
    Ok(Outcome::Pass)
}
