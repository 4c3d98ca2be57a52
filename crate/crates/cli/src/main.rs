//! `hassett`: exact ψ-class integrals and cycles on Hassett spaces.
//!
//! Exit codes: 0 on success, 1 on a domain error or failed check, 2 on a
//! usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hassett_core::rational::parse_rational_list;
use hassett_core::witten::WittenEngine;
use hassett_core::BigRational;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "hassett",
    version,
    about = "Exact psi-class intersection numbers on Hassett moduli spaces"
)]
pub struct Cli {
    /// Correlator cache file, loaded before and written after the command.
    #[arg(long, global = true, env = "HASSETT_CACHE")]
    cache: Option<PathBuf>,

    /// Emit one JSON object instead of plain text.
    #[arg(long, global = true)]
    json: bool,

    /// Warn on stderr when the requested space is unstable (its value is 0).
    #[arg(long, global = true)]
    warn_unstable: bool,

    /// Maximal total degree kept in series.
    #[arg(long = "trunc", global = true, default_value_t = 4)]
    truncation: u32,

    /// Maximal genus kept in series.
    #[arg(long, global = true, default_value_t = 1)]
    max_genus: u32,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Intersection number of weighted psi-classes on a Hassett space.
    Number {
        #[command(flatten)]
        space: Space,
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
    },
    /// Witten-Kontsevich correlator <tau_k1 ... tau_kn>_g.
    Witten {
        #[arg(short, long)]
        genus: u32,
        #[arg(short = 'k', long, value_parser = exponent_list)]
        exponents: Exponents,
    },
    /// Pull-back of a weighted psi monomial as a sum of pinwheel strata.
    Pullback {
        #[command(flatten)]
        space: Space,
        /// `closed` uses the closed formula, `cycle` the iterated product.
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
        /// Print the serialized form instead of the pretty one.
        #[arg(long)]
        serialized: bool,
    },
    /// Totally unstable partitions of the weight data.
    Partitions {
        #[arg(short, long, value_parser = weight_list)]
        weights: Weights,
        /// Restrict to the reduction between the given weights and these.
        #[arg(long, value_parser = weight_list)]
        relative_to: Option<Weights>,
    },
    /// Light subsets (weight sum at most 1, size at least 2).
    Chamber {
        #[arg(short, long, value_parser = weight_list)]
        weights: Weights,
    },
    /// Truncated potential in the `g | monomial | p/q` text form.
    Potential {
        #[arg(value_enum)]
        kind: PotentialKind,
        /// Weight set for `hassett`.
        #[arg(short, long, value_parser = weight_list)]
        weights: Option<Weights>,
        /// Denominator for `diag`.
        #[arg(short, long)]
        q: Option<u32>,
    },
    /// Diagonal change of variables x_k = g_k(t) for weight 1/q.
    Cov {
        #[arg(short, long)]
        q: u32,
        #[arg(long, default_value_t = 3)]
        max_index: u32,
    },
    /// Coefficient-by-coefficient check of an operator identity.
    Verify {
        #[arg(value_enum)]
        identity: IdentityKind,
        #[arg(short, long)]
        q: Option<u32>,
        #[arg(short, long, value_parser = weight_list)]
        weights: Option<Weights>,
    },
}

#[derive(Args, Debug)]
pub struct Space {
    #[arg(short, long)]
    genus: u32,
    #[arg(short, long, value_parser = weight_list)]
    weights: Weights,
    #[arg(short = 'k', long, value_parser = exponent_list)]
    exponents: Exponents,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Closed,
    Cycle,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PotentialKind {
    Witten,
    Hassett,
    Diag,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
pub enum IdentityKind {
    WittenToHassett,
    WittenToDiag,
    ExpFlow,
}

// Newtypes so clap does not treat the lists as repeated arguments.
#[derive(Clone, Debug)]
pub struct Weights(Vec<BigRational>);

#[derive(Clone, Debug)]
pub struct Exponents(Vec<u32>);

fn weight_list(s: &str) -> Result<Weights, String> {
    let w = parse_rational_list(s).map_err(|e| e.to_string())?;
    if w.is_empty() {
        return Err("empty weight list".into());
    }
    Ok(Weights(w))
}

fn exponent_list(s: &str) -> Result<Exponents, String> {
    if s.trim().is_empty() {
        return Ok(Exponents(Vec::new()));
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("invalid exponent '{}'", t.trim()))
        })
        .collect::<Result<_, _>>()
        .map(Exponents)
}

/// A failure after argument parsing: a library error or a failed check.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    message: String,
    /// Partial output still worth printing, e.g. a report with mismatches.
    output: Option<commands::Output>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: "usage",
            message: message.into(),
            output: None,
        }
    }

    fn check(message: impl Into<String>, output: Option<commands::Output>) -> Self {
        Failure {
            kind: "check",
            message: message.into(),
            output,
        }
    }
}

impl From<hassett_core::Error> for Failure {
    fn from(e: hassett_core::Error) -> Self {
        Failure {
            kind: "domain",
            message: e.to_string(),
            output: None,
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let engine = WittenEngine::global();

    if let Some(path) = &cli.cache {
        if path.exists() {
            if let Err(e) = engine.load(path) {
                return report_failure(&cli, &argv, Failure::from(e));
            }
        }
    }

    let start = Instant::now();
    let outcome = commands::run(&cli);
    let elapsed = start.elapsed();

    if let Some(path) = &cli.cache {
        if let Err(e) = engine.save(path) {
            return report_failure(&cli, &argv, Failure::from(e));
        }
    }

    match outcome {
        Ok(output) => {
            emit(&cli, &argv, &output, elapsed.as_secs_f64() * 1e3);
            ExitCode::SUCCESS
        }
        Err(failure) => report_failure(&cli, &argv, failure),
    }
}

fn emit(cli: &Cli, argv: &[String], output: &commands::Output, elapsed_ms: f64) {
    if cli.json {
        let stats = WittenEngine::global().stats();
        let mut obj = json!({
            "command": argv,
            "elapsed_ms": elapsed_ms,
            "cache": {"entries": stats.entries, "hits": stats.hits, "misses": stats.misses},
        });
        if let serde_json::Value::Object(fields) = &output.json {
            obj.as_object_mut().unwrap().extend(fields.clone());
        }
        println!("{}", serde_json::to_string_pretty(&obj).expect("JSON values serialize"));
    } else {
        println!("{}", output.text);
    }
}

fn report_failure(cli: &Cli, argv: &[String], failure: Failure) -> ExitCode {
    if let Some(output) = &failure.output {
        emit(cli, argv, output, 0.0);
    }
    if cli.json {
        let diag = json!({"error": {"kind": failure.kind, "message": failure.message}, "command": argv});
        eprintln!("{}", serde_json::to_string(&diag).expect("JSON values serialize"));
    } else {
        eprintln!("error: {}", failure.message);
    }
    if failure.kind == "usage" {
        ExitCode::from(2)
    } else {
        ExitCode::FAILURE
    }
}
