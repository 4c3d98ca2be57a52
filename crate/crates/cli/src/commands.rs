use hassett_core::cycles::{expressions_equal, integrate, pullback_psi_monomial, PinwheelExpression, PullbackOracle};
use hassett_core::numbers::{dimension, hassett_number, relative_hassett_correlator};
use hassett_core::partitions::{
    chamber_signature, enumerate_totally_unstable, relative_unstable_partitions, WeightData,
};
use hassett_core::potentials::{
    diag_change_of_variables, hassett_potential, q_diagonal_potential, verify_identity, witten_potential, Identity,
    IdentityReport,
};
use hassett_core::rational::format_rational;
use hassett_core::witten::witten_correlator;
use hassett_core::BigRational;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::{Cli, Command, Failure, IdentityKind, Method, PotentialKind, Space};

/// Plain-text rendering plus the command-specific JSON fields.
#[derive(Debug)]
pub struct Output {
    pub text: String,
    pub json: Value,
}

type Outcome = Result<Output, Failure>;

fn strings(rs: &[BigRational]) -> Vec<String> {
    rs.iter().map(format_rational).collect()
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Closed => "closed",
        Method::Cycle => "cycle",
        Method::Both => "both",
    }
}

fn positive_q(q: Option<u32>, what: &str) -> Result<u32, Failure> {
    match q {
        Some(0) => Err(Failure::usage("-q must be at least 1")),
        Some(q) => Ok(q),
        None => Err(Failure::usage(format!("{what} needs -q"))),
    }
}

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Number { space, method } => number(cli, space, *method),
        Command::Witten { genus, exponents } => {
            let value = witten_correlator(*genus, &exponents.0);
            Ok(Output {
                text: format_rational(&value),
                json: json!({"genus": genus, "exponents": exponents.0, "value": format_rational(&value)}),
            })
        }
        Command::Pullback {
            space,
            method,
            serialized,
        } => pullback(cli, space, *method, *serialized),
        Command::Partitions { weights, relative_to } => {
            let a = WeightData::new(weights.0.clone())?;
            let list = match relative_to {
                Some(b) => relative_unstable_partitions(&a, &WeightData::new(b.0.clone())?)?,
                None => enumerate_totally_unstable(&a),
            };
            let rendered: Vec<String> = list.iter().map(ToString::to_string).collect();
            Ok(Output {
                text: rendered.join("\n"),
                json: json!({
                    "weights": strings(a.weights()),
                    "relative_to": relative_to.as_ref().map(|b| strings(&b.0)),
                    "count": rendered.len(),
                    "partitions": rendered,
                }),
            })
        }
        Command::Chamber { weights } => {
            let a = WeightData::new(weights.0.clone())?;
            let sig = chamber_signature(&a);
            let subsets: Vec<Vec<usize>> = sig.light_subsets().map(|s| s.iter().map(|i| i + 1).collect()).collect();
            Ok(Output {
                text: sig.to_string(),
                json: json!({"weights": strings(a.weights()), "light_subsets": subsets}),
            })
        }
        Command::Potential { kind, weights, q } => {
            let (g, n) = (cli.max_genus, cli.truncation);
            let series = match kind {
                PotentialKind::Witten => witten_potential(g, n),
                PotentialKind::Hassett => {
                    let w = weights
                        .as_ref()
                        .ok_or_else(|| Failure::usage("hassett potential needs -w"))?;
                    hassett_potential(&w.0, g, n)?
                }
                PotentialKind::Diag => q_diagonal_potential(positive_q(*q, "diag potential")?, g, n),
            };
            let terms: Vec<Value> = series
                .terms()
                .map(|(g, m, c)| json!({"genus": g, "monomial": m.to_string(), "coefficient": format_rational(c)}))
                .collect();
            Ok(Output {
                text: series.to_lines().trim_end().to_string(),
                json: json!({"max_genus": g, "truncation": n, "terms": terms}),
            })
        }
        Command::Cov { q, max_index } => {
            let q = positive_q(Some(*q), "cov")?;
            let map = diag_change_of_variables(q, *max_index, cli.truncation);
            let mut lines = Vec::new();
            let mut assignments = serde_json::Map::new();
            for (k, p) in &map.assignments {
                lines.push(format!("x_{k} = {p}"));
                assignments.insert(k.to_string(), Value::String(p.to_string()));
            }
            Ok(Output {
                text: lines.join("\n"),
                json: json!({"q": q, "truncation": cli.truncation, "assignments": assignments}),
            })
        }
        Command::Verify { identity, q, weights } => {
            let identity = match identity {
                IdentityKind::WittenToHassett => Identity::WittenToHassett {
                    weights: weights
                        .as_ref()
                        .ok_or_else(|| Failure::usage("witten_to_hassett needs -w"))?
                        .0
                        .clone(),
                },
                IdentityKind::WittenToDiag => Identity::WittenToDiag {
                    q: positive_q(*q, "witten_to_diag")?,
                },
                IdentityKind::ExpFlow => Identity::ExpFlow {
                    q: positive_q(*q, "exp_flow")?,
                },
            };
            let report = verify_identity(&identity, cli.max_genus, cli.truncation)?;
            let output = report_output(&report);
            if report.holds() {
                Ok(output)
            } else {
                Err(Failure::check(
                    format!("{} mismatches", report.mismatches.len()),
                    Some(output),
                ))
            }
        }
    }
}

fn report_output(report: &IdentityReport) -> Output {
    let mismatches: Vec<Value> = report
        .mismatches
        .iter()
        .map(|m| {
            json!({
                "genus": m.genus,
                "monomial": m.monomial.to_string(),
                "left": format_rational(&m.left),
                "right": format_rational(&m.right),
            })
        })
        .collect();
    Output {
        text: report.to_string(),
        json: json!({
            "identity": report.identity.to_string(),
            "max_genus": report.max_genus,
            "truncation": report.truncation,
            "compared": report.compared,
            "holds": report.holds(),
            "mismatches": mismatches,
        }),
    }
}

fn checked_space(cli: &Cli, space: &Space) -> Result<WeightData, Failure> {
    let a = WeightData::new(space.weights.0.clone())?;
    // Validates the lengths before any route runs.
    hassett_number(space.genus, &a, &space.exponents.0)?;
    if cli.warn_unstable && !a.is_stable(space.genus) {
        eprintln!(
            "warning: genus {} with weights ({a}) is unstable; the value is 0",
            space.genus
        );
    }
    Ok(a)
}

fn space_json(space: &Space, a: &WeightData, method: Method) -> serde_json::Map<String, Value> {
    let Value::Object(map) = json!({
        "genus": space.genus,
        "weights": strings(a.weights()),
        "exponents": space.exponents.0,
        "method": method_name(method),
    }) else {
        unreachable!()
    };
    map
}

/// Integral of the pulled-back class; 0 where the closed route gates to 0.
fn cycle_number(g: u32, a: &WeightData, k: &[u32], inductive: bool) -> Result<BigRational, Failure> {
    let degree: i64 = k.iter().map(|&x| x as i64).sum();
    if !a.is_stable(g) || degree != dimension(g, k.len()) {
        return Ok(BigRational::zero());
    }
    let expr = if inductive {
        PullbackOracle::new().pullback(g, a, k)?
    } else {
        pullback_psi_monomial(g, a, k)?
    };
    Ok(integrate(&expr)?)
}

fn number(cli: &Cli, space: &Space, method: Method) -> Outcome {
    let a = checked_space(cli, space)?;
    let (g, k) = (space.genus, &space.exponents.0);
    let value = match method {
        Method::Closed => hassett_number(g, &a, k)?,
        Method::Cycle => cycle_number(g, &a, k, false)?,
        Method::Both => {
            let closed = hassett_number(g, &a, k)?;
            let cycle = cycle_number(g, &a, k, false)?;
            let inductive = cycle_number(g, &a, k, true)?;
            // Reduction from unit weights: an independent path through the relative sum.
            let relative = relative_hassett_correlator(g, &WeightData::ones(a.len()), &a, k)?;
            if closed != cycle || closed != inductive || closed != relative {
                return Err(Failure::check(
                    format!(
                        "routes disagree: closed {}, cycle {}, inductive {}, relative {}",
                        format_rational(&closed),
                        format_rational(&cycle),
                        format_rational(&inductive),
                        format_rational(&relative)
                    ),
                    None,
                ));
            }
            closed
        }
    };
    let mut json = space_json(space, &a, method);
    json.insert("value".into(), Value::String(format_rational(&value)));
    Ok(Output {
        text: format_rational(&value),
        json: Value::Object(json),
    })
}

fn pullback(cli: &Cli, space: &Space, method: Method, serialized: bool) -> Outcome {
    let a = checked_space(cli, space)?;
    let (g, k) = (space.genus, &space.exponents.0);
    let expr: PinwheelExpression = match method {
        Method::Closed => pullback_psi_monomial(g, &a, k)?,
        Method::Cycle => PullbackOracle::new().pullback(g, &a, k)?,
        Method::Both => {
            let closed = pullback_psi_monomial(g, &a, k)?;
            let inductive = PullbackOracle::new().pullback(g, &a, k)?;
            if !expressions_equal(&closed, &inductive)? {
                return Err(Failure::check(
                    format!("routes disagree:\n  closed:    {closed}\n  inductive: {inductive}"),
                    None,
                ));
            }
            closed
        }
    };
    let ser = expr.to_serialized();
    let text = if serialized {
        serde_json::to_string_pretty(&ser).expect("JSON values serialize")
    } else {
        expr.to_string()
    };
    let mut json = space_json(space, &a, method);
    json.insert("expression".into(), Value::String(expr.to_string()));
    json.insert(
        "serialized".into(),
        serde_json::to_value(&ser).expect("JSON values serialize"),
    );
    Ok(Output {
        text,
        json: Value::Object(json),
    })
}
