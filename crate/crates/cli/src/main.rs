//! Command-line front end: load a spacetime (builtin name or config file),
//! run one of the analyses, and emit a machine-readable JSON report.
//!
//! Exit codes: 0 the causal property holds, 2 it fails, 3 only marginal
//! verdicts inside the decision band, 1 usage or configuration errors.

mod report;
mod tensor_spec;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use causalsym::causal::{self, Decision, Method};
use causalsym::config;
use causalsym::exprs::Bindings;
use causalsym::flows;
use causalsym::generators::{self, check_case_equations};
use causalsym::geometry::PointValue;
use causalsym::relations::{is_causal_relation, is_conformal, RelationDecision};
use causalsym::spacetimes::{self, Fixture};

use report::{digest_str, Report};

#[derive(Parser)]
#[command(name = "causalsym", version, about = "Causal-structure verification on Lorentzian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Builtin name (minkowski2..5, vaidya, conformal_slice) or a config file
    #[arg(long)]
    spacetime: String,
    /// Number of sample points
    #[arg(long, default_value_t = 10)]
    points: usize,
    /// Decision method
    #[arg(long, default_value = "optimize", value_parser = parse_method)]
    method: Method,
    /// Seed for the sample grid
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<String>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "optimize" => Ok(Method::Optimize),
        "grid" => Ok(Method::Grid),
        other => Err(format!("unknown method `{other}` (use optimize or grid)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide cone membership of a tensor field and report its directions
    CheckTensor {
        #[command(flatten)]
        common: Common,
        /// Tensor spec: `g`, `-g`, or products like `dt⊗dt` (also `dt*dt`)
        #[arg(long)]
        tensor: String,
    },
    /// Decide whether a map is a causal relation and/or conformal
    CheckRelation {
        #[command(flatten)]
        common: Common,
        /// Map config file (target_coordinates, parameters)
        #[arg(long)]
        map: String,
    },
    /// Analyze a one-parameter family: submonoid, directions, form scaling
    AnalyzeFlow {
        #[command(flatten)]
        common: Common,
        /// Flow config file; defaults to the builtin fixture's flow
        #[arg(long)]
        flow: Option<String>,
        /// Comma-separated flow parameter values
        #[arg(long, default_value = "0.1,0.5,1,2")]
        s_grid: String,
    },
    /// Check the infinitesimal-generator conditions and gauge equations
    CheckGenerator {
        #[command(flatten)]
        common: Common,
        /// Generator config file; defaults to the builtin fixture's generator
        #[arg(long)]
        generator: Option<String>,
    },
}

struct Loaded {
    fixture: Fixture,
    digests: Vec<report::InputDigest>,
}

fn load_spacetime(spec: &str) -> Result<Loaded, String> {
    if let Ok(fixture) = spacetimes::builtin(spec, &Bindings::new()) {
        let text = config::spacetime_to_toml(&fixture.model);
        return Ok(Loaded {
            fixture,
            digests: vec![digest_str(&format!("spacetime:{spec}"), &text)],
        });
    }
    let text = fs::read_to_string(spec).map_err(|e| format!("cannot read `{spec}`: {e}"))?;
    let model = config::spacetime_from_toml(&text).map_err(|e| format!("{spec}: {e}"))?;
    let dim = model.dim;
    Ok(Loaded {
        fixture: Fixture {
            model,
            flow: None,
            generator: None,
            sample_box: vec![(-1.0, 1.0); dim],
        },
        digests: vec![digest_str(&format!("spacetime:{spec}"), &text)],
    })
}

fn emit(report: &mut Report, out: &Option<String>) -> Result<(), String> {
    report.finalize();
    let text = report.render();
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("cannot write `{path}`: {e}")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn decision_exit(decisions: &[Decision]) -> ExitCode {
    if decisions.iter().any(|d| *d == Decision::NotCausal) {
        ExitCode::from(2)
    } else if decisions.iter().all(|d| *d == Decision::Causal) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn run() -> Result<ExitCode, String> {
    match Cli::parse().command {
        Command::CheckTensor { common, tensor } => {
            let loaded = load_spacetime(&common.spacetime)?;
            let field = tensor_spec::parse(&tensor, &loaded.fixture.model)?;
            let pts = spacetimes::sample_points(&loaded.fixture, common.points, common.seed);
            let mut rep = Report::new("check-tensor", common.seed);
            rep.input_digests = loaded.digests;
            rep.input_digests.push(digest_str("tensor", &tensor));
            let start = Instant::now();
            let mut per_point = Vec::new();
            let mut decisions = Vec::new();
            for p in &pts {
                let value = field
                    .eval(&loaded.fixture.model.bindings(p))
                    .map_err(|e| e.to_string())?;
                let verdict =
                    causal::is_causal_tensor(&loaded.fixture.model, p, &value, common.method)
                        .map_err(|e| e.to_string())?;
                let mu = if verdict.passes() {
                    Some(
                        causal::canonical_null_directions(&loaded.fixture.model, p, &value)
                            .map_err(|e| e.to_string())?,
                    )
                } else {
                    None
                };
                decisions.push(verdict.decision);
                per_point.push(json!({
                    "point": p.coords,
                    "verdict": verdict,
                    "directions": mu,
                }));
            }
            rep.timings_ms.insert(
                "check_tensor".into(),
                json!(start.elapsed().as_secs_f64() * 1e3),
            );
            rep.results = json!({ "per_point": per_point });
            emit(&mut rep, &common.out)?;
            Ok(decision_exit(&decisions))
        }
        Command::CheckRelation { common, map } => {
            let loaded = load_spacetime(&common.spacetime)?;
            let text =
                fs::read_to_string(&map).map_err(|e| format!("cannot read `{map}`: {e}"))?;
            let phi = config::map_from_toml(&text, &loaded.fixture.model)
                .map_err(|e| format!("{map}: {e}"))?;
            let pts = spacetimes::sample_points(&loaded.fixture, common.points, common.seed);
            let mut rep = Report::new("check-relation", common.seed);
            rep.input_digests = loaded.digests;
            rep.input_digests.push(digest_str(&format!("map:{map}"), &text));
            let start = Instant::now();
            let m = &loaded.fixture.model;
            let relation =
                is_causal_relation(&phi, m, m, &pts, common.method).map_err(|e| e.to_string())?;
            let conformal =
                is_conformal(&phi, m, m, &pts, common.method).map_err(|e| e.to_string())?;
            rep.timings_ms.insert(
                "check_relation".into(),
                json!(start.elapsed().as_secs_f64() * 1e3),
            );
            rep.anomalies = relation
                .anomalies
                .iter()
                .chain(&conformal.anomalies)
                .cloned()
                .collect();
            let code = match (conformal.decision, relation.decision) {
                (RelationDecision::Conformal, _) => ExitCode::SUCCESS,
                (_, RelationDecision::CausalRelation) => ExitCode::SUCCESS,
                (_, RelationDecision::NotCausalRelation) => ExitCode::from(2),
                _ => ExitCode::from(3),
            };
            rep.results = json!({ "relation": relation, "conformal": conformal });
            emit(&mut rep, &common.out)?;
            Ok(code)
        }
        Command::AnalyzeFlow {
            common,
            flow,
            s_grid,
        } => {
            let mut loaded = load_spacetime(&common.spacetime)?;
            if let Some(path) = &flow {
                let text =
                    fs::read_to_string(path).map_err(|e| format!("cannot read `{path}`: {e}"))?;
                loaded.fixture.flow = Some(
                    config::flow_from_toml(&text, &loaded.fixture.model)
                        .map_err(|e| format!("{path}: {e}"))?,
                );
                loaded.digests.push(digest_str(&format!("flow:{path}"), &text));
            }
            let family = loaded
                .fixture
                .flow
                .clone()
                .ok_or("no flow: pass --flow or use a builtin with one")?;
            let grid: Vec<f64> = s_grid
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| format!("bad s-grid: {e}")))
                .collect::<Result<_, _>>()?;
            let pts = spacetimes::sample_points(&loaded.fixture, common.points, common.seed);
            let mut rep = Report::new("analyze-flow", common.seed);
            rep.input_digests = loaded.digests;
            rep.input_digests.push(digest_str("s_grid", &s_grid));
            let start = Instant::now();
            let m = &loaded.fixture.model;
            let sub = flows::check_submonoid(&family, m, &grid, &pts, common.method)
                .map_err(|e| e.to_string())?;
            let dirs = flows::flow_null_directions(&family, m, &grid, &pts[..pts.len().min(3)])
                .map_err(|e| e.to_string())?;
            // form scaling only applies off the full cone with members present
            let scaling = if dirs.per_s.iter().all(|(_, s)| !s.full_cone && !s.members.is_empty())
            {
                Some(
                    flows::check_form_scaling(&family, m, &grid, &pts[..pts.len().min(2)])
                        .map_err(|e| e.to_string())?,
                )
            } else {
                None
            };
            rep.timings_ms.insert(
                "analyze_flow".into(),
                json!(start.elapsed().as_secs_f64() * 1e3),
            );
            rep.anomalies = sub.anomalies.clone();
            if let Some(fs) = &scaling {
                rep.anomalies.extend(fs.anomalies.iter().cloned());
            }
            let ok = sub.all_causal();
            rep.results = json!({
                "submonoid": sub,
                "directions": dirs,
                "form_scaling": scaling,
            });
            emit(&mut rep, &common.out)?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::CheckGenerator { common, generator } => {
            let mut loaded = load_spacetime(&common.spacetime)?;
            if let Some(path) = &generator {
                let text =
                    fs::read_to_string(path).map_err(|e| format!("cannot read `{path}`: {e}"))?;
                loaded.fixture.generator = Some(
                    config::generator_from_toml(&text).map_err(|e| format!("{path}: {e}"))?,
                );
                loaded
                    .digests
                    .push(digest_str(&format!("generator:{path}"), &text));
            }
            let xi = loaded
                .fixture
                .generator
                .clone()
                .ok_or("no generator: pass --generator or use a builtin with one")?;
            let n_pts = common.points.min(5).max(1);
            let pts: Vec<PointValue> =
                spacetimes::sample_points(&loaded.fixture, n_pts, common.seed);
            let mut rep = Report::new("check-generator", common.seed);
            rep.input_digests = loaded.digests;
            let start = Instant::now();
            let m = &loaded.fixture.model;
            let mut per_point = Vec::new();
            let mut all_ok = true;
            for p in &pts {
                match check_case_equations(m, &xi, p, common.method) {
                    Ok(case) => {
                        all_ok &= case.satisfied;
                        per_point.push(json!({ "point": p.coords, "case": case }));
                    }
                    Err(generators::GeneratorError::EmptyInterval) => {
                        all_ok = false;
                        per_point.push(json!({
                            "point": p.coords,
                            "case": serde_json::Value::Null,
                            "error": "admissible interval empty",
                        }));
                    }
                    Err(e) => return Err(e.to_string()),
                }
            }
            rep.timings_ms.insert(
                "check_generator".into(),
                json!(start.elapsed().as_secs_f64() * 1e3),
            );
            rep.results = json!({ "per_point": per_point });
            emit(&mut rep, &common.out)?;
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
